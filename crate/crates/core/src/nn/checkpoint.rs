//! Byte-stable network checkpoints.
//!
//! Layout: magic `TNNC`, format version, layer sizes, activation tag,
//! LayerNorm flags, then the flat parameter vector as little-endian f64.
//! Identical networks serialize to identical bytes.

use std::io::{Read, Write};

use thiserror::Error;

use super::mlp::{Activation, Arch, Mlp};

const MAGIC: &[u8; 4] = b"TNNC";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic bytes (not a network checkpoint)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    BadVersion(u32),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(&'static str),
}

pub fn write_mlp<W: Write>(w: &mut W, mlp: &Mlp) -> Result<(), CheckpointError> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(mlp.arch.sizes.len() as u32).to_le_bytes())?;
    for &s in &mlp.arch.sizes {
        w.write_all(&(s as u32).to_le_bytes())?;
    }
    let act: u8 = match mlp.arch.activation {
        Activation::Tanh => 0,
        Activation::Relu => 1,
    };
    w.write_all(&[act])?;
    w.write_all(&(mlp.arch.ln.len() as u32).to_le_bytes())?;
    for &f in &mlp.arch.ln {
        w.write_all(&[f as u8])?;
    }
    w.write_all(&(mlp.theta.len() as u64).to_le_bytes())?;
    for &p in &mlp.theta {
        w.write_all(&p.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_mlp<R: Read>(r: &mut R) -> Result<Mlp, CheckpointError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = read_u32(r)?;
    if version != VERSION {
        return Err(CheckpointError::BadVersion(version));
    }
    let n_sizes = read_u32(r)? as usize;
    if !(2..=64).contains(&n_sizes) {
        return Err(CheckpointError::Corrupt("implausible layer count"));
    }
    let mut sizes = Vec::with_capacity(n_sizes);
    for _ in 0..n_sizes {
        sizes.push(read_u32(r)? as usize);
    }
    let mut act = [0u8; 1];
    r.read_exact(&mut act)?;
    let activation = match act[0] {
        0 => Activation::Tanh,
        1 => Activation::Relu,
        _ => return Err(CheckpointError::Corrupt("unknown activation tag")),
    };
    let n_ln = read_u32(r)? as usize;
    if n_ln != n_sizes - 2 {
        return Err(CheckpointError::Corrupt("layernorm flag count mismatch"));
    }
    let mut ln = Vec::with_capacity(n_ln);
    for _ in 0..n_ln {
        let mut f = [0u8; 1];
        r.read_exact(&mut f)?;
        ln.push(f[0] != 0);
    }
    let arch = Arch { sizes, activation, ln };
    let mut len8 = [0u8; 8];
    r.read_exact(&mut len8)?;
    let param_len = u64::from_le_bytes(len8) as usize;
    if param_len != arch.param_len() {
        return Err(CheckpointError::Corrupt("parameter length mismatch"));
    }
    let mut theta = Vec::with_capacity(param_len);
    let mut buf = [0u8; 8];
    for _ in 0..param_len {
        r.read_exact(&mut buf)?;
        theta.push(f64::from_le_bytes(buf));
    }
    Ok(Mlp { arch, theta })
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, CheckpointError> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn round_trip_is_exact_and_byte_stable() {
        let mut rng = stream(17, "ckpt");
        let mlp = Mlp::init(Arch::new(vec![11, 32, 32, 16], Activation::Tanh, true), &mut rng);
        let mut bytes_a = Vec::new();
        write_mlp(&mut bytes_a, &mlp).unwrap();
        let back = read_mlp(&mut bytes_a.as_slice()).unwrap();
        assert_eq!(back, mlp);
        let mut bytes_b = Vec::new();
        write_mlp(&mut bytes_b, &back).unwrap();
        assert_eq!(bytes_a, bytes_b);
    }

    #[test]
    fn rejects_garbage() {
        assert!(matches!(
            read_mlp(&mut &b"NOPE............"[..]),
            Err(CheckpointError::BadMagic)
        ));
    }
}
