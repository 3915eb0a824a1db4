//! Deterministic 1 kHz world: a ball hanging on a unilateral string, a
//! PD-driven 6-DOF arm with a hinged chopstick pair, horizontal disturbance
//! pulses, and a noisy delayed observation channel. Domain randomization and
//! the hidden-parameter "real twin" live in [`params`].

mod disturbance;
mod observe;
mod params;
mod world;

pub use disturbance::{disturbance_force, DisturbanceSchedule};
pub use observe::{ground_truth, observe, ObsRing, Observation, ObservationModel};
pub use params::{
    make_real_twin, randomize, ParamError, PdGains, PhysicsParams, RandomizeRanges, RealTwin,
    TwinMode,
};
pub use world::{grasp_update, step, string_constraint, SimFault, WorldState};
