//! Rate regions for covert communication over a three-user discrete
//! memoryless multiple-access channel with two covert users, one non-covert
//! user and an external warden.
//!
//! * [`channel`]: the channel pair `(Γ_Y, Γ_Z)` and its file format.
//! * [`infotheory`]: divergences, χ² distance, mutual information, capacity.
//! * [`region`]: square-root rate tuples of a phase plan, finite-blocklength
//!   code sizing, and constrained search over plans.
//! * [`simulator`]: random codebooks, encoder, successive decoder, and the
//!   exact warden divergence at desk scale.

pub mod channel;
pub mod error;
pub mod infotheory;
pub mod optim;
pub mod region;
pub mod rng;
pub mod simulator;

pub use channel::{load_channel, save_channel, Dmc, Side};
pub use error::{Error, Result};
pub use infotheory::{DivergenceProfile, LogUnit};
pub use region::{PhasePlan, RateTuple};
