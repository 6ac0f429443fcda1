//! Resonant normal forms for dNLS lattices: Hamiltonian construction,
//! order-r normalization around fully resonant tori, critical-point
//! continuation on the phase-shift torus, periodic-orbit refinement via the
//! period map, and Floquet stability with ε-scaling fits.

pub mod continuation;
pub mod dynamics;
pub mod error;
pub mod model;
pub mod normal_form;
pub mod presets;
pub mod realpoly;
pub mod series;
pub mod stability;

pub use continuation::{CandidateConfig, CandidateKind, ClassificationTable, SlowPotential};
pub use dynamics::{FlowConfig, OrbitCertificate, PeriodMap, UpsilonVariant};
pub use error::CoreError;
pub use model::{LocalMap, ModelKind, ModelSpec, ResonantChart};
pub use normal_form::{LocalState, NormalFormResult};
pub use realpoly::{HamiltonianField, RealPoly};
pub use series::{C64, Dims, EvalPoint, FtSeries, Monomial, Truncation, Var};
pub use stability::{CrossValidation, ExponentFit, FloquetData, LBlocks, Linearization, Verdict};
