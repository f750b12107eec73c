//! Space-time covariance models on linear networks and stream trees:
//! distances, model evaluation, validity checks, likelihood fitting,
//! kriging, simulation and cross-validation.

pub use nalgebra;

pub mod functions;
pub mod inference;
pub mod model_spec;
pub mod models;
pub mod network;
pub mod quadrature;
pub mod surface;
pub mod validate;

pub use functions::{Kernel, ScalarFamily};
pub use model_spec::{parse_family, parse_model_spec, ModelSpec, SpecError};
pub use models::{full_covariance, CovModel, ModelError, ModelKind, SpaceTimeCovariance, SpaceTimeSeparation};
pub use network::{FlowRelation, Network, NetworkError, PointOnNetwork, SiteGeometry};
