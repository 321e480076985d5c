//! Forward models implementing [`ForwardModel`](crate::solver::ForwardModel).

pub mod lti;
pub mod matcomp;
pub mod superres;
pub mod toy;

pub use lti::LtiModel;
pub use matcomp::{MatCompModel, SingularTriple};
pub use superres::SuperresModel;
pub use toy::MomentCurve;
