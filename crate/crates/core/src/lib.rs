//! Finite-depth dyadic measures and the constructive machinery around the
//! scenery flow and CP chains: magnification, scenery distributions,
//! centering, splicing, and an exact bounded-Lipschitz metric.

pub mod cp;
pub mod distribution;
pub mod dyadic;
pub mod error;
pub mod experiment;
pub mod flow;
pub mod measure;
pub mod metric;
pub mod oracle;
pub mod par;
pub mod splice;
pub mod verify;


pub use distribution::{Atom, EmpiricalDistribution, TaggedMeasure, TestFunction};
pub use dyadic::{CubeRef, Word};
pub use error::{Error, Result};
pub use measure::{CylinderMeasure, DigitLaw, DyadicMeasure};
pub use par::Exec;
