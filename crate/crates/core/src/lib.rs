//! Construction, curation and active-learning refinement of training
//! datasets for neuroevolution-style machine-learned interatomic potentials.

pub mod elements;
pub mod error;
pub mod exyzio;
pub mod geometry;
pub mod par;
pub mod perturb;
pub mod sampling;
pub mod service;
pub mod surrogate;
pub mod workflow;

pub use error::{Error, Result};
pub use exyzio::{Dataset, Frame, InfoValue, ParityKind, ParitySeries};
pub use geometry::{BondReport, RadiiTable};
pub use sampling::{Projection2D, SelectionResult};
pub use surrogate::{DescriptorSpec, Evaluation, Potential, SurrogateModel};
