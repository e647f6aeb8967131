//! Fused Gromov-Wasserstein distances between attributed graphs, linear
//! FGW embeddings against a barycenter reference, and kernel methods on top.

pub mod barycenter;
pub mod cluster;
pub mod cv;
pub mod error;
pub mod export;
pub mod graph;
pub mod io;
pub mod kernel;
pub mod lemma;
pub mod linear;
pub mod ot;
pub mod svm;
pub mod synthetic;

pub use error::{Error, Result};
pub use graph::{GraphDataset, MeasureGraph};
