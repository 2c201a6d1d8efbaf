//! Convolutional and recurrent arithmetic circuits, their exact tensor-network
//! equivalents, and entanglement measurements of the states they represent.
//!
//! A circuit evaluated on standard-basis inputs `e^(s_1), ..., e^(s_N)` returns
//! one coefficient of an order-N tensor. [`circuits`] evaluates and materializes
//! those tensors by brute force; [`builders`] produces the Tree, MPS,
//! recursive-Tree and recursive-MPS networks whose contraction (followed by
//! [`network::dup`] when inputs are duplicated) gives the same tensor;
//! [`schmidt`] measures entanglement across a cut; [`analysis`] runs the
//! randomized scaling experiments.

pub mod analysis;
pub mod builders;
pub mod circuits;
pub mod error;
pub mod format;
pub mod netfile;
pub mod network;
pub mod schmidt;
pub mod tensor;

pub use error::{Error, Result};
pub use network::{DupGroups, TensorNetwork};
pub use schmidt::Partition;
pub use tensor::DenseTensor;
