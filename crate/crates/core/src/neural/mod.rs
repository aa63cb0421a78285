//! Hand-written neural network kit: tensors, layers with analytic
//! gradients, Adam, and the six benchmark architectures.

pub mod adam;
pub mod arch;
pub mod conv;
pub mod layers;
pub mod loss;
pub mod net;
pub mod recurrent;
pub mod tensor;
pub mod train;

pub use arch::{build_architecture, ArchitectureSpec, LayerSpec, LstmSpec, TrainingSpec, ARCHITECTURES};
pub use layers::{Activation, Layer, Mode};
pub use net::{Network, TrainedNet};
pub use tensor::Tensor;
pub use train::{evaluate, train, EpochLog};
