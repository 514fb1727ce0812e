//! Single-shot reversible GAN for unpaired removal of cardiac pulse
//! artifacts from 1-D signals, together with the tensor core, synthetic data,
//! signal pipeline and evaluation metrics it needs.

pub mod checkpoint;
pub mod error;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod params;
pub mod pipeline;
pub mod real;
pub mod signal;
pub mod synth;
pub mod tape;
pub mod tensor;
pub mod trainer;
pub mod verify;

pub use error::{Error, Result};
pub use model::{BlockId, Mode, ModelConfig, Side, SsrganModel};
pub use params::{ParamId, ParamStore};
pub use real::Real;
pub use tape::Tape;
pub use tensor::{ConvSpec, Tensor};
