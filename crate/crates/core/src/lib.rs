//! Segmentation-assisted fusion of auxiliary image features into a
//! vision-language projector, with the evaluation and tooling around it:
//!
//! * [`tensor`]: dense `f64` tensors, hand-written gradients, gradient checks, Adam.
//! * [`projector`]: fusion variants, parameter budgets, freeze masks, checkpoints.
//! * [`segstack`]: bit-packed segmentation stacks, the 212-class table, superclasses.
//! * [`pipeline`]: synthetic data, a toy decoder, two-stage training, generation.
//! * [`metrics`]: BLEU, ROUGE-L, METEOR-lite, CIDEr-D and clinical-efficacy scores.
//! * [`stats`]: run aggregation and Welch's t-test.
//! * [`vqa`]: report-to-chat conversion.
//! * [`ground`]: report/segmentation agreement.

pub mod error;
pub mod exec;
pub mod ground;
pub mod metrics;
pub mod pipeline;
pub mod projector;
pub mod segstack;
pub mod stats;
pub mod tensor;
pub mod vqa;

pub use error::{Error, Result};
pub use exec::Exec;
pub use tensor::TensorF;
