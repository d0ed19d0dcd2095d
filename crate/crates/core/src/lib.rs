//! Tools for measuring how duplicated training samples change what a
//! classifier learns.
//!
//! The crate covers the whole experimental loop:
//!
//! * [`datasets`]: seeded two-class Gaussian data and a CIFAR-10 binary loader.
//! * [`duplication`]: uniform and class-biased duplicate injection with
//!   realized statistics, plus exact deduplication.
//! * [`svm`]: an RBF-kernel soft-margin SVM trained by SMO.
//! * [`neural`]: a small softmax MLP with hand-written backpropagation.
//! * [`adversarial`]: ℓ2 PGD, adversarial training and robust accuracy.
//! * [`decomposition`]: Monte-Carlo bias/variance estimators, including the
//!   adversarial correction terms.
//! * [`harness`]: sweep orchestration, CSV output and the CLI plumbing.

// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adversarial;
pub mod datasets;
pub mod decomposition;
pub mod duplication;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod metrics;
pub mod neural;
pub mod rng;
pub mod svm;

pub use error::{Error, Result};
