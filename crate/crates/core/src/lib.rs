//! Tabular laboratory for RLHF objectives over softmax policies.
//!
//! A finite prompt set and response set carry a reward table. From it the
//! crate builds Boltzmann targets, evaluates a family of losses with exact
//! gradients, trains policies by (stochastic) gradient descent, and checks
//! smoothness and convergence bounds numerically.
//!
//! Every numeric type is generic over [`scalar::Real`]; the `*F64` and
//! `*F32` aliases below cover the common cases.

// `!(a > b)` is deliberate: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analysis;
pub mod error;
pub mod instance;
pub mod losses;
pub mod optimize;
pub mod policy;
pub mod preference;
pub mod rng;
pub mod scalar;
pub mod spaces;
pub mod table;

pub use error::{Error, Result};
pub use losses::{LossContext, LossKind};
pub use policy::SoftmaxPolicy;
pub use scalar::Real;
pub use spaces::{ConditionalDistribution, FiniteSpaces, PromptDistribution, RewardTable};
pub use table::Table;

// Concrete instantiations.
pub type RewardTableF64 = crate::spaces::RewardTable<f64>;
pub type PromptDistributionF64 = crate::spaces::PromptDistribution<f64>;
pub type ConditionalDistributionF64 = crate::spaces::ConditionalDistribution<f64>;
pub type PairDistributionF64 = crate::spaces::PairDistribution<f64>;
pub type SoftmaxPolicyF64 = crate::policy::SoftmaxPolicy<f64>;
pub type GradientTableF64 = crate::policy::GradientTable<f64>;
pub type LossContextF64 = crate::losses::LossContext<f64>;
pub type OmegaModelF64 = crate::preference::OmegaModel<f64>;

pub type RewardTableF32 = crate::spaces::RewardTable<f32>;
pub type PromptDistributionF32 = crate::spaces::PromptDistribution<f32>;
pub type ConditionalDistributionF32 = crate::spaces::ConditionalDistribution<f32>;
pub type PairDistributionF32 = crate::spaces::PairDistribution<f32>;
pub type SoftmaxPolicyF32 = crate::policy::SoftmaxPolicy<f32>;
pub type GradientTableF32 = crate::policy::GradientTable<f32>;
pub type LossContextF32 = crate::losses::LossContext<f32>;
pub type OmegaModelF32 = crate::preference::OmegaModel<f32>;
