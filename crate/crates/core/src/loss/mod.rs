//! Expert beliefs, loss terms and assembly of the target log density.

pub mod belief;
pub mod space;
pub mod target;

pub use belief::{
    jacobian_correction_exponential_lambda, loss_contribution, ExpertBelief, FlatteningTerm, LossTerm,
    NamedFn, ObservableFunctional, ParamFn,
};
pub use space::{Block, BlockRef, Constraint, ParameterSpace};
pub use target::{assemble_target, ModelParts, PriorSampler, TargetBreakdown, TargetDensity};
