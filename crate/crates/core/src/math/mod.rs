//! Densities, quantiles, special functions and constrained-parameter
//! transforms.

pub mod corr;
pub mod dist;
pub mod lomax;
pub mod quad;
pub mod roots;
pub mod special;
pub mod student_t;

pub use corr::{
    concordance_to_correlation, corr_inverse, corr_transform, correlation_to_concordance,
    fisher_se, fisher_z, fisher_z_inv, lkj_log_density, lkj_marginal_log_density, pair_list,
    CorrelationMatrix, UnconstrainedCorrVector,
};
pub use dist::{DistributionSpec, Family};
pub use lomax::{lomax_cdf, lomax_quantile};
pub use student_t::{student_t_nonstandard, StudentT};
