//! Numerical building blocks shared by every sampler: special functions,
//! seedable random streams, bracketing root finding and Richardson
//! differentiation.

pub mod deriv;
pub mod random;
pub mod roots;
pub mod special;

pub use deriv::second_derivative;
pub use random::{mix_ids, real_id, sample_gamma, RandomStream};
pub use roots::{find_root, Bracket};
pub use special::{
    digamma, log_gamma, reg_gamma_quantile, reg_gamma_upper_quantile, reg_lower_gamma,
    reg_upper_gamma, std_normal_cdf, std_normal_quantile, trigamma,
};
