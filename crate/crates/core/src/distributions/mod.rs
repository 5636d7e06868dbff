//! The stimulus-generating SGT and the error families operators draw from.

mod families;
mod sgt;

use rand::RngCore;

pub use families::{
    Exponential, Gaussian, GaussianOpParams, Laplace, LogNormal, Spread, Weibull,
    WeibullErrorParams,
};
pub(crate) use families::open_unit;
pub use sgt::{
    is_displayable, sample_sgt_params, sgt_v, Sgt, SgtParams, SgtPrior, DISPLAY_X, DISPLAY_Y_MAX,
};

/// A univariate continuous distribution with analytic CDF and quantile.
pub trait UnivariateDistribution: Send + Sync {
    fn ln_pdf(&self, x: f64) -> f64;

    fn pdf(&self, x: f64) -> f64 {
        self.ln_pdf(x).exp()
    }

    fn cdf(&self, x: f64) -> f64;

    fn quantile(&self, p: f64) -> f64;

    /// Inverse-transform sampling unless a family overrides it.
    fn sample(&self, rng: &mut dyn RngCore) -> f64 {
        self.quantile(open_unit(rng))
    }

    fn mean(&self) -> f64;

    fn variance(&self) -> f64;
}
