//! Error-distribution families used by the operators and by model selection.

use rand::{Rng, RngCore};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::{erf_inv, erfc};
use statrs::function::gamma::gamma;

use super::UnivariateDistribution;
use crate::error::{ensure_finite, Error, Result};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Uniform draw on the open interval (0, 1).
pub(crate) fn open_unit(rng: &mut dyn RngCore) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

/// Parameters of a Weibull error term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawWeibull")]
pub struct WeibullErrorParams {
    pub lambda_scale: f64,
    pub k_shape: f64,
}

#[derive(Deserialize)]
struct RawWeibull {
    lambda_scale: f64,
    k_shape: f64,
}

impl TryFrom<RawWeibull> for WeibullErrorParams {
    type Error = Error;
    fn try_from(r: RawWeibull) -> Result<Self> {
        WeibullErrorParams::new(r.lambda_scale, r.k_shape)
    }
}

impl WeibullErrorParams {
    pub fn new(lambda_scale: f64, k_shape: f64) -> Result<Self> {
        ensure_finite("weibull params", &[lambda_scale, k_shape])?;
        if lambda_scale <= 0.0 || k_shape <= 0.0 {
            return Err(Error::domain(format!(
                "weibull scale and shape must be positive (got {lambda_scale}, {k_shape})"
            )));
        }
        Ok(Self {
            lambda_scale,
            k_shape,
        })
    }

    pub fn mean(&self) -> f64 {
        self.lambda_scale * gamma(1.0 + 1.0 / self.k_shape)
    }
}

/// Spread of a Gaussian operator: a fixed standard deviation, or a
/// multiplicative factor applied to a per-trial distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Spread {
    Sigma(f64),
    Alpha(f64),
}

/// Bias and spread of a Gaussian operator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGaussianOp")]
pub struct GaussianOpParams {
    pub beta: f64,
    #[serde(flatten)]
    pub spread: Spread,
}

#[derive(Deserialize)]
struct RawGaussianOp {
    beta: f64,
    sigma: Option<f64>,
    alpha: Option<f64>,
}

impl TryFrom<RawGaussianOp> for GaussianOpParams {
    type Error = Error;
    fn try_from(r: RawGaussianOp) -> Result<Self> {
        match (r.sigma, r.alpha) {
            (Some(s), None) => GaussianOpParams::fixed(r.beta, s),
            (None, Some(a)) => GaussianOpParams::multiplicative(r.beta, a),
            _ => Err(Error::schema(
                "sigma|alpha",
                "exactly one of `sigma` or `alpha` is required",
            )),
        }
    }
}

impl GaussianOpParams {
    pub fn fixed(beta: f64, sigma: f64) -> Result<Self> {
        ensure_finite("gaussian operator", &[beta, sigma])?;
        if sigma <= 0.0 {
            return Err(Error::domain("spread must be positive"));
        }
        Ok(Self {
            beta,
            spread: Spread::Sigma(sigma),
        })
    }

    pub fn multiplicative(beta: f64, alpha: f64) -> Result<Self> {
        ensure_finite("gaussian operator", &[beta, alpha])?;
        if alpha <= 0.0 {
            return Err(Error::domain("spread must be positive"));
        }
        Ok(Self {
            beta,
            spread: Spread::Alpha(alpha),
        })
    }

    /// The fixed standard deviation, or an error for the multiplicative form.
    pub fn sigma(&self) -> Result<f64> {
        match self.spread {
            Spread::Sigma(s) => Ok(s),
            Spread::Alpha(_) => Err(Error::invalid(
                "operator requires the fixed-sigma form of the Gaussian parameters",
            )),
        }
    }

    /// Mean squared error around the operator's target.
    pub fn mse(&self) -> Result<f64> {
        Ok(self.beta * self.beta + self.sigma()?.powi(2))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Weibull {
    pub scale: f64,
    pub shape: f64,
}

impl Weibull {
    pub fn new(params: WeibullErrorParams) -> Self {
        Self {
            scale: params.lambda_scale,
            shape: params.k_shape,
        }
    }

    pub fn survival(&self, x: f64) -> f64 {
        if x <= 0.0 {
            1.0
        } else {
            (-(x / self.scale).powf(self.shape)).exp()
        }
    }
}

impl UnivariateDistribution for Weibull {
    fn ln_pdf(&self, x: f64) -> f64 {
        if x < 0.0 {
            return f64::NEG_INFINITY;
        }
        let z = x / self.scale;
        (self.shape / self.scale).ln() + (self.shape - 1.0) * z.ln() - z.powf(self.shape)
    }

    fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else {
            -(-(x / self.scale).powf(self.shape)).exp_m1()
        }
    }

    fn quantile(&self, p: f64) -> f64 {
        self.scale * (-(-p).ln_1p()).powf(1.0 / self.shape)
    }

    fn sample(&self, rng: &mut dyn RngCore) -> f64 {
        self.scale * (-open_unit(rng).ln()).powf(1.0 / self.shape)
    }

    fn mean(&self) -> f64 {
        self.scale * gamma(1.0 + 1.0 / self.shape)
    }

    fn variance(&self) -> f64 {
        let g1 = gamma(1.0 + 1.0 / self.shape);
        self.scale * self.scale * (gamma(1.0 + 2.0 / self.shape) - g1 * g1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gaussian {
    pub mean: f64,
    pub sd: f64,
}

impl Gaussian {
    pub fn new(mean: f64, sd: f64) -> Result<Self> {
        ensure_finite("gaussian", &[mean, sd])?;
        if sd <= 0.0 {
            return Err(Error::domain(format!("standard deviation must be positive, got {sd}")));
        }
        Ok(Self { mean, sd })
    }
}

impl UnivariateDistribution for Gaussian {
    fn ln_pdf(&self, x: f64) -> f64 {
        let z = (x - self.mean) / self.sd;
        -0.5 * z * z - self.sd.ln() - LN_SQRT_2PI
    }

    fn cdf(&self, x: f64) -> f64 {
        0.5 * erfc(-(x - self.mean) / (self.sd * std::f64::consts::SQRT_2))
    }

    fn quantile(&self, p: f64) -> f64 {
        self.mean + self.sd * std::f64::consts::SQRT_2 * erf_inv(2.0 * p - 1.0)
    }

    fn sample(&self, rng: &mut dyn RngCore) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        self.mean + self.sd * z
    }

    fn mean(&self) -> f64 {
        self.mean
    }

    fn variance(&self) -> f64 {
        self.sd * self.sd
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Exponential {
    pub rate: f64,
}

impl UnivariateDistribution for Exponential {
    fn ln_pdf(&self, x: f64) -> f64 {
        if x < 0.0 {
            f64::NEG_INFINITY
        } else {
            self.rate.ln() - self.rate * x
        }
    }

    fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else {
            -(-self.rate * x).exp_m1()
        }
    }

    fn quantile(&self, p: f64) -> f64 {
        -(-p).ln_1p() / self.rate
    }

    fn mean(&self) -> f64 {
        1.0 / self.rate
    }

    fn variance(&self) -> f64 {
        1.0 / (self.rate * self.rate)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogNormal {
    pub mu: f64,
    pub sigma: f64,
}

impl UnivariateDistribution for LogNormal {
    fn ln_pdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return f64::NEG_INFINITY;
        }
        let z = (x.ln() - self.mu) / self.sigma;
        -0.5 * z * z - self.sigma.ln() - LN_SQRT_2PI - x.ln()
    }

    fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else {
            0.5 * erfc(-(x.ln() - self.mu) / (self.sigma * std::f64::consts::SQRT_2))
        }
    }

    fn quantile(&self, p: f64) -> f64 {
        (self.mu + self.sigma * std::f64::consts::SQRT_2 * erf_inv(2.0 * p - 1.0)).exp()
    }

    fn mean(&self) -> f64 {
        (self.mu + 0.5 * self.sigma * self.sigma).exp()
    }

    fn variance(&self) -> f64 {
        let s2 = self.sigma * self.sigma;
        (s2.exp() - 1.0) * (2.0 * self.mu + s2).exp()
    }
}

/// Laplace distribution; an optional alternative error family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Laplace {
    pub location: f64,
    pub scale: f64,
}

impl UnivariateDistribution for Laplace {
    fn ln_pdf(&self, x: f64) -> f64 {
        -(x - self.location).abs() / self.scale - (2.0 * self.scale).ln()
    }

    fn cdf(&self, x: f64) -> f64 {
        let z = (x - self.location) / self.scale;
        if z < 0.0 {
            0.5 * z.exp()
        } else {
            1.0 - 0.5 * (-z).exp()
        }
    }

    fn quantile(&self, p: f64) -> f64 {
        if p < 0.5 {
            self.location + self.scale * (2.0 * p).ln()
        } else {
            self.location - self.scale * (2.0 * (1.0 - p)).ln()
        }
    }

    fn mean(&self) -> f64 {
        self.location
    }

    fn variance(&self) -> f64 {
        2.0 * self.scale * self.scale
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{integrate_to_infinity, ks_test};
    use crate::seed::rng_from_seed;

    #[test]
    fn weibull_shape_one_is_exponential() {
        let w = Weibull::new(WeibullErrorParams::new(2.5, 1.0).unwrap());
        assert!((w.mean() - 2.5).abs() < 1e-12);
        let e = Exponential { rate: 0.4 };
        for &x in &[0.1, 1.0, 4.0] {
            assert!((w.ln_pdf(x) - e.ln_pdf(x)).abs() < 1e-12);
        }
    }

    #[test]
    fn weibull_support() {
        let w = Weibull::new(WeibullErrorParams::new(1.0, 2.0).unwrap());
        assert_eq!(w.pdf(-0.1), 0.0);
        assert_eq!(w.cdf(-0.1), 0.0);
    }

    #[test]
    fn weibull_mean_matches_integrated_density() {
        // ∫ x f(x) dx for λ=1, k=2 equals √π/2 ≈ 0.886227.
        let w = Weibull::new(WeibullErrorParams::new(1.0, 2.0).unwrap());
        let m = integrate_to_infinity(|x| x * w.pdf(x), 0.0, 1e-13);
        assert!((m - 0.886_226_925_452_758).abs() < 1e-10);
        assert!((w.mean() - m).abs() < 1e-10);
    }

    #[test]
    fn nonpositive_weibull_params_rejected() {
        assert!(WeibullErrorParams::new(0.0, 1.0).is_err());
        assert!(WeibullErrorParams::new(1.0, -2.0).is_err());
    }

    #[test]
    fn gaussian_op_params_json_forms() {
        let f: GaussianOpParams = serde_json::from_str(r#"{"beta":0.1,"sigma":0.3}"#).unwrap();
        assert_eq!(f.sigma().unwrap(), 0.3);
        let m: GaussianOpParams = serde_json::from_str(r#"{"beta":0.1,"alpha":0.05}"#).unwrap();
        assert!(m.sigma().is_err());
        assert_eq!(serde_json::to_string(&f).unwrap(), r#"{"beta":0.1,"sigma":0.3}"#);
        assert!(serde_json::from_str::<GaussianOpParams>(r#"{"beta":0.1}"#).is_err());
    }

    #[test]
    fn samplers_agree_with_cdfs() {
        let mut rng = rng_from_seed(3);
        let check = |d: &dyn UnivariateDistribution, rng: &mut crate::seed::SimRng| {
            let xs: Vec<f64> = (0..10_000).map(|_| d.sample(rng)).collect();
            ks_test(&xs, |x| d.cdf(x))
        };
        let families: Vec<Box<dyn UnivariateDistribution>> = vec![
            Box::new(Weibull { scale: 1.0, shape: 1.5 }),
            Box::new(Gaussian::new(0.2, 0.7).unwrap()),
            Box::new(Exponential { rate: 2.0 }),
            Box::new(LogNormal { mu: -0.3, sigma: 0.6 }),
            Box::new(Laplace { location: 1.0, scale: 0.5 }),
        ];
        for d in &families {
            assert!(check(d.as_ref(), &mut rng) > 0.001);
        }
    }

    #[test]
    fn quantiles_invert_cdfs() {
        let families: Vec<Box<dyn UnivariateDistribution>> = vec![
            Box::new(Weibull { scale: 1.3, shape: 0.8 }),
            Box::new(Gaussian::new(-1.0, 2.0).unwrap()),
            Box::new(LogNormal { mu: 0.1, sigma: 0.4 }),
            Box::new(Laplace { location: 0.0, scale: 2.0 }),
        ];
        for d in &families {
            for &p in &[0.05, 0.5, 0.9] {
                assert!((d.cdf(d.quantile(p)) - p).abs() < 1e-10);
            }
        }
    }
}
