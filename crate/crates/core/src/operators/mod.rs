//! Visual decoding operators as response distributions.
//!
//! Every operator maps a true stimulus quantity (in visual angle) and a set
//! of per-participant parameters to a distribution over responses. The
//! geometric operators (`highest_point_x`, `max_slope` positions) live in
//! [`geometric`]; parameter records and their JSON form live in [`params`].

mod geometric;
mod params;

use rand::RngCore;
use serde::{Deserialize, Serialize};
use std::sync::atomic::{AtomicU64, Ordering};

use crate::distributions::{
    open_unit, Gaussian, GaussianOpParams, Laplace, UnivariateDistribution, Weibull,
    WeibullErrorParams,
};
use crate::error::{ensure_finite, Error, Result};

pub use geometric::{highest_point_x, max_slope_position, HighestPointX, SideRule};
pub use params::{
    BahpParams, MixtureParams, OperatorKind, OperatorParams, ParamsFile, ParticipantParams,
    ProjectionParams,
};

/// Where a response distribution puts its mass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Support {
    Real,
    AtMost { upper: f64 },
    Interval { lower: f64, upper: f64 },
}

impl Support {
    pub fn contains(&self, x: f64) -> bool {
        match *self {
            Support::Real => x.is_finite(),
            Support::AtMost { upper } => x <= upper,
            Support::Interval { lower, upper } => (lower..=upper).contains(&x),
        }
    }
}

/// Common interface for operator response distributions.
pub trait ResponseDistribution: Send + Sync {
    fn sample(&self, rng: &mut dyn RngCore) -> f64;

    fn log_density(&self, x: f64) -> f64;

    fn support(&self) -> Support;

    fn mean(&self) -> Option<f64> {
        None
    }

    fn variance(&self) -> Option<f64> {
        None
    }

    /// Cumulative distribution function, where one is available.
    fn cdf(&self, _x: f64) -> Option<f64> {
        None
    }
}

impl ResponseDistribution for Gaussian {
    fn sample(&self, rng: &mut dyn RngCore) -> f64 {
        UnivariateDistribution::sample(self, rng)
    }

    fn log_density(&self, x: f64) -> f64 {
        self.ln_pdf(x)
    }

    fn support(&self) -> Support {
        Support::Real
    }

    fn mean(&self) -> Option<f64> {
        Some(self.mean)
    }

    fn variance(&self) -> Option<f64> {
        Some(self.sd * self.sd)
    }

    fn cdf(&self, x: f64) -> Option<f64> {
        Some(UnivariateDistribution::cdf(self, x))
    }
}

impl ResponseDistribution for Laplace {
    fn sample(&self, rng: &mut dyn RngCore) -> f64 {
        UnivariateDistribution::sample(self, rng)
    }

    fn log_density(&self, x: f64) -> f64 {
        self.ln_pdf(x)
    }

    fn support(&self) -> Support {
        Support::Real
    }

    fn mean(&self) -> Option<f64> {
        Some(self.location)
    }

    fn variance(&self) -> Option<f64> {
        Some(UnivariateDistribution::variance(self))
    }

    fn cdf(&self, x: f64) -> Option<f64> {
        Some(UnivariateDistribution::cdf(self, x))
    }
}

/// Projection of a point over `distance` degrees: `N(theta + beta, alpha * distance)`.
pub fn projection(theta: f64, distance: f64, params: &ProjectionParams) -> Result<Gaussian> {
    ensure_finite("projection", &[theta, distance])?;
    if distance <= 0.0 {
        return Err(Error::domain(format!(
            "projection distance must be positive, got {distance}"
        )));
    }
    Gaussian::new(theta + params.beta, params.alpha * distance)
}

/// A response `theta - eps` with `eps` Weibull: never above `theta`.
#[derive(Debug, Clone, Copy)]
pub struct WeibullDeficit {
    pub theta: f64,
    pub error: Weibull,
}

/// Perceived peak height: `theta_peak - eps`.
pub fn highest_point_y(theta_peak: f64, params: &WeibullErrorParams) -> Result<WeibullDeficit> {
    ensure_finite("highest_point_y", &[theta_peak])?;
    Ok(WeibullDeficit {
        theta: theta_peak,
        error: Weibull::new(*params),
    })
}

impl ResponseDistribution for WeibullDeficit {
    fn sample(&self, rng: &mut dyn RngCore) -> f64 {
        self.theta - self.error.sample(rng)
    }

    fn log_density(&self, x: f64) -> f64 {
        if x > self.theta {
            return f64::NEG_INFINITY;
        }
        self.error.ln_pdf(self.theta - x)
    }

    fn support(&self) -> Support {
        Support::AtMost { upper: self.theta }
    }

    fn mean(&self) -> Option<f64> {
        Some(self.theta - self.error.mean())
    }

    fn variance(&self) -> Option<f64> {
        Some(self.error.variance())
    }

    fn cdf(&self, x: f64) -> Option<f64> {
        Some(if x >= self.theta {
            1.0
        } else {
            self.error.survival(self.theta - x)
        })
    }
}

/// Attempts before the slope sampler switches from resampling to the
/// equivalent truncated inverse transform.
const MAX_SLOPE_RESAMPLES: usize = 1000;

/// Perceived maximum slope `theta - eps`, restricted to positive slopes.
///
/// Draws with `eps >= theta` are redrawn; the number of redraws is counted.
#[derive(Debug)]
pub struct MaxSlopeResponse {
    pub theta: f64,
    pub error: Weibull,
    /// Probability that a raw draw is a positive slope.
    accept: f64,
    rejections: AtomicU64,
}

impl Clone for MaxSlopeResponse {
    fn clone(&self) -> Self {
        Self {
            theta: self.theta,
            error: self.error,
            accept: self.accept,
            rejections: AtomicU64::new(self.rejections()),
        }
    }
}

pub fn max_slope(theta_max: f64, params: &WeibullErrorParams) -> Result<MaxSlopeResponse> {
    ensure_finite("max_slope", &[theta_max])?;
    if theta_max <= 0.0 {
        return Err(Error::domain(format!(
            "maximum slope must be positive, got {theta_max}"
        )));
    }
    let error = Weibull::new(*params);
    let accept = error.cdf(theta_max);
    if accept <= 0.0 {
        return Err(Error::domain(
            "the error scale makes a positive slope response impossible",
        ));
    }
    Ok(MaxSlopeResponse {
        theta: theta_max,
        error,
        accept,
        rejections: AtomicU64::new(0),
    })
}

impl MaxSlopeResponse {
    /// Total number of non-positive draws that were redrawn so far.
    pub fn rejections(&self) -> u64 {
        self.rejections.load(Ordering::Relaxed)
    }

    /// One slope response plus the number of redraws it took.
    pub fn sample_counted(&self, rng: &mut dyn RngCore) -> (f64, usize) {
        for attempt in 0..MAX_SLOPE_RESAMPLES {
            let eps = self.error.sample(rng);
            if eps < self.theta {
                self.rejections.fetch_add(attempt as u64, Ordering::Relaxed);
                return (self.theta - eps, attempt);
            }
        }
        self.rejections
            .fetch_add(MAX_SLOPE_RESAMPLES as u64, Ordering::Relaxed);
        let eps = self.error.quantile(open_unit(rng) * self.accept);
        (self.theta - eps, MAX_SLOPE_RESAMPLES)
    }
}

impl ResponseDistribution for MaxSlopeResponse {
    fn sample(&self, rng: &mut dyn RngCore) -> f64 {
        self.sample_counted(rng).0
    }

    fn log_density(&self, x: f64) -> f64 {
        if x <= 0.0 || x > self.theta {
            return f64::NEG_INFINITY;
        }
        self.error.ln_pdf(self.theta - x) - self.accept.ln()
    }

    fn support(&self) -> Support {
        Support::Interval {
            lower: 0.0,
            upper: self.theta,
        }
    }

    fn cdf(&self, x: f64) -> Option<f64> {
        Some(if x <= 0.0 {
            0.0
        } else if x >= self.theta {
            1.0
        } else {
            (self.error.survival(self.theta - x) - (1.0 - self.accept)) / self.accept
        })
    }
}

fn fixed_gaussian(theta: f64, params: &GaussianOpParams) -> Result<Gaussian> {
    ensure_finite("operator target", &[theta])?;
    Gaussian::new(theta + params.beta, params.sigma()?)
}

/// Closed-form approximation of the peak's x position: `N(theta_mode + beta, sigma)`.
pub fn highest_point_x_gaussian(theta_mode: f64, params: &GaussianOpParams) -> Result<Gaussian> {
    fixed_gaussian(theta_mode, params)
}

/// Area bisection: `N(theta_median + beta, sigma)`.
pub fn bisect_area(theta_median: f64, params: &GaussianOpParams) -> Result<Gaussian> {
    fixed_gaussian(theta_median, params)
}

/// Inverse-MSE weight given to the area-bisection estimate.
pub fn bahp_weight(theta_mode: f64, theta_median: f64, params: &BahpParams) -> Result<f64> {
    let mse_ba = params.ba.mse()?;
    let offset = theta_mode - theta_median + params.hp.beta;
    let mse_hp = offset * offset + params.hp.sigma()?.powi(2);
    let (inv_ba, inv_hp) = (1.0 / mse_ba, 1.0 / mse_hp);
    Ok(inv_ba / (inv_ba + inv_hp))
}

/// Sensor-fusion estimate of the median from the two operators.
pub fn bahp(theta_median: f64, theta_mode: f64, params: &BahpParams) -> Result<Gaussian> {
    ensure_finite("bahp", &[theta_median, theta_mode])?;
    let w = bahp_weight(theta_mode, theta_median, params)?;
    let (s_ba, s_hp) = (params.ba.sigma()?, params.hp.sigma()?);
    let mean = w * (theta_median + params.ba.beta) + (1.0 - w) * (theta_mode + params.hp.beta);
    let var = w * w * s_ba * s_ba + (1.0 - w) * (1.0 - w) * s_hp * s_hp;
    Gaussian::new(mean, var.sqrt())
}

/// Per-trial choice between the two operators.
#[derive(Debug, Clone, Copy)]
pub struct GaussianMixture {
    pub pi_ba: f64,
    pub ba: Gaussian,
    pub hp: Gaussian,
}

pub fn mixture(theta_median: f64, theta_mode: f64, params: &MixtureParams) -> Result<GaussianMixture> {
    Ok(GaussianMixture {
        pi_ba: params.pi_ba,
        ba: bisect_area(theta_median, &params.ba)?,
        hp: highest_point_x_gaussian(theta_mode, &params.hp)?,
    })
}

impl GaussianMixture {
    /// Posterior probability that `x` came from the bisection component.
    pub fn responsibility(&self, x: f64) -> f64 {
        let a = self.pi_ba.ln() + self.ba.ln_pdf(x);
        let b = (1.0 - self.pi_ba).ln() + self.hp.ln_pdf(x);
        if a == f64::NEG_INFINITY {
            return 0.0;
        }
        1.0 / (1.0 + (b - a).exp())
    }
}

impl ResponseDistribution for GaussianMixture {
    fn sample(&self, rng: &mut dyn RngCore) -> f64 {
        if open_unit(rng) < self.pi_ba {
            UnivariateDistribution::sample(&self.ba, rng)
        } else {
            UnivariateDistribution::sample(&self.hp, rng)
        }
    }

    fn log_density(&self, x: f64) -> f64 {
        let a = self.pi_ba.ln() + self.ba.ln_pdf(x);
        let b = (1.0 - self.pi_ba).ln() + self.hp.ln_pdf(x);
        let m = a.max(b);
        if m == f64::NEG_INFINITY {
            return m;
        }
        m + ((a - m).exp() + (b - m).exp()).ln()
    }

    fn support(&self) -> Support {
        Support::Real
    }

    fn mean(&self) -> Option<f64> {
        Some(self.pi_ba * self.ba.mean + (1.0 - self.pi_ba) * self.hp.mean)
    }

    fn variance(&self) -> Option<f64> {
        let m = self.mean()?;
        let second = self.pi_ba * (self.ba.sd.powi(2) + self.ba.mean.powi(2))
            + (1.0 - self.pi_ba) * (self.hp.sd.powi(2) + self.hp.mean.powi(2));
        Some(second - m * m)
    }

    fn cdf(&self, x: f64) -> Option<f64> {
        Some(
            self.pi_ba * UnivariateDistribution::cdf(&self.ba, x)
                + (1.0 - self.pi_ba) * UnivariateDistribution::cdf(&self.hp, x),
        )
    }
}
