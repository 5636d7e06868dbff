//! Skewed generalized t distribution.
//!
//! Parameterized by its mode `mu`, scale `sigma`, skewness `lambda`, and the
//! two kurtosis shapes `p` and `q`. The variance adjustment `v` rescales the
//! density so that `sigma` is the standard deviation.

use rand::{Rng, RngCore};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use statrs::function::beta::{beta_reg, ln_beta};

use super::UnivariateDistribution;
use crate::error::{ensure_finite, Error, Result};
use crate::numeric::{brent_root, expand_bracket};

/// Horizontal display range of curve stimuli.
pub const DISPLAY_X: (f64, f64) = (-5.0, 5.0);
/// Largest density a curve stimulus may reach and still fit on the chart.
pub const DISPLAY_Y_MAX: f64 = 1.0;

const MAX_REJECTIONS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSgt")]
pub struct SgtParams {
    pub mu: f64,
    pub sigma: f64,
    pub lambda: f64,
    pub p: f64,
    pub q: f64,
}

#[derive(Deserialize)]
struct RawSgt {
    mu: f64,
    sigma: f64,
    lambda: f64,
    p: f64,
    q: f64,
}

impl TryFrom<RawSgt> for SgtParams {
    type Error = Error;
    fn try_from(r: RawSgt) -> Result<Self> {
        SgtParams::new(r.mu, r.sigma, r.lambda, r.p, r.q)
    }
}

impl SgtParams {
    pub fn new(mu: f64, sigma: f64, lambda: f64, p: f64, q: f64) -> Result<Self> {
        ensure_finite("sgt params", &[mu, sigma, lambda, p, q])?;
        if sigma <= 0.0 {
            return Err(Error::schema("sigma", "must be positive"));
        }
        if lambda.abs() >= 1.0 {
            return Err(Error::schema("lambda", "must lie in (-1, 1)"));
        }
        if p <= 0.0 {
            return Err(Error::schema("p", "must be positive"));
        }
        if q <= 0.0 {
            return Err(Error::schema("q", "must be positive"));
        }
        Ok(Self {
            mu,
            sigma,
            lambda,
            p,
            q,
        })
    }
}

/// Variance adjustment `v` of the SGT density.
///
/// Requires `q > 2/p`, the condition for a finite second moment.
pub fn sgt_v(params: &SgtParams) -> Result<f64> {
    let SgtParams { lambda, p, q, .. } = *params;
    if q <= 2.0 / p {
        return Err(Error::domain(format!(
            "finite variance requires q > 2/p (q = {q}, 2/p = {})",
            2.0 / p
        )));
    }
    let base = ln_beta(1.0 / p, q);
    let r3 = (ln_beta(3.0 / p, q - 2.0 / p) - base).exp();
    let r2 = (ln_beta(2.0 / p, q - 1.0 / p) - base).exp();
    let l2 = lambda * lambda;
    let bracket = (3.0 * l2 + 1.0) * r3 - 4.0 * l2 * r2 * r2;
    if !(bracket > 0.0) {
        return Err(Error::domain("variance adjustment bracket is not positive"));
    }
    let v = q.powf(-1.0 / p) / bracket.sqrt();
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(Error::domain("variance adjustment is not finite"))
    }
}

/// A validated SGT with its normalizing constants precomputed.
#[derive(Debug, Clone, Copy)]
pub struct Sgt {
    params: SgtParams,
    v: f64,
    ln_norm: f64,
}

impl Sgt {
    pub fn new(params: SgtParams) -> Result<Self> {
        let v = sgt_v(&params)?;
        let SgtParams { sigma, p, q, .. } = params;
        let ln_norm = p.ln() - 2f64.ln() - (v * sigma).ln() - q.ln() / p - ln_beta(1.0 / p, q);
        Ok(Self { params, v, ln_norm })
    }

    pub fn params(&self) -> &SgtParams {
        &self.params
    }

    pub fn v(&self) -> f64 {
        self.v
    }

    /// Scale of the flank containing `x`.
    fn side_scale(&self, x: f64) -> f64 {
        let side = if x >= self.params.mu { 1.0 } else { -1.0 };
        self.v * self.params.sigma * (1.0 + self.params.lambda * side)
    }

    /// `z^p / q` for the standardized distance of `x` from the mode.
    fn kernel_t(&self, x: f64) -> f64 {
        let z = (x - self.params.mu).abs() / self.side_scale(x);
        z.powf(self.params.p) / self.params.q
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.ln_pdf(x).exp()
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        let SgtParams { p, q, .. } = self.params;
        self.ln_norm - (q + 1.0 / p) * self.kernel_t(x).ln_1p()
    }

    /// Height of the density at its mode.
    pub fn peak(&self) -> f64 {
        self.ln_norm.exp()
    }

    /// Analytic derivative of the density.
    pub fn pdf_derivative(&self, x: f64) -> f64 {
        let SgtParams { mu, p, q, .. } = self.params;
        if x == mu {
            return 0.0;
        }
        let s = self.side_scale(x);
        let z = (x - mu).abs() / s;
        let t = z.powf(p) / q;
        let dt_dz = p * z.powf(p - 1.0) / q;
        -self.pdf(x) * (q + 1.0 / p) * dt_dz / (1.0 + t) / s * (x - mu).signum()
    }

    /// Closed-form CDF through the regularized incomplete beta function.
    pub fn cdf(&self, x: f64) -> f64 {
        let SgtParams { mu, lambda, p, q, .. } = self.params;
        if x == f64::INFINITY {
            return 1.0;
        }
        if x == f64::NEG_INFINITY {
            return 0.0;
        }
        let t = self.kernel_t(x);
        // Mass between the mode and x, and its complement toward the tail,
        // each evaluated without cancellation.
        let toward_mode = beta_reg(1.0 / p, q, t / (1.0 + t));
        let toward_tail = beta_reg(q, 1.0 / p, 1.0 / (1.0 + t));
        if x >= mu {
            let right = 0.5 * (1.0 + lambda);
            if toward_mode < 0.5 {
                1.0 - right + right * toward_mode
            } else {
                1.0 - right * toward_tail
            }
        } else {
            0.5 * (1.0 - lambda) * toward_tail
        }
    }

    /// Inverse CDF by bracketed root finding.
    pub fn try_quantile(&self, prob: f64) -> Result<f64> {
        if !(prob > 0.0 && prob < 1.0) {
            return Err(Error::domain(format!(
                "quantile probability must lie in (0, 1), got {prob}"
            )));
        }
        let mu = self.params.mu;
        let sigma = self.params.sigma;
        let g = |x: f64| self.cdf(x) - prob;
        let at_mode = g(mu);
        if at_mode == 0.0 {
            return Ok(mu);
        }
        let far = if at_mode < 0.0 { mu + sigma } else { mu - sigma };
        let edge = expand_bracket(g, mu, far, 400)?;
        let (lo, hi) = if edge < mu { (edge, mu) } else { (mu, edge) };
        brent_root(g, lo, hi, 1e-13 * (1.0 + mu.abs()), 300)
    }

    /// Theoretical mean, finite when `q > 1/p`.
    pub fn mean(&self) -> f64 {
        let SgtParams { mu, sigma, lambda, p, q } = self.params;
        let ln_r = ln_beta(2.0 / p, q - 1.0 / p) - ln_beta(1.0 / p, q);
        mu + 2.0 * self.v * sigma * lambda * q.powf(1.0 / p) * ln_r.exp()
    }
}

impl UnivariateDistribution for Sgt {
    fn ln_pdf(&self, x: f64) -> f64 {
        Sgt::ln_pdf(self, x)
    }

    fn cdf(&self, x: f64) -> f64 {
        Sgt::cdf(self, x)
    }

    fn quantile(&self, p: f64) -> f64 {
        self.try_quantile(p).unwrap_or(f64::NAN)
    }

    fn mean(&self) -> f64 {
        Sgt::mean(self)
    }

    fn variance(&self) -> f64 {
        self.params.sigma * self.params.sigma
    }
}

/// True when the SGT's mode and median fall inside the display's x range
/// and its peak fits under the top of the chart.
pub fn is_displayable(params: &SgtParams) -> bool {
    let Ok(sgt) = Sgt::new(*params) else {
        return false;
    };
    let in_x = |x: f64| (DISPLAY_X.0..=DISPLAY_X.1).contains(&x);
    if !in_x(params.mu) || sgt.peak() > DISPLAY_Y_MAX {
        return false;
    }
    sgt.try_quantile(0.5).map(in_x).unwrap_or(false)
}

/// Ranges that stimulus SGT parameters are drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgtPrior {
    pub mu: (f64, f64),
    pub sigma: (f64, f64),
    /// Standard deviation of the zero-mean normal for `lambda`.
    pub lambda_sd: f64,
    /// Draws of `lambda` are clamped to `±lambda_clamp`.
    pub lambda_clamp: f64,
    pub p: (f64, f64),
    pub q: (f64, f64),
}

impl Default for SgtPrior {
    fn default() -> Self {
        Self {
            mu: (-2.0, 2.0),
            sigma: (0.5, 2.5),
            lambda_sd: 0.33,
            lambda_clamp: 0.95,
            p: (2.0, 4.0),
            q: (1.0, 50.0),
        }
    }
}

impl SgtPrior {
    fn draw_once(&self, rng: &mut dyn RngCore) -> Result<SgtParams> {
        let lambda = Normal::new(0.0, self.lambda_sd)
            .map_err(|e| Error::invalid(e.to_string()))?
            .sample(rng)
            .clamp(-self.lambda_clamp, self.lambda_clamp);
        SgtParams::new(
            rng.random_range(self.mu.0..=self.mu.1),
            rng.random_range(self.sigma.0..=self.sigma.1),
            lambda,
            rng.random_range(self.p.0..=self.p.1),
            rng.random_range(self.q.0..=self.q.1),
        )
    }

    /// Draws parameters until they have finite variance and yield a
    /// displayable stimulus.
    pub fn sample(&self, rng: &mut dyn RngCore) -> Result<SgtParams> {
        self.sample_counted(rng).map(|(p, _)| p)
    }

    /// Like [`sample`](Self::sample), also returning the number of rejected draws.
    pub fn sample_counted(&self, rng: &mut dyn RngCore) -> Result<(SgtParams, usize)> {
        for rejected in 0..=MAX_REJECTIONS {
            let candidate = self.draw_once(rng)?;
            if candidate.q > 2.0 / candidate.p && is_displayable(&candidate) {
                return Ok((candidate, rejected));
            }
        }
        Err(Error::TooManyRejections(MAX_REJECTIONS))
    }
}

/// Draws stimulus SGT parameters from the default ranges.
pub fn sample_sgt_params(rng: &mut dyn RngCore) -> Result<SgtParams> {
    SgtPrior::default().sample(rng)
}
