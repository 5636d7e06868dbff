//! Maximum-likelihood estimators for the operator parameters.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::distributions::{GaussianOpParams, UnivariateDistribution, Weibull, WeibullErrorParams};
use crate::error::{ensure_finite, Error, Result};
use crate::numeric::{mean, nelder_mead};
use crate::operators::{
    bahp, mixture, BahpParams, MixtureParams, ProjectionParams, ResponseDistribution,
};

/// Smallest spread a fit reports; reaching it is flagged as degenerate.
pub const SPREAD_FLOOR: f64 = 1e-12;
/// Lower bound on the BisectArea spread during fusion and mixture fits.
pub const BA_SIGMA_FLOOR: f64 = 1e-6;
/// Non-negative errors are floored here before taking logarithms.
pub const ERROR_FLOOR: f64 = 1e-9;
pub const WEIBULL_SHAPE_BOUNDS: (f64, f64) = (0.05, 50.0);
const MAX_ITERATIONS: usize = 200;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// A fitted parameter record with its likelihood and diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult<P> {
    pub params: P,
    pub log_likelihood: f64,
    pub n_trials: usize,
    #[serde(default)]
    pub bootstrap_se: BTreeMap<String, f64>,
    #[serde(default)]
    pub diagnostics: Vec<String>,
}

impl<P> FitResult<P> {
    fn new(params: P, log_likelihood: f64, n_trials: usize) -> Self {
        Self {
            params,
            log_likelihood,
            n_trials,
            bootstrap_se: BTreeMap::new(),
            diagnostics: Vec::new(),
        }
    }

    pub fn map<Q>(self, f: impl FnOnce(P) -> Q) -> FitResult<Q> {
        FitResult {
            params: f(self.params),
            log_likelihood: self.log_likelihood,
            n_trials: self.n_trials,
            bootstrap_se: self.bootstrap_se,
            diagnostics: self.diagnostics,
        }
    }
}

fn gaussian_loglik(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    -0.5 * z * z - sd.ln() - 0.5 * LN_2PI
}

/// Closed-form MLE for `e_i ~ N(beta, alpha * d_i)`.
///
/// `errors` are signed visual-angle errors and `distances` the projection
/// distances in degrees.
pub fn fit_projection_errors(errors: &[f64], distances: &[f64]) -> Result<FitResult<ProjectionParams>> {
    if errors.len() != distances.len() {
        return Err(Error::invalid("errors and distances differ in length"));
    }
    if errors.len() < 4 {
        return Err(Error::invalid(format!(
            "projection fit needs at least 4 trials, got {}",
            errors.len()
        )));
    }
    ensure_finite("projection errors", errors)?;
    ensure_finite("projection distances", distances)?;
    if let Some(i) = distances.iter().position(|&d| d <= 0.0) {
        return Err(Error::domain(format!("trial {i} has a non-positive projection distance")));
    }
    let inv_d2: Vec<f64> = distances.iter().map(|d| 1.0 / (d * d)).collect();
    let beta = errors.iter().zip(&inv_d2).map(|(e, w)| e * w).sum::<f64>() / inv_d2.iter().sum::<f64>();
    let alpha_sq = errors
        .iter()
        .zip(&inv_d2)
        .map(|(e, w)| (e - beta).powi(2) * w)
        .sum::<f64>()
        / errors.len() as f64;
    let mut diagnostics = Vec::new();
    let alpha = if alpha_sq.sqrt() < SPREAD_FLOOR {
        diagnostics.push("spread_at_floor".to_string());
        SPREAD_FLOOR
    } else {
        alpha_sq.sqrt()
    };
    let loglik = errors
        .iter()
        .zip(distances)
        .map(|(e, d)| gaussian_loglik(*e, beta, alpha * d))
        .sum();
    let mut fit = FitResult::new(ProjectionParams::new(beta, alpha)?, loglik, errors.len());
    fit.diagnostics = diagnostics;
    Ok(fit)
}

/// Closed-form Gaussian MLE (mean and `1/n` standard deviation).
pub fn fit_gaussian_error(errors: &[f64]) -> Result<FitResult<GaussianOpParams>> {
    if errors.len() < 2 {
        return Err(Error::invalid("gaussian fit needs at least 2 errors"));
    }
    ensure_finite("gaussian errors", errors)?;
    let m = mean(errors);
    let sd = (errors.iter().map(|e| (e - m).powi(2)).sum::<f64>() / errors.len() as f64).sqrt();
    let mut diagnostics = Vec::new();
    let sd = if sd < SPREAD_FLOOR {
        diagnostics.push("spread_at_floor".to_string());
        SPREAD_FLOOR
    } else {
        sd
    };
    let loglik = errors.iter().map(|e| gaussian_loglik(*e, m, sd)).sum();
    let mut fit = FitResult::new(GaussianOpParams::fixed(m, sd)?, loglik, errors.len());
    fit.diagnostics = diagnostics;
    Ok(fit)
}

/// Clamps tiny negative errors to zero and floors zeros for the logarithm.
pub fn prepare_nonnegative(errors: &[f64]) -> Result<Vec<f64>> {
    ensure_finite("weibull errors", errors)?;
    errors
        .iter()
        .enumerate()
        .map(|(i, &e)| {
            if e < -1e-12 {
                Err(Error::domain(format!("error {i} is negative ({e})")))
            } else {
                Ok(e.max(ERROR_FLOOR))
            }
        })
        .collect()
}

/// Weibull MLE by safeguarded Newton iteration on the profile equation for
/// the shape, with the scale profiled out.
pub fn fit_weibull_error(errors: &[f64]) -> Result<FitResult<WeibullErrorParams>> {
    if errors.len() < 5 {
        return Err(Error::invalid(format!(
            "weibull fit needs at least 5 errors, got {}",
            errors.len()
        )));
    }
    let x = prepare_nonnegative(errors)?;
    let x_max = x.iter().cloned().fold(0.0, f64::max);
    let ln_y: Vec<f64> = x.iter().map(|v| (v / x_max).ln()).collect();
    let mean_ln = mean(&ln_y);
    // g(k) = sum y^k ln y / sum y^k - 1/k - mean(ln y); increasing in k.
    let profile = |k: f64| -> (f64, f64) {
        let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
        for &l in &ln_y {
            let w = (k * l).exp();
            s0 += w;
            s1 += w * l;
            s2 += w * l * l;
        }
        let g = s1 / s0 - 1.0 / k - mean_ln;
        let dg = s2 / s0 - (s1 / s0).powi(2) + 1.0 / (k * k);
        (g, dg)
    };
    let (lo_k, hi_k) = WEIBULL_SHAPE_BOUNDS;
    let mut diagnostics = Vec::new();
    let k = if profile(hi_k).0 < 0.0 {
        diagnostics.push("shape_at_upper_bound".to_string());
        hi_k
    } else if profile(lo_k).0 > 0.0 {
        diagnostics.push("shape_at_lower_bound".to_string());
        lo_k
    } else {
        let (mut a, mut b) = (lo_k, hi_k);
        let mut k = 1.0f64.clamp(a, b);
        let mut trace = Vec::new();
        let mut converged = false;
        for _ in 0..MAX_ITERATIONS {
            let (g, dg) = profile(k);
            trace.push(k);
            if g.abs() < 1e-13 {
                converged = true;
                break;
            }
            if g < 0.0 {
                a = k;
            } else {
                b = k;
            }
            let newton = k - g / dg;
            let next = if newton > a && newton < b && dg > 0.0 {
                newton
            } else {
                0.5 * (a + b)
            };
            if (next - k).abs() <= 1e-14 * k {
                k = next;
                converged = true;
                break;
            }
            k = next;
        }
        if !converged {
            let tail: Vec<String> = trace.iter().rev().take(5).map(|v| format!("{v:.6}")).collect();
            return Err(Error::NoConvergence {
                iterations: MAX_ITERATIONS,
                trace: format!("weibull shape iterates (latest first): {}", tail.join(", ")),
            });
        }
        k
    };
    let mean_pow = ln_y.iter().map(|l| (k * l).exp()).sum::<f64>() / ln_y.len() as f64;
    let scale = x_max * mean_pow.powf(1.0 / k);
    let params = WeibullErrorParams::new(scale, k)?;
    let dist = Weibull::new(params);
    let loglik = x.iter().map(|v| dist.ln_pdf(*v)).sum();
    let mut fit = FitResult::new(params, loglik, errors.len());
    fit.diagnostics = diagnostics;
    Ok(fit)
}

/// One BisectArea trial in visual-angle units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionObservation {
    pub theta_median: f64,
    pub theta_mode: f64,
    pub response: f64,
}

pub fn bahp_loglik(obs: &[FusionObservation], params: &BahpParams) -> Result<f64> {
    obs.iter()
        .map(|o| Ok(bahp(o.theta_median, o.theta_mode, params)?.log_density(o.response)))
        .sum()
}

pub fn mixture_loglik(obs: &[FusionObservation], params: &MixtureParams) -> Result<f64> {
    obs.iter()
        .map(|o| Ok(mixture(o.theta_median, o.theta_mode, params)?.log_density(o.response)))
        .sum()
}

fn check_fusion_inputs(obs: &[FusionObservation], hp_fixed: &GaussianOpParams) -> Result<()> {
    if obs.len() < 3 {
        return Err(Error::invalid("fusion fits need at least 3 trials"));
    }
    hp_fixed.sigma()?;
    for o in obs {
        ensure_finite("fusion observation", &[o.theta_median, o.theta_mode, o.response])?;
    }
    Ok(())
}

fn ba_start(obs: &[FusionObservation]) -> (f64, f64) {
    let resid: Vec<f64> = obs.iter().map(|o| o.response - o.theta_median).collect();
    let m = mean(&resid);
    let sd = (resid.iter().map(|r| (r - m).powi(2)).sum::<f64>() / resid.len() as f64).sqrt();
    (m, sd.max(1e-3))
}

/// Fits the BisectArea bias and spread of the fused operator with the
/// HighestPoint parameters held fixed.
pub fn fit_bahp(obs: &[FusionObservation], hp_fixed: &GaussianOpParams) -> Result<FitResult<BahpParams>> {
    check_fusion_inputs(obs, hp_fixed)?;
    let make = |v: &[f64]| -> Result<BahpParams> {
        let sigma = v[1].exp().max(BA_SIGMA_FLOOR);
        BahpParams::new(GaussianOpParams::fixed(v[0], sigma)?, *hp_fixed)
    };
    let objective = |v: &[f64]| -> f64 {
        match make(v).and_then(|p| bahp_loglik(obs, &p)) {
            Ok(ll) if ll.is_finite() => -ll,
            _ => f64::INFINITY,
        }
    };
    let (b0, s0) = ba_start(obs);
    let mut x = vec![b0, s0.ln()];
    // Restarting from the previous optimum guards against a collapsed simplex.
    for _ in 0..3 {
        x = nelder_mead(objective, &x, 0.25, 1e-12, 4000)?.x;
    }
    let params = make(&x)?;
    let loglik = bahp_loglik(obs, &params)?;
    let mut fit = FitResult::new(params, loglik, obs.len());
    if params.ba.sigma()? <= BA_SIGMA_FLOOR * 1.0001 {
        fit.diagnostics.push("ba_sigma_at_floor".to_string());
    }
    let mean_w = mean(
        &obs.iter()
            .map(|o| crate::operators::bahp_weight(o.theta_mode, o.theta_median, &params))
            .collect::<Result<Vec<_>>>()?,
    );
    if mean_w < 0.25 {
        fit.diagnostics.push("ba_weakly_identified".to_string());
    }
    Ok(fit)
}

/// EM fit of the per-trial operator-selection mixture with the HighestPoint
/// component held fixed.
pub fn fit_mixture(obs: &[FusionObservation], hp_fixed: &GaussianOpParams) -> Result<FitResult<MixtureParams>> {
    check_fusion_inputs(obs, hp_fixed)?;
    let (mut beta, mut sigma) = ba_start(obs);
    let mut pi = 0.5;
    let build = |pi: f64, beta: f64, sigma: f64| {
        MixtureParams::new(pi, GaussianOpParams::fixed(beta, sigma)?, *hp_fixed)
    };
    let mut last = f64::NEG_INFINITY;
    let max_iter = 5000;
    for iter in 0..max_iter {
        let params = build(pi, beta, sigma)?;
        let mut resp = Vec::with_capacity(obs.len());
        let mut ll = 0.0;
        for o in obs {
            let m = mixture(o.theta_median, o.theta_mode, &params)?;
            resp.push(m.responsibility(o.response));
            ll += m.log_density(o.response);
        }
        if (ll - last).abs() <= 1e-10 * (1.0 + ll.abs()) {
            let mut fit = FitResult::new(params, ll, obs.len());
            if sigma <= BA_SIGMA_FLOOR {
                fit.diagnostics.push("ba_sigma_at_floor".to_string());
            }
            if pi < 1e-6 {
                fit.diagnostics.push("ba_weakly_identified".to_string());
            }
            return Ok(fit);
        }
        last = ll;
        let total: f64 = resp.iter().sum();
        pi = total / obs.len() as f64;
        if total > 1e-12 {
            beta = obs
                .iter()
                .zip(&resp)
                .map(|(o, r)| r * (o.response - o.theta_median))
                .sum::<f64>()
                / total;
            let var = obs
                .iter()
                .zip(&resp)
                .map(|(o, r)| r * (o.response - o.theta_median - beta).powi(2))
                .sum::<f64>()
                / total;
            sigma = var.sqrt().max(BA_SIGMA_FLOOR);
        }
        if iter + 1 == max_iter {
            // EM creeps towards a maximum on the boundary of the weight
            // range; the likelihood is flat there, so keep the last iterate.
            if pi.min(1.0 - pi) < 1e-3 {
                let params = build(pi, beta, sigma)?;
                let mut fit = FitResult::new(params, mixture_loglik(obs, &params)?, obs.len());
                fit.diagnostics.push("pi_at_boundary".to_string());
                return Ok(fit);
            }
            return Err(Error::NoConvergence {
                iterations: max_iter,
                trace: format!("mixture EM at pi={pi}, beta={beta}, sigma={sigma}, loglik={ll}"),
            });
        }
    }
    unreachable!("the loop returns on its last iteration")
}
