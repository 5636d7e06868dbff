//! Exact leave-one-out comparison of candidate error families.

use serde::{Deserialize, Serialize};

use super::mle::{fit_weibull_error, prepare_nonnegative, ERROR_FLOOR};
use crate::distributions::{Exponential, Gaussian, Laplace, LogNormal, UnivariateDistribution, Weibull};
use crate::error::{Error, Result};
use crate::numeric::{mean, median_in_place};

/// Largest sample the exact refit-per-point comparison accepts.
pub const LOO_MAX_N: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorFamily {
    Weibull,
    Exponential,
    Gaussian,
    LogNormal,
    Laplace,
}

impl ErrorFamily {
    /// The default candidate set.
    pub const CANDIDATES: [ErrorFamily; 4] = [
        ErrorFamily::Weibull,
        ErrorFamily::Exponential,
        ErrorFamily::Gaussian,
        ErrorFamily::LogNormal,
    ];

    /// Maximum-likelihood fit of the family to `xs`.
    pub fn fit(self, xs: &[f64]) -> Result<Box<dyn UnivariateDistribution>> {
        let n = xs.len() as f64;
        let spread = |c: f64| (xs.iter().map(|x| (x - c).powi(2)).sum::<f64>() / n).sqrt();
        Ok(match self {
            ErrorFamily::Weibull => Box::new(Weibull::new(fit_weibull_error(xs)?.params)),
            ErrorFamily::Exponential => {
                let m = mean(&prepare_nonnegative(xs)?);
                Box::new(Exponential { rate: 1.0 / m })
            }
            ErrorFamily::Gaussian => {
                let m = mean(xs);
                Box::new(Gaussian::new(m, spread(m))?)
            }
            ErrorFamily::LogNormal => {
                let logs: Vec<f64> = prepare_nonnegative(xs)?.iter().map(|x| x.ln()).collect();
                let m = mean(&logs);
                let sd = (logs.iter().map(|l| (l - m).powi(2)).sum::<f64>() / n).sqrt();
                if !(sd > 0.0) {
                    return Err(Error::domain("log-normal fit needs spread in the logs"));
                }
                Box::new(LogNormal { mu: m, sigma: sd })
            }
            ErrorFamily::Laplace => {
                let mut v = xs.to_vec();
                let location = median_in_place(&mut v);
                let scale = xs.iter().map(|x| (x - location).abs()).sum::<f64>() / n;
                if !(scale > 0.0) {
                    return Err(Error::domain("laplace fit needs spread"));
                }
                Box::new(Laplace { location, scale })
            }
        })
    }

    fn evaluates_on_floor(self) -> bool {
        matches!(
            self,
            ErrorFamily::Weibull | ErrorFamily::Exponential | ErrorFamily::LogNormal
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LooResult {
    pub family: ErrorFamily,
    /// Sum of held-out log densities; `None` when a fold fit failed.
    pub loo_loglik: Option<f64>,
    pub failure: Option<String>,
}

/// Ranks families by exact leave-one-out log predictive density, best first.
/// Families whose fit fails on any fold are kept at the end, unranked.
pub fn loo_compare(errors: &[f64], families: &[ErrorFamily]) -> Result<Vec<LooResult>> {
    if errors.len() > LOO_MAX_N {
        return Err(Error::invalid(format!(
            "exact LOO is limited to {LOO_MAX_N} points, got {}",
            errors.len()
        )));
    }
    if errors.len() < 3 {
        return Err(Error::invalid("LOO needs at least 3 points"));
    }
    let mut results: Vec<LooResult> = families
        .iter()
        .map(|&family| match loo_family(errors, family) {
            Ok(v) => LooResult {
                family,
                loo_loglik: Some(v),
                failure: None,
            },
            Err(e) => LooResult {
                family,
                loo_loglik: None,
                failure: Some(e.to_string()),
            },
        })
        .collect();
    results.sort_by(|a, b| match (a.loo_loglik, b.loo_loglik) {
        (Some(x), Some(y)) => y.total_cmp(&x),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => std::cmp::Ordering::Equal,
    });
    Ok(results)
}

fn loo_family(errors: &[f64], family: ErrorFamily) -> Result<f64> {
    let mut total = 0.0;
    let mut rest = Vec::with_capacity(errors.len() - 1);
    for i in 0..errors.len() {
        rest.clear();
        rest.extend(errors.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, v)| *v));
        let dist = family.fit(&rest)?;
        let x = if family.evaluates_on_floor() {
            errors[i].max(ERROR_FLOOR)
        } else {
            errors[i]
        };
        total += dist.ln_pdf(x);
    }
    if total.is_finite() {
        Ok(total)
    } else {
        Err(Error::domain("held-out log density is not finite"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::WeibullErrorParams;
    use crate::seed::rng_from_seed;

    fn sample(d: &dyn UnivariateDistribution, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = rng_from_seed(seed);
        (0..n).map(|_| d.sample(&mut rng)).collect()
    }

    fn score(r: &[LooResult], f: ErrorFamily) -> f64 {
        r.iter().find(|x| x.family == f).unwrap().loo_loglik.unwrap()
    }

    #[test]
    fn exponential_data_nests_in_weibull() {
        let xs = sample(&Exponential { rate: 1.3 }, 160, 1);
        let r = loo_compare(&xs, &ErrorFamily::CANDIDATES).unwrap();
        assert!((score(&r, ErrorFamily::Weibull) - score(&r, ErrorFamily::Exponential)).abs() < 2.0);
    }

    #[test]
    fn weibull_beats_gaussian() {
        let w = Weibull::new(WeibullErrorParams::new(1.0, 1.5).unwrap());
        let mut wins = 0;
        for rep in 0..30 {
            let xs = sample(&w, 160, 10 + rep);
            let r = loo_compare(&xs, &[ErrorFamily::Gaussian, ErrorFamily::Weibull]).unwrap();
            if r[0].family == ErrorFamily::Weibull {
                wins += 1;
            }
        }
        assert!(wins >= 27, "{wins}");
    }

    #[test]
    fn singleton_and_permutation() {
        let xs = sample(&Exponential { rate: 2.0 }, 40, 3);
        let r = loo_compare(&xs, &[ErrorFamily::Gaussian]).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].family, ErrorFamily::Gaussian);
        let mut ys = xs.clone();
        ys.reverse();
        let a = loo_compare(&xs, &ErrorFamily::CANDIDATES).unwrap();
        let b = loo_compare(&ys, &ErrorFamily::CANDIDATES).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.family, y.family);
            assert!((x.loo_loglik.unwrap() - y.loo_loglik.unwrap()).abs() < 1e-8);
        }
    }

    #[test]
    fn failing_families_are_kept_unranked() {
        let xs = vec![-1.0, 0.5, 0.2, 1.0, 0.3];
        let r = loo_compare(&xs, &[ErrorFamily::Weibull, ErrorFamily::Gaussian]).unwrap();
        assert_eq!(r[0].family, ErrorFamily::Gaussian);
        assert!(r[1].loo_loglik.is_none() && r[1].failure.is_some());
        assert!(loo_compare(&vec![1.0; 501], &[ErrorFamily::Gaussian]).is_err());
    }
}
