//! Calibration and fit diagnostics: randomized PIT, simultaneous ECDF
//! bands, interval coverage, error-versus-distance tables, and density
//! overlays. Every output is a plain table that serializes to CSV.

use std::io::Write;

use rand::RngCore;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, DiscreteCDF};

use crate::distributions::open_unit;
use crate::error::{Error, Result};
use crate::numeric::{mean, quantile_sorted, sample_variance, sorted_copy, Kde};
use crate::operators::ProjectionParams;
use crate::seed::{derive_seed, rng_from_seed};

pub const MIN_PIT_DRAWS: usize = 100;
pub const DEFAULT_LEVELS: [f64; 3] = [0.5, 0.8, 0.95];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PitMode {
    /// Ties with the observation are split by a uniform draw.
    #[default]
    Randomized,
    /// Ties count one half.
    Mid,
}

/// Probability integral transform of each observation under its draws.
pub fn pit_values<D: AsRef<[f64]>>(
    observed: &[f64],
    draws: &[D],
    mode: PitMode,
    rng: &mut dyn RngCore,
) -> Result<Vec<f64>> {
    if observed.len() != draws.len() {
        return Err(Error::invalid("observations and predictive draws are not aligned"));
    }
    observed
        .iter()
        .zip(draws)
        .map(|(&obs, d)| {
            let d = d.as_ref();
            if d.len() < MIN_PIT_DRAWS {
                return Err(Error::invalid(format!(
                    "PIT needs at least {MIN_PIT_DRAWS} draws per observation, got {}",
                    d.len()
                )));
            }
            let below = d.iter().filter(|&&v| v < obs).count() as f64;
            let equal = d.iter().filter(|&&v| v == obs).count() as f64;
            let u = match mode {
                PitMode::Randomized => open_unit(rng),
                PitMode::Mid => 0.5,
            };
            Ok((below + u * equal) / d.len() as f64)
        })
        .collect()
}

/// Simultaneous envelope for the ECDF of `n_obs` uniform values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcdfBand {
    pub n_obs: usize,
    pub alpha: f64,
    /// Calibrated pointwise level.
    pub gamma: f64,
    pub grid: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandRow {
    pub z: f64,
    pub lower: f64,
    pub upper: f64,
}

impl EcdfBand {
    /// True when the ECDF of `values` stays inside the band at every grid point.
    pub fn contains(&self, values: &[f64]) -> bool {
        let sorted = sorted_copy(values);
        let n = sorted.len() as f64;
        self.grid.iter().zip(self.lower.iter().zip(&self.upper)).all(|(&z, (&lo, &hi))| {
            let f = sorted.partition_point(|&v| v <= z) as f64 / n;
            f >= lo - 1e-12 && f <= hi + 1e-12
        })
    }

    pub fn rows(&self) -> Vec<BandRow> {
        self.grid
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(&z, (&lower, &upper))| BandRow { z, lower, upper })
            .collect()
    }
}

/// ECDF evaluation points for a sample of `n_obs` values.
fn band_grid(n_obs: usize) -> Vec<f64> {
    let k = n_obs.clamp(2, 200);
    (1..k).map(|i| i as f64 / k as f64).collect()
}

/// Binomial CDF tables `P(count <= c)` for each grid point.
fn binomial_tables(n_obs: usize, grid: &[f64]) -> Result<Vec<Vec<f64>>> {
    grid.iter()
        .map(|&z| {
            let b = Binomial::new(z, n_obs as u64).map_err(|e| Error::invalid(e.to_string()))?;
            Ok((0..=n_obs as u64).map(|c| b.cdf(c)).collect())
        })
        .collect()
}

/// Two-sided pointwise tail probability of `count` under a table.
fn tail_probability(table: &[f64], count: usize) -> f64 {
    let below = table[count];
    let above = if count == 0 { 1.0 } else { 1.0 - table[count - 1] };
    (2.0 * below.min(above)).min(1.0)
}

/// Simultaneous `1 - alpha` envelope for a PIT ECDF, calibrated by
/// simulating `n_sim` uniform samples of size `n_obs`.
///
/// For each simulated sample the smallest two-sided binomial tail
/// probability across the grid is recorded; the pointwise level `gamma` is
/// the `alpha` quantile of those minima.
pub fn pit_ecdf_band(n_obs: usize, alpha: f64, n_sim: usize, seed: u64) -> Result<EcdfBand> {
    if n_obs == 0 {
        return Err(Error::invalid("the band needs at least one observation"));
    }
    if n_sim < 1000 {
        return Err(Error::invalid(format!("band calibration needs at least 1000 simulations, got {n_sim}")));
    }
    if !(alpha > 0.0) {
        return Err(Error::domain("alpha must be positive"));
    }
    let grid = band_grid(n_obs);
    if alpha >= 1.0 {
        return Ok(EcdfBand {
            n_obs,
            alpha,
            gamma: 1.0,
            lower: grid.clone(),
            upper: grid.clone(),
            grid,
        });
    }
    let tables = binomial_tables(n_obs, &grid)?;
    let mut minima: Vec<f64> = (0..n_sim)
        .map(|s| {
            let mut rng = rng_from_seed(derive_seed(seed, "ecdf-band", s as u64));
            let sample: Vec<f64> = (0..n_obs).map(|_| open_unit(&mut rng)).collect();
            min_tail_probability(&sample, &grid, &tables)
        })
        .collect();
    minima.sort_by(f64::total_cmp);
    let gamma = quantile_sorted(&minima, alpha);
    let n = n_obs as f64;
    let mut lower = Vec::with_capacity(grid.len());
    let mut upper = Vec::with_capacity(grid.len());
    for table in &tables {
        let inside: Vec<usize> = (0..=n_obs).filter(|&c| tail_probability(table, c) >= gamma).collect();
        let (lo, hi) = match (inside.first(), inside.last()) {
            (Some(&a), Some(&b)) => (a, b),
            _ => {
                // Nothing clears gamma: keep the most probable count.
                let c = (0..=n_obs)
                    .max_by(|&a, &b| tail_probability(table, a).total_cmp(&tail_probability(table, b)))
                    .expect("non-empty");
                (c, c)
            }
        };
        lower.push(lo as f64 / n);
        upper.push(hi as f64 / n);
    }
    Ok(EcdfBand {
        n_obs,
        alpha,
        gamma,
        grid,
        lower,
        upper,
    })
}

fn min_tail_probability(sample: &[f64], grid: &[f64], tables: &[Vec<f64>]) -> f64 {
    let sorted = sorted_copy(sample);
    grid.iter()
        .zip(tables)
        .map(|(&z, table)| tail_probability(table, sorted.partition_point(|&v| v <= z)))
        .fold(1.0, f64::min)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub level: f64,
    pub coverage: f64,
    pub n: usize,
}

/// Fraction of observations inside the central interval of their draws at
/// each level.
pub fn interval_coverage<D: AsRef<[f64]>>(observed: &[f64], draws: &[D], levels: &[f64]) -> Result<Vec<CoverageRow>> {
    if observed.len() != draws.len() {
        return Err(Error::invalid("observations and predictive draws are not aligned"));
    }
    if levels.is_empty() {
        return Ok(Vec::new());
    }
    if let Some(l) = levels.iter().find(|l| !(**l > 0.0 && **l < 1.0)) {
        return Err(Error::domain(format!("coverage level {l} is outside (0, 1)")));
    }
    let mut hits = vec![0usize; levels.len()];
    for (&obs, d) in observed.iter().zip(draws) {
        if d.as_ref().is_empty() {
            return Err(Error::invalid("empty predictive draws"));
        }
        let sorted = sorted_copy(d.as_ref());
        for (hit, &level) in hits.iter_mut().zip(levels) {
            if inside_central(&sorted, level, obs) {
                *hit += 1;
            }
        }
    }
    Ok(levels
        .iter()
        .zip(hits)
        .map(|(&level, h)| CoverageRow {
            level,
            coverage: h as f64 / observed.len().max(1) as f64,
            n: observed.len(),
        })
        .collect())
}

/// Whether `x` lies in the central `level` interval of sorted draws.
pub fn inside_central(sorted: &[f64], level: f64, x: f64) -> bool {
    let lo = quantile_sorted(sorted, 0.5 - level / 2.0);
    let hi = quantile_sorted(sorted, 0.5 + level / 2.0);
    x >= lo && x <= hi
}

/// Empirical and model spread of projection errors in one distance bin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceBin {
    pub bin: usize,
    pub distance_lo: f64,
    pub distance_hi: f64,
    pub distance_mean: f64,
    pub n: usize,
    pub empirical_sd: f64,
    /// `alpha` times the root-mean-square distance in the bin.
    pub model_sd: f64,
    /// Set when the bin holds fewer than three points.
    pub sparse: bool,
}

/// Bins projection errors into `n_bins` equal-count distance bins and
/// compares their spread with the fitted `alpha * d` line.
pub fn error_distance_summary(
    errors: &[f64],
    distances: &[f64],
    params: &ProjectionParams,
    n_bins: usize,
) -> Result<Vec<DistanceBin>> {
    if errors.len() != distances.len() {
        return Err(Error::invalid("errors and distances differ in length"));
    }
    if n_bins == 0 || errors.is_empty() {
        return Err(Error::invalid("need at least one bin and one observation"));
    }
    let mut pairs: Vec<(f64, f64)> = distances.iter().copied().zip(errors.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = pairs.len();
    let bins = n_bins.min(n);
    Ok((0..bins)
        .map(|b| {
            let chunk = &pairs[b * n / bins..(b + 1) * n / bins];
            let d: Vec<f64> = chunk.iter().map(|p| p.0).collect();
            let e: Vec<f64> = chunk.iter().map(|p| p.1).collect();
            let rms_d = (d.iter().map(|v| v * v).sum::<f64>() / d.len() as f64).sqrt();
            DistanceBin {
                bin: b,
                distance_lo: d[0],
                distance_hi: d[d.len() - 1],
                distance_mean: mean(&d),
                n: chunk.len(),
                empirical_sd: if e.len() > 1 { sample_variance(&e).sqrt() } else { 0.0 },
                model_sd: params.alpha * rms_d,
                sparse: chunk.len() < 3,
            }
        })
        .collect())
}

/// One point of a density-overlay series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlayRow {
    pub series: String,
    pub x: f64,
    pub density: f64,
}

/// Observed KDE alongside one KDE per replicated data set, on a shared grid.
pub fn density_overlay<D: AsRef<[f64]>>(observed: &[f64], replicated: &[D], grid_points: usize) -> Result<Vec<OverlayRow>> {
    if observed.len() < 2 || grid_points < 2 {
        return Err(Error::invalid("density overlay needs two observations and two grid points"));
    }
    let all = observed
        .iter()
        .chain(replicated.iter().flat_map(|r| r.as_ref().iter()))
        .copied();
    let (lo, hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let pad = 0.1 * (hi - lo).max(1e-9);
    let grid: Vec<f64> = (0..grid_points)
        .map(|i| lo - pad + (hi - lo + 2.0 * pad) * i as f64 / (grid_points - 1) as f64)
        .collect();
    let mut rows = Vec::new();
    let mut push = |name: String, data: &[f64]| {
        let kde = Kde::new(data);
        for &x in &grid {
            rows.push(OverlayRow {
                series: name.clone(),
                x,
                density: kde.log_density(x).exp(),
            });
        }
    };
    push("observed".to_string(), observed);
    for (i, r) in replicated.iter().enumerate() {
        if r.as_ref().len() >= 2 {
            push(format!("replicate_{i}"), r.as_ref());
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PitRow {
    pub index: usize,
    pub pit: f64,
}

/// Writes serializable rows as CSV with a header, LF line endings.
pub fn write_csv<W: Write, T: Serialize>(writer: W, rows: &[T]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::{Gaussian, UnivariateDistribution};
    use crate::numeric::ks_test;

    fn gaussian_draws(n: usize, seed: u64) -> Vec<f64> {
        let g = Gaussian::new(0.0, 1.0).unwrap();
        let mut rng = rng_from_seed(seed);
        (0..n).map(|_| g.sample(&mut rng)).collect()
    }

    #[test]
    fn pit_extremes() {
        let draws = vec![gaussian_draws(1000, 1)];
        let mut rng = rng_from_seed(2);
        assert!(pit_values(&[-100.0], &draws, PitMode::Randomized, &mut rng).unwrap()[0] < 1e-12);
        let med = quantile_sorted(&sorted_copy(&draws[0]), 0.5);
        let p = pit_values(&[med], &draws, PitMode::Mid, &mut rng).unwrap()[0];
        assert!((p - 0.5).abs() < 0.002);
        assert!(pit_values(&[0.0], &[vec![0.0; 99]], PitMode::Mid, &mut rng).is_err());
    }

    #[test]
    fn pit_of_self_simulated_data_is_uniform() {
        let mut rng = rng_from_seed(3);
        let g = Gaussian::new(0.0, 1.0).unwrap();
        let mut passes = 0;
        for rep in 0..20 {
            let draws: Vec<Vec<f64>> = (0..200).map(|i| gaussian_draws(200, 1000 * rep + i)).collect();
            let obs: Vec<f64> = (0..200).map(|_| g.sample(&mut rng)).collect();
            let pits = pit_values(&obs, &draws, PitMode::Randomized, &mut rng).unwrap();
            if ks_test(&pits, |u| u.clamp(0.0, 1.0)) > 0.01 {
                passes += 1;
            }
        }
        assert!(passes >= 18);
    }

    #[test]
    fn ties_are_randomized() {
        let draws = vec![vec![1.0; 200]];
        let mut rng = rng_from_seed(4);
        let ps: Vec<f64> = (0..100)
            .map(|_| pit_values(&[1.0], &draws, PitMode::Randomized, &mut rng).unwrap()[0])
            .collect();
        assert!(ps.iter().any(|&p| p < 0.3) && ps.iter().any(|&p| p > 0.7));
    }

    #[test]
    fn band_limits_and_width() {
        let degenerate = pit_ecdf_band(50, 1.0, 1000, 1).unwrap();
        assert_eq!(degenerate.lower, degenerate.grid);
        assert_eq!(degenerate.upper, degenerate.grid);
        let width = |b: &EcdfBand| mean(&b.upper.iter().zip(&b.lower).map(|(u, l)| u - l).collect::<Vec<_>>());
        let small = pit_ecdf_band(50, 0.05, 1000, 2).unwrap();
        let large = pit_ecdf_band(500, 0.05, 1000, 2).unwrap();
        assert!(width(&large) < width(&small));
        assert!(pit_ecdf_band(50, 0.05, 999, 2).is_err());
    }

    #[test]
    fn band_coverage_is_near_nominal() {
        let band = pit_ecdf_band(100, 0.05, 2000, 5).unwrap();
        let mut inside = 0;
        let trials = 2000;
        for s in 0..trials {
            let mut rng = rng_from_seed(derive_seed(77, "check", s));
            let u: Vec<f64> = (0..100).map(|_| open_unit(&mut rng)).collect();
            if band.contains(&u) {
                inside += 1;
            }
        }
        let cov = inside as f64 / trials as f64;
        assert!((cov - 0.95).abs() < 0.02, "{cov}");
    }

    #[test]
    fn coverage_cases() {
        let draws = vec![gaussian_draws(1000, 6)];
        let med = quantile_sorted(&sorted_copy(&draws[0]), 0.5);
        let rows = interval_coverage(&[med], &draws, &DEFAULT_LEVELS).unwrap();
        assert!(rows.iter().all(|r| r.coverage == 1.0));
        assert!(interval_coverage(&[med], &draws, &[]).unwrap().is_empty());
        let g = Gaussian::new(0.0, 1.0).unwrap();
        let mut rng = rng_from_seed(7);
        let n = 2000;
        let obs: Vec<f64> = (0..n).map(|_| g.sample(&mut rng)).collect();
        let all: Vec<Vec<f64>> = (0..n).map(|i| gaussian_draws(400, 10_000 + i as u64)).collect();
        for r in interval_coverage(&obs, &all, &DEFAULT_LEVELS).unwrap() {
            assert!((r.coverage - r.level).abs() < 0.03, "{r:?}");
        }
    }

    #[test]
    fn distance_bins() {
        let p = ProjectionParams::new(0.1, 0.05).unwrap();
        let mut rng = rng_from_seed(8);
        let n = 500;
        let d: Vec<f64> = (0..n).map(|_| 1.0 + 12.0 * open_unit(&mut rng)).collect();
        let e: Vec<f64> = d
            .iter()
            .map(|&di| Gaussian::new(0.1, 0.05 * di).unwrap().sample(&mut rng))
            .collect();
        let bins = error_distance_summary(&e, &d, &p, 5).unwrap();
        assert_eq!(bins.len(), 5);
        for w in bins.windows(2) {
            assert!(w[0].distance_hi <= w[1].distance_lo);
        }
        for b in &bins {
            assert!((b.empirical_sd / b.model_sd - 1.0).abs() < 0.2, "{b:?}");
            assert!(!b.sparse);
        }
        let zero = error_distance_summary(&[0.1; 20], &d[..20], &p, 4).unwrap();
        assert!(zero.iter().all(|b| b.empirical_sd < 1e-15));
        let sparse = error_distance_summary(&e[..4], &d[..4], &p, 2).unwrap();
        assert!(sparse.iter().all(|b| b.sparse));
    }

    #[test]
    fn overlay_has_all_series() {
        let obs = gaussian_draws(50, 9);
        let reps = vec![gaussian_draws(50, 10), gaussian_draws(50, 11)];
        let rows = density_overlay(&obs, &reps, 64).unwrap();
        assert_eq!(rows.len(), 3 * 64);
        let mut buf = Vec::new();
        write_csv(&mut buf, &rows).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("series,x,density\n"));
    }
}
