//! Mean estimation in scatterplots by composing projection operators.
//!
//! A reader estimating the mean y-value can project every point straight to
//! the y-axis (`once`) or first to a vertical reference line at the x-domain
//! midpoint and then project the aggregate to the axis (`twice`). The
//! projected values are combined by mean, median, or an inverse-MSE weighted
//! mean. Each combination yields a predictive distribution built from
//! projection parameters learned elsewhere, with no refitting.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::inside_central;
use crate::numeric::{mean, median_in_place, quantile_sorted, sample_variance, sorted_copy, Kde};
use crate::operators::ProjectionParams;
use crate::perceptual_space::{Axis, ViewingContext};
use crate::seed::{derive_seed_str, SimRng};

/// Points in every scatter stimulus.
pub const SCATTER_POINTS: usize = 60;
/// Fewest draws for which a summary is reported.
pub const MIN_SUMMARY_DRAWS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionPath {
    Once,
    Twice,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    Mean,
    Median,
    WeightedMean,
}

impl Aggregation {
    pub const ALL: [Aggregation; 3] = [Aggregation::Mean, Aggregation::Median, Aggregation::WeightedMean];

    fn tag(self) -> &'static str {
        match self {
            Aggregation::Mean => "mean",
            Aggregation::Median => "median",
            Aggregation::WeightedMean => "weighted",
        }
    }
}

impl ProjectionPath {
    pub const ALL: [ProjectionPath; 2] = [ProjectionPath::Once, ProjectionPath::Twice];

    fn tag(self) -> &'static str {
        match self {
            ProjectionPath::Once => "once",
            ProjectionPath::Twice => "twice",
        }
    }
}

/// One of the six path × aggregation strategies, written `once:mean`,
/// `twice:weighted`, and so on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Strategy {
    pub path: ProjectionPath,
    pub agg: Aggregation,
}

impl Strategy {
    pub const ALL: [Strategy; 6] = [
        Strategy::new(ProjectionPath::Once, Aggregation::Mean),
        Strategy::new(ProjectionPath::Once, Aggregation::Median),
        Strategy::new(ProjectionPath::Once, Aggregation::WeightedMean),
        Strategy::new(ProjectionPath::Twice, Aggregation::Mean),
        Strategy::new(ProjectionPath::Twice, Aggregation::Median),
        Strategy::new(ProjectionPath::Twice, Aggregation::WeightedMean),
    ];

    pub const fn new(path: ProjectionPath, agg: Aggregation) -> Self {
        Self { path, agg }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.path.tag(), self.agg.tag())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (p, a) = s
            .split_once(':')
            .ok_or_else(|| Error::invalid(format!("strategy `{s}` is not of the form path:aggregation")))?;
        let path = match p {
            "once" => ProjectionPath::Once,
            "twice" => ProjectionPath::Twice,
            _ => return Err(Error::invalid(format!("unknown projection path `{p}`; expected once or twice"))),
        };
        let agg = match a {
            "mean" => Aggregation::Mean,
            "median" => Aggregation::Median,
            "weighted" => Aggregation::WeightedMean,
            _ => {
                return Err(Error::invalid(format!(
                    "unknown aggregation `{a}`; expected mean, median or weighted"
                )))
            }
        };
        Ok(Strategy { path, agg })
    }
}

impl Serialize for Strategy {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Strategy {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScatterPoint {
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mark {
    #[serde(rename = "point")]
    Point,
    #[serde(rename = "pointArc")]
    PointArc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoisePosition {
    Upper,
    Lower,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScatterCondition {
    pub mark: Mark,
    pub variability: f64,
    pub position: NoisePosition,
    pub seed: u64,
}

/// A 60-point scatterplot whose mean y-value the reader estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterStimulus {
    pub id: String,
    pub condition: ScatterCondition,
    pub points: Vec<ScatterPoint>,
    pub true_mean: f64,
}

impl ScatterStimulus {
    /// Builds a stimulus, computing its true mean from the points.
    pub fn new(id: impl Into<String>, condition: ScatterCondition, points: Vec<ScatterPoint>) -> Result<Self> {
        let true_mean = mean(&points.iter().map(|p| p.y).collect::<Vec<_>>());
        let s = Self {
            id: id.into(),
            condition,
            points,
            true_mean,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.len() != SCATTER_POINTS {
            return Err(Error::schema(
                format!("{}.points", self.id),
                format!("expected {SCATTER_POINTS} points, found {}", self.points.len()),
            ));
        }
        if let Some(i) = self.points.iter().position(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(Error::schema(format!("{}.points[{i}]", self.id), "non-finite coordinate"));
        }
        if self.condition.mark == Mark::Point {
            if let Some(i) = self.points.windows(2).position(|w| w[1].x <= w[0].x) {
                return Err(Error::schema(
                    format!("{}.points[{}]", self.id, i + 1),
                    "x must be strictly increasing",
                ));
            }
        }
        Ok(())
    }

    /// Midpoint of the stimulus' x-domain, where the reference line sits.
    pub fn midpoint(&self) -> f64 {
        let (lo, hi) = self
            .points
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.x), b.max(p.x)));
        0.5 * (lo + hi)
    }
}

/// Predicted responses in data units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictiveDistribution {
    pub draws: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictiveSummary {
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub q10: f64,
    pub q25: f64,
    pub q50: f64,
    pub q75: f64,
    pub q90: f64,
    pub q975: f64,
}

impl PredictiveDistribution {
    pub fn summary(&self) -> Result<PredictiveSummary> {
        if self.draws.len() < MIN_SUMMARY_DRAWS {
            return Err(Error::invalid(format!(
                "summaries need at least {MIN_SUMMARY_DRAWS} draws, got {}",
                self.draws.len()
            )));
        }
        let s = sorted_copy(&self.draws);
        let q = |p| quantile_sorted(&s, p);
        Ok(PredictiveSummary {
            mean: mean(&self.draws),
            sd: sample_variance(&self.draws).sqrt(),
            q025: q(0.025),
            q10: q(0.10),
            q25: q(0.25),
            q50: q(0.50),
            q75: q(0.75),
            q90: q(0.90),
            q975: q(0.975),
        })
    }
}

/// Per-point inputs of one projection path, in visual angle.
struct PathGeometry {
    theta: Vec<f64>,
    distance: Vec<f64>,
    /// Distance of the second projection, for the twice path.
    second: Option<f64>,
}

fn geometry(stim: &ScatterStimulus, ctx: &ViewingContext, path: ProjectionPath) -> Result<PathGeometry> {
    let theta = stim
        .points
        .iter()
        .map(|p| ctx.value_to_va(p.y, Axis::Y))
        .collect::<Result<Vec<_>>>()?;
    Ok(match path {
        ProjectionPath::Once => PathGeometry {
            theta,
            distance: stim
                .points
                .iter()
                .map(|p| ctx.value_to_va(p.x, Axis::X).map(f64::abs))
                .collect::<Result<_>>()?,
            second: None,
        },
        ProjectionPath::Twice => {
            let m = stim.midpoint();
            PathGeometry {
                theta,
                distance: stim
                    .points
                    .iter()
                    .map(|p| ctx.data_to_va((p.x - m).abs(), Axis::X))
                    .collect::<Result<_>>()?,
                second: Some(ctx.value_to_va(m, Axis::X)?.abs()),
            }
        }
    })
}

/// Normalized inverse-MSE weights; points with zero MSE take all the weight.
fn inverse_mse_weights(distance: &[f64], proj: &ProjectionParams) -> Vec<f64> {
    let mse: Vec<f64> = distance
        .iter()
        .map(|d| proj.beta * proj.beta + (proj.alpha * d).powi(2))
        .collect();
    let exact = mse.iter().filter(|&&m| m == 0.0).count();
    let raw: Vec<f64> = if exact > 0 {
        mse.iter().map(|&m| if m == 0.0 { 1.0 } else { 0.0 }).collect()
    } else {
        mse.iter().map(|m| 1.0 / m).collect()
    };
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

/// Draws for all three aggregations along one path, sharing projection noise.
///
/// Each draw uses its own ChaCha stream of a generator keyed by the seed,
/// the stimulus, and the path, so draw `k` does not depend on how many
/// draws are requested or in which order they are produced.
fn path_draws(
    stim: &ScatterStimulus,
    ctx: &ViewingContext,
    proj: &ProjectionParams,
    path: ProjectionPath,
    n_draws: usize,
    seed: u64,
) -> Result<[Vec<f64>; 3]> {
    if n_draws == 0 {
        return Err(Error::invalid("at least one draw is required"));
    }
    stim.validate()?;
    let g = geometry(stim, ctx, path)?;
    let weights = inverse_mse_weights(&g.distance, proj);
    let key = derive_seed_str(seed, "predict", &format!("{}/{}", stim.id, path.tag()));
    let mut out = [
        Vec::with_capacity(n_draws),
        Vec::with_capacity(n_draws),
        Vec::with_capacity(n_draws),
    ];
    let mut projected = vec![0.0; g.theta.len()];
    for k in 0..n_draws {
        let mut rng = SimRng::seed_from_u64(key);
        rng.set_stream(k as u64);
        for ((v, &t), &d) in projected.iter_mut().zip(&g.theta).zip(&g.distance) {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v = t + proj.beta + proj.alpha * d * z;
        }
        let second_noise = match g.second {
            Some(d) => {
                let z: f64 = StandardNormal.sample(&mut rng);
                Some(proj.beta + proj.alpha * d * z)
            }
            None => None,
        };
        let weighted: f64 = projected.iter().zip(&weights).map(|(v, w)| v * w).sum();
        let aggregates = [mean(&projected), median_in_place(&mut projected.clone()), weighted];
        for (slot, a) in out.iter_mut().zip(aggregates) {
            let va = a + second_noise.unwrap_or(0.0);
            slot.push(ctx.va_to_value(va, Axis::Y)?);
        }
    }
    Ok(out)
}

fn agg_index(agg: Aggregation) -> usize {
    match agg {
        Aggregation::Mean => 0,
        Aggregation::Median => 1,
        Aggregation::WeightedMean => 2,
    }
}

/// Predictive distribution of a mean-estimation response under `strategy`.
///
/// The draws are identical to the matching entry of
/// [`predict_all_strategies`] for the same seed.
pub fn predict_mean_estimate(
    stim: &ScatterStimulus,
    ctx: &ViewingContext,
    proj: &ProjectionParams,
    strategy: Strategy,
    n_draws: usize,
    seed: u64,
) -> Result<PredictiveDistribution> {
    let mut all = path_draws(stim, ctx, proj, strategy.path, n_draws, seed)?;
    Ok(PredictiveDistribution {
        draws: std::mem::take(&mut all[agg_index(strategy.agg)]),
    })
}

/// Predictions for all six strategies, in [`Strategy::ALL`] order.
pub fn predict_all_strategies(
    stim: &ScatterStimulus,
    ctx: &ViewingContext,
    proj: &ProjectionParams,
    n_draws: usize,
    seed: u64,
) -> Result<Vec<(Strategy, PredictiveDistribution)>> {
    let mut out = Vec::with_capacity(6);
    for path in ProjectionPath::ALL {
        let draws = path_draws(stim, ctx, proj, path, n_draws, seed)?;
        for (agg, d) in Aggregation::ALL.into_iter().zip(draws) {
            out.push((Strategy::new(path, agg), PredictiveDistribution { draws: d }));
        }
    }
    Ok(out)
}

/// How well one strategy's predictions account for the observed responses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyScore {
    pub strategy: String,
    pub mean_log_density: f64,
    /// `(level, fraction inside the central interval)` pairs.
    pub coverage: Vec<(f64, f64)>,
    /// Competition rank by mean log density; equal scores share a rank.
    pub rank: usize,
}

/// Scores strategies by kernel density of each observation under its draws.
///
/// `predictions` holds, per strategy, one draw set per observation.
pub fn compare_strategies<D: AsRef<[f64]>>(
    observed: &[f64],
    predictions: &[(String, Vec<D>)],
    levels: &[f64],
) -> Result<Vec<StrategyScore>> {
    let prepared = predictions
        .iter()
        .map(|(name, sets)| {
            let kdes = sets
                .iter()
                .map(|d| {
                    if d.as_ref().is_empty() {
                        Err(Error::invalid(format!("strategy `{name}` has an empty draw set")))
                    } else {
                        Ok(Kde::new(d.as_ref()))
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((name.clone(), kdes))
        })
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<(String, Vec<&Kde>)> = prepared
        .iter()
        .map(|(n, k)| (n.clone(), k.iter().collect()))
        .collect();
    compare_strategies_prepared(observed, &refs, levels)
}

/// [`compare_strategies`] over density estimates built once and reused.
pub fn compare_strategies_prepared(
    observed: &[f64],
    predictions: &[(String, Vec<&Kde>)],
    levels: &[f64],
) -> Result<Vec<StrategyScore>> {
    if observed.is_empty() {
        return Err(Error::invalid("no observations to score"));
    }
    let mut scores = Vec::with_capacity(predictions.len());
    for (name, kdes) in predictions {
        if kdes.len() != observed.len() {
            return Err(Error::invalid(format!(
                "strategy `{name}` has {} draw sets for {} observations",
                kdes.len(),
                observed.len()
            )));
        }
        let mut total = 0.0;
        let mut hits = vec![0usize; levels.len()];
        for (&obs, kde) in observed.iter().zip(kdes) {
            if kde.sorted().is_empty() {
                return Err(Error::invalid(format!("strategy `{name}` has an empty draw set")));
            }
            total += kde.log_density(obs);
            for (h, &l) in hits.iter_mut().zip(levels) {
                if inside_central(kde.sorted(), l, obs) {
                    *h += 1;
                }
            }
        }
        let n = observed.len() as f64;
        scores.push(StrategyScore {
            strategy: name.clone(),
            mean_log_density: total / n,
            coverage: levels.iter().zip(hits).map(|(&l, h)| (l, h as f64 / n)).collect(),
            rank: 0,
        });
    }
    let values: Vec<f64> = scores.iter().map(|s| s.mean_log_density).collect();
    for (s, v) in scores.iter_mut().zip(&values) {
        s.rank = 1 + values.iter().filter(|&&o| o > *v).count();
    }
    Ok(scores)
}
