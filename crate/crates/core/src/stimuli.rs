//! Stimulus generation and stimulus files.
//!
//! Three kinds of stimuli are produced: SGT curves for the curve-reading
//! tasks, 60-point geometric-Brownian scatter series for mean estimation,
//! and uniformly placed dots for the axis-projection task. Each kind is
//! stored in a JSON file tagged with its kind and the chart it is shown on.

use std::io::{Read, Write};

use rand::{Rng, RngCore};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::composition::{
    Mark, NoisePosition, ScatterCondition, ScatterPoint, ScatterStimulus, SCATTER_POINTS,
};
use crate::curves::{CurveKind, StimulusCurve, TruthValues};
use crate::distributions::SgtPrior;
use crate::error::{Error, Result};
use crate::numeric::mean;
use crate::perceptual_space::{ViewingContext, DEFAULT_DISTANCE_CM, DEFAULT_PX_PER_CM};
use crate::seed::{derive_seed, rng_from_seed};

/// Allowed gap between a stored and a recomputed scatter mean.
pub const MEAN_TOLERANCE: f64 = 1e-9;

/// An SGT curve with its ground-truth answers.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SgtStimulus {
    pub id: String,
    pub curve: StimulusCurve,
    pub truth: TruthValues,
}

/// A dot whose position the reader projects to an axis, in data units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DotStimulus {
    pub id: usize,
    pub x: f64,
    pub y: f64,
}

/// A stimulus file: the chart the stimuli are shown on and the stimuli.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum StimulusFile {
    Sgt {
        context: ViewingContext,
        stimuli: Vec<SgtStimulus>,
    },
    Gbm {
        context: ViewingContext,
        stimuli: Vec<ScatterStimulus>,
    },
    Dots {
        context: ViewingContext,
        stimuli: Vec<DotStimulus>,
    },
}

impl StimulusFile {
    pub fn context(&self) -> &ViewingContext {
        match self {
            StimulusFile::Sgt { context, .. }
            | StimulusFile::Gbm { context, .. }
            | StimulusFile::Dots { context, .. } => context,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            StimulusFile::Sgt { stimuli, .. } => stimuli.len(),
            StimulusFile::Gbm { stimuli, .. } => stimuli.len(),
            StimulusFile::Dots { stimuli, .. } => stimuli.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Reads a stimulus file of any kind. Scatter files may also be a bare
    /// array of stimuli, as exported by the original experiment code.
    pub fn read<R: Read>(reader: R) -> Result<(Self, Vec<String>)> {
        let value: Value = serde_json::from_reader(reader)?;
        let kind = value.get("kind").and_then(Value::as_str);
        match kind {
            Some("sgt") => {
                let file: StimulusFile = serde_json::from_value(value)
                    .map_err(|e| Error::schema("stimuli", e.to_string()))?;
                if file.is_empty() {
                    return Err(Error::schema("stimuli", "no stimuli"));
                }
                Ok((file, Vec::new()))
            }
            Some("dots") => {
                let file: StimulusFile = serde_json::from_value(value)
                    .map_err(|e| Error::schema("stimuli", e.to_string()))?;
                if file.is_empty() {
                    return Err(Error::schema("stimuli", "no stimuli"));
                }
                Ok((file, Vec::new()))
            }
            Some("gbm") | None => {
                let context = match value.get("context") {
                    Some(c) => serde_json::from_value(c.clone())
                        .map_err(|e| Error::schema("context", e.to_string()))?,
                    None => default_scatter_context()?,
                };
                let (stimuli, warnings) = parse_scatter(&value)?;
                Ok((StimulusFile::Gbm { context, stimuli }, warnings))
            }
            Some(other) => Err(Error::schema("kind", format!("unknown stimulus kind `{other}`"))),
        }
    }

    pub fn write<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = writer;
        serde_json::to_writer_pretty(&mut w, self)?;
        w.write_all(b"\n")?;
        Ok(())
    }
}

/// The 500×200 px scatter chart, x ∈ [0, 61], y ∈ [0, 100].
pub fn default_scatter_context() -> Result<ViewingContext> {
    ViewingContext::scatter_chart(DEFAULT_DISTANCE_CM, DEFAULT_PX_PER_CM, (0.0, 61.0), (0.0, 100.0))
}

/// Draws a displayable SGT and builds the stimulus and its truths.
///
/// Returns the number of rejected parameter draws alongside the stimulus.
pub fn gen_sgt_stimulus(
    rng: &mut dyn RngCore,
    id: impl Into<String>,
    kind: CurveKind,
    ctx: &ViewingContext,
    prior: &SgtPrior,
) -> Result<(SgtStimulus, usize)> {
    let (params, rejected) = prior.sample_counted(rng)?;
    let curve = StimulusCurve::new(params, kind)?;
    let truth = curve.ground_truth(ctx)?;
    Ok((
        SgtStimulus {
            id: id.into(),
            curve,
            truth,
        },
        rejected,
    ))
}

/// `n` SGT stimuli with ids `sgt_000`, `sgt_001`, ..., each from its own
/// derived generator.
pub fn gen_sgt_set(seed: u64, n: usize, kind: CurveKind, ctx: &ViewingContext) -> Result<Vec<SgtStimulus>> {
    let prior = SgtPrior::default();
    (0..n)
        .map(|i| {
            let mut rng = rng_from_seed(derive_seed(seed, "sgt-stimulus", i as u64));
            gen_sgt_stimulus(&mut rng, format!("sgt_{i:03}"), kind, ctx, &prior).map(|(s, _)| s)
        })
        .collect()
}

/// Geometric-Brownian scatter series settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbmConfig {
    pub drift: f64,
    pub volatility: f64,
    /// The walk is rescaled to span this band of the y axis.
    pub band: (f64, f64),
    /// Noise SD, in y data units, where the interpolated amplitude is 1.
    pub noise_scale: f64,
}

impl Default for GbmConfig {
    fn default() -> Self {
        Self {
            drift: 0.0,
            volatility: 0.1,
            band: (20.0, 80.0),
            noise_scale: 25.0,
        }
    }
}

/// Noise amplitude at base rank `u` in [0, 1] of the walk's range: zero
/// over the quiet half, rising linearly to `variability` at the noisy end.
pub fn noise_amplitude(u: f64, variability: f64, position: NoisePosition) -> f64 {
    let t = match position {
        NoisePosition::Upper => (u - 0.5) / 0.5,
        NoisePosition::Lower => (0.5 - u) / 0.5,
    };
    variability * t.clamp(0.0, 1.0)
}

/// A 60-point series: a geometric Brownian walk rescaled into the band,
/// plus Gaussian noise whose amplitude depends on the base value.
///
/// The walk is drawn before the noise, so two calls with equally seeded
/// generators share the walk whatever the condition.
pub fn gen_gbm_series(
    rng: &mut dyn RngCore,
    id: impl Into<String>,
    condition: ScatterCondition,
    config: &GbmConfig,
) -> Result<ScatterStimulus> {
    if !(condition.variability >= 0.0) {
        return Err(Error::domain("variability must be non-negative"));
    }
    let step_mean = config.drift - 0.5 * config.volatility * config.volatility;
    let mut level: f64 = 1.0;
    let mut walk = Vec::with_capacity(SCATTER_POINTS);
    for _ in 0..SCATTER_POINTS {
        walk.push(level);
        let z: f64 = StandardNormal.sample(rng);
        level *= (step_mean + config.volatility * z).exp();
    }
    let (lo, hi) = walk
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let range = hi - lo;
    let points = walk
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let u = if range > 0.0 { (v - lo) / range } else { 0.5 };
            let base = config.band.0 + u * (config.band.1 - config.band.0);
            let z: f64 = StandardNormal.sample(rng);
            let amp = noise_amplitude(u, condition.variability, condition.position);
            ScatterPoint {
                x: (i + 1) as f64,
                y: base + amp * config.noise_scale * z,
            }
        })
        .collect();
    ScatterStimulus::new(id, condition, points)
}

pub const GBM_VARIABILITY: [f64; 2] = [0.0, 0.4];

/// The full factorial design: 2 variability levels × 2 noise positions ×
/// `reps` seeds, all with the `point` mark.
pub fn gbm_design(seed: u64, reps: usize, config: &GbmConfig) -> Result<Vec<ScatterStimulus>> {
    let mut out = Vec::with_capacity(4 * reps);
    for r in 0..reps {
        let stim_seed = derive_seed(seed, "gbm-series", r as u64);
        for variability in GBM_VARIABILITY {
            for position in [NoisePosition::Upper, NoisePosition::Lower] {
                let condition = ScatterCondition {
                    mark: Mark::Point,
                    variability,
                    position,
                    seed: stim_seed,
                };
                let tag = match position {
                    NoisePosition::Upper => "upper",
                    NoisePosition::Lower => "lower",
                };
                let id = format!("gbm_{r:02}_v{variability}_{tag}");
                let mut rng = rng_from_seed(stim_seed);
                out.push(gen_gbm_series(&mut rng, id, condition, config)?);
            }
        }
    }
    Ok(out)
}

/// Dots placed uniformly over the chart's pixel area, returned in data units.
pub fn gen_projection_dots(rng: &mut dyn RngCore, n: usize, ctx: &ViewingContext) -> Vec<DotStimulus> {
    (0..n)
        .map(|id| {
            let px = rng.random::<f64>() * ctx.x_axis.length_px;
            let py = rng.random::<f64>() * ctx.y_axis.length_px;
            DotStimulus {
                id,
                x: ctx.x_axis.data_min + px / ctx.x_axis.px_per_unit(),
                y: ctx.y_axis.data_min + py / ctx.y_axis.px_per_unit(),
            }
        })
        .collect()
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScatter {
    id: String,
    condition: ScatterCondition,
    points: Vec<ScatterPoint>,
    #[serde(default)]
    true_mean: Option<f64>,
}

fn parse_scatter(value: &Value) -> Result<(Vec<ScatterStimulus>, Vec<String>)> {
    let items = match value {
        Value::Array(items) => items,
        Value::Object(map) => map
            .get("stimuli")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::schema("stimuli", "expected an array of scatter stimuli"))?,
        _ => return Err(Error::schema("stimuli", "expected an array of scatter stimuli")),
    };
    if items.is_empty() {
        return Err(Error::schema("stimuli", "no stimuli"));
    }
    let mut warnings = Vec::new();
    let mut out = Vec::with_capacity(items.len());
    for (i, item) in items.iter().enumerate() {
        let obj = item
            .as_object()
            .ok_or_else(|| Error::schema(format!("stimuli[{i}]"), "expected an object"))?;
        for key in ["id", "condition", "points"] {
            if !obj.contains_key(key) {
                return Err(Error::schema(format!("stimuli[{i}].{key}"), "missing field"));
            }
        }
        let raw: RawScatter = serde_json::from_value(item.clone()).map_err(|e| {
            let field = ["condition", "points", "true_mean", "id"]
                .into_iter()
                .find(|k| {
                    obj.get(*k)
                        .map(|v| match *k {
                            "condition" => serde_json::from_value::<ScatterCondition>(v.clone()).is_err(),
                            "points" => serde_json::from_value::<Vec<ScatterPoint>>(v.clone()).is_err(),
                            "true_mean" => !v.is_number() && !v.is_null(),
                            _ => !v.is_string(),
                        })
                        .unwrap_or(false)
                })
                .map(|k| format!("stimuli[{i}].{k}"))
                .unwrap_or_else(|| format!("stimuli[{i}]"));
            Error::schema(field, e.to_string())
        })?;
        let stim = ScatterStimulus::new(raw.id, raw.condition, raw.points).map_err(|e| match e {
            Error::Schema { field, message } => Error::schema(format!("stimuli[{i}]: {field}"), message),
            other => other,
        })?;
        if let Some(stored) = raw.true_mean {
            if (stored - stim.true_mean).abs() > MEAN_TOLERANCE {
                warnings.push(format!(
                    "stimuli[{i}] ({}): stored true_mean {stored} differs from the points' mean {}",
                    stim.id, stim.true_mean
                ));
            }
        }
        out.push(stim);
    }
    Ok((out, warnings))
}

/// Reads scatter stimuli, recomputing each true mean from its points.
/// Disagreements with a stored mean are returned as warnings.
pub fn import_scatter_stimuli<R: Read>(reader: R) -> Result<(Vec<ScatterStimulus>, Vec<String>)> {
    let mut text = String::new();
    let mut reader = reader;
    reader.read_to_string(&mut text)?;
    if text.trim().is_empty() {
        return Err(Error::schema("stimuli", "empty file"));
    }
    let value: Value = serde_json::from_str(&text)?;
    parse_scatter(&value)
}

pub fn export_scatter_stimuli<W: Write>(writer: W, stimuli: &[ScatterStimulus]) -> Result<()> {
    let mut w = writer;
    serde_json::to_writer_pretty(&mut w, stimuli)?;
    w.write_all(b"\n")?;
    Ok(())
}

/// Mean y-value of a set of points.
pub fn points_mean(points: &[ScatterPoint]) -> f64 {
    mean(&points.iter().map(|p| p.y).collect::<Vec<_>>())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::DISPLAY_X;
    use crate::numeric::sample_variance;

    fn curve_ctx() -> ViewingContext {
        ViewingContext::curve_chart(DEFAULT_DISTANCE_CM, DEFAULT_PX_PER_CM).unwrap()
    }

    #[test]
    fn sgt_stimuli_are_displayable() {
        let set = gen_sgt_set(1, 40, CurveKind::Pdf, &curve_ctx()).unwrap();
        for s in &set {
            assert!(s.truth.median_x >= DISPLAY_X.0 && s.truth.median_x <= DISPLAY_X.1);
            assert!(s.truth.mode_x >= DISPLAY_X.0 && s.truth.mode_x <= DISPLAY_X.1);
            assert!(s.truth.peak_y <= 1.0);
        }
        let again = gen_sgt_set(1, 40, CurveKind::Pdf, &curve_ctx()).unwrap();
        assert_eq!(set[7].curve.sgt_params(), again[7].curve.sgt_params());
        assert_ne!(set[7].curve.sgt_params(), set[8].curve.sgt_params());
    }

    #[test]
    fn symmetric_prior_gives_mode_equal_median() {
        let prior = SgtPrior {
            lambda_sd: 0.0,
            ..SgtPrior::default()
        };
        let mut rng = rng_from_seed(2);
        for i in 0..10 {
            let (s, _) = gen_sgt_stimulus(&mut rng, format!("{i}"), CurveKind::Pdf, &curve_ctx(), &prior).unwrap();
            assert!((s.truth.mode_x - s.truth.median_x).abs() < 1e-9);
        }
    }

    #[test]
    fn acceptance_rate_is_stable_across_seeds() {
        let prior = SgtPrior::default();
        let rate = |seed: u64| {
            let mut rng = rng_from_seed(seed);
            let mut accepted = 0usize;
            let mut attempts = 0usize;
            while attempts < 10_000 {
                let (_, rejected) = prior.sample_counted(&mut rng).unwrap();
                attempts += rejected + 1;
                accepted += 1;
            }
            accepted as f64 / attempts as f64
        };
        let (a, b) = (rate(10), rate(11));
        let p = 0.5 * (a + b);
        let se = (p * (1.0 - p) / 10_000.0).sqrt();
        assert!((a - b).abs() < 3.0 * std::f64::consts::SQRT_2 * se, "{a} {b}");
    }

    fn condition(variability: f64, position: NoisePosition) -> ScatterCondition {
        ScatterCondition {
            mark: Mark::Point,
            variability,
            position,
            seed: 0,
        }
    }

    #[test]
    fn zero_variability_ignores_position() {
        let cfg = GbmConfig::default();
        let up = gen_gbm_series(&mut rng_from_seed(3), "a", condition(0.0, NoisePosition::Upper), &cfg).unwrap();
        let down = gen_gbm_series(&mut rng_from_seed(3), "a", condition(0.0, NoisePosition::Lower), &cfg).unwrap();
        assert_eq!(up.points, down.points);
        let ys: Vec<f64> = up.points.iter().map(|p| p.y).collect();
        let lo = ys.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!((lo - 20.0).abs() < 1e-9 && (hi - 80.0).abs() < 1e-9);
    }

    #[test]
    fn design_has_48_stimuli() {
        let design = gbm_design(4, 12, &GbmConfig::default()).unwrap();
        assert_eq!(design.len(), 48);
        let mut ids: Vec<&str> = design.iter().map(|s| s.id.as_str()).collect();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), 48);
    }

    #[test]
    fn noise_sd_at_the_noisy_end() {
        let cfg = GbmConfig::default();
        for position in [NoisePosition::Upper, NoisePosition::Lower] {
            let mut diffs = Vec::new();
            for r in 0..10_000 {
                let base = gen_gbm_series(&mut rng_from_seed(r), "b", condition(0.0, position), &cfg).unwrap();
                let noisy = gen_gbm_series(&mut rng_from_seed(r), "b", condition(0.4, position), &cfg).unwrap();
                let ys: Vec<f64> = base.points.iter().map(|p| p.y).collect();
                let target = match position {
                    NoisePosition::Upper => 80.0,
                    NoisePosition::Lower => 20.0,
                };
                let i = ys.iter().position(|&y| (y - target).abs() < 1e-9).unwrap();
                diffs.push(noisy.points[i].y - ys[i]);
            }
            let sd = sample_variance(&diffs).sqrt();
            assert!((sd / (0.4 * cfg.noise_scale) - 1.0).abs() < 0.03, "{sd}");
        }
    }

    #[test]
    fn scatter_import_export() {
        let design = gbm_design(5, 2, &GbmConfig::default()).unwrap();
        let mut buf = Vec::new();
        export_scatter_stimuli(&mut buf, &design).unwrap();
        let (back, warnings) = import_scatter_stimuli(&buf[..]).unwrap();
        assert_eq!(back, design);
        assert!(warnings.is_empty());

        assert!(import_scatter_stimuli(&b""[..]).is_err());
        assert!(import_scatter_stimuli(&b"[]"[..]).is_err());

        let mut short = serde_json::to_value(&design[..1]).unwrap();
        short[0]["points"].as_array_mut().unwrap().pop();
        let err = import_scatter_stimuli(short.to_string().as_bytes()).unwrap_err();
        assert!(err.to_string().contains("points"), "{err}");

        let mut shifted = serde_json::to_value(&design[..1]).unwrap();
        shifted[0]["true_mean"] = serde_json::json!(design[0].true_mean + 1.0);
        let (_, warnings) = import_scatter_stimuli(shifted.to_string().as_bytes()).unwrap();
        assert_eq!(warnings.len(), 1);

        let mut bad = serde_json::to_value(&design[..1]).unwrap();
        bad[0]["condition"]["mark"] = serde_json::json!("line");
        let err = import_scatter_stimuli(bad.to_string().as_bytes()).unwrap_err();
        assert!(err.to_string().contains("stimuli[0].condition"), "{err}");
    }

    #[test]
    fn stimulus_files_roundtrip() {
        let ctx = curve_ctx();
        let file = StimulusFile::Sgt {
            context: ctx,
            stimuli: gen_sgt_set(6, 3, CurveKind::Cdf, &ctx).unwrap(),
        };
        let mut buf = Vec::new();
        file.write(&mut buf).unwrap();
        let (back, _) = StimulusFile::read(&buf[..]).unwrap();
        let mut again = Vec::new();
        back.write(&mut again).unwrap();
        assert_eq!(buf, again);

        let dots = gen_projection_dots(&mut rng_from_seed(7), 500, &default_scatter_context().unwrap());
        assert!(dots.iter().all(|d| (0.0..=61.0).contains(&d.x) && (0.0..=100.0).contains(&d.y)));
    }
}
