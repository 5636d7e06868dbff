//! Synthetic trials drawn from fitted or hypothesised operator parameters.

use rayon::prelude::*;
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::composition::{predict_mean_estimate, ScatterStimulus, Strategy};
use crate::curves::{CurveKind, StimulusCurve};
use crate::error::{Error, Result};
use crate::fitting::TrialRecord;
use crate::operators::{
    bahp, bisect_area, highest_point_x, highest_point_x_gaussian, max_slope, max_slope_position,
    mixture, projection, OperatorKind, OperatorParams, ParamsFile, ResponseDistribution, SideRule,
};
use crate::perceptual_space::{Axis, ViewingContext};
use crate::seed::{derive_seed_str, rng_from_seed};
use crate::stimuli::{DotStimulus, SgtStimulus, StimulusFile};

/// One mean-estimation response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanEstimate {
    pub participant_id: String,
    pub stim_id: String,
    pub response: f64,
}

fn record(ctx: &ViewingContext, pid: &str, task: OperatorKind, index: usize, stim_id: String, condition: &str) -> TrialRecord {
    TrialRecord {
        participant_id: pid.to_string(),
        task,
        trial_id: format!("t{index:04}"),
        stim_id,
        distance_cm: ctx.distance_cm,
        px_per_cm: ctx.px_per_cm,
        chart_w_px: ctx.x_axis.length_px,
        chart_h_px: ctx.y_axis.length_px,
        x_min: ctx.x_axis.data_min,
        x_max: ctx.x_axis.data_max,
        y_min: ctx.y_axis.data_min,
        y_max: ctx.y_axis.data_max,
        true_x: 0.0,
        true_y: 0.0,
        resp_x: 0.0,
        resp_y: 0.0,
        condition: condition.to_string(),
    }
}

fn dot_trial(
    ctx: &ViewingContext,
    kind: OperatorKind,
    params: &OperatorParams,
    dot: &DotStimulus,
    mut t: TrialRecord,
    rng: &mut dyn RngCore,
) -> Result<TrialRecord> {
    let p = params.as_projection()?;
    t.true_x = dot.x;
    t.true_y = dot.y;
    t.resp_x = dot.x;
    t.resp_y = dot.y;
    match kind {
        OperatorKind::ProjectToAxisY => {
            let d = projection(ctx.value_to_va(dot.y, Axis::Y)?, ctx.value_to_va(dot.x, Axis::X)?, &p)?;
            t.resp_y = ctx.va_to_value(d.sample(rng), Axis::Y)?;
        }
        OperatorKind::ProjectToAxisX => {
            let d = projection(ctx.value_to_va(dot.x, Axis::X)?, ctx.value_to_va(dot.y, Axis::Y)?, &p)?;
            t.resp_x = ctx.va_to_value(d.sample(rng), Axis::X)?;
        }
        other => return Err(Error::invalid(format!("{other} trials need SGT stimuli, not dots"))),
    }
    Ok(t)
}

fn curve_trial(
    ctx: &ViewingContext,
    kind: OperatorKind,
    params: &OperatorParams,
    stim: &SgtStimulus,
    side_rule: SideRule,
    mut t: TrialRecord,
    rng: &mut dyn RngCore,
) -> Result<TrialRecord> {
    let wanted = if kind == OperatorKind::MaxSlope { CurveKind::Cdf } else { CurveKind::Pdf };
    let curve: StimulusCurve = if stim.curve.kind() == wanted {
        stim.curve.clone()
    } else {
        stim.curve.as_kind(wanted)?
    };
    t.condition = match wanted {
        CurveKind::Pdf => "pdf".into(),
        CurveKind::Cdf => "cdf".into(),
    };
    let truth = curve.ground_truth(ctx)?;
    let va_x = |x: f64| ctx.value_to_va(x, Axis::X);
    let from_va_x = |a: f64| ctx.va_to_value(a, Axis::X);
    match kind {
        OperatorKind::ProjectToCurve => {
            let p = params.as_projection()?;
            let x = curve.sgt().try_quantile(rng.random_range(0.1..0.9))?;
            let y = curve.y_at(x);
            let d = projection(ctx.value_to_va(y, Axis::Y)?, ctx.value_to_va(y, Axis::Y)?, &p)?;
            t.true_x = x;
            t.true_y = y;
            t.resp_x = x;
            t.resp_y = ctx.va_to_value(d.sample(rng), Axis::Y)?;
        }
        OperatorKind::HighestPoint => {
            t.true_x = truth.mode_x;
            t.true_y = truth.peak_y;
            match params {
                OperatorParams::Weibull(w) => {
                    let hp = highest_point_x(&curve, ctx, w, side_rule)?;
                    let (x, eps) = hp.sample_with_error(rng);
                    t.resp_x = x;
                    t.resp_y = if eps <= 0.0 {
                        truth.peak_y
                    } else {
                        let theta = ctx.value_to_va(truth.peak_y, Axis::Y)?;
                        ctx.va_to_value((theta - eps).max(0.0), Axis::Y)?
                    };
                }
                other => {
                    let g = highest_point_x_gaussian(va_x(truth.mode_x)?, &other.as_gaussian()?)?;
                    t.resp_x = from_va_x(g.sample(rng))?;
                    t.resp_y = truth.peak_y;
                }
            }
        }
        OperatorKind::MaxSlope => {
            let w = params.as_weibull()?;
            let profile = curve.slope_profile(ctx)?;
            let response = max_slope(profile.max_value, &w)?;
            let slope = response.sample(rng);
            t.true_x = truth.max_slope_x;
            t.true_y = truth.max_slope_value;
            t.resp_x = max_slope_position(slope, &profile, curve.x_range(), side_rule, rng)?;
            t.resp_y = slope;
        }
        OperatorKind::BisectArea | OperatorKind::Bahp | OperatorKind::Mixture => {
            let (med, mode) = (va_x(truth.median_x)?, va_x(truth.mode_x)?);
            let draw = match kind {
                OperatorKind::BisectArea => bisect_area(med, &params.as_gaussian()?)?.sample(rng),
                OperatorKind::Bahp => bahp(med, mode, &params.as_bahp()?)?.sample(rng),
                _ => mixture(med, mode, &params.as_mixture()?)?.sample(rng),
            };
            t.true_x = truth.median_x;
            t.true_y = curve.y_at(truth.median_x);
            t.resp_x = from_va_x(draw)?;
            t.resp_y = t.true_y;
        }
        other => return Err(Error::invalid(format!("{other} trials need dot stimuli"))),
    }
    Ok(t)
}

/// Draws one trial per (participant, stimulus) for the operator in `params`.
///
/// Each trial has its own generator keyed by participant and stimulus, so
/// the output is independent of scheduling. Fusion and mixture trials are
/// recorded as `bisect_area` tasks.
pub fn simulate_trials(
    params: &ParamsFile,
    stimuli: &StimulusFile,
    seed: u64,
    side_rule: SideRule,
) -> Result<Vec<TrialRecord>> {
    let kind = params.operator;
    let task = match kind {
        OperatorKind::Bahp | OperatorKind::Mixture => OperatorKind::BisectArea,
        k => k,
    };
    let ctx = stimuli.context();
    let per_participant: Vec<Result<Vec<TrialRecord>>> = params
        .params
        .par_iter()
        .map(|(pid, pp)| {
            let trials = match stimuli {
                StimulusFile::Dots { stimuli, .. } => stimuli
                    .iter()
                    .enumerate()
                    .map(|(i, dot)| {
                        let stim_id = format!("dot_{:04}", dot.id);
                        let mut rng = rng_from_seed(derive_seed_str(seed, "simulate", &format!("{pid}/{stim_id}")));
                        let t = record(ctx, pid, task, i, stim_id, "");
                        dot_trial(ctx, kind, &pp.params, dot, t, &mut rng)
                    })
                    .collect::<Result<Vec<_>>>()?,
                StimulusFile::Sgt { stimuli, .. } => stimuli
                    .iter()
                    .enumerate()
                    .map(|(i, s)| {
                        let mut rng = rng_from_seed(derive_seed_str(seed, "simulate", &format!("{pid}/{}", s.id)));
                        let t = record(ctx, pid, task, i, s.id.clone(), "");
                        curve_trial(ctx, kind, &pp.params, s, side_rule, t, &mut rng)
                    })
                    .collect::<Result<Vec<_>>>()?,
                StimulusFile::Gbm { .. } => {
                    return Err(Error::invalid(
                        "scatter stimuli produce mean estimates; pass a strategy instead",
                    ))
                }
            };
            Ok(trials)
        })
        .collect();
    let mut out = Vec::new();
    for r in per_participant {
        out.extend(r?);
    }
    Ok(out)
}

/// One mean-estimation response per (participant, stimulus) under `strategy`,
/// using each participant's projection parameters.
pub fn simulate_mean_estimates(
    params: &ParamsFile,
    stimuli: &[ScatterStimulus],
    ctx: &ViewingContext,
    strategy: Strategy,
    seed: u64,
) -> Result<Vec<MeanEstimate>> {
    if !params.operator.is_projection() {
        return Err(Error::invalid(format!(
            "mean estimates compose projection operators, not {}",
            params.operator
        )));
    }
    let rows: Vec<Result<Vec<MeanEstimate>>> = params
        .params
        .par_iter()
        .map(|(pid, pp)| {
            let proj = pp.params.as_projection()?;
            let key = derive_seed_str(seed, "observe", pid);
            stimuli
                .iter()
                .map(|s| {
                    let d = predict_mean_estimate(s, ctx, &proj, strategy, 1, key)?;
                    Ok(MeanEstimate {
                        participant_id: pid.clone(),
                        stim_id: s.id.clone(),
                        response: d.draws[0],
                    })
                })
                .collect()
        })
        .collect();
    let mut out = Vec::new();
    for r in rows {
        out.extend(r?);
    }
    Ok(out)
}
