//! Per-participant operator fits, bootstrap standard errors, two-stage
//! pooling, and error-family comparison.

mod loo;
mod mle;
mod trials;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::GaussianOpParams;
use crate::error::{Error, Result};
use crate::numeric::{mean, sample_variance};
use crate::operators::{OperatorKind, OperatorParams, ParamsFile, ParticipantParams};
use crate::perceptual_space::Axis;
use crate::seed::{derive_seed_str, rng_from_seed};

pub use loo::{loo_compare, ErrorFamily, LooResult, LOO_MAX_N};
pub use mle::{
    bahp_loglik, fit_bahp, fit_gaussian_error, fit_mixture, fit_projection_errors,
    fit_weibull_error, mixture_loglik, prepare_nonnegative, FitResult, FusionObservation,
    BA_SIGMA_FLOOR, ERROR_FLOOR, SPREAD_FLOOR, WEIBULL_SHAPE_BOUNDS,
};
pub use trials::{
    check_header, exclusion_filter, group_by_participant, read_trials, write_trials,
    ExclusionReason, ExclusionReport, ParticipantScreen, TrialRecord, MIN_CORRELATION,
    MIN_DISTANCE_CM, TRIAL_COLUMNS,
};

pub const DEFAULT_BOOTSTRAP: usize = 500;

/// Signed visual-angle error and projection distance of a projection trial.
///
/// The error is `va(response) - va(truth)` along the response axis; the
/// distance is the visual angle travelled from the start point to the axis
/// (or, for `project_to_curve`, from the x axis up to the curve).
pub fn projection_observation(t: &TrialRecord) -> Result<(f64, f64)> {
    let ctx = t.context()?;
    let (axis, distance) = match t.task {
        OperatorKind::ProjectToAxisY => (Axis::Y, ctx.value_to_va(t.true_x, Axis::X)?),
        OperatorKind::ProjectToAxisX => (Axis::X, ctx.value_to_va(t.true_y, Axis::Y)?),
        OperatorKind::ProjectToCurve => (Axis::Y, ctx.value_to_va(t.true_y, Axis::Y)?),
        other => {
            return Err(Error::invalid(format!("{other} trials are not projections")));
        }
    };
    let (truth, resp) = t.scored_pair();
    let error = ctx.value_to_va(resp, axis)? - ctx.value_to_va(truth, axis)?;
    Ok((error, distance))
}

/// Non-negative visual-angle deficit of a peak-height or maximum-slope trial.
pub fn deficit_observation(t: &TrialRecord) -> Result<f64> {
    match t.task {
        OperatorKind::HighestPoint => {
            let ctx = t.context()?;
            Ok(ctx.value_to_va(t.true_y, Axis::Y)? - ctx.value_to_va(t.resp_y, Axis::Y)?)
        }
        OperatorKind::MaxSlope => Ok(t.true_y - t.resp_y),
        other => Err(Error::invalid(format!("{other} trials have no deficit"))),
    }
}

/// Signed visual-angle error along x of an area-bisection trial.
pub fn bisection_error(t: &TrialRecord) -> Result<f64> {
    let ctx = t.context()?;
    Ok(ctx.value_to_va(t.resp_x, Axis::X)? - ctx.value_to_va(t.true_x, Axis::X)?)
}

/// A BisectArea trial in visual angle, with the stimulus mode looked up by `stim_id`.
pub fn fusion_observation(t: &TrialRecord, modes: &BTreeMap<String, f64>) -> Result<FusionObservation> {
    let mode = modes.get(&t.stim_id).ok_or_else(|| {
        Error::invalid(format!("no stimulus mode for stim_id `{}`", t.stim_id))
    })?;
    let ctx = t.context()?;
    Ok(FusionObservation {
        theta_median: ctx.value_to_va(t.true_x, Axis::X)?,
        theta_mode: ctx.value_to_va(*mode, Axis::X)?,
        response: ctx.value_to_va(t.resp_x, Axis::X)?,
    })
}

/// Inputs needed beyond the trials themselves.
#[derive(Debug, Clone, Default)]
pub struct FitOptions {
    /// Bootstrap replicates per participant; 0 disables standard errors.
    pub bootstrap: usize,
    pub seed: u64,
    /// HighestPoint parameters held fixed by fusion and mixture fits.
    pub hp_fixed: Option<GaussianOpParams>,
    /// Stimulus modes by `stim_id`, for fusion and mixture fits.
    pub modes: BTreeMap<String, f64>,
}

fn task_for(kind: OperatorKind) -> OperatorKind {
    match kind {
        OperatorKind::Bahp | OperatorKind::Mixture => OperatorKind::BisectArea,
        k => k,
    }
}

/// Fits one participant's trials for the given operator.
pub fn fit_operator(
    kind: OperatorKind,
    trials: &[&TrialRecord],
    options: &FitOptions,
) -> Result<FitResult<OperatorParams>> {
    let task = task_for(kind);
    if let Some(t) = trials.iter().find(|t| t.task != task) {
        return Err(Error::invalid(format!(
            "trial {} is a {} trial; {kind} fits need {task} trials",
            t.trial_id, t.task
        )));
    }
    match kind {
        k if k.is_projection() => {
            let (e, d): (Vec<f64>, Vec<f64>) = trials
                .iter()
                .map(|t| projection_observation(t))
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .unzip();
            Ok(fit_projection_errors(&e, &d)?.map(OperatorParams::Projection))
        }
        OperatorKind::HighestPoint | OperatorKind::MaxSlope => {
            let e = trials
                .iter()
                .map(|t| deficit_observation(t))
                .collect::<Result<Vec<_>>>()?;
            Ok(fit_weibull_error(&e)?.map(OperatorParams::Weibull))
        }
        OperatorKind::BisectArea => {
            let e = trials
                .iter()
                .map(|t| bisection_error(t))
                .collect::<Result<Vec<_>>>()?;
            Ok(fit_gaussian_error(&e)?.map(OperatorParams::Gaussian))
        }
        _ => {
            let hp = options
                .hp_fixed
                .ok_or_else(|| Error::invalid(format!("{kind} fits need fixed HighestPoint parameters")))?;
            let obs = trials
                .iter()
                .map(|t| fusion_observation(t, &options.modes))
                .collect::<Result<Vec<_>>>()?;
            if kind == OperatorKind::Bahp {
                Ok(fit_bahp(&obs, &hp)?.map(OperatorParams::Bahp))
            } else {
                Ok(fit_mixture(&obs, &hp)?.map(OperatorParams::Mixture))
            }
        }
    }
}

/// Nonparametric bootstrap standard errors of named parameters.
///
/// Replicate `r` resamples with a generator seeded from `(seed, key, r)`, so
/// the result does not depend on scheduling. Failed replicates are skipped.
pub fn bootstrap_se<T, F>(items: &[T], replicates: usize, seed: u64, key: &str, fit: F) -> BTreeMap<String, f64>
where
    T: Clone + Sync,
    F: Fn(&[T]) -> Result<BTreeMap<String, f64>> + Sync,
{
    let draws: Vec<BTreeMap<String, f64>> = (0..replicates)
        .into_par_iter()
        .filter_map(|r| {
            let mut rng = rng_from_seed(derive_seed_str(seed, "bootstrap", &format!("{key}/{r}")));
            let sample: Vec<T> = (0..items.len())
                .map(|_| items[rand::Rng::random_range(&mut rng, 0..items.len())].clone())
                .collect();
            fit(&sample).ok()
        })
        .collect();
    let mut out = BTreeMap::new();
    if draws.len() < 2 {
        return out;
    }
    for name in draws[0].keys() {
        let vals: Vec<f64> = draws.iter().filter_map(|d| d.get(name).copied()).collect();
        if vals.len() >= 2 {
            out.insert(name.clone(), sample_variance(&vals).sqrt());
        }
    }
    out
}

/// Fits every participant in `trials`; participants are independent and
/// fitted in parallel, with output ordered by participant id.
pub fn fit_participants(kind: OperatorKind, trials: &[TrialRecord], options: &FitOptions) -> Result<ParamsFile> {
    let groups = group_by_participant(trials);
    if groups.is_empty() {
        return Err(Error::invalid("no trials to fit"));
    }
    let fitted: Vec<(String, ParticipantParams)> = groups
        .par_iter()
        .map(|(pid, group)| {
            let fit = fit_operator(kind, group, options)
                .map_err(|e| Error::invalid(format!("participant {pid}: {e}")))?;
            let owned: Vec<TrialRecord> = group.iter().map(|t| (*t).clone()).collect();
            let se = bootstrap_se(&owned, options.bootstrap, options.seed, pid, |sample| {
                let refs: Vec<&TrialRecord> = sample.iter().collect();
                Ok(fit_operator(kind, &refs, options)?.params.named_values())
            });
            let mut entry = ParticipantParams::new(fit.params);
            entry.loglik = Some(fit.log_likelihood);
            entry.n = Some(fit.n_trials);
            entry.se = se;
            entry.diagnostics = fit.diagnostics;
            Ok((pid.clone(), entry))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ParamsFile {
        operator: kind,
        params: fitted.into_iter().collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSummary {
    pub mean: f64,
    pub sd: f64,
    /// Between-participant variance net of estimation noise.
    pub tau2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationSummary {
    pub n_participants: usize,
    pub parameters: BTreeMap<String, ParameterSummary>,
    /// Per-participant estimates shrunk toward the population mean.
    pub shrunk: BTreeMap<String, BTreeMap<String, f64>>,
}

/// Two-stage pooling: population mean and SD of each parameter, and
/// precision-weighted shrinkage of each participant toward the mean.
///
/// Participants without a standard error for a parameter are left unshrunk.
pub fn pool_participants(file: &ParamsFile) -> Result<PopulationSummary> {
    if file.params.len() < 2 {
        return Err(Error::invalid("pooling needs at least two participants"));
    }
    let values: BTreeMap<&String, BTreeMap<String, f64>> = file
        .params
        .iter()
        .map(|(pid, p)| (pid, p.params.named_values()))
        .collect();
    let names: Vec<String> = values.values().next().expect("non-empty").keys().cloned().collect();
    let mut parameters = BTreeMap::new();
    let mut shrunk: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    for name in &names {
        let raw: Vec<f64> = values
            .values()
            .map(|v| {
                v.get(name)
                    .copied()
                    .ok_or_else(|| Error::invalid(format!("participants disagree on parameter `{name}`")))
            })
            .collect::<Result<_>>()?;
        let m = mean(&raw);
        let var = sample_variance(&raw);
        let ses: Vec<f64> = file
            .params
            .values()
            .filter_map(|p| p.se.get(name).copied())
            .collect();
        let noise = if ses.is_empty() {
            0.0
        } else {
            ses.iter().map(|s| s * s).sum::<f64>() / ses.len() as f64
        };
        let tau2 = (var - noise).max(0.0);
        parameters.insert(
            name.clone(),
            ParameterSummary {
                mean: m,
                sd: var.sqrt(),
                tau2,
            },
        );
        for ((pid, p), x) in file.params.iter().zip(&raw) {
            let se2 = p.se.get(name).map(|s| s * s).unwrap_or(0.0);
            let b = if se2 + tau2 > 0.0 { se2 / (se2 + tau2) } else { 0.0 };
            shrunk
                .entry(pid.clone())
                .or_default()
                .insert(name.clone(), b * m + (1.0 - b) * x);
        }
    }
    Ok(PopulationSummary {
        n_participants: file.params.len(),
        parameters,
        shrunk,
    })
}
