//! `percept-ops`: fit visual decoding operators, generate stimuli, simulate
//! trials, predict mean-estimation responses, and score predictions.
//!
//! Every command that writes files also writes a manifest with the seed,
//! the arguments, and SHA-256 digests of its inputs and outputs. Outputs
//! are staged and only moved into place when the command succeeds.

mod output;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use percept_ops::composition::{predict_all_strategies, PredictiveDistribution, ScatterStimulus, Strategy};
use percept_ops::curves::CurveKind;
use percept_ops::distributions::GaussianOpParams;
use percept_ops::evaluation::{
    density_overlay, error_distance_summary, interval_coverage, pit_ecdf_band, pit_values, write_csv, PitMode,
    DEFAULT_LEVELS,
};
use percept_ops::fitting::{
    deficit_observation, exclusion_filter, fit_participants, loo_compare, pool_participants,
    projection_observation, read_trials, write_trials, ErrorFamily, FitOptions, TrialRecord,
};
use percept_ops::numeric::ks_test;
use percept_ops::operators::{OperatorKind, ParamsFile, SideRule};
use percept_ops::perceptual_space::{Axis, ViewingContext, DEFAULT_DISTANCE_CM, DEFAULT_PX_PER_CM};
use percept_ops::seed::{derive_seed, derive_seed_str, rng_from_seed};
use percept_ops::simulation::{simulate_mean_estimates, simulate_trials, MeanEstimate};
use percept_ops::stimuli::{gbm_design, gen_projection_dots, gen_sgt_set, GbmConfig, StimulusFile};

use output::{finish, input_digests, Outputs};

/// Environment variable capping the number of worker threads.
const THREADS_ENV: &str = "PERCEPT_OPS_THREADS";

#[derive(Parser)]
#[command(name = "percept-ops", version, about = "Visual decoding operators: fit, simulate, predict, evaluate")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit an operator per participant from a trials CSV.
    Fit(FitArgs),
    /// Generate SGT curves, GBM scatter series, or projection dots.
    GenStimuli(GenArgs),
    /// Draw synthetic trials (or mean estimates) from operator parameters.
    Simulate(SimulateArgs),
    /// Predict mean-estimation responses on scatter stimuli.
    Predict(PredictArgs),
    /// Score predictions against observations and write diagnostics.
    Evaluate(EvaluateArgs),
    /// Convert a value to visual angle (or back) for spot checks.
    Va(VaArgs),
    /// Check a file against a schema; exits 0 iff it is valid.
    Validate(ValidateArgs),
}

#[derive(Args, Serialize)]
struct FitArgs {
    /// Trials CSV.
    #[arg(long)]
    trials: PathBuf,
    /// Operator to fit, e.g. project_to_axis_y or bahp.
    #[arg(long, value_parser = parse_operator)]
    #[serde(serialize_with = "as_display")]
    operator: OperatorKind,
    /// Output parameters JSON.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Bootstrap replicates per participant for standard errors (0 disables).
    #[arg(long, default_value_t = 0)]
    bootstrap: usize,
    /// SGT stimulus file, needed to look up curve modes for bahp and mixture.
    #[arg(long)]
    stimuli: Option<PathBuf>,
    /// Bias of the HighestPoint operator held fixed by bahp and mixture fits.
    #[arg(long)]
    hp_beta: Option<f64>,
    /// Spread of the fixed HighestPoint operator.
    #[arg(long)]
    hp_sigma: Option<f64>,
    /// Drop participants failing the correlation or distance screens.
    #[arg(long)]
    exclude: bool,
    /// Write the exclusion screen per participant as CSV.
    #[arg(long)]
    exclusions: Option<PathBuf>,
    /// Write population means, between-participant variance, and shrunk estimates.
    #[arg(long)]
    pooled: Option<PathBuf>,
    /// Write leave-one-out error-family rankings (highest_point, max_slope).
    #[arg(long)]
    loo: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum StimulusKind {
    Sgt,
    Gbm,
    Dots,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Chart {
    /// 600×450 px, x ∈ [−5, 5], y ∈ [0, 1].
    Curve,
    /// 500×200 px, x ∈ [0, 61], y ∈ [0, 100].
    Scatter,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum CurveArg {
    Pdf,
    Cdf,
}

#[derive(Args, Serialize)]
struct GenArgs {
    #[arg(long, value_enum)]
    kind: StimulusKind,
    /// Number of stimuli (for gbm, a multiple of 4: variability × position × seeds).
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Curve kind for SGT stimuli.
    #[arg(long, value_enum, default_value = "pdf")]
    curve: CurveArg,
    /// Chart the dots are placed on.
    #[arg(long, value_enum, default_value = "curve")]
    chart: Chart,
    #[arg(long, default_value_t = DEFAULT_DISTANCE_CM)]
    distance_cm: f64,
    #[arg(long, default_value_t = DEFAULT_PX_PER_CM)]
    px_per_cm: f64,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum SideRuleArg {
    InverseSlope,
    Even,
}

impl From<SideRuleArg> for SideRule {
    fn from(a: SideRuleArg) -> Self {
        match a {
            SideRuleArg::InverseSlope => SideRule::InverseSlope,
            SideRuleArg::Even => SideRule::Even,
        }
    }
}

#[derive(Args, Serialize)]
struct SimulateArgs {
    #[arg(long)]
    params: PathBuf,
    #[arg(long)]
    stimuli: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV: trials, or participant_id,stim_id,response for scatter stimuli.
    #[arg(long)]
    out: PathBuf,
    /// Mean-estimation strategy for scatter stimuli, e.g. twice:mean.
    #[arg(long, value_parser = parse_strategy)]
    #[serde(serialize_with = "as_display_opt")]
    strategy: Option<Strategy>,
    #[arg(long, value_enum, default_value = "inverse-slope")]
    side_rule: SideRuleArg,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct PredictArgs {
    /// Projection parameters (fitted on project_to_axis_y trials).
    #[arg(long)]
    params: PathBuf,
    /// Scatter stimulus file.
    #[arg(long)]
    stimuli: PathBuf,
    #[arg(long, value_parser = parse_strategy, conflicts_with = "all_strategies", required_unless_present = "all_strategies")]
    #[serde(serialize_with = "as_display_opt")]
    strategy: Option<Strategy>,
    #[arg(long)]
    all_strategies: bool,
    #[arg(long, default_value_t = 1000)]
    draws: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Restrict predictions to one participant.
    #[arg(long)]
    participant: Option<String>,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum, Serialize, PartialEq)]
#[serde(rename_all = "lowercase")]
enum Space {
    Data,
    Va,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum PitArg {
    Randomized,
    Mid,
}

#[derive(Args, Serialize)]
struct EvaluateArgs {
    /// Observed responses CSV (participant_id,stim_id,response).
    #[arg(long, requires = "predictions")]
    observed: Option<PathBuf>,
    /// Prediction CSVs written by `predict`.
    #[arg(long, num_args = 1..)]
    predictions: Vec<PathBuf>,
    /// Projection trials for the error-versus-distance table.
    #[arg(long, requires = "params")]
    trials: Option<PathBuf>,
    /// Fitted projection parameters for the error-versus-distance table.
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    distance_bins: usize,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_LEVELS.to_vec())]
    levels: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "randomized")]
    pit: PitArg,
    /// Simultaneous miscoverage of the PIT ECDF band.
    #[arg(long, default_value_t = 0.05)]
    band_alpha: f64,
    #[arg(long, default_value_t = 2000)]
    band_sims: usize,
    /// Scoring space; `va` needs the scatter stimulus file for its chart.
    #[arg(long, value_enum, default_value = "data")]
    space: Space,
    #[arg(long)]
    stimuli: Option<PathBuf>,
    /// Replicated data sets in the density overlay.
    #[arg(long, default_value_t = 10)]
    overlay_replicates: usize,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum AxisArg {
    X,
    Y,
}

impl From<AxisArg> for Axis {
    fn from(a: AxisArg) -> Self {
        match a {
            AxisArg::X => Axis::X,
            AxisArg::Y => Axis::Y,
        }
    }
}

#[derive(Args, Serialize)]
struct VaArgs {
    /// Viewing context JSON; defaults to the curve chart at the given distance.
    #[arg(long)]
    context: Option<PathBuf>,
    #[arg(long, allow_hyphen_values = true)]
    value: f64,
    #[arg(long, value_enum, default_value = "y")]
    axis: AxisArg,
    /// Treat the value as a displacement rather than an axis value.
    #[arg(long)]
    displacement: bool,
    /// Convert a visual angle back to data units.
    #[arg(long)]
    inverse: bool,
    #[arg(long, default_value_t = DEFAULT_DISTANCE_CM)]
    distance_cm: f64,
    #[arg(long, default_value_t = DEFAULT_PX_PER_CM)]
    px_per_cm: f64,
    /// Write the result as JSON (with a manifest) instead of printing it.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Schema {
    Trials,
    Params,
    Stimuli,
    Context,
}

#[derive(Args, Serialize)]
struct ValidateArgs {
    #[arg(long, value_enum)]
    schema: Schema,
    file: PathBuf,
}

fn parse_operator(s: &str) -> std::result::Result<OperatorKind, String> {
    s.parse().map_err(|e: percept_ops::Error| e.to_string())
}

fn parse_strategy(s: &str) -> std::result::Result<Strategy, String> {
    s.parse().map_err(|e: percept_ops::Error| e.to_string())
}

fn as_display<T: std::fmt::Display, S: serde::Serializer>(v: &T, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_str(v)
}

fn as_display_opt<T: std::fmt::Display, S: serde::Serializer>(
    v: &Option<T>,
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    match v {
        Some(v) => s.collect_str(v),
        None => s.serialize_none(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("error: {e:#}");
        return ExitCode::from(2);
    }
    let result = match &cli.command {
        Command::Fit(a) => run_fit(a),
        Command::GenStimuli(a) => run_gen(a),
        Command::Simulate(a) => run_simulate(a),
        Command::Predict(a) => run_predict(a),
        Command::Evaluate(a) => run_evaluate(a),
        Command::Va(a) => run_va(a),
        Command::Validate(a) => return run_validate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .with_context(|| format!("{THREADS_ENV} must be a positive integer, got `{raw}`"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .context("configuring the thread pool")
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?))
}

fn read_params(path: &Path) -> Result<ParamsFile> {
    serde_json::from_reader(open(path)?).with_context(|| format!("reading parameters from {}", path.display()))
}

fn read_stimuli(path: &Path) -> Result<StimulusFile> {
    let (file, warnings) =
        StimulusFile::read(open(path)?).with_context(|| format!("reading stimuli from {}", path.display()))?;
    for w in warnings {
        eprintln!("warning: {w}");
    }
    Ok(file)
}

fn read_trials_file(path: &Path) -> Result<Vec<TrialRecord>> {
    read_trials(open(path)?).with_context(|| format!("reading trials from {}", path.display()))
}

fn scatter_stimuli(file: StimulusFile) -> Result<(ViewingContext, Vec<ScatterStimulus>)> {
    match file {
        StimulusFile::Gbm { context, stimuli } => Ok((context, stimuli)),
        _ => bail!("expected scatter (gbm) stimuli"),
    }
}

fn manifest_for(explicit: &Option<PathBuf>, out: &Path) -> PathBuf {
    explicit.clone().unwrap_or_else(|| {
        let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
        name.push(".manifest.json");
        out.with_file_name(name)
    })
}

fn csv_bytes<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_csv(&mut buf, rows)?;
    Ok(buf)
}

fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    Ok(text.into_bytes())
}

#[derive(Serialize)]
struct ScreenRow {
    participant_id: String,
    n_trials: usize,
    correlation: Option<f64>,
    distance_cm: f64,
    excluded: bool,
    reasons: String,
}

#[derive(Serialize)]
struct LooRow {
    participant_id: String,
    rank: Option<usize>,
    family: ErrorFamily,
    loo_loglik: Option<f64>,
    failure: Option<String>,
}

fn run_fit(a: &FitArgs) -> Result<()> {
    let mut inputs = vec![a.trials.as_path()];
    let mut trials = read_trials_file(&a.trials)?;
    let mut outputs = Outputs::default();

    let report = exclusion_filter(&trials);
    if let Some(path) = &a.exclusions {
        let rows: Vec<ScreenRow> = report
            .screens
            .iter()
            .map(|s| ScreenRow {
                participant_id: s.participant_id.clone(),
                n_trials: s.n_trials,
                correlation: s.correlation,
                distance_cm: s.distance_cm,
                excluded: s.excluded(),
                reasons: s
                    .reasons
                    .iter()
                    .map(|r| serde_json::to_value(r).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default())
                    .collect::<Vec<_>>()
                    .join(";"),
            })
            .collect();
        outputs.write(path, &csv_bytes(&rows)?)?;
    }
    if a.exclude {
        trials = report.kept;
    }
    let task = match a.operator {
        OperatorKind::Bahp | OperatorKind::Mixture => OperatorKind::BisectArea,
        k => k,
    };
    trials.retain(|t| t.task == task);
    if trials.is_empty() {
        bail!("no {task} trials to fit");
    }

    let mut options = FitOptions {
        bootstrap: a.bootstrap,
        seed: a.seed,
        ..FitOptions::default()
    };
    if matches!(a.operator, OperatorKind::Bahp | OperatorKind::Mixture) {
        let (Some(beta), Some(sigma)) = (a.hp_beta, a.hp_sigma) else {
            bail!("{} fits need --hp-beta and --hp-sigma", a.operator);
        };
        options.hp_fixed = Some(GaussianOpParams::fixed(beta, sigma)?);
        let Some(path) = &a.stimuli else {
            bail!("{} fits need --stimuli to look up curve modes", a.operator);
        };
        inputs.push(path);
        match read_stimuli(path)? {
            StimulusFile::Sgt { stimuli, .. } => {
                options.modes = stimuli.iter().map(|s| (s.id.clone(), s.truth.mode_x)).collect();
            }
            _ => bail!("--stimuli must be an SGT stimulus file"),
        }
    }

    let fitted = fit_participants(a.operator, &trials, &options)?;
    outputs.write(&a.out, &json_bytes(&fitted)?)?;
    if let Some(path) = &a.pooled {
        outputs.write(path, &json_bytes(&pool_participants(&fitted)?)?)?;
    }
    if let Some(path) = &a.loo {
        if !matches!(a.operator, OperatorKind::HighestPoint | OperatorKind::MaxSlope) {
            bail!("--loo compares error families for highest_point and max_slope deficits");
        }
        let mut by_pid: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
        for t in &trials {
            by_pid.entry(&t.participant_id).or_default().push(deficit_observation(t)?);
        }
        let per: Vec<Result<Vec<LooRow>>> = by_pid
            .par_iter()
            .map(|(pid, errors)| {
                let ranked = loo_compare(errors, &ErrorFamily::CANDIDATES)
                    .with_context(|| format!("participant {pid}"))?;
                Ok(ranked
                    .into_iter()
                    .enumerate()
                    .map(|(i, r)| LooRow {
                        participant_id: pid.to_string(),
                        rank: r.loo_loglik.map(|_| i + 1),
                        family: r.family,
                        loo_loglik: r.loo_loglik,
                        failure: r.failure,
                    })
                    .collect())
            })
            .collect();
        let mut rows = Vec::new();
        for r in per {
            rows.extend(r?);
        }
        outputs.write(path, &csv_bytes(&rows)?)?;
    }
    finish(
        outputs,
        &manifest_for(&a.manifest, &a.out),
        "fit",
        Some(a.seed),
        serde_json::to_value(a)?,
        input_digests(&inputs)?,
    )
}

fn run_gen(a: &GenArgs) -> Result<()> {
    if a.n == 0 {
        bail!("--n must be positive");
    }
    let curve_ctx = ViewingContext::curve_chart(a.distance_cm, a.px_per_cm)?;
    let scatter_ctx = ViewingContext::scatter_chart(a.distance_cm, a.px_per_cm, (0.0, 61.0), (0.0, 100.0))?;
    let file = match a.kind {
        StimulusKind::Sgt => {
            let kind = match a.curve {
                CurveArg::Pdf => CurveKind::Pdf,
                CurveArg::Cdf => CurveKind::Cdf,
            };
            StimulusFile::Sgt {
                context: curve_ctx,
                stimuli: gen_sgt_set(a.seed, a.n, kind, &curve_ctx)?,
            }
        }
        StimulusKind::Gbm => {
            if !a.n.is_multiple_of(4) {
                bail!("gbm stimuli come in blocks of 4 (2 variability levels × 2 positions); got --n {}", a.n);
            }
            StimulusFile::Gbm {
                context: scatter_ctx,
                stimuli: gbm_design(a.seed, a.n / 4, &GbmConfig::default())?,
            }
        }
        StimulusKind::Dots => {
            let ctx = match a.chart {
                Chart::Curve => curve_ctx,
                Chart::Scatter => scatter_ctx,
            };
            let mut rng = rng_from_seed(derive_seed(a.seed, "dots", 0));
            StimulusFile::Dots {
                context: ctx,
                stimuli: gen_projection_dots(&mut rng, a.n, &ctx),
            }
        }
    };
    let mut buf = Vec::new();
    file.write(&mut buf)?;
    let mut outputs = Outputs::default();
    outputs.write(&a.out, &buf)?;
    finish(
        outputs,
        &manifest_for(&a.manifest, &a.out),
        "gen-stimuli",
        Some(a.seed),
        serde_json::to_value(a)?,
        Vec::new(),
    )
}

fn run_simulate(a: &SimulateArgs) -> Result<()> {
    let params = read_params(&a.params)?;
    let stimuli = read_stimuli(&a.stimuli)?;
    let mut outputs = Outputs::default();
    match (&stimuli, a.strategy) {
        (StimulusFile::Gbm { context, stimuli }, Some(strategy)) => {
            let rows = simulate_mean_estimates(&params, stimuli, context, strategy, a.seed)?;
            outputs.write(&a.out, &csv_bytes(&rows)?)?;
        }
        (StimulusFile::Gbm { .. }, None) => bail!("scatter stimuli need --strategy"),
        (_, Some(_)) => bail!("--strategy applies to scatter stimuli only"),
        (file, None) => {
            let trials = simulate_trials(&params, file, a.seed, a.side_rule.into())?;
            let mut buf = Vec::new();
            write_trials(&mut buf, &trials)?;
            outputs.write(&a.out, &buf)?;
        }
    }
    finish(
        outputs,
        &manifest_for(&a.manifest, &a.out),
        "simulate",
        Some(a.seed),
        serde_json::to_value(a)?,
        input_digests(&[&a.params, &a.stimuli])?,
    )
}

#[derive(Serialize, Deserialize)]
struct PredictionRow {
    participant_id: String,
    stim_id: String,
    strategy: String,
    draw: usize,
    value: f64,
}

#[derive(Serialize)]
struct SummaryRow {
    participant_id: String,
    stim_id: String,
    strategy: String,
    n_draws: usize,
    mean: f64,
    sd: f64,
    q025: f64,
    q10: f64,
    q25: f64,
    q50: f64,
    q75: f64,
    q90: f64,
    q975: f64,
}

fn prediction_file_name(s: Strategy) -> String {
    format!("predictions_{}.csv", s.to_string().replace(':', "_"))
}

fn run_predict(a: &PredictArgs) -> Result<()> {
    if a.draws == 0 {
        bail!("--draws must be positive");
    }
    let params = read_params(&a.params)?;
    if !params.operator.is_projection() {
        bail!("predictions compose projection operators; {} is not one", params.operator);
    }
    let (ctx, stimuli) = scatter_stimuli(read_stimuli(&a.stimuli)?)?;
    let strategies: Vec<Strategy> = match a.strategy {
        Some(s) => vec![s],
        None => Strategy::ALL.to_vec(),
    };
    let participants: Vec<(&String, _)> = params
        .params
        .iter()
        .filter(|(pid, _)| a.participant.as_ref().is_none_or(|p| p == *pid))
        .map(|(pid, pp)| Ok((pid, pp.params.as_projection()?)))
        .collect::<Result<_>>()?;
    if participants.is_empty() {
        bail!("no matching participants in {}", a.params.display());
    }
    let jobs: Vec<(&String, _, &ScatterStimulus)> = participants
        .iter()
        .flat_map(|(pid, proj)| stimuli.iter().map(move |s| (*pid, *proj, s)))
        .collect();
    let predicted: Vec<Vec<(Strategy, PredictiveDistribution)>> = jobs
        .par_iter()
        .map(|(pid, proj, s)| {
            let seed = derive_seed_str(a.seed, "participant", pid);
            Ok(predict_all_strategies(s, &ctx, proj, a.draws, seed)?
                .into_iter()
                .filter(|(st, _)| strategies.contains(st))
                .collect())
        })
        .collect::<Result<_>>()?;

    let mut outputs = Outputs::default();
    for &strategy in &strategies {
        let mut rows = Vec::new();
        for ((pid, _, s), preds) in jobs.iter().zip(&predicted) {
            let (_, dist) = preds.iter().find(|(st, _)| *st == strategy).expect("strategy predicted");
            rows.extend(dist.draws.iter().enumerate().map(|(k, &value)| PredictionRow {
                participant_id: (*pid).clone(),
                stim_id: s.id.clone(),
                strategy: strategy.to_string(),
                draw: k,
                value,
            }));
        }
        outputs.write(&a.out_dir.join(prediction_file_name(strategy)), &csv_bytes(&rows)?)?;
    }
    if a.draws >= percept_ops::composition::MIN_SUMMARY_DRAWS {
        let mut rows = Vec::new();
        for ((pid, _, s), preds) in jobs.iter().zip(&predicted) {
            for (strategy, dist) in preds {
                let q = dist.summary()?;
                rows.push(SummaryRow {
                    participant_id: (*pid).clone(),
                    stim_id: s.id.clone(),
                    strategy: strategy.to_string(),
                    n_draws: dist.draws.len(),
                    mean: q.mean,
                    sd: q.sd,
                    q025: q.q025,
                    q10: q.q10,
                    q25: q.q25,
                    q50: q.q50,
                    q75: q.q75,
                    q90: q.q90,
                    q975: q.q975,
                });
            }
        }
        outputs.write(&a.out_dir.join("summary.csv"), &csv_bytes(&rows)?)?;
    } else {
        eprintln!(
            "note: summary.csv needs at least {} draws; skipped",
            percept_ops::composition::MIN_SUMMARY_DRAWS
        );
    }
    finish(
        outputs,
        &a.manifest.clone().unwrap_or_else(|| a.out_dir.join("manifest.json")),
        "predict",
        Some(a.seed),
        serde_json::to_value(a)?,
        input_digests(&[&a.params, &a.stimuli])?,
    )
}

#[derive(Serialize)]
struct ScoreRow {
    strategy: String,
    n: usize,
    mean_log_density: f64,
    rank: usize,
    pit_ks_p: f64,
    pit_in_band: bool,
}

#[derive(Serialize)]
struct CoverageOut {
    strategy: String,
    level: f64,
    coverage: f64,
    n: usize,
}

#[derive(Serialize)]
struct PitOut {
    strategy: String,
    participant_id: String,
    stim_id: String,
    pit: f64,
}

#[derive(Serialize)]
struct OverlayOut {
    strategy: String,
    series: String,
    x: f64,
    density: f64,
}

#[derive(Serialize)]
struct DistanceOut {
    participant_id: String,
    bin: usize,
    distance_lo: f64,
    distance_hi: f64,
    distance_mean: f64,
    n: usize,
    empirical_sd: f64,
    model_sd: f64,
    sparse: bool,
}

type DrawTable = BTreeMap<String, BTreeMap<(String, String), Vec<f64>>>;

fn read_predictions(paths: &[PathBuf]) -> Result<DrawTable> {
    let mut table: DrawTable = BTreeMap::new();
    for path in paths {
        let mut rdr = csv::Reader::from_reader(open(path)?);
        for (i, row) in rdr.deserialize::<PredictionRow>().enumerate() {
            let row = row.with_context(|| format!("{} line {}", path.display(), i + 2))?;
            table
                .entry(row.strategy)
                .or_default()
                .entry((row.participant_id, row.stim_id))
                .or_default()
                .push(row.value);
        }
    }
    Ok(table)
}

fn read_observed(path: &Path) -> Result<Vec<MeanEstimate>> {
    let mut rdr = csv::Reader::from_reader(open(path)?);
    let headers = rdr.headers()?.clone();
    for col in ["participant_id", "stim_id", "response"] {
        if !headers.iter().any(|h| h == col) {
            bail!("{}: missing column `{col}`", path.display());
        }
    }
    rdr.deserialize::<MeanEstimate>()
        .enumerate()
        .map(|(i, r)| r.with_context(|| format!("{} line {}", path.display(), i + 2)))
        .collect()
}

fn run_evaluate(a: &EvaluateArgs) -> Result<()> {
    if a.observed.is_none() && a.trials.is_none() {
        bail!("nothing to evaluate: pass --observed with --predictions, or --trials with --params");
    }
    let mut inputs: Vec<&Path> = Vec::new();
    let mut outputs = Outputs::default();

    if let Some(obs_path) = &a.observed {
        inputs.push(obs_path);
        inputs.extend(a.predictions.iter().map(PathBuf::as_path));
        let observed = read_observed(obs_path)?;
        let table = read_predictions(&a.predictions)?;
        if table.is_empty() {
            bail!("no predictions found");
        }
        let to_space: Box<dyn Fn(f64) -> Result<f64>> = match a.space {
            Space::Data => Box::new(Ok),
            Space::Va => {
                let Some(path) = &a.stimuli else {
                    bail!("--space va needs --stimuli for the chart geometry");
                };
                inputs.push(path);
                let (ctx, _) = scatter_stimuli(read_stimuli(path)?)?;
                Box::new(move |v| Ok(ctx.value_to_va(v, Axis::Y)?))
            }
        };
        let obs: Vec<f64> = observed.iter().map(|o| to_space(o.response)).collect::<Result<_>>()?;
        let mut aligned: Vec<(String, Vec<Vec<f64>>)> = Vec::new();
        for (strategy, sets) in &table {
            let draws = observed
                .iter()
                .map(|o| {
                    let key = (o.participant_id.clone(), o.stim_id.clone());
                    let d = sets.get(&key).with_context(|| {
                        format!("strategy {strategy} has no draws for {} / {}", o.participant_id, o.stim_id)
                    })?;
                    d.iter().map(|&v| to_space(v)).collect::<Result<Vec<f64>>>()
                })
                .collect::<Result<Vec<_>>>()?;
            aligned.push((strategy.clone(), draws));
        }
        let scores = percept_ops::composition::compare_strategies(&obs, &aligned, &a.levels)?;
        let band = pit_ecdf_band(obs.len(), a.band_alpha, a.band_sims, derive_seed(a.seed, "band", 0))?;
        let mode = match a.pit {
            PitArg::Randomized => PitMode::Randomized,
            PitArg::Mid => PitMode::Mid,
        };
        let mut score_rows = Vec::new();
        let mut coverage_rows = Vec::new();
        let mut pit_rows = Vec::new();
        let mut overlay_rows = Vec::new();
        for ((strategy, draws), score) in aligned.iter().zip(&scores) {
            let mut rng = rng_from_seed(derive_seed_str(a.seed, "pit", strategy));
            let pits = pit_values(&obs, draws, mode, &mut rng)?;
            for row in interval_coverage(&obs, draws, &a.levels)? {
                coverage_rows.push(CoverageOut {
                    strategy: strategy.clone(),
                    level: row.level,
                    coverage: row.coverage,
                    n: row.n,
                });
            }
            score_rows.push(ScoreRow {
                strategy: strategy.clone(),
                n: obs.len(),
                mean_log_density: score.mean_log_density,
                rank: score.rank,
                pit_ks_p: ks_test(&pits, |u| u.clamp(0.0, 1.0)),
                pit_in_band: band.contains(&pits),
            });
            pit_rows.extend(observed.iter().zip(&pits).map(|(o, &pit)| PitOut {
                strategy: strategy.clone(),
                participant_id: o.participant_id.clone(),
                stim_id: o.stim_id.clone(),
                pit,
            }));
            let n_rep = a.overlay_replicates.min(draws.iter().map(Vec::len).min().unwrap_or(0));
            let replicates: Vec<Vec<f64>> = (0..n_rep).map(|k| draws.iter().map(|d| d[k]).collect()).collect();
            if obs.len() >= 2 {
                for row in density_overlay(&obs, &replicates, 128)? {
                    overlay_rows.push(OverlayOut {
                        strategy: strategy.clone(),
                        series: row.series,
                        x: row.x,
                        density: row.density,
                    });
                }
            }
        }
        outputs.write(&a.out_dir.join("scores.csv"), &csv_bytes(&score_rows)?)?;
        outputs.write(&a.out_dir.join("coverage.csv"), &csv_bytes(&coverage_rows)?)?;
        outputs.write(&a.out_dir.join("pit.csv"), &csv_bytes(&pit_rows)?)?;
        outputs.write(&a.out_dir.join("ecdf_band.csv"), &csv_bytes(&band.rows())?)?;
        if !overlay_rows.is_empty() {
            outputs.write(&a.out_dir.join("overlay.csv"), &csv_bytes(&overlay_rows)?)?;
        }
    }

    if let (Some(trials_path), Some(params_path)) = (&a.trials, &a.params) {
        inputs.push(trials_path);
        inputs.push(params_path);
        let trials = read_trials_file(trials_path)?;
        let params = read_params(params_path)?;
        let mut rows = Vec::new();
        for (pid, pp) in &params.params {
            let proj = pp.params.as_projection()?;
            let (errors, distances): (Vec<f64>, Vec<f64>) = trials
                .iter()
                .filter(|t| &t.participant_id == pid && t.task == params.operator)
                .map(projection_observation)
                .collect::<percept_ops::Result<Vec<_>>>()?
                .into_iter()
                .unzip();
            if errors.is_empty() {
                continue;
            }
            for b in error_distance_summary(&errors, &distances, &proj, a.distance_bins)? {
                rows.push(DistanceOut {
                    participant_id: pid.clone(),
                    bin: b.bin,
                    distance_lo: b.distance_lo,
                    distance_hi: b.distance_hi,
                    distance_mean: b.distance_mean,
                    n: b.n,
                    empirical_sd: b.empirical_sd,
                    model_sd: b.model_sd,
                    sparse: b.sparse,
                });
            }
        }
        if rows.is_empty() {
            bail!("no {} trials match the fitted participants", params.operator);
        }
        outputs.write(&a.out_dir.join("error_distance.csv"), &csv_bytes(&rows)?)?;
    }
    finish(
        outputs,
        &a.manifest.clone().unwrap_or_else(|| a.out_dir.join("manifest.json")),
        "evaluate",
        Some(a.seed),
        serde_json::to_value(a)?,
        input_digests(&inputs)?,
    )
}

#[derive(Serialize)]
struct VaOut {
    axis: &'static str,
    input: f64,
    result: f64,
    inverse: bool,
    displacement: bool,
}

fn run_va(a: &VaArgs) -> Result<()> {
    let ctx: ViewingContext = match &a.context {
        Some(path) => serde_json::from_reader(open(path)?).with_context(|| format!("reading {}", path.display()))?,
        None => ViewingContext::curve_chart(a.distance_cm, a.px_per_cm)?,
    };
    let axis: Axis = a.axis.into();
    let result = match (a.inverse, a.displacement) {
        (false, false) => ctx.value_to_va(a.value, axis)?,
        (false, true) => ctx.data_to_va(a.value, axis)?,
        (true, false) => ctx.va_to_value(a.value, axis)?,
        (true, true) => ctx.va_to_data(a.value, axis)?,
    };
    let out = VaOut {
        axis: match a.axis {
            AxisArg::X => "x",
            AxisArg::Y => "y",
        },
        input: a.value,
        result,
        inverse: a.inverse,
        displacement: a.displacement,
    };
    match &a.out {
        Some(path) => {
            let mut outputs = Outputs::default();
            outputs.write(path, &json_bytes(&out)?)?;
            let inputs: Vec<&Path> = a.context.iter().map(PathBuf::as_path).collect();
            finish(
                outputs,
                &manifest_for(&a.manifest, path),
                "va",
                None,
                serde_json::to_value(a)?,
                input_digests(&inputs)?,
            )
        }
        None => {
            println!("{}", serde_json::to_string(&out)?);
            Ok(())
        }
    }
}

fn run_validate(a: &ValidateArgs) -> ExitCode {
    let reader = match open(&a.file) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let outcome: std::result::Result<(), String> = match a.schema {
        Schema::Trials => read_trials(reader).map(|_| ()).map_err(|e| e.to_string()),
        Schema::Params => serde_json::from_reader::<_, ParamsFile>(reader)
            .map(|_| ())
            .map_err(|e| e.to_string()),
        Schema::Stimuli => StimulusFile::read(reader)
            .map(|(_, warnings)| {
                for w in warnings {
                    println!("warning: {w}");
                }
            })
            .map_err(|e| e.to_string()),
        Schema::Context => serde_json::from_reader::<_, ViewingContext>(reader)
            .map(|_| ())
            .map_err(|e| e.to_string()),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(message) => {
            println!("{}: {message}", a.file.display());
            ExitCode::FAILURE
        }
    }
}
