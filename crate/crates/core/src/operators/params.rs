//! Operator parameter records and the per-participant parameter file.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::distributions::{GaussianOpParams, Spread, WeibullErrorParams};
use crate::error::{ensure_finite, Error, Result};

/// Bias (degrees) and multiplicative spread of a projection operator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawProjection")]
pub struct ProjectionParams {
    pub beta: f64,
    pub alpha: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProjection {
    beta: f64,
    alpha: f64,
}

impl TryFrom<RawProjection> for ProjectionParams {
    type Error = Error;
    fn try_from(r: RawProjection) -> Result<Self> {
        ProjectionParams::new(r.beta, r.alpha)
    }
}

impl ProjectionParams {
    pub fn new(beta: f64, alpha: f64) -> Result<Self> {
        ensure_finite("projection params", &[beta, alpha])?;
        if alpha <= 0.0 {
            return Err(Error::schema("alpha", "must be positive"));
        }
        Ok(Self { beta, alpha })
    }
}

/// Parameters of the fused BisectArea + HighestPoint operator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBahp")]
pub struct BahpParams {
    pub ba: GaussianOpParams,
    pub hp: GaussianOpParams,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBahp {
    ba: GaussianOpParams,
    hp: GaussianOpParams,
}

impl TryFrom<RawBahp> for BahpParams {
    type Error = Error;
    fn try_from(r: RawBahp) -> Result<Self> {
        BahpParams::new(r.ba, r.hp)
    }
}

impl BahpParams {
    pub fn new(ba: GaussianOpParams, hp: GaussianOpParams) -> Result<Self> {
        ba.sigma().map_err(|_| Error::schema("ba", "needs a fixed sigma"))?;
        hp.sigma().map_err(|_| Error::schema("hp", "needs a fixed sigma"))?;
        Ok(Self { ba, hp })
    }
}

/// Parameters of the per-trial operator-selection mixture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMixture")]
pub struct MixtureParams {
    pub pi_ba: f64,
    pub ba: GaussianOpParams,
    pub hp: GaussianOpParams,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMixture {
    pi_ba: f64,
    ba: GaussianOpParams,
    hp: GaussianOpParams,
}

impl TryFrom<RawMixture> for MixtureParams {
    type Error = Error;
    fn try_from(r: RawMixture) -> Result<Self> {
        MixtureParams::new(r.pi_ba, r.ba, r.hp)
    }
}

impl MixtureParams {
    pub fn new(pi_ba: f64, ba: GaussianOpParams, hp: GaussianOpParams) -> Result<Self> {
        if !(0.0..=1.0).contains(&pi_ba) {
            return Err(Error::schema("pi_ba", "must lie in [0, 1]"));
        }
        BahpParams::new(ba, hp)?;
        Ok(Self { pi_ba, ba, hp })
    }
}

/// Operator tags used in trial files and parameter files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    ProjectToCurve,
    ProjectToAxisX,
    ProjectToAxisY,
    HighestPoint,
    MaxSlope,
    BisectArea,
    Bahp,
    Mixture,
}

impl OperatorKind {
    pub const ALL: [OperatorKind; 8] = [
        OperatorKind::ProjectToCurve,
        OperatorKind::ProjectToAxisX,
        OperatorKind::ProjectToAxisY,
        OperatorKind::HighestPoint,
        OperatorKind::MaxSlope,
        OperatorKind::BisectArea,
        OperatorKind::Bahp,
        OperatorKind::Mixture,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            OperatorKind::ProjectToCurve => "project_to_curve",
            OperatorKind::ProjectToAxisX => "project_to_axis_x",
            OperatorKind::ProjectToAxisY => "project_to_axis_y",
            OperatorKind::HighestPoint => "highest_point",
            OperatorKind::MaxSlope => "max_slope",
            OperatorKind::BisectArea => "bisect_area",
            OperatorKind::Bahp => "bahp",
            OperatorKind::Mixture => "mixture",
        }
    }

    pub fn is_projection(self) -> bool {
        matches!(
            self,
            OperatorKind::ProjectToCurve | OperatorKind::ProjectToAxisX | OperatorKind::ProjectToAxisY
        )
    }
}

impl std::fmt::Display for OperatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for OperatorKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        OperatorKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown operator tag `{s}`")))
    }
}

/// Parameters of any operator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OperatorParams {
    Projection(ProjectionParams),
    Weibull(WeibullErrorParams),
    Gaussian(GaussianOpParams),
    Bahp(BahpParams),
    Mixture(MixtureParams),
}

impl OperatorParams {
    /// Parses a parameter object for the given operator.
    ///
    /// `highest_point` accepts either Weibull y-error parameters or the
    /// Gaussian x-error form.
    pub fn from_json(kind: OperatorKind, value: Value) -> Result<Self> {
        let parsed = match kind {
            k if k.is_projection() => serde_json::from_value(value).map(OperatorParams::Projection),
            OperatorKind::HighestPoint if value.get("lambda_scale").is_some() => {
                serde_json::from_value(value).map(OperatorParams::Weibull)
            }
            OperatorKind::HighestPoint | OperatorKind::BisectArea => {
                serde_json::from_value(value).map(OperatorParams::Gaussian)
            }
            OperatorKind::MaxSlope => serde_json::from_value(value).map(OperatorParams::Weibull),
            OperatorKind::Bahp => serde_json::from_value(value).map(OperatorParams::Bahp),
            _ => serde_json::from_value(value).map(OperatorParams::Mixture),
        };
        parsed.map_err(|e| Error::schema("params", e.to_string()))
    }

    pub fn to_json(&self) -> Value {
        let v = match self {
            OperatorParams::Projection(p) => serde_json::to_value(p),
            OperatorParams::Weibull(p) => serde_json::to_value(p),
            OperatorParams::Gaussian(p) => serde_json::to_value(p),
            OperatorParams::Bahp(p) => serde_json::to_value(p),
            OperatorParams::Mixture(p) => serde_json::to_value(p),
        };
        v.expect("parameter records serialize")
    }

    /// Flat name/value view used for pooling and standard errors.
    pub fn named_values(&self) -> BTreeMap<String, f64> {
        fn gaussian(prefix: &str, g: &GaussianOpParams, out: &mut BTreeMap<String, f64>) {
            out.insert(format!("{prefix}beta"), g.beta);
            let (name, v) = match g.spread {
                Spread::Sigma(s) => ("sigma", s),
                Spread::Alpha(a) => ("alpha", a),
            };
            out.insert(format!("{prefix}{name}"), v);
        }
        let mut out = BTreeMap::new();
        match self {
            OperatorParams::Projection(p) => {
                out.insert("beta".into(), p.beta);
                out.insert("alpha".into(), p.alpha);
            }
            OperatorParams::Weibull(p) => {
                out.insert("lambda_scale".into(), p.lambda_scale);
                out.insert("k_shape".into(), p.k_shape);
            }
            OperatorParams::Gaussian(g) => gaussian("", g, &mut out),
            OperatorParams::Bahp(p) => {
                gaussian("ba_", &p.ba, &mut out);
                gaussian("hp_", &p.hp, &mut out);
            }
            OperatorParams::Mixture(p) => {
                out.insert("pi_ba".into(), p.pi_ba);
                gaussian("ba_", &p.ba, &mut out);
                gaussian("hp_", &p.hp, &mut out);
            }
        }
        out
    }

    pub fn as_projection(&self) -> Result<ProjectionParams> {
        match self {
            OperatorParams::Projection(p) => Ok(*p),
            _ => Err(Error::invalid("expected projection parameters")),
        }
    }

    pub fn as_weibull(&self) -> Result<WeibullErrorParams> {
        match self {
            OperatorParams::Weibull(p) => Ok(*p),
            _ => Err(Error::invalid("expected Weibull error parameters")),
        }
    }

    pub fn as_gaussian(&self) -> Result<GaussianOpParams> {
        match self {
            OperatorParams::Gaussian(p) => Ok(*p),
            _ => Err(Error::invalid("expected Gaussian operator parameters")),
        }
    }

    pub fn as_bahp(&self) -> Result<BahpParams> {
        match self {
            OperatorParams::Bahp(p) => Ok(*p),
            _ => Err(Error::invalid("expected BAHP parameters")),
        }
    }

    pub fn as_mixture(&self) -> Result<MixtureParams> {
        match self {
            OperatorParams::Mixture(p) => Ok(*p),
            _ => Err(Error::invalid("expected mixture parameters")),
        }
    }
}

/// One participant's parameters, with fit statistics when they came from a fit.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticipantParams {
    pub params: OperatorParams,
    pub loglik: Option<f64>,
    pub n: Option<usize>,
    pub se: BTreeMap<String, f64>,
    pub diagnostics: Vec<String>,
}

impl ParticipantParams {
    pub fn new(params: OperatorParams) -> Self {
        Self {
            params,
            loglik: None,
            n: None,
            se: BTreeMap::new(),
            diagnostics: Vec::new(),
        }
    }
}

/// `{operator, params: {participant_id: {...}}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParamsFile", into = "RawParamsFile")]
pub struct ParamsFile {
    pub operator: OperatorKind,
    pub params: BTreeMap<String, ParticipantParams>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParamsFile {
    operator: OperatorKind,
    params: BTreeMap<String, Map<String, Value>>,
}

const FIT_KEYS: [&str; 4] = ["loglik", "n", "se", "diagnostics"];

impl TryFrom<RawParamsFile> for ParamsFile {
    type Error = Error;
    fn try_from(raw: RawParamsFile) -> Result<Self> {
        if raw.params.is_empty() {
            return Err(Error::schema("params", "no participant entries"));
        }
        let mut params = BTreeMap::new();
        for (pid, mut obj) in raw.params {
            let field = |name: &str| format!("params.{pid}.{name}");
            let loglik = match obj.remove("loglik") {
                None | Some(Value::Null) => None,
                Some(v) => Some(
                    v.as_f64()
                        .ok_or_else(|| Error::schema(field("loglik"), "expected a number"))?,
                ),
            };
            let n = match obj.remove("n") {
                None | Some(Value::Null) => None,
                Some(v) => Some(
                    v.as_u64()
                        .ok_or_else(|| Error::schema(field("n"), "expected a count"))?
                        as usize,
                ),
            };
            let se = match obj.remove("se") {
                None | Some(Value::Null) => BTreeMap::new(),
                Some(v) => serde_json::from_value(v)
                    .map_err(|e| Error::schema(field("se"), e.to_string()))?,
            };
            let diagnostics = match obj.remove("diagnostics") {
                None | Some(Value::Null) => Vec::new(),
                Some(v) => serde_json::from_value(v)
                    .map_err(|e| Error::schema(field("diagnostics"), e.to_string()))?,
            };
            let parsed = OperatorParams::from_json(raw.operator, Value::Object(obj)).map_err(
                |e| match e {
                    Error::Schema { message, .. } => Error::schema(format!("params.{pid}"), message),
                    other => other,
                },
            )?;
            params.insert(
                pid,
                ParticipantParams {
                    params: parsed,
                    loglik,
                    n,
                    se,
                    diagnostics,
                },
            );
        }
        Ok(Self {
            operator: raw.operator,
            params,
        })
    }
}

impl From<ParamsFile> for RawParamsFile {
    fn from(file: ParamsFile) -> Self {
        let params = file
            .params
            .into_iter()
            .map(|(pid, entry)| {
                let Value::Object(mut obj) = entry.params.to_json() else {
                    unreachable!("parameter records are objects")
                };
                debug_assert!(FIT_KEYS.iter().all(|k| !obj.contains_key(*k)));
                if let Some(ll) = entry.loglik {
                    obj.insert("loglik".into(), ll.into());
                }
                if let Some(n) = entry.n {
                    obj.insert("n".into(), n.into());
                }
                if !entry.se.is_empty() {
                    obj.insert("se".into(), serde_json::to_value(&entry.se).expect("map"));
                }
                if !entry.diagnostics.is_empty() {
                    obj.insert("diagnostics".into(), entry.diagnostics.into());
                }
                (pid, obj)
            })
            .collect();
        RawParamsFile {
            operator: file.operator,
            params,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn params_file_roundtrip() {
        let mut entry = ParticipantParams::new(OperatorParams::Projection(
            ProjectionParams::new(0.123456789, 0.0501).unwrap(),
        ));
        entry.loglik = Some(-12.5);
        entry.n = Some(40);
        entry.se.insert("beta".into(), 0.01);
        let file = ParamsFile {
            operator: OperatorKind::ProjectToAxisY,
            params: BTreeMap::from([("p01".to_string(), entry)]),
        };
        let text = serde_json::to_string(&file).unwrap();
        let back: ParamsFile = serde_json::from_str(&text).unwrap();
        assert_eq!(back, file);
    }

    #[test]
    fn each_operator_parses() {
        let cases = [
            ("project_to_curve", r#"{"beta":0.1,"alpha":0.05}"#),
            ("highest_point", r#"{"lambda_scale":0.5,"k_shape":1.2}"#),
            ("highest_point", r#"{"beta":0.1,"sigma":0.3}"#),
            ("max_slope", r#"{"lambda_scale":0.5,"k_shape":1.2}"#),
            ("bisect_area", r#"{"beta":0.1,"sigma":0.3}"#),
            ("bahp", r#"{"ba":{"beta":0.1,"sigma":0.3},"hp":{"beta":0.0,"sigma":0.2}}"#),
            (
                "mixture",
                r#"{"pi_ba":0.4,"ba":{"beta":0.1,"sigma":0.3},"hp":{"beta":0.0,"sigma":0.2}}"#,
            ),
        ];
        for (op, body) in cases {
            let text = format!(r#"{{"operator":"{op}","params":{{"a":{body}}}}}"#);
            let file: ParamsFile = serde_json::from_str(&text).unwrap();
            let again: ParamsFile =
                serde_json::from_str(&serde_json::to_string(&file).unwrap()).unwrap();
            assert_eq!(file, again);
        }
    }

    #[test]
    fn invalid_entries_name_the_participant() {
        let text = r#"{"operator":"project_to_axis_y","params":{"p7":{"beta":0.1,"alpha":-1}}}"#;
        let err = serde_json::from_str::<ParamsFile>(text).unwrap_err().to_string();
        assert!(err.contains("p7"), "{err}");
        let text = r#"{"operator":"mixture","params":{"p1":{"pi_ba":1.5,"ba":{"beta":0,"sigma":1},"hp":{"beta":0,"sigma":1}}}}"#;
        assert!(serde_json::from_str::<ParamsFile>(text).is_err());
    }
}
