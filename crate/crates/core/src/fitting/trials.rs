//! Trial records, the trial CSV format, and participant exclusion.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{mean, pearson};
use crate::operators::OperatorKind;
use crate::perceptual_space::{AxisMapping, Axis, ViewingContext};

/// Exact header of the trial CSV.
pub const TRIAL_COLUMNS: [&str; 17] = [
    "participant_id",
    "task",
    "trial_id",
    "stim_id",
    "distance_cm",
    "px_per_cm",
    "chart_w_px",
    "chart_h_px",
    "x_min",
    "x_max",
    "y_min",
    "y_max",
    "true_x",
    "true_y",
    "resp_x",
    "resp_y",
    "condition",
];

/// One elicited response.
///
/// `true_*`/`resp_*` are data-space coordinates, except for `max_slope`
/// trials where `true_y`/`resp_y` hold the true and perceived maximum slope
/// in visual-angle units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub participant_id: String,
    pub task: OperatorKind,
    pub trial_id: String,
    pub stim_id: String,
    pub distance_cm: f64,
    pub px_per_cm: f64,
    pub chart_w_px: f64,
    pub chart_h_px: f64,
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub true_x: f64,
    pub true_y: f64,
    pub resp_x: f64,
    pub resp_y: f64,
    pub condition: String,
}

impl TrialRecord {
    pub fn context(&self) -> Result<ViewingContext> {
        ViewingContext::new(
            self.distance_cm,
            self.px_per_cm,
            AxisMapping::new(self.x_min, self.x_max, self.chart_w_px)?,
            AxisMapping::new(self.y_min, self.y_max, self.chart_h_px)?,
        )
    }

    /// Axis along which the task's response is scored.
    pub fn response_axis(&self) -> Axis {
        match self.task {
            OperatorKind::ProjectToAxisY | OperatorKind::ProjectToCurve | OperatorKind::MaxSlope => {
                Axis::Y
            }
            _ => Axis::X,
        }
    }

    /// True and response values along the response axis.
    pub fn scored_pair(&self) -> (f64, f64) {
        match self.response_axis() {
            Axis::X => (self.true_x, self.resp_x),
            Axis::Y => (self.true_y, self.resp_y),
        }
    }

    /// Checks the record's own invariants.
    pub fn validate(&self) -> Result<()> {
        let ctx = self.context()?;
        for (name, v) in [
            ("true_x", self.true_x),
            ("true_y", self.true_y),
            ("resp_x", self.resp_x),
            ("resp_y", self.resp_y),
        ] {
            if !v.is_finite() {
                return Err(Error::schema(name, "must be finite"));
            }
        }
        let within = |v: f64, axis: &AxisMapping| {
            let span = axis.span();
            v >= axis.data_min - span && v <= axis.data_max + span
        };
        if !within(self.resp_x, &ctx.x_axis) {
            return Err(Error::schema("resp_x", "outside the extended display bounds"));
        }
        if self.task != OperatorKind::MaxSlope && !within(self.resp_y, &ctx.y_axis) {
            return Err(Error::schema("resp_y", "outside the extended display bounds"));
        }
        Ok(())
    }
}

/// Reads and validates a trial CSV.
pub fn read_trials<R: Read>(reader: R) -> Result<Vec<TrialRecord>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    check_header(rdr.headers()?)?;
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<TrialRecord>().enumerate() {
        let line = i + 2;
        let rec = row.map_err(|e| Error::schema(format!("line {line}"), csv_message(&e)))?;
        rec.validate().map_err(|e| match e {
            Error::Schema { field, message } => {
                Error::schema(format!("line {line}: {field}"), message)
            }
            other => Error::schema(format!("line {line}"), other.to_string()),
        })?;
        out.push(rec);
    }
    Ok(out)
}

fn csv_message(e: &csv::Error) -> String {
    match e.kind() {
        csv::ErrorKind::Deserialize { err, .. } => match err.field() {
            Some(idx) => format!(
                "column `{}`: {}",
                TRIAL_COLUMNS.get(idx as usize).unwrap_or(&"?"),
                err.kind()
            ),
            None => err.kind().to_string(),
        },
        _ => e.to_string(),
    }
}

/// Checks a header row against the exact trial CSV header.
pub fn check_header(header: &csv::StringRecord) -> Result<()> {
    let got: Vec<&str> = header.iter().collect();
    if let Some(missing) = TRIAL_COLUMNS.iter().find(|c| !got.contains(c)) {
        return Err(Error::schema(*missing, "missing column"));
    }
    if let Some(extra) = got.iter().find(|c| !TRIAL_COLUMNS.contains(c)) {
        return Err(Error::schema(*extra, "unexpected column"));
    }
    if got != TRIAL_COLUMNS {
        return Err(Error::schema(
            "header",
            format!("columns must appear in the order {}", TRIAL_COLUMNS.join(",")),
        ));
    }
    Ok(())
}

pub fn write_trials<W: Write>(writer: W, trials: &[TrialRecord]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    for t in trials {
        w.serialize(t)?;
    }
    if trials.is_empty() {
        w.write_record(TRIAL_COLUMNS)?;
    }
    w.flush()?;
    Ok(())
}

/// Participant ids in first-seen order with their trials.
pub fn group_by_participant(trials: &[TrialRecord]) -> Vec<(String, Vec<&TrialRecord>)> {
    let mut order: Vec<String> = Vec::new();
    let mut groups: BTreeMap<String, Vec<&TrialRecord>> = BTreeMap::new();
    for t in trials {
        if !groups.contains_key(&t.participant_id) {
            order.push(t.participant_id.clone());
        }
        groups.entry(t.participant_id.clone()).or_default().push(t);
    }
    order
        .into_iter()
        .map(|pid| {
            let g = groups.remove(&pid).expect("grouped");
            (pid, g)
        })
        .collect()
}

pub const MIN_CORRELATION: f64 = 0.5;
pub const MIN_DISTANCE_CM: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionReason {
    Correlation,
    Distance,
    TooFewTrials,
}

/// Screening outcome for one participant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantScreen {
    pub participant_id: String,
    pub n_trials: usize,
    pub correlation: Option<f64>,
    pub distance_cm: f64,
    pub reasons: Vec<ExclusionReason>,
}

impl ParticipantScreen {
    pub fn excluded(&self) -> bool {
        !self.reasons.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct ExclusionReport {
    pub kept: Vec<TrialRecord>,
    pub screens: Vec<ParticipantScreen>,
}

/// Drops participants whose responses correlate weakly with the truth or
/// who sat too close to the screen.
pub fn exclusion_filter(trials: &[TrialRecord]) -> ExclusionReport {
    let mut screens = Vec::new();
    let mut kept = Vec::new();
    for (pid, group) in group_by_participant(trials) {
        let (truth, resp): (Vec<f64>, Vec<f64>) = group.iter().map(|t| t.scored_pair()).unzip();
        let distance_cm = mean(&group.iter().map(|t| t.distance_cm).collect::<Vec<_>>());
        let correlation = (group.len() >= 2)
            .then(|| pearson(&truth, &resp))
            .filter(|r| r.is_finite());
        let mut reasons = Vec::new();
        match correlation {
            Some(r) if r < MIN_CORRELATION => reasons.push(ExclusionReason::Correlation),
            None => reasons.push(ExclusionReason::TooFewTrials),
            _ => {}
        }
        if distance_cm < MIN_DISTANCE_CM {
            reasons.push(ExclusionReason::Distance);
        }
        if reasons.is_empty() {
            kept.extend(group.iter().map(|t| (*t).clone()));
        }
        screens.push(ParticipantScreen {
            participant_id: pid,
            n_trials: group.len(),
            correlation,
            distance_cm,
            reasons,
        });
    }
    ExclusionReport { kept, screens }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn trial(pid: &str, truth: f64, resp: f64, distance: f64) -> TrialRecord {
        TrialRecord {
            participant_id: pid.into(),
            task: OperatorKind::ProjectToAxisY,
            trial_id: "t".into(),
            stim_id: "s".into(),
            distance_cm: distance,
            px_per_cm: 37.8,
            chart_w_px: 600.0,
            chart_h_px: 450.0,
            x_min: -5.0,
            x_max: 5.0,
            y_min: 0.0,
            y_max: 1.0,
            true_x: 1.0,
            true_y: truth,
            resp_x: 1.0,
            resp_y: resp,
            condition: String::new(),
        }
    }

    #[test]
    fn csv_roundtrip() {
        let trials = vec![trial("a", 0.25, 0.26, 50.0), trial("b", 0.5, 0.1 + 0.2, 48.5)];
        let mut buf = Vec::new();
        write_trials(&mut buf, &trials).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(&TRIAL_COLUMNS.join(",")));
        assert!(!text.contains('\r'));
        assert_eq!(read_trials(buf.as_slice()).unwrap(), trials);
    }

    #[test]
    fn header_errors_name_the_column() {
        let header = TRIAL_COLUMNS
            .iter()
            .filter(|c| **c != "distance_cm")
            .copied()
            .collect::<Vec<_>>()
            .join(",");
        let err = read_trials(format!("{header}\n").as_bytes()).unwrap_err();
        assert!(err.to_string().contains("distance_cm"), "{err}");
    }

    #[test]
    fn bad_rows_report_line_and_column() {
        let mut buf = Vec::new();
        write_trials(&mut buf, &[trial("a", 0.2, 0.2, 50.0)]).unwrap();
        let text = String::from_utf8(buf).unwrap().replace(",50.0,", ",fifty,");
        let err = read_trials(text.as_bytes()).unwrap_err().to_string();
        assert!(err.contains("line 2") && err.contains("distance_cm"), "{err}");
        let mut far = trial("a", 0.2, 5.0, 50.0);
        far.resp_y = 5.0;
        let mut buf = Vec::new();
        write_trials(&mut buf, &[far]).unwrap();
        assert!(read_trials(buf.as_slice()).is_err());
    }

    #[test]
    fn exclusion_rules() {
        let mut trials = Vec::new();
        let truths = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95];
        // Weak correlation.
        let noisy = [0.5, 0.2, 0.9, 0.1, 0.4, 0.3, 0.6, 0.2, 0.8, 0.3];
        for (t, r) in truths.iter().zip(noisy) {
            trials.push(trial("weak", *t, r, 50.0));
        }
        for t in truths {
            trials.push(trial("close", t, t + 0.01, 15.0));
            trials.push(trial("good", t, t * 0.97 + 0.02, 50.0));
        }
        let report = exclusion_filter(&trials);
        let by_id: BTreeMap<_, _> = report
            .screens
            .iter()
            .map(|s| (s.participant_id.as_str(), s))
            .collect();
        assert!(by_id["weak"].correlation.unwrap() < 0.5);
        assert_eq!(by_id["weak"].reasons, vec![ExclusionReason::Correlation]);
        assert_eq!(by_id["close"].reasons, vec![ExclusionReason::Distance]);
        assert!(by_id["good"].correlation.unwrap() > 0.95);
        assert!(!by_id["good"].excluded());
        assert!(report.kept.iter().all(|t| t.participant_id == "good"));
        assert_eq!(report.kept.len(), 10);
    }
}
