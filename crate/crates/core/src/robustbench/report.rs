use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AttackKind, AttackMode, RobustError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetResult {
    pub node: usize,
    pub correct: bool,
}

/// One evaluated instance: a model, a seed and one attack trial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub model: String,
    pub kind: AttackKind,
    pub mode: AttackMode,
    /// Noise ratio or edge budget.
    pub param: f64,
    pub seed: u64,
    pub trial: usize,
    pub accuracy: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub targets: Vec<TargetResult>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub model: String,
    pub kind: AttackKind,
    pub mode: AttackMode,
    pub param: f64,
    pub mean: f64,
    /// Population standard deviation over the `n` outcomes.
    pub std: f64,
    pub n: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RobustReport {
    pub rows: Vec<ReportRow>,
    pub outcomes: Vec<Outcome>,
    pub notes: Vec<String>,
}

impl RobustReport {
    /// Aggregates outcomes into rows, one per (model, kind, mode, param) in
    /// order of first appearance.
    pub fn from_outcomes(outcomes: Vec<Outcome>, notes: Vec<String>) -> Self {
        let mut rows: Vec<(ReportRow, Vec<f64>)> = Vec::new();
        for o in &outcomes {
            let pos = rows.iter().position(|(r, _)| {
                r.model == o.model && r.kind == o.kind && r.mode == o.mode && r.param == o.param
            });
            let i = match pos {
                Some(i) => i,
                None => {
                    rows.push((
                        ReportRow {
                            model: o.model.clone(),
                            kind: o.kind,
                            mode: o.mode,
                            param: o.param,
                            mean: 0.0,
                            std: 0.0,
                            n: 0,
                        },
                        Vec::new(),
                    ));
                    rows.len() - 1
                }
            };
            rows[i].1.push(o.accuracy);
        }
        let rows = rows
            .into_iter()
            .map(|(mut r, xs)| {
                let n = xs.len() as f64;
                r.mean = xs.iter().sum::<f64>() / n;
                r.std = (xs.iter().map(|x| (x - r.mean).powi(2)).sum::<f64>() / n).sqrt();
                r.n = xs.len();
                r
            })
            .collect();
        Self {
            rows,
            outcomes,
            notes,
        }
    }

    pub fn row(
        &self,
        model: &str,
        kind: AttackKind,
        mode: AttackMode,
        param: f64,
    ) -> Option<&ReportRow> {
        self.rows
            .iter()
            .find(|r| r.model == model && r.kind == kind && r.mode == mode && r.param == param)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), RobustError> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Writes `<stem>.csv` and `<stem>.json` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>, stem: &str) -> Result<(), RobustError> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        self.write_csv(fs::File::create(dir.join(format!("{stem}.csv")))?)?;
        fs::write(dir.join(format!("{stem}.json")), self.to_json())?;
        Ok(())
    }
}
