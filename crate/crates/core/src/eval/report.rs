use std::io::{BufRead, Write};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::metrics::{auprc, auroc, precision_recall_f1, rates, ConfusionCounts, LabeledScores};
use crate::Result;

/// Written in place of a metric whose denominator is zero.
pub const UNDEFINED: &str = "undefined";

mod metric {
    use super::*;

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Value(f64),
        Marker(String),
    }

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
        match v {
            Some(x) => s.serialize_f64(*x),
            None => s.serialize_str(UNDEFINED),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> std::result::Result<Option<f64>, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Value(x) => Ok(Some(x)),
            Repr::Marker(m) if m == UNDEFINED => Ok(None),
            Repr::Marker(m) => Err(serde::de::Error::custom(format!("unexpected metric {m:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    #[serde(with = "metric")]
    pub auroc: Option<f64>,
    #[serde(with = "metric")]
    pub auprc: Option<f64>,
    #[serde(with = "metric")]
    pub precision: Option<f64>,
    #[serde(with = "metric")]
    pub recall: Option<f64>,
    #[serde(with = "metric")]
    pub f1: Option<f64>,
    #[serde(with = "metric")]
    pub tpr: Option<f64>,
    #[serde(with = "metric")]
    pub fpr: Option<f64>,
    #[serde(with = "metric")]
    pub tnr: Option<f64>,
    #[serde(with = "metric")]
    pub fnr: Option<f64>,
}

impl MetricSet {
    pub const NAMES: [&'static str; 9] = [
        "auroc",
        "auprc",
        "precision",
        "recall",
        "f1",
        "tpr",
        "fpr",
        "tnr",
        "fnr",
    ];

    pub fn values(&self) -> [Option<f64>; 9] {
        [
            self.auroc,
            self.auprc,
            self.precision,
            self.recall,
            self.f1,
            self.tpr,
            self.fpr,
            self.tnr,
            self.fnr,
        ]
    }

    fn from_values(v: [Option<f64>; 9]) -> Self {
        Self {
            auroc: v[0],
            auprc: v[1],
            precision: v[2],
            recall: v[3],
            f1: v[4],
            tpr: v[5],
            fpr: v[6],
            tnr: v[7],
            fnr: v[8],
        }
    }
}

/// Metrics for one named evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub name: String,
    pub samples: usize,
    pub positives: usize,
    pub counts: ConfusionCounts,
    pub metrics: MetricSet,
}

/// Rank metrics from `scores`, threshold metrics from `predicted`.
/// Rank metrics are undefined when only one class is present.
pub fn evaluate(
    name: &str,
    scores: &[f64],
    predicted: &[bool],
    truth: &[bool],
) -> Result<ReportRow> {
    let ls = LabeledScores::new(scores.to_vec(), truth.to_vec())?;
    let counts = ConfusionCounts::from_predictions(predicted, truth)?;
    let both = ls.positives() > 0 && ls.negatives() > 0;
    let prf = precision_recall_f1(&counts);
    let r = rates(&counts);
    Ok(ReportRow {
        name: name.to_string(),
        samples: ls.len(),
        positives: ls.positives(),
        counts,
        metrics: MetricSet {
            auroc: if both { Some(auroc(&ls)?) } else { None },
            auprc: if both { Some(auprc(&ls)?) } else { None },
            precision: prf.precision,
            recall: prf.recall,
            f1: prf.f1,
            tpr: r.tpr,
            fpr: r.fpr,
            tnr: r.tnr,
            fnr: r.fnr,
        },
    })
}

/// Per-metric mean over the rows where the metric is defined; counts are summed.
pub fn average_rows(name: &str, rows: &[ReportRow]) -> ReportRow {
    let mut counts = ConfusionCounts::default();
    let (mut samples, mut positives) = (0, 0);
    let mut sums = [(0.0, 0usize); 9];
    for row in rows {
        samples += row.samples;
        positives += row.positives;
        counts.tp += row.counts.tp;
        counts.fp += row.counts.fp;
        counts.tn += row.counts.tn;
        counts.fn_ += row.counts.fn_;
        for (acc, v) in sums.iter_mut().zip(row.metrics.values()) {
            if let Some(v) = v {
                acc.0 += v;
                acc.1 += 1;
            }
        }
    }
    ReportRow {
        name: name.to_string(),
        samples,
        positives,
        counts,
        metrics: MetricSet::from_values(sums.map(|(s, c)| (c > 0).then(|| s / c as f64))),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub rows: Vec<ReportRow>,
}

impl Report {
    pub fn push(&mut self, row: ReportRow) {
        self.rows.push(row);
    }

    /// Fixed-width text table, one row per evaluation.
    pub fn write_table(&self, w: &mut impl Write) -> Result<()> {
        let name_w = self
            .rows
            .iter()
            .map(|r| r.name.len())
            .max()
            .unwrap_or(0)
            .max(4);
        write!(
            w,
            "{:<name_w$} {:>8} {:>8} {:>6} {:>6} {:>6} {:>6}",
            "name", "samples", "pos", "tp", "fp", "tn", "fn"
        )?;
        for m in MetricSet::NAMES {
            write!(w, " {m:>9}")?;
        }
        writeln!(w)?;
        for r in &self.rows {
            let c = r.counts;
            write!(
                w,
                "{:<name_w$} {:>8} {:>8} {:>6} {:>6} {:>6} {:>6}",
                r.name, r.samples, r.positives, c.tp, c.fp, c.tn, c.fn_
            )?;
            for v in r.metrics.values() {
                match v {
                    Some(x) => write!(w, " {x:>9.4}")?,
                    None => write!(w, " {UNDEFINED:>9}")?,
                }
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn table(&self) -> String {
        let mut buf = Vec::new();
        self.write_table(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("table is utf-8")
    }

    /// One JSON object per row.
    pub fn write_jsonl(&self, w: &mut impl Write) -> Result<()> {
        for r in &self.rows {
            serde_json::to_writer(&mut *w, r)?;
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn read_jsonl(r: impl BufRead) -> Result<Self> {
        let mut rows = Vec::new();
        for line in r.lines() {
            let line = line?;
            if !line.trim().is_empty() {
                rows.push(serde_json::from_str(&line)?);
            }
        }
        Ok(Self { rows })
    }
}
