use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Scores paired with binary labels (`true` = positive, i.e. malicious).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabeledScores {
    scores: Vec<f64>,
    labels: Vec<bool>,
}

impl LabeledScores {
    pub fn new(scores: Vec<f64>, labels: Vec<bool>) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(Error::InvalidInput(format!(
                "{} scores but {} labels",
                scores.len(),
                labels.len()
            )));
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::InvalidInput("non-finite score".into()));
        }
        Ok(Self { scores, labels })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }

    pub fn negatives(&self) -> usize {
        self.len() - self.positives()
    }

    fn require_both(&self) -> Result<()> {
        let (p, n) = (self.positives(), self.negatives());
        if p == 0 || n == 0 {
            return Err(Error::SingleClass {
                positives: p,
                negatives: n,
            });
        }
        Ok(())
    }

    /// Cumulative (tp, fp) after each distinct score, scanning from the
    /// highest score down. Tied scores form one step.
    fn steps(&self) -> Vec<(usize, usize)> {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_by(|&a, &b| self.scores[b].total_cmp(&self.scores[a]));
        let mut out = Vec::new();
        let (mut tp, mut fp) = (0, 0);
        for (k, &i) in idx.iter().enumerate() {
            if self.labels[i] {
                tp += 1;
            } else {
                fp += 1;
            }
            let last_of_group = idx
                .get(k + 1)
                .is_none_or(|&j| self.scores[j] != self.scores[i]);
            if last_of_group {
                out.push((tp, fp));
            }
        }
        out
    }
}

/// Area under the ROC curve by trapezoids over tie groups.
pub fn auroc(ls: &LabeledScores) -> Result<f64> {
    ls.require_both()?;
    let (p, n) = (ls.positives() as f64, ls.negatives() as f64);
    let mut area = 0.0;
    let (mut prev_tp, mut prev_fp) = (0usize, 0usize);
    for (tp, fp) in ls.steps() {
        area += (fp - prev_fp) as f64 * (tp + prev_tp) as f64 / 2.0;
        prev_tp = tp;
        prev_fp = fp;
    }
    Ok(area / (p * n))
}

/// Average precision: Σ (R_k − R_{k−1}) P_k over descending tie groups.
pub fn auprc(ls: &LabeledScores) -> Result<f64> {
    ls.require_both()?;
    let p = ls.positives() as f64;
    let mut ap = 0.0;
    let mut prev_tp = 0usize;
    for (tp, fp) in ls.steps() {
        if tp > prev_tp {
            ap += (tp - prev_tp) as f64 / p * (tp as f64 / (tp + fp) as f64);
        }
        prev_tp = tp;
    }
    Ok(ap)
}

/// ROC points `(fpr, tpr)` from (0, 0) to (1, 1).
pub fn roc_curve(ls: &LabeledScores) -> Result<Vec<(f64, f64)>> {
    ls.require_both()?;
    let (p, n) = (ls.positives() as f64, ls.negatives() as f64);
    let mut out = vec![(0.0, 0.0)];
    out.extend(
        ls.steps()
            .into_iter()
            .map(|(tp, fp)| (fp as f64 / n, tp as f64 / p)),
    );
    Ok(out)
}

/// PR points `(recall, precision)`, one per tie group.
pub fn pr_curve(ls: &LabeledScores) -> Result<Vec<(f64, f64)>> {
    ls.require_both()?;
    let p = ls.positives() as f64;
    Ok(ls
        .steps()
        .into_iter()
        .map(|(tp, fp)| (tp as f64 / p, tp as f64 / (tp + fp) as f64))
        .collect())
}

/// Two-column CSV point list with a header row.
pub fn write_curve_csv(
    w: &mut impl Write,
    header: (&str, &str),
    points: &[(f64, f64)],
) -> Result<()> {
    writeln!(w, "{},{}", header.0, header.1)?;
    for (x, y) in points {
        writeln!(w, "{x},{y}")?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn new(tp: usize, fp: usize, tn: usize, fn_: usize) -> Self {
        Self { tp, fp, tn, fn_ }
    }

    /// Counts from parallel predicted and true labels.
    pub fn from_predictions(predicted: &[bool], truth: &[bool]) -> Result<Self> {
        if predicted.len() != truth.len() {
            return Err(Error::InvalidInput(
                "prediction and label counts differ".into(),
            ));
        }
        let mut c = Self::default();
        for (&p, &t) in predicted.iter().zip(truth) {
            match (p, t) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        Ok(c)
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrecisionRecallF1 {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

/// Undefined when a denominator is zero.
pub fn precision_recall_f1(c: &ConfusionCounts) -> PrecisionRecallF1 {
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let f1 = ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn_);
    PrecisionRecallF1 {
        precision,
        recall,
        f1,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rates {
    pub tpr: Option<f64>,
    pub fpr: Option<f64>,
    pub tnr: Option<f64>,
    pub fnr: Option<f64>,
}

pub fn rates(c: &ConfusionCounts) -> Rates {
    Rates {
        tpr: ratio(c.tp, c.tp + c.fn_),
        fpr: ratio(c.fp, c.fp + c.tn),
        tnr: ratio(c.tn, c.fp + c.tn),
        fnr: ratio(c.fn_, c.tp + c.fn_),
    }
}
