//! Best-fit score distributions and likelihood classification.

mod family;
mod fit;
mod simplex;

use serde::{Deserialize, Serialize};

pub use family::PdfFamily;
pub use fit::{
    fit_all, fit_best_pdf, fit_family, FittedPdf, Histogram, DEFAULT_BINS, MIN_BINS, MIN_SAMPLES,
};
pub use simplex::{nelder_mead, Minimum, SimplexOptions};

use crate::features::{
    aggregate_flows, apply_normalizer, block_of, build_sequences, FeatureSchema, NormalizerState,
    WindowConfig,
};
use crate::ingest::{FlowRecord, HostLabelSet, Label};
use crate::rvae::{anomaly_scores, SequenceVae};
use crate::{Error, Result};

/// Score distributions of normal and botnet instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorProfile {
    pub normal: FittedPdf,
    pub botnet: FittedPdf,
}

impl DetectorProfile {
    /// Fits both distributions from labeled calibration scores.
    pub fn fit(
        normal: &[f64],
        botnet: &[f64],
        families: &[PdfFamily],
        bins: usize,
        workers: usize,
    ) -> Result<Self> {
        Ok(Self {
            normal: fit_best_pdf(normal, families, bins, workers)?,
            botnet: fit_best_pdf(botnet, families, bins, workers)?,
        })
    }

    pub fn classify(&self, score: f64) -> Label {
        classify_densities(self.botnet.pdf(score), self.normal.pdf(score))
    }
}

/// Malicious only when the botnet density is strictly larger.
pub fn classify_densities(botnet: f64, normal: f64) -> Label {
    if botnet > normal {
        Label::Malicious
    } else {
        Label::Normal
    }
}

pub fn classify(profile: &DetectorProfile, score: f64) -> Label {
    profile.classify(score)
}

/// Verdict for one (window, source host) aggregate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub window_index: i64,
    pub src_ip: String,
    pub score: f64,
    pub verdict: Label,
    /// Ground truth from the host label set.
    pub label: Label,
}

/// Everything needed to turn raw flows into verdicts.
pub struct Detector<'a, M: ?Sized> {
    pub model: &'a M,
    pub profile: &'a DetectorProfile,
    pub normalizer: &'a NormalizerState,
    pub window: &'a WindowConfig,
    pub schema: &'a FeatureSchema,
    pub labels: &'a HostLabelSet,
    pub batch_size: usize,
    pub workers: usize,
}

impl<M: SequenceVae + Sync + ?Sized> Detector<'_, M> {
    /// Verdicts for flows that all belong to one block of N windows.
    pub fn detect_block(&self, flows: &[FlowRecord]) -> Result<Vec<Verdict>> {
        let raw = aggregate_flows(flows, self.window, self.schema, self.labels, None)?;
        if raw.is_empty() {
            return Ok(Vec::new());
        }
        let normalized = apply_normalizer(self.normalizer, &raw)?;
        let seqs = build_sequences(&normalized, self.window);
        let scores = anomaly_scores(self.model, &seqs, self.batch_size, self.workers)?;
        Ok(scores
            .into_iter()
            .map(|s| Verdict {
                verdict: self.profile.classify(s.score),
                window_index: s.window_index,
                src_ip: s.src_ip,
                score: s.score,
                label: s.label.unwrap_or_default(),
            })
            .collect())
    }

    pub fn stream(&self) -> StreamDetector<'_, M> {
        StreamDetector {
            detector: self,
            current: None,
            buffer: Vec::new(),
        }
    }
}

/// Buffers time-ordered flows and emits verdicts each time a block closes.
pub struct StreamDetector<'d, M: ?Sized> {
    detector: &'d Detector<'d, M>,
    current: Option<i64>,
    buffer: Vec<FlowRecord>,
}

impl<M: SequenceVae + Sync + ?Sized> StreamDetector<'_, M> {
    fn block(&self, ts: f64) -> i64 {
        let w = self.detector.window;
        block_of(w.window_of(ts), w.windows_per_sequence)
    }

    /// Adds one flow. A flow from a later block closes the current one and
    /// returns its verdicts.
    pub fn push(&mut self, flow: FlowRecord) -> Result<Vec<Verdict>> {
        let b = self.block(flow.ts);
        let mut out = Vec::new();
        match self.current {
            Some(c) if b < c => {
                return Err(Error::InvalidInput(format!(
                    "flow at ts {} belongs to block {b}, already past block {c}",
                    flow.ts
                )))
            }
            Some(c) if b > c => {
                out = self.detector.detect_block(&self.buffer)?;
                self.buffer.clear();
                self.current = Some(b);
            }
            Some(_) => {}
            None => self.current = Some(b),
        }
        self.buffer.push(flow);
        Ok(out)
    }

    /// Closes the open block.
    pub fn finish(&mut self) -> Result<Vec<Verdict>> {
        let out = self.detector.detect_block(&self.buffer)?;
        self.buffer.clear();
        self.current = None;
        Ok(out)
    }
}

/// Runs a stream detector over `flows`, which must be in time order.
pub fn detect_stream<M: SequenceVae + Sync + ?Sized>(
    detector: &Detector<'_, M>,
    flows: impl IntoIterator<Item = FlowRecord>,
) -> Result<Vec<Verdict>> {
    let mut stream = detector.stream();
    let mut out = Vec::new();
    for f in flows {
        out.extend(stream.push(f)?);
    }
    out.extend(stream.finish()?);
    Ok(out)
}
