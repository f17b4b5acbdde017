use serde::{Deserialize, Serialize};

use super::family::PdfFamily;
use super::simplex::{nelder_mead, SimplexOptions};
use crate::{Error, Result};

pub const MIN_SAMPLES: usize = 30;
pub const MIN_BINS: usize = 10;
pub const DEFAULT_BINS: usize = 50;

/// Density-normalized histogram over `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub density: Vec<f64>,
}

impl Histogram {
    pub fn new(samples: &[f64], bins: usize) -> Result<Self> {
        if bins < MIN_BINS {
            return Err(Error::InvalidConfig(format!(
                "need at least {MIN_BINS} bins, got {bins}"
            )));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite score".into()));
        }
        let lo = samples.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(hi > lo) {
            return Err(Error::DegenerateHistogram(lo));
        }
        let width = (hi - lo) / bins as f64;
        let mut counts = vec![0usize; bins];
        for &s in samples {
            let i = (((s - lo) / width) as usize).min(bins - 1);
            counts[i] += 1;
        }
        let norm = samples.len() as f64 * width;
        Ok(Self {
            lo,
            hi,
            density: counts.into_iter().map(|c| c as f64 / norm).collect(),
        })
    }

    pub fn bins(&self) -> usize {
        self.density.len()
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.bins() as f64
    }

    pub fn centers(&self) -> Vec<f64> {
        let w = self.width();
        (0..self.bins())
            .map(|i| self.lo + (i as f64 + 0.5) * w)
            .collect()
    }

    /// Sum of squared differences between `pdf` at the bin centers and the density.
    pub fn sse(&self, pdf: impl Fn(f64) -> f64) -> f64 {
        self.centers()
            .iter()
            .zip(&self.density)
            .map(|(&x, &d)| (pdf(x) - d).powi(2))
            .sum()
    }
}

/// A family with fitted parameters and the histogram it was fitted against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedPdf {
    pub family: PdfFamily,
    pub params: Vec<f64>,
    pub sse: f64,
    pub bins: usize,
    pub range: (f64, f64),
}

impl FittedPdf {
    pub fn pdf(&self, x: f64) -> f64 {
        self.family.pdf(&self.params, x)
    }
}

struct Moments {
    min: f64,
    max: f64,
    mean: f64,
    var: f64,
    median: f64,
}

impl Moments {
    fn of(samples: &[f64]) -> Self {
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        Self {
            min: sorted[0],
            max: sorted[sorted.len() - 1],
            mean,
            var,
            median: sorted[sorted.len() / 2],
        }
    }

    fn std(&self) -> f64 {
        self.var.sqrt()
    }
}

/// Maps between natural parameters and the unconstrained search space.
/// Positive parameters are searched on a log scale.
fn positive_mask(family: PdfFamily) -> &'static [bool] {
    match family {
        PdfFamily::Gamma | PdfFamily::GeneralizedLogistic | PdfFamily::FoldedCauchy => {
            &[true, false, true]
        }
        PdfFamily::Mielke => &[true, true, false, true],
        PdfFamily::Beta => &[true, true],
    }
}

fn to_search(family: PdfFamily, p: &[f64]) -> Vec<f64> {
    positive_mask(family)
        .iter()
        .zip(p)
        .map(|(&pos, &v)| if pos { v.max(1e-12).ln() } else { v })
        .collect()
}

fn from_search(family: PdfFamily, theta: &[f64], beta_frame: (f64, f64)) -> Vec<f64> {
    let mut p: Vec<f64> = positive_mask(family)
        .iter()
        .zip(theta)
        .map(|(&pos, &v)| if pos { v.exp() } else { v })
        .collect();
    if family == PdfFamily::Beta {
        p.extend([beta_frame.0, beta_frame.1]);
    }
    p
}

/// Starting points: method of moments where it exists, otherwise unit
/// shapes with location at the sample minimum and scale at the sample
/// standard deviation, plus one alternative start per family.
fn starts(family: PdfFamily, m: &Moments) -> Vec<Vec<f64>> {
    let std = m.std();
    let range = m.max - m.min;
    match family {
        PdfFamily::Gamma => {
            let shift = (m.mean - m.min).max(1e-9 * range);
            vec![
                vec![shift * shift / m.var, m.min, m.var / shift],
                vec![1.0, m.min - 0.01 * range, std],
            ]
        }
        PdfFamily::GeneralizedLogistic => vec![
            vec![1.0, m.min, std],
            vec![1.0, m.median, std * 3f64.sqrt() / std::f64::consts::PI],
        ],
        PdfFamily::FoldedCauchy => vec![
            vec![1.0, m.min, std],
            vec![0.5, m.min, (m.median - m.min).max(1e-9 * range)],
        ],
        PdfFamily::Mielke => vec![
            vec![1.0, 1.0, m.min, std],
            vec![2.0, 2.0, m.min, (m.median - m.min).max(1e-9 * range)],
        ],
        PdfFamily::Beta => {
            let u = (m.mean - m.min) / range;
            let v = m.var / (range * range);
            let common = u * (1.0 - u) / v - 1.0;
            let mom = if common > 0.0 {
                vec![u * common, (1.0 - u) * common]
            } else {
                vec![1.0, 1.0]
            };
            vec![mom, vec![1.0, 1.0]]
        }
    }
}

/// Fits one family by simplex search on SSE.
pub fn fit_family(samples: &[f64], family: PdfFamily, bins: usize) -> Result<FittedPdf> {
    if samples.len() < MIN_SAMPLES {
        return Err(Error::TooFewSamples {
            need: MIN_SAMPLES,
            got: samples.len(),
        });
    }
    let hist = Histogram::new(samples, bins)?;
    let m = Moments::of(samples);
    let frame = (m.min, m.max - m.min);
    let objective = |theta: &[f64]| {
        let p = from_search(family, theta, frame);
        if !family.valid(&p) {
            return f64::INFINITY;
        }
        hist.sse(|x| family.pdf(&p, x))
    };
    let loc_step = 0.1 * m.std().max(1e-12);
    let steps: Vec<f64> = positive_mask(family)
        .iter()
        .map(|&pos| if pos { 0.3 } else { loc_step })
        .collect();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for start in starts(family, &m) {
        let mut theta = to_search(family, &start);
        let mut f = objective(&theta);
        // Restarting from the result guards against a collapsed simplex.
        for _ in 0..3 {
            let r = nelder_mead(objective, &theta, &steps, SimplexOptions::default());
            let improved = r.f < f - 1e-15;
            if r.f <= f {
                theta = r.x;
                f = r.f;
            }
            if !improved {
                break;
            }
        }
        if f.is_finite() && best.as_ref().is_none_or(|(bf, _)| f < *bf) {
            best = Some((f, theta));
        }
    }
    let (sse, theta) = best.ok_or(Error::NoFamilyConverged)?;
    Ok(FittedPdf {
        family,
        params: from_search(family, &theta, frame),
        sse,
        bins,
        range: (hist.lo, hist.hi),
    })
}

/// Fits every candidate and returns the one with the smallest SSE; ties go
/// to the earlier family in `families`. Families are fitted on up to
/// `workers` threads.
pub fn fit_best_pdf(
    samples: &[f64],
    families: &[PdfFamily],
    bins: usize,
    workers: usize,
) -> Result<FittedPdf> {
    if families.is_empty() {
        return Err(Error::InvalidConfig("no candidate families".into()));
    }
    if samples.len() < MIN_SAMPLES {
        return Err(Error::TooFewSamples {
            need: MIN_SAMPLES,
            got: samples.len(),
        });
    }
    Histogram::new(samples, bins)?;
    let fits = fit_all(samples, families, bins, workers);
    let mut best: Option<FittedPdf> = None;
    for fit in fits.into_iter().flatten() {
        if best.as_ref().is_none_or(|b| fit.sse < b.sse) {
            best = Some(fit);
        }
    }
    best.ok_or(Error::NoFamilyConverged)
}

/// Per-family fits in `families` order.
pub fn fit_all(
    samples: &[f64],
    families: &[PdfFamily],
    bins: usize,
    workers: usize,
) -> Vec<Result<FittedPdf>> {
    let workers = workers.clamp(1, families.len().max(1));
    let per = families.len().div_ceil(workers).max(1);
    std::thread::scope(|s| {
        let handles: Vec<_> = families
            .chunks(per)
            .map(|chunk| {
                s.spawn(move || {
                    chunk
                        .iter()
                        .map(|&f| fit_family(samples, f, bins))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("fitting worker panicked"))
            .collect()
    })
}
