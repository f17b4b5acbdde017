use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

/// Candidate score distributions.
///
/// Parameter layouts (location and scale last):
///
/// | family                 | params                 |
/// |------------------------|------------------------|
/// | `gamma`                | `[a, loc, scale]`      |
/// | `generalized_logistic` | `[c, loc, scale]`      |
/// | `folded_cauchy`        | `[c, loc, scale]`      |
/// | `mielke`               | `[k, s, loc, scale]`   |
/// | `beta`                 | `[a, b, loc, scale]`   |
///
/// Beta's `loc` and `scale` are the fitting sample's minimum and range and
/// are not optimized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PdfFamily {
    Gamma,
    GeneralizedLogistic,
    FoldedCauchy,
    Mielke,
    Beta,
}

impl PdfFamily {
    pub const ALL: [PdfFamily; 5] = [
        PdfFamily::Gamma,
        PdfFamily::GeneralizedLogistic,
        PdfFamily::FoldedCauchy,
        PdfFamily::Mielke,
        PdfFamily::Beta,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PdfFamily::Gamma => "gamma",
            PdfFamily::GeneralizedLogistic => "generalized_logistic",
            PdfFamily::FoldedCauchy => "folded_cauchy",
            PdfFamily::Mielke => "mielke",
            PdfFamily::Beta => "beta",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.name() == s)
    }

    pub fn param_count(self) -> usize {
        match self {
            PdfFamily::Gamma | PdfFamily::GeneralizedLogistic | PdfFamily::FoldedCauchy => 3,
            PdfFamily::Mielke | PdfFamily::Beta => 4,
        }
    }

    /// Whether the parameters satisfy the family's constraints.
    pub fn valid(self, p: &[f64]) -> bool {
        if p.len() != self.param_count() || p.iter().any(|v| !v.is_finite()) {
            return false;
        }
        let scale = p[p.len() - 1];
        scale > 0.0
            && match self {
                PdfFamily::Gamma | PdfFamily::GeneralizedLogistic => p[0] > 0.0,
                PdfFamily::FoldedCauchy => p[0] >= 0.0,
                PdfFamily::Mielke | PdfFamily::Beta => p[0] > 0.0 && p[1] > 0.0,
            }
    }

    /// Density at `x`; zero outside the support or for invalid parameters.
    pub fn pdf(self, p: &[f64], x: f64) -> f64 {
        if !self.valid(p) || !x.is_finite() {
            return 0.0;
        }
        let n = p.len();
        let (loc, scale) = (p[n - 2], p[n - 1]);
        let y = (x - loc) / scale;
        let density = match self {
            PdfFamily::Gamma => {
                let a = p[0];
                if y <= 0.0 {
                    0.0
                } else {
                    ((a - 1.0) * y.ln() - y - ln_gamma(a)).exp()
                }
            }
            PdfFamily::GeneralizedLogistic => {
                // c e^{-y} / (1 + e^{-y})^{c+1}, evaluated in log space.
                let c = p[0];
                let softplus = if y > 0.0 {
                    (-y).exp().ln_1p()
                } else {
                    -y + y.exp().ln_1p()
                };
                (c.ln() - y - (c + 1.0) * softplus).exp()
            }
            PdfFamily::FoldedCauchy => {
                let c = p[0];
                if y < 0.0 {
                    0.0
                } else {
                    1.0 / (PI * (1.0 + (y - c).powi(2))) + 1.0 / (PI * (1.0 + (y + c).powi(2)))
                }
            }
            PdfFamily::Mielke => {
                let (k, s) = (p[0], p[1]);
                if y <= 0.0 {
                    0.0
                } else {
                    let ln_y = y.ln();
                    let ln_1p = if s * ln_y > 30.0 {
                        s * ln_y
                    } else {
                        (s * ln_y).exp().ln_1p()
                    };
                    (k.ln() + (k - 1.0) * ln_y - (1.0 + k / s) * ln_1p).exp()
                }
            }
            PdfFamily::Beta => {
                let (a, b) = (p[0], p[1]);
                if y <= 0.0 || y >= 1.0 {
                    0.0
                } else {
                    let ln_b = ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b);
                    ((a - 1.0) * y.ln() + (b - 1.0) * (-y).ln_1p() - ln_b).exp()
                }
            }
        };
        let d = density / scale;
        if d.is_finite() {
            d
        } else {
            0.0
        }
    }
}

impl fmt::Display for PdfFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}
