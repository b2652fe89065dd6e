//! Error metrics and the significance tests used to compare models.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} values, got {got}")]
    TooFew { needed: usize, got: usize },
}

/// Mean absolute error.
pub fn mae(y_true: &[f64], y_pred: &[f64]) -> Result<f64, StatsError> {
    if y_true.len() != y_pred.len() {
        return Err(StatsError::LengthMismatch(y_true.len(), y_pred.len()));
    }
    if y_true.is_empty() {
        return Err(StatsError::TooFew { needed: 1, got: 0 });
    }
    let total: f64 = y_true.iter().zip(y_pred).map(|(a, b)| (a - b).abs()).sum();
    Ok(total / y_true.len() as f64)
}

/// Per-instance `|y_true − y_pred|`.
pub fn abs_errors(y_true: &[f64], y_pred: &[f64]) -> Result<Vec<f64>, StatsError> {
    if y_true.len() != y_pred.len() {
        return Err(StatsError::LengthMismatch(y_true.len(), y_pred.len()));
    }
    Ok(y_true.iter().zip(y_pred).map(|(a, b)| (a - b).abs()).collect())
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// `P(Z > z)` for a standard normal `Z`, accurate in the far tail.
pub fn normal_sf(z: f64) -> f64 {
    0.5 * libm::erfc(z / std::f64::consts::SQRT_2)
}

fn ln_beta(a: f64, b: f64) -> f64 {
    libm::lgamma(a) + libm::lgamma(b) - libm::lgamma(a + b)
}

/// Continued fraction for the incomplete beta (modified Lentz).
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const MAX_ITER: usize = 10_000;
    const EPS: f64 = 1e-16;
    const TINY: f64 = 1e-300;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta `I_x(a, b)`.
pub fn inc_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let front = (a * x.ln() + b * (1.0 - x).ln() - ln_beta(a, b)).exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

/// `P(T > t)` for Student's t with `df` degrees of freedom.
pub fn student_t_sf(t: f64, df: f64) -> f64 {
    if t.is_nan() {
        return f64::NAN;
    }
    if t.is_infinite() {
        return if t > 0.0 { 0.0 } else { 1.0 };
    }
    let x = df / (df + t * t);
    let tail = 0.5 * inc_beta(df / 2.0, 0.5, x);
    if t >= 0.0 {
        tail
    } else {
        1.0 - tail
    }
}

pub fn student_t_cdf(t: f64, df: f64) -> f64 {
    1.0 - student_t_sf(t, df)
}

/// One model's position within a panel of MAEs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelEntry {
    pub model: String,
    pub mae: f64,
    pub z: f64,
    /// Upper-tail normal probability of `z`.
    pub p: f64,
}

/// Standardizes each MAE against the mean and population standard deviation
/// of the whole panel. When every MAE is equal, all `z = 0` and `p = 0.5`.
pub fn zscore_panel(maes: &[(String, f64)]) -> Result<Vec<PanelEntry>, StatsError> {
    if maes.len() < 2 {
        return Err(StatsError::TooFew {
            needed: 2,
            got: maes.len(),
        });
    }
    let n = maes.len() as f64;
    let mean = maes.iter().map(|(_, m)| m).sum::<f64>() / n;
    let var = maes.iter().map(|(_, m)| (m - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    let flat = std <= 1e-12 * mean.abs().max(f64::MIN_POSITIVE);
    Ok(maes
        .iter()
        .map(|(model, m)| {
            let z = if flat { 0.0 } else { (m - mean) / std };
            PanelEntry {
                model: model.clone(),
                mae: *m,
                z,
                p: if flat { 0.5 } else { normal_sf(z) },
            }
        })
        .collect())
}

/// Direction of the one-tailed paired test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alternative {
    /// Second sample has smaller errors: tests `mean(a − b) > 0`.
    #[default]
    BLessThanA,
    /// First sample has smaller errors: tests `mean(b − a) > 0`.
    ALessThanB,
}

impl Alternative {
    pub fn as_str(self) -> &'static str {
        match self {
            Alternative::BLessThanA => "b_less_than_a",
            Alternative::ALessThanB => "a_less_than_b",
        }
    }
}

impl std::str::FromStr for Alternative {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "b_less_than_a" => Ok(Alternative::BLessThanA),
            "a_less_than_b" => Ok(Alternative::ALessThanB),
            _ => Err(format!("unknown alternative '{s}' (b_less_than_a | a_less_than_b)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedT {
    pub t: f64,
    pub p: f64,
    pub n: usize,
    pub mean_diff: f64,
}

/// One-tailed paired t-test on matched samples.
///
/// With `d` the oriented differences, `t = mean(d) / (sd(d)/√n)` and `p` is
/// the upper tail of Student's t with `n − 1` degrees of freedom. Zero
/// variance gives `t = 0, p = 0.5` when `mean(d) = 0`, otherwise `t = ±∞`
/// and `p` of 0 or 1 by sign.
pub fn paired_t_one_tailed(
    err_a: &[f64],
    err_b: &[f64],
    alternative: Alternative,
) -> Result<PairedT, StatsError> {
    if err_a.len() != err_b.len() {
        return Err(StatsError::LengthMismatch(err_a.len(), err_b.len()));
    }
    let n = err_a.len();
    if n < 2 {
        return Err(StatsError::TooFew { needed: 2, got: n });
    }
    let d: Vec<f64> = match alternative {
        Alternative::BLessThanA => err_a.iter().zip(err_b).map(|(a, b)| a - b).collect(),
        Alternative::ALessThanB => err_a.iter().zip(err_b).map(|(a, b)| b - a).collect(),
    };
    let nf = n as f64;
    let mean = d.iter().sum::<f64>() / nf;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    let sd = var.sqrt();
    let scale = d.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if sd <= 1e-14 * scale || sd == 0.0 {
        let (t, p) = if mean == 0.0 || mean.abs() <= 1e-14 * scale {
            (0.0, 0.5)
        } else if mean > 0.0 {
            (f64::INFINITY, 0.0)
        } else {
            (f64::NEG_INFINITY, 1.0)
        };
        return Ok(PairedT {
            t,
            p,
            n,
            mean_diff: mean,
        });
    }
    let t = mean / (sd / nf.sqrt());
    Ok(PairedT {
        t,
        p: student_t_sf(t, nf - 1.0),
        n,
        mean_diff: mean,
    })
}
