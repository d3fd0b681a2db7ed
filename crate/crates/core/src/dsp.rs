//! Digital filtering primitives shared by the CSI and depth pipelines:
//! Savitzky-Golay smoothing, a first-order high-pass, and median filters.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

#[derive(Clone, Debug, PartialEq)]
pub enum DspError {
    TooShort { needed: usize, got: usize },
    BadConfig(String),
}

impl fmt::Display for DspError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DspError::TooShort { needed, got } => {
                write!(f, "signal too short: need {needed}, got {got}")
            }
            DspError::BadConfig(s) => write!(f, "bad filter config: {s}"),
        }
    }
}

/// Solve a small dense linear system in place (Gaussian elimination with
/// partial pivoting). Used only for the (order+1)^2 Savitzky-Golay normal
/// equations.
fn solve_small(a: &mut [Vec<f64>], b: &mut [f64]) {
    let n = b.len();
    for col in 0..n {
        let mut piv = col;
        for r in col + 1..n {
            if a[r][col].abs() > a[piv][col].abs() {
                piv = r;
            }
        }
        a.swap(col, piv);
        b.swap(col, piv);
        let d = a[col][col];
        for c in col..n {
            a[col][c] /= d;
        }
        b[col] /= d;
        for r in 0..n {
            if r != col && a[r][col] != 0.0 {
                let f = a[r][col];
                for c in col..n {
                    a[r][c] -= f * a[col][c];
                }
                b[r] -= f * b[col];
            }
        }
    }
}

/// Savitzky-Golay smoothing weights: `weights[p]` gives the convolution row
/// producing the smoothed value at in-window offset `p` from a full window.
/// Interior points use the centered row; edges use the first/last window
/// evaluated at their offset, so polynomials up to `order` are reproduced
/// exactly everywhere.
#[derive(Clone, Debug)]
pub struct SavitzkyGolay {
    pub window: usize,
    pub order: usize,
    weights: Vec<Vec<f64>>,
}

impl SavitzkyGolay {
    pub fn new(window: usize, order: usize) -> Result<Self, DspError> {
        if window % 2 == 0 {
            return Err(DspError::BadConfig(String::from("window must be odd")));
        }
        if window <= order {
            return Err(DspError::BadConfig(String::from(
                "window must exceed polynomial order",
            )));
        }
        let m = (window as isize - 1) / 2;
        let n = order + 1;
        // normal matrix N[j][k] = sum_i i^(j+k), i = -m..m
        let mut moments = vec![0.0f64; 2 * order + 1];
        for i in -m..=m {
            let mut p = 1.0;
            for s in moments.iter_mut() {
                *s += p;
                p *= i as f64;
            }
        }
        let mut weights = Vec::with_capacity(window);
        for p in 0..window {
            // fit coefficients c solving N c = A^T e_p, then evaluate at
            // offset (p - m)
            let mut a: Vec<Vec<f64>> = (0..n)
                .map(|j| (0..n).map(|k| moments[j + k]).collect())
                .collect();
            let i = p as isize - m;
            let mut rhs = vec![0.0f64; n];
            // A^T e_p: row of powers of the sample position of e_p... here we
            // instead compute the full smoothing row directly: w = a_x^T N^-1 A^T
            // with a_x the power basis at the evaluation offset. Solve N y = a_x.
            let mut pw = 1.0;
            for r in rhs.iter_mut() {
                *r = pw;
                pw *= i as f64;
            }
            solve_small(&mut a, &mut rhs);
            // row[q] = sum_j y_j * q_pos^j for each sample position q
            let mut row = vec![0.0f64; window];
            for (q, rv) in row.iter_mut().enumerate() {
                let qi = q as isize - m;
                let mut p2 = 1.0;
                let mut acc = 0.0;
                for y in &rhs {
                    acc += y * p2;
                    p2 *= qi as f64;
                }
                *rv = acc;
            }
            weights.push(row);
        }
        Ok(SavitzkyGolay { window, order, weights })
    }

    /// Smooth a 1-D signal. Signals shorter than the window are rejected.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>, DspError> {
        let w = self.window;
        if x.len() < w {
            return Err(DspError::TooShort {
                needed: w,
                got: x.len(),
            });
        }
        let m = (w - 1) / 2;
        let n = x.len();
        let mut y = vec![0.0f64; n];
        for (t, yv) in y.iter_mut().enumerate() {
            // window start clamped so edges reuse the first/last full window
            let (start, p) = if t < m {
                (0, t)
            } else if t + m >= n {
                (n - w, t - (n - w))
            } else {
                (t - m, m)
            };
            let row = &self.weights[p];
            let mut acc = 0.0;
            for (rv, xv) in row.iter().zip(x[start..start + w].iter()) {
                acc += rv * xv;
            }
            *yv = acc;
        }
        Ok(y)
    }
}

/// First-order RC high-pass. `cutoff_hz == 0` disables the recursive stage
/// (pure mean removal is then the caller's responsibility).
pub fn high_pass(x: &[f64], cutoff_hz: f64, sample_rate_hz: f64) -> Vec<f64> {
    if cutoff_hz <= 0.0 || x.is_empty() {
        return x.to_vec();
    }
    let rc = 1.0 / (2.0 * core::f64::consts::PI * cutoff_hz);
    let dt = 1.0 / sample_rate_hz;
    let alpha = rc / (rc + dt);
    let mut y = vec![0.0f64; x.len()];
    y[0] = 0.0;
    for t in 1..x.len() {
        y[t] = alpha * (y[t - 1] + x[t] - x[t - 1]);
    }
    y
}

pub fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        0.0
    } else {
        x.iter().sum::<f64>() / x.len() as f64
    }
}

pub fn subtract_mean(x: &mut [f64]) {
    let m = mean(x);
    for v in x.iter_mut() {
        *v -= m;
    }
}

/// Median of a small slice (copies, then sorts).
pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Sliding temporal median with odd window; edges use the shrunken window
/// that fits.
pub fn median_filter_time(x: &[f64], window: usize) -> Vec<f64> {
    debug_assert!(window % 2 == 1);
    let half = window / 2;
    let n = x.len();
    (0..n)
        .map(|t| {
            let lo = t.saturating_sub(half);
            let hi = (t + half + 1).min(n);
            median(&x[lo..hi])
        })
        .collect()
}
