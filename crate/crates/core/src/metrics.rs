//! Evaluation metrics for reconstructed depth images: soft IoU error,
//! correlation-based alignment, position / shape errors, and depth-histogram
//! error, plus the per-split report aggregate.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::tensor::Tensor;

pub const HIST_BINS: usize = 50;

#[derive(Clone, Debug, PartialEq)]
pub enum MetricsError {
    ShapeMismatch { a: String, b: String },
    BadShift { max_shift: usize, limit: usize },
}

impl fmt::Display for MetricsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricsError::ShapeMismatch { a, b } => {
                write!(f, "image shapes differ: {a} vs {b}")
            }
            MetricsError::BadShift { max_shift, limit } => {
                write!(f, "max_shift {max_shift} must be below {limit}")
            }
        }
    }
}

/// Interpret a tensor as a single (height, width) image; a leading
/// singleton channel axis is allowed.
fn as_image(t: &Tensor<f32>) -> Option<(usize, usize, &[f32])> {
    match t.shape() {
        [h, w] => Some((*h, *w, t.data())),
        [1, h, w] => Some((*h, *w, t.data())),
        _ => None,
    }
}

fn check_same(a: &Tensor<f32>, b: &Tensor<f32>) -> Result<(usize, usize), MetricsError> {
    match (as_image(a), as_image(b)) {
        (Some((ha, wa, _)), Some((hb, wb, _))) if ha == hb && wa == wb => Ok((ha, wa)),
        _ => Err(MetricsError::ShapeMismatch {
            a: a.shape_string(),
            b: b.shape_string(),
        }),
    }
}

/// 1 − Σ min(a,b) / Σ max(a,b); two all-zero images compare as identical.
pub fn soft_iou_error(a: &Tensor<f32>, b: &Tensor<f32>) -> Result<f64, MetricsError> {
    check_same(a, b)?;
    let mut inter = 0.0f64;
    let mut union = 0.0f64;
    for (&x, &y) in a.data().iter().zip(b.data().iter()) {
        inter += x.min(y) as f64;
        union += x.max(y) as f64;
    }
    if union == 0.0 {
        Ok(0.0)
    } else {
        Ok(1.0 - inter / union)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Alignment {
    pub dx: isize,
    pub dy: isize,
    /// true when the estimate was all zero and no correlation peak exists
    pub degenerate: bool,
}

fn shifted_at(data: &[f32], h: usize, w: usize, x: isize, y: isize) -> f32 {
    if x < 0 || y < 0 || x >= w as isize || y >= h as isize {
        0.0
    } else {
        data[y as usize * w + x as usize]
    }
}

/// Integer shift of `est` maximizing cross-correlation against `gt` over a
/// (2·max_shift+1)² grid. Ties break toward the smallest shift norm, then
/// lexicographically on (dx, dy).
pub fn align_by_correlation(
    est: &Tensor<f32>,
    gt: &Tensor<f32>,
    max_shift: usize,
) -> Result<Alignment, MetricsError> {
    let (h, w) = check_same(est, gt)?;
    let limit = h.min(w) / 2;
    if max_shift >= h.min(w) {
        return Err(MetricsError::BadShift { max_shift, limit });
    }
    let (_, _, ed) = as_image(est).unwrap();
    let (_, _, gd) = as_image(gt).unwrap();
    if ed.iter().all(|&v| v == 0.0) {
        return Ok(Alignment {
            dx: 0,
            dy: 0,
            degenerate: true,
        });
    }
    let s = max_shift as isize;
    let mut best = (f64::NEG_INFINITY, i64::MAX, (0isize, 0isize));
    for dy in -s..=s {
        for dx in -s..=s {
            let mut corr = 0.0f64;
            for y in 0..h as isize {
                for x in 0..w as isize {
                    let g = gd[y as usize * w + x as usize];
                    if g != 0.0 {
                        corr += g as f64 * shifted_at(ed, h, w, x - dx, y - dy) as f64;
                    }
                }
            }
            let norm = (dx * dx + dy * dy) as i64;
            let better = corr > best.0 + 1e-12
                || ((corr - best.0).abs() <= 1e-12
                    && (norm < best.1
                        || (norm == best.1 && (dx, dy) < best.2)));
            if better {
                best = (corr, norm, (dx, dy));
            }
        }
    }
    Ok(Alignment {
        dx: best.2 .0,
        dy: best.2 .1,
        degenerate: false,
    })
}

fn default_max_shift(h: usize, w: usize) -> usize {
    h.min(w) / 2
}

/// ‖(dx, dy)‖ / image diagonal; a degenerate (all-zero) estimate scores the
/// worst case 1.0.
pub fn position_error(est: &Tensor<f32>, gt: &Tensor<f32>) -> Result<f64, MetricsError> {
    let (h, w) = check_same(est, gt)?;
    let a = align_by_correlation(est, gt, default_max_shift(h, w))?;
    if a.degenerate {
        return Ok(1.0);
    }
    let norm = libm::sqrt((a.dx * a.dx + a.dy * a.dy) as f64);
    let diag = libm::sqrt((w * w + h * h) as f64);
    Ok(norm / diag)
}

/// Mask threshold for [`shape_error`]: 5% of the normalized depth range.
/// Binarizing at exactly > 0 makes the metric degenerate on real-valued
/// reconstructions, where near-zero background residue would count as shape.
pub const SHAPE_MASK_THRESHOLD: f32 = 0.05;

/// 1 − IoU of the (> [`SHAPE_MASK_THRESHOLD`]) masks after correlation
/// alignment. Both masks empty → 0; exactly one empty → 1.
pub fn shape_error(est: &Tensor<f32>, gt: &Tensor<f32>) -> Result<f64, MetricsError> {
    let (h, w) = check_same(est, gt)?;
    let a = align_by_correlation(est, gt, default_max_shift(h, w))?;
    let (_, _, ed) = as_image(est).unwrap();
    let (_, _, gd) = as_image(gt).unwrap();
    let mut inter = 0usize;
    let mut union = 0usize;
    for y in 0..h as isize {
        for x in 0..w as isize {
            let ge = shifted_at(ed, h, w, x - a.dx, y - a.dy) > SHAPE_MASK_THRESHOLD;
            let gg = gd[y as usize * w + x as usize] > SHAPE_MASK_THRESHOLD;
            if ge && gg {
                inter += 1;
            }
            if ge || gg {
                union += 1;
            }
        }
    }
    if union == 0 {
        // both masks empty; one-empty falls out of the ratio as 1
        Ok(0.0)
    } else {
        Ok(1.0 - inter as f64 / union as f64)
    }
}

fn histogram(data: &[f32]) -> Vec<f64> {
    let mut h = vec![0.0f64; HIST_BINS];
    for &v in data {
        let mut b = (v as f64 * HIST_BINS as f64) as usize;
        if b >= HIST_BINS {
            b = HIST_BINS - 1;
        }
        h[b] += 1.0;
    }
    let n = data.len() as f64;
    for v in h.iter_mut() {
        *v /= n;
    }
    h
}

/// MSE between the two 50-bin normalized histograms over [0, 1].
pub fn depth_hist_error(est: &Tensor<f32>, gt: &Tensor<f32>) -> Result<f64, MetricsError> {
    check_same(est, gt)?;
    let he = histogram(est.data());
    let hg = histogram(gt.data());
    Ok(he
        .iter()
        .zip(hg.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / HIST_BINS as f64)
}

/// Pixelwise mean squared error.
pub fn image_mse(est: &Tensor<f32>, gt: &Tensor<f32>) -> Result<f64, MetricsError> {
    check_same(est, gt)?;
    let n = est.len() as f64;
    Ok(est
        .data()
        .iter()
        .zip(gt.data().iter())
        .map(|(&a, &b)| {
            let d = (a - b) as f64;
            d * d
        })
        .sum::<f64>()
        / n)
}

/// All five per-sample quantities.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SampleScores {
    pub mse: f64,
    pub soft_iou: f64,
    pub depth_err: f64,
    pub shape_err: f64,
    pub pos_err: f64,
}

pub fn score_pair(est: &Tensor<f32>, gt: &Tensor<f32>) -> Result<SampleScores, MetricsError> {
    Ok(SampleScores {
        mse: image_mse(est, gt)?,
        soft_iou: soft_iou_error(est, gt)?,
        depth_err: depth_hist_error(est, gt)?,
        shape_err: shape_error(est, gt)?,
        pos_err: position_error(est, gt)?,
    })
}

#[derive(Clone, Debug)]
pub struct EvalReport {
    pub split: String,
    pub sample_ids: Vec<String>,
    pub rows: Vec<SampleScores>,
}

impl EvalReport {
    pub fn new(split: String) -> Self {
        EvalReport {
            split,
            sample_ids: Vec::new(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, id: String, scores: SampleScores) {
        self.sample_ids.push(id);
        self.rows.push(scores);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn mean(&self) -> SampleScores {
        let n = self.rows.len().max(1) as f64;
        let mut m = SampleScores::default();
        for r in &self.rows {
            m.mse += r.mse;
            m.soft_iou += r.soft_iou;
            m.depth_err += r.depth_err;
            m.shape_err += r.shape_err;
            m.pos_err += r.pos_err;
        }
        m.mse /= n;
        m.soft_iou /= n;
        m.depth_err /= n;
        m.shape_err /= n;
        m.pos_err /= n;
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn img(h: usize, w: usize, f: impl Fn(usize, usize) -> f32) -> Tensor<f32> {
        let mut d = Vec::with_capacity(h * w);
        for y in 0..h {
            for x in 0..w {
                d.push(f(x, y));
            }
        }
        Tensor::from_vec(&[h, w], d)
    }

    fn blob(h: usize, w: usize, cx: isize, cy: isize, r: isize) -> Tensor<f32> {
        img(h, w, |x, y| {
            let dx = x as isize - cx;
            let dy = y as isize - cy;
            if dx.abs() <= r && dy.abs() <= r {
                0.6
            } else {
                0.0
            }
        })
    }

    #[test]
    fn identical_images_score_zero_on_all_metrics() {
        let a = blob(24, 32, 10, 12, 3);
        let s = score_pair(&a, &a).unwrap();
        assert_eq!(s.mse, 0.0);
        assert_eq!(s.soft_iou, 0.0);
        assert_eq!(s.depth_err, 0.0);
        assert_eq!(s.shape_err, 0.0);
        assert_eq!(s.pos_err, 0.0);
    }

    #[test]
    fn half_scaled_image_gives_half_soft_iou_error() {
        let b = blob(16, 16, 8, 8, 3);
        let a = Tensor::from_vec(b.shape(), b.data().iter().map(|&v| 0.5 * v).collect());
        let e = soft_iou_error(&a, &b).unwrap();
        assert!((e - 0.5).abs() < 1e-9, "{e}");
        // symmetry
        let e2 = soft_iou_error(&b, &a).unwrap();
        assert!((e - e2).abs() < 1e-12);
    }

    #[test]
    fn disjoint_supports_give_full_soft_iou_error() {
        let a = blob(20, 20, 4, 4, 2);
        let b = blob(20, 20, 14, 14, 2);
        assert!((soft_iou_error(&a, &b).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn both_zero_images_compare_equal() {
        let z = Tensor::zeros(&[8, 8]);
        assert_eq!(soft_iou_error(&z, &z).unwrap(), 0.0);
        assert_eq!(shape_error(&z, &z).unwrap(), 0.0);
    }

    #[test]
    fn alignment_recovers_translation() {
        let gt = blob(24, 32, 14, 12, 3);
        let est = blob(24, 32, 14 + 5, 12 - 3, 3);
        let a = align_by_correlation(&est, &gt, 12).unwrap();
        assert_eq!((a.dx, a.dy), (-5, 3));
        assert!(!a.degenerate);
    }

    #[test]
    fn self_alignment_is_zero_shift() {
        let gt = blob(24, 32, 14, 12, 3);
        let a = align_by_correlation(&gt, &gt, 12).unwrap();
        assert_eq!((a.dx, a.dy), (0, 0));
    }

    #[test]
    fn zero_estimate_is_degenerate_and_worst_position() {
        let gt = blob(24, 32, 14, 12, 3);
        let z = Tensor::zeros(&[24, 32]);
        let a = align_by_correlation(&z, &gt, 12).unwrap();
        assert!(a.degenerate);
        assert_eq!((a.dx, a.dy), (0, 0));
        assert_eq!(position_error(&z, &gt).unwrap(), 1.0);
    }

    #[test]
    fn pure_shift_decomposes_into_position_only() {
        let gt = blob(64, 96, 40, 30, 5);
        let est = blob(64, 96, 43, 34, 5);
        let p = position_error(&est, &gt).unwrap();
        let expected = 5.0 / libm::sqrt((96 * 96 + 64 * 64) as f64);
        assert!((p - expected).abs() < 1e-9, "{p} vs {expected}");
        assert_eq!(shape_error(&est, &gt).unwrap(), 0.0);
        assert_eq!(depth_hist_error(&est, &gt).unwrap(), 0.0);
    }

    #[test]
    fn half_overlapping_squares_shape_error() {
        // two 8x4 rectangles overlapping in a 4x4 region; a high-valued
        // shared anchor pins the correlation peak at zero shift
        let a = img(20, 20, |x, y| {
            if x < 2 && y < 2 {
                5.0
            } else if (4..12).contains(&x) && (8..12).contains(&y) {
                1.0
            } else {
                0.0
            }
        });
        let b = img(20, 20, |x, y| {
            if x < 2 && y < 2 {
                5.0
            } else if (8..16).contains(&x) && (8..12).contains(&y) {
                1.0
            } else {
                0.0
            }
        });
        let a0 = align_by_correlation(&a, &b, 2).unwrap();
        assert_eq!((a0.dx, a0.dy), (0, 0));
        // inter = 16 + 4 anchor, union = 48 + 4 anchor
        let e = shape_error(&a, &b).unwrap();
        assert!((e - (1.0 - 20.0 / 52.0)).abs() < 1e-9, "{e}");
    }

    #[test]
    fn one_hot_histograms_give_expected_mse() {
        let a = img(10, 10, |_, _| 0.25);
        let b = img(10, 10, |_, _| 0.75);
        let e = depth_hist_error(&a, &b).unwrap();
        assert!((e - 0.04).abs() < 1e-9, "{e}");
    }

    #[test]
    fn histogram_ignores_pixel_positions() {
        let a = blob(16, 16, 4, 4, 2);
        let b = blob(16, 16, 11, 10, 2);
        assert_eq!(depth_hist_error(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn report_mean_matches_recomputation() {
        let mut rep = EvalReport::new(String::from("test"));
        let gt = blob(24, 32, 14, 12, 3);
        let est1 = blob(24, 32, 16, 12, 3);
        let est2 = blob(24, 32, 14, 15, 4);
        rep.push(String::from("a"), score_pair(&est1, &gt).unwrap());
        rep.push(String::from("b"), score_pair(&est2, &gt).unwrap());
        let m = rep.mean();
        let manual = (rep.rows[0].soft_iou + rep.rows[1].soft_iou) / 2.0;
        assert!((m.soft_iou - manual).abs() < 1e-9);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let a = Tensor::zeros(&[8, 8]);
        let b = Tensor::zeros(&[8, 9]);
        assert!(soft_iou_error(&a, &b).is_err());
        assert!(score_pair(&a, &b).is_err());
    }
}
