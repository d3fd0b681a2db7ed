//! Depth-frame preprocessing: hole cleanup, moving-content extraction, and
//! core-component (mask / center / average depth) ground truth.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::dsp;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub enum DepthError {
    SequenceTooShort { needed: usize, got: usize },
    SizeMismatch,
}

impl fmt::Display for DepthError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DepthError::SequenceTooShort { needed, got } => {
                write!(f, "sequence too short: need {needed} frames, got {got}")
            }
            DepthError::SizeMismatch => write!(f, "frame sizes differ within a sequence"),
        }
    }
}

/// Millimeter-valued single-channel frame; 0 marks an invalid pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthFrame {
    pub width: usize,
    pub height: usize,
    /// row-major, millimeters
    pub data: Vec<f32>,
    pub timestamp: f64,
}

impl DepthFrame {
    pub fn new(width: usize, height: usize, timestamp: f64) -> Self {
        DepthFrame {
            width,
            height,
            data: vec![0.0; width * height],
            timestamp,
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f32) {
        self.data[y * self.width + x] = v;
    }
}

/// Normalized [0,1] frame containing only dynamic scene content; static
/// background pixels are exactly 0.
#[derive(Clone, Debug, PartialEq)]
pub struct MovingDepthFrame {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
    pub timestamp: f64,
}

impl MovingDepthFrame {
    pub fn to_tensor(&self) -> Tensor<f32> {
        Tensor::from_vec(&[1, self.height, self.width], self.data.clone())
    }

    pub fn from_tensor(t: &Tensor<f32>, timestamp: f64) -> Self {
        assert_eq!(t.shape().len(), 3);
        MovingDepthFrame {
            width: t.shape()[2],
            height: t.shape()[1],
            data: t.data().to_vec(),
            timestamp,
        }
    }
}

/// Shape mask crop, normalized bounding-box center, and average depth of
/// the dominant moving object.
#[derive(Clone, Debug)]
pub struct CoreComponents {
    /// (crop_side, crop_side) binary values
    pub mask: Tensor<f32>,
    /// normalized (x, y) in [0,1]^2; None when the frame holds no object
    pub center: Option<(f32, f32)>,
    pub avg_depth: f32,
}

impl CoreComponents {
    pub fn no_object(crop_side: usize) -> Self {
        CoreComponents {
            mask: Tensor::zeros(&[crop_side, crop_side]),
            center: None,
            avg_depth: 0.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct DepthPrepConfig {
    pub max_range_mm: f32,
    pub background_frames: usize,
    pub motion_threshold_mm: f32,
    pub deflicker_window: usize,
    pub crop_side: usize,
    pub hole_radius: usize,
}

impl Default for DepthPrepConfig {
    fn default() -> Self {
        DepthPrepConfig {
            max_range_mm: 6000.0,
            background_frames: 90,
            motion_threshold_mm: 100.0,
            deflicker_window: 3,
            crop_side: 48,
            hole_radius: 5,
        }
    }
}

/// Offsets within `radius`, sorted by distance so the first valid neighbor
/// found is the nearest one.
fn neighbor_offsets(radius: usize) -> Vec<(isize, isize, f64)> {
    let r = radius as isize;
    let mut offs = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            if dx == 0 && dy == 0 {
                continue;
            }
            let d = libm::sqrt((dx * dx + dy * dy) as f64);
            if d <= radius as f64 {
                offs.push((dx, dy, d));
            }
        }
    }
    offs.sort_by(|a, b| a.2.partial_cmp(&b.2).unwrap());
    offs
}

/// Clamp over-range values to 0, then fill holes from the nearest valid
/// neighbor within the hole radius. Filling repeats until a fixed point so
/// the operation is idempotent.
pub fn clean_frame(frame: &DepthFrame, cfg: &DepthPrepConfig) -> DepthFrame {
    let mut out = frame.clone();
    for v in &mut out.data {
        if *v > cfg.max_range_mm {
            *v = 0.0;
        }
    }
    let offs = neighbor_offsets(cfg.hole_radius);
    loop {
        let src = out.data.clone();
        let mut changed = false;
        for y in 0..out.height {
            for x in 0..out.width {
                if src[y * out.width + x] != 0.0 {
                    continue;
                }
                for &(dx, dy, _) in &offs {
                    let nx = x as isize + dx;
                    let ny = y as isize + dy;
                    if nx < 0 || ny < 0 || nx >= out.width as isize || ny >= out.height as isize {
                        continue;
                    }
                    let v = src[ny as usize * out.width + nx as usize];
                    if v != 0.0 {
                        out.data[y * out.width + x] = v;
                        changed = true;
                        break;
                    }
                }
            }
        }
        if !changed {
            break;
        }
    }
    out
}

/// Background subtraction + temporal de-flicker + normalization.
///
/// The background is the per-pixel temporal median over the first
/// `background_frames` frames; a pixel survives when it is valid and
/// differs from the background by more than the motion threshold. A short
/// temporal median then removes single-frame flicker, and survivors are
/// normalized by the maximum range. Output is aligned 1:1 with the input.
pub fn extract_moving(
    frames: &[DepthFrame],
    cfg: &DepthPrepConfig,
) -> Result<Vec<MovingDepthFrame>, DepthError> {
    if frames.len() < cfg.background_frames {
        return Err(DepthError::SequenceTooShort {
            needed: cfg.background_frames,
            got: frames.len(),
        });
    }
    let (w, h) = (frames[0].width, frames[0].height);
    if frames.iter().any(|f| f.width != w || f.height != h) {
        return Err(DepthError::SizeMismatch);
    }
    let npx = w * h;
    let mut background = vec![0.0f32; npx];
    {
        let mut column = vec![0.0f64; cfg.background_frames];
        for (p, bg) in background.iter_mut().enumerate() {
            for (t, c) in column.iter_mut().enumerate() {
                *c = frames[t].data[p] as f64;
            }
            *bg = dsp::median(&column) as f32;
        }
    }
    // motion gate per frame
    let mut gated: Vec<Vec<f32>> = frames
        .iter()
        .map(|f| {
            f.data
                .iter()
                .zip(background.iter())
                .map(|(&v, &bg)| {
                    if v > 0.0 && (v - bg).abs() > cfg.motion_threshold_mm {
                        v
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    // temporal de-flicker
    if cfg.deflicker_window > 1 {
        let half = cfg.deflicker_window / 2;
        let n = gated.len();
        let mut filtered = gated.clone();
        let mut buf: Vec<f64> = Vec::with_capacity(cfg.deflicker_window);
        for p in 0..npx {
            for t in 0..n {
                let lo = t.saturating_sub(half);
                let hi = (t + half + 1).min(n);
                buf.clear();
                for g in &gated[lo..hi] {
                    buf.push(g[p] as f64);
                }
                filtered[t][p] = dsp::median(&buf) as f32;
            }
        }
        gated = filtered;
    }
    Ok(gated
        .into_iter()
        .zip(frames.iter())
        .map(|(data, f)| MovingDepthFrame {
            width: w,
            height: h,
            data: data.into_iter().map(|v| v / cfg.max_range_mm).collect(),
            timestamp: f.timestamp,
        })
        .collect())
}

/// Largest 4-connected nonzero component, its bounding-box center and mean
/// depth, and an M x M binary crop of the frame centered there.
pub fn core_components(frame: &MovingDepthFrame, cfg: &DepthPrepConfig) -> CoreComponents {
    let (w, h) = (frame.width, frame.height);
    let mut labels = vec![0u32; w * h];
    let mut best_area = 0usize;
    let mut best_bbox = (0usize, 0usize, 0usize, 0usize); // x0, y0, x1, y1 inclusive
    let mut next_label = 0u32;
    let mut stack: Vec<usize> = Vec::new();
    for start in 0..w * h {
        if frame.data[start] <= 0.0 || labels[start] != 0 {
            continue;
        }
        next_label += 1;
        let mut area = 0usize;
        let (mut x0, mut y0, mut x1, mut y1) = (w, h, 0usize, 0usize);
        stack.push(start);
        labels[start] = next_label;
        while let Some(p) = stack.pop() {
            area += 1;
            let (x, y) = (p % w, p / w);
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
            let mut try_push = |q: usize| {
                if frame.data[q] > 0.0 && labels[q] == 0 {
                    labels[q] = next_label;
                    stack.push(q);
                }
            };
            if x > 0 {
                try_push(p - 1);
            }
            if x + 1 < w {
                try_push(p + 1);
            }
            if y > 0 {
                try_push(p - w);
            }
            if y + 1 < h {
                try_push(p + w);
            }
        }
        if area > best_area {
            best_area = area;
            best_bbox = (x0, y0, x1, y1);
        }
    }
    if best_area == 0 {
        return CoreComponents::no_object(cfg.crop_side);
    }
    let (x0, y0, x1, y1) = best_bbox;
    let cx = (x0 + x1) as f32 / 2.0;
    let cy = (y0 + y1) as f32 / 2.0;
    let center = ((cx + 0.5) / w as f32, (cy + 0.5) / h as f32);

    let mut depth_sum = 0.0f64;
    let mut depth_n = 0usize;
    for y in y0..=y1 {
        for x in x0..=x1 {
            let v = frame.data[y * w + x];
            if v > 0.0 {
                depth_sum += v as f64;
                depth_n += 1;
            }
        }
    }
    let avg_depth = (depth_sum / depth_n as f64) as f32;

    let m = cfg.crop_side;
    let cx_i = libm::floorf(cx + 0.5) as isize;
    let cy_i = libm::floorf(cy + 0.5) as isize;
    let mx0 = cx_i - m as isize / 2;
    let my0 = cy_i - m as isize / 2;
    let mut mask = Tensor::zeros(&[m, m]);
    {
        let md = mask.data_mut();
        for my in 0..m {
            let sy = my0 + my as isize;
            if sy < 0 || sy >= h as isize {
                continue;
            }
            for mx in 0..m {
                let sx = mx0 + mx as isize;
                if sx < 0 || sx >= w as isize {
                    continue;
                }
                if frame.data[sy as usize * w + sx as usize] > 0.0 {
                    md[my * m + mx] = 1.0;
                }
            }
        }
    }
    CoreComponents {
        mask,
        center: Some(center),
        avg_depth,
    }
}
