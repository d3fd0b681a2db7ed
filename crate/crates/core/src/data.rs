//! Dataset assembly: drive the simulator through both preprocessing
//! pipelines to produce aligned (CSI tensor, phase feature, moving-depth
//! image, core components) samples, plus split and subsampling helpers.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::csi::{self, CsiError, PreprocessConfig};
use crate::depth::{self, DepthError, DepthPrepConfig};
use crate::rng::Rng;
use crate::sim::{self, ChannelConfig, SceneConfig, SimError};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub enum DataError {
    Csi(CsiError),
    Depth(DepthError),
    Sim(SimError),
    Empty,
}

impl core::fmt::Display for DataError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            DataError::Csi(e) => write!(f, "csi: {e}"),
            DataError::Depth(e) => write!(f, "depth: {e}"),
            DataError::Sim(e) => write!(f, "sim: {e}"),
            DataError::Empty => write!(f, "no usable samples generated"),
        }
    }
}

/// One aligned training sample. The depth frame is the one whose timestamp
/// is nearest the CSI window's end without exceeding it.
#[derive(Clone, Debug)]
pub struct Sample {
    pub id: String,
    pub subject: u32,
    pub window_start: f64,
    /// (2, n_packet, n_sub, n_rx) re/im dynamic CSI
    pub csi: Tensor<f32>,
    /// flattened phase-difference feature
    pub phase: Vec<f32>,
    /// (1, height, width) normalized moving-depth target
    pub image: Tensor<f32>,
    /// (crop, crop) binary shape mask
    pub mask: Tensor<f32>,
    /// normalized bounding-box center
    pub center: (f32, f32),
    /// normalized average depth
    pub avg_depth: f32,
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub n_subjects: usize,
}

#[derive(Clone, Debug)]
pub struct DatasetConfig {
    pub n_subjects: usize,
    pub windows_per_subject: usize,
    /// CSI window length implied by packets / rate; depth alignment uses it
    pub n_packet: usize,
    pub hop_s: f64,
    /// object-absent lead-in used for background estimation
    pub warmup_s: f64,
    pub seed: u64,
    pub scene: SceneConfig,
    pub channel: ChannelConfig,
    pub depth: DepthPrepConfig,
    pub preprocess: PreprocessConfig,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            n_subjects: 6,
            windows_per_subject: 333,
            n_packet: 300,
            hop_s: 0.1,
            warmup_s: 3.0,
            seed: 1,
            scene: SceneConfig::default(),
            channel: ChannelConfig::default(),
            depth: DepthPrepConfig::default(),
            preprocess: PreprocessConfig::default(),
        }
    }
}

impl DatasetConfig {
    pub fn window_len_s(&self) -> f64 {
        self.n_packet as f64 / self.channel.packet_rate_hz
    }

    pub fn subject_duration_s(&self) -> f64 {
        (self.windows_per_subject as f64 - 1.0) * self.hop_s + self.window_len_s() + 0.5
    }

    pub fn subject_scene(&self, subject: u32) -> SceneConfig {
        sim::subject_scene(&self.scene, subject, self.subject_duration_s(), self.seed)
    }
}

/// Rendered and cleaned depth frames for one subject, covering the warmup
/// lead-in (object absent, negative timestamps) plus the trajectory.
pub fn subject_frames(cfg: &DatasetConfig, scene: &SceneConfig) -> Vec<depth::DepthFrame> {
    let fps = scene.camera.fps;
    let t_end = (cfg.windows_per_subject as f64 - 1.0) * cfg.hop_s + cfg.window_len_s();
    let n_frames = ((cfg.warmup_s + t_end) * fps) as usize + 2;
    (0..n_frames)
        .map(|i| {
            let t = -cfg.warmup_s + i as f64 / fps;
            let rendered = sim::render_depth(scene, t);
            depth::clean_frame(&rendered.frame, &cfg.depth)
        })
        .collect()
}

/// Generate the full dataset in memory. Windows whose aligned frame holds
/// no detected object are skipped (object out of view).
pub fn build_dataset(cfg: &DatasetConfig) -> Result<Dataset, DataError> {
    let mut samples = Vec::new();
    for subject in 0..cfg.n_subjects as u32 {
        let scene = cfg.subject_scene(subject);
        scene.validate().map_err(DataError::Sim)?;
        let frames = subject_frames(cfg, &scene);
        let moving = depth::extract_moving(&frames, &cfg.depth).map_err(DataError::Depth)?;
        let fps = scene.camera.fps;
        let rng = Rng::new(cfg.seed).derive(0xDA7A_0000 + subject as u64);
        for w in 0..cfg.windows_per_subject {
            let start = w as f64 * cfg.hop_s;
            let end = start + cfg.window_len_s();
            // latest frame not after the window end (causal alignment)
            let fi = (((cfg.warmup_s + end) * fps) as usize).min(moving.len() - 1);
            debug_assert!(moving[fi].timestamp <= end + 1e-9);
            let comps = depth::core_components(&moving[fi], &cfg.depth);
            let center = match comps.center {
                Some(c) => c,
                None => continue,
            };
            let mut wrng = rng.derive(w as u64);
            let raw = sim::simulate_csi(&scene, &cfg.channel, start, cfg.n_packet, &mut wrng);
            let (csi_tensor, feature) =
                csi::preprocess_window(&raw, &cfg.preprocess).map_err(DataError::Csi)?;
            samples.push(Sample {
                id: format!("s{subject}w{w:04}"),
                subject,
                window_start: start,
                csi: csi_tensor,
                phase: feature.to_flat(),
                image: moving[fi].to_tensor(),
                mask: comps.mask,
                center,
                avg_depth: comps.avg_depth,
            });
        }
    }
    if samples.is_empty() {
        return Err(DataError::Empty);
    }
    Ok(Dataset {
        samples,
        n_subjects: cfg.n_subjects,
    })
}

/// Leave-one-subject-out split: (train indices, test indices).
pub fn loso_split(ds: &Dataset, held_out: u32) -> (Vec<usize>, Vec<usize>) {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (i, s) in ds.samples.iter().enumerate() {
        if s.subject == held_out {
            test.push(i);
        } else {
            train.push(i);
        }
    }
    (train, test)
}

/// Seeded per-epoch subsample of a fraction of the index set, in shuffled
/// (training) order. The same (seed, epoch) always yields the same draw.
pub fn epoch_subsample(indices: &[usize], fraction: f64, epoch: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = indices.to_vec();
    let mut rng = Rng::new(seed).derive(0x5AB5_0000 + epoch as u64);
    rng.shuffle(&mut order);
    let keep = ((indices.len() as f64 * fraction) + 0.999_999) as usize;
    order.truncate(keep.clamp(1, indices.len()));
    order
}

/// Order-sensitive FNV-1a signature of an index set, for split-identity
/// checks across runs.
pub fn split_signature(indices: &[usize]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &i in indices {
        for b in (i as u64).to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x1000_0000_01b3);
        }
    }
    h
}
