//! Synthetic scene + multipath channel generator: paired depth frames and
//! raw CSI windows with exact ground truth.
//!
//! The scene is a single moving billboard object (ellipse or rectangle) in a
//! rectangular sensing zone, viewed by a pinhole depth camera against a flat
//! background plane. The channel is a ray model: per-link static paths plus
//! one object-reflection path carrying time of flight (subcarrier phase
//! slope), angle of arrival (across-antenna phase), and Doppler (packet-axis
//! phase rotation), with optional per-packet multiplicative offsets common
//! to all transmit antennas — the worst case reference division must cancel.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::c64::{self, C64};
use crate::csi::RawCsiWindow;
use crate::depth::DepthFrame;
use crate::rng::Rng;

pub const SPEED_OF_LIGHT: f64 = 2.997_924_58e8;

#[derive(Clone, Debug, PartialEq)]
pub enum SimError {
    BadConfig(String),
    OutsideTrajectory { t: f64, duration: f64 },
}

impl fmt::Display for SimError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SimError::BadConfig(s) => write!(f, "bad scene config: {s}"),
            SimError::OutsideTrajectory { t, duration } => {
                write!(f, "t = {t} outside trajectory duration {duration}")
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ObjectKind {
    Ellipse,
    Rectangle,
}

#[derive(Clone, Debug)]
pub struct CameraConfig {
    /// camera position in zone coordinates (meters); looks along +y
    pub x: f64,
    pub y: f64,
    pub focal_px: f64,
    pub width: usize,
    pub height: usize,
    pub fps: f64,
}

impl Default for CameraConfig {
    fn default() -> Self {
        CameraConfig {
            x: 0.0,
            y: 0.0,
            focal_px: 120.0,
            width: 96,
            height: 64,
            fps: 30.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SceneConfig {
    /// sensing zone extents in meters
    pub zone_x: (f64, f64),
    pub zone_y: (f64, f64),
    pub object_kind: ObjectKind,
    /// billboard width and height in meters
    pub object_w: f64,
    pub object_h: f64,
    pub speed_mps: f64,
    /// piecewise-linear trajectory, traversed at constant speed
    pub waypoints: Vec<(f64, f64)>,
    /// flat background plane depth from the camera, meters
    pub background_depth: f64,
    pub camera: CameraConfig,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            zone_x: (-1.0, 1.0),
            zone_y: (1.0, 5.0),
            object_kind: ObjectKind::Ellipse,
            object_w: 0.45,
            object_h: 0.85,
            speed_mps: 1.2,
            waypoints: vec![(-0.6, 2.2), (0.6, 3.8), (-0.6, 4.2), (0.6, 2.4)],
            background_depth: 5.2,
            camera: CameraConfig::default(),
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.speed_mps <= 0.0 {
            return Err(SimError::BadConfig(String::from("speed must be positive")));
        }
        if self.waypoints.len() < 2 {
            return Err(SimError::BadConfig(String::from("need >= 2 waypoints")));
        }
        for &(x, y) in &self.waypoints {
            if x < self.zone_x.0 || x > self.zone_x.1 || y < self.zone_y.0 || y > self.zone_y.1 {
                return Err(SimError::BadConfig(String::from(
                    "trajectory leaves the sensing zone",
                )));
            }
        }
        Ok(())
    }

    pub fn path_length(&self) -> f64 {
        self.waypoints
            .windows(2)
            .map(|w| libm::hypot(w[1].0 - w[0].0, w[1].1 - w[0].1))
            .sum()
    }

    /// Trajectory duration in seconds.
    pub fn duration(&self) -> f64 {
        self.path_length() / self.speed_mps
    }

    /// Object centroid at time t; None before the start (warmup) or when
    /// fully out of the camera's forward half-space.
    pub fn object_position(&self, t: f64) -> Option<(f64, f64)> {
        if t < 0.0 || t > self.duration() {
            return None;
        }
        let mut remaining = t * self.speed_mps;
        for w in self.waypoints.windows(2) {
            let seg = libm::hypot(w[1].0 - w[0].0, w[1].1 - w[0].1);
            if remaining <= seg || seg == 0.0 {
                let f = if seg == 0.0 { 0.0 } else { remaining / seg };
                return Some((w[0].0 + f * (w[1].0 - w[0].0), w[0].1 + f * (w[1].1 - w[0].1)));
            }
            remaining -= seg;
        }
        self.waypoints.last().copied()
    }
}

/// Depth frame plus exact ground truth for the rendered object.
#[derive(Clone, Debug)]
pub struct RenderedFrame {
    pub frame: DepthFrame,
    /// full-frame object silhouette
    pub mask: Vec<bool>,
    /// pixel coordinates of the projected centroid
    pub center_px: Option<(f64, f64)>,
    pub depth_mm: f64,
    pub present: bool,
}

/// Pinhole projection of the object onto the depth frame at time t. Object
/// pixels carry the camera-to-object z-depth in millimeters; background
/// pixels carry the static plane depth.
pub fn render_depth(scene: &SceneConfig, t: f64) -> RenderedFrame {
    let cam = &scene.camera;
    let mut frame = DepthFrame::new(cam.width, cam.height, t);
    let bg_mm = (scene.background_depth * 1000.0) as f32;
    frame.data.fill(bg_mm);
    let mut mask = vec![false; cam.width * cam.height];

    let pos = scene.object_position(t);
    let (ox, oy) = match pos {
        Some(p) => p,
        None => {
            return RenderedFrame {
                frame,
                mask,
                center_px: None,
                depth_mm: 0.0,
                present: false,
            }
        }
    };
    let depth_m = oy - cam.y;
    if depth_m <= 0.1 {
        return RenderedFrame {
            frame,
            mask,
            center_px: None,
            depth_mm: 0.0,
            present: false,
        };
    }
    let cu = cam.focal_px * (ox - cam.x) / depth_m + cam.width as f64 / 2.0;
    let cv = cam.height as f64 / 2.0;
    let ru = cam.focal_px * scene.object_w / 2.0 / depth_m;
    let rv = cam.focal_px * scene.object_h / 2.0 / depth_m;
    let depth_mm = depth_m * 1000.0;
    let mut any = false;
    for py in 0..cam.height {
        let v = py as f64 + 0.5;
        for px in 0..cam.width {
            let u = px as f64 + 0.5;
            let du = (u - cu) / ru;
            let dv = (v - cv) / rv;
            let inside = match scene.object_kind {
                ObjectKind::Ellipse => du * du + dv * dv <= 1.0,
                ObjectKind::Rectangle => du.abs() <= 1.0 && dv.abs() <= 1.0,
            };
            if inside {
                frame.data[py * cam.width + px] = depth_mm as f32;
                mask[py * cam.width + px] = true;
                any = true;
            }
        }
    }
    RenderedFrame {
        frame,
        mask,
        center_px: if any { Some((cu, cv)) } else { None },
        depth_mm,
        present: any,
    }
}

#[derive(Clone, Debug)]
pub struct ChannelConfig {
    pub carrier_hz: f64,
    pub bandwidth_hz: f64,
    pub n_sub: usize,
    pub packet_rate_hz: f64,
    pub n_tx: usize,
    pub n_rx: usize,
    /// receive-array element spacing, meters (default half wavelength)
    pub antenna_spacing: f64,
    /// transmitter / receive-array reference positions in zone coordinates
    pub tx_pos: (f64, f64),
    pub rx_pos: (f64, f64),
    pub n_static_paths: usize,
    pub noise_std: f64,
    pub offsets_enabled: bool,
    /// reflectivity scale of the object path
    pub object_gain: f64,
    pub static_seed: u64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        let carrier_hz = 5.32e9;
        ChannelConfig {
            carrier_hz,
            bandwidth_hz: 20e6,
            n_sub: 30,
            packet_rate_hz: 1000.0,
            n_tx: 3,
            n_rx: 3,
            antenna_spacing: SPEED_OF_LIGHT / carrier_hz / 2.0,
            tx_pos: (-1.1, 0.2),
            rx_pos: (1.1, 0.2),
            n_static_paths: 3,
            noise_std: 1e-3,
            offsets_enabled: true,
            object_gain: 10.0,
            static_seed: 1,
        }
    }
}

impl ChannelConfig {
    /// Subcarrier frequencies spanning the bandwidth evenly.
    pub fn subcarrier_hz(&self, k: usize) -> f64 {
        self.carrier_hz - self.bandwidth_hz / 2.0
            + k as f64 * self.bandwidth_hz / (self.n_sub as f64 - 1.0)
    }

    pub fn wavelength(&self, k: usize) -> f64 {
        SPEED_OF_LIGHT / self.subcarrier_hz(k)
    }

    /// Per-link static path set (gain, delay), deterministic in the static
    /// seed. The first path dominates so the reference divisor stays away
    /// from zero.
    fn static_paths(&self, tx: usize, rx: usize) -> Vec<(C64, f64)> {
        let mut rng = Rng::new(self.static_seed).derive(((tx * 16 + rx) as u64) + 100);
        let mut paths = Vec::with_capacity(self.n_static_paths);
        for p in 0..self.n_static_paths {
            let amp = if p == 0 {
                1.0
            } else {
                rng.uniform_in(0.05, 0.15)
            };
            let phase = rng.uniform_in(0.0, 2.0 * core::f64::consts::PI);
            let delay = rng.uniform_in(10e-9, 80e-9);
            paths.push((C64::cis(phase).scale(amp), delay));
        }
        paths
    }
}

/// Ground truth attached to each generated window.
#[derive(Clone, Debug)]
pub struct ObjectState {
    pub position: (f64, f64),
    pub depth_mm: f64,
    pub sin_aoa: f64,
}

/// Simulate one raw CSI window starting at `window_start` seconds.
///
/// H[tx, rx, k, t] = sum_static a e^{-j 2 pi f_k tau}
///   + a_obj e^{-j 2 pi f_k tau_obj(t)} e^{+j 2 pi rx d sin(theta(t)) / lambda_k}
///   + noise, all scaled by a per-(k, t) offset common to every antenna
/// when offsets are enabled.
pub fn simulate_csi(
    scene: &SceneConfig,
    channel: &ChannelConfig,
    window_start: f64,
    n_packet: usize,
    rng: &mut Rng,
) -> RawCsiWindow {
    let mut raw = RawCsiWindow::zeros(channel.n_tx, channel.n_rx, channel.n_sub, n_packet);
    raw.sample_rate_hz = channel.packet_rate_hz;
    raw.carrier_hz = channel.carrier_hz;

    // static part is time-invariant: precompute per (tx, rx, k)
    let mut static_h = vec![c64::ZERO; channel.n_tx * channel.n_rx * channel.n_sub];
    for tx in 0..channel.n_tx {
        for rx in 0..channel.n_rx {
            let paths = channel.static_paths(tx, rx);
            for k in 0..channel.n_sub {
                let fk = channel.subcarrier_hz(k);
                let mut h = c64::ZERO;
                for &(gain, delay) in &paths {
                    h += gain * C64::cis(-2.0 * core::f64::consts::PI * fk * delay);
                }
                static_h[(tx * channel.n_rx + rx) * channel.n_sub + k] = h;
            }
        }
    }

    for t in 0..n_packet {
        let time = window_start + t as f64 / channel.packet_rate_hz;
        let obj = scene.object_position(time).map(|(ox, oy)| {
            let d_tx = libm::hypot(ox - channel.tx_pos.0, oy - channel.tx_pos.1);
            let d_rx = libm::hypot(ox - channel.rx_pos.0, oy - channel.rx_pos.1);
            let tau = (d_tx + d_rx) / SPEED_OF_LIGHT;
            let sin_aoa = (ox - channel.rx_pos.0) / d_rx;
            let area = scene.object_w * scene.object_h;
            let amp = channel.object_gain * area / (d_tx * d_rx);
            (tau, sin_aoa, amp)
        });
        for k in 0..channel.n_sub {
            let fk = channel.subcarrier_hz(k);
            let lambda = channel.wavelength(k);
            let offset = if channel.offsets_enabled {
                C64::cis(rng.uniform_in(0.0, 2.0 * core::f64::consts::PI))
            } else {
                c64::ONE
            };
            let obj_base = obj.map(|(tau, _, amp)| {
                C64::cis(-2.0 * core::f64::consts::PI * fk * tau).scale(amp)
            });
            for tx in 0..channel.n_tx {
                for rx in 0..channel.n_rx {
                    let mut h = static_h[(tx * channel.n_rx + rx) * channel.n_sub + k];
                    if let (Some(base), Some((_, sin_aoa, _))) = (obj_base, obj) {
                        let steer = C64::cis(
                            2.0 * core::f64::consts::PI * rx as f64 * channel.antenna_spacing
                                * sin_aoa
                                / lambda,
                        );
                        h += base * steer;
                    }
                    if channel.noise_std > 0.0 {
                        h += C64::new(
                            rng.normal() * channel.noise_std,
                            rng.normal() * channel.noise_std,
                        );
                    }
                    raw.set(tx, rx, k, t, h * offset);
                }
            }
        }
    }
    raw
}

/// Object ground truth at a given time (None during warmup / after the
/// trajectory ends).
pub fn object_state(scene: &SceneConfig, channel: &ChannelConfig, t: f64) -> Option<ObjectState> {
    scene.object_position(t).map(|(ox, oy)| {
        let d_rx = libm::hypot(ox - channel.rx_pos.0, oy - channel.rx_pos.1);
        ObjectState {
            position: (ox, oy),
            depth_mm: (oy - scene.camera.y) * 1000.0,
            sin_aoa: (ox - channel.rx_pos.0) / d_rx,
        }
    })
}

/// Per-subject scene variation for dataset generation: jittered speed,
/// object size and kind, and a random zig-zag trajectory long enough for
/// the requested duration.
pub fn subject_scene(template: &SceneConfig, subject: u32, duration_s: f64, seed: u64) -> SceneConfig {
    let mut rng = Rng::new(seed).derive(0x5CE_u64 + subject as u64);
    let mut scene = template.clone();
    scene.speed_mps = rng.uniform_in(1.0, 1.4);
    scene.object_w = rng.uniform_in(0.35, 0.55);
    scene.object_h = rng.uniform_in(0.70, 1.00);
    scene.object_kind = if subject % 2 == 0 {
        ObjectKind::Ellipse
    } else {
        ObjectKind::Rectangle
    };
    let margin = 0.35;
    let x_lo = scene.zone_x.0 + margin;
    let x_hi = scene.zone_x.1 - margin;
    let y_lo = (scene.zone_y.0 + margin).maxv(scene.camera.y + 1.2);
    let y_hi = scene.zone_y.1 - margin;
    let mut pts = vec![(rng.uniform_in(x_lo, x_hi), rng.uniform_in(y_lo, y_hi))];
    let needed = scene.speed_mps * duration_s * 1.05;
    let mut total = 0.0;
    while total < needed {
        let last = *pts.last().unwrap();
        let next = (rng.uniform_in(x_lo, x_hi), rng.uniform_in(y_lo, y_hi));
        let leg = libm::hypot(next.0 - last.0, next.1 - last.1);
        if leg < 0.5 {
            continue;
        }
        total += leg;
        pts.push(next);
    }
    scene.waypoints = pts;
    scene
}

trait MaxV {
    fn maxv(self, o: Self) -> Self;
}

impl MaxV for f64 {
    fn maxv(self, o: f64) -> f64 {
        if self > o {
            self
        } else {
            o
        }
    }
}
