//! CSI preprocessing: reference-antenna division, dynamic-component
//! extraction, and SVD-based phase-difference features.
//!
//! The three-step cleanup is (1) divide every link by the same transmit
//! antenna's link so receiver-side multiplicative offsets cancel exactly,
//! (2) high-pass along the packet axis to keep only dynamic content, and
//! (3) Savitzky-Golay smoothing against measurement noise. Phase features
//! are conjugate products of neighboring components of the principal
//! singular vector, taken across receive antennas and across subcarriers.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::c64::{self, C64};
use crate::dsp::{self, SavitzkyGolay};
use crate::tensor::Tensor;

pub const N_TX: usize = 3;
pub const N_RX: usize = 3;
pub const N_SUB: usize = 30;
pub const N_PACKET: usize = 300;

/// Packets per sub-segment when computing phase features; the per-window
/// feature is the component-wise median over segments.
pub const PHASE_SEGMENT_PACKETS: usize = 50;

#[derive(Clone, Debug, PartialEq)]
pub enum CsiError {
    ZeroDivisor { rx: usize, sub: usize, packet: usize },
    WindowTooShort { needed: usize, got: usize },
    WrongProvenance { expected: Provenance, got: Provenance },
    SvdFailed(String),
    BadConfig(String),
    BadShape(String),
}

impl fmt::Display for CsiError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CsiError::ZeroDivisor { rx, sub, packet } => write!(
                f,
                "corrupt window: zero reference divisor at rx {rx}, sub {sub}, packet {packet}"
            ),
            CsiError::WindowTooShort { needed, got } => {
                write!(f, "window too short: need {needed} packets, got {got}")
            }
            CsiError::WrongProvenance { expected, got } => {
                write!(f, "expected {expected:?} window, got {got:?}")
            }
            CsiError::SvdFailed(s) => write!(f, "SVD failed: {s}"),
            CsiError::BadConfig(s) => write!(f, "bad preprocess config: {s}"),
            CsiError::BadShape(s) => write!(f, "bad shape: {s}"),
        }
    }
}

/// Raw multi-antenna window, indexed (tx, rx, sub, packet).
#[derive(Clone, Debug)]
pub struct RawCsiWindow {
    pub n_tx: usize,
    pub n_rx: usize,
    pub n_sub: usize,
    pub n_packet: usize,
    pub sample_rate_hz: f64,
    pub carrier_hz: f64,
    data: Vec<C64>,
}

impl RawCsiWindow {
    pub fn zeros(n_tx: usize, n_rx: usize, n_sub: usize, n_packet: usize) -> Self {
        RawCsiWindow {
            n_tx,
            n_rx,
            n_sub,
            n_packet,
            sample_rate_hz: 1000.0,
            carrier_hz: 5.32e9,
            data: vec![c64::ZERO; n_tx * n_rx * n_sub * n_packet],
        }
    }

    #[inline]
    fn idx(&self, tx: usize, rx: usize, sub: usize, packet: usize) -> usize {
        ((tx * self.n_rx + rx) * self.n_sub + sub) * self.n_packet + packet
    }

    #[inline]
    pub fn get(&self, tx: usize, rx: usize, sub: usize, packet: usize) -> C64 {
        self.data[self.idx(tx, rx, sub, packet)]
    }

    #[inline]
    pub fn set(&mut self, tx: usize, rx: usize, sub: usize, packet: usize, v: C64) {
        let i = self.idx(tx, rx, sub, packet);
        self.data[i] = v;
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Provenance {
    RawDivided,
    Dynamic,
    Smoothed,
}

/// Single-transmitter window after reference division, indexed
/// (packet, sub, rx).
#[derive(Clone, Debug)]
pub struct CsiWindow {
    pub n_packet: usize,
    pub n_sub: usize,
    pub n_rx: usize,
    pub provenance: Provenance,
    data: Vec<C64>,
}

impl CsiWindow {
    pub fn zeros(n_packet: usize, n_sub: usize, n_rx: usize, provenance: Provenance) -> Self {
        CsiWindow {
            n_packet,
            n_sub,
            n_rx,
            provenance,
            data: vec![c64::ZERO; n_packet * n_sub * n_rx],
        }
    }

    #[inline]
    fn idx(&self, packet: usize, sub: usize, rx: usize) -> usize {
        (packet * self.n_sub + sub) * self.n_rx + rx
    }

    #[inline]
    pub fn get(&self, packet: usize, sub: usize, rx: usize) -> C64 {
        self.data[self.idx(packet, sub, rx)]
    }

    #[inline]
    pub fn set(&mut self, packet: usize, sub: usize, rx: usize, v: C64) {
        let i = self.idx(packet, sub, rx);
        self.data[i] = v;
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn l2_norm(&self) -> f64 {
        libm::sqrt(self.data.iter().map(|z| z.norm_sq()).sum())
    }

    /// Model-facing layout: (2, n_packet, n_sub, n_rx) with re/im channels.
    pub fn to_tensor(&self) -> Tensor<f32> {
        let n = self.n_packet * self.n_sub * self.n_rx;
        let mut data = Vec::with_capacity(2 * n);
        data.extend(self.data.iter().map(|z| z.re as f32));
        data.extend(self.data.iter().map(|z| z.im as f32));
        Tensor::from_vec(&[2, self.n_packet, self.n_sub, self.n_rx], data)
    }
}

/// Conjugate-product features of the principal singular vectors: one value
/// per neighboring antenna pair and per neighboring subcarrier pair.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseDifferenceFeature {
    pub antenna: Vec<C64>,
    pub subcarrier: Vec<C64>,
}

impl PhaseDifferenceFeature {
    /// Flattened re/im pairs (antenna part first), the student input layout.
    pub fn to_flat(&self) -> Vec<f32> {
        let mut out = Vec::with_capacity(2 * (self.antenna.len() + self.subcarrier.len()));
        for z in self.antenna.iter().chain(self.subcarrier.iter()) {
            out.push(z.re as f32);
            out.push(z.im as f32);
        }
        out
    }

    pub fn flat_len(n_rx: usize, n_sub: usize) -> usize {
        2 * ((n_rx - 1) + (n_sub - 1))
    }
}

#[derive(Clone, Debug)]
pub struct PreprocessConfig {
    pub cutoff_hz: f64,
    pub sg_window: usize,
    pub sg_order: usize,
    pub ref_tx: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            cutoff_hz: 2.0,
            sg_window: 11,
            sg_order: 3,
            ref_tx: 0,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self, sample_rate_hz: f64) -> Result<(), CsiError> {
        if self.sg_window <= self.sg_order {
            return Err(CsiError::BadConfig(String::from(
                "smoothing window must exceed polynomial order",
            )));
        }
        if self.sg_window % 2 == 0 {
            return Err(CsiError::BadConfig(String::from(
                "smoothing window must be odd",
            )));
        }
        if self.cutoff_hz >= sample_rate_hz / 2.0 {
            return Err(CsiError::BadConfig(String::from(
                "cutoff must be below Nyquist",
            )));
        }
        Ok(())
    }
}

/// Step 1: divide the surviving transmit antenna's links by the reference
/// transmit antenna's, cancelling any multiplicative offset common to all
/// transmitters at fixed (rx, sub, packet).
pub fn reference_divide(raw: &RawCsiWindow, ref_tx: usize) -> Result<CsiWindow, CsiError> {
    if ref_tx >= raw.n_tx || raw.n_tx < 2 {
        return Err(CsiError::BadConfig(format!(
            "ref_tx {ref_tx} out of range for {} transmitters",
            raw.n_tx
        )));
    }
    let kept_tx = (ref_tx + 1) % raw.n_tx;
    let mut out = CsiWindow::zeros(raw.n_packet, raw.n_sub, raw.n_rx, Provenance::RawDivided);
    for rx in 0..raw.n_rx {
        for sub in 0..raw.n_sub {
            for packet in 0..raw.n_packet {
                let denom = raw.get(ref_tx, rx, sub, packet);
                if denom.norm_sq() == 0.0 {
                    return Err(CsiError::ZeroDivisor { rx, sub, packet });
                }
                out.set(packet, sub, rx, raw.get(kept_tx, rx, sub, packet) / denom);
            }
        }
    }
    Ok(out)
}

/// Steps 2-3: per-link mean removal + first-order high-pass along the
/// packet axis, then Savitzky-Golay smoothing of real and imaginary parts.
pub fn extract_dynamic(
    csi: &CsiWindow,
    cfg: &PreprocessConfig,
    sample_rate_hz: f64,
) -> Result<CsiWindow, CsiError> {
    if csi.provenance != Provenance::RawDivided {
        return Err(CsiError::WrongProvenance {
            expected: Provenance::RawDivided,
            got: csi.provenance,
        });
    }
    cfg.validate(sample_rate_hz)?;
    if csi.n_packet < cfg.sg_window {
        return Err(CsiError::WindowTooShort {
            needed: cfg.sg_window,
            got: csi.n_packet,
        });
    }
    let sg = SavitzkyGolay::new(cfg.sg_window, cfg.sg_order)
        .map_err(|e| CsiError::BadConfig(format!("{e}")))?;
    let mut out = CsiWindow::zeros(csi.n_packet, csi.n_sub, csi.n_rx, Provenance::Smoothed);
    let mut re = vec![0.0f64; csi.n_packet];
    let mut im = vec![0.0f64; csi.n_packet];
    for sub in 0..csi.n_sub {
        for rx in 0..csi.n_rx {
            for t in 0..csi.n_packet {
                let z = csi.get(t, sub, rx);
                re[t] = z.re;
                im[t] = z.im;
            }
            for part in [&mut re, &mut im] {
                dsp::subtract_mean(part);
                let hp = dsp::high_pass(part, cfg.cutoff_hz, sample_rate_hz);
                part.copy_from_slice(&hp);
                // re-center so the dynamic component has an exactly zero
                // temporal mean per link
                dsp::subtract_mean(part);
                let sm = sg.apply(part).map_err(|e| CsiError::BadConfig(format!("{e}")))?;
                part.copy_from_slice(&sm);
            }
            for t in 0..csi.n_packet {
                out.set(t, sub, rx, C64::new(re[t], im[t]));
            }
        }
    }
    Ok(out)
}

/// Principal eigenvector of a Hermitian PSD matrix by power iteration, with
/// the global phase fixed so the largest-magnitude component is real
/// positive. `g` is row-major n x n.
pub fn principal_eigenvector(g: &[C64], n: usize) -> Result<Vec<C64>, CsiError> {
    let trace: f64 = (0..n).map(|i| g[i * n + i].re).sum();
    if !(trace > 0.0) || !trace.is_finite() {
        return Err(CsiError::SvdFailed(format!(
            "degenerate Gram matrix (trace {trace})"
        )));
    }
    // deterministic, non-symmetric start vector
    let mut v: Vec<C64> = (0..n)
        .map(|i| C64::new(1.0 + 0.01 * i as f64, 0.003 * (i as f64 + 1.0)))
        .collect();
    normalize(&mut v);
    let mut lambda = 0.0;
    let mut resid = f64::INFINITY;
    // convergence rate is (lambda2/lambda1)^k, so a near-degenerate top of
    // the spectrum needs far more than a few hundred iterations; check the
    // residual periodically and stop as soon as it is tight
    for it in 1..=10_000 {
        let mut w = vec![c64::ZERO; n];
        for r in 0..n {
            let mut acc = c64::ZERO;
            for c in 0..n {
                acc += g[r * n + c] * v[c];
            }
            w[r] = acc;
        }
        lambda = libm::sqrt(w.iter().map(|z| z.norm_sq()).sum());
        if lambda == 0.0 {
            return Err(CsiError::SvdFailed(String::from("zero iterate")));
        }
        // ||G v - lambda v|| relative to lambda, before renormalizing
        resid = libm::sqrt(
            w.iter()
                .zip(v.iter())
                .map(|(wz, vz)| (*wz - vz.scale(lambda)).norm_sq())
                .sum(),
        ) / lambda;
        for z in &mut w {
            *z = z.scale(1.0 / lambda);
        }
        v = w;
        if resid <= 1e-12 || (it >= 2000 && resid <= 1e-8) {
            break;
        }
    }
    if resid > 1e-4 {
        return Err(CsiError::SvdFailed(format!(
            "power iteration did not converge (relative residual {resid:e}, lambda {lambda:e})"
        )));
    }
    fix_phase(&mut v);
    Ok(v)
}

fn normalize(v: &mut [C64]) {
    let n = libm::sqrt(v.iter().map(|z| z.norm_sq()).sum());
    if n > 0.0 {
        for z in v.iter_mut() {
            *z = z.scale(1.0 / n);
        }
    }
}

fn fix_phase(v: &mut [C64]) {
    let mut best = 0;
    for (i, z) in v.iter().enumerate() {
        if z.norm_sq() > v[best].norm_sq() {
            best = i;
        }
    }
    let phase = v[best].arg();
    let rot = C64::cis(-phase);
    for z in v.iter_mut() {
        *z = *z * rot;
    }
}

/// Principal left singular vector of the (dim x cols) reshape of one
/// segment, via the dim x dim Gram matrix.
fn segment_singular_vector(
    csi: &CsiWindow,
    packets: core::ops::Range<usize>,
    across_rx: bool,
) -> Result<Vec<C64>, CsiError> {
    let n = if across_rx { csi.n_rx } else { csi.n_sub };
    let mut g = vec![c64::ZERO; n * n];
    for t in packets {
        for sub in 0..csi.n_sub {
            for rx in 0..csi.n_rx {
                let zi = csi.get(t, sub, rx);
                // G[i][j] += z_i * conj(z_j), summed over the shared axes
                let i = if across_rx { rx } else { sub };
                for j in 0..n {
                    let zj = if across_rx {
                        csi.get(t, sub, j)
                    } else {
                        csi.get(t, j, rx)
                    };
                    g[i * n + j] += zi * zj.conj();
                }
            }
        }
    }
    principal_eigenvector(&g, n)
}

fn conj_products(u: &[C64]) -> Vec<C64> {
    (0..u.len() - 1).map(|i| u[i] * u[i + 1].conj()).collect()
}

/// SVD-based phase-difference feature: per 50-packet sub-segment, conjugate
/// products of neighboring principal-singular-vector components across
/// antennas and across subcarriers; the window feature is the per-component
/// temporal median over segments.
pub fn phase_differences(csi: &CsiWindow) -> Result<PhaseDifferenceFeature, CsiError> {
    let seg = PHASE_SEGMENT_PACKETS.min(csi.n_packet);
    let n_seg = (csi.n_packet / seg).max(1);
    let mut ant_segs: Vec<Vec<C64>> = Vec::with_capacity(n_seg);
    let mut sub_segs: Vec<Vec<C64>> = Vec::with_capacity(n_seg);
    for s in 0..n_seg {
        let range = s * seg..(s + 1) * seg;
        let u_rx = segment_singular_vector(csi, range.clone(), true)?;
        let u_sub = segment_singular_vector(csi, range, false)?;
        ant_segs.push(conj_products(&u_rx));
        sub_segs.push(conj_products(&u_sub));
    }
    let median_over = |segs: &[Vec<C64>], len: usize| -> Vec<C64> {
        (0..len)
            .map(|i| {
                let re: Vec<f64> = segs.iter().map(|s| s[i].re).collect();
                let im: Vec<f64> = segs.iter().map(|s| s[i].im).collect();
                C64::new(dsp::median(&re), dsp::median(&im))
            })
            .collect()
    };
    Ok(PhaseDifferenceFeature {
        antenna: median_over(&ant_segs, csi.n_rx - 1),
        subcarrier: median_over(&sub_segs, csi.n_sub - 1),
    })
}

/// Full three-step preprocessing of one raw window into the two model
/// inputs.
pub fn preprocess_window(
    raw: &RawCsiWindow,
    cfg: &PreprocessConfig,
) -> Result<(Tensor<f32>, PhaseDifferenceFeature), CsiError> {
    let divided = reference_divide(raw, cfg.ref_tx)?;
    let dynamic = extract_dynamic(&divided, cfg, raw.sample_rate_hz)?;
    let feature = phase_differences(&dynamic)?;
    Ok((dynamic.to_tensor(), feature))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn random_raw(seed: u64, n_tx: usize, n_rx: usize, n_sub: usize, n_packet: usize) -> RawCsiWindow {
        let mut rng = Rng::new(seed);
        let mut raw = RawCsiWindow::zeros(n_tx, n_rx, n_sub, n_packet);
        for z in raw.data_mut() {
            *z = C64::new(rng.uniform_in(-1.0, 1.0), rng.uniform_in(-1.0, 1.0));
            // keep divisors well away from zero
            if z.norm_sq() < 0.04 {
                *z = C64::new(0.5, 0.5);
            }
        }
        raw
    }

    #[test]
    fn reference_division_cancels_common_offsets_exactly() {
        let clean = random_raw(3, 3, 3, 8, 20);
        let mut offset = clean.clone();
        let mut rng = Rng::new(4);
        for sub in 0..offset.n_sub {
            for packet in 0..offset.n_packet {
                // one multiplicative offset per (sub, packet), shared by
                // every antenna pair -- the receiver-chain distortion model
                let o = C64::cis(rng.uniform_in(-core::f64::consts::PI, core::f64::consts::PI))
                    .scale(rng.uniform_in(0.5, 2.0));
                for tx in 0..offset.n_tx {
                    for rx in 0..offset.n_rx {
                        let v = offset.get(tx, rx, sub, packet);
                        offset.set(tx, rx, sub, packet, v * o);
                    }
                }
            }
        }
        let a = reference_divide(&clean, 0).unwrap();
        let b = reference_divide(&offset, 0).unwrap();
        for (x, y) in a.data().iter().zip(b.data().iter()) {
            assert!((*x - *y).norm_sq() < 1e-18);
        }
    }

    #[test]
    fn zero_reference_divisor_is_rejected() {
        let mut raw = random_raw(5, 2, 2, 4, 6);
        raw.set(0, 1, 2, 3, c64::ZERO);
        assert_eq!(
            reference_divide(&raw, 0).err(),
            Some(CsiError::ZeroDivisor { rx: 1, sub: 2, packet: 3 })
        );
    }

    #[test]
    fn dynamic_extraction_kills_time_constant_links() {
        // constant-in-time links are pure static content; the dynamic
        // window must vanish (up to smoothing round-off)
        let mut raw = RawCsiWindow::zeros(2, 2, 6, 100);
        let mut rng = Rng::new(7);
        for tx in 0..2 {
            for rx in 0..2 {
                for sub in 0..6 {
                    let v = C64::new(rng.uniform_in(0.5, 1.5), rng.uniform_in(-1.0, 1.0));
                    for t in 0..100 {
                        raw.set(tx, rx, sub, t, v);
                    }
                }
            }
        }
        let divided = reference_divide(&raw, 0).unwrap();
        let dynamic = extract_dynamic(&divided, &PreprocessConfig::default(), 1000.0).unwrap();
        assert!(dynamic.l2_norm() < 1e-9, "residual {}", dynamic.l2_norm());
    }

    #[test]
    fn principal_eigenvector_matches_constructed_dominant_direction() {
        // G = 5 v1 v1^H + 1 v2 v2^H with v1 orthogonal to v2
        let s3 = 1.0 / libm::sqrt(3.0);
        let s2 = 1.0 / libm::sqrt(2.0);
        let v1 = [C64::new(s3, 0.0), C64::new(0.0, s3), C64::new(-s3, 0.0)];
        let v2 = [C64::new(s2, 0.0), c64::ZERO, C64::new(s2, 0.0)];
        let mut g = vec![c64::ZERO; 9];
        for i in 0..3 {
            for j in 0..3 {
                g[i * 3 + j] = (v1[i] * v1[j].conj()).scale(5.0) + (v2[i] * v2[j].conj()).scale(1.0);
            }
        }
        let v = principal_eigenvector(&g, 3).unwrap();
        // unit overlap with v1 regardless of global phase
        let mut dot = c64::ZERO;
        for i in 0..3 {
            dot += v[i] * v1[i].conj();
        }
        assert!((libm::sqrt(dot.norm_sq()) - 1.0).abs() < 1e-9);
        // phase convention: largest-magnitude component real positive
        let mut best = 0;
        for i in 1..3 {
            if v[i].norm_sq() > v[best].norm_sq() {
                best = i;
            }
        }
        assert!(v[best].im.abs() < 1e-9 && v[best].re > 0.0);
    }

    #[test]
    fn steering_vector_yields_uniform_conjugate_product_phase() {
        // rank-1 Gram from a uniform-linear-array steering vector at
        // half-wavelength spacing: neighboring conjugate products all carry
        // phase -pi sin(theta)
        let theta: f64 = 0.7;
        let n = 4;
        let u: Vec<C64> = (0..n)
            .map(|k| C64::cis(core::f64::consts::PI * theta.sin() * k as f64).scale(0.5))
            .collect();
        let mut g = vec![c64::ZERO; n * n];
        for i in 0..n {
            for j in 0..n {
                g[i * n + j] = u[i] * u[j].conj();
            }
        }
        let v = principal_eigenvector(&g, n).unwrap();
        let expected = -core::f64::consts::PI * theta.sin();
        for p in conj_products(&v) {
            let mut d = p.arg() - expected;
            while d > core::f64::consts::PI {
                d -= 2.0 * core::f64::consts::PI;
            }
            while d < -core::f64::consts::PI {
                d += 2.0 * core::f64::consts::PI;
            }
            assert!(d.abs() < 1e-6, "phase error {d}");
        }
    }

    #[test]
    fn phase_features_are_amplitude_invariant() {
        let mut csi = CsiWindow::zeros(100, 6, 3, Provenance::Smoothed);
        let mut rng = Rng::new(11);
        for z in 0..csi.data().len() {
            let v = C64::new(rng.uniform_in(-1.0, 1.0), rng.uniform_in(-1.0, 1.0));
            csi.data_mut()[z] = v;
        }
        let mut scaled = csi.clone();
        for z in scaled.data_mut() {
            *z = z.scale(3.7);
        }
        let a = phase_differences(&csi).unwrap();
        let b = phase_differences(&scaled).unwrap();
        for (x, y) in a
            .antenna
            .iter()
            .chain(a.subcarrier.iter())
            .zip(b.antenna.iter().chain(b.subcarrier.iter()))
        {
            assert!((*x - *y).norm_sq() < 1e-12);
        }
    }

    #[test]
    fn absent_object_leaves_negligible_dynamic_residual() {
        // window past the end of the trajectory: only static paths, phase
        // offsets, and a little noise remain; after offset cancellation and
        // high-pass the dynamic component should be noise-sized
        let scene = crate::sim::SceneConfig::default();
        let mut channel = crate::sim::ChannelConfig::default();
        channel.noise_std = 1e-6;
        channel.offsets_enabled = true;
        let start = scene.duration() + 1.0;
        let mut rng = Rng::new(13);
        let raw = crate::sim::simulate_csi(&scene, &channel, start, 300, &mut rng);
        let divided = reference_divide(&raw, 0).unwrap();
        let dynamic = extract_dynamic(&divided, &PreprocessConfig::default(), 1000.0).unwrap();
        let ratio = dynamic.l2_norm() / divided.l2_norm();
        assert!(ratio < 1e-3, "dynamic/static ratio {ratio}");
    }
}
