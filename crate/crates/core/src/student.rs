//! The CSI-side student encoder, its three-level distillation loss against
//! a frozen teacher, end-to-end inference through the teacher's decoders,
//! and the end-to-end VAE baseline trained from CSI with the plain VAE loss.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::data::{Dataset, Sample};
use crate::nn::{
    bce, concat, kl_gaussian, mse, reparameterize, split_grad, Adam, Conv2d, Dense, Graph,
    GraphCache, LatentDistribution, Layer, Lstm, NnError, NnResult,
};
use crate::real::Real;
use crate::rng::Rng;
use crate::teacher::{
    image_decoder_graph, normal_tensor, sample_targets, TeacherConfig, TeacherModel, TrainConfig,
    TrainOutcome,
};
use crate::tensor::Tensor;

/// CSI-branch channel plan (five stride-2 stages over (time, sub x rx)).
const CSI_CHANNELS: [usize; 5] = [4, 8, 8, 12, 16];
const LSTM_HIDDEN: usize = 64;
const PHASE_HIDDEN: usize = 32;

#[derive(Clone, Debug)]
pub struct StudentConfig {
    pub n_packet: usize,
    pub n_sub: usize,
    pub n_rx: usize,
    pub phase_len: usize,
    /// must equal the teacher feature dim (feature-level loss)
    pub feature_dim: usize,
    pub latent_dim: usize,
}

impl StudentConfig {
    pub fn for_teacher(t: &TeacherConfig) -> Self {
        StudentConfig {
            n_packet: crate::csi::N_PACKET,
            n_sub: crate::csi::N_SUB,
            n_rx: crate::csi::N_RX,
            phase_len: crate::csi::PhaseDifferenceFeature::flat_len(
                crate::csi::N_RX,
                crate::csi::N_SUB,
            ),
            feature_dim: t.feature_dim(),
            latent_dim: t.latent_dim,
        }
    }

    fn ceil_half(n: usize) -> usize {
        n / 2 + n % 2
    }

    /// Conv-stack output extents over (time, sub x rx).
    fn conv_out(&self) -> (usize, usize) {
        let mut t = self.n_packet;
        let mut w = self.n_sub * self.n_rx;
        for _ in 0..5 {
            t = Self::ceil_half(t);
            w = Self::ceil_half(w);
        }
        (t, w)
    }

    fn lstm_in_dim(&self) -> usize {
        CSI_CHANNELS[4] * self.conv_out().1
    }
}

#[derive(Clone, Copy, Debug)]
pub struct StudentLossWeights {
    pub w5: f64,
    pub w6: f64,
    pub w7: f64,
    pub alpha: f64,
    pub w2p: f64,
    pub w3p: f64,
    pub w4p: f64,
}

impl Default for StudentLossWeights {
    fn default() -> Self {
        StudentLossWeights {
            w5: 1.0,
            w6: 1.0,
            w7: 1.0,
            alpha: 0.5,
            w2p: 1.0,
            w3p: 1.0,
            w4p: 1.0,
        }
    }
}

impl StudentLossWeights {
    pub fn validate(&self) -> NnResult<()> {
        for (v, n) in [
            (self.w5, "w5"),
            (self.w6, "w6"),
            (self.w7, "w7"),
            (self.w2p, "w2'"),
            (self.w3p, "w3'"),
            (self.w4p, "w4'"),
        ] {
            if v < 0.0 || !v.is_finite() {
                return Err(NnError::InvalidParameter {
                    what: alloc::format!("loss weight {n} must be finite and >= 0"),
                });
            }
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(NnError::InvalidParameter {
                what: String::from("alpha must lie in [0,1]"),
            });
        }
        Ok(())
    }
}

/// Unweighted per-term values of the three-level loss.
#[derive(Clone, Copy, Debug, Default)]
pub struct StudentLossTerms {
    pub feature: f64,
    pub latent: f64,
    pub gt_mask: f64,
    pub gt_depth: f64,
    pub gt_center: f64,
}

impl StudentLossTerms {
    pub fn total(&self, w: &StudentLossWeights) -> f64 {
        w.w5 * self.feature
            + w.w6 * self.latent
            + w.w7 * (w.w2p * self.gt_mask + w.w3p * self.gt_depth + w.w4p * self.gt_center)
    }

    fn add(&mut self, o: &StudentLossTerms) {
        self.feature += o.feature;
        self.latent += o.latent;
        self.gt_mask += o.gt_mask;
        self.gt_depth += o.gt_depth;
        self.gt_center += o.gt_center;
    }

    fn scale(&mut self, s: f64) {
        self.feature *= s;
        self.latent *= s;
        self.gt_mask *= s;
        self.gt_depth *= s;
        self.gt_center *= s;
    }
}

/// P_SF (CNN-LSTM + FC fusion) and R_SZ (mu / log-sigma heads).
#[derive(Clone, Debug)]
pub struct StudentModel<F: Real> {
    pub cfg: StudentConfig,
    pub csi_conv: Graph<F>,
    pub lstm: Graph<F>,
    pub phase_net: Graph<F>,
    pub fusion: Graph<F>,
    pub mu_head: Graph<F>,
    pub logsig_head: Graph<F>,
}

pub struct StudentCaches<F: Real> {
    conv: GraphCache<F>,
    lstm: GraphCache<F>,
    phase: GraphCache<F>,
    fusion: GraphCache<F>,
    mu: GraphCache<F>,
    logsig: GraphCache<F>,
    conv_shape: (usize, usize, usize),
    logsig_deriv: Tensor<F>,
    pub feature: Tensor<F>,
    pub sigma: Tensor<F>,
    pub mu_s: Tensor<F>,
}

impl<F: Real> StudentModel<F> {
    pub fn new(cfg: StudentConfig, rng: &mut Rng) -> Self {
        let mut conv = vec![
            Layer::Reshape(vec![2, cfg.n_packet, cfg.n_sub * cfg.n_rx]),
            Layer::Conv2d(Conv2d::new(2, CSI_CHANNELS[0], 3, 2, 1, rng)),
        ];
        for i in 1..5 {
            conv.push(Layer::Relu);
            conv.push(Layer::Conv2d(Conv2d::new(
                CSI_CHANNELS[i - 1],
                CSI_CHANNELS[i],
                3,
                2,
                1,
                rng,
            )));
        }
        conv.push(Layer::Relu);

        let lstm = Graph::new(vec![Layer::Lstm(Lstm::new(
            cfg.lstm_in_dim(),
            LSTM_HIDDEN,
            2,
            rng,
        ))]);
        let phase_net = Graph::new(vec![
            Layer::Dense(Dense::new(cfg.phase_len, 64, rng)),
            Layer::Relu,
            Layer::Dense(Dense::new(64, PHASE_HIDDEN, rng)),
            Layer::Relu,
        ]);
        let fusion = Graph::new(vec![
            Layer::Dense(Dense::new(LSTM_HIDDEN + PHASE_HIDDEN, 128, rng)),
            Layer::Relu,
            Layer::Dense(Dense::new(128, cfg.feature_dim, rng)),
            Layer::Relu,
        ]);
        // zero-initialized heads start the latent at the prior
        let mu_head = Graph::new(vec![Layer::Dense(Dense::new_zero(
            cfg.feature_dim,
            cfg.latent_dim,
        ))]);
        let logsig_head = Graph::new(vec![Layer::Dense(Dense::new_zero(
            cfg.feature_dim,
            cfg.latent_dim,
        ))]);

        StudentModel {
            cfg,
            csi_conv: Graph::new(conv),
            lstm,
            phase_net,
            fusion,
            mu_head,
            logsig_head,
        }
    }

    fn check_inputs(&self, csi: &Tensor<F>, phase: &Tensor<F>) -> NnResult<()> {
        let want = [2, self.cfg.n_packet, self.cfg.n_sub, self.cfg.n_rx];
        if csi.shape() != want {
            return Err(NnError::ShapeMismatch {
                layer: 0,
                expected: alloc::format!("{want:?}"),
                got: csi.shape_string(),
            });
        }
        if phase.shape() != [self.cfg.phase_len] {
            return Err(NnError::ShapeMismatch {
                layer: 0,
                expected: alloc::format!("[{}]", self.cfg.phase_len),
                got: phase.shape_string(),
            });
        }
        Ok(())
    }

    pub fn forward_cached(
        &self,
        csi: &Tensor<F>,
        phase: &Tensor<F>,
    ) -> NnResult<(LatentDistribution<F>, StudentCaches<F>)> {
        self.check_inputs(csi, phase)?;
        let (conv_out, conv_cache) = self.csi_conv.forward(csi)?;
        let (c, t, w) = (
            conv_out.shape()[0],
            conv_out.shape()[1],
            conv_out.shape()[2],
        );
        let seq = time_major(&conv_out);
        let (h, lstm_cache) = self.lstm.forward(&seq)?;
        let (p, phase_cache) = self.phase_net.forward(phase)?;
        let fused_in = concat(&[&h, &p]);
        let (feature, fusion_cache) = self.fusion.forward(&fused_in)?;
        let (mu, mu_cache) = self.mu_head.forward(&feature)?;
        let (logsig, logsig_cache) = self.logsig_head.forward(&feature)?;
        let (clamped, logsig_deriv) = crate::nn::clamp_log_sigma(&logsig);
        let sigma = clamped.map(|v| v.exp());
        let dist = LatentDistribution::new(mu.clone(), sigma.clone())?;
        Ok((
            dist,
            StudentCaches {
                conv: conv_cache,
                lstm: lstm_cache,
                phase: phase_cache,
                fusion: fusion_cache,
                mu: mu_cache,
                logsig: logsig_cache,
                conv_shape: (c, t, w),
                logsig_deriv,
                feature,
                sigma,
                mu_s: mu,
            },
        ))
    }

    /// (feature f_s, latent distribution).
    pub fn forward(
        &self,
        csi: &Tensor<F>,
        phase: &Tensor<F>,
    ) -> NnResult<(Tensor<F>, LatentDistribution<F>)> {
        let (dist, caches) = self.forward_cached(csi, phase)?;
        Ok((caches.feature, dist))
    }

    /// Backward pass from gradients on (f_s, mu, log sigma); parameter
    /// gradients are accumulated into `acc` in `params()` order, input
    /// gradients discarded.
    pub fn backward_from(
        &self,
        caches: &StudentCaches<F>,
        g_feature: &Tensor<F>,
        g_mu: &Tensor<F>,
        g_logsig: &Tensor<F>,
        acc: &mut [Tensor<F>],
    ) -> NnResult<()> {
        let (gf_mu, gp_mu) = self.mu_head.backward(&caches.mu, g_mu)?;
        // g_logsig arrives as dL/d(clamped log sigma); fold in the clamp
        let mut g_ls_raw = g_logsig.clone();
        for (g, &d) in g_ls_raw
            .data_mut()
            .iter_mut()
            .zip(caches.logsig_deriv.data().iter())
        {
            *g *= d;
        }
        let (gf_ls, gp_ls) = self.logsig_head.backward(&caches.logsig, &g_ls_raw)?;
        let mut gf = g_feature.clone();
        gf.add_scaled(&gf_mu, F::ONE);
        gf.add_scaled(&gf_ls, F::ONE);
        let (g_fused, gp_fusion) = self.fusion.backward(&caches.fusion, &gf)?;
        let parts = split_grad(&g_fused, &[LSTM_HIDDEN, PHASE_HIDDEN]);
        let (g_seq, gp_lstm) = self.lstm.backward(&caches.lstm, &parts[0])?;
        let g_conv_out = channel_major(&g_seq, caches.conv_shape);
        let (_, gp_conv) = self.csi_conv.backward(&caches.conv, &g_conv_out)?;
        let (_, gp_phase) = self.phase_net.backward(&caches.phase, &parts[1])?;

        let mut i = 0;
        for gp in [gp_conv, gp_lstm, gp_phase, gp_fusion, gp_mu, gp_ls] {
            for g in gp {
                acc[i].add_scaled(&g, F::ONE);
                i += 1;
            }
        }
        debug_assert_eq!(i, acc.len());
        Ok(())
    }

    fn graphs(&self) -> [(&Graph<F>, &'static str); 6] {
        [
            (&self.csi_conv, "csi"),
            (&self.lstm, "lstm"),
            (&self.phase_net, "phase"),
            (&self.fusion, "fuse"),
            (&self.mu_head, "mu"),
            (&self.logsig_head, "logsig"),
        ]
    }

    pub fn params(&self) -> Vec<&Tensor<F>> {
        self.graphs().iter().flat_map(|(g, _)| g.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<F>> {
        let mut out = Vec::new();
        out.extend(self.csi_conv.params_mut());
        out.extend(self.lstm.params_mut());
        out.extend(self.phase_net.params_mut());
        out.extend(self.fusion.params_mut());
        out.extend(self.mu_head.params_mut());
        out.extend(self.logsig_head.params_mut());
        out
    }

    pub fn param_names(&self) -> Vec<String> {
        self.graphs()
            .iter()
            .flat_map(|(g, p)| g.param_names(p))
            .collect()
    }

    pub fn param_signature(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for p in self.params() {
            for v in p.data() {
                for b in v.to_f64().to_bits().to_le_bytes() {
                    h ^= b as u64;
                    h = h.wrapping_mul(0x1000_0000_01b3);
                }
            }
        }
        h
    }
}

/// (C, T, W) -> (T, C*W): the recurrent block consumes the conv features
/// time-major.
fn time_major<F: Real>(x: &Tensor<F>) -> Tensor<F> {
    let (c, t, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let xd = x.data();
    let mut out = vec![F::ZERO; c * t * w];
    for ci in 0..c {
        for ti in 0..t {
            for wi in 0..w {
                out[ti * (c * w) + ci * w + wi] = xd[(ci * t + ti) * w + wi];
            }
        }
    }
    Tensor::from_vec(&[t, c * w], out)
}

fn channel_major<F: Real>(g: &Tensor<F>, (c, t, w): (usize, usize, usize)) -> Tensor<F> {
    let gd = g.data();
    let mut out = vec![F::ZERO; c * t * w];
    for ci in 0..c {
        for ti in 0..t {
            for wi in 0..w {
                out[(ci * t + ti) * w + wi] = gd[ti * (c * w) + ci * w + wi];
            }
        }
    }
    Tensor::from_vec(&[c, t, w], out)
}

fn half_mse_grad<F: Real>(pred: &Tensor<F>, target: &Tensor<F>, scale: f64) -> (f64, Tensor<F>) {
    let (v, mut g) = mse(pred, target).expect("matched shapes");
    g.scale_in_place(F::from_f64(scale));
    (v.to_f64(), g)
}

/// Forward-only evaluation of the three-level loss for one sample.
pub fn student_loss<F: Real>(
    student_feature: &Tensor<F>,
    student_dist: &LatentDistribution<F>,
    teacher_feature: &Tensor<F>,
    teacher_dist: &LatentDistribution<F>,
    targets: &(Tensor<F>, Tensor<F>),
    teacher: &TeacherModel<F>,
    weights: &StudentLossWeights,
) -> NnResult<StudentLossTerms> {
    weights.validate()?;
    let (feature, _) = mse(student_feature, teacher_feature)?;
    let (lmu, _) = mse(&student_dist.mu, &teacher_dist.mu)?;
    let (lsig, _) = mse(&student_dist.sigma, &teacher_dist.sigma)?;
    let latent = weights.alpha * lmu.to_f64() + (1.0 - weights.alpha) * lsig.to_f64();
    let (mask_t, cd_t) = targets;
    let (mask, _) = teacher.mask_decoder.forward(&student_dist.mu)?;
    let (cd, _) = teacher.center_decoder.forward(&student_dist.mu)?;
    let (gt_mask, _) = bce(&mask, mask_t)?;
    let (gt_center, gt_depth) = center_depth_terms(&cd, cd_t)?;
    Ok(StudentLossTerms {
        feature: feature.to_f64(),
        latent,
        gt_mask: gt_mask.to_f64(),
        gt_depth,
        gt_center,
    })
}

fn center_depth_terms<F: Real>(pred: &Tensor<F>, target: &Tensor<F>) -> NnResult<(f64, f64)> {
    let pc = Tensor::from_vec(&[2], pred.data()[..2].to_vec());
    let tc = Tensor::from_vec(&[2], target.data()[..2].to_vec());
    let pd = Tensor::from_vec(&[1], pred.data()[2..].to_vec());
    let td = Tensor::from_vec(&[1], target.data()[2..].to_vec());
    let (c, _) = mse(&pc, &tc)?;
    let (d, _) = mse(&pd, &td)?;
    Ok((c.to_f64(), d.to_f64()))
}

/// One training step's backward for one sample. The teacher is only read;
/// its decoder parameter gradients are computed and deliberately dropped
/// (frozen decoders).
fn student_backward<F: Real>(
    student: &StudentModel<F>,
    teacher: &TeacherModel<F>,
    teacher_feature: &Tensor<F>,
    teacher_dist: &LatentDistribution<F>,
    sample: &Sample,
    weights: &StudentLossWeights,
    acc: &mut [Tensor<F>],
) -> NnResult<StudentLossTerms> {
    let csi = Tensor::from_f64_tensor(&sample.csi.to_f64());
    let phase = Tensor::from_vec(
        &[sample.phase.len()],
        sample.phase.iter().map(|&v| F::from_f64(v as f64)).collect(),
    );
    let (dist, caches) = student.forward_cached(&csi, &phase)?;
    let (_, mask_t, cd_t) = sample_targets::<F>(sample);

    // level 1: feature
    let (feature, mut g_feature) = mse(&caches.feature, teacher_feature)?;
    g_feature.scale_in_place(F::from_f64(weights.w5));

    // level 2: latent (mu and sigma separately)
    let (lmu, g_lmu) = half_mse_grad(&dist.mu, &teacher_dist.mu, weights.w6 * weights.alpha);
    let (lsig, g_lsig) = half_mse_grad(
        &dist.sigma,
        &teacher_dist.sigma,
        weights.w6 * (1.0 - weights.alpha),
    );
    let latent = weights.alpha * lmu + (1.0 - weights.alpha) * lsig;

    // level 3: ground truth through the frozen decoders at z = mu_s
    let (mask, mask_cache) = teacher.mask_decoder.forward(&dist.mu)?;
    let (cd, cd_cache) = teacher.center_decoder.forward(&dist.mu)?;
    let (gt_mask, mut g_mask) = bce(&mask, &mask_t)?;
    let (gt_center, gt_depth) = center_depth_terms(&cd, &cd_t)?;
    g_mask.scale_in_place(F::from_f64(weights.w7 * weights.w2p));
    let (gz_mask, _frozen_mask_grads) = teacher.mask_decoder.backward(&mask_cache, &g_mask)?;
    let mut gcd = Tensor::zeros(&[3]);
    {
        let d = gcd.data_mut();
        for i in 0..2 {
            // summed squared error over the 2 center coordinates: d/dp = 2 (p - t)
            d[i] = F::from_f64(weights.w7 * weights.w4p * 2.0) * (cd.data()[i] - cd_t.data()[i]);
        }
        d[2] = F::from_f64(weights.w7 * weights.w3p * 2.0) * (cd.data()[2] - cd_t.data()[2]);
    }
    let (gz_cd, _frozen_cd_grads) = teacher.center_decoder.backward(&cd_cache, &gcd)?;

    let mut g_mu = g_lmu;
    g_mu.add_scaled(&gz_mask, F::ONE);
    g_mu.add_scaled(&gz_cd, F::ONE);
    let mut g_logsig = g_lsig;
    for (g, &s) in g_logsig.data_mut().iter_mut().zip(caches.sigma.data().iter()) {
        *g *= s;
    }

    student.backward_from(&caches, &g_feature, &g_mu, &g_logsig, acc)?;
    Ok(StudentLossTerms {
        feature: feature.to_f64(),
        latent,
        gt_mask: gt_mask.to_f64(),
        gt_depth,
        gt_center,
    })
}

/// Model-facing (CSI tensor, phase feature) pair of one sample.
pub fn sample_inputs<F: Real>(s: &Sample) -> (Tensor<F>, Tensor<F>) {
    (
        Tensor::from_f64_tensor(&s.csi.to_f64()),
        Tensor::from_vec(
            &[s.phase.len()],
            s.phase.iter().map(|&v| F::from_f64(v as f64)).collect(),
        ),
    )
}

/// Mean three-level loss over an index set (held-out diagnostics).
pub fn mean_student_loss<F: Real>(
    ds: &Dataset,
    indices: &[usize],
    teacher: &TeacherModel<F>,
    student: &StudentModel<F>,
    weights: &StudentLossWeights,
) -> NnResult<StudentLossTerms> {
    let mut acc = StudentLossTerms::default();
    for &i in indices {
        let s = &ds.samples[i];
        let (csi, phase) = sample_inputs::<F>(s);
        let (f_s, dist_s) = student.forward(&csi, &phase)?;
        let (img_t, mask_t, cd_t) = sample_targets::<F>(s);
        let (f_t, dist_t) = teacher.encode(&img_t)?;
        let terms = student_loss(
            &f_s,
            &dist_s,
            &f_t,
            &dist_t,
            &(mask_t, cd_t),
            teacher,
            weights,
        )?;
        acc.add(&terms);
    }
    acc.scale(1.0 / indices.len().max(1) as f64);
    Ok(acc)
}

/// Distill a student against a frozen teacher. The teacher's parameter
/// signature is verified unchanged at the end of the run.
pub fn train_student<F: Real>(
    ds: &Dataset,
    indices: &[usize],
    teacher: &TeacherModel<F>,
    weights: &StudentLossWeights,
    cfg: &TrainConfig,
) -> NnResult<TrainOutcome<StudentModel<F>>> {
    weights.validate()?;
    if indices.is_empty() {
        return Err(NnError::InvalidParameter {
            what: String::from("empty training set"),
        });
    }
    let teacher_sig = teacher.param_signature();
    let mut rng = Rng::new(cfg.seed).derive(0x57D0_0000);
    let mut student = StudentModel::<F>::new(StudentConfig::for_teacher(&teacher.cfg), &mut rng);
    let mut adam = Adam::<F>::new(cfg.lr);
    let names = student.param_names();
    let mut history = Vec::new();
    let mut last_good = student.clone();

    // the teacher is frozen, so its per-sample targets never change
    let mut teacher_cache: Vec<Option<(Tensor<F>, LatentDistribution<F>)>> =
        vec![None; ds.samples.len()];

    for epoch in 0..cfg.epochs {
        let picked = crate::data::epoch_subsample(indices, cfg.subsample, epoch, cfg.seed);
        let mut epoch_terms = StudentLossTerms::default();
        let mut diverged: Option<String> = None;

        for chunk in picked.chunks(cfg.batch_size) {
            let mut acc: Vec<Tensor<F>> = student
                .params()
                .iter()
                .map(|p| Tensor::zeros(p.shape()))
                .collect();
            let mut ok = true;
            for &si in chunk {
                if teacher_cache[si].is_none() {
                    let (img_t, _, _) = sample_targets::<F>(&ds.samples[si]);
                    teacher_cache[si] = Some(teacher.encode(&img_t)?);
                }
                let (f_t, dist_t) = teacher_cache[si].as_ref().unwrap();
                match student_backward(
                    &student,
                    teacher,
                    f_t,
                    dist_t,
                    &ds.samples[si],
                    weights,
                    &mut acc,
                ) {
                    Ok(t) => epoch_terms.add(&t),
                    Err(e) => {
                        diverged = Some(alloc::format!("{e}"));
                        ok = false;
                        break;
                    }
                }
            }
            if !ok {
                break;
            }
            let inv = F::from_f64(1.0 / chunk.len() as f64);
            for g in acc.iter_mut() {
                g.scale_in_place(inv);
            }
            let mut params = student.params_mut();
            if let Err(e) = adam.step(&mut params, &acc, &names) {
                diverged = Some(alloc::format!("{e}"));
                break;
            }
        }

        if let Some(msg) = diverged {
            assert_eq!(teacher.param_signature(), teacher_sig, "teacher freeze violated");
            return Ok(TrainOutcome {
                model: last_good,
                history,
                diverged: Some(msg),
            });
        }
        epoch_terms.scale(1.0 / picked.len() as f64);
        history.push((
            epoch,
            epoch_terms.total(weights),
            vec![
                epoch_terms.feature,
                epoch_terms.latent,
                epoch_terms.gt_mask,
                epoch_terms.gt_depth,
                epoch_terms.gt_center,
            ],
        ));
        last_good = student.clone();
    }

    assert_eq!(teacher.param_signature(), teacher_sig, "teacher freeze violated");
    Ok(TrainOutcome {
        model: student,
        history,
        diverged: None,
    })
}

#[derive(Clone, Debug)]
pub struct Inference<F: Real> {
    pub image: Tensor<F>,
    pub mask: Tensor<F>,
    pub center: (f64, f64),
    pub avg_depth: f64,
}

/// End-to-end inference: z = mu_s (no sampling), decoded through the
/// teacher's frozen decoders.
pub fn infer_depth<F: Real>(
    student: &StudentModel<F>,
    teacher: &TeacherModel<F>,
    csi: &Tensor<F>,
    phase: &Tensor<F>,
) -> NnResult<Inference<F>> {
    let (_, dist) = student.forward(csi, phase)?;
    let (image, mask, cd) = teacher.decode(&dist.mu)?;
    Ok(Inference {
        image,
        mask,
        center: (cd.data()[0].to_f64(), cd.data()[1].to_f64()),
        avg_depth: cd.data()[2].to_f64(),
    })
}

/// End-to-end VAE baseline: the student-shaped encoder and a teacher-shaped
/// image decoder trained jointly from CSI with the plain VAE loss
/// (beta * KL + reconstruction MSE). beta = 0 gives the AE baseline.
#[derive(Clone, Debug)]
pub struct BaselineModel<F: Real> {
    pub encoder: StudentModel<F>,
    pub decoder: Graph<F>,
    pub beta: f64,
}

impl<F: Real> BaselineModel<F> {
    pub fn new(teacher_cfg: &TeacherConfig, beta: f64, rng: &mut Rng) -> Self {
        BaselineModel {
            encoder: StudentModel::new(StudentConfig::for_teacher(teacher_cfg), rng),
            decoder: image_decoder_graph(teacher_cfg, rng),
            beta,
        }
    }

    pub fn infer(&self, csi: &Tensor<F>, phase: &Tensor<F>) -> NnResult<Tensor<F>> {
        let (_, dist) = self.encoder.forward(csi, phase)?;
        let (img, _) = self.decoder.forward(&dist.mu)?;
        // decoder output is linear during training; clamp to the depth range
        Ok(img.map(|v| v.clamp_to(F::ZERO, F::ONE)))
    }

    pub fn params(&self) -> Vec<&Tensor<F>> {
        let mut out = self.encoder.params();
        out.extend(self.decoder.params());
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<F>> {
        let mut out = self.encoder.params_mut();
        out.extend(self.decoder.params_mut());
        out
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut out = self.encoder.param_names();
        out.extend(self.decoder.param_names("dec"));
        out
    }
}

/// Train the end-to-end baseline on the same splits as the distilled chain.
/// A divergent run is reported through `diverged`, not an error.
pub fn train_baseline_e2e<F: Real>(
    ds: &Dataset,
    indices: &[usize],
    teacher_cfg: &TeacherConfig,
    beta: f64,
    cfg: &TrainConfig,
) -> NnResult<TrainOutcome<BaselineModel<F>>> {
    if indices.is_empty() {
        return Err(NnError::InvalidParameter {
            what: String::from("empty training set"),
        });
    }
    let mut rng = Rng::new(cfg.seed).derive(0xBA5E_0000);
    let mut model = BaselineModel::<F>::new(teacher_cfg, beta, &mut rng);
    let mut adam = Adam::<F>::new(cfg.lr);
    let names = model.param_names();
    let mut history = Vec::new();
    let mut last_good = model.clone();
    let n_enc = model.encoder.params().len();

    for epoch in 0..cfg.epochs {
        let picked = crate::data::epoch_subsample(indices, cfg.subsample, epoch, cfg.seed);
        let mut kl_sum = 0.0;
        let mut rec_sum = 0.0;
        let mut noise_rng = rng.derive(0xE1_0000 + epoch as u64);
        let mut diverged: Option<String> = None;

        for chunk in picked.chunks(cfg.batch_size) {
            let mut acc: Vec<Tensor<F>> = model
                .encoder
                .params()
                .iter()
                .map(|p| Tensor::zeros(p.shape()))
                .collect();
            let mut dec_acc: Vec<Tensor<F>> = model
                .decoder
                .params()
                .iter()
                .map(|p| Tensor::zeros(p.shape()))
                .collect();
            let mut ok = true;
            for &si in chunk {
                let s = &ds.samples[si];
                let (csi, phase) = sample_inputs::<F>(s);
                let step = (|| -> NnResult<(f64, f64)> {
                    let (dist, caches) = model.encoder.forward_cached(&csi, &phase)?;
                    let noise = normal_tensor(&[dist.dim()], &mut noise_rng);
                    let z = reparameterize(&dist, &noise)?;
                    let (recon, dec_cache) = model.decoder.forward(&z)?;
                    let (img_t, _, _) = sample_targets::<F>(s);
                    let (kl, kl_gmu, kl_gsig) = kl_gaussian(&dist)?;
                    let (rec, g_rec) = mse(&recon, &img_t)?;
                    let (gz, gp_dec) = model.decoder.backward(&dec_cache, &g_rec)?;
                    for (a, g) in dec_acc.iter_mut().zip(gp_dec.iter()) {
                        a.add_scaled(g, F::ONE);
                    }
                    let b = F::from_f64(model.beta);
                    let mut g_mu = gz.clone();
                    g_mu.add_scaled(&kl_gmu, b);
                    let mut g_sigma = gz;
                    for (g, &n) in g_sigma.data_mut().iter_mut().zip(noise.data().iter()) {
                        *g *= n;
                    }
                    g_sigma.add_scaled(&kl_gsig, b);
                    let mut g_logsig = g_sigma;
                    for (g, &sg) in g_logsig.data_mut().iter_mut().zip(caches.sigma.data().iter())
                    {
                        *g *= sg;
                    }
                    let g_feat = Tensor::zeros(&[model.encoder.cfg.feature_dim]);
                    model
                        .encoder
                        .backward_from(&caches, &g_feat, &g_mu, &g_logsig, &mut acc)?;
                    Ok((kl.to_f64(), rec.to_f64()))
                })();
                match step {
                    Ok((kl, rec)) => {
                        kl_sum += kl;
                        rec_sum += rec;
                    }
                    Err(e) => {
                        diverged = Some(alloc::format!("{e}"));
                        ok = false;
                        break;
                    }
                }
            }
            if !ok {
                break;
            }
            let inv = F::from_f64(1.0 / chunk.len() as f64);
            acc.extend(dec_acc);
            for g in acc.iter_mut() {
                g.scale_in_place(inv);
            }
            debug_assert_eq!(acc.len(), n_enc + model.decoder.params().len());
            let mut params = model.params_mut();
            if let Err(e) = adam.step(&mut params, &acc, &names) {
                diverged = Some(alloc::format!("{e}"));
                break;
            }
        }

        if let Some(msg) = diverged {
            return Ok(TrainOutcome {
                model: last_good,
                history,
                diverged: Some(msg),
            });
        }
        let n = picked.len() as f64;
        history.push((
            epoch,
            beta * kl_sum / n + rec_sum / n,
            vec![kl_sum / n, rec_sum / n],
        ));
        last_good = model.clone();
    }

    Ok(TrainOutcome {
        model,
        history,
        diverged: None,
    })
}

/// Finite-difference check of the student's feature + latent loss levels on
/// a small synthetic instance: returns the worst relative error between
/// analytic and central-difference gradients over sampled coordinates of
/// every parameter tensor. Runs in f64.
pub fn composite_fd_max_rel_err() -> f64 {
    let mut rng = Rng::new(5);
    let cfg = StudentConfig {
        n_packet: 40,
        n_sub: 6,
        n_rx: 2,
        phase_len: 6,
        feature_dim: 24,
        latent_dim: 4,
    };
    let mut student = StudentModel::<f64>::new(cfg, &mut rng);
    // nudge the heads off their zero init so sigma gradients are exercised
    for p in student.params_mut() {
        for v in p.data_mut() {
            *v += rng.uniform_in(-0.05, 0.05);
        }
    }
    let csi = Tensor::from_vec(
        &[2, 40, 6, 2],
        (0..2 * 40 * 6 * 2).map(|_| rng.uniform_in(-1.0, 1.0)).collect(),
    );
    let phase = Tensor::from_vec(&[6], (0..6).map(|_| rng.uniform_in(-1.0, 1.0)).collect());
    let f_t = Tensor::from_vec(&[24], (0..24).map(|_| rng.uniform_in(-1.0, 1.0)).collect());
    let mu_t = Tensor::from_vec(&[4], (0..4).map(|_| rng.uniform_in(-1.0, 1.0)).collect());
    let sig_t = Tensor::from_vec(&[4], (0..4).map(|_| rng.uniform_in(0.5, 1.5)).collect());
    let w5 = 1.0;
    let w6 = 1.0;
    let alpha = 0.5;

    let loss_of = |m: &StudentModel<f64>| {
        let (f_s, dist) = m.forward(&csi, &phase).unwrap();
        let (lf, _) = mse(&f_s, &f_t).unwrap();
        let (lm, _) = mse(&dist.mu, &mu_t).unwrap();
        let (ls, _) = mse(&dist.sigma, &sig_t).unwrap();
        w5 * lf + w6 * (alpha * lm + (1.0 - alpha) * ls)
    };

    let (dist, caches) = student.forward_cached(&csi, &phase).unwrap();
    let (_, mut g_feature) = mse(&caches.feature, &f_t).unwrap();
    g_feature.scale_in_place(w5);
    let (_, g_mu) = half_mse_grad(&dist.mu, &mu_t, w6 * alpha);
    let (_, g_sig) = half_mse_grad(&dist.sigma, &sig_t, w6 * (1.0 - alpha));
    let mut g_logsig = g_sig;
    for (g, &s) in g_logsig.data_mut().iter_mut().zip(caches.sigma.data().iter()) {
        *g *= s;
    }
    let mut acc: Vec<Tensor<f64>> = student
        .params()
        .iter()
        .map(|p| Tensor::zeros(p.shape()))
        .collect();
    student
        .backward_from(&caches, &g_feature, &g_mu, &g_logsig, &mut acc)
        .unwrap();

    let eps = 1e-5;
    let mut probe = Rng::new(77);
    let mut worst: f64 = 0.0;
    let n_params = student.params().len();
    for pi in 0..n_params {
        let len = student.params()[pi].len();
        for _ in 0..3 {
            let c = probe.below(len);
            let orig = student.params()[pi].data()[c];
            student.params_mut()[pi].data_mut()[c] = orig + eps;
            let lp = loss_of(&student);
            student.params_mut()[pi].data_mut()[c] = orig - eps;
            let lm = loss_of(&student);
            student.params_mut()[pi].data_mut()[c] = orig;
            let numeric = (lp - lm) / (2.0 * eps);
            worst = worst.max(crate::nn::gradcheck::rel_err(acc[pi].data()[c], numeric));
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{build_dataset, DatasetConfig};

    fn tiny_dataset() -> Dataset {
        let mut cfg = DatasetConfig::default();
        cfg.n_subjects = 1;
        cfg.windows_per_subject = 3;
        cfg.seed = 31;
        build_dataset(&cfg).unwrap()
    }

    fn small_cfg() -> StudentConfig {
        StudentConfig {
            n_packet: 40,
            n_sub: 6,
            n_rx: 2,
            phase_len: 6,
            feature_dim: 24,
            latent_dim: 4,
        }
    }

    #[test]
    fn untrained_forward_has_contracted_shapes() {
        let mut rng = Rng::new(1);
        let cfg = StudentConfig::for_teacher(&TeacherConfig::default());
        let student = StudentModel::<f32>::new(cfg, &mut rng);
        let ds = tiny_dataset();
        let (csi, phase) = sample_inputs::<f32>(&ds.samples[0]);
        let (f_s, dist) = student.forward(&csi, &phase).unwrap();
        assert_eq!(f_s.shape(), &[192]);
        assert_eq!(dist.mu.shape(), &[32]);
        assert!(f_s.all_finite());
        // zero-initialized heads: prior latent
        assert!(dist.mu.data().iter().all(|&v| v == 0.0));
        assert!(dist.sigma.data().iter().all(|&v| (v - 1.0).abs() < 1e-6));
    }

    #[test]
    fn wrong_input_shapes_rejected() {
        let mut rng = Rng::new(2);
        let student = StudentModel::<f32>::new(small_cfg(), &mut rng);
        let bad_csi = Tensor::zeros(&[2, 40, 6, 3]);
        let phase = Tensor::zeros(&[6]);
        assert!(student.forward(&bad_csi, &phase).is_err());
        let csi = Tensor::zeros(&[2, 40, 6, 2]);
        assert!(student.forward(&csi, &Tensor::zeros(&[7])).is_err());
    }

    #[test]
    fn zero_inputs_give_deterministic_bias_path() {
        let mut rng = Rng::new(3);
        let student = StudentModel::<f32>::new(small_cfg(), &mut rng);
        let csi = Tensor::zeros(&[2, 40, 6, 2]);
        let phase = Tensor::zeros(&[6]);
        let (a, _) = student.forward(&csi, &phase).unwrap();
        let (b, _) = student.forward(&csi, &phase).unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn alpha_one_ignores_sigma_mismatch() {
        let mu = Tensor::from_vec(&[2], vec![0.5f64, -0.5]);
        let d1 = LatentDistribution::new(mu.clone(), Tensor::from_vec(&[2], vec![1.0, 1.0]))
            .unwrap();
        let d2 = LatentDistribution::new(mu, Tensor::from_vec(&[2], vec![3.0, 0.2])).unwrap();
        let f = Tensor::zeros(&[4]);
        let mut rng = Rng::new(4);
        let cfg = TeacherConfig {
            image_h: 32,
            image_w: 32,
            latent_dim: 2,
            mask_side: 16,
        };
        let teacher = TeacherModel::<f64>::new(cfg, &mut rng).unwrap();
        let targets = (
            Tensor::zeros(&[1, 16, 16]),
            Tensor::from_vec(&[3], vec![0.5, 0.5, 0.5]),
        );
        let mut w = StudentLossWeights::default();
        w.alpha = 1.0;
        let terms = student_loss(&f, &d1, &f, &d2, &targets, &teacher, &w).unwrap();
        assert_eq!(terms.latent, 0.0);
    }

    #[test]
    fn loss_total_decomposes() {
        let w = StudentLossWeights::default();
        let t = StudentLossTerms {
            feature: 0.3,
            latent: 0.2,
            gt_mask: 0.1,
            gt_depth: 0.05,
            gt_center: 0.02,
        };
        let manual = w.w5 * 0.3
            + w.w6 * 0.2
            + w.w7 * (w.w2p * 0.1 + w.w3p * 0.05 + w.w4p * 0.02);
        assert!((t.total(&w) - manual).abs() < 1e-6);
    }

    #[test]
    fn invalid_weights_rejected() {
        let mut w = StudentLossWeights::default();
        w.alpha = 1.5;
        assert!(w.validate().is_err());
        let mut w = StudentLossWeights::default();
        w.w6 = -0.1;
        assert!(w.validate().is_err());
    }

    #[test]
    fn student_gradients_match_finite_differences() {
        let worst = composite_fd_max_rel_err();
        assert!(worst < 1e-4, "max rel err {worst}");
    }

    #[test]
    fn short_distillation_freezes_teacher_and_is_reproducible() {
        let ds = tiny_dataset();
        let idx: Vec<usize> = (0..ds.samples.len()).collect();
        let mut rng = Rng::new(6);
        let teacher = TeacherModel::<f32>::new(TeacherConfig::default(), &mut rng).unwrap();
        let sig = teacher.param_signature();
        let cfg = TrainConfig {
            epochs: 2,
            batch_size: 2,
            lr: 1e-3,
            seed: 13,
            subsample: 1.0,
        };
        let w = StudentLossWeights::default();
        let a = train_student::<f32>(&ds, &idx, &teacher, &w, &cfg).unwrap();
        assert!(a.diverged.is_none());
        assert_eq!(teacher.param_signature(), sig);
        let b = train_student::<f32>(&ds, &idx, &teacher, &w, &cfg).unwrap();
        assert_eq!(a.model.param_signature(), b.model.param_signature());
        for (x, y) in a.history.iter().zip(b.history.iter()) {
            assert_eq!(x.1, y.1);
        }
    }

    #[test]
    fn inference_is_deterministic() {
        let ds = tiny_dataset();
        let mut rng = Rng::new(7);
        let teacher = TeacherModel::<f32>::new(TeacherConfig::default(), &mut rng).unwrap();
        let student =
            StudentModel::<f32>::new(StudentConfig::for_teacher(&teacher.cfg), &mut rng);
        let (csi, phase) = sample_inputs::<f32>(&ds.samples[0]);
        let a = infer_depth(&student, &teacher, &csi, &phase).unwrap();
        let b = infer_depth(&student, &teacher, &csi, &phase).unwrap();
        assert_eq!(a.image.data(), b.image.data());
        assert_eq!(a.center, b.center);
        assert_eq!(a.image.shape(), &[1, 64, 96]);
        assert!(a.image.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn baseline_trains_a_step_and_infers() {
        let ds = tiny_dataset();
        let idx: Vec<usize> = (0..ds.samples.len()).collect();
        let cfg = TrainConfig {
            epochs: 2,
            batch_size: 2,
            lr: 1e-3,
            seed: 14,
            subsample: 1.0,
        };
        let out =
            train_baseline_e2e::<f32>(&ds, &idx, &TeacherConfig::default(), 0.5, &cfg).unwrap();
        assert!(out.diverged.is_none(), "{:?}", out.diverged);
        assert_eq!(out.history.len(), 2);
        let (csi, phase) = sample_inputs::<f32>(&ds.samples[0]);
        let img = out.model.infer(&csi, &phase).unwrap();
        assert_eq!(img.shape(), &[1, 64, 96]);
        assert!(img.all_finite());
    }

    #[test]
    fn time_major_round_trips() {
        let x = Tensor::from_vec(&[2, 3, 2], (0..12).map(|v| v as f64).collect());
        let tm = time_major(&x);
        assert_eq!(tm.shape(), &[3, 4]);
        // (c=1, t=2, w=0) -> element 1*3*2 + 2*2 + 0 = 10 lands at row 2, col 1*2+0
        assert_eq!(tm.data()[2 * 4 + 2], 10.0);
        let back = channel_major(&tm, (2, 3, 2));
        assert_eq!(back.data(), x.data());
    }
}
