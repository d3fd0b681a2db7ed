//! The depth-side VAE teacher: a convolutional encoder into a diagonal
//! Gaussian latent, and three frozen-at-distillation-time decoders — image,
//! shape mask, and center/average-depth — trained with the extended VAE
//! loss (KL + reconstruction + the three auxiliary terms).

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::data::{Dataset, Sample};
use crate::nn::{
    bce, kl_gaussian, mse, Adam, Conv2d, Dense, Graph, Layer, LatentDistribution, NnError,
    NnResult, TConv2d,
};
use crate::real::Real;
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Encoder channel plan; five stride-2 stages halve each spatial extent.
const ENC_CHANNELS: [usize; 5] = [8, 16, 16, 24, 32];
const MASK_BASE_CH: usize = 16;

#[derive(Clone, Debug)]
pub struct TeacherConfig {
    pub image_h: usize,
    pub image_w: usize,
    pub latent_dim: usize,
    pub mask_side: usize,
}

impl Default for TeacherConfig {
    fn default() -> Self {
        TeacherConfig {
            image_h: 64,
            image_w: 96,
            latent_dim: 32,
            mask_side: 48,
        }
    }
}

impl TeacherConfig {
    pub fn validate(&self) -> NnResult<()> {
        if self.image_h % 32 != 0 || self.image_w % 32 != 0 {
            return Err(NnError::InvalidParameter {
                what: String::from("image dims must be multiples of 32 (five stride-2 stages)"),
            });
        }
        if self.mask_side % 16 != 0 {
            return Err(NnError::InvalidParameter {
                what: String::from("mask side must be a multiple of 16"),
            });
        }
        if self.latent_dim == 0 {
            return Err(NnError::InvalidParameter {
                what: String::from("latent dim must be positive"),
            });
        }
        Ok(())
    }

    /// Flattened encoder output length (the teacher feature f_t).
    pub fn feature_dim(&self) -> usize {
        ENC_CHANNELS[4] * (self.image_h / 32) * (self.image_w / 32)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct TeacherLossWeights {
    pub beta: f64,
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
    pub w4: f64,
}

impl Default for TeacherLossWeights {
    fn default() -> Self {
        TeacherLossWeights {
            beta: 0.5,
            w1: 1.0,
            w2: 1.0,
            w3: 1.0,
            w4: 1.0,
        }
    }
}

impl TeacherLossWeights {
    pub fn validate(&self) -> NnResult<()> {
        for (v, n) in [
            (self.beta, "beta"),
            (self.w1, "w1"),
            (self.w2, "w2"),
            (self.w3, "w3"),
            (self.w4, "w4"),
        ] {
            if v < 0.0 || !v.is_finite() {
                return Err(NnError::InvalidParameter {
                    what: alloc::format!("loss weight {n} must be finite and >= 0"),
                });
            }
        }
        Ok(())
    }
}

/// Unweighted per-term loss values; `total` applies the weights.
#[derive(Clone, Copy, Debug, Default)]
pub struct TeacherLossTerms {
    pub kl: f64,
    pub rimg: f64,
    pub cimg: f64,
    pub depth: f64,
    pub center: f64,
}

impl TeacherLossTerms {
    pub fn total(&self, w: &TeacherLossWeights) -> f64 {
        w.beta * self.kl + w.w1 * self.rimg + w.w2 * self.cimg + w.w3 * self.depth
            + w.w4 * self.center
    }

    fn add(&mut self, o: &TeacherLossTerms) {
        self.kl += o.kl;
        self.rimg += o.rimg;
        self.cimg += o.cimg;
        self.depth += o.depth;
        self.center += o.center;
    }

    fn scale(&mut self, s: f64) {
        self.kl *= s;
        self.rimg *= s;
        self.cimg *= s;
        self.depth *= s;
        self.center *= s;
    }
}

#[derive(Clone, Debug)]
pub struct TeacherModel<F: Real> {
    pub cfg: TeacherConfig,
    /// P_TF: image -> feature f_t
    pub encoder: Graph<F>,
    /// R_TZ: f_t -> mu and log sigma
    pub mu_head: Graph<F>,
    pub logsig_head: Graph<F>,
    pub image_decoder: Graph<F>,
    pub mask_decoder: Graph<F>,
    /// one 3-vector: (center x, center y, average depth), sigmoid range
    pub center_decoder: Graph<F>,
}

#[derive(Clone, Debug)]
pub struct TeacherOutput<F: Real> {
    pub recon: Tensor<F>,
    pub mask: Tensor<F>,
    /// (center x, center y, average depth)
    pub center_depth: Tensor<F>,
    pub dist: LatentDistribution<F>,
    pub feature: Tensor<F>,
    pub z: Tensor<F>,
}

impl<F: Real> TeacherModel<F> {
    pub fn new(cfg: TeacherConfig, rng: &mut Rng) -> NnResult<Self> {
        cfg.validate()?;
        let l = cfg.latent_dim;
        let feat = cfg.feature_dim();
        let mb = cfg.mask_side / 16;

        let mut enc = vec![Layer::Conv2d(Conv2d::new(1, ENC_CHANNELS[0], 3, 2, 1, rng))];
        for i in 1..5 {
            enc.push(Layer::Relu);
            enc.push(Layer::Conv2d(Conv2d::new(
                ENC_CHANNELS[i - 1],
                ENC_CHANNELS[i],
                3,
                2,
                1,
                rng,
            )));
        }
        enc.push(Layer::Relu);
        enc.push(Layer::Flatten);

        // zero-initialized heads start the latent at the prior N(0, I)
        let mu_head = Graph::new(vec![Layer::Dense(Dense::new_zero(feat, l))]);
        let logsig_head = Graph::new(vec![Layer::Dense(Dense::new_zero(feat, l))]);

        let image_decoder = image_decoder_graph(&cfg, rng);

        let mask_decoder = Graph::new(vec![
            Layer::Dense(Dense::new(l, MASK_BASE_CH * mb * mb, rng)),
            Layer::Relu,
            Layer::Reshape(vec![MASK_BASE_CH, mb, mb]),
            Layer::TConv2d(TConv2d::new(MASK_BASE_CH, 12, 3, 1, 1, rng)),
            Layer::Relu,
            Layer::TConv2d(TConv2d::new(12, 8, 3, 2, 1, rng)),
            Layer::Relu,
            Layer::TConv2d(TConv2d::new(8, 8, 3, 2, 1, rng)),
            Layer::Relu,
            Layer::TConv2d(TConv2d::new(8, 4, 3, 2, 1, rng)),
            Layer::Relu,
            Layer::TConv2d(TConv2d::new(4, 1, 3, 2, 1, rng)),
            Layer::Sigmoid,
        ]);

        let center_decoder = Graph::new(vec![
            Layer::Dense(Dense::new(l, 32, rng)),
            Layer::Relu,
            Layer::Dense(Dense::new(32, 3, rng)),
            Layer::Sigmoid,
        ]);

        Ok(TeacherModel {
            cfg,
            encoder: Graph::new(enc),
            mu_head,
            logsig_head,
            image_decoder,
            mask_decoder,
            center_decoder,
        })
    }

    fn check_image(&self, image: &Tensor<F>) -> NnResult<()> {
        let want = [1, self.cfg.image_h, self.cfg.image_w];
        if image.shape() != want {
            return Err(NnError::ShapeMismatch {
                layer: 0,
                expected: alloc::format!("{want:?}"),
                got: image.shape_string(),
            });
        }
        Ok(())
    }

    /// Image -> (feature, latent distribution); sigma = exp(log-sigma head).
    pub fn encode(&self, image: &Tensor<F>) -> NnResult<(Tensor<F>, LatentDistribution<F>)> {
        self.check_image(image)?;
        let (feat, _) = self.encoder.forward(image)?;
        let (mu, _) = self.mu_head.forward(&feat)?;
        let (logsig, _) = self.logsig_head.forward(&feat)?;
        let (clamped, _) = crate::nn::clamp_log_sigma(&logsig);
        let dist = LatentDistribution::new(mu, clamped.map(|v| v.exp()))?;
        Ok((feat, dist))
    }

    /// Decode a latent into (image, mask, center-depth). The image decoder
    /// output is linear during training; here it is clamped to the valid
    /// depth range [0, 1] for consumers.
    pub fn decode(&self, z: &Tensor<F>) -> NnResult<(Tensor<F>, Tensor<F>, Tensor<F>)> {
        let (img, _) = self.image_decoder.forward(z)?;
        let (mask, _) = self.mask_decoder.forward(z)?;
        let (cd, _) = self.center_decoder.forward(z)?;
        Ok((img.map(|v| v.clamp_to(F::ZERO, F::ONE)), mask, cd))
    }

    /// Full forward pass with reparameterized sampling; `noise = None`
    /// decodes the mean deterministically.
    pub fn forward(&self, image: &Tensor<F>, noise: Option<&Tensor<F>>) -> NnResult<TeacherOutput<F>> {
        let (feature, dist) = self.encode(image)?;
        let z = match noise {
            Some(n) => crate::nn::reparameterize(&dist, n)?,
            None => dist.mu.clone(),
        };
        let (recon, mask, center_depth) = self.decode(&z)?;
        Ok(TeacherOutput {
            recon,
            mask,
            center_depth,
            dist,
            feature,
            z,
        })
    }

    fn graphs(&self) -> [(&Graph<F>, &'static str); 6] {
        [
            (&self.encoder, "enc"),
            (&self.mu_head, "mu"),
            (&self.logsig_head, "logsig"),
            (&self.image_decoder, "dec_img"),
            (&self.mask_decoder, "dec_mask"),
            (&self.center_decoder, "dec_cd"),
        ]
    }

    pub fn params(&self) -> Vec<&Tensor<F>> {
        self.graphs().iter().flat_map(|(g, _)| g.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<F>> {
        let mut out = Vec::new();
        out.extend(self.encoder.params_mut());
        out.extend(self.mu_head.params_mut());
        out.extend(self.logsig_head.params_mut());
        out.extend(self.image_decoder.params_mut());
        out.extend(self.mask_decoder.params_mut());
        out.extend(self.center_decoder.params_mut());
        out
    }

    pub fn param_names(&self) -> Vec<String> {
        self.graphs()
            .iter()
            .flat_map(|(g, p)| g.param_names(p))
            .collect()
    }

    /// Order-sensitive FNV-1a over every parameter's bit pattern; the
    /// student-training freeze contract compares this before and after.
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

/// The latent-to-image decoder stack; the end-to-end baseline reuses the
/// same construction on the student side.
pub fn image_decoder_graph<F: Real>(cfg: &TeacherConfig, rng: &mut Rng) -> Graph<F> {
    let (bh, bw) = (cfg.image_h / 32, cfg.image_w / 32);
    let feat = cfg.feature_dim();
    Graph::new(vec![
        Layer::Dense(Dense::new(cfg.latent_dim, feat, rng)),
        Layer::Relu,
        Layer::Reshape(vec![ENC_CHANNELS[4], bh, bw]),
        Layer::TConv2d(TConv2d::new(ENC_CHANNELS[4], ENC_CHANNELS[3], 3, 2, 1, rng)),
        Layer::Relu,
        Layer::TConv2d(TConv2d::new(ENC_CHANNELS[3], ENC_CHANNELS[2], 3, 2, 1, rng)),
        Layer::Relu,
        Layer::TConv2d(TConv2d::new(ENC_CHANNELS[2], ENC_CHANNELS[1], 3, 2, 1, rng)),
        Layer::Relu,
        Layer::TConv2d(TConv2d::new(ENC_CHANNELS[1], ENC_CHANNELS[0], 3, 2, 1, rng)),
        Layer::Relu,
        // sigmoid output keeps decoded intensities calibrated: a ReLU stack
        // with near-zero biases is close to positively homogeneous in z, so
        // a linear head would dim the whole image whenever an imperfect
        // latent (e.g. a distilled student's mu) undershoots in norm
        Layer::TConv2d(TConv2d::new(ENC_CHANNELS[0], 1, 3, 2, 1, rng)),
        Layer::Sigmoid,
    ])
}

/// Training targets extracted from a sample: (image, mask as (1,M,M),
/// center-depth 3-vector).
pub fn sample_targets<F: Real>(s: &Sample) -> (Tensor<F>, Tensor<F>, Tensor<F>) {
    let image = Tensor::from_f64_tensor(&s.image.to_f64());
    let m = s.mask.shape()[0];
    let mask = Tensor::from_f64_tensor(&s.mask.to_f64()).reshaped(&[1, m, m]);
    let cd = Tensor::from_vec(
        &[3],
        vec![
            F::from_f64(s.center.0 as f64),
            F::from_f64(s.center.1 as f64),
            F::from_f64(s.avg_depth as f64),
        ],
    );
    (image, mask, cd)
}

/// Forward-only loss evaluation against targets.
pub fn teacher_loss<F: Real>(
    out: &TeacherOutput<F>,
    targets: &(Tensor<F>, Tensor<F>, Tensor<F>),
    weights: &TeacherLossWeights,
) -> NnResult<TeacherLossTerms> {
    weights.validate()?;
    let (img_t, mask_t, cd_t) = targets;
    let (kl, _, _) = kl_gaussian(&out.dist)?;
    let (rimg, _) = mse(&out.recon, img_t)?;
    let (cimg, _) = bce(&out.mask, mask_t)?;
    let (center, depth) = center_depth_split(&out.center_depth, cd_t)?;
    Ok(TeacherLossTerms {
        kl: kl.to_f64(),
        rimg: rimg.to_f64(),
        cimg: cimg.to_f64(),
        depth,
        center,
    })
}

fn center_depth_split<F: Real>(pred: &Tensor<F>, target: &Tensor<F>) -> NnResult<(f64, f64)> {
    let pc = Tensor::from_vec(&[2], pred.data()[..2].to_vec());
    let tc = Tensor::from_vec(&[2], target.data()[..2].to_vec());
    let pd = Tensor::from_vec(&[1], pred.data()[2..].to_vec());
    let td = Tensor::from_vec(&[1], target.data()[2..].to_vec());
    let (c, _) = mse(&pc, &tc)?;
    let (d, _) = mse(&pd, &td)?;
    Ok((c.to_f64(), d.to_f64()))
}

#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    /// fraction of the training indices drawn fresh each epoch
    pub subsample: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 32,
            lr: 1e-3,
            seed: 1,
            subsample: 0.2,
        }
    }
}

/// Outcome of a training run; `diverged` carries the message when the run
/// was aborted on a non-finite loss, with the model rolled back to the last
/// epoch that completed.
#[derive(Clone, Debug)]
pub struct TrainOutcome<M> {
    pub model: M,
    pub history: Vec<(usize, f64, Vec<f64>)>,
    pub diverged: Option<String>,
}

/// One backward pass through the whole teacher for one sample; returns the
/// per-term losses and accumulates parameter gradients into `acc`.
fn teacher_backward<F: Real>(
    model: &TeacherModel<F>,
    sample: &Sample,
    weights: &TeacherLossWeights,
    noise: &Tensor<F>,
    acc: &mut [Tensor<F>],
) -> NnResult<TeacherLossTerms> {
    let targets = sample_targets::<F>(sample);
    let (img_t, mask_t, cd_t) = &targets;

    let (feat, enc_cache) = model.encoder.forward(img_t)?;
    let (mu, mu_cache) = model.mu_head.forward(&feat)?;
    let (logsig, ls_cache) = model.logsig_head.forward(&feat)?;
    let (clamped, clamp_deriv) = crate::nn::clamp_log_sigma(&logsig);
    let sigma = clamped.map(|v| v.exp());
    let dist = LatentDistribution::new(mu, sigma.clone())?;
    let z = crate::nn::reparameterize(&dist, noise)?;
    let (recon, img_cache) = model.image_decoder.forward(&z)?;
    let (mask, mask_cache) = model.mask_decoder.forward(&z)?;
    let (cd, cd_cache) = model.center_decoder.forward(&z)?;

    let (kl, kl_gmu, kl_gsig) = kl_gaussian(&dist)?;
    let (rimg, g_rimg) = mse(&recon, img_t)?;
    let (cimg, g_cimg) = bce(&mask, mask_t)?;
    let (center, depth) = center_depth_split(&cd, cd_t)?;

    // decoder backward passes, each fed its weighted loss gradient
    let mut g = g_rimg;
    g.scale_in_place(F::from_f64(weights.w1));
    let (gz_img, gp_img) = model.image_decoder.backward(&img_cache, &g)?;

    let mut g = g_cimg;
    g.scale_in_place(F::from_f64(weights.w2));
    let (gz_mask, gp_mask) = model.mask_decoder.backward(&mask_cache, &g)?;

    // center (first two) and depth (last) share the 3-vector head
    let mut gcd = Tensor::zeros(&[3]);
    {
        let two = F::from_f64(2.0);
        let d = gcd.data_mut();
        for i in 0..2 {
            d[i] = F::from_f64(weights.w4) * two * (cd.data()[i] - cd_t.data()[i]);
        }
        d[2] = F::from_f64(weights.w3) * two * (cd.data()[2] - cd_t.data()[2]);
    }
    let (gz_cd, gp_cd) = model.center_decoder.backward(&cd_cache, &gcd)?;

    // z = mu + sigma .* noise
    let mut gz = gz_img;
    gz.add_scaled(&gz_mask, F::ONE);
    gz.add_scaled(&gz_cd, F::ONE);
    let beta = F::from_f64(weights.beta);
    let mut gmu = gz.clone();
    gmu.add_scaled(&kl_gmu, beta);
    let mut gsigma = gz.clone();
    for (g, &n) in gsigma.data_mut().iter_mut().zip(noise.data().iter()) {
        *g *= n;
    }
    gsigma.add_scaled(&kl_gsig, beta);
    // through the exp and the smooth clamp of the log-sigma head
    let mut glogsig = gsigma;
    for ((g, &s), &d) in glogsig
        .data_mut()
        .iter_mut()
        .zip(sigma.data().iter())
        .zip(clamp_deriv.data().iter())
    {
        *g *= s * d;
    }

    let (gf_mu, gp_mu) = model.mu_head.backward(&mu_cache, &gmu)?;
    let (gf_ls, gp_ls) = model.logsig_head.backward(&ls_cache, &glogsig)?;
    let mut gf = gf_mu;
    gf.add_scaled(&gf_ls, F::ONE);
    let (_, gp_enc) = model.encoder.backward(&enc_cache, &gf)?;

    // accumulate in params() order: enc, mu, logsig, dec_img, dec_mask, dec_cd
    let mut i = 0;
    for gp in [gp_enc, gp_mu, gp_ls, gp_img, gp_mask, gp_cd] {
        for g in gp {
            acc[i].add_scaled(&g, F::ONE);
            i += 1;
        }
    }
    debug_assert_eq!(i, acc.len());

    Ok(TeacherLossTerms {
        kl: kl.to_f64(),
        rimg: rimg.to_f64(),
        cimg: cimg.to_f64(),
        depth,
        center,
    })
}

/// Train a teacher on the given sample indices. Per-epoch a seeded fresh
/// subsample of the indices is drawn; history rows are
/// (epoch, total, [kl, rimg, cimg, depth, center]).
pub fn train_teacher<F: Real>(
    ds: &Dataset,
    indices: &[usize],
    weights: &TeacherLossWeights,
    cfg: &TrainConfig,
) -> NnResult<TrainOutcome<TeacherModel<F>>> {
    weights.validate()?;
    if indices.is_empty() {
        return Err(NnError::InvalidParameter {
            what: String::from("empty training set"),
        });
    }
    let mut rng = Rng::new(cfg.seed).derive(0x7EAC_0000);
    let mut model = TeacherModel::<F>::new(TeacherConfig::default(), &mut rng)?;
    let mut adam = Adam::<F>::new(cfg.lr);
    let names = model.param_names();
    let mut history = Vec::new();
    let mut last_good = model.clone();

    for epoch in 0..cfg.epochs {
        let picked = crate::data::epoch_subsample(indices, cfg.subsample, epoch, cfg.seed);
        let mut epoch_terms = TeacherLossTerms::default();
        let mut noise_rng = rng.derive(0xE0_0000 + epoch as u64);
        let mut diverged: Option<String> = None;

        for chunk in picked.chunks(cfg.batch_size) {
            let mut acc: Vec<Tensor<F>> =
                model.params().iter().map(|p| Tensor::zeros(p.shape())).collect();
            let mut ok = true;
            for &si in chunk {
                // beta = 0 degenerates to a plain autoencoder: with the
                // prior term gone sigma is unregularized, so sampling
                // through it only injects unbounded noise. Train at z = mu.
                let noise = if weights.beta == 0.0 {
                    Tensor::zeros(&[model.cfg.latent_dim])
                } else {
                    normal_tensor(&[model.cfg.latent_dim], &mut noise_rng)
                };
                match teacher_backward(&model, &ds.samples[si], weights, &noise, &mut acc) {
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
        epoch_terms.scale(1.0 / picked.len() as f64);
        history.push((
            epoch,
            epoch_terms.total(weights),
            vec![
                epoch_terms.kl,
                epoch_terms.rimg,
                epoch_terms.cimg,
                epoch_terms.depth,
                epoch_terms.center,
            ],
        ));
        last_good = model.clone();
    }

    Ok(TrainOutcome {
        model,
        history,
        diverged: None,
    })
}

pub fn normal_tensor<F: Real>(shape: &[usize], rng: &mut Rng) -> Tensor<F> {
    Tensor::from_vec(
        shape,
        (0..shape.iter().product())
            .map(|_| F::from_f64(rng.normal()))
            .collect(),
    )
}

/// Finite-difference check of the full composite teacher loss on a small
/// synthetic instance: returns the worst relative error between analytic
/// and central-difference gradients over sampled coordinates of every
/// parameter tensor. Runs in f64.
pub fn composite_fd_max_rel_err() -> f64 {
    let mut rng = Rng::new(8);
    let cfg = TeacherConfig {
        image_h: 32,
        image_w: 32,
        latent_dim: 4,
        mask_side: 16,
    };
    let mut model = TeacherModel::<f64>::new(cfg, &mut rng).unwrap();
    // nudge every parameter off its init (the zero-initialized heads would
    // otherwise block gradient flow and make the check trivial)
    for p in model.params_mut() {
        for v in p.data_mut() {
            *v += rng.uniform_in(-0.05, 0.05);
        }
    }
    let s = Sample {
        id: alloc::string::String::from("fd"),
        subject: 0,
        window_start: 0.0,
        csi: Tensor::zeros(&[2, 4, 4, 2]),
        phase: alloc::vec![0.0; 4],
        image: Tensor::from_vec(
            &[1, 32, 32],
            (0..32 * 32).map(|i| ((i % 7) as f32) / 7.0).collect(),
        ),
        mask: Tensor::from_vec(
            &[16, 16],
            (0..256).map(|i| if i % 3 == 0 { 1.0 } else { 0.0 }).collect(),
        ),
        center: (0.4, 0.6),
        avg_depth: 0.5,
    };
    let w = TeacherLossWeights::default();
    let noise = normal_tensor::<f64>(&[4], &mut rng);

    let loss_of = |m: &TeacherModel<f64>| {
        let targets = sample_targets::<f64>(&s);
        let (feat, _) = m.encoder.forward(&targets.0).unwrap();
        let (mu, _) = m.mu_head.forward(&feat).unwrap();
        let (logsig, _) = m.logsig_head.forward(&feat).unwrap();
        let (clamped, _) = crate::nn::clamp_log_sigma(&logsig);
        let dist = LatentDistribution::new(mu, clamped.map(|v| v.exp())).unwrap();
        let z = crate::nn::reparameterize(&dist, &noise).unwrap();
        let (recon, _) = m.image_decoder.forward(&z).unwrap();
        let (mask, _) = m.mask_decoder.forward(&z).unwrap();
        let (cd, _) = m.center_decoder.forward(&z).unwrap();
        let (kl, _, _) = kl_gaussian(&dist).unwrap();
        let (rimg, _) = mse(&recon, &targets.0).unwrap();
        let (cimg, _) = bce(&mask, &targets.1).unwrap();
        let (center, depth) = center_depth_split(&cd, &targets.2).unwrap();
        w.beta * kl + w.w1 * rimg + w.w2 * cimg + w.w3 * depth + w.w4 * center
    };

    let mut acc: Vec<Tensor<f64>> =
        model.params().iter().map(|p| Tensor::zeros(p.shape())).collect();
    teacher_backward(&model, &s, &w, &noise, &mut acc).unwrap();

    // small eps keeps perturbations from crossing relu kinks
    let eps = 1e-6;
    let mut probe = Rng::new(99);
    let mut worst: f64 = 0.0;
    let n_params = model.params().len();
    for pi in 0..n_params {
        let len = model.params()[pi].len();
        for _ in 0..3 {
            let c = probe.below(len);
            let orig = model.params()[pi].data()[c];
            model.params_mut()[pi].data_mut()[c] = orig + eps;
            let lp = loss_of(&model);
            model.params_mut()[pi].data_mut()[c] = orig - eps;
            let lm = loss_of(&model);
            model.params_mut()[pi].data_mut()[c] = orig;
            let numeric = (lp - lm) / (2.0 * eps);
            worst = worst.max(crate::nn::gradcheck::rel_err(acc[pi].data()[c], numeric));
        }
    }
    worst
}
