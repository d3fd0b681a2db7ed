//! Losses, the diagonal-Gaussian latent distribution, and the
//! reparameterization trick.

use alloc::format;
use alloc::string::String;

use crate::real::Real;
use crate::tensor::Tensor;

use super::{NnError, NnResult};

const BCE_EPS: f64 = 1e-7;

/// Half-width of the smooth log-sigma clamp below.
pub const LOG_SIGMA_CLAMP: f64 = 4.0;

/// Smoothly clamp a raw log-sigma head output to (-C, C) via the rational
/// squash C*u/(1+|u|), u = x/C. Without this, sigma = exp(W f) participates
/// in an explosive feedback loop whenever the encoder features grow. The
/// derivative 1/(1+|u|)^2 decays only polynomially, so the optimizer can
/// still pull sigma back out of saturation (a tanh squash underflows to an
/// exactly-zero gradient there and traps sigma at the ceiling).
/// Returns (clamped, derivative).
pub fn clamp_log_sigma<F: Real>(logsig: &Tensor<F>) -> (Tensor<F>, Tensor<F>) {
    let c = F::from_f64(LOG_SIGMA_CLAMP);
    let mut clamped = logsig.clone();
    let mut deriv = logsig.clone();
    for (cv, dv) in clamped.data_mut().iter_mut().zip(deriv.data_mut().iter_mut()) {
        let u = *cv / c;
        let denom = F::ONE + u.abs();
        *cv = c * u / denom;
        *dv = F::ONE / (denom * denom);
    }
    (clamped, deriv)
}

/// (mu, sigma) pair of a diagonal-Gaussian latent code. sigma is strictly
/// positive; models produce it as exp of a log-sigma head.
#[derive(Clone, Debug)]
pub struct LatentDistribution<F: Real> {
    pub mu: Tensor<F>,
    pub sigma: Tensor<F>,
}

impl<F: Real> LatentDistribution<F> {
    pub fn new(mu: Tensor<F>, sigma: Tensor<F>) -> NnResult<Self> {
        if mu.shape() != sigma.shape() {
            return Err(NnError::ShapeMismatch {
                layer: 0,
                expected: mu.shape_string(),
                got: sigma.shape_string(),
            });
        }
        if sigma.data().iter().any(|s| *s <= F::ZERO) {
            return Err(NnError::InvalidParameter {
                what: String::from("sigma must be strictly positive"),
            });
        }
        Ok(LatentDistribution { mu, sigma })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }
}

/// z = mu + sigma .* noise
pub fn reparameterize<F: Real>(
    dist: &LatentDistribution<F>,
    noise: &Tensor<F>,
) -> NnResult<Tensor<F>> {
    if noise.shape() != dist.mu.shape() {
        return Err(NnError::ShapeMismatch {
            layer: 0,
            expected: dist.mu.shape_string(),
            got: noise.shape_string(),
        });
    }
    let mut z = dist.mu.clone();
    for ((zv, &s), &n) in z
        .data_mut()
        .iter_mut()
        .zip(dist.sigma.data().iter())
        .zip(noise.data().iter())
    {
        *zv += s * n;
    }
    Ok(z)
}

/// KL(N(mu, sigma^2) || N(0, I)) in closed form, summed over latent
/// dimensions: 1/2 * sum(mu^2 + sigma^2 - log sigma^2 - 1). All loss terms
/// use the extensive (summed-over-elements) convention so that one nat of
/// latent information is priced against the total reconstruction improvement
/// it buys, not a per-pixel average of it.
/// Returns (value, d/dmu, d/dsigma).
pub fn kl_gaussian<F: Real>(dist: &LatentDistribution<F>) -> NnResult<(F, Tensor<F>, Tensor<F>)> {
    let mut acc = F::ZERO;
    let mut gmu = dist.mu.clone();
    let mut gsig = dist.sigma.clone();
    let half = F::from_f64(0.5);
    for ((gm, gs), (&m, &s)) in gmu
        .data_mut()
        .iter_mut()
        .zip(gsig.data_mut().iter_mut())
        .zip(dist.mu.data().iter().zip(dist.sigma.data().iter()))
    {
        if s <= F::ZERO {
            return Err(NnError::InvalidParameter {
                what: String::from("kl_gaussian: sigma <= 0"),
            });
        }
        let s2 = s * s;
        acc += half * (m * m + s2 - s2.ln() - F::ONE);
        *gm = m;
        *gs = s - F::ONE / s;
    }
    // clamp tiny negative round-off
    if acc < F::ZERO {
        acc = F::ZERO;
    }
    Ok((acc, gmu, gsig))
}

/// Squared error summed over all elements (extensive convention, matching
/// the summed KL above). Returns (value, grad wrt `pred`).
pub fn mse<F: Real>(pred: &Tensor<F>, target: &Tensor<F>) -> NnResult<(F, Tensor<F>)> {
    if pred.shape() != target.shape() {
        return Err(NnError::ShapeMismatch {
            layer: 0,
            expected: target.shape_string(),
            got: pred.shape_string(),
        });
    }
    let mut acc = F::ZERO;
    let mut grad = pred.clone();
    let two = F::from_f64(2.0);
    for (g, (&p, &t)) in grad
        .data_mut()
        .iter_mut()
        .zip(pred.data().iter().zip(target.data().iter()))
    {
        let d = p - t;
        acc += d * d;
        *g = two * d;
    }
    Ok((acc, grad))
}

/// Binary cross-entropy summed over all elements (extensive convention);
/// predictions are clamped to [1e-7, 1 - 1e-7].
/// Returns (value, grad wrt `pred`).
pub fn bce<F: Real>(pred: &Tensor<F>, target: &Tensor<F>) -> NnResult<(F, Tensor<F>)> {
    if pred.shape() != target.shape() {
        return Err(NnError::ShapeMismatch {
            layer: 0,
            expected: target.shape_string(),
            got: pred.shape_string(),
        });
    }
    for (&t, name) in target.data().iter().zip(core::iter::repeat("target")) {
        if t < F::ZERO || t > F::ONE {
            return Err(NnError::InvalidParameter {
                what: format!("bce {name} outside [0,1]"),
            });
        }
    }
    let eps = F::from_f64(BCE_EPS);
    let mut acc = F::ZERO;
    let mut grad = pred.clone();
    for (g, (&p, &t)) in grad
        .data_mut()
        .iter_mut()
        .zip(pred.data().iter().zip(target.data().iter()))
    {
        let pc = p.clamp_to(eps, F::ONE - eps);
        acc += -(t * pc.ln() + (F::ONE - t) * (F::ONE - pc).ln());
        *g = -t / pc + (F::ONE - t) / (F::ONE - pc);
    }
    Ok((acc, grad))
}
