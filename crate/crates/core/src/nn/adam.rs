//! Adam optimizer (lr 1e-3, beta1 0.9, beta2 0.999, eps 1e-8 defaults).

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::real::Real;
use crate::tensor::Tensor;

use super::{NnError, NnResult};

#[derive(Clone, Debug)]
pub struct Adam<F: Real> {
    pub lr: F,
    pub beta1: F,
    pub beta2: F,
    pub eps: F,
    step_count: u64,
    first: Vec<Tensor<F>>,
    second: Vec<Tensor<F>>,
}

impl<F: Real> Adam<F> {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr: F::from_f64(lr),
            beta1: F::from_f64(0.9),
            beta2: F::from_f64(0.999),
            eps: F::from_f64(1e-8),
            step_count: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// One update over a parameter list with matching gradients. On a
    /// non-finite gradient the whole step is aborted (no parameter or moment
    /// is touched) and the offending parameter is named.
    pub fn step(
        &mut self,
        params: &mut [&mut Tensor<F>],
        grads: &[Tensor<F>],
        names: &[String],
    ) -> NnResult<()> {
        assert_eq!(params.len(), grads.len());
        if self.first.is_empty() {
            for p in params.iter() {
                self.first.push(Tensor::zeros(p.shape()));
                self.second.push(Tensor::zeros(p.shape()));
            }
        }
        for (i, (p, g)) in params.iter().zip(grads.iter()).enumerate() {
            if p.shape() != g.shape() {
                return Err(NnError::ShapeMismatch {
                    layer: i,
                    expected: p.shape_string(),
                    got: g.shape_string(),
                });
            }
            if !g.all_finite() {
                let name = names.get(i).cloned().unwrap_or_else(|| format!("param[{i}]"));
                return Err(NnError::NonFinite {
                    what: format!("gradient of {name}"),
                });
            }
        }
        self.step_count += 1;
        let t = self.step_count as f64;
        let bc1 = F::from_f64(1.0 - libm::pow(self.beta1.to_f64(), t));
        let bc2 = F::from_f64(1.0 - libm::pow(self.beta2.to_f64(), t));
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads.iter())
            .zip(self.first.iter_mut().zip(self.second.iter_mut()))
        {
            let md = m.data_mut();
            let vd = v.data_mut();
            let pd = p.data_mut();
            let gd = g.data();
            for k in 0..pd.len() {
                md[k] = self.beta1 * md[k] + (F::ONE - self.beta1) * gd[k];
                vd[k] = self.beta2 * vd[k] + (F::ONE - self.beta2) * gd[k] * gd[k];
                let mhat = md[k] / bc1;
                let vhat = vd[k] / bc2;
                pd[k] -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut p = Tensor::from_vec(&[3], vec![1.0f64, -2.0, 0.5]);
        let before = p.clone();
        let mut adam: Adam<f64> = Adam::new(1e-3);
        let g = Tensor::zeros(&[3]);
        adam.step(&mut [&mut p], &[g], &["p".to_string()]).unwrap();
        assert_eq!(adam.step_count(), 1);
        assert_eq!(p.data(), before.data());
    }

    #[test]
    fn constant_gradient_moves_opposite_sign_monotonically() {
        let mut p = Tensor::scalar(0.0f64);
        let mut adam: Adam<f64> = Adam::new(1e-3);
        let g = Tensor::scalar(2.0);
        let mut last = 0.0;
        for _ in 0..100 {
            adam.step(&mut [&mut p], &[g.clone()], &["p".to_string()])
                .unwrap();
            assert!(p.data()[0] < last);
            last = p.data()[0];
        }
    }

    #[test]
    fn first_step_bounded_by_lr() {
        let mut p = Tensor::scalar(1.0f64);
        let mut adam: Adam<f64> = Adam::new(1e-3);
        let g = Tensor::scalar(123.0);
        adam.step(&mut [&mut p], &[g], &["p".to_string()]).unwrap();
        assert!((p.data()[0] - 1.0).abs() <= 1.001e-3);
    }

    #[test]
    fn scalar_quadratic_converges() {
        // f(w) = (w - 3)^2 from w0 = 0
        let mut p = Tensor::scalar(0.0f64);
        let mut adam: Adam<f64> = Adam::new(1e-2);
        for _ in 0..5000 {
            let g = Tensor::scalar(2.0 * (p.data()[0] - 3.0));
            adam.step(&mut [&mut p], &[g], &["w".to_string()]).unwrap();
        }
        assert!((p.data()[0] - 3.0).abs() < 1e-3, "w = {}", p.data()[0]);
    }

    #[test]
    fn non_finite_gradient_aborts_and_names_parameter() {
        let mut p = Tensor::scalar(1.0f64);
        let before = p.clone();
        let mut adam: Adam<f64> = Adam::new(1e-3);
        let g = Tensor::scalar(f64::NAN);
        let err = adam
            .step(&mut [&mut p], &[g], &["enc.0.w".to_string()])
            .unwrap_err();
        match err {
            NnError::NonFinite { what } => assert!(what.contains("enc.0.w")),
            other => panic!("unexpected error {other:?}"),
        }
        assert_eq!(p.data(), before.data());
        assert_eq!(adam.step_count(), 0);
    }
}
