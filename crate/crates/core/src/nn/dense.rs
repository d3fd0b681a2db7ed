//! Fully-connected layer.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::real::Real;
use crate::rng::Rng;
use crate::tensor::Tensor;

use super::{NnError, NnResult};

/// y = W x + b, on 1-D inputs.
#[derive(Clone, Debug)]
pub struct Dense<F: Real> {
    pub in_dim: usize,
    pub out_dim: usize,
    /// (out_dim, in_dim)
    pub w: Tensor<F>,
    /// (out_dim)
    pub b: Tensor<F>,
}

pub struct DenseCache<F: Real> {
    x: Tensor<F>,
}

impl<F: Real> Dense<F> {
    /// Fan-in-scaled uniform init.
    pub fn new(in_dim: usize, out_dim: usize, rng: &mut Rng) -> Self {
        // Kaiming uniform: preserves activation variance under ReLU
        let s = libm::sqrt(6.0 / in_dim as f64);
        let data = (0..in_dim * out_dim)
            .map(|_| F::from_f64(rng.uniform_in(-s, s)))
            .collect();
        Dense {
            in_dim,
            out_dim,
            w: Tensor::from_vec(&[out_dim, in_dim], data),
            b: Tensor::zeros(&[out_dim]),
        }
    }

    /// All-zero weights and bias (used for mu/log-sigma output heads so an
    /// untrained model starts at the prior).
    pub fn new_zero(in_dim: usize, out_dim: usize) -> Self {
        Dense {
            in_dim,
            out_dim,
            w: Tensor::zeros(&[out_dim, in_dim]),
            b: Tensor::zeros(&[out_dim]),
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut w = Tensor::zeros(&[n, n]);
        for i in 0..n {
            w.data_mut()[i * n + i] = F::ONE;
        }
        Dense {
            in_dim: n,
            out_dim: n,
            w,
            b: Tensor::zeros(&[n]),
        }
    }

    pub fn out_shape(&self, in_shape: &[usize]) -> NnResult<Vec<usize>> {
        if in_shape != [self.in_dim] {
            return Err(NnError::ShapeMismatch {
                layer: 0,
                expected: format!("[{}]", self.in_dim),
                got: format!("{in_shape:?}"),
            });
        }
        Ok(vec![self.out_dim])
    }

    pub fn forward(&self, x: &Tensor<F>) -> NnResult<(Tensor<F>, DenseCache<F>)> {
        self.out_shape(x.shape())?;
        let xd = x.data();
        let wd = self.w.data();
        let mut y = self.b.clone();
        let yd = y.data_mut();
        for o in 0..self.out_dim {
            let row = &wd[o * self.in_dim..(o + 1) * self.in_dim];
            let mut acc = F::ZERO;
            for (wv, xv) in row.iter().zip(xd.iter()) {
                acc += *wv * *xv;
            }
            yd[o] += acc;
        }
        Ok((y, DenseCache { x: x.clone() }))
    }

    pub fn backward(
        &self,
        cache: &DenseCache<F>,
        gy: &Tensor<F>,
    ) -> NnResult<(Tensor<F>, Vec<Tensor<F>>)> {
        if gy.shape() != [self.out_dim] {
            return Err(NnError::ShapeMismatch {
                layer: 0,
                expected: format!("[{}]", self.out_dim),
                got: gy.shape_string(),
            });
        }
        let xd = cache.x.data();
        let wd = self.w.data();
        let gyd = gy.data();
        let mut gw = Tensor::zeros(&[self.out_dim, self.in_dim]);
        let mut gx = Tensor::zeros(&[self.in_dim]);
        {
            let gwd = gw.data_mut();
            let gxd = gx.data_mut();
            for o in 0..self.out_dim {
                let g = gyd[o];
                let row = &wd[o * self.in_dim..(o + 1) * self.in_dim];
                let grow = &mut gwd[o * self.in_dim..(o + 1) * self.in_dim];
                for i in 0..self.in_dim {
                    grow[i] = g * xd[i];
                    gxd[i] += g * row[i];
                }
            }
        }
        Ok((gx, vec![gw, gy.clone()]))
    }

    pub fn params(&self) -> Vec<&Tensor<F>> {
        vec![&self.w, &self.b]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<F>> {
        vec![&mut self.w, &mut self.b]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_dense_passes_input_through() {
        let d: Dense<f64> = Dense::identity(4);
        let x = Tensor::from_vec(&[4], vec![1.0, -2.0, 3.5, 0.0]);
        let (y, _) = d.forward(&x).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn linear_case_gradient_is_outer_product() {
        // y = W x, loss = sum(y): dL/dW = outer(1, x)
        let mut d: Dense<f64> = Dense::new_zero(3, 2);
        d.w.data_mut().copy_from_slice(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let x = Tensor::from_vec(&[3], vec![0.5, -1.0, 2.0]);
        let (_, cache) = d.forward(&x).unwrap();
        let gy = Tensor::from_vec(&[2], vec![1.0, 1.0]);
        let (_, grads) = d.backward(&cache, &gy).unwrap();
        assert_eq!(grads[0].data(), &[0.5, -1.0, 2.0, 0.5, -1.0, 2.0]);
        assert_eq!(grads[1].data(), &[1.0, 1.0]);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let d: Dense<f32> = Dense::identity(3);
        let x = Tensor::from_vec(&[4], vec![0.0; 4]);
        assert!(d.forward(&x).is_err());
    }
}
