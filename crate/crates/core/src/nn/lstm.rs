//! Stacked LSTM over a (time, features) sequence. The recurrent block of the
//! student network uses two layers; the graph output is the last hidden
//! state of the top layer.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::real::Real;
use crate::rng::Rng;
use crate::tensor::Tensor;

use super::{NnError, NnResult};

/// One LSTM layer. Gate order in the stacked weight matrices: i, f, g, o.
#[derive(Clone, Debug)]
struct LstmCell<F: Real> {
    in_dim: usize,
    hidden: usize,
    /// (4*hidden, in_dim)
    wx: Tensor<F>,
    /// (4*hidden, hidden)
    wh: Tensor<F>,
    /// (4*hidden)
    b: Tensor<F>,
}

struct StepCache<F: Real> {
    x: Vec<F>,
    h_prev: Vec<F>,
    c_prev: Vec<F>,
    i: Vec<F>,
    f: Vec<F>,
    g: Vec<F>,
    o: Vec<F>,
    tanh_c: Vec<F>,
}

impl<F: Real> LstmCell<F> {
    fn new(in_dim: usize, hidden: usize, rng: &mut Rng) -> Self {
        let sx = libm::sqrt(1.0 / in_dim as f64);
        let sh = libm::sqrt(1.0 / hidden as f64);
        let wx = (0..4 * hidden * in_dim)
            .map(|_| F::from_f64(rng.uniform_in(-sx, sx)))
            .collect();
        let wh = (0..4 * hidden * hidden)
            .map(|_| F::from_f64(rng.uniform_in(-sh, sh)))
            .collect();
        let mut b = Tensor::zeros(&[4 * hidden]);
        // forget-gate bias starts at 1 so early training does not wipe state
        for v in &mut b.data_mut()[hidden..2 * hidden] {
            *v = F::ONE;
        }
        LstmCell {
            in_dim,
            hidden,
            wx: Tensor::from_vec(&[4 * hidden, in_dim], wx),
            wh: Tensor::from_vec(&[4 * hidden, hidden], wh),
            b,
        }
    }

    /// Runs the full sequence; returns hidden sequence (T, hidden) + caches.
    fn forward_seq(&self, xs: &Tensor<F>) -> (Tensor<F>, Vec<StepCache<F>>) {
        let t_len = xs.shape()[0];
        let d = self.in_dim;
        let h = self.hidden;
        let xd = xs.data();
        let wxd = self.wx.data();
        let whd = self.wh.data();
        let bd = self.b.data();
        let mut hs = Tensor::zeros(&[t_len, h]);
        let mut caches = Vec::with_capacity(t_len);
        let mut h_prev = vec![F::ZERO; h];
        let mut c_prev = vec![F::ZERO; h];
        for t in 0..t_len {
            let x = &xd[t * d..(t + 1) * d];
            let mut gates = vec![F::ZERO; 4 * h];
            for r in 0..4 * h {
                let mut acc = bd[r];
                let row = &wxd[r * d..(r + 1) * d];
                for (wv, xv) in row.iter().zip(x.iter()) {
                    acc += *wv * *xv;
                }
                let hrow = &whd[r * h..(r + 1) * h];
                for (wv, hv) in hrow.iter().zip(h_prev.iter()) {
                    acc += *wv * *hv;
                }
                gates[r] = acc;
            }
            let mut i = vec![F::ZERO; h];
            let mut f = vec![F::ZERO; h];
            let mut g = vec![F::ZERO; h];
            let mut o = vec![F::ZERO; h];
            let mut c = vec![F::ZERO; h];
            let mut tanh_c = vec![F::ZERO; h];
            for j in 0..h {
                i[j] = gates[j].sigmoid();
                f[j] = gates[h + j].sigmoid();
                g[j] = gates[2 * h + j].tanh();
                o[j] = gates[3 * h + j].sigmoid();
                c[j] = f[j] * c_prev[j] + i[j] * g[j];
                tanh_c[j] = c[j].tanh();
                hs.data_mut()[t * h + j] = o[j] * tanh_c[j];
            }
            caches.push(StepCache {
                x: x.to_vec(),
                h_prev: h_prev.clone(),
                c_prev: c_prev.clone(),
                i,
                f,
                g,
                o,
                tanh_c,
            });
            h_prev = hs.data()[t * h..(t + 1) * h].to_vec();
            c_prev = c;
        }
        (hs, caches)
    }

    /// BPTT given per-step gradients on the hidden sequence.
    /// Returns (grad on input sequence, [gwx, gwh, gb]).
    fn backward_seq(
        &self,
        caches: &[StepCache<F>],
        gh_seq: &Tensor<F>,
    ) -> (Tensor<F>, Vec<Tensor<F>>) {
        let t_len = caches.len();
        let d = self.in_dim;
        let h = self.hidden;
        let wxd = self.wx.data();
        let whd = self.wh.data();
        let mut gx_seq = Tensor::zeros(&[t_len, d]);
        let mut gwx = Tensor::zeros(self.wx.shape());
        let mut gwh = Tensor::zeros(self.wh.shape());
        let mut gb = Tensor::zeros(self.b.shape());
        let mut gh_next = vec![F::ZERO; h];
        let mut gc_next = vec![F::ZERO; h];
        for t in (0..t_len).rev() {
            let sc = &caches[t];
            let mut da = vec![F::ZERO; 4 * h];
            for j in 0..h {
                let gh = gh_seq.data()[t * h + j] + gh_next[j];
                let go = gh * sc.tanh_c[j];
                let gc = gh * sc.o[j] * (F::ONE - sc.tanh_c[j] * sc.tanh_c[j]) + gc_next[j];
                let gi = gc * sc.g[j];
                let gg = gc * sc.i[j];
                let gf = gc * sc.c_prev[j];
                gc_next[j] = gc * sc.f[j];
                da[j] = gi * sc.i[j] * (F::ONE - sc.i[j]);
                da[h + j] = gf * sc.f[j] * (F::ONE - sc.f[j]);
                da[2 * h + j] = gg * (F::ONE - sc.g[j] * sc.g[j]);
                da[3 * h + j] = go * sc.o[j] * (F::ONE - sc.o[j]);
            }
            for j in 0..h {
                gh_next[j] = F::ZERO;
            }
            {
                let gxd = gx_seq.data_mut();
                let gwxd = gwx.data_mut();
                let gwhd = gwh.data_mut();
                let gbd = gb.data_mut();
                for r in 0..4 * h {
                    let dv = da[r];
                    gbd[r] += dv;
                    let wrow = &wxd[r * d..(r + 1) * d];
                    let gwrow = &mut gwxd[r * d..(r + 1) * d];
                    for k in 0..d {
                        gwrow[k] += dv * sc.x[k];
                        gxd[t * d + k] += dv * wrow[k];
                    }
                    let hrow = &whd[r * h..(r + 1) * h];
                    let ghrow = &mut gwhd[r * h..(r + 1) * h];
                    for k in 0..h {
                        ghrow[k] += dv * sc.h_prev[k];
                        gh_next[k] += dv * hrow[k];
                    }
                }
            }
        }
        (gx_seq, vec![gwx, gwh, gb])
    }
}

/// Stacked LSTM; input (T, in_dim), output (hidden) = last hidden state of
/// the top layer.
#[derive(Clone, Debug)]
pub struct Lstm<F: Real> {
    cells: Vec<LstmCell<F>>,
    pub in_dim: usize,
    pub hidden: usize,
}

pub struct LstmCache<F: Real> {
    per_layer: Vec<Vec<StepCache<F>>>,
    seq_len: usize,
}

impl<F: Real> Lstm<F> {
    pub fn new(in_dim: usize, hidden: usize, num_layers: usize, rng: &mut Rng) -> Self {
        let mut cells = Vec::new();
        for l in 0..num_layers {
            let d = if l == 0 { in_dim } else { hidden };
            cells.push(LstmCell::new(d, hidden, rng));
        }
        Lstm {
            cells,
            in_dim,
            hidden,
        }
    }

    pub fn num_layers(&self) -> usize {
        self.cells.len()
    }

    pub fn out_shape(&self, in_shape: &[usize]) -> NnResult<Vec<usize>> {
        match in_shape {
            [t, d] if *d == self.in_dim && *t > 0 => Ok(vec![self.hidden]),
            _ => Err(NnError::ShapeMismatch {
                layer: 0,
                expected: format!("[t, {}]", self.in_dim),
                got: format!("{in_shape:?}"),
            }),
        }
    }

    pub fn forward(&self, xs: &Tensor<F>) -> NnResult<(Tensor<F>, LstmCache<F>)> {
        self.out_shape(xs.shape())?;
        let t_len = xs.shape()[0];
        let mut per_layer = Vec::with_capacity(self.cells.len());
        let mut seq = xs.clone();
        for cell in &self.cells {
            let (hs, caches) = cell.forward_seq(&seq);
            per_layer.push(caches);
            seq = hs;
        }
        let h = self.hidden;
        let last = Tensor::from_vec(&[h], seq.data()[(t_len - 1) * h..].to_vec());
        Ok((
            last,
            LstmCache {
                per_layer,
                seq_len: t_len,
            },
        ))
    }

    pub fn backward(
        &self,
        cache: &LstmCache<F>,
        gy: &Tensor<F>,
    ) -> NnResult<(Tensor<F>, Vec<Tensor<F>>)> {
        if gy.shape() != [self.hidden] {
            return Err(NnError::ShapeMismatch {
                layer: 0,
                expected: format!("[{}]", self.hidden),
                got: gy.shape_string(),
            });
        }
        let t_len = cache.seq_len;
        let h = self.hidden;
        // gradient only on the last hidden state of the top layer
        let mut gh_seq = Tensor::zeros(&[t_len, h]);
        gh_seq.data_mut()[(t_len - 1) * h..].copy_from_slice(gy.data());
        let mut grads_rev: Vec<Vec<Tensor<F>>> = Vec::new();
        let mut g = gh_seq;
        for (l, cell) in self.cells.iter().enumerate().rev() {
            let (gx, gp) = cell.backward_seq(&cache.per_layer[l], &g);
            grads_rev.push(gp);
            g = gx;
        }
        let mut grads = Vec::new();
        for gp in grads_rev.into_iter().rev() {
            grads.extend(gp);
        }
        Ok((g, grads))
    }

    pub fn params(&self) -> Vec<&Tensor<F>> {
        self.cells
            .iter()
            .flat_map(|c| vec![&c.wx, &c.wh, &c.b])
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<F>> {
        self.cells
            .iter_mut()
            .flat_map(|c| vec![&mut c.wx, &mut c.wh, &mut c.b])
            .collect()
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for l in 0..self.cells.len() {
            out.push(format!("l{l}.wx"));
            out.push(format!("l{l}.wh"));
            out.push(format!("l{l}.b"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn output_shape_is_hidden_dim() {
        let mut rng = Rng::new(5);
        let l: Lstm<f32> = Lstm::new(6, 4, 2, &mut rng);
        let x = Tensor::zeros(&[7, 6]);
        let (y, _) = l.forward(&x).unwrap();
        assert_eq!(y.shape(), &[4]);
        assert!(y.all_finite());
    }

    #[test]
    fn rejects_wrong_feature_dim() {
        let mut rng = Rng::new(5);
        let l: Lstm<f32> = Lstm::new(6, 4, 2, &mut rng);
        assert!(l.forward(&Tensor::zeros(&[7, 5])).is_err());
    }
}
