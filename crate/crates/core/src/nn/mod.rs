//! Differentiable-computation substrate: layers, sequential graphs, losses,
//! the Adam optimizer, and finite-difference gradient verification.
//!
//! Layers are a closed set (conv, transposed conv, dense, lstm, relu,
//! sigmoid, flatten/reshape); this is not a general autodiff system. Each
//! layer implements an explicit forward that produces a cache and a backward
//! that consumes it, and `Graph` chains them sequentially. Branching model
//! topologies (the teacher's multiple decoders, the student's fusion) are
//! wired by hand in the model modules.

pub mod adam;
pub mod conv;
pub mod dense;
pub mod gradcheck;
pub mod loss;
pub mod lstm;

use alloc::string::String;
use alloc::vec::Vec;
use alloc::{format, vec};
use core::fmt;

use crate::real::Real;
use crate::tensor::Tensor;

pub use adam::Adam;
pub use conv::{Conv2d, TConv2d};
pub use dense::Dense;
pub use loss::{
    bce, clamp_log_sigma, kl_gaussian, mse, reparameterize, LatentDistribution, LOG_SIGMA_CLAMP,
};
pub use lstm::Lstm;

#[derive(Clone, Debug, PartialEq)]
pub enum NnError {
    /// Input shape rejected by a layer; `layer` is the index in the graph
    /// (0 for a standalone layer).
    ShapeMismatch {
        layer: usize,
        expected: String,
        got: String,
    },
    NonFinite {
        what: String,
    },
    InvalidParameter {
        what: String,
    },
    StaleCache {
        layer: usize,
    },
}

impl fmt::Display for NnError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NnError::ShapeMismatch {
                layer,
                expected,
                got,
            } => write!(f, "layer {layer}: expected shape {expected}, got {got}"),
            NnError::NonFinite { what } => write!(f, "non-finite value in {what}"),
            NnError::InvalidParameter { what } => write!(f, "invalid parameter: {what}"),
            NnError::StaleCache { layer } => write!(f, "layer {layer}: stale or missing cache"),
        }
    }
}

pub type NnResult<T> = Result<T, NnError>;

/// One layer of a sequential graph.
#[derive(Clone, Debug)]
pub enum Layer<F: Real> {
    Dense(Dense<F>),
    Conv2d(Conv2d<F>),
    TConv2d(TConv2d<F>),
    Lstm(Lstm<F>),
    Relu,
    Sigmoid,
    Flatten,
    Reshape(Vec<usize>),
}

/// Per-layer forward cache, consumed by the matching backward pass.
pub enum LayerCache<F: Real> {
    Dense(dense::DenseCache<F>),
    Conv2d(conv::ConvCache<F>),
    TConv2d(conv::ConvCache<F>),
    Lstm(lstm::LstmCache<F>),
    Relu(Tensor<F>),
    Sigmoid(Tensor<F>),
    Shape(Vec<usize>),
}

impl<F: Real> Layer<F> {
    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Dense(_) => "dense",
            Layer::Conv2d(_) => "conv2d",
            Layer::TConv2d(_) => "transposed-conv2d",
            Layer::Lstm(_) => "lstm",
            Layer::Relu => "relu",
            Layer::Sigmoid => "sigmoid",
            Layer::Flatten => "flatten",
            Layer::Reshape(_) => "reshape",
        }
    }

    pub fn out_shape(&self, in_shape: &[usize]) -> NnResult<Vec<usize>> {
        match self {
            Layer::Dense(d) => d.out_shape(in_shape),
            Layer::Conv2d(c) => c.out_shape(in_shape),
            Layer::TConv2d(c) => c.out_shape(in_shape),
            Layer::Lstm(l) => l.out_shape(in_shape),
            Layer::Relu | Layer::Sigmoid => Ok(in_shape.to_vec()),
            Layer::Flatten => Ok(vec![in_shape.iter().product()]),
            Layer::Reshape(s) => {
                if s.iter().product::<usize>() != in_shape.iter().product::<usize>() {
                    return Err(NnError::ShapeMismatch {
                        layer: 0,
                        expected: format!("{s:?}"),
                        got: format!("{in_shape:?}"),
                    });
                }
                Ok(s.clone())
            }
        }
    }

    pub fn forward(&self, x: &Tensor<F>) -> NnResult<(Tensor<F>, LayerCache<F>)> {
        match self {
            Layer::Dense(d) => {
                let (y, c) = d.forward(x)?;
                Ok((y, LayerCache::Dense(c)))
            }
            Layer::Conv2d(c) => {
                let (y, cc) = c.forward(x)?;
                Ok((y, LayerCache::Conv2d(cc)))
            }
            Layer::TConv2d(c) => {
                let (y, cc) = c.forward(x)?;
                Ok((y, LayerCache::TConv2d(cc)))
            }
            Layer::Lstm(l) => {
                let (y, c) = l.forward(x)?;
                Ok((y, LayerCache::Lstm(c)))
            }
            Layer::Relu => {
                let y = x.map(|v| v.maxv(F::ZERO));
                Ok((y, LayerCache::Relu(x.clone())))
            }
            Layer::Sigmoid => {
                let y = x.map(|v| v.sigmoid());
                Ok((y.clone(), LayerCache::Sigmoid(y)))
            }
            Layer::Flatten => {
                let y = x.reshaped(&[x.len()]);
                Ok((y, LayerCache::Shape(x.shape().to_vec())))
            }
            Layer::Reshape(s) => {
                let _ = self.out_shape(x.shape())?;
                Ok((x.reshaped(s), LayerCache::Shape(x.shape().to_vec())))
            }
        }
    }

    /// Returns (grad wrt input, grads wrt this layer's params in order).
    pub fn backward(
        &self,
        cache: &LayerCache<F>,
        gy: &Tensor<F>,
    ) -> NnResult<(Tensor<F>, Vec<Tensor<F>>)> {
        match (self, cache) {
            (Layer::Dense(d), LayerCache::Dense(c)) => d.backward(c, gy),
            (Layer::Conv2d(l), LayerCache::Conv2d(c)) => l.backward(c, gy),
            (Layer::TConv2d(l), LayerCache::TConv2d(c)) => l.backward(c, gy),
            (Layer::Lstm(l), LayerCache::Lstm(c)) => l.backward(c, gy),
            (Layer::Relu, LayerCache::Relu(x)) => {
                let mut gx = gy.clone();
                for (g, &xv) in gx.data_mut().iter_mut().zip(x.data().iter()) {
                    // subgradient 1 at the kink: zero-initialized layers sit
                    // exactly at 0 and would otherwise never receive gradient
                    if xv < F::ZERO {
                        *g = F::ZERO;
                    }
                }
                Ok((gx, Vec::new()))
            }
            (Layer::Sigmoid, LayerCache::Sigmoid(y)) => {
                let mut gx = gy.clone();
                for (g, &yv) in gx.data_mut().iter_mut().zip(y.data().iter()) {
                    *g *= yv * (F::ONE - yv);
                }
                Ok((gx, Vec::new()))
            }
            (Layer::Flatten, LayerCache::Shape(s)) | (Layer::Reshape(_), LayerCache::Shape(s)) => {
                Ok((gy.reshaped(s), Vec::new()))
            }
            _ => Err(NnError::StaleCache { layer: 0 }),
        }
    }

    pub fn params(&self) -> Vec<&Tensor<F>> {
        match self {
            Layer::Dense(d) => d.params(),
            Layer::Conv2d(c) => c.params(),
            Layer::TConv2d(c) => c.params(),
            Layer::Lstm(l) => l.params(),
            _ => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<F>> {
        match self {
            Layer::Dense(d) => d.params_mut(),
            Layer::Conv2d(c) => c.params_mut(),
            Layer::TConv2d(c) => c.params_mut(),
            Layer::Lstm(l) => l.params_mut(),
            _ => Vec::new(),
        }
    }

    pub fn param_names(&self) -> Vec<String> {
        match self {
            Layer::Dense(_) => vec!["w".into(), "b".into()],
            Layer::Conv2d(_) | Layer::TConv2d(_) => vec!["w".into(), "b".into()],
            Layer::Lstm(l) => l.param_names(),
            _ => Vec::new(),
        }
    }
}

/// A sequential stack of layers.
#[derive(Clone, Debug)]
pub struct Graph<F: Real> {
    pub layers: Vec<Layer<F>>,
}

pub struct GraphCache<F: Real> {
    caches: Vec<LayerCache<F>>,
}

impl<F: Real> Graph<F> {
    pub fn new(layers: Vec<Layer<F>>) -> Self {
        Graph { layers }
    }

    pub fn infer_shape(&self, in_shape: &[usize]) -> NnResult<Vec<usize>> {
        let mut s = in_shape.to_vec();
        for (i, l) in self.layers.iter().enumerate() {
            s = l.out_shape(&s).map_err(|e| index_err(e, i))?;
        }
        Ok(s)
    }

    pub fn forward(&self, x: &Tensor<F>) -> NnResult<(Tensor<F>, GraphCache<F>)> {
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut cur = x.clone();
        for (i, l) in self.layers.iter().enumerate() {
            let (y, c) = l.forward(&cur).map_err(|e| index_err(e, i))?;
            if !y.all_finite() {
                return Err(NnError::NonFinite {
                    what: format!("output of layer {i} ({})", l.kind()),
                });
            }
            caches.push(c);
            cur = y;
        }
        Ok((cur, GraphCache { caches }))
    }

    /// Returns (grad wrt graph input, one grad per parameter in `params()` order).
    pub fn backward(
        &self,
        cache: &GraphCache<F>,
        gy: &Tensor<F>,
    ) -> NnResult<(Tensor<F>, Vec<Tensor<F>>)> {
        if cache.caches.len() != self.layers.len() {
            return Err(NnError::StaleCache {
                layer: cache.caches.len(),
            });
        }
        let mut grads_rev: Vec<Vec<Tensor<F>>> = Vec::with_capacity(self.layers.len());
        let mut g = gy.clone();
        for (i, l) in self.layers.iter().enumerate().rev() {
            let (gx, gp) = l.backward(&cache.caches[i], &g).map_err(|e| index_err(e, i))?;
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
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<F>> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.params_mut())
            .collect()
    }

    pub fn param_names(&self, prefix: &str) -> Vec<String> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            for n in l.param_names() {
                out.push(format!("{prefix}.{i}.{n}"));
            }
        }
        out
    }
}

fn index_err(e: NnError, i: usize) -> NnError {
    match e {
        NnError::ShapeMismatch { expected, got, .. } => NnError::ShapeMismatch {
            layer: i,
            expected,
            got,
        },
        NnError::StaleCache { .. } => NnError::StaleCache { layer: i },
        other => other,
    }
}

/// Concatenate 1-D tensors (the fusion point of the student network).
pub fn concat<F: Real>(parts: &[&Tensor<F>]) -> Tensor<F> {
    let mut data = Vec::new();
    for p in parts {
        data.extend_from_slice(p.data());
    }
    let n = data.len();
    Tensor::from_vec(&[n], data)
}

/// Split a gradient over a concatenation back into per-part gradients.
pub fn split_grad<F: Real>(g: &Tensor<F>, lens: &[usize]) -> Vec<Tensor<F>> {
    let mut out = Vec::with_capacity(lens.len());
    let mut off = 0;
    for &l in lens {
        out.push(Tensor::from_vec(&[l], g.data()[off..off + l].to_vec()));
        off += l;
    }
    assert_eq!(off, g.len());
    out
}
