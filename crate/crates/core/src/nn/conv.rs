//! 2-D convolution and transposed convolution on (channels, height, width)
//! tensors. Encoders use stride-2 kernel-3 pad-1 stacks (spatial extent
//! ceil(n/2) per layer); decoders mirror them with transposed convs whose
//! declared output extent is stride * input extent.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::real::Real;
use crate::rng::Rng;
use crate::tensor::Tensor;

use super::{NnError, NnResult};

#[derive(Clone, Debug)]
pub struct Conv2d<F: Real> {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    /// (out_ch, in_ch, kernel, kernel)
    pub w: Tensor<F>,
    /// (out_ch)
    pub b: Tensor<F>,
}

pub struct ConvCache<F: Real> {
    x: Tensor<F>,
}

fn conv_out_extent(n: usize, k: usize, s: usize, p: usize) -> usize {
    (n + 2 * p - k) / s + 1
}

impl<F: Real> Conv2d<F> {
    pub fn new(
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        rng: &mut Rng,
    ) -> Self {
        let fan_in = in_ch * kernel * kernel;
        // Kaiming uniform: preserves activation variance under ReLU
        let s = libm::sqrt(6.0 / fan_in as f64);
        let data = (0..out_ch * fan_in)
            .map(|_| F::from_f64(rng.uniform_in(-s, s)))
            .collect();
        Conv2d {
            in_ch,
            out_ch,
            kernel,
            stride,
            pad,
            w: Tensor::from_vec(&[out_ch, in_ch, kernel, kernel], data),
            b: Tensor::zeros(&[out_ch]),
        }
    }

    pub fn out_shape(&self, in_shape: &[usize]) -> NnResult<Vec<usize>> {
        match in_shape {
            [c, h, w] if *c == self.in_ch && *h + 2 * self.pad >= self.kernel
                && *w + 2 * self.pad >= self.kernel =>
            {
                Ok(vec![
                    self.out_ch,
                    conv_out_extent(*h, self.kernel, self.stride, self.pad),
                    conv_out_extent(*w, self.kernel, self.stride, self.pad),
                ])
            }
            _ => Err(NnError::ShapeMismatch {
                layer: 0,
                expected: format!("[{}, h, w]", self.in_ch),
                got: format!("{in_shape:?}"),
            }),
        }
    }

    pub fn forward(&self, x: &Tensor<F>) -> NnResult<(Tensor<F>, ConvCache<F>)> {
        let os = self.out_shape(x.shape())?;
        let (ih, iw) = (x.shape()[1], x.shape()[2]);
        let (oh, ow) = (os[1], os[2]);
        let k = self.kernel;
        let mut y = Tensor::zeros(&os);
        let xd = x.data();
        let wd = self.w.data();
        let bd = self.b.data();
        let yd = y.data_mut();
        for oc in 0..self.out_ch {
            let ybase = oc * oh * ow;
            for v in &mut yd[ybase..ybase + oh * ow] {
                *v = bd[oc];
            }
            for ic in 0..self.in_ch {
                let xbase = ic * ih * iw;
                let wbase = (oc * self.in_ch + ic) * k * k;
                for ky in 0..k {
                    for kx in 0..k {
                        let wv = wd[wbase + ky * k + kx];
                        for oy in 0..oh {
                            let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                            if iy < 0 || iy >= ih as isize {
                                continue;
                            }
                            let xrow = xbase + iy as usize * iw;
                            let yrow = ybase + oy * ow;
                            for ox in 0..ow {
                                let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                                if ix < 0 || ix >= iw as isize {
                                    continue;
                                }
                                yd[yrow + ox] += wv * xd[xrow + ix as usize];
                            }
                        }
                    }
                }
            }
        }
        Ok((y, ConvCache { x: x.clone() }))
    }

    pub fn backward(
        &self,
        cache: &ConvCache<F>,
        gy: &Tensor<F>,
    ) -> NnResult<(Tensor<F>, Vec<Tensor<F>>)> {
        let os = self.out_shape(cache.x.shape())?;
        if gy.shape() != os.as_slice() {
            return Err(NnError::ShapeMismatch {
                layer: 0,
                expected: format!("{os:?}"),
                got: gy.shape_string(),
            });
        }
        let (ih, iw) = (cache.x.shape()[1], cache.x.shape()[2]);
        let (oh, ow) = (os[1], os[2]);
        let k = self.kernel;
        let xd = cache.x.data();
        let wd = self.w.data();
        let gyd = gy.data();
        let mut gx = Tensor::zeros(cache.x.shape());
        let mut gw = Tensor::zeros(self.w.shape());
        let mut gb = Tensor::zeros(self.b.shape());
        {
            let gxd = gx.data_mut();
            let gwd = gw.data_mut();
            let gbd = gb.data_mut();
            for oc in 0..self.out_ch {
                let ybase = oc * oh * ow;
                let mut bacc = F::ZERO;
                for g in &gyd[ybase..ybase + oh * ow] {
                    bacc += *g;
                }
                gbd[oc] = bacc;
                for ic in 0..self.in_ch {
                    let xbase = ic * ih * iw;
                    let wbase = (oc * self.in_ch + ic) * k * k;
                    for ky in 0..k {
                        for kx in 0..k {
                            let wv = wd[wbase + ky * k + kx];
                            let mut wacc = F::ZERO;
                            for oy in 0..oh {
                                let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                                if iy < 0 || iy >= ih as isize {
                                    continue;
                                }
                                let xrow = xbase + iy as usize * iw;
                                let yrow = ybase + oy * ow;
                                for ox in 0..ow {
                                    let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                                    if ix < 0 || ix >= iw as isize {
                                        continue;
                                    }
                                    let g = gyd[yrow + ox];
                                    wacc += g * xd[xrow + ix as usize];
                                    gxd[xrow + ix as usize] += g * wv;
                                }
                            }
                            gwd[wbase + ky * k + kx] += wacc;
                        }
                    }
                }
            }
        }
        Ok((gx, vec![gw, gb]))
    }

    pub fn params(&self) -> Vec<&Tensor<F>> {
        vec![&self.w, &self.b]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<F>> {
        vec![&mut self.w, &mut self.b]
    }
}

/// Transposed convolution. Output extent is declared as stride * input
/// extent, which kernel 3 / pad 1 hits exactly for strides 1 and 2.
#[derive(Clone, Debug)]
pub struct TConv2d<F: Real> {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    /// (in_ch, out_ch, kernel, kernel)
    pub w: Tensor<F>,
    /// (out_ch)
    pub b: Tensor<F>,
}

impl<F: Real> TConv2d<F> {
    pub fn new(
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        rng: &mut Rng,
    ) -> Self {
        let fan_in = in_ch * kernel * kernel;
        // Kaiming uniform: preserves activation variance under ReLU
        let s = libm::sqrt(6.0 / fan_in as f64);
        let data = (0..out_ch * fan_in)
            .map(|_| F::from_f64(rng.uniform_in(-s, s)))
            .collect();
        TConv2d {
            in_ch,
            out_ch,
            kernel,
            stride,
            pad,
            w: Tensor::from_vec(&[in_ch, out_ch, kernel, kernel], data),
            b: Tensor::zeros(&[out_ch]),
        }
    }

    pub fn out_shape(&self, in_shape: &[usize]) -> NnResult<Vec<usize>> {
        match in_shape {
            [c, h, w] if *c == self.in_ch => {
                Ok(vec![self.out_ch, h * self.stride, w * self.stride])
            }
            _ => Err(NnError::ShapeMismatch {
                layer: 0,
                expected: format!("[{}, h, w]", self.in_ch),
                got: format!("{in_shape:?}"),
            }),
        }
    }

    pub fn forward(&self, x: &Tensor<F>) -> NnResult<(Tensor<F>, ConvCache<F>)> {
        let os = self.out_shape(x.shape())?;
        let (ih, iw) = (x.shape()[1], x.shape()[2]);
        let (oh, ow) = (os[1], os[2]);
        let k = self.kernel;
        let mut y = Tensor::zeros(&os);
        let xd = x.data();
        let wd = self.w.data();
        let bd = self.b.data();
        let yd = y.data_mut();
        for oc in 0..self.out_ch {
            let ybase = oc * oh * ow;
            for v in &mut yd[ybase..ybase + oh * ow] {
                *v = bd[oc];
            }
        }
        for ic in 0..self.in_ch {
            let xbase = ic * ih * iw;
            for oc in 0..self.out_ch {
                let ybase = oc * oh * ow;
                let wbase = (ic * self.out_ch + oc) * k * k;
                for ky in 0..k {
                    for kx in 0..k {
                        let wv = wd[wbase + ky * k + kx];
                        for iy in 0..ih {
                            let oy = (iy * self.stride + ky) as isize - self.pad as isize;
                            if oy < 0 || oy >= oh as isize {
                                continue;
                            }
                            let xrow = xbase + iy * iw;
                            let yrow = ybase + oy as usize * ow;
                            for ix in 0..iw {
                                let ox = (ix * self.stride + kx) as isize - self.pad as isize;
                                if ox < 0 || ox >= ow as isize {
                                    continue;
                                }
                                yd[yrow + ox as usize] += wv * xd[xrow + ix];
                            }
                        }
                    }
                }
            }
        }
        Ok((y, ConvCache { x: x.clone() }))
    }

    pub fn backward(
        &self,
        cache: &ConvCache<F>,
        gy: &Tensor<F>,
    ) -> NnResult<(Tensor<F>, Vec<Tensor<F>>)> {
        let os = self.out_shape(cache.x.shape())?;
        if gy.shape() != os.as_slice() {
            return Err(NnError::ShapeMismatch {
                layer: 0,
                expected: format!("{os:?}"),
                got: gy.shape_string(),
            });
        }
        let (ih, iw) = (cache.x.shape()[1], cache.x.shape()[2]);
        let (oh, ow) = (os[1], os[2]);
        let k = self.kernel;
        let xd = cache.x.data();
        let wd = self.w.data();
        let gyd = gy.data();
        let mut gx = Tensor::zeros(cache.x.shape());
        let mut gw = Tensor::zeros(self.w.shape());
        let mut gb = Tensor::zeros(self.b.shape());
        {
            let gxd = gx.data_mut();
            let gwd = gw.data_mut();
            let gbd = gb.data_mut();
            for oc in 0..self.out_ch {
                let ybase = oc * oh * ow;
                let mut bacc = F::ZERO;
                for g in &gyd[ybase..ybase + oh * ow] {
                    bacc += *g;
                }
                gbd[oc] = bacc;
            }
            for ic in 0..self.in_ch {
                let xbase = ic * ih * iw;
                for oc in 0..self.out_ch {
                    let ybase = oc * oh * ow;
                    let wbase = (ic * self.out_ch + oc) * k * k;
                    for ky in 0..k {
                        for kx in 0..k {
                            let wv = wd[wbase + ky * k + kx];
                            let mut wacc = F::ZERO;
                            for iy in 0..ih {
                                let oy = (iy * self.stride + ky) as isize - self.pad as isize;
                                if oy < 0 || oy >= oh as isize {
                                    continue;
                                }
                                let xrow = xbase + iy * iw;
                                let yrow = ybase + oy as usize * ow;
                                for ix in 0..iw {
                                    let ox = (ix * self.stride + kx) as isize - self.pad as isize;
                                    if ox < 0 || ox >= ow as isize {
                                        continue;
                                    }
                                    let g = gyd[yrow + ox as usize];
                                    wacc += g * xd[xrow + ix];
                                    gxd[xrow + ix] += g * wv;
                                }
                            }
                            gwd[wbase + ky * k + kx] += wacc;
                        }
                    }
                }
            }
        }
        Ok((gx, vec![gw, gb]))
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
    use crate::rng::Rng;

    #[test]
    fn five_layer_stride2_encoder_halves_each_layer() {
        // 64x64 -> 2x2 after five stride-2 convs (64 / 2^5)
        let mut rng = Rng::new(0);
        let mut shape = vec![1usize, 64, 64];
        for i in 0..5 {
            let c = Conv2d::<f32>::new(shape[0], 4, 3, 2, 1, &mut rng);
            shape = c.out_shape(&shape).unwrap();
            assert_eq!(shape[1], 64 >> (i + 1));
            assert_eq!(shape[2], 64 >> (i + 1));
        }
        assert_eq!(shape, vec![4, 2, 2]);
    }

    #[test]
    fn odd_extent_rounds_up() {
        let mut rng = Rng::new(1);
        let c = Conv2d::<f32>::new(1, 1, 3, 2, 1, &mut rng);
        assert_eq!(c.out_shape(&[1, 75, 23]).unwrap(), vec![1, 38, 12]);
    }

    #[test]
    fn tconv_doubles_extent_and_matches_declared_shape() {
        let mut rng = Rng::new(2);
        let t = TConv2d::<f32>::new(2, 3, 3, 2, 1, &mut rng);
        let x = Tensor::zeros(&[2, 5, 7]);
        let (y, _) = t.forward(&x).unwrap();
        assert_eq!(y.shape(), &[3, 10, 14]);
        assert_eq!(t.out_shape(&[2, 5, 7]).unwrap(), vec![3, 10, 14]);
    }

    #[test]
    fn forward_shape_inference_matches_actual() {
        let mut rng = Rng::new(3);
        let c = Conv2d::<f64>::new(3, 5, 3, 2, 1, &mut rng);
        let x = Tensor::from_vec(
            &[3, 9, 11],
            (0..3 * 9 * 11).map(|i| (i as f64 * 0.13).sin()).collect(),
        );
        let (y, _) = c.forward(&x).unwrap();
        assert_eq!(y.shape(), c.out_shape(x.shape()).unwrap().as_slice());
    }
}
