use serde::{Deserialize, Serialize};

use super::tensor::{ImageBatch, ImageShape};
use crate::error::{shape_err, Result};
use crate::numerics::{gemm_into, xavier_scale, xavier_values, ActivationKind, Matrix, Rng};

/// Number of kernel placements along one axis, or `None` when the kernel does
/// not fit.
pub fn conv_output_dim(dim: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = dim + 2 * padding;
    if stride == 0 || kernel == 0 || padded < kernel {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvLayer {
    pub filters: usize,
    pub in_channels: usize,
    pub kernel: (usize, usize),
    pub stride: usize,
    pub padding: usize,
    /// `filters x (in_channels * kh * kw)`, i.e. the 4-D kernel with each
    /// filter flattened channel, row, column.
    pub weights: Matrix,
    /// `filters x 1`.
    pub bias: Matrix,
    pub activation: ActivationKind,
}

/// Values kept from a forward pass for the backward pass.
#[derive(Clone, Debug)]
pub struct ConvCache {
    pub input_shape: ImageShape,
    pub out_h: usize,
    pub out_w: usize,
    /// Unrolled input patches, one `K x P` block per sample.
    pub cols: Vec<f64>,
    /// Pre-activations.
    pub z: ImageBatch,
}

pub struct ConvGrads {
    pub d_input: ImageBatch,
    pub d_weights: Matrix,
    pub d_bias: Matrix,
}

impl ConvLayer {
    pub fn new(
        filters: usize,
        in_channels: usize,
        kernel: (usize, usize),
        stride: usize,
        padding: usize,
        activation: ActivationKind,
        rng: &mut Rng,
    ) -> Self {
        let k = in_channels * kernel.0 * kernel.1;
        let area = kernel.0 * kernel.1;
        let scale = xavier_scale(in_channels * area, filters * area);
        let weights = Matrix::from_vec(filters, k, xavier_values(filters * k, scale, rng))
            .expect("length matches");
        Self {
            filters,
            in_channels,
            kernel,
            stride,
            padding,
            weights,
            bias: Matrix::zeros(filters, 1),
            activation,
        }
    }

    pub fn output_shape(&self, input: ImageShape) -> Result<ImageShape> {
        let h = conv_output_dim(input.height, self.kernel.0, self.stride, self.padding);
        let w = conv_output_dim(input.width, self.kernel.1, self.stride, self.padding);
        match (h, w) {
            (Some(h), Some(w)) if input.channels == self.in_channels => Ok(ImageShape {
                channels: self.filters,
                height: h,
                width: w,
            }),
            _ => Err(shape_err(
                "conv",
                input,
                format!(
                    "{}ch kernel {}x{} stride {} pad {}",
                    self.in_channels, self.kernel.0, self.kernel.1, self.stride, self.padding
                ),
            )),
        }
    }

    fn patch_len(&self) -> usize {
        self.in_channels * self.kernel.0 * self.kernel.1
    }

    fn im2col(&self, input: &ImageBatch, s: usize, out_h: usize, out_w: usize, cols: &mut [f64]) {
        let (kh, kw) = self.kernel;
        let p = out_h * out_w;
        let pad = self.padding as isize;
        for c in 0..self.in_channels {
            for ki in 0..kh {
                for kj in 0..kw {
                    let row = (c * kh + ki) * kw + kj;
                    let dst = &mut cols[row * p..(row + 1) * p];
                    for oi in 0..out_h {
                        let ii = (oi * self.stride + ki) as isize - pad;
                        for oj in 0..out_w {
                            let jj = (oj * self.stride + kj) as isize - pad;
                            dst[oi * out_w + oj] = if ii < 0
                                || jj < 0
                                || ii as usize >= input.height
                                || jj as usize >= input.width
                            {
                                0.0
                            } else {
                                input.at(s, c, ii as usize, jj as usize)
                            };
                        }
                    }
                }
            }
        }
    }

    fn col2im(&self, dcols: &[f64], out_h: usize, out_w: usize, d_input: &mut ImageBatch, s: usize) {
        let (kh, kw) = self.kernel;
        let p = out_h * out_w;
        let pad = self.padding as isize;
        let (h, w) = (d_input.height, d_input.width);
        let base = s * d_input.sample_len();
        for c in 0..self.in_channels {
            for ki in 0..kh {
                for kj in 0..kw {
                    let row = (c * kh + ki) * kw + kj;
                    let src = &dcols[row * p..(row + 1) * p];
                    for oi in 0..out_h {
                        let ii = (oi * self.stride + ki) as isize - pad;
                        if ii < 0 || ii as usize >= h {
                            continue;
                        }
                        for oj in 0..out_w {
                            let jj = (oj * self.stride + kj) as isize - pad;
                            if jj < 0 || jj as usize >= w {
                                continue;
                            }
                            d_input.data[base + (c * h + ii as usize) * w + jj as usize] +=
                                src[oi * out_w + oj];
                        }
                    }
                }
            }
        }
    }
}

/// Convolution, bias and activation. Returns the activations and a cache.
pub fn conv_forward(layer: &ConvLayer, input: &ImageBatch) -> Result<(ImageBatch, ConvCache)> {
    let out = layer.output_shape(input.dims())?;
    let (k, p) = (layer.patch_len(), out.height * out.width);
    let mut cols = vec![0.0; input.n * k * p];
    let mut z = ImageBatch::zeros(input.n, out.channels, out.height, out.width);
    let f = layer.filters;
    for s in 0..input.n {
        let block = &mut cols[s * k * p..(s + 1) * k * p];
        layer.im2col(input, s, out.height, out.width, block);
        let zs = &mut z.data[s * f * p..(s + 1) * f * p];
        for (fi, row) in zs.chunks_mut(p).enumerate() {
            row.fill(layer.bias.get(fi, 0));
        }
        gemm_into(f, k, p, layer.weights.data(), false, k, block, false, p, zs, 1.0);
    }
    let mut a = z.clone();
    a.data.iter_mut().for_each(|v| *v = layer.activation.apply(*v));
    Ok((
        a,
        ConvCache {
            input_shape: input.dims(),
            out_h: out.height,
            out_w: out.width,
            cols,
            z,
        },
    ))
}

/// Gradients given `d_z`, the loss gradient with respect to the
/// pre-activations.
pub fn conv_backward(layer: &ConvLayer, cache: &ConvCache, d_z: &ImageBatch) -> Result<ConvGrads> {
    let (dw, db, di) = conv_backward_impl(layer, cache, d_z, true)?;
    Ok(ConvGrads {
        d_input: di.expect("requested"),
        d_weights: dw,
        d_bias: db,
    })
}

pub(crate) fn conv_backward_impl(
    layer: &ConvLayer,
    cache: &ConvCache,
    d_z: &ImageBatch,
    need_input: bool,
) -> Result<(Matrix, Matrix, Option<ImageBatch>)> {
    if d_z.dims() != cache.z.dims() || d_z.n != cache.z.n {
        return Err(shape_err("conv_backward", d_z.dims_str(), cache.z.dims_str()));
    }
    let (k, p, f) = (layer.patch_len(), cache.out_h * cache.out_w, layer.filters);
    let mut dw = Matrix::zeros(f, k);
    let mut db = Matrix::zeros(f, 1);
    let mut d_input = need_input.then(|| {
        let s = cache.input_shape;
        ImageBatch::zeros(d_z.n, s.channels, s.height, s.width)
    });
    let mut dcols = vec![0.0; if need_input { k * p } else { 0 }];
    for s in 0..d_z.n {
        let dzs = &d_z.data[s * f * p..(s + 1) * f * p];
        let block = &cache.cols[s * k * p..(s + 1) * k * p];
        gemm_into(f, p, k, dzs, false, p, block, true, p, dw.data_mut(), 1.0);
        for (fi, row) in dzs.chunks(p).enumerate() {
            let v = db.get(fi, 0) + row.iter().sum::<f64>();
            db.set(fi, 0, v);
        }
        if let Some(di) = d_input.as_mut() {
            gemm_into(k, f, p, layer.weights.data(), true, k, dzs, false, p, &mut dcols, 0.0);
            layer.col2im(&dcols, cache.out_h, cache.out_w, di, s);
        }
    }
    Ok((dw, db, d_input))
}
