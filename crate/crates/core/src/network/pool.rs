use serde::{Deserialize, Serialize};

use super::conv::conv_output_dim;
use super::tensor::{ImageBatch, ImageShape};
use crate::error::{shape_err, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolKind {
    Max,
    Average,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolLayer {
    pub window: usize,
    pub stride: usize,
    pub kind: PoolKind,
}

/// Routing information for the backward pass.
#[derive(Clone, Debug)]
pub struct PoolCache {
    pub input_shape: ImageShape,
    pub out_shape: ImageShape,
    /// For max pooling, the flat input offset of each output's maximum.
    pub argmax: Vec<usize>,
}

impl PoolLayer {
    pub fn output_shape(&self, input: ImageShape) -> Result<ImageShape> {
        let h = conv_output_dim(input.height, self.window, self.stride, 0);
        let w = conv_output_dim(input.width, self.window, self.stride, 0);
        match (h, w) {
            (Some(height), Some(width)) => Ok(ImageShape {
                channels: input.channels,
                height,
                width,
            }),
            _ => Err(shape_err(
                "pool",
                input,
                format!("window {} stride {}", self.window, self.stride),
            )),
        }
    }
}

pub fn pool_forward(layer: &PoolLayer, input: &ImageBatch) -> Result<(ImageBatch, PoolCache)> {
    if layer.window == 0 || layer.stride == 0 {
        return Err(shape_err("pool", input.dims_str(), "zero window or stride"));
    }
    let out_shape = layer.output_shape(input.dims())?;
    let mut out = ImageBatch::zeros(input.n, out_shape.channels, out_shape.height, out_shape.width);
    let mut argmax = Vec::new();
    let area = (layer.window * layer.window) as f64;
    let mut o = 0;
    for s in 0..input.n {
        for c in 0..input.channels {
            for oi in 0..out_shape.height {
                for oj in 0..out_shape.width {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_at = 0;
                    let mut sum = 0.0;
                    for di in 0..layer.window {
                        for dj in 0..layer.window {
                            let (r, col) = (oi * layer.stride + di, oj * layer.stride + dj);
                            let idx = ((s * input.channels + c) * input.height + r) * input.width + col;
                            let v = input.data[idx];
                            sum += v;
                            if v > best {
                                best = v;
                                best_at = idx;
                            }
                        }
                    }
                    out.data[o] = match layer.kind {
                        PoolKind::Max => {
                            argmax.push(best_at);
                            best
                        }
                        PoolKind::Average => sum / area,
                    };
                    o += 1;
                }
            }
        }
    }
    Ok((
        out,
        PoolCache {
            input_shape: input.dims(),
            out_shape,
            argmax,
        },
    ))
}

/// Max pooling sends each gradient to the recorded maximum; average pooling
/// spreads it evenly over the window.
pub fn pool_backward(layer: &PoolLayer, cache: &PoolCache, d_out: &ImageBatch) -> Result<ImageBatch> {
    if d_out.dims() != cache.out_shape {
        return Err(shape_err("pool_backward", d_out.dims_str(), cache.out_shape));
    }
    let s = cache.input_shape;
    let mut d_in = ImageBatch::zeros(d_out.n, s.channels, s.height, s.width);
    match layer.kind {
        PoolKind::Max => {
            if cache.argmax.len() != d_out.data.len() {
                return Err(shape_err("pool_backward", d_out.dims_str(), "stale mask"));
            }
            for (g, &idx) in d_out.data.iter().zip(&cache.argmax) {
                d_in.data[idx] += g;
            }
        }
        PoolKind::Average => {
            let share = 1.0 / (layer.window * layer.window) as f64;
            let o = cache.out_shape;
            let mut k = 0;
            for n in 0..d_out.n {
                for c in 0..o.channels {
                    for oi in 0..o.height {
                        for oj in 0..o.width {
                            let g = d_out.data[k] * share;
                            k += 1;
                            for di in 0..layer.window {
                                for dj in 0..layer.window {
                                    let (r, col) = (oi * layer.stride + di, oj * layer.stride + dj);
                                    d_in.data[((n * s.channels + c) * s.height + r) * s.width + col] += g;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(d_in)
}
