use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Result};
use crate::numerics::Matrix;

/// Batch of multi-channel images stored `[sample][channel][row][col]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageBatch {
    pub n: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl ImageBatch {
    pub fn zeros(n: usize, channels: usize, height: usize, width: usize) -> Self {
        Self {
            n,
            channels,
            height,
            width,
            data: vec![0.0; n * channels * height * width],
        }
    }

    pub fn from_vec(n: usize, channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * channels * height * width {
            return Err(shape_err(
                "ImageBatch::from_vec",
                format!("{n}x{channels}x{height}x{width}"),
                format!("{} elements", data.len()),
            ));
        }
        Ok(Self {
            n,
            channels,
            height,
            width,
            data,
        })
    }

    pub fn sample_len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        let len = self.sample_len();
        &self.data[i * len..(i + 1) * len]
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, r: usize, col: usize) -> f64 {
        self.data[((n * self.channels + c) * self.height + r) * self.width + col]
    }

    pub fn dims(&self) -> ImageShape {
        ImageShape {
            channels: self.channels,
            height: self.height,
            width: self.width,
        }
    }

    pub fn dims_str(&self) -> String {
        format!("{}x{}x{}x{}", self.n, self.channels, self.height, self.width)
    }

    /// Flattens each sample channel-major, then row-major, into one column.
    pub fn flatten(&self) -> Matrix {
        let len = self.sample_len();
        let mut m = Matrix::zeros(len, self.n);
        let out = m.data_mut();
        for s in 0..self.n {
            for (f, v) in self.sample(s).iter().enumerate() {
                out[f * self.n + s] = *v;
            }
        }
        m
    }

    /// Inverse of [`ImageBatch::flatten`].
    pub fn unflatten(m: &Matrix, shape: ImageShape) -> Result<Self> {
        if m.rows() != shape.len() {
            return Err(shape_err("unflatten", m.shape_str(), shape));
        }
        let n = m.cols();
        let mut img = ImageBatch::zeros(n, shape.channels, shape.height, shape.width);
        let len = shape.len();
        for s in 0..n {
            for f in 0..len {
                img.data[s * len + f] = m.get(f, s);
            }
        }
        Ok(img)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageShape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl ImageShape {
    pub fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl std::fmt::Display for ImageShape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.channels, self.height, self.width)
    }
}

/// Input or intermediate value flowing through a network.
#[derive(Clone, Debug, PartialEq)]
pub enum Tensor {
    /// Features x batch.
    Flat(Matrix),
    Images(ImageBatch),
}

impl Tensor {
    pub fn batch(&self) -> usize {
        match self {
            Tensor::Flat(m) => m.cols(),
            Tensor::Images(b) => b.n,
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Tensor::Flat(m) => m.shape_str(),
            Tensor::Images(b) => b.dims_str(),
        }
    }

    pub fn into_flat(self) -> Matrix {
        match self {
            Tensor::Flat(m) => m,
            Tensor::Images(b) => b.flatten(),
        }
    }
}

impl From<Matrix> for Tensor {
    fn from(m: Matrix) -> Self {
        Tensor::Flat(m)
    }
}

impl From<ImageBatch> for Tensor {
    fn from(b: ImageBatch) -> Self {
        Tensor::Images(b)
    }
}
