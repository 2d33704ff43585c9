use serde::{Deserialize, Serialize};

use crate::environments::RgbFrame;
use crate::error::{contract, Result};

/// Side of a preprocessed frame.
pub const FRAME_SIZE: usize = 84;

/// Luminance weights for red, green and blue.
pub const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

/// Grayscale frame with intensities in `[0, 1]`, row-major.
pub type Frame = Vec<f32>;

/// Rectangle kept from the raw screen.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Crop {
    pub top: usize,
    pub left: usize,
    pub height: usize,
    pub width: usize,
}

impl Crop {
    pub fn full(frame: &RgbFrame) -> Self {
        Self {
            top: 0,
            left: 0,
            height: frame.height,
            width: frame.width,
        }
    }
}

/// Grayscale, crop, nearest-neighbour resample to `size x size`, scale to
/// `[0, 1]`. Output pixel `(i, j)` reads source `(floor(i*h/size), floor(j*w/size))`
/// of the cropped region.
pub fn preprocess(raw: &RgbFrame, crop: Crop, size: usize) -> Result<Frame> {
    if crop.height == 0 || crop.width == 0 || crop.top + crop.height > raw.height || crop.left + crop.width > raw.width {
        return Err(contract(format!(
            "crop {crop:?} outside a {}x{} frame",
            raw.height, raw.width
        )));
    }
    let mut out = Vec::with_capacity(size * size);
    for i in 0..size {
        let r = crop.top + i * crop.height / size;
        for j in 0..size {
            let c = crop.left + j * crop.width / size;
            let [red, green, blue] = raw.pixel(r, c);
            let y = LUMA[0] * red as f64 + LUMA[1] * green as f64 + LUMA[2] * blue as f64;
            out.push((y / 255.0) as f32);
        }
    }
    Ok(out)
}
