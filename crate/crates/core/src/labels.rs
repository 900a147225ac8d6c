//! Integer label images and binary boundary maps.

use crate::error::{config, shape, Result};
use crate::io::pgm::GrayImage;
use crate::tensor::Tensor;

/// Default value marking pixels excluded from losses and metrics.
pub const DEFAULT_IGNORE: u16 = 255;

/// A 2-D grid of class IDs stored row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    height: usize,
    width: usize,
    data: Vec<u16>,
    ignore: Option<u16>,
}

impl LabelMap {
    pub fn new(height: usize, width: usize, data: Vec<u16>, ignore: Option<u16>) -> Result<Self> {
        if data.len() != height * width {
            return Err(shape(format!(
                "label map {height}x{width} needs {} values, got {}",
                height * width,
                data.len()
            )));
        }
        Ok(Self { height, width, data, ignore })
    }

    pub fn from_fn(height: usize, width: usize, ignore: Option<u16>, mut f: impl FnMut(usize, usize) -> u16) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(f(y, x));
            }
        }
        Self { height, width, data, ignore }
    }

    pub fn uniform(height: usize, width: usize, value: u16) -> Self {
        Self::from_fn(height, width, Some(DEFAULT_IGNORE), |_, _| value)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[u16] {
        &self.data
    }

    pub fn ignore_value(&self) -> Option<u16> {
        self.ignore
    }

    pub fn with_ignore(mut self, ignore: Option<u16>) -> Self {
        self.ignore = ignore;
        self
    }

    pub fn get(&self, y: usize, x: usize) -> u16 {
        self.data[y * self.width + x]
    }

    pub fn is_ignored(&self, v: u16) -> bool {
        self.ignore == Some(v)
    }

    /// Number of pixels that are not the ignore value.
    pub fn valid_count(&self) -> usize {
        self.data.iter().filter(|&&v| !self.is_ignored(v)).count()
    }

    /// Checks every non-ignored label is a valid class index.
    pub fn validate(&self, num_classes: usize) -> Result<()> {
        match self.data.iter().position(|&v| !self.is_ignored(v) && v as usize >= num_classes) {
            Some(i) => Err(config(format!(
                "label {} at ({}, {}) is not below {num_classes} classes",
                self.data[i],
                i / self.width,
                i % self.width
            ))),
            None => Ok(()),
        }
    }

    pub fn from_image(img: &GrayImage, ignore: Option<u16>) -> Self {
        let data = img.pixels.iter().map(|&p| p as u16).collect();
        Self { height: img.height, width: img.width, data, ignore }
    }

    pub fn to_image(&self) -> Result<GrayImage> {
        let pixels = self
            .data
            .iter()
            .map(|&v| u8::try_from(v).map_err(|_| config(format!("label {v} does not fit in 8 bits"))))
            .collect::<Result<_>>()?;
        Ok(GrayImage { width: self.width, height: self.height, pixels })
    }
}

/// Binary map, 1 on boundary pixels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundaryMap {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl BoundaryMap {
    /// Values other than 0 and 1 are rejected.
    pub fn new(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != height * width {
            return Err(shape(format!(
                "boundary map {height}x{width} needs {} values, got {}",
                height * width,
                data.len()
            )));
        }
        if data.iter().any(|&v| v > 1) {
            return Err(config("boundary map values must be 0 or 1"));
        }
        Ok(Self { height, width, data })
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(f(y, x) as u8);
            }
        }
        Self { height, width, data }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, y: usize, x: usize) -> bool {
        self.data[y * self.width + x] != 0
    }

    pub fn count(&self) -> usize {
        self.data.iter().map(|&v| v as usize).sum()
    }

    /// Renders boundaries as 255 on a 0 background.
    pub fn to_image(&self) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            pixels: self.data.iter().map(|&v| v * 255).collect(),
        }
    }

    /// Reads a {0, 255} image; any other value is a configuration error.
    pub fn from_image(img: &GrayImage) -> Result<Self> {
        let data = img
            .pixels
            .iter()
            .map(|&p| match p {
                0 => Ok(0),
                255 => Ok(1),
                v => Err(config(format!("boundary image contains value {v}, expected 0 or 255"))),
            })
            .collect::<Result<_>>()?;
        Ok(Self { height: img.height, width: img.width, data })
    }

    /// As a `(1, 1, h, w)` tensor of 0.0/1.0.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_fn([1, 1, self.height, self.width], |_, _, y, x| self.data[y * self.width + x] as f32)
    }
}
