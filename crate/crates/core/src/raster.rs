//! Row-major image containers shared by every module.

use crate::error::{Error, Result};

/// Round half away from zero. `f64::round` already has these semantics;
/// the alias exists so every quantisation site reads the same way.
#[inline]
pub fn round_half_away(x: f64) -> f64 {
    x.round()
}

/// A pixel type with a fixed number of channels that can be interpolated.
pub trait Pixel: Copy + Default + Send + Sync + PartialEq + std::fmt::Debug + 'static {
    const CHANNELS: usize;

    fn channel(&self, c: usize) -> f64;

    /// Builds a pixel from real channel values, rounding and saturating
    /// for integer types.
    fn from_channels(f: impl Fn(usize) -> f64) -> Self;
}

impl Pixel for u8 {
    const CHANNELS: usize = 1;

    #[inline]
    fn channel(&self, _c: usize) -> f64 {
        *self as f64
    }

    #[inline]
    fn from_channels(f: impl Fn(usize) -> f64) -> Self {
        round_half_away(f(0)).clamp(0.0, 255.0) as u8
    }
}

impl Pixel for u16 {
    const CHANNELS: usize = 1;

    #[inline]
    fn channel(&self, _c: usize) -> f64 {
        *self as f64
    }

    #[inline]
    fn from_channels(f: impl Fn(usize) -> f64) -> Self {
        round_half_away(f(0)).clamp(0.0, 65535.0) as u16
    }
}

impl Pixel for f32 {
    const CHANNELS: usize = 1;

    #[inline]
    fn channel(&self, _c: usize) -> f64 {
        *self as f64
    }

    #[inline]
    fn from_channels(f: impl Fn(usize) -> f64) -> Self {
        f(0) as f32
    }
}

impl Pixel for [u8; 3] {
    const CHANNELS: usize = 3;

    #[inline]
    fn channel(&self, c: usize) -> f64 {
        self[c] as f64
    }

    #[inline]
    fn from_channels(f: impl Fn(usize) -> f64) -> Self {
        [
            u8::from_channels(|_| f(0)),
            u8::from_channels(|_| f(1)),
            u8::from_channels(|_| f(2)),
        ]
    }
}

/// Integer-valued pixels, used where accumulation must be exact.
pub trait IntPixel: Pixel {
    fn channel_int(&self, c: usize) -> u64;
    fn from_int_channels(f: impl Fn(usize) -> u64) -> Self;
}

impl IntPixel for u8 {
    fn channel_int(&self, _c: usize) -> u64 {
        *self as u64
    }
    fn from_int_channels(f: impl Fn(usize) -> u64) -> Self {
        f(0).min(255) as u8
    }
}

impl IntPixel for u16 {
    fn channel_int(&self, _c: usize) -> u64 {
        *self as u64
    }
    fn from_int_channels(f: impl Fn(usize) -> u64) -> Self {
        f(0).min(65535) as u16
    }
}

impl IntPixel for [u8; 3] {
    fn channel_int(&self, c: usize) -> u64 {
        self[c] as u64
    }
    fn from_int_channels(f: impl Fn(usize) -> u64) -> Self {
        [f(0).min(255) as u8, f(1).min(255) as u8, f(2).min(255) as u8]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Raster<P> {
    width: usize,
    height: usize,
    data: Vec<P>,
}

impl<P: Pixel> Raster<P> {
    pub fn new(width: usize, height: usize, data: Vec<P>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Dimension(format!(
                "raster {}x{} needs {} samples, got {}",
                width,
                height,
                width * height,
                data.len()
            )));
        }
        Ok(Raster { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: P) -> Self {
        Raster {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    /// Row-major: `f` is called for `y` in order, then `x`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> P) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Raster { width, height, data }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> P {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: P) {
        self.data[y * self.width + x] = value;
    }

    pub fn data(&self) -> &[P] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [P] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<P> {
        self.data
    }

    pub fn row(&self, y: usize) -> &[P] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    pub fn map<Q: Pixel>(&self, f: impl Fn(P) -> Q) -> Raster<Q> {
        Raster {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&p| f(p)).collect(),
        }
    }

    pub fn same_dims<Q>(&self, other: &Raster<Q>) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub(crate) fn ensure_same_dims<Q>(&self, other: &Raster<Q>, what: &str) -> Result<()> {
        if self.same_dims(other) {
            Ok(())
        } else {
            Err(Error::Dimension(format!(
                "{}: {}x{} vs {}x{}",
                what, self.width, self.height, other.width, other.height
            )))
        }
    }
}

pub type Gray8 = Raster<u8>;
pub type Gray16 = Raster<u16>;
pub type Rgb8 = Raster<[u8; 3]>;
pub type DepthMap = Raster<f32>;

impl DepthMap {
    #[inline]
    pub fn is_valid_depth(d: f32) -> bool {
        d.is_finite() && d > 0.0
    }
}
