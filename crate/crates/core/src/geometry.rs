//! Camera models, rigid transforms and fisheye rectification maps.
//!
//! Conventions used throughout the crate: camera frames are +z forward,
//! +x right, +y down; pixel `(u, v)` has `u` to the right and `v` down, and
//! integer coordinates sit on pixel centres.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::{self, Exec};
use crate::raster::{Pixel, Raster};

pub use nalgebra::Point3;

const ORTHO_TOL: f64 = 1e-9;

/// Continuous pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelCoord {
    pub u: f64,
    pub v: f64,
}

impl PixelCoord {
    pub fn new(u: f64, v: f64) -> Self {
        PixelCoord { u, v }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Distortion {
    None,
    /// Equidistant fisheye, `theta_d = theta * (1 + k1 theta^2 + k2 theta^4 + k3 theta^6 + k4 theta^8)`.
    Fisheye4([f64; 4]),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    pub distortion: Distortion,
}

impl CameraModel {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: usize,
        height: usize,
        distortion: Distortion,
    ) -> Result<Self> {
        let cam = CameraModel {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            distortion,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn pinhole(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        Self::new(fx, fy, cx, cy, width, height, Distortion::None)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0 && self.fx.is_finite() && self.fy.is_finite()) {
            return Err(Error::Domain(format!(
                "focal lengths must be positive and finite (fx={}, fy={})",
                self.fx, self.fy
            )));
        }
        if !(self.cx >= 0.0 && self.cx < self.width as f64 && self.cy >= 0.0 && self.cy < self.height as f64) {
            return Err(Error::Domain(format!(
                "principal point ({}, {}) outside {}x{} image",
                self.cx, self.cy, self.width, self.height
            )));
        }
        if let Distortion::Fisheye4(k) = self.distortion {
            if k.iter().any(|c| !c.is_finite()) {
                return Err(Error::Domain("fisheye coefficients must be finite".into()));
            }
        }
        Ok(())
    }

    /// The same intrinsics without distortion.
    pub fn as_pinhole(&self) -> CameraModel {
        CameraModel {
            distortion: Distortion::None,
            ..*self
        }
    }

    pub fn is_pinhole(&self) -> bool {
        matches!(self.distortion, Distortion::None)
    }

    fn require_pinhole(&self) -> Result<()> {
        if self.is_pinhole() {
            Ok(())
        } else {
            Err(Error::UnsupportedModel(
                "operation needs a rectified (distortion-free) camera".into(),
            ))
        }
    }

    /// True if `p` lies inside `[0, width-1] x [0, height-1]`.
    pub fn contains(&self, p: PixelCoord) -> bool {
        p.u >= 0.0 && p.v >= 0.0 && p.u <= (self.width - 1) as f64 && p.v <= (self.height - 1) as f64
    }
}

pub fn backproject(p: PixelCoord, depth: f64, cam: &CameraModel) -> Result<Point3<f64>> {
    cam.require_pinhole()?;
    if !(depth > 0.0 && depth.is_finite()) {
        return Err(Error::Domain(format!("depth must be positive and finite, got {depth}")));
    }
    Ok(Point3::new(
        (p.u - cam.cx) / cam.fx * depth,
        (p.v - cam.cy) / cam.fy * depth,
        depth,
    ))
}

/// Pinhole projection. The returned pixel may fall outside the image.
pub fn project(point: &Point3<f64>, cam: &CameraModel) -> Result<(PixelCoord, f64)> {
    cam.require_pinhole()?;
    if !(point.z > 0.0) {
        return Err(Error::BehindCamera(point.z));
    }
    let u = cam.fx * point.x / point.z + cam.cx;
    let v = cam.fy * point.y / point.z + cam.cy;
    Ok((PixelCoord::new(u, v), point.z))
}

/// A proper rigid motion `x -> R x + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl RigidTransform {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let gram = rotation.transpose() * rotation - Matrix3::identity();
        if gram.iter().any(|e| e.abs() > ORTHO_TOL) {
            return Err(Error::Domain("rotation is not orthonormal".into()));
        }
        if (rotation.determinant() - 1.0).abs() > ORTHO_TOL {
            return Err(Error::Domain("rotation has determinant != +1".into()));
        }
        if translation.iter().any(|t| !t.is_finite()) {
            return Err(Error::Domain("translation must be finite".into()));
        }
        Ok(RigidTransform { rotation, translation })
    }

    pub fn identity() -> Self {
        RigidTransform {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        RigidTransform {
            rotation: Matrix3::identity(),
            translation: t,
        }
    }

    /// Builds a transform from a row-major rotation and a translation.
    pub fn from_row_major(rotation: [f64; 9], translation: [f64; 3]) -> Result<Self> {
        Self::new(Matrix3::from_row_slice(&rotation), Vector3::from(translation))
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn transform_point(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    /// `self.compose(other)` applies `other` first, then `self`.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }
}

/// Maps normalised pinhole coordinates through the equidistant fisheye model.
#[inline]
pub fn fisheye_distort(x: f64, y: f64, k: &[f64; 4]) -> (f64, f64) {
    let r = (x * x + y * y).sqrt();
    if r == 0.0 {
        return (0.0, 0.0);
    }
    let theta = r.atan();
    let t2 = theta * theta;
    let theta_d = theta * (1.0 + t2 * (k[0] + t2 * (k[1] + t2 * (k[2] + t2 * k[3]))));
    let s = theta_d / r;
    (x * s, y * s)
}

/// Destination-to-source lookup table. `None` marks destination pixels with
/// no source sample.
#[derive(Debug, Clone, PartialEq)]
pub struct RectificationMap {
    width: usize,
    height: usize,
    entries: Vec<Option<PixelCoord>>,
}

impl RectificationMap {
    pub fn new(width: usize, height: usize, entries: Vec<Option<PixelCoord>>) -> Result<Self> {
        if entries.len() != width * height {
            return Err(Error::Dimension(format!(
                "map {}x{} needs {} entries, got {}",
                width,
                height,
                width * height,
                entries.len()
            )));
        }
        Ok(RectificationMap { width, height, entries })
    }

    pub fn identity(width: usize, height: usize) -> Self {
        let entries = (0..height)
            .flat_map(|y| (0..width).map(move |x| Some(PixelCoord::new(x as f64, y as f64))))
            .collect();
        RectificationMap { width, height, entries }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, x: usize, y: usize) -> Option<PixelCoord> {
        self.entries[y * self.width + x]
    }

    pub fn entries(&self) -> &[Option<PixelCoord>] {
        &self.entries
    }

    pub fn valid_count(&self) -> usize {
        self.entries.iter().filter(|e| e.is_some()).count()
    }
}

/// Source pixel seen by destination pixel `(x, y)`, or `None` if it falls
/// outside the source image.
pub fn rectification_source(src: &CameraModel, dst: &CameraModel, x: usize, y: usize) -> Option<PixelCoord> {
    let dx = x as f64 - dst.cx;
    let dy = y as f64 - dst.cy;
    let p = match src.distortion {
        // scale ratios keep equal intrinsics exact
        Distortion::None => PixelCoord::new(src.cx + dx * (src.fx / dst.fx), src.cy + dy * (src.fy / dst.fy)),
        Distortion::Fisheye4(k) => {
            let (xd, yd) = fisheye_distort(dx / dst.fx, dy / dst.fy, &k);
            PixelCoord::new(src.fx * xd + src.cx, src.fy * yd + src.cy)
        }
    };
    src.contains(p).then_some(p)
}

/// Builds the lookup table that rectifies images from `src` into the pinhole
/// model `dst`. A distortion-free `src` short-circuits to a plain pinhole
/// re-projection.
pub fn build_rectification_map(src: &CameraModel, dst: &CameraModel) -> Result<RectificationMap> {
    build_rectification_map_with(src, dst, Exec::default())
}

pub fn build_rectification_map_with(src: &CameraModel, dst: &CameraModel, exec: Exec) -> Result<RectificationMap> {
    src.validate()?;
    dst.validate()?;
    dst.require_pinhole()?;
    let mut entries = vec![None; dst.width * dst.height];
    par::for_each_row(exec, &mut entries, dst.width, |y, row| {
        for (x, e) in row.iter_mut().enumerate() {
            *e = rectification_source(src, dst, x, y);
        }
    });
    Ok(RectificationMap {
        width: dst.width,
        height: dst.height,
        entries,
    })
}

/// Bilinear sample of `img` at `p`; `p` must lie inside `[0, w-1] x [0, h-1]`.
#[inline]
pub fn sample_bilinear<P: Pixel>(img: &Raster<P>, p: PixelCoord) -> P {
    let (w, h) = img.dims();
    let x0 = (p.u.floor() as usize).min(w - 1);
    let y0 = (p.v.floor() as usize).min(h - 1);
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let ax = p.u - x0 as f64;
    let ay = p.v - y0 as f64;
    let (p00, p10, p01, p11) = (img.get(x0, y0), img.get(x1, y0), img.get(x0, y1), img.get(x1, y1));
    P::from_channels(|c| {
        let top = p00.channel(c) * (1.0 - ax) + p10.channel(c) * ax;
        let bottom = p01.channel(c) * (1.0 - ax) + p11.channel(c) * ax;
        top * (1.0 - ay) + bottom * ay
    })
}

/// Resamples `img` through `map`. Returns the output and a validity mask
/// (`true` where the map had a source sample).
pub fn remap_bilinear<P: Pixel>(img: &Raster<P>, map: &RectificationMap) -> Result<(Raster<P>, Raster<u8>)> {
    remap_bilinear_with(img, map, Exec::default())
}

pub fn remap_bilinear_with<P: Pixel>(
    img: &Raster<P>,
    map: &RectificationMap,
    exec: Exec,
) -> Result<(Raster<P>, Raster<u8>)> {
    let (w, h) = img.dims();
    if w == 0 || h == 0 {
        return Err(Error::Dimension("cannot remap an empty image".into()));
    }
    let mut out = vec![(P::default(), 0u8); map.width * map.height];
    par::for_each_row(exec, &mut out, map.width, |y, row| {
        for (x, o) in row.iter_mut().enumerate() {
            if let Some(p) = map.get(x, y) {
                if p.u >= 0.0 && p.v >= 0.0 && p.u <= (w - 1) as f64 && p.v <= (h - 1) as f64 {
                    *o = (sample_bilinear(img, p), 1);
                }
            }
        }
    });
    let (pixels, mask): (Vec<P>, Vec<u8>) = out.into_iter().unzip();
    Ok((
        Raster::new(map.width, map.height, pixels)?,
        Raster::new(map.width, map.height, mask)?,
    ))
}
