//! Depth-based warping of rectified RGB into the thermal camera's pixel grid.
//!
//! Every valid RGB depth pixel is lifted to 3D, moved into the thermal
//! frame and projected with the thermal intrinsics. The projected samples
//! are rasterised in two passes: the first records the nearest depth per
//! thermal pixel, the second bilinearly splats every sample whose depth is
//! within `depth_tol` (relative) of that nearest depth. Pixels no sample
//! reaches stay empty; nothing is inpainted.
//!
//! Splat positions are quantised to 1/4096 pixel, so each sample carries an
//! integer weight of exactly 2^24 split over its four neighbours. All
//! accumulation is integer, which makes the output independent of sample
//! order and of the execution policy.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::geometry::{backproject, project, CameraModel, PixelCoord, RigidTransform};
use crate::par::{self, Exec};
use crate::raster::{DepthMap, Gray8, IntPixel, Pixel, Raster, Rgb8};

pub const SUBPIXEL_BITS: u32 = 12;
const SUBPIXEL: u64 = 1 << SUBPIXEL_BITS;
/// Total integer weight of one sample.
pub const WEIGHT_SCALE: u64 = SUBPIXEL * SUBPIXEL;

pub const DEFAULT_DEPTH_TOL: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplatSample<P> {
    pub u: f64,
    pub v: f64,
    pub depth: f64,
    pub payload: P,
}

/// Cameras and extrinsics needed to register one RGB-thermal rig.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rig {
    pub rgb: CameraModel,
    pub thermal: CameraModel,
    /// Maps points from the RGB camera frame into the thermal camera frame.
    pub rgb_to_thermal: RigidTransform,
}

/// The four integer pixels a sample at `(u, v)` lands on, with their
/// quantised weights. Neighbours may be outside the image.
#[inline]
pub fn splat_footprint(u: f64, v: f64) -> [(i64, i64, u64); 4] {
    let x0 = u.floor();
    let y0 = v.floor();
    let fx = ((u - x0) * SUBPIXEL as f64).round() as u64;
    let fy = ((v - y0) * SUBPIXEL as f64).round() as u64;
    let (x0, y0) = (x0 as i64, y0 as i64);
    [
        (x0, y0, (SUBPIXEL - fx) * (SUBPIXEL - fy)),
        (x0 + 1, y0, fx * (SUBPIXEL - fy)),
        (x0, y0 + 1, (SUBPIXEL - fx) * fy),
        (x0 + 1, y0 + 1, fx * fy),
    ]
}

pub fn lift_rgb<P: Pixel>(depth: &DepthMap, rgb: &Raster<P>, rig: &Rig) -> Result<Vec<SplatSample<P>>> {
    lift_rgb_with(depth, rgb, rig, Exec::default())
}

pub fn lift_rgb_with<P: Pixel>(depth: &DepthMap, rgb: &Raster<P>, rig: &Rig, exec: Exec) -> Result<Vec<SplatSample<P>>> {
    depth.ensure_same_dims(rgb, "depth and rgb")?;
    if depth.dims() != (rig.rgb.width, rig.rgb.height) {
        return Err(Error::Dimension(format!(
            "rgb image is {}x{} but the rgb camera is {}x{}",
            depth.width(),
            depth.height(),
            rig.rgb.width,
            rig.rgb.height
        )));
    }
    if !rig.rgb.is_pinhole() || !rig.thermal.is_pinhole() {
        return Err(Error::UnsupportedModel("registration needs rectified cameras".into()));
    }
    let (tw, th) = (rig.thermal.width as f64, rig.thermal.height as f64);
    let rows = par::map_indices(exec, depth.height(), |y| {
        let mut out = Vec::new();
        for x in 0..depth.width() {
            let d = depth.get(x, y);
            if !DepthMap::is_valid_depth(d) {
                continue;
            }
            let p = backproject(PixelCoord::new(x as f64, y as f64), d as f64, &rig.rgb)
                .expect("valid depth on a pinhole camera");
            let q = rig.rgb_to_thermal.transform_point(&p);
            let Ok((px, z)) = project(&q, &rig.thermal) else {
                continue;
            };
            if px.u > -1.0 && px.v > -1.0 && px.u < tw && px.v < th {
                out.push(SplatSample {
                    u: px.u,
                    v: px.v,
                    depth: z,
                    payload: rgb.get(x, y),
                });
            }
        }
        out
    });
    Ok(rows.into_iter().flatten().collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplatOutput<P> {
    pub payload: Raster<P>,
    /// Accumulated splat weight per pixel; zero exactly where nothing landed.
    pub mask: Raster<f32>,
    /// Nearest depth per pixel, zero where nothing landed.
    pub depth: DepthMap,
}

pub fn zbuffer_splat<P: IntPixel>(
    samples: &[SplatSample<P>],
    width: usize,
    height: usize,
    depth_tol: f64,
) -> Result<SplatOutput<P>> {
    zbuffer_splat_with(samples, width, height, depth_tol, Exec::default())
}

pub fn zbuffer_splat_with<P: IntPixel>(
    samples: &[SplatSample<P>],
    width: usize,
    height: usize,
    depth_tol: f64,
    exec: Exec,
) -> Result<SplatOutput<P>> {
    if width == 0 || height == 0 {
        return Err(Error::Dimension("splat target must be non-empty".into()));
    }
    if !(0.0..1.0).contains(&depth_tol) {
        return Err(Error::Domain(format!("depth_tol must be in [0, 1), got {depth_tol}")));
    }
    if let Some(s) = samples.iter().find(|s| !(s.depth > 0.0 && s.depth.is_finite())) {
        return Err(Error::Domain(format!("splat sample with invalid depth {}", s.depth)));
    }
    let n = width * height;
    let channels = P::CHANNELS;
    let in_bounds = |x: i64, y: i64| x >= 0 && y >= 0 && (x as usize) < width && (y as usize) < height;

    // Pass 1: nearest depth. Positive f64 values order like their bit patterns.
    let zbuf: Vec<AtomicU64> = (0..n).map(|_| AtomicU64::new(f64::INFINITY.to_bits())).collect();
    par::for_each(exec, samples, |s| {
        let bits = s.depth.to_bits();
        for (x, y, w) in splat_footprint(s.u, s.v) {
            if w > 0 && in_bounds(x, y) {
                zbuf[y as usize * width + x as usize].fetch_min(bits, Ordering::Relaxed);
            }
        }
    });

    // Pass 2: splat the samples that pass the depth test.
    let weight: Vec<AtomicU64> = (0..n).map(|_| AtomicU64::new(0)).collect();
    let acc: Vec<AtomicU64> = (0..n * channels).map(|_| AtomicU64::new(0)).collect();
    par::for_each(exec, samples, |s| {
        for (x, y, w) in splat_footprint(s.u, s.v) {
            if w == 0 || !in_bounds(x, y) {
                continue;
            }
            let idx = y as usize * width + x as usize;
            let nearest = f64::from_bits(zbuf[idx].load(Ordering::Relaxed));
            if s.depth <= nearest * (1.0 + depth_tol) {
                weight[idx].fetch_add(w, Ordering::Relaxed);
                for c in 0..channels {
                    acc[idx * channels + c].fetch_add(w * s.payload.channel_int(c), Ordering::Relaxed);
                }
            }
        }
    });

    let mut payload = Vec::with_capacity(n);
    let mut mask = Vec::with_capacity(n);
    let mut depth = Vec::with_capacity(n);
    for idx in 0..n {
        let wsum = weight[idx].load(Ordering::Relaxed);
        if wsum == 0 {
            payload.push(P::default());
            mask.push(0.0f32);
            depth.push(0.0f32);
            continue;
        }
        payload.push(P::from_int_channels(|c| {
            let a = acc[idx * channels + c].load(Ordering::Relaxed);
            (2 * a + wsum) / (2 * wsum)
        }));
        mask.push((wsum as f64 / WEIGHT_SCALE as f64) as f32);
        depth.push(f64::from_bits(zbuf[idx].load(Ordering::Relaxed)) as f32);
    }
    Ok(SplatOutput {
        payload: Raster::new(width, height, payload)?,
        mask: Raster::new(width, height, mask)?,
        depth: Raster::new(width, height, depth)?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegisteredPair<P> {
    pub warped: Raster<P>,
    pub mask: Raster<f32>,
    pub depth: DepthMap,
    pub thermal: Gray8,
}

pub fn register_pair<P: IntPixel>(
    rgb: &Raster<P>,
    depth: &DepthMap,
    rig: &Rig,
    thermal: &Gray8,
    depth_tol: f64,
) -> Result<RegisteredPair<P>> {
    register_pair_with(rgb, depth, rig, thermal, depth_tol, Exec::default())
}

pub fn register_pair_with<P: IntPixel>(
    rgb: &Raster<P>,
    depth: &DepthMap,
    rig: &Rig,
    thermal: &Gray8,
    depth_tol: f64,
    exec: Exec,
) -> Result<RegisteredPair<P>> {
    if thermal.dims() != (rig.thermal.width, rig.thermal.height) {
        return Err(Error::Dimension(format!(
            "thermal image is {}x{} but the thermal camera is {}x{}",
            thermal.width(),
            thermal.height(),
            rig.thermal.width,
            rig.thermal.height
        )));
    }
    let samples = lift_rgb_with(depth, rgb, rig, exec)?;
    let out = zbuffer_splat_with(&samples, rig.thermal.width, rig.thermal.height, depth_tol, exec)?;
    Ok(RegisteredPair {
        warped: out.payload,
        mask: out.mask,
        depth: out.depth,
        thermal: thermal.clone(),
    })
}

/// `round((1 - alpha) * a + alpha * b)` per channel. Single-channel `a` is
/// broadcast to all three channels.
pub fn alpha_blend<A: Pixel>(a: &Raster<A>, b: &Rgb8, alpha: f64) -> Result<Rgb8> {
    a.ensure_same_dims(b, "alpha blend")?;
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Domain(format!("alpha must be in [0, 1], got {alpha}")));
    }
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(pa, pb)| {
            <[u8; 3]>::from_channels(|c| (1.0 - alpha) * pa.channel(c.min(A::CHANNELS - 1)) + alpha * pb.channel(c))
        })
        .collect();
    Raster::new(a.width(), a.height(), data)
}
