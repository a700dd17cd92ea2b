//! Contrast-limited adaptive histogram equalisation on 8-bit rasters.
//!
//! Tile boundaries along an axis of length `n` split into `t` tiles are
//! `floor(i * n / t)`. Each tile histogram is clipped at
//! `max(1, floor(clip * tile_pixels / 256))` counts; the clipped excess is
//! spread evenly over all bins and the integer residual is added one count
//! at a time on a regular stride starting at bin 0. A tile's lookup table is
//! `round(255 * cdf / tile_pixels)`. Output pixels interpolate the tables of
//! the (up to) four nearest tile centres; pixels outside the outermost
//! centres clamp to the nearest tile.

use crate::error::{Error, Result};
use crate::par::{self, Exec};
use crate::raster::{round_half_away, Gray8};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClaheParams {
    pub tiles_x: usize,
    pub tiles_y: usize,
    /// Relative clip limit; `f64::INFINITY` disables clipping.
    pub clip_limit: f64,
}

impl Default for ClaheParams {
    fn default() -> Self {
        ClaheParams {
            tiles_x: 8,
            tiles_y: 8,
            clip_limit: 2.0,
        }
    }
}

fn boundaries(len: usize, tiles: usize) -> Vec<usize> {
    (0..=tiles).map(|i| i * len / tiles).collect()
}

/// Interpolation position along one axis: `(lower tile, upper tile, weight of upper)`.
fn axis_weights(len: usize, bounds: &[usize]) -> Vec<(usize, usize, f64)> {
    let centres: Vec<f64> = bounds.windows(2).map(|b| (b[0] + b[1] - 1) as f64 / 2.0).collect();
    let last = centres.len() - 1;
    (0..len)
        .map(|x| {
            let xf = x as f64;
            if xf <= centres[0] {
                (0, 0, 0.0)
            } else if xf >= centres[last] {
                (last, last, 0.0)
            } else {
                let i = centres.iter().rposition(|&c| c <= xf).unwrap();
                (i, i + 1, (xf - centres[i]) / (centres[i + 1] - centres[i]))
            }
        })
        .collect()
}

pub(crate) fn clip_histogram(hist: &mut [u32; 256], limit: u32) {
    let mut excess: u32 = 0;
    for h in hist.iter_mut() {
        if *h > limit {
            excess += *h - limit;
            *h = limit;
        }
    }
    let batch = excess / 256;
    let mut residual = excess % 256;
    for h in hist.iter_mut() {
        *h += batch;
    }
    if residual > 0 {
        let step = (256 / residual as usize).max(1);
        let mut i = 0;
        while i < 256 && residual > 0 {
            hist[i] += 1;
            residual -= 1;
            i += step;
        }
    }
}

fn tile_lut(img: &Gray8, x0: usize, x1: usize, y0: usize, y1: usize, clip_limit: f64) -> [u8; 256] {
    let mut hist = [0u32; 256];
    for y in y0..y1 {
        for &v in &img.row(y)[x0..x1] {
            hist[v as usize] += 1;
        }
    }
    let n = ((x1 - x0) * (y1 - y0)) as u64;
    if clip_limit.is_finite() {
        let limit = ((clip_limit * n as f64 / 256.0).floor() as u32).max(1);
        clip_histogram(&mut hist, limit);
    }
    let mut lut = [0u8; 256];
    let mut cdf: u64 = 0;
    for (v, &h) in hist.iter().enumerate() {
        cdf += h as u64;
        lut[v] = ((255 * cdf * 2 + n) / (2 * n)).min(255) as u8;
    }
    lut
}

pub fn clahe(img: &Gray8, params: ClaheParams) -> Result<Gray8> {
    clahe_with(img, params, Exec::default())
}

pub fn clahe_with(img: &Gray8, params: ClaheParams, exec: Exec) -> Result<Gray8> {
    if params.tiles_x < 1 || params.tiles_y < 1 {
        return Err(Error::Domain("CLAHE needs at least one tile per axis".into()));
    }
    if !(params.clip_limit >= 1.0) {
        return Err(Error::Domain(format!("CLAHE clip limit must be >= 1, got {}", params.clip_limit)));
    }
    let (w, h) = img.dims();
    if w == 0 || h == 0 {
        return Ok(img.clone());
    }
    let (tx, ty) = if params.tiles_x > w || params.tiles_y > h {
        (1, 1)
    } else {
        (params.tiles_x, params.tiles_y)
    };
    let bx = boundaries(w, tx);
    let by = boundaries(h, ty);
    let luts: Vec<[u8; 256]> = par::map_indices(exec, tx * ty, |t| {
        let (i, j) = (t % tx, t / tx);
        tile_lut(img, bx[i], bx[i + 1], by[j], by[j + 1], params.clip_limit)
    });
    let wx = axis_weights(w, &bx);
    let wy = axis_weights(h, &by);

    let mut out = vec![0u8; w * h];
    par::for_each_row(exec, &mut out, w, |y, row| {
        let (j0, j1, ay) = wy[y];
        let src = img.row(y);
        for (x, o) in row.iter_mut().enumerate() {
            let (i0, i1, ax) = wx[x];
            let v = src[x] as usize;
            let l00 = luts[j0 * tx + i0][v] as f64;
            let l01 = luts[j0 * tx + i1][v] as f64;
            let l10 = luts[j1 * tx + i0][v] as f64;
            let l11 = luts[j1 * tx + i1][v] as f64;
            let top = l00 * (1.0 - ax) + l01 * ax;
            let bottom = l10 * (1.0 - ax) + l11 * ax;
            *o = round_half_away(top * (1.0 - ay) + bottom * ay).clamp(0.0, 255.0) as u8;
        }
    });
    Gray8::new(w, h, out)
}
