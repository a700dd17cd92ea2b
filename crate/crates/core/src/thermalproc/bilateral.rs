//! Brute-force bilateral filter with border replication.

use crate::error::{Error, Result};
use crate::par::{self, Exec};
use crate::raster::{round_half_away, Gray8};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BilateralParams {
    pub radius: usize,
    pub sigma_color: f64,
    pub sigma_space: f64,
}

impl Default for BilateralParams {
    fn default() -> Self {
        BilateralParams {
            radius: 4,
            sigma_color: 25.0,
            sigma_space: 5.0,
        }
    }
}

pub fn bilateral_filter(img: &Gray8, params: BilateralParams) -> Result<Gray8> {
    bilateral_filter_with(img, params, Exec::default())
}

pub fn bilateral_filter_with(img: &Gray8, params: BilateralParams, exec: Exec) -> Result<Gray8> {
    let BilateralParams {
        radius,
        sigma_color,
        sigma_space,
    } = params;
    if radius < 1 {
        return Err(Error::Domain("bilateral radius must be >= 1".into()));
    }
    if !(sigma_color > 0.0 && sigma_space > 0.0) {
        return Err(Error::Domain(format!(
            "bilateral sigmas must be positive (color={sigma_color}, space={sigma_space})"
        )));
    }
    let (w, h) = img.dims();
    if w == 0 || h == 0 {
        return Ok(img.clone());
    }
    let r = radius as isize;
    let side = 2 * radius + 1;
    let mut spatial = Vec::with_capacity(side * side);
    for dy in -r..=r {
        for dx in -r..=r {
            spatial.push((-((dx * dx + dy * dy) as f64) / (2.0 * sigma_space * sigma_space)).exp());
        }
    }
    let range: Vec<f64> = (0..256i32)
        .map(|d| (-((d * d) as f64) / (2.0 * sigma_color * sigma_color)).exp())
        .collect();

    let mut out = vec![0u8; w * h];
    par::for_each_row(exec, &mut out, w, |y, row| {
        for (x, o) in row.iter_mut().enumerate() {
            let centre = img.get(x, y) as i32;
            let mut num = 0.0;
            let mut den = 0.0;
            let mut k = 0;
            for dy in -r..=r {
                let yy = (y as isize + dy).clamp(0, h as isize - 1) as usize;
                let src = img.row(yy);
                for dx in -r..=r {
                    let xx = (x as isize + dx).clamp(0, w as isize - 1) as usize;
                    let v = src[xx] as i32;
                    let wgt = spatial[k] * range[(v - centre).unsigned_abs() as usize];
                    num += wgt * v as f64;
                    den += wgt;
                    k += 1;
                }
            }
            *o = round_half_away(num / den).clamp(0.0, 255.0) as u8;
        }
    });
    Gray8::new(w, h, out)
}
