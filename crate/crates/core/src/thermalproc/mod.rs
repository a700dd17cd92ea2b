//! 16-bit radiometric thermal frames to trainable 8-bit images, and
//! flat-field-correction (FFC) frame filtering.

mod bilateral;
mod clahe;

pub use bilateral::{bilateral_filter, bilateral_filter_with, BilateralParams};
pub use clahe::{clahe, clahe_with, ClaheParams};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::Exec;
use crate::raster::{round_half_away, Gray16, Gray8};

#[derive(Debug, Clone, PartialEq)]
pub struct ThermalFrame16 {
    pub image: Gray16,
    pub timestamp_ns: i64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame8 {
    pub image: Gray8,
    pub timestamp_ns: i64,
}

/// Result of a conversion that may have hit a zero-span (constant) frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Converted {
    pub frame: Frame8,
    pub degenerate: bool,
}

pub fn minmax_normalize(frame: &ThermalFrame16) -> Converted {
    let data = frame.image.data();
    let (min, max) = data
        .iter()
        .fold((u16::MAX, u16::MIN), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let (w, h) = frame.image.dims();
    if data.is_empty() || min == max {
        return Converted {
            frame: Frame8 {
                image: Gray8::filled(w, h, 0),
                timestamp_ns: frame.timestamp_ns,
            },
            degenerate: true,
        };
    }
    let span = (max - min) as f64;
    let image = frame
        .image
        .map(|v| round_half_away(255.0 * (v - min) as f64 / span) as u8);
    Converted {
        frame: Frame8 {
            image,
            timestamp_ns: frame.timestamp_ns,
        },
        degenerate: false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThermalPipelineConfig {
    pub tiles_x: usize,
    pub tiles_y: usize,
    pub clip_limit: f64,
    pub radius: usize,
    pub sigma_color: f64,
    pub sigma_space: f64,
}

impl Default for ThermalPipelineConfig {
    fn default() -> Self {
        let c = ClaheParams::default();
        let b = BilateralParams::default();
        ThermalPipelineConfig {
            tiles_x: c.tiles_x,
            tiles_y: c.tiles_y,
            clip_limit: c.clip_limit,
            radius: b.radius,
            sigma_color: b.sigma_color,
            sigma_space: b.sigma_space,
        }
    }
}

impl ThermalPipelineConfig {
    pub fn clahe(&self) -> ClaheParams {
        ClaheParams {
            tiles_x: self.tiles_x,
            tiles_y: self.tiles_y,
            clip_limit: self.clip_limit,
        }
    }

    pub fn bilateral(&self) -> BilateralParams {
        BilateralParams {
            radius: self.radius,
            sigma_color: self.sigma_color,
            sigma_space: self.sigma_space,
        }
    }
}

/// Min-max normalisation, then CLAHE, then the bilateral filter.
///
/// Degenerate frames stop after normalisation and come back all-zero with
/// `degenerate` set.
pub fn thermal_to_8bit(frame: &ThermalFrame16, cfg: &ThermalPipelineConfig) -> Result<Converted> {
    thermal_to_8bit_with(frame, cfg, Exec::default())
}

pub fn thermal_to_8bit_with(frame: &ThermalFrame16, cfg: &ThermalPipelineConfig, exec: Exec) -> Result<Converted> {
    let normalized = minmax_normalize(frame);
    if normalized.degenerate {
        return Ok(normalized);
    }
    let equalized = clahe_with(&normalized.frame.image, cfg.clahe(), exec)?;
    let smoothed = bilateral_filter_with(&equalized, cfg.bilateral(), exec)?;
    Ok(Converted {
        frame: Frame8 {
            image: smoothed,
            timestamp_ns: frame.timestamp_ns,
        },
        degenerate: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FfcEvent {
    pub start_ns: i64,
    pub end_ns: i64,
}

pub const DEFAULT_FFC_GUARD_NS: i64 = 100_000_000;

pub fn validate_ffc_events(events: &[FfcEvent]) -> Result<()> {
    for e in events {
        if e.start_ns >= e.end_ns {
            return Err(Error::Validation(format!(
                "FFC event [{}, {}] does not have start < end",
                e.start_ns, e.end_ns
            )));
        }
    }
    for pair in events.windows(2) {
        if pair[1].start_ns < pair[0].end_ns {
            return Err(Error::Validation(format!(
                "FFC events [{}, {}] and [{}, {}] overlap or are unsorted",
                pair[0].start_ns, pair[0].end_ns, pair[1].start_ns, pair[1].end_ns
            )));
        }
    }
    Ok(())
}

/// Indices of the timestamps that survive FFC filtering, in input order.
pub fn ffc_kept_indices(timestamps: &[i64], events: &[FfcEvent], guard_ns: i64) -> Result<Vec<usize>> {
    validate_ffc_events(events)?;
    if guard_ns < 0 {
        return Err(Error::Validation(format!("FFC guard must be >= 0, got {guard_ns}")));
    }
    Ok(timestamps
        .iter()
        .enumerate()
        .filter(|(_, &t)| {
            // events are sorted: only the first event ending at or after t - guard can contain t
            let idx = events.partition_point(|e| e.end_ns.saturating_add(guard_ns) < t);
            events
                .get(idx)
                .map_or(true, |e| t < e.start_ns.saturating_sub(guard_ns))
        })
        .map(|(i, _)| i)
        .collect())
}

/// Drops every timestamp within `guard_ns` of an FFC event.
pub fn filter_ffc(timestamps: &[i64], events: &[FfcEvent], guard_ns: i64) -> Result<Vec<i64>> {
    Ok(ffc_kept_indices(timestamps, events, guard_ns)?
        .into_iter()
        .map(|i| timestamps[i])
        .collect())
}
