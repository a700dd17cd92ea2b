//! Dataset manifests, timestamp pairing, 1 Hz subsampling and
//! per-environment statistics.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::{self, Exec};
use crate::thermalproc::{ffc_kept_indices, validate_ffc_events, FfcEvent, DEFAULT_FFC_GUARD_NS};

pub const MANIFEST_SCHEMA: u32 = 1;
pub const SYNCED_TOLERANCE_NS: i64 = 10_000_000;
pub const UNSYNCED_TOLERANCE_NS: i64 = 50_000_000;
pub const SUBSAMPLE_PERIOD_NS: i64 = 1_000_000_000;
/// How far outside the position track `position_at` still answers.
pub const POSITION_SLACK_NS: i64 = 500_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Environment {
    Indoor,
    Offroad,
    Aerial,
    UrbanDrive,
    UrbanPark,
}

impl Environment {
    pub const ALL: [Environment; 5] = [
        Environment::Indoor,
        Environment::Offroad,
        Environment::Aerial,
        Environment::UrbanDrive,
        Environment::UrbanPark,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Environment::Indoor => "indoor",
            Environment::Offroad => "offroad",
            Environment::Aerial => "aerial",
            Environment::UrbanDrive => "urban-drive",
            Environment::UrbanPark => "urban-park",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PositionKind {
    Geographic,
    Odometric,
    #[default]
    None,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameRef {
    pub path: PathBuf,
    pub t_ns: i64,
    /// Depth map registered to this frame (RGB frames only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PositionSample {
    pub t_ns: i64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceRecord {
    pub name: String,
    pub environment: Environment,
    #[serde(default)]
    pub hardware_sync: bool,
    pub rgb: Vec<FrameRef>,
    pub thermal: Vec<FrameRef>,
    #[serde(default)]
    pub ffc: Vec<FfcEvent>,
    #[serde(default)]
    pub position_kind: PositionKind,
    #[serde(default)]
    pub positions: Vec<PositionSample>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub schema: u32,
    pub name: String,
    pub sequences: Vec<SequenceRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FramePair {
    pub rgb: usize,
    pub thermal: usize,
    pub dt_ns: i64,
}

fn check_increasing(ts: &[i64], what: &str) -> Result<()> {
    match ts.windows(2).position(|w| w[1] <= w[0]) {
        Some(i) => Err(Error::Validation(format!(
            "{what} timestamps not strictly increasing at index {}: {} then {}",
            i + 1,
            ts[i],
            ts[i + 1]
        ))),
        None => Ok(()),
    }
}

impl SequenceRecord {
    pub fn rgb_timestamps(&self) -> Vec<i64> {
        self.rgb.iter().map(|f| f.t_ns).collect()
    }

    pub fn thermal_timestamps(&self) -> Vec<i64> {
        self.thermal.iter().map(|f| f.t_ns).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let ctx = |e: Error| match e {
            Error::Validation(m) => Error::Validation(format!("sequence {:?}: {m}", self.name)),
            other => other,
        };
        if self.name.is_empty() || self.name.contains('/') {
            return Err(Error::Validation(format!("bad sequence name {:?}", self.name)));
        }
        check_increasing(&self.rgb_timestamps(), "rgb").map_err(ctx)?;
        check_increasing(&self.thermal_timestamps(), "thermal").map_err(ctx)?;
        validate_ffc_events(&self.ffc).map_err(ctx)?;
        let pts: Vec<i64> = self.positions.iter().map(|p| p.t_ns).collect();
        check_increasing(&pts, "position").map_err(ctx)?;
        if self.positions.iter().any(|p| !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite())) {
            return Err(ctx(Error::Validation("non-finite position".into())));
        }
        match (self.position_kind, self.positions.is_empty()) {
            (PositionKind::None, false) => Err(ctx(Error::Validation("positions given but position_kind is none".into()))),
            (PositionKind::Geographic | PositionKind::Odometric, true) => {
                Err(ctx(Error::Validation("position_kind set but no positions given".into())))
            }
            _ => Ok(()),
        }
    }

    /// Linear interpolation of the position track. Within the slack
    /// outside the track the nearest endpoint is returned.
    pub fn position_at(&self, t_ns: i64) -> Option<[f64; 3]> {
        let p = &self.positions;
        let (first, last) = (p.first()?, p.last()?);
        if t_ns < first.t_ns.saturating_sub(POSITION_SLACK_NS) || t_ns > last.t_ns.saturating_add(POSITION_SLACK_NS) {
            return None;
        }
        let xyz = |s: &PositionSample| [s.x, s.y, s.z];
        if t_ns <= first.t_ns {
            return Some(xyz(first));
        }
        if t_ns >= last.t_ns {
            return Some(xyz(last));
        }
        let hi = p.partition_point(|s| s.t_ns <= t_ns);
        let (a, b) = (&p[hi - 1], &p[hi]);
        if a.t_ns == t_ns {
            return Some(xyz(a));
        }
        let f = (t_ns - a.t_ns) as f64 / (b.t_ns - a.t_ns) as f64;
        Some([a.x + f * (b.x - a.x), a.y + f * (b.y - a.y), a.z + f * (b.z - a.z)])
    }
}

impl DatasetManifest {
    pub fn from_json_str(s: &str) -> Result<Self> {
        let m: DatasetManifest = serde_json::from_str(s).map_err(|e| Error::Validation(format!("manifest: {e}")))?;
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != MANIFEST_SCHEMA {
            return Err(Error::Validation(format!(
                "unsupported manifest schema {} (expected {MANIFEST_SCHEMA})",
                self.schema
            )));
        }
        let mut names = HashSet::new();
        for s in &self.sequences {
            if !names.insert(s.name.as_str()) {
                return Err(Error::Validation(format!("duplicate sequence name {:?}", s.name)));
            }
            s.validate()?;
        }
        Ok(())
    }

    /// Referenced frame files that do not exist below `root`.
    pub fn missing_files(&self, root: &Path) -> Vec<PathBuf> {
        self.sequences
            .iter()
            .flat_map(|s| s.rgb.iter().chain(&s.thermal))
            .flat_map(|f| std::iter::once(&f.path).chain(f.depth.as_ref()))
            .map(|p| root.join(p))
            .filter(|p| !p.is_file())
            .collect()
    }

    pub fn sequence(&self, name: &str) -> Option<&SequenceRecord> {
        self.sequences.iter().find(|s| s.name == name)
    }
}

/// Greedy nearest-first matching: candidate pairs within `tol_ns` are taken
/// in order of increasing `|dt|` (ties by timestamp sum), skipping any that
/// reuse a frame. Output is sorted by rgb index.
pub fn pair_by_timestamp(rgb_ts: &[i64], thr_ts: &[i64], tol_ns: i64) -> Result<Vec<FramePair>> {
    check_increasing(rgb_ts, "rgb")?;
    check_increasing(thr_ts, "thermal")?;
    if tol_ns < 0 {
        return Err(Error::Validation(format!("pairing tolerance must be >= 0, got {tol_ns}")));
    }
    let mut candidates: Vec<(i64, i128, usize, usize)> = Vec::new();
    let mut lo = 0;
    for (i, &t) in rgb_ts.iter().enumerate() {
        while lo < thr_ts.len() && thr_ts[lo] < t.saturating_sub(tol_ns) {
            lo += 1;
        }
        for (j, &u) in thr_ts.iter().enumerate().skip(lo) {
            if u > t.saturating_add(tol_ns) {
                break;
            }
            candidates.push(((t - u).abs(), t as i128 + u as i128, i, j));
        }
    }
    candidates.sort_unstable_by_key(|c| (c.0, c.1));
    let mut rgb_used = vec![false; rgb_ts.len()];
    let mut thr_used = vec![false; thr_ts.len()];
    let mut pairs = Vec::new();
    for (dt, _, i, j) in candidates {
        if !rgb_used[i] && !thr_used[j] {
            rgb_used[i] = true;
            thr_used[j] = true;
            pairs.push(FramePair { rgb: i, thermal: j, dt_ns: dt });
        }
    }
    pairs.sort_unstable_by_key(|p| p.rgb);
    Ok(pairs)
}

/// Indices of the frames nearest to each point of a 1 s grid anchored at
/// the first timestamp (ties go to the earlier frame). Grid points past the
/// last timestamp are not used.
pub fn subsample_1hz(ts: &[i64]) -> Result<Vec<usize>> {
    check_increasing(ts, "frame")?;
    let (Some(&t0), Some(&t_last)) = (ts.first(), ts.last()) else {
        return Ok(Vec::new());
    };
    let mut out: Vec<usize> = Vec::new();
    let mut grid = t0;
    while grid <= t_last {
        let hi = ts.partition_point(|&t| t < grid);
        let best = if hi == 0 {
            0
        } else if hi == ts.len() || grid - ts[hi - 1] <= ts[hi] - grid {
            hi - 1
        } else {
            hi
        };
        if out.last() != Some(&best) {
            out.push(best);
        }
        grid += SUBSAMPLE_PERIOD_NS;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatsConfig {
    pub ffc_guard_ns: i64,
    pub synced_tolerance_ns: i64,
    pub unsynced_tolerance_ns: i64,
}

impl Default for StatsConfig {
    fn default() -> Self {
        StatsConfig {
            ffc_guard_ns: DEFAULT_FFC_GUARD_NS,
            synced_tolerance_ns: SYNCED_TOLERANCE_NS,
            unsynced_tolerance_ns: UNSYNCED_TOLERANCE_NS,
        }
    }
}

impl StatsConfig {
    pub fn tolerance_for(&self, seq: &SequenceRecord) -> i64 {
        if seq.hardware_sync {
            self.synced_tolerance_ns
        } else {
            self.unsynced_tolerance_ns
        }
    }
}

/// Thermal frame indices kept after 1 Hz subsampling and FFC filtering,
/// plus the subsampled indices that FFC filtering removed.
pub fn curated_thermal(seq: &SequenceRecord, ffc_guard_ns: i64) -> Result<(Vec<usize>, Vec<usize>)> {
    let thr_ts = seq.thermal_timestamps();
    let sub = subsample_1hz(&thr_ts)?;
    let sub_ts: Vec<i64> = sub.iter().map(|&i| thr_ts[i]).collect();
    let kept_pos = ffc_kept_indices(&sub_ts, &seq.ffc, ffc_guard_ns)?;
    let mut keep = vec![false; sub.len()];
    for &k in &kept_pos {
        keep[k] = true;
    }
    let (kept, dropped): (Vec<(usize, bool)>, Vec<(usize, bool)>) = sub.into_iter().zip(keep).partition(|(_, k)| *k);
    Ok((kept.into_iter().map(|x| x.0).collect(), dropped.into_iter().map(|x| x.0).collect()))
}

/// Pairs that survive 1 Hz subsampling of the thermal stream, FFC
/// filtering and timestamp pairing against the RGB stream. Indices refer
/// to the original streams.
pub fn curated_pairs(seq: &SequenceRecord, cfg: &StatsConfig) -> Result<Vec<FramePair>> {
    let thr_ts = seq.thermal_timestamps();
    let (kept, _) = curated_thermal(seq, cfg.ffc_guard_ns)?;
    let kept_ts: Vec<i64> = kept.iter().map(|&i| thr_ts[i]).collect();
    let tol = cfg.tolerance_for(seq);
    Ok(pair_by_timestamp(&seq.rgb_timestamps(), &kept_ts, tol)?
        .into_iter()
        .map(|p| FramePair { thermal: kept[p.thermal], ..p })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentStats {
    pub sequences: usize,
    pub pairs: usize,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub per_sequence: BTreeMap<String, usize>,
    pub per_environment: BTreeMap<String, EnvironmentStats>,
    pub total: usize,
}

pub fn dataset_stats(manifest: &DatasetManifest, cfg: &StatsConfig) -> Result<DatasetStats> {
    dataset_stats_with(manifest, cfg, Exec::default())
}

pub fn dataset_stats_with(manifest: &DatasetManifest, cfg: &StatsConfig, exec: Exec) -> Result<DatasetStats> {
    let counts = par::map_indices(exec, manifest.sequences.len(), |i| {
        curated_pairs(&manifest.sequences[i], cfg).map(|p| p.len())
    });
    let mut per_env: BTreeMap<Environment, (usize, usize)> = Environment::ALL.iter().map(|&e| (e, (0, 0))).collect();
    let mut per_sequence = BTreeMap::new();
    for (seq, count) in manifest.sequences.iter().zip(counts) {
        let count = count?;
        per_sequence.insert(seq.name.clone(), count);
        let entry = per_env.get_mut(&seq.environment).expect("all environments present");
        entry.0 += 1;
        entry.1 += count;
    }
    let total: usize = per_env.values().map(|v| v.1).sum();
    let per_environment = per_env
        .into_iter()
        .map(|(env, (sequences, pairs))| {
            let fraction = if total == 0 { 0.0 } else { pairs as f64 / total as f64 };
            (env.name().to_string(), EnvironmentStats { sequences, pairs, fraction })
        })
        .collect();
    Ok(DatasetStats { per_sequence, per_environment, total })
}

impl DatasetStats {
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<12}  {:>9}  {:>7}  {:>8}", "environment", "sequences", "pairs", "fraction");
        for env in Environment::ALL {
            let e = &self.per_environment[env.name()];
            let _ = writeln!(s, "{:<12}  {:>9}  {:>7}  {:>8.4}", env.name(), e.sequences, e.pairs, e.fraction);
        }
        let seqs: usize = self.per_environment.values().map(|e| e.sequences).sum();
        let _ = writeln!(s, "{:<12}  {:>9}  {:>7}  {:>8.4}", "total", seqs, self.total, if self.total > 0 { 1.0 } else { 0.0 });
        s
    }

    pub fn to_sequence_table(&self) -> String {
        let width = self.per_sequence.keys().map(|k| k.len()).chain(std::iter::once(8)).max().unwrap_or(8);
        let mut s = String::new();
        let _ = writeln!(s, "{:<width$}  {:>7}", "sequence", "pairs");
        for (name, n) in &self.per_sequence {
            let _ = writeln!(s, "{name:<width$}  {n:>7}");
        }
        let _ = writeln!(s, "{:<width$}  {:>7}", "total", self.total);
        s
    }
}
