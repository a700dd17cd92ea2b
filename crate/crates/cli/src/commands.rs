use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use clap::Args;
use rgbt_core::calib::Calibration;
use rgbt_core::crossmodal::{mine_triplets, toy_distill, Locations, Metric, MiningConfig};
use rgbt_core::dataset::{
    curated_pairs, curated_thermal, dataset_stats, pair_by_timestamp, DatasetManifest, Environment, FrameRef,
    SequenceRecord,
};
use rgbt_core::evaluate::{
    depth_metrics, evaluate_vpr, scaling_report, ConfusionCounts, DepthMetrics, RadiusMode, ScalingRun, VprConfig,
};
use rgbt_core::geometry::{build_rectification_map_with, remap_bilinear_with, RectificationMap};
use rgbt_core::io;
use rgbt_core::registration::{alpha_blend, register_pair_with, Rig};
use rgbt_core::thermalproc::{thermal_to_8bit_with, ThermalFrame16};
use rgbt_core::{par, Error, Exec, Gray8, Result};
use serde_json::{json, Value};

use crate::config::RunConfig;

/// Shared state of one command invocation.
pub struct Ctx {
    pub cfg: RunConfig,
    pub out_dir: PathBuf,
    pub outputs: Vec<String>,
    pub warnings: Vec<String>,
}

impl Ctx {
    fn out(&self, rel: &str) -> PathBuf {
        self.out_dir.join(rel)
    }

    fn record(&mut self, rel: impl Into<String>) {
        self.outputs.push(rel.into());
    }

    fn write_json<T: serde::Serialize>(&mut self, rel: &str, value: &T) -> Result<()> {
        io::write_json(self.out(rel), value)?;
        self.record(rel);
        Ok(())
    }

    fn write_text(&mut self, rel: &str, text: &str) -> Result<()> {
        io::write_text(self.out(rel), text)?;
        self.record(rel);
        Ok(())
    }

    fn manifest(&self, flag: &Option<PathBuf>) -> Result<(DatasetManifest, PathBuf)> {
        let path = flag
            .clone()
            .or_else(|| self.cfg.paths.manifest.clone())
            .ok_or_else(|| invalid("no manifest: pass --manifest or set paths.manifest"))?;
        let manifest = DatasetManifest::load(&path)?;
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((manifest, root))
    }

    fn calibration(&self, flag: &Option<PathBuf>) -> Result<Calibration> {
        let path = flag
            .clone()
            .or_else(|| self.cfg.paths.calibration.clone())
            .ok_or_else(|| invalid("no calibration: pass --calib or set paths.calibration"))?;
        Calibration::load(path)
    }
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::Validation(msg.into())
}

fn stem(path: &Path) -> Result<String> {
    path.file_stem()
        .and_then(|s| s.to_str())
        .map(str::to_string)
        .ok_or_else(|| invalid(format!("cannot name an output after {}", path.display())))
}

fn unique_names(names: &[String]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for n in names {
        if !seen.insert(n) {
            return Err(invalid(format!("two inputs map to the same output name {n:?}")));
        }
    }
    Ok(())
}

/// Loads a thermal frame as 8-bit: 16-bit PGMs go through the conversion
/// pipeline, 8-bit PGMs are used as they are.
fn load_thermal8(path: &Path, t_ns: i64, cfg: &RunConfig) -> Result<(Gray8, bool)> {
    match io::read_pgm16(path) {
        Ok(image) => {
            let c = thermal_to_8bit_with(&ThermalFrame16 { image, timestamp_ns: t_ns }, &cfg.thermal, Exec::Sequential)?;
            Ok((c.frame.image, c.degenerate))
        }
        Err(Error::Format { .. }) => Ok((io::read_pgm8(path)?, false)),
        Err(e) => Err(e),
    }
}

fn mask_to_pgm(mask: &Gray8) -> Gray8 {
    mask.map(|v| if v > 0 { 255 } else { 0 })
}

struct FrameJob {
    input: PathBuf,
    t_ns: i64,
    rel: String,
}

fn thermal_jobs(ctx: &Ctx, manifest: &Option<PathBuf>, inputs: &[PathBuf], dir: &str) -> Result<Vec<FrameJob>> {
    let jobs: Vec<FrameJob> = if inputs.is_empty() {
        let (m, root) = ctx.manifest(manifest)?;
        let mut jobs = Vec::new();
        for seq in &m.sequences {
            for f in &seq.thermal {
                jobs.push(FrameJob {
                    input: root.join(&f.path),
                    t_ns: f.t_ns,
                    rel: format!("{dir}/{}/{}.pgm", seq.name, stem(&f.path)?),
                });
            }
        }
        jobs
    } else {
        inputs
            .iter()
            .map(|p| Ok(FrameJob { input: p.clone(), t_ns: 0, rel: format!("{dir}/{}.pgm", stem(p)?) }))
            .collect::<Result<_>>()?
    };
    unique_names(&jobs.iter().map(|j| j.rel.clone()).collect::<Vec<_>>())?;
    Ok(jobs)
}

// ---------------------------------------------------------------- validate

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Also check that the calibration file parses.
    #[arg(long)]
    pub calib: Option<PathBuf>,
}

pub fn validate(a: &ValidateArgs, ctx: &mut Ctx) -> Result<Value> {
    let (m, root) = ctx.manifest(&a.manifest)?;
    let mut cameras = Vec::new();
    if a.calib.is_some() || ctx.cfg.paths.calibration.is_some() {
        cameras = ctx.calibration(&a.calib)?.cameras.keys().cloned().collect();
    }
    let missing = m.missing_files(&root);
    for p in missing.iter().take(10) {
        ctx.warnings.push(format!("missing file {}", p.display()));
    }
    if !missing.is_empty() {
        return Err(invalid(format!("{} referenced files are missing", missing.len())));
    }
    let mut per_env: BTreeMap<&str, usize> = Environment::ALL.iter().map(|e| (e.name(), 0)).collect();
    for s in &m.sequences {
        *per_env.get_mut(s.environment.name()).expect("closed enum") += 1;
    }
    let result = json!({
        "dataset": m.name,
        "sequences": m.sequences.len(),
        "rgb_frames": m.sequences.iter().map(|s| s.rgb.len()).sum::<usize>(),
        "thermal_frames": m.sequences.iter().map(|s| s.thermal.len()).sum::<usize>(),
        "depth_maps": m.sequences.iter().flat_map(|s| &s.rgb).filter(|f| f.depth.is_some()).count(),
        "ffc_events": m.sequences.iter().map(|s| s.ffc.len()).sum::<usize>(),
        "per_environment": per_env,
        "cameras": cameras,
    });
    ctx.write_json("validate.json", &result)?;
    Ok(result)
}

// ---------------------------------------------------------------- thermal8

#[derive(Debug, Args)]
pub struct ThermalArgs {
    #[arg(long)]
    pub tiles_x: Option<usize>,
    #[arg(long)]
    pub tiles_y: Option<usize>,
    #[arg(long)]
    pub clip_limit: Option<f64>,
    #[arg(long)]
    pub radius: Option<usize>,
    #[arg(long)]
    pub sigma_color: Option<f64>,
    #[arg(long)]
    pub sigma_space: Option<f64>,
}

impl ThermalArgs {
    pub fn apply(&self, cfg: &mut RunConfig) {
        let t = &mut cfg.thermal;
        t.tiles_x = self.tiles_x.unwrap_or(t.tiles_x);
        t.tiles_y = self.tiles_y.unwrap_or(t.tiles_y);
        t.clip_limit = self.clip_limit.unwrap_or(t.clip_limit);
        t.radius = self.radius.unwrap_or(t.radius);
        t.sigma_color = self.sigma_color.unwrap_or(t.sigma_color);
        t.sigma_space = self.sigma_space.unwrap_or(t.sigma_space);
    }
}

#[derive(Debug, Args)]
pub struct Thermal8Args {
    /// Convert every thermal frame of this manifest.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// 16-bit PGM frames, used instead of a manifest.
    pub inputs: Vec<PathBuf>,
    #[command(flatten)]
    pub thermal: ThermalArgs,
}

pub fn thermal8(a: &Thermal8Args, ctx: &mut Ctx) -> Result<Value> {
    let jobs = thermal_jobs(ctx, &a.manifest, &a.inputs, "thermal8")?;
    let cfg = &ctx.cfg;
    let out_dir = &ctx.out_dir;
    let results = par::map_indices(Exec::default(), jobs.len(), |i| -> Result<bool> {
        let job = &jobs[i];
        let image = io::read_pgm16(&job.input)?;
        let c = thermal_to_8bit_with(&ThermalFrame16 { image, timestamp_ns: job.t_ns }, &cfg.thermal, Exec::Sequential)?;
        io::write_pgm8(out_dir.join(&job.rel), &c.frame.image)?;
        Ok(c.degenerate)
    });
    let mut degenerate = 0;
    for (job, r) in jobs.iter().zip(results) {
        if r? {
            degenerate += 1;
            ctx.warnings.push(format!("{}: constant frame, output is all zero", job.input.display()));
        }
        ctx.record(job.rel.clone());
    }
    Ok(json!({ "frames": jobs.len(), "degenerate": degenerate }))
}

// ----------------------------------------------------------------- rectify

#[derive(Debug, Args)]
pub struct RectifyArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// 8- or 16-bit PGM frames, used instead of a manifest.
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub calib: Option<PathBuf>,
    #[arg(long)]
    pub src_camera: Option<String>,
    #[arg(long)]
    pub dst_camera: Option<String>,
    #[command(flatten)]
    pub thermal: ThermalArgs,
}

impl RectifyArgs {
    pub fn apply(&self, cfg: &mut RunConfig) {
        self.thermal.apply(cfg);
        if let Some(s) = &self.src_camera {
            cfg.rectify.src_camera = s.clone();
        }
        if let Some(d) = &self.dst_camera {
            cfg.rectify.dst_camera = Some(d.clone());
        }
    }
}

fn rectification_map(calib: &Calibration, cfg: &RunConfig) -> Result<RectificationMap> {
    let src = calib.camera(&cfg.rectify.src_camera)?;
    let dst = match &cfg.rectify.dst_camera {
        Some(name) => *calib.camera(name)?,
        None => src.as_pinhole(),
    };
    build_rectification_map_with(src, &dst, Exec::default())
}

fn check_dims(img: &Gray8, w: usize, h: usize, what: &Path) -> Result<()> {
    if img.dims() != (w, h) {
        return Err(Error::Dimension(format!(
            "{} is {}x{} but the camera is {w}x{h}",
            what.display(),
            img.width(),
            img.height()
        )));
    }
    Ok(())
}

pub fn rectify(a: &RectifyArgs, ctx: &mut Ctx) -> Result<Value> {
    let calib = ctx.calibration(&a.calib)?;
    let map = rectification_map(&calib, &ctx.cfg)?;
    let src = *calib.camera(&ctx.cfg.rectify.src_camera)?;
    let jobs = thermal_jobs(ctx, &a.manifest, &a.inputs, "rectified")?;
    let cfg = &ctx.cfg;
    let out_dir = &ctx.out_dir;
    let results = par::map_indices(Exec::default(), jobs.len(), |i| -> Result<Gray8> {
        let job = &jobs[i];
        let (img, _) = load_thermal8(&job.input, job.t_ns, cfg)?;
        check_dims(&img, src.width, src.height, &job.input)?;
        let (out, mask) = remap_bilinear_with(&img, &map, Exec::Sequential)?;
        io::write_pgm8(out_dir.join(&job.rel), &out)?;
        Ok(mask)
    });
    let mut mask = None;
    for (job, r) in jobs.iter().zip(results) {
        mask = Some(r?);
        ctx.record(job.rel.clone());
    }
    let valid = map.valid_count() as f64 / (map.width() * map.height()) as f64;
    if let Some(m) = mask {
        io::write_pgm8(ctx.out("rectified/valid_mask.pgm"), &mask_to_pgm(&m))?;
        ctx.record("rectified/valid_mask.pgm");
    }
    Ok(json!({ "frames": jobs.len(), "valid_fraction": valid, "width": map.width(), "height": map.height() }))
}

// ---------------------------------------------------------------- register

#[derive(Debug, Args)]
pub struct RegisterArgs {
    /// Register the curated 1 Hz pairs of every sequence.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub calib: Option<PathBuf>,
    /// Single-pair mode: RGB image (PPM).
    #[arg(long, requires_all = ["depth", "thermal"])]
    pub rgb: Option<PathBuf>,
    /// Single-pair mode: depth map (PFM or RGTD) aligned with the RGB image.
    #[arg(long)]
    pub depth: Option<PathBuf>,
    /// Single-pair mode: thermal frame (8- or 16-bit PGM).
    #[arg(long)]
    pub thermal: Option<PathBuf>,
    #[arg(long)]
    pub depth_tol: Option<f64>,
    /// Overlay blend weights of the warped RGB image.
    #[arg(long, value_delimiter = ',')]
    pub alpha: Option<Vec<f64>>,
    #[command(flatten)]
    pub pairing: PairingArgs,
    #[command(flatten)]
    pub thermal_params: ThermalArgs,
}

impl RegisterArgs {
    pub fn apply(&self, cfg: &mut RunConfig) {
        self.pairing.apply(cfg);
        self.thermal_params.apply(cfg);
        cfg.registration.depth_tol = self.depth_tol.unwrap_or(cfg.registration.depth_tol);
        if let Some(a) = &self.alpha {
            cfg.registration.alphas = a.clone();
        }
    }
}

struct PairJob {
    rgb: PathBuf,
    depth: PathBuf,
    thermal: PathBuf,
    t_ns: i64,
    prefix: String,
}

fn alpha_tag(alpha: f64) -> String {
    format!("a{:03}", (alpha * 100.0).round() as i64)
}

pub fn register(a: &RegisterArgs, ctx: &mut Ctx) -> Result<Value> {
    let calib = ctx.calibration(&a.calib)?;
    let reg = ctx.cfg.registration.clone();
    if reg.alphas.iter().any(|x| !(0.0..=1.0).contains(x)) {
        return Err(invalid("alpha values must lie in [0, 1]"));
    }
    let rig: Rig = calib.rig(&reg.rgb_camera, &reg.thermal_camera, &reg.transform)?;
    // raw thermal frames are rectified first when the calibration has a distorted source camera
    let rect = match calib.cameras.get(&ctx.cfg.rectify.src_camera) {
        Some(src) if ctx.cfg.rectify.src_camera != reg.thermal_camera => {
            Some((*src, build_rectification_map_with(src, &rig.thermal, Exec::default())?))
        }
        _ => None,
    };

    let mut skipped = 0usize;
    let jobs: Vec<PairJob> = match (&a.rgb, &a.depth, &a.thermal) {
        (Some(rgb), Some(depth), Some(thermal)) => vec![PairJob {
            rgb: rgb.clone(),
            depth: depth.clone(),
            thermal: thermal.clone(),
            t_ns: 0,
            prefix: format!("register/{}", stem(rgb)?),
        }],
        _ => {
            let (m, root) = ctx.manifest(&a.manifest)?;
            let stats_cfg = ctx.cfg.pairing.stats_config()?;
            let mut jobs = Vec::new();
            for seq in &m.sequences {
                for p in curated_pairs(seq, &stats_cfg)? {
                    let (rgb, thr): (&FrameRef, &FrameRef) = (&seq.rgb[p.rgb], &seq.thermal[p.thermal]);
                    let Some(depth) = &rgb.depth else {
                        skipped += 1;
                        ctx.warnings.push(format!("{}/{}: no depth map, pair skipped", seq.name, rgb.path.display()));
                        continue;
                    };
                    jobs.push(PairJob {
                        rgb: root.join(&rgb.path),
                        depth: root.join(depth),
                        thermal: root.join(&thr.path),
                        t_ns: thr.t_ns,
                        prefix: format!("register/{}/{}", seq.name, stem(&rgb.path)?),
                    });
                }
            }
            jobs
        }
    };
    unique_names(&jobs.iter().map(|j| j.prefix.clone()).collect::<Vec<_>>())?;

    let cfg = &ctx.cfg;
    let out_dir = &ctx.out_dir;
    let results = par::map_indices(Exec::default(), jobs.len(), |i| -> Result<(Vec<String>, f64)> {
        let job = &jobs[i];
        let rgb = io::read_ppm(&job.rgb)?;
        let depth = io::read_depth(&job.depth)?;
        let (mut thermal, _) = load_thermal8(&job.thermal, job.t_ns, cfg)?;
        if let Some((src, map)) = &rect {
            check_dims(&thermal, src.width, src.height, &job.thermal)?;
            thermal = remap_bilinear_with(&thermal, map, Exec::Sequential)?.0;
        }
        let out = register_pair_with(&rgb, &depth, &rig, &thermal, reg.depth_tol, Exec::Sequential)?;
        let mut written = Vec::new();
        let mut emit = |suffix: &str, write: &dyn Fn(&Path) -> Result<()>| -> Result<()> {
            let rel = format!("{}_{suffix}", job.prefix);
            write(&out_dir.join(&rel))?;
            written.push(rel);
            Ok(())
        };
        emit("warped.ppm", &|p| io::write_ppm(p, &out.warped))?;
        emit("mask.rgtd", &|p| io::write_rgtd(p, &out.mask))?;
        emit("depth.pfm", &|p| io::write_pfm(p, &out.depth))?;
        emit("thermal.pgm", &|p| io::write_pgm8(p, &thermal))?;
        for &alpha in &reg.alphas {
            let overlay = alpha_blend(&thermal, &out.warped, alpha)?;
            emit(&format!("overlay_{}.ppm", alpha_tag(alpha)), &|p| io::write_ppm(p, &overlay))?;
        }
        let covered = out.mask.data().iter().filter(|&&m| m > 0.0).count();
        Ok((written, covered as f64 / out.mask.data().len() as f64))
    });
    let mut coverage = Vec::with_capacity(jobs.len());
    for r in results {
        let (written, cov) = r?;
        coverage.push(cov);
        for w in written {
            ctx.record(w);
        }
    }
    let mean_coverage = if coverage.is_empty() { 0.0 } else { coverage.iter().sum::<f64>() / coverage.len() as f64 };
    Ok(json!({ "pairs": jobs.len(), "skipped_without_depth": skipped, "mean_coverage": mean_coverage }))
}

// -------------------------------------------------------- pair / subsample / stats

#[derive(Debug, Args)]
pub struct PairingArgs {
    /// Pairing tolerance for hardware-synchronised sequences.
    #[arg(long)]
    pub synced_tol_ms: Option<i64>,
    /// Pairing tolerance for sequences without hardware sync.
    #[arg(long)]
    pub unsynced_tol_ms: Option<i64>,
    /// Frames this close to an FFC event are dropped.
    #[arg(long)]
    pub ffc_guard_ms: Option<i64>,
}

impl PairingArgs {
    pub fn apply(&self, cfg: &mut RunConfig) {
        let p = &mut cfg.pairing;
        p.synced_tol_ms = self.synced_tol_ms.unwrap_or(p.synced_tol_ms);
        p.unsynced_tol_ms = self.unsynced_tol_ms.unwrap_or(p.unsynced_tol_ms);
        p.ffc_guard_ms = self.ffc_guard_ms.unwrap_or(p.ffc_guard_ms);
    }
}

#[derive(Debug, Args)]
pub struct PairArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[command(flatten)]
    pub pairing: PairingArgs,
}

fn frame_json(seq: &SequenceRecord, rgb: Option<usize>, thermal: Option<usize>) -> Value {
    let mut v = serde_json::Map::new();
    if let Some(i) = rgb {
        v.insert("rgb_index".into(), json!(i));
        v.insert("rgb".into(), json!(seq.rgb[i].path));
        v.insert("rgb_t_ns".into(), json!(seq.rgb[i].t_ns));
    }
    if let Some(j) = thermal {
        v.insert("thermal_index".into(), json!(j));
        v.insert("thermal".into(), json!(seq.thermal[j].path));
        v.insert("thermal_t_ns".into(), json!(seq.thermal[j].t_ns));
    }
    Value::Object(v)
}

pub fn pair(a: &PairArgs, ctx: &mut Ctx) -> Result<Value> {
    let (m, _) = ctx.manifest(&a.manifest)?;
    let stats_cfg = ctx.cfg.pairing.stats_config()?;
    let mut per_seq = BTreeMap::new();
    for seq in &m.sequences {
        let tol = stats_cfg.tolerance_for(seq);
        let pairs = pair_by_timestamp(&seq.rgb_timestamps(), &seq.thermal_timestamps(), tol)?;
        let rows: Vec<Value> = pairs
            .iter()
            .map(|p| {
                let mut v = frame_json(seq, Some(p.rgb), Some(p.thermal));
                v["dt_ns"] = json!(p.dt_ns);
                v
            })
            .collect();
        per_seq.insert(seq.name.clone(), pairs.len());
        ctx.write_json(
            &format!("pairs/{}.json", seq.name),
            &json!({ "sequence": seq.name, "tolerance_ns": tol, "pairs": rows }),
        )?;
    }
    Ok(json!({ "pairs": per_seq.values().sum::<usize>(), "per_sequence": per_seq }))
}

#[derive(Debug, Args)]
pub struct SubsampleArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub ffc_guard_ms: Option<i64>,
}

pub fn subsample(a: &SubsampleArgs, ctx: &mut Ctx) -> Result<Value> {
    let (m, _) = ctx.manifest(&a.manifest)?;
    let guard = ctx.cfg.pairing.stats_config()?.ffc_guard_ns;
    let mut kept_total = 0;
    let mut dropped_total = 0;
    for seq in &m.sequences {
        let (kept, dropped) = curated_thermal(seq, guard)?;
        kept_total += kept.len();
        dropped_total += dropped.len();
        let list = |idx: &[usize]| idx.iter().map(|&j| frame_json(seq, None, Some(j))).collect::<Vec<_>>();
        ctx.write_json(
            &format!("subsample/{}.json", seq.name),
            &json!({ "sequence": seq.name, "frames": list(&kept), "ffc_dropped": list(&dropped) }),
        )?;
    }
    Ok(json!({ "frames": kept_total, "ffc_dropped": dropped_total }))
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Text table per environment instead of per sequence.
    #[arg(long)]
    pub by_env: bool,
    #[command(flatten)]
    pub pairing: PairingArgs,
}

pub fn stats(a: &StatsArgs, ctx: &mut Ctx) -> Result<Value> {
    let (m, _) = ctx.manifest(&a.manifest)?;
    let st = dataset_stats(&m, &ctx.cfg.pairing.stats_config()?)?;
    ctx.write_json("stats.json", &st)?;
    let table = if a.by_env { st.to_table() } else { st.to_sequence_table() };
    ctx.write_text("stats.txt", &table)?;
    Ok(json!({ "total": st.total, "per_environment": st.per_environment.iter().map(|(k, v)| (k.clone(), v.pairs)).collect::<BTreeMap<_, _>>() }))
}

// ------------------------------------------------------------ mine / distill

#[derive(Debug, Args)]
pub struct MineArgs {
    /// RGB embedding set (RGTE).
    #[arg(long)]
    pub rgb: PathBuf,
    /// Thermal embedding set (RGTE).
    #[arg(long)]
    pub thermal: PathBuf,
    /// Positive radius: metres, or frames for frame-indexed sets.
    #[arg(long)]
    pub radius: Option<f64>,
    #[arg(long)]
    pub k_hard: Option<usize>,
}

impl MineArgs {
    pub fn apply(&self, cfg: &mut RunConfig) {
        cfg.loss.radius = self.radius.or(cfg.loss.radius);
        cfg.loss.k_hard = self.k_hard.unwrap_or(cfg.loss.k_hard);
    }
}

pub fn mine(a: &MineArgs, ctx: &mut Ctx) -> Result<Value> {
    let seed = ctx.cfg.require_seed("mine-triplets")?;
    let radius = ctx.cfg.loss.radius.ok_or_else(|| invalid("mining needs --radius or loss.radius"))?;
    let rgb = io::read_embeddings(&a.rgb)?;
    let thermal = io::read_embeddings(&a.thermal)?;
    let res = mine_triplets(&rgb, &thermal, &MiningConfig { radius, k_hard: ctx.cfg.loss.k_hard, seed })?;
    if res.skipped > 0 {
        ctx.warnings.push(format!("{} anchors had no positive or no negative", res.skipped));
    }
    ctx.write_json("triplets.json", &json!({ "skipped": res.skipped, "triplets": res.triplets }))?;
    Ok(json!({ "triplets": res.triplets.len(), "skipped": res.skipped }))
}

#[derive(Debug, Args)]
pub struct DistillArgs {
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub noise: Option<f64>,
}

impl DistillArgs {
    pub fn apply(&self, cfg: &mut RunConfig) {
        let d = &mut cfg.distill;
        d.steps = self.steps.unwrap_or(d.steps);
        d.lr = self.lr.unwrap_or(d.lr);
        d.batch = self.batch.unwrap_or(d.batch);
        d.noise = self.noise.unwrap_or(d.noise);
        cfg.loss.tau = self.tau.unwrap_or(cfg.loss.tau);
    }
}

pub fn distill(_a: &DistillArgs, ctx: &mut Ctx) -> Result<Value> {
    let seed = ctx.cfg.require_seed("distill-toy")?;
    let toy = ctx.cfg.distill.toy(ctx.cfg.loss.tau, seed);
    let report = toy_distill(&toy)?;
    ctx.write_text("distill/loss_history.csv", &report.loss_csv())?;
    ctx.write_text("distill/recall_history.csv", &report.recall_csv())?;
    let result = json!({
        "steps": report.loss.len(),
        "initial_recall_at_1": report.initial_recall(),
        "final_recall_at_1": report.final_recall(),
        "final_loss": report.loss.last(),
    });
    ctx.write_json("distill/report.json", &result)?;
    Ok(result)
}

// ------------------------------------------------------------------- eval

#[derive(Debug, Args)]
pub struct EvalVprArgs {
    /// Thermal query embeddings (RGTE).
    #[arg(long)]
    pub queries: PathBuf,
    /// RGB database embeddings (RGTE).
    #[arg(long)]
    pub db: PathBuf,
    #[arg(long)]
    pub radius: Option<f64>,
    /// Comma-separated K values, e.g. `1,5,10`.
    #[arg(long, value_delimiter = ',')]
    pub k: Option<Vec<usize>>,
    /// Treat locations as frame indices and evaluate within each sequence.
    #[arg(long)]
    pub frame_radius: bool,
    #[arg(long)]
    pub metric: Option<Metric>,
}

impl EvalVprArgs {
    pub fn apply(&self, cfg: &mut RunConfig) {
        let e = &mut cfg.eval;
        e.radius = self.radius.or(e.radius);
        if let Some(k) = &self.k {
            e.ks = k.clone();
        }
        e.frame_radius |= self.frame_radius;
        e.metric = self.metric.unwrap_or(e.metric);
    }
}

pub fn eval_vpr(a: &EvalVprArgs, ctx: &mut Ctx) -> Result<Value> {
    let e = ctx.cfg.eval.clone();
    let radius = e.radius.ok_or_else(|| invalid("eval-vpr needs --radius or eval.radius"))?;
    let queries = io::read_embeddings(&a.queries)?;
    let db = io::read_embeddings(&a.db)?;
    let frame_locs = matches!(queries.locations(), Locations::Frame(_));
    if e.frame_radius != frame_locs {
        return Err(Error::Protocol(if e.frame_radius {
            "--frame-radius needs frame-indexed embeddings".into()
        } else {
            "embeddings carry frame indices: pass --frame-radius".into()
        }));
    }
    if let Some(&k) = e.ks.iter().max() {
        if k > db.len() {
            ctx.warnings.push(format!("k = {k} exceeds the database size {}; clamped", db.len()));
        }
    }
    let mode = if e.frame_radius { RadiusMode::Frame } else { RadiusMode::Geographic };
    let report = evaluate_vpr(&queries, &db, &VprConfig { radius, ks: e.ks.clone(), metric: e.metric, mode })?;
    if report.dropped_queries > 0 {
        ctx.warnings.push(format!("{} queries have no positive and were not scored", report.dropped_queries));
    }
    ctx.write_json("vpr.json", &report)?;
    Ok(json!({ "weighted_mean": report.weighted_mean, "dropped_queries": report.dropped_queries }))
}

/// Files in `dir` with one of `exts`, keyed by file stem.
fn files_by_stem(dir: &Path, exts: &[&str]) -> Result<BTreeMap<String, PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::Io { path: dir.to_path_buf(), source: e })?;
    let mut out = BTreeMap::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::Io { path: dir.to_path_buf(), source: e })?.path();
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
        if path.is_file() && exts.contains(&ext) {
            if out.insert(stem(&path)?, path.clone()).is_some() {
                return Err(invalid(format!("{} has two files named {}", dir.display(), stem(&path)?)));
            }
        }
    }
    if out.is_empty() {
        return Err(invalid(format!("no {} files in {}", exts.join("/"), dir.display())));
    }
    Ok(out)
}

fn matching<'a>(stem: &str, files: &'a BTreeMap<String, PathBuf>, what: &str) -> Result<&'a PathBuf> {
    files.get(stem).ok_or_else(|| invalid(format!("no {what} file for {stem:?}")))
}

#[derive(Debug, Args)]
pub struct EvalSegArgs {
    /// Directory of predicted label maps (8-bit PGM).
    #[arg(long)]
    pub pred: PathBuf,
    /// Directory of ground-truth label maps (8-bit PGM), matched by file name.
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long)]
    pub classes: Option<usize>,
    /// Label excluded from all counts.
    #[arg(long)]
    pub ignore: Option<u8>,
    /// JSON array of class names.
    #[arg(long)]
    pub class_names: Option<PathBuf>,
}

impl EvalSegArgs {
    pub fn apply(&self, cfg: &mut RunConfig) {
        cfg.eval.classes = self.classes.or(cfg.eval.classes);
        cfg.eval.ignore_label = self.ignore.or(cfg.eval.ignore_label);
    }
}

pub fn eval_seg(a: &EvalSegArgs, ctx: &mut Ctx) -> Result<Value> {
    let classes = ctx.cfg.eval.classes.ok_or_else(|| invalid("eval-seg needs --classes or eval.classes"))?;
    let names: Option<Vec<String>> = a.class_names.as_ref().map(io::read_json).transpose()?;
    if let Some(n) = &names {
        if n.len() != classes {
            return Err(invalid(format!("{} class names for {classes} classes", n.len())));
        }
    }
    let gt = files_by_stem(&a.gt, &["pgm"])?;
    let pred = files_by_stem(&a.pred, &["pgm"])?;
    let mut counts = ConfusionCounts::new(classes, ctx.cfg.eval.ignore_label)?;
    for (name, g) in &gt {
        let p = matching(name, &pred, "prediction")?;
        counts.add(&io::read_pgm8(p)?, &io::read_pgm8(g)?)?;
    }
    let extra = pred.keys().filter(|k| !gt.contains_key(*k)).count();
    if extra > 0 {
        ctx.warnings.push(format!("{extra} predictions have no ground truth and were ignored"));
    }
    let report = counts.report()?;
    let per_class: Vec<Value> = report
        .per_class
        .iter()
        .enumerate()
        .map(|(c, iou)| {
            json!({ "class": c, "name": names.as_ref().map(|n| n[c].clone()), "iou": iou })
        })
        .collect();
    let result = json!({
        "images": gt.len(),
        "classes": classes,
        "miou": report.miou,
        "present_classes": report.present_classes,
        "per_class": per_class,
    });
    ctx.write_json("seg.json", &result)?;
    Ok(json!({ "images": gt.len(), "miou": report.miou }))
}

#[derive(Debug, Args)]
pub struct EvalDepthArgs {
    /// Directory of predicted depth maps in metres (PFM or RGTD).
    #[arg(long)]
    pub pred: PathBuf,
    /// Directory of ground-truth depth maps, matched by file name.
    #[arg(long)]
    pub gt: PathBuf,
    /// Directory of validity masks (8-bit PGM, non-zero = valid).
    #[arg(long)]
    pub mask: Option<PathBuf>,
}

pub fn eval_depth(a: &EvalDepthArgs, ctx: &mut Ctx) -> Result<Value> {
    let exts = ["pfm", "rgtd"];
    let gt = files_by_stem(&a.gt, &exts)?;
    let pred = files_by_stem(&a.pred, &exts)?;
    let masks = a.mask.as_ref().map(|d| files_by_stem(d, &["pgm"])).transpose()?;
    let mut per_image = BTreeMap::new();
    for (name, g) in &gt {
        let p = io::read_depth(matching(name, &pred, "prediction")?)?;
        let mask = masks.as_ref().map(|m| matching(name, m, "mask").and_then(io::read_pgm8)).transpose()?;
        let m = depth_metrics(&p, &io::read_depth(g)?, mask.as_ref())?;
        if m.clamped > 0 {
            ctx.warnings.push(format!("{name}: {} predictions clamped to 1e-3 m for the log error", m.clamped));
        }
        per_image.insert(name.clone(), m);
    }
    let mean = DepthMetrics::mean(&per_image.values().copied().collect::<Vec<_>>())?;
    ctx.write_json("depth.json", &json!({ "images": gt.len(), "mean": mean, "per_image": per_image }))?;
    Ok(json!({ "images": gt.len(), "mean": mean }))
}

// ---------------------------------------------------------------- scaling

#[derive(Debug, Args)]
pub struct ScalingArgs {
    /// JSON array of `{combo, task, value}` runs.
    pub runs: PathBuf,
}

pub fn scaling(a: &ScalingArgs, ctx: &mut Ctx) -> Result<Value> {
    let runs: Vec<ScalingRun> = io::read_json(&a.runs)?;
    let report = scaling_report(&runs)?;
    ctx.write_json("scaling.json", &report)?;
    ctx.write_text("scaling.txt", &report.to_table())?;
    Ok(json!({ "tasks": report.tasks.len(), "runs": runs.len() }))
}
