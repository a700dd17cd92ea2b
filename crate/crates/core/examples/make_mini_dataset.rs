//! Writes the synthetic mini dataset used by the end-to-end CLI tests.
//!
//! Usage: `cargo run --example make_mini_dataset -- data/mini`
//!
//! Everything is derived from fixed seeds, so re-running reproduces the
//! shipped files byte for byte.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use nalgebra::Rotation3;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde_json::json;

use rgbt_core::calib::Calibration;
use rgbt_core::crossmodal::{EmbeddingSet, Locations, Modality};
use rgbt_core::dataset::{
    DatasetManifest, Environment, FrameRef, PositionKind, PositionSample, SequenceRecord, MANIFEST_SCHEMA,
};
use rgbt_core::geometry::{CameraModel, Distortion, RigidTransform};
use rgbt_core::io;
use rgbt_core::thermalproc::FfcEvent;
use rgbt_core::{DepthMap, Gray16, Gray8, Rgb8, Result};

const W: usize = 48;
const H: usize = 36;
const MS: i64 = 1_000_000;
const T0: i64 = 1_700_000_000_000_000_000;

struct SeqSpec {
    name: &'static str,
    environment: Environment,
    hardware_sync: bool,
    rgb_period_ms: i64,
    thermal_period_ms: i64,
    thermal_offset_ms: i64,
    duration_ms: i64,
    ffc: Vec<(i64, i64)>,
    position_kind: PositionKind,
}

fn specs() -> Vec<SeqSpec> {
    vec![
        SeqSpec {
            name: "indoor_hall",
            environment: Environment::Indoor,
            hardware_sync: true,
            rgb_period_ms: 200,
            thermal_period_ms: 200,
            thermal_offset_ms: 3,
            duration_ms: 3200,
            ffc: vec![(1450, 1650)],
            position_kind: PositionKind::Geographic,
        },
        SeqSpec {
            name: "offroad_trail",
            environment: Environment::Offroad,
            hardware_sync: false,
            rgb_period_ms: 250,
            thermal_period_ms: 200,
            thermal_offset_ms: 20,
            duration_ms: 3000,
            ffc: vec![],
            position_kind: PositionKind::Odometric,
        },
        SeqSpec {
            name: "park_loop",
            environment: Environment::UrbanPark,
            hardware_sync: true,
            rgb_period_ms: 200,
            thermal_period_ms: 200,
            thermal_offset_ms: 0,
            duration_ms: 2600,
            ffc: vec![(-50, 120)],
            position_kind: PositionKind::None,
        },
    ]
}

/// Scene depth seen by the RGB camera: a slanted back wall and a nearer box.
fn depth_at(x: usize, y: usize, phase: f64) -> f32 {
    let box_x = 14.0 + 8.0 * phase.sin();
    let in_box = (x as f64 - box_x).abs() < 7.0 && (12..26).contains(&y);
    if in_box {
        2.0
    } else {
        (4.0 + 0.03 * x as f64 + 0.02 * y as f64) as f32
    }
}

fn rgb_frame(phase: f64) -> Rgb8 {
    Rgb8::from_fn(W, H, |x, y| {
        let d = depth_at(x, y, phase) as f64;
        let stripe = ((x as f64 * 0.7 + phase * 3.0).sin() * 0.5 + 0.5) * 120.0;
        let r = (60.0 + stripe + 10.0 * d) as u8;
        let g = (40.0 + (y * 4) as f64) as u8;
        let b = if d < 3.0 { 200 } else { (80.0 + stripe * 0.5) as u8 };
        [r, g, b]
    })
}

fn thermal_frame(phase: f64, flat: bool) -> Gray16 {
    if flat {
        return Gray16::filled(W, H, 7400);
    }
    Gray16::from_fn(W, H, |x, y| {
        let dx = x as f64 - 24.0 - 8.0 * phase.sin();
        let dy = y as f64 - 18.0;
        let warm = 900.0 * (-(dx * dx + dy * dy) / 60.0).exp();
        let ground = 4.0 * y as f64;
        (7000.0 + warm + ground + 30.0 * (x as f64 * 0.4).cos()) as u16
    })
}

fn calibration() -> Result<Calibration> {
    let mut calib = Calibration::default();
    calib.cameras.insert("rgb".into(), CameraModel::pinhole(42.0, 42.0, 23.5, 17.5, W, H)?);
    calib.cameras.insert(
        "thermal_raw".into(),
        CameraModel::new(38.0, 38.0, 23.5, 17.5, W, H, Distortion::Fisheye4([0.05, -0.01, 0.002, 0.0]))?,
    );
    calib.cameras.insert("thermal".into(), CameraModel::pinhole(38.0, 38.0, 23.5, 17.5, W, H)?);
    let r = Rotation3::from_euler_angles(0.0, 1.0f64.to_radians(), 0.0);
    let m = r.matrix();
    let rotation = [
        m[(0, 0)], m[(0, 1)], m[(0, 2)],
        m[(1, 0)], m[(1, 1)], m[(1, 2)],
        m[(2, 0)], m[(2, 1)], m[(2, 2)],
    ];
    calib
        .transforms
        .insert("rgb_to_thermal".into(), RigidTransform::from_row_major(rotation, [0.06, 0.0, 0.0])?);
    Ok(calib)
}

fn write_sequence(root: &Path, spec: &SeqSpec, rng: &mut ChaCha8Rng) -> Result<SequenceRecord> {
    let dir = PathBuf::from(spec.name);
    let mut rgb = Vec::new();
    let mut k = 0;
    while k * spec.rgb_period_ms < spec.duration_ms {
        let t_ms = k * spec.rgb_period_ms;
        let phase = t_ms as f64 / 1000.0;
        let path = dir.join(format!("rgb/{k:03}.ppm"));
        let depth = dir.join(format!("depth/{k:03}.pfm"));
        io::write_ppm(root.join(&path), &rgb_frame(phase))?;
        io::write_pfm(root.join(&depth), &DepthMap::from_fn(W, H, |x, y| depth_at(x, y, phase)))?;
        rgb.push(FrameRef { path, t_ns: T0 + t_ms * MS, depth: Some(depth) });
        k += 1;
    }
    let mut thermal = Vec::new();
    let mut k = 0;
    while k * spec.thermal_period_ms + spec.thermal_offset_ms < spec.duration_ms {
        let t_ms = k * spec.thermal_period_ms + spec.thermal_offset_ms;
        let flat = spec.ffc.iter().any(|&(a, b)| a <= t_ms && t_ms <= b);
        let path = dir.join(format!("thermal/{k:03}.pgm"));
        io::write_pgm16(root.join(&path), &thermal_frame(t_ms as f64 / 1000.0, flat))?;
        thermal.push(FrameRef { path, t_ns: T0 + t_ms * MS, depth: None });
        k += 1;
    }
    let positions = match spec.position_kind {
        PositionKind::None => vec![],
        _ => (0..=(spec.duration_ms / 500))
            .map(|i| {
                let t = i as f64 * 0.5;
                PositionSample {
                    t_ns: T0 + i * 500 * MS,
                    x: 1.5 * t + rng.random_range(-0.05..0.05),
                    y: 0.3 * (t * PI / 3.0).sin(),
                    z: 0.0,
                }
            })
            .collect(),
    };
    Ok(SequenceRecord {
        name: spec.name.into(),
        environment: spec.environment,
        hardware_sync: spec.hardware_sync,
        rgb,
        thermal,
        ffc: spec.ffc.iter().map(|&(a, b)| FfcEvent { start_ns: T0 + a * MS, end_ns: T0 + b * MS }).collect(),
        position_kind: spec.position_kind,
        positions,
    })
}

/// Place descriptors observed by both modalities: RGB rows see the place
/// code directly, thermal rows through a fixed linear distortion.
fn embeddings(root: &Path, rng: &mut ChaCha8Rng) -> Result<()> {
    let dim = 16;
    let places_per_seq = 20;
    let mix = Array2::from_shape_fn((dim, dim), |(i, j)| {
        let base = if i == j { 1.0 } else { 0.0 };
        base + 0.2 * rng.sample::<f64, _>(StandardNormal)
    });
    let mut ids = Vec::new();
    let mut positions = Vec::new();
    let mut codes = Vec::new();
    for (s, seq) in ["indoor_hall", "offroad_trail", "park_loop"].iter().enumerate() {
        // appearance drifts slowly along the route, so neighbouring places look alike
        let mut c: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        for i in 0..places_per_seq {
            ids.push(format!("{seq}/{i:03}"));
            positions.push([s as f64 * 500.0 + i as f64 * 4.0, 0.0, 0.0]);
            codes.push(c.clone());
            for v in &mut c {
                *v = 0.9 * *v + 0.44 * rng.sample::<f64, _>(StandardNormal);
            }
        }
    }
    let n = ids.len();
    let code = Array2::from_shape_fn((n, dim), |(r, c)| codes[r][c]);
    let rgb = &code + &Array2::from_shape_fn((n, dim), |_| 0.15 * rng.sample::<f64, _>(StandardNormal));
    let thermal = code.dot(&mix.t()) + Array2::from_shape_fn((n, dim), |_| 0.25 * rng.sample::<f64, _>(StandardNormal));
    let locs = Locations::Geographic(positions);
    io::write_embeddings(root.join("embeddings/db_rgb.rgte"), &EmbeddingSet::new(rgb, ids.clone(), locs.clone(), Modality::Rgb)?)?;
    io::write_embeddings(root.join("embeddings/queries_thermal.rgte"), &EmbeddingSet::new(thermal, ids, locs, Modality::Thermal)?)?;
    Ok(())
}

fn segmentation(root: &Path, rng: &mut ChaCha8Rng) -> Result<()> {
    let names = ["background", "road", "sidewalk", "building", "vegetation", "sky", "person", "vehicle", "pole"];
    io::write_json(root.join("seg/class_names.json"), &names)?;
    for k in 0..4 {
        let cx = rng.random_range(10.0..38.0);
        let cy = rng.random_range(10.0..26.0);
        let gt = Gray8::from_fn(W, H, |x, y| {
            let (fx, fy) = (x as f64, y as f64);
            if y < 8 {
                5
            } else if (fx - cx).powi(2) + (fy - cy).powi(2) < 25.0 {
                6
            } else if y > 28 {
                if x < 24 { 1 } else { 2 }
            } else if x < 6 {
                8
            } else if x > 40 {
                4
            } else if k % 2 == 0 && (20..24).contains(&y) {
                7
            } else if x < 20 {
                3
            } else {
                0
            }
        });
        let mut pred = gt.clone();
        for v in pred.data_mut() {
            if rng.random_range(0.0..1.0) < 0.12 {
                *v = rng.random_range(0..9);
            }
        }
        let mut gt = gt;
        // unlabeled border
        for x in 0..W {
            gt.set(x, H - 1, 255);
        }
        io::write_pgm8(root.join(format!("seg/gt/{k:03}.pgm")), &gt)?;
        io::write_pgm8(root.join(format!("seg/pred/{k:03}.pgm")), &pred)?;
    }
    Ok(())
}

fn depth_eval(root: &Path, rng: &mut ChaCha8Rng) -> Result<()> {
    for k in 0..3 {
        let phase = k as f64 * 0.7;
        let gt = DepthMap::from_fn(W, H, |x, y| depth_at(x, y, phase) * 3.0);
        let scale = 1.0 + 0.05 * k as f32;
        let pred = DepthMap::from_fn(W, H, |x, y| gt.get(x, y) * scale + rng.random_range(-0.3f32..0.3));
        // sparse lidar-like returns on every fourth row
        let mask = Gray8::from_fn(W, H, |x, y| if y % 4 == 0 && (x + y) % 3 != 0 { 255 } else { 0 });
        io::write_pfm(root.join(format!("depth_eval/gt/{k:03}.pfm")), &gt)?;
        io::write_pfm(root.join(format!("depth_eval/pred/{k:03}.pfm")), &pred)?;
        io::write_pgm8(root.join(format!("depth_eval/mask/{k:03}.pgm")), &mask)?;
    }
    Ok(())
}

fn scaling_runs(root: &Path) -> Result<()> {
    let combos = ["B", "B+V", "B+V+F", "B+V+F+S", "B+V+F+S+T"];
    let mut runs = Vec::new();
    for (i, c) in combos.iter().enumerate().rev() {
        let i = i as f64;
        runs.push(json!({ "combo": c, "task": "vpr_r1", "value": 0.40 + 0.05 * i }));
        runs.push(json!({ "combo": c, "task": "seg_miou", "value": 0.45 + 0.02 * i - 0.004 * i * i }));
        runs.push(json!({ "combo": c, "task": "depth_absrel", "value": 0.12 - 0.006 * i }));
    }
    io::write_json(root.join("scaling_runs.json"), &runs)
}

const CONFIG: &str = r#"# Run configuration for the mini dataset. Paths are relative to this file.
seed = 7

[paths]
manifest = "manifest.json"
calibration = "calib.json"

[thermal]
tiles_x = 4
tiles_y = 4
clip_limit = 2.0

[registration]
alphas = [0.3, 0.7]

[loss]
radius = 10.0
k_hard = 5

[distill]
steps = 400

[eval]
ks = [1, 5]
radius = 10.0
classes = 9
ignore_label = 255
"#;

fn main() -> Result<()> {
    let root = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "data/mini".into()));
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_917);
    let sequences = specs()
        .iter()
        .map(|s| write_sequence(&root, s, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    let manifest = DatasetManifest { schema: MANIFEST_SCHEMA, name: "mini".into(), sequences };
    manifest.validate()?;
    io::write_json(root.join("manifest.json"), &manifest)?;
    io::write_text(root.join("calib.json"), &calibration()?.to_json_string())?;
    embeddings(&root, &mut rng)?;
    segmentation(&root, &mut rng)?;
    depth_eval(&root, &mut rng)?;
    scaling_runs(&root)?;
    io::write_text(root.join("config.toml"), CONFIG)?;
    println!("wrote {}", root.display());
    Ok(())
}
