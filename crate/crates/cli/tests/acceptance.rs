//! Acceptance suite. Every criterion runs independently and prints one
//! PASS/FAIL line; the process fails if any criterion fails.

use std::collections::BTreeMap;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::{Rotation3, Unit, Vector3};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rgbt_core::crossmodal::{
    infonce_loss, l2_normalize, toy_distill, triplet_margin_loss, EmbeddingSet, Locations, Metric, Modality,
    ToyDistillConfig,
};
use rgbt_core::dataset::{dataset_stats, DatasetManifest, Environment, FrameRef, SequenceRecord, StatsConfig};
use rgbt_core::evaluate::{
    depth_metrics, dice_loss, knn_rank, knn_retrieve, miou, positives_from_radius, recall_at_k, weighted_mean_recall,
    RetrievalResult,
};
use rgbt_core::geometry::{backproject, project, CameraModel, PixelCoord, Point3, RigidTransform};
use rgbt_core::registration::{lift_rgb, register_pair, register_pair_with, Rig, DEFAULT_DEPTH_TOL};
use rgbt_core::thermalproc::{thermal_to_8bit, FfcEvent, ThermalFrame16, ThermalPipelineConfig};
use rgbt_core::{DepthMap, Exec, Gray16, Gray8};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn within(elapsed: Duration, limit_s: u64) -> Result<(), String> {
    if elapsed > Duration::from_secs(limit_s) {
        Err(format!("took {:.2} s, limit {limit_s} s", elapsed.as_secs_f64()))
    } else {
        Ok(())
    }
}

fn random_rotation(rng: &mut impl Rng, max_angle: f64) -> Rotation3<f64> {
    let axis = Unit::new_normalize(Vector3::new(
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
    ));
    Rotation3::from_axis_angle(&axis, rng.random_range(-max_angle..max_angle))
}

fn random_pinhole(rng: &mut impl Rng, w: usize, h: usize) -> CameraModel {
    let f = rng.random_range(30.0..400.0);
    CameraModel::pinhole(
        f,
        f * rng.random_range(0.9..1.1),
        w as f64 / 2.0 + rng.random_range(-3.0..3.0),
        h as f64 / 2.0 + rng.random_range(-3.0..3.0),
        w,
        h,
    )
    .unwrap()
}

// 1
fn geometry_round_trip() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut worst_px, mut worst_iso) = (0.0f64, 0.0f64);
    for _ in 0..10 {
        let cam = random_pinhole(&mut rng, 640, 480);
        for _ in 0..10_000 {
            let p = PixelCoord::new(rng.random_range(0.0..640.0), rng.random_range(0.0..480.0));
            let d = rng.random_range(0.1..100.0);
            let (q, z) = project(&backproject(p, d, &cam).unwrap(), &cam).unwrap();
            worst_px = worst_px.max((q.u - p.u).abs()).max((q.v - p.v).abs()).max((z - d).abs() / d);
        }
        let t = RigidTransform::new(
            *random_rotation(&mut rng, std::f64::consts::PI).matrix(),
            Vector3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)),
        )
        .unwrap();
        for _ in 0..10_000 {
            let a = Point3::new(rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0));
            let b = Point3::new(rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0));
            let before = (a - b).norm();
            let after = (t.transform_point(&a) - t.transform_point(&b)).norm();
            let back = t.inverse().transform_point(&t.transform_point(&a));
            worst_iso = worst_iso.max((before - after).abs()).max((back - a).norm());
        }
    }
    ensure!(worst_px < 1e-9, "round-trip error {worst_px:e}");
    ensure!(worst_iso < 1e-9, "isometry error {worst_iso:e}");
    within(start.elapsed(), 5)?;
    Ok(format!("round-trip {worst_px:.1e}, isometry {worst_iso:.1e}, {:.2} s", start.elapsed().as_secs_f64()))
}

/// Per-pixel result of the painter's-algorithm reference.
#[derive(Clone, Default)]
struct PainterPixel {
    front: Option<f64>,
    layers: Vec<(f64, u64, u8)>,
}

fn footprint(u: f64, v: f64) -> Vec<(i64, i64, u64)> {
    const S: f64 = 4096.0;
    let (x0, y0) = (u.floor(), v.floor());
    let fx = ((u - x0) * S).round() as u64;
    let fy = ((v - y0) * S).round() as u64;
    let s = S as u64;
    let (x0, y0) = (x0 as i64, y0 as i64);
    vec![
        (x0, y0, (s - fx) * (s - fy)),
        (x0 + 1, y0, fx * (s - fy)),
        (x0, y0 + 1, (s - fx) * fy),
        (x0 + 1, y0 + 1, fx * fy),
    ]
}

/// Samples are painted far to near. A new front discards every layer that
/// is now more than `tol` behind it.
fn painter(rgb: &Gray8, depth: &DepthMap, rig: &Rig, tol: f64) -> Vec<PainterPixel> {
    let (w, h) = (rig.thermal.width, rig.thermal.height);
    let mut samples = Vec::new();
    for y in 0..depth.height() {
        for x in 0..depth.width() {
            let d = depth.get(x, y);
            if !(d > 0.0 && d.is_finite()) {
                continue;
            }
            let p = backproject(PixelCoord::new(x as f64, y as f64), d as f64, &rig.rgb).unwrap();
            let Ok((px, z)) = project(&rig.rgb_to_thermal.transform_point(&p), &rig.thermal) else {
                continue;
            };
            samples.push((z, px.u, px.v, rgb.get(x, y)));
        }
    }
    samples.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut out = vec![PainterPixel::default(); w * h];
    for (z, u, v, value) in samples {
        for (x, y, wgt) in footprint(u, v) {
            if wgt == 0 || x < 0 || y < 0 || x >= w as i64 || y >= h as i64 {
                continue;
            }
            let px = &mut out[y as usize * w + x as usize];
            if px.front.is_none_or(|f| z <= f) {
                px.front = Some(z);
                px.layers.retain(|l| l.0 <= z * (1.0 + tol));
            }
            px.layers.push((z, wgt, value));
        }
    }
    out
}

fn two_plane_scene(rng: &mut impl Rng, n: usize) -> (Gray8, DepthMap) {
    let rgb = Gray8::from_fn(n, n, |_, _| rng.random());
    let (a, bx, by) = (rng.random_range(5.0..8.0), rng.random_range(-0.02..0.02), rng.random_range(-0.02..0.02));
    let (x0, x1) = (rng.random_range(5..25), rng.random_range(35..60));
    let (y0, y1) = (rng.random_range(5..25), rng.random_range(35..60));
    let near = rng.random_range(1.5..3.0);
    let depth = DepthMap::from_fn(n, n, |x, y| {
        if (x0..x1).contains(&x) && (y0..y1).contains(&y) {
            near
        } else {
            (a + bx * x as f64 + by * y as f64) as f32
        }
    });
    (rgb, depth)
}

// 2
fn registration_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let n = 64;
    let mut compared = 0usize;
    for rig_idx in 0..20 {
        let rgb_cam = random_pinhole(&mut rng, n, n);
        let thr_cam = CameraModel::pinhole(
            rgb_cam.fx * rng.random_range(0.8..1.2),
            rgb_cam.fy * rng.random_range(0.8..1.2),
            rgb_cam.cx + rng.random_range(-2.0..2.0),
            rgb_cam.cy + rng.random_range(-2.0..2.0),
            n,
            n,
        )
        .unwrap();
        let t = Vector3::new(rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2), rng.random_range(-0.05..0.05));
        let rig = Rig {
            rgb: rgb_cam,
            thermal: thr_cam,
            rgb_to_thermal: RigidTransform::new(*random_rotation(&mut rng, 0.05).matrix(), t).unwrap(),
        };
        let (rgb, depth) = two_plane_scene(&mut rng, n);
        let thermal = Gray8::filled(n, n, 0);
        let got = register_pair(&rgb, &depth, &rig, &thermal, DEFAULT_DEPTH_TOL).map_err(|e| e.to_string())?;
        let seq = register_pair_with(&rgb, &depth, &rig, &thermal, DEFAULT_DEPTH_TOL, Exec::Sequential)
            .map_err(|e| e.to_string())?;
        ensure!(got == seq, "rig {rig_idx}: execution policies disagree");
        let oracle = painter(&rgb, &depth, &rig, DEFAULT_DEPTH_TOL);
        let mut occlusion = 0;
        let mut payload = 0;
        for (i, px) in oracle.iter().enumerate() {
            let wsum: u64 = px.layers.iter().map(|l| l.1).sum();
            let defined = got.mask.data()[i] > 0.0;
            if defined != (wsum > 0) {
                occlusion += 1;
                continue;
            }
            if !defined {
                continue;
            }
            if got.depth.data()[i] != px.front.unwrap() as f32 {
                occlusion += 1;
            }
            let acc: u64 = px.layers.iter().map(|l| l.1 * l.2 as u64).sum();
            if got.warped.data()[i] as u64 != (2 * acc + wsum) / (2 * wsum) {
                payload += 1;
            }
            compared += 1;
        }
        ensure!(occlusion == 0, "rig {rig_idx}: {occlusion} occlusion violations");
        ensure!(payload == 0, "rig {rig_idx}: {payload} payload mismatches");
    }

    let cam = random_pinhole(&mut rng, n, n);
    let rig = Rig { rgb: cam, thermal: cam, rgb_to_thermal: RigidTransform::identity() };
    let (rgb, depth) = two_plane_scene(&mut rng, n);
    let got = register_pair(&rgb, &depth, &rig, &Gray8::filled(n, n, 0), DEFAULT_DEPTH_TOL).map_err(|e| e.to_string())?;
    ensure!(got.warped == rgb, "identity rig changed the image");
    ensure!(got.mask.data().iter().all(|&m| m == 1.0), "identity rig mask is not all ones");
    ensure!(got.depth == depth, "identity rig changed the depth");
    within(start.elapsed(), 30)?;
    Ok(format!("20 rigs, {compared} pixels compared, identity exact, {:.2} s", start.elapsed().as_secs_f64()))
}

// 3
fn planar_shift() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let cam = random_pinhole(&mut rng, 48, 40);
        let h = rng.random_range(-0.3..0.3);
        let d = rng.random_range(1.0..20.0);
        let rig = Rig { rgb: cam, thermal: cam, rgb_to_thermal: RigidTransform::from_translation(Vector3::new(0.0, h, 0.0)) };
        let depth = DepthMap::filled(48, 40, d as f32);
        let d = d as f32 as f64;
        let rgb = Gray8::filled(48, 40, 1);
        let samples = lift_rgb(&depth, &rgb, &rig).map_err(|e| e.to_string())?;
        ensure!(!samples.is_empty(), "no samples");
        let expected = cam.fy * h / d;
        for s in &samples {
            let (x, y) = (s.u.round(), (s.v - expected).round());
            worst = worst.max((s.u - x).abs()).max(((s.v - y) - expected).abs());
        }
    }
    ensure!(worst < 1e-6, "shift error {worst:e}");
    Ok(format!("max deviation from fy*h/d {worst:.1e} px"))
}

fn ref_minmax(img: &Gray16) -> Gray8 {
    let min = *img.data().iter().min().unwrap() as f64;
    let max = *img.data().iter().max().unwrap() as f64;
    img.map(|v| (255.0 * (v as f64 - min) / (max - min)).round() as u8)
}

fn ref_tile_lut(img: &Gray8, xs: (usize, usize), ys: (usize, usize), clip: f64) -> Vec<u8> {
    let mut hist = vec![0u32; 256];
    for y in ys.0..ys.1 {
        for x in xs.0..xs.1 {
            hist[img.get(x, y) as usize] += 1;
        }
    }
    let n = ((xs.1 - xs.0) * (ys.1 - ys.0)) as u32;
    let limit = ((clip * n as f64 / 256.0).floor() as u32).max(1);
    let mut excess = 0;
    for b in hist.iter_mut() {
        if *b > limit {
            excess += *b - limit;
            *b = limit;
        }
    }
    for b in hist.iter_mut() {
        *b += excess / 256;
    }
    let residual = (excess % 256) as usize;
    if residual > 0 {
        let step = (256 / residual).max(1);
        for i in (0..256).step_by(step).take(residual) {
            hist[i] += 1;
        }
    }
    let mut cdf = 0u32;
    hist.iter()
        .map(|&b| {
            cdf += b;
            (255.0 * cdf as f64 / n as f64).round().min(255.0) as u8
        })
        .collect()
}

fn ref_clahe(img: &Gray8, tiles: usize, clip: f64) -> Gray8 {
    let (w, h) = img.dims();
    let bx: Vec<usize> = (0..=tiles).map(|i| i * w / tiles).collect();
    let by: Vec<usize> = (0..=tiles).map(|i| i * h / tiles).collect();
    let mut luts = vec![vec![]; tiles * tiles];
    for j in 0..tiles {
        for i in 0..tiles {
            luts[j * tiles + i] = ref_tile_lut(img, (bx[i], bx[i + 1]), (by[j], by[j + 1]), clip);
        }
    }
    let locate = |pos: usize, b: &[usize]| -> (usize, usize, f64) {
        let c = |i: usize| (b[i] + b[i + 1] - 1) as f64 / 2.0;
        let p = pos as f64;
        if p <= c(0) {
            return (0, 0, 0.0);
        }
        if p >= c(tiles - 1) {
            return (tiles - 1, tiles - 1, 0.0);
        }
        let mut i = 0;
        while c(i + 1) <= p {
            i += 1;
        }
        (i, i + 1, (p - c(i)) / (c(i + 1) - c(i)))
    };
    Gray8::from_fn(w, h, |x, y| {
        let (i0, i1, ax) = locate(x, &bx);
        let (j0, j1, ay) = locate(y, &by);
        let v = img.get(x, y) as usize;
        let l = |j: usize, i: usize| luts[j * tiles + i][v] as f64;
        let top = l(j0, i0) * (1.0 - ax) + l(j0, i1) * ax;
        let bottom = l(j1, i0) * (1.0 - ax) + l(j1, i1) * ax;
        (top * (1.0 - ay) + bottom * ay).round() as u8
    })
}

fn ref_bilateral(img: &Gray8, r: i64, sc: f64, ss: f64) -> Gray8 {
    let (w, h) = (img.width() as i64, img.height() as i64);
    Gray8::from_fn(img.width(), img.height(), |x, y| {
        let c = img.get(x, y) as i32;
        let (mut num, mut den) = (0.0, 0.0);
        for dy in -r..=r {
            for dx in -r..=r {
                let v = img.get((x as i64 + dx).clamp(0, w - 1) as usize, (y as i64 + dy).clamp(0, h - 1) as usize) as i32;
                let ws = (-((dx * dx + dy * dy) as f64) / (2.0 * ss * ss)).exp();
                let wc = (-(((v - c) * (v - c)) as f64) / (2.0 * sc * sc)).exp();
                let wgt = ws * wc;
                num += wgt * v as f64;
                den += wgt;
            }
        }
        (num / den).round().clamp(0.0, 255.0) as u8
    })
}

// 4
fn thermal_bit_equality() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let cfg = ThermalPipelineConfig::default();
    ensure!(cfg.tiles_x == 8 && cfg.tiles_y == 8 && cfg.clip_limit == 2.0, "unexpected CLAHE defaults");
    for f in 0..50 {
        let base = rng.random_range(6000.0..9000.0);
        let span = rng.random_range(20.0..3000.0);
        let (cx, cy) = (rng.random_range(0.0..128.0), rng.random_range(0.0..128.0));
        let noise = rng.random_range(0.0..0.2);
        let img = Gray16::from_fn(128, 128, |x, y| {
            let r2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
            let blob = (-r2 / 800.0).exp();
            (base + span * (0.6 * blob + 0.2 * y as f64 / 128.0 + noise * rng.random::<f64>())) as u16
        });
        let got = thermal_to_8bit(&ThermalFrame16 { image: img.clone(), timestamp_ns: f }, &cfg).map_err(|e| e.to_string())?;
        ensure!(!got.degenerate, "frame {f} flagged degenerate");
        let expected = ref_bilateral(&ref_clahe(&ref_minmax(&img), 8, 2.0), cfg.radius as i64, cfg.sigma_color, cfg.sigma_space);
        let diff = got.frame.image.data().iter().zip(expected.data()).filter(|(a, b)| a != b).count();
        ensure!(diff == 0, "frame {f}: {diff} pixels differ from the reference");
    }
    within(start.elapsed(), 60)?;
    Ok(format!("50 frames bit-equal, {:.2} s", start.elapsed().as_secs_f64()))
}

/// Worst element error relative to the gradient's scale. The scale is
/// floored so saturated instances, whose gradients vanish below the
/// finite-difference round-off, do not divide noise by zero.
fn rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    let scale = analytic.iter().chain(numeric).fold(1e-3f64, |m, v| m.max(v.abs()));
    analytic.iter().zip(numeric).fold(0.0f64, |m, (a, n)| m.max((a - n).abs())) / scale
}

fn central_diff(x: &[f64], f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let h = 1e-6;
    let mut x = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = x[i];
            x[i] = orig + h;
            let up = f(&x);
            x[i] = orig - h;
            let down = f(&x);
            x[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

fn random_array(rng: &mut impl Rng, r: usize, c: usize, lo: f64, hi: f64) -> Array2<f64> {
    Array2::from_shape_fn((r, c), |_| rng.random_range(lo..hi))
}

// 5
fn loss_gradients() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut w_nce, mut w_tri, mut w_dice) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..100 {
        let (b, d) = (rng.random_range(2..10), rng.random_range(2..12));
        let tau = rng.random_range(0.05..0.5);
        let teacher = l2_normalize(random_array(&mut rng, b, d, -1.0, 1.0).view()).0;
        let student = l2_normalize(random_array(&mut rng, b, d, -1.0, 1.0).view()).0;
        let (_, grad) = infonce_loss(student.view(), teacher.view(), tau).map_err(|e| e.to_string())?;
        let numeric = central_diff(student.as_slice().unwrap(), |x| {
            let s = Array2::from_shape_vec((b, d), x.to_vec()).unwrap();
            infonce_loss(s.view(), teacher.view(), tau).unwrap().0
        });
        w_nce = w_nce.max(rel_err(grad.as_slice().unwrap(), &numeric));
    }
    let mut tri = 0;
    while tri < 100 {
        let d = rng.random_range(2..12);
        let metric = if tri % 2 == 0 { Metric::Euclidean } else { Metric::Cosine };
        let margin = rng.random_range(0.0..1.0);
        let v: Vec<f64> = (0..3 * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let eval = |x: &[f64]| {
            let (a, p, n) = (&x[..d], &x[d..2 * d], &x[2 * d..]);
            triplet_margin_loss(a.into(), p.into(), n.into(), margin, metric).unwrap()
        };
        let out = eval(&v);
        // keep away from the hinge, where the loss is not differentiable
        let raw = out.loss;
        if raw != 0.0 && raw < 1e-3 || raw == 0.0 && {
            let (a, p, n) = (&v[..d], &v[d..2 * d], &v[2 * d..]);
            let dp = rgbt_core::crossmodal::distance(a.into(), p.into(), metric);
            let dn = rgbt_core::crossmodal::distance(a.into(), n.into(), metric);
            dp - dn + margin > -1e-3
        } {
            continue;
        }
        let analytic: Vec<f64> = out.grad_anchor.iter().chain(&out.grad_positive).chain(&out.grad_negative).copied().collect();
        let numeric = central_diff(&v, |x| eval(x).loss);
        w_tri = w_tri.max(rel_err(&analytic, &numeric));
        tri += 1;
    }
    for _ in 0..100 {
        let (n, c) = (rng.random_range(4..40), rng.random_range(2..8));
        let probs = random_array(&mut rng, n, c, 0.01, 1.0);
        let mut gt = Array2::zeros((n, c));
        for i in 0..n {
            gt[(i, rng.random_range(0..c))] = 1.0;
        }
        let eps = rng.random_range(0.0..1.0);
        let (_, grad) = dice_loss(probs.view(), gt.view(), eps).map_err(|e| e.to_string())?;
        let numeric = central_diff(probs.as_slice().unwrap(), |x| {
            let p = Array2::from_shape_vec((n, c), x.to_vec()).unwrap();
            dice_loss(p.view(), gt.view(), eps).unwrap().0
        });
        w_dice = w_dice.max(rel_err(grad.as_slice().unwrap(), &numeric));
    }
    ensure!(w_nce < 1e-5 && w_tri < 1e-5 && w_dice < 1e-5, "infonce {w_nce:e}, triplet {w_tri:e}, dice {w_dice:e}");
    Ok(format!("max rel err infonce {w_nce:.1e}, triplet {w_tri:.1e}, dice {w_dice:.1e}"))
}

// 6
fn toy_distillation() -> Outcome {
    let start = Instant::now();
    let cfg = ToyDistillConfig { seed: 7, ..ToyDistillConfig::default() };
    ensure!(
        cfg.noise == 0.01 && cfg.latent_dim == 8 && cfg.teacher_dim == 32 && cfg.thermal_dim == 32,
        "unexpected toy defaults"
    );
    ensure!(cfg.n_train == 512 && cfg.n_val == 256 && cfg.steps == 2000, "unexpected toy sizes");
    let a = toy_distill(&cfg).map_err(|e| e.to_string())?;
    let b = toy_distill(&cfg).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let p = 1.0 / cfg.n_val as f64;
    let ceiling = p + 3.0 * (p * (1.0 - p) / cfg.n_val as f64).sqrt();
    ensure!(a.initial_recall() <= ceiling, "initial recall {} above chance ceiling {ceiling}", a.initial_recall());
    ensure!(a.final_recall() >= 0.95, "final recall {}", a.final_recall());
    ensure!(a.loss_csv() == b.loss_csv() && a.recall_csv() == b.recall_csv(), "histories differ between runs");
    within(elapsed / 2, 60)?;
    Ok(format!(
        "R@1 {:.4} -> {:.4}, histories identical, {:.2} s per run",
        a.initial_recall(),
        a.final_recall(),
        elapsed.as_secs_f64() / 2.0
    ))
}

fn oracle_rank(q: &Array2<f64>, db: &Array2<f64>, qi: usize, k: usize, skip: &[usize]) -> Vec<usize> {
    let mut scored: Vec<(f64, usize)> = (0..db.nrows())
        .filter(|j| !skip.contains(j))
        .map(|j| {
            let d: f64 = q.row(qi).iter().zip(db.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
            (d, j)
        })
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    scored.into_iter().take(k).map(|s| s.1).collect()
}

// 7
fn retrieval_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut boundary_hits = 0usize;
    let mut paired_total = 0usize;
    for inst in 0..50 {
        let n_db = rng.random_range(20..=500);
        let n_q = rng.random_range(5..=100);
        let dim = rng.random_range(2..6);
        let radius = rng.random_range(2..6) as f64;
        let k = rng.random_range(1..12);
        // small integers: exact distances, many ties, points on the ball boundary
        let grid = |rng: &mut ChaCha8Rng| [rng.random_range(0..30) as f64, rng.random_range(0..30) as f64, 0.0];
        let db_vec = Array2::from_shape_fn((n_db, dim), |_| rng.random_range(-2..=2) as f64);
        let q_vec = Array2::from_shape_fn((n_q, dim), |_| rng.random_range(-2..=2) as f64);
        let db_pos: Vec<[f64; 3]> = (0..n_db).map(|_| grid(&mut rng)).collect();
        let db_ids: Vec<String> = (0..n_db).map(|j| format!("s/{j}")).collect();
        let mut q_pos = Vec::new();
        let mut q_ids = Vec::new();
        for i in 0..n_q {
            if rng.random_bool(0.5) {
                let j = rng.random_range(0..n_db);
                if !q_ids.contains(&db_ids[j]) {
                    q_ids.push(db_ids[j].clone());
                    q_pos.push(db_pos[j]);
                    continue;
                }
            }
            q_ids.push(format!("s/q{i}"));
            q_pos.push(grid(&mut rng));
        }
        let db = EmbeddingSet::new(db_vec.clone(), db_ids.clone(), Locations::Geographic(db_pos.clone()), Modality::Rgb)
            .map_err(|e| e.to_string())?;
        let q = EmbeddingSet::new(q_vec.clone(), q_ids.clone(), Locations::Geographic(q_pos.clone()), Modality::Thermal)
            .map_err(|e| e.to_string())?;

        let plain = knn_retrieve(&q, &db, k, Metric::Euclidean).map_err(|e| e.to_string())?;
        let pos = positives_from_radius(&q, &db, radius).map_err(|e| e.to_string())?;
        let (ranked, _) = knn_rank(q_vec.view(), db_vec.view(), k, Metric::Euclidean, Some(&pos.paired), Exec::default())
            .map_err(|e| e.to_string())?;
        let mut hits = vec![0usize; 3];
        let mut evaluated = 0usize;
        for qi in 0..n_q {
            ensure!(plain[qi] == oracle_rank(&q_vec, &db_vec, qi, k, &[]), "instance {inst}: plain ranking of query {qi}");
            let paired: Vec<usize> = (0..n_db).filter(|&j| db_ids[j] == q_ids[qi]).collect();
            paired_total += paired.len();
            ensure!(pos.paired[qi] == paired, "instance {inst}: paired row of query {qi}");
            ensure!(ranked[qi] == oracle_rank(&q_vec, &db_vec, qi, k, &paired), "instance {inst}: ranking of query {qi}");
            let r2 = radius * radius;
            let positives: Vec<usize> = (0..n_db)
                .filter(|j| !paired.contains(j))
                .filter(|&j| {
                    let d2 = (q_pos[qi][0] - db_pos[j][0]).powi(2) + (q_pos[qi][1] - db_pos[j][1]).powi(2);
                    boundary_hits += (d2 == r2) as usize;
                    d2 <= r2
                })
                .collect();
            ensure!(pos.positives[qi] == positives, "instance {inst}: positives of query {qi}");
            if !positives.is_empty() {
                evaluated += 1;
                for (slot, kk) in [1, 5, k].into_iter().enumerate() {
                    hits[slot] += ranked[qi].iter().take(kk).any(|j| positives.contains(j)) as usize;
                }
            }
        }
        let res = RetrievalResult { ranked, positives: pos.positives };
        if evaluated > 0 {
            for (slot, kk) in [1, 5, k].into_iter().enumerate() {
                let r = recall_at_k(&res, kk).map_err(|e| e.to_string())?;
                ensure!(r.recall == hits[slot] as f64 / evaluated as f64, "instance {inst}: R@{kk}");
                ensure!(r.evaluated == evaluated && r.dropped == n_q - evaluated, "instance {inst}: query counts");
            }
        } else {
            ensure!(recall_at_k(&res, 1).is_err(), "instance {inst}: recall with no positives must be undefined");
        }
    }
    ensure!(boundary_hits > 0 && paired_total > 0, "instances never exercised the boundary or pairing");
    let per_seq: Vec<(f64, usize)> = (0..7).map(|i| (i as f64 / 7.0, 3 * i + 1)).collect();
    let num: f64 = per_seq.iter().map(|&(r, n)| r * n as f64).sum();
    let den: usize = per_seq.iter().map(|p| p.1).sum();
    ensure!(weighted_mean_recall(&per_seq).map_err(|e| e.to_string())? == num / den as f64, "weighted mean");
    Ok(format!("50 instances exact, {boundary_hits} boundary positives, {paired_total} paired exclusions"))
}

// 8
fn metric_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let gt = DepthMap::from_fn(40, 30, |_, _| rng.random_range(0.5f32..80.0));
    let perfect = depth_metrics(&gt, &gt, None).map_err(|e| e.to_string())?;
    ensure!(
        perfect.abs_rel == 0.0 && perfect.sq_rel == 0.0 && perfect.rmse == 0.0 && perfect.rmse_log == 0.0,
        "perfect depth gives {perfect:?}"
    );
    let double = gt.map(|d| 2.0 * d);
    let m = depth_metrics(&double, &gt, None).map_err(|e| e.to_string())?;
    ensure!((m.rmse_log - 2f64.ln()).abs() < 1e-9, "uniform 2x gives RMSElog {}", m.rmse_log);
    let labels = Gray8::from_fn(40, 30, |_, _| rng.random_range(0..6));
    let same = miou(&labels, &labels, 6, None).map_err(|e| e.to_string())?;
    ensure!(same.miou == 1.0, "identical labels give mIoU {}", same.miou);
    let a = Gray8::from_fn(40, 30, |x, _| if x < 20 { 1 } else { 0 });
    let b = a.map(|v| 1 - v);
    let disjoint = miou(&b, &a, 2, None).map_err(|e| e.to_string())?;
    ensure!(disjoint.miou == 0.0, "disjoint masks give mIoU {}", disjoint.miou);
    Ok(format!("RMSElog(2x) - ln 2 = {:.1e}", m.rmse_log - 2f64.ln()))
}

const FRAME_NS: i64 = 33_333_333;
const SEC: i64 = 1_000_000_000;

fn synthetic_sequence(
    name: &str,
    env: Environment,
    sync: bool,
    seconds: i64,
    rgb_period: i64,
    rgb_offset: i64,
    ffc: &[(i64, i64)],
) -> SequenceRecord {
    let frames = |period: i64, offset: i64, kind: &str| -> Vec<FrameRef> {
        (0..)
            .map(|k| k * period + offset)
            .take_while(|&t| t < seconds * SEC)
            .enumerate()
            .map(|(k, t)| FrameRef { path: PathBuf::from(format!("{name}/{kind}/{k}")), t_ns: t, depth: None })
            .collect()
    };
    SequenceRecord {
        name: name.into(),
        environment: env,
        hardware_sync: sync,
        rgb: frames(rgb_period, rgb_offset, "rgb"),
        thermal: frames(FRAME_NS, 0, "thermal"),
        ffc: ffc.iter().map(|&(a, b)| FfcEvent { start_ns: a, end_ns: b }).collect(),
        position_kind: Default::default(),
        positions: vec![],
    }
}

// 9
fn dataset_bookkeeping() -> Outcome {
    let ms = 1_000_000;
    // Thermal runs at 30 Hz, so the 1 Hz grid picks frames 0, 30, 60, ...
    // each 10 ns before the whole second.
    let cases = [
        // 10 grid frames, the FFC at 3.5-4.05 s (+-100 ms guard) removes the 4 s frame
        (synthetic_sequence("hall", Environment::Indoor, true, 10, FRAME_NS, 0, &[(3500 * ms, 4050 * ms)]), 9),
        // 10 grid frames, two FFC events remove 0 s and 7 s; 20 ms offset is within 50 ms
        (
            synthetic_sequence("trail", Environment::Offroad, false, 10, FRAME_NS, 20 * ms, &[(0, 50 * ms), (6950 * ms, 7000 * ms)]),
            8,
        ),
        // 15 ms offset exceeds the 10 ms synced tolerance
        (synthetic_sequence("street_a", Environment::UrbanDrive, true, 5, FRAME_NS, 15 * ms, &[]), 0),
        (synthetic_sequence("street_b", Environment::UrbanDrive, true, 4, FRAME_NS, 5 * ms, &[]), 4),
        // 10 Hz RGB: every whole second has an RGB frame 10 ns away
        (synthetic_sequence("flight", Environment::Aerial, false, 3, 100 * ms, 0, &[]), 3),
    ];
    let manifest = DatasetManifest {
        schema: rgbt_core::dataset::MANIFEST_SCHEMA,
        name: "bookkeeping".into(),
        sequences: cases.iter().map(|c| c.0.clone()).collect(),
    };
    manifest.validate().map_err(|e| e.to_string())?;
    let stats = dataset_stats(&manifest, &StatsConfig::default()).map_err(|e| e.to_string())?;
    for (seq, expected) in &cases {
        let got = stats.per_sequence[&seq.name];
        ensure!(got == *expected, "{}: {got} pairs, expected {expected}", seq.name);
    }
    let expected_env: BTreeMap<&str, usize> =
        [("indoor", 9), ("offroad", 8), ("urban-drive", 4), ("aerial", 3), ("urban-park", 0)].into();
    for (env, n) in &expected_env {
        ensure!(stats.per_environment[*env].pairs == *n, "{env}: {} pairs", stats.per_environment[*env].pairs);
    }
    let env_sum: usize = stats.per_environment.values().map(|e| e.pairs).sum();
    let seq_sum: usize = stats.per_sequence.values().sum();
    ensure!(stats.total == 24 && env_sum == 24 && seq_sum == 24, "totals {} / {env_sum} / {seq_sum}", stats.total);
    Ok("per-sequence, per-environment and total counts match (24 pairs)".into())
}

fn mini_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mini")
}

fn run_pipeline(out: &Path, extra: &[&str]) -> Result<(), String> {
    let data = mini_dir();
    let d = |p: &str| data.join(p).to_string_lossy().into_owned();
    let steps: Vec<Vec<String>> = vec![
        vec!["validate".into()],
        vec!["thermal8".into()],
        vec!["rectify".into()],
        vec!["register".into()],
        vec!["pair".into()],
        vec!["subsample".into()],
        vec!["stats".into()],
        vec!["mine-triplets".into(), "--rgb".into(), d("embeddings/db_rgb.rgte"), "--thermal".into(), d("embeddings/queries_thermal.rgte")],
        vec!["distill-toy".into()],
        vec!["eval-vpr".into(), "--db".into(), d("embeddings/db_rgb.rgte"), "--queries".into(), d("embeddings/queries_thermal.rgte")],
        vec!["eval-seg".into(), "--pred".into(), d("seg/pred"), "--gt".into(), d("seg/gt"), "--class-names".into(), d("seg/class_names.json")],
        vec!["eval-depth".into(), "--pred".into(), d("depth_eval/pred"), "--gt".into(), d("depth_eval/gt"), "--mask".into(), d("depth_eval/mask")],
        vec!["scaling-report".into(), d("scaling_runs.json")],
    ];
    for step in steps {
        let status = Command::new(env!("CARGO_BIN_EXE_rgbt"))
            .arg("--config")
            .arg(data.join("config.toml"))
            .arg("--out-dir")
            .arg(out)
            .args(extra)
            .args(&step)
            .output()
            .map_err(|e| e.to_string())?;
        ensure!(status.status.success(), "{} failed: {}", step[0], String::from_utf8_lossy(&status.stderr));
    }
    Ok(())
}

fn artifact_tree(root: &Path) -> Result<BTreeMap<PathBuf, Vec<u8>>, String> {
    let mut out = BTreeMap::new();
    for entry in walkdir::WalkDir::new(root) {
        let entry = entry.map_err(|e| e.to_string())?;
        if entry.file_type().is_file() {
            let rel = entry.path().strip_prefix(root).unwrap().to_path_buf();
            out.insert(rel, std::fs::read(entry.path()).map_err(|e| e.to_string())?);
        }
    }
    Ok(out)
}

// 10
fn end_to_end_determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    run_pipeline(&a, &["--seed", "7"])?;
    run_pipeline(&b, &["--seed", "7", "--workers", "1"])?;
    let (ta, tb) = (artifact_tree(&a)?, artifact_tree(&b)?);
    ensure!(ta.len() > 50, "only {} artifacts written", ta.len());
    ensure!(ta.keys().eq(tb.keys()), "artifact trees list different files");
    let differing: Vec<_> = ta.iter().filter(|(k, v)| tb[*k] != **v).map(|(k, _)| k.display().to_string()).collect();
    ensure!(differing.is_empty(), "differing artifacts: {}", differing.join(", "));
    let bytes: usize = ta.values().map(|v| v.len()).sum();
    Ok(format!("{} artifacts ({bytes} bytes) identical across runs", ta.len()))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("geometry round-trip", geometry_round_trip),
        ("registration painter oracle", registration_oracle),
        ("planar shift", planar_shift),
        ("thermal pipeline bit-equality", thermal_bit_equality),
        ("loss gradients", loss_gradients),
        ("toy distillation", toy_distillation),
        ("retrieval oracle", retrieval_oracle),
        ("metric identities", metric_identities),
        ("dataset bookkeeping", dataset_bookkeeping),
        ("end-to-end determinism", end_to_end_determinism),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
