//! One PASS/FAIL line per acceptance criterion.
//!
//! Run with `cargo test -p tonebench-core --test acceptance -- --nocapture`
//! to see the table.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use common::{
    blob_image, blob_oracle, brute_force_evaluate, chi2_df1_sf_oracle, dunn_oracle, naive_sq_sum, naive_sum,
    pasted_face_scene,
};
use image::{GrayImage, Luma};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;
use tonebench_core::analysis::{dunn_posthoc, kruskal_wallis, Correction};
use tonebench_core::colorimetry::{
    delta_e, delta_e_band, ita_class, lab_to_srgb, srgb_to_lab, ItaClass, LabColor, PerceptibilityBand, SrgbColor,
};
use tonebench_core::extraction::{
    cheek_rois, extract, mmm_estimate, CheekGeometry, ExtractParams, ExtractionInput, KMeansParams, Landmarks, Method,
    RegionSpec, Side,
};
use tonebench_core::face_detect::{detect_faces, Cascade, DetectParams, FaceBox, IntegralImage};
use tonebench_core::imaging::SrgbImage;
use tonebench_core::pipeline::fixtures::shade;
use tonebench_core::pipeline::{
    generate_fixtures, load_manifest, run, FixtureParams, LightingSpec, ProxyShape, RunConfig,
};
use tonebench_core::recolor::{recolor_normalize, recolor_variation, SyntheticBase, Texture};
use tonebench_core::relight::ShLighting;

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn colorimetry_exactness() -> Outcome {
    let t0 = Instant::now();
    let mut worst = 0.0f64;
    for r in 0..32 {
        for g in 0..32 {
            for b in 0..32 {
                let c = SrgbColor::new(f64::from(r) / 31.0, f64::from(g) / 31.0, f64::from(b) / 31.0);
                let back = lab_to_srgb(srgb_to_lab(c)).color;
                for (x, y) in back.to_array().iter().zip(c.to_array()) {
                    worst = worst.max((x - y).abs());
                }
            }
        }
    }
    let bands = [
        PerceptibilityBand::NotPerceptible,
        PerceptibilityBand::CloseObservation,
        PerceptibilityBand::AtAGlance,
        PerceptibilityBand::Noticeable,
        PerceptibilityBand::Strong,
        PerceptibilityBand::Opposite,
    ];
    let edges_ok = [1.0, 2.0, 10.0, 50.0, 99.0]
        .iter()
        .enumerate()
        .all(|(i, &e)| delta_e_band(e) == bands[i] && delta_e_band(e + 1e-9) == bands[i + 1]);
    let classes_ok = [55.0, 41.0, 28.0, 10.0, -30.0].iter().enumerate().all(|(i, &t)| {
        ita_class(t + 1e-9) == ItaClass::ALL[i] && ita_class(t) == ItaClass::ALL[i + 1]
    }) && ita_class(90.0) == ItaClass::I
        && ita_class(-90.0) == ItaClass::VI;
    let secs = t0.elapsed().as_secs_f64();
    check(
        worst <= 0.5 / 255.0 && edges_ok && classes_ok && secs < 5.0,
        format!("round trip max {:.2e} (limit {:.2e}), edges {edges_ok}, classes {classes_ok}, {secs:.2} s", worst, 0.5 / 255.0),
    )
}

fn geometry() -> Outcome {
    let g = CheekGeometry::default();
    let (l, r) = cheek_rois(FaceBox::new(0, 0, 100, 100), (1000, 1000), &g).map_err(|e| e.to_string())?;
    let example = l == RegionSpec { x: 18, y: 50, w: 15, h: 15, side: Side::Left }
        && r == RegionSpec { x: 67, y: 50, w: 15, h: 15, side: Side::Right };
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut equivariant = 0;
    for _ in 0..100 {
        let (x, y) = (rng.random_range(0..400), rng.random_range(0..400));
        let (w, h) = (rng.random_range(14..300), rng.random_range(14..300));
        let (dx, dy) = (rng.random_range(0..200), rng.random_range(0..200));
        let (l0, r0) = cheek_rois(FaceBox::new(x, y, w, h), (2000, 2000), &g).unwrap();
        let (l1, r1) = cheek_rois(FaceBox::new(x + dx, y + dy, w, h), (2000, 2000), &g).unwrap();
        let moved = |a: RegionSpec, b: RegionSpec| (b.x, b.y, b.w, b.h) == (a.x + dx, a.y + dy, a.w, a.h);
        equivariant += usize::from(moved(l0, l1) && moved(r0, r1));
    }
    check(
        example && equivariant == 100,
        format!("left {l:?}, right {r:?}; {equivariant}/100 translated boxes equivariant"),
    )
}

fn mmm_oracle() -> Outcome {
    let want = blob_oracle();
    let (img, mask) = blob_image(1);
    let mut worst = 0.0f64;
    for seed in 0..10 {
        let got = mmm_estimate(&img, &mask, &KMeansParams { seed, ..KMeansParams::default() }).map_err(|e| e.to_string())?;
        for (g, w) in got.lab.to_array().iter().zip(want.to_array()) {
            worst = worst.max((g - w).abs());
        }
    }
    check(worst <= 1e-6, format!("max |Lab - oracle| over 10 seeds {worst:.2e}"))
}

fn detection() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut sums_ok = true;
    for _ in 0..50 {
        let (w, h) = (rng.random_range(1..=11), rng.random_range(1..=9));
        let img = GrayImage::from_fn(w, h, |_, _| Luma([rng.random()]));
        let ii = IntegralImage::new(&img);
        for y in 0..h {
            for x in 0..w {
                for rh in 1..=h - y {
                    for rw in 1..=w - x {
                        sums_ok &= ii.rect_sum(x, y, rw, rh) == naive_sum(&img, x, y, rw, rh)
                            && ii.rect_sq_sum(x, y, rw, rh) == naive_sq_sum(&img, x, y, rw, rh);
                    }
                }
            }
        }
    }
    let c = Cascade::frontal_default();
    let (scene, pasted) = pasted_face_scene();
    let gray = scene.to_luma8();
    let ii = IntegralImage::new(&gray);
    let mut agree = 0;
    for _ in 0..1000 {
        let x = rng.random_range(0..=gray.width() - 24);
        let y = rng.random_range(0..=gray.height() - 24);
        agree += usize::from(c.evaluate(&ii, x, y) == brute_force_evaluate(&c, &gray, x, y));
    }
    let faces = detect_faces(&gray, &c, &DetectParams::default());
    let iou = faces.first().map_or(0.0, |f| f.iou(&pasted));
    check(
        sums_ok && agree == 1000 && faces.len() == 1 && iou >= 0.5,
        format!("sums exact {sums_ok}, {agree}/1000 windows agree, {} face(s), IoU {iou:.3}", faces.len()),
    )
}

fn recoloring() -> Outcome {
    let base = SyntheticBase::default().generate();
    let mu = base.mean().to_array();
    let target = SrgbColor::new(0.55, 0.42, 0.33);
    let n = recolor_normalize(&base, target).map_err(|e| e.to_string())?;
    let mean_err = mean_of(&n.texture)
        .iter()
        .zip(target.to_array())
        .map(|(m, t)| (m - t).abs())
        .fold(0.0, f64::max);
    let v = recolor_variation(&base, target);
    let exact = v.clip_fraction == 0.0
        && v.texture.image().pixels().iter().zip(base.image().pixels()).all(|(o, i)| {
            let (o, i, t) = (o.to_array(), i.to_array(), target.to_array());
            (0..3).all(|k| o[k] == (i[k] - mu[k]) + t[k])
        });
    let mut contrast = Vec::new();
    for t in [SrgbColor::new(0.45, 0.33, 0.25), SrgbColor::new(0.30, 0.20, 0.15), SrgbColor::new(0.16, 0.12, 0.10)] {
        let sn = std_of(&recolor_normalize(&base, t).map_err(|e| e.to_string())?.texture);
        let sv = std_of(&recolor_variation(&base, t).texture);
        contrast.push((0..3).all(|k| sn[k] < sv[k]));
    }
    check(
        n.clip_fraction == 0.0 && mean_err <= 1e-6 && exact && contrast.iter().all(|&c| c),
        format!("mean error {mean_err:.2e}, deviations exact {exact}, contrast compressed for dark targets {contrast:?}"),
    )
}

fn mean_of(t: &Texture) -> [f64; 3] {
    let px = t.image().pixels();
    let mut m = [0.0; 3];
    for c in px {
        for (a, v) in m.iter_mut().zip(c.to_array()) {
            *a += v / px.len() as f64;
        }
    }
    m
}

fn std_of(t: &Texture) -> [f64; 3] {
    let m = mean_of(t);
    let px = t.image().pixels();
    let mut s = [0.0; 3];
    for c in px {
        for (k, v) in c.to_array().into_iter().enumerate() {
            s[k] += (v - m[k]).powi(2) / px.len() as f64;
        }
    }
    s.map(f64::sqrt)
}

fn closed_loop(fixtures: &Path) -> Outcome {
    let m = load_manifest(&fixtures.join("manifest.csv")).map_err(|e| e.to_string())?;
    let out = TempDir::new().unwrap();
    let cfg = RunConfig {
        lightings: vec![LightingSpec::Ambient],
        proxy: ProxyShape::Flat,
        base: SyntheticBase { amplitude: 0.0, ..SyntheticBase::default() },
        out: out.path().to_path_buf(),
        cache: false,
        ..RunConfig::default()
    };
    let res = run(&m, &cfg).map_err(|e| e.to_string())?;
    let mut worst = Vec::new();
    for method in Method::ALL {
        let w = res.records.iter().filter(|r| r.method == method).map(|r| r.delta_e).fold(f64::NAN, f64::max);
        worst.push(format!("{} {w:.3}", method.label()));
        if w.is_nan() || w >= 1.0 {
            return Err(format!("max ΔE: {}", worst.join(", ")));
        }
    }
    check(res.records.len() == 96, format!("{} cells, max ΔE: {}", res.records.len(), worst.join(", ")))
}

fn spearman(x: &[f64], y: &[f64]) -> f64 {
    let ranks = |v: &[f64]| {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i + 1;
            while j < idx.len() && v[idx[j]] == v[idx[i]] {
                j += 1;
            }
            for &k in &idx[i..j] {
                r[k] = (i + j + 1) as f64 / 2.0;
            }
            i = j;
        }
        r
    };
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let mean = (n + 1.0) / 2.0;
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mean) * (b - mean)).sum();
    let var = |r: &[f64]| r.iter().map(|a| (a - mean).powi(2)).sum::<f64>();
    cov / (var(&rx) * var(&ry)).sqrt()
}

/// Attenuation sweep: each ramp albedo is shaded by a uniform environment
/// of decreasing intensity and every method is re-run on the result.
fn bias_direction(fixtures: &Path) -> Outcome {
    let m = load_manifest(&fixtures.join("manifest.csv")).map_err(|e| e.to_string())?;
    let levels = [1.0, 0.95, 0.9, 0.85, 0.8, 0.75, 0.7];
    let params = ExtractParams::default();
    let mut min_rho = [f64::INFINITY; 2];
    let mut t_drift = 0.0f64;
    let mut ita_err = [[0.0; 2]; 2];
    let mut classes = Vec::new();
    for row in &m.rows {
        let albedo = SrgbImage::load(row.albedo.as_ref().unwrap()).map_err(|e| e.to_string())?;
        let lm = Landmarks::load(row.landmarks.as_ref().unwrap()).map_err(|e| e.to_string())?;
        let normals = vec![[0.0, 0.0, 1.0]; albedo.pixels().len()];
        let mut est: Vec<Vec<(LabColor, f64)>> = vec![Vec::new(); 4];
        for &k in &levels {
            let photo = shade(&albedo, &normals, &ShLighting::ambient(k)).quantized();
            let input = ExtractionInput::new(&photo).with_albedo(&albedo).with_landmarks(&lm).with_face(row.face.unwrap());
            for (mi, method) in Method::ALL.into_iter().enumerate() {
                let e = extract(&input, method, &params).map_err(|e| e.to_string())?;
                est[mi].push((e.lab, e.ita));
            }
        }
        let truth_class = ita_class(est[3][0].1);
        classes.push(truth_class);
        let attenuation: Vec<f64> = levels.iter().map(|k| 1.0 - k).collect();
        for (mi, method) in Method::ALL.into_iter().enumerate() {
            let de: Vec<f64> = est[mi].iter().map(|(lab, _)| delta_e(*lab, est[mi][0].0)).collect();
            if method.uses_albedo() {
                t_drift = t_drift.max(de.iter().copied().fold(0.0, f64::max));
                continue;
            }
            min_rho[mi] = min_rho[mi].min(spearman(&attenuation, &de));
            let mean_ita_err =
                est[mi][1..].iter().map(|(_, ita)| (ita - est[mi][0].1).abs()).sum::<f64>() / (levels.len() - 1) as f64;
            match truth_class {
                ItaClass::I => ita_err[mi][0] += mean_ita_err / 2.0,
                ItaClass::VI => ita_err[mi][1] += mean_ita_err / 2.0,
                _ => {}
            }
        }
    }
    let two_each = classes.iter().filter(|&&c| c == ItaClass::I).count() == 2
        && classes.iter().filter(|&&c| c == ItaClass::VI).count() == 2;
    let darker_worse = ita_err.iter().all(|e| e[1] > e[0]);
    check(
        min_rho.iter().all(|&r| r > 0.9) && t_drift < 1.0 && darker_worse && two_each,
        format!(
            "min Spearman ρ Cheek {:.3} / MMM {:.3}; T-method max ΔE drift {t_drift:.3}; \
             mean ITA error class I vs VI: Cheek {:.2}° vs {:.2}°, MMM {:.2}° vs {:.2}°",
            min_rho[0], min_rho[1], ita_err[0][0], ita_err[0][1], ita_err[1][0], ita_err[1][1]
        ),
    )
}

fn statistics() -> Outcome {
    let names: Vec<String> = vec!["a".into(), "b".into(), "c".into()];
    let kw = kruskal_wallis(&names, &[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]).map_err(|e| e.to_string())?;
    let p_err = (kw.p - chi2_df1_sf_oracle(kw.h)).abs();
    let groups = vec![vec![2.1, 3.3, 3.3, 5.0, 1.0], vec![4.4, 4.4, 6.1, 7.7], vec![0.5, 3.3, 9.9, 8.8, 6.1, 2.2]];
    let dunn = dunn_posthoc(&names, &groups, Correction::Bonferroni).map_err(|e| e.to_string())?;
    let z_err = dunn.iter().zip(dunn_oracle(&groups)).map(|(d, o)| (d.z - o).abs()).fold(0.0, f64::max);
    let flat = kruskal_wallis(&names, &[vec![4.0; 3], vec![4.0; 3], vec![4.0; 2]]).map_err(|e| e.to_string())?;
    check(
        (kw.h - 3.857).abs() <= 1e-3 && p_err <= 1e-6 && z_err <= 1e-9 && flat.h == 0.0 && flat.p == 1.0,
        format!("H {:.4}, |p - oracle| {p_err:.1e}, max |z - oracle| {z_err:.1e}, all-equal H {} p {}", kw.h, flat.h, flat.p),
    )
}

fn determinism(fixtures: &Path) -> Outcome {
    let m = load_manifest(&fixtures.join("manifest.csv")).map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    let mut times = Vec::new();
    for _ in 0..2 {
        let out = TempDir::new().unwrap();
        let cfg = RunConfig { out: out.path().to_path_buf(), ..RunConfig::default() };
        let t0 = Instant::now();
        let res = run(&m, &cfg).map_err(|e| e.to_string())?;
        times.push(t0.elapsed().as_secs_f64());
        let bytes = std::fs::read(&res.records_path).map_err(|e| e.to_string())?;
        outputs.push((res.records.len(), bytes));
    }
    let identical = outputs[0].1 == outputs[1].1;
    check(
        outputs.iter().all(|o| o.0 == 288) && identical && times.iter().all(|&t| t < 60.0),
        format!("{} records, runs {:.2} s and {:.2} s, byte-identical {identical}", outputs[0].0, times[0], times[1]),
    )
}

#[test]
fn acceptance() {
    let shipped = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/synthetic");
    // The bias sweep and the closed loop use a fresh copy so they do not
    // depend on the checked-in files; determinism runs on the shipped set.
    let fresh = TempDir::new().unwrap();
    generate_fixtures(fresh.path(), &FixtureParams::default()).unwrap();

    let criteria: Vec<Criterion> = vec![
        ("colorimetry exactness", Box::new(colorimetry_exactness)),
        ("cheek geometry", Box::new(geometry)),
        ("MMM oracle equivalence", Box::new(mmm_oracle)),
        ("detection", Box::new(detection)),
        ("recoloring contracts", Box::new(recoloring)),
        ("closed loop", Box::new(|| closed_loop(fresh.path()))),
        ("bias direction", Box::new(|| bias_direction(fresh.path()))),
        ("statistics", Box::new(statistics)),
        ("pipeline determinism", Box::new(|| determinism(&shipped))),
    ];
    let mut failed = Vec::new();
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
        let (tag, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        println!("{tag} {} {name}: {detail}", i + 1);
        if outcome.is_err() {
            failed.push(i + 1);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
