use std::hint::black_box;
use std::path::Path;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use tonebench_core::analysis::kruskal_wallis;
use tonebench_core::colorimetry::{srgb_to_lab, SrgbColor};
use tonebench_core::extraction::{mask_from_landmarks, mmm_estimate, KMeansParams, Landmarks};
use tonebench_core::face_detect::{detect_faces, Cascade, DetectParams, IntegralImage};
use tonebench_core::imaging::SrgbImage;
use tonebench_core::recolor::SyntheticBase;
use tonebench_core::relight::{lighting_preset, shade_linear, LightingPreset, RenderProxy, DEFAULT_EXPOSURE};

fn face_crop() -> SrgbImage {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/face_crop.png");
    SrgbImage::load(&p).expect("face crop fixture")
}

fn colorimetry(c: &mut Criterion) {
    let colors: Vec<SrgbColor> = (0..4096)
        .map(|i| SrgbColor::new((i % 16) as f64 / 15.0, ((i / 16) % 16) as f64 / 15.0, (i / 256) as f64 / 15.0))
        .collect();
    c.bench_function("srgb_to_lab/4096", |b| {
        b.iter(|| colors.iter().map(|&c| srgb_to_lab(black_box(c)).l).sum::<f64>())
    });
}

fn detection(c: &mut Criterion) {
    let gray = face_crop().to_luma8();
    let cascade = Cascade::frontal_default();
    let params = DetectParams::default();
    c.bench_function("integral_image", |b| b.iter(|| IntegralImage::new(black_box(&gray))));
    c.bench_function("detect_faces", |b| b.iter(|| detect_faces(black_box(&gray), &cascade, &params)));
}

fn extraction(c: &mut Criterion) {
    let img = face_crop();
    let (w, h) = img.dims();
    let (cx, cy) = (w as f64 / 2.0, h as f64 / 2.0);
    let lm = Landmarks(
        (0..36)
            .map(|k| {
                let t = k as f64 / 36.0 * std::f64::consts::TAU;
                (cx + 0.35 * w as f64 * t.cos(), cy + 0.42 * h as f64 * t.sin())
            })
            .collect(),
    );
    let mask = mask_from_landmarks(&lm, (w, h)).expect("mask");
    let params = KMeansParams::default();
    c.bench_function("mmm_estimate", |b| b.iter(|| mmm_estimate(black_box(&img), &mask, &params)));
}

fn relighting(c: &mut Criterion) {
    let tex = SyntheticBase::default().generate();
    let (w, h) = tex.dims();
    let proxy = RenderProxy::sphere(w, h);
    let light = lighting_preset(LightingPreset::Paramount);
    c.bench_function("shade_sphere_128", |b| {
        b.iter(|| shade_linear(black_box(&tex), &light, &proxy, DEFAULT_EXPOSURE))
    });
}

fn statistics(c: &mut Criterion) {
    let names: Vec<String> = (0..6).map(|g| format!("g{g}")).collect();
    c.bench_function("kruskal_wallis/6x200", |b| {
        b.iter_batched(
            || {
                (0..6)
                    .map(|g| (0..200).map(|i| ((i * 7919 + g * 31) % 997) as f64 / 10.0 + g as f64).collect::<Vec<_>>())
                    .collect::<Vec<_>>()
            },
            |groups| kruskal_wallis(&names, &groups),
            BatchSize::SmallInput,
        )
    });
}

criterion_group!(benches, colorimetry, detection, extraction, relighting, statistics);
criterion_main!(benches);
