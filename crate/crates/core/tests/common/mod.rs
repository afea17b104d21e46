//! Fixtures and oracles shared by the integration test targets.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use image::{GrayImage, Rgb, RgbImage};
use tonebench_core::colorimetry::{srgb_to_lab, LabColor, SrgbColor};
use tonebench_core::extraction::SkinMask;
use tonebench_core::face_detect::{Branch, Cascade, FaceBox, WindowVerdict, MIN_VARIANCE_FRACTION};
use tonebench_core::imaging::SrgbImage;

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn naive_sum(img: &GrayImage, x: u32, y: u32, w: u32, h: u32) -> u64 {
    let mut s = 0u64;
    for yy in y..y + h {
        for xx in x..x + w {
            s += u64::from(img.get_pixel(xx, yy)[0]);
        }
    }
    s
}

pub fn naive_sq_sum(img: &GrayImage, x: u32, y: u32, w: u32, h: u32) -> u64 {
    let mut s = 0u64;
    for yy in y..y + h {
        for xx in x..x + w {
            let v = u64::from(img.get_pixel(xx, yy)[0]);
            s += v * v;
        }
    }
    s
}

/// Window evaluation that reads pixels directly instead of going through
/// the summed-area table.
pub fn brute_force_evaluate(c: &Cascade, img: &GrayImage, x: u32, y: u32) -> WindowVerdict {
    let (w, h) = (c.window_width, c.window_height);
    let area = u64::from(w - 2) * u64::from(h - 2);
    let s = naive_sum(img, x + 1, y + 1, w - 2, h - 2);
    let q = naive_sq_sum(img, x + 1, y + 1, w - 2, h - 2);
    let nf = (u128::from(area) * u128::from(q) - u128::from(s) * u128::from(s)) as f64;
    if nf < MIN_VARIANCE_FRACTION * 255.0 * 255.0 * (area * area) as f64 {
        return WindowVerdict::LowVariance;
    }
    let inv = 1.0 / nf.sqrt();
    for (si, stage) in c.stages.iter().enumerate() {
        let mut total = 0.0;
        for wc in &stage.classifiers {
            let mut idx = 0;
            let leaf = loop {
                let node = &wc.nodes[idx];
                let f = &c.features[node.feature];
                let mut v = 0.0;
                for r in &f.rects {
                    v += r.weight * naive_sum(img, x + r.x, y + r.y, r.w, r.h) as f64;
                }
                let next = if v * inv < node.threshold { node.left } else { node.right };
                match next {
                    Branch::Node(n) => idx = n,
                    Branch::Leaf(l) => break wc.leaves[l],
                }
            };
            total += leaf;
        }
        if total < stage.threshold {
            return WindowVerdict::Rejected { stage: si };
        }
    }
    WindowVerdict::Accepted
}

/// The synthetic scene: a face crop pasted on a smooth colored gradient.
pub fn pasted_face_scene() -> (SrgbImage, FaceBox) {
    let crop = image::open(fixture("face_crop.png")).unwrap().to_rgb8();
    let mut canvas = RgbImage::from_fn(260, 200, |x, y| {
        Rgb([(90.0 + 0.2 * x as f64) as u8, (100.0 + 0.1 * y as f64) as u8, 120])
    });
    image::imageops::replace(&mut canvas, &crop, 80, 50);
    (SrgbImage::from_rgb8(&canvas), FaceBox::new(80, 50, crop.width(), crop.height()))
}


/// Five flat color blobs with strictly decreasing L* and member counts
/// 200, 500, 100, 400, 300.
pub const BLOBS: [([f64; 3], usize); 5] = [
    ([0.92, 0.80, 0.70], 200),
    ([0.74, 0.55, 0.42], 500),
    ([0.55, 0.38, 0.28], 100),
    ([0.36, 0.24, 0.17], 400),
    ([0.18, 0.11, 0.08], 300),
];

/// Lays the blob pixels out on a 50×30 grid in an order scrambled by
/// `order_seed`, with the whole grid masked.
pub fn blob_image(order_seed: u64) -> (SrgbImage, SkinMask) {
    let mut labels: Vec<usize> = BLOBS.iter().enumerate().flat_map(|(i, &(_, n))| std::iter::repeat_n(i, n)).collect();
    // Fisher-Yates with a splitmix64 stream keeps the oracle free of the
    // crate's own RNG choices.
    let mut state = order_seed;
    for i in (1..labels.len()).rev() {
        state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
        labels.swap(i, (z % (i as u64 + 1)) as usize);
    }
    let img = SrgbImage::from_fn(50, 30, |x, y| SrgbColor::from_array(BLOBS[labels[(y * 50 + x) as usize]].0));
    (img, SkinMask::from_fn(50, 30, |_, _| true))
}

/// Count-weighted Lab mean of the three lightest blobs.
pub fn blob_oracle() -> LabColor {
    let mut blobs: Vec<(LabColor, usize)> =
        BLOBS.iter().map(|&(c, n)| (srgb_to_lab(SrgbColor::from_array(c)), n)).collect();
    blobs.sort_by(|a, b| b.0.l.total_cmp(&a.0.l));
    let total: usize = blobs[..3].iter().map(|b| b.1).sum();
    let mut acc = [0.0; 3];
    for (lab, n) in &blobs[..3] {
        for (a, v) in acc.iter_mut().zip(lab.to_array()) {
            *a += v * *n as f64 / total as f64;
        }
    }
    LabColor::from_array(acc)
}

/// Upper tail of the chi-square distribution with one degree of freedom,
/// by Simpson quadrature of the normal density: P(X > h) = 2 P(Z > sqrt h).
pub fn chi2_df1_sf_oracle(h: f64) -> f64 {
    let a = h.sqrt();
    let b = a + 40.0;
    let n = 200_000;
    let step = (b - a) / n as f64;
    let phi = |t: f64| (-t * t / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut s = phi(a) + phi(b);
    for i in 1..n {
        s += phi(a + i as f64 * step) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    2.0 * s * step / 3.0
}

/// Dunn z statistics from first principles: midranks by counting, the tie
/// correction by grouping equal values.
pub fn dunn_oracle(groups: &[Vec<f64>]) -> Vec<f64> {
    let pooled: Vec<f64> = groups.iter().flatten().copied().collect();
    let n = pooled.len() as f64;
    let rank = |v: f64| {
        let less = pooled.iter().filter(|&&x| x < v).count() as f64;
        let equal = pooled.iter().filter(|&&x| x == v).count() as f64;
        less + (equal + 1.0) / 2.0
    };
    let mut ties: BTreeMap<u64, f64> = BTreeMap::new();
    for v in &pooled {
        *ties.entry(v.to_bits()).or_default() += 1.0;
    }
    let tie: f64 = ties.values().map(|t| t * t * t - t).sum();
    let mean_rank: Vec<f64> = groups
        .iter()
        .map(|g| g.iter().map(|&v| rank(v)).sum::<f64>() / g.len() as f64)
        .collect();
    let mut out = Vec::new();
    for i in 0..groups.len() {
        for j in i + 1..groups.len() {
            let var = (n * (n + 1.0) / 12.0 - tie / (12.0 * (n - 1.0)))
                * (1.0 / groups[i].len() as f64 + 1.0 / groups[j].len() as f64);
            out.push((mean_rank[i] - mean_rank[j]) / var.sqrt());
        }
    }
    out
}
