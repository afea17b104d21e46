use image::GrayImage;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cascade::Cascade;
use super::integral::IntegralImage;
use crate::imaging::resize_gray;

/// Axis-aligned face rectangle in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FaceBox {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl FaceBox {
    pub const fn new(x: u32, y: u32, w: u32, h: u32) -> Self {
        FaceBox { x, y, w, h }
    }

    pub fn area(&self) -> u64 {
        u64::from(self.w) * u64::from(self.h)
    }

    pub fn right(&self) -> u32 {
        self.x + self.w
    }

    pub fn bottom(&self) -> u32 {
        self.y + self.h
    }

    pub fn fits_in(&self, width: u32, height: u32) -> bool {
        self.w > 0 && self.h > 0 && self.right() <= width && self.bottom() <= height
    }

    pub fn intersection(&self, other: &FaceBox) -> u64 {
        let x0 = self.x.max(other.x);
        let y0 = self.y.max(other.y);
        let x1 = self.right().min(other.right());
        let y1 = self.bottom().min(other.bottom());
        if x1 <= x0 || y1 <= y0 {
            0
        } else {
            u64::from(x1 - x0) * u64::from(y1 - y0)
        }
    }

    pub fn iou(&self, other: &FaceBox) -> f64 {
        let inter = self.intersection(other);
        let union = self.area() + other.area() - inter;
        if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }
}

/// Multi-scale scan parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectParams {
    pub scale_factor: f64,
    /// Smallest face side, in pixels of the input image.
    pub min_size: u32,
    pub max_size: Option<u32>,
    /// Window stride at every pyramid level.
    pub step: u32,
    /// A group survives only with more than this many raw hits.
    pub min_neighbors: usize,
    /// Raw hits with IoU at or above this value are grouped together.
    pub group_iou: f64,
}

impl Default for DetectParams {
    fn default() -> Self {
        DetectParams {
            scale_factor: 1.1,
            min_size: 24,
            max_size: None,
            step: 1,
            min_neighbors: 3,
            group_iou: 0.3,
        }
    }
}

/// Outcome of running the cascade on one window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowVerdict {
    /// Window variance below `MIN_VARIANCE_FRACTION` of the 8-bit range.
    LowVariance,
    Rejected { stage: usize },
    Accepted,
}

impl WindowVerdict {
    pub fn accepted(self) -> bool {
        matches!(self, WindowVerdict::Accepted)
    }
}

/// Windows whose pixel variance is below this fraction of 255² are rejected
/// before any stage runs.
pub const MIN_VARIANCE_FRACTION: f64 = 1e-6;

impl Cascade {
    /// Runs every stage on the window whose top-left corner is `(x, y)`.
    ///
    /// Feature responses are normalized by `area · σ` of the window interior
    /// (the window shrunk by one pixel on each side).
    pub fn evaluate(&self, ii: &IntegralImage, x: u32, y: u32) -> WindowVerdict {
        let (w, h) = (self.window_width, self.window_height);
        debug_assert!(x + w <= ii.width() && y + h <= ii.height());
        let area = u64::from(w - 2) * u64::from(h - 2);
        let s = ii.rect_sum(x + 1, y + 1, w - 2, h - 2);
        let q = ii.rect_sq_sum(x + 1, y + 1, w - 2, h - 2);
        let nf = (u128::from(area) * u128::from(q) - u128::from(s) * u128::from(s)) as f64;
        let a2 = (area * area) as f64;
        if nf < MIN_VARIANCE_FRACTION * 255.0 * 255.0 * a2 {
            return WindowVerdict::LowVariance;
        }
        let inv_norm = 1.0 / nf.sqrt();
        for (si, stage) in self.stages.iter().enumerate() {
            let mut total = 0.0;
            for wc in &stage.classifiers {
                total += wc.eval(|fi| {
                    let f = &self.features[fi];
                    let mut v = 0.0;
                    for r in &f.rects {
                        v += r.weight * ii.rect_sum(x + r.x, y + r.y, r.w, r.h) as f64;
                    }
                    v * inv_norm
                });
            }
            if total < stage.threshold {
                return WindowVerdict::Rejected { stage: si };
            }
        }
        WindowVerdict::Accepted
    }
}

/// Scale factors of the image pyramid whose window sizes satisfy `params`.
pub fn pyramid_scales(width: u32, height: u32, cascade: &Cascade, params: &DetectParams) -> Vec<f64> {
    assert!(params.scale_factor > 1.0, "scale factor must exceed 1");
    let mut scales = Vec::new();
    let mut factor = 1.0f64;
    loop {
        let win_w = (f64::from(cascade.window_width) * factor).round() as u32;
        let win_h = (f64::from(cascade.window_height) * factor).round() as u32;
        let scaled_w = (f64::from(width) / factor).round() as u32;
        let scaled_h = (f64::from(height) / factor).round() as u32;
        if win_w > width
            || win_h > height
            || scaled_w < cascade.window_width
            || scaled_h < cascade.window_height
        {
            break;
        }
        if let Some(max) = params.max_size {
            if win_w > max || win_h > max {
                break;
            }
        }
        if win_w >= params.min_size && win_h >= params.min_size {
            scales.push(factor);
        }
        factor *= params.scale_factor;
    }
    scales
}

/// Every accepted window across all pyramid levels, before grouping.
pub fn raw_detections(gray: &GrayImage, cascade: &Cascade, params: &DetectParams) -> Vec<FaceBox> {
    let (width, height) = gray.dimensions();
    let step = params.step.max(1);
    let scales = pyramid_scales(width, height, cascade, params);
    let per_level: Vec<Vec<FaceBox>> = scales
        .par_iter()
        .map(|&factor| {
            let sw = (f64::from(width) / factor).round() as u32;
            let sh = (f64::from(height) / factor).round() as u32;
            let level = resize_gray(gray, sw, sh);
            let ii = IntegralImage::new(&level);
            let win_w = (f64::from(cascade.window_width) * factor).round() as u32;
            let win_h = (f64::from(cascade.window_height) * factor).round() as u32;
            let mut hits = Vec::new();
            let mut y = 0;
            while y + cascade.window_height <= sh {
                let mut x = 0;
                while x + cascade.window_width <= sw {
                    if cascade.evaluate(&ii, x, y).accepted() {
                        let ox = ((f64::from(x) * factor).round() as u32).min(width - win_w);
                        let oy = ((f64::from(y) * factor).round() as u32).min(height - win_h);
                        hits.push(FaceBox::new(ox, oy, win_w, win_h));
                    }
                    x += step;
                }
                y += step;
            }
            hits
        })
        .collect();
    per_level.into_iter().flatten().collect()
}

/// Groups raw hits into connected components of pairwise IoU ≥ `iou`, keeps
/// components with more than `min_neighbors` members, averages each, and
/// drops averaged boxes nested inside a better-supported one.
pub fn group_detections(raw: &[FaceBox], iou: f64, min_neighbors: usize) -> Vec<FaceBox> {
    let n = raw.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if raw[i].iou(&raw[j]) >= iou {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut acc: Vec<(usize, [u64; 4])> = vec![(0, [0; 4]); n];
    for (i, b) in raw.iter().enumerate() {
        let root = find(&mut parent, i);
        let e = &mut acc[root];
        e.0 += 1;
        e.1[0] += u64::from(b.x);
        e.1[1] += u64::from(b.y);
        e.1[2] += u64::from(b.w);
        e.1[3] += u64::from(b.h);
    }
    let groups: Vec<(FaceBox, usize)> = acc
        .into_iter()
        .filter(|(count, _)| *count > 0 && *count > min_neighbors)
        .map(|(count, s)| {
            let avg = |v: u64| (v as f64 / count as f64).round() as u32;
            (FaceBox::new(avg(s[0]), avg(s[1]), avg(s[2]), avg(s[3])), count)
        })
        .collect();

    let mut kept: Vec<FaceBox> = groups
        .iter()
        .enumerate()
        .filter(|(i, (r1, n1))| {
            !groups.iter().enumerate().any(|(j, (r2, n2))| {
                if *i == j {
                    return false;
                }
                let dx = (f64::from(r2.w) * 0.2).round() as i64;
                let dy = (f64::from(r2.h) * 0.2).round() as i64;
                let inside = i64::from(r1.x) >= i64::from(r2.x) - dx
                    && i64::from(r1.y) >= i64::from(r2.y) - dy
                    && i64::from(r1.right()) <= i64::from(r2.right()) + dx
                    && i64::from(r1.bottom()) <= i64::from(r2.bottom()) + dy;
                inside && (*n2 > (*n1).max(3) || *n1 < 3)
            })
        })
        .map(|(_, (r, _))| *r)
        .collect();
    sort_boxes(&mut kept);
    kept
}

/// Area descending, then x, then y.
pub fn sort_boxes(boxes: &mut [FaceBox]) {
    boxes.sort_by(|a, b| {
        b.area()
            .cmp(&a.area())
            .then(a.x.cmp(&b.x))
            .then(a.y.cmp(&b.y))
            .then(a.w.cmp(&b.w))
    });
}

pub fn detect_faces(gray: &GrayImage, cascade: &Cascade, params: &DetectParams) -> Vec<FaceBox> {
    let raw = raw_detections(gray, cascade, params);
    let (w, h) = gray.dimensions();
    group_detections(&raw, params.group_iou, params.min_neighbors)
        .into_iter()
        .filter(|b| b.fits_in(w, h))
        .collect()
}

/// Largest box; ties go to the smallest `(x, y)`.
pub fn select_primary_face(boxes: &[FaceBox]) -> Option<FaceBox> {
    boxes
        .iter()
        .copied()
        .min_by(|a, b| b.area().cmp(&a.area()).then(a.x.cmp(&b.x)).then(a.y.cmp(&b.y)))
}
