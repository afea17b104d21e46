use std::path::Path;

use super::ExtractionError;
use crate::colorimetry::srgb_to_lab;
use crate::error::{Error, Result};
use crate::imaging::SrgbImage;

/// Boolean pixel mask with a cached population count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkinMask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
    count: usize,
}

impl SkinMask {
    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        let count = bits.iter().filter(|&&b| b).count();
        SkinMask {
            width,
            height,
            bits,
            count,
        }
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn count(&self) -> usize {
        self.count
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[y as usize * self.width as usize + x as usize]
    }

    /// Coordinates of set pixels in row-major order.
    pub fn iter_set(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        let w = self.width as usize;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| ((i % w) as u32, (i / w) as u32))
    }

    /// Tight bounding box `(x, y, w, h)` of the set pixels.
    pub fn bounding_box(&self) -> Option<(u32, u32, u32, u32)> {
        let mut it = self.iter_set();
        let (x0, y0) = it.next()?;
        let (mut min_x, mut min_y, mut max_x, mut max_y) = (x0, y0, x0, y0);
        for (x, y) in it {
            min_x = min_x.min(x);
            min_y = min_y.min(y);
            max_x = max_x.max(x);
            max_y = max_y.max(y);
        }
        Some((min_x, min_y, max_x - min_x + 1, max_y - min_y + 1))
    }
}

/// Facial landmark points in image pixel coordinates.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Landmarks(pub Vec<(f64, f64)>);

impl Landmarks {
    /// One `x y` pair per line; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Landmarks, ExtractionError> {
        let mut pts = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let nums: Vec<&str> = line.split_whitespace().collect();
            let syntax = |message: String| ExtractionError::LandmarkSyntax { line: i + 1, message };
            let [xs, ys] = nums[..] else {
                return Err(syntax(format!("expected two numbers, found {}", nums.len())));
            };
            let x: f64 = xs.parse().map_err(|_| syntax(format!("bad number {xs:?}")))?;
            let y: f64 = ys.parse().map_err(|_| syntax(format!("bad number {ys:?}")))?;
            if !x.is_finite() || !y.is_finite() {
                return Err(syntax("non-finite coordinate".into()));
            }
            pts.push((x, y));
        }
        Ok(Landmarks(pts))
    }

    pub fn load(path: &Path) -> Result<Landmarks> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Landmarks::parse(&text).map_err(|e| Error::format(path.display().to_string(), e))
    }

    pub fn to_text(&self) -> String {
        self.0.iter().map(|(x, y)| format!("{x} {y}\n")).collect()
    }
}

fn cross(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Counter-clockwise convex hull (monotone chain), collinear points dropped.
pub fn convex_hull(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &(f64, f64)>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

/// Rasterizes the convex hull of `lm`: a pixel is set when its center lies
/// inside or on the hull.
pub fn mask_from_landmarks(lm: &Landmarks, dims: (u32, u32)) -> Result<SkinMask, ExtractionError> {
    if lm.0.len() < 3 {
        return Err(ExtractionError::TooFewLandmarks(lm.0.len()));
    }
    let hull = convex_hull(&lm.0);
    if hull.len() < 3 {
        return Err(ExtractionError::CollinearLandmarks);
    }
    let scale = hull
        .iter()
        .flat_map(|p| [p.0.abs(), p.1.abs()])
        .fold(1.0f64, f64::max);
    let eps = 1e-9 * scale * scale;
    let n = hull.len();
    Ok(SkinMask::from_fn(dims.0, dims.1, |x, y| {
        let p = (f64::from(x) + 0.5, f64::from(y) + 0.5);
        (0..n).all(|i| cross(hull[i], hull[(i + 1) % n], p) >= -eps)
    }))
}

/// Lab box used to pick skin pixels when no landmarks are available.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChromaGate {
    pub l: (f64, f64),
    pub a: (f64, f64),
    pub b: (f64, f64),
}

impl ChromaGate {
    pub const DEFAULT: ChromaGate = ChromaGate {
        l: (20.0, 95.0),
        a: (2.0, 45.0),
        b: (2.0, 50.0),
    };

    pub fn admits(&self, lab: crate::colorimetry::LabColor) -> bool {
        (self.l.0..=self.l.1).contains(&lab.l)
            && (self.a.0..=self.a.1).contains(&lab.a)
            && (self.b.0..=self.b.1).contains(&lab.b)
    }
}

pub fn mask_chroma_fallback(image: &SrgbImage) -> Result<SkinMask, ExtractionError> {
    let gate = ChromaGate::DEFAULT;
    let mask = SkinMask::from_fn(image.width(), image.height(), |x, y| {
        gate.admits(srgb_to_lab(image.get(x, y)))
    });
    if mask.count() == 0 {
        Err(ExtractionError::NoSkinPixels)
    } else {
        Ok(mask)
    }
}
