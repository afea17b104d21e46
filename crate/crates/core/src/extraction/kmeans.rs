//! Masked k-means in CIELAB with a top-luminosity weighted mean.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ExtractionError, SkinMask};
use crate::colorimetry::{lab_to_srgb, srgb_to_lab, LabColor, SrgbColor};
use crate::imaging::SrgbImage;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KMeansParams {
    pub k: usize,
    /// Number of brightest clusters averaged into the estimate.
    pub top_m: usize,
    pub seed: u64,
    pub max_iter: usize,
    /// Lloyd stops once no centroid moves more than this (ΔE units).
    pub tolerance: f64,
}

impl Default for KMeansParams {
    fn default() -> Self {
        KMeansParams {
            k: 5,
            top_m: 3,
            seed: 0x5eed,
            max_iter: 100,
            tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub centroid: LabColor,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MmmResult {
    pub color: SrgbColor,
    /// Count-weighted Lab mean of the selected clusters, before gamut mapping.
    pub lab: LabColor,
    /// Clusters ordered by centroid L* descending (ties: larger count first).
    pub clusters: Vec<ClusterSummary>,
    pub samples: usize,
    pub iterations: usize,
}

struct Point {
    lab: [f64; 3],
    weight: f64,
}

fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let d0 = a[0] - b[0];
    let d1 = a[1] - b[1];
    let d2 = a[2] - b[2];
    d0 * d0 + d1 * d1 + d2 * d2
}

/// Collapses masked pixels into unique colors with multiplicities, in a
/// canonical order, so the result does not depend on pixel order.
fn unique_points(image: &SrgbImage, mask: &SkinMask) -> (Vec<Point>, usize) {
    let mut colors: Vec<[f64; 3]> = mask.iter_set().map(|(x, y)| image.get(x, y).to_array()).collect();
    let total = colors.len();
    colors.sort_by(|a, b| {
        a[0].total_cmp(&b[0])
            .then(a[1].total_cmp(&b[1]))
            .then(a[2].total_cmp(&b[2]))
    });
    let mut points: Vec<Point> = Vec::new();
    let mut prev: Option<[f64; 3]> = None;
    for c in colors {
        if prev == Some(c) {
            points.last_mut().expect("non-empty after first").weight += 1.0;
        } else {
            points.push(Point {
                lab: srgb_to_lab(SrgbColor::from_array(c)).to_array(),
                weight: 1.0,
            });
            prev = Some(c);
        }
    }
    (points, total)
}

fn sample_weighted(rng: &mut ChaCha8Rng, weights: &[f64], total: f64) -> usize {
    let target = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if target < acc {
            return i;
        }
    }
    // Rounding can leave `target` just past the last cumulative sum.
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

fn kmeans_pp(points: &[Point], k: usize, rng: &mut ChaCha8Rng) -> Vec<[f64; 3]> {
    let weights: Vec<f64> = points.iter().map(|p| p.weight).collect();
    let total: f64 = weights.iter().sum();
    let first = sample_weighted(rng, &weights, total);
    let mut centroids = vec![points[first].lab];
    let mut d2: Vec<f64> = points.iter().map(|p| dist2(&p.lab, &centroids[0])).collect();
    while centroids.len() < k {
        let scores: Vec<f64> = points.iter().zip(&d2).map(|(p, d)| p.weight * d).collect();
        let total: f64 = scores.iter().sum();
        let next = if total > 0.0 {
            sample_weighted(rng, &scores, total)
        } else {
            // Fewer distinct colors than clusters: duplicate a centroid.
            first
        };
        let c = points[next].lab;
        centroids.push(c);
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(dist2(&p.lab, &c));
        }
    }
    centroids
}

fn nearest(p: &[f64; 3], centroids: &[[f64; 3]]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = dist2(p, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

/// Lloyd iterations from k-means++ seeds. An empty cluster is re-seeded at
/// the point farthest from its current centroid.
fn lloyd(points: &[Point], params: &KMeansParams) -> (Vec<[f64; 3]>, Vec<usize>, usize) {
    let k = params.k;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut centroids = kmeans_pp(points, k, &mut rng);
    let mut assign = vec![0usize; points.len()];
    let mut iterations = 0;
    loop {
        let mut dists = vec![0.0; points.len()];
        for (i, p) in points.iter().enumerate() {
            let (c, d) = nearest(&p.lab, &centroids);
            assign[i] = c;
            dists[i] = d;
        }
        let mut sums = vec![[0.0f64; 3]; k];
        let mut weights = vec![0.0f64; k];
        for (p, &c) in points.iter().zip(&assign) {
            for (s, v) in sums[c].iter_mut().zip(p.lab) {
                *s += p.weight * v;
            }
            weights[c] += p.weight;
        }
        for c in 0..k {
            if weights[c] > 0.0 {
                continue;
            }
            let far = dists
                .iter()
                .enumerate()
                .filter(|(i, _)| weights[assign[*i]] > points[*i].weight)
                .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
                .map(|(i, &d)| (i, d));
            if let Some((i, d)) = far {
                if d > 0.0 {
                    let old = assign[i];
                    let p = &points[i];
                    for (j, v) in p.lab.into_iter().enumerate() {
                        sums[old][j] -= p.weight * v;
                        sums[c][j] = p.weight * v;
                    }
                    weights[old] -= p.weight;
                    weights[c] = p.weight;
                    assign[i] = c;
                    dists[i] = 0.0;
                }
            }
        }
        let mut shift = 0.0f64;
        for c in 0..k {
            if weights[c] > 0.0 {
                let next = [sums[c][0] / weights[c], sums[c][1] / weights[c], sums[c][2] / weights[c]];
                shift = shift.max(dist2(&next, &centroids[c]).sqrt());
                centroids[c] = next;
            }
        }
        iterations += 1;
        if shift < params.tolerance || iterations >= params.max_iter {
            break;
        }
    }
    let mut counts = vec![0usize; k];
    for (i, p) in points.iter().enumerate() {
        let (c, _) = nearest(&p.lab, &centroids);
        assign[i] = c;
        counts[c] += p.weight as usize;
    }
    (centroids, counts, iterations)
}

/// Clusters the masked pixels in Lab and returns the member-count weighted
/// mean of the `top_m` clusters with the highest centroid L*.
pub fn mmm_estimate(
    image: &SrgbImage,
    mask: &SkinMask,
    params: &KMeansParams,
) -> Result<MmmResult, ExtractionError> {
    assert!(params.k >= 1 && params.top_m >= 1, "k and top_m must be positive");
    if mask.dims() != image.dims() {
        return Err(ExtractionError::DimensionMismatch {
            expected: image.dims(),
            actual: mask.dims(),
        });
    }
    let (points, total) = unique_points(image, mask);
    if total < params.k {
        return Err(ExtractionError::TooFewPixels {
            have: total,
            need: params.k,
        });
    }
    let (centroids, counts, iterations) = lloyd(&points, params);
    let mut clusters: Vec<ClusterSummary> = centroids
        .iter()
        .zip(&counts)
        .map(|(c, &n)| ClusterSummary {
            centroid: LabColor::from_array(*c),
            count: n,
        })
        .collect();
    clusters.sort_by(|a, b| {
        b.centroid
            .l
            .total_cmp(&a.centroid.l)
            .then(b.count.cmp(&a.count))
    });
    let mut acc = [0.0f64; 3];
    let mut weight = 0.0;
    for c in clusters.iter().take(params.top_m) {
        let w = c.count as f64;
        for (a, v) in acc.iter_mut().zip(c.centroid.to_array()) {
            *a += w * v;
        }
        weight += w;
    }
    debug_assert!(weight > 0.0);
    let lab = LabColor::from_array(acc.map(|v| v / weight));
    Ok(MmmResult {
        color: lab_to_srgb(lab).color,
        lab,
        clusters,
        samples: total,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_color_mask() {
        let c = SrgbColor::new(0.62, 0.45, 0.38);
        let img = SrgbImage::filled(10, 10, c);
        let mask = SkinMask::from_fn(10, 10, |x, _| x > 2);
        let r = mmm_estimate(&img, &mask, &KMeansParams::default()).unwrap();
        assert!((r.color.r - c.r).abs() < 1e-9);
        assert!((r.color.g - c.g).abs() < 1e-9);
        assert!((r.color.b - c.b).abs() < 1e-9);
        assert_eq!(r.samples, 70);
        assert_eq!(r.clusters.iter().map(|c| c.count).sum::<usize>(), 70);
    }

    #[test]
    fn too_few_pixels() {
        let img = SrgbImage::filled(4, 4, SrgbColor::WHITE);
        let mask = SkinMask::from_fn(4, 4, |x, y| x == 0 && y < 3);
        assert_eq!(
            mmm_estimate(&img, &mask, &KMeansParams::default()).unwrap_err(),
            ExtractionError::TooFewPixels { have: 3, need: 5 }
        );
    }

    #[test]
    fn counts_partition_the_mask() {
        let img = SrgbImage::from_fn(30, 30, |x, y| {
            SrgbColor::new(f64::from(x) / 29.0, f64::from(y) / 29.0, 0.4)
        });
        let mask = SkinMask::from_fn(30, 30, |x, y| (x + y) % 3 != 0);
        let r = mmm_estimate(&img, &mask, &KMeansParams::default()).unwrap();
        assert_eq!(r.clusters.len(), 5);
        assert_eq!(r.clusters.iter().map(|c| c.count).sum::<usize>(), mask.count());
        assert!(r.clusters.windows(2).all(|w| w[0].centroid.l >= w[1].centroid.l));
    }
}
