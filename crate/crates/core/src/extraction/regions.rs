use serde::{Deserialize, Serialize};

use super::ExtractionError;
use crate::colorimetry::SrgbColor;
use crate::face_detect::FaceBox;
use crate::imaging::SrgbImage;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Side {
    Left,
    Right,
}

/// A square sampling region in image pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RegionSpec {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
    pub side: Side,
}

impl RegionSpec {
    pub fn area(&self) -> u64 {
        u64::from(self.w) * u64::from(self.h)
    }
}

/// How the horizontal and vertical offsets are applied to the squares.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheekAnchoring {
    /// Left square's left edge and right square's right edge sit at the
    /// horizontal offset from the matching face edge; the vertical offset
    /// places the top edge.
    #[default]
    Mirrored,
    /// Offsets locate square centers instead of edges.
    Centered,
}

/// Cheek square placement as fractions of the face box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CheekGeometry {
    pub size: f64,
    pub horizontal_offset: f64,
    pub vertical_offset: f64,
    pub anchoring: CheekAnchoring,
}

impl Default for CheekGeometry {
    fn default() -> Self {
        CheekGeometry {
            size: 0.15,
            horizontal_offset: 0.18,
            vertical_offset: 0.50,
            anchoring: CheekAnchoring::Mirrored,
        }
    }
}

/// Left and right cheek squares for `face` inside an image of `dims`.
///
/// Percentages are rounded half away from zero. Squares are shifted (and,
/// for tiny images, shrunk) to stay inside the image.
pub fn cheek_rois(
    face: FaceBox,
    dims: (u32, u32),
    geom: &CheekGeometry,
) -> Result<(RegionSpec, RegionSpec), ExtractionError> {
    let fw = f64::from(face.w);
    let fh = f64::from(face.h);
    let s = (geom.size * fw).round() as i64;
    if s < 2 {
        return Err(ExtractionError::FaceTooSmall { side: s.max(0) as u32 });
    }
    let fx = i64::from(face.x);
    let fy = i64::from(face.y);
    let (lx, rx, y) = match geom.anchoring {
        CheekAnchoring::Mirrored => {
            let off = (geom.horizontal_offset * fw).round() as i64;
            (fx + off, fx + i64::from(face.w) - off - s, fy + (geom.vertical_offset * fh).round() as i64)
        }
        CheekAnchoring::Centered => {
            let half = s as f64 / 2.0;
            (
                fx + (geom.horizontal_offset * fw - half).round() as i64,
                fx + i64::from(face.w) - (geom.horizontal_offset * fw + half).round() as i64,
                fy + (geom.vertical_offset * fh - half).round() as i64,
            )
        }
    };
    let (w, h) = (i64::from(dims.0), i64::from(dims.1));
    let side = s.min(w).min(h);
    if side < 2 {
        return Err(ExtractionError::FaceTooSmall { side: side.max(0) as u32 });
    }
    let place = |x: i64, y: i64, tag: Side| RegionSpec {
        x: x.clamp(0, w - side) as u32,
        y: y.clamp(0, h - side) as u32,
        w: side as u32,
        h: side as u32,
        side: tag,
    };
    Ok((place(lx, y, Side::Left), place(rx, y, Side::Right)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColorSample {
    pub mean: SrgbColor,
    pub count: usize,
}

/// Arithmetic mean of sRGB components over the union of `regions`; pixels
/// covered by more than one region are counted once.
pub fn mean_color(
    image: &SrgbImage,
    regions: &[RegionSpec],
    min_area: u64,
) -> Result<ColorSample, ExtractionError> {
    let (w, h) = image.dims();
    if let Some(r) = regions.iter().find(|r| r.area() < min_area) {
        return Err(ExtractionError::RegionTooSmall {
            area: r.area(),
            min: min_area,
        });
    }
    let mut seen = vec![false; w as usize * h as usize];
    let mut sum = [0.0f64; 3];
    let mut count = 0usize;
    for r in regions {
        let x1 = r.x.saturating_add(r.w).min(w);
        let y1 = r.y.saturating_add(r.h).min(h);
        for y in r.y.min(h)..y1 {
            for x in r.x.min(w)..x1 {
                let idx = y as usize * w as usize + x as usize;
                if std::mem::replace(&mut seen[idx], true) {
                    continue;
                }
                let c = image.get(x, y);
                sum[0] += c.r;
                sum[1] += c.g;
                sum[2] += c.b;
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(ExtractionError::EmptySample);
    }
    let n = count as f64;
    Ok(ColorSample {
        mean: SrgbColor::new(sum[0] / n, sum[1] / n, sum[2] / n),
        count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rois(face: FaceBox) -> (RegionSpec, RegionSpec) {
        cheek_rois(face, (4000, 4000), &CheekGeometry::default()).unwrap()
    }

    fn xywh(r: RegionSpec) -> (u32, u32, u32, u32) {
        (r.x, r.y, r.w, r.h)
    }

    #[test]
    fn reference_geometry() {
        let (l, r) = rois(FaceBox::new(0, 0, 100, 100));
        assert_eq!(xywh(l), (18, 50, 15, 15));
        assert_eq!(xywh(r), (67, 50, 15, 15));
        let (l, r) = rois(FaceBox::new(10, 20, 200, 200));
        assert_eq!(xywh(l), (46, 120, 30, 30));
        assert_eq!(xywh(r), (144, 120, 30, 30));
    }

    #[test]
    fn tiny_face_is_rejected() {
        let err = cheek_rois(FaceBox::new(0, 0, 5, 5), (100, 100), &CheekGeometry::default());
        assert_eq!(err, Err(ExtractionError::FaceTooSmall { side: 1 }));
    }

    #[test]
    fn squares_are_clamped_into_the_image() {
        let (l, r) = cheek_rois(FaceBox::new(0, 0, 100, 100), (70, 55), &CheekGeometry::default()).unwrap();
        for q in [l, r] {
            assert_eq!(q.w, 15);
            assert!(q.x + q.w <= 70 && q.y + q.h <= 55);
        }
    }

    #[test]
    fn centered_anchoring_is_symmetric() {
        let geom = CheekGeometry {
            anchoring: CheekAnchoring::Centered,
            ..CheekGeometry::default()
        };
        let (l, r) = cheek_rois(FaceBox::new(0, 0, 100, 100), (500, 500), &geom).unwrap();
        assert_eq!(l.x + l.w / 2, 18);
        assert_eq!(100 - (r.x + r.w / 2 + 1), 18);
    }

    #[test]
    fn mean_of_constant_and_of_two_pixels() {
        let c = SrgbColor::new(0.3, 0.6, 0.9);
        let img = SrgbImage::filled(20, 20, c);
        let reg = RegionSpec { x: 2, y: 3, w: 5, h: 5, side: Side::Left };
        let s = mean_color(&img, &[reg], 4).unwrap();
        assert!((s.mean.r - 0.3).abs() < 1e-15 && (s.mean.b - 0.9).abs() < 1e-15);

        let mut img = SrgbImage::filled(4, 1, SrgbColor::BLACK);
        img.set(3, 0, SrgbColor::WHITE);
        let a = RegionSpec { x: 0, y: 0, w: 1, h: 1, side: Side::Left };
        let b = RegionSpec { x: 3, y: 0, w: 1, h: 1, side: Side::Right };
        assert!(mean_color(&img, &[a, b], 4).is_err());
        let s = mean_color(&img, &[a, b], 0).unwrap();
        assert_eq!(s.mean, SrgbColor::new(0.5, 0.5, 0.5));
        assert_eq!(s.count, 2);
    }

    #[test]
    fn overlapping_regions_count_pixels_once() {
        let img = SrgbImage::from_fn(10, 10, |x, _| SrgbColor::new(f64::from(x) / 9.0, 0.0, 0.0));
        let a = RegionSpec { x: 0, y: 0, w: 4, h: 4, side: Side::Left };
        let b = RegionSpec { x: 2, y: 0, w: 4, h: 4, side: Side::Right };
        let s = mean_color(&img, &[a, b], 4).unwrap();
        assert_eq!(s.count, 24);
        let expect = (0..6).map(|x| f64::from(x) / 9.0).sum::<f64>() / 6.0;
        assert!((s.mean.r - expect).abs() < 1e-12);
    }
}
