//! Synthetic face dataset: an albedo ramp across the ITA classes, each
//! photographed under its own SH environment.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::manifest::{write_manifest_csv, ManifestRecord};
use crate::colorimetry::{lab_to_srgb, linear_to_srgb, srgb_to_linear, LabColor, LinearRgb, SrgbColor};
use crate::error::{Error, Result};
use crate::extraction::Landmarks;
use crate::face_detect::FaceBox;
use crate::imaging::SrgbImage;
use crate::recolor::SyntheticBase;
use crate::relight::{project_directional_to_sh, sh_irradiance, ShLighting};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FixtureParams {
    pub count: usize,
    pub width: u32,
    pub height: u32,
    pub seed: u64,
}

impl Default for FixtureParams {
    fn default() -> Self {
        FixtureParams {
            count: 12,
            width: 160,
            height: 160,
            seed: 11,
        }
    }
}

/// ITA angles of the default ramp: two per class, from I down to VI.
pub const RAMP_ITA: [f64; 12] = [68.0, 60.0, 51.0, 45.0, 37.0, 31.0, 23.0, 14.0, 2.0, -18.0, -38.0, -50.0];

/// Skin albedo `i` of `n`. Chroma grows slowly toward darker tones and L*
/// is solved from the ITA angle interpolated along [`RAMP_ITA`].
pub fn ramp_albedo(i: usize, n: usize) -> LabColor {
    let t = if n > 1 { i as f64 / (n - 1) as f64 } else { 0.0 };
    let pos = t * (RAMP_ITA.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(RAMP_ITA.len() - 1);
    let ita = RAMP_ITA[lo] + (pos - lo as f64) * (RAMP_ITA[hi] - RAMP_ITA[lo]);
    let b = 13.0 + 7.0 * t;
    let a = 8.0 + 6.0 * t;
    LabColor::new(50.0 + b * ita.to_radians().tan(), a, b)
}

/// Environment for image `i`: soft ambient plus a key light whose azimuth
/// and strength vary with the index.
pub fn fixture_environment(i: usize) -> ShLighting {
    let az = (i as f64 * 37.0).to_radians().sin() * 0.6;
    let dir = [az.sin() * 0.5, 0.35, 0.8];
    let len = (dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]).sqrt();
    let dir = dir.map(|v| v / len);
    let ambient = 0.30 + 0.04 * (i % 3) as f64;
    let key = 0.50 + 0.05 * (i % 4) as f64;
    ShLighting::ambient(ambient).add(&project_directional_to_sh(dir, LinearRgb::splat(key)))
}

struct FaceLayout {
    cx: f64,
    cy: f64,
    a: f64,
    b: f64,
}

impl FaceLayout {
    fn new(w: u32, h: u32) -> FaceLayout {
        let (w, h) = (f64::from(w), f64::from(h));
        FaceLayout {
            cx: w / 2.0,
            cy: h * 0.51,
            a: w * 0.325,
            b: h * 0.4125,
        }
    }

    /// Normalized coordinates with y up; inside the face when u² + v² ≤ 1.
    fn uv(&self, x: u32, y: u32) -> (f64, f64) {
        (
            (f64::from(x) + 0.5 - self.cx) / self.a,
            (self.cy - (f64::from(y) + 0.5)) / self.b,
        )
    }

    fn face_box(&self) -> FaceBox {
        let x0 = (self.cx - self.a).round() as u32;
        let y0 = (self.cy - self.b).round() as u32;
        FaceBox::new(x0, y0, (2.0 * self.a).round() as u32, (2.0 * self.b).round() as u32)
    }

    fn landmarks(&self, n: usize, shrink: f64) -> Landmarks {
        Landmarks(
            (0..n)
                .map(|k| {
                    let t = k as f64 / n as f64 * std::f64::consts::TAU;
                    let x = self.cx + shrink * self.a * t.cos();
                    let y = self.cy + shrink * self.b * t.sin();
                    ((x * 100.0).round() / 100.0, (y * 100.0).round() / 100.0)
                })
                .collect(),
        )
    }
}

const BACKGROUND: SrgbColor = SrgbColor {
    r: 0.20,
    g: 0.30,
    b: 0.65,
};
const EYE: SrgbColor = SrgbColor {
    r: 0.10,
    g: 0.08,
    b: 0.08,
};
const LIP_TINT: SrgbColor = SrgbColor {
    r: 0.62,
    g: 0.18,
    b: 0.20,
};

fn in_ellipse(u: f64, v: f64, cu: f64, cv: f64, ru: f64, rv: f64) -> bool {
    let du = (u - cu) / ru;
    let dv = (v - cv) / rv;
    du * du + dv * dv <= 1.0
}

/// One albedo map; returns the image and the per-pixel surface normals.
fn albedo_image(skin: SrgbColor, layout: &FaceLayout, w: u32, h: u32, seed: u64) -> (SrgbImage, Vec<[f64; 3]>) {
    let noise = SyntheticBase {
        width: w,
        height: h,
        mean: 0.5,
        amplitude: 0.05,
        cell: 6,
        seed,
    }
    .generate();
    let mut normals = Vec::with_capacity((w * h) as usize);
    let img = SrgbImage::from_fn(w, h, |x, y| {
        let (u, v) = layout.uv(x, y);
        let d = u * u + v * v;
        if d > 1.0 {
            normals.push([0.0, 0.0, 1.0]);
            return BACKGROUND;
        }
        let z = (1.0 - d).sqrt();
        let len = (d + z * z).sqrt();
        normals.push([u / len, v / len, z / len]);
        if in_ellipse(u.abs(), v, 0.36, 0.28, 0.14, 0.07) {
            return EYE;
        }
        let n = noise.image().get(x, y).r - 0.5;
        let textured = SrgbColor::new(skin.r * (1.0 + n), skin.g * (1.0 + n), skin.b * (1.0 + n)).clamped();
        if in_ellipse(u, v, 0.0, -0.5, 0.28, 0.07) {
            let m = 0.55;
            return SrgbColor::new(
                textured.r * (1.0 - m) + LIP_TINT.r * m,
                textured.g * (1.0 - m) + LIP_TINT.g * m,
                textured.b * (1.0 - m) + LIP_TINT.b * m,
            );
        }
        textured
    });
    (img, normals)
}

/// Photo = albedo · E(n) in linear light (exposure π cancels the 1/π).
pub fn shade(albedo: &SrgbImage, normals: &[[f64; 3]], light: &ShLighting) -> SrgbImage {
    let (w, h) = albedo.dims();
    let pixels = albedo
        .pixels()
        .iter()
        .zip(normals)
        .map(|(c, n)| {
            let e = sh_irradiance(*n, light).to_array();
            let a = c.to_array();
            SrgbColor::from_array([0, 1, 2].map(|k| linear_to_srgb((srgb_to_linear(a[k]) * e[k]).clamp(0.0, 1.0))))
        })
        .collect();
    SrgbImage::from_pixels(w, h, pixels).expect("same dimensions")
}

/// Writes the dataset and a `manifest.csv` into `dir`; returns the manifest path.
pub fn generate_fixtures(dir: &Path, params: &FixtureParams) -> Result<PathBuf> {
    if params.count == 0 || params.width < 32 || params.height < 32 {
        return Err(Error::invalid("fixtures need count ≥ 1 and images of at least 32×32"));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let layout = FaceLayout::new(params.width, params.height);
    let face = layout.face_box();
    let landmarks = layout.landmarks(36, 0.92);
    let mut records = Vec::with_capacity(params.count);
    for i in 0..params.count {
        let id = format!("face{:02}", i + 1);
        let skin = lab_to_srgb(ramp_albedo(i, params.count)).color;
        let (albedo, normals) = albedo_image(skin, &layout, params.width, params.height, params.seed.wrapping_add(i as u64));
        let env = fixture_environment(i);
        let photo = shade(&albedo, &normals, &env).quantized();
        let albedo = albedo.quantized();

        let photo_name = format!("{id}.png");
        let albedo_name = format!("{id}_albedo.png");
        let lm_name = format!("{id}.landmarks.txt");
        let sh_name = format!("{id}.sh.json");
        photo.save(&dir.join(&photo_name))?;
        albedo.save(&dir.join(&albedo_name))?;
        let lm_path = dir.join(&lm_name);
        std::fs::write(&lm_path, landmarks.to_text()).map_err(|e| Error::io(&lm_path, e))?;
        env.save(&dir.join(&sh_name))?;
        records.push(ManifestRecord {
            id,
            photo: photo_name,
            albedo: Some(albedo_name),
            landmarks: Some(lm_name),
            face_x: Some(face.x),
            face_y: Some(face.y),
            face_w: Some(face.w),
            face_h: Some(face.h),
            sh: Some(sh_name),
        });
    }
    let manifest = dir.join("manifest.csv");
    write_manifest_csv(&manifest, &records)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::colorimetry::{ita_class, ita_degrees, ItaClass};

    #[test]
    fn ramp_covers_every_class_twice() {
        for (i, ita) in RAMP_ITA.iter().enumerate() {
            let lab = ramp_albedo(i, 12);
            assert!((ita_degrees(lab) - ita).abs() < 1e-9);
            assert!(!lab_to_srgb(lab).clipped, "albedo {i} out of gamut");
        }
        let mut counts = [0usize; 6];
        for i in 0..12 {
            counts[ita_class(ita_degrees(ramp_albedo(i, 12))).index()] += 1;
        }
        assert_eq!(counts, [2; 6], "classes {:?}", ItaClass::ALL);
    }

    #[test]
    fn environments_are_physical_and_darken_the_face() {
        for i in 0..12 {
            let env = fixture_environment(i);
            assert!(env.is_physical());
            let e = sh_irradiance([0.0, 0.0, 1.0], &env).r;
            assert!(e > 0.5 && e < 1.0, "image {i}: {e}");
        }
    }

    #[test]
    fn cheeks_land_on_skin() {
        let layout = FaceLayout::new(160, 160);
        let face = layout.face_box();
        let (l, r) = crate::extraction::cheek_rois(face, (160, 160), &Default::default()).unwrap();
        for q in [l, r] {
            for (x, y) in [(q.x, q.y), (q.x + q.w - 1, q.y + q.h - 1), (q.x, q.y + q.h - 1)] {
                let (u, v) = layout.uv(x, y);
                assert!(u * u + v * v < 1.0);
                assert!(!in_ellipse(u.abs(), v, 0.36, 0.28, 0.14, 0.07));
                assert!(!in_ellipse(u, v, 0.0, -0.5, 0.28, 0.07));
            }
        }
    }
}
