use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::sh::{lighting_preset, sh_irradiance, LightingPreset, ShLighting};
use crate::colorimetry::{linear_to_srgb, srgb_to_linear, SrgbColor};
use crate::error::{Error, Result};
use crate::extraction::SkinMask;
use crate::face_detect::FaceBox;
use crate::recolor::Texture;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
#[allow(clippy::large_enum_variant)]
pub enum LightingConfig {
    Frontal,
    Paramount,
    CfdSh(ShLighting),
}

impl LightingConfig {
    pub fn to_sh(&self) -> ShLighting {
        match self {
            LightingConfig::Frontal => lighting_preset(LightingPreset::Frontal),
            LightingConfig::Paramount => lighting_preset(LightingPreset::Paramount),
            LightingConfig::CfdSh(l) => *l,
        }
    }
}

/// Per-pixel unit normals plus the set of pixels the surface covers.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderProxy {
    width: u32,
    height: u32,
    normals: Vec<Option<[f64; 3]>>,
}

impl RenderProxy {
    /// Front hemisphere of a sphere inscribed in the grid; x right, y up,
    /// z toward the camera.
    pub fn sphere(width: u32, height: u32) -> RenderProxy {
        let cx = f64::from(width) / 2.0;
        let cy = f64::from(height) / 2.0;
        let r = cx.min(cy);
        let mut normals = Vec::with_capacity(width as usize * height as usize);
        for py in 0..height {
            for px in 0..width {
                let u = (f64::from(px) + 0.5 - cx) / r;
                let v = (cy - (f64::from(py) + 0.5)) / r;
                let d = u * u + v * v;
                normals.push((d <= 1.0).then(|| {
                    let z = (1.0 - d).sqrt();
                    let len = (d + z * z).sqrt();
                    [u / len, v / len, z / len]
                }));
            }
        }
        RenderProxy { width, height, normals }
    }

    /// Every pixel covered, every normal +z.
    pub fn flat(width: u32, height: u32) -> RenderProxy {
        RenderProxy {
            width,
            height,
            normals: vec![Some([0.0, 0.0, 1.0]); width as usize * height as usize],
        }
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn normal(&self, x: u32, y: u32) -> Option<[f64; 3]> {
        self.normals[y as usize * self.width as usize + x as usize]
    }

    pub fn coverage_mask(&self) -> SkinMask {
        SkinMask::from_fn(self.width, self.height, |x, y| self.normal(x, y).is_some())
    }

    /// Bounding box of the covered pixels.
    pub fn coverage_box(&self) -> Option<FaceBox> {
        self.coverage_mask()
            .bounding_box()
            .map(|(x, y, w, h)| FaceBox::new(x, y, w, h))
    }
}

/// Background for pixels outside the proxy's coverage.
pub const BACKGROUND: SrgbColor = SrgbColor { r: 0.0, g: 0.0, b: 0.0 };

/// With unit irradiance this makes `E/π · exposure = 1`.
pub const DEFAULT_EXPOSURE: f64 = PI;

/// Linear radiance before encoding and clamping; `None` off the proxy.
pub fn shade_linear(
    texture: &Texture,
    light: &ShLighting,
    proxy: &RenderProxy,
    exposure: f64,
) -> Result<Vec<Option<[f64; 3]>>> {
    if texture.dims() != proxy.dims() {
        return Err(Error::invalid(format!(
            "texture is {:?} but proxy is {:?}",
            texture.dims(),
            proxy.dims()
        )));
    }
    let w = proxy.width as usize;
    let texels = texture.image().pixels();
    let mut out = vec![None; texels.len()];
    out.par_chunks_mut(w.max(1))
        .enumerate()
        .for_each(|(row, dst)| {
            for (i, slot) in dst.iter_mut().enumerate() {
                let idx = row * w + i;
                *slot = proxy.normals[idx].map(|n| {
                    let e = sh_irradiance(n, light).to_array();
                    let a = texels[idx].to_array();
                    [0, 1, 2].map(|c| srgb_to_linear(a[c]) * e[c] / PI * exposure)
                });
            }
        });
    Ok(out)
}

/// Shades `texture` as albedo on `proxy` and re-encodes to sRGB.
pub fn render_proxy(
    texture: &Texture,
    light: &LightingConfig,
    proxy: &RenderProxy,
    exposure: f64,
) -> Result<crate::imaging::SrgbImage> {
    let lin = shade_linear(texture, &light.to_sh(), proxy, exposure)?;
    let pixels = lin
        .into_iter()
        .map(|p| match p {
            Some(v) => SrgbColor::from_array(v.map(|c| linear_to_srgb(c.clamp(0.0, 1.0)))),
            None => BACKGROUND,
        })
        .collect();
    crate::imaging::SrgbImage::from_pixels(proxy.width, proxy.height, pixels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::colorimetry::LinearRgb;
    use crate::relight::project_directional_to_sh;

    fn ramp(w: u32, h: u32) -> Texture {
        Texture::new(crate::imaging::SrgbImage::from_fn(w, h, |x, y| {
            SrgbColor::new(f64::from(x) / f64::from(w), f64::from(y) / f64::from(h), 0.4)
        }))
        .unwrap()
    }

    #[test]
    fn identity_ambient_on_flat_proxy_is_closed_loop() {
        let tex = ramp(16, 12);
        let light = LightingConfig::CfdSh(ShLighting::ambient(1.0));
        let out = render_proxy(&tex, &light, &RenderProxy::flat(16, 12), DEFAULT_EXPOSURE).unwrap();
        for (a, b) in out.pixels().iter().zip(tex.image().pixels()) {
            for (x, y) in a.to_array().into_iter().zip(b.to_array()) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn half_ambient_halves_linear_values() {
        let tex = ramp(8, 8);
        let proxy = RenderProxy::flat(8, 8);
        let full = shade_linear(&tex, &ShLighting::ambient(1.0), &proxy, DEFAULT_EXPOSURE).unwrap();
        let half = shade_linear(&tex, &ShLighting::ambient(0.5), &proxy, DEFAULT_EXPOSURE).unwrap();
        for (f, h) in full.iter().zip(&half) {
            let (f, h) = (f.unwrap(), h.unwrap());
            for c in 0..3 {
                assert!((h[c] - f[c] / 2.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn sphere_normals_are_unit_and_uncovered_is_background() {
        let p = RenderProxy::sphere(33, 21);
        for y in 0..21 {
            for x in 0..33 {
                if let Some(n) = p.normal(x, y) {
                    let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
                    assert!((len - 1.0).abs() < 1e-12);
                    assert!(n[2] >= 0.0);
                }
            }
        }
        assert!(p.normal(0, 0).is_none());
        let tex = Texture::uniform(33, 21, SrgbColor::new(0.6, 0.5, 0.4));
        let img = render_proxy(&tex, &LightingConfig::Frontal, &p, DEFAULT_EXPOSURE).unwrap();
        assert_eq!(img.get(0, 0), BACKGROUND);
        let b = p.coverage_box().unwrap();
        assert_eq!(b.h, 21);
    }

    #[test]
    fn frontal_brightness_follows_n_dot_z() {
        let p = RenderProxy::sphere(40, 40);
        let tex = Texture::uniform(40, 40, SrgbColor::new(0.5, 0.5, 0.5));
        let light = project_directional_to_sh([0.0, 0.0, 1.0], LinearRgb::splat(1.0));
        let lin = shade_linear(&tex, &light, &p, DEFAULT_EXPOSURE).unwrap();
        let mut row: Vec<(f64, f64)> = (0..40)
            .filter_map(|x| {
                let n = p.normal(x, 20)?;
                Some((n[2], lin[20 * 40 + x as usize].unwrap()[0]))
            })
            .collect();
        row.sort_by(|a, b| a.0.total_cmp(&b.0));
        assert!(row.windows(2).all(|w| w[0].1 <= w[1].1 + 1e-15));
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let tex = Texture::uniform(4, 4, SrgbColor::WHITE);
        assert!(render_proxy(&tex, &LightingConfig::Frontal, &RenderProxy::flat(5, 4), 1.0).is_err());
    }
}
