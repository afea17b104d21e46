//! Applying a target skin color to a base texture.
//!
//! Two strategies are provided: multiplicative normalization
//! (`texel / mean · target`) and an additive variation map
//! (`texel - mean + target`). Both clamp per channel and report the share of
//! texels that needed clamping.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::colorimetry::{linear_to_srgb, srgb_to_linear, SrgbColor};
use crate::error::{Error, Result};
use crate::imaging::SrgbImage;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RecolorError {
    #[error("base texture not color-neutral enough: mean channel {channel} is {value:.2e}")]
    DegenerateMean { channel: usize, value: f64 },
    #[error("texture has no texels")]
    Empty,
}

/// Texel grid with its cached per-channel mean.
#[derive(Debug, Clone, PartialEq)]
pub struct Texture {
    image: SrgbImage,
    mean: SrgbColor,
}

impl Texture {
    pub fn new(image: SrgbImage) -> Result<Texture, RecolorError> {
        let n = image.pixels().len();
        if n == 0 {
            return Err(RecolorError::Empty);
        }
        let mut sum = [0.0f64; 3];
        for c in image.pixels() {
            sum[0] += c.r;
            sum[1] += c.g;
            sum[2] += c.b;
        }
        let n = n as f64;
        let mean = SrgbColor::new(sum[0] / n, sum[1] / n, sum[2] / n);
        Ok(Texture { image, mean })
    }

    pub fn uniform(width: u32, height: u32, color: SrgbColor) -> Texture {
        Texture {
            image: SrgbImage::filled(width, height, color),
            mean: color,
        }
    }

    pub fn image(&self) -> &SrgbImage {
        &self.image
    }

    pub fn into_image(self) -> SrgbImage {
        self.image
    }

    pub fn mean(&self) -> SrgbColor {
        self.mean
    }

    pub fn dims(&self) -> (u32, u32) {
        self.image.dims()
    }

    pub fn load(path: &Path) -> Result<Texture> {
        Ok(Texture::new(SrgbImage::load(path)?)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RecolorStrategy {
    Normalize,
    Variation,
}

impl RecolorStrategy {
    pub const ALL: [RecolorStrategy; 2] = [RecolorStrategy::Normalize, RecolorStrategy::Variation];

    pub fn key(self) -> &'static str {
        match self {
            RecolorStrategy::Normalize => "normalize",
            RecolorStrategy::Variation => "variation",
        }
    }
}

impl fmt::Display for RecolorStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for RecolorStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "normalize" | "normalization" => Ok(RecolorStrategy::Normalize),
            "variation" | "variation-map" => Ok(RecolorStrategy::Variation),
            _ => Err(format!("unknown recolor strategy {s:?} (normalize, variation)")),
        }
    }
}

/// Color encoding the recolor arithmetic runs in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RecolorSpace {
    #[default]
    Srgb,
    /// Texels and target are linearized first; kept for sensitivity runs.
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecolorProvenance {
    pub strategy: RecolorStrategy,
    pub space: RecolorSpace,
    pub target: SrgbColor,
    pub base_mean: SrgbColor,
    pub clip_fraction: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base: Option<SyntheticBase>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoloredTexture {
    pub texture: Texture,
    pub strategy: RecolorStrategy,
    pub target: SrgbColor,
    /// Share of texels with at least one clamped channel.
    pub clip_fraction: f64,
}

impl RecoloredTexture {
    pub fn provenance(&self, space: RecolorSpace, base: &Texture, synthetic: Option<SyntheticBase>) -> RecolorProvenance {
        RecolorProvenance {
            strategy: self.strategy,
            space,
            target: self.target,
            base_mean: base.mean(),
            clip_fraction: self.clip_fraction,
            base: synthetic,
        }
    }

    /// Writes the texture (PNG or PPM by extension) plus `<path>.json`.
    pub fn save(&self, path: &Path, provenance: &RecolorProvenance) -> Result<()> {
        self.texture.image().save(path)?;
        let sidecar = sidecar_path(path);
        let json = serde_json::to_string_pretty(provenance).map_err(|e| Error::format("provenance", e))?;
        std::fs::write(&sidecar, json + "\n").map_err(|e| Error::io(&sidecar, e))
    }
}

pub fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    s.into()
}

fn apply(
    base: &Texture,
    target: SrgbColor,
    strategy: RecolorStrategy,
    op: impl Fn(f64, f64, f64) -> f64,
) -> RecoloredTexture {
    let mu = base.mean().to_array();
    let t = target.to_array();
    let mut clipped = 0usize;
    let pixels: Vec<SrgbColor> = base
        .image()
        .pixels()
        .iter()
        .map(|c| {
            let mut out = [0.0; 3];
            let mut hit = false;
            for (j, v) in c.to_array().into_iter().enumerate() {
                let raw = op(v, mu[j], t[j]);
                let cl = raw.clamp(0.0, 1.0);
                hit |= cl != raw;
                out[j] = cl;
            }
            clipped += usize::from(hit);
            SrgbColor::from_array(out)
        })
        .collect();
    let (w, h) = base.dims();
    let n = pixels.len();
    let image = SrgbImage::from_pixels(w, h, pixels).expect("same dimensions as base");
    RecoloredTexture {
        texture: Texture::new(image).expect("non-empty"),
        strategy,
        target,
        clip_fraction: clipped as f64 / n as f64,
    }
}

/// `out = clamp(texel / mean(base) · target)` per channel.
pub fn recolor_normalize(base: &Texture, target: SrgbColor) -> Result<RecoloredTexture, RecolorError> {
    const MIN_MEAN: f64 = 1e-4;
    if let Some((channel, &value)) = base
        .mean()
        .to_array()
        .iter()
        .enumerate()
        .find(|(_, v)| **v <= MIN_MEAN)
    {
        return Err(RecolorError::DegenerateMean { channel, value });
    }
    Ok(apply(base, target, RecolorStrategy::Normalize, |v, mu, t| v / mu * t))
}

/// `out = clamp(texel - mean(base) + target)` per channel.
pub fn recolor_variation(base: &Texture, target: SrgbColor) -> RecoloredTexture {
    apply(base, target, RecolorStrategy::Variation, |v, mu, t| (v - mu) + t)
}

/// Dispatches on strategy and encoding.
pub fn recolor(
    base: &Texture,
    target: SrgbColor,
    strategy: RecolorStrategy,
    space: RecolorSpace,
) -> Result<RecoloredTexture, RecolorError> {
    match space {
        RecolorSpace::Srgb => match strategy {
            RecolorStrategy::Normalize => recolor_normalize(base, target),
            RecolorStrategy::Variation => Ok(recolor_variation(base, target)),
        },
        RecolorSpace::Linear => {
            let lin = |c: SrgbColor| SrgbColor::new(srgb_to_linear(c.r), srgb_to_linear(c.g), srgb_to_linear(c.b));
            let enc = |c: SrgbColor| SrgbColor::new(linear_to_srgb(c.r), linear_to_srgb(c.g), linear_to_srgb(c.b));
            let base_lin = Texture::new(base.image().map(lin))?;
            let out = match strategy {
                RecolorStrategy::Normalize => recolor_normalize(&base_lin, lin(target))?,
                RecolorStrategy::Variation => recolor_variation(&base_lin, lin(target)),
            };
            Ok(RecoloredTexture {
                texture: Texture::new(out.texture.image().map(enc))?,
                strategy,
                target,
                clip_fraction: out.clip_fraction,
            })
        }
    }
}

/// Procedural near-neutral base texture: a gray mean plus smooth seeded
/// value noise shared by all channels, re-centred so the mean is exact.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticBase {
    pub width: u32,
    pub height: u32,
    pub mean: f64,
    /// Peak deviation of the noise before re-centring.
    pub amplitude: f64,
    /// Lattice spacing of the value noise, in texels.
    pub cell: u32,
    pub seed: u64,
}

impl Default for SyntheticBase {
    fn default() -> Self {
        SyntheticBase {
            width: 128,
            height: 128,
            mean: 0.5,
            amplitude: 0.08,
            cell: 8,
            seed: 7,
        }
    }
}

impl SyntheticBase {
    pub fn generate(&self) -> Texture {
        let (w, h) = (self.width.max(1), self.height.max(1));
        let cell = self.cell.max(1);
        let gw = w / cell + 2;
        let gh = h / cell + 2;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let lattice: Vec<f64> = (0..gw * gh).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let at = |i: u32, j: u32| lattice[(j * gw + i) as usize];
        let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
        let mut field: Vec<f64> = Vec::with_capacity((w * h) as usize);
        for y in 0..h {
            for x in 0..w {
                let fx = f64::from(x) / f64::from(cell);
                let fy = f64::from(y) / f64::from(cell);
                let (i, j) = (fx.floor() as u32, fy.floor() as u32);
                let (tx, ty) = (smooth(fx.fract()), smooth(fy.fract()));
                let top = at(i, j) * (1.0 - tx) + at(i + 1, j) * tx;
                let bottom = at(i, j + 1) * (1.0 - tx) + at(i + 1, j + 1) * tx;
                field.push(self.amplitude * (top * (1.0 - ty) + bottom * ty));
            }
        }
        let offset = field.iter().sum::<f64>() / field.len() as f64;
        let pixels = field
            .into_iter()
            .map(|d| {
                let v = (self.mean + d - offset).clamp(0.0, 1.0);
                SrgbColor::new(v, v, v)
            })
            .collect();
        Texture::new(SrgbImage::from_pixels(w, h, pixels).expect("sized above")).expect("non-empty")
    }
}
