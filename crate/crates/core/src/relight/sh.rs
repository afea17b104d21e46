use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::colorimetry::LinearRgb;
use crate::error::{Error, Result};

/// Convention tag written into (and required from) every SH coefficient file.
pub const SH_CONVENTION: &str =
    "real-sh-l2;channel-major;order=Y00,Y1-1,Y10,Y11,Y2-2,Y2-1,Y20,Y21,Y22;radiance;frame=x-right,y-up,z-camera";

const Y0: f64 = 0.282_094_791_773_878_14; // 1/2 sqrt(1/π)
const Y1: f64 = 0.488_602_511_902_919_9; // sqrt(3/4π)
const Y2A: f64 = 1.092_548_430_592_079_2; // 1/2 sqrt(15/π)
const Y2B: f64 = 0.315_391_565_252_520_05; // 1/4 sqrt(5/π)
const Y2C: f64 = 0.546_274_215_296_039_6; // 1/4 sqrt(15/π)

/// Clamped-cosine convolution weights per band.
pub const BAND_WEIGHTS: [f64; 3] = [PI, 2.0 * PI / 3.0, PI / 4.0];

/// Band index of each of the nine coefficients.
pub const BAND_OF: [usize; 9] = [0, 1, 1, 1, 2, 2, 2, 2, 2];

/// Real SH basis for bands 0–2 evaluated at unit vector `n`.
pub fn sh_basis(n: [f64; 3]) -> [f64; 9] {
    let [x, y, z] = n;
    [
        Y0,
        Y1 * y,
        Y1 * z,
        Y1 * x,
        Y2A * x * y,
        Y2A * y * z,
        Y2B * (3.0 * z * z - 1.0),
        Y2A * x * z,
        Y2C * (x * x - y * y),
    ]
}

/// Nine radiance coefficients per RGB channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShLighting {
    pub coeffs: [[f64; 9]; 3],
}

#[derive(Serialize, Deserialize)]
struct ShFile {
    convention: String,
    channels: Vec<Vec<f64>>,
}

impl ShLighting {
    pub const ZERO: ShLighting = ShLighting { coeffs: [[0.0; 9]; 3] };

    /// Constant environment whose irradiance equals `level` for every normal.
    pub fn ambient(level: f64) -> ShLighting {
        let mut l = ShLighting::ZERO;
        for ch in &mut l.coeffs {
            ch[0] = level / (PI * Y0);
        }
        l
    }

    pub fn scaled(&self, s: f64) -> ShLighting {
        let mut out = *self;
        for ch in &mut out.coeffs {
            for c in ch.iter_mut() {
                *c *= s;
            }
        }
        out
    }

    pub fn add(&self, other: &ShLighting) -> ShLighting {
        let mut out = *self;
        for (a, b) in out.coeffs.iter_mut().zip(&other.coeffs) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().flatten().all(|c| c.is_finite())
    }

    /// True when every band-0 coefficient is non-negative.
    pub fn is_physical(&self) -> bool {
        self.coeffs.iter().all(|ch| ch[0] >= 0.0)
    }

    pub fn to_json(&self) -> String {
        let file = ShFile {
            convention: SH_CONVENTION.to_string(),
            channels: self.coeffs.iter().map(|c| c.to_vec()).collect(),
        };
        serde_json::to_string_pretty(&file).expect("plain data serializes") + "\n"
    }

    pub fn from_json(text: &str) -> std::result::Result<ShLighting, String> {
        let file: ShFile = serde_json::from_str(text).map_err(|e| e.to_string())?;
        if file.convention != SH_CONVENTION {
            return Err(format!(
                "unsupported SH convention {:?}; expected {SH_CONVENTION:?}",
                file.convention
            ));
        }
        if file.channels.len() != 3 || file.channels.iter().any(|c| c.len() != 9) {
            return Err("expected 3 channels of 9 coefficients".into());
        }
        let mut l = ShLighting::ZERO;
        for (dst, src) in l.coeffs.iter_mut().zip(&file.channels) {
            dst.copy_from_slice(src);
        }
        if !l.is_finite() {
            return Err("non-finite SH coefficient".into());
        }
        Ok(l)
    }

    pub fn load(path: &Path) -> Result<ShLighting> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ShLighting::from_json(&text).map_err(|e| Error::format(path.display().to_string(), e))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

/// Irradiance at unit normal `n`, floored at zero per channel.
pub fn sh_irradiance(n: [f64; 3], light: &ShLighting) -> LinearRgb {
    let basis = sh_basis(n);
    let mut out = [0.0f64; 3];
    for (o, ch) in out.iter_mut().zip(&light.coeffs) {
        let mut e = 0.0;
        for i in 0..9 {
            e += BAND_WEIGHTS[BAND_OF[i]] * ch[i] * basis[i];
        }
        *o = e.max(0.0);
    }
    LinearRgb::from_array(out)
}

/// Projects a distant delta light of the given intensity onto bands 0–2.
pub fn project_directional_to_sh(direction: [f64; 3], intensity: LinearRgb) -> ShLighting {
    let basis = sh_basis(direction);
    let mut l = ShLighting::ZERO;
    for (ch, i) in l.coeffs.iter_mut().zip(intensity.to_array()) {
        for (c, b) in ch.iter_mut().zip(basis) {
            *c = i * b;
        }
    }
    l
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LightingPreset {
    Frontal,
    Paramount,
}

/// Key light intensity of the frontal preset; the paramount preset splits
/// the same total between its key and a 25 % fill.
pub const PRESET_TOTAL_INTENSITY: f64 = 1.0;
/// Elevation of the paramount key light above the camera axis.
pub const PARAMOUNT_ELEVATION_DEG: f64 = 45.0;

pub fn lighting_preset(tag: LightingPreset) -> ShLighting {
    let front = [0.0, 0.0, 1.0];
    match tag {
        LightingPreset::Frontal => {
            project_directional_to_sh(front, LinearRgb::splat(PRESET_TOTAL_INTENSITY))
        }
        LightingPreset::Paramount => {
            let el = PARAMOUNT_ELEVATION_DEG.to_radians();
            let key_dir = [0.0, el.sin(), el.cos()];
            let key = PRESET_TOTAL_INTENSITY / 1.25;
            let fill = key * 0.25;
            project_directional_to_sh(key_dir, LinearRgb::splat(key))
                .add(&project_directional_to_sh(front, LinearRgb::splat(fill)))
        }
    }
}
