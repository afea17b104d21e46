use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::Correction;
use crate::error::{Error, Result};
use crate::extraction::{ExtractParams, Method};
use crate::face_detect::{parse_cascade, Cascade, DetectParams};
use crate::recolor::{RecolorSpace, RecolorStrategy, SyntheticBase};
use crate::relight::DEFAULT_EXPOSURE;

/// Lighting axis of the evaluation grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LightingSpec {
    Frontal,
    Paramount,
    /// Per-image SH environment from the manifest's `sh` column.
    Cfd,
    /// Unit ambient irradiance; with the default exposure the render is an
    /// identity on texel values.
    Ambient,
}

impl LightingSpec {
    pub const DEFAULT: [LightingSpec; 3] = [LightingSpec::Frontal, LightingSpec::Paramount, LightingSpec::Cfd];

    pub fn key(self) -> &'static str {
        match self {
            LightingSpec::Frontal => "frontal",
            LightingSpec::Paramount => "paramount",
            LightingSpec::Cfd => "cfd",
            LightingSpec::Ambient => "ambient",
        }
    }
}

impl fmt::Display for LightingSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for LightingSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "frontal" => Ok(LightingSpec::Frontal),
            "paramount" => Ok(LightingSpec::Paramount),
            "cfd" | "cfd-sh" | "sh" => Ok(LightingSpec::Cfd),
            "ambient" => Ok(LightingSpec::Ambient),
            other => Err(format!("unknown lighting {other:?} (frontal, paramount, cfd, ambient)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProxyShape {
    #[default]
    Sphere,
    Flat,
}

/// Where skin is sampled on the rendered proxy image.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum RenderedRoi {
    /// The method's own family: cheek squares on the coverage bounding box,
    /// or k-means over the coverage mask.
    #[default]
    SameFamily,
    /// Plain mean over a centered square covering `fraction` of the coverage
    /// box side, for every method.
    CentralPatch { fraction: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub methods: Vec<Method>,
    pub recolors: Vec<RecolorStrategy>,
    pub recolor_space: RecolorSpace,
    pub lightings: Vec<LightingSpec>,
    /// Haar cascade XML; the bundled frontal-face cascade when absent.
    pub cascade: Option<PathBuf>,
    pub detect: DetectParams,
    pub extract: ExtractParams,
    pub base: SyntheticBase,
    pub proxy: ProxyShape,
    pub exposure: f64,
    pub rendered_roi: RenderedRoi,
    pub correction: Correction,
    pub cache: bool,
    pub out: PathBuf,
    /// Worker threads; 0 uses every available core.
    pub jobs: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            methods: Method::ALL.to_vec(),
            recolors: RecolorStrategy::ALL.to_vec(),
            recolor_space: RecolorSpace::Srgb,
            lightings: LightingSpec::DEFAULT.to_vec(),
            cascade: None,
            detect: DetectParams::default(),
            extract: ExtractParams::default(),
            base: SyntheticBase::default(),
            proxy: ProxyShape::Sphere,
            exposure: DEFAULT_EXPOSURE,
            rendered_roi: RenderedRoi::SameFamily,
            correction: Correction::Bonferroni,
            cache: true,
            out: PathBuf::from("out"),
            jobs: 0,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> std::result::Result<RunConfig, String> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| e.to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        RunConfig::from_json(&text).map_err(|e| Error::format(path.display().to_string(), e))
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.methods.is_empty() || self.recolors.is_empty() || self.lightings.is_empty() {
            return Err("methods, recolors and lightings must be non-empty".into());
        }
        let dup = |n: usize, m: usize| n != m;
        let mut m = self.methods.clone();
        m.sort();
        m.dedup();
        let mut r = self.recolors.clone();
        r.sort();
        r.dedup();
        let mut l = self.lightings.clone();
        l.sort();
        l.dedup();
        if dup(m.len(), self.methods.len()) || dup(r.len(), self.recolors.len()) || dup(l.len(), self.lightings.len()) {
            return Err("methods, recolors and lightings must not repeat".into());
        }
        if !(self.exposure.is_finite() && self.exposure > 0.0) {
            return Err(format!("exposure must be positive, got {}", self.exposure));
        }
        if self.extract.kmeans.k == 0 || self.extract.kmeans.top_m == 0 {
            return Err("k-means k and top_m must be positive".into());
        }
        if self.detect.scale_factor <= 1.0 || self.detect.step == 0 {
            return Err("detect.scale_factor must exceed 1 and detect.step must be positive".into());
        }
        if let RenderedRoi::CentralPatch { fraction } = self.rendered_roi {
            if !(fraction > 0.0 && fraction <= 1.0) {
                return Err(format!("central patch fraction must be in (0, 1], got {fraction}"));
            }
        }
        if self.base.width == 0 || self.base.height == 0 {
            return Err("base texture must be non-empty".into());
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON of every setting that can change
    /// results (`out` and `jobs` excluded), as 16 hex digits.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out = PathBuf::new();
        c.jobs = 0;
        let json = serde_json::to_string(&c).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        hex::encode(&digest[..8])
    }

    pub fn load_cascade(&self) -> Result<Cascade> {
        match &self.cascade {
            None => Ok(Cascade::frontal_default()),
            Some(p) => {
                let bytes = std::fs::read(p).map_err(|e| Error::io(p, e))?;
                parse_cascade(&bytes).map_err(|e| Error::format(p.display().to_string(), e))
            }
        }
    }
}
