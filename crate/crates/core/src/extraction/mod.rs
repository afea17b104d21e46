//! Skin-color extraction: cheek sampling, masked k-means (MMM), and their
//! variants that sample an intrinsic albedo map instead of the photograph.

mod kmeans;
mod mask;
mod regions;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::colorimetry::{ita_class_with, ita_degrees, srgb_to_lab, BoundaryRule, ItaClass, LabColor, SrgbColor};
use crate::face_detect::FaceBox;
use crate::imaging::SrgbImage;

pub use kmeans::{mmm_estimate, ClusterSummary, KMeansParams, MmmResult};
pub use mask::{mask_chroma_fallback, mask_from_landmarks, ChromaGate, Landmarks, SkinMask};
pub use regions::{cheek_rois, mean_color, CheekAnchoring, CheekGeometry, ColorSample, RegionSpec, Side};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExtractionError {
    #[error("face too small: cheek square side {side} px is below the 2 px minimum")]
    FaceTooSmall { side: u32 },
    #[error("region of {area} px² is below the {min} px² minimum")]
    RegionTooSmall { area: u64, min: u64 },
    #[error("no pixels to sample")]
    EmptySample,
    #[error("convex hull needs at least 3 landmarks, got {0}")]
    TooFewLandmarks(usize),
    #[error("landmarks are collinear")]
    CollinearLandmarks,
    #[error("landmark line {line}: {message}")]
    LandmarkSyntax { line: usize, message: String },
    #[error("no skin pixels")]
    NoSkinPixels,
    #[error("masked pixel count {have} is below k = {need}")]
    TooFewPixels { have: usize, need: usize },
    #[error("{0} requires an albedo map")]
    MissingAlbedo(Method),
    #[error("no face box available")]
    FaceNotFound,
    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: (u32, u32),
        actual: (u32, u32),
    },
}

/// The four extraction strategies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Cheek,
    Mmm,
    TCheek,
    TMmm,
}

/// Sampling geometry shared by a method and its albedo variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Cheek,
    Mmm,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Cheek, Method::Mmm, Method::TCheek, Method::TMmm];

    pub fn uses_albedo(self) -> bool {
        matches!(self, Method::TCheek | Method::TMmm)
    }

    pub fn family(self) -> Family {
        match self {
            Method::Cheek | Method::TCheek => Family::Cheek,
            Method::Mmm | Method::TMmm => Family::Mmm,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Method::Cheek => "Cheek",
            Method::Mmm => "MMM",
            Method::TCheek => "T-Cheek",
            Method::TMmm => "T-MMM",
        }
    }

    pub fn key(self) -> &'static str {
        match self {
            Method::Cheek => "cheek",
            Method::Mmm => "mmm",
            Method::TCheek => "t-cheek",
            Method::TMmm => "t-mmm",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        Method::ALL
            .into_iter()
            .find(|m| m.key() == norm)
            .ok_or_else(|| format!("unknown extraction method {s:?} (cheek, mmm, t-cheek, t-mmm)"))
    }
}

/// Where an MMM mask came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaskSource {
    Landmarks,
    /// Artifact-defined Lab chroma gate; flagged in reports.
    ChromaFallback,
    /// Coverage mask of a rendered proxy.
    Coverage,
}

/// One extraction result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkinEstimate {
    pub method: Method,
    pub mean: SrgbColor,
    pub lab: LabColor,
    pub ita: f64,
    pub class: ItaClass,
    pub samples: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_source: Option<MaskSource>,
}

impl SkinEstimate {
    pub fn new(method: Method, mean: SrgbColor, samples: usize, rule: BoundaryRule) -> Self {
        let lab = srgb_to_lab(mean);
        let ita = ita_degrees(lab);
        SkinEstimate {
            method,
            mean,
            lab,
            ita,
            class: ita_class_with(ita, rule),
            samples,
            mask_source: None,
        }
    }

    pub fn with_mask_source(mut self, src: MaskSource) -> Self {
        self.mask_source = Some(src);
        self
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ExtractionInput<'a> {
    pub photo: &'a SrgbImage,
    pub albedo: Option<&'a SrgbImage>,
    pub landmarks: Option<&'a Landmarks>,
    pub face: Option<FaceBox>,
}

impl<'a> ExtractionInput<'a> {
    pub fn new(photo: &'a SrgbImage) -> Self {
        ExtractionInput {
            photo,
            albedo: None,
            landmarks: None,
            face: None,
        }
    }

    pub fn with_albedo(mut self, albedo: &'a SrgbImage) -> Self {
        self.albedo = Some(albedo);
        self
    }

    pub fn with_landmarks(mut self, lm: &'a Landmarks) -> Self {
        self.landmarks = Some(lm);
        self
    }

    pub fn with_face(mut self, face: FaceBox) -> Self {
        self.face = Some(face);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractParams {
    pub cheek: CheekGeometry,
    pub kmeans: KMeansParams,
    pub boundary: BoundaryRule,
    /// Smallest accepted cheek square area in px².
    pub min_region_area: u64,
}

impl Default for ExtractParams {
    fn default() -> Self {
        ExtractParams {
            cheek: CheekGeometry::default(),
            kmeans: KMeansParams::default(),
            boundary: BoundaryRule::DarkerClass,
            min_region_area: 4,
        }
    }
}

/// Mean color over the two cheek squares of `face`, sampled from `source`.
pub fn cheek_estimate(
    source: &SrgbImage,
    face: FaceBox,
    method: Method,
    params: &ExtractParams,
) -> Result<SkinEstimate, ExtractionError> {
    let (left, right) = cheek_rois(face, source.dims(), &params.cheek)?;
    let sample = mean_color(source, &[left, right], params.min_region_area)?;
    Ok(SkinEstimate::new(method, sample.mean, sample.count, params.boundary))
}

/// Masked k-means estimate over `source`.
pub fn mmm_from_mask(
    source: &SrgbImage,
    mask: &SkinMask,
    method: Method,
    params: &ExtractParams,
) -> Result<SkinEstimate, ExtractionError> {
    let res = mmm_estimate(source, mask, &params.kmeans)?;
    Ok(SkinEstimate::new(method, res.color, res.samples, params.boundary))
}

/// Runs one extraction strategy. T-variants use exactly the photo's
/// geometry (face box, landmarks or fallback mask) but read the albedo map.
pub fn extract(
    input: &ExtractionInput<'_>,
    method: Method,
    params: &ExtractParams,
) -> Result<SkinEstimate, ExtractionError> {
    let source = if method.uses_albedo() {
        let albedo = input.albedo.ok_or(ExtractionError::MissingAlbedo(method))?;
        if albedo.dims() != input.photo.dims() {
            return Err(ExtractionError::DimensionMismatch {
                expected: input.photo.dims(),
                actual: albedo.dims(),
            });
        }
        albedo
    } else {
        input.photo
    };
    match method.family() {
        Family::Cheek => {
            let face = input.face.ok_or(ExtractionError::FaceNotFound)?;
            cheek_estimate(source, face, method, params)
        }
        Family::Mmm => {
            let (mask, src) = match input.landmarks {
                Some(lm) => (mask_from_landmarks(lm, input.photo.dims())?, MaskSource::Landmarks),
                None => (mask_chroma_fallback(input.photo)?, MaskSource::ChromaFallback),
            };
            Ok(mmm_from_mask(source, &mask, method, params)?.with_mask_source(src))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::colorimetry::{linear_to_srgb, srgb_to_linear};

    fn face_photo(color: SrgbColor) -> SrgbImage {
        SrgbImage::filled(64, 64, color)
    }

    #[test]
    fn t_cheek_matches_cheek_on_identical_albedo() {
        let img = SrgbImage::from_fn(64, 64, |x, y| {
            SrgbColor::from_u8([(100 + x) as u8, (60 + y) as u8, ((x * y) % 200) as u8])
        });
        let input = ExtractionInput::new(&img)
            .with_albedo(&img)
            .with_face(FaceBox::new(4, 4, 50, 50));
        let p = ExtractParams::default();
        let a = extract(&input, Method::Cheek, &p).unwrap();
        let b = extract(&input, Method::TCheek, &p).unwrap();
        assert_eq!(a.mean, b.mean);
        assert_eq!(a.samples, b.samples);
        let c = extract(&input, Method::Mmm, &p).unwrap();
        let d = extract(&input, Method::TMmm, &p).unwrap();
        assert_eq!(c.mean, d.mean);
    }

    #[test]
    fn attenuated_photo_reads_darker_than_albedo() {
        let albedo_color = SrgbColor::new(0.7, 0.52, 0.42);
        let albedo = face_photo(albedo_color);
        let photo = albedo.map(|c| {
            SrgbColor::new(
                linear_to_srgb(srgb_to_linear(c.r) * 0.5),
                linear_to_srgb(srgb_to_linear(c.g) * 0.5),
                linear_to_srgb(srgb_to_linear(c.b) * 0.5),
            )
        });
        let input = ExtractionInput::new(&photo)
            .with_albedo(&albedo)
            .with_face(FaceBox::new(0, 0, 64, 64));
        let p = ExtractParams::default();
        let cheek = extract(&input, Method::Cheek, &p).unwrap();
        let t_cheek = extract(&input, Method::TCheek, &p).unwrap();
        assert!(cheek.lab.l < t_cheek.lab.l);
        assert!((t_cheek.mean.r - albedo_color.r).abs() < 1e-12);
        assert!((t_cheek.mean.g - albedo_color.g).abs() < 1e-12);
        assert!((t_cheek.mean.b - albedo_color.b).abs() < 1e-12);
    }

    #[test]
    fn t_mmm_on_constant_albedo() {
        let photo = face_photo(SrgbColor::new(0.72, 0.55, 0.45));
        let albedo = face_photo(SrgbColor::new(0.6, 0.45, 0.35));
        let input = ExtractionInput::new(&photo).with_albedo(&albedo);
        let e = extract(&input, Method::TMmm, &ExtractParams::default()).unwrap();
        assert!((e.mean.r - 0.6).abs() < 1e-9 && (e.mean.g - 0.45).abs() < 1e-9);
        assert_eq!(e.mask_source, Some(MaskSource::ChromaFallback));
    }

    #[test]
    fn t_variants_require_albedo() {
        let photo = face_photo(SrgbColor::new(0.72, 0.55, 0.45));
        let input = ExtractionInput::new(&photo).with_face(FaceBox::new(0, 0, 64, 64));
        assert_eq!(
            extract(&input, Method::TCheek, &ExtractParams::default()),
            Err(ExtractionError::MissingAlbedo(Method::TCheek))
        );
        let no_face = ExtractionInput::new(&photo);
        assert_eq!(
            extract(&no_face, Method::Cheek, &ExtractParams::default()),
            Err(ExtractionError::FaceNotFound)
        );
    }

    #[test]
    fn method_names_parse() {
        for m in Method::ALL {
            assert_eq!(m.key().parse::<Method>().unwrap(), m);
        }
        assert_eq!("T_MMM".parse::<Method>().unwrap(), Method::TMmm);
        assert!("other".parse::<Method>().is_err());
    }
}
