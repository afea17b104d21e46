//! Skin-tone fidelity benchmark core.
//!
//! A photograph's skin color is estimated (cheek sampling or masked k-means,
//! on the photo or on an albedo map), transferred onto a base texture,
//! relit on a proxy surface and re-estimated. The difference between the
//! two estimates is reported in CIELAB ΔE and ITA degrees, with rank
//! statistics across methods, lightings and skin-tone classes.

pub mod analysis;
pub mod colorimetry;
pub mod error;
pub mod extraction;
pub mod face_detect;
pub mod imaging;
pub mod pipeline;
pub mod recolor;
pub mod relight;

pub use colorimetry::{
    delta_e, delta_e_band, ita_class, ita_class_with, ita_degrees, lab_to_srgb, srgb_to_lab, BoundaryRule,
    ItaClass, LabColor, LinearRgb, PerceptibilityBand, SrgbColor,
};
pub use error::{Error, Result};
pub use extraction::{extract, ExtractParams, ExtractionInput, Method, SkinEstimate};
pub use face_detect::{detect_faces, Cascade, DetectParams, FaceBox};
pub use imaging::SrgbImage;
pub use recolor::{recolor, RecolorStrategy, RecoloredTexture, Texture};
pub use relight::{render_proxy, LightingConfig, RenderProxy, ShLighting};
