//! Analytic relighting: order-2 spherical-harmonics irradiance on a proxy
//! surface. Lambertian only; no shadowing or specular term.

mod render;
mod sh;

pub use render::{render_proxy, shade_linear, LightingConfig, RenderProxy, BACKGROUND, DEFAULT_EXPOSURE};
pub use sh::{
    lighting_preset, project_directional_to_sh, sh_basis, sh_irradiance, LightingPreset, ShLighting, BAND_OF,
    BAND_WEIGHTS, PARAMOUNT_ELEVATION_DEG, PRESET_TOTAL_INTENSITY, SH_CONVENTION,
};
