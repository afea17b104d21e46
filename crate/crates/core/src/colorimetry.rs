//! Color-space conversions and skin-tone fidelity metrics.
//!
//! Everything here works on the sRGB / CIELAB pair under a D65 white point
//! (2° observer). The two metrics used throughout the benchmark are the CIE76
//! color difference and the Individual Typology Angle (ITA) with its six
//! dermatological classes.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// D65 reference white, 2° observer.
pub const WHITE_X: f64 = 0.95047;
pub const WHITE_Y: f64 = 1.00000;
pub const WHITE_Z: f64 = 1.08883;

/// Linear sRGB (BT.709 primaries) to CIE XYZ, D65.
pub const RGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
];

/// Exact inverse of [`RGB_TO_XYZ`].
pub const XYZ_TO_RGB: [[f64; 3]; 3] = invert3(RGB_TO_XYZ);

const DELTA: f64 = 6.0 / 29.0;

const fn invert3(m: [[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let c00 = m[1][1] * m[2][2] - m[1][2] * m[2][1];
    let c01 = m[1][2] * m[2][0] - m[1][0] * m[2][2];
    let c02 = m[1][0] * m[2][1] - m[1][1] * m[2][0];
    let det = m[0][0] * c00 + m[0][1] * c01 + m[0][2] * c02;
    let inv = 1.0 / det;
    [
        [
            c00 * inv,
            (m[0][2] * m[2][1] - m[0][1] * m[2][2]) * inv,
            (m[0][1] * m[1][2] - m[0][2] * m[1][1]) * inv,
        ],
        [
            c01 * inv,
            (m[0][0] * m[2][2] - m[0][2] * m[2][0]) * inv,
            (m[0][2] * m[1][0] - m[0][0] * m[1][2]) * inv,
        ],
        [
            c02 * inv,
            (m[0][1] * m[2][0] - m[0][0] * m[2][1]) * inv,
            (m[0][0] * m[1][1] - m[0][1] * m[1][0]) * inv,
        ],
    ]
}

/// Display-referred sRGB, components in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SrgbColor {
    pub r: f64,
    pub g: f64,
    pub b: f64,
}

impl SrgbColor {
    pub const BLACK: SrgbColor = SrgbColor { r: 0.0, g: 0.0, b: 0.0 };
    pub const WHITE: SrgbColor = SrgbColor { r: 1.0, g: 1.0, b: 1.0 };

    pub const fn new(r: f64, g: f64, b: f64) -> Self {
        SrgbColor { r, g, b }
    }

    /// Builds a color from 8-bit components, scaled by 1/255.
    pub fn from_u8(rgb: [u8; 3]) -> Self {
        SrgbColor::new(
            f64::from(rgb[0]) / 255.0,
            f64::from(rgb[1]) / 255.0,
            f64::from(rgb[2]) / 255.0,
        )
    }

    /// Quantizes to 8 bits with round-half-away-from-zero after clamping.
    pub fn to_u8(self) -> [u8; 3] {
        let q = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
        [q(self.r), q(self.g), q(self.b)]
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.r, self.g, self.b]
    }

    pub fn from_array(c: [f64; 3]) -> Self {
        SrgbColor::new(c[0], c[1], c[2])
    }

    pub fn clamped(self) -> Self {
        SrgbColor::new(
            self.r.clamp(0.0, 1.0),
            self.g.clamp(0.0, 1.0),
            self.b.clamp(0.0, 1.0),
        )
    }

    pub fn is_in_gamut(self) -> bool {
        self.to_array().iter().all(|v| (0.0..=1.0).contains(v))
    }

    pub fn to_linear(self) -> LinearRgb {
        LinearRgb::new(
            srgb_to_linear(self.r),
            srgb_to_linear(self.g),
            srgb_to_linear(self.b),
        )
    }

    pub fn to_lab(self) -> LabColor {
        srgb_to_lab(self)
    }
}

impl fmt::Display for SrgbColor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:.4}, {:.4}, {:.4})", self.r, self.g, self.b)
    }
}

/// Accepts `r,g,b` with unit-interval components or `#rrggbb`.
impl FromStr for SrgbColor {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if let Some(hex) = s.strip_prefix('#') {
            if hex.len() != 6 {
                return Err(format!("expected #rrggbb, got {s:?}"));
            }
            let byte = |i: usize| {
                u8::from_str_radix(&hex[i..i + 2], 16).map_err(|e| format!("{s:?}: {e}"))
            };
            return Ok(SrgbColor::from_u8([byte(0)?, byte(2)?, byte(4)?]));
        }
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{s:?}: {e}")))
            .collect::<Result<_, _>>()?;
        match parts.as_slice() {
            [r, g, b] => {
                let c = SrgbColor::new(*r, *g, *b);
                if c.is_in_gamut() {
                    Ok(c)
                } else {
                    Err(format!("components of {s:?} must lie in [0, 1]"))
                }
            }
            _ => Err(format!("expected three comma-separated components, got {s:?}")),
        }
    }
}

/// Linear-light RGB. Values above 1 are allowed before clamping.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LinearRgb {
    pub r: f64,
    pub g: f64,
    pub b: f64,
}

impl LinearRgb {
    pub const fn new(r: f64, g: f64, b: f64) -> Self {
        LinearRgb { r, g, b }
    }

    pub const fn splat(v: f64) -> Self {
        LinearRgb { r: v, g: v, b: v }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.r, self.g, self.b]
    }

    pub fn from_array(c: [f64; 3]) -> Self {
        LinearRgb::new(c[0], c[1], c[2])
    }

    pub fn scale(self, s: f64) -> Self {
        LinearRgb::new(self.r * s, self.g * s, self.b * s)
    }

    /// Encodes to sRGB, clamping each channel to `[0, 1]` first.
    pub fn to_srgb(self) -> SrgbColor {
        SrgbColor::new(
            linear_to_srgb(self.r.clamp(0.0, 1.0)),
            linear_to_srgb(self.g.clamp(0.0, 1.0)),
            linear_to_srgb(self.b.clamp(0.0, 1.0)),
        )
    }
}

/// CIELAB under D65.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LabColor {
    pub l: f64,
    pub a: f64,
    pub b: f64,
}

impl LabColor {
    pub const fn new(l: f64, a: f64, b: f64) -> Self {
        LabColor { l, a, b }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.l, self.a, self.b]
    }

    pub fn from_array(c: [f64; 3]) -> Self {
        LabColor::new(c[0], c[1], c[2])
    }
}

impl fmt::Display for LabColor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "L*={:.3} a*={:.3} b*={:.3}", self.l, self.a, self.b)
    }
}

/// sRGB electro-optical transfer function.
#[inline]
pub fn srgb_to_linear(v: f64) -> f64 {
    if v <= 0.04045 {
        v / 12.92
    } else {
        ((v + 0.055) / 1.055).powf(2.4)
    }
}

/// Inverse of [`srgb_to_linear`].
#[inline]
pub fn linear_to_srgb(v: f64) -> f64 {
    if v <= 0.0031308 {
        v * 12.92
    } else {
        1.055 * v.powf(1.0 / 2.4) - 0.055
    }
}

#[inline]
fn lab_f(t: f64) -> f64 {
    if t > DELTA * DELTA * DELTA {
        t.cbrt()
    } else {
        t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
    }
}

#[inline]
fn lab_f_inv(t: f64) -> f64 {
    if t > DELTA {
        t * t * t
    } else {
        3.0 * DELTA * DELTA * (t - 4.0 / 29.0)
    }
}

fn mat_mul(m: &[[f64; 3]; 3], v: [f64; 3]) -> [f64; 3] {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

pub fn linear_to_lab(c: LinearRgb) -> LabColor {
    let [x, y, z] = mat_mul(&RGB_TO_XYZ, c.to_array());
    let fx = lab_f(x / WHITE_X);
    let fy = lab_f(y / WHITE_Y);
    let fz = lab_f(z / WHITE_Z);
    LabColor::new(116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz))
}

/// Lab to linear RGB without any gamut handling.
pub fn lab_to_linear(c: LabColor) -> LinearRgb {
    let fy = (c.l + 16.0) / 116.0;
    let fx = fy + c.a / 500.0;
    let fz = fy - c.b / 200.0;
    let xyz = [
        WHITE_X * lab_f_inv(fx),
        WHITE_Y * lab_f_inv(fy),
        WHITE_Z * lab_f_inv(fz),
    ];
    LinearRgb::from_array(mat_mul(&XYZ_TO_RGB, xyz))
}

pub fn srgb_to_lab(c: SrgbColor) -> LabColor {
    linear_to_lab(c.to_linear())
}

/// Result of converting a Lab color back to display sRGB.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GamutMapped {
    pub color: SrgbColor,
    /// Set when at least one channel fell outside `[0, 1]` and was clamped.
    pub clipped: bool,
}

pub fn lab_to_srgb(c: LabColor) -> GamutMapped {
    // The 7-digit matrix maps Lab white to within ~2e-7 of (1, 1, 1).
    const EPS: f64 = 1e-6;
    let lin = lab_to_linear(c).to_array();
    let mut clipped = false;
    let mut out = [0.0; 3];
    for (o, v) in out.iter_mut().zip(lin) {
        if !(-EPS..=1.0 + EPS).contains(&v) || v.is_nan() {
            clipped = true;
        }
        let v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
        *o = linear_to_srgb(v);
    }
    GamutMapped {
        color: SrgbColor::from_array(out),
        clipped,
    }
}

/// CIE76 color difference: Euclidean distance in Lab.
pub fn delta_e(x: LabColor, y: LabColor) -> f64 {
    let dl = y.l - x.l;
    let da = y.a - x.a;
    let db = y.b - x.b;
    (dl * dl + da * da + db * db).sqrt()
}

/// Perceptibility of a CIE76 difference. Upper edges are inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PerceptibilityBand {
    /// ΔE ≤ 1
    NotPerceptible,
    /// 1 < ΔE ≤ 2
    CloseObservation,
    /// 2 < ΔE ≤ 10
    AtAGlance,
    /// 10 < ΔE ≤ 50
    Noticeable,
    /// 50 < ΔE ≤ 99
    Strong,
    /// ΔE > 99
    Opposite,
}

impl PerceptibilityBand {
    pub const EDGES: [f64; 5] = [1.0, 2.0, 10.0, 50.0, 99.0];

    pub fn description(self) -> &'static str {
        match self {
            PerceptibilityBand::NotPerceptible => "not perceptible",
            PerceptibilityBand::CloseObservation => "perceptible through close observation",
            PerceptibilityBand::AtAGlance => "perceptible at a glance",
            PerceptibilityBand::Noticeable => "noticeably different colors",
            PerceptibilityBand::Strong => "strong color difference",
            PerceptibilityBand::Opposite => "completely different",
        }
    }
}

impl fmt::Display for PerceptibilityBand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.description())
    }
}

pub fn delta_e_band(de: f64) -> PerceptibilityBand {
    use PerceptibilityBand::*;
    let [e1, e2, e3, e4, e5] = PerceptibilityBand::EDGES;
    if de <= e1 {
        NotPerceptible
    } else if de <= e2 {
        CloseObservation
    } else if de <= e3 {
        AtAGlance
    } else if de <= e4 {
        Noticeable
    } else if de <= e5 {
        Strong
    } else {
        Opposite
    }
}

/// Individual Typology Angle in degrees, in `(-180, 180]`.
///
/// Uses the two-argument arctangent of `(L* - 50, b*)`, so `b* = 0` gives
/// ±90° instead of a division fault. Independent of `a*`.
pub fn ita_degrees(c: LabColor) -> f64 {
    let deg = (c.l - 50.0).atan2(c.b).to_degrees();
    if deg <= -180.0 {
        180.0
    } else {
        deg
    }
}

/// ITA skin-tone class; `I` is the lightest, `VI` the darkest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ItaClass {
    I,
    II,
    III,
    IV,
    V,
    VI,
}

impl ItaClass {
    pub const ALL: [ItaClass; 6] = [
        ItaClass::I,
        ItaClass::II,
        ItaClass::III,
        ItaClass::IV,
        ItaClass::V,
        ItaClass::VI,
    ];

    /// Lower ITA bounds of classes I..V; class VI is everything below the last.
    pub const THRESHOLDS: [f64; 5] = [55.0, 41.0, 28.0, 10.0, -30.0];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<ItaClass> {
        ItaClass::ALL.get(i).copied()
    }

    pub fn label(self) -> &'static str {
        match self {
            ItaClass::I => "I",
            ItaClass::II => "II",
            ItaClass::III => "III",
            ItaClass::IV => "IV",
            ItaClass::V => "V",
            ItaClass::VI => "VI",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ItaClass::I => "very light",
            ItaClass::II => "light",
            ItaClass::III => "intermediate",
            ItaClass::IV => "tan",
            ItaClass::V => "brown",
            ItaClass::VI => "dark",
        }
    }
}

impl fmt::Display for ItaClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ItaClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ItaClass::ALL
            .into_iter()
            .find(|c| c.label().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown ITA class {s:?}"))
    }
}

/// Which side of a shared class edge an exact threshold value falls on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryRule {
    /// `41 < ITA <= 55` is class II: edges go to the darker class.
    #[default]
    DarkerClass,
    /// `41 <= ITA < 55` is class II: edges go to the lighter class.
    LighterClass,
}

pub fn ita_class(deg: f64) -> ItaClass {
    ita_class_with(deg, BoundaryRule::DarkerClass)
}

pub fn ita_class_with(deg: f64, rule: BoundaryRule) -> ItaClass {
    let above = |t: f64| match rule {
        BoundaryRule::DarkerClass => deg > t,
        BoundaryRule::LighterClass => deg >= t,
    };
    ItaClass::THRESHOLDS
        .iter()
        .position(|&t| above(t))
        .and_then(ItaClass::from_index)
        .unwrap_or(ItaClass::VI)
}
