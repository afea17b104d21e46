use proptest::prelude::*;
use tonebench_core::colorimetry::{
    delta_e, delta_e_band, ita_class, ita_degrees, lab_to_srgb, srgb_to_lab, ItaClass, LabColor, PerceptibilityBand,
    SrgbColor,
};

/// Second implementation from the CIE definitions: the RGB→XYZ matrix is
/// derived from the sRGB primaries and D65 chromaticities, and the Lab
/// companding uses the ε/κ form instead of the cube-root/δ form.
mod oracle {
    fn xyz_of(x: f64, y: f64) -> [f64; 3] {
        [x / y, 1.0, (1.0 - x - y) / y]
    }

    fn solve3(m: [[f64; 3]; 3], v: [f64; 3]) -> [f64; 3] {
        let det = |m: [[f64; 3]; 3]| {
            m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
        };
        let d = det(m);
        let mut out = [0.0; 3];
        for (c, o) in out.iter_mut().enumerate() {
            let mut mc = m;
            for r in 0..3 {
                mc[r][c] = v[r];
            }
            *o = det(mc) / d;
        }
        out
    }

    pub fn matrix() -> [[f64; 3]; 3] {
        let prim = [xyz_of(0.64, 0.33), xyz_of(0.30, 0.60), xyz_of(0.15, 0.06)];
        let p = [
            [prim[0][0], prim[1][0], prim[2][0]],
            [prim[0][1], prim[1][1], prim[2][1]],
            [prim[0][2], prim[1][2], prim[2][2]],
        ];
        let s = solve3(p, xyz_of(0.3127, 0.3290));
        let mut m = p;
        for row in &mut m {
            for c in 0..3 {
                row[c] *= s[c];
            }
        }
        m
    }

    pub fn lab(rgb: [f64; 3]) -> [f64; 3] {
        let lin = rgb.map(|c| if c <= 0.04045 { c / 12.92 } else { ((c + 0.055) / 1.055).powf(2.4) });
        let m = matrix();
        let white = [0.95047, 1.0, 1.08883];
        let eps = 216.0 / 24389.0;
        let kappa = 24389.0 / 27.0;
        let f: Vec<f64> = (0..3)
            .map(|i| {
                let t = (m[i][0] * lin[0] + m[i][1] * lin[1] + m[i][2] * lin[2]) / white[i];
                if t > eps {
                    t.cbrt()
                } else {
                    (kappa * t + 16.0) / 116.0
                }
            })
            .collect();
        [116.0 * f[1] - 16.0, 500.0 * (f[0] - f[1]), 200.0 * (f[1] - f[2])]
    }
}

fn lab_close(got: LabColor, want: [f64; 3], tol: f64) -> bool {
    (got.l - want[0]).abs() <= tol && (got.a - want[1]).abs() <= tol && (got.b - want[2]).abs() <= tol
}

#[test]
fn oracle_agrees_with_published_table() {
    // Reference sRGB (8-bit) → CIELAB D65 values as tabulated by common
    // colorimetry references, to three decimals.
    let table = [
        ([255u8, 0, 0], [53.241, 80.092, 67.203]),
        ([0, 255, 0], [87.735, -86.183, 83.179]),
        ([0, 0, 255], [32.297, 79.188, -107.860]),
        ([255, 255, 255], [100.0, 0.0, 0.0]),
    ];
    for (rgb, lab) in table {
        let o = oracle::lab(rgb.map(|v| f64::from(v) / 255.0));
        for k in 0..3 {
            assert!((o[k] - lab[k]).abs() < 0.02, "oracle {rgb:?}: {o:?} vs {lab:?}");
        }
        assert!(lab_close(srgb_to_lab(SrgbColor::from_u8(rgb)), lab, 0.02), "{rgb:?}");
    }
}

#[test]
fn skin_sample_matches_oracle() {
    let c = SrgbColor::from_u8([118, 86, 66]);
    let want = oracle::lab(c.to_array());
    let got = srgb_to_lab(c);
    // The derived matrix and the rounded standard matrix differ in the fifth
    // digit, which moves a* and b* by a few thousandths.
    assert!(lab_close(got, want, 1e-2), "{got:?} vs {want:?}");
    assert!(lab_close(got, [39.413, 10.455, 16.825], 1e-2), "{got:?}");
}

#[test]
fn oracle_agrees_on_a_coarse_grid() {
    let steps = [0u8, 9, 40, 97, 128, 200, 255];
    for r in steps {
        for g in steps {
            for b in steps {
                let c = SrgbColor::from_u8([r, g, b]);
                let want = oracle::lab(c.to_array());
                assert!(lab_close(srgb_to_lab(c), want, 2e-2), "{:?}", [r, g, b]);
            }
        }
    }
}

#[test]
fn round_trip_over_32_cubed_grid() {
    let tol = 0.5 / 255.0;
    let mut worst = 0.0f64;
    for r in 0..32 {
        for g in 0..32 {
            for b in 0..32 {
                let c = SrgbColor::new(f64::from(r) / 31.0, f64::from(g) / 31.0, f64::from(b) / 31.0);
                let back = lab_to_srgb(srgb_to_lab(c));
                assert!(!back.clipped, "{c:?}");
                for (x, y) in back.color.to_array().iter().zip(c.to_array()) {
                    worst = worst.max((x - y).abs());
                }
            }
        }
    }
    assert!(worst <= tol, "worst channel error {worst}");
}

#[test]
fn band_edges_are_exact() {
    let bands = [
        PerceptibilityBand::NotPerceptible,
        PerceptibilityBand::CloseObservation,
        PerceptibilityBand::AtAGlance,
        PerceptibilityBand::Noticeable,
        PerceptibilityBand::Strong,
        PerceptibilityBand::Opposite,
    ];
    for (i, e) in PerceptibilityBand::EDGES.into_iter().enumerate() {
        assert_eq!(delta_e_band(e - 1e-9), bands[i]);
        assert_eq!(delta_e_band(e), bands[i]);
        assert_eq!(delta_e_band(e + 1e-9), bands[i + 1]);
    }
    assert_eq!(delta_e_band(0.0), bands[0]);
    assert_eq!(delta_e_band(100.0), bands[5]);
}

#[test]
fn class_thresholds_are_exact() {
    let t = [55.0, 41.0, 28.0, 10.0, -30.0];
    assert_eq!(ItaClass::THRESHOLDS, t);
    for (i, e) in t.into_iter().enumerate() {
        assert_eq!(ita_class(e + 1e-9), ItaClass::ALL[i]);
        assert_eq!(ita_class(e), ItaClass::ALL[i + 1]);
        assert_eq!(ita_class(e - 1e-9), ItaClass::ALL[i + 1]);
    }
}

fn lab_strategy() -> impl Strategy<Value = LabColor> {
    (0.0..100.0f64, -100.0..100.0f64, -100.0..100.0f64).prop_map(|(l, a, b)| LabColor::new(l, a, b))
}

proptest! {
    #[test]
    fn delta_e_is_a_metric(x in lab_strategy(), y in lab_strategy(), z in lab_strategy()) {
        prop_assert!(delta_e(x, y) >= 0.0);
        prop_assert_eq!(delta_e(x, y), delta_e(y, x));
        prop_assert_eq!(delta_e(x, x), 0.0);
        if x != y {
            prop_assert!(delta_e(x, y) > 0.0);
        }
        prop_assert!(delta_e(x, z) <= delta_e(x, y) + delta_e(y, z) + 1e-9);
    }

    #[test]
    fn ita_ignores_a(l in 0.0..100.0f64, a1 in -100.0..100.0f64, a2 in -100.0..100.0f64, b in -100.0..100.0f64) {
        prop_assert_eq!(ita_degrees(LabColor::new(l, a1, b)), ita_degrees(LabColor::new(l, a2, b)));
    }

    #[test]
    fn lighter_never_means_darker_class(l in 0.0..100.0f64, dl in 0.0..50.0f64, b in 0.01..80.0f64) {
        let lo = ita_class(ita_degrees(LabColor::new(l, 10.0, b)));
        let hi = ita_class(ita_degrees(LabColor::new(l + dl, 10.0, b)));
        prop_assert!(hi <= lo, "{:?} then {:?}", lo, hi);
    }

    #[test]
    fn lab_stays_in_range_for_in_gamut_srgb(r in 0.0..=1.0f64, g in 0.0..=1.0f64, b in 0.0..=1.0f64) {
        let lab = srgb_to_lab(SrgbColor::new(r, g, b));
        prop_assert!(lab.l >= -1e-9 && lab.l <= 100.0 + 1e-6);
    }
}
