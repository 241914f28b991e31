//! Flow dynamics correction: polar decomposition, power normalization of
//! the magnitude, optional dominant-motion subtraction, and recomposition.
//!
//! The angle channel is never touched, so motion direction survives the
//! whole pipeline bit-for-bit. Magnitude is normalized by its per-field
//! maximum before power normalization so that fractional exponents stay
//! well-defined and the strength parameter behaves the same regardless of
//! resolution or absolute speed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{FlowField, FlowSource, PolarFlow};

/// Histogram resolution used to locate the dominant magnitude.
pub const DOMINANT_BINS: usize = 64;

/// What to do with the normalization factor on recomposition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Rescale {
    /// Multiply back by the per-field maximum captured at decomposition.
    #[default]
    RestoreScale,
    /// Leave magnitudes in `[0, 1]`.
    KeepNormalized,
}

/// Parameters of one correction pass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrectionParams {
    /// Power-normalization strength; 1 disables PN.
    pub gamma: f64,
    pub subtract_dominant: bool,
    pub rescale: Rescale,
}

impl Default for CorrectionParams {
    fn default() -> Self {
        CorrectionParams {
            gamma: 1.0,
            subtract_dominant: false,
            rescale: Rescale::RestoreScale,
        }
    }
}

impl CorrectionParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return Err(Error::InvalidGamma(self.gamma));
        }
        Ok(())
    }
}

/// Scalar power normalization on a normalized magnitude.
///
/// The sign/abs pair mirrors the element-wise definition; on the
/// nonnegative magnitudes produced by [`decompose`] both are identities.
#[inline]
pub fn pn_scalar(m: f64, gamma: f64) -> f64 {
    let s = if m < 0.0 { -1.0 } else { 1.0 };
    s * (1.0 - (1.0 - m.abs()).powf(gamma))
}

/// Split a flow field into normalized magnitude and angle.
///
/// `m = sqrt(u^2 + v^2) / scale` with `scale` the per-field maximum raw
/// magnitude (1 for an identically zero field); `phi = atan2(u, v)`, the
/// quadrant-aware form of the magnitude/angle convention used throughout,
/// with zero-magnitude pixels assigned `phi = 0`.
pub fn decompose(field: &FlowField) -> Result<PolarFlow> {
    field.check_finite()?;
    let n = field.len();
    let mut raw = vec![0.0f64; n];
    let mut max_raw = 0.0f64;
    for i in 0..n {
        let r = field.magnitude_at(i);
        raw[i] = r;
        if r > max_raw {
            max_raw = r;
        }
    }
    let scale = if max_raw > 0.0 { max_raw } else { 1.0 };
    let mut m = vec![0.0f32; n];
    let mut phi = vec![0.0f32; n];
    for i in 0..n {
        m[i] = (raw[i] / scale) as f32;
        if raw[i] > 0.0 {
            let a = (field.u[i] as f64).atan2(field.v[i] as f64);
            // atan2 can return -pi for (-0.0, negative v); fold onto +pi.
            let a = if a <= -std::f64::consts::PI {
                std::f64::consts::PI
            } else {
                a
            };
            phi[i] = a as f32;
        }
    }
    PolarFlow::new(field.width, field.height, m, phi, scale as f32)
}

/// Apply power normalization `m -> 1 - (1 - m)^gamma` element-wise.
pub fn power_normalize(polar: &PolarFlow, gamma: f64) -> Result<PolarFlow> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::InvalidGamma(gamma));
    }
    let m = polar
        .m
        .iter()
        .map(|&x| pn_scalar(x as f64, gamma).clamp(0.0, 1.0) as f32)
        .collect();
    PolarFlow::new(polar.width, polar.height, m, polar.phi.clone(), polar.scale)
}

/// Most frequent normalized magnitude, located as the center of the
/// fullest bin of a [`DOMINANT_BINS`]-bin histogram (ties go to the
/// lower bin).
pub fn dominant_magnitude(polar: &PolarFlow) -> f32 {
    let mut counts = [0usize; DOMINANT_BINS];
    for &x in &polar.m {
        let idx = ((x as f64 * DOMINANT_BINS as f64) as usize).min(DOMINANT_BINS - 1);
        counts[idx] += 1;
    }
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    ((best as f64 + 0.5) / DOMINANT_BINS as f64) as f32
}

/// Subtract the dominant magnitude from every pixel, clamping to `[0, 1]`.
/// Angle and scale are unchanged.
pub fn subtract_dominant(polar: &PolarFlow) -> PolarFlow {
    let dom = dominant_magnitude(polar);
    let m = polar.m.iter().map(|&x| (x - dom).clamp(0.0, 1.0)).collect();
    PolarFlow {
        width: polar.width,
        height: polar.height,
        m,
        phi: polar.phi.clone(),
        scale: polar.scale,
    }
}

/// Recover displacement maps `u = m sin(phi) s`, `v = m cos(phi) s`.
pub fn recompose(polar: &PolarFlow, rescale: Rescale) -> FlowField {
    let s = match rescale {
        Rescale::RestoreScale => polar.scale as f64,
        Rescale::KeepNormalized => 1.0,
    };
    let n = polar.len();
    let mut u = vec![0.0f32; n];
    let mut v = vec![0.0f32; n];
    for i in 0..n {
        let m = polar.m[i] as f64;
        let phi = polar.phi[i] as f64;
        u[i] = (m * phi.sin() * s) as f32;
        v[i] = (m * phi.cos() * s) as f32;
    }
    FlowField {
        width: polar.width,
        height: polar.height,
        u,
        v,
        stride: 1,
        source: FlowSource::Corrected,
    }
}

/// Full correction pass: decompose, optionally subtract the dominant
/// magnitude, power-normalize, recompose. Stride metadata is preserved.
pub fn correct(field: &FlowField, params: &CorrectionParams) -> Result<FlowField> {
    params.validate()?;
    let polar = decompose(field)?;
    let polar = if params.subtract_dominant {
        subtract_dominant(&polar)
    } else {
        polar
    };
    let polar = power_normalize(&polar, params.gamma)?;
    let mut out = recompose(&polar, params.rescale);
    out.stride = field.stride;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn field(u: Vec<f32>, v: Vec<f32>) -> FlowField {
        let n = u.len();
        FlowField::new(n, 1, u, v, 1, FlowSource::Estimated).unwrap()
    }

    // Scalar brute-force oracle for the polar split, kept independent of
    // the implementation path.
    fn polar_oracle(u: f64, v: f64) -> (f64, f64) {
        let m = (u * u + v * v).sqrt();
        let phi = if m == 0.0 { 0.0 } else { u.atan2(v) };
        (m, phi)
    }

    #[test]
    fn decompose_3_4_pixel() {
        let p = decompose(&field(vec![3.0], vec![4.0])).unwrap();
        assert_eq!(p.scale, 5.0);
        assert_eq!(p.m[0], 1.0);
        let (m, phi) = polar_oracle(3.0, 4.0);
        assert!((m - 5.0).abs() < 1e-12);
        assert!((p.phi[0] as f64 - phi).abs() < 1e-6);
        assert!((p.phi[0] as f64 - 0.6435).abs() < 1e-4);
    }

    #[test]
    fn decompose_zero_field() {
        let p = decompose(&field(vec![0.0, 0.0], vec![0.0, 0.0])).unwrap();
        assert_eq!(p.scale, 1.0);
        assert!(p.m.iter().all(|&x| x == 0.0));
        assert!(p.phi.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn decompose_quadrants_match_oracle() {
        // All four sign combinations plus the axis cases.
        let cases = [
            (1.0, 1.0),
            (1.0, -1.0),
            (-1.0, 1.0),
            (-1.0, -1.0),
            (0.0, -2.0),
            (0.0, 2.0),
            (2.0, 0.0),
            (-2.0, 0.0),
        ];
        for &(u, v) in &cases {
            let p = decompose(&field(vec![u as f32], vec![v as f32])).unwrap();
            let (m, phi) = polar_oracle(u, v);
            assert!((p.m[0] as f64 * p.scale as f64 - m).abs() < 1e-6, "({u},{v})");
            assert!((p.phi[0] as f64 - phi).abs() < 1e-6, "({u},{v})");
        }
        // The (0, -2) case lands exactly on +pi.
        let p = decompose(&field(vec![0.0], vec![-2.0])).unwrap();
        assert!((p.phi[0] as f64 - PI).abs() < 1e-6);
        assert!((p.m[0] as f64 * p.scale as f64 - 2.0).abs() < 1e-6);
    }

    #[test]
    fn pn_gamma_one_is_identity() {
        let p = PolarFlow::new(4, 1, vec![0.0, 0.25, 0.5, 1.0], vec![0.0; 4], 2.0).unwrap();
        let out = power_normalize(&p, 1.0).unwrap();
        assert_eq!(out.m, p.m);
    }

    #[test]
    fn pn_fixed_points_and_closed_forms() {
        for gamma in [0.1, 0.5, 1.0, 2.0, 5.0, 9.7] {
            assert_eq!(pn_scalar(0.0, gamma), 0.0);
            assert_eq!(pn_scalar(1.0, gamma), 1.0);
        }
        assert!((pn_scalar(0.5, 2.0) - 0.75).abs() < 1e-12);
        assert!((pn_scalar(0.5, 0.5) - 0.292_893_218_813_452_4).abs() < 1e-12);
        assert!((pn_scalar(0.1, 5.0) - 0.40951).abs() < 1e-10);
        assert!((pn_scalar(0.1, 0.1) - 0.010_480_741_793_785_553).abs() < 1e-12);
    }

    #[test]
    fn pn_rejects_nonpositive_gamma() {
        let p = PolarFlow::new(1, 1, vec![0.5], vec![0.0], 1.0).unwrap();
        assert!(matches!(
            power_normalize(&p, 0.0),
            Err(Error::InvalidGamma(_))
        ));
        assert!(matches!(
            power_normalize(&p, -2.0),
            Err(Error::InvalidGamma(_))
        ));
    }

    #[test]
    fn dominant_subtraction_on_pan_leaves_quantization_residue_only() {
        // Constant magnitude everywhere: the dominant bin holds the whole
        // field, so subtraction leaves at most half a histogram bin.
        let p = decompose(&field(vec![0.6; 50], vec![0.8; 50])).unwrap();
        assert!(p.m.iter().all(|&x| x == 1.0));
        let out = subtract_dominant(&p);
        let half_bin = 0.5 / DOMINANT_BINS as f32;
        assert!(out.m.iter().all(|&x| x <= half_bin + 1e-6), "max {:?}", out.m[0]);
    }

    #[test]
    fn dominant_subtraction_removes_background_mode() {
        // 90% background at m = 0.2, 10% foreground at m = 0.9.
        let mut m = vec![0.2f32; 90];
        m.extend(vec![0.9f32; 10]);
        let p = PolarFlow::new(100, 1, m, vec![0.0; 100], 1.0).unwrap();

        // Histogram-mode oracle.
        let mut hist = vec![0usize; DOMINANT_BINS];
        for &x in &p.m {
            hist[((x as f64 * 64.0) as usize).min(63)] += 1;
        }
        let mode = hist
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
            .unwrap()
            .0;
        let dom_oracle = (mode as f32 + 0.5) / 64.0;
        assert_eq!(dominant_magnitude(&p), dom_oracle);

        let out = subtract_dominant(&p);
        let half_bin = 0.5 / DOMINANT_BINS as f32;
        for i in 0..90 {
            assert!(out.m[i] <= half_bin + 1e-6);
        }
        for i in 90..100 {
            assert!((out.m[i] - 0.7).abs() <= half_bin + 1e-6);
        }
        // Angles and scale untouched.
        assert_eq!(out.phi, p.phi);
        assert_eq!(out.scale, p.scale);
    }

    #[test]
    fn dominant_subtraction_keeps_zero_field() {
        let p = decompose(&field(vec![0.0; 8], vec![0.0; 8])).unwrap();
        let out = subtract_dominant(&p);
        assert_eq!(out.m, p.m);
        assert_eq!(out.phi, p.phi);
    }

    #[test]
    fn recompose_unit_vertical() {
        let p = PolarFlow::new(1, 1, vec![1.0], vec![std::f32::consts::FRAC_PI_2], 2.0).unwrap();
        let f = recompose(&p, Rescale::RestoreScale);
        assert!((f.u[0] - 2.0).abs() < 1e-6);
        assert!(f.v[0].abs() < 1e-6);
        assert_eq!(f.source, FlowSource::Corrected);
    }

    #[test]
    fn recompose_zero_polar() {
        let p = PolarFlow::new(2, 2, vec![0.0; 4], vec![0.0; 4], 1.0).unwrap();
        let f = recompose(&p, Rescale::RestoreScale);
        assert!(f.u.iter().all(|&x| x == 0.0));
        assert!(f.v.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn correct_gamma_one_is_identity_within_tolerance() {
        let u: Vec<f32> = (0..64).map(|i| ((i * 37 % 19) as f32 - 9.0) * 0.7).collect();
        let v: Vec<f32> = (0..64).map(|i| ((i * 53 % 23) as f32 - 11.0) * 0.4).collect();
        let f = field(u.clone(), v.clone());
        let out = correct(&f, &CorrectionParams::default()).unwrap();
        for i in 0..64 {
            assert!((out.u[i] - u[i]).abs() < 1e-5);
            assert!((out.v[i] - v[i]).abs() < 1e-5);
        }
        assert_eq!(out.stride, f.stride);
    }

    #[test]
    fn correct_preserves_direction_for_any_gamma() {
        let u = vec![1.0, -2.0, 0.5, 3.0];
        let v = vec![-1.0, 0.25, -4.0, 2.0];
        let f = field(u.clone(), v.clone());
        for gamma in [0.1, 0.5, 2.0, 5.0] {
            let params = CorrectionParams {
                gamma,
                ..Default::default()
            };
            let out = correct(&f, &params).unwrap();
            for i in 0..4 {
                let mag = (out.u[i] as f64).hypot(out.v[i] as f64);
                if mag > 1e-9 {
                    let before = (u[i] as f64).atan2(v[i] as f64);
                    let after = (out.u[i] as f64).atan2(out.v[i] as f64);
                    assert!((before - after).abs() < 1e-6, "gamma {gamma} pixel {i}");
                }
            }
        }
    }

    #[test]
    fn correct_boosts_weak_relative_to_strong() {
        // Raw magnitudes 0.5 (weak) and 5.0 (strong): gamma = 5 must raise
        // the weak/strong ratio.
        let f = field(vec![0.5, 5.0], vec![0.0, 0.0]);
        let params = CorrectionParams {
            gamma: 5.0,
            ..Default::default()
        };
        let out = correct(&f, &params).unwrap();
        let ratio_in = 0.5 / 5.0;
        let ratio_out = (out.u[0] as f64).hypot(out.v[0] as f64)
            / (out.u[1] as f64).hypot(out.v[1] as f64);
        assert!(ratio_out > ratio_in, "ratio {ratio_out} vs {ratio_in}");
    }

    #[test]
    fn pipeline_trace_subtracts_before_pn() {
        // Composition order check: with both steps enabled the result
        // equals applying the steps by hand in subtract-then-PN order,
        // and differs from the PN-then-subtract order.
        let mut m = vec![0.3f32; 30];
        m.extend(vec![0.9f32; 10]);
        let phi = vec![0.5f32; 40];
        let polar = PolarFlow::new(40, 1, m, phi, 2.0).unwrap();
        let f = recompose(&polar, Rescale::RestoreScale);
        let params = CorrectionParams {
            gamma: 2.0,
            subtract_dominant: true,
            rescale: Rescale::KeepNormalized,
        };
        let got = correct(&f, &params).unwrap();

        let polar2 = decompose(&f).unwrap();
        let expected = power_normalize(&subtract_dominant(&polar2), 2.0).unwrap();
        let swapped = subtract_dominant(&power_normalize(&polar2, 2.0).unwrap());
        let expected_f = recompose(&expected, Rescale::KeepNormalized);
        let swapped_f = recompose(&swapped, Rescale::KeepNormalized);
        assert_eq!(got.u, expected_f.u);
        assert_eq!(got.v, expected_f.v);
        assert_ne!(got.u, swapped_f.u);
    }

    proptest! {
        #[test]
        fn pn_stays_in_unit_interval(m in 0.0f64..=1.0, gamma in 1e-3f64..10.0) {
            let out = pn_scalar(m, gamma);
            prop_assert!((0.0..=1.0).contains(&out));
        }

        #[test]
        fn pn_is_monotone(m1 in 0.0f64..=1.0, m2 in 0.0f64..=1.0, gamma in 1e-3f64..10.0) {
            let (lo, hi) = if m1 <= m2 { (m1, m2) } else { (m2, m1) };
            prop_assert!(pn_scalar(lo, gamma) <= pn_scalar(hi, gamma) + 1e-12);
        }

        #[test]
        fn pn_regimes(m in 0.0f64..=1.0, gamma in 1e-3f64..10.0) {
            let out = pn_scalar(m, gamma);
            if gamma > 1.0 {
                prop_assert!(out >= m - 1e-12);
            } else if gamma < 1.0 {
                prop_assert!(out <= m + 1e-12);
            }
        }

        #[test]
        fn roundtrip_identity_on_random_fields(
            seed_u in proptest::collection::vec(-10.0f32..10.0, 1..64),
        ) {
            let n = seed_u.len();
            let v: Vec<f32> = seed_u.iter().map(|x| x * 0.7 - 1.0).collect();
            let f = FlowField::new(n, 1, seed_u.clone(), v, 1, FlowSource::Estimated).unwrap();
            let out = correct(&f, &CorrectionParams::default()).unwrap();
            for i in 0..n {
                prop_assert!((out.u[i] - f.u[i]).abs() < 1e-5);
                prop_assert!((out.v[i] - f.v[i]).abs() < 1e-5);
            }
        }
    }
}
