//! Closed-form asymptotic predictions for joint moments of characteristic
//! polynomials and exponential linear statistics of the stationary Hermitian
//! OU process: single-point moments, the assembled multi-point space-time
//! formula, the single-time constant-term breakdown, and the exact finite-N
//! reference moment for Haar unitary matrices.

use crate::error::{Error, Result};
use crate::specfun::{log_barnes_g, log_barnes_g_complex, log_gamma_complex};
use crate::transforms::{
    arcsine_mean, charge_cross_covariance, covariance, covariance_closed, evaluate,
    semicircle_mean, v_transform, Charge, FunctionSpec, SingularKind,
};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Exponent in the default mesoscopic separation threshold `N^{-1+0.15}`.
pub const SEPARATION_EXPONENT: f64 = -1.0 + 0.15;

/// Single-time constant-term breakdown.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GammaBreakdown {
    /// Barnes G-function ratios, one per singularity.
    pub g1: f64,
    /// Per-singularity center-dependent quadratic terms.
    pub g2: f64,
    /// Smooth-function self energy, `C(f, f) / 2`.
    pub g3: f64,
    /// Smooth-vs-singularity cross terms.
    pub g4: f64,
    /// gamma-gamma and gamma-beta cross pairs.
    pub g5: f64,
    /// beta-beta cross pairs.
    pub g6: f64,
}

impl GammaBreakdown {
    pub fn total(&self) -> f64 {
        self.g1 + self.g2 + self.g3 + self.g4 + self.g5 + self.g6
    }
}

/// Decomposed asymptotic prediction of a log-moment: the value at matrix size
/// `N` is `N * order_n_term + log N * log_n_term + constant_term`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FhPrediction {
    pub order_n_term: f64,
    pub log_n_term: f64,
    pub constant_term: f64,
    /// Present when the single-time breakdown applies.
    pub gamma_breakdown: Option<GammaBreakdown>,
    /// The cross-term half, `C_ring / 2`.
    pub cross_term_c_ring: f64,
    /// Per-singularity N-free constants (G-ratio plus quadratic center term).
    pub per_singularity_constants: Vec<f64>,
    /// Set when singular points are closer than the mesoscopic threshold.
    pub separation_warning: Option<String>,
}

impl FhPrediction {
    /// Assembled prediction at matrix size `n`.
    pub fn total(&self, n: u32) -> f64 {
        let nf = n as f64;
        nf * self.order_n_term + nf.ln() * self.log_n_term + self.constant_term
    }
}

/// Log-moment of `|det(H - E)|^gamma e^{beta Tr arg^E(H)}` for a single
/// space-time charge under the stationary process (time drops out):
///
/// `log(N^{(g^2+b^2)/4} G(1+g/2+ib/2) G(1+g/2-ib/2) / G(1+g))
///  + (g^2/8) log(4-E^2) + (b g/4)(pi - E - 2 arccos(E/2))
///  + (b^2/8)(1 - 2 sqrt(4-E^2) + 3 log(4-E^2))`.
pub fn single_point_log_moment(gamma: f64, beta: f64, e: f64, n: u32) -> Result<f64> {
    let c = single_point_constant(gamma, beta, e)?;
    Ok((n as f64).ln() * (gamma * gamma + beta * beta) / 4.0 + c)
}

/// The N-free part of [`single_point_log_moment`].
pub fn single_point_constant(gamma: f64, beta: f64, e: f64) -> Result<f64> {
    if gamma < 0.0 {
        return Err(Error::Domain(format!("gamma must be >= 0, got {gamma}")));
    }
    if !(e > -2.0 && e < 2.0) {
        return Err(Error::Domain(format!("center must lie in (-2, 2), got {e}")));
    }
    if gamma == 0.0 && beta == 0.0 {
        return Ok(0.0);
    }
    let g_ratio = log_barnes_g_complex(Complex64::new(gamma / 2.0, beta / 2.0))?.re * 2.0
        - log_barnes_g(gamma)?;
    let w = 4.0 - e * e;
    Ok(g_ratio
        + gamma * gamma / 8.0 * w.ln()
        + beta * gamma / 4.0 * (PI - e - 2.0 * (e / 2.0).acos())
        + beta * beta / 8.0 * (1.0 - 2.0 * w.sqrt() + 3.0 * w.ln()))
}

/// Semicircle mass of a single charge: coefficient of `N` contributed by
/// `gamma log^E + beta arg^E`.
pub fn singular_semicircle_mass(gamma: f64, beta: f64, e: f64) -> f64 {
    let log_mass = (e * e - 2.0) / 4.0;
    let arg_mass = (PI - e) / 2.0 + e * (4.0 - e * e).sqrt() / 4.0 - (e / 2.0).acos();
    gamma * log_mass + beta * arg_mass
}

/// Full prediction for the joint log-moment of a charge collection:
/// order-N mass, `log N` coefficient, per-singularity constants and half the
/// diagonal-free covariance as the cross term.
pub fn predict_joint(charge: &Charge, n: u32) -> Result<FhPrediction> {
    charge.validate()?;
    if n == 0 {
        return Err(Error::Domain("matrix size must be positive".into()));
    }
    let mut order_n = 0.0;
    let mut log_n = 0.0;
    let mut per_sing = Vec::with_capacity(charge.singularities.len());
    for s in &charge.singularities {
        order_n += singular_semicircle_mass(s.gamma, s.beta, s.e);
        log_n += (s.gamma * s.gamma + s.beta * s.beta) / 4.0;
        per_sing.push(single_point_constant(s.gamma, s.beta, s.e)?);
    }
    for c in &charge.smooth {
        order_n += semicircle_mean(&c.f)?;
    }
    let cross = 0.5 * charge_cross_covariance(charge)?;
    let constant = per_sing.iter().sum::<f64>() + cross;

    let separation_warning = charge.min_separation().and_then(|d| {
        let threshold = (n as f64).powf(SEPARATION_EXPONENT);
        (d < threshold).then(|| {
            format!("singular separation {d:.3e} below mesoscopic threshold {threshold:.3e}")
        })
    });

    let gamma_breakdown = single_time_breakdown(charge).ok().flatten();

    Ok(FhPrediction {
        order_n_term: order_n,
        log_n_term: log_n,
        constant_term: constant,
        gamma_breakdown,
        cross_term_c_ring: cross,
        per_singularity_constants: per_sing,
        separation_warning,
    })
}

fn single_time_breakdown(charge: &Charge) -> Result<Option<GammaBreakdown>> {
    let times = charge.times();
    if times.len() > 1 || charge.smooth.len() > 1 {
        return Ok(None);
    }
    let f = charge.smooth.first().map(|c| &c.f);
    Ok(Some(gamma_terms_inner(&charge.singularities, f)?))
}

/// Single-time constant-term decomposition for a list of singularities plus
/// an optional smooth test function. All components are taken at one time.
pub fn gamma_terms(charge: &Charge, f: Option<&FunctionSpec>) -> Result<GammaBreakdown> {
    charge.validate()?;
    if charge.times().len() > 1 {
        return Err(Error::InvalidInput(
            "constant-term breakdown applies to single-time charges".into(),
        ));
    }
    if !charge.smooth.is_empty() {
        return Err(Error::InvalidInput(
            "pass the smooth component through the `f` argument".into(),
        ));
    }
    gamma_terms_inner(&charge.singularities, f)
}

fn gamma_terms_inner(
    sings: &[crate::transforms::Singularity],
    f: Option<&FunctionSpec>,
) -> Result<GammaBreakdown> {
    let mut out = GammaBreakdown::default();
    for s in sings {
        out.g1 += log_barnes_g_complex(Complex64::new(s.gamma / 2.0, s.beta / 2.0))?.re * 2.0
            - log_barnes_g(s.gamma)?;
        let w = 4.0 - s.e * s.e;
        out.g2 += s.gamma * s.gamma / 8.0 * w.ln()
            + s.beta * s.gamma / 4.0 * (PI - s.e - 2.0 * (s.e / 2.0).acos())
            + s.beta * s.beta / 8.0 * (1.0 - 2.0 * w.sqrt() + 3.0 * w.ln());
    }
    if let Some(f) = f {
        out.g3 = 0.5 * covariance(f, 0.0, f, 0.0)?;
        for s in sings {
            if s.gamma != 0.0 {
                out.g4 += s.gamma * (arcsine_mean(f)? / 2.0 - evaluate(f, s.e)? / 2.0);
            }
            if s.beta != 0.0 {
                // C(arg^E, f) = f^_1/4 - (sqrt(4-E^2)/2) V f(E); the weight in
                // the Hilbert-transform term is the arcsine one (the series
                // representation fixes it; see the decisions ledger note)
                let f1 = crate::transforms::cheb_coeffs(f, 1)?.coeffs[1];
                let vf = v_transform(f, 0.0, s.e)?;
                out.g4 += s.beta * (f1 / 4.0 - (4.0 - s.e * s.e).sqrt() / 2.0 * vf);
            }
        }
    }
    for j in 0..sings.len() {
        for k in (j + 1)..sings.len() {
            let (a, b) = (&sings[j], &sings[k]);
            if a.gamma != 0.0 && b.gamma != 0.0 {
                out.g5 -= a.gamma * b.gamma / 2.0 * (a.e - b.e).abs().ln();
            }
            // gamma-beta cross pairs from the equal-time closed forms of the
            // covariance; the printed corollary coefficients do not match the
            // series-defined bilinear form (see the decisions ledger)
            if a.gamma != 0.0 && b.beta != 0.0 {
                out.g5 += a.gamma
                    * b.beta
                    * covariance_closed(SingularKind::Log, SingularKind::Arg, a.e, b.e, 0.0)?;
            }
            if a.beta != 0.0 && b.gamma != 0.0 {
                out.g5 += a.beta
                    * b.gamma
                    * covariance_closed(SingularKind::Arg, SingularKind::Log, a.e, b.e, 0.0)?;
            }
            if a.beta != 0.0 && b.beta != 0.0 {
                out.g6 += a.beta
                    * b.beta
                    * covariance_closed(SingularKind::Arg, SingularKind::Arg, a.e, b.e, 0.0)?;
            }
        }
    }
    Ok(out)
}

/// Exact finite-N log-moment of `|det(1-U)|^gamma e^{beta Im log det(1-U)}`
/// over Haar unitary matrices of size N:
///
/// `log [ G(1+N) G(1+N+g) / (G(1+N+g/2+ib/2) G(1+N+g/2-ib/2))
///        * G(1+g/2+ib/2) G(1+g/2-ib/2) / G(1+g) ]`.
///
/// The large-argument combination is evaluated as an analytic second
/// difference of the asymptotic expansion, which avoids catastrophic
/// cancellation between the individual Barnes-G logs.
pub fn cue_log_moment(gamma: f64, beta: f64, n: u32) -> Result<f64> {
    if n == 0 {
        return Err(Error::Domain("matrix size must be positive".into()));
    }
    if gamma <= -1.0 || (gamma + beta.abs()) / 2.0 <= -1.0 {
        return Err(Error::Pole(format!(
            "moment undefined: need gamma > -1 and (gamma +/- beta)/2 > -1; got ({gamma}, {beta})"
        )));
    }
    if gamma == 0.0 && beta == 0.0 {
        return Ok(0.0);
    }
    let a = Complex64::new(gamma / 2.0, beta / 2.0);
    // lift the base until the asymptotic second difference applies
    let mut base = n as f64;
    let mut gamma_shift = 0.0;
    while base < 12.0 {
        // log G(1+z) = log G(1+(z+1)) - log Gamma(1+z) applied to all four
        gamma_shift -= second_difference_log_gamma(base, a);
        base += 1.0;
    }
    let big = barnes_second_difference(base, a, gamma) + gamma_shift;
    let small = 2.0 * log_barnes_g_complex(a)?.re - log_barnes_g(gamma)?;
    Ok(big + small)
}

/// `ln Gamma(1+b+gamma) - ln Gamma(1+b+a) - ln Gamma(1+b+conj a) + ln Gamma(1+b)`.
fn second_difference_log_gamma(b: f64, a: Complex64) -> f64 {
    let gamma = 2.0 * a.re;
    log_gamma_complex(Complex64::new(b + 1.0 + gamma, 0.0)).re
        - 2.0 * log_gamma_complex(Complex64::new(b + 1.0, 0.0) + a).re
        + log_gamma_complex(Complex64::new(b + 1.0, 0.0)).re
}

/// Analytic second difference `phi(b+g) - phi(b+a) - phi(b+conj a) + phi(b)`
/// of the Barnes asymptotic `phi(z) = z^2(ln z/2 - 3/4) + (z/2) ln 2pi
/// - (ln z)/12 + corrections`, expanded so no large intermediates appear.
fn barnes_second_difference(b: f64, a: Complex64, gamma: f64) -> f64 {
    let a_abs2 = a.norm_sqr(); // a conj(a) = (g^2 + b^2)/4
    let ln_b = b.ln();
    // Delta^2 [z^2 ln z] = 2 |a|^2 ln b + (b+g)^2 ln1p(g/b) - 2 Re[(b+a)^2 ln1p(a/b)]
    let t1 = 2.0 * a_abs2 * ln_b + (b + gamma).powi(2) * ln_1p_real(gamma / b)
        - 2.0 * ((Complex64::new(b, 0.0) + a).powu(2) * ln_1p_complex(a / b)).re;
    // Delta^2 [z^2] = 2 |a|^2
    let t2 = 2.0 * a_abs2;
    // Delta^2 [ln z] = ln1p(g/b) - 2 Re ln1p(a/b)
    let t3 = ln_1p_real(gamma / b) - 2.0 * ln_1p_complex(a / b).re;
    // corrections sum c_k / z^{2k}: tiny at b >= 12, direct difference is safe
    let corr = barnes_correction(Complex64::new(b + gamma, 0.0)).re
        - 2.0 * barnes_correction(Complex64::new(b, 0.0) + a).re
        + barnes_correction(Complex64::new(b, 0.0)).re;
    0.5 * t1 - 0.75 * t2 - t3 / 12.0 + corr
}

fn barnes_correction(z: Complex64) -> Complex64 {
    const COEFFS: [f64; 4] = [-1.0 / 240.0, 1.0 / 1008.0, -1.0 / 1440.0, 1.0 / 1056.0];
    let z2 = z * z;
    let mut p = z2;
    let mut v = Complex64::new(0.0, 0.0);
    for c in COEFFS {
        v += c / p;
        p *= z2;
    }
    v
}

fn ln_1p_real(x: f64) -> f64 {
    x.ln_1p()
}

/// Full-precision complex `ln(1 + w)`.
fn ln_1p_complex(w: Complex64) -> Complex64 {
    let re = 0.5 * (2.0 * w.re + w.norm_sqr()).ln_1p();
    let im = w.im.atan2(1.0 + w.re);
    Complex64::new(re, im)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transforms::{Singularity, SmoothComponent};

    #[test]
    fn single_point_trivial_and_exact_cases() {
        assert_eq!(single_point_log_moment(0.0, 0.0, 0.3, 50).unwrap(), 0.0);
        // gamma = 2, beta = 0, E = 0: log N + log 2
        let v = single_point_log_moment(2.0, 0.0, 0.0, 100).unwrap();
        assert!((v - (100f64.ln() + 2f64.ln())).abs() < 1e-11, "{v}");
    }

    #[test]
    fn single_point_symmetry_under_joint_flip() {
        // the formula is invariant under (beta, E) -> (-beta, -E); plain
        // beta -> -beta changes the beta*gamma term for E != 0
        for &(g, b, e) in &[(1.0, 1.0, 0.7), (0.5, -0.8, -0.4), (2.0, 0.3, 1.1)] {
            let v1 = single_point_log_moment(g, b, e, 200).unwrap();
            let v2 = single_point_log_moment(g, -b, -e, 200).unwrap();
            assert!((v1 - v2).abs() < 1e-12);
        }
        // and beta alone is NOT a symmetry off-center
        let v1 = single_point_log_moment(1.0, 1.0, 0.7, 200).unwrap();
        let v2 = single_point_log_moment(1.0, -1.0, 0.7, 200).unwrap();
        assert!((v1 - v2).abs() > 1e-3);
    }

    #[test]
    fn order_n_masses() {
        // E = 0 gamma-only: -gamma/2 per unit charge
        assert!((singular_semicircle_mass(1.0, 0.0, 0.0) + 0.5).abs() < 1e-14);
        // arg mass vanishes at the center of the band
        assert!(singular_semicircle_mass(0.0, 1.0, 0.0).abs() < 1e-14);
    }

    #[test]
    fn predict_joint_assembly() {
        let charge = Charge::single(0.0, 0.0, 1.0, 0.0);
        let p = predict_joint(&charge, 100).unwrap();
        assert!((p.order_n_term + 0.5).abs() < 1e-14);
        assert!((p.log_n_term - 0.25).abs() < 1e-14);
        assert_eq!(p.cross_term_c_ring, 0.0);
        let direct = single_point_log_moment(1.0, 0.0, 0.0, 100).unwrap() - 100.0 * 0.5;
        assert!((p.total(100) - direct).abs() < 1e-11);

        // reassembly invariant
        let nf = 100f64;
        assert!(
            (p.total(100) - (nf * p.order_n_term + nf.ln() * p.log_n_term + p.constant_term))
                .abs()
                < 1e-12
        );
    }

    #[test]
    fn two_charge_difference_is_cross_term() {
        let a = Singularity { t: 0.0, e: -0.8, gamma: 1.0, beta: 0.0 };
        let b = Singularity { t: 0.5, e: 0.7, gamma: 1.0, beta: 0.0 };
        let joint = Charge { singularities: vec![a, b], smooth: vec![] };
        let pj = predict_joint(&joint, 100).unwrap();
        let pa = predict_joint(&Charge { singularities: vec![a], smooth: vec![] }, 100).unwrap();
        let pb = predict_joint(&Charge { singularities: vec![b], smooth: vec![] }, 100).unwrap();
        let diff = pj.total(100) - pa.total(100) - pb.total(100);
        assert!((diff - pj.cross_term_c_ring).abs() < 1e-11);
    }

    #[test]
    fn predict_joint_permutation_invariance() {
        let a = Singularity { t: 0.0, e: -0.8, gamma: 1.0, beta: 0.5 };
        let b = Singularity { t: 0.5, e: 0.7, gamma: 0.5, beta: -1.0 };
        let c = Singularity { t: 1.0, e: 0.1, gamma: 2.0, beta: 0.0 };
        let p1 = predict_joint(&Charge { singularities: vec![a, b, c], smooth: vec![] }, 64)
            .unwrap();
        let p2 = predict_joint(&Charge { singularities: vec![c, a, b], smooth: vec![] }, 64)
            .unwrap();
        assert!((p1.total(64) - p2.total(64)).abs() < 1e-12);
    }

    #[test]
    fn separation_warning_and_coincidence_error() {
        let a = Singularity { t: 0.0, e: 0.0, gamma: 1.0, beta: 0.0 };
        let b = Singularity { t: 0.0, e: 1e-4, gamma: 1.0, beta: 0.0 };
        let p = predict_joint(&Charge { singularities: vec![a, b], smooth: vec![] }, 1000)
            .unwrap();
        assert!(p.separation_warning.is_some());
        let c = Singularity { t: 0.0, e: 0.0, gamma: 1.0, beta: 0.0 };
        assert!(predict_joint(&Charge { singularities: vec![a, c], smooth: vec![] }, 100).is_err());
    }

    #[test]
    fn gamma_terms_smooth_only() {
        // all charges zero: G3 = C(f,f)/2 = n/8 for f = T~_n
        for n in 1..=8u32 {
            let f = FunctionSpec::cheb_first(n);
            let g = gamma_terms(&Charge::default(), Some(&f)).unwrap();
            assert!((g.g3 - n as f64 / 8.0).abs() < 1e-12);
            assert_eq!(g.g1, 0.0);
            assert_eq!(g.g2, 0.0);
            assert_eq!(g.g4, 0.0);
            assert_eq!(g.g5, 0.0);
            assert_eq!(g.g6, 0.0);
        }
    }

    #[test]
    fn gamma5_unit_gap_and_beta_free_gamma6() {
        let s1 = Singularity { t: 0.0, e: 0.0, gamma: 1.0, beta: 0.0 };
        let s2 = Singularity { t: 0.0, e: 1.0, gamma: 1.0, beta: 0.0 };
        let g = gamma_terms(
            &Charge { singularities: vec![s1, s2], smooth: vec![] },
            None,
        )
        .unwrap();
        // unit gap kills the log in the gamma-gamma part
        assert!(g.g5.abs() < 1e-14, "{}", g.g5);
        assert_eq!(g.g6, 0.0);
    }

    #[test]
    fn gamma_terms_match_cross_covariance() {
        // G3..G6 must reassemble C_ring/2 exactly (same-time charge)
        let s1 = Singularity { t: 0.0, e: -0.8, gamma: 1.0, beta: 0.7 };
        let s2 = Singularity { t: 0.0, e: 0.7, gamma: 0.5, beta: -0.3 };
        let f = FunctionSpec::cheb_first(2);
        let charge = Charge {
            singularities: vec![s1, s2],
            smooth: vec![SmoothComponent { t: 0.0, f: f.clone() }],
        };
        let g = gamma_terms_inner(&charge.singularities, Some(&f)).unwrap();
        let cross = 0.5 * charge_cross_covariance(&charge).unwrap();
        assert!(
            (g.g3 + g.g4 + g.g5 + g.g6 - cross).abs() < 1e-10,
            "{} vs {}",
            g.g3 + g.g4 + g.g5 + g.g6,
            cross
        );

        // and predict_joint's constant equals G-sum plus nothing else
        let p = predict_joint(&charge, 128).unwrap();
        let per: f64 = p.per_singularity_constants.iter().sum();
        assert!((p.constant_term - (per + g.g3 + g.g4 + g.g5 + g.g6)).abs() < 1e-10);
        assert!((g.g1 + g.g2 - per).abs() < 1e-10);
    }

    #[test]
    fn gamma5_cross_terms_against_series_oracle() {
        // independent oracle: defining series with analytic coefficients,
        // Abel-regularized by a small time separation extrapolated to zero
        let (e1, e2) = (-0.8, 0.7);
        let s1 = Singularity { t: 0.0, e: e1, gamma: 1.0, beta: 1.0 };
        let s2 = Singularity { t: 0.0, e: e2, gamma: 1.0, beta: 1.0 };
        let g = gamma_terms_inner(&[s1, s2], None).unwrap();
        let series_cross = |tau: f64| {
            let th1 = (e1 / 2.0f64).acos();
            let th2 = (e2 / 2.0f64).acos();
            let mut s = 0.0;
            for n in 1..=400_000u64 {
                let nf = n as f64;
                let w = 0.25 * nf * (-tau * nf / 2.0).exp();
                let l1 = -2.0 * (nf * th1).cos() / nf;
                let l2 = -2.0 * (nf * th2).cos() / nf;
                let a1 = (if n == 1 { 1.0 } else { 0.0 }) - 2.0 * (nf * th1).sin() / nf;
                let a2 = (if n == 1 { 1.0 } else { 0.0 }) - 2.0 * (nf * th2).sin() / nf;
                s += w * (l1 * l2 + l1 * a2 + a1 * l2 + a1 * a2);
            }
            s
        };
        // Richardson in tau: f(0) ~ 2 f(h) - f(2h) up to O(h^2)
        let h = 2e-4;
        let extrap = 2.0 * series_cross(h) - series_cross(2.0 * h);
        assert!(
            (g.g5 + g.g6 - extrap).abs() < 1e-3,
            "G5+G6 = {} vs series {}",
            g.g5 + g.g6,
            extrap
        );
    }

    #[test]
    fn cue_moment_reference_values() {
        assert_eq!(cue_log_moment(0.0, 0.0, 7).unwrap(), 0.0);
        // gamma = 2, beta = 0: exactly log(N + 1)
        for n in [1u32, 2, 3, 5, 10, 50, 128, 256] {
            let v = cue_log_moment(2.0, 0.0, n).unwrap();
            let expect = ((n + 1) as f64).ln();
            assert!(
                (v - expect).abs() <= 1e-11 * expect.abs().max(1.0),
                "N = {n}: {v} vs {expect}"
            );
        }
    }

    #[test]
    fn cue_moment_gamma4_telescopes() {
        // gamma = 4: moment is prod_{j=0..1} ... = (N+1)(N+2)^2(N+3)/12;
        // telescoping Barnes ratios give binomial-type products
        for n in [2u32, 8, 64] {
            let v = cue_log_moment(4.0, 0.0, n).unwrap();
            let nf = n as f64;
            let expect = ((nf + 1.0) * (nf + 2.0).powi(2) * (nf + 3.0) / 12.0).ln();
            assert!((v - expect).abs() < 1e-10 * expect.max(1.0), "N = {n}");
        }
    }

    #[test]
    fn cue_moment_asymptotic_rate() {
        // residual against (g^2+b^2)/4 log N + G-ratio constant decays ~ 1/N
        let (g, b) = (1.0, 0.7);
        let constant = 2.0 * log_barnes_g_complex(Complex64::new(g / 2.0, b / 2.0))
            .unwrap()
            .re
            - log_barnes_g(g).unwrap();
        let mut prev_scaled = None;
        for &n in &[16u32, 64, 256, 1024] {
            let nf = n as f64;
            let resid =
                cue_log_moment(g, b, n).unwrap() - (g * g + b * b) / 4.0 * nf.ln() - constant;
            let scaled = resid.abs() * nf;
            if let Some(p) = prev_scaled {
                // N * residual stays bounded (allowing slack for low N)
                assert!(scaled < 4.0 * f64::max(p, 0.05), "N = {n}: {scaled} vs {p}");
            }
            prev_scaled = Some(scaled.max(0.01));
        }
        let resid_big = cue_log_moment(g, b, 1024).unwrap()
            - (g * g + b * b) / 4.0 * (1024f64).ln()
            - constant;
        assert!(resid_big.abs() < 1e-3, "{resid_big}");
    }

    #[test]
    fn cue_moment_pole_detection() {
        assert!(cue_log_moment(-1.5, 0.0, 8).is_err());
    }
}
