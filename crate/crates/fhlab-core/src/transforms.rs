//! Test-function descriptors and the transform/covariance machinery built on
//! the rescaled Chebyshev basis: coefficient extraction, the semicircle- and
//! arcsine-weighted Hilbert transforms with their time-dependent versions,
//! the covariance bilinear form of two linear statistics across times, its
//! singular-diagonal-free expansion for charge collections, and the dyadic
//! scale decomposition of regularized singularities.

use crate::error::{Error, Result};
use crate::quad::trapezoid_theta;
use crate::specfun::{cheb_t, cheb_u, equilibrium_density, semicircle_cdf, DensityKind};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Default absolute tolerance for series truncation.
pub const SERIES_TOL: f64 = 1e-10;

/// Side of the smooth transition for regularized jump-type functions.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Right,
    Left,
    #[default]
    None,
}

/// Symbolic descriptor of a test function on the spectral axis. This is the
/// single currency for linear statistics, transforms and covariances.
///
/// Singular kinds carry a center `E` in `(-2, 2)` and a regularization scale
/// `epsilon >= 0`; `epsilon = 0` means the unregularized function.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FunctionSpec {
    /// First-kind Chebyshev basis element `T~_n`.
    ChebFirst { n: u32 },
    /// Second-kind Chebyshev basis element `U~_n`.
    ChebSecond { n: u32 },
    /// `log|x - E|`, smoothed to the constant `log(2 eps)` near the center.
    LogSing {
        center: f64,
        #[serde(default)]
        epsilon: f64,
    },
    /// `arg^E(x) = (x - E)/2 + Xi^E(x)` with optionally regularized jump.
    ArgSing {
        center: f64,
        #[serde(default)]
        epsilon: f64,
        #[serde(default)]
        direction: Direction,
    },
    /// The jump `Xi^E` alone: `pi/2` for `x < E`, `-pi/2` for `x >= E`.
    JumpSing {
        center: f64,
        #[serde(default)]
        epsilon: f64,
        #[serde(default)]
        direction: Direction,
    },
    /// Even bump `chi((x - E)/eps)`: 1 on `|x-E| <= eps`, 0 outside
    /// `|x-E| >= 2 eps`, quintic-smoothstep transition.
    Bump { center: f64, epsilon: f64 },
    /// Explicit first-kind coefficient series `sum_n coeffs[n] T~_n`.
    Series { coeffs: Vec<f64> },
    /// Weighted finite sum of other specs.
    ScaledSum { terms: Vec<(f64, FunctionSpec)> },
}

impl FunctionSpec {
    pub fn cheb_first(n: u32) -> Self {
        FunctionSpec::ChebFirst { n }
    }

    pub fn cheb_second(n: u32) -> Self {
        FunctionSpec::ChebSecond { n }
    }

    pub fn log_sing(center: f64) -> Self {
        FunctionSpec::LogSing { center, epsilon: 0.0 }
    }

    pub fn log_reg(center: f64, epsilon: f64) -> Self {
        FunctionSpec::LogSing { center, epsilon }
    }

    pub fn arg_sing(center: f64) -> Self {
        FunctionSpec::ArgSing { center, epsilon: 0.0, direction: Direction::None }
    }

    pub fn jump_sing(center: f64) -> Self {
        FunctionSpec::JumpSing { center, epsilon: 0.0, direction: Direction::None }
    }

    pub fn bump(center: f64, epsilon: f64) -> Self {
        FunctionSpec::Bump { center, epsilon }
    }

    /// Structural validity: singular centers in the open bulk, finite
    /// scales, directions present where a regularized jump needs one.
    pub fn validate(&self) -> Result<()> {
        match self {
            FunctionSpec::LogSing { center, epsilon } => {
                check_singular(*center, *epsilon)?;
            }
            FunctionSpec::ArgSing { center, epsilon, direction }
            | FunctionSpec::JumpSing { center, epsilon, direction } => {
                check_singular(*center, *epsilon)?;
                if *epsilon > 0.0 && *direction == Direction::None {
                    return Err(Error::InvalidInput(
                        "regularized jump needs an explicit direction".into(),
                    ));
                }
            }
            FunctionSpec::Bump { center, epsilon } => {
                if !center.is_finite() || !(*epsilon > 0.0) {
                    return Err(Error::InvalidInput("bump needs finite center and epsilon > 0".into()));
                }
            }
            FunctionSpec::Series { coeffs } => {
                if coeffs.iter().any(|c| !c.is_finite()) {
                    return Err(Error::InvalidInput("series coefficients must be finite".into()));
                }
            }
            FunctionSpec::ScaledSum { terms } => {
                for (w, t) in terms {
                    if !w.is_finite() {
                        return Err(Error::InvalidInput("scaled_sum weight must be finite".into()));
                    }
                    t.validate()?;
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// True when the spec (or any summand) is an unregularized singular kind.
    pub fn has_bare_singularity(&self) -> bool {
        match self {
            FunctionSpec::LogSing { epsilon, .. }
            | FunctionSpec::ArgSing { epsilon, .. }
            | FunctionSpec::JumpSing { epsilon, .. } => *epsilon == 0.0,
            FunctionSpec::ScaledSum { terms } => {
                terms.iter().any(|(_, t)| t.has_bare_singularity())
            }
            _ => false,
        }
    }
}

fn check_singular(center: f64, epsilon: f64) -> Result<()> {
    if !(center > -2.0 && center < 2.0) {
        return Err(Error::InvalidInput(format!(
            "singular center must lie in (-2, 2); got {center}"
        )));
    }
    if !(epsilon >= 0.0) || !epsilon.is_finite() {
        return Err(Error::InvalidInput(format!("bad regularization scale {epsilon}")));
    }
    Ok(())
}

// --- pointwise building blocks ---

/// Quintic smoothstep on [0, 1]; max slope 15/8.
fn smoothstep(u: f64) -> f64 {
    if u <= 0.0 {
        0.0
    } else if u >= 1.0 {
        1.0
    } else {
        u * u * u * (10.0 + u * (-15.0 + 6.0 * u))
    }
}

/// Even bump chi: 1 on [-1, 1], 0 outside [-2, 2], 0 <= chi' <= 15/8.
pub fn bump_chi(u: f64) -> f64 {
    let a = u.abs();
    if a <= 1.0 {
        1.0
    } else if a >= 2.0 {
        0.0
    } else {
        1.0 - smoothstep(a - 1.0)
    }
}

/// Regularized jump `Xi_{d,eps}(y)` centered at zero (convention Xi_0 is the
/// sharp jump with value -pi/2 at y = 0).
fn xi_regularized(y: f64, epsilon: f64, direction: Direction) -> f64 {
    if epsilon == 0.0 {
        return if y < 0.0 { PI / 2.0 } else { -PI / 2.0 };
    }
    let u = match direction {
        Direction::Right => y / epsilon,
        Direction::Left => (y + epsilon) / epsilon,
        Direction::None => y / epsilon,
    };
    PI / 2.0 - PI * smoothstep(u)
}

/// Pointwise evaluation.
pub fn evaluate(f: &FunctionSpec, x: f64) -> Result<f64> {
    Ok(match f {
        FunctionSpec::ChebFirst { n } => cheb_t(*n, x),
        FunctionSpec::ChebSecond { n } => cheb_u(*n, x),
        FunctionSpec::LogSing { center, epsilon } => {
            let y = x - center;
            if *epsilon == 0.0 {
                if y == 0.0 {
                    return Err(Error::Domain(
                        "log singularity evaluated at its center".into(),
                    ));
                }
                y.abs().ln()
            } else {
                let chi = bump_chi(y / epsilon);
                let smooth_cap = (2.0 * epsilon).ln();
                if chi >= 1.0 {
                    smooth_cap
                } else {
                    y.abs().ln() * (1.0 - chi) + smooth_cap * chi
                }
            }
        }
        FunctionSpec::ArgSing { center, epsilon, direction } => {
            (x - center) / 2.0 + xi_regularized(x - center, *epsilon, *direction)
        }
        FunctionSpec::JumpSing { center, epsilon, direction } => {
            xi_regularized(x - center, *epsilon, *direction)
        }
        FunctionSpec::Bump { center, epsilon } => bump_chi((x - center) / epsilon),
        FunctionSpec::Series { coeffs } => {
            // Clenshaw on the recurrence p_{n+1} = x p_n - p_{n-1}:
            // value = b_0 - (x/2) b_1 since T~_0 = 1, T~_1 = x/2
            let mut b1 = 0.0;
            let mut b2 = 0.0;
            for &c in coeffs.iter().rev() {
                let b0 = c + x * b1 - b2;
                b2 = b1;
                b1 = b0;
            }
            b1 - x * b2 / 2.0
        }
        FunctionSpec::ScaledSum { terms } => {
            let mut s = 0.0;
            for (w, t) in terms {
                s += w * evaluate(t, x)?;
            }
            s
        }
    })
}

// --- Chebyshev coefficients ---

/// First-kind coefficient vector with the `(1 + 1_{n != 0})` normalization:
/// if `f = sum c_n T~_n` then `coeffs[n] = c_n`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChebyshevSeries {
    pub coeffs: Vec<f64>,
    /// sup of |coeffs| over the last decade of indices; crude decay record.
    pub tail_sup: f64,
}

impl ChebyshevSeries {
    fn from_coeffs(coeffs: Vec<f64>) -> Self {
        let n = coeffs.len();
        let start = (9 * n) / 10;
        let tail_sup = coeffs[start.min(n.saturating_sub(1))..]
            .iter()
            .fold(0.0f64, |m, c| m.max(c.abs()));
        ChebyshevSeries { coeffs, tail_sup }
    }
}

/// Analytic coefficient streams for the unregularized singular kinds.
/// `theta` is the center angle `arccos(E/2)`.
#[derive(Clone, Copy, Debug)]
enum SingKindAt {
    Log,
    Arg,
    Jump,
}

fn sing_coeff(kind: SingKindAt, theta: f64, n: u32) -> f64 {
    debug_assert!(n >= 1);
    let nf = n as f64;
    match kind {
        SingKindAt::Log => -2.0 * (nf * theta).cos() / nf,
        SingKindAt::Arg => {
            (if n == 1 { 1.0 } else { 0.0 }) - 2.0 * (nf * theta).sin() / nf
        }
        SingKindAt::Jump => -2.0 * (nf * theta).sin() / nf,
    }
}

fn sing_constant(kind: SingKindAt, center: f64, theta: f64) -> f64 {
    match kind {
        SingKindAt::Log => 0.0,
        SingKindAt::Arg => PI / 2.0 - center / 2.0 - theta,
        SingKindAt::Jump => PI / 2.0 - theta,
    }
}

fn bare_sing_kind(f: &FunctionSpec) -> Option<(SingKindAt, f64)> {
    match f {
        FunctionSpec::LogSing { center, epsilon } if *epsilon == 0.0 => {
            Some((SingKindAt::Log, *center))
        }
        FunctionSpec::ArgSing { center, epsilon, .. } if *epsilon == 0.0 => {
            Some((SingKindAt::Arg, *center))
        }
        FunctionSpec::JumpSing { center, epsilon, .. } if *epsilon == 0.0 => {
            Some((SingKindAt::Jump, *center))
        }
        _ => None,
    }
}

/// Fourier-Chebyshev coefficients `f^_n = (1 + 1_{n!=0}) int f T~_n rho_arcsin`
/// for `n = 0 .. n_max`. Polynomial kinds are exact; unregularized singular
/// kinds use their analytic formulas; everything else goes through adaptive
/// theta-trapezoid quadrature.
pub fn cheb_coeffs(f: &FunctionSpec, n_max: usize) -> Result<ChebyshevSeries> {
    f.validate()?;
    let coeffs = cheb_coeff_vec(f, n_max)?;
    Ok(ChebyshevSeries::from_coeffs(coeffs))
}

fn cheb_coeff_vec(f: &FunctionSpec, n_max: usize) -> Result<Vec<f64>> {
    let mut out = vec![0.0; n_max + 1];
    match f {
        FunctionSpec::ChebFirst { n } => {
            if (*n as usize) <= n_max {
                out[*n as usize] = 1.0;
            }
        }
        FunctionSpec::ChebSecond { n } => {
            // U~_m = 2(T~_m + T~_{m-2} + ...) with T~_0 weight 1 for even m
            let mut k = *n as i64;
            while k >= 1 {
                if (k as usize) <= n_max {
                    out[k as usize] = 2.0;
                }
                k -= 2;
            }
            if n % 2 == 0 {
                out[0] = 1.0;
            }
        }
        FunctionSpec::Series { coeffs } => {
            for (i, c) in coeffs.iter().enumerate().take(n_max + 1) {
                out[i] = *c;
            }
        }
        FunctionSpec::ScaledSum { terms } => {
            for (w, t) in terms {
                let part = cheb_coeff_vec(t, n_max)?;
                for (o, p) in out.iter_mut().zip(part) {
                    *o += w * p;
                }
            }
        }
        _ => {
            if let Some((kind, center)) = bare_sing_kind(f) {
                let theta = (center / 2.0).acos();
                out[0] = sing_constant(kind, center, theta);
                for n in 1..=n_max {
                    out[n] = sing_coeff(kind, theta, n as u32);
                }
            } else {
                return quadrature_coeffs(f, n_max);
            }
        }
    }
    Ok(out)
}

fn quadrature_coeffs(f: &FunctionSpec, n_max: usize) -> Result<Vec<f64>> {
    let mut m = (4 * (n_max + 1)).max(512);
    let mut prev: Option<Vec<f64>> = None;
    loop {
        let coeffs = trapezoid_coeffs(f, n_max, m)?;
        if let Some(p) = &prev {
            let scale = coeffs.iter().fold(1.0f64, |s, c| s.max(c.abs()));
            let diff = coeffs
                .iter()
                .zip(p)
                .fold(0.0f64, |d, (a, b)| d.max((a - b).abs()));
            if diff <= 1e-12 * scale {
                return Ok(coeffs);
            }
        }
        prev = Some(coeffs);
        m *= 2;
        if m > (1 << 22) {
            return Err(Error::QuadratureNonConvergence(format!(
                "coefficient grid for {f:?} did not stabilize below 2^22 nodes"
            )));
        }
    }
}

fn trapezoid_coeffs(f: &FunctionSpec, n_max: usize, m: usize) -> Result<Vec<f64>> {
    // sample f(2 cos theta) once, then project on cos(n theta) incrementally
    let h = PI / m as f64;
    let mut samples = Vec::with_capacity(m + 1);
    for j in 0..=m {
        let theta = j as f64 * h;
        samples.push(evaluate(f, 2.0 * theta.cos())?);
    }
    let mut out = vec![0.0; n_max + 1];
    for (n, slot) in out.iter_mut().enumerate() {
        let mut s = 0.5 * (samples[0] + (n as f64 * PI).cos() * samples[m]);
        for (j, &v) in samples.iter().enumerate().skip(1).take(m - 1) {
            s += v * (n as f64 * j as f64 * h).cos();
        }
        let factor = if n == 0 { 1.0 } else { 2.0 };
        *slot = factor * s * h / PI;
    }
    Ok(out)
}

/// `int f rho_arcsin` (the coefficient `f^_0`).
pub fn arcsine_mean(f: &FunctionSpec) -> Result<f64> {
    match f {
        FunctionSpec::ChebFirst { n } => Ok(if *n == 0 { 1.0 } else { 0.0 }),
        FunctionSpec::ChebSecond { n } => Ok(if n % 2 == 0 { 1.0 } else { 0.0 }),
        FunctionSpec::Series { coeffs } => Ok(coeffs.first().copied().unwrap_or(0.0)),
        FunctionSpec::ScaledSum { terms } => {
            let mut s = 0.0;
            for (w, t) in terms {
                s += w * arcsine_mean(t)?;
            }
            Ok(s)
        }
        _ => {
            if let Some((kind, center)) = bare_sing_kind(f) {
                Ok(sing_constant(kind, center, (center / 2.0).acos()))
            } else {
                Ok(cheb_coeff_vec(f, 1)?[0])
            }
        }
    }
}

/// `int f rho_sc` (semicircle mass), analytic for the singular kinds:
/// log has mass `(E^2 - 2)/4`, arg has mass
/// `(pi - E)/2 + E sqrt(4 - E^2)/4 - arccos(E/2)`.
pub fn semicircle_mean(f: &FunctionSpec) -> Result<f64> {
    match f {
        FunctionSpec::ChebFirst { n } => Ok(match n {
            0 => 1.0,
            2 => -0.5,
            _ => 0.0,
        }),
        FunctionSpec::ChebSecond { n } => Ok(cheb_second_sc_mass(*n)),
        FunctionSpec::Series { coeffs } => {
            let mut s = coeffs.first().copied().unwrap_or(0.0);
            if coeffs.len() > 2 {
                s -= 0.5 * coeffs[2];
            }
            Ok(s)
        }
        FunctionSpec::ScaledSum { terms } => {
            let mut s = 0.0;
            for (w, t) in terms {
                s += w * semicircle_mean(t)?;
            }
            Ok(s)
        }
        FunctionSpec::LogSing { center, epsilon } => {
            let base = (center * center - 2.0) / 4.0;
            if *epsilon == 0.0 {
                Ok(base)
            } else {
                Ok(base + log_reg_sc_mass_correction(*center, *epsilon))
            }
        }
        FunctionSpec::ArgSing { center, epsilon, direction } => {
            let e = *center;
            let base = (PI - e) / 2.0 + e * (4.0 - e * e).sqrt() / 4.0 - (e / 2.0).acos();
            Ok(base + jump_reg_sc_mass_correction(e, *epsilon, *direction))
        }
        FunctionSpec::JumpSing { center, epsilon, direction } => {
            let base = PI * (semicircle_cdf(*center) - 0.5);
            Ok(base + jump_reg_sc_mass_correction(*center, *epsilon, *direction))
        }
        FunctionSpec::Bump { center, epsilon } => {
            let (nodes, weights) = crate::quad::gauss_legendre(
                200,
                (center - 2.0 * epsilon).max(-2.0),
                (center + 2.0 * epsilon).min(2.0),
            );
            let mut s = 0.0;
            for (x, w) in nodes.iter().zip(&weights) {
                s += w * bump_chi((x - center) / epsilon)
                    * equilibrium_density(DensityKind::Semicircle, *x);
            }
            Ok(s)
        }
    }
}

fn cheb_second_sc_mass(n: u32) -> f64 {
    // int U~_n rho_sc = 1 for even n (Dirichlet kernel), 0 for odd
    if n % 2 == 0 {
        1.0
    } else {
        0.0
    }
}

/// Semicircle mass of `log_eps - log`: supported on `|y| <= 2 eps`.
fn log_reg_sc_mass_correction(center: f64, epsilon: f64) -> f64 {
    let rho = |y: f64| equilibrium_density(DensityKind::Semicircle, center + y);
    let cap = (2.0 * epsilon).ln();
    let one_side = |sign: f64| {
        crate::quad::integrate_log_endpoint(2.0 * epsilon, 400, |y| {
            let chi = bump_chi(y / epsilon);
            chi * (cap - y.ln()) * rho(sign * y)
        })
    };
    one_side(1.0) + one_side(-1.0)
}

/// Semicircle mass of `Xi_{d,eps} - Xi`: supported on the transition zone.
fn jump_reg_sc_mass_correction(center: f64, epsilon: f64, direction: Direction) -> f64 {
    if epsilon == 0.0 {
        return 0.0;
    }
    let (lo, hi) = match direction {
        Direction::Right | Direction::None => (center, center + epsilon),
        Direction::Left => (center - epsilon, center),
    };
    let (nodes, weights) = crate::quad::gauss_legendre(200, lo.max(-2.0), hi.min(2.0));
    let mut s = 0.0;
    for (x, w) in nodes.iter().zip(&weights) {
        let sharp = if *x < center { PI / 2.0 } else { -PI / 2.0 };
        let smooth = xi_regularized(x - center, epsilon, direction);
        s += w * (smooth - sharp) * equilibrium_density(DensityKind::Semicircle, *x);
    }
    s
}

// --- weighted Hilbert transforms ---

/// Time-dependent arcsine-weighted transform
/// `V_t f(x) = (1/2) sum_n e^{-t n / 2} f^_n U~_{n-1}(x)`;
/// at `t = 0` this is minus the Hilbert transform of `f rho_arcsin`.
/// Closed forms are used for the Chebyshev basis and the bare singular kinds
/// at `t = 0`; other inputs go through the coefficient series.
pub fn v_transform(f: &FunctionSpec, t: f64, x: f64) -> Result<f64> {
    if t < 0.0 {
        return Err(Error::Domain(format!("v_transform needs t >= 0, got {t}")));
    }
    match f {
        FunctionSpec::ChebFirst { n } => Ok(if *n == 0 {
            0.0
        } else {
            0.5 * (-t * *n as f64 / 2.0).exp() * cheb_u(*n - 1, x)
        }),
        FunctionSpec::ScaledSum { terms } => {
            let mut s = 0.0;
            for (w, g) in terms {
                s += w * v_transform(g, t, x)?;
            }
            Ok(s)
        }
        FunctionSpec::Series { coeffs } => {
            let mut s = 0.0;
            let (mut u_prev, mut u_cur) = (0.0, 1.0);
            for (n, c) in coeffs.iter().enumerate().skip(1) {
                s += 0.5 * c * (-t * n as f64 / 2.0).exp() * u_cur;
                let u_next = x * u_cur - u_prev;
                u_prev = u_cur;
                u_cur = u_next;
            }
            Ok(s)
        }
        _ => {
            if let Some((kind, center)) = bare_sing_kind(f) {
                if t == 0.0 {
                    return v_closed_bare(kind, center, x);
                }
                return v_series_sing(kind, center, t, x, SERIES_TOL);
            }
            // smooth kinds: coefficient series (decaying coefficients)
            v_series_smooth(f, t, x, SERIES_TOL)
        }
    }
}

fn v_closed_bare(kind: SingKindAt, center: f64, x: f64) -> Result<f64> {
    if !(x > -2.0 && x < 2.0) {
        return Err(Error::Domain(format!(
            "closed-form transform needs x in (-2, 2); got {x}"
        )));
    }
    let s = (4.0 - x * x).sqrt();
    match kind {
        SingKindAt::Log => {
            // (arccos(x/2) - pi 1_{x < E}) / sqrt(4 - x^2); principal value at x = E
            let a = (x / 2.0).acos();
            Ok(if x < center {
                (a - PI) / s
            } else if x > center {
                a / s
            } else {
                (a - PI / 2.0) / s
            })
        }
        SingKindAt::Arg => {
            let v_jump = v_closed_bare(SingKindAt::Jump, center, x)?;
            Ok(v_jump + 0.5)
        }
        SingKindAt::Jump => {
            if x == center {
                return Err(Error::Domain(
                    "V of a jump has a log singularity at its center".into(),
                ));
            }
            let alpha = (center / 2.0).acos();
            let beta = (x / 2.0).acos();
            let num = ((alpha - beta) / 2.0).sin().abs();
            let den = ((alpha + beta) / 2.0).sin();
            Ok((num.ln() - den.ln()) / s)
        }
    }
}

fn v_series_sing(kind: SingKindAt, center: f64, t: f64, x: f64, tol: f64) -> Result<f64> {
    // |coeff_n| <= C/n and |U~_{n-1}| <= n: geometric tail e^{-t n / 2}
    if t <= 0.0 {
        return Err(Error::TailBound(
            "singular V-series needs t > 0 (use closed form at t = 0)".into(),
        ));
    }
    let q = (-t / 2.0).exp();
    let theta = (center / 2.0).acos();
    // stream U~_{n-1}(x) and cos/sin(n theta) by recurrences: O(1) per term
    let (ct, st) = (theta.cos(), theta.sin());
    let (mut cn, mut sn) = (ct, st); // cos(n theta), sin(n theta) at n = 1
    let (mut u_prev, mut u_cur) = (0.0, 1.0); // U~_{-1}, U~_0
    let mut s = 0.0;
    let mut qn = 1.0;
    let mut n = 1u64;
    loop {
        qn *= q;
        let nf = n as f64;
        let c = match kind {
            SingKindAt::Log => -2.0 * cn / nf,
            SingKindAt::Arg => (if n == 1 { 1.0 } else { 0.0 }) - 2.0 * sn / nf,
            SingKindAt::Jump => -2.0 * sn / nf,
        };
        s += 0.5 * qn * c * u_cur;
        // remaining tail bounded by 3 q^{n+1} / (1 - q) (coeff*U product <= 3)
        if 3.0 * qn * q / (1.0 - q) < tol {
            break;
        }
        let (cn1, sn1) = (cn * ct - sn * st, sn * ct + cn * st);
        cn = cn1;
        sn = sn1;
        let u_next = x * u_cur - u_prev;
        u_prev = u_cur;
        u_cur = u_next;
        n += 1;
        if n > 200_000_000 {
            return Err(Error::TailBound(format!(
                "singular V-series did not reach tolerance {tol} at t = {t}"
            )));
        }
    }
    Ok(s)
}

fn v_series_smooth(f: &FunctionSpec, t: f64, x: f64, tol: f64) -> Result<f64> {
    let mut n_max = 512usize;
    loop {
        let series = cheb_coeffs(f, n_max)?;
        let c = &series.coeffs;
        let mut s = 0.0;
        let (mut u_prev, mut u_cur) = (0.0, 1.0); // U~_{-1}, U~_0
        for (n, cn) in c.iter().enumerate().skip(1) {
            s += 0.5 * cn * (-t * n as f64 / 2.0).exp() * u_cur;
            let u_next = x * u_cur - u_prev;
            u_prev = u_cur;
            u_cur = u_next;
        }
        // decay estimate |c_n| ~ A / n^3 from the recorded tail
        let a3 = series.tail_sup * (n_max as f64).powi(3);
        let tail = 0.5 * a3 / n_max as f64; // sum A n^{-2} beyond n_max
        if tail * (-t * n_max as f64 / 2.0).exp() <= tol {
            return Ok(s);
        }
        n_max *= 2;
        if n_max > 1 << 17 {
            return Err(Error::TailBound(format!(
                "V-series tail {tail:.3e} above tolerance {tol} at n_max = {n_max}"
            )));
        }
    }
}

/// Time-dependent semicircle-weighted transform
/// `U_t g(x) = 2 sum_n e^{-t(n+1)/2} g^U_n T~_{n+1}(x)` where `g^U_n` are the
/// second-kind coefficients; `U_0 U~_{n-1} = 2 T~_n` and `U_0 1 = x`.
pub fn u_transform(g: &FunctionSpec, t: f64, x: f64) -> Result<f64> {
    if t < 0.0 {
        return Err(Error::Domain(format!("u_transform needs t >= 0, got {t}")));
    }
    match g {
        FunctionSpec::ChebSecond { n } => {
            Ok(2.0 * (-t * (*n as f64 + 1.0) / 2.0).exp() * cheb_t(n + 1, x))
        }
        FunctionSpec::ChebFirst { n } => Ok(match n {
            0 => 2.0 * (-t / 2.0).exp() * cheb_t(1, x),
            1 => (-t).exp() * cheb_t(2, x),
            m => {
                // T~_m = (U~_m - U~_{m-2}) / 2
                (-t * (*m as f64 + 1.0) / 2.0).exp() * cheb_t(m + 1, x)
                    - (-t * (*m as f64 - 1.0) / 2.0).exp() * cheb_t(m - 1, x)
            }
        }),
        FunctionSpec::ScaledSum { terms } => {
            let mut s = 0.0;
            for (w, h) in terms {
                s += w * u_transform(h, t, x)?;
            }
            Ok(s)
        }
        FunctionSpec::Series { coeffs } => {
            let mut s = 0.0;
            for (n, c) in coeffs.iter().enumerate() {
                s += c * u_transform(&FunctionSpec::cheb_first(n as u32), t, x)?;
            }
            Ok(s)
        }
        _ => {
            if g.has_bare_singularity() {
                return Err(Error::InvalidInput(
                    "U-transform of an unregularized singularity is not supported".into(),
                ));
            }
            let vals = u_coeffs_fn(|y| evaluate(g, y).unwrap_or(f64::NAN), 2048)?;
            Ok(u_sum_from_coeffs(&vals, t, x))
        }
    }
}

/// Second-kind coefficients `g^U_n = int g U~_n rho_sc` of a pointwise
/// function, by adaptive theta quadrature. The function is sampled once per
/// node and projected on all indices from the cached samples.
pub fn u_coeffs_fn(g: impl Fn(f64) -> f64, n_max: usize) -> Result<Vec<f64>> {
    let mut m = (4 * (n_max + 1)).max(512);
    let mut prev: Option<Vec<f64>> = None;
    loop {
        let h = PI / m as f64;
        let samples: Vec<f64> = (0..=m).map(|j| g(2.0 * (j as f64 * h).cos())).collect();
        let mut out = vec![0.0; n_max + 1];
        for (n, slot) in out.iter_mut().enumerate() {
            let freq = n as f64 + 1.0;
            let mut s = 0.0; // integrand vanishes at both endpoints (sin factor)
            for (j, &v) in samples.iter().enumerate().skip(1).take(m - 1) {
                let theta = j as f64 * h;
                s += v * (freq * theta).sin() * theta.sin();
            }
            *slot = 2.0 * s * h / PI;
        }
        if let Some(p) = &prev {
            let scale = out.iter().fold(1.0f64, |s, c| s.max(c.abs()));
            let diff = out.iter().zip(p).fold(0.0f64, |d, (a, b)| d.max((a - b).abs()));
            if diff <= 1e-11 * scale {
                return Ok(out);
            }
        }
        prev = Some(out);
        m *= 2;
        if m > (1 << 21) {
            return Err(Error::QuadratureNonConvergence(
                "second-kind coefficient grid did not stabilize".into(),
            ));
        }
    }
}

/// Precomputed arcsine-weighted transform of a fixed spec: derives the
/// coefficient series once, then evaluates `V_t f(x)` in `O(n_max)` per call.
pub struct VTransform {
    coeffs: Vec<f64>,
}

impl VTransform {
    pub fn new(f: &FunctionSpec, n_max: usize) -> Result<Self> {
        Ok(VTransform { coeffs: cheb_coeffs(f, n_max)?.coeffs })
    }

    pub fn eval(&self, t: f64, x: f64) -> f64 {
        let mut s = 0.0;
        let (mut u_prev, mut u_cur) = (0.0, 1.0);
        for (n, c) in self.coeffs.iter().enumerate().skip(1) {
            s += 0.5 * c * (-t * n as f64 / 2.0).exp() * u_cur;
            let u_next = x * u_cur - u_prev;
            u_prev = u_cur;
            u_cur = u_next;
        }
        s
    }
}

/// `U_t` applied to a pointwise function through its second-kind coefficients.
pub fn u_transform_fn(g: impl Fn(f64) -> f64, t: f64, x: f64, n_max: usize) -> Result<f64> {
    let coeffs = u_coeffs_fn(g, n_max)?;
    Ok(u_sum_from_coeffs(&coeffs, t, x))
}

fn u_sum_from_coeffs(coeffs: &[f64], t: f64, x: f64) -> f64 {
    let mut s = 0.0;
    for (n, c) in coeffs.iter().enumerate() {
        s += 2.0 * c * (-t * (n as f64 + 1.0) / 2.0).exp() * cheb_t(n as u32 + 1, x);
    }
    s
}

// --- the covariance bilinear form ---

/// Covariance selector for the closed-form evaluations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SingularKind {
    Log,
    Arg,
}

/// Closed-form covariances of bare singular pairs at centers `x`, `y`
/// (angles `theta = arccos(x/2)`, `omega = arccos(y/2)`) and time gap `tau`,
/// on the principal branch with cut `[1, inf)` for `log(1 - z)`:
///
/// * (log, log): `-(1/2)(ln|1-u e^{i(th-om)}| + ln|1-u e^{i(th+om)}|)`
/// * (log, arg): `-(1/2)(arg(1-u e^{i(th+om)}) + arg(1-u e^{i(om-th)})) - u x / 4`
/// * (arg, arg): `-(1/2)(ln|1-u e^{i(th-om)}| - ln|1-u e^{i(th+om)}|)
///                + u (1 - sqrt(4-x^2) - sqrt(4-y^2)) / 4`
///
/// with `u = e^{-tau/2}`.
pub fn covariance_closed(
    kind1: SingularKind,
    kind2: SingularKind,
    x: f64,
    y: f64,
    tau: f64,
) -> Result<f64> {
    let k1 = match kind1 {
        SingularKind::Log => SingKindAt::Log,
        SingularKind::Arg => SingKindAt::Arg,
    };
    let k2 = match kind2 {
        SingularKind::Log => SingKindAt::Log,
        SingularKind::Arg => SingKindAt::Arg,
    };
    closed_pair(k1, x, k2, y, tau)
}

fn closed_pair(k1: SingKindAt, x: f64, k2: SingKindAt, y: f64, tau: f64) -> Result<f64> {
    if tau == 0.0 && x == y {
        return Err(Error::Divergence(format!(
            "coincident singular pair at center {x}, equal times"
        )));
    }
    if !(x > -2.0 && x < 2.0 && y > -2.0 && y < 2.0) {
        return Err(Error::Domain("singular centers must lie in (-2, 2)".into()));
    }
    let theta = (x / 2.0).acos();
    let omega = (y / 2.0).acos();
    let u = (-tau.abs() / 2.0).exp();
    let ln_abs = |phi: f64| {
        let re = 1.0 - u * phi.cos();
        let im = -u * phi.sin();
        0.5 * (re * re + im * im).ln()
    };
    let arg_of = |phi: f64| {
        let re = 1.0 - u * phi.cos();
        let im = -u * phi.sin();
        im.atan2(re)
    };
    let val = match (k1, k2) {
        (SingKindAt::Log, SingKindAt::Log) => {
            -0.5 * (ln_abs(theta - omega) + ln_abs(theta + omega))
        }
        (SingKindAt::Log, SingKindAt::Arg) => {
            -0.5 * (arg_of(theta + omega) + arg_of(omega - theta)) - u * x / 4.0
        }
        (SingKindAt::Arg, SingKindAt::Log) => {
            return closed_pair(SingKindAt::Log, y, SingKindAt::Arg, x, tau);
        }
        (SingKindAt::Log, SingKindAt::Jump) => {
            -0.5 * (arg_of(theta + omega) + arg_of(omega - theta))
        }
        (SingKindAt::Jump, SingKindAt::Log) => {
            return closed_pair(SingKindAt::Log, y, SingKindAt::Jump, x, tau);
        }
        (SingKindAt::Arg, SingKindAt::Arg) => {
            -0.5 * (ln_abs(theta - omega) - ln_abs(theta + omega))
                + u * (1.0 - (4.0 - x * x).sqrt() - (4.0 - y * y).sqrt()) / 4.0
        }
        (SingKindAt::Arg, SingKindAt::Jump) => {
            -0.5 * (ln_abs(theta - omega) - ln_abs(theta + omega))
                - u * (4.0 - y * y).sqrt() / 4.0
        }
        (SingKindAt::Jump, SingKindAt::Arg) => {
            return closed_pair(SingKindAt::Arg, y, SingKindAt::Jump, x, tau);
        }
        (SingKindAt::Jump, SingKindAt::Jump) => {
            -0.5 * (ln_abs(theta - omega) - ln_abs(theta + omega))
        }
    };
    Ok(val)
}

/// Covariance `C(f(H_t), h(H_s)) = (1/4) sum_n e^{-|t-s| n/2} n f^_n h^_n`
/// of the limiting Gaussian fluctuations of two linear statistics.
///
/// Symmetric, depends on the times through `|t - s|` only. Bare singular
/// pairs dispatch to the closed forms; a bare singular kind against a smooth
/// function at equal times uses the exact identities
/// `C(log^E, g) = g^_0/2 - g(E)/2` and
/// `C(arg^E, g) = g^_1/4 - (sqrt(4-E^2)/2) V g(E)`.
pub fn covariance(f: &FunctionSpec, tf: f64, h: &FunctionSpec, th: f64) -> Result<f64> {
    f.validate()?;
    h.validate()?;
    let tau = (tf - th).abs();
    pair_covariance(f, h, tau)
}

fn pair_covariance(f: &FunctionSpec, h: &FunctionSpec, tau: f64) -> Result<f64> {
    // distribute over weighted sums first
    if let FunctionSpec::ScaledSum { terms } = f {
        let mut s = 0.0;
        for (w, g) in terms {
            s += w * pair_covariance(g, h, tau)?;
        }
        return Ok(s);
    }
    if let FunctionSpec::ScaledSum { terms } = h {
        let mut s = 0.0;
        for (w, g) in terms {
            s += w * pair_covariance(f, g, tau)?;
        }
        return Ok(s);
    }

    match (bare_sing_kind(f), bare_sing_kind(h)) {
        (Some((k1, x)), Some((k2, y))) => closed_pair(k1, x, k2, y, tau),
        (Some((kind, center)), None) => sing_smooth_covariance(kind, center, h, tau),
        (None, Some((kind, center))) => sing_smooth_covariance(kind, center, f, tau),
        (None, None) => smooth_smooth_covariance(f, h, tau),
    }
}

fn sing_smooth_covariance(
    kind: SingKindAt,
    center: f64,
    g: &FunctionSpec,
    tau: f64,
) -> Result<f64> {
    if tau == 0.0 {
        // exact equal-time identities
        return match kind {
            SingKindAt::Log => {
                Ok(arcsine_mean(g)? / 2.0 - evaluate(g, center)? / 2.0)
            }
            SingKindAt::Arg => {
                let g1 = cheb_coeffs(g, 1)?.coeffs[1];
                let vg = v_transform(g, 0.0, center)?;
                Ok(g1 / 4.0 - (4.0 - center * center).sqrt() / 2.0 * vg)
            }
            SingKindAt::Jump => {
                let vg = v_transform(g, 0.0, center)?;
                Ok(-(4.0 - center * center).sqrt() / 2.0 * vg)
            }
        };
    }
    // tau > 0: analytic singular stream against the (decaying) smooth coeffs
    let series = adaptive_smooth_coeffs(g, tau)?;
    let theta = (center / 2.0).acos();
    let mut s = 0.0;
    for (n, cn) in series.coeffs.iter().enumerate().skip(1) {
        let nf = n as f64;
        s += 0.25 * nf * (-tau * nf / 2.0).exp() * sing_coeff(kind, theta, n as u32) * cn;
    }
    Ok(s)
}

fn smooth_smooth_covariance(f: &FunctionSpec, h: &FunctionSpec, tau: f64) -> Result<f64> {
    let cf = adaptive_smooth_coeffs(f, tau)?;
    let ch = adaptive_smooth_coeffs(h, tau)?;
    let len = cf.coeffs.len().min(ch.coeffs.len());
    let mut s = 0.0;
    for n in 1..len {
        let nf = n as f64;
        s += 0.25 * nf * (-tau * nf / 2.0).exp() * cf.coeffs[n] * ch.coeffs[n];
    }
    Ok(s)
}

fn adaptive_smooth_coeffs(g: &FunctionSpec, tau: f64) -> Result<ChebyshevSeries> {
    // polynomial kinds are finite: exact
    let finite = matches!(
        g,
        FunctionSpec::ChebFirst { .. } | FunctionSpec::ChebSecond { .. } | FunctionSpec::Series { .. }
    );
    if finite {
        let n_max = match g {
            FunctionSpec::ChebFirst { n } | FunctionSpec::ChebSecond { n } => *n as usize,
            FunctionSpec::Series { coeffs } => coeffs.len().saturating_sub(1),
            _ => unreachable!(),
        };
        return cheb_coeffs(g, n_max);
    }
    let mut n_max = 1024usize;
    loop {
        let series = cheb_coeffs(g, n_max)?;
        // term_n ~ n c_n^2 / 4 (or n c_n / n for mixed); require decayed tail
        let tail = series.tail_sup * n_max as f64 * (-tau * n_max as f64 / 2.0).exp();
        if tail < 1e-12 || series.tail_sup * (n_max as f64).powi(2) < 1e-5 {
            return Ok(series);
        }
        n_max *= 2;
        if n_max > 1 << 16 {
            return Err(Error::TailBound(
                "smooth covariance coefficients did not decay".into(),
            ));
        }
    }
}

// --- charges ---

/// A single space-time Fisher-Hartwig charge.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Singularity {
    pub t: f64,
    pub e: f64,
    pub gamma: f64,
    pub beta: f64,
}

/// Smooth component of a charge: a test function attached to a time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothComponent {
    pub t: f64,
    pub f: FunctionSpec,
}

/// A collection of space-time singularities plus smooth test functions.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Charge {
    #[serde(default)]
    pub singularities: Vec<Singularity>,
    #[serde(default)]
    pub smooth: Vec<SmoothComponent>,
}

impl Charge {
    pub fn single(t: f64, e: f64, gamma: f64, beta: f64) -> Self {
        Charge {
            singularities: vec![Singularity { t, e, gamma, beta }],
            smooth: Vec::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.singularities.is_empty() && self.smooth.is_empty()
    }

    /// Sorted list of distinct times carried by the charge.
    pub fn times(&self) -> Vec<f64> {
        let mut ts: Vec<f64> = self
            .singularities
            .iter()
            .map(|s| s.t)
            .chain(self.smooth.iter().map(|s| s.t))
            .collect();
        ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        ts.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
        ts
    }

    /// Minimum space-time separation between singular points.
    pub fn min_separation(&self) -> Option<f64> {
        let s = &self.singularities;
        let mut best: Option<f64> = None;
        for i in 0..s.len() {
            for j in (i + 1)..s.len() {
                let d = ((s[i].t - s[j].t).powi(2) + (s[i].e - s[j].e).powi(2)).sqrt();
                best = Some(best.map_or(d, |b: f64| b.min(d)));
            }
        }
        best
    }

    pub fn validate(&self) -> Result<()> {
        for s in &self.singularities {
            if !(s.gamma >= 0.0) {
                return Err(Error::InvalidInput(format!(
                    "charge gamma must be >= 0; got {}",
                    s.gamma
                )));
            }
            if !(s.e > -2.0 && s.e < 2.0) {
                return Err(Error::InvalidInput(format!(
                    "charge center must lie in (-2, 2); got {}",
                    s.e
                )));
            }
            if !(s.t >= 0.0) || !s.t.is_finite() {
                return Err(Error::InvalidInput(format!("bad charge time {}", s.t)));
            }
        }
        for c in &self.smooth {
            c.f.validate()?;
        }
        if let Some(d) = self.min_separation() {
            if d < 1e-14 {
                return Err(Error::Divergence(
                    "coincident singular space-time points".into(),
                ));
            }
        }
        Ok(())
    }
}

/// The covariance of the full charge with the singular self-pairs removed:
/// `C(sum f_i) + 2 C(sum f_i, sum sing_j) + sum_{j<k} 2 C(sing_j, sing_k)`.
pub fn charge_cross_covariance(charge: &Charge) -> Result<f64> {
    charge.validate()?;
    let sings = &charge.singularities;
    let smooth = &charge.smooth;
    let mut total = 0.0;

    // smooth x smooth (full square)
    for i in 0..smooth.len() {
        for j in 0..smooth.len() {
            total += covariance(&smooth[i].f, smooth[i].t, &smooth[j].f, smooth[j].t)?;
        }
    }
    // 2 x smooth x singular
    for c in smooth {
        for s in sings {
            let tau = (c.t - s.t).abs();
            if s.gamma != 0.0 {
                total +=
                    2.0 * s.gamma * sing_smooth_covariance(SingKindAt::Log, s.e, &c.f, tau)?;
            }
            if s.beta != 0.0 {
                total += 2.0 * s.beta * sing_smooth_covariance(SingKindAt::Arg, s.e, &c.f, tau)?;
            }
        }
    }
    // 2 x singular cross pairs (diagonal removed)
    for j in 0..sings.len() {
        for k in (j + 1)..sings.len() {
            let (a, b) = (&sings[j], &sings[k]);
            let tau = (a.t - b.t).abs();
            let mut pair = 0.0;
            if a.gamma != 0.0 && b.gamma != 0.0 {
                pair += a.gamma * b.gamma * closed_pair(SingKindAt::Log, a.e, SingKindAt::Log, b.e, tau)?;
            }
            if a.gamma != 0.0 && b.beta != 0.0 {
                pair += a.gamma * b.beta * closed_pair(SingKindAt::Log, a.e, SingKindAt::Arg, b.e, tau)?;
            }
            if a.beta != 0.0 && b.gamma != 0.0 {
                pair += a.beta * b.gamma * closed_pair(SingKindAt::Arg, a.e, SingKindAt::Log, b.e, tau)?;
            }
            if a.beta != 0.0 && b.beta != 0.0 {
                pair += a.beta * b.beta * closed_pair(SingKindAt::Arg, a.e, SingKindAt::Arg, b.e, tau)?;
            }
            total += 2.0 * pair;
        }
    }
    Ok(total)
}

// --- dyadic scale decomposition ---

/// Decompose a regularized singularity into dyadic scale pieces that sum back
/// to the original function. For `log_eps`:
/// `(log_eps - log_2eps) + (log_2eps - log_4eps) + ... + log_top`;
/// for a regularized jump the analogous chain with centers drifting by
/// `4^j eps` away from the transition side.
pub fn scale_decomposition(f: &FunctionSpec, top: f64) -> Result<Vec<(f64, FunctionSpec)>> {
    f.validate()?;
    if !(top > 0.0) {
        return Err(Error::InvalidInput(format!("top scale must be positive, got {top}")));
    }
    match f {
        FunctionSpec::LogSing { center, epsilon } if *epsilon > 0.0 => {
            let mut pieces = Vec::new();
            let mut eps = *epsilon;
            while eps < top {
                let diff = FunctionSpec::ScaledSum {
                    terms: vec![
                        (1.0, FunctionSpec::log_reg(*center, eps)),
                        (-1.0, FunctionSpec::log_reg(*center, 2.0 * eps)),
                    ],
                };
                pieces.push((eps, diff));
                eps *= 2.0;
            }
            pieces.push((eps, FunctionSpec::log_reg(*center, eps)));
            Ok(pieces)
        }
        FunctionSpec::JumpSing { center, epsilon, direction } if *epsilon > 0.0 => {
            let sign = match direction {
                Direction::Right => -1.0,
                Direction::Left => 1.0,
                Direction::None => {
                    return Err(Error::InvalidInput(
                        "regularized jump needs a direction".into(),
                    ))
                }
            };
            let piece_at = |j: u32| -> Result<FunctionSpec> {
                let eps_j = (1u64 << j) as f64 * epsilon;
                let shift = if j == 0 {
                    0.0
                } else {
                    sign * 4f64.powi(j as i32) * epsilon
                };
                let c = center + shift;
                if !(c > -2.0 && c < 2.0) {
                    return Err(Error::InvalidInput(format!(
                        "scale piece center {c} escapes (-2, 2); lower the top scale"
                    )));
                }
                Ok(FunctionSpec::JumpSing {
                    center: c,
                    epsilon: eps_j,
                    direction: *direction,
                })
            };
            let mut pieces = Vec::new();
            let mut j = 0u32;
            while (1u64 << j) as f64 * epsilon < top {
                let diff = FunctionSpec::ScaledSum {
                    terms: vec![(1.0, piece_at(j)?), (-1.0, piece_at(j + 1)?)],
                };
                pieces.push((4f64.powi(j as i32) * epsilon, diff));
                j += 1;
            }
            pieces.push((4f64.powi(j as i32) * epsilon, piece_at(j)?));
            Ok(pieces)
        }
        _ => Err(Error::InvalidInput(
            "scale decomposition applies to regularized log and jump kinds".into(),
        )),
    }
}
