//! Scalar special functions used across the crate: Chebyshev polynomials
//! rescaled to `[-2, 2]`, the semicircle and arcsine equilibrium densities,
//! the semicircle Stieltjes transform and its characteristic flow in the
//! upper half-plane, orthonormal Hermite functions, the Barnes G-function,
//! and semicircle quantiles (typical eigenvalue locations).

use crate::error::{Error, Result};
use num_complex::Complex64;
use std::f64::consts::PI;

/// Chebyshev family selector: first kind `T~_n(x) = T_n(x/2)` or second kind
/// `U~_n(x) = U_n(x/2)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChebKind {
    First,
    Second,
}

/// Equilibrium density selector on `(-2, 2)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DensityKind {
    Semicircle,
    Arcsine,
}

/// Rescaled Chebyshev polynomial by the three-term recurrence
/// `p_{n+1}(x) = x p_n(x) - p_{n-1}(x)`, valid on all of R.
///
/// On `x = 2 cos(theta)` the first kind is `cos(n theta)` and the second kind
/// of index `n` is `sin((n+1) theta) / sin(theta)`.
pub fn chebyshev_eval(kind: ChebKind, n: u32, x: f64) -> f64 {
    let (mut prev, mut cur) = match kind {
        ChebKind::First => (1.0, x / 2.0),
        ChebKind::Second => (1.0, x),
    };
    if n == 0 {
        return prev;
    }
    for _ in 1..n {
        let next = x * cur - prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// First-kind value `T~_n(x)`.
pub fn cheb_t(n: u32, x: f64) -> f64 {
    chebyshev_eval(ChebKind::First, n, x)
}

/// Second-kind value `U~_n(x)`.
pub fn cheb_u(n: u32, x: f64) -> f64 {
    chebyshev_eval(ChebKind::Second, n, x)
}

/// Semicircle `sqrt(4-x^2)/(2 pi)` or arcsine `1/(pi sqrt(4-x^2))` density;
/// zero outside `(-2, 2)`.
pub fn equilibrium_density(kind: DensityKind, x: f64) -> f64 {
    if x.abs() >= 2.0 {
        return 0.0;
    }
    let s = (4.0 - x * x).sqrt();
    match kind {
        DensityKind::Semicircle => s / (2.0 * PI),
        DensityKind::Arcsine => 1.0 / (PI * s),
    }
}

/// Cumulative distribution function of the semicircle law.
pub fn semicircle_cdf(x: f64) -> f64 {
    if x <= -2.0 {
        0.0
    } else if x >= 2.0 {
        1.0
    } else {
        0.5 + (x * (4.0 - x * x).sqrt() + 4.0 * (x / 2.0).asin()) / (4.0 * PI)
    }
}

/// Branch of `sqrt(z^2 - 4)` as the product of principal square roots
/// `(z-2)^{1/2} (z+2)^{1/2}`. This is the branch for which the Stieltjes
/// transform below maps the upper half-plane to itself.
pub fn sqrt_z2_minus_4(z: Complex64) -> Complex64 {
    (z - 2.0).sqrt() * (z + 2.0).sqrt()
}

/// Stieltjes transform of the semicircle law, `m(z) = (sqrt(z^2-4) - z)/2`.
///
/// Errors on the branch cut `[-2, 2]` of the real axis.
pub fn stieltjes_semicircle(z: Complex64) -> Result<Complex64> {
    if z.im == 0.0 && z.re.abs() <= 2.0 {
        return Err(Error::Domain(format!(
            "stieltjes transform undefined on the cut [-2,2]; got z = {}",
            z.re
        )));
    }
    Ok((sqrt_z2_minus_4(z) - z) / 2.0)
}

/// Characteristic flow `z_t = (e^{t/2}(z + sqrt(z^2-4)) + e^{-t/2}(z - sqrt(z^2-4))) / 2`
/// transporting the Stieltjes transform: `m(z_t) = e^{-t/2} m(z)`.
pub fn characteristic_flow(z: Complex64, t: f64) -> Complex64 {
    let r = sqrt_z2_minus_4(z);
    let (ep, em) = ((t / 2.0).exp(), (-t / 2.0).exp());
    (ep * (z + r) + em * (z - r)) / 2.0
}

/// Largest degree accepted by [`hermite_fn`].
pub const MAX_HERMITE_DEGREE: u32 = 1_000_000;

/// Result of a single Hermite-function evaluation.
#[derive(Clone, Copy, Debug)]
pub struct HermiteEval {
    pub degree: u32,
    pub x: f64,
    pub value: f64,
    /// True when the forward recurrence needed multiplicative rescaling to
    /// avoid underflow in the exponentially small region.
    pub log_scale_applied: bool,
}

const RESCALE_THRESHOLD: f64 = 1e-280;
const RESCALE_FACTOR: f64 = 1e280;
const LN_RESCALE: f64 = 644.706_622_651_472_7; // ln(1e280)

/// Orthonormal Hermite function `psi_k(x) = He_k(x) e^{-x^2/4} / (sqrt(2 pi) k!)^{1/2}`
/// by the normalized forward recurrence
/// `psi_{k+1} = (x psi_k - sqrt(k) psi_{k-1}) / sqrt(k+1)`,
/// with on-the-fly rescaling when the value drifts below 1e-280.
pub fn hermite_fn(k: u32, x: f64) -> Result<HermiteEval> {
    if k > MAX_HERMITE_DEGREE {
        return Err(Error::Domain(format!(
            "hermite degree {k} exceeds configured maximum {MAX_HERMITE_DEGREE}"
        )));
    }
    let mut state = HermiteState::new(x);
    for _ in 0..k {
        state.advance()?;
    }
    Ok(HermiteEval {
        degree: k,
        x,
        value: state.current_value(),
        log_scale_applied: state.rescales > 0,
    })
}

/// Values `psi_0(x) .. psi_{k_max}(x)` in one forward pass.
pub fn hermite_row(k_max: usize, x: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(k_max + 1);
    let mut state = HermiteState::new(x);
    out.push(state.current_value());
    for _ in 0..k_max {
        // row evaluation stays in range by construction; unwrap is safe
        state.advance().expect("hermite rescale overflow");
        out.push(state.current_value());
    }
    out
}

/// Streaming Hermite recurrence with multiplicative rescaling. `psi_prev`
/// and `psi_cur` share a common factor `exp(log_scale)` that is folded back
/// in when a value is materialized.
pub(crate) struct HermiteState {
    x: f64,
    k: u32,
    psi_prev: f64,
    psi_cur: f64,
    log_scale: f64,
    rescales: u32,
}

impl HermiteState {
    pub(crate) fn new(x: f64) -> Self {
        // psi_0 = (2 pi)^{-1/4} e^{-x^2/4}; start in log form so large |x|
        // does not underflow before the oscillatory region is reached.
        let log_psi0 = -0.25 * (2.0 * PI).ln() - x * x / 4.0;
        let (psi0, log_scale) = if log_psi0 < RESCALE_THRESHOLD.ln() {
            (1.0, log_psi0)
        } else {
            (log_psi0.exp(), 0.0)
        };
        Self {
            x,
            k: 0,
            psi_prev: 0.0,
            psi_cur: psi0,
            log_scale,
            rescales: u32::from(log_scale != 0.0),
        }
    }

    /// Step k -> k+1.
    pub(crate) fn advance(&mut self) -> Result<()> {
        let k = self.k as f64;
        let next = (self.x * self.psi_cur - k.sqrt() * self.psi_prev) / (k + 1.0).sqrt();
        self.psi_prev = self.psi_cur;
        self.psi_cur = next;
        self.k += 1;
        let mag = self.psi_cur.abs().max(self.psi_prev.abs());
        if mag != 0.0 && mag < RESCALE_THRESHOLD {
            self.psi_prev *= RESCALE_FACTOR;
            self.psi_cur *= RESCALE_FACTOR;
            self.log_scale -= LN_RESCALE;
            self.rescales += 1;
        } else if mag > 1.0 / RESCALE_THRESHOLD {
            // mantissas climb back toward the oscillatory region; shed the
            // excess into the common log factor before they overflow
            self.psi_prev *= RESCALE_THRESHOLD;
            self.psi_cur *= RESCALE_THRESHOLD;
            self.log_scale += LN_RESCALE;
            self.rescales += 1;
        }
        if !self.log_scale.is_finite() {
            return Err(Error::Overflow {
                degree: self.k,
                x: self.x,
            });
        }
        Ok(())
    }

    /// Materialized value of `psi_k`; underflows to 0 when the true value is
    /// below the smallest positive double.
    pub(crate) fn current_value(&self) -> f64 {
        if self.log_scale == 0.0 {
            self.psi_cur
        } else if self.psi_cur == 0.0 {
            0.0
        } else {
            let l = self.log_scale + self.psi_cur.abs().ln();
            if l < -745.0 {
                0.0
            } else {
                self.psi_cur.signum() * l.exp()
            }
        }
    }
}

// --- log Gamma (Lanczos, g = 7, 9 coefficients) ---

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEFFS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// `ln Gamma(x)` for real `x > 0`.
pub fn log_gamma(x: f64) -> f64 {
    debug_assert!(x > 0.0, "log_gamma requires a positive argument");
    if x < 0.5 {
        // reflection: Gamma(x) Gamma(1-x) = pi / sin(pi x)
        return PI.ln() - (PI * x).sin().ln() - log_gamma(1.0 - x);
    }
    let z = x - 1.0;
    let mut acc = LANCZOS_COEFFS[0];
    for (i, c) in LANCZOS_COEFFS.iter().enumerate().skip(1) {
        acc += c / (z + i as f64);
    }
    let t = z + LANCZOS_G + 0.5;
    0.5 * (2.0 * PI).ln() + (z + 0.5) * t.ln() - t + acc.ln()
}

/// Principal `ln Gamma(z)` for complex `z` with `Re z > 0`.
pub fn log_gamma_complex(z: Complex64) -> Complex64 {
    debug_assert!(z.re > 0.0, "log_gamma_complex requires Re z > 0");
    let zm1 = z - 1.0;
    let mut acc = Complex64::new(LANCZOS_COEFFS[0], 0.0);
    for (i, c) in LANCZOS_COEFFS.iter().enumerate().skip(1) {
        acc += c / (zm1 + i as f64);
    }
    let t = zm1 + LANCZOS_G + 0.5;
    0.5 * (2.0 * PI).ln() + (zm1 + 0.5) * t.ln() - t + acc.ln()
}

// Asymptotic expansion of log G(1+z): correction coefficients
// B_{2k+2} / (4 k (k+1)) for k = 1..4, applied as c_k / z^{2k}.
const BARNES_ASYMP: [f64; 4] = [
    -1.0 / 240.0,  // B4 / 8
    1.0 / 1008.0,  // B6 / 24
    -1.0 / 1440.0, // B8 / 48
    1.0 / 1056.0,  // B10 / 80
];

/// zeta'(-1) = 1/12 - ln A with A the Glaisher-Kinkelin constant.
pub const ZETA_PRIME_MINUS_ONE: f64 = -0.165_421_143_700_450_9;

const BARNES_SHIFT_MIN: f64 = 10.0;

fn barnes_asymptotic(z: Complex64) -> Complex64 {
    let lz = z.ln();
    let mut v = z * z * (lz / 2.0 - 0.75) + z / 2.0 * (2.0 * PI).ln() - lz / 12.0
        + ZETA_PRIME_MINUS_ONE;
    let z2 = z * z;
    let mut p = z2;
    for c in BARNES_ASYMP {
        v += c / p;
        p *= z2;
    }
    v
}

/// `log G(1+z)` for real `z > -1`, where `G` is the Barnes G-function.
///
/// The argument is shifted upward through `G(1+z) = Gamma(z) G(z)` until the
/// Stirling-like asymptotic expansion applies.
pub fn log_barnes_g(z: f64) -> Result<f64> {
    if !(z > -1.0) {
        return Err(Error::Pole(format!(
            "log G(1+z) requires z > -1 on the real shift path; got z = {z}"
        )));
    }
    let mut shift = 0.0;
    let mut w = z;
    while w < BARNES_SHIFT_MIN {
        // log G(1+w) = log G(1+(w+1)) - log Gamma(w+1)
        shift -= log_gamma(w + 1.0);
        w += 1.0;
    }
    Ok(barnes_asymptotic(Complex64::new(w, 0.0)).re + shift)
}

/// `log G(1+z)` for complex `z` with `Re z > -1`; principal-branch shifts.
pub fn log_barnes_g_complex(z: Complex64) -> Result<Complex64> {
    if !(z.re > -1.0) {
        return Err(Error::Pole(format!(
            "log G(1+z) requires Re z > -1 on the shift path; got z = {z}"
        )));
    }
    let mut shift = Complex64::new(0.0, 0.0);
    let mut w = z;
    while w.re < BARNES_SHIFT_MIN {
        shift -= log_gamma_complex(w + 1.0);
        w += 1.0;
    }
    Ok(barnes_asymptotic(w) + shift)
}

/// `log |G(1 + a + ib)|^2 = 2 Re log G(1 + a + ib)`, the conjugate-pair
/// combination consumed by the moment formulas.
pub fn log_barnes_g_conj_pair(a: f64, b: f64) -> Result<f64> {
    Ok(2.0 * log_barnes_g_complex(Complex64::new(a, b))?.re)
}

/// Typical location `gamma_k` of the k-th eigenvalue out of N: the solution
/// of `semicircle_cdf(gamma_k) = k/N`, by bisection (monotone CDF).
pub fn typical_location(k: u32, n: u32) -> Result<f64> {
    if k < 1 || k > n {
        return Err(Error::Domain(format!(
            "typical_location requires 1 <= k <= N; got k = {k}, N = {n}"
        )));
    }
    if k == n {
        return Ok(2.0);
    }
    let target = k as f64 / n as f64;
    // seed interval around 2 cos(pi (1 - k/N)), then bisect
    let mut lo = -2.0;
    let mut hi = 2.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if semicircle_cdf(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let x = 0.5 * (lo + hi);
    debug_assert!((semicircle_cdf(x) - target).abs() <= 1e-12);
    Ok(x)
}
