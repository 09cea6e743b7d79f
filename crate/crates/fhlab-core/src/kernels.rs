//! Determinantal machinery: the Haar-unitary sine-type kernel, the exact
//! finite-N GUE kernel in Christoffel-Darboux form, the extended space-time
//! kernel of the stationary process with two evaluation strategies (direct
//! geometric truncation and Mehler subtraction), and Fredholm-determinant
//! Laplace transforms of local linear statistics.

use crate::error::{Error, Result};
use crate::quad::gauss_legendre;
use crate::specfun::{equilibrium_density, hermite_row, DensityKind, HermiteState};
use crate::transforms::{evaluate, FunctionSpec};
use nalgebra::DMatrix;
use std::f64::consts::PI;

/// Default tolerance for kernel tail truncation.
pub const KERNEL_TOL: f64 = 1e-9;

/// Sine-type kernel of Haar-unitary eigenangles,
/// `sin(N(x-y)/2) / (2 pi sin((x-y)/2))`, with the diagonal by continuity.
pub fn cue_kernel(x: f64, y: f64, n: u32) -> f64 {
    let d = (x - y) / 2.0;
    let s = d.sin();
    if s.abs() < 1e-12 {
        // ratio of derivatives at the removable singularity
        n as f64 * (n as f64 * d).cos() / (2.0 * PI * d.cos())
    } else {
        (n as f64 * d).sin() / (2.0 * PI * s)
    }
}

/// Exact finite-N GUE kernel `K(x, y) = sqrt(N) sum_{k<N} psi_k(x sqrt N) psi_k(y sqrt N)`,
/// evaluated in Christoffel-Darboux form away from the diagonal and by the
/// direct sum near it.
pub fn gue_kernel(x: f64, y: f64, n: usize) -> f64 {
    let sqn = (n as f64).sqrt();
    if (x - y).abs() < 1e-6 {
        let rx = hermite_row(n - 1, x * sqn);
        let ry = hermite_row(n - 1, y * sqn);
        let s: f64 = rx.iter().zip(&ry).map(|(a, b)| a * b).sum();
        return sqn * s;
    }
    let rx = hermite_row(n, x * sqn);
    let ry = hermite_row(n, y * sqn);
    sqn * (rx[n] * ry[n - 1] - rx[n - 1] * ry[n]) / (x - y)
}

/// Mehler closed form `sum_k u^k psi_k(x) psi_k(y)` for `u` in `(0, 1)`:
/// `exp(-(1-u)/(1+u) (x+y)^2/8 - (1+u)/(1-u) (x-y)^2/8) / sqrt(2 pi (1-u^2))`.
pub fn mehler_sum(u: f64, x: f64, y: f64) -> Result<f64> {
    if !(0.0 < u && u < 1.0) {
        return Err(Error::Domain(format!("Mehler sum needs u in (0,1), got {u}")));
    }
    let plus = (x + y) * (x + y) / 8.0;
    let minus = (x - y) * (x - y) / 8.0;
    let e = -(1.0 - u) / (1.0 + u) * plus - (1.0 + u) / (1.0 - u) * minus;
    Ok(e.exp() / (2.0 * PI * (1.0 - u * u)).sqrt())
}

/// Below this time gap the direct tail truncation is abandoned for the
/// Mehler-subtraction route (the gap enters as `e^{-k gap/2}` with `k ~ N^2`).
fn mehler_threshold(n: usize) -> f64 {
    1.0 / (n as f64 * n as f64)
}

/// Extended space-time kernel of the stationary eigenvalue process:
///
/// * `t <= s`: `e^{-(N-1/2)(s-t)/2} sqrt(N) sum_{k=0}^{N-1} e^{k(s-t)/2} psi_k psi_k`
/// * `t >  s`: `-e^{-(N-1/2)(s-t)/2} sqrt(N) sum_{k=N}^inf e^{k(s-t)/2} psi_k psi_k`
///
/// with `psi_k` evaluated at `x sqrt N`, `y sqrt N`. Equal times reduce to
/// the Christoffel-Darboux GUE kernel through the identical sum. For `t > s`
/// the geometric tail is truncated when its bound falls below `tol` relative
/// to the accumulated value; for gaps below `1/N^2` the Mehler-subtraction
/// route is used instead.
pub fn extended_kernel(t: f64, x: f64, s: f64, y: f64, n: usize, tol: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::Domain("matrix size must be positive".into()));
    }
    if t == s {
        return Ok(gue_kernel(x, y, n));
    }
    let sqn = (n as f64).sqrt();
    let (a, b) = (x * sqn, y * sqn);
    if t < s {
        // finite sum with per-term weight e^{-(N-k-1/2) tau / 2} <= 1
        let tau = s - t;
        let rx = hermite_row(n - 1, a);
        let ry = hermite_row(n - 1, b);
        let mut acc = 0.0;
        for k in 0..n {
            let w = (-(n as f64 - k as f64 - 0.5) * tau / 2.0).exp();
            acc += w * rx[k] * ry[k];
        }
        Ok(sqn * acc)
    } else {
        let gap = t - s;
        if gap < mehler_threshold(n) {
            extended_kernel_mehler(gap, a, b, n)
        } else {
            extended_kernel_tail(gap, a, b, n, tol)
        }
    }
}

/// Direct geometric truncation of the `k >= N` tail (gap = t - s > 0).
fn extended_kernel_tail(gap: f64, a: f64, b: f64, n: usize, tol: f64) -> Result<f64> {
    let sqn = (n as f64).sqrt();
    let q = (-gap / 2.0).exp();
    let mut sx = HermiteState::new(a);
    let mut sy = HermiteState::new(b);
    let mut acc = 0.0;
    let mut w = (-0.25 * gap).exp(); // weight at k = N: e^{-(k-N+1/2) gap/2}
    let mut recent_mag = 0.0f64;
    let max_k = n + ((60.0 / gap).ceil() as usize).max(4 * n) + 1_000_000;
    for k in 0..=max_k {
        if k >= n {
            let term = sx.current_value() * sy.current_value();
            acc += w * term;
            recent_mag = recent_mag.max(term.abs());
            // conservative tail bound from the running magnitude
            let bound = 2.0 * recent_mag.max(1e-12) * w * q / (1.0 - q);
            if k > n + 16 && bound < tol * acc.abs().max(tol) {
                return Ok(-sqn * acc);
            }
            w *= q;
        }
        sx.advance()?;
        sy.advance()?;
    }
    Err(Error::TruncationFailure(format!(
        "tail did not meet tolerance {tol} within {max_k} terms at gap {gap}"
    )))
}

/// Mehler-subtraction route: the full geometric sum in closed form minus the
/// finite `k < N` part (gap = t - s > 0, intended for submicroscopic gaps).
pub fn extended_kernel_mehler(gap: f64, a: f64, b: f64, n: usize) -> Result<f64> {
    let sqn = (n as f64).sqrt();
    let u = (-gap / 2.0).exp();
    let full = mehler_sum(u, a, b)?;
    let rx = hermite_row(n - 1, a);
    let ry = hermite_row(n - 1, b);
    let mut partial = 0.0;
    let mut uk = 1.0;
    for k in 0..n {
        partial += uk * rx[k] * ry[k];
        uk *= u;
    }
    let prefactor = ((n as f64 - 0.5) * gap / 2.0).exp();
    Ok(-sqn * prefactor * (full - partial))
}

// --- Fredholm determinants of local symbols ---

/// Discretized space-time kernel operator on Gauss-Legendre nodes over the
/// supports of the local symbols, scaled by the square roots of the weights.
#[derive(Clone, Debug)]
pub struct KernelGrid {
    pub times: Vec<f64>,
    /// (nodes, weights) per symbol.
    pub nodes: Vec<(Vec<f64>, Vec<f64>)>,
    /// Dense block matrix of `sqrt(w) k_i K k_j sqrt(w)` values.
    pub matrix: DMatrix<f64>,
}

/// Result of a Fredholm-determinant Laplace transform evaluation.
#[derive(Clone, Debug)]
pub struct FredholmResult {
    /// `log E prod_j e^{Tr f_j(H_{t_j})} = log det(1 - K)`.
    pub log_det: f64,
    /// Number of discrete eigenvalues clipped into the admissible range
    /// (single-time path only).
    pub clipped: usize,
    /// Set when more than 1% of the eigenvalues needed clipping.
    pub accuracy_warning: bool,
    /// Total number of quadrature nodes.
    pub n_nodes: usize,
}

fn symbol_support(f: &FunctionSpec) -> Result<(f64, f64)> {
    match f {
        FunctionSpec::Bump { center, epsilon } => Ok((center - 2.0 * epsilon, center + 2.0 * epsilon)),
        FunctionSpec::ScaledSum { terms } => {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for (_, t) in terms {
                let (a, b) = symbol_support(t)?;
                lo = lo.min(a);
                hi = hi.max(b);
            }
            Ok((lo, hi))
        }
        _ => Err(Error::InvalidInput(
            "Fredholm symbols must be compactly supported (bumps or sums of bumps)".into(),
        )),
    }
}

/// `log E[prod_j e^{Tr f_j(H_{t_j})}]` as `log det(1 - K)` for continuous,
/// nonpositive, compactly supported local symbols, via Nystrom discretization
/// with `nodes_per_symbol` Gauss-Legendre nodes per support.
///
/// The support of each symbol must be resolved by at least 8 nodes per
/// oscillation length `1/(N rho_sc)`; the single-time operator spectrum is
/// clipped to `[0, 1 - e^{min f}]` with clip events reported.
pub fn fredholm_log_laplace(
    symbols: &[(f64, FunctionSpec)],
    n: usize,
    nodes_per_symbol: usize,
    tol: f64,
) -> Result<FredholmResult> {
    if symbols.is_empty() {
        return Ok(FredholmResult { log_det: 0.0, clipped: 0, accuracy_warning: false, n_nodes: 0 });
    }
    let grid = assemble_kernel_grid(symbols, n, nodes_per_symbol, tol)?;
    let m = &grid.matrix;
    let dim = m.nrows();
    let single_time = symbols
        .iter()
        .all(|(t, _)| (*t - symbols[0].0).abs() < 1e-15);

    // min over nodes of the symbol values sets the admissible spectral range
    let mut min_f = 0.0f64;
    for ((_, f), (nodes, _)) in symbols.iter().zip(&grid.nodes) {
        for &x in nodes {
            let v = evaluate(f, x)?;
            if v > 1e-12 {
                return Err(Error::InvalidInput(format!(
                    "Fredholm symbol must be nonpositive; got f({x}) = {v}"
                )));
            }
            min_f = min_f.min(v);
        }
    }
    let lam_max = 1.0 - min_f.exp();

    if single_time {
        // symmetric PSD operator: eigen-decompose and clip
        let sym = DMatrix::from_fn(dim, dim, |i, j| 0.5 * (m[(i, j)] + m[(j, i)]));
        let eig = sym.symmetric_eigenvalues();
        let mut clipped = 0usize;
        let mut log_det = 0.0;
        for &l in eig.iter() {
            if !(-1e-8..=lam_max + 1e-8).contains(&l) {
                clipped += 1;
            }
            let lc = l.clamp(0.0, lam_max);
            log_det += (1.0 - lc).ln();
        }
        let accuracy_warning = clipped * 100 > dim;
        Ok(FredholmResult { log_det, clipped, accuracy_warning, n_nodes: dim })
    } else {
        let id = DMatrix::<f64>::identity(dim, dim);
        let det = (id - m).lu().determinant();
        if !(det > 0.0) {
            return Err(Error::TruncationFailure(format!(
                "nonpositive Fredholm determinant {det}; refine the discretization"
            )));
        }
        Ok(FredholmResult { log_det: det.ln(), clipped: 0, accuracy_warning: false, n_nodes: dim })
    }
}

/// Assemble the `sqrt(w) k K k sqrt(w)` block matrix for the given symbols.
pub fn assemble_kernel_grid(
    symbols: &[(f64, FunctionSpec)],
    n: usize,
    nodes_per_symbol: usize,
    tol: f64,
) -> Result<KernelGrid> {
    let mut nodes = Vec::with_capacity(symbols.len());
    for (_, f) in symbols {
        f.validate()?;
        let (lo, hi) = symbol_support(f)?;
        if lo < -2.0 || hi > 2.0 {
            return Err(Error::InvalidInput(format!(
                "symbol support [{lo}, {hi}] must stay inside (-2, 2)"
            )));
        }
        let center = 0.5 * (lo + hi);
        let needed =
            (8.0 * (hi - lo) * n as f64 * equilibrium_density(DensityKind::Semicircle, center))
                .ceil() as usize;
        if nodes_per_symbol < needed {
            return Err(Error::Resolution { got: nodes_per_symbol, needed });
        }
        nodes.push(gauss_legendre(nodes_per_symbol, lo, hi));
    }

    // sqrt(1 - e^f) sqrt(w) per node
    let mut scales: Vec<Vec<f64>> = Vec::with_capacity(symbols.len());
    for ((_, f), (xs, ws)) in symbols.iter().zip(&nodes) {
        let mut v = Vec::with_capacity(xs.len());
        for (x, w) in xs.iter().zip(ws) {
            let fx = evaluate(f, *x)?.min(0.0);
            v.push((1.0 - fx.exp()).max(0.0).sqrt() * w.sqrt());
        }
        scales.push(v);
    }

    let dim: usize = nodes.iter().map(|(x, _)| x.len()).sum();
    let mut matrix = DMatrix::<f64>::zeros(dim, dim);
    let mut row0 = 0;
    for i in 0..symbols.len() {
        let (xi, _) = &nodes[i];
        let mut col0 = 0;
        for j in 0..symbols.len() {
            let (xj, _) = &nodes[j];
            let block = kernel_block(symbols[i].0, xi, symbols[j].0, xj, n, tol)?;
            for (a, &x_scale) in scales[i].iter().enumerate() {
                for (b, &y_scale) in scales[j].iter().enumerate() {
                    matrix[(row0 + a, col0 + b)] = x_scale * block[(a, b)] * y_scale;
                }
            }
            col0 += xj.len();
        }
        row0 += xi.len();
    }
    Ok(KernelGrid {
        times: symbols.iter().map(|(t, _)| *t).collect(),
        nodes,
        matrix,
    })
}

/// Dense block of extended-kernel values between two node sets.
fn kernel_block(ti: f64, xs: &[f64], tj: f64, ys: &[f64], n: usize, tol: f64) -> Result<DMatrix<f64>> {
    let sqn = (n as f64).sqrt();
    if (ti - tj).abs() < 1e-15 || ti < tj {
        // k < N sum as a weighted Gram product of Hermite rows
        let tau = (tj - ti).max(0.0);
        let rows_x: Vec<Vec<f64>> = xs.iter().map(|&x| hermite_row(n - 1, x * sqn)).collect();
        let rows_y: Vec<Vec<f64>> = ys.iter().map(|&y| hermite_row(n - 1, y * sqn)).collect();
        let mut block = DMatrix::<f64>::zeros(xs.len(), ys.len());
        let weights: Vec<f64> = (0..n)
            .map(|k| (-(n as f64 - k as f64 - 0.5) * tau / 2.0).exp())
            .collect();
        for a in 0..xs.len() {
            for b in 0..ys.len() {
                let mut s = 0.0;
                for k in 0..n {
                    s += weights[k] * rows_x[a][k] * rows_y[b][k];
                }
                block[(a, b)] = sqn * s;
            }
        }
        Ok(block)
    } else {
        let mut block = DMatrix::<f64>::zeros(xs.len(), ys.len());
        for (a, &x) in xs.iter().enumerate() {
            for (b, &y) in ys.iter().enumerate() {
                block[(a, b)] = extended_kernel(ti, x, tj, y, n, tol)?;
            }
        }
        Ok(block)
    }
}

/// Export kernel values over a product grid as `(t, x, s, y, value)` CSV.
pub fn write_kernel_csv(
    path: &std::path::Path,
    pairs: &[(f64, f64, f64, f64)],
    n: usize,
    tol: f64,
) -> Result<()> {
    use std::io::Write;
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "t,x,s,y,value")?;
    for &(t, x, s, y) in pairs {
        let v = extended_kernel(t, x, s, y, n, tol)?;
        writeln!(f, "{t},{x},{s},{y},{v}")?;
    }
    f.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cue_kernel_reference_values() {
        let n = 20;
        assert!((cue_kernel(0.3, 0.3, n) - n as f64 / (2.0 * PI)).abs() < 1e-12);
        // zero at the first sine node
        let gap = 2.0 * PI / n as f64;
        assert!(cue_kernel(0.0, gap, n).abs() < 1e-12);
        // integral of the diagonal over the circle is N
        let v: f64 = (0..1000)
            .map(|i| {
                let x = 2.0 * PI * i as f64 / 1000.0;
                cue_kernel(x, x, n) * 2.0 * PI / 1000.0
            })
            .sum();
        assert!((v - n as f64).abs() < 1e-9);
    }

    #[test]
    fn gue_kernel_cd_matches_direct_sum() {
        let n = 50;
        let sqn = (n as f64).sqrt();
        for &(x, y) in &[(0.1, -0.4), (1.2, 1.1), (0.0, 0.5)] {
            let rx = hermite_row(n - 1, x * sqn);
            let ry = hermite_row(n - 1, y * sqn);
            let direct: f64 = sqn * rx.iter().zip(&ry).map(|(a, b)| a * b).sum::<f64>();
            let cd = gue_kernel(x, y, n);
            assert!((cd - direct).abs() < 1e-8 * direct.abs().max(1.0), "at ({x},{y})");
        }
    }

    #[test]
    fn gue_kernel_density_and_psd() {
        // one-point function: K(0,0)/N -> rho_sc(0) = 1/pi within 2% at N = 400
        let n = 400;
        let v = gue_kernel(0.0, 0.0, n) / n as f64;
        assert!((v - 1.0 / PI).abs() < 0.02 / PI, "{v}");

        // positive semidefiniteness of a sampled Gram block
        let pts: Vec<f64> = (0..12).map(|i| -1.4 + 2.8 * i as f64 / 11.0).collect();
        let g = DMatrix::<f64>::from_fn(12, 12, |i, j| gue_kernel(pts[i], pts[j], 60));
        let eigs = g.symmetric_eigenvalues();
        let min = eigs.iter().cloned().fold(f64::INFINITY, f64::min);
        let tr: f64 = eigs.iter().sum();
        assert!(min >= -1e-8 * tr.abs(), "min eigenvalue {min} of trace {tr}");
    }

    #[test]
    fn gue_kernel_bulk_asymptotic() {
        // leading sine form with x = 2 cos(omega), y = 2 cos(theta):
        // K = (sin(N(a_t - a_o)/2) / sin((o - t)/2)) / (4 pi sqrt(sin t sin o)) + O(1)
        let n = 400;
        let mut worst = 0.0f64;
        for i in 0..50 {
            let x = -1.0 + 2.0 * (i as f64 + 0.31) / 50.0;
            let y = x + 0.8 / n as f64 * (1.0 + i as f64 / 10.0);
            let omega = (x / 2.0f64).acos();
            let theta = (y / 2.0f64).acos();
            let a = |w: f64| (2.0 * w).sin() - 2.0 * w;
            let lead = ((n as f64 / 2.0) * (a(theta) - a(omega))).sin()
                / ((omega - theta) / 2.0).sin()
                / (4.0 * PI * (theta.sin() * omega.sin()).sqrt());
            let resid = (gue_kernel(x, y, n) - lead).abs();
            worst = worst.max(resid);
        }
        assert!(worst < 10.0, "bulk asymptotic residual {worst}");
    }

    #[test]
    fn gue_cue_local_match() {
        // |K_GUE(x,y) - 2 pi rho(E) K_CUE(2 pi rho(E) x, 2 pi rho(E) y)| = O(N^kappa)
        let n = 400usize;
        let kappa = 0.2;
        let e = 0.4f64;
        let alpha = 2.0 * PI * equilibrium_density(DensityKind::Semicircle, e);
        let eps = (n as f64).powf(-1.0 + kappa);
        let mut worst = 0.0f64;
        for i in 0..20 {
            for j in 0..20 {
                let x = e + eps * (-1.0 + 2.0 * i as f64 / 19.0);
                let y = e + eps * (-1.0 + 2.0 * j as f64 / 19.0);
                let diff =
                    (gue_kernel(x, y, n) - alpha * cue_kernel(alpha * x, alpha * y, n as u32)).abs();
                worst = worst.max(diff);
            }
        }
        let c = worst / (n as f64).powf(kappa);
        assert!(c < 10.0, "local match constant {c}");
    }

    #[test]
    fn mehler_identity_at_origin() {
        // sum_k u^k psi_k(0)^2 = 1/sqrt(2 pi (1 - u^2))
        for &u in &[0.1, 0.5, 0.9, 0.99] {
            let direct: f64 = {
                let row = hermite_row(4000, 0.0);
                let mut s = 0.0;
                let mut uk = 1.0;
                for v in row {
                    s += uk * v * v;
                    uk *= u;
                }
                s
            };
            let closed = mehler_sum(u, 0.0, 0.0).unwrap();
            assert!((direct - closed).abs() < 1e-8, "u = {u}: {direct} vs {closed}");
        }
    }

    #[test]
    fn extended_kernel_equal_times_is_gue() {
        let n = 60;
        for &(x, y) in &[(0.0, 0.0), (0.3, -0.2), (1.0, 1.05)] {
            let a = extended_kernel(0.7, x, 0.7, y, n, KERNEL_TOL).unwrap();
            let b = gue_kernel(x, y, n);
            assert!((a - b).abs() <= 1e-10 * b.abs().max(1.0));
        }
    }

    #[test]
    fn extended_kernel_routes_agree() {
        // direct truncation vs Mehler subtraction for t > s
        let n = 80;
        let sqn = (n as f64).sqrt();
        for &(gap, x, y) in &[
            (0.01, 0.2, 0.25),
            (0.005, -0.7, -0.68),
            (0.05, 1.0, 0.9),
            (0.002, 0.0, 0.3),
        ] {
            let direct = extended_kernel_tail(gap, x * sqn, y * sqn, n, 1e-11).unwrap();
            let mehler = extended_kernel_mehler(gap, x * sqn, y * sqn, n).unwrap();
            assert!(
                (direct - mehler).abs() <= 1e-6 * direct.abs().max(1.0),
                "gap {gap}: {direct} vs {mehler}"
            );
        }
    }

    #[test]
    fn extended_kernel_mehler_route_for_tiny_gaps() {
        // below 1/N^2 the Mehler route engages and stays finite
        let n = 50;
        let v = extended_kernel(1e-6, 0.2, 0.0, 0.21, n, KERNEL_TOL).unwrap();
        assert!(v.is_finite());
    }

    #[test]
    fn fredholm_zero_symbol_and_moment_inequality() {
        // f = 0 means det(I) = 1
        let zero = FunctionSpec::ScaledSum { terms: vec![(0.0, FunctionSpec::bump(0.0, 0.1))] };
        let r = fredholm_log_laplace(&[(0.0, zero)], 50, 64, KERNEL_TOL).unwrap();
        assert!(r.log_det.abs() < 1e-10, "{}", r.log_det);

        // a negative bump gives E e^{Tr f} in (0, 1): negative log
        let f = FunctionSpec::ScaledSum { terms: vec![(-1.0, FunctionSpec::bump(0.0, 0.4))] };
        let r = fredholm_log_laplace(&[(0.0, f)], 50, 224, KERNEL_TOL).unwrap();
        assert!(r.log_det < 0.0);
        assert!(!r.accuracy_warning);
    }

    #[test]
    fn fredholm_rejects_bad_symbols() {
        // positive symbol
        let f = FunctionSpec::ScaledSum { terms: vec![(1.0, FunctionSpec::bump(0.0, 0.2))] };
        assert!(fredholm_log_laplace(&[(0.0, f)], 50, 64, KERNEL_TOL).is_err());
        // unresolved support
        let g = FunctionSpec::ScaledSum { terms: vec![(-1.0, FunctionSpec::bump(0.0, 0.5))] };
        assert!(matches!(
            fredholm_log_laplace(&[(0.0, g)], 400, 8, KERNEL_TOL),
            Err(Error::Resolution { .. })
        ));
        // non-compact symbol
        let h = FunctionSpec::cheb_first(2);
        assert!(fredholm_log_laplace(&[(0.0, h)], 50, 64, KERNEL_TOL).is_err());
    }

    #[test]
    fn fredholm_quadrature_refinement_stability() {
        let f = FunctionSpec::ScaledSum { terms: vec![(-0.8, FunctionSpec::bump(0.1, 0.3))] };
        let a = fredholm_log_laplace(&[(0.0, f.clone())], 50, 160, KERNEL_TOL).unwrap();
        let b = fredholm_log_laplace(&[(0.0, f)], 50, 320, KERNEL_TOL).unwrap();
        assert!(
            (a.log_det - b.log_det).abs() < 1e-4,
            "{} vs {}",
            a.log_det,
            b.log_det
        );
    }

    #[test]
    fn fredholm_single_time_spectrum_range() {
        // discretized spectrum of the single-time operator lies in
        // [0, 1 - e^{min f}] up to clipping tolerance: no clip events expected
        let f = FunctionSpec::ScaledSum { terms: vec![(-2.0, FunctionSpec::bump(0.0, 0.3))] };
        let r = fredholm_log_laplace(&[(0.0, f)], 60, 192, KERNEL_TOL).unwrap();
        assert_eq!(r.clipped, 0);
    }

    #[test]
    fn fredholm_two_time_block_runs() {
        let f1 = FunctionSpec::ScaledSum { terms: vec![(-0.5, FunctionSpec::bump(-0.5, 0.25))] };
        let f2 = FunctionSpec::ScaledSum { terms: vec![(-0.5, FunctionSpec::bump(0.6, 0.25))] };
        let joint =
            fredholm_log_laplace(&[(0.0, f1.clone()), (1.0, f2.clone())], 40, 112, KERNEL_TOL)
                .unwrap();
        let s1 = fredholm_log_laplace(&[(0.0, f1)], 40, 112, KERNEL_TOL).unwrap();
        let s2 = fredholm_log_laplace(&[(0.0, f2)], 40, 112, KERNEL_TOL).unwrap();
        // far-separated symbols nearly factorize
        let gap = (joint.log_det - s1.log_det - s2.log_det).abs();
        assert!(gap < 0.05, "two-time factorization gap {gap}");
    }
}
