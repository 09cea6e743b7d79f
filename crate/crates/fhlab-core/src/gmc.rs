//! The limiting field and its multiplicative-chaos measures: exact sampling
//! of the Chebyshev-coefficient OU processes, the truncated log-correlated
//! field on the time-energy strip, the chaos approximant built from it, and
//! the matrix-side empirical measures normalized by predicted or Monte Carlo
//! moments.

use crate::dynamics::{linear_statistic, McEstimate, TrajectoryEnsemble};
use crate::error::{Error, Result};
use crate::predictor::predict_joint;
use crate::rng::StreamFactory;
use crate::specfun::{cheb_t, cheb_u};
use crate::transforms::{Charge, FunctionSpec, Singularity, SmoothComponent};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write as _;

/// One realization of the truncated field on a product grid.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FieldSample {
    /// Truncation order: number of coefficient processes.
    pub m: usize,
    pub t_grid: Vec<f64>,
    pub x_grid: Vec<f64>,
    /// `values[i][j]` is the field at `(t_grid[i], x_grid[j])`.
    pub values: Vec<Vec<f64>>,
    pub seed: u64,
}

/// Exact stationary AR(1) paths of the coefficient processes: process `n`
/// (1-based) is sampled at the scaled times `n * t_grid` with transition
/// `A' = e^{-d/2} A + sqrt(1 - e^{-d}) xi`. Unit stationary variance,
/// autocorrelation `e^{-d/2}` over a scaled gap `d`.
pub fn coefficient_paths(
    m: usize,
    t_grid: &[f64],
    factory: &StreamFactory,
    sample: u64,
) -> Result<Vec<Vec<f64>>> {
    if m == 0 || m >= (1 << 16) {
        return Err(Error::InvalidInput(format!("truncation order {m} out of range")));
    }
    if t_grid.is_empty() || t_grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidInput("time grid must be nonempty and sorted".into()));
    }
    let normal = StandardNormal;
    let mut out = Vec::with_capacity(m);
    for n in 1..=m {
        let mut rng = factory.stream(sample, n as u32);
        let mut path = Vec::with_capacity(t_grid.len());
        let mut a: f64 = normal.sample(&mut rng);
        path.push(a);
        for w in t_grid.windows(2) {
            let d = n as f64 * (w[1] - w[0]);
            let xi: f64 = normal.sample(&mut rng);
            a = (-d / 2.0).exp() * a + (1.0 - (-d).exp()).sqrt() * xi;
            path.push(a);
        }
        out.push(path);
    }
    Ok(out)
}

/// Truncated field `G_M(t, x) = sum_{n<=M} T~_n(x) / sqrt(n) * A_n(n t)`.
pub fn sample_field(
    m: usize,
    t_grid: &[f64],
    x_grid: &[f64],
    factory: &StreamFactory,
    sample: u64,
) -> Result<FieldSample> {
    let paths = coefficient_paths(m, t_grid, factory, sample)?;
    // basis values T~_n(x)/sqrt(n) per (n, x)
    let basis: Vec<Vec<f64>> = (1..=m)
        .map(|n| {
            x_grid
                .iter()
                .map(|&x| cheb_t(n as u32, x) / (n as f64).sqrt())
                .collect()
        })
        .collect();
    let values = (0..t_grid.len())
        .map(|i| {
            (0..x_grid.len())
                .map(|j| (0..m).map(|k| basis[k][j] * paths[k][i]).sum())
                .collect()
        })
        .collect();
    Ok(FieldSample {
        m,
        t_grid: t_grid.to_vec(),
        x_grid: x_grid.to_vec(),
        values,
        seed: factory.master(),
    })
}

/// Truncated pointwise variance `Var_M(x) = sum_{n<=M} T~_n(x)^2 / n`.
pub fn field_variance(m: usize, x: f64) -> f64 {
    (1..=m)
        .map(|n| {
            let t = cheb_t(n as u32, x);
            t * t / n as f64
        })
        .sum()
}

/// Truncated covariance `sum_{n<=M} T~_n(x) T~_n(y) e^{-n |t-s| / 2} / n`.
pub fn field_covariance(m: usize, t: f64, x: f64, s: f64, y: f64) -> f64 {
    let tau = (t - s).abs();
    (1..=m)
        .map(|n| {
            let nf = n as f64;
            cheb_t(n as u32, x) * cheb_t(n as u32, y) * (-tau * nf / 2.0).exp() / nf
        })
        .sum()
}

/// The jump-field analogue with second-kind basis:
/// `(sqrt(4-x^2)/2)(sqrt(4-y^2)/2) sum U~_{n-1}(x) U~_{n-1}(y) e^{-n tau/2} / n`.
pub fn jump_field_covariance(m: usize, t: f64, x: f64, s: f64, y: f64) -> f64 {
    let tau = (t - s).abs();
    let w = (4.0 - x * x).sqrt() / 2.0 * (4.0 - y * y).sqrt() / 2.0;
    w * (1..=m)
        .map(|n| {
            let nf = n as f64;
            cheb_u(n as u32 - 1, x) * cheb_u(n as u32 - 1, y) * (-tau * nf / 2.0).exp() / nf
        })
        .sum::<f64>()
}

/// Chaos-measure approximant applied to a grid test function:
/// Riemann sum of `psi * exp(gamma G_M - gamma^2/2 Var_M)` over the field's
/// grid. `gamma` beyond the subcritical range `[0, 2 sqrt 2)` is allowed for
/// exploration but flagged in the return value.
pub struct ChaosValue {
    pub value: f64,
    pub supercritical: bool,
}

pub fn chaos_measure(field: &FieldSample, gamma: f64, psi: impl Fn(f64, f64) -> f64) -> ChaosValue {
    let ht = grid_step(&field.t_grid);
    let hx = grid_step(&field.x_grid);
    let var: Vec<f64> = field.x_grid.iter().map(|&x| field_variance(field.m, x)).collect();
    let mut s = 0.0;
    for (i, &t) in field.t_grid.iter().enumerate() {
        for (j, &x) in field.x_grid.iter().enumerate() {
            let g = field.values[i][j];
            s += psi(t, x) * (gamma * g - gamma * gamma / 2.0 * var[j]).exp();
        }
    }
    ChaosValue {
        value: s * ht * hx,
        supercritical: !(0.0..2.0 * 2f64.sqrt()).contains(&gamma),
    }
}

fn grid_step(g: &[f64]) -> f64 {
    if g.len() < 2 {
        1.0
    } else {
        (g[g.len() - 1] - g[0]) / (g.len() - 1) as f64
    }
}

/// Which matrix-side empirical measure to form.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChaosKind {
    /// `|det(H_t - x)|^gamma / E[...]`.
    Root { gamma: f64 },
    /// `e^{beta Tr Xi^x(H_t)} / E[...]`.
    Jump { beta: f64 },
}

/// Normalization source for the denominator `E[...]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Closed-form prediction (fast; asymptotically exact).
    Predictor,
    /// Dedicated Monte Carlo run with the given sample count (unbiased).
    Mc { n_samples: u64 },
}

/// The exponent statistic of the chosen measure kind at center `x`.
fn kind_exponent(kind: ChaosKind, eigs: &[f64], x: f64) -> Result<f64> {
    match kind {
        ChaosKind::Root { gamma } => {
            Ok(gamma * linear_statistic(eigs, &FunctionSpec::log_sing(x), false)?)
        }
        ChaosKind::Jump { beta } => {
            Ok(beta * linear_statistic(eigs, &FunctionSpec::jump_sing(x), false)?)
        }
    }
}

/// The charge whose joint moment is `E[e^{exponent}]` for the measure kind.
fn kind_charge(kind: ChaosKind, x: f64, t: f64) -> Charge {
    match kind {
        ChaosKind::Root { gamma } => Charge::single(t, x, gamma, 0.0),
        ChaosKind::Jump { beta } => Charge {
            // beta Tr Xi^x = beta Tr arg^x + Tr(beta x/2 - beta T~_1)
            singularities: vec![Singularity { t, e: x, gamma: 0.0, beta }],
            smooth: vec![SmoothComponent {
                t,
                f: FunctionSpec::Series { coeffs: vec![beta * x / 2.0, -beta] },
            }],
        },
    }
}

/// Per-trajectory values of the normalized empirical measure applied to a
/// grid test function `psi` supported inside the bulk:
/// `mu(psi) = sum_{t,x} psi(t,x) e^{X(t,x)} / E e^{X(t,x)} * dt dx`.
pub fn empirical_chaos_samples(
    ensemble: &TrajectoryEnsemble,
    kind: ChaosKind,
    x_grid: &[f64],
    psi: impl Fn(f64, f64) -> f64 + Sync,
    normalization: Normalization,
) -> Result<Vec<f64>> {
    if x_grid.iter().any(|x| x.abs() >= 2.0) {
        return Err(Error::InvalidInput(
            "empirical measure grid must stay inside (-2, 2)".into(),
        ));
    }
    let n = ensemble.n;
    // log-denominator per grid center (stationarity: time independent)
    let log_denom: Vec<f64> = match normalization {
        Normalization::Predictor => x_grid
            .iter()
            .map(|&x| Ok(predict_joint(&kind_charge(kind, x, 0.0), n as u32)?.total(n as u32)))
            .collect::<Result<Vec<_>>>()?,
        Normalization::Mc { n_samples } => {
            let factory = StreamFactory::new(ensemble.seed).child(0x6e6f726d);
            let charges: Vec<Charge> = x_grid.iter().map(|&x| kind_charge(kind, x, 0.0)).collect();
            crate::dynamics::log_moments_batch(&charges, n, n_samples, factory.master())?
                .into_iter()
                .map(|e| e.mean)
                .collect()
        }
    };

    let ht = grid_step(&ensemble.times);
    let hx = grid_step(x_grid);
    let values: Vec<f64> = ensemble
        .spectra
        .par_iter()
        .map(|traj| -> Result<f64> {
            let mut s = 0.0;
            for (i, &t) in ensemble.times.iter().enumerate() {
                for (j, &x) in x_grid.iter().enumerate() {
                    let w = psi(t, x);
                    if w == 0.0 {
                        continue;
                    }
                    let e = kind_exponent(kind, &traj[i], x)?;
                    s += w * (e - log_denom[j]).exp();
                }
            }
            Ok(s * ht * hx)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(values)
}

/// Plain mean/stderr summary of per-replica scalar values via batch means.
pub fn summarize_samples(values: &[f64]) -> McEstimate {
    let m = values.len();
    let b = if m >= 100 { 20 } else { m.clamp(1, 10) };
    let mut batch_means = Vec::with_capacity(b);
    for batch in 0..b {
        let lo = m * batch / b;
        let hi = m * (batch + 1) / b;
        let bm = values[lo..hi].iter().sum::<f64>() / (hi - lo).max(1) as f64;
        batch_means.push(bm);
    }
    let mean = values.iter().sum::<f64>() / m.max(1) as f64;
    let bmean = batch_means.iter().sum::<f64>() / b as f64;
    let var = if b > 1 {
        batch_means.iter().map(|v| (v - bmean).powi(2)).sum::<f64>() / (b - 1) as f64
    } else {
        f64::NAN
    };
    McEstimate {
        mean,
        stderr: (var / b as f64).sqrt(),
        n_samples: m as u64,
        n_batches: b,
        ess: m as f64,
        batch_means,
        warnings: Vec::new(),
    }
}

/// Sample variance of per-replica values.
pub fn sample_variance(values: &[f64]) -> f64 {
    let m = values.len();
    let mean = values.iter().sum::<f64>() / m as f64;
    values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1) as f64
}

/// Export a field sample as `(t, x, value)` CSV rows.
pub fn write_field_csv(field: &FieldSample, path: &std::path::Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "t,x,value")?;
    for (i, &t) in field.t_grid.iter().enumerate() {
        for (j, &x) in field.x_grid.iter().enumerate() {
            writeln!(f, "{t},{x},{}", field.values[i][j])?;
        }
    }
    f.flush()?;
    Ok(())
}
