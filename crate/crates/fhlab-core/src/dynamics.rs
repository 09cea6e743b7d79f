//! Exact sampling and measurement of the stationary Hermitian OU process:
//! GUE draws, the closed-form Gaussian transition between times, spectra,
//! linear statistics, Monte Carlo joint moments with reproducible batch
//! means, self-normalized reweighted expectations, rigidity diagnostics, and
//! Haar-unitary reference sampling.

use crate::error::{Error, Result};
use crate::rng::{StreamFactory, PHASE_INITIAL, PHASE_TRANSITION_BASE};
use crate::specfun::{equilibrium_density, stieltjes_semicircle, typical_location, DensityKind};
use crate::transforms::{evaluate, semicircle_mean, Charge, FunctionSpec};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write as _;

pub const SAMPLER_VERSION: &str = "ou-exact-1";

/// Dense Hermitian matrix; Hermiticity holds bit-exactly by construction.
#[derive(Clone, Debug)]
pub struct HermitianMatrix {
    mat: DMatrix<Complex64>,
}

impl HermitianMatrix {
    pub fn dimension(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.mat
    }

    pub fn trace_re(&self) -> f64 {
        (0..self.mat.nrows()).map(|i| self.mat[(i, i)].re).sum()
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.mat.iter().map(|c| c.norm_sqr()).sum()
    }

    fn bit_hash(&self) -> u64 {
        let mut h = 0xcbf2_9ce4_8422_2325u64;
        for c in self.mat.iter() {
            for bits in [c.re.to_bits(), c.im.to_bits()] {
                h ^= bits;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        h
    }
}

/// GUE draw with entry variances 1/N (diagonal) and 1/(2N) per real part
/// (off-diagonal), so that `E Tr H^2 = N`.
pub fn sample_gue(n: usize, rng: &mut impl Rng) -> HermitianMatrix {
    let normal = StandardNormal;
    let mut mat = DMatrix::<Complex64>::zeros(n, n);
    let diag_sd = 1.0 / (n as f64).sqrt();
    let off_sd = 1.0 / (2.0 * n as f64).sqrt();
    for i in 0..n {
        let d: f64 = normal.sample(rng);
        mat[(i, i)] = Complex64::new(d * diag_sd, 0.0);
        for j in (i + 1)..n {
            let re: f64 = normal.sample(rng);
            let im: f64 = normal.sample(rng);
            let c = Complex64::new(re * off_sd, im * off_sd);
            mat[(i, j)] = c;
            mat[(j, i)] = c.conj();
        }
    }
    HermitianMatrix { mat }
}

/// Exact OU transition over a time step: `H' = e^{-dt/2} H + sqrt(1 - e^{-dt}) G`
/// with `G` an independent GUE draw. The stationary marginal is preserved
/// without discretization error.
pub fn evolve_ou(h: &HermitianMatrix, dt: f64, rng: &mut impl Rng) -> Result<HermitianMatrix> {
    if dt < 0.0 {
        return Err(Error::Domain(format!("time step must be >= 0, got {dt}")));
    }
    if dt == 0.0 {
        return Ok(h.clone());
    }
    let n = h.dimension();
    let decay = (-dt / 2.0).exp();
    let innov = (1.0 - (-dt).exp()).sqrt();
    let g = sample_gue(n, rng);
    let mat = h.mat.map(|c| c * decay) + g.mat.map(|c| c * innov);
    Ok(HermitianMatrix { mat })
}

/// Sorted eigenvalues with a cheap spectral-identity verification
/// (`sum lambda` vs trace and `sum lambda^2` vs squared Frobenius norm).
pub fn spectrum(h: &HermitianMatrix) -> Result<Vec<f64>> {
    let eig = h.mat.symmetric_eigenvalues();
    let mut lambda: Vec<f64> = eig.iter().copied().collect();
    lambda.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let tr = h.trace_re();
    let fr = h.frobenius_sq();
    let s1: f64 = lambda.iter().sum();
    let s2: f64 = lambda.iter().map(|l| l * l).sum();
    let scale1 = tr.abs().max(1.0);
    let scale2 = fr.abs().max(1.0);
    let resid = ((s1 - tr).abs() / scale1).max((s2 - fr).abs() / scale2);
    if resid > 1e-9 {
        return Err(Error::EigenFailed {
            matrix_hash: h.bit_hash(),
            residual: resid,
        });
    }
    Ok(lambda)
}

/// Sorted eigenvalue paths of one realization of the process.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EigenTrajectory {
    pub n: usize,
    pub times: Vec<f64>,
    /// `eigenvalues[k]` is the sorted spectrum at `times[k]`.
    pub eigenvalues: Vec<Vec<f64>>,
    pub seed: u64,
    pub sampler_version: String,
}

/// Spectra of one trajectory at the given sorted times, with randomness tied
/// to `(factory, sample_index)` so reruns are bit-identical.
pub fn sample_trajectory(
    n: usize,
    times: &[f64],
    factory: &StreamFactory,
    sample_index: u64,
) -> Result<EigenTrajectory> {
    if times.is_empty() {
        return Err(Error::InvalidInput("trajectory needs at least one time".into()));
    }
    if times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidInput("trajectory times must be sorted".into()));
    }
    let mut rng = factory.stream(sample_index, PHASE_INITIAL);
    let mut h = sample_gue(n, &mut rng);
    let mut eigenvalues = Vec::with_capacity(times.len());
    eigenvalues.push(spectrum(&h)?);
    for (k, pair) in times.windows(2).enumerate() {
        let mut rng = factory.stream(sample_index, PHASE_TRANSITION_BASE + k as u32);
        h = evolve_ou(&h, pair[1] - pair[0], &mut rng)?;
        eigenvalues.push(spectrum(&h)?);
    }
    Ok(EigenTrajectory {
        n,
        times: times.to_vec(),
        eigenvalues,
        seed: factory.master(),
        sampler_version: SAMPLER_VERSION.into(),
    })
}

/// Linear statistic `sum_i f(lambda_i)`, centered by `N int f rho_sc` when
/// requested. Unregularized log summands error out when an eigenvalue sits
/// closer than 1e-300 to the center.
pub fn linear_statistic(eigs: &[f64], f: &FunctionSpec, centered: bool) -> Result<f64> {
    let mut s = trace_sum(eigs, f)?;
    if centered {
        s -= eigs.len() as f64 * semicircle_mean(f)?;
    }
    Ok(s)
}

fn trace_sum(eigs: &[f64], f: &FunctionSpec) -> Result<f64> {
    match f {
        FunctionSpec::LogSing { center, epsilon } if *epsilon == 0.0 => {
            let mut s = 0.0;
            for &l in eigs {
                let gap = (l - center).abs();
                if gap < 1e-300 {
                    return Err(Error::Underflow { gap });
                }
                s += gap.ln();
            }
            Ok(s)
        }
        FunctionSpec::ScaledSum { terms } => {
            let mut s = 0.0;
            for (w, g) in terms {
                s += w * trace_sum(eigs, g)?;
            }
            Ok(s)
        }
        _ => {
            let mut s = 0.0;
            for &l in eigs {
                s += evaluate(f, l)?;
            }
            Ok(s)
        }
    }
}

/// Monte Carlo estimate with batch means. For log-moment estimates the mean
/// and batch means live on the log scale and the standard error comes from
/// the delta method.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_samples: u64,
    pub n_batches: usize,
    /// Effective sample size (equals `n_samples` for unweighted estimates).
    pub ess: f64,
    /// Per-batch means (log-scale for log-moment estimates).
    pub batch_means: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

fn batch_count(n_samples: u64) -> usize {
    if n_samples >= 2_000 {
        50
    } else if n_samples >= 100 {
        20
    } else {
        n_samples.clamp(1, 10) as usize
    }
}

/// Excess-kurtosis threshold above which heavy-tail warnings fire.
pub const KURTOSIS_WARN: f64 = 6.0;

struct LogSumAcc {
    max: f64,
    sum: f64,
    count: u64,
}

impl LogSumAcc {
    fn new() -> Self {
        Self { max: f64::NEG_INFINITY, sum: 0.0, count: 0 }
    }

    fn push(&mut self, x: f64) {
        self.count += 1;
        if x <= self.max {
            self.sum += (x - self.max).exp();
        } else {
            self.sum = self.sum * (self.max - x).exp() + 1.0;
            self.max = x;
        }
    }

    /// log of the mean of `e^x` over the pushed values.
    fn log_mean(&self) -> f64 {
        if self.count == 0 {
            f64::NEG_INFINITY
        } else {
            self.max + (self.sum / self.count as f64).ln()
        }
    }
}

/// The exponent `X = sum_j (gamma_j Tr log^{E_j} + beta_j Tr arg^{E_j})(H_{t_j})
/// + sum_i Tr f_i(H_{s_i})` of a charge on one trajectory.
pub fn charge_exponent(charge: &Charge, traj_times: &[f64], spectra: &[Vec<f64>]) -> Result<f64> {
    let mut x = 0.0;
    for s in &charge.singularities {
        let k = time_index(traj_times, s.t)?;
        let eigs = &spectra[k];
        if s.gamma != 0.0 {
            x += s.gamma * trace_sum(eigs, &FunctionSpec::log_sing(s.e))?;
        }
        if s.beta != 0.0 {
            x += s.beta * trace_sum(eigs, &FunctionSpec::arg_sing(s.e))?;
        }
    }
    for c in &charge.smooth {
        let k = time_index(traj_times, c.t)?;
        x += trace_sum(&spectra[k], &c.f)?;
    }
    Ok(x)
}

fn time_index(times: &[f64], t: f64) -> Result<usize> {
    times
        .iter()
        .position(|&u| (u - t).abs() < 1e-12)
        .ok_or_else(|| Error::InvalidInput(format!("time {t} not on the sampled grid {times:?}")))
}

/// Monte Carlo estimates of `log E[exp(X_c)]` for several charges sharing one
/// time grid, from a single ensemble of trajectories. Deterministic in
/// `(seed, n, n_samples)` regardless of worker count: batches own contiguous
/// sample ranges with counter-derived streams and are merged in index order.
pub fn log_moments_batch(
    charges: &[Charge],
    n: usize,
    n_samples: u64,
    seed: u64,
) -> Result<Vec<McEstimate>> {
    if charges.is_empty() {
        return Ok(Vec::new());
    }
    for c in charges {
        c.validate()?;
    }
    let mut times: Vec<f64> = charges.iter().flat_map(|c| c.times()).collect();
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    times.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    if times.is_empty() {
        // all charges empty: log E[e^0] = 0 exactly
        return Ok(charges
            .iter()
            .map(|_| McEstimate {
                mean: 0.0,
                stderr: 0.0,
                n_samples,
                n_batches: 0,
                ess: n_samples as f64,
                batch_means: Vec::new(),
                warnings: Vec::new(),
            })
            .collect());
    }

    let b = batch_count(n_samples);
    let factory = StreamFactory::new(seed);
    let per_charge_batches: Vec<Vec<f64>> = (0..b)
        .into_par_iter()
        .map(|batch| -> Result<Vec<f64>> {
            let lo = n_samples * batch as u64 / b as u64;
            let hi = n_samples * (batch as u64 + 1) / b as u64;
            let mut accs: Vec<LogSumAcc> = charges.iter().map(|_| LogSumAcc::new()).collect();
            for sample in lo..hi {
                let traj = sample_trajectory(n, &times, &factory, sample)?;
                for (c, acc) in charges.iter().zip(accs.iter_mut()) {
                    acc.push(charge_exponent(c, &times, &traj.eigenvalues)?);
                }
            }
            Ok(accs.iter().map(|a| a.log_mean()).collect())
        })
        .collect::<Result<Vec<_>>>()?;

    let mut out = Vec::with_capacity(charges.len());
    for ci in 0..charges.len() {
        let batch_means: Vec<f64> = per_charge_batches.iter().map(|v| v[ci]).collect();
        out.push(combine_log_batches(&batch_means, n_samples));
    }
    Ok(out)
}

/// Combine per-batch log-means into a log-moment estimate with a delta-method
/// standard error from the batch scatter.
pub fn combine_log_batches(batch_log_means: &[f64], n_samples: u64) -> McEstimate {
    let b = batch_log_means.len();
    let shift = batch_log_means.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    let vals: Vec<f64> = batch_log_means.iter().map(|&x| (x - shift).exp()).collect();
    let mean_v: f64 = vals.iter().sum::<f64>() / b as f64;
    let log_mean = shift + mean_v.ln();
    let mut warnings = Vec::new();
    let stderr = if b > 1 {
        let var: f64 = vals.iter().map(|v| (v - mean_v).powi(2)).sum::<f64>() / (b - 1) as f64;
        let sd = var.sqrt();
        // excess kurtosis of the batch means
        if var > 0.0 {
            let m4: f64 = vals.iter().map(|v| (v - mean_v).powi(4)).sum::<f64>() / b as f64;
            let kurt = m4 / var.powi(2) - 3.0;
            if kurt > KURTOSIS_WARN {
                warnings.push(format!(
                    "heavy-tailed batch means: excess kurtosis {kurt:.1} (large charges inflate variance)"
                ));
            }
        }
        sd / (b as f64).sqrt() / mean_v
    } else {
        f64::INFINITY
    };
    McEstimate {
        mean: log_mean,
        stderr,
        n_samples,
        n_batches: b,
        ess: n_samples as f64,
        batch_means: batch_log_means.to_vec(),
        warnings,
    }
}

/// Monte Carlo estimate of the joint log-moment of a single charge.
pub fn mc_joint_moment(charge: &Charge, n: usize, n_samples: u64, seed: u64) -> Result<McEstimate> {
    Ok(log_moments_batch(std::slice::from_ref(charge), n, n_samples, seed)?
        .pop()
        .expect("one estimate per charge"))
}

/// An ensemble of independently sampled trajectories on a common time grid.
#[derive(Clone, Debug)]
pub struct TrajectoryEnsemble {
    pub n: usize,
    pub times: Vec<f64>,
    /// `spectra[sample][time_index]` is a sorted spectrum.
    pub spectra: Vec<Vec<Vec<f64>>>,
    pub seed: u64,
}

pub fn sample_ensemble(
    n: usize,
    times: &[f64],
    n_samples: u64,
    seed: u64,
) -> Result<TrajectoryEnsemble> {
    let factory = StreamFactory::new(seed);
    let spectra: Vec<Vec<Vec<f64>>> = (0..n_samples)
        .into_par_iter()
        .map(|sample| sample_trajectory(n, times, &factory, sample).map(|t| t.eigenvalues))
        .collect::<Result<Vec<_>>>()?;
    Ok(TrajectoryEnsemble { n, times: times.to_vec(), spectra, seed })
}

/// Minimum effective sample size below which reweighted estimates error out.
pub const MIN_ESS: f64 = 100.0;

/// Self-normalized importance-sampling estimate of the biased-measure mean
/// `E_bias[S_N(f(H_t))] = sum_i S_N(f) w_i / sum_i w_i` with
/// `w = exp(sum_k S_N(h_k(H_{t_k})))` along each trajectory.
///
/// The bias must be built from bounded (smooth or regularized) components.
pub fn reweighted_expectation(
    ensemble: &TrajectoryEnsemble,
    bias: &Charge,
    observable: &FunctionSpec,
    observable_time: f64,
) -> Result<McEstimate> {
    if !bias.singularities.is_empty() {
        return Err(Error::InvalidInput(
            "bias must be smooth/regularized; express capped logs as smooth components".into(),
        ));
    }
    for c in &bias.smooth {
        if c.f.has_bare_singularity() {
            return Err(Error::InvalidInput(
                "bias component carries an unregularized singularity".into(),
            ));
        }
    }
    let obs_k = time_index(&ensemble.times, observable_time)?;
    let m = ensemble.spectra.len();
    if m == 0 {
        return Err(Error::InvalidInput("empty ensemble".into()));
    }

    let mut log_w = Vec::with_capacity(m);
    let mut ys = Vec::with_capacity(m);
    for spectra in &ensemble.spectra {
        let mut lw = 0.0;
        for c in &bias.smooth {
            let k = time_index(&ensemble.times, c.t)?;
            lw += linear_statistic(&spectra[k], &c.f, true)?;
        }
        log_w.push(lw);
        ys.push(linear_statistic(&spectra[obs_k], observable, true)?);
    }
    let shift = log_w.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let w: Vec<f64> = log_w.iter().map(|&l| (l - shift).exp()).collect();
    let sum_w: f64 = w.iter().sum();
    let sum_w2: f64 = w.iter().map(|x| x * x).sum();
    let ess = sum_w * sum_w / sum_w2;
    if ess < MIN_ESS {
        return Err(Error::LowEffectiveSampleSize { ess, min: MIN_ESS });
    }
    let mean: f64 = w.iter().zip(&ys).map(|(w, y)| w * y).sum::<f64>() / sum_w;

    // batch ratios for the standard error
    let b = batch_count(m as u64);
    let mut batch_means = Vec::with_capacity(b);
    for batch in 0..b {
        let lo = m * batch / b;
        let hi = m * (batch + 1) / b;
        let bw: f64 = w[lo..hi].iter().sum();
        let bwy: f64 = (lo..hi).map(|i| w[i] * ys[i]).sum();
        batch_means.push(if bw > 0.0 { bwy / bw } else { f64::NAN });
    }
    let bmean = batch_means.iter().sum::<f64>() / b as f64;
    let var = batch_means.iter().map(|r| (r - bmean).powi(2)).sum::<f64>() / (b as f64 - 1.0);
    Ok(McEstimate {
        mean,
        stderr: (var / b as f64).sqrt(),
        n_samples: m as u64,
        n_batches: b,
        ess,
        batch_means,
        warnings: Vec::new(),
    })
}

/// Rigidity and local-law diagnostics of one trajectory.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RigidityReport {
    /// `max_k N rho_sc(gamma_k) |lambda_k - gamma_k|` over bulk indices, per time.
    pub per_time_bulk_max: Vec<f64>,
    pub overall_bulk_max: f64,
    /// `max |m(z) - m_sc(z)| N eta` over the fixed diagnostic grid.
    pub stieltjes_max_dev: f64,
    /// Half-width cut defining bulk indices: `|gamma_k| <= 2 - bulk_margin`.
    pub bulk_margin: f64,
}

pub fn rigidity_report(traj: &EigenTrajectory) -> Result<RigidityReport> {
    let n = traj.n;
    let bulk_margin = 0.5;
    let locations: Vec<f64> = (1..=n)
        .map(|k| typical_location(k as u32, n as u32))
        .collect::<Result<Vec<_>>>()?;
    let mut per_time = Vec::with_capacity(traj.times.len());
    for eigs in &traj.eigenvalues {
        let mut worst = 0.0f64;
        for (k, (&l, &g)) in eigs.iter().zip(&locations).enumerate() {
            let _ = k;
            if g.abs() <= 2.0 - bulk_margin {
                let dev = n as f64 * equilibrium_density(DensityKind::Semicircle, g) * (l - g).abs();
                worst = worst.max(dev);
            }
        }
        per_time.push(worst);
    }
    let overall = per_time.iter().fold(0.0f64, |a, &b| a.max(b));

    let mut stdev = 0.0f64;
    for eigs in &traj.eigenvalues {
        for i in 0..13 {
            let e = -1.5 + 3.0 * i as f64 / 12.0;
            for eta in [0.01, 0.04, 0.07, 0.1] {
                let z = Complex64::new(e, eta);
                let m_emp: Complex64 = eigs
                    .iter()
                    .map(|&l| (Complex64::new(l, 0.0) - z).inv())
                    .sum::<Complex64>()
                    / n as f64;
                let m_sc = stieltjes_semicircle(z)?;
                stdev = stdev.max((m_emp - m_sc).norm() * n as f64 * eta);
            }
        }
    }
    Ok(RigidityReport {
        per_time_bulk_max: per_time,
        overall_bulk_max: overall,
        stieltjes_max_dev: stdev,
        bulk_margin,
    })
}

/// Write a trajectory as `(time, index, eigenvalue)` CSV rows plus a JSON
/// sidecar with the sampling metadata.
pub fn write_trajectory_csv(traj: &EigenTrajectory, path: &std::path::Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "time,index,eigenvalue")?;
    for (t, eigs) in traj.times.iter().zip(&traj.eigenvalues) {
        for (i, l) in eigs.iter().enumerate() {
            writeln!(f, "{t},{i},{l}")?;
        }
    }
    f.flush()?;
    let sidecar = path.with_extension("json");
    let meta = serde_json::json!({
        "n": traj.n,
        "seed": traj.seed,
        "sampler_version": traj.sampler_version,
        "times": traj.times,
    });
    std::fs::write(sidecar, serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

// --- Haar unitary reference ensemble ---

/// Haar-distributed unitary matrix via QR of a complex Ginibre matrix with
/// the standard phase correction.
pub fn sample_haar_unitary(n: usize, rng: &mut impl Rng) -> DMatrix<Complex64> {
    let normal = StandardNormal;
    let a = DMatrix::<Complex64>::from_fn(n, n, |_, _| {
        let re: f64 = normal.sample(rng);
        let im: f64 = normal.sample(rng);
        Complex64::new(re, im) / 2f64.sqrt()
    });
    let qr = a.qr();
    let r = qr.r();
    let phases: Vec<Complex64> = (0..n)
        .map(|i| {
            let d = r[(i, i)];
            if d.norm() == 0.0 {
                Complex64::new(1.0, 0.0)
            } else {
                d / d.norm()
            }
        })
        .collect();
    let mut q = qr.q();
    for j in 0..n {
        for i in 0..n {
            q[(i, j)] *= phases[j];
        }
    }
    q
}

/// Eigenangles of a small unitary matrix in `(-pi, pi]`, via Newton's
/// identities for the characteristic polynomial and Durand-Kerner iteration.
/// Intended for the reference checks at small N.
pub fn unitary_eigenangles(u: &DMatrix<Complex64>) -> Result<Vec<f64>> {
    let n = u.nrows();
    if n == 0 || n > 12 {
        return Err(Error::InvalidInput(format!(
            "eigenangle extraction supports 1 <= N <= 12, got {n}"
        )));
    }
    // power traces t_k = Tr U^k
    let mut traces = Vec::with_capacity(n);
    let mut p = u.clone();
    for _ in 0..n {
        traces.push((0..n).map(|i| p[(i, i)]).sum::<Complex64>());
        p *= u;
    }
    // elementary symmetric polynomials from Newton's identities
    let mut e = vec![Complex64::new(1.0, 0.0)];
    for k in 1..=n {
        let mut s = Complex64::new(0.0, 0.0);
        for i in 1..=k {
            let sign = if i % 2 == 1 { 1.0 } else { -1.0 };
            s += sign * e[k - i] * traces[i - 1];
        }
        e.push(s / k as f64);
    }
    // char poly: lambda^n - e1 lambda^{n-1} + e2 lambda^{n-2} - ...
    let coeffs: Vec<Complex64> = (0..=n)
        .map(|j| {
            if j == n {
                Complex64::new(1.0, 0.0)
            } else {
                let k = n - j;
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                sign * e[k]
            }
        })
        .collect();
    let poly = |z: Complex64| {
        let mut v = Complex64::new(0.0, 0.0);
        for c in coeffs.iter().rev() {
            v = v * z + c;
        }
        v
    };
    // Durand-Kerner from staggered points on the unit circle
    let mut roots: Vec<Complex64> = (0..n)
        .map(|j| Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * (j as f64 + 0.37) / n as f64))
        .collect();
    for _ in 0..400 {
        let mut moved = 0.0f64;
        for j in 0..n {
            let mut den = Complex64::new(1.0, 0.0);
            for k in 0..n {
                if k != j {
                    den *= roots[j] - roots[k];
                }
            }
            let step = poly(roots[j]) / den;
            roots[j] -= step;
            moved = moved.max(step.norm());
        }
        if moved < 1e-13 {
            break;
        }
    }
    // unitary spectra live on the unit circle; reject a failed iteration
    for r in &roots {
        if (r.norm() - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidInput(format!(
                "characteristic-polynomial root {r} strayed from the unit circle"
            )));
        }
    }
    let mut angles: Vec<f64> = roots.iter().map(|r| r.arg()).collect();
    angles.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(angles)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transforms::{SmoothComponent, Singularity};
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn gue_is_hermitian_and_normalized() {
        let mut r = rng(1);
        let h = sample_gue(40, &mut r);
        for i in 0..40 {
            for j in 0..40 {
                let d = h.matrix()[(i, j)] - h.matrix()[(j, i)].conj();
                assert_eq!(d, Complex64::new(0.0, 0.0)); // bit-exact
            }
        }
        // E Tr H^2 = N within Monte Carlo error (10^4 draws at N = 50)
        let n = 50;
        let m = 10_000;
        let mut vals = Vec::with_capacity(m);
        for _ in 0..m {
            vals.push(sample_gue(n, &mut r).frobenius_sq());
        }
        let mean: f64 = vals.iter().sum::<f64>() / m as f64;
        let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1) as f64).sqrt();
        let stderr = sd / (m as f64).sqrt();
        assert!(
            (mean - n as f64).abs() <= 3.0 * stderr,
            "E Tr H^2 = {mean} vs {n} (stderr {stderr})"
        );
    }

    #[test]
    fn spectrum_reference_cases() {
        let z = HermitianMatrix { mat: DMatrix::zeros(5, 5) };
        assert_eq!(spectrum(&z).unwrap(), vec![0.0; 5]);
        let d = HermitianMatrix {
            mat: DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
                Complex64::new(3.0, 0.0),
                Complex64::new(1.0, 0.0),
                Complex64::new(2.0, 0.0),
            ])),
        };
        let s = spectrum(&d).unwrap();
        assert_eq!(s, vec![1.0, 2.0, 3.0]);
        // spectral identities on a random draw
        let h = sample_gue(60, &mut rng(7));
        let s = spectrum(&h).unwrap();
        let s1: f64 = s.iter().sum();
        let s2: f64 = s.iter().map(|l| l * l).sum();
        assert!((s1 - h.trace_re()).abs() < 1e-9 * s2.max(1.0));
        assert!((s2 - h.frobenius_sq()).abs() < 1e-9 * s2.max(1.0));
    }

    #[test]
    fn evolve_identity_and_autocorrelation() {
        let mut r = rng(2);
        let h = sample_gue(8, &mut r);
        let same = evolve_ou(&h, 0.0, &mut r).unwrap();
        assert_eq!(h.matrix(), same.matrix());
        assert!(evolve_ou(&h, -0.1, &mut r).is_err());

        // entry autocorrelation: N E[H_11(0) H_11(dt)] = e^{-dt/2}
        let n = 2;
        let dt = 0.8;
        let m = 100_000;
        let mut prods = Vec::with_capacity(m);
        for _ in 0..m {
            let h0 = sample_gue(n, &mut r);
            let h1 = evolve_ou(&h0, dt, &mut r).unwrap();
            prods.push(h0.matrix()[(0, 0)].re * h1.matrix()[(0, 0)].re * n as f64);
        }
        let mean: f64 = prods.iter().sum::<f64>() / m as f64;
        let sd =
            (prods.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1) as f64).sqrt();
        let expect = (-dt / 2.0f64).exp();
        assert!(
            (mean - expect).abs() <= 3.0 * sd / (m as f64).sqrt(),
            "autocorr {mean} vs {expect}"
        );
    }

    #[test]
    fn stationarity_semicircle_ks() {
        // marginals after evolution stay GUE: KS distance of the ESD vs the
        // semicircle CDF below the 1% critical value 1.63/sqrt(N)
        let n = 200;
        let critical = 1.63 / (n as f64).sqrt();
        let factory = StreamFactory::new(11);
        let times = [0.0, 0.37, 1.4];
        let mut failures = 0;
        let reps = 60;
        for s in 0..reps {
            let traj = sample_trajectory(n, &times, &factory, s).unwrap();
            for eigs in &traj.eigenvalues {
                let ks = eigs
                    .iter()
                    .enumerate()
                    .map(|(i, &l)| {
                        let f = crate::specfun::semicircle_cdf(l);
                        let lo = (f - i as f64 / n as f64).abs();
                        let hi = (f - (i + 1) as f64 / n as f64).abs();
                        lo.max(hi)
                    })
                    .fold(0.0f64, f64::max);
                if ks > critical {
                    failures += 1;
                }
            }
        }
        assert_eq!(failures, 0, "{failures} KS failures out of {}", reps * 3);
    }

    #[test]
    fn eigenvalue_fraction_in_unit_interval() {
        // fraction in [-1,1] at N = 400 -> 1/3 + sqrt(3)/(2 pi)
        let n = 400;
        let factory = StreamFactory::new(5);
        let mut inside = 0u64;
        let reps = 40;
        for s in 0..reps {
            let traj = sample_trajectory(n, &[0.0], &factory, s).unwrap();
            inside += traj.eigenvalues[0]
                .iter()
                .filter(|&&l| (-1.0..=1.0).contains(&l))
                .count() as u64;
        }
        let frac = inside as f64 / (n * reps as usize) as f64;
        let expect = 1.0 / 3.0 + 3f64.sqrt() / (2.0 * PI);
        assert!((frac - expect).abs() < 0.01, "{frac} vs {expect}");
    }

    #[test]
    fn linear_statistic_reference_cases() {
        let eigs = [-1.0, 0.2, 0.9];
        // f = 1 centered is zero
        let one = FunctionSpec::cheb_first(0);
        assert_eq!(linear_statistic(&eigs, &one, true).unwrap(), 0.0);
        // jump trace: pi #{lambda < x} - pi N / 2
        let j = FunctionSpec::jump_sing(0.5);
        let v = linear_statistic(&eigs, &j, false).unwrap();
        assert!((v - (PI * 2.0 - PI * 1.5)).abs() < 1e-12);
        // x^2 trace - N: T~_2 = x^2/2 - 1 so x^2 = 2 T~_2 + 2
        let x2 = FunctionSpec::Series { coeffs: vec![2.0, 0.0, 2.0] };
        let v = linear_statistic(&eigs, &x2, true).unwrap();
        let expect = eigs.iter().map(|l| l * l).sum::<f64>() - 3.0;
        assert!((v - expect).abs() < 1e-12);
        // underflow guard
        let l = FunctionSpec::log_sing(0.2);
        assert!(linear_statistic(&[0.2, 1.0], &l, false).is_err());
    }

    #[test]
    fn clt_variance_of_chebyshev_statistics() {
        // Var S_N(T~_n) -> C(T~_n, T~_n) = n/4
        let n = 400;
        let reps = 400;
        let factory = StreamFactory::new(23);
        let fs: Vec<FunctionSpec> = (1..=3).map(FunctionSpec::cheb_first).collect();
        let stats: Vec<Vec<f64>> = (0..reps as u64)
            .into_par_iter()
            .map(|s| {
                let traj = sample_trajectory(n, &[0.0], &factory, s).unwrap();
                fs.iter()
                    .map(|f| linear_statistic(&traj.eigenvalues[0], f, true).unwrap())
                    .collect()
            })
            .collect();
        for (i, _f) in fs.iter().enumerate() {
            let xs: Vec<f64> = stats.iter().map(|v| v[i]).collect();
            let mean: f64 = xs.iter().sum::<f64>() / reps as f64;
            let var: f64 =
                xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
            let expect = (i as f64 + 1.0) / 4.0;
            let stderr = var * (2.0 / (reps as f64 - 1.0)).sqrt();
            assert!(
                (var - expect).abs() <= 3.0 * stderr + 0.01,
                "n = {}: var {var} vs {expect}",
                i + 1
            );
        }
    }

    #[test]
    fn trace_two_time_correlation() {
        // Corr(Tr H_t, Tr H_s) = e^{-|t-s|/2}; Tr H is exactly N(0,1)
        let factory = StreamFactory::new(31);
        let tau = 1.1;
        let reps = 4000u64;
        let pairs: Vec<(f64, f64)> = (0..reps)
            .into_par_iter()
            .map(|s| {
                let traj = sample_trajectory(24, &[0.0, tau], &factory, s).unwrap();
                (
                    traj.eigenvalues[0].iter().sum::<f64>(),
                    traj.eigenvalues[1].iter().sum::<f64>(),
                )
            })
            .collect();
        let mx: f64 = pairs.iter().map(|p| p.0).sum::<f64>() / reps as f64;
        let my: f64 = pairs.iter().map(|p| p.1).sum::<f64>() / reps as f64;
        let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
        for (x, y) in &pairs {
            sxx += (x - mx).powi(2);
            syy += (y - my).powi(2);
            sxy += (x - mx) * (y - my);
        }
        let corr = sxy / (sxx * syy).sqrt();
        let expect = (-tau / 2.0f64).exp();
        let stderr = (1.0 - expect * expect) / (reps as f64).sqrt();
        assert!((corr - expect).abs() <= 3.5 * stderr, "{corr} vs {expect}");
    }

    #[test]
    fn empty_charge_moment_is_exactly_zero() {
        let est = mc_joint_moment(&Charge::default(), 10, 100, 3).unwrap();
        assert_eq!(est.mean, 0.0);
        assert_eq!(est.stderr, 0.0);
    }

    #[test]
    fn determinism_across_worker_counts() {
        let charge = Charge {
            singularities: vec![Singularity { t: 0.0, e: 0.3, gamma: 0.7, beta: 0.2 }],
            smooth: vec![SmoothComponent { t: 0.5, f: FunctionSpec::cheb_first(2) }],
        };
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| mc_joint_moment(&charge, 16, 500, 99).unwrap())
        };
        let a = run(1);
        let b = run(2);
        assert_eq!(a.mean.to_bits(), b.mean.to_bits());
        assert_eq!(a.stderr.to_bits(), b.stderr.to_bits());
        assert_eq!(a.batch_means.len(), b.batch_means.len());
        for (x, y) in a.batch_means.iter().zip(&b.batch_means) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn reweighted_trivial_bias_is_plain_mean() {
        let ens = sample_ensemble(24, &[0.0], 300, 8).unwrap();
        let f = FunctionSpec::cheb_first(2);
        let est = reweighted_expectation(&ens, &Charge::default(), &f, 0.0).unwrap();
        let direct: f64 = ens
            .spectra
            .iter()
            .map(|s| linear_statistic(&s[0], &f, true).unwrap())
            .sum::<f64>()
            / 300.0;
        assert!((est.mean - direct).abs() < 1e-12);
        assert!((est.ess - 300.0).abs() < 1e-9);
    }

    #[test]
    fn reweighted_rejects_bare_singularities() {
        let ens = sample_ensemble(8, &[0.0], 120, 8).unwrap();
        let bias = Charge {
            singularities: vec![],
            smooth: vec![SmoothComponent { t: 0.0, f: FunctionSpec::log_sing(0.0) }],
        };
        assert!(reweighted_expectation(&ens, &bias, &FunctionSpec::cheb_first(1), 0.0).is_err());
        let charged = Charge::single(0.0, 0.0, 1.0, 0.0);
        assert!(
            reweighted_expectation(&ens, &charged, &FunctionSpec::cheb_first(1), 0.0).is_err()
        );
    }

    #[test]
    fn rigidity_zero_for_typical_locations() {
        let n = 50;
        let locations: Vec<f64> = (1..=n)
            .map(|k| typical_location(k as u32, n as u32).unwrap())
            .collect();
        let traj = EigenTrajectory {
            n,
            times: vec![0.0],
            eigenvalues: vec![locations],
            seed: 0,
            sampler_version: SAMPLER_VERSION.into(),
        };
        let rep = rigidity_report(&traj).unwrap();
        assert_eq!(rep.overall_bulk_max, 0.0);
    }

    #[test]
    fn rigidity_scale_and_local_law_window() {
        let n = 200;
        let factory = StreamFactory::new(77);
        let mut devs = Vec::new();
        let mut st_ok = 0;
        let reps = 40;
        for s in 0..reps {
            let traj = sample_trajectory(n, &[0.0], &factory, s).unwrap();
            let rep = rigidity_report(&traj).unwrap();
            devs.push(rep.overall_bulk_max / (n as f64).ln());
            if rep.stieltjes_max_dev <= 50.0 {
                st_ok += 1;
            }
        }
        devs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = devs[devs.len() / 2];
        assert!(
            (0.2..=1.5).contains(&median),
            "bulk rigidity median {median} outside the loose window"
        );
        assert!(st_ok * 100 >= reps * 95, "local-law bound violated too often");
    }

    #[test]
    fn haar_unitarity_and_eigenangles() {
        let mut r = rng(4);
        for n in [1usize, 2, 4] {
            let u = sample_haar_unitary(n, &mut r);
            let id = DMatrix::<Complex64>::identity(n, n);
            let dev = (u.adjoint() * &u - id).norm();
            assert!(dev < 1e-10, "N = {n}: unitarity dev {dev}");
            let angles = unitary_eigenangles(&u).unwrap();
            assert_eq!(angles.len(), n);
            // det U = prod e^{i theta}
            let det = u.determinant();
            let from_angles = angles.iter().map(|&t| Complex64::from_polar(1.0, t)).fold(
                Complex64::new(1.0, 0.0),
                |a, b| a * b,
            );
            assert!((det - from_angles).norm() < 1e-8, "N = {n}");
        }
    }

    #[test]
    fn trajectory_csv_round_trip() {
        let factory = StreamFactory::new(6);
        let traj = sample_trajectory(6, &[0.0, 0.5], &factory, 0).unwrap();
        let dir = std::env::temp_dir().join("fhlab_traj_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("traj.csv");
        write_trajectory_csv(&traj, &path).unwrap();
        let body = std::fs::read_to_string(&path).unwrap();
        assert!(body.starts_with("time,index,eigenvalue"));
        assert_eq!(body.lines().count(), 1 + 2 * 6);
        let meta: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.join("traj.json")).unwrap()).unwrap();
        assert_eq!(meta["n"], 6);
        assert_eq!(meta["sampler_version"], SAMPLER_VERSION);
        std::fs::remove_dir_all(&dir).ok();
    }
}
