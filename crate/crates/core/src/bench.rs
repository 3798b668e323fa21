//! Thermal-block experiments: configuration, parameter sets, error curves,
//! timing summaries and CSV output.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::artifact::ModelArtifact;
use crate::error::{Error, Result};
use crate::estimator::{EffectivityBounds, EstimatorData};
use crate::fem::{solve_fom, thermal_block, AffineSystem, ParameterBox, ParameterPoint, Snapshot};
use crate::greedy::{compute_snapshots, run_batch_greedy, run_strong_greedy, GreedyConfig, GreedyOutcome};
use crate::pool::WorkerPool;
use crate::rb::{reconstruct, solve_rom, ReducedBasis, ReducedModel};
use crate::theory::{
    check_p1, gamma_empirical, normalize, pod_width_upper_bound, run_all_checks, sigma_sequence, CheckReport,
};

pub const DEFAULT_TRAINING_CAP: usize = 1_000_000;
/// At most this many full-order solves are timed for `t_full`.
pub const FULL_SOLVE_SAMPLES: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub px: usize,
    pub py: usize,
    pub nx: usize,
    pub ny: usize,
    pub train_per_dim: usize,
    pub test_count: usize,
    pub seed: u64,
    pub batch_sizes: Vec<usize>,
    pub tol: f64,
    pub workers: usize,
    /// Precompute all training snapshots and run the theory checks.
    pub oracle: bool,
    pub out: PathBuf,
    pub max_basis_size: usize,
    pub training_cap: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            px: 2,
            py: 2,
            nx: 32,
            ny: 32,
            train_per_dim: 5,
            test_count: 100,
            seed: 1,
            batch_sizes: vec![1, 2, 4, 8, 16],
            tol: 1e-5,
            workers: 1,
            oracle: false,
            out: PathBuf::from("out"),
            max_basis_size: 200,
            training_cap: DEFAULT_TRAINING_CAP,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value {value:?} for {key}")))
}

impl ExperimentConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key.trim().replace('-', "_").as_str() {
            "px" => self.px = parse(key, value)?,
            "py" => self.py = parse(key, value)?,
            "nx" => self.nx = parse(key, value)?,
            "ny" => self.ny = parse(key, value)?,
            "train_per_dim" => self.train_per_dim = parse(key, value)?,
            "test_count" => self.test_count = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "batch_sizes" => {
                self.batch_sizes = value
                    .split(',')
                    .map(|s| parse(key, s.trim()))
                    .collect::<Result<_>>()?
            }
            "tol" => self.tol = parse(key, value)?,
            "workers" => self.workers = parse(key, value)?,
            "oracle" => self.oracle = parse(key, value)?,
            "out" => self.out = PathBuf::from(value),
            "max_basis_size" => self.max_basis_size = parse(key, value)?,
            "training_cap" => self.training_cap = parse(key, value)?,
            other => return Err(Error::Config(format!("unknown configuration key {other:?}"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines; blank lines and `#` comments are skipped.
    pub fn apply_kv_str(&mut self, text: &str) -> Result<()> {
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
            self.set(key, value)?;
        }
        Ok(())
    }

    pub fn from_kv_str(text: &str) -> Result<Self> {
        let mut config = Self::default();
        config.apply_kv_str(text)?;
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_kv_str(&std::fs::read_to_string(path)?)
    }

    /// Resolved configuration in the same `key = value` format it is read from.
    pub fn to_kv_string(&self) -> String {
        let batch: Vec<String> = self.batch_sizes.iter().map(|b| b.to_string()).collect();
        let mut s = String::new();
        let _ = writeln!(s, "px = {}", self.px);
        let _ = writeln!(s, "py = {}", self.py);
        let _ = writeln!(s, "nx = {}", self.nx);
        let _ = writeln!(s, "ny = {}", self.ny);
        let _ = writeln!(s, "train_per_dim = {}", self.train_per_dim);
        let _ = writeln!(s, "test_count = {}", self.test_count);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "batch_sizes = {}", batch.join(","));
        let _ = writeln!(s, "tol = {:e}", self.tol);
        let _ = writeln!(s, "workers = {}", self.workers);
        let _ = writeln!(s, "oracle = {}", self.oracle);
        let _ = writeln!(s, "out = {}", self.out.display());
        let _ = writeln!(s, "max_basis_size = {}", self.max_basis_size);
        let _ = writeln!(s, "training_cap = {}", self.training_cap);
        s
    }

    pub fn num_components(&self) -> usize {
        self.px * self.py
    }

    pub fn validate(&self) -> Result<()> {
        if self.train_per_dim < 2 {
            return Err(Error::Config(format!("train_per_dim must be at least 2, got {}", self.train_per_dim)));
        }
        if self.test_count < 1 {
            return Err(Error::Config("test_count must be at least 1".into()));
        }
        if self.batch_sizes.is_empty() || self.batch_sizes.contains(&0) {
            return Err(Error::Config("batch sizes must be a nonempty list of positive integers".into()));
        }
        if self.workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::Config(format!("tolerance must be nonnegative, got {}", self.tol)));
        }
        if self.max_basis_size == 0 {
            return Err(Error::Config("max_basis_size must be at least 1".into()));
        }
        Ok(())
    }
}

/// Tensor grid of `k` equidistant values in `[0.1, 1]` per block, last block fastest.
pub fn build_training_set(px: usize, py: usize, k: usize) -> Result<Vec<ParameterPoint>> {
    build_training_set_capped(px, py, k, DEFAULT_TRAINING_CAP)
}

pub fn build_training_set_capped(px: usize, py: usize, k: usize, cap: usize) -> Result<Vec<ParameterPoint>> {
    if k < 2 {
        return Err(Error::Config(format!("train_per_dim must be at least 2, got {k}")));
    }
    let p = px * py;
    let size = u32::try_from(p)
        .ok()
        .and_then(|p| k.checked_pow(p))
        .filter(|&s| s <= cap)
        .ok_or_else(|| {
            Error::Config(format!(
                "training grid {k}^{p} exceeds the cap of {cap} points; use a smaller train_per_dim"
            ))
        })?;
    let domain = ParameterBox::default();
    let values: Vec<f64> = (0..k)
        .map(|i| {
            if i + 1 == k {
                domain.max
            } else {
                domain.min + (domain.max - domain.min) * i as f64 / (k - 1) as f64
            }
        })
        .collect();
    Ok((0..size)
        .map(|mut index| {
            let mut w = vec![0.0; p];
            for slot in w.iter_mut().rev() {
                *slot = values[index % k];
                index /= k;
            }
            ParameterPoint::new(w)
        })
        .collect())
}

/// `count` uniform random points in `[0.1, 1]^P`, reproducible from `seed`.
pub fn random_test_set(num_components: usize, count: usize, seed: u64) -> Vec<ParameterPoint> {
    let domain = ParameterBox::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            ParameterPoint::new(
                (0..num_components)
                    .map(|_| rng.random_range(domain.min..=domain.max))
                    .collect(),
            )
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestErrors {
    pub per_mu: Vec<f64>,
    pub max: f64,
}

fn relative_rom_error(
    basis: &ReducedBasis,
    model: &ReducedModel,
    system: &AffineSystem,
    reference: &Snapshot,
) -> Result<f64> {
    let norm = system.x_norm(&reference.coefficients)?;
    if !(norm > 0.0) {
        return Err(Error::numeric("full-order solution has zero X-norm", norm));
    }
    let coeffs = solve_rom(model, &reference.parameter)?;
    let rb = reconstruct(basis, &coeffs)?;
    Ok(system.x_norm(&(&reference.coefficients - rb))? / norm)
}

/// Relative X-norm error of the reduced solution at each test parameter.
pub fn evaluate_test_error(
    basis: &ReducedBasis,
    model: &ReducedModel,
    system: &AffineSystem,
    test_set: &[ParameterPoint],
) -> Result<TestErrors> {
    let per_mu = test_set
        .par_iter()
        .map(|mu| relative_rom_error(basis, model, system, &solve_fom(system, mu)?))
        .collect::<Result<Vec<f64>>>()?;
    let max = per_mu.iter().copied().fold(0.0, f64::max);
    Ok(TestErrors { per_mu, max })
}

/// Maxima over the test set for one basis prefix size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorDecayRow {
    pub n: usize,
    /// `Δ_n(μ) / ‖u(μ)‖_X`.
    pub est: f64,
    /// `Δ_n(μ)`.
    pub est_abs: f64,
    /// Galerkin error relative to `‖u(μ)‖_X`.
    pub err: f64,
    /// Best-approximation error relative to `‖u(μ)‖_X`.
    pub proj_err: f64,
}

/// Test errors for every basis prefix `n = 0, …, basis.len()`.
///
/// `reference[i]` is the full-order solution at the i-th test parameter.
pub fn error_decay(
    basis: &ReducedBasis,
    model: &ReducedModel,
    estimator: Option<&EstimatorData>,
    system: &AffineSystem,
    reference: &[Snapshot],
) -> Result<Vec<ErrorDecayRow>> {
    let n_max = basis.len();
    let models = (0..=n_max).map(|n| model.truncate(n)).collect::<Result<Vec<_>>>()?;
    let estimators = match estimator {
        Some(data) => Some((0..=n_max).map(|n| data.truncate(n)).collect::<Result<Vec<_>>>()?),
        None => None,
    };
    let images: Vec<_> = basis.vectors().iter().map(|v| system.gram_apply(v)).collect();

    // per test point: (est, err, proj_err) for every n
    let per_mu = reference
        .par_iter()
        .map(|snapshot| -> Result<Vec<(f64, f64, f64)>> {
            let u = &snapshot.coefficients;
            let mu = &snapshot.parameter;
            let norm = system.x_norm(u)?;
            if !(norm > 0.0) {
                return Err(Error::numeric("full-order solution has zero X-norm", norm));
            }
            let mut residual = u.clone();
            let mut out = Vec::with_capacity(n_max + 1);
            for n in 0..=n_max {
                if n > 0 {
                    let c = images[n - 1].dot(&residual);
                    residual.axpy(-c, &basis.vectors()[n - 1], 1.0);
                }
                let proj = system.x_norm(&residual)? / norm;
                let coeffs = solve_rom(&models[n], mu)?;
                let mut rb = u.clone();
                for (c, v) in coeffs.iter().zip(basis.vectors()) {
                    rb.axpy(-c, v, 1.0);
                }
                let err = system.x_norm(&rb)? / norm;
                let est = match &estimators {
                    Some(e) => e[n].estimate_with_coefficients(mu, &coeffs)?,
                    None => f64::NAN,
                };
                out.push((est, err, proj));
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;

    let norms = reference
        .iter()
        .map(|s| system.x_norm(&s.coefficients))
        .collect::<Result<Vec<_>>>()?;
    Ok((0..=n_max)
        .map(|n| {
            let mut row = ErrorDecayRow {
                n,
                est: 0.0,
                est_abs: 0.0,
                err: 0.0,
                proj_err: 0.0,
            };
            for (values, norm) in per_mu.iter().zip(&norms) {
                let (est_abs, err, proj) = values[n];
                row.est_abs = row.est_abs.max(est_abs);
                row.est = row.est.max(est_abs / norm);
                row.err = row.err.max(err);
                row.proj_err = row.proj_err.max(proj);
            }
            if estimator.is_none() {
                row.est = f64::NAN;
                row.est_abs = f64::NAN;
            }
            row
        })
        .collect())
}

/// `⌈t_offline / (t_full − t_online)⌉`, or `None` when the reduced solve is not faster.
pub fn break_even(t_offline: f64, t_full: f64, t_online: f64) -> Option<u64> {
    if t_full > t_online {
        Some((t_offline / (t_full - t_online)).ceil().max(0.0) as u64)
    } else {
        None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub batch_size: usize,
    pub num_ext: usize,
    pub num_iter: usize,
    pub num_discarded: usize,
    pub t_solve: f64,
    pub t_evaluate: f64,
    pub t_extend: f64,
    pub t_reduce: f64,
    pub t_other: f64,
    pub t_offline: f64,
    pub t_online: f64,
    pub t_full: f64,
    pub k_star: Option<u64>,
    pub err_final: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoryRun {
    pub batch_size: usize,
    pub mode: String,
    pub n_final: usize,
    pub gamma_emp: f64,
    /// `γ` measured on batch leaders only.
    pub gamma_leaders: f64,
    pub gamma_greedy: f64,
    pub checks: Vec<CheckReport>,
    /// Diagonal bounds with `gamma_leaders`; mid-batch entries may violate them.
    pub p1_leaders: CheckReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoryReport {
    pub d_up: Vec<f64>,
    pub pod_eigs: Vec<f64>,
    pub rank: usize,
    pub runs: Vec<TheoryRun>,
}

impl TheoryReport {
    pub fn all_passed(&self) -> bool {
        self.runs
            .iter()
            .flat_map(|r| &r.checks)
            .all(|c| c.status != crate::theory::CheckStatus::Fail)
    }
}

#[derive(Debug)]
pub struct ExperimentReport {
    pub summaries: Vec<RunSummary>,
    pub error_decay: Vec<(usize, Vec<ErrorDecayRow>)>,
    pub outcomes: Vec<GreedyOutcome>,
    pub theory: Option<TheoryReport>,
}

fn csv_float(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v:e}")
    }
}

/// `summary.csv`; `*_n` columns are ratios to the `b = 1` run, or to the first run without one.
pub fn write_summary_csv<W: Write>(mut w: W, summaries: &[RunSummary]) -> std::io::Result<()> {
    writeln!(
        w,
        "batchsizes,num_ext,num_iter,t_solve,t_evaluate,t_extend,t_reduce,t_other,t_offline,t_online,t_online_n,t_offline_n,k_star"
    )?;
    let reference = summaries
        .iter()
        .find(|s| s.batch_size == 1)
        .or_else(|| summaries.first());
    for s in summaries {
        let (online_n, offline_n) = match reference {
            Some(r) => (s.t_online / r.t_online, s.t_offline / r.t_offline),
            None => (f64::NAN, f64::NAN),
        };
        writeln!(
            w,
            "{},{},{},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e},{:.6},{:.6},{}",
            s.batch_size,
            s.num_ext,
            s.num_iter,
            s.t_solve,
            s.t_evaluate,
            s.t_extend,
            s.t_reduce,
            s.t_other,
            s.t_offline,
            s.t_online,
            online_n,
            offline_n,
            s.k_star.map(|k| k.to_string()).unwrap_or_default()
        )?;
    }
    Ok(())
}

pub fn write_error_decay_csv<W: Write>(mut w: W, rows: &[ErrorDecayRow]) -> std::io::Result<()> {
    writeln!(w, "n,est,err,est_abs,proj_err")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.n,
            csv_float(r.est),
            csv_float(r.err),
            csv_float(r.est_abs),
            csv_float(r.proj_err)
        )?;
    }
    Ok(())
}

fn create(path: PathBuf) -> Result<std::io::BufWriter<std::fs::File>> {
    Ok(std::io::BufWriter::new(std::fs::File::create(path)?))
}

fn greedy_error(b: usize, failure: crate::greedy::GreedyFailure) -> Error {
    let context = format!("run b={b}, after {} iterations", failure.trace.iterations.len());
    match failure.error {
        Error::Numeric { message, residual } => Error::Numeric {
            message: format!("{context}: {message}"),
            residual,
        },
        Error::Config(m) => Error::Config(format!("{context}: {m}")),
        other => other,
    }
}

fn theory_run(
    outcome: &GreedyOutcome,
    mode: &str,
    snapshots: &[Snapshot],
    d_up: &[f64],
    system: &AffineSystem,
) -> Result<TheoryRun> {
    let sigma = sigma_sequence(snapshots, &outcome.basis, system)?;
    let trace = &outcome.trace;
    let normalized = normalize(&trace.amatrix, &sigma, d_up)?;
    let all: Vec<usize> = (0..normalized.amatrix.len()).collect();
    let gamma_emp = gamma_empirical(&normalized.amatrix, &normalized.sigma, &all);
    let gamma_leaders = gamma_empirical(&normalized.amatrix, &normalized.sigma, &trace.batch_first_indices());
    let mut p1_leaders = check_p1(&normalized.amatrix, &normalized.sigma, gamma_leaders, trace.batch_size);
    p1_leaders.name = "lemma_p1_leader_gamma".into();
    Ok(TheoryRun {
        batch_size: trace.batch_size,
        mode: mode.to_string(),
        n_final: outcome.basis.len(),
        gamma_emp,
        gamma_leaders,
        gamma_greedy: EffectivityBounds::default().gamma_greedy(),
        checks: run_all_checks(trace, &sigma, d_up, Some(gamma_emp))?,
        p1_leaders,
    })
}

/// Runs the configured study and writes all output files into `config.out`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    std::fs::create_dir_all(&config.out)?;
    std::fs::write(config.out.join("config.lock"), config.to_kv_string())?;

    let system = thermal_block(config.nx, config.ny, config.px, config.py, 1.0)?;
    let training = build_training_set_capped(config.px, config.py, config.train_per_dim, config.training_cap)?;
    let test_set = random_test_set(config.num_components(), config.test_count, config.seed);
    let pool = WorkerPool::new(config.workers)?;
    log::info!(
        "{}x{} blocks, {} dofs, {} training and {} test parameters",
        config.px,
        config.py,
        system.dof_count(),
        training.len(),
        test_set.len()
    );

    let samples = config.test_count.min(FULL_SOLVE_SAMPLES);
    let t = Instant::now();
    for mu in &test_set[..samples] {
        solve_fom(&system, mu)?;
    }
    let t_full = t.elapsed().as_secs_f64() / samples as f64;
    let reference = compute_snapshots(&system, &test_set, &pool)?;

    let oracle = if config.oracle {
        let snapshots = compute_snapshots(&system, &training, &pool)?;
        let n_max = snapshots.len().min(config.max_basis_size);
        let widths = pod_width_upper_bound(&snapshots, &system, n_max)?;
        Some((snapshots, widths))
    } else {
        None
    };

    let mut summaries = Vec::new();
    let mut decays = Vec::new();
    let mut outcomes = Vec::new();
    let mut theory_runs = Vec::new();
    for &b in &config.batch_sizes {
        let greedy = GreedyConfig::new(training.clone())
            .with_batch_size(b)
            .with_tolerance(config.tol)
            .with_workers(config.workers)
            .with_max_basis_size(config.max_basis_size);
        let outcome = run_batch_greedy(&greedy, &system).map_err(|f| greedy_error(b, *f))?;
        let trace = &outcome.trace;
        let estimator = outcome.estimator.as_ref().map(|e| e.data());
        let decay = error_decay(&outcome.basis, &outcome.model, estimator, &system, &reference)?;

        let t = Instant::now();
        for mu in &test_set {
            solve_rom(&outcome.model, mu)?;
        }
        let t_online = t.elapsed().as_secs_f64() / test_set.len() as f64;

        let phases = trace.total_timings();
        let named = phases.solve + phases.evaluate + phases.extend + phases.reduce;
        let summary = RunSummary {
            batch_size: b,
            num_ext: outcome.basis.len(),
            num_iter: trace.num_iterations(),
            num_discarded: trace.num_discarded(),
            t_solve: phases.solve,
            t_evaluate: phases.evaluate,
            t_extend: phases.extend,
            t_reduce: phases.reduce,
            t_other: (trace.offline_seconds - named).max(0.0),
            t_offline: trace.offline_seconds,
            t_online,
            t_full,
            k_star: break_even(trace.offline_seconds, t_full, t_online),
            err_final: decay.last().map_or(f64::NAN, |r| r.err),
        };
        log::info!(
            "b={b}: n={} after {} iterations, offline {:.3}s, max test error {:.3e}",
            summary.num_ext,
            summary.num_iter,
            summary.t_offline,
            summary.err_final
        );

        write_error_decay_csv(create(config.out.join(format!("errdecay_b{b}.csv")))?, &decay)?;
        trace.write_csv(create(config.out.join(format!("trace_b{b}.csv")))?)?;
        trace.write_amatrix_csv(create(config.out.join(format!("amatrix_b{b}.csv")))?)?;
        if let Some(est) = estimator {
            ModelArtifact::new(&system, &outcome.basis, &outcome.model, est)?
                .save(&config.out.join(format!("model_b{b}.json")))?;
        }

        if let Some((snapshots, widths)) = &oracle {
            theory_runs.push(theory_run(&outcome, "weak", snapshots, &widths.d_up, &system)?);
            let strong = run_strong_greedy(&greedy, &system, snapshots).map_err(|f| greedy_error(b, *f))?;
            theory_runs.push(theory_run(&strong, "strong", snapshots, &widths.d_up, &system)?);
        }

        summaries.push(summary);
        decays.push((b, decay));
        outcomes.push(outcome);
    }

    write_summary_csv(create(config.out.join("summary.csv"))?, &summaries)?;
    let theory = oracle.map(|(_, widths)| TheoryReport {
        d_up: widths.d_up,
        pod_eigs: widths.pod_eigs,
        rank: widths.rank,
        runs: theory_runs,
    });
    if let Some(report) = &theory {
        serde_json::to_writer_pretty(create(config.out.join("theory_report.json"))?, report)?;
    }
    Ok(ExperimentReport {
        summaries,
        error_decay: decays,
        outcomes,
        theory,
    })
}
