//! Greedy basis construction: strong greedy (true errors, oracle mode), the
//! classical weak greedy, and the weak batch greedy that selects `b` parameters
//! per iteration from a single estimator sweep and solves them in parallel.
//!
//! Index bookkeeping follows `n = bℓ + k`: iteration `ℓ` fills basis positions
//! `bℓ ..= b(ℓ+1) − 1` when no snapshot is discarded.

use std::io::Write;
use std::time::Instant;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{estimate, EstimatorBuilder, EstimatorData};
use crate::fem::{solve_fom, AffineSystem, ParameterPoint, Snapshot};
use crate::pool::WorkerPool;
use crate::rb::{Provenance, ReducedBasis, ReducedModel, DEFAULT_DROP_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GreedyMode {
    /// Rank candidates by the a posteriori estimator.
    Weak,
    /// Rank candidates by their true projection error (needs all snapshots).
    Strong,
}

#[derive(Debug, Clone)]
pub struct GreedyConfig {
    pub batch_size: usize,
    /// Target for the largest estimator value relative to its initial maximum.
    pub tolerance: f64,
    pub max_basis_size: usize,
    pub training_set: Vec<ParameterPoint>,
    pub mode: GreedyMode,
    pub worker_count: usize,
    pub drop_tol: f64,
}

impl GreedyConfig {
    pub fn new(training_set: Vec<ParameterPoint>) -> Self {
        GreedyConfig {
            batch_size: 1,
            tolerance: 1e-5,
            max_basis_size: 200,
            training_set,
            mode: GreedyMode::Weak,
            worker_count: 1,
            drop_tol: DEFAULT_DROP_TOL,
        }
    }

    pub fn with_batch_size(mut self, b: usize) -> Self {
        self.batch_size = b;
        self
    }

    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.tolerance = tol;
        self
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.worker_count = workers;
        self
    }

    pub fn with_max_basis_size(mut self, n: usize) -> Self {
        self.max_basis_size = n;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::Config(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if self.worker_count == 0 {
            return Err(Error::Config("worker_count must be at least 1".into()));
        }
        if self.training_set.is_empty() {
            return Err(Error::Config("training set is empty".into()));
        }
        let mut keys: Vec<Vec<u64>> = self
            .training_set
            .iter()
            .map(|mu| mu.weights().iter().map(|w| w.to_bits()).collect())
            .collect();
        keys.sort_unstable();
        if keys.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("training set contains duplicate points".into()));
        }
        Ok(())
    }
}

/// `(bℓ, b(ℓ+1) − 1)`: first and last basis index filled by iteration `ℓ`.
pub fn batch_indices(iteration: usize, b: usize) -> (usize, usize) {
    (b * iteration, b * (iteration + 1) - 1)
}

/// Top `b` candidates by estimator value, skipping `excluded`; ties go to the smaller index.
///
/// The first entry is the global argmax over the remaining candidates. An empty
/// result means the candidates are exhausted.
pub fn select_batch(estimates: &[f64], b: usize, excluded: &[bool]) -> Vec<usize> {
    let mut candidates: Vec<usize> = (0..estimates.len())
        .filter(|&i| !excluded.get(i).copied().unwrap_or(false))
        .collect();
    candidates.sort_by(|&i, &j| estimates[j].total_cmp(&estimates[i]).then(i.cmp(&j)));
    candidates.truncate(b);
    candidates
}

/// Wall-clock seconds per offline phase.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub solve: f64,
    pub evaluate: f64,
    pub extend: f64,
    pub reduce: f64,
    pub other: f64,
}

impl PhaseTimings {
    pub fn total(&self) -> f64 {
        self.solve + self.evaluate + self.extend + self.reduce + self.other
    }

    fn accumulate(&mut self, other: &PhaseTimings) {
        self.solve += other.solve;
        self.evaluate += other.evaluate;
        self.extend += other.extend;
        self.reduce += other.reduce;
        self.other += other.other;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub param_id: usize,
    /// Surrogate value at selection time.
    pub value: f64,
    pub accepted: bool,
    pub basis_index: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Basis size during the evaluation sweep.
    pub basis_size: usize,
    pub max_estimate: f64,
    pub max_relative: f64,
    pub argmax: usize,
    /// Batch in rank order; empty for the final, stopping sweep.
    pub selections: Vec<Selection>,
    pub timings: PhaseTimings,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    Tolerance,
    BasisCap,
    Exhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreedyTrace {
    pub batch_size: usize,
    pub mode: GreedyMode,
    /// Largest surrogate value of the first sweep; relative values divide by it.
    pub normalizer: f64,
    pub iterations: Vec<IterationRecord>,
    /// Lower-triangular `a_{i,j} = ⟨f_i, v_j⟩_X` over accepted snapshots.
    pub amatrix: Vec<Vec<f64>>,
    pub stop_reason: Option<StopReason>,
    pub offline_seconds: f64,
}

impl GreedyTrace {
    fn new(batch_size: usize, mode: GreedyMode) -> Self {
        GreedyTrace {
            batch_size,
            mode,
            normalizer: 0.0,
            iterations: Vec::new(),
            amatrix: Vec::new(),
            stop_reason: None,
            offline_seconds: 0.0,
        }
    }

    /// Training-set indices in selection order, accepted or not.
    pub fn selection_sequence(&self) -> Vec<usize> {
        self.iterations
            .iter()
            .flat_map(|it| it.selections.iter().map(|s| s.param_id))
            .collect()
    }

    /// Iterations that selected at least one parameter.
    pub fn num_iterations(&self) -> usize {
        self.iterations.iter().filter(|it| !it.selections.is_empty()).count()
    }

    pub fn num_accepted(&self) -> usize {
        self.amatrix.len()
    }

    pub fn num_discarded(&self) -> usize {
        self.iterations
            .iter()
            .flat_map(|it| &it.selections)
            .filter(|s| !s.accepted)
            .count()
    }

    /// `(n, max surrogate)` at each evaluation sweep. Batch runs only sweep at
    /// `n = 0, b, 2b, …`; see [`estimator_maxima`] for every `n`.
    pub fn sigma_proxy(&self) -> Vec<(usize, f64)> {
        self.iterations
            .iter()
            .map(|it| (it.basis_size, it.max_estimate))
            .collect()
    }

    /// Basis indices of accepted batch leaders (rank 0), which satisfy the weak greedy criterion.
    pub fn batch_first_indices(&self) -> Vec<usize> {
        self.iterations
            .iter()
            .filter_map(|it| it.selections.first())
            .filter_map(|s| s.basis_index)
            .collect()
    }

    pub fn total_timings(&self) -> PhaseTimings {
        let mut total = PhaseTimings::default();
        for it in &self.iterations {
            total.accumulate(&it.timings);
        }
        total
    }

    /// One row per selection: `iter,n,param_id,est_value,accepted,t_solve,t_evaluate,t_extend,t_reduce`.
    ///
    /// `n` is the basis index of an accepted snapshot and empty for a discarded one.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "iter,n,param_id,est_value,accepted,t_solve,t_evaluate,t_extend,t_reduce")?;
        for it in &self.iterations {
            let t = &it.timings;
            for s in &it.selections {
                let n = s.basis_index.map(|n| n.to_string()).unwrap_or_default();
                writeln!(
                    w,
                    "{},{},{},{:.12e},{},{:.6e},{:.6e},{:.6e},{:.6e}",
                    it.iteration,
                    n,
                    s.param_id,
                    s.value,
                    u8::from(s.accepted),
                    t.solve,
                    t.evaluate,
                    t.extend,
                    t.reduce
                )?;
            }
        }
        Ok(())
    }

    /// `i,j,a_ij` for the lower triangle.
    pub fn write_amatrix_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "i,j,a_ij")?;
        for (i, row) in self.amatrix.iter().enumerate() {
            for (j, a) in row.iter().enumerate() {
                writeln!(w, "{i},{j},{a:.17e}")?;
            }
        }
        Ok(())
    }
}

#[derive(Debug)]
pub struct GreedyOutcome {
    pub basis: ReducedBasis,
    pub model: ReducedModel,
    /// Present in weak mode.
    pub estimator: Option<EstimatorBuilder>,
    pub trace: GreedyTrace,
}

/// A failed run together with everything recorded before the failure.
#[derive(Debug)]
pub struct GreedyFailure {
    pub error: Error,
    pub trace: GreedyTrace,
}

impl std::fmt::Display for GreedyFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "greedy run aborted after {} iterations: {}",
            self.trace.iterations.len(),
            self.error
        )
    }
}

impl std::error::Error for GreedyFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

pub type GreedyResult = std::result::Result<GreedyOutcome, Box<GreedyFailure>>;

fn argmax(values: &[f64]) -> (usize, f64) {
    values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| {
            if v > bv {
                (i, v)
            } else {
                (bi, bv)
            }
        })
}

/// Snapshot lookup for strong mode, with one running residual per training point.
struct TrueErrors<'a> {
    snapshots: &'a [Snapshot],
    residuals: Vec<DVector<f64>>,
}

impl TrueErrors<'_> {
    fn project_out(&mut self, basis: &ReducedBasis, from: usize, system: &AffineSystem) {
        let new: Vec<(DVector<f64>, DVector<f64>)> = basis.vectors()[from..]
            .iter()
            .map(|v| (v.clone(), system.gram_apply(v)))
            .collect();
        self.residuals.par_iter_mut().for_each(|w| {
            for (v, mv) in &new {
                let c = mv.dot(w);
                w.axpy(-c, v, 1.0);
            }
        });
    }
}

/// Checks that `snapshots` line up with the training set.
fn check_snapshot_table(training_set: &[ParameterPoint], snapshots: &[Snapshot]) -> Result<()> {
    if snapshots.len() != training_set.len() {
        return Err(Error::Config(format!(
            "{} snapshots supplied for {} training points",
            snapshots.len(),
            training_set.len()
        )));
    }
    if let Some(i) = training_set
        .iter()
        .zip(snapshots)
        .position(|(mu, s)| &s.parameter != mu)
    {
        return Err(Error::Config(format!("missing snapshot for training point {i}")));
    }
    Ok(())
}

fn run(config: &GreedyConfig, system: &AffineSystem, oracle: Option<&[Snapshot]>) -> GreedyResult {
    let mode = if oracle.is_some() {
        GreedyMode::Strong
    } else {
        GreedyMode::Weak
    };
    let mut trace = GreedyTrace::new(config.batch_size, mode);
    macro_rules! bail {
        ($e:expr) => {
            match $e {
                Ok(v) => v,
                Err(error) => return Err(Box::new(GreedyFailure { error, trace })),
            }
        };
    }

    bail!(config.validate());
    if let Some(snapshots) = oracle {
        bail!(check_snapshot_table(&config.training_set, snapshots));
    }
    let pool = bail!(WorkerPool::new(config.worker_count));
    let start = Instant::now();

    let mut basis = ReducedBasis::new();
    let mut model = ReducedModel::empty(system.num_components());
    let mut estimator = match oracle {
        None => Some(bail!(EstimatorBuilder::new(system))),
        Some(_) => None,
    };
    let mut true_errors = oracle.map(|snapshots| TrueErrors {
        snapshots,
        residuals: snapshots.iter().map(|s| s.coefficients.clone()).collect(),
    });
    let training = &config.training_set;
    let mut excluded = vec![false; training.len()];

    for iteration in 0.. {
        let iter_start = Instant::now();
        let mut timings = PhaseTimings::default();

        let t = Instant::now();
        let values: Vec<f64> = match (&estimator, &true_errors) {
            (Some(est), _) => {
                let data = est.data();
                let results = pool.map(training, |_, mu| estimate(data, &model, mu));
                bail!(results.into_iter().collect::<Result<Vec<_>>>())
            }
            (None, Some(te)) => {
                let results = pool.map(&te.residuals, |_, w| system.x_norm(w));
                bail!(results.into_iter().collect::<Result<Vec<_>>>())
            }
            (None, None) => unreachable!("one surrogate is always configured"),
        };
        timings.evaluate = t.elapsed().as_secs_f64();

        let n = basis.len();
        let (best, max_estimate) = argmax(&values);
        if iteration == 0 {
            trace.normalizer = max_estimate;
        }
        let max_relative = if trace.normalizer > 0.0 {
            max_estimate / trace.normalizer
        } else {
            0.0
        };

        let stop = if max_relative <= config.tolerance {
            Some(StopReason::Tolerance)
        } else if n >= config.max_basis_size {
            Some(StopReason::BasisCap)
        } else if excluded.iter().all(|&e| e) {
            Some(StopReason::Exhausted)
        } else {
            None
        };
        let mut record = IterationRecord {
            iteration,
            basis_size: n,
            max_estimate,
            max_relative,
            argmax: best,
            selections: Vec::new(),
            timings,
        };
        if let Some(reason) = stop {
            record.timings.other = iter_start.elapsed().as_secs_f64() - record.timings.total();
            trace.iterations.push(record);
            trace.stop_reason = Some(reason);
            break;
        }

        let room = config.max_basis_size - n;
        let chosen = select_batch(&values, config.batch_size.min(room), &excluded);
        for &id in &chosen {
            excluded[id] = true;
        }

        let t = Instant::now();
        let solved: Vec<Result<Snapshot>> = match &true_errors {
            Some(te) => chosen.iter().map(|&id| Ok(te.snapshots[id].clone())).collect(),
            None => pool.map(&chosen, |_, &id| solve_fom(system, &training[id])),
        };
        record.timings.solve = t.elapsed().as_secs_f64();
        let mut batch = Vec::with_capacity(chosen.len());
        for (k, (&id, snapshot)) in chosen.iter().zip(solved).enumerate() {
            let snapshot = match snapshot {
                Ok(s) => s,
                Err(error) => {
                    trace.iterations.push(record);
                    let error = match error {
                        Error::Numeric { message, residual } => Error::Numeric {
                            message: format!("training point {id}: {message}"),
                            residual,
                        },
                        other => other,
                    };
                    return Err(Box::new(GreedyFailure { error, trace }));
                }
            };
            batch.push((
                snapshot,
                Provenance {
                    parameter: training[id].clone(),
                    param_id: Some(id),
                    iteration,
                    batch_index: k,
                },
            ));
        }

        let t = Instant::now();
        let report = bail!(basis.extend(&batch, system, config.drop_tol));
        record.timings.extend = t.elapsed().as_secs_f64();
        let mut accepted = report.accepted.iter().zip(n..);
        let mut next = accepted.next();
        record.selections = chosen
            .iter()
            .enumerate()
            .map(|(k, &id)| {
                let basis_index = match next {
                    Some((&pos, idx)) if pos == k => {
                        next = accepted.next();
                        Some(idx)
                    }
                    _ => None,
                };
                Selection {
                    param_id: id,
                    value: values[id],
                    accepted: basis_index.is_some(),
                    basis_index,
                }
            })
            .collect();
        trace.amatrix.extend(report.amatrix_rows);

        let t = Instant::now();
        bail!(model.update(&basis, system));
        if let Some(est) = estimator.as_mut() {
            bail!(est.update(&basis, system));
        }
        if let Some(te) = true_errors.as_mut() {
            te.project_out(&basis, n, system);
        }
        record.timings.reduce = t.elapsed().as_secs_f64();
        record.timings.other = iter_start.elapsed().as_secs_f64() - record.timings.total();
        trace.iterations.push(record);
    }

    trace.offline_seconds = start.elapsed().as_secs_f64();
    Ok(GreedyOutcome {
        basis,
        model,
        estimator,
        trace,
    })
}

/// Weak batch greedy: one estimator sweep per iteration, `b` parallel solves.
pub fn run_batch_greedy(config: &GreedyConfig, system: &AffineSystem) -> GreedyResult {
    if config.mode == GreedyMode::Strong {
        return Err(Box::new(GreedyFailure {
            error: Error::Config("strong mode needs the snapshot table; use run_strong_greedy".into()),
            trace: GreedyTrace::new(config.batch_size, config.mode),
        }));
    }
    run(config, system, None)
}

/// Strong (batch) greedy over precomputed snapshots, ranking by true X-norm errors.
///
/// `snapshots[i]` must solve `config.training_set[i]`.
pub fn run_strong_greedy(config: &GreedyConfig, system: &AffineSystem, snapshots: &[Snapshot]) -> GreedyResult {
    run(config, system, Some(snapshots))
}

/// The classical weak greedy: one snapshot per iteration, chosen as the
/// estimator argmax. `config.batch_size` is ignored.
///
/// Kept as a separate serial loop so the batch variant can be checked against it.
pub fn run_weak_greedy(config: &GreedyConfig, system: &AffineSystem) -> GreedyResult {
    let mut trace = GreedyTrace::new(1, GreedyMode::Weak);
    let fail = |error, trace| Err(Box::new(GreedyFailure { error, trace }));
    if let Err(e) = config.validate() {
        return fail(e, trace);
    }
    let start = Instant::now();
    let training = &config.training_set;
    let mut basis = ReducedBasis::new();
    let mut model = ReducedModel::empty(system.num_components());
    let mut estimator = match EstimatorBuilder::new(system) {
        Ok(e) => e,
        Err(e) => return fail(e, trace),
    };
    let mut selected = vec![false; training.len()];

    for iteration in 0.. {
        let iter_start = Instant::now();
        let mut timings = PhaseTimings::default();
        let t = Instant::now();
        let mut values = Vec::with_capacity(training.len());
        for mu in training {
            match estimate(estimator.data(), &model, mu) {
                Ok(v) => values.push(v),
                Err(e) => return fail(e, trace),
            }
        }
        timings.evaluate = t.elapsed().as_secs_f64();

        let (global, max_estimate) = argmax(&values);
        if iteration == 0 {
            trace.normalizer = max_estimate;
        }
        let max_relative = if trace.normalizer > 0.0 {
            max_estimate / trace.normalizer
        } else {
            0.0
        };
        let n = basis.len();
        // argmax over parameters not chosen before; smallest index wins ties
        let mut pick: Option<usize> = None;
        for (i, &v) in values.iter().enumerate() {
            if !selected[i] && pick.is_none_or(|p| v > values[p]) {
                pick = Some(i);
            }
        }
        let stop = if max_relative <= config.tolerance {
            Some(StopReason::Tolerance)
        } else if n >= config.max_basis_size {
            Some(StopReason::BasisCap)
        } else if pick.is_none() {
            Some(StopReason::Exhausted)
        } else {
            None
        };
        let mut record = IterationRecord {
            iteration,
            basis_size: n,
            max_estimate,
            max_relative,
            argmax: global,
            selections: Vec::new(),
            timings,
        };
        if let Some(reason) = stop {
            record.timings.other = iter_start.elapsed().as_secs_f64() - record.timings.total();
            trace.iterations.push(record);
            trace.stop_reason = Some(reason);
            break;
        }
        let id = pick.expect("checked above");
        selected[id] = true;

        let t = Instant::now();
        let snapshot = match solve_fom(system, &training[id]) {
            Ok(s) => s,
            Err(e) => {
                trace.iterations.push(record);
                return fail(e, trace);
            }
        };
        record.timings.solve = t.elapsed().as_secs_f64();

        let t = Instant::now();
        let provenance = Provenance {
            parameter: training[id].clone(),
            param_id: Some(id),
            iteration,
            batch_index: 0,
        };
        let report = match basis.extend(&[(snapshot, provenance)], system, config.drop_tol) {
            Ok(r) => r,
            Err(e) => return fail(e, trace),
        };
        record.timings.extend = t.elapsed().as_secs_f64();
        let accepted = !report.accepted.is_empty();
        record.selections.push(Selection {
            param_id: id,
            value: values[id],
            accepted,
            basis_index: accepted.then_some(n),
        });
        trace.amatrix.extend(report.amatrix_rows);

        let t = Instant::now();
        if let Err(e) = model
            .update(&basis, system)
            .and_then(|_| estimator.update(&basis, system))
        {
            return fail(e, trace);
        }
        record.timings.reduce = t.elapsed().as_secs_f64();
        record.timings.other = iter_start.elapsed().as_secs_f64() - record.timings.total();
        trace.iterations.push(record);
    }
    trace.offline_seconds = start.elapsed().as_secs_f64();
    Ok(GreedyOutcome {
        basis,
        model,
        estimator: Some(estimator),
        trace,
    })
}

/// `max_μ Δ_n(μ)` over `training_set` for every prefix `n = 0, …, model.dim()`.
///
/// Recomputed after the run, so batch runs get the values the greedy never evaluated.
pub fn estimator_maxima(
    model: &ReducedModel,
    data: &EstimatorData,
    training_set: &[ParameterPoint],
    pool: &WorkerPool,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(model.dim() + 1);
    for n in 0..=model.dim() {
        let model = model.truncate(n)?;
        let data = data.truncate(n)?;
        let values = pool.map(training_set, |_, mu| estimate(&data, &model, mu));
        let mut max = 0.0f64;
        for v in values {
            max = max.max(v?);
        }
        out.push(max);
    }
    Ok(out)
}

/// Solves every training point on the pool.
pub fn compute_snapshots(
    system: &AffineSystem,
    training_set: &[ParameterPoint],
    pool: &WorkerPool,
) -> Result<Vec<Snapshot>> {
    pool.map(training_set, |_, mu| solve_fom(system, mu))
        .into_iter()
        .collect()
}

/// `σ_n = max_f ‖f − P_{V_n} f‖_X` over the snapshot table for each requested `n`.
pub fn true_sigma(
    prefix_sizes: &[usize],
    snapshots: &[Snapshot],
    basis: &ReducedBasis,
    system: &AffineSystem,
) -> Result<Vec<f64>> {
    let Some(&largest) = prefix_sizes.iter().max() else {
        return Ok(Vec::new());
    };
    if largest > basis.len() {
        return Err(Error::Range {
            index: largest,
            available: basis.len(),
        });
    }
    let vectors = &basis.vectors()[..largest];
    let images: Vec<DVector<f64>> = vectors.iter().map(|v| system.gram_apply(v)).collect();
    // errors[i][n] for snapshot i after projecting onto the first n vectors
    let errors: Vec<Vec<f64>> = snapshots
        .par_iter()
        .map(|s| {
            let mut w = s.coefficients.clone();
            let mut out = Vec::with_capacity(largest + 1);
            out.push(w.dot(&system.gram_apply(&w)).max(0.0).sqrt());
            for (v, mv) in vectors.iter().zip(&images) {
                let c = mv.dot(&w);
                w.axpy(-c, v, 1.0);
                out.push(w.dot(&system.gram_apply(&w)).max(0.0).sqrt());
            }
            out
        })
        .collect();
    Ok(prefix_sizes
        .iter()
        .map(|&n| errors.iter().map(|e| e[n]).fold(0.0, f64::max))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::thermal_block;

    #[test]
    fn batch_index_arithmetic() {
        assert_eq!(batch_indices(0, 1), (0, 0));
        assert_eq!(batch_indices(1, 3), (3, 5));
        assert_eq!(batch_indices(2, 4), (8, 11));
    }

    #[test]
    fn selection_ties_and_exhaustion() {
        let est = [0.5, 0.9, 0.9, 0.1];
        let none = [false; 4];
        assert_eq!(select_batch(&est, 2, &none), vec![1, 2]);
        assert_eq!(select_batch(&est, 1, &none), vec![1]);
        assert_eq!(select_batch(&est, 10, &none), vec![1, 2, 0, 3]);
        assert_eq!(select_batch(&est, 10, &[false, true, false, true]), vec![2, 0]);
        assert!(select_batch(&est, 3, &[true; 4]).is_empty());
    }

    #[test]
    fn config_validation() {
        let pts = vec![ParameterPoint::uniform(4, 0.5), ParameterPoint::uniform(4, 0.5)];
        assert!(GreedyConfig::new(pts).validate().is_err());
        assert!(GreedyConfig::new(vec![]).validate().is_err());
        let ok = GreedyConfig::new(vec![ParameterPoint::uniform(4, 0.5)]);
        assert!(ok.clone().with_batch_size(0).validate().is_err());
        assert!(ok.clone().with_tolerance(0.0).validate().is_err());
        assert!(ok.validate().is_ok());
    }

    #[test]
    fn strong_mode_requires_snapshots() {
        let system = thermal_block(4, 4, 2, 2, 1.0).unwrap();
        let mut config = GreedyConfig::new(vec![ParameterPoint::uniform(4, 0.5)]);
        config.mode = GreedyMode::Strong;
        assert!(run_batch_greedy(&config, &system).is_err());
        let err = run_strong_greedy(&config, &system, &[]).unwrap_err();
        assert!(matches!(err.error, Error::Config(_)));
    }

    #[test]
    fn single_point_strong_greedy() {
        let system = thermal_block(8, 8, 2, 2, 1.0).unwrap();
        let mu = ParameterPoint::new(vec![0.3, 0.4, 0.5, 0.6]);
        let snapshots = vec![solve_fom(&system, &mu).unwrap()];
        let config = GreedyConfig::new(vec![mu]);
        let out = run_strong_greedy(&config, &system, &snapshots).unwrap();
        assert_eq!(out.basis.len(), 1);
        let sigma = true_sigma(&[0, 1], &snapshots, &out.basis, &system).unwrap();
        assert!(sigma[1] <= 1e-10 * sigma[0]);
        assert!(true_sigma(&[2], &snapshots, &out.basis, &system).is_err());
    }

    #[test]
    fn trace_csv_layout() {
        let system = thermal_block(8, 8, 2, 2, 1.0).unwrap();
        let training: Vec<_> = [0.1, 0.4, 0.7, 1.0]
            .iter()
            .flat_map(|&a| [0.1, 1.0].map(|b| ParameterPoint::new(vec![a, b, 1.0 - 0.5 * a, b])))
            .collect();
        let config = GreedyConfig::new(training).with_batch_size(2).with_tolerance(1e-3);
        let out = run_batch_greedy(&config, &system).unwrap();
        let mut buf = Vec::new();
        out.trace.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "iter,n,param_id,est_value,accepted,t_solve,t_evaluate,t_extend,t_reduce"
        );
        assert_eq!(lines.count(), out.trace.selection_sequence().len());
        let mut buf = Vec::new();
        out.trace.write_amatrix_csv(&mut buf).unwrap();
        let rows = String::from_utf8(buf).unwrap().lines().count() - 1;
        let n = out.trace.num_accepted();
        assert_eq!(rows, n * (n + 1) / 2);
    }
}
