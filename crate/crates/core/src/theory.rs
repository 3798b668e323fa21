//! Empirical verification of the batch greedy convergence theory.
//!
//! Every check here is one-sided: the Kolmogorov width `d_n` is replaced by a
//! computable upper bound `d_up[n] ≥ d_n`, so a correct run must pass and a
//! failure points at an implementation error.
//!
//! Unless stated otherwise the inputs are expected in normalized units, i.e.
//! `σ_0 = 1` (see [`normalize`]).

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{AffineSystem, Snapshot};
use crate::greedy::{true_sigma, GreedyTrace};
use crate::rb::ReducedBasis;

/// Absolute slack of the Lemma checks.
pub const LEMMA_SLACK: f64 = 1e-10;
/// Modes whose X-norm after orthogonalization falls below this fraction of
/// `√λ_max` are treated as numerically dependent.
const ROUNDOFF: f64 = 1e-13;
/// Relative slack of the theorem checks.
pub const THEOREM_SLACK: f64 = 1e-8;

/// Least-squares fit of `C e^{-c n^α}` in the log domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// Prefactor `C`.
    pub scale: f64,
    /// Rate `c`.
    pub rate: f64,
    pub alpha: f64,
    /// Root-mean-square log-domain misfit.
    pub residual: f64,
}

impl DecayFit {
    pub fn eval(&self, n: f64) -> f64 {
        self.scale * (-self.rate * n.powf(self.alpha)).exp()
    }

    /// `exp(residual)`: typical multiplicative misfit.
    pub fn residual_factor(&self) -> f64 {
        self.residual.exp()
    }

    pub fn is_decaying(&self) -> bool {
        self.rate > 1e-10
    }
}

fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    // y ≈ a + s·x, returns (a, s, rms)
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let a = my - slope * mx;
    let rms = (xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - a - slope * x).powi(2))
        .sum::<f64>()
        / m)
        .sqrt();
    (a, slope, rms)
}

fn fit_fixed_alpha(points: &[(f64, f64)], alpha: f64) -> DecayFit {
    let xs: Vec<f64> = points.iter().map(|(n, _)| n.powf(alpha)).collect();
    let ys: Vec<f64> = points.iter().map(|(_, v)| v.ln()).collect();
    let (a, slope, rms) = linear_fit(&xs, &ys);
    DecayFit {
        scale: a.exp(),
        rate: -slope,
        alpha,
        residual: rms,
    }
}

/// Fits `C e^{-c n^α}` to `(n, value)` pairs. With `alpha = None` the exponent is
/// chosen by golden-section search on `[0.2, 2]`.
pub fn fit_exponential_points(points: &[(f64, f64)], alpha: Option<f64>) -> Result<DecayFit> {
    if points.len() < 4 {
        return Err(Error::InsufficientData(format!(
            "need at least 4 values, got {}",
            points.len()
        )));
    }
    if let Some((_, v)) = points.iter().find(|(_, v)| !(*v > 0.0)) {
        return Err(Error::Domain(format!("decay fit needs positive values, got {v}")));
    }
    if let Some(a) = alpha {
        return Ok(fit_fixed_alpha(points, a));
    }
    let residual = |a: f64| fit_fixed_alpha(points, a).residual;
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (0.2, 2.0);
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let (mut f1, mut f2) = (residual(x1), residual(x2));
    while hi - lo > 1e-7 {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = residual(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = residual(x2);
        }
    }
    Ok(fit_fixed_alpha(points, 0.5 * (lo + hi)))
}

/// [`fit_exponential_points`] with `n` equal to the position in `values`.
pub fn fit_exponential(values: &[f64], alpha: Option<f64>) -> Result<DecayFit> {
    let points: Vec<(f64, f64)> = values.iter().enumerate().map(|(n, &v)| (n as f64, v)).collect();
    fit_exponential_points(&points, alpha)
}

/// Fits `C₀ n^{-α}` in log-log coordinates; returns `(C₀, α, rms)`.
pub fn fit_polynomial_points(points: &[(f64, f64)]) -> Result<(f64, f64, f64)> {
    if points.len() < 4 {
        return Err(Error::InsufficientData(format!(
            "need at least 4 values, got {}",
            points.len()
        )));
    }
    if points.iter().any(|&(n, v)| !(n > 0.0 && v > 0.0)) {
        return Err(Error::Domain("polynomial fit needs positive n and values".into()));
    }
    let xs: Vec<f64> = points.iter().map(|(n, _)| n.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|(_, v)| v.ln()).collect();
    let (a, slope, rms) = linear_fit(&xs, &ys);
    Ok((a.exp(), -slope, rms))
}

/// POD-based upper bounds on the discrete Kolmogorov widths of a snapshot set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WidthSurrogate {
    /// `d_up[n] = max_f ‖f − P_{W_n} f‖_X` for the n-dimensional POD space `W_n`.
    pub d_up: Vec<f64>,
    /// Eigenvalues of the X-weighted correlation matrix, nonincreasing.
    pub pod_eigs: Vec<f64>,
    /// Number of numerically independent POD modes.
    pub rank: usize,
    /// X-orthonormal modes spanning the spaces `W_n`.
    #[serde(skip)]
    pub modes: Vec<DVector<f64>>,
}

/// Builds POD spaces by the method of snapshots and measures the worst-case
/// projection error of the snapshot set onto each of them.
///
/// Any n-dimensional space bounds `d_n` from above, so `d_up[n] ≥ d_n` holds no
/// matter how accurately the POD modes are computed.
pub fn pod_width_upper_bound(snapshots: &[Snapshot], system: &AffineSystem, n_max: usize) -> Result<WidthSurrogate> {
    let m = snapshots.len();
    if m == 0 {
        return Err(Error::InsufficientData("no snapshots".into()));
    }
    let images: Vec<DVector<f64>> = snapshots.iter().map(|s| system.gram_apply(&s.coefficients)).collect();
    let corr = DMatrix::from_fn(m, m, |i, j| {
        if i <= j {
            snapshots[i].coefficients.dot(&images[j])
        } else {
            snapshots[j].coefficients.dot(&images[i])
        }
    });
    let eig = SymmetricEigen::new(corr);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let pod_eigs: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k].max(0.0)).collect();
    let scale = pod_eigs[0].sqrt();

    // modes ψ_k = Σ_i U_ik f_i, re-orthonormalized in X with two Gram-Schmidt sweeps;
    // inaccurate trailing modes are harmless since any subspace gives an upper bound
    let dofs = system.dof_count();
    let mut modes: Vec<(DVector<f64>, DVector<f64>)> = Vec::new();
    for &k in &order {
        if modes.len() == n_max {
            break;
        }
        let mut psi = DVector::zeros(dofs);
        for (i, s) in snapshots.iter().enumerate() {
            psi.axpy(eig.eigenvectors[(i, k)], &s.coefficients, 1.0);
        }
        let original = system.x_norm(&psi)?;
        for _ in 0..2 {
            for (v, mv) in &modes {
                let c = mv.dot(&psi);
                psi.axpy(-c, v, 1.0);
            }
        }
        let mpsi = system.gram_apply(&psi);
        let norm = psi.dot(&mpsi).max(0.0).sqrt();
        if norm <= 1e-10 * original || norm <= ROUNDOFF * scale {
            continue;
        }
        modes.push((psi / norm, mpsi / norm));
    }
    let rank = modes.len();

    let mut d_up = vec![0.0; n_max + 1];
    for s in snapshots {
        let mut w = s.coefficients.clone();
        let mut err = w.dot(&system.gram_apply(&w)).max(0.0).sqrt();
        d_up[0] = f64::max(d_up[0], err);
        for (n, (v, mv)) in modes.iter().enumerate() {
            let c = mv.dot(&w);
            w.axpy(-c, v, 1.0);
            err = w.dot(&system.gram_apply(&w)).max(0.0).sqrt();
            d_up[n + 1] = f64::max(d_up[n + 1], err);
        }
    }
    // past the rank the space stops growing: keep the last bound, or 0 at round-off level
    let tail = if d_up[rank] <= 1e-12 * d_up[0] { 0.0 } else { d_up[rank] };
    for d in &mut d_up[rank..] {
        *d = tail;
    }
    Ok(WidthSurrogate {
        d_up,
        pod_eigs,
        rank,
        modes: modes.into_iter().map(|(v, _)| v).collect(),
    })
}

/// Context recorded with every check.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckContext {
    pub n: Option<usize>,
    pub b: usize,
    pub gamma: f64,
    pub alpha: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Pass,
    Fail,
    InsufficientData,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub status: CheckStatus,
    /// Smallest `bound − value` seen (logarithmic for product bounds); negative on failure.
    pub worst_margin: f64,
    pub checked: usize,
    /// Index (or `N` for product bounds) of the first violation.
    pub first_violation: Option<usize>,
    pub context: CheckContext,
    /// The bound was vacuous for some inputs and not asserted there.
    pub degenerate: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl CheckReport {
    fn new(name: &str, context: CheckContext) -> Self {
        CheckReport {
            name: name.to_string(),
            status: CheckStatus::Pass,
            worst_margin: f64::INFINITY,
            checked: 0,
            first_violation: None,
            context,
            degenerate: false,
            note: None,
        }
    }

    pub fn passed(&self) -> bool {
        self.status == CheckStatus::Pass
    }

    fn record(&mut self, index: usize, margin: f64, ok: bool) {
        self.checked += 1;
        self.worst_margin = self.worst_margin.min(margin);
        if !ok {
            self.status = CheckStatus::Fail;
            if self.first_violation.is_none() {
                self.first_violation = Some(index);
                self.context.n = Some(index);
            }
        }
    }

    fn merge(&mut self, other: &CheckReport) {
        self.checked += other.checked;
        self.worst_margin = self.worst_margin.min(other.worst_margin);
        self.degenerate |= other.degenerate;
        if other.status == CheckStatus::Fail && self.status != CheckStatus::Fail {
            self.status = CheckStatus::Fail;
            self.first_violation = other.first_violation;
            self.context.n = other.context.n;
        }
    }
}

/// Projection-coefficient matrix and σ sequence scaled so that `σ_0 = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedRun {
    pub amatrix: Vec<Vec<f64>>,
    pub sigma: Vec<f64>,
    pub d_up: Vec<f64>,
    pub scale: f64,
}

/// Divides `amatrix`, `sigma` and `d_up` by `sigma[0]`.
pub fn normalize(amatrix: &[Vec<f64>], sigma: &[f64], d_up: &[f64]) -> Result<NormalizedRun> {
    let scale = *sigma
        .first()
        .ok_or_else(|| Error::InsufficientData("empty σ sequence".into()))?;
    if !(scale > 0.0) {
        return Err(Error::Domain(format!("σ₀ must be positive, got {scale}")));
    }
    Ok(NormalizedRun {
        amatrix: amatrix
            .iter()
            .map(|row| row.iter().map(|a| a / scale).collect())
            .collect(),
        sigma: sigma.iter().map(|s| s / scale).collect(),
        d_up: d_up.iter().map(|d| d / scale).collect(),
        scale,
    })
}

/// `min |a_nn| / σ_n` over `indices`.
///
/// Over all accepted indices this is the largest `γ` for which the run is a weak
/// greedy realization; over the batch leaders it is the constant of the
/// leader-selection rule alone.
pub fn gamma_empirical(amatrix: &[Vec<f64>], sigma: &[f64], indices: &[usize]) -> f64 {
    indices
        .iter()
        .filter(|&&n| n < amatrix.len() && n < sigma.len() && sigma[n] > 0.0)
        .map(|&n| amatrix[n][n].abs() / sigma[n])
        .fold(1.0, f64::min)
}

/// Diagonal bounds `γ σ_{n+b−1} ≤ |a_nn| ≤ σ_n`.
///
/// `σ` past the end of `sigma` is taken as its last entry.
pub fn check_p1(amatrix: &[Vec<f64>], sigma: &[f64], gamma: f64, b: usize) -> CheckReport {
    let mut report = CheckReport::new(
        "lemma_p1",
        CheckContext {
            n: None,
            b,
            gamma,
            alpha: None,
        },
    );
    let Some(&last) = sigma.last() else {
        report.status = CheckStatus::InsufficientData;
        return report;
    };
    for (n, row) in amatrix.iter().enumerate() {
        let Some(&sigma_n) = sigma.get(n) else { break };
        let diag = row[n].abs();
        let shifted = sigma.get(n + b - 1).copied().unwrap_or(last);
        let upper = sigma_n + LEMMA_SLACK - diag;
        let lower = diag + LEMMA_SLACK - gamma * shifted;
        report.record(n, upper.min(lower), upper >= 0.0 && lower >= 0.0);
    }
    report
}

/// Tail sums `Σ_{j=n}^{m} a_{m,j}² ≤ σ_n²` for all `m ≥ n`.
///
/// The unsquared form `≤ σ_n` is tracked in the note.
pub fn check_p2(amatrix: &[Vec<f64>], sigma: &[f64]) -> CheckReport {
    let mut report = CheckReport::new("lemma_p2", CheckContext::default());
    let mut unsquared_margin = f64::INFINITY;
    for n in 0..amatrix.len().min(sigma.len()) {
        for row in &amatrix[n..] {
            let tail: f64 = row[n..].iter().map(|a| a * a).sum();
            let margin = sigma[n] * sigma[n] + LEMMA_SLACK - tail;
            unsquared_margin = unsquared_margin.min(sigma[n] + LEMMA_SLACK - tail);
            report.record(n, margin, margin >= 0.0);
        }
    }
    report.note = Some(format!("unsquared form worst margin {unsquared_margin:.3e}"));
    report
}

fn sigma_at(sigma: &[f64], index: usize) -> Result<f64> {
    sigma.get(index).copied().ok_or(Error::Range {
        index,
        available: sigma.len(),
    })
}

/// `Π_{i=1}^K σ²_{N+b−1+i} ≤ γ^{−2K} (K/m)^m (K/(K−m))^{K−m} σ_{N+1}^{2m} d_m^{2(K−m)}`.
#[allow(clippy::too_many_arguments)]
pub fn bound_theorem_product(
    big_n: usize,
    k: usize,
    m: usize,
    b: usize,
    gamma: f64,
    sigma: &[f64],
    d_up: &[f64],
) -> Result<CheckReport> {
    if !(1 <= m && m < k) {
        return Err(Error::Config(format!("need 1 ≤ m < K, got m={m}, K={k}")));
    }
    if b == 0 {
        return Err(Error::Config("batch size must be at least 1".into()));
    }
    let d_m = sigma_at(d_up, m)?;
    let head = sigma_at(sigma, big_n + 1)?;
    let mut lhs = 1.0;
    for i in 1..=k {
        let s = sigma_at(sigma, big_n + b - 1 + i)?;
        lhs *= s * s;
    }
    let (kf, mf) = (k as f64, m as f64);
    let rhs = gamma.powi(-2 * k as i32)
        * (kf / mf).powf(mf)
        * (kf / (kf - mf)).powf(kf - mf)
        * head.powi(2 * m as i32)
        * d_m.powi(2 * (k - m) as i32);
    let mut report = CheckReport::new(
        "theorem_product",
        CheckContext {
            n: Some(big_n),
            b,
            gamma,
            alpha: None,
        },
    );
    let margin = if lhs == 0.0 { f64::INFINITY } else { (rhs / lhs).ln() };
    report.record(big_n, margin, lhs <= rhs * (1.0 + THEOREM_SLACK));
    Ok(report)
}

/// `σ_{2n+b−1} ≤ √2 γ⁻¹ √d_n` and `σ_{n+b−1} ≤ √2 γ⁻¹ min_{1≤m<n} d_m^{(n−m)/n}`.
pub fn bound_sqrt_width(n: usize, b: usize, gamma: f64, sigma: &[f64], d_up: &[f64]) -> Result<CheckReport> {
    if n == 0 || b == 0 {
        return Err(Error::Config("need n ≥ 1 and b ≥ 1".into()));
    }
    let mut report = CheckReport::new(
        "theorem_sqrt_width",
        CheckContext {
            n: Some(n),
            b,
            gamma,
            alpha: None,
        },
    );
    let value = sigma_at(sigma, 2 * n + b - 1)?;
    let bound = 2f64.sqrt() / gamma * sigma_at(d_up, n)?.sqrt();
    report.record(n, bound - value, value <= bound * (1.0 + THEOREM_SLACK));

    if n >= 2 {
        let value = sigma_at(sigma, n + b - 1)?;
        let mut best = f64::INFINITY;
        for m in 1..n {
            let d = sigma_at(d_up, m)?;
            best = best.min(d.powf((n - m) as f64 / n as f64));
        }
        let bound = 2f64.sqrt() / gamma * best;
        report.record(n, bound - value, value <= bound * (1.0 + THEOREM_SLACK));
    }
    Ok(report)
}

/// `C₁(n, b) = max{C₀ 2^{α+1} γ⁻² ⌈4 + (b−1)/n⌉^{2α}, (b+2)^α}`.
pub fn constant_c1_polynomial(n: usize, b: usize, alpha: f64, gamma: f64, c0: f64) -> f64 {
    let ceil = (4.0 + (b as f64 - 1.0) / n as f64).ceil();
    let first = c0 * 2f64.powf(alpha + 1.0) * gamma.powi(-2) * ceil.powf(2.0 * alpha);
    first.max((b as f64 + 2.0).powf(alpha))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExponentialRate {
    pub value: f64,
    /// First branch `c₀ 2^{−(α+1)} ⌈2 + (b−1)/n⌉^{−α}`.
    pub first_term: f64,
    /// `C₁ ≤ 1`: the second branch is non-positive and the bound says nothing.
    pub degenerate: bool,
}

/// `c₁(n, b) = min{c₀ 2^{−(α+1)} ⌈2 + (b−1)/n⌉^{−α}, ln(C₁) b^{−α}}`.
pub fn constant_c1_exponential(n: usize, b: usize, alpha: f64, c0: f64, big_c1: f64) -> ExponentialRate {
    let ceil = (2.0 + (b as f64 - 1.0) / n as f64).ceil();
    let first_term = c0 * 2f64.powf(-(alpha + 1.0)) * ceil.powf(-alpha);
    let second = big_c1.ln() * (b as f64).powf(-alpha);
    ExponentialRate {
        value: first_term.min(second),
        first_term,
        degenerate: big_c1 <= 1.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateBoundReport {
    pub polynomial: CheckReport,
    pub exponential: CheckReport,
    /// `(n, bound/σ_n)` for the polynomial and exponential bounds.
    pub polynomial_ratios: Vec<(usize, f64)>,
    pub exponential_ratios: Vec<(usize, f64)>,
    pub width_fit: Option<DecayFit>,
}

/// Fits the width hypotheses of the algebraic and exponential rate results to
/// `d_up` and checks the resulting bounds on every recorded `σ_n`, `n ≥ 1`.
///
/// Each bound is inflated by `1 + 3·r`, where `r` is the fit's residual factor.
pub fn check_rate_bounds(sigma: &[f64], d_up: &[f64], b: usize, gamma: f64) -> RateBoundReport {
    let context = CheckContext {
        n: None,
        b,
        gamma,
        alpha: None,
    };
    let mut polynomial = CheckReport::new("rate_polynomial", context);
    let mut exponential = CheckReport::new("rate_exponential", context);
    let mut out_poly = Vec::new();
    let mut out_exp = Vec::new();

    let floor = 1e-13 * d_up.first().copied().unwrap_or(0.0);
    let width_points: Vec<(f64, f64)> = d_up
        .iter()
        .enumerate()
        .skip(1)
        .filter(|(_, &d)| d > floor)
        .map(|(n, &d)| (n as f64, d))
        .collect();
    let nonzero_sigma = sigma.iter().skip(1).filter(|&&s| s > 0.0).count();
    let insufficient = |mut r: CheckReport, why: &str| {
        r.status = CheckStatus::InsufficientData;
        r.note = Some(why.to_string());
        r
    };
    if nonzero_sigma < 4 || width_points.len() < 4 {
        let why = "fewer than 4 nonzero values";
        return RateBoundReport {
            polynomial: insufficient(polynomial, why),
            exponential: insufficient(exponential, why),
            polynomial_ratios: out_poly,
            exponential_ratios: out_exp,
            width_fit: None,
        };
    }

    if let Ok((c0, alpha, rms)) = fit_polynomial_points(&width_points) {
        polynomial.context.alpha = Some(alpha);
        let slack = 1.0 + 3.0 * rms.exp();
        for (n, &s) in sigma.iter().enumerate().skip(1) {
            let bound = constant_c1_polynomial(n, b, alpha, gamma, c0) * (n as f64).powf(-alpha) * slack;
            out_poly.push((n, if s > 0.0 { bound / s } else { f64::INFINITY }));
            polynomial.record(n, bound - s, s <= bound);
        }
    }

    let width_fit = fit_exponential_points(&width_points, None).ok();
    if let Some(fit) = width_fit {
        exponential.context.alpha = Some(fit.alpha);
        let big_c1 = (2.0 * fit.scale).sqrt() / gamma;
        let slack = 1.0 + 3.0 * fit.residual_factor();
        for (n, &s) in sigma.iter().enumerate().skip(1) {
            let rate = constant_c1_exponential(n, b, fit.alpha, fit.rate, big_c1);
            if rate.degenerate {
                exponential.degenerate = true;
                continue;
            }
            let bound = big_c1 * (-rate.value * (n as f64).powf(fit.alpha)).exp() * slack;
            out_exp.push((n, if s > 0.0 { bound / s } else { f64::INFINITY }));
            exponential.record(n, bound - s, s <= bound);
        }
    }

    RateBoundReport {
        polynomial,
        exponential,
        polynomial_ratios: out_poly,
        exponential_ratios: out_exp,
        width_fit,
    }
}

/// Runs every check on one oracle run and returns one report per check family.
///
/// `sigma` must hold `σ_0 … σ_{n_final}` and all inputs are normalized here.
pub fn run_all_checks(
    trace: &GreedyTrace,
    sigma: &[f64],
    d_up: &[f64],
    gamma: Option<f64>,
) -> Result<Vec<CheckReport>> {
    let run = normalize(&trace.amatrix, sigma, d_up)?;
    let b = trace.batch_size;
    let all: Vec<usize> = (0..run.amatrix.len()).collect();
    let gamma = gamma.unwrap_or_else(|| gamma_empirical(&run.amatrix, &run.sigma, &all));
    let last = run.sigma.len() - 1;

    let mut reports = vec![check_p1(&run.amatrix, &run.sigma, gamma, b), check_p2(&run.amatrix, &run.sigma)];

    let ctx = CheckContext {
        n: None,
        b,
        gamma,
        alpha: None,
    };
    let mut product = CheckReport::new("theorem_product", ctx);
    for k in 2..=6usize {
        for m in 1..k {
            if m >= run.d_up.len() {
                continue;
            }
            let mut big_n = 0;
            while big_n + b - 1 + k <= last {
                product.merge(&bound_theorem_product(big_n, k, m, b, gamma, &run.sigma, &run.d_up)?);
                big_n += 1;
            }
        }
    }
    if product.checked == 0 {
        product.status = CheckStatus::InsufficientData;
    }
    reports.push(product);

    let mut sqrt_width = CheckReport::new("theorem_sqrt_width", ctx);
    let mut n = 1;
    while 2 * n + b - 1 <= last && n < run.d_up.len() {
        sqrt_width.merge(&bound_sqrt_width(n, b, gamma, &run.sigma, &run.d_up)?);
        n += 1;
    }
    if sqrt_width.checked == 0 {
        sqrt_width.status = CheckStatus::InsufficientData;
    }
    reports.push(sqrt_width);

    let rates = check_rate_bounds(&run.sigma, &run.d_up, b, gamma);
    reports.push(rates.polynomial);
    reports.push(rates.exponential);
    Ok(reports)
}

/// `σ_0 … σ_{n}` of `basis` over the snapshot table, `n = basis.len()`.
pub fn sigma_sequence(snapshots: &[Snapshot], basis: &ReducedBasis, system: &AffineSystem) -> Result<Vec<f64>> {
    let sizes: Vec<usize> = (0..=basis.len()).collect();
    true_sigma(&sizes, snapshots, basis, system)
}
