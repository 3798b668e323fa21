//! Residual-based a posteriori error estimator
//! `Δ_n(μ) = ‖f − A(μ)V c‖_{X'} / α_LB(μ)`.
//!
//! The dual norm of the residual is the X-norm of its Riesz representer. With
//! representers `z_f = M_X⁻¹ f` and `z_{p,j} = M_X⁻¹ A_p v_j`, the squared norm
//! expands into
//!
//! ```text
//! ‖r‖²_{X'} = ⟨z_f, z_f⟩ − 2 Σ μ_p c_j ⟨z_f, z_{p,j}⟩ + Σ μ_p c_j μ_q c_k ⟨z_{p,j}, z_{q,k}⟩
//! ```
//!
//! whose tables are computed offline. Online evaluation only touches these
//! tables, so its cost does not depend on the number of full-order unknowns.
//!
//! For the thermal block, `a_μ(v, v) = Σ_p μ_p |v|²_{1,Ω_p}`, so `min_p μ_p` is an
//! exact coercivity constant and `max_p μ_p` an exact continuity constant with
//! respect to the X-norm.

use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::factorization::CscCholesky;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{cholesky_solve, AffineSystem, ParameterBox, ParameterPoint};
use crate::rb::{reconstruct, solve_rom, ReducedBasis, ReducedModel};

/// Threshold `Δ_n < CANCELLATION_RATIO · Δ_0` below which round-off dominates the expansion.
pub const CANCELLATION_RATIO: f64 = 1e-7;

/// Min-theta coercivity lower bound `α_LB(μ) = min_p μ_p`.
pub fn coercivity_lower_bound(mu: &ParameterPoint) -> Result<f64> {
    mu.ensure_positive()?;
    if mu.is_empty() {
        return Err(Error::Domain("empty parameter".into()));
    }
    Ok(mu.min_weight())
}

/// Continuity upper bound `γ_UB(μ) = max_p μ_p`.
pub fn continuity_upper_bound(mu: &ParameterPoint) -> Result<f64> {
    mu.ensure_positive()?;
    if mu.is_empty() {
        return Err(Error::Domain("empty parameter".into()));
    }
    Ok(mu.max_weight())
}

/// Effectivity constants over a parameter box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectivityBounds {
    pub domain: ParameterBox,
}

impl EffectivityBounds {
    pub fn new(domain: ParameterBox) -> Self {
        EffectivityBounds { domain }
    }

    pub fn alpha_lb(&self, mu: &ParameterPoint) -> Result<f64> {
        coercivity_lower_bound(mu)
    }

    pub fn gamma_ub(&self, mu: &ParameterPoint) -> Result<f64> {
        continuity_upper_bound(mu)
    }

    /// Worst ratio `α_LB/γ_UB` over the box: `μ_min / μ_max`.
    pub fn gamma_greedy(&self) -> f64 {
        self.domain.min / self.domain.max
    }
}

impl Default for EffectivityBounds {
    fn default() -> Self {
        EffectivityBounds::new(ParameterBox::default())
    }
}

/// Online tables of the residual expansion.
///
/// Representer index `j·P + p` pairs basis vector `j` with component `p`, so the
/// tables of a basis prefix are leading blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorData {
    pub num_components: usize,
    pub dim: usize,
    /// `⟨z_f, z_f⟩_X`.
    pub load_load: f64,
    /// `⟨z_f, z_{p,j}⟩_X`.
    pub load_component: DVector<f64>,
    /// `⟨z_{p,j}, z_{q,k}⟩_X`.
    pub component_component: DMatrix<f64>,
}

impl EstimatorData {
    pub fn truncate(&self, n: usize) -> Result<EstimatorData> {
        if n > self.dim {
            return Err(Error::Range {
                index: n,
                available: self.dim,
            });
        }
        let m = n * self.num_components;
        Ok(EstimatorData {
            num_components: self.num_components,
            dim: n,
            load_load: self.load_load,
            load_component: self.load_component.rows(0, m).into_owned(),
            component_component: self.component_component.view((0, 0), (m, m)).into_owned(),
        })
    }

    /// `‖r‖²_{X'}` from the quadratic expansion, before clamping.
    pub fn residual_norm_squared(&self, mu: &ParameterPoint, coeffs: &DVector<f64>) -> Result<f64> {
        if coeffs.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                actual: coeffs.len(),
            });
        }
        if mu.len() != self.num_components {
            return Err(Error::Dimension {
                expected: self.num_components,
                actual: mu.len(),
            });
        }
        let p = self.num_components;
        let w = DVector::from_fn(self.dim * p, |i, _| coeffs[i / p] * mu.weights()[i % p]);
        let linear = w.dot(&self.load_component);
        let quadratic = w.dot(&(&self.component_component * &w));
        Ok(self.load_load - 2.0 * linear + quadratic)
    }

    pub fn residual_dual_norm(&self, mu: &ParameterPoint, coeffs: &DVector<f64>) -> Result<f64> {
        Ok(self.residual_norm_squared(mu, coeffs)?.max(0.0).sqrt())
    }

    /// `Δ_n(μ)` for given reduced coefficients.
    pub fn estimate_with_coefficients(&self, mu: &ParameterPoint, coeffs: &DVector<f64>) -> Result<f64> {
        Ok(self.residual_dual_norm(mu, coeffs)? / coercivity_lower_bound(mu)?)
    }

    /// `Δ_0(μ) = ‖f‖_{X'} / α_LB(μ)`, the estimate for the zero approximation.
    pub fn initial_estimate(&self, mu: &ParameterPoint) -> Result<f64> {
        Ok(self.load_load.max(0.0).sqrt() / coercivity_lower_bound(mu)?)
    }
}

/// Offline state: the factorization of `M_X` and all Riesz representers.
pub struct EstimatorBuilder {
    gram_factor: CscCholesky<f64>,
    riesz_load: DVector<f64>,
    riesz_components: Vec<DVector<f64>>,
    // A_p v_j, kept alongside the representers for the table updates
    images: Vec<DVector<f64>>,
    data: EstimatorData,
}

impl std::fmt::Debug for EstimatorBuilder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EstimatorBuilder")
            .field("data", &self.data)
            .finish_non_exhaustive()
    }
}

impl EstimatorBuilder {
    /// Estimator for the empty basis.
    pub fn new(system: &AffineSystem) -> Result<Self> {
        let gram_factor = system.factor_gram()?;
        let riesz_load = cholesky_solve(&gram_factor, system.load());
        let load_load = riesz_load.dot(system.load());
        Ok(EstimatorBuilder {
            gram_factor,
            riesz_load,
            riesz_components: Vec::new(),
            images: Vec::new(),
            data: EstimatorData {
                num_components: system.num_components(),
                dim: 0,
                load_load,
                load_component: DVector::zeros(0),
                component_component: DMatrix::zeros(0, 0),
            },
        })
    }

    pub fn data(&self) -> &EstimatorData {
        &self.data
    }

    pub fn riesz_load(&self) -> &DVector<f64> {
        &self.riesz_load
    }

    /// Representer of `A_p v_j`.
    pub fn riesz_component(&self, p: usize, j: usize) -> &DVector<f64> {
        &self.riesz_components[j * self.data.num_components + p]
    }

    /// `M_X⁻¹ r`.
    pub fn riesz(&self, r: &DVector<f64>) -> DVector<f64> {
        cholesky_solve(&self.gram_factor, r)
    }

    /// Adds representers and table entries for basis vectors not yet covered.
    pub fn update(&mut self, basis: &ReducedBasis, system: &AffineSystem) -> Result<()> {
        let old = self.data.dim;
        let n = basis.len();
        if n < old {
            return Err(Error::Config("estimator is ahead of the basis".into()));
        }
        if n == old {
            return Ok(());
        }
        let p_count = self.data.num_components;
        for j in old..n {
            for p in 0..p_count {
                let image = system.apply_component(p, &basis.vectors()[j]);
                self.riesz_components.push(self.riesz(&image));
                self.images.push(image);
            }
        }
        let (m_old, m) = (old * p_count, n * p_count);

        let mut load_component = DVector::zeros(m);
        load_component.rows_mut(0, m_old).copy_from(&self.data.load_component);
        for a in m_old..m {
            load_component[a] = self.riesz_load.dot(&self.images[a]);
        }

        let mut cc = DMatrix::zeros(m, m);
        cc.view_mut((0, 0), (m_old, m_old))
            .copy_from(&self.data.component_component);
        for a in m_old..m {
            for b in 0..=a {
                let value = self.riesz_components[b].dot(&self.images[a]);
                cc[(a, b)] = value;
                cc[(b, a)] = value;
            }
        }

        self.data.dim = n;
        self.data.load_component = load_component;
        self.data.component_component = cc;
        Ok(())
    }
}

/// Builds the estimator for `basis` from scratch.
pub fn build_estimator(basis: &ReducedBasis, system: &AffineSystem) -> Result<EstimatorBuilder> {
    let mut builder = EstimatorBuilder::new(system)?;
    builder.update(basis, system)?;
    Ok(builder)
}

/// `Δ_n(μ)`, solving the reduced problem first.
pub fn estimate(data: &EstimatorData, model: &ReducedModel, mu: &ParameterPoint) -> Result<f64> {
    let coeffs = solve_rom(model, mu)?;
    data.estimate_with_coefficients(mu, &coeffs)
}

/// Comparison of the offline/online residual norm against a direct evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RieszDiagnostic {
    pub offline_online: f64,
    pub direct: f64,
    pub relative_deviation: f64,
    /// `Δ_n(μ) < 10⁻⁷ Δ_0(μ)`: the expansion has lost most of its significant digits.
    pub cancellation_regime: bool,
}

/// Recomputes `‖r‖_{X'}` by assembling `r = f − A(μ)Vc` and solving `M_X z = r`.
pub fn check_riesz(
    builder: &EstimatorBuilder,
    model: &ReducedModel,
    basis: &ReducedBasis,
    system: &AffineSystem,
    mu: &ParameterPoint,
) -> Result<RieszDiagnostic> {
    let data = builder.data();
    let coeffs = solve_rom(model, mu)?;
    let offline_online = data.residual_dual_norm(mu, &coeffs)?;
    let u_rb = if basis.is_empty() {
        DVector::zeros(system.dof_count())
    } else {
        reconstruct(basis, &coeffs)?
    };
    let r = system.load() - system.apply(mu, &u_rb)?;
    let z = builder.riesz(&r);
    let direct = z.dot(&r).max(0.0).sqrt();
    let relative_deviation = if direct > 0.0 {
        (offline_online - direct).abs() / direct
    } else {
        offline_online
    };
    let initial = data.load_load.max(0.0).sqrt();
    Ok(RieszDiagnostic {
        offline_online,
        direct,
        relative_deviation,
        cancellation_regime: offline_online < CANCELLATION_RATIO * initial,
    })
}
