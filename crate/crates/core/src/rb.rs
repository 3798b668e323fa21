//! Reduced bases and Galerkin-reduced models.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{AffineSystem, ParameterPoint, Snapshot};

/// Default relative threshold below which an orthogonalized snapshot is discarded.
pub const DEFAULT_DROP_TOL: f64 = 1e-10;

/// Where a basis vector came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub parameter: ParameterPoint,
    /// Index into the training set, when the snapshot came from one.
    pub param_id: Option<usize>,
    /// Greedy iteration ℓ.
    pub iteration: usize,
    /// Rank k within the batch.
    pub batch_index: usize,
}

/// X-orthonormal basis `V = [v_0, …, v_{n-1}]` of full-order vectors.
#[derive(Debug, Clone, Default)]
pub struct ReducedBasis {
    vectors: Vec<DVector<f64>>,
    // M_X v_j, cached so X-inner products against the basis are plain dot products
    gram_images: Vec<DVector<f64>>,
    provenance: Vec<Provenance>,
}

/// A batch member rejected by [`ReducedBasis::extend`].
#[derive(Debug, Clone, PartialEq)]
pub struct Discard {
    /// Position within the offered batch.
    pub position: usize,
    /// X-norm after orthogonalization divided by the original X-norm.
    pub relative_norm: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExtendReport {
    /// Batch positions that became basis vectors, in insertion order.
    pub accepted: Vec<usize>,
    pub discarded: Vec<Discard>,
    /// For each accepted snapshot `f_i`, the row `a_{i,j} = ⟨f_i, v_j⟩_X`, `j ≤ i`.
    pub amatrix_rows: Vec<Vec<f64>>,
}

impl ReducedBasis {
    pub fn new() -> Self {
        Self::default()
    }

    /// Rebuilds a basis from stored vectors, which are trusted to be X-orthonormal.
    pub fn from_vectors(
        vectors: Vec<DVector<f64>>,
        provenance: Vec<Provenance>,
        system: &AffineSystem,
    ) -> Result<Self> {
        if vectors.len() != provenance.len() {
            return Err(Error::Dimension {
                expected: vectors.len(),
                actual: provenance.len(),
            });
        }
        if let Some(v) = vectors.iter().find(|v| v.len() != system.dof_count()) {
            return Err(Error::Dimension {
                expected: system.dof_count(),
                actual: v.len(),
            });
        }
        let gram_images = vectors.iter().map(|v| system.gram_apply(v)).collect();
        Ok(ReducedBasis {
            vectors,
            gram_images,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn vectors(&self) -> &[DVector<f64>] {
        &self.vectors
    }

    pub fn provenance(&self) -> &[Provenance] {
        &self.provenance
    }

    /// Leading `n` vectors as a new basis.
    pub fn prefix(&self, n: usize) -> Result<ReducedBasis> {
        if n > self.len() {
            return Err(Error::Range {
                index: n,
                available: self.len(),
            });
        }
        Ok(ReducedBasis {
            vectors: self.vectors[..n].to_vec(),
            gram_images: self.gram_images[..n].to_vec(),
            provenance: self.provenance[..n].to_vec(),
        })
    }

    /// `⟨w, v_j⟩_X` for all basis vectors.
    pub fn coefficients(&self, w: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.len(), self.gram_images.iter().map(|g| g.dot(w)))
    }

    /// Removes the X-projection onto the basis from `w` (two MGS sweeps).
    fn orthogonalize(&self, w: &mut DVector<f64>) {
        for _ in 0..2 {
            for (v, g) in self.vectors.iter().zip(&self.gram_images) {
                let c = g.dot(w);
                w.axpy(-c, v, 1.0);
            }
        }
    }

    /// X-norm of `w − P_V w`.
    pub fn projection_error(&self, w: &DVector<f64>, system: &AffineSystem) -> Result<f64> {
        let mut r = w.clone();
        self.orthogonalize(&mut r);
        system.x_norm(&r)
    }

    /// Orthogonalizes each batch member in order against the growing basis and
    /// appends the survivors.
    ///
    /// A member is discarded when its X-norm after orthogonalization drops below
    /// `drop_tol` times its original X-norm.
    pub fn extend(
        &mut self,
        batch: &[(Snapshot, Provenance)],
        system: &AffineSystem,
        drop_tol: f64,
    ) -> Result<ExtendReport> {
        if !(drop_tol > 0.0) {
            return Err(Error::Config(format!("drop_tol must be positive, got {drop_tol}")));
        }
        let mut report = ExtendReport::default();
        for (position, (snapshot, provenance)) in batch.iter().enumerate() {
            let f = &snapshot.coefficients;
            let original = system.x_norm(f)?;
            let mut w = f.clone();
            self.orthogonalize(&mut w);
            let mw = system.gram_apply(&w);
            let norm = w.dot(&mw).max(0.0).sqrt();
            if original == 0.0 || norm < drop_tol * original {
                report.discarded.push(Discard {
                    position,
                    relative_norm: if original == 0.0 { 0.0 } else { norm / original },
                });
                continue;
            }
            self.vectors.push(w / norm);
            self.gram_images.push(mw / norm);
            self.provenance.push(provenance.clone());
            report.accepted.push(position);
            report
                .amatrix_rows
                .push(self.gram_images.iter().map(|g| g.dot(f)).collect());
        }
        Ok(report)
    }

    /// Gram matrix `G_ij = ⟨v_i, v_j⟩_X`.
    pub fn gram_matrix(&self) -> DMatrix<f64> {
        let n = self.len();
        DMatrix::from_fn(n, n, |i, j| self.vectors[i].dot(&self.gram_images[j]))
    }
}

/// Projected operator components `VᵀA_pV` and load `Vᵀf`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedModel {
    pub reduced_components: Vec<DMatrix<f64>>,
    pub reduced_load: DVector<f64>,
}

impl ReducedModel {
    pub fn empty(num_components: usize) -> Self {
        ReducedModel {
            reduced_components: vec![DMatrix::zeros(0, 0); num_components],
            reduced_load: DVector::zeros(0),
        }
    }

    pub fn dim(&self) -> usize {
        self.reduced_load.len()
    }

    pub fn num_components(&self) -> usize {
        self.reduced_components.len()
    }

    /// `Σ_p μ_p VᵀA_pV`.
    pub fn operator(&self, mu: &ParameterPoint) -> Result<DMatrix<f64>> {
        if mu.len() != self.num_components() {
            return Err(Error::Dimension {
                expected: self.num_components(),
                actual: mu.len(),
            });
        }
        let n = self.dim();
        let mut a = DMatrix::zeros(n, n);
        for (m, &w) in self.reduced_components.iter().zip(mu.weights()) {
            a += m * w;
        }
        Ok(a)
    }

    /// The model for the leading `n` basis vectors.
    pub fn truncate(&self, n: usize) -> Result<ReducedModel> {
        if n > self.dim() {
            return Err(Error::Range {
                index: n,
                available: self.dim(),
            });
        }
        Ok(ReducedModel {
            reduced_components: self
                .reduced_components
                .iter()
                .map(|m| m.view((0, 0), (n, n)).into_owned())
                .collect(),
            reduced_load: self.reduced_load.rows(0, n).into_owned(),
        })
    }

    /// Brings the model up to date with `basis`, projecting only vectors added
    /// since the last update.
    pub fn update(&mut self, basis: &ReducedBasis, system: &AffineSystem) -> Result<()> {
        let old = self.dim();
        let n = basis.len();
        if n < old || self.num_components() != system.num_components() {
            return Err(Error::Config(
                "reduced model does not belong to this basis".into(),
            ));
        }
        if n == old {
            return Ok(());
        }
        for (p, m) in self.reduced_components.iter_mut().enumerate() {
            let mut grown = DMatrix::zeros(n, n);
            grown.view_mut((0, 0), (old, old)).copy_from(m);
            for j in old..n {
                let image = system.apply_component(p, &basis.vectors[j]);
                for i in 0..=j {
                    let value = basis.vectors[i].dot(&image);
                    grown[(i, j)] = value;
                    grown[(j, i)] = value;
                }
            }
            *m = grown;
        }
        let load = system.load();
        let mut reduced_load = DVector::zeros(n);
        reduced_load.rows_mut(0, old).copy_from(&self.reduced_load);
        for j in old..n {
            reduced_load[j] = basis.vectors[j].dot(load);
        }
        self.reduced_load = reduced_load;
        Ok(())
    }
}

/// Projects the system onto `basis` from scratch.
pub fn reduce(basis: &ReducedBasis, system: &AffineSystem) -> Result<ReducedModel> {
    let mut model = ReducedModel::empty(system.num_components());
    model.update(basis, system)?;
    Ok(model)
}

/// Solves `(Σ_p μ_p VᵀA_pV) c = Vᵀf` by dense Cholesky.
pub fn solve_rom(model: &ReducedModel, mu: &ParameterPoint) -> Result<DVector<f64>> {
    mu.ensure_positive()?;
    let a = model.operator(mu)?;
    if a.nrows() == 0 {
        return Ok(DVector::zeros(0));
    }
    let chol = a
        .cholesky()
        .ok_or_else(|| Error::numeric("reduced operator is not positive definite", f64::NAN))?;
    Ok(chol.solve(&model.reduced_load))
}

/// `V c`.
pub fn reconstruct(basis: &ReducedBasis, coeffs: &DVector<f64>) -> Result<DVector<f64>> {
    if coeffs.len() != basis.len() {
        return Err(Error::Dimension {
            expected: basis.len(),
            actual: coeffs.len(),
        });
    }
    let dofs = basis.vectors.first().map_or(0, |v| v.len());
    let mut out = DVector::zeros(dofs);
    for (v, &c) in basis.vectors.iter().zip(coeffs.iter()) {
        out.axpy(c, v, 1.0);
    }
    Ok(out)
}
