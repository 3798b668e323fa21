//! Full-order thermal block model.
//!
//! The unit square is split into `px × py` sub-blocks, each carrying its own
//! diffusivity `μ_p`. The problem `−∇·(κ_μ ∇u) = f` with homogeneous Dirichlet
//! data is discretized by linear (P1) triangles on a structured grid in which
//! every square cell is cut along its lower-left to upper-right diagonal.
//!
//! The stiffness matrix is kept in affine form `A(μ) = Σ_p μ_p A_p`. All
//! components share one sparsity pattern so that `A(μ)` can be formed by a
//! weighted sum of value arrays and factored against a single symbolic
//! Cholesky analysis.

use std::io::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::factorization::{CscCholesky, CscSymbolicCholesky};
use nalgebra_sparse::pattern::SparsityPattern;
use nalgebra_sparse::CsrMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Relative residual every snapshot must meet.
pub const SNAPSHOT_RESIDUAL_TOL: f64 = 1e-10;

/// Box constraint on each parameter weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParameterBox {
    pub min: f64,
    pub max: f64,
}

impl Default for ParameterBox {
    fn default() -> Self {
        ParameterBox { min: 0.1, max: 1.0 }
    }
}

impl ParameterBox {
    pub fn contains(&self, value: f64) -> bool {
        value >= self.min && value <= self.max
    }
}

/// One diffusivity per sub-block, numbered row-major from the bottom-left block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterPoint(Vec<f64>);

impl ParameterPoint {
    pub fn new(weights: Vec<f64>) -> Self {
        ParameterPoint(weights)
    }

    /// The constant point `(c, …, c)` with `len` entries.
    pub fn uniform(len: usize, c: f64) -> Self {
        ParameterPoint(vec![c; len])
    }

    pub fn weights(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn min_weight(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_weight(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn scaled(&self, c: f64) -> Self {
        ParameterPoint(self.0.iter().map(|w| w * c).collect())
    }

    /// Checks length and the box constraint.
    pub fn validate(&self, num_blocks: usize, bounds: &ParameterBox) -> Result<()> {
        if self.len() != num_blocks {
            return Err(Error::Dimension {
                expected: num_blocks,
                actual: self.len(),
            });
        }
        if let Some(w) = self.0.iter().find(|w| !bounds.contains(**w)) {
            return Err(Error::Domain(format!(
                "weight {w} outside [{}, {}]",
                bounds.min, bounds.max
            )));
        }
        Ok(())
    }

    /// All weights strictly positive; the minimal requirement for a solvable system.
    pub fn ensure_positive(&self) -> Result<()> {
        match self.0.iter().find(|w| !(**w > 0.0)) {
            Some(w) => Err(Error::Domain(format!("non-positive weight {w}"))),
            None => Ok(()),
        }
    }
}

/// Structured triangulation of the unit square tagged by sub-block.
#[derive(Debug, Clone)]
pub struct Mesh {
    pub nx: usize,
    pub ny: usize,
    pub px: usize,
    pub py: usize,
    pub vertices: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
    pub boundary: Vec<bool>,
    /// Zero-based sub-block index of each triangle.
    pub blocks: Vec<usize>,
    /// Maps vertices to interior degrees of freedom.
    pub dof_of_vertex: Vec<Option<usize>>,
}

impl Mesh {
    pub fn num_blocks(&self) -> usize {
        self.px * self.py
    }

    pub fn dof_count(&self) -> usize {
        (self.nx - 1) * (self.ny - 1)
    }

    pub fn vertex_index(&self, i: usize, j: usize) -> usize {
        j * (self.nx + 1) + i
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t].map(|v| self.vertices[v]);
        0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
    }
}

/// Builds the `nx × ny` grid with `2·nx·ny` triangles over `px × py` sub-blocks.
pub fn build_mesh(nx: usize, ny: usize, px: usize, py: usize) -> Result<Mesh> {
    if nx == 0 || ny == 0 || px == 0 || py == 0 {
        return Err(Error::Config(format!(
            "all of nx={nx}, ny={ny}, px={px}, py={py} must be at least 1"
        )));
    }
    if !nx.is_multiple_of(px) {
        return Err(Error::Config(format!("nx={nx} is not divisible by px={px}")));
    }
    if !ny.is_multiple_of(py) {
        return Err(Error::Config(format!("ny={ny} is not divisible by py={py}")));
    }

    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    let mut boundary = Vec::with_capacity((nx + 1) * (ny + 1));
    let mut dof_of_vertex = Vec::with_capacity((nx + 1) * (ny + 1));
    let mut next_dof = 0;
    for j in 0..=ny {
        for i in 0..=nx {
            vertices.push([i as f64 / nx as f64, j as f64 / ny as f64]);
            let on_boundary = i == 0 || j == 0 || i == nx || j == ny;
            boundary.push(on_boundary);
            if on_boundary {
                dof_of_vertex.push(None);
            } else {
                dof_of_vertex.push(Some(next_dof));
                next_dof += 1;
            }
        }
    }

    let (cells_x, cells_y) = (nx / px, ny / py);
    let mut triangles = Vec::with_capacity(2 * nx * ny);
    let mut blocks = Vec::with_capacity(2 * nx * ny);
    let v = |i: usize, j: usize| j * (nx + 1) + i;
    for j in 0..ny {
        for i in 0..nx {
            let block = (j / cells_y) * px + i / cells_x;
            let (v00, v10, v01, v11) = (v(i, j), v(i + 1, j), v(i, j + 1), v(i + 1, j + 1));
            triangles.push([v00, v10, v11]);
            triangles.push([v00, v11, v01]);
            blocks.push(block);
            blocks.push(block);
        }
    }

    Ok(Mesh {
        nx,
        ny,
        px,
        py,
        vertices,
        triangles,
        boundary,
        blocks,
        dof_of_vertex,
    })
}

/// Interpolates interior nodal values from `coarse` onto its uniform 2× refinement.
///
/// The refined grid is nested in the coarse one, so P1 interpolation is exact.
pub fn prolongate(coarse: &Mesh, values: &DVector<f64>) -> Result<DVector<f64>> {
    if values.len() != coarse.dof_count() {
        return Err(Error::Dimension {
            expected: coarse.dof_count(),
            actual: values.len(),
        });
    }
    let nodal = |i: usize, j: usize| -> f64 {
        coarse.dof_of_vertex[coarse.vertex_index(i, j)]
            .map(|d| values[d])
            .unwrap_or(0.0)
    };
    let (fnx, fny) = (2 * coarse.nx, 2 * coarse.ny);
    let mut out = DVector::zeros((fnx - 1) * (fny - 1));
    for jj in 1..fny {
        for ii in 1..fnx {
            let (i, j) = (ii / 2, jj / 2);
            let value = match (ii % 2, jj % 2) {
                (0, 0) => nodal(i, j),
                (1, 0) => 0.5 * (nodal(i, j) + nodal(i + 1, j)),
                (0, 1) => 0.5 * (nodal(i, j) + nodal(i, j + 1)),
                // midpoint of the cell diagonal
                _ => 0.5 * (nodal(i, j) + nodal(i + 1, j + 1)),
            };
            out[(jj - 1) * (fnx - 1) + (ii - 1)] = value;
        }
    }
    Ok(out)
}

/// Affine decomposition `A(μ) = Σ_p μ_p A_p` together with load and X-Gram matrix.
///
/// Immutable once assembled; share it freely between threads.
#[derive(Debug, Clone)]
pub struct AffineSystem {
    nx: usize,
    ny: usize,
    px: usize,
    py: usize,
    rhs_value: f64,
    components: Vec<CsrMatrix<f64>>,
    load: DVector<f64>,
    gram: CsrMatrix<f64>,
    symbolic: CscSymbolicCholesky,
}

/// Assembles the stiffness components, Gram matrix and load for `mesh`.
///
/// The load is integrated exactly for the constant source `rhs_value`, and
/// Dirichlet vertices are eliminated.
pub fn assemble(mesh: &Mesh, rhs_value: f64) -> Result<AffineSystem> {
    let n = mesh.dof_count();
    let num_blocks = mesh.num_blocks();
    if n == 0 {
        return Err(Error::Config("mesh has no interior vertices".into()));
    }

    // (row, col, value, block) contributions
    let mut entries: Vec<(usize, usize, f64, usize)> = Vec::with_capacity(mesh.triangles.len() * 9);
    let mut load = DVector::zeros(n);
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let area = mesh.triangle_area(t);
        if area <= 0.0 {
            return Err(Error::Config(format!("triangle {t} has non-positive area")));
        }
        let p = tri.map(|v| mesh.vertices[v]);
        // gradients of the barycentric coordinates, scaled by 2·area
        let grads = [
            [p[1][1] - p[2][1], p[2][0] - p[1][0]],
            [p[2][1] - p[0][1], p[0][0] - p[2][0]],
            [p[0][1] - p[1][1], p[1][0] - p[0][0]],
        ];
        let scale = 1.0 / (4.0 * area);
        for a in 0..3 {
            let Some(row) = mesh.dof_of_vertex[tri[a]] else {
                continue;
            };
            load[row] += rhs_value * area / 3.0;
            for b in 0..3 {
                let Some(col) = mesh.dof_of_vertex[tri[b]] else {
                    continue;
                };
                let k = scale * (grads[a][0] * grads[b][0] + grads[a][1] * grads[b][1]);
                entries.push((row, col, k, mesh.blocks[t]));
            }
        }
    }

    let mut rows: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(r, c, _, _) in &entries {
        rows[r].push(c);
    }
    let mut offsets = Vec::with_capacity(n + 1);
    let mut indices = Vec::new();
    offsets.push(0);
    for row in &mut rows {
        row.sort_unstable();
        row.dedup();
        indices.extend_from_slice(row);
        offsets.push(indices.len());
    }
    let pattern = SparsityPattern::try_from_offsets_and_indices(n, n, offsets.clone(), indices.clone())
        .map_err(|e| Error::Config(format!("invalid sparsity pattern: {e}")))?;

    let mut values = vec![vec![0.0; indices.len()]; num_blocks];
    for &(r, c, k, block) in &entries {
        let start = offsets[r];
        let pos = start
            + indices[start..offsets[r + 1]]
                .binary_search(&c)
                .expect("entry present in pattern");
        values[block][pos] += k;
    }

    let gram_values: Vec<f64> = (0..indices.len())
        .map(|i| values.iter().map(|v| v[i]).sum())
        .collect();
    let components = values
        .into_iter()
        .map(|v| CsrMatrix::try_from_pattern_and_values(pattern.clone(), v))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::Config(format!("component assembly failed: {e}")))?;
    let gram = CsrMatrix::try_from_pattern_and_values(pattern.clone(), gram_values)
        .map_err(|e| Error::Config(format!("gram assembly failed: {e}")))?;

    // The pattern is symmetric, so its CSR layout doubles as CSC layout.
    let symbolic = CscSymbolicCholesky::factor(pattern);

    Ok(AffineSystem {
        nx: mesh.nx,
        ny: mesh.ny,
        px: mesh.px,
        py: mesh.py,
        rhs_value,
        components,
        load,
        gram,
        symbolic,
    })
}

/// Builds the mesh and assembles the system in one step.
pub fn thermal_block(nx: usize, ny: usize, px: usize, py: usize, rhs_value: f64) -> Result<AffineSystem> {
    assemble(&build_mesh(nx, ny, px, py)?, rhs_value)
}

pub(crate) fn spmv(a: &CsrMatrix<f64>, x: &[f64]) -> DVector<f64> {
    let mut y = DVector::zeros(a.nrows());
    for (i, row) in a.row_iter().enumerate() {
        y[i] = row
            .col_indices()
            .iter()
            .zip(row.values())
            .map(|(&j, &v)| v * x[j])
            .sum();
    }
    y
}

impl AffineSystem {
    pub fn dof_count(&self) -> usize {
        self.load.len()
    }

    pub fn num_components(&self) -> usize {
        self.components.len()
    }

    pub fn grid(&self) -> (usize, usize, usize, usize) {
        (self.nx, self.ny, self.px, self.py)
    }

    pub fn rhs_value(&self) -> f64 {
        self.rhs_value
    }

    pub fn components(&self) -> &[CsrMatrix<f64>] {
        &self.components
    }

    pub fn load(&self) -> &DVector<f64> {
        &self.load
    }

    pub fn gram(&self) -> &CsrMatrix<f64> {
        &self.gram
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.dof_count() {
            return Err(Error::Dimension {
                expected: self.dof_count(),
                actual: len,
            });
        }
        Ok(())
    }

    fn check_parameter(&self, mu: &ParameterPoint) -> Result<()> {
        if mu.len() != self.num_components() {
            return Err(Error::Dimension {
                expected: self.num_components(),
                actual: mu.len(),
            });
        }
        mu.ensure_positive()
    }

    /// `A_p v`.
    pub fn apply_component(&self, p: usize, v: &DVector<f64>) -> DVector<f64> {
        spmv(&self.components[p], v.as_slice())
    }

    /// `A(μ) v`, evaluated as `Σ_p μ_p A_p v`.
    pub fn apply(&self, mu: &ParameterPoint, v: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_len(v.len())?;
        if mu.len() != self.num_components() {
            return Err(Error::Dimension {
                expected: self.num_components(),
                actual: mu.len(),
            });
        }
        let mut out = DVector::zeros(self.dof_count());
        for (p, &w) in mu.weights().iter().enumerate() {
            out.axpy(w, &self.apply_component(p, v), 1.0);
        }
        Ok(out)
    }

    /// `M_X v`.
    pub fn gram_apply(&self, v: &DVector<f64>) -> DVector<f64> {
        spmv(&self.gram, v.as_slice())
    }

    /// `uᵀ M_X v`.
    pub fn x_inner(&self, u: &DVector<f64>, v: &DVector<f64>) -> Result<f64> {
        self.check_len(u.len())?;
        self.check_len(v.len())?;
        Ok(u.dot(&self.gram_apply(v)))
    }

    pub fn x_norm(&self, u: &DVector<f64>) -> Result<f64> {
        Ok(self.x_inner(u, u)?.max(0.0).sqrt())
    }

    /// Value array of `Σ_p μ_p A_p` on the shared pattern.
    fn operator_values(&self, weights: &[f64]) -> Vec<f64> {
        let nnz = self.gram.nnz();
        let mut values = vec![0.0; nnz];
        for (component, &w) in self.components.iter().zip(weights) {
            for (acc, v) in values.iter_mut().zip(component.values()) {
                *acc += w * v;
            }
        }
        values
    }

    /// Materializes `A(μ)` in CSR form.
    pub fn operator(&self, mu: &ParameterPoint) -> Result<CsrMatrix<f64>> {
        self.check_parameter(mu)?;
        CsrMatrix::try_from_pattern_and_values(
            self.gram.pattern().clone(),
            self.operator_values(mu.weights()),
        )
        .map_err(|e| Error::Config(format!("operator assembly failed: {e}")))
    }

    /// Sparse Cholesky factorization of `Σ_p w_p A_p`.
    pub(crate) fn factor_weighted(&self, weights: &[f64]) -> Result<CscCholesky<f64>> {
        CscCholesky::factor_numerical(self.symbolic.clone(), &self.operator_values(weights))
            .map_err(|e| Error::numeric(format!("sparse Cholesky failed: {e}"), f64::NAN))
    }

    pub(crate) fn factor_gram(&self) -> Result<CscCholesky<f64>> {
        CscCholesky::factor_numerical(self.symbolic.clone(), self.gram.values())
            .map_err(|e| Error::numeric(format!("Gram factorization failed: {e}"), f64::NAN))
    }

    /// Stable fingerprint of the discretization for artifact compatibility checks.
    pub fn config_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(format!(
            "thermal-block;nx={};ny={};px={};py={};rhs={:e};dofs={};nnz={}",
            self.nx,
            self.ny,
            self.px,
            self.py,
            self.rhs_value,
            self.dof_count(),
            self.gram.nnz()
        ));
        hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    /// Writes `gram.mtx` and `component_<p>.mtx` (1-based `p`) in MatrixMarket coordinate format.
    pub fn export_matrix_market(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        nalgebra_sparse::io::save_to_matrix_market_file(&self.gram, dir.join("gram.mtx"))?;
        for (p, component) in self.components.iter().enumerate() {
            nalgebra_sparse::io::save_to_matrix_market_file(
                component,
                dir.join(format!("component_{}.mtx", p + 1)),
            )?;
        }
        let mut f = std::fs::File::create(dir.join("load.txt"))?;
        for v in self.load.iter() {
            writeln!(f, "{v:.17e}")?;
        }
        Ok(())
    }
}

/// A full-order solution and the parameter it belongs to.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub coefficients: DVector<f64>,
    pub parameter: ParameterPoint,
}

pub(crate) fn cholesky_solve(factor: &CscCholesky<f64>, rhs: &DVector<f64>) -> DVector<f64> {
    let mut b = DMatrix::from_column_slice(rhs.len(), 1, rhs.as_slice());
    factor.solve_mut(&mut b);
    DVector::from_column_slice(b.as_slice())
}

/// Relative algebraic residual `‖A(μ)u − f‖₂ / ‖f‖₂`.
pub fn relative_residual(system: &AffineSystem, mu: &ParameterPoint, u: &DVector<f64>) -> Result<f64> {
    let r = system.apply(mu, u)? - system.load();
    Ok(r.norm() / system.load().norm())
}

/// Solves the full-order problem for `mu` with a fresh sparse Cholesky factorization.
pub fn solve_fom(system: &AffineSystem, mu: &ParameterPoint) -> Result<Snapshot> {
    system.check_parameter(mu)?;
    let factor = system.factor_weighted(mu.weights())?;
    let u = cholesky_solve(&factor, system.load());
    let residual = relative_residual(system, mu, &u)?;
    if !(residual <= SNAPSHOT_RESIDUAL_TOL) {
        return Err(Error::numeric(
            format!("full-order solve for {:?} missed the residual target", mu.weights()),
            residual,
        ));
    }
    Ok(Snapshot {
        coefficients: u,
        parameter: mu.clone(),
    })
}
