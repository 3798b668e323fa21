use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use rbgreedy::fem::{solve_fom, thermal_block, AffineSystem, ParameterPoint, Snapshot};
use rbgreedy::rb::{reconstruct, reduce, solve_rom, Provenance, ReducedBasis, ReducedModel, DEFAULT_DROP_TOL};

fn provenance(s: &Snapshot, k: usize) -> Provenance {
    Provenance {
        parameter: s.parameter.clone(),
        param_id: None,
        iteration: 0,
        batch_index: k,
    }
}

fn snapshots(system: &AffineSystem, params: &[Vec<f64>]) -> Vec<Snapshot> {
    params
        .iter()
        .map(|w| solve_fom(system, &ParameterPoint::new(w.clone())).unwrap())
        .collect()
}

fn batch(snaps: &[Snapshot]) -> Vec<(Snapshot, Provenance)> {
    snaps.iter().enumerate().map(|(k, s)| (s.clone(), provenance(s, k))).collect()
}

fn gram_deviation(basis: &ReducedBasis) -> f64 {
    let g = basis.gram_matrix();
    (g - DMatrix::identity(basis.len(), basis.len())).amax()
}

fn relative_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / a.norm().max(1e-300)
}

fn mu_strategy() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.1f64..=1.0, 4)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn extension_keeps_orthonormality_and_span(
        batches in prop::collection::vec(prop::collection::vec(mu_strategy(), 1..4), 1..4),
        probe in mu_strategy(),
    ) {
        let system = thermal_block(8, 8, 2, 2, 1.0).unwrap();
        let w = solve_fom(&system, &ParameterPoint::new(probe)).unwrap().coefficients;
        let w_norm = system.x_norm(&w).unwrap();
        let mut basis = ReducedBasis::new();
        let mut model = ReducedModel::empty(4);
        let mut last_error = basis.projection_error(&w, &system).unwrap();
        for params in &batches {
            let snaps = snapshots(&system, params);
            let report = basis.extend(&batch(&snaps), &system, DEFAULT_DROP_TOL).unwrap();
            prop_assert_eq!(report.accepted.len() + report.discarded.len(), snaps.len());
            prop_assert!(gram_deviation(&basis) <= 1e-8);
            for s in &snaps {
                let e = basis.projection_error(&s.coefficients, &system).unwrap();
                prop_assert!(e <= 1e-8 * system.x_norm(&s.coefficients).unwrap());
            }
            let error = basis.projection_error(&w, &system).unwrap();
            prop_assert!(error <= last_error + 1e-12 * w_norm);
            last_error = error;

            // incremental reduction matches the from-scratch projection
            model.update(&basis, &system).unwrap();
            let scratch = reduce(&basis, &system).unwrap();
            for p in 0..4 {
                prop_assert!(relative_frobenius(&scratch.reduced_components[p], &model.reduced_components[p]) <= 1e-12);
                let c = &model.reduced_components[p];
                prop_assert!((c - c.transpose()).amax() <= 1e-12 * c.amax());
            }
            prop_assert!((&scratch.reduced_load - &model.reduced_load).norm() <= 1e-12 * scratch.reduced_load.norm());
        }
    }

    #[test]
    fn reduced_operator_is_spd(mu in mu_strategy()) {
        let system = thermal_block(8, 8, 2, 2, 1.0).unwrap();
        let snaps = snapshots(&system, &[vec![0.1, 1.0, 0.5, 0.2], vec![1.0, 0.1, 0.3, 0.9], vec![0.5; 4]]);
        let mut basis = ReducedBasis::new();
        basis.extend(&batch(&snaps), &system, DEFAULT_DROP_TOL).unwrap();
        let model = reduce(&basis, &system).unwrap();
        let a = model.operator(&ParameterPoint::new(mu)).unwrap();
        prop_assert!(a.clone().cholesky().is_some());
    }
}

#[test]
fn dependent_snapshot_is_discarded() {
    let system = thermal_block(8, 8, 2, 2, 1.0).unwrap();
    let s = snapshots(&system, &[vec![0.3, 0.6, 0.9, 0.2]]).remove(0);
    let mut basis = ReducedBasis::new();
    basis.extend(&batch(std::slice::from_ref(&s)), &system, DEFAULT_DROP_TOL).unwrap();
    let scaled = Snapshot {
        coefficients: &s.coefficients * 3.0,
        parameter: s.parameter.scaled(1.0 / 3.0),
    };
    let report = basis.extend(&batch(&[scaled]), &system, DEFAULT_DROP_TOL).unwrap();
    assert_eq!(basis.len(), 1);
    assert!(report.accepted.is_empty());
    assert_eq!(report.discarded.len(), 1);
}

#[test]
fn snapshot_reproduction() {
    let system = thermal_block(16, 16, 2, 2, 1.0).unwrap();
    let params = [vec![0.1, 1.0, 0.5, 0.2], vec![1.0, 0.1, 0.3, 0.9], vec![0.7, 0.4, 0.2, 0.6]];
    let snaps = snapshots(&system, &params);
    let mut basis = ReducedBasis::new();
    basis.extend(&batch(&snaps), &system, DEFAULT_DROP_TOL).unwrap();
    let model = reduce(&basis, &system).unwrap();
    for s in &snaps {
        let u_rb = reconstruct(&basis, &solve_rom(&model, &s.parameter).unwrap()).unwrap();
        let err = system.x_norm(&(&s.coefficients - u_rb)).unwrap();
        assert!(err <= 1e-8 * system.x_norm(&s.coefficients).unwrap());
    }
}

#[test]
fn galerkin_quasi_optimality() {
    let system = thermal_block(16, 16, 2, 2, 1.0).unwrap();
    let snaps = snapshots(&system, &[vec![0.1, 1.0, 0.5, 0.2], vec![1.0, 0.1, 0.3, 0.9]]);
    let mut basis = ReducedBasis::new();
    basis.extend(&batch(&snaps), &system, DEFAULT_DROP_TOL).unwrap();
    let model = reduce(&basis, &system).unwrap();
    let test = rbgreedy::bench::random_test_set(4, 10, 3);
    for mu in &test {
        let u = solve_fom(&system, mu).unwrap().coefficients;
        let galerkin = system
            .x_norm(&(&u - reconstruct(&basis, &solve_rom(&model, mu).unwrap()).unwrap()))
            .unwrap();
        let best = basis.projection_error(&u, &system).unwrap();
        let bound = (mu.max_weight() / mu.min_weight()).sqrt() * best;
        assert!(galerkin <= bound * (1.0 + 1e-10) + 1e-14, "{galerkin} > {bound}");
    }
}

#[test]
fn full_space_reproduction() {
    // unit vectors span the whole discrete space
    let system = thermal_block(4, 4, 2, 2, 1.0).unwrap();
    let n = system.dof_count();
    let mu = ParameterPoint::new(vec![0.2, 0.9, 0.4, 0.6]);
    let units: Vec<Snapshot> = (0..n)
        .map(|i| Snapshot {
            coefficients: DVector::from_fn(n, |j, _| if i == j { 1.0 } else { 0.0 }),
            parameter: mu.clone(),
        })
        .collect();
    let mut basis = ReducedBasis::new();
    basis.extend(&batch(&units), &system, DEFAULT_DROP_TOL).unwrap();
    assert_eq!(basis.len(), n);
    let model = reduce(&basis, &system).unwrap();
    let u = solve_fom(&system, &mu).unwrap().coefficients;
    let u_rb = reconstruct(&basis, &solve_rom(&model, &mu).unwrap()).unwrap();
    assert!(system.x_norm(&(&u - u_rb)).unwrap() <= 1e-8 * system.x_norm(&u).unwrap());
}

#[test]
fn reconstruct_unit_zero_and_round_trip() {
    let system = thermal_block(8, 8, 2, 2, 1.0).unwrap();
    let snaps = snapshots(&system, &[vec![0.1, 1.0, 0.5, 0.2], vec![1.0, 0.1, 0.3, 0.9]]);
    let mut basis = ReducedBasis::new();
    basis.extend(&batch(&snaps), &system, DEFAULT_DROP_TOL).unwrap();
    let e1 = DVector::from_vec(vec![0.0, 1.0]);
    assert_eq!(reconstruct(&basis, &e1).unwrap(), basis.vectors()[1]);
    assert_eq!(reconstruct(&basis, &DVector::zeros(2)).unwrap().norm(), 0.0);
    assert!(reconstruct(&basis, &DVector::zeros(3)).is_err());
    let w = &basis.vectors()[0] * 0.3 - &basis.vectors()[1] * 1.7;
    let back = reconstruct(&basis, &basis.coefficients(&w)).unwrap();
    assert!(system.x_norm(&(&w - back)).unwrap() <= 1e-10 * system.x_norm(&w).unwrap());
}
