use std::f64::consts::PI;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector, Vector3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rbgreedy::artifact::ModelArtifact;
use rbgreedy::bench::{build_training_set, run_experiment, ExperimentConfig};
use rbgreedy::fem::{solve_fom, thermal_block, AffineSystem, ParameterPoint, Snapshot};
use rbgreedy::greedy::{compute_snapshots, run_batch_greedy, GreedyConfig};
use rbgreedy::pool::WorkerPool;
use rbgreedy::theory::{
    constant_c1_exponential, constant_c1_polynomial, fit_exponential, pod_width_upper_bound, WidthSurrogate,
};
use rbgreedy::Error;

struct Widths {
    system: AffineSystem,
    snapshots: Vec<Snapshot>,
    widths: WidthSurrogate,
}

fn widths() -> &'static Widths {
    static CELL: OnceLock<Widths> = OnceLock::new();
    CELL.get_or_init(|| {
        let system = thermal_block(16, 16, 2, 2, 1.0).unwrap();
        let training = build_training_set(2, 2, 3).unwrap();
        let snapshots = compute_snapshots(&system, &training, &WorkerPool::new(1).unwrap()).unwrap();
        let widths = pod_width_upper_bound(&snapshots, &system, 40).unwrap();
        Widths {
            system,
            snapshots,
            widths,
        }
    })
}

/// `‖f − P_W f‖_X` with an exact Gram solve, independent of the modes' orthonormality.
fn projection_error(system: &AffineSystem, modes: &[DVector<f64>], f: &DVector<f64>) -> f64 {
    if modes.is_empty() {
        return system.x_norm(f).unwrap();
    }
    let images: Vec<DVector<f64>> = modes.iter().map(|v| system.gram_apply(v)).collect();
    let n = modes.len();
    let gram = DMatrix::from_fn(n, n, |i, j| modes[i].dot(&images[j]));
    let rhs = DVector::from_fn(n, |i, _| images[i].dot(f));
    let c = gram.cholesky().unwrap().solve(&rhs);
    let mut w = f.clone();
    for (v, ci) in modes.iter().zip(c.iter()) {
        w.axpy(-ci, v, 1.0);
    }
    system.x_norm(&w).unwrap()
}

#[test]
fn width_bounds_are_certified_and_nonincreasing() {
    let Widths {
        system,
        snapshots,
        widths,
    } = widths();
    let d = &widths.d_up;
    let sigma0 = d[0];
    for pair in d.windows(2) {
        assert!(pair[1] <= pair[0]);
    }
    for pair in widths.pod_eigs.windows(2) {
        assert!(pair[1] <= pair[0]);
    }
    for n in [0, 1, 2, 5, 10, widths.rank.min(20)] {
        let recomputed = snapshots
            .iter()
            .map(|s| projection_error(system, &widths.modes[..n], &s.coefficients))
            .fold(0.0, f64::max);
        assert!(recomputed <= d[n] * (1.0 + 1e-8) + 1e-12 * sigma0, "n={n}: {recomputed} > {}", d[n]);
    }
    assert!(d[widths.rank..].iter().all(|&v| v == d[widths.rank]));
}

#[test]
fn rank_one_family_has_zero_width() {
    let system = thermal_block(16, 16, 2, 2, 1.0).unwrap();
    let snapshots: Vec<Snapshot> = (1..=6)
        .map(|k| solve_fom(&system, &ParameterPoint::uniform(4, 0.15 * k as f64)).unwrap())
        .collect();
    let w = pod_width_upper_bound(&snapshots, &system, 4).unwrap();
    assert_eq!(w.rank, 1);
    assert!(w.d_up[1] <= 1e-8 * w.d_up[0]);
}

/// Points on the unit sphere with covering radius below `h`.
fn sphere_grid(h: f64) -> Vec<Vector3<f64>> {
    let steps_theta = (PI / h).ceil() as usize;
    let steps_phi = (2.0 * PI / h).ceil() as usize;
    let mut out = Vec::new();
    for i in 0..=steps_theta {
        let theta = PI * i as f64 / steps_theta as f64;
        for j in 0..steps_phi {
            let phi = 2.0 * PI * j as f64 / steps_phi as f64;
            out.push(Vector3::new(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()));
        }
    }
    out
}

#[test]
fn width_bound_dominates_brute_force_width_of_three_snapshots() {
    let system = thermal_block(16, 16, 2, 2, 1.0).unwrap();
    let snapshots: Vec<Snapshot> = [[0.1, 1.0, 0.5, 0.3], [1.0, 0.2, 0.4, 0.9], [0.6, 0.6, 0.1, 0.8]]
        .iter()
        .map(|w| solve_fom(&system, &ParameterPoint::new(w.to_vec())).unwrap())
        .collect();
    let w = pod_width_upper_bound(&snapshots, &system, 3).unwrap();
    // X-orthonormal coordinates in the span: G = L Lᵀ, f_i ↦ row i of L
    let gram = DMatrix::from_fn(3, 3, |i, j| {
        system.x_inner(&snapshots[i].coefficients, &snapshots[j].coefficients).unwrap()
    });
    let l = gram.cholesky().unwrap().l();
    let coords: Vec<Vector3<f64>> = (0..3).map(|i| Vector3::new(l[(i, 0)], l[(i, 1)], l[(i, 2)])).collect();
    let sigma0 = coords.iter().map(|c| c.norm()).fold(0.0, f64::max);
    assert!((sigma0 - w.d_up[0]).abs() <= 1e-10 * sigma0);

    // optimal spaces for a finite set lie inside its span; lines through u for
    // n = 1, planes with normal u for n = 2
    let h = 0.01;
    let grid = sphere_grid(h);
    let line = |u: &Vector3<f64>| {
        coords
            .iter()
            .map(|f| (f - u * f.dot(u)).norm())
            .fold(0.0, f64::max)
    };
    let plane = |u: &Vector3<f64>| coords.iter().map(|f| f.dot(u).abs()).fold(0.0, f64::max);
    let d1 = grid.iter().map(line).fold(f64::INFINITY, f64::min);
    let d2 = grid.iter().map(plane).fold(f64::INFINITY, f64::min);
    // grid minima overshoot the true minima by at most Lipschitz constant × h
    assert!(w.d_up[1] >= d1 - 2.0 * sigma0 * h, "{} < {d1}", w.d_up[1]);
    assert!(w.d_up[2] >= d2 - sigma0 * h, "{} < {d2}", w.d_up[2]);
    assert!(w.d_up[3] <= 1e-10 * sigma0);
}

#[test]
fn noisy_exponential_fit_recovers_the_rate() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let values: Vec<f64> = (0..30)
        .map(|n| 2.0 * (-0.5 * n as f64).exp() * 1.01f64.powf(rng.random_range(-1.0..=1.0)))
        .collect();
    let fit = fit_exponential(&values, Some(1.0)).unwrap();
    assert!((fit.rate - 0.5).abs() <= 0.05 * 0.5, "rate {}", fit.rate);
    assert!(fit.residual_factor() <= 1.01);
    let free = fit_exponential(&values, None).unwrap();
    assert!((0.2..=2.0).contains(&free.alpha));
    assert!(free.residual <= fit.residual + 1e-9);

    let flat = fit_exponential(&[3.0; 8], Some(1.0)).unwrap();
    assert!(!flat.is_decaying());
    assert!(matches!(fit_exponential(&[1.0, 0.5, 0.0, 0.1], None), Err(Error::Domain(_))));
    assert!(matches!(fit_exponential(&[1.0, 0.5], None), Err(Error::InsufficientData(_))));
}

#[test]
fn constants_in_the_batch_regime() {
    for alpha in [0.5, 1.0, 2.0] {
        for b in 2..6 {
            for n in (b - 1).max(1)..20 {
                // ⌈4 + (b−1)/n⌉ = 5, C₀ large enough that the first branch wins
                let c = constant_c1_polynomial(n, b, alpha, 1.0, 100.0);
                let expected = 100.0 * 2f64.powf(alpha + 1.0) * 5f64.powf(2.0 * alpha);
                assert!((c - expected).abs() <= 1e-14 * expected);
            }
            for n in b + 1..20 {
                let c = constant_c1_exponential(n, b, alpha, 0.7, 1e6);
                let expected = 0.5 * 6f64.powf(-alpha) * 0.7;
                assert!((c.first_term - expected).abs() <= 1e-14 * expected);
            }
        }
    }
}

proptest! {
    #[test]
    fn polynomial_constant_formula(
        n in 1usize..50, b in 1usize..20, alpha in 0.2f64..3.0, gamma in 0.05f64..=1.0, c0 in 0.01f64..10.0,
    ) {
        let c = constant_c1_polynomial(n, b, alpha, gamma, c0);
        prop_assert!(c >= (b as f64 + 2.0).powf(alpha) * (1.0 - 1e-15));
        // direct evaluation with the ceiling done in integers
        let ceil = (4 * n + b - 1).div_ceil(n) as f64;
        let first = c0 * 2f64.powf(alpha + 1.0) / (gamma * gamma) * ceil.powf(2.0 * alpha);
        let expected = first.max((b as f64 + 2.0).powf(alpha));
        prop_assert!((c - expected).abs() <= 1e-13 * expected);
        // worse γ never helps
        prop_assert!(constant_c1_polynomial(n, b, alpha, gamma * 0.5, c0) >= c);
    }

    #[test]
    fn exponential_constant_formula(
        n in 1usize..50, b in 1usize..20, alpha in 0.2f64..3.0, c0 in 0.01f64..10.0, big_c1 in 0.5f64..100.0,
    ) {
        let r = constant_c1_exponential(n, b, alpha, c0, big_c1);
        let ceil = (2 * n + b - 1).div_ceil(n) as f64;
        let first = c0 * 2f64.powf(-(alpha + 1.0)) * ceil.powf(-alpha);
        prop_assert!((r.first_term - first).abs() <= 1e-13 * first);
        prop_assert!(r.value <= r.first_term);
        prop_assert_eq!(r.degenerate, big_c1 <= 1.0);
        let wider = constant_c1_exponential(n, b + 1, alpha, c0, big_c1).value;
        if r.degenerate {
            prop_assert!(r.value <= 0.0);
        } else {
            // larger batches never improve a usable rate; with ln C₁ < 0 dividing by b^α moves it toward 0
            prop_assert!(wider <= r.value * (1.0 + 1e-15));
        }
    }
}

#[test]
fn artifact_round_trip_and_incompatibility() {
    let system = thermal_block(8, 8, 2, 2, 1.0).unwrap();
    let config = GreedyConfig::new(build_training_set(2, 2, 2).unwrap()).with_batch_size(2);
    let outcome = run_batch_greedy(&config, &system).unwrap();
    let data = outcome.estimator.as_ref().unwrap().data();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    ModelArtifact::new(&system, &outcome.basis, &outcome.model, data)
        .unwrap()
        .save(&path)
        .unwrap();
    let loaded = ModelArtifact::load(&path).unwrap().restore(&system).unwrap();
    assert_eq!(&loaded.estimator, data);
    assert_eq!(loaded.model.reduced_components, outcome.model.reduced_components);
    assert_eq!(loaded.basis.vectors(), outcome.basis.vectors());

    let other = thermal_block(16, 16, 2, 2, 1.0).unwrap();
    let err = ModelArtifact::load(&path).unwrap().restore(&other).unwrap_err();
    assert!(matches!(err, Error::Artifact(_)));
    let truncated = data.truncate(1).unwrap();
    assert!(ModelArtifact::new(&system, &outcome.basis, &outcome.model, &truncated).is_err());
}

fn small_experiment(out: &std::path::Path) -> ExperimentConfig {
    ExperimentConfig {
        nx: 8,
        ny: 8,
        train_per_dim: 3,
        test_count: 12,
        batch_sizes: vec![1, 3],
        out: out.to_path_buf(),
        ..Default::default()
    }
}

#[test]
fn experiments_are_reproducible_from_the_lock_file() {
    let dir = tempfile::tempdir().unwrap();
    let first_dir = dir.path().join("first");
    let config = small_experiment(&first_dir);
    let first = run_experiment(&config).unwrap();

    let mut replay = ExperimentConfig::from_file(&first_dir.join("config.lock")).unwrap();
    assert_eq!(replay, config);
    replay.out = dir.path().join("second");
    let second = run_experiment(&replay).unwrap();

    for (a, b) in first.summaries.iter().zip(&second.summaries) {
        assert_eq!(
            (a.batch_size, a.num_ext, a.num_iter, a.num_discarded, a.err_final),
            (b.batch_size, b.num_ext, b.num_iter, b.num_discarded, b.err_final)
        );
    }
    for (a, b) in first.outcomes.iter().zip(&second.outcomes) {
        assert_eq!(a.trace.selection_sequence(), b.trace.selection_sequence());
        assert_eq!(a.trace.amatrix, b.trace.amatrix);
    }
    for name in ["errdecay_b1.csv", "errdecay_b3.csv", "amatrix_b3.csv", "model_b1.json"] {
        let a = std::fs::read(first_dir.join(name)).unwrap();
        let b = std::fs::read(replay.out.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs");
    }
    let summary = std::fs::read_to_string(first_dir.join("summary.csv")).unwrap();
    assert!(summary.starts_with("batchsizes,num_ext,num_iter,"));
    assert_eq!(summary.lines().count(), 3);
}

#[test]
fn oracle_experiment_writes_a_passing_theory_report() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = small_experiment(dir.path());
    config.oracle = true;
    config.batch_sizes = vec![1, 2];
    let report = run_experiment(&config).unwrap();
    let theory = report.theory.unwrap();
    assert_eq!(theory.runs.len(), 4);
    assert!(theory.all_passed());
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("theory_report.json")).unwrap()).unwrap();
    assert_eq!(json["runs"].as_array().unwrap().len(), 4);
}
