use std::sync::OnceLock;

use nalgebra::DVector;

use rbgreedy::bench::{build_training_set, random_test_set};
use rbgreedy::estimator::{build_estimator, check_riesz, estimate, EffectivityBounds, CANCELLATION_RATIO};
use rbgreedy::fem::{solve_fom, thermal_block, AffineSystem, ParameterPoint};
use rbgreedy::greedy::{run_batch_greedy, GreedyConfig, GreedyOutcome};
use rbgreedy::rb::{reconstruct, solve_rom};

struct Fixture {
    system: AffineSystem,
    outcome: GreedyOutcome,
}

fn fixture() -> &'static Fixture {
    static CELL: OnceLock<Fixture> = OnceLock::new();
    CELL.get_or_init(|| {
        let system = thermal_block(16, 16, 2, 2, 1.0).unwrap();
        let config = GreedyConfig::new(build_training_set(2, 2, 3).unwrap()).with_batch_size(2);
        let outcome = run_batch_greedy(&config, &system).unwrap();
        Fixture { system, outcome }
    })
}

#[test]
fn rigor_and_effectivity_on_random_parameters() {
    let Fixture { system, outcome } = fixture();
    let data = outcome.estimator.as_ref().unwrap().data();
    assert!(outcome.basis.len() >= 4);
    for n in [1, outcome.basis.len() / 2, outcome.basis.len()] {
        let basis = outcome.basis.prefix(n).unwrap();
        let model = outcome.model.truncate(n).unwrap();
        let data = data.truncate(n).unwrap();
        for mu in random_test_set(4, 50, 11) {
            let u = solve_fom(system, &mu).unwrap().coefficients;
            let u_rb = reconstruct(&basis, &solve_rom(&model, &mu).unwrap()).unwrap();
            let err = system.x_norm(&(&u - &u_rb)).unwrap();
            let delta = estimate(&data, &model, &mu).unwrap();
            // below this the expansion has no significant digits left
            let floor = CANCELLATION_RATIO * data.initial_estimate(&mu).unwrap();
            assert!(err <= delta * (1.0 + 1e-8) + floor, "n={n}: err {err} > Δ {delta}");
            let ratio = mu.max_weight() / mu.min_weight();
            assert!(delta <= ratio * err * (1.0 + 1e-8) + floor, "n={n}: Δ {delta} > {ratio}·{err}");
        }
    }
}

#[test]
fn offline_online_matches_direct_residual() {
    // the squared expansion loses about ε·(Δ_0/Δ)² relative accuracy, so 10⁻⁶
    // agreement is only expected while Δ stays well above √ε·Δ_0
    let Fixture { system, outcome } = fixture();
    let initial = outcome.estimator.as_ref().unwrap().data().load_load.sqrt();
    let mut checked = 0;
    for n in 1..=outcome.basis.len() {
        let basis = outcome.basis.prefix(n).unwrap();
        let builder = build_estimator(&basis, system).unwrap();
        let model = outcome.model.truncate(n).unwrap();
        for mu in random_test_set(4, 10, 5) {
            let d = check_riesz(&builder, &model, &basis, system, &mu).unwrap();
            let ratio = d.direct / initial;
            if ratio >= 1e-4 {
                assert!(d.relative_deviation <= 1e-6, "n={n}: deviation {} at ratio {ratio:e}", d.relative_deviation);
                checked += 1;
            }
            assert_eq!(d.cancellation_regime, d.offline_online < CANCELLATION_RATIO * initial);
        }
    }
    assert!(checked >= 50);
}

#[test]
fn initial_estimate_is_load_norm_over_alpha() {
    let Fixture { system, outcome } = fixture();
    let builder = outcome.estimator.as_ref().unwrap();
    let z = builder.riesz_load();
    let f_norm = system.x_norm(z).unwrap();
    for mu in random_test_set(4, 5, 2) {
        let expected = f_norm / mu.min_weight();
        let got = builder.data().initial_estimate(&mu).unwrap();
        assert!((got - expected).abs() <= 1e-12 * expected);
        let empty = builder.data().truncate(0).unwrap();
        let zero = empty.estimate_with_coefficients(&mu, &DVector::zeros(0)).unwrap();
        assert!((zero - expected).abs() <= 1e-12 * expected);
    }
}

#[test]
fn incremental_tables_match_from_scratch() {
    let Fixture { system, outcome } = fixture();
    let incremental = outcome.estimator.as_ref().unwrap().data();
    let scratch = build_estimator(&outcome.basis, system).unwrap();
    let scratch = scratch.data();
    let cc = &incremental.component_component;
    assert!((cc - &scratch.component_component).amax() <= 1e-10 * cc.amax());
    assert!((&incremental.load_component - &scratch.load_component).amax() <= 1e-10 * incremental.load_component.amax());
    assert!((cc - cc.transpose()).amax() == 0.0);
}

#[test]
fn estimator_vanishes_at_snapshot_parameters() {
    let Fixture { outcome, .. } = fixture();
    let data = outcome.estimator.as_ref().unwrap().data();
    for p in outcome.basis.provenance() {
        let delta = estimate(data, &outcome.model, &p.parameter).unwrap();
        let delta0 = data.initial_estimate(&p.parameter).unwrap();
        assert!(delta <= 1e-6 * delta0, "Δ {delta} at a snapshot parameter");
    }
}

#[test]
fn riesz_representer_of_a_component_image() {
    let Fixture { system, outcome } = fixture();
    let builder = outcome.estimator.as_ref().unwrap();
    let v = &outcome.basis.vectors()[1];
    let z = builder.riesz_component(3, 1);
    // ⟨z, w⟩_X = (A_3 v)·w for any w
    let w = outcome.basis.vectors()[0].clone();
    let lhs = system.x_inner(z, &w).unwrap();
    let rhs = system.apply_component(3, v).dot(&w);
    let scale = system.x_norm(z).unwrap() * system.x_norm(&w).unwrap();
    assert!((lhs - rhs).abs() <= 1e-10 * scale);
}

#[test]
fn effectivity_constants() {
    let bounds = EffectivityBounds::default();
    assert!((bounds.gamma_greedy() - 0.1).abs() < 1e-15);
    let mu = ParameterPoint::new(vec![0.2, 0.9, 0.5, 0.3]);
    assert_eq!(bounds.alpha_lb(&mu).unwrap(), 0.2);
    assert_eq!(bounds.gamma_ub(&mu).unwrap(), 0.9);
    assert!(bounds.alpha_lb(&ParameterPoint::new(vec![0.0, 1.0])).is_err());
}
