//! Property tests for invariants that span modules.

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use moce_core::losses::LossSpec;
use moce_core::mnig_em::{bessel_k, em_step};
use moce_core::oracle_bench::{oracle_allocation, GaussianExpCase};
use moce_core::sa_engine::{
    first_order_residual, rm_trajectory, solve_full, BoxConstraint, EstimatorOptions, StepSchedule,
};
use moce_core::scenarios::{
    GaussianModel, MnigModel, MnigParams, RngStream, Sampler, ScenarioModel,
};
use moce_core::sensitivity::{alloc_marginal, ShockModel};

fn gaussian_case() -> impl Strategy<Value = GaussianExpCase> {
    (
        0.5..2.0f64,
        0.5..2.0f64,
        0.0..1.5f64,
        0.5..1.5f64,
        0.5..1.5f64,
        -0.9..0.9f64,
    )
        .prop_map(|(l1, l2, a, s1, s2, rho)| {
            GaussianExpCase::new([l1, l2], a, [s1, s2], rho).unwrap()
        })
}

fn mnig_params() -> impl Strategy<Value = MnigParams> {
    (
        1.5..4.0f64,
        prop::array::uniform2(-0.5..0.5f64),
        0.5..2.0f64,
        prop::array::uniform2(-1.0..1.0f64),
        0.5..2.0f64,
        0.5..2.0f64,
        -0.6..0.6f64,
    )
        .prop_map(|(alpha, beta, delta, mu, g1, g2, r)| {
            let c = r * (g1 * g2).sqrt();
            MnigParams::normalized(
                alpha,
                beta.to_vec(),
                delta,
                mu.to_vec(),
                DMatrix::from_row_slice(2, 2, &[g1, c, c, g2]),
            )
            .unwrap()
        })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn iterates_never_leave_the_box(
        case in gaussian_case(),
        lo in -1.0..0.5f64,
        width in 0.2..3.0f64,
        gamma in 0.55..1.0f64,
        c in 0.1..5.0f64,
        seed in any::<u64>(),
    ) {
        let bx = BoxConstraint::cube(2, lo, lo + width).unwrap();
        let sched = StepSchedule::new(c, gamma, 10.0, 2000).unwrap();
        let tr = rm_trajectory(&case.loss(), &case.model(), &sched, &bx, &[lo, lo], &mut RngStream::new(seed)).unwrap();
        prop_assert!(tr.iterates.iter().all(|m| bx.contains(m)));
    }

    #[test]
    fn fixed_seed_gives_bit_identical_estimates(case in gaussian_case(), seed in any::<u64>()) {
        let sched = StepSchedule { n_iter: 5000, ..StepSchedule::default() };
        let bx = BoxConstraint::cube(2, -1.0, 4.0).unwrap();
        let run = || solve_full(&case.loss(), &case.model(), &sched, &bx, &[0.0, 0.0], &mut RngStream::new(seed), &EstimatorOptions::default()).unwrap();
        prop_assert_eq!(run(), run());
    }

    #[test]
    fn same_seed_same_samples(p in mnig_params(), seed in any::<u64>()) {
        let m = MnigModel::new(p).unwrap();
        let a = m.sample(&mut RngStream::new(seed), 64);
        let b = m.sample(&mut RngStream::new(seed), 64);
        prop_assert_eq!(a.as_slice(), b.as_slice());
    }

    #[test]
    fn em_step_keeps_unit_determinant_and_valid_mixing(p in mnig_params(), seed in any::<u64>()) {
        let data = MnigModel::new(p.clone()).unwrap().sample(&mut RngStream::new(seed), 400);
        let next = em_step(&p, &data).unwrap();
        prop_assert!((next.gamma().determinant() - 1.0).abs() < 1e-10);
        prop_assert!(next.psi() > 0.0);
        prop_assert!(next.delta() > 0.0);
    }

    #[test]
    fn half_integer_orders_follow_the_recurrence(k in 0usize..12, z in 1e-3..200.0f64) {
        // K_{v+1} = K_{v-1} + (2v / z) K_v
        let v = k as f64 + 0.5;
        let lo = bessel_k(v - 1.0, z).unwrap();
        let mid = bessel_k(v, z).unwrap();
        let hi = bessel_k(v + 1.0, z).unwrap();
        if hi.is_normal() && lo.is_normal() {
            let rhs = lo + 2.0 * v / z * mid;
            prop_assert!((hi - rhs).abs() <= 1e-12 * hi.abs(), "{} vs {}", hi, rhs);
        }
    }

    #[test]
    fn allocation_marginal_solves_its_system(case in gaussian_case(), a in -1.0..1.0f64, b in -1.0..1.0f64, seed in any::<u64>()) {
        let m = oracle_allocation(&case).unwrap().m_star;
        let x: ScenarioModel = case.model().into();
        let shock = ShockModel::ComponentCorrelated { scale: vec![a, 0.0], shift: vec![b, 0.5] };
        let joint = shock.sample_joint(&x, &mut RngStream::new(seed), 5000).unwrap();
        let r = alloc_marginal(&case.loss(), &joint, &m).unwrap();
        let mm = r.m();
        prop_assert!((&mm - mm.transpose()).abs().max() < 1e-12);
        prop_assert!(mm.clone().symmetric_eigen().eigenvalues.min() > -1e-6);
        let resid = &mm * DVector::from_vec(r.alloc_marginal.clone()) - DVector::from_vec(r.v_vector.clone());
        prop_assert!(resid.abs().max() < 1e-10 * (1.0 + mm.abs().max()));
    }

    #[test]
    fn coupled_allocations_increase_with_correlation(l in prop::array::uniform2(0.5..2.0f64), alpha in 0.1..1.5f64, r in -0.8..0.7f64) {
        let lo = oracle_allocation(&GaussianExpCase::new(l, alpha, [1.0, 1.0], r).unwrap()).unwrap();
        let hi = oracle_allocation(&GaussianExpCase::new(l, alpha, [1.0, 1.0], r + 0.1).unwrap()).unwrap();
        prop_assert!(hi.m_star[0] > lo.m_star[0] && hi.m_star[1] > lo.m_star[1]);
        prop_assert!(hi.risk > lo.risk);
    }
}

#[test]
fn first_order_residual_is_small_at_the_averaged_allocation() {
    let case = GaussianExpCase::new([1.0, 2.0], 1.0, [1.0, 1.0], 0.3).unwrap();
    let sched = StepSchedule::default();
    let bx = BoxConstraint::cube(2, 0.0, 3.0).unwrap();
    let est = solve_full(
        &case.loss(),
        &case.model(),
        &sched,
        &bx,
        &[0.0, 0.0],
        &mut RngStream::new(11),
        &EstimatorOptions::default(),
    )
    .unwrap();
    let n = sched.n_iter;
    let (mean, _) = first_order_residual(
        &case.loss(),
        &case.model(),
        &est.m_bar,
        n,
        &mut RngStream::new(12),
    );
    let norm = mean.iter().map(|v| v * v).sum::<f64>().sqrt();
    let bound = 3.0 * (est.sigma_matrix().trace() / n as f64).sqrt();
    assert!(norm <= bound, "residual {norm} above {bound}");
}

#[test]
fn uncoupled_exponential_allocation_is_unaffected_by_correlation() {
    let spec = LossSpec::exponential(vec![1.0, 2.0], 0.0).unwrap();
    let bx = BoxConstraint::cube(2, 0.0, 3.0).unwrap();
    let sched = StepSchedule {
        n_iter: 100_000,
        ..StepSchedule::default()
    };
    let run = |rho: f64| {
        let model = GaussianModel::bivariate(1.0, 1.0, rho).unwrap();
        solve_full(
            &spec,
            &model,
            &sched,
            &bx,
            &[0.0, 0.0],
            &mut RngStream::new(5),
            &EstimatorOptions::default(),
        )
        .unwrap()
    };
    let (a, b) = (run(-0.8), run(0.8));
    let hw = a.half_widths().unwrap();
    for j in 0..2 {
        assert!((a.m_bar[j] - b.m_bar[j]).abs() < 4.0 * hw[j] + 0.02);
    }
}
