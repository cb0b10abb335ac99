mod common;

use common::{gaussian, oracle_singular_values, orthonormal, planted, rel_diff, vec_close};
use proptest::prelude::*;
use seqrank::datagen::{generate_w_star, make_dataset, sample_x};
use seqrank::linalg::{norm2, svd};
use seqrank::solver::{
    best_rank1_exact, make_allocation, measure_delta, product_distance, rank1_gd, reconstruct_w, solve_exact,
    solve_inexact, RankOneComponent, SolveMode, SolveTrace,
};
use seqrank::{
    AllocationPlan, AllocationStrategy, DenseMatrix, Design, GdConfig, NoiseSpec, Profile, SolveError, StepSize,
};

/// Noiseless instance with a well separated spectrum.
fn instance(m: usize, d: usize, n: usize, r_star: usize, profile: Profile, seed: u64) -> (DenseMatrix, DenseMatrix, DenseMatrix) {
    let gt = generate_w_star(m, d, r_star, profile, 100.0, seed).unwrap();
    let ds = make_dataset(&gt, n, NoiseSpec::noiseless(), seed + 1).unwrap();
    (gt.w_star, ds.x, ds.y)
}

fn gd(iters: usize) -> GdConfig {
    GdConfig {
        max_iters: iters,
        ..GdConfig::default()
    }
}

#[test]
fn exact_step_identity_design() {
    let u = [0.6, 0.8];
    let v = [0.0, 1.0, 0.0];
    let y = DenseMatrix::outer(&u, &v).unwrap().scaled(4.0).unwrap();
    let step = best_rank1_exact(&y, &DenseMatrix::identity(3)).unwrap();
    assert!(vec_close(&step.b, &u, 1e-14));
    assert!(vec_close(&step.a, &[0.0, 4.0, 0.0], 1e-14));
    assert!((step.sigma - 4.0).abs() < 1e-14);
    let fit = DenseMatrix::outer(&step.b, &step.a).unwrap();
    assert!(fit.sub(&y).unwrap().max_abs() < 1e-14);
}

#[test]
fn exact_step_diagonal() {
    let y = DenseMatrix::diagonal(2, 4, &[5.0, 3.0]).unwrap();
    let step = best_rank1_exact(&y, &DenseMatrix::identity(4)).unwrap();
    let fit = DenseMatrix::outer(&step.b, &step.a).unwrap();
    let mut want = DenseMatrix::zeros(2, 4);
    want[(0, 0)] = 5.0;
    assert!(fit.sub(&want).unwrap().max_abs() < 1e-14);
    // b has unit norm and a positive largest entry.
    assert!((norm2(&step.b) - 1.0).abs() < 1e-15);
    assert!(step.b[0] > 0.0);
}

#[test]
fn exact_step_residual_is_tail_norm() {
    let x = sample_x(50, 200, 4).unwrap();
    // Labels in the row space of X so that the tail is attainable.
    let y = gaussian(20, 50, 5).matmul(&x).unwrap();
    let step = best_rank1_exact(&y, &x).unwrap();
    let design = Design::new(&x).unwrap();
    let resid = design.deflate(&y, &step.a, &step.b).unwrap().frobenius_norm();
    let s = oracle_singular_values(&y);
    let tail = s[1..].iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!((resid - tail).abs() <= 1e-6 * tail, "{resid} vs {tail}");
}

#[test]
fn exact_step_rejects_zero_and_bad_shapes() {
    let x = DenseMatrix::identity(3);
    assert!(matches!(best_rank1_exact(&DenseMatrix::zeros(2, 3), &x), Err(SolveError::ZeroTarget)));
    assert!(matches!(best_rank1_exact(&DenseMatrix::zeros(2, 4), &x), Err(SolveError::Shape(_))));
}

#[test]
fn solve_exact_recovers_noiseless_labels() {
    for p in Profile::ALL {
        let (w, x, y) = instance(30, 40, 80, 6, p, 7);
        let trace = solve_exact(&x, &y, 6).unwrap();
        assert_eq!(trace.mode, SolveMode::Exact);
        assert!(trace.training_error() <= 1e-8 * y.frobenius_norm());
        let w_hat = reconstruct_w(&trace).unwrap();
        assert!(rel_diff(&w_hat, &w) <= 1e-6, "{p}");
    }
}

#[test]
fn solve_exact_rank_one_label() {
    let x = sample_x(6, 20, 2).unwrap();
    let w = DenseMatrix::outer(&[1.0, -2.0, 0.5], &[0.3, 0.0, 1.0, 0.0, -1.0, 2.0]).unwrap();
    let y = w.matmul(&x).unwrap();
    let trace = solve_exact(&x, &y, 1).unwrap();
    assert_eq!(trace.components.len(), 1);
    assert!(trace.training_error() <= 1e-10 * y.frobenius_norm());
}

#[test]
fn solve_exact_truncated_residual_is_tail() {
    let (_, x, y) = instance(20, 30, 60, 8, Profile::PowerLaw, 3);
    let s = y.singular_values().unwrap();
    for r in [1, 3, 5] {
        let trace = solve_exact(&x, &y, r).unwrap();
        let tail = s[r..].iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((trace.training_error() - tail).abs() <= 1e-6 * tail);
    }
}

#[test]
fn solve_exact_marks_rank_exhaustion() {
    let (_, x, y) = instance(10, 12, 30, 2, Profile::PowerLaw, 1);
    let trace = solve_exact(&x, &y, 4).unwrap();
    assert!(trace.rank_exhausted);
    let last = &trace.components[3];
    assert!(last.a.iter().chain(&last.b).all(|v| *v == 0.0));
}

#[test]
fn lemma1_deflated_spectrum() {
    for seed in 0..5 {
        let (_, x, y) = instance(40, 60, 120, 8, Profile::PowerLaw, 10 + seed);
        let s = y.singular_values().unwrap();
        let design = Design::new(&x).unwrap();
        let (_, hist) = design.solve_exact_recorded(&y, 8).unwrap();
        for k in 0..7 {
            let top = hist[k + 1].spectral_norm().unwrap();
            assert!((top - s[k + 1]).abs() <= 1e-8 * s[k + 1], "seed {seed} k {k}");
        }
    }
}

#[test]
fn exact_residuals_strictly_decrease() {
    let (_, x, y) = instance(15, 20, 50, 6, Profile::ExponentialDecay, 2);
    let trace = solve_exact(&x, &y, 6).unwrap();
    let mut prev = trace.y_fro_initial;
    for c in &trace.components {
        assert!(c.residual_fro_after < prev);
        prev = c.residual_fro_after;
    }
}

#[test]
fn gd_zero_budget_returns_init() {
    let (_, x, y) = instance(5, 6, 20, 2, Profile::PowerLaw, 1);
    let out = rank1_gd(&y, &x, &gd(0), 99).unwrap();
    assert_eq!(out.iters_used, 0);
    let again = rank1_gd(&y, &x, &gd(0), 99).unwrap();
    assert_eq!(out.a, again.a);
    // Init is N(0, 1e-4): tiny but not zero.
    assert!(norm2(&out.a) > 0.0 && norm2(&out.a) < 1.0);
}

#[test]
fn gd_on_zero_target_shrinks() {
    let x = sample_x(6, 20, 1).unwrap();
    let y = DenseMatrix::zeros(4, 20);
    let init = rank1_gd(&y, &x, &gd(0), 5).unwrap();
    let out = rank1_gd(&y, &x, &gd(500), 5).unwrap();
    let init_mag = norm2(&init.a) * norm2(&init.b);
    assert!(norm2(&out.a) * norm2(&out.b) <= init_mag);
}

#[test]
fn gd_recovers_rank_one_with_identity_design() {
    let u = [0.6, 0.0, 0.8];
    let v = [0.5, 0.5, 0.5, 0.5];
    let y = DenseMatrix::outer(&u, &v).unwrap().scaled(3.0).unwrap();
    let out = rank1_gd(&y, &DenseMatrix::identity(4), &gd(20_000), 1).unwrap();
    let sv: Vec<f64> = v.iter().map(|x| 3.0 * x).collect();
    assert!(product_distance(&out.a, &out.b, &sv, &u).unwrap() <= 1e-6);
}

#[test]
fn gd_divergence_names_step_sizes() {
    let (_, x, y) = instance(5, 6, 20, 2, Profile::PowerLaw, 1);
    let cfg = GdConfig {
        step_a: StepSize::Fixed(1e3),
        step_b: StepSize::Fixed(1e3),
        max_iters: 1000,
        ..GdConfig::default()
    };
    let err = rank1_gd(&y, &x, &cfg, 1).unwrap_err();
    assert!(matches!(err, SolveError::Diverged { .. }));
    assert!(err.to_string().contains("step_a = 1e3"));
}

#[test]
fn delta_of_exact_pair_is_zero() {
    let (_, x, y) = instance(8, 10, 30, 3, Profile::PowerLaw, 4);
    let e = best_rank1_exact(&y, &x).unwrap();
    assert!(measure_delta(&y, &x, &e.a, &e.b).unwrap() <= 1e-10);
    let c = 3.7;
    let a: Vec<f64> = e.a.iter().map(|v| v * c).collect();
    let b: Vec<f64> = e.b.iter().map(|v| v / c).collect();
    assert!(measure_delta(&y, &x, &a, &b).unwrap() <= 1e-10 * e.sigma);
}

#[test]
fn delta_shrinks_with_budget() {
    let (_, x, y) = instance(8, 10, 60, 3, Profile::PowerLaw, 4);
    let design = Design::new(&x).unwrap();
    let mut prev = f64::INFINITY;
    for t in [50, 100, 200, 400] {
        let out = design.rank1_gd(&y, &gd(t), 3).unwrap();
        let delta = design.measure_delta(&y, &out.a, &out.b).unwrap();
        assert!(delta > 0.0);
        assert!(delta < prev, "t = {t}: {delta} vs {prev}");
        prev = delta;
    }
}

#[test]
fn delta_convergence_along_geometric_grid() {
    let (_, x, y) = instance(10, 20, 2000, 5, Profile::PowerLaw, 21);
    let design = Design::new(&x).unwrap();
    let deltas: Vec<f64> = (4..=14)
        .map(|i| {
            let out = design.rank1_gd(&y, &gd(1 << i), 8).unwrap();
            design.measure_delta(&y, &out.a, &out.b).unwrap()
        })
        .collect();
    for w in deltas.windows(2) {
        assert!(w[1] <= 1.1 * w[0], "{deltas:?}");
    }
    assert!(*deltas.last().unwrap() <= 1e-6, "{deltas:?}");
}

#[test]
fn inexact_with_large_budgets_matches_exact() {
    let (w, x, y) = instance(10, 15, 40, 3, Profile::PowerLaw, 6);
    let plan = AllocationPlan::explicit(vec![20_000; 3]).unwrap();
    let trace = solve_inexact(&x, &y, 3, &plan, &GdConfig::default(), 1).unwrap();
    assert_eq!(trace.mode, SolveMode::Inexact);
    assert_eq!(trace.iters(), vec![20_000; 3]);
    let w_hat = reconstruct_w(&trace).unwrap();
    assert!(rel_diff(&w_hat, &w) <= 1e-4);
}

#[test]
fn inexact_with_zero_budgets_leaves_labels() {
    let (_, x, y) = instance(10, 15, 40, 3, Profile::PowerLaw, 6);
    let plan = AllocationPlan::explicit(vec![0; 3]).unwrap();
    let cfg = GdConfig {
        init_scale: 1e-8,
        ..GdConfig::default()
    };
    let trace = solve_inexact(&x, &y, 3, &plan, &cfg, 1).unwrap();
    assert!((trace.training_error() - y.frobenius_norm()).abs() <= 1e-6);
}

#[test]
fn inexact_rejects_mismatched_plan() {
    let (_, x, y) = instance(6, 8, 20, 2, Profile::PowerLaw, 6);
    let plan = make_allocation(AllocationStrategy::Equal, 3, 30).unwrap();
    assert!(matches!(
        solve_inexact(&x, &y, 2, &plan, &GdConfig::default(), 0),
        Err(SolveError::InvalidAllocation(_))
    ));
}

#[test]
fn reconstruct_w_cases() {
    let comp = |a: Vec<f64>, b: Vec<f64>| RankOneComponent {
        a,
        b,
        delta_fro: 0.0,
        iters_used: 0,
        residual_fro_after: 0.0,
        target_sigma: 0.0,
    };
    let trace = SolveTrace {
        components: vec![comp(vec![1.0, 2.0], vec![3.0, 0.0, -1.0]), comp(vec![0.0, 0.0], vec![0.0; 3])],
        mode: SolveMode::Exact,
        y_fro_initial: 1.0,
        allocation: None,
        rank_exhausted: true,
    };
    let w = reconstruct_w(&trace).unwrap();
    assert_eq!(w, DenseMatrix::outer(&[3.0, 0.0, -1.0], &[1.0, 2.0]).unwrap());
    let empty = SolveTrace {
        components: vec![],
        ..trace
    };
    assert!(matches!(reconstruct_w(&empty), Err(SolveError::EmptyTrace)));
}

#[test]
fn traces_are_seed_deterministic() {
    let (_, x, y) = instance(12, 16, 40, 4, Profile::ExponentialDecay, 8);
    let plan = make_allocation(AllocationStrategy::MoreFirst, 4, 800).unwrap();
    let a = solve_inexact(&x, &y, 4, &plan, &GdConfig::default(), 77).unwrap();
    let b = solve_inexact(&x, &y, 4, &plan, &GdConfig::default(), 77).unwrap();
    assert_eq!(a, b);
    let c = solve_inexact(&x, &y, 4, &plan, &GdConfig::default(), 78).unwrap();
    assert_ne!(a, c);
}

#[test]
fn product_is_scale_invariant_downstream() {
    let (_, x, y) = instance(8, 10, 30, 3, Profile::PowerLaw, 4);
    let design = Design::new(&x).unwrap();
    let out = design.rank1_gd(&y, &gd(100), 2).unwrap();
    let c = 1e3;
    let a2: Vec<f64> = out.a.iter().map(|v| v * c).collect();
    let b2: Vec<f64> = out.b.iter().map(|v| v / c).collect();
    let r1 = design.deflate(&y, &out.a, &out.b).unwrap();
    let r2 = design.deflate(&y, &a2, &b2).unwrap();
    assert!(r1.sub(&r2).unwrap().max_abs() <= 1e-12 * y.max_abs());
    let d1 = design.measure_delta(&y, &out.a, &out.b).unwrap();
    let d2 = design.measure_delta(&y, &a2, &b2).unwrap();
    assert!((d1 - d2).abs() <= 1e-12 * y.frobenius_norm());
}

#[test]
fn exact_fit_against_svd_of_projected_labels() {
    // With X orthonormal-rowed the exact step is the top SVD pair of Y Xᵀ.
    let x = orthonormal(30, 5, 3).transpose();
    let w = planted(4, 5, &[6.0, 2.0, 1.0], 4);
    let y = w.matmul(&x).unwrap();
    let step = best_rank1_exact(&y, &x).unwrap();
    let t = svd(&w).unwrap().triple(0);
    let got = DenseMatrix::outer(&step.b, &step.a).unwrap();
    let want = DenseMatrix::outer(&t.u, &t.v).unwrap().scaled(t.sigma).unwrap();
    assert!(rel_diff(&got, &want) < 1e-10);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn exact_deflation_tracks_spectrum(seed in 0u64..10_000) {
        let (_, x, y) = instance(8, 10, 25, 4, Profile::PowerLaw, seed);
        let s = y.singular_values().unwrap();
        let design = Design::new(&x).unwrap();
        let (trace, hist) = design.solve_exact_recorded(&y, 4).unwrap();
        for k in 0..3 {
            let top = hist[k + 1].spectral_norm().unwrap();
            prop_assert!((top - s[k + 1]).abs() <= 1e-8 * s[k + 1]);
        }
        for (c, sk) in trace.components.iter().zip(&s) {
            prop_assert!((c.target_sigma - sk).abs() <= 1e-8 * sk);
        }
    }

    #[test]
    fn gd_is_deterministic_per_seed(seed in 0u64..10_000, iters in 0usize..200) {
        let (_, x, y) = instance(5, 6, 15, 2, Profile::PowerLaw, 3);
        let design = Design::new(&x).unwrap();
        let a = design.rank1_gd(&y, &gd(iters), seed).unwrap();
        let b = design.rank1_gd(&y, &gd(iters), seed).unwrap();
        prop_assert_eq!(a, b);
    }
}
