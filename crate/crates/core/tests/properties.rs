use msfde_core::kernels::{critical_rate, diffusion_kernel, gamma_transform, renewal_rho};
use msfde_core::montecarlo::{simulate_with, McConfig, PsiMode};
use msfde_core::par::Execution;
use msfde_core::perturb::{exp_filter, sectional_average, ForcingKind, ForcingSpec, Verdict};
use msfde_core::quadrature::{convolve, KernelView};
use msfde_core::resolvent::solve_resolvent;
use msfde_core::volterra_ms::{consistency_check, mean_square_with, ProblemInstance};
use msfde_core::{FiniteSignedMeasure, FunctionTable, Grid};
use proptest::prelude::*;

fn verdict() -> impl Strategy<Value = Verdict> {
    prop_oneof![Just(Verdict::Pass), Just(Verdict::Fail), Just(Verdict::Inconclusive)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn verdict_and_is_commutative_and_associative(a in verdict(), b in verdict(), c in verdict()) {
        prop_assert_eq!(a.and(b), b.and(a));
        prop_assert_eq!(a.and(b).and(c), a.and(b.and(c)));
        prop_assert_eq!(a.and(Verdict::Pass), a);
        prop_assert_eq!(a.and(Verdict::Fail), Verdict::Fail);
    }

    #[test]
    fn convolution_is_linear(
        k in prop::collection::vec(-2.0..2.0f64, 40),
        y in prop::collection::vec(-2.0..2.0f64, 40),
        z in prop::collection::vec(-2.0..2.0f64, 40),
        a in -3.0..3.0f64,
    ) {
        let h = 0.05;
        let comb: Vec<f64> = y.iter().zip(&z).map(|(p, q)| a * p + q).collect();
        let lhs = convolve(KernelView::continuous(&k), &comb, h, Execution::Sequential);
        let ky = convolve(KernelView::continuous(&k), &y, h, Execution::Sequential);
        let kz = convolve(KernelView::continuous(&k), &z, h, Execution::Parallel);
        for i in 0..40 {
            prop_assert!((lhs[i] - (a * ky[i] + kz[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn ode_resolvent_is_exponential(a in -1.5..1.5f64) {
        let grid = Grid::new(1e-3, 2.0, 1e-3).unwrap();
        let nu = FiniteSignedMeasure::dirac(1e-3, 0.0, a).unwrap();
        let r = solve_resolvent(&nu, &grid).unwrap();
        for (t, v) in r.r.times().zip(r.values()) {
            let exact = (a * t).exp();
            prop_assert!((v - exact).abs() <= 1e-6 * exact.max(1.0));
        }
    }

    #[test]
    fn exp_filter_is_linear(c1 in -2.0..2.0f64, c2 in -2.0..2.0f64, beta in 0.2..3.0f64) {
        let grid = Grid::new(0.01, 4.0, 1.0).unwrap();
        let f1 = FunctionTable::horizon_fn(grid, |t| (3.0 * t).sin());
        let f2 = FunctionTable::horizon_fn(grid, |t| (-t).exp());
        let sum = FunctionTable::horizon_fn(grid, |t| c1 * (3.0 * t).sin() + c2 * (-t).exp());
        let u = exp_filter(&sum, beta, &grid).unwrap();
        let u1 = exp_filter(&f1, beta, &grid).unwrap();
        let u2 = exp_filter(&f2, beta, &grid).unwrap();
        for i in 0..u.len() {
            prop_assert!((u.values()[i] - c1 * u1.values()[i] - c2 * u2.values()[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn sectional_average_of_constant(c in -5.0..5.0f64, m in 1usize..=16) {
        let grid = Grid::new(1.0 / 16.0, 3.0, 1.0).unwrap();
        let delta = m as f64 / 16.0;
        let avg = sectional_average(&FunctionTable::horizon_fn(grid, |_| c), delta, &grid).unwrap();
        prop_assert_eq!(avg.len(), grid.len() - m);
        for v in avg.values() {
            prop_assert!((v - c * delta).abs() < 1e-12);
        }
    }

    #[test]
    fn spike_mass_is_width_times_height(a in 0.0..0.45f64, height in 0.1..50.0f64) {
        let grid = Grid::new(1.0 / 1024.0, 3.0, 1.0).unwrap();
        let spec = ForcingSpec::realize(ForcingKind::Spikes(vec![(0.0, 0.0), (a, height)]), &grid).unwrap();
        let mass = sectional_average(&spec.sampled, 1.0, &grid).unwrap().at_time(1.0).unwrap();
        let exact = (0.5 - a) * height;
        // Trapezoid error comes from the two kinks and the peak, each O(h^2 height / w).
        prop_assert!((mass - exact).abs() <= 3.0 * height / (0.5 - a) / (1024.0 * 1024.0) + 1e-12);
    }

    #[test]
    fn gamma_is_increasing(c in 0.2..1.3f64, l1 in -0.5..0.4f64, dl in 0.01..0.3f64) {
        let grid = Grid::new(0.01, 20.0, 0.01).unwrap();
        let nu = FiniteSignedMeasure::dirac(0.01, 0.0, -1.0).unwrap();
        let mu = FiniteSignedMeasure::dirac(0.01, 0.0, c).unwrap();
        let r = solve_resolvent(&nu, &grid).unwrap();
        let k = diffusion_kernel(&mu, &r).unwrap();
        let g1 = gamma_transform(&k, l1).value;
        let g2 = gamma_transform(&k, l1 + dl).value;
        prop_assert!(g2 > g1);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn monte_carlo_is_execution_invariant(seed in any::<u64>(), paths in 2usize..150) {
        let grid = Grid::new(0.05, 2.0, 0.5).unwrap();
        let inst = ProblemInstance::new(
            FiniteSignedMeasure::from_atoms(0.5, &[(0.0, -1.0), (-0.5, 0.3)]).unwrap(),
            FiniteSignedMeasure::from_atoms(0.5, &[(-0.5, 0.5)]).unwrap(),
            FunctionTable::horizon_fn(grid, |t| (-t).exp()),
            FunctionTable::horizon_fn(grid, |_| 0.2),
            FunctionTable::history_fn(grid, |t| 1.0 + t),
            grid,
        ).unwrap();
        let cfg = McConfig { paths, seed, psi_mode: PsiMode::Random };
        let a = simulate_with(&inst, &cfg, Execution::Sequential).unwrap();
        let b = simulate_with(&inst, &cfg, Execution::Parallel).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert!(a.mean_sq.values().iter().all(|&v| v >= 0.0));
        prop_assert!(a.std_err.values().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn three_representations_of_z_agree(w0 in -2.0..-1.2f64, w1 in -0.8..0.0f64, frac in 0.2..0.9f64) {
        let h = 0.02;
        let grid = Grid::new(h, 10.0, 1.0).unwrap();
        let nu = FiniteSignedMeasure::from_atoms(1.0, &[(0.0, w0), (-1.0, w1)]).unwrap();
        let shape = FiniteSignedMeasure::from_atoms(1.0, &[(0.0, 1.0), (-0.5, 0.5)]).unwrap();
        let r = solve_resolvent(&nu, &grid).unwrap();
        let c_crit = 1.0 / diffusion_kernel(&shape, &r).unwrap().l2_norm_sq.sqrt();
        let mu = shape.scaled(frac * c_crit);
        let inst = ProblemInstance::new(
            nu,
            mu.clone(),
            FunctionTable::horizon_fn(grid, |t| 0.3 * (-t).exp()),
            FunctionTable::horizon_fn(grid, |t| 0.5 * (-0.5 * t).exp()),
            FunctionTable::history_fn(grid, |_| 1.0),
            grid,
        ).unwrap();
        let k = diffusion_kernel(&mu, &r).unwrap();
        prop_assert!(k.l2_norm_sq < 1.0);
        prop_assert!(critical_rate(&k).is_ok());
        let sol = mean_square_with(&inst, &r, &k).unwrap();
        let rho = renewal_rho(&k, &grid).unwrap();
        let rep = consistency_check(&sol, &r, &rho);
        prop_assert!(rep.pass, "{:?}", rep);
    }
}
