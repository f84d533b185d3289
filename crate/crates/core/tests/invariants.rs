use ecodyn::analysis::{amplification, baseline_trajectory, BASELINE_FLOOR};
use ecodyn::estimation::{fit_discrete, project_metzler, recover_generator, simulate_discrete};
use ecodyn::matfun::{expm, expm_integral, logm, spectral_radius};
use ecodyn::model::{DecayVector, Generator, InputSignal, InteractionMatrix, Schedule};
use ecodyn::solvers::{sample_grid, solve_schedule_at};
use ecodyn::{Matrix, Vector};
use ecodyn_testkit as tk;
use proptest::prelude::*;

fn assembled(rng: &mut tk::Rng8, n: usize) -> (DecayVector, Generator) {
    let lambda = InteractionMatrix::new(tk::random_interactions(rng, n, 1.5, 0.6)).unwrap();
    let delta = DecayVector::from_rates(tk::random_nonneg_vector(rng, n, 2.0).add_scalar(0.05)).unwrap();
    let g = Generator::assemble(&lambda, &delta).unwrap();
    (delta, g)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn trajectories_stay_nonnegative(seed in any::<u64>(), n in 1usize..7) {
        let mut rng = tk::rng(seed);
        let (_, g) = assembled(&mut rng, n);
        let u = tk::random_nonneg_vector(&mut rng, n, 1.0);
        let a0 = tk::random_nonneg_vector(&mut rng, n, 1.0);
        let grid = sample_grid(0.0, 5.0, 0.25).unwrap();
        let t = solve_schedule_at(&Schedule::constant(g, u, 0.0, 5.0).unwrap(), &a0, &grid).unwrap();
        prop_assert!(t.min_entry() >= -1e-12);
    }

    #[test]
    fn exponential_is_a_semigroup(seed in any::<u64>(), n in 1usize..7, s in 0.01f64..2.0, r in 0.01f64..2.0) {
        let mut rng = tk::rng(seed);
        let m = tk::random_metzler(&mut rng, n, 1.0, 0.0, 2.0);
        let whole = expm(&(&m * (s + r))).unwrap().value;
        let split = expm(&(&m * s)).unwrap().value * expm(&(&m * r)).unwrap().value;
        prop_assert!(tk::rel_err_mat(&split, &whole, 1e-12) < 1e-11);
    }

    #[test]
    fn exponential_of_metzler_is_nonnegative(seed in any::<u64>(), n in 1usize..7, dt in 0.01f64..5.0) {
        let mut rng = tk::rng(seed);
        let m = tk::random_metzler(&mut rng, n, 2.0, 0.0, 3.0);
        let (a, b) = expm_integral(&m, dt).unwrap();
        prop_assert!(a.min() >= -1e-14 * a.amax());
        prop_assert!(b.min() >= -1e-14 * b.amax().max(1.0));
    }

    #[test]
    fn log_inverts_exponential(seed in any::<u64>(), n in 1usize..7) {
        let mut rng = tk::rng(seed);
        let mut m = tk::random_metzler(&mut rng, n, 1.0, 0.0, 1.0);
        m *= 0.5 / m.abs().row_sum().max().max(1e-12);
        let back = logm(&expm(&m).unwrap().value).unwrap();
        prop_assert!((back - &m).amax() < 1e-11);
    }

    #[test]
    fn noiseless_fit_recovers_generator(seed in any::<u64>(), n in 1usize..7, scale in 0.02f64..0.2) {
        let mut rng = tk::rng(seed);
        let dt = 0.1;
        let mut m = tk::random_stable_metzler(&mut rng, n, 1.0, 0.3);
        m *= scale / (dt * m.abs().row_sum().max());
        let u: Vec<Vector> = (0..150).map(|_| tk::random_nonneg_vector(&mut rng, n, 1.0)).collect();
        let a0 = tk::random_nonneg_vector(&mut rng, n, 1.0);
        let data = simulate_discrete(&Generator::new(m.clone()).unwrap(), &u, &a0, dt, 150).unwrap();
        let fit = fit_discrete(&data).unwrap();
        prop_assert!(fit.residual_rms < 1e-12);
        let m_hat = recover_generator(&fit.a_hat, dt).unwrap();
        prop_assert!(tk::rel_err_mat(&m_hat, &m, 1e-12) < 1e-6);
    }

    #[test]
    fn metzler_projection_is_idempotent(seed in any::<u64>(), n in 1usize..7) {
        let mut rng = tk::rng(seed);
        let x = Matrix::from_fn(n, n, |_, _| tk::uniform(&mut rng, -1.0, 1.0));
        let (p, _) = project_metzler(&x);
        prop_assert_eq!(project_metzler(&p), (p.clone(), 0.0));
        for i in 0..n {
            prop_assert_eq!(p[(i, i)], x[(i, i)]);
        }
    }

    #[test]
    fn coupling_never_reduces_adoption(seed in any::<u64>(), n in 1usize..6) {
        let mut rng = tk::rng(seed);
        let (delta, g) = assembled(&mut rng, n);
        let u = InputSignal::constant(0.0, tk::random_nonneg_vector(&mut rng, n, 1.0).add_scalar(0.01)).unwrap();
        let a0 = tk::random_nonneg_vector(&mut rng, n, 1.0);
        let grid = sample_grid(0.0, 4.0, 0.2).unwrap();
        let coupled = solve_schedule_at(&Schedule::with_input(&g, &u, 0.0, 4.0).unwrap(), &a0, &grid).unwrap();
        let baseline = baseline_trajectory(&delta, &u, &a0, &grid).unwrap();
        let report = amplification(&coupled, &baseline, BASELINE_FLOOR).unwrap();
        prop_assert!(report.min_ratio().unwrap() >= 1.0 - 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn perron_pair_of_reducible_matrices(seed in any::<u64>(), k in 1usize..4, coupled in any::<bool>()) {
        // Two copies of the same block: the Perron root is repeated, and
        // defective when the off-diagonal block is nonzero.
        let mut rng = tk::rng(seed);
        let b = tk::random_interactions(&mut rng, k, 1.0, 0.8).add_scalar(0.05);
        let c = if coupled { tk::random_interactions(&mut rng, k, 1.0, 1.0) } else { Matrix::zeros(k, k) };
        let mut a = Matrix::zeros(2 * k, 2 * k);
        a.view_mut((0, 0), (k, k)).copy_from(&b);
        a.view_mut((k, k), (k, k)).copy_from(&b);
        a.view_mut((0, k), (k, k)).copy_from(&c);
        let p = spectral_radius(&a).unwrap();
        let rho = spectral_radius(&b).unwrap().value;
        prop_assert!((p.value - rho).abs() <= 1e-6 * rho);
        prop_assert!(p.vector.min() >= 0.0);
        prop_assert!((&a * &p.vector - &p.vector * p.value).amax() <= 1e-9 * a.abs().row_sum().max());
    }
}
