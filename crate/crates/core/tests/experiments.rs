use nalgebra::DVector;

use rough_symplectic::experiments::{convergence_experiment, invariant_drift, ConvergenceConfig, Reference};
use rough_symplectic::integrators::{integrate, EulerOrder, Scheme, SolverConfig};
use rough_symplectic::paths::{sample_fbm, FbmConfig, FbmMethod, FgnSampler, SamplePath};
use rough_symplectic::systems::{kubo_exact, kubo_system, trig_system, KuboParams};

fn kubo_config(schemes: Vec<Scheme>) -> ConvergenceConfig {
    ConvergenceConfig {
        system: "kubo".into(),
        kubo: KuboParams::default(),
        schemes,
        hurst: 0.4,
        horizon: 1.0,
        initial: vec![1.0, 1.0],
        coarsest_level: 4,
        finest_level: 9,
        paths: 6,
        seed_base: 11,
        reference: Reference::Exact,
        zero_noise: false,
        workers: 1,
    }
}

#[test]
fn midpoint_conserves_norm_over_long_horizon() {
    let sys = kubo_system(KuboParams {
        epsilon: 2.0,
        ..Default::default()
    })
    .unwrap();
    let path = sample_fbm(&FbmConfig::new(0.4, 3, 10.0, 5000, 3).unwrap()).unwrap();
    let z = DVector::from_vec(vec![1.0, 1.0]);
    for scheme in [
        Scheme::from_name("midpoint", SolverConfig::default()).unwrap(),
        Scheme::LinearMidpoint,
    ] {
        let tr = integrate(&sys, &scheme, &path, &z, false).unwrap();
        let worst = invariant_drift(&tr, &z)
            .into_iter()
            .fold(0.0_f64, |m, d| m.max(d.abs()));
        assert!(worst < 1e-9, "{}: {worst}", scheme.name());
    }
}

#[test]
fn trig_tableaus_keep_unit_determinant() {
    let path = sample_fbm(&FbmConfig::new(0.4, 2, 0.1, 256, 8).unwrap()).unwrap();
    let z = DVector::from_vec(vec![1.0, 2.0]);
    for name in ["midpoint", "method-1", "method-2"] {
        let scheme = Scheme::from_name(name, SolverConfig::default()).unwrap();
        let tr = integrate(&trig_system(), &scheme, &path, &z, true).unwrap();
        let det = tr.jacobians.unwrap().last().unwrap().determinant();
        assert!((det - 1.0).abs() < 1e-6, "{name}: {det}");
    }
}

#[test]
fn euler2_expands_area_on_kubo() {
    let sys = kubo_system(KuboParams::default()).unwrap();
    let path = sample_fbm(&FbmConfig::new(0.4, 3, 1.0, 100, 21).unwrap()).unwrap();
    let z = DVector::from_vec(vec![1.0, 1.0]);
    let tr = integrate(&sys, &Scheme::SimplifiedEuler(EulerOrder::Two), &path, &z, true).unwrap();
    let det = tr.jacobians.unwrap().last().unwrap().determinant();
    assert!(det > 1.0 + 1e-10, "{det}");
}

#[test]
fn zero_noise_midpoint_is_second_order() {
    let mut cfg = kubo_config(vec![Scheme::LinearMidpoint]);
    cfg.zero_noise = true;
    let report = convergence_experiment(&cfg).unwrap();
    let slope = report.schemes[0].median_slope.unwrap();
    assert!((1.9..=2.1).contains(&slope), "{slope}");
}

#[test]
fn errors_shrink_with_step_size() {
    let report = convergence_experiment(&kubo_config(vec![Scheme::LinearMidpoint])).unwrap();
    let paths = &report.schemes[0].paths;
    let decreasing = paths
        .iter()
        .filter(|p| p.points.first().unwrap().max_error > p.points.last().unwrap().max_error)
        .count();
    assert_eq!(decreasing, paths.len());
}

#[test]
fn coarse_grids_reuse_the_fine_path() {
    // Error at each level equals a direct integration on the coarsened path.
    let cfg = kubo_config(vec![Scheme::LinearMidpoint]);
    let report = convergence_experiment(&cfg).unwrap();
    let sys = kubo_system(cfg.kubo).unwrap();
    let sampler = FgnSampler::new(0.4, 1 << 9, 1.0 / 512.0, FbmMethod::Auto).unwrap();
    let z = DVector::from_vec(cfg.initial.clone());
    for p in &report.schemes[0].paths {
        let fine: SamplePath = sampler.sample_path(3, 1.0, p.seed).unwrap();
        for (i, point) in p.points.iter().enumerate() {
            let grid = fine.coarsen(1 << (5 - i)).unwrap();
            let tr = integrate(&sys, &Scheme::LinearMidpoint, &grid, &z, false).unwrap();
            let err = tr
                .states
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, y)| {
                    let exact = kubo_exact(&cfg.kubo, [1.0, 1.0], grid.times()[k], grid.noise_values(k));
                    (y - DVector::from_vec(exact.to_vec())).norm()
                })
                .fold(0.0_f64, f64::max);
            assert_eq!(err.to_bits(), point.max_error.to_bits());
        }
    }
}

#[test]
fn results_do_not_depend_on_worker_count() {
    let schemes = vec![Scheme::LinearMidpoint, Scheme::SimplifiedEuler(EulerOrder::Three)];
    let mut cfg = kubo_config(schemes);
    cfg.workers = 1;
    let serial = convergence_experiment(&cfg).unwrap();
    cfg.workers = 4;
    let parallel = convergence_experiment(&cfg).unwrap();
    assert_eq!(serial, parallel);
}

#[test]
fn trig_fine_grid_reference() {
    let mut cfg = kubo_config(vec![Scheme::from_name("method-1", SolverConfig::default()).unwrap()]);
    cfg.system = "trig".into();
    cfg.initial = vec![1.0, 2.0];
    cfg.horizon = 0.1;
    cfg.finest_level = 8;
    cfg.reference = Reference::FineGrid {
        scheme: Scheme::from_name("method-1", SolverConfig::default()).unwrap(),
        level: 11,
    };
    let report = convergence_experiment(&cfg).unwrap();
    let slope = report.schemes[0].median_slope.unwrap();
    assert!(slope > 0.1 && slope < 0.6, "{slope}");
}

#[test]
fn exact_reference_requires_exact_solution() {
    let mut cfg = kubo_config(vec![Scheme::LinearMidpoint]);
    cfg.system = "trig".into();
    cfg.initial = vec![1.0, 2.0];
    assert!(convergence_experiment(&cfg).is_err());
}
