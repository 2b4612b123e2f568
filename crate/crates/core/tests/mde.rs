mod common;

use common::*;
use kronmde::linalg::{c, identity, spectral_norm, CMat, C64};
use kronmde::mde::*;
use kronmde::model::{direct_hermitian, hermitize, HermitianDysonData};
use kronmde::presets::{self, Preset};
use kronmde::BlockVector;
use rand::RngExt;

fn wigner(n: usize) -> HermitianDysonData {
    direct_hermitian(&presets::build(Preset::Wigner, n)).unwrap()
}

fn solve(data: &HermitianDysonData, z: C64) -> MdeSolution {
    let s = solve_at(data, z, &SolverOptions::default()).unwrap();
    assert!(s.converged, "no convergence at {z}");
    s
}

/// Data sets for the property checks: presets plus random explicit-profile models.
fn property_cases() -> Vec<(HermitianDysonData, String)> {
    let mut cases: Vec<_> = preset_data(12, c(0.4, 0.3))
        .into_iter()
        .map(|(p, d)| (d, format!("{p:?}")))
        .collect();
    cases.extend((0..20).map(random_data));
    cases
}

#[test]
fn fixed_point_step_examples() {
    let zero = decoupled(vec![CMat::zeros(2, 2); 3]);
    let m = BlockVector::zeros(2, 3);
    let out = fixed_point_step(&zero, &m, c(0.0, 1.0), 1.0).unwrap();
    assert_eq!(out, BlockVector::constant(2, 3, c(0.0, 1.0)));

    let w = wigner(1);
    let mi = BlockVector::constant(1, 1, c(0.0, 1.0));
    let step = fixed_point_step(&w, &mi, c(0.0, 1.0), 1.0).unwrap();
    assert!((step.block(0)[(0, 0)] - c(0.0, 0.5)).norm() < 1e-15);

    let mut m = mi;
    for _ in 0..200 {
        m = fixed_point_step(&w, &m, c(0.0, 1.0), 1.0).unwrap();
    }
    let golden = (5f64.sqrt() - 1.0) / 2.0;
    assert!((m.block(0)[(0, 0)] - c(0.0, golden)).norm() < 1e-12);
}

#[test]
fn fixed_point_step_half_damping_averages() {
    let w = wigner(1);
    let mi = BlockVector::constant(1, 1, c(0.0, 1.0));
    let step = fixed_point_step(&w, &mi, c(0.0, 1.0), 0.5).unwrap();
    assert!((step.block(0)[(0, 0)] - c(0.0, 0.75)).norm() < 1e-15);
}

#[test]
fn fixed_point_step_reports_singular_blocks() {
    let zero = decoupled(vec![CMat::zeros(1, 1)]);
    let m = BlockVector::zeros(1, 1);
    assert!(matches!(
        fixed_point_step(&zero, &m, c(0.0, 0.0), 1.0),
        Err(kronmde::Error::Singular(_))
    ));
}

#[test]
fn solve_at_examples() {
    let a = CMat::from_fn(2, 2, |i, j| match (i, j) {
        (0, 0) => c(1.0, 0.0),
        (1, 1) => c(-1.0, 0.0),
        _ => c(0.0, 0.0),
    });
    let data = decoupled(vec![a; 2]);
    let s = solve(&data, c(0.0, 1.0));
    let want0 = c(1.0, 0.0) / c(1.0, -1.0);
    let want1 = -c(1.0, 0.0) / c(1.0, 1.0);
    for b in s.m.blocks() {
        assert!((b[(0, 0)] - want0).norm() < 1e-12);
        assert!((b[(1, 1)] - want1).norm() < 1e-12);
        assert!(b[(0, 1)].norm() < 1e-14 && b[(1, 0)].norm() < 1e-14);
    }

    let w = wigner(10);
    let inside = solve(&w, c(0.5, 1e-3));
    let im = inside.m.block(0)[(0, 0)].im;
    assert!((im - 0.9682).abs() < 5e-3, "{im}");
    let outside = solve(&w, c(3.0, 1e-3));
    assert!(outside.m.block(0)[(0, 0)].im.abs() <= 2e-3);
}

#[test]
fn wigner_solution_matches_the_semicircle_transform() {
    let w = wigner(4);
    for z in [c(0.0, 1.0), c(1.5, 0.1), c(-2.5, 0.01), c(1.9, 1e-4)] {
        let s = solve(&w, z);
        assert!((s.m.block(0)[(0, 0)] - semicircle_m(z)).norm() < 1e-8, "{z}");
    }
}

#[test]
fn solve_at_rejects_real_spectral_parameters() {
    let w = wigner(2);
    assert!(matches!(
        solve_at(&w, c(0.5, 0.0), &SolverOptions::default()),
        Err(kronmde::Error::Contract(_))
    ));
}

#[test]
fn invalid_options_are_rejected() {
    let w = wigner(2);
    let bad = [
        SolverOptions {
            tol: 0.0,
            ..Default::default()
        },
        SolverOptions {
            damping_init: 1.5,
            ..Default::default()
        },
        SolverOptions {
            eta_schedule: EtaSchedule {
                ratio: 1.0,
                ..Default::default()
            },
            ..Default::default()
        },
    ];
    for opts in bad {
        assert!(matches!(solve_at(&w, c(0.0, 1.0), &opts), Err(kronmde::Error::Contract(_))));
    }
}

#[test]
fn exhausted_iterations_are_flagged() {
    let w = wigner(3);
    let opts = SolverOptions {
        max_iter: 1,
        method: Method::FixedPoint,
        ..Default::default()
    };
    let s = solve_at(&w, c(0.1, 0.01), &opts).unwrap();
    assert!(!s.converged);
    assert!(s.residual > opts.tol);
}

#[test]
fn large_eta_converges_from_auto_init() {
    for (data, label) in property_cases() {
        for z in [c(0.0, 8.0), c(5.0, 20.0), c(-30.0, 8.0)] {
            let opts = SolverOptions {
                method: Method::FixedPoint,
                ..Default::default()
            };
            let s = solve_at(&data, z, &opts).unwrap();
            assert!(s.converged, "{label} at {z}");
        }
    }
}

#[test]
fn fixed_point_and_hybrid_agree() {
    for seed in 0..8 {
        let (data, label) = random_data(seed);
        let z = c(0.3, 0.2);
        let hybrid = solve(&data, z);
        let fp = solve_at(
            &data,
            z,
            &SolverOptions {
                method: Method::FixedPoint,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(fp.converged, "{label}");
        assert!(hybrid.m.sub(&fp.m).max_norm() < 1e-8, "{label}");
    }
}

#[test]
fn continuation_examples() {
    let w = wigner(6);
    let sols = solve_continuation(&w, 0.0, &[1.0, 0.1, 0.01], &SolverOptions::default()).unwrap();
    assert_eq!(sols.len(), 3);
    let ims: Vec<f64> = sols.iter().map(|s| s.m.block(0)[(0, 0)].im).collect();
    assert!(sols.iter().all(|s| s.converged));
    assert!(ims.windows(2).all(|p| p[1] > p[0]), "{ims:?}");
    assert!((ims[2] - 1.0).abs() < 0.01, "{ims:?}");
    for (s, eta) in sols.iter().zip([1.0, 0.1, 0.01]) {
        assert_eq!(s.z, c(0.0, eta));
    }

    let zero = decoupled(vec![CMat::zeros(1, 1); 2]);
    let sols = solve_continuation(&zero, 0.0, &[1.0], &SolverOptions::default()).unwrap();
    assert!((sols[0].m.block(0)[(0, 0)] - c(0.0, 1.0)).norm() < 1e-12);

    let iid = hermitize(&presets::build(Preset::Ginibre, 8), c(2.0, 0.0)).unwrap();
    let targets = [1.0, 1e-1, 1e-2, 1e-3, 1e-4];
    let sols = solve_continuation(&iid, 0.0, &targets, &SolverOptions::default()).unwrap();
    for s in &sols {
        assert!(s.converged);
        assert!(s.max_im_over_eta() < 0.74, "{} at {}", s.max_im_over_eta(), s.z);
    }
}

#[test]
fn continuation_rejects_bad_targets() {
    let w = wigner(2);
    for targets in [vec![0.1, 1.0], vec![1.0, 1.0], vec![1.0, -0.5]] {
        assert!(matches!(
            solve_continuation(&w, 0.0, &targets, &SolverOptions::default()),
            Err(kronmde::Error::Contract(_))
        ));
    }
    assert!(solve_continuation(&w, 0.0, &[], &SolverOptions::default()).unwrap().is_empty());
}

#[test]
fn continuation_failure_names_the_last_converged_level() {
    let w = wigner(3);
    let opts = SolverOptions {
        max_iter: 100,
        damping_init: 1.0,
        method: Method::FixedPoint,
        ..Default::default()
    };
    match solve_continuation(&w, 2.0, &[1.0, 1e-6], &opts) {
        Err(kronmde::Error::Continuation { eta, last_converged, .. }) => {
            let last = last_converged.expect("the first levels converge");
            assert!(last > eta && eta < 1.0, "{eta} {last}");
        }
        other => panic!("expected a continuation error, got {other:?}"),
    }
}

#[test]
fn continuation_levels_hit_every_target() {
    let sched = EtaSchedule::default();
    let levels = MdeSolver::continuation_levels(&[1.0, 0.05], &sched);
    assert_eq!(levels[0].0, 8.0);
    let hits: Vec<f64> = levels.iter().filter(|(_, h)| h.is_some()).map(|(e, _)| *e).collect();
    assert_eq!(hits, vec![1.0, 0.05]);
    assert!(levels.windows(2).all(|w| w[1].0 < w[0].0));
    assert_eq!(MdeSolver::continuation_levels(&[20.0], &sched), vec![(20.0, Some(0))]);
}

#[test]
fn residual_examples() {
    let a = CMat::from_fn(2, 2, |i, j| if i == j { c(0.5 - i as f64, 0.0) } else { c(0.0, 0.0) });
    let zero = decoupled(vec![a.clone()]);
    let z = c(0.2, 0.7);
    let exact = BlockVector::new(vec![-(identity(2) * z - &a).try_inverse().unwrap()]).unwrap();
    assert!(residual(&zero, &exact, z).unwrap() < 1e-15);

    let w = wigner(5);
    let s = solve(&w, c(0.3, 0.5));
    assert!(s.residual <= 1e-10);
    assert!(residual(&w, &s.m, s.z).unwrap() <= 1e-10);
    let perturbed = s.m.add(&BlockVector::constant(1, 5, c(0.0, 0.1)));
    assert!(residual(&w, &perturbed, s.z).unwrap() > 0.05);
    assert!(residual(&w, &BlockVector::zeros(2, 5), s.z).is_err());
}

#[test]
fn converged_solutions_are_herglotz_and_bounded() {
    for (data, label) in property_cases() {
        for z in [c(0.0, 1.0), c(0.7, 0.05), c(-1.3, 0.2)] {
            let s = solve(&data, z);
            assert!(s.min_im_eig > 0.0, "{label} at {z}");
            assert!(s.residual <= 1e-10, "{label} at {z}");
            let top = s.m.blocks().iter().map(spectral_norm).fold(0.0, f64::max);
            assert!(top <= (1.0 + 1e-9) / z.im, "{label} at {z}: {top}");
        }
    }
}

#[test]
fn large_eta_asymptotics_are_stable() {
    for (data, label) in property_cases() {
        let fitted: Vec<f64> = [10.0, 100.0]
            .iter()
            .map(|&eta| {
                let z = c(0.0, eta);
                let s = solve(&data, z);
                let err = s
                    .m
                    .blocks()
                    .iter()
                    .map(|b| spectral_norm(&(b * z + identity(data.k))))
                    .fold(0.0, f64::max);
                eta * err
            })
            .collect();
        assert!(fitted[1] <= 1.1 * fitted[0] + 1e-12, "{label}: {fitted:?}");
    }
}

fn random_herglotz(k: usize, n: usize, r: &mut rand_chacha::ChaCha8Rng) -> BlockVector {
    let scale = r.random::<f64>() * 2.0;
    let re = BlockVector::random(k, n, r).map(|b| (b + b.adjoint()) * c(scale, 0.0));
    let im = BlockVector::random_psd(k, n, r).map(|p| p + identity(k) * c(0.05, 0.0));
    re.add(&im.scale(c(0.0, 1.0)))
}

#[test]
fn random_initializations_reach_the_same_solution() {
    let mut r = rng(11);
    for (data, label) in property_cases() {
        let z = c(0.0, 1.0);
        let tol = 1e-10;
        let reference = solve(&data, z);
        for _ in 0..20 {
            let init = random_herglotz(data.k, data.n, &mut r);
            let opts = SolverOptions {
                init: Init::Given(init),
                tol,
                ..Default::default()
            };
            let s = solve_at(&data, z, &opts).unwrap();
            assert!(s.converged, "{label}");
            let d = s.m.sub(&reference.m).max_norm();
            assert!(d <= 10.0 * tol, "{label}: {d}");
        }
    }
}

#[test]
fn hermitized_densities_are_even_in_energy() {
    for seed in [1u64, 3, 5, 7, 9] {
        let (data, label) = random_data(seed);
        for e in [0.3, 1.1, 2.4] {
            let plus = solve(&data, c(e, 0.05)).rho();
            let minus = solve(&data, c(-e, 0.05)).rho();
            assert!((plus - minus).abs() <= 1e-8, "{label} at {e}: {plus} vs {minus}");
        }
    }
    for (p, data) in preset_data(10, c(0.6, -0.2)) {
        if presets::build(p, 10).is_hermitian() {
            continue;
        }
        let plus = solve(&data, c(0.8, 0.02)).rho();
        let minus = solve(&data, c(-0.8, 0.02)).rho();
        assert!((plus - minus).abs() <= 1e-8, "{p:?}");
    }
}

#[test]
fn certificate_converges_outside_the_support() {
    // For the semicircle at E = 3 the limit is m'(3) = (3/√5 − 1)/2.
    let w = wigner(4);
    let targets: Vec<f64> = (1..=6).map(|k| 10f64.powi(-k)).collect();
    let sols = solve_continuation(&w, 3.0, &targets, &SolverOptions::default()).unwrap();
    let cert: Vec<f64> = sols.iter().map(|s| s.max_im_over_eta()).collect();
    let steps: Vec<f64> = cert.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    assert!(steps.windows(2).all(|s| s[1] <= s[0] + 1e-12), "{cert:?}");
    let limit = (3.0 / 5f64.sqrt() - 1.0) / 2.0;
    assert!((cert.last().unwrap() - limit).abs() < 1e-4, "{cert:?}");

    let iid = hermitize(&presets::build(Preset::Ginibre, 6), c(1.5, 0.5)).unwrap();
    let sols = solve_continuation(&iid, 0.0, &targets, &SolverOptions::default()).unwrap();
    let cert: Vec<f64> = sols.iter().map(|s| s.max_im_over_eta()).collect();
    let steps: Vec<f64> = cert.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    assert!(steps.windows(2).all(|s| s[1] <= s[0] + 1e-12), "{cert:?}");
}

#[test]
fn solver_groups_flat_profiles_into_nodes() {
    let data = hermitize(&presets::build(Preset::Fig1b, 40), c(0.1, 0.1)).unwrap();
    let solver = MdeSolver::new(&data).unwrap();
    assert!(solver.node_count() < 40);
    assert!((solver.weights().iter().sum::<f64>() - 1.0).abs() < 1e-14);
    let z = c(0.2, 0.1);
    let grouped = solver.solve_at(z, &SolverOptions::default()).unwrap();
    assert_eq!(grouped.m.n(), 40);
    assert!(residual(&data, &grouped.m, z).unwrap() <= 1e-10);
}
