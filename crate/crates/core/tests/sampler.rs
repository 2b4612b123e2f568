use faer::Mat;
use kronmde::linalg::{c, CMat, C64};
use kronmde::model::{
    direct_hermitian, hermitize, ExpectationDiagonal, Kappa, KroneckerModel, StructureSet, VarianceProfile,
};
use kronmde::presets::{self, Preset};
use kronmde::sampler::*;
use kronmde::spectrum::{
    bracket_grid, compute_dos, estimate_support, pseudospectrum, Dist0Options, ScanOptions, ZetaGrid,
};
use kronmde::mde::SolverOptions;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

fn cfg(seed: u64, trials: usize) -> SampleConfig {
    SampleConfig {
        seed,
        trials,
        ..Default::default()
    }
}

fn diag_points(points: &[C64], n: usize) -> KroneckerModel {
    let l = points.len();
    let d = CMat::from_fn(l, l, |i, j| if i == j { points[i] } else { c(0.0, 0.0) });
    presets::deterministic(vec![d; n])
}

fn spectral_radius(eigs: &[C64]) -> f64 {
    eigs.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn frob(x: &Mat<C64>) -> f64 {
    let mut s = 0.0;
    for j in 0..x.ncols() {
        for i in 0..x.nrows() {
            s += x[(i, j)].norm_sqr();
        }
    }
    s.sqrt()
}

#[test]
fn zero_variance_sample_is_the_expectation() {
    let points = [c(0.5, 1.0), c(-2.0, 0.0)];
    let n = 6;
    let m = diag_points(&points, n);
    let x = sample_model(&m, &cfg(3, 1), 0).unwrap();
    for r in 0..2 * n {
        for col in 0..2 * n {
            let want = if r == col { points[r / n] } else { c(0.0, 0.0) };
            assert_eq!(x[(r, col)], want);
        }
    }
}

#[test]
fn samples_are_reproducible_under_concurrency() {
    let m = presets::build(Preset::Fig1a, 60);
    let cf = cfg(11, 1);
    let serial: Vec<Mat<C64>> = (0..6).map(|t| sample_model(&m, &cf, t).unwrap()).collect();
    let parallel: Vec<Mat<C64>> = (0..6).into_par_iter().rev().map(|t| sample_model(&m, &cf, 5 - t).unwrap()).collect();
    assert!(serial == parallel);
    assert!(serial[0] != sample_model(&m, &cfg(12, 1), 0).unwrap());
}

#[test]
fn wigner_entries_have_variance_one_over_n() {
    let n = 500;
    let x = sample_model(&presets::build(Preset::Wigner, n), &cfg(5, 1), 0).unwrap();
    let mut vals = Vec::new();
    for j in 0..n {
        for i in 0..=j {
            assert_eq!(x[(i, j)], x[(j, i)].conj());
            vals.push(x[(i, j)].norm_sqr());
        }
    }
    let k = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / k;
    let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt();
    assert!((mean - 1.0 / n as f64).abs() <= 3.0 * sd / k.sqrt(), "mean |x|² = {mean}");
}

#[test]
fn hermitian_family_entries_are_centered() {
    let n = 1000;
    let x = sample_model(&presets::build(Preset::Wigner, n), &cfg(6, 1), 0).unwrap();
    let (mut re, mut im) = (Vec::new(), Vec::new());
    for j in 0..n {
        for i in 0..=j {
            re.push(x[(i, j)].re);
            if i != j {
                im.push(x[(i, j)].im);
            }
        }
    }
    for v in [re, im] {
        let k = v.len() as f64;
        let mean = v.iter().sum::<f64>() / k;
        let sd = (v.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt();
        assert!(mean.abs() <= 4.0 * sd / k.sqrt(), "sample mean {mean}");
    }
}

#[test]
fn rademacher_entries_have_fixed_modulus() {
    let n = 50;
    let m = presets::build(Preset::Wigner, n);
    let cf = SampleConfig {
        distribution: EntryDistribution::Rademacher,
        ..cfg(1, 1)
    };
    let x = sample_model(&m, &cf, 0).unwrap();
    for j in 0..n {
        for i in 0..n {
            assert!((x[(i, j)].norm_sqr() - 1.0 / n as f64).abs() < 1e-15);
        }
    }
    let real = SampleConfig {
        distribution: EntryDistribution::RealGaussian,
        ..cfg(1, 1)
    };
    let y = sample_model(&presets::build(Preset::Ginibre, n), &real, 0).unwrap();
    assert!((0..n).all(|j| (0..n).all(|i| y[(i, j)].im == 0.0)));
    assert_eq!("rademacher".parse::<EntryDistribution>().unwrap(), EntryDistribution::Rademacher);
}

fn random_hermitian(n: usize, seed: u64) -> Mat<C64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = |r: &mut ChaCha8Rng| -> f64 { StandardNormal.sample(r) };
    let mut h = Mat::<C64>::zeros(n, n);
    for j in 0..n {
        for i in 0..=j {
            let v = if i == j { c(g(&mut rng), 0.0) } else { c(g(&mut rng), g(&mut rng)) };
            h[(i, j)] = v;
            h[(j, i)] = v.conj();
        }
    }
    h
}

#[test]
fn hermitian_eigenvalues_sum_to_the_trace() {
    let h = random_hermitian(50, 9);
    let ev = eig_hermitian(&h).unwrap();
    assert!(ev.windows(2).all(|w| w[0] <= w[1]));
    let trace: f64 = (0..50).map(|i| h[(i, i)].re).sum();
    let sum: f64 = ev.iter().sum();
    let scale = ev.iter().map(|v| v.abs()).sum::<f64>();
    assert!((trace - sum).abs() <= 1e-10 * scale);
    let norm = frob(&h);
    for &lam in ev.iter().step_by(7) {
        let mut shifted = h.clone();
        for i in 0..50 {
            shifted[(i, i)] -= c(lam, 0.0);
        }
        assert!(smallest_singular_value(&shifted).unwrap() <= 1e-8 * norm);
    }
}

#[test]
fn general_eigenvalues_have_small_residuals() {
    let x = sample_model(&presets::build(Preset::Fig1b, 100), &cfg(2, 1), 0).unwrap();
    let ev = eig_general(&x).unwrap();
    assert_eq!(ev.len(), 200);
    let norm = frob(&x);
    for &lam in ev.iter().step_by(17) {
        let mut shifted = x.clone();
        for i in 0..200 {
            shifted[(i, i)] -= lam;
        }
        assert!(smallest_singular_value(&shifted).unwrap() <= 1e-6 * norm);
    }
}

#[test]
fn ginibre_spectral_radius_is_near_one() {
    let m = presets::build(Preset::Ginibre, 500);
    for seed in 0..5 {
        let r = spectral_radius(&sample_eigenvalues(&m, &cfg(seed, 1), 0, GENERAL_EIG_N_LIMIT).unwrap());
        assert!((0.95..=1.15).contains(&r), "seed {seed}: radius {r}");
    }
}

#[test]
fn oversized_general_solve_is_refused() {
    let m = presets::build(Preset::Ginibre, 30);
    assert!(matches!(
        sample_eigenvalues(&m, &cfg(0, 1), 0, 20),
        Err(kronmde::Error::TooLarge { size: 30, limit: 20 })
    ));
}

#[test]
fn deterministic_model_has_no_outsiders() {
    let points = vec![c(1.0, 0.0), c(-1.0, 0.5)];
    let m = diag_points(&points, 20);
    for eps in [1e-3, 0.1] {
        let rep = containment_report(&m, &cfg(0, 2), eps, &Membership::Example(points.clone()), GENERAL_EIG_N_LIMIT).unwrap();
        assert!(rep.passed());
        assert_eq!(rep.total_eigenvalues, 80);
    }
}

#[test]
fn circular_law_containment_and_shrunken_oracle() {
    let m = presets::build(Preset::Ginibre, 1000);
    let cf = cfg(21, 5);
    let rep = containment_report(&m, &cf, 0.1, &Membership::Disk(1.0), GENERAL_EIG_N_LIMIT).unwrap();
    assert!(rep.passed(), "{:?}", rep.trials.iter().map(|t| t.outside).collect::<Vec<_>>());
    assert_eq!(rep.trials.len(), 5);
    let bad = containment_report(&m, &cf, 0.1, &Membership::Disk(0.5), GENERAL_EIG_N_LIMIT).unwrap();
    assert!(!bad.passed());
    assert!(bad.outlier_rate > 0.1);
    let worst = bad.trials.iter().filter_map(|t| t.max_distance).fold(0.0, f64::max);
    assert!(worst > 0.4 && worst < 0.6, "max distance {worst}");
}

#[test]
fn containment_against_a_computed_grid() {
    let m = presets::build(Preset::Ginibre, 200);
    let grid: ZetaGrid = "-1.5:1.5:41,-1.5:1.5:41".parse().unwrap();
    let ps = pseudospectrum(&m, &grid, 0.1, &ScanOptions::default()).unwrap();
    let rep = containment_report(&m, &cfg(4, 2), 0.1, &Membership::Grid(&ps), GENERAL_EIG_N_LIMIT).unwrap();
    assert!(rep.passed());
    assert!(rep.trials.iter().all(|t| t.extrapolated == 0));
}

#[test]
fn gap_of_deterministic_model_is_the_distance_to_the_points() {
    let points = vec![c(1.0, 0.0), c(-1.0, 0.0)];
    let m = diag_points(&points, 30);
    let zeta = c(0.0, 3.0);
    let opts = Dist0Options {
        step: 0.01,
        max_e: None,
        scan: ScanOptions {
            in_threshold: 1e4,
            ..Default::default()
        },
    };
    let rep = hermitized_gap_check(&m, &cfg(0, 2), zeta, 0.1, &opts).unwrap();
    for t in &rep.trials {
        assert!((t.empirical - 10f64.sqrt()).abs() < 1e-12);
    }
    assert!(rep.selfconsistent <= 10f64.sqrt() && rep.selfconsistent >= 10f64.sqrt() - 0.02, "{}", rep.selfconsistent);
    assert!(rep.consistent(0.05));
}

#[test]
fn ginibre_gap_outside_and_inside_the_disk() {
    let m = presets::build(Preset::Ginibre, 1000);
    let opts = Dist0Options {
        step: 0.005,
        max_e: None,
        scan: ScanOptions::default(),
    };
    let out = hermitized_gap_check(&m, &cfg(8, 5), c(2.0, 0.0), 0.1, &opts).unwrap();
    assert!(out.trials.iter().all(|t| t.empirical >= 0.5), "{:?}", out.trials);
    assert!(out.consistent(0.05));
    let inside = hermitized_gap_check(&m, &cfg(8, 1), c(0.5, 0.0), 0.1, &opts).unwrap();
    assert!(inside.min_empirical <= 0.05);
    assert_eq!(inside.selfconsistent, 0.0);
}

#[test]
fn hermitized_spectrum_is_chiral() {
    let m = presets::build(Preset::Fig1d, 40);
    let ev = hermitized_eigenvalues(&m, &cfg(1, 1), 0, c(0.3, -0.2)).unwrap();
    let n = ev.len();
    for k in 0..n / 2 {
        assert!((ev[k] + ev[n - 1 - k]).abs() <= 1e-8, "{} vs {}", ev[k], ev[n - 1 - k]);
    }
}

fn law_distance(model: &KroneckerModel, eta: f64, seed: u64) -> f64 {
    let data = direct_hermitian(model).unwrap();
    let grid = bracket_grid(&data, 0.25, 1201).unwrap();
    let dos = compute_dos(&data, &grid, eta, &SolverOptions::default()).unwrap();
    assert_eq!(dos.failures, 0);
    global_law_distance(model, &cfg(seed, 1), &dos).unwrap()
}

#[test]
fn wigner_global_law() {
    let d = law_distance(&presets::build(Preset::Wigner, 2000), 1e-3, 1);
    assert!(d < 0.02, "Kolmogorov distance {d}");
}

#[test]
fn two_band_global_law_and_support() {
    let m = presets::build(Preset::TwoBand, 2000);
    let d = law_distance(&m, 1e-3, 2);
    assert!(d < 0.03, "Kolmogorov distance {d}");
    let data = direct_hermitian(&m).unwrap();
    let grid = bracket_grid(&data, 0.05, 551).unwrap();
    let sup = estimate_support(&data, &grid, 1e-5, 50.0, &SolverOptions::default()).unwrap();
    assert_eq!(sup.intervals.len(), 2, "{:?}", sup.intervals);
}

#[test]
fn deterministic_global_law_is_only_smoothing() {
    let n = 2000;
    let a = (0..n)
        .map(|i| CMat::from_element(1, 1, c(-1.0 + 2.0 * i as f64 / (n - 1) as f64, 0.0)))
        .collect();
    let d = law_distance(&presets::deterministic(a), 1e-2, 0);
    assert!(d < 0.05, "Kolmogorov distance {d}");
}

#[test]
fn global_law_needs_a_hermitian_model() {
    let m = presets::build(Preset::Ginibre, 10);
    let dos = kronmde::spectrum::DosCurve {
        e_grid: vec![-1.0, 1.0],
        eta: 0.1,
        rho: vec![0.5, 0.5],
        max_im_over_eta: vec![0.0; 2],
        dist_certificates: vec![0.0; 2],
        failures: 0,
    };
    assert!(matches!(global_law_distance(&m, &cfg(0, 1), &dos), Err(kronmde::Error::Contract(_))));
}

// X = Y + Y* is Hermitian with entry variance 2t, so H^0 has a semicircle of radius 2√(2t).
// The Hermitization must carry β̃ and γ̃* in separate blocks to reproduce it.
#[test]
fn hermitization_splits_beta_and_gamma() {
    let n = 600;
    let one = CMat::from_element(1, 1, c(1.0, 0.0));
    let model = KroneckerModel {
        structure: StructureSet {
            l: 1,
            alpha_tilde: vec![CMat::zeros(1, 1)],
            beta_tilde: vec![one.clone()],
            gamma_tilde: vec![one],
        },
        variances: VarianceProfile::flat(n, vec![0.0], vec![1.0]),
        expectation: ExpectationDiagonal {
            a_tilde: vec![CMat::zeros(1, 1); n],
        },
        kappa: Kappa::default(),
    };
    let data = hermitize(&model, c(0.0, 0.0)).unwrap();
    let grid: Vec<f64> = (0..=500).map(|k| -5.0 + 0.02 * k as f64).collect();
    let sup = estimate_support(&data, &grid, 1e-5, 50.0, &SolverOptions::default()).unwrap();
    let edge = 2.0 * 2f64.sqrt();
    assert_eq!(sup.intervals.len(), 1);
    assert!((sup.intervals[0].1 - edge).abs() < 0.03, "{:?}", sup.intervals);
    let ev = hermitized_eigenvalues(&model, &cfg(1, 1), 0, c(0.0, 0.0)).unwrap();
    let dos = compute_dos(&data, &grid, 1e-2, &SolverOptions::default()).unwrap();
    let d = kolmogorov_distance(&ev, &grid, &dos.cumulative());
    assert!(d < 0.02, "Kolmogorov distance {d}");
}

#[test]
fn histogram_weights_sum_to_one() {
    let ev = eig_hermitian(&random_hermitian(40, 3)).unwrap();
    let lo = ev[0] - 1.0;
    let hi = ev[39] + 1.0;
    let h = EsdHistogram::new(&ev, lo, hi, 16).unwrap();
    assert_eq!(h.counts.iter().sum::<usize>(), 40);
    assert!((h.weights.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    assert!(h.to_csv().starts_with("edge,weight\n"));
}
