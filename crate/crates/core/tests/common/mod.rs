#![allow(dead_code)]

use kronmde::linalg::{c, CMat, C64};
use kronmde::model::{
    direct_hermitian, hermitize, ExpectationDiagonal, HermitianDysonData, Kappa, KroneckerModel, StructureSet,
    VarianceKind, VarianceProfile,
};
use kronmde::presets::{self, Preset};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn gauss(r: &mut ChaCha8Rng) -> f64 {
    // Box–Muller keeps this helper independent of the library's sampler.
    let u: f64 = r.random::<f64>().max(1e-300);
    let v: f64 = r.random();
    (-2.0 * u.ln()).sqrt() * (2.0 * std::f64::consts::PI * v).cos()
}

pub fn random_matrix(l: usize, scale: f64, r: &mut ChaCha8Rng) -> CMat {
    CMat::from_fn(l, l, |_, _| c(gauss(r), gauss(r)) * scale)
}

pub fn random_hermitian(l: usize, scale: f64, r: &mut ChaCha8Rng) -> CMat {
    let a = random_matrix(l, scale, r);
    (&a + a.adjoint()) * c(0.5, 0.0)
}

/// Random admissible model with explicit variance profiles. `hermitian` forces
/// α̃ = α̃*, γ̃ = β̃*, ã = ã*.
pub fn random_model(seed: u64, l: usize, n: usize, hermitian: bool) -> KroneckerModel {
    let mut r = rng(seed);
    let ell = 1 + (r.random::<u32>() % 2) as usize;
    let alpha_tilde: Vec<CMat> = (0..ell).map(|_| random_hermitian(l, 0.6, &mut r)).collect();
    let beta_tilde: Vec<CMat> = (0..ell).map(|_| random_matrix(l, 0.6, &mut r)).collect();
    let gamma_tilde: Vec<CMat> = if hermitian {
        beta_tilde.iter().map(|b| b.adjoint()).collect()
    } else {
        (0..ell).map(|_| random_matrix(l, 0.3, &mut r)).collect()
    };
    let mut s = Vec::new();
    let mut t = Vec::new();
    for _ in 0..ell {
        let mut sm = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let v = r.random::<f64>() / n as f64;
                sm[i * n + j] = v;
                sm[j * n + i] = v;
            }
        }
        s.push(sm);
        t.push((0..n * n).map(|_| r.random::<f64>() / n as f64).collect());
    }
    let a_tilde = (0..n)
        .map(|_| {
            if hermitian {
                random_hermitian(l, 0.8, &mut r)
            } else {
                random_matrix(l, 0.5, &mut r)
            }
        })
        .collect();
    KroneckerModel {
        structure: StructureSet {
            l,
            alpha_tilde,
            beta_tilde,
            gamma_tilde,
        },
        variances: VarianceProfile {
            n,
            kind: VarianceKind::Explicit { s, t },
        },
        expectation: ExpectationDiagonal { a_tilde },
        kappa: Kappa::default(),
    }
}

/// Random small Dyson data with N ≤ 32 and K ≤ 4: even seeds give a direct Hermitian
/// model (K = L ≤ 4), odd seeds a Hermitization (K = 2L ≤ 4) at a random shift.
pub fn random_data(seed: u64) -> (HermitianDysonData, String) {
    let mut r = rng(seed ^ 0x5eed);
    let n = 2 + (r.random::<u32>() % 31) as usize;
    if seed % 2 == 0 {
        let l = 1 + (r.random::<u32>() % 4) as usize;
        let m = random_model(seed, l, n, true);
        (direct_hermitian(&m).unwrap(), format!("random#{seed} direct L={l} N={n}"))
    } else {
        let l = 1 + (r.random::<u32>() % 2) as usize;
        let zeta = c(gauss(&mut r) * 0.7, gauss(&mut r) * 0.7);
        let m = random_model(seed, l, n, false);
        (hermitize(&m, zeta).unwrap(), format!("random#{seed} hermitized L={l} N={n} ζ={zeta}"))
    }
}

/// Dyson data of every preset: Hermitian presets directly, the others hermitized at `zeta`.
pub fn preset_data(n: usize, zeta: C64) -> Vec<(Preset, HermitianDysonData)> {
    Preset::ALL
        .iter()
        .map(|&p| {
            let m = presets::build(p, n);
            let d = if m.is_hermitian() {
                direct_hermitian(&m).unwrap()
            } else {
                hermitize(&m, zeta).unwrap()
            };
            (p, d)
        })
        .collect()
}

pub fn scalar(v: C64) -> CMat {
    CMat::from_element(1, 1, v)
}

/// Decoupled data (𝒮 = 0) with the given a_j.
pub fn decoupled(a: Vec<CMat>) -> HermitianDysonData {
    let k = a[0].nrows();
    let n = a.len();
    HermitianDysonData::new(
        a,
        vec![CMat::zeros(k, k)],
        vec![CMat::zeros(k, k)],
        VarianceProfile::flat(n, vec![0.0], vec![0.0]),
    )
    .unwrap()
}

pub fn semicircle_density(e: f64) -> f64 {
    if e.abs() >= 2.0 {
        0.0
    } else {
        (4.0 - e * e).sqrt() / (2.0 * std::f64::consts::PI)
    }
}

/// Stieltjes transform of the semicircle, `m(z) = (−z + √(z² − 4))/2` on the Herglotz branch.
pub fn semicircle_m(z: C64) -> C64 {
    let s = (z * z - c(4.0, 0.0)).sqrt();
    let m1 = (-z + s) * 0.5;
    if m1.im > 0.0 {
        m1
    } else {
        (-z - s) * 0.5
    }
}
