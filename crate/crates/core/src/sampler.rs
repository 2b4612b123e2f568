//! Finite-N sampling of Kronecker random matrices and Monte Carlo checks against the
//! self-consistent predictions.
//!
//! Every random family owns its own ChaCha8 stream, selected by
//! `(trial << 32) | family` on a generator seeded with the run seed. X families are
//! numbered `0..ℓ`, Y families `ℓ..2ℓ`. A matrix therefore depends only on
//! `(model, seed, trial)`, whichever thread produces it.

use std::fmt::Write as _;
use std::str::FromStr;

use faer::Mat;
use rand::{Rng, RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{c, C64};
use crate::model::{assemble_hermitized_sample, validate, KroneckerModel};
use crate::spectrum::{
    example_oracle, example_oracle_dilated, DosCurve, PseudospectrumGrid,
};

/// Default cap on N for general (non-Hermitian) eigensolves.
pub const GENERAL_EIG_N_LIMIT: usize = 2000;
/// Default cap on N for Hermitian eigensolves.
pub const HERMITIAN_EIG_N_LIMIT: usize = 4000;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EntryDistribution {
    /// Standard complex Gaussian off the diagonal of Hermitian families, real Gaussian on it.
    #[default]
    ComplexGaussian,
    RealGaussian,
    Rademacher,
}

impl FromStr for EntryDistribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "complex-gaussian" => Ok(Self::ComplexGaussian),
            "real-gaussian" => Ok(Self::RealGaussian),
            "rademacher" => Ok(Self::Rademacher),
            _ => Err(Error::Parse(format!(
                "unknown distribution `{s}` (expected complex-gaussian, real-gaussian or rademacher)"
            ))),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SampleConfig {
    pub seed: u64,
    pub distribution: EntryDistribution,
    pub trials: usize,
}

impl Default for SampleConfig {
    fn default() -> Self {
        SampleConfig {
            seed: 0,
            distribution: EntryDistribution::ComplexGaussian,
            trials: 1,
        }
    }
}

impl SampleConfig {
    pub fn check(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Validation("trials must be at least 1".into()));
        }
        Ok(())
    }
}

fn stream(seed: u64, family: usize, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((trial as u64) << 32) | family as u64);
    rng
}

/// Centered entry with `E|x|² = 1`; `real` forces a real value.
fn unit_entry<R: Rng>(rng: &mut R, dist: EntryDistribution, real: bool) -> C64 {
    match dist {
        EntryDistribution::ComplexGaussian if !real => {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            c(re, im) * std::f64::consts::FRAC_1_SQRT_2
        }
        EntryDistribution::ComplexGaussian | EntryDistribution::RealGaussian => {
            c(StandardNormal.sample(rng), 0.0)
        }
        EntryDistribution::Rademacher => c(if rng.random::<bool>() { 1.0 } else { -1.0 }, 0.0),
    }
}

/// Adds `coef[a,b] · F[i,j]` into `X[(aN+i, bN+j)]` for every nonzero `coef[a,b]`.
fn add_kron(x: &mut Mat<C64>, coef: &crate::linalg::CMat, f: &[C64], n: usize) {
    for a in 0..coef.nrows() {
        for b in 0..coef.ncols() {
            let w = coef[(a, b)];
            if w == c(0.0, 0.0) {
                continue;
            }
            for j in 0..n {
                for i in 0..n {
                    let v = f[i * n + j];
                    if v != c(0.0, 0.0) {
                        x[(a * n + i, b * n + j)] += w * v;
                    }
                }
            }
        }
    }
}

/// Row-major adjoint of an N×N family.
fn adjoint(f: &[C64], n: usize) -> Vec<C64> {
    let mut out = vec![c(0.0, 0.0); n * n];
    for i in 0..n {
        for j in 0..n {
            out[j * n + i] = f[i * n + j].conj();
        }
    }
    out
}

/// Draws one LN×LN sample `X = Σ α̃_μ ⊗ X_μ + Σ (β̃_ν ⊗ Y_ν + γ̃_ν ⊗ Y_ν*) + Σ ã_i ⊗ E_ii`.
pub fn sample_model(model: &KroneckerModel, cfg: &SampleConfig, trial: usize) -> Result<Mat<C64>> {
    validate(model)?.into_result()?;
    Ok(sample_unchecked(model, cfg, trial))
}

fn sample_unchecked(model: &KroneckerModel, cfg: &SampleConfig, trial: usize) -> Mat<C64> {
    let (l, n, ell) = (model.l(), model.n(), model.ell());
    let s = &model.structure;
    let var = &model.variances;
    let mut x = Mat::<C64>::zeros(l * n, l * n);
    for mu in 0..ell {
        if s.alpha_tilde[mu].iter().all(|v| *v == c(0.0, 0.0)) {
            continue;
        }
        let mut rng = stream(cfg.seed, mu, trial);
        let mut f = vec![c(0.0, 0.0); n * n];
        for i in 0..n {
            for j in i..n {
                let sd = var.s(mu, i, j).sqrt();
                let v = unit_entry(&mut rng, cfg.distribution, i == j) * sd;
                f[i * n + j] = v;
                f[j * n + i] = v.conj();
            }
        }
        add_kron(&mut x, &s.alpha_tilde[mu], &f, n);
    }
    for nu in 0..ell {
        let beta_zero = s.beta_tilde[nu].iter().all(|v| *v == c(0.0, 0.0));
        let gamma_zero = s.gamma_tilde[nu].iter().all(|v| *v == c(0.0, 0.0));
        if beta_zero && gamma_zero {
            continue;
        }
        let mut rng = stream(cfg.seed, ell + nu, trial);
        let mut f = vec![c(0.0, 0.0); n * n];
        for i in 0..n {
            for j in 0..n {
                f[i * n + j] = unit_entry(&mut rng, cfg.distribution, false) * var.t(nu, i, j).sqrt();
            }
        }
        if !beta_zero {
            add_kron(&mut x, &s.beta_tilde[nu], &f, n);
        }
        if !gamma_zero {
            add_kron(&mut x, &s.gamma_tilde[nu], &adjoint(&f, n), n);
        }
    }
    for (i, at) in model.expectation.a_tilde.iter().enumerate() {
        for a in 0..l {
            for b in 0..l {
                x[(a * n + i, b * n + i)] += at[(a, b)];
            }
        }
    }
    x
}

fn check_square(x: &Mat<C64>, what: &str) -> Result<()> {
    if x.nrows() != x.ncols() {
        return Err(Error::Dimension {
            field: what.into(),
            detail: format!("expected a square matrix, got {}x{}", x.nrows(), x.ncols()),
        });
    }
    Ok(())
}

fn max_abs(x: &Mat<C64>) -> f64 {
    let mut m = 0.0f64;
    for j in 0..x.ncols() {
        for i in 0..x.nrows() {
            m = m.max(x[(i, j)].norm());
        }
    }
    m
}

/// Ascending eigenvalues of a Hermitian matrix.
pub fn eig_hermitian(h: &Mat<C64>) -> Result<Vec<f64>> {
    check_square(h, "H")?;
    let n = h.nrows();
    let scale = max_abs(h);
    let mut defect = 0.0f64;
    for j in 0..n {
        for i in 0..=j {
            defect = defect.max((h[(i, j)] - h[(j, i)].conj()).norm());
        }
    }
    if defect > 1e-10 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::Contract(format!(
            "matrix is not Hermitian: max |H − H*| = {defect:.3e} against max |H| = {scale:.3e}"
        )));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut ev = h
        .as_ref()
        .self_adjoint_eigenvalues(faer::Side::Lower)
        .map_err(|e| Error::Eigensolver(format!("{e:?}")))?;
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}

/// Eigenvalues of a general square matrix, sorted by real then imaginary part.
pub fn eig_general(x: &Mat<C64>) -> Result<Vec<C64>> {
    check_square(x, "X")?;
    if x.nrows() == 0 {
        return Ok(Vec::new());
    }
    let mut ev = x
        .as_ref()
        .eigenvalues()
        .map_err(|e| Error::Eigensolver(format!("{e:?}")))?;
    ev.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    Ok(ev)
}

/// Smallest singular value, i.e. `dist(0, spec H)` for the Hermitization of `x`.
pub fn smallest_singular_value(x: &Mat<C64>) -> Result<f64> {
    check_square(x, "X")?;
    let sv = x
        .as_ref()
        .singular_values()
        .map_err(|e| Error::Eigensolver(format!("{e:?}")))?;
    Ok(sv.into_iter().fold(f64::INFINITY, f64::min))
}

fn check_limit(n: usize, limit: usize) -> Result<()> {
    if n > limit {
        return Err(Error::TooLarge { size: n, limit });
    }
    Ok(())
}

/// Eigenvalues of one sampled X.
pub fn sample_eigenvalues(model: &KroneckerModel, cfg: &SampleConfig, trial: usize, n_limit: usize) -> Result<Vec<C64>> {
    check_limit(model.n(), n_limit)?;
    eig_general(&sample_model(model, cfg, trial)?)
}

/// CSV body `re,im` with one eigenvalue per row.
pub fn eigenvalues_csv(eigs: &[C64]) -> String {
    let mut out = String::from("re,im\n");
    for z in eigs {
        let _ = writeln!(out, "{},{}", z.re, z.im);
    }
    out
}

/// Empirical spectral histogram with weights `1/(count)` per eigenvalue.
#[derive(Clone, Debug, Serialize)]
pub struct EsdHistogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub weights: Vec<f64>,
    /// Eigenvalues outside `[edges[0], edges[last]]`.
    pub outside: usize,
}

impl EsdHistogram {
    pub fn new(eigs: &[f64], lo: f64, hi: f64, bins: usize) -> Result<Self> {
        if bins == 0 || !(hi > lo) {
            return Err(Error::Contract(format!("invalid histogram range [{lo}, {hi}] with {bins} bins")));
        }
        let width = (hi - lo) / bins as f64;
        let edges = (0..=bins).map(|k| lo + k as f64 * width).collect();
        let mut counts = vec![0usize; bins];
        let mut outside = 0;
        for &x in eigs {
            if x < lo || x > hi {
                outside += 1;
                continue;
            }
            counts[(((x - lo) / width) as usize).min(bins - 1)] += 1;
        }
        let total = eigs.len().max(1) as f64;
        let weights = counts.iter().map(|&k| k as f64 / total).collect();
        Ok(EsdHistogram {
            edges,
            counts,
            weights,
            outside,
        })
    }

    /// `edge,weight` rows keyed by left bin edge.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("edge,weight\n");
        for (e, w) in self.edges.iter().zip(&self.weights) {
            let _ = writeln!(out, "{e},{w}");
        }
        out
    }
}

/// Set that the sampled eigenvalues are checked against.
#[derive(Clone, Debug)]
pub enum Membership<'a> {
    /// Closed disk of the given radius around 0, dilated by ε.
    Disk(f64),
    /// The analytic set `Σ 1/|ζ_i − ζ|² ≥ L` for shift points `ζ_i`, dilated by ε.
    Example(Vec<C64>),
    /// A computed pseudospectrum mask, looked up at the nearest grid cell.
    Grid(&'a PseudospectrumGrid),
}

impl Membership<'_> {
    fn contains(&self, z: C64, eps: f64) -> bool {
        match self {
            Membership::Disk(r) => z.norm() <= r + eps,
            Membership::Example(p) => example_oracle_dilated(p, p.len(), z, eps),
            Membership::Grid(g) => g.member[nearest_cell(g, z).0],
        }
    }

    /// Distance from z to the undilated set.
    fn distance(&self, z: C64) -> f64 {
        match self {
            Membership::Disk(r) => (z.norm() - r).max(0.0),
            Membership::Example(p) => {
                if example_oracle(p, p.len(), z) {
                    return 0.0;
                }
                let mut lo = 0.0;
                let mut hi = p.iter().map(|q| (q - z).norm()).fold(f64::INFINITY, f64::min);
                for _ in 0..40 {
                    let mid = 0.5 * (lo + hi);
                    if example_oracle_dilated(p, p.len(), z, mid) {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                hi
            }
            Membership::Grid(g) => (0..g.member.len())
                .filter(|&k| g.member[k])
                .map(|k| (g.zeta_grid.point(k) - z).norm())
                .fold(f64::INFINITY, f64::min),
        }
    }
}

/// Nearest grid cell, and whether z lies outside the grid rectangle.
fn nearest_cell(g: &PseudospectrumGrid, z: C64) -> (usize, bool) {
    let zg = &g.zeta_grid;
    let idx = |v: f64, lo: f64, hi: f64, count: usize, step: f64| -> (usize, bool) {
        let outside = v < lo - 0.5 * step || v > hi + 0.5 * step;
        if count <= 1 || step == 0.0 {
            return (0, outside);
        }
        let k = ((v - lo) / step).round().clamp(0.0, (count - 1) as f64) as usize;
        (k, outside)
    };
    let (i, o1) = idx(z.re, zg.re_min, zg.re_max, zg.re_count, zg.re_step());
    let (k, o2) = idx(z.im, zg.im_min, zg.im_max, zg.im_count, zg.im_step());
    (k * zg.re_count + i, o1 || o2)
}

#[derive(Clone, Debug, Serialize)]
pub struct TrialContainment {
    pub trial: usize,
    pub eigenvalue_count: usize,
    pub outside: usize,
    /// Largest distance to the undilated set among outsiders.
    pub max_distance: Option<f64>,
    #[serde(serialize_with = "serialize_points")]
    pub outliers: Vec<C64>,
    /// Eigenvalues beyond the grid rectangle, classified by the nearest cell.
    pub extrapolated: usize,
}

fn serialize_points<S: serde::Serializer>(v: &[C64], s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(v.len()))?;
    for z in v {
        seq.serialize_element(&[z.re, z.im])?;
    }
    seq.end()
}

#[derive(Clone, Debug, Serialize)]
pub struct ContainmentReport {
    pub epsilon: f64,
    pub seed: u64,
    pub trials: Vec<TrialContainment>,
    pub total_eigenvalues: usize,
    pub total_outside: usize,
    pub outlier_rate: f64,
}

impl ContainmentReport {
    pub fn passed(&self) -> bool {
        self.total_outside == 0
    }
}

/// Counts sampled eigenvalues outside the ε-dilated membership set, trial by trial.
pub fn containment_report(
    model: &KroneckerModel,
    cfg: &SampleConfig,
    epsilon: f64,
    membership: &Membership<'_>,
    n_limit: usize,
) -> Result<ContainmentReport> {
    cfg.check()?;
    validate(model)?.into_result()?;
    check_limit(model.n(), n_limit)?;
    let trials: Vec<Result<TrialContainment>> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| {
            let eigs = eig_general(&sample_unchecked(model, cfg, t))?;
            Ok(trial_containment(t, &eigs, epsilon, membership))
        })
        .collect();
    let trials: Vec<TrialContainment> = trials.into_iter().collect::<Result<_>>()?;
    let total_eigenvalues = trials.iter().map(|t| t.eigenvalue_count).sum();
    let total_outside = trials.iter().map(|t| t.outside).sum();
    Ok(ContainmentReport {
        epsilon,
        seed: cfg.seed,
        trials,
        total_eigenvalues,
        total_outside,
        outlier_rate: total_outside as f64 / (total_eigenvalues as f64).max(1.0),
    })
}

fn trial_containment(trial: usize, eigs: &[C64], eps: f64, membership: &Membership<'_>) -> TrialContainment {
    let mut extrapolated = 0;
    let mut outliers = Vec::new();
    for &z in eigs {
        if let Membership::Grid(g) = membership {
            if nearest_cell(g, z).1 {
                extrapolated += 1;
            }
        }
        if !membership.contains(z, eps) {
            outliers.push(z);
        }
    }
    let max_distance = outliers
        .iter()
        .map(|&z| membership.distance(z))
        .fold(None, |acc: Option<f64>, d| Some(acc.map_or(d, |a| a.max(d))));
    TrialContainment {
        trial,
        eigenvalue_count: eigs.len(),
        outside: outliers.len(),
        max_distance,
        outliers,
        extrapolated,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct GapTrial {
    pub trial: usize,
    /// `dist(0, spec H^ζ)`, the smallest singular value of `X − ζ`.
    pub empirical: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GapReport {
    #[serde(serialize_with = "crate::linalg::serialize_c64")]
    pub zeta: C64,
    pub epsilon: f64,
    pub selfconsistent: f64,
    pub trials: Vec<GapTrial>,
    pub min_empirical: f64,
}

impl GapReport {
    /// Outside `𝔻_ε` the empirical gap must not undercut the self-consistent one by more
    /// than `slack`; inside there is nothing to check.
    pub fn consistent(&self, slack: f64) -> bool {
        self.selfconsistent <= self.epsilon || self.min_empirical >= self.selfconsistent - slack
    }
}

/// Empirical `dist(0, spec H^ζ)` per trial next to the self-consistent value.
pub fn hermitized_gap_check(
    model: &KroneckerModel,
    cfg: &SampleConfig,
    zeta: C64,
    epsilon: f64,
    dist0_opts: &crate::spectrum::Dist0Options,
) -> Result<GapReport> {
    cfg.check()?;
    validate(model)?.into_result()?;
    let selfconsistent = crate::spectrum::dist0_selfconsistent(model, zeta, dist0_opts)?;
    let trials: Vec<Result<GapTrial>> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| {
            let mut x = sample_unchecked(model, cfg, t);
            for i in 0..x.nrows() {
                x[(i, i)] -= zeta;
            }
            Ok(GapTrial {
                trial: t,
                empirical: smallest_singular_value(&x)?,
            })
        })
        .collect();
    let trials: Vec<GapTrial> = trials.into_iter().collect::<Result<_>>()?;
    let min_empirical = trials.iter().map(|t| t.empirical).fold(f64::INFINITY, f64::min);
    Ok(GapReport {
        zeta,
        epsilon,
        selfconsistent,
        trials,
        min_empirical,
    })
}

/// Hermitian eigenvalues of the sampled Hermitization `H^ζ`.
pub fn hermitized_eigenvalues(model: &KroneckerModel, cfg: &SampleConfig, trial: usize, zeta: C64) -> Result<Vec<f64>> {
    let x = sample_model(model, cfg, trial)?;
    eig_hermitian(&assemble_hermitized_sample(&x, zeta)?)
}

/// Kolmogorov distance between the ESD of one sampled Hermitian X (trial 0) and the
/// normalized cumulative integral of `dos`, interpolated linearly between grid points.
pub fn global_law_distance(model: &KroneckerModel, cfg: &SampleConfig, dos: &DosCurve) -> Result<f64> {
    validate(model)?.into_result()?;
    if !model.is_hermitian() {
        return Err(Error::Contract(
            "global law check needs a Hermitian model (α̃ = α̃*, γ̃ = β̃*, ã = ã*)".into(),
        ));
    }
    check_limit(model.n(), HERMITIAN_EIG_N_LIMIT)?;
    if dos.e_grid.len() < 2 {
        return Err(Error::Contract("DOS curve needs at least two grid points".into()));
    }
    let eigs = eig_hermitian(&sample_unchecked(model, cfg, 0))?;
    Ok(kolmogorov_distance(&eigs, &dos.e_grid, &dos.cumulative()))
}

/// `sup_x |F_emp(x) − F(x)|` for sorted samples against a piecewise-linear CDF.
pub fn kolmogorov_distance(sorted: &[f64], grid: &[f64], cdf: &[f64]) -> f64 {
    let n = sorted.len() as f64;
    let f = |x: f64| -> f64 {
        if x <= grid[0] {
            return 0.0;
        }
        if x >= grid[grid.len() - 1] {
            return 1.0;
        }
        let k = grid.partition_point(|&g| g <= x);
        let (x0, x1) = (grid[k - 1], grid[k]);
        let w = (x - x0) / (x1 - x0);
        cdf[k - 1] + w * (cdf[k] - cdf[k - 1])
    };
    sorted
        .iter()
        .enumerate()
        .map(|(k, &x)| {
            let fx = f(x);
            (fx - k as f64 / n).abs().max((fx - (k + 1) as f64 / n).abs())
        })
        .fold(0.0, f64::max)
}
