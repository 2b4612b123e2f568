//! Kronecker random matrix models and their Hermitization.
//!
//! A model is `X = Σ α̃_μ ⊗ X_μ + Σ (β̃_ν ⊗ Y_ν + γ̃_ν ⊗ Y_ν*) + Σ ã_i ⊗ E_ii` with
//! deterministic L×L structure matrices and N×N random matrices with independent
//! centered entries. The Kronecker convention is that the L×L factor indexes the
//! outer blocks, so entry `(a, i), (b, j)` of `X` lives at row `a·N + i`, column `b·N + j`.

use std::fmt;

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{block2, hermiticity_defect, identity, im_part, spectral_norm, zeros, CMat, C64};

/// Admissibility bounds recorded on a model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Kappa {
    /// Variance bound: `s_ij, t_ij ≤ k1 / N`.
    pub k1: f64,
    /// Structure-matrix bound on `|α̃_μ|`, `|β̃_ν|`.
    pub k2: f64,
    /// Expectation bound on `|ã_i|`.
    pub k3: f64,
}

impl Default for Kappa {
    fn default() -> Self {
        Kappa {
            k1: 10.0,
            k2: 10.0,
            k3: 10.0,
        }
    }
}

/// Structure matrices `α̃_μ, β̃_ν, γ̃_ν`, all L×L, ℓ of each.
#[derive(Clone, Debug, PartialEq)]
pub struct StructureSet {
    pub l: usize,
    pub alpha_tilde: Vec<CMat>,
    pub beta_tilde: Vec<CMat>,
    pub gamma_tilde: Vec<CMat>,
}

impl StructureSet {
    pub fn ell(&self) -> usize {
        self.alpha_tilde.len()
    }
}

/// How the variance profile is generated.
///
/// `Flat` and `Banded` are evaluated on demand; only `Explicit` stores ℓ·N² numbers.
#[derive(Clone, Debug, PartialEq)]
pub enum VarianceKind {
    /// `s_ij^μ = s[μ] / N`, `t_ij^ν = t[ν] / N`.
    Flat { s: Vec<f64>, t: Vec<f64> },
    /// Periodic band: `s_ij^μ = s[μ] / (2w + 1)` when the circular distance of `i, j` is at most `w`.
    Banded { width: usize, s: Vec<f64>, t: Vec<f64> },
    /// Row-major N×N arrays, one per family.
    Explicit { s: Vec<Vec<f64>>, t: Vec<Vec<f64>> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct VarianceProfile {
    pub n: usize,
    pub kind: VarianceKind,
}

impl VarianceProfile {
    pub fn flat(n: usize, s: Vec<f64>, t: Vec<f64>) -> Self {
        VarianceProfile {
            n,
            kind: VarianceKind::Flat { s, t },
        }
    }

    pub fn ell(&self) -> usize {
        match &self.kind {
            VarianceKind::Flat { s, .. } | VarianceKind::Banded { s, .. } => s.len(),
            VarianceKind::Explicit { s, .. } => s.len(),
        }
    }

    pub fn is_flat(&self) -> bool {
        matches!(self.kind, VarianceKind::Flat { .. })
    }

    fn banded_weight(&self, width: usize, i: usize, j: usize) -> f64 {
        let d = i.abs_diff(j);
        let d = d.min(self.n - d);
        if d <= width {
            1.0 / (2 * width + 1) as f64
        } else {
            0.0
        }
    }

    /// `s_ij^μ`, zero-based indices.
    pub fn s(&self, mu: usize, i: usize, j: usize) -> f64 {
        match &self.kind {
            VarianceKind::Flat { s, .. } => s[mu] / self.n as f64,
            VarianceKind::Banded { width, s, .. } => s[mu] * self.banded_weight(*width, i, j),
            VarianceKind::Explicit { s, .. } => s[mu][i * self.n + j],
        }
    }

    /// `t_ij^ν`, zero-based indices.
    pub fn t(&self, nu: usize, i: usize, j: usize) -> f64 {
        match &self.kind {
            VarianceKind::Flat { t, .. } => t[nu] / self.n as f64,
            VarianceKind::Banded { width, t, .. } => t[nu] * self.banded_weight(*width, i, j),
            VarianceKind::Explicit { t, .. } => t[nu][i * self.n + j],
        }
    }

    /// Materializes the profile as explicit arrays.
    pub fn to_explicit(&self) -> VarianceProfile {
        let n = self.n;
        let ell = self.ell();
        let s = (0..ell)
            .map(|mu| (0..n * n).map(|p| self.s(mu, p / n, p % n)).collect())
            .collect();
        let t = (0..ell)
            .map(|nu| (0..n * n).map(|p| self.t(nu, p / n, p % n)).collect())
            .collect();
        VarianceProfile {
            n,
            kind: VarianceKind::Explicit { s, t },
        }
    }

    fn check_shape(&self, ell: usize) -> Result<()> {
        let n = self.n;
        if n == 0 {
            return Err(Error::dimension("variances", "N must be positive"));
        }
        let (ls, lt) = match &self.kind {
            VarianceKind::Flat { s, t } | VarianceKind::Banded { s, t, .. } => (s.len(), t.len()),
            VarianceKind::Explicit { s, t } => {
                for (name, arrays) in [("s", s), ("t", t)] {
                    for (mu, a) in arrays.iter().enumerate() {
                        if a.len() != n * n {
                            return Err(Error::dimension(
                                format!("variances.{name}[{mu}]"),
                                format!("expected {n}x{n} entries, got {}", a.len()),
                            ));
                        }
                    }
                }
                (s.len(), t.len())
            }
        };
        if ls != ell || lt != ell {
            return Err(Error::dimension(
                "variances",
                format!("expected {ell} families for s and t, got {ls} and {lt}"),
            ));
        }
        Ok(())
    }
}

/// The deterministic block diagonal `ã_1, …, ã_N` (the expectation of `X`).
#[derive(Clone, Debug, PartialEq)]
pub struct ExpectationDiagonal {
    pub a_tilde: Vec<CMat>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KroneckerModel {
    pub structure: StructureSet,
    pub variances: VarianceProfile,
    pub expectation: ExpectationDiagonal,
    pub kappa: Kappa,
}

/// One failed admissibility bound. Indices are one-based in the rendered message.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    VarianceBound { family: char, i: usize, j: usize, mu: usize, value: f64, bound: f64 },
    NegativeVariance { family: char, i: usize, j: usize, mu: usize, value: f64 },
    Symmetry { i: usize, j: usize, mu: usize, s_ij: f64, s_ji: f64 },
    StructureNorm { which: String, mu: usize, norm: f64, bound: f64 },
    ExpectationNorm { i: usize, norm: f64, bound: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::VarianceBound { family, i, j, mu, value, bound } => write!(
                f,
                "{family} exceeds κ₁/N at ({},{},μ={}): {value} > {bound}",
                i + 1,
                j + 1,
                mu + 1
            ),
            Violation::NegativeVariance { family, i, j, mu, value } => {
                write!(f, "{family} is negative at ({},{},μ={}): {value}", i + 1, j + 1, mu + 1)
            }
            Violation::Symmetry { i, j, mu, s_ij, s_ji } => write!(
                f,
                "s is not symmetric at ({},{},μ={}): {s_ij} != {s_ji}",
                i + 1,
                j + 1,
                mu + 1
            ),
            Violation::StructureNorm { which, mu, norm, bound } => {
                write!(f, "|{which}_{}| = {norm} exceeds κ₂ = {bound}", mu + 1)
            }
            Violation::ExpectationNorm { i, norm, bound } => {
                write!(f, "|ã_{}| = {norm} exceeds κ₃ = {bound}", i + 1)
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_admissible(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_admissible() {
            Ok(())
        } else {
            let lines: Vec<String> = self.violations.iter().map(|v| v.to_string()).collect();
            Err(Error::Validation(lines.join("; ")))
        }
    }
}

impl KroneckerModel {
    pub fn l(&self) -> usize {
        self.structure.l
    }

    pub fn n(&self) -> usize {
        self.variances.n
    }

    pub fn ell(&self) -> usize {
        self.structure.ell()
    }

    /// Shape checks shared by validation and construction.
    pub fn check_dimensions(&self) -> Result<()> {
        let l = self.structure.l;
        if l == 0 {
            return Err(Error::dimension("L", "must be positive"));
        }
        let ell = self.structure.alpha_tilde.len();
        for (name, mats) in [
            ("alpha_tilde", &self.structure.alpha_tilde),
            ("beta_tilde", &self.structure.beta_tilde),
            ("gamma_tilde", &self.structure.gamma_tilde),
        ] {
            if mats.len() != ell {
                return Err(Error::dimension(
                    name,
                    format!("expected {ell} matrices, got {}", mats.len()),
                ));
            }
            for (mu, m) in mats.iter().enumerate() {
                if m.shape() != (l, l) {
                    return Err(Error::dimension(
                        format!("{name}[{mu}]"),
                        format!("expected {l}x{l}, got {}x{}", m.nrows(), m.ncols()),
                    ));
                }
            }
        }
        self.variances.check_shape(ell)?;
        let n = self.variances.n;
        if self.expectation.a_tilde.len() != n {
            return Err(Error::dimension(
                "a_tilde",
                format!("expected N = {n} matrices, got {}", self.expectation.a_tilde.len()),
            ));
        }
        for (i, a) in self.expectation.a_tilde.iter().enumerate() {
            if a.shape() != (l, l) {
                return Err(Error::dimension(
                    format!("a_tilde[{i}]"),
                    format!("expected {l}x{l}, got {}x{}", a.nrows(), a.ncols()),
                ));
            }
        }
        Ok(())
    }

    /// True when `X = X*` by construction.
    pub fn is_hermitian(&self) -> bool {
        let tol = 1e-12;
        let s = &self.structure;
        s.alpha_tilde.iter().all(|a| hermiticity_defect(a) <= tol)
            && s.beta_tilde
                .iter()
                .zip(&s.gamma_tilde)
                .all(|(b, g)| crate::linalg::frobenius(&(b.adjoint() - g)) <= tol)
            && self.expectation.a_tilde.iter().all(|a| hermiticity_defect(a) <= tol)
    }
}

/// Checks every admissibility bound. Malformed shapes are an `Err`, bound failures are
/// collected in the report.
pub fn validate(model: &KroneckerModel) -> Result<ValidationReport> {
    model.check_dimensions()?;
    let mut violations = Vec::new();
    let n = model.n();
    let kappa = model.kappa;
    let bound = kappa.k1 / n as f64;
    let vp = &model.variances;
    // Flat and banded profiles are constant along rows up to a shift, so a single row
    // suffices; explicit profiles are scanned entirely.
    let rows = if vp.is_flat() { 1 } else { n };
    for mu in 0..model.ell() {
        for i in 0..rows {
            for j in 0..n {
                for (family, value) in [('s', vp.s(mu, i, j)), ('t', vp.t(mu, i, j))] {
                    if value < 0.0 {
                        violations.push(Violation::NegativeVariance { family, i, j, mu, value });
                    } else if value > bound {
                        violations.push(Violation::VarianceBound { family, i, j, mu, value, bound });
                    }
                }
                if j > i {
                    let (sij, sji) = (vp.s(mu, i, j), vp.s(mu, j, i));
                    if sij != sji {
                        violations.push(Violation::Symmetry { i, j, mu, s_ij: sij, s_ji: sji });
                    }
                }
            }
        }
    }
    for (which, mats) in [
        ("α̃", &model.structure.alpha_tilde),
        ("β̃", &model.structure.beta_tilde),
    ] {
        for (mu, m) in mats.iter().enumerate() {
            let norm = spectral_norm(m);
            if norm > kappa.k2 {
                violations.push(Violation::StructureNorm {
                    which: which.to_string(),
                    mu,
                    norm,
                    bound: kappa.k2,
                });
            }
        }
    }
    for (i, a) in model.expectation.a_tilde.iter().enumerate() {
        let norm = spectral_norm(a);
        if norm > kappa.k3 {
            violations.push(Violation::ExpectationNorm { i, norm, bound: kappa.k3 });
        }
    }
    Ok(ValidationReport { violations })
}

/// Data `(a_j, 𝒮)` of the vector Dyson equation `−1/m_j = z − a_j + 𝒮_j[m]`.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianDysonData {
    pub k: usize,
    pub n: usize,
    pub a: Vec<CMat>,
    /// Hermitian K×K matrices paired with the `s` variances.
    pub alpha: Vec<CMat>,
    /// K×K matrices paired with the `t` variances.
    pub beta: Vec<CMat>,
    pub variances: VarianceProfile,
}

impl HermitianDysonData {
    pub fn new(a: Vec<CMat>, alpha: Vec<CMat>, beta: Vec<CMat>, variances: VarianceProfile) -> Result<Self> {
        let n = variances.n;
        let k = a.first().map(|m| m.nrows()).unwrap_or(0);
        if k == 0 || a.len() != n {
            return Err(Error::dimension("a", format!("expected {n} non-empty blocks, got {}", a.len())));
        }
        if alpha.len() != beta.len() {
            return Err(Error::dimension("alpha/beta", "family counts differ"));
        }
        variances.check_shape(alpha.len())?;
        for (name, mats) in [("a", &a), ("alpha", &alpha), ("beta", &beta)] {
            if let Some(idx) = mats.iter().position(|m| m.shape() != (k, k)) {
                return Err(Error::dimension(format!("{name}[{idx}]"), format!("expected {k}x{k}")));
            }
        }
        for (mu, al) in alpha.iter().enumerate() {
            if hermiticity_defect(al) > 1e-12 * (1.0 + spectral_norm(al)) {
                return Err(Error::Contract(format!("alpha[{mu}] is not Hermitian")));
            }
        }
        for (j, aj) in a.iter().enumerate() {
            let top = crate::linalg::hermitian_eigenvalues(&im_part(aj)).last().copied().unwrap_or(0.0);
            if top > 1e-12 * (1.0 + spectral_norm(aj)) {
                return Err(Error::Contract(format!("Im a[{j}] is not negative semidefinite")));
            }
        }
        Ok(HermitianDysonData {
            k,
            n,
            a,
            alpha,
            beta,
            variances,
        })
    }

    pub fn ell(&self) -> usize {
        self.alpha.len()
    }

    pub fn a_is_hermitian(&self) -> bool {
        self.a
            .iter()
            .all(|aj| hermiticity_defect(aj) <= 1e-12 * (1.0 + spectral_norm(aj)))
    }

    /// Same data with the variance profile replaced.
    pub fn with_variances(&self, variances: VarianceProfile) -> Self {
        HermitianDysonData {
            variances,
            ..self.clone()
        }
    }
}

/// Girko Hermitization at shift `ζ`: K = 2L data for the spectrum of `H^ζ` near zero.
///
/// `β_ν = [[0, β̃_ν], [γ̃_ν*, 0]]`, so that `t_ik β r β* + t_ki β* r β` is the covariance of
/// the doubled entries `β̃ y_ik + γ̃ ȳ_ki`. The collapsed form `[[0, β̃ + γ̃*], [0, 0]]` agrees
/// with it only when one of β̃, γ̃ vanishes.
pub fn hermitize(model: &KroneckerModel, zeta: C64) -> Result<HermitianDysonData> {
    validate(model)?.into_result()?;
    Ok(hermitize_unchecked(model, zeta))
}

/// Hermitization without re-running validation; used by grid drivers that validate once.
pub fn hermitize_unchecked(model: &KroneckerModel, zeta: C64) -> HermitianDysonData {
    let l = model.l();
    let z0 = zeros(l);
    let s = &model.structure;
    let alpha = s
        .alpha_tilde
        .iter()
        .map(|a| block2(&z0, a, &a.adjoint(), &z0))
        .collect();
    let beta = s
        .beta_tilde
        .iter()
        .zip(&s.gamma_tilde)
        .map(|(b, g)| block2(&z0, b, &g.adjoint(), &z0))
        .collect();
    let shift = identity(l) * zeta;
    let a = model
        .expectation
        .a_tilde
        .iter()
        .map(|at| block2(&z0, &(at - &shift), &(at.adjoint() - shift.adjoint()), &z0))
        .collect();
    HermitianDysonData {
        k: 2 * l,
        n: model.n(),
        a,
        alpha,
        beta,
        variances: model.variances.clone(),
    }
}

/// Dyson data for a Hermitian model taken directly, K = L, without doubling.
pub fn direct_hermitian(model: &KroneckerModel) -> Result<HermitianDysonData> {
    validate(model)?.into_result()?;
    if !model.is_hermitian() {
        return Err(Error::Contract(
            "model is not Hermitian (needs α̃ = α̃*, γ̃ = β̃*, ã = ã*)".into(),
        ));
    }
    HermitianDysonData::new(
        model.expectation.a_tilde.clone(),
        model.structure.alpha_tilde.clone(),
        model.structure.beta_tilde.clone(),
        model.variances.clone(),
    )
}

/// `H^ζ = [[0, X − ζ], [X* − ζ̄, 0]]` for a sampled matrix.
pub fn assemble_hermitized_sample(x: &Mat<C64>, zeta: C64) -> Result<Mat<C64>> {
    let n = x.nrows();
    if x.ncols() != n {
        return Err(Error::dimension("X", format!("expected square, got {}x{}", n, x.ncols())));
    }
    let mut h = Mat::<C64>::zeros(2 * n, 2 * n);
    for j in 0..n {
        for i in 0..n {
            let mut v = x[(i, j)];
            if i == j {
                v -= zeta;
            }
            h[(i, n + j)] = v;
            h[(n + j, i)] = v.conj();
        }
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c;

    fn scalar(re: f64) -> CMat {
        CMat::from_element(1, 1, c(re, 0.0))
    }

    fn iid(n: usize) -> KroneckerModel {
        KroneckerModel {
            structure: StructureSet {
                l: 1,
                alpha_tilde: vec![scalar(0.0)],
                beta_tilde: vec![scalar(1.0)],
                gamma_tilde: vec![scalar(0.0)],
            },
            variances: VarianceProfile::flat(n, vec![0.0], vec![1.0]),
            expectation: ExpectationDiagonal { a_tilde: vec![scalar(0.0); n] },
            kappa: Kappa::default(),
        }
    }

    #[test]
    fn flat_iid_is_admissible() {
        assert!(validate(&iid(4)).unwrap().is_admissible());
    }

    #[test]
    fn oversized_variance_is_reported_one_based() {
        let mut m = iid(4);
        let mut s = vec![0.0; 16];
        s[1] = 2.0;
        s[4] = 2.0;
        m.variances = VarianceProfile {
            n: 4,
            kind: VarianceKind::Explicit { s: vec![s], t: vec![vec![0.25; 16]] },
        };
        m.kappa.k1 = 1.0;
        let report = validate(&m).unwrap();
        let msgs: Vec<String> = report.violations.iter().map(|v| v.to_string()).collect();
        assert!(msgs.iter().any(|s| s.starts_with("s exceeds κ₁/N at (1,2,μ=1)")), "{msgs:?}");
    }

    #[test]
    fn asymmetric_variance_is_reported() {
        let mut m = iid(4);
        let mut s = vec![0.1; 16];
        s[1] = 0.2;
        m.variances = VarianceProfile {
            n: 4,
            kind: VarianceKind::Explicit { s: vec![s], t: vec![vec![0.1; 16]] },
        };
        let report = validate(&m).unwrap();
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, Violation::Symmetry { i: 0, j: 1, mu: 0, .. })));
    }

    #[test]
    fn ragged_input_is_a_dimension_error() {
        let mut m = iid(4);
        m.expectation.a_tilde.pop();
        assert!(matches!(validate(&m), Err(Error::Dimension { .. })));
        let mut m = iid(4);
        m.structure.beta_tilde[0] = CMat::zeros(2, 2);
        assert!(matches!(validate(&m), Err(Error::Dimension { .. })));
    }

    #[test]
    fn hermitize_zero_shift_zero_expectation() {
        let d = hermitize(&iid(3), c(0.0, 0.0)).unwrap();
        assert_eq!(d.k, 2);
        assert!(d.a.iter().all(|a| a == &CMat::zeros(2, 2)));
    }

    #[test]
    fn hermitize_block_placement() {
        let mut m = iid(1);
        m.structure.alpha_tilde[0] = scalar(1.0);
        let d = hermitize(&m, c(2.0, 0.0)).unwrap();
        let expect_alpha = CMat::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]);
        let expect_beta = CMat::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
        let expect_a = CMat::from_row_slice(2, 2, &[c(0.0, 0.0), c(-2.0, 0.0), c(-2.0, 0.0), c(0.0, 0.0)]);
        assert_eq!(d.alpha[0], expect_alpha);
        assert_eq!(d.beta[0], expect_beta);
        assert_eq!(d.a[0], expect_a);
    }

    #[test]
    fn hermitized_sample_is_hermitian() {
        let x = Mat::<C64>::from_fn(1, 1, |_, _| c(1.0, 0.0));
        let h = assemble_hermitized_sample(&x, c(0.0, 0.0)).unwrap();
        assert_eq!(h[(0, 1)], c(1.0, 0.0));
        assert_eq!(h[(1, 0)], c(1.0, 0.0));
        let h = assemble_hermitized_sample(&x, c(1.0, 0.0)).unwrap();
        assert!((0..2).all(|i| (0..2).all(|j| h[(i, j)] == c(0.0, 0.0))));
        let rect = Mat::<C64>::zeros(2, 3);
        assert!(assemble_hermitized_sample(&rect, c(0.0, 0.0)).is_err());
    }

    #[test]
    fn direct_form_requires_hermitian_model() {
        assert!(direct_hermitian(&iid(2)).is_err());
        let mut m = iid(2);
        m.structure.alpha_tilde[0] = scalar(1.0);
        m.structure.beta_tilde[0] = scalar(0.0);
        m.variances = VarianceProfile::flat(2, vec![1.0], vec![0.0]);
        let d = direct_hermitian(&m).unwrap();
        assert_eq!(d.k, 1);
    }
}
