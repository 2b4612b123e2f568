//! The self-energy map 𝒮, the stability operator ℒ = Id − C_m 𝒮 and the symmetrized
//! operator 𝓕 = C_W C_√Im m 𝒮 C_√Im m C_W together with its Perron eigenmatrix.
//!
//! All operators act on [`BlockVector`]s, i.e. block-diagonal elements of
//! `C^{K×K} ⊗ C^{N×N}`. Inner products use the normalized trace pairing
//! `⟨r, t⟩ = (NK)⁻¹ Σ_j Tr(r_j* t_j)`.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, c, hermitian_eigh, identity, im_part, re_part, spectral_norm, CMat, C64};
use crate::model::{HermitianDysonData, VarianceKind};

/// Default cap on `N·K²` for dense operator materialization.
pub const DENSE_LIMIT: usize = 4096;

/// Eigenvalue clamp for matrix square roots and their inverses.
pub const EIG_FLOOR: f64 = 1e-14;

/// An N-vector of K×K complex matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockVector {
    k: usize,
    blocks: Vec<CMat>,
}

impl BlockVector {
    pub fn new(blocks: Vec<CMat>) -> Result<Self> {
        let k = blocks
            .first()
            .map(|b| b.nrows())
            .ok_or_else(|| Error::dimension("blocks", "need at least one block"))?;
        if let Some(j) = blocks.iter().position(|b| b.shape() != (k, k)) {
            return Err(Error::dimension(format!("blocks[{j}]"), format!("expected {k}x{k}")));
        }
        Ok(BlockVector { k, blocks })
    }

    pub fn zeros(k: usize, n: usize) -> Self {
        BlockVector {
            k,
            blocks: vec![CMat::zeros(k, k); n],
        }
    }

    /// `(x·1, …, x·1)`.
    pub fn constant(k: usize, n: usize, x: C64) -> Self {
        BlockVector {
            k,
            blocks: vec![identity(k) * x; n],
        }
    }

    pub fn identity(k: usize, n: usize) -> Self {
        Self::constant(k, n, c(1.0, 0.0))
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.blocks.len()
    }

    pub fn blocks(&self) -> &[CMat] {
        &self.blocks
    }

    pub fn block(&self, j: usize) -> &CMat {
        &self.blocks[j]
    }

    pub fn into_blocks(self) -> Vec<CMat> {
        self.blocks
    }

    pub fn map(&self, f: impl Fn(&CMat) -> CMat) -> BlockVector {
        BlockVector {
            k: self.k,
            blocks: self.blocks.iter().map(f).collect(),
        }
    }

    pub fn zip_map(&self, other: &BlockVector, f: impl Fn(&CMat, &CMat) -> CMat) -> BlockVector {
        BlockVector {
            k: self.k,
            blocks: self.blocks.iter().zip(&other.blocks).map(|(a, b)| f(a, b)).collect(),
        }
    }

    pub fn scale(&self, x: C64) -> BlockVector {
        self.map(|b| b * x)
    }

    pub fn add(&self, other: &BlockVector) -> BlockVector {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &BlockVector) -> BlockVector {
        self.zip_map(other, |a, b| a - b)
    }

    /// Normalized trace pairing `⟨self, other⟩`, antilinear in `self`.
    pub fn inner(&self, other: &BlockVector) -> C64 {
        let total: C64 = self
            .blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum::<C64>())
            .sum();
        total / (self.n() * self.k) as f64
    }

    /// `‖r‖_hs = ⟨r, r⟩^{1/2}`.
    pub fn hs_norm(&self) -> f64 {
        self.inner(self).re.max(0.0).sqrt()
    }

    /// `max_j |r_j|` in spectral norm.
    pub fn max_norm(&self) -> f64 {
        self.blocks.iter().map(spectral_norm).fold(0.0, f64::max)
    }

    /// Normalized trace `⟨1, r⟩`.
    pub fn avg_trace(&self) -> C64 {
        self.blocks.iter().map(|b| b.trace()).sum::<C64>() / (self.n() * self.k) as f64
    }

    pub fn im(&self) -> BlockVector {
        self.map(im_part)
    }

    pub fn re(&self) -> BlockVector {
        self.map(re_part)
    }

    /// Smallest eigenvalue over all `Im r_j`.
    pub fn min_im_eig(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| linalg::min_eigenvalue(&im_part(b)))
            .fold(f64::INFINITY, f64::min)
    }

    /// Row-major flattening, index `j·K² + row·K + col`.
    pub fn to_flat(&self) -> Vec<C64> {
        self.blocks.iter().flat_map(|b| linalg::vec_row_major(b).collect::<Vec<_>>()).collect()
    }

    pub fn from_flat(k: usize, data: &[C64]) -> BlockVector {
        BlockVector {
            k,
            blocks: data.chunks(k * k).map(|ch| linalg::from_row_major(k, ch)).collect(),
        }
    }

    /// Random block vector with i.i.d. standard complex Gaussian entries.
    pub fn random(k: usize, n: usize, rng: &mut impl rand::Rng) -> BlockVector {
        let blocks = (0..n)
            .map(|_| {
                CMat::from_fn(k, k, |_, _| {
                    let re: f64 = StandardNormal.sample(rng);
                    let im: f64 = StandardNormal.sample(rng);
                    c(re, im)
                })
            })
            .collect();
        BlockVector { k, blocks }
    }

    /// Random positive semidefinite block vector `g g*`.
    pub fn random_psd(k: usize, n: usize, rng: &mut impl rand::Rng) -> BlockVector {
        Self::random(k, n, rng).map(|g| g * g.adjoint())
    }
}

impl Serialize for BlockVector {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let repr: Vec<_> = self.blocks.iter().map(linalg::matrix_repr).collect();
        repr.serialize(s)
    }
}

/// The self-energy map of a data pair.
///
/// Flat profiles reduce to `𝒮_i[r] = Φ(⟨r⟩_N)` with `⟨r⟩_N` the block average, so Φ is
/// precomputed once as a K²×K² matrix and one application costs O(N·K² + K⁴).
#[derive(Clone, Debug)]
pub struct SelfEnergyOperator<'a> {
    data: &'a HermitianDysonData,
    flat_kernel: Option<CMat>,
    active_alpha: Vec<usize>,
    active_beta: Vec<usize>,
}

impl<'a> SelfEnergyOperator<'a> {
    pub fn new(data: &'a HermitianDysonData) -> Self {
        let nonzero = |m: &CMat| m.iter().any(|z| *z != c(0.0, 0.0));
        let mut op = SelfEnergyOperator {
            data,
            flat_kernel: None,
            active_alpha: (0..data.ell()).filter(|&mu| nonzero(&data.alpha[mu])).collect(),
            active_beta: (0..data.ell()).filter(|&nu| nonzero(&data.beta[nu])).collect(),
        };
        if let VarianceKind::Flat { s, t } = &data.variances.kind {
            let k = data.k;
            let mut kernel = CMat::zeros(k * k, k * k);
            for q in 0..k * k {
                let mut e = CMat::zeros(k, k);
                e[(q / k, q % k)] = c(1.0, 0.0);
                let img = op.flat_map(&e, s, t);
                for (p, v) in linalg::vec_row_major(&img).enumerate() {
                    kernel[(p, q)] = v;
                }
            }
            op.flat_kernel = Some(kernel);
        }
        op
    }

    pub fn data(&self) -> &HermitianDysonData {
        self.data
    }

    /// `Σ_μ s_μ α x α + Σ_ν t_ν (β x β* + β* x β)`.
    fn flat_map(&self, x: &CMat, s: &[f64], t: &[f64]) -> CMat {
        let d = self.data;
        let mut out = CMat::zeros(d.k, d.k);
        for &mu in &self.active_alpha {
            if s[mu] != 0.0 {
                let al = &d.alpha[mu];
                out += (al * x * al) * c(s[mu], 0.0);
            }
        }
        for &nu in &self.active_beta {
            if t[nu] != 0.0 {
                let b = &d.beta[nu];
                let bs = b.adjoint();
                out += (b * x * &bs + &bs * x * b) * c(t[nu], 0.0);
            }
        }
        out
    }

    /// The precomputed K²×K² matrix of Φ for flat profiles.
    pub fn flat_kernel(&self) -> Option<&CMat> {
        self.flat_kernel.as_ref()
    }

    pub fn apply(&self, r: &BlockVector) -> Result<BlockVector> {
        let d = self.data;
        if r.k() != d.k || r.n() != d.n {
            return Err(Error::dimension(
                "r",
                format!("expected {} blocks of {}x{}, got {} of {}x{}", d.n, d.k, d.k, r.n(), r.k(), r.k()),
            ));
        }
        Ok(self.apply_unchecked(r))
    }

    pub(crate) fn apply_unchecked(&self, r: &BlockVector) -> BlockVector {
        let d = self.data;
        let (k, n) = (d.k, d.n);
        if let Some(kernel) = &self.flat_kernel {
            let mut mean = CMat::zeros(k, k);
            for b in r.blocks() {
                mean += b;
            }
            mean /= c(n as f64, 0.0);
            let out = apply_kernel(kernel, k, &mean);
            return BlockVector {
                k,
                blocks: vec![out; n],
            };
        }
        let vp = &d.variances;
        let blocks = (0..n)
            .map(|i| {
                let mut out = CMat::zeros(k, k);
                for &mu in &self.active_alpha {
                    let mut acc = CMat::zeros(k, k);
                    for (kk, rk) in r.blocks().iter().enumerate() {
                        let w = vp.s(mu, i, kk);
                        if w != 0.0 {
                            acc += rk * c(w, 0.0);
                        }
                    }
                    let al = &d.alpha[mu];
                    out += al * acc * al;
                }
                for &nu in &self.active_beta {
                    let mut fwd = CMat::zeros(k, k);
                    let mut bwd = CMat::zeros(k, k);
                    for (kk, rk) in r.blocks().iter().enumerate() {
                        let wf = vp.t(nu, i, kk);
                        if wf != 0.0 {
                            fwd += rk * c(wf, 0.0);
                        }
                        let wb = vp.t(nu, kk, i);
                        if wb != 0.0 {
                            bwd += rk * c(wb, 0.0);
                        }
                    }
                    let b = &d.beta[nu];
                    let bs = b.adjoint();
                    out += b * fwd * &bs + &bs * bwd * b;
                }
                out
            })
            .collect();
        BlockVector { k, blocks }
    }
}

impl SelfEnergyOperator<'_> {
    /// Dense NK²×NK² matrix of 𝒮 in the row-major flat basis, assembled block by block
    /// from K²×K² sandwich kernels.
    pub fn materialize(&self, limit: usize) -> Result<CMat> {
        let d = self.data;
        let (k, n) = (d.k, d.n);
        let (kk, dim) = (k * k, n * k * k);
        if dim > limit {
            return Err(Error::TooLarge { size: dim, limit });
        }
        let mut out = CMat::zeros(dim, dim);
        if let Some(kernel) = &self.flat_kernel {
            let scaled = kernel / c(n as f64, 0.0);
            for i in 0..n {
                for j in 0..n {
                    out.view_mut((i * kk, j * kk), (kk, kk)).copy_from(&scaled);
                }
            }
            return Ok(out);
        }
        let alpha: Vec<(usize, CMat)> = self
            .active_alpha
            .iter()
            .map(|&mu| (mu, sandwich_kernel(&d.alpha[mu], &d.alpha[mu])))
            .collect();
        let beta: Vec<(usize, CMat, CMat)> = self
            .active_beta
            .iter()
            .map(|&nu| {
                let b = &d.beta[nu];
                let bs = b.adjoint();
                (nu, sandwich_kernel(b, &bs), sandwich_kernel(&bs, b))
            })
            .collect();
        let vp = &d.variances;
        for i in 0..n {
            for j in 0..n {
                let mut block = out.view_mut((i * kk, j * kk), (kk, kk));
                for (mu, ker) in &alpha {
                    let w = vp.s(*mu, i, j);
                    if w != 0.0 {
                        block += ker * c(w, 0.0);
                    }
                }
                for (nu, fwd, bwd) in &beta {
                    let (wf, wb) = (vp.t(*nu, i, j), vp.t(*nu, j, i));
                    if wf != 0.0 {
                        block += fwd * c(wf, 0.0);
                    }
                    if wb != 0.0 {
                        block += bwd * c(wb, 0.0);
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Matrix of `x ↦ a x b` on row-major vectorized K×K matrices.
pub(crate) fn sandwich_kernel(a: &CMat, b: &CMat) -> CMat {
    let k = a.nrows();
    CMat::from_fn(k * k, k * k, |p, q| a[(p / k, q / k)] * b[(q % k, p % k)])
}

pub(crate) fn apply_kernel(kernel: &CMat, k: usize, x: &CMat) -> CMat {
    let mut out = CMat::zeros(k, k);
    for p in 0..k * k {
        let mut acc = c(0.0, 0.0);
        for q in 0..k * k {
            acc += kernel[(p, q)] * x[(q / k, q % k)];
        }
        out[(p / k, p % k)] = acc;
    }
    out
}

/// `𝒮[r]`.
pub fn apply_self_energy(data: &HermitianDysonData, r: &BlockVector) -> Result<BlockVector> {
    SelfEnergyOperator::new(data).apply(r)
}

/// `‖𝒮‖` induced by the max norm, computed exactly as `max_i |𝒮_i[1]|`.
///
/// For positivity-preserving maps the norm is attained at the identity (Russo–Dye).
pub fn norm_self_energy_max(data: &HermitianDysonData) -> f64 {
    let op = SelfEnergyOperator::new(data);
    op.apply_unchecked(&BlockVector::identity(data.k, data.n)).max_norm()
}

/// `‖𝒮‖` induced by `‖·‖_hs`, the largest singular value of the materialized map.
pub fn norm_self_energy_hs(data: &HermitianDysonData) -> Result<f64> {
    let mat = SelfEnergyOperator::new(data).materialize(DENSE_LIMIT)?;
    Ok(crate::linalg::singular_values(&mat).into_iter().fold(0.0, f64::max))
}

/// Checks `⟨R, 𝒮T⟩ = ⟨𝒮R, T⟩` on random block vectors.
pub fn check_self_adjoint(data: &HermitianDysonData, trials: usize, tol: f64) -> bool {
    let op = SelfEnergyOperator::new(data);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5e1f_ad01);
    (0..trials.max(1)).all(|_| {
        let r = BlockVector::random(data.k, data.n, &mut rng);
        let t = BlockVector::random(data.k, data.n, &mut rng);
        let lhs = r.inner(&op.apply_unchecked(&t));
        let rhs = op.apply_unchecked(&r).inner(&t);
        (lhs - rhs).norm() <= tol * r.hs_norm() * t.hs_norm()
    })
}

/// Dense matrix of a linear map on block vectors in the row-major flat basis.
pub fn materialize(
    k: usize,
    n: usize,
    limit: usize,
    f: impl Fn(&BlockVector) -> BlockVector,
) -> Result<CMat> {
    let dim = n * k * k;
    if dim > limit {
        return Err(Error::TooLarge { size: dim, limit });
    }
    let mut out = CMat::zeros(dim, dim);
    let mut unit = vec![c(0.0, 0.0); dim];
    for q in 0..dim {
        unit[q] = c(1.0, 0.0);
        let img = f(&BlockVector::from_flat(k, &unit)).to_flat();
        unit[q] = c(0.0, 0.0);
        for (p, v) in img.into_iter().enumerate() {
            out[(p, q)] = v;
        }
    }
    Ok(out)
}

/// `ℒ[r] = r − m 𝒮[r] m`.
pub fn apply_stability(op: &SelfEnergyOperator<'_>, m: &BlockVector, r: &BlockVector) -> BlockVector {
    let s = op.apply_unchecked(r);
    r.zip_map(&s.zip_map(m, |sj, mj| mj * sj * mj), |rj, x| rj - x)
}

pub fn materialize_stability_operator(data: &HermitianDysonData, m: &BlockVector) -> Result<CMat> {
    materialize_stability_operator_with_limit(data, m, DENSE_LIMIT)
}

pub fn materialize_stability_operator_with_limit(
    data: &HermitianDysonData,
    m: &BlockVector,
    limit: usize,
) -> Result<CMat> {
    check_dims(data, m)?;
    let (k, n) = (data.k, data.n);
    let kk = k * k;
    let mut l = SelfEnergyOperator::new(data).materialize(limit)?;
    for i in 0..n {
        let mk = sandwich_kernel(m.block(i), m.block(i));
        let rows = l.rows(i * kk, kk).into_owned();
        l.rows_mut(i * kk, kk).copy_from(&(-(mk * rows)));
    }
    for p in 0..n * kk {
        l[(p, p)] += c(1.0, 0.0);
    }
    Ok(l)
}

/// `‖ℒ⁻¹‖` in the Hilbert–Schmidt norm, i.e. `1/σ_min` of the materialized operator.
pub fn linv_norm_hs(data: &HermitianDysonData, m: &BlockVector) -> Result<f64> {
    let l = materialize_stability_operator(data, m)?;
    let smin = crate::linalg::singular_values(&l).into_iter().fold(f64::INFINITY, f64::min);
    if smin < 1e-14 {
        return Err(Error::Singular(format!(
            "stability operator has σ_min = {smin:e}; spectral parameter is at the edge of the support"
        )));
    }
    Ok(1.0 / smin)
}

fn check_dims(data: &HermitianDysonData, m: &BlockVector) -> Result<()> {
    if m.k() != data.k || m.n() != data.n {
        return Err(Error::dimension("m", "does not match the data dimensions"));
    }
    Ok(())
}

/// Symmetrization of `m`: `T = (Im m)^{-1/2} Re m (Im m)^{-1/2} − i`, `U = T/|T|`, `W = |T|^{1/2}`.
#[derive(Clone, Debug)]
pub struct Symmetrization {
    pub sqrt_im: BlockVector,
    pub sqrt_im_inv: BlockVector,
    pub t: BlockVector,
    pub u: BlockVector,
    pub w: BlockVector,
    pub w_inv: BlockVector,
}

impl Symmetrization {
    pub fn new(m: &BlockVector) -> Result<Self> {
        let min_im = m.min_im_eig();
        if !(min_im > 1e-13) {
            return Err(Error::Positivity(format!(
                "Im m must be positive definite for the symmetrization, min eigenvalue {min_im:e}"
            )));
        }
        let k = m.k();
        let n = m.n();
        let mut parts: [Vec<CMat>; 6] = Default::default();
        for mj in m.blocks() {
            let im = im_part(mj);
            let sq = linalg::psd_sqrt(&im, EIG_FLOOR);
            let sq_inv = linalg::psd_inv_sqrt(&im, EIG_FLOOR);
            let h = re_part(&(&sq_inv * re_part(mj) * &sq_inv));
            let (vals, vecs) = hermitian_eigh(&h);
            let spectral = |f: &dyn Fn(f64) -> C64| {
                let mut scaled = vecs.clone();
                for (col, &v) in vals.iter().enumerate() {
                    let fv = f(v);
                    for r in 0..k {
                        scaled[(r, col)] *= fv;
                    }
                }
                scaled * vecs.adjoint()
            };
            let t = spectral(&|h| c(h, -1.0));
            let u = spectral(&|h| c(h, -1.0) / (h * h + 1.0).sqrt());
            let w = spectral(&|h| c((h * h + 1.0).powf(0.25), 0.0));
            let w_inv = spectral(&|h| c((h * h + 1.0).powf(-0.25), 0.0));
            for (slot, v) in parts.iter_mut().zip([sq, sq_inv, t, u, w, w_inv]) {
                slot.push(v);
            }
        }
        let [sqrt_im, sqrt_im_inv, t, u, w, w_inv] = parts.map(|blocks| BlockVector { k, blocks });
        debug_assert_eq!(sqrt_im.n(), n);
        Ok(Symmetrization {
            sqrt_im,
            sqrt_im_inv,
            t,
            u,
            w,
            w_inv,
        })
    }
}

/// `C_R[Q] = R Q R`, blockwise.
fn sandwich(r: &BlockVector, q: &BlockVector) -> BlockVector {
    q.zip_map(r, |qj, rj| rj * qj * rj)
}

/// `𝓕 = C_W C_√Im 𝒮 C_√Im C_W`.
pub fn apply_f_operator(op: &SelfEnergyOperator<'_>, sym: &Symmetrization, r: &BlockVector) -> BlockVector {
    let inner = sandwich(&sym.sqrt_im, &sandwich(&sym.w, r));
    let s = op.apply_unchecked(&inner);
    sandwich(&sym.w, &sandwich(&sym.sqrt_im, &s))
}

#[derive(Clone, Debug, Serialize)]
pub struct StabilityDiagnostics {
    /// `‖𝒮‖` induced by the max norm.
    pub norm_s_max: f64,
    /// `‖𝒮‖` induced by `‖·‖_hs`; absent when the dense limit is exceeded.
    pub norm_s_hs: Option<f64>,
    /// `‖ℒ⁻¹‖_hs`; absent when the dense limit is exceeded or ℒ is singular.
    pub norm_linv_hs: Option<f64>,
    /// `‖𝓕‖_hs`.
    pub norm_f: f64,
    /// `1 − ‖𝓕‖`.
    pub gap_f: f64,
    /// Right-hand side of the gap identity `η ⟨F, C_W[Im m]⟩ / ⟨F, W⁻²⟩`.
    pub gap_identity_rhs: f64,
    /// `|gap_f − gap_identity_rhs| / gap_f`.
    pub gap_identity_residual: f64,
    pub power_iterations: usize,
    #[serde(skip)]
    pub f: BlockVector,
    #[serde(skip)]
    pub w: BlockVector,
    #[serde(skip)]
    pub u: BlockVector,
    #[serde(skip)]
    pub t: BlockVector,
}

pub const POWER_TOL: f64 = 1e-10;
pub const POWER_MAX_ITER: usize = 10_000;

/// Perron eigenpair of 𝓕 by power iteration on the PSD cone.
///
/// The iteration runs on `Id + 𝓕`, which has the same Perron vector but no
/// eigenvalue of modulus equal to the top one with opposite sign (chiral data
/// produce a `−‖𝓕‖` eigenvalue that would make the plain iteration oscillate).
fn perron_pair(
    op: &SelfEnergyOperator<'_>,
    sym: &Symmetrization,
) -> Result<(f64, BlockVector, usize)> {
    let (k, n) = (op.data().k, op.data().n);
    let start = BlockVector::identity(k, n);
    let mut f = start.scale(c(1.0 / start.hs_norm(), 0.0));
    let mut lambda = f64::NAN;
    for it in 1..=POWER_MAX_ITER {
        let g = apply_f_operator(op, sym, &f);
        let next_lambda = f.inner(&g).re;
        let resid = g.sub(&f.scale(c(next_lambda, 0.0))).hs_norm();
        let shifted = g.add(&f);
        let norm = shifted.hs_norm();
        let converged = (next_lambda - lambda).abs() <= POWER_TOL && resid <= 1e-9 * next_lambda.abs().max(1.0);
        lambda = next_lambda;
        if converged || resid == 0.0 {
            return Ok((lambda, f, it));
        }
        f = shifted.scale(c(1.0 / norm, 0.0));
    }
    Err(Error::NoConvergence {
        iterations: POWER_MAX_ITER,
        residual: lambda,
    })
}

/// Full stability diagnostics at a solution `m(z)`.
pub fn f_operator_analysis(data: &HermitianDysonData, m: &BlockVector, z: C64) -> Result<StabilityDiagnostics> {
    check_dims(data, m)?;
    let op = SelfEnergyOperator::new(data);
    let sym = Symmetrization::new(m)?;
    let (norm_f, f, iters) = perron_pair(&op, &sym)?;
    let gap = 1.0 - norm_f;
    let numer = f.inner(&sandwich(&sym.w, &m.im())).re;
    let w_inv_sq = sym.w_inv.map(|w| w * w);
    let denom = f.inner(&w_inv_sq).re;
    let rhs = z.im * numer / denom;
    let residual = (gap - rhs).abs() / gap.abs().max(f64::MIN_POSITIVE);
    let norm_s_hs = norm_self_energy_hs(data).ok();
    let norm_linv_hs = linv_norm_hs(data, m).ok();
    Ok(StabilityDiagnostics {
        norm_s_max: norm_self_energy_max(data),
        norm_s_hs,
        norm_linv_hs,
        norm_f,
        gap_f: gap,
        gap_identity_rhs: rhs,
        gap_identity_residual: residual,
        power_iterations: iters,
        f,
        w: sym.w,
        u: sym.u,
        t: sym.t,
    })
}

/// Compares `ℒ[R]` with `C_√Im C_W C_U* (C_U − 𝓕) C_W⁻¹ C_√Im⁻¹ [R]` on random R.
pub fn verify_decomposition(
    data: &HermitianDysonData,
    m: &BlockVector,
    z: C64,
    trials: usize,
    tol: f64,
) -> Result<bool> {
    let _ = z;
    check_dims(data, m)?;
    let op = SelfEnergyOperator::new(data);
    let sym = Symmetrization::new(m)?;
    let u_adj = sym.u.map(|u| u.adjoint());
    let mut rng = ChaCha8Rng::seed_from_u64(0xdec0_0001);
    for _ in 0..trials.max(1) {
        let r = BlockVector::random(data.k, data.n, &mut rng);
        let lhs = apply_stability(&op, m, &r);
        let x = sandwich(&sym.w_inv, &sandwich(&sym.sqrt_im_inv, &r));
        let y = sandwich(&sym.u, &x).sub(&apply_f_operator(&op, &sym, &x));
        let rhs = sandwich(&sym.sqrt_im, &sandwich(&sym.w, &sandwich(&u_adj, &y)));
        let scale = lhs.hs_norm().max(rhs.hs_norm()).max(f64::MIN_POSITIVE);
        if lhs.sub(&rhs).hs_norm() / scale > tol {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Largest Frobenius deviation between a materialized operator and direct application.
pub fn materialization_defect(mat: &CMat, k: usize, f: impl Fn(&BlockVector) -> BlockVector, v: &BlockVector) -> f64 {
    let flat = v.to_flat();
    let x = DMatrix::from_column_slice(flat.len(), 1, &flat);
    let via_mat = mat * x;
    let direct = BlockVector::from_flat(k, &f(v).to_flat()).to_flat();
    let diff: f64 = via_mat
        .iter()
        .zip(direct.iter())
        .map(|(a, b)| (a - b).norm_sqr())
        .sum::<f64>()
        .sqrt();
    let scale = direct.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    diff / scale
}
