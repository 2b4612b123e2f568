//! Solver for the vector Dyson equation `−1/m_j = z − a_j + 𝒮_j[m]`.
//!
//! Two iterations are available. [`Method::FixedPoint`] is the damped fixed-point map
//! `m ↦ (1−θ)m + θ·(−(z − a + 𝒮[m])⁻¹)`, which stays inside the Herglotz cone.
//! [`Method::Hybrid`] (the default) adds Newton steps in the range of 𝒮: writing
//! `𝒮 = B·C` with B injective, the unknown becomes `y = C[m] ∈ C^r` and the equation
//! `y = C[M(By)]` with `M(x)_j = −(z − a_j + x_j)⁻¹`. Newton converges quadratically
//! where the fixed-point map needs `O(Im m / η)` steps; when it fails (singular
//! Jacobian, loss of positivity, no decrease) the damped iteration takes over.
//!
//! For flat variance profiles 𝒮 only sees the block average of `m`, so indices with
//! identical `a_j` share one unknown. The solver groups them into weighted classes and
//! only expands to N blocks on output.

use nalgebra::{Cholesky, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, c, frobenius, identity, im_part, inverse, spectral_norm, CMat, C64};
use crate::model::HermitianDysonData;
use crate::superop::{sandwich_kernel, BlockVector, SelfEnergyOperator};

/// Geometric η-descent `η_k = start·ratio^k`, stopping at `floor`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EtaSchedule {
    pub start: f64,
    pub ratio: f64,
    pub floor: f64,
}

impl Default for EtaSchedule {
    fn default() -> Self {
        EtaSchedule {
            start: 8.0,
            ratio: 0.7,
            floor: 1e-5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Default)]
pub enum Init {
    /// `m₀ = i/(1+|z|)·1` in every block.
    #[default]
    Auto,
    Given(BlockVector),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    FixedPoint,
    #[default]
    Hybrid,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub damping_init: f64,
    pub damping_adapt: bool,
    pub eta_schedule: EtaSchedule,
    pub init: Init,
    pub method: Method,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-10,
            max_iter: 50_000,
            damping_init: 0.5,
            damping_adapt: true,
            eta_schedule: EtaSchedule::default(),
            init: Init::Auto,
            method: Method::Hybrid,
        }
    }
}

impl SolverOptions {
    pub fn check(&self) -> Result<()> {
        let s = &self.eta_schedule;
        if !(self.tol > 0.0) {
            return Err(Error::Contract(format!("tol must be positive, got {}", self.tol)));
        }
        if !(self.damping_init > 0.0 && self.damping_init <= 1.0) {
            return Err(Error::Contract(format!("damping_init must lie in (0, 1], got {}", self.damping_init)));
        }
        if !(s.ratio > 0.0 && s.ratio < 1.0) {
            return Err(Error::Contract(format!("eta ratio must lie in (0, 1), got {}", s.ratio)));
        }
        if !(s.start > 0.0 && s.floor > 0.0) {
            return Err(Error::Contract("eta schedule start and floor must be positive".into()));
        }
        Ok(())
    }
}

/// Public serialized summary of the options (the initial guess is not echoed).
#[derive(Clone, Debug, Serialize)]
pub struct SolverOptionsSummary {
    pub tol: f64,
    pub max_iter: usize,
    pub damping_init: f64,
    pub damping_adapt: bool,
    pub eta_schedule: EtaSchedule,
    pub method: Method,
}

impl From<&SolverOptions> for SolverOptionsSummary {
    fn from(o: &SolverOptions) -> Self {
        SolverOptionsSummary {
            tol: o.tol,
            max_iter: o.max_iter,
            damping_init: o.damping_init,
            damping_adapt: o.damping_adapt,
            eta_schedule: o.eta_schedule,
            method: o.method,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct MdeSolution {
    #[serde(serialize_with = "linalg::serialize_c64")]
    pub z: C64,
    pub m: BlockVector,
    /// `max_j |1 + (z − a_j + 𝒮_j[m]) m_j|` in spectral norm.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub min_im_eig: f64,
}

impl MdeSolution {
    /// `⟨Im m⟩/π`.
    pub fn rho(&self) -> f64 {
        self.m.avg_trace().im / std::f64::consts::PI
    }

    /// `max_j |Im m_j| / η`.
    pub fn max_im_over_eta(&self) -> f64 {
        max_im_norm(self.m.blocks()) / self.z.im
    }
}

/// One damped fixed-point step `(1−θ)m + θ·(−(z − a + 𝒮[m])⁻¹)`.
pub fn fixed_point_step(data: &HermitianDysonData, m: &BlockVector, z: C64, damping: f64) -> Result<BlockVector> {
    let op = SelfEnergyOperator::new(data);
    let s = op.apply(m)?;
    let blocks = m
        .blocks()
        .iter()
        .zip(s.blocks())
        .zip(&data.a)
        .enumerate()
        .map(|(j, ((mj, sj), aj))| {
            let hat = -inverse(&(identity(data.k) * z - aj + sj))
                .ok_or_else(|| Error::Singular(format!("z − a_{j} + 𝒮_{j}[m] is not invertible")))?;
            Ok(mj * c(1.0 - damping, 0.0) + hat * c(damping, 0.0))
        })
        .collect::<Result<Vec<_>>>()?;
    BlockVector::new(blocks)
}

/// `max_j |1 + (z − a_j + 𝒮_j[m]) m_j|` in spectral norm.
pub fn residual(data: &HermitianDysonData, m: &BlockVector, z: C64) -> Result<f64> {
    let s = SelfEnergyOperator::new(data).apply(m)?;
    Ok(m.blocks()
        .iter()
        .zip(s.blocks())
        .zip(&data.a)
        .map(|((mj, sj), aj)| {
            let k = data.k;
            spectral_norm(&(identity(k) + (identity(k) * z - aj + sj) * mj))
        })
        .fold(0.0, f64::max))
}

/// Solves at a single spectral parameter.
pub fn solve_at(data: &HermitianDysonData, z: C64, opts: &SolverOptions) -> Result<MdeSolution> {
    let init = match &opts.init {
        Init::Auto => None,
        Init::Given(m) => Some(m),
    };
    MdeSolver::for_init(data, init)?.solve_at(z, opts)
}

/// Warm-started η-descent at fixed `E`, returning one solution per target.
pub fn solve_continuation(
    data: &HermitianDysonData,
    e: f64,
    eta_targets: &[f64],
    opts: &SolverOptions,
) -> Result<Vec<MdeSolution>> {
    MdeSolver::new(data)?.solve_continuation(e, eta_targets, opts)
}

fn max_im_norm(blocks: &[CMat]) -> f64 {
    blocks
        .iter()
        .map(|b| linalg::hermitian_eigenvalues(&im_part(b)).last().copied().unwrap_or(0.0).abs())
        .fold(0.0, f64::max)
}

fn is_herglotz(blocks: &[CMat]) -> bool {
    blocks.iter().all(|b| Cholesky::new(im_part(b)).is_some())
}

fn min_im_eig(blocks: &[CMat]) -> f64 {
    blocks
        .iter()
        .map(|b| linalg::min_eigenvalue(&im_part(b)))
        .fold(f64::INFINITY, f64::min)
}

/// Largest system (in complex unknowns `N·K²`) for which a non-flat 𝒮 is
/// factorized densely to enable Newton steps.
pub const NEWTON_DENSE_LIMIT: usize = 1024;
const NEWTON_MAX_ITER: usize = 60;
/// Fixed-point steps between Newton retries in hybrid mode.
const NEWTON_RETRY_EVERY: usize = 200;
const MIN_DAMPING: f64 = 1e-4;

#[derive(Clone, Debug)]
enum SelfEnergyForm<'a> {
    /// `𝒮 = b·c` on node vectors flattened row-major per block.
    LowRank { b: CMat, c: CMat },
    Direct(SelfEnergyOperator<'a>),
}

/// Solver bound to one data pair, reusable across spectral parameters.
#[derive(Clone, Debug)]
pub struct MdeSolver<'a> {
    data: &'a HermitianDysonData,
    /// Representative `a` of each node.
    a: Vec<CMat>,
    /// Fraction of indices j in each node.
    weights: Vec<f64>,
    /// Node of each index j.
    node_of: Vec<usize>,
    se: SelfEnergyForm<'a>,
}

/// Solution on the node level (one block per class of indices).
#[derive(Clone, Debug)]
pub struct NodeSolution {
    pub z: C64,
    pub m: Vec<CMat>,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl NodeSolution {
    pub fn max_im_over_eta(&self) -> f64 {
        max_im_norm(&self.m) / self.z.im
    }
}

impl<'a> MdeSolver<'a> {
    pub fn new(data: &'a HermitianDysonData) -> Result<Self> {
        Self::for_init(data, None)
    }

    /// Node grouping is only valid when the initial guess is constant on classes, so a
    /// given initial guess that is not falls back to one node per index.
    pub fn for_init(data: &'a HermitianDysonData, init: Option<&BlockVector>) -> Result<Self> {
        if let Some(m) = init {
            if m.k() != data.k || m.n() != data.n {
                return Err(Error::dimension("init", "does not match the data dimensions"));
            }
        }
        let op = SelfEnergyOperator::new(data);
        let k = data.k;
        let kk = k * k;
        if let Some(kernel) = op.flat_kernel() {
            let mut a: Vec<CMat> = Vec::new();
            let mut counts: Vec<usize> = Vec::new();
            let mut reps: Vec<usize> = Vec::new();
            let mut node_of = Vec::with_capacity(data.n);
            for (j, aj) in data.a.iter().enumerate() {
                let same_init = |p: usize| init.is_none_or(|m| m.block(reps[p]) == m.block(j));
                match (0..a.len()).find(|&p| &a[p] == aj && same_init(p)) {
                    Some(p) => {
                        counts[p] += 1;
                        node_of.push(p);
                    }
                    None => {
                        a.push(aj.clone());
                        counts.push(1);
                        reps.push(j);
                        node_of.push(a.len() - 1);
                    }
                }
            }
            let nodes = a.len();
            let weights: Vec<f64> = counts.iter().map(|&ct| ct as f64 / data.n as f64).collect();
            let (u, v_adj) =
                low_rank(kernel).ok_or_else(|| Error::Eigensolver("SVD of the flat self-energy kernel failed".into()))?;
            let r = u.ncols();
            let mut b = CMat::zeros(nodes * kk, r);
            let mut cm = CMat::zeros(r, nodes * kk);
            for p in 0..nodes {
                b.view_mut((p * kk, 0), (kk, r)).copy_from(&u);
                cm.view_mut((0, p * kk), (r, kk)).copy_from(&(&v_adj * c(weights[p], 0.0)));
            }
            return Ok(MdeSolver {
                data,
                a,
                weights,
                node_of,
                se: SelfEnergyForm::LowRank { b, c: cm },
            });
        }
        let n = data.n;
        let se = if n * kk <= NEWTON_DENSE_LIMIT {
            let mat = op.materialize(NEWTON_DENSE_LIMIT)?;
            match low_rank(&mat) {
                Some((b, cm)) => SelfEnergyForm::LowRank { b, c: cm },
                None => SelfEnergyForm::Direct(op),
            }
        } else {
            SelfEnergyForm::Direct(op)
        };
        Ok(MdeSolver {
            data,
            a: data.a.clone(),
            weights: vec![1.0 / n as f64; n],
            node_of: (0..n).collect(),
            se,
        })
    }

    pub fn data(&self) -> &HermitianDysonData {
        self.data
    }

    pub fn node_count(&self) -> usize {
        self.a.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn k(&self) -> usize {
        self.data.k
    }

    pub fn auto_init(&self, z: C64) -> Vec<CMat> {
        vec![identity(self.k()) * (c(0.0, 1.0) / (1.0 + z.norm())); self.node_count()]
    }

    /// Restricts a full block vector to nodes (first index of each node).
    pub fn restrict(&self, m: &BlockVector) -> Vec<CMat> {
        let mut out: Vec<Option<CMat>> = vec![None; self.node_count()];
        for (j, &p) in self.node_of.iter().enumerate() {
            if out[p].is_none() {
                out[p] = Some(m.block(j).clone());
            }
        }
        out.into_iter().map(|b| b.expect("every node has a member")).collect()
    }

    pub fn expand(&self, m: &[CMat]) -> BlockVector {
        BlockVector::new(self.node_of.iter().map(|&p| m[p].clone()).collect()).expect("non-empty")
    }

    /// `⟨Im m⟩/π` from node blocks.
    pub fn rho(&self, m: &[CMat]) -> f64 {
        let k = self.k() as f64;
        m.iter().zip(&self.weights).map(|(b, w)| w * b.trace().im).sum::<f64>() / k / std::f64::consts::PI
    }

    fn vec_nodes(&self, m: &[CMat]) -> DVector<C64> {
        DVector::from_iterator(m.len() * self.k() * self.k(), m.iter().flat_map(|b| linalg::vec_row_major(b).collect::<Vec<_>>()))
    }

    fn unvec_nodes(&self, v: &DVector<C64>) -> Vec<CMat> {
        let k = self.k();
        v.as_slice().chunks(k * k).map(|ch| linalg::from_row_major(k, ch)).collect()
    }

    fn apply_se(&self, m: &[CMat]) -> Vec<CMat> {
        match &self.se {
            SelfEnergyForm::LowRank { b, c: cm } => self.unvec_nodes(&(b * (cm * self.vec_nodes(m)))),
            SelfEnergyForm::Direct(op) => op
                .apply_unchecked(&BlockVector::new(m.to_vec()).expect("non-empty"))
                .into_blocks(),
        }
    }

    /// `−(z − a_p + x_p)⁻¹` for every node.
    fn herglotz_map(&self, z: C64, x: &[CMat]) -> Option<Vec<CMat>> {
        let k = self.k();
        self.a
            .iter()
            .zip(x)
            .map(|(ap, xp)| inverse(&(identity(k) * z - ap + xp)).map(|inv| -inv))
            .collect()
    }

    /// Residual blocks `1 + (z − a + s) m` measured in Frobenius norm (an upper bound of
    /// the spectral norm) and in spectral norm.
    fn residual_of(&self, z: C64, m: &[CMat], s: &[CMat], spectral: bool) -> f64 {
        let k = self.k();
        m.iter()
            .zip(s)
            .zip(&self.a)
            .map(|((mp, sp), ap)| {
                let r = identity(k) + (identity(k) * z - ap + sp) * mp;
                if spectral {
                    spectral_norm(&r)
                } else {
                    frobenius(&r)
                }
            })
            .fold(0.0, f64::max)
    }

    pub fn residual(&self, z: C64, m: &[CMat]) -> f64 {
        let s = self.apply_se(m);
        self.residual_of(z, m, &s, true)
    }

    /// Solves at `z` with the initial guess from `opts.init`.
    pub fn solve_at(&self, z: C64, opts: &SolverOptions) -> Result<MdeSolution> {
        let init = match &opts.init {
            Init::Auto => self.auto_init(z),
            Init::Given(m) => {
                if m.k() != self.k() || m.n() != self.data.n {
                    return Err(Error::dimension("init", "does not match the data dimensions"));
                }
                self.restrict(m)
            }
        };
        let sol = self.solve_nodes(z, init, opts)?;
        self.finish(sol)
    }

    fn finish(&self, sol: NodeSolution) -> Result<MdeSolution> {
        let min_eig = min_im_eig(&sol.m);
        if sol.converged && !(min_eig > 0.0) {
            return Err(Error::Positivity(format!(
                "converged iterate at z = {} has min eigenvalue of Im m = {min_eig:e}",
                sol.z
            )));
        }
        Ok(MdeSolution {
            z: sol.z,
            m: self.expand(&sol.m),
            residual: sol.residual,
            iterations: sol.iterations,
            converged: sol.converged,
            min_im_eig: min_eig,
        })
    }

    /// Node-level solve. Never returns an unconverged result flagged as converged.
    pub fn solve_nodes(&self, z: C64, init: Vec<CMat>, opts: &SolverOptions) -> Result<NodeSolution> {
        opts.check()?;
        if !(z.im > 0.0) {
            return Err(Error::Contract(format!("Im z must be positive, got z = {z}")));
        }
        if init.len() != self.node_count() {
            return Err(Error::dimension("init", "node count mismatch"));
        }
        let newton_ok = opts.method == Method::Hybrid && matches!(self.se, SelfEnergyForm::LowRank { .. });
        let mut iterations = 0;
        if newton_ok {
            let (found, its) = self.newton(z, &init, opts.tol);
            iterations += its;
            if let Some((m, res)) = found {
                return Ok(NodeSolution {
                    z,
                    m,
                    residual: res,
                    iterations,
                    converged: true,
                });
            }
        }
        let mut m = init;
        let mut s = self.apply_se(&m);
        let mut res = self.residual_of(z, &m, &s, false);
        let mut theta = opts.damping_init;
        let mut accepted = 0;
        let mut fp_steps = 0;
        while fp_steps < opts.max_iter {
            if res <= opts.tol && is_herglotz(&m) {
                let spec = self.residual_of(z, &m, &s, true);
                return Ok(NodeSolution {
                    z,
                    m,
                    residual: spec,
                    iterations: iterations + fp_steps,
                    converged: true,
                });
            }
            if newton_ok && fp_steps > 0 && fp_steps % NEWTON_RETRY_EVERY == 0 {
                let (found, its) = self.newton(z, &m, opts.tol);
                iterations += its;
                if let Some((mn, r)) = found {
                    return Ok(NodeSolution {
                        z,
                        m: mn,
                        residual: r,
                        iterations: iterations + fp_steps,
                        converged: true,
                    });
                }
            }
            fp_steps += 1;
            let hat = self
                .herglotz_map(z, &s)
                .ok_or_else(|| Error::Singular(format!("z − a + 𝒮[m] is not invertible at z = {z}")))?;
            let cand: Vec<CMat> = m
                .iter()
                .zip(&hat)
                .map(|(mp, hp)| mp * c(1.0 - theta, 0.0) + hp * c(theta, 0.0))
                .collect();
            let s_cand = self.apply_se(&cand);
            let res_cand = self.residual_of(z, &cand, &s_cand, false);
            if opts.damping_adapt && res_cand > res && theta > MIN_DAMPING {
                theta = (theta * 0.5).max(MIN_DAMPING);
                accepted = 0;
                continue;
            }
            m = cand;
            s = s_cand;
            res = res_cand;
            if opts.damping_adapt {
                accepted += 1;
                if accepted >= 50 {
                    theta = opts.damping_init;
                    accepted = 0;
                }
            }
        }
        let converged = res <= opts.tol && is_herglotz(&m);
        let spec = self.residual_of(z, &m, &s, true);
        Ok(NodeSolution {
            z,
            m,
            residual: spec,
            iterations: iterations + fp_steps,
            converged,
        })
    }

    /// Newton only, without the fixed-point fallback. Used for warm starts from a nearby
    /// spectral parameter, where failure is cheap to detect and recover from.
    pub fn try_newton(&self, z: C64, init: &[CMat], tol: f64) -> Option<NodeSolution> {
        if !(z.im > 0.0) || init.len() != self.node_count() {
            return None;
        }
        let (found, iterations) = self.newton(z, init, tol);
        found.map(|(m, residual)| NodeSolution {
            z,
            m,
            residual,
            iterations,
            converged: true,
        })
    }

    /// Newton iteration in self-energy coordinates with backtracking. Returns the
    /// solution and its spectral residual on success, plus the iterations spent.
    fn newton(&self, z: C64, init: &[CMat], tol: f64) -> (Option<(Vec<CMat>, f64)>, usize) {
        let SelfEnergyForm::LowRank { b, c: cm } = &self.se else {
            return (None, 0);
        };
        let r = b.ncols();
        let eval = |y: &DVector<C64>| -> Option<(Vec<CMat>, DVector<C64>)> {
            let x = self.unvec_nodes(&(b * y));
            let m = self.herglotz_map(z, &x)?;
            let g = cm * self.vec_nodes(&m);
            Some((m, y - g))
        };
        let true_residual = |m: &[CMat], h: &DVector<C64>| -> f64 {
            // 1 + (z − a + 𝒮[m]) m = −(B h) m since z − a + B y = −m⁻¹.
            let bh = self.unvec_nodes(&(b * h));
            m.iter().zip(&bh).map(|(mp, ep)| frobenius(&(ep * mp))).fold(0.0, f64::max)
        };
        let mut y = cm * self.vec_nodes(init);
        let Some((mut m, mut h)) = eval(&y) else {
            return (None, 0);
        };
        if !is_herglotz(&m) {
            return (None, 0);
        }
        let mut hn = linalg::dvec_norm(&h);
        for it in 0..NEWTON_MAX_ITER {
            let res = true_residual(&m, &h);
            if res <= 0.1 * tol || (r == 0 && res <= tol) {
                return (self.accept(z, m, tol), it);
            }
            // dg/dy = C·M·B with M the block-diagonal kernel of e ↦ m e m.
            let kk = self.k() * self.k();
            let mut mb = CMat::zeros(b.nrows(), r);
            for (p, mp) in m.iter().enumerate() {
                let ker = sandwich_kernel(mp, mp);
                mb.rows_mut(p * kk, kk).copy_from(&(ker * b.rows(p * kk, kk)));
            }
            let jac = CMat::identity(r, r) - linalg::matmul(cm, &mb);
            let Some(delta) = linalg::lu_solve(&jac, &(-&h)) else {
                return (None, it + 1);
            };
            let mut t = 1.0;
            let mut stepped = false;
            while t >= 1e-4 {
                let y_new = &y + &delta * c(t, 0.0);
                if let Some((m_new, h_new)) = eval(&y_new) {
                    let hn_new = linalg::dvec_norm(&h_new);
                    if hn_new < (1.0 - 1e-4 * t) * hn && is_herglotz(&m_new) {
                        y = y_new;
                        m = m_new;
                        h = h_new;
                        hn = hn_new;
                        stepped = true;
                        break;
                    }
                }
                t *= 0.5;
            }
            if !stepped {
                // Stagnation at rounding level still counts when the residual is small enough.
                let res = true_residual(&m, &h);
                return (if res <= tol { self.accept(z, m, tol) } else { None }, it + 1);
            }
        }
        let res = true_residual(&m, &h);
        (if res <= tol { self.accept(z, m, tol) } else { None }, NEWTON_MAX_ITER)
    }

    fn accept(&self, z: C64, m: Vec<CMat>, tol: f64) -> Option<(Vec<CMat>, f64)> {
        if !is_herglotz(&m) {
            return None;
        }
        let s = self.apply_se(&m);
        let res = self.residual_of(z, &m, &s, true);
        (res <= tol).then_some((m, res))
    }

    /// η-levels visited when descending from the schedule start to the given targets.
    pub fn continuation_levels(eta_targets: &[f64], schedule: &EtaSchedule) -> Vec<(f64, Option<usize>)> {
        let mut levels = Vec::new();
        let Some(&first) = eta_targets.first() else {
            return levels;
        };
        let mut eta = schedule.start.max(first);
        let mut next = 0;
        loop {
            let hit = (eta == eta_targets[next]).then_some(next);
            levels.push((eta, hit));
            if hit.is_some() {
                next += 1;
                if next == eta_targets.len() {
                    break;
                }
            }
            eta = (eta * schedule.ratio).max(eta_targets[next]);
        }
        levels
    }

    pub fn solve_continuation(&self, e: f64, eta_targets: &[f64], opts: &SolverOptions) -> Result<Vec<MdeSolution>> {
        if eta_targets.is_empty() {
            return Ok(Vec::new());
        }
        if eta_targets.iter().any(|&t| !(t > 0.0)) || eta_targets.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Contract("eta targets must be positive and strictly decreasing".into()));
        }
        let mut out = Vec::with_capacity(eta_targets.len());
        let mut m: Option<Vec<CMat>> = None;
        let mut last_converged = None;
        for (eta, hit) in Self::continuation_levels(eta_targets, &opts.eta_schedule) {
            let z = c(e, eta);
            let init = m.take().unwrap_or_else(|| self.auto_init(z));
            let wrap = move |source: Error| Error::Continuation {
                eta,
                last_converged,
                source: Box::new(source),
            };
            let sol = self.solve_nodes(z, init, opts).map_err(wrap)?;
            if !sol.converged {
                return Err(wrap(Error::NoConvergence {
                    iterations: sol.iterations,
                    residual: sol.residual,
                }));
            }
            last_converged = Some(eta);
            m = Some(sol.m.clone());
            if hit.is_some() {
                out.push(self.finish(sol).map_err(wrap)?);
            }
        }
        Ok(out)
    }
}

/// Orthonormal range basis scaled by the singular values, and the matching co-range:
/// `mat ≈ u · v_adj` with rank equal to the number of singular values above
/// `1e−13·σ_max`.
fn low_rank(mat: &CMat) -> Option<(CMat, CMat)> {
    let (u, sv, v) = linalg::svd(mat)?;
    let smax = sv.iter().copied().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..sv.len()).filter(|&i| smax > 0.0 && sv[i] > 1e-13 * smax).collect();
    let r = keep.len();
    let mut bu = CMat::zeros(mat.nrows(), r);
    let mut cv = CMat::zeros(r, mat.ncols());
    for (col, &i) in keep.iter().enumerate() {
        bu.set_column(col, &(u.column(i) * c(sv[i], 0.0)));
        cv.set_row(col, &v.column(i).adjoint());
    }
    Some((bu, cv))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::VarianceProfile;

    fn sc(v: C64) -> CMat {
        CMat::from_element(1, 1, v)
    }

    fn wigner(n: usize) -> HermitianDysonData {
        HermitianDysonData::new(
            vec![CMat::zeros(1, 1); n],
            vec![sc(c(1.0, 0.0))],
            vec![sc(c(0.0, 0.0))],
            VarianceProfile::flat(n, vec![1.0], vec![0.0]),
        )
        .unwrap()
    }

    #[test]
    fn decoupled_single_step() {
        let d = wigner(2).with_variances(VarianceProfile::flat(2, vec![0.0], vec![0.0]));
        let m = fixed_point_step(&d, &BlockVector::zeros(1, 2), c(0.0, 1.0), 1.0).unwrap();
        assert!(m.blocks().iter().all(|b| (b[(0, 0)] - c(0.0, 1.0)).norm() < 1e-15));
        assert!(residual(&d, &m, c(0.0, 1.0)).unwrap() < 1e-15);
    }

    #[test]
    fn wigner_single_step_from_i() {
        let d = wigner(3);
        let m = fixed_point_step(&d, &BlockVector::constant(1, 3, c(0.0, 1.0)), c(0.0, 1.0), 1.0).unwrap();
        assert!((m.block(0)[(0, 0)] - c(0.0, 0.5)).norm() < 1e-15);
    }

    #[test]
    fn wigner_at_i_both_methods() {
        let d = wigner(4);
        let golden = (5f64.sqrt() - 1.0) / 2.0;
        for method in [Method::FixedPoint, Method::Hybrid] {
            let opts = SolverOptions {
                method,
                ..Default::default()
            };
            let sol = solve_at(&d, c(0.0, 1.0), &opts).unwrap();
            assert!(sol.converged, "{method:?}");
            assert!(sol.residual <= 1e-10);
            assert!((sol.m.block(2)[(0, 0)] - c(0.0, golden)).norm() < 1e-9, "{method:?}");
        }
    }

    #[test]
    fn continuation_levels_hit_targets() {
        let lv = MdeSolver::continuation_levels(&[1.0, 0.1], &EtaSchedule::default());
        assert_eq!(lv[0].0, 8.0);
        let hits: Vec<f64> = lv.iter().filter(|l| l.1.is_some()).map(|l| l.0).collect();
        assert_eq!(hits, vec![1.0, 0.1]);
        assert!(lv.windows(2).all(|w| w[1].0 < w[0].0));
    }

    #[test]
    fn rejects_bad_input() {
        let d = wigner(2);
        assert!(solve_at(&d, c(0.0, 0.0), &SolverOptions::default()).is_err());
        let bad = SolverOptions {
            damping_init: 0.0,
            ..Default::default()
        };
        assert!(solve_at(&d, c(0.0, 1.0), &bad).is_err());
        assert!(solve_continuation(&d, 0.0, &[0.1, 1.0], &SolverOptions::default()).is_err());
    }
}
