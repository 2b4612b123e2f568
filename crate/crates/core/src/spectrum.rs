//! Density of states, support scans and self-consistent pseudospectra.
//!
//! Support detection rests on the Stieltjes representation
//! `Im m_j(E + iη)/η = ∫ v_j(dx) / ((x − E)² + η²)`: the ratio is nondecreasing as η ↓ 0,
//! diverges inside the support and stays bounded by `dist(E, supp)^{-2}` outside. A
//! point is IN when the ratio reaches a threshold at the η floor; since the ratio only
//! grows along the descent, reaching the threshold at a larger η already decides IN.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, c, CMat, C64};
use crate::mde::{MdeSolver, Method, SolverOptions, SolverOptionsSummary};
use crate::model::{hermitize_unchecked, validate, HermitianDysonData, KroneckerModel};
use crate::superop::norm_self_energy_max;

/// Parameters of threshold-based support classification.
#[derive(Clone, Debug)]
pub struct ScanOptions {
    pub solver: SolverOptions,
    pub eta_floor: f64,
    pub in_threshold: f64,
}

impl Default for ScanOptions {
    fn default() -> Self {
        ScanOptions {
            solver: SolverOptions::default(),
            eta_floor: 1e-5,
            in_threshold: 50.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PointClass {
    In,
    Out,
    /// The solver failed somewhere along the descent. Treated as IN by every consumer.
    Unknown,
}

impl PointClass {
    pub fn counts_as_in(self) -> bool {
        self != PointClass::Out
    }
}

/// Outcome of one η-descent at fixed E.
#[derive(Clone, Debug)]
pub struct Probe {
    /// `max_j |Im m_j| / η` at the last η solved.
    pub value: f64,
    /// η at which the descent stopped (the floor unless it exited early).
    pub eta: f64,
    /// `⟨Im m⟩/π` at that η.
    pub rho: f64,
    /// False when some solve along the descent failed.
    pub ok: bool,
    /// Node solution at the floor, when the descent reached it.
    floor_solution: Option<Vec<CMat>>,
}

impl Probe {
    pub fn classify(&self, threshold: f64) -> PointClass {
        if !self.ok {
            PointClass::Unknown
        } else if self.value >= threshold {
            PointClass::In
        } else {
            PointClass::Out
        }
    }

    /// `√(η / (π ρ))`, an upper bound on `dist(E, supp ρ)`.
    pub fn certificate(&self) -> f64 {
        if self.ok && self.rho > 0.0 {
            (self.eta / (PI * self.rho)).sqrt()
        } else {
            f64::INFINITY
        }
    }
}

/// Descends in η at fixed `e` and stops early once the ratio reaches `stop_at`.
///
/// With a warm start (the floor solution of a nearby E) a direct Newton solve at the
/// floor is tried first; the full descent is the fallback.
pub fn probe(solver: &MdeSolver<'_>, e: f64, stop_at: f64, opts: &ScanOptions, warm: Option<&[CMat]>) -> Probe {
    let floor = opts.eta_floor;
    if let Some(w) = warm.filter(|_| opts.solver.method == Method::Hybrid) {
        if let Some(sol) = solver.try_newton(c(e, floor), w, opts.solver.tol) {
            return Probe {
                value: sol.max_im_over_eta(),
                eta: floor,
                rho: solver.rho(&sol.m),
                ok: true,
                floor_solution: Some(sol.m),
            };
        }
    }
    let mut m: Option<Vec<CMat>> = None;
    let mut last = Probe {
        value: f64::NAN,
        eta: f64::NAN,
        rho: f64::NAN,
        ok: false,
        floor_solution: None,
    };
    for (eta, _) in MdeSolver::continuation_levels(&[floor], &opts.solver.eta_schedule) {
        let z = c(e, eta);
        let init = m.take().unwrap_or_else(|| solver.auto_init(z));
        let sol = match solver.solve_nodes(z, init, &opts.solver) {
            Ok(s) if s.converged => s,
            _ => {
                last.ok = false;
                last.eta = eta;
                return last;
            }
        };
        last = Probe {
            value: sol.max_im_over_eta(),
            eta,
            rho: solver.rho(&sol.m),
            ok: true,
            floor_solution: None,
        };
        if last.value >= stop_at {
            return last;
        }
        m = Some(sol.m);
    }
    last.floor_solution = m;
    last
}

/// Self-consistent density of states sampled along a real grid at fixed η.
#[derive(Clone, Debug, Serialize)]
pub struct DosCurve {
    pub e_grid: Vec<f64>,
    pub eta: f64,
    pub rho: Vec<f64>,
    pub max_im_over_eta: Vec<f64>,
    pub dist_certificates: Vec<f64>,
    /// Grid points where the solver failed; their values are NaN.
    pub failures: usize,
}

impl DosCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("E,rho,max_im_over_eta,dist_certificate\n");
        for i in 0..self.e_grid.len() {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                self.e_grid[i], self.rho[i], self.max_im_over_eta[i], self.dist_certificates[i]
            );
        }
        out
    }

    /// Normalized cumulative distribution on the grid by trapezoid quadrature; NaN
    /// entries are treated as zero density.
    pub fn cumulative(&self) -> Vec<f64> {
        let mut cdf = vec![0.0; self.e_grid.len()];
        for i in 1..self.e_grid.len() {
            let h = self.e_grid[i] - self.e_grid[i - 1];
            let r = |x: f64| if x.is_finite() { x } else { 0.0 };
            cdf[i] = cdf[i - 1] + 0.5 * h * (r(self.rho[i]) + r(self.rho[i - 1]));
        }
        if let Some(&total) = cdf.last() {
            if total > 0.0 {
                cdf.iter_mut().for_each(|v| *v /= total);
            }
        }
        cdf
    }
}

/// `ρ(z) = ⟨Im m(z)⟩/π`, solved by continuation down to `Im z`.
pub fn rho_at(data: &HermitianDysonData, z: C64) -> Result<f64> {
    rho_at_with(data, z, &SolverOptions::default())
}

pub fn rho_at_with(data: &HermitianDysonData, z: C64, opts: &SolverOptions) -> Result<f64> {
    if !(z.im > 0.0) {
        return Err(Error::Contract(format!("Im z must be positive, got z = {z}")));
    }
    let sol = MdeSolver::new(data)?.solve_continuation(z.re, &[z.im], opts)?;
    Ok(sol[0].rho().max(0.0))
}

/// DOS along `e_grid` at height `eta`, warm-started left to right.
pub fn compute_dos(data: &HermitianDysonData, e_grid: &[f64], eta: f64, opts: &SolverOptions) -> Result<DosCurve> {
    if !(eta > 0.0) {
        return Err(Error::Contract(format!("eta must be positive, got {eta}")));
    }
    let solver = MdeSolver::new(data)?;
    let mut curve = DosCurve {
        e_grid: e_grid.to_vec(),
        eta,
        rho: Vec::with_capacity(e_grid.len()),
        max_im_over_eta: Vec::with_capacity(e_grid.len()),
        dist_certificates: Vec::with_capacity(e_grid.len()),
        failures: 0,
    };
    let mut prev: Option<Vec<CMat>> = None;
    for &e in e_grid {
        let z = c(e, eta);
        let warm = prev.as_ref().filter(|_| opts.method == Method::Hybrid).and_then(|m| solver.try_newton(z, m, opts.tol));
        let sol = match warm {
            Some(s) => Some(s),
            None => solver
                .solve_continuation(e, &[eta], opts)
                .ok()
                .map(|v| solver_nodes(&solver, &v[0])),
        };
        match sol {
            Some(s) => {
                let rho = solver.rho(&s.m).max(0.0);
                curve.rho.push(rho);
                curve.max_im_over_eta.push(s.max_im_over_eta());
                curve
                    .dist_certificates
                    .push(if rho > 0.0 { (eta / (PI * rho)).sqrt() } else { f64::INFINITY });
                prev = Some(s.m);
            }
            None => {
                curve.failures += 1;
                curve.rho.push(f64::NAN);
                curve.max_im_over_eta.push(f64::NAN);
                curve.dist_certificates.push(f64::NAN);
                prev = None;
            }
        }
    }
    Ok(curve)
}

fn solver_nodes(solver: &MdeSolver<'_>, sol: &crate::mde::MdeSolution) -> crate::mde::NodeSolution {
    crate::mde::NodeSolution {
        z: sol.z,
        m: solver.restrict(&sol.m),
        residual: sol.residual,
        iterations: sol.iterations,
        converged: sol.converged,
    }
}

/// `[min spec a − 2‖𝒮‖^{1/2}, max spec a + 2‖𝒮‖^{1/2}]`, which contains `supp ρ`.
pub fn support_bracket(data: &HermitianDysonData) -> Result<(f64, f64)> {
    if !data.a_is_hermitian() {
        return Err(Error::Contract("support bracket needs Hermitian a_j".into()));
    }
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for aj in &data.a {
        let ev = linalg::hermitian_eigenvalues(aj);
        lo = lo.min(ev[0]);
        hi = hi.max(ev[ev.len() - 1]);
    }
    let half = 2.0 * norm_self_energy_max(data).sqrt();
    Ok((lo - half, hi + half))
}

/// Uniform grid of `points` energies over the support bracket widened by `widen` times
/// its length on each side.
pub fn bracket_grid(data: &HermitianDysonData, widen: f64, points: usize) -> Result<Vec<f64>> {
    if points < 2 {
        return Err(Error::Contract("grid needs at least two points".into()));
    }
    let (lo, hi) = support_bracket(data)?;
    let pad = widen * (hi - lo).max(1e-3);
    let (lo, hi) = (lo - pad, hi + pad);
    let h = (hi - lo) / (points - 1) as f64;
    Ok((0..points).map(|k| lo + k as f64 * h).collect())
}

#[derive(Clone, Debug, Serialize)]
pub struct SupportPoint {
    pub e: f64,
    pub class: PointClass,
    pub max_im_over_eta: f64,
    /// Upper bound on the distance from E to the support, where it certifies closeness.
    pub certificate: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SupportEstimate {
    pub intervals: Vec<(f64, f64)>,
    pub eta_floor: f64,
    pub in_threshold: f64,
    pub bracket: (f64, f64),
    pub points: Vec<SupportPoint>,
}

impl SupportEstimate {
    pub fn unknown_count(&self) -> usize {
        self.points.iter().filter(|p| p.class == PointClass::Unknown).count()
    }
}

/// Classifies every grid point and merges IN runs (dilated by one grid step on each side)
/// into intervals clipped to the bracket.
pub fn estimate_support(
    data: &HermitianDysonData,
    e_grid: &[f64],
    eta_floor: f64,
    in_threshold: f64,
    opts: &SolverOptions,
) -> Result<SupportEstimate> {
    let scan = ScanOptions {
        solver: opts.clone(),
        eta_floor,
        in_threshold,
    };
    if !(eta_floor > 0.0) {
        return Err(Error::Contract(format!("eta_floor must be positive, got {eta_floor}")));
    }
    if e_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Contract("E grid must be strictly increasing".into()));
    }
    let bracket = support_bracket(data)?;
    let solver = MdeSolver::new(data)?;
    let mut points = Vec::with_capacity(e_grid.len());
    let mut warm: Option<Vec<CMat>> = None;
    for &e in e_grid {
        if e < bracket.0 || e > bracket.1 {
            points.push(SupportPoint {
                e,
                class: PointClass::Out,
                max_im_over_eta: 0.0,
                certificate: f64::INFINITY,
            });
            warm = None;
            continue;
        }
        let p = probe(&solver, e, in_threshold, &scan, warm.as_deref());
        warm = p.floor_solution.clone();
        points.push(SupportPoint {
            e,
            class: p.classify(in_threshold),
            max_im_over_eta: p.value,
            certificate: p.certificate(),
        });
    }
    let intervals = merge_runs(&points, bracket);
    Ok(SupportEstimate {
        intervals,
        eta_floor,
        in_threshold,
        bracket,
        points,
    })
}

fn merge_runs(points: &[SupportPoint], bracket: (f64, f64)) -> Vec<(f64, f64)> {
    let n = points.len();
    let step = |i: usize, dir: isize| -> f64 {
        let j = i as isize + dir;
        if j >= 0 && (j as usize) < n {
            (points[j as usize].e - points[i].e).abs()
        } else if n > 1 {
            (points[1].e - points[0].e).abs().max((points[n - 1].e - points[n - 2].e).abs())
        } else {
            0.0
        }
    };
    let mut out: Vec<(f64, f64)> = Vec::new();
    let mut i = 0;
    while i < n {
        if !points[i].class.counts_as_in() {
            i += 1;
            continue;
        }
        let start = i;
        while i + 1 < n && points[i + 1].class.counts_as_in() {
            i += 1;
        }
        let lo = (points[start].e - step(start, -1)).max(bracket.0);
        let hi = (points[i].e + step(i, 1)).min(bracket.1);
        match out.last_mut() {
            Some(last) if lo <= last.1 => last.1 = last.1.max(hi),
            _ => out.push((lo, hi)),
        }
        i += 1;
    }
    out
}

/// Options for `dist(0, supp ρ^ζ)` scans.
#[derive(Clone, Debug)]
pub struct Dist0Options {
    pub scan: ScanOptions,
    /// Scan resolution in E.
    pub step: f64,
    /// Largest E scanned; `None` scans one step past the support bracket. Beyond it the
    /// distance is reported as +∞.
    pub max_e: Option<f64>,
}

impl Dist0Options {
    /// Resolution ε/4 and a scan just wide enough to decide `dist ≤ ε`.
    pub fn for_epsilon(epsilon: f64) -> Self {
        let step = epsilon / 4.0;
        Dist0Options {
            scan: ScanOptions::default(),
            step,
            max_e: Some(epsilon + step),
        }
    }
}

/// Result of one ζ-point scan.
#[derive(Clone, Debug, Serialize)]
pub struct Dist0Scan {
    /// Smallest IN scan point minus one step (clamped at 0); +∞ if none in range.
    pub dist0: f64,
    /// Some scan point was UNKNOWN.
    pub unknown: bool,
    /// `max_j |Im m_j(iη)| / η` at the floor (or at the early exit, if that already
    /// exceeded every requested threshold).
    pub tilde_value: f64,
}

/// Scans `E = 0, h, 2h, …` on the data of one ζ. `tilde_threshold` extends the early
/// exit at E = 0 so the imaginary-axis ratio can be compared against it.
pub fn scan_dist0(solver: &MdeSolver<'_>, opts: &Dist0Options, max_e: f64, tilde_threshold: f64) -> Dist0Scan {
    let h = opts.step;
    let t = opts.scan.in_threshold;
    let mut unknown = false;
    let mut warm: Option<Vec<CMat>> = None;
    let mut tilde_value = f64::NAN;
    let mut k = 0usize;
    loop {
        let e = k as f64 * h;
        if e > max_e * (1.0 + 1e-12) {
            return Dist0Scan {
                dist0: f64::INFINITY,
                unknown,
                tilde_value,
            };
        }
        let stop = if k == 0 { t.max(tilde_threshold) } else { t };
        let p = probe(solver, e, stop, &opts.scan, warm.as_deref());
        if k == 0 {
            tilde_value = if p.ok { p.value } else { f64::INFINITY };
        }
        let class = p.classify(t);
        if class == PointClass::Unknown {
            unknown = true;
        }
        if class.counts_as_in() {
            return Dist0Scan {
                dist0: (e - h).max(0.0),
                unknown,
                tilde_value,
            };
        }
        warm = p.floor_solution;
        k += 1;
    }
}

/// `dist(0, supp ρ^ζ)` scanning only E ≥ 0 (ρ^ζ is symmetric about 0).
pub fn dist0_selfconsistent(model: &KroneckerModel, zeta: C64, opts: &Dist0Options) -> Result<f64> {
    if !(opts.step > 0.0) {
        return Err(Error::Contract("scan step must be positive".into()));
    }
    validate(model)?.into_result()?;
    let data = hermitize_unchecked(model, zeta);
    let max_e = match opts.max_e {
        Some(v) => v,
        None => support_bracket(&data)?.1 + opts.step,
    };
    let solver = MdeSolver::new(&data)?;
    Ok(scan_dist0(&solver, opts, max_e, 0.0).dist0)
}

/// Rectangular grid of ζ values; points are ordered with the imaginary index outer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ZetaGrid {
    pub re_min: f64,
    pub re_max: f64,
    pub re_count: usize,
    pub im_min: f64,
    pub im_max: f64,
    pub im_count: usize,
}

fn axis(min: f64, max: f64, count: usize, i: usize) -> f64 {
    if count <= 1 {
        min
    } else {
        min + (max - min) * i as f64 / (count - 1) as f64
    }
}

impl ZetaGrid {
    pub fn len(&self) -> usize {
        self.re_count * self.im_count
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn re_step(&self) -> f64 {
        if self.re_count > 1 {
            (self.re_max - self.re_min) / (self.re_count - 1) as f64
        } else {
            0.0
        }
    }

    pub fn im_step(&self) -> f64 {
        if self.im_count > 1 {
            (self.im_max - self.im_min) / (self.im_count - 1) as f64
        } else {
            0.0
        }
    }

    pub fn point(&self, idx: usize) -> C64 {
        let (ii, ri) = (idx / self.re_count, idx % self.re_count);
        c(
            axis(self.re_min, self.re_max, self.re_count, ri),
            axis(self.im_min, self.im_max, self.im_count, ii),
        )
    }

    pub fn points(&self) -> Vec<C64> {
        (0..self.len()).map(|i| self.point(i)).collect()
    }

    /// Indices of the (up to 8) grid neighbors of `idx`.
    pub fn neighbors(&self, idx: usize) -> Vec<usize> {
        let (ii, ri) = ((idx / self.re_count) as isize, (idx % self.re_count) as isize);
        let mut out = Vec::with_capacity(8);
        for di in -1..=1 {
            for dr in -1..=1 {
                if di == 0 && dr == 0 {
                    continue;
                }
                let (a, b) = (ii + di, ri + dr);
                if a >= 0 && b >= 0 && (a as usize) < self.im_count && (b as usize) < self.re_count {
                    out.push(a as usize * self.re_count + b as usize);
                }
            }
        }
        out
    }
}

impl FromStr for ZetaGrid {
    type Err = Error;

    /// `re_min:re_max:count,im_min:im_max:count`
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parse(format!("grid `{s}` is not of the form re_min:re_max:count,im_min:im_max:count"));
        let parts: Vec<&str> = s.split(',').collect();
        if parts.len() != 2 {
            return Err(bad());
        }
        let axis = |p: &str| -> Result<(f64, f64, usize)> {
            let f: Vec<&str> = p.split(':').map(str::trim).collect();
            if f.len() != 3 {
                return Err(bad());
            }
            let lo: f64 = f[0].parse().map_err(|_| bad())?;
            let hi: f64 = f[1].parse().map_err(|_| bad())?;
            let n: usize = f[2].parse().map_err(|_| bad())?;
            if n == 0 || !lo.is_finite() || !hi.is_finite() || hi < lo {
                return Err(bad());
            }
            Ok((lo, hi, n))
        };
        let (re_min, re_max, re_count) = axis(parts[0])?;
        let (im_min, im_max, im_count) = axis(parts[1])?;
        Ok(ZetaGrid {
            re_min,
            re_max,
            re_count,
            im_min,
            im_max,
            im_count,
        })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PseudospectrumGrid {
    pub zeta_grid: ZetaGrid,
    pub epsilon: f64,
    pub dist0: Vec<f64>,
    pub member: Vec<bool>,
    pub member_tilde: Vec<bool>,
    pub unknown: Vec<bool>,
    pub tilde_value: Vec<f64>,
    pub eta_floor: f64,
    pub in_threshold: f64,
    pub tilde_threshold: f64,
    pub scan_step: f64,
    pub scan_max_e: f64,
    pub solver: SolverOptionsSummary,
}

impl PseudospectrumGrid {
    pub fn unknown_count(&self) -> usize {
        self.unknown.iter().filter(|&&u| u).count()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("re_zeta,im_zeta,dist0,member,member_tilde\n");
        for i in 0..self.dist0.len() {
            let z = self.zeta_grid.point(i);
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                z.re, z.im, self.dist0[i], self.member[i] as u8, self.member_tilde[i] as u8
            );
        }
        out
    }
}

/// Pseudospectrum masks for several ε from one shared scan, so that the masks are
/// nested by construction. The scan uses resolution `min ε / 4` (unless `step` is
/// given) and extends to `max ε + step`.
pub fn pseudospectrum_family(
    model: &KroneckerModel,
    grid: &ZetaGrid,
    epsilons: &[f64],
    scan: &ScanOptions,
    step: Option<f64>,
) -> Result<Vec<PseudospectrumGrid>> {
    if grid.is_empty() {
        return Err(Error::Contract("ζ grid is empty".into()));
    }
    if epsilons.is_empty() || epsilons.iter().any(|&e| !(e > 0.0)) {
        return Err(Error::Contract("epsilon values must be positive".into()));
    }
    validate(model)?.into_result()?;
    let eps_min = epsilons.iter().copied().fold(f64::INFINITY, f64::min);
    let eps_max = epsilons.iter().copied().fold(0.0, f64::max);
    let step = step.unwrap_or(eps_min / 4.0);
    let max_e = eps_max + step;
    let tilde_max = epsilons.iter().map(|e| 1.0 / e).fold(0.0, f64::max);
    let dopts = Dist0Options {
        scan: scan.clone(),
        step,
        max_e: Some(max_e),
    };
    let scans: Vec<Result<Dist0Scan>> = (0..grid.len())
        .into_par_iter()
        .map(|idx| {
            let data = hermitize_unchecked(model, grid.point(idx));
            let solver = MdeSolver::new(&data)?;
            Ok(scan_dist0(&solver, &dopts, max_e, tilde_max))
        })
        .collect();
    let scans: Vec<Dist0Scan> = scans.into_iter().collect::<Result<_>>()?;
    Ok(epsilons
        .iter()
        .map(|&eps| PseudospectrumGrid {
            zeta_grid: *grid,
            epsilon: eps,
            dist0: scans.iter().map(|s| s.dist0).collect(),
            member: scans.iter().map(|s| s.dist0 <= eps).collect(),
            member_tilde: scans.iter().map(|s| s.tilde_value >= 1.0 / eps).collect(),
            unknown: scans.iter().map(|s| s.unknown).collect(),
            tilde_value: scans.iter().map(|s| s.tilde_value).collect(),
            eta_floor: scan.eta_floor,
            in_threshold: scan.in_threshold,
            tilde_threshold: 1.0 / eps,
            scan_step: step,
            scan_max_e: max_e,
            solver: (&scan.solver).into(),
        })
        .collect())
}

/// Self-consistent ε-pseudospectrum on a ζ grid.
pub fn pseudospectrum(
    model: &KroneckerModel,
    grid: &ZetaGrid,
    epsilon: f64,
    scan: &ScanOptions,
) -> Result<PseudospectrumGrid> {
    Ok(pseudospectrum_family(model, grid, &[epsilon], scan, None)?.remove(0))
}

/// `Σ_i 1/|ζ_i − ζ|²`, infinite at a pole.
pub fn example_sum(points: &[C64], zeta: C64) -> f64 {
    points
        .iter()
        .map(|p| {
            let d = (p - zeta).norm_sqr();
            if d == 0.0 {
                f64::INFINITY
            } else {
                1.0 / d
            }
        })
        .sum()
}

/// Membership in `{ζ : Σ_i 1/|ζ_i − ζ|² ≥ L}`; poles and equality count as inside.
pub fn example_oracle(points: &[C64], l: usize, zeta: C64) -> bool {
    example_sum(points, zeta) >= l as f64
}

const CIRCLE_SAMPLES: usize = 256;

fn circle(center: C64, r: f64) -> impl Iterator<Item = C64> {
    (0..CIRCLE_SAMPLES).map(move |k| {
        let t = 2.0 * PI * k as f64 / CIRCLE_SAMPLES as f64;
        center + c(r * t.cos(), r * t.sin())
    })
}

/// Membership in the example set dilated by `r`.
///
/// Away from poles the sum is subharmonic, so on a pole-free disk it is largest on the
/// boundary circle; the circle is sampled densely.
pub fn example_oracle_dilated(points: &[C64], l: usize, zeta: C64, r: f64) -> bool {
    if example_oracle(points, l, zeta) || points.iter().any(|p| (p - zeta).norm() <= r) {
        return true;
    }
    r > 0.0 && circle(zeta, r).any(|w| example_oracle(points, l, w))
}

/// True when the disk of radius `r` around ζ lies entirely on one side of the example
/// set boundary, i.e. ζ is at distance at least `r` from it (up to sampling).
pub fn example_far_from_boundary(points: &[C64], l: usize, zeta: C64, r: f64) -> bool {
    if !example_oracle_dilated(points, l, zeta, r) {
        return true;
    }
    example_oracle(points, l, zeta)
        && [1.0, 0.75, 0.5, 0.25]
            .iter()
            .all(|f| circle(zeta, r * f).all(|w| example_oracle(points, l, w)))
}

#[derive(Clone, Debug, Serialize)]
pub struct InclusionReport {
    pub epsilon: f64,
    pub sqrt_epsilon: f64,
    /// Points with `member_tilde(ε)` but not `member(√ε)`, away from the boundary band.
    pub interior_violations: Vec<(f64, f64)>,
    /// The same, on points whose grid neighbors disagree on `member(√ε)`.
    pub boundary_violations: Vec<(f64, f64)>,
    pub tilde_count: usize,
    pub member_sqrt_count: usize,
    pub unknown_count: usize,
}

/// Checks `𝔻̃_ε ⊆ 𝔻_√ε` on a grid.
pub fn check_tilde_inclusion(
    model: &KroneckerModel,
    grid: &ZetaGrid,
    epsilon: f64,
    scan: &ScanOptions,
) -> Result<InclusionReport> {
    let se = epsilon.sqrt();
    let tilde = pseudospectrum(model, grid, epsilon, scan)?;
    let wide = pseudospectrum(model, grid, se, scan)?;
    let mut report = InclusionReport {
        epsilon,
        sqrt_epsilon: se,
        interior_violations: Vec::new(),
        boundary_violations: Vec::new(),
        tilde_count: tilde.member_tilde.iter().filter(|&&b| b).count(),
        member_sqrt_count: wide.member.iter().filter(|&&b| b).count(),
        unknown_count: tilde.unknown_count() + wide.unknown_count(),
    };
    for i in 0..grid.len() {
        if tilde.member_tilde[i] && !wide.member[i] {
            let z = grid.point(i);
            let boundary = grid.neighbors(i).iter().any(|&j| wide.member[j]);
            if boundary {
                report.boundary_violations.push((z.re, z.im));
            } else {
                report.interior_violations.push((z.re, z.im));
            }
        }
    }
    Ok(report)
}
