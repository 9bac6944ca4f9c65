//! Low-rank inverse power iteration.
//!
//! The flux is kept as `φ = X S Wᵀ` with orthonormal `X` (space) and `W`
//! (energy). Each power step is treated as one pseudo-time step of the
//! unconventional basis-update & Galerkin integrator: a K-step updates the
//! space basis, an L-step the energy basis, and a Galerkin S-step the
//! coefficients. The rank-adaptive variant augments both bases with the old
//! ones and truncates the coefficient matrix by an SVD tail tolerance.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::history::ConvergenceHistory;
use crate::kron_solve::{assemble_vectorized, MultiTermSystem};
use crate::linalg::{hstack, orthonormal_completion, orthonormality_error, qr_positive, sorted_svd};
use crate::operators::OperatorSet;
use crate::problem::SeparableProblem;
use crate::{Mat, Vector};

/// Orthonormality slack accepted by the projections.
pub const BASIS_CONTRACT_TOLERANCE: f64 = 1e-8;

/// `φ = X S Wᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct LowRankState {
    /// `N_x × r`, orthonormal columns.
    pub x: Mat,
    /// `r × r` coefficients (rectangular only inside an adaptive step).
    pub s: Mat,
    /// `G × r`, orthonormal columns.
    pub w: Mat,
}

impl LowRankState {
    pub fn new(x: Mat, s: Mat, w: Mat) -> Result<Self> {
        if s.nrows() != x.ncols() || s.ncols() != w.ncols() {
            return Err(Error::Dimension(format!(
                "X has {} columns, S is {}×{}, W has {} columns",
                x.ncols(),
                s.nrows(),
                s.ncols(),
                w.ncols()
            )));
        }
        Ok(Self { x, s, w })
    }

    pub fn rank(&self) -> usize {
        self.s.nrows()
    }

    pub fn n_space(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_energy(&self) -> usize {
        self.w.nrows()
    }

    pub fn reconstruct(&self) -> Mat {
        &self.x * &self.s * self.w.transpose()
    }

    /// Largest of `‖XᵀX − I‖_F` and `‖WᵀW − I‖_F`.
    pub fn orthonormality(&self) -> f64 {
        orthonormality_error(&self.x).max(orthonormality_error(&self.w))
    }

    /// Entries needed to store the factors: `N_x·r + G·r + r²`.
    pub fn storage_entries(&self) -> usize {
        self.x.len() + self.w.len() + self.s.len()
    }
}

/// Congruence projections of a problem's matrices onto one basis.
///
/// On the energy side (`WᵀBW`, ...) `minus` holds the projected diffusion
/// couplings, `plus` the projected removal matrices and `source` the projected
/// fission matrices. On the space side (`XᵀAX`, ...) they hold the projected
/// stencils, densities and source densities. Term order follows the problem.
#[derive(Debug, Clone)]
pub struct Projection {
    pub minus: Vec<Mat>,
    pub plus: Vec<Mat>,
    pub source: Vec<Mat>,
}

fn congruence(basis: &Mat, mats: &[Mat]) -> Vec<Mat> {
    let bt = basis.transpose();
    mats.iter().map(|m| &bt * m * basis).collect()
}

fn check_basis(basis: &Mat, expected_rows: usize, what: &str) -> Result<()> {
    if basis.nrows() != expected_rows {
        return Err(Error::Dimension(format!(
            "{what} basis has {} rows, expected {expected_rows}",
            basis.nrows()
        )));
    }
    let err = orthonormality_error(basis);
    if !(err <= BASIS_CONTRACT_TOLERANCE) {
        return Err(Error::Contract(format!(
            "{what} basis is not orthonormal (‖QᵀQ − I‖ = {err:.3e})"
        )));
    }
    Ok(())
}

/// `WᵀBW`, `WᵀDW`, `WᵀFW` for every term.
pub fn project_energy(problem: &SeparableProblem, w: &Mat) -> Result<Projection> {
    check_basis(w, problem.n_energy(), "energy")?;
    Ok(Projection {
        minus: congruence(w, &problem.lhs.right_b),
        plus: congruence(w, &problem.lhs.right_d),
        source: congruence(w, &problem.source.right_d),
    })
}

/// `XᵀAX`, `XᵀCX`, `XᵀEX` for every term.
pub fn project_space(problem: &SeparableProblem, x: &Mat) -> Result<Projection> {
    check_basis(x, problem.n_space(), "space")?;
    Ok(Projection {
        minus: congruence(x, &problem.lhs.left_a),
        plus: congruence(x, &problem.lhs.left_c),
        source: congruence(x, &problem.source.left_c),
    })
}

/// Result of a K- or L-step: the new basis, the mixing matrix
/// `basis_newᵀ · basis_old`, and the solved factor (`K` or `Lᵀ`).
#[derive(Debug, Clone)]
pub struct BasisUpdate {
    pub basis: Mat,
    pub mixing: Mat,
    pub factor: Mat,
}

fn orthonormalize(factor: Mat, old: &Mat, augment: bool, what: &str) -> Result<BasisUpdate> {
    if factor.norm() == 0.0 {
        return Err(Error::RankDeficient(format!("{what} factor vanished (zero fission source?)")));
    }
    let basis = if augment {
        qr_positive(&hstack(&factor, old)).0
    } else {
        qr_positive(&factor).0
    };
    let mixing = basis.transpose() * old;
    Ok(BasisUpdate { basis, mixing, factor })
}

/// Space-side system `−Σ A K (WᵀBW) + Σ C K (WᵀDW)` of the K-step.
pub fn k_step_system(problem: &SeparableProblem, energy: &Projection) -> Result<MultiTermSystem> {
    let r = energy.plus.first().map_or(0, |p| p.nrows());
    MultiTermSystem::new(
        problem.n_space(),
        r,
        problem.lhs.left_a.iter().cloned().zip(energy.minus.iter().cloned()).collect(),
        problem.lhs.left_c.iter().cloned().zip(energy.plus.iter().cloned()).collect(),
    )
}

/// `Σ E K⁰ (WᵀFW)`.
pub fn k_step_rhs(problem: &SeparableProblem, energy: &Projection, k0: &Mat) -> Mat {
    let mut rhs = Mat::zeros(k0.nrows(), k0.ncols());
    for (e, f_hat) in problem.source.left_c.iter().zip(&energy.source) {
        rhs += e * k0 * f_hat;
    }
    rhs
}

/// Energy-side system for `Lᵀ`: `−Σ Bᵀ Lᵀ (XᵀAX)ᵀ + Σ Dᵀ Lᵀ (XᵀCX)ᵀ`.
pub fn l_step_system(problem: &SeparableProblem, space: &Projection) -> Result<MultiTermSystem> {
    let r = space.plus.first().map_or(0, |p| p.nrows());
    let tr = |ms: &[Mat]| ms.iter().map(Mat::transpose).collect::<Vec<_>>();
    MultiTermSystem::new(
        problem.n_energy(),
        r,
        tr(&problem.lhs.right_b).into_iter().zip(tr(&space.minus)).collect(),
        tr(&problem.lhs.right_d).into_iter().zip(tr(&space.plus)).collect(),
    )
}

/// `Σ Fᵀ L⁰ᵀ (XᵀEX)ᵀ`.
pub fn l_step_rhs(problem: &SeparableProblem, space: &Projection, l0t: &Mat) -> Mat {
    let mut rhs = Mat::zeros(l0t.nrows(), l0t.ncols());
    for (f, e_hat) in problem.source.right_d.iter().zip(&space.source) {
        rhs += f.transpose() * l0t * e_hat.transpose();
    }
    rhs
}

/// Galerkin system `−Σ (XᵀAX) S (WᵀBW) + Σ (XᵀCX) S (WᵀDW)` at fixed bases.
pub fn s_step_system(space: &Projection, energy: &Projection) -> Result<MultiTermSystem> {
    let n = space.plus.first().map_or(0, |p| p.nrows());
    let m = energy.plus.first().map_or(0, |p| p.nrows());
    MultiTermSystem::new(
        n,
        m,
        space.minus.iter().cloned().zip(energy.minus.iter().cloned()).collect(),
        space.plus.iter().cloned().zip(energy.plus.iter().cloned()).collect(),
    )
}

/// `Σ (XᵀEX) S (WᵀFW)`.
pub fn s_step_rhs(space: &Projection, energy: &Projection, s: &Mat) -> Mat {
    let mut rhs = Mat::zeros(s.nrows(), s.ncols());
    for (e_hat, f_hat) in space.source.iter().zip(&energy.source) {
        rhs += e_hat * s * f_hat;
    }
    rhs
}

/// K-step: solve for `K = X_new R` from `K⁰ = X S`.
/// With `augment`, the new basis spans `[K, X_old]`.
pub fn k_step(problem: &SeparableProblem, state: &LowRankState, energy: &Projection, augment: bool) -> Result<BasisUpdate> {
    let k0 = &state.x * &state.s;
    let system = assemble_vectorized(k_step_system(problem, energy)?)?;
    let k = system.solve(&k_step_rhs(problem, energy, &k0))?;
    orthonormalize(k, &state.x, augment, "K-step")
}

/// L-step, posed on `Lᵀ = W Sᵀ` so the unknown is `G × r`.
pub fn l_step(problem: &SeparableProblem, state: &LowRankState, space: &Projection, augment: bool) -> Result<BasisUpdate> {
    let l0t = &state.w * state.s.transpose();
    let system = assemble_vectorized(l_step_system(problem, space)?)?;
    let lt = system.solve(&l_step_rhs(problem, space, &l0t))?;
    orthonormalize(lt, &state.w, augment, "L-step")
}

/// S-step: unnormalized coefficients `S̃` from `s_init = n_x S n_eᵀ`, with
/// both projections taken at the new bases.
pub fn s_step(space: &Projection, energy: &Projection, s_init: &Mat) -> Result<Mat> {
    let system = assemble_vectorized(s_step_system(space, energy)?)?;
    system.solve(&s_step_rhs(space, energy, s_init))
}

/// Leading singular triplets kept by a truncation.
#[derive(Debug, Clone)]
pub struct Truncation {
    /// `rows × rank` left singular vectors.
    pub p: Mat,
    pub sigma: Vec<f64>,
    /// `cols × rank` right singular vectors.
    pub q: Mat,
    pub rank: usize,
    /// `‖(σ_{rank+1}, ...)‖₂`.
    pub discarded: f64,
}

/// Smallest rank whose singular-value tail has 2-norm `≤ theta`, clamped to
/// `[r_min, r_max]` and to the number of singular values.
pub fn truncate(s_hat: &Mat, theta: f64, r_min: usize, r_max: usize) -> Truncation {
    let svd = sorted_svd(s_hat);
    let available = svd.sigma.len();
    // tails[i] = ‖σ_{i..}‖, tails[available] = 0.
    let mut tails = vec![0.0f64; available + 1];
    for i in (0..available).rev() {
        tails[i] = (tails[i + 1].powi(2) + svd.sigma[i].powi(2)).sqrt();
    }
    let smallest = (0..=available).find(|&i| tails[i] <= theta).unwrap_or(available);
    let rank = smallest.min(r_max).max(r_min).clamp(1.min(available), available);
    Truncation {
        p: svd.u.columns(0, rank).into_owned(),
        sigma: svd.sigma[..rank].to_vec(),
        q: svd.v.columns(0, rank).into_owned(),
        rank,
        discarded: tails[rank],
    }
}

/// How the adaptive tolerance `ϑ` is derived each step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TruncationTolerance {
    Absolute(f64),
    /// `ϑ = factor · ‖Ŝ‖_F`.
    Relative(f64),
}

impl TruncationTolerance {
    pub fn threshold(&self, s_hat: &Mat) -> f64 {
        match *self {
            Self::Absolute(theta) => theta,
            Self::Relative(factor) => factor * s_hat.norm(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveOptions {
    pub tolerance: TruncationTolerance,
    pub r_min: usize,
    pub r_max: usize,
}

impl AdaptiveOptions {
    pub const DEFAULT_RELATIVE_TOLERANCE: f64 = 1e-6;

    pub fn defaults(n_space: usize, n_energy: usize) -> Self {
        let full = n_space.min(n_energy);
        Self {
            tolerance: TruncationTolerance::Relative(Self::DEFAULT_RELATIVE_TOLERANCE),
            r_min: 2.min(full),
            r_max: full,
        }
    }

    fn validate(&self, n_space: usize, n_energy: usize) -> Result<()> {
        let full = n_space.min(n_energy);
        let theta = match self.tolerance {
            TruncationTolerance::Absolute(t) | TruncationTolerance::Relative(t) => t,
        };
        if !(theta >= 0.0) {
            return Err(Error::Domain(format!("truncation tolerance must be ≥ 0, got {theta}")));
        }
        if self.r_min < 1 || self.r_min > self.r_max || self.r_max > full {
            return Err(Error::Domain(format!(
                "rank bounds need 1 ≤ r_min ≤ r_max ≤ {full}, got [{}, {}]",
                self.r_min, self.r_max
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RankMode {
    Fixed,
    Adaptive(AdaptiveOptions),
}

/// One outer iteration.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    /// Normalized new state.
    pub state: LowRankState,
    pub k: f64,
    /// Unnormalized coefficients from the S-step, in the (possibly augmented)
    /// bases `x_step`, `w_step`.
    pub s_tilde: Mat,
    pub x_step: Mat,
    pub w_step: Mat,
    /// Discarded tail and tolerance (adaptive mode).
    pub truncation: Option<(f64, f64)>,
}

pub fn dlra_step(problem: &SeparableProblem, state: &LowRankState, mode: RankMode) -> Result<StepOutcome> {
    let augment = matches!(mode, RankMode::Adaptive(_));
    let energy_old = project_energy(problem, &state.w)?;
    let space_old = project_space(problem, &state.x)?;
    let ku = k_step(problem, state, &energy_old, augment)?;
    let lu = l_step(problem, state, &space_old, augment)?;
    let s_init = &ku.mixing * &state.s * lu.mixing.transpose();
    let space_new = project_space(problem, &ku.basis)?;
    let energy_new = project_energy(problem, &lu.basis)?;
    let s_tilde = s_step(&space_new, &energy_new, &s_init)?;
    match mode {
        RankMode::Fixed => {
            let k = s_tilde.norm();
            if k == 0.0 {
                return Err(Error::RankDeficient("S-step produced zero coefficients".into()));
            }
            Ok(StepOutcome {
                state: LowRankState::new(ku.basis.clone(), &s_tilde / k, lu.basis.clone())?,
                k,
                s_tilde,
                x_step: ku.basis,
                w_step: lu.basis,
                truncation: None,
            })
        }
        RankMode::Adaptive(options) => {
            let theta = options.tolerance.threshold(&s_tilde);
            let cut = truncate(&s_tilde, theta, options.r_min, options.r_max);
            let k = cut.sigma.iter().map(|s| s * s).sum::<f64>().sqrt();
            if k == 0.0 {
                return Err(Error::RankDeficient("S-step produced zero coefficients".into()));
            }
            let s = Mat::from_diagonal(&Vector::from_iterator(cut.rank, cut.sigma.iter().map(|s| s / k)));
            Ok(StepOutcome {
                state: LowRankState::new(&ku.basis * &cut.p, s, &lu.basis * &cut.q)?,
                k,
                s_tilde,
                x_step: ku.basis,
                w_step: lu.basis,
                truncation: Some((cut.discarded, theta)),
            })
        }
    }
}

#[derive(Debug, Clone)]
pub struct DlraSolution {
    pub k_eff: f64,
    pub state: LowRankState,
    pub history: ConvergenceHistory,
}

/// Iterate [`dlra_step`] until `|k_{n+1} − k_n| ≤ eps` (with `k_0 = 1`).
/// `observer` sees the iteration number and every new normalized state.
pub fn dlra_iterate(
    problem: &SeparableProblem,
    init: LowRankState,
    eps: f64,
    max_iter: usize,
    mode: RankMode,
    mut observer: impl FnMut(usize, &LowRankState),
) -> Result<DlraSolution> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Domain(format!("eps must be positive, got {eps}")));
    }
    let full = problem.n_space().min(problem.n_energy());
    if init.rank() == 0 || init.rank() > full || init.s.ncols() != init.rank() {
        return Err(Error::Domain(format!(
            "initial rank must lie in [1, {full}] with square S, got {}×{}",
            init.s.nrows(),
            init.s.ncols()
        )));
    }
    if let RankMode::Adaptive(options) = mode {
        options.validate(problem.n_space(), problem.n_energy())?;
    }
    let s_norm = init.s.norm();
    if !(s_norm > 0.0 && s_norm.is_finite()) {
        return Err(Error::Domain("initial coefficients must be nonzero".into()));
    }
    let mut state = LowRankState::new(init.x, &init.s / s_norm, init.w)?;
    let mut k = 1.0;
    let mut history = ConvergenceHistory::default();
    for iter in 1..=max_iter {
        let start = Instant::now();
        let outcome = dlra_step(problem, &state, mode)?;
        state = outcome.state;
        let delta = (outcome.k - k).abs();
        k = outcome.k;
        history.push(k, delta, state.rank(), start.elapsed().as_secs_f64());
        if let Some((discarded, theta)) = outcome.truncation {
            history.discarded.push(discarded);
            history.thresholds.push(theta);
        }
        log::debug!("dlra iteration {iter}: k = {k:.12}, delta = {delta:.3e}, rank = {}", state.rank());
        observer(iter, &state);
        if delta <= eps {
            history.converged = true;
            return Ok(DlraSolution { k_eff: k, state, history });
        }
    }
    Err(Error::NotConverged {
        history: Box::new(history),
    })
}

/// `diag(1, 1/2, 1/4, ...)` normalized to unit Frobenius norm.
pub fn default_coefficients(rank: usize) -> Mat {
    let d = Vector::from_fn(rank, |i, _| 0.5f64.powi(i as i32));
    Mat::from_diagonal(&d) / d.norm()
}

/// Seeded start whose first basis vectors are `first_x` and `first_w`
/// (normalized), completed by random orthonormal columns.
pub fn seeded_state(first_x: &Vector, first_w: &Vector, rank: usize, seed: u64) -> Result<LowRankState> {
    let full = first_x.len().min(first_w.len());
    if rank == 0 || rank > full {
        return Err(Error::Domain(format!("rank must lie in [1, {full}], got {rank}")));
    }
    if first_x.norm() == 0.0 || first_w.norm() == 0.0 {
        return Err(Error::Domain("leading basis vectors must be nonzero".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = orthonormal_completion(first_x, rank, &mut rng);
    let w = orthonormal_completion(first_w, rank, &mut rng);
    LowRankState::new(x, default_coefficients(rank), w)
}

/// Emission spectrum `χ` of the first material with a nonzero fission matrix.
pub fn fission_spectrum(ops: &OperatorSet) -> Option<Vector> {
    let fission = ops.fission.iter().find(|f| f.norm() > 0.0)?;
    // Σ̃_f = νΣ_f χᵀ, so any nonzero row is proportional to χ.
    let row = (0..fission.nrows()).max_by(|&a, &b| fission.row(a).norm().total_cmp(&fission.row(b).norm()))?;
    let chi = fission.row(row).transpose();
    Some(&chi / chi.norm())
}

/// Default start for the diffusion problem: constant flux in space and the
/// fission spectrum in energy (all ones if nothing is fissile).
pub fn initial_state(ops: &OperatorSet, rank: usize, seed: u64) -> Result<LowRankState> {
    let ones_x = Vector::from_element(ops.n_cells, 1.0);
    let chi = fission_spectrum(ops).unwrap_or_else(|| Vector::from_element(ops.n_groups, 1.0));
    seeded_state(&ones_x, &chi, rank, seed)
}

#[derive(Debug, Clone)]
pub enum DlraInit {
    Seeded { rank: usize, seed: u64 },
    State(LowRankState),
}

fn resolve_init(ops: &OperatorSet, init: DlraInit) -> Result<LowRankState> {
    match init {
        DlraInit::Seeded { rank, seed } => initial_state(ops, rank, seed),
        DlraInit::State(state) => Ok(state),
    }
}

/// Fixed-rank iteration.
pub fn dlra_power_iteration(ops: &OperatorSet, init: DlraInit, eps: f64, max_iter: usize) -> Result<DlraSolution> {
    let problem = ops.problem()?;
    dlra_iterate(&problem, resolve_init(ops, init)?, eps, max_iter, RankMode::Fixed, |_, _| {})
}

/// Rank-adaptive iteration.
pub fn dlra_power_iteration_adaptive(
    ops: &OperatorSet,
    init: DlraInit,
    eps: f64,
    options: AdaptiveOptions,
    max_iter: usize,
) -> Result<DlraSolution> {
    let problem = ops.problem()?;
    dlra_iterate(
        &problem,
        resolve_init(ops, init)?,
        eps,
        max_iter,
        RankMode::Adaptive(options),
        |_, _| {},
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::gaussian_matrix;
    use crate::materials::synthetic::{synthetic_library, MaterialKind, REFERENCE_LAYOUT};
    use crate::materials::{build_density_field, Shell};
    use crate::mesh::build_spherical_mesh;
    use crate::operators::{assemble_operators, OuterBoundary};
    use crate::power_full::{full_iterate, full_power_iteration, FullInit, FullStepper};
    use proptest::prelude::*;

    fn sphere(groups: usize, cells: usize, seed: u64) -> OperatorSet {
        let lib = synthetic_library(groups, &REFERENCE_LAYOUT, seed);
        let mesh = build_spherical_mesh(12.0, cells).unwrap();
        let shells = [Shell::new(7.0, "fuel"), Shell::new(8.5, "steel_a"), Shell::new(12.0, "steel_b")];
        let density = build_density_field(&mesh, &lib, &shells).unwrap();
        assemble_operators(&mesh, &lib, &density, OuterBoundary::ZeroFlux).unwrap()
    }

    /// Bare homogeneous fuel sphere: the fundamental mode is exactly separable.
    fn bare_sphere(groups: usize, cells: usize) -> OperatorSet {
        let lib = synthetic_library(groups, &[("fuel", MaterialKind::Fuel)], 4);
        let mesh = build_spherical_mesh(10.0, cells).unwrap();
        let density = build_density_field(&mesh, &lib, &[Shell::new(10.0, "fuel")]).unwrap();
        assemble_operators(&mesh, &lib, &density, OuterBoundary::ZeroFlux).unwrap()
    }

    fn random_orthonormal(rows: usize, cols: usize, seed: u64) -> Mat {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        qr_positive(&gaussian_matrix(rows, cols, &mut rng)).0
    }

    fn random_state(n: usize, g: usize, r: usize, seed: u64) -> LowRankState {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcd);
        let s = gaussian_matrix(r, r, &mut rng);
        let s = &s / s.norm();
        LowRankState::new(random_orthonormal(n, r, seed), s, random_orthonormal(g, r, seed + 1)).unwrap()
    }

    fn projector(basis: &Mat) -> Mat {
        basis * basis.transpose()
    }

    /// Entry-by-entry `Qᵀ A Q`.
    fn triple_loop(q: &Mat, a: &Mat) -> Mat {
        let (n, r) = q.shape();
        Mat::from_fn(r, r, |i, j| {
            let mut acc = 0.0;
            for p in 0..n {
                for s in 0..n {
                    acc += q[(p, i)] * a[(p, s)] * q[(s, j)];
                }
            }
            acc
        })
    }

    #[test]
    fn identity_and_unit_vector_projections() {
        let ops = sphere(4, 6, 0);
        let problem = ops.problem().unwrap();
        let e = project_energy(&problem, &Mat::identity(4, 4)).unwrap();
        assert_eq!(e.minus, problem.lhs.right_b);
        assert_eq!(e.plus, problem.lhs.right_d);
        assert_eq!(e.source, problem.source.right_d);
        let s = project_space(&problem, &Mat::identity(6, 6)).unwrap();
        assert_eq!(s.minus, problem.lhs.left_a);
        assert_eq!(s.plus, problem.lhs.left_c);

        let e1 = Mat::from_fn(4, 1, |i, _| if i == 0 { 1.0 } else { 0.0 });
        let e = project_energy(&problem, &e1).unwrap();
        for (p, full) in e.plus.iter().zip(&problem.lhs.right_d) {
            assert_eq!(p[(0, 0)], full[(0, 0)]);
        }
        let x1 = Mat::from_fn(6, 1, |i, _| if i == 0 { 1.0 } else { 0.0 });
        let s = project_space(&problem, &x1).unwrap();
        for (p, full) in s.minus.iter().zip(&problem.lhs.left_a) {
            assert_eq!(p[(0, 0)], full[(0, 0)]);
        }
    }

    #[test]
    fn projections_match_triple_loops() {
        let ops = sphere(6, 9, 1);
        let problem = ops.problem().unwrap();
        let w = random_orthonormal(6, 3, 2);
        let e = project_energy(&problem, &w).unwrap();
        for (hat, full) in e.minus.iter().zip(&problem.lhs.right_b).chain(e.plus.iter().zip(&problem.lhs.right_d)).chain(e.source.iter().zip(&problem.source.right_d)) {
            assert!((hat - triple_loop(&w, full)).norm() <= 1e-13 * full.norm().max(1.0));
        }
        let x = random_orthonormal(9, 3, 3);
        let s = project_space(&problem, &x).unwrap();
        for (hat, full) in s.minus.iter().zip(&problem.lhs.left_a).chain(s.plus.iter().zip(&problem.lhs.left_c)) {
            assert!((hat - triple_loop(&x, full)).norm() <= 1e-13 * full.norm().max(1.0));
        }
    }

    #[test]
    fn non_orthonormal_basis_is_a_contract_violation() {
        let problem = sphere(3, 4, 0).problem().unwrap();
        let w = Mat::from_element(3, 1, 1.0);
        assert!(matches!(project_energy(&problem, &w), Err(Error::Contract(_))));
        let x = Mat::from_element(4, 2, 0.5);
        assert!(matches!(project_space(&problem, &x), Err(Error::Contract(_))));
    }

    #[test]
    fn k_and_l_step_residuals() {
        let problem = sphere(3, 4, 5).problem().unwrap();
        let state = random_state(4, 3, 2, 7);
        let energy = project_energy(&problem, &state.w).unwrap();
        let ku = k_step(&problem, &state, &energy, false).unwrap();
        let rhs = k_step_rhs(&problem, &energy, &(&state.x * &state.s));
        let res = k_step_system(&problem, &energy).unwrap().apply(&ku.factor).unwrap() - &rhs;
        assert!(res.norm() <= 1e-10 * rhs.norm());
        assert!(orthonormality_error(&ku.basis) <= 1e-12);

        let space = project_space(&problem, &state.x).unwrap();
        let lu = l_step(&problem, &state, &space, false).unwrap();
        let rhs = l_step_rhs(&problem, &space, &(&state.w * state.s.transpose()));
        let res = l_step_system(&problem, &space).unwrap().apply(&lu.factor).unwrap() - &rhs;
        assert!(res.norm() <= 1e-10 * rhs.norm());
        assert!((&lu.mixing - lu.basis.transpose() * &state.w).norm() < 1e-15);
    }

    /// The L-step for `Lᵀ` is the transpose of the Galerkin equation
    /// `Xᵀ L(X L) = Xᵀ F(X L⁰)` written directly on the `r × G` unknown.
    #[test]
    fn l_step_transpose_convention() {
        let problem = sphere(4, 5, 8).problem().unwrap();
        let state = random_state(5, 4, 2, 9);
        let space = project_space(&problem, &state.x).unwrap();
        let lu = l_step(&problem, &state, &space, false).unwrap();
        let l = lu.factor.transpose();
        let lhs = state.x.transpose() * problem.apply_lhs(&(&state.x * &l)).unwrap();
        let l0 = &state.s * state.w.transpose();
        let rhs = state.x.transpose() * problem.apply_source(&(&state.x * l0)).unwrap();
        assert!((&lhs - &rhs).norm() <= 1e-10 * rhs.norm());
    }

    #[test]
    fn full_rank_basis_steps_reproduce_the_dense_update() {
        for &(n, g) in &[(6, 3), (4, 4), (5, 7)] {
            let problem = sphere(g, n, 12).problem().unwrap();
            let r = n.min(g);
            let state = random_state(n, g, r, 13);
            let dense = FullStepper::new(&problem).unwrap().update(&state.reconstruct()).unwrap();
            let energy = project_energy(&problem, &state.w).unwrap();
            let space = project_space(&problem, &state.x).unwrap();
            let ku = k_step(&problem, &state, &energy, false).unwrap();
            let lu = l_step(&problem, &state, &space, false).unwrap();
            if r == g {
                // W spans ℝ^G, so K Wᵀ is the dense update itself.
                let rebuilt = &ku.factor * state.w.transpose();
                assert!((&rebuilt - &dense).norm() <= 1e-10 * dense.norm());
                assert!((projector(&ku.basis) * &dense - &dense).norm() <= 1e-10 * dense.norm());
            }
            if r == n {
                let rebuilt = &state.x * lu.factor.transpose();
                assert!((&rebuilt - &dense).norm() <= 1e-10 * dense.norm());
                assert!((&dense * projector(&lu.basis) - &dense).norm() <= 1e-10 * dense.norm());
            }
            if n == g {
                let out = dlra_step(&problem, &state, RankMode::Fixed).unwrap();
                let rebuilt = &out.x_step * &out.s_tilde * out.w_step.transpose();
                assert!((&rebuilt - &dense).norm() <= 1e-10 * dense.norm());
                assert!((out.k - dense.norm()).abs() <= 1e-10 * dense.norm());
            }
        }
    }

    #[test]
    fn zero_fission_is_rank_deficient() {
        let lib = synthetic_library(3, &[("steel", MaterialKind::Reflector)], 0);
        let mesh = build_spherical_mesh(4.0, 5).unwrap();
        let density = build_density_field(&mesh, &lib, &[Shell::new(4.0, "steel")]).unwrap();
        let ops = assemble_operators(&mesh, &lib, &density, OuterBoundary::ZeroFlux).unwrap();
        let problem = ops.problem().unwrap();
        let state = random_state(5, 3, 2, 0);
        let energy = project_energy(&problem, &state.w).unwrap();
        assert!(matches!(k_step(&problem, &state, &energy, false), Err(Error::RankDeficient(_))));
        let space = project_space(&problem, &state.x).unwrap();
        assert!(matches!(l_step(&problem, &state, &space, false), Err(Error::RankDeficient(_))));
        assert!(matches!(
            dlra_power_iteration(&ops, DlraInit::Seeded { rank: 2, seed: 0 }, 1e-6, 10),
            Err(Error::RankDeficient(_))
        ));
    }

    #[test]
    fn rank_one_s_step_closed_form() {
        let problem = sphere(3, 5, 2).problem().unwrap();
        let x = random_orthonormal(5, 1, 1);
        let w = random_orthonormal(3, 1, 2);
        let space = project_space(&problem, &x).unwrap();
        let energy = project_energy(&problem, &w).unwrap();
        let s0 = Mat::from_element(1, 1, 0.7);
        let s = s_step(&space, &energy, &s0).unwrap()[(0, 0)];
        let mut denom = 0.0;
        for (d, m) in space.minus.iter().zip(&energy.minus) {
            denom -= d[(0, 0)] * m[(0, 0)];
        }
        for (rho, sig) in space.plus.iter().zip(&energy.plus) {
            denom += rho[(0, 0)] * sig[(0, 0)];
        }
        let numer: f64 = space.source.iter().zip(&energy.source).map(|(r, f)| r[(0, 0)] * 0.7 * f[(0, 0)]).sum();
        assert!((s - numer / denom).abs() <= 1e-13 * s.abs());
    }

    #[test]
    fn factor_norm_equals_reconstruction_norm() {
        let problem = sphere(5, 8, 3).problem().unwrap();
        let out = dlra_step(&problem, &random_state(8, 5, 3, 4), RankMode::Fixed).unwrap();
        let rebuilt = &out.x_step * &out.s_tilde * out.w_step.transpose();
        assert!((rebuilt.norm() - out.k).abs() <= 1e-12 * out.k);
    }

    #[test]
    fn full_rank_dlra_matches_full_solver() {
        let ops = sphere(8, 40, 11);
        let full = full_power_iteration(&ops, FullInit::Ones, 1e-11, 10_000).unwrap();
        let dlra = dlra_power_iteration(&ops, DlraInit::Seeded { rank: 8, seed: 0 }, 1e-11, 10_000).unwrap();
        assert!((full.k_eff - dlra.k_eff).abs() <= 1e-8);
        assert!(dlra.state.orthonormality() <= 1e-10);
        assert!((dlra.state.s.norm() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn rank_one_separable_fixture() {
        let ops = bare_sphere(5, 30);
        let full = full_power_iteration(&ops, FullInit::Ones, 1e-12, 10_000).unwrap();
        // Full solution is numerically rank one.
        let sigma = sorted_svd(&full.phi).sigma;
        assert!(sigma[1] <= 1e-8 * sigma[0]);
        let dlra = dlra_power_iteration(&ops, DlraInit::Seeded { rank: 1, seed: 3 }, 1e-12, 10_000).unwrap();
        assert!((full.k_eff - dlra.k_eff).abs() <= 1e-8, "{} vs {}", full.k_eff, dlra.k_eff);
    }

    #[test]
    fn under_resolved_rank_needs_more_iterations() {
        let ops = sphere(8, 40, 11);
        let full = full_power_iteration(&ops, FullInit::Ones, 1e-10, 10_000).unwrap();
        let low = dlra_power_iteration(&ops, DlraInit::Seeded { rank: 1, seed: 0 }, 1e-10, 10_000).unwrap();
        assert!((low.k_eff - full.k_eff).abs() > 1e-8, "rank 1 should not resolve this problem");
    }

    #[test]
    fn adaptive_zero_tolerance_doubles_rank() {
        let problem = sphere(8, 20, 6).problem().unwrap();
        let options = AdaptiveOptions {
            tolerance: TruncationTolerance::Absolute(0.0),
            r_min: 1,
            r_max: 8,
        };
        let mut state = random_state(20, 8, 1, 1);
        let mut ranks = vec![];
        for _ in 0..4 {
            state = dlra_step(&problem, &state, RankMode::Adaptive(options)).unwrap().state;
            ranks.push(state.rank());
        }
        assert_eq!(ranks, vec![2, 4, 8, 8]);
    }

    #[test]
    fn adaptive_run_collapses_to_the_rank_one_mode() {
        let ops = bare_sphere(5, 30);
        let full = full_power_iteration(&ops, FullInit::Ones, 1e-12, 10_000).unwrap();
        let options = AdaptiveOptions {
            tolerance: TruncationTolerance::Relative(1e-6),
            r_min: 1,
            r_max: 5,
        };
        let sol = dlra_power_iteration_adaptive(&ops, DlraInit::Seeded { rank: 4, seed: 2 }, 1e-12, options, 10_000).unwrap();
        assert_eq!(sol.state.rank(), 1, "ranks: {:?}", sol.history.ranks);
        assert!((sol.k_eff - full.k_eff).abs() <= 1e-8);
        for (d, t) in sol.history.discarded.iter().zip(&sol.history.thresholds) {
            assert!(d <= t);
        }
    }

    #[test]
    fn truncation_examples() {
        let cut = truncate(&Mat::from_diagonal(&Vector::from_vec(vec![0.8, 0.6])), 0.0, 1, 2);
        assert_eq!(cut.rank, 2);
        let cut = truncate(&Mat::from_diagonal(&Vector::from_vec(vec![1.0, 1e-20])), 1e-10, 1, 2);
        assert_eq!(cut.rank, 1);
        assert_eq!(cut.sigma, vec![1.0]);
        let cut = truncate(&Mat::from_diagonal(&Vector::from_vec(vec![1.0, 1e-20])), 1e-10, 2, 2);
        assert_eq!(cut.rank, 2, "r_min clamps");
        let cut = truncate(&Mat::from_diagonal(&Vector::from_vec(vec![1.0, 0.5, 0.2])), 0.0, 1, 2);
        assert_eq!(cut.rank, 2, "r_max clamps");
    }

    #[test]
    fn invalid_iteration_arguments() {
        let ops = sphere(3, 5, 0);
        assert!(matches!(
            dlra_power_iteration(&ops, DlraInit::Seeded { rank: 4, seed: 0 }, 1e-6, 10),
            Err(Error::Domain(_))
        ));
        let bad = AdaptiveOptions { tolerance: TruncationTolerance::Absolute(1e-3), r_min: 3, r_max: 2 };
        assert!(matches!(
            dlra_power_iteration_adaptive(&ops, DlraInit::Seeded { rank: 2, seed: 0 }, 1e-6, bad, 10),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn initial_state_layout() {
        let ops = sphere(6, 10, 0);
        let state = initial_state(&ops, 3, 5).unwrap();
        let ones = Vector::from_element(10, 1.0 / 10f64.sqrt());
        assert!((state.x.column(0) - ones).norm() < 1e-14);
        let chi = fission_spectrum(&ops).unwrap();
        assert!((state.w.column(0) - chi).norm() < 1e-14);
        assert!(state.orthonormality() < 1e-13);
        assert_eq!(state, initial_state(&ops, 3, 5).unwrap(), "seeded start is deterministic");
        assert_eq!(state.storage_entries(), 10 * 3 + 6 * 3 + 9);
    }

    #[test]
    fn per_step_system_sizes() {
        let (n, g, r) = (12, 7, 3);
        let problem = sphere(g, n, 0).problem().unwrap();
        let state = random_state(n, g, r, 0);
        let energy = project_energy(&problem, &state.w).unwrap();
        let space = project_space(&problem, &state.x).unwrap();
        let k = k_step_system(&problem, &energy).unwrap();
        let l = l_step_system(&problem, &space).unwrap();
        let s = s_step_system(&space, &energy).unwrap();
        let entries = |sys: &MultiTermSystem| (sys.n * sys.m).pow(2);
        assert_eq!(entries(&k) + entries(&l), r * r * n * n + r * r * g * g);
        assert_eq!(entries(&s), r.pow(4));
    }

    #[test]
    fn generic_iteration_agrees_with_full_on_problem_form() {
        let ops = sphere(4, 4, 9);
        let problem = ops.problem().unwrap();
        let full = full_iterate(&problem, &Mat::from_element(4, 4, 1.0), 1e-12, 10_000).unwrap();
        let dlra = dlra_iterate(&problem, initial_state(&ops, 4, 0).unwrap(), 1e-12, 10_000, RankMode::Fixed, |_, _| {}).unwrap();
        assert!((full.k_eff - dlra.k_eff).abs() <= 1e-9);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn invariants_hold_every_iteration(seed in 0u64..1000, r in 1usize..=4, adaptive in any::<bool>()) {
            let ops = sphere(5, 10, seed);
            let problem = ops.problem().unwrap();
            let mode = if adaptive {
                RankMode::Adaptive(AdaptiveOptions { tolerance: TruncationTolerance::Relative(1e-4), r_min: 1, r_max: 5 })
            } else {
                RankMode::Fixed
            };
            let mut state = initial_state(&ops, r, seed).unwrap();
            for _ in 0..6 {
                let out = dlra_step(&problem, &state, mode).unwrap();
                prop_assert!(out.k > 0.0);
                state = out.state;
                prop_assert!(state.orthonormality() <= 1e-10);
                prop_assert!((state.s.norm() - 1.0).abs() <= 1e-12);
                if let Some((discarded, theta)) = out.truncation {
                    prop_assert!(discarded <= theta);
                }
            }
        }

        #[test]
        fn random_truncation_respects_tolerance(seed in 0u64..10_000, n in 1usize..=8, theta_exp in -6.0f64..0.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = gaussian_matrix(n, n, &mut rng);
            let theta = 10f64.powf(theta_exp) * s.norm();
            let cut = truncate(&s, theta, 1, n);
            let sigma = sorted_svd(&s).sigma;
            let tail: f64 = sigma[cut.rank..].iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert!(tail <= theta);
            prop_assert!((tail - cut.discarded).abs() <= 1e-12 * s.norm());
            let kept = &cut.p * Mat::from_diagonal(&Vector::from_vec(cut.sigma.clone())) * cut.q.transpose();
            prop_assert!(((&s - kept).norm() - tail).abs() <= 1e-10 * s.norm());
        }
    }
}
