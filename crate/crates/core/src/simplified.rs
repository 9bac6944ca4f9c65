//! Two-sided model eigenproblem `A φ B = λ C φ D`.
//!
//! With `Ĉ = A⁻¹C` and `D̂ = D B⁻¹` the power iteration is
//! `φⁿ⁺¹ ∝ Ĉ φⁿ D̂` and converges to `v₁ u₁ᵀ` with `k → λ₁σ₁`. Spectra are
//! prescribed, so the observed convergence rates can be compared against
//! `max(|λ₂/λ₁|, |σ₂/σ₁|)` for `k` and `|λ₂/λ₁|` for the space basis.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kron_solve::MultiTermSystem;
use crate::linalg::{gaussian_matrix, qr_positive};
use crate::power_dlra::{default_coefficients, dlra_iterate, DlraSolution, LowRankState, RankMode};
use crate::power_full::{full_iterate, FullSolution};
use crate::problem::SeparableProblem;
use crate::{Mat, Vector};

pub const DEFAULT_RATE_WINDOW: usize = 20;
pub const DEFAULT_RATE_FLOOR: f64 = 1e-13;
const MIN_RATE_POINTS: usize = 10;

#[derive(Debug, Clone)]
pub struct TwoSidedProblem {
    pub a: Mat,
    pub b: Mat,
    pub c: Mat,
    pub d: Mat,
    /// Eigenvalues of `Ĉ`, by descending modulus.
    pub lambdas: Vec<f64>,
    /// Eigenvalues of `D̂`, by descending modulus.
    pub sigmas: Vec<f64>,
    /// Unit dominant right eigenvector of `Ĉ`.
    pub v1: Vector,
    /// Unit dominant left eigenvector of `D̂` (`u₁ᵀ D̂ = σ₁ u₁ᵀ`).
    pub u1: Vector,
    /// `v1_dual · x` is the `v₁` coordinate of `x` in the eigenbasis of `Ĉ`.
    pub v1_dual: Vector,
    /// Same for `u₁` in the left eigenbasis of `D̂`.
    pub u1_dual: Vector,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Construction {
    /// Diagonalize through seeded well-conditioned similarities instead of
    /// using the diagonal matrices directly.
    pub random_similarity: bool,
    /// Spread `Ĉ` and `D̂` over random invertible `A`, `B` instead of `A = B = I`.
    pub split: bool,
}

impl Construction {
    pub const DIAGONAL: Self = Self {
        random_similarity: false,
        split: false,
    };
    pub const RANDOM: Self = Self {
        random_similarity: true,
        split: false,
    };
}

fn check_spectrum(values: &[f64], what: &str) -> Result<()> {
    if values.is_empty() {
        return Err(Error::Domain(format!("{what} spectrum is empty")));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain(format!("{what} spectrum has non-finite entries")));
    }
    if values.windows(2).any(|w| w[1].abs() > w[0].abs()) {
        return Err(Error::Domain(format!("{what} spectrum must be sorted by descending modulus")));
    }
    if values[0] == 0.0 || (values.len() > 1 && values[1].abs() == values[0].abs()) {
        return Err(Error::Domain(format!("dominant eigenvalue not simple in the {what} spectrum")));
    }
    Ok(())
}

/// `Q₁ diag(1 + u) Q₂`, condition number at most 2.
fn well_conditioned<R: Rng>(n: usize, rng: &mut R) -> Mat {
    let q1 = qr_positive(&gaussian_matrix(n, n, rng)).0;
    let q2 = qr_positive(&gaussian_matrix(n, n, rng)).0;
    let scales = Vector::from_fn(n, |_, _| 1.0 + rng.random::<f64>());
    q1 * Mat::from_diagonal(&scales) * q2
}

fn inverse(m: &Mat) -> Result<Mat> {
    m.clone()
        .try_inverse()
        .ok_or(Error::Singular { condition: f64::INFINITY })
}

fn unit(v: Vector) -> Vector {
    let n = v.norm();
    v / n
}

/// Problem with `Ĉ = V Λ V⁻¹` and `D̂ = U⁻¹ Σ U`.
pub fn construct_from_spectra(lambdas: &[f64], sigmas: &[f64], seed: u64, construction: Construction) -> Result<TwoSidedProblem> {
    check_spectrum(lambdas, "space")?;
    check_spectrum(sigmas, "energy")?;
    let (n, m) = (lambdas.len(), sigmas.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (v, u) = if construction.random_similarity {
        (well_conditioned(n, &mut rng), well_conditioned(m, &mut rng))
    } else {
        (Mat::identity(n, n), Mat::identity(m, m))
    };
    let (v_inv, u_inv) = (inverse(&v)?, inverse(&u)?);
    let c_hat = &v * Mat::from_diagonal(&Vector::from_row_slice(lambdas)) * &v_inv;
    let d_hat = &u_inv * Mat::from_diagonal(&Vector::from_row_slice(sigmas)) * &u;
    let (a, b) = if construction.split {
        (well_conditioned(n, &mut rng), well_conditioned(m, &mut rng))
    } else {
        (Mat::identity(n, n), Mat::identity(m, m))
    };
    let c = &a * c_hat;
    let d = d_hat * &b;
    let v1 = unit(v.column(0).into_owned());
    let u1 = unit(u.row(0).transpose());
    // Rescale duals so that dual · v1 = 1.
    let v1_dual = v_inv.row(0).transpose();
    let v1_dual = &v1_dual / v1_dual.dot(&v1);
    let u1_dual = u_inv.column(0).into_owned();
    let u1_dual = &u1_dual / u1_dual.dot(&u1);
    Ok(TwoSidedProblem {
        a,
        b,
        c,
        d,
        lambdas: lambdas.to_vec(),
        sigmas: sigmas.to_vec(),
        v1,
        u1,
        v1_dual,
        u1_dual,
    })
}

impl TwoSidedProblem {
    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.nrows()
    }

    pub fn dominant(&self) -> f64 {
        self.lambdas[0] * self.sigmas[0]
    }

    pub fn space_ratio(&self) -> f64 {
        self.lambdas.get(1).map_or(0.0, |l| (l / self.lambdas[0]).abs())
    }

    pub fn energy_ratio(&self) -> f64 {
        self.sigmas.get(1).map_or(0.0, |s| (s / self.sigmas[0]).abs())
    }

    /// Bound on the eigenvalue error rate.
    pub fn rate_bound(&self) -> f64 {
        self.space_ratio().max(self.energy_ratio())
    }

    /// `Ĉ = A⁻¹C`.
    pub fn c_hat(&self) -> Result<Mat> {
        Ok(inverse(&self.a)? * &self.c)
    }

    /// `D̂ = D B⁻¹`.
    pub fn d_hat(&self) -> Result<Mat> {
        Ok(&self.d * inverse(&self.b)?)
    }

    /// `A φ B = (1/k) C φ D` in separable form.
    pub fn problem(&self) -> Result<SeparableProblem> {
        let (n, m) = (self.n(), self.m());
        SeparableProblem::new(
            MultiTermSystem::positive(n, m, vec![(self.a.clone(), self.b.clone())])?,
            MultiTermSystem::positive(n, m, vec![(self.c.clone(), self.d.clone())])?,
        )
    }

    /// Seeded start whose every basis column has a `v₁` (resp. `u₁`)
    /// eigen-coordinate of modulus at least `min_coordinate`.
    pub fn initial_state(&self, rank: usize, seed: u64, min_coordinate: f64) -> Result<LowRankState> {
        let full = self.n().min(self.m());
        if rank == 0 || rank > full {
            return Err(Error::Domain(format!("rank must lie in [1, {full}], got {rank}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |rows: usize, dual: &Vector| -> Result<Mat> {
            for _ in 0..1000 {
                let q = qr_positive(&gaussian_matrix(rows, rank, &mut rng)).0;
                if q.column_iter().all(|col| col.dot(dual).abs() >= min_coordinate) {
                    return Ok(q);
                }
            }
            Err(Error::Domain(format!(
                "could not draw a basis with dominant coordinates ≥ {min_coordinate}"
            )))
        };
        let x = draw(self.n(), &self.v1_dual)?;
        let w = draw(self.m(), &self.u1_dual)?;
        LowRankState::new(x, default_coefficients(rank), w)
    }
}

/// Full two-sided power iteration from `init`.
pub fn full_two_sided_iteration(p: &TwoSidedProblem, init: &Mat, eps: f64, max_iter: usize) -> Result<FullSolution> {
    full_iterate(&p.problem()?, init, eps, max_iter)
}

/// `min_i min(‖q_i − v‖, ‖q_i + v‖)` over the columns of `basis`.
pub fn basis_alignment(basis: &Mat, v: &Vector) -> f64 {
    basis
        .column_iter()
        .map(|col| (col - v).norm().min((col + v).norm()))
        .fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone)]
pub struct TwoSidedDlraRun {
    pub solution: DlraSolution,
    /// Alignment of the space basis with `±v₁` after each iteration.
    pub x_alignment: Vec<f64>,
    /// Alignment of the energy basis with `±u₁` after each iteration.
    pub w_alignment: Vec<f64>,
}

/// Fixed-rank DLRA iteration on the two-sided problem.
pub fn dlra_two_sided_iteration(p: &TwoSidedProblem, init: LowRankState, eps: f64, max_iter: usize) -> Result<TwoSidedDlraRun> {
    let mut x_alignment = vec![];
    let mut w_alignment = vec![];
    let solution = dlra_iterate(&p.problem()?, init, eps, max_iter, RankMode::Fixed, |_, state| {
        x_alignment.push(basis_alignment(&state.x, &p.v1));
        w_alignment.push(basis_alignment(&state.w, &p.u1));
    })?;
    Ok(TwoSidedDlraRun {
        solution,
        x_alignment,
        w_alignment,
    })
}

/// [`fit_geometric_rate_with`] using the default window and floor.
pub fn fit_geometric_rate(errors: &[f64]) -> Result<f64> {
    fit_geometric_rate_with(errors, DEFAULT_RATE_WINDOW, DEFAULT_RATE_FLOOR)
}

/// Geometric rate `exp(slope)` of a least-squares line through `ln eₙ`.
///
/// Only the prefix before the first entry `≤ floor` (or non-finite) is used,
/// since later values are round-off. The fit covers the last `window` points
/// of that prefix; at least 10 points are required.
pub fn fit_geometric_rate_with(errors: &[f64], window: usize, floor: f64) -> Result<f64> {
    let usable = errors.iter().position(|e| !(e.is_finite() && *e > floor)).unwrap_or(errors.len());
    if usable < MIN_RATE_POINTS {
        return Err(Error::Measurement(format!(
            "{usable} usable error values above {floor:e}, need at least {MIN_RATE_POINTS}"
        )));
    }
    let span = window.max(MIN_RATE_POINTS).min(usable);
    let points = &errors[usable - span..usable];
    let n = points.len() as f64;
    let mean_x = (n - 1.0) / 2.0;
    let mean_y = points.iter().map(|e| e.ln()).sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, e) in points.iter().enumerate() {
        let dx = i as f64 - mean_x;
        sxy += dx * (e.ln() - mean_y);
        sxx += dx * dx;
    }
    Ok((sxy / sxx).exp())
}

/// Measured rates of one problem.
#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    pub k_exact: f64,
    pub k_full: f64,
    pub k_dlra: f64,
    pub k_bound: f64,
    pub space_bound: f64,
    pub energy_bound: f64,
    pub full_k_rate: f64,
    pub dlra_k_rate: f64,
    pub dlra_x_rate: f64,
    pub dlra_w_rate: f64,
    pub full_iterations: usize,
    pub dlra_iterations: usize,
}

/// Relative error floor for rate fits; below it round-off dominates.
pub const RELATIVE_RATE_FLOOR: f64 = 1e-9;
/// `v₁` coordinate demanded of every initial basis column.
pub const MIN_DOMINANT_COORDINATE: f64 = 0.05;

/// Run the full and the rank-`rank` DLRA iterations and fit their rates.
pub fn measure_rates(p: &TwoSidedProblem, rank: usize, seed: u64, eps: f64, max_iter: usize) -> Result<RateReport> {
    let k_exact = p.dominant().abs();
    let floor = RELATIVE_RATE_FLOOR * k_exact;
    let init = p.initial_state(rank, seed, MIN_DOMINANT_COORDINATE)?;
    let phi0 = init.reconstruct();
    let full = full_two_sided_iteration(p, &phi0, eps, max_iter)?;
    let dlra = dlra_two_sided_iteration(p, init, eps, max_iter)?;
    let k_errors = |ks: &[f64]| ks.iter().map(|k| (k - k_exact).abs()).collect::<Vec<_>>();
    let window = DEFAULT_RATE_WINDOW;
    Ok(RateReport {
        k_exact,
        k_full: full.k_eff,
        k_dlra: dlra.solution.k_eff,
        k_bound: p.rate_bound(),
        space_bound: p.space_ratio(),
        energy_bound: p.energy_ratio(),
        full_k_rate: fit_geometric_rate_with(&k_errors(&full.history.k_estimates), window, floor)?,
        dlra_k_rate: fit_geometric_rate_with(&k_errors(&dlra.solution.history.k_estimates), window, floor)?,
        dlra_x_rate: fit_geometric_rate_with(&dlra.x_alignment, window, 1e-10)?,
        dlra_w_rate: fit_geometric_rate_with(&dlra.w_alignment, window, 1e-10)?,
        full_iterations: full.history.iterations(),
        dlra_iterations: dlra.solution.history.iterations(),
    })
}

/// Seeded spectrum of `len` values with `|λ₂/λ₁| = ratio` and the rest
/// spread below `|λ₂|` with random signs.
pub fn random_spectrum<R: Rng>(len: usize, ratio: f64, rng: &mut R) -> Vec<f64> {
    let mut values = vec![1.0];
    if len > 1 {
        values.push(ratio);
    }
    let mut rest: Vec<f64> = (2..len).map(|_| ratio * rng.random_range(0.0..0.95)).collect();
    rest.sort_by(|a, b| b.total_cmp(a));
    for v in rest {
        values.push(if rng.random::<bool>() { v } else { -v });
    }
    values
}
