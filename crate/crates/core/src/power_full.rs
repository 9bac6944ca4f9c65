//! Dense inverse power iteration on the full `N_x × G` flux.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::history::ConvergenceHistory;
use crate::kron_solve::{assemble_vectorized, VectorizedOperator};
use crate::operators::OperatorSet;
use crate::problem::SeparableProblem;
use crate::Mat;

pub const DEFAULT_EPS: f64 = 1e-6;
pub const DEFAULT_MAX_ITER: usize = 10_000;

#[derive(Debug, Clone)]
pub enum FullInit {
    /// Normalized all-ones flux.
    Ones,
    Given(Mat),
}

#[derive(Debug, Clone)]
pub struct FullSolution {
    pub k_eff: f64,
    /// Unit Frobenius norm.
    pub phi: Mat,
    pub history: ConvergenceHistory,
}

/// Factored loss operator plus the source, ready to take power steps.
pub struct FullStepper<'a> {
    problem: &'a SeparableProblem,
    solver: VectorizedOperator,
}

impl<'a> FullStepper<'a> {
    pub fn new(problem: &'a SeparableProblem) -> Result<Self> {
        Ok(Self {
            problem,
            solver: assemble_vectorized(problem.lhs.clone())?,
        })
    }

    /// Unnormalized update `φ̃` solving `L(φ̃) = F(φ)`.
    pub fn update(&self, phi: &Mat) -> Result<Mat> {
        let rhs = self.problem.apply_source(phi)?;
        if rhs.norm() == 0.0 {
            return Err(Error::Degenerate("fission source vanishes".into()));
        }
        self.solver.solve(&rhs)
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Domain(format!("eps must be positive, got {eps}")));
    }
    Ok(())
}

/// Inverse power iteration `φ̃ = L⁻¹F(φ)`, `k = ‖φ̃‖_F`, `φ ← φ̃/k`, stopped
/// once `|k_{n+1} − k_n| ≤ eps` (with `k_0 = 1`).
pub fn full_iterate(problem: &SeparableProblem, init: &Mat, eps: f64, max_iter: usize) -> Result<FullSolution> {
    check_eps(eps)?;
    if init.shape() != (problem.n_space(), problem.n_energy()) {
        return Err(Error::Dimension(format!(
            "initial flux is {}×{}, expected {}×{}",
            init.nrows(),
            init.ncols(),
            problem.n_space(),
            problem.n_energy()
        )));
    }
    let norm = init.norm();
    if !(norm > 0.0 && norm.is_finite()) {
        return Err(Error::Domain("initial flux must be nonzero and finite".into()));
    }
    let stepper = FullStepper::new(problem)?;
    let rank = problem.n_space().min(problem.n_energy());
    let mut phi = init / norm;
    let mut k = 1.0;
    let mut history = ConvergenceHistory::default();
    for _ in 0..max_iter {
        let start = Instant::now();
        let next = stepper.update(&phi)?;
        let k_next = next.norm();
        if k_next == 0.0 {
            return Err(Error::Degenerate("power update vanished".into()));
        }
        phi = next / k_next;
        let delta = (k_next - k).abs();
        k = k_next;
        history.push(k, delta, rank, start.elapsed().as_secs_f64());
        log::debug!("full iteration {}: k = {k:.12}, delta = {delta:.3e}", history.iterations());
        if delta <= eps {
            history.converged = true;
            return Ok(FullSolution { k_eff: k, phi, history });
        }
    }
    Err(Error::NotConverged {
        history: Box::new(history),
    })
}

pub fn full_power_iteration(ops: &OperatorSet, init: FullInit, eps: f64, max_iter: usize) -> Result<FullSolution> {
    let problem = ops.problem()?;
    let init = match init {
        FullInit::Ones => Mat::from_element(ops.n_cells, ops.n_groups, 1.0),
        FullInit::Given(phi) => phi,
    };
    full_iterate(&problem, &init, eps, max_iter)
}
