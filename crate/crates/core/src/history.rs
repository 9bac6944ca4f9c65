/// Per-iteration record of an inverse power iteration.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConvergenceHistory {
    /// `k` after each iteration.
    pub k_estimates: Vec<f64>,
    /// `|k_{n+1} - k_n|`, with `k_0 = 1`.
    pub deltas: Vec<f64>,
    /// Rank carried after each iteration (`min(N_x, G)` for the dense solver).
    pub ranks: Vec<usize>,
    /// Wall-clock seconds spent in each iteration.
    pub wall_times: Vec<f64>,
    /// Discarded singular-value tail per step (rank-adaptive runs only).
    pub discarded: Vec<f64>,
    /// Absolute truncation tolerance in effect per step (rank-adaptive runs only).
    pub thresholds: Vec<f64>,
    pub converged: bool,
}

impl ConvergenceHistory {
    pub fn iterations(&self) -> usize {
        self.k_estimates.len()
    }

    pub fn last_delta(&self) -> f64 {
        self.deltas.last().copied().unwrap_or(f64::NAN)
    }

    pub fn last_k(&self) -> Option<f64> {
        self.k_estimates.last().copied()
    }

    pub(crate) fn push(&mut self, k: f64, delta: f64, rank: usize, seconds: f64) {
        self.k_estimates.push(k);
        self.deltas.push(delta);
        self.ranks.push(rank);
        self.wall_times.push(seconds);
    }
}
