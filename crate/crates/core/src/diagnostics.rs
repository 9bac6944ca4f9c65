//! Post-processing: dominant modes, energy-range integrals, average spectra
//! and storage counts.

use crate::error::{Error, Result};
use crate::linalg::sorted_svd;
use crate::materials::EnergyGrid;
use crate::power_dlra::LowRankState;
use crate::{Mat, Vector};

/// Upper edge of the thermal range (eV).
pub const THERMAL_UPPER_EV: f64 = 5.0;
/// Upper edge of the epithermal range (eV).
pub const EPITHERMAL_UPPER_EV: f64 = 5e5;
pub const RANGE_NAMES: [&str; 3] = ["thermal", "epithermal", "fast"];

/// Orthonormal modes `X̂ = XU`, `Ŵ = WV` of `φ = X̂ Σ Ŵᵀ`.
#[derive(Debug, Clone)]
pub struct Modes {
    /// Descending.
    pub singular_values: Vec<f64>,
    pub spatial: Mat,
    pub energy: Mat,
}

impl Modes {
    pub fn reconstruct(&self) -> Mat {
        &self.spatial * Mat::from_diagonal(&Vector::from_row_slice(&self.singular_values)) * self.energy.transpose()
    }
}

/// Flip mode pairs so the first clearly nonzero entry of each spatial mode is positive.
fn fix_signs(spatial: &mut Mat, energy: &mut Mat) {
    for i in 0..spatial.ncols() {
        let col = spatial.column(i);
        let scale = col.amax();
        let lead = col.iter().copied().find(|v| v.abs() > 1e-12 * scale).unwrap_or(0.0);
        if lead < 0.0 {
            spatial.column_mut(i).neg_mut();
            energy.column_mut(i).neg_mut();
        }
    }
}

/// SVD `S = UΣVᵀ` of the coefficients, lifted to the bases.
pub fn extract_modes(state: &LowRankState) -> Modes {
    let svd = sorted_svd(&state.s);
    let mut spatial = &state.x * svd.u;
    let mut energy = &state.w * svd.v;
    fix_signs(&mut spatial, &mut energy);
    Modes {
        singular_values: svd.sigma,
        spatial,
        energy,
    }
}

/// Leading `rank` modes of a dense flux.
pub fn extract_modes_dense(phi: &Mat, rank: usize) -> Modes {
    let svd = sorted_svd(phi);
    let rank = rank.min(svd.sigma.len());
    let mut spatial = svd.u.columns(0, rank).into_owned();
    let mut energy = svd.v.columns(0, rank).into_owned();
    fix_signs(&mut spatial, &mut energy);
    Modes {
        singular_values: svd.sigma[..rank].to_vec(),
        spatial,
        energy,
    }
}

fn require_grid<'a>(grid: Option<&'a EnergyGrid>, groups: usize, what: &str) -> Result<&'a EnergyGrid> {
    let grid = grid.ok_or_else(|| Error::DiagnosticDisabled(format!("{what} needs an energy grid")))?;
    if grid.n_groups() != groups {
        return Err(Error::Dimension(format!(
            "energy grid has {} groups, flux has {groups}",
            grid.n_groups()
        )));
    }
    Ok(grid)
}

/// Per-cell flux in the thermal `[0, 5]`, epithermal `(5, 5e5]` and fast
/// `(5e5, ∞)` eV ranges, columns in that order. A group straddling a range
/// edge contributes in proportion to its overlap.
pub fn energy_range_flux(phi: &Mat, grid: Option<&EnergyGrid>) -> Result<Mat> {
    let grid = require_grid(grid, phi.ncols(), "energy-range flux")?;
    let ranges = [(0.0, THERMAL_UPPER_EV), (THERMAL_UPPER_EV, EPITHERMAL_UPPER_EV), (EPITHERMAL_UPPER_EV, f64::INFINITY)];
    let shares: Vec<[f64; 3]> = grid
        .edges
        .windows(2)
        .map(|w| {
            let (hi, lo) = (w[0], w[1]);
            ranges.map(|(a, b)| (hi.min(b) - lo.max(a)).max(0.0) / (hi - lo))
        })
        .collect();
    Ok(Mat::from_fn(phi.nrows(), 3, |j, r| {
        shares.iter().enumerate().map(|(g, s)| s[r] * phi[(j, g)]).sum()
    }))
}

/// `φ_g / ΔE_g`.
pub fn average_spectrum(phi: &Mat, grid: Option<&EnergyGrid>) -> Result<Mat> {
    let grid = require_grid(grid, phi.ncols(), "average spectrum")?;
    let widths = grid.widths();
    Ok(Mat::from_fn(phi.nrows(), phi.ncols(), |j, g| phi[(j, g)] / widths[g]))
}

/// Entry counts (not bytes) for the full and low-rank methods.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MemoryReport {
    /// Vectorized full system `N_x²·G²`.
    pub full_entries: u64,
    /// K- and L-step systems `r²·N_x² + r²·G²`.
    pub dlra_entries: u64,
    /// S-step system `r⁴`.
    pub s_step_entries: u64,
    /// Full flux `N_x·G`.
    pub solution_full: u64,
    /// Factors `N_x·r + G·r + r²`.
    pub solution_dlra: u64,
}

pub fn memory_report(n_x: u64, g: u64, r: u64) -> MemoryReport {
    MemoryReport {
        full_entries: n_x * n_x * g * g,
        dlra_entries: r * r * n_x * n_x + r * r * g * g,
        s_step_entries: r.pow(4),
        solution_full: n_x * g,
        solution_dlra: n_x * r + g * r + r * r,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{gaussian_matrix, orthonormality_error, qr_positive};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_state(n: usize, g: usize, r: usize, seed: u64) -> LowRankState {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = qr_positive(&gaussian_matrix(n, r, &mut rng)).0;
        let w = qr_positive(&gaussian_matrix(g, r, &mut rng)).0;
        let s = gaussian_matrix(r, r, &mut rng);
        LowRankState::new(x, &s / s.norm(), w).unwrap()
    }

    #[test]
    fn identity_coefficients() {
        let mut state = random_state(6, 4, 3, 0);
        state.s = Mat::identity(3, 3);
        let modes = extract_modes(&state);
        assert!(modes.singular_values.iter().all(|s| (s - 1.0).abs() < 1e-14));
        // Same span as X.
        let p = &state.x * state.x.transpose();
        assert!((&p * &modes.spatial - &modes.spatial).norm() < 1e-12);
    }

    #[test]
    fn diagonal_coefficients() {
        let mut state = random_state(5, 5, 2, 1);
        state.s = Mat::from_diagonal(&Vector::from_vec(vec![2.0, 1.0])) / 5f64.sqrt();
        let modes = extract_modes(&state);
        assert!((modes.singular_values[0] - 2.0 / 5f64.sqrt()).abs() < 1e-14);
        assert!((modes.singular_values[1] - 1.0 / 5f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn modes_reconstruct_and_are_orthonormal() {
        for seed in 0..10 {
            let state = random_state(12, 7, 4, seed);
            let modes = extract_modes(&state);
            assert!((modes.reconstruct() - state.reconstruct()).norm() <= 1e-12);
            assert!(orthonormality_error(&modes.spatial) <= 1e-10);
            assert!(orthonormality_error(&modes.energy) <= 1e-10);
            assert!(modes.singular_values.windows(2).all(|w| w[0] >= w[1] && w[1] >= 0.0));
            for col in modes.spatial.column_iter() {
                let lead = col.iter().find(|v| v.abs() > 1e-12).unwrap();
                assert!(*lead > 0.0);
            }
        }
    }

    #[test]
    fn dense_modes_match_low_rank_modes() {
        let state = random_state(9, 6, 3, 4);
        let a = extract_modes(&state);
        let b = extract_modes_dense(&state.reconstruct(), 3);
        for (x, y) in a.singular_values.iter().zip(&b.singular_values) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!((a.spatial - b.spatial).norm() < 1e-8);
    }

    #[test]
    fn aligned_energy_ranges() {
        let grid = EnergyGrid::new(vec![1e7, 5e5, 5.0, 0.0]).unwrap();
        let phi = Mat::from_row_slice(1, 3, &[1.0, 2.0, 3.0]);
        let out = energy_range_flux(&phi, Some(&grid)).unwrap();
        assert_eq!(out.row(0).iter().copied().collect::<Vec<_>>(), vec![3.0, 2.0, 1.0]);
        let fast_only = Mat::from_row_slice(1, 3, &[4.0, 0.0, 0.0]);
        let out = energy_range_flux(&fast_only, Some(&grid)).unwrap();
        assert_eq!((out[(0, 0)], out[(0, 1)], out[(0, 2)]), (0.0, 0.0, 4.0));
    }

    #[test]
    fn straddling_groups_split_like_a_fine_grid() {
        // Coarse groups cross both range edges.
        let coarse = EnergyGrid::new(vec![2e6, 1e5, 1.0, 0.0]).unwrap();
        let phi = Mat::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 0.5, 0.0, 7.0]);
        let out = energy_range_flux(&phi, Some(&coarse)).unwrap();
        // Fine-grid oracle: spread each group uniformly over 10⁴ sub-bins and
        // classify sub-bins by their midpoint.
        let bins = 10_000;
        for j in 0..2 {
            let mut expected = [0.0; 3];
            for g in 0..3 {
                let (hi, lo) = (coarse.edges[g], coarse.edges[g + 1]);
                for b in 0..bins {
                    let mid = lo + (hi - lo) * (b as f64 + 0.5) / bins as f64;
                    let r = if mid <= 5.0 { 0 } else if mid <= 5e5 { 1 } else { 2 };
                    expected[r] += phi[(j, g)] / bins as f64;
                }
            }
            for r in 0..3 {
                assert!((out[(j, r)] - expected[r]).abs() <= 1e-3 * phi.row(j).sum());
            }
            assert!((out.row(j).sum() - phi.row(j).sum()).abs() <= 1e-12);
        }
    }

    #[test]
    fn missing_grid_disables_diagnostics() {
        let phi = Mat::zeros(2, 2);
        assert!(matches!(energy_range_flux(&phi, None), Err(Error::DiagnosticDisabled(_))));
        assert!(matches!(average_spectrum(&phi, None), Err(Error::DiagnosticDisabled(_))));
    }

    #[test]
    fn average_spectrum_examples() {
        let grid = EnergyGrid::new(vec![4.0, 0.0]).unwrap();
        let out = average_spectrum(&Mat::from_element(1, 1, 2.0), Some(&grid)).unwrap();
        assert_eq!(out[(0, 0)], 0.5);
        let uniform = EnergyGrid::new(vec![3.0, 2.0, 1.0, 0.0]).unwrap();
        let out = average_spectrum(&Mat::from_element(2, 3, 5.0), Some(&uniform)).unwrap();
        assert!(out.iter().all(|&v| v == 5.0));
        let grid = EnergyGrid::new(vec![1e7, 3e3, 0.7, 1e-5]).unwrap();
        let phi = Mat::from_row_slice(1, 3, &[0.2, 1.1, 3.3]);
        let back = Mat::from_fn(1, 3, |j, g| average_spectrum(&phi, Some(&grid)).unwrap()[(j, g)] * grid.widths()[g]);
        assert!((back - phi).norm() < 1e-15);
    }

    #[test]
    fn memory_counts() {
        let m = memory_report(100, 87, 10);
        assert_eq!(m.full_entries, 75_690_000);
        assert_eq!(m.dlra_entries, 1_756_900);
        assert_eq!(memory_report(400, 361, 25).full_entries, 20_851_360_000);
        assert_eq!(m.solution_full, 8700);
        assert_eq!(m.solution_dlra, 1000 + 870 + 100);
        assert_eq!(m.s_step_entries, 10_000);
    }
}
