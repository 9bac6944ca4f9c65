//! Uniform 1-D spherical finite-volume mesh.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Radial mesh of `n_cells` equal shells covering `[0, R]`.
///
/// `surfaces[j]` is the area of the sphere through `edges[j]`, so the inner
/// surface of the first cell is zero and the center needs no boundary
/// condition.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialMesh {
    pub n_cells: usize,
    /// Uniform cell width Δr (cm).
    pub dr: f64,
    /// `n_cells + 1` edge radii (cm), `edges[0] = 0`, `edges[n_cells] = R`.
    pub edges: Vec<f64>,
    /// Cell-center radii (cm).
    pub centers: Vec<f64>,
    /// Shell volumes (cm³).
    pub volumes: Vec<f64>,
    /// Surface area at each edge (cm²).
    pub surfaces: Vec<f64>,
}

impl SpatialMesh {
    pub fn total_radius(&self) -> f64 {
        self.edges[self.n_cells]
    }

    pub fn total_volume(&self) -> f64 {
        self.volumes.iter().sum()
    }
}

pub fn build_spherical_mesh(total_radius: f64, n_cells: usize) -> Result<SpatialMesh> {
    if !(total_radius.is_finite() && total_radius > 0.0) {
        return Err(Error::config(
            "mesh.radius_cm",
            format!("radius must be positive, got {total_radius}"),
        ));
    }
    if n_cells == 0 {
        return Err(Error::config("mesh.n_cells", "at least one cell is required"));
    }
    let dr = total_radius / n_cells as f64;
    // Pin the last edge to R exactly so the volume sum telescopes to (4π/3)R³.
    let edges: Vec<f64> = (0..=n_cells)
        .map(|j| if j == n_cells { total_radius } else { j as f64 * dr })
        .collect();
    let centers = edges.windows(2).map(|e| 0.5 * (e[0] + e[1])).collect();
    let volumes = edges
        .windows(2)
        .map(|e| 4.0 * PI / 3.0 * (e[1].powi(3) - e[0].powi(3)))
        .collect();
    let surfaces = edges.iter().map(|r| 4.0 * PI * r * r).collect();
    Ok(SpatialMesh {
        n_cells,
        dr,
        edges,
        centers,
        volumes,
        surfaces,
    })
}
