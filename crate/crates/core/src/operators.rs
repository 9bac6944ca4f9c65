//! Assembly of the discrete multigroup diffusion operators
//!
//! ```text
//! L(φ) = −Σ_{ℓ,k} D⁽ℓ,ᵏ⁾ φ M⁽ℓ,ᵏ⁾ + Σ_ℓ ρ⁽ℓ⁾ φ Σ⁽ℓ⁾,    F(φ) = Σ_ℓ ρ⁽ℓ⁾ φ Σ̃_f⁽ℓ⁾
//! ```
//!
//! with `φ ∈ ℝ^{N_x×G}`. Energy matrices act from the right, so entry
//! `(g', g)` of `Σ_s` and `Σ̃_f` moves neutrons from group `g'` into group `g`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kron_solve::MultiTermSystem;
use crate::materials::{interface_diffusion_factor, DensityField, MaterialLibrary};
use crate::mesh::SpatialMesh;
use crate::problem::SeparableProblem;
use crate::{Mat, Vector};

/// Treatment of the outer sphere surface.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OuterBoundary {
    /// Zero flux in a ghost cell of the outermost material; only the leakage
    /// term on the diagonal survives.
    #[default]
    ZeroFlux,
    /// No net current through the outer surface (infinite-medium behaviour
    /// for a homogeneous sphere).
    Reflective,
}

/// Tridiagonal `n × n` matrix; `lower[j]` is entry `(j+1, j)`, `upper[j]` is `(j, j+1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Tridiagonal {
    pub fn zeros(n: usize) -> Self {
        let off = n.saturating_sub(1);
        Self {
            lower: vec![0.0; off],
            diag: vec![0.0; n],
            upper: vec![0.0; off],
        }
    }

    pub fn size(&self) -> usize {
        self.diag.len()
    }

    pub fn is_zero(&self) -> bool {
        self.lower.iter().chain(&self.diag).chain(&self.upper).all(|&v| v == 0.0)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i == j {
            self.diag[i]
        } else if j == i + 1 {
            self.upper[i]
        } else if i == j + 1 {
            self.lower[j]
        } else {
            0.0
        }
    }

    fn add(&mut self, i: usize, j: usize, value: f64) {
        if i == j {
            self.diag[i] += value;
        } else if j == i + 1 {
            self.upper[i] += value;
        } else if i == j + 1 {
            self.lower[j] += value;
        } else {
            unreachable!("({i}, {j}) outside the tridiagonal band");
        }
    }

    pub fn to_dense(&self) -> Mat {
        let n = self.size();
        Mat::from_fn(n, n, |i, j| self.get(i, j))
    }

    /// `self · x`.
    pub fn mul(&self, x: &Mat) -> Mat {
        let n = self.size();
        Mat::from_fn(n, x.ncols(), |i, c| {
            let mut v = self.diag[i] * x[(i, c)];
            if i + 1 < n {
                v += self.upper[i] * x[(i + 1, c)];
            }
            if i > 0 {
                v += self.lower[i - 1] * x[(i - 1, c)];
            }
            v
        })
    }
}

/// Every matrix of the discrete eigenproblem. Immutable after assembly.
#[derive(Debug, Clone)]
pub struct OperatorSet {
    pub n_cells: usize,
    pub n_groups: usize,
    pub n_materials: usize,
    /// Geometry-weighted stencils `D⁽ℓ,ᵏ⁾` (1/cm²); identically zero pairs are omitted.
    pub spatial_stencils: BTreeMap<(usize, usize), Tridiagonal>,
    /// Diagonals of `M⁽ℓ,ᵏ⁾`, `D_g⁽ℓ⁾D_g⁽ᵏ⁾/(D_g⁽ℓ⁾+D_g⁽ᵏ⁾)`, for the same pairs.
    pub energy_diffusion: BTreeMap<(usize, usize), Vector>,
    /// Diagonals of `ρ⁽ℓ⁾`.
    pub density_diagonals: Vec<Vector>,
    /// `Σ⁽ℓ⁾ = diag(Σ_t) − Σ_s` (1/cm).
    pub removal: Vec<Mat>,
    /// `Σ̃_f⁽ℓ⁾`, entry `(g', g) = νΣ_f,g' χ_g` (1/cm).
    pub fission: Vec<Mat>,
}

pub fn assemble_operators(
    mesh: &SpatialMesh,
    library: &MaterialLibrary,
    density: &DensityField,
    boundary: OuterBoundary,
) -> Result<OperatorSet> {
    let n = mesh.n_cells;
    let groups = library.groups;
    let n_materials = library.n_materials();
    if density.n_cells() != n {
        return Err(Error::Dimension(format!(
            "density field has {} cells, mesh has {n}",
            density.n_cells()
        )));
    }
    if density.n_materials() != n_materials {
        return Err(Error::Dimension(format!(
            "density field has {} materials, library has {n_materials}",
            density.n_materials()
        )));
    }
    if let Some(m) = library.materials.iter().find(|m| m.groups() != groups) {
        return Err(Error::Dimension(format!(
            "material `{}` has {} groups, library declares {groups}",
            m.name,
            m.groups()
        )));
    }

    let rho = &density.rho;
    let mut stencils: BTreeMap<(usize, usize), Tridiagonal> = BTreeMap::new();
    for j in 0..n {
        let scale = 1.0 / (mesh.dr * mesh.volumes[j]);
        let mut faces: Vec<(usize, f64, bool)> = Vec::with_capacity(2);
        if j > 0 {
            faces.push((j - 1, mesh.surfaces[j], true));
        }
        if j + 1 < n {
            faces.push((j + 1, mesh.surfaces[j + 1], true));
        } else if boundary == OuterBoundary::ZeroFlux {
            // Ghost cell beyond R carries the densities of cell j; its
            // off-diagonal coupling is dropped because the ghost flux is zero.
            faces.push((j, mesh.surfaces[j + 1], false));
        }
        for (neighbour, surface, coupled) in faces {
            for l in 0..n_materials {
                for k in 0..n_materials {
                    let (rl, rk) = (rho[(j, l)], rho[(neighbour, k)]);
                    let weight = rl * rk * (rl + rk) * surface * scale;
                    if weight == 0.0 {
                        continue;
                    }
                    let stencil = stencils.entry((l, k)).or_insert_with(|| Tridiagonal::zeros(n));
                    if coupled {
                        stencil.add(j, neighbour, weight);
                    }
                    stencil.add(j, j, -weight);
                }
            }
        }
    }
    stencils.retain(|_, s| !s.is_zero());

    let mut energy_diffusion = BTreeMap::new();
    for &(l, k) in stencils.keys() {
        let (dl, dk) = (&library.materials[l].diffusion, &library.materials[k].diffusion);
        let diag = (0..groups)
            .map(|g| interface_diffusion_factor(dl[g], dk[g]))
            .collect::<Result<Vec<_>>>()?;
        energy_diffusion.insert((l, k), Vector::from_vec(diag));
    }

    let density_diagonals = (0..n_materials)
        .map(|l| Vector::from_iterator(n, rho.column(l).iter().copied()))
        .collect();
    let removal = library
        .materials
        .iter()
        .map(|m| Mat::from_diagonal(&Vector::from_vec(m.sigma_t.clone())) - &m.sigma_s)
        .collect();
    let fission = library
        .materials
        .iter()
        .map(|m| Mat::from_fn(groups, groups, |src, dst| m.nu_sigma_f[src] * m.chi[dst]))
        .collect();

    Ok(OperatorSet {
        n_cells: n,
        n_groups: groups,
        n_materials,
        spatial_stencils: stencils,
        energy_diffusion,
        density_diagonals,
        removal,
        fission,
    })
}

fn scale_rows(diag: &Vector, x: &Mat) -> Mat {
    Mat::from_fn(x.nrows(), x.ncols(), |i, c| diag[i] * x[(i, c)])
}

fn scale_columns(x: &Mat, diag: &Vector) -> Mat {
    Mat::from_fn(x.nrows(), x.ncols(), |i, c| x[(i, c)] * diag[c])
}

impl OperatorSet {
    /// Active `(ℓ, k)` pairs, in the order of the loss operator's `−` terms.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        self.spatial_stencils.keys().copied().collect()
    }

    fn check_shape(&self, phi: &Mat) -> Result<()> {
        if phi.shape() != (self.n_cells, self.n_groups) {
            return Err(Error::Dimension(format!(
                "flux is {}×{}, expected {}×{}",
                phi.nrows(),
                phi.ncols(),
                self.n_cells,
                self.n_groups
            )));
        }
        Ok(())
    }

    /// `−Σ D⁽ℓ,ᵏ⁾ φ M⁽ℓ,ᵏ⁾ + Σ ρ⁽ℓ⁾ φ Σ⁽ℓ⁾`.
    pub fn apply_lhs(&self, phi: &Mat) -> Result<Mat> {
        self.check_shape(phi)?;
        let mut out = Mat::zeros(self.n_cells, self.n_groups);
        for (pair, stencil) in &self.spatial_stencils {
            out -= scale_columns(&stencil.mul(phi), &self.energy_diffusion[pair]);
        }
        for (rho, removal) in self.density_diagonals.iter().zip(&self.removal) {
            out += scale_rows(rho, phi) * removal;
        }
        Ok(out)
    }

    /// `Σ ρ⁽ℓ⁾ φ Σ̃_f⁽ℓ⁾`.
    pub fn apply_fission(&self, phi: &Mat) -> Result<Mat> {
        self.check_shape(phi)?;
        let mut out = Mat::zeros(self.n_cells, self.n_groups);
        for (rho, fission) in self.density_diagonals.iter().zip(&self.fission) {
            out += scale_rows(rho, phi) * fission;
        }
        Ok(out)
    }

    /// Dense Kronecker-term form of the eigenproblem.
    ///
    /// Term order: loss `−` terms follow [`OperatorSet::pairs`] as
    /// `(D⁽ℓ,ᵏ⁾, M⁽ℓ,ᵏ⁾)`, loss `+` terms are `(ρ⁽ℓ⁾, Σ⁽ℓ⁾)` per material, and
    /// source terms are `(ρ⁽ℓ⁾, Σ̃_f⁽ℓ⁾)` per material.
    pub fn problem(&self) -> Result<SeparableProblem> {
        let (n, g) = (self.n_cells, self.n_groups);
        let minus = self
            .spatial_stencils
            .iter()
            .map(|(pair, s)| (s.to_dense(), Mat::from_diagonal(&self.energy_diffusion[pair])))
            .collect();
        let rho: Vec<Mat> = self.density_diagonals.iter().map(Mat::from_diagonal).collect();
        let plus = rho.iter().cloned().zip(self.removal.iter().cloned()).collect();
        let source = rho.into_iter().zip(self.fission.iter().cloned()).collect();
        SeparableProblem::new(
            MultiTermSystem::new(n, g, minus, plus)?,
            MultiTermSystem::positive(n, g, source)?,
        )
    }
}
