//! Multigroup material constants, the material library document, and
//! per-cell material densities.

pub mod synthetic;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::SpatialMesh;
use crate::Mat;

const CHI_TOLERANCE: f64 = 1e-10;

/// Group constants of one material. Group 1 (index 0) is the fastest group.
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialRecord {
    pub name: String,
    /// Diffusion coefficients `D_g` (cm).
    pub diffusion: Vec<f64>,
    /// Total cross sections `Σ_t,g` (1/cm).
    pub sigma_t: Vec<f64>,
    /// Scattering matrix; entry `(g', g)` is `Σ_s,g'→g` (1/cm).
    pub sigma_s: Mat,
    /// `νΣ_f,g` (1/cm).
    pub nu_sigma_f: Vec<f64>,
    /// Fission emission spectrum `χ_g`.
    pub chi: Vec<f64>,
}

impl MaterialRecord {
    pub fn groups(&self) -> usize {
        self.diffusion.len()
    }

    pub fn is_fissile(&self) -> bool {
        self.nu_sigma_f.iter().any(|&v| v > 0.0) && self.chi.iter().any(|&v| v > 0.0)
    }
}

/// Group boundaries in eV, descending: group `g` spans `[edges[g+1], edges[g]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyGrid {
    pub edges: Vec<f64>,
}

impl EnergyGrid {
    pub fn new(edges: Vec<f64>) -> Result<Self> {
        if edges.len() < 2 {
            return Err(Error::config("energy_edges_ev", "at least two edges are required"));
        }
        if edges.iter().any(|e| !e.is_finite() || *e < 0.0) {
            return Err(Error::config("energy_edges_ev", "edges must be finite and non-negative"));
        }
        if let Some(g) = edges.windows(2).position(|w| w[1] >= w[0]) {
            return Err(Error::config(
                format!("energy_edges_ev[{}]", g + 1),
                "edges must be strictly decreasing",
            ));
        }
        Ok(Self { edges })
    }

    pub fn n_groups(&self) -> usize {
        self.edges.len() - 1
    }

    /// Group widths `ΔE_g`.
    pub fn widths(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| w[0] - w[1]).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaterialLibrary {
    pub groups: usize,
    pub energy_grid: Option<EnergyGrid>,
    pub materials: Vec<MaterialRecord>,
}

impl MaterialLibrary {
    pub fn n_materials(&self) -> usize {
        self.materials.len()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.materials.iter().position(|m| m.name == name)
    }

    pub fn first_fissile(&self) -> Option<&MaterialRecord> {
        self.materials.iter().find(|m| m.is_fissile())
    }

    /// Serialize to the TOML library document.
    pub fn to_toml(&self) -> String {
        let doc = LibraryDocument {
            groups: self.groups,
            energy_edges_ev: self.energy_grid.as_ref().map(|g| g.edges.clone()),
            materials: self
                .materials
                .iter()
                .map(|m| MaterialDocument {
                    name: m.name.clone(),
                    diffusion: m.diffusion.clone(),
                    sigma_t: m.sigma_t.clone(),
                    sigma_s: (0..m.groups())
                        .map(|row| m.sigma_s.row(row).iter().copied().collect())
                        .collect(),
                    nu_sigma_f: m.nu_sigma_f.clone(),
                    chi: m.chi.clone(),
                })
                .collect(),
        };
        toml::to_string(&doc).expect("library document is always serializable")
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LibraryDocument {
    groups: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    energy_edges_ev: Option<Vec<f64>>,
    materials: Vec<MaterialDocument>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MaterialDocument {
    name: String,
    diffusion: Vec<f64>,
    sigma_t: Vec<f64>,
    sigma_s: Vec<Vec<f64>>,
    nu_sigma_f: Vec<f64>,
    chi: Vec<f64>,
}

/// Parse and validate a material library document.
pub fn load_material_library(document: &str) -> Result<MaterialLibrary> {
    let doc: LibraryDocument = toml::from_str(document)
        .map_err(|e| Error::config("<library>", e.message().to_string()))?;
    let groups = doc.groups;
    if groups == 0 {
        return Err(Error::config("groups", "at least one energy group is required"));
    }
    if doc.materials.is_empty() {
        return Err(Error::config("materials", "library defines no materials"));
    }
    let energy_grid = match doc.energy_edges_ev {
        Some(edges) => {
            if edges.len() != groups + 1 {
                return Err(Error::config(
                    "energy_edges_ev",
                    format!("expected {} edges for {groups} groups, got {}", groups + 1, edges.len()),
                ));
            }
            Some(EnergyGrid::new(edges)?)
        }
        None => None,
    };

    let mut materials = Vec::with_capacity(doc.materials.len());
    for (index, m) in doc.materials.into_iter().enumerate() {
        let base = format!("materials[{index}]");
        if materials.iter().any(|other: &MaterialRecord| other.name == m.name) {
            return Err(Error::config(format!("{base}.name"), format!("duplicate material `{}`", m.name)));
        }
        let vectors = [
            ("diffusion", &m.diffusion),
            ("sigma_t", &m.sigma_t),
            ("nu_sigma_f", &m.nu_sigma_f),
            ("chi", &m.chi),
        ];
        for (field, values) in vectors {
            check_group_count(&base, field, values.len(), groups)?;
            if let Some(g) = values.iter().position(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::config(
                    format!("{base}.{field}[{g}]"),
                    format!("negative or non-finite cross section {}", values[g]),
                ));
            }
        }
        if let Some(g) = m.diffusion.iter().position(|&d| d <= 0.0) {
            return Err(Error::config(
                format!("{base}.diffusion[{g}]"),
                "diffusion coefficients must be positive",
            ));
        }
        check_group_count(&base, "sigma_s", m.sigma_s.len(), groups)?;
        let mut sigma_s = Mat::zeros(groups, groups);
        for (src, row) in m.sigma_s.iter().enumerate() {
            check_group_count(&base, &format!("sigma_s[{src}]"), row.len(), groups)?;
            for (dst, &v) in row.iter().enumerate() {
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::config(
                        format!("{base}.sigma_s[{src}][{dst}]"),
                        format!("negative or non-finite cross section {v}"),
                    ));
                }
                sigma_s[(src, dst)] = v;
            }
        }
        let chi_sum: f64 = m.chi.iter().sum();
        let chi_zero = m.chi.iter().all(|&c| c == 0.0);
        if !chi_zero && (chi_sum - 1.0).abs() > CHI_TOLERANCE {
            return Err(Error::config(
                format!("{base}.chi"),
                format!("chi not normalized (sum = {chi_sum})"),
            ));
        }
        materials.push(MaterialRecord {
            name: m.name,
            diffusion: m.diffusion,
            sigma_t: m.sigma_t,
            sigma_s,
            nu_sigma_f: m.nu_sigma_f,
            chi: m.chi,
        });
    }
    Ok(MaterialLibrary {
        groups,
        energy_grid,
        materials,
    })
}

fn check_group_count(base: &str, field: &str, len: usize, groups: usize) -> Result<()> {
    if len != groups {
        return Err(Error::config(
            format!("{base}.{field}"),
            format!("group count mismatch: expected {groups}, got {len}"),
        ));
    }
    Ok(())
}

/// Per-cell material indicator densities `ρ_ℓ(r_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    /// `N_x × N_m`, entry `(j, ℓ)` is the density of material `ℓ` in cell `j`.
    pub rho: Mat,
}

impl DensityField {
    /// Wrap an explicit indicator matrix; every row must hold a single 1.
    pub fn from_indicators(rho: Mat) -> Result<Self> {
        for j in 0..rho.nrows() {
            let row = rho.row(j);
            let ones = row.iter().filter(|&&v| v == 1.0).count();
            let zeros = row.iter().filter(|&&v| v == 0.0).count();
            if ones != 1 || ones + zeros != row.len() {
                return Err(Error::config(
                    format!("density[{j}]"),
                    "densities must be material indicators (one 1 per cell)",
                ));
            }
        }
        Ok(Self { rho })
    }

    pub fn n_cells(&self) -> usize {
        self.rho.nrows()
    }

    pub fn n_materials(&self) -> usize {
        self.rho.ncols()
    }

    /// The material occupying cell `j`.
    pub fn material_of(&self, j: usize) -> usize {
        self.rho
            .row(j)
            .iter()
            .position(|&v| v == 1.0)
            .expect("indicator density has a unit entry per cell")
    }
}

/// A spherical shell `(r_prev, outer_radius_cm]` filled with one material.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Shell {
    pub outer_radius_cm: f64,
    pub material: String,
}

impl Shell {
    pub fn new(outer_radius_cm: f64, material: impl Into<String>) -> Self {
        Self {
            outer_radius_cm,
            material: material.into(),
        }
    }
}

/// Assign each cell the material of the shell containing its center.
pub fn build_density_field(
    mesh: &SpatialMesh,
    library: &MaterialLibrary,
    shells: &[Shell],
) -> Result<DensityField> {
    let Some(last) = shells.last() else {
        return Err(Error::config("shells", "at least one shell is required"));
    };
    let mut indices = Vec::with_capacity(shells.len());
    for (i, shell) in shells.iter().enumerate() {
        if !(shell.outer_radius_cm.is_finite() && shell.outer_radius_cm > 0.0) {
            return Err(Error::config(format!("shells[{i}].outer_radius_cm"), "radius must be positive"));
        }
        if i > 0 && shell.outer_radius_cm <= shells[i - 1].outer_radius_cm {
            return Err(Error::config(
                format!("shells[{i}].outer_radius_cm"),
                "shell radii not increasing",
            ));
        }
        let index = library.index_of(&shell.material).ok_or_else(|| {
            Error::config(
                format!("shells[{i}].material"),
                format!("unknown material `{}`", shell.material),
            )
        })?;
        indices.push(index);
    }
    let radius = mesh.total_radius();
    let mismatch = (last.outer_radius_cm - radius) / radius;
    if mismatch < -1e-12 {
        return Err(Error::config(
            format!("shells[{}].outer_radius_cm", shells.len() - 1),
            format!("uncovered radius range ({} cm < mesh radius {radius} cm)", last.outer_radius_cm),
        ));
    }
    if mismatch > 1e-12 {
        return Err(Error::config(
            format!("shells[{}].outer_radius_cm", shells.len() - 1),
            format!("shell overlaps the mesh boundary ({} cm > mesh radius {radius} cm)", last.outer_radius_cm),
        ));
    }
    let mut rho = Mat::zeros(mesh.n_cells, library.n_materials());
    for (j, &center) in mesh.centers.iter().enumerate() {
        let shell = shells
            .iter()
            .position(|s| center <= s.outer_radius_cm)
            .unwrap_or(shells.len() - 1);
        rho[(j, indices[shell])] = 1.0;
    }
    Ok(DensityField { rho })
}

/// `D_l D_k / (D_l + D_k)`, half the harmonic mean of two diffusion coefficients.
pub fn interface_diffusion_factor(d_l: f64, d_k: f64) -> Result<f64> {
    if !(d_l > 0.0 && d_k > 0.0) {
        return Err(Error::Domain(format!(
            "diffusion coefficients must be positive, got ({d_l}, {d_k})"
        )));
    }
    Ok(d_l * d_k / (d_l + d_k))
}
