//! Dispatch a parsed config to the solvers and write every requested table.

use std::fs;
use std::path::{Path, PathBuf};

use super::config::{Overrides, ProblemConfig, SimplifiedConfig, SolverMode, ThetaKind};
use super::output::{fmt_float, numbered, write_history, write_matrix, write_table, write_truncation, Summary};
use crate::diagnostics::{average_spectrum, energy_range_flux, extract_modes, extract_modes_dense, memory_report, Modes, RANGE_NAMES};
use crate::error::{Error, Result};
use crate::history::ConvergenceHistory;
use crate::materials::{build_density_field, load_material_library, MaterialLibrary};
use crate::mesh::{build_spherical_mesh, SpatialMesh};
use crate::operators::assemble_operators;
use crate::power_dlra::{dlra_power_iteration, dlra_power_iteration_adaptive, AdaptiveOptions, DlraInit, TruncationTolerance};
use crate::power_full::{full_power_iteration, FullInit};
use crate::simplified::{construct_from_spectra, measure_rates, Construction};
use crate::Mat;

pub const EXIT_CONVERGED: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub converged: bool,
    pub out_dir: PathBuf,
    pub summary: Summary,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        if self.converged {
            EXIT_CONVERGED
        } else {
            EXIT_NOT_CONVERGED
        }
    }
}

/// Output directory of `config`, resolved against the config's directory.
pub fn output_dir(config: &ProblemConfig, base_dir: &Path) -> PathBuf {
    base_dir.join(&config.outputs.directory)
}

struct Solved {
    k_eff: f64,
    phi: Mat,
    modes: Modes,
    rank: usize,
    history: ConvergenceHistory,
}

/// Run `config`; relative paths inside it are resolved against `base_dir`.
/// Non-convergence is reported through [`RunOutcome::converged`] after the
/// history has been written.
pub fn run(config: &ProblemConfig, base_dir: &Path) -> Result<RunOutcome> {
    config.validate()?;
    let out_dir = output_dir(config, base_dir);
    fs::create_dir_all(&out_dir)?;
    match config.solver.mode {
        SolverMode::Simplified => {
            let simplified = config.simplified.as_ref().expect("validated");
            run_simplified(config, simplified, out_dir)
        }
        _ => run_diffusion(config, base_dir, out_dir),
    }
}

fn load_problem(config: &ProblemConfig, base_dir: &Path) -> Result<(SpatialMesh, MaterialLibrary, crate::operators::OperatorSet)> {
    let mesh_config = config.mesh.as_ref().expect("validated");
    let library_path = base_dir.join(config.materials_file.as_ref().expect("validated"));
    let text = fs::read_to_string(&library_path)
        .map_err(|e| Error::config("materials_file", format!("cannot read {}: {e}", library_path.display())))?;
    let library = load_material_library(&text)?;
    let mesh = build_spherical_mesh(mesh_config.radius_cm, mesh_config.n_cells)?;
    let density = build_density_field(&mesh, &library, &config.shells)?;
    let ops = assemble_operators(&mesh, &library, &density, mesh_config.boundary)?;
    Ok((mesh, library, ops))
}

fn run_diffusion(config: &ProblemConfig, base_dir: &Path, out_dir: PathBuf) -> Result<RunOutcome> {
    let (mesh, library, ops) = load_problem(config, base_dir)?;
    let s = &config.solver;
    let full_rank = ops.n_cells.min(ops.n_groups);
    let rank = s.rank.unwrap_or(full_rank);
    if matches!(s.mode, SolverMode::Dlra | SolverMode::DlraAdaptive) && rank > full_rank {
        return Err(Error::config("solver.rank", format!("exceeds min(n_cells, groups) = {full_rank}")));
    }
    let result = match s.mode {
        SolverMode::Full => full_power_iteration(&ops, FullInit::Ones, s.eps, s.max_iter).map(|sol| Solved {
            k_eff: sol.k_eff,
            modes: extract_modes_dense(&sol.phi, full_rank),
            phi: sol.phi,
            rank: full_rank,
            history: sol.history,
        }),
        SolverMode::Dlra | SolverMode::DlraAdaptive => {
            let init = DlraInit::Seeded { rank, seed: s.seed };
            let sol = if s.mode == SolverMode::Dlra {
                dlra_power_iteration(&ops, init, s.eps, s.max_iter)
            } else {
                let defaults = AdaptiveOptions::defaults(ops.n_cells, ops.n_groups);
                let theta = s.theta.unwrap_or(AdaptiveOptions::DEFAULT_RELATIVE_TOLERANCE);
                let options = AdaptiveOptions {
                    tolerance: match s.theta_kind {
                        ThetaKind::Relative => TruncationTolerance::Relative(theta),
                        ThetaKind::Absolute => TruncationTolerance::Absolute(theta),
                    },
                    r_min: s.r_min.unwrap_or(defaults.r_min),
                    r_max: s.r_max.unwrap_or(defaults.r_max),
                };
                dlra_power_iteration_adaptive(&ops, init, s.eps, options, s.max_iter)
            };
            sol.map(|sol| Solved {
                k_eff: sol.k_eff,
                phi: sol.state.reconstruct(),
                modes: extract_modes(&sol.state),
                rank: sol.state.rank(),
                history: sol.history,
            })
        }
        SolverMode::Simplified => unreachable!("dispatched earlier"),
    };

    let mut summary = Summary::default();
    summary
        .push("mode", s.mode.name())
        .push("n_cells", ops.n_cells)
        .push("groups", ops.n_groups)
        .push("seed", s.seed);
    let solved = match result {
        Ok(solved) => solved,
        Err(Error::NotConverged { history }) => {
            if config.outputs.emit_history {
                write_history(&out_dir.join("history.csv"), &history, config.outputs.emit_timing)?;
            }
            summary
                .push("converged", false)
                .push("iterations", history.iterations())
                .push("k_eff", history.last_k().map_or_else(|| "nan".into(), fmt_float))
                .push("last_delta", fmt_float(history.last_delta()))
                .push("rank", history.ranks.last().copied().unwrap_or(rank));
            summary.write(&out_dir.join("summary.txt"))?;
            return Ok(RunOutcome {
                converged: false,
                out_dir,
                summary,
            });
        }
        Err(e) => return Err(e),
    };

    let o = &config.outputs;
    if o.emit_history {
        write_history(&out_dir.join("history.csv"), &solved.history, o.emit_timing)?;
        if s.mode == SolverMode::DlraAdaptive {
            write_truncation(&out_dir.join("truncation.csv"), &solved.history)?;
        }
    }
    if o.emit_modes {
        let r = solved.modes.singular_values.len();
        write_matrix(&out_dir.join("modes_space.csv"), "cell", Some(("r_cm", &mesh.centers)), &numbered("mode", r), &solved.modes.spatial)?;
        write_matrix(&out_dir.join("modes_energy.csv"), "group", None, &numbered("mode", r), &solved.modes.energy)?;
        let rows = solved.modes.singular_values.iter().enumerate().map(|(i, v)| vec![(i + 1).to_string(), fmt_float(*v)]);
        write_table(&out_dir.join("singular_values.csv"), &["index".into(), "sigma".into()], rows)?;
    }
    if o.emit_flux {
        write_matrix(&out_dir.join("flux.csv"), "cell", Some(("r_cm", &mesh.centers)), &numbered("group", ops.n_groups), &solved.phi)?;
        match energy_range_flux(&solved.phi, library.energy_grid.as_ref()) {
            Ok(ranges) => {
                let names: Vec<String> = RANGE_NAMES.iter().map(|s| s.to_string()).collect();
                write_matrix(&out_dir.join("flux_ranges.csv"), "cell", Some(("r_cm", &mesh.centers)), &names, &ranges)?;
                let spectrum = average_spectrum(&solved.phi, library.energy_grid.as_ref())?;
                write_matrix(&out_dir.join("spectrum.csv"), "cell", Some(("r_cm", &mesh.centers)), &numbered("group", ops.n_groups), &spectrum)?;
                summary.push("flux_ranges", "written");
            }
            Err(Error::DiagnosticDisabled(reason)) => {
                log::warn!("{reason}");
                summary.push("flux_ranges", "disabled (library has no energy grid)");
            }
            Err(e) => return Err(e),
        }
    }
    if o.emit_memory {
        let m = memory_report(ops.n_cells as u64, ops.n_groups as u64, solved.rank as u64);
        let rows = [
            ("full_entries", m.full_entries),
            ("dlra_entries", m.dlra_entries),
            ("s_step_entries", m.s_step_entries),
            ("solution_full", m.solution_full),
            ("solution_dlra", m.solution_dlra),
        ]
        .into_iter()
        .map(|(k, v)| vec![k.to_string(), v.to_string()]);
        write_table(&out_dir.join("memory.csv"), &["quantity".into(), "entries".into()], rows)?;
    }
    summary
        .push("converged", true)
        .push("iterations", solved.history.iterations())
        .push("k_eff", fmt_float(solved.k_eff))
        .push("last_delta", fmt_float(solved.history.last_delta()))
        .push("rank", solved.rank);
    summary.write(&out_dir.join("summary.txt"))?;
    Ok(RunOutcome {
        converged: true,
        out_dir,
        summary,
    })
}

fn run_simplified(config: &ProblemConfig, simplified: &SimplifiedConfig, out_dir: PathBuf) -> Result<RunOutcome> {
    let s = &config.solver;
    let rank = s.rank.unwrap_or(1);
    let construction = Construction {
        random_similarity: simplified.random_similarity,
        split: simplified.split,
    };
    let columns = [
        "seed", "k_exact", "k_full", "k_dlra", "k_bound", "full_k_rate", "dlra_k_rate", "space_bound", "dlra_x_rate",
        "energy_bound", "dlra_w_rate", "full_iterations", "dlra_iterations",
    ];
    let mut rows = vec![];
    let mut worst_excess = f64::NEG_INFINITY;
    for seed in s.seed..s.seed + simplified.seeds as u64 {
        let p = construct_from_spectra(&simplified.lambdas, &simplified.sigmas, seed, construction)?;
        let r = measure_rates(&p, rank, seed, s.eps, s.max_iter)?;
        worst_excess = worst_excess.max(r.dlra_k_rate - r.k_bound);
        rows.push(vec![
            seed.to_string(),
            fmt_float(r.k_exact),
            fmt_float(r.k_full),
            fmt_float(r.k_dlra),
            fmt_float(r.k_bound),
            fmt_float(r.full_k_rate),
            fmt_float(r.dlra_k_rate),
            fmt_float(r.space_bound),
            fmt_float(r.dlra_x_rate),
            fmt_float(r.energy_bound),
            fmt_float(r.dlra_w_rate),
            r.full_iterations.to_string(),
            r.dlra_iterations.to_string(),
        ]);
    }
    let header: Vec<String> = columns.iter().map(|c| c.to_string()).collect();
    write_table(&out_dir.join("rates.csv"), &header, rows.iter().cloned())?;
    let mut summary = Summary::default();
    summary
        .push("mode", s.mode.name())
        .push("converged", true)
        .push("problems", rows.len())
        .push("rank", rank)
        .push("k_eff", &rows[0][3])
        .push("worst_rate_excess", fmt_float(worst_excess));
    summary.write(&out_dir.join("summary.txt"))?;
    Ok(RunOutcome {
        converged: true,
        out_dir,
        summary,
    })
}

fn write_error(dir: &Path, error: &Error) {
    let record = format!("kind={}\nmessage={}\n", error.kind(), error.to_string().replace('\n', " "));
    if fs::create_dir_all(dir).and_then(|_| fs::write(dir.join("error.txt"), record)).is_err() {
        log::error!("could not write error record to {}", dir.display());
    }
}

/// Parse, override, run; returns the process exit code. Failures leave a
/// machine-readable `error.txt` in the output directory when it is known.
pub fn execute(config_path: &Path, overrides: &Overrides) -> i32 {
    let base_dir = config_path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut config = match super::config::parse_config(config_path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            if let Some(dir) = &overrides.out_dir {
                write_error(dir, &e);
            }
            return EXIT_ERROR;
        }
    };
    let fallback_dir = overrides.out_dir.clone().unwrap_or_else(|| output_dir(&config, &base_dir));
    if let Err(e) = config.apply(overrides) {
        eprintln!("error: {e}");
        write_error(&fallback_dir, &e);
        return EXIT_ERROR;
    }
    let out_dir = output_dir(&config, &base_dir);
    match run(&config, &base_dir) {
        Ok(outcome) => {
            for (k, v) in &outcome.summary.entries {
                println!("{k}={v}");
            }
            outcome.exit_code()
        }
        Err(e) => {
            eprintln!("error: {e}");
            write_error(&out_dir, &e);
            if matches!(e, Error::NotConverged { .. }) {
                EXIT_NOT_CONVERGED
            } else {
                EXIT_ERROR
            }
        }
    }
}
