use std::fs;
use std::io::BufWriter;
use std::path::Path;

use log::info;
use serde_json::json;
use spde_core::assembly::{assemble_operators, l2_norm, DiffusionTensor, Drift, NoiseTerm, ProblemSpec, ScalarField, Velocity};
use spde_core::convergence::{run_experiment, ExperimentPlan};
use spde_core::darcy::{solve_darcy, DarcySolution, PermeabilityField};
use spde_core::io::{write_element_vectors, write_mesh, write_node_table};
use spde_core::linalg::SolverOptions;
use spde_core::mesh::{build_rectangle_mesh, BoundaryLayout, Mesh};
use spde_core::noise::{sample_path, NoiseSpec};
use spde_core::stepper::run_path_with;

use crate::config::{DriftKind, NoiseKind, RunConfig, VelocityKind};
use crate::CliError;

fn prepare_output(cfg: &RunConfig) -> Result<&Path, CliError> {
    let dir = cfg.output.dir.as_path();
    fs::create_dir_all(dir)?;
    fs::write(dir.join("resolved_config.toml"), cfg.to_toml()?)?;
    Ok(dir)
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<fs::File>, CliError> {
    Ok(BufWriter::new(fs::File::create(dir.join(name))?))
}

fn in_band(value: f64, band: [f64; 2]) -> bool {
    value >= band[0] && value <= band[1]
}

pub fn build_mesh(cfg: &RunConfig) -> Result<Mesh, CliError> {
    let m = &cfg.mesh;
    Ok(build_rectangle_mesh(m.lx, m.ly, m.nx, m.ny, m.layout())?)
}

pub fn solve_flow(cfg: &RunConfig, opts: &SolverOptions) -> Result<(Mesh, DarcySolution), CliError> {
    let m = &cfg.mesh;
    let mesh = build_rectangle_mesh(m.lx, m.ly, m.nx, m.ny, BoundaryLayout::dirichlet_left_right())?;
    let perm = PermeabilityField::generate(&mesh, &cfg.darcy.permeability)?;
    let sol = solve_darcy(&mesh, &perm, cfg.darcy.p_in, cfg.darcy.p_out, opts)?;
    Ok((mesh, sol))
}

pub fn build_problem(cfg: &RunConfig, opts: &SolverOptions) -> Result<ProblemSpec, CliError> {
    let p = &cfg.problem;
    let velocity = match p.velocity {
        VelocityKind::Constant => Velocity::Constant([p.velocity_x, p.velocity_y]),
        VelocityKind::Darcy => solve_flow(cfg, opts)?.1.velocity.into_velocity(),
    };
    let drift = match p.drift {
        DriftKind::NegativeAbs => Drift::negative_abs(p.drift_center),
        DriftKind::Zero => Drift::zero(),
    };
    let noise = match p.noise {
        NoiseKind::Multiplicative => NoiseTerm::linear_multiplicative(p.multiplicative_amplitude),
        NoiseKind::Additive => NoiseTerm::constant_additive(p.additive_amplitude),
    };
    Ok(ProblemSpec {
        diffusion: DiffusionTensor::isotropic(p.diffusion),
        velocity,
        drift,
        noise,
        dirichlet_data: ScalarField::constant(p.dirichlet_value),
        robin_alpha: p.robin_alpha,
        shift: p.shift.value(),
        upwind: p.upwind,
    })
}

pub fn noise_spec(cfg: &RunConfig) -> NoiseSpec {
    let n = &cfg.noise;
    NoiseSpec::new(n.beta, n.epsilon, cfg.mesh.lx, cfg.mesh.ly).with_modes(n.modes_x, n.modes_y)
}

pub fn plan(cfg: &RunConfig) -> Result<ExperimentPlan, CliError> {
    let opts = cfg.solver.options();
    let e = &cfg.experiment;
    Ok(ExperimentPlan {
        mesh: build_mesh(cfg)?,
        problem: build_problem(cfg, &opts)?,
        noise: noise_spec(cfg),
        initial: ScalarField::constant(cfg.problem.initial_value),
        t_final: e.t_final,
        reference_steps: e.reference_steps,
        level_steps: e.level_steps.clone(),
        n_realizations: e.realizations,
        master_seed: e.seed,
        solver: opts,
        workers: (e.workers > 0).then_some(e.workers),
    })
}

pub fn heat_check(cfg: &RunConfig) -> Result<(), CliError> {
    let dir = prepare_output(cfg)?;
    let h = &cfg.heat;
    let result = h.benchmark().run(&cfg.solver.options())?;

    let mut spatial = String::from("h,l2_error\n");
    for (x, e) in &result.spatial {
        spatial.push_str(&format!("{x:.17e},{e:.17e}\n"));
    }
    fs::write(dir.join("heat_spatial.csv"), spatial)?;
    let mut temporal = String::from("dt,l2_error\n");
    for (x, e) in &result.temporal {
        temporal.push_str(&format!("{x:.17e},{e:.17e}\n"));
    }
    fs::write(dir.join("heat_temporal.csv"), temporal)?;

    let spatial_ok = in_band(result.spatial_fit.order, h.spatial_band);
    let temporal_ok = in_band(result.temporal_fit.order, h.temporal_band);
    let constant_ok = result.constant_error <= h.constant_tol;
    let report = json!({
        "spatial_order": result.spatial_fit.order,
        "spatial_stderr": result.spatial_fit.stderr,
        "spatial_band": h.spatial_band,
        "temporal_order": result.temporal_fit.order,
        "temporal_stderr": result.temporal_fit.stderr,
        "temporal_band": h.temporal_band,
        "constant_error": result.constant_error,
        "pass": spatial_ok && temporal_ok && constant_ok,
    });
    fs::write(dir.join("heat_report.json"), serde_json::to_string_pretty(&report).expect("plain json"))?;
    info!(
        "heat: spatial order {:.4}, temporal order {:.4}, constant error {:.2e}",
        result.spatial_fit.order, result.temporal_fit.order, result.constant_error
    );

    if !spatial_ok {
        return Err(CliError::Band(format!("spatial order {:.4} not in {:?}", result.spatial_fit.order, h.spatial_band)));
    }
    if !temporal_ok {
        return Err(CliError::Band(format!("temporal order {:.4} not in {:?}", result.temporal_fit.order, h.temporal_band)));
    }
    if !constant_ok {
        return Err(CliError::Band(format!("constant evolved with error {:.3e}", result.constant_error)));
    }
    Ok(())
}

pub fn darcy(cfg: &RunConfig) -> Result<(), CliError> {
    let dir = prepare_output(cfg)?;
    let (mesh, sol) = solve_flow(cfg, &cfg.solver.options())?;
    write_node_table(&mesh, "pressure", &sol.pressure, create(dir, "pressure.csv")?)?;
    write_element_vectors(&mesh, "q", &sol.velocity.values, create(dir, "velocity.csv")?)?;
    let report = json!({
        "nodes": mesh.num_nodes(),
        "elements": mesh.num_elements(),
        "max_speed": sol.velocity.max_speed(),
        "inflow_rate": sol.inflow_reaction(&mesh),
        "pressure_min": sol.pressure.iter().copied().fold(f64::INFINITY, f64::min),
        "pressure_max": sol.pressure.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    });
    fs::write(dir.join("darcy_report.json"), serde_json::to_string_pretty(&report).expect("plain json"))?;
    info!("darcy: max speed {:.6e}", sol.velocity.max_speed());
    Ok(())
}

pub fn converge(cfg: &RunConfig) -> Result<(), CliError> {
    let dir = prepare_output(cfg)?;
    let kind = cfg.problem.noise;
    let report = run_experiment(&plan(cfg)?)?;
    let echo = serde_json::to_value(cfg).expect("config serializes");
    fs::write(dir.join(format!("convergence_{}.csv", kind.as_str())), report.to_csv())?;
    fs::write(dir.join(format!("convergence_{}.json", kind.as_str())), report.to_json(Some(echo)))?;
    info!(
        "{} noise: order {:.4} ± {:.4}, {} of {} realizations excluded",
        kind.as_str(),
        report.order,
        report.order_stderr,
        report.excluded,
        report.n_realizations
    );
    let band = cfg.experiment.band(kind);
    if !in_band(report.order, band) {
        return Err(CliError::Band(format!("{} order {:.4} not in {band:?}", kind.as_str(), report.order)));
    }
    Ok(())
}

pub fn run(cfg: &RunConfig) -> Result<(), CliError> {
    let dir = prepare_output(cfg)?;
    let opts = cfg.solver.options();
    let mesh = build_mesh(cfg)?;
    let problem = build_problem(cfg, &opts)?;
    let ops = assemble_operators(&mesh, &problem)?;
    let r = &cfg.run;
    let dt = r.t_final / r.steps.max(1) as f64;
    let path = if r.steps > 0 { Some(sample_path(&noise_spec(cfg), cfg.experiment.seed, r.t_final, r.steps, &[])?.fine) } else { None };
    let initial = ScalarField::constant(cfg.problem.initial_value);

    let mut snapshots = Vec::new();
    let last = if let Some(path) = &path {
        run_path_with(&mesh, &ops, &problem, Some(path), dt, r.steps, &initial, &opts, |s| {
            if s.step % r.stride == 0 {
                snapshots.push((s.step, s.time, s.values.clone()));
            }
        })?
    } else {
        let s = spde_core::stepper::initial_state(&mesh, &ops, &initial, dt, &opts)?;
        snapshots.push((0, 0.0, s.values.clone()));
        s
    };

    write_mesh(&mesh, create(dir, "mesh.txt")?)?;
    let mut index = Vec::new();
    for (step, time, values) in &snapshots {
        let name = format!("snapshot_{step:06}.csv");
        write_node_table(&mesh, "x", values, create(dir, &name)?)?;
        index.push(json!({ "step": step, "time": time, "file": name, "l2_norm": l2_norm(&ops.mass, values)? }));
    }
    let summary = json!({
        "seed": cfg.experiment.seed,
        "steps": r.steps,
        "dt": dt,
        "stride": r.stride,
        "final_l2_norm": l2_norm(&ops.mass, &last.values)?,
        "snapshots": index,
    });
    fs::write(dir.join("run_summary.json"), serde_json::to_string_pretty(&summary).expect("plain json"))?;
    info!("run: {} steps, {} snapshots", r.steps, snapshots.len());
    Ok(())
}
