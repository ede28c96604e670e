//! Acceptance suite. Each criterion prints one `PASS`/`FAIL` line; the binary
//! exits nonzero if any criterion fails.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use common::{DenseNoise, DenseNoiseModel, DenseScheme, Grid};
use nalgebra::DVector;
use spde_core::assembly::{
    assemble_operators, l2_norm, DiffusionTensor, Drift, NoiseTerm, ProblemSpec, ScalarField, Velocity,
};
use spde_core::convergence::{run_experiment, strong_error, ExperimentPlan};
use spde_core::darcy::{solve_darcy, PermeabilityField};
use spde_core::heat::HeatBenchmark;
use spde_core::linalg::SolverOptions;
use spde_core::mesh::{build_rectangle_mesh, BoundaryKind, BoundaryLayout};
use spde_core::noise::{sample_path, NoiseSpec};
use spde_core::rng;
use spde_core::stepper::{initial_state, run_path, Stepper};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

// ---------------------------------------------------------------------------
// 1. Heat benchmark

fn heat_benchmark() -> Outcome {
    let start = Instant::now();
    let r = HeatBenchmark::default().run(&SolverOptions::default()).expect("heat benchmark runs");
    let secs = start.elapsed().as_secs_f64();
    let s = r.spatial_fit.order;
    let t = r.temporal_fit.order;
    let pass = (1.8..=2.2).contains(&s) && (0.9..=1.1).contains(&t) && r.constant_error < 1e-12 && secs < 60.0;
    outcome(
        pass,
        format!(
            "spatial order {s:.4} in [1.8, 2.2], temporal order {t:.4} in [0.9, 1.1], constant error {:.1e}, {secs:.1}s < 60s",
            r.constant_error
        ),
    )
}

// ---------------------------------------------------------------------------
// 2, 3. Desk-scale strong rates

/// Unit square, Dirichlet `X = 1` on `x = 0`, Neumann elsewhere; `D = 10⁻² I`
/// without stabilization; Darcy velocity for `k = 0.1`, `p = 1 → 0`, which is
/// `q = (0.1, 0)`; `F(X) = -|X - 1/2|`; `β = 1`, `ε = 10⁻³`, 32 x 32 modes;
/// `X₀ = 0`, `T = 1`, reference `Δt = 1/1024`.
fn desk_plan(noise: NoiseTerm, n_realizations: usize) -> ExperimentPlan {
    let n = 16;
    let opts = SolverOptions::default();
    let flow_mesh = build_rectangle_mesh(1.0, 1.0, n, n, BoundaryLayout::dirichlet_left_right()).unwrap();
    let perm = PermeabilityField::constant(&flow_mesh, 0.1).unwrap();
    let flow = solve_darcy(&flow_mesh, &perm, 1.0, 0.0, &opts).unwrap();
    let mesh = build_rectangle_mesh(1.0, 1.0, n, n, BoundaryLayout::dirichlet_left()).unwrap();
    ExperimentPlan {
        mesh,
        problem: ProblemSpec {
            diffusion: DiffusionTensor::isotropic(1e-2),
            velocity: flow.velocity.into_velocity(),
            drift: Drift::negative_abs(0.5),
            noise,
            dirichlet_data: ScalarField::constant(1.0),
            robin_alpha: 0.0,
            shift: None,
            upwind: false,
        },
        noise: NoiseSpec::new(1.0, 1e-3, 1.0, 1.0),
        initial: ScalarField::constant(0.0),
        t_final: 1.0,
        reference_steps: 1024,
        level_steps: vec![16, 32, 64, 128],
        n_realizations,
        master_seed: 2024,
        solver: opts,
        workers: None,
    }
}

fn strong_rate(noise: NoiseTerm, band: (f64, f64)) -> Outcome {
    let plan = desk_plan(noise, 200);
    let r = run_experiment(&plan).expect("experiment runs");
    let errors: Vec<String> = r.levels.iter().map(|l| format!("{:.3e}", l.rms_error)).collect();
    let pass = r.order >= band.0 && r.order <= band.1 && r.wall_time_secs < 900.0;
    outcome(
        pass,
        format!(
            "order {:.4} ± {:.4} in [{}, {}], rms errors [{}], {} realizations, {} excluded, {:.1}s",
            r.order,
            r.order_stderr,
            band.0,
            band.1,
            errors.join(", "),
            r.n_realizations,
            r.excluded,
            r.wall_time_secs
        ),
    )
}

fn multiplicative_rate() -> Outcome {
    // b(u) = 2u for a Q-Wiener process on a 3 x 2 rectangle, pulled back to
    // the unit square: the eigenfunctions pick up a factor 1/√6.
    strong_rate(NoiseTerm::linear_multiplicative(2.0 / 6f64.sqrt()), (0.38, 0.68))
}

fn additive_rate() -> Outcome {
    strong_rate(NoiseTerm::constant_additive(2.0), (0.80, 1.20))
}

// ---------------------------------------------------------------------------
// 4. Unconditional stability

fn random_kind(seed: u64, c: u64) -> BoundaryKind {
    match (rng::uniform(seed, 1, c) * 3.0) as usize {
        0 => BoundaryKind::Dirichlet,
        1 => BoundaryKind::Neumann,
        _ => BoundaryKind::Robin,
    }
}

fn stability() -> Outcome {
    let seed = 77;
    let opts = SolverOptions { tol: 1e-13, max_iter: None };
    let dts = [1e-3, 1e-1, 1.0, 10.0];
    let steps = 5;
    let mut checks = 0usize;
    let mut violations = 0usize;
    let mut worst = 0.0f64;
    for f in 0..100u64 {
        let u = |c: u64| rng::uniform(seed, f, c);
        let nx = 1 + (u(0) * 16.0) as usize;
        let ny = 1 + (u(1) * 16.0) as usize;
        let layout = BoundaryLayout {
            left: random_kind(seed + f, 0),
            right: random_kind(seed + f, 1),
            bottom: random_kind(seed + f, 2),
            top: random_kind(seed + f, 3),
        };
        let mesh = build_rectangle_mesh(0.5 + 2.0 * u(2), 0.5 + 2.0 * u(3), nx, ny, layout).unwrap();
        let (a, c) = (0.01 + u(4), 0.01 + u(5));
        let b = 0.9 * (a * c).sqrt() * (2.0 * u(6) - 1.0);
        let velocity: Vec<[f64; 2]> =
            (0..mesh.num_elements()).map(|e| [10.0 * (2.0 * u(100 + 2 * e as u64) - 1.0), 10.0 * (2.0 * u(101 + 2 * e as u64) - 1.0)]).collect();
        let spec = ProblemSpec {
            diffusion: DiffusionTensor::Constant([[a, b], [b, c]]),
            velocity: Velocity::PerElement(velocity),
            robin_alpha: 2.0 * u(7),
            upwind: u(8) < 0.5,
            ..Default::default()
        };
        let ops = assemble_operators(&mesh, &spec).unwrap();
        let values: Vec<f64> =
            (0..mesh.num_nodes()).map(|k| if ops.is_dirichlet[k] { 0.0 } else { 2.0 * rng::normal(seed, 1000 + f, k as u64) }).collect();
        for &dt in &dts {
            let stepper = Stepper::new(&mesh, &ops, &spec, dt, &opts).unwrap();
            let mut state = initial_state(&mesh, &ops, &ScalarField::constant(0.0), dt, &opts).unwrap();
            state.values = values.clone();
            let mut norm = l2_norm(&ops.mass, &state.values).unwrap();
            for _ in 0..steps {
                state = stepper.propagate(&state).unwrap();
                let next = l2_norm(&ops.mass, &state.values).unwrap();
                checks += 1;
                let growth = next / norm - 1.0;
                worst = worst.max(growth);
                if growth > 1e-10 {
                    violations += 1;
                }
                norm = next;
            }
        }
    }
    outcome(
        violations == 0,
        format!("{violations} violations in {checks} steps (100 fields x 4 step sizes), largest relative growth {worst:.2e}"),
    )
}

// ---------------------------------------------------------------------------
// 5. Darcy with constant permeability

fn darcy_constant() -> Outcome {
    let mut worst_q = 0.0f64;
    let mut in_range = true;
    for &(lx, ly, nx, ny, p_in, p_out) in &[(3.0, 2.0, 12, 8, 1.0, 0.0), (1.0, 1.0, 7, 5, 3.0, -1.0), (2.0, 0.5, 16, 3, 0.25, 0.2)] {
        let mesh = build_rectangle_mesh(lx, ly, nx, ny, BoundaryLayout::dirichlet_left_right()).unwrap();
        let perm = PermeabilityField::constant(&mesh, 1.0).unwrap();
        let sol = solve_darcy(&mesh, &perm, p_in, p_out, &SolverOptions::default()).unwrap();
        let expected = [(p_in - p_out) / lx, 0.0];
        for q in &sol.velocity.values {
            worst_q = worst_q.max((q[0] - expected[0]).abs()).max((q[1] - expected[1]).abs());
        }
        in_range &= sol.pressure.iter().all(|&p| p >= p_out - 1e-12 && p <= p_in + 1e-12);
    }
    outcome(
        worst_q <= 1e-8 && in_range,
        format!("max |q - ((p_in - p_out)/L1, 0)| = {worst_q:.2e} <= 1e-8, pressure within [p_out, p_in]: {in_range}"),
    )
}

// ---------------------------------------------------------------------------
// 6. Noise sampler

fn noise_sampler() -> Outcome {
    let n = 100_000;
    let spec = NoiseSpec::new(1.0, 1e-3, 3.0, 2.0).with_modes(4, 4);
    let t_final = 1.0;
    let dt = t_final / n as f64;
    let fam = sample_path(&spec, 99, t_final, n, &[]).unwrap();
    let mut worst_z = 0.0f64;
    let mut modes_ok = true;
    for i in 0..4 {
        for j in 0..4 {
            let lambda = spec.eigenvalue(i, j);
            let mode = spec.mode_index(i, j);
            let var = (0..n).map(|m| fam.fine.increment(m)[mode].powi(2)).sum::<f64>() / n as f64;
            let expected = lambda * dt;
            if lambda == 0.0 {
                modes_ok &= var == 0.0;
                continue;
            }
            // Var(ξ²) = 2 for a standard normal.
            let se = expected * (2.0 / n as f64).sqrt();
            let z = (var - expected).abs() / se;
            worst_z = worst_z.max(z);
            modes_ok &= z <= 3.0;
        }
    }

    let fine_steps = 1024;
    let coarse = [512, 256, 128, 64, 32, 16, 8, 4, 2, 1];
    let fam = sample_path(&spec, 5, 1.0, fine_steps, &coarse).unwrap();
    let mut ulp_max = 0u64;
    for path in &fam.coarse {
        let ratio = fine_steps / path.steps;
        for m in 0..path.steps {
            for mode in 0..spec.num_modes() {
                let expected = tree_sum(&|k| fam.fine.increment(k)[mode], m * ratio, ratio);
                let got = path.increment(m)[mode];
                ulp_max = ulp_max.max(expected.to_bits().abs_diff(got.to_bits()));
            }
        }
    }
    outcome(
        modes_ok && ulp_max == 0,
        format!("per-mode variance max |z| = {worst_z:.2} <= 3 at N = {n}; coarse increments deviate by {ulp_max} ULP from pairwise sums"),
    )
}

/// Pairwise sum of `len` (a power of two) consecutive terms starting at `start`.
fn tree_sum(f: &dyn Fn(usize) -> f64, start: usize, len: usize) -> f64 {
    if len == 1 {
        f(start)
    } else {
        let half = len / 2;
        tree_sum(f, start, half) + tree_sum(f, start + half, half)
    }
}

// ---------------------------------------------------------------------------
// 7. Oracle equivalence

fn oracle_equivalence() -> Outcome {
    let (lx, ly, d, q, g) = (1.5, 1.0, 0.05, [0.3, -0.1], 1.0);
    let modes = 4;
    let t_final = 0.5;
    let x0 = |p: [f64; 2]| 0.3 + 0.5 * p[0] - 0.2 * p[1];
    let grid = Grid::new(lx, ly, 2, 2);
    let dense = common::assemble(&grid, [[d, 0.0], [0.0, d]], &vec![q; grid.tris.len()], &[], 0.0, None);
    let scheme = DenseScheme { grid: &grid, ops: &dense, dirichlet: grid.nodes.iter().map(|p| p[0] == 0.0).collect(), g };
    let x0_nodal: Vec<f64> = grid.nodes.iter().map(|&p| x0(p)).collect();
    let drift = |u: f64| -(u - 0.5).abs();
    let mut worst = 0.0f64;
    for multiplicative in [true, false] {
        let noise = if multiplicative { NoiseTerm::linear_multiplicative(2.0) } else { NoiseTerm::constant_additive(2.0) };
        let plan = ExperimentPlan {
            mesh: build_rectangle_mesh(lx, ly, 2, 2, BoundaryLayout::dirichlet_left()).unwrap(),
            problem: ProblemSpec {
                diffusion: DiffusionTensor::isotropic(d),
                velocity: Velocity::Constant(q),
                drift: Drift::negative_abs(0.5),
                noise,
                dirichlet_data: ScalarField::constant(g),
                ..Default::default()
            },
            noise: NoiseSpec::new(1.0, 1e-3, lx, ly).with_modes(modes, modes),
            initial: ScalarField::new(x0),
            t_final,
            reference_steps: 4,
            level_steps: vec![2],
            n_realizations: 2,
            master_seed: 31,
            solver: SolverOptions::default(),
            workers: Some(1),
        };
        let ops = assemble_operators(&plan.mesh, &plan.problem).unwrap();
        let level = strong_error(&plan, 2).unwrap();
        let double = |u: f64| 2.0 * u;
        let two = |_: f64| 2.0;
        let dense_noise = if multiplicative { DenseNoise::Multiplicative(&double) } else { DenseNoise::Additive(&two) };
        for r in 0..2 {
            let seed = rng::derive_seed(plan.master_seed, r as u64);
            let model = DenseNoiseModel { seed, modes, beta: 1.0, epsilon: 1e-3, fine_steps: 4 };
            let fam = sample_path(&plan.noise, seed, t_final, 4, &[]).unwrap();
            let got = run_path(&plan.mesh, &ops, &plan.problem, &fam.fine, 4, &plan.initial, &plan.solver).unwrap();
            let want = scheme.run(&x0_nodal, &drift, &dense_noise, Some(&model), t_final, 4);
            let coarse = scheme.run(&x0_nodal, &drift, &dense_noise, Some(&model), t_final, 2);
            let diff = DVector::from_iterator(want.len(), got.values.iter().zip(want.iter()).map(|(a, b)| a - b));
            worst = worst.max(scheme.norm(&diff));
            let oracle_error = scheme.norm(&(&want - &coarse));
            worst = worst.max((level.errors[r].unwrap() - oracle_error).abs());
        }
    }
    outcome(worst <= 1e-10, format!("2x2 mesh, 4 steps, 2 realizations per noise type: max deviation {worst:.2e} <= 1e-10"))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 7] = [
        ("1 heat benchmark", heat_benchmark),
        ("2 multiplicative strong rate", multiplicative_rate),
        ("3 additive strong rate", additive_rate),
        ("4 unconditional stability", stability),
        ("5 darcy constant permeability", darcy_constant),
        ("6 noise sampler", noise_sampler),
        ("7 oracle equivalence", oracle_equivalence),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let o = run();
        println!("criterion {name}: {} ({})", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    } else {
        println!("all acceptance criteria passed");
        ExitCode::SUCCESS
    }
}
