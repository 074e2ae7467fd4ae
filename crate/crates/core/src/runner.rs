//! Experiment driver: build the configured scheme, run it on the input
//! signal, write the final signal and CSV diagnostics, and provide the
//! named comparison modes.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::config::{builtin_signal, ExperimentConfig, Scheme, TauSpec};
use crate::error::{Error, Result};
use crate::explicit::{
    diagnostics_row, diffusion_step, run_chain, stable_tau, BlockParams, TrajectoryRecord,
};
use crate::flux::FluxFunction;
use crate::fsi::{fsi_cycle, FsiCycle};
use crate::implicit::{implicit_step, ImplicitStep};
use crate::multigrid::{
    smoother, solve, trace_to_csv, CoarseSolver, CycleConfig, ImplicitDiffusionOperator,
    LinearProblem,
};
use crate::operators::build_operator;
use crate::signal::{self, l2_norm, write_signal, Signal};

/// Load the configured input: a file if given, a builtin generator
/// otherwise.
pub fn load_input(cfg: &ExperimentConfig) -> Result<Signal> {
    match &cfg.input {
        Some(path) => signal::read_signal(path, cfg.h),
        None => builtin_signal(&cfg.generator, cfg.n, cfg.seed, cfg.h),
    }
}

fn build_block(cfg: &ExperimentConfig, n: usize) -> Result<BlockParams> {
    let op = build_operator(&cfg.weights, cfg.h, n)?;
    let flux = FluxFunction::new(cfg.flux, cfg.lambda)?;
    let tau = match cfg.tau {
        TauSpec::Auto => stable_tau(&op, &flux)?,
        TauSpec::Fixed(t) => t,
    };
    BlockParams::new(op, flux, tau)
}

fn write_if_configured(path: &Option<std::path::PathBuf>, content: &str) -> Result<()> {
    if let Some(path) = path {
        fs::write(path, content)?;
    }
    Ok(())
}

/// Run the configured scheme. Writes the final signal and trajectory CSV to
/// the configured paths and returns a one-line deterministic summary.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<String> {
    let u0 = load_input(cfg)?;
    match cfg.scheme {
        Scheme::Explicit => {
            let p = build_block(cfg, u0.len())?;
            let (u, record) = run_chain(&p, &u0, cfg.steps)?;
            finish_signal_run(cfg, "explicit", p.tau(), &u, &record)
        }
        Scheme::Fsi => {
            let p = build_block(cfg, u0.len())?;
            let cycle = FsiCycle::new(p.clone(), cfg.cycle_length)?;
            let mut record = TrajectoryRecord::default();
            let mut u = u0.clone();
            record.push(diagnostics_row(&p, 0, 0.0, u.values(), u.h()));
            for k in 1..=cfg.steps {
                u = fsi_cycle(&cycle, &u)?;
                record.push(diagnostics_row(
                    &p,
                    k,
                    k as f64 * cycle.super_time(),
                    u.values(),
                    u.h(),
                ));
            }
            finish_signal_run(cfg, "fsi", p.tau(), &u, &record)
        }
        Scheme::Implicit => {
            let p = build_block(cfg, u0.len())?;
            let step = ImplicitStep::new(p.clone(), cfg.inner_iters, cfg.tol)?;
            let mut record = TrajectoryRecord::default();
            let mut u = u0.clone();
            record.push(diagnostics_row(&p, 0, 0.0, u.values(), u.h()));
            for k in 1..=cfg.steps {
                let outcome = implicit_step(&step, &u)?;
                u = outcome.signal;
                record.push(diagnostics_row(&p, k, k as f64 * p.tau(), u.values(), u.h()));
            }
            finish_signal_run(cfg, "implicit", p.tau(), &u, &record)
        }
        Scheme::Multigrid => {
            let tau = match cfg.tau {
                TauSpec::Fixed(t) => t,
                TauSpec::Auto => unreachable!("rejected at config resolution"),
            };
            let a = ImplicitDiffusionOperator::new(&cfg.weights, cfg.h, u0.len(), tau)?;
            let problem = LinearProblem::new(a, u0)?;
            let mg_cfg = CycleConfig {
                pre_smooth: cfg.pre_smooth,
                post_smooth: cfg.post_smooth,
                omega: cfg.omega,
                levels: cfg.levels,
                coarse_solver: CoarseSolver::Direct,
            };
            let (x, trace) = solve(&problem, &mg_cfg, cfg.cycles, cfg.tol)?;
            if let Some(path) = &cfg.output {
                write_signal(&x, path)?;
            }
            write_if_configured(&cfg.trajectory, &trace_to_csv(&trace))?;
            let last = trace.last().expect("trace has at least the initial row");
            Ok(format!(
                "multigrid: {} cycles, residual {:.6e}, last reduction factor {:.6e}",
                trace.len() - 1,
                last.residual_norm,
                last.reduction_factor
            ))
        }
    }
}

fn finish_signal_run(
    cfg: &ExperimentConfig,
    scheme: &str,
    tau: f64,
    u: &Signal,
    record: &TrajectoryRecord,
) -> Result<String> {
    if let Some(path) = &cfg.output {
        write_signal(u, path)?;
    }
    write_if_configured(&cfg.trajectory, &record.to_csv())?;
    let last = record.rows().last().expect("record has at least the input row");
    Ok(format!(
        "{scheme}: tau {tau:.6e}, {} steps, final l2 norm {:.6e}, mean {:.6e}",
        last.step, last.l2_norm, last.mean
    ))
}

/// Distance to the constant steady state (the mean of the initial signal).
fn distance_to_steady(values: &[f64], target: f64) -> f64 {
    values.iter().map(|v| (v - target) * (v - target)).sum::<f64>().sqrt()
}

/// Named comparison modes behind `compare`. Each member writes its own
/// trajectory file; the merged CSV aligns rows on matching time columns.
pub fn compare(mode: &str, cfg: &ExperimentConfig, out_dir: &Path) -> Result<String> {
    fs::create_dir_all(out_dir)?;
    match mode {
        "fsi_vs_explicit" => compare_fsi_vs_explicit(cfg, out_dir),
        "multigrid_vs_jacobi" => compare_multigrid_vs_jacobi(cfg, out_dir),
        other => Err(Error::Config(format!(
            "unknown comparison mode {other:?} (expected fsi_vs_explicit or multigrid_vs_jacobi)"
        ))),
    }
}

/// One FSI cycle of length L against L plain explicit steps per cycle, at
/// the same time step: equal operator applications per row, so the time
/// columns of both trajectories match (`time = step·τ` of compute effort).
fn compare_fsi_vs_explicit(cfg: &ExperimentConfig, out_dir: &Path) -> Result<String> {
    let u0 = load_input(cfg)?;
    let p = build_block(cfg, u0.len())?;
    let cycle = FsiCycle::new(p.clone(), cfg.cycle_length)?;
    let weights = cycle.weights().to_vec();
    let cycles = cfg.steps;
    let tau = p.tau();
    let target = signal::mean(&u0);

    let mut explicit_rec = TrajectoryRecord::default();
    let mut fsi_rec = TrajectoryRecord::default();
    let mut explicit = u0.values().to_vec();
    let mut fsi_prev = u0.values().to_vec();
    let mut fsi_cur = u0.values().to_vec();
    explicit_rec.push(diagnostics_row(&p, 0, 0.0, &explicit, u0.h()));
    fsi_rec.push(diagnostics_row(&p, 0, 0.0, &fsi_cur, u0.h()));

    let mut merged = String::from("step,time,explicit_l2,fsi_l2,explicit_dist,fsi_dist\n");
    writeln!(
        merged,
        "0,{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
        0.0,
        signal::l2_norm_slice(&explicit),
        signal::l2_norm_slice(&fsi_cur),
        distance_to_steady(&explicit, target),
        distance_to_steady(&fsi_cur, target)
    )
    .expect("string write cannot fail");

    let mut step = 0usize;
    for _ in 0..cycles {
        for &alpha in &weights {
            step += 1;
            let time = step as f64 * tau;
            explicit = diffusion_step(p.op(), p.flux(), tau, &explicit);
            let stepped = diffusion_step(p.op(), p.flux(), tau, &fsi_cur);
            let next: Vec<f64> = stepped
                .iter()
                .zip(&fsi_prev)
                .map(|(s, q)| alpha * s + (1.0 - alpha) * q)
                .collect();
            if !next.iter().all(|v| v.is_finite()) || !explicit.iter().all(|v| v.is_finite()) {
                return Err(Error::Divergence { step });
            }
            fsi_prev = fsi_cur;
            fsi_cur = next;
            explicit_rec.push(diagnostics_row(&p, step, time, &explicit, u0.h()));
            fsi_rec.push(diagnostics_row(&p, step, time, &fsi_cur, u0.h()));
            writeln!(
                merged,
                "{step},{time:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                signal::l2_norm_slice(&explicit),
                signal::l2_norm_slice(&fsi_cur),
                distance_to_steady(&explicit, target),
                distance_to_steady(&fsi_cur, target)
            )
            .expect("string write cannot fail");
        }
    }

    fs::write(out_dir.join("explicit.csv"), explicit_rec.to_csv())?;
    fs::write(out_dir.join("fsi.csv"), fsi_rec.to_csv())?;
    fs::write(out_dir.join("comparison.csv"), merged)?;
    let ratio = distance_to_steady(&fsi_cur, target) / distance_to_steady(&explicit, target);
    Ok(format!(
        "fsi_vs_explicit: L={}, {cycles} cycle(s), distance-to-steady ratio fsi/explicit = {ratio:.6e}",
        weights.len()
    ))
}

/// V-cycles against blocks of ν₁+ν₂ plain Jacobi sweeps on the same
/// system; rows align on the cycle column.
fn compare_multigrid_vs_jacobi(cfg: &ExperimentConfig, out_dir: &Path) -> Result<String> {
    let b = load_input(cfg)?;
    let tau = match cfg.tau {
        TauSpec::Fixed(t) => t,
        TauSpec::Auto => return Err(Error::Config("tau = auto is not defined for multigrid".into())),
    };
    let a = ImplicitDiffusionOperator::new(&cfg.weights, cfg.h, b.len(), tau)?;
    let mg_cfg = CycleConfig {
        pre_smooth: cfg.pre_smooth,
        post_smooth: cfg.post_smooth,
        omega: cfg.omega,
        levels: cfg.levels,
        coarse_solver: CoarseSolver::Direct,
    };
    let problem = LinearProblem::new(a.clone(), b.clone())?;
    let (_, mg_trace) = solve(&problem, &mg_cfg, cfg.cycles, 0.0)?;

    // Jacobi member: one comparison unit is ν₁+ν₂ sweeps.
    let sweeps = cfg.pre_smooth + cfg.post_smooth;
    let mut x = Signal::zeros(b.len(), b.h());
    let mut jacobi_trace = vec![(0usize, l2_norm(&b), 1.0f64)];
    let mut prev = l2_norm(&b);
    for cycle in 1..=cfg.cycles {
        let state = smoother(&a, &b, &x, sweeps, cfg.omega)?;
        let r = l2_norm(&state.r);
        jacobi_trace.push((cycle, r, if prev > 0.0 { r / prev } else { 0.0 }));
        prev = r;
        x = state.x;
    }

    fs::write(out_dir.join("multigrid.csv"), trace_to_csv(&mg_trace))?;
    let mut jacobi_csv = String::from("cycle,residual_norm,reduction_factor\n");
    for (cycle, r, f) in &jacobi_trace {
        writeln!(jacobi_csv, "{cycle},{r:.16e},{f:.16e}").expect("string write cannot fail");
    }
    fs::write(out_dir.join("jacobi.csv"), &jacobi_csv)?;

    let mut merged = String::from("cycle,multigrid_residual,jacobi_residual\n");
    for (row, (_, jr, _)) in mg_trace.iter().zip(&jacobi_trace) {
        writeln!(merged, "{},{:.16e},{jr:.16e}", row.cycle, row.residual_norm)
            .expect("string write cannot fail");
    }
    fs::write(out_dir.join("comparison.csv"), merged)?;

    let rho_mg = geometric_factor(mg_trace.iter().map(|r| r.reduction_factor));
    let rho_jac = geometric_factor(jacobi_trace.iter().map(|&(_, _, f)| f));
    Ok(format!(
        "multigrid_vs_jacobi: reduction per cycle {rho_mg:.6e} vs per {sweeps} Jacobi sweeps {rho_jac:.6e} (gain {:.2})",
        rho_jac / rho_mg
    ))
}

fn geometric_factor(factors: impl Iterator<Item = f64>) -> f64 {
    let tail: Vec<f64> = factors.skip(2).filter(|f| f.is_finite() && *f > 0.0).collect();
    if tail.is_empty() {
        return 0.0;
    }
    tail.iter().product::<f64>().powf(1.0 / tail.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config_str;

    fn resolved(text: &str) -> ExperimentConfig {
        parse_config_str(text).unwrap().resolve().unwrap()
    }

    #[test]
    fn zero_steps_is_the_identity() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("final.txt");
        let cfg = resolved(&format!(
            "scheme = explicit\nsteps = 0\ngenerator = ramp\nn = 5\noutput = {}\n",
            out.display()
        ));
        run_experiment(&cfg).unwrap();
        let written = signal::read_signal(&out, 1.0).unwrap();
        assert_eq!(written.values(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
    }

    #[test]
    fn comparison_time_columns_match() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = resolved("scheme = fsi\ncycle_length = 3\nsteps = 2\ngenerator = step\nn = 17\n");
        compare("fsi_vs_explicit", &cfg, dir.path()).unwrap();
        let explicit = fs::read_to_string(dir.path().join("explicit.csv")).unwrap();
        let fsi = fs::read_to_string(dir.path().join("fsi.csv")).unwrap();
        let times = |text: &str| -> Vec<String> {
            text.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().to_string()).collect()
        };
        assert_eq!(times(&explicit), times(&fsi));
        assert_eq!(times(&explicit).len(), 7);
    }

    #[test]
    fn multigrid_run_reports_contraction() {
        let dir = tempfile::tempdir().unwrap();
        let traj = dir.path().join("trace.csv");
        let cfg = resolved(&format!(
            "scheme = multigrid\ntau = 10\ncycles = 5\ngenerator = random\nn = 33\ntrajectory = {}\n",
            traj.display()
        ));
        let summary = run_experiment(&cfg).unwrap();
        assert!(summary.starts_with("multigrid:"));
        let text = fs::read_to_string(&traj).unwrap();
        let last = text.lines().last().unwrap();
        let factor: f64 = last.split(',').nth(2).unwrap().parse().unwrap();
        assert!(factor < 1.0);
    }

    #[test]
    fn unknown_mode_is_a_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = resolved("scheme = fsi\n");
        assert!(matches!(compare("nope", &cfg, dir.path()), Err(Error::Config(_))));
    }
}
