//! Linear two-grid and multilevel V-cycles for SPD systems `A x = b`,
//! implemented twice: as a classic multigrid routine and as a three-channel
//! U-net whose grid transfers are channel selectors.
//!
//! The three channels carry the iterate `x`, the right-hand side `b`, and
//! the residual `r = b − Ax`. Downsampling applies the restriction only to
//! the residual channel — it becomes the coarse right-hand side, so the
//! coarse level solves the residual equation `Aᴴ eᴴ = rᴴ`. Upsampling
//! applies the prolongation only to the coarse solution channel, and the
//! channel-wise addition realises the coarse-grid correction.
//!
//! Grids are vertex-centered with `n = 2·n_c − 1`; restriction is full
//! weighting `R = ½Pᵀ` and prolongation is linear interpolation, so the
//! variational pairing `P = 2Rᵀ` is exact. The default smoother is damped
//! Jacobi with `ω = 2/3`. Coarse operators are rediscretised at spacing
//! `2h` rather than formed as Galerkin products, keeping every level
//! matrix-free.

use crate::error::{Error, Result};
use crate::operators::{LinearOperator, StencilOp};
use crate::oracle;
use crate::signal::{l2_norm_slice, Signal};

/// A symmetric positive-definite, matrix-free system operator that knows
/// its diagonal (for Jacobi) and how to rediscretise itself on the
/// next-coarser grid.
pub trait MultigridOperator: Sized {
    fn len(&self) -> usize;
    fn apply(&self, x: &[f64]) -> Vec<f64>;
    /// Main diagonal entries.
    fn diagonal(&self) -> &[f64];
    /// The same operator rebuilt at doubled grid spacing on `(n+1)/2` nodes.
    fn coarsen(&self) -> Result<Self>;
}

/// The implicit linear diffusion system `A = I + τ·KᵀK`. Symmetric positive
/// definite for any stencil `K`, nonsingular under reflecting boundaries.
#[derive(Debug, Clone)]
pub struct ImplicitDiffusionOperator {
    op: StencilOp,
    tau: f64,
    diag: Vec<f64>,
}

impl ImplicitDiffusionOperator {
    pub fn new(weights: &[(usize, f64)], h: f64, n: usize, tau: f64) -> Result<Self> {
        if !tau.is_finite() || tau < 0.0 {
            return Err(Error::Parameter(format!("problem tau must be nonnegative, got {tau}")));
        }
        let op = StencilOp::new(weights, h, n)?;
        let diag = Self::diagonal_of(&op, tau);
        Ok(ImplicitDiffusionOperator { op, tau, diag })
    }

    /// diag(A)ᵢ = 1 + τ·Σᵣ K²ᵣᵢ, computed by probing K with unit vectors.
    fn diagonal_of(op: &StencilOp, tau: f64) -> Vec<f64> {
        let n = op.domain_len();
        let mut diag = vec![0.0; n];
        let mut e = vec![0.0; n];
        for (i, d) in diag.iter_mut().enumerate() {
            e[i] = 1.0;
            let col = op.apply_slice(&e);
            *d = 1.0 + tau * col.iter().map(|x| x * x).sum::<f64>();
            e[i] = 0.0;
        }
        diag
    }

    pub fn stencil(&self) -> &StencilOp {
        &self.op
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn h(&self) -> f64 {
        self.op.h()
    }
}

impl MultigridOperator for ImplicitDiffusionOperator {
    fn len(&self) -> usize {
        self.op.domain_len()
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let kx = self.op.apply_slice(x);
        let ktkx = self.op.apply_adjoint_slice(&kx);
        x.iter().zip(&ktkx).map(|(xi, d)| xi + self.tau * d).collect()
    }

    fn diagonal(&self) -> &[f64] {
        &self.diag
    }

    fn coarsen(&self) -> Result<Self> {
        let n = self.len();
        if n < 3 || n % 2 == 0 {
            return Err(Error::Size(format!("grid of {n} nodes cannot be coarsened (need n = 2·n_c − 1)")));
        }
        let nc = (n + 1) / 2;
        let op = self.op.rebuilt(2.0 * self.op.h(), nc)?;
        let diag = Self::diagonal_of(&op, self.tau);
        Ok(ImplicitDiffusionOperator { op, tau: self.tau, diag })
    }
}

// The system matrix is symmetric, so the adjoint equals the map itself.
impl LinearOperator for ImplicitDiffusionOperator {
    fn domain_len(&self) -> usize {
        self.len()
    }

    fn codomain_len(&self) -> usize {
        self.len()
    }

    fn apply_slice(&self, u: &[f64]) -> Vec<f64> {
        MultigridOperator::apply(self, u)
    }

    fn apply_adjoint_slice(&self, v: &[f64]) -> Vec<f64> {
        MultigridOperator::apply(self, v)
    }
}

/// A linear system `A x = b`.
#[derive(Debug, Clone)]
pub struct LinearProblem<A: MultigridOperator> {
    pub a: A,
    pub b: Signal,
}

impl<A: MultigridOperator> LinearProblem<A> {
    pub fn new(a: A, b: Signal) -> Result<Self> {
        if b.len() != a.len() {
            return Err(Error::Size(format!(
                "operator order {} does not match right-hand side length {}",
                a.len(),
                b.len()
            )));
        }
        Ok(LinearProblem { a, b })
    }
}

/// The three-channel state `(x, b, r)` at one grid level.
#[derive(Debug, Clone)]
pub struct UNetState {
    pub x: Signal,
    pub b: Signal,
    pub r: Signal,
}

/// Coarsest-level solver of a cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoarseSolver {
    /// Dense LU on the probed coarse matrix.
    Direct,
    /// The given number of damped-Jacobi sweeps from a zero start.
    SmootherOnly(usize),
}

/// Cycle shape: smoothing sweeps, damping, depth, coarsest solver.
#[derive(Debug, Clone, Copy)]
pub struct CycleConfig {
    pub pre_smooth: usize,
    pub post_smooth: usize,
    pub omega: f64,
    pub levels: usize,
    pub coarse_solver: CoarseSolver,
}

impl Default for CycleConfig {
    fn default() -> Self {
        CycleConfig {
            pre_smooth: 2,
            post_smooth: 2,
            omega: 2.0 / 3.0,
            levels: 2,
            coarse_solver: CoarseSolver::Direct,
        }
    }
}

impl CycleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.omega > 0.0 && self.omega <= 1.0) {
            return Err(Error::Parameter(format!("damping must satisfy 0 < ω ≤ 1, got {}", self.omega)));
        }
        if self.levels < 2 {
            return Err(Error::Parameter(format!("a cycle needs at least 2 levels, got {}", self.levels)));
        }
        Ok(())
    }
}

/// `sweeps` damped-Jacobi sweeps `x ← x + ωD⁻¹(b − Ax)`; the returned state
/// carries a freshly computed residual.
pub fn smoother<A: MultigridOperator>(
    a: &A,
    b: &Signal,
    x: &Signal,
    sweeps: usize,
    omega: f64,
) -> Result<UNetState> {
    if b.len() != a.len() || x.len() != a.len() {
        return Err(Error::Size(format!(
            "smoother operands must have {} samples (got b: {}, x: {})",
            a.len(),
            b.len(),
            x.len()
        )));
    }
    let diag = a.diagonal();
    if diag.iter().any(|&d| d == 0.0) {
        return Err(Error::Singular("Jacobi smoother found a zero diagonal entry".into()));
    }
    let mut xv = x.values().to_vec();
    for _ in 0..sweeps {
        let ax = a.apply(&xv);
        for i in 0..xv.len() {
            xv[i] += omega * (b.values()[i] - ax[i]) / diag[i];
        }
    }
    let ax = a.apply(&xv);
    let r: Vec<f64> = b.values().iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    Ok(UNetState {
        x: Signal::from_raw(xv, x.h()),
        b: b.clone(),
        r: Signal::from_raw(r, x.h()),
    })
}

/// Full-weighting restriction `R = ½Pᵀ` onto the coarse grid (spacing 2h).
///
/// Interior coarse nodes apply the (¼, ½, ¼) stencil; the end rows are
/// (½, ¼) so the adjoint pairing with [`prolong`] is exact. (End rows that
/// preserve constants instead would break `P = 2Rᵀ` at the boundary —
/// vertex-centered grids cannot have both.)
pub fn restrict(v: &Signal) -> Result<Signal> {
    let n = v.len();
    if n < 3 || n % 2 == 0 {
        return Err(Error::Size(format!("cannot restrict {n} nodes (need n = 2·n_c − 1 ≥ 3)")));
    }
    let nc = (n + 1) / 2;
    let vals = v.values();
    let mut out = vec![0.0; nc];
    out[0] = 0.5 * vals[0] + 0.25 * vals[1];
    for j in 1..nc - 1 {
        out[j] = 0.25 * vals[2 * j - 1] + 0.5 * vals[2 * j] + 0.25 * vals[2 * j + 1];
    }
    out[nc - 1] = 0.25 * vals[n - 2] + 0.5 * vals[n - 1];
    Ok(Signal::from_raw(out, 2.0 * v.h()))
}

/// Linear-interpolation prolongation onto the fine grid (spacing h/2).
pub fn prolong(w: &Signal) -> Result<Signal> {
    let nc = w.len();
    if nc < 2 {
        return Err(Error::Size(format!("cannot prolong {nc} nodes (need at least 2)")));
    }
    let n = 2 * nc - 1;
    let vals = w.values();
    let mut out = vec![0.0; n];
    for j in 0..nc {
        out[2 * j] = vals[j];
        if j + 1 < nc {
            out[2 * j + 1] = 0.5 * (vals[j] + vals[j + 1]);
        }
    }
    Ok(Signal::from_raw(out, 0.5 * w.h()))
}

/// Solve the coarsest level. Both paths emit a complete three-channel state
/// (the right-hand side and residual would feed a further level).
fn coarse_solve_state<A: MultigridOperator>(
    a: &A,
    b: &Signal,
    cfg: &CycleConfig,
) -> Result<UNetState> {
    match cfg.coarse_solver {
        CoarseSolver::Direct => {
            let n = a.len();
            let mut dense = nalgebra::DMatrix::zeros(n, n);
            let mut e = vec![0.0; n];
            for j in 0..n {
                e[j] = 1.0;
                let col = a.apply(&e);
                for (i, &val) in col.iter().enumerate() {
                    dense[(i, j)] = val;
                }
                e[j] = 0.0;
            }
            let x = oracle::solve_dense(&dense, b.values())?;
            let ax = a.apply(&x);
            let r: Vec<f64> = b.values().iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
            Ok(UNetState {
                x: Signal::from_raw(x, b.h()),
                b: b.clone(),
                r: Signal::from_raw(r, b.h()),
            })
        }
        CoarseSolver::SmootherOnly(sweeps) => {
            let zero = Signal::zeros(a.len(), b.h());
            smoother(a, b, &zero, sweeps, cfg.omega)
        }
    }
}

/// One two-grid cycle: pre-smooth, restrict the residual, solve the coarse
/// residual equation, prolong the coarse error, correct, post-smooth.
pub fn two_grid_cycle<A: MultigridOperator>(
    p: &LinearProblem<A>,
    x0: &Signal,
    cfg: &CycleConfig,
) -> Result<UNetState> {
    cfg.validate()?;
    let fine = smoother(&p.a, &p.b, x0, cfg.pre_smooth, cfg.omega)?;
    let coarse_rhs = restrict(&fine.r)?;
    let coarse_op = p.a.coarsen()?;
    let coarse = coarse_solve_state(&coarse_op, &coarse_rhs, cfg)?;
    let correction = prolong(&coarse.x)?;
    let corrected: Vec<f64> = fine
        .x
        .values()
        .iter()
        .zip(correction.values())
        .map(|(xi, ei)| xi + ei)
        .collect();
    smoother(&p.a, &p.b, &Signal::from_raw(corrected, x0.h()), cfg.post_smooth, cfg.omega)
}

/// The identical computation routed through three-channel states and
/// channel-selector transfer operators; output equals [`two_grid_cycle`]
/// bit for bit.
pub fn unet_form_cycle<A: MultigridOperator>(
    p: &LinearProblem<A>,
    x0: &Signal,
    cfg: &CycleConfig,
) -> Result<UNetState> {
    cfg.validate()?;
    // Fine solver on (x₀, b, ·); the input residual channel is ignored.
    let fine = smoother(&p.a, &p.b, x0, cfg.pre_smooth, cfg.omega)?;

    // Downsampling block matrix: the only nonzero block routes R·r into the
    // coarse b channel; the coarse x starts at zero and the don't-care
    // residual channel is materialised as zero.
    let coarse_in = UNetState {
        x: Signal::zeros((fine.r.len() + 1) / 2, 2.0 * fine.r.h()),
        b: restrict(&fine.r)?,
        r: Signal::zeros((fine.r.len() + 1) / 2, 2.0 * fine.r.h()),
    };

    // Coarse solver on the residual equation.
    let coarse_op = p.a.coarsen()?;
    let coarse_out = coarse_solve_state(&coarse_op, &coarse_in.b, cfg)?;

    // Upsampling block matrix: only P·x̃ᴴ passes; the coarse b is zeroed so
    // it cannot interfere with the fine right-hand side.
    let upsampled = UNetState {
        x: prolong(&coarse_out.x)?,
        b: Signal::zeros(p.a.len(), x0.h()),
        r: Signal::zeros(p.a.len(), x0.h()),
    };

    // Channel-wise addition: the skip connection adds the fine state and
    // the upsampled coarse correction.
    let merged_x: Vec<f64> = fine
        .x
        .values()
        .iter()
        .zip(upsampled.x.values())
        .map(|(xi, ei)| xi + ei)
        .collect();
    let merged_b: Vec<f64> = fine
        .b
        .values()
        .iter()
        .zip(upsampled.b.values())
        .map(|(bi, zi)| bi + zi)
        .collect();

    // Second fine solver on (x̃_new, b, ·).
    smoother(
        &p.a,
        &Signal::from_raw(merged_b, x0.h()),
        &Signal::from_raw(merged_x, x0.h()),
        cfg.post_smooth,
        cfg.omega,
    )
}

/// Recursive V-cycle: the coarse solve of each level is a V-cycle one level
/// down; the coarsest level uses `cfg.coarse_solver`. `cfg.levels = 2`
/// reproduces [`two_grid_cycle`] exactly.
pub fn v_cycle<A: MultigridOperator>(
    p: &LinearProblem<A>,
    x0: &Signal,
    cfg: &CycleConfig,
) -> Result<UNetState> {
    cfg.validate()?;
    check_coarsenable(p.a.len(), cfg.levels)?;
    cycle_recursive(&p.a, &p.b, x0, cfg, cfg.levels)
}

fn check_coarsenable(n: usize, levels: usize) -> Result<()> {
    let mut len = n;
    for _ in 1..levels {
        if len < 3 || len % 2 == 0 {
            return Err(Error::Size(format!(
                "grid of {n} nodes does not support {levels} levels (need n = 2^(levels−1)·m + 1)"
            )));
        }
        len = (len + 1) / 2;
    }
    Ok(())
}

fn cycle_recursive<A: MultigridOperator>(
    a: &A,
    b: &Signal,
    x0: &Signal,
    cfg: &CycleConfig,
    levels_left: usize,
) -> Result<UNetState> {
    if levels_left == 1 {
        return coarse_solve_state(a, b, cfg);
    }
    let fine = smoother(a, b, x0, cfg.pre_smooth, cfg.omega)?;
    let coarse_rhs = restrict(&fine.r)?;
    let coarse_op = a.coarsen()?;
    let coarse_zero = Signal::zeros(coarse_rhs.len(), coarse_rhs.h());
    let coarse = cycle_recursive(&coarse_op, &coarse_rhs, &coarse_zero, cfg, levels_left - 1)?;
    let correction = prolong(&coarse.x)?;
    let corrected: Vec<f64> = fine
        .x
        .values()
        .iter()
        .zip(correction.values())
        .map(|(xi, ei)| xi + ei)
        .collect();
    smoother(a, b, &Signal::from_raw(corrected, x0.h()), cfg.post_smooth, cfg.omega)
}

/// One row of a solve trace.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleTraceRow {
    pub cycle: usize,
    pub residual_norm: f64,
    pub reduction_factor: f64,
}

/// Repeat V-cycles from `x = 0` until `‖r‖ ≤ rtol·‖b‖` or `max_cycles`.
/// Row 0 records the initial residual with factor 1.
pub fn solve<A: MultigridOperator>(
    p: &LinearProblem<A>,
    cfg: &CycleConfig,
    max_cycles: usize,
    rtol: f64,
) -> Result<(Signal, Vec<CycleTraceRow>)> {
    cfg.validate()?;
    let mut x = Signal::zeros(p.a.len(), p.b.h());
    let mut residual = l2_norm_slice(p.b.values());
    let target = rtol * residual;
    let mut trace = vec![CycleTraceRow { cycle: 0, residual_norm: residual, reduction_factor: 1.0 }];
    for cycle in 1..=max_cycles {
        if residual <= target {
            break;
        }
        let state = v_cycle(p, &x, cfg)?;
        let new_residual = crate::signal::l2_norm(&state.r);
        let factor = if residual > 0.0 { new_residual / residual } else { 0.0 };
        trace.push(CycleTraceRow { cycle, residual_norm: new_residual, reduction_factor: factor });
        x = state.x;
        residual = new_residual;
    }
    Ok((x, trace))
}

/// Render a solve trace as CSV with 17 significant digits.
pub fn trace_to_csv(trace: &[CycleTraceRow]) -> String {
    use std::fmt::Write as _;
    let mut out = String::from("cycle,residual_norm,reduction_factor\n");
    for row in trace {
        writeln!(out, "{},{:.16e},{:.16e}", row.cycle, row.residual_norm, row.reduction_factor)
            .expect("string write cannot fail");
    }
    out
}
