//! The diffusion block: one explicit step `u − τ Kᵀ Φ(K u)` as a residual
//! block, chains of blocks, the Euclidean stability bound, and trajectory
//! diagnostics.
//!
//! A block is the residual composition `σ₂(u + W₂ σ₁(W₁ u + b₁) + b₂)` under
//! the substitutions `σ₁ = τΦ`, `σ₂ = Id`, `W₁ = K`, `W₂ = −Kᵀ`, zero
//! biases. Chains of blocks keep the Euclidean norm nonincreasing whenever
//! `τ ≤ 2/(L·‖K‖₂²)` with `L` the Lipschitz constant of the flux.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::flux::{self, FluxFunction};
use crate::operators::{spectral_norm_sq_capped, LinearOperator, StencilOp};
use crate::signal::{self, Signal};

/// Default relative tolerance for the spectral-norm estimate behind
/// [`stable_tau`].
pub const DEFAULT_SPECTRAL_TOL: f64 = 1e-9;

/// Stability-critical norm estimates get a generous iteration budget; the
/// general-purpose default cap stays at `DEFAULT_POWER_ITER_CAP`.
const STABLE_TAU_ITER_CAP: usize = 1_000_000;

/// Parameters of one diffusion block: operator, flux, and time step.
#[derive(Debug, Clone)]
pub struct BlockParams {
    op: StencilOp,
    flux: FluxFunction,
    tau: f64,
}

impl BlockParams {
    /// Block with an explicit time step. The caller owns stability; see
    /// [`BlockParams::stable`] for the enforced variant.
    pub fn new(op: StencilOp, flux: FluxFunction, tau: f64) -> Result<Self> {
        if !tau.is_finite() || tau <= 0.0 {
            return Err(Error::Parameter(format!("time step must be positive, got {tau}")));
        }
        Ok(BlockParams { op, flux, tau })
    }

    /// Block with `τ` set to the Euclidean stability bound of the pair.
    pub fn stable(op: StencilOp, flux: FluxFunction) -> Result<Self> {
        let tau = stable_tau(&op, &flux)?;
        Ok(BlockParams { op, flux, tau })
    }

    pub fn op(&self) -> &StencilOp {
        &self.op
    }

    pub fn flux(&self) -> &FluxFunction {
        &self.flux
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }
}

/// The largest provably stable time step `2/(L·‖K‖₂²)`, shrunk by the
/// `(1 + 10·tol)` safety factor because the power iteration estimates the
/// norm from below.
pub fn stable_tau<Op: LinearOperator + ?Sized>(op: &Op, flux: &FluxFunction) -> Result<f64> {
    stable_tau_with(op, flux, DEFAULT_SPECTRAL_TOL)
}

/// [`stable_tau`] with an explicit norm-estimation tolerance.
pub fn stable_tau_with<Op: LinearOperator + ?Sized>(
    op: &Op,
    flux: &FluxFunction,
    tol: f64,
) -> Result<f64> {
    let norm_sq = spectral_norm_sq_capped(op, tol, STABLE_TAU_ITER_CAP)?;
    if norm_sq == 0.0 {
        return Err(Error::Parameter(
            "stability bound is unbounded for the zero operator".into(),
        ));
    }
    Ok(2.0 / (flux.lipschitz() * norm_sq * (1.0 + 10.0 * tol)))
}

/// One explicit step `u − τ Kᵀ Φ(K u)` on raw samples. Generic over the
/// operator so arbitrary matrices can be driven through the same formula.
pub fn diffusion_step<Op: LinearOperator + ?Sized>(
    op: &Op,
    flux: &FluxFunction,
    tau: f64,
    u: &[f64],
) -> Vec<f64> {
    let ku = op.apply_slice(u);
    let phi: Vec<f64> = ku.iter().map(|&s| flux.flux(s)).collect();
    let ktphi = op.apply_adjoint_slice(&phi);
    u.iter().zip(&ktphi).map(|(ui, d)| ui - tau * d).collect()
}

/// One diffusion block applied to a signal.
pub fn diffusion_block(p: &BlockParams, u: &Signal) -> Result<Signal> {
    check_len(p, u)?;
    Ok(Signal::from_raw(diffusion_step(&p.op, &p.flux, p.tau, u.values()), u.h()))
}

/// The same block composed literally as `σ₂(u + W₂ σ₁(W₁ u + b₁) + b₂)`
/// with `σ₁ = τΦ`, `σ₂ = Id`, `W₁ = K`, `W₂ = −Kᵀ` and zero biases.
/// Agrees with [`diffusion_block`] to rounding (≤ 1e-14 per sample).
pub fn residual_block_form(p: &BlockParams, u: &Signal) -> Result<Signal> {
    check_len(p, u)?;
    let w1u = p.op.apply_slice(u.values());
    let sigma1: Vec<f64> = w1u.iter().map(|&s| p.tau * p.flux.flux(s)).collect();
    let w2s1: Vec<f64> = p.op.apply_adjoint_slice(&sigma1).iter().map(|x| -x).collect();
    let out: Vec<f64> = u.values().iter().zip(&w2s1).map(|(ui, d)| ui + d).collect();
    Ok(Signal::from_raw(out, u.h()))
}

fn check_len(p: &BlockParams, u: &Signal) -> Result<()> {
    if u.len() != p.op.domain_len() {
        return Err(Error::Size(format!(
            "block expects {} samples, signal has {}",
            p.op.domain_len(),
            u.len()
        )));
    }
    Ok(())
}

/// One diagnostics row of a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRow {
    pub step: usize,
    pub time: f64,
    pub l2_norm: f64,
    pub energy: f64,
    pub mean: f64,
}

/// Per-step diagnostics of a chain run; row 0 describes the input.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrajectoryRecord {
    rows: Vec<TrajectoryRow>,
}

impl TrajectoryRecord {
    pub fn rows(&self) -> &[TrajectoryRow] {
        &self.rows
    }

    pub(crate) fn push(&mut self, row: TrajectoryRow) {
        self.rows.push(row);
    }

    /// Render as CSV with 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,time,l2_norm,energy,mean\n");
        for r in &self.rows {
            writeln!(
                out,
                "{},{:.16e},{:.16e},{:.16e},{:.16e}",
                r.step, r.time, r.l2_norm, r.energy, r.mean
            )
            .expect("string write cannot fail");
        }
        out
    }
}

pub(crate) fn diagnostics_row(
    p: &BlockParams,
    step: usize,
    time: f64,
    values: &[f64],
    h: f64,
) -> TrajectoryRow {
    TrajectoryRow {
        step,
        time,
        l2_norm: signal::l2_norm_slice(values),
        energy: flux::energy_slice(&p.flux, &p.op, values, h),
        mean: values.iter().sum::<f64>() / values.len() as f64,
    }
}

/// Chain `steps` diffusion blocks, recording diagnostics per step.
/// Non-finite samples abort with the offending step index.
pub fn run_chain(p: &BlockParams, u0: &Signal, steps: usize) -> Result<(Signal, TrajectoryRecord)> {
    check_len(p, u0)?;
    let h = u0.h();
    let mut record = TrajectoryRecord::default();
    let mut u = u0.values().to_vec();
    record.push(diagnostics_row(p, 0, 0.0, &u, h));
    for k in 1..=steps {
        u = diffusion_step(&p.op, &p.flux, p.tau, &u);
        if !u.iter().all(|v| v.is_finite()) {
            return Err(Error::Divergence { step: k });
        }
        record.push(diagnostics_row(p, k, k as f64 * p.tau, &u, h));
    }
    Ok((Signal::from_raw(u, h), record))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::build_operator;
    use crate::oracle;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn forward_diff(n: usize) -> StencilOp {
        build_operator(&[(1, 1.0)], 1.0, n).unwrap()
    }

    #[test]
    fn stable_tau_plugin_values() {
        let identity = build_operator(&[(0, 1.0)], 1.0, 8).unwrap();
        let tau = stable_tau(&identity, &FluxFunction::linear()).unwrap();
        assert!((tau - 2.0 / (1.0 + 10.0 * DEFAULT_SPECTRAL_TOL)).abs() < 1e-12);

        // Same bound for any flux with Lipschitz constant 1.
        let pm = FluxFunction::perona_malik_exp(1.0).unwrap();
        let tau_pm = stable_tau(&identity, &pm).unwrap();
        assert_eq!(tau, tau_pm);
    }

    #[test]
    fn stable_tau_approaches_half_from_above() {
        let mut last = f64::INFINITY;
        for n in [16usize, 64, 256] {
            let tau = stable_tau(&forward_diff(n), &FluxFunction::linear()).unwrap();
            assert!(tau > 0.5 / (1.0 + 10.0 * DEFAULT_SPECTRAL_TOL));
            assert!(tau < last);
            last = tau;
        }
        assert!((last - 0.5).abs() < 1e-3);
    }

    #[test]
    fn constant_signal_is_a_fixed_point() {
        let p = BlockParams::stable(forward_diff(6), FluxFunction::perona_malik_exp(1.0).unwrap())
            .unwrap();
        let u = Signal::new(vec![0.3; 6], 1.0).unwrap();
        let out = diffusion_block(&p, &u).unwrap();
        assert_eq!(out.values(), u.values());
    }

    #[test]
    fn linear_step_matches_dense_oracle() {
        let p = BlockParams::new(forward_diff(3), FluxFunction::linear(), 0.25).unwrap();
        let u = Signal::new(vec![0.0, 1.0, 0.0], 1.0).unwrap();
        let out = diffusion_block(&p, &u).unwrap();
        assert_eq!(out.values(), &[0.25, 0.5, 0.25]);

        // Dense route: (I − τKᵀK)u.
        let k = oracle::dense_stencil_matrix(&[(1, 1.0)], 1.0, 3);
        let step = DMatrix::identity(3, 3) - k.transpose() * &k * 0.25;
        let reference = step * DVector::from_column_slice(u.values());
        for (a, b) in out.values().iter().zip(reference.iter()) {
            assert!((a - b).abs() <= 1e-15);
        }
    }

    #[test]
    fn nonlinear_step_matches_diagonal_matrix_oracle() {
        // Oracle: u' = (I − τ Kᵀ G(u) K) u with G = diag(g((Ku)ᵢ²)).
        let flux = FluxFunction::perona_malik_exp(1.0).unwrap();
        let p = BlockParams::new(forward_diff(3), flux, 0.3).unwrap();
        let u = Signal::new(vec![0.0, 1.0, 0.0], 1.0).unwrap();
        let out = diffusion_block(&p, &u).unwrap();

        let k = oracle::dense_stencil_matrix(&[(1, 1.0)], 1.0, 3);
        let ku = &k * DVector::from_column_slice(u.values());
        let g = DMatrix::from_diagonal(&DVector::from_iterator(
            ku.len(),
            ku.iter().map(|&s| flux.diffusivity(s * s)),
        ));
        let step = DMatrix::identity(3, 3) - k.transpose() * g * &k * 0.3;
        let reference = step * DVector::from_column_slice(u.values());
        for (a, b) in out.values().iter().zip(reference.iter()) {
            assert!((a - b).abs() <= 1e-15, "{a} vs {b}");
        }
    }

    #[test]
    fn residual_block_form_agrees_with_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..40 {
            let n = rng.random_range(2..40);
            let op = build_operator(
                &[(1, rng.random_range(-2.0..2.0)), (2, rng.random_range(-2.0..2.0))],
                rng.random_range(0.5..2.0),
                n,
            )
            .unwrap();
            let flux = FluxFunction::perona_malik_exp(rng.random_range(0.3..3.0)).unwrap();
            let tau = stable_tau(&op, &flux).unwrap();
            let p = BlockParams::new(op, flux, tau).unwrap();
            let u = Signal::new((0..n).map(|_| rng.random_range(-1.0..1.0)).collect(), 1.0).unwrap();
            let a = diffusion_block(&p, &u).unwrap();
            let b = residual_block_form(&p, &u).unwrap();
            for (x, y) in a.values().iter().zip(b.values()) {
                assert!((x - y).abs() <= 1e-14, "{x} vs {y}");
            }
        }
    }

    #[test]
    fn chain_records_and_preserves_mean() {
        let p = BlockParams::stable(forward_diff(33), FluxFunction::charbonnier(1.0).unwrap())
            .unwrap();
        let u0 = Signal::new((0..33).map(|i| (i as f64 * 0.7).sin()).collect(), 1.0).unwrap();
        let (_, record) = run_chain(&p, &u0, 200).unwrap();
        assert_eq!(record.rows().len(), 201);
        let m0 = record.rows()[0].mean;
        for w in record.rows().windows(2) {
            assert!(w[1].l2_norm <= w[0].l2_norm * (1.0 + 1e-12));
            assert!((w[1].mean - w[0].mean).abs() <= 1e-12 * m0.abs().max(1.0));
        }
    }

    #[test]
    fn zero_steps_returns_input() {
        let p = BlockParams::stable(forward_diff(4), FluxFunction::linear()).unwrap();
        let u0 = Signal::new(vec![0.1, 0.9, -0.4, 0.2], 1.0).unwrap();
        let (out, record) = run_chain(&p, &u0, 0).unwrap();
        assert_eq!(out.values(), u0.values());
        assert_eq!(record.rows().len(), 1);
    }

    #[test]
    fn oversized_step_diverges_with_index() {
        let op = forward_diff(16);
        let tau = 2.0 * stable_tau(&op, &FluxFunction::linear()).unwrap();
        let p = BlockParams::new(op, FluxFunction::linear(), tau).unwrap();
        let u0 = Signal::new((0..16).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect(), 1.0)
            .unwrap();
        match run_chain(&p, &u0, 2000) {
            Err(Error::Divergence { step }) => assert!(step > 0),
            Ok((_, record)) => {
                let first = record.rows()[0].l2_norm;
                let last = record.rows().last().unwrap().l2_norm;
                assert!(last > 10.0 * first, "norm must grow: {first} -> {last}");
            }
            Err(other) => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn energy_decreases_at_half_bound() {
        for flux in [
            FluxFunction::linear(),
            FluxFunction::perona_malik_exp(0.5).unwrap(),
            FluxFunction::charbonnier(1.5).unwrap(),
        ] {
            let op = forward_diff(17);
            let tau = stable_tau(&op, &flux).unwrap() / 2.0;
            let p = BlockParams::new(op, flux, tau).unwrap();
            let u0 = Signal::new((0..17).map(|i| (i as f64).cos()).collect(), 1.0).unwrap();
            let (_, record) = run_chain(&p, &u0, 100).unwrap();
            for w in record.rows().windows(2) {
                assert!(w[1].energy <= w[0].energy * (1.0 + 1e-10));
            }
        }
    }

    #[test]
    fn step_map_is_continuous_in_the_input() {
        let op = forward_diff(24);
        let flux = FluxFunction::perona_malik_exp(1.0).unwrap();
        let tau = stable_tau(&op, &flux).unwrap();
        let norm_sq =
            crate::operators::spectral_norm_sq(&op, 1e-10).unwrap() * (1.0 + 1e-9);
        let bound = 1.0 + tau * flux.lipschitz() * norm_sq;

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let u: Vec<f64> = (0..24).map(|_| rng.random_range(-1.0..1.0)).collect();
            let eps = 1e-6;
            let v: Vec<f64> = u.iter().map(|x| x + eps * rng.random_range(-1.0..1.0)).collect();
            let su = diffusion_step(&op, &flux, tau, &u);
            let sv = diffusion_step(&op, &flux, tau, &v);
            let din: f64 = u.iter().zip(&v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            let dout: f64 = su.iter().zip(&sv).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            assert!(dout <= bound * din * (1.0 + 1e-8), "{dout} vs {}", bound * din);
        }
    }

    #[test]
    fn trajectory_csv_shape() {
        let p = BlockParams::stable(forward_diff(4), FluxFunction::linear()).unwrap();
        let u0 = Signal::new(vec![0.0, 1.0, 0.0, 0.5], 1.0).unwrap();
        let (_, record) = run_chain(&p, &u0, 3).unwrap();
        let csv = record.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("step,time,l2_norm,energy,mean"));
        assert_eq!(lines.count(), 4);
    }
}
