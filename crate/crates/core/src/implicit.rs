//! The fully implicit step `v + τ Kᵀ Φ(K v) = u`, solved by fixed-point
//! iterations `vₗ₊₁ = u − τ Kᵀ Φ(K vₗ)` from `v₀ = u`.
//!
//! Every inner iterate references the *original* input `u` — recurrent
//! feedback from the previous time level, unlike chained explicit blocks.
//! The iteration map is a contraction when `τ·L·‖K‖₂² < 1`; construction
//! records that margin and flags (but does not reject) the regime beyond it.

use crate::error::{Error, Result};
use crate::explicit::BlockParams;
use crate::operators::{spectral_norm_sq_capped, LinearOperator};
use crate::signal::{l2_norm_slice, Signal};

/// Loose tolerance for the construction-time margin estimate; tests that
/// compare decay rates against the margin use [`contraction_margin_with`]
/// at a tighter tolerance.
const MARGIN_SPECTRAL_TOL: f64 = 1e-6;
const MARGIN_ITER_CAP: usize = 1_000_000;

/// An implicit step with an inner-iteration budget and an early-exit
/// residual tolerance relative to `‖u‖`.
#[derive(Debug, Clone)]
pub struct ImplicitStep {
    base: BlockParams,
    inner_iters: usize,
    residual_tol: f64,
    margin: f64,
}

impl ImplicitStep {
    pub fn new(base: BlockParams, inner_iters: usize, residual_tol: f64) -> Result<Self> {
        if inner_iters < 1 {
            return Err(Error::Parameter("inner iteration budget must be at least 1".into()));
        }
        if !residual_tol.is_finite() || residual_tol <= 0.0 {
            return Err(Error::Parameter(format!(
                "residual tolerance must be positive, got {residual_tol}"
            )));
        }
        let margin = contraction_margin_with(base.op(), base.flux().lipschitz(), base.tau(), MARGIN_SPECTRAL_TOL)?;
        Ok(ImplicitStep { base, inner_iters, residual_tol, margin })
    }

    /// Default residual tolerance `1e-12·‖u‖`.
    pub fn with_default_tol(base: BlockParams, inner_iters: usize) -> Result<Self> {
        ImplicitStep::new(base, inner_iters, 1e-12)
    }

    pub fn base(&self) -> &BlockParams {
        &self.base
    }

    pub fn inner_iters(&self) -> usize {
        self.inner_iters
    }

    pub fn residual_tol(&self) -> f64 {
        self.residual_tol
    }

    /// `τ·L·‖K‖₂²`: below 1 the fixed-point map is a contraction
    /// (sufficient, not necessary).
    pub fn contraction_margin(&self) -> f64 {
        self.margin
    }

    pub fn is_contraction(&self) -> bool {
        self.margin < 1.0
    }
}

/// `τ·L·‖K‖₂²` with an explicit norm-estimation tolerance.
pub fn contraction_margin_with<Op: LinearOperator + ?Sized>(
    op: &Op,
    lipschitz: f64,
    tau: f64,
    tol: f64,
) -> Result<f64> {
    if tau == 0.0 {
        return Ok(0.0);
    }
    let norm_sq = spectral_norm_sq_capped(op, tol, MARGIN_ITER_CAP)?;
    Ok(tau * lipschitz * norm_sq)
}

/// Outcome of one implicit step.
#[derive(Debug, Clone)]
pub struct ImplicitOutcome {
    pub signal: Signal,
    /// Fixed-point updates actually performed (0 if the input already
    /// satisfies the equation).
    pub iterations: usize,
    /// Achieved fixed-point residual `‖v − (u − τKᵀΦ(Kv))‖₂`.
    pub residual: f64,
    /// Residuals per recorded iterate, starting with the input.
    pub residual_history: Vec<f64>,
}

/// Solve one implicit step. Stops early once the fixed-point residual drops
/// below `residual_tol·‖u‖`; if the budget runs out first, the best iterate
/// is returned with its achieved residual (not an error).
pub fn implicit_step(s: &ImplicitStep, u: &Signal) -> Result<ImplicitOutcome> {
    let op = s.base.op();
    if u.len() != op.domain_len() {
        return Err(Error::Size(format!(
            "implicit step expects {} samples, signal has {}",
            op.domain_len(),
            u.len()
        )));
    }
    let flux = s.base.flux();
    let tau = s.base.tau();
    let input = u.values();
    let tol = s.residual_tol * l2_norm_slice(input);

    // One application of the fixed-point map G(v) = u − τKᵀΦ(Kv).
    let apply_map = |v: &[f64]| -> Vec<f64> {
        let kv = op.apply_slice(v);
        let phi: Vec<f64> = kv.iter().map(|&x| flux.flux(x)).collect();
        let ktphi = op.apply_adjoint_slice(&phi);
        input.iter().zip(&ktphi).map(|(ui, d)| ui - tau * d).collect()
    };

    let mut v = input.to_vec();
    let mut mapped = apply_map(&v);
    let mut residual = distance(&v, &mapped);
    let mut history = vec![residual];
    let mut iterations = 0;

    while residual > tol && iterations < s.inner_iters {
        v = mapped;
        iterations += 1;
        if !v.iter().all(|x| x.is_finite()) {
            return Err(Error::Divergence { step: iterations });
        }
        mapped = apply_map(&v);
        if !mapped.iter().all(|x| x.is_finite()) {
            return Err(Error::Divergence { step: iterations });
        }
        residual = distance(&v, &mapped);
        history.push(residual);
    }

    Ok(ImplicitOutcome {
        signal: Signal::from_raw(v, u.h()),
        iterations,
        residual,
        residual_history: history,
    })
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::explicit::{diffusion_block, stable_tau};
    use crate::flux::FluxFunction;
    use crate::operators::build_operator;
    use crate::oracle;
    use crate::signal::l2_norm;
    use nalgebra::DMatrix;

    fn forward_diff(n: usize) -> crate::operators::StencilOp {
        build_operator(&[(1, 1.0)], 1.0, n).unwrap()
    }

    #[test]
    fn single_iteration_equals_explicit_block() {
        let op = forward_diff(9);
        let flux = FluxFunction::perona_malik_exp(1.0).unwrap();
        let tau = stable_tau(&op, &flux).unwrap();
        let p = BlockParams::new(op, flux, tau).unwrap();
        let u = Signal::new((0..9).map(|i| (i as f64).sin()).collect(), 1.0).unwrap();

        // A tolerance far below reach forces exactly one update.
        let s = ImplicitStep::new(p.clone(), 1, 1e-300).unwrap();
        let out = implicit_step(&s, &u).unwrap();
        let explicit = diffusion_block(&p, &u).unwrap();
        assert_eq!(out.signal.values(), explicit.values());
        assert_eq!(out.iterations, 1);
    }

    #[test]
    fn constant_input_is_already_solved() {
        let op = forward_diff(6);
        let p = BlockParams::new(op, FluxFunction::linear(), 0.1).unwrap();
        let s = ImplicitStep::with_default_tol(p, 25).unwrap();
        let u = Signal::new(vec![1.5; 6], 1.0).unwrap();
        let out = implicit_step(&s, &u).unwrap();
        assert_eq!(out.signal.values(), u.values());
        assert_eq!(out.iterations, 0);
        assert_eq!(out.residual, 0.0);
    }

    #[test]
    fn linear_fixed_point_matches_direct_solve() {
        let n = 32;
        let op = forward_diff(n);
        let tau = 0.2; // margin ≈ 0.8 < 1
        let p = BlockParams::new(op, FluxFunction::linear(), tau).unwrap();
        let s = ImplicitStep::new(p, 600, 1e-13).unwrap();
        assert!(s.is_contraction());

        let u = Signal::new((0..n).map(|i| ((i * 7 % 13) as f64) / 13.0).collect(), 1.0).unwrap();
        let out = implicit_step(&s, &u).unwrap();

        let gram = oracle::dense_gram(&[(1, 1.0)], 1.0, n);
        let a = DMatrix::identity(n, n) + gram * tau;
        let direct = oracle::solve_dense(&a, u.values()).unwrap();
        let err = out
            .signal
            .values()
            .iter()
            .zip(&direct)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt();
        assert!(err <= 1e-10 * l2_norm(&u), "error {err}");
    }

    #[test]
    fn nonlinear_fixed_point_matches_newton_oracle() {
        let n = 24;
        let op = forward_diff(n);
        let flux = FluxFunction::perona_malik_exp(0.8).unwrap();
        let tau = 0.2;
        let p = BlockParams::new(op, flux, tau).unwrap();
        let s = ImplicitStep::new(p, 800, 1e-13).unwrap();

        let u = Signal::new((0..n).map(|i| if i < n / 2 { 0.0 } else { 1.0 }).collect(), 1.0)
            .unwrap();
        let out = implicit_step(&s, &u).unwrap();

        let k = oracle::dense_stencil_matrix(&[(1, 1.0)], 1.0, n);
        let newton = oracle::newton_implicit_solution(&k, &flux, tau, u.values(), 1e-13).unwrap();
        let err = out
            .signal
            .values()
            .iter()
            .zip(&newton)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt();
        assert!(err <= 1e-8 * l2_norm(&u), "error {err}");
    }

    #[test]
    fn residuals_decay_geometrically_under_contraction() {
        let n = 48;
        let op = forward_diff(n);
        let flux = FluxFunction::linear();
        let lambda_est = crate::operators::spectral_norm_sq(&op, 1e-10).unwrap();
        let tau = 0.9 / lambda_est;
        let margin = contraction_margin_with(&op, flux.lipschitz(), tau, 1e-10).unwrap();
        assert!(margin <= 0.9 * (1.0 + 1e-8));

        let p = BlockParams::new(op, flux, tau).unwrap();
        let s = ImplicitStep::new(p, 80, 1e-14).unwrap();
        let u = Signal::new((0..n).map(|i| (i as f64 * 0.9).sin()).collect(), 1.0).unwrap();
        let out = implicit_step(&s, &u).unwrap();
        for w in out.residual_history.windows(2) {
            if w[0] > 0.0 {
                assert!(w[1] <= margin * w[0] * (1.0 + 1e-8), "{} vs {}", w[1], margin * w[0]);
            }
        }
    }

    #[test]
    fn margin_plugin_values() {
        let identity = build_operator(&[(0, 1.0)], 1.0, 8).unwrap();
        let m = contraction_margin_with(&identity, 1.0, 0.5, 1e-10).unwrap();
        assert!((m - 0.5).abs() <= 1e-9);
        assert_eq!(contraction_margin_with(&identity, 1.0, 0.0, 1e-10).unwrap(), 0.0);

        let op = forward_diff(64);
        let dense = oracle::max_eigenvalue_sym(&oracle::dense_gram(&[(1, 1.0)], 1.0, 64));
        let m = contraction_margin_with(&op, 1.0, 0.2, 1e-10).unwrap();
        assert!((m - 0.2 * dense).abs() <= 1e-8 * dense);
    }

    #[test]
    fn non_contractive_construction_is_flagged_not_rejected() {
        let op = forward_diff(16);
        let tau = 10.0 * stable_tau(&op, &FluxFunction::linear()).unwrap();
        let p = BlockParams::new(op, FluxFunction::linear(), tau).unwrap();
        let s = ImplicitStep::with_default_tol(p, 5).unwrap();
        assert!(!s.is_contraction());
        assert!(s.contraction_margin() > 1.0);
    }

    #[test]
    fn budget_exhaustion_returns_best_iterate() {
        let op = forward_diff(16);
        let p = BlockParams::new(op, FluxFunction::linear(), 0.2).unwrap();
        let s = ImplicitStep::new(p, 2, 1e-15).unwrap();
        let u = Signal::new((0..16).map(|i| i as f64 / 15.0).collect(), 1.0).unwrap();
        let out = implicit_step(&s, &u).unwrap();
        assert_eq!(out.iterations, 2);
        assert!(out.residual > 0.0);
        assert_eq!(out.residual_history.len(), 3);
    }
}
