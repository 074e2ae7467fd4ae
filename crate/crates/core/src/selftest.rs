//! Built-in verification suites.
//!
//! Each suite checks one contract of the library at a pinned tolerance,
//! against independent dense reference routes where the contract calls for
//! one. The suites are deterministic (fixed seeds, no timing, no
//! environment input), so repeated runs render byte-identical reports.
//! They back both the `selftest` CLI subcommand and the acceptance test
//! target.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dense::DenseOp;
use crate::explicit::{
    diffusion_block, diffusion_step, residual_block_form, run_chain, stable_tau, BlockParams,
};
use crate::flux::FluxFunction;
use crate::fsi::{fsi_cycle, fsi_weights, super_time, FsiCycle};
use crate::implicit::{contraction_margin_with, implicit_step, ImplicitStep};
use crate::multigrid::{
    smoother, solve, two_grid_cycle, unet_form_cycle, CycleConfig, ImplicitDiffusionOperator,
    LinearProblem,
};
use crate::operators::{build_operator, spectral_norm_sq, LinearOperator, StencilOp};
use crate::oracle;
use crate::signal::{l2_norm_slice, Signal};

/// Result of one verification suite.
#[derive(Debug, Clone)]
pub struct CriterionOutcome {
    pub id: usize,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CriterionOutcome {
    fn pass(id: usize, name: &'static str, detail: String) -> Self {
        CriterionOutcome { id, name, passed: true, detail }
    }

    fn fail(id: usize, name: &'static str, detail: String) -> Self {
        CriterionOutcome { id, name, passed: false, detail }
    }

    /// One human-readable pass/fail line.
    pub fn render(&self) -> String {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        format!("[{tag}] {} {}: {}", self.id, self.name, self.detail)
    }
}

/// Run all suites in order.
pub fn run_all() -> Vec<CriterionOutcome> {
    vec![
        residual_block_equivalence(),
        euclidean_stability(),
        adjoint_and_spectral(),
        nonmonotone_flux(),
        fsi_acceleration(),
        implicit_fixed_point(),
        multigrid_unet(),
        conservation_and_energy(),
    ]
}

/// Render a full report, one line per suite.
pub fn render(outcomes: &[CriterionOutcome]) -> String {
    let mut out = String::new();
    for o in outcomes {
        out.push_str(&o.render());
        out.push('\n');
    }
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    if failed == 0 {
        out.push_str(&format!("all {} suites passed\n", outcomes.len()));
    } else {
        out.push_str(&format!("{failed} of {} suites FAILED\n", outcomes.len()));
    }
    out
}

// ── sampling helpers ────────────────────────────────────────────────────

fn sample_stencil(rng: &mut ChaCha8Rng, max_n: usize) -> StencilOp {
    let n = rng.random_range(2..=max_n);
    let h = rng.random_range(0.5..2.0);
    let mut weights: Vec<(usize, f64)> = Vec::new();
    for m in 0..=2usize {
        if rng.random_range(0.0..1.0) < 0.5 {
            weights.push((m, rng.random_range(-2.0..2.0)));
        }
    }
    if weights.is_empty() || weights.iter().all(|&(_, a)| a.abs() < 0.1) {
        weights.push((1, rng.random_range(0.5..2.0)));
    }
    build_operator(&weights, h, n).expect("sampled operator is valid")
}

fn sample_flux(rng: &mut ChaCha8Rng) -> FluxFunction {
    match rng.random_range(0..3) {
        0 => FluxFunction::linear(),
        1 => FluxFunction::perona_malik_exp(rng.random_range(0.3..3.0)).unwrap(),
        _ => FluxFunction::charbonnier(rng.random_range(0.3..3.0)).unwrap(),
    }
}

fn sample_values(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn sample_dense(rng: &mut ChaCha8Rng, max_n: usize) -> DenseOp {
    let cols = rng.random_range(2..=max_n);
    let rows = rng.random_range(1..=2 * cols);
    let data: Vec<f64> = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
    DenseOp::new(rows, cols, data).expect("sampled matrix is valid")
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

// ── suite 1 ─────────────────────────────────────────────────────────────

/// The literal residual-block composition (inner activation τΦ, transposed
/// second convolution, zero biases) equals the explicit step, to 1e-14 per
/// sample, over 500 randomized (operator, flux, signal) triples.
pub fn residual_block_equivalence() -> CriterionOutcome {
    const ID: usize = 1;
    const NAME: &str = "residual-block equivalence";
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    for trial in 0..500 {
        let op = sample_stencil(&mut rng, 65);
        let flux = sample_flux(&mut rng);
        let tau = match stable_tau(&op, &flux) {
            Ok(t) => t * rng.random_range(0.1..1.0),
            Err(e) => return CriterionOutcome::fail(ID, NAME, format!("trial {trial}: {e}")),
        };
        let n = op.domain_len();
        let u = Signal::from_raw(sample_values(&mut rng, n), op.h());
        let p = BlockParams::new(op, flux, tau).unwrap();
        let step = diffusion_block(&p, &u).unwrap();
        let block = residual_block_form(&p, &u).unwrap();
        let diff = max_abs_diff(step.values(), block.values());
        worst = worst.max(diff);
        if diff > 1e-14 {
            return CriterionOutcome::fail(
                ID,
                NAME,
                format!("trial {trial}: per-sample difference {diff:.3e} exceeds 1e-14"),
            );
        }
    }
    CriterionOutcome::pass(ID, NAME, format!("500 triples, max per-sample difference {worst:.3e} ≤ 1e-14"))
}

// ── suite 2 ─────────────────────────────────────────────────────────────

/// With τ at the stability bound the Euclidean norm is nonincreasing for
/// 200 steps, over 1000 randomized trials (stencil and random dense
/// operators, all flux kinds). Converse: at 2× the bound the worst-case
/// eigenvector grows at the dense-oracle rate (τλ−1) per step.
pub fn euclidean_stability() -> CriterionOutcome {
    const ID: usize = 2;
    const NAME: &str = "Euclidean stability";
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst_ratio = 0.0f64;

    for trial in 0..1000 {
        let stencil;
        let dense;
        let op: &dyn LinearOperator = if trial % 2 == 0 {
            stencil = sample_stencil(&mut rng, 257);
            &stencil
        } else {
            dense = sample_dense(&mut rng, 64);
            &dense
        };
        let flux = sample_flux(&mut rng);
        let tau = match stable_tau(op, &flux) {
            Ok(t) => t,
            Err(e) => return CriterionOutcome::fail(ID, NAME, format!("trial {trial}: {e}")),
        };
        let mut u = sample_values(&mut rng, op.domain_len());
        let mut norm = l2_norm_slice(&u);
        for step in 0..200 {
            u = diffusion_step(op, &flux, tau, &u);
            let next = l2_norm_slice(&u);
            if !next.is_finite() || next > norm * (1.0 + 1e-12) {
                return CriterionOutcome::fail(
                    ID,
                    NAME,
                    format!("trial {trial} step {step}: norm grew from {norm:.6e} to {next:.6e}"),
                );
            }
            if norm > 0.0 {
                worst_ratio = worst_ratio.max(next / norm);
            }
            norm = next;
        }
    }

    // Converse probe at 2× the bound, along the top eigenvector of KᵀK.
    let n = 64;
    let op = build_operator(&[(1, 1.0)], 1.0, n).unwrap();
    let flux = FluxFunction::linear();
    let tau = 2.0 * stable_tau(&op, &flux).unwrap();
    let (lambda, eigvec) = oracle::max_eigenpair_sym(&oracle::dense_gram(&[(1, 1.0)], 1.0, n));
    let steps = 12;
    let mut u = eigvec.clone();
    for _ in 0..steps {
        u = diffusion_step(&op, &flux, tau, &u);
    }
    let growth = l2_norm_slice(&u) / l2_norm_slice(&eigvec);
    let predicted = (tau * lambda - 1.0).powi(steps as i32);
    let mismatch = (growth - predicted).abs() / predicted;
    if growth <= 10.0 {
        return CriterionOutcome::fail(ID, NAME, format!("converse probe grew only {growth:.3e}"));
    }
    if mismatch > 0.05 {
        return CriterionOutcome::fail(
            ID,
            NAME,
            format!("converse growth {growth:.6e} vs predicted {predicted:.6e} ({mismatch:.2e} rel)"),
        );
    }
    CriterionOutcome::pass(
        ID,
        NAME,
        format!(
            "1000 trials × 200 steps nonincreasing (worst step ratio {worst_ratio:.12}); converse growth matches oracle to {mismatch:.2e}"
        ),
    )
}

// ── suite 3 ─────────────────────────────────────────────────────────────

/// Adjoint identity to 1e-12 relative over 1000 random triples; power
/// iteration matches the dense eigenvalue oracle within its tolerance for
/// n ≤ 64; the n = 4 forward-difference value 4sin²(3π/8) is reproduced.
pub fn adjoint_and_spectral() -> CriterionOutcome {
    const ID: usize = 3;
    const NAME: &str = "adjoint and spectral machinery";
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst_rel = 0.0f64;
    for trial in 0..1000 {
        let op = sample_stencil(&mut rng, 257);
        let u = sample_values(&mut rng, op.domain_len());
        let v = sample_values(&mut rng, op.codomain_len());
        let ku = op.apply_slice(&u);
        let ktv = op.apply_adjoint_slice(&v);
        let lhs: f64 = ku.iter().zip(&v).map(|(a, b)| a * b).sum();
        let rhs: f64 = u.iter().zip(&ktv).map(|(a, b)| a * b).sum();
        let scale = l2_norm_slice(&u) * l2_norm_slice(&v);
        let rel = (lhs - rhs).abs() / scale.max(1e-300);
        worst_rel = worst_rel.max(rel);
        if rel > 1e-12 {
            return CriterionOutcome::fail(
                ID,
                NAME,
                format!("trial {trial}: adjoint identity off by {rel:.3e} relative"),
            );
        }
    }

    let tol = 1e-10;
    let mut worst_eig = 0.0f64;
    for n in [3usize, 4, 8, 16, 33, 64] {
        for weights in [vec![(1usize, 1.0)], vec![(2, 1.0)], vec![(0, 0.4), (1, -1.1), (2, 0.6)]] {
            let op = build_operator(&weights, 1.0, n).unwrap();
            let est = match spectral_norm_sq(&op, tol) {
                Ok(v) => v,
                Err(e) => return CriterionOutcome::fail(ID, NAME, format!("n={n}: {e}")),
            };
            let exact = oracle::max_eigenvalue_sym(&oracle::dense_gram(&weights, 1.0, n));
            let rel = (est - exact).abs() / exact;
            worst_eig = worst_eig.max(rel);
            if rel > tol {
                return CriterionOutcome::fail(
                    ID,
                    NAME,
                    format!("n={n} weights {weights:?}: estimate {est:.12e} vs oracle {exact:.12e}"),
                );
            }
        }
    }

    let op = build_operator(&[(1, 1.0)], 1.0, 4).unwrap();
    let est = spectral_norm_sq(&op, 1e-12).unwrap();
    let closed_form = 4.0 * (3.0 * std::f64::consts::PI / 8.0).sin().powi(2);
    if (est - closed_form).abs() > 1e-11 * closed_form {
        return CriterionOutcome::fail(
            ID,
            NAME,
            format!("n=4 forward difference: {est:.15} vs 4sin²(3π/8) = {closed_form:.15}"),
        );
    }
    CriterionOutcome::pass(
        ID,
        NAME,
        format!(
            "adjoint ≤ {worst_rel:.2e} rel over 1000 triples; eigen-oracle gap ≤ {worst_eig:.2e} (tol {tol:.0e}); 4sin²(3π/8) reproduced"
        ),
    )
}

// ── suite 4 ─────────────────────────────────────────────────────────────

/// The exponential flux has extrema at ±λ, is exactly antisymmetric, and
/// its sampled Lipschitz constant is 1 within 1e-6.
pub fn nonmonotone_flux() -> CriterionOutcome {
    const ID: usize = 4;
    const NAME: &str = "nonmonotone activation";
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    for &lambda in &[0.5, 1.0, 2.0] {
        let f = FluxFunction::perona_malik_exp(lambda).unwrap();

        // Sampled argmax of the flux sits at the contrast parameter.
        let steps = 4000;
        let grid = lambda / 1000.0;
        let mut best_s = 0.0;
        let mut best = f64::MIN;
        for i in 0..=steps {
            let s = i as f64 * grid;
            let value = f.flux(s);
            if value > best {
                best = value;
                best_s = s;
            }
        }
        if (best_s - lambda).abs() > 2.0 * grid {
            return CriterionOutcome::fail(
                ID,
                NAME,
                format!("λ={lambda}: flux argmax {best_s} not at λ (grid {grid})"),
            );
        }

        // Antisymmetry is exact in floating point.
        for _ in 0..1000 {
            let s = rng.random_range(-50.0 * lambda..50.0 * lambda);
            if f.flux(-s) != -f.flux(s) {
                return CriterionOutcome::fail(ID, NAME, format!("antisymmetry broken at s={s}"));
            }
        }

        // Sampled derivative bound.
        let mut max_slope = 0.0f64;
        let samples = 200_000;
        let width = 10.0 * lambda;
        let delta = 1e-5 * lambda;
        for i in 0..=samples {
            let s = -width + 2.0 * width * i as f64 / samples as f64;
            let slope = ((f.flux(s + delta) - f.flux(s - delta)) / (2.0 * delta)).abs();
            max_slope = max_slope.max(slope);
        }
        if (max_slope - 1.0).abs() > 1e-6 {
            return CriterionOutcome::fail(
                ID,
                NAME,
                format!("λ={lambda}: sampled Lipschitz constant {max_slope} differs from 1"),
            );
        }
    }
    CriterionOutcome::pass(
        ID,
        NAME,
        "extrema at ±λ, exact antisymmetry, sampled Lipschitz constant 1 ± 1e-6 for λ ∈ {0.5, 1, 2}".into(),
    )
}

// ── suite 5 ─────────────────────────────────────────────────────────────

/// FSI weights and super-step formula are exact; a length-4 cycle stays
/// within 5% of a fine-step explicit reference at the super time; one
/// length-8 cycle gets closer to the steady state than 8 plain steps.
pub fn fsi_acceleration() -> CriterionOutcome {
    const ID: usize = 5;
    const NAME: &str = "FSI acceleration";
    let w = fsi_weights(3).unwrap();
    if w != vec![2.0 / 3.0, 6.0 / 5.0, 10.0 / 7.0] {
        return CriterionOutcome::fail(ID, NAME, format!("weights for L=3 are {w:?}"));
    }
    for (l, tau, expected) in [(1usize, 0.3, 0.2), (3, 0.3, 1.2), (10, 1.0, 110.0 / 3.0)] {
        let st = super_time(l, tau);
        if (st - expected).abs() > 4.0 * f64::EPSILON * expected {
            return CriterionOutcome::fail(ID, NAME, format!("super_time({l}, {tau}) = {st}"));
        }
    }

    // Accuracy against a fine-step explicit reference at the super time.
    let n = 65;
    let op = build_operator(&[(1, 1.0)], 1.0, n).unwrap();
    let flux = FluxFunction::linear();
    let tau = stable_tau(&op, &flux).unwrap();
    let cycle = FsiCycle::new(BlockParams::new(op.clone(), flux, tau).unwrap(), 4).unwrap();
    let u0 = Signal::new(
        (0..n).map(|i| (std::f64::consts::PI * i as f64 / (n - 1) as f64).sin()).collect(),
        1.0,
    )
    .unwrap();
    let accel = fsi_cycle(&cycle, &u0).unwrap();
    let fine_steps = 800;
    let tau_ref = cycle.super_time() / fine_steps as f64;
    let mut reference = u0.values().to_vec();
    for _ in 0..fine_steps {
        reference = diffusion_step(&op, &FluxFunction::linear(), tau_ref, &reference);
    }
    let err = accel
        .values()
        .iter()
        .zip(&reference)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
        / l2_norm_slice(&reference);
    if err > 0.05 {
        return CriterionOutcome::fail(ID, NAME, format!("L=4 cycle off reference by {err:.3e} relative"));
    }

    // One length-8 cycle vs 8 plain explicit steps, distance to the
    // constant steady state.
    let n = 129;
    let op = build_operator(&[(1, 1.0)], 1.0, n).unwrap();
    let tau = stable_tau(&op, &FluxFunction::linear()).unwrap();
    let base = BlockParams::new(op.clone(), FluxFunction::linear(), tau).unwrap();
    let cycle = FsiCycle::new(base, 8).unwrap();
    let u0 = Signal::new((0..n).map(|i| if i < n / 2 { 0.0 } else { 1.0 }).collect(), 1.0).unwrap();
    let target = u0.values().iter().sum::<f64>() / n as f64;
    let dist =
        |v: &[f64]| v.iter().map(|x| (x - target) * (x - target)).sum::<f64>().sqrt();
    let accel = fsi_cycle(&cycle, &u0).unwrap();
    let mut plain = u0.values().to_vec();
    for _ in 0..8 {
        plain = diffusion_step(&op, &FluxFunction::linear(), tau, &plain);
    }
    let ratio = dist(accel.values()) / dist(&plain);
    if ratio >= 1.0 {
        return CriterionOutcome::fail(ID, NAME, format!("L=8 cycle ratio {ratio:.4} not < 1"));
    }
    CriterionOutcome::pass(
        ID,
        NAME,
        format!("weights and super step exact; L=4 reference error {err:.3e} ≤ 5e-2; L=8 distance ratio {ratio:.4}"),
    )
}

// ── suite 6 ─────────────────────────────────────────────────────────────

/// Fixed-point solves of the implicit step: one iteration reproduces the
/// explicit block; converged solutions match dense and Newton oracles;
/// residuals decay at the contraction rate; the implicit equation keeps
/// norms nonincreasing at 10× the explicit bound.
pub fn implicit_fixed_point() -> CriterionOutcome {
    const ID: usize = 6;
    const NAME: &str = "implicit fixed point";
    let mut rng = ChaCha8Rng::seed_from_u64(606);

    // One inner iteration ≡ explicit block.
    let op = build_operator(&[(1, 1.0)], 1.0, 17).unwrap();
    let flux = FluxFunction::perona_malik_exp(1.0).unwrap();
    let tau = stable_tau(&op, &flux).unwrap();
    let p = BlockParams::new(op, flux, tau).unwrap();
    let u = Signal::from_raw(sample_values(&mut rng, 17), 1.0);
    let s = ImplicitStep::new(p.clone(), 1, 1e-300).unwrap();
    let once = implicit_step(&s, &u).unwrap();
    let explicit = diffusion_block(&p, &u).unwrap();
    let l1_diff = max_abs_diff(once.signal.values(), explicit.values());
    if l1_diff > 1e-14 {
        return CriterionOutcome::fail(ID, NAME, format!("L=1 differs from explicit by {l1_diff:.3e}"));
    }

    // Linear flux: converged fixed point vs dense solve of (I+τKᵀK)v = u.
    for n in [16usize, 64] {
        let op = build_operator(&[(1, 1.0)], 1.0, n).unwrap();
        let lambda = spectral_norm_sq(&op, 1e-10).unwrap();
        let tau = 0.8 / lambda;
        let p = BlockParams::new(op, FluxFunction::linear(), tau).unwrap();
        let s = ImplicitStep::new(p, 800, 1e-13).unwrap();
        let u = Signal::from_raw(sample_values(&mut rng, n), 1.0);
        let out = implicit_step(&s, &u).unwrap();
        let a = nalgebra::DMatrix::identity(n, n) + oracle::dense_gram(&[(1, 1.0)], 1.0, n) * tau;
        let direct = oracle::solve_dense(&a, u.values()).unwrap();
        let err = out
            .signal
            .values()
            .iter()
            .zip(&direct)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
            / l2_norm_slice(u.values());
        if err > 1e-10 {
            return CriterionOutcome::fail(ID, NAME, format!("n={n}: dense-solve mismatch {err:.3e}"));
        }
    }

    // Exponential flux: converged fixed point vs damped Newton.
    for n in [12usize, 32] {
        let op = build_operator(&[(1, 1.0)], 1.0, n).unwrap();
        let flux = FluxFunction::perona_malik_exp(0.8).unwrap();
        let tau = 0.2;
        let p = BlockParams::new(op, flux, tau).unwrap();
        let s = ImplicitStep::new(p, 900, 1e-13).unwrap();
        let u = Signal::from_raw((0..n).map(|i| if i < n / 2 { 0.0 } else { 1.0 }).collect(), 1.0);
        let out = match implicit_step(&s, &u) {
            Ok(o) => o,
            Err(e) => return CriterionOutcome::fail(ID, NAME, format!("n={n}: {e}")),
        };
        let k = oracle::dense_stencil_matrix(&[(1, 1.0)], 1.0, n);
        let newton = match oracle::newton_implicit_solution(&k, &flux, tau, u.values(), 1e-13) {
            Ok(v) => v,
            Err(e) => return CriterionOutcome::fail(ID, NAME, format!("Newton oracle n={n}: {e}")),
        };
        let err = out
            .signal
            .values()
            .iter()
            .zip(&newton)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
            / l2_norm_slice(u.values());
        if err > 1e-8 {
            return CriterionOutcome::fail(ID, NAME, format!("n={n}: Newton mismatch {err:.3e}"));
        }
    }

    // Geometric residual decay at the contraction rate.
    let n = 48;
    let op = build_operator(&[(1, 1.0)], 1.0, n).unwrap();
    let lambda = spectral_norm_sq(&op, 1e-10).unwrap();
    let tau = 0.9 / lambda;
    let margin = contraction_margin_with(&op, 1.0, tau, 1e-10).unwrap();
    let p = BlockParams::new(op, FluxFunction::linear(), tau).unwrap();
    let s = ImplicitStep::new(p, 100, 1e-14).unwrap();
    let u = Signal::from_raw(sample_values(&mut rng, n), 1.0);
    let out = implicit_step(&s, &u).unwrap();
    for w in out.residual_history.windows(2) {
        if w[0] > 0.0 && w[1] > margin * w[0] * (1.0 + 1e-8) {
            return CriterionOutcome::fail(
                ID,
                NAME,
                format!("residual decay {} → {} exceeds margin {margin:.6}", w[0], w[1]),
            );
        }
    }

    // Norm of the implicit solution at 10× the explicit bound (computed by
    // the dense route; the fixed-point map does not contract there).
    let n = 32;
    let op = build_operator(&[(1, 1.0)], 1.0, n).unwrap();
    let tau = 10.0 * stable_tau(&op, &FluxFunction::linear()).unwrap();
    let a = nalgebra::DMatrix::identity(n, n) + oracle::dense_gram(&[(1, 1.0)], 1.0, n) * tau;
    for _ in 0..20 {
        let u = sample_values(&mut rng, n);
        let v = oracle::solve_dense(&a, &u).unwrap();
        if l2_norm_slice(&v) > l2_norm_slice(&u) {
            return CriterionOutcome::fail(ID, NAME, "implicit solve grew the norm at 10× bound".into());
        }
    }

    CriterionOutcome::pass(
        ID,
        NAME,
        format!(
            "L=1 ≡ explicit (Δ {l1_diff:.1e}); dense solve ≤ 1e-10; Newton ≤ 1e-8; decay rate ≤ margin {margin:.4}; norm nonincreasing at 10× bound"
        ),
    )
}

// ── suite 7 ─────────────────────────────────────────────────────────────

fn measured_cycle_factor(n: usize, tau: f64, cfg: &CycleConfig) -> crate::error::Result<f64> {
    let a = ImplicitDiffusionOperator::new(&[(1, 1.0)], 1.0, n, tau)?;
    let mut rng = ChaCha8Rng::seed_from_u64(707 + n as u64);
    let b = Signal::from_raw((0..n).map(|_| rng.random_range(-1.0..1.0)).collect(), 1.0);
    let p = LinearProblem::new(a, b)?;
    let (_, trace) = solve(&p, cfg, 8, 0.0)?;
    // Geometric mean over the later cycles, past the initial transient.
    let factors: Vec<f64> = trace[3..].iter().map(|r| r.reduction_factor).collect();
    Ok(factors.iter().product::<f64>().powf(1.0 / factors.len() as f64))
}

/// The U-net routing of the two-grid cycle is bit-equal to the classic
/// form; cycle factors contract uniformly across grid sizes, beat plain
/// Jacobi by ≥ 5×, and match the dense two-grid oracle.
pub fn multigrid_unet() -> CriterionOutcome {
    const ID: usize = 7;
    const NAME: &str = "multigrid U-net";
    let mut rng = ChaCha8Rng::seed_from_u64(708);
    let cfg = CycleConfig::default();
    let tau = 10.0;

    // Channel-routed form ≡ classic form over 100 random problems.
    let mut worst_eq = 0.0f64;
    for trial in 0..100 {
        let n = *[17usize, 33, 65].iter().nth(trial % 3).unwrap();
        let a = ImplicitDiffusionOperator::new(&[(1, 1.0)], 1.0, n, tau).unwrap();
        let b = Signal::from_raw(sample_values(&mut rng, n), 1.0);
        let p = LinearProblem::new(a, b).unwrap();
        let x0 = Signal::zeros(n, 1.0);
        let classic = two_grid_cycle(&p, &x0, &cfg).unwrap();
        let unet = unet_form_cycle(&p, &x0, &cfg).unwrap();
        let diff = max_abs_diff(classic.x.values(), unet.x.values())
            .max(max_abs_diff(classic.r.values(), unet.r.values()));
        worst_eq = worst_eq.max(diff);
        if diff > 1e-14 {
            return CriterionOutcome::fail(ID, NAME, format!("trial {trial}: forms differ by {diff:.3e}"));
        }
    }

    // Per-cycle contraction across grid sizes.
    let sizes = [33usize, 65, 129, 257];
    let mut factors = Vec::new();
    for &n in &sizes {
        match measured_cycle_factor(n, tau, &cfg) {
            Ok(f) => factors.push(f),
            Err(e) => return CriterionOutcome::fail(ID, NAME, format!("n={n}: {e}")),
        }
    }
    if factors.iter().any(|&f| f >= 1.0) {
        return CriterionOutcome::fail(ID, NAME, format!("cycle factors {factors:?} not all < 1"));
    }
    let fmax = factors.iter().copied().fold(f64::MIN, f64::max);
    let fmin = factors.iter().copied().fold(f64::MAX, f64::min);
    let spread = (fmax - fmin) / fmax;
    if spread > 0.20 {
        return CriterionOutcome::fail(
            ID,
            NAME,
            format!("cycle factors {factors:?} spread {spread:.3} exceeds 0.20"),
        );
    }

    // Jacobi comparison at n = 129: one comparison unit is ν₁+ν₂ sweeps.
    let n = 129;
    let a = ImplicitDiffusionOperator::new(&[(1, 1.0)], 1.0, n, tau).unwrap();
    let mut rng_j = ChaCha8Rng::seed_from_u64(707 + n as u64);
    let b = Signal::from_raw((0..n).map(|_| rng_j.random_range(-1.0..1.0)).collect(), 1.0);
    let sweeps = cfg.pre_smooth + cfg.post_smooth;
    let mut x = Signal::zeros(n, 1.0);
    let mut residuals = vec![l2_norm_slice(b.values())];
    for _ in 0..8 {
        let state = smoother(&a, &b, &x, sweeps, cfg.omega).unwrap();
        residuals.push(crate::signal::l2_norm(&state.r));
        x = state.x;
    }
    let jac_factors: Vec<f64> =
        residuals.windows(2).skip(2).map(|w| w[1] / w[0]).collect();
    let rho_jacobi =
        jac_factors.iter().product::<f64>().powf(1.0 / jac_factors.len() as f64);
    let rho_mg = factors[2]; // n = 129
    let gain = rho_jacobi / rho_mg;
    if gain < 5.0 {
        return CriterionOutcome::fail(
            ID,
            NAME,
            format!("multigrid {rho_mg:.4} vs Jacobi {rho_jacobi:.4}: gain {gain:.2} < 5"),
        );
    }

    // Dense two-grid oracle at n = 33.
    let n = 33;
    let a = ImplicitDiffusionOperator::new(&[(1, 1.0)], 1.0, n, tau).unwrap();
    let b = Signal::from_raw(sample_values(&mut rng, n), 1.0);
    let p = LinearProblem::new(a, b.clone()).unwrap();
    let state = two_grid_cycle(&p, &Signal::zeros(n, 1.0), &cfg).unwrap();
    let measured = crate::signal::l2_norm(&state.r) / l2_norm_slice(b.values());
    let settings = oracle::DenseTwoGridSettings {
        pre_smooth: cfg.pre_smooth,
        post_smooth: cfg.post_smooth,
        omega: cfg.omega,
    };
    let dense = oracle::dense_two_grid_factor(&[(1, 1.0)], 1.0, n, tau, &settings, b.values());
    if (measured - dense).abs() > 1e-10 {
        return CriterionOutcome::fail(
            ID,
            NAME,
            format!("two-grid factor {measured:.12e} vs dense oracle {dense:.12e}"),
        );
    }

    CriterionOutcome::pass(
        ID,
        NAME,
        format!(
            "forms equal to {worst_eq:.1e}; factors {factors:?} (spread {spread:.3}); {gain:.1}× over Jacobi; dense-oracle gap ≤ 1e-10"
        ),
    )
}

// ── suite 8 ─────────────────────────────────────────────────────────────

/// Derivative-only operators preserve the mean per step to 1e-12; energies
/// are nonincreasing at half the stable step for all flux kinds; the energy
/// integrand's derivative matches the diffusivity to 1e-6.
pub fn conservation_and_energy() -> CriterionOutcome {
    const ID: usize = 8;
    const NAME: &str = "conservation and energy";
    let mut rng = ChaCha8Rng::seed_from_u64(808);

    for weights in [vec![(1usize, 1.0)], vec![(2, 0.7)], vec![(1, 0.8), (2, 0.4)]] {
        let n = 65;
        let op = build_operator(&weights, 1.0, n).unwrap();
        let flux = FluxFunction::perona_malik_exp(1.0).unwrap();
        let tau = stable_tau(&op, &flux).unwrap();
        let p = BlockParams::new(op, flux, tau).unwrap();
        let u0 = Signal::from_raw(sample_values(&mut rng, n), 1.0);
        let (_, record) = match run_chain(&p, &u0, 100) {
            Ok(r) => r,
            Err(e) => return CriterionOutcome::fail(ID, NAME, format!("{weights:?}: {e}")),
        };
        let scale = record.rows()[0].mean.abs().max(1.0);
        for w in record.rows().windows(2) {
            if (w[1].mean - w[0].mean).abs() > 1e-12 * scale {
                return CriterionOutcome::fail(
                    ID,
                    NAME,
                    format!("{weights:?}: mean drifted {} → {}", w[0].mean, w[1].mean),
                );
            }
        }
    }

    for flux in [
        FluxFunction::linear(),
        FluxFunction::perona_malik_exp(0.7).unwrap(),
        FluxFunction::charbonnier(1.2).unwrap(),
    ] {
        let n = 65;
        let op = build_operator(&[(1, 1.0)], 1.0, n).unwrap();
        let tau = stable_tau(&op, &flux).unwrap() / 2.0;
        let p = BlockParams::new(op, flux, tau).unwrap();
        let u0 = Signal::from_raw(sample_values(&mut rng, n), 1.0);
        let (_, record) = run_chain(&p, &u0, 200).unwrap();
        for w in record.rows().windows(2) {
            if w[1].energy > w[0].energy * (1.0 + 1e-10) {
                return CriterionOutcome::fail(
                    ID,
                    NAME,
                    format!("{:?}: energy grew {} → {}", flux.kind(), w[0].energy, w[1].energy),
                );
            }
        }
    }

    // Centered finite difference of Ψ against g, down to the rounding
    // floor of the two Ψ evaluations.
    for f in [
        FluxFunction::linear(),
        FluxFunction::perona_malik_exp(1.3).unwrap(),
        FluxFunction::charbonnier(0.8).unwrap(),
    ] {
        let l2 = f.lambda() * f.lambda();
        for i in 1..=100 {
            let s2 = i as f64 * l2;
            let d = 1e-6 * s2;
            let fd = (f.penalizer(s2 + d) - f.penalizer(s2 - d)) / (2.0 * d);
            let g = f.diffusivity(s2);
            let floor = 8.0 * f64::EPSILON * f.penalizer(s2 + d) / (2.0 * d);
            if (fd - g).abs() > 1e-6 * g + floor {
                return CriterionOutcome::fail(
                    ID,
                    NAME,
                    format!("{:?}: Ψ′({s2}) = {fd} vs g = {g}", f.kind()),
                );
            }
        }
    }

    CriterionOutcome::pass(
        ID,
        NAME,
        "mean preserved to 1e-12/step for derivative-only operators; energy nonincreasing at τ*/2; Ψ′ = g to 1e-6".into(),
    )
}
