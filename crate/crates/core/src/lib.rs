//! 1D nonlinear diffusion numerics in neural-network block form.
//!
//! The library implements four solver families for the flow
//! `∂ₜu = −𝒟*(Φ(𝒟u))` on uniform 1D grids and exposes the network reading
//! of each:
//!
//! * [`explicit`] — one explicit step `u − τKᵀΦ(Ku)` is a residual block
//!   with activation `τΦ` and transposed convolution pair `(K, −Kᵀ)`;
//!   chains of blocks are norm-nonincreasing for `τ ≤ 2/(L‖K‖₂²)`.
//! * [`fsi`] — fast semi-iterative cycles extrapolate successive blocks
//!   through a second, weighted skip connection and cover a super step of
//!   size `L(L+1)/3·τ`.
//! * [`implicit`] — the fully implicit step solved by fixed-point
//!   iterations, whose feedback to the previous time level is a recurrent
//!   connection.
//! * [`multigrid`] — a linear V-cycle written both classically and as a
//!   three-channel U-net with channel-selector grid transfers.
//!
//! [`operators`] provides the stencil machinery with exact adjoints and
//! spectral-norm estimation, [`flux`] the diffusivity/flux/energy catalog,
//! [`signal`] grid signals and text I/O, and [`selftest`] deterministic
//! verification suites used by the CLI and the acceptance tests.

pub mod config;
pub mod dense;
pub mod error;
pub mod explicit;
pub mod flux;
pub mod fsi;
pub mod implicit;
pub mod multigrid;
pub mod operators;
pub mod oracle;
pub mod runner;
pub mod selftest;
pub mod signal;

pub use error::{Error, Result};
pub use explicit::{
    diffusion_block, residual_block_form, run_chain, stable_tau, BlockParams, TrajectoryRecord,
};
pub use flux::{energy, FluxFunction, FluxKind};
pub use fsi::{fsi_cycle, fsi_weights, super_time, FsiCycle};
pub use implicit::{implicit_step, ImplicitOutcome, ImplicitStep};
pub use multigrid::{
    prolong, restrict, smoother, two_grid_cycle, unet_form_cycle, v_cycle, CoarseSolver,
    CycleConfig, ImplicitDiffusionOperator, LinearProblem, UNetState,
};
pub use operators::{
    apply, apply_adjoint, build_operator, spectral_norm_sq, LinearOperator, StencilOp,
};
pub use signal::{l2_norm, mean, read_signal, write_signal, Signal};
