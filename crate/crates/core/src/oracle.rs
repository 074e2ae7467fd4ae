//! Independent reference routes used by the verification suites: dense
//! stencil assembly straight from the boundary rules, dense eigenvalue and
//! linear-solve helpers, a damped Newton solver for the implicit equation,
//! the discrete heat semigroup, and a dense mirror of the two-grid cycle.
//!
//! Everything here goes through explicit `nalgebra` matrices rather than the
//! matrix-free code paths it is used to check.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::flux::FluxFunction;

/// Assemble the stacked stencil matrix directly from the finite-difference
/// definitions (forward differences on cell midpoints, mirrored second
/// differences), without going through the matrix-free operator.
pub fn dense_stencil_matrix(weights: &[(usize, f64)], h: f64, n: usize) -> DMatrix<f64> {
    // Aggregate duplicate orders and sort, mirroring the operator builder's
    // codomain layout.
    let mut parts: Vec<(usize, f64)> = Vec::new();
    for &(order, weight) in weights {
        match parts.iter_mut().find(|(m, _)| *m == order) {
            Some((_, w)) => *w += weight,
            None => parts.push((order, weight)),
        }
    }
    parts.sort_by_key(|&(m, _)| m);

    let mut blocks: Vec<DMatrix<f64>> = Vec::new();
    for (order, alpha) in parts {
        let block = match order {
            0 => DMatrix::identity(n, n) * alpha,
            1 => {
                let s = alpha / h;
                let mut m = DMatrix::zeros(n - 1, n);
                for i in 0..n - 1 {
                    m[(i, i)] = -s;
                    m[(i, i + 1)] = s;
                }
                m
            }
            2 => {
                let s = alpha / (h * h);
                let mut m = DMatrix::zeros(n, n);
                for i in 0..n {
                    for (j, w) in [(i as isize - 1, s), (i as isize, -2.0 * s), (i as isize + 1, s)] {
                        // Mirror extension folds the ghost weight back onto
                        // the boundary sample.
                        let j = j.clamp(0, n as isize - 1) as usize;
                        m[(i, j)] += w;
                    }
                }
                m
            }
            _ => panic!("dense assembly supports orders 0..=2"),
        };
        blocks.push(block);
    }
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut k = DMatrix::zeros(rows, n);
    let mut offset = 0;
    for b in blocks {
        k.view_mut((offset, 0), (b.nrows(), n)).copy_from(&b);
        offset += b.nrows();
    }
    k
}

/// `KᵀK` assembled densely.
pub fn dense_gram(weights: &[(usize, f64)], h: f64, n: usize) -> DMatrix<f64> {
    let k = dense_stencil_matrix(weights, h, n);
    k.transpose() * &k
}

/// Dense matrix-vector product on plain slices.
pub fn dense_apply(m: &DMatrix<f64>, u: &[f64]) -> Vec<f64> {
    (m * DVector::from_column_slice(u)).iter().copied().collect()
}

/// Largest eigenvalue of a symmetric matrix.
pub fn max_eigenvalue_sym(a: &DMatrix<f64>) -> f64 {
    a.clone().symmetric_eigen().eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Largest eigenvalue of a symmetric matrix together with its eigenvector.
pub fn max_eigenpair_sym(a: &DMatrix<f64>) -> (f64, Vec<f64>) {
    let eig = a.clone().symmetric_eigen();
    let mut best = 0;
    for i in 1..eig.eigenvalues.len() {
        if eig.eigenvalues[i] > eig.eigenvalues[best] {
            best = i;
        }
    }
    (eig.eigenvalues[best], eig.eigenvectors.column(best).iter().copied().collect())
}

/// Solve a dense linear system by LU with partial pivoting.
pub fn solve_dense(a: &DMatrix<f64>, b: &[f64]) -> Result<Vec<f64>> {
    let lu = a.clone().lu();
    match lu.solve(&DVector::from_column_slice(b)) {
        Some(x) => Ok(x.iter().copied().collect()),
        None => Err(Error::Singular("dense LU solve failed".into())),
    }
}

/// `exp(−t·A) u0` for symmetric positive semidefinite `A`, via the
/// eigendecomposition. Reference solution of the linear semi-discrete flow.
pub fn heat_semigroup(a: &DMatrix<f64>, t: f64, u0: &[f64]) -> Vec<f64> {
    let eig = a.clone().symmetric_eigen();
    let coeffs = eig.eigenvectors.transpose() * DVector::from_column_slice(u0);
    let damped = DVector::from_iterator(
        coeffs.len(),
        coeffs.iter().zip(eig.eigenvalues.iter()).map(|(c, lam)| c * (-t * lam).exp()),
    );
    (&eig.eigenvectors * damped).iter().copied().collect()
}

/// Solve the implicit equation `v + τ Kᵀ Φ(K v) = u` by damped Newton on the
/// dense matrix `k`. Independent of the fixed-point production path.
pub fn newton_implicit_solution(
    k: &DMatrix<f64>,
    flux: &FluxFunction,
    tau: f64,
    u: &[f64],
    tol: f64,
) -> Result<Vec<f64>> {
    let n = k.ncols();
    let u = DVector::from_column_slice(u);
    let mut v = u.clone();
    let residual = |v: &DVector<f64>| -> DVector<f64> {
        let kv = k * v;
        let phi = DVector::from_iterator(kv.len(), kv.iter().map(|&s| flux.flux(s)));
        v + k.transpose() * phi * tau - &u
    };
    let mut f = residual(&v);
    for _ in 0..200 {
        let fnorm = f.norm();
        if fnorm <= tol {
            return Ok(v.iter().copied().collect());
        }
        let kv = k * &v;
        let gprime = DMatrix::from_diagonal(&DVector::from_iterator(
            kv.len(),
            kv.iter().map(|&s| flux.flux_derivative(s)),
        ));
        let jac = DMatrix::identity(n, n) + k.transpose() * gprime * k * tau;
        let delta = jac
            .lu()
            .solve(&(-&f))
            .ok_or_else(|| Error::Singular("Newton Jacobian is singular".into()))?;
        let mut t = 1.0;
        loop {
            let trial = &v + &delta * t;
            let ftrial = residual(&trial);
            if ftrial.norm() <= (1.0 - 0.5 * t) * fnorm || t < 1e-10 {
                v = trial;
                f = ftrial;
                break;
            }
            t *= 0.5;
        }
    }
    Err(Error::Convergence(format!("Newton did not reach tolerance {tol:e}")))
}

/// Settings for the dense two-grid mirror.
pub struct DenseTwoGridSettings {
    pub pre_smooth: usize,
    pub post_smooth: usize,
    pub omega: f64,
}

/// Dense full-weighting restriction `R = ½Pᵀ` for `n = 2·nc − 1`.
pub fn dense_restriction(nc: usize) -> DMatrix<f64> {
    dense_prolongation(nc).transpose() * 0.5
}

/// Dense linear-interpolation prolongation mapping `nc` to `2·nc − 1` nodes.
pub fn dense_prolongation(nc: usize) -> DMatrix<f64> {
    let n = 2 * nc - 1;
    let mut p = DMatrix::zeros(n, nc);
    for j in 0..nc {
        p[(2 * j, j)] = 1.0;
        if j + 1 < nc {
            p[(2 * j + 1, j)] = 0.5;
            p[(2 * j + 1, j + 1)] = 0.5;
        }
    }
    p
}

/// Run one dense two-grid cycle for `A = I + τ·KᵀK` from `x0 = 0` and
/// return the residual-norm reduction factor `‖b − A x₁‖ / ‖b‖`.
pub fn dense_two_grid_factor(
    weights: &[(usize, f64)],
    h: f64,
    n: usize,
    tau: f64,
    settings: &DenseTwoGridSettings,
    b: &[f64],
) -> f64 {
    assert!(n >= 3 && n % 2 == 1, "grid must satisfy n = 2·nc − 1");
    let nc = (n + 1) / 2;
    let a = DMatrix::identity(n, n) + dense_gram(weights, h, n) * tau;
    let ac = DMatrix::identity(nc, nc) + dense_gram(weights, 2.0 * h, nc) * tau;
    let r = dense_restriction(nc);
    let p = dense_prolongation(nc);
    let b = DVector::from_column_slice(b);

    let jacobi = |x: &DVector<f64>, sweeps: usize| -> DVector<f64> {
        let mut x = x.clone();
        for _ in 0..sweeps {
            let res = &b - &a * &x;
            for i in 0..n {
                x[i] += settings.omega * res[i] / a[(i, i)];
            }
        }
        x
    };

    let x = jacobi(&DVector::zeros(n), settings.pre_smooth);
    let resid = &b - &a * &x;
    let bh = &r * resid;
    let xh = ac.lu().solve(&bh).expect("coarse system is SPD");
    let x = x + &p * xh;
    let x = jacobi(&x, settings.post_smooth);
    (&b - &a * &x).norm() / b.norm()
}
