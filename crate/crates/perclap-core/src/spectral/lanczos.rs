//! Krylov iterations: shift-inverted Lanczos for the lowest eigenpairs and
//! plain Lanczos for diagonal heat-semigroup entries.
//!
//! Start vectors are fixed (constant vector, then a centered ramp, then
//! coordinate vectors), never random, so repeated runs agree bit for bit.
//! Every returned eigenpair carries an explicitly recomputed residual
//! ||A x - lambda x||; nothing is trusted from the recursion itself.

use crate::error::{Error, Result};
use crate::operators::SparseSymmetricOperator;

use super::ldlt::ShiftedFactor;
use super::{ExtremalPair, HEAT_TOL, MAX_LANCZOS, RESIDUAL_TOL};

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Remove the components of `v` along each (unit) vector in `basis`.
fn project_out(v: &mut [f64], basis: &[Vec<f64>]) {
    for b in basis {
        let c = dot(v, b);
        if c != 0.0 {
            axpy(v, -c, b);
        }
    }
}

/// Deterministic candidate start vectors: constant, centered ramp, then
/// coordinates.
fn candidate_start(n: usize, which: usize) -> Vec<f64> {
    match which {
        0 => vec![1.0; n],
        1 => {
            let mid = 0.5 * (n as f64 - 1.0);
            (0..n).map(|i| i as f64 - mid).collect()
        }
        k => {
            let mut v = vec![0.0; n];
            v[(k - 2) % n] = 1.0;
            v
        }
    }
}

/// First candidate with a nontrivial remainder orthogonal to `avoid`.
fn fresh_direction(n: usize, avoid: &[&[Vec<f64>]], first_candidate: usize) -> Option<Vec<f64>> {
    for which in first_candidate..(n + 2) {
        let mut v = candidate_start(n, which);
        for basis in avoid {
            project_out(&mut v, basis);
        }
        let m = norm(&v);
        if m > 1e-8 * (n as f64).sqrt() {
            for x in &mut v {
                *x /= m;
            }
            return Some(v);
        }
    }
    None
}

/// Ritz data of a symmetric tridiagonal matrix given by `alpha` (diagonal)
/// and `beta` (off-diagonal): eigenvalues with the first and last components
/// of each eigenvector.
fn tridiagonal_eigen(alpha: &[f64], beta: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let m = alpha.len();
    let mut t = nalgebra::DMatrix::zeros(m, m);
    for i in 0..m {
        t[(i, i)] = alpha[i];
        if i + 1 < m {
            t[(i, i + 1)] = beta[i];
            t[(i + 1, i)] = beta[i];
        }
    }
    let se = t.symmetric_eigen();
    let values: Vec<f64> = se.eigenvalues.iter().copied().collect();
    let first: Vec<f64> = (0..m).map(|j| se.eigenvectors[(0, j)]).collect();
    let last: Vec<f64> = (0..m).map(|j| se.eigenvectors[(m - 1, j)]).collect();
    (values, first, last)
}

/// Full eigenvector `V s` of the Ritz pair `which` of the tridiagonal.
fn ritz_vector(
    alpha: &[f64],
    beta: &[f64],
    basis: &[Vec<f64>],
    which_largest: bool,
) -> (f64, Vec<f64>) {
    let m = alpha.len();
    let mut t = nalgebra::DMatrix::zeros(m, m);
    for i in 0..m {
        t[(i, i)] = alpha[i];
        if i + 1 < m {
            t[(i, i + 1)] = beta[i];
            t[(i + 1, i)] = beta[i];
        }
    }
    let se = t.symmetric_eigen();
    let mut pick = 0;
    for j in 1..m {
        let better = if which_largest {
            se.eigenvalues[j] > se.eigenvalues[pick]
        } else {
            se.eigenvalues[j] < se.eigenvalues[pick]
        };
        if better {
            pick = j;
        }
    }
    let n = basis[0].len();
    let mut x = vec![0.0; n];
    for (i, v) in basis.iter().enumerate() {
        axpy(&mut x, se.eigenvectors[(i, pick)], v);
    }
    (se.eigenvalues[pick], x)
}

/// One shift-inverted Lanczos run for the lowest eigenpair of `op` in the
/// orthogonal complement of `deflate`.
fn lowest_pair_deflated(
    op: &SparseSymmetricOperator,
    factor: &ShiftedFactor,
    sigma: f64,
    deflate: &[Vec<f64>],
    start_candidate: usize,
) -> Result<ExtremalPair> {
    let n = op.n();
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();

    let v0 = fresh_direction(n, &[deflate], start_candidate).ok_or_else(|| {
        Error::NonConvergence {
            residual: f64::NAN,
            iterations: 0,
        }
    })?;
    basis.push(v0);

    let mut best: Option<ExtremalPair> = None;
    for j in 0..MAX_LANCZOS.min(n + 2) {
        let mut w = factor.solve(&basis[j])?;
        project_out(&mut w, deflate);
        let a = dot(&w, &basis[j]);
        alpha.push(a);
        axpy(&mut w, -a, &basis[j]);
        if j > 0 {
            axpy(&mut w, -beta[j - 1], &basis[j - 1]);
        }
        // Full reorthogonalization, twice.
        project_out(&mut w, &basis);
        project_out(&mut w, &basis);
        project_out(&mut w, deflate);
        let b = norm(&w);

        // Ritz pair of the inverted operator; the largest theta maps to the
        // eigenvalue of A nearest (above) sigma.
        let (theta, x_raw) = ritz_vector(&alpha, &beta, &basis, true);
        if theta != 0.0 {
            let lambda = sigma + 1.0 / theta;
            let mut x = x_raw;
            project_out(&mut x, deflate);
            let xn = norm(&x);
            if xn > 1e-12 {
                for xi in &mut x {
                    *xi /= xn;
                }
                let ax = op.apply(&x)?;
                let mut r2 = 0.0;
                for i in 0..n {
                    let r = ax[i] - lambda * x[i];
                    r2 += r * r;
                }
                let residual = r2.sqrt();
                if best.as_ref().map_or(true, |p| residual < p.residual) {
                    best = Some(ExtremalPair {
                        value: lambda,
                        vector: x,
                        residual,
                    });
                }
                if residual <= RESIDUAL_TOL * (1.0 + lambda.abs()) {
                    return Ok(best.unwrap());
                }
            }
        }

        if b <= 1e-13 {
            // Invariant subspace; continue in a fresh direction if any.
            match fresh_direction(n, &[deflate, &basis], 0) {
                Some(v) => basis.push(v),
                None => break,
            }
            beta.push(0.0);
        } else {
            let mut v = w;
            for x in &mut v {
                *x /= b;
            }
            basis.push(v);
            beta.push(b);
        }
    }

    match best {
        Some(p) if p.residual <= RESIDUAL_TOL * (1.0 + p.value.abs()) => Ok(p),
        Some(p) => Err(Error::NonConvergence {
            residual: p.residual,
            iterations: alpha.len(),
        }),
        None => Err(Error::NonConvergence {
            residual: f64::NAN,
            iterations: alpha.len(),
        }),
    }
}

/// Lowest `k` eigenpairs (k = 1 or 2) via shift-inverted Lanczos with
/// deflation; small operators take a dense path.  Pairs are sorted by value.
pub fn smallest_pairs(op: &SparseSymmetricOperator, k: usize) -> Result<Vec<ExtremalPair>> {
    if !(1..=2).contains(&k) {
        return Err(Error::InvalidParameter(format!(
            "only the lowest one or two pairs are supported, got k = {k}"
        )));
    }
    let n = op.n();
    if k > n {
        return Err(Error::InvalidParameter(format!(
            "k = {k} exceeds operator dimension {n}"
        )));
    }
    if n <= super::DENSE_PATH_THRESHOLD {
        let se = op.dense().symmetric_eigen();
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&a, &b| se.eigenvalues[a].partial_cmp(&se.eigenvalues[b]).unwrap());
        let mut out = Vec::with_capacity(k);
        for &i in idx.iter().take(k) {
            let x: Vec<f64> = (0..n).map(|r| se.eigenvectors[(r, i)]).collect();
            let lambda = se.eigenvalues[i];
            let ax = op.apply(&x)?;
            let residual = ax
                .iter()
                .zip(&x)
                .map(|(a, b)| (a - lambda * b) * (a - lambda * b))
                .sum::<f64>()
                .sqrt();
            out.push(ExtremalPair {
                value: lambda,
                vector: x,
                residual,
            });
        }
        return Ok(out);
    }

    let scale = op.infinity_norm().max(1.0);
    let mut sigma = -(1e-3 * scale).max(1e-6);
    let factor = match ShiftedFactor::new(op, sigma) {
        Ok(f) if f.negative_pivots() == 0 => f,
        // Shift landed inside the spectrum (operator not positive
        // semidefinite): retreat to a shift certainly left of it.
        _ => {
            sigma = -(op.infinity_norm() + 1.0);
            let f = ShiftedFactor::new(op, sigma)?;
            if f.negative_pivots() != 0 {
                return Err(Error::NonConvergence {
                    residual: f64::NAN,
                    iterations: 0,
                });
            }
            f
        }
    };

    let first = lowest_pair_deflated(op, &factor, sigma, &[], 0)?;
    if k == 1 {
        return Ok(vec![first]);
    }
    let deflate = vec![first.vector.clone()];
    let second = lowest_pair_deflated(op, &factor, sigma, &deflate, 1)?;
    let mut out = vec![first, second];
    out.sort_by(|a, b| a.value.partial_cmp(&b.value).unwrap());
    Ok(out)
}

/// <delta_x, exp(-s M) delta_x> for s >= 0.
///
/// Dense spectral sum for small operators; otherwise Lanczos from delta_x,
/// stopping when two successive Krylov approximations agree to half the
/// guaranteed tolerance.
pub fn semigroup_diag(op: &SparseSymmetricOperator, x: usize, s: f64) -> Result<f64> {
    let n = op.n();
    if x >= n {
        return Err(Error::InvalidParameter(format!(
            "vertex {x} outside operator dimension {n}"
        )));
    }
    if !s.is_finite() || s < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "semigroup time must be finite and non-negative, got {s}"
        )));
    }
    if s == 0.0 {
        return Ok(1.0);
    }
    if n <= super::DENSE_PATH_THRESHOLD {
        let se = op.dense().symmetric_eigen();
        let mut value = 0.0;
        for i in 0..n {
            let c = se.eigenvectors[(x, i)];
            value += c * c * (-s * se.eigenvalues[i]).exp();
        }
        return Ok(value);
    }

    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut delta = vec![0.0; n];
    delta[x] = 1.0;
    basis.push(delta);

    let mut previous: Option<f64> = None;
    for j in 0..MAX_LANCZOS.min(n) {
        let mut w = op.apply(&basis[j])?;
        let a = dot(&w, &basis[j]);
        alpha.push(a);
        axpy(&mut w, -a, &basis[j]);
        if j > 0 {
            axpy(&mut w, -beta[j - 1], &basis[j - 1]);
        }
        project_out(&mut w, &basis);
        project_out(&mut w, &basis);
        let b = norm(&w);

        let (values, first, _) = tridiagonal_eigen(&alpha, &beta);
        let mut value = 0.0;
        for (theta, c) in values.iter().zip(&first) {
            value += c * c * (-s * theta).exp();
        }
        let exhausted = b <= 1e-13;
        if let Some(prev) = previous {
            if (value - prev).abs() <= 0.5 * HEAT_TOL {
                return Ok(value);
            }
        }
        if exhausted {
            // The Krylov space is invariant: the quadrature is exact.
            return Ok(value);
        }
        previous = Some(value);
        let mut v = w;
        for xi in &mut v {
            *xi /= b;
        }
        basis.push(v);
        beta.push(b);
    }
    Err(Error::NonConvergence {
        residual: f64::NAN,
        iterations: MAX_LANCZOS,
    })
}
