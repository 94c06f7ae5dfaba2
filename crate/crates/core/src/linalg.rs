//! Shared dense linear-algebra helpers on top of `nalgebra`.
//!
//! Everything here operates on `DMatrix<f64>`; complex results use
//! `nalgebra::Complex<f64>`. The general (non-symmetric) eigensolver goes
//! through the complex Schur form: A = Q T Q^H with T upper triangular,
//! eigenvalues on the diagonal of T and eigenvectors recovered by
//! back-substitution.

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;

/// Solve (G + ridge·I) X = B for symmetric positive-definite G via Cholesky.
/// Returns `None` when the factorization fails (G + ridge·I not PD).
pub fn solve_spd(g: &DMatrix<f64>, b: &DMatrix<f64>, ridge: f64) -> Option<DMatrix<f64>> {
    let n = g.nrows();
    let mut m = g.clone();
    for i in 0..n {
        m[(i, i)] += ridge;
    }
    let chol = m.cholesky()?;
    Some(chol.solve(b))
}

/// Minimum-norm least-squares solution of G X = B via SVD with relative
/// rank cutoff `rcond` (singular values below rcond·σ_max are treated as 0).
pub fn pinv_solve(g: &DMatrix<f64>, b: &DMatrix<f64>, rcond: f64) -> Result<DMatrix<f64>> {
    let svd = g.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let eps = rcond * smax.max(f64::MIN_POSITIVE);
    svd.solve(b, eps)
        .map_err(|e| Error::numerical(format!("SVD solve failed: {e}")))
}

/// Least-squares solution of A X = B (A tall or square) via SVD.
pub fn lstsq(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    pinv_solve(a, b, 1e-13)
}

/// 2-norm condition number estimate σ_max/σ_min.
pub fn condition_estimate(g: &DMatrix<f64>) -> f64 {
    let svd = g.clone().svd(false, false);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smin <= 0.0 {
        f64::INFINITY
    } else {
        smax / smin
    }
}

/// Eigendecomposition of a real square matrix.
pub struct Eig {
    /// Eigenvalues; complex ones appear in exactly conjugate pairs.
    pub values: Vec<C64>,
    /// Right eigenvectors, column k corresponding to `values[k]`,
    /// normalized to unit 2-norm.
    pub vectors: DMatrix<C64>,
}

/// General eigendecomposition via complex Schur form.
///
/// Eigenvalues of a real input are post-processed so conjugate pairs are
/// exact: near-real eigenvalues are snapped to the real axis and each
/// remaining complex eigenvalue is averaged with its conjugate partner.
pub fn eig(a: &DMatrix<f64>) -> Result<Eig> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::invalid(format!(
            "eig expects a square matrix, got {}x{}",
            n,
            a.ncols()
        )));
    }
    if n == 0 {
        return Err(Error::invalid("eig expects a non-empty matrix"));
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("eig: matrix contains non-finite entries"));
    }
    let ac = a.map(|x| C64::new(x, 0.0));
    let schur = ac
        .clone()
        .try_schur(f64::EPSILON, 100_000)
        .ok_or_else(|| Error::numerical("Schur decomposition did not converge"))?;
    let (q, t) = schur.unpack();

    let mut values: Vec<C64> = (0..n).map(|i| t[(i, i)]).collect();
    let scale = a.norm().max(1.0);
    pair_conjugates(&mut values, 1e-12 * scale);

    // Eigenvector of T for λ_k: y_k = 1, y_j = 0 for j > k, back-substitute
    // (T - λI) y = 0 upward; then v = Q y.
    let mut vectors = DMatrix::<C64>::zeros(n, n);
    for k in 0..n {
        let lam = t[(k, k)];
        let mut y = vec![C64::new(0.0, 0.0); k + 1];
        y[k] = C64::new(1.0, 0.0);
        for i in (0..k).rev() {
            let mut s = C64::new(0.0, 0.0);
            for (j, yj) in y.iter().enumerate().take(k + 1).skip(i + 1) {
                s += t[(i, j)] * yj;
            }
            let mut d = t[(i, i)] - lam;
            if d.norm() < f64::EPSILON * scale {
                // repeated/defective eigenvalue: nudge the divisor so the
                // back-substitution stays finite
                d = C64::new(f64::EPSILON * scale, 0.0);
            }
            y[i] = -s / d;
        }
        let mut v = DVector::<C64>::zeros(n);
        for i in 0..n {
            let mut s = C64::new(0.0, 0.0);
            for (j, yj) in y.iter().enumerate() {
                s += q[(i, j)] * yj;
            }
            v[i] = s;
        }
        let norm = v.norm();
        if norm > 0.0 {
            v /= C64::new(norm, 0.0);
        }
        vectors.set_column(k, &v);
    }

    // Make conjugate-pair eigenvectors exactly conjugate as well.
    let mut used = vec![false; n];
    for i in 0..n {
        if used[i] || values[i].im == 0.0 {
            continue;
        }
        for j in (i + 1)..n {
            if !used[j] && values[j] == values[i].conj() {
                let vi = vectors.column(i).clone_owned();
                vectors.set_column(j, &vi.map(|z| z.conj()));
                used[i] = true;
                used[j] = true;
                break;
            }
        }
    }

    Ok(Eig { values, vectors })
}

/// Snap near-real eigenvalues to the real axis and force remaining complex
/// eigenvalues into exactly conjugate pairs (the spectrum of a real matrix
/// is conjugate-symmetric; roundoff in the complex Schur form breaks the
/// symmetry in the last bits).
fn pair_conjugates(values: &mut [C64], tol: f64) {
    for v in values.iter_mut() {
        if v.im.abs() <= tol {
            *v = C64::new(v.re, 0.0);
        }
    }
    let n = values.len();
    let mut used = vec![false; n];
    for i in 0..n {
        if used[i] || values[i].im == 0.0 {
            continue;
        }
        let mut best: Option<(usize, f64)> = None;
        for j in (i + 1)..n {
            if used[j] || values[j].im == 0.0 || values[j].im.signum() == values[i].im.signum() {
                continue;
            }
            let d = (values[j] - values[i].conj()).norm();
            if best.map_or(true, |(_, bd)| d < bd) {
                best = Some((j, d));
            }
        }
        if let Some((j, d)) = best {
            if d <= 1e-8 * (1.0 + values[i].norm()) {
                let avg = (values[i] + values[j].conj()) * C64::new(0.5, 0.0);
                values[i] = avg;
                values[j] = avg.conj();
                used[i] = true;
                used[j] = true;
            }
        }
    }
}

/// Frobenius norm of A - B.
pub fn frob_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha12Rng;

    fn random_matrix(n: usize, rng: &mut impl Rng) -> DMatrix<f64> {
        DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() * 2.0 - 1.0)
    }

    #[test]
    fn eig_residuals_small_on_random_matrices() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        for trial in 0..30 {
            let n = 2 + trial % 12;
            let a = random_matrix(n, &mut rng);
            let ac = a.map(|x| C64::new(x, 0.0));
            let e = eig(&a).unwrap();
            for k in 0..n {
                let v = e.vectors.column(k);
                let resid = (&ac * v - v * e.values[k]).norm();
                assert!(resid < 1e-9, "residual {resid} at n={n} k={k}");
            }
        }
    }

    #[test]
    fn eig_trace_identity() {
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let a = random_matrix(9, &mut rng);
        let e = eig(&a).unwrap();
        let sum: C64 = e.values.iter().sum();
        let tr: f64 = (0..9).map(|i| a[(i, i)]).sum();
        assert!((sum - C64::new(tr, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn eig_conjugate_pairs_exact() {
        let mut rng = ChaCha12Rng::seed_from_u64(21);
        for _ in 0..10 {
            let a = random_matrix(8, &mut rng);
            let e = eig(&a).unwrap();
            let mut vals = e.values.clone();
            while let Some(v) = vals.pop() {
                if v.im == 0.0 {
                    continue;
                }
                let pos = vals.iter().position(|w| *w == v.conj());
                assert!(pos.is_some(), "no exact conjugate for {v}");
                vals.remove(pos.unwrap());
            }
        }
    }

    #[test]
    fn eig_known_rotation_spectrum() {
        // planar rotation by θ scaled by r has eigenvalues r·e^{±iθ}
        let (r, th) = (0.9_f64, 0.3_f64);
        let a = DMatrix::from_row_slice(
            2,
            2,
            &[r * th.cos(), -r * th.sin(), r * th.sin(), r * th.cos()],
        );
        let e = eig(&a).unwrap();
        let mut mags: Vec<f64> = e.values.iter().map(|v| v.norm()).collect();
        mags.sort_by(f64::total_cmp);
        assert!((mags[0] - r).abs() < 1e-12 && (mags[1] - r).abs() < 1e-12);
        let mut args: Vec<f64> = e.values.iter().map(|v| v.arg().abs()).collect();
        args.sort_by(f64::total_cmp);
        assert!((args[0] - th).abs() < 1e-12);
    }

    #[test]
    fn eig_rejects_nonsquare_and_nonfinite() {
        assert!(eig(&DMatrix::zeros(2, 3)).is_err());
        let mut a = DMatrix::zeros(2, 2);
        a[(0, 0)] = f64::NAN;
        assert!(eig(&a).is_err());
    }

    #[test]
    fn spd_solve_matches_direct_inverse() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let f = DMatrix::from_fn(12, 5, |_, _| rng.random::<f64>());
        let g = f.transpose() * &f;
        let b = DMatrix::from_fn(5, 2, |_, _| rng.random::<f64>());
        let x = solve_spd(&g, &b, 0.0).unwrap();
        assert!((&g * &x - &b).norm() < 1e-10);
    }

    #[test]
    fn pinv_solve_gives_minimum_norm_solution() {
        // singular G: rank-1
        let g = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let b = DMatrix::from_row_slice(2, 1, &[3.0, 0.0]);
        let x = pinv_solve(&g, &b, 1e-12).unwrap();
        assert!((x[(0, 0)] - 3.0).abs() < 1e-12);
        assert!(x[(1, 0)].abs() < 1e-12, "null-space component must be zero");
    }
}
