//! Minimum-cost one-to-one assignment (Hungarian algorithm, O(n³)
//! potentials formulation). Used to match identified modes against
//! reference modes independent of ordering.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Solve the square assignment problem for `cost` (rows to columns).
///
/// Returns `(assignment, total)` where `assignment[r]` is the column
/// matched to row `r` and `total` the summed cost.
pub fn min_cost_assignment(cost: &DMatrix<f64>) -> Result<(Vec<usize>, f64)> {
    let n = cost.nrows();
    if n == 0 {
        return Err(Error::invalid("assignment: empty cost matrix"));
    }
    if n != cost.ncols() {
        return Err(Error::invalid(format!(
            "assignment: cost matrix must be square, got {}x{}",
            n,
            cost.ncols()
        )));
    }
    if cost.iter().any(|c| !c.is_finite()) {
        return Err(Error::invalid("assignment: non-finite cost entry"));
    }

    // 1-indexed arrays; index 0 is the virtual unmatched column.
    let inf = f64::INFINITY;
    let mut u = vec![0.0_f64; n + 1];
    let mut v = vec![0.0_f64; n + 1];
    let mut row_of = vec![0_usize; n + 1]; // row currently matched to column j
    let mut way = vec![0_usize; n + 1];

    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0_usize;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = inf;
            let mut j1 = 0_usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        // augment along the alternating path
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut assignment = vec![0_usize; n];
    let mut total = 0.0;
    for j in 1..=n {
        let r = row_of[j] - 1;
        assignment[r] = j - 1;
        total += cost[(r, j - 1)];
    }
    Ok((assignment, total))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha12Rng;

    fn brute_force(cost: &DMatrix<f64>) -> f64 {
        let n = cost.nrows();
        let mut cols: Vec<usize> = (0..n).collect();
        let mut best = f64::INFINITY;
        permute(&mut cols, 0, cost, &mut best);
        best
    }

    fn permute(cols: &mut Vec<usize>, k: usize, cost: &DMatrix<f64>, best: &mut f64) {
        let n = cols.len();
        if k == n {
            let total: f64 = (0..n).map(|r| cost[(r, cols[r])]).sum();
            if total < *best {
                *best = total;
            }
            return;
        }
        for i in k..n {
            cols.swap(k, i);
            permute(cols, k + 1, cost, best);
            cols.swap(k, i);
        }
    }

    #[test]
    fn matches_brute_force_up_to_n6() {
        let mut rng = ChaCha12Rng::seed_from_u64(99);
        for n in 1..=6 {
            for _ in 0..40 {
                let cost = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() * 10.0);
                let (asgn, total) = min_cost_assignment(&cost).unwrap();
                // assignment is a permutation
                let mut seen = vec![false; n];
                for &c in &asgn {
                    assert!(!seen[c]);
                    seen[c] = true;
                }
                let expected = brute_force(&cost);
                assert!(
                    (total - expected).abs() < 1e-9,
                    "n={n}: hungarian {total} vs brute {expected}"
                );
            }
        }
    }

    #[test]
    fn identity_cost_picks_diagonal() {
        let n = 4;
        let cost = DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { 1.0 });
        let (asgn, total) = min_cost_assignment(&cost).unwrap();
        assert_eq!(asgn, vec![0, 1, 2, 3]);
        assert_eq!(total, 0.0);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(min_cost_assignment(&DMatrix::zeros(0, 0)).is_err());
        assert!(min_cost_assignment(&DMatrix::zeros(2, 3)).is_err());
        let mut c = DMatrix::zeros(2, 2);
        c[(0, 1)] = f64::NAN;
        assert!(min_cost_assignment(&c).is_err());
    }
}
