//! Observable dictionaries and the feature-space lift.
//!
//! A dictionary is an ordered set of scalar observables ψ₁…ψ_K; the lift
//! stacks them into Ψ(x) = [ψ₁(x) … ψ_K(x)]. Ordering is stable so
//! operator-matrix indices are reproducible: the constant observable comes
//! first, the coordinates x₁…x_n next, then the remaining observables
//! (higher-degree monomials in graded-lexicographic order, or RBF atoms in
//! center order). Every kind contains the constant and the coordinates,
//! which lets the predictor's projection recover states exactly.

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::Trajectory;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum DictionaryKind {
    /// ψ = (1, x₁, …, x_n).
    StatePlusConstant,
    /// All monomials of total degree ≤ max_degree, graded-lex ordered.
    Monomials {
        max_degree: usize,
        exponents: Vec<Vec<u32>>,
    },
    /// Constant + coordinates + Gaussian bumps exp(−‖x−c‖²/(2·bandwidth²)).
    GaussianRbf {
        centers: DMatrix<f64>,
        bandwidth: f64,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dictionary {
    kind: DictionaryKind,
    input_dim: usize,
}

impl Dictionary {
    pub fn state_plus_constant(input_dim: usize) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::invalid("input_dim must be positive"));
        }
        Ok(Self {
            kind: DictionaryKind::StatePlusConstant,
            input_dim,
        })
    }

    pub fn monomials(input_dim: usize, max_degree: usize) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::invalid("input_dim must be positive"));
        }
        if max_degree == 0 {
            return Err(Error::invalid(
                "max_degree must be >= 1 so coordinates are included",
            ));
        }
        let exponents = graded_lex_exponents(input_dim, max_degree);
        debug_assert_eq!(exponents.len(), binomial(input_dim + max_degree, max_degree));
        Ok(Self {
            kind: DictionaryKind::Monomials {
                max_degree,
                exponents,
            },
            input_dim,
        })
    }

    pub fn gaussian_rbf(input_dim: usize, centers: DMatrix<f64>, bandwidth: f64) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::invalid("input_dim must be positive"));
        }
        if centers.ncols() != input_dim {
            return Err(Error::invalid(format!(
                "centers have dimension {}, expected {input_dim}",
                centers.ncols()
            )));
        }
        if centers.nrows() == 0 {
            return Err(Error::invalid("need at least one RBF center"));
        }
        if !(bandwidth > 0.0) || !bandwidth.is_finite() {
            return Err(Error::invalid("bandwidth must be positive"));
        }
        Ok(Self {
            kind: DictionaryKind::GaussianRbf { centers, bandwidth },
            input_dim,
        })
    }

    /// RBF dictionary with centers from k-means++ (plus Lloyd refinement)
    /// on the trajectory snapshots and bandwidth = median pairwise center
    /// distance.
    pub fn gaussian_rbf_from_data(traj: &Trajectory, n_centers: usize, seed: u64) -> Result<Self> {
        if traj.has_missing() {
            return Err(Error::invalid(
                "RBF center selection needs a trajectory without absent entries",
            ));
        }
        if n_centers == 0 || n_centers > traj.n_samples() {
            return Err(Error::invalid(format!(
                "n_centers must be in 1..={}, got {n_centers}",
                traj.n_samples()
            )));
        }
        let centers = kmeans(traj.data(), n_centers, seed);
        let bandwidth = median_pairwise_distance(&centers)
            .filter(|d| *d > 0.0)
            .unwrap_or_else(|| {
                // single or coincident centers: fall back to the data scale
                let mean = traj.data().row_mean();
                let spread = traj
                    .data()
                    .row_iter()
                    .map(|r| (r - &mean).norm())
                    .sum::<f64>()
                    / traj.n_samples() as f64;
                spread.max(1.0)
            });
        Self::gaussian_rbf(traj.dim(), centers, bandwidth)
    }

    pub fn kind(&self) -> &DictionaryKind {
        &self.kind
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    /// Number of observables K.
    pub fn size(&self) -> usize {
        match &self.kind {
            DictionaryKind::StatePlusConstant => self.input_dim + 1,
            DictionaryKind::Monomials { exponents, .. } => exponents.len(),
            DictionaryKind::GaussianRbf { centers, .. } => 1 + self.input_dim + centers.nrows(),
        }
    }

    /// Columns of the feature space holding the coordinate observables
    /// x₁…x_n (always 1..=n by the ordering convention).
    pub fn coordinate_columns(&self) -> std::ops::Range<usize> {
        1..self.input_dim + 1
    }

    /// Ψ(x) as a length-K vector.
    pub fn lift(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.input_dim {
            return Err(Error::invalid(format!(
                "state has dimension {}, dictionary expects {}",
                x.len(),
                self.input_dim
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("state must be finite"));
        }
        let mut out = DVector::zeros(self.size());
        self.lift_into(x.as_slice(), &mut out);
        Ok(out)
    }

    fn lift_into(&self, x: &[f64], out: &mut DVector<f64>) {
        match &self.kind {
            DictionaryKind::StatePlusConstant => {
                out[0] = 1.0;
                for (i, v) in x.iter().enumerate() {
                    out[i + 1] = *v;
                }
            }
            DictionaryKind::Monomials { exponents, .. } => {
                for (k, alpha) in exponents.iter().enumerate() {
                    let mut value = 1.0;
                    for (xi, &e) in x.iter().zip(alpha) {
                        if e > 0 {
                            value *= xi.powi(e as i32);
                        }
                    }
                    out[k] = value;
                }
            }
            DictionaryKind::GaussianRbf { centers, bandwidth } => {
                out[0] = 1.0;
                for (i, v) in x.iter().enumerate() {
                    out[i + 1] = *v;
                }
                let base = 1 + self.input_dim;
                let two_bw2 = 2.0 * bandwidth * bandwidth;
                for c in 0..centers.nrows() {
                    let mut d2 = 0.0;
                    for (j, xi) in x.iter().enumerate() {
                        let d = xi - centers[(c, j)];
                        d2 += d * d;
                    }
                    out[base + c] = (-d2 / two_bw2).exp();
                }
            }
        }
    }

    /// Lift every sample; row m of the result is Ψ(x_m).
    pub fn lift_trajectory(&self, traj: &Trajectory) -> Result<DMatrix<f64>> {
        if traj.has_missing() {
            return Err(Error::invalid(
                "trajectory has absent entries; run interpolate_missing before lifting",
            ));
        }
        if traj.dim() != self.input_dim {
            return Err(Error::invalid(format!(
                "trajectory dimension {} does not match dictionary input dimension {}",
                traj.dim(),
                self.input_dim
            )));
        }
        let k = self.size();
        let mut features = DMatrix::zeros(traj.n_samples(), k);
        let mut row = DVector::zeros(k);
        let mut x = vec![0.0; self.input_dim];
        for m in 0..traj.n_samples() {
            for (j, xj) in x.iter_mut().enumerate() {
                *xj = traj.data()[(m, j)];
            }
            self.lift_into(&x, &mut row);
            features.row_mut(m).copy_from(&row.transpose());
        }
        Ok(features)
    }

    /// Upper bound on the Lipschitz constant of the lift over ‖x‖ ≤ radius
    /// (Frobenius bound on the Jacobian).
    pub fn lipschitz_bound(&self, radius: f64) -> f64 {
        let r = radius.max(1e-12);
        match &self.kind {
            DictionaryKind::StatePlusConstant => 1.0,
            DictionaryKind::Monomials { exponents, .. } => {
                let mut sum = 0.0;
                for alpha in exponents {
                    let deg: u32 = alpha.iter().sum();
                    if deg == 0 {
                        continue;
                    }
                    for &e in alpha {
                        if e == 0 {
                            continue;
                        }
                        let d = e as f64 * r.powi(deg as i32 - 1).max(1.0);
                        sum += d * d;
                    }
                }
                sum.sqrt()
            }
            DictionaryKind::GaussianRbf { centers, bandwidth } => {
                // ‖∇ exp(−r²/2bw²)‖ peaks at e^{−1/2}/bw
                let per_center = (-0.5f64).exp() / bandwidth;
                (1.0 + centers.nrows() as f64 * per_center * per_center).sqrt()
            }
        }
    }
}

/// Dictionary recipe in config-file form; `build` resolves it against the
/// training data (RBF centers are fitted to the trajectory snapshots).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DictionarySpec {
    StatePlusConstant,
    Monomials { degree: usize },
    GaussianRbf {
        n_centers: usize,
        #[serde(default)]
        seed: u64,
    },
}

impl Default for DictionarySpec {
    fn default() -> Self {
        DictionarySpec::Monomials { degree: 2 }
    }
}

impl DictionarySpec {
    pub fn build(&self, traj: &Trajectory) -> Result<Dictionary> {
        match self {
            DictionarySpec::StatePlusConstant => Dictionary::state_plus_constant(traj.dim()),
            DictionarySpec::Monomials { degree } => Dictionary::monomials(traj.dim(), *degree),
            DictionarySpec::GaussianRbf { n_centers, seed } => {
                Dictionary::gaussian_rbf_from_data(traj, *n_centers, *seed)
            }
        }
    }
}

fn binomial(n: usize, k: usize) -> usize {
    let k = k.min(n - k);
    let mut acc = 1usize;
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

/// Exponent multi-indices for all monomials of total degree ≤ max_degree,
/// graded (degree 0, 1, 2, …) and lexicographic within a degree with x₁
/// strongest: dim 2, degree 2 → (0,0),(1,0),(0,1),(2,0),(1,1),(0,2).
fn graded_lex_exponents(dim: usize, max_degree: usize) -> Vec<Vec<u32>> {
    let mut all = Vec::new();
    let mut current = vec![0u32; dim];
    for degree in 0..=max_degree {
        fill_degree(dim, degree as u32, 0, &mut current, &mut all);
    }
    all
}

fn fill_degree(dim: usize, remaining: u32, pos: usize, current: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    if pos == dim - 1 {
        current[pos] = remaining;
        out.push(current.clone());
        return;
    }
    for e in (0..=remaining).rev() {
        current[pos] = e;
        fill_degree(dim, remaining - e, pos + 1, current, out);
    }
    current[pos] = 0;
}

/// k-means with k-means++ seeding; rows of `data` are points.
fn kmeans(data: &DMatrix<f64>, k: usize, seed: u64) -> DMatrix<f64> {
    let n = data.nrows();
    let dim = data.ncols();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);

    let dist2 = |a: usize, c: &DMatrix<f64>, ci: usize| -> f64 {
        let mut d2 = 0.0;
        for j in 0..dim {
            let d = data[(a, j)] - c[(ci, j)];
            d2 += d * d;
        }
        d2
    };

    // k-means++ seeding
    let mut centers = DMatrix::zeros(k, dim);
    let first = rng.random_range(0..n);
    centers.row_mut(0).copy_from(&data.row(first));
    let mut min_d2 = vec![f64::INFINITY; n];
    for c in 1..k {
        for (i, md) in min_d2.iter_mut().enumerate() {
            *md = md.min(dist2(i, &centers, c - 1));
        }
        let total: f64 = min_d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, d) in min_d2.iter().enumerate() {
                target -= d;
                if target <= 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centers.row_mut(c).copy_from(&data.row(pick));
    }

    // Lloyd refinement
    let mut assign = vec![0usize; n];
    for _ in 0..25 {
        let mut changed = false;
        for i in 0..n {
            let mut best = 0usize;
            let mut best_d = f64::INFINITY;
            for c in 0..k {
                let d = dist2(i, &centers, c);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            if assign[i] != best {
                assign[i] = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = DMatrix::<f64>::zeros(k, dim);
        let mut counts = vec![0usize; k];
        for i in 0..n {
            counts[assign[i]] += 1;
            for j in 0..dim {
                sums[(assign[i], j)] += data[(i, j)];
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                for j in 0..dim {
                    centers[(c, j)] = sums[(c, j)] / counts[c] as f64;
                }
            }
            // empty cluster keeps its previous center
        }
    }
    centers
}

fn median_pairwise_distance(centers: &DMatrix<f64>) -> Option<f64> {
    let k = centers.nrows();
    if k < 2 {
        return None;
    }
    let mut dists = Vec::with_capacity(k * (k - 1) / 2);
    for i in 0..k {
        for j in (i + 1)..k {
            dists.push((centers.row(i) - centers.row(j)).norm());
        }
    }
    dists.sort_by(f64::total_cmp);
    Some(dists[dists.len() / 2])
}
