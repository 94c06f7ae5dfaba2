//! Finite Koopman-operator approximation from lifted snapshot pairs.
//!
//! From a feature matrix whose rows are Ψ(x₀)…Ψ(x_M), the Gram pair
//!
//! ```text
//! G = (1/M) Σₘ Ψ(xₘ)ᵀ Ψ(xₘ),   A = (1/M) Σₘ Ψ(xₘ)ᵀ Ψ(xₘ₊₁)
//! ```
//!
//! defines the operator estimation problems. Plain EDMD solves
//! G·K = A (optionally ridge-stabilized); the robust variant solves the
//! column-wise ℓ₁-regularized problem min ½‖GK−A‖_F² + c̃Σ‖K_k‖₁, whose
//! regularization strength is either given or picked by blocked
//! cross-validation on one-step feature prediction error.
//!
//! Orientation convention: K acts on row-vector lifts, Ψ(xₘ)·K ≈ Ψ(xₘ₊₁).

use nalgebra::DMatrix;

use crate::assignment;
use crate::dictionary::Dictionary;
use crate::error::{Error, Result};
use crate::lasso::{ColumnwiseLasso, LassoOptions};
use crate::linalg::{self, C64};

/// Below this magnitude a discrete eigenvalue has no meaningful
/// continuous-time counterpart; it is flagged and excluded from dominance.
pub const NEGLIGIBLE_EIGENVALUE: f64 = 1e-12;

// ---------------------------------------------------------------------------
// Gram pair
// ---------------------------------------------------------------------------

/// Empirical moment matrices of lifted snapshot pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct GramPair {
    g: DMatrix<f64>,
    a: DMatrix<f64>,
    n_pairs: usize,
}

impl GramPair {
    /// Accumulate from a feature matrix with M+1 rows (M pairs).
    pub fn from_features(features: &DMatrix<f64>) -> Result<Self> {
        Self::from_features_lagged(features, 1)
    }

    /// Accumulate pairs (m, m+lag) for every m. A lag above 1 estimates
    /// the lag·dt-step operator: with dt-spaced noisy samples the snapshot
    /// displacement grows with the lag while the measurement noise does
    /// not, which tames the attenuation bias that one-sample steps suffer
    /// at PMU-rate sampling. The caller accounts for the effective step
    /// when mapping eigenvalues to continuous time.
    pub fn from_features_lagged(features: &DMatrix<f64>, lag: usize) -> Result<Self> {
        if lag == 0 {
            return Err(Error::invalid("pair lag must be >= 1"));
        }
        let rows = features.nrows();
        if rows < lag + 1 {
            return Err(Error::invalid(format!(
                "need at least {} snapshots to form a pair at lag {lag}, got {rows}",
                lag + 1
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("feature matrix must be finite"));
        }
        let m = rows - lag;
        let f0 = features.rows(0, m);
        let f1 = features.rows(lag, m);
        let mut g = f0.transpose() * f0 / m as f64;
        let a = f0.transpose() * f1 / m as f64;
        // symmetrize: G is an average of symmetric outer products
        g = (&g + g.transpose()) * 0.5;
        Ok(Self { g, a, n_pairs: m })
    }

    /// Weighted merge of two accumulations; associative, enabling chunked
    /// or parallel accumulation across trajectory pieces.
    pub fn merge(&self, other: &GramPair) -> Result<GramPair> {
        if self.g.nrows() != other.g.nrows() {
            return Err(Error::invalid(format!(
                "cannot merge gram pairs of sizes {} and {}",
                self.g.nrows(),
                other.g.nrows()
            )));
        }
        let total = (self.n_pairs + other.n_pairs) as f64;
        let w1 = self.n_pairs as f64 / total;
        let w2 = other.n_pairs as f64 / total;
        Ok(GramPair {
            g: &self.g * w1 + &other.g * w2,
            a: &self.a * w1 + &other.a * w2,
            n_pairs: self.n_pairs + other.n_pairs,
        })
    }

    pub fn g(&self) -> &DMatrix<f64> {
        &self.g
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn n_pairs(&self) -> usize {
        self.n_pairs
    }

    pub fn size(&self) -> usize {
        self.g.nrows()
    }

    /// Assemble from explicit matrices (tests, external data).
    pub fn from_parts(g: DMatrix<f64>, a: DMatrix<f64>, n_pairs: usize) -> Result<Self> {
        if g.nrows() != g.ncols() || a.nrows() != g.nrows() || a.ncols() != g.ncols() {
            return Err(Error::invalid("gram matrices must be square and congruent"));
        }
        if g.iter().chain(a.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("gram matrices must be finite"));
        }
        if n_pairs == 0 {
            return Err(Error::invalid("n_pairs must be positive"));
        }
        Ok(Self { g, a, n_pairs })
    }
}

// ---------------------------------------------------------------------------
// Koopman model
// ---------------------------------------------------------------------------

/// Finite operator matrix on a dictionary, with the sampling interval it
/// was estimated at and the ℓ₁ strength used (0 for plain EDMD).
#[derive(Debug, Clone)]
pub struct KoopmanModel {
    pub k_matrix: DMatrix<f64>,
    pub dictionary: Dictionary,
    pub dt: f64,
    pub regularization: f64,
}

impl KoopmanModel {
    pub fn size(&self) -> usize {
        self.k_matrix.nrows()
    }
}

/// Plain EDMD: K = (G + ridge·I)⁻¹ A through a symmetric positive-definite
/// solve; with ridge = 0 and singular G the minimum-norm pseudoinverse
/// solution is returned.
pub fn edmd(gram: &GramPair, dictionary: &Dictionary, dt: f64, ridge: f64) -> Result<KoopmanModel> {
    if dictionary.size() != gram.size() {
        return Err(Error::invalid(format!(
            "dictionary size {} does not match gram size {}",
            dictionary.size(),
            gram.size()
        )));
    }
    if !(dt > 0.0) {
        return Err(Error::invalid("dt must be positive"));
    }
    if !(ridge >= 0.0) || !ridge.is_finite() {
        return Err(Error::invalid("ridge must be finite and >= 0"));
    }
    let k_matrix = match linalg::solve_spd(&gram.g, &gram.a, ridge) {
        Some(k) => k,
        None if ridge == 0.0 => linalg::pinv_solve(&gram.g, &gram.a, 1e-12)?,
        None => {
            return Err(Error::numerical(format!(
                "EDMD solve failed: G + ridge·I not positive definite (condition estimate {:.3e})",
                linalg::condition_estimate(&gram.g)
            )))
        }
    };
    if k_matrix.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical(format!(
            "EDMD produced non-finite entries (condition estimate {:.3e})",
            linalg::condition_estimate(&gram.g)
        )));
    }
    Ok(KoopmanModel {
        k_matrix,
        dictionary: dictionary.clone(),
        dt,
        regularization: 0.0,
    })
}

/// Gram pair expressed in the variance-normalized feature frame
/// Ψ̃ = Ψ·D⁻¹ with D = diag(RMS of each feature), plus the scales.
/// Features with zero variance keep scale 1.
fn normalized_problem(gram: &GramPair) -> (DMatrix<f64>, DMatrix<f64>, Vec<f64>) {
    let k = gram.size();
    let scales: Vec<f64> = (0..k)
        .map(|i| {
            let v = gram.g[(i, i)].max(0.0).sqrt();
            if v > 0.0 {
                v
            } else {
                1.0
            }
        })
        .collect();
    let mut gt = gram.g.clone();
    let mut at = gram.a.clone();
    for i in 0..k {
        for j in 0..k {
            gt[(i, j)] /= scales[i] * scales[j];
            at[(i, j)] /= scales[i] * scales[j];
        }
    }
    (gt, at, scales)
}

/// Zero-solution threshold of the robust problem: the smallest c̃ at which
/// the whole operator is zeroed (computed in the normalized frame the
/// penalty lives in).
pub fn robust_c_max(gram: &GramPair) -> Result<f64> {
    let (gt, at, _) = normalized_problem(gram);
    Ok(ColumnwiseLasso::new(&gt, &at)?.c_max())
}

/// Robust EDMD: the ℓ₁-regularized problem at strength `c_tilde`, solved
/// per column by cyclic coordinate descent with soft-thresholding.
///
/// The penalty is applied in the variance-normalized feature frame (each
/// observable divided by its RMS over the training data), the standard
/// scaling for ℓ₁ regression; without it any useful c̃ would annihilate
/// the contributions of low-amplitude observables purely because of their
/// units. The returned operator is mapped back to the raw frame by the
/// inverse similarity transform, so its spectrum is that of the
/// normalized-frame solution.
pub fn robust_edmd(
    gram: &GramPair,
    dictionary: &Dictionary,
    dt: f64,
    c_tilde: f64,
    opts: &LassoOptions,
) -> Result<KoopmanModel> {
    if dictionary.size() != gram.size() {
        return Err(Error::invalid(format!(
            "dictionary size {} does not match gram size {}",
            dictionary.size(),
            gram.size()
        )));
    }
    if !(dt > 0.0) {
        return Err(Error::invalid("dt must be positive"));
    }
    let (gt, at, scales) = normalized_problem(gram);
    let solver = ColumnwiseLasso::new(&gt, &at)?;
    let mut k_matrix = solver.solve_pathwise(c_tilde, opts)?;
    // K = D⁻¹·K̃·D
    let k = gram.size();
    for i in 0..k {
        for j in 0..k {
            k_matrix[(i, j)] *= scales[j] / scales[i];
        }
    }
    Ok(KoopmanModel {
        k_matrix,
        dictionary: dictionary.clone(),
        dt,
        regularization: c_tilde,
    })
}

// ---------------------------------------------------------------------------
// Cross-validated regularization
// ---------------------------------------------------------------------------

/// Outcome of the blocked cross-validation sweep over c̃.
#[derive(Debug, Clone)]
pub struct CvReport {
    pub chosen_c: f64,
    pub grid: Vec<f64>,
    pub mean_errors: Vec<f64>,
}

/// Pick c̃ by `n_folds`-fold blocked cross-validation on one-step feature
/// prediction error ‖Ψ(x_{m+lag}) − Ψ(x_m)·K‖². Folds are contiguous
/// blocks of pair indices with a lag-wide guard gap between training and
/// validation. The grid is `n_grid` log-spaced values spanning
/// [10⁻⁶·c_max, c_max], descending, solved with warm starts; ties prefer
/// the stronger regularization.
pub fn cross_validate_c(
    features: &DMatrix<f64>,
    lag: usize,
    n_folds: usize,
    n_grid: usize,
    opts: &LassoOptions,
) -> Result<CvReport> {
    let rows = features.nrows();
    if lag == 0 {
        return Err(Error::invalid("pair lag must be >= 1"));
    }
    if rows < lag + 1 {
        return Err(Error::invalid("need at least lag + 1 snapshots"));
    }
    let m = rows - lag;
    if n_folds < 2 || n_folds > m {
        return Err(Error::invalid(format!(
            "n_folds must be in 2..={m}, got {n_folds}"
        )));
    }
    if n_grid < 2 {
        return Err(Error::invalid("n_grid must be >= 2"));
    }

    let full = GramPair::from_features_lagged(features, lag)?;
    let c_max = robust_c_max(&full)?;
    if c_max <= 0.0 {
        // all-zero cross moments: any c gives the zero operator
        return Ok(CvReport {
            chosen_c: 0.0,
            grid: vec![0.0],
            mean_errors: vec![0.0],
        });
    }
    let lo = 1e-6 * c_max;
    let ratio = (c_max / lo).powf(1.0 / (n_grid - 1) as f64);
    let grid: Vec<f64> = (0..n_grid)
        .map(|i| c_max / ratio.powi(i as i32))
        .collect(); // descending from c_max to 1e-6·c_max

    let k = features.ncols();
    let mut errors = vec![0.0_f64; n_grid];
    let mut n_scored = 0usize;
    let bounds: Vec<usize> = (0..=n_folds).map(|f| f * m / n_folds).collect();
    for f in 0..n_folds {
        let (val_start, val_end) = (bounds[f], bounds[f + 1]);
        if val_end == val_start {
            continue;
        }
        // training gram from pairs outside the validation block, keeping a
        // lag-wide gap so no training pair shares a sample with validation
        let mut g = DMatrix::<f64>::zeros(k, k);
        let mut a = DMatrix::<f64>::zeros(k, k);
        let mut n_train = 0usize;
        for pair in 0..m {
            if pair + lag > val_start && pair < val_end + lag {
                continue;
            }
            let psi0 = features.row(pair).transpose();
            let psi1 = features.row(pair + lag).transpose();
            g.ger(1.0, &psi0, &psi0, 1.0);
            a.ger(1.0, &psi0, &psi1, 1.0);
            n_train += 1;
        }
        if n_train == 0 {
            return Err(Error::invalid("a fold left no training pairs"));
        }
        g /= n_train as f64;
        a /= n_train as f64;
        g = (&g + g.transpose()) * 0.5;
        let train_gram = GramPair::from_parts(g, a, n_train)?;
        let (gt, at, scales) = normalized_problem(&train_gram);
        let solver = ColumnwiseLasso::new(&gt, &at)?;
        // inner path solves use the cheap profile; only the final fit at
        // the chosen c̃ runs at the caller's tolerance
        let cv_opts = LassoOptions {
            max_sweeps: opts.max_sweeps.min(LassoOptions::cv_profile().max_sweeps),
            ..LassoOptions::cv_profile()
        };
        let path = solver.solve_path(&grid, &cv_opts)?;
        // validation error in the same normalized frame the penalty
        // lives in, so every observable counts on a common scale
        let n_val = val_end - val_start;
        let mut f0 = features.rows(val_start, n_val).into_owned();
        let mut f1 = features.rows(val_start + lag, n_val).into_owned();
        for row in 0..n_val {
            for (col, s) in scales.iter().enumerate() {
                f0[(row, col)] /= s;
                f1[(row, col)] /= s;
            }
        }
        n_scored += n_val;
        for (gi, sol) in path.iter().enumerate() {
            let resid = &f0 * sol - &f1;
            errors[gi] += resid.norm_squared();
        }
    }
    for e in errors.iter_mut() {
        *e /= n_scored.max(1) as f64;
    }
    // argmin; on ties keep the larger c̃ (earlier in the descending grid)
    let mut best = 0usize;
    for i in 1..n_grid {
        if errors[i] < errors[best] {
            best = i;
        }
    }
    Ok(CvReport {
        chosen_c: grid[best],
        grid,
        mean_errors: errors,
    })
}

/// Robust EDMD with cross-validated c̃ on the same features. `dt` is the
/// sample spacing of the underlying trajectory; the fitted operator
/// advances lag·dt per application.
pub fn robust_edmd_cv(
    features: &DMatrix<f64>,
    lag: usize,
    dictionary: &Dictionary,
    dt: f64,
    opts: &LassoOptions,
) -> Result<(KoopmanModel, CvReport)> {
    let report = cross_validate_c(features, lag, 5, 20, opts)?;
    let gram = GramPair::from_features_lagged(features, lag)?;
    let model = robust_edmd(&gram, dictionary, dt * lag as f64, report.chosen_c, opts)?;
    Ok((model, report))
}

// ---------------------------------------------------------------------------
// Spectrum
// ---------------------------------------------------------------------------

/// Eigenstructure of a Koopman model. Continuous eigenvalues are
/// λ_c = ln(λ_d)/dt on the principal branch; discrete eigenvalues with
/// |λ_d| below [`NEGLIGIBLE_EIGENVALUE`] are flagged (their λ_c carries a
/// −∞ real part) and excluded from the dominance order.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub discrete: Vec<C64>,
    pub continuous: Vec<C64>,
    pub eigenvectors: DMatrix<C64>,
    /// Indices into the eigenvalue lists, |λ_d| descending, ties broken by
    /// ascending |Im λ_c|; flagged eigenvalues are absent.
    pub dominance: Vec<usize>,
    pub flagged: Vec<bool>,
    pub dt: f64,
}

/// Eigendecomposition of the operator matrix.
pub fn spectrum(model: &KoopmanModel) -> Result<Spectrum> {
    if model.k_matrix.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("operator matrix contains non-finite entries"));
    }
    let eig = linalg::eig(&model.k_matrix)?;
    let dt = model.dt;
    let mut continuous = Vec::with_capacity(eig.values.len());
    let mut flagged = Vec::with_capacity(eig.values.len());
    for lam in &eig.values {
        let mag = lam.norm();
        if mag < NEGLIGIBLE_EIGENVALUE {
            continuous.push(C64::new(f64::NEG_INFINITY, 0.0));
            flagged.push(true);
        } else {
            continuous.push(C64::new(mag.ln() / dt, lam.arg() / dt));
            flagged.push(false);
        }
    }
    let mut dominance: Vec<usize> = (0..eig.values.len()).filter(|&i| !flagged[i]).collect();
    dominance.sort_by(|&i, &j| {
        eig.values[j]
            .norm()
            .total_cmp(&eig.values[i].norm())
            .then_with(|| continuous[i].im.abs().total_cmp(&continuous[j].im.abs()))
    });
    Ok(Spectrum {
        discrete: eig.values,
        continuous,
        eigenvectors: eig.vectors,
        dominance,
        flagged,
        dt,
    })
}

impl Spectrum {
    /// Continuous eigenvalues ordered closest-to-jω-axis first
    /// (|Re λ_c| ascending), the ordering used for comparisons against a
    /// reference linearization.
    pub fn continuous_by_jw_distance(&self) -> Vec<C64> {
        let mut vals: Vec<C64> = self
            .continuous
            .iter()
            .zip(&self.flagged)
            .filter(|(_, f)| !**f)
            .map(|(v, _)| *v)
            .collect();
        sort_by_jw_distance(&mut vals);
        vals
    }

    /// Like [`Self::continuous_by_jw_distance`] but restricted to genuine
    /// oscillatory modes: |Im λ_c| above `min_frequency` (rad/s), below
    /// 90% of the Nyquist rate π/dt (negative-real discrete eigenvalues
    /// land exactly on the Nyquist line and are sampling artifacts, not
    /// modes), and present together with their conjugate partner.
    pub fn oscillatory_by_jw_distance(&self, min_frequency: f64) -> Vec<C64> {
        let guard = 0.9 * std::f64::consts::PI / self.dt;
        let candidates: Vec<C64> = self
            .continuous
            .iter()
            .zip(&self.flagged)
            .filter(|(v, f)| !**f && v.im.abs() > min_frequency && v.im.abs() < guard)
            .map(|(v, _)| *v)
            .collect();
        let mut vals: Vec<C64> = candidates
            .iter()
            .filter(|v| candidates.iter().any(|w| *w == v.conj()))
            .copied()
            .collect();
        sort_by_jw_distance(&mut vals);
        vals
    }

    /// Discrete eigenvalues in dominance order.
    pub fn dominant_discrete(&self) -> Vec<C64> {
        self.dominance.iter().map(|&i| self.discrete[i]).collect()
    }
}

pub(crate) fn sort_by_jw_distance(vals: &mut [C64]) {
    vals.sort_by(|a, b| {
        a.re.abs()
            .total_cmp(&b.re.abs())
            .then_with(|| a.im.abs().total_cmp(&b.im.abs()))
            .then_with(|| b.im.total_cmp(&a.im))
            .then_with(|| a.re.total_cmp(&b.re))
    });
}

/// Mean matched distance (rad/s) between the `n_dominant` continuous
/// eigenvalues of `spec` closest to the jω axis and the reference list,
/// under an optimal one-to-one (Hungarian) assignment. Order-invariant in
/// both arguments.
pub fn mode_error(spec: &Spectrum, reference: &[C64], n_dominant: usize) -> Result<f64> {
    let identified = spec.continuous_by_jw_distance();
    mode_error_lists(&identified, reference, n_dominant)
}

/// [`mode_error`] on raw eigenvalue lists.
pub fn mode_error_lists(identified: &[C64], reference: &[C64], n_dominant: usize) -> Result<f64> {
    if identified.is_empty() || reference.is_empty() {
        return Err(Error::invalid("mode_error: empty eigenvalue list"));
    }
    if n_dominant == 0 {
        return Err(Error::invalid("mode_error: n_dominant must be >= 1"));
    }
    if n_dominant > identified.len() || n_dominant > reference.len() {
        return Err(Error::invalid(format!(
            "mode_error: n_dominant = {n_dominant} exceeds list lengths ({}, {})",
            identified.len(),
            reference.len()
        )));
    }
    let mut ident = identified.to_vec();
    sort_by_jw_distance(&mut ident);
    let mut refs = reference.to_vec();
    sort_by_jw_distance(&mut refs);
    let cost = DMatrix::from_fn(n_dominant, n_dominant, |i, j| (ident[i] - refs[j]).norm());
    let (_, total) = assignment::min_cost_assignment(&cost)?;
    Ok(total / n_dominant as f64)
}

// ---------------------------------------------------------------------------
// Estimator configuration (shared by predictor and harness)
// ---------------------------------------------------------------------------

/// Which operator estimator to run, in config-file form.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EstimatorSpec {
    Edmd {
        #[serde(default)]
        ridge: f64,
    },
    Robust {
        /// Fixed c̃, or cross-validated when absent.
        #[serde(default)]
        c: Option<f64>,
    },
}

impl Default for EstimatorSpec {
    fn default() -> Self {
        EstimatorSpec::Robust { c: None }
    }
}

impl EstimatorSpec {
    /// Fit a Koopman model on a lifted feature matrix whose rows are
    /// `dt`-spaced; pairs are taken at the given lag and the model's
    /// effective step is lag·dt.
    pub fn fit(
        &self,
        features: &DMatrix<f64>,
        dictionary: &Dictionary,
        dt: f64,
        lag: usize,
    ) -> Result<KoopmanModel> {
        let opts = LassoOptions::default();
        let dt_eff = dt * lag as f64;
        match self {
            EstimatorSpec::Edmd { ridge } => {
                let gram = GramPair::from_features_lagged(features, lag)?;
                edmd(&gram, dictionary, dt_eff, *ridge)
            }
            EstimatorSpec::Robust { c: Some(c) } => {
                let gram = GramPair::from_features_lagged(features, lag)?;
                robust_edmd(&gram, dictionary, dt_eff, *c, &opts)
            }
            EstimatorSpec::Robust { c: None } => {
                robust_edmd_cv(features, lag, dictionary, dt, &opts).map(|(m, _)| m)
            }
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            EstimatorSpec::Edmd { .. } => "edmd",
            EstimatorSpec::Robust { .. } => "robust",
        }
    }
}

/// One-step feature-space residual ‖F₀·K − F₁‖_F of a fitted model on a
/// feature matrix (diagnostic; also a persistence-of-excitation hint when
/// compared across dictionary sizes).
pub fn feature_residual(model: &KoopmanModel, features: &DMatrix<f64>) -> f64 {
    let m = features.nrows() - 1;
    let f0 = features.rows(0, m);
    let f1 = features.rows(1, m);
    (f0 * &model.k_matrix - f1).norm()
}

pub use crate::lasso::kkt_violation;
