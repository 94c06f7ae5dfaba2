//! Lifted linear prediction: roll the operator in feature space,
//! zₙ = z₀·Kⁿ, and project back with the least-squares matrix C from
//! min_C Σᵢ ‖xᵢ − C·Ψ(xᵢ)‖₂².
//!
//! The default roll-out never re-lifts: the iterate stays in feature space
//! for the whole horizon, which makes prediction a semigroup (a steps then
//! b steps equals a+b steps exactly). A re-lifting variant (project to
//! state space and lift again every step) is available and genuinely
//! different on nonlinear dictionaries.

use nalgebra::{DMatrix, DVector, RowDVector};
use serde::{Deserialize, Serialize};

use crate::dictionary::{Dictionary, DictionarySpec};
use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::linalg;
use crate::operator::{EstimatorSpec, KoopmanModel};

const PROJECTION_RIDGE: f64 = 1e-12;
const ERROR_EPS: f64 = 1e-12;

// ---------------------------------------------------------------------------
// Projection fit
// ---------------------------------------------------------------------------

/// Least-squares projection matrix for explicit feature/state matrices:
/// minimizes ‖F·Cᵀ − X‖_F via the ridge-stabilized normal equations.
/// Returns (C, Frobenius residual).
pub fn fit_projection_features(
    features: &DMatrix<f64>,
    states: &DMatrix<f64>,
    ridge: f64,
) -> Result<(DMatrix<f64>, f64)> {
    if features.nrows() != states.nrows() {
        return Err(Error::invalid(
            "features and states must have the same number of rows",
        ));
    }
    let gram = features.transpose() * features;
    let rhs = features.transpose() * states;
    let ct = linalg::solve_spd(&gram, &rhs, ridge).ok_or_else(|| {
        Error::numerical(format!(
            "projection fit failed: feature Gram not positive definite even with ridge {ridge:.1e} (condition estimate {:.3e})",
            linalg::condition_estimate(&gram)
        ))
    })?;
    let residual = (features * &ct - states).norm();
    Ok((ct.transpose(), residual))
}

/// Projection matrix for a dictionary over a trajectory (Eq-style
/// objective on the trajectory's own samples).
pub fn fit_projection(dict: &Dictionary, traj: &Trajectory) -> Result<(DMatrix<f64>, f64)> {
    let features = dict.lift_trajectory(traj)?;
    fit_projection_features(&features, traj.data(), PROJECTION_RIDGE)
}

// ---------------------------------------------------------------------------
// Predictor
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RolloutMode {
    /// Pure feature-space iteration zₙ = z₀Kⁿ (default).
    Lifted,
    /// Project to state space and re-lift every step; differs from
    /// `Lifted` whenever the dictionary is nonlinear.
    Relift,
}

/// A fitted Koopman model plus its state-reconstruction matrix.
#[derive(Debug, Clone)]
pub struct Predictor {
    pub model: KoopmanModel,
    /// n×K projection; x̂ = C·z.
    pub projection: DMatrix<f64>,
    /// Fit residual of the projection problem.
    pub projection_residual: f64,
}

impl Predictor {
    /// Fit the projection for `model` on a training trajectory.
    pub fn fit(model: KoopmanModel, traj: &Trajectory) -> Result<Self> {
        let (projection, projection_residual) = fit_projection(&model.dictionary, traj)?;
        Ok(Self {
            model,
            projection,
            projection_residual,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.projection.nrows()
    }

    /// Ψ(x) as a row vector (the lifted iterate).
    pub fn lift_state(&self, x: &DVector<f64>) -> Result<RowDVector<f64>> {
        Ok(self.model.dictionary.lift(x)?.transpose())
    }

    /// One feature-space step z ← z·K.
    pub fn step_lifted(&self, z: &RowDVector<f64>) -> RowDVector<f64> {
        z * &self.model.k_matrix
    }

    /// Project a lifted iterate back to state space.
    pub fn project_lifted(&self, z: &RowDVector<f64>) -> DVector<f64> {
        &self.projection * z.transpose()
    }

    /// Roll the predictor `n_steps` past `x0`; the result has n_steps + 1
    /// samples at the model's dt, starting at time `t0`.
    pub fn predict_from(&self, x0: &DVector<f64>, t0: f64, n_steps: usize) -> Result<Trajectory> {
        self.predict_with_mode(x0, t0, n_steps, RolloutMode::Lifted)
    }

    /// As [`Self::predict_from`] with t0 = 0.
    pub fn predict(&self, x0: &DVector<f64>, n_steps: usize) -> Result<Trajectory> {
        self.predict_from(x0, 0.0, n_steps)
    }

    pub fn predict_with_mode(
        &self,
        x0: &DVector<f64>,
        t0: f64,
        n_steps: usize,
        mode: RolloutMode,
    ) -> Result<Trajectory> {
        let n = self.state_dim();
        if x0.len() != n {
            return Err(Error::invalid(format!(
                "x0 has dimension {}, predictor expects {n}",
                x0.len()
            )));
        }
        let mut data = DMatrix::zeros(n_steps + 1, n);
        let mut z = self.lift_state(x0)?;
        let x_hat = self.project_lifted(&z);
        data.row_mut(0).copy_from(&x_hat.transpose());
        for step in 1..=n_steps {
            z = match mode {
                RolloutMode::Lifted => self.step_lifted(&z),
                RolloutMode::Relift => {
                    let x_prev = data.row(step - 1).transpose();
                    let lifted = self.lift_state(&x_prev).map_err(|_| {
                        Error::numerical(format!(
                            "re-lift failed at step {step}: projected state non-finite"
                        ))
                    })?;
                    self.step_lifted(&lifted)
                }
            };
            if z.iter().any(|v| !v.is_finite()) {
                return Err(Error::numerical(format!(
                    "lifted iterate became non-finite at step {step} (unstable operator)"
                )));
            }
            let x_hat = self.project_lifted(&z);
            data.row_mut(step).copy_from(&x_hat.transpose());
        }
        Trajectory::new(t0, self.model.dt, data)
    }
}

// ---------------------------------------------------------------------------
// Error metrics
// ---------------------------------------------------------------------------

/// Per-state forecast errors over a horizon.
///
/// `relative`: ‖x̂ − x‖₂ / (‖x − x̄‖₂ + ε) with x̄ the state's training
/// mean — scale-invariant and AC-referenced, matching the noise module's
/// SNR convention. `plain`: ‖x̂ − x‖₂ / (‖x‖₂ + ε). Both are reported.
pub fn forecast_errors(
    predicted: &DMatrix<f64>,
    truth: &DMatrix<f64>,
    train_means: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let n = predicted.ncols();
    let mut relative = Vec::with_capacity(n);
    let mut plain = Vec::with_capacity(n);
    for j in 0..n {
        let mut err2 = 0.0;
        let mut dev2 = 0.0;
        let mut mag2 = 0.0;
        for i in 0..predicted.nrows() {
            let e = predicted[(i, j)] - truth[(i, j)];
            err2 += e * e;
            let d = truth[(i, j)] - train_means[j];
            dev2 += d * d;
            mag2 += truth[(i, j)] * truth[(i, j)];
        }
        relative.push(err2.sqrt() / (dev2.sqrt() + ERROR_EPS));
        plain.push(err2.sqrt() / (mag2.sqrt() + ERROR_EPS));
    }
    (relative, plain)
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

// ---------------------------------------------------------------------------
// Rolling forecasts
// ---------------------------------------------------------------------------

fn default_lag() -> usize {
    1
}

/// Everything needed to fit a predictor on a data window.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ForecastSettings {
    #[serde(default)]
    pub dictionary: DictionarySpec,
    #[serde(default)]
    pub estimator: EstimatorSpec,
    /// Snapshot-pair lag for the operator fit; the fitted predictor steps
    /// lag·dt per application and forecasts on that grid.
    #[serde(default = "default_lag")]
    pub lag: usize,
    /// Start the forecast from a 5-sample moving average of the window
    /// tail instead of the raw (noisy) last sample.
    #[serde(default)]
    pub denoise_x0: bool,
}

impl Default for ForecastSettings {
    fn default() -> Self {
        Self {
            dictionary: DictionarySpec::default(),
            estimator: EstimatorSpec::default(),
            lag: 1,
            denoise_x0: false,
        }
    }
}

impl ForecastSettings {
    /// Fit dictionary, operator, and projection on one training window.
    pub fn fit(&self, window: &Trajectory) -> Result<Predictor> {
        let dict = self.dictionary.build(window)?;
        let k = dict.size();
        if self.lag == 0 {
            return Err(Error::invalid("lag must be >= 1"));
        }
        let m = window.n_samples().saturating_sub(self.lag);
        if m < k {
            return Err(Error::invalid(format!(
                "window provides {m} snapshot pairs for a dictionary of size {k}; \
                 use a smaller dictionary or a longer window"
            )));
        }
        let features = dict.lift_trajectory(window)?;
        let model = self.estimator.fit(&features, &dict, window.dt(), self.lag)?;
        Predictor::fit(model, window)
    }

    /// Forecast start state: the window's last sample, optionally denoised
    /// by a moving average over the final 5 samples.
    pub fn start_state(&self, window: &Trajectory) -> DVector<f64> {
        let n = window.n_samples();
        if !self.denoise_x0 {
            return window.state(n - 1);
        }
        let span = n.min(5);
        let mut acc = DVector::zeros(window.dim());
        for i in (n - span)..n {
            acc += window.state(i);
        }
        acc / span as f64
    }
}

/// Forecast of one window, with errors against clean truth when provided.
#[derive(Debug, Clone)]
pub struct ForecastReport {
    /// Absolute start time of the training window (s).
    pub window_start_s: f64,
    /// Forecast horizon (s).
    pub horizon_s: f64,
    pub predicted: Trajectory,
    pub truth: Option<Trajectory>,
    pub per_state_relative_error: Vec<f64>,
    pub mean_relative_error: f64,
    pub per_state_plain_error: Vec<f64>,
    pub mean_plain_error: f64,
}

fn report_for_window(
    settings: &ForecastSettings,
    noisy: &Trajectory,
    clean: Option<&Trajectory>,
    start: usize,
    train_steps: usize,
    horizon_steps: usize,
) -> Result<ForecastReport> {
    let lag = settings.lag.max(1);
    if horizon_steps % lag != 0 {
        return Err(Error::invalid(format!(
            "horizon of {horizon_steps} samples is not a whole number of lag-{lag} steps"
        )));
    }
    let pred_steps = horizon_steps / lag;
    let window = noisy.slice(start, start + train_steps + 1)?;
    let predictor = settings.fit(&window)?;
    let x0 = settings.start_state(&window);
    let forecast_t0 = window.t0() + window.duration();
    // the predictor advances lag·dt per step, so the forecast lives on
    // that grid and the truth is strided to match
    let predicted = predictor.predict_from(&x0, forecast_t0, pred_steps)?;

    let truth = match clean {
        Some(c) => Some(
            c.slice(start + train_steps, start + train_steps + horizon_steps + 1)?
                .stride(lag)?,
        ),
        None => None,
    };
    let (rel, plain) = match &truth {
        Some(t) => {
            // error over the horizon proper (the initial sample is the
            // start-state estimate, not a forecast)
            let pred_h = predicted.data().rows(1, pred_steps).into_owned();
            let truth_h = t.data().rows(1, pred_steps).into_owned();
            let means: Vec<f64> = (0..window.dim())
                .map(|j| window.data().column(j).mean())
                .collect();
            forecast_errors(&pred_h, &truth_h, &means)
        }
        None => (
            vec![f64::NAN; noisy.dim()],
            vec![f64::NAN; noisy.dim()],
        ),
    };
    Ok(ForecastReport {
        window_start_s: window.t0(),
        horizon_s: horizon_steps as f64 * noisy.dt(),
        predicted,
        truth,
        mean_relative_error: mean(&rel),
        per_state_relative_error: rel,
        mean_plain_error: mean(&plain),
        per_state_plain_error: plain,
    })
}

/// Fit-and-forecast over consecutive windows (stride = horizon): train on
/// `train_window` seconds, predict the next `horizon` seconds, repeat.
/// `clean` supplies the ground truth for error reporting.
pub fn rolling_forecast(
    settings: &ForecastSettings,
    noisy: &Trajectory,
    clean: Option<&Trajectory>,
    train_window_s: f64,
    horizon_s: f64,
) -> Result<Vec<ForecastReport>> {
    if let Some(c) = clean {
        if c.n_samples() != noisy.n_samples() || c.dim() != noisy.dim() {
            return Err(Error::invalid(
                "clean and noisy trajectories must be congruent",
            ));
        }
    }
    let dt = noisy.dt();
    let train_steps = (train_window_s / dt).round() as usize;
    let horizon_steps = (horizon_s / dt).round() as usize;
    if horizon_steps == 0 {
        return Ok(Vec::new());
    }
    if train_steps < 2 {
        return Err(Error::invalid(format!(
            "training window of {train_window_s} s is too short at dt = {dt} s"
        )));
    }
    if train_window_s + horizon_s > noisy.duration() + 0.5 * dt {
        return Err(Error::invalid(format!(
            "train window + horizon ({} s) exceeds trajectory duration ({} s)",
            train_window_s + horizon_s,
            noisy.duration()
        )));
    }
    let mut reports = Vec::new();
    let mut start = 0usize;
    while start + train_steps + horizon_steps < noisy.n_samples() {
        reports.push(report_for_window(
            settings,
            noisy,
            clean,
            start,
            train_steps,
            horizon_steps,
        )?);
        start += horizon_steps;
    }
    Ok(reports)
}

/// One row of the training-length sweep.
#[derive(Debug, Clone, Copy)]
pub struct LengthSweepPoint {
    pub train_length_s: f64,
    pub mean_relative_error: f64,
    pub mean_plain_error: f64,
}

/// Fit on growing prefixes of the noisy record and report the horizon
/// forecast error of each against the clean truth.
pub fn error_vs_training_length(
    settings: &ForecastSettings,
    noisy: &Trajectory,
    clean: &Trajectory,
    lengths_s: &[f64],
    horizon_s: f64,
) -> Result<Vec<LengthSweepPoint>> {
    if clean.n_samples() != noisy.n_samples() || clean.dim() != noisy.dim() {
        return Err(Error::invalid(
            "clean and noisy trajectories must be congruent",
        ));
    }
    if lengths_s.is_empty() {
        return Err(Error::invalid("no training lengths given"));
    }
    let dt = noisy.dt();
    let horizon_steps = (horizon_s / dt).round() as usize;
    if horizon_steps == 0 {
        return Err(Error::invalid("horizon must cover at least one step"));
    }
    let max_len = lengths_s.iter().fold(0.0_f64, |m, l| m.max(*l));
    if max_len + horizon_s > noisy.duration() + 0.5 * dt {
        return Err(Error::invalid(format!(
            "longest training length + horizon ({} s) exceeds trajectory duration ({} s)",
            max_len + horizon_s,
            noisy.duration()
        )));
    }
    let mut out = Vec::with_capacity(lengths_s.len());
    for &len in lengths_s {
        let train_steps = (len / dt).round() as usize;
        if train_steps < 2 {
            return Err(Error::invalid(format!(
                "training length {len} s is too short at dt = {dt} s"
            )));
        }
        let report = report_for_window(settings, noisy, Some(clean), 0, train_steps, horizon_steps)?;
        out.push(LengthSweepPoint {
            train_length_s: len,
            mean_relative_error: report.mean_relative_error,
            mean_plain_error: report.mean_plain_error,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{simulate, DynamicsModel};
    use crate::operator::{edmd, GramPair};
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;
    use rand::prelude::*;
    use rand_chacha::ChaCha12Rng;

    fn linear_trajectory() -> (DynamicsModel, Trajectory) {
        let th = 0.3_f64;
        let r = 0.995_f64;
        let a = DMatrix::from_row_slice(
            2,
            2,
            &[r * th.cos(), -r * th.sin(), r * th.sin(), r * th.cos()],
        );
        let model = DynamicsModel::linear_map(a).unwrap();
        let traj = simulate(&model, &DVector::from_vec(vec![1.0, 0.2]), 0.01, 400, &[]).unwrap();
        (model, traj)
    }

    fn linear_predictor() -> (DynamicsModel, Trajectory, Predictor) {
        let (model, traj) = linear_trajectory();
        let dict = Dictionary::state_plus_constant(2).unwrap();
        let features = dict.lift_trajectory(&traj).unwrap();
        let gram = GramPair::from_features(&features).unwrap();
        let koopman = edmd(&gram, &dict, 0.01, 0.0).unwrap();
        let predictor = Predictor::fit(koopman, &traj).unwrap();
        (model, traj, predictor)
    }

    #[test]
    fn projection_with_coordinates_reconstructs_states() {
        let (_, traj) = linear_trajectory();
        let dict = Dictionary::monomials(2, 2).unwrap();
        let (c, residual) = fit_projection(&dict, &traj).unwrap();
        assert!(residual < 1e-10, "residual {residual}");
        for i in (0..traj.n_samples()).step_by(37) {
            let x = traj.state(i);
            let back = &c * dict.lift(&x).unwrap();
            assert!((back - &x).norm() < 1e-8);
        }
    }

    #[test]
    fn constant_feature_projection_is_the_mean() {
        // dictionary {1} alone: C must equal the constant state v
        let v = [2.5, -1.25];
        let features = DMatrix::from_element(20, 1, 1.0);
        let states = DMatrix::from_fn(20, 2, |_, j| v[j]);
        let (c, residual) = fit_projection_features(&features, &states, 1e-12).unwrap();
        assert_relative_eq!(c[(0, 0)], v[0], epsilon = 1e-9);
        assert_relative_eq!(c[(1, 0)], v[1], epsilon = 1e-9);
        assert!(residual < 1e-9);
    }

    #[test]
    fn projection_matches_qr_oracle() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let data = DMatrix::from_fn(120, 2, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        let traj = Trajectory::new(0.0, 0.01, data).unwrap();
        let dict = Dictionary::monomials(2, 2).unwrap();
        let (c, _) = fit_projection(&dict, &traj).unwrap();

        // independent QR route: thin QR of F, back-substitute R Cᵀ = QᵀX
        let features = dict.lift_trajectory(&traj).unwrap();
        let qr = features.clone().qr();
        let q = qr.q();
        let r = qr.r();
        let rhs = q.transpose() * traj.data();
        let ct = r
            .solve_upper_triangular(&rhs)
            .expect("R is invertible for this data");
        let c_qr = ct.transpose();
        assert!((&c - &c_qr).abs().max() < 1e-8);
    }

    #[test]
    fn zero_step_prediction_recovers_x0() {
        let (_, traj, predictor) = linear_predictor();
        let x0 = traj.state(0);
        let pred = predictor.predict(&x0, 0).unwrap();
        assert_eq!(pred.n_samples(), 1);
        assert!((pred.state(0) - &x0).norm() < 1e-8);
    }

    #[test]
    fn linear_forecast_matches_simulator() {
        let (model, traj, predictor) = linear_predictor();
        let x0 = traj.state(0);
        let truth = simulate(&model, &x0, 0.01, 100, &[]).unwrap();
        let pred = predictor.predict(&x0, 100).unwrap();
        let rel = (pred.data() - truth.data()).norm() / truth.data().norm();
        assert!(rel < 1e-6, "relative forecast error {rel}");
    }

    #[test]
    fn long_rollout_stays_bounded() {
        let (_, _, predictor) = linear_predictor();
        let mut z = predictor
            .lift_state(&DVector::from_vec(vec![1.0, 0.2]))
            .unwrap();
        let z0_norm = z.norm();
        for _ in 0..10_000 {
            z = predictor.step_lifted(&z);
        }
        assert!(z.iter().all(|v| v.is_finite()));
        assert!(z.norm() <= 100.0 * z0_norm, "rollout grew to {}", z.norm());
    }

    #[test]
    fn rollout_is_a_semigroup() {
        let (_, traj, predictor) = linear_predictor();
        let x0 = traj.state(0);
        let (a_steps, b_steps) = (40, 25);
        let whole = predictor.predict(&x0, a_steps + b_steps).unwrap();

        // a steps, then continue b more from the lifted iterate
        let mut z = predictor.lift_state(&x0).unwrap();
        for _ in 0..a_steps {
            z = predictor.step_lifted(&z);
        }
        for step in 0..=b_steps {
            let x = predictor.project_lifted(&z);
            let expected = whole.state(a_steps + step);
            assert_eq!(x, expected, "mismatch at continuation step {step}");
            z = predictor.step_lifted(&z);
        }
    }

    #[test]
    fn relift_mode_differs_on_nonlinear_dictionary() {
        let model = DynamicsModel::VanDerPol { mu: 1.0 };
        let traj = simulate(&model, &DVector::from_vec(vec![1.2, 0.0]), 0.01, 600, &[]).unwrap();
        let settings = ForecastSettings {
            dictionary: DictionarySpec::Monomials { degree: 2 },
            estimator: EstimatorSpec::Edmd { ridge: 0.0 },
            lag: 1,
            denoise_x0: false,
        };
        let predictor = settings.fit(&traj).unwrap();
        let x0 = traj.state(0);
        let lifted = predictor
            .predict_with_mode(&x0, 0.0, 50, RolloutMode::Lifted)
            .unwrap();
        let relift = predictor
            .predict_with_mode(&x0, 0.0, 50, RolloutMode::Relift)
            .unwrap();
        let diff = (lifted.data() - relift.data()).abs().max();
        assert!(diff > 1e-12, "modes unexpectedly identical");
    }

    #[test]
    fn one_step_error_is_projected_feature_error() {
        let (_, traj, predictor) = linear_predictor();
        assert!(predictor.projection_residual < 1e-10);
        let x0 = traj.state(10);
        let x1 = traj.state(11);
        let pred = predictor.predict(&x0, 1).unwrap();
        let state_err = &x1 - pred.state(1);
        let dict = &predictor.model.dictionary;
        let feature_err = dict.lift(&x1).unwrap().transpose()
            - predictor.lift_state(&x0).unwrap() * &predictor.model.k_matrix;
        let projected = &predictor.projection * feature_err.transpose();
        assert!((state_err - projected).norm() < 1e-9);
    }

    #[test]
    fn forecast_errors_are_scale_invariant() {
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let pred = DMatrix::from_fn(30, 2, |_, _| rng.random::<f64>());
        let truth = DMatrix::from_fn(30, 2, |_, _| rng.random::<f64>());
        let means = [0.3, -0.2];
        let (rel, _) = forecast_errors(&pred, &truth, &means);
        let s = 37.5;
        let (rel_scaled, _) = forecast_errors(&(&pred * s), &(&truth * s), &[means[0] * s, means[1] * s]);
        for (a, b) in rel.iter().zip(&rel_scaled) {
            assert_relative_eq!(a, b, max_relative = 1e-9);
        }
    }

    #[test]
    fn rolling_forecast_on_clean_linear_data_is_exact() {
        let (_, traj) = linear_trajectory();
        let settings = ForecastSettings {
            dictionary: DictionarySpec::StatePlusConstant,
            estimator: EstimatorSpec::Edmd { ridge: 0.0 },
            lag: 1,
            denoise_x0: false,
        };
        let reports = rolling_forecast(&settings, &traj, Some(&traj), 1.0, 0.5).unwrap();
        assert!(!reports.is_empty());
        for r in &reports {
            assert!(
                r.mean_relative_error < 1e-6,
                "window at {} s: error {}",
                r.window_start_s,
                r.mean_relative_error
            );
        }
    }

    #[test]
    fn rolling_forecast_window_count_and_shapes() {
        let (_, traj) = linear_trajectory(); // 401 samples at 0.01 s
        let settings = ForecastSettings {
            dictionary: DictionarySpec::StatePlusConstant,
            estimator: EstimatorSpec::Edmd { ridge: 0.0 },
            lag: 1,
            denoise_x0: false,
        };
        let reports = rolling_forecast(&settings, &traj, Some(&traj), 2.0, 1.0).unwrap();
        // starts at 0 and 1.0 s: 0+200+100 < 401, 100+200+100 < 401, 200+... = 500 ≥ 401
        assert_eq!(reports.len(), 2);
        for (i, r) in reports.iter().enumerate() {
            assert_relative_eq!(r.window_start_s, i as f64, epsilon = 1e-12);
            assert_eq!(r.predicted.n_samples(), 101);
        }
    }

    #[test]
    fn zero_horizon_gives_empty_report_list() {
        let (_, traj) = linear_trajectory();
        let settings = ForecastSettings::default();
        let reports = rolling_forecast(&settings, &traj, None, 1.0, 0.0).unwrap();
        assert!(reports.is_empty());
    }

    #[test]
    fn window_shorter_than_dictionary_is_advised() {
        let (_, traj) = linear_trajectory();
        let settings = ForecastSettings {
            dictionary: DictionarySpec::Monomials { degree: 4 }, // K = 15
            estimator: EstimatorSpec::Edmd { ridge: 0.0 },
            lag: 1,
            denoise_x0: false,
        };
        let window = traj.slice(0, 11).unwrap(); // 10 pairs < 15
        let err = settings.fit(&window).unwrap_err();
        let msg = err.to_string();
        assert!(
            msg.contains("smaller dictionary") || msg.contains("longer window"),
            "{msg}"
        );
    }

    #[test]
    fn length_sweep_is_consistent_with_single_window() {
        let (_, traj) = linear_trajectory();
        let settings = ForecastSettings {
            dictionary: DictionarySpec::StatePlusConstant,
            estimator: EstimatorSpec::Edmd { ridge: 0.0 },
            lag: 1,
            denoise_x0: false,
        };
        let lengths = [1.0, 2.0, 3.0];
        let sweep =
            error_vs_training_length(&settings, &traj, &traj, &lengths, 1.0).unwrap();
        assert_eq!(sweep.len(), 3);
        for p in &sweep {
            assert!(p.mean_relative_error.is_finite());
        }
        // non-increasing on noiseless data (tolerates fp jitter)
        for w in sweep.windows(2) {
            assert!(
                w[1].mean_relative_error <= w[0].mean_relative_error + 1e-9,
                "errors increased: {} -> {}",
                w[0].mean_relative_error,
                w[1].mean_relative_error
            );
        }
        // the longest prefix must agree exactly with a direct window fit
        let report = report_for_window(&settings, &traj, Some(&traj), 0, 300, 100).unwrap();
        assert_eq!(sweep[2].mean_relative_error, report.mean_relative_error);
    }

    #[test]
    fn denoised_start_state_is_tail_average() {
        let (_, traj) = linear_trajectory();
        let settings = ForecastSettings {
            denoise_x0: true,
            ..ForecastSettings::default()
        };
        let x0 = settings.start_state(&traj);
        let n = traj.n_samples();
        let mut expected = DVector::zeros(2);
        for i in (n - 5)..n {
            expected += traj.state(i);
        }
        expected /= 5.0;
        assert_eq!(x0, expected);
    }
}
