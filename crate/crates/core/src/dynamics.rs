//! Ground-truth dynamical systems and trajectory generation.
//!
//! Three model families are provided:
//!
//! - `LinearMap`: the discrete iteration x⁺ = A·x, iterated exactly.
//! - `VanDerPol`: ẋ₁ = x₂, ẋ₂ = μ(1−x₁²)x₂ − x₁.
//! - `SwingNetwork`: classical multi-machine swing equations on a reduced
//!   admittance network, state (δ₁…δ_n, ω₁…ω_n):
//!
//!   ```text
//!   δ̇ᵢ = ωᵢ
//!   Mᵢ ω̇ᵢ = Pmᵢ − Σⱼ EᵢEⱼ|Yᵢⱼ| sin(δᵢ − δⱼ − φᵢⱼ) − Dᵢ ωᵢ
//!   ```
//!
//! Continuous models are integrated with fixed-step RK4; step boundaries
//! are split at fault apply/clear times so the switched vector field is
//! never integrated across a discontinuity.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Synchronous grid frequency used for per-unit speed conversion.
pub const GRID_HZ: f64 = 60.0;

/// Convert a per-unit generator speed to angular speed in rad/s,
/// ω = 2π·60·ω_g.
pub fn angular_speed_from_pu(omega_pu: f64) -> f64 {
    2.0 * std::f64::consts::PI * GRID_HZ * omega_pu
}

// ---------------------------------------------------------------------------
// Trajectory
// ---------------------------------------------------------------------------

/// A uniformly sampled multivariate time series. Rows are samples, columns
/// are state channels. Absent (missing) entries are stored as NaN; clean
/// trajectories contain no NaN and no infinities.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    t0: f64,
    dt: f64,
    data: DMatrix<f64>,
}

impl Trajectory {
    /// A trajectory with all entries finite.
    pub fn new(t0: f64, dt: f64, data: DMatrix<f64>) -> Result<Self> {
        let traj = Self::with_missing(t0, dt, data)?;
        if traj.has_missing() {
            return Err(Error::invalid(
                "trajectory contains absent entries; use with_missing",
            ));
        }
        Ok(traj)
    }

    /// A trajectory that may contain absent entries (NaN). Infinities are
    /// always rejected.
    pub fn with_missing(t0: f64, dt: f64, data: DMatrix<f64>) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::invalid(format!("dt must be positive, got {dt}")));
        }
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::invalid("trajectory must be non-empty"));
        }
        if data.iter().any(|x| x.is_infinite()) {
            return Err(Error::invalid("trajectory contains infinite entries"));
        }
        if !t0.is_finite() {
            return Err(Error::invalid("t0 must be finite"));
        }
        Ok(Self { t0, dt, data })
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Number of samples (M + 1 for M snapshot pairs).
    pub fn n_samples(&self) -> usize {
        self.data.nrows()
    }

    /// State dimension.
    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    /// Total time span (n_samples − 1)·dt.
    pub fn duration(&self) -> f64 {
        (self.n_samples() - 1) as f64 * self.dt
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.n_samples())
            .map(|i| self.t0 + i as f64 * self.dt)
            .collect()
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    /// State vector at sample `i`.
    pub fn state(&self, i: usize) -> DVector<f64> {
        self.data.row(i).transpose()
    }

    /// Channel `j` as a contiguous vector.
    pub fn channel(&self, j: usize) -> Vec<f64> {
        self.data.column(j).iter().copied().collect()
    }

    pub fn has_missing(&self) -> bool {
        self.data.iter().any(|x| x.is_nan())
    }

    pub fn missing_count(&self) -> usize {
        self.data.iter().filter(|x| x.is_nan()).count()
    }

    /// Sub-trajectory covering samples `[start, end)`; `t0` is shifted so
    /// absolute times are preserved.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.n_samples() {
            return Err(Error::invalid(format!(
                "invalid slice [{start}, {end}) of {} samples",
                self.n_samples()
            )));
        }
        let data = self.data.rows(start, end - start).into_owned();
        Ok(Self {
            t0: self.t0 + start as f64 * self.dt,
            dt: self.dt,
            data,
        })
    }

    /// Index of the first sample at or after time `t` (relative to t0 = 0
    /// absolute seconds).
    pub fn index_at(&self, t: f64) -> usize {
        let idx = ((t - self.t0) / self.dt).ceil();
        idx.max(0.0) as usize
    }

    /// Every `step`-th sample, starting from the first; dt scales by step.
    pub fn stride(&self, step: usize) -> Result<Self> {
        if step == 0 {
            return Err(Error::invalid("stride must be >= 1"));
        }
        if step == 1 {
            return Ok(self.clone());
        }
        let n = (self.n_samples() + step - 1) / step;
        let mut data = DMatrix::zeros(n, self.dim());
        for (r, i) in (0..self.n_samples()).step_by(step).enumerate() {
            data.row_mut(r).copy_from(&self.data.row(i));
        }
        Self::with_missing(self.t0, self.dt * step as f64, data)
    }
}

// ---------------------------------------------------------------------------
// Models
// ---------------------------------------------------------------------------

/// Classical reduced-network swing model. All parameter vectors have one
/// entry per generator; `y_mag`/`y_phase` are the magnitude and phase of
/// the reduced admittance matrix in the sine convention of the module doc.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SwingNetwork {
    pub inertia: Vec<f64>,
    pub damping: Vec<f64>,
    pub mechanical_power: Vec<f64>,
    pub voltage: Vec<f64>,
    pub y_mag: DMatrix<f64>,
    pub y_phase: DMatrix<f64>,
}

impl SwingNetwork {
    pub fn new(
        inertia: Vec<f64>,
        damping: Vec<f64>,
        mechanical_power: Vec<f64>,
        voltage: Vec<f64>,
        y_mag: DMatrix<f64>,
        y_phase: DMatrix<f64>,
    ) -> Result<Self> {
        let n = inertia.len();
        if n == 0 {
            return Err(Error::invalid("swing network needs at least one generator"));
        }
        if damping.len() != n || mechanical_power.len() != n || voltage.len() != n {
            return Err(Error::invalid(
                "swing network parameter vectors must share one length",
            ));
        }
        if y_mag.nrows() != n || y_mag.ncols() != n || y_phase.nrows() != n || y_phase.ncols() != n
        {
            return Err(Error::invalid(format!(
                "admittance matrices must be {n}x{n}"
            )));
        }
        if inertia.iter().any(|m| !(*m > 0.0)) {
            return Err(Error::invalid("inertia coefficients must be positive"));
        }
        if damping.iter().any(|d| !(*d > 0.0)) {
            return Err(Error::invalid("damping coefficients must be positive"));
        }
        let all = inertia
            .iter()
            .chain(&mechanical_power)
            .chain(&voltage)
            .copied()
            .chain(y_mag.iter().copied())
            .chain(y_phase.iter().copied());
        for v in all {
            if !v.is_finite() {
                return Err(Error::invalid("swing network parameters must be finite"));
            }
        }
        Ok(Self {
            inertia,
            damping,
            mechanical_power,
            voltage,
            y_mag,
            y_phase,
        })
    }

    /// Build from a complex reduced admittance matrix `y[i][j] = (re, im)`.
    /// The phase is stored as arg(Y) − π/2 so that the sine form of the
    /// module doc reproduces Pe_i = Σⱼ EᵢEⱼ|Yᵢⱼ| cos(δᵢ − δⱼ − arg Yᵢⱼ).
    pub fn from_complex_admittance(
        inertia: Vec<f64>,
        damping: Vec<f64>,
        mechanical_power: Vec<f64>,
        voltage: Vec<f64>,
        y: &[Vec<(f64, f64)>],
    ) -> Result<Self> {
        let n = inertia.len();
        if y.len() != n || y.iter().any(|row| row.len() != n) {
            return Err(Error::invalid("complex admittance must be square n×n"));
        }
        let mut y_mag = DMatrix::zeros(n, n);
        let mut y_phase = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let (re, im) = y[i][j];
                let mag = (re * re + im * im).sqrt();
                y_mag[(i, j)] = mag;
                y_phase[(i, j)] = if mag > 0.0 {
                    im.atan2(re) - std::f64::consts::FRAC_PI_2
                } else {
                    0.0
                };
            }
        }
        Self::new(inertia, damping, mechanical_power, voltage, y_mag, y_phase)
    }

    /// Three-machine benchmark: a nine-bus network reduced to generator
    /// internal nodes (classical H = 23.64, 6.4, 3.01 s machines on a 60 Hz
    /// base), lightly damped so post-fault oscillations persist for seconds.
    /// Mechanical power is set to the electrical power at the dispatch
    /// angles, so the dispatch point is an exact equilibrium.
    pub fn three_machine() -> Self {
        let omega_s = 2.0 * std::f64::consts::PI * GRID_HZ;
        let h = [23.64, 6.4, 3.01];
        let inertia: Vec<f64> = h.iter().map(|hi| 2.0 * hi / omega_s).collect();
        let damping = vec![0.050, 0.015, 0.010];
        let voltage = vec![1.0566, 1.0502, 1.0170];
        let y = vec![
            vec![(0.846, -2.988), (0.287, 1.513), (0.210, 1.226)],
            vec![(0.287, 1.513), (0.420, -2.724), (0.213, 1.088)],
            vec![(0.210, 1.226), (0.213, 1.088), (0.277, -2.368)],
        ];
        let dispatch = [
            2.2717_f64.to_radians(),
            19.7315_f64.to_radians(),
            13.1664_f64.to_radians(),
        ];
        let mut net =
            Self::from_complex_admittance(inertia, damping, vec![0.0; 3], voltage, &y)
                .expect("three-machine parameters are valid");
        net.mechanical_power = net.electrical_power(&dispatch, &net.y_mag.clone());
        net
    }

    /// Lossless two-machine system with closed-form equilibrium
    /// δ₁ − δ₂ = asin(Pm₁ / (E₁E₂ b)).
    pub fn two_machine(pm: f64, b: f64) -> Result<Self> {
        let y = vec![vec![(0.0, -b), (0.0, b)], vec![(0.0, b), (0.0, -b)]];
        Self::from_complex_admittance(
            vec![0.1, 0.1],
            vec![0.02, 0.02],
            vec![pm, -pm],
            vec![1.0, 1.0],
            &y,
        )
    }

    pub fn n_generators(&self) -> usize {
        self.inertia.len()
    }

    /// Electrical power injected at each generator for rotor angles `delta`,
    /// using the admittance magnitudes in `y_mag`.
    fn electrical_power(&self, delta: &[f64], y_mag: &DMatrix<f64>) -> Vec<f64> {
        let n = self.n_generators();
        let mut pe = vec![0.0; n];
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..n {
                let y = y_mag[(i, j)];
                if y == 0.0 {
                    continue;
                }
                acc += self.voltage[i]
                    * self.voltage[j]
                    * y
                    * (delta[i] - delta[j] - self.y_phase[(i, j)]).sin();
            }
            pe[i] = acc;
        }
        pe
    }

    /// Admittance magnitudes with the fault applied: every entry in the
    /// target bus's row or column is scaled once by `scale`.
    fn faulted_y_mag(&self, target: usize, scale: f64) -> DMatrix<f64> {
        let mut y = self.y_mag.clone();
        let n = self.n_generators();
        for j in 0..n {
            y[(target, j)] *= scale;
        }
        for i in 0..n {
            if i != target {
                y[(i, target)] *= scale;
            }
        }
        y
    }
}

/// A dynamical system the rest of the crate identifies and predicts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum DynamicsModel {
    /// Discrete map x⁺ = A·x.
    LinearMap { matrix: DMatrix<f64> },
    /// Van der Pol oscillator with stiffness parameter μ.
    VanDerPol { mu: f64 },
    /// Multi-machine swing network.
    SwingNetwork(SwingNetwork),
}

impl DynamicsModel {
    pub fn linear_map(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() || matrix.nrows() == 0 {
            return Err(Error::invalid("linear map matrix must be square"));
        }
        if matrix.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("linear map matrix must be finite"));
        }
        Ok(DynamicsModel::LinearMap { matrix })
    }

    pub fn state_dim(&self) -> usize {
        match self {
            DynamicsModel::LinearMap { matrix } => matrix.nrows(),
            DynamicsModel::VanDerPol { .. } => 2,
            DynamicsModel::SwingNetwork(net) => 2 * net.n_generators(),
        }
    }

    /// True for models evolving in continuous time (integrated with RK4).
    pub fn is_continuous(&self) -> bool {
        !matches!(self, DynamicsModel::LinearMap { .. })
    }

    /// Continuous-time vector field ẋ = f(x). `y_mag` overrides the swing
    /// admittance magnitudes during a fault.
    fn vector_field(&self, x: &DVector<f64>, y_mag: Option<&DMatrix<f64>>) -> DVector<f64> {
        match self {
            DynamicsModel::LinearMap { .. } => {
                unreachable!("vector_field is only defined for continuous models")
            }
            DynamicsModel::VanDerPol { mu } => {
                let mut f = DVector::zeros(2);
                f[0] = x[1];
                f[1] = mu * (1.0 - x[0] * x[0]) * x[1] - x[0];
                f
            }
            DynamicsModel::SwingNetwork(net) => {
                let n = net.n_generators();
                let delta: Vec<f64> = (0..n).map(|i| x[i]).collect();
                let pe = net.electrical_power(&delta, y_mag.unwrap_or(&net.y_mag));
                let mut f = DVector::zeros(2 * n);
                for i in 0..n {
                    f[i] = x[n + i];
                    f[n + i] = (net.mechanical_power[i] - pe[i] - net.damping[i] * x[n + i])
                        / net.inertia[i];
                }
                f
            }
        }
    }

    /// Residual whose zero defines an equilibrium: f(x) for flows,
    /// T(x) − x for maps.
    pub fn equilibrium_residual(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            DynamicsModel::LinearMap { matrix } => matrix * x - x,
            _ => self.vector_field(x, None),
        }
    }

    /// Analytic Jacobian of the equilibrium residual at `x`.
    pub fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        match self {
            DynamicsModel::LinearMap { matrix } => {
                matrix - DMatrix::<f64>::identity(matrix.nrows(), matrix.ncols())
            }
            DynamicsModel::VanDerPol { mu } => DMatrix::from_row_slice(
                2,
                2,
                &[
                    0.0,
                    1.0,
                    -1.0 - 2.0 * mu * x[0] * x[1],
                    mu * (1.0 - x[0] * x[0]),
                ],
            ),
            DynamicsModel::SwingNetwork(net) => {
                let n = net.n_generators();
                let mut j = DMatrix::zeros(2 * n, 2 * n);
                for i in 0..n {
                    j[(i, n + i)] = 1.0;
                    j[(n + i, n + i)] = -net.damping[i] / net.inertia[i];
                    for l in 0..n {
                        if l == i {
                            continue;
                        }
                        let coupling = net.voltage[i]
                            * net.voltage[l]
                            * net.y_mag[(i, l)]
                            * (x[i] - x[l] - net.y_phase[(i, l)]).cos();
                        j[(n + i, l)] += coupling / net.inertia[i];
                        j[(n + i, i)] -= coupling / net.inertia[i];
                    }
                }
                j
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Faults
// ---------------------------------------------------------------------------

/// Temporary scaling of the reduced admittance entries touching one bus,
/// active on `[apply_time, clear_time)`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FaultEvent {
    pub apply_time: f64,
    pub clear_time: f64,
    pub target_bus: usize,
    pub admittance_scale: f64,
}

impl FaultEvent {
    pub fn validate(&self, n_buses: usize) -> Result<()> {
        if !(self.apply_time >= 0.0 && self.apply_time < self.clear_time) {
            return Err(Error::invalid(format!(
                "fault times must satisfy 0 <= apply < clear, got [{}, {})",
                self.apply_time, self.clear_time
            )));
        }
        if !(self.admittance_scale >= 0.0) || !self.admittance_scale.is_finite() {
            return Err(Error::invalid("admittance_scale must be >= 0"));
        }
        if self.target_bus >= n_buses {
            return Err(Error::invalid(format!(
                "fault target bus {} out of range (network has {} buses)",
                self.target_bus, n_buses
            )));
        }
        Ok(())
    }
}

struct FaultWindow {
    apply: f64,
    clear: f64,
    y_mag: DMatrix<f64>,
}

fn build_fault_windows(model: &DynamicsModel, faults: &[FaultEvent]) -> Result<Vec<FaultWindow>> {
    if faults.is_empty() {
        return Ok(Vec::new());
    }
    let net = match model {
        DynamicsModel::SwingNetwork(net) => net,
        _ => {
            return Err(Error::invalid(
                "fault events are only valid for swing network models",
            ))
        }
    };
    let mut windows: Vec<FaultWindow> = Vec::with_capacity(faults.len());
    for f in faults {
        f.validate(net.n_generators())?;
        windows.push(FaultWindow {
            apply: f.apply_time,
            clear: f.clear_time,
            y_mag: net.faulted_y_mag(f.target_bus, f.admittance_scale),
        });
    }
    windows.sort_by(|a, b| a.apply.total_cmp(&b.apply));
    for pair in windows.windows(2) {
        if pair[1].apply < pair[0].clear {
            return Err(Error::invalid("fault windows must not overlap"));
        }
    }
    Ok(windows)
}

// ---------------------------------------------------------------------------
// Simulation
// ---------------------------------------------------------------------------

/// Simulate `n_steps` samples past `x0` at spacing `dt`. Continuous models
/// use one RK4 step per sample; see [`simulate_with_substeps`] for a finer
/// internal step.
pub fn simulate(
    model: &DynamicsModel,
    x0: &DVector<f64>,
    dt: f64,
    n_steps: usize,
    faults: &[FaultEvent],
) -> Result<Trajectory> {
    simulate_with_substeps(model, x0, dt, n_steps, faults, 1)
}

/// Simulate with each output step internally split into `substeps` RK4
/// steps (internal step = dt / substeps ≤ dt). Steps are additionally
/// split at fault apply/clear times.
pub fn simulate_with_substeps(
    model: &DynamicsModel,
    x0: &DVector<f64>,
    dt: f64,
    n_steps: usize,
    faults: &[FaultEvent],
    substeps: usize,
) -> Result<Trajectory> {
    let dim = model.state_dim();
    if x0.len() != dim {
        return Err(Error::invalid(format!(
            "x0 has dimension {}, model expects {dim}",
            x0.len()
        )));
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::invalid(format!("dt must be positive, got {dt}")));
    }
    if substeps == 0 {
        return Err(Error::invalid("substeps must be >= 1"));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("x0 must be finite"));
    }
    let windows = build_fault_windows(model, faults)?;

    let mut data = DMatrix::zeros(n_steps + 1, dim);
    data.row_mut(0).copy_from(&x0.transpose());
    let mut x = x0.clone();

    match model {
        DynamicsModel::LinearMap { matrix } => {
            for step in 0..n_steps {
                x = matrix * &x;
                check_finite(&x, step + 1, (step + 1) as f64 * dt)?;
                data.row_mut(step + 1).copy_from(&x.transpose());
            }
        }
        _ => {
            let h_target = dt / substeps as f64;
            for step in 0..n_steps {
                let t_start = step as f64 * dt;
                let t_end = (step + 1) as f64 * dt;
                for (a, b) in split_at_events(t_start, t_end, &windows) {
                    let y_mag = active_fault(&windows, 0.5 * (a + b));
                    let n_sub = ((b - a) / h_target).ceil().max(1.0) as usize;
                    let h = (b - a) / n_sub as f64;
                    for _ in 0..n_sub {
                        x = rk4_step(model, &x, h, y_mag);
                    }
                }
                check_finite(&x, step + 1, t_end)?;
                data.row_mut(step + 1).copy_from(&x.transpose());
            }
        }
    }
    Trajectory::new(0.0, dt, data)
}

fn check_finite(x: &DVector<f64>, step: usize, t: f64) -> Result<()> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical(format!(
            "state became non-finite at step {step} (t = {t:.6} s); integration blew up"
        )));
    }
    Ok(())
}

/// Interval boundaries of `[t_start, t_end]` split at every fault
/// apply/clear time strictly inside it.
fn split_at_events(t_start: f64, t_end: f64, windows: &[FaultWindow]) -> Vec<(f64, f64)> {
    let mut cuts = vec![t_start, t_end];
    for w in windows {
        for &e in &[w.apply, w.clear] {
            if e > t_start && e < t_end {
                cuts.push(e);
            }
        }
    }
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    cuts.windows(2).map(|p| (p[0], p[1])).collect()
}

fn active_fault<'a>(windows: &'a [FaultWindow], t: f64) -> Option<&'a DMatrix<f64>> {
    windows
        .iter()
        .find(|w| t >= w.apply && t < w.clear)
        .map(|w| &w.y_mag)
}

fn rk4_step(
    model: &DynamicsModel,
    x: &DVector<f64>,
    h: f64,
    y_mag: Option<&DMatrix<f64>>,
) -> DVector<f64> {
    let k1 = model.vector_field(x, y_mag);
    let k2 = model.vector_field(&(x + &k1 * (h / 2.0)), y_mag);
    let k3 = model.vector_field(&(x + &k2 * (h / 2.0)), y_mag);
    let k4 = model.vector_field(&(x + &k3 * h), y_mag);
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

// ---------------------------------------------------------------------------
// Equilibrium and linearization
// ---------------------------------------------------------------------------

const EQUILIBRIUM_TOL: f64 = 1e-10;
const NEWTON_MAX_ITERS: usize = 100;

/// Newton solve for a fixed point of the model (zero of the vector field
/// for flows, of T(x) − x for maps). The Newton step uses the analytic
/// Jacobian through a minimum-norm solve, so gauge-invariant systems like
/// the swing network (whose Jacobian has a uniform-angle null direction)
/// converge to a representative equilibrium.
pub fn equilibrium(model: &DynamicsModel, guess: &DVector<f64>) -> Result<DVector<f64>> {
    if guess.len() != model.state_dim() {
        return Err(Error::invalid(format!(
            "guess has dimension {}, model expects {}",
            guess.len(),
            model.state_dim()
        )));
    }
    if guess.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("guess must be finite"));
    }
    let mut x = guess.clone();
    let mut r = model.equilibrium_residual(&x);
    let mut rnorm = r.norm();
    for _ in 0..NEWTON_MAX_ITERS {
        if rnorm < EQUILIBRIUM_TOL {
            return Ok(x);
        }
        let jac = model.jacobian(&x);
        let rhs = DMatrix::from_column_slice(r.len(), 1, r.as_slice());
        let step = linalg::pinv_solve(&jac, &rhs, 1e-12)?;
        // damped update: halve until the residual shrinks
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let candidate = &x - step.column(0) * alpha;
            let rc = model.equilibrium_residual(&candidate);
            let rcn = rc.norm();
            if rcn < rnorm {
                x = candidate;
                r = rc;
                rnorm = rcn;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if rnorm < EQUILIBRIUM_TOL {
        Ok(x)
    } else {
        Err(Error::numerical(format!(
            "Newton did not reach an equilibrium: residual norm {rnorm:.3e} after {NEWTON_MAX_ITERS} iterations"
        )))
    }
}

/// Discrete-time Jacobian of the dt-flow map at an equilibrium `x_eq`.
///
/// For `LinearMap` this is the map matrix itself. Continuous models use
/// central finite differences of the RK4 flow (64 internal substeps per
/// probe so the flow itself contributes negligible error).
pub fn linearize(model: &DynamicsModel, x_eq: &DVector<f64>, dt: f64) -> Result<DMatrix<f64>> {
    if x_eq.len() != model.state_dim() {
        return Err(Error::invalid(format!(
            "x_eq has dimension {}, model expects {}",
            x_eq.len(),
            model.state_dim()
        )));
    }
    if let DynamicsModel::LinearMap { matrix } = model {
        return Ok(matrix.clone());
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::invalid(format!("dt must be positive, got {dt}")));
    }
    let resid = model.equilibrium_residual(x_eq).norm();
    if resid > 1e-6 {
        return Err(Error::invalid(format!(
            "x_eq is not an equilibrium: vector-field norm {resid:.3e} exceeds 1e-6"
        )));
    }
    let n = model.state_dim();
    let flow = |x: &DVector<f64>| -> Result<DVector<f64>> {
        let traj = simulate_with_substeps(model, x, dt, 1, &[], 64)?;
        Ok(traj.state(1))
    };
    let mut jac = DMatrix::zeros(n, n);
    for j in 0..n {
        let eps = 1e-6 * (1.0 + x_eq[j].abs());
        let mut xp = x_eq.clone();
        xp[j] += eps;
        let mut xm = x_eq.clone();
        xm[j] -= eps;
        let fp = flow(&xp)?;
        let fm = flow(&xm)?;
        for i in 0..n {
            jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * eps);
        }
    }
    Ok(jac)
}

// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{eig, C64};
    use approx::assert_relative_eq;

    /// Finite-difference Jacobian of the equilibrium residual — the
    /// independent oracle for the analytic `jacobian`.
    fn fd_jacobian(model: &DynamicsModel, x: &DVector<f64>) -> DMatrix<f64> {
        let n = model.state_dim();
        let mut jac = DMatrix::zeros(n, n);
        for j in 0..n {
            let eps = 1e-6 * (1.0 + x[j].abs());
            let mut xp = x.clone();
            xp[j] += eps;
            let mut xm = x.clone();
            xm[j] -= eps;
            let fp = model.equilibrium_residual(&xp);
            let fm = model.equilibrium_residual(&xm);
            for i in 0..n {
                jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * eps);
            }
        }
        jac
    }

    /// Matrix exponential by scaling and squaring on the Taylor series —
    /// test-only oracle for small matrices.
    fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
        let n = a.nrows();
        let s = (a.norm().log2().ceil().max(0.0) + 4.0) as i32;
        let b = a / 2f64.powi(s);
        let mut term = DMatrix::<f64>::identity(n, n);
        let mut sum = term.clone();
        for k in 1..30 {
            term = &term * &b / k as f64;
            sum += &term;
        }
        let mut result = sum;
        for _ in 0..s {
            result = &result * &result;
        }
        result
    }

    fn diag_map() -> DynamicsModel {
        DynamicsModel::linear_map(DMatrix::from_row_slice(2, 2, &[0.9, 0.0, 0.0, 0.5])).unwrap()
    }

    #[test]
    fn linear_map_power_iteration() {
        let model = diag_map();
        let traj = simulate(&model, &DVector::from_vec(vec![1.0, 1.0]), 0.01, 3, &[]).unwrap();
        let expected = [
            [1.0, 1.0],
            [0.9, 0.5],
            [0.81, 0.25],
            [0.729, 0.125],
        ];
        for (i, row) in expected.iter().enumerate() {
            assert_relative_eq!(traj.data()[(i, 0)], row[0], max_relative = 1e-15);
            assert_relative_eq!(traj.data()[(i, 1)], row[1], max_relative = 1e-15);
        }
    }

    #[test]
    fn swing_equilibrium_is_conserved() {
        let net = SwingNetwork::three_machine();
        let model = DynamicsModel::SwingNetwork(net);
        let guess = DVector::zeros(6);
        let eq = equilibrium(&model, &guess).unwrap();
        let traj = simulate(&model, &eq, 0.01, 500, &[]).unwrap();
        let drift = (traj.state(500) - &eq).norm();
        assert!(drift < 1e-9, "equilibrium drifted by {drift}");
    }

    #[test]
    fn swing_fault_decay_matches_jacobian_modes() {
        // One-step linear fit of the small post-fault motion is the
        // independent probe of the simulated decay.
        let net = SwingNetwork::three_machine();
        let model = DynamicsModel::SwingNetwork(net);
        let eq = equilibrium(&model, &DVector::zeros(6)).unwrap();
        let dt = 0.01;
        let fault = FaultEvent {
            apply_time: 0.1,
            clear_time: 0.2,
            target_bus: 1,
            admittance_scale: 0.97,
        };
        let traj = simulate(&model, &eq, dt, 3000, &[fault]).unwrap();
        let last = traj.n_samples() - 1;

        // the fault leaves a uniform-angle (gauge) offset behind, so the
        // trajectory settles toward a shifted copy of the equilibrium:
        // oscillation amplitude must decay, speeds must return to zero
        let dev_early = (traj.state(traj.index_at(0.3)) - &eq).norm();
        assert!(dev_early > 1e-3, "fault produced no excursion");
        let settled = traj.state(last);
        let speeds = settled.rows(3, 3).norm();
        assert!(speeds < 1e-4, "speeds did not decay: {speeds}");
        let late = (traj.state(traj.index_at(25.0)) - &settled).norm();
        let mid = (traj.state(traj.index_at(2.0)) - &settled).norm();
        assert!(late < 0.05 * mid, "oscillation did not decay: {mid} -> {late}");

        // one-step map fit X1 ≈ X0 · B on the small-amplitude tail;
        // eigenvalues of B ≈ exp(λ dt)
        let start = traj.index_at(4.0);
        let m = traj.index_at(12.0) - start;
        let mut x0 = DMatrix::zeros(m, 6);
        let mut x1 = DMatrix::zeros(m, 6);
        for k in 0..m {
            for j in 0..6 {
                x0[(k, j)] = traj.data()[(start + k, j)] - eq[j];
                x1[(k, j)] = traj.data()[(start + k + 1, j)] - eq[j];
            }
        }
        let b = crate::linalg::lstsq(&x0, &x1).unwrap();
        let fit_eigs = eig(&b).unwrap().values;
        let jac_eigs = eig(&fd_jacobian(&model, &eq)).unwrap().values;
        // dominant oscillatory pair: the slowest-decaying complex pair
        let mut osc: Vec<C64> = jac_eigs.into_iter().filter(|l| l.im > 1e-6).collect();
        osc.sort_by(|a, b| b.re.total_cmp(&a.re));
        let reference = osc[0];
        let best = fit_eigs
            .iter()
            .map(|l| {
                let lc = C64::new(l.norm().ln() / dt, l.arg() / dt);
                (lc - reference).norm()
            })
            .fold(f64::INFINITY, f64::min);
        assert!(
            best < 0.05 * reference.norm(),
            "dominant pair mismatch: {best} vs |λ| {}",
            reference.norm()
        );
    }

    #[test]
    fn linearize_linear_map_is_exact() {
        let model = diag_map();
        let a = linearize(&model, &DVector::zeros(2), 0.01).unwrap();
        if let DynamicsModel::LinearMap { matrix } = &model {
            assert_eq!(&a, matrix);
        }
    }

    #[test]
    fn linearize_van_der_pol_matches_matrix_exponential() {
        let model = DynamicsModel::VanDerPol { mu: 1.0 };
        let dt = 0.01;
        let flow_jac = linearize(&model, &DVector::zeros(2), dt).unwrap();
        let cont = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 1.0]);
        let expected = expm(&(cont * dt));
        for i in 0..2 {
            for j in 0..2 {
                assert!(
                    (flow_jac[(i, j)] - expected[(i, j)]).abs() < 1e-6,
                    "entry ({i},{j}): {} vs {}",
                    flow_jac[(i, j)],
                    expected[(i, j)]
                );
            }
        }
    }

    #[test]
    fn linearize_rejects_non_equilibrium() {
        let model = DynamicsModel::VanDerPol { mu: 1.0 };
        let err = linearize(&model, &DVector::from_vec(vec![2.0, 0.0]), 0.01);
        assert!(err.is_err());
    }

    #[test]
    fn swing_linearization_spectrum_is_conjugate_symmetric() {
        let model = DynamicsModel::SwingNetwork(SwingNetwork::three_machine());
        let eq = equilibrium(&model, &DVector::zeros(6)).unwrap();
        let a = linearize(&model, &eq, 0.01).unwrap();
        let vals = eig(&a).unwrap().values;
        for v in &vals {
            if v.im != 0.0 {
                assert!(vals.iter().any(|w| *w == v.conj()));
            }
        }
    }

    #[test]
    fn equilibrium_linear_map_is_origin() {
        let model = diag_map();
        let eq = equilibrium(&model, &DVector::from_vec(vec![3.0, -4.0])).unwrap();
        assert!(eq.norm() < 1e-10);
    }

    #[test]
    fn equilibrium_van_der_pol_is_origin() {
        let model = DynamicsModel::VanDerPol { mu: 1.0 };
        let eq = equilibrium(&model, &DVector::from_vec(vec![0.3, -0.2])).unwrap();
        assert!(eq.norm() < 1e-9);
    }

    #[test]
    fn equilibrium_two_machine_closed_form() {
        let pm = 0.6;
        let b = 2.0;
        let net = SwingNetwork::two_machine(pm, b).unwrap();
        let model = DynamicsModel::SwingNetwork(net);
        let eq = equilibrium(&model, &DVector::zeros(4)).unwrap();
        let expected_gap = (pm / b).asin();
        assert_relative_eq!(eq[0] - eq[1], expected_gap, epsilon = 1e-9);
        assert!(eq[2].abs() < 1e-10 && eq[3].abs() < 1e-10, "speeds nonzero");
    }

    #[test]
    fn analytic_jacobians_match_finite_differences() {
        let models = [
            diag_map(),
            DynamicsModel::VanDerPol { mu: 1.3 },
            DynamicsModel::SwingNetwork(SwingNetwork::three_machine()),
        ];
        for model in &models {
            let n = model.state_dim();
            let x = DVector::from_fn(n, |i, _| 0.1 + 0.05 * i as f64);
            let analytic = model.jacobian(&x);
            let fd = fd_jacobian(model, &x);
            let diff = (&analytic - &fd).norm() / analytic.norm().max(1.0);
            assert!(diff < 1e-7, "jacobian mismatch {diff}");
        }
    }

    #[test]
    fn rk4_observed_order_at_least_3_5() {
        let model = DynamicsModel::VanDerPol { mu: 1.0 };
        let x0 = DVector::from_vec(vec![1.0, 0.0]);
        let run = |substeps| {
            simulate_with_substeps(&model, &x0, 0.1, 10, &[], substeps)
                .unwrap()
                .state(10)
        };
        let e1 = (run(1) - run(4)).norm();
        let e2 = (run(2) - run(4)).norm();
        let order = (e1 / e2).log2();
        assert!(order >= 3.5, "observed order {order}");
    }

    #[test]
    fn faults_require_swing_model() {
        let model = diag_map();
        let fault = FaultEvent {
            apply_time: 0.0,
            clear_time: 0.1,
            target_bus: 0,
            admittance_scale: 0.5,
        };
        assert!(simulate(&model, &DVector::zeros(2), 0.01, 5, &[fault]).is_err());
    }

    #[test]
    fn fault_bus_out_of_range_is_rejected() {
        let model = DynamicsModel::SwingNetwork(SwingNetwork::three_machine());
        let fault = FaultEvent {
            apply_time: 0.1,
            clear_time: 0.2,
            target_bus: 7,
            admittance_scale: 0.5,
        };
        assert!(simulate(&model, &DVector::zeros(6), 0.01, 5, &[fault]).is_err());
    }

    #[test]
    fn blowup_is_reported_with_step() {
        let model =
            DynamicsModel::linear_map(DMatrix::from_row_slice(1, 1, &[1e200])).unwrap();
        let err = simulate(&model, &DVector::from_vec(vec![1.0]), 1.0, 5, &[]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("step"), "missing step in: {msg}");
    }

    #[test]
    fn per_unit_speed_conversion() {
        assert_relative_eq!(
            angular_speed_from_pu(1.0),
            2.0 * std::f64::consts::PI * 60.0
        );
    }

    #[test]
    fn trajectory_slicing_preserves_absolute_time() {
        let data = DMatrix::from_fn(10, 2, |i, j| (i * 2 + j) as f64);
        let traj = Trajectory::new(0.0, 0.5, data).unwrap();
        let s = traj.slice(4, 8).unwrap();
        assert_eq!(s.n_samples(), 4);
        assert_relative_eq!(s.t0(), 2.0);
        assert_eq!(s.data()[(0, 0)], 8.0);
    }
}
