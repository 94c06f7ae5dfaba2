//! SNR-calibrated measurement corruption: white Gaussian noise, missing
//! samples, and outliers.
//!
//! The SNR reference power is per channel and AC-coupled: channel i's
//! signal power is its mean squared deviation from its own mean over the
//! trajectory, and the injected noise variance is σᵢ² = Pᵢ / 10^(SNR/10).
//! Post-fault signals carry large DC offsets, so an AC reference keeps
//! "20 dB" visibly noisy instead of being swallowed by the offset.
//!
//! Missing samples are marked absent in-band (NaN); estimation code
//! rejects absent entries, so corrupted trajectories pass through
//! [`interpolate_missing`] before identification.

use nalgebra::DMatrix;
use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dynamics::Trajectory;
use crate::error::{Error, Result};

fn default_outlier_magnitude() -> f64 {
    5.0
}

/// Corruption recipe. `snr_db = None` injects no Gaussian noise.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub snr_db: Option<f64>,
    #[serde(default)]
    pub missing_fraction: f64,
    #[serde(default)]
    pub outlier_fraction: f64,
    #[serde(default = "default_outlier_magnitude")]
    pub outlier_magnitude: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            snr_db: None,
            missing_fraction: 0.0,
            outlier_fraction: 0.0,
            outlier_magnitude: default_outlier_magnitude(),
            seed: 0,
        }
    }
}

impl NoiseSpec {
    pub fn clean() -> Self {
        Self::default()
    }

    pub fn with_snr(snr_db: f64, seed: u64) -> Self {
        Self {
            snr_db: Some(snr_db),
            seed,
            ..Self::default()
        }
    }

    /// Same recipe, different seed.
    pub fn reseeded(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(snr) = self.snr_db {
            if !snr.is_finite() {
                return Err(Error::invalid("snr_db must be finite"));
            }
        }
        for (name, f) in [
            ("missing_fraction", self.missing_fraction),
            ("outlier_fraction", self.outlier_fraction),
        ] {
            if !(0.0..1.0).contains(&f) {
                return Err(Error::invalid(format!("{name} must be in [0, 1), got {f}")));
            }
        }
        if !(self.outlier_magnitude >= 0.0) || !self.outlier_magnitude.is_finite() {
            return Err(Error::invalid("outlier_magnitude must be finite and >= 0"));
        }
        Ok(())
    }

    /// True when the spec changes nothing.
    pub fn is_identity(&self) -> bool {
        self.snr_db.is_none() && self.missing_fraction == 0.0 && self.outlier_fraction == 0.0
    }
}

/// Per-channel AC power: mean squared deviation from the channel mean.
/// Channels whose deviation is pure roundoff are reported as exactly zero.
fn channel_ac_power(data: &DMatrix<f64>) -> Vec<f64> {
    let n = data.nrows() as f64;
    (0..data.ncols())
        .map(|j| {
            let col = data.column(j);
            let mean = col.sum() / n;
            let p = col.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
            if p < 1e-20 * (1.0 + mean * mean) {
                0.0
            } else {
                p
            }
        })
        .collect()
}

/// Corrupt a clean trajectory per `spec`. Deterministic given the seed:
/// the same (trajectory, spec) pair always produces the same output.
pub fn corrupt(traj: &Trajectory, spec: &NoiseSpec) -> Result<Trajectory> {
    spec.validate()?;
    if traj.has_missing() {
        return Err(Error::invalid("corrupt expects a clean trajectory"));
    }
    if spec.is_identity() {
        return Ok(traj.clone());
    }

    let mut data = traj.data().clone();
    let n_samples = data.nrows();
    let n_channels = data.ncols();
    let power = channel_ac_power(&data);

    let sigma: Option<Vec<f64>> = match spec.snr_db {
        None => None,
        Some(snr) => {
            let mut s = Vec::with_capacity(n_channels);
            for (j, &p) in power.iter().enumerate() {
                if p <= 0.0 {
                    return Err(Error::invalid(format!(
                        "channel {j} has zero AC power; cannot calibrate a finite SNR"
                    )));
                }
                s.push((p * 10f64.powf(-snr / 10.0)).sqrt());
            }
            Some(s)
        }
    };
    let std_dev: Vec<f64> = power.iter().map(|p| p.sqrt()).collect();

    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);

    if let Some(sigma) = &sigma {
        for m in 0..n_samples {
            for j in 0..n_channels {
                let z: f64 = rng.sample(StandardNormal);
                data[(m, j)] += sigma[j] * z;
            }
        }
    }

    if spec.outlier_fraction > 0.0 {
        for m in 0..n_samples {
            for j in 0..n_channels {
                if rng.random::<f64>() < spec.outlier_fraction {
                    let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                    data[(m, j)] += sign * spec.outlier_magnitude * std_dev[j];
                }
            }
        }
    }

    // First and last samples stay present so the gaps are always
    // interpolatable.
    if spec.missing_fraction > 0.0 && n_samples > 2 {
        for m in 1..n_samples - 1 {
            for j in 0..n_channels {
                if rng.random::<f64>() < spec.missing_fraction {
                    data[(m, j)] = f64::NAN;
                }
            }
        }
    }

    Trajectory::with_missing(traj.t0(), traj.dt(), data)
}

/// Fill absent samples by per-channel linear interpolation in time.
pub fn interpolate_missing(traj: &Trajectory) -> Result<Trajectory> {
    if !traj.has_missing() {
        return Ok(traj.clone());
    }
    let mut data = traj.data().clone();
    let n = data.nrows();
    for j in 0..data.ncols() {
        if data[(0, j)].is_nan() {
            return Err(Error::invalid(format!(
                "channel {j} starts with an absent sample; cannot extrapolate a leading gap"
            )));
        }
        if data[(n - 1, j)].is_nan() {
            return Err(Error::invalid(format!(
                "channel {j} ends with an absent sample; cannot extrapolate a trailing gap"
            )));
        }
        let mut prev = 0usize;
        let mut m = 1usize;
        while m < n {
            if data[(m, j)].is_nan() {
                let mut next = m + 1;
                while data[(next, j)].is_nan() {
                    next += 1;
                }
                let x0 = data[(prev, j)];
                let x1 = data[(next, j)];
                let span = (next - prev) as f64;
                for k in (prev + 1)..next {
                    let w = (k - prev) as f64 / span;
                    data[(k, j)] = x0 + w * (x1 - x0);
                }
                prev = next;
                m = next + 1;
            } else {
                prev = m;
                m += 1;
            }
        }
    }
    Trajectory::new(traj.t0(), traj.dt(), data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn sinusoid(n: usize, dt: f64) -> Trajectory {
        // amplitude √2 gives unit AC power
        let data = DMatrix::from_fn(n, 1, |i, _| {
            (2.0 * std::f64::consts::PI * 1.5 * i as f64 * dt).sin() * std::f64::consts::SQRT_2
        });
        Trajectory::new(0.0, dt, data).unwrap()
    }

    #[test]
    fn identity_spec_returns_input() {
        let traj = sinusoid(100, 0.01);
        let out = corrupt(&traj, &NoiseSpec::clean()).unwrap();
        assert_eq!(out.data(), traj.data());
    }

    #[test]
    fn snr_20db_noise_variance_near_0_01() {
        let traj = sinusoid(20_000, 0.001);
        let out = corrupt(&traj, &NoiseSpec::with_snr(20.0, 7)).unwrap();
        let noise: Vec<f64> = out
            .data()
            .iter()
            .zip(traj.data().iter())
            .map(|(a, b)| a - b)
            .collect();
        let var = noise.iter().map(|x| x * x).sum::<f64>() / noise.len() as f64;
        assert!(
            (var - 0.01).abs() < 0.0005,
            "noise variance {var} not within 5% of 0.01"
        );
    }

    #[test]
    fn snr_17db_noise_variance_matches_definition() {
        let traj = sinusoid(20_000, 0.001);
        let out = corrupt(&traj, &NoiseSpec::with_snr(17.0, 11)).unwrap();
        let expected = 10f64.powf(-1.7);
        let noise: Vec<f64> = out
            .data()
            .iter()
            .zip(traj.data().iter())
            .map(|(a, b)| a - b)
            .collect();
        let var = noise.iter().map(|x| x * x).sum::<f64>() / noise.len() as f64;
        assert!(
            (var - expected).abs() < 0.05 * expected,
            "noise variance {var} vs expected {expected}"
        );
    }

    #[test]
    fn noise_is_zero_mean() {
        let traj = sinusoid(40_000, 0.001);
        let out = corrupt(&traj, &NoiseSpec::with_snr(20.0, 3)).unwrap();
        let noise: Vec<f64> = out
            .data()
            .iter()
            .zip(traj.data().iter())
            .map(|(a, b)| a - b)
            .collect();
        let n = noise.len() as f64;
        let mean = noise.iter().sum::<f64>() / n;
        let sigma = 0.1; // sqrt(0.01)
        assert!(mean.abs() < 4.0 * sigma / n.sqrt(), "noise mean {mean}");
    }

    #[test]
    fn same_seed_reproduces_different_seeds_decorrelate() {
        let traj = sinusoid(10_000, 0.001);
        let a = corrupt(&traj, &NoiseSpec::with_snr(20.0, 42)).unwrap();
        let b = corrupt(&traj, &NoiseSpec::with_snr(20.0, 42)).unwrap();
        assert_eq!(a.data(), b.data());

        let c = corrupt(&traj, &NoiseSpec::with_snr(20.0, 43)).unwrap();
        let na: Vec<f64> = a
            .data()
            .iter()
            .zip(traj.data().iter())
            .map(|(x, y)| x - y)
            .collect();
        let nc: Vec<f64> = c
            .data()
            .iter()
            .zip(traj.data().iter())
            .map(|(x, y)| x - y)
            .collect();
        let n = na.len() as f64;
        let dot: f64 = na.iter().zip(&nc).map(|(x, y)| x * y).sum::<f64>() / n;
        let va = na.iter().map(|x| x * x).sum::<f64>() / n;
        let vc = nc.iter().map(|x| x * x).sum::<f64>() / n;
        let corr = dot / (va * vc).sqrt();
        assert!(corr.abs() < 0.05, "cross-correlation {corr}");
    }

    #[test]
    fn zero_power_channel_with_snr_is_rejected() {
        let mut data = DMatrix::zeros(50, 2);
        for i in 0..50 {
            data[(i, 0)] = (i as f64 * 0.3).sin();
            data[(i, 1)] = 4.2; // constant: zero AC power
        }
        let traj = Trajectory::new(0.0, 0.01, data).unwrap();
        let err = corrupt(&traj, &NoiseSpec::with_snr(20.0, 1)).unwrap_err();
        assert!(err.to_string().contains("channel 1"), "{err}");
    }

    #[test]
    fn outliers_shift_by_multiples_of_std() {
        let traj = sinusoid(5_000, 0.001);
        let spec = NoiseSpec {
            outlier_fraction: 0.02,
            outlier_magnitude: 8.0,
            seed: 5,
            ..NoiseSpec::default()
        };
        let out = corrupt(&traj, &spec).unwrap();
        // channel std from the same definition corrupt uses
        let n = traj.n_samples() as f64;
        let mean = traj.data().column(0).sum() / n;
        let sigma = (traj
            .data()
            .column(0)
            .iter()
            .map(|x| (x - mean) * (x - mean))
            .sum::<f64>()
            / n)
            .sqrt();
        let shifted: Vec<f64> = out
            .data()
            .iter()
            .zip(traj.data().iter())
            .map(|(a, b)| (a - b).abs())
            .filter(|d| *d > 0.0)
            .collect();
        let frac = shifted.len() as f64 / 5_000.0;
        assert!((0.005..0.05).contains(&frac), "outlier fraction {frac}");
        for d in shifted {
            assert!(
                (d - 8.0 * sigma).abs() < 1e-9,
                "outlier magnitude {d} != 8 std ({})",
                8.0 * sigma
            );
        }
    }

    #[test]
    fn missing_marks_are_interpolatable() {
        let traj = sinusoid(1_000, 0.001);
        let spec = NoiseSpec {
            missing_fraction: 0.1,
            seed: 9,
            ..NoiseSpec::default()
        };
        let out = corrupt(&traj, &spec).unwrap();
        assert!(out.missing_count() > 50);
        let filled = interpolate_missing(&out).unwrap();
        assert!(!filled.has_missing());
    }

    #[test]
    fn interpolation_identity_and_midpoint() {
        let traj = sinusoid(10, 0.01);
        assert_eq!(
            interpolate_missing(&traj).unwrap().data(),
            traj.data()
        );

        let mut data = DMatrix::zeros(3, 1);
        data[(0, 0)] = 0.0;
        data[(1, 0)] = f64::NAN;
        data[(2, 0)] = 2.0;
        let t = Trajectory::with_missing(0.0, 0.01, data).unwrap();
        let filled = interpolate_missing(&t).unwrap();
        assert_eq!(filled.data()[(1, 0)], 1.0);
    }

    #[test]
    fn single_gap_fill_error_is_half_second_difference() {
        let clean = sinusoid(200, 0.01);
        let mut data = clean.data().clone();
        for m in (7..193).step_by(7) {
            data[(m, 0)] = f64::NAN;
        }
        let t = Trajectory::with_missing(0.0, 0.01, data).unwrap();
        let filled = interpolate_missing(&t).unwrap();
        let max_second_diff = (1..199)
            .map(|m| {
                (clean.data()[(m + 1, 0)] - 2.0 * clean.data()[(m, 0)] + clean.data()[(m - 1, 0)])
                    .abs()
            })
            .fold(0.0, f64::max);
        let max_err = filled
            .data()
            .iter()
            .zip(clean.data().iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(
            max_err <= 0.5 * max_second_diff + 1e-12,
            "fill error {max_err} exceeds bound {}",
            0.5 * max_second_diff
        );
    }

    #[test]
    fn leading_gap_is_an_error() {
        let mut data = DMatrix::zeros(3, 1);
        data[(0, 0)] = f64::NAN;
        data[(1, 0)] = 1.0;
        data[(2, 0)] = 2.0;
        let t = Trajectory::with_missing(0.0, 0.01, data).unwrap();
        assert!(interpolate_missing(&t).is_err());
    }

    #[test]
    fn invalid_fractions_are_rejected() {
        let spec = NoiseSpec {
            missing_fraction: 1.0,
            ..NoiseSpec::default()
        };
        assert!(spec.validate().is_err());
    }
}
