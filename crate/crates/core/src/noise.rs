//! Stochastic models: vertex-placement error, Gauss-Markov heading error,
//! the wheel-speed-sensor measurement, error statistics and seed derivation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::NoiseError;

pub type SimRng = ChaCha8Rng;

/// Statistics of vertex-placement error magnitudes along the new triangle's
/// lateral and longitudinal axes, meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VertexErrorModel {
    pub mu_lat: f64,
    pub sigma_lat: f64,
    pub mu_lon: f64,
    pub sigma_lon: f64,
}

impl Default for VertexErrorModel {
    fn default() -> Self {
        Self {
            mu_lat: 0.036,
            sigma_lat: 0.021,
            mu_lon: 0.013,
            sigma_lon: 0.009,
        }
    }
}

impl VertexErrorModel {
    pub fn zero() -> Self {
        Self {
            mu_lat: 0.0,
            sigma_lat: 0.0,
            mu_lon: 0.0,
            sigma_lon: 0.0,
        }
    }
}

/// Normal distribution truncated below at zero, parameterized by its parent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncatedNormal {
    pub loc: f64,
    pub scale: f64,
}

/// Mean and standard deviation of a unit-scale normal with mean `r`
/// truncated below at zero.
fn unit_truncated_moments(r: f64) -> (f64, f64) {
    let n = Normal::standard();
    // hazard at alpha = -r, written with the upper tail to avoid cancellation
    let lambda = n.pdf(r) / n.cdf(r);
    let alpha = -r;
    let var = 1.0 + alpha * lambda - lambda * lambda;
    (r + lambda, var.max(0.0).sqrt())
}

impl TruncatedNormal {
    /// Parent parameters whose zero-truncated distribution has the given
    /// mean and standard deviation.
    pub fn from_moments(mean: f64, std: f64) -> Result<Self, NoiseError> {
        if mean == 0.0 && std == 0.0 {
            return Ok(Self {
                loc: 0.0,
                scale: 0.0,
            });
        }
        if std == 0.0 && mean > 0.0 {
            return Ok(Self {
                loc: mean,
                scale: 0.0,
            });
        }
        let cv = std / mean;
        // coefficient of variation falls from 1 (r -> -inf) to 0 (r -> inf)
        if !(mean > 0.0) || !(cv > 0.0 && cv < 1.0) {
            return Err(NoiseError::InfeasibleMoments { mean, std });
        }
        let cv_of = |r: f64| {
            let (m, s) = unit_truncated_moments(r);
            s / m
        };
        let (mut lo, mut hi) = (-30.0_f64, 60.0_f64);
        if cv_of(lo) < cv {
            return Err(NoiseError::InfeasibleMoments { mean, std });
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if cv_of(mid) > cv {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let r = 0.5 * (lo + hi);
        let (m, _) = unit_truncated_moments(r);
        let scale = mean / m;
        Ok(Self {
            loc: r * scale,
            scale,
        })
    }

    pub fn mean_std(&self) -> (f64, f64) {
        if self.scale == 0.0 {
            return (self.loc.max(0.0), 0.0);
        }
        let (m, s) = unit_truncated_moments(self.loc / self.scale);
        (m * self.scale, s * self.scale)
    }

    /// Draw by resampling the parent until non-negative.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        loop {
            let z: f64 = rng.sample(StandardNormal);
            let v = self.loc + self.scale * z;
            if v >= 0.0 {
                return v;
            }
        }
    }
}

/// Calibrated sampler for [`VertexErrorModel`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VertexErrorSampler {
    lateral: TruncatedNormal,
    longitudinal: TruncatedNormal,
}

impl VertexErrorSampler {
    pub fn new(model: &VertexErrorModel) -> Result<Self, NoiseError> {
        Ok(Self {
            lateral: TruncatedNormal::from_moments(model.mu_lat, model.sigma_lat)?,
            longitudinal: TruncatedNormal::from_moments(model.mu_lon, model.sigma_lon)?,
        })
    }

    /// Signed (lateral, longitudinal) error, meters.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        let lat = self.lateral.sample(rng);
        let lat_sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let lon = self.longitudinal.sample(rng);
        let lon_sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        (lat * lat_sign, lon * lon_sign)
    }
}

/// One signed vertex error. Calibrates the model on every call; build a
/// [`VertexErrorSampler`] once when drawing many samples.
pub fn sample_vertex_error<R: Rng + ?Sized>(
    model: &VertexErrorModel,
    rng: &mut R,
) -> Result<(f64, f64), NoiseError> {
    Ok(VertexErrorSampler::new(model)?.sample(rng))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HeadingErrorParams {
    /// Correlation time, seconds.
    pub tau: f64,
    /// Stationary standard deviation of the correlated part, radians.
    pub sigma_gm: f64,
    /// Read-time white noise, radians.
    pub sigma_white: f64,
}

impl Default for HeadingErrorParams {
    fn default() -> Self {
        Self {
            tau: 120.0,
            sigma_gm: 2.5_f64.to_radians(),
            sigma_white: 0.8_f64.to_radians(),
        }
    }
}

impl HeadingErrorParams {
    pub fn noiseless() -> Self {
        Self {
            sigma_gm: 0.0,
            sigma_white: 0.0,
            ..Self::default()
        }
    }
}

/// Advance the correlated heading error by `dt` using the exact discrete form
/// of the first-order Gauss-Markov process.
pub fn gm_step<R: Rng + ?Sized>(prev_err: f64, dt: f64, params: &HeadingErrorParams, rng: &mut R) -> f64 {
    let a = (-dt / params.tau).exp();
    let q = params.sigma_gm * (1.0 - a * a).max(0.0).sqrt();
    let z: f64 = rng.sample(StandardNormal);
    a * prev_err + q * z
}

/// Draw from the stationary distribution of the correlated error.
pub fn gm_stationary<R: Rng + ?Sized>(params: &HeadingErrorParams, rng: &mut R) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    params.sigma_gm * z
}

/// Heading error seen by the estimator: the correlated part plus white noise.
pub fn read_heading_error<R: Rng + ?Sized>(gm_err: f64, params: &HeadingErrorParams, rng: &mut R) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    gm_err + params.sigma_white * z
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WssParams {
    pub wheel_radius: f64,
    pub radius_error: f64,
    pub scale_factor: f64,
    /// Standard deviation of the additive speed noise, m/s.
    pub noise_std: f64,
}

impl Default for WssParams {
    fn default() -> Self {
        Self {
            wheel_radius: 0.148,
            radius_error: 0.0,
            scale_factor: 0.16,
            noise_std: 0.045,
        }
    }
}

impl WssParams {
    /// Speed for a wheel rate, without the additive noise.
    pub fn speed(&self, omega_wheel: f64) -> f64 {
        (self.wheel_radius + self.radius_error) * (1.0 + self.scale_factor) * omega_wheel
    }
}

/// Measured forward speed, m/s.
pub fn wss_measure<R: Rng + ?Sized>(omega_wheel: f64, params: &WssParams, rng: &mut R) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    params.speed(omega_wheel) + params.noise_std * z
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorStats {
    pub mu_x: f64,
    pub mu_y: f64,
    pub sigma_x: f64,
    pub sigma_y: f64,
    pub n: usize,
}

/// Sample mean and (N-1) standard deviation.
pub fn mean_std(xs: &[f64]) -> Result<(f64, f64), NoiseError> {
    let n = xs.len();
    if n < 2 {
        return Err(NoiseError::TooFewSamples(n));
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let ss: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
    Ok((mean, (ss / (n - 1) as f64).sqrt()))
}

pub fn error_stats(e_x: &[f64], e_y: &[f64]) -> Result<ErrorStats, NoiseError> {
    if e_x.len() != e_y.len() {
        return Err(NoiseError::LengthMismatch(e_x.len(), e_y.len()));
    }
    let (mu_x, sigma_x) = mean_std(e_x)?;
    let (mu_y, sigma_y) = mean_std(e_y)?;
    Ok(ErrorStats {
        mu_x,
        mu_y,
        sigma_x,
        sigma_y,
        n: e_x.len(),
    })
}

/// Bundled noise parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseModels {
    pub vertex: VertexErrorModel,
    pub heading: HeadingErrorParams,
    pub wss: WssParams,
    /// Round projected marker columns to whole pixels.
    pub quantize: bool,
    /// Seconds between fresh dead-reckoning sensor readings. The white parts
    /// of the speed and heading errors are drawn once per reading and held
    /// until the next.
    pub sample_interval: f64,
}

impl Default for NoiseModels {
    fn default() -> Self {
        Self {
            vertex: VertexErrorModel::default(),
            heading: HeadingErrorParams::default(),
            wss: WssParams::default(),
            quantize: true,
            sample_interval: 1.0,
        }
    }
}

impl NoiseModels {
    pub fn noiseless() -> Self {
        Self {
            vertex: VertexErrorModel::zero(),
            heading: HeadingErrorParams::noiseless(),
            wss: WssParams {
                noise_std: 0.0,
                ..WssParams::default()
            },
            quantize: false,
            sample_interval: 1.0,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the stream for one (run, stream) pair. Stream ids are robot ids;
/// ids at or above [`STREAM_BASE`] are reserved for non-robot streams.
pub fn derive_seed(master_seed: u64, run_index: u64, stream: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(master_seed) ^ run_index) ^ stream)
}

pub const STREAM_BASE: u64 = 1 << 32;

pub fn stream_rng(master_seed: u64, run_index: u64, stream: u64) -> SimRng {
    SimRng::seed_from_u64(derive_seed(master_seed, run_index, stream))
}
