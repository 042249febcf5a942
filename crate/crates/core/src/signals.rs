//! Frequency-deviation signals: CSV loading, synthetic generators and filters.
//!
//! All series are sampled at 1 Hz. Element `t` is the deviation in Hz during
//! step `t`.

use std::io::Read;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::SignalError;

/// Largest plausible deviation of the grid frequency, Hz.
pub const SANITY_BOUND: f64 = 1.0;

/// Clip applied to synthetic noise, Hz.
pub const NOISE_CLIP: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencySeries {
    pub samples: Vec<f64>,
    pub source: String,
}

impl FrequencySeries {
    pub fn new(samples: Vec<f64>, source: impl Into<String>) -> Self {
        Self {
            samples,
            source: source.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn mean(&self) -> f64 {
        if self.samples.is_empty() {
            0.0
        } else {
            self.samples.iter().sum::<f64>() / self.samples.len() as f64
        }
    }

    /// Writes the series as `t_seconds,delta_f_hz`.
    pub fn to_csv<W: std::io::Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t_seconds", "delta_f_hz"])?;
        for (t, v) in self.samples.iter().enumerate() {
            w.write_record([t.to_string(), format!("{v}")])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Loads a `t_seconds,delta_f_hz` file.
pub fn load_csv(path: &Path) -> Result<FrequencySeries, SignalError> {
    let file = std::fs::File::open(path).map_err(|source| SignalError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut series = read_csv(file)?;
    series.source = path.display().to_string();
    Ok(series)
}

/// Parses `t_seconds,delta_f_hz` rows. A header line is optional and both LF
/// and CRLF line endings are accepted.
pub fn read_csv<R: Read>(input: R) -> Result<FrequencySeries, SignalError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(input);
    let mut samples = Vec::new();
    let mut prev_t: Option<f64> = None;
    let mut record = csv::StringRecord::new();
    let mut first = true;
    loop {
        let more = reader.read_record(&mut record).map_err(|e| SignalError::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        if !more {
            break;
        }
        let line = record.position().map_or(0, |p| p.line());
        if record.iter().all(str::is_empty) {
            continue;
        }
        if record.len() != 2 {
            return Err(SignalError::Parse {
                line,
                message: format!("expected 2 fields, found {}", record.len()),
            });
        }
        let t = record[0].parse::<f64>();
        if first {
            first = false;
            if t.is_err() && record[1].parse::<f64>().is_err() {
                continue;
            }
        }
        let t = t.map_err(|_| SignalError::Parse {
            line,
            message: format!("invalid timestamp `{}`", &record[0]),
        })?;
        let v = record[1].parse::<f64>().map_err(|_| SignalError::Parse {
            line,
            message: format!("invalid deviation `{}`", &record[1]),
        })?;
        if !t.is_finite() || !v.is_finite() {
            return Err(SignalError::Parse {
                line,
                message: "non-finite value".into(),
            });
        }
        if v.abs() >= SANITY_BOUND {
            return Err(SignalError::OutOfRange { line, value: v });
        }
        if let Some(p) = prev_t {
            let gap = t - p;
            if gap <= 0.0 {
                return Err(SignalError::NonMonotone { line, t });
            }
            if (gap - 1.0).abs() > 1e-6 {
                return Err(SignalError::Gap { line, t, gap });
            }
        }
        prev_t = Some(t);
        samples.push(v);
    }
    if samples.is_empty() {
        return Err(SignalError::NoSamples);
    }
    Ok(FrequencySeries::new(samples, "csv"))
}

/// Step deviation: `delta` for `t <= n_event`, zero afterwards.
pub fn synth_step(delta: f64, n_event: usize, total: usize) -> FrequencySeries {
    let samples = (0..total)
        .map(|t| if t <= n_event { delta } else { 0.0 })
        .collect();
    FrequencySeries::new(samples, format!("step({delta},{n_event})"))
}

/// Constant deviation for `total` seconds.
pub fn synth_constant(value: f64, total: usize) -> FrequencySeries {
    FrequencySeries::new(vec![value; total], format!("constant({value})"))
}

/// Parameters of the synthetic frequency noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseParams {
    /// Mean deviation, Hz.
    pub bias: f64,
    /// Stationary standard deviation of the fluctuation, Hz.
    pub sigma: f64,
    /// Correlation time of the fluctuation, s.
    pub correlation_time: f64,
    /// Time constant of the low-pass stage that removes second-scale
    /// roughness, s; zero leaves the plain Ornstein-Uhlenbeck process.
    pub smoothing: f64,
    /// The bias changes sign every this many seconds; zero keeps it fixed.
    pub bias_half_period: usize,
}

impl Default for NoiseParams {
    fn default() -> Self {
        Self {
            bias: 0.0,
            sigma: 0.02,
            correlation_time: 120.0,
            smoothing: 20.0,
            bias_half_period: 0,
        }
    }
}

/// Bias plus a stationary fluctuation, clipped to `+-NOISE_CLIP`. The
/// fluctuation is an Ornstein-Uhlenbeck process passed through a first-order
/// low-pass and scaled so its stationary standard deviation is `sigma`.
pub fn synth_noise(
    params: NoiseParams,
    total: usize,
    seed: u64,
) -> Result<FrequencySeries, SignalError> {
    if !(params.sigma >= 0.0) || !params.sigma.is_finite() {
        return Err(SignalError::InvalidParameter(format!(
            "sigma must be non-negative, got {}",
            params.sigma
        )));
    }
    if !(params.correlation_time > 0.0) {
        return Err(SignalError::InvalidParameter(format!(
            "correlation time must be positive, got {}",
            params.correlation_time
        )));
    }
    if !params.bias.is_finite() || params.bias.abs() >= NOISE_CLIP {
        return Err(SignalError::InvalidParameter(format!(
            "bias must lie inside +-{NOISE_CLIP} Hz, got {}",
            params.bias
        )));
    }
    if !(params.smoothing >= 0.0) || !params.smoothing.is_finite() {
        return Err(SignalError::InvalidParameter(format!(
            "smoothing must be non-negative, got {}",
            params.smoothing
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phi = (-1.0 / params.correlation_time).exp();
    let b = if params.smoothing > 0.0 { (-1.0 / params.smoothing).exp() } else { 0.0 };
    // Variance gain of the low-pass on an AR(1) input.
    let gain = (1.0 - b).powi(2) * (1.0 + phi * b) / ((1.0 - b * b) * (1.0 - phi * b));
    let sd = params.sigma / gain.sqrt();
    let innovation = sd * (1.0 - phi * phi).sqrt();
    let z: f64 = StandardNormal.sample(&mut rng);
    let mut x = sd * z;
    let mut y = x;
    let warmup = (10.0 * params.smoothing).ceil() as usize;
    let mut samples = Vec::with_capacity(total);
    for t in 0..warmup + total {
        y = b * y + (1.0 - b) * x;
        if t >= warmup {
            let k = t - warmup;
            let flip = params.bias_half_period > 0 && (k / params.bias_half_period) % 2 == 1;
            let bias = if flip { -params.bias } else { params.bias };
            samples.push((bias + y).clamp(-NOISE_CLIP, NOISE_CLIP));
        }
        let e: f64 = StandardNormal.sample(&mut rng);
        x = phi * x + innovation * e;
    }
    Ok(FrequencySeries::new(
        samples,
        format!(
            "noise(bias={},sigma={},tau={},smoothing={},half_period={})",
            params.bias,
            params.sigma,
            params.correlation_time,
            params.smoothing,
            params.bias_half_period
        ),
    ))
}

/// Zeroes samples with `|v| <= width`.
pub fn apply_deadband(samples: &[f64], width: f64) -> Vec<f64> {
    samples
        .iter()
        .map(|&v| if v.abs() <= width { 0.0 } else { v })
        .collect()
}

/// Trailing moving average over up to `window` samples.
pub fn moving_average(samples: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    let mut out = Vec::with_capacity(samples.len());
    let mut sum = 0.0;
    for (i, &v) in samples.iter().enumerate() {
        sum += v;
        if i >= window {
            sum -= samples[i - window];
        }
        out.push(sum / (i + 1).min(window) as f64);
    }
    out
}

/// Centered moving average over `window` samples, shrinking at the edges.
pub fn centered_moving_average(samples: &[f64], window: usize) -> Vec<f64> {
    let n = samples.len();
    let half = window.max(1) / 2;
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for &v in samples {
        acc += v;
        prefix.push(acc);
    }
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect()
}
