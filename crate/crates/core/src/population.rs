//! Heterogeneous refrigerator populations.
//!
//! Devices are drawn from per-parameter distributions and started at a
//! uniformly random phase of their own thermostat cycle, so the initial state
//! is stationary.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::signals::centered_moving_average;
use crate::thermal::{cycle_durations, CycleDurations, DeviceState, ThermalParams};

/// Distribution of one population parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dist {
    Fixed(f64),
    /// Uniform on `[lo, hi]`.
    Uniform(f64, f64),
    /// Normal `(mean, sd)` truncated to positive values.
    Normal(f64, f64),
}

impl Dist {
    pub fn mean(&self) -> f64 {
        match *self {
            Dist::Fixed(v) => v,
            Dist::Uniform(lo, hi) => 0.5 * (lo + hi),
            Dist::Normal(m, _) => m,
        }
    }

    pub fn validate(&self, name: &str) -> Result<(), ModelError> {
        let ok = match *self {
            Dist::Fixed(v) => v.is_finite(),
            Dist::Uniform(lo, hi) => lo.is_finite() && hi.is_finite() && lo <= hi,
            Dist::Normal(m, s) => m.is_finite() && s.is_finite() && s >= 0.0 && m > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(ModelError::Population(format!("invalid distribution for {name}: {self:?}")))
        }
    }

    /// Draws a value in `(0, upper)`; `Fixed` and `Uniform` are returned as is.
    pub fn sample_below<R: Rng>(&self, rng: &mut R, upper: f64) -> f64 {
        match *self {
            Dist::Fixed(v) => v,
            Dist::Uniform(lo, hi) => {
                if hi > lo {
                    rng.random_range(lo..=hi)
                } else {
                    lo
                }
            }
            Dist::Normal(m, s) => {
                if s == 0.0 {
                    return m;
                }
                let normal = Normal::new(m, s).expect("validated");
                loop {
                    let v = normal.sample(rng);
                    if v > 0.0 && v < upper {
                        return v;
                    }
                }
            }
        }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        self.sample_below(rng, f64::INFINITY)
    }
}

/// Parameter distributions of a population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PopulationSpec {
    pub size: usize,
    pub ambient: Dist,
    pub deadband_width: Dist,
    pub setpoint: Dist,
    pub alpha: Dist,
    /// Cooling per unit energy, degC/J.
    pub beta: Dist,
    pub nominal_power: Dist,
    pub peak_factor: Dist,
    pub startup_duration: Dist,
    pub lock_on: Dist,
    /// Truncated to the device's own off duration.
    pub lock_off: Dist,
    /// Coefficient of performance used to split `beta` into `eta / C`.
    pub cop: f64,
    /// `R / R_op`.
    pub door_ratio: f64,
}

impl Default for PopulationSpec {
    fn default() -> Self {
        Self {
            size: 1000,
            ambient: Dist::Uniform(20.0, 24.0),
            deadband_width: Dist::Uniform(1.7, 2.3),
            setpoint: Dist::Uniform(4.5, 5.5),
            alpha: Dist::Uniform(4e-5, 6e-5),
            beta: Dist::Normal(4.4e-5, 0.7e-5),
            nominal_power: Dist::Uniform(70.0, 90.0),
            peak_factor: Dist::Normal(0.25, 0.025),
            startup_duration: Dist::Normal(30.0, 3.0),
            lock_on: Dist::Normal(60.0, 5.0),
            lock_off: Dist::Normal(189.0, 31.5),
            cop: 2.0,
            door_ratio: 25.0,
        }
    }
}

impl PopulationSpec {
    pub fn with_size(size: usize) -> Self {
        Self {
            size,
            ..Self::default()
        }
    }

    /// Every parameter fixed at the mean of the default distributions.
    pub fn homogeneous(size: usize) -> Self {
        let d = Self::default();
        Self {
            size,
            ambient: Dist::Fixed(d.ambient.mean()),
            deadband_width: Dist::Fixed(d.deadband_width.mean()),
            setpoint: Dist::Fixed(d.setpoint.mean()),
            alpha: Dist::Fixed(d.alpha.mean()),
            beta: Dist::Fixed(d.beta.mean()),
            nominal_power: Dist::Fixed(d.nominal_power.mean()),
            peak_factor: Dist::Fixed(d.peak_factor.mean()),
            startup_duration: Dist::Fixed(d.startup_duration.mean()),
            lock_on: Dist::Fixed(d.lock_on.mean()),
            lock_off: Dist::Fixed(d.lock_off.mean()),
            ..d
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.size == 0 {
            return Err(ModelError::Population("population is empty".into()));
        }
        if self.size > u32::MAX as usize {
            return Err(ModelError::Population("population too large".into()));
        }
        for (name, d) in [
            ("ambient", &self.ambient),
            ("deadband_width", &self.deadband_width),
            ("setpoint", &self.setpoint),
            ("alpha", &self.alpha),
            ("beta", &self.beta),
            ("nominal_power", &self.nominal_power),
            ("peak_factor", &self.peak_factor),
            ("startup_duration", &self.startup_duration),
            ("lock_on", &self.lock_on),
            ("lock_off", &self.lock_off),
        ] {
            d.validate(name)?;
        }
        if !(self.cop > 0.0) || !(self.door_ratio >= 1.0) {
            return Err(ModelError::Population(format!(
                "cop must be positive and door_ratio at least 1, got {} and {}",
                self.cop, self.door_ratio
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Device {
    pub params: ThermalParams,
    pub state: DeviceState,
    pub cycle: CycleDurations,
}

/// Empirical CDF of lock durations on the integer grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LockCdf {
    /// `cdf[j]` is the fraction of devices with lock time at most `j` seconds.
    cdf: Vec<f64>,
}

impl LockCdf {
    pub fn from_samples(samples: &[f64]) -> Self {
        if samples.is_empty() {
            return Self { cdf: vec![1.0] };
        }
        let max = samples.iter().cloned().fold(0.0, f64::max);
        let n = max.ceil() as usize;
        let mut counts = vec![0usize; n + 1];
        for &s in samples {
            counts[s.ceil() as usize] += 1;
        }
        let total = samples.len() as f64;
        let mut acc = 0usize;
        let cdf = counts
            .iter()
            .map(|&c| {
                acc += c;
                acc as f64 / total
            })
            .collect();
        Self { cdf }
    }

    /// Number of grid points before the CDF reaches one.
    pub fn horizon(&self) -> usize {
        self.cdf.len() - 1
    }

    #[inline]
    pub fn cdf(&self, j: usize) -> f64 {
        self.cdf.get(j).copied().unwrap_or(1.0)
    }

    #[inline]
    pub fn survival(&self, j: usize) -> f64 {
        1.0 - self.cdf(j)
    }
}

/// Population means the controller relies on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationStats {
    pub size: usize,
    pub nominal_power: f64,
    /// Mean of `beta_i P_n,i`, degC/s.
    pub beta_power: f64,
    pub peak_factor: f64,
    pub startup_duration: f64,
    pub min_startup_duration: f64,
    pub alpha: f64,
    /// Mean of `1 / alpha_i`, s.
    pub rc: f64,
    /// Mean cooling span `eta_i R_i P_n,i`, degC.
    pub span: f64,
    pub ambient: f64,
    pub deadband_width: f64,
    pub nominal_temperature: f64,
    /// Mean per-device duty cycle.
    pub duty: f64,
    pub t_on: f64,
    pub t_off: f64,
    pub lock_on: f64,
    pub lock_off: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Population {
    pub devices: Vec<Device>,
    pub stats: PopulationStats,
    pub lock_on_cdf: LockCdf,
    pub lock_off_cdf: LockCdf,
}

/// Draws a population from `spec` with a deterministic RNG stream.
pub fn sample_population(spec: &PopulationSpec, seed: u64) -> Result<Population, ModelError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut devices = Vec::with_capacity(spec.size);
    for _ in 0..spec.size {
        devices.push(sample_device(spec, &mut rng)?);
    }
    Population::from_devices(devices)
}

fn sample_device<R: Rng>(spec: &PopulationSpec, rng: &mut R) -> Result<Device, ModelError> {
    let ambient = spec.ambient.sample(rng);
    let deadband_width = spec.deadband_width.sample(rng);
    let setpoint = spec.setpoint.sample(rng);
    let alpha = spec.alpha.sample(rng);
    let nominal_power = spec.nominal_power.sample(rng);
    let t_min = setpoint - 0.5 * deadband_width;
    let mut beta = 0.0;
    for _ in 0..10_000 {
        let b = spec.beta.sample(rng);
        if b * nominal_power / alpha > ambient - t_min {
            beta = b;
            break;
        }
    }
    if beta == 0.0 {
        return Err(ModelError::InsufficientCooling {
            span: spec.beta.mean() * nominal_power / alpha,
            ambient,
            t_min,
        });
    }
    let capacitance = spec.cop / beta / 1e3;
    let mut params = ThermalParams {
        ambient,
        alpha,
        beta,
        nominal_power,
        capacitance,
        resistance: 1.0 / (alpha * capacitance),
        door_ratio: spec.door_ratio,
        peak_factor: spec.peak_factor.sample(rng),
        startup_duration: spec.startup_duration.sample(rng),
        lock_on: spec.lock_on.sample(rng),
        lock_off: 0.0,
        setpoint,
        deadband_width,
    };
    let cycle = cycle_durations(&params, params.t_min(), params.t_max())?;
    params.lock_off = spec.lock_off.sample_below(rng, cycle.off);
    params.validate()?;
    let phase = rng.random::<f64>() * (cycle.on + cycle.off);
    let state = stationary_state(&params, &cycle, phase);
    Ok(Device {
        params,
        state,
        cycle,
    })
}

/// State of a device `phase` seconds after its last switch-on.
pub fn stationary_state(params: &ThermalParams, cycle: &CycleDurations, phase: f64) -> DeviceState {
    let (t_min, t_max) = (params.t_min(), params.t_max());
    let eq_on = params.ambient - params.cooling_span();
    let (on, elapsed, temperature) = if phase < cycle.on {
        (true, phase, eq_on + (t_max - eq_on) * (-params.alpha * phase).exp())
    } else {
        let e = phase - cycle.on;
        (
            false,
            e,
            params.ambient + (t_min - params.ambient) * (-params.alpha * e).exp(),
        )
    };
    DeviceState {
        temperature: temperature.clamp(t_min, t_max),
        on,
        t_min,
        t_max,
        time_since_switch: elapsed,
        door_open: false,
    }
}

impl Population {
    pub fn from_devices(devices: Vec<Device>) -> Result<Self, ModelError> {
        if devices.is_empty() {
            return Err(ModelError::Population("population is empty".into()));
        }
        let n = devices.len() as f64;
        let mean = |f: &dyn Fn(&Device) -> f64| devices.iter().map(f).sum::<f64>() / n;
        let stats = PopulationStats {
            size: devices.len(),
            nominal_power: mean(&|d| d.params.nominal_power),
            beta_power: mean(&|d| d.params.beta * d.params.nominal_power),
            peak_factor: mean(&|d| d.params.peak_factor),
            startup_duration: mean(&|d| d.params.startup_duration),
            min_startup_duration: devices
                .iter()
                .map(|d| d.params.startup_duration)
                .fold(f64::INFINITY, f64::min),
            alpha: mean(&|d| d.params.alpha),
            rc: mean(&|d| 1.0 / d.params.alpha),
            span: mean(&|d| d.params.cooling_span()),
            ambient: mean(&|d| d.params.ambient),
            deadband_width: mean(&|d| d.params.deadband_width),
            nominal_temperature: mean(&|d| d.params.setpoint),
            duty: mean(&|d| d.cycle.duty),
            t_on: mean(&|d| d.cycle.on),
            t_off: mean(&|d| d.cycle.off),
            lock_on: mean(&|d| d.params.lock_on),
            lock_off: mean(&|d| d.params.lock_off),
        };
        let on: Vec<f64> = devices.iter().map(|d| d.params.lock_on).collect();
        let off: Vec<f64> = devices.iter().map(|d| d.params.lock_off).collect();
        Ok(Self {
            lock_on_cdf: LockCdf::from_samples(&on),
            lock_off_cdf: LockCdf::from_samples(&off),
            devices,
            stats,
        })
    }

    pub fn len(&self) -> usize {
        self.devices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.devices.is_empty()
    }

    pub fn on_fraction(&self) -> f64 {
        self.devices.iter().filter(|d| d.state.on).count() as f64 / self.len() as f64
    }

    pub fn mean_temperature(&self) -> f64 {
        self.devices.iter().map(|d| d.state.temperature).sum::<f64>() / self.len() as f64
    }

    /// Stationary expected aggregate power including startup peaks, W.
    pub fn closed_form_baseline(&self) -> f64 {
        self.devices
            .iter()
            .map(|d| {
                let p = &d.params;
                let period = d.cycle.on + d.cycle.off;
                let startup = p.startup_duration.min(d.cycle.on);
                let excess = p.peak_factor
                    * (startup - startup * startup / (2.0 * p.startup_duration));
                p.nominal_power * (d.cycle.duty + excess / period)
            })
            .sum()
    }
}

/// How the baseline consumption is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineMode {
    /// Smoothed consumption of an uncontrolled run of the same population.
    #[default]
    Empirical,
    /// Stationary closed-form expectation, constant in time.
    ClosedForm,
}

/// Smooths an uncontrolled power trace into a baseline with a centered window.
pub fn baseline_power(uncontrolled: &[f64], window: usize) -> Vec<f64> {
    centered_moving_average(uncontrolled, window)
}
