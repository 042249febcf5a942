//! Closed-form bounds used to tune the controller, and checks against
//! sampled or directly iterated counterparts.

pub mod oracle;
pub mod report;

use serde::{Deserialize, Serialize};

use crate::error::AnalysisError;
use crate::population::PopulationStats;
use crate::thermal::cycle_durations_raw;

/// Length of a day in seconds.
pub const DAY: f64 = 86_400.0;

/// Time after a simultaneous activation until which the mean-parameter
/// startup estimate stays above the aggregate startup power, for startup
/// durations uniform on `[n_min, n_max]`.
pub fn startup_bound_tlim(n_min: f64, n_max: f64) -> Result<f64, AnalysisError> {
    if !(n_min > 0.0 && n_max >= n_min && n_max.is_finite()) {
        return Err(AnalysisError::Precondition(format!(
            "startup durations need 0 < min <= max, got [{n_min}, {n_max}]"
        )));
    }
    Ok(n_max * (n_min + n_max) / (3.0 * n_max - n_min))
}

/// `E[(1 - t/N)_+]` for `N` uniform on `[n_min, n_max]`.
pub fn uniform_startup_excess(t: f64, n_min: f64, n_max: f64) -> f64 {
    if t <= 0.0 {
        return 1.0;
    }
    if n_max <= n_min {
        return (1.0 - t / n_min).max(0.0);
    }
    if t >= n_max {
        return 0.0;
    }
    let lo = t.max(n_min);
    ((n_max - lo) - t * (n_max / lo).ln()) / (n_max - n_min)
}

/// Mean-parameter inputs of the corrective-gain upper bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KcUpperInputs {
    pub ambient: f64,
    pub deadband_width: f64,
    /// Cooling span `eta R P_n`, degC.
    pub span: f64,
    pub alpha: f64,
    /// `beta P_n`, degC/s.
    pub beta_power: f64,
    pub nominal_temperature: f64,
    pub dt: f64,
}

impl KcUpperInputs {
    /// Refrigerator means: 22 degC ambient, 2 degC band around 5 degC, 70 degC
    /// span and `alpha = 5e-5 /s`.
    pub fn reference() -> Self {
        Self {
            ambient: 22.0,
            deadband_width: 2.0,
            span: 70.0,
            alpha: 5e-5,
            beta_power: 5e-5 * 70.0,
            nominal_temperature: 5.0,
            dt: 1.0,
        }
    }

    pub fn from_stats(s: &PopulationStats) -> Self {
        Self {
            ambient: s.ambient,
            deadband_width: s.deadband_width,
            span: s.span,
            alpha: 1.0 / s.rc,
            beta_power: s.beta_power,
            nominal_temperature: s.nominal_temperature,
            dt: 1.0,
        }
    }

    /// Closed-form duty cycle with the band centred on `mean_temperature`.
    pub fn duty_at(&self, mean_temperature: f64) -> Result<f64, AnalysisError> {
        let half = 0.5 * self.deadband_width;
        Ok(cycle_durations_raw(
            1.0 / self.alpha,
            self.ambient,
            self.span,
            mean_temperature - half,
            mean_temperature + half,
        )?
        .duty)
    }
}

/// Step of the central difference used for `dD/dT`, degC.
pub const DUTY_SLOPE_STEP: f64 = 1e-4;

/// Largest corrective gain that does not overturn the resetting term,
/// `|dt beta_P dD/dT|` at the nominal temperature.
pub fn kc_upper_bound(p: &KcUpperInputs) -> Result<f64, AnalysisError> {
    let h = DUTY_SLOPE_STEP;
    let t = p.nominal_temperature;
    let slope = (p.duty_at(t + h)? - p.duty_at(t - h)?) / (2.0 * h);
    Ok((p.dt * p.beta_power * slope).abs())
}

/// Inputs of the corrective-gain lower bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainBoundInputs {
    /// Frequency bias during the event, Hz.
    pub delta: f64,
    /// Event length, s.
    pub n_ev: f64,
    /// Allowed settling time after the event, s.
    pub n_rec: f64,
    /// Mean-temperature tolerance during the event, degC.
    pub tolerance: f64,
    /// Mean-temperature tolerance after settling, degC.
    pub settled_tolerance: f64,
    /// `D_r dt beta_P / df_max`, degC per Hz.
    pub gamma: f64,
}

impl GainBoundInputs {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        delta: f64,
        n_ev: f64,
        n_rec: f64,
        tolerance: f64,
        settled_tolerance: f64,
        reserve_duty: f64,
        beta_power: f64,
        df_max: f64,
    ) -> Result<Self, AnalysisError> {
        let g = Self {
            delta,
            n_ev,
            n_rec,
            tolerance,
            settled_tolerance,
            gamma: reserve_duty * beta_power / df_max,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<(), AnalysisError> {
        let ok = self.delta >= 0.0
            && self.n_ev >= 0.0
            && self.n_rec >= 0.0
            && self.settled_tolerance > 0.0
            && self.settled_tolerance < self.tolerance
            && self.gamma > 0.0
            && [self.delta, self.n_ev, self.n_rec, self.tolerance, self.gamma]
                .iter()
                .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(AnalysisError::Precondition(format!("invalid gain bound inputs: {self:?}")))
        }
    }

    /// Deviation at the end of the event, `gamma delta (1 - lambda^N_ev) / (1 - lambda)`.
    pub fn event_deviation(&self, k_c: f64) -> f64 {
        self.gamma * self.delta * geometric_sum(k_c, self.n_ev)
    }

    /// Deviation `n_rec` seconds after the event.
    pub fn settled_deviation(&self, k_c: f64) -> f64 {
        self.event_deviation(k_c) * (self.n_rec * (-k_c).ln_1p()).exp()
    }

    pub fn satisfied(&self, k_c: f64) -> bool {
        self.event_deviation(k_c) <= self.tolerance
            && self.settled_deviation(k_c) <= self.settled_tolerance
    }
}

/// `sum_{k < n} (1 - k_c)^k`.
fn geometric_sum(k_c: f64, n: f64) -> f64 {
    if k_c <= 0.0 {
        return n;
    }
    if k_c >= 1.0 {
        return if n > 0.0 { 1.0 } else { 0.0 };
    }
    -(n * (-k_c).ln_1p()).exp_m1() / k_c
}

/// Resolution of [`kc_lower_bound`].
pub const KC_RESOLUTION: f64 = 1e-7;

/// Smallest corrective gain that keeps the mean temperature within
/// `tolerance` during a biased event and within `settled_tolerance` after
/// `n_rec` seconds.
pub fn kc_lower_bound(g: &GainBoundInputs) -> Result<f64, AnalysisError> {
    g.validate()?;
    if g.delta == 0.0 || g.satisfied(0.0) {
        return Ok(0.0);
    }
    if !g.satisfied(1.0 - 1e-9) {
        return Err(AnalysisError::Infeasible(format!(
            "gamma delta = {} exceeds the tolerance {}",
            g.gamma * g.delta,
            g.tolerance
        )));
    }
    let (mut lo, mut hi) = (0.0, 1.0 - 1e-9);
    while hi - lo > 1e-3 * KC_RESOLUTION {
        let mid = 0.5 * (lo + hi);
        if g.satisfied(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Mean and variance of a device's cumulative limit shift when each
/// requested change `history[k]` is applied as a step of `resolution` with
/// probability `|history[k]| / resolution`.
pub fn limit_shift_moments(history: &[f64], resolution: f64) -> Result<(f64, f64), AnalysisError> {
    if !(resolution > 0.0) {
        return Err(AnalysisError::Precondition(format!(
            "resolution must be positive, got {resolution}"
        )));
    }
    let mut mean = 0.0;
    let mut var = 0.0;
    for (k, &x) in history.iter().enumerate() {
        if !(x.abs() <= resolution) {
            return Err(AnalysisError::Precondition(format!(
                "change {x} at step {k} exceeds the resolution {resolution}"
            )));
        }
        mean += x;
        var += x.abs() * (resolution - x.abs());
    }
    Ok((mean, var))
}

/// Largest door-open thermal resistance that produces a daily energy uplift
/// of `uplift` with `openings` openings of `duration` seconds per day.
pub fn door_resistance_bound(
    resistance: f64,
    uplift: f64,
    openings: f64,
    duration: f64,
) -> Result<f64, AnalysisError> {
    if !(resistance > 0.0 && uplift >= 0.0 && openings > 0.0 && duration > 0.0) {
        return Err(AnalysisError::Precondition(format!(
            "door bound needs positive inputs, got R={resistance}, xi={uplift}, \
             openings={openings}, duration={duration}"
        )));
    }
    Ok(resistance / (1.0 + DAY / (openings * duration) * uplift))
}
