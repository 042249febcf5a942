//! Central controller: desired duty cycle, broadcast switching probability and
//! thermostat-limit resetting.
//!
//! The controller never observes device states. It keeps an estimate of the
//! fraction of active devices, of the fractions locked by recent switching
//! and of the population mean temperature, and derives every broadcast from
//! those estimates and the population statistics.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::ControllerError;
use crate::population::{LockCdf, Population, PopulationStats};
use crate::thermal::{cycle_durations_raw, DT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControllerMode {
    /// Lock-, startup- and temperature-aware controller.
    #[default]
    Proposed,
    /// Duty-cycle difference switching with limit resetting that ignores
    /// lockouts and thermostat dynamics.
    Simple1,
    /// Duty-cycle difference switching without limit resetting.
    Simple2,
    /// No control actions.
    Uncontrolled,
}

impl std::fmt::Display for ControllerMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ControllerMode::Proposed => "proposed",
            ControllerMode::Simple1 => "simple1",
            ControllerMode::Simple2 => "simple2",
            ControllerMode::Uncontrolled => "uncontrolled",
        })
    }
}

impl std::str::FromStr for ControllerMode {
    type Err = ControllerError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "proposed" => Ok(Self::Proposed),
            "simple1" => Ok(Self::Simple1),
            "simple2" => Ok(Self::Simple2),
            "uncontrolled" | "none" => Ok(Self::Uncontrolled),
            other => Err(ControllerError::Config(format!("unknown controller mode `{other}`"))),
        }
    }
}

/// User-facing controller settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControllerConfig {
    pub mode: ControllerMode,
    /// Duty-cycle reserve `D^r` offered at full activation.
    pub reserve_duty: f64,
    /// Frequency deviation of full activation, Hz.
    pub df_max: f64,
    /// Frequency deadband, Hz.
    pub deadband: f64,
    /// Mean-temperature restoring gain, 1/s.
    pub k_c: f64,
    /// Thermostat resolution `dT_res`, degC. Zero applies every limit change
    /// exactly.
    pub resolution: f64,
    /// Maximum distance, degC, of a device's cumulative limit shift from the
    /// population mean shift. `None` disables the check.
    pub band: Option<f64>,
    /// Locked fraction at which the controllability diagnostic fires.
    pub controllability_warning: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            mode: ControllerMode::Proposed,
            reserve_duty: 0.15,
            df_max: 0.2,
            deadband: 0.0,
            k_c: 0.5e-4,
            resolution: 0.0,
            band: None,
            controllability_warning: 0.95,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self, nominal_duty: f64) -> Result<(), ControllerError> {
        let err = |m: String| Err(ControllerError::Config(m));
        if !(self.df_max > 0.0) {
            return err(format!("df_max must be positive, got {}", self.df_max));
        }
        if !(self.deadband >= 0.0) || self.deadband >= self.df_max {
            return err(format!("deadband must lie in [0, df_max), got {}", self.deadband));
        }
        if !(self.k_c >= 0.0) || !self.k_c.is_finite() {
            return err(format!("k_c must be non-negative, got {}", self.k_c));
        }
        if !(self.resolution >= 0.0) || !self.resolution.is_finite() {
            return err(format!("resolution must be non-negative, got {}", self.resolution));
        }
        if let Some(b) = self.band {
            if !(b > 0.0) {
                return err(format!("band must be positive, got {b}"));
            }
        }
        if !(self.reserve_duty >= 0.0)
            || self.reserve_duty > nominal_duty
            || self.reserve_duty > 1.0 - nominal_duty
        {
            return err(format!(
                "reserve duty {} does not fit around the nominal duty {nominal_duty}",
                self.reserve_duty
            ));
        }
        Ok(())
    }
}

/// Population knowledge available to the controller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerConstants {
    pub stats: PopulationStats,
    pub lock_on: LockCdf,
    pub lock_off: LockCdf,
}

impl ControllerConstants {
    pub fn from_population(pop: &Population) -> Self {
        Self {
            stats: pop.stats.clone(),
            lock_on: pop.lock_on_cdf.clone(),
            lock_off: pop.lock_off_cdf.clone(),
        }
    }

    /// Mean cycle durations at mean temperature `mean_temp`, from the
    /// closed form with mean parameters. Falls back to the nominal means when
    /// the limits leave the feasible range.
    pub fn cycle_at(&self, mean_temp: f64) -> (f64, f64, f64) {
        let s = &self.stats;
        let half = 0.5 * s.deadband_width;
        match cycle_durations_raw(s.rc, s.ambient, s.span, mean_temp - half, mean_temp + half) {
            Ok(c) => (c.on, c.off, c.duty),
            Err(_) => {
                let duty = if mean_temp >= s.ambient {
                    0.0
                } else {
                    ((s.ambient - mean_temp) / s.span).clamp(0.0, 1.0)
                };
                (s.t_on, s.t_off, duty)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    /// Switch inactive devices on.
    On,
    /// Switch active devices off.
    Off,
}

/// Broadcast of one control step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepCommand {
    pub desired_duty: f64,
    pub switch_fraction: f64,
    pub probability: f64,
    pub direction: Direction,
    pub saturated: bool,
    /// Limit-resetting term, degC per step.
    pub k_r: f64,
    /// Mean limit change `dT_lim`, degC per step.
    pub limit_change: f64,
    /// Probability that an eligible device applies `shift_step`.
    pub shift_probability: f64,
    /// Limit shift applied by a device that takes the step, degC.
    pub shift_step: f64,
    /// Population mean limit shift before this step, degC.
    pub band_center: f64,
    /// Whether locked devices also apply the limit shift.
    pub shift_locked: bool,
    pub l_on: f64,
    pub l_off: f64,
}

impl StepCommand {
    pub fn idle(desired_duty: f64) -> Self {
        Self {
            desired_duty,
            switch_fraction: 0.0,
            probability: 0.0,
            direction: Direction::On,
            saturated: false,
            k_r: 0.0,
            limit_change: 0.0,
            shift_probability: 0.0,
            shift_step: 0.0,
            band_center: 0.0,
            shift_locked: false,
            l_on: 0.0,
            l_off: 0.0,
        }
    }
}

/// Applies the deadband and saturates at full activation.
#[inline]
pub fn effective_deviation(df: f64, deadband: f64, df_max: f64) -> f64 {
    if df.abs() <= deadband {
        0.0
    } else {
        df.clamp(-df_max, df_max)
    }
}

/// Desired duty cycle for deviation `df`.
pub fn desired_duty(df: f64, nominal_duty: f64, cfg: &ControllerConfig) -> f64 {
    nominal_duty + cfg.reserve_duty * effective_deviation(df, cfg.deadband, cfg.df_max) / cfg.df_max
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Switching {
    pub probability: f64,
    pub direction: Direction,
    pub saturated: bool,
}

fn ratio(num: f64, den: f64, direction: Direction) -> Switching {
    if num <= 0.0 {
        return Switching {
            probability: 0.0,
            direction,
            saturated: false,
        };
    }
    if den <= 0.0 {
        return Switching {
            probability: 1.0,
            direction,
            saturated: true,
        };
    }
    let p = num / den;
    Switching {
        probability: p.min(1.0),
        direction,
        saturated: p > 1.0,
    }
}

/// Benchmark switching probability from the change of the desired duty
/// cycle between consecutive steps.
pub fn benchmark_probability(desired: f64, desired_prev: f64) -> Switching {
    let dd = desired - desired_prev;
    if dd >= 0.0 {
        ratio(dd, 1.0 - desired_prev, Direction::On)
    } else {
        ratio(-dd, desired_prev, Direction::Off)
    }
}

/// Switching probability for a commanded fraction `x` given the estimated
/// active and locked fractions.
pub fn switching_probability(x: f64, active_prev: f64, l_on: f64, l_off: f64) -> Switching {
    if x >= 0.0 {
        ratio(x, 1.0 - active_prev - l_off, Direction::On)
    } else {
        ratio(-x, active_prev - l_on, Direction::Off)
    }
}

/// Probability of a resolution-sized limit step.
#[inline]
pub fn shift_probability(limit_change: f64, resolution: f64) -> f64 {
    if resolution <= 0.0 {
        1.0
    } else {
        (limit_change.abs() / resolution).min(1.0)
    }
}

/// Whether a device with state `on` switches under `cmd` given draw `u`.
#[inline]
pub fn device_decision(on: bool, locked: bool, cmd: &StepCommand, u: f64) -> bool {
    if locked || cmd.probability <= 0.0 {
        return false;
    }
    let eligible = match cmd.direction {
        Direction::On => !on,
        Direction::Off => on,
    };
    eligible && u < cmd.probability
}

/// Limit shift taken by a device with cumulative shift `cumulative` under
/// `cmd` given draw `u`, or zero.
#[inline]
pub fn device_limit_shift(cmd: &StepCommand, band: Option<f64>, cumulative: f64, u: f64) -> f64 {
    if cmd.shift_step == 0.0 || u >= cmd.shift_probability {
        return 0.0;
    }
    if let Some(b) = band {
        if (cumulative + cmd.shift_step - cmd.band_center).abs() > b {
            return 0.0;
        }
    }
    cmd.shift_step
}

/// Convolution tables over switching lags `1..=window`.
#[derive(Debug, Clone)]
struct LagTables {
    s_on: Vec<f64>,
    f_on: Vec<f64>,
    s_off: Vec<f64>,
    f_off: Vec<f64>,
    startup: Vec<f64>,
}

impl LagTables {
    fn new(c: &ControllerConstants, window: usize, aware: bool) -> Self {
        let mut t = Self {
            s_on: vec![0.0; window + 1],
            f_on: vec![1.0; window + 1],
            s_off: vec![0.0; window + 1],
            f_off: vec![1.0; window + 1],
            startup: vec![0.0; window + 1],
        };
        if aware {
            let (u, ns) = (c.stats.peak_factor, c.stats.startup_duration);
            for j in 1..=window {
                t.s_on[j] = c.lock_on.survival(j);
                t.f_on[j] = c.lock_on.cdf(j);
                t.s_off[j] = c.lock_off.survival(j);
                t.f_off[j] = c.lock_off.cdf(j);
                t.startup[j] = u * (1.0 - j as f64 / ns).max(0.0);
            }
        }
        t
    }
}

/// Estimator state advanced once per control step.
#[derive(Debug, Clone)]
pub struct Estimator {
    cfg: ControllerConfig,
    consts: ControllerConstants,
    door_delta: Vec<f64>,
    tables: LagTables,
    window: usize,
    history: VecDeque<f64>,
    old_pos: f64,
    old_neg: f64,
    step: usize,
    mean_temp: f64,
    active: f64,
    nominal_estimate: f64,
    /// Estimated thermal duty at the nominal mean temperature.
    nominal_ref: f64,
    door_prev: f64,
    stationary_on: f64,
    stationary_off: f64,
    desired_prev: f64,
    saturations: usize,
    warnings: usize,
}

impl Estimator {
    /// `door_delta[t]` is the expected extra duty cycle caused by door
    /// openings at step `t`; an empty profile means none.
    pub fn new(
        cfg: ControllerConfig,
        consts: ControllerConstants,
        door_delta: Vec<f64>,
    ) -> Result<Self, ControllerError> {
        cfg.validate(consts.stats.duty)?;
        let aware = cfg.mode == ControllerMode::Proposed;
        let window = if aware {
            consts
                .lock_on
                .horizon()
                .max(consts.lock_off.horizon())
                .max(consts.stats.startup_duration.ceil() as usize)
                + 1
        } else {
            1
        };
        let tables = LagTables::new(&consts, window, aware);
        let nominal_temp = consts.stats.nominal_temperature;
        let door0 = door_delta.first().copied().unwrap_or(0.0);
        let mut est = Self {
            tables,
            window,
            history: VecDeque::with_capacity(window + 1),
            old_pos: 0.0,
            old_neg: 0.0,
            step: 0,
            mean_temp: nominal_temp,
            active: consts.stats.duty + if aware { door0 } else { 0.0 },
            nominal_estimate: 0.0,
            nominal_ref: 0.0,
            door_prev: door0,
            stationary_on: 0.0,
            stationary_off: 0.0,
            desired_prev: consts.stats.duty,
            saturations: 0,
            warnings: 0,
            cfg,
            consts,
            door_delta,
        };
        est.nominal_estimate = est.refresh_nominal(nominal_temp, door0);
        est.nominal_ref = est.nominal_estimate - door0;
        Ok(est)
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.cfg
    }

    pub fn constants(&self) -> &ControllerConstants {
        &self.consts
    }

    pub fn mean_temperature(&self) -> f64 {
        self.mean_temp
    }

    pub fn active_duty(&self) -> f64 {
        self.active
    }

    pub fn saturations(&self) -> usize {
        self.saturations
    }

    pub fn controllability_warnings(&self) -> usize {
        self.warnings
    }

    /// Replaces the mean-temperature estimate with a measured value.
    pub fn resync(&mut self, mean_temp: f64) {
        self.mean_temp = mean_temp;
    }

    fn door_at(&self, t: usize) -> f64 {
        if self.cfg.mode != ControllerMode::Proposed || self.door_delta.is_empty() {
            0.0
        } else {
            self.door_delta[t.min(self.door_delta.len() - 1)]
        }
    }

    /// Recomputes the stationary lock fractions at `mean_temp` and returns
    /// the estimated nominal duty cycle including door openings.
    fn refresh_nominal(&mut self, mean_temp: f64, door: f64) -> f64 {
        let (on, off, duty) = self.consts.cycle_at(mean_temp);
        let period = on + off;
        if period > 0.0 && self.cfg.mode == ControllerMode::Proposed {
            self.stationary_on = (self.consts.stats.lock_on / period).min(1.0);
            self.stationary_off = (self.consts.stats.lock_off / period).min(1.0);
        }
        duty + door
    }

    /// Estimated fractions of devices locked on and off at the current step.
    pub fn lock_fractions(&self) -> (f64, f64) {
        if self.cfg.mode != ControllerMode::Proposed {
            return (0.0, 0.0);
        }
        let mut on = self.stationary_on;
        let mut off = self.stationary_off;
        let n = self.history.len();
        for j in 1..=n.min(self.window) {
            let x = self.history[n - j];
            if x >= 0.0 {
                on += x * self.tables.s_on[j];
            } else {
                off -= x * self.tables.s_off[j];
            }
        }
        (on, off)
    }

    fn startup_sum(&self) -> f64 {
        let n = self.history.len();
        let mut sum = 0.0;
        for j in 1..=n.min(self.window) {
            let w = self.tables.startup[j];
            if w == 0.0 {
                break;
            }
            sum += self.history[n - j] * w;
        }
        sum
    }

    /// Limit-resetting term that cancels the mean-temperature drift caused by
    /// past switching, degC per step.
    pub fn resetting_factor(&self, l_on: f64, l_off: f64) -> f64 {
        let s = &self.consts.stats;
        let idle_rate = s.alpha * (s.ambient - self.mean_temp);
        let run_rate = idle_rate - s.beta_power;
        let n = self.history.len();
        let (mut pos_f, mut pos, mut neg, mut neg_f) = (0.0, 0.0, 0.0, 0.0);
        for j in 1..=n.min(self.window) {
            let x = self.history[n - j];
            if x >= 0.0 {
                pos += x;
                pos_f += x * self.tables.f_on[j];
            } else {
                neg += x;
                neg_f += x * self.tables.f_off[j];
            }
        }
        pos += self.old_pos;
        pos_f += self.old_pos;
        neg += self.old_neg;
        neg_f += self.old_neg;
        let sum = run_rate * pos_f - idle_rate * pos + run_rate * neg - idle_rate * neg_f;
        let r = (1.0 - self.stationary_on - self.stationary_off)
            / (1.0 - l_on - l_off).max(1e-3);
        r * sum * DT
    }

    fn push(&mut self, x: f64) {
        self.history.push_back(x);
        if self.history.len() > self.window {
            let old = self.history.pop_front().expect("non-empty");
            if old >= 0.0 {
                self.old_pos += old;
            } else {
                self.old_neg += old;
            }
        }
    }

    /// Computes the broadcast for deviation `df` and advances the estimates.
    pub fn step(&mut self, df: f64) -> StepCommand {
        let t = self.step;
        self.step += 1;
        let stats_duty = self.consts.stats.duty;
        match self.cfg.mode {
            ControllerMode::Uncontrolled => StepCommand::idle(stats_duty),
            ControllerMode::Simple1 | ControllerMode::Simple2 => self.step_simple(df),
            ControllerMode::Proposed => self.step_proposed(t, df),
        }
    }

    fn step_simple(&mut self, df: f64) -> StepCommand {
        let desired = desired_duty(df, self.consts.stats.duty, &self.cfg);
        let x = desired - self.desired_prev;
        let sw = benchmark_probability(desired, self.desired_prev);
        if sw.saturated {
            self.note_saturation(desired);
        }
        let mut cmd = StepCommand::idle(desired);
        cmd.switch_fraction = x;
        cmd.probability = sw.probability;
        cmd.direction = sw.direction;
        cmd.saturated = sw.saturated;
        if self.cfg.mode == ControllerMode::Simple1 {
            // Every past switch contributes the full cooling rate difference.
            let k_r = -self.consts.stats.beta_power
                * (self.desired_prev - self.consts.stats.duty)
                * DT;
            cmd.k_r = k_r;
            cmd.limit_change = k_r;
            cmd.band_center = self.mean_temp - self.consts.stats.nominal_temperature;
            cmd.shift_probability = shift_probability(k_r, self.cfg.resolution);
            cmd.shift_step = self.quantize(k_r);
            cmd.shift_locked = true;
            self.mean_temp += k_r;
        }
        self.desired_prev = desired;
        self.active = desired;
        cmd
    }

    fn quantize(&self, limit_change: f64) -> f64 {
        if self.cfg.resolution > 0.0 && limit_change != 0.0 {
            self.cfg.resolution.copysign(limit_change)
        } else {
            limit_change
        }
    }

    fn note_saturation(&mut self, value: f64) {
        self.saturations += 1;
        if self.saturations <= 3 {
            log::debug!("switching probability saturated at step {} ({value:.4})", self.step - 1);
        }
    }

    fn step_proposed(&mut self, t: usize, df: f64) -> StepCommand {
        let (duty, peak, nominal_temp) = {
            let s = &self.consts.stats;
            (s.duty, s.peak_factor, s.nominal_temperature)
        };
        let door = self.door_at(t);
        // The reserve is offered around the baseline duty at the current
        // mean temperature.
        let baseline = duty + door + (self.nominal_estimate - self.door_prev - self.nominal_ref);
        let desired = desired_duty(df, baseline, &self.cfg);
        let (l_on, l_off) = self.lock_fractions();
        if l_on + l_off >= self.cfg.controllability_warning {
            self.warnings += 1;
            if self.warnings == 1 {
                log::warn!(
                    "locked fraction {:.3} at step {t} leaves little controllable population",
                    l_on + l_off
                );
            }
        }
        let bracket = desired - self.active - self.startup_sum();
        let nu = if bracket >= 0.0 { peak } else { 0.0 };
        let x = bracket / (1.0 + nu);
        let sw = switching_probability(x, self.active, l_on, l_off);
        if sw.saturated {
            self.note_saturation(x);
        }
        let k_r = self.resetting_factor(l_on, l_off);
        let deviation = self.mean_temp - nominal_temp;
        let limit_change = k_r - self.cfg.k_c * deviation * DT;
        let cmd = StepCommand {
            desired_duty: desired,
            switch_fraction: x,
            probability: sw.probability,
            direction: sw.direction,
            saturated: sw.saturated,
            k_r,
            limit_change,
            shift_probability: shift_probability(limit_change, self.cfg.resolution),
            shift_step: self.quantize(limit_change),
            band_center: deviation,
            shift_locked: false,
            l_on,
            l_off,
        };
        self.mean_temp += limit_change * (1.0 - l_on - l_off);
        self.push(x);
        let nominal = self.refresh_nominal(self.mean_temp, door);
        self.active = (self.active + x + nominal - self.nominal_estimate).clamp(0.0, 1.0);
        self.nominal_estimate = nominal;
        self.door_prev = door;
        cmd
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::population::{sample_population, Dist, PopulationSpec};

    fn consts(spec: &PopulationSpec) -> ControllerConstants {
        ControllerConstants::from_population(&sample_population(spec, 5).unwrap())
    }

    #[test]
    fn desired_duty_saturates_and_respects_deadband() {
        let cfg = ControllerConfig {
            deadband: 0.01,
            ..ControllerConfig::default()
        };
        assert_eq!(desired_duty(0.005, 0.25, &cfg), 0.25);
        assert!((desired_duty(0.1, 0.25, &cfg) - 0.325).abs() < 1e-12);
        assert!((desired_duty(0.5, 0.25, &cfg) - 0.40).abs() < 1e-12);
        assert!((desired_duty(-0.5, 0.25, &cfg) - 0.10).abs() < 1e-12);
    }

    #[test]
    fn benchmark_rule() {
        let s = benchmark_probability(0.30, 0.25);
        assert_eq!(s.direction, Direction::On);
        assert!((s.probability - 0.05 / 0.75).abs() < 1e-12);
        let s = benchmark_probability(0.20, 0.25);
        assert_eq!(s.direction, Direction::Off);
        assert!((s.probability - 0.2).abs() < 1e-12);
        assert!(benchmark_probability(1.2, 0.5).saturated);
    }

    #[test]
    fn switching_probability_accounts_for_locks() {
        let s = switching_probability(0.0075, 0.25, 0.02, 0.05);
        assert!((s.probability - 0.0075 / 0.70).abs() < 1e-12);
        let s = switching_probability(-0.01, 0.25, 0.05, 0.0);
        assert!((s.probability - 0.05).abs() < 1e-12);
        let s = switching_probability(0.1, 0.6, 0.0, 0.4);
        assert!(s.saturated && s.probability == 1.0);
    }

    #[test]
    fn device_rules() {
        let mut cmd = StepCommand::idle(0.25);
        cmd.probability = 0.5;
        cmd.direction = Direction::On;
        assert!(device_decision(false, false, &cmd, 0.4));
        assert!(!device_decision(false, false, &cmd, 0.6));
        assert!(!device_decision(true, false, &cmd, 0.1));
        assert!(!device_decision(false, true, &cmd, 0.1));
        cmd.shift_step = 0.1;
        cmd.shift_probability = 0.3;
        cmd.band_center = 0.0;
        assert_eq!(device_limit_shift(&cmd, None, 0.0, 0.2), 0.1);
        assert_eq!(device_limit_shift(&cmd, None, 0.0, 0.5), 0.0);
        assert_eq!(device_limit_shift(&cmd, Some(1.0), 0.95, 0.2), 0.0);
        assert_eq!(device_limit_shift(&cmd, Some(1.0), 0.85, 0.2), 0.1);
    }

    #[test]
    fn resolution_probability() {
        assert!((shift_probability(-0.001, 0.1) - 0.01).abs() < 1e-15);
        assert_eq!(shift_probability(0.3, 0.1), 1.0);
        assert_eq!(shift_probability(0.3, 0.0), 1.0);
    }

    #[test]
    fn first_steps_match_benchmark_without_locks() {
        let spec = PopulationSpec {
            lock_on: Dist::Fixed(0.0),
            lock_off: Dist::Fixed(0.0),
            peak_factor: Dist::Fixed(0.0),
            ..PopulationSpec::with_size(500)
        };
        let cfg = ControllerConfig {
            k_c: 0.0,
            ..ControllerConfig::default()
        };
        let c = consts(&spec);
        let mut proposed = Estimator::new(cfg, c.clone(), Vec::new()).unwrap();
        let mut simple = Estimator::new(
            ControllerConfig {
                mode: ControllerMode::Simple2,
                ..cfg
            },
            c,
            Vec::new(),
        )
        .unwrap();
        for df in [0.05, 0.12] {
            let p = proposed.step(df);
            let s = simple.step(df);
            assert!((p.probability - s.probability).abs() < 1e-12);
            assert_eq!(p.direction, s.direction);
        }
    }

    #[test]
    fn resetting_right_after_a_step_uses_idle_rate() {
        let c = consts(&PopulationSpec::with_size(2000));
        let mut est = Estimator::new(ControllerConfig::default(), c.clone(), Vec::new()).unwrap();
        let first = est.step(0.1);
        assert_eq!(first.k_r, 0.0);
        let (st_on, st_off) = (est.stationary_on, est.stationary_off);
        let second = est.step(0.1);
        let s = &c.stats;
        let idle = s.alpha * (s.ambient - s.nominal_temperature);
        let r = (1.0 - st_on - st_off) / (1.0 - second.l_on - second.l_off);
        let expected = -r * first.switch_fraction * idle;
        assert!(
            (second.k_r - expected).abs() < 1e-12 * expected.abs().max(1.0),
            "{} vs {expected}",
            second.k_r
        );
    }

    #[test]
    fn sustained_activation_settles_resetting_factor() {
        let c = consts(&PopulationSpec::with_size(5000));
        let cfg = ControllerConfig {
            k_c: 0.0,
            ..ControllerConfig::default()
        };
        let mut est = Estimator::new(cfg, c.clone(), Vec::new()).unwrap();
        let mut last = StepCommand::idle(0.0);
        for _ in 0..400 {
            last = est.step(0.2);
        }
        let expected = -0.15 * c.stats.beta_power;
        assert!(
            (last.k_r - expected).abs() < 0.03 * expected.abs(),
            "{} vs {expected}",
            last.k_r
        );
    }

    #[test]
    fn invalid_config_is_rejected() {
        let c = consts(&PopulationSpec::with_size(100));
        let bad = ControllerConfig {
            reserve_duty: 0.9,
            ..ControllerConfig::default()
        };
        assert!(Estimator::new(bad, c.clone(), Vec::new()).is_err());
        let bad = ControllerConfig {
            df_max: 0.0,
            ..ControllerConfig::default()
        };
        assert!(Estimator::new(bad, c, Vec::new()).is_err());
    }

    #[test]
    fn mode_names_round_trip() {
        for m in [
            ControllerMode::Proposed,
            ControllerMode::Simple1,
            ControllerMode::Simple2,
            ControllerMode::Uncontrolled,
        ] {
            assert_eq!(m.to_string().parse::<ControllerMode>().unwrap(), m);
        }
    }
}
