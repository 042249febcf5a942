//! Single-refrigerator thermal model and hysteresis thermostat.
//!
//! Temperature follows `dT/dt = alpha (T_a - T) - beta P_n m`, where `m` is the
//! compressor state. Within a step with fixed `m` and door state the solution
//! is an exponential approach to an equilibrium, which [`Coefficients`]
//! evaluates exactly. Door openings raise the heat-exchange rate by the ratio
//! `R / R_op` and leave the cooling rate unchanged.

use serde::{Deserialize, Serialize};

use crate::error::ModelError;

/// Simulation time step in seconds.
pub const DT: f64 = 1.0;

/// Physical and control parameters of one refrigerator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalParams {
    /// Ambient temperature, degC.
    pub ambient: f64,
    /// Heat-exchange rate `1 / (R C)`, 1/s.
    pub alpha: f64,
    /// Cooling per unit energy `eta / C`, degC/J.
    pub beta: f64,
    /// Nominal electrical power, W.
    pub nominal_power: f64,
    /// Thermal capacitance, kJ/degC.
    pub capacitance: f64,
    /// Thermal resistance with the door closed, degC/kW.
    pub resistance: f64,
    /// `R / R_op`, the heat-exchange multiplier while the door is open.
    pub door_ratio: f64,
    /// Startup overshoot `u` as a fraction of nominal power.
    pub peak_factor: f64,
    /// Startup transient duration `N_s`, s.
    pub startup_duration: f64,
    /// Minimum on time after switching on, s.
    pub lock_on: f64,
    /// Minimum off time after switching off, s.
    pub lock_off: f64,
    /// Thermostat setpoint, degC.
    pub setpoint: f64,
    /// Width of the thermostat deadband `T_max - T_min`, degC.
    pub deadband_width: f64,
}

impl ThermalParams {
    pub fn t_min(&self) -> f64 {
        self.setpoint - 0.5 * self.deadband_width
    }

    pub fn t_max(&self) -> f64 {
        self.setpoint + 0.5 * self.deadband_width
    }

    /// Steady-state temperature drop when running, `eta R P_n = beta P_n / alpha`.
    pub fn cooling_span(&self) -> f64 {
        self.beta * self.nominal_power / self.alpha
    }

    /// Nominal coefficient of performance implied by `beta` and `C`.
    pub fn cop(&self) -> f64 {
        self.beta * self.capacitance * 1e3
    }

    pub fn door_alpha(&self) -> f64 {
        self.alpha * self.door_ratio
    }

    /// Temperature derivative at `temperature`, degC/s.
    pub fn drift(&self, temperature: f64, on: bool, door_open: bool) -> f64 {
        let a = if door_open { self.door_alpha() } else { self.alpha };
        let cooling = if on { self.beta * self.nominal_power } else { 0.0 };
        a * (self.ambient - temperature) - cooling
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let positive = [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("nominal_power", self.nominal_power),
            ("capacitance", self.capacitance),
            ("resistance", self.resistance),
            ("door_ratio", self.door_ratio),
            ("startup_duration", self.startup_duration),
            ("deadband_width", self.deadband_width),
        ];
        for (name, value) in positive {
            if !value.is_finite() {
                return Err(ModelError::NotFinite { name, value });
            }
            if value <= 0.0 {
                return Err(ModelError::NonPositive { name, value });
            }
        }
        for (name, value) in [
            ("ambient", self.ambient),
            ("setpoint", self.setpoint),
            ("peak_factor", self.peak_factor),
            ("lock_on", self.lock_on),
            ("lock_off", self.lock_off),
        ] {
            if !value.is_finite() {
                return Err(ModelError::NotFinite { name, value });
            }
        }
        for (name, value) in [
            ("peak_factor", self.peak_factor),
            ("lock_on", self.lock_on),
            ("lock_off", self.lock_off),
        ] {
            if value < 0.0 {
                return Err(ModelError::NonPositive { name, value });
            }
        }
        let rc = self.resistance * self.capacitance;
        if ((rc * self.alpha) - 1.0).abs() > 1e-6 {
            return Err(ModelError::Population(format!(
                "R C = {rc} s is inconsistent with alpha = {}",
                self.alpha
            )));
        }
        check_limits(self.ambient, self.cooling_span(), self.t_min(), self.t_max())
    }
}

fn check_limits(ambient: f64, span: f64, t_min: f64, t_max: f64) -> Result<(), ModelError> {
    if !(t_max > t_min) {
        return Err(ModelError::EmptyDeadband { t_min, t_max });
    }
    if ambient <= t_max {
        return Err(ModelError::AmbientBelowLimit { ambient, t_max });
    }
    if span <= ambient - t_min {
        return Err(ModelError::InsufficientCooling {
            span,
            ambient,
            t_min,
        });
    }
    Ok(())
}

/// Dynamic state of one refrigerator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceState {
    pub temperature: f64,
    pub on: bool,
    pub t_min: f64,
    pub t_max: f64,
    /// Seconds since the last switch in either direction. While the device is
    /// on this is also the time since startup.
    pub time_since_switch: f64,
    pub door_open: bool,
}

impl DeviceState {
    /// Whether the device is still inside its minimum on or off time.
    #[inline]
    pub fn locked(&self, params: &ThermalParams) -> bool {
        let lock = if self.on { params.lock_on } else { params.lock_off };
        self.time_since_switch < lock
    }

    #[inline]
    pub fn set_on(&mut self, on: bool) {
        if self.on != on {
            self.on = on;
            self.time_since_switch = 0.0;
        }
    }
}

/// Closed-form cycle durations at fixed limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleDurations {
    pub on: f64,
    pub off: f64,
    pub duty: f64,
}

/// Cycle durations for time constant `rc`, ambient `ambient`, cooling span
/// `span` and limits `[t_min, t_max]`.
pub fn cycle_durations_raw(
    rc: f64,
    ambient: f64,
    span: f64,
    t_min: f64,
    t_max: f64,
) -> Result<CycleDurations, ModelError> {
    if !(rc > 0.0) {
        return Err(ModelError::NonPositive { name: "rc", value: rc });
    }
    if t_max < t_min {
        return Err(ModelError::EmptyDeadband { t_min, t_max });
    }
    if ambient <= t_max {
        return Err(ModelError::AmbientBelowLimit { ambient, t_max });
    }
    if span <= ambient - t_min {
        return Err(ModelError::InsufficientCooling {
            span,
            ambient,
            t_min,
        });
    }
    let on = rc * ((t_max - ambient + span) / (t_min - ambient + span)).ln();
    let off = rc * ((ambient - t_min) / (ambient - t_max)).ln();
    let total = on + off;
    let duty = if total > 0.0 {
        on / total
    } else {
        // Zero-width deadband: the limit of the ratio as the width shrinks.
        (ambient - t_min) / span
    };
    Ok(CycleDurations { on, off, duty })
}

/// Cycle durations of `params` at the limits `[t_min, t_max]`.
pub fn cycle_durations(
    params: &ThermalParams,
    t_min: f64,
    t_max: f64,
) -> Result<CycleDurations, ModelError> {
    cycle_durations_raw(
        1.0 / params.alpha,
        params.ambient,
        params.cooling_span(),
        t_min,
        t_max,
    )
}

/// Extra startup power as a fraction of nominal, `u [1 - s / N_s]_+`.
#[inline]
pub fn startup_excess(peak_factor: f64, startup_duration: f64, seconds_on: f64) -> f64 {
    peak_factor * (1.0 - seconds_on / startup_duration).max(0.0)
}

/// Electrical power drawn `seconds_on` seconds after startup, W.
pub fn startup_power(params: &ThermalParams, seconds_on: f64) -> f64 {
    params.nominal_power
        * (1.0 + startup_excess(params.peak_factor, params.startup_duration, seconds_on))
}

/// Applies the thermostat at the current instant.
pub fn hysteresis_switch(state: &DeviceState) -> DeviceState {
    let mut next = *state;
    if !state.on && state.temperature >= state.t_max {
        next.set_on(true);
    } else if state.on && state.temperature <= state.t_min {
        next.set_on(false);
    }
    next
}

/// Integrates the temperature over `dt` with compressor and door state held
/// fixed, ignoring the thermostat.
pub fn step_temperature(state: &DeviceState, params: &ThermalParams, dt: f64) -> DeviceState {
    let a = if state.door_open {
        params.door_alpha()
    } else {
        params.alpha
    };
    let cooling = if state.on {
        params.beta * params.nominal_power
    } else {
        0.0
    };
    let eq = params.ambient - cooling / a;
    let mut next = *state;
    next.temperature = eq + (state.temperature - eq) * (-a * dt).exp();
    next.time_since_switch += dt;
    next
}

/// Energy drawn while running from `s0` to `s0 + len` seconds after startup,
/// J.
#[inline]
pub fn running_energy(nominal_power: f64, peak_factor: f64, startup_duration: f64, s0: f64, len: f64) -> f64 {
    let n = startup_duration;
    let excess = if s0 >= n {
        0.0
    } else {
        let e = (s0 + len).min(n);
        peak_factor * ((e - s0) - (e * e - s0 * s0) / (2.0 * n))
    };
    nominal_power * (len + excess)
}

/// Precomputed one-second propagation coefficients for one device.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coefficients {
    pub alpha: f64,
    pub door_alpha: f64,
    pub ambient: f64,
    /// `exp(-alpha)`.
    pub decay: f64,
    /// `exp(-door_alpha)`.
    pub door_decay: f64,
    /// Equilibrium while running with the door closed.
    pub eq_on: f64,
    /// Equilibrium while running with the door open.
    pub door_eq_on: f64,
    pub nominal_power: f64,
    pub peak_factor: f64,
    pub startup_duration: f64,
}

impl Coefficients {
    pub fn new(params: &ThermalParams) -> Self {
        let cooling = params.beta * params.nominal_power;
        let door_alpha = params.door_alpha();
        Self {
            alpha: params.alpha,
            door_alpha,
            ambient: params.ambient,
            decay: (-params.alpha * DT).exp(),
            door_decay: (-door_alpha * DT).exp(),
            eq_on: params.ambient - cooling / params.alpha,
            door_eq_on: params.ambient - cooling / door_alpha,
            nominal_power: params.nominal_power,
            peak_factor: params.peak_factor,
            startup_duration: params.startup_duration,
        }
    }

    #[inline]
    fn mode(&self, on: bool, door_open: bool) -> (f64, f64, f64) {
        match (on, door_open) {
            (true, false) => (self.alpha, self.decay, self.eq_on),
            (false, false) => (self.alpha, self.decay, self.ambient),
            (true, true) => (self.door_alpha, self.door_decay, self.door_eq_on),
            (false, true) => (self.door_alpha, self.door_decay, self.ambient),
        }
    }

    #[inline]
    fn running_energy(&self, s0: f64, len: f64) -> f64 {
        running_energy(
            self.nominal_power,
            self.peak_factor,
            self.startup_duration,
            s0,
            len,
        )
    }

    /// Advances `state` by one step, switching at the exact instant the
    /// temperature reaches a limit. Returns the energy drawn during the step
    /// in joules, which equals the mean power in watts.
    #[inline]
    pub fn advance(&self, state: &mut DeviceState) -> f64 {
        let (a, decay, eq) = self.mode(state.on, state.door_open);
        let t0 = state.temperature;
        let t1 = eq + (t0 - eq) * decay;
        let crossed = if state.on {
            t1 < state.t_min && t0 > state.t_min
        } else {
            t1 > state.t_max && t0 < state.t_max
        };
        if !crossed {
            let energy = if state.on {
                self.running_energy(state.time_since_switch, DT)
            } else {
                0.0
            };
            state.temperature = t1;
            state.time_since_switch += DT;
            return energy;
        }
        let limit = if state.on { state.t_min } else { state.t_max };
        let tau = (((t0 - eq) / (limit - eq)).ln() / a).clamp(0.0, DT);
        let rest = DT - tau;
        let mut energy = 0.0;
        if state.on {
            energy += self.running_energy(state.time_since_switch, tau);
        }
        state.on = !state.on;
        let (a2, _, eq2) = self.mode(state.on, state.door_open);
        state.temperature = eq2 + (limit - eq2) * (-a2 * rest).exp();
        state.time_since_switch = rest;
        if state.on {
            energy += self.running_energy(0.0, rest);
        }
        energy
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn mean_params() -> ThermalParams {
        let alpha = 5e-5;
        let beta = 4.4e-5;
        let capacitance = 2.0 / beta / 1e3;
        ThermalParams {
            ambient: 22.0,
            alpha,
            beta,
            nominal_power: 80.0,
            capacitance,
            resistance: 1.0 / (alpha * capacitance),
            door_ratio: 25.0,
            peak_factor: 0.25,
            startup_duration: 30.0,
            lock_on: 60.0,
            lock_off: 189.0,
            setpoint: 5.0,
            deadband_width: 2.0,
        }
    }

    #[test]
    fn cycle_times_match_reference_values() {
        let c = cycle_durations_raw(20_000.0, 22.0, 70.0, 4.0, 6.0).unwrap();
        assert!((c.off - 2355.66).abs() < 0.01, "{}", c.off);
        assert!((c.on - 754.8).abs() < 0.05, "{}", c.on);
        assert!((c.duty - 0.24266).abs() < 1e-5, "{}", c.duty);
    }

    #[test]
    fn zero_width_deadband_has_zero_durations() {
        let c = cycle_durations_raw(20_000.0, 22.0, 70.0, 5.0, 5.0).unwrap();
        assert_eq!(c.on, 0.0);
        assert_eq!(c.off, 0.0);
        assert_relative_eq!(c.duty, 17.0 / 70.0);
    }

    #[test]
    fn infeasible_cooling_is_rejected() {
        let err = cycle_durations_raw(20_000.0, 22.0, 17.0, 4.0, 6.0).unwrap_err();
        assert!(matches!(err, ModelError::InsufficientCooling { .. }));
        assert!(cycle_durations_raw(20_000.0, 5.0, 70.0, 4.0, 6.0).is_err());
    }

    #[test]
    fn params_validate() {
        let p = mean_params();
        p.validate().unwrap();
        assert_relative_eq!(p.cooling_span(), 70.4, epsilon = 1e-9);
        assert_relative_eq!(p.cop(), 2.0, epsilon = 1e-12);
        let mut bad = p;
        bad.alpha = -1.0;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn startup_power_profile() {
        let p = mean_params();
        assert_relative_eq!(startup_power(&p, 0.0), 100.0);
        assert_relative_eq!(startup_power(&p, 15.0), 90.0);
        assert_relative_eq!(startup_power(&p, 30.0), 80.0);
        assert_relative_eq!(startup_power(&p, 300.0), 80.0);
    }

    #[test]
    fn hysteresis_switches_at_limits() {
        let s = DeviceState {
            temperature: 6.0,
            on: false,
            t_min: 4.0,
            t_max: 6.0,
            time_since_switch: 5.0,
            door_open: false,
        };
        let n = hysteresis_switch(&s);
        assert!(n.on);
        assert_eq!(n.time_since_switch, 0.0);
        let s2 = DeviceState { temperature: 5.0, ..s };
        assert_eq!(hysteresis_switch(&s2), s2);
        let s3 = DeviceState { temperature: 4.0, on: true, ..s };
        assert!(!hysteresis_switch(&s3).on);
    }

    #[test]
    fn advance_matches_exact_step_without_crossing() {
        let p = mean_params();
        let c = Coefficients::new(&p);
        for &(on, door) in &[(true, false), (false, false), (true, true), (false, true)] {
            let mut s = DeviceState {
                temperature: 5.0,
                on,
                t_min: 4.0,
                t_max: 6.0,
                time_since_switch: 100.0,
                door_open: door,
            };
            let exact = step_temperature(&s, &p, 1.0);
            let e = c.advance(&mut s);
            assert_relative_eq!(s.temperature, exact.temperature, epsilon = 1e-12);
            assert_eq!(e, if on { 80.0 } else { 0.0 });
        }
    }

    #[test]
    fn advance_switches_at_the_crossing_instant() {
        let p = mean_params();
        let c = Coefficients::new(&p);
        let drift = p.drift(6.0, false, false);
        let mut s = DeviceState {
            temperature: 6.0 - 0.25 * drift,
            on: false,
            t_min: 4.0,
            t_max: 6.0,
            time_since_switch: 500.0,
            door_open: false,
        };
        let e = c.advance(&mut s);
        assert!(s.on);
        assert!((s.time_since_switch - 0.75).abs() < 1e-4);
        let expected = c.running_energy(0.0, s.time_since_switch);
        assert_relative_eq!(e, expected, epsilon = 1e-9);
        assert!(s.temperature < 6.0);
    }

    #[test]
    fn integrated_cycle_matches_closed_form() {
        let p = mean_params();
        let c = Coefficients::new(&p);
        let dur = cycle_durations(&p, 4.0, 6.0).unwrap();
        let mut s = DeviceState {
            temperature: 6.0,
            on: true,
            t_min: 4.0,
            t_max: 6.0,
            time_since_switch: 0.0,
            door_open: false,
        };
        let mut on_time = 0.0;
        let mut off_time = 0.0;
        let mut switches = 0;
        while switches < 2 {
            let was_on = s.on;
            let before = s.time_since_switch;
            c.advance(&mut s);
            if s.on != was_on {
                switches += 1;
                let head = 1.0 - s.time_since_switch;
                if was_on {
                    on_time = before + head;
                } else {
                    off_time = before + head;
                }
            }
        }
        assert!((on_time - dur.on).abs() < 1e-6, "{on_time} vs {}", dur.on);
        assert!((off_time - dur.off).abs() < 1e-6, "{off_time} vs {}", dur.off);
    }
}
