//! Time-stepped population simulation.
//!
//! Each step runs, in order: the controller estimate, limit shifts, broadcast
//! switching, the thermostat check, and exact integration over one second
//! with the current door state. Devices are processed in fixed-size chunks
//! whose partial sums are combined in chunk order, so traces are bit-identical
//! for any thread count.

use rayon::prelude::*;
use serde::Serialize;

use crate::controller::{device_limit_shift, Direction, Estimator, StepCommand};
use crate::doors::DoorSchedule;
use crate::error::{Error, Result};
use crate::population::Population;
use crate::rng::{derive_seed, Stream, LANE_SHIFT, LANE_SWITCH};
use crate::thermal::{Coefficients, DeviceState, DT};

/// Devices per parallel work item.
pub const CHUNK: usize = 2048;

/// Per-device data touched every step. Values that depend on the compressor
/// state are cached for the current state and refreshed on every switch.
#[derive(Debug, Clone, Copy)]
struct Hot {
    temperature: f64,
    time_since_switch: f64,
    /// Limit that ends the current state: `t_min` while on, `t_max` while off.
    limit: f64,
    /// The other limit.
    limit_other: f64,
    /// `-1` while on (cooling), `+1` while off.
    dir: f64,
    eq: f64,
    lock: f64,
    decay: f64,
    power: f64,
    startup: f64,
    /// `1 / (2 startup)`, zero without startup dynamics.
    startup_scale: f64,
    peak_factor: f64,
    shift: f64,
    /// Current or next door opening, `[door_start, door_end)`.
    door_start: u32,
    door_end: u32,
    on: bool,
    door_open: bool,
}

/// Per-device data needed only on switches, door openings and limit
/// crossings.
#[derive(Debug, Clone, Copy)]
struct Cold {
    coeff: Coefficients,
    lock_on: f64,
    lock_off: f64,
    door_next: u32,
    door_last: u32,
}

impl Hot {
    fn new(st: &DeviceState, c: &Cold) -> Self {
        let mut h = Self {
            temperature: st.temperature,
            time_since_switch: st.time_since_switch,
            limit: 0.0,
            limit_other: 0.0,
            dir: 0.0,
            eq: 0.0,
            lock: 0.0,
            decay: c.coeff.decay,
            power: 0.0,
            startup: c.coeff.startup_duration,
            startup_scale: if c.coeff.startup_duration > 0.0 {
                0.5 / c.coeff.startup_duration
            } else {
                0.0
            },
            peak_factor: c.coeff.peak_factor,
            shift: 0.0,
            door_start: u32::MAX,
            door_end: u32::MAX,
            on: st.on,
            door_open: st.door_open,
        };
        h.set_mode(st.on, st.t_min, st.t_max, c);
        h
    }

    #[inline]
    fn t_min_max(&self) -> (f64, f64) {
        if self.on {
            (self.limit, self.limit_other)
        } else {
            (self.limit_other, self.limit)
        }
    }

    fn set_mode(&mut self, on: bool, t_min: f64, t_max: f64, c: &Cold) {
        self.on = on;
        if on {
            self.limit = t_min;
            self.limit_other = t_max;
            self.dir = -1.0;
            self.eq = c.coeff.eq_on;
            self.lock = c.lock_on;
            self.power = c.coeff.nominal_power;
        } else {
            self.limit = t_max;
            self.limit_other = t_min;
            self.dir = 1.0;
            self.eq = c.coeff.ambient;
            self.lock = c.lock_off;
            self.power = 0.0;
        }
    }

    #[inline]
    fn state(&self) -> DeviceState {
        let (t_min, t_max) = self.t_min_max();
        DeviceState {
            temperature: self.temperature,
            on: self.on,
            t_min,
            t_max,
            time_since_switch: self.time_since_switch,
            door_open: self.door_open,
        }
    }

    #[cold]
    fn toggle(&mut self, c: &Cold) {
        let (t_min, t_max) = self.t_min_max();
        self.set_mode(!self.on, t_min, t_max, c);
        self.time_since_switch = 0.0;
    }

    #[cold]
    fn store(&mut self, s: &DeviceState, c: &Cold) {
        if s.on != self.on {
            self.set_mode(s.on, s.t_min, s.t_max, c);
        }
        self.temperature = s.temperature;
        self.time_since_switch = s.time_since_switch;
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Partial {
    energy: f64,
    temperature: f64,
    on: u32,
    locked_on: u32,
    locked_off: u32,
}

impl Partial {
    fn add(&mut self, o: &Partial) {
        self.energy += o.energy;
        self.temperature += o.temperature;
        self.on += o.on;
        self.locked_on += o.locked_on;
        self.locked_off += o.locked_off;
    }
}

/// Run settings that do not change the physics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RunOptions {
    /// Worker threads; zero uses the rayon default.
    pub threads: usize,
    /// Replace the controller's mean-temperature estimate by the measured
    /// mean every this many steps.
    pub resync_interval: Option<usize>,
}

/// Controller-side values recorded each step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EstimateSample {
    pub mean_temperature: f64,
    pub active_duty: f64,
    pub l_on: f64,
    pub l_off: f64,
    pub probability: f64,
    pub switch_fraction: f64,
    pub limit_change: f64,
    pub shift_probability: f64,
}

/// Per-step results of one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trace {
    /// Aggregate power averaged over each step, W.
    pub power: Vec<f64>,
    /// Mean temperature at the end of each step, degC.
    pub mean_temperature: Vec<f64>,
    pub on_fraction: Vec<f64>,
    pub locked_on: Vec<f64>,
    pub locked_off: Vec<f64>,
    /// Empty for uncontrolled runs.
    pub estimates: Vec<EstimateSample>,
    pub saturations: usize,
    pub controllability_warnings: usize,
}

impl Trace {
    fn with_capacity(n: usize, controlled: bool) -> Self {
        Self {
            power: Vec::with_capacity(n),
            mean_temperature: Vec::with_capacity(n),
            on_fraction: Vec::with_capacity(n),
            locked_on: Vec::with_capacity(n),
            locked_off: Vec::with_capacity(n),
            estimates: Vec::with_capacity(if controlled { n } else { 0 }),
            saturations: 0,
            controllability_warnings: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.power.len()
    }

    pub fn is_empty(&self) -> bool {
        self.power.is_empty()
    }
}

/// Simulation of one population from its stored initial state.
pub struct Simulation<'a> {
    hot: Vec<Hot>,
    cold: Vec<Cold>,
    doors: Option<&'a DoorSchedule>,
    stream: Stream,
    pool: rayon::ThreadPool,
    options: RunOptions,
}

impl<'a> Simulation<'a> {
    pub fn new(
        pop: &Population,
        doors: Option<&'a DoorSchedule>,
        seed: u64,
        options: RunOptions,
    ) -> Result<Self> {
        if let Some(d) = doors {
            if d.devices() != pop.len() {
                return Err(Error::Scenario(format!(
                    "door schedule covers {} devices, population has {}",
                    d.devices(),
                    pop.len()
                )));
            }
        }
        let mut hot = Vec::with_capacity(pop.len());
        let mut cold = Vec::with_capacity(pop.len());
        for (i, d) in pop.devices.iter().enumerate() {
            let (door_next, door_last) = doors.map_or((0, 0), |s| s.range(i));
            let c = Cold {
                coeff: Coefficients::new(&d.params),
                lock_on: d.params.lock_on,
                lock_off: d.params.lock_off,
                door_next,
                door_last,
            };
            let mut h = Hot::new(&d.state, &c);
            let mut c = c;
            if let Some(s) = doors {
                if c.door_next < c.door_last {
                    (h.door_start, h.door_end) = s.event(c.door_next as usize);
                    c.door_next += 1;
                }
            }
            hot.push(h);
            cold.push(c);
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(options.threads)
            .build()
            .map_err(|e| Error::ThreadPool(e.to_string()))?;
        Ok(Self {
            hot,
            cold,
            doors,
            stream: Stream::new(derive_seed(seed, 0x5157)),
            pool,
            options,
        })
    }

    pub fn states(&self) -> Vec<DeviceState> {
        self.hot.iter().map(Hot::state).collect()
    }

    /// Cumulative limit shift of each device, degC.
    pub fn shifts(&self) -> Vec<f64> {
        self.hot.iter().map(|h| h.shift).collect()
    }

    fn mean_temperature(&self) -> f64 {
        self.hot.iter().map(|h| h.temperature).sum::<f64>() / self.hot.len() as f64
    }

    /// Advances every device by one step under `cmd`.
    fn advance(&mut self, step: u32, cmd: &StepCommand, band: Option<f64>) -> Partial {
        let stream = self.stream;
        let doors = self.doors;
        let hot = &mut self.hot;
        let cold = &mut self.cold;
        if self.pool.current_num_threads() == 1 || hot.len() <= CHUNK {
            let mut total = Partial::default();
            for (ci, (h, c)) in hot.chunks_mut(CHUNK).zip(cold.chunks_mut(CHUNK)).enumerate() {
                let p = advance_chunk(h, c, (ci * CHUNK) as u32, step, cmd, band, stream, doors);
                total.add(&p);
            }
            return total;
        }
        let partials: Vec<Partial> = self.pool.install(|| {
            hot.par_chunks_mut(CHUNK)
                .zip(cold.par_chunks_mut(CHUNK))
                .enumerate()
                .map(|(ci, (h, c))| {
                    advance_chunk(h, c, (ci * CHUNK) as u32, step, cmd, band, stream, doors)
                })
                .collect()
        });
        let mut total = Partial::default();
        for p in &partials {
            total.add(p);
        }
        total
    }

    /// Runs `signal.len()` steps. Without an estimator the population is
    /// uncontrolled.
    pub fn run(&mut self, mut estimator: Option<&mut Estimator>, signal: &[f64]) -> Trace {
        let n = self.hot.len() as f64;
        let mut trace = Trace::with_capacity(signal.len(), estimator.is_some());
        let idle = StepCommand::idle(0.0);
        for (t, &df) in signal.iter().enumerate() {
            let (cmd, band) = match estimator.as_deref_mut() {
                Some(est) => {
                    if let Some(k) = self.options.resync_interval {
                        if k > 0 && t > 0 && t % k == 0 {
                            est.resync(self.mean_temperature());
                        }
                    }
                    let cmd = est.step(df);
                    (cmd, est.config().band)
                }
                None => (idle, None),
            };
            let p = self.advance(t as u32, &cmd, band);
            trace.power.push(p.energy);
            trace.mean_temperature.push(p.temperature / n);
            trace.on_fraction.push(p.on as f64 / n);
            trace.locked_on.push(p.locked_on as f64 / n);
            trace.locked_off.push(p.locked_off as f64 / n);
            if let Some(est) = estimator.as_deref() {
                trace.estimates.push(EstimateSample {
                    mean_temperature: est.mean_temperature(),
                    active_duty: est.active_duty(),
                    l_on: cmd.l_on,
                    l_off: cmd.l_off,
                    probability: cmd.probability,
                    switch_fraction: cmd.switch_fraction,
                    limit_change: cmd.limit_change,
                    shift_probability: cmd.shift_probability,
                });
            }
        }
        if let Some(est) = estimator {
            trace.saturations = est.saturations();
            trace.controllability_warnings = est.controllability_warnings();
        }
        trace
    }
}

#[allow(clippy::too_many_arguments)]
#[inline]
fn advance_chunk(
    hot: &mut [Hot],
    cold: &mut [Cold],
    first: u32,
    step: u32,
    cmd: &StepCommand,
    band: Option<f64>,
    stream: Stream,
    doors: Option<&DoorSchedule>,
) -> Partial {
    let mut p = Partial::default();
    let shifting = cmd.shift_step != 0.0;
    let uniform_shift = cmd.shift_probability >= 1.0 && band.is_none();
    let switching = cmd.probability > 0.0;
    let threshold = Stream::threshold(cmd.probability);
    let turn_on = cmd.direction == Direction::On;
    for (k, (h, c)) in hot.iter_mut().zip(cold.iter_mut()).enumerate() {
        let id = first + k as u32;
        let locked = h.time_since_switch < h.lock;
        if shifting {
            let d = if uniform_shift {
                let apply = !locked | cmd.shift_locked;
                cmd.shift_step * apply as u8 as f64
            } else if !locked || cmd.shift_locked {
                let u = if cmd.shift_probability < 1.0 {
                    stream.uniform(id, step, LANE_SHIFT)
                } else {
                    0.0
                };
                device_limit_shift(cmd, band, h.shift, u)
            } else {
                0.0
            };
            h.limit += d;
            h.limit_other += d;
            h.shift += d;
        }
        if switching {
            let bits = stream.bits(id, step, LANE_SWITCH) >> 11;
            if bits < threshold {
                broadcast_switch(h, c, locked, turn_on);
            }
        }
        if h.dir * (h.temperature - h.limit) >= 0.0 {
            h.toggle(c);
        }
        if let Some(d) = doors {
            if step >= h.door_start {
                while step >= h.door_end {
                    if c.door_next < c.door_last {
                        (h.door_start, h.door_end) = d.event(c.door_next as usize);
                        c.door_next += 1;
                    } else {
                        h.door_start = u32::MAX;
                        h.door_end = u32::MAX;
                    }
                }
                h.door_open = step >= h.door_start;
            } else {
                h.door_open = false;
            }
        }
        let t0 = h.temperature;
        let t1 = h.eq + (t0 - h.eq) * h.decay;
        let energy = if h.door_open || h.dir * (t1 - h.limit) > 0.0 {
            slow_advance(h, c)
        } else {
            let s0 = h.time_since_switch;
            let mut e = s0 + DT;
            e = if e < h.startup { e } else { h.startup };
            e = if e > s0 { e } else { s0 };
            let excess = (e - s0) - (e * e - s0 * s0) * h.startup_scale;
            h.temperature = t1;
            h.time_since_switch += DT;
            h.power * (DT + h.peak_factor * excess)
        };
        p.energy += energy;
        p.temperature += h.temperature;
        let locked = (h.time_since_switch < h.lock) as u32;
        p.on += h.on as u32;
        p.locked_on += locked & h.on as u32;
        p.locked_off += locked & !h.on as u32;
    }
    p
}

#[cold]
#[inline(never)]
fn broadcast_switch(h: &mut Hot, c: &Cold, locked: bool, turn_on: bool) {
    if !locked && turn_on != h.on {
        h.toggle(c);
    }
}

#[cold]
fn slow_advance(h: &mut Hot, c: &Cold) -> f64 {
    let mut s = h.state();
    let e = c.coeff.advance(&mut s);
    h.store(&s, c);
    e
}

/// Runs the population without control for `steps` seconds.
pub fn run_uncontrolled(
    pop: &Population,
    doors: Option<&DoorSchedule>,
    steps: usize,
    options: RunOptions,
) -> Result<Trace> {
    let mut sim = Simulation::new(pop, doors, 0, options)?;
    Ok(sim.run(None, &vec![0.0; steps]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controller::{ControllerConfig, ControllerConstants};
    use crate::population::{sample_population, PopulationSpec};

    #[test]
    fn uncontrolled_population_is_stationary() {
        let pop = sample_population(&PopulationSpec::with_size(20_000), 2).unwrap();
        let trace = run_uncontrolled(&pop, None, 3600, RunOptions::default()).unwrap();
        let mean_power = trace.power.iter().sum::<f64>() / trace.len() as f64;
        let expected = pop.closed_form_baseline();
        assert!(
            (mean_power - expected).abs() < 0.02 * expected,
            "{mean_power} vs {expected}"
        );
        let t0 = pop.mean_temperature();
        let t1 = *trace.mean_temperature.last().unwrap();
        assert!((t1 - t0).abs() < 0.05, "{t0} -> {t1}");
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let pop = sample_population(&PopulationSpec::with_size(5000), 4).unwrap();
        let consts = ControllerConstants::from_population(&pop);
        let signal: Vec<f64> = (0..600).map(|t| 0.1 * ((t as f64) / 60.0).sin()).collect();
        let mut traces = Vec::new();
        for threads in [1, 3] {
            let mut est = Estimator::new(ControllerConfig::default(), consts.clone(), vec![]).unwrap();
            let mut sim = Simulation::new(&pop, None, 11, RunOptions { threads, ..Default::default() }).unwrap();
            traces.push(sim.run(Some(&mut est), &signal));
        }
        assert_eq!(traces[0], traces[1]);
    }

    #[test]
    fn limits_track_the_broadcast_shift() {
        let pop = sample_population(&PopulationSpec::with_size(3000), 6).unwrap();
        let consts = ControllerConstants::from_population(&pop);
        let mut est = Estimator::new(ControllerConfig::default(), consts, vec![]).unwrap();
        let mut sim = Simulation::new(&pop, None, 1, RunOptions::default()).unwrap();
        let trace = sim.run(Some(&mut est), &vec![0.1; 1200]);
        let shifts = sim.shifts();
        let mean_shift = shifts.iter().sum::<f64>() / shifts.len() as f64;
        assert!(mean_shift < 0.0);
        for (st, d) in sim.states().iter().zip(&pop.devices) {
            assert!((st.t_max - st.t_min - d.params.deadband_width).abs() < 1e-9);
        }
        assert_eq!(trace.estimates.len(), 1200);
    }
}
