//! Scenario files, simulation runs with their uncontrolled companion, and
//! parameter sweeps.
//!
//! A scenario is a TOML document. Every table is optional:
//!
//! ```toml
//! seed = 7
//! duration = 86400          # seconds
//! threads = 0               # 0 = all cores
//!
//! [population]
//! size = 20000
//! peak_factor = { normal = [0.25, 0.025] }
//!
//! [controller]
//! mode = "proposed"         # proposed | simple1 | simple2 | uncontrolled
//! reserve_duty = 0.15
//! k_c = 5e-5
//!
//! [signal]
//! kind = "noise"            # noise | step | constant | file
//! sigma = 0.02
//!
//! [doors]                   # omit to disable door openings
//! mean_openings = 40
//!
//! [baseline]
//! mode = "empirical"        # empirical | closed-form
//! window = 900
//!
//! [output]
//! dir = "out"
//! downsample = 60
//! ```

use std::path::{Path, PathBuf};

use log::{debug, info};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::controller::{ControllerConstants, ControllerMode, ControllerConfig, Estimator};
use crate::doors::{delta_duty_profile, DoorModel, DoorSchedule};
use crate::engine::{run_uncontrolled, RunOptions, Simulation, Trace};
use crate::error::{Error, Result};
use crate::metrics::{
    desired_power, droop_points, mape_suite, reserve_capacity, MetricSummary, RunRecord,
};
use crate::population::{baseline_power, sample_population, BaselineMode, Dist, Population, PopulationSpec};
use crate::rng::derive_seed;
use crate::signals::{load_csv, synth_constant, synth_noise, synth_step, FrequencySeries, NoiseParams};

const POPULATION_STREAM: u64 = 1;
const SIGNAL_STREAM: u64 = 2;
const DOOR_STREAM: u64 = 3;
const PROFILE_STREAM: u64 = 4;

/// Preset biases of the synthetic signal classes, Hz.
pub const SMALL_BIAS: f64 = 0.005;
pub const LARGE_BIAS: f64 = 0.02;
/// Sign period of the biased presets, s.
pub const BIAS_HALF_PERIOD: usize = 6 * 3600;

/// Classes of synthetic frequency days.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DayKind {
    ZeroMean,
    SmallBias,
    LargeBias,
}

impl DayKind {
    pub fn noise(self) -> NoiseParams {
        let bias = match self {
            DayKind::ZeroMean => 0.0,
            DayKind::SmallBias => SMALL_BIAS,
            DayKind::LargeBias => LARGE_BIAS,
        };
        NoiseParams {
            bias,
            bias_half_period: if bias != 0.0 { BIAS_HALF_PERIOD } else { 0 },
            ..NoiseParams::default()
        }
    }

    pub fn signal(self) -> SignalSource {
        SignalSource::Noise {
            params: self.noise(),
            seed: None,
        }
    }
}

impl std::str::FromStr for DayKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero-mean" => Ok(Self::ZeroMean),
            "small-bias" => Ok(Self::SmallBias),
            "large-bias" => Ok(Self::LargeBias),
            other => Err(Error::Scenario(format!("unknown day kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SignalSource {
    Noise {
        #[serde(flatten)]
        params: NoiseParams,
        /// Defaults to a seed derived from the scenario seed.
        #[serde(default)]
        seed: Option<u64>,
    },
    Step {
        delta: f64,
        n_event: usize,
    },
    Constant {
        value: f64,
    },
    File {
        path: PathBuf,
    },
}

impl Default for SignalSource {
    fn default() -> Self {
        SignalSource::Noise {
            params: NoiseParams::default(),
            seed: None,
        }
    }
}

impl SignalSource {
    /// Builds at least `total` samples, or fails for a short file.
    pub fn build(&self, total: usize, scenario_seed: u64) -> Result<FrequencySeries> {
        let series = match self {
            SignalSource::Noise { params, seed } => synth_noise(
                *params,
                total,
                seed.unwrap_or_else(|| derive_seed(scenario_seed, SIGNAL_STREAM)),
            )?,
            SignalSource::Step { delta, n_event } => synth_step(*delta, *n_event, total),
            SignalSource::Constant { value } => synth_constant(*value, total),
            SignalSource::File { path } => load_csv(path)?,
        };
        if series.len() < total {
            return Err(Error::Scenario(format!(
                "signal {} has {} samples, the run needs {total}",
                series.source,
                series.len()
            )));
        }
        Ok(series)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DoorSettings {
    #[serde(flatten)]
    pub model: DoorModel,
    /// Uncontrolled runs averaged into the door duty profile.
    pub ensemble: usize,
    /// Smoothing window of the profile, s.
    pub smoothing: usize,
    /// `device,start,duration` file used instead of sampled openings.
    pub schedule: Option<PathBuf>,
}

impl Default for DoorSettings {
    fn default() -> Self {
        Self {
            model: DoorModel::default(),
            ensemble: 2,
            smoothing: 900,
            schedule: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineSettings {
    pub mode: BaselineMode,
    /// Centered smoothing window of the empirical baseline, s.
    pub window: usize,
}

impl Default for BaselineSettings {
    fn default() -> Self {
        Self {
            mode: BaselineMode::Empirical,
            window: 900,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputSettings {
    pub dir: Option<PathBuf>,
    pub per_step: bool,
    /// Block length of the plot-data file; zero skips it.
    pub downsample: usize,
    pub diagnostics: bool,
}

impl Default for OutputSettings {
    fn default() -> Self {
        Self {
            dir: None,
            per_step: true,
            downsample: 60,
            diagnostics: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub seed: u64,
    /// Simulated seconds.
    pub duration: usize,
    /// Worker threads, zero for all cores.
    pub threads: usize,
    /// Replace the controller's temperature estimate by the measured mean
    /// every this many seconds.
    pub resync_interval: Option<usize>,
    pub population: PopulationSpec,
    pub controller: ControllerConfig,
    pub signal: SignalSource,
    pub doors: Option<DoorSettings>,
    pub baseline: BaselineSettings,
    pub output: OutputSettings,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            seed: 1,
            duration: 86_400,
            threads: 0,
            resync_interval: None,
            population: PopulationSpec::default(),
            controller: ControllerConfig::default(),
            signal: SignalSource::default(),
            doors: None,
            baseline: BaselineSettings::default(),
            output: OutputSettings::default(),
        }
    }
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self> {
        let s: Scenario = toml::from_str(text).map_err(|e| Error::ScenarioParse {
            path: PathBuf::from("<string>"),
            message: e.to_string(),
        })?;
        s.validate()?;
        Ok(s)
    }

    /// Reads a scenario; relative signal and schedule paths resolve against
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let mut s: Scenario = toml::from_str(&text).map_err(|e| Error::ScenarioParse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let SignalSource::File { path: p } = &mut s.signal {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if let Some(p) = s.doors.as_mut().and_then(|d| d.schedule.as_mut()) {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        s.validate()?;
        Ok(s)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Scenario(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.duration == 0 {
            return Err(Error::Scenario("duration must be at least one second".into()));
        }
        if u32::try_from(self.duration).is_err() || u32::try_from(self.population.size).is_err() {
            return Err(Error::Scenario("duration and size must fit in 32 bits".into()));
        }
        self.population.validate()?;
        if let SignalSource::File { path } = &self.signal {
            if !path.is_file() {
                return Err(Error::Scenario(format!("signal file {} not found", path.display())));
            }
        }
        if let Some(d) = &self.doors {
            d.model.validate()?;
            if let Some(p) = &d.schedule {
                if !p.is_file() {
                    return Err(Error::Scenario(format!("door schedule {} not found", p.display())));
                }
            }
        }
        if self.baseline.window == 0 {
            return Err(Error::Scenario("baseline window must be positive".into()));
        }
        Ok(())
    }

    pub fn options(&self) -> RunOptions {
        RunOptions {
            threads: self.threads,
            resync_interval: self.resync_interval,
        }
    }
}

/// Everything produced by one scenario run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub record: RunRecord,
    pub trace: Trace,
    /// Unsmoothed power of the uncontrolled companion run, W.
    pub uncontrolled: Vec<f64>,
    pub metrics: MetricSummary,
    pub nominal_temperature: f64,
}

/// Samples the scenario's population.
pub fn scenario_population(s: &Scenario) -> Result<Population> {
    Ok(sample_population(&s.population, derive_seed(s.seed, POPULATION_STREAM))?)
}

/// Runs `s` with a fresh uncontrolled companion run for the baseline.
pub fn simulate(s: &Scenario) -> Result<RunOutcome> {
    s.validate()?;
    let pop = scenario_population(s)?;
    let signal = s.signal.build(s.duration, s.seed)?;
    let doors = scenario_doors(s, &pop)?;
    let companion = run_uncontrolled(&pop, doors.as_ref(), s.duration, s.options())?;
    simulate_with(s, &pop, &signal.samples[..s.duration], doors.as_ref(), &companion.power)
}

/// Door schedule of the scenario, sampled or read from file.
pub fn scenario_doors(s: &Scenario, pop: &Population) -> Result<Option<DoorSchedule>> {
    let Some(d) = &s.doors else {
        return Ok(None);
    };
    let sched = match &d.schedule {
        Some(path) => {
            let f = std::fs::File::open(path).map_err(|e| Error::Io {
                path: path.clone(),
                source: e,
            })?;
            DoorSchedule::read_csv(f, pop.len())?
        }
        None => DoorSchedule::sample(&d.model, pop.len(), s.duration, derive_seed(s.seed, DOOR_STREAM))?,
    };
    Ok(Some(sched))
}

/// Runs `s` on an already sampled population and signal, with `companion`
/// the uncontrolled power of the same population and doors.
pub fn simulate_with(
    s: &Scenario,
    pop: &Population,
    signal: &[f64],
    doors: Option<&DoorSchedule>,
    companion: &[f64],
) -> Result<RunOutcome> {
    let steps = signal.len();
    if companion.len() < steps {
        return Err(Error::Scenario("companion run is shorter than the signal".into()));
    }
    let consts = ControllerConstants::from_population(pop);
    let door_delta = match (&s.doors, s.controller.mode) {
        (Some(d), ControllerMode::Proposed) => {
            debug!("estimating door duty profile from {} runs", d.ensemble + 1);
            delta_duty_profile(
                pop,
                &d.model,
                steps,
                d.ensemble,
                derive_seed(s.seed, PROFILE_STREAM),
                d.smoothing,
                s.options(),
            )?
        }
        _ => Vec::new(),
    };
    let controlled = s.controller.mode != ControllerMode::Uncontrolled;
    let mut est = Estimator::new(s.controller, consts, door_delta)?;
    let mut sim = Simulation::new(pop, doors, s.seed, s.options())?;
    info!(
        "running {} devices for {steps} s, controller {}",
        pop.len(),
        s.controller.mode
    );
    let trace = sim.run(controlled.then_some(&mut est), signal);
    let baseline = match s.baseline.mode {
        BaselineMode::Empirical => baseline_power(&companion[..steps], s.baseline.window),
        BaselineMode::ClosedForm => vec![pop.closed_form_baseline(); steps],
    };
    let reserve = if controlled {
        reserve_capacity(pop.len(), pop.stats.nominal_power, s.controller.reserve_duty)
    } else {
        0.0
    };
    let desired = desired_power(&baseline, signal, reserve, s.controller.df_max, s.controller.deadband);
    let estimated_temperature = if controlled {
        trace.estimates.iter().map(|e| e.mean_temperature).collect()
    } else {
        trace.mean_temperature.clone()
    };
    let (active_duty, l_on, l_off) = if controlled {
        (
            trace.estimates.iter().map(|e| e.active_duty).collect(),
            trace.estimates.iter().map(|e| e.l_on).collect(),
            trace.estimates.iter().map(|e| e.l_off).collect(),
        )
    } else {
        (trace.on_fraction.clone(), trace.locked_on.clone(), trace.locked_off.clone())
    };
    let record = RunRecord {
        df: signal.to_vec(),
        power: trace.power.clone(),
        baseline,
        desired,
        mean_temperature: trace.mean_temperature.clone(),
        estimated_temperature,
        active_duty,
        l_on,
        l_off,
        reserve,
        df_max: s.controller.df_max,
    };
    let nominal = pop.stats.nominal_temperature;
    let metrics = summarize(s, &record, &trace, &companion[..steps], nominal);
    Ok(RunOutcome {
        record,
        trace,
        uncontrolled: companion[..steps].to_vec(),
        metrics,
        nominal_temperature: nominal,
    })
}

fn summarize(
    s: &Scenario,
    rec: &RunRecord,
    trace: &Trace,
    companion: &[f64],
    nominal: f64,
) -> MetricSummary {
    let dev: Vec<f64> = rec.mean_temperature.iter().map(|t| t - nominal).collect();
    let n = rec.len().max(1) as f64;
    MetricSummary {
        controller: s.controller.mode.to_string(),
        devices: s.population.size,
        steps: rec.len(),
        reserve_kw: rec.reserve / 1e3,
        mape: mape_suite(rec, Some(companion)),
        droop_deviation_pct: droop_points(rec, 0.01).mean_abs_deviation,
        max_abs_mean_temp_dev: dev.iter().fold(0.0, |m, d| m.max(d.abs())),
        final_mean_temp_dev: dev.last().copied().unwrap_or(0.0),
        mean_power_kw: rec.power.iter().sum::<f64>() / n / 1e3,
        saturations: trace.saturations,
        controllability_warnings: trace.controllability_warnings,
    }
}

/// Parameter varied by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepAxis {
    /// Population size.
    Size,
    ReserveDuty,
    /// Mean startup peak factor `u`.
    PeakFactor,
    /// Mean minimum on time, s.
    LockOn,
    Kc,
    Resolution,
    /// Door openings off (0) or on (1).
    Doors,
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "size" | "n_r" => Self::Size,
            "reserve-duty" | "d_r" => Self::ReserveDuty,
            "peak-factor" | "u" => Self::PeakFactor,
            "lock-on" | "t_on_l" => Self::LockOn,
            "kc" | "k_c" => Self::Kc,
            "resolution" | "dt_res" => Self::Resolution,
            "doors" => Self::Doors,
            other => return Err(Error::Scenario(format!("unknown sweep axis `{other}`"))),
        })
    }
}

impl SweepAxis {
    /// Copy of `base` with the axis set to `value`.
    pub fn apply(self, base: &Scenario, value: f64) -> Result<Scenario> {
        let mut s = base.clone();
        match self {
            SweepAxis::Size => {
                if !(value >= 1.0) {
                    return Err(Error::Scenario(format!("size must be at least 1, got {value}")));
                }
                s.population.size = value.round() as usize;
            }
            SweepAxis::ReserveDuty => s.controller.reserve_duty = value,
            SweepAxis::PeakFactor => s.population.peak_factor = rescale(&s.population.peak_factor, value),
            SweepAxis::LockOn => s.population.lock_on = rescale(&s.population.lock_on, value),
            SweepAxis::Kc => s.controller.k_c = value,
            SweepAxis::Resolution => s.controller.resolution = value,
            SweepAxis::Doors => {
                s.doors = (value != 0.0).then(|| base.doors.clone().unwrap_or_default());
            }
        }
        Ok(s)
    }
}

/// `d` moved to mean `mean` with its relative spread kept.
fn rescale(d: &Dist, mean: f64) -> Dist {
    let m = d.mean();
    let k = if m != 0.0 { mean / m } else { 0.0 };
    match *d {
        Dist::Fixed(_) => Dist::Fixed(mean),
        Dist::Uniform(lo, hi) if m != 0.0 => Dist::Uniform(lo * k, hi * k),
        Dist::Normal(_, sd) if m != 0.0 => Dist::Normal(mean, sd * k),
        _ => Dist::Fixed(mean),
    }
}

/// One run of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub repeat: usize,
    pub seed: u64,
    #[serde(flatten)]
    pub metrics: MetricSummary,
}

/// Ensemble statistics of one sweep value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepSummary {
    pub value: f64,
    pub runs: usize,
    pub reserve_mape_mean: f64,
    pub reserve_mape_min: f64,
    pub reserve_mape_max: f64,
    pub tracking_mape_mean: f64,
    pub max_temp_dev_mean: f64,
}

/// Runs `repeats` seeds for each value. Repeat `i` uses seed
/// `derive_seed(seed, i)` for every value, so values are compared on the
/// same populations and signals where the axis allows it.
pub fn sweep(base: &Scenario, axis: SweepAxis, values: &[f64], repeats: usize) -> Result<Vec<SweepRow>> {
    let mut jobs = Vec::new();
    for &v in values {
        for r in 0..repeats.max(1) {
            let mut s = axis.apply(base, v)?;
            s.seed = derive_seed(base.seed, r as u64);
            s.output = OutputSettings::default();
            s.validate()?;
            jobs.push((v, r, s));
        }
    }
    let run = |(v, r, s): &(f64, usize, Scenario)| -> Result<SweepRow> {
        let out = simulate(s)?;
        info!("sweep {axis:?}={v} repeat {r}: reserve MAPE {:?}", out.metrics.mape.reserve);
        Ok(SweepRow {
            value: *v,
            repeat: *r,
            seed: s.seed,
            metrics: out.metrics,
        })
    };
    if base.threads == 0 {
        jobs.par_iter()
            .map(|(v, r, s)| {
                let mut s = s.clone();
                s.threads = 1;
                run(&(*v, *r, s))
            })
            .collect()
    } else {
        jobs.iter().map(run).collect()
    }
}

pub fn summarize_sweep(rows: &[SweepRow]) -> Vec<SweepSummary> {
    let mut values: Vec<f64> = Vec::new();
    for r in rows {
        if !values.contains(&r.value) {
            values.push(r.value);
        }
    }
    values
        .into_iter()
        .map(|v| {
            let group: Vec<&SweepRow> = rows.iter().filter(|r| r.value == v).collect();
            let reserve: Vec<f64> = group.iter().filter_map(|r| r.metrics.mape.reserve).collect();
            let tracking: Vec<f64> = group.iter().filter_map(|r| r.metrics.mape.tracking).collect();
            let mean = |x: &[f64]| if x.is_empty() { f64::NAN } else { x.iter().sum::<f64>() / x.len() as f64 };
            SweepSummary {
                value: v,
                runs: group.len(),
                reserve_mape_mean: mean(&reserve),
                reserve_mape_min: reserve.iter().copied().fold(f64::NAN, f64::min),
                reserve_mape_max: reserve.iter().copied().fold(f64::NAN, f64::max),
                tracking_mape_mean: mean(&tracking),
                max_temp_dev_mean: mean(
                    &group.iter().map(|r| r.metrics.max_abs_mean_temp_dev).collect::<Vec<_>>(),
                ),
            }
        })
        .collect()
}
