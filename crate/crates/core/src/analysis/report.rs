//! Pass/fail table comparing every closed form with its oracle.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::oracle::{
    bootstrap_moments, door_energy_oracle, gain_recursion, limit_shift_oracle, startup_oracle,
};
use super::{
    door_resistance_bound, kc_lower_bound, kc_upper_bound, limit_shift_moments,
    startup_bound_tlim, GainBoundInputs, KcUpperInputs,
};
use crate::doors::DoorModel;
use crate::error::AnalysisError;
use crate::population::{sample_population, Dist, PopulationSpec};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckRow {
    pub name: String,
    pub computed: f64,
    pub expected: String,
    pub passed: bool,
}

impl CheckRow {
    fn new(name: &str, computed: f64, expected: impl Into<String>, passed: bool) -> Self {
        Self {
            name: name.into(),
            computed,
            expected: expected.into(),
            passed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VerifyOptions {
    pub startup_devices: usize,
    pub shift_devices: usize,
    pub shift_steps: usize,
    pub bootstrap: usize,
    pub seed: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            startup_devices: 1_000_000,
            shift_devices: 100_000,
            shift_steps: 1000,
            bootstrap: 200,
            seed: 1,
        }
    }
}

/// Reference inputs of the gain lower bound: a 0.0192 Hz bias for 15 h,
/// 9 h to settle, tolerances 1 and 0.2 degC, 15 % reserve duty and
/// `beta P_n = 4.4e-5 * 80`.
pub fn reference_gain_inputs() -> GainBoundInputs {
    GainBoundInputs::new(0.0192, 15.0 * 3600.0, 9.0 * 3600.0, 1.0, 0.2, 0.15, 4.4e-5 * 80.0, 0.2)
        .expect("valid reference inputs")
}

/// Limit-shift comparison for a random history of `steps` requests.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShiftComparison {
    pub mean: f64,
    pub variance: f64,
    pub sampled_mean: f64,
    pub sampled_variance: f64,
    pub mean_se: f64,
    pub variance_se: f64,
    /// Formula variance never decreases along the history.
    pub monotone: bool,
    pub sd_without_band: f64,
    pub sd_with_band: f64,
}

impl ShiftComparison {
    pub fn within_bands(&self, sigmas: f64) -> bool {
        (self.sampled_mean - self.mean).abs() <= sigmas * self.mean_se
            && (self.sampled_variance - self.variance).abs() <= sigmas * self.variance_se
    }
}

/// Random history with `|x| <= resolution`, sampled `devices` times with
/// and without a band of `band` degC.
pub fn compare_limit_shifts(
    resolution: f64,
    band: f64,
    opts: &VerifyOptions,
) -> Result<ShiftComparison, AnalysisError> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let history: Vec<f64> = (0..opts.shift_steps)
        .map(|_| rng.random_range(-resolution..=resolution))
        .collect();
    let (mean, variance) = limit_shift_moments(&history, resolution)?;
    let mut monotone = true;
    let mut last = 0.0;
    for k in 1..=history.len() {
        let (_, v) = limit_shift_moments(&history[..k], resolution)?;
        monotone &= v >= last;
        last = v;
    }
    let free = limit_shift_oracle(&history, resolution, opts.shift_devices, None, opts.seed + 1)?;
    let banded =
        limit_shift_oracle(&history, resolution, opts.shift_devices, Some(band), opts.seed + 1)?;
    let b = bootstrap_moments(&free.terminal, opts.bootstrap, opts.seed + 2);
    Ok(ShiftComparison {
        mean,
        variance,
        sampled_mean: b.mean,
        sampled_variance: b.variance,
        mean_se: b.mean_se,
        variance_se: b.variance_se,
        monotone,
        sd_without_band: free.variance.last().copied().unwrap_or(0.0).sqrt(),
        sd_with_band: banded.variance.last().copied().unwrap_or(0.0).sqrt(),
    })
}

/// Runs every check at the scale given by `opts`.
pub fn verify_propositions(opts: &VerifyOptions) -> Result<Vec<CheckRow>, AnalysisError> {
    let mut rows = Vec::new();

    let t_lim = startup_bound_tlim(20.0, 40.0)?;
    rows.push(CheckRow::new("startup t_lim for U(20, 40)", t_lim, "24", (t_lim - 24.0).abs() < 1e-9));
    let uniform = startup_oracle(&Dist::Uniform(20.0, 40.0), 0.25, opts.startup_devices, opts.seed)?;
    rows.push(CheckRow::new(
        "startup estimate is an upper bound up to N_s,min (uniform)",
        uniform.upper_until_min as u8 as f64,
        "1",
        uniform.upper_until_min,
    ));
    let flip = uniform.flip.unwrap_or(f64::NAN);
    rows.push(CheckRow::new(
        "startup estimate falls below sampled power (uniform)",
        flip,
        "24 +- 1 s",
        (flip - t_lim).abs() <= 1.0,
    ));
    let normal = startup_oracle(&Dist::Normal(30.0, 3.0), 0.25, opts.startup_devices, opts.seed)?;
    rows.push(CheckRow::new(
        "startup estimate is an upper bound up to N_s,min (normal)",
        normal.upper_until_min as u8 as f64,
        "1",
        normal.upper_until_min,
    ));

    let upper = kc_upper_bound(&KcUpperInputs::reference())?;
    rows.push(CheckRow::new(
        "corrective gain upper bound",
        upper,
        "5.004e-5 +- 1e-7",
        (upper - 0.5004e-4).abs() <= 1e-7,
    ));
    let g = reference_gain_inputs();
    let lower = kc_lower_bound(&g)?;
    rows.push(CheckRow::new(
        "corrective gain lower bound",
        lower,
        "4.863e-5 +- 1e-7",
        (lower - 0.4863e-4).abs() <= 1e-7,
    ));
    rows.push(CheckRow::new(
        "lower gain bound <= upper gain bound",
        upper - lower,
        ">= 0",
        lower <= upper,
    ));
    let r = gain_recursion(&g, lower);
    let tight = r.max_deviation <= g.tolerance * (1.0 + 1e-9)
        && r.settled_deviation <= g.settled_tolerance * (1.0 + 1e-9)
        && r.max_deviation >= 0.95 * g.tolerance
        && r.settled_deviation >= 0.95 * g.settled_tolerance;
    rows.push(CheckRow::new(
        "recursion at the lower bound: max deviation",
        r.max_deviation,
        "(0.95, 1] degC",
        tight,
    ));
    rows.push(CheckRow::new(
        "recursion at the lower bound: settled deviation",
        r.settled_deviation,
        "(0.19, 0.2] degC",
        tight,
    ));

    let s = compare_limit_shifts(0.1, 1.0, opts)?;
    rows.push(CheckRow::new(
        "limit shift mean within 3 sigma",
        s.sampled_mean - s.mean,
        format!("|.| <= {:.3e}", 3.0 * s.mean_se),
        (s.sampled_mean - s.mean).abs() <= 3.0 * s.mean_se,
    ));
    rows.push(CheckRow::new(
        "limit shift variance within 3 sigma",
        s.sampled_variance - s.variance,
        format!("|.| <= {:.3e}", 3.0 * s.variance_se),
        (s.sampled_variance - s.variance).abs() <= 3.0 * s.variance_se,
    ));
    rows.push(CheckRow::new("limit shift variance non-decreasing", s.monotone as u8 as f64, "1", s.monotone));
    rows.push(CheckRow::new(
        "band lowers terminal limit spread",
        s.sd_with_band,
        format!("< {:.4}", s.sd_without_band),
        s.sd_with_band < s.sd_without_band,
    ));

    let ratio = 1.0 / door_resistance_bound(1.0, 0.22, 40.0, 20.0)?;
    rows.push(CheckRow::new(
        "door resistance divisor",
        ratio,
        "24.76 +- 0.01",
        (ratio - 24.76).abs() <= 0.01,
    ));
    let door = door_energy_oracle(&single_device(opts.seed)?, &DoorModel::default())?;
    rows.push(CheckRow::new(
        "daily energy uplift with R_op = R/25",
        door.uplift,
        "[0.18, 0.26]",
        (0.18..=0.26).contains(&door.uplift),
    ));
    Ok(rows)
}

/// A device with every parameter at its population mean.
pub fn single_device(seed: u64) -> Result<crate::thermal::ThermalParams, AnalysisError> {
    let pop = sample_population(&PopulationSpec::homogeneous(1), seed)?;
    Ok(pop.devices[0].params)
}
