//! Sampled and directly iterated counterparts of the closed forms.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{GainBoundInputs, DAY};
use crate::controller::{device_limit_shift, StepCommand};
use crate::doors::DoorModel;
use crate::error::AnalysisError;
use crate::population::Dist;
use crate::rng::{Stream, LANE_SHIFT};
use crate::thermal::{cycle_durations, Coefficients, ThermalParams};

/// Aggregate startup power after activating every device at once, as a
/// multiple of the activated devices' nominal power.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StartupCheck {
    /// Seconds since activation.
    pub t: Vec<f64>,
    /// Mean-parameter estimate `1 + u (1 - t / mean N_s)_+`.
    pub estimate: Vec<f64>,
    /// Sample mean of `1 + u (1 - t / N_s,i)_+`.
    pub actual: Vec<f64>,
    pub min_duration: f64,
    pub mean_duration: f64,
    /// Estimate stays at or above the sampled power for `t <= min_duration`.
    pub upper_until_min: bool,
    /// First second after `min_duration` at which the estimate falls below
    /// the sampled power.
    pub flip: Option<f64>,
}

/// Samples `devices` startup durations from `dist` and compares the
/// mean-parameter estimate with the sampled startup power each second.
pub fn startup_oracle(
    dist: &Dist,
    peak_factor: f64,
    devices: usize,
    seed: u64,
) -> Result<StartupCheck, AnalysisError> {
    dist.validate("startup_duration")?;
    if devices == 0 {
        return Err(AnalysisError::Precondition("no devices".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inv: Vec<f64> = (0..devices).map(|_| 1.0 / dist.sample(&mut rng)).collect();
    let mean_duration = inv.iter().map(|v| 1.0 / v).sum::<f64>() / devices as f64;
    let min_duration = inv.iter().map(|v| 1.0 / v).fold(f64::INFINITY, f64::min);
    let max_duration = inv.iter().map(|v| 1.0 / v).fold(0.0, f64::max);
    let horizon = max_duration.ceil() as usize + 1;
    let mut out = StartupCheck {
        t: Vec::with_capacity(horizon + 1),
        estimate: Vec::with_capacity(horizon + 1),
        actual: Vec::with_capacity(horizon + 1),
        min_duration,
        mean_duration,
        upper_until_min: true,
        flip: None,
    };
    for s in 0..=horizon {
        let t = s as f64;
        let mean_excess = inv
            .par_chunks(1 << 14)
            .map(|c| c.iter().map(|r| (1.0 - t * r).max(0.0)).sum::<f64>())
            .collect::<Vec<_>>()
            .iter()
            .sum::<f64>()
            / devices as f64;
        let actual = 1.0 + peak_factor * mean_excess;
        let estimate = 1.0 + peak_factor * (1.0 - t / mean_duration).max(0.0);
        if t <= min_duration && estimate < actual - 1e-12 {
            out.upper_until_min = false;
        }
        if out.flip.is_none() && t > min_duration && estimate < actual {
            out.flip = Some(t);
        }
        out.t.push(t);
        out.estimate.push(estimate);
        out.actual.push(actual);
    }
    Ok(out)
}

/// Extremes of the scalar mean-temperature recursion under a biased event.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RecursionCheck {
    pub max_deviation: f64,
    /// Deviation `n_rec` seconds after the event.
    pub settled_deviation: f64,
}

/// Iterates the mean-temperature deviation `d_t = (1 - k_c) d_{t-1} - gamma df_t`
/// with `df_t = delta` for `1 <= t <= n_ev` and zero afterwards.
pub fn gain_recursion(g: &GainBoundInputs, k_c: f64) -> RecursionCheck {
    let lambda = 1.0 - k_c;
    let n_ev = g.n_ev.round() as usize;
    let end = n_ev + g.n_rec.round() as usize;
    let mut d = 0.0f64;
    let mut max = 0.0f64;
    for t in 1..=end {
        let df = if t <= n_ev { g.delta } else { 0.0 };
        d = lambda * d - g.gamma * df;
        max = max.max(d.abs());
    }
    RecursionCheck {
        max_deviation: max,
        settled_deviation: d.abs(),
    }
}

/// Sampled cumulative limit shifts of a population that applies each
/// requested change as a random step of fixed size.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShiftSamples {
    /// Population mean after each step.
    pub mean: Vec<f64>,
    /// Population variance after each step.
    pub variance: Vec<f64>,
    /// Per-device shift after the last step.
    pub terminal: Vec<f64>,
}

/// Applies `history` to `devices` independent devices. With `band`, a
/// device skips a step that would move it further than `band` from the
/// expected mean shift.
pub fn limit_shift_oracle(
    history: &[f64],
    resolution: f64,
    devices: usize,
    band: Option<f64>,
    seed: u64,
) -> Result<ShiftSamples, AnalysisError> {
    super::limit_shift_moments(history, resolution)?;
    if devices < 2 {
        return Err(AnalysisError::Precondition("need at least two devices".into()));
    }
    let steps = history.len();
    let mut commands = Vec::with_capacity(steps);
    let mut center = 0.0;
    for &x in history {
        let mut cmd = StepCommand::idle(0.0);
        cmd.shift_step = resolution.copysign(x) * (x != 0.0) as u8 as f64;
        cmd.shift_probability = x.abs() / resolution;
        cmd.band_center = center;
        center += x;
        commands.push(cmd);
    }
    let stream = Stream::new(seed);
    const BLOCK: usize = 4096;
    let blocks: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = (0..devices.div_ceil(BLOCK))
        .into_par_iter()
        .map(|b| {
            let ids = b * BLOCK..((b + 1) * BLOCK).min(devices);
            let mut s1 = vec![0.0; steps];
            let mut s2 = vec![0.0; steps];
            let mut terminal = Vec::with_capacity(ids.len());
            for id in ids {
                let mut shift = 0.0;
                for (t, cmd) in commands.iter().enumerate() {
                    let u = stream.uniform(id as u32, t as u32, LANE_SHIFT);
                    shift += device_limit_shift(cmd, band, shift, u);
                    s1[t] += shift;
                    s2[t] += shift * shift;
                }
                terminal.push(shift);
            }
            (s1, s2, terminal)
        })
        .collect();
    let n = devices as f64;
    let mut s1 = vec![0.0; steps];
    let mut s2 = vec![0.0; steps];
    let mut terminal = Vec::with_capacity(devices);
    for (a, b, t) in blocks {
        for k in 0..steps {
            s1[k] += a[k];
            s2[k] += b[k];
        }
        terminal.extend(t);
    }
    let mean: Vec<f64> = s1.iter().map(|s| s / n).collect();
    let variance = s2
        .iter()
        .zip(&mean)
        .map(|(s, m)| (s / n - m * m) * n / (n - 1.0))
        .collect();
    Ok(ShiftSamples {
        mean,
        variance,
        terminal,
    })
}

/// Bootstrap standard errors of a sample's mean and variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BootstrapBands {
    pub mean: f64,
    pub variance: f64,
    pub mean_se: f64,
    pub variance_se: f64,
}

pub fn bootstrap_moments(samples: &[f64], resamples: usize, seed: u64) -> BootstrapBands {
    let (m, v) = moments(samples);
    let stats: Vec<(f64, f64)> = (0..resamples)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(crate::rng::derive_seed(seed, r as u64));
            let n = samples.len();
            let draw: Vec<f64> = (0..n).map(|_| samples[rng.random_range(0..n)]).collect();
            moments(&draw)
        })
        .collect();
    let (_, mv) = moments(&stats.iter().map(|s| s.0).collect::<Vec<_>>());
    let (_, vv) = moments(&stats.iter().map(|s| s.1).collect::<Vec<_>>());
    BootstrapBands {
        mean: m,
        variance: v,
        mean_se: mv.sqrt(),
        variance_se: vv.sqrt(),
    }
}

fn moments(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (m, v)
}

/// Daily energy of one device with and without door openings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DoorEnergyCheck {
    /// J, corrected for the change in stored heat over the day.
    pub closed: f64,
    pub opened: f64,
    pub uplift: f64,
}

/// Simulates `params` for one day from the start of an off period, once
/// without openings and once with `model.mean_openings` evenly spaced
/// openings of `model.mean_duration` seconds.
pub fn door_energy_oracle(
    params: &ThermalParams,
    model: &DoorModel,
) -> Result<DoorEnergyCheck, AnalysisError> {
    params.validate()?;
    model.validate()?;
    cycle_durations(params, params.t_min(), params.t_max())?;
    let openings = model.mean_openings.round() as u64;
    let duration = model.mean_duration.round() as u64;
    let spacing = (DAY as u64).checked_div(openings).unwrap_or(0);
    let is_open = |t: u64| openings > 0 && (t % spacing) < duration && t / spacing < openings;
    let closed = daily_energy(params, |_| false);
    let opened = daily_energy(params, is_open);
    Ok(DoorEnergyCheck {
        closed,
        opened,
        uplift: opened / closed - 1.0,
    })
}

fn daily_energy(params: &ThermalParams, door: impl Fn(u64) -> bool) -> f64 {
    let c = Coefficients::new(params);
    let mut s = crate::thermal::DeviceState {
        temperature: params.t_min(),
        on: false,
        t_min: params.t_min(),
        t_max: params.t_max(),
        time_since_switch: params.lock_off.max(params.lock_on),
        door_open: false,
    };
    let start = s.temperature;
    let mut energy = 0.0;
    for t in 0..DAY as u64 {
        s.door_open = door(t);
        energy += c.advance(&mut s);
    }
    energy + (s.temperature - start) / params.beta
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{kc_lower_bound, limit_shift_moments, startup_bound_tlim, uniform_startup_excess};

    #[test]
    fn startup_oracle_uniform_small() {
        let c = startup_oracle(&Dist::Uniform(20.0, 40.0), 0.25, 200_000, 1).unwrap();
        assert!(c.upper_until_min);
        let flip = c.flip.unwrap();
        assert!(flip > startup_bound_tlim(20.0, 40.0).unwrap());
        for (t, a) in c.t.iter().zip(&c.actual) {
            let exact = 1.0 + 0.25 * uniform_startup_excess(*t, 20.0, 40.0);
            assert!((a - exact).abs() < 2e-3, "{t}");
        }
    }

    #[test]
    fn recursion_is_tight_at_the_lower_bound() {
        let g = GainBoundInputs::new(0.0192, 54_000.0, 32_400.0, 1.0, 0.2, 0.15, 3.52e-3, 0.2).unwrap();
        let k = kc_lower_bound(&g).unwrap();
        let r = gain_recursion(&g, k);
        assert!(r.max_deviation <= 1.0 && r.settled_deviation <= 0.2 + 1e-9);
        assert!(r.max_deviation > 0.95 && r.settled_deviation > 0.19);
    }

    #[test]
    fn shift_oracle_without_rounding_has_no_spread() {
        let h = vec![0.1; 20];
        let s = limit_shift_oracle(&h, 0.1, 100, None, 3).unwrap();
        assert!(s.variance.iter().all(|v| v.abs() < 1e-12));
        assert!((s.mean[19] - limit_shift_moments(&h, 0.1).unwrap().0).abs() < 1e-9);
    }

    #[test]
    fn bootstrap_se_of_mean() {
        let x: Vec<f64> = (0..10_000).map(|i| (i % 2) as f64).collect();
        let b = bootstrap_moments(&x, 200, 4);
        let se = (0.25f64 / 10_000.0).sqrt();
        assert!((b.mean_se - se).abs() < 0.2 * se, "{}", b.mean_se);
    }
}
