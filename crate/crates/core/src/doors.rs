//! Door-opening schedules and their expected effect on the duty cycle.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{weighted::WeightedIndex, Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::engine::{run_uncontrolled, RunOptions};
use crate::error::{Error, ModelError, Result};
use crate::population::Population;
use crate::rng::derive_seed;
use crate::signals::centered_moving_average;

pub const SECONDS_PER_DAY: u32 = 86_400;

/// Relative likelihood of an opening in each hour of the day.
pub const RESIDENTIAL_PROFILE: [f64; 24] = [
    0.2, 0.1, 0.1, 0.1, 0.1, 0.3, 0.8, 1.5, 1.3, 0.9, 0.8, 1.0, 1.4, 1.2, 0.9, 0.9, 1.1, 1.5,
    1.9, 1.8, 1.3, 1.0, 0.7, 0.4,
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DoorModel {
    pub mean_openings: f64,
    pub sd_openings: f64,
    /// Mean opening duration, s.
    pub mean_duration: f64,
    pub sd_duration: f64,
    /// Daily energy uplift caused by openings, as a fraction.
    pub energy_uplift: f64,
    pub hourly_profile: Vec<f64>,
}

impl Default for DoorModel {
    fn default() -> Self {
        Self {
            mean_openings: 40.0,
            sd_openings: 5.0,
            mean_duration: 20.0,
            sd_duration: 3.0,
            energy_uplift: 0.22,
            hourly_profile: RESIDENTIAL_PROFILE.to_vec(),
        }
    }
}

impl DoorModel {
    pub fn validate(&self) -> Result<(), ModelError> {
        let ok = self.mean_openings >= 0.0
            && self.sd_openings >= 0.0
            && self.mean_duration >= 1.0
            && self.sd_duration >= 0.0
            && self.energy_uplift > 0.0
            && self.hourly_profile.len() == 24
            && self.hourly_profile.iter().all(|&w| w >= 0.0 && w.is_finite())
            && self.hourly_profile.iter().sum::<f64>() > 0.0;
        if ok {
            Ok(())
        } else {
            Err(ModelError::Population(format!("invalid door model: {self:?}")))
        }
    }
}

/// One opening, in seconds from the start of the run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DoorEvent {
    pub start: u32,
    pub duration: u32,
}

impl DoorEvent {
    pub fn end(&self) -> u32 {
        self.start + self.duration
    }
}

/// Openings of one device over `days` days, sorted and with overlaps merged.
pub fn sample_schedule(model: &DoorModel, device: u64, days: u32, seed: u64) -> Vec<DoorEvent> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, device));
    let hours = WeightedIndex::new(&model.hourly_profile).expect("validated profile");
    let count = Normal::new(model.mean_openings, model.sd_openings).expect("validated");
    let duration = Normal::new(model.mean_duration, model.sd_duration).expect("validated");
    let mut events = Vec::new();
    for day in 0..days {
        let n = count.sample(&mut rng).round().max(0.0) as u32;
        for _ in 0..n {
            let hour = hours.sample(&mut rng) as u32;
            let second = rng.random_range(0..3600u32);
            let d = duration.sample(&mut rng).round().max(1.0) as u32;
            events.push(DoorEvent {
                start: day * SECONDS_PER_DAY + hour * 3600 + second,
                duration: d,
            });
        }
    }
    merge(events)
}

fn merge(mut events: Vec<DoorEvent>) -> Vec<DoorEvent> {
    events.sort_by_key(|e| e.start);
    let mut out: Vec<DoorEvent> = Vec::with_capacity(events.len());
    for e in events {
        match out.last_mut() {
            Some(last) if e.start <= last.end() => {
                last.duration = last.duration.max(e.end() - last.start);
            }
            _ => out.push(e),
        }
    }
    out
}

/// Door openings of a whole population in a flat layout.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DoorSchedule {
    offsets: Vec<u32>,
    starts: Vec<u32>,
    ends: Vec<u32>,
}

impl DoorSchedule {
    /// Samples schedules for `devices` devices covering at least `steps` seconds.
    pub fn sample(model: &DoorModel, devices: usize, steps: usize, seed: u64) -> Result<Self> {
        model.validate()?;
        let days = (steps as u64).div_ceil(SECONDS_PER_DAY as u64).max(1) as u32;
        let per_device = (0..devices)
            .map(|i| sample_schedule(model, i as u64, days, seed))
            .collect::<Vec<_>>();
        Ok(Self::from_events(&per_device))
    }

    pub fn from_events(per_device: &[Vec<DoorEvent>]) -> Self {
        let mut s = Self {
            offsets: Vec::with_capacity(per_device.len() + 1),
            ..Self::default()
        };
        s.offsets.push(0);
        for events in per_device {
            for e in merge(events.clone()) {
                s.starts.push(e.start);
                s.ends.push(e.end());
            }
            s.offsets.push(s.starts.len() as u32);
        }
        s
    }

    pub fn devices(&self) -> usize {
        self.offsets.len().saturating_sub(1)
    }

    pub fn events(&self, device: usize) -> Vec<DoorEvent> {
        let (a, b) = self.range(device);
        (a..b)
            .map(|k| DoorEvent {
                start: self.starts[k as usize],
                duration: self.ends[k as usize] - self.starts[k as usize],
            })
            .collect()
    }

    /// `[start, end)` of the event with flat index `k`.
    #[inline]
    pub fn event(&self, k: usize) -> (u32, u32) {
        (self.starts[k], self.ends[k])
    }

    /// Index range of `device`'s events.
    pub fn range(&self, device: usize) -> (u32, u32) {
        (self.offsets[device], self.offsets[device + 1])
    }

    /// Moves `next` past finished events and reports whether the door is
    /// open during `step`.
    #[inline]
    pub fn advance_cursor(&self, next: &mut u32, end: u32, step: u32) -> bool {
        while *next < end && self.ends[*next as usize] <= step {
            *next += 1;
        }
        *next < end && self.starts[*next as usize] <= step
    }

    /// Writes `device,start,duration` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["device", "start", "duration"])?;
        for i in 0..self.devices() {
            for e in self.events(i) {
                w.write_record([i.to_string(), e.start.to_string(), e.duration.to_string()])?;
            }
        }
        w.flush().map_err(|e| Error::Io {
            path: "<door schedule>".into(),
            source: e,
        })?;
        Ok(())
    }

    /// Reads `device,start,duration` rows for `devices` devices.
    pub fn read_csv<R: Read>(input: R, devices: usize) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let mut per_device = vec![Vec::new(); devices];
        for row in r.deserialize::<(usize, u32, u32)>() {
            let (device, start, duration) = row?;
            let slot = per_device.get_mut(device).ok_or_else(|| {
                Error::Scenario(format!("door schedule names device {device} of {devices}"))
            })?;
            slot.push(DoorEvent { start, duration });
        }
        Ok(Self::from_events(&per_device))
    }
}

/// Expected extra duty cycle caused by door openings at each step.
///
/// Averages the difference between uncontrolled runs with and without
/// sampled schedules over `ensemble` members, smooths it with a centered
/// window, and clips negative values to zero.
pub fn delta_duty_profile(
    pop: &Population,
    model: &DoorModel,
    steps: usize,
    ensemble: usize,
    seed: u64,
    window: usize,
    options: RunOptions,
) -> Result<Vec<f64>> {
    let base = run_uncontrolled(pop, None, steps, options)?;
    let mut acc = vec![0.0; steps];
    let members = ensemble.max(1);
    for m in 0..members {
        let sched = DoorSchedule::sample(model, pop.len(), steps, derive_seed(seed, m as u64))?;
        let tr = run_uncontrolled(pop, Some(&sched), steps, options)?;
        for (a, (w, b)) in acc.iter_mut().zip(tr.power.iter().zip(&base.power)) {
            *a += w - b;
        }
    }
    let scale = 1.0 / (members as f64 * pop.len() as f64 * pop.stats.nominal_power);
    for a in &mut acc {
        *a *= scale;
    }
    Ok(centered_moving_average(&acc, window)
        .into_iter()
        .map(|v| v.max(0.0))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedules_are_sorted_disjoint_and_reproducible() {
        let m = DoorModel::default();
        let a = sample_schedule(&m, 3, 2, 9);
        assert_eq!(a, sample_schedule(&m, 3, 2, 9));
        assert_ne!(a, sample_schedule(&m, 4, 2, 9));
        for w in a.windows(2) {
            assert!(w[0].end() < w[1].start);
        }
        assert!(a.iter().all(|e| e.duration >= 1 && e.end() <= 2 * SECONDS_PER_DAY + 100));
    }

    #[test]
    fn mean_count_and_duration() {
        let m = DoorModel::default();
        let sched = DoorSchedule::sample(&m, 2000, 86_400, 1).unwrap();
        let (mut n, mut secs) = (0usize, 0u64);
        for i in 0..sched.devices() {
            let ev = sched.events(i);
            n += ev.len();
            secs += ev.iter().map(|e| e.duration as u64).sum::<u64>();
        }
        let per = n as f64 / 2000.0;
        // Merging overlapping openings removes a few events.
        assert!(per > 38.5 && per < 40.5, "{per}");
        let open = secs as f64 / 2000.0;
        assert!(open > 760.0 && open < 815.0, "{open}");
    }

    #[test]
    fn overlapping_events_merge() {
        let merged = merge(vec![
            DoorEvent { start: 10, duration: 5 },
            DoorEvent { start: 12, duration: 10 },
            DoorEvent { start: 40, duration: 1 },
        ]);
        assert_eq!(
            merged,
            vec![DoorEvent { start: 10, duration: 12 }, DoorEvent { start: 40, duration: 1 }]
        );
    }

    #[test]
    fn cursor_reports_open_intervals() {
        let s = DoorSchedule::from_events(&[vec![DoorEvent { start: 5, duration: 2 }]]);
        let (mut next, end) = s.range(0);
        let open: Vec<bool> = (0..9).map(|t| s.advance_cursor(&mut next, end, t)).collect();
        assert_eq!(open, vec![false, false, false, false, false, true, true, false, false]);
    }

    #[test]
    fn csv_round_trip() {
        let s = DoorSchedule::sample(&DoorModel::default(), 5, 86_400, 2).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        assert_eq!(DoorSchedule::read_csv(buf.as_slice(), 5).unwrap(), s);
    }
}
