//! Reserve-delivery metrics.

use serde::{Deserialize, Serialize};

use crate::controller::effective_deviation;

/// Offered reserve `N P_n D^r`, W.
pub fn reserve_capacity(devices: usize, nominal_power: f64, reserve_duty: f64) -> f64 {
    devices as f64 * nominal_power * reserve_duty
}

/// Desired aggregate power `P_b + P_res df / df_max` with the deviation
/// deadbanded and saturated.
pub fn desired_power(
    baseline: &[f64],
    df: &[f64],
    reserve: f64,
    df_max: f64,
    deadband: f64,
) -> Vec<f64> {
    baseline
        .iter()
        .zip(df)
        .map(|(&b, &f)| b + reserve * effective_deviation(f, deadband, df_max) / df_max)
        .collect()
}

/// Per-step record of a controlled run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub df: Vec<f64>,
    pub power: Vec<f64>,
    pub baseline: Vec<f64>,
    pub desired: Vec<f64>,
    pub mean_temperature: Vec<f64>,
    pub estimated_temperature: Vec<f64>,
    pub active_duty: Vec<f64>,
    pub l_on: Vec<f64>,
    pub l_off: Vec<f64>,
    /// Offered reserve, W.
    pub reserve: f64,
    /// Full-activation deviation, Hz.
    pub df_max: f64,
}

impl RunRecord {
    pub fn len(&self) -> usize {
        self.power.len()
    }

    pub fn is_empty(&self) -> bool {
        self.power.is_empty()
    }
}

/// Mean absolute percentage errors of one run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapeSummary {
    /// Error relative to the offered reserve, percent. `None` without reserve.
    pub reserve: Option<f64>,
    /// Error relative to the desired power, percent.
    pub tracking: Option<f64>,
    /// Steps left out of `tracking` because the desired power was below 1 %
    /// of the reserve.
    pub tracking_excluded: usize,
    /// Deviation of the uncontrolled power from its smoothed baseline, percent.
    pub baseline: Option<f64>,
}

/// Computes every MAPE of `rec`. `uncontrolled` is the unsmoothed power of
/// the companion run, if available.
pub fn mape_suite(rec: &RunRecord, uncontrolled: Option<&[f64]>) -> MapeSummary {
    let n = rec.power.len();
    let reserve = if rec.reserve > 0.0 && n > 0 {
        let s: f64 = rec
            .desired
            .iter()
            .zip(&rec.power)
            .map(|(d, p)| (d - p).abs())
            .sum();
        Some(100.0 * s / (n as f64 * rec.reserve))
    } else {
        None
    };
    let floor = 0.01 * rec.reserve;
    let mut excluded = 0;
    let mut sum = 0.0;
    let mut count = 0usize;
    for (d, p) in rec.desired.iter().zip(&rec.power) {
        if *d < floor || *d <= 0.0 {
            excluded += 1;
            continue;
        }
        sum += (d - p).abs() / d;
        count += 1;
    }
    let tracking = (count > 0).then(|| 100.0 * sum / count as f64);
    let baseline = uncontrolled.and_then(|raw| {
        let pairs: Vec<(f64, f64)> = raw
            .iter()
            .zip(&rec.baseline)
            .filter(|(_, b)| **b > 0.0)
            .map(|(r, b)| (*r, *b))
            .collect();
        (!pairs.is_empty()).then(|| {
            100.0 * pairs.iter().map(|(r, b)| (r - b).abs() / b).sum::<f64>()
                / pairs.len() as f64
        })
    });
    MapeSummary {
        reserve,
        tracking,
        tracking_excluded: excluded,
        baseline,
    }
}

/// Relative reserve error per step, `|P_d - P| / P_res`.
pub fn reserve_error_series(rec: &RunRecord) -> Vec<f64> {
    rec.desired
        .iter()
        .zip(&rec.power)
        .map(|(d, p)| if rec.reserve > 0.0 { (d - p).abs() / rec.reserve } else { 0.0 })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DroopPoint {
    /// Bin center, Hz.
    pub df: f64,
    pub count: usize,
    /// Mean activated reserve as a fraction of `P_res`.
    pub activation: f64,
    pub sd: f64,
    /// Ideal activation at the mean deviation of the bin.
    pub ideal: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroopSummary {
    pub points: Vec<DroopPoint>,
    /// Count-weighted mean of `|activation - ideal|`, percent of `P_res`.
    pub mean_abs_deviation: f64,
}

/// Bins activated reserve `(P - P_b) / P_res` by frequency deviation.
pub fn droop_points(rec: &RunRecord, bin_width: f64) -> DroopSummary {
    let mut bins: std::collections::BTreeMap<i64, (usize, f64, f64, f64)> = Default::default();
    if rec.reserve > 0.0 && bin_width > 0.0 {
        for ((&f, &p), &b) in rec.df.iter().zip(&rec.power).zip(&rec.baseline) {
            let key = (f / bin_width).round() as i64;
            let a = (p - b) / rec.reserve;
            let e = bins.entry(key).or_default();
            e.0 += 1;
            e.1 += a;
            e.2 += a * a;
            e.3 += f;
        }
    }
    let mut points = Vec::with_capacity(bins.len());
    let mut weighted = 0.0;
    let mut total = 0usize;
    for (key, (n, s, s2, sf)) in bins {
        let mean = s / n as f64;
        let var = (s2 / n as f64 - mean * mean).max(0.0);
        let mean_df = sf / n as f64;
        let ideal = (mean_df / rec.df_max).clamp(-1.0, 1.0);
        weighted += n as f64 * (mean - ideal).abs();
        total += n;
        points.push(DroopPoint {
            df: key as f64 * bin_width,
            count: n,
            activation: mean,
            sd: var.sqrt(),
            ideal,
        });
    }
    DroopSummary {
        points,
        mean_abs_deviation: if total > 0 { 100.0 * weighted / total as f64 } else { 0.0 },
    }
}

/// Means of consecutive non-overlapping blocks of `window` samples; a
/// trailing partial block is dropped.
pub fn block_means(series: &[f64], window: usize) -> Vec<f64> {
    if window == 0 {
        return Vec::new();
    }
    series
        .chunks_exact(window)
        .map(|c| c.iter().sum::<f64>() / window as f64)
        .collect()
}

/// Compact metrics of one run, written as JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub controller: String,
    pub devices: usize,
    pub steps: usize,
    pub reserve_kw: f64,
    pub mape: MapeSummary,
    pub droop_deviation_pct: f64,
    pub max_abs_mean_temp_dev: f64,
    pub final_mean_temp_dev: f64,
    pub mean_power_kw: f64,
    pub saturations: usize,
    pub controllability_warnings: usize,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reserve_for_reference_population() {
        let p = reserve_capacity(63_500, 80.0, 0.2);
        assert!((p - 1.016e6).abs() < 1.0);
    }

    #[test]
    fn desired_power_saturates() {
        let d = desired_power(&[100.0, 100.0, 100.0], &[0.1, 0.4, -0.4], 50.0, 0.2, 0.0);
        assert_eq!(d, vec![125.0, 150.0, 50.0]);
    }

    #[test]
    fn perfect_tracking_has_zero_error() {
        let rec = RunRecord {
            df: vec![0.0, 0.1, -0.1],
            power: vec![100.0, 125.0, 75.0],
            baseline: vec![100.0; 3],
            desired: vec![100.0, 125.0, 75.0],
            reserve: 50.0,
            df_max: 0.2,
            ..RunRecord::default()
        };
        let m = mape_suite(&rec, Some(&[100.0, 100.0, 100.0]));
        assert_eq!(m.reserve, Some(0.0));
        assert_eq!(m.tracking, Some(0.0));
        assert_eq!(m.baseline, Some(0.0));
        let droop = droop_points(&rec, 0.05);
        assert_eq!(droop.points.len(), 3);
        assert!(droop.mean_abs_deviation < 1e-12);
    }

    #[test]
    fn zero_reserve_reports_none() {
        let rec = RunRecord {
            df: vec![0.0],
            power: vec![1.0],
            baseline: vec![1.0],
            desired: vec![1.0],
            reserve: 0.0,
            df_max: 0.2,
            ..RunRecord::default()
        };
        assert_eq!(mape_suite(&rec, None).reserve, None);
    }

    #[test]
    fn small_desired_power_is_excluded() {
        let rec = RunRecord {
            df: vec![0.0, 0.0],
            power: vec![1.0, 100.0],
            baseline: vec![0.1, 100.0],
            desired: vec![0.1, 100.0],
            reserve: 50.0,
            df_max: 0.2,
            ..RunRecord::default()
        };
        let m = mape_suite(&rec, None);
        assert_eq!(m.tracking_excluded, 1);
        assert_eq!(m.tracking, Some(0.0));
    }

    #[test]
    fn block_means_drop_partial_tail() {
        assert_eq!(block_means(&[1.0, 3.0, 5.0, 7.0, 9.0], 2), vec![2.0, 6.0]);
    }
}
