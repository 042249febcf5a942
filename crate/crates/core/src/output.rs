//! Result files of a run.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::metrics::{block_means, MetricSummary, RunRecord};
use crate::scenario::{OutputSettings, RunOutcome, SweepRow, SweepSummary};

pub const PER_STEP_HEADER: [&str; 10] = [
    "t", "df", "p_agg", "p_baseline", "p_desired", "t_true", "t_est", "d_active", "l_on", "l_off",
];

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn columns(rec: &RunRecord) -> [&[f64]; 9] {
    [
        &rec.df,
        &rec.power,
        &rec.baseline,
        &rec.desired,
        &rec.mean_temperature,
        &rec.estimated_temperature,
        &rec.active_duty,
        &rec.l_on,
        &rec.l_off,
    ]
}

/// One row per second.
pub fn write_per_step<W: Write>(rec: &RunRecord, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(PER_STEP_HEADER)?;
    let cols = columns(rec);
    for t in 0..rec.len() {
        let mut row = Vec::with_capacity(10);
        row.push(t.to_string());
        row.extend(cols.iter().map(|c| c.get(t).copied().unwrap_or(f64::NAN).to_string()));
        w.write_record(&row)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Block means over `window` seconds; `t` is the block start.
pub fn write_downsampled<W: Write>(rec: &RunRecord, window: usize, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(PER_STEP_HEADER)?;
    let cols: Vec<Vec<f64>> = columns(rec).iter().map(|c| block_means(c, window)).collect();
    let blocks = cols.first().map_or(0, Vec::len);
    for b in 0..blocks {
        let mut row = Vec::with_capacity(10);
        row.push((b * window).to_string());
        row.extend(cols.iter().map(|c| c[b].to_string()));
        w.write_record(&row)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Controller internals per second.
pub fn write_diagnostics<W: Write>(outcome: &RunOutcome, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "t",
        "on_fraction",
        "locked_on",
        "locked_off",
        "p_uncontrolled",
        "probability",
        "switch_fraction",
        "limit_change",
        "shift_probability",
    ])?;
    let tr = &outcome.trace;
    for t in 0..tr.power.len() {
        let mut row = vec![
            t.to_string(),
            tr.on_fraction[t].to_string(),
            tr.locked_on[t].to_string(),
            tr.locked_off[t].to_string(),
            outcome.uncontrolled[t].to_string(),
        ];
        match tr.estimates.get(t) {
            Some(e) => row.extend(
                [e.probability, e.switch_fraction, e.limit_change, e.shift_probability]
                    .map(|v| v.to_string()),
            ),
            None => row.extend(std::iter::repeat_n(String::new(), 4)),
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn write_metrics<W: Write>(m: &MetricSummary, mut out: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, m)?;
    writeln!(out).map_err(|e| Error::Io {
        path: PathBuf::from("<metrics>"),
        source: e,
    })?;
    Ok(())
}

/// Writes the files selected by `settings` into its directory and returns
/// their paths.
pub fn write_outcome(outcome: &RunOutcome, settings: &OutputSettings) -> Result<Vec<PathBuf>> {
    let Some(dir) = &settings.dir else {
        return Ok(Vec::new());
    };
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.clone(),
        source: e,
    })?;
    let mut written = Vec::new();
    let p = dir.join("metrics.json");
    write_metrics(&outcome.metrics, create(&p)?)?;
    written.push(p);
    if settings.per_step {
        let p = dir.join("per_step.csv");
        write_per_step(&outcome.record, create(&p)?)?;
        written.push(p);
    }
    if settings.downsample > 0 {
        let p = dir.join("plot.csv");
        write_downsampled(&outcome.record, settings.downsample, create(&p)?)?;
        written.push(p);
    }
    if settings.diagnostics {
        let p = dir.join("diagnostics.csv");
        write_diagnostics(outcome, create(&p)?)?;
        written.push(p);
    }
    Ok(written)
}

/// Sweep rows flattened to one line per run.
pub fn write_sweep_rows<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "value",
        "repeat",
        "seed",
        "controller",
        "devices",
        "reserve_kw",
        "reserve_mape",
        "tracking_mape",
        "baseline_mape",
        "droop_deviation_pct",
        "max_abs_mean_temp_dev",
        "final_mean_temp_dev",
        "saturations",
    ])?;
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    for r in rows {
        let m = &r.metrics;
        w.write_record([
            r.value.to_string(),
            r.repeat.to_string(),
            r.seed.to_string(),
            m.controller.clone(),
            m.devices.to_string(),
            m.reserve_kw.to_string(),
            opt(m.mape.reserve),
            opt(m.mape.tracking),
            opt(m.mape.baseline),
            m.droop_deviation_pct.to_string(),
            m.max_abs_mean_temp_dev.to_string(),
            m.final_mean_temp_dev.to_string(),
            m.saturations.to_string(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn write_sweep_summary<W: Write>(rows: &[SweepSummary], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(n: usize) -> RunRecord {
        let v: Vec<f64> = (0..n).map(|i| i as f64).collect();
        RunRecord {
            df: v.clone(),
            power: v.clone(),
            baseline: v.clone(),
            desired: v.clone(),
            mean_temperature: v.clone(),
            estimated_temperature: v.clone(),
            active_duty: v.clone(),
            l_on: v.clone(),
            l_off: v,
            reserve: 1.0,
            df_max: 0.2,
        }
    }

    #[test]
    fn per_step_has_one_row_per_second() {
        let mut buf = Vec::new();
        write_per_step(&record(5), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 6);
        assert_eq!(lines[0], PER_STEP_HEADER.join(","));
        assert_eq!(lines[3], "2,2,2,2,2,2,2,2,2,2");
    }

    #[test]
    fn downsampled_rows_are_block_means() {
        let mut buf = Vec::new();
        write_downsampled(&record(4), 2, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().nth(2).unwrap(), "2,2.5,2.5,2.5,2.5,2.5,2.5,2.5,2.5,2.5");
    }
}
