use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use fridgepfc::analysis::report::{verify_propositions, VerifyOptions};
use fridgepfc::analysis::{kc_lower_bound, kc_upper_bound, GainBoundInputs, KcUpperInputs};
use fridgepfc::controller::ControllerMode;
use fridgepfc::output::{write_outcome, write_sweep_rows, write_sweep_summary};
use fridgepfc::scenario::{
    scenario_population, simulate, summarize_sweep, sweep, DayKind, Scenario, SignalSource,
    SweepAxis, SweepRow,
};
use fridgepfc::signals::{synth_constant, synth_noise, synth_step, NoiseParams};

#[derive(Debug, Parser)]
#[command(name = "fridgepfc", version, about = "Refrigerator population frequency control simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one scenario and write its result files.
    Simulate {
        scenario: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
        /// Output directory, replaces `output.dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Vary one parameter of a scenario.
    Sweep {
        scenario: PathBuf,
        /// size, reserve-duty, peak-factor, lock-on, kc, resolution or doors.
        #[arg(long)]
        axis: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[arg(long, default_value_t = 1)]
        repeats: usize,
        #[command(flatten)]
        overrides: Overrides,
        /// CSV file with one row per run; a `.summary.csv` sibling holds the
        /// per-value statistics.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Gain bounds for a scenario's population, then a gain sweep.
    TuneGain {
        scenario: PathBuf,
        #[command(flatten)]
        bounds: BoundArgs,
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
        /// Print the bounds only.
        #[arg(long)]
        no_sweep: bool,
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare the closed-form results with their Monte-Carlo oracles.
    VerifyPropositions {
        /// Exit nonzero if any check fails.
        #[arg(long)]
        strict: bool,
        /// Reduced sample sizes.
        #[arg(long)]
        quick: bool,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Print JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Write a synthetic frequency deviation series as CSV.
    GenSignal {
        #[arg(long, value_enum, default_value_t = SignalKind::ZeroMean)]
        kind: SignalKind,
        /// Seconds.
        #[arg(long, default_value_t = 86_400)]
        duration: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Step height or constant value, Hz.
        #[arg(long, default_value_t = 0.0192)]
        delta: f64,
        /// Step length, s.
        #[arg(long, default_value_t = 54_000)]
        n_event: usize,
        /// Overrides the preset fluctuation level, Hz.
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SignalKind {
    ZeroMean,
    SmallBias,
    LargeBias,
    Step,
    Constant,
}

#[derive(Debug, Args)]
struct Overrides {
    #[arg(long)]
    seed: Option<u64>,
    /// Seconds.
    #[arg(long)]
    duration: Option<usize>,
    #[arg(long)]
    devices: Option<usize>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    mode: Option<ControllerMode>,
    /// Replace the signal by a synthetic day.
    #[arg(long)]
    day: Option<DayKind>,
}

impl Overrides {
    fn apply(&self, s: &mut Scenario) -> anyhow::Result<()> {
        if let Some(v) = self.seed {
            s.seed = v;
        }
        if let Some(v) = self.duration {
            s.duration = v;
        }
        if let Some(v) = self.devices {
            s.population.size = v;
        }
        if let Some(v) = self.threads {
            s.threads = v;
        }
        if let Some(v) = self.mode {
            s.controller.mode = v;
        }
        if let Some(d) = self.day {
            s.signal = d.signal();
        }
        s.validate()?;
        Ok(())
    }
}

#[derive(Debug, Args)]
struct BoundArgs {
    /// Bias of the design event, Hz.
    #[arg(long, default_value_t = 0.0192)]
    delta: f64,
    /// Length of the design event, h.
    #[arg(long, default_value_t = 15.0)]
    event_hours: f64,
    /// Allowed settling time after the event, h.
    #[arg(long, default_value_t = 9.0)]
    recovery_hours: f64,
    /// Mean temperature tolerance during the event, degC.
    #[arg(long, default_value_t = 1.0)]
    tolerance: f64,
    /// Tolerance after settling, degC.
    #[arg(long, default_value_t = 0.2)]
    settled_tolerance: f64,
}

fn load(path: &Path, overrides: &Overrides) -> anyhow::Result<Scenario> {
    let mut s = Scenario::load(path)?;
    overrides.apply(&mut s)?;
    Ok(s)
}

fn print_sweep(rows: &[SweepRow], out: Option<&Path>) -> anyhow::Result<()> {
    let summary = summarize_sweep(rows);
    println!("value,runs,reserve_mape_mean,reserve_mape_min,reserve_mape_max,tracking_mape_mean,max_temp_dev_mean");
    for r in &summary {
        println!(
            "{},{},{:.4},{:.4},{:.4},{:.4},{:.4}",
            r.value,
            r.runs,
            r.reserve_mape_mean,
            r.reserve_mape_min,
            r.reserve_mape_max,
            r.tracking_mape_mean,
            r.max_temp_dev_mean
        );
    }
    if let Some(path) = out {
        let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        write_sweep_rows(rows, BufWriter::new(f))?;
        let sp = path.with_extension("summary.csv");
        let f = File::create(&sp).with_context(|| format!("creating {}", sp.display()))?;
        write_sweep_summary(&summary, BufWriter::new(f))?;
        info!("wrote {} and {}", path.display(), sp.display());
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::Simulate {
            scenario,
            overrides,
            out,
        } => {
            let mut s = load(&scenario, &overrides)?;
            if out.is_some() {
                s.output.dir = out;
            }
            let outcome = simulate(&s)?;
            for p in write_outcome(&outcome, &s.output)? {
                info!("wrote {}", p.display());
            }
            println!("{}", serde_json::to_string_pretty(&outcome.metrics)?);
        }
        Command::Sweep {
            scenario,
            axis,
            values,
            repeats,
            overrides,
            out,
        } => {
            let s = load(&scenario, &overrides)?;
            let axis: SweepAxis = axis.parse()?;
            let rows = sweep(&s, axis, &values, repeats)?;
            print_sweep(&rows, out.as_deref())?;
        }
        Command::TuneGain {
            scenario,
            bounds,
            values,
            repeats,
            no_sweep,
            overrides,
            out,
        } => {
            let mut s = load(&scenario, &overrides)?;
            let pop = scenario_population(&s)?;
            let upper = kc_upper_bound(&KcUpperInputs::from_stats(&pop.stats))?;
            let inputs = GainBoundInputs::new(
                bounds.delta,
                bounds.event_hours * 3600.0,
                bounds.recovery_hours * 3600.0,
                bounds.tolerance,
                bounds.settled_tolerance,
                s.controller.reserve_duty,
                pop.stats.beta_power,
                s.controller.df_max,
            )?;
            let lower = kc_lower_bound(&inputs);
            println!("kc_upper = {upper:.6e}");
            match &lower {
                Ok(k) => println!("kc_lower = {k:.6e}"),
                Err(e) => println!("kc_lower = infeasible ({e})"),
            }
            if let Ok(k) = lower {
                if k > upper {
                    println!("warning: lower bound exceeds upper bound");
                }
            }
            if !no_sweep {
                let values = values.unwrap_or_else(|| (1..=10).map(|i| i as f64 * 1e-5).collect());
                s.controller.mode = ControllerMode::Proposed;
                if matches!(s.signal, SignalSource::Constant { .. }) {
                    bail!("a gain sweep needs a fluctuating signal");
                }
                let rows = sweep(&s, SweepAxis::Kc, &values, repeats)?;
                print_sweep(&rows, out.as_deref())?;
            }
        }
        Command::VerifyPropositions {
            strict,
            quick,
            seed,
            json,
        } => {
            let mut opts = VerifyOptions {
                seed,
                ..VerifyOptions::default()
            };
            if quick {
                opts.startup_devices = 100_000;
                opts.shift_devices = 20_000;
            }
            let rows = verify_propositions(&opts)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&rows)?);
            } else {
                let width = rows.iter().map(|r| r.name.len()).max().unwrap_or(0);
                for r in &rows {
                    println!(
                        "{}  {:<width$}  {:>14.6e}  expected {}",
                        if r.passed { "PASS" } else { "FAIL" },
                        r.name,
                        r.computed,
                        r.expected
                    );
                }
            }
            let failed = rows.iter().filter(|r| !r.passed).count();
            if failed > 0 {
                eprintln!("{failed} of {} checks failed", rows.len());
            }
            return Ok(!strict || failed == 0);
        }
        Command::GenSignal {
            kind,
            duration,
            seed,
            delta,
            n_event,
            sigma,
            out,
        } => {
            let day = |d: DayKind| -> anyhow::Result<_> {
                let mut p: NoiseParams = d.noise();
                if let Some(s) = sigma {
                    p.sigma = s;
                }
                Ok(synth_noise(p, duration, seed)?)
            };
            let series = match kind {
                SignalKind::ZeroMean => day(DayKind::ZeroMean)?,
                SignalKind::SmallBias => day(DayKind::SmallBias)?,
                SignalKind::LargeBias => day(DayKind::LargeBias)?,
                SignalKind::Step => synth_step(delta, n_event, duration),
                SignalKind::Constant => synth_constant(delta, duration),
            };
            let f = File::create(&out).with_context(|| format!("creating {}", out.display()))?;
            series.to_csv(BufWriter::new(f))?;
            info!("wrote {} samples to {}", series.len(), out.display());
        }
    }
    Ok(true)
}

fn error_line(err: &anyhow::Error) -> String {
    let kind = err
        .chain()
        .find_map(|e| e.downcast_ref::<fridgepfc::Error>())
        .map_or("cli", |e| e.kind());
    let mut parts = Vec::new();
    for e in err.chain() {
        parts.push(e.to_string());
        if e.downcast_ref::<fridgepfc::Error>().is_some() {
            break;
        }
    }
    let message = parts.join(": ");
    serde_json::json!({ "error": kind, "message": message }).to_string()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("{}", error_line(&e));
            ExitCode::FAILURE
        }
    }
}
