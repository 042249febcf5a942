//! Measures engine throughput in nanoseconds per device-step.

use std::time::Instant;

use fridgepfc::controller::{ControllerConfig, ControllerConstants, Estimator};
use fridgepfc::engine::{RunOptions, Simulation};
use fridgepfc::population::{sample_population, PopulationSpec};
use fridgepfc::signals::{synth_noise, NoiseParams};

fn main() {
    let n: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(70_000);
    let steps: usize = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(3600);
    let pop = sample_population(&PopulationSpec::with_size(n), 1).expect("population");
    let signal = synth_noise(NoiseParams::default(), steps, 2).expect("signal");
    let consts = ControllerConstants::from_population(&pop);
    let mut est = Estimator::new(ControllerConfig::default(), consts, Vec::new()).expect("config");
    let mut sim = Simulation::new(&pop, None, 3, RunOptions::default()).expect("engine");
    let start = Instant::now();
    let controlled = std::env::args().nth(3).as_deref() != Some("uncontrolled");
    let trace = sim.run(controlled.then_some(&mut est), &signal.samples);
    let secs = start.elapsed().as_secs_f64();
    if controlled {
        let p: f64 = trace.estimates.iter().map(|e| e.probability).sum::<f64>() / steps as f64;
        println!("mean switching probability {p:.4}");
    }
    println!(
        "{n} devices x {steps} steps: {secs:.2} s, {:.2} ns/device-step, mean power {:.1} kW",
        secs * 1e9 / (n * steps) as f64,
        trace.power.iter().sum::<f64>() / steps as f64 / 1e3
    );
}
