//! Aggregates test accuracy over several seeds as "Mean (Std) | Max".

use vsr::cli::{run_pipeline, Pipeline, RunConfig};
use vsr::data::{synth_generate, Dataset, SynthConfig};
use vsr::eval::{aggregate_runs, render_aggregate, ReportFormat};

fn main() -> vsr::Result<()> {
    let dir = std::env::temp_dir().join("vsr-repeat-example");
    synth_generate(&SynthConfig { frames: 10, ..SynthConfig::default() }, &dir)?;
    let ds = Dataset::open(&dir)?;
    let base = RunConfig {
        data: Some(dir),
        encoder_sizes: vec![128, 32, 16],
        hidden: 16,
        max_epochs: 8,
        pipeline: Pipeline::Raw,
        ..RunConfig::default()
    };
    let seeds = [0, 1, 2];
    let mut reports = Vec::new();
    for &seed in &seeds {
        let outcome = run_pipeline(&ds, &base.with_seed(seed), &mut |_| {})?;
        let report = outcome.final_report().clone();
        println!("seed {seed}: {:.1}%", 100.0 * report.accuracy);
        reports.push(report);
    }
    let agg = aggregate_runs(&reports, &seeds)?;
    print!("{}", render_aggregate(&agg, "raw", ReportFormat::Text));
    Ok(())
}
