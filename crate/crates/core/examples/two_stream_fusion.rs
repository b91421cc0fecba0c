//! Full pipeline: raw and diff streams, then the fused network.

use vsr::cli::{run_pipeline, Pipeline, RunConfig};
use vsr::data::{synth_generate, Dataset, SynthConfig};
use vsr::eval::percent;

fn main() -> vsr::Result<()> {
    let dir = std::env::temp_dir().join("vsr-fusion-example");
    synth_generate(&SynthConfig { frames: 12, ..SynthConfig::default() }, &dir)?;
    let ds = Dataset::open(&dir)?;
    let cfg = RunConfig {
        data: Some(dir),
        encoder_sizes: vec![256, 64, 32],
        hidden: 32,
        fusion_hidden: 32,
        max_epochs: 15,
        pipeline: Pipeline::Fusion,
        ..RunConfig::default()
    };
    let outcome = run_pipeline(&ds, &cfg, &mut |line| println!("{line}"))?;
    for (name, report) in [("raw", &outcome.raw), ("diff", &outcome.diff), ("fusion", &outcome.fusion)] {
        if let Some(r) = report {
            println!("{name:<7} test accuracy {}%", percent(r.accuracy));
        }
    }
    Ok(())
}
