//! Generates a small synthetic lip-motion corpus and inspects it.

use vsr::data::{synth_generate, Dataset, SynthConfig};

fn main() -> vsr::Result<()> {
    let dir = std::env::temp_dir().join("vsr-synth-example");
    let cfg = SynthConfig { classes: 3, subjects: 4, reps: 2, frames: 12, ..SynthConfig::default() };
    let manifest = synth_generate(&cfg, &dir)?;
    println!("{} utterances in {}", manifest.records.len(), dir.display());
    println!("subjects: {:?}", manifest.subjects());

    let ds = Dataset::open(&dir)?;
    let frames = ds.load_frames(0)?;
    println!("{}: {} frames of {}x{}", ds.manifest.records[0].path, frames.len, frames.height, frames.width);

    // Mean absolute change from the previous frame traces the mouth motion.
    let motion: Vec<String> = (1..frames.len)
        .map(|t| {
            let (a, b) = (frames.frame(t - 1), frames.frame(t));
            let total: f64 = a.iter().zip(b).map(|(&x, &y)| (x as f64 - y as f64).abs()).sum();
            format!("{:.1}", total / a.len() as f64)
        })
        .collect();
    println!("frame-to-frame change: {}", motion.join(" "));
    Ok(())
}
