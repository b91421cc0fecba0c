//! Trains a single raw-image stream on synthetic data and evaluates it.

use vsr::cli::{prepare_split, RunConfig};
use vsr::data::{synth_generate, Dataset, SynthConfig};
use vsr::eval::{evaluate, render_report, ReportFormat, Sections};
use vsr::model::{StreamArch, StreamClassifier, StreamKind};
use vsr::training::{train_stream, TrainConfig};
use vsr::Rng;

fn main() -> vsr::Result<()> {
    let dir = std::env::temp_dir().join("vsr-train-stream-example");
    synth_generate(&SynthConfig { frames: 12, ..SynthConfig::default() }, &dir)?;
    let ds = Dataset::open(&dir)?;
    let cfg = RunConfig { data: Some(dir), ..RunConfig::default() };
    let data = prepare_split(&ds, &cfg)?;

    let arch = StreamArch { encoder_sizes: vec![256, 64, 32], hidden: 32, ..StreamArch::new(26 * 44) };
    let model = StreamClassifier::build(&arch, StreamKind::Raw, 4, None, &mut Rng::new(0))?;
    let train_cfg = TrainConfig { max_epochs: 15, lr: 1e-3, ..TrainConfig::stream() };
    let (model, history) = train_stream(model, &data.train, &data.validation, &train_cfg)?;
    for e in &history.epochs {
        println!("epoch {:>2}: loss {:.4}, validation {:.1}%", e.epoch, e.train_loss, 100.0 * e.val_accuracy);
    }
    println!("best epoch {:?}, stopped by {:?}", history.best_epoch, history.stop_reason);

    let report = evaluate(&model, 4, &data.test, "test", "raw")?;
    print!("{}", render_report(&report, ReportFormat::Text, Sections { per_subject: true, confusion: true }));
    Ok(())
}
