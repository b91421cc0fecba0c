//! Saves a stream model, reloads it and checks predictions are unchanged.

use vsr::data::PreparedUtterance;
use vsr::model::{Checkpoint, SequenceModel, StreamArch, StreamClassifier, StreamKind};
use vsr::{Rng, Tensor};

fn main() -> vsr::Result<()> {
    let arch = StreamArch { encoder_sizes: vec![20, 6], hidden: 8, ..StreamArch::new(30) };
    let model = StreamClassifier::<f32>::build(&arch, StreamKind::Diff, 5, None, &mut Rng::new(3))?;
    let mut ckpt = Checkpoint::from_stream(&model);
    ckpt.set_meta("note", "example");
    let path = std::env::temp_dir().join("vsr-example.vsrm");
    ckpt.save(&path)?;

    let loaded = Checkpoint::load(&path)?;
    println!("kind {:?}, {} tensors, {} bytes", loaded.kind()?, loaded.tensors.len(), loaded.to_bytes().len());
    for (k, v) in &loaded.metadata {
        println!("  {k} = {v}");
    }
    let restored = loaded.to_stream::<f32>()?;

    let mut rng = Rng::new(4);
    let seq = Tensor::<f32>::from_f64(&[7, 30], &(0..210).map(|_| rng.normal(0.0, 1.0)).collect::<Vec<_>>())?;
    let utt = PreparedUtterance { raw: seq.clone(), diff: seq, label: 0, subject: "s1".into(), path: "x".into() };
    println!("identical logits: {}", model.logits(&utt)? == restored.logits(&utt)?);
    Ok(())
}
