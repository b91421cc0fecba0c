//! Raw and difference-image preprocessing of one utterance.

use vsr::data::{preprocess_diff, preprocess_raw};
use vsr::Tensor;

fn main() -> vsr::Result<()> {
    // Three 2x2 frames: a bright patch moving right to left.
    let frames = Tensor::<f64>::from_vec(
        &[3, 4],
        vec![200.0, 10.0, 200.0, 10.0, 100.0, 100.0, 100.0, 100.0, 10.0, 200.0, 10.0, 200.0],
    )?;
    let raw = preprocess_raw(&frames)?;
    let diff = preprocess_diff(&frames)?;
    for t in 0..3 {
        println!("t={t} raw {:>6.3?} diff {:>6.3?}", raw.row(t), diff.row(t));
    }
    // The first diff frame is all zeros: there is no previous frame.
    Ok(())
}
