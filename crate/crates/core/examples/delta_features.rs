//! Appends first and second temporal derivatives to a feature sequence.

use vsr::layers::DeltaWindow;
use vsr::Tensor;

fn main() -> vsr::Result<()> {
    let seq = Tensor::<f64>::from_vec(&[6, 1], vec![0.0, 1.0, 4.0, 9.0, 16.0, 25.0])?;
    let window = DeltaWindow::new(2)?;
    let feats = window.append_derivatives(&seq)?;
    println!("  t      c      Δ     ΔΔ");
    for t in 0..feats.rows() {
        let r = feats.row(t);
        println!("{t:>3} {:>6.2} {:>6.2} {:>6.2}", r[0], r[1], r[2]);
    }
    Ok(())
}
