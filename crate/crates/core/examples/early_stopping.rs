//! Patience-based early stopping on a fixed validation trace.

use vsr::training::{EarlyStopping, StopDecision};

fn main() {
    let trace = [0.50, 0.60, 0.60, 0.55, 0.58, 0.59, 0.57, 0.56, 0.70];
    let mut stopper = EarlyStopping::new(5);
    for (i, &acc) in trace.iter().enumerate() {
        let decision = stopper.observe(acc);
        println!("epoch {}: validation {:.2} -> {decision:?}", i + 1, acc);
        if decision == StopDecision::Stop {
            break;
        }
    }
    println!("restore epoch {:?} ({:.2})", stopper.best_epoch, stopper.best_score);
}
