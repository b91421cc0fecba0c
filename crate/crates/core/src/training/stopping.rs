use serde::{Deserialize, Serialize};

/// Outcome of observing one epoch's validation score.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

/// Early stopping on a score to maximise.
///
/// The best epoch is the earliest one with the highest score. Training
/// stops once more than `patience` epochs have passed since it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EarlyStopping {
    pub patience: usize,
    pub best_epoch: Option<usize>,
    pub best_score: f64,
    pub epoch: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping { patience, best_epoch: None, best_score: f64::NEG_INFINITY, epoch: 0 }
    }

    /// Records the score of the next epoch (epochs count from 1).
    pub fn observe(&mut self, score: f64) -> StopDecision {
        self.epoch += 1;
        if self.best_epoch.is_none() || score > self.best_score {
            self.best_epoch = Some(self.epoch);
            self.best_score = score;
            return StopDecision::Improved;
        }
        if self.epoch - self.best_epoch.expect("set above") > self.patience {
            StopDecision::Stop
        } else {
            StopDecision::Continue
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(trace: &[f64], patience: usize) -> (Option<usize>, Option<usize>) {
        let mut es = EarlyStopping::new(patience);
        for &s in trace {
            if es.observe(s) == StopDecision::Stop {
                return (Some(es.epoch), es.best_epoch);
            }
        }
        (None, es.best_epoch)
    }

    #[test]
    fn fixture_trace() {
        assert_eq!(run(&[0.50, 0.60, 0.60, 0.55, 0.58, 0.59, 0.57, 0.56], 5), (Some(8), Some(2)));
    }

    #[test]
    fn keeps_going_while_improving() {
        assert_eq!(run(&[0.1, 0.2, 0.3, 0.4], 1), (None, Some(4)));
        assert_eq!(run(&[0.5, 0.4, 0.4], 1), (Some(3), Some(1)));
        assert_eq!(run(&[0.5, 0.5], 0), (Some(2), Some(1)));
    }
}
