/// Halves the learning rate once the monitored epoch loss has failed to
/// improve on the previous epoch `patience` times in a row.
#[derive(Clone, Debug)]
pub struct PlateauScheduler {
    patience: usize,
    previous: Option<f64>,
    stagnant: usize,
}

impl PlateauScheduler {
    pub fn new(patience: usize) -> Self {
        PlateauScheduler {
            patience,
            previous: None,
            stagnant: 0,
        }
    }

    /// Records one epoch loss; returns true when the learning rate should be
    /// halved now.
    pub fn observe(&mut self, loss: f64) -> bool {
        let improved = self.previous.is_none_or(|p| p - loss > 0.0);
        self.previous = Some(loss);
        if improved {
            self.stagnant = 0;
            return false;
        }
        self.stagnant += 1;
        if self.stagnant == self.patience {
            self.stagnant = 0;
            return true;
        }
        false
    }
}
