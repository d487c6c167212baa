use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Matrix, Tape, Tensor};
use crate::error::Result;

/// Inverted dropout. Disabled instances pass tensors through untouched.
pub struct Dropout {
    rate: f64,
    rng: Option<ChaCha8Rng>,
}

impl Dropout {
    pub fn disabled() -> Self {
        Self {
            rate: 0.0,
            rng: None,
        }
    }

    pub fn new(rate: f64, rng: ChaCha8Rng) -> Self {
        Self {
            rate,
            rng: Some(rng),
        }
    }

    pub fn is_active(&self) -> bool {
        self.rng.is_some() && self.rate > 0.0
    }

    pub fn apply(&mut self, tape: &mut Tape, x: Tensor) -> Result<Tensor> {
        let rate = self.rate;
        let Some(rng) = self.rng.as_mut().filter(|_| rate > 0.0) else {
            return Ok(x);
        };
        let (r, c) = tape.shape(x);
        let keep = 1.0 / (1.0 - rate);
        let mask = (0..r * c)
            .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
            .collect();
        let mask = tape.constant(Matrix::from_vec(r, c, mask)?)?;
        tape.mul(x, mask)
    }
}
