use serde::{Deserialize, Serialize};

/// Decision threshold on the predicted probability.
pub const THRESHOLD: f64 = 0.5;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn from_predictions(probs: &[f64], labels: &[u8]) -> Self {
        let mut c = Confusion::default();
        for (&p, &y) in probs.iter().zip(labels) {
            match (p >= THRESHOLD, y == 1) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

/// Classification scores. A ratio with a zero denominator is reported as 0
/// and its `*_defined` flag is cleared.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub precision_defined: bool,
    pub recall_defined: bool,
    pub f1_defined: bool,
    pub confusion: Confusion,
}

fn ratio(num: usize, den: usize) -> (f64, bool) {
    if den == 0 {
        (0.0, false)
    } else {
        (num as f64 / den as f64, true)
    }
}

impl Metrics {
    pub fn from_confusion(c: Confusion) -> Self {
        let (accuracy, _) = ratio(c.tp + c.tn, c.total());
        let (precision, precision_defined) = ratio(c.tp, c.tp + c.fp);
        let (recall, recall_defined) = ratio(c.tp, c.tp + c.fn_);
        let f1_defined = precision_defined && recall_defined && precision + recall > 0.0;
        let f1 = if f1_defined {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self {
            accuracy,
            precision,
            recall,
            f1,
            precision_defined,
            recall_defined,
            f1_defined,
            confusion: c,
        }
    }

    pub fn values(&self) -> [(&'static str, f64); 4] {
        [
            ("accuracy", self.accuracy),
            ("precision", self.precision),
            ("recall", self.recall),
            ("f1", self.f1),
        ]
    }
}

/// Mean and sample standard deviation of each metric across runs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub runs: usize,
    pub mean: [f64; 4],
    pub std: [f64; 4],
}

impl MetricSummary {
    pub const NAMES: [&'static str; 4] = ["accuracy", "precision", "recall", "f1"];

    pub fn from_runs(runs: &[Metrics]) -> Self {
        let n = runs.len();
        let mut mean = [0.0; 4];
        let mut std = [0.0; 4];
        if n == 0 {
            return Self { runs: 0, mean, std };
        }
        for k in 0..4 {
            let xs: Vec<f64> = runs.iter().map(|m| m.values()[k].1).collect();
            let mu = xs.iter().sum::<f64>() / n as f64;
            mean[k] = mu;
            if n > 1 {
                let var = xs.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (n - 1) as f64;
                std[k] = var.sqrt();
            }
        }
        Self { runs: n, mean, std }
    }

    pub fn mean_of(&self, name: &str) -> Option<f64> {
        Self::NAMES
            .iter()
            .position(|n| *n == name)
            .map(|k| self.mean[k])
    }

    pub fn std_of(&self, name: &str) -> Option<f64> {
        Self::NAMES
            .iter()
            .position(|n| *n == name)
            .map(|k| self.std[k])
    }
}
