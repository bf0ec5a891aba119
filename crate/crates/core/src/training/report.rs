use serde::{Deserialize, Serialize};

use super::config::StopReason;
use crate::analysis::Cell;
use crate::analysis::Table;

/// JSON has no NaN or infinities; they travel as the strings `"nan"`,
/// `"inf"` and `"-inf"`.
pub(crate) mod lossy_f64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "nan" => Ok(f64::NAN),
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                other => Err(serde::de::Error::custom(format!("not a number: {other}"))),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based; 0 is the evaluation before any update.
    pub epoch: usize,
    pub lr: f64,
    /// Sample-weighted mean of batch losses; NaN for epoch 0.
    #[serde(with = "lossy_f64")]
    pub train_loss: f64,
    #[serde(with = "lossy_f64")]
    pub val_loss: f64,
}

/// One optimization phase (pretraining, distillation, fine-tuning, ...).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseReport {
    pub name: String,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    #[serde(with = "lossy_f64")]
    pub best_val_loss: f64,
    pub stop_reason: StopReason,
    pub wall_clock_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub regime: String,
    pub phases: Vec<PhaseReport>,
    /// Test-split NMSE of the resulting autoencoder, when one exists.
    pub final_nmse_db: Option<f64>,
}

impl TrainReport {
    pub fn new(regime: &str) -> Self {
        Self {
            regime: regime.into(),
            phases: Vec::new(),
            final_nmse_db: None,
        }
    }

    pub fn wall_clock_s(&self) -> f64 {
        self.phases.iter().map(|p| p.wall_clock_s).sum()
    }

    pub fn phase(&self, name: &str) -> Option<&PhaseReport> {
        self.phases.iter().find(|p| p.name == name)
    }

    /// Per-epoch losses of every phase; wall-clock is left out so the file is
    /// reproducible.
    pub fn epochs_table(&self) -> Table {
        let mut t = Table::new(
            "epochs",
            &format!("{} losses", self.regime),
            &["phase", "epoch", "lr", "train_loss", "val_loss"],
        );
        for p in &self.phases {
            for e in &p.epochs {
                t.push(vec![
                    Cell::Text(p.name.clone()),
                    Cell::Int(e.epoch as u64),
                    Cell::Float(e.lr),
                    Cell::Float(e.train_loss),
                    Cell::Float(e.val_loss),
                ]);
            }
        }
        t
    }

    /// Merges another report's phases after this one's.
    pub fn extend(&mut self, other: TrainReport) {
        self.phases.extend(other.phases);
    }
}
