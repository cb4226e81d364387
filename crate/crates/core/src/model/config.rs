use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::losses::{CalWeights, Reduction};

/// The training recipes compared in the ablation grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Identification loss only.
    Baseline,
    /// Identification loss plus clothes classification through the backbone,
    /// trained jointly with the clothes classifier.
    WithClothesClassifier,
    /// Two-step adversarial training with CAL.
    Cal,
    /// Two-step adversarial training with the negated clothes CE instead of CAL.
    CalNegative,
    /// Identification loss plus batch-hard triplet.
    Triplet,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Baseline,
        Variant::WithClothesClassifier,
        Variant::Cal,
        Variant::CalNegative,
        Variant::Triplet,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::WithClothesClassifier => "with_clothes_classifier",
            Variant::Cal => "cal",
            Variant::CalNegative => "cal_negative",
            Variant::Triplet => "triplet",
        }
    }

    /// Whether the clothes classifier is trained in this variant.
    pub fn uses_clothes_classifier(self) -> bool {
        !matches!(self, Variant::Baseline | Variant::Triplet)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown variant `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig {
    pub epochs: usize,
    /// First epoch (0-based) whose backbone step includes the auxiliary
    /// adversarial clothes loss (CAL or its negative-CE ablation). The joint
    /// clothes-classifier ablation uses its clothes loss from the start.
    pub cal_start_epoch: usize,
    pub lr: f64,
    /// Epochs at which the learning rate is divided by `lr_decay_factor`.
    pub lr_decay_epochs: Vec<usize>,
    pub lr_decay_factor: f64,
    pub temperature: f64,
    pub epsilon: f64,
    pub lambda_ca: f64,
    pub identities_per_batch: usize,
    pub instances_per_identity: usize,
    /// Optimizer steps per epoch; 0 means one pass over the training split.
    pub iterations_per_epoch: usize,
    pub seed: u64,
    pub reduction: Reduction,
    pub embedding_dim: usize,
    /// Width of the hidden `tanh` layer; 0 for a single affine layer.
    pub hidden_dim: usize,
    pub triplet_margin: f64,
    pub label_smoothing: f64,
    /// Keep updating the clothes classifier after CAL activates.
    pub update_clothes_classifier: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            epochs: 60,
            cal_start_epoch: 25,
            lr: 0.03,
            lr_decay_epochs: vec![20, 40],
            lr_decay_factor: 10.0,
            temperature: 1.0 / 16.0,
            epsilon: 0.1,
            lambda_ca: 1.0,
            identities_per_batch: 8,
            instances_per_identity: 8,
            iterations_per_epoch: 0,
            seed: 0,
            reduction: Reduction::Mean,
            embedding_dim: 64,
            hidden_dim: 0,
            triplet_margin: 0.3,
            label_smoothing: 0.0,
            update_clothes_classifier: true,
        }
    }
}

pub(crate) fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("invalid value `{value}` for `{key}`")))
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.epochs == 0 {
            return fail("epochs must be ≥ 1".into());
        }
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            return fail(format!("learning rate must be finite and ≥ 0, got {}", self.lr));
        }
        if self.lr_decay_epochs.windows(2).any(|w| w[0] >= w[1]) {
            return fail(format!(
                "decay epochs {:?} must be strictly increasing",
                self.lr_decay_epochs
            ));
        }
        if !(self.lr_decay_factor > 0.0) {
            return fail(format!("lr_decay_factor must be > 0, got {}", self.lr_decay_factor));
        }
        if !(self.temperature > 0.0) {
            return fail(format!("temperature must be > 0, got {}", self.temperature));
        }
        CalWeights::epsilon(self.epsilon)?;
        if !(self.lambda_ca >= 0.0) {
            return fail(format!("lambda_ca must be ≥ 0, got {}", self.lambda_ca));
        }
        if self.identities_per_batch == 0 || self.instances_per_identity == 0 {
            return fail("batch needs P, Q ≥ 1".into());
        }
        if self.embedding_dim == 0 {
            return fail("embedding_dim must be ≥ 1".into());
        }
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return fail(format!(
                "label_smoothing must lie in [0, 1), got {}",
                self.label_smoothing
            ));
        }
        Ok(())
    }

    /// Learning rate in effect during `epoch`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let decays = self.lr_decay_epochs.iter().filter(|&&e| e <= epoch).count();
        self.lr / self.lr_decay_factor.powi(decays as i32)
    }

    pub fn cal_weights(&self) -> Result<CalWeights> {
        CalWeights::epsilon(self.epsilon)
    }

    /// Flat `key = value` entries, in a fixed order. Floats use the shortest
    /// text that parses back to the same value.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let decay = self
            .lr_decay_epochs
            .iter()
            .map(|e| e.to_string())
            .collect::<Vec<_>>()
            .join(",");
        vec![
            ("epochs", self.epochs.to_string()),
            ("cal_start_epoch", self.cal_start_epoch.to_string()),
            ("lr", self.lr.to_string()),
            ("lr_decay_epochs", decay),
            ("lr_decay_factor", self.lr_decay_factor.to_string()),
            ("temperature", self.temperature.to_string()),
            ("epsilon", self.epsilon.to_string()),
            ("lambda_ca", self.lambda_ca.to_string()),
            ("identities_per_batch", self.identities_per_batch.to_string()),
            ("instances_per_identity", self.instances_per_identity.to_string()),
            ("iterations_per_epoch", self.iterations_per_epoch.to_string()),
            ("train_seed", self.seed.to_string()),
            ("reduction", self.reduction.to_string()),
            ("embedding_dim", self.embedding_dim.to_string()),
            ("hidden_dim", self.hidden_dim.to_string()),
            ("triplet_margin", self.triplet_margin.to_string()),
            ("label_smoothing", self.label_smoothing.to_string()),
            ("update_clothes_classifier", self.update_clothes_classifier.to_string()),
        ]
    }

    /// Sets one entry by key. Returns `Ok(false)` for keys this config does
    /// not own.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "epochs" => self.epochs = parse(key, value)?,
            "cal_start_epoch" => self.cal_start_epoch = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "lr_decay_epochs" => {
                self.lr_decay_epochs = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| parse(key, s))
                    .collect::<Result<_>>()?
            }
            "lr_decay_factor" => self.lr_decay_factor = parse(key, value)?,
            "temperature" => self.temperature = parse(key, value)?,
            "epsilon" => self.epsilon = parse(key, value)?,
            "lambda_ca" => self.lambda_ca = parse(key, value)?,
            "identities_per_batch" => self.identities_per_batch = parse(key, value)?,
            "instances_per_identity" => self.instances_per_identity = parse(key, value)?,
            "iterations_per_epoch" => self.iterations_per_epoch = parse(key, value)?,
            "train_seed" => self.seed = parse(key, value)?,
            "reduction" => self.reduction = parse(key, value)?,
            "embedding_dim" => self.embedding_dim = parse(key, value)?,
            "hidden_dim" => self.hidden_dim = parse(key, value)?,
            "triplet_margin" => self.triplet_margin = parse(key, value)?,
            "label_smoothing" => self.label_smoothing = parse(key, value)?,
            "update_clothes_classifier" => self.update_clothes_classifier = parse(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_shape() {
        let c = TrainingConfig::default();
        assert_eq!(c.epochs, 60);
        assert_eq!(c.lr_at(0), c.lr);
        assert_eq!(c.lr_at(19), c.lr);
        assert_eq!(c.lr_at(20), c.lr / 10.0);
        assert_eq!(c.lr_at(39), c.lr / 10.0);
        assert_eq!(c.lr_at(40), c.lr / 100.0);
        assert_eq!(c.lr_at(59), c.lr / 100.0);
        assert!(c.cal_start_epoch > c.lr_decay_epochs[0]);
        assert_eq!(c.temperature, 0.0625);
        assert_eq!(c.identities_per_batch * c.instances_per_identity, 64);
    }

    #[test]
    fn entries_round_trip() {
        let mut a = TrainingConfig {
            lr: 1.0 / 3.0,
            lr_decay_epochs: vec![3, 7, 11],
            reduction: Reduction::Sum,
            ..TrainingConfig::default()
        };
        a.epsilon = 0.3;
        let mut b = TrainingConfig::default();
        for (k, v) in a.entries() {
            assert!(b.set(k, &v).unwrap());
        }
        assert_eq!(a, b);
        assert!(!b.set("nope", "1").unwrap());
        assert!(b.set("epochs", "x").is_err());
    }

    #[test]
    fn validation() {
        assert!(TrainingConfig::default().validate().is_ok());
        let bad = [
            TrainingConfig {
                epochs: 0,
                ..Default::default()
            },
            TrainingConfig {
                lr_decay_epochs: vec![5, 5],
                ..Default::default()
            },
            TrainingConfig {
                temperature: 0.0,
                ..Default::default()
            },
            TrainingConfig {
                epsilon: 1.2,
                ..Default::default()
            },
            TrainingConfig {
                identities_per_batch: 0,
                ..Default::default()
            },
        ];
        for c in bad {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }

    #[test]
    fn variant_names() {
        for v in Variant::ALL {
            assert_eq!(v.as_str().parse::<Variant>().unwrap(), v);
        }
    }
}
