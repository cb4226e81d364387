//! Synthetic clothes-entangled benchmark.
//!
//! Each raw feature is `a·u(identity) + b·v(clothes) + σ·n`: `u` and `v` are
//! fixed random unit directions and `n` is fresh isotropic Gaussian noise with
//! unit total variance (`E‖n‖² = 1`). Identity directions live in one random
//! subspace and clothes directions in its orthogonal complement, so a model
//! *can* learn to discard clothes, but with `b > a` the clothes cue dominates
//! raw similarities and is the easy signal to latch onto.
//!
//! Train and test identities are disjoint. Every test clothes class is split
//! between query and gallery, so each test identity appears in both with all
//! of its outfits.

pub mod format;
pub mod hexfloat;

pub use format::{load_dataset, read_dataset, save_dataset, write_dataset};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::data::{ClothesRegistry, Dataset, Sample, Split};
use crate::error::{Error, Result};
use crate::model::parse;
use crate::numerics::{dot, norm};

#[derive(Debug, Clone, PartialEq)]
pub struct GenConfig {
    pub num_train_identities: usize,
    pub num_test_identities: usize,
    /// Inclusive range of outfits per identity.
    pub min_clothes: usize,
    pub max_clothes: usize,
    pub samples_per_clothes: usize,
    pub input_dim: usize,
    /// Dimension of the subspace holding identity directions; clothes
    /// directions use the remaining `input_dim − identity_dim`.
    pub identity_dim: usize,
    pub identity_scale: f64,
    pub clothes_scale: f64,
    pub noise_scale: f64,
    pub num_cameras: usize,
    /// Share of each test outfit's samples that go to the query split.
    pub query_fraction: f64,
    /// Refuse configurations where test identities cannot change clothes.
    pub require_clothes_changing: bool,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            num_train_identities: 75,
            num_test_identities: 151,
            min_clothes: 2,
            max_clothes: 5,
            samples_per_clothes: 8,
            input_dim: 64,
            identity_dim: 32,
            identity_scale: 1.0,
            clothes_scale: 3.0,
            noise_scale: 0.5,
            num_cameras: 4,
            query_fraction: 0.25,
            require_clothes_changing: true,
            seed: 0,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.num_train_identities + self.num_test_identities == 0 {
            return fail("no identities requested".into());
        }
        if self.min_clothes == 0 || self.min_clothes > self.max_clothes {
            return fail(format!(
                "clothes per identity range [{}, {}] is invalid",
                self.min_clothes, self.max_clothes
            ));
        }
        if self.require_clothes_changing && self.num_test_identities > 0 && self.min_clothes < 2 {
            return fail("clothes-changing evaluation needs at least 2 outfits per identity".into());
        }
        if self.samples_per_clothes == 0 {
            return fail("samples_per_clothes must be ≥ 1".into());
        }
        if self.num_test_identities > 0 && self.samples_per_clothes < 2 {
            return fail("test outfits need ≥ 2 samples to populate query and gallery".into());
        }
        if self.identity_dim == 0 || self.identity_dim >= self.input_dim {
            return fail(format!(
                "identity_dim must lie in [1, input_dim), got {} with input_dim {}",
                self.identity_dim, self.input_dim
            ));
        }
        if !(self.query_fraction > 0.0 && self.query_fraction < 1.0) {
            return fail(format!(
                "query_fraction must lie in (0, 1), got {}",
                self.query_fraction
            ));
        }
        if self.num_cameras == 0 {
            return fail("num_cameras must be ≥ 1".into());
        }
        for (name, v) in [
            ("identity_scale", self.identity_scale),
            ("clothes_scale", self.clothes_scale),
            ("noise_scale", self.noise_scale),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return fail(format!("{name} must be finite and ≥ 0, got {v}"));
            }
        }
        Ok(())
    }
}

impl GenConfig {
    /// Flat `key = value` entries, in a fixed order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("num_train_identities", self.num_train_identities.to_string()),
            ("num_test_identities", self.num_test_identities.to_string()),
            ("min_clothes", self.min_clothes.to_string()),
            ("max_clothes", self.max_clothes.to_string()),
            ("samples_per_clothes", self.samples_per_clothes.to_string()),
            ("input_dim", self.input_dim.to_string()),
            ("identity_dim", self.identity_dim.to_string()),
            ("identity_scale", self.identity_scale.to_string()),
            ("clothes_scale", self.clothes_scale.to_string()),
            ("noise_scale", self.noise_scale.to_string()),
            ("num_cameras", self.num_cameras.to_string()),
            ("query_fraction", self.query_fraction.to_string()),
            ("require_clothes_changing", self.require_clothes_changing.to_string()),
            ("data_seed", self.seed.to_string()),
        ]
    }

    /// Sets one entry by key. Returns `Ok(false)` for keys this config does
    /// not own.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "num_train_identities" => self.num_train_identities = parse(key, value)?,
            "num_test_identities" => self.num_test_identities = parse(key, value)?,
            "min_clothes" => self.min_clothes = parse(key, value)?,
            "max_clothes" => self.max_clothes = parse(key, value)?,
            "samples_per_clothes" => self.samples_per_clothes = parse(key, value)?,
            "input_dim" => self.input_dim = parse(key, value)?,
            "identity_dim" => self.identity_dim = parse(key, value)?,
            "identity_scale" => self.identity_scale = parse(key, value)?,
            "clothes_scale" => self.clothes_scale = parse(key, value)?,
            "noise_scale" => self.noise_scale = parse(key, value)?,
            "num_cameras" => self.num_cameras = parse(key, value)?,
            "query_fraction" => self.query_fraction = parse(key, value)?,
            "require_clothes_changing" => self.require_clothes_changing = parse(key, value)?,
            "data_seed" => self.seed = parse(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }
}

/// Random orthonormal basis (rows) of `R^dim` by Gram–Schmidt on Gaussian rows.
fn random_basis(rng: &mut ChaCha8Rng, dim: usize) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(dim);
    while basis.len() < dim {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        for b in &basis {
            let p = dot(&v, b);
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
        }
        let n = norm(&v);
        if n > 1e-8 {
            v.iter_mut().for_each(|x| *x /= n);
            basis.push(v);
        }
    }
    basis
}

/// Random unit vector in the span of `basis`.
fn random_direction(rng: &mut ChaCha8Rng, basis: &[Vec<f64>], dim: usize) -> Vec<f64> {
    loop {
        let coeffs: Vec<f64> = basis.iter().map(|_| rng.sample(StandardNormal)).collect();
        let n = norm(&coeffs);
        if n < 1e-12 {
            continue;
        }
        let mut v = vec![0.0; dim];
        for (c, b) in coeffs.iter().zip(basis) {
            v.iter_mut().zip(b).for_each(|(x, y)| *x += c / n * y);
        }
        return v;
    }
}

/// Generates a dataset and its clothes registry. Identities `0..train` are
/// training identities; clothes labels are assigned consecutively, so the
/// training clothes classes are exactly `0..N_C`.
pub fn generate(cfg: &GenConfig) -> Result<(Dataset, ClothesRegistry)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let dim = cfg.input_dim;
    let basis = random_basis(&mut rng, dim);
    let (id_basis, clothes_basis) = basis.split_at(cfg.identity_dim);
    let noise_sd = cfg.noise_scale / (dim as f64).sqrt();

    let mut samples = Vec::new();
    let mut next_clothes = 0u32;
    let total = cfg.num_train_identities + cfg.num_test_identities;
    for identity in 0..total {
        let is_train = identity < cfg.num_train_identities;
        let u = random_direction(&mut rng, id_basis, dim);
        let outfits = rng.random_range(cfg.min_clothes..=cfg.max_clothes);
        for _ in 0..outfits {
            let clothes = next_clothes;
            next_clothes += 1;
            let v = random_direction(&mut rng, clothes_basis, dim);
            let n_query = if is_train {
                0
            } else {
                ((cfg.samples_per_clothes as f64 * cfg.query_fraction).round() as usize)
                    .clamp(1, cfg.samples_per_clothes - 1)
            };
            for k in 0..cfg.samples_per_clothes {
                let feature: Vec<f64> = (0..dim)
                    .map(|j| {
                        let noise: f64 = rng.sample(StandardNormal);
                        cfg.identity_scale * u[j] + cfg.clothes_scale * v[j] + noise_sd * noise
                    })
                    .collect();
                let camera = rng.random_range(0..cfg.num_cameras) as u32;
                let split = match (is_train, k < n_query) {
                    (true, _) => Split::Train,
                    (false, true) => Split::Query,
                    (false, false) => Split::Gallery,
                };
                samples.push(Sample {
                    id: samples.len() as u64,
                    feature,
                    identity: identity as u32,
                    clothes,
                    camera,
                    split,
                });
            }
        }
    }
    let registry = ClothesRegistry::build(&samples)?;
    Ok((Dataset::new(dim, samples)?, registry))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> GenConfig {
        GenConfig {
            num_train_identities: 6,
            num_test_identities: 5,
            samples_per_clothes: 4,
            input_dim: 16,
            identity_dim: 8,
            seed: 3,
            ..GenConfig::default()
        }
    }

    #[test]
    fn default_mirrors_benchmark_scale() {
        let (d, reg) = generate(&GenConfig::default()).unwrap();
        assert_eq!(reg.num_identities(), 226);
        let train_ids: std::collections::BTreeSet<u32> = d.split(Split::Train).iter().map(|s| s.identity).collect();
        assert_eq!(train_ids.len(), 75);
        for id in reg.identities() {
            let k = reg.num_owned(id).unwrap();
            assert!((2..=5).contains(&k));
        }
        assert_eq!(ClothesRegistry::build(d.samples()).unwrap(), reg);
    }

    #[test]
    fn test_identities_change_clothes_across_splits() {
        let (d, reg) = generate(&small()).unwrap();
        for id in 6..11u32 {
            for split in [Split::Query, Split::Gallery] {
                let outfits: std::collections::BTreeSet<u32> = d
                    .samples()
                    .iter()
                    .filter(|s| s.identity == id && s.split == split)
                    .map(|s| s.clothes)
                    .collect();
                assert_eq!(outfits.len(), reg.num_owned(id).unwrap());
                assert!(outfits.len() >= 2);
            }
        }
    }

    #[test]
    fn train_clothes_are_dense() {
        let (d, _) = generate(&small()).unwrap();
        let train = ClothesRegistry::build(d.split(Split::Train)).unwrap();
        let n = train.num_clothes() as u32;
        assert!(train.clothes().eq(0..n));
    }

    #[test]
    fn deterministic() {
        assert_eq!(generate(&small()).unwrap(), generate(&small()).unwrap());
        let other = GenConfig { seed: 4, ..small() };
        assert_ne!(generate(&small()).unwrap().0, generate(&other).unwrap().0);
    }

    #[test]
    fn no_clothes_no_noise_collapses_identities() {
        let cfg = GenConfig {
            clothes_scale: 0.0,
            noise_scale: 0.0,
            ..small()
        };
        let (d, _) = generate(&cfg).unwrap();
        for a in d.samples() {
            for b in d.samples().iter().filter(|b| b.identity == a.identity) {
                assert_eq!(a.feature, b.feature);
            }
        }
    }

    #[test]
    fn infeasible_configs() {
        let single = GenConfig {
            min_clothes: 1,
            max_clothes: 1,
            ..small()
        };
        assert!(generate(&single).is_err());
        let relaxed = GenConfig {
            require_clothes_changing: false,
            ..single
        };
        assert!(generate(&relaxed).is_ok());
        assert!(generate(&GenConfig {
            identity_dim: 16,
            ..small()
        })
        .is_err());
        assert!(generate(&GenConfig {
            samples_per_clothes: 1,
            ..small()
        })
        .is_err());
        assert!(generate(&GenConfig {
            noise_scale: -1.0,
            ..small()
        })
        .is_err());
    }

    #[test]
    fn entries_round_trip() {
        let a = GenConfig {
            noise_scale: 0.1 + 0.2,
            require_clothes_changing: false,
            seed: 99,
            ..GenConfig::default()
        };
        let mut b = GenConfig::default();
        for (k, v) in a.entries() {
            assert!(b.set(k, &v).unwrap());
        }
        assert_eq!(a, b);
        assert!(!b.set("epochs", "1").unwrap());
    }
}
