//! The two-step adversarial training loop and the ablation variants.
//!
//! Every CAL iteration first updates the clothes classifier on `L_C` with the
//! backbone frozen, then updates the backbone and identity head on
//! `L_ID + λ·L_CA` with the clothes classifier frozen.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::adam::Adam;
use super::config::{TrainingConfig, Variant};
use super::params::{forward_embed, Backbone, BackboneGrads, EmbedCache, ModelParams};
use crate::data::{Batch, ClothesRegistry, Dataset, PkSampler, Sample, Split};
use crate::error::{Error, Result};
use crate::losses::{cal_loss, clothes_ce_loss, label_smoothing_ce, negative_ce_loss, triplet_loss_batch_hard};
use crate::numerics::Matrix;

/// Training split with identities and clothes relabelled densely
/// (`0..num_identities`, `0..num_clothes`) so they index classifier rows.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub features: Matrix,
    pub identities: Vec<u32>,
    pub clothes: Vec<usize>,
    pub registry: ClothesRegistry,
    /// Original identity label of each dense identity index.
    pub identity_labels: Vec<u32>,
    /// Original clothes label of each dense clothes index.
    pub clothes_labels: Vec<u32>,
}

impl TrainingSet {
    pub fn from_dataset(dataset: &Dataset) -> Result<Self> {
        Self::from_samples(&dataset.split(Split::Train), dataset.dim())
    }

    pub fn from_samples(samples: &[&Sample], dim: usize) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Degenerate("training split is empty".into()));
        }
        let original = ClothesRegistry::build(samples.iter().copied())?;
        if original.num_identities() < 2 {
            return Err(Error::Degenerate("training split needs at least 2 identities".into()));
        }
        let identity_labels: Vec<u32> = original.identities().collect();
        let clothes_labels: Vec<u32> = original.clothes().collect();
        let dense = |labels: &[u32], v: u32| labels.binary_search(&v).expect("registered") as u32;
        let identities: Vec<u32> = samples.iter().map(|s| dense(&identity_labels, s.identity)).collect();
        let clothes: Vec<usize> = samples
            .iter()
            .map(|s| dense(&clothes_labels, s.clothes) as usize)
            .collect();
        let registry = ClothesRegistry::from_pairs(identities.iter().zip(&clothes).map(|(&i, &c)| (i, c as u32)))?;
        Ok(Self {
            features: Dataset::feature_matrix(samples, dim),
            identities,
            clothes,
            registry,
            identity_labels,
            clothes_labels,
        })
    }

    pub fn len(&self) -> usize {
        self.identities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.identities.is_empty()
    }

    pub fn num_identities(&self) -> usize {
        self.identity_labels.len()
    }

    pub fn num_clothes(&self) -> usize {
        self.clothes_labels.len()
    }
}

/// What the backbone minimizes besides the identification loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackboneObjective {
    IdentityOnly,
    Cal,
    NegativeCe,
    /// Plain clothes CE through the backbone (no adversary).
    ClothesCe,
    Triplet,
}

/// Loss values of one backbone step. `aux` is the unweighted auxiliary loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLosses {
    pub identity: f64,
    pub aux: Option<f64>,
}

/// Gradients of one backbone step.
#[derive(Debug, Clone, PartialEq)]
pub struct BackboneStepGrads {
    pub backbone: BackboneGrads,
    pub id_weights: Matrix,
    pub id_bias: Vec<f64>,
    /// Only for [`BackboneObjective::ClothesCe`], where the clothes classifier
    /// is trained jointly.
    pub clothes_weights: Option<Matrix>,
}

/// Parameters plus optimizer and sampler state.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub params: ModelParams,
    /// Adam over backbone and identity head.
    pub backbone_opt: Adam,
    /// Adam over the clothes classifier.
    pub clothes_opt: Adam,
    pub sampler: PkSampler,
    pub epoch: usize,
    pub iteration: u64,
}

fn backbone_sizes(params: &ModelParams) -> Vec<usize> {
    let mut sizes: Vec<usize> = params
        .backbone
        .layers
        .iter()
        .flat_map(|l| [l.weights.as_slice().len(), l.bias.len()])
        .collect();
    sizes.push(params.id_head.weights.as_slice().len());
    sizes.push(params.id_head.bias.len());
    sizes
}

impl TrainState {
    pub fn init(cfg: &TrainingConfig, set: &TrainingSet) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut dims = vec![set.features.cols()];
        if cfg.hidden_dim > 0 {
            dims.push(cfg.hidden_dim);
        }
        dims.push(cfg.embedding_dim);
        let params = ModelParams::init(
            &dims,
            set.num_identities(),
            set.num_clothes(),
            cfg.temperature,
            &mut rng,
        )?;
        Ok(Self {
            backbone_opt: Adam::new(&backbone_sizes(&params)),
            clothes_opt: Adam::new(&[params.clothes_head.weights.as_slice().len()]),
            sampler: PkSampler::new(&set.identities, cfg.seed.wrapping_add(0x9e37_79b9_7f4a_7c15)),
            params,
            epoch: 0,
            iteration: 0,
        })
    }
}

fn batch_features(set: &TrainingSet, batch: &Batch) -> Matrix {
    set.features.select_rows(&batch.indices)
}

fn clothes_step_with(
    state: &mut TrainState,
    cache: &EmbedCache,
    clothes: &[usize],
    lr: f64,
    cfg: &TrainingConfig,
) -> Result<f64> {
    let out = clothes_ce_loss(&cache.raw, clothes, &state.params.clothes_head, cfg.reduction)?;
    let grad = out.grad_weights.expect("clothes CE trains the classifier");
    state.clothes_opt.update(
        lr,
        &mut [state.params.clothes_head.weights.as_mut_slice()],
        &[grad.as_slice()],
    )?;
    Ok(out.value)
}

/// First step: one Adam update of the clothes classifier on `L_C`; the
/// backbone and identity head are left untouched.
pub fn step_clothes_classifier(
    state: &mut TrainState,
    set: &TrainingSet,
    batch: &Batch,
    cfg: &TrainingConfig,
    lr: f64,
) -> Result<f64> {
    let (_, cache) = forward_embed(&state.params.backbone, &batch_features(set, batch))?;
    let clothes: Vec<usize> = batch.indices.iter().map(|&i| set.clothes[i]).collect();
    clothes_step_with(state, &cache, &clothes, lr, cfg)
}

fn gradients_with(
    params: &ModelParams,
    set: &TrainingSet,
    batch: &Batch,
    cache: &EmbedCache,
    objective: BackboneObjective,
    cfg: &TrainingConfig,
) -> Result<(BackboneStepGrads, StepLosses)> {
    let ids: Vec<u32> = batch.indices.iter().map(|&i| set.identities[i]).collect();
    let id_idx: Vec<usize> = ids.iter().map(|&i| i as usize).collect();
    let clothes: Vec<usize> = batch.indices.iter().map(|&i| set.clothes[i]).collect();

    let id = label_smoothing_ce(&cache.raw, &id_idx, &params.id_head, cfg.label_smoothing, cfg.reduction)?;
    let mut grad_raw = id.grad_features;
    let head = &params.clothes_head;
    let aux = match objective {
        BackboneObjective::IdentityOnly => None,
        BackboneObjective::Cal => Some(cal_loss(
            &cache.raw,
            &ids,
            &clothes,
            head,
            &set.registry,
            &cfg.cal_weights()?,
            cfg.reduction,
        )?),
        BackboneObjective::NegativeCe => Some(negative_ce_loss(&cache.raw, &clothes, head, cfg.reduction)?),
        BackboneObjective::ClothesCe => Some(clothes_ce_loss(&cache.raw, &clothes, head, cfg.reduction)?),
        BackboneObjective::Triplet => Some(triplet_loss_batch_hard(
            &cache.raw,
            &ids,
            cfg.triplet_margin,
            cfg.reduction,
        )?),
    };
    let mut clothes_weights = None;
    let aux_value = match aux {
        Some(out) => {
            grad_raw.add_scaled(&out.grad_features, cfg.lambda_ca)?;
            if objective == BackboneObjective::ClothesCe {
                clothes_weights = out.grad_weights.map(|g| g.scaled(cfg.lambda_ca));
            }
            Some(out.value)
        }
        None => None,
    };
    let backbone = params.backbone.backward(cache, &grad_raw)?;
    Ok((
        BackboneStepGrads {
            backbone,
            id_weights: id.grad_weights.expect("identity head is trainable"),
            id_bias: id.grad_bias.expect("identity head is trainable"),
            clothes_weights,
        },
        StepLosses {
            identity: id.value,
            aux: aux_value,
        },
    ))
}

/// Gradients of `L_ID + λ·aux` for the backbone and identity head.
pub fn backbone_gradients(
    params: &ModelParams,
    set: &TrainingSet,
    batch: &Batch,
    objective: BackboneObjective,
    cfg: &TrainingConfig,
) -> Result<(BackboneStepGrads, StepLosses)> {
    let (_, cache) = forward_embed(&params.backbone, &batch_features(set, batch))?;
    gradients_with(params, set, batch, &cache, objective, cfg)
}

fn apply_backbone(state: &mut TrainState, grads: &BackboneStepGrads, lr: f64) -> Result<()> {
    let p = &mut state.params;
    let mut params: Vec<&mut [f64]> = Vec::new();
    for l in &mut p.backbone.layers {
        params.push(l.weights.as_mut_slice());
        params.push(&mut l.bias);
    }
    params.push(p.id_head.weights.as_mut_slice());
    params.push(&mut p.id_head.bias);
    let mut g: Vec<&[f64]> = Vec::new();
    for (w, b) in &grads.backbone {
        g.push(w.as_slice());
        g.push(b);
    }
    g.push(grads.id_weights.as_slice());
    g.push(&grads.id_bias);
    state.backbone_opt.update(lr, &mut params, &g)
}

/// Second step: one Adam update of backbone and identity head; the clothes
/// classifier acts as a frozen adversary (except for `ClothesCe`, where it is
/// updated jointly from the same loss).
pub fn step_backbone(
    state: &mut TrainState,
    set: &TrainingSet,
    batch: &Batch,
    objective: BackboneObjective,
    cfg: &TrainingConfig,
    lr: f64,
) -> Result<StepLosses> {
    let (grads, losses) = backbone_gradients(&state.params, set, batch, objective, cfg)?;
    apply_backbone(state, &grads, lr)?;
    if let Some(gw) = &grads.clothes_weights {
        state.clothes_opt.update(
            lr,
            &mut [state.params.clothes_head.weights.as_mut_slice()],
            &[gw.as_slice()],
        )?;
    }
    Ok(losses)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub lr: f64,
    pub identity_loss: f64,
    /// Clothes classifier loss from the first step.
    pub clothes_loss: Option<f64>,
    /// Auxiliary backbone loss (CAL for the `cal` variant).
    pub aux_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainLog {
    pub epochs: Vec<EpochMetrics>,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.9}")).unwrap_or_default();
        let mut out = String::from("epoch,lr,l_id,l_c,l_aux\n");
        for m in &self.epochs {
            writeln!(
                out,
                "{},{},{:.9},{},{}",
                m.epoch,
                m.lr,
                m.identity_loss,
                opt(m.clothes_loss),
                opt(m.aux_loss)
            )
            .unwrap();
        }
        out
    }
}

#[derive(Default)]
struct Running {
    n: usize,
    id: f64,
    clothes: Option<f64>,
    aux: Option<f64>,
}

impl Running {
    fn push(&mut self, losses: StepLosses, clothes: Option<f64>) {
        self.n += 1;
        self.id += losses.identity;
        if let Some(c) = clothes {
            *self.clothes.get_or_insert(0.0) += c;
        }
        if let Some(a) = losses.aux {
            *self.aux.get_or_insert(0.0) += a;
        }
    }

    fn finish(self, epoch: usize, lr: f64) -> EpochMetrics {
        let n = self.n.max(1) as f64;
        EpochMetrics {
            epoch,
            lr,
            identity_loss: self.id / n,
            clothes_loss: self.clothes.map(|v| v / n),
            aux_loss: self.aux.map(|v| v / n),
        }
    }
}

fn objective_for(variant: Variant, epoch: usize, cfg: &TrainingConfig) -> BackboneObjective {
    let active = epoch >= cfg.cal_start_epoch;
    match variant {
        Variant::Baseline => BackboneObjective::IdentityOnly,
        Variant::Triplet => BackboneObjective::Triplet,
        Variant::WithClothesClassifier => BackboneObjective::ClothesCe,
        _ if !active => BackboneObjective::IdentityOnly,
        Variant::Cal => BackboneObjective::Cal,
        Variant::CalNegative => BackboneObjective::NegativeCe,
    }
}

/// Trains one variant from scratch. Deterministic given the config seed.
pub fn train_variant(cfg: &TrainingConfig, dataset: &Dataset, variant: Variant) -> Result<(ModelParams, TrainLog)> {
    let set = TrainingSet::from_dataset(dataset)?;
    let (state, log) = train_on(cfg, &set, variant)?;
    Ok((state.params, log))
}

/// Full two-step CAL training.
pub fn train(cfg: &TrainingConfig, dataset: &Dataset) -> Result<(ModelParams, TrainLog)> {
    train_variant(cfg, dataset, Variant::Cal)
}

/// Training loop over a prepared training set, returning the final state.
pub fn train_on(cfg: &TrainingConfig, set: &TrainingSet, variant: Variant) -> Result<(TrainState, TrainLog)> {
    let mut state = TrainState::init(cfg, set)?;
    let p = cfg.identities_per_batch;
    if set.num_identities() < p {
        return Err(Error::Degenerate(format!(
            "{} training identities, batch needs {p}",
            set.num_identities()
        )));
    }
    let per_batch = p * cfg.instances_per_identity;
    let iterations = match cfg.iterations_per_epoch {
        0 => (set.len() / per_batch).max(1),
        n => n,
    };

    let mut log = TrainLog::default();
    for epoch in 0..cfg.epochs {
        state.epoch = epoch;
        let lr = cfg.lr_at(epoch);
        let objective = objective_for(variant, epoch, cfg);
        let train_classifier = variant.uses_clothes_classifier()
            && objective != BackboneObjective::ClothesCe
            && (cfg.update_clothes_classifier || epoch < cfg.cal_start_epoch);
        let mut running = Running::default();
        let diverged = |e: Error| match e {
            Error::NonFinite(what) => Error::Diverged { epoch, what },
            e => e,
        };
        for _ in 0..iterations {
            let batch = state.sampler.next_batch(p, cfg.instances_per_identity)?;
            let (_, cache) = forward_embed(&state.params.backbone, &batch_features(set, &batch)).map_err(diverged)?;
            let clothes_loss = if train_classifier {
                let clothes: Vec<usize> = batch.indices.iter().map(|&i| set.clothes[i]).collect();
                Some(clothes_step_with(&mut state, &cache, &clothes, lr, cfg).map_err(diverged)?)
            } else {
                None
            };
            // the clothes step leaves the backbone untouched, so the cache is still valid
            let (grads, losses) =
                gradients_with(&state.params, set, &batch, &cache, objective, cfg).map_err(diverged)?;
            apply_backbone(&mut state, &grads, lr)?;
            let clothes_loss = match &grads.clothes_weights {
                Some(gw) => {
                    state.clothes_opt.update(
                        lr,
                        &mut [state.params.clothes_head.weights.as_mut_slice()],
                        &[gw.as_slice()],
                    )?;
                    losses.aux
                }
                None => clothes_loss,
            };
            state.iteration += 1;
            let values = [Some(losses.identity), clothes_loss, losses.aux];
            if values.iter().flatten().any(|v| !v.is_finite()) || !state.params.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    what: format!("iteration {}, losses (id, clothes, aux) = {values:?}", state.iteration),
                });
            }
            running.push(losses, clothes_loss);
        }
        log.epochs.push(running.finish(epoch, lr));
    }
    Ok((state, log))
}

/// Unit-norm embeddings of `features` (one row per sample).
pub fn embed(backbone: &Backbone, features: &Matrix) -> Result<Matrix> {
    Ok(forward_embed(backbone, features)?.0)
}
