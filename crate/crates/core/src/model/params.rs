use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::losses::{CosineClassifierHead, LinearHead};
use crate::numerics::{l2_normalize_backward, l2_normalize_rows, Matrix};

/// `y = W·x + b` with `W` stored `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    fn forward(&self, input: &Matrix) -> Result<Matrix> {
        let mut out = input.matmul_t(&self.weights)?;
        for i in 0..out.rows() {
            out.row_mut(i).iter_mut().zip(&self.bias).for_each(|(v, b)| *v += b);
        }
        Ok(out)
    }
}

/// Stack of affine layers with `tanh` between them (not after the last one).
#[derive(Debug, Clone, PartialEq)]
pub struct Backbone {
    pub layers: Vec<DenseLayer>,
}

/// Activations kept from [`forward_embed`] for the backward pass.
#[derive(Debug, Clone)]
pub struct EmbedCache {
    /// Input of every layer; entry `l > 0` is the `tanh` output of layer `l − 1`.
    inputs: Vec<Matrix>,
    /// Pre-normalization embeddings.
    pub raw: Matrix,
    /// Unit-norm embeddings.
    pub embeddings: Matrix,
    pub norms: Vec<f64>,
}

/// Per-layer `(∂W, ∂b)`.
pub type BackboneGrads = Vec<(Matrix, Vec<f64>)>;

impl Backbone {
    /// LeCun-normal weights, zero biases. `dims = [input, hidden.., output]`.
    pub fn init<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::Config(format!("invalid backbone dimensions {dims:?}")));
        }
        let layers = dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let dist = Normal::new(0.0, 1.0 / (fan_in as f64).sqrt()).expect("valid sd");
                let data = (0..fan_in * fan_out).map(|_| dist.sample(rng)).collect();
                DenseLayer {
                    weights: Matrix::new(fan_out, fan_in, data).expect("sized"),
                    bias: vec![0.0; fan_out],
                }
            })
            .collect();
        Ok(Self { layers })
    }

    /// A single identity layer.
    pub fn identity(dim: usize) -> Self {
        Self {
            layers: vec![DenseLayer {
                weights: Matrix::identity(dim),
                bias: vec![0.0; dim],
            }],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").weights.rows()
    }

    /// Chains `∂L/∂raw` back through the layers.
    pub fn backward(&self, cache: &EmbedCache, grad_raw: &Matrix) -> Result<BackboneGrads> {
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut grad_out = grad_raw.clone();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let input = &cache.inputs[l];
            let grad_w = grad_out.t_matmul(input)?;
            let mut grad_b = vec![0.0; layer.bias.len()];
            for row in grad_out.row_iter() {
                grad_b.iter_mut().zip(row).for_each(|(b, g)| *b += g);
            }
            grads.push((grad_w, grad_b));
            if l > 0 {
                let mut grad_in = grad_out.matmul(&layer.weights)?;
                // input is tanh(z): d tanh = 1 − tanh²
                for (g, &a) in grad_in.as_mut_slice().iter_mut().zip(input.as_slice()) {
                    *g *= 1.0 - a * a;
                }
                grad_out = grad_in;
            }
        }
        grads.reverse();
        Ok(grads)
    }

    /// Chains `∂L/∂f` for the unit-norm embeddings back through the
    /// normalization and the layers.
    pub fn backward_from_embeddings(&self, cache: &EmbedCache, grad_f: &Matrix) -> Result<BackboneGrads> {
        let grad_raw = l2_normalize_backward(grad_f, &cache.embeddings, &cache.norms)?;
        self.backward(cache, &grad_raw)
    }
}

/// Runs the backbone and L2-normalizes its output rows.
pub fn forward_embed(backbone: &Backbone, raw_features: &Matrix) -> Result<(Matrix, EmbedCache)> {
    if raw_features.cols() != backbone.input_dim() {
        return Err(Error::Shape(format!(
            "input dimension {} does not match backbone input {}",
            raw_features.cols(),
            backbone.input_dim()
        )));
    }
    let mut inputs = Vec::with_capacity(backbone.layers.len());
    let mut h = raw_features.clone();
    let last = backbone.layers.len() - 1;
    for (l, layer) in backbone.layers.iter().enumerate() {
        let mut z = layer.forward(&h)?;
        if l < last {
            z.as_mut_slice().iter_mut().for_each(|v| *v = v.tanh());
        }
        inputs.push(std::mem::replace(&mut h, z));
    }
    let (embeddings, norms) = l2_normalize_rows(&h)?;
    Ok((
        embeddings.clone(),
        EmbedCache {
            inputs,
            raw: h,
            embeddings,
            norms,
        },
    ))
}

/// All trainable parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub backbone: Backbone,
    /// Affine identity classifier on the raw embedding.
    pub id_head: LinearHead,
    /// Cosine clothes classifier on the normalized embedding.
    pub clothes_head: CosineClassifierHead,
}

impl ModelParams {
    pub fn init<R: Rng + ?Sized>(
        dims: &[usize],
        num_identities: usize,
        num_clothes: usize,
        temperature: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let backbone = Backbone::init(dims, rng)?;
        let d = backbone.output_dim();
        let small = Normal::new(0.0, 0.01).expect("valid sd");
        let id_w = (0..num_identities * d).map(|_| small.sample(rng)).collect();
        let unit = Normal::new(0.0, 1.0).expect("valid sd");
        let clothes_w = (0..num_clothes * d).map(|_| unit.sample(rng)).collect();
        Ok(Self {
            backbone,
            id_head: LinearHead::new(Matrix::new(num_identities, d, id_w)?, vec![0.0; num_identities])?,
            clothes_head: CosineClassifierHead::new(Matrix::new(num_clothes, d, clothes_w)?, temperature)?,
        })
    }

    pub fn is_finite(&self) -> bool {
        self.backbone
            .layers
            .iter()
            .all(|l| l.weights.is_finite() && l.bias.iter().all(|v| v.is_finite()))
            && self.id_head.weights.is_finite()
            && self.id_head.bias.iter().all(|v| v.is_finite())
            && self.clothes_head.weights.is_finite()
    }
}
