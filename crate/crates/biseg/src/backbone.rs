//! Per-point encoder, two parallel decoders, attention composition, and the
//! task heads.
//!
//! The encoder is a per-point MLP whose last layer is max-pooled over all
//! points; the pooled context is broadcast back and concatenated, giving
//! every point a view of the whole block. Two decoders then produce the
//! semantic feature matrix `S` and the instance feature matrix `I`, the
//! attention module exchanges information between them, and two small FC
//! heads emit class logits and the instance embedding.
//!
//! Forward passes canonicalize point order internally (see the attention
//! module), so outputs are bit-exactly permutation-equivariant.

use crate::attention::{
    bi_directional_on_tape, BiDirConfig, BiDirWeights, BoundBiDir, SimilarityMatrix,
};
use crate::error::{Error, Result};
use crate::tensor::{
    canonical_row_order, invert_permutation, BoundLinear, LinearMap, Matrix, NodeId, Tape,
};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

/// Width configuration of the whole network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BackboneConfig {
    /// Per-point input feature width (coordinate channels, plus color when present).
    pub input_dim: usize,
    /// Encoder layer widths.
    pub hidden: Vec<usize>,
    /// Semantic feature width `N_S`.
    pub n_s: usize,
    /// Instance feature width `N_I`.
    pub n_i: usize,
    /// Instance embedding width `N_E`.
    pub n_e: usize,
    /// Category count `N_C`.
    pub n_c: usize,
    /// theta/phi inner-product width.
    pub d_k: usize,
    /// Hidden width of the two output heads.
    pub head_hidden: usize,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        BackboneConfig {
            input_dim: 6,
            hidden: vec![64, 64, 128],
            n_s: 128,
            n_i: 128,
            n_e: 5,
            n_c: 2,
            d_k: 64,
            head_hidden: 64,
        }
    }
}

impl BackboneConfig {
    pub fn validate(&self) -> Result<()> {
        let widths = [
            self.input_dim,
            self.n_s,
            self.n_i,
            self.n_e,
            self.d_k,
            self.head_hidden,
        ];
        if widths.iter().any(|&w| w == 0) || self.hidden.iter().any(|&w| w == 0) {
            return Err(Error::Config {
                detail: "all widths must be >= 1".into(),
            });
        }
        if self.hidden.is_empty() {
            return Err(Error::Config {
                detail: "encoder needs at least one hidden layer".into(),
            });
        }
        if self.n_c < 2 {
            return Err(Error::Config {
                detail: format!("need at least 2 classes, got {}", self.n_c),
            });
        }
        Ok(())
    }
}

/// Full segmentation network: all parameters plus its own configuration.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SegModel {
    pub cfg: BackboneConfig,
    pub bidir: BiDirConfig,
    encoder: Vec<LinearMap>,
    sem_decoder: Vec<LinearMap>,
    inst_decoder: Vec<LinearMap>,
    attention: BiDirWeights,
    sem_head: Vec<LinearMap>,
    inst_head: Vec<LinearMap>,
}

impl SegModel {
    pub fn new(cfg: BackboneConfig, bidir: BiDirConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha20Rng::seed_from_u64(seed);

        let mut encoder = Vec::new();
        let mut prev = cfg.input_dim;
        for &width in &cfg.hidden {
            encoder.push(LinearMap::init(prev, width, &mut rng));
            prev = width;
        }
        // pooled context doubles the decoder input width
        let enc_out = 2 * prev;
        let dec_hidden = *cfg.hidden.last().expect("validated non-empty");
        let sem_decoder = vec![
            LinearMap::init(enc_out, dec_hidden, &mut rng),
            LinearMap::init(dec_hidden, cfg.n_s, &mut rng),
        ];
        let inst_decoder = vec![
            LinearMap::init(enc_out, dec_hidden, &mut rng),
            LinearMap::init(dec_hidden, cfg.n_i, &mut rng),
        ];
        let attention = BiDirWeights::init(&bidir, cfg.n_s, cfg.n_i, cfg.d_k, &mut rng);

        let sem_width = cfg.n_s * if bidir.mode.widens_semantic() { 2 } else { 1 };
        let inst_width = cfg.n_i * if bidir.mode.widens_instance() { 2 } else { 1 };
        let sem_head = vec![
            LinearMap::init(sem_width, cfg.head_hidden, &mut rng),
            LinearMap::init(cfg.head_hidden, cfg.n_c, &mut rng),
        ];
        let inst_head = vec![
            LinearMap::init(inst_width, cfg.head_hidden, &mut rng),
            LinearMap::init(cfg.head_hidden, cfg.n_e, &mut rng),
        ];

        Ok(SegModel {
            cfg,
            bidir,
            encoder,
            sem_decoder,
            inst_decoder,
            attention,
            sem_head,
            inst_head,
        })
    }

    /// Every parameter map with a stable name, in a fixed enumeration order.
    pub fn named_params(&self) -> Vec<(String, &LinearMap)> {
        let mut out = Vec::new();
        for (i, l) in self.encoder.iter().enumerate() {
            out.push((format!("encoder.{i}"), l));
        }
        for (i, l) in self.sem_decoder.iter().enumerate() {
            out.push((format!("sem_decoder.{i}"), l));
        }
        for (i, l) in self.inst_decoder.iter().enumerate() {
            out.push((format!("inst_decoder.{i}"), l));
        }
        for (dir, w) in [
            ("stoi", &self.attention.stoi),
            ("itos", &self.attention.itos),
            ("sem_self", &self.attention.sem_self),
            ("inst_self", &self.attention.inst_self),
        ] {
            if let Some(w) = w {
                out.push((format!("{dir}.theta"), &w.theta));
                out.push((format!("{dir}.phi"), &w.phi));
                out.push((format!("{dir}.g"), &w.g));
            }
        }
        for (i, l) in self.sem_head.iter().enumerate() {
            out.push((format!("sem_head.{i}"), l));
        }
        for (i, l) in self.inst_head.iter().enumerate() {
            out.push((format!("inst_head.{i}"), l));
        }
        out
    }

    pub fn named_params_mut(&mut self) -> Vec<(String, &mut LinearMap)> {
        let mut out: Vec<(String, &mut LinearMap)> = Vec::new();
        for (i, l) in self.encoder.iter_mut().enumerate() {
            out.push((format!("encoder.{i}"), l));
        }
        for (i, l) in self.sem_decoder.iter_mut().enumerate() {
            out.push((format!("sem_decoder.{i}"), l));
        }
        for (i, l) in self.inst_decoder.iter_mut().enumerate() {
            out.push((format!("inst_decoder.{i}"), l));
        }
        for (dir, w) in [
            ("stoi", &mut self.attention.stoi),
            ("itos", &mut self.attention.itos),
            ("sem_self", &mut self.attention.sem_self),
            ("inst_self", &mut self.attention.inst_self),
        ] {
            if let Some(w) = w {
                out.push((format!("{dir}.theta"), &mut w.theta));
                out.push((format!("{dir}.phi"), &mut w.phi));
                out.push((format!("{dir}.g"), &mut w.g));
            }
        }
        for (i, l) in self.sem_head.iter_mut().enumerate() {
            out.push((format!("sem_head.{i}"), l));
        }
        for (i, l) in self.inst_head.iter_mut().enumerate() {
            out.push((format!("inst_head.{i}"), l));
        }
        out
    }

    /// Weight/bias tensor shapes in enumeration order, two per map.
    pub fn tensor_shapes(&self) -> Vec<(usize, usize)> {
        self.named_params()
            .iter()
            .flat_map(|(_, l)| [l.weight.shape(), l.bias.shape()])
            .collect()
    }

    /// Gradient tensors cloned out in enumeration order.
    pub fn grad_tensors(&self) -> Vec<Matrix> {
        self.named_params()
            .iter()
            .flat_map(|(_, l)| [l.weight_grad.clone(), l.bias_grad.clone()])
            .collect()
    }

    pub fn zero_grads(&mut self) {
        for (_, l) in self.named_params_mut() {
            l.zero_grad();
        }
    }

    /// Restore gradient accumulators after deserialization.
    pub fn reset_grads(&mut self) {
        for (_, l) in self.named_params_mut() {
            l.reset_grads();
        }
    }

    pub fn num_scalar_params(&self) -> usize {
        self.named_params()
            .iter()
            .map(|(_, l)| l.weight.len() + l.bias.len())
            .sum()
    }

    /// Apply one optimizer step using the accumulated gradients.
    pub fn adam_step(&mut self, state: &mut crate::optim::AdamState) -> Result<()> {
        let grads = self.grad_tensors();
        let grad_refs: Vec<&Matrix> = grads.iter().collect();
        let mut params: Vec<&mut Matrix> = Vec::new();
        for (_, l) in self.named_params_mut() {
            let (w, b) = (&mut l.weight, &mut l.bias);
            params.push(w);
            params.push(b);
        }
        state.step(&mut params, &grad_refs)
    }

    pub fn bind(&self, tape: &mut Tape) -> BoundModel {
        BoundModel {
            encoder: self.encoder.iter().map(|l| l.bind(tape)).collect(),
            sem_decoder: self.sem_decoder.iter().map(|l| l.bind(tape)).collect(),
            inst_decoder: self.inst_decoder.iter().map(|l| l.bind(tape)).collect(),
            attention: self.attention.bind(tape),
            sem_head: self.sem_head.iter().map(|l| l.bind(tape)).collect(),
            inst_head: self.inst_head.iter().map(|l| l.bind(tape)).collect(),
        }
    }

    /// Add the tape's parameter gradients into the model accumulators,
    /// scaled by `factor`.
    pub fn accumulate_grads(&mut self, tape: &Tape, bound: &BoundModel, factor: f64) -> Result<()> {
        let bound_maps = bound.all_maps();
        for ((_, l), b) in self.named_params_mut().into_iter().zip(bound_maps) {
            l.accumulate_grads(tape, &b, factor)?;
        }
        Ok(())
    }

    /// Clone the tape's parameter gradients out as weight/bias tensors in
    /// enumeration order; zeros where no gradient flowed.
    pub fn collect_grads(&self, tape: &Tape, bound: &BoundModel) -> Vec<Matrix> {
        let mut out = Vec::new();
        for ((_, l), b) in self.named_params().into_iter().zip(bound.all_maps()) {
            out.push(
                tape.grad(b.weight)
                    .cloned()
                    .unwrap_or_else(|| Matrix::zeros(l.weight.rows(), l.weight.cols())),
            );
            out.push(
                tape.grad(b.bias)
                    .cloned()
                    .unwrap_or_else(|| Matrix::zeros(1, l.bias.cols())),
            );
        }
        out
    }

    /// Add externally computed gradient tensors (enumeration order) into the
    /// model accumulators, scaled by `factor`.
    pub fn add_grad_tensors(&mut self, grads: &[Matrix], factor: f64) -> Result<()> {
        let maps = self.named_params_mut();
        if grads.len() != maps.len() * 2 {
            return Err(Error::Contract {
                detail: format!(
                    "{} gradient tensors for {} parameter maps",
                    grads.len(),
                    maps.len()
                ),
            });
        }
        for (i, (_, l)) in maps.into_iter().enumerate() {
            l.weight_grad = l.weight_grad.add(&grads[i * 2].scale(factor))?;
            l.bias_grad = l.bias_grad.add(&grads[i * 2 + 1].scale(factor))?;
        }
        Ok(())
    }

    /// Forward pass on `tape`. Returns logits and embedding nodes in the
    /// caller's row order; similarity nodes stay in canonical order with the
    /// mapping provided in [`ForwardNodes::order`].
    pub fn forward_on_tape(
        &self,
        tape: &mut Tape,
        bound: &BoundModel,
        features: &Matrix,
    ) -> Result<ForwardNodes> {
        if features.cols() != self.cfg.input_dim {
            return Err(Error::Config {
                detail: format!(
                    "model expects {} input channels, features have {}",
                    self.cfg.input_dim,
                    features.cols()
                ),
            });
        }
        if features.rows() == 0 {
            return Err(Error::Input {
                detail: "forward on an empty point set".into(),
            });
        }
        let n = features.rows();
        let order = canonical_row_order(&[features]);
        let inverse = invert_permutation(&order);

        let mut h = tape.leaf(features.permute_rows(&order)?);
        for layer in &bound.encoder {
            h = layer.apply(tape, h)?;
            h = tape.relu(h)?;
        }
        let pooled = tape.max_pool_rows(h)?;
        let context = tape.broadcast_rows(pooled, n)?;
        let enc = tape.concat_cols(h, context)?;

        let mut s = enc;
        for (i, layer) in bound.sem_decoder.iter().enumerate() {
            s = layer.apply(tape, s)?;
            if i + 1 < bound.sem_decoder.len() {
                s = tape.relu(s)?;
            }
        }
        let mut inst = enc;
        for (i, layer) in bound.inst_decoder.iter().enumerate() {
            inst = layer.apply(tape, inst)?;
            if i + 1 < bound.inst_decoder.len() {
                inst = tape.relu(inst)?;
            }
        }

        let att = bi_directional_on_tape(tape, s, inst, &self.bidir, &bound.attention)?;

        let mut logits = att.s_out;
        for (i, layer) in bound.sem_head.iter().enumerate() {
            logits = layer.apply(tape, logits)?;
            if i + 1 < bound.sem_head.len() {
                logits = tape.relu(logits)?;
            }
        }
        let mut embedding = att.i_out;
        for (i, layer) in bound.inst_head.iter().enumerate() {
            embedding = layer.apply(tape, embedding)?;
            if i + 1 < bound.inst_head.len() {
                embedding = tape.relu(embedding)?;
            }
        }

        Ok(ForwardNodes {
            logits: tape.permute_rows(logits, &inverse)?,
            embedding: tape.permute_rows(embedding, &inverse)?,
            p_sem: att.p_sem,
            p_inst: att.p_inst,
            order,
        })
    }

    /// Inference-only forward pass.
    pub fn forward(&self, features: &Matrix) -> Result<ForwardOut> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape);
        let nodes = self.forward_on_tape(&mut tape, &bound, features)?;
        let inverse = invert_permutation(&nodes.order);
        let unpermute_p = |node: NodeId| -> Result<SimilarityMatrix> {
            let canon = tape.value(node);
            let n = canon.rows();
            let mut p = Matrix::zeros(n, n);
            for a in 0..n {
                for b in 0..n {
                    p[(a, b)] = canon[(inverse[a], inverse[b])];
                }
            }
            SimilarityMatrix::new(p)
        };
        Ok(ForwardOut {
            logits: tape.value(nodes.logits).clone(),
            embedding: tape.value(nodes.embedding).clone(),
            p_sem: nodes.p_sem.map(&unpermute_p).transpose()?,
            p_inst: nodes.p_inst.map(&unpermute_p).transpose()?,
        })
    }
}

/// Tape handles for every parameter of a [`SegModel`].
pub struct BoundModel {
    encoder: Vec<BoundLinear>,
    sem_decoder: Vec<BoundLinear>,
    inst_decoder: Vec<BoundLinear>,
    attention: BoundBiDir,
    sem_head: Vec<BoundLinear>,
    inst_head: Vec<BoundLinear>,
}

impl BoundModel {
    /// Bound maps in the same order as [`SegModel::named_params`].
    fn all_maps(&self) -> Vec<BoundLinear> {
        let mut out = Vec::new();
        out.extend(self.encoder.iter().copied());
        out.extend(self.sem_decoder.iter().copied());
        out.extend(self.inst_decoder.iter().copied());
        for dir in [
            &self.attention.stoi,
            &self.attention.itos,
            &self.attention.sem_self,
            &self.attention.inst_self,
        ]
        .into_iter()
        .flatten()
        {
            out.push(dir.theta);
            out.push(dir.phi);
            out.push(dir.g);
        }
        out.extend(self.sem_head.iter().copied());
        out.extend(self.inst_head.iter().copied());
        out
    }
}

/// Forward results on a tape.
pub struct ForwardNodes {
    pub logits: NodeId,
    pub embedding: NodeId,
    /// Similarity from semantic features, in canonical row order.
    pub p_sem: Option<NodeId>,
    /// Similarity from instance features, in canonical row order.
    pub p_inst: Option<NodeId>,
    /// Canonical ordering used internally: canonical row `k` is input row `order[k]`.
    pub order: Vec<usize>,
}

/// Inference outputs in the caller's row order.
pub struct ForwardOut {
    pub logits: Matrix,
    pub embedding: Matrix,
    pub p_sem: Option<SimilarityMatrix>,
    pub p_inst: Option<SimilarityMatrix>,
}

impl ForwardOut {
    /// Per-point argmax class, ties to the lowest class id.
    pub fn predicted_classes(&self) -> Vec<u32> {
        (0..self.logits.rows())
            .map(|r| {
                let row = self.logits.row(r);
                let mut best = 0usize;
                for (c, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = c;
                    }
                }
                best as u32
            })
            .collect()
    }
}
