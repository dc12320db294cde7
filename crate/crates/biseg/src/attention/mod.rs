//! Similarity-matrix attention between the semantic and instance branches.
//!
//! Pairwise similarities measured on one branch's features re-weight the
//! other branch's features: `attend(X, Y) = [P g(Y) | Y]` with
//! `P = row_softmax(theta(X) phi(X)^T)`. The propagated block is
//! concatenated to the original `Y`, never added to it, so neither task is
//! forced to share representations with the other.
//!
//! All entry points canonicalize point order internally (sort by feature
//! rows, compute, un-permute), which makes every reduction independent of
//! the caller's row order: outputs are bit-exactly permutation-equivariant.

pub mod simplified;

use crate::error::{Error, Result};
use crate::tensor::{canonical_row_order, invert_permutation, LinearMap, Matrix, NodeId, Tape};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Learned maps of one attention direction: `theta`/`phi` embed the
/// similarity-source features, `g` re-weights the propagated features and
/// preserves their width so the concatenated output is `N x 2*N_Y`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AttentionWeights {
    pub theta: LinearMap,
    pub phi: LinearMap,
    pub g: LinearMap,
}

impl AttentionWeights {
    /// `x_dim` is the similarity-source width, `y_dim` the propagated width,
    /// `d_k` the inner-product embedding width shared by theta and phi.
    pub fn init<R: Rng>(x_dim: usize, y_dim: usize, d_k: usize, rng: &mut R) -> Self {
        AttentionWeights {
            theta: LinearMap::init(x_dim, d_k, rng),
            phi: LinearMap::init(x_dim, d_k, rng),
            g: LinearMap::init(y_dim, y_dim, rng),
        }
    }

    pub fn bind(&self, tape: &mut Tape) -> BoundAttention {
        BoundAttention {
            theta: self.theta.bind(tape),
            phi: self.phi.bind(tape),
            g: self.g.bind(tape),
        }
    }

    fn check_dims(&self, x_dim: usize, y_dim: usize) -> Result<()> {
        if self.theta.in_dim() != x_dim || self.phi.in_dim() != x_dim {
            return Err(Error::Dimension {
                op: "attention",
                detail: format!(
                    "theta/phi expect {} input columns, got {x_dim}",
                    self.theta.in_dim()
                ),
            });
        }
        if self.theta.out_dim() != self.phi.out_dim() {
            return Err(Error::Dimension {
                op: "attention",
                detail: "theta and phi must share output width".into(),
            });
        }
        if self.g.in_dim() != y_dim || self.g.out_dim() != y_dim {
            return Err(Error::Dimension {
                op: "attention",
                detail: format!(
                    "g must preserve the propagated width {y_dim}, has {}x{}",
                    self.g.in_dim(),
                    self.g.out_dim()
                ),
            });
        }
        Ok(())
    }
}

/// Tape handles for one direction's parameters.
#[derive(Clone, Copy, Debug)]
pub struct BoundAttention {
    pub theta: crate::tensor::BoundLinear,
    pub phi: crate::tensor::BoundLinear,
    pub g: crate::tensor::BoundLinear,
}

/// Row-stochastic `N x N` transition matrix; row `i` is point `i`'s
/// attention distribution over all points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix {
    p: Matrix,
}

impl SimilarityMatrix {
    /// Validates squareness, entry range, and row sums (1 within 1e-9).
    pub fn new(p: Matrix) -> Result<Self> {
        if p.rows() != p.cols() {
            return Err(Error::Dimension {
                op: "similarity_matrix",
                detail: format!("expected square matrix, got {:?}", p.shape()),
            });
        }
        for r in 0..p.rows() {
            let mut sum = 0.0;
            for &v in p.row(r) {
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::Numeric {
                        detail: format!("similarity entry {v} outside [0,1] in row {r}"),
                    });
                }
                sum += v;
            }
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::Numeric {
                    detail: format!("similarity row {r} sums to {sum}"),
                });
            }
        }
        Ok(SimilarityMatrix { p })
    }

    pub fn matrix(&self) -> &Matrix {
        &self.p
    }

    pub fn len(&self) -> usize {
        self.p.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.p.rows() == 0
    }

    /// Binary mask over points from one row: similarity >= threshold.
    pub fn row_mask(&self, point_index: usize, threshold: f64) -> Result<Vec<bool>> {
        if point_index >= self.p.rows() {
            return Err(Error::Bounds {
                index: point_index,
                len: self.p.rows(),
            });
        }
        Ok(self
            .p
            .row(point_index)
            .iter()
            .map(|&v| v >= threshold)
            .collect())
    }
}

/// Attention composition mode over the two branches.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BiDirMode {
    /// Semantic-similarity propagation into the instance branch first, then
    /// instance-similarity propagation into the semantic branch.
    BothStoiFirst,
    /// The inverse composition order.
    BothItosFirst,
    StoiOnly,
    ItosOnly,
    /// Each branch attends over itself; no cross-branch flow.
    SelfAttention,
    None,
}

impl BiDirMode {
    pub const ALL: [BiDirMode; 6] = [
        BiDirMode::None,
        BiDirMode::StoiOnly,
        BiDirMode::ItosOnly,
        BiDirMode::BothStoiFirst,
        BiDirMode::BothItosFirst,
        BiDirMode::SelfAttention,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            BiDirMode::BothStoiFirst => "both-stoi-first",
            BiDirMode::BothItosFirst => "both-itos-first",
            BiDirMode::StoiOnly => "stoi-only",
            BiDirMode::ItosOnly => "itos-only",
            BiDirMode::SelfAttention => "self-attention",
            BiDirMode::None => "none",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        BiDirMode::ALL
            .iter()
            .copied()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config {
                detail: format!("unknown attention mode '{s}'"),
            })
    }

    /// Whether the semantic branch output is widened to `2 * N_S`.
    pub fn widens_semantic(&self) -> bool {
        matches!(
            self,
            BiDirMode::BothStoiFirst | BiDirMode::BothItosFirst | BiDirMode::ItosOnly | BiDirMode::SelfAttention
        )
    }

    /// Whether the instance branch output is widened to `2 * N_I`.
    pub fn widens_instance(&self) -> bool {
        matches!(
            self,
            BiDirMode::BothStoiFirst | BiDirMode::BothItosFirst | BiDirMode::StoiOnly | BiDirMode::SelfAttention
        )
    }
}

/// Attention module configuration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiDirConfig {
    pub mode: BiDirMode,
    /// When both directions run, feed the second direction the first
    /// direction's widened output instead of the original features.
    /// Off by default: each similarity matrix is then defined over its
    /// branch's native feature width.
    #[serde(default)]
    pub use_updated_features: bool,
}

impl Default for BiDirConfig {
    fn default() -> Self {
        BiDirConfig {
            mode: BiDirMode::BothStoiFirst,
            use_updated_features: false,
        }
    }
}

/// Weight sets for the directions a mode requires; absent directions are `None`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BiDirWeights {
    /// Similarity from semantic features, propagates instance features.
    pub stoi: Option<AttentionWeights>,
    /// Similarity from instance features, propagates semantic features.
    pub itos: Option<AttentionWeights>,
    /// Semantic branch attending over itself.
    pub sem_self: Option<AttentionWeights>,
    /// Instance branch attending over itself.
    pub inst_self: Option<AttentionWeights>,
}

impl BiDirWeights {
    pub fn init<R: Rng>(cfg: &BiDirConfig, n_s: usize, n_i: usize, d_k: usize, rng: &mut R) -> Self {
        let mut w = BiDirWeights {
            stoi: None,
            itos: None,
            sem_self: None,
            inst_self: None,
        };
        match cfg.mode {
            BiDirMode::None => {}
            BiDirMode::StoiOnly => {
                w.stoi = Some(AttentionWeights::init(n_s, n_i, d_k, rng));
            }
            BiDirMode::ItosOnly => {
                w.itos = Some(AttentionWeights::init(n_i, n_s, d_k, rng));
            }
            BiDirMode::BothStoiFirst => {
                w.stoi = Some(AttentionWeights::init(n_s, n_i, d_k, rng));
                let itos_in = if cfg.use_updated_features { 2 * n_i } else { n_i };
                w.itos = Some(AttentionWeights::init(itos_in, n_s, d_k, rng));
            }
            BiDirMode::BothItosFirst => {
                w.itos = Some(AttentionWeights::init(n_i, n_s, d_k, rng));
                let stoi_in = if cfg.use_updated_features { 2 * n_s } else { n_s };
                w.stoi = Some(AttentionWeights::init(stoi_in, n_i, d_k, rng));
            }
            BiDirMode::SelfAttention => {
                w.sem_self = Some(AttentionWeights::init(n_s, n_s, d_k, rng));
                w.inst_self = Some(AttentionWeights::init(n_i, n_i, d_k, rng));
            }
        }
        w
    }
}

// ---------------------------------------------------------------------------
// Tape forms (training path). Callers are expected to pass inputs already in
// canonical row order; the pure wrappers below handle the reordering.
// ---------------------------------------------------------------------------

/// `P = row_softmax(theta(x) phi(x)^T)` on the tape.
pub fn similarity_on_tape(tape: &mut Tape, x: NodeId, w: &BoundAttention) -> Result<NodeId> {
    let t = w.theta.apply(tape, x)?;
    let p = w.phi.apply(tape, x)?;
    let pt = tape.transpose(p)?;
    let logits = tape.matmul(t, pt)?;
    tape.row_softmax(logits)
}

/// `[P g(y) | y]` on the tape; also returns the similarity node.
pub fn attend_on_tape(
    tape: &mut Tape,
    x: NodeId,
    y: NodeId,
    w: &BoundAttention,
) -> Result<(NodeId, NodeId)> {
    let p = similarity_on_tape(tape, x, w)?;
    let gy = w.g.apply(tape, y)?;
    let propagated = tape.matmul(p, gy)?;
    let out = tape.concat_cols(propagated, y)?;
    Ok((out, p))
}

/// Branch outputs plus the similarity matrices a mode computes.
pub struct BiDirTapeOut {
    pub s_out: NodeId,
    pub i_out: NodeId,
    /// Similarity measured on semantic features, when the mode computes it.
    pub p_sem: Option<NodeId>,
    /// Similarity measured on instance features, when the mode computes it.
    pub p_inst: Option<NodeId>,
}

/// Tape handles for the directions a mode requires.
pub struct BoundBiDir {
    pub stoi: Option<BoundAttention>,
    pub itos: Option<BoundAttention>,
    pub sem_self: Option<BoundAttention>,
    pub inst_self: Option<BoundAttention>,
}

impl BiDirWeights {
    pub fn bind(&self, tape: &mut Tape) -> BoundBiDir {
        BoundBiDir {
            stoi: self.stoi.as_ref().map(|w| w.bind(tape)),
            itos: self.itos.as_ref().map(|w| w.bind(tape)),
            sem_self: self.sem_self.as_ref().map(|w| w.bind(tape)),
            inst_self: self.inst_self.as_ref().map(|w| w.bind(tape)),
        }
    }
}

fn missing(dir: &'static str) -> Error {
    Error::Config {
        detail: format!("attention mode requires {dir} weights"),
    }
}

/// Bi-directional composition on the tape. Rows of `s` and `i` must
/// correspond to the same points.
pub fn bi_directional_on_tape(
    tape: &mut Tape,
    s: NodeId,
    i: NodeId,
    cfg: &BiDirConfig,
    w: &BoundBiDir,
) -> Result<BiDirTapeOut> {
    if tape.value(s).rows() != tape.value(i).rows() {
        return Err(Error::Dimension {
            op: "bi_directional",
            detail: format!(
                "semantic rows {} vs instance rows {}",
                tape.value(s).rows(),
                tape.value(i).rows()
            ),
        });
    }
    let mut out = BiDirTapeOut {
        s_out: s,
        i_out: i,
        p_sem: None,
        p_inst: None,
    };
    match cfg.mode {
        BiDirMode::None => {}
        BiDirMode::StoiOnly => {
            let stoi = w.stoi.as_ref().ok_or_else(|| missing("stoi"))?;
            let (i_out, p_sem) = attend_on_tape(tape, s, i, stoi)?;
            out.i_out = i_out;
            out.p_sem = Some(p_sem);
        }
        BiDirMode::ItosOnly => {
            let itos = w.itos.as_ref().ok_or_else(|| missing("itos"))?;
            let (s_out, p_inst) = attend_on_tape(tape, i, s, itos)?;
            out.s_out = s_out;
            out.p_inst = Some(p_inst);
        }
        BiDirMode::BothStoiFirst => {
            let stoi = w.stoi.as_ref().ok_or_else(|| missing("stoi"))?;
            let itos = w.itos.as_ref().ok_or_else(|| missing("itos"))?;
            let (i_out, p_sem) = attend_on_tape(tape, s, i, stoi)?;
            let itos_x = if cfg.use_updated_features { i_out } else { i };
            let (s_out, p_inst) = attend_on_tape(tape, itos_x, s, itos)?;
            out.s_out = s_out;
            out.i_out = i_out;
            out.p_sem = Some(p_sem);
            out.p_inst = Some(p_inst);
        }
        BiDirMode::BothItosFirst => {
            let stoi = w.stoi.as_ref().ok_or_else(|| missing("stoi"))?;
            let itos = w.itos.as_ref().ok_or_else(|| missing("itos"))?;
            let (s_out, p_inst) = attend_on_tape(tape, i, s, itos)?;
            let stoi_x = if cfg.use_updated_features { s_out } else { s };
            let (i_out, p_sem) = attend_on_tape(tape, stoi_x, i, stoi)?;
            out.s_out = s_out;
            out.i_out = i_out;
            out.p_sem = Some(p_sem);
            out.p_inst = Some(p_inst);
        }
        BiDirMode::SelfAttention => {
            let sem = w.sem_self.as_ref().ok_or_else(|| missing("sem_self"))?;
            let inst = w.inst_self.as_ref().ok_or_else(|| missing("inst_self"))?;
            let (s_out, p_sem) = attend_on_tape(tape, s, s, sem)?;
            let (i_out, p_inst) = attend_on_tape(tape, i, i, inst)?;
            out.s_out = s_out;
            out.i_out = i_out;
            out.p_sem = Some(p_sem);
            out.p_inst = Some(p_inst);
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Pure forms.
// ---------------------------------------------------------------------------

/// Similarity matrix of `x` under `w`, independent of the row order of `x`.
pub fn similarity(x: &Matrix, w: &AttentionWeights) -> Result<SimilarityMatrix> {
    w.check_dims(x.cols(), w.g.in_dim())?;
    let order = canonical_row_order(&[x]);
    let inverse = invert_permutation(&order);
    let x_canon = x.permute_rows(&order)?;

    let mut tape = Tape::new();
    let xn = tape.leaf(x_canon);
    let bound = w.bind(&mut tape);
    let p = similarity_on_tape(&mut tape, xn, &bound)?;
    let p_canon = tape.value(p);

    // Un-permute rows and columns: entry (i, j) lives at canonical
    // (position of i, position of j).
    let n = x.rows();
    let mut p_out = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            p_out[(i, j)] = p_canon[(inverse[i], inverse[j])];
        }
    }
    SimilarityMatrix::new(p_out)
}

/// Propagation with an explicit similarity matrix: `[P g(y) | y]`.
/// Exposed separately so tests can force `P` (e.g. the identity) without
/// going through the softmax.
pub fn propagate(p: &SimilarityMatrix, y: &Matrix, g: &LinearMap) -> Result<Matrix> {
    if p.len() != y.rows() {
        return Err(Error::Dimension {
            op: "propagate",
            detail: format!("similarity over {} points, y has {} rows", p.len(), y.rows()),
        });
    }
    let gy = g.apply(y)?;
    let prop = p.matrix().matmul(&gy)?;
    prop.concat_cols(y)
}

/// `[P g(y) | y]` where `P` is measured on `x`. The second column block is
/// `y` itself, bit-exactly.
pub fn attend(x: &Matrix, y: &Matrix, w: &AttentionWeights) -> Result<Matrix> {
    if x.rows() != y.rows() {
        return Err(Error::Dimension {
            op: "attend",
            detail: format!("x has {} rows, y has {} rows", x.rows(), y.rows()),
        });
    }
    w.check_dims(x.cols(), y.cols())?;
    let order = canonical_row_order(&[x, y]);
    let inverse = invert_permutation(&order);
    let x_canon = x.permute_rows(&order)?;
    let y_canon = y.permute_rows(&order)?;

    let mut tape = Tape::new();
    let xn = tape.leaf(x_canon);
    let yn = tape.leaf(y_canon);
    let bound = w.bind(&mut tape);
    let (out, _) = attend_on_tape(&mut tape, xn, yn, &bound)?;
    tape.value(out).permute_rows(&inverse)
}

/// Pure bi-directional composition; returns branch outputs and the
/// similarity matrices the mode computes.
pub struct BiDirOut {
    pub s_out: Matrix,
    pub i_out: Matrix,
    pub p_sem: Option<SimilarityMatrix>,
    pub p_inst: Option<SimilarityMatrix>,
}

pub fn bi_directional(
    s: &Matrix,
    i: &Matrix,
    cfg: &BiDirConfig,
    w: &BiDirWeights,
) -> Result<BiDirOut> {
    if s.rows() != i.rows() {
        return Err(Error::Dimension {
            op: "bi_directional",
            detail: format!("semantic rows {} vs instance rows {}", s.rows(), i.rows()),
        });
    }
    if cfg.mode == BiDirMode::SelfAttention {
        // Each branch canonicalizes on its own features, so its output is
        // independent of the other branch's values down to the bit.
        let sem = w.sem_self.as_ref().ok_or_else(|| missing("sem_self"))?;
        let inst = w.inst_self.as_ref().ok_or_else(|| missing("inst_self"))?;
        return Ok(BiDirOut {
            s_out: attend(s, s, sem)?,
            i_out: attend(i, i, inst)?,
            p_sem: Some(similarity(s, sem)?),
            p_inst: Some(similarity(i, inst)?),
        });
    }
    let order = canonical_row_order(&[s, i]);
    let inverse = invert_permutation(&order);
    let s_canon = s.permute_rows(&order)?;
    let i_canon = i.permute_rows(&order)?;

    let mut tape = Tape::new();
    let sn = tape.leaf(s_canon);
    let in_ = tape.leaf(i_canon);
    let bound = w.bind(&mut tape);
    let out = bi_directional_on_tape(&mut tape, sn, in_, cfg, &bound)?;

    let unpermute_p = |node: NodeId, tape: &Tape| -> Result<SimilarityMatrix> {
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
    Ok(BiDirOut {
        s_out: tape.value(out.s_out).permute_rows(&inverse)?,
        i_out: tape.value(out.i_out).permute_rows(&inverse)?,
        p_sem: out.p_sem.map(|n| unpermute_p(n, &tape)).transpose()?,
        p_inst: out.p_inst.map(|n| unpermute_p(n, &tape)).transpose()?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn identity_weights(dim: usize) -> AttentionWeights {
        AttentionWeights {
            theta: LinearMap {
                weight: Matrix::identity(dim),
                bias: Matrix::zeros(1, dim),
                weight_grad: Matrix::zeros(dim, dim),
                bias_grad: Matrix::zeros(1, dim),
            },
            phi: LinearMap {
                weight: Matrix::identity(dim),
                bias: Matrix::zeros(1, dim),
                weight_grad: Matrix::zeros(dim, dim),
                bias_grad: Matrix::zeros(1, dim),
            },
            g: LinearMap {
                weight: Matrix::identity(dim),
                bias: Matrix::zeros(1, dim),
                weight_grad: Matrix::zeros(dim, dim),
                bias_grad: Matrix::zeros(1, dim),
            },
        }
    }

    #[test]
    fn similarity_single_point_is_one() {
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let w = AttentionWeights::init(3, 3, 2, &mut rng);
        let x = Matrix::from_rows(&[&[0.3, -0.2, 0.9]]).unwrap();
        let p = similarity(&x, &w).unwrap();
        assert_eq!(p.matrix().shape(), (1, 1));
        assert!((p.matrix()[(0, 0)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn duplicate_points_give_identical_similarity_rows() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let w = AttentionWeights::init(2, 2, 3, &mut rng);
        let x = Matrix::from_rows(&[&[0.5, 1.0], &[0.5, 1.0], &[-1.0, 0.25]]).unwrap();
        let p = similarity(&x, &w).unwrap();
        assert_eq!(p.matrix().row(0), p.matrix().row(1));
    }

    #[test]
    fn similarity_one_hot_matches_direct_formula() {
        // theta = phi = identity, one-hot rows: logit(i,j) = <x_i, x_j>,
        // so rows concentrate on same-feature points. Oracle evaluates the
        // formula entrywise from scratch.
        let dim = 3;
        let w = identity_weights(dim);
        let x = Matrix::from_rows(&[
            &[1.0, 0.0, 0.0],
            &[0.0, 1.0, 0.0],
            &[1.0, 0.0, 0.0],
            &[0.0, 0.0, 1.0],
        ])
        .unwrap();
        let p = similarity(&x, &w).unwrap();

        for i in 0..4 {
            // direct evaluation: softmax over <x_i, x_j>
            let logits: Vec<f64> = (0..4)
                .map(|j| {
                    (0..dim)
                        .map(|k| x[(i, k)] * x[(j, k)])
                        .sum::<f64>()
                })
                .collect();
            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
            let sum: f64 = exps.iter().sum();
            for j in 0..4 {
                assert!((p.matrix()[(i, j)] - exps[j] / sum).abs() < 1e-12, "entry ({i},{j})");
            }
        }
        // same-feature pairs get the largest mass in their row
        assert!(p.matrix()[(0, 2)] > p.matrix()[(0, 1)]);
        assert!(p.matrix()[(0, 2)] > p.matrix()[(0, 3)]);
    }

    #[test]
    fn propagate_with_identity_p_passes_gy_through() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let g = LinearMap::init(3, 3, &mut rng);
        let y = Matrix::random(4, 3, -1.0, 1.0, &mut rng);
        let p = SimilarityMatrix::new(Matrix::identity(4)).unwrap();
        let out = propagate(&p, &y, &g).unwrap();
        let gy = g.apply(&y).unwrap();
        for r in 0..4 {
            assert_eq!(&out.row(r)[..3], gy.row(r));
            assert_eq!(&out.row(r)[3..], y.row(r));
        }
    }

    #[test]
    fn identical_points_produce_identical_propagated_rows() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let w = AttentionWeights::init(2, 3, 2, &mut rng);
        let x = Matrix::from_rows(&[&[0.4, 0.4], &[0.4, 0.4], &[0.4, 0.4]]).unwrap();
        let y = Matrix::from_rows(&[&[1.0, 0.0, 2.0], &[1.0, 0.0, 2.0], &[1.0, 0.0, 2.0]]).unwrap();
        let out = attend(&x, &y, &w).unwrap();
        assert_eq!(out.row(0), out.row(1));
        assert_eq!(out.row(1), out.row(2));
    }

    #[test]
    fn attend_matches_per_point_summation_oracle() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let w = AttentionWeights::init(3, 2, 4, &mut rng);
        let x = Matrix::random(5, 3, -1.0, 1.0, &mut rng);
        let y = Matrix::random(5, 2, -1.0, 1.0, &mut rng);

        let out = attend(&x, &y, &w).unwrap();
        assert_eq!(out.shape(), (5, 4));

        let p = similarity(&x, &w).unwrap();
        let gy = w.g.apply(&y).unwrap();
        for i in 0..5 {
            for c in 0..2 {
                let direct: f64 = (0..5).map(|j| p.matrix()[(i, j)] * gy[(j, c)]).sum();
                assert!((out[(i, c)] - direct).abs() < 1e-9, "entry ({i},{c})");
            }
            // second block is y, bit-exact
            assert_eq!(&out.row(i)[2..], y.row(i));
        }
    }

    #[test]
    fn attend_row_mismatch_errors() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let w = AttentionWeights::init(2, 2, 2, &mut rng);
        let x = Matrix::zeros(3, 2);
        let y = Matrix::zeros(4, 2);
        assert!(attend(&x, &y, &w).is_err());
    }

    #[test]
    fn permutation_equivariance_is_bit_exact() {
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        for trial in 0..20 {
            let n = 3 + (trial % 5);
            let w = AttentionWeights::init(3, 2, 4, &mut rng);
            let x = Matrix::random(n, 3, -1.0, 1.0, &mut rng);
            let y = Matrix::random(n, 2, -1.0, 1.0, &mut rng);

            // random permutation
            let mut perm: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() {
                let j = rng.random_range(0..=i);
                perm.swap(i, j);
            }
            let xp = x.permute_rows(&perm).unwrap();
            let yp = y.permute_rows(&perm).unwrap();

            let p = similarity(&x, &w).unwrap();
            let pp = similarity(&xp, &w).unwrap();
            for a in 0..n {
                for b in 0..n {
                    // pp[(a, b)] must equal p[(perm[a], perm[b])] bit-exactly
                    assert_eq!(
                        pp.matrix()[(a, b)].to_bits(),
                        p.matrix()[(perm[a], perm[b])].to_bits(),
                        "similarity trial {trial}"
                    );
                }
            }

            let out = attend(&x, &y, &w).unwrap();
            let outp = attend(&xp, &yp, &w).unwrap();
            for a in 0..n {
                for c in 0..out.cols() {
                    assert_eq!(
                        outp[(a, c)].to_bits(),
                        out[(perm[a], c)].to_bits(),
                        "attend trial {trial}"
                    );
                }
            }
        }
    }

    #[test]
    fn mode_none_is_identity() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let cfg = BiDirConfig {
            mode: BiDirMode::None,
            use_updated_features: false,
        };
        let w = BiDirWeights::init(&cfg, 3, 2, 4, &mut rng);
        let s = Matrix::random(4, 3, -1.0, 1.0, &mut rng);
        let i = Matrix::random(4, 2, -1.0, 1.0, &mut rng);
        let out = bi_directional(&s, &i, &cfg, &w).unwrap();
        assert_eq!(out.s_out, s);
        assert_eq!(out.i_out, i);
        assert!(out.p_sem.is_none() && out.p_inst.is_none());
    }

    #[test]
    fn stoi_only_passes_semantic_through_and_widens_instance() {
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        let cfg = BiDirConfig {
            mode: BiDirMode::StoiOnly,
            use_updated_features: false,
        };
        let w = BiDirWeights::init(&cfg, 3, 2, 4, &mut rng);
        let s = Matrix::random(4, 3, -1.0, 1.0, &mut rng);
        let i = Matrix::random(4, 2, -1.0, 1.0, &mut rng);
        let out = bi_directional(&s, &i, &cfg, &w).unwrap();
        assert_eq!(out.s_out, s);
        assert_eq!(out.i_out.shape(), (4, 4));
        assert!(out.p_sem.is_some() && out.p_inst.is_none());
    }

    #[test]
    fn both_stoi_first_matches_sequential_attend() {
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let cfg = BiDirConfig::default();
        let w = BiDirWeights::init(&cfg, 3, 2, 4, &mut rng);
        let s = Matrix::random(5, 3, -1.0, 1.0, &mut rng);
        let i = Matrix::random(5, 2, -1.0, 1.0, &mut rng);

        let out = bi_directional(&s, &i, &cfg, &w).unwrap();

        // oracle: two independent attend calls over original features
        let i_expect = attend(&s, &i, w.stoi.as_ref().unwrap()).unwrap();
        let s_expect = attend(&i, &s, w.itos.as_ref().unwrap()).unwrap();
        assert!(out.i_out.max_abs_diff(&i_expect) < 1e-12);
        assert!(out.s_out.max_abs_diff(&s_expect) < 1e-12);
    }

    #[test]
    fn updated_features_change_second_direction_input_width() {
        let mut rng = ChaCha20Rng::seed_from_u64(10);
        let cfg = BiDirConfig {
            mode: BiDirMode::BothStoiFirst,
            use_updated_features: true,
        };
        let w = BiDirWeights::init(&cfg, 3, 2, 4, &mut rng);
        assert_eq!(w.itos.as_ref().unwrap().theta.in_dim(), 4);
        let s = Matrix::random(5, 3, -1.0, 1.0, &mut rng);
        let i = Matrix::random(5, 2, -1.0, 1.0, &mut rng);
        let out = bi_directional(&s, &i, &cfg, &w).unwrap();
        assert_eq!(out.s_out.shape(), (5, 6));
        assert_eq!(out.i_out.shape(), (5, 4));
    }

    #[test]
    fn self_attention_ignores_the_other_branch() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let cfg = BiDirConfig {
            mode: BiDirMode::SelfAttention,
            use_updated_features: false,
        };
        let w = BiDirWeights::init(&cfg, 3, 2, 4, &mut rng);
        let s = Matrix::random(5, 3, -1.0, 1.0, &mut rng);
        let i = Matrix::random(5, 2, -1.0, 1.0, &mut rng);
        let i_other = Matrix::random(5, 2, -1.0, 1.0, &mut rng);
        let s_other = Matrix::random(5, 3, -1.0, 1.0, &mut rng);

        let a = bi_directional(&s, &i, &cfg, &w).unwrap();
        let b = bi_directional(&s, &i_other, &cfg, &w).unwrap();
        assert_eq!(a.s_out, b.s_out, "changing i must leave s_out bit-identical");

        let c = bi_directional(&s_other, &i, &cfg, &w).unwrap();
        assert_eq!(a.i_out, c.i_out, "changing s must leave i_out bit-identical");
    }

    #[test]
    fn row_mask_threshold_edges() {
        let p = SimilarityMatrix::new(
            Matrix::from_rows(&[&[0.5, 0.3, 0.2], &[0.1, 0.8, 0.1], &[0.25, 0.25, 0.5]]).unwrap(),
        )
        .unwrap();
        assert_eq!(p.row_mask(0, 0.0).unwrap(), vec![true, true, true]);
        assert_eq!(p.row_mask(0, 1.5).unwrap(), vec![false, false, false]);
        // median of row 2 is 0.25; >= keeps the two entries at/above it
        assert_eq!(p.row_mask(2, 0.3).unwrap(), vec![false, false, true]);
        assert!(matches!(p.row_mask(9, 0.5), Err(Error::Bounds { .. })));
    }

    #[test]
    fn similarity_rows_sum_to_one_many_random_inputs() {
        let mut rng = ChaCha20Rng::seed_from_u64(12);
        for _ in 0..50 {
            let n = rng.random_range(1..8);
            let w = AttentionWeights::init(3, 3, 4, &mut rng);
            let x = Matrix::random(n, 3, -3.0, 3.0, &mut rng);
            let p = similarity(&x, &w).unwrap();
            for r in 0..n {
                let sum: f64 = p.matrix().row(r).iter().sum();
                assert!((sum - 1.0).abs() < 1e-9);
                assert!(p.matrix().row(r).iter().all(|&v| (0.0..=1.0).contains(&v)));
            }
        }
    }
}
