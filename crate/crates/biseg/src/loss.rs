//! Composite training objective: semantic cross-entropy plus the
//! discriminative instance-embedding loss.
//!
//! The discriminative loss pulls each point toward its instance's mean
//! embedding (within margin `delta_v`), pushes instance means apart (up to
//! margin `2 * delta_d`), and keeps the means bounded. Both losses are
//! registered on the tape as fused scalar ops with hand-derived gradients;
//! the finite-difference harness verifies them.

use crate::error::{Error, Result};
use crate::tensor::{Matrix, NodeId, Tape};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Distance norm used by the discriminative loss.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceNorm {
    L1,
    L2,
}

/// Margins and term weights of the discriminative loss.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscriminativeParams {
    /// Pull margin: distances to the instance mean below this are free.
    pub delta_v: f64,
    /// Push margin: mean separations above `2 * delta_d` are free.
    pub delta_d: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub norm: DistanceNorm,
}

impl Default for DiscriminativeParams {
    fn default() -> Self {
        DiscriminativeParams {
            delta_v: 0.5,
            delta_d: 1.5,
            alpha: 1.0,
            beta: 1.0,
            gamma: 0.001,
            norm: DistanceNorm::L1,
        }
    }
}

impl DiscriminativeParams {
    pub fn validate(&self) -> Result<()> {
        if self.alpha < 0.0 || self.beta < 0.0 || self.gamma < 0.0 {
            return Err(Error::Config {
                detail: "discriminative term weights must be >= 0".into(),
            });
        }
        if self.delta_v < 0.0 || self.delta_d < 0.0 {
            return Err(Error::Config {
                detail: "discriminative margins must be >= 0".into(),
            });
        }
        Ok(())
    }

    /// Non-fatal advisories; `delta_d > 2 * delta_v` keeps the pull and push
    /// regions from overlapping.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.delta_d <= 2.0 * self.delta_v {
            out.push(format!(
                "delta_d = {} is not greater than 2 * delta_v = {}; pull and push regions overlap",
                self.delta_d,
                2.0 * self.delta_v
            ));
        }
        out
    }
}

fn norm_of(v: &[f64], norm: DistanceNorm) -> f64 {
    match norm {
        DistanceNorm::L1 => v.iter().map(|x| x.abs()).sum(),
        DistanceNorm::L2 => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
    }
}

/// d(norm)/d(v); subgradient 0 at kinks.
fn norm_grad(v: &[f64], norm: DistanceNorm) -> Vec<f64> {
    match norm {
        DistanceNorm::L1 => v.iter().map(|x| x.signum() * f64::from(*x != 0.0)).collect(),
        DistanceNorm::L2 => {
            let d = norm_of(v, DistanceNorm::L2);
            if d == 0.0 {
                vec![0.0; v.len()]
            } else {
                v.iter().map(|x| x / d).collect()
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Cross-entropy.
// ---------------------------------------------------------------------------

fn check_labels(n: usize, labels: &[u32], n_classes: usize) -> Result<()> {
    if labels.len() != n {
        return Err(Error::Input {
            detail: format!("{} labels for {} points", labels.len(), n),
        });
    }
    if n == 0 {
        return Err(Error::Input {
            detail: "cross_entropy on zero points".into(),
        });
    }
    for &l in labels {
        if l as usize >= n_classes {
            return Err(Error::Label {
                label: l,
                num_classes: n_classes,
            });
        }
    }
    Ok(())
}

/// Mean over points of `-log softmax(logits)[label]`.
pub fn cross_entropy(logits: &Matrix, labels: &[u32]) -> Result<f64> {
    check_labels(logits.rows(), labels, logits.cols())?;
    let mut total = 0.0;
    for (r, &label) in labels.iter().enumerate() {
        let row = logits.row(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let logsumexp = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        total += logsumexp - row[label as usize];
    }
    Ok(total / logits.rows() as f64)
}

/// d(cross_entropy)/d(logits) = (softmax - onehot) / N.
pub fn cross_entropy_grad(logits: &Matrix, labels: &[u32]) -> Result<Matrix> {
    check_labels(logits.rows(), labels, logits.cols())?;
    let mut grad = logits.row_softmax()?;
    let n = logits.rows() as f64;
    for (r, &label) in labels.iter().enumerate() {
        grad[(r, label as usize)] -= 1.0;
        for c in 0..logits.cols() {
            grad[(r, c)] /= n;
        }
    }
    Ok(grad)
}

/// Cross-entropy as a differentiable tape node.
pub fn cross_entropy_on_tape(tape: &mut Tape, logits: NodeId, labels: &[u32]) -> Result<NodeId> {
    let value = cross_entropy(tape.value(logits), labels)?;
    let labels = labels.to_vec();
    tape.custom_scalar(
        logits,
        "cross_entropy",
        value,
        Box::new(move |m| cross_entropy_grad(m, &labels)),
    )
}

// ---------------------------------------------------------------------------
// Discriminative loss.
// ---------------------------------------------------------------------------

/// Per-term values of the discriminative loss.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiscriminativeBreakdown {
    pub l_var: f64,
    pub l_dist: f64,
    pub l_reg: f64,
    pub total: f64,
}

struct Clusters {
    /// Point indices per instance, keyed order = sorted instance id.
    members: Vec<Vec<usize>>,
    /// Mean embedding per instance.
    means: Vec<Vec<f64>>,
}

fn cluster(embedding: &Matrix, instance_labels: &[u32]) -> Result<Clusters> {
    if instance_labels.len() != embedding.rows() {
        return Err(Error::Input {
            detail: format!(
                "{} instance labels for {} embedding rows",
                instance_labels.len(),
                embedding.rows()
            ),
        });
    }
    let mut by_id: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (idx, &id) in instance_labels.iter().enumerate() {
        by_id.entry(id).or_default().push(idx);
    }
    if by_id.is_empty() {
        return Err(Error::Input {
            detail: "discriminative loss needs at least one instance".into(),
        });
    }
    let dim = embedding.cols();
    let mut members = Vec::with_capacity(by_id.len());
    let mut means = Vec::with_capacity(by_id.len());
    for (_, indices) in by_id {
        let mut mean = vec![0.0; dim];
        for &i in &indices {
            for (m, v) in mean.iter_mut().zip(embedding.row(i)) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= indices.len() as f64;
        }
        members.push(indices);
        means.push(mean);
    }
    Ok(Clusters { members, means })
}

/// Discriminative loss with per-term breakdown.
pub fn discriminative_components(
    embedding: &Matrix,
    instance_labels: &[u32],
    p: &DiscriminativeParams,
) -> Result<DiscriminativeBreakdown> {
    p.validate()?;
    let cl = cluster(embedding, instance_labels)?;
    let c = cl.members.len();

    let mut l_var = 0.0;
    for (members, mean) in cl.members.iter().zip(cl.means.iter()) {
        let mut acc = 0.0;
        for &i in members {
            let diff: Vec<f64> = mean
                .iter()
                .zip(embedding.row(i))
                .map(|(m, x)| m - x)
                .collect();
            let hinge = (norm_of(&diff, p.norm) - p.delta_v).max(0.0);
            acc += hinge * hinge;
        }
        l_var += acc / members.len() as f64;
    }
    l_var /= c as f64;

    let mut l_dist = 0.0;
    if c > 1 {
        for a in 0..c {
            for b in 0..c {
                if a == b {
                    continue;
                }
                let diff: Vec<f64> = cl.means[a]
                    .iter()
                    .zip(cl.means[b].iter())
                    .map(|(x, y)| x - y)
                    .collect();
                let hinge = (2.0 * p.delta_d - norm_of(&diff, p.norm)).max(0.0);
                l_dist += hinge * hinge;
            }
        }
        l_dist /= (c * (c - 1)) as f64;
    }

    let l_reg = cl.means.iter().map(|m| norm_of(m, p.norm)).sum::<f64>() / c as f64;

    Ok(DiscriminativeBreakdown {
        l_var,
        l_dist,
        l_reg,
        total: p.alpha * l_var + p.beta * l_dist + p.gamma * l_reg,
    })
}

/// Total discriminative loss.
pub fn discriminative(
    embedding: &Matrix,
    instance_labels: &[u32],
    p: &DiscriminativeParams,
) -> Result<f64> {
    Ok(discriminative_components(embedding, instance_labels, p)?.total)
}

/// d(discriminative)/d(embedding), closed form.
pub fn discriminative_grad(
    embedding: &Matrix,
    instance_labels: &[u32],
    p: &DiscriminativeParams,
) -> Result<Matrix> {
    p.validate()?;
    let cl = cluster(embedding, instance_labels)?;
    let c = cl.members.len();
    let dim = embedding.cols();
    let mut grad = Matrix::zeros(embedding.rows(), dim);
    // Accumulated dL/d(mean_c); chained to members at the end.
    let mut mean_grads = vec![vec![0.0; dim]; c];

    // L_var = (1/C) sum_c (1/N_c) sum_j [ ||mu_c - x_j|| - delta_v ]_+^2
    for (ci, (members, mean)) in cl.members.iter().zip(cl.means.iter()).enumerate() {
        let w = p.alpha / (c as f64 * members.len() as f64);
        for &i in members {
            let diff: Vec<f64> = mean
                .iter()
                .zip(embedding.row(i))
                .map(|(m, x)| m - x)
                .collect();
            let hinge = (norm_of(&diff, p.norm) - p.delta_v).max(0.0);
            if hinge == 0.0 {
                continue;
            }
            let dir = norm_grad(&diff, p.norm);
            for d in 0..dim {
                let g = w * 2.0 * hinge * dir[d];
                grad[(i, d)] -= g; // d(diff)/d(x_j) = -1
                mean_grads[ci][d] += g; // d(diff)/d(mu_c) = +1
            }
        }
    }

    // L_dist over ordered pairs a != b
    if c > 1 {
        let w = p.beta / (c * (c - 1)) as f64;
        for a in 0..c {
            for b in 0..c {
                if a == b {
                    continue;
                }
                let diff: Vec<f64> = cl.means[a]
                    .iter()
                    .zip(cl.means[b].iter())
                    .map(|(x, y)| x - y)
                    .collect();
                let hinge = (2.0 * p.delta_d - norm_of(&diff, p.norm)).max(0.0);
                if hinge == 0.0 {
                    continue;
                }
                let dir = norm_grad(&diff, p.norm);
                for d in 0..dim {
                    let g = w * 2.0 * hinge * (-dir[d]);
                    mean_grads[a][d] += g;
                    mean_grads[b][d] -= g;
                }
            }
        }
    }

    // L_reg = (1/C) sum_c ||mu_c||
    for (ci, mean) in cl.means.iter().enumerate() {
        let dir = norm_grad(mean, p.norm);
        for d in 0..dim {
            mean_grads[ci][d] += p.gamma / c as f64 * dir[d];
        }
    }

    // Chain mean gradients to member points: d(mu_c)/d(x_k) = 1/N_c.
    for (ci, members) in cl.members.iter().enumerate() {
        let inv = 1.0 / members.len() as f64;
        for &i in members {
            for d in 0..dim {
                grad[(i, d)] += mean_grads[ci][d] * inv;
            }
        }
    }
    Ok(grad)
}

/// Discriminative loss as a differentiable tape node.
pub fn discriminative_on_tape(
    tape: &mut Tape,
    embedding: NodeId,
    instance_labels: &[u32],
    p: &DiscriminativeParams,
) -> Result<NodeId> {
    let value = discriminative(tape.value(embedding), instance_labels, p)?;
    let labels = instance_labels.to_vec();
    let params = *p;
    tape.custom_scalar(
        embedding,
        "discriminative",
        value,
        Box::new(move |m| discriminative_grad(m, &labels, &params)),
    )
}

/// `L = L_sem + L_ins` on the tape; both gradients flow.
pub fn total_loss_on_tape(tape: &mut Tape, l_sem: NodeId, l_ins: NodeId) -> Result<NodeId> {
    tape.add(l_sem, l_ins)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn uniform_logits_give_log_num_classes() {
        let logits = Matrix::zeros(5, 4);
        let labels = vec![0, 1, 2, 3, 0];
        let loss = cross_entropy(&logits, &labels).unwrap();
        assert!((loss - 4.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn confident_correct_logits_drive_loss_to_zero() {
        let mut logits = Matrix::zeros(3, 3);
        for r in 0..3 {
            logits[(r, r)] = 50.0;
        }
        let loss = cross_entropy(&logits, &[0, 1, 2]).unwrap();
        assert!(loss >= 0.0 && loss < 1e-12);
    }

    #[test]
    fn cross_entropy_matches_direct_formula() {
        // oracle: independent naive per-point evaluation without max-shift
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let logits = Matrix::random(6, 3, -2.0, 2.0, &mut rng);
        let labels: Vec<u32> = (0..6).map(|_| rng.random_range(0..3)).collect();
        let loss = cross_entropy(&logits, &labels).unwrap();

        let mut naive = 0.0;
        for (r, &l) in labels.iter().enumerate() {
            let exps: Vec<f64> = logits.row(r).iter().map(|v| v.exp()).collect();
            let sum: f64 = exps.iter().sum();
            naive += -(exps[l as usize] / sum).ln();
        }
        naive /= 6.0;
        assert!((loss - naive).abs() < 1e-12);
    }

    #[test]
    fn out_of_range_label_errors() {
        let logits = Matrix::zeros(2, 3);
        assert!(matches!(
            cross_entropy(&logits, &[0, 3]),
            Err(Error::Label { label: 3, .. })
        ));
    }

    #[test]
    fn cross_entropy_gradient_matches_finite_differences() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let logits = Matrix::random(4, 3, -1.0, 1.0, &mut rng);
        let labels = vec![2, 0, 1, 1];
        let grad = cross_entropy_grad(&logits, &labels).unwrap();
        let h = 1e-5;
        for i in 0..logits.len() {
            let mut plus = logits.clone();
            plus.data_mut()[i] += h;
            let mut minus = logits.clone();
            minus.data_mut()[i] -= h;
            let fd = (cross_entropy(&plus, &labels).unwrap()
                - cross_entropy(&minus, &labels).unwrap())
                / (2.0 * h);
            let a = grad.data()[i];
            assert!((a - fd).abs() / a.abs().max(fd.abs()).max(1.0) < 1e-4);
        }
    }

    #[test]
    fn single_tight_instance_at_origin_has_zero_loss() {
        let emb = Matrix::zeros(4, 3);
        let labels = vec![7, 7, 7, 7];
        let p = DiscriminativeParams::default();
        let b = discriminative_components(&emb, &labels, &p).unwrap();
        assert_eq!(b.l_var, 0.0);
        assert_eq!(b.l_dist, 0.0);
        assert_eq!(b.l_reg, 0.0);
        assert_eq!(b.total, 0.0);
    }

    #[test]
    fn separated_tight_clusters_leave_only_regularizer() {
        // means at (2, 0) and (-2, 0): L1 separation 4 > 2 * delta_d = 3,
        // every point exactly at its mean, so only L_reg is active.
        let emb = Matrix::from_rows(&[
            &[2.0, 0.0],
            &[2.0, 0.0],
            &[-2.0, 0.0],
            &[-2.0, 0.0],
        ])
        .unwrap();
        let labels = vec![0, 0, 1, 1];
        let p = DiscriminativeParams::default();
        let b = discriminative_components(&emb, &labels, &p).unwrap();
        assert_eq!(b.l_var, 0.0);
        assert_eq!(b.l_dist, 0.0);
        let expected_reg = (2.0 + 2.0) / 2.0; // mean of L1 norms of the means
        assert!((b.l_reg - expected_reg).abs() < 1e-15);
        assert!((b.total - p.gamma * expected_reg).abs() < 1e-15);
    }

    /// Naive independent three-term oracle.
    fn discriminative_oracle(emb: &Matrix, labels: &[u32], p: &DiscriminativeParams) -> f64 {
        let mut ids: Vec<u32> = labels.to_vec();
        ids.sort_unstable();
        ids.dedup();
        let c = ids.len() as f64;
        let dist = |v: &[f64]| match p.norm {
            DistanceNorm::L1 => v.iter().map(|x| x.abs()).sum::<f64>(),
            DistanceNorm::L2 => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
        };
        let mean_of = |id: u32| -> Vec<f64> {
            let idx: Vec<usize> = labels
                .iter()
                .enumerate()
                .filter(|(_, &l)| l == id)
                .map(|(i, _)| i)
                .collect();
            let mut m = vec![0.0; emb.cols()];
            for &i in &idx {
                for (mm, v) in m.iter_mut().zip(emb.row(i)) {
                    *mm += v / idx.len() as f64;
                }
            }
            m
        };
        let mut l_var = 0.0;
        for &id in &ids {
            let m = mean_of(id);
            let idx: Vec<usize> = labels
                .iter()
                .enumerate()
                .filter(|(_, &l)| l == id)
                .map(|(i, _)| i)
                .collect();
            let mut acc = 0.0;
            for &i in &idx {
                let d: Vec<f64> = m.iter().zip(emb.row(i)).map(|(a, b)| a - b).collect();
                acc += ((dist(&d) - p.delta_v).max(0.0)).powi(2);
            }
            l_var += acc / idx.len() as f64;
        }
        l_var /= c;
        let mut l_dist = 0.0;
        if ids.len() > 1 {
            for &a in &ids {
                for &b in &ids {
                    if a == b {
                        continue;
                    }
                    let d: Vec<f64> = mean_of(a)
                        .iter()
                        .zip(mean_of(b).iter())
                        .map(|(x, y)| x - y)
                        .collect();
                    l_dist += ((2.0 * p.delta_d - dist(&d)).max(0.0)).powi(2);
                }
            }
            l_dist /= c * (c - 1.0);
        }
        let l_reg = ids.iter().map(|&id| dist(&mean_of(id))).sum::<f64>() / c;
        p.alpha * l_var + p.beta * l_dist + p.gamma * l_reg
    }

    #[test]
    fn random_case_matches_three_term_oracle() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let emb = Matrix::random(10, 4, -1.0, 1.0, &mut rng);
        let labels: Vec<u32> = (0..10).map(|_| rng.random_range(0..3)).collect();
        for norm in [DistanceNorm::L1, DistanceNorm::L2] {
            let p = DiscriminativeParams {
                norm,
                ..DiscriminativeParams::default()
            };
            let got = discriminative(&emb, &labels, &p).unwrap();
            let want = discriminative_oracle(&emb, &labels, &p);
            assert!((got - want).abs() < 1e-12, "{norm:?}: {got} vs {want}");
            assert!(got >= 0.0);
        }
    }

    #[test]
    fn empty_instance_set_errors() {
        let emb = Matrix::zeros(0, 3);
        assert!(matches!(
            discriminative(&emb, &[], &DiscriminativeParams::default()),
            Err(Error::Input { .. })
        ));
    }

    #[test]
    fn single_instance_skips_distance_term() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let emb = Matrix::random(5, 3, -1.0, 1.0, &mut rng);
        let b =
            discriminative_components(&emb, &[4, 4, 4, 4, 4], &DiscriminativeParams::default())
                .unwrap();
        assert_eq!(b.l_dist, 0.0);
    }

    #[test]
    fn permutation_and_relabeling_invariance() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let emb = Matrix::random(8, 3, -1.0, 1.0, &mut rng);
        let labels = vec![0, 1, 0, 2, 1, 2, 0, 1];
        let p = DiscriminativeParams::default();
        let base = discriminative(&emb, &labels, &p).unwrap();

        // permute points
        let perm = vec![5, 2, 7, 0, 3, 6, 1, 4];
        let emb_p = emb.permute_rows(&perm).unwrap();
        let labels_p: Vec<u32> = perm.iter().map(|&i| labels[i]).collect();
        let permuted = discriminative(&emb_p, &labels_p, &p).unwrap();
        assert!((base - permuted).abs() < 1e-12);

        // relabel instance ids
        let labels_r: Vec<u32> = labels.iter().map(|&l| [40, 7, 19][l as usize]).collect();
        let relabeled = discriminative(&emb, &labels_r, &p).unwrap();
        assert!((base - relabeled).abs() < 1e-12);
    }

    #[test]
    fn translation_moves_only_the_regularizer() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let emb = Matrix::random(6, 3, -1.0, 1.0, &mut rng);
        let labels = vec![0, 0, 1, 1, 2, 2];
        let p = DiscriminativeParams::default();
        let base = discriminative_components(&emb, &labels, &p).unwrap();

        let mut shifted = emb.clone();
        for r in 0..6 {
            for c in 0..3 {
                shifted[(r, c)] += 10.0;
            }
        }
        let moved = discriminative_components(&shifted, &labels, &p).unwrap();
        assert!((base.l_var - moved.l_var).abs() < 1e-9);
        assert!((base.l_dist - moved.l_dist).abs() < 1e-9);
        assert!((moved.l_reg - base.l_reg).abs() > 1.0);
    }

    #[test]
    fn discriminative_gradient_matches_finite_differences() {
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        for norm in [DistanceNorm::L1, DistanceNorm::L2] {
            let p = DiscriminativeParams {
                norm,
                ..DiscriminativeParams::default()
            };
            let emb = Matrix::random(8, 3, -1.0, 1.0, &mut rng);
            let labels: Vec<u32> = (0..8).map(|_| rng.random_range(0..3)).collect();
            let grad = discriminative_grad(&emb, &labels, &p).unwrap();
            let h = 1e-5;
            for i in 0..emb.len() {
                let mut plus = emb.clone();
                plus.data_mut()[i] += h;
                let mut minus = emb.clone();
                minus.data_mut()[i] -= h;
                let fd = (discriminative(&plus, &labels, &p).unwrap()
                    - discriminative(&minus, &labels, &p).unwrap())
                    / (2.0 * h);
                let a = grad.data()[i];
                assert!(
                    (a - fd).abs() / a.abs().max(fd.abs()).max(1.0) < 1e-4,
                    "{norm:?} entry {i}: {a} vs {fd}"
                );
            }
        }
    }

    #[test]
    fn total_loss_is_sum_of_terms() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let logits = Matrix::random(6, 3, -1.0, 1.0, &mut rng);
        let emb = Matrix::random(6, 4, -1.0, 1.0, &mut rng);
        let sem_labels: Vec<u32> = (0..6).map(|_| rng.random_range(0..3)).collect();
        let inst_labels: Vec<u32> = (0..6).map(|_| rng.random_range(0..2)).collect();
        let p = DiscriminativeParams::default();

        let mut tape = Tape::new();
        let ln = tape.leaf(logits.clone());
        let en = tape.leaf(emb.clone());
        let l_sem = cross_entropy_on_tape(&mut tape, ln, &sem_labels).unwrap();
        let l_ins = discriminative_on_tape(&mut tape, en, &inst_labels, &p).unwrap();
        let total = total_loss_on_tape(&mut tape, l_sem, l_ins).unwrap();

        let expect = cross_entropy(&logits, &sem_labels).unwrap()
            + discriminative(&emb, &inst_labels, &p).unwrap();
        assert!((tape.scalar(total).unwrap() - expect).abs() < 1e-12);

        // both gradients flow through the sum
        tape.backward(total).unwrap();
        assert!(tape.grad(ln).is_some());
        assert!(tape.grad(en).is_some());
    }

    #[test]
    fn warning_when_margins_overlap() {
        let p = DiscriminativeParams {
            delta_v: 1.0,
            delta_d: 1.5,
            ..DiscriminativeParams::default()
        };
        assert!(!p.warnings().is_empty());
        assert!(DiscriminativeParams::default().warnings().is_empty());
    }
}
