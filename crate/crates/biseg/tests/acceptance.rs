//! Acceptance suite: one test per criterion, each printing a pass line.
//!
//! Oracles in this file are written independently of the library paths they
//! check: hash-set IoU counting for the metrics, a from-scratch greedy
//! matcher for precision/recall, naive per-class counting for the semantic
//! scores.

use biseg::attention::{
    bi_directional, similarity, AttentionWeights, BiDirConfig, BiDirMode, BiDirWeights,
};
use biseg::cluster::{block_merging, mean_shift, BlockPrediction, MergeConfig};
use biseg::config::RunConfig;
use biseg::data::{ClassSpec, PointCloud, Primitive, SceneSpec};
use biseg::gradcheck;
use biseg::loss::{discriminative_components, DiscriminativeParams};
use biseg::metrics::{coverage, prec_recall, semantic_scores, LabeledRegions};
use biseg::pipeline;
use biseg::tensor::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::time::Instant;

fn pass(criterion: u32, name: &str) {
    println!("ACCEPTANCE {criterion} ({name}): PASS");
}

// ---------------------------------------------------------------------------
// 1. Simplified-attention gradient correctness.
// ---------------------------------------------------------------------------

#[test]
fn criterion_1_simplified_gradients() {
    let start = Instant::now();
    let kron = gradcheck::check_simplified_kronecker(3, 0.0).unwrap();
    assert!(kron.iter().any(|r| r.check.contains("N=1")));
    assert!(kron.iter().any(|r| r.check.contains("N=2")));
    assert!(kron.iter().any(|r| r.check.contains("N=3")));
    for row in &kron {
        assert!(row.pass, "kronecker equality failed: {row:?}");
        assert!(row.tol <= 1e-10);
    }
    let fd = gradcheck::check_simplified_fd(20, 0.0).unwrap();
    assert_eq!(fd.len(), 40, "20 cases, grad_x and grad_y each");
    for row in &fd {
        assert!(row.pass, "finite-difference check failed: {row:?}");
        assert!(row.tol <= 1e-6);
    }
    let elapsed = start.elapsed();
    assert!(
        elapsed.as_secs_f64() < 10.0,
        "criterion 1 must finish within 10 s, took {elapsed:?}"
    );
    pass(1, "simplified-attention gradients");
}

// ---------------------------------------------------------------------------
// 2. Full-model gradient check.
// ---------------------------------------------------------------------------

#[test]
fn criterion_2_full_model_gradients() {
    let start = Instant::now();
    let cfg = biseg::backbone::BackboneConfig {
        input_dim: 6,
        hidden: vec![5, 6],
        n_s: 6,
        n_i: 5,
        n_e: 3,
        n_c: 3,
        d_k: 4,
        head_hidden: 4,
    };
    let bidir = BiDirConfig::default();
    for seed in 0..5u64 {
        let row = gradcheck::check_full_model(&cfg, &bidir, seed, 8, 0.0).unwrap();
        assert!(row.pass, "full-model gradients failed: {row:?}");
        assert!(row.tol <= 1e-4);
    }
    let elapsed = start.elapsed();
    assert!(
        elapsed.as_secs_f64() < 120.0,
        "criterion 2 must finish within 2 min, took {elapsed:?}"
    );
    pass(2, "full-model gradients across 5 seeds");
}

// ---------------------------------------------------------------------------
// 3. Similarity-matrix contract.
// ---------------------------------------------------------------------------

#[test]
fn criterion_3_similarity_contract() {
    let mut rng = ChaCha20Rng::seed_from_u64(0xc3);
    for case in 0..100 {
        let n = rng.random_range(1..=10);
        let n_x = rng.random_range(1..=5);
        let d_k = rng.random_range(1..=6);
        let w = AttentionWeights::init(n_x, n_x, d_k, &mut rng);
        let x = Matrix::random(n, n_x, -3.0, 3.0, &mut rng);

        let p = similarity(&x, &w).unwrap();
        for r in 0..n {
            let sum: f64 = p.matrix().row(r).iter().sum();
            assert!((sum - 1.0).abs() < 1e-9, "case {case} row {r} sums to {sum}");
            assert!(p.matrix().row(r).iter().all(|&v| (0.0..=1.0).contains(&v)));
        }

        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = rng.random_range(0..=i);
            perm.swap(i, j);
        }
        let xp = x.permute_rows(&perm).unwrap();
        let pp = similarity(&xp, &w).unwrap();
        for a in 0..n {
            for b in 0..n {
                assert_eq!(
                    pp.matrix()[(a, b)].to_bits(),
                    p.matrix()[(perm[a], perm[b])].to_bits(),
                    "case {case}: equivariance not bit-exact"
                );
            }
        }
    }
    pass(3, "similarity rows stochastic + bit-exact equivariance");
}

// ---------------------------------------------------------------------------
// 4. Metrics oracle equivalence.
// ---------------------------------------------------------------------------

fn group_sets(instances: &[u32]) -> Vec<(u32, HashSet<usize>)> {
    let mut by_id: BTreeMap<u32, HashSet<usize>> = BTreeMap::new();
    for (i, &id) in instances.iter().enumerate() {
        by_id.entry(id).or_default().insert(i);
    }
    by_id.into_iter().collect()
}

fn set_iou(a: &HashSet<usize>, b: &HashSet<usize>) -> f64 {
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    inter as f64 / union as f64
}

fn majority_class(points: &HashSet<usize>, classes: &[u32]) -> u32 {
    let mut votes: BTreeMap<u32, u32> = BTreeMap::new();
    for &p in points {
        *votes.entry(classes[p]).or_insert(0) += 1;
    }
    let mut best = (0u32, 0u32);
    for (&c, &n) in &votes {
        if n > best.1 {
            best = (c, n);
        }
    }
    best.0
}

fn coverage_oracle(gt_inst: &[u32], pred_inst: &[u32]) -> (f64, f64) {
    let gt = group_sets(gt_inst);
    let pred = group_sets(pred_inst);
    let total: usize = gt.iter().map(|(_, s)| s.len()).sum();
    let mut cov = 0.0;
    let mut wcov = 0.0;
    for (_, g) in &gt {
        let best = pred.iter().map(|(_, o)| set_iou(g, o)).fold(0.0, f64::max);
        cov += best;
        wcov += best * g.len() as f64;
    }
    (cov / gt.len() as f64, wcov / total as f64)
}

fn prec_recall_oracle(
    gt_classes: &[u32],
    gt_inst: &[u32],
    pred_classes: &[u32],
    pred_inst: &[u32],
    threshold: f64,
) -> (f64, f64) {
    let gt = group_sets(gt_inst);
    let pred = group_sets(pred_inst);
    let gt_class: Vec<u32> = gt.iter().map(|(_, s)| majority_class(s, gt_classes)).collect();
    let pred_class: Vec<u32> = pred
        .iter()
        .map(|(_, s)| majority_class(s, pred_classes))
        .collect();

    let classes: BTreeSet<u32> = gt_class.iter().copied().collect();
    let mut prec_sum = 0.0;
    let mut rec_sum = 0.0;
    for &class in &classes {
        let gt_idx: Vec<usize> = (0..gt.len()).filter(|&i| gt_class[i] == class).collect();
        let pred_idx: Vec<usize> = (0..pred.len()).filter(|&i| pred_class[i] == class).collect();
        let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
        for (gi, &g) in gt_idx.iter().enumerate() {
            for (pi, &p) in pred_idx.iter().enumerate() {
                let v = set_iou(&gt[g].1, &pred[p].1);
                if v >= threshold {
                    candidates.push((v, gi, pi));
                }
            }
        }
        candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut gt_used = vec![false; gt_idx.len()];
        let mut pred_used = vec![false; pred_idx.len()];
        let mut tp = 0usize;
        for (_, gi, pi) in candidates {
            if !gt_used[gi] && !pred_used[pi] {
                gt_used[gi] = true;
                pred_used[pi] = true;
                tp += 1;
            }
        }
        prec_sum += if pred_idx.is_empty() {
            0.0
        } else {
            tp as f64 / pred_idx.len() as f64
        };
        rec_sum += tp as f64 / gt_idx.len() as f64;
    }
    (prec_sum / classes.len() as f64, rec_sum / classes.len() as f64)
}

fn semantic_oracle(gt: &[u32], pred: &[u32], n_c: usize) -> (f64, f64, f64) {
    let total = gt.len() as f64;
    let correct = gt.iter().zip(pred.iter()).filter(|(a, b)| a == b).count() as f64;
    let o_acc = correct / total;
    let mut m_acc = 0.0;
    let mut m_iou = 0.0;
    let mut present = 0usize;
    for c in 0..n_c as u32 {
        let gt_c: HashSet<usize> = gt
            .iter()
            .enumerate()
            .filter(|(_, &g)| g == c)
            .map(|(i, _)| i)
            .collect();
        if gt_c.is_empty() {
            continue;
        }
        present += 1;
        let pred_c: HashSet<usize> = pred
            .iter()
            .enumerate()
            .filter(|(_, &p)| p == c)
            .map(|(i, _)| i)
            .collect();
        let tp = gt_c.intersection(&pred_c).count() as f64;
        m_acc += tp / gt_c.len() as f64;
        let union = gt_c.union(&pred_c).count() as f64;
        m_iou += if union == 0.0 { 0.0 } else { tp / union };
    }
    (o_acc, m_acc / present as f64, m_iou / present as f64)
}

#[test]
fn criterion_4_metrics_match_bruteforce_oracles() {
    let mut rng = ChaCha20Rng::seed_from_u64(0xc4);
    for case in 0..200 {
        let n = rng.random_range(1..=30);
        let n_c = rng.random_range(2..=4) as usize;
        let classes: Vec<u32> = (0..n).map(|_| rng.random_range(0..n_c as u32)).collect();
        let pred_classes: Vec<u32> = (0..n).map(|_| rng.random_range(0..n_c as u32)).collect();
        let gt_inst: Vec<u32> = (0..n).map(|_| rng.random_range(0..6)).collect();
        let pred_inst: Vec<u32> = (0..n).map(|_| rng.random_range(0..6)).collect();

        let gt = LabeledRegions::from_labels(&classes, &gt_inst).unwrap();
        let pred = LabeledRegions::from_labels(&pred_classes, &pred_inst).unwrap();

        let (cov, wcov) = coverage(&gt, &pred).unwrap();
        let (cov_o, wcov_o) = coverage_oracle(&gt_inst, &pred_inst);
        assert_eq!(cov, cov_o, "case {case}: Cov");
        assert_eq!(wcov, wcov_o, "case {case}: WCov");

        let (p, r) = prec_recall(&gt, &pred, 0.5).unwrap();
        let (p_o, r_o) = prec_recall_oracle(&classes, &gt_inst, &pred_classes, &pred_inst, 0.5);
        assert_eq!(p, p_o, "case {case}: mPrec");
        assert_eq!(r, r_o, "case {case}: mRec");

        let (oa, ma, mi) = semantic_scores(&classes, &pred_classes, n_c).unwrap();
        let (oa_o, ma_o, mi_o) = semantic_oracle(&classes, &pred_classes, n_c);
        assert_eq!(oa, oa_o, "case {case}: oAcc");
        assert_eq!(ma, ma_o, "case {case}: mAcc");
        assert_eq!(mi, mi_o, "case {case}: mIoU");

        // identity predictions score 1.0 on every metric
        let (cov_i, wcov_i) = coverage(&gt, &gt).unwrap();
        assert_eq!((cov_i, wcov_i), (1.0, 1.0));
        let (p_i, r_i) = prec_recall(&gt, &gt, 0.5).unwrap();
        assert_eq!((p_i, r_i), (1.0, 1.0));
        let (oa_i, ma_i, mi_i) = semantic_scores(&classes, &classes, n_c).unwrap();
        assert_eq!((oa_i, ma_i, mi_i), (1.0, 1.0, 1.0));
    }
    pass(4, "metrics equal brute-force oracles on 200 labelings");
}

// ---------------------------------------------------------------------------
// 5. Discriminative-loss analytic fixtures.
// ---------------------------------------------------------------------------

#[test]
fn criterion_5_discriminative_fixtures() {
    let p = DiscriminativeParams::default();

    // all points of one instance at its mean, mean at the origin
    let emb = Matrix::zeros(6, 3);
    let b = discriminative_components(&emb, &[3, 3, 3, 3, 3, 3], &p).unwrap();
    assert!(b.total.abs() < 1e-12, "single-instance fixture: {b:?}");

    // two tight clusters at (2, 0) and (-2, 0): L1 separation 4 > 2 * 1.5,
    // points exactly at the means, so only the regularizer is active
    let emb = Matrix::from_rows(&[
        &[2.0, 0.0],
        &[2.0, 0.0],
        &[2.0, 0.0],
        &[-2.0, 0.0],
        &[-2.0, 0.0],
        &[-2.0, 0.0],
    ])
    .unwrap();
    let b = discriminative_components(&emb, &[0, 0, 0, 1, 1, 1], &p).unwrap();
    assert!(b.l_var.abs() < 1e-12);
    assert!(b.l_dist.abs() < 1e-12);
    let expected = p.gamma * 2.0; // gamma * mean(||mu_c||_1) = gamma * (2 + 2) / 2
    assert!(
        (b.total - expected).abs() < 1e-12,
        "closed form {expected}, got {}",
        b.total
    );
    pass(5, "hinge-inactive closed forms within 1e-12");
}

// ---------------------------------------------------------------------------
// 6. End-to-end synthetic learning.
// ---------------------------------------------------------------------------

fn e2e_spec(seed: u64) -> SceneSpec {
    SceneSpec {
        classes: vec![
            ClassSpec {
                name: "floor".into(),
                primitive: Primitive::Plane,
                instances: [1, 1],
                points: [160, 200],
                size: [2.2, 2.5],
            },
            ClassSpec {
                name: "object".into(),
                primitive: Primitive::Box,
                instances: [2, 2],
                points: [100, 140],
                size: [0.4, 0.5],
            },
        ],
        extent: [2.5, 2.5, 1.2],
        noise: 0.01,
        // both same-class instances keep at least one mean-shift bandwidth
        // (0.6 m) of clearance
        min_gap: 1.0,
        colors: false,
        seed,
    }
}

fn e2e_config() -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.seed = 7;
    cfg.threads = 1;
    cfg.model.hidden = vec![32, 32, 64];
    cfg.model.n_s = 48;
    cfg.model.n_i = 48;
    cfg.model.n_e = 4;
    cfg.model.n_c = 2;
    cfg.model.d_k = 16;
    cfg.model.head_hidden = 32;
    cfg.optim.epochs = 20;
    cfg.blocks.points_per_block = 96;
    cfg
}

#[test]
fn criterion_6_synthetic_learning_trend() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let train_dir = dir.path().join("train");
    let test_dir = dir.path().join("test");
    pipeline::generate_dataset(&e2e_spec(41), &train_dir, 20).unwrap();
    pipeline::generate_dataset(&e2e_spec(4100), &test_dir, 5).unwrap();

    let cfg = e2e_config();
    assert_eq!(cfg.attention.mode, BiDirMode::BothStoiFirst);
    assert!(cfg.optim.epochs <= 20);

    let out_dir = dir.path().join("run");
    let outcome = pipeline::train(&cfg, &train_dir, &out_dir, None).unwrap();
    let ck = biseg::checkpoint::Checkpoint::load(&outcome.best_checkpoint).unwrap();
    let (report, _) = pipeline::evaluate(&ck.model, &cfg, &test_dir, 1).unwrap();

    println!(
        "criterion 6: test oAcc = {:.4}, mWCov = {:.4} after {} epochs ({:.1?})",
        report.o_acc,
        report.m_wcov,
        outcome.log.len(),
        start.elapsed()
    );
    assert!(
        report.o_acc >= 0.95,
        "test oAcc {:.4} below 0.95",
        report.o_acc
    );
    assert!(
        report.m_wcov >= 0.80,
        "test mWCov {:.4} below 0.80",
        report.m_wcov
    );
    let elapsed = start.elapsed();
    assert!(
        elapsed.as_secs_f64() < 900.0,
        "criterion 6 must finish within 15 min, took {elapsed:?}"
    );
    pass(6, "synthetic two-instance learning reaches thresholds");
}

// ---------------------------------------------------------------------------
// 7. Ablation harness completeness.
// ---------------------------------------------------------------------------

#[test]
fn criterion_7_ablation_harness() {
    let dir = tempfile::tempdir().unwrap();
    let train_dir = dir.path().join("train");
    let test_dir = dir.path().join("test");
    pipeline::generate_dataset(&e2e_spec(900), &train_dir, 2).unwrap();
    pipeline::generate_dataset(&e2e_spec(950), &test_dir, 1).unwrap();

    let mut cfg = e2e_config();
    cfg.optim.epochs = 1;
    cfg.model.hidden = vec![8, 8];
    cfg.model.n_s = 8;
    cfg.model.n_i = 8;
    cfg.model.d_k = 4;
    cfg.model.head_hidden = 4;
    cfg.blocks.points_per_block = 48;

    let out_dir = dir.path().join("ablation");
    let report = pipeline::ablate(&cfg, &train_dir, &test_dir, &out_dir).unwrap();

    assert_eq!(report.rows.len(), 6, "one row per attention mode");
    let got: BTreeSet<&str> = report.rows.iter().map(|r| r.mode.as_str()).collect();
    let want: BTreeSet<&str> = BiDirMode::ALL.iter().map(|m| m.as_str()).collect();
    assert_eq!(got, want);
    for row in &report.rows {
        for v in [row.m_cov, row.m_wcov, row.m_prec, row.m_rec, row.m_acc, row.m_iou, row.o_acc] {
            assert!((0.0..=1.0).contains(&v));
        }
        // per-mode config archived alongside its artifacts
        assert!(out_dir.join(&row.mode).join("config.toml").exists());
    }
    assert!(out_dir.join("ablation.txt").exists());
    assert!(out_dir.join("ablation.json").exists());

    // self-attention ignores the cross-branch input, bit-exactly
    let mut rng = ChaCha20Rng::seed_from_u64(0xc7);
    let sa = BiDirConfig {
        mode: BiDirMode::SelfAttention,
        use_updated_features: false,
    };
    let w = BiDirWeights::init(&sa, 5, 4, 3, &mut rng);
    let s = Matrix::random(6, 5, -1.0, 1.0, &mut rng);
    let i = Matrix::random(6, 4, -1.0, 1.0, &mut rng);
    let i_other = Matrix::random(6, 4, -1.0, 1.0, &mut rng);
    let s_other = Matrix::random(6, 5, -1.0, 1.0, &mut rng);
    let base = bi_directional(&s, &i, &sa, &w).unwrap();
    let i_changed = bi_directional(&s, &i_other, &sa, &w).unwrap();
    assert_eq!(base.s_out, i_changed.s_out);
    let s_changed = bi_directional(&s_other, &i, &sa, &w).unwrap();
    assert_eq!(base.i_out, s_changed.i_out);
    pass(7, "six ablation rows + self-attention independence");
}

// ---------------------------------------------------------------------------
// 8. Clustering.
// ---------------------------------------------------------------------------

#[test]
fn criterion_8_clustering() {
    let bandwidth = 0.6;
    let separation = 10.0 * bandwidth;
    let mut rng = ChaCha20Rng::seed_from_u64(0xc8);
    for k in [1usize, 2, 3, 5] {
        // k tight blobs on a widely separated grid
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut truth = Vec::new();
        for c in 0..k {
            let center = [
                (c % 3) as f64 * separation,
                (c / 3) as f64 * separation,
                (c % 2) as f64 * separation,
            ];
            for _ in 0..14 {
                rows.push(
                    center
                        .iter()
                        .map(|&v| v + rng.random_range(-0.05..0.05))
                        .collect(),
                );
                truth.push(c as u32);
            }
        }
        let n = rows.len();
        let mut emb = Matrix::zeros(n, 3);
        for (i, r) in rows.iter().enumerate() {
            emb.row_mut(i).copy_from_slice(r);
        }

        let result = mean_shift(&emb, bandwidth).unwrap();
        assert_eq!(result.num_clusters(), k, "expected exactly {k} clusters");
        // each blob intact
        for c in 0..k {
            let ids: BTreeSet<u32> = (0..n)
                .filter(|&i| truth[i] == c as u32)
                .map(|i| result.assignments[i])
                .collect();
            assert_eq!(ids.len(), 1, "blob {c} split");
        }

        // permutation-stable partition
        let mut order: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = rng.random_range(0..=i);
            order.swap(i, j);
        }
        let shuffled = emb.permute_rows(&order).unwrap();
        let permuted = mean_shift(&shuffled, bandwidth).unwrap();
        assert_eq!(permuted.num_clusters(), k);
        for a in 0..n {
            for b in (a + 1)..n {
                let same_base = result.assignments[order[a]] == result.assignments[order[b]];
                let same_perm = permuted.assignments[a] == permuted.assignments[b];
                assert_eq!(same_base, same_perm, "partition changed under permutation");
            }
        }
    }

    // BlockMerging unifies one instance spanning two blocks
    let mut scene = PointCloud::empty();
    for i in 0..24 {
        scene.positions.push([i as f64 * 0.08, 0.3, 0.0]);
    }
    let a: Vec<usize> = (0..16).collect();
    let b: Vec<usize> = (8..24).collect();
    let pred_a = BlockPrediction {
        sampled: a.clone(),
        semantic: vec![1; a.len()],
        instance: vec![0; a.len()],
        embedding: None,
    };
    let pred_b = BlockPrediction {
        sampled: b.clone(),
        semantic: vec![1; b.len()],
        instance: vec![9; b.len()],
        embedding: None,
    };
    let merged = block_merging(&scene, &[pred_a, pred_b], &MergeConfig::default()).unwrap();
    let ids: BTreeSet<u32> = merged.instance.iter().copied().collect();
    assert_eq!(ids.len(), 1, "spanning instance must unify to one id");
    pass(8, "mean-shift exact k + block merging unification");
}

// ---------------------------------------------------------------------------
// 9. Determinism of commands.
// ---------------------------------------------------------------------------

fn run_cli(args: &[&str]) -> std::process::Output {
    std::process::Command::new(env!("CARGO_BIN_EXE_biseg"))
        .args(args)
        .env_remove("BISEG_CONFIG")
        .output()
        .expect("spawn biseg")
}

fn dir_bytes(dir: &std::path::Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().display().to_string();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

#[test]
fn criterion_9_command_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();

    for round in ["a", "b"] {
        let base = root.join(round);
        let data = base.join("data");
        let status = run_cli(&[
            "generate",
            "--out",
            data.to_str().unwrap(),
            "--count",
            "2",
            "--seed",
            "11",
        ]);
        assert!(status.status.success());
        let run = base.join("run");
        let status = run_cli(&[
            "train",
            "--data",
            data.to_str().unwrap(),
            "--out",
            run.to_str().unwrap(),
            "--epochs",
            "1",
            "--points-per-block",
            "48",
            "--batch-size",
            "4",
            "--seed",
            "5",
            "--threads",
            "1",
        ]);
        assert!(
            status.status.success(),
            "train failed: {}",
            String::from_utf8_lossy(&status.stderr)
        );
        let eval = base.join("eval");
        let status = run_cli(&[
            "eval",
            "--checkpoint",
            run.join("checkpoint_best.json").to_str().unwrap(),
            "--data",
            data.to_str().unwrap(),
            "--out",
            eval.to_str().unwrap(),
            "--threads",
            "1",
        ]);
        assert!(status.status.success());
        let sim = base.join("sim");
        let status = run_cli(&[
            "export-sim",
            "--checkpoint",
            run.join("checkpoint_best.json").to_str().unwrap(),
            "--scene",
            data.join("scene_0000.txt").to_str().unwrap(),
            "--point-index",
            "3",
            "--out",
            sim.to_str().unwrap(),
        ]);
        assert!(status.status.success());
        let grad = base.join("gradcheck.json");
        let status = run_cli(&[
            "gradcheck",
            "--fd-cases",
            "4",
            "--model-seeds",
            "0",
            "--points",
            "6",
            "--out",
            grad.to_str().unwrap(),
        ]);
        assert!(status.status.success());
    }

    let a = dir_bytes(&root.join("a"));
    let b = dir_bytes(&root.join("b"));
    assert_eq!(
        a.keys().collect::<Vec<_>>(),
        b.keys().collect::<Vec<_>>(),
        "runs produced different file sets"
    );
    for (name, bytes) in &a {
        assert_eq!(bytes, &b[name], "file {name} differs between identical runs");
    }
    pass(9, "generate/train/eval/export-sim/gradcheck bit-identical");
}
