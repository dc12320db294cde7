//! End-to-end orchestration: dataset preparation, training, evaluation,
//! inference, ablation over attention modes, and similarity-row export.
//!
//! Determinism: every random choice flows from the run seed through counter
//! based streams, and multi-threaded sections compute independent items
//! whose results merge in index order, so outputs are bit-identical for a
//! fixed config and seed at any thread count.

use crate::attention::{BiDirConfig, BiDirMode};
use crate::backbone::SegModel;
use crate::checkpoint::Checkpoint;
use crate::cluster::{
    block_features, block_merging, feature_dim, mean_shift, split_blocks, BlockPrediction,
    SegmentationResult,
};
use crate::config::RunConfig;
use crate::data::{generate_scene, load_cloud, save_cloud, CloudFormat, PointCloud, SceneSpec};
use crate::error::{Error, Result};
use crate::loss::{cross_entropy_on_tape, discriminative_on_tape, total_loss_on_tape};
use crate::metrics::{MetricsAccumulator, MetricsReport};
use crate::optim::AdamState;
use crate::tensor::{Matrix, Tape};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use std::io::Write as _;
use std::path::{Path, PathBuf};

// ---------------------------------------------------------------------------
// Dataset handling.
// ---------------------------------------------------------------------------

/// Scene files written by `generate` along with their recipe.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub count: usize,
    pub spec: SceneSpec,
    pub files: Vec<String>,
}

/// Write `count` labeled scenes plus a manifest into `out_dir`.
/// Scene `i` uses seed `spec.seed + i`.
pub fn generate_dataset(spec: &SceneSpec, out_dir: &Path, count: usize) -> Result<Manifest> {
    spec.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir.display().to_string(), e))?;
    let mut files = Vec::with_capacity(count);
    for i in 0..count {
        let scene_spec = SceneSpec {
            seed: spec.seed.wrapping_add(i as u64),
            ..spec.clone()
        };
        let cloud = generate_scene(&scene_spec)?;
        let name = format!("scene_{i:04}.txt");
        save_cloud(&cloud, &out_dir.join(&name), CloudFormat::Text)?;
        files.push(name);
    }
    let manifest = Manifest {
        count,
        spec: spec.clone(),
        files,
    };
    let body = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Io {
        path: out_dir.display().to_string(),
        detail: e.to_string(),
    })?;
    std::fs::write(out_dir.join("manifest.json"), body + "\n")
        .map_err(|e| Error::io(out_dir.display().to_string(), e))?;
    Ok(manifest)
}

/// Load every scene in a dataset directory: manifest order when a manifest
/// exists, otherwise `*.txt`/`*.json` sorted by name.
pub fn load_scenes(dir: &Path) -> Result<Vec<(String, PointCloud)>> {
    let manifest_path = dir.join("manifest.json");
    let names: Vec<String> = if manifest_path.exists() {
        let body = std::fs::read_to_string(&manifest_path)
            .map_err(|e| Error::io(manifest_path.display().to_string(), e))?;
        let manifest: Manifest = serde_json::from_str(&body).map_err(|e| Error::Parse {
            path: manifest_path.display().to_string(),
            line: e.line(),
            detail: e.to_string(),
        })?;
        manifest.files
    } else {
        let mut names: Vec<String> = std::fs::read_dir(dir)
            .map_err(|e| Error::io(dir.display().to_string(), e))?
            .filter_map(|entry| entry.ok())
            .map(|entry| entry.file_name().to_string_lossy().into_owned())
            .filter(|name| name.ends_with(".txt") || name.ends_with(".json"))
            .filter(|name| name != "manifest.json")
            .collect();
        names.sort();
        names
    };
    if names.is_empty() {
        return Err(Error::Input {
            detail: format!("no scene files found in {}", dir.display()),
        });
    }
    let mut scenes = Vec::with_capacity(names.len());
    for name in names {
        let path = dir.join(&name);
        let cloud = load_cloud(&path, CloudFormat::from_path(&path))?;
        scenes.push((name, cloud));
    }
    Ok(scenes)
}

fn require_labels(name: &str, cloud: &PointCloud) -> Result<()> {
    if cloud.semantic.is_none() || cloud.instance.is_none() {
        return Err(Error::Input {
            detail: format!("scene {name} lacks semantic/instance labels"),
        });
    }
    Ok(())
}

/// One network input: a block's features plus its labels.
#[derive(Clone, Debug)]
pub struct TrainItem {
    pub features: Matrix,
    pub semantic: Vec<u32>,
    pub instance: Vec<u32>,
}

/// Split labeled scenes into per-block training items.
pub fn prepare_items(scenes: &[(String, PointCloud)], cfg: &RunConfig) -> Result<Vec<TrainItem>> {
    let mut items = Vec::new();
    let block_cfg = cfg.block_config();
    for (name, cloud) in scenes {
        require_labels(name, cloud)?;
        let sem = cloud.semantic.as_ref().expect("checked");
        let inst = cloud.instance.as_ref().expect("checked");
        if let Some(&bad) = sem.iter().find(|&&s| s as usize >= cfg.model.n_c) {
            return Err(Error::Label {
                label: bad,
                num_classes: cfg.model.n_c,
            });
        }
        for block in split_blocks(cloud, &block_cfg)? {
            let features = block_features(cloud, &block, &block_cfg)?;
            items.push(TrainItem {
                features,
                semantic: block.sampled.iter().map(|&i| sem[i]).collect(),
                instance: block.sampled.iter().map(|&i| inst[i]).collect(),
            });
        }
    }
    Ok(items)
}

fn detect_input_dim(scenes: &[(String, PointCloud)], cfg: &RunConfig) -> Result<usize> {
    let with_color = scenes[0].1.colors.is_some();
    if scenes.iter().any(|(_, c)| c.colors.is_some() != with_color) {
        return Err(Error::Input {
            detail: "scenes disagree on color presence".into(),
        });
    }
    let derived = feature_dim(with_color);
    if let Some(configured) = cfg.model.input_dim {
        if configured != derived {
            return Err(Error::Config {
                detail: format!(
                    "configured input_dim {configured} does not match data features ({derived})"
                ),
            });
        }
    }
    Ok(derived)
}

// ---------------------------------------------------------------------------
// Ordered parallel map.
// ---------------------------------------------------------------------------

/// Apply `f` to every index, on `threads` workers, collecting results in
/// index order. Work is split in contiguous chunks, so the output is
/// independent of the thread count.
pub fn parallel_map<R: Send, F>(count: usize, threads: usize, f: F) -> Vec<R>
where
    F: Fn(usize) -> R + Sync,
{
    let threads = threads.max(1).min(count.max(1));
    if threads <= 1 || count <= 1 {
        return (0..count).map(f).collect();
    }
    let chunk = count.div_ceil(threads);
    let mut out: Vec<Option<R>> = (0..count).map(|_| None).collect();
    let slots: Vec<(usize, &mut [Option<R>])> = {
        let mut rest = out.as_mut_slice();
        let mut slots = Vec::new();
        let mut start = 0;
        while !rest.is_empty() {
            let take = chunk.min(rest.len());
            let (head, tail) = rest.split_at_mut(take);
            slots.push((start, head));
            start += take;
            rest = tail;
        }
        slots
    };
    std::thread::scope(|scope| {
        for (start, slot) in slots {
            let f = &f;
            scope.spawn(move || {
                for (offset, cell) in slot.iter_mut().enumerate() {
                    *cell = Some(f(start + offset));
                }
            });
        }
    });
    out.into_iter().map(|r| r.expect("worker filled slot")).collect()
}

// ---------------------------------------------------------------------------
// Training.
// ---------------------------------------------------------------------------

/// One line of the training log.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub l_sem: f64,
    pub l_ins: f64,
    pub total: f64,
    pub lr: f64,
    pub step: u64,
}

pub struct TrainOutcome {
    pub final_checkpoint: PathBuf,
    pub best_checkpoint: PathBuf,
    pub log: Vec<EpochRecord>,
    pub best_total: f64,
}

fn item_pass(
    model: &SegModel,
    item: &TrainItem,
    cfg: &RunConfig,
) -> Result<(f64, f64, Vec<Matrix>)> {
    let mut tape = Tape::new();
    let bound = model.bind(&mut tape);
    let nodes = model.forward_on_tape(&mut tape, &bound, &item.features)?;
    let l_sem = cross_entropy_on_tape(&mut tape, nodes.logits, &item.semantic)?;
    let l_ins = discriminative_on_tape(&mut tape, nodes.embedding, &item.instance, &cfg.loss)?;
    let total = total_loss_on_tape(&mut tape, l_sem, l_ins)?;
    let sem_value = tape.scalar(l_sem)?;
    let ins_value = tape.scalar(l_ins)?;
    tape.backward(total)?;
    Ok((sem_value, ins_value, model.collect_grads(&tape, &bound)))
}

/// Train a model from scratch or resume from `resume`; writes checkpoints,
/// the loss log, and the effective config into `out_dir`.
pub fn train(
    cfg: &RunConfig,
    data_dir: &Path,
    out_dir: &Path,
    resume: Option<&Path>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    for w in cfg.loss.warnings() {
        eprintln!("warning: {w}");
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir.display().to_string(), e))?;

    let scenes = load_scenes(data_dir)?;
    let input_dim = detect_input_dim(&scenes, cfg)?;
    let items = prepare_items(&scenes, cfg)?;
    if items.is_empty() {
        return Err(Error::Input {
            detail: "no training blocks produced".into(),
        });
    }

    let (mut model, mut adam, start_epoch) = match resume {
        Some(path) => {
            let ck = Checkpoint::load(path)?;
            if ck.model.cfg.input_dim != input_dim {
                return Err(Error::Config {
                    detail: format!(
                        "checkpoint expects input_dim {}, data provides {input_dim}",
                        ck.model.cfg.input_dim
                    ),
                });
            }
            let adam = ck.adam.clone().ok_or_else(|| Error::Config {
                detail: "checkpoint lacks optimizer state, cannot resume".into(),
            })?;
            (ck.model, adam, ck.epochs_completed)
        }
        None => {
            let model = SegModel::new(cfg.model.backbone(input_dim), cfg.attention, cfg.seed)?;
            let adam = AdamState::new(cfg.optim.adam(), &model.tensor_shapes());
            (model, adam, 0)
        }
    };

    cfg.save(&out_dir.join("config.toml"))?;
    let log_path = out_dir.join("train_log.jsonl");
    let mut log_file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&log_path)
        .map_err(|e| Error::io(log_path.display().to_string(), e))?;

    let final_path = out_dir.join("checkpoint_final.json");
    let best_path = out_dir.join("checkpoint_best.json");
    let mut log = Vec::new();
    let mut best_total = f64::INFINITY;
    // retained for recovery when a step produces non-finite values
    let mut last_good: Option<(SegModel, AdamState, usize)> = None;
    let threads = cfg.effective_threads();

    let end_epoch = start_epoch + cfg.optim.epochs;
    for epoch in start_epoch..end_epoch {
        let mut order: Vec<usize> = (0..items.len()).collect();
        let mut shuffle_rng =
            ChaCha20Rng::seed_from_u64(cfg.seed ^ SHUFFLE_STREAM ^ ((epoch as u64) << 1));
        for i in (1..order.len()).rev() {
            let j = shuffle_rng.random_range(0..=i);
            order.swap(i, j);
        }

        let mut sem_sum = 0.0;
        let mut ins_sum = 0.0;
        for batch in order.chunks(cfg.optim.batch_size) {
            let passes = parallel_map(batch.len(), threads, |k| {
                item_pass(&model, &items[batch[k]], cfg)
            });
            model.zero_grads();
            let factor = 1.0 / batch.len() as f64;
            for pass in passes {
                let (l_sem, l_ins, grads) = pass?;
                sem_sum += l_sem;
                ins_sum += l_ins;
                model.add_grad_tensors(&grads, factor)?;
            }
            if let Err(err) = model.adam_step(&mut adam) {
                // keep the last finished epoch on disk before aborting
                if let Some((m, a, e)) = last_good {
                    Checkpoint::new(cfg.clone(), m, Some(a), adam.step, e).save(&final_path)?;
                }
                return Err(err);
            }
        }

        let n = items.len() as f64;
        let record = EpochRecord {
            epoch,
            l_sem: sem_sum / n,
            l_ins: ins_sum / n,
            total: (sem_sum + ins_sum) / n,
            lr: adam.current_lr(),
            step: adam.step,
        };
        let line = serde_json::to_string(&record).map_err(|e| Error::Io {
            path: log_path.display().to_string(),
            detail: e.to_string(),
        })?;
        writeln!(log_file, "{line}").map_err(|e| Error::io(log_path.display().to_string(), e))?;

        if record.total < best_total {
            best_total = record.total;
            Checkpoint::new(cfg.clone(), model.clone(), Some(adam.clone()), adam.step, epoch + 1)
                .save(&best_path)?;
        }
        last_good = Some((model.clone(), adam.clone(), epoch + 1));
        log.push(record);
    }

    Checkpoint::new(cfg.clone(), model, Some(adam.clone()), adam.step, end_epoch)
        .save(&final_path)?;
    Ok(TrainOutcome {
        final_checkpoint: final_path,
        best_checkpoint: best_path,
        log,
        best_total,
    })
}

// keeps the epoch-shuffle stream apart from other users of the run seed
const SHUFFLE_STREAM: u64 = 0x73687566666c65;

// ---------------------------------------------------------------------------
// Inference and evaluation.
// ---------------------------------------------------------------------------

/// Full pipeline over one scene: blocks, forward, mean-shift, merge.
pub fn segment_scene(
    model: &SegModel,
    cfg: &RunConfig,
    scene: &PointCloud,
    threads: usize,
) -> Result<SegmentationResult> {
    let block_cfg = cfg.block_config();
    let blocks = split_blocks(scene, &block_cfg)?;
    let predictions: Vec<Result<BlockPrediction>> = parallel_map(blocks.len(), threads, |bi| {
        let block = &blocks[bi];
        let features = block_features(scene, block, &block_cfg)?;
        let out = model.forward(&features)?;
        let clusters = mean_shift(&out.embedding, cfg.cluster.bandwidth)?;
        Ok(BlockPrediction {
            sampled: block.sampled.clone(),
            semantic: out.predicted_classes(),
            instance: clusters.assignments,
            embedding: Some(out.embedding),
        })
    });
    let predictions: Vec<BlockPrediction> =
        predictions.into_iter().collect::<Result<Vec<_>>>()?;
    block_merging(scene, &predictions, &cfg.merge_config())
}

/// Per-scene evaluation summary.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SceneEval {
    pub name: String,
    pub cov: f64,
    pub wcov: f64,
    pub uncovered_points: usize,
}

/// Evaluate a model over every scene in a dataset.
pub fn evaluate(
    model: &SegModel,
    cfg: &RunConfig,
    data_dir: &Path,
    threads: usize,
) -> Result<(MetricsReport, Vec<SceneEval>)> {
    let scenes = load_scenes(data_dir)?;
    for (name, cloud) in &scenes {
        require_labels(name, cloud)?;
    }
    let results: Vec<Result<SegmentationResult>> = parallel_map(scenes.len(), threads, |si| {
        segment_scene(model, cfg, &scenes[si].1, 1)
    });

    let mut acc = MetricsAccumulator::new(cfg.model.n_c, cfg.eval.iou_threshold);
    let mut per_scene = Vec::new();
    for ((name, cloud), result) in scenes.iter().zip(results) {
        let result = result?;
        let gt_sem = cloud.semantic.as_ref().expect("checked");
        let gt_inst = cloud.instance.as_ref().expect("checked");
        acc.add_scene(
            gt_sem,
            gt_inst,
            &result.semantic,
            &result.instance,
            result.uncovered_points,
        )?;
        let gt = crate::metrics::LabeledRegions::from_labels(gt_sem, gt_inst)?;
        let pred = crate::metrics::LabeledRegions::from_labels(&result.semantic, &result.instance)?;
        let (cov, wcov) = crate::metrics::coverage(&gt, &pred)?;
        per_scene.push(SceneEval {
            name: name.clone(),
            cov,
            wcov,
            uncovered_points: result.uncovered_points,
        });
    }
    Ok((acc.report()?, per_scene))
}

/// Evaluation artifacts written to disk: text report, JSON report, config.
pub fn write_eval_outputs(
    out_dir: &Path,
    report: &MetricsReport,
    per_scene: &[SceneEval],
    cfg: &RunConfig,
) -> Result<()> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir.display().to_string(), e))?;
    std::fs::write(out_dir.join("report.txt"), report.render_text())
        .map_err(|e| Error::io(out_dir.display().to_string(), e))?;
    #[derive(Serialize)]
    struct FullReport<'a> {
        report: &'a MetricsReport,
        per_scene: &'a [SceneEval],
    }
    let body = serde_json::to_string_pretty(&FullReport { report, per_scene }).map_err(|e| {
        Error::Io {
            path: out_dir.display().to_string(),
            detail: e.to_string(),
        }
    })?;
    std::fs::write(out_dir.join("report.json"), body + "\n")
        .map_err(|e| Error::io(out_dir.display().to_string(), e))?;
    cfg.save(&out_dir.join("config.toml"))?;
    Ok(())
}

/// Run the pipeline on one scene and write the labeled cloud.
pub fn infer_to_file(
    model: &SegModel,
    cfg: &RunConfig,
    scene_path: &Path,
    out_path: &Path,
    threads: usize,
) -> Result<SegmentationResult> {
    let scene = load_cloud(scene_path, CloudFormat::from_path(scene_path))?;
    let result = segment_scene(model, cfg, &scene, threads)?;
    let labeled = PointCloud {
        positions: scene.positions.clone(),
        colors: scene.colors.clone(),
        semantic: Some(result.semantic.clone()),
        instance: Some(result.instance.clone()),
    };
    save_cloud(&labeled, out_path, CloudFormat::from_path(out_path))?;
    Ok(result)
}

// ---------------------------------------------------------------------------
// Ablation.
// ---------------------------------------------------------------------------

/// One mode's headline metrics.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AblationRow {
    pub mode: String,
    pub m_cov: f64,
    pub m_wcov: f64,
    pub m_prec: f64,
    pub m_rec: f64,
    pub m_acc: f64,
    pub m_iou: f64,
    pub o_acc: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<16} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7}\n",
            "mode", "mCov", "mWCov", "mPrec", "mRec", "mAcc", "mIoU", "oAcc"
        ));
        for r in &self.rows {
            out.push_str(&format!(
                "{:<16} {:>7.4} {:>7.4} {:>7.4} {:>7.4} {:>7.4} {:>7.4} {:>7.4}\n",
                r.mode, r.m_cov, r.m_wcov, r.m_prec, r.m_rec, r.m_acc, r.m_iou, r.o_acc
            ));
        }
        out
    }
}

/// Train and evaluate every attention mode on the same data and seed.
/// Each mode's artifacts land in `out_dir/<mode>/`.
pub fn ablate(
    cfg: &RunConfig,
    train_dir: &Path,
    test_dir: &Path,
    out_dir: &Path,
) -> Result<AblationReport> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir.display().to_string(), e))?;
    let mut rows = Vec::new();
    for mode in BiDirMode::ALL {
        let mode_cfg = RunConfig {
            attention: BiDirConfig {
                mode,
                use_updated_features: cfg.attention.use_updated_features,
            },
            ..cfg.clone()
        };
        let mode_dir = out_dir.join(mode.as_str());
        let outcome = train(&mode_cfg, train_dir, &mode_dir, None)?;
        let ck = Checkpoint::load(&outcome.best_checkpoint)?;
        let (report, per_scene) =
            evaluate(&ck.model, &mode_cfg, test_dir, mode_cfg.effective_threads())?;
        write_eval_outputs(&mode_dir.join("eval"), &report, &per_scene, &mode_cfg)?;
        rows.push(AblationRow {
            mode: mode.as_str().to_string(),
            m_cov: report.m_cov,
            m_wcov: report.m_wcov,
            m_prec: report.m_prec,
            m_rec: report.m_rec,
            m_acc: report.m_acc,
            m_iou: report.m_iou,
            o_acc: report.o_acc,
        });
    }
    let report = AblationReport { rows };
    std::fs::write(out_dir.join("ablation.txt"), report.render_text())
        .map_err(|e| Error::io(out_dir.display().to_string(), e))?;
    let body = serde_json::to_string_pretty(&report).map_err(|e| Error::Io {
        path: out_dir.display().to_string(),
        detail: e.to_string(),
    })?;
    std::fs::write(out_dir.join("ablation.json"), body + "\n")
        .map_err(|e| Error::io(out_dir.display().to_string(), e))?;
    Ok(report)
}

// ---------------------------------------------------------------------------
// Similarity-row export.
// ---------------------------------------------------------------------------

/// Features for a whole scene treated as one attention context; same channel
/// layout as block features with the footprint centered on the scene.
pub fn scene_features(scene: &PointCloud) -> Result<Matrix> {
    let (lo, hi) = scene.bounds()?;
    let ext = [
        (hi[0] - lo[0]).max(1e-9),
        (hi[1] - lo[1]).max(1e-9),
        (hi[2] - lo[2]).max(1e-9),
    ];
    let cx = (lo[0] + hi[0]) / 2.0;
    let cy = (lo[1] + hi[1]) / 2.0;
    let with_color = scene.colors.is_some();
    let mut out = Matrix::zeros(scene.len(), feature_dim(with_color));
    for i in 0..scene.len() {
        let p = scene.positions[i];
        let r = out.row_mut(i);
        r[0] = p[0] - cx;
        r[1] = p[1] - cy;
        r[2] = p[2] - lo[2];
        r[3] = (p[0] - lo[0]) / ext[0];
        r[4] = (p[1] - lo[1]) / ext[1];
        r[5] = (p[2] - lo[2]) / ext[2];
        if let Some(colors) = &scene.colors {
            let c = colors[i];
            r[6] = c[0];
            r[7] = c[1];
            r[8] = c[2];
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SimilarityExport {
    pub point_index: usize,
    pub threshold: f64,
    pub num_points: usize,
    pub semantic_similar: usize,
    pub instance_similar: usize,
}

/// Binarized similarity-row masks for one reference point over a whole
/// scene: (semantic mask, instance mask, threshold used). The threshold
/// defaults to `1 / N`, the uniform-attention level.
pub fn export_similarity_masks(
    model: &SegModel,
    scene: &PointCloud,
    point_index: usize,
    threshold: Option<f64>,
) -> Result<(Vec<bool>, Vec<bool>, f64)> {
    if point_index >= scene.len() {
        return Err(Error::Bounds {
            index: point_index,
            len: scene.len(),
        });
    }
    let features = scene_features(scene)?;
    let out = model.forward(&features)?;
    let (Some(p_sem), Some(p_inst)) = (out.p_sem, out.p_inst) else {
        return Err(Error::Config {
            detail: format!(
                "attention mode {} does not produce both similarity matrices",
                model.bidir.mode.as_str()
            ),
        });
    };
    let threshold = threshold.unwrap_or(1.0 / scene.len() as f64);
    let sem_mask = p_sem.row_mask(point_index, threshold)?;
    let inst_mask = p_inst.row_mask(point_index, threshold)?;
    Ok((sem_mask, inst_mask, threshold))
}

/// Export the similarity masks as labeled clouds: the mask in the `sem`
/// column, the selected point flagged in the `inst` column.
pub fn export_similarity(
    model: &SegModel,
    scene_path: &Path,
    point_index: usize,
    threshold: Option<f64>,
    out_dir: &Path,
) -> Result<SimilarityExport> {
    let scene = load_cloud(scene_path, CloudFormat::from_path(scene_path))?;
    let (sem_mask, inst_mask, threshold) =
        export_similarity_masks(model, &scene, point_index, threshold)?;

    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir.display().to_string(), e))?;
    let write_mask = |mask: &[bool], file: &str| -> Result<usize> {
        let marker: Vec<u32> = (0..scene.len())
            .map(|i| u32::from(i == point_index))
            .collect();
        let cloud = PointCloud {
            positions: scene.positions.clone(),
            colors: scene.colors.clone(),
            semantic: Some(mask.iter().map(|&m| u32::from(m)).collect()),
            instance: Some(marker),
        };
        save_cloud(&cloud, &out_dir.join(file), CloudFormat::Text)?;
        Ok(mask.iter().filter(|&&m| m).count())
    };
    let semantic_similar = write_mask(&sem_mask, "semantic_similarity.txt")?;
    let instance_similar = write_mask(&inst_mask, "instance_similarity.txt")?;

    let export = SimilarityExport {
        point_index,
        threshold,
        num_points: scene.len(),
        semantic_similar,
        instance_similar,
    };
    let body = serde_json::to_string_pretty(&export).map_err(|e| Error::Io {
        path: out_dir.display().to_string(),
        detail: e.to_string(),
    })?;
    std::fs::write(out_dir.join("export.json"), body + "\n")
        .map_err(|e| Error::io(out_dir.display().to_string(), e))?;
    Ok(export)
}
