//! Instance extraction: mean-shift over embeddings, block splitting of
//! scenes, and merging of per-block instance predictions into scene-level
//! instances.
//!
//! Mean-shift iterates every point's mode estimate against the fixed input
//! set with a flat kernel, merges converged modes, and assigns points to the
//! nearest surviving mode. All reductions run in canonical point order, so
//! the resulting partition is stable under permutation of the input.
//!
//! Block merging keeps a voxel grid of global instance ids. Each block's
//! local instances vote over the voxels they occupy: enough overlap with an
//! existing global instance adopts its id, anything else receives a fresh
//! id and claims its unoccupied voxels.

use crate::data::PointCloud;
use crate::error::{Error, Result};
use crate::tensor::{canonical_row_order, invert_permutation, Matrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashMap};

// ---------------------------------------------------------------------------
// Mean-shift.
// ---------------------------------------------------------------------------

/// Dense per-point cluster ids plus the surviving mode centers.
#[derive(Clone, Debug, PartialEq)]
pub struct ClusterResult {
    /// Cluster id per point, dense from 0 in first-appearance order.
    pub assignments: Vec<u32>,
    /// Mode center per cluster id.
    pub modes: Matrix,
}

impl ClusterResult {
    pub fn num_clusters(&self) -> usize {
        self.modes.rows()
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Flat-kernel mean-shift with the given bandwidth.
///
/// Per-point mode iteration stops when the shift drops below
/// `1e-4 * bandwidth` or after 300 iterations; converged modes closer than
/// `bandwidth / 2` merge; each point goes to the nearest surviving mode,
/// ties to the lowest mode index.
pub fn mean_shift(embedding: &Matrix, bandwidth: f64) -> Result<ClusterResult> {
    if bandwidth <= 0.0 {
        return Err(Error::Config {
            detail: format!("mean-shift bandwidth must be > 0, got {bandwidth}"),
        });
    }
    let n = embedding.rows();
    let dim = embedding.cols();
    if n == 0 {
        return Ok(ClusterResult {
            assignments: Vec::new(),
            modes: Matrix::zeros(0, dim),
        });
    }
    let order = canonical_row_order(&[embedding]);
    let inverse = invert_permutation(&order);
    let canon = embedding.permute_rows(&order)?;

    let bw_sq = bandwidth * bandwidth;
    let tol = 1e-4 * bandwidth;
    let max_iter = 300;

    // iterate each point's mode against the fixed canonical point set
    let mut modes: Vec<Vec<f64>> = Vec::with_capacity(n);
    for start in 0..n {
        let mut mode: Vec<f64> = canon.row(start).to_vec();
        for _ in 0..max_iter {
            let mut acc = vec![0.0; dim];
            let mut count = 0usize;
            for j in 0..n {
                if sq_dist(&mode, canon.row(j)) <= bw_sq {
                    for (a, v) in acc.iter_mut().zip(canon.row(j)) {
                        *a += v;
                    }
                    count += 1;
                }
            }
            // the window always contains the mode's own seed neighborhood
            debug_assert!(count > 0);
            for a in &mut acc {
                *a /= count as f64;
            }
            let shift = sq_dist(&acc, &mode).sqrt();
            mode = acc;
            if shift < tol {
                break;
            }
        }
        modes.push(mode);
    }

    // merge modes closer than bandwidth / 2, scan order = canonical
    let merge_sq = (bandwidth / 2.0) * (bandwidth / 2.0);
    let mut centers: Vec<Vec<f64>> = Vec::new();
    for mode in &modes {
        let hit = centers.iter().any(|c| sq_dist(c, mode) <= merge_sq);
        if !hit {
            centers.push(mode.clone());
        }
    }

    // nearest-center assignment, ties to the lowest center index
    let mut canon_assign = vec![0usize; n];
    for i in 0..n {
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for (k, c) in centers.iter().enumerate() {
            let d = sq_dist(canon.row(i), c);
            if d < best_d {
                best_d = d;
                best = k;
            }
        }
        canon_assign[i] = best;
    }

    // back to input order, renumber dense by first appearance
    let mut assignments = vec![u32::MAX; n];
    let mut renumber: Vec<Option<u32>> = vec![None; centers.len()];
    let mut next = 0u32;
    for i in 0..n {
        let center = canon_assign[inverse[i]];
        let id = *renumber[center].get_or_insert_with(|| {
            let id = next;
            next += 1;
            id
        });
        assignments[i] = id;
    }
    let mut mode_rows = Matrix::zeros(next as usize, dim);
    for (center, id) in renumber.iter().enumerate() {
        if let Some(id) = id {
            mode_rows
                .row_mut(*id as usize)
                .copy_from_slice(&centers[center]);
        }
    }
    Ok(ClusterResult {
        assignments,
        modes: mode_rows,
    })
}

// ---------------------------------------------------------------------------
// Block splitting.
// ---------------------------------------------------------------------------

/// Block grid parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockConfig {
    /// Footprint edge on the ground plane, meters.
    pub block_size: f64,
    /// Grid stride, meters.
    pub stride: f64,
    /// Network input size per block; short blocks pad by resampling.
    pub points_per_block: usize,
    /// Seed for the per-block subsampling.
    pub seed: u64,
}

impl Default for BlockConfig {
    fn default() -> Self {
        BlockConfig {
            block_size: 1.0,
            stride: 0.5,
            points_per_block: 4096,
            seed: 0,
        }
    }
}

impl BlockConfig {
    pub fn validate(&self) -> Result<()> {
        if self.block_size <= 0.0 || self.stride <= 0.0 || self.points_per_block == 0 {
            return Err(Error::Config {
                detail: "block size, stride, and points per block must be positive".into(),
            });
        }
        Ok(())
    }
}

/// One ground-plane block: footprint origin, every scene point inside it,
/// and the fixed-size sample fed to the network.
#[derive(Clone, Debug, PartialEq)]
pub struct Block {
    /// Ground-plane origin (x, y) in scene coordinates.
    pub origin: [f64; 2],
    /// Grid cell (ix, iy).
    pub cell: (usize, usize),
    /// Scene indices of all points in the footprint.
    pub indices: Vec<usize>,
    /// Scene indices of the sampled point set, length `points_per_block`.
    pub sampled: Vec<usize>,
}

fn axis_steps(extent: f64, block: f64, stride: f64) -> usize {
    if extent <= block {
        1
    } else {
        ((extent - block) / stride).ceil() as usize + 1
    }
}

/// Split a scene into overlapping ground-plane blocks covering every point.
pub fn split_blocks(scene: &PointCloud, cfg: &BlockConfig) -> Result<Vec<Block>> {
    cfg.validate()?;
    if scene.is_empty() {
        return Err(Error::Input {
            detail: "cannot split an empty scene".into(),
        });
    }
    let (lo, hi) = scene.bounds()?;
    let nx = axis_steps(hi[0] - lo[0], cfg.block_size, cfg.stride);
    let ny = axis_steps(hi[1] - lo[1], cfg.block_size, cfg.stride);

    let mut blocks = Vec::new();
    for ix in 0..nx {
        for iy in 0..ny {
            let ox = lo[0] + ix as f64 * cfg.stride;
            let oy = lo[1] + iy as f64 * cfg.stride;
            let indices: Vec<usize> = scene
                .positions
                .iter()
                .enumerate()
                .filter(|(_, p)| {
                    p[0] >= ox
                        && p[0] <= ox + cfg.block_size
                        && p[1] >= oy
                        && p[1] <= oy + cfg.block_size
                })
                .map(|(i, _)| i)
                .collect();
            if indices.is_empty() {
                continue;
            }
            let mut rng = ChaCha20Rng::seed_from_u64(
                cfg.seed ^ ((ix as u64) << 32) ^ (iy as u64) ^ 0xb10c,
            );
            let k = cfg.points_per_block;
            let sampled = if indices.len() >= k {
                // distinct subset via partial Fisher-Yates
                let mut pool = indices.clone();
                for i in 0..k {
                    let j = rng.random_range(i..pool.len());
                    pool.swap(i, j);
                }
                pool.truncate(k);
                pool
            } else {
                // everything once, then pad with replacement
                let mut s = indices.clone();
                while s.len() < k {
                    s.push(indices[rng.random_range(0..indices.len())]);
                }
                s
            };
            blocks.push(Block {
                origin: [ox, oy],
                cell: (ix, iy),
                indices,
                sampled,
            });
        }
    }
    Ok(blocks)
}

/// Count of grid cells (including empty ones) the splitter visits; the
/// closed-form block-count bound for a full scene.
pub fn grid_cell_count(extent_x: f64, extent_y: f64, cfg: &BlockConfig) -> usize {
    axis_steps(extent_x, cfg.block_size, cfg.stride) * axis_steps(extent_y, cfg.block_size, cfg.stride)
}

/// Per-point network features for a block sample: block-centered x/y,
/// ground-referenced z, scene-normalized coordinates, and color when present.
pub fn block_features(scene: &PointCloud, block: &Block, cfg: &BlockConfig) -> Result<Matrix> {
    let (lo, hi) = scene.bounds()?;
    let ext = [
        (hi[0] - lo[0]).max(1e-9),
        (hi[1] - lo[1]).max(1e-9),
        (hi[2] - lo[2]).max(1e-9),
    ];
    let cx = block.origin[0] + cfg.block_size / 2.0;
    let cy = block.origin[1] + cfg.block_size / 2.0;
    let with_color = scene.colors.is_some();
    let dim = if with_color { 9 } else { 6 };
    let mut out = Matrix::zeros(block.sampled.len(), dim);
    for (row, &idx) in block.sampled.iter().enumerate() {
        let p = scene.positions[idx];
        let r = out.row_mut(row);
        r[0] = p[0] - cx;
        r[1] = p[1] - cy;
        r[2] = p[2] - lo[2];
        r[3] = (p[0] - lo[0]) / ext[0];
        r[4] = (p[1] - lo[1]) / ext[1];
        r[5] = (p[2] - lo[2]) / ext[2];
        if let Some(colors) = &scene.colors {
            let c = colors[idx];
            r[6] = c[0];
            r[7] = c[1];
            r[8] = c[2];
        }
    }
    Ok(out)
}

/// Feature width [`block_features`] produces for a scene.
pub fn feature_dim(with_color: bool) -> usize {
    if with_color {
        9
    } else {
        6
    }
}

// ---------------------------------------------------------------------------
// Block merging.
// ---------------------------------------------------------------------------

/// Per-block network predictions over the block's sampled points.
#[derive(Clone, Debug)]
pub struct BlockPrediction {
    /// Scene indices, parallel to the label vectors.
    pub sampled: Vec<usize>,
    pub semantic: Vec<u32>,
    pub instance: Vec<u32>,
    /// Optional per-sampled-point embedding rows.
    pub embedding: Option<Matrix>,
}

/// Merge parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MergeConfig {
    /// Voxel edge for the overlap grid, meters.
    pub voxel_size: f64,
    /// Fraction of a fragment's voxels that must overlap an existing global
    /// instance for the fragment to adopt its id.
    pub overlap_threshold: f64,
}

impl Default for MergeConfig {
    fn default() -> Self {
        MergeConfig {
            voxel_size: 0.5,
            overlap_threshold: 0.3,
        }
    }
}

/// Scene-level labels after merging.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentationResult {
    pub semantic: Vec<u32>,
    pub instance: Vec<u32>,
    /// Per-point embedding from the first block that sampled the point;
    /// zero rows for points never sampled.
    pub embedding: Option<Matrix>,
    /// Points that no block prediction covered; they adopt the labels of
    /// the nearest covered point.
    pub uncovered_points: usize,
}

fn voxel_of(p: &[f64; 3], size: f64) -> (i64, i64, i64) {
    (
        (p[0] / size).floor() as i64,
        (p[1] / size).floor() as i64,
        (p[2] / size).floor() as i64,
    )
}

/// Merge per-block instance predictions into scene-level instances and
/// majority-vote per-point semantics.
pub fn block_merging(
    scene: &PointCloud,
    predictions: &[BlockPrediction],
    cfg: &MergeConfig,
) -> Result<SegmentationResult> {
    if cfg.voxel_size <= 0.0 || !(0.0..=1.0).contains(&cfg.overlap_threshold) {
        return Err(Error::Config {
            detail: "voxel size must be > 0 and overlap threshold within [0, 1]".into(),
        });
    }
    let n = scene.len();
    for (bi, p) in predictions.iter().enumerate() {
        if p.sampled.len() != p.semantic.len() || p.sampled.len() != p.instance.len() {
            return Err(Error::Input {
                detail: format!("block {bi} predictions are not parallel to its sample"),
            });
        }
        if let Some(idx) = p.sampled.iter().find(|&&i| i >= n) {
            return Err(Error::Bounds { index: *idx, len: n });
        }
    }

    // voxel -> (global instance id, fragment class); overlap votes only
    // count where classes agree, so touching objects of different classes
    // never merge through a shared voxel
    let mut grid: HashMap<(i64, i64, i64), (u32, u32)> = HashMap::new();
    let mut sem_votes: Vec<BTreeMap<u32, u32>> = vec![BTreeMap::new(); n];
    let mut point_gid: Vec<Option<u32>> = vec![None; n];
    let mut emb_dim = 0usize;
    let mut embedding_rows: Vec<Option<Vec<f64>>> = vec![None; n];
    let mut next_gid = 0u32;

    for pred in predictions {
        // group the block's sampled points by local instance id
        let mut groups: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (k, &scene_idx) in pred.sampled.iter().enumerate() {
            groups.entry(pred.instance[k]).or_default().push(k);
            *sem_votes[scene_idx].entry(pred.semantic[k]).or_insert(0) += 1;
            if let Some(emb) = &pred.embedding {
                emb_dim = emb.cols();
                embedding_rows[scene_idx].get_or_insert_with(|| emb.row(k).to_vec());
            }
        }
        for members in groups.values() {
            let mut class_votes: BTreeMap<u32, usize> = BTreeMap::new();
            for &k in members {
                *class_votes.entry(pred.semantic[k]).or_insert(0) += 1;
            }
            let class = class_votes
                .iter()
                .fold(None::<(u32, usize)>, |acc, (&c, &count)| match acc {
                    Some((_, best)) if count <= best => acc,
                    _ => Some((c, count)),
                })
                .map(|(c, _)| c)
                .unwrap_or(0);
            let voxels: BTreeSet<(i64, i64, i64)> = members
                .iter()
                .map(|&k| voxel_of(&scene.positions[pred.sampled[k]], cfg.voxel_size))
                .collect();
            let mut votes: BTreeMap<u32, usize> = BTreeMap::new();
            for v in &voxels {
                if let Some(&(gid, voxel_class)) = grid.get(v) {
                    if voxel_class == class {
                        *votes.entry(gid).or_insert(0) += 1;
                    }
                }
            }
            let best = votes
                .iter()
                .fold(None::<(u32, usize)>, |acc, (&gid, &count)| match acc {
                    Some((_, best_count)) if count <= best_count => acc,
                    _ => Some((gid, count)),
                });
            let gid = match best {
                Some((gid, count))
                    if count as f64 >= cfg.overlap_threshold * voxels.len() as f64 =>
                {
                    gid
                }
                _ => {
                    let gid = next_gid;
                    next_gid += 1;
                    gid
                }
            };
            for v in voxels {
                grid.entry(v).or_insert((gid, class));
            }
            // per-fragment point assignment; later blocks overwrite
            for &k in members {
                point_gid[pred.sampled[k]] = Some(gid);
            }
        }
    }

    // per-point labels: fragment id plus majority class over covering blocks
    let mut semantic = vec![0u32; n];
    let mut instance = vec![0u32; n];
    let mut covered = vec![false; n];
    for i in 0..n {
        let sem = sem_votes[i]
            .iter()
            .fold(None::<(u32, u32)>, |acc, (&class, &count)| match acc {
                Some((_, best)) if count <= best => acc,
                _ => Some((class, count)),
            });
        if let (Some(gid), Some((class, _))) = (point_gid[i], sem) {
            semantic[i] = class;
            instance[i] = gid;
            covered[i] = true;
        }
    }

    // nearest covered point adopts its labels
    let uncovered: Vec<usize> = (0..n).filter(|&i| !covered[i]).collect();
    if uncovered.len() == n {
        return Err(Error::Input {
            detail: "no block prediction covers the scene".into(),
        });
    }
    for &i in &uncovered {
        let mut best = usize::MAX;
        let mut best_d = f64::INFINITY;
        for j in 0..n {
            if !covered[j] {
                continue;
            }
            let d = scene.positions[i]
                .iter()
                .zip(scene.positions[j].iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
            if d < best_d {
                best_d = d;
                best = j;
            }
        }
        semantic[i] = semantic[best];
        instance[i] = instance[best];
    }

    // dense instance ids by first appearance
    let mut renumber: BTreeMap<u32, u32> = BTreeMap::new();
    let mut next = 0u32;
    for id in instance.iter_mut() {
        let dense = *renumber.entry(*id).or_insert_with(|| {
            let d = next;
            next += 1;
            d
        });
        *id = dense;
    }

    let embedding = if emb_dim > 0 {
        let mut m = Matrix::zeros(n, emb_dim);
        for (i, row) in embedding_rows.into_iter().enumerate() {
            if let Some(row) = row {
                m.row_mut(i).copy_from_slice(&row);
            }
        }
        Some(m)
    } else {
        None
    };

    Ok(SegmentationResult {
        semantic,
        instance,
        embedding,
        uncovered_points: uncovered.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;
    use std::collections::BTreeSet;

    fn blob(center: &[f64], n: usize, spread: f64, rng: &mut ChaCha20Rng) -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| {
                center
                    .iter()
                    .map(|c| c + rng.random_range(-spread..spread))
                    .collect()
            })
            .collect()
    }

    fn to_matrix(rows: Vec<Vec<f64>>) -> Matrix {
        let dim = rows[0].len();
        let mut m = Matrix::zeros(rows.len(), dim);
        for (i, r) in rows.iter().enumerate() {
            m.row_mut(i).copy_from_slice(r);
        }
        m
    }

    #[test]
    fn identical_points_form_one_cluster() {
        let m = Matrix::filled(10, 3, 0.7);
        let result = mean_shift(&m, 0.6).unwrap();
        assert_eq!(result.num_clusters(), 1);
        assert!(result.assignments.iter().all(|&a| a == 0));
    }

    #[test]
    fn two_distant_groups_stay_intact() {
        let bw = 0.6;
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let mut rows = blob(&[0.0, 0.0], 20, 0.05, &mut rng);
        rows.extend(blob(&[10.0 * bw, 0.0], 20, 0.05, &mut rng));
        let m = to_matrix(rows);
        let result = mean_shift(&m, bw).unwrap();
        assert_eq!(result.num_clusters(), 2);
        let first: BTreeSet<u32> = result.assignments[..20].iter().copied().collect();
        let second: BTreeSet<u32> = result.assignments[20..].iter().copied().collect();
        assert_eq!(first.len(), 1);
        assert_eq!(second.len(), 1);
        assert_ne!(first, second);
    }

    #[test]
    fn ring_cluster_count_stable_under_shuffles() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let n = 60;
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let a = i as f64 / n as f64 * std::f64::consts::TAU;
                vec![a.cos() + rng.random_range(-0.01..0.01), a.sin() + rng.random_range(-0.01..0.01)]
            })
            .collect();
        let base = mean_shift(&to_matrix(rows.clone()), 0.5).unwrap();
        for shuffle in 0..5 {
            let mut order: Vec<usize> = (0..n).collect();
            let mut srng = ChaCha20Rng::seed_from_u64(100 + shuffle);
            for i in (1..n).rev() {
                let j = srng.random_range(0..=i);
                order.swap(i, j);
            }
            let shuffled: Vec<Vec<f64>> = order.iter().map(|&i| rows[i].clone()).collect();
            let result = mean_shift(&to_matrix(shuffled), 0.5).unwrap();
            assert_eq!(result.num_clusters(), base.num_clusters(), "shuffle {shuffle}");
        }
    }

    #[test]
    fn permutation_invariant_up_to_renaming() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let mut rows = blob(&[0.0, 0.0, 0.0], 15, 0.05, &mut rng);
        rows.extend(blob(&[5.0, 0.0, 0.0], 15, 0.05, &mut rng));
        rows.extend(blob(&[0.0, 5.0, 0.0], 15, 0.05, &mut rng));
        let n = rows.len();
        let base = mean_shift(&to_matrix(rows.clone()), 0.6).unwrap();

        let mut order: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = rng.random_range(0..=i);
            order.swap(i, j);
        }
        let shuffled: Vec<Vec<f64>> = order.iter().map(|&i| rows[i].clone()).collect();
        let permuted = mean_shift(&to_matrix(shuffled), 0.6).unwrap();

        // same partition: pairs agree on same/different cluster
        for a in 0..n {
            for b in (a + 1)..n {
                let same_base = base.assignments[order[a]] == base.assignments[order[b]];
                let same_perm = permuted.assignments[a] == permuted.assignments[b];
                assert_eq!(same_base, same_perm);
            }
        }
    }

    #[test]
    fn cluster_count_monotone_in_bandwidth() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let mut rows = blob(&[0.0, 0.0], 12, 0.03, &mut rng);
        rows.extend(blob(&[2.0, 0.0], 12, 0.03, &mut rng));
        rows.extend(blob(&[0.0, 2.0], 12, 0.03, &mut rng));
        rows.extend(blob(&[6.0, 6.0], 12, 0.03, &mut rng));
        let m = to_matrix(rows);
        let mut last = usize::MAX;
        for bw in [0.3, 1.0, 3.0, 20.0] {
            let count = mean_shift(&m, bw).unwrap().num_clusters();
            assert!(count <= last, "bandwidth {bw}: {count} > {last}");
            last = count;
        }
        assert_eq!(last, 1);
    }

    #[test]
    fn non_positive_bandwidth_errors() {
        let m = Matrix::zeros(3, 2);
        assert!(mean_shift(&m, 0.0).is_err());
    }

    fn grid_scene(extent_x: f64, extent_y: f64, step: f64) -> PointCloud {
        let mut cloud = PointCloud::empty();
        let mut x = 0.0;
        while x <= extent_x {
            let mut y = 0.0;
            while y <= extent_y {
                cloud.positions.push([x, y, 0.0]);
                y += step;
            }
            x += step;
        }
        cloud
    }

    #[test]
    fn small_scene_is_one_block() {
        let scene = grid_scene(0.8, 0.8, 0.1);
        let cfg = BlockConfig {
            points_per_block: 64,
            ..BlockConfig::default()
        };
        let blocks = split_blocks(&scene, &cfg).unwrap();
        assert_eq!(blocks.len(), 1);
        assert_eq!(blocks[0].indices.len(), scene.len());
        assert_eq!(blocks[0].sampled.len(), 64);
    }

    #[test]
    fn block_count_matches_grid_formula() {
        // 2m x 1m scene, stride 0.5, block 1.0: x needs ceil(1/0.5)+1 = 3, y needs 1
        let scene = grid_scene(2.0, 1.0, 0.05);
        let cfg = BlockConfig {
            points_per_block: 128,
            ..BlockConfig::default()
        };
        let blocks = split_blocks(&scene, &cfg).unwrap();
        assert_eq!(grid_cell_count(2.0, 1.0, &cfg), 3);
        assert_eq!(blocks.len(), 3);
    }

    #[test]
    fn every_point_lands_in_some_block() {
        let scene = grid_scene(3.3, 2.7, 0.13);
        let cfg = BlockConfig {
            points_per_block: 32,
            ..BlockConfig::default()
        };
        let blocks = split_blocks(&scene, &cfg).unwrap();
        let mut seen = vec![false; scene.len()];
        for b in &blocks {
            for &i in &b.indices {
                seen[i] = true;
            }
        }
        assert!(seen.iter().all(|&s| s), "some point not covered by any block");
    }

    #[test]
    fn short_blocks_pad_with_replacement_and_keep_everything() {
        let scene = grid_scene(0.5, 0.5, 0.25); // 9 points
        let cfg = BlockConfig {
            points_per_block: 32,
            ..BlockConfig::default()
        };
        let blocks = split_blocks(&scene, &cfg).unwrap();
        let b = &blocks[0];
        assert_eq!(b.sampled.len(), 32);
        let unique: BTreeSet<usize> = b.sampled.iter().copied().collect();
        assert_eq!(unique.len(), scene.len(), "padding must keep every point");
    }

    #[test]
    fn splitting_is_deterministic() {
        let scene = grid_scene(2.0, 2.0, 0.11);
        let cfg = BlockConfig {
            points_per_block: 50,
            ..BlockConfig::default()
        };
        assert_eq!(
            split_blocks(&scene, &cfg).unwrap(),
            split_blocks(&scene, &cfg).unwrap()
        );
    }

    #[test]
    fn empty_scene_errors() {
        let scene = PointCloud::empty();
        assert!(matches!(
            split_blocks(&scene, &BlockConfig::default()),
            Err(Error::Input { .. })
        ));
    }

    #[test]
    fn feature_channels_are_centered_and_normalized() {
        let scene = grid_scene(1.0, 1.0, 0.5);
        let cfg = BlockConfig {
            points_per_block: scene.len(),
            ..BlockConfig::default()
        };
        let blocks = split_blocks(&scene, &cfg).unwrap();
        let feats = block_features(&scene, &blocks[0], &cfg).unwrap();
        assert_eq!(feats.cols(), 6);
        for r in 0..feats.rows() {
            let row = feats.row(r);
            assert!(row[0].abs() <= 0.5 + 1e-9);
            assert!(row[1].abs() <= 0.5 + 1e-9);
            assert!((0.0..=1.0).contains(&row[3]));
            assert!((0.0..=1.0).contains(&row[4]));
        }
    }

    #[test]
    fn single_block_merging_renumbers_densely() {
        let scene = grid_scene(0.9, 0.9, 0.3);
        let n = scene.len();
        let sampled: Vec<usize> = (0..n).collect();
        let pred = BlockPrediction {
            sampled,
            semantic: vec![1; n],
            instance: vec![7; n], // arbitrary local id
            embedding: None,
        };
        let result = block_merging(&scene, &[pred], &MergeConfig::default()).unwrap();
        assert!(result.instance.iter().all(|&i| i == 0));
        assert!(result.semantic.iter().all(|&s| s == 1));
        assert_eq!(result.uncovered_points, 0);
    }

    #[test]
    fn spanning_instance_unifies_across_blocks() {
        // one straight line of points crossing two blocks; consistent overlap
        let mut scene = PointCloud::empty();
        for i in 0..20 {
            scene.positions.push([i as f64 * 0.1, 0.2, 0.0]);
        }
        // block A covers points 0..14, block B covers 6..20 (overlap 6..14)
        let a: Vec<usize> = (0..14).collect();
        let b: Vec<usize> = (6..20).collect();
        let pred_a = BlockPrediction {
            sampled: a.clone(),
            semantic: vec![0; a.len()],
            instance: vec![0; a.len()],
            embedding: None,
        };
        let pred_b = BlockPrediction {
            sampled: b.clone(),
            semantic: vec![0; b.len()],
            instance: vec![5; b.len()],
            embedding: None,
        };
        let result = block_merging(&scene, &[pred_a, pred_b], &MergeConfig::default()).unwrap();
        let ids: BTreeSet<u32> = result.instance.iter().copied().collect();
        assert_eq!(ids.len(), 1, "spanning instance must merge to one id");
    }

    #[test]
    fn disjoint_instances_stay_separate() {
        let mut scene = PointCloud::empty();
        for i in 0..10 {
            scene.positions.push([i as f64 * 0.05, 0.0, 0.0]);
        }
        for i in 0..10 {
            scene.positions.push([5.0 + i as f64 * 0.05, 0.0, 0.0]);
        }
        let a: Vec<usize> = (0..10).collect();
        let b: Vec<usize> = (10..20).collect();
        let pred_a = BlockPrediction {
            sampled: a.clone(),
            semantic: vec![0; 10],
            instance: vec![0; 10],
            embedding: None,
        };
        let pred_b = BlockPrediction {
            sampled: b.clone(),
            semantic: vec![1; 10],
            instance: vec![0; 10],
            embedding: None,
        };
        let result = block_merging(&scene, &[pred_a, pred_b], &MergeConfig::default()).unwrap();
        let ids: BTreeSet<u32> = result.instance.iter().copied().collect();
        assert_eq!(ids.len(), 2);
    }

    #[test]
    fn same_block_same_local_id_share_global_id() {
        // consistent two-block fixture; every fragment keeps one global id
        let mut scene = PointCloud::empty();
        for i in 0..30 {
            scene.positions.push([i as f64 * 0.06, 0.1, 0.0]);
        }
        let a: Vec<usize> = (0..20).collect();
        let b: Vec<usize> = (10..30).collect();
        let pred_a = BlockPrediction {
            sampled: a.clone(),
            semantic: vec![0; 20],
            instance: a.iter().map(|&i| if i < 10 { 0 } else { 1 }).collect(),
            embedding: None,
        };
        let pred_b = BlockPrediction {
            sampled: b.clone(),
            semantic: vec![0; 20],
            instance: b.iter().map(|&i| if i < 20 { 3 } else { 4 }).collect(),
            embedding: None,
        };
        let result =
            block_merging(&scene, &[pred_a.clone(), pred_b.clone()], &MergeConfig::default())
                .unwrap();
        for pred in [&pred_a, &pred_b] {
            let mut seen: BTreeMap<u32, u32> = BTreeMap::new();
            for (k, &scene_idx) in pred.sampled.iter().enumerate() {
                let gid = result.instance[scene_idx];
                let entry = seen.entry(pred.instance[k]).or_insert(gid);
                assert_eq!(*entry, gid, "local instance split across global ids");
            }
        }
    }

    #[test]
    fn uncovered_points_adopt_nearest_labels() {
        let mut scene = PointCloud::empty();
        for i in 0..10 {
            scene.positions.push([i as f64 * 0.1, 0.0, 0.0]);
        }
        scene.positions.push([100.0, 100.0, 0.0]); // far, uncovered
        let a: Vec<usize> = (0..10).collect();
        let pred = BlockPrediction {
            sampled: a,
            semantic: vec![2; 10],
            instance: vec![0; 10],
            embedding: None,
        };
        let result = block_merging(&scene, &[pred], &MergeConfig::default()).unwrap();
        assert_eq!(result.uncovered_points, 1);
        assert_eq!(result.semantic[10], 2);
        assert_eq!(result.instance[10], result.instance[9]);
    }
}
