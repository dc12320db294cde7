//! Point clouds, file formats, and synthetic labeled scene generation.
//!
//! Text format: one point per line, whitespace-separated
//! `x y z [r g b] [sem] [inst]`, `#` starts a comment. The column count
//! decides the layout: 3 = positions, 6 = positions+color,
//! 5 = positions+labels, 8 = everything. Floats are written in shortest
//! round-trip form, so save/load preserves values exactly.
//!
//! The JSON format is a self-describing record container used where column
//! order would be a hazard (checkpoints and results use the same idea).

use crate::error::{Error, Result};
use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

/// N points with positions, optional color, optional ground-truth labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    pub positions: Vec<[f64; 3]>,
    pub colors: Option<Vec<[f64; 3]>>,
    pub semantic: Option<Vec<u32>>,
    pub instance: Option<Vec<u32>>,
}

impl PointCloud {
    pub fn empty() -> Self {
        PointCloud {
            positions: Vec::new(),
            colors: None,
            semantic: None,
            instance: None,
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        if self.positions.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Input {
                detail: "non-finite position".into(),
            });
        }
        for (name, len) in [
            ("colors", self.colors.as_ref().map(|v| v.len())),
            ("semantic", self.semantic.as_ref().map(|v| v.len())),
            ("instance", self.instance.as_ref().map(|v| v.len())),
        ] {
            if let Some(len) = len {
                if len != n {
                    return Err(Error::Input {
                        detail: format!("{name} has {len} entries for {n} points"),
                    });
                }
            }
        }
        Ok(())
    }

    /// Axis-aligned bounds as (min, max); errors on an empty cloud.
    pub fn bounds(&self) -> Result<([f64; 3], [f64; 3])> {
        if self.is_empty() {
            return Err(Error::Input {
                detail: "bounds of an empty cloud".into(),
            });
        }
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in &self.positions {
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        Ok((lo, hi))
    }
}

/// On-disk cloud encodings.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CloudFormat {
    Text,
    Json,
}

impl CloudFormat {
    /// Pick a format from a file extension; `.json` is JSON, anything else text.
    pub fn from_path(path: &Path) -> CloudFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => CloudFormat::Json,
            _ => CloudFormat::Text,
        }
    }
}

pub fn save_cloud(cloud: &PointCloud, path: &Path, format: CloudFormat) -> Result<()> {
    cloud.validate()?;
    let body = match format {
        CloudFormat::Text => render_text(cloud),
        CloudFormat::Json => {
            serde_json::to_string_pretty(cloud).map_err(|e| Error::Io {
                path: path.display().to_string(),
                detail: e.to_string(),
            })? + "\n"
        }
    };
    std::fs::write(path, body).map_err(|e| Error::io(path.display().to_string(), e))
}

fn render_text(cloud: &PointCloud) -> String {
    let mut out = String::new();
    let mut columns = vec!["x", "y", "z"];
    if cloud.colors.is_some() {
        columns.extend(["r", "g", "b"]);
    }
    if cloud.semantic.is_some() {
        columns.push("sem");
        columns.push("inst");
    }
    let _ = writeln!(out, "# columns: {}", columns.join(" "));
    for i in 0..cloud.len() {
        let p = cloud.positions[i];
        let _ = write!(out, "{} {} {}", p[0], p[1], p[2]);
        if let Some(colors) = &cloud.colors {
            let c = colors[i];
            let _ = write!(out, " {} {} {}", c[0], c[1], c[2]);
        }
        if let (Some(sem), Some(inst)) = (&cloud.semantic, &cloud.instance) {
            let _ = write!(out, " {} {}", sem[i], inst[i]);
        } else if let Some(sem) = &cloud.semantic {
            let _ = write!(out, " {} 0", sem[i]);
        }
        out.push('\n');
    }
    out
}

pub fn load_cloud(path: &Path, format: CloudFormat) -> Result<PointCloud> {
    let body =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let cloud = match format {
        CloudFormat::Text => parse_text(&body, &path.display().to_string())?,
        CloudFormat::Json => serde_json::from_str(&body).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: e.line(),
            detail: e.to_string(),
        })?,
    };
    cloud.validate()?;
    Ok(cloud)
}

fn parse_text(body: &str, path: &str) -> Result<PointCloud> {
    let mut cloud = PointCloud::empty();
    let mut layout: Option<usize> = None;
    for (lineno, raw) in body.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let n = fields.len();
        if !matches!(n, 3 | 5 | 6 | 8) {
            return Err(Error::Parse {
                path: path.into(),
                line: lineno + 1,
                detail: format!("expected 3, 5, 6, or 8 columns, found {n}"),
            });
        }
        match layout {
            None => {
                layout = Some(n);
                if n == 6 || n == 8 {
                    cloud.colors = Some(Vec::new());
                }
                if n == 5 || n == 8 {
                    cloud.semantic = Some(Vec::new());
                    cloud.instance = Some(Vec::new());
                }
            }
            Some(expected) if expected != n => {
                return Err(Error::Parse {
                    path: path.into(),
                    line: lineno + 1,
                    detail: format!("row has {n} columns, file started with {expected}"),
                });
            }
            _ => {}
        }
        let parse_f = |idx: usize| -> Result<f64> {
            fields[idx].parse::<f64>().map_err(|_| Error::Parse {
                path: path.into(),
                line: lineno + 1,
                detail: format!("column {} is not a number: '{}'", idx + 1, fields[idx]),
            })
        };
        let parse_u = |idx: usize| -> Result<u32> {
            fields[idx].parse::<u32>().map_err(|_| Error::Parse {
                path: path.into(),
                line: lineno + 1,
                detail: format!("column {} is not a label id: '{}'", idx + 1, fields[idx]),
            })
        };
        cloud
            .positions
            .push([parse_f(0)?, parse_f(1)?, parse_f(2)?]);
        let mut next = 3;
        if n == 6 || n == 8 {
            cloud
                .colors
                .as_mut()
                .expect("layout set")
                .push([parse_f(next)?, parse_f(next + 1)?, parse_f(next + 2)?]);
            next += 3;
        }
        if n == 5 || n == 8 {
            cloud.semantic.as_mut().expect("layout set").push(parse_u(next)?);
            cloud
                .instance
                .as_mut()
                .expect("layout set")
                .push(parse_u(next + 1)?);
        }
    }
    Ok(cloud)
}

// ---------------------------------------------------------------------------
// Synthetic scenes.
// ---------------------------------------------------------------------------

/// Shape primitive backing a class of objects.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Primitive {
    /// Horizontal rectangle (think floor patch or tabletop).
    Plane,
    /// Axis-aligned cuboid surface.
    Box,
    /// Vertical cylinder side surface.
    Cylinder,
    /// Isotropic Gaussian blob.
    Cluster,
}

/// One class of objects the generator can place.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassSpec {
    pub name: String,
    pub primitive: Primitive,
    /// Inclusive range of instances per scene.
    pub instances: [u32; 2],
    /// Inclusive range of points per instance.
    pub points: [u32; 2],
    /// Inclusive range of the characteristic size in meters.
    pub size: [f64; 2],
}

/// Deterministic scene recipe: same spec + seed, bit-identical scene.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub classes: Vec<ClassSpec>,
    /// Scene extent in meters (x, y, z).
    pub extent: [f64; 3],
    /// Gaussian jitter applied to every point.
    pub noise: f64,
    /// Minimum center-to-center clearance between instances beyond their
    /// combined half-sizes.
    pub min_gap: f64,
    /// Emit per-class colors.
    pub colors: bool,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            classes: vec![
                ClassSpec {
                    name: "floor".into(),
                    primitive: Primitive::Plane,
                    instances: [1, 1],
                    points: [220, 300],
                    size: [3.2, 4.0],
                },
                ClassSpec {
                    name: "chair".into(),
                    primitive: Primitive::Box,
                    instances: [2, 3],
                    points: [140, 220],
                    size: [0.45, 0.7],
                },
            ],
            extent: [4.0, 4.0, 3.0],
            noise: 0.01,
            min_gap: 0.6,
            colors: false,
            seed: 0,
        }
    }
}

impl SceneSpec {
    /// The two-chairs fixture: one class, exactly two instances.
    pub fn two_objects_one_class() -> Self {
        SceneSpec {
            classes: vec![ClassSpec {
                name: "chair".into(),
                primitive: Primitive::Box,
                instances: [2, 2],
                points: [150, 200],
                size: [0.5, 0.7],
            }],
            extent: [3.0, 3.0, 2.0],
            noise: 0.01,
            min_gap: 0.6,
            colors: false,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes.is_empty() {
            return Err(Error::Config {
                detail: "scene spec has zero classes".into(),
            });
        }
        for c in &self.classes {
            if c.instances[0] > c.instances[1] || c.points[0] > c.points[1] || c.size[0] > c.size[1]
            {
                return Err(Error::Config {
                    detail: format!("class '{}' has an inverted range", c.name),
                });
            }
            if c.points[1] == 0 {
                return Err(Error::Config {
                    detail: format!("class '{}' would generate empty instances", c.name),
                });
            }
            if c.size[0] <= 0.0 {
                return Err(Error::Config {
                    detail: format!("class '{}' has non-positive size", c.name),
                });
            }
        }
        if self.extent.iter().any(|&e| e <= 0.0) {
            return Err(Error::Config {
                detail: "scene extent must be positive".into(),
            });
        }
        if self.noise < 0.0 || self.min_gap < 0.0 {
            return Err(Error::Config {
                detail: "noise and min_gap must be >= 0".into(),
            });
        }
        Ok(())
    }
}

/// Fixed palette for class colors.
fn class_color(class: usize) -> [f64; 3] {
    const PALETTE: [[f64; 3]; 8] = [
        [0.8, 0.3, 0.2],
        [0.2, 0.6, 0.8],
        [0.3, 0.8, 0.3],
        [0.8, 0.7, 0.2],
        [0.6, 0.3, 0.8],
        [0.9, 0.5, 0.6],
        [0.4, 0.4, 0.4],
        [0.2, 0.8, 0.7],
    ];
    PALETTE[class % PALETTE.len()]
}

struct Placement {
    class: usize,
    center: [f64; 3],
    size: f64,
    points: u32,
}

/// Standard-normal sample via Box-Muller; two uniforms per call.
fn normal<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = rng.random_range(f64::EPSILON..1.0);
    let u2: f64 = rng.random_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Generate a fully labeled scene. Instances never overlap (center distance
/// at least the combined half-sizes plus `min_gap`), and whenever some class
/// allows two or more instances the scene contains at least one same-class
/// multi-instance pair.
pub fn generate_scene(spec: &SceneSpec) -> Result<PointCloud> {
    spec.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);

    // decide instance counts
    let mut counts: Vec<u32> = spec
        .classes
        .iter()
        .map(|c| rng.random_range(c.instances[0]..=c.instances[1]))
        .collect();
    if !counts.iter().any(|&c| c >= 2) {
        if let Some(idx) = spec.classes.iter().position(|c| c.instances[1] >= 2) {
            counts[idx] = 2;
        }
    }
    if counts.iter().all(|&c| c == 0) {
        return Err(Error::Config {
            detail: "spec generates zero instances".into(),
        });
    }

    // place instances with rejection sampling on the clearance constraint
    let mut placements: Vec<Placement> = Vec::new();
    for (class, c) in spec.classes.iter().enumerate() {
        for _ in 0..counts[class] {
            let size = rng.random_range(c.size[0]..=c.size[1]);
            let points = rng.random_range(c.points[0]..=c.points[1]);
            let mut placed = false;
            for _attempt in 0..1000 {
                let margin = size / 2.0;
                let center = [
                    rng.random_range(margin..(spec.extent[0] - margin).max(margin + 1e-9)),
                    rng.random_range(margin..(spec.extent[1] - margin).max(margin + 1e-9)),
                    if c.primitive == Primitive::Plane {
                        0.0
                    } else {
                        rng.random_range(margin..(spec.extent[2] - margin).max(margin + 1e-9))
                    },
                ];
                let ok = placements.iter().all(|p| {
                    // planes only claim ground footprint; everything uses
                    // center distance in the ground plane
                    let dx = p.center[0] - center[0];
                    let dy = p.center[1] - center[1];
                    let dist = (dx * dx + dy * dy).sqrt();
                    let same_class_plane = spec.classes[p.class].primitive == Primitive::Plane
                        || c.primitive == Primitive::Plane;
                    if same_class_plane {
                        // planes may underlie other objects
                        spec.classes[p.class].primitive != c.primitive
                            || dist >= (p.size + size) / 2.0 + spec.min_gap
                    } else {
                        dist >= (p.size + size) / 2.0 + spec.min_gap
                    }
                });
                if ok {
                    placements.push(Placement {
                        class,
                        center,
                        size,
                        points,
                    });
                    placed = true;
                    break;
                }
            }
            if !placed {
                return Err(Error::Config {
                    detail: format!(
                        "could not place a '{}' instance with min_gap {} in extent {:?}",
                        c.name, spec.min_gap, spec.extent
                    ),
                });
            }
        }
    }

    // sample points per instance
    let mut cloud = PointCloud::empty();
    let mut semantic = Vec::new();
    let mut instance = Vec::new();
    let mut colors = Vec::new();
    for (inst_id, p) in placements.iter().enumerate() {
        let c = &spec.classes[p.class];
        let half = p.size / 2.0;
        for _ in 0..p.points {
            let local = match c.primitive {
                Primitive::Plane => [
                    rng.random_range(-half..half),
                    rng.random_range(-half..half),
                    0.0,
                ],
                Primitive::Box => {
                    // pick a face, sample on it
                    let face = rng.random_range(0..6u8);
                    let u = rng.random_range(-half..half);
                    let v = rng.random_range(-half..half);
                    match face {
                        0 => [half, u, v],
                        1 => [-half, u, v],
                        2 => [u, half, v],
                        3 => [u, -half, v],
                        4 => [u, v, half],
                        _ => [u, v, -half],
                    }
                }
                Primitive::Cylinder => {
                    let angle = rng.random_range(0.0..std::f64::consts::TAU);
                    let z = rng.random_range(-half..half);
                    [half * angle.cos(), half * angle.sin(), z]
                }
                Primitive::Cluster => {
                    let s = half / 2.0;
                    [normal(&mut rng) * s, normal(&mut rng) * s, normal(&mut rng) * s]
                }
            };
            let mut pos = [
                p.center[0] + local[0],
                p.center[1] + local[1],
                p.center[2] + local[2],
            ];
            if spec.noise > 0.0 {
                for v in &mut pos {
                    *v += normal(&mut rng) * spec.noise;
                }
            }
            cloud.positions.push(pos);
            semantic.push(p.class as u32);
            instance.push(inst_id as u32);
            if spec.colors {
                let base = class_color(p.class);
                colors.push([
                    (base[0] + rng.random_range(-0.05..0.05)).clamp(0.0, 1.0),
                    (base[1] + rng.random_range(-0.05..0.05)).clamp(0.0, 1.0),
                    (base[2] + rng.random_range(-0.05..0.05)).clamp(0.0, 1.0),
                ]);
            }
        }
    }

    // shuffle so points are not grouped by instance
    let n = cloud.positions.len();
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    let positions = order.iter().map(|&i| cloud.positions[i]).collect();
    cloud.positions = positions;
    cloud.semantic = Some(order.iter().map(|&i| semantic[i]).collect());
    cloud.instance = Some(order.iter().map(|&i| instance[i]).collect());
    if spec.colors {
        cloud.colors = Some(order.iter().map(|&i| colors[i]).collect());
    }
    cloud.validate()?;
    Ok(cloud)
}
