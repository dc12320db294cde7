//! Gradient verification harness.
//!
//! Three layers of checks, each against an oracle that never touches the
//! implementation path it verifies:
//!
//! 1. the closed-form gradients of the simplified attention op against a
//!    literal Kronecker-product/commutation-matrix evaluation at tiny sizes;
//! 2. the same gradients against central finite differences on random cases;
//! 3. every parameter of the full model against finite differences of the
//!    composite loss on a small cloud.
//!
//! Comparisons use `|a - n| / max(|a|, |n|, floor)`: a pure relative error
//! for entries above `floor`, an absolute bound of `tol * floor` below it
//! (finite differences carry ~1e-11 noise, so exact relative error is not
//! meaningful for near-zero entries).

use crate::attention::simplified::{
    simplified_forward, simplified_grad_x, simplified_grad_x_kronecker, simplified_grad_y,
    simplified_grad_y_kronecker,
};
use crate::attention::BiDirConfig;
use crate::backbone::{BackboneConfig, SegModel};
use crate::error::{Error, Result};
use crate::loss::{
    cross_entropy_on_tape, discriminative_on_tape, total_loss_on_tape, DiscriminativeParams,
};
use crate::tensor::{Matrix, Tape};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

/// One pass/fail line of the report.
#[derive(Clone, Debug, Serialize)]
pub struct CheckRow {
    pub check: String,
    pub max_err: f64,
    pub tol: f64,
    pub pass: bool,
}

impl CheckRow {
    fn new(check: String, max_err: f64, tol: f64) -> Self {
        CheckRow {
            check,
            max_err,
            tol,
            pass: max_err < tol,
        }
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct GradcheckReport {
    pub rows: Vec<CheckRow>,
}

impl GradcheckReport {
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let width = self
            .rows
            .iter()
            .map(|r| r.check.len())
            .max()
            .unwrap_or(8)
            .max(8);
        out.push_str(&format!(
            "{:<width$}  {:>12}  {:>9}  result\n",
            "check", "max_err", "tol"
        ));
        for r in &self.rows {
            out.push_str(&format!(
                "{:<width$}  {:>12.3e}  {:>9.0e}  {}\n",
                r.check,
                r.max_err,
                r.tol,
                if r.pass { "pass" } else { "FAIL" }
            ));
        }
        let status = if self.all_pass() { "pass" } else { "FAIL" };
        out.push_str(&format!("overall: {status}\n"));
        out
    }
}

fn max_rel_err(analytic: &Matrix, oracle: &Matrix, floor: f64) -> f64 {
    analytic
        .data()
        .iter()
        .zip(oracle.data().iter())
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}

/// Knobs of the harness. `corruption` adds a deliberate offset to the first
/// analytic gradient entry of every check; it exists so tests can confirm
/// the harness actually detects broken gradients. Zero in normal operation.
#[derive(Clone, Debug)]
pub struct GradcheckSettings {
    pub kron_max_n: usize,
    pub fd_cases: usize,
    pub model_seeds: Vec<u64>,
    pub model_points: usize,
    pub corruption: f64,
}

impl Default for GradcheckSettings {
    fn default() -> Self {
        GradcheckSettings {
            kron_max_n: 3,
            fd_cases: 20,
            model_seeds: vec![0, 1, 2, 3, 4],
            model_points: 8,
            corruption: 0.0,
        }
    }
}

fn corrupt(m: &mut Matrix, eps: f64) {
    if eps != 0.0 && m.len() > 0 {
        m.data_mut()[0] += eps;
    }
}

/// Matrix-form gradients vs literal Kronecker evaluation, N = 1..=max_n.
pub fn check_simplified_kronecker(max_n: usize, corruption: f64) -> Result<Vec<CheckRow>> {
    const TOL: f64 = 1e-10;
    let mut rows = Vec::new();
    let mut rng = ChaCha20Rng::seed_from_u64(0x5eed);
    for n in 1..=max_n {
        for (n_x, n_y) in [(1usize, 1usize), (2, 3), (3, 2)] {
            let x = Matrix::random(n, n_x, -1.0, 1.0, &mut rng);
            let y = Matrix::random(n, n_y, -1.0, 1.0, &mut rng);
            let u = Matrix::random(n, n_y, -1.0, 1.0, &mut rng);

            let mut gx = simplified_grad_x(&x, &y, &u)?;
            corrupt(&mut gx, corruption);
            let gx_k = simplified_grad_x_kronecker(&x, &y, &u)?;
            rows.push(CheckRow::new(
                format!("kron-eq grad_x N={n} NX={n_x} NY={n_y}"),
                max_rel_err(&gx, &gx_k, 1e-12),
                TOL,
            ));

            let mut gy = simplified_grad_y(&x, &y, &u)?;
            corrupt(&mut gy, corruption);
            let gy_k = simplified_grad_y_kronecker(&x, &y, &u)?;
            rows.push(CheckRow::new(
                format!("kron-eq grad_y N={n} NX={n_x} NY={n_y}"),
                max_rel_err(&gy, &gy_k, 1e-12),
                TOL,
            ));
        }
    }
    Ok(rows)
}

/// Matrix-form gradients vs central finite differences (h = 1e-5) on random
/// (size, seed) cases; loss = sum(U . Z).
pub fn check_simplified_fd(cases: usize, corruption: f64) -> Result<Vec<CheckRow>> {
    const TOL: f64 = 1e-6;
    const H: f64 = 1e-5;
    let mut rows = Vec::new();
    for case in 0..cases as u64 {
        let mut rng = ChaCha20Rng::seed_from_u64(case);
        let n = rng.random_range(2..8);
        let n_x = rng.random_range(1..5);
        let n_y = rng.random_range(1..5);
        let x = Matrix::random(n, n_x, -1.0, 1.0, &mut rng);
        let y = Matrix::random(n, n_y, -1.0, 1.0, &mut rng);
        let u = Matrix::random(n, n_y, -1.0, 1.0, &mut rng);

        let loss = |x: &Matrix, y: &Matrix| -> Result<f64> {
            Ok(simplified_forward(x, y)?.mul_elem(&u)?.sum())
        };

        let mut fd_x = Matrix::zeros(n, n_x);
        for i in 0..x.len() {
            let mut plus = x.clone();
            plus.data_mut()[i] += H;
            let mut minus = x.clone();
            minus.data_mut()[i] -= H;
            fd_x.data_mut()[i] = (loss(&plus, &y)? - loss(&minus, &y)?) / (2.0 * H);
        }
        let mut gx = simplified_grad_x(&x, &y, &u)?;
        corrupt(&mut gx, corruption);
        rows.push(CheckRow::new(
            format!("fd grad_x case={case} N={n} NX={n_x} NY={n_y}"),
            max_rel_err(&gx, &fd_x, 1e-3),
            TOL,
        ));

        let mut fd_y = Matrix::zeros(n, n_y);
        for i in 0..y.len() {
            let mut plus = y.clone();
            plus.data_mut()[i] += H;
            let mut minus = y.clone();
            minus.data_mut()[i] -= H;
            fd_y.data_mut()[i] = (loss(&x, &plus)? - loss(&x, &minus)?) / (2.0 * H);
        }
        let mut gy = simplified_grad_y(&x, &y, &u)?;
        corrupt(&mut gy, corruption);
        rows.push(CheckRow::new(
            format!("fd grad_y case={case} N={n} NX={n_x} NY={n_y}"),
            max_rel_err(&gy, &fd_y, 1e-3),
            TOL,
        ));
    }
    Ok(rows)
}

fn model_loss(
    model: &SegModel,
    features: &Matrix,
    sem_labels: &[u32],
    inst_labels: &[u32],
    disc: &DiscriminativeParams,
) -> Result<f64> {
    let mut tape = Tape::new();
    let bound = model.bind(&mut tape);
    let nodes = model.forward_on_tape(&mut tape, &bound, features)?;
    let l_sem = cross_entropy_on_tape(&mut tape, nodes.logits, sem_labels)?;
    let l_ins = discriminative_on_tape(&mut tape, nodes.embedding, inst_labels, disc)?;
    let total = total_loss_on_tape(&mut tape, l_sem, l_ins)?;
    tape.scalar(total)
}

/// Every parameter gradient of the full model vs finite differences of the
/// composite loss on an `n_points` cloud.
pub fn check_full_model(
    cfg: &BackboneConfig,
    bidir: &BiDirConfig,
    seed: u64,
    n_points: usize,
    corruption: f64,
) -> Result<CheckRow> {
    const TOL: f64 = 1e-4;
    const H: f64 = 1e-5;
    let disc = DiscriminativeParams::default();
    let mut rng = ChaCha20Rng::seed_from_u64(seed.wrapping_mul(0x9e3779b9).wrapping_add(17));
    let features = Matrix::random(n_points, cfg.input_dim, -1.0, 1.0, &mut rng);
    let sem_labels: Vec<u32> = (0..n_points)
        .map(|_| rng.random_range(0..cfg.n_c as u32))
        .collect();
    let n_inst = 3.min(n_points) as u32;
    let inst_labels: Vec<u32> = (0..n_points)
        .map(|_| rng.random_range(0..n_inst))
        .collect();

    let model = SegModel::new(cfg.clone(), *bidir, seed)?;

    // analytic gradients via one tape pass
    let mut analytic_model = model.clone();
    analytic_model.zero_grads();
    {
        let mut tape = Tape::new();
        let bound = analytic_model.bind(&mut tape);
        let nodes = analytic_model.forward_on_tape(&mut tape, &bound, &features)?;
        let l_sem = cross_entropy_on_tape(&mut tape, nodes.logits, &sem_labels)?;
        let l_ins = discriminative_on_tape(&mut tape, nodes.embedding, &inst_labels, &disc)?;
        let total = total_loss_on_tape(&mut tape, l_sem, l_ins)?;
        tape.backward(total)?;
        analytic_model.accumulate_grads(&tape, &bound, 1.0)?;
    }
    let mut analytic = analytic_model.grad_tensors();
    if let Some(first) = analytic.first_mut() {
        corrupt(first, corruption);
    }

    // finite differences over every scalar parameter
    let mut worst = 0.0f64;
    let mut probe = model.clone();
    let n_maps = probe.named_params().len();
    for map_idx in 0..n_maps {
        for which in 0..2usize {
            let len = {
                let params = probe.named_params();
                let l = params[map_idx].1;
                if which == 0 {
                    l.weight.len()
                } else {
                    l.bias.len()
                }
            };
            for k in 0..len {
                let mut eval = |delta: f64| -> Result<f64> {
                    {
                        let mut params = probe.named_params_mut();
                        let l = &mut params[map_idx].1;
                        let t = if which == 0 { &mut l.weight } else { &mut l.bias };
                        t.data_mut()[k] += delta;
                    }
                    let v = model_loss(&probe, &features, &sem_labels, &inst_labels, &disc);
                    {
                        let mut params = probe.named_params_mut();
                        let l = &mut params[map_idx].1;
                        let t = if which == 0 { &mut l.weight } else { &mut l.bias };
                        t.data_mut()[k] -= delta;
                    }
                    v
                };
                let fd = (eval(H)? - eval(-H)?) / (2.0 * H);
                let a = analytic[map_idx * 2 + which].data()[k];
                let err = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-3);
                if err > worst {
                    worst = err;
                }
            }
        }
    }
    Ok(CheckRow::new(
        format!(
            "full-model seed={seed} points={n_points} params={}",
            model.num_scalar_params()
        ),
        worst,
        TOL,
    ))
}

fn small_model_config() -> BackboneConfig {
    BackboneConfig {
        input_dim: 6,
        hidden: vec![5, 6],
        n_s: 6,
        n_i: 5,
        n_e: 3,
        n_c: 3,
        d_k: 4,
        head_hidden: 4,
    }
}

/// Run the whole harness with the given settings.
pub fn run(settings: &GradcheckSettings) -> Result<GradcheckReport> {
    let mut report = GradcheckReport::default();
    report
        .rows
        .extend(check_simplified_kronecker(settings.kron_max_n, settings.corruption)?);
    report
        .rows
        .extend(check_simplified_fd(settings.fd_cases, settings.corruption)?);
    let cfg = small_model_config();
    let bidir = BiDirConfig::default();
    for &seed in &settings.model_seeds {
        report.rows.push(check_full_model(
            &cfg,
            &bidir,
            seed,
            settings.model_points,
            settings.corruption,
        )?);
    }
    Ok(report)
}

/// Run with defaults and convert failure into a tolerance error, for the CLI.
pub fn run_or_fail(settings: &GradcheckSettings) -> Result<GradcheckReport> {
    let report = run(settings)?;
    if !report.all_pass() {
        let failing: Vec<&str> = report
            .rows
            .iter()
            .filter(|r| !r.pass)
            .map(|r| r.check.as_str())
            .collect();
        return Err(Error::Tolerance {
            detail: format!("gradient checks failed: {}", failing.join("; ")),
        });
    }
    Ok(report)
}
