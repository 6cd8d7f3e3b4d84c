use serde::Serialize;

use super::config::ExperimentConfig;
use super::train::load_data;
use crate::clinalg::{Complex, ComplexMatrix};
use crate::error::{invalid, Result};
use crate::nn::{head_loss, ActivationKind, Backprop, Mode, Model, TrackCovariance};

pub const OTA_TOLERANCE: f64 = 1e-9;
pub const FD_TOLERANCE: f64 = 1e-4;
const FD_STEP: f64 = 1e-6;
const ENTRIES_PER_GROUP: usize = 12;
const CHECK_BATCH: usize = 8;
/// Denominator floor, so gradients that are exactly zero (a bias feeding batch
/// norm) are judged on absolute error instead of amplified rounding noise.
const SCALE_FLOOR: f64 = 1e-3;

/// Test-only tampering with the analytic gradients.
#[derive(Debug, Clone, Copy, Default)]
pub struct GradcheckHook {
    /// Negate the largest parameter gradient group before comparing.
    pub corrupt_sign: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct GroupReport {
    pub name: String,
    /// Max componentwise |over-the-air − ideal|.
    pub ota_vs_ideal: f64,
    /// Max relative deviation from central differences.
    pub finite_difference: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradcheckReport {
    pub groups: Vec<GroupReport>,
    pub passed: bool,
}

impl GradcheckReport {
    pub fn render(&self) -> String {
        let mut out = format!("{:<24} {:>14} {:>14}\n", "group", "ota_vs_ideal", "finite_diff");
        for g in &self.groups {
            out.push_str(&format!(
                "{:<24} {:>14.3e} {:>14.3e}\n",
                g.name, g.ota_vs_ideal, g.finite_difference
            ));
        }
        out.push_str(if self.passed { "PASS\n" } else { "FAIL\n" });
        out
    }
}

fn task_loss(model: &mut Model, x: &ComplexMatrix, labels: &[usize]) -> Result<f64> {
    let z = model.forward(x, Mode::Train)?;
    Ok(head_loss(&z, labels)?.0)
}

/// Indices spread evenly over `0..len`, at most `ENTRIES_PER_GROUP` of them.
fn probe_indices(len: usize) -> Vec<usize> {
    if len <= ENTRIES_PER_GROUP {
        return (0..len).collect();
    }
    (0..ENTRIES_PER_GROUP).map(|i| i * (len - 1) / (ENTRIES_PER_GROUP - 1)).collect()
}

/// Central differences of the loss with respect to both components of one
/// entry, packed as `∂L/∂re + j∂L/∂im`.
fn numeric(mut loss_at: impl FnMut(Complex) -> Result<f64>) -> Result<Complex> {
    let d = |a: f64, b: f64| (a - b) / (2.0 * FD_STEP);
    let re = d(loss_at(Complex::new(FD_STEP, 0.0))?, loss_at(Complex::new(-FD_STEP, 0.0))?);
    let im = d(loss_at(Complex::new(0.0, FD_STEP))?, loss_at(Complex::new(0.0, -FD_STEP))?);
    Ok(Complex::new(re, im))
}

fn relative(analytic: &[Complex], numeric: &[Complex]) -> f64 {
    let mut diff: f64 = 0.0;
    let mut scale: f64 = SCALE_FLOOR;
    for (a, n) in analytic.iter().zip(numeric) {
        diff = diff.max((a.re - n.re).abs()).max((a.im - n.im).abs());
        scale = scale.max(a.re.abs()).max(a.im.abs()).max(n.re.abs()).max(n.im.abs());
    }
    diff / scale
}

/// Compares over-the-air against ideal backprop on a noiseless link, and the
/// analytic task-loss gradient against central differences.
///
/// The finite-difference pass swaps the quantizer for CReLU, since the
/// straight-through rule is not the quantizer's true derivative.
pub fn run_gradcheck(cfg: &ExperimentConfig, hook: GradcheckHook) -> Result<GradcheckReport> {
    cfg.validate()?;
    if cfg.mimo.n_t > 16 || cfg.mimo.n_r > 16 {
        return Err(invalid("gradcheck needs n_t, n_r <= 16"));
    }
    let (train, _) = load_data(cfg)?;
    let idx: Vec<usize> = (0..train.len().min(CHECK_BATCH)).collect();
    let batch = train.gather(&idx);

    let mut ctx = cfg.build_context();
    ctx.snr_db = None;
    let spec = cfg.model_spec()?;

    // over the air vs ideal, with the configured activation
    let mut model = Model::build(&spec, &ctx)?;
    model.track = TrackCovariance::default();
    let z = model.forward(&batch.x, Mode::Train)?;
    let (_, g_z) = head_loss(&z, &batch.labels)?;
    let mut ideal = model.clone();
    let g_x_ota = model.backward(&g_z, Backprop::OverTheAir)?;
    let g_x_ideal = ideal.backward(&g_z, Backprop::Ideal)?;
    let mut ota_diffs: Vec<(String, f64)> = model
        .params()
        .into_iter()
        .zip(ideal.params())
        .map(|(a, b)| (a.name, a.grad.max_abs_diff(b.grad)))
        .collect();
    ota_diffs.push(("input".into(), g_x_ota.max_abs_diff(&g_x_ideal)));

    // finite differences, CReLU in place of the quantizer
    ctx.activation = ActivationKind::Crelu;
    let mut model = Model::build(&spec.resolve_activation(ActivationKind::Crelu), &ctx)?;
    model.track = TrackCovariance::default();
    let z = model.forward(&batch.x, Mode::Train)?;
    let (_, g_z) = head_loss(&z, &batch.labels)?;
    let g_x = model.backward(&g_z, Backprop::Ideal)?;
    let mut analytic: Vec<ComplexMatrix> = model.params().into_iter().map(|p| p.grad.clone()).collect();
    analytic.push(g_x);
    if hook.corrupt_sign {
        let worst = (0..analytic.len() - 1)
            .max_by(|&a, &b| analytic[a].max_abs().total_cmp(&analytic[b].max_abs()))
            .unwrap_or(0);
        analytic[worst] = analytic[worst].scale_real(-1.0);
    }

    let n_params = analytic.len() - 1;
    let mut groups = Vec::with_capacity(analytic.len());
    for (gi, (name, ota)) in ota_diffs.into_iter().enumerate() {
        let probes = probe_indices(analytic[gi].len());
        let mut num = Vec::with_capacity(probes.len());
        for &k in &probes {
            let value = if gi < n_params {
                numeric(|delta| {
                    let original = model.params()[gi].value.as_slice()[k];
                    model.params()[gi].value.as_mut_slice()[k] = original + delta;
                    let loss = task_loss(&mut model, &batch.x, &batch.labels);
                    model.params()[gi].value.as_mut_slice()[k] = original;
                    loss
                })?
            } else {
                numeric(|delta| {
                    let mut x = batch.x.clone();
                    x.as_mut_slice()[k] += delta;
                    task_loss(&mut model, &x, &batch.labels)
                })?
            };
            num.push(value);
        }
        let ana: Vec<Complex> = probes.iter().map(|&k| analytic[gi].as_slice()[k]).collect();
        groups.push(GroupReport {
            name,
            ota_vs_ideal: ota,
            finite_difference: relative(&ana, &num),
        });
    }
    let passed = groups
        .iter()
        .all(|g| g.ota_vs_ideal <= OTA_TOLERANCE && g.finite_difference <= FD_TOLERANCE);
    Ok(GradcheckReport { groups, passed })
}
