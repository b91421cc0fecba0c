//! Central finite-difference checks of every analytic gradient, run in
//! `f64` on small random instances.

use std::fmt::Write as _;

use crate::data::PreparedUtterance;
use crate::error::{invalid, Result};
use crate::layers::{softmax_xent, Activation, Blstm, DeltaWindow, FcLayer, LstmParams};
use crate::model::{FusionNet, ParamGroup, ParamMut, ParamRef, Parameterized, SequenceModel, StreamArch, StreamClassifier, StreamKind};
use crate::numerics::{Rng, Tensor};
use crate::training::PaddedBatch;

pub const CHECKS: [&str; 7] = ["fc", "delta", "lstm", "blstm", "softmax", "stream", "fusion"];

/// Denominator floor of the relative error, so that gradients which are
/// zero analytically are compared on an absolute scale.
pub const ERROR_FLOOR: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq)]
pub struct GradcheckOptions {
    pub instances: usize,
    pub step: f64,
    pub tolerance: f64,
    pub seed: u64,
    /// Name of a check whose analytic gradient is deliberately corrupted.
    pub sabotage: Option<String>,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        GradcheckOptions { instances: 3, step: 1e-5, tolerance: 1e-5, seed: 0, sabotage: None }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub instances: usize,
    pub coordinates: usize,
    pub max_rel_error: f64,
    pub passed: bool,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(ERROR_FLOOR)
}

/// Model parameters plus the inputs being differentiated.
#[derive(Clone)]
struct Probe<M> {
    model: M,
    inputs: Vec<Tensor<f64>>,
}

impl<M: Parameterized<f64>> Parameterized<f64> for Probe<M> {
    fn collect<'a>(&'a self, prefix: &str, group: ParamGroup, out: &mut Vec<ParamRef<'a, f64>>) {
        self.model.collect(prefix, group, out);
        for (i, x) in self.inputs.iter().enumerate() {
            out.push(ParamRef { name: format!("input.{i}"), group, tensor: x });
        }
    }

    fn collect_mut<'a>(&'a mut self, prefix: &str, group: ParamGroup, out: &mut Vec<ParamMut<'a, f64>>) {
        self.model.collect_mut(prefix, group, out);
        for (i, x) in self.inputs.iter_mut().enumerate() {
            out.push(ParamMut { name: format!("input.{i}"), group, tensor: x });
        }
    }
}

#[derive(Clone)]
struct NoParams;

impl Parameterized<f64> for NoParams {
    fn collect<'a>(&'a self, _: &str, _: ParamGroup, _: &mut Vec<ParamRef<'a, f64>>) {}
    fn collect_mut<'a>(&'a mut self, _: &str, _: ParamGroup, _: &mut Vec<ParamMut<'a, f64>>) {}
}

/// Compares `analytic` (one tensor per parameter of `probe`, in order)
/// with central differences of `loss`. Returns `(max error, coordinates)`.
fn compare<M: Parameterized<f64> + Clone>(
    probe: &Probe<M>,
    loss: impl Fn(&Probe<M>) -> Result<f64>,
    mut analytic: Vec<Tensor<f64>>,
    step: f64,
    sabotage: bool,
) -> Result<(f64, usize)> {
    let shapes: Vec<Vec<usize>> = probe.params().iter().map(|p| p.tensor.dims().to_vec()).collect();
    if analytic.len() != shapes.len() || analytic.iter().zip(&shapes).any(|(a, s)| a.dims() != s.as_slice()) {
        return Err(invalid("analytic gradient does not match parameter layout"));
    }
    if sabotage {
        analytic[0].as_mut_slice()[0] += 1e-2;
    }
    let mut worst = 0.0f64;
    let mut count = 0;
    for (k, grad) in analytic.iter().enumerate() {
        for i in 0..grad.len() {
            let eval = |delta: f64| {
                let mut p = probe.clone();
                p.params_mut()[k].tensor.as_mut_slice()[i] += delta;
                loss(&p)
            };
            let numeric = (eval(step)? - eval(-step)?) / (2.0 * step);
            worst = worst.max(relative_error(grad.as_slice()[i], numeric));
            count += 1;
        }
    }
    Ok((worst, count))
}

fn random(dims: &[usize], rng: &mut Rng) -> Tensor<f64> {
    let n = dims.iter().product();
    Tensor::from_vec(dims, (0..n).map(|_| rng.normal(0.0, 1.0)).collect()).expect("positive dims")
}

fn dot(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x * y).sum()
}

fn toy_utterances(n: usize, dim: usize, classes: usize, rng: &mut Rng) -> Vec<PreparedUtterance<f64>> {
    (0..n)
        .map(|i| {
            let t = 2 + (i + rng.below(3)) % 4;
            PreparedUtterance {
                raw: random(&[t, dim], rng),
                diff: random(&[t, dim], rng),
                label: rng.below(classes),
                subject: format!("s{i}"),
                path: format!("toy{i}"),
            }
        })
        .collect()
}

fn toy_arch(rng: &mut Rng) -> StreamArch {
    StreamArch {
        input_dim: 3 + rng.below(4),
        encoder_sizes: vec![3 + rng.below(4), 2 + rng.below(3)],
        hidden: 2 + rng.below(3),
        delta: DeltaWindow::new(1 + rng.below(2)).expect("positive window"),
    }
}

fn model_loss<M: SequenceModel<f64>>(m: &M, data: &[PreparedUtterance<f64>], batch: &PaddedBatch) -> Result<f64> {
    let mut scratch = m.zeros_like();
    m.batch_loss_grad(data, batch, &mut scratch)
}

fn model_grads<M: SequenceModel<f64>>(m: &M, data: &[PreparedUtterance<f64>], batch: &PaddedBatch) -> Result<Vec<Tensor<f64>>> {
    let mut grads = m.zeros_like();
    m.batch_loss_grad(data, batch, &mut grads)?;
    Ok(grads.params().into_iter().map(|p| p.tensor.clone()).collect())
}

/// Runs one named check on one random instance.
fn run_instance(name: &str, rng: &mut Rng, step: f64, sabotage: bool) -> Result<(f64, usize)> {
    match name {
        "fc" => {
            let (n, din, dout) = (1 + rng.below(4), 1 + rng.below(8), 1 + rng.below(8));
            let act = if rng.below(2) == 0 { Activation::Relu } else { Activation::Linear };
            let probe = Probe { model: FcLayer::glorot(din, dout, act, rng), inputs: vec![random(&[n, din], rng)] };
            let r = random(&[n, dout], rng);
            let loss = |p: &Probe<FcLayer<f64>>| Ok(dot(&p.model.forward(&p.inputs[0])?, &r));
            let g = probe.model.gradients(&probe.inputs[0], &r)?;
            compare(&probe, loss, vec![g.dw, g.db, g.dx], step, sabotage)
        }
        "delta" => {
            let (t, d) = (1 + rng.below(5), 1 + rng.below(8));
            let window = DeltaWindow::new(1 + rng.below(3))?;
            let probe = Probe { model: NoParams, inputs: vec![random(&[t, d], rng)] };
            let r = random(&[t, 3 * d], rng);
            let loss = |p: &Probe<NoParams>| Ok(dot(&window.append_derivatives(&p.inputs[0])?, &r));
            compare(&probe, loss, vec![window.append_derivatives_backward(&r)?], step, sabotage)
        }
        "lstm" => {
            let (t, d, h) = (1 + rng.below(5), 1 + rng.below(8), 1 + rng.below(8));
            let reverse = rng.below(2) == 1;
            let probe = Probe { model: LstmParams::glorot(d, h, rng), inputs: vec![random(&[t, d], rng)] };
            let r = random(&[t, h], rng);
            let loss = |p: &Probe<LstmParams<f64>>| Ok(dot(&p.model.forward(&p.inputs[0], reverse)?.0, &r));
            let (_, cache) = probe.model.forward(&probe.inputs[0], reverse)?;
            let mut g = probe.model.zeros_like();
            let dx = probe.model.backward(&cache, &r, &mut g)?;
            compare(&probe, loss, vec![g.w_ih, g.w_hh, g.bias, dx], step, sabotage)
        }
        "blstm" => {
            let (t, d, h) = (1 + rng.below(5), 1 + rng.below(8), 1 + rng.below(4));
            let probe = Probe { model: Blstm::glorot(d, h, rng), inputs: vec![random(&[t, d], rng)] };
            let r = random(&[t, 2 * h], rng);
            let loss = |p: &Probe<Blstm<f64>>| Ok(dot(&p.model.run(&p.inputs[0])?.0, &r));
            let (_, cache) = probe.model.run(&probe.inputs[0])?;
            let mut g = probe.model.zeros_like();
            let dx = probe.model.backprop(&cache, &r, &mut g)?;
            let mut analytic: Vec<Tensor<f64>> = g.params().into_iter().map(|p| p.tensor.clone()).collect();
            analytic.push(dx);
            compare(&probe, loss, analytic, step, sabotage)
        }
        "softmax" => {
            let (n, k) = (1 + rng.below(8), 2 + rng.below(7));
            let labels: Vec<usize> = (0..n).map(|_| rng.below(k)).collect();
            let mut mask: Vec<bool> = (0..n).map(|_| rng.below(4) != 0).collect();
            mask[0] = true;
            let probe = Probe { model: NoParams, inputs: vec![random(&[n, k], rng)] };
            let loss = |p: &Probe<NoParams>| Ok(softmax_xent(&p.inputs[0], &labels, &mask)?.0);
            let (_, g) = softmax_xent(&probe.inputs[0], &labels, &mask)?;
            compare(&probe, loss, vec![g], step, sabotage)
        }
        "stream" => {
            let arch = toy_arch(rng);
            let classes = 2 + rng.below(3);
            let kind = if rng.below(2) == 0 { StreamKind::Raw } else { StreamKind::Diff };
            let model = StreamClassifier::build(&arch, kind, classes, None, rng)?;
            let data = toy_utterances(2, arch.input_dim, classes, rng);
            let batch = PaddedBatch::new(&data, vec![0, 1], Some(6))?;
            let probe = Probe { model, inputs: vec![] };
            let loss = |p: &Probe<StreamClassifier<f64>>| model_loss(&p.model, &data, &batch);
            compare(&probe, loss, model_grads(&probe.model, &data, &batch)?, step, sabotage)
        }
        "fusion" => {
            let arch = toy_arch(rng);
            let classes = 2 + rng.below(3);
            let raw = StreamClassifier::build(&arch, StreamKind::Raw, classes, None, rng)?;
            let diff_arch = StreamArch { hidden: 2 + rng.below(3), ..arch.clone() };
            let diff = StreamClassifier::build(&diff_arch, StreamKind::Diff, classes, None, rng)?;
            let model = FusionNet::build(raw.stream, diff.stream, classes, 2 + rng.below(2), rng)?;
            let data = toy_utterances(2, arch.input_dim, classes, rng);
            let batch = PaddedBatch::new(&data, vec![1, 0], None)?;
            let probe = Probe { model, inputs: vec![] };
            let loss = |p: &Probe<FusionNet<f64>>| model_loss(&p.model, &data, &batch);
            compare(&probe, loss, model_grads(&probe.model, &data, &batch)?, step, sabotage)
        }
        other => Err(invalid(format!("unknown gradient check `{other}` (available: {})", CHECKS.join(", ")))),
    }
}

/// Runs the named checks (all when `names` is empty).
pub fn run_gradchecks(names: &[String], opts: &GradcheckOptions) -> Result<Vec<CheckResult>> {
    if opts.instances == 0 || !(opts.step > 0.0) {
        return Err(invalid("need at least one instance and a positive step"));
    }
    let selected: Vec<String> = if names.is_empty() { CHECKS.iter().map(|s| s.to_string()).collect() } else { names.to_vec() };
    let mut results = Vec::new();
    for (c, name) in selected.iter().enumerate() {
        let sabotage = opts.sabotage.as_deref() == Some(name.as_str());
        let mut worst = 0.0f64;
        let mut coordinates = 0;
        for i in 0..opts.instances {
            let mut rng = Rng::with_stream(opts.seed, (c as u64) << 16 | i as u64);
            let (err, n) = run_instance(name, &mut rng, opts.step, sabotage)?;
            worst = worst.max(err);
            coordinates += n;
        }
        results.push(CheckResult {
            name: name.clone(),
            instances: opts.instances,
            coordinates,
            max_rel_error: worst,
            passed: worst < opts.tolerance,
        });
    }
    Ok(results)
}

pub fn render_results(results: &[CheckResult], tolerance: f64) -> String {
    let mut out = String::new();
    for r in results {
        let _ = writeln!(
            out,
            "{:<8} {}  max rel error {:.3e} over {} coordinates, {} instances (tolerance {tolerance:.0e})",
            r.name,
            if r.passed { "PASS" } else { "FAIL" },
            r.max_rel_error,
            r.coordinates,
            r.instances
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_checks_pass() {
        let results = run_gradchecks(&[], &GradcheckOptions::default()).unwrap();
        assert_eq!(results.len(), CHECKS.len());
        for r in &results {
            assert!(r.passed, "{r:?}");
        }
    }

    #[test]
    fn sabotage_is_detected() {
        let opts = GradcheckOptions { sabotage: Some("lstm".into()), instances: 1, ..GradcheckOptions::default() };
        let results = run_gradchecks(&["lstm".into(), "fc".into()], &opts).unwrap();
        assert!(!results[0].passed);
        assert!(results[1].passed);
    }

    #[test]
    fn unknown_check() {
        assert!(run_gradchecks(&["conv".into()], &GradcheckOptions::default()).is_err());
    }
}
