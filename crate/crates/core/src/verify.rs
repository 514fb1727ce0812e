//! Finite-difference gradient checks and adjoint inner-product checks.
//!
//! Every check runs in 64-bit. Gradient errors use
//! `|g_ad - g_fd| / max(1, |g_fd|)` with central differences. When a probe
//! at `x ± eps` lands in a different smooth piece than `x` (an activation
//! or absolute value changes sign, or the median bandwidth pair changes),
//! the derivative is estimated one-sided from the side that stays in the
//! piece of `x`, with a second-order stencil.

use std::collections::BTreeSet;
use std::fmt;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::Result;
use crate::losses::{lsgan_node, mae_node, mse_node, GanRole, MmdConfig};
use crate::model::{BlockId, Mode, ModelConfig, Side, SsrganModel};
use crate::params::{ParamId, ParamStore};
use crate::tape::{NodeId, Tape};
use crate::tensor::{conv1d, conv1d_adjoint, ConvSpec, Tensor};
use crate::trainer::{discriminator_objective, generator_objective, TrainConfig};

pub const GRAD_TOL: f64 = 1e-4;
pub const ADJOINT_TOL: f64 = 1e-10;
pub const FD_EPS: f64 = 1e-5;

fn rel_err(ad: f64, fd: f64) -> f64 {
    (ad - fd).abs() / fd.abs().max(1.0)
}

/// Deterministic random tensor with standard normal entries.
pub fn random_tensor(shape: [usize; 3], seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = Normal::new(0.0, 1.0).expect("unit normal");
    Tensor::from_fn(shape, |_, _, _| d.sample(&mut rng))
}

fn pick_coords(n: usize, max_coords: Option<usize>, seed: u64) -> Vec<usize> {
    match max_coords {
        Some(m) if m < n => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut v = sample(&mut rng, n, m).into_vec();
            v.sort_unstable();
            v
        }
        _ => (0..n).collect(),
    }
}

type Probe = (f64, Vec<usize>);

fn probe(tape: &Tape<f64>, out: NodeId) -> Result<Probe> {
    Ok((tape.value(out).item(), tape.branch_signature()?))
}

/// Numerical derivative of `eval` (value and branch signature as a
/// function of the offset) at offset 0.
fn fd_derivative(mut eval: impl FnMut(f64) -> Result<Probe>, eps: f64) -> Result<f64> {
    let (f0, s0) = eval(0.0)?;
    let (fp, sp) = eval(eps)?;
    let (fm, sm) = eval(-eps)?;
    let central = (fp - fm) / (2.0 * eps);
    if sp == s0 && sm == s0 {
        return Ok(central);
    }
    let h = eps / 2.0;
    for dir in [1.0, -1.0] {
        let (f_far, s_far) = if dir > 0.0 { (fp, &sp) } else { (fm, &sm) };
        if *s_far != s0 {
            continue;
        }
        let (f_mid, s_mid) = eval(dir * h)?;
        if s_mid == s0 {
            return Ok(dir * (-3.0 * f0 + 4.0 * f_mid - f_far) / (2.0 * h));
        }
    }
    Ok(central)
}

fn eval_leaves(
    f: &impl Fn(&mut Tape<f64>, &[NodeId]) -> Result<NodeId>,
    inputs: &[Tensor<f64>],
) -> Result<Probe> {
    let mut tape = Tape::new();
    let nodes: Vec<NodeId> = inputs.iter().map(|x| tape.constant(x.clone())).collect();
    let out = f(&mut tape, &nodes)?;
    probe(&tape, out)
}

/// Checks the gradient of `f` with respect to every entry of every input,
/// or of at most `max_coords` sampled entries per input.
pub fn finite_diff_check_multi(
    f: impl Fn(&mut Tape<f64>, &[NodeId]) -> Result<NodeId>,
    inputs: &[Tensor<f64>],
    eps: f64,
    max_coords: Option<usize>,
) -> Result<f64> {
    let mut tape = Tape::new();
    let nodes: Vec<NodeId> = inputs.iter().map(|x| tape.var(x.clone())).collect();
    let out = f(&mut tape, &nodes)?;
    let grads = tape.backward(out, &mut ParamStore::new())?;

    let mut worst = 0.0_f64;
    let mut work = inputs.to_vec();
    for (i, node) in nodes.iter().enumerate() {
        let n = inputs[i].numel();
        let zeros = vec![0.0; n];
        let g = grads.get(*node).unwrap_or(&zeros);
        for j in pick_coords(n, max_coords, 0x5eed ^ i as u64) {
            let x0 = work[i].data()[j];
            let fd = fd_derivative(
                |d| {
                    work[i].data_mut()[j] = x0 + d;
                    eval_leaves(&f, &work)
                },
                eps,
            )?;
            work[i].data_mut()[j] = x0;
            worst = worst.max(rel_err(g[j], fd));
        }
    }
    Ok(worst)
}

/// Max relative gradient error of the scalar function `f` at `x`.
pub fn finite_diff_check(
    f: impl Fn(&mut Tape<f64>, NodeId) -> Result<NodeId>,
    x: &Tensor<f64>,
    eps: f64,
) -> Result<f64> {
    finite_diff_check_multi(|t, n| f(t, n[0]), std::slice::from_ref(x), eps, None)
}

/// Checks the gradient of a model-level loss with respect to the parameters
/// in `ids`, sampling at most `max_coords` entries per buffer.
pub fn param_finite_diff_check(
    model: &SsrganModel<f64>,
    ids: &BTreeSet<ParamId>,
    loss: impl Fn(&SsrganModel<f64>, &mut Tape<f64>) -> Result<NodeId>,
    eps: f64,
    max_coords: Option<usize>,
) -> Result<f64> {
    let mut work = model.clone();
    work.params.zero_all_grads();
    let mut tape = Tape::new();
    let out = loss(&work, &mut tape)?;
    tape.backward(out, &mut work.params)?;

    let eval = |m: &SsrganModel<f64>| -> Result<Probe> {
        let mut t = Tape::new();
        let o = loss(m, &mut t)?;
        probe(&t, o)
    };
    let mut worst = 0.0_f64;
    for &id in ids {
        let n = work.params.value(id).numel();
        let g: Vec<f64> = match work.params.value(id).grad() {
            Some(g) => g.to_vec(),
            None => vec![0.0; n],
        };
        for j in pick_coords(n, max_coords, 0xfd ^ id.0 as u64) {
            let x0 = work.params.value(id).data()[j];
            let fd = fd_derivative(
                |d| {
                    work.params.get_mut(id).value.data_mut()[j] = x0 + d;
                    eval(&work)
                },
                eps,
            )?;
            work.params.get_mut(id).value.data_mut()[j] = x0;
            worst = worst.max(rel_err(g[j], fd));
        }
    }
    Ok(worst)
}

/// Relative mismatch of `<conv(x), y>` and `<x, adjoint(y)>` for random
/// `x` and `y` of the given geometry.
pub fn adjoint_error(spec: &ConvSpec, w: &[f64], batch: usize, len: usize, seed: u64) -> Result<f64> {
    let lout = spec.output_len(len)?;
    let x = random_tensor([batch, spec.in_channels, len], seed);
    let y = random_tensor([batch, spec.out_channels, lout], seed ^ 0xad10);
    let lhs = conv1d(&x, w, None, spec)?.dot(&y);
    let rhs = x.dot(&conv1d_adjoint(&y, w, spec, len)?);
    Ok((lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(f64::MIN_POSITIVE))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CheckKind {
    Gradient,
    Adjoint,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckEntry {
    pub name: String,
    pub kind: CheckKind,
    pub error: f64,
    pub tolerance: f64,
}

impl CheckEntry {
    pub fn passed(&self) -> bool {
        self.error.is_finite() && self.error <= self.tolerance
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradcheckReport {
    pub entries: Vec<CheckEntry>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(CheckEntry::passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckEntry> {
        self.entries.iter().filter(|e| !e.passed())
    }

    pub fn worst(&self, kind: CheckKind) -> f64 {
        self.entries
            .iter()
            .filter(|e| e.kind == kind)
            .map(|e| e.error)
            .fold(0.0, f64::max)
    }

    fn push(&mut self, name: impl Into<String>, kind: CheckKind, error: f64) {
        let tolerance = match kind {
            CheckKind::Gradient => GRAD_TOL,
            CheckKind::Adjoint => ADJOINT_TOL,
        };
        self.entries.push(CheckEntry {
            name: name.into(),
            kind,
            error,
            tolerance,
        });
    }
}

impl fmt::Display for GradcheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.entries {
            let tag = if e.passed() { "ok  " } else { "FAIL" };
            writeln!(f, "{tag} {:<48} {:.3e} (tol {:.0e})", e.name, e.error, e.tolerance)?;
        }
        let bad = self.failures().count();
        write!(f, "{} checks, {} failed", self.entries.len(), bad)
    }
}

/// Gradient checks of every differentiable tape operation on small random
/// inputs drawn from `seed`.
pub fn op_suite(seed: u64, report: &mut GradcheckReport) -> Result<()> {
    let g = CheckKind::Gradient;
    let s = |k: u64| seed.wrapping_mul(1000).wrapping_add(k);
    let spec = ConvSpec::new(2, 3, 5, 2, 2)?;
    let x = random_tensor([2, 2, 11], s(1));
    let w = random_tensor([3, 2, 5], s(2));
    let b = random_tensor([1, 3, 1], s(3));
    let lout = spec.output_len(11)?;
    let y = random_tensor([2, 3, lout], s(4));
    let u = random_tensor([2, 3, 7], s(5));
    let v = random_tensor([2, 3, 7], s(6));
    let half_sq = |t: &mut Tape<f64>, n: NodeId| {
        let q = t.mean_square(n);
        let numel = t.value(n).numel() as f64;
        t.scale(q, 0.5 * numel)
    };

    let e = finite_diff_check_multi(
        |t, n| {
            let c = t.conv1d(n[0], n[1], Some(n[2]), spec)?;
            Ok(half_sq(t, c))
        },
        &[x.clone(), w.clone(), b.clone()],
        FD_EPS,
        None,
    )?;
    report.push(format!("op conv1d (seed {seed})"), g, e);

    let e = finite_diff_check_multi(
        |t, n| {
            let c = t.conv1d_adjoint(n[0], n[1], spec, 11)?;
            Ok(half_sq(t, c))
        },
        &[y.clone(), w.clone()],
        FD_EPS,
        None,
    )?;
    report.push(format!("op conv1d_adjoint (seed {seed})"), g, e);

    let e = finite_diff_check_multi(
        |t, n| {
            let c = t.add_bias(n[0], n[1])?;
            Ok(half_sq(t, c))
        },
        &[y.clone(), b.clone()],
        FD_EPS,
        None,
    )?;
    report.push(format!("op add_bias (seed {seed})"), g, e);

    let e = finite_diff_check(
        |t, n| {
            let a = t.leaky_relu(n, 0.2);
            Ok(half_sq(t, a))
        },
        &u,
        FD_EPS,
    )?;
    report.push(format!("op leaky_relu (seed {seed})"), g, e);

    let pair = [u.clone(), v.clone()];
    let e = finite_diff_check_multi(
        |t, n| {
            let a = t.add(n[0], n[1])?;
            Ok(half_sq(t, a))
        },
        &pair,
        FD_EPS,
        None,
    )?;
    report.push(format!("op add (seed {seed})"), g, e);

    let e = finite_diff_check_multi(
        |t, n| {
            let a = t.sub(n[0], n[1])?;
            Ok(half_sq(t, a))
        },
        &pair,
        FD_EPS,
        None,
    )?;
    report.push(format!("op sub (seed {seed})"), g, e);

    let e = finite_diff_check(
        |t, n| {
            let a = t.scale(n, -1.7);
            Ok(half_sq(t, a))
        },
        &u,
        FD_EPS,
    )?;
    report.push(format!("op scale (seed {seed})"), g, e);

    let e = finite_diff_check(
        |t, n| {
            let a = t.leaky_relu(n, 0.2);
            Ok(t.sum(a))
        },
        &u,
        FD_EPS,
    )?;
    report.push(format!("op sum (seed {seed})"), g, e);

    let e = finite_diff_check(|t, n| Ok(t.mean_abs(n)), &u, FD_EPS)?;
    report.push(format!("op mean_abs (seed {seed})"), g, e);

    let e = finite_diff_check(|t, n| Ok(t.mean_square(n)), &u, FD_EPS)?;
    report.push(format!("op mean_square (seed {seed})"), g, e);

    let e = finite_diff_check(
        |t, n| {
            let m = t.mean_over_length(n);
            Ok(t.squared_error_to(m, 1.0))
        },
        &u,
        FD_EPS,
    )?;
    report.push(format!("op mean_over_length + squared_error_to (seed {seed})"), g, e);

    let p = random_tensor([5, 2, 3], s(7));
    let q = random_tensor([5, 2, 3], s(8)).map(|z| 0.5 * z + 0.3);
    for (label, cfg) in [
        ("median", MmdConfig::default()),
        ("fixed", MmdConfig::fixed(vec![0.5, 1.0, 2.0])),
    ] {
        let e = finite_diff_check_multi(
            |t, n| t.mk_mmd(n[0], n[1], &cfg),
            &[p.clone(), q.clone()],
            FD_EPS,
            None,
        )?;
        report.push(format!("op mk_mmd {label} bandwidth (seed {seed})"), g, e);
    }
    Ok(())
}

fn small_model(seed: u64, sharing: bool) -> Result<SsrganModel<f64>> {
    SsrganModel::build(ModelConfig {
        seed,
        sharing,
        ..ModelConfig::small()
    })
}

/// Gradient checks of the composed objectives on a small model, with
/// respect to the input windows and every parameter buffer.
pub fn loss_suite(seed: u64, sharing: bool, report: &mut GradcheckReport) -> Result<()> {
    let g = CheckKind::Gradient;
    let tag = if sharing { "" } else { ", unshared" };
    let model = small_model(seed, sharing)?;
    let wl = model.config.window_len;
    let a = random_tensor([3, 1, wl], seed ^ 0xa);
    let b = random_tensor([3, 1, wl], seed ^ 0xb);
    let all: BTreeSet<ParamId> = model.params.ids().collect();
    let gen = model.generator_params();

    let cycle = |m: &SsrganModel<f64>, t: &mut Tape<f64>, an: NodeId, bn: NodeId| -> Result<NodeId> {
        let fa = m.gen_forward(t, an)?.output;
        let ra = m.gen_reverse(t, fa)?.output;
        let rb = m.gen_reverse(t, bn)?.output;
        let rb = m.gen_forward(t, rb)?.output;
        let la = mae_node(t, ra, an)?;
        let lb = mae_node(t, rb, bn)?;
        t.add(la, lb)
    };
    let e = finite_diff_check_multi(
        |t, n| {
            t.freeze(model.params.ids());
            cycle(&model, t, n[0], n[1])
        },
        &[a.clone(), b.clone()],
        FD_EPS,
        None,
    )?;
    report.push(format!("cycle loss wrt inputs (seed {seed}{tag})"), g, e);
    let e = param_finite_diff_check(
        &model,
        &gen,
        |m, t| {
            let an = t.constant(a.clone());
            let bn = t.constant(b.clone());
            cycle(m, t, an, bn)
        },
        FD_EPS,
        None,
    )?;
    report.push(format!("cycle loss wrt generator params (seed {seed}{tag})"), g, e);

    let e = param_finite_diff_check(
        &model,
        &all,
        |m, t| {
            let an = t.constant(a.clone());
            let bn = t.constant(b.clone());
            let fb = m.gen_forward(t, an)?.output;
            let real = m.discriminate_node(t, bn, Side::B)?;
            let fake = m.discriminate_node(t, fb, Side::B)?;
            let ld = lsgan_node(t, Some(real), fake, GanRole::Discriminator)?;
            let lg = lsgan_node(t, None, fake, GanRole::Generator)?;
            t.add(ld, lg)
        },
        FD_EPS,
        None,
    )?;
    report.push(format!("adversarial losses wrt all params (seed {seed}{tag})"), g, e);

    let e = param_finite_diff_check(
        &model,
        &gen,
        |m, t| {
            let an = t.constant(a.clone());
            let bn = t.constant(b.clone());
            let ra = m.autoencode_node(t, an, Side::A)?;
            let rb = m.autoencode_node(t, bn, Side::B)?;
            let la = mse_node(t, ra, an)?;
            let lb = mse_node(t, rb, bn)?;
            t.add(la, lb)
        },
        FD_EPS,
        None,
    )?;
    report.push(format!("autoencoder loss wrt generator params (seed {seed}{tag})"), g, e);

    let mmd = MmdConfig::default();
    let middle = |m: &SsrganModel<f64>, t: &mut Tape<f64>, an: NodeId, bn: NodeId| -> Result<NodeId> {
        let fa = m.gen_forward(t, an)?;
        let fb = m.gen_reverse(t, bn)?;
        let phi2 = m.middle_content_node(t, fa.output, Side::B)?;
        let phi1 = m.middle_content_node(t, fb.output, Side::A)?;
        let ma = mse_node(t, fa.middle, phi2)?;
        let mb = mse_node(t, fb.middle, phi1)?;
        let mse = t.add(ma, mb)?;
        let mmd = t.mk_mmd(fa.middle, fb.middle, &mmd)?;
        t.add(mse, mmd)
    };
    let e = finite_diff_check_multi(
        |t, n| {
            t.freeze(model.params.ids());
            middle(&model, t, n[0], n[1])
        },
        &[a.clone(), b.clone()],
        FD_EPS,
        None,
    )?;
    report.push(format!("middle-content loss wrt inputs (seed {seed}{tag})"), g, e);
    let e = param_finite_diff_check(
        &model,
        &gen,
        |m, t| {
            let an = t.constant(a.clone());
            let bn = t.constant(b.clone());
            middle(m, t, an, bn)
        },
        FD_EPS,
        None,
    )?;
    report.push(format!("middle-content loss wrt generator params (seed {seed}{tag})"), g, e);

    let cfg = TrainConfig {
        sharing_enabled: sharing,
        ..TrainConfig::default()
    };
    let e = param_finite_diff_check(
        &model,
        &gen,
        |m, t| {
            let (tape, loss, _) = generator_objective(m, &a, &b, &cfg, 0)?;
            *t = tape;
            Ok(loss)
        },
        FD_EPS,
        None,
    )?;
    report.push(format!("training generator objective (seed {seed}{tag})"), g, e);
    let fake_a = model.generator_reverse(&b)?;
    let fake_b = model.generator_forward(&a)?;
    let e = param_finite_diff_check(
        &model,
        &model.discriminator_params(),
        |m, t| {
            let (tape, loss) = discriminator_objective(m, &a, &b, &fake_a, &fake_b, false)?;
            *t = tape;
            Ok(loss)
        },
        FD_EPS,
        None,
    )?;
    report.push(format!("training discriminator objective (seed {seed}{tag})"), g, e);
    Ok(())
}

/// Adjoint identity and block-level gradient checks for every block of
/// `model`, in both modes and for both block sets.
pub fn block_suite(
    model: &SsrganModel<f64>,
    seed: u64,
    max_coords: Option<usize>,
    report: &mut GradcheckReport,
) -> Result<()> {
    let sets: Vec<(&str, Vec<&crate::model::Block>)> = if model.config.sharing {
        vec![("", model.forward_blocks().iter().collect())]
    } else {
        vec![
            ("", model.forward_blocks().iter().collect()),
            (" rev", model.reverse_blocks().iter().collect()),
        ]
    };
    for (suffix, blocks) in sets {
        for blk in blocks {
            let label = format!("{}{}", blk.id.label(), suffix);
            let w = model.params.value(blk.weight).data();
            let e = adjoint_error(&blk.spec, w, 2, blk.conv_input_len, seed ^ blk.id as u64)?;
            report.push(format!("adjoint {label} (seed {seed})"), CheckKind::Adjoint, e);

            for mode in [Mode::Conv, Mode::Adjoint] {
                let (c, len) = match mode {
                    Mode::Conv => (blk.spec.in_channels, blk.conv_input_len),
                    Mode::Adjoint => (blk.spec.out_channels, blk.conv_output_len()),
                };
                let x = random_tensor([1, c, len], seed ^ 0xb10c ^ blk.id as u64);
                let ids: BTreeSet<ParamId> = blk.params().into_iter().collect();
                let loss = |m: &SsrganModel<f64>, t: &mut Tape<f64>, xn: NodeId| -> Result<NodeId> {
                    let h = blk.apply(t, &m.params, xn, mode)?;
                    let h = t.leaky_relu(h, m.config.slope);
                    let q = t.mean_square(h);
                    Ok(t.scale(q, 0.5))
                };
                let e = param_finite_diff_check(
                    model,
                    &ids,
                    |m, t| {
                        let xn = t.constant(x.clone());
                        loss(m, t, xn)
                    },
                    FD_EPS,
                    max_coords,
                )?;
                let ex = finite_diff_check_multi(
                    |t, n| {
                        t.freeze(model.params.ids());
                        loss(model, t, n[0])
                    },
                    std::slice::from_ref(&x),
                    FD_EPS,
                    max_coords,
                )?;
                report.push(format!("block {label} {mode:?} (seed {seed})"), CheckKind::Gradient, e.max(ex));
            }
        }
    }
    Ok(())
}

/// `0.5 ||G_f(a)||^2` with respect to every block weight of a default model.
pub fn generator_suite(seed: u64, max_coords: usize, report: &mut GradcheckReport) -> Result<()> {
    let model = SsrganModel::<f64>::build(ModelConfig {
        seed,
        ..ModelConfig::default()
    })?;
    let a = random_tensor([1, 1, model.config.window_len], seed ^ 0x9e);
    for id in BlockId::ALL {
        let ids: BTreeSet<ParamId> = [model.block(id).weight].into_iter().collect();
        let e = param_finite_diff_check(
            &model,
            &ids,
            |m, t| {
                let an = t.constant(a.clone());
                let out = m.gen_forward(t, an)?.output;
                let q = t.mean_square(out);
                let numel = t.value(out).numel() as f64;
                Ok(t.scale(q, 0.5 * numel))
            },
            FD_EPS,
            Some(max_coords),
        )?;
        report.push(
            format!("default G_f energy wrt {} weight (seed {seed})", id.label()),
            CheckKind::Gradient,
            e,
        );
    }
    Ok(())
}

/// The full suite: every tape operation, every composed objective, and the
/// adjoint and gradient checks of every block of a default model, repeated
/// for each seed.
pub fn gradcheck(seeds: &[u64]) -> Result<GradcheckReport> {
    let mut report = GradcheckReport::default();
    for &seed in seeds {
        op_suite(seed, &mut report)?;
        for sharing in [true, false] {
            loss_suite(seed, sharing, &mut report)?;
            let model = SsrganModel::<f64>::build(ModelConfig {
                seed,
                sharing,
                ..ModelConfig::default()
            })?;
            block_suite(&model, seed, Some(24), &mut report)?;
        }
        generator_suite(seed, 12, &mut report)?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_squared_norm_is_exact() {
        let x = random_tensor([2, 3, 5], 1);
        let e = finite_diff_check(
            |t, n| {
                let q = t.mean_square(n);
                Ok(t.scale(q, 15.0))
            },
            &x,
            1e-5,
        )
        .unwrap();
        assert!(e <= 1e-8, "{e}");
    }

    #[test]
    fn constant_function_has_zero_gradient() {
        let x = random_tensor([1, 1, 4], 2);
        let e = finite_diff_check(
            |t, n| {
                let z = t.scale(n, 0.0);
                Ok(t.sum(z))
            },
            &x,
            1e-5,
        )
        .unwrap();
        assert_eq!(e, 0.0);
    }

    #[test]
    fn probe_across_a_kink_uses_the_smooth_side() {
        let kink = 3e-6;
        let f = |x: f64| Ok(((x - kink).abs(), vec![usize::from(x > kink)]));
        let d = fd_derivative(f, 1e-5).unwrap();
        assert!((d + 1.0).abs() < 1e-9, "{d}");
        let smooth = |x: f64| Ok((x * x * x, vec![]));
        let d = fd_derivative(smooth, 1e-5).unwrap();
        assert!(d.abs() < 1e-9, "{d}");
    }

    #[test]
    fn op_suite_passes() {
        let mut r = GradcheckReport::default();
        op_suite(0, &mut r).unwrap();
        assert!(r.passed(), "{r}");
    }
}
