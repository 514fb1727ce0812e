//! Adversarial training: two generator updates per discriminator update,
//! generator-only updates at the end, subnet toggles and ablation presets.

use std::collections::BTreeSet;
use std::io::Write;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{lsgan_node, mae_node, mse_node, total_loss, GanRole, LossParts, LossWeights, MmdConfig};
use crate::model::{Side, SsrganModel};
use crate::optim::{clip_grad_norm, AdamConfig, AdamState};
use crate::params::ParamId;
use crate::real::Real;
use crate::tape::{NodeId, Tape};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub iterations: usize,
    pub batch_size: usize,
    pub g_steps_per_d_step: usize,
    pub final_g_only_iters: usize,
    pub seed: u64,
    pub adam: AdamConfig,
    /// Autoencoder subnet.
    pub sn2_enabled: bool,
    /// Middle-content subnet.
    pub sn3_enabled: bool,
    /// Must agree with the model's `sharing` flag.
    pub sharing_enabled: bool,
    pub weights: LossWeights,
    pub mmd: MmdConfig,
    pub grad_clip: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 2000,
            batch_size: 16,
            g_steps_per_d_step: 2,
            final_g_only_iters: 5,
            seed: 0,
            adam: AdamConfig::default(),
            sn2_enabled: true,
            sn3_enabled: true,
            sharing_enabled: true,
            weights: LossWeights::default(),
            mmd: MmdConfig::default(),
            grad_clip: 10.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        if self.iterations > 0 && self.iterations < self.final_g_only_iters {
            return cfg(format!(
                "iterations ({}) must be >= final_g_only_iters ({})",
                self.iterations, self.final_g_only_iters
            ));
        }
        if self.batch_size < 2 {
            return cfg(format!("batch_size must be >= 2, got {}", self.batch_size));
        }
        if self.g_steps_per_d_step == 0 {
            return cfg("g_steps_per_d_step must be >= 1".into());
        }
        if !(self.grad_clip.is_finite() && self.grad_clip > 0.0) {
            return cfg(format!("grad_clip must be > 0, got {}", self.grad_clip));
        }
        self.adam.validate()?;
        self.weights.validate()?;
        self.mmd.validate()
    }
}

/// The six ablation variants.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// Full model.
    Model1,
    /// Cycle + adversarial only, two independent generators.
    Model2,
    /// No autoencoder subnet.
    Model3,
    /// No middle-content subnet.
    Model4,
    /// No parameter sharing.
    Model5,
    /// Full model with the denoising direction up-weighted.
    Model6,
}

impl Preset {
    pub const ALL: [Preset; 6] = [
        Preset::Model1,
        Preset::Model2,
        Preset::Model3,
        Preset::Model4,
        Preset::Model5,
        Preset::Model6,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Model1 => "model1",
            Preset::Model2 => "model2",
            Preset::Model3 => "model3",
            Preset::Model4 => "model4",
            Preset::Model5 => "model5",
            Preset::Model6 => "model6",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == name)
            .ok_or_else(|| Error::Config(format!("unknown preset {name:?} (expected model1..model6)")))
    }

    /// Applies the toggles and weights of this preset to `base`.
    pub fn apply(self, mut base: TrainConfig) -> TrainConfig {
        let (sn2, sn3, sharing) = match self {
            Preset::Model1 | Preset::Model6 => (true, true, true),
            Preset::Model2 => (false, false, false),
            Preset::Model3 => (false, true, true),
            Preset::Model4 => (true, false, true),
            Preset::Model5 => (true, true, false),
        };
        base.sn2_enabled = sn2;
        base.sn3_enabled = sn3;
        base.sharing_enabled = sharing;
        base.weights.denoise_gain = if self == Preset::Model6 { 2.0 } else { 1.0 };
        base
    }

    pub fn config(self) -> TrainConfig {
        self.apply(TrainConfig::default())
    }
}

/// Losses of one iteration. Generator terms are means over that iteration's
/// generator steps; disabled subnets log 0.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub cycle: f64,
    pub gan_g: f64,
    pub gan_d: f64,
    pub ae: f64,
    pub mid_mse: f64,
    pub mid_mmd: f64,
    pub total: f64,
    pub g_updates: usize,
    pub d_updated: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub records: Vec<IterationRecord>,
}

impl TrainHistory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn g_updates(&self) -> usize {
        self.records.iter().map(|r| r.g_updates).sum()
    }

    pub fn d_updates(&self) -> usize {
        self.records.iter().filter(|r| r.d_updated).count()
    }

    pub fn final_cycle(&self) -> Option<f64> {
        self.records.last().map(|r| r.cycle)
    }

    pub const CSV_HEADER: &'static str = "iter,cycle,gan_g,gan_d,ae,mid_mse,mid_mmd,total";

    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "{}", Self::CSV_HEADER)?;
        for r in &self.records {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                r.iter, r.cycle, r.gan_g, r.gan_d, r.ae, r.mid_mse, r.mid_mmd, r.total
            )?;
        }
        Ok(())
    }
}

fn check_data<F: Real>(data: &Tensor<F>, name: &str, window_len: usize, batch: usize) -> Result<()> {
    let [n, c, l] = data.shape();
    if n == 0 {
        return Err(Error::Config(format!("dataset {name} is empty")));
    }
    if c != 1 || l != window_len {
        return Err(Error::Config(format!(
            "dataset {name} has windows of shape ({c}, {l}), model expects (1, {window_len})"
        )));
    }
    if n < batch {
        return Err(Error::Config(format!(
            "dataset {name} has {n} windows, fewer than batch_size {batch}"
        )));
    }
    Ok(())
}

fn finite(v: f64, term: &str, iter: usize) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::numerical(term, format!("loss is {v}")).at_iteration(iter))
    }
}

pub(crate) struct GenStep<F> {
    parts: LossParts,
    fake_a: Tensor<F>,
    fake_b: Tensor<F>,
}

/// Builds the weighted generator objective on a fresh tape, checks every
/// term, and returns the tape, the loss node and the unweighted parts.
pub(crate) fn generator_objective<F: Real>(
    model: &SsrganModel<F>,
    a: &Tensor<F>,
    b: &Tensor<F>,
    cfg: &TrainConfig,
    iter: usize,
) -> Result<(Tape<F>, NodeId, GenStep<F>)> {
    let w = &cfg.weights;
    let mut tape = Tape::new();
    tape.freeze(model.discriminator_params());
    let an = tape.constant(a.clone());
    let bn = tape.constant(b.clone());

    let fwd = model.gen_forward(&mut tape, an)?;
    let rev = model.gen_reverse(&mut tape, bn)?;
    let rec_a = model.gen_reverse(&mut tape, fwd.output)?;
    let rec_b = model.gen_forward(&mut tape, rev.output)?;

    let cycle_a = mae_node(&mut tape, rec_a.output, an)?;
    let cycle_b = mae_node(&mut tape, rec_b.output, bn)?;
    let score_b = model.discriminate_node(&mut tape, fwd.output, Side::B)?;
    let score_a = model.discriminate_node(&mut tape, rev.output, Side::A)?;
    let gan_f = lsgan_node(&mut tape, None, score_b, GanRole::Generator)?;
    let gan_r = lsgan_node(&mut tape, None, score_a, GanRole::Generator)?;

    let mut terms = vec![
        (cycle_a, w.lambda_cyc * w.denoise_gain),
        (cycle_b, w.lambda_cyc),
        (gan_f, w.lambda_gan * w.denoise_gain),
        (gan_r, w.lambda_gan),
    ];

    let ae = if cfg.sn2_enabled {
        let ra = model.autoencode_node(&mut tape, an, Side::A)?;
        let rb = model.autoencode_node(&mut tape, bn, Side::B)?;
        let la = mse_node(&mut tape, ra, an)?;
        let lb = mse_node(&mut tape, rb, bn)?;
        let ae = tape.add(la, lb)?;
        terms.push((ae, w.lambda_ae));
        Some(ae)
    } else {
        None
    };

    let mid = if cfg.sn3_enabled {
        // φ₂(G_f(a)) and φ₁(G_r(b)) are the middles of the cycle passes.
        let ma = mse_node(&mut tape, fwd.middle, rec_a.middle)?;
        let mb = mse_node(&mut tape, rev.middle, rec_b.middle)?;
        let mse = tape.add(ma, mb)?;
        // The mirrored term mk_mmd(φ₂(b), φ₁(a)) is exactly equal.
        let one_side = tape.mk_mmd(fwd.middle, rev.middle, &cfg.mmd)?;
        let mmd = tape.scale(one_side, F::from_f64_lossy(2.0));
        terms.push((mse, w.lambda_mid_mse));
        terms.push((mmd, w.lambda_mid_mmd));
        Some((mse, mmd))
    } else {
        None
    };

    let mut loss: Option<NodeId> = None;
    for (node, weight) in terms {
        let s = tape.scale(node, F::from_f64_lossy(weight));
        loss = Some(match loss {
            Some(acc) => tape.add(acc, s)?,
            None => s,
        });
    }
    let loss = loss.expect("cycle terms always present");

    let val = |t: &Tape<F>, n: NodeId| t.value(n).item().as_f64();
    let parts = LossParts {
        cycle_a: finite(val(&tape, cycle_a), "cycle_a", iter)?,
        cycle_b: finite(val(&tape, cycle_b), "cycle_b", iter)?,
        gan_f: finite(val(&tape, gan_f), "gan_f", iter)?,
        gan_r: finite(val(&tape, gan_r), "gan_r", iter)?,
        ae: match ae {
            Some(n) => finite(val(&tape, n), "ae", iter)?,
            None => 0.0,
        },
        mid_mse: match mid {
            Some((n, _)) => finite(val(&tape, n), "mid_mse", iter)?,
            None => 0.0,
        },
        mid_mmd: match mid {
            Some((_, n)) => finite(val(&tape, n), "mid_mmd", iter)?,
            None => 0.0,
        },
    };
    let step = GenStep {
        parts,
        fake_a: tape.value(rev.output).clone(),
        fake_b: tape.value(fwd.output).clone(),
    };
    Ok((tape, loss, step))
}

pub(crate) fn discriminator_objective<F: Real>(
    model: &SsrganModel<F>,
    a: &Tensor<F>,
    b: &Tensor<F>,
    fake_a: &Tensor<F>,
    fake_b: &Tensor<F>,
    frozen: bool,
) -> Result<(Tape<F>, NodeId)> {
    let mut tape = Tape::new();
    tape.freeze(model.generator_params());
    if frozen {
        tape.freeze(model.discriminator_params());
    }
    let [an, bn, fa, fb] = [a, b, fake_a, fake_b].map(|t| tape.constant(t.clone()));
    let real_b = model.discriminate_node(&mut tape, bn, Side::B)?;
    let fake_b = model.discriminate_node(&mut tape, fb, Side::B)?;
    let real_a = model.discriminate_node(&mut tape, an, Side::A)?;
    let fake_a = model.discriminate_node(&mut tape, fa, Side::A)?;
    let lb = lsgan_node(&mut tape, Some(real_b), fake_b, GanRole::Discriminator)?;
    let la = lsgan_node(&mut tape, Some(real_a), fake_a, GanRole::Discriminator)?;
    let loss = tape.add(la, lb)?;
    Ok((tape, loss))
}

fn update<F: Real>(
    model: &mut SsrganModel<F>,
    tape: &Tape<F>,
    loss: NodeId,
    ids: &BTreeSet<ParamId>,
    adam: &mut AdamState<F>,
    clip: f64,
    iter: usize,
) -> Result<()> {
    model.params.zero_grads(ids);
    tape.backward(loss, &mut model.params)?;
    clip_grad_norm(&mut model.params, ids, clip);
    adam.step(&mut model.params, ids)
        .map_err(|e| e.at_iteration(iter))
}

fn gather<F: Real>(data: &Tensor<F>, rng: &mut ChaCha8Rng, batch: usize) -> Result<Tensor<F>> {
    let rows = sample(rng, data.batch(), batch).into_vec();
    data.gather(&rows)
}

/// Trains `model` in place on unpaired windows `data_a` (contaminated) and
/// `data_b` (clean), both shaped `(n, 1, window_len)`.
pub fn train<F: Real>(
    model: &mut SsrganModel<F>,
    data_a: &Tensor<F>,
    data_b: &Tensor<F>,
    cfg: &TrainConfig,
) -> Result<TrainHistory> {
    train_with(model, data_a, data_b, cfg, |_| {})
}

/// [`train`] with a callback invoked after every iteration.
pub fn train_with<F: Real>(
    model: &mut SsrganModel<F>,
    data_a: &Tensor<F>,
    data_b: &Tensor<F>,
    cfg: &TrainConfig,
    mut on_iter: impl FnMut(&IterationRecord),
) -> Result<TrainHistory> {
    cfg.validate()?;
    if cfg.sharing_enabled != model.config.sharing {
        return Err(Error::Config(format!(
            "sharing_enabled = {} but the model was built with sharing = {}",
            cfg.sharing_enabled, model.config.sharing
        )));
    }
    let wl = model.config.window_len;
    check_data(data_a, "A", wl, cfg.batch_size)?;
    check_data(data_b, "B", wl, cfg.batch_size)?;

    let g_ids = model.generator_params();
    let d_ids = model.discriminator_params();
    let mut g_adam = AdamState::new(cfg.adam)?;
    let mut d_adam = AdamState::new(cfg.adam)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut history = TrainHistory::default();

    for iter in 0..cfg.iterations {
        let a = gather(data_a, &mut rng, cfg.batch_size)?;
        let b = gather(data_b, &mut rng, cfg.batch_size)?;

        let mut sum = LossParts::default();
        let mut last = None;
        for _ in 0..cfg.g_steps_per_d_step {
            let (tape, loss, step) = generator_objective(model, &a, &b, cfg, iter)
                .map_err(|e| e.at_iteration(iter))?;
            update(model, &tape, loss, &g_ids, &mut g_adam, cfg.grad_clip, iter)?;
            let p = step.parts;
            sum.cycle_a += p.cycle_a;
            sum.cycle_b += p.cycle_b;
            sum.gan_f += p.gan_f;
            sum.gan_r += p.gan_r;
            sum.ae += p.ae;
            sum.mid_mse += p.mid_mse;
            sum.mid_mmd += p.mid_mmd;
            last = Some(step);
        }
        let k = cfg.g_steps_per_d_step as f64;
        let mean = LossParts {
            cycle_a: sum.cycle_a / k,
            cycle_b: sum.cycle_b / k,
            gan_f: sum.gan_f / k,
            gan_r: sum.gan_r / k,
            ae: sum.ae / k,
            mid_mse: sum.mid_mse / k,
            mid_mmd: sum.mid_mmd / k,
        };
        let last = last.expect("at least one generator step");

        let d_update = iter < cfg.iterations - cfg.final_g_only_iters;
        let (tape, loss) =
            discriminator_objective(model, &a, &b, &last.fake_a, &last.fake_b, !d_update)?;
        let gan_d = finite(tape.value(loss).item().as_f64(), "gan_d", iter)?;
        if d_update {
            update(model, &tape, loss, &d_ids, &mut d_adam, cfg.grad_clip, iter)?;
        }

        let record = IterationRecord {
            iter,
            cycle: mean.cycle(),
            gan_g: mean.gan(),
            gan_d,
            ae: mean.ae,
            mid_mse: mean.mid_mse,
            mid_mmd: mean.mid_mmd,
            total: total_loss(&mean, &cfg.weights).map_err(|e| e.at_iteration(iter))?,
            g_updates: cfg.g_steps_per_d_step,
            d_updated: d_update,
        };
        on_iter(&record);
        history.records.push(record);
    }
    Ok(history)
}
