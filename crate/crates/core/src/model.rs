//! The five-block reversible generator, its two autoencoders, the
//! middle-content feature maps and the two patch discriminators.
//!
//! Every block owns one kernel and can be applied either as a convolution or
//! as that convolution's exact adjoint. The forward generator `G_f` runs
//! B1→B5 in each block's forward mode; the reverse generator `G_r` runs
//! B5→B1 with every mode flipped. With sharing on, both directions read the
//! same parameter buffers.

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{ParamId, ParamStore};
use crate::real::Real;
use crate::tape::{NodeId, Tape};
use crate::tensor::{ConvSpec, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BlockId {
    /// B1, down-sampling.
    Down,
    /// B2, feature conversion on the contaminated side.
    FeatureA,
    /// B3, content features.
    Content,
    /// B4, feature conversion on the clean side.
    FeatureB,
    /// B5, up-sampling.
    Up,
}

impl BlockId {
    pub const ALL: [BlockId; 5] = [
        BlockId::Down,
        BlockId::FeatureA,
        BlockId::Content,
        BlockId::FeatureB,
        BlockId::Up,
    ];

    pub fn label(self) -> &'static str {
        match self {
            BlockId::Down => "B1",
            BlockId::FeatureA => "B2",
            BlockId::Content => "B3",
            BlockId::FeatureB => "B4",
            BlockId::Up => "B5",
        }
    }

    pub fn forward_mode(self) -> Mode {
        match self {
            BlockId::Up => Mode::Adjoint,
            _ => Mode::Conv,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Conv,
    Adjoint,
}

impl Mode {
    pub fn flip(self) -> Mode {
        match self {
            Mode::Conv => Mode::Adjoint,
            Mode::Adjoint => Mode::Conv,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    A,
    B,
}

/// Block geometry in the forward (contaminated → clean) direction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockConfig {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_size: usize,
    pub stride: usize,
    pub padding: usize,
}

impl BlockConfig {
    const fn new(
        in_channels: usize,
        out_channels: usize,
        kernel_size: usize,
        stride: usize,
        padding: usize,
    ) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel_size,
            stride,
            padding,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub window_len: usize,
    /// B1..B5 in forward order.
    pub blocks: [BlockConfig; 5],
    pub discriminator: Vec<ConvSpec>,
    pub slope: f64,
    pub init_std: f64,
    pub sharing: bool,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            window_len: 250,
            blocks: [
                BlockConfig::new(1, 16, 15, 2, 7),
                BlockConfig::new(16, 32, 7, 1, 3),
                BlockConfig::new(32, 32, 7, 1, 3),
                BlockConfig::new(32, 16, 7, 1, 3),
                BlockConfig::new(16, 1, 15, 2, 7),
            ],
            discriminator: vec![
                ConvSpec {
                    in_channels: 1,
                    out_channels: 16,
                    kernel_size: 15,
                    stride: 2,
                    padding: 7,
                },
                ConvSpec {
                    in_channels: 16,
                    out_channels: 32,
                    kernel_size: 7,
                    stride: 2,
                    padding: 3,
                },
                ConvSpec {
                    in_channels: 32,
                    out_channels: 1,
                    kernel_size: 7,
                    stride: 1,
                    padding: 3,
                },
            ],
            slope: 0.2,
            init_std: 0.02,
            sharing: true,
            seed: 0,
        }
    }
}

impl ModelConfig {
    /// A tiny geometry with every mechanism of the default one, for
    /// finite-difference checks.
    pub fn small() -> Self {
        Self {
            window_len: 24,
            blocks: [
                BlockConfig::new(1, 3, 5, 2, 2),
                BlockConfig::new(3, 4, 3, 1, 1),
                BlockConfig::new(4, 4, 3, 1, 1),
                BlockConfig::new(4, 3, 3, 1, 1),
                BlockConfig::new(3, 1, 5, 2, 2),
            ],
            discriminator: vec![
                ConvSpec {
                    in_channels: 1,
                    out_channels: 3,
                    kernel_size: 5,
                    stride: 2,
                    padding: 2,
                },
                ConvSpec {
                    in_channels: 3,
                    out_channels: 4,
                    kernel_size: 3,
                    stride: 2,
                    padding: 1,
                },
                ConvSpec {
                    in_channels: 4,
                    out_channels: 1,
                    kernel_size: 3,
                    stride: 1,
                    padding: 1,
                },
            ],
            slope: 0.2,
            init_std: 0.3,
            sharing: true,
            seed: 0,
        }
    }

    fn block_spec(&self, i: usize) -> Result<ConvSpec> {
        let b = &self.blocks[i];
        let id = BlockId::ALL[i];
        let spec = match id.forward_mode() {
            Mode::Conv => ConvSpec {
                in_channels: b.in_channels,
                out_channels: b.out_channels,
                kernel_size: b.kernel_size,
                stride: b.stride,
                padding: b.padding,
            },
            Mode::Adjoint => ConvSpec {
                in_channels: b.out_channels,
                out_channels: b.in_channels,
                kernel_size: b.kernel_size,
                stride: b.stride,
                padding: b.padding,
            },
        };
        spec.validate()
            .map_err(|e| Error::Config(format!("{}: {e}", id.label())))?;
        Ok(spec)
    }

    /// Checks the block chain and returns each block's conv-direction spec
    /// and conv-direction input length.
    pub fn layout(&self) -> Result<Vec<(ConvSpec, usize)>> {
        let cfg_err = |m: String| Error::Config(m);
        if self.window_len == 0 || !self.window_len.is_multiple_of(2) {
            return Err(cfg_err(format!(
                "window_len must be positive and even, got {}",
                self.window_len
            )));
        }
        if !(0.0..=1.0).contains(&self.slope) {
            return Err(cfg_err(format!("slope must be in [0, 1], got {}", self.slope)));
        }
        if !(self.init_std.is_finite() && self.init_std >= 0.0) {
            return Err(cfg_err("init_std must be finite and >= 0".into()));
        }
        let b = &self.blocks;
        if b[0].in_channels != 1 || b[4].out_channels != 1 {
            return Err(cfg_err("generator must map 1 channel to 1 channel".into()));
        }
        for i in 0..4 {
            if b[i].out_channels != b[i + 1].in_channels {
                return Err(cfg_err(format!(
                    "channel chain broken between {} ({} out) and {} ({} in)",
                    BlockId::ALL[i].label(),
                    b[i].out_channels,
                    BlockId::ALL[i + 1].label(),
                    b[i + 1].in_channels
                )));
            }
        }
        if b[0].stride != 2 || b[4].stride != 2 {
            return Err(cfg_err("B1 and B5 must have stride 2".into()));
        }
        for (i, blk) in b.iter().enumerate().take(4).skip(1) {
            if blk.stride != 1 {
                return Err(cfg_err(format!(
                    "{} must have stride 1",
                    BlockId::ALL[i].label()
                )));
            }
        }
        if b[2].in_channels != b[2].out_channels {
            return Err(cfg_err("B3 must preserve its channel count".into()));
        }

        let mut out = Vec::with_capacity(5);
        let mut len = self.window_len;
        for i in 0..4 {
            let spec = self.block_spec(i)?;
            let next = spec
                .output_len(len)
                .map_err(|e| Error::Config(format!("{}: {e}", BlockId::ALL[i].label())))?;
            if i >= 1 && next != len {
                return Err(cfg_err(format!(
                    "{} must preserve length ({len} -> {next})",
                    BlockId::ALL[i].label()
                )));
            }
            out.push((spec, len));
            len = next;
        }
        let up = self.block_spec(4)?;
        let reach = up
            .output_len(self.window_len)
            .map_err(|e| Error::Config(format!("B5: {e}")))?;
        if reach != len {
            return Err(cfg_err(format!(
                "B5 up-samples {reach} samples to {}, but the middle has {len}",
                self.window_len
            )));
        }
        out.push((up, self.window_len));

        if self.discriminator.is_empty() {
            return Err(cfg_err("discriminator needs at least one layer".into()));
        }
        let mut ch = 1;
        let mut dlen = self.window_len;
        for (i, spec) in self.discriminator.iter().enumerate() {
            spec.validate()
                .map_err(|e| Error::Config(format!("discriminator layer {i}: {e}")))?;
            if spec.in_channels != ch {
                return Err(cfg_err(format!(
                    "discriminator layer {i} expects {} channels, gets {ch}",
                    spec.in_channels
                )));
            }
            dlen = spec
                .output_len(dlen)
                .map_err(|e| Error::Config(format!("discriminator layer {i}: {e}")))?;
            ch = spec.out_channels;
        }
        if ch != 1 {
            return Err(cfg_err("discriminator head must output 1 channel".into()));
        }
        Ok(out)
    }

    /// Shape of the middle-content feature map for one window.
    pub fn middle_shape(&self) -> Result<(usize, usize)> {
        let layout = self.layout()?;
        let (spec, len) = layout[2];
        Ok((spec.out_channels, spec.output_len(len)?))
    }
}

#[derive(Clone, Debug)]
pub struct Block {
    pub id: BlockId,
    /// Geometry of the convolution direction.
    pub spec: ConvSpec,
    pub forward_mode: Mode,
    /// Input length of the convolution direction.
    pub conv_input_len: usize,
    pub weight: ParamId,
    /// Per-channel offset on the convolution's input side.
    pub in_bias: ParamId,
    /// Per-channel offset on the convolution's output side.
    pub out_bias: ParamId,
}

impl Block {
    pub fn params(&self) -> [ParamId; 3] {
        [self.weight, self.in_bias, self.out_bias]
    }

    pub fn conv_output_len(&self) -> usize {
        self.spec
            .output_len(self.conv_input_len)
            .expect("validated at build time")
    }

    /// Applies the block in `mode`. Conv: `W(x - b_in) + b_out`.
    /// Adjoint: `Wᵀ(y - b_out) + b_in`, so both modes read every buffer and
    /// an orthogonal `W` makes the adjoint mode the exact inverse.
    pub fn apply<F: Real>(
        &self,
        tape: &mut Tape<F>,
        store: &ParamStore<F>,
        x: NodeId,
        mode: Mode,
    ) -> Result<NodeId> {
        let w = tape.param(store, self.weight);
        let b_in = tape.param(store, self.in_bias);
        let b_out = tape.param(store, self.out_bias);
        let (pre, post) = match mode {
            Mode::Conv => (b_in, b_out),
            Mode::Adjoint => (b_out, b_in),
        };
        let neg = tape.scale(pre, -F::one());
        let centred = tape.add_bias(x, neg)?;
        let y = match mode {
            Mode::Conv => tape.conv1d(centred, w, None, self.spec)?,
            Mode::Adjoint => tape.conv1d_adjoint(centred, w, self.spec, self.conv_input_len)?,
        };
        tape.add_bias(y, post)
    }
}

#[derive(Clone, Debug)]
pub struct DiscLayer {
    pub spec: ConvSpec,
    pub weight: ParamId,
    pub bias: ParamId,
}

#[derive(Clone, Debug)]
pub struct Discriminator {
    pub layers: Vec<DiscLayer>,
    pub slope: f64,
}

impl Discriminator {
    pub fn params(&self) -> impl Iterator<Item = ParamId> + '_ {
        self.layers.iter().flat_map(|l| [l.weight, l.bias])
    }

    /// Patch scores averaged over time: `(n, 1, L) -> (n, 1, 1)`.
    pub fn apply<F: Real>(
        &self,
        tape: &mut Tape<F>,
        store: &ParamStore<F>,
        x: NodeId,
    ) -> Result<NodeId> {
        let slope = F::from_f64_lossy(self.slope);
        let mut h = x;
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let w = tape.param(store, layer.weight);
            let b = tape.param(store, layer.bias);
            h = tape.conv1d(h, w, Some(b), layer.spec)?;
            if i < last {
                h = tape.leaky_relu(h, slope);
            }
        }
        Ok(tape.mean_over_length(h))
    }
}

/// Output of one generator pass with its middle-content feature map.
#[derive(Clone, Copy, Debug)]
pub struct GenPass {
    pub middle: NodeId,
    pub output: NodeId,
}

#[derive(Clone, Debug)]
pub struct SsrganModel<F> {
    pub config: ModelConfig,
    pub params: ParamStore<F>,
    forward_blocks: Vec<Block>,
    reverse_blocks: Vec<Block>,
    disc_a: Discriminator,
    disc_b: Discriminator,
    /// Amplitude scale the training windows were divided by.
    pub norm_scale: f64,
}

fn make_blocks<F: Real>(
    layout: &[(ConvSpec, usize)],
    store: &mut ParamStore<F>,
    suffix: &str,
) -> Vec<Block> {
    BlockId::ALL
        .iter()
        .zip(layout)
        .map(|(&id, &(spec, conv_input_len))| {
            let name = format!("{}{suffix}", id.label());
            Block {
                id,
                spec,
                forward_mode: id.forward_mode(),
                conv_input_len,
                weight: store.add(format!("{name}.weight"), Tensor::zeros(spec.weight_shape())),
                in_bias: store.add(
                    format!("{name}.in_bias"),
                    Tensor::zeros([1, spec.in_channels, 1]),
                ),
                out_bias: store.add(
                    format!("{name}.out_bias"),
                    Tensor::zeros([1, spec.out_channels, 1]),
                ),
            }
        })
        .collect()
}

fn make_disc<F: Real>(cfg: &ModelConfig, store: &mut ParamStore<F>, name: &str) -> Discriminator {
    let layers = cfg
        .discriminator
        .iter()
        .enumerate()
        .map(|(i, &spec)| DiscLayer {
            spec,
            weight: store.add(format!("{name}.{i}.weight"), Tensor::zeros(spec.weight_shape())),
            bias: store.add(format!("{name}.{i}.bias"), Tensor::zeros([1, spec.out_channels, 1])),
        })
        .collect();
    Discriminator {
        layers,
        slope: cfg.slope,
    }
}

impl<F: Real> SsrganModel<F> {
    /// Builds a model with zero-mean Gaussian kernels (std `init_std`) and
    /// zero biases, seeded by `config.seed`.
    pub fn build(config: ModelConfig) -> Result<Self> {
        let mut model = Self::build_uninit(config)?;
        let std = model.config.init_std;
        let mut rng = ChaCha8Rng::seed_from_u64(model.config.seed);
        let normal = Normal::new(0.0, std).map_err(|e| Error::Config(e.to_string()))?;
        let ids: Vec<ParamId> = model.params.ids().collect();
        for id in ids {
            let p = model.params.get_mut(id);
            if p.name.ends_with(".weight") {
                for v in p.value.data_mut() {
                    *v = F::from_f64_lossy(normal.sample(&mut rng));
                }
            }
        }
        Ok(model)
    }

    /// Same structure as [`SsrganModel::build`] with every parameter zero.
    pub fn build_uninit(config: ModelConfig) -> Result<Self> {
        let layout = config.layout()?;
        let mut params = ParamStore::new();
        let forward_blocks = make_blocks(&layout, &mut params, "");
        let reverse_blocks = if config.sharing {
            forward_blocks.clone()
        } else {
            make_blocks(&layout, &mut params, ".rev")
        };
        let disc_a = make_disc(&config, &mut params, "D_A");
        let disc_b = make_disc(&config, &mut params, "D_B");
        Ok(Self {
            config,
            params,
            forward_blocks,
            reverse_blocks,
            disc_a,
            disc_b,
            norm_scale: 1.0,
        })
    }

    pub fn forward_blocks(&self) -> &[Block] {
        &self.forward_blocks
    }

    pub fn reverse_blocks(&self) -> &[Block] {
        &self.reverse_blocks
    }

    pub fn block(&self, id: BlockId) -> &Block {
        &self.forward_blocks[id as usize]
    }

    pub fn reverse_block(&self, id: BlockId) -> &Block {
        &self.reverse_blocks[id as usize]
    }

    pub fn discriminator(&self, side: Side) -> &Discriminator {
        match side {
            Side::A => &self.disc_a,
            Side::B => &self.disc_b,
        }
    }

    /// Buffers reachable from `G_f`.
    pub fn forward_params(&self) -> BTreeSet<ParamId> {
        self.forward_blocks.iter().flat_map(Block::params).collect()
    }

    /// Buffers reachable from `G_r`.
    pub fn reverse_params(&self) -> BTreeSet<ParamId> {
        self.reverse_blocks.iter().flat_map(Block::params).collect()
    }

    pub fn generator_params(&self) -> BTreeSet<ParamId> {
        let mut s = self.forward_params();
        s.extend(self.reverse_params());
        s
    }

    pub fn discriminator_params(&self) -> BTreeSet<ParamId> {
        self.disc_a.params().chain(self.disc_b.params()).collect()
    }

    pub fn param_count(&self, ids: &BTreeSet<ParamId>) -> usize {
        self.params.count(ids)
    }

    fn check_window(&self, tape: &Tape<F>, x: NodeId, what: &str) -> Result<()> {
        let [_, c, l] = tape.value(x).shape();
        if c != 1 || l != self.config.window_len {
            return Err(Error::invalid(format!(
                "{what}: expected windows of shape (n, 1, {}), got (n, {c}, {l})",
                self.config.window_len
            )));
        }
        Ok(())
    }

    fn act(&self, tape: &mut Tape<F>, x: NodeId) -> NodeId {
        tape.leaky_relu(x, F::from_f64_lossy(self.config.slope))
    }

    /// `G_f`: B1..B5 in forward modes, activation after all but the last.
    pub fn gen_forward(&self, tape: &mut Tape<F>, a: NodeId) -> Result<GenPass> {
        self.check_window(tape, a, "generator_forward")?;
        let mut h = a;
        let mut middle = a;
        for (i, blk) in self.forward_blocks.iter().enumerate() {
            h = blk.apply(tape, &self.params, h, blk.forward_mode)?;
            if i < 4 {
                h = self.act(tape, h);
            }
            if blk.id == BlockId::Content {
                middle = h;
            }
        }
        Ok(GenPass { middle, output: h })
    }

    /// `G_r`: B5..B1 with every mode flipped, activation after all but the last.
    pub fn gen_reverse(&self, tape: &mut Tape<F>, b: NodeId) -> Result<GenPass> {
        self.check_window(tape, b, "generator_reverse")?;
        let mut h = b;
        let mut middle = b;
        for (i, blk) in self.reverse_blocks.iter().rev().enumerate() {
            h = blk.apply(tape, &self.params, h, blk.forward_mode.flip())?;
            if i < 4 {
                h = self.act(tape, h);
            }
            if blk.id == BlockId::Content {
                middle = h;
            }
        }
        Ok(GenPass { middle, output: h })
    }

    /// φ₁ (side A, B1→B3 forward) or φ₂ (side B, B5→B3 reversed).
    pub fn middle_content_node(&self, tape: &mut Tape<F>, x: NodeId, side: Side) -> Result<NodeId> {
        let what = "middle_content";
        self.check_window(tape, x, what)?;
        let mut h = x;
        match side {
            Side::A => {
                for blk in &self.forward_blocks[..3] {
                    h = blk.apply(tape, &self.params, h, blk.forward_mode)?;
                    h = self.act(tape, h);
                }
            }
            Side::B => {
                for blk in self.reverse_blocks[2..].iter().rev() {
                    h = blk.apply(tape, &self.params, h, blk.forward_mode.flip())?;
                    h = self.act(tape, h);
                }
            }
        }
        Ok(h)
    }

    /// AE_A: B1 conv → act → B1 adjoint. AE_B: B5 conv → act → B5 adjoint.
    pub fn autoencode_node(&self, tape: &mut Tape<F>, x: NodeId, side: Side) -> Result<NodeId> {
        self.check_window(tape, x, "autoencode")?;
        let blk = match side {
            Side::A => &self.forward_blocks[0],
            Side::B => &self.reverse_blocks[4],
        };
        let h = blk.apply(tape, &self.params, x, Mode::Conv)?;
        let h = self.act(tape, h);
        blk.apply(tape, &self.params, h, Mode::Adjoint)
    }

    /// `D_A` scores windows of domain A, `D_B` windows of domain B.
    pub fn discriminate_node(&self, tape: &mut Tape<F>, x: NodeId, side: Side) -> Result<NodeId> {
        self.check_window(tape, x, "discriminate")?;
        self.discriminator(side).apply(tape, &self.params, x)
    }

    fn frozen_tape(&self) -> Tape<F> {
        let mut tape = Tape::new();
        tape.freeze(self.params.ids());
        tape
    }

    fn run(
        &self,
        x: &Tensor<F>,
        f: impl FnOnce(&Self, &mut Tape<F>, NodeId) -> Result<NodeId>,
    ) -> Result<Tensor<F>> {
        let mut tape = self.frozen_tape();
        let xn = tape.constant(x.clone());
        let out = f(self, &mut tape, xn)?;
        Ok(tape.value(out).clone())
    }

    pub fn generator_forward(&self, a: &Tensor<F>) -> Result<Tensor<F>> {
        self.run(a, |m, t, x| Ok(m.gen_forward(t, x)?.output))
    }

    pub fn generator_reverse(&self, b: &Tensor<F>) -> Result<Tensor<F>> {
        self.run(b, |m, t, x| Ok(m.gen_reverse(t, x)?.output))
    }

    pub fn middle_content(&self, x: &Tensor<F>, side: Side) -> Result<Tensor<F>> {
        self.run(x, |m, t, x| m.middle_content_node(t, x, side))
    }

    pub fn autoencode(&self, x: &Tensor<F>, side: Side) -> Result<Tensor<F>> {
        self.run(x, |m, t, x| m.autoencode_node(t, x, side))
    }

    /// One score per window.
    pub fn discriminate(&self, x: &Tensor<F>, side: Side) -> Result<Vec<F>> {
        Ok(self
            .run(x, |m, t, x| m.discriminate_node(t, x, side))?
            .into_data())
    }

    /// Sets every parameter to zero.
    pub fn zero_params(&mut self) {
        let ids: Vec<ParamId> = self.params.ids().collect();
        for id in ids {
            self.params
                .get_mut(id)
                .value
                .data_mut()
                .iter_mut()
                .for_each(|v| *v = F::zero());
        }
    }

    /// Copy of this model with parameters converted to another precision.
    pub fn cast<G: Real>(&self) -> SsrganModel<G> {
        let mut params = ParamStore::new();
        for (_, p) in self.params.iter() {
            params.add(p.name.clone(), p.value.cast());
        }
        SsrganModel {
            config: self.config.clone(),
            params,
            forward_blocks: self.forward_blocks.clone(),
            reverse_blocks: self.reverse_blocks.clone(),
            disc_a: self.disc_a.clone(),
            disc_b: self.disc_b.clone(),
            norm_scale: self.norm_scale,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn randn(shape: [usize; 3], seed: u64) -> Tensor<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = Normal::new(0.0, 1.0).unwrap();
        Tensor::from_fn(shape, |_, _, _| n.sample(&mut rng))
    }

    #[test]
    fn default_shapes() {
        let m = SsrganModel::<f64>::build(ModelConfig::default()).unwrap();
        let a = randn([3, 1, 250], 1);
        assert_eq!(m.generator_forward(&a).unwrap().shape(), [3, 1, 250]);
        assert_eq!(m.generator_reverse(&a).unwrap().shape(), [3, 1, 250]);
        assert_eq!(m.autoencode(&a, Side::A).unwrap().shape(), [3, 1, 250]);
        assert_eq!(m.autoencode(&a, Side::B).unwrap().shape(), [3, 1, 250]);
        let p1 = m.middle_content(&a, Side::A).unwrap();
        let p2 = m.middle_content(&a, Side::B).unwrap();
        assert_eq!(p1.shape(), [3, 32, 125]);
        assert_eq!(p1.shape(), p2.shape());
        assert_eq!(ModelConfig::default().middle_shape().unwrap(), (32, 125));
        assert_eq!(m.discriminate(&a, Side::B).unwrap().len(), 3);
    }

    #[test]
    fn sharing_counts() {
        let on = SsrganModel::<f32>::build(ModelConfig::default()).unwrap();
        assert_eq!(on.forward_params(), on.reverse_params());
        let gf = on.param_count(&on.forward_params());
        assert_eq!(on.param_count(&on.generator_params()), gf);

        let off = SsrganModel::<f32>::build(ModelConfig {
            sharing: false,
            ..ModelConfig::default()
        })
        .unwrap();
        assert!(off.forward_params().is_disjoint(&off.reverse_params()));
        assert_eq!(off.param_count(&off.generator_params()), 2 * gf);
    }

    #[test]
    fn broken_chain_is_config_error() {
        let mut cfg = ModelConfig::default();
        cfg.blocks[2].in_channels = 30;
        assert!(matches!(
            SsrganModel::<f64>::build(cfg).unwrap_err(),
            Error::Config(_)
        ));
        let odd = ModelConfig {
            window_len: 251,
            ..ModelConfig::default()
        };
        assert!(SsrganModel::<f64>::build(odd).is_err());
    }

    #[test]
    fn zero_weights_give_zero_outputs() {
        let mut m = SsrganModel::<f64>::build(ModelConfig::default()).unwrap();
        m.zero_params();
        let a = randn([2, 1, 250], 3);
        for out in [
            m.generator_forward(&a).unwrap(),
            m.generator_reverse(&a).unwrap(),
            m.middle_content(&a, Side::A).unwrap(),
            m.middle_content(&a, Side::B).unwrap(),
            m.autoencode(&a, Side::A).unwrap(),
        ] {
            assert!(out.data().iter().all(|&v| v == 0.0));
        }
        assert_eq!(m.discriminate(&a, Side::A).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn wrong_shape_is_rejected() {
        let m = SsrganModel::<f64>::build(ModelConfig::default()).unwrap();
        let bad = randn([2, 1, 200], 0);
        assert!(matches!(
            m.generator_forward(&bad).unwrap_err(),
            Error::InvalidArgument(_)
        ));
        assert!(m.discriminate(&randn([1, 2, 250], 0), Side::A).is_err());
    }

    #[test]
    fn shared_weight_mutation_reaches_both_directions() {
        let mut m = SsrganModel::<f64>::build(ModelConfig::default()).unwrap();
        let a = randn([1, 1, 250], 5);
        let (f0, r0) = (m.generator_forward(&a).unwrap(), m.generator_reverse(&a).unwrap());
        let w = m.block(BlockId::Content).weight;
        m.params.get_mut(w).value.data_mut()[0] += 0.5;
        assert_ne!(m.generator_forward(&a).unwrap(), f0);
        assert_ne!(m.generator_reverse(&a).unwrap(), r0);
    }

    #[test]
    fn unshared_weight_mutation_stays_local() {
        let mut m = SsrganModel::<f64>::build(ModelConfig {
            sharing: false,
            ..ModelConfig::default()
        })
        .unwrap();
        let a = randn([1, 1, 250], 5);
        let (f0, r0) = (m.generator_forward(&a).unwrap(), m.generator_reverse(&a).unwrap());
        let w = m.block(BlockId::Content).weight;
        m.params.get_mut(w).value.data_mut()[0] += 0.5;
        assert_ne!(m.generator_forward(&a).unwrap(), f0);
        assert_eq!(m.generator_reverse(&a).unwrap(), r0);
    }

    #[test]
    fn outputs_finite_for_large_inputs() {
        let m = SsrganModel::<f32>::build(ModelConfig::default()).unwrap();
        let a = randn([2, 1, 250], 9).map(|v| (v * 1e4).clamp(-1e4, 1e4)).cast::<f32>();
        for out in [m.generator_forward(&a).unwrap(), m.generator_reverse(&a).unwrap()] {
            assert!(out.data().iter().all(|v| v.is_finite()));
        }
        assert!(m.discriminate(&a, Side::B).unwrap().iter().all(|v| v.is_finite()));
    }
}
