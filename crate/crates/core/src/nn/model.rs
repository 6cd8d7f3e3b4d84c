//! Layer descriptors, validation, and the runtime network that routes its
//! split points over simulated MIMO links.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::activation::{crelu, crelu_backward};
use super::batchnorm::{BatchNormCache, BatchNormState};
use super::quantize::{qam_activate, qam_backward, Constellation};
use crate::beamform::{backward_subspace_loss, forward_subspace_loss, CovarianceAccumulator};
use crate::channel::{gen_channel, ChannelState, LinkStats, MobilityConfig, PathParams};
use crate::clinalg::{random_complex_gaussian, ComplexMatrix};
use crate::error::{Error, Result};
use crate::oac::{
    conv_disassemble, conv_rearrange_adjoint, conv_rearrange_batch, conv_reassemble, ConvGeometry,
    FeatureShape, ForwardTrace, OacLinearLayer,
};

/// One entry of a model description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum LayerSpec {
    /// Fully connected layer computed over the air.
    OacLinear { out: usize },
    /// Convolution computed over the air, one transmission per output location.
    OacConv {
        out_channels: usize,
        kernel: [usize; 2],
        #[serde(default)]
        padding: usize,
        #[serde(default = "one")]
        stride: usize,
    },
    /// Local fully connected layer.
    Dense { out: usize },
    /// Local convolution.
    Conv {
        out_channels: usize,
        kernel: [usize; 2],
        #[serde(default)]
        padding: usize,
        #[serde(default = "one")]
        stride: usize,
    },
    Crelu,
    Qam,
    /// Placeholder resolved to `crelu` or `qam` by the experiment's activation setting.
    Activation,
    Batchnorm,
    Residual { layers: Vec<LayerSpec> },
    /// Global average over spatial positions.
    AvgPool,
    /// Final local linear layer producing one logit per class.
    DenseHead,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub layers: Vec<LayerSpec>,
}

/// Antenna counts, streams per round, and multipath count for every split point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MimoConfig {
    pub n_t: usize,
    pub n_r: usize,
    pub r: usize,
    #[serde(default = "default_paths")]
    pub n_paths: usize,
}

fn default_paths() -> usize {
    8
}

impl Default for MimoConfig {
    fn default() -> Self {
        Self {
            n_t: 64,
            n_r: 64,
            r: 8,
            n_paths: 8,
        }
    }
}

impl MimoConfig {
    pub fn path_params(&self) -> PathParams {
        PathParams {
            n_paths: self.n_paths,
            ..PathParams::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivationKind {
    Crelu,
    Qam,
}

/// Everything besides the layer list that building a model depends on.
#[derive(Debug, Clone)]
pub struct BuildContext {
    pub input: FeatureShape,
    pub classes: usize,
    pub mimo: MimoConfig,
    pub activation: ActivationKind,
    pub constellation: Constellation,
    /// `None` means a noiseless link.
    pub snr_db: Option<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Backprop {
    /// Gradients cross the link in reverse (reciprocity); `H` is never read.
    #[default]
    OverTheAir,
    /// Reference path reading `H` directly.
    Ideal,
}

/// Purposes for derived random streams.
#[derive(Debug, Clone, Copy)]
#[repr(u64)]
pub enum Stream {
    Init = 1,
    ChannelDraw = 2,
    LinkNoise = 3,
    Shuffle = 4,
}

/// Independent generator for `(purpose, ordinal)` under a master seed.
pub fn stream_rng(seed: u64, purpose: Stream, ordinal: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((purpose as u64) << 32) | ordinal);
    rng
}

fn spec_err(path: &str, message: impl Into<String>) -> Error {
    Error::Config {
        path: path.to_string(),
        message: message.into(),
    }
}

impl ModelSpec {
    /// Checks the dimension chain and returns the output shape.
    pub fn validate(&self, ctx: &BuildContext) -> Result<FeatureShape> {
        if self.layers.is_empty() {
            return Err(spec_err("model.layers", "model has no layers"));
        }
        let out = validate_chain(&self.layers, ctx.input, ctx, "model.layers", true)?;
        if !matches!(self.layers.last(), Some(LayerSpec::DenseHead)) {
            return Err(spec_err("model.layers", "last layer must be dense_head"));
        }
        Ok(out)
    }

    /// Positions (top-level, depth-first numbering) of the over-the-air layers.
    pub fn split_points(&self) -> Vec<usize> {
        fn walk(layers: &[LayerSpec], next: &mut usize, out: &mut Vec<usize>) {
            for l in layers {
                match l {
                    LayerSpec::Residual { layers } => walk(layers, next, out),
                    LayerSpec::OacLinear { .. } | LayerSpec::OacConv { .. } => {
                        out.push(*next);
                        *next += 1;
                    }
                    _ => *next += 1,
                }
            }
        }
        let mut out = Vec::new();
        walk(&self.layers, &mut 0, &mut out);
        out
    }

    /// Copy with every `Activation` placeholder replaced.
    pub fn resolve_activation(&self, kind: ActivationKind) -> ModelSpec {
        fn map(layers: &[LayerSpec], kind: ActivationKind) -> Vec<LayerSpec> {
            layers
                .iter()
                .map(|l| match l {
                    LayerSpec::Activation => match kind {
                        ActivationKind::Crelu => LayerSpec::Crelu,
                        ActivationKind::Qam => LayerSpec::Qam,
                    },
                    LayerSpec::Residual { layers } => LayerSpec::Residual {
                        layers: map(layers, kind),
                    },
                    other => other.clone(),
                })
                .collect()
        }
        ModelSpec {
            layers: map(&self.layers, kind),
        }
    }
}

fn validate_chain(
    layers: &[LayerSpec],
    mut shape: FeatureShape,
    ctx: &BuildContext,
    path: &str,
    top: bool,
) -> Result<FeatureShape> {
    for (i, layer) in layers.iter().enumerate() {
        let here = format!("{path}[{i}]");
        if matches!(layer, LayerSpec::DenseHead) && !(top && i + 1 == layers.len()) {
            return Err(spec_err(&here, "dense_head must be the final layer"));
        }
        shape = match layer {
            LayerSpec::OacLinear { out } | LayerSpec::Dense { out } => {
                if *out == 0 {
                    return Err(spec_err(&here, "output width must be >= 1"));
                }
                if matches!(layer, LayerSpec::OacLinear { .. }) {
                    check_mimo(&ctx.mimo, &here)?;
                }
                FeatureShape::flat(*out)
            }
            LayerSpec::OacConv {
                out_channels,
                kernel,
                padding,
                stride,
            }
            | LayerSpec::Conv {
                out_channels,
                kernel,
                padding,
                stride,
            } => {
                if *out_channels == 0 {
                    return Err(spec_err(&here, "out_channels must be >= 1"));
                }
                if matches!(layer, LayerSpec::OacConv { .. }) {
                    check_mimo(&ctx.mimo, &here)?;
                }
                let geom = ConvGeometry::new(kernel[0], kernel[1], *padding, *stride);
                let (h, w) = geom
                    .output_hw(&shape)
                    .map_err(|e| spec_err(&here, e.to_string()))?;
                FeatureShape::new(*out_channels, h, w)
            }
            LayerSpec::Crelu | LayerSpec::Qam | LayerSpec::Activation | LayerSpec::Batchnorm => shape,
            LayerSpec::Residual { layers } => {
                let inner = validate_chain(layers, shape, ctx, &format!("{here}.layers"), false)?;
                if inner != shape {
                    return Err(spec_err(
                        &here,
                        format!("residual branch maps {shape:?} to {inner:?}"),
                    ));
                }
                shape
            }
            LayerSpec::AvgPool => FeatureShape::flat(shape.channels),
            LayerSpec::DenseHead => FeatureShape::flat(ctx.classes),
        };
    }
    Ok(shape)
}

fn check_mimo(mimo: &MimoConfig, path: &str) -> Result<()> {
    if mimo.n_t == 0 || mimo.n_r == 0 || mimo.r == 0 {
        return Err(spec_err(path, "mimo dimensions must be >= 1"));
    }
    if mimo.r > mimo.n_t.min(mimo.n_r) {
        return Err(spec_err(path, "mimo.r exceeds min(n_t, n_r)"));
    }
    Ok(())
}

/// A simulated link owned by one split point.
#[derive(Debug, Clone)]
pub struct Link {
    pub channel: ChannelState,
    pub paths: PathParams,
    noise_rng: ChaCha8Rng,
    draw_rng: ChaCha8Rng,
}

impl Link {
    pub fn evolve(&mut self, mobility: &MobilityConfig) -> Result<()> {
        self.channel = self.channel.evolved(mobility, &self.paths, &mut self.draw_rng)?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct ConvPlan {
    input: FeatureShape,
    geom: ConvGeometry,
    out_h: usize,
    out_w: usize,
}

impl ConvPlan {
    fn locations(&self) -> usize {
        self.out_h * self.out_w
    }
}

#[derive(Debug, Clone)]
pub struct OacGrads {
    pub p: ComplexMatrix,
    pub w_tilde: Vec<ComplexMatrix>,
    pub c: ComplexMatrix,
    pub bias: ComplexMatrix,
}

impl OacGrads {
    fn zeros(layer: &OacLinearLayer) -> Self {
        Self {
            p: ComplexMatrix::zeros(layer.p.rows(), layer.p.cols()),
            w_tilde: layer
                .w_tilde
                .iter()
                .map(|w| ComplexMatrix::zeros(w.rows(), w.cols()))
                .collect(),
            c: ComplexMatrix::zeros(layer.c.rows(), layer.c.cols()),
            bias: ComplexMatrix::zeros(layer.n_o, 1),
        }
    }
}

/// A split point: the OAC layer, its link, and what backprop and the
/// subspace losses need from the last pass.
#[derive(Debug, Clone)]
pub struct OacBlock {
    pub layer: OacLinearLayer,
    pub link: Link,
    pub grads: OacGrads,
    conv: Option<ConvPlan>,
    trace: Option<ForwardTrace>,
    acc_f: CovarianceAccumulator,
    acc_b: CovarianceAccumulator,
    batch: usize,
}

impl OacBlock {
    fn to_columns(&self, x: &ComplexMatrix) -> Result<ComplexMatrix> {
        match &self.conv {
            Some(plan) => conv_rearrange_batch(x, &plan.input, &plan.geom),
            None => Ok(x.clone()),
        }
    }

    fn forward(&mut self, x: &ComplexMatrix, mode: Mode, track_cov: bool) -> Result<ComplexMatrix> {
        let cols = self.to_columns(x)?;
        let (y, trace) = self
            .layer
            .forward(&mut self.link.channel, &cols, &mut self.link.noise_rng)?;
        if mode == Mode::Train {
            if track_cov {
                for yr in &trace.y_r {
                    self.acc_f.accumulate(yr)?;
                }
            }
            self.trace = Some(trace);
            self.batch = x.cols();
        }
        match &self.conv {
            Some(plan) => conv_reassemble(&y, plan.out_h, plan.out_w),
            None => Ok(y),
        }
    }

    fn backward(&mut self, g: &ComplexMatrix, mode: Backprop, track_cov: bool) -> Result<ComplexMatrix> {
        let trace = self
            .trace
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("backward before a training forward".into()))?;
        let g_cols = match &self.conv {
            Some(plan) => conv_disassemble(g, self.layer.n_o, plan.locations())?,
            None => g.clone(),
        };
        let bt = match mode {
            Backprop::OverTheAir => {
                self.layer
                    .backward_ota(&self.link.channel, trace, &g_cols, &mut self.link.noise_rng)?
            }
            Backprop::Ideal => self.layer.backward_ideal(&self.link.channel, trace, &g_cols)?,
        };
        if track_cov {
            for gxt in &bt.g_xt {
                self.acc_b.accumulate(gxt)?;
            }
        }
        self.grads = OacGrads {
            p: bt.g_p,
            w_tilde: bt.g_w_tilde,
            c: bt.g_c,
            bias: bt.g_b,
        };
        match &self.conv {
            Some(plan) => conv_rearrange_adjoint(&bt.g_x, &plan.input, &plan.geom, self.batch),
            None => Ok(bt.g_x),
        }
    }

    /// Adds the weighted subspace-loss gradients; returns `(ℓ_f, ℓ_b)` unweighted.
    fn subspace_losses(&mut self, lambda_f: f64, lambda_b: f64) -> Result<(f64, f64)> {
        let r = self.layer.r;
        let mut lf = 0.0;
        let mut lb = 0.0;
        if lambda_f != 0.0 {
            let (loss, g_c) = forward_subspace_loss(&self.layer.c, &self.acc_f, r)?;
            self.grads.c.axpy(lambda_f, &g_c)?;
            lf = loss;
        }
        if lambda_b != 0.0 {
            let trace = self
                .trace
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument("subspace loss before forward".into()))?;
            let (loss, g_xt) = backward_subspace_loss(&self.acc_b, &trace.x_t, r)?;
            for (k, g) in g_xt.iter().enumerate() {
                let g = g.scale_real(lambda_b);
                let w = &self.layer.w_tilde[k];
                let wx = w.matmul(&trace.x)?;
                self.grads.p.add_assign(&g.matmul_adjoint(&wx)?)?;
                let ph_g = self.layer.p.adjoint_matmul(&g)?;
                self.grads.w_tilde[k].add_assign(&ph_g.matmul_adjoint(&trace.x)?)?;
            }
            lb = loss;
        }
        self.acc_f.reset();
        self.acc_b.reset();
        Ok((lf, lb))
    }
}

/// Local complex affine map `y = W x + b`, optionally applied per conv patch.
#[derive(Debug, Clone)]
pub struct AffineLayer {
    pub w: ComplexMatrix,
    pub b: ComplexMatrix,
    pub g_w: ComplexMatrix,
    pub g_b: ComplexMatrix,
    conv: Option<ConvPlan>,
    input: Option<ComplexMatrix>,
    batch: usize,
}

impl AffineLayer {
    fn new(n_in: usize, n_out: usize, conv: Option<ConvPlan>, rng: &mut ChaCha8Rng) -> Result<Self> {
        Ok(Self {
            w: random_complex_gaussian(n_out, n_in, 1.0 / n_in as f64, rng)?,
            b: ComplexMatrix::zeros(n_out, 1),
            g_w: ComplexMatrix::zeros(n_out, n_in),
            g_b: ComplexMatrix::zeros(n_out, 1),
            conv,
            input: None,
            batch: 0,
        })
    }

    fn forward(&mut self, x: &ComplexMatrix, mode: Mode) -> Result<ComplexMatrix> {
        let cols = match &self.conv {
            Some(plan) => conv_rearrange_batch(x, &plan.input, &plan.geom)?,
            None => x.clone(),
        };
        let mut y = self.w.matmul(&cols)?;
        for i in 0..y.rows() {
            let b = self.b[(i, 0)];
            for v in y.row_mut(i) {
                *v += b;
            }
        }
        if mode == Mode::Train {
            self.input = Some(cols);
            self.batch = x.cols();
        }
        match &self.conv {
            Some(plan) => conv_reassemble(&y, plan.out_h, plan.out_w),
            None => Ok(y),
        }
    }

    fn backward(&mut self, g: &ComplexMatrix) -> Result<ComplexMatrix> {
        let x = self
            .input
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("backward before a training forward".into()))?;
        let g_cols = match &self.conv {
            Some(plan) => conv_disassemble(g, self.w.rows(), plan.locations())?,
            None => g.clone(),
        };
        self.g_w = g_cols.matmul_adjoint(x)?;
        self.g_b = g_cols.sum_cols();
        let g_x = self.w.adjoint_matmul(&g_cols)?;
        match &self.conv {
            Some(plan) => conv_rearrange_adjoint(&g_x, &plan.input, &plan.geom, self.batch),
            None => Ok(g_x),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BatchNormLayer {
    pub state: BatchNormState,
    pub g_gamma: ComplexMatrix,
    pub g_beta: ComplexMatrix,
    cache: Option<BatchNormCache>,
}

#[derive(Debug, Clone)]
pub enum Layer {
    Oac(Box<OacBlock>),
    Affine(AffineLayer),
    Crelu { input: Option<ComplexMatrix> },
    Qam { constellation: Constellation, input: Option<ComplexMatrix> },
    BatchNorm(BatchNormLayer),
    Residual(Vec<Layer>),
    AvgPool { channels: usize, spatial: usize },
}

/// Which training-time extras a pass should record.
#[derive(Debug, Clone, Copy, Default)]
pub struct TrackCovariance {
    pub forward: bool,
    pub backward: bool,
}

impl Layer {
    fn forward(&mut self, x: &ComplexMatrix, mode: Mode, track: TrackCovariance) -> Result<ComplexMatrix> {
        match self {
            Layer::Oac(block) => block.forward(x, mode, track.forward),
            Layer::Affine(a) => a.forward(x, mode),
            Layer::Crelu { input } => {
                if mode == Mode::Train {
                    *input = Some(x.clone());
                }
                Ok(crelu(x))
            }
            Layer::Qam { constellation, input } => {
                if mode == Mode::Train {
                    *input = Some(x.clone());
                }
                Ok(qam_activate(x, constellation))
            }
            Layer::BatchNorm(bn) => match mode {
                Mode::Train => {
                    let (y, cache) = bn.state.forward_train(x)?;
                    bn.cache = Some(cache);
                    Ok(y)
                }
                Mode::Eval => bn.state.forward_eval(x),
            },
            Layer::Residual(layers) => {
                let mut h = x.clone();
                for l in layers.iter_mut() {
                    h = l.forward(&h, mode, track)?;
                }
                h.add(x)
            }
            Layer::AvgPool { channels, spatial } => {
                let mut out = ComplexMatrix::zeros(*channels, x.cols());
                for ch in 0..*channels {
                    for s in 0..*spatial {
                        for j in 0..x.cols() {
                            out[(ch, j)] += x[(ch * *spatial + s, j)];
                        }
                    }
                }
                Ok(out.scale_real(1.0 / *spatial as f64))
            }
        }
    }

    fn backward(&mut self, g: &ComplexMatrix, mode: Backprop, track: TrackCovariance) -> Result<ComplexMatrix> {
        let missing = || Error::InvalidArgument("backward before a training forward".into());
        match self {
            Layer::Oac(block) => block.backward(g, mode, track.backward),
            Layer::Affine(a) => a.backward(g),
            Layer::Crelu { input } => crelu_backward(input.as_ref().ok_or_else(missing)?, g),
            Layer::Qam { constellation, input } => {
                qam_backward(input.as_ref().ok_or_else(missing)?, g, constellation)
            }
            Layer::BatchNorm(bn) => {
                let grads = bn.state.backward(bn.cache.as_ref().ok_or_else(missing)?, g)?;
                bn.g_gamma = grads.g_gamma;
                bn.g_beta = grads.g_beta;
                Ok(grads.g_x)
            }
            Layer::Residual(layers) => {
                let mut h = g.clone();
                for l in layers.iter_mut().rev() {
                    h = l.backward(&h, mode, track)?;
                }
                h.add(g)
            }
            Layer::AvgPool { channels, spatial } => {
                let scale = 1.0 / *spatial as f64;
                Ok(ComplexMatrix::from_fn(*channels * *spatial, g.cols(), |i, j| {
                    g[(i / *spatial, j)] * scale
                }))
            }
        }
    }

    fn collect<'a>(
        &'a mut self,
        prefix: &str,
        out: &mut Vec<(String, &'a mut ComplexMatrix, &'a ComplexMatrix)>,
    ) {
        match self {
            Layer::Oac(block) => {
                let OacBlock { layer, grads, .. } = &mut **block;
                out.push((format!("{prefix}.p"), &mut layer.p, &grads.p));
                for (k, (w, g)) in layer.w_tilde.iter_mut().zip(&grads.w_tilde).enumerate() {
                    out.push((format!("{prefix}.w_tilde{k}"), w, g));
                }
                out.push((format!("{prefix}.c"), &mut layer.c, &grads.c));
                out.push((format!("{prefix}.bias"), &mut layer.bias, &grads.bias));
            }
            Layer::Affine(a) => {
                out.push((format!("{prefix}.w"), &mut a.w, &a.g_w));
                out.push((format!("{prefix}.b"), &mut a.b, &a.g_b));
            }
            Layer::BatchNorm(bn) => {
                out.push((format!("{prefix}.gamma"), &mut bn.state.gamma, &bn.g_gamma));
                out.push((format!("{prefix}.beta"), &mut bn.state.beta, &bn.g_beta));
            }
            Layer::Residual(layers) => {
                for (i, l) in layers.iter_mut().enumerate() {
                    l.collect(&format!("{prefix}.{i}"), out);
                }
            }
            Layer::Crelu { .. } | Layer::Qam { .. } | Layer::AvgPool { .. } => {}
        }
    }

    fn for_each_oac(&mut self, f: &mut dyn FnMut(&mut OacBlock) -> Result<()>) -> Result<()> {
        match self {
            Layer::Oac(block) => f(block),
            Layer::Residual(layers) => {
                for l in layers {
                    l.for_each_oac(f)?;
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// Named, trainable tensor with its latest gradient.
pub struct ParamRef<'a> {
    pub name: String,
    pub value: &'a mut ComplexMatrix,
    pub grad: &'a ComplexMatrix,
}

#[derive(Debug, Clone)]
pub struct Model {
    pub spec: ModelSpec,
    pub layers: Vec<Layer>,
    pub input: FeatureShape,
    pub classes: usize,
    pub track: TrackCovariance,
}

struct Builder<'a> {
    ctx: &'a BuildContext,
    param_ordinal: u64,
    link_ordinal: u64,
}

impl Builder<'_> {
    fn next_init_rng(&mut self) -> ChaCha8Rng {
        let rng = stream_rng(self.ctx.seed, Stream::Init, self.param_ordinal);
        self.param_ordinal += 1;
        rng
    }

    fn link(&mut self) -> Result<Link> {
        let ordinal = self.link_ordinal;
        self.link_ordinal += 1;
        let mimo = &self.ctx.mimo;
        let paths = mimo.path_params();
        let mut draw_rng = stream_rng(self.ctx.seed, Stream::ChannelDraw, ordinal);
        let mut channel = gen_channel(&paths, mimo.n_t, mimo.n_r, &mut draw_rng)?;
        channel.nominal_rank = mimo.r;
        channel.target_snr_db = self.ctx.snr_db;
        Ok(Link {
            channel,
            paths,
            noise_rng: stream_rng(self.ctx.seed, Stream::LinkNoise, ordinal),
            draw_rng,
        })
    }

    fn oac_block(&mut self, n_i: usize, n_o: usize, conv: Option<ConvPlan>) -> Result<OacBlock> {
        let mimo = self.ctx.mimo;
        let layer = OacLinearLayer::init(n_i, n_o, mimo.n_t, mimo.n_r, mimo.r, &mut self.next_init_rng())?;
        let link = self.link()?;
        Ok(OacBlock {
            grads: OacGrads::zeros(&layer),
            layer,
            link,
            conv,
            trace: None,
            acc_f: CovarianceAccumulator::new(mimo.n_r),
            acc_b: CovarianceAccumulator::new(mimo.n_t),
            batch: 0,
        })
    }

    fn build(&mut self, specs: &[LayerSpec], mut shape: FeatureShape) -> Result<(Vec<Layer>, FeatureShape)> {
        let mut layers = Vec::with_capacity(specs.len());
        for spec in specs {
            let (layer, next) = match spec {
                LayerSpec::OacLinear { out } => (
                    Layer::Oac(Box::new(self.oac_block(shape.len(), *out, None)?)),
                    FeatureShape::flat(*out),
                ),
                LayerSpec::Dense { out } => {
                    let mut rng = self.next_init_rng();
                    (
                        Layer::Affine(AffineLayer::new(shape.len(), *out, None, &mut rng)?),
                        FeatureShape::flat(*out),
                    )
                }
                LayerSpec::DenseHead => {
                    let mut rng = self.next_init_rng();
                    let classes = self.ctx.classes;
                    (
                        Layer::Affine(AffineLayer::new(shape.len(), classes, None, &mut rng)?),
                        FeatureShape::flat(classes),
                    )
                }
                LayerSpec::OacConv {
                    out_channels,
                    kernel,
                    padding,
                    stride,
                }
                | LayerSpec::Conv {
                    out_channels,
                    kernel,
                    padding,
                    stride,
                } => {
                    let geom = ConvGeometry::new(kernel[0], kernel[1], *padding, *stride);
                    let (out_h, out_w) = geom.output_hw(&shape)?;
                    let plan = ConvPlan {
                        input: shape,
                        geom,
                        out_h,
                        out_w,
                    };
                    let n_i = geom.patch_len(shape.channels);
                    let layer = if matches!(spec, LayerSpec::OacConv { .. }) {
                        Layer::Oac(Box::new(self.oac_block(n_i, *out_channels, Some(plan))?))
                    } else {
                        let mut rng = self.next_init_rng();
                        Layer::Affine(AffineLayer::new(n_i, *out_channels, Some(plan), &mut rng)?)
                    };
                    (layer, FeatureShape::new(*out_channels, out_h, out_w))
                }
                LayerSpec::Crelu => (Layer::Crelu { input: None }, shape),
                LayerSpec::Qam => (
                    Layer::Qam {
                        constellation: self.ctx.constellation,
                        input: None,
                    },
                    shape,
                ),
                LayerSpec::Activation => {
                    let resolved = match self.ctx.activation {
                        ActivationKind::Crelu => Layer::Crelu { input: None },
                        ActivationKind::Qam => Layer::Qam {
                            constellation: self.ctx.constellation,
                            input: None,
                        },
                    };
                    (resolved, shape)
                }
                LayerSpec::Batchnorm => {
                    let state = BatchNormState::new(shape.channels, shape.spatial());
                    (
                        Layer::BatchNorm(BatchNormLayer {
                            g_gamma: ComplexMatrix::zeros(shape.channels, 1),
                            g_beta: ComplexMatrix::zeros(shape.channels, 1),
                            state,
                            cache: None,
                        }),
                        shape,
                    )
                }
                LayerSpec::Residual { layers } => {
                    let (inner, _) = self.build(layers, shape)?;
                    (Layer::Residual(inner), shape)
                }
                LayerSpec::AvgPool => (
                    Layer::AvgPool {
                        channels: shape.channels,
                        spatial: shape.spatial(),
                    },
                    FeatureShape::flat(shape.channels),
                ),
            };
            layers.push(layer);
            shape = next;
        }
        Ok((layers, shape))
    }
}

impl Model {
    /// Validates `spec` against `ctx` and draws every parameter and channel.
    ///
    /// Parameter-bearing layers take init streams by their order among
    /// parameter-bearing layers, and links by their order among split points,
    /// so parameter-free layers can be added or removed without reseeding.
    pub fn build(spec: &ModelSpec, ctx: &BuildContext) -> Result<Model> {
        spec.validate(ctx)?;
        ctx.constellation.validate()?;
        let mut builder = Builder {
            ctx,
            param_ordinal: 0,
            link_ordinal: 0,
        };
        let (layers, _) = builder.build(&spec.layers, ctx.input)?;
        Ok(Model {
            spec: spec.clone(),
            layers,
            input: ctx.input,
            classes: ctx.classes,
            track: TrackCovariance::default(),
        })
    }

    pub fn forward(&mut self, x: &ComplexMatrix, mode: Mode) -> Result<ComplexMatrix> {
        if x.rows() != self.input.len() {
            return Err(Error::Shape {
                op: "model forward",
                left: (self.input.len(), x.cols()),
                right: x.shape(),
            });
        }
        let track = self.track;
        let mut h = x.clone();
        for layer in &mut self.layers {
            h = layer.forward(&h, mode, track)?;
        }
        Ok(h)
    }

    /// Backpropagates `g_out` through every layer, storing parameter gradients.
    /// Returns the gradient with respect to the model input.
    pub fn backward(&mut self, g_out: &ComplexMatrix, mode: Backprop) -> Result<ComplexMatrix> {
        let track = self.track;
        let mut g = g_out.clone();
        for layer in self.layers.iter_mut().rev() {
            g = layer.backward(&g, mode, track)?;
        }
        Ok(g)
    }

    /// Adds the beamforming penalties' gradients and returns the summed
    /// unweighted `(ℓ_f, ℓ_b)` over all split points.
    pub fn subspace_losses(&mut self, lambda_f: f64, lambda_b: f64) -> Result<(f64, f64)> {
        let mut total = (0.0, 0.0);
        self.for_each_oac(&mut |block| {
            let (lf, lb) = block.subspace_losses(lambda_f, lambda_b)?;
            total.0 += lf;
            total.1 += lb;
            Ok(())
        })?;
        Ok(total)
    }

    pub fn for_each_oac(&mut self, f: &mut dyn FnMut(&mut OacBlock) -> Result<()>) -> Result<()> {
        for layer in &mut self.layers {
            layer.for_each_oac(f)?;
        }
        Ok(())
    }

    pub fn evolve_channels(&mut self, mobility: &MobilityConfig) -> Result<()> {
        self.for_each_oac(&mut |block| block.link.evolve(mobility))
    }

    /// Merged forward-link energy counters since the last call.
    pub fn take_link_stats(&mut self) -> LinkStats {
        let mut stats = LinkStats::default();
        let _ = self.for_each_oac(&mut |block| {
            stats.merge(&block.link.channel.take_stats());
            Ok(())
        });
        stats
    }

    /// Every trainable tensor in a fixed depth-first order.
    pub fn params(&mut self) -> Vec<ParamRef<'_>> {
        let mut raw = Vec::new();
        for (i, layer) in self.layers.iter_mut().enumerate() {
            layer.collect(&format!("layer{i}"), &mut raw);
        }
        raw.into_iter()
            .map(|(name, value, grad)| ParamRef { name, value, grad })
            .collect()
    }

    pub fn is_finite(&mut self) -> bool {
        self.params().iter().all(|p| p.value.is_finite())
    }

    pub fn snapshot(&mut self) -> ModelSnapshot {
        let mut tensors: Vec<NamedTensor> = self
            .params()
            .into_iter()
            .map(|p| NamedTensor {
                name: p.name,
                value: p.value.clone(),
            })
            .collect();
        fn running(layers: &[Layer], prefix: &str, out: &mut Vec<NamedTensor>) {
            for (i, l) in layers.iter().enumerate() {
                let name = format!("{prefix}{i}");
                match l {
                    Layer::BatchNorm(bn) => {
                        out.push(NamedTensor {
                            name: format!("{name}.running_mean"),
                            value: bn.state.running_mean.clone(),
                        });
                        out.push(NamedTensor {
                            name: format!("{name}.running_var"),
                            value: bn.state.running_var.clone(),
                        });
                    }
                    Layer::Residual(inner) => running(inner, &format!("{name}."), out),
                    _ => {}
                }
            }
        }
        running(&self.layers, "layer", &mut tensors);
        ModelSnapshot {
            spec: self.spec.clone(),
            tensors,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub value: ComplexMatrix,
}

/// Serializable copy of the model's spec, parameters, and running statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSnapshot {
    pub spec: ModelSpec,
    pub tensors: Vec<NamedTensor>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clinalg::Complex;

    fn ctx(input: usize) -> BuildContext {
        BuildContext {
            input: FeatureShape::flat(input),
            classes: 3,
            mimo: MimoConfig {
                n_t: 4,
                n_r: 4,
                r: 2,
                n_paths: 8,
            },
            activation: ActivationKind::Crelu,
            constellation: Constellation::default(),
            snr_db: None,
            seed: 3,
        }
    }

    fn spec(layers: Vec<LayerSpec>) -> ModelSpec {
        ModelSpec { layers }
    }

    #[test]
    fn parses_tagged_layers() {
        let s: ModelSpec = serde_json::from_str(
            r#"{"layers":[{"type":"oac_conv","out_channels":4,"kernel":[3,3],"padding":1},
                          {"type":"residual","layers":[{"type":"batchnorm"},{"type":"activation"}]},
                          {"type":"avg_pool"},{"type":"dense_head"}]}"#,
        )
        .unwrap();
        assert_eq!(s.layers.len(), 4);
        assert!(serde_json::from_str::<ModelSpec>(r#"{"layers":[{"type":"dense","out":2,"bogus":1}]}"#).is_err());
        assert!(serde_json::from_str::<ModelSpec>(r#"{"layers":[{"type":"nope"}]}"#).is_err());
    }

    #[test]
    fn chain_errors_name_the_layer() {
        let bad = spec(vec![
            LayerSpec::Dense { out: 4 },
            LayerSpec::Residual {
                layers: vec![LayerSpec::Dense { out: 3 }],
            },
            LayerSpec::DenseHead,
        ]);
        let err = bad.validate(&ctx(4)).unwrap_err().to_string();
        assert!(err.contains("model.layers[1]"), "{err}");

        let head_not_last = spec(vec![LayerSpec::DenseHead, LayerSpec::Crelu]);
        assert!(head_not_last.validate(&ctx(4)).is_err());

        let mut c = ctx(4);
        c.mimo.r = 5;
        let err = spec(vec![LayerSpec::OacLinear { out: 4 }, LayerSpec::DenseHead])
            .validate(&c)
            .unwrap_err()
            .to_string();
        assert!(err.contains("mimo.r"), "{err}");
    }

    #[test]
    fn split_points_and_resolution() {
        let s = spec(vec![
            LayerSpec::Dense { out: 4 },
            LayerSpec::OacLinear { out: 4 },
            LayerSpec::Activation,
            LayerSpec::Residual {
                layers: vec![LayerSpec::OacLinear { out: 4 }, LayerSpec::Activation],
            },
            LayerSpec::DenseHead,
        ]);
        assert_eq!(s.split_points(), vec![1, 3]);
        let q = s.resolve_activation(ActivationKind::Qam);
        assert_eq!(q.layers[2], LayerSpec::Qam);
    }

    #[test]
    fn zeroed_residual_branch_is_identity() {
        let s = spec(vec![
            LayerSpec::Residual {
                layers: vec![LayerSpec::Dense { out: 4 }],
            },
            LayerSpec::DenseHead,
        ]);
        let mut model = Model::build(&s, &ctx(4)).unwrap();
        if let Layer::Residual(inner) = &mut model.layers[0] {
            if let Layer::Affine(a) = &mut inner[0] {
                a.w.fill_zero();
            }
        }
        let x = ComplexMatrix::from_fn(4, 2, |i, j| Complex::new(i as f64, j as f64 - 0.5));
        let h = model.layers[0].forward(&x, Mode::Eval, TrackCovariance::default()).unwrap();
        assert_eq!(h, x);
    }

    #[test]
    fn parameter_free_layers_do_not_shift_seeds() {
        let with_q = spec(vec![
            LayerSpec::OacLinear { out: 4 },
            LayerSpec::Crelu,
            LayerSpec::Qam,
            LayerSpec::DenseHead,
        ]);
        let without = spec(vec![LayerSpec::OacLinear { out: 4 }, LayerSpec::Crelu, LayerSpec::DenseHead]);
        let mut a = Model::build(&with_q, &ctx(4)).unwrap();
        let mut b = Model::build(&without, &ctx(4)).unwrap();
        let pa: Vec<_> = a.params().into_iter().map(|p| p.value.clone()).collect();
        let pb: Vec<_> = b.params().into_iter().map(|p| p.value.clone()).collect();
        assert_eq!(pa, pb);
    }

    #[test]
    fn conv_split_shapes() {
        let mut c = ctx(0);
        c.input = FeatureShape::new(2, 4, 4);
        let s = spec(vec![
            LayerSpec::OacConv {
                out_channels: 3,
                kernel: [3, 3],
                padding: 1,
                stride: 1,
            },
            LayerSpec::Batchnorm,
            LayerSpec::Crelu,
            LayerSpec::AvgPool,
            LayerSpec::DenseHead,
        ]);
        let mut model = Model::build(&s, &c).unwrap();
        let x = ComplexMatrix::from_fn(32, 2, |i, j| Complex::new((i + j) as f64 * 0.1, 0.0));
        let y = model.forward(&x, Mode::Train).unwrap();
        assert_eq!(y.shape(), (3, 2));
        let g = model.backward(&ComplexMatrix::from_fn(3, 2, |_, _| Complex::new(1.0, 0.0)), Backprop::OverTheAir).unwrap();
        assert_eq!(g.shape(), (32, 2));
    }
}
