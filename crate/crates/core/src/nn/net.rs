//! The dual-branch Q-network and its global-only variant.
//!
//! ```text
//! GO codes -> Conv-G stack -> flatten -> projG (256) --+
//!                                                      +-> concat 512 -> fc1 64 -> fc_out #actions
//! LO codes -> Conv-L stack -> flatten -> projL (256) --+
//! ```
//!
//! The global-only variant has no local branch and projects Conv-G straight
//! to 512.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layers::{Activation, Conv2d, Linear};
use super::tensor::Tensor;
use super::NnError;
use crate::obs::{ObservationPair, CHANNELS, LOCAL_SIZE};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    Dual,
    GlobalOnly,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Dual => "dual",
            Variant::GlobalOnly => "global-only",
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            Variant::Dual => 0,
            Variant::GlobalOnly => 1,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Variant> {
        match code {
            0 => Some(Variant::Dual),
            1 => Some(Variant::GlobalOnly),
            _ => None,
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Variant {
    type Err = NnError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dual" => Ok(Variant::Dual),
            "global-only" | "globalonly" => Ok(Variant::GlobalOnly),
            _ => Err(NnError::InvalidConfig(format!("unknown variant `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvSpec {
    pub channels: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl ConvSpec {
    pub const fn new(channels: usize, kernel: usize, stride: usize) -> Self {
        ConvSpec { channels, kernel, stride }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NetConfig {
    pub variant: Variant,
    pub in_channels: usize,
    pub global_dims: (usize, usize),
    pub local_dims: (usize, usize),
    pub conv_g: Vec<ConvSpec>,
    pub conv_l: Vec<ConvSpec>,
    /// Width of each branch projection; the global-only variant uses twice this.
    pub proj: usize,
    pub hidden: usize,
    pub actions: usize,
}

impl NetConfig {
    /// Default architecture for a game whose screen is `grid_dims` tiles.
    pub fn for_grid(grid_dims: (usize, usize), actions: usize, variant: Variant) -> Self {
        NetConfig::with_global_dims(crate::obs::global_dims(grid_dims), actions, variant)
    }

    pub fn with_global_dims(global_dims: (usize, usize), actions: usize, variant: Variant) -> Self {
        NetConfig {
            variant,
            in_channels: CHANNELS,
            global_dims,
            local_dims: (LOCAL_SIZE, LOCAL_SIZE),
            conv_g: vec![ConvSpec::new(32, 3, 1), ConvSpec::new(32, 3, 1)],
            conv_l: if variant == Variant::Dual { vec![ConvSpec::new(32, 3, 1)] } else { Vec::new() },
            proj: 256,
            hidden: 64,
            actions,
        }
    }

    fn stack_output(&self, specs: &[ConvSpec], dims: (usize, usize)) -> Result<usize, NnError> {
        let (mut h, mut w, mut c) = (dims.0, dims.1, self.in_channels);
        for s in specs {
            if s.kernel == 0 || s.stride == 0 || s.channels == 0 || h < s.kernel || w < s.kernel {
                return Err(NnError::InvalidConfig(format!("conv {s:?} does not fit a {h}x{w} input")));
            }
            h = (h - s.kernel) / s.stride + 1;
            w = (w - s.kernel) / s.stride + 1;
            c = s.channels;
        }
        Ok(c * h * w)
    }

    pub fn validate(&self) -> Result<(), NnError> {
        if self.in_channels == 0 || self.proj == 0 || self.hidden == 0 || self.actions == 0 {
            return Err(NnError::InvalidConfig("zero-width layer".into()));
        }
        self.stack_output(&self.conv_g, self.global_dims)?;
        match self.variant {
            Variant::Dual => {
                self.stack_output(&self.conv_l, self.local_dims)?;
            }
            Variant::GlobalOnly if !self.conv_l.is_empty() => {
                return Err(NnError::InvalidConfig("global-only net cannot have a local stack".into()));
            }
            Variant::GlobalOnly => {}
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ArcaneNet {
    config: NetConfig,
    activation: Activation,
    conv_g: Vec<Conv2d>,
    conv_l: Vec<Conv2d>,
    proj_g: Linear,
    proj_l: Option<Linear>,
    fc1: Linear,
    fc_out: Linear,
}

/// One gradient tensor per parameter tensor, in [`ArcaneNet::params`] order.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub tensors: Vec<Tensor>,
}

impl Gradients {
    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::is_finite)
    }

    pub fn is_zero(&self) -> bool {
        self.tensors.iter().all(|t| t.data().iter().all(|&v| v == 0.0))
    }
}

/// Batched network input.
pub enum NetInput {
    /// Tile codes, `[B][H][W]` per branch.
    Codes { global: Vec<u8>, local: Option<Vec<u8>> },
    /// Real-valued planes, `[B][C][H][W]` per branch.
    Dense { global: Tensor, local: Option<Tensor> },
}

enum BranchInput {
    Codes(Vec<u8>),
    /// `[C][B][H][W]`
    Dense(Vec<f64>),
}

struct ConvCache {
    cols: Option<Vec<f64>>,
    out: Vec<f64>,
    dims: (usize, usize),
}

struct BranchCache {
    input: BranchInput,
    dims: (usize, usize),
    layers: Vec<ConvCache>,
    flat: Vec<f64>,
    proj: Vec<f64>,
}

/// Activations kept from a forward pass for the matching backward pass.
pub struct ForwardCache {
    batch: usize,
    global: BranchCache,
    local: Option<BranchCache>,
    joined: Vec<f64>,
    hidden: Vec<f64>,
}

impl ForwardCache {
    pub fn batch(&self) -> usize {
        self.batch
    }
}

fn cbp_from_bchw(t: &[f64], b: usize, c: usize, p: usize) -> Vec<f64> {
    let mut out = vec![0.0; t.len()];
    for bi in 0..b {
        for ci in 0..c {
            out[(ci * b + bi) * p..][..p].copy_from_slice(&t[(bi * c + ci) * p..][..p]);
        }
    }
    out
}

impl ArcaneNet {
    /// Zero-initialized network.
    pub fn zeros(config: NetConfig) -> Result<Self, NnError> {
        config.validate()?;
        let stack = |specs: &[ConvSpec]| {
            let mut c = config.in_channels;
            specs
                .iter()
                .map(|s| {
                    let layer = Conv2d::new(c, s.channels, s.kernel, s.stride);
                    c = s.channels;
                    layer
                })
                .collect::<Vec<_>>()
        };
        let g_out = config.stack_output(&config.conv_g, config.global_dims)?;
        let (proj_g, proj_l) = match config.variant {
            Variant::Dual => {
                let l_out = config.stack_output(&config.conv_l, config.local_dims)?;
                (Linear::new(g_out, config.proj), Some(Linear::new(l_out, config.proj)))
            }
            Variant::GlobalOnly => (Linear::new(g_out, 2 * config.proj), None),
        };
        Ok(ArcaneNet {
            conv_g: stack(&config.conv_g),
            conv_l: stack(&config.conv_l),
            proj_g,
            proj_l,
            fc1: Linear::new(2 * config.proj, config.hidden),
            fc_out: Linear::new(config.hidden, config.actions),
            activation: Activation::Relu,
            config,
        })
    }

    /// Seeded uniform fan-in initialization.
    pub fn new(config: NetConfig, seed: u64) -> Result<Self, NnError> {
        let mut net = ArcaneNet::zeros(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for c in net.conv_g.iter_mut().chain(net.conv_l.iter_mut()) {
            c.init_uniform(&mut rng);
        }
        for l in [Some(&mut net.proj_g), net.proj_l.as_mut(), Some(&mut net.fc1), Some(&mut net.fc_out)].into_iter().flatten() {
            l.init_uniform(&mut rng);
        }
        Ok(net)
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn variant(&self) -> Variant {
        self.config.variant
    }

    pub fn actions(&self) -> usize {
        self.config.actions
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn set_activation(&mut self, activation: Activation) {
        self.activation = activation;
    }

    pub fn params(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        for c in self.conv_g.iter().chain(&self.conv_l) {
            out.push(&c.weight);
            out.push(&c.bias);
        }
        for l in [Some(&self.proj_g), self.proj_l.as_ref(), Some(&self.fc1), Some(&self.fc_out)].into_iter().flatten() {
            out.push(&l.weight);
            out.push(&l.bias);
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for c in self.conv_g.iter_mut().chain(self.conv_l.iter_mut()) {
            out.push(&mut c.weight);
            out.push(&mut c.bias);
        }
        for l in [Some(&mut self.proj_g), self.proj_l.as_mut(), Some(&mut self.fc1), Some(&mut self.fc_out)].into_iter().flatten() {
            out.push(&mut l.weight);
            out.push(&mut l.bias);
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }

    pub fn zero_gradients(&self) -> Gradients {
        Gradients { tensors: self.params().iter().map(|t| Tensor::zeros(t.shape())).collect() }
    }

    pub fn copy_params_from(&mut self, other: &ArcaneNet) -> Result<(), NnError> {
        if self.config != other.config {
            return Err(NnError::InvalidConfig("copying between differently shaped nets".into()));
        }
        for (dst, src) in self.params_mut().into_iter().zip(other.params()) {
            dst.data_mut().copy_from_slice(src.data());
        }
        Ok(())
    }

    /// Q-values for one observation.
    pub fn forward(&self, obs: &ObservationPair) -> Result<Vec<f64>, NnError> {
        self.forward_batch(&[obs])
    }

    /// Q-values for a batch, `[B][actions]`.
    pub fn forward_batch(&self, batch: &[&ObservationPair]) -> Result<Vec<f64>, NnError> {
        Ok(self.forward_train(batch)?.0)
    }

    /// Forward pass that also returns the cache needed by [`ArcaneNet::backward`].
    pub fn forward_train(&self, batch: &[&ObservationPair]) -> Result<(Vec<f64>, ForwardCache), NnError> {
        self.forward_input(self.codes_input(batch)?)
    }

    fn codes_input(&self, batch: &[&ObservationPair]) -> Result<NetInput, NnError> {
        let cfg = &self.config;
        let check = |g: &crate::grid::Grid, dims: (usize, usize), what: &str| -> Result<(), NnError> {
            if g.dims() != dims {
                return Err(NnError::ShapeMismatch {
                    what: what.into(),
                    expected: vec![dims.0, dims.1],
                    found: vec![g.rows(), g.cols()],
                });
            }
            if let Some(&c) = g.codes().iter().find(|&&c| c as usize >= cfg.in_channels) {
                return Err(NnError::ShapeMismatch {
                    what: format!("{what} code {c}"),
                    expected: vec![cfg.in_channels],
                    found: vec![c as usize + 1],
                });
            }
            Ok(())
        };
        let mut global = Vec::with_capacity(batch.len() * cfg.global_dims.0 * cfg.global_dims.1);
        let mut local = Vec::new();
        for obs in batch {
            check(&obs.global, cfg.global_dims, "global observation")?;
            global.extend_from_slice(obs.global.codes());
            if cfg.variant == Variant::Dual {
                check(&obs.local, cfg.local_dims, "local observation")?;
                local.extend_from_slice(obs.local.codes());
            }
        }
        Ok(NetInput::Codes { global, local: (cfg.variant == Variant::Dual).then_some(local) })
    }

    pub fn forward_input(&self, input: NetInput) -> Result<(Vec<f64>, ForwardCache), NnError> {
        let cfg = &self.config;
        let (batch, g_in, l_in) = match input {
            NetInput::Codes { global, local } => {
                let plane = cfg.global_dims.0 * cfg.global_dims.1;
                let batch = global.len() / plane;
                if batch * plane != global.len() {
                    return Err(NnError::ShapeMismatch {
                        what: "global codes".into(),
                        expected: vec![plane],
                        found: vec![global.len()],
                    });
                }
                (batch, BranchInput::Codes(global), local.map(BranchInput::Codes))
            }
            NetInput::Dense { global, local } => {
                let check = |t: &Tensor, dims: (usize, usize), what: &str| -> Result<usize, NnError> {
                    let s = t.shape();
                    if s.len() != 4 || s[1] != cfg.in_channels || (s[2], s[3]) != dims {
                        return Err(NnError::ShapeMismatch {
                            what: what.into(),
                            expected: vec![s.first().copied().unwrap_or(0), cfg.in_channels, dims.0, dims.1],
                            found: s.to_vec(),
                        });
                    }
                    Ok(s[0])
                };
                let batch = check(&global, cfg.global_dims, "global planes")?;
                let g = cbp_from_bchw(global.data(), batch, cfg.in_channels, cfg.global_dims.0 * cfg.global_dims.1);
                let l = match &local {
                    Some(t) => {
                        if check(t, cfg.local_dims, "local planes")? != batch {
                            return Err(NnError::ShapeMismatch {
                                what: "local batch".into(),
                                expected: vec![batch],
                                found: vec![t.shape()[0]],
                            });
                        }
                        Some(BranchInput::Dense(cbp_from_bchw(
                            t.data(),
                            batch,
                            cfg.in_channels,
                            cfg.local_dims.0 * cfg.local_dims.1,
                        )))
                    }
                    None => None,
                };
                (batch, BranchInput::Dense(g), l)
            }
        };
        if (cfg.variant == Variant::Dual) != l_in.is_some() {
            return Err(NnError::InvalidConfig(format!("{} net given the wrong number of inputs", cfg.variant)));
        }
        let global = self.branch_forward(&self.conv_g, &self.proj_g, g_in, batch, cfg.global_dims);
        let local = match (l_in, &self.proj_l) {
            (Some(l), Some(proj)) => Some(self.branch_forward(&self.conv_l, proj, l, batch, cfg.local_dims)),
            _ => None,
        };
        let joined = match &local {
            Some(l) => {
                let (pg, pl) = (self.proj_g.out_features(), proj_width(&self.proj_l));
                let mut j = Vec::with_capacity(batch * (pg + pl));
                for b in 0..batch {
                    j.extend_from_slice(&global.proj[b * pg..][..pg]);
                    j.extend_from_slice(&l.proj[b * pl..][..pl]);
                }
                j
            }
            None => global.proj.clone(),
        };
        let mut hidden = self.fc1.forward(&joined, batch);
        self.activation.apply(&mut hidden);
        let q = self.fc_out.forward(&hidden, batch);
        if q.iter().any(|v| !v.is_finite()) {
            return Err(NnError::NonFinite("forward output".into()));
        }
        Ok((q, ForwardCache { batch, global, local, joined, hidden }))
    }

    fn branch_forward(
        &self,
        convs: &[Conv2d],
        proj: &Linear,
        input: BranchInput,
        batch: usize,
        dims: (usize, usize),
    ) -> BranchCache {
        let mut layers: Vec<ConvCache> = Vec::with_capacity(convs.len());
        let (mut h, mut w) = dims;
        for (i, conv) in convs.iter().enumerate() {
            let (ho, wo) = conv.output_dims(h, w).expect("validated config");
            let n = batch * ho * wo;
            let (cols, mut out) = match (i, &input) {
                (0, BranchInput::Codes(codes)) => (None, conv.forward_codes(codes, batch, h, w)),
                _ => {
                    let src = if i == 0 {
                        match &input {
                            BranchInput::Dense(x) => x,
                            BranchInput::Codes(_) => unreachable!(),
                        }
                    } else {
                        &layers[i - 1].out
                    };
                    let cols = conv.im2col(src, batch, h, w);
                    let out = conv.forward_cols(&cols, n);
                    (Some(cols), out)
                }
            };
            self.activation.apply(&mut out);
            layers.push(ConvCache { cols, out, dims: (ho, wo) });
            (h, w) = (ho, wo);
        }
        let flat = match layers.last() {
            Some(last) => {
                let c = convs.last().map(Conv2d::out_channels).unwrap_or(0);
                flatten(&last.out, c, batch, h * w)
            }
            None => match &input {
                BranchInput::Dense(x) => flatten(x, self.config.in_channels, batch, h * w),
                BranchInput::Codes(codes) => {
                    let c = self.config.in_channels;
                    let p = h * w;
                    let mut x = vec![0.0; batch * c * p];
                    for b in 0..batch {
                        for j in 0..p {
                            x[(b * c + codes[b * p + j] as usize) * p + j] = 1.0;
                        }
                    }
                    x
                }
            },
        };
        let mut projected = proj.forward(&flat, batch);
        self.activation.apply(&mut projected);
        BranchCache { input, dims, layers, flat, proj: projected }
    }

    /// Parameter gradients for `dq = dLoss/dQ`, `[B][actions]`.
    pub fn backward(&self, cache: &ForwardCache, dq: &[f64]) -> Result<Gradients, NnError> {
        let batch = cache.batch;
        if dq.len() != batch * self.config.actions {
            return Err(NnError::ShapeMismatch {
                what: "output gradient".into(),
                expected: vec![batch, self.config.actions],
                found: vec![dq.len()],
            });
        }
        let mut grads = self.zero_gradients();
        let n = grads.tensors.len();
        let (head, tail) = grads.tensors.split_at_mut(n - 4);
        let (fc1_g, out_g) = tail.split_at_mut(2);
        let ([ow, ob], [fw, fb]) = (out_g, fc1_g) else { unreachable!("two tensors per layer") };
        let mut dh = self.fc_out.backward(&cache.hidden, dq, batch, ow, ob);
        self.activation.backprop(&mut dh, &cache.hidden);
        let dj = self.fc1.backward(&cache.joined, &dh, batch, fw, fb);

        let ng = 2 * self.conv_g.len();
        let nl = 2 * self.conv_l.len();
        let (conv_grads, proj_grads) = head.split_at_mut(ng + nl);
        let (cg, cl) = conv_grads.split_at_mut(ng);
        let (pg_grads, pl_grads) = proj_grads.split_at_mut(2);
        match &cache.local {
            Some(local) => {
                let (wg, wl) = (self.proj_g.out_features(), proj_width(&self.proj_l));
                let mut dg = Vec::with_capacity(batch * wg);
                let mut dl = Vec::with_capacity(batch * wl);
                for row in dj.chunks(wg + wl) {
                    dg.extend_from_slice(&row[..wg]);
                    dl.extend_from_slice(&row[wg..]);
                }
                self.branch_backward(&self.conv_g, &self.proj_g, &cache.global, dg, batch, cg, pg_grads);
                let proj_l = self.proj_l.as_ref().expect("dual net has projL");
                self.branch_backward(&self.conv_l, proj_l, local, dl, batch, cl, pl_grads);
            }
            None => self.branch_backward(&self.conv_g, &self.proj_g, &cache.global, dj, batch, cg, pg_grads),
        }
        Ok(grads)
    }

    #[allow(clippy::too_many_arguments)]
    fn branch_backward(
        &self,
        convs: &[Conv2d],
        proj: &Linear,
        cache: &BranchCache,
        mut dproj: Vec<f64>,
        batch: usize,
        conv_grads: &mut [Tensor],
        proj_grads: &mut [Tensor],
    ) {
        self.activation.backprop(&mut dproj, &cache.proj);
        let (pw, pb) = proj_grads.split_at_mut(1);
        let dflat = proj.backward(&cache.flat, &dproj, batch, &mut pw[0], &mut pb[0]);
        let Some(last) = cache.layers.last() else { return };
        let c = convs.last().map(Conv2d::out_channels).unwrap_or(0);
        let mut d = unflatten(&dflat, c, batch, last.dims.0 * last.dims.1);
        for i in (0..convs.len()).rev() {
            let layer = &cache.layers[i];
            self.activation.backprop(&mut d, &layer.out);
            let in_dims = if i == 0 { cache.dims } else { cache.layers[i - 1].dims };
            let (gw, gb) = conv_grads[2 * i..2 * i + 2].split_at_mut(1);
            match (&layer.cols, &cache.input) {
                (Some(cols), _) => {
                    let need = (i > 0).then_some(in_dims);
                    if let Some(dx) = convs[i].backward_cols(cols, &d, batch, need, &mut gw[0], &mut gb[0]) {
                        d = dx;
                    }
                }
                (None, BranchInput::Codes(codes)) => {
                    convs[i].backward_codes(codes, &d, batch, in_dims.0, in_dims.1, &mut gw[0], &mut gb[0]);
                }
                (None, BranchInput::Dense(_)) => unreachable!("dense layers keep their patch matrix"),
            }
        }
    }
}

fn proj_width(l: &Option<Linear>) -> usize {
    l.as_ref().map(Linear::out_features).unwrap_or(0)
}

/// `[C][B][P] -> [B][C*P]`
fn flatten(x: &[f64], c: usize, b: usize, p: usize) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for ci in 0..c {
        for bi in 0..b {
            out[(bi * c + ci) * p..][..p].copy_from_slice(&x[(ci * b + bi) * p..][..p]);
        }
    }
    out
}

/// `[B][C*P] -> [C][B][P]`
fn unflatten(x: &[f64], c: usize, b: usize, p: usize) -> Vec<f64> {
    cbp_from_bchw(x, b, c, p)
}
