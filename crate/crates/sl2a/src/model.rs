//! Network assembly: declarative specs, the sl2a architecture and its
//! ablation, baseline coordinate networks, parameter counting, and bit-exact
//! checkpoints.
//!
//! The sl2a forward path is
//!
//! ```text
//! t      = tanh(coords)
//! psi    = LA(t)                       learnable Chebyshev activations
//! psi~   = LayerNorm(psi)              standardization, no affine
//! y_1    = psi~
//! y_l    = relu(W_l (y_{l-1} ⊙ psi~) + b_l)   for each hidden layer
//! out    = W_head y_last + b_head      no activation, no modulation
//! ```
//!
//! `sl2a-simple` is the identical construction minus the `⊙ psi~` factor.
//! The layer normalization here is pure standardization (gain/shift fixed at
//! 1/0), which keeps the parameter count at exactly
//! `n*m*D + L*(m^2+m) + (m*out+out)`.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::chebyshev::{la_param_count, LaBlock};
use crate::gradcheck::{flatten_params, load_flat_params, Differentiable};
use crate::layers::{
    ActKind, Activation, FourierEncode, FourierEncodingSpec, LayerNorm, Linear, LinearInit,
    LowRankLinear,
};
use crate::matrix::Matrix;
use crate::rng::Rng;
use crate::{Error, Result};

/// Supported architecture tags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Architecture {
    Sl2a,
    Sl2aSimple,
    ReluMlp,
    ReluPe,
    Siren,
    Gauss,
}

impl Architecture {
    pub fn parse(tag: &str) -> Result<Architecture> {
        match tag {
            "sl2a" => Ok(Self::Sl2a),
            "sl2a-simple" => Ok(Self::Sl2aSimple),
            "relu-mlp" => Ok(Self::ReluMlp),
            "relu-pe" => Ok(Self::ReluPe),
            "siren" => Ok(Self::Siren),
            "gauss" => Ok(Self::Gauss),
            other => Err(Error::Config(format!("unknown architecture tag: {other:?}"))),
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            Self::Sl2a => "sl2a",
            Self::Sl2aSimple => "sl2a-simple",
            Self::ReluMlp => "relu-mlp",
            Self::ReluPe => "relu-pe",
            Self::Siren => "siren",
            Self::Gauss => "gauss",
        }
    }
}

impl std::fmt::Display for Architecture {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

/// Declarative architecture description. `build` is deterministic in `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub architecture: Architecture,
    pub input_dim: usize,
    pub output_dim: usize,
    pub hidden_width: usize,
    /// Number of hidden layers (modulated ReLU layers for sl2a).
    pub num_hidden_layers: usize,
    pub chebyshev_degree: usize,
    /// When set, hidden layers and the head are factored at this rank.
    pub low_rank: Option<usize>,
    /// Sine frequency scale for siren.
    pub omega0: f64,
    /// Spread for gauss activations.
    pub gauss_spread: f64,
    /// Positional encoding used by relu-pe.
    pub fourier: FourierEncodingSpec,
    pub seed: u64,
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec {
            architecture: Architecture::Sl2a,
            input_dim: 2,
            output_dim: 3,
            hidden_width: 256,
            num_hidden_layers: 3,
            chebyshev_degree: 512,
            low_rank: None,
            omega0: 30.0,
            gauss_spread: 10.0,
            fourier: FourierEncodingSpec::default(),
            seed: 0,
        }
    }
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden_width == 0 {
            return Err(Error::Config("model dims must be > 0".into()));
        }
        if self.chebyshev_degree == 0 {
            return Err(Error::Config("chebyshev degree must be >= 1".into()));
        }
        if self.low_rank == Some(0) {
            return Err(Error::Config("low_rank must be >= 1 when set".into()));
        }
        if matches!(self.architecture, Architecture::ReluPe) && self.fourier.num_frequencies == 0 {
            return Err(Error::Config("relu-pe needs at least one frequency".into()));
        }
        Ok(())
    }

    fn uses_la_block(&self) -> bool {
        matches!(self.architecture, Architecture::Sl2a | Architecture::Sl2aSimple)
    }
}

/// A hidden/head linear map, dense or factored.
#[derive(Debug, Clone)]
pub enum LinearLike {
    Dense(Linear),
    LowRank(LowRankLinear),
}

impl LinearLike {
    fn build(in_dim: usize, out_dim: usize, rank: Option<usize>, rng: &mut Rng) -> Result<LinearLike> {
        match rank {
            None => Ok(LinearLike::Dense(Linear::new(in_dim, out_dim, LinearInit::HeUniform, rng)?)),
            Some(r) => Ok(LinearLike::LowRank(LowRankLinear::new(in_dim, out_dim, r, rng)?)),
        }
    }

    /// The dense weight matrix this map is equivalent to, plus its bias.
    pub fn dense_equivalent(&self) -> Result<(Matrix, Vec<f64>)> {
        match self {
            LinearLike::Dense(l) => Ok((l.weights().clone(), l.bias().to_vec())),
            LinearLike::LowRank(l) => {
                let w = l.dense_weights()?;
                // Bias is the last visited slice.
                let mut c = l.clone();
                let mut bias = Vec::new();
                c.visit_params(&mut |p, _| bias = p.to_vec());
                Ok((w, bias))
            }
        }
    }
}

impl Differentiable for LinearLike {
    fn forward(&mut self, x: &Matrix) -> Result<Matrix> {
        match self {
            LinearLike::Dense(l) => l.forward(x),
            LinearLike::LowRank(l) => l.forward(x),
        }
    }

    fn backward(&mut self, grad_out: &Matrix) -> Result<Matrix> {
        match self {
            LinearLike::Dense(l) => l.backward(grad_out),
            LinearLike::LowRank(l) => l.backward(grad_out),
        }
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(&mut [f64], &mut [f64])) {
        match self {
            LinearLike::Dense(l) => l.visit_params(f),
            LinearLike::LowRank(l) => l.visit_params(f),
        }
    }

    fn param_count(&self) -> usize {
        match self {
            LinearLike::Dense(l) => l.param_count(),
            LinearLike::LowRank(l) => l.param_count(),
        }
    }
}

struct Sl2aCache {
    /// tanh(coords), for the input-gradient chain.
    tanh_out: Matrix,
    /// The modulator actually used (normalized LA output, or ones when forced).
    modulator: Matrix,
    /// Input of each hidden layer before modulation (y_{l-1}).
    hidden_inputs: Vec<Matrix>,
    forced: bool,
}

/// The learnable-activation network with Hadamard skip modulation.
pub struct Sl2aNet {
    la: LaBlock,
    norm: LayerNorm,
    hidden: Vec<(LinearLike, Activation)>,
    head: LinearLike,
    /// false for the `sl2a-simple` ablation.
    modulate: bool,
    /// Diagnostic hook: replace the modulator (and y_1) with all-ones, which
    /// reduces every fusion layer to a plain ReLU linear layer.
    force_unit_modulation: bool,
    cache: Option<Sl2aCache>,
}

impl Sl2aNet {
    fn build(spec: &ModelSpec, rng: &mut Rng) -> Result<Sl2aNet> {
        let (n, m) = (spec.input_dim, spec.hidden_width);
        let la = LaBlock::new(n, m, spec.chebyshev_degree, rng)?;
        let norm = LayerNorm::without_affine(m);
        let mut hidden = Vec::with_capacity(spec.num_hidden_layers);
        for _ in 0..spec.num_hidden_layers {
            hidden.push((
                LinearLike::build(m, m, spec.low_rank, rng)?,
                Activation::new(ActKind::Relu),
            ));
        }
        let head = LinearLike::build(m, spec.output_dim, spec.low_rank, rng)?;
        Ok(Sl2aNet {
            la,
            norm,
            hidden,
            head,
            modulate: spec.architecture == Architecture::Sl2a,
            force_unit_modulation: false,
            cache: None,
        })
    }

    pub fn set_force_unit_modulation(&mut self, on: bool) {
        self.force_unit_modulation = on;
    }

    pub fn hidden_layers(&self) -> &[(LinearLike, Activation)] {
        &self.hidden
    }

    pub fn head(&self) -> &LinearLike {
        &self.head
    }

    pub fn la_block(&self) -> &LaBlock {
        &self.la
    }

    pub fn la_block_mut(&mut self) -> &mut LaBlock {
        &mut self.la
    }
}

impl Differentiable for Sl2aNet {
    fn forward(&mut self, coords: &Matrix) -> Result<Matrix> {
        let tanh_out = coords.map("tanh", f64::tanh)?;
        let psi = self.la.forward(&tanh_out)?;
        let psi_norm = self.norm.forward(&psi)?;
        let modulator = if self.force_unit_modulation {
            Matrix::ones(psi_norm.rows(), psi_norm.cols())
        } else {
            psi_norm
        };

        let mut y = modulator.clone();
        let mut hidden_inputs = Vec::with_capacity(self.hidden.len());
        for (lin, act) in &mut self.hidden {
            hidden_inputs.push(y.clone());
            let u = if self.modulate { y.hadamard(&modulator)? } else { y };
            let z = lin.forward(&u)?;
            y = act.forward(&z)?;
        }
        let out = self.head.forward(&y)?;
        self.cache = Some(Sl2aCache {
            tanh_out,
            modulator,
            hidden_inputs,
            forced: self.force_unit_modulation,
        });
        Ok(out)
    }

    fn backward(&mut self, grad_out: &Matrix) -> Result<Matrix> {
        let cache = self
            .cache
            .take()
            .ok_or_else(|| Error::Usage("sl2a backward without matching forward".into()))?;

        let mut g = self.head.backward(grad_out)?;
        let mut grad_modulator = Matrix::zeros(cache.modulator.rows(), cache.modulator.cols());
        for (idx, (lin, act)) in self.hidden.iter_mut().enumerate().rev() {
            let gz = act.backward(&g)?;
            let gu = lin.backward(&gz)?;
            if self.modulate {
                // u = y ⊙ psi~: gradient splits into both Hadamard branches.
                grad_modulator = grad_modulator.add(&gu.hadamard(&cache.hidden_inputs[idx])?)?;
                g = gu.hadamard(&cache.modulator)?;
            } else {
                g = gu;
            }
        }
        // y_1 = psi~ contributes directly.
        grad_modulator = grad_modulator.add(&g)?;

        // Under the all-ones hook the modulator is a constant: nothing flows
        // back into the normalization or the LA block. Zero gradients are
        // still propagated so the caches are consumed.
        if cache.forced {
            grad_modulator = Matrix::zeros(grad_modulator.rows(), grad_modulator.cols());
        }
        let g_psi = self.norm.backward(&grad_modulator)?;
        let g_tanh = self.la.backward(&g_psi)?;
        let dtanh = cache.tanh_out.map("tanh'", |t| 1.0 - t * t)?;
        g_tanh.hadamard(&dtanh)
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(&mut [f64], &mut [f64])) {
        self.la.visit_params(f);
        self.norm.visit_params(f);
        for (lin, act) in &mut self.hidden {
            lin.visit_params(f);
            act.visit_params(f);
        }
        self.head.visit_params(f);
    }

    fn param_count(&self) -> usize {
        self.la.param_count()
            + self.norm.param_count()
            + self.hidden.iter().map(|(l, a)| l.param_count() + a.param_count()).sum::<usize>()
            + self.head.param_count()
    }
}

/// One stage of a plain sequential network.
pub enum StackLayer {
    Linear(Linear),
    Act(Activation),
    Fourier(FourierEncode),
}

impl StackLayer {
    fn as_diff(&mut self) -> &mut dyn Differentiable {
        match self {
            StackLayer::Linear(l) => l,
            StackLayer::Act(a) => a,
            StackLayer::Fourier(p) => p,
        }
    }

    fn count(&self) -> usize {
        match self {
            StackLayer::Linear(l) => l.param_count(),
            StackLayer::Act(a) => a.param_count(),
            StackLayer::Fourier(p) => p.param_count(),
        }
    }
}

/// Sequential baseline network (relu-mlp, relu-pe, siren, gauss).
pub struct Stack {
    layers: Vec<StackLayer>,
}

impl Stack {
    fn build(spec: &ModelSpec, rng: &mut Rng) -> Result<Stack> {
        let (n, m, out) = (spec.input_dim, spec.hidden_width, spec.output_dim);
        let h = spec.num_hidden_layers;
        let mut layers = Vec::new();

        let (first_in, act, first_init, hidden_init): (usize, ActKind, LinearInit, LinearInit) =
            match spec.architecture {
                Architecture::ReluMlp => {
                    (n, ActKind::Relu, LinearInit::HeUniform, LinearInit::HeUniform)
                }
                Architecture::ReluPe => {
                    layers.push(StackLayer::Fourier(FourierEncode::new(spec.fourier)));
                    (
                        spec.fourier.output_dim(n),
                        ActKind::Relu,
                        LinearInit::HeUniform,
                        LinearInit::HeUniform,
                    )
                }
                Architecture::Siren => (
                    n,
                    ActKind::Sine { omega0: spec.omega0 },
                    LinearInit::SirenFirst,
                    LinearInit::SirenHidden { omega0: spec.omega0 },
                ),
                Architecture::Gauss => (
                    n,
                    ActKind::Gaussian { spread: spec.gauss_spread },
                    LinearInit::HeUniform,
                    LinearInit::HeUniform,
                ),
                _ => return Err(Error::Config("not a sequential architecture".into())),
            };

        if h == 0 {
            layers.push(StackLayer::Linear(Linear::new(first_in, out, hidden_init, rng)?));
            return Ok(Stack { layers });
        }

        layers.push(StackLayer::Linear(Linear::new(first_in, m, first_init, rng)?));
        layers.push(StackLayer::Act(Activation::new(act)));
        for _ in 1..h {
            layers.push(StackLayer::Linear(Linear::new(m, m, hidden_init, rng)?));
            layers.push(StackLayer::Act(Activation::new(act)));
        }
        layers.push(StackLayer::Linear(Linear::new(m, out, hidden_init, rng)?));
        Ok(Stack { layers })
    }

    /// Builds a bare ReLU stack from explicit dense layers; used to compare a
    /// modulation-disabled sl2a against a weight-matched MLP.
    pub fn from_relu_layers(hidden: Vec<Linear>, head: Linear) -> Stack {
        let mut layers = Vec::new();
        for l in hidden {
            layers.push(StackLayer::Linear(l));
            layers.push(StackLayer::Act(Activation::new(ActKind::Relu)));
        }
        layers.push(StackLayer::Linear(head));
        Stack { layers }
    }
}

impl Differentiable for Stack {
    fn forward(&mut self, x: &Matrix) -> Result<Matrix> {
        let mut y = x.clone();
        for layer in &mut self.layers {
            y = layer.as_diff().forward(&y)?;
        }
        Ok(y)
    }

    fn backward(&mut self, grad_out: &Matrix) -> Result<Matrix> {
        let mut g = grad_out.clone();
        for layer in self.layers.iter_mut().rev() {
            g = layer.as_diff().backward(&g)?;
        }
        Ok(g)
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(&mut [f64], &mut [f64])) {
        for layer in &mut self.layers {
            layer.as_diff().visit_params(f);
        }
    }

    fn param_count(&self) -> usize {
        self.layers.iter().map(StackLayer::count).sum()
    }
}

enum Body {
    Sl2a(Sl2aNet),
    Stack(Stack),
}

/// A built network plus the spec that produced it.
pub struct Network {
    spec: ModelSpec,
    body: Body,
}

impl Network {
    /// Deterministic construction: the same spec (including seed) always
    /// yields the same parameter bytes.
    pub fn build(spec: &ModelSpec) -> Result<Network> {
        spec.validate()?;
        let mut rng = Rng::new(spec.seed);
        let body = if spec.uses_la_block() {
            Body::Sl2a(Sl2aNet::build(spec, &mut rng)?)
        } else {
            Body::Stack(Stack::build(spec, &mut rng)?)
        };
        Ok(Network { spec: spec.clone(), body })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    /// Exact parameter count of the built network.
    pub fn count_params(&self) -> usize {
        match &self.body {
            Body::Sl2a(n) => n.param_count(),
            Body::Stack(s) => s.param_count(),
        }
    }

    pub fn as_sl2a(&self) -> Option<&Sl2aNet> {
        match &self.body {
            Body::Sl2a(n) => Some(n),
            _ => None,
        }
    }

    pub fn as_sl2a_mut(&mut self) -> Option<&mut Sl2aNet> {
        match &mut self.body {
            Body::Sl2a(n) => Some(n),
            _ => None,
        }
    }

    /// Forward over `coords` in fixed-size row chunks; keeps peak memory flat
    /// on large evaluation grids. Chunking does not affect the values.
    pub fn predict_chunked(&mut self, coords: &Matrix, chunk_rows: usize) -> Result<Matrix> {
        let chunk = chunk_rows.max(1);
        if coords.rows() <= chunk {
            return self.forward(coords);
        }
        let mut out: Option<Matrix> = None;
        let mut start = 0;
        while start < coords.rows() {
            let end = (start + chunk).min(coords.rows());
            let idx: Vec<usize> = (start..end).collect();
            let part = self.forward(&coords.select_rows(&idx))?;
            out = Some(match out {
                None => part,
                Some(acc) => acc.vstack(&part)?,
            });
            start = end;
        }
        Ok(out.expect("non-empty coords"))
    }
}

impl Differentiable for Network {
    fn forward(&mut self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.spec.input_dim {
            return Err(Error::Shape(format!(
                "network forward: input width {} vs {}",
                x.cols(),
                self.spec.input_dim
            )));
        }
        match &mut self.body {
            Body::Sl2a(n) => n.forward(x),
            Body::Stack(s) => s.forward(x),
        }
    }

    fn backward(&mut self, grad_out: &Matrix) -> Result<Matrix> {
        match &mut self.body {
            Body::Sl2a(n) => n.backward(grad_out),
            Body::Stack(s) => s.backward(grad_out),
        }
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(&mut [f64], &mut [f64])) {
        match &mut self.body {
            Body::Sl2a(n) => n.visit_params(f),
            Body::Stack(s) => s.visit_params(f),
        }
    }

    fn param_count(&self) -> usize {
        self.count_params()
    }
}

const CHECKPOINT_MAGIC: &[u8; 10] = b"SL2A.CKPT\n";
const CHECKPOINT_VERSION: u32 = 1;

/// Writes a versioned binary checkpoint: magic, format version, the spec as
/// JSON, and the flat f64 parameter vector (little-endian). Round-trips are
/// bit-exact.
pub fn save_checkpoint(net: &mut Network, path: &Path) -> Result<()> {
    let spec_json = serde_json::to_vec(net.spec())
        .map_err(|e| Error::Config(format!("spec serialization failed: {e}")))?;
    let params = flatten_params(net);
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    file.write_all(CHECKPOINT_MAGIC)?;
    file.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    file.write_all(&(spec_json.len() as u64).to_le_bytes())?;
    file.write_all(&spec_json)?;
    file.write_all(&(params.len() as u64).to_le_bytes())?;
    for p in &params {
        file.write_all(&p.to_le_bytes())?;
    }
    Ok(())
}

/// Reads a checkpoint written by [`save_checkpoint`].
pub fn load_checkpoint(path: &Path) -> Result<Network> {
    let mut file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 10];
    file.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Parse(format!("{}: not a checkpoint file (bad magic)", path.display())));
    }
    let mut word = [0u8; 4];
    file.read_exact(&mut word)?;
    let version = u32::from_le_bytes(word);
    if version != CHECKPOINT_VERSION {
        return Err(Error::Parse(format!("unsupported checkpoint version {version}")));
    }
    let mut len8 = [0u8; 8];
    file.read_exact(&mut len8)?;
    let spec_len = u64::from_le_bytes(len8) as usize;
    let mut spec_json = vec![0u8; spec_len];
    file.read_exact(&mut spec_json)?;
    let spec: ModelSpec = serde_json::from_slice(&spec_json)
        .map_err(|e| Error::Parse(format!("checkpoint spec: {e}")))?;
    file.read_exact(&mut len8)?;
    let n_params = u64::from_le_bytes(len8) as usize;
    let mut params = Vec::with_capacity(n_params);
    let mut buf = [0u8; 8];
    for _ in 0..n_params {
        file.read_exact(&mut buf)?;
        params.push(f64::from_le_bytes(buf));
    }
    let mut net = Network::build(&spec)?;
    load_flat_params(&mut net, &params)?;
    Ok(net)
}
