//! Single-level surrogate: graph-convolutional autoencoder plus a parameter
//! MLP, its two-part loss and training loop, and linear/dense baselines.

mod dense_ae;
mod normalize;
mod pod;
mod train;

pub use dense_ae::DenseAutoencoder;
pub use normalize::Normalizer;
pub use pod::{pod_fit, pod_params, PodBasis, PodSurrogate};
pub use train::{
    batch_loss, evaluate_loss, loss, loss_from_predictions, train, Adam, LossParts, TrainConfig, TrainHistory,
    TrainingSet,
};

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Trajectory;
use crate::nn::{count_params, Activation, ChebConvLayer, Dense, LayerSpec, ParamStore, Tape, Var};
use crate::sparse::CsrMatrix;
use crate::transfer::RefinedSurrogate;

/// Layer sizes shared by every level of a surrogate chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SurrogateArch {
    /// Number of Chebyshev coefficient matrices per graph convolution.
    pub order: usize,
    /// Channel widths of the encoder convolutions, input first; the decoder
    /// mirrors them.
    pub channels: Vec<usize>,
    pub latent: usize,
    pub mlp_hidden: Vec<usize>,
    /// MLP inputs: scenario parameters plus time.
    pub n_inputs: usize,
}

impl Default for SurrogateArch {
    fn default() -> Self {
        Self {
            order: 3,
            channels: vec![3, 6, 12, 24],
            latent: 4,
            mlp_hidden: vec![64, 64, 64],
            n_inputs: 4,
        }
    }
}

impl SurrogateArch {
    pub fn validate(&self) -> Result<()> {
        if self.order == 0 || self.channels.len() < 2 || self.channels.contains(&0) || self.latent == 0 {
            return Err(Error::Argument(format!("invalid architecture {self:?}")));
        }
        Ok(())
    }

    pub fn state_channels(&self) -> usize {
        self.channels[0]
    }

    fn last_channels(&self) -> usize {
        *self.channels.last().expect("validated")
    }

    pub fn encoder_specs(&self, n_nodes: usize) -> Vec<LayerSpec> {
        let mut s: Vec<LayerSpec> = self
            .channels
            .windows(2)
            .map(|w| LayerSpec::Cheb {
                order: self.order,
                c_in: w[0],
                c_out: w[1],
                bias: true,
            })
            .collect();
        s.push(LayerSpec::Dense {
            inputs: n_nodes * self.last_channels(),
            outputs: self.latent,
            bias: true,
        });
        s
    }

    pub fn decoder_specs(&self, n_nodes: usize) -> Vec<LayerSpec> {
        let mut s = vec![LayerSpec::Dense {
            inputs: self.latent,
            outputs: n_nodes * self.last_channels(),
            bias: true,
        }];
        s.extend(self.channels.windows(2).rev().map(|w| LayerSpec::Cheb {
            order: self.order,
            c_in: w[1],
            c_out: w[0],
            bias: true,
        }));
        s
    }

    pub fn mlp_specs(&self, inputs: usize) -> Vec<LayerSpec> {
        let mut widths = vec![inputs];
        widths.extend(&self.mlp_hidden);
        widths.push(self.latent);
        widths
            .windows(2)
            .map(|w| LayerSpec::Dense {
                inputs: w[0],
                outputs: w[1],
                bias: true,
            })
            .collect()
    }

    /// Encoder plus decoder parameters on an `n_nodes` level.
    pub fn autoencoder_params(&self, n_nodes: usize) -> usize {
        count_params(&self.encoder_specs(n_nodes)) + count_params(&self.decoder_specs(n_nodes))
    }
}

/// Anything mapping node states and scenario inputs through a latent space.
///
/// Node signals are `(batch * n_nodes) x channels`, latents `batch x r`,
/// inputs `batch x n_inputs`; all values are in normalized units.
pub trait LatentModel {
    fn n_nodes(&self) -> usize;
    fn channels(&self) -> usize;
    fn n_inputs(&self) -> usize;
    fn latent_dim(&self) -> usize;
    fn encode(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var>;
    fn decode(&self, tape: &mut Tape, store: &ParamStore, z: Var) -> Result<Var>;
    fn mlp(&self, tape: &mut Tape, store: &ParamStore, inputs: Var) -> Result<Var>;
}

/// Chebyshev convolutions followed by a linear map to the latent space.
#[derive(Debug, Clone)]
pub struct GraphEncoder {
    convs: Vec<ChebConvLayer>,
    fc: Dense,
    n_nodes: usize,
}

impl GraphEncoder {
    fn new(prefix: &str, lap: &Arc<CsrMatrix>, arch: &SurrogateArch) -> Result<Self> {
        let n = lap.rows();
        let convs = arch
            .channels
            .windows(2)
            .enumerate()
            .map(|(i, w)| ChebConvLayer::new(&format!("{prefix}.conv{i}"), arch.order, w[0], w[1], true, Arc::clone(lap)))
            .collect::<Result<Vec<_>>>()?;
        let fc = Dense::new(&format!("{prefix}.fc"), n * arch.last_channels(), arch.latent, true);
        Ok(Self { convs, fc, n_nodes: n })
    }

    fn init(&self, store: &mut ParamStore, rng: &mut impl Rng, zero_last: bool) -> Result<()> {
        for c in &self.convs {
            c.init(store, rng)?;
        }
        if zero_last {
            self.fc.init_zero(store)
        } else {
            self.fc.init(store, rng)
        }
    }

    fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let mut h = x;
        for c in &self.convs {
            h = c.forward(tape, store, h)?;
            h = tape.elu(h);
        }
        let (rows, cols) = tape.dims(h);
        let batch = rows / self.n_nodes;
        let flat = tape.reshape(h, batch, self.n_nodes * cols)?;
        self.fc.forward(tape, store, flat)
    }
}

/// Linear-then-ELU lift from the latent space followed by mirrored
/// Chebyshev convolutions; the last convolution is linear.
#[derive(Debug, Clone)]
pub struct GraphDecoder {
    fc: Dense,
    convs: Vec<ChebConvLayer>,
    n_nodes: usize,
    width: usize,
}

impl GraphDecoder {
    fn new(prefix: &str, lap: &Arc<CsrMatrix>, arch: &SurrogateArch) -> Result<Self> {
        let n = lap.rows();
        let fc = Dense::new(&format!("{prefix}.fc"), arch.latent, n * arch.last_channels(), true);
        let convs = arch
            .channels
            .windows(2)
            .rev()
            .enumerate()
            .map(|(i, w)| ChebConvLayer::new(&format!("{prefix}.conv{i}"), arch.order, w[1], w[0], true, Arc::clone(lap)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            fc,
            convs,
            n_nodes: n,
            width: arch.last_channels(),
        })
    }

    fn init(&self, store: &mut ParamStore, rng: &mut impl Rng, zero_last: bool) -> Result<()> {
        self.fc.init(store, rng)?;
        let last = self.convs.len() - 1;
        for (i, c) in self.convs.iter().enumerate() {
            if zero_last && i == last {
                c.init_zero(store)?;
            } else {
                c.init(store, rng)?;
            }
        }
        Ok(())
    }

    fn forward(&self, tape: &mut Tape, store: &ParamStore, z: Var) -> Result<Var> {
        let batch = tape.dims(z).0;
        let h = self.fc.forward(tape, store, z)?;
        let h = tape.elu(h);
        let mut h = tape.reshape(h, batch * self.n_nodes, self.width)?;
        let last = self.convs.len() - 1;
        for (i, c) in self.convs.iter().enumerate() {
            h = c.forward(tape, store, h)?;
            if i != last {
                h = tape.elu(h);
            }
        }
        Ok(h)
    }
}

/// Fully connected network with ELU hidden layers and a linear output.
#[derive(Debug, Clone)]
pub struct Mlp {
    layers: Vec<Dense>,
}

impl Mlp {
    pub fn new(prefix: &str, inputs: usize, hidden: &[usize], outputs: usize) -> Self {
        let mut widths = vec![inputs];
        widths.extend(hidden);
        widths.push(outputs);
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| Dense::new(&format!("{prefix}.fc{i}"), w[0], w[1], true))
            .collect();
        Self { layers }
    }

    pub fn init(&self, store: &mut ParamStore, rng: &mut impl Rng, zero_last: bool) -> Result<()> {
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            if zero_last && i == last {
                l.init_zero(store)?;
            } else {
                l.init(store, rng)?;
            }
        }
        Ok(())
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let last = self.layers.len() - 1;
        let mut h = x;
        for (i, l) in self.layers.iter().enumerate() {
            h = l.forward(tape, store, h)?;
            let act = if i == last { Activation::Linear } else { Activation::Elu };
            h = act.apply(tape, h);
        }
        Ok(h)
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(Dense::spec).collect()
    }
}

/// Encoder, decoder and MLP of one hierarchy level.
#[derive(Debug, Clone)]
pub struct SurrogateLevel {
    level: usize,
    prefix: String,
    arch: SurrogateArch,
    mlp_inputs: usize,
    encoder: GraphEncoder,
    decoder: GraphDecoder,
    mlp: Mlp,
}

impl SurrogateLevel {
    /// Structure only; parameters are named `<prefix>.enc.*`, `.dec.*`,
    /// `.mlp.*`. `mlp_inputs` is normally `arch.n_inputs`.
    pub fn new(prefix: &str, level: usize, lap: &Arc<CsrMatrix>, arch: &SurrogateArch, mlp_inputs: usize) -> Result<Self> {
        arch.validate()?;
        Ok(Self {
            level,
            prefix: prefix.to_string(),
            arch: arch.clone(),
            mlp_inputs,
            encoder: GraphEncoder::new(&format!("{prefix}.enc"), lap, arch)?,
            decoder: GraphDecoder::new(&format!("{prefix}.dec"), lap, arch)?,
            mlp: Mlp::new(&format!("{prefix}.mlp"), mlp_inputs, &arch.mlp_hidden, arch.latent),
        })
    }

    /// Glorot weights and zero biases; with `zero_final` the last layer of
    /// the encoder, decoder and MLP start at exactly zero.
    pub fn init(&self, store: &mut ParamStore, rng: &mut impl Rng, zero_final: bool) -> Result<()> {
        self.encoder.init(store, rng, zero_final)?;
        self.decoder.init(store, rng, zero_final)?;
        self.mlp.init(store, rng, zero_final)
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn prefix(&self) -> &str {
        &self.prefix
    }

    pub fn arch(&self) -> &SurrogateArch {
        &self.arch
    }

    pub fn encoder_specs(&self) -> Vec<LayerSpec> {
        self.arch.encoder_specs(self.encoder.n_nodes)
    }

    pub fn decoder_specs(&self) -> Vec<LayerSpec> {
        self.arch.decoder_specs(self.decoder.n_nodes)
    }

    pub fn mlp_specs(&self) -> Vec<LayerSpec> {
        self.mlp.specs()
    }
}

impl LatentModel for SurrogateLevel {
    fn n_nodes(&self) -> usize {
        self.encoder.n_nodes
    }

    fn channels(&self) -> usize {
        self.arch.state_channels()
    }

    fn n_inputs(&self) -> usize {
        self.mlp_inputs
    }

    fn latent_dim(&self) -> usize {
        self.arch.latent
    }

    fn encode(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        self.encoder.forward(tape, store, x)
    }

    fn decode(&self, tape: &mut Tape, store: &ParamStore, z: Var) -> Result<Var> {
        self.decoder.forward(tape, store, z)
    }

    fn mlp(&self, tape: &mut Tape, store: &ParamStore, inputs: Var) -> Result<Var> {
        self.mlp.forward(tape, store, inputs)
    }
}

/// A trained-or-training surrogate: a base level or a refinement of a
/// coarser surrogate.
#[derive(Debug, Clone)]
pub enum Surrogate {
    Base(SurrogateLevel),
    Refined(Box<RefinedSurrogate>),
}

impl Surrogate {
    /// Builds and initializes a base surrogate on a level's scaled Laplacian.
    pub fn new_base(
        level: usize,
        lap: &Arc<CsrMatrix>,
        arch: &SurrogateArch,
        store: &mut ParamStore,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let s = SurrogateLevel::new(&level_prefix(level), level, lap, arch, arch.n_inputs)?;
        s.init(store, rng, false)?;
        Ok(Surrogate::Base(s))
    }

    /// Hierarchy level whose nodes this surrogate predicts.
    pub fn level(&self) -> usize {
        match self {
            Surrogate::Base(s) => s.level(),
            Surrogate::Refined(r) => r.level(),
        }
    }

    pub fn arch(&self) -> &SurrogateArch {
        match self {
            Surrogate::Base(s) => s.arch(),
            Surrogate::Refined(r) => r.coarse().arch(),
        }
    }

    /// Levels of the chain, coarsest first.
    pub fn levels(&self) -> Vec<usize> {
        match self {
            Surrogate::Base(s) => vec![s.level()],
            Surrogate::Refined(r) => {
                let mut l = r.coarse().levels();
                l.push(r.level());
                l
            }
        }
    }

    /// The member of the chain that predicts `level`.
    pub fn at_level(&self, level: usize) -> Result<&Surrogate> {
        if self.level() == level {
            return Ok(self);
        }
        match self {
            Surrogate::Refined(r) => r.coarse().at_level(level),
            Surrogate::Base(_) => Err(Error::Argument(format!(
                "no surrogate for level {level} in chain {:?}",
                self.levels()
            ))),
        }
    }

    /// Encoder plus decoder parameter count of the networks owned by this
    /// level (excluding frozen coarser levels and the adaptive upsampler).
    pub fn own_autoencoder_params(&self) -> usize {
        let s = match self {
            Surrogate::Base(s) => s,
            Surrogate::Refined(r) => r.residual(),
        };
        count_params(&s.encoder_specs()) + count_params(&s.decoder_specs())
    }
}

impl LatentModel for Surrogate {
    fn n_nodes(&self) -> usize {
        match self {
            Surrogate::Base(s) => s.n_nodes(),
            Surrogate::Refined(r) => r.n_nodes(),
        }
    }

    fn channels(&self) -> usize {
        match self {
            Surrogate::Base(s) => s.channels(),
            Surrogate::Refined(r) => r.channels(),
        }
    }

    fn n_inputs(&self) -> usize {
        match self {
            Surrogate::Base(s) => s.n_inputs(),
            Surrogate::Refined(r) => r.n_inputs(),
        }
    }

    fn latent_dim(&self) -> usize {
        match self {
            Surrogate::Base(s) => s.latent_dim(),
            Surrogate::Refined(r) => r.latent_dim(),
        }
    }

    fn encode(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        match self {
            Surrogate::Base(s) => s.encode(tape, store, x),
            Surrogate::Refined(r) => r.encode(tape, store, x),
        }
    }

    fn decode(&self, tape: &mut Tape, store: &ParamStore, z: Var) -> Result<Var> {
        match self {
            Surrogate::Base(s) => s.decode(tape, store, z),
            Surrogate::Refined(r) => r.decode(tape, store, z),
        }
    }

    fn mlp(&self, tape: &mut Tape, store: &ParamStore, inputs: Var) -> Result<Var> {
        match self {
            Surrogate::Base(s) => s.mlp(tape, store, inputs),
            Surrogate::Refined(r) => r.mlp(tape, store, inputs),
        }
    }
}

/// Parameter-name prefix of the networks owned by `level`.
pub fn level_prefix(level: usize) -> String {
    format!("l{level}")
}

/// `decode(encode(x))` for a batch of normalized states.
pub fn reconstruct<M: LatentModel + ?Sized>(tape: &mut Tape, model: &M, store: &ParamStore, x: Var) -> Result<Var> {
    let z = model.encode(tape, store, x)?;
    model.decode(tape, store, z)
}

/// Surrogate trajectory `decode(mlp(mu, t))` for every time in `times`, in
/// physical units at the model's own resolution.
pub fn predict<M: LatentModel + ?Sized>(
    model: &M,
    store: &ParamStore,
    norm: &Normalizer,
    mu: &[f64],
    times: &[f64],
) -> Result<Trajectory> {
    if mu.len() + 1 != model.n_inputs() {
        return Err(Error::Shape(format!(
            "model takes {} scenario parameters, got {}",
            model.n_inputs() - 1,
            mu.len()
        )));
    }
    let mut inputs = Vec::with_capacity(times.len() * model.n_inputs());
    for &t in times {
        inputs.extend(norm.normalize_input(mu, t)?);
    }
    let mut tape = Tape::inference();
    let u = tape.constant(times.len(), model.n_inputs(), inputs)?;
    let z = model.mlp(&mut tape, store, u)?;
    let x = model.decode(&mut tape, store, z)?;
    let mut data = tape.value(x).to_vec();
    norm.denormalize_states(&mut data)?;
    Trajectory::new(times.len(), model.n_nodes(), model.channels(), data)
}
