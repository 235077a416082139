use rand::Rng;

use super::{LatentModel, Mlp};
use crate::error::Result;
use crate::nn::{count_params, ParamStore, Tape, Var};

/// Fully connected autoencoder baseline on flattened node states.
#[derive(Debug, Clone)]
pub struct DenseAutoencoder {
    encoder: Mlp,
    decoder: Mlp,
    mlp: Mlp,
    n_nodes: usize,
    channels: usize,
    n_inputs: usize,
    latent: usize,
}

impl DenseAutoencoder {
    pub const HIDDEN: [usize; 2] = [200, 80];

    pub fn new(prefix: &str, n_nodes: usize, channels: usize, latent: usize, n_inputs: usize, mlp_hidden: &[usize]) -> Self {
        let dim = n_nodes * channels;
        let mut mirrored = Self::HIDDEN;
        mirrored.reverse();
        Self {
            encoder: Mlp::new(&format!("{prefix}.enc"), dim, &Self::HIDDEN, latent),
            decoder: Mlp::new(&format!("{prefix}.dec"), latent, &mirrored, dim),
            mlp: Mlp::new(&format!("{prefix}.mlp"), n_inputs, mlp_hidden, latent),
            n_nodes,
            channels,
            n_inputs,
            latent,
        }
    }

    pub fn init(&self, store: &mut ParamStore, rng: &mut impl Rng) -> Result<()> {
        self.encoder.init(store, rng, false)?;
        self.decoder.init(store, rng, false)?;
        self.mlp.init(store, rng, false)
    }

    pub fn encoder_params(&self) -> usize {
        count_params(&self.encoder.specs())
    }

    pub fn decoder_params(&self) -> usize {
        count_params(&self.decoder.specs())
    }
}

impl LatentModel for DenseAutoencoder {
    fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    fn channels(&self) -> usize {
        self.channels
    }

    fn n_inputs(&self) -> usize {
        self.n_inputs
    }

    fn latent_dim(&self) -> usize {
        self.latent
    }

    fn encode(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let batch = tape.dims(x).0 / self.n_nodes;
        let flat = tape.reshape(x, batch, self.n_nodes * self.channels)?;
        self.encoder.forward(tape, store, flat)
    }

    fn decode(&self, tape: &mut Tape, store: &ParamStore, z: Var) -> Result<Var> {
        let batch = tape.dims(z).0;
        let flat = self.decoder.forward(tape, store, z)?;
        tape.reshape(flat, batch * self.n_nodes, self.channels)
    }

    fn mlp(&self, tape: &mut Tape, store: &ParamStore, inputs: Var) -> Result<Var> {
        self.mlp.forward(tape, store, inputs)
    }
}
