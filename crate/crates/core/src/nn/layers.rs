use std::sync::Arc;

use rand::Rng;

use super::{glorot_uniform, ParamStore, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Elu,
    Linear,
}

impl Activation {
    pub fn apply(self, tape: &mut Tape, x: Var) -> Var {
        match self {
            Activation::Elu => tape.elu(x),
            Activation::Linear => x,
        }
    }
}

/// Fully connected layer `y = x W + b`, `W` stored `inputs x outputs`.
#[derive(Debug, Clone)]
pub struct Dense {
    pub weight: String,
    pub bias: Option<String>,
    pub inputs: usize,
    pub outputs: usize,
}

impl Dense {
    pub fn new(prefix: &str, inputs: usize, outputs: usize, bias: bool) -> Self {
        Self {
            weight: format!("{prefix}.weight"),
            bias: bias.then(|| format!("{prefix}.bias")),
            inputs,
            outputs,
        }
    }

    /// Registers Glorot-uniform weights and a zero bias.
    pub fn init(&self, store: &mut ParamStore, rng: &mut impl Rng) -> Result<()> {
        store.insert(&self.weight, glorot_uniform(self.inputs, self.outputs, rng))?;
        self.insert_bias(store)
    }

    /// Registers all-zero weights and bias.
    pub fn init_zero(&self, store: &mut ParamStore) -> Result<()> {
        store.insert(&self.weight, Tensor::zeros(vec![self.inputs, self.outputs]))?;
        self.insert_bias(store)
    }

    fn insert_bias(&self, store: &mut ParamStore) -> Result<()> {
        if let Some(b) = &self.bias {
            store.insert(b, Tensor::zeros(vec![self.outputs]))?;
        }
        Ok(())
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let w = tape.param(store, &self.weight)?;
        let b = self.bias.as_deref().map(|b| tape.param(store, b)).transpose()?;
        tape.affine(x, w, b)
    }

    pub fn spec(&self) -> LayerSpec {
        LayerSpec::Dense {
            inputs: self.inputs,
            outputs: self.outputs,
            bias: self.bias.is_some(),
        }
    }
}

/// Chebyshev spectral graph convolution of a fixed order on one level.
#[derive(Debug, Clone)]
pub struct ChebConvLayer {
    pub order: usize,
    pub c_in: usize,
    pub c_out: usize,
    thetas: Vec<String>,
    bias: Option<String>,
    laplacian: Arc<CsrMatrix>,
}

impl ChebConvLayer {
    /// `laplacian` is the level's scaled Laplacian; it must be square and
    /// symmetric.
    pub fn new(
        prefix: &str,
        order: usize,
        c_in: usize,
        c_out: usize,
        bias: bool,
        laplacian: Arc<CsrMatrix>,
    ) -> Result<Self> {
        if order == 0 {
            return Err(Error::Argument("Chebyshev order must be at least 1".into()));
        }
        if laplacian.rows() != laplacian.cols() || !laplacian.is_symmetric() {
            return Err(Error::Argument("graph operator must be square and symmetric".into()));
        }
        Ok(Self {
            order,
            c_in,
            c_out,
            thetas: (0..order).map(|k| format!("{prefix}.theta{k}")).collect(),
            bias: bias.then(|| format!("{prefix}.bias")),
            laplacian,
        })
    }

    pub fn theta_names(&self) -> &[String] {
        &self.thetas
    }

    pub fn bias_name(&self) -> Option<&str> {
        self.bias.as_deref()
    }

    pub fn laplacian(&self) -> &Arc<CsrMatrix> {
        &self.laplacian
    }

    pub fn n_nodes(&self) -> usize {
        self.laplacian.rows()
    }

    /// Glorot-uniform coefficients (each `c_in x c_out`) and a zero bias.
    pub fn init(&self, store: &mut ParamStore, rng: &mut impl Rng) -> Result<()> {
        for t in &self.thetas {
            store.insert(t, glorot_uniform(self.c_in, self.c_out, rng))?;
        }
        self.insert_bias(store)
    }

    pub fn init_zero(&self, store: &mut ParamStore) -> Result<()> {
        for t in &self.thetas {
            store.insert(t, Tensor::zeros(vec![self.c_in, self.c_out]))?;
        }
        self.insert_bias(store)
    }

    fn insert_bias(&self, store: &mut ParamStore) -> Result<()> {
        if let Some(b) = &self.bias {
            store.insert(b, Tensor::zeros(vec![self.c_out]))?;
        }
        Ok(())
    }

    /// `x` is `(batch * n) x c_in`.
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let thetas = self
            .thetas
            .iter()
            .map(|t| tape.param(store, t))
            .collect::<Result<Vec<_>>>()?;
        let b = self.bias.as_deref().map(|b| tape.param(store, b)).transpose()?;
        tape.cheb_conv(x, &self.laplacian, &thetas, b)
    }

    pub fn spec(&self) -> LayerSpec {
        LayerSpec::Cheb {
            order: self.order,
            c_in: self.c_in,
            c_out: self.c_out,
            bias: self.bias.is_some(),
        }
    }
}

/// Shape-only description of a layer, for parameter accounting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerSpec {
    Dense { inputs: usize, outputs: usize, bias: bool },
    Cheb { order: usize, c_in: usize, c_out: usize, bias: bool },
}

impl LayerSpec {
    pub fn n_params(&self) -> usize {
        match *self {
            LayerSpec::Dense { inputs, outputs, bias } => inputs * outputs + if bias { outputs } else { 0 },
            LayerSpec::Cheb {
                order,
                c_in,
                c_out,
                bias,
            } => order * c_in * c_out + if bias { c_out } else { 0 },
        }
    }
}

/// Sum of weight and bias element counts over `layers`.
pub fn count_params(layers: &[LayerSpec]) -> usize {
    layers.iter().map(LayerSpec::n_params).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dense_counts() {
        assert_eq!(Dense::new("fc", 64, 64, true).spec().n_params(), 4160);
        assert_eq!(Dense::new("fc", 7, 3, false).spec().n_params(), 21);
        let mlp: Vec<_> = [(4, 64), (64, 64), (64, 64), (64, 4)]
            .iter()
            .map(|&(i, o)| LayerSpec::Dense {
                inputs: i,
                outputs: o,
                bias: true,
            })
            .collect();
        assert_eq!(count_params(&mlp), 8900);
    }

    #[test]
    fn dense_identity_and_hand_case() {
        let mut s = ParamStore::new();
        let d = Dense::new("fc", 1, 1, true);
        d.init_zero(&mut s).unwrap();
        s.get_mut("fc.weight").unwrap().assign(&[2.0]).unwrap();
        s.get_mut("fc.bias").unwrap().assign(&[3.0]).unwrap();
        let mut t = Tape::new();
        let x = t.constant(1, 1, vec![1.0]).unwrap();
        let y = d.forward(&mut t, &s, x).unwrap();
        assert_eq!(t.value(y), &[5.0]);

        let mut s = ParamStore::new();
        let d = Dense::new("id", 3, 3, true);
        d.init_zero(&mut s).unwrap();
        s.get_mut("id.weight")
            .unwrap()
            .assign(&[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0])
            .unwrap();
        let mut t = Tape::new();
        let x = t.constant(2, 3, vec![1.0, -2.0, 3.0, 0.5, 0.25, -8.0]).unwrap();
        let y = d.forward(&mut t, &s, x).unwrap();
        assert_eq!(t.value(y), t.value(x));
    }

    #[test]
    fn cheb_identity_filter() {
        let lap = Arc::new(CsrMatrix::from_triplets(3, 3, [(0, 1, 0.5), (1, 0, 0.5), (2, 2, -1.0)]).unwrap());
        let layer = ChebConvLayer::new("c", 1, 2, 2, true, lap).unwrap();
        let mut s = ParamStore::new();
        layer.init_zero(&mut s).unwrap();
        s.get_mut("c.theta0").unwrap().assign(&[1.0, 0.0, 0.0, 1.0]).unwrap();
        let mut t = Tape::new();
        let x = t.constant(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let y = layer.forward(&mut t, &s, x).unwrap();
        assert_eq!(t.value(y), t.value(x));
    }

    #[test]
    fn cheb_layer_validation() {
        let asym = Arc::new(CsrMatrix::from_triplets(2, 2, [(0, 1, 1.0)]).unwrap());
        assert!(ChebConvLayer::new("c", 2, 1, 1, true, asym).is_err());
        assert!(ChebConvLayer::new("c", 0, 1, 1, true, Arc::new(CsrMatrix::identity(2))).is_err());
    }

    #[test]
    fn init_registers_all_params() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut s = ParamStore::new();
        let layer = ChebConvLayer::new("c", 3, 3, 6, true, Arc::new(CsrMatrix::identity(4))).unwrap();
        layer.init(&mut s, &mut rng).unwrap();
        assert_eq!(s.n_values(), layer.spec().n_params());
        assert_eq!(s.n_values(), 3 * 18 + 6);
    }
}
