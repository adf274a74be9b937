use serde::{Deserialize, Serialize};

use super::arch::{AeArchitecture, Activation};
use crate::error::{Error, Result};
use crate::numeric::{check_finite, gemm_nn, gemm_nt, gemm_tn, Matrix, Rng};

/// Per-epoch training record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: f64,
}

/// Fitted autoencoder. Layer `k` maps width `sizes[k]` to `sizes[k+1]` as
/// `act(x·W_k + b_k)` with `W_k` stored `sizes[k] × sizes[k+1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawAe")]
pub struct AeModel {
    arch: AeArchitecture,
    weights: Vec<Matrix>,
    biases: Vec<Vec<f64>>,
    train_log: Vec<EpochLog>,
    best_epoch: Option<usize>,
}

#[derive(Deserialize)]
struct RawAe {
    arch: AeArchitecture,
    weights: Vec<Matrix>,
    biases: Vec<Vec<f64>>,
    #[serde(default)]
    train_log: Vec<EpochLog>,
    #[serde(default)]
    best_epoch: Option<usize>,
}

impl TryFrom<RawAe> for AeModel {
    type Error = Error;

    fn try_from(raw: RawAe) -> Result<Self> {
        let mut model = AeModel::new(raw.arch, raw.weights, raw.biases)?;
        model.train_log = raw.train_log;
        model.best_epoch = raw.best_epoch;
        Ok(model)
    }
}

/// Gradients of the training loss, shaped like the model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
}

/// Activations kept from a forward pass for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    input: Matrix,
    layer_sizes: Vec<usize>,
    /// Output of every layer after its activation; the last is the reconstruction.
    outputs: Vec<Matrix>,
}

#[derive(Debug, Clone)]
pub struct Forward {
    pub reconstruction: Matrix,
    pub latent: Matrix,
    pub cache: ForwardCache,
}

impl AeModel {
    pub fn new(arch: AeArchitecture, weights: Vec<Matrix>, biases: Vec<Vec<f64>>) -> Result<Self> {
        let sizes = arch.layer_sizes();
        if weights.len() != arch.n_layers() || biases.len() != arch.n_layers() {
            return Err(Error::shape(format!(
                "{} weight matrices and {} bias vectors for {} layers",
                weights.len(),
                biases.len(),
                arch.n_layers()
            )));
        }
        for (k, (w, b)) in weights.iter().zip(&biases).enumerate() {
            if w.shape() != (sizes[k], sizes[k + 1]) || b.len() != sizes[k + 1] {
                return Err(Error::shape(format!(
                    "layer {k}: weights {:?} and {} biases, expected ({}, {})",
                    w.shape(),
                    b.len(),
                    sizes[k],
                    sizes[k + 1]
                )));
            }
            check_finite(b, "biases")?;
        }
        Ok(AeModel {
            arch,
            weights,
            biases,
            train_log: Vec::new(),
            best_epoch: None,
        })
    }

    /// Glorot-uniform weights `±√(6 / (fan_in + fan_out))`, zero biases.
    pub fn init(arch: &AeArchitecture, rng: &mut Rng) -> Self {
        let sizes = arch.layer_sizes();
        let mut weights = Vec::with_capacity(arch.n_layers());
        let mut biases = Vec::with_capacity(arch.n_layers());
        for k in 0..arch.n_layers() {
            let (fan_in, fan_out) = (sizes[k], sizes[k + 1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let data = (0..fan_in * fan_out)
                .map(|_| rng.uniform_range(-limit, limit))
                .collect();
            weights.push(Matrix::from_parts(fan_in, fan_out, data));
            biases.push(vec![0.0; fan_out]);
        }
        AeModel {
            arch: arch.clone(),
            weights,
            biases,
            train_log: Vec::new(),
            best_epoch: None,
        }
    }

    pub fn arch(&self) -> &AeArchitecture {
        &self.arch
    }

    pub fn weights(&self) -> &[Matrix] {
        &self.weights
    }

    pub fn biases(&self) -> &[Vec<f64>] {
        &self.biases
    }

    pub fn train_log(&self) -> &[EpochLog] {
        &self.train_log
    }

    /// Epoch whose parameters this model holds, when it came from training.
    pub fn best_epoch(&self) -> Option<usize> {
        self.best_epoch
    }

    pub fn input_dim(&self) -> usize {
        self.arch.input_dim()
    }

    pub fn latent_dim(&self) -> usize {
        self.arch.latent_dim()
    }

    pub(crate) fn set_training_record(&mut self, log: Vec<EpochLog>, best_epoch: Option<usize>) {
        self.train_log = log;
        self.best_epoch = best_epoch;
    }

    pub(crate) fn params_mut(&mut self) -> (&mut [Matrix], &mut [Vec<f64>]) {
        (&mut self.weights, &mut self.biases)
    }

    fn check_input(&self, x: &Matrix, width: usize, what: &str) -> Result<()> {
        if x.cols() != width {
            return Err(Error::shape(format!("{what} expects {width} columns, got {}", x.cols())));
        }
        Ok(())
    }

    /// Runs layers `range` on `x`, returning each layer's output.
    fn run_layers(&self, x: &Matrix, range: std::ops::Range<usize>) -> Vec<Matrix> {
        let mut outputs: Vec<Matrix> = Vec::with_capacity(range.len());
        for k in range {
            let input = outputs.last().unwrap_or(x);
            outputs.push(self.layer(k, input));
        }
        outputs
    }

    fn layer(&self, k: usize, input: &Matrix) -> Matrix {
        let w = &self.weights[k];
        let b = &self.biases[k];
        let (n, fan_in, fan_out) = (input.rows(), w.rows(), w.cols());
        let mut out = Vec::with_capacity(n * fan_out);
        for _ in 0..n {
            out.extend_from_slice(b);
        }
        gemm_nn(input.data(), w.data(), &mut out, n, fan_in, fan_out);
        let act = self.arch.activations()[k];
        if act != Activation::Identity {
            out.iter_mut().for_each(|v| *v = act.apply(*v));
        }
        Matrix::from_parts(n, fan_out, out)
    }

    /// Full pass keeping everything backpropagation needs.
    pub fn forward(&self, x: &Matrix) -> Result<Forward> {
        self.check_input(x, self.input_dim(), "autoencoder")?;
        let outputs = self.run_layers(x, 0..self.arch.n_layers());
        let reconstruction = outputs.last().expect("at least two layers").clone();
        check_finite(reconstruction.data(), "autoencoder output")?;
        let latent = outputs[self.arch.encoder_layers() - 1].clone();
        Ok(Forward {
            reconstruction,
            latent,
            cache: ForwardCache {
                input: x.clone(),
                layer_sizes: self.arch.layer_sizes().to_vec(),
                outputs,
            },
        })
    }

    pub fn encode(&self, x: &Matrix) -> Result<Matrix> {
        self.check_input(x, self.input_dim(), "encoder")?;
        let z = self
            .run_layers(x, 0..self.arch.encoder_layers())
            .pop()
            .expect("encoder has layers");
        check_finite(z.data(), "latent code")?;
        Ok(z)
    }

    pub fn decode(&self, z: &Matrix) -> Result<Matrix> {
        self.check_input(z, self.latent_dim(), "decoder")?;
        let y = self
            .run_layers(z, self.arch.encoder_layers()..self.arch.n_layers())
            .pop()
            .expect("decoder has layers");
        check_finite(y.data(), "decoder output")?;
        Ok(y)
    }

    pub fn reconstruct(&self, x: &Matrix) -> Result<Matrix> {
        self.check_input(x, self.input_dim(), "autoencoder")?;
        let y = self
            .run_layers(x, 0..self.arch.n_layers())
            .pop()
            .expect("at least two layers");
        check_finite(y.data(), "autoencoder output")?;
        Ok(y)
    }

    /// Gradients of `(1 / (n·m)) Σ ‖xᵢ − yᵢ‖²`, the mean squared entry error,
    /// with respect to every weight and bias.
    pub fn backward(&self, x: &Matrix, cache: &ForwardCache) -> Result<Gradients> {
        if cache.layer_sizes != self.arch.layer_sizes() {
            return Err(Error::Contract("forward cache came from a different architecture".into()));
        }
        if cache.input.shape() != x.shape()
            || cache.input.data().iter().zip(x.data()).any(|(a, b)| a.to_bits() != b.to_bits())
        {
            return Err(Error::Contract("forward cache was computed for a different input".into()));
        }
        Ok(self.backward_unchecked(x, &cache.outputs))
    }

    pub(crate) fn backward_unchecked(&self, x: &Matrix, outputs: &[Matrix]) -> Gradients {
        let layers = self.arch.n_layers();
        let (n, m) = x.shape();
        let y = &outputs[layers - 1];
        let scale = 2.0 / (n * m).max(1) as f64;
        let mut delta: Vec<f64> = y
            .data()
            .iter()
            .zip(x.data())
            .map(|(yv, xv)| scale * (yv - xv))
            .collect();

        let mut grad_w = vec![Matrix::zeros(0, 0); layers];
        let mut grad_b = vec![Vec::new(); layers];
        for k in (0..layers).rev() {
            let act = self.arch.activations()[k];
            if act != Activation::Identity {
                for (d, o) in delta.iter_mut().zip(outputs[k].data()) {
                    *d *= act.derivative_from_output(*o);
                }
            }
            let input = if k == 0 { x } else { &outputs[k - 1] };
            let (fan_in, fan_out) = self.weights[k].shape();
            let mut gw = vec![0.0; fan_in * fan_out];
            gemm_tn(input.data(), &delta, &mut gw, n, fan_in, fan_out);
            let mut gb = vec![0.0; fan_out];
            for row in delta.chunks_exact(fan_out) {
                for (acc, d) in gb.iter_mut().zip(row) {
                    *acc += d;
                }
            }
            grad_w[k] = Matrix::from_parts(fan_in, fan_out, gw);
            grad_b[k] = gb;
            if k > 0 {
                let mut prev = vec![0.0; n * fan_in];
                gemm_nt(&delta, self.weights[k].data(), &mut prev, n, fan_out, fan_in);
                delta = prev;
            }
        }
        Gradients {
            weights: grad_w,
            biases: grad_b,
        }
    }

    /// Training loss on `x`: mean squared entry error of the reconstruction.
    pub fn loss(&self, x: &Matrix) -> Result<f64> {
        let y = self.reconstruct(x)?;
        x.mean_squared_error(&y)
    }

    /// Forward + backward in one go, without the defensive cache checks.
    pub(crate) fn loss_and_gradients(&self, x: &Matrix) -> (f64, Gradients) {
        let outputs = self.run_layers(x, 0..self.arch.n_layers());
        let y = outputs.last().expect("layers");
        let m = x.cols().max(1) as f64;
        let n = x.rows().max(1) as f64;
        let loss = y
            .data()
            .iter()
            .zip(x.data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / (n * m);
        (loss, self.backward_unchecked(x, &outputs))
    }

    /// Flattened parameter vector (weights then biases, layer by layer).
    pub(crate) fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.arch.n_params());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w.data());
            out.extend_from_slice(b);
        }
        out
    }

    pub(crate) fn set_flat_param(&mut self, idx: usize, value: f64) {
        let mut offset = idx;
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            let wl = w.data().len();
            if offset < wl {
                w.data_mut()[offset] = value;
                return;
            }
            offset -= wl;
            if offset < b.len() {
                b[offset] = value;
                return;
            }
            offset -= b.len();
        }
        panic!("parameter index {idx} out of range");
    }
}

impl Gradients {
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w.data());
            out.extend_from_slice(b);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(n: usize, m: usize, seed: u64) -> Matrix {
        let mut rng = Rng::new(seed);
        Matrix::new(n, m, (0..n * m).map(|_| rng.standard_normal()).collect()).unwrap()
    }

    #[test]
    fn zero_network_outputs_zero() {
        let arch = AeArchitecture::symmetric(3, &[4], 2).unwrap();
        let sizes = arch.layer_sizes().to_vec();
        let weights = sizes.windows(2).map(|w| Matrix::zeros(w[0], w[1])).collect();
        let biases = sizes[1..].iter().map(|&s| vec![0.0; s]).collect();
        let model = AeModel::new(arch, weights, biases).unwrap();
        let f = model.forward(&sample(5, 3, 1)).unwrap();
        assert!(f.reconstruction.data().iter().all(|&v| v == 0.0));
        assert!(f.latent.data().iter().all(|&v| v == 0.0));
        assert_eq!(f.latent.shape(), (5, 2));
    }

    #[test]
    fn identity_network_is_exact() {
        let arch = AeArchitecture::linear(3, &[], 3).unwrap();
        let model = AeModel::new(arch, vec![Matrix::identity(3); 2], vec![vec![0.0; 3]; 2]).unwrap();
        let x = sample(4, 3, 2);
        assert_eq!(model.reconstruct(&x).unwrap(), x);
    }

    #[test]
    fn matches_scalar_evaluation() {
        // [2, 3, 1, 3, 2] with tanh hidden layers, evaluated by hand.
        let arch = AeArchitecture::symmetric(2, &[3], 1).unwrap();
        let mut rng = Rng::new(5);
        let mut model = AeModel::init(&arch, &mut rng);
        for b in model.biases.iter_mut() {
            b.iter_mut().for_each(|v| *v = rng.uniform_range(-0.5, 0.5));
        }
        let x = [0.7, -1.3];
        let w = &model.weights;
        let b = &model.biases;
        let mut h1 = [0.0; 3];
        for j in 0..3 {
            h1[j] = (x[0] * w[0].get(0, j) + x[1] * w[0].get(1, j) + b[0][j]).tanh();
        }
        let z = h1[0] * w[1].get(0, 0) + h1[1] * w[1].get(1, 0) + h1[2] * w[1].get(2, 0) + b[1][0];
        let mut h2 = [0.0; 3];
        for j in 0..3 {
            h2[j] = (z * w[2].get(0, j) + b[2][j]).tanh();
        }
        let mut y = [0.0; 2];
        for j in 0..2 {
            y[j] = h2[0] * w[3].get(0, j) + h2[1] * w[3].get(1, j) + h2[2] * w[3].get(2, j) + b[3][j];
        }
        let f = model.forward(&Matrix::from_rows(&[x]).unwrap()).unwrap();
        assert!((f.latent.get(0, 0) - z).abs() < 1e-12);
        for j in 0..2 {
            assert!((f.reconstruction.get(0, j) - y[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn perfect_reconstruction_has_zero_output_gradient() {
        let arch = AeArchitecture::linear(3, &[], 3).unwrap();
        let model = AeModel::new(arch, vec![Matrix::identity(3); 2], vec![vec![0.0; 3]; 2]).unwrap();
        let x = sample(4, 3, 3);
        let f = model.forward(&x).unwrap();
        let g = model.backward(&x, &f.cache).unwrap();
        assert!(g.flatten().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn duplicated_batch_has_same_gradient() {
        let arch = AeArchitecture::symmetric(3, &[5], 2).unwrap();
        let model = AeModel::init(&arch, &mut Rng::new(4));
        let x = sample(6, 3, 4);
        let xx = x.vstack(&x).unwrap();
        let (l1, g1) = model.loss_and_gradients(&x);
        let (l2, g2) = model.loss_and_gradients(&xx);
        assert!((l1 - l2).abs() < 1e-14);
        for (a, b) in g1.flatten().iter().zip(g2.flatten()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn stale_cache_is_rejected() {
        let arch = AeArchitecture::symmetric(3, &[5], 2).unwrap();
        let model = AeModel::init(&arch, &mut Rng::new(4));
        let x = sample(6, 3, 5);
        let other = sample(6, 3, 6);
        let f = model.forward(&x).unwrap();
        assert!(matches!(model.backward(&other, &f.cache), Err(Error::Contract(_))));
        let bigger = AeModel::init(&AeArchitecture::symmetric(3, &[6], 2).unwrap(), &mut Rng::new(1));
        assert!(matches!(bigger.backward(&x, &f.cache), Err(Error::Contract(_))));
    }

    #[test]
    fn forward_is_bit_deterministic() {
        let arch = AeArchitecture::default_for(4, 2).unwrap();
        let model = AeModel::init(&arch, &mut Rng::new(9));
        let x = sample(10, 4, 7);
        let a = model.reconstruct(&x).unwrap();
        let b = model.reconstruct(&x).unwrap();
        assert!(a.data().iter().zip(b.data()).all(|(u, v)| u.to_bits() == v.to_bits()));
        assert_eq!(model.decode(&model.encode(&x).unwrap()).unwrap(), a);
    }

    #[test]
    fn shape_errors() {
        let arch = AeArchitecture::default_for(4, 2).unwrap();
        let model = AeModel::init(&arch, &mut Rng::new(9));
        assert!(matches!(model.forward(&Matrix::zeros(2, 3)), Err(Error::Shape(_))));
        assert!(matches!(model.decode(&Matrix::zeros(2, 3)), Err(Error::Shape(_))));
        let arch2 = AeArchitecture::linear(3, &[], 3).unwrap();
        assert!(AeModel::new(arch2, vec![Matrix::identity(2); 2], vec![vec![0.0; 3]; 2]).is_err());
    }
}
