//! Small MLP decoder with hand-written forward/backward passes, an Adam
//! optimizer with per-group learning rates, and the random-Fourier-feature
//! encoder feeding the large baseline MLP used for speed comparisons.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputActivation {
    Sigmoid,
    Identity,
}

/// Fully connected network with ReLU hidden activations.
#[derive(Debug, Clone)]
pub struct Mlp<T> {
    weights: Vec<Array2<T>>, // each in_dim x out_dim
    biases: Vec<Array1<T>>,
    output: OutputActivation,
}

/// Intermediate activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    /// Input to every layer; `layer_inputs[0]` is the network input.
    layer_inputs: Vec<Array2<T>>,
    /// Post-activation network output.
    output: Array2<T>,
}

impl<T: Scalar> ForwardCache<T> {
    pub fn output(&self) -> &Array2<T> {
        &self.output
    }
}

#[derive(Debug, Clone)]
pub struct MlpGradients<T> {
    pub d_weights: Vec<Array2<T>>,
    pub d_biases: Vec<Array1<T>>,
}

impl<T: Scalar> Mlp<T> {
    /// He-style initialization: weights ~ N(0, sqrt(2 / fan_in)), biases 0.
    /// `layer_sizes` chains input through hidden widths to the output.
    pub fn new(layer_sizes: &[usize], output: OutputActivation, seed: u64) -> Self {
        assert!(layer_sizes.len() >= 2, "need at least input and output sizes");
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in layer_sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let std = (2.0 / fan_in as f64).sqrt();
            let normal = Normal::new(0.0f64, std).unwrap();
            weights.push(Array2::from_shape_fn((fan_in, fan_out), |_| {
                T::from_f64(normal.sample(&mut rng))
            }));
            biases.push(Array1::zeros(fan_out));
        }
        Mlp {
            weights,
            biases,
            output,
        }
    }

    pub fn from_parts(
        weights: Vec<Array2<T>>,
        biases: Vec<Array1<T>>,
        output: OutputActivation,
    ) -> Result<Self> {
        if weights.len() != biases.len() || weights.is_empty() {
            return Err(Error::DimensionMismatch(
                "weights and biases must pair up".into(),
            ));
        }
        for (i, (w, b)) in weights.iter().zip(biases.iter()).enumerate() {
            if w.ncols() != b.len() {
                return Err(Error::DimensionMismatch(format!(
                    "layer {i}: weight is {}x{}, bias has length {}",
                    w.nrows(),
                    w.ncols(),
                    b.len()
                )));
            }
            if i > 0 && weights[i - 1].ncols() != w.nrows() {
                return Err(Error::DimensionMismatch(format!(
                    "layer {i} input {} does not chain with previous output {}",
                    w.nrows(),
                    weights[i - 1].ncols()
                )));
            }
        }
        Ok(Mlp {
            weights,
            biases,
            output,
        })
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.weights[0].nrows()];
        sizes.extend(self.weights.iter().map(|w| w.ncols()));
        sizes
    }

    pub fn output_activation(&self) -> OutputActivation {
        self.output
    }

    pub fn weights(&self) -> &[Array2<T>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Array1<T>] {
        &self.biases
    }

    pub fn weights_mut(&mut self) -> &mut [Array2<T>] {
        &mut self.weights
    }

    pub fn biases_mut(&mut self) -> &mut [Array1<T>] {
        &mut self.biases
    }

    /// Simultaneous mutable access to weights and biases, for optimizers
    /// that flatten every parameter tensor into one slot list.
    pub fn parts_mut(&mut self) -> (&mut [Array2<T>], &mut [Array1<T>]) {
        (&mut self.weights, &mut self.biases)
    }

    pub fn input_dim(&self) -> usize {
        self.weights[0].nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.last().unwrap().ncols()
    }

    pub fn param_count(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>()
            + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    fn check_input(&self, x: &ArrayView2<T>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch(format!(
                "input has {} columns, network expects {}",
                x.ncols(),
                self.input_dim()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite network input".into()));
        }
        Ok(())
    }

    /// Forward pass returning the output and the cache for `backward`.
    pub fn forward(&self, x: ArrayView2<T>) -> Result<(Array2<T>, ForwardCache<T>)> {
        self.check_input(&x)?;
        let layers = self.weights.len();
        let mut layer_inputs = Vec::with_capacity(layers);
        let mut h = x.to_owned();
        for i in 0..layers {
            layer_inputs.push(h.clone());
            let mut z = h.dot(&self.weights[i]) + &self.biases[i];
            if i + 1 < layers {
                z.mapv_inplace(|v| v.max(T::zero()));
            } else if self.output == OutputActivation::Sigmoid {
                z.mapv_inplace(sigmoid);
            }
            h = z;
        }
        let cache = ForwardCache {
            layer_inputs,
            output: h.clone(),
        };
        Ok((h, cache))
    }

    /// Forward pass without building a cache (inference/benchmark path).
    pub fn forward_inference(&self, x: ArrayView2<T>) -> Array2<T> {
        let layers = self.weights.len();
        let mut h = x.dot(&self.weights[0]) + &self.biases[0];
        if layers == 1 {
            if self.output == OutputActivation::Sigmoid {
                h.mapv_inplace(sigmoid);
            }
            return h;
        }
        h.mapv_inplace(|v| v.max(T::zero()));
        for i in 1..layers {
            let mut z = h.dot(&self.weights[i]) + &self.biases[i];
            if i + 1 < layers {
                z.mapv_inplace(|v| v.max(T::zero()));
            } else if self.output == OutputActivation::Sigmoid {
                z.mapv_inplace(sigmoid);
            }
            h = z;
        }
        h
    }

    /// Reverse-mode gradients. Returns parameter gradients and the gradient
    /// with respect to the network input. The ReLU subgradient at 0 is 0.
    pub fn backward(
        &self,
        cache: &ForwardCache<T>,
        dl_dy: ArrayView2<T>,
    ) -> Result<(MlpGradients<T>, Array2<T>)> {
        let layers = self.weights.len();
        let chained = cache.layer_inputs.len() == layers
            && cache.output.dim() == dl_dy.dim()
            && cache.output.ncols() == self.output_dim()
            && (0..layers).all(|i| cache.layer_inputs[i].ncols() == self.weights[i].nrows());
        if !chained {
            return Err(Error::DimensionMismatch(
                "cache does not match this network and gradient".into(),
            ));
        }

        let mut delta = match self.output {
            OutputActivation::Sigmoid => {
                let y = &cache.output;
                let mut d = dl_dy.to_owned();
                d.zip_mut_with(y, |g, &yv| *g = *g * yv * (T::one() - yv));
                d
            }
            OutputActivation::Identity => dl_dy.to_owned(),
        };

        let mut d_weights = vec![Array2::zeros((0, 0)); layers];
        let mut d_biases = vec![Array1::zeros(0); layers];
        for i in (0..layers).rev() {
            let input = &cache.layer_inputs[i];
            // Optimizers consume gradients as flat slices; force row-major
            // storage (matmul of transposed views can come back transposed).
            let dw = input.t().dot(&delta);
            d_weights[i] = if dw.is_standard_layout() {
                dw
            } else {
                dw.as_standard_layout().into_owned()
            };
            d_biases[i] = delta.sum_axis(Axis(0));
            let dx = delta.dot(&self.weights[i].t());
            if i > 0 {
                // layer_inputs[i] is the post-ReLU activation feeding layer i.
                let mut gated = dx;
                gated.zip_mut_with(&cache.layer_inputs[i], |g, &a| {
                    if a <= T::zero() {
                        *g = T::zero();
                    }
                });
                delta = gated;
            } else {
                delta = dx;
            }
        }
        Ok((
            MlpGradients {
                d_weights,
                d_biases,
            },
            delta,
        ))
    }
}

fn sigmoid<T: Scalar>(z: T) -> T {
    T::one() / (T::one() + (-z).exp())
}

/// Optimizer group: learning rate and decoupled L2 weight.
#[derive(Debug, Clone, Copy)]
pub struct AdamGroup<T> {
    pub lr: T,
    pub weight_decay: T,
}

/// Adam state over a fixed list of flat parameter slots, each assigned to a
/// group at construction.
#[derive(Debug, Clone)]
pub struct AdamState<T> {
    pub beta1: T,
    pub beta2: T,
    pub epsilon: T,
    step: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
    group_of: Vec<usize>,
}

impl<T: Scalar> AdamState<T> {
    /// `slots` lists (parameter length, group index) in update order.
    pub fn new(slots: &[(usize, usize)]) -> Self {
        AdamState {
            beta1: T::from_f64(0.9),
            beta2: T::from_f64(0.999),
            epsilon: T::from_f64(1e-8),
            step: 0,
            m: slots.iter().map(|&(len, _)| vec![T::zero(); len]).collect(),
            v: slots.iter().map(|&(len, _)| vec![T::zero(); len]).collect(),
            group_of: slots.iter().map(|&(_, g)| g).collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn slot_count(&self) -> usize {
        self.m.len()
    }

    pub fn moments(&self) -> (&[Vec<T>], &[Vec<T>]) {
        (&self.m, &self.v)
    }

    pub fn groups(&self) -> &[usize] {
        &self.group_of
    }

    /// Restore from checkpointed state.
    pub fn from_parts(step: u64, m: Vec<Vec<T>>, v: Vec<Vec<T>>, group_of: Vec<usize>) -> Result<Self> {
        if m.len() != v.len() || m.len() != group_of.len() {
            return Err(Error::DimensionMismatch("Adam slot lists disagree".into()));
        }
        Ok(AdamState {
            beta1: T::from_f64(0.9),
            beta2: T::from_f64(0.999),
            epsilon: T::from_f64(1e-8),
            step,
            m,
            v,
            group_of,
        })
    }

    /// One Adam update with bias correction. Weight decay enters as a
    /// gradient addition `wd * param` before the moment update.
    pub fn step(
        &mut self,
        params: &mut [&mut [T]],
        grads: &[&[T]],
        groups: &[AdamGroup<T>],
    ) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} parameter slots, optimizer has {}",
                params.len(),
                self.m.len()
            )));
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = T::one() - self.beta1.powi(t);
        let bc2 = T::one() - self.beta2.powi(t);
        let one = T::one();
        for (slot, (param, grad)) in params.iter_mut().zip(grads.iter()).enumerate() {
            if param.len() != self.m[slot].len() || grad.len() != self.m[slot].len() {
                return Err(Error::DimensionMismatch(format!(
                    "slot {slot}: parameter length {} vs optimizer {}",
                    param.len(),
                    self.m[slot].len()
                )));
            }
            let group = groups.get(self.group_of[slot]).ok_or_else(|| {
                Error::InvalidArgument(format!("slot {slot} references a missing group"))
            })?;
            let m = &mut self.m[slot];
            let v = &mut self.v[slot];
            for j in 0..param.len() {
                let g = grad[j] + group.weight_decay * param[j];
                m[j] = self.beta1 * m[j] + (one - self.beta1) * g;
                v[j] = self.beta2 * v[j] + (one - self.beta2) * g * g;
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                param[j] = param[j] - group.lr * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
        Ok(())
    }
}

/// Frozen random-Fourier-feature encoder: `x -> [cos(2 pi B x); sin(2 pi B x)]`
/// with `B` a fixed k x 3 Gaussian matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct RffEncoder<T> {
    b: Array2<T>,
}

impl<T: Scalar> RffEncoder<T> {
    pub fn new(frequencies: usize, sigma: f64, seed: u64) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0f64, sigma).unwrap();
        RffEncoder {
            b: Array2::from_shape_fn((frequencies, 3), |_| T::from_f64(normal.sample(&mut rng))),
        }
    }

    pub fn frequencies(&self) -> usize {
        self.b.nrows()
    }

    pub fn output_dim(&self) -> usize {
        2 * self.b.nrows()
    }

    /// Entries of the frozen matrix; they count toward the evaluation cost.
    pub fn param_count(&self) -> usize {
        self.b.len()
    }

    pub fn encode(&self, points: ArrayView2<T>) -> Array2<T> {
        let k = self.b.nrows();
        let two_pi = T::from_f64(std::f64::consts::TAU);
        let angles = points.dot(&self.b.t()).mapv(|a| a * two_pi);
        let mut out = Array2::zeros((points.nrows(), 2 * k));
        for (r, row) in angles.rows().into_iter().enumerate() {
            for (c, &a) in row.iter().enumerate() {
                out[(r, c)] = a.cos();
                out[(r, k + c)] = a.sin();
            }
        }
        out
    }

    /// Little-endian blob: u64 frequency count, then the matrix row-major.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + self.b.len() * T::BYTES);
        out.extend_from_slice(&(self.b.nrows() as u64).to_le_bytes());
        for &v in self.b.iter() {
            v.write_le(&mut out);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 8 {
            return Err(Error::Format("RFF blob too short".into()));
        }
        let k = u64::from_le_bytes(bytes[..8].try_into().unwrap()) as usize;
        let expect = 8 + k * 3 * T::BYTES;
        if bytes.len() != expect {
            return Err(Error::Format(format!(
                "RFF blob is {} bytes, expected {expect}",
                bytes.len()
            )));
        }
        let data: Vec<T> = bytes[8..]
            .chunks_exact(T::BYTES)
            .map(T::read_le)
            .collect();
        let b = Array2::from_shape_vec((k, 3), data)
            .map_err(|e| Error::Format(format!("RFF blob shape: {e}")))?;
        Ok(RffEncoder { b })
    }
}
