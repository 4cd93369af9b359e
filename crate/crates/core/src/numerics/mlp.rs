use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Dataset, WeightVector};
use crate::{Error, Result, Scalar};

/// Layer widths of a fully connected network, input first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpArch {
    layer_sizes: Vec<usize>,
}

/// One dense layer: `weights[o][i]` maps input `i` to output `o`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer<T> {
    pub weights: Vec<Vec<T>>,
    pub bias: Vec<T>,
}

impl MlpArch {
    pub fn new(layer_sizes: Vec<usize>) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::invalid("an MLP needs an input and an output layer"));
        }
        if layer_sizes.contains(&0) {
            return Err(Error::invalid("layer sizes must be positive"));
        }
        Ok(Self { layer_sizes })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn param_count(&self) -> usize {
        self.layer_sizes
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }

    /// Offsets of each layer's weight block; the bias block follows it.
    fn offsets(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        let mut off = 0;
        self.layer_sizes.windows(2).map(move |w| {
            let start = off;
            off += w[0] * w[1] + w[1];
            (start, w[0], w[1])
        })
    }
}

/// Network weights packed into a flat vector, layer by layer, each layer as
/// its row-major weight matrix followed by its bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel<T> {
    arch: MlpArch,
    params: WeightVector<T>,
}

struct Trace<T> {
    /// activations per layer, input included
    activations: Vec<Vec<T>>,
}

impl<T: Scalar> MlpModel<T> {
    pub fn new(arch: MlpArch, params: WeightVector<T>) -> Result<Self> {
        if params.dim() != arch.param_count() {
            return Err(Error::DimensionMismatch {
                expected: arch.param_count(),
                got: params.dim(),
            });
        }
        Ok(Self { arch, params })
    }

    pub fn zeros(arch: MlpArch) -> Self {
        let n = arch.param_count();
        Self {
            arch,
            params: WeightVector::zeros(n),
        }
    }

    /// Independent uniform weights in `[-0.5, 0.5]`.
    pub fn random<R: Rng + ?Sized>(arch: MlpArch, rng: &mut R) -> Self {
        let params = (0..arch.param_count())
            .map(|_| T::of(rng.random_range(-0.5..=0.5)))
            .collect::<Vec<_>>();
        Self {
            arch,
            params: WeightVector::from(params),
        }
    }

    pub fn from_layers(layers: &[Layer<T>]) -> Result<Self> {
        let first = layers.first().ok_or(Error::Empty("no layers"))?;
        let mut sizes = vec![first.weights.first().map_or(0, Vec::len)];
        let mut params = Vec::new();
        for layer in layers {
            let fan_in = *sizes.last().unwrap();
            if layer.weights.len() != layer.bias.len() {
                return Err(Error::DimensionMismatch {
                    expected: layer.weights.len(),
                    got: layer.bias.len(),
                });
            }
            for row in &layer.weights {
                if row.len() != fan_in {
                    return Err(Error::DimensionMismatch {
                        expected: fan_in,
                        got: row.len(),
                    });
                }
                params.extend_from_slice(row);
            }
            params.extend_from_slice(&layer.bias);
            sizes.push(layer.bias.len());
        }
        Self::new(MlpArch::new(sizes)?, WeightVector::from(params))
    }

    pub fn layers(&self) -> Vec<Layer<T>> {
        let p = self.params.as_slice();
        self.arch
            .offsets()
            .map(|(off, fan_in, fan_out)| Layer {
                weights: (0..fan_out)
                    .map(|o| p[off + o * fan_in..off + (o + 1) * fan_in].to_vec())
                    .collect(),
                bias: p[off + fan_in * fan_out..off + fan_in * fan_out + fan_out].to_vec(),
            })
            .collect()
    }

    pub fn arch(&self) -> &MlpArch {
        &self.arch
    }

    pub fn params(&self) -> &WeightVector<T> {
        &self.params
    }

    pub fn set_params(&mut self, params: WeightVector<T>) -> Result<()> {
        if params.dim() != self.arch.param_count() {
            return Err(Error::DimensionMismatch {
                expected: self.arch.param_count(),
                got: params.dim(),
            });
        }
        self.params = params;
        Ok(())
    }

    pub fn with_params(&self, params: WeightVector<T>) -> Result<Self> {
        Self::new(self.arch.clone(), params)
    }

    fn trace(&self, input: &[T]) -> Result<Trace<T>> {
        if input.len() != self.arch.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.arch.input_dim(),
                got: input.len(),
            });
        }
        let p = self.params.as_slice();
        let n_layers = self.arch.layer_sizes.len() - 1;
        let mut activations = Vec::with_capacity(n_layers + 1);
        activations.push(input.to_vec());
        for (l, (off, fan_in, fan_out)) in self.arch.offsets().enumerate() {
            let a = activations.last().unwrap();
            let bias = off + fan_in * fan_out;
            let hidden = l + 1 < n_layers;
            let z: Vec<T> = (0..fan_out)
                .map(|o| {
                    let row = &p[off + o * fan_in..off + (o + 1) * fan_in];
                    let s = row
                        .iter()
                        .zip(a)
                        .fold(p[bias + o], |acc, (&w, &x)| acc + w * x);
                    if hidden {
                        s.tanh()
                    } else {
                        s
                    }
                })
                .collect();
            activations.push(z);
        }
        Ok(Trace { activations })
    }

    pub fn forward(&self, input: &[T]) -> Result<Vec<T>> {
        Ok(self.trace(input)?.activations.pop().unwrap())
    }

    /// Loss `‖f(x) − y‖²` of one sample and its gradient with respect to the
    /// packed parameters, accumulated into `grad` with weight `scale`.
    fn accumulate_sample_gradient(
        &self,
        input: &[T],
        target: &[T],
        scale: T,
        grad: &mut [T],
    ) -> Result<T> {
        if target.len() != self.arch.output_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.arch.output_dim(),
                got: target.len(),
            });
        }
        let trace = self.trace(input)?;
        let p = self.params.as_slice();
        let out = trace.activations.last().unwrap();
        let mut delta: Vec<T> = out
            .iter()
            .zip(target)
            .map(|(&o, &t)| T::of(2.0) * (o - t))
            .collect();
        let loss = out
            .iter()
            .zip(target)
            .map(|(&o, &t)| (o - t) * (o - t))
            .sum();

        let offsets: Vec<_> = self.arch.offsets().collect();
        for (l, &(off, fan_in, fan_out)) in offsets.iter().enumerate().rev() {
            let a_prev = &trace.activations[l];
            let bias = off + fan_in * fan_out;
            for o in 0..fan_out {
                let d = delta[o] * scale;
                grad[bias + o] += d;
                let row = &mut grad[off + o * fan_in..off + (o + 1) * fan_in];
                for (g, &x) in row.iter_mut().zip(a_prev) {
                    *g += d * x;
                }
            }
            if l > 0 {
                // a_prev = tanh(z_prev); d tanh = 1 − a²
                delta = (0..fan_in)
                    .map(|i| {
                        let back: T = (0..fan_out)
                            .map(|o| p[off + o * fan_in + i] * delta[o])
                            .sum();
                        back * (T::one() - a_prev[i] * a_prev[i])
                    })
                    .collect();
            }
        }
        Ok(loss)
    }

    /// Batch-mean loss and gradient.
    pub fn loss_and_grad(&self, batch: &Dataset<T>) -> Result<(T, WeightVector<T>)> {
        let mut grad = vec![T::zero(); self.arch.param_count()];
        let scale = T::one() / T::of_usize(batch.len());
        let mut loss = T::zero();
        for s in batch.samples() {
            loss += self.accumulate_sample_gradient(&s.input, &s.target, scale, &mut grad)?;
        }
        Ok((loss * scale, WeightVector::from(grad)))
    }

    /// Batch-mean squared error.
    pub fn loss(&self, batch: &Dataset<T>) -> Result<T> {
        self.loss_on(batch.samples())
    }

    pub fn loss_on(&self, samples: &[super::Sample<T>]) -> Result<T> {
        if samples.is_empty() {
            return Err(Error::Empty("loss over no samples"));
        }
        let mut total = T::zero();
        for s in samples {
            let out = self.forward(&s.input)?;
            if out.len() != s.target.len() {
                return Err(Error::DimensionMismatch {
                    expected: out.len(),
                    got: s.target.len(),
                });
            }
            total += out
                .iter()
                .zip(&s.target)
                .map(|(&o, &t)| (o - t) * (o - t))
                .sum::<T>();
        }
        Ok(total / T::of_usize(samples.len()))
    }
}

pub fn mlp_forward<T: Scalar>(model: &MlpModel<T>, input: &[T]) -> Result<Vec<T>> {
    model.forward(input)
}

/// Batch-mean gradient of the squared-error loss, by backpropagation.
pub fn mlp_grad<T: Scalar>(model: &MlpModel<T>, batch: &Dataset<T>) -> Result<WeightVector<T>> {
    Ok(model.loss_and_grad(batch)?.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Sample;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn arch(sizes: &[usize]) -> MlpArch {
        MlpArch::new(sizes.to_vec()).unwrap()
    }

    #[test]
    fn zero_network_outputs_zero() {
        let m = MlpModel::<f64>::zeros(arch(&[3, 5, 2]));
        assert_eq!(m.forward(&[0.3, -1.0, 7.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn single_linear_layer_is_matrix_product() {
        let layer = Layer {
            weights: vec![vec![1.0, 2.0], vec![-1.0, 0.5]],
            bias: vec![0.0, 0.0],
        };
        let m = MlpModel::from_layers(&[layer]).unwrap();
        assert_eq!(m.forward(&[3.0, 4.0]).unwrap(), vec![11.0, -1.0]);
    }

    #[test]
    fn seeded_2_4_1_matches_hand_forward_pass() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let m = MlpModel::<f64>::random(arch(&[2, 4, 1]), &mut rng);
        let layers = m.layers();
        // independent scalar evaluation on input (1, 0)
        let mut out = layers[1].bias[0];
        for h in 0..4 {
            let z =
                layers[0].weights[h][0] * 1.0 + layers[0].weights[h][1] * 0.0 + layers[0].bias[h];
            out += layers[1].weights[0][h] * z.tanh();
        }
        assert_eq!(m.forward(&[1.0, 0.0]).unwrap(), vec![out]);
    }

    #[test]
    fn zero_gradient_when_predictions_match() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = MlpModel::<f64>::random(arch(&[2, 3, 1]), &mut rng);
        let samples: Vec<_> = [[0.1, 0.2], [0.7, -0.3]]
            .iter()
            .map(|x| Sample {
                input: x.to_vec(),
                target: m.forward(x).unwrap(),
            })
            .collect();
        let g = mlp_grad(&m, &Dataset::new(samples).unwrap()).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn duplicated_sample_gives_same_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let m = MlpModel::<f64>::random(arch(&[2, 3, 2]), &mut rng);
        let s = Sample {
            input: vec![0.4, 0.9],
            target: vec![1.0, -1.0],
        };
        let one = mlp_grad(&m, &Dataset::new(vec![s.clone()]).unwrap()).unwrap();
        let two = mlp_grad(&m, &Dataset::new(vec![s.clone(), s]).unwrap()).unwrap();
        for (a, b) in one.iter().zip(two.iter()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn backprop_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let m = MlpModel::<f64>::random(arch(&[3, 4, 2]), &mut rng);
        let batch = Dataset::new(vec![
            Sample {
                input: vec![0.1, -0.4, 0.8],
                target: vec![0.3, 0.0],
            },
            Sample {
                input: vec![-0.6, 0.2, 0.5],
                target: vec![-0.2, 0.9],
            },
        ])
        .unwrap();
        let g = mlp_grad(&m, &batch).unwrap();
        let h = 1e-4;
        for i in 0..g.dim() {
            let mut plus = m.params().clone();
            plus[i] += h;
            let mut minus = m.params().clone();
            minus[i] -= h;
            let fd = (m.with_params(plus).unwrap().loss(&batch).unwrap()
                - m.with_params(minus).unwrap().loss(&batch).unwrap())
                / (2.0 * h);
            let rel = (fd - g[i]).abs() / fd.abs().max(g[i].abs()).max(1e-2);
            assert!(rel < 1e-5, "param {i}: fd {fd} bp {}", g[i]);
        }
    }

    #[test]
    fn empty_batch_and_bad_dims_rejected() {
        let m = MlpModel::<f64>::zeros(arch(&[2, 1]));
        assert!(m.forward(&[1.0]).is_err());
        assert!(m.loss_on(&[]).is_err());
        assert!(MlpArch::new(vec![3]).is_err());
        assert!(MlpArch::new(vec![3, 0, 1]).is_err());
    }

    #[test]
    fn works_in_single_precision() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let m = MlpModel::<f32>::random(arch(&[2, 4, 1]), &mut rng);
        let y = m.forward(&[0.5, 0.5]).unwrap();
        assert!(y[0].is_finite());
    }

    proptest! {
        #[test]
        fn pack_unpack_round_trip(seed in any::<u64>(), hidden in 1usize..6, out in 1usize..3) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = MlpModel::<f64>::random(arch(&[3, hidden, out]), &mut rng);
            let rebuilt = MlpModel::from_layers(&m.layers()).unwrap();
            prop_assert_eq!(rebuilt, m);
        }
    }
}
