use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::{lit, CnnConfig, Scalar, NUM_CLASSES};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct BlockWeights<T> {
    /// `[out_c][in_c][k][k]`
    pub kernel: Vec<T>,
    pub bias: Vec<T>,
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
}

/// All network parameters. Shapes follow from `config` alone.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights<T = f32> {
    pub config: CnnConfig,
    pub blocks: Vec<BlockWeights<T>>,
    /// `[classes][dense_inputs]`
    pub dense_weights: Vec<T>,
    pub dense_bias: Vec<T>,
}

/// Fan-in scaled uniform kernels, zero biases, identity batch-norm.
pub fn init_model(config: &CnnConfig, seed: u64) -> Result<ModelWeights<f32>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = config.kernel_size;
    let mut in_c = 1;
    let mut blocks = Vec::with_capacity(config.block_filters.len());
    for &out_c in &config.block_filters {
        let fan_in = in_c * k * k;
        let limit = (6.0 / fan_in as f64).sqrt() as f32;
        blocks.push(BlockWeights {
            kernel: (0..out_c * fan_in)
                .map(|_| rng.gen_range(-limit..limit))
                .collect(),
            bias: vec![0.0; out_c],
            gamma: vec![1.0; out_c],
            beta: vec![0.0; out_c],
            running_mean: vec![0.0; out_c],
            running_var: vec![1.0; out_c],
        });
        in_c = out_c;
    }
    let fan_in = config.dense_inputs();
    let limit = (6.0 / fan_in as f64).sqrt() as f32;
    Ok(ModelWeights {
        config: config.clone(),
        blocks,
        dense_weights: (0..NUM_CLASSES * fan_in)
            .map(|_| rng.gen_range(-limit..limit))
            .collect(),
        dense_bias: vec![0.0; NUM_CLASSES],
    })
}

impl<T: Scalar> ModelWeights<T> {
    /// Expected tensor shapes in declaration order.
    pub fn tensor_shapes(config: &CnnConfig) -> Vec<Vec<usize>> {
        let k = config.kernel_size;
        let mut shapes = Vec::new();
        let mut in_c = 1;
        for &out_c in &config.block_filters {
            shapes.push(vec![out_c, in_c, k, k]);
            for _ in 0..5 {
                shapes.push(vec![out_c]);
            }
            in_c = out_c;
        }
        shapes.push(vec![NUM_CLASSES, config.dense_inputs()]);
        shapes.push(vec![NUM_CLASSES]);
        shapes
    }

    /// Every tensor in declaration order: per block kernel, bias, gamma,
    /// beta, running mean, running variance; then dense weights and bias.
    pub fn tensors(&self) -> Vec<&[T]> {
        let mut out: Vec<&[T]> = Vec::new();
        for b in &self.blocks {
            out.extend([
                &b.kernel[..],
                &b.bias,
                &b.gamma,
                &b.beta,
                &b.running_mean,
                &b.running_var,
            ]);
        }
        out.push(&self.dense_weights);
        out.push(&self.dense_bias);
        out
    }

    pub(crate) fn from_tensors(config: CnnConfig, mut tensors: Vec<Vec<T>>) -> Self {
        let dense_bias = tensors.pop().expect("dense bias");
        let dense_weights = tensors.pop().expect("dense weights");
        let mut it = tensors.into_iter();
        let blocks = config
            .block_filters
            .iter()
            .map(|_| BlockWeights {
                kernel: it.next().expect("kernel"),
                bias: it.next().expect("bias"),
                gamma: it.next().expect("gamma"),
                beta: it.next().expect("beta"),
                running_mean: it.next().expect("running mean"),
                running_var: it.next().expect("running var"),
            })
            .collect();
        Self {
            config,
            blocks,
            dense_weights,
            dense_bias,
        }
    }

    /// Parameters updated by the optimiser, in a fixed order shared with the
    /// gradients produced by backpropagation.
    pub fn trainable(&self) -> Vec<&[T]> {
        let mut out: Vec<&[T]> = Vec::new();
        for b in &self.blocks {
            out.extend([&b.kernel[..], &b.bias, &b.gamma, &b.beta]);
        }
        out.push(&self.dense_weights);
        out.push(&self.dense_bias);
        out
    }

    pub fn trainable_mut(&mut self) -> Vec<&mut [T]> {
        let mut out: Vec<&mut [T]> = Vec::new();
        for b in &mut self.blocks {
            out.push(&mut b.kernel);
            out.push(&mut b.bias);
            out.push(&mut b.gamma);
            out.push(&mut b.beta);
        }
        out.push(&mut self.dense_weights);
        out.push(&mut self.dense_bias);
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn cast<U: Scalar>(&self) -> ModelWeights<U> {
        let conv = |v: &[T]| -> Vec<U> {
            v.iter()
                .map(|&x| U::from(x).expect("finite parameter"))
                .collect()
        };
        ModelWeights {
            config: self.config.clone(),
            blocks: self
                .blocks
                .iter()
                .map(|b| BlockWeights {
                    kernel: conv(&b.kernel),
                    bias: conv(&b.bias),
                    gamma: conv(&b.gamma),
                    beta: conv(&b.beta),
                    running_mean: conv(&b.running_mean),
                    running_var: conv(&b.running_var),
                })
                .collect(),
            dense_weights: conv(&self.dense_weights),
            dense_bias: conv(&self.dense_bias),
        }
    }

    pub(crate) fn bn_eps() -> T {
        lit(super::BN_EPSILON)
    }
}

impl ModelWeights<f32> {
    /// SHA-256 of the serialised model, hex encoded.
    pub fn checksum(&self) -> String {
        let digest = Sha256::digest(super::io::model_to_bytes(self));
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_deterministic_and_seed_sensitive() {
        let cfg = CnnConfig::reduced(24);
        let a = init_model(&cfg, 1).unwrap();
        assert_eq!(a.checksum(), init_model(&cfg, 1).unwrap().checksum());
        assert_ne!(a.checksum(), init_model(&cfg, 2).unwrap().checksum());
    }

    #[test]
    fn shapes_follow_config() {
        let cfg = CnnConfig::reduced(24);
        let m = init_model(&cfg, 0).unwrap();
        let shapes = ModelWeights::<f32>::tensor_shapes(&cfg);
        let tensors = m.tensors();
        assert_eq!(shapes.len(), tensors.len());
        for (s, t) in shapes.iter().zip(&tensors) {
            assert_eq!(s.iter().product::<usize>(), t.len());
        }
        assert_eq!(m.dense_weights.len(), 2 * 16 * 6 * 6);
        assert!(m
            .blocks
            .iter()
            .all(|b| b.running_var.iter().all(|&v| v >= 0.0)));
    }

    #[test]
    fn default_model_dense_width() {
        let cfg = CnnConfig::default();
        assert_eq!(
            ModelWeights::<f32>::tensor_shapes(&cfg).last().unwrap(),
            &vec![2]
        );
        assert_eq!(ModelWeights::<f32>::tensor_shapes(&cfg)[24], vec![2, 12800]);
    }

    #[test]
    fn cast_round_trip_is_exact() {
        let m = init_model(&CnnConfig::reduced(16), 3).unwrap();
        assert_eq!(m.cast::<f64>().cast::<f32>(), m);
    }
}
