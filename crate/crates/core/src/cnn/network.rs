use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::layers::{self, Dims};
use super::{lit, ModelWeights, PatchScore, Scalar, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::image::GrayImage;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics for batch-norm, dropout active with masks drawn from
    /// the given seed.
    Train { dropout_seed: u64 },
    /// Running statistics, no dropout. Deterministic.
    Infer,
}

struct BlockCache<T> {
    input: Vec<T>,
    in_dims: Dims,
    relu_out: Vec<T>,
    x_hat: Vec<T>,
    inv_std: Vec<T>,
    dropout: Option<Vec<T>>,
    argmax: Vec<usize>,
    conv_dims: Dims,
}

pub(crate) struct Pass<T> {
    n: usize,
    blocks: Vec<BlockCache<T>>,
    flat: Vec<T>,
    pub(crate) probs: Vec<T>,
    /// Per block batch mean and variance, training passes only.
    pub(crate) batch_moments: Vec<(Vec<T>, Vec<T>)>,
}

pub(crate) fn images_to_input<T: Scalar>(batch: &[&GrayImage], side: usize) -> Result<Vec<T>> {
    if batch.is_empty() {
        return Err(Error::ShapeMismatch("empty batch".into()));
    }
    let scale: T = lit(1.0 / 255.0);
    let mut input = Vec::with_capacity(batch.len() * side * side);
    for img in batch {
        if img.width() != side || img.height() != side {
            return Err(Error::ShapeMismatch(format!(
                "patch is {}x{}, model expects {side}x{side}",
                img.width(),
                img.height()
            )));
        }
        input.extend(img.data().iter().map(|&v| T::from(v).unwrap() * scale));
    }
    Ok(input)
}

pub(crate) fn run<T: Scalar>(
    model: &ModelWeights<T>,
    input: Vec<T>,
    n: usize,
    batch_stats: bool,
    mut dropout_rng: Option<&mut ChaCha8Rng>,
) -> Pass<T> {
    let cfg = &model.config;
    let mut x = input;
    let mut dims = Dims {
        n,
        c: 1,
        h: cfg.input_side,
        w: cfg.input_side,
    };
    let eps = ModelWeights::<T>::bn_eps();
    let mut blocks = Vec::with_capacity(model.blocks.len());
    let mut batch_moments = Vec::new();
    for (b, (w, &rate)) in model.blocks.iter().zip(&cfg.block_dropout).enumerate() {
        let out_c = cfg.block_filters[b];
        let mut z = layers::conv_forward(&x, dims, &w.kernel, &w.bias, out_c, cfg.kernel_size);
        let conv_dims = Dims { c: out_c, ..dims };
        layers::relu_forward(&mut z);
        let relu_out = z.clone();
        let (x_hat, inv_std) = if batch_stats {
            let (mean, var) = layers::channel_moments(&z, conv_dims);
            let r = layers::batchnorm_apply(&mut z, conv_dims, &mean, &var, &w.gamma, &w.beta, eps);
            batch_moments.push((mean, var));
            r
        } else {
            layers::batchnorm_apply(
                &mut z,
                conv_dims,
                &w.running_mean,
                &w.running_var,
                &w.gamma,
                &w.beta,
                eps,
            )
        };
        let dropout = match dropout_rng.as_deref_mut() {
            Some(rng) if rate > 0.0 => {
                let keep = 1.0 - rate;
                let scale: T = lit(1.0 / keep);
                let mask: Vec<T> = (0..z.len())
                    .map(|_| {
                        if rng.gen::<f64>() < keep {
                            scale
                        } else {
                            T::zero()
                        }
                    })
                    .collect();
                for (v, &m) in z.iter_mut().zip(&mask) {
                    *v *= m;
                }
                Some(mask)
            }
            _ => None,
        };
        let (pooled, argmax, pooled_dims) = layers::maxpool_forward(&z, conv_dims, cfg.pool);
        blocks.push(BlockCache {
            input: std::mem::replace(&mut x, pooled),
            in_dims: dims,
            relu_out,
            x_hat,
            inv_std,
            dropout,
            argmax,
            conv_dims,
        });
        dims = pooled_dims;
    }
    let logits = layers::dense_forward(
        &x,
        n,
        dims.sample(),
        &model.dense_weights,
        &model.dense_bias,
    );
    let probs = layers::softmax(&logits, NUM_CLASSES);
    Pass {
        n,
        blocks,
        flat: x,
        probs,
        batch_moments,
    }
}

/// Mean cross-entropy of `pass` against class indices.
pub(crate) fn cross_entropy<T: Scalar>(pass: &Pass<T>, labels: &[usize]) -> T {
    let total: T = labels
        .iter()
        .enumerate()
        .map(|(i, &y)| {
            let p = pass.probs[i * NUM_CLASSES + y];
            // `max` would swallow a NaN here and hide a diverged network.
            if p.is_nan() {
                p
            } else {
                -p.max(T::min_positive_value()).ln()
            }
        })
        .sum();
    total / T::from(pass.n).unwrap()
}

/// Gradients of the mean cross-entropy for every trainable tensor, in
/// [`ModelWeights::trainable`] order.
pub(crate) fn backprop<T: Scalar>(
    model: &ModelWeights<T>,
    pass: &Pass<T>,
    labels: &[usize],
    batch_stats: bool,
) -> Vec<Vec<T>> {
    let cfg = &model.config;
    let n = pass.n;
    let inv_n = T::one() / T::from(n).unwrap();
    let mut grad_logits = pass.probs.clone();
    for (i, &y) in labels.iter().enumerate() {
        grad_logits[i * NUM_CLASSES + y] -= T::one();
    }
    for g in &mut grad_logits {
        *g *= inv_n;
    }
    let in_dim = pass.flat.len() / n;
    let (mut grad, g_dw, g_db) =
        layers::dense_backward(&pass.flat, n, in_dim, &model.dense_weights, &grad_logits);

    let mut block_grads = Vec::with_capacity(model.blocks.len());
    for (b, cache) in pass.blocks.iter().enumerate().rev() {
        let w = &model.blocks[b];
        let mut g = layers::maxpool_backward(&grad, &cache.argmax, cache.conv_dims.len());
        if let Some(mask) = &cache.dropout {
            for (gv, &m) in g.iter_mut().zip(mask) {
                *gv *= m;
            }
        }
        let (mut g, g_gamma, g_beta) = layers::batchnorm_backward(
            &g,
            &cache.x_hat,
            &cache.inv_std,
            &w.gamma,
            cache.conv_dims,
            batch_stats,
        );
        layers::relu_backward(&cache.relu_out, &mut g);
        let (g_in, g_k, g_b) = layers::conv_backward(
            &cache.input,
            cache.in_dims,
            &w.kernel,
            &g,
            cfg.block_filters[b],
            cfg.kernel_size,
            b > 0,
        );
        grad = g_in;
        block_grads.push([g_k, g_b, g_gamma, g_beta]);
    }
    let mut out = Vec::with_capacity(4 * block_grads.len() + 2);
    for group in block_grads.into_iter().rev() {
        out.extend(group);
    }
    out.push(g_dw);
    out.push(g_db);
    out
}

/// Live/spoof probabilities for a batch of patches.
pub fn forward<T: Scalar>(
    model: &ModelWeights<T>,
    batch: &[&GrayImage],
    mode: Mode,
) -> Result<Vec<PatchScore>> {
    model.config.validate()?;
    let input = images_to_input::<T>(batch, model.config.input_side)?;
    let pass = match mode {
        Mode::Infer => run(model, input, batch.len(), false, None),
        Mode::Train { dropout_seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(dropout_seed);
            run(model, input, batch.len(), true, Some(&mut rng))
        }
    };
    Ok(scores(&pass.probs))
}

pub(crate) fn scores<T: Scalar>(probs: &[T]) -> Vec<PatchScore> {
    probs
        .chunks(NUM_CLASSES)
        .map(|p| PatchScore {
            live: p[0].to_f64().unwrap(),
            spoof: p[1].to_f64().unwrap(),
        })
        .collect()
}

/// Inference over any number of patches, `batch_size` at a time.
pub fn classify_patches<T: Scalar>(
    model: &ModelWeights<T>,
    patches: &[&GrayImage],
    batch_size: usize,
) -> Result<Vec<PatchScore>> {
    if patches.is_empty() {
        return Ok(Vec::new());
    }
    let chunks: Vec<Result<Vec<PatchScore>>> = patches
        .par_chunks(batch_size.max(1))
        .map(|chunk| forward(model, chunk, Mode::Infer))
        .collect();
    let mut out = Vec::with_capacity(patches.len());
    for c in chunks {
        out.extend(c?);
    }
    Ok(out)
}
