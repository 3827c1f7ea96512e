//! Batched layer kernels over `[n][c][h][w]` buffers.
//!
//! Per-sample work runs on the rayon pool; cross-sample reductions are always
//! summed sequentially in sample order, so results do not depend on the
//! thread count.

use rayon::prelude::*;

use super::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Dims {
    pub fn plane(&self) -> usize {
        self.h * self.w
    }

    pub fn sample(&self) -> usize {
        self.c * self.h * self.w
    }

    pub fn len(&self) -> usize {
        self.n * self.sample()
    }
}

/// Row and column ranges of an output plane that read in-bounds input for a
/// kernel tap offset `(dy, dx)`.
#[inline]
fn tap_ranges(
    h: usize,
    w: usize,
    dy: isize,
    dx: isize,
) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
    let ys = (-dy).max(0) as usize..(h as isize - dy.max(0)).max(0) as usize;
    let xs = (-dx).max(0) as usize..(w as isize - dx.max(0)).max(0) as usize;
    (ys, xs)
}

/// Zero-padded ("same") stride-1 convolution.
pub fn conv_forward<T: Scalar>(
    input: &[T],
    dims: Dims,
    kernel: &[T],
    bias: &[T],
    out_c: usize,
    k: usize,
) -> Vec<T> {
    let Dims { c: in_c, h, w, .. } = dims;
    let plane = dims.plane();
    let pad = (k / 2) as isize;
    let mut out = vec![T::zero(); dims.n * out_c * plane];
    out.par_chunks_mut(out_c * plane)
        .zip(input.par_chunks(dims.sample()))
        .for_each(|(out_s, in_s)| {
            for (oc, out_p) in out_s.chunks_mut(plane).enumerate() {
                out_p.fill(bias[oc]);
                for (ic, in_p) in in_s.chunks(plane).enumerate() {
                    let kbase = (oc * in_c + ic) * k * k;
                    for ky in 0..k {
                        let dy = ky as isize - pad;
                        for kx in 0..k {
                            let dx = kx as isize - pad;
                            let wv = kernel[kbase + ky * k + kx];
                            let (ys, xs) = tap_ranges(h, w, dy, dx);
                            for y in ys {
                                let sy = (y as isize + dy) as usize;
                                let o = &mut out_p[y * w + xs.start..y * w + xs.end];
                                let sx = (xs.start as isize + dx) as usize;
                                let i = &in_p[sy * w + sx..sy * w + sx + xs.len()];
                                for (ov, &iv) in o.iter_mut().zip(i) {
                                    *ov += wv * iv;
                                }
                            }
                        }
                    }
                }
            }
        });
    out
}

/// Returns `(grad_input, grad_kernel, grad_bias)`.
pub fn conv_backward<T: Scalar>(
    input: &[T],
    dims: Dims,
    kernel: &[T],
    grad_out: &[T],
    out_c: usize,
    k: usize,
    need_input_grad: bool,
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let Dims { c: in_c, h, w, .. } = dims;
    let plane = dims.plane();
    let pad = (k / 2) as isize;
    let klen = out_c * in_c * k * k;

    let per_sample: Vec<(Vec<T>, Vec<T>, Vec<T>)> = input
        .par_chunks(dims.sample())
        .zip(grad_out.par_chunks(out_c * plane))
        .map(|(in_s, go_s)| {
            let mut gi = if need_input_grad {
                vec![T::zero(); dims.sample()]
            } else {
                Vec::new()
            };
            let mut gk = vec![T::zero(); klen];
            let mut gb = vec![T::zero(); out_c];
            for (oc, go_p) in go_s.chunks(plane).enumerate() {
                gb[oc] = go_p.iter().copied().sum();
                for ic in 0..in_c {
                    let in_p = &in_s[ic * plane..(ic + 1) * plane];
                    let kbase = (oc * in_c + ic) * k * k;
                    for ky in 0..k {
                        let dy = ky as isize - pad;
                        for kx in 0..k {
                            let dx = kx as isize - pad;
                            let (ys, xs) = tap_ranges(h, w, dy, dx);
                            let wv = kernel[kbase + ky * k + kx];
                            let mut acc = T::zero();
                            for y in ys {
                                let sy = (y as isize + dy) as usize;
                                let sx = (xs.start as isize + dx) as usize;
                                let g = &go_p[y * w + xs.start..y * w + xs.end];
                                let i = &in_p[sy * w + sx..sy * w + sx + xs.len()];
                                for (&gv, &iv) in g.iter().zip(i) {
                                    acc += gv * iv;
                                }
                                if need_input_grad {
                                    let gi_row = &mut gi[ic * plane + sy * w + sx
                                        ..ic * plane + sy * w + sx + xs.len()];
                                    for (d, &gv) in gi_row.iter_mut().zip(g) {
                                        *d += wv * gv;
                                    }
                                }
                            }
                            gk[kbase + ky * k + kx] += acc;
                        }
                    }
                }
            }
            (gi, gk, gb)
        })
        .collect();

    let mut grad_input = Vec::with_capacity(if need_input_grad { dims.len() } else { 0 });
    let mut grad_kernel = vec![T::zero(); klen];
    let mut grad_bias = vec![T::zero(); out_c];
    for (gi, gk, gb) in per_sample {
        grad_input.extend_from_slice(&gi);
        for (a, b) in grad_kernel.iter_mut().zip(&gk) {
            *a += *b;
        }
        for (a, b) in grad_bias.iter_mut().zip(&gb) {
            *a += *b;
        }
    }
    (grad_input, grad_kernel, grad_bias)
}

pub fn relu_forward<T: Scalar>(x: &mut [T]) {
    for v in x.iter_mut() {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
}

/// Gradient through ReLU given its output.
pub fn relu_backward<T: Scalar>(activated: &[T], grad: &mut [T]) {
    for (g, &a) in grad.iter_mut().zip(activated) {
        if a <= T::zero() {
            *g = T::zero();
        }
    }
}

/// Per-channel mean and biased variance over `(n, h, w)`.
pub fn channel_moments<T: Scalar>(x: &[T], dims: Dims) -> (Vec<T>, Vec<T>) {
    let plane = dims.plane();
    let count = T::from(dims.n * plane).unwrap();
    let mut mean = vec![T::zero(); dims.c];
    let mut var = vec![T::zero(); dims.c];
    for c in 0..dims.c {
        let mut s = T::zero();
        for n in 0..dims.n {
            let base = (n * dims.c + c) * plane;
            s += x[base..base + plane].iter().copied().sum();
        }
        let m = s / count;
        let mut q = T::zero();
        for n in 0..dims.n {
            let base = (n * dims.c + c) * plane;
            for &v in &x[base..base + plane] {
                q += (v - m) * (v - m);
            }
        }
        mean[c] = m;
        var[c] = q / count;
    }
    (mean, var)
}

/// Normalises in place with the given statistics, returning `x_hat` and the
/// per-channel inverse standard deviations.
pub fn batchnorm_apply<T: Scalar>(
    x: &mut [T],
    dims: Dims,
    mean: &[T],
    var: &[T],
    gamma: &[T],
    beta: &[T],
    eps: T,
) -> (Vec<T>, Vec<T>) {
    let plane = dims.plane();
    let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
    let mut x_hat = vec![T::zero(); x.len()];
    for n in 0..dims.n {
        for c in 0..dims.c {
            let base = (n * dims.c + c) * plane;
            for i in base..base + plane {
                let xh = (x[i] - mean[c]) * inv_std[c];
                x_hat[i] = xh;
                x[i] = gamma[c] * xh + beta[c];
            }
        }
    }
    (x_hat, inv_std)
}

/// Batch-norm backward. With `batch_stats` the statistics are treated as
/// functions of the input (training); otherwise as constants (inference).
/// Returns `(grad_input, grad_gamma, grad_beta)`.
pub fn batchnorm_backward<T: Scalar>(
    grad: &[T],
    x_hat: &[T],
    inv_std: &[T],
    gamma: &[T],
    dims: Dims,
    batch_stats: bool,
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let plane = dims.plane();
    let m = T::from(dims.n * plane).unwrap();
    let mut gx = vec![T::zero(); grad.len()];
    let mut g_gamma = vec![T::zero(); dims.c];
    let mut g_beta = vec![T::zero(); dims.c];
    for c in 0..dims.c {
        let (mut sum_dy, mut sum_dy_xh) = (T::zero(), T::zero());
        for n in 0..dims.n {
            let base = (n * dims.c + c) * plane;
            for i in base..base + plane {
                sum_dy += grad[i];
                sum_dy_xh += grad[i] * x_hat[i];
            }
        }
        g_gamma[c] = sum_dy_xh;
        g_beta[c] = sum_dy;
        let scale = gamma[c] * inv_std[c];
        for n in 0..dims.n {
            let base = (n * dims.c + c) * plane;
            for i in base..base + plane {
                gx[i] = if batch_stats {
                    scale * (grad[i] - sum_dy / m - x_hat[i] * sum_dy_xh / m)
                } else {
                    scale * grad[i]
                };
            }
        }
    }
    (gx, g_gamma, g_beta)
}

/// Non-overlapping `pool`x`pool` max pooling with floor division. Returns the
/// pooled values and, per output, the flat input index of the winner.
pub fn maxpool_forward<T: Scalar>(x: &[T], dims: Dims, pool: usize) -> (Vec<T>, Vec<usize>, Dims) {
    let out = Dims {
        n: dims.n,
        c: dims.c,
        h: dims.h / pool,
        w: dims.w / pool,
    };
    let mut values = Vec::with_capacity(out.len());
    let mut argmax = Vec::with_capacity(out.len());
    for nc in 0..dims.n * dims.c {
        let base = nc * dims.plane();
        for oy in 0..out.h {
            for ox in 0..out.w {
                let mut best = base + oy * pool * dims.w + ox * pool;
                for py in 0..pool {
                    for px in 0..pool {
                        let i = base + (oy * pool + py) * dims.w + ox * pool + px;
                        if x[i] > x[best] {
                            best = i;
                        }
                    }
                }
                values.push(x[best]);
                argmax.push(best);
            }
        }
    }
    (values, argmax, out)
}

pub fn maxpool_backward<T: Scalar>(grad: &[T], argmax: &[usize], input_len: usize) -> Vec<T> {
    let mut gx = vec![T::zero(); input_len];
    for (&g, &i) in grad.iter().zip(argmax) {
        gx[i] += g;
    }
    gx
}

/// `logits[n][o] = bias[o] + sum_i weights[o][i] * x[n][i]`
pub fn dense_forward<T: Scalar>(
    x: &[T],
    n: usize,
    in_dim: usize,
    weights: &[T],
    bias: &[T],
) -> Vec<T> {
    let out_dim = bias.len();
    let mut logits = Vec::with_capacity(n * out_dim);
    for s in 0..n {
        let xs = &x[s * in_dim..(s + 1) * in_dim];
        for o in 0..out_dim {
            let row = &weights[o * in_dim..(o + 1) * in_dim];
            let dot: T = row.iter().zip(xs).map(|(&a, &b)| a * b).sum();
            logits.push(bias[o] + dot);
        }
    }
    logits
}

/// Returns `(grad_input, grad_weights, grad_bias)`.
pub fn dense_backward<T: Scalar>(
    x: &[T],
    n: usize,
    in_dim: usize,
    weights: &[T],
    grad_logits: &[T],
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let out_dim = grad_logits.len() / n;
    let mut gx = vec![T::zero(); n * in_dim];
    let mut gw = vec![T::zero(); out_dim * in_dim];
    let mut gb = vec![T::zero(); out_dim];
    for s in 0..n {
        let xs = &x[s * in_dim..(s + 1) * in_dim];
        for o in 0..out_dim {
            let g = grad_logits[s * out_dim + o];
            gb[o] += g;
            let row = &weights[o * in_dim..(o + 1) * in_dim];
            for (i, (&xv, &wv)) in xs.iter().zip(row).enumerate() {
                gw[o * in_dim + i] += g * xv;
                gx[s * in_dim + i] += g * wv;
            }
        }
    }
    (gx, gw, gb)
}

/// Row-wise numerically stable softmax.
pub fn softmax<T: Scalar>(logits: &[T], classes: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(logits.len());
    for row in logits.chunks(classes) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let exps: Vec<T> = row.iter().map(|&v| (v - max).exp()).collect();
        let total: T = exps.iter().copied().sum();
        out.extend(exps.into_iter().map(|e| e / total));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dims(n: usize, c: usize, h: usize, w: usize) -> Dims {
        Dims { n, c, h, w }
    }

    #[test]
    fn conv_matches_naive_loop() {
        let d = dims(2, 2, 5, 4);
        let input: Vec<f64> = (0..d.len()).map(|i| ((i * 37) % 11) as f64 - 5.0).collect();
        let (out_c, k) = (3, 3);
        let kernel: Vec<f64> = (0..out_c * 2 * 9)
            .map(|i| ((i * 13) % 7) as f64 * 0.1 - 0.3)
            .collect();
        let bias = vec![0.5, -1.0, 0.25];
        let out = conv_forward(&input, d, &kernel, &bias, out_c, k);
        for n in 0..2 {
            for oc in 0..out_c {
                for y in 0..5i64 {
                    for x in 0..4i64 {
                        let mut acc = bias[oc];
                        for ic in 0..2 {
                            for ky in 0..3i64 {
                                for kx in 0..3i64 {
                                    let (sy, sx) = (y + ky - 1, x + kx - 1);
                                    if sy < 0 || sx < 0 || sy >= 5 || sx >= 4 {
                                        continue;
                                    }
                                    let iv =
                                        input[((n * 2 + ic) * 5 + sy as usize) * 4 + sx as usize];
                                    acc += kernel[(oc * 2 + ic) * 9 + (ky * 3 + kx) as usize] * iv;
                                }
                            }
                        }
                        let got = out[((n * out_c + oc) * 5 + y as usize) * 4 + x as usize];
                        assert!((got - acc).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn maxpool_floors_odd_sides() {
        let d = dims(1, 1, 5, 5);
        let x: Vec<f64> = (0..25).map(f64::from).collect();
        let (v, idx, out) = maxpool_forward(&x, d, 2);
        assert_eq!((out.h, out.w), (2, 2));
        assert_eq!(v, vec![6.0, 8.0, 16.0, 18.0]);
        assert_eq!(idx, vec![6, 8, 16, 18]);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let p = softmax(&[1000.0f64, 999.0, -3.0, 4.0], 2);
        assert!((p[0] + p[1] - 1.0).abs() < 1e-12);
        assert!((p[2] + p[3] - 1.0).abs() < 1e-12);
        assert!(p[0] > p[1] && p[3] > p[2]);
    }

    #[test]
    fn batchnorm_train_output_is_standardised() {
        let d = dims(3, 2, 2, 2);
        let mut x: Vec<f64> = (0..d.len()).map(|i| (i as f64).sin() * 4.0 + 1.0).collect();
        let (mean, var) = channel_moments(&x, d);
        batchnorm_apply(&mut x, d, &mean, &var, &[1.0, 1.0], &[0.0, 0.0], 0.0);
        let (m2, v2) = channel_moments(&x, d);
        for c in 0..2 {
            assert!(m2[c].abs() < 1e-12);
            assert!((v2[c] - 1.0).abs() < 1e-9);
        }
    }
}
