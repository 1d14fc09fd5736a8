//! Dense feed-forward network over a flat parameter vector with batched
//! forward and backward passes.

use num_traits::Float;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scalar type the networks run in. `f32` for training, `f64` for gradient
/// checks.
pub trait Real: Float + Default + Send + Sync + std::fmt::Debug + 'static {
    /// `C ← α·A·B + β·C` with explicit row/column strides.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        rsa: isize,
        csa: isize,
        b: &[Self],
        rsb: isize,
        csb: isize,
        beta: Self,
        c: &mut [Self],
        rsc: isize,
        csc: isize,
    );

    fn lift(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Real for f32 {
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: &[f32],
        rsa: isize,
        csa: isize,
        b: &[f32],
        rsb: isize,
        csb: isize,
        beta: f32,
        c: &mut [f32],
        rsc: isize,
        csc: isize,
    ) {
        // SAFETY: callers pass slices that cover the strided extents, checked
        // by the debug assertions in `Mlp`.
        unsafe {
            matrixmultiply::sgemm(
                m,
                k,
                n,
                alpha,
                a.as_ptr(),
                rsa,
                csa,
                b.as_ptr(),
                rsb,
                csb,
                beta,
                c.as_mut_ptr(),
                rsc,
                csc,
            )
        }
    }

    fn lift(v: f64) -> Self {
        v as f32
    }

    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: &[f64],
        rsa: isize,
        csa: isize,
        b: &[f64],
        rsb: isize,
        csb: isize,
        beta: f64,
        c: &mut [f64],
        rsc: isize,
        csc: isize,
    ) {
        // SAFETY: as for f32.
        unsafe {
            matrixmultiply::dgemm(
                m,
                k,
                n,
                alpha,
                a.as_ptr(),
                rsa,
                csa,
                b.as_ptr(),
                rsb,
                csb,
                beta,
                c.as_mut_ptr(),
                rsc,
                csc,
            )
        }
    }

    fn lift(v: f64) -> Self {
        v
    }

    fn as_f64(self) -> f64 {
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
}

impl Activation {
    fn apply<T: Real>(self, v: &mut [T]) {
        match self {
            Activation::Identity => {}
            Activation::Relu => v.iter_mut().for_each(|x| *x = x.max(T::zero())),
            Activation::Tanh => v.iter_mut().for_each(|x| *x = x.tanh()),
        }
    }

    /// Multiplies `grad` by the derivative, given the activation output.
    fn backprop<T: Real>(self, out: &[T], grad: &mut [T]) {
        match self {
            Activation::Identity => {}
            Activation::Relu => grad.iter_mut().zip(out).for_each(|(g, y)| {
                if *y <= T::zero() {
                    *g = T::zero()
                }
            }),
            Activation::Tanh => grad
                .iter_mut()
                .zip(out)
                .for_each(|(g, y)| *g = *g * (T::one() - *y * *y)),
        }
    }
}

/// Layer `l` maps `sizes[l]` to `sizes[l+1]`. Weights are stored per layer
/// as an `in × out` row-major block followed by `out` biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp<T> {
    pub sizes: Vec<usize>,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
    pub params: Vec<T>,
}

/// Activations kept from a forward pass for the backward pass.
#[derive(Debug, Clone, Default)]
pub struct ForwardCache<T> {
    pub batch: usize,
    /// `layers[0]` is the input, the last entry the output.
    pub layers: Vec<Vec<T>>,
}

impl<T> ForwardCache<T> {
    pub fn output(&self) -> &[T] {
        self.layers.last().expect("non-empty cache")
    }
}

pub fn parameter_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl<T: Real> Mlp<T> {
    pub fn zeros(sizes: &[usize], hidden: Activation, output: Activation) -> Self {
        assert!(sizes.len() >= 2, "network needs input and output sizes");
        Self {
            sizes: sizes.to_vec(),
            hidden_activation: hidden,
            output_activation: output,
            params: vec![T::zero(); parameter_count(sizes)],
        }
    }

    /// Uniform `±1/√fan_in` for weights and biases; the output layer is
    /// scaled down to `±final_scale`.
    pub fn init<R: Rng + ?Sized>(
        sizes: &[usize],
        hidden: Activation,
        output: Activation,
        final_scale: f64,
        rng: &mut R,
    ) -> Self {
        let mut net = Self::zeros(sizes, hidden, output);
        let layers = sizes.len() - 1;
        let mut offset = 0;
        for l in 0..layers {
            let (n_in, n_out) = (sizes[l], sizes[l + 1]);
            let bound = if l + 1 == layers {
                final_scale
            } else {
                1.0 / (n_in as f64).sqrt()
            };
            for p in &mut net.params[offset..offset + n_in * n_out + n_out] {
                *p = T::lift(rng.random_range(-bound..=bound));
            }
            offset += n_in * n_out + n_out;
        }
        net
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    fn layer_offsets(&self, l: usize) -> (usize, usize) {
        let start: usize = self.sizes[..=l].windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        (start, start + self.sizes[l] * self.sizes[l + 1])
    }

    fn activation(&self, l: usize) -> Activation {
        if l + 1 == self.num_layers() {
            self.output_activation
        } else {
            self.hidden_activation
        }
    }

    pub fn forward_cached(&self, input: &[T], batch: usize, cache: &mut ForwardCache<T>) -> Result<()> {
        if input.len() != batch * self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: batch * self.input_dim(),
                actual: input.len(),
            });
        }
        cache.batch = batch;
        cache.layers.resize_with(self.sizes.len(), Vec::new);
        cache.layers[0].clear();
        cache.layers[0].extend_from_slice(input);
        for l in 0..self.num_layers() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let (w0, b0) = self.layer_offsets(l);
            let (prev, rest) = cache.layers.split_at_mut(l + 1);
            let x = &prev[l];
            let y = &mut rest[0];
            y.clear();
            let bias = &self.params[b0..b0 + n_out];
            for _ in 0..batch {
                y.extend_from_slice(bias);
            }
            T::gemm(
                batch,
                n_in,
                n_out,
                T::one(),
                x,
                n_in as isize,
                1,
                &self.params[w0..b0],
                n_out as isize,
                1,
                T::one(),
                y,
                n_out as isize,
                1,
            );
            self.activation(l).apply(y);
        }
        Ok(())
    }

    pub fn forward(&self, input: &[T], batch: usize) -> Result<Vec<T>> {
        let mut cache = ForwardCache::default();
        self.forward_cached(input, batch, &mut cache)?;
        Ok(cache.layers.pop().unwrap())
    }

    /// Backpropagates `grad_output` (∂loss/∂output, `batch × out`).
    /// Accumulates ∂loss/∂params into `grad_params` when given, and returns
    /// ∂loss/∂input.
    pub fn backward(&self, cache: &ForwardCache<T>, grad_output: &[T], mut grad_params: Option<&mut [T]>) -> Vec<T> {
        let batch = cache.batch;
        debug_assert_eq!(grad_output.len(), batch * self.output_dim());
        if let Some(g) = grad_params.as_deref() {
            debug_assert_eq!(g.len(), self.params.len());
        }
        let mut delta = grad_output.to_vec();
        for l in (0..self.num_layers()).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let (w0, b0) = self.layer_offsets(l);
            self.activation(l).backprop(&cache.layers[l + 1], &mut delta);
            let x = &cache.layers[l];
            if let Some(g) = grad_params.as_deref_mut() {
                // dW += Xᵀ·δ
                T::gemm(
                    n_in,
                    batch,
                    n_out,
                    T::one(),
                    x,
                    1,
                    n_in as isize,
                    &delta,
                    n_out as isize,
                    1,
                    T::one(),
                    &mut g[w0..b0],
                    n_out as isize,
                    1,
                );
                let gb = &mut g[b0..b0 + n_out];
                for row in delta.chunks_exact(n_out) {
                    for (a, d) in gb.iter_mut().zip(row) {
                        *a = *a + *d;
                    }
                }
            }
            // δ_prev = δ·Wᵀ
            let mut prev = vec![T::zero(); batch * n_in];
            T::gemm(
                batch,
                n_out,
                n_in,
                T::one(),
                &delta,
                n_out as isize,
                1,
                &self.params[w0..b0],
                1,
                n_out as isize,
                T::zero(),
                &mut prev,
                n_in as isize,
                1,
            );
            delta = prev;
        }
        delta
    }

    /// `self ← (1 − τ)·self + τ·source`.
    pub fn soft_update(&mut self, source: &Mlp<T>, tau: f64) {
        let tau = T::lift(tau);
        let keep = T::one() - tau;
        for (p, s) in self.params.iter_mut().zip(&source.params) {
            *p = keep * *p + tau * *s;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    pub fn cast<U: Real>(&self) -> Mlp<U> {
        Mlp {
            sizes: self.sizes.clone(),
            hidden_activation: self.hidden_activation,
            output_activation: self.output_activation,
            params: self.params.iter().map(|p| U::lift(p.as_f64())).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_network_outputs_zero() {
        let net = Mlp::<f64>::zeros(&[4, 8, 8, 3], Activation::Relu, Activation::Identity);
        let out = net.forward(&[1.0, -2.0, 3.0, 0.5, 0.1, 0.2, 0.3, 0.4], 2).unwrap();
        assert_eq!(out, vec![0.0; 6]);
    }

    #[test]
    fn identity_layer_passes_input() {
        let mut net = Mlp::<f64>::zeros(&[3, 3], Activation::Relu, Activation::Identity);
        for i in 0..3 {
            net.params[i * 3 + i] = 1.0;
        }
        assert_eq!(net.forward(&[1.5, -2.0, 0.25], 1).unwrap(), vec![1.5, -2.0, 0.25]);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let net = Mlp::<f32>::zeros(&[4, 2], Activation::Relu, Activation::Identity);
        assert!(matches!(
            net.forward(&[1.0; 5], 1),
            Err(Error::DimensionMismatch { expected: 4, actual: 5 })
        ));
    }

    #[test]
    fn parameter_count_matches_sizes() {
        let net = Mlp::<f32>::zeros(&[13, 256, 256, 256, 6], Activation::Relu, Activation::Tanh);
        assert_eq!(net.params.len(), 13 * 256 + 256 + 2 * (256 * 256 + 256) + 256 * 6 + 6);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for output in [Activation::Identity, Activation::Tanh] {
            let net = Mlp::<f64>::init(&[5, 7, 6, 3], Activation::Tanh, output, 0.5, &mut rng);
            let batch = 4;
            let x: Vec<f64> = (0..batch * 5).map(|_| rng.random_range(-1.0..1.0)).collect();
            let w: Vec<f64> = (0..batch * 3).map(|_| rng.random_range(-1.0..1.0)).collect();
            // loss = Σ w·y
            let loss = |n: &Mlp<f64>, x: &[f64]| -> f64 {
                n.forward(x, batch).unwrap().iter().zip(&w).map(|(a, b)| a * b).sum()
            };
            let mut cache = ForwardCache::default();
            net.forward_cached(&x, batch, &mut cache).unwrap();
            let mut g = vec![0.0; net.params.len()];
            let gx = net.backward(&cache, &w, Some(&mut g));
            let h = 1e-6;
            for k in 0..net.params.len() {
                let mut p = net.clone();
                p.params[k] += h;
                let mut m = net.clone();
                m.params[k] -= h;
                let fd = (loss(&p, &x) - loss(&m, &x)) / (2.0 * h);
                assert!((fd - g[k]).abs() < 1e-7 * (1.0 + fd.abs()), "param {k}: {fd} vs {}", g[k]);
            }
            for k in 0..x.len() {
                let mut xp = x.clone();
                xp[k] += h;
                let mut xm = x.clone();
                xm[k] -= h;
                let fd = (loss(&net, &xp) - loss(&net, &xm)) / (2.0 * h);
                assert!((fd - gx[k]).abs() < 1e-7 * (1.0 + fd.abs()));
            }
        }
    }

    #[test]
    fn f32_and_f64_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let net = Mlp::<f64>::init(&[6, 32, 32, 2], Activation::Relu, Activation::Tanh, 0.1, &mut rng);
        let x: Vec<f64> = (0..6 * 3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let a = net.forward(&x, 3).unwrap();
        let xf: Vec<f32> = x.iter().map(|v| *v as f32).collect();
        let b = net.cast::<f32>().forward(&xf, 3).unwrap();
        for (u, v) in a.iter().zip(b) {
            assert!((u - v as f64).abs() < 1e-5);
        }
    }

    #[test]
    fn soft_update_interpolates() {
        let mut a = Mlp::<f64>::zeros(&[2, 2], Activation::Relu, Activation::Identity);
        let mut b = a.clone();
        b.params.iter_mut().for_each(|p| *p = 1.0);
        a.soft_update(&b, 0.25);
        assert!(a.params.iter().all(|p| *p == 0.25));
    }
}
