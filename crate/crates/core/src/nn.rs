//! Fully connected ReLU networks with hand-written backpropagation.
//!
//! Parameters of all layers live in one flat vector, layer by layer, each
//! layer as its `in × out` weight matrix (row-major) followed by its bias.

use std::fmt::Debug;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::Float;
use rand::Rng;
use rand_distr::StandardNormal;

/// Floating-point type the networks run on. Training uses `f32`; the
/// gradient checks use `f64`.
pub trait Real: Float + AddAssign + SubAssign + MulAssign + Default + Debug + Send + Sync + 'static {
    /// `C = alpha * A·B + beta * C` with arbitrary strides.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
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

    fn from_f64(v: f64) -> Self {
        <Self as num_traits::NumCast>::from(v).expect("finite conversion")
    }
}

macro_rules! impl_real {
    ($t:ty, $gemm:path) => {
        impl Real for $t {
            fn gemm(
                m: usize,
                k: usize,
                n: usize,
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
            ) {
                if m == 0 || n == 0 {
                    return;
                }
                let span = |rows: usize, cols: usize, rs: isize, cs: isize| {
                    (rows.saturating_sub(1) as isize * rs + cols.saturating_sub(1) as isize * cs) as usize
                };
                assert!(k == 0 || span(m, k, rsa, csa) < a.len());
                assert!(k == 0 || span(k, n, rsb, csb) < b.len());
                assert!(span(m, n, rsc, csc) < c.len());
                // SAFETY: the asserts above keep every strided access inside the slices.
                unsafe {
                    $gemm(
                        m,
                        k,
                        n,
                        1.0,
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
                    );
                }
            }
        }
    };
}

impl_real!(f32, matrixmultiply::sgemm);
impl_real!(f64, matrixmultiply::dgemm);

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    sizes: Vec<usize>,
    params: Vec<T>,
    offsets: Vec<usize>,
}

/// Per-layer inputs saved by [`Mlp::forward_batch`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    batch: usize,
    /// `acts[l]` is the input of layer `l` (post-ReLU for hidden layers).
    acts: Vec<Vec<T>>,
}

/// Orthogonal `rows × cols` matrix (row-major) scaled by `gain`.
pub fn orthogonal<R: Rng + ?Sized>(rows: usize, cols: usize, gain: f64, rng: &mut R) -> Vec<f64> {
    // Orthonormalize the vectors along the smaller dimension.
    let (count, len) = if rows >= cols { (cols, rows) } else { (rows, cols) };
    let mut vecs: Vec<Vec<f64>> = (0..count)
        .map(|_| (0..len).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
        .collect();
    for i in 0..count {
        for j in 0..i {
            let dot: f64 = vecs[i].iter().zip(&vecs[j]).map(|(a, b)| a * b).sum();
            let (head, tail) = vecs.split_at_mut(i);
            for (x, y) in tail[0].iter_mut().zip(&head[j]) {
                *x -= dot * y;
            }
        }
        let norm = vecs[i].iter().map(|x| x * x).sum::<f64>().sqrt();
        for x in &mut vecs[i] {
            *x /= norm;
        }
    }
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[r * cols + c] = gain
                * if rows >= cols {
                    vecs[c][r]
                } else {
                    vecs[r][c]
                };
        }
    }
    out
}

impl<T: Real> Mlp<T> {
    fn layout(sizes: &[usize]) -> (Vec<usize>, usize) {
        let mut offsets = Vec::with_capacity(sizes.len());
        let mut total = 0;
        for w in sizes.windows(2) {
            offsets.push(total);
            total += w[0] * w[1] + w[1];
        }
        (offsets, total)
    }

    /// Orthogonally initialised network with zero biases; `gains[l]` scales layer `l`.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], gains: &[f64], rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "a network needs at least one layer");
        assert_eq!(gains.len(), sizes.len() - 1);
        let (offsets, total) = Self::layout(sizes);
        let mut params = vec![T::zero(); total];
        for (l, w) in sizes.windows(2).enumerate() {
            let weights = orthogonal(w[0], w[1], gains[l], rng);
            for (p, v) in params[offsets[l]..offsets[l] + w[0] * w[1]].iter_mut().zip(weights) {
                *p = T::from_f64(v);
            }
        }
        Self { sizes: sizes.to_vec(), params, offsets }
    }

    pub fn from_params(sizes: &[usize], params: Vec<T>) -> Option<Self> {
        let (offsets, total) = Self::layout(sizes);
        (sizes.len() >= 2 && params.len() == total).then(|| Self {
            sizes: sizes.to_vec(),
            params,
            offsets,
        })
    }

    /// Same architecture and values in another float type.
    pub fn cast<U: Real>(&self) -> Mlp<U> {
        Mlp {
            sizes: self.sizes.clone(),
            params: self
                .params
                .iter()
                .map(|&p| U::from_f64(p.to_f64().unwrap_or(f64::NAN)))
                .collect(),
            offsets: self.offsets.clone(),
        }
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().expect("non-empty")
    }

    pub fn num_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    /// Ranges of weight and bias of layer `l` in the flat parameter vector.
    pub fn layer_ranges(&self, l: usize) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        let (i, o) = (self.sizes[l], self.sizes[l + 1]);
        let w = self.offsets[l]..self.offsets[l] + i * o;
        let b = w.end..w.end + o;
        (w, b)
    }

    /// Single-sample forward pass. Zero inputs are skipped, which makes
    /// one-hot observations and ReLU activations cheap.
    pub fn forward(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.input_dim());
        let mut cur = x.to_vec();
        for l in 0..self.num_layers() {
            let (wr, br) = self.layer_ranges(l);
            let out_dim = self.sizes[l + 1];
            let w = &self.params[wr];
            let mut next = self.params[br].to_vec();
            for (j, &xj) in cur.iter().enumerate() {
                if xj != T::zero() {
                    let row = &w[j * out_dim..(j + 1) * out_dim];
                    for (y, &wv) in next.iter_mut().zip(row) {
                        *y += xj * wv;
                    }
                }
            }
            if l + 1 < self.num_layers() {
                for y in &mut next {
                    *y = y.max(T::zero());
                }
            }
            cur = next;
        }
        cur
    }

    /// Batched forward pass over `batch` row-major inputs.
    pub fn forward_batch(&self, x: &[T], batch: usize) -> (Vec<T>, ForwardCache<T>) {
        assert_eq!(x.len(), batch * self.input_dim());
        let mut acts = Vec::with_capacity(self.num_layers());
        let mut cur = x.to_vec();
        for l in 0..self.num_layers() {
            let (wr, br) = self.layer_ranges(l);
            let (i, o) = (self.sizes[l], self.sizes[l + 1]);
            let bias = &self.params[br];
            let mut out = Vec::with_capacity(batch * o);
            for _ in 0..batch {
                out.extend_from_slice(bias);
            }
            T::gemm(
                batch, i, o, &cur, i as isize, 1, &self.params[wr], o as isize, 1, T::one(), &mut out, o as isize, 1,
            );
            if l + 1 < self.num_layers() {
                for y in &mut out {
                    *y = y.max(T::zero());
                }
            }
            acts.push(std::mem::replace(&mut cur, out));
        }
        (cur, ForwardCache { batch, acts })
    }

    /// Accumulates the parameter gradient for output gradient `d_out` into `grad`.
    pub fn backward_batch(&self, cache: &ForwardCache<T>, d_out: &[T], grad: &mut [T]) {
        let batch = cache.batch;
        assert_eq!(d_out.len(), batch * self.output_dim());
        assert_eq!(grad.len(), self.params.len());
        let mut dz = d_out.to_vec();
        for l in (0..self.num_layers()).rev() {
            let (wr, br) = self.layer_ranges(l);
            let (i, o) = (self.sizes[l], self.sizes[l + 1]);
            let input = &cache.acts[l];
            // dW += inputᵀ · dz
            T::gemm(
                i, batch, o, input, 1, i as isize, &dz, o as isize, 1, T::one(), &mut grad[wr.clone()], o as isize, 1,
            );
            for row in dz.chunks_exact(o) {
                for (g, &d) in grad[br.clone()].iter_mut().zip(row) {
                    *g += d;
                }
            }
            if l > 0 {
                // d input = dz · Wᵀ, masked by the ReLU that produced the input.
                let mut dx = vec![T::zero(); batch * i];
                T::gemm(
                    batch, o, i, &dz, o as isize, 1, &self.params[wr], 1, o as isize, T::zero(), &mut dx, i as isize, 1,
                );
                for (d, &a) in dx.iter_mut().zip(input) {
                    if a <= T::zero() {
                        *d = T::zero();
                    }
                }
                dz = dx;
            }
        }
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    t: i32,
    m: Vec<f32>,
    v: Vec<f32>,
}

impl Adam {
    pub fn new(num_params: usize, lr: f32) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-5,
            t: 0,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
        }
    }

    pub fn step(&mut self, params: &mut [f32], grad: &[f32]) {
        assert_eq!(params.len(), self.m.len());
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t);
        let bc2 = 1.0 - self.beta2.powi(self.t);
        let step = self.lr / bc1;
        let bc2_sqrt = bc2.sqrt();
        for (((p, &g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= step * *m / ((*v).sqrt() / bc2_sqrt + self.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn orthogonal_columns_are_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for (r, c) in [(8, 3), (3, 8), (5, 5)] {
            let m = orthogonal(r, c, 1.0, &mut rng);
            let (count, len) = if r >= c { (c, r) } else { (r, c) };
            let vec = |k: usize| -> Vec<f64> {
                (0..len).map(|i| if r >= c { m[i * c + k] } else { m[k * c + i] }).collect()
            };
            for a in 0..count {
                for b in 0..count {
                    let dot: f64 = vec(a).iter().zip(vec(b)).map(|(x, y)| x * y).sum();
                    let want = if a == b { 1.0 } else { 0.0 };
                    assert!((dot - want).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn batch_and_single_forward_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net: Mlp<f64> = Mlp::new(&[6, 5, 4, 3], &[1.4, 1.4, 1.0], &mut rng);
        let x: Vec<f64> = (0..12).map(|i| if i % 3 == 0 { 0.0 } else { (i as f64 * 0.37).sin() }).collect();
        let (batched, _) = net.forward_batch(&x, 2);
        for s in 0..2 {
            let single = net.forward(&x[s * 6..(s + 1) * 6]);
            for (a, b) in single.iter().zip(&batched[s * 3..(s + 1) * 3]) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut net: Mlp<f64> = Mlp::new(&[4, 7, 5, 2], &[1.4, 1.4, 1.0], &mut rng);
        for p in net.params_mut() {
            *p += 0.05;
        }
        let x: Vec<f64> = (0..12).map(|i| ((i * 7) as f64 * 0.13).cos()).collect();
        let target = [0.3, -0.2, 0.9, 0.1, -0.5, 0.4];
        let loss = |n: &Mlp<f64>| -> f64 {
            let (y, _) = n.forward_batch(&x, 3);
            y.iter().zip(&target).map(|(a, b)| 0.5 * (a - b) * (a - b)).sum()
        };
        let (y, cache) = net.forward_batch(&x, 3);
        let d: Vec<f64> = y.iter().zip(&target).map(|(a, b)| a - b).collect();
        let mut grad = vec![0.0; net.params().len()];
        net.backward_batch(&cache, &d, &mut grad);
        let h = 1e-6;
        for k in 0..grad.len() {
            let orig = net.params()[k];
            net.params_mut()[k] = orig + h;
            let up = loss(&net);
            net.params_mut()[k] = orig - h;
            let down = loss(&net);
            net.params_mut()[k] = orig;
            let fd = (up - down) / (2.0 * h);
            assert!((fd - grad[k]).abs() <= 1e-6 * (1.0 + fd.abs()), "param {k}: {fd} vs {}", grad[k]);
        }
    }

    #[test]
    fn adam_moves_against_gradient() {
        let mut p = vec![1.0f32, -1.0];
        let mut opt = Adam::new(2, 0.1);
        opt.step(&mut p, &[1.0, -1.0]);
        assert!(p[0] < 1.0 && p[1] > -1.0);
    }
}
