//! Dense linear-algebra kernels.
//!
//! `matvec` is the single-sample inference path used by the simulator. Each
//! output is a dot product accumulated in eight fixed lanes and reduced in a
//! fixed order, so results do not depend on which instruction set the
//! dispatcher picks.

use super::Scalar;

const LANES: usize = 8;

#[inline(always)]
fn reduce<T: Scalar>(acc: &[T; LANES]) -> T {
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]))
}

#[inline(always)]
fn lanes<T: Scalar>(s: &[T]) -> &[T; LANES] {
    s.try_into().expect("chunk of LANES elements")
}

#[inline(always)]
fn dot<T: Scalar>(row: &[T], x: &[T]) -> T {
    let mut acc = [T::zero(); LANES];
    for (w, v) in row.chunks_exact(LANES).zip(x.chunks_exact(LANES)) {
        let (w, v) = (lanes(w), lanes(v));
        for l in 0..LANES {
            acc[l] += w[l] * v[l];
        }
    }
    let mut s = reduce(&acc);
    let tail = row.len() - row.len() % LANES;
    for k in tail..row.len() {
        s += row[k] * x[k];
    }
    s
}

#[inline(always)]
fn matvec_body<T: Scalar>(weights: &[T], bias: &[T], x: &[T], y: &mut [T]) {
    let in_dim = x.len();
    let out_dim = y.len();
    let tail = in_dim - in_dim % LANES;
    let mut j = 0;
    // four rows at a time: independent accumulator chains sharing x loads
    while j + 4 <= out_dim {
        let r0 = &weights[j * in_dim..(j + 1) * in_dim];
        let r1 = &weights[(j + 1) * in_dim..(j + 2) * in_dim];
        let r2 = &weights[(j + 2) * in_dim..(j + 3) * in_dim];
        let r3 = &weights[(j + 3) * in_dim..(j + 4) * in_dim];
        let mut a0 = [T::zero(); LANES];
        let mut a1 = [T::zero(); LANES];
        let mut a2 = [T::zero(); LANES];
        let mut a3 = [T::zero(); LANES];
        for c in (0..tail).step_by(LANES) {
            let v = lanes(&x[c..c + LANES]);
            let w0 = lanes(&r0[c..c + LANES]);
            let w1 = lanes(&r1[c..c + LANES]);
            let w2 = lanes(&r2[c..c + LANES]);
            let w3 = lanes(&r3[c..c + LANES]);
            for l in 0..LANES {
                a0[l] += w0[l] * v[l];
                a1[l] += w1[l] * v[l];
                a2[l] += w2[l] * v[l];
                a3[l] += w3[l] * v[l];
            }
        }
        let mut s = [reduce(&a0), reduce(&a1), reduce(&a2), reduce(&a3)];
        for k in tail..in_dim {
            s[0] += r0[k] * x[k];
            s[1] += r1[k] * x[k];
            s[2] += r2[k] * x[k];
            s[3] += r3[k] * x[k];
        }
        for r in 0..4 {
            y[j + r] = bias[j + r] + s[r];
        }
        j += 4;
    }
    while j < out_dim {
        y[j] = bias[j] + dot(&weights[j * in_dim..(j + 1) * in_dim], x);
        j += 1;
    }
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn matvec_avx2<T: Scalar>(weights: &[T], bias: &[T], x: &[T], y: &mut [T]) {
    matvec_body(weights, bias, x, y)
}

/// `y = W x + b` for a row-major `W` of shape `y.len() × x.len()`.
pub fn matvec<T: Scalar>(weights: &[T], bias: &[T], x: &[T], y: &mut [T]) {
    assert_eq!(weights.len(), x.len() * y.len());
    assert_eq!(bias.len(), y.len());
    #[cfg(target_arch = "x86_64")]
    {
        if std::is_x86_feature_detected!("avx2") {
            // SAFETY: the CPU supports avx2.
            unsafe { matvec_avx2(weights, bias, x, y) };
            return;
        }
    }
    matvec_body(weights, bias, x, y)
}

/// `Y = X Wᵀ + b` for `n` row-major inputs `X (n × in)` and `W (out × in)`.
pub fn affine_batch<T: Scalar>(
    n: usize,
    in_dim: usize,
    out_dim: usize,
    x: &[T],
    weights: &[T],
    bias: &[T],
    y: &mut [T],
) {
    assert_eq!(x.len(), n * in_dim);
    assert_eq!(weights.len(), out_dim * in_dim);
    assert_eq!(y.len(), n * out_dim);
    for row in y.chunks_exact_mut(out_dim) {
        row.copy_from_slice(bias);
    }
    // SAFETY: shapes checked above; y does not alias x or weights.
    unsafe {
        T::gemm(
            n,
            in_dim,
            out_dim,
            T::one(),
            x.as_ptr(),
            in_dim as isize,
            1,
            weights.as_ptr(),
            1,
            in_dim as isize,
            T::one(),
            y.as_mut_ptr(),
            out_dim as isize,
            1,
        )
    }
}

/// `dW = dZᵀ X` where `dZ (n × out)` and `X (n × in)`; overwrites `dw (out × in)`.
pub fn weight_grad<T: Scalar>(
    n: usize,
    in_dim: usize,
    out_dim: usize,
    dz: &[T],
    x: &[T],
    dw: &mut [T],
) {
    assert_eq!(dz.len(), n * out_dim);
    assert_eq!(x.len(), n * in_dim);
    assert_eq!(dw.len(), out_dim * in_dim);
    // SAFETY: shapes checked above.
    unsafe {
        T::gemm(
            out_dim,
            n,
            in_dim,
            T::one(),
            dz.as_ptr(),
            1,
            out_dim as isize,
            x.as_ptr(),
            in_dim as isize,
            1,
            T::zero(),
            dw.as_mut_ptr(),
            in_dim as isize,
            1,
        )
    }
}

/// `dX = dZ W` where `dZ (n × out)` and `W (out × in)`; overwrites `dx (n × in)`.
pub fn input_grad<T: Scalar>(
    n: usize,
    in_dim: usize,
    out_dim: usize,
    dz: &[T],
    weights: &[T],
    dx: &mut [T],
) {
    assert_eq!(dz.len(), n * out_dim);
    assert_eq!(weights.len(), out_dim * in_dim);
    assert_eq!(dx.len(), n * in_dim);
    // SAFETY: shapes checked above.
    unsafe {
        T::gemm(
            n,
            out_dim,
            in_dim,
            T::one(),
            dz.as_ptr(),
            out_dim as isize,
            1,
            weights.as_ptr(),
            in_dim as isize,
            1,
            T::zero(),
            dx.as_mut_ptr(),
            in_dim as isize,
            1,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn naive(w: &[f64], b: &[f64], x: &[f64], out: usize) -> Vec<f64> {
        (0..out)
            .map(|j| b[j] + (0..x.len()).map(|k| w[j * x.len() + k] * x[k]).sum::<f64>())
            .collect()
    }

    #[test]
    fn matvec_matches_naive_for_odd_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for (inp, out) in [(1, 1), (7, 3), (8, 4), (42, 33), (77, 13), (17, 9)] {
            let w: Vec<f64> = (0..inp * out).map(|_| rng.random_range(-1.0..1.0)).collect();
            let b: Vec<f64> = (0..out).map(|_| rng.random_range(-1.0..1.0)).collect();
            let x: Vec<f64> = (0..inp).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut y = vec![0.0; out];
            matvec(&w, &b, &x, &mut y);
            for (a, e) in y.iter().zip(naive(&w, &b, &x, out)) {
                assert!((a - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gemm_paths_agree_with_naive() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (n, inp, out) = (5, 7, 3);
        let x: Vec<f64> = (0..n * inp).map(|_| rng.random_range(-1.0..1.0)).collect();
        let w: Vec<f64> = (0..out * inp).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..out).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut y = vec![0.0; n * out];
        affine_batch(n, inp, out, &x, &w, &b, &mut y);
        for i in 0..n {
            let e = naive(&w, &b, &x[i * inp..(i + 1) * inp], out);
            for j in 0..out {
                assert!((y[i * out + j] - e[j]).abs() < 1e-12);
            }
        }
        let dz: Vec<f64> = (0..n * out).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut dw = vec![0.0; out * inp];
        weight_grad(n, inp, out, &dz, &x, &mut dw);
        for j in 0..out {
            for k in 0..inp {
                let e: f64 = (0..n).map(|i| dz[i * out + j] * x[i * inp + k]).sum();
                assert!((dw[j * inp + k] - e).abs() < 1e-12);
            }
        }
        let mut dx = vec![0.0; n * inp];
        input_grad(n, inp, out, &dz, &w, &mut dx);
        for i in 0..n {
            for k in 0..inp {
                let e: f64 = (0..out).map(|j| dz[i * out + j] * w[j * inp + k]).sum();
                assert!((dx[i * inp + k] - e).abs() < 1e-12);
            }
        }
    }
}
