//! Barycentric Lagrange interpolation for arbitrary point sets.

use crate::field::Field;

/// Evaluates at `targets` the unique polynomial of degree < xs.len() through
/// `(xs[i], ys[i])`. Points must be distinct.
pub(crate) fn interpolate(field: &Field, xs: &[u128], ys: &[u128], targets: &[u128]) -> Vec<u128> {
    let k = xs.len();
    // w_i = 1 / Π_{j≠i} (x_i − x_j)
    let mut denom = vec![1u128; k];
    for i in 0..k {
        for j in 0..k {
            if i != j {
                denom[i] = field.mul(denom[i], xs[i] ^ xs[j]);
            }
        }
    }
    let weights = batch_inverse(field, &denom);
    let wy: Vec<u128> = weights
        .iter()
        .zip(ys)
        .map(|(&w, &y)| field.mul(w, y))
        .collect();
    let mut diffs = vec![0u128; k];
    targets
        .iter()
        .map(|&t| {
            if let Some(i) = xs.iter().position(|&x| x == t) {
                return ys[i];
            }
            let mut ell = 1u128;
            for (d, &x) in diffs.iter_mut().zip(xs) {
                *d = t ^ x;
                ell = field.mul(ell, *d);
            }
            let inv = batch_inverse(field, &diffs);
            let sum = inv
                .iter()
                .zip(&wy)
                .fold(0u128, |acc, (&a, &b)| acc ^ field.mul(a, b));
            field.mul(ell, sum)
        })
        .collect()
}

/// Inverts every (non-zero) entry with one field inversion.
pub(crate) fn batch_inverse(field: &Field, xs: &[u128]) -> Vec<u128> {
    let mut prefix = Vec::with_capacity(xs.len());
    let mut acc = 1u128;
    for &x in xs {
        prefix.push(acc);
        acc = field.mul(acc, x);
    }
    let mut inv = field.inv(acc).expect("batch_inverse on a zero entry");
    let mut out = vec![0u128; xs.len()];
    for i in (0..xs.len()).rev() {
        out[i] = field.mul(inv, prefix[i]);
        inv = field.mul(inv, xs[i]);
    }
    out
}

/// Monomial coefficients (constant term first) of the polynomial of degree
/// < xs.len() through `(xs[i], ys[i])`, by Newton's divided differences.
pub(crate) fn coefficients(field: &Field, xs: &[u128], ys: &[u128]) -> Vec<u128> {
    let k = xs.len();
    let mut dd = ys.to_vec();
    for level in 1..k {
        let diffs: Vec<u128> = (level..k).map(|i| xs[i] ^ xs[i - level]).collect();
        let inv = batch_inverse(field, &diffs);
        for i in (level..k).rev() {
            dd[i] = field.mul(dd[i] ^ dd[i - 1], inv[i - level]);
        }
    }
    // Horner on the Newton form: c ← c·(x − x_i) + dd_i
    let mut c = vec![0u128; k];
    for i in (0..k).rev() {
        for j in (1..k).rev() {
            c[j] = c[j - 1] ^ field.mul(c[j], xs[i]);
        }
        c[0] = field.mul(c[0], xs[i]) ^ dd[i];
    }
    c
}

/// Evaluates the polynomial with monomial coefficients `c` at `x`.
pub(crate) fn horner(field: &Field, c: &[u128], x: u128) -> u128 {
    c.iter().rev().fold(0u128, |acc, &a| field.mul(acc, x) ^ a)
}
