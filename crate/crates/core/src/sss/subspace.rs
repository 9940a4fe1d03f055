//! Erasure interpolation over the GF(2)-subspace {0, 1, …, 2^L − 1}.
//!
//! Polynomials are held in the novel basis X_j = Π_{i ∈ bits(j)} Ŵ_i, where
//! Ŵ_i is the normalized vanishing polynomial of {0, …, 2^i − 1}. In that basis
//! evaluation on the whole subspace is an O(N log N) butterfly network.
#![allow(clippy::needless_range_loop)]
//!
//! Recovery of a degree < k polynomial from k known points uses the error
//! locator Λ(x) = Π_{e erased}(x − e): P = f·Λ is known everywhere on the
//! subspace, and f(e) = P'(e) / Λ'(e) at each erased point. Λ is evaluated in
//! the log domain through a Walsh–Hadamard XOR-convolution, so this path needs
//! log tables (λ ≤ 16).

use std::sync::Arc;

use crate::field::LogTables;

pub(crate) struct SubspaceCodec {
    log_n: u32,
    tables: Arc<LogTables>,
    /// Per level i, log of Ŵ_i(t) for each block start t (u32::MAX for zero).
    skews: Vec<Vec<u32>>,
    /// log of Ŵ_i'(x), a constant since Ŵ_i is linearized.
    deriv_logs: Vec<u32>,
    /// Walsh–Hadamard transform of the log table restricted to the subspace.
    log_walsh: Vec<u64>,
}

const ZERO: u32 = u32::MAX;

impl SubspaceCodec {
    pub(crate) fn new(tables: Arc<LogTables>, log_n: u32) -> Self {
        let n = 1usize << log_n;
        let l = log_n as usize;
        let t = &tables;
        // w[i][b] = W_i(2^b), built with W_{i+1}(y) = W_i(y)·(W_i(y) + W_i(2^i)).
        // only b < L is needed; 2^L itself is outside the field when L = λ
        let mut w = vec![vec![0u32; l]; l + 1];
        for b in 0..l {
            w[0][b] = 1u32 << b;
        }
        for i in 0..l {
            let s = w[i][i];
            for b in 0..l {
                let y = w[i][b];
                w[i + 1][b] = t.mul(y, y ^ s);
            }
        }
        let inv = |v: u32| -> u32 { (t.order - t.log[v as usize]) % t.order };
        let mut skews = Vec::with_capacity(l);
        for i in 0..l {
            let s_log_inv = inv(w[i][i]);
            let blocks = n >> (i + 1);
            let mut level = Vec::with_capacity(blocks);
            for blk in 0..blocks {
                let start = blk << (i + 1);
                let mut v = 0u32;
                for b in (i + 1)..l {
                    if start >> b & 1 == 1 {
                        v ^= w[i][b];
                    }
                }
                level.push(if v == 0 {
                    ZERO
                } else {
                    (t.log[v as usize] + s_log_inv) % t.order
                });
            }
            skews.push(level);
        }
        // W_i' = Π_{j<i} W_j(2^j), so Ŵ_i' = W_i' / W_i(2^i).
        let mut deriv_logs = Vec::with_capacity(l);
        let mut acc_log = 0u32;
        for i in 0..l {
            let s_log = t.log[w[i][i] as usize];
            deriv_logs.push((acc_log + t.order - s_log) % t.order);
            acc_log = (acc_log + s_log) % t.order;
        }
        let m = t.order as u64;
        let mut log_walsh: Vec<u64> = (0..n)
            .map(|j| if j == 0 { 0 } else { t.log[j] as u64 })
            .collect();
        walsh(&mut log_walsh, m);
        SubspaceCodec {
            log_n,
            tables,
            skews,
            deriv_logs,
            log_walsh,
        }
    }

    pub(crate) fn len(&self) -> usize {
        1 << self.log_n
    }

    /// Novel-basis coefficients to values at 0..N.
    pub(crate) fn fft(&self, data: &mut [u32]) {
        let n = self.len();
        let t = &self.tables;
        for i in (0..self.log_n as usize).rev() {
            let half = 1usize << i;
            for (blk, start) in (0..n).step_by(2 * half).enumerate() {
                let c = self.skews[i][blk];
                let (lo, hi) = data[start..start + 2 * half].split_at_mut(half);
                if c == ZERO {
                    for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                        *b ^= *a;
                    }
                } else {
                    for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                        *a ^= t.mul_log(*b, c);
                        *b ^= *a;
                    }
                }
            }
        }
    }

    /// Values at 0..N to novel-basis coefficients.
    pub(crate) fn ifft(&self, data: &mut [u32]) {
        let n = self.len();
        let t = &self.tables;
        for i in 0..self.log_n as usize {
            let half = 1usize << i;
            for (blk, start) in (0..n).step_by(2 * half).enumerate() {
                let c = self.skews[i][blk];
                let (lo, hi) = data[start..start + 2 * half].split_at_mut(half);
                if c == ZERO {
                    for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                        *b ^= *a;
                    }
                } else {
                    for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                        *b ^= *a;
                        *a ^= t.mul_log(*b, c);
                    }
                }
            }
        }
    }

    /// Formal derivative in the novel basis, in place.
    pub(crate) fn derivative(&self, data: &mut [u32]) {
        let n = self.len();
        let t = &self.tables;
        for j in 0..n {
            let mut acc = 0u32;
            for (i, &d) in self.deriv_logs.iter().enumerate() {
                let bit = 1usize << i;
                if j & bit == 0 {
                    acc ^= t.mul_log(data[j | bit], d);
                }
            }
            data[j] = acc;
        }
    }

    /// Precomputes locator values for a fixed set of known positions.
    pub(crate) fn plan(&self, known: &[bool]) -> ErasurePlan {
        let n = self.len();
        assert_eq!(known.len(), n);
        let m = self.tables.order as u64;
        let mut ind: Vec<u64> = known.iter().map(|&k| u64::from(!k)).collect();
        walsh(&mut ind, m);
        for (a, b) in ind.iter_mut().zip(&self.log_walsh) {
            *a = *a * b % m;
        }
        walsh(&mut ind, m);
        // Inverse transform divides by N = 2^L, i.e. multiplies by 2^(λ−L) mod 2^λ − 1.
        let lambda = 64 - (m + 1).leading_zeros() - 1;
        let scale = (1u64 << ((lambda - self.log_n) % lambda)) % m;
        let mut locator_log = vec![0u32; n];
        let mut erased = Vec::new();
        for j in 0..n {
            let v = (ind[j] * scale % m) as u32;
            if known[j] {
                locator_log[j] = v;
            } else {
                erased.push(j);
                // store log of 1/Λ'(e)
                locator_log[j] = (self.tables.order - v) % self.tables.order;
            }
        }
        ErasurePlan {
            known: known.to_vec(),
            locator_log,
            erased,
        }
    }

    /// Fills every erased position of `values` (length N).
    pub(crate) fn recover(&self, plan: &ErasurePlan, values: &mut [u32]) {
        let n = self.len();
        let t = &self.tables;
        if plan.erased.is_empty() {
            return;
        }
        let mut work = vec![0u32; n];
        for j in 0..n {
            if plan.known[j] {
                work[j] = t.mul_log(values[j], plan.locator_log[j]);
            }
        }
        self.ifft(&mut work);
        self.derivative(&mut work);
        self.fft(&mut work);
        for &e in &plan.erased {
            values[e] = t.mul_log(work[e], plan.locator_log[e]);
        }
    }
}

pub(crate) struct ErasurePlan {
    known: Vec<bool>,
    locator_log: Vec<u32>,
    erased: Vec<usize>,
}

/// Unnormalized Walsh–Hadamard transform modulo m.
fn walsh(data: &mut [u64], m: u64) {
    let n = data.len();
    let mut h = 1;
    while h < n {
        for start in (0..n).step_by(2 * h) {
            for j in start..start + h {
                let a = data[j];
                let b = data[j + h];
                data[j] = (a + b) % m;
                data[j + h] = (a + m - b) % m;
            }
        }
        h *= 2;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Field;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn codec(lambda: u32, log_n: u32) -> (Field, SubspaceCodec) {
        let f = Field::builtin(lambda).unwrap();
        let c = SubspaceCodec::new(f.tables().unwrap().clone(), log_n);
        (f, c)
    }

    #[test]
    fn fft_roundtrip() {
        let (_, c) = codec(8, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let orig: Vec<u32> = (0..32).map(|_| rng.gen_range(0..256)).collect();
        let mut d = orig.clone();
        c.fft(&mut d);
        c.ifft(&mut d);
        assert_eq!(d, orig);
    }

    #[test]
    fn constant_and_linear_polynomials() {
        let (f, c) = codec(8, 4);
        // X_0 = 1
        let mut d = vec![0u32; 16];
        d[0] = 7;
        c.fft(&mut d);
        assert!(d.iter().all(|&v| v == 7));
        // X_1 = Ŵ_0 = x / 1 = x
        let mut d = vec![0u32; 16];
        d[1] = 1;
        c.fft(&mut d);
        assert_eq!(d, (0..16).collect::<Vec<_>>());
        // X_2 = x(x+1) / (2·3)
        let mut d = vec![0u32; 16];
        d[2] = 1;
        c.fft(&mut d);
        let norm = f.inv(f.mul(2, 3)).unwrap();
        for (x, &v) in d.iter().enumerate() {
            let x = x as u128;
            assert_eq!(v as u128, f.mul(f.mul(x, x ^ 1), norm));
        }
    }

    #[test]
    fn derivative_of_x_squared_is_zero() {
        // x^2 = X_1^2; in the novel basis x^2 = 6·X_2 + X_1 (since X_2 = (x^2 + x)/6).
        let (f, c) = codec(8, 3);
        let mut d = vec![0u32; 8];
        d[2] = f.mul(2, 3) as u32;
        d[1] = 1;
        let mut vals = d.clone();
        c.fft(&mut vals);
        for (x, &v) in vals.iter().enumerate() {
            assert_eq!(v as u128, f.mul(x as u128, x as u128));
        }
        c.derivative(&mut d);
        assert!(d.iter().all(|&v| v == 0));
    }

    #[test]
    fn whole_field_as_evaluation_set() {
        let (f, c) = codec(8, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let coeffs: Vec<u128> = (0..100).map(|_| f.random(&mut rng)).collect();
        let eval = |x: u128| coeffs.iter().rev().fold(0u128, |acc, &c| f.mul(acc, x) ^ c);
        let truth: Vec<u32> = (0..256u128).map(|x| eval(x) as u32).collect();
        let mut kept = vec![false; 256];
        for j in (0..256).filter(|j| j % 5 != 1).take(100) {
            kept[j] = true;
        }
        let mut vals: Vec<u32> = truth
            .iter()
            .zip(&kept)
            .map(|(&v, &k)| if k { v } else { 0 })
            .collect();
        c.recover(&c.plan(&kept), &mut vals);
        assert_eq!(vals, truth);
    }

    #[test]
    fn recovers_random_polynomial() {
        let (f, c) = codec(16, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for k in [1usize, 5, 17, 40, 64] {
            let coeffs: Vec<u128> = (0..k).map(|_| f.random(&mut rng)).collect();
            let eval = |x: u128| coeffs.iter().rev().fold(0u128, |acc, &c| f.mul(acc, x) ^ c);
            let truth: Vec<u32> = (0..64u128).map(|x| eval(x) as u32).collect();
            let mut known = vec![false; 64];
            let mut picked = 0;
            while picked < k {
                let j = rng.gen_range(0..64);
                if !known[j] {
                    known[j] = true;
                    picked += 1;
                }
            }
            let plan = c.plan(&known);
            let mut vals: Vec<u32> = truth
                .iter()
                .zip(&known)
                .map(|(&v, &kn)| if kn { v } else { 0 })
                .collect();
            c.recover(&plan, &mut vals);
            assert_eq!(vals, truth, "k = {k}");
        }
    }
}
