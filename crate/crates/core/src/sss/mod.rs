//! Polynomial ramp and quasi-ramp secret sharing.
//!
//! The sharing polynomial has degree < k. Any `k − r` shares reveal nothing
//! about the secret. Reconstruction insists on at least `k + 2g` shares, which
//! gives the polynomial scheme the access structure of a (k, r, g, m)
//! quasi-ramp scheme.
//!
//! Normally a secret of `r` elements sits at the field points `0..r` and share
//! `i` is the value at point `r + i`. When the field has fewer than `m + r`
//! points the secret moves into the top `r` coefficients instead, and share
//! `i` is the value at point `i`.

mod lagrange;
mod subspace;

use std::collections::BTreeMap;
use std::sync::OnceLock;

use num_rational::Ratio;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::Field;
use subspace::{ErasurePlan, SubspaceCodec};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SssError {
    #[error("invalid quasi-ramp parameters (k={k}, r={r}, g={g}, m={m}): {reason}")]
    InvalidParams {
        k: usize,
        r: usize,
        g: usize,
        m: usize,
        reason: &'static str,
    },
    #[error("field too small: need {needed} distinct points, GF(2^{lambda}) has {available}")]
    FieldTooSmall {
        needed: u128,
        available: u128,
        lambda: u32,
    },
    #[error("secret has {got} elements, expected {expected}")]
    SecretLength { expected: usize, got: usize },
    #[error("share vector has {got} entries, expected {expected}")]
    ShareLength { expected: usize, got: usize },
    #[error("value {0:#x} is not a field element")]
    ValueOutOfRange(u128),
    #[error("observed count {count} exceeds m = {m}")]
    CountOutOfRange { count: usize, m: usize },
    #[error("observer index {index} out of range for m = {m}")]
    ObserverOutOfRange { index: usize, m: usize },
    #[error("exhaustive enumeration too large: {0}")]
    TooLarge(&'static str),
}

/// Quasi-ramp parameters: `k` interpolation degree bound, `r` secret length,
/// `g` gap, `m` number of shares.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuasiRampParams {
    pub k: usize,
    pub r: usize,
    pub g: usize,
    pub m: usize,
}

impl QuasiRampParams {
    pub fn new(k: usize, r: usize, g: usize, m: usize) -> Result<Self, SssError> {
        let bad = |reason| SssError::InvalidParams { k, r, g, m, reason };
        if r == 0 {
            return Err(bad("r must be positive"));
        }
        if r > k {
            return Err(bad("r must not exceed k"));
        }
        if k + 2 * g > m {
            return Err(bad("k + 2g must not exceed m"));
        }
        Ok(QuasiRampParams { k, r, g, m })
    }

    /// Plain ramp parameters (g = 0).
    pub fn ramp(k: usize, r: usize, m: usize) -> Result<Self, SssError> {
        Self::new(k, r, 0, m)
    }

    /// Multiplies every count by `p`; used when each share slot packs `p` symbols.
    pub fn scaled(&self, p: usize) -> Self {
        QuasiRampParams {
            k: self.k * p,
            r: self.r * p,
            g: self.g * p,
            m: self.m * p,
        }
    }

    /// Largest number of shares that reveals nothing.
    pub fn unqualified(&self) -> usize {
        self.k - self.r
    }

    /// Smallest number of shares that always reconstructs.
    pub fn qualified(&self) -> usize {
        self.k + 2 * self.g
    }
}

/// One entry per share index; `None` marks a missing share.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShareVector(pub Vec<Option<u128>>);

impl ShareVector {
    pub fn present_count(&self) -> usize {
        self.0.iter().filter(|s| s.is_some()).count()
    }

    /// Keeps only the listed indices.
    pub fn restrict(&self, keep: &[usize]) -> ShareVector {
        let mut out = vec![None; self.0.len()];
        for &i in keep {
            out[i] = self.0[i];
        }
        ShareVector(out)
    }
}

/// What an observer holding `count` shares learns about the secret.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Leakage {
    /// The secret is independent of the shares.
    Perfect,
    /// Some information, not necessarily all.
    Partial,
    /// The secret is a function of the shares.
    FullyDetermined,
}

pub fn leakage_profile(params: &QuasiRampParams, count: usize) -> Result<Leakage, SssError> {
    if count > params.m {
        return Err(SssError::CountOutOfRange { count, m: params.m });
    }
    Ok(if count <= params.unqualified() {
        Leakage::Perfect
    } else if count >= params.qualified() {
        Leakage::FullyDetermined
    } else {
        Leakage::Partial
    })
}

/// Where the secret lives in the sharing polynomial.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Embedding {
    /// Values at the points `0..r`; shares at `r..r + m`.
    Points,
    /// Coefficients of x^(k−r) .. x^(k−1); shares at `0..m`.
    Coefficients,
}

/// Below this k the quadratic path is faster than building transform tables.
const FAST_MIN_K: usize = 48;

struct FastPath {
    codec: SubspaceCodec,
    share_plan: ErasurePlan,
    rec_plan: OnceLock<ErasurePlan>,
}

/// A sharing scheme bound to a field.
pub struct RampScheme {
    field: Field,
    params: QuasiRampParams,
    embedding: Embedding,
    fast: Option<OnceLock<FastPath>>,
}

impl RampScheme {
    pub fn new(field: Field, params: QuasiRampParams) -> Result<Self, SssError> {
        let lambda = field.lambda();
        let fits = |needed: usize| lambda >= 128 || needed as u128 <= 1u128 << lambda;
        let embedding = if fits(params.m + params.r) {
            Embedding::Points
        } else if fits(params.m) {
            Embedding::Coefficients
        } else {
            return Err(SssError::FieldTooSmall {
                needed: params.m as u128,
                available: 1u128 << lambda,
                lambda,
            });
        };
        let fast =
            (embedding == Embedding::Points && field.tables().is_some() && params.k >= FAST_MIN_K)
                .then(OnceLock::new);
        Ok(RampScheme {
            field,
            params,
            embedding,
            fast,
        })
    }

    pub fn params(&self) -> &QuasiRampParams {
        &self.params
    }

    pub fn field(&self) -> &Field {
        &self.field
    }

    pub fn embedding(&self) -> Embedding {
        self.embedding
    }

    fn log_n(&self) -> u32 {
        (self.params.m + self.params.r)
            .next_power_of_two()
            .trailing_zeros()
    }

    fn fast(&self) -> Option<&FastPath> {
        self.fast.as_ref().map(|cell| {
            cell.get_or_init(|| {
                let tables = self
                    .field
                    .tables()
                    .expect("fast path requires log tables")
                    .clone();
                let codec = SubspaceCodec::new(tables, self.log_n());
                let mut known = vec![false; codec.len()];
                known[..self.params.k].iter_mut().for_each(|k| *k = true);
                let share_plan = codec.plan(&known);
                FastPath {
                    codec,
                    share_plan,
                    rec_plan: OnceLock::new(),
                }
            })
        })
    }

    /// Splits `secret` into `m` shares.
    ///
    /// The `k − r` free values are drawn uniformly and used directly as the
    /// first `k − r` shares; the rest follow by interpolation through the
    /// points `0..k`.
    pub fn share<R: Rng + ?Sized>(
        &self,
        secret: &[u128],
        rng: &mut R,
    ) -> Result<ShareVector, SssError> {
        let QuasiRampParams { k, r, m, .. } = self.params;
        if secret.len() != r {
            return Err(SssError::SecretLength {
                expected: r,
                got: secret.len(),
            });
        }
        if let Some(&v) = secret.iter().find(|&&v| v & !self.field.mask() != 0) {
            return Err(SssError::ValueOutOfRange(v));
        }
        let mut ys = secret.to_vec();
        ys.extend((r..k).map(|_| self.field.random(rng)));
        if self.embedding == Embedding::Coefficients {
            let mut c = ys[r..].to_vec();
            c.extend_from_slice(secret);
            let shares = (0..m as u128)
                .map(|x| Some(lagrange::horner(&self.field, &c, x)))
                .collect();
            return Ok(ShareVector(shares));
        }
        let rest = if let Some(fast) = self.fast() {
            let mut vals = vec![0u32; fast.codec.len()];
            for (v, &y) in vals.iter_mut().zip(&ys) {
                *v = y as u32;
            }
            fast.codec.recover(&fast.share_plan, &mut vals);
            vals[k..r + m].iter().map(|&v| v as u128).collect()
        } else {
            let xs: Vec<u128> = (0..k as u128).collect();
            let targets: Vec<u128> = (k as u128..(r + m) as u128).collect();
            lagrange::interpolate(&self.field, &xs, &ys, &targets)
        };
        let shares = ys[r..].iter().copied().chain(rest).map(Some).collect();
        Ok(ShareVector(shares))
    }

    /// Returns the secret, or `None` when fewer than `k + 2g` shares are present.
    /// Only the first `k` present shares (by index) are used.
    pub fn reconstruct(&self, shares: &ShareVector) -> Result<Option<Vec<u128>>, SssError> {
        let QuasiRampParams { k, r, m, .. } = self.params;
        if shares.0.len() != m {
            return Err(SssError::ShareLength {
                expected: m,
                got: shares.0.len(),
            });
        }
        if shares.present_count() < self.params.qualified() {
            return Ok(None);
        }
        let used: Vec<(usize, u128)> = shares
            .0
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.map(|v| (i, v)))
            .take(k)
            .collect();
        if let Some(&(_, v)) = used.iter().find(|(_, v)| v & !self.field.mask() != 0) {
            return Err(SssError::ValueOutOfRange(v));
        }
        if self.embedding == Embedding::Coefficients {
            let xs: Vec<u128> = used.iter().map(|&(i, _)| i as u128).collect();
            let ys: Vec<u128> = used.iter().map(|&(_, v)| v).collect();
            return Ok(Some(
                lagrange::coefficients(&self.field, &xs, &ys)[k - r..].to_vec(),
            ));
        }
        if let Some(fast) = self.fast() {
            let n = fast.codec.len();
            let mut vals = vec![0u32; n];
            let mut known = vec![false; n];
            for &(i, v) in &used {
                vals[r + i] = v as u32;
                known[r + i] = true;
            }
            let contiguous = used.last().map(|&(i, _)| i) == Some(k - 1);
            if contiguous {
                let plan = fast.rec_plan.get_or_init(|| fast.codec.plan(&known));
                fast.codec.recover(plan, &mut vals);
            } else {
                let plan = fast.codec.plan(&known);
                fast.codec.recover(&plan, &mut vals);
            }
            Ok(Some(vals[..r].iter().map(|&v| v as u128).collect()))
        } else {
            let xs: Vec<u128> = used.iter().map(|&(i, _)| (r + i) as u128).collect();
            let ys: Vec<u128> = used.iter().map(|&(_, v)| v).collect();
            let targets: Vec<u128> = (0..r as u128).collect();
            Ok(Some(lagrange::interpolate(&self.field, &xs, &ys, &targets)))
        }
    }
}

/// Exact statistical distance between the observers' views of any two secrets.
///
/// Enumerates every secret and every choice of the `k − r` free values, so it
/// needs λ·k ≤ 24 and λ·|observers| ≤ 128.
pub fn secrecy_distance_exhaustive(
    scheme: &RampScheme,
    observers: &[usize],
) -> Result<Ratio<u128>, SssError> {
    let QuasiRampParams { k, r, m, .. } = scheme.params;
    let field = &scheme.field;
    let lambda = field.lambda() as usize;
    if lambda * k > 24 {
        return Err(SssError::TooLarge("2^(lambda*k) exceeds 2^24"));
    }
    if lambda * observers.len() > 128 {
        return Err(SssError::TooLarge("observer view wider than 128 bits"));
    }
    if let Some(&index) = observers.iter().find(|&&i| i >= m) {
        return Err(SssError::ObserverOutOfRange { index, m });
    }
    // basis[i][o]: weight of joint value i (secret then randomness) in share o
    let basis: Vec<Vec<u128>> = match scheme.embedding {
        Embedding::Points => {
            let xs: Vec<u128> = (0..k as u128).collect();
            let points: Vec<u128> = observers.iter().map(|&i| (r + i) as u128).collect();
            (0..k)
                .map(|i| {
                    let mut unit = vec![0u128; k];
                    unit[i] = 1;
                    lagrange::interpolate(field, &xs, &unit, &points)
                })
                .collect()
        }
        Embedding::Coefficients => (0..k)
            .map(|i| {
                let power = if i < r { k - r + i } else { i - r };
                let mut unit = vec![0u128; k];
                unit[power] = 1;
                observers
                    .iter()
                    .map(|&o| lagrange::horner(field, &unit, o as u128))
                    .collect()
            })
            .collect(),
    };
    let mask = field.mask();
    let secrets = 1u128 << (lambda * r);
    let randomness = 1u128 << (lambda * (k - r));
    let mut histograms: Vec<Vec<(u128, u64)>> = Vec::new();
    let mut ys = vec![0u128; k];
    for s in 0..secrets {
        let mut counts: BTreeMap<u128, u64> = BTreeMap::new();
        for a in 0..randomness {
            let joint = s | (a << (lambda * r));
            for (i, y) in ys.iter_mut().enumerate() {
                *y = (joint >> (lambda * i)) & mask;
            }
            let mut view = 0u128;
            for o in 0..observers.len() {
                let v = ys
                    .iter()
                    .zip(&basis)
                    .fold(0u128, |acc, (&y, b)| acc ^ field.mul(y, b[o]));
                view |= v << (lambda * o);
            }
            *counts.entry(view).or_insert(0) += 1;
        }
        histograms.push(counts.into_iter().collect());
    }
    histograms.sort();
    histograms.dedup();
    let mut worst = 0u128;
    for i in 0..histograms.len() {
        for j in i + 1..histograms.len() {
            worst = worst.max(l1_distance(&histograms[i], &histograms[j]));
        }
    }
    Ok(Ratio::new(worst, 2 * randomness))
}

fn l1_distance(a: &[(u128, u64)], b: &[(u128, u64)]) -> u128 {
    let (mut i, mut j, mut total) = (0, 0, 0u128);
    while i < a.len() || j < b.len() {
        match (a.get(i), b.get(j)) {
            (Some(x), Some(y)) if x.0 == y.0 => {
                total += x.1.abs_diff(y.1) as u128;
                i += 1;
                j += 1;
            }
            (Some(x), Some(y)) if x.0 < y.0 => {
                total += x.1 as u128;
                i += 1;
            }
            (Some(_), Some(y)) => {
                total += y.1 as u128;
                j += 1;
            }
            (Some(x), None) => {
                total += x.1 as u128;
                i += 1;
            }
            (None, Some(y)) => {
                total += y.1 as u128;
                j += 1;
            }
            (None, None) => unreachable!(),
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::Zero;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scheme(lambda: u32, k: usize, r: usize, g: usize, m: usize) -> RampScheme {
        RampScheme::new(
            Field::builtin(lambda).unwrap(),
            QuasiRampParams::new(k, r, g, m).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn parameter_validation() {
        assert!(QuasiRampParams::new(3, 0, 0, 5).is_err());
        assert!(QuasiRampParams::new(3, 4, 0, 5).is_err());
        assert!(QuasiRampParams::new(3, 2, 2, 6).is_err());
        assert!(QuasiRampParams::new(3, 2, 1, 5).is_ok());
        let f = Field::builtin(2).unwrap();
        let p = QuasiRampParams::ramp(3, 2, 5).unwrap();
        assert!(matches!(
            RampScheme::new(f.clone(), p),
            Err(SssError::FieldTooSmall { .. })
        ));
        let p = QuasiRampParams::ramp(3, 2, 3).unwrap();
        assert_eq!(
            RampScheme::new(f, p).unwrap().embedding(),
            Embedding::Coefficients
        );
    }

    #[test]
    fn gf4_roundtrip_and_error_cases() {
        let s = scheme(2, 1, 1, 0, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let shares = s.share(&[3], &mut rng).unwrap();
        // k = r = 1: the polynomial is the constant secret
        assert_eq!(shares.0, vec![Some(3), Some(3)]);
        assert_eq!(
            s.reconstruct(&shares.restrict(&[1])).unwrap(),
            Some(vec![3])
        );
        assert_eq!(s.reconstruct(&shares.restrict(&[])).unwrap(), None);
        assert!(matches!(
            s.share(&[1, 2], &mut rng),
            Err(SssError::SecretLength { .. })
        ));
        assert!(matches!(
            s.share(&[4], &mut rng),
            Err(SssError::ValueOutOfRange(4))
        ));
    }

    #[test]
    fn golden_share_vector() {
        let s = scheme(2, 2, 1, 0, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let shares = s.share(&[1], &mut rng).unwrap();
        // f(x) = 1 + 2x: f(1) = 3, f(2) = 1 + 3 = 2
        assert_eq!(shares.0, vec![Some(3), Some(2)]);
    }

    #[test]
    fn coefficient_embedding_in_gf4() {
        // three shares of two secret elements need five points, GF(4) has four
        let s = scheme(2, 3, 2, 0, 4);
        assert_eq!(s.embedding(), Embedding::Coefficients);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for secret in 0..16u128 {
            let secret = [secret & 3, secret >> 2];
            let shares = s.share(&secret, &mut rng).unwrap();
            for drop in 0..4 {
                let keep: Vec<usize> = (0..4).filter(|&i| i != drop).collect();
                assert_eq!(
                    s.reconstruct(&shares.restrict(&keep)).unwrap(),
                    Some(secret.to_vec())
                );
            }
        }
        for o in 0..4 {
            assert!(secrecy_distance_exhaustive(&s, &[o]).unwrap().is_zero());
        }
        assert_eq!(
            secrecy_distance_exhaustive(&s, &[0, 1, 2]).unwrap(),
            Ratio::from_integer(1)
        );
    }

    #[test]
    fn leakage_boundaries() {
        let p = QuasiRampParams::new(3, 2, 1, 6).unwrap();
        assert_eq!(leakage_profile(&p, 1).unwrap(), Leakage::Perfect);
        assert_eq!(leakage_profile(&p, 2).unwrap(), Leakage::Partial);
        assert_eq!(leakage_profile(&p, 4).unwrap(), Leakage::Partial);
        assert_eq!(leakage_profile(&p, 5).unwrap(), Leakage::FullyDetermined);
        assert!(leakage_profile(&p, 7).is_err());
        // (2, 1, 0, 3): one share perfect, two determine
        let p = QuasiRampParams::ramp(2, 1, 3).unwrap();
        assert_eq!(leakage_profile(&p, 1).unwrap(), Leakage::Perfect);
        assert_eq!(leakage_profile(&p, 2).unwrap(), Leakage::FullyDetermined);
    }

    #[test]
    fn secrecy_distance_small_cases() {
        let s = scheme(2, 2, 1, 0, 3);
        assert!(secrecy_distance_exhaustive(&s, &[1]).unwrap().is_zero());
        assert!(secrecy_distance_exhaustive(&s, &[]).unwrap().is_zero());
        assert_eq!(
            secrecy_distance_exhaustive(&s, &[0, 1, 2]).unwrap(),
            Ratio::from_integer(1)
        );
        assert_eq!(
            secrecy_distance_exhaustive(&s, &[0, 2]).unwrap(),
            Ratio::from_integer(1)
        );
        assert!(secrecy_distance_exhaustive(&s, &[3]).is_err());
    }

    #[test]
    fn fast_and_quadratic_paths_agree() {
        let field = Field::builtin(16).unwrap();
        let params = QuasiRampParams::new(60, 20, 3, 90).unwrap();
        let fast = RampScheme::new(field.clone(), params).unwrap();
        assert!(fast.fast.is_some());
        let slow = RampScheme {
            field: field.clone(),
            params,
            embedding: Embedding::Points,
            fast: None,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let secret: Vec<u128> = (0..20).map(|_| field.random(&mut rng)).collect();
        let a = fast
            .share(&secret, &mut ChaCha8Rng::seed_from_u64(5))
            .unwrap();
        let b = slow
            .share(&secret, &mut ChaCha8Rng::seed_from_u64(5))
            .unwrap();
        assert_eq!(a, b);
        let holes = a.restrict(&(0..90).filter(|i| i % 7 != 3).collect::<Vec<_>>());
        assert_eq!(fast.reconstruct(&holes).unwrap(), Some(secret.clone()));
        assert_eq!(slow.reconstruct(&holes).unwrap(), Some(secret.clone()));
        assert_eq!(fast.reconstruct(&a).unwrap(), Some(secret));
    }
}
