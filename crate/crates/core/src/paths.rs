//! Path subsets, exact binomials and lexicographic subset ranking.

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive};
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PathError {
    #[error("subset size {t} exceeds {n} paths")]
    TooLarge { n: usize, t: usize },
    #[error("index {index} out of range for {n} paths")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("duplicate path index {0}")]
    Duplicate(usize),
    #[error("rank {rank} out of range, there are {count} subsets")]
    RankOutOfRange { rank: u128, count: u128 },
    #[error("C({n}, {t}) does not fit in 128 bits")]
    CountOverflow { n: usize, t: usize },
    #[error("binomial arguments out of range: C({n}, {k})")]
    BinomialDomain { n: u64, k: u64 },
    #[error("subset has {got} paths, codec expects {expected}")]
    WrongSize { expected: usize, got: usize },
}

/// A sorted set of distinct path indices in `0..n`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PathSubset {
    n: usize,
    indices: Vec<usize>,
}

impl PathSubset {
    pub fn new(n: usize, mut indices: Vec<usize>) -> Result<Self, PathError> {
        indices.sort_unstable();
        for w in indices.windows(2) {
            if w[0] == w[1] {
                return Err(PathError::Duplicate(w[0]));
            }
        }
        if let Some(&index) = indices.last().filter(|&&i| i >= n) {
            return Err(PathError::IndexOutOfRange { index, n });
        }
        Ok(PathSubset { n, indices })
    }

    /// The paths `0..t`.
    pub fn prefix(n: usize, t: usize) -> Result<Self, PathError> {
        if t > n {
            return Err(PathError::TooLarge { n, t });
        }
        Ok(PathSubset {
            n,
            indices: (0..t).collect(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn contains(&self, path: usize) -> bool {
        self.indices.binary_search(&path).is_ok()
    }

    /// Position of `path` within the sorted subset.
    pub fn position(&self, path: usize) -> Option<usize> {
        self.indices.binary_search(&path).ok()
    }

    /// Semicolon-separated indices, as used in transcripts.
    pub fn to_field_string(&self) -> String {
        let parts: Vec<String> = self.indices.iter().map(|i| i.to_string()).collect();
        parts.join(";")
    }
}

/// C(n, k) exactly, for k ≤ n ≤ 10^4.
pub fn binomial_exact(n: u64, k: u64) -> Result<BigUint, PathError> {
    if k > n || n > 10_000 {
        return Err(PathError::BinomialDomain { n, k });
    }
    let k = k.min(n - k);
    let mut acc = BigUint::one();
    for i in 0..k {
        acc *= n - i;
        acc /= i + 1;
    }
    Ok(acc)
}

/// ⌈log2 x⌉ for x ≥ 1.
pub fn ceil_log2(x: &BigUint) -> u64 {
    if x <= &BigUint::one() {
        0
    } else {
        (x - 1u32).bits()
    }
}

/// Uniform t-subset of `0..n` by partial Fisher–Yates.
pub fn random_subset<R: Rng + ?Sized>(
    n: usize,
    t: usize,
    rng: &mut R,
) -> Result<PathSubset, PathError> {
    if t > n {
        return Err(PathError::TooLarge { n, t });
    }
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..t {
        let j = rng.gen_range(i..n);
        pool.swap(i, j);
    }
    pool.truncate(t);
    pool.sort_unstable();
    Ok(PathSubset { n, indices: pool })
}

/// Bijection between `0..C(n, t)` and t-subsets of `0..n` in lexicographic order.
#[derive(Clone, Debug)]
pub struct SubsetCodec {
    n: usize,
    t: usize,
    count: u128,
    w: u32,
    /// `pascal[a][b] = C(a, b)` for a ≤ n, b ≤ t.
    pascal: Vec<Vec<u128>>,
}

impl SubsetCodec {
    pub fn new(n: usize, t: usize) -> Result<Self, PathError> {
        if t > n {
            return Err(PathError::TooLarge { n, t });
        }
        let exact = binomial_exact(n as u64, t as u64)?;
        let count = exact.to_u128().ok_or(PathError::CountOverflow { n, t })?;
        let w = ceil_log2(&exact).max(1) as u32;
        let mut pascal = vec![vec![0u128; t + 1]; n + 1];
        for a in 0..=n {
            pascal[a][0] = 1;
            for b in 1..=t.min(a) {
                pascal[a][b] = pascal[a - 1][b - 1] + if b < a { pascal[a - 1][b] } else { 0 };
            }
        }
        Ok(SubsetCodec {
            n,
            t,
            count,
            w,
            pascal,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn t(&self) -> usize {
        self.t
    }

    /// Number of t-subsets.
    pub fn count(&self) -> u128 {
        self.count
    }

    /// Bits needed to name a subset, ⌈log2 C(n, t)⌉ (at least 1).
    pub fn w(&self) -> u32 {
        self.w
    }

    pub fn rank_to_subset(&self, rank: u128) -> Result<PathSubset, PathError> {
        if rank >= self.count {
            return Err(PathError::RankOutOfRange {
                rank,
                count: self.count,
            });
        }
        let mut rest = rank;
        let mut indices = Vec::with_capacity(self.t);
        let mut c = 0;
        for i in 0..self.t {
            loop {
                // subsets that pick c here and the remaining t−i−1 from above c
                let block = self.pascal[self.n - c - 1][self.t - i - 1];
                if rest < block {
                    break;
                }
                rest -= block;
                c += 1;
            }
            indices.push(c);
            c += 1;
        }
        Ok(PathSubset { n: self.n, indices })
    }

    pub fn subset_to_rank(&self, subset: &PathSubset) -> Result<u128, PathError> {
        if subset.len() != self.t {
            return Err(PathError::WrongSize {
                expected: self.t,
                got: subset.len(),
            });
        }
        if subset.n != self.n {
            return Err(PathError::IndexOutOfRange {
                index: subset.n,
                n: self.n,
            });
        }
        let mut rank = 0u128;
        let mut c = 0;
        for (i, &p) in subset.indices.iter().enumerate() {
            while c < p {
                rank += self.pascal[self.n - c - 1][self.t - i - 1];
                c += 1;
            }
            c = p + 1;
        }
        Ok(rank)
    }

    /// Maps a w-bit key chunk onto a subset through `rank = bits mod C(n, t)`.
    pub fn key_bits_to_subset(&self, bits: u128) -> PathSubset {
        self.rank_to_subset(bits % self.count)
            .expect("reduced rank is in range")
    }

    /// Uniform rank in `0..C(n, t)`.
    pub fn random_rank<R: Rng + ?Sized>(&self, rng: &mut R) -> u128 {
        rng.gen_range(0..self.count)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn binomials() {
        assert_eq!(binomial_exact(70, 4).unwrap(), BigUint::from(916_895u32));
        assert_eq!(binomial_exact(5, 0).unwrap(), BigUint::one());
        assert_eq!(binomial_exact(12, 6).unwrap(), BigUint::from(924u32));
        assert!(binomial_exact(3, 4).is_err());
        assert!(binomial_exact(10_001, 2).is_err());
        assert!(binomial_exact(10_000, 5_000).unwrap().bits() > 9_000);
    }

    #[test]
    fn key_width() {
        assert_eq!(SubsetCodec::new(70, 4).unwrap().w(), 20);
        assert_eq!(SubsetCodec::new(12, 6).unwrap().w(), 10);
        assert_eq!(SubsetCodec::new(8, 1).unwrap().w(), 3);
        assert_eq!(SubsetCodec::new(5, 5).unwrap().w(), 1);
        // C(4, 2) = 6
        assert_eq!(SubsetCodec::new(4, 2).unwrap().w(), 3);
        assert_eq!(SubsetCodec::new(4, 1).unwrap().w(), 2);
    }

    #[test]
    fn unranking_examples() {
        let c = SubsetCodec::new(5, 2).unwrap();
        assert_eq!(c.rank_to_subset(0).unwrap().indices(), &[0, 1]);
        assert_eq!(c.rank_to_subset(4).unwrap().indices(), &[1, 2]);
        assert_eq!(c.rank_to_subset(9).unwrap().indices(), &[3, 4]);
        assert!(c.rank_to_subset(10).is_err());
        let c = SubsetCodec::new(4, 2).unwrap();
        assert_eq!(c.rank_to_subset(5).unwrap().indices(), &[2, 3]);
        assert_eq!(c.key_bits_to_subset(7).indices(), &[0, 2]);
    }

    #[test]
    fn subset_validation() {
        assert!(PathSubset::new(4, vec![1, 1]).is_err());
        assert!(PathSubset::new(4, vec![4]).is_err());
        assert_eq!(PathSubset::new(4, vec![3, 0]).unwrap().indices(), &[0, 3]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(random_subset(3, 4, &mut rng).is_err());
        assert!(random_subset(3, 0, &mut rng).unwrap().is_empty());
    }

    #[test]
    fn random_subset_is_roughly_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let codec = SubsetCodec::new(5, 2).unwrap();
        let mut counts = [0u32; 10];
        for _ in 0..20_000 {
            let s = random_subset(5, 2, &mut rng).unwrap();
            counts[codec.subset_to_rank(&s).unwrap() as usize] += 1;
        }
        for c in counts {
            assert!((1_800..2_200).contains(&c), "{counts:?}");
        }
    }
}
