//! Arithmetic in GF(2^λ) for 1 ≤ λ ≤ 128.
//!
//! Elements are bit-vectors of polynomial coefficients stored in a `u128`;
//! bit `i` is the coefficient of `x^i`. A reduction polynomial is stored
//! without its leading `x^λ` term.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FieldError {
    #[error("lambda must be in 1..=128, got {0}")]
    InvalidLambda(u32),
    #[error("no built-in reduction polynomial for lambda = {0}")]
    NoBuiltin(u32),
    #[error("reduction polynomial {poly:#x} is reducible over GF(2) at lambda = {lambda}")]
    Reducible { lambda: u32, poly: u128 },
    #[error("value {value:#x} does not fit in GF(2^{lambda})")]
    OutOfRange { lambda: u32, value: u128 },
    #[error("operands belong to different fields")]
    Mismatch,
    #[error("zero has no multiplicative inverse")]
    ZeroInverse,
    #[error("element {0:#x} is not invertible (reduction polynomial is not irreducible)")]
    NotInvertible(u128),
    #[error("cannot parse reduction polynomial {0:?}")]
    BadHex(String),
}

/// Low-weight irreducible polynomials, lower terms only.
const BUILTIN: &[(u32, u128)] = &[
    (2, 0b11),    // x^2 + x + 1
    (3, 0b11),    // x^3 + x + 1
    (4, 0b11),    // x^4 + x + 1
    (8, 0x1b),    // x^8 + x^4 + x^3 + x + 1
    (16, 0x100b), // x^16 + x^12 + x^3 + x + 1
    (32, 0x8d),   // x^32 + x^7 + x^3 + x^2 + 1
    (64, 0x1b),   // x^64 + x^4 + x^3 + x + 1
    (104, 0x1b),  // x^104 + x^4 + x^3 + x + 1
    (128, 0x87),  // x^128 + x^7 + x^2 + x + 1
];

/// Degree and reduction polynomial of a binary extension field.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct FieldSpec {
    lambda: u32,
    poly: u128,
}

impl FieldSpec {
    /// Builds a spec from an explicit reduction polynomial (leading term omitted).
    ///
    /// Irreducibility is verified by trial division for λ ≤ 32; larger degrees
    /// are trusted.
    pub fn new(lambda: u32, poly: u128) -> Result<Self, FieldError> {
        if lambda == 0 || lambda > 128 {
            return Err(FieldError::InvalidLambda(lambda));
        }
        if lambda < 128 && poly >> lambda != 0 {
            return Err(FieldError::OutOfRange {
                lambda,
                value: poly,
            });
        }
        if lambda <= 32 && !is_irreducible_small(lambda, poly) {
            return Err(FieldError::Reducible { lambda, poly });
        }
        Ok(FieldSpec { lambda, poly })
    }

    /// Built-in polynomial for λ, or the lowest-weight irreducible one found by
    /// search when λ ≤ 32 is not tabulated.
    pub fn builtin(lambda: u32) -> Result<Self, FieldError> {
        if let Some(&(_, poly)) = BUILTIN.iter().find(|(l, _)| *l == lambda) {
            return Ok(FieldSpec { lambda, poly });
        }
        if lambda == 1 {
            return Ok(FieldSpec { lambda, poly: 1 });
        }
        if lambda == 0 || lambda > 32 {
            return Err(if lambda == 0 || lambda > 128 {
                FieldError::InvalidLambda(lambda)
            } else {
                FieldError::NoBuiltin(lambda)
            });
        }
        search_low_weight(lambda).ok_or(FieldError::NoBuiltin(lambda))
    }

    /// Parses `0x…` hex for the lower terms of the reduction polynomial.
    pub fn from_hex(lambda: u32, hex: &str) -> Result<Self, FieldError> {
        let digits = hex.trim().trim_start_matches("0x").trim_start_matches("0X");
        let poly =
            u128::from_str_radix(digits, 16).map_err(|_| FieldError::BadHex(hex.to_string()))?;
        Self::new(lambda, poly)
    }

    pub fn lambda(&self) -> u32 {
        self.lambda
    }

    /// Lower terms of the reduction polynomial.
    pub fn reduction_poly(&self) -> u128 {
        self.poly
    }

    pub fn reduction_poly_hex(&self) -> String {
        format!("{:#x}", self.poly)
    }

    /// Bit mask of valid element values.
    pub fn mask(&self) -> u128 {
        if self.lambda == 128 {
            u128::MAX
        } else {
            (1u128 << self.lambda) - 1
        }
    }

    /// Number of field elements as f64 (exact up to 2^53).
    pub fn order(&self) -> f64 {
        2f64.powi(self.lambda as i32)
    }

    fn contains(&self, v: u128) -> bool {
        v & !self.mask() == 0
    }

    /// Shift-and-add multiplication with interleaved reduction.
    fn mul_raw(&self, mut a: u128, mut b: u128) -> u128 {
        let top = 1u128 << (self.lambda - 1);
        let mask = self.mask();
        let mut r = 0u128;
        while b != 0 {
            if b & 1 == 1 {
                r ^= a;
            }
            b >>= 1;
            let carry = a & top != 0;
            a = (a << 1) & mask;
            if carry {
                a ^= self.poly;
            }
        }
        r
    }

    /// Extended Euclid on GF(2)[x] against the full modulus x^λ + poly.
    fn inv_raw(&self, a: u128) -> Option<u128> {
        if a == 0 {
            return None;
        }
        if a == 1 {
            return Some(1);
        }
        // First division step, handled separately because x^λ may not fit.
        let d = degree(a);
        let shift = self.lambda - d;
        let mut q = 1u128 << shift;
        let mut rem = self.poly ^ ((a << shift) & self.mask());
        while rem != 0 && degree(rem) >= d {
            let s = degree(rem) - d;
            rem ^= a << s;
            q ^= 1u128 << s;
        }
        let (mut r_prev, mut r_cur) = (a, rem);
        let (mut s_prev, mut s_cur) = (1u128, q);
        while r_cur != 1 {
            if r_cur == 0 {
                return None;
            }
            let (q, r) = poly_divmod(r_prev, r_cur);
            let s_next = s_prev ^ clmul_low(q, s_cur);
            r_prev = r_cur;
            r_cur = r;
            s_prev = s_cur;
            s_cur = s_next;
        }
        Some(s_cur)
    }
}

impl fmt::Display for FieldSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "GF(2^{}) mod x^{} + {:#x}",
            self.lambda, self.lambda, self.poly
        )
    }
}

/// Serialized form `{lambda, reduction_poly_hex}`.
#[derive(Serialize, Deserialize)]
struct FieldSpecRepr {
    lambda: u32,
    reduction_poly_hex: String,
}

impl Serialize for FieldSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        FieldSpecRepr {
            lambda: self.lambda,
            reduction_poly_hex: self.reduction_poly_hex(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for FieldSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let repr = FieldSpecRepr::deserialize(d)?;
        FieldSpec::from_hex(repr.lambda, &repr.reduction_poly_hex).map_err(serde::de::Error::custom)
    }
}

fn degree(p: u128) -> u32 {
    127 - p.leading_zeros()
}

fn poly_divmod(mut a: u128, b: u128) -> (u128, u128) {
    let db = degree(b);
    let mut q = 0u128;
    while a != 0 && degree(a) >= db {
        let s = degree(a) - db;
        a ^= b << s;
        q |= 1u128 << s;
    }
    (q, a)
}

/// Carry-less product, keeping only the low 128 bits.
fn clmul_low(mut a: u128, mut b: u128) -> u128 {
    let mut r = 0u128;
    while b != 0 && a != 0 {
        if b & 1 == 1 {
            r ^= a;
        }
        b >>= 1;
        a <<= 1;
    }
    r
}

fn is_irreducible_small(lambda: u32, poly: u128) -> bool {
    if lambda == 1 {
        return true;
    }
    let full = (1u128 << lambda) | poly;
    if full & 1 == 0 {
        return false;
    }
    for d in 1..=lambda / 2 {
        for low in 0..(1u128 << d) {
            let cand = (1u128 << d) | low;
            if poly_divmod(full, cand).1 == 0 {
                return false;
            }
        }
    }
    true
}

fn search_low_weight(lambda: u32) -> Option<FieldSpec> {
    for a in 1..lambda {
        let poly = (1u128 << a) | 1;
        if is_irreducible_small(lambda, poly) {
            return Some(FieldSpec { lambda, poly });
        }
    }
    for a in 3..lambda {
        for b in 2..a {
            for c in 1..b {
                let poly = (1u128 << a) | (1u128 << b) | (1u128 << c) | 1;
                if is_irreducible_small(lambda, poly) {
                    return Some(FieldSpec { lambda, poly });
                }
            }
        }
    }
    None
}

/// A field element tagged with its field.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct FieldElement {
    value: u128,
    spec: FieldSpec,
}

impl FieldElement {
    pub fn new(spec: FieldSpec, value: u128) -> Result<Self, FieldError> {
        if !spec.contains(value) {
            return Err(FieldError::OutOfRange {
                lambda: spec.lambda,
                value,
            });
        }
        Ok(FieldElement { value, spec })
    }

    pub fn zero(spec: FieldSpec) -> Self {
        FieldElement { value: 0, spec }
    }

    pub fn one(spec: FieldSpec) -> Self {
        FieldElement { value: 1, spec }
    }

    pub fn value(&self) -> u128 {
        self.value
    }

    pub fn spec(&self) -> FieldSpec {
        self.spec
    }

    #[allow(clippy::should_implement_trait)] // fallible: operands must share a field
    pub fn add(self, rhs: Self) -> Result<Self, FieldError> {
        self.check(&rhs)?;
        Ok(FieldElement {
            value: self.value ^ rhs.value,
            spec: self.spec,
        })
    }

    #[allow(clippy::should_implement_trait)]
    pub fn mul(self, rhs: Self) -> Result<Self, FieldError> {
        self.check(&rhs)?;
        Ok(FieldElement {
            value: self.spec.mul_raw(self.value, rhs.value),
            spec: self.spec,
        })
    }

    pub fn inv(self) -> Result<Self, FieldError> {
        if self.value == 0 {
            return Err(FieldError::ZeroInverse);
        }
        let value = self
            .spec
            .inv_raw(self.value)
            .ok_or(FieldError::NotInvertible(self.value))?;
        Ok(FieldElement {
            value,
            spec: self.spec,
        })
    }

    fn check(&self, rhs: &Self) -> Result<(), FieldError> {
        if self.spec != rhs.spec {
            Err(FieldError::Mismatch)
        } else {
            Ok(())
        }
    }
}

/// Horner evaluation of `coeffs[0] + coeffs[1] x + …` at `x`.
pub fn poly_eval(coeffs: &[FieldElement], x: FieldElement) -> Result<FieldElement, FieldError> {
    let mut acc = FieldElement::zero(x.spec);
    for c in coeffs.iter().rev() {
        acc = acc.mul(x)?.add(*c)?;
    }
    Ok(acc)
}

/// Discrete log and antilog tables for λ ≤ 16.
pub(crate) struct LogTables {
    /// `log[v]` for v ≠ 0; `log[0]` is unused.
    pub(crate) log: Vec<u32>,
    /// `exp[i] = g^i` for i in 0..2·(2^λ − 1).
    pub(crate) exp: Vec<u32>,
    /// 2^λ − 1.
    pub(crate) order: u32,
}

impl LogTables {
    fn build(spec: &FieldSpec) -> Self {
        let order = (1u32 << spec.lambda) - 1;
        let g = find_generator(spec, order);
        let mut exp = vec![0u32; 2 * order as usize];
        let mut log = vec![0u32; order as usize + 1];
        let mut v = 1u128;
        for (i, e) in exp.iter_mut().take(order as usize).enumerate() {
            *e = v as u32;
            log[v as usize] = i as u32;
            v = spec.mul_raw(v, g);
        }
        for i in order as usize..2 * order as usize {
            exp[i] = exp[i - order as usize];
        }
        LogTables { log, exp, order }
    }

    #[inline]
    pub(crate) fn mul(&self, a: u32, b: u32) -> u32 {
        if a == 0 || b == 0 {
            0
        } else {
            self.exp[(self.log[a as usize] + self.log[b as usize]) as usize]
        }
    }

    /// Multiplies `a` by the element whose log is `lb`.
    #[inline]
    pub(crate) fn mul_log(&self, a: u32, lb: u32) -> u32 {
        if a == 0 {
            0
        } else {
            self.exp[(self.log[a as usize] + lb) as usize]
        }
    }
}

fn find_generator(spec: &FieldSpec, order: u32) -> u128 {
    let mut factors = Vec::new();
    let mut m = order;
    let mut p = 2;
    while p * p <= m {
        if m.is_multiple_of(p) {
            factors.push(p);
            while m.is_multiple_of(p) {
                m /= p;
            }
        }
        p += 1;
    }
    if m > 1 {
        factors.push(m);
    }
    let pow = |mut base: u128, mut e: u32| {
        let mut acc = 1u128;
        while e > 0 {
            if e & 1 == 1 {
                acc = spec.mul_raw(acc, base);
            }
            base = spec.mul_raw(base, base);
            e >>= 1;
        }
        acc
    };
    (1..=order as u128)
        .find(|&g| g != 0 && factors.iter().all(|&f| pow(g, order / f) != 1))
        .expect("multiplicative group of a finite field is cyclic")
}

/// Arithmetic context over raw `u128` values, with log tables when λ ≤ 16.
#[derive(Clone)]
pub struct Field {
    spec: FieldSpec,
    tables: Option<Arc<LogTables>>,
}

impl fmt::Debug for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Field").field("spec", &self.spec).finish()
    }
}

impl Field {
    pub fn new(spec: FieldSpec) -> Self {
        let tables = (spec.lambda <= 16).then(|| Arc::new(LogTables::build(&spec)));
        Field { spec, tables }
    }

    pub fn builtin(lambda: u32) -> Result<Self, FieldError> {
        Ok(Self::new(FieldSpec::builtin(lambda)?))
    }

    pub fn spec(&self) -> FieldSpec {
        self.spec
    }

    pub fn lambda(&self) -> u32 {
        self.spec.lambda
    }

    pub fn mask(&self) -> u128 {
        self.spec.mask()
    }

    pub(crate) fn tables(&self) -> Option<&Arc<LogTables>> {
        self.tables.as_ref()
    }

    pub fn element(&self, value: u128) -> Result<FieldElement, FieldError> {
        FieldElement::new(self.spec, value)
    }

    #[inline]
    pub fn mul(&self, a: u128, b: u128) -> u128 {
        match &self.tables {
            Some(t) => t.mul(a as u32, b as u32) as u128,
            None => self.spec.mul_raw(a, b),
        }
    }

    pub fn inv(&self, a: u128) -> Result<u128, FieldError> {
        if a == 0 {
            return Err(FieldError::ZeroInverse);
        }
        match &self.tables {
            Some(t) => {
                let l = t.log[a as usize];
                Ok(t.exp[((t.order - l) % t.order) as usize] as u128)
            }
            None => self.spec.inv_raw(a).ok_or(FieldError::NotInvertible(a)),
        }
    }

    /// Uniformly random element.
    pub fn random<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> u128 {
        rng.gen::<u128>() & self.mask()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(spec: FieldSpec, v: u128) -> FieldElement {
        FieldElement::new(spec, v).unwrap()
    }

    #[test]
    fn aes_field_vectors() {
        let s = FieldSpec::builtin(8).unwrap();
        assert_eq!(e(s, 0x57).add(e(s, 0x83)).unwrap().value(), 0xd4);
        assert_eq!(e(s, 0x53).mul(e(s, 0xca)).unwrap().value(), 0x01);
        assert_eq!(e(s, 0x53).inv().unwrap().value(), 0xca);
        assert_eq!(e(s, 0x57).mul(e(s, 0x83)).unwrap().value(), 0xc1);
    }

    #[test]
    fn gf4_vectors() {
        let s = FieldSpec::builtin(2).unwrap();
        assert_eq!(e(s, 2).inv().unwrap().value(), 3);
        assert_eq!(poly_eval(&[e(s, 1), e(s, 1)], e(s, 2)).unwrap().value(), 3);
        assert_eq!(poly_eval(&[], e(s, 2)).unwrap().value(), 0);
    }

    #[test]
    fn zero_has_no_inverse() {
        let s = FieldSpec::builtin(8).unwrap();
        assert_eq!(FieldElement::zero(s).inv(), Err(FieldError::ZeroInverse));
    }

    #[test]
    fn mismatched_fields_are_rejected() {
        let a = e(FieldSpec::builtin(8).unwrap(), 3);
        let b = e(FieldSpec::builtin(16).unwrap(), 3);
        assert_eq!(a.add(b), Err(FieldError::Mismatch));
        assert_eq!(a.mul(b), Err(FieldError::Mismatch));
    }

    #[test]
    fn reducible_polynomial_is_rejected() {
        // x^4 + x^2 + 1 = (x^2 + x + 1)^2
        assert!(matches!(
            FieldSpec::new(4, 0b101),
            Err(FieldError::Reducible { .. })
        ));
        assert!(FieldSpec::new(4, 0b11).is_ok());
    }

    #[test]
    fn out_of_range_values() {
        let s = FieldSpec::builtin(4).unwrap();
        assert!(FieldElement::new(s, 16).is_err());
        assert!(FieldSpec::new(129, 1).is_err());
    }

    #[test]
    fn builtin_small_degrees_are_irreducible() {
        for lambda in 1..=32 {
            let s = FieldSpec::builtin(lambda).unwrap();
            assert!(
                is_irreducible_small(lambda, s.reduction_poly()),
                "lambda {lambda}"
            );
        }
    }

    #[test]
    fn inverse_128_matches_exponentiation() {
        let s = FieldSpec::builtin(128).unwrap();
        let a = 0x0123_4567_89ab_cdef_fedc_ba98_7654_3210u128;
        // a^(2^128 - 2) by square-and-multiply
        let mut acc = 1u128;
        let mut base = a;
        for i in 0..128 {
            if i != 0 {
                acc = s.mul_raw(acc, base);
            }
            base = s.mul_raw(base, base);
        }
        assert_eq!(s.inv_raw(a), Some(acc));
        assert_eq!(s.mul_raw(a, acc), 1);
    }

    #[test]
    fn table_and_shift_multiplication_agree() {
        let f = Field::builtin(16).unwrap();
        let s = f.spec();
        for a in (0..65536u128).step_by(257) {
            for b in (0..65536u128).step_by(1009) {
                assert_eq!(f.mul(a, b), s.mul_raw(a, b));
            }
        }
    }

    #[test]
    fn spec_serializes_as_hex() {
        let s = FieldSpec::builtin(16).unwrap();
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(json, r#"{"lambda":16,"reduction_poly_hex":"0x100b"}"#);
        let back: FieldSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, s);
    }
}
