//! Parameter derivation and executable transmission schemes.
//!
//! All schemes move λ-bit shares, one per used path per interval. A share is
//! packed as `p = λ / λ_field` symbols of a smaller simulation field, so the
//! sharing runs over GF(2^λ_field) with every count multiplied by `p`.

use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{chernoff_trial_minimums, gap_denominator, AnalysisError, TrialMinimums};
use crate::field::{Field, FieldError};
use crate::paths::{binomial_exact, ceil_log2, random_subset, PathError, PathSubset, SubsetCodec};
use crate::setting::{
    trial_seed, Channel, EveStrategy, MultipathConfig, Party, PartyView, SettingError, StaticEve,
    Transcript, UniformEve,
};
use crate::sss::{secrecy_distance_exhaustive, QuasiRampParams, RampScheme, ShareVector, SssError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scheme {
    F0,
    F1,
    F2,
    #[serde(rename = "F2simple")]
    F2Simple,
    F3,
}

impl Scheme {
    pub const ALL: [Scheme; 5] = [
        Scheme::F0,
        Scheme::F1,
        Scheme::F2,
        Scheme::F2Simple,
        Scheme::F3,
    ];

    /// Whether a key-selected second stage follows the first.
    pub fn has_stage2(self) -> bool {
        matches!(self, Scheme::F1 | Scheme::F2 | Scheme::F3)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::F0 => "F0",
            Scheme::F1 => "F1",
            Scheme::F2 => "F2",
            Scheme::F2Simple => "F2simple",
            Scheme::F3 => "F3",
        })
    }
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scheme::ALL
            .into_iter()
            .find(|x| x.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                format!("unknown scheme '{s}', expected one of F0, F1, F2, F2simple, F3")
            })
    }
}

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("infeasible configuration: {0}")]
    Infeasible(String),
    #[error("degenerate parameters: {0}; try a larger q1 or lambda")]
    Degenerate(String),
    #[error("cannot simulate: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Setting(#[from] SettingError),
    #[error(transparent)]
    Sss(#[from] SssError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Path(#[from] PathError),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DeriveOptions {
    pub psi: f64,
    pub delta: f64,
    pub epsilon: f64,
    /// Lower bound on q1 on top of the derived minimums. For F0, the number of intervals.
    pub q1_override: Option<u64>,
    /// Keep the q minimums that bound the gap overhead by Δ. These grow like
    /// 2^(λ/2) and are only reachable in simulation for small λ.
    pub rate_tightness: bool,
}

impl Default for DeriveOptions {
    fn default() -> Self {
        DeriveOptions {
            psi: 0.1,
            delta: 0.05,
            epsilon: 0.05,
            q1_override: None,
            rate_tightness: true,
        }
    }
}

/// Derived parameters. Counts are integral but kept as `f64`, since the
/// tightness minimums overflow any integer type at large λ.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProtocolParams {
    pub scheme: Scheme,
    pub config: MultipathConfig,
    pub psi: f64,
    pub delta_target: f64,
    pub epsilon_target: f64,
    pub rate_tightness: bool,
    pub n_prime: usize,
    pub q1: f64,
    pub q2: f64,
    pub g1: f64,
    pub g2: f64,
    pub r1: f64,
    pub r2: f64,
    pub k1: f64,
    pub m1: f64,
    pub k2: f64,
    pub m2: f64,
    /// Key bits per second-stage interval.
    pub w: u32,
    /// Bits per interval of the position report (F3).
    pub w1: u32,
    pub w2: u32,
    pub t_prime_a1: f64,
    pub t_prime_b1: f64,
    pub t_prime_e1: f64,
    pub t_prime_e2: f64,
    /// Stage-one catch the listening party needs: Bob in F2, Alice in F3.
    pub catch_threshold: f64,
    pub minimums: TrialMinimums,
    /// Total bits communicated by a run that does not abort.
    pub bits: f64,
    /// Message length in λ-bit elements.
    pub message_elements: f64,
    /// message_elements·λ / bits.
    pub rate: f64,
}

#[derive(Clone, Copy, Debug, Default)]
struct Stage {
    g: f64,
    r: f64,
    k: f64,
    m: f64,
}

/// Sharing over `m` shares of which the listener is guaranteed `held` and Eve
/// sees at most `leak` in expectation-plus-margin.
fn stage(q: f64, sent: f64, held: f64, leak: f64, d: f64) -> Stage {
    let g = (q * (sent + held - leak) / d).ceil();
    let r = (q * (held - leak) - 2.0 * g).floor();
    let k = (q * held).ceil() - 2.0 * g;
    Stage {
        g,
        r,
        k,
        m: q * sent,
    }
}

pub fn derive_params(
    config: &MultipathConfig,
    scheme: Scheme,
    opts: &DeriveOptions,
) -> Result<ProtocolParams, ProtocolError> {
    let DeriveOptions {
        psi,
        delta,
        epsilon,
        q1_override,
        rate_tightness,
    } = *opts;
    if !(psi > 0.0 && psi < 1.0) {
        return Err(ProtocolError::Infeasible(format!(
            "psi = {psi} must lie in (0, 1)"
        )));
    }
    if !(delta > 0.0 && delta < 1.0 && epsilon > 0.0 && epsilon < 1.0) {
        return Err(ProtocolError::Infeasible(
            "delta and epsilon must lie in (0, 1)".into(),
        ));
    }
    let MultipathConfig {
        n,
        t_a,
        t_b,
        t_e,
        lambda,
    } = *config;
    let t_ab = config.t_ab();
    let infeasible = |c: &str| Err(ProtocolError::Infeasible(format!("{scheme} requires {c}")));
    match scheme {
        Scheme::F0 | Scheme::F1 if t_e >= t_ab => return infeasible("t_e < t_ab"),
        Scheme::F2 if t_e >= t_b => return infeasible("t_e < t_b"),
        Scheme::F2Simple if t_b != n => return infeasible("t_b = n"),
        Scheme::F2Simple if t_e >= t_b => return infeasible("t_e < t_b"),
        Scheme::F3 if t_a == 0 || t_b == 0 || t_e >= n => {
            return infeasible("t_a, t_b > 0 and t_e < n")
        }
        _ => {}
    }
    let (nf, ta, tb, te, tabf, lam) = (
        n as f64,
        t_a as f64,
        t_b as f64,
        t_e as f64,
        t_ab as f64,
        lambda as f64,
    );
    let d = gap_denominator(lam);
    let n_prime = if scheme == Scheme::F2 {
        t_a.max(t_b)
    } else {
        n
    };
    let npf = n_prime as f64;

    let mut p = ProtocolParams {
        scheme,
        config: *config,
        psi,
        delta_target: delta,
        epsilon_target: epsilon,
        rate_tightness,
        n_prime,
        q1: 0.0,
        q2: 0.0,
        g1: 0.0,
        g2: 0.0,
        r1: 0.0,
        r2: 0.0,
        k1: 0.0,
        m1: 0.0,
        k2: 0.0,
        m2: 0.0,
        w: 0,
        w1: 0,
        w2: 0,
        t_prime_a1: 0.0,
        t_prime_b1: 0.0,
        t_prime_e1: 0.0,
        t_prime_e2: 0.0,
        catch_threshold: 0.0,
        minimums: TrialMinimums::default(),
        bits: 0.0,
        message_elements: 0.0,
        rate: 0.0,
    };

    if scheme == Scheme::F0 {
        let q = q1_override.unwrap_or(1).max(1) as f64;
        p.q1 = q;
        p.k1 = tabf;
        p.m1 = tabf;
        p.r1 = tabf - te;
        p.t_prime_e1 = te;
        p.bits = q * tabf * lam;
        p.message_elements = q * p.r1;
        p.rate = p.message_elements * lam / p.bits;
        return Ok(p);
    }

    let minimums = chernoff_trial_minimums(config, scheme, psi, delta, epsilon)?;
    p.minimums = minimums;

    // Stage one as a function of q1, with the per-interval sent/held/leaked counts.
    let (sent, held, leak) = match scheme {
        Scheme::F1 => (tabf, tabf, te),
        Scheme::F2 => {
            p.t_prime_b1 = (1.0 - psi) * ta * tb / npf;
            (ta, p.t_prime_b1, (1.0 + psi) * ta * te / npf)
        }
        Scheme::F2Simple => (ta, ta, (1.0 + psi) * ta * te / nf),
        Scheme::F3 => {
            p.t_prime_a1 = (1.0 - psi) * ta * tb / nf;
            (
                p.t_prime_a1,
                p.t_prime_a1,
                (1.0 + psi) * p.t_prime_a1 * te / nf,
            )
        }
        Scheme::F0 => unreachable!(),
    };
    p.t_prime_e1 = leak;
    let stage1 = |q: f64| {
        let mut s = stage(q, sent, held, leak, d);
        if scheme == Scheme::F3 {
            // the shares are the first ⌈q·t'_a1⌉ caught elements
            s.m = (q * held).ceil();
        }
        s
    };

    if scheme.has_stage2() {
        let codec = SubsetCodec::new(n, t_ab)?;
        p.w = codec.w();
        p.w2 = p.w;
        p.t_prime_e2 = (1.0 + psi) * tabf * te / nf;
    }
    if scheme == Scheme::F3 {
        let t = (p.t_prime_a1.ceil() as u64).min(n as u64);
        p.w1 = ceil_log2(&binomial_exact(n as u64, t)?) as u32;
    }
    let w = p.w as f64;
    let te2 = p.t_prime_e2;
    let q2_of = |s1: &Stage| (s1.r * lam / w).floor();
    let stage2 = |q2: f64| stage(q2, tabf, tabf, te2, d);
    let q2_min = minimums.q2(rate_tightness).ceil().max(1.0);
    let feasible = |q: f64| {
        let s1 = stage1(q);
        if s1.r <= 0.0 {
            return false;
        }
        if !scheme.has_stage2() {
            return true;
        }
        let q2 = q2_of(&s1);
        q2 >= q2_min && stage2(q2).r > 0.0
    };

    let mut q1 = minimums.q1(rate_tightness).ceil().max(1.0);
    if let Some(o) = q1_override {
        q1 = q1.max(o as f64);
    }
    if !feasible(q1) {
        let mut lo = q1;
        let mut hi = q1;
        let mut found = false;
        for _ in 0..200 {
            hi *= 2.0;
            if feasible(hi) {
                found = true;
                break;
            }
            lo = hi;
        }
        if !found {
            return Err(ProtocolError::Degenerate(format!(
                "{scheme} has no q1 with positive secret lengths (lambda = {lambda})"
            )));
        }
        while hi - lo > 1.0 && hi - lo > hi * 1e-15 {
            let mid = ((lo + hi) / 2.0).floor();
            if feasible(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        q1 = hi;
    }
    if scheme.has_stage2() && q1 < 2f64.powi(50) {
        let divides = |q: f64| (stage1(q).r * lam) % w == 0.0;
        if !divides(q1) {
            if let Some(q) = (1..=4096)
                .map(|i| q1 + i as f64)
                .find(|&q| feasible(q) && divides(q))
            {
                q1 = q;
            }
        }
    }

    let s1 = stage1(q1);
    p.q1 = q1;
    p.g1 = s1.g;
    p.r1 = s1.r;
    p.k1 = s1.k;
    p.m1 = s1.m;
    p.catch_threshold = match scheme {
        Scheme::F2 | Scheme::F3 => q1 * held,
        _ => 0.0,
    };
    if scheme.has_stage2() {
        let q2 = q2_of(&s1);
        let s2 = stage2(q2);
        p.q2 = q2;
        p.g2 = s2.g;
        p.r2 = s2.r;
        p.k2 = s2.k;
        p.m2 = s2.m;
        p.message_elements = s2.r;
    } else {
        p.message_elements = s1.r;
    }
    p.bits = match scheme {
        Scheme::F1 => (p.q1 + p.q2) * tabf * lam,
        Scheme::F2 => p.q1 * ta * lam + p.q2 * tabf * lam,
        Scheme::F2Simple => p.q1 * ta * lam,
        Scheme::F3 => p.q1 * tb * lam + p.q1 * p.w1 as f64 + p.q2 * tabf * lam,
        Scheme::F0 => unreachable!(),
    };
    p.rate = p.message_elements * lam / p.bits;
    Ok(p)
}

/// Reads `count` chunks of `w` bits from the big-endian bit string formed by
/// `symbols`, each `symbol_bits` wide.
pub fn key_chunks(symbols: &[u128], symbol_bits: u32, w: u32, count: usize) -> Vec<u128> {
    let sb = symbol_bits as usize;
    assert!(
        count * w as usize <= symbols.len() * sb,
        "not enough key bits"
    );
    (0..count)
        .map(|c| {
            (0..w as usize).fold(0u128, |acc, b| {
                let pos = c * w as usize + b;
                acc << 1 | (symbols[pos / sb] >> (sb - 1 - pos % sb)) & 1
            })
        })
        .collect()
}

/// Events under which the secrecy argument gives no guarantee.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct BadEvents {
    pub eve_over_threshold_stage1: bool,
    pub eve_over_threshold_stage2: bool,
    /// The listening party caught too few stage-one shares and aborted.
    pub under_threshold: bool,
}

#[derive(Clone, Debug)]
pub struct PmtResult {
    pub message_sent: Vec<u128>,
    pub message_received: Vec<u128>,
    pub aborted: bool,
    pub eve_view: PartyView,
    pub bits_communicated: u128,
    pub bad_events: BadEvents,
    /// Stage-one and stage-two shares Eve read.
    pub eve_shares: (usize, usize),
    /// F3 only: whether Alice and Bob derived the same key.
    pub keys_agree: Option<bool>,
    pub transcript: Option<Transcript>,
}

impl PmtResult {
    pub fn failed(&self) -> bool {
        self.message_sent != self.message_received
    }
}

#[derive(Clone, Copy, Debug, Default)]
struct Counts {
    q1: usize,
    q2: usize,
    m1: usize,
    t_ab: usize,
}

/// Prepared sharing schemes and codecs for repeated runs of one parameter set.
pub struct Simulation {
    params: ProtocolParams,
    field: Field,
    p: usize,
    counts: Counts,
    stage1: RampScheme,
    stage2: Option<RampScheme>,
    codec: Option<SubsetCodec>,
}

/// Largest count the simulator accepts.
const MAX_COUNT: f64 = (1u64 << 32) as f64;
/// Largest number of field symbols in one sharing.
const MAX_SYMBOLS: usize = 1 << 24;

fn count(name: &str, x: f64) -> Result<usize, ProtocolError> {
    if x.is_finite() && (0.0..=MAX_COUNT).contains(&x) {
        Ok(x as usize)
    } else {
        Err(ProtocolError::Unsupported(format!(
            "{name} = {x:e} is too large to simulate; lower lambda or disable rate_tightness"
        )))
    }
}

fn ramp(
    field: &Field,
    k: usize,
    r: usize,
    g: usize,
    m: usize,
    p: usize,
) -> Result<RampScheme, ProtocolError> {
    let params = QuasiRampParams::new(k, r, g, m)?.scaled(p);
    if params.m + params.r > MAX_SYMBOLS {
        return Err(ProtocolError::Unsupported(format!(
            "sharing over {} symbols is too large",
            params.m
        )));
    }
    Ok(RampScheme::new(field.clone(), params)?)
}

impl Simulation {
    /// `field` is the simulation field; its width must divide λ.
    pub fn new(params: &ProtocolParams, field: Field) -> Result<Self, ProtocolError> {
        let lambda = params.config.lambda;
        let lf = field.lambda();
        if !lambda.is_multiple_of(lf) {
            return Err(ProtocolError::Unsupported(format!(
                "lambda_field = {lf} must divide lambda = {lambda}"
            )));
        }
        let p = (lambda / lf) as usize;
        let cfg = params.config;
        let t_ab = cfg.t_ab();
        let counts = Counts {
            q1: count("q1", params.q1)?,
            q2: count("q2", params.q2)?,
            m1: count("m1", params.m1)?,
            t_ab,
        };
        let (k1, r1, g1) = (
            count("k1", params.k1)?,
            count("r1", params.r1)?,
            count("g1", params.g1)?,
        );
        let stage1 = ramp(&field, k1, r1, g1, counts.m1, p)?;
        let (stage2, codec) = if params.scheme.has_stage2() {
            let (k2, r2, g2, m2) = (
                count("k2", params.k2)?,
                count("r2", params.r2)?,
                count("g2", params.g2)?,
                count("m2", params.m2)?,
            );
            (
                Some(ramp(&field, k2, r2, g2, m2, p)?),
                Some(SubsetCodec::new(cfg.n, t_ab)?),
            )
        } else {
            (None, None)
        };
        Ok(Simulation {
            params: params.clone(),
            field,
            p,
            counts,
            stage1,
            stage2,
            codec,
        })
    }

    pub fn params(&self) -> &ProtocolParams {
        &self.params
    }

    pub fn field(&self) -> &Field {
        &self.field
    }

    /// Symbols per share slot.
    pub fn symbols_per_slot(&self) -> usize {
        self.p
    }

    /// Message length in simulation-field symbols.
    pub fn message_symbols(&self) -> usize {
        self.params.message_elements as usize * self.p
    }

    pub fn random_message<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<u128> {
        (0..self.message_symbols())
            .map(|_| self.field.random(rng))
            .collect()
    }

    fn random_symbols<R: Rng + ?Sized>(&self, len: usize, rng: &mut R) -> Vec<u128> {
        (0..len).map(|_| self.field.random(rng)).collect()
    }

    /// Runs the scheme once.
    pub fn run<R: Rng + ?Sized>(
        &self,
        message: &[u128],
        eve: &mut dyn EveStrategy,
        rng: &mut R,
        record: bool,
    ) -> Result<PmtResult, ProtocolError> {
        if message.len() != self.message_symbols() {
            return Err(SssError::SecretLength {
                expected: self.message_symbols(),
                got: message.len(),
            }
            .into());
        }
        let cfg = self.params.config;
        let mut ch = Channel::new(cfg, self.p, self.field.lambda(), eve, record);
        let mut out = Outcome::default();
        let received = match self.params.scheme {
            Scheme::F0 => self.run_f0(&mut ch, message, rng, &mut out)?,
            Scheme::F1 => self.run_f1(&mut ch, message, rng, &mut out)?,
            Scheme::F2 => self.run_f2(&mut ch, message, rng, &mut out)?,
            Scheme::F2Simple => self.run_f2simple(&mut ch, message, rng, &mut out)?,
            Scheme::F3 => self.run_f3(&mut ch, message, rng, &mut out)?,
        };
        let message_received = match received {
            Some(m) if !out.aborted => m,
            _ => self.random_symbols(message.len(), rng),
        };
        let bits = ch.bits();
        let (eve_view, transcript) = ch.into_parts();
        let (e1, e2) = out.eve;
        let bad_events = BadEvents {
            eve_over_threshold_stage1: e1 as f64 > self.params.q1 * self.params.t_prime_e1
                && self.params.scheme != Scheme::F0,
            eve_over_threshold_stage2: e2 as f64 > self.params.q2 * self.params.t_prime_e2,
            under_threshold: out.aborted,
        };
        Ok(PmtResult {
            message_sent: message.to_vec(),
            message_received,
            aborted: out.aborted,
            eve_view,
            bits_communicated: bits,
            bad_events,
            eve_shares: out.eve,
            keys_agree: out.keys_agree,
            transcript,
        })
    }

    fn slots<'a>(&self, flat: &'a [u128], first: usize, len: usize) -> &'a [u128] {
        &flat[first * self.p..(first + len) * self.p]
    }

    fn place(&self, shares: &mut ShareVector, slot: usize, symbols: &[u128]) {
        for (j, &s) in symbols.iter().enumerate() {
            shares.0[slot * self.p + j] = Some(s);
        }
    }

    fn run_f0<R: Rng + ?Sized>(
        &self,
        ch: &mut Channel,
        message: &[u128],
        rng: &mut R,
        out: &mut Outcome,
    ) -> Result<Option<Vec<u128>>, ProtocolError> {
        let cfg = self.params.config;
        let t0 = PathSubset::prefix(cfg.n, self.counts.t_ab)?;
        let chunk = self.stage1.params().r;
        let mut received = Vec::with_capacity(message.len());
        for secret in message.chunks(chunk) {
            let flat = flatten(&self.stage1.share(secret, rng)?);
            let d = ch.transmit(Party::Alice, &t0, &t0, &flat)?;
            out.eve.0 += count_seen(&t0, &d.eve_paths);
            let mut shares = ShareVector(vec![None; flat.len()]);
            for &(path, symbols) in &d.received {
                self.place(&mut shares, path, symbols);
            }
            match self.stage1.reconstruct(&shares)? {
                Some(s) => received.extend(s),
                None => return Ok(None),
            }
        }
        Ok(Some(received))
    }

    fn run_f1<R: Rng + ?Sized>(
        &self,
        ch: &mut Channel,
        message: &[u128],
        rng: &mut R,
        out: &mut Outcome,
    ) -> Result<Option<Vec<u128>>, ProtocolError> {
        let t_ab = self.counts.t_ab;
        let t0 = PathSubset::prefix(self.params.config.n, t_ab)?;
        let key = self.random_symbols(self.stage1.params().r, rng);
        let flat = flatten(&self.stage1.share(&key, rng)?);
        let mut shares = ShareVector(vec![None; flat.len()]);
        for i in 0..self.counts.q1 {
            let d = ch.transmit(Party::Alice, &t0, &t0, self.slots(&flat, i * t_ab, t_ab))?;
            out.eve.0 += count_seen(&t0, &d.eve_paths);
            for &(path, symbols) in &d.received {
                self.place(&mut shares, i * t_ab + path, symbols);
            }
        }
        let Some(bob_key) = self.stage1.reconstruct(&shares)? else {
            return Ok(None);
        };
        self.run_stage2(ch, &key, &bob_key, message, rng, out)
    }

    fn run_f2<R: Rng + ?Sized>(
        &self,
        ch: &mut Channel,
        message: &[u128],
        rng: &mut R,
        out: &mut Outcome,
    ) -> Result<Option<Vec<u128>>, ProtocolError> {
        let cfg = self.params.config;
        let np = self.params.n_prime;
        let all = PathSubset::prefix(cfg.n, np)?;
        // the side with budget n' covers every fixed path
        let pick = |t: usize, rng: &mut R| -> Result<PathSubset, ProtocolError> {
            if t == np {
                Ok(all.clone())
            } else {
                Ok(PathSubset::new(
                    cfg.n,
                    random_subset(np, t, rng)?.indices().to_vec(),
                )?)
            }
        };
        let alice_covers = cfg.t_a == np;
        let key = self.random_symbols(self.stage1.params().r, rng);
        let flat = flatten(&self.stage1.share(&key, rng)?);
        let mut shares = ShareVector(vec![None; flat.len()]);
        for i in 0..self.counts.q1 {
            let a = pick(cfg.t_a, rng)?;
            let b = pick(cfg.t_b, rng)?;
            let d = ch.transmit(
                Party::Alice,
                &a,
                &b,
                self.slots(&flat, i * cfg.t_a, cfg.t_a),
            )?;
            out.eve.0 += count_seen(&a, &d.eve_paths);
            // Bob either knows Alice's set (all fixed paths) or hears all of it
            for (rank, &(path, symbols)) in d.received.iter().enumerate() {
                let pos = if alice_covers { path } else { rank };
                self.place(&mut shares, i * cfg.t_a + pos, symbols);
            }
        }
        let bob_key = match self.stage1.reconstruct(&shares)? {
            Some(k) => k,
            None => {
                out.aborted = true;
                self.random_symbols(key.len(), rng)
            }
        };
        self.run_stage2(ch, &key, &bob_key, message, rng, out)
    }

    fn run_f2simple<R: Rng + ?Sized>(
        &self,
        ch: &mut Channel,
        message: &[u128],
        rng: &mut R,
        out: &mut Outcome,
    ) -> Result<Option<Vec<u128>>, ProtocolError> {
        let cfg = self.params.config;
        let everything = PathSubset::prefix(cfg.n, cfg.n)?;
        let flat = flatten(&self.stage1.share(message, rng)?);
        let mut shares = ShareVector(vec![None; flat.len()]);
        for i in 0..self.counts.q1 {
            let a = random_subset(cfg.n, cfg.t_a, rng)?;
            let d = ch.transmit(
                Party::Alice,
                &a,
                &everything,
                self.slots(&flat, i * cfg.t_a, cfg.t_a),
            )?;
            out.eve.0 += count_seen(&a, &d.eve_paths);
            for (rank, &(_, symbols)) in d.received.iter().enumerate() {
                self.place(&mut shares, i * cfg.t_a + rank, symbols);
            }
        }
        let received = self.stage1.reconstruct(&shares)?;
        out.aborted = received.is_none();
        Ok(received)
    }

    fn run_f3<R: Rng + ?Sized>(
        &self,
        ch: &mut Channel,
        message: &[u128],
        rng: &mut R,
        out: &mut Outcome,
    ) -> Result<Option<Vec<u128>>, ProtocolError> {
        let cfg = self.params.config;
        let p = self.p;
        let mut bob_sent: Vec<(PathSubset, Vec<u128>)> = Vec::with_capacity(self.counts.q1);
        // (interval, path, symbols, seen by Eve)
        let mut caught: Vec<(usize, usize, Vec<u128>, bool)> = Vec::new();
        for i in 0..self.counts.q1 {
            let b = random_subset(cfg.n, cfg.t_b, rng)?;
            let a = random_subset(cfg.n, cfg.t_a, rng)?;
            let payload = self.random_symbols(cfg.t_b * p, rng);
            let d = ch.transmit(Party::Bob, &b, &a, &payload)?;
            for &(path, symbols) in &d.received {
                caught.push((i, path, symbols.to_vec(), d.eve_paths.contains(path)));
            }
            bob_sent.push((b, payload));
        }
        let needed = self.counts.m1;
        if caught.len() < needed {
            ch.publish(Party::Alice, 1, "abort".into());
            out.aborted = true;
            return Ok(None);
        }
        caught.truncate(needed);
        out.eve.0 = caught.iter().filter(|c| c.3).count();
        let positions: Vec<String> = caught
            .iter()
            .map(|(i, path, ..)| format!("{i}:{path}"))
            .collect();
        ch.publish(
            Party::Alice,
            (self.params.q1 * self.params.w1 as f64) as u64,
            positions.join(";"),
        );
        let alice_shares = ShareVector(
            caught
                .iter()
                .flat_map(|c| c.2.iter().copied().map(Some))
                .collect(),
        );
        let bob_shares = ShareVector(
            caught
                .iter()
                .flat_map(|&(i, path, ..)| {
                    let (set, payload) = &bob_sent[i];
                    let pos = set
                        .position(path)
                        .expect("Alice reports only paths Bob used");
                    payload[pos * p..(pos + 1) * p].iter().copied().map(Some)
                })
                .collect(),
        );
        let alice_key = self
            .stage1
            .reconstruct(&alice_shares)?
            .expect("all shares present");
        let bob_key = self
            .stage1
            .reconstruct(&bob_shares)?
            .expect("all shares present");
        out.keys_agree = Some(alice_key == bob_key);
        self.run_stage2(ch, &alice_key, &bob_key, message, rng, out)
    }

    /// Alice shares the message over key-selected t_ab-subsets; Bob listens on
    /// the subsets his own copy of the key selects.
    fn run_stage2<R: Rng + ?Sized>(
        &self,
        ch: &mut Channel,
        alice_key: &[u128],
        bob_key: &[u128],
        message: &[u128],
        rng: &mut R,
        out: &mut Outcome,
    ) -> Result<Option<Vec<u128>>, ProtocolError> {
        let (Some(scheme), Some(codec)) = (&self.stage2, &self.codec) else {
            unreachable!("stage two is prepared for every two-stage scheme")
        };
        let (q2, t_ab, w, sb) = (
            self.counts.q2,
            self.counts.t_ab,
            self.params.w,
            self.field.lambda(),
        );
        let chunks_a = key_chunks(alice_key, sb, w, q2);
        let chunks_b = key_chunks(bob_key, sb, w, q2);
        let flat = flatten(&scheme.share(message, rng)?);
        let mut shares = ShareVector(vec![None; flat.len()]);
        for i in 0..q2 {
            let a = codec.key_bits_to_subset(chunks_a[i]);
            let b = codec.key_bits_to_subset(chunks_b[i]);
            let d = ch.transmit(Party::Alice, &a, &b, self.slots(&flat, i * t_ab, t_ab))?;
            out.eve.1 += count_seen(&a, &d.eve_paths);
            for &(path, symbols) in &d.received {
                let pos = b.position(path).expect("received paths are in Bob's set");
                self.place(&mut shares, i * t_ab + pos, symbols);
            }
        }
        Ok(scheme.reconstruct(&shares)?)
    }
}

#[derive(Default)]
struct Outcome {
    aborted: bool,
    eve: (usize, usize),
    keys_agree: Option<bool>,
}

fn flatten(shares: &ShareVector) -> Vec<u128> {
    shares
        .0
        .iter()
        .map(|s| s.expect("fresh sharings are complete"))
        .collect()
}

fn count_seen(sender: &PathSubset, eve: &PathSubset) -> usize {
    eve.indices()
        .iter()
        .filter(|&&p| sender.contains(p))
        .count()
}

fn run_checked<R: Rng + ?Sized>(
    expected: Scheme,
    params: &ProtocolParams,
    field: Field,
    message: &[u128],
    eve: &mut dyn EveStrategy,
    rng: &mut R,
) -> Result<PmtResult, ProtocolError> {
    if params.scheme != expected {
        return Err(ProtocolError::Unsupported(format!(
            "parameters are for {}, not {expected}",
            params.scheme
        )));
    }
    Simulation::new(params, field)?.run(message, eve, rng, false)
}

/// One run of the fixed-path perfect scheme.
pub fn run_f0<R: Rng + ?Sized>(
    params: &ProtocolParams,
    field: Field,
    message: &[u128],
    eve: &mut dyn EveStrategy,
    rng: &mut R,
) -> Result<PmtResult, ProtocolError> {
    run_checked(Scheme::F0, params, field, message, eve, rng)
}

/// One run of the fixed-path key transport scheme.
pub fn run_f1<R: Rng + ?Sized>(
    params: &ProtocolParams,
    field: Field,
    message: &[u128],
    eve: &mut dyn EveStrategy,
    rng: &mut R,
) -> Result<PmtResult, ProtocolError> {
    run_checked(Scheme::F1, params, field, message, eve, rng)
}

/// One run of the random-path one-way scheme.
pub fn run_f2<R: Rng + ?Sized>(
    params: &ProtocolParams,
    field: Field,
    message: &[u128],
    eve: &mut dyn EveStrategy,
    rng: &mut R,
) -> Result<PmtResult, ProtocolError> {
    run_checked(Scheme::F2, params, field, message, eve, rng)
}

/// One run of the single-stage scheme for a receiver that hears every path.
pub fn run_f2simple<R: Rng + ?Sized>(
    params: &ProtocolParams,
    field: Field,
    message: &[u128],
    eve: &mut dyn EveStrategy,
    rng: &mut R,
) -> Result<PmtResult, ProtocolError> {
    run_checked(Scheme::F2Simple, params, field, message, eve, rng)
}

/// One run of the two-round key agreement scheme.
pub fn run_f3<R: Rng + ?Sized>(
    params: &ProtocolParams,
    field: Field,
    message: &[u128],
    eve: &mut dyn EveStrategy,
    rng: &mut R,
) -> Result<PmtResult, ProtocolError> {
    run_checked(Scheme::F3, params, field, message, eve, rng)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum EveSpec {
    /// A fresh uniform t_e-subset every interval.
    Uniform,
    /// The same paths every interval.
    Static(Vec<usize>),
}

impl EveSpec {
    pub fn build(
        &self,
        config: &MultipathConfig,
        seed: u64,
    ) -> Result<Box<dyn EveStrategy>, ProtocolError> {
        Ok(match self {
            EveSpec::Uniform => Box::new(UniformEve::new(seed)),
            EveSpec::Static(paths) => {
                if paths.len() > config.t_e {
                    return Err(ProtocolError::Infeasible(format!(
                        "static eve taps {} paths, budget t_e = {}",
                        paths.len(),
                        config.t_e
                    )));
                }
                Box::new(StaticEve::new(PathSubset::new(config.n, paths.clone())?))
            }
        })
    }
}

impl FromStr for EveSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "uniform" {
            return Ok(EveSpec::Uniform);
        }
        let list = s
            .strip_prefix("static:")
            .ok_or_else(|| format!("unknown eve strategy '{s}'"))?;
        let paths = list
            .split(',')
            .filter(|x| !x.trim().is_empty())
            .map(|x| {
                x.trim()
                    .parse::<usize>()
                    .map_err(|e| format!("bad path index '{x}': {e}"))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(EveSpec::Static(paths))
    }
}

/// Per-trial summary.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct TrialOutcome {
    pub trial: u64,
    pub aborted: bool,
    pub failed: bool,
    pub bad_event_stage1: bool,
    pub bad_event_stage2: bool,
    pub bits_communicated: u128,
    pub keys_agree: Option<bool>,
}

impl Simulation {
    /// Runs trial `index` with its own seed; the message, the parties and Eve
    /// all derive their randomness from it.
    pub fn run_trial(
        &self,
        eve: &EveSpec,
        master_seed: u64,
        index: u64,
        record: bool,
    ) -> Result<(TrialOutcome, Option<Transcript>), ProtocolError> {
        let seed = trial_seed(master_seed, index);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut eve = eve.build(&self.params.config, seed)?;
        let message = self.random_message(&mut rng);
        let r = self.run(&message, eve.as_mut(), &mut rng, record)?;
        let outcome = TrialOutcome {
            trial: index,
            aborted: r.aborted,
            failed: r.failed(),
            bad_event_stage1: r.bad_events.eve_over_threshold_stage1,
            bad_event_stage2: r.bad_events.eve_over_threshold_stage2,
            bits_communicated: r.bits_communicated,
            keys_agree: r.keys_agree,
        };
        Ok((outcome, r.transcript))
    }
}

/// Worker count from `PMTLAB_THREADS`, if set to a positive integer.
pub fn thread_cap() -> Option<usize> {
    std::env::var("PMTLAB_THREADS")
        .ok()?
        .trim()
        .parse()
        .ok()
        .filter(|&t: &usize| t > 0)
}

/// Runs `trials` seeded trials in parallel. Results are in trial order; the
/// transcript of trial 0 is returned when `record_first` is set.
pub fn run_trials(
    sim: &Simulation,
    eve: &EveSpec,
    master_seed: u64,
    trials: u64,
    record_first: bool,
) -> Result<(Vec<TrialOutcome>, Option<Transcript>), ProtocolError> {
    let work = || {
        (0..trials)
            .into_par_iter()
            .map(|i| sim.run_trial(eve, master_seed, i, record_first && i == 0))
            .collect::<Result<Vec<_>, _>>()
    };
    let results = match thread_cap() {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| ProtocolError::Unsupported(format!("thread pool: {e}")))?
            .install(work)?,
        None => work()?,
    };
    let mut transcript = None;
    let outcomes = results
        .into_iter()
        .map(|(o, t)| {
            if t.is_some() {
                transcript = t;
            }
            o
        })
        .collect();
    Ok((outcomes, transcript))
}

/// Exact worst-case statistical distance between Eve's single-interval views
/// of any two messages under the fixed-path perfect scheme. Eve taps the worst
/// t_e of the shared paths. Needs λ ≤ 24/t_ab.
pub fn f0_exhaustive_secrecy(
    config: &MultipathConfig,
    field: Field,
) -> Result<Ratio<u128>, ProtocolError> {
    if field.lambda() != config.lambda {
        return Err(ProtocolError::Unsupported(
            "exhaustive check runs with lambda_field = lambda".into(),
        ));
    }
    let t_ab = config.t_ab();
    if config.t_e >= t_ab {
        return Err(ProtocolError::Infeasible("F0 requires t_e < t_ab".into()));
    }
    let scheme = RampScheme::new(field, QuasiRampParams::ramp(t_ab, t_ab - config.t_e, t_ab)?)?;
    let codec = SubsetCodec::new(t_ab, config.t_e)?;
    let mut worst = Ratio::from_integer(0u128);
    for rank in 0..codec.count() {
        let taps = codec.rank_to_subset(rank)?;
        worst = worst.max(secrecy_distance_exhaustive(&scheme, taps.indices())?);
    }
    Ok(worst)
}
