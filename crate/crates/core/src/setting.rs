//! The multipath setting: configuration, eavesdropper strategies, and a
//! seeded interval-by-interval channel simulator with transcript recording.

use std::fmt;
use std::io::{self, Write};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::ToPrimitive;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::paths::{binomial_exact, random_subset, PathError, PathSubset};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SettingError {
    #[error("invalid multipath configuration: {0}")]
    InvalidConfig(String),
    #[error("{party} used {used} paths, budget is {budget}")]
    Budget {
        party: String,
        used: usize,
        budget: usize,
    },
    #[error("payload has {got} symbols, expected {expected}")]
    Payload { expected: usize, got: usize },
    #[error(transparent)]
    Path(#[from] PathError),
}

/// (n, t_a, t_b, t_e, λ): paths, per-interval access budgets, and bits per
/// path per interval.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MultipathConfig {
    pub n: usize,
    pub t_a: usize,
    pub t_b: usize,
    pub t_e: usize,
    pub lambda: u32,
}

impl MultipathConfig {
    pub fn new(
        n: usize,
        t_a: usize,
        t_b: usize,
        t_e: usize,
        lambda: u32,
    ) -> Result<Self, SettingError> {
        if n == 0 {
            return Err(SettingError::InvalidConfig("n must be positive".into()));
        }
        for (name, t) in [("t_a", t_a), ("t_b", t_b), ("t_e", t_e)] {
            if t > n {
                return Err(SettingError::InvalidConfig(format!(
                    "{name} = {t} exceeds n = {n}"
                )));
            }
        }
        if lambda == 0 {
            return Err(SettingError::InvalidConfig(
                "lambda must be positive".into(),
            ));
        }
        Ok(MultipathConfig {
            n,
            t_a,
            t_b,
            t_e,
            lambda,
        })
    }

    pub fn t_ab(&self) -> usize {
        self.t_a.min(self.t_b)
    }

    /// Budget of the given party.
    pub fn budget(&self, party: Party) -> usize {
        match party {
            Party::Alice => self.t_a,
            Party::Bob => self.t_b,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Party {
    Alice,
    Bob,
}

impl Party {
    pub fn other(self) -> Party {
        match self {
            Party::Alice => Party::Bob,
            Party::Bob => Party::Alice,
        }
    }
}

impl fmt::Display for Party {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Party::Alice => "alice",
            Party::Bob => "bob",
        })
    }
}

/// Exact P[X = j] for X ~ Hypergeometric(population, successes, draws).
pub fn hypergeometric_pmf_exact(
    population: u64,
    successes: u64,
    draws: u64,
    j: u64,
) -> Result<BigRational, SettingError> {
    if successes > population || draws > population {
        return Err(SettingError::InvalidConfig(format!(
            "hypergeometric parameters out of range: N={population}, K={successes}, n={draws}"
        )));
    }
    if j > successes || j > draws || draws - j > population - successes {
        return Ok(BigRational::from_integer(BigInt::from(0)));
    }
    let num = binomial_exact(successes, j)? * binomial_exact(population - successes, draws - j)?;
    let den = binomial_exact(population, draws)?;
    Ok(BigRational::new(num.into(), den.into()))
}

pub fn hypergeometric_pmf(
    population: u64,
    successes: u64,
    draws: u64,
    j: u64,
) -> Result<f64, SettingError> {
    Ok(hypergeometric_pmf_exact(population, successes, draws, j)?
        .to_f64()
        .unwrap_or(0.0))
}

/// Per-trial seed: SplitMix64 finalizer applied to `master + (index + 1)·φ`,
/// with φ = 0x9E3779B97F4A7C15.
pub fn trial_seed(master: u64, index: u64) -> u64 {
    let mut z = master.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A message on the authenticated public channel. Eve reads all of them.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PublicMessage {
    /// Index of the next interval at the time of sending.
    pub interval: u64,
    pub sender: Party,
    /// Bits charged to the communication cost.
    pub bits: u64,
    pub content: String,
}

/// Eve picks her paths for an interval before any payload is sent.
pub trait EveStrategy: Send {
    fn choose_paths(
        &mut self,
        interval: u64,
        public: &[PublicMessage],
        n: usize,
        t_e: usize,
    ) -> PathSubset;
}

/// Reads the same paths every interval.
pub struct StaticEve {
    paths: PathSubset,
}

impl StaticEve {
    pub fn new(paths: PathSubset) -> Self {
        StaticEve { paths }
    }
}

impl EveStrategy for StaticEve {
    fn choose_paths(&mut self, _: u64, _: &[PublicMessage], _: usize, _: usize) -> PathSubset {
        self.paths.clone()
    }
}

/// Reads a fresh uniform t_e-subset every interval.
pub struct UniformEve {
    rng: ChaCha8Rng,
}

impl UniformEve {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        UniformEve { rng }
    }
}

impl EveStrategy for UniformEve {
    fn choose_paths(&mut self, _: u64, _: &[PublicMessage], n: usize, t_e: usize) -> PathSubset {
        random_subset(n, t_e, &mut self.rng).expect("t_e ≤ n is checked by the config")
    }
}

/// Everything a party observed: symbols on the paths it read, and all public
/// messages. Slot `i` has symbols `symbols[i·p .. (i+1)·p]`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PartyView {
    pub symbols_per_slot: usize,
    pub slots: Vec<(u64, usize)>,
    pub symbols: Vec<u128>,
    pub public: Vec<PublicMessage>,
}

impl PartyView {
    pub fn slot_count(&self) -> usize {
        self.slots.len()
    }
}

/// One interval as recorded in a transcript.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IntervalRecord {
    pub index: u64,
    pub sender: Party,
    pub sender_paths: PathSubset,
    pub receiver_paths: PathSubset,
    pub eve_paths: PathSubset,
    /// One slot of symbols per sender path, in path order.
    pub payload: Vec<u128>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TranscriptRow {
    Interval(IntervalRecord),
    Public(PublicMessage),
}

/// Full record of one protocol run.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Transcript {
    pub symbols_per_slot: usize,
    pub hex_digits: usize,
    pub rows: Vec<TranscriptRow>,
}

impl Transcript {
    /// CSV with header `interval,sender,paths_sender,paths_receiver,paths_eve,payload_hex`.
    /// Path lists and slots are `;`-separated; the symbols of one slot are
    /// concatenated as fixed-width hex. Public messages appear with sender
    /// `public-<party>`, empty path columns, and their content in the last column.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(
            out,
            "interval,sender,paths_sender,paths_receiver,paths_eve,payload_hex"
        )?;
        let p = self.symbols_per_slot.max(1);
        for row in &self.rows {
            match row {
                TranscriptRow::Interval(r) => {
                    let slots: Vec<String> = r
                        .payload
                        .chunks(p)
                        .map(|slot| {
                            slot.iter()
                                .map(|s| format!("{:0w$x}", s, w = self.hex_digits))
                                .collect()
                        })
                        .collect();
                    writeln!(
                        out,
                        "{},{},{},{},{},{}",
                        r.index,
                        r.sender,
                        r.sender_paths.to_field_string(),
                        r.receiver_paths.to_field_string(),
                        r.eve_paths.to_field_string(),
                        slots.join(";")
                    )?;
                }
                TranscriptRow::Public(m) => {
                    writeln!(out, "{},public-{},,,,{}", m.interval, m.sender, m.content)?;
                }
            }
        }
        Ok(())
    }
}

/// What came out of one interval.
pub struct Delivery<'p> {
    /// (path, slot symbols) for every sender path the receiver read.
    pub received: Vec<(usize, &'p [u128])>,
    /// Eve's paths in this interval. For measurement only; no party sees this.
    pub eve_paths: PathSubset,
}

/// Drives one protocol run interval by interval.
pub struct Channel<'e> {
    config: MultipathConfig,
    symbols_per_slot: usize,
    eve: &'e mut dyn EveStrategy,
    interval: u64,
    bits: u128,
    public: Vec<PublicMessage>,
    eve_view: PartyView,
    transcript: Option<Transcript>,
}

impl<'e> Channel<'e> {
    /// `symbol_bits` sets the hex width of transcript payloads.
    pub fn new(
        config: MultipathConfig,
        symbols_per_slot: usize,
        symbol_bits: u32,
        eve: &'e mut dyn EveStrategy,
        record: bool,
    ) -> Self {
        let transcript = record.then(|| Transcript {
            symbols_per_slot,
            hex_digits: symbol_bits.div_ceil(4) as usize,
            rows: Vec::new(),
        });
        Channel {
            config,
            symbols_per_slot,
            eve,
            interval: 0,
            bits: 0,
            public: Vec::new(),
            eve_view: PartyView {
                symbols_per_slot,
                ..PartyView::default()
            },
            transcript,
        }
    }

    pub fn config(&self) -> &MultipathConfig {
        &self.config
    }

    /// Intervals used so far.
    pub fn intervals(&self) -> u64 {
        self.interval
    }

    /// Bits sent so far: λ per used path per interval plus public messages.
    pub fn bits(&self) -> u128 {
        self.bits
    }

    pub fn eve_view(&self) -> &PartyView {
        &self.eve_view
    }

    pub fn into_parts(self) -> (PartyView, Option<Transcript>) {
        (self.eve_view, self.transcript)
    }

    /// Runs one interval. The sender writes one slot per path of `sender_paths`.
    pub fn transmit<'p>(
        &mut self,
        sender: Party,
        sender_paths: &PathSubset,
        receiver_paths: &PathSubset,
        payload: &'p [u128],
    ) -> Result<Delivery<'p>, SettingError> {
        let p = self.symbols_per_slot;
        let cfg = self.config;
        for (party, set) in [(sender, sender_paths), (sender.other(), receiver_paths)] {
            if set.len() > cfg.budget(party) || set.n() != cfg.n {
                return Err(SettingError::Budget {
                    party: party.to_string(),
                    used: set.len(),
                    budget: cfg.budget(party),
                });
            }
        }
        if payload.len() != sender_paths.len() * p {
            return Err(SettingError::Payload {
                expected: sender_paths.len() * p,
                got: payload.len(),
            });
        }
        let eve_paths = self
            .eve
            .choose_paths(self.interval, &self.public, cfg.n, cfg.t_e);
        if eve_paths.len() > cfg.t_e || eve_paths.n() != cfg.n {
            return Err(SettingError::Budget {
                party: "eve".into(),
                used: eve_paths.len(),
                budget: cfg.t_e,
            });
        }
        let mut received = Vec::with_capacity(receiver_paths.len());
        for (slot, &path) in sender_paths.indices().iter().enumerate() {
            let symbols = &payload[slot * p..(slot + 1) * p];
            if receiver_paths.contains(path) {
                received.push((path, symbols));
            }
            if eve_paths.contains(path) {
                self.eve_view.slots.push((self.interval, path));
                self.eve_view.symbols.extend_from_slice(symbols);
            }
        }
        self.bits += sender_paths.len() as u128 * cfg.lambda as u128;
        if let Some(t) = &mut self.transcript {
            t.rows.push(TranscriptRow::Interval(IntervalRecord {
                index: self.interval,
                sender,
                sender_paths: sender_paths.clone(),
                receiver_paths: receiver_paths.clone(),
                eve_paths: eve_paths.clone(),
                payload: payload.to_vec(),
            }));
        }
        self.interval += 1;
        Ok(Delivery {
            received,
            eve_paths,
        })
    }

    /// Sends a message on the public channel; its bits count toward the cost.
    pub fn publish(&mut self, sender: Party, bits: u64, content: String) {
        let msg = PublicMessage {
            interval: self.interval,
            sender,
            bits,
            content,
        };
        self.bits += bits as u128;
        if let Some(t) = &mut self.transcript {
            t.rows.push(TranscriptRow::Public(msg.clone()));
        }
        self.eve_view.public.push(msg.clone());
        self.public.push(msg);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hypergeometric_values() {
        let p = hypergeometric_pmf_exact(10, 2, 8, 2).unwrap();
        assert_eq!(p, BigRational::new(28.into(), 45.into()));
        assert_eq!(hypergeometric_pmf(10, 2, 8, 3).unwrap(), 0.0);
        let total: f64 = (0..=3)
            .map(|j| hypergeometric_pmf(12, 6, 3, j).unwrap())
            .sum();
        assert!((total - 1.0).abs() < 1e-15);
        assert!(hypergeometric_pmf(5, 6, 1, 0).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(MultipathConfig::new(0, 0, 0, 0, 8).is_err());
        assert!(MultipathConfig::new(4, 5, 1, 1, 8).is_err());
        let c = MultipathConfig::new(12, 4, 8, 5, 16).unwrap();
        assert_eq!(c.t_ab(), 4);
    }

    #[test]
    fn seeds_differ_and_repeat() {
        assert_eq!(trial_seed(1, 2), trial_seed(1, 2));
        assert_ne!(trial_seed(1, 2), trial_seed(1, 3));
        assert_ne!(trial_seed(1, 2), trial_seed(2, 2));
    }

    #[test]
    fn channel_delivers_intersections_and_enforces_budgets() {
        let cfg = MultipathConfig::new(4, 2, 2, 1, 8).unwrap();
        let mut eve = StaticEve::new(PathSubset::new(4, vec![1]).unwrap());
        let mut ch = Channel::new(cfg, 1, 8, &mut eve, true);
        let a = PathSubset::new(4, vec![0, 1]).unwrap();
        let b = PathSubset::new(4, vec![1, 3]).unwrap();
        let d = ch.transmit(Party::Alice, &a, &b, &[7, 9]).unwrap();
        assert_eq!(d.received, vec![(1, &[9u128][..])]);
        assert_eq!(ch.eve_view().symbols, vec![9]);
        assert_eq!(ch.bits(), 16);
        let too_many = PathSubset::new(4, vec![0, 1, 2]).unwrap();
        assert!(ch
            .transmit(Party::Alice, &too_many, &b, &[1, 2, 3])
            .is_err());
        assert!(ch.transmit(Party::Alice, &a, &b, &[1]).is_err());
        ch.publish(Party::Bob, 5, "hello".into());
        assert_eq!(ch.bits(), 21);
        let (view, transcript) = ch.into_parts();
        assert_eq!(view.public.len(), 1);
        let mut csv = Vec::new();
        transcript.unwrap().write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert_eq!(
            text,
            "interval,sender,paths_sender,paths_receiver,paths_eve,payload_hex\n\
             0,alice,0;1,1;3,1,07;09\n\
             1,public-bob,,,,hello\n"
        );
    }

    #[test]
    fn uniform_eve_is_reproducible() {
        let mut a = UniformEve::new(5);
        let mut b = UniformEve::new(5);
        for i in 0..20 {
            assert_eq!(a.choose_paths(i, &[], 10, 3), b.choose_paths(i, &[], 10, 3));
        }
    }
}
