//! Closed-form rates, capacity bounds, trial minimums and Monte Carlo
//! confidence limits. Logarithms are base 2 unless written `ln`.

use serde::Serialize;
use statrs::distribution::{Beta, ContinuousCDF};
use thiserror::Error;

use crate::protocols::Scheme;
use crate::setting::MultipathConfig;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("lambda = {0} is too small; the gap term needs lambda >= 5")]
    LambdaTooSmall(f64),
    #[error("{scheme} requires {condition}")]
    Precondition {
        scheme: Scheme,
        condition: &'static str,
    },
    #[error("argument out of range: {0}")]
    Domain(&'static str),
}

/// Real-valued setting parameters; sweeps use fractional path counts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AnalyticSetting {
    pub n: f64,
    pub t_a: f64,
    pub t_b: f64,
    pub t_e: f64,
    pub lambda: f64,
}

impl AnalyticSetting {
    pub fn t_ab(&self) -> f64 {
        self.t_a.min(self.t_b)
    }
}

impl From<&MultipathConfig> for AnalyticSetting {
    fn from(c: &MultipathConfig) -> Self {
        AnalyticSetting {
            n: c.n as f64,
            t_a: c.t_a as f64,
            t_b: c.t_b as f64,
            t_e: c.t_e as f64,
            lambda: c.lambda as f64,
        }
    }
}

fn pos(x: f64) -> f64 {
    x.max(0.0)
}

/// Rate loss of the gap-emulating sharing: Δ = (2^(λ/2 − 2) − 1/4)^(−1).
pub fn delta(lambda: f64) -> Result<f64, AnalysisError> {
    if lambda.is_nan() || lambda < 5.0 {
        return Err(AnalysisError::LambdaTooSmall(lambda));
    }
    Ok(1.0 / (2f64.powf(lambda / 2.0 - 2.0) - 0.25))
}

/// 2^(λ/2) − 1, the denominator of every gap size.
pub fn gap_denominator(lambda: f64) -> f64 {
    2f64.powf(lambda / 2.0) - 1.0
}

/// Bounds (L, U) on the perfect-secrecy capacity.
pub fn p_capacity_bounds(s: &AnalyticSetting) -> Result<(f64, f64), AnalysisError> {
    let d = delta(s.lambda)?;
    let t_ab = s.t_ab();
    if t_ab <= 0.0 {
        return Ok((0.0, 0.0));
    }
    Ok((pos(1.0 - s.t_e / t_ab - d), pos(1.0 - s.t_e / t_ab)))
}

fn log_overhead(s: &AnalyticSetting) -> f64 {
    (std::f64::consts::E * s.n / s.t_ab()).log2()
}

/// Key-transport overhead of the fixed-path scheme; `None` when t_e ≥ t_ab(1 − Δ).
pub fn xi1(s: &AnalyticSetting) -> Result<Option<f64>, AnalysisError> {
    let d = delta(s.lambda)?;
    let t_ab = s.t_ab();
    let denom = 1.0 - s.t_e / t_ab - d;
    Ok((t_ab > 0.0 && denom > 0.0).then(|| log_overhead(s) / (s.lambda * denom)))
}

/// Overhead of the random-path one-way scheme with n' = max(t_a, t_b).
pub fn xi2(s: &AnalyticSetting) -> Result<Option<f64>, AnalysisError> {
    let d = delta(s.lambda)?;
    let n_prime = s.t_a.max(s.t_b);
    let denom = (s.t_b - s.t_e) / n_prime - d;
    Ok((s.t_ab() > 0.0 && denom > 0.0).then(|| log_overhead(s) / (s.lambda * denom)))
}

/// Overhead of the two-round scheme.
pub fn xi3(s: &AnalyticSetting) -> Result<Option<f64>, AnalysisError> {
    let d = delta(s.lambda)?;
    let denom = 1.0 - s.t_e / s.n - d;
    if s.t_a <= 0.0 || s.t_b <= 0.0 || denom <= 0.0 {
        return Ok(None);
    }
    let e = std::f64::consts::E;
    let first = s.n / s.t_a + (e * s.n * s.n / (s.t_a * s.t_b)).log2() / s.lambda;
    Ok(Some(first * log_overhead(s) / (s.lambda * denom)))
}

fn rate_with(s: &AnalyticSetting, xi: f64) -> Result<f64, AnalysisError> {
    Ok(pos((1.0 - s.t_e / s.n - delta(s.lambda)?) / (1.0 + xi)))
}

/// Asymptotic (ψ → 0) secrecy rate of a scheme.
pub fn scheme_rate(s: &AnalyticSetting, scheme: Scheme) -> Result<f64, AnalysisError> {
    let pre = |condition| AnalysisError::Precondition { scheme, condition };
    match scheme {
        Scheme::F0 => {
            if s.t_e >= s.t_ab() {
                return Err(pre("t_e < t_ab"));
            }
            Ok(1.0 - s.t_e / s.t_ab())
        }
        Scheme::F1 => {
            if s.t_e >= s.t_ab() {
                return Err(pre("t_e < t_ab"));
            }
            rate_with(s, xi1(s)?.ok_or(pre("1 - t_e/t_ab > Delta"))?)
        }
        Scheme::F2 => {
            if s.t_e >= s.t_b {
                return Err(pre("t_e < t_b"));
            }
            rate_with(s, xi2(s)?.ok_or(pre("(t_b - t_e)/max(t_a, t_b) > Delta"))?)
        }
        Scheme::F2Simple => {
            if s.t_b != s.n {
                return Err(pre("t_b = n"));
            }
            if s.t_e >= s.t_b {
                return Err(pre("t_e < t_b"));
            }
            Ok(pos((s.t_b - s.t_e) / s.t_b - delta(s.lambda)?))
        }
        Scheme::F3 => {
            if s.t_a <= 0.0 || s.t_b <= 0.0 || s.t_e >= s.n {
                return Err(pre("t_a, t_b > 0 and t_e < n"));
            }
            rate_with(s, xi3(s)?.ok_or(pre("1 - t_e/n > Delta"))?)
        }
    }
}

/// Rate at finite ψ, with the Chernoff margins kept in the thresholds.
///
/// This is a lower estimate of what derived parameters achieve: subset names
/// are priced at t_ab·log(e·n/t_ab) bits, which is at least ⌈log C(n, t_ab)⌉.
pub fn scheme_rate_psi(
    s: &AnalyticSetting,
    scheme: Scheme,
    psi: f64,
) -> Result<f64, AnalysisError> {
    let d = delta(s.lambda)?;
    let e = std::f64::consts::E;
    let t_ab = s.t_ab();
    let lo = log_overhead(s);
    let stage2 = 1.0 - (1.0 + psi) * s.t_e / s.n - d;
    let pre = |condition| AnalysisError::Precondition { scheme, condition };
    let with = |denom: f64, xi_num: f64| {
        if denom <= 0.0 {
            Err(pre("Chernoff margins leave no key material at this psi"))
        } else {
            Ok(pos(stage2 / (1.0 + xi_num / (s.lambda * denom))))
        }
    };
    match scheme {
        Scheme::F0 => scheme_rate(s, scheme),
        Scheme::F1 => with(1.0 - s.t_e / t_ab - d, lo),
        Scheme::F2 => with(((1.0 - psi) * s.t_b - (1.0 + psi) * s.t_e) / s.n - d, lo),
        Scheme::F2Simple => {
            scheme_rate(s, scheme)?;
            Ok(pos(1.0 - (1.0 + psi) * s.t_e / s.n - d))
        }
        Scheme::F3 => {
            let ta = (1.0 - psi) * s.t_a;
            let first = s.n / ta + (e * s.n * s.n / (ta * s.t_b)).log2() / s.lambda;
            with(1.0 - (1.0 + psi) * s.t_e / s.n - d, first * lo)
        }
    }
}

/// Lower and upper bound on the almost-perfect secrecy capacity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ApBounds {
    pub lower: f64,
    pub upper: f64,
    /// Scheme whose rate gives the lower bound.
    pub active: Option<Scheme>,
}

/// Capacity bounds for one-way (`two_way = false`) or interactive communication.
pub fn ap_capacity_bounds(s: &AnalyticSetting, two_way: bool) -> Result<ApBounds, AnalysisError> {
    let t_ab = s.t_ab();
    let candidates: Vec<Scheme> = if t_ab <= 0.0 && !(two_way && s.t_a > 0.0 && s.t_b > 0.0) {
        vec![]
    } else if s.t_e < t_ab {
        if two_way {
            vec![Scheme::F1, Scheme::F2, Scheme::F3]
        } else {
            vec![Scheme::F1, Scheme::F2]
        }
    } else if s.t_e < s.t_b {
        if two_way {
            vec![Scheme::F2, Scheme::F3]
        } else {
            vec![Scheme::F2]
        }
    } else if two_way && s.t_a > 0.0 && s.t_e < s.n {
        vec![Scheme::F3]
    } else {
        vec![]
    };
    let mut best: Option<(f64, Scheme)> = None;
    for scheme in candidates {
        let xi = match scheme {
            Scheme::F1 => xi1(s)?,
            Scheme::F2 => xi2(s)?,
            _ => xi3(s)?,
        };
        if let Some(xi) = xi {
            if best.is_none_or(|(b, _)| xi < b) {
                best = Some((xi, scheme));
            }
        }
    }
    let (lower, active) = match best {
        Some((xi, scheme)) => (rate_with(s, xi)?, Some(scheme)),
        None => {
            delta(s.lambda)?;
            (0.0, None)
        }
    };
    let upper = if two_way {
        if s.t_a > 0.0 && s.t_b > 0.0 {
            1.0 - s.t_e / s.n
        } else {
            0.0
        }
    } else if s.t_e < s.t_b {
        1.0 - s.t_e / s.n
    } else {
        0.0
    };
    Ok(ApBounds {
        lower,
        upper,
        active,
    })
}

/// Capacity inflation factor allowed by a (δ, ε) relaxation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EpsilonPenalty {
    /// ε' = (ε + δ)/(1 − δ).
    pub eps_prime: f64,
    /// 1/(1 − (1.25ε' − ε' log ε')), which is ≥ 1 and tends to 1 as ε' → 0.
    pub factor: f64,
    /// 1/(1 − 1.25ε' − ε' log ε') read literally; drops below 1 for small ε'.
    pub literal_reading: f64,
}

pub fn epsilon_penalty(eps: f64, delta: f64) -> Result<EpsilonPenalty, AnalysisError> {
    if !(0.0..1.0).contains(&delta) || eps.is_nan() || eps < 0.0 {
        return Err(AnalysisError::Domain("need 0 <= delta < 1 and eps >= 0"));
    }
    let ep = (eps + delta) / (1.0 - delta);
    if ep >= 1.0 {
        return Err(AnalysisError::Domain("eps' >= 1 makes the bound vacuous"));
    }
    let h = if ep == 0.0 { 0.0 } else { ep * ep.log2() };
    let denom = 1.0 - 1.25 * ep + h;
    if denom <= 0.0 {
        return Err(AnalysisError::Domain("penalty denominator is not positive"));
    }
    Ok(EpsilonPenalty {
        eps_prime: ep,
        factor: 1.0 / denom,
        literal_reading: 1.0 / (1.0 - 1.25 * ep - h),
    })
}

/// Largest one-way rate any protocol can reach when t_e ≥ t_b: 2ε/(1 − δ − α).
pub fn one_way_rate_cap(eps: f64, delta: f64, alpha: f64) -> Result<f64, AnalysisError> {
    let denom = 1.0 - delta - alpha;
    if denom <= 0.0 || eps < 0.0 {
        return Err(AnalysisError::Domain(
            "need 1 - delta - alpha > 0 and eps >= 0",
        ));
    }
    Ok(2.0 * eps / denom)
}

/// Open interval of t_e over which almost-perfect rates beat the perfect
/// capacity; `None` when empty.
pub fn superiority_range(
    n: f64,
    t_ab: f64,
    lambda: f64,
) -> Result<Option<(f64, f64)>, AnalysisError> {
    let d = delta(lambda)?;
    let upper = (1.0 - d) * n;
    // ξ1 grows with t_e, so iterate to the least fixed point of the threshold.
    let mut t_e = 0.0;
    for _ in 0..200 {
        let s = AnalyticSetting {
            n,
            t_a: t_ab,
            t_b: t_ab,
            t_e,
            lambda,
        };
        let Some(x) = xi1(&s)? else { return Ok(None) };
        let denom = (1.0 + x) / t_ab - 1.0 / n;
        if denom <= 0.0 {
            return Ok(None);
        }
        let next = (x + d) / denom;
        if next >= t_ab {
            return Ok(None);
        }
        if (next - t_e).abs() <= 1e-12 * n {
            t_e = next;
            break;
        }
        t_e = next;
    }
    Ok((t_e < upper).then_some((t_e, upper)))
}

/// The Δ → 0 limit of [`superiority_range`]: (α log(e/α)/(λ(1 − α))·n, n).
pub fn superiority_range_limit(n: f64, t_ab: f64, lambda: f64) -> Option<(f64, f64)> {
    let alpha = t_ab / n;
    if alpha >= 1.0 || alpha <= 0.0 {
        return None;
    }
    let lower = alpha * (std::f64::consts::E / alpha).log2() / (lambda * (1.0 - alpha)) * n;
    (lower < n).then_some((lower, n))
}

/// Minimum interval counts: Chernoff terms for δ and ε, and the terms that keep
/// the gap overhead within Δ.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct TrialMinimums {
    pub q1_chernoff: f64,
    pub q1_tightness: f64,
    pub q2_chernoff: f64,
    pub q2_tightness: f64,
}

impl TrialMinimums {
    pub fn q1(&self, tightness: bool) -> f64 {
        if tightness {
            self.q1_chernoff.max(self.q1_tightness)
        } else {
            self.q1_chernoff
        }
    }

    pub fn q2(&self, tightness: bool) -> f64 {
        if tightness {
            self.q2_chernoff.max(self.q2_tightness)
        } else {
            self.q2_chernoff
        }
    }
}

/// Per-scheme lower bounds on q1 and q2. Terms whose divisor is zero (no
/// eavesdropper) are dropped.
///
/// The two-round scheme uses ln(2/ε) for both ε terms, as its secrecy argument
/// is a union over two bad events.
pub fn chernoff_trial_minimums(
    c: &MultipathConfig,
    scheme: Scheme,
    psi: f64,
    delta: f64,
    eps: f64,
) -> Result<TrialMinimums, AnalysisError> {
    if !(psi > 0.0 && psi < 1.0) {
        return Err(AnalysisError::Domain("psi must lie in (0, 1)"));
    }
    if !(delta > 0.0 && delta < 1.0 && eps > 0.0 && eps < 1.0) {
        return Err(AnalysisError::Domain("delta and eps must lie in (0, 1)"));
    }
    let (n, ta, tb, te) = (c.n as f64, c.t_a as f64, c.t_b as f64, c.t_e as f64);
    let t_ab = ta.min(tb);
    let gap = gap_denominator(c.lambda as f64);
    let ps = psi * psi;
    let eve_term = |scale: f64, log_arg: f64| {
        if te > 0.0 {
            scale / (ps * te) * log_arg.ln()
        } else {
            0.0
        }
    };
    let tight = |t_prime: f64| if t_prime > 0.0 { gap / t_prime } else { 0.0 };
    let te2 = (1.0 + psi) * t_ab * te / n;
    let m = match scheme {
        Scheme::F0 => TrialMinimums::default(),
        Scheme::F1 => TrialMinimums {
            q1_chernoff: 0.0,
            q1_tightness: tight(te),
            q2_chernoff: eve_term((2.0 + psi) * n, 1.0 / eps),
            q2_tightness: tight(te2),
        },
        Scheme::F2 => {
            let n_prime = ta.max(tb);
            let te1 = (1.0 + psi) * ta * te / n_prime;
            TrialMinimums {
                q1_chernoff: (2.0 * n / (ps * tb) * (1.0 / delta).ln())
                    .max(eve_term((2.0 + psi) * n, 2.0 / eps)),
                q1_tightness: tight(te1),
                q2_chernoff: eve_term((2.0 + psi) * n, 2.0 / eps),
                q2_tightness: tight(te2),
            }
        }
        Scheme::F2Simple => TrialMinimums {
            q1_chernoff: eve_term((2.0 + psi) * n, 1.0 / eps),
            q1_tightness: tight((1.0 + psi) * ta * te / n),
            q2_chernoff: 0.0,
            q2_tightness: 0.0,
        },
        Scheme::F3 => {
            let ta1 = (1.0 - psi) * ta * tb / n;
            let te1 = (1.0 + psi) * ta1 * te / n;
            TrialMinimums {
                q1_chernoff: (2.0 * n / (ps * ta) * (1.0 / delta).ln())
                    .max(eve_term((2.0 + psi) * n * n / ta, 2.0 / eps)),
                q1_tightness: tight(te1),
                q2_chernoff: eve_term((2.0 + psi) * n, 2.0 / eps),
                q2_tightness: tight(te2),
            }
        }
    };
    Ok(m)
}

/// Upper limit of the two-sided 95% Clopper–Pearson interval for a binomial
/// proportion with `hits` successes in `trials`.
pub fn upper95(hits: u64, trials: u64) -> f64 {
    if trials == 0 || hits >= trials {
        return 1.0;
    }
    if hits == 0 {
        return 1.0 - 0.025f64.powf(1.0 / trials as f64);
    }
    Beta::new(hits as f64 + 1.0, (trials - hits) as f64)
        .map(|b| b.inverse_cdf(0.975))
        .unwrap_or(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setting(n: f64, t_a: f64, t_b: f64, t_e: f64, lambda: f64) -> AnalyticSetting {
        AnalyticSetting {
            n,
            t_a,
            t_b,
            t_e,
            lambda,
        }
    }

    #[test]
    fn delta_values() {
        assert!((delta(104.0).unwrap() - 8.881_784_197_001_252e-16).abs() < 1e-27);
        assert!(matches!(delta(4.0), Err(AnalysisError::LambdaTooSmall(_))));
        assert!((delta(16.0).unwrap() - 1.0 / 63.75).abs() < 1e-15);
    }

    #[test]
    fn perfect_capacity_bounds() {
        let (l, u) = p_capacity_bounds(&setting(20.0, 10.0, 10.0, 5.0, 64.0)).unwrap();
        assert_eq!(u, 0.5);
        assert!((u - l - delta(64.0).unwrap()).abs() < 1e-15);
        assert_eq!(
            p_capacity_bounds(&setting(20.0, 10.0, 10.0, 12.0, 64.0)).unwrap(),
            (0.0, 0.0)
        );
        assert_eq!(
            p_capacity_bounds(&setting(20.0, 0.0, 10.0, 0.0, 64.0)).unwrap(),
            (0.0, 0.0)
        );
    }

    #[test]
    fn single_path_limit_of_first_overhead() {
        // t_e = 0, t_ab = n: ξ1 = log2(e)/(λ(1 − Δ))
        let s = setting(8.0, 8.0, 8.0, 0.0, 64.0);
        let d = delta(64.0).unwrap();
        let x = xi1(&s).unwrap().unwrap();
        assert!((x - std::f64::consts::E.log2() / (64.0 * (1.0 - d))).abs() < 1e-15);
        let r = scheme_rate(&s, Scheme::F1).unwrap();
        assert!((r - (1.0 - d) / (1.0 + x)).abs() < 1e-15);
    }

    #[test]
    fn preconditions_are_named() {
        let s = setting(20.0, 5.0, 5.0, 5.0, 64.0);
        let err = scheme_rate(&s, Scheme::F1).unwrap_err();
        assert!(err.to_string().contains("t_e < t_ab"));
        assert!(scheme_rate(&s, Scheme::F2).is_err());
        assert!(scheme_rate(&s, Scheme::F3).is_ok());
    }

    #[test]
    fn regimes_one_and_two_way() {
        // t_ab < t_e < t_b: one-way via the random-path scheme only
        let s = setting(20.0, 3.0, 10.0, 5.0, 64.0);
        let one = ap_capacity_bounds(&s, false).unwrap();
        assert_eq!(one.active, Some(Scheme::F2));
        assert!(one.lower > 0.0 && one.upper == 0.75);
        // t_e ≥ t_b: one-way impossible, two-way positive
        let s = setting(20.0, 3.0, 3.0, 10.0, 64.0);
        assert_eq!(
            ap_capacity_bounds(&s, false).unwrap(),
            ApBounds {
                lower: 0.0,
                upper: 0.0,
                active: None
            }
        );
        let two = ap_capacity_bounds(&s, true).unwrap();
        assert!(two.lower > 0.0 && two.active == Some(Scheme::F3));
        // t_a = 0 or t_e = n
        let s = setting(20.0, 0.0, 3.0, 1.0, 64.0);
        assert_eq!(ap_capacity_bounds(&s, true).unwrap().upper, 0.0);
        let s = setting(20.0, 3.0, 3.0, 20.0, 64.0);
        let b = ap_capacity_bounds(&s, true).unwrap();
        assert_eq!((b.lower, b.upper), (0.0, 0.0));
    }

    #[test]
    fn penalty_reading() {
        for k in 1..=4 {
            let eps = 10f64.powi(-k);
            let p = epsilon_penalty(eps, 0.0).unwrap();
            assert!(p.factor >= 1.0);
            assert!(p.literal_reading < 1.0);
        }
        let tiny = epsilon_penalty(1e-12, 0.0).unwrap();
        assert!((tiny.factor - 1.0).abs() < 1e-9);
        assert_eq!(epsilon_penalty(0.0, 0.0).unwrap().factor, 1.0);
        assert!(epsilon_penalty(0.6, 0.5).is_err());
    }

    #[test]
    fn rate_cap() {
        assert!((one_way_rate_cap(0.1, 0.1, 0.1).unwrap() - 0.25).abs() < 1e-15);
        assert!(one_way_rate_cap(0.1, 0.5, 0.5).is_err());
    }

    #[test]
    fn superiority() {
        let (lo, hi) = superiority_range_limit(100.0, 20.0, 100.0).unwrap();
        assert!((lo - 0.2 * (5.0 * std::f64::consts::E).log2() / 80.0 * 100.0).abs() < 1e-12);
        assert!(lo > 0.9 && lo < 1.0 && hi == 100.0);
        let (lo2, hi2) = superiority_range(100.0, 20.0, 100.0).unwrap().unwrap();
        assert!(lo2 > 0.9 && lo2 < 1.1, "{lo2}");
        assert!(hi2 < 100.0 && hi2 > 99.999);
        assert_eq!(superiority_range_limit(100.0, 100.0, 100.0), None);
        assert_eq!(superiority_range(100.0, 100.0, 100.0).unwrap(), None);
    }

    #[test]
    fn trial_minimum_example() {
        let c = MultipathConfig::new(20, 10, 10, 4, 64).unwrap();
        let m = chernoff_trial_minimums(&c, Scheme::F1, 0.1, 0.05, 0.01).unwrap();
        assert!((m.q2_chernoff - 1050.0 * 100f64.ln()).abs() < 1e-9);
        assert!(chernoff_trial_minimums(&c, Scheme::F1, 0.0, 0.05, 0.01).is_err());
    }

    #[test]
    fn clopper_pearson() {
        assert!((upper95(0, 10_000) - 3.688e-4).abs() < 1e-6);
        assert_eq!(upper95(5, 5), 1.0);
        // 5 of 100: exact upper limit 0.11283
        assert!((upper95(5, 100) - 0.112_83).abs() < 2e-4);
        assert!(upper95(1, 100) > upper95(0, 100));
    }
}
