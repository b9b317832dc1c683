//! Sampling-rate model and equivalent computational steps for locating the
//! quantum-advantage region of standard and timestamp protocols.

use std::io::Write;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive};
use serde::Serialize;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Default pump repetition rate, 76 MHz.
pub const DEFAULT_PUMP_RATE_HZ: f64 = 76e6;

/// Photon number whose bare `n 2^n` cost marks the advantage threshold.
pub const THRESHOLD_PHOTONS: u32 = 50;

/// Speedup of the timestamp protocol over counting.
pub const DEFAULT_SPEEDUP: f64 = 100.0;

fn check_shape(n: usize, m: usize) -> Result<()> {
    if n == 0 || m < n {
        return Err(Error::Domain(format!("need m >= n >= 1, got n = {n}, m = {m}")));
    }
    Ok(())
}

/// Exact `C(m, n)`.
pub fn binomial_exact(m: usize, n: usize) -> BigUint {
    if n > m {
        return BigUint::ZERO;
    }
    let k = n.min(m - n);
    let mut acc = BigUint::one();
    for i in 0..k {
        acc *= m - i;
        acc /= i + 1;
    }
    acc
}

/// `ln C(x, y)` for real arguments.
fn ln_binomial(x: f64, y: f64) -> f64 {
    ln_gamma(x + 1.0) - ln_gamma(y + 1.0) - ln_gamma(x - y + 1.0)
}

/// `SR = (R_pump / n) eta^n / C(m, n)`.
pub fn sampling_rate(n: usize, m: usize, eta: f64, r_pump: f64) -> Result<f64> {
    check_shape(n, m)?;
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::Domain(format!("efficiency {eta} outside (0, 1]")));
    }
    if !(r_pump > 0.0 && r_pump.is_finite()) {
        return Err(Error::Domain(format!("pump rate {r_pump} must be positive")));
    }
    let c = binomial_exact(m, n).to_f64().unwrap_or(f64::INFINITY);
    Ok(r_pump / n as f64 * eta.powi(n as i32) / c)
}

/// Inverse of [`sampling_rate`] in `eta`.
pub fn required_efficiency(n: usize, m: usize, sr_target: f64, r_pump: f64) -> Result<f64> {
    check_shape(n, m)?;
    if !(sr_target > 0.0 && r_pump > 0.0) {
        return Err(Error::Domain("sampling and pump rates must be positive".into()));
    }
    let c = binomial_exact(m, n).to_f64().unwrap_or(f64::INFINITY);
    let eta = (sr_target * n as f64 * c / r_pump).powf(1.0 / n as f64);
    if eta > 1.0 {
        return Err(Error::UnattainableEfficiency { eta });
    }
    Ok(eta)
}

/// Exact `n 2^n C(m, n)`.
pub fn computational_steps(n: usize, m: usize) -> Result<BigUint> {
    check_shape(n, m)?;
    Ok(BigUint::from(n) * (BigUint::one() << n) * binomial_exact(m, n))
}

/// `50 * 2^50`.
pub fn advantage_threshold() -> BigUint {
    BigUint::from(THRESHOLD_PHOTONS) << THRESHOLD_PHOTONS as usize
}

pub fn log10_big(x: &BigUint) -> f64 {
    match x.to_f64() {
        Some(v) if v.is_finite() && v > 0.0 => v.log10(),
        _ if *x == BigUint::ZERO => f64::NEG_INFINITY,
        _ => {
            // shift down to the f64 range, then add the shifted bits back
            let shift = x.bits().saturating_sub(1000);
            let head = (x >> shift).to_f64().unwrap_or(f64::MAX);
            head.log10() + shift as f64 * std::f64::consts::LOG10_2
        }
    }
}

/// `ln SR(x) - ln R_pump` under `m = 2x`, for real `x`.
fn ln_rate_balanced(x: f64, eta: f64) -> f64 {
    -x.ln() + x * eta.ln() - ln_binomial(2.0 * x, x)
}

/// `ln (x 2^x C(2x, x))` for real `x`.
fn ln_steps_balanced(x: f64) -> f64 {
    x.ln() + x * std::f64::consts::LN_2 + ln_binomial(2.0 * x, x)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EquivalentPhotons {
    pub n: usize,
    pub speedup: f64,
    /// Largest integer `n'` with `SR(n') >= SR(n) / speedup`.
    pub n_prime: usize,
    /// `steps(n', 2n') / steps(n, 2n)` for the integer `n'`.
    pub step_gain: f64,
    /// Real root of `SR(x) = SR(n) / speedup`.
    pub n_prime_continuous: f64,
    /// Step ratio at the real root, with binomials through log-gamma.
    pub step_gain_continuous: f64,
}

/// Photon number reachable at the same rate when sampling is `speedup` times
/// faster, under the `m = 2n` policy on both sides.
pub fn equivalent_photon_number(n: usize, eta: f64, r_pump: f64, speedup: f64) -> Result<EquivalentPhotons> {
    if !(speedup >= 1.0 && speedup.is_finite()) {
        return Err(Error::Domain(format!("speedup {speedup} must be at least 1")));
    }
    let target = sampling_rate(n, 2 * n, eta, r_pump)? / speedup;
    let mut n_prime = n;
    while n_prime < 10_000 && sampling_rate(n_prime + 1, 2 * n_prime + 2, eta, r_pump)? >= target {
        n_prime += 1;
    }
    let base = ln_steps_balanced(n as f64);
    let steps = |k: usize| computational_steps(k, 2 * k).map(|s| log10_big(&s));
    let step_gain = 10f64.powf(steps(n_prime)? - steps(n)?);

    let ln_target = target.ln() - r_pump.ln();
    let f = |x: f64| ln_rate_balanced(x, eta) - ln_target;
    let (mut lo, mut hi) = (n as f64, n_prime as f64 + 1.0);
    if f(lo) <= 0.0 {
        hi = lo;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let n_prime_continuous = 0.5 * (lo + hi);
    Ok(EquivalentPhotons {
        n,
        speedup,
        n_prime,
        step_gain,
        n_prime_continuous,
        step_gain_continuous: (ln_steps_balanced(n_prime_continuous) - base).exp(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    Standard,
    Timestamp,
}

impl Protocol {
    pub fn label(self) -> &'static str {
        match self {
            Protocol::Standard => "standard",
            Protocol::Timestamp => "timestamp",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegimePoint {
    pub n: usize,
    pub m: usize,
    pub eta: f64,
    pub r_pump: f64,
    /// Effective sampling rate; the timestamp protocol multiplies by the speedup.
    pub sr: f64,
    #[serde(serialize_with = "serialize_decimal")]
    pub steps: BigUint,
    pub log10_steps: f64,
    pub advantage: bool,
    pub protocol: Protocol,
}

fn serialize_decimal<S: serde::Serializer>(x: &BigUint, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_str(x)
}

/// Sweep over `n` (with `m = 2n`), efficiencies and both protocols.
pub fn advantage_table(
    ns: impl IntoIterator<Item = usize>,
    etas: &[f64],
    r_pump: f64,
    speedup: f64,
) -> Result<Vec<RegimePoint>> {
    let threshold = advantage_threshold();
    let mut rows = Vec::new();
    for n in ns {
        let m = 2 * n;
        let steps = computational_steps(n, m)?;
        let log10_steps = log10_big(&steps);
        let advantage = steps >= threshold;
        for &eta in etas {
            let sr = sampling_rate(n, m, eta, r_pump)?;
            for (protocol, factor) in [(Protocol::Standard, 1.0), (Protocol::Timestamp, speedup)] {
                rows.push(RegimePoint {
                    n,
                    m,
                    eta,
                    r_pump,
                    sr: sr * factor,
                    steps: steps.clone(),
                    log10_steps,
                    advantage,
                    protocol,
                });
            }
        }
    }
    Ok(rows)
}

pub fn write_table<W: Write>(rows: &[RegimePoint], mut out: W) -> Result<()> {
    writeln!(out, "n,m,eta,SR,steps,log10_steps,advantage_flag,protocol")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{:e},{},{:.6},{},{}",
            r.n,
            r.m,
            r.eta,
            r.sr,
            r.steps,
            r.log10_steps,
            u8::from(r.advantage),
            r.protocol.label()
        )?;
    }
    Ok(())
}

/// Anchor for the efficiency curves: the rate reached at `(n, m, eta)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Benchmark {
    pub n: usize,
    pub m: usize,
    pub eta: f64,
}

impl Default for Benchmark {
    fn default() -> Self {
        Self { n: 15, m: 30, eta: 0.6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub n: usize,
    pub m: usize,
    /// Efficiency needed to keep the benchmark rate; `None` if above 1.
    pub eta_standard: Option<f64>,
    /// Same, with the target rate divided by the speedup.
    pub eta_timestamp: Option<f64>,
    pub log10_steps: f64,
    pub advantage: bool,
}

/// Required efficiency versus `n` at `m = 2n` for both protocols.
pub fn efficiency_curve(
    ns: impl IntoIterator<Item = usize>,
    benchmark: Benchmark,
    r_pump: f64,
    speedup: f64,
) -> Result<Vec<CurvePoint>> {
    let target = sampling_rate(benchmark.n, benchmark.m, benchmark.eta, r_pump)?;
    let threshold = advantage_threshold();
    let attainable = |r: Result<f64>| match r {
        Ok(eta) => Ok(Some(eta)),
        Err(Error::UnattainableEfficiency { .. }) => Ok(None),
        Err(e) => Err(e),
    };
    ns.into_iter()
        .map(|n| {
            let m = 2 * n;
            let steps = computational_steps(n, m)?;
            Ok(CurvePoint {
                n,
                m,
                eta_standard: attainable(required_efficiency(n, m, target, r_pump))?,
                eta_timestamp: attainable(required_efficiency(n, m, target / speedup, r_pump))?,
                log10_steps: log10_big(&steps),
                advantage: steps >= threshold,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_value() {
        assert_eq!(advantage_threshold().to_string(), "56294995342131200");
    }

    #[test]
    fn small_cases() {
        assert_eq!(sampling_rate(1, 1, 1.0, 5e6).unwrap(), 5e6);
        assert_eq!(computational_steps(1, 1).unwrap(), BigUint::from(2u32));
        assert_eq!(
            computational_steps(15, 30).unwrap(),
            BigUint::from(15u64 * 32768 * 155_117_520)
        );
        let full = sampling_rate(2, 5, 0.8, 1.0).unwrap();
        let half = sampling_rate(2, 5, 0.4, 1.0).unwrap();
        assert!((full / half - 4.0).abs() < 1e-12);
    }

    #[test]
    fn domain_errors() {
        assert!(sampling_rate(0, 3, 0.5, 1.0).is_err());
        assert!(sampling_rate(4, 3, 0.5, 1.0).is_err());
        assert!(sampling_rate(2, 3, 1.5, 1.0).is_err());
        assert!(sampling_rate(2, 3, 0.5, 0.0).is_err());
        assert!(matches!(
            required_efficiency(2, 4, 1e9, 1.0),
            Err(Error::UnattainableEfficiency { .. })
        ));
    }

    #[test]
    fn binomial_against_pascal() {
        let mut row = vec![BigUint::one()];
        for _ in 0..100 {
            let mut next = vec![BigUint::one()];
            for w in row.windows(2) {
                next.push(&w[0] + &w[1]);
            }
            next.push(BigUint::one());
            row = next;
        }
        assert_eq!(binomial_exact(100, 50), row[50]);
        assert_eq!(binomial_exact(100, 0), BigUint::one());
        assert_eq!(binomial_exact(3, 5), BigUint::ZERO);
    }

    #[test]
    fn unit_speedup_keeps_n() {
        let e = equivalent_photon_number(15, 0.6, DEFAULT_PUMP_RATE_HZ, 1.0).unwrap();
        assert_eq!(e.n_prime, 15);
        assert_eq!(e.step_gain, 1.0);
        assert!((e.n_prime_continuous - 15.0).abs() < 1e-9);
    }

    #[test]
    fn log10_of_huge_integers() {
        let x = BigUint::one() << 5000usize;
        assert!((log10_big(&x) - 5000.0 * std::f64::consts::LOG10_2).abs() < 1e-9);
        assert_eq!(log10_big(&BigUint::from(1000u32)), 3.0);
    }
}
