//! Closed-form asymptotic performance of grant-free access with massive MIMO.
//!
//! Missed-detection probability `p(k, L)`, post-combining SINR, PSK symbol
//! error rate `ψ(k, L)`, the SSTR sum over the binomial active-user count and
//! its mean approximation. Every probability is clamped to `[0, 1]`, and the
//! regime `k ≥ L` (or `k ≥ M` under zero forcing) counts as total failure.
//!
//! Active-user counts are taken as `f64` so the mean approximation can
//! evaluate the formulas at a non-integer `K̄`.

use std::f64::consts::{PI, SQRT_2};

use crate::error::{Error, Result};
use crate::model::{Beamformer, SystemConfig};

/// Gaussian tail probability `Q(x) = P(Z > x)`.
pub fn q_function(x: f64) -> f64 {
    if x == f64::INFINITY {
        return 0.0;
    }
    if x == f64::NEG_INFINITY {
        return 1.0;
    }
    0.5 * libm::erfc(x / SQRT_2)
}

/// `ln n! - (n + 1/2) ln n + n - ln √(2π)`, exact table below 16.
fn stirling_error(n: usize) -> f64 {
    const TABLE: [f64; 16] = [
        0.0,
        0.081_061_466_795_327_258_219_670_2,
        0.041_340_695_955_409_294_093_822_1,
        0.027_677_925_684_998_339_148_789_29,
        0.020_790_672_103_765_093_111_522_77,
        0.016_644_691_189_821_192_163_194_87,
        0.013_876_128_823_070_747_998_745_73,
        0.011_896_709_945_891_770_095_055_72,
        0.010_411_265_261_972_096_497_478_567,
        0.009_255_462_182_712_732_917_728_637,
        0.008_330_563_433_362_871_256_469_318,
        0.007_573_675_487_951_840_794_972_024,
        0.006_942_840_107_209_529_865_664_152,
        0.006_408_994_188_004_207_068_439_631,
        0.005_951_370_112_758_847_735_624_416,
        0.005_554_733_551_962_801_371_038_690,
    ];
    const S0: f64 = 1.0 / 12.0;
    const S1: f64 = 1.0 / 360.0;
    const S2: f64 = 1.0 / 1260.0;
    const S3: f64 = 1.0 / 1680.0;
    const S4: f64 = 1.0 / 1188.0;
    if n < TABLE.len() {
        return TABLE[n];
    }
    let n = n as f64;
    let nn = n * n;
    if n > 500.0 {
        (S0 - S1 / nn) / n
    } else if n > 80.0 {
        (S0 - (S1 - S2 / nn) / nn) / n
    } else if n > 35.0 {
        (S0 - (S1 - (S2 - S3 / nn) / nn) / nn) / n
    } else {
        (S0 - (S1 - (S2 - (S3 - S4 / nn) / nn) / nn) / nn) / n
    }
}

/// Deviance term `x ln(x/μ) + μ - x`, with a series near `x = μ`.
fn deviance(x: f64, mu: f64) -> f64 {
    if (x - mu).abs() < 0.1 * (x + mu) {
        let mut v = (x - mu) / (x + mu);
        let mut s = (x - mu) * v;
        let mut term = 2.0 * x * v;
        v *= v;
        for j in 1.. {
            term *= v;
            let next = s + term / (2 * j + 1) as f64;
            if next == s {
                return next;
            }
            s = next;
        }
    }
    x * (x / mu).ln() + mu - x
}

pub(crate) fn check_probability(field: &'static str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::range(field, format!("{p} is not a probability")))
    }
}

/// `ln q(N, k)`; `-∞` where the pmf is exactly zero.
pub fn ln_binomial_pmf(users: usize, lambda: f64, k: usize) -> Result<f64> {
    check_probability("lambda", lambda)?;
    if k > users {
        return Err(Error::range("k", format!("{k} exceeds N = {users}")));
    }
    if lambda == 0.0 {
        return Ok(if k == 0 { 0.0 } else { f64::NEG_INFINITY });
    }
    if lambda == 1.0 {
        return Ok(if k == users { 0.0 } else { f64::NEG_INFINITY });
    }
    if k == 0 {
        return Ok(users as f64 * (-lambda).ln_1p());
    }
    if k == users {
        return Ok(users as f64 * lambda.ln());
    }
    // Saddle-point form; keeps full relative precision for large N.
    let (n, x) = (users as f64, k as f64);
    let lc = stirling_error(users)
        - stirling_error(k)
        - stirling_error(users - k)
        - deviance(x, n * lambda)
        - deviance(n - x, n * (1.0 - lambda));
    let lf = (2.0 * PI).ln() + x.ln() + (-x / n).ln_1p();
    Ok(lc - 0.5 * lf)
}

/// `q(N, k) = C(N,k) λ^k (1-λ)^(N-k)`.
pub fn binomial_pmf(users: usize, lambda: f64, k: usize) -> Result<f64> {
    ln_binomial_pmf(users, lambda, k).map(f64::exp)
}

/// `q(N, k)` for `k = 0..=k_max` (capped at `N`).
pub fn binomial_pmf_row(users: usize, lambda: f64, k_max: usize) -> Result<Vec<f64>> {
    (0..=k_max.min(users)).map(|k| binomial_pmf(users, lambda, k)).collect()
}

/// `b = ln(1+x)/x` with `x = γ(L-k)/σ²`.
pub fn b_factor(k: f64, pilot_len: usize, gamma: f64, sigma2: f64) -> Result<f64> {
    let gap = pilot_len as f64 - k;
    if !(gap > 0.0) {
        return Err(Error::range("k", format!("need k < L, got k = {k}, L = {pilot_len}")));
    }
    let x = gamma * gap / sigma2;
    if x < 1e-8 {
        // ln(1+x)/x = 1 - x/2 + x²/3 - ...
        return Ok(1.0 - x / 2.0 + x * x / 3.0);
    }
    Ok(x.ln_1p() / x)
}

/// Asymptotic missed-detection probability `p(k, L)` of AMP activity detection.
///
/// Total by construction: `k ≥ L` returns 1 and the large-system formula is
/// clamped to `[0, 1]`. The `exp(-M(b-1-ln b))` factor is kept in log space.
pub fn miss_probability(k: f64, pilot_len: usize, antennas: usize, gamma: f64, sigma2: f64) -> f64 {
    let b = match b_factor(k, pilot_len, gamma, sigma2) {
        Ok(b) => b,
        Err(_) => return 1.0,
    };
    let m = antennas as f64;
    // d = b - 1 - ln b > 0 for b in (0, 1).
    let d = b - 1.0 - b.ln();
    if !(d > 0.0) || b >= 1.0 {
        return 1.0;
    }
    let bracket = 1.0 / (1.0 - b) + 1.0 / (2.0 * d).sqrt();
    let ln_p = -m * d - (2.0 * (2.0 * PI * m).sqrt()).ln() + bracket.ln();
    ln_p.exp().clamp(0.0, 1.0)
}

/// Post-combining SINR `Γ^i(k, L)` for MRC or ZF.
pub fn sinr(
    beamformer: Beamformer,
    k: f64,
    pilot_len: usize,
    antennas: usize,
    gamma: f64,
    sigma2: f64,
) -> Result<f64> {
    let l = pilot_len as f64;
    let m = antennas as f64;
    if !(k >= 0.0 && k < l) {
        return Err(Error::range("k", format!("need 0 <= k < L, got k = {k}, L = {pilot_len}")));
    }
    match beamformer {
        Beamformer::Mrc => Ok(m * gamma * gamma / ((gamma + sigma2 / (l - k)) * (k * gamma + sigma2))),
        Beamformer::Zf => {
            if !(k < m) {
                return Err(Error::range("k", format!("zero forcing needs k < M, got k = {k}, M = {antennas}")));
            }
            Ok((m - k) * (l - k) * gamma * gamma / (sigma2 * (gamma * l + sigma2)))
        }
    }
}

/// PSK symbol error rate at SINR `Γ` for `W ∈ {2, 4}`; other orders count as failure.
pub fn psk_ser(psk_order: usize, sinr: f64) -> f64 {
    1.0 - psk_success(psk_order, sinr)
}

/// `1 - ψ` evaluated without cancellation.
pub fn psk_success(psk_order: usize, sinr: f64) -> f64 {
    let sinr = sinr.max(0.0);
    match psk_order {
        2 => q_function(-(2.0 * sinr).sqrt()),
        4 => q_function(-sinr.sqrt()).powi(2),
        _ => 0.0,
    }
    .clamp(0.0, 1.0)
}

/// Asymptotic symbol error rate `ψ^(i,W)(k, L)`; 1 outside `k < L` (and `k < M` for ZF).
pub fn ser(
    beamformer: Beamformer,
    psk_order: usize,
    k: f64,
    pilot_len: usize,
    antennas: usize,
    gamma: f64,
    sigma2: f64,
) -> f64 {
    match sinr(beamformer, k, pilot_len, antennas, gamma, sigma2) {
        Ok(g) => psk_ser(psk_order, g),
        Err(_) => 1.0,
    }
}

/// `(1 - p(k, L)) (1 - ψ(k, L))`, the success probability of a typical active user.
pub fn success_factor(config: &SystemConfig, beamformer: Beamformer, k: f64, pilot_len: usize) -> f64 {
    let (m, g, s2) = (config.antennas, config.gamma, config.sigma2);
    let detect = 1.0 - miss_probability(k, pilot_len, m, g, s2);
    let data = match sinr(beamformer, k, pilot_len, m, g, s2) {
        Ok(sinr) => psk_success(config.psk_order, sinr),
        Err(_) => 0.0,
    };
    detect * data
}

/// Success factors for `k = 0..=min(N, L-1)`; all larger `k` contribute nothing.
pub fn success_factors(config: &SystemConfig, beamformer: Beamformer, pilot_len: usize) -> Vec<f64> {
    let k_max = config.users.min(pilot_len.saturating_sub(1));
    (0..=k_max)
        .map(|k| success_factor(config, beamformer, k as f64, pilot_len))
        .collect()
}

/// A conditioned operating point: `k` active users, pilot length `L`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimePoint {
    pub k: f64,
    pub pilot_len: usize,
    pub epsilon: f64,
    pub beamformer: Beamformer,
}

impl RegimePoint {
    pub fn miss_probability(&self, config: &SystemConfig) -> f64 {
        miss_probability(self.k, self.pilot_len, config.antennas, config.gamma, config.sigma2)
    }

    pub fn ser(&self, config: &SystemConfig) -> f64 {
        ser(
            self.beamformer,
            config.psk_order,
            self.k,
            self.pilot_len,
            config.antennas,
            config.gamma,
            config.sigma2,
        )
    }

    /// `(T-L)/T (1-p)(1-ψ)`: expected successful symbols per interval for one active user.
    pub fn per_user_rate(&self, config: &SystemConfig) -> f64 {
        data_fraction(config, self.pilot_len) * success_factor(config, self.beamformer, self.k, self.pilot_len)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SstrMethod {
    Exact,
    MeanApprox,
    MonteCarlo,
}

impl SstrMethod {
    pub fn name(self) -> &'static str {
        match self {
            SstrMethod::Exact => "exact",
            SstrMethod::MeanApprox => "mean_approx",
            SstrMethod::MonteCarlo => "monte_carlo",
        }
    }
}

/// SSTR at one `(L, ε)`, in successfully detected symbols per coherence interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SstrPoint {
    pub pilot_len: usize,
    pub epsilon: f64,
    pub value: f64,
    pub method: SstrMethod,
    /// 95% confidence half-width; zero for analytic values.
    pub half_width: f64,
}

pub(crate) fn data_fraction(config: &SystemConfig, pilot_len: usize) -> f64 {
    (config.coherence as f64 - pilot_len as f64) / config.coherence as f64
}

fn check_operating_point(config: &SystemConfig, pilot_len: usize, epsilon: f64) -> Result<()> {
    config.check_pilot_len(pilot_len)?;
    check_probability("epsilon", epsilon)
}

/// Asymptotic SSTR `(T-L)/T Σ_k k q(N,k) (1-p)(1-ψ)`, summed up to `k = L-1`.
pub fn sstr_exact(pilot_len: usize, epsilon: f64, config: &SystemConfig, beamformer: Beamformer) -> Result<SstrPoint> {
    check_operating_point(config, pilot_len, epsilon)?;
    let factors = success_factors(config, beamformer, pilot_len);
    let value = sstr_from_factors(config, pilot_len, epsilon, &factors)?;
    Ok(SstrPoint {
        pilot_len,
        epsilon,
        value,
        method: SstrMethod::Exact,
        half_width: 0.0,
    })
}

/// Closed-form sum with precomputed success factors, for repeated evaluation over `ε`.
pub(crate) fn sstr_from_factors(config: &SystemConfig, pilot_len: usize, epsilon: f64, factors: &[f64]) -> Result<f64> {
    let lambda = config.activation_probability(epsilon);
    let mut sum = 0.0;
    for (k, s) in factors.iter().enumerate().skip(1) {
        if *s == 0.0 {
            continue;
        }
        sum += k as f64 * binomial_pmf(config.users, lambda, k)? * s;
    }
    Ok(data_fraction(config, pilot_len) * sum)
}

/// Truncated mean `K̄_{<L} = Σ_{k<L} k q(k) / Σ_{k<L} q(k)`.
pub fn k_bar(pilot_len: usize, users: usize, lambda: f64) -> Result<f64> {
    let (mass, first) = truncated_moments(pilot_len, users, lambda)?;
    Ok(first / mass)
}

fn truncated_moments(pilot_len: usize, users: usize, lambda: f64) -> Result<(f64, f64)> {
    let k_max = users.min(pilot_len.saturating_sub(1));
    let (mut mass, mut first) = (0.0, 0.0);
    for k in 1..=k_max {
        let q = binomial_pmf(users, lambda, k)?;
        mass += q;
        first += k as f64 * q;
    }
    if mass > 0.0 {
        Ok((mass, first))
    } else {
        Err(Error::DegenerateDistribution { pilot_len })
    }
}

/// Mean approximation: `(T-L)/T (1-p(K̄))(1-ψ(K̄)) Σ_{k<L} k q(k)` at the real-valued `K̄`.
pub fn sstr_mean_approx(
    pilot_len: usize,
    epsilon: f64,
    config: &SystemConfig,
    beamformer: Beamformer,
) -> Result<SstrPoint> {
    check_operating_point(config, pilot_len, epsilon)?;
    let lambda = config.activation_probability(epsilon);
    let (mass, first) = truncated_moments(pilot_len, config.users, lambda)?;
    let kbar = first / mass;
    let value = data_fraction(config, pilot_len) * success_factor(config, beamformer, kbar, pilot_len) * first;
    Ok(SstrPoint {
        pilot_len,
        epsilon,
        value,
        method: SstrMethod::MeanApprox,
        half_width: 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fig2() -> SystemConfig {
        SystemConfig::default()
    }

    /// Craig's form `Q(x) = (1/π) ∫_0^{π/2} exp(-x²/(2 sin²θ)) dθ`, composite Simpson.
    fn q_oracle(x: f64) -> f64 {
        if x < 0.0 {
            return 1.0 - q_oracle(-x);
        }
        let n = 20_000;
        let h = (PI / 2.0) / n as f64;
        let f = |t: f64| {
            let s = t.sin();
            if s == 0.0 {
                0.0
            } else {
                (-x * x / (2.0 * s * s)).exp()
            }
        };
        let mut acc = f(0.0) + f(PI / 2.0);
        for i in 1..n {
            acc += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        acc * h / 3.0 / PI
    }

    #[test]
    fn q_function_values() {
        assert_eq!(q_function(0.0), 0.5);
        assert_eq!(q_function(f64::INFINITY), 0.0);
        assert_eq!(q_function(f64::NEG_INFINITY), 1.0);
        assert!((q_function(1.281_551_565_544_600_4) - 0.1).abs() < 1e-9);
        for x in [0.3, 1.0, 2.5, 4.0, 6.0, -1.7] {
            let (q, o) = (q_function(x), q_oracle(x));
            assert!(((q - o) / o).abs() < 1e-12, "x = {x}: {q} vs {o}");
        }
    }

    #[test]
    fn binomial_values() {
        assert!((binomial_pmf(4, 0.5, 2).unwrap() - 0.375).abs() < 1e-15);
        assert_eq!(binomial_pmf(10, 0.0, 0).unwrap(), 1.0);
        assert_eq!(binomial_pmf(10, 0.0, 3).unwrap(), 0.0);
        assert_eq!(binomial_pmf(10, 1.0, 10).unwrap(), 1.0);
        assert!(binomial_pmf(10, 0.3, 11).is_err());
        assert!(binomial_pmf(10, 1.3, 1).is_err());
        let total: f64 = binomial_pmf_row(2000, 0.05, 2000).unwrap().iter().sum();
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn b_factor_values() {
        let b = b_factor(100.0, 110, 10.0, 1.0).unwrap();
        assert!((b - 101f64.ln() / 100.0).abs() < 1e-15);
        assert!((b - 0.046_151_205_168_412_6).abs() < 1e-12);
        let tiny = b_factor(0.0, 1, 1e-12, 1.0).unwrap();
        assert!((tiny - 1.0).abs() < 1e-11);
        assert!(b_factor(5.0, 5, 1.0, 1.0).is_err());
        let mut prev = 1.0;
        for l in 11..200 {
            let b = b_factor(10.0, l, 10.0, 1.0).unwrap();
            assert!(b < prev);
            prev = b;
        }
    }

    #[test]
    fn miss_probability_regimes() {
        assert_eq!(miss_probability(110.0, 110, 128, 10.0, 1.0), 1.0);
        assert_eq!(miss_probability(150.0, 110, 128, 10.0, 1.0), 1.0);
        let p = miss_probability(100.0, 110, 128, 10.0, 1.0);
        assert!(p > 0.0 && p < 1e-100, "p = {p}");
        // exponent -M (b - 1 - ln b) with b = ln(101)/100
        let b = 101f64.ln() / 100.0;
        let d = b - 1.0 - b.ln();
        assert!((d - 2.121_98).abs() < 1e-4);
        let direct_ln = -128.0 * d - (2.0 * (2.0 * PI * 128.0).sqrt()).ln()
            + (1.0 / (1.0 - b) + 1.0 / (2.0 * d).sqrt()).ln();
        assert!((p.ln() - direct_ln).abs() < 1e-9);
        // Small M with b near 1: the raw formula exceeds one and is clamped.
        assert_eq!(miss_probability(0.0, 1, 1, 1e-3, 1.0), 1.0);
    }

    #[test]
    fn sinr_values() {
        let mrc = sinr(Beamformer::Mrc, 100.0, 110, 128, 10.0, 1.0).unwrap();
        assert!((mrc - 12800.0 / 10110.1).abs() < 1e-12);
        assert!((mrc - 1.266_06).abs() < 1e-5);
        let zf = sinr(Beamformer::Zf, 100.0, 110, 128, 10.0, 1.0).unwrap();
        assert!((zf - 28000.0 / 1101.0).abs() < 1e-12);
        assert!(sinr(Beamformer::Zf, 130.0, 140, 128, 10.0, 1.0).is_err());
        assert!(sinr(Beamformer::Mrc, 110.0, 110, 128, 10.0, 1.0).is_err());
        let mrc2 = sinr(Beamformer::Mrc, 100.0, 110, 256, 10.0, 1.0).unwrap();
        assert!((mrc2 - 2.0 * mrc).abs() < 1e-12);
    }

    #[test]
    fn ser_values() {
        assert!((psk_ser(4, 0.0) - 0.75).abs() < 1e-15);
        assert!((psk_ser(2, 0.0) - 0.5).abs() < 1e-15);
        assert!(psk_ser(4, 1e6) < 1e-300);
        assert_eq!(ser(Beamformer::Zf, 4, 128.0, 200, 128, 10.0, 1.0), 1.0);
        assert_eq!(ser(Beamformer::Mrc, 4, 120.0, 110, 128, 10.0, 1.0), 1.0);
        let g: f64 = 1.7;
        let q = q_function(g.sqrt());
        assert!((psk_ser(4, g) - (2.0 * q - q * q)).abs() < 1e-15);
        assert!((psk_ser(2, g) - q_function((2.0 * g).sqrt())).abs() < 1e-15);
    }

    #[test]
    fn sstr_edge_cases() {
        let cfg = fig2();
        assert_eq!(sstr_exact(110, 0.0, &cfg, Beamformer::Mrc).unwrap().value, 0.0);
        let last = sstr_exact(199, 1.0, &cfg, Beamformer::Zf).unwrap();
        assert!(last.value <= cfg.users as f64 / cfg.coherence as f64);
        assert!(sstr_exact(200, 0.5, &cfg, Beamformer::Mrc).is_err());
        assert!(sstr_exact(0, 0.5, &cfg, Beamformer::Mrc).is_err());
        assert!(sstr_exact(50, 1.5, &cfg, Beamformer::Mrc).is_err());
    }

    #[test]
    fn sstr_matches_brute_force_sum() {
        // Full sum over k = 1..=N, no truncation, direct pmf evaluation.
        let cfg = SystemConfig { users: 300, antennas: 64, ..fig2() };
        for bf in Beamformer::ALL {
            for (l, eps) in [(40, 0.5), (110, 0.9), (5, 0.2)] {
                let lambda = cfg.p_active * eps;
                let mut brute = 0.0;
                for k in 1..=cfg.users {
                    let kf = k as f64;
                    let p = if k < l { miss_probability(kf, l, 64, cfg.gamma, 1.0) } else { 1.0 };
                    let psi = ser(bf, 4, kf, l, 64, cfg.gamma, 1.0);
                    brute += kf * binomial_pmf(cfg.users, lambda, k).unwrap() * (1.0 - p) * (1.0 - psi);
                }
                brute *= (200.0 - l as f64) / 200.0;
                let v = sstr_exact(l, eps, &cfg, bf).unwrap().value;
                assert!((v - brute).abs() <= 1e-12 * brute.max(1e-300) + 1e-14, "{v} vs {brute}");
            }
        }
    }

    #[test]
    fn k_bar_hand_value() {
        assert!((k_bar(3, 2, 0.5).unwrap() - 4.0 / 3.0).abs() < 1e-15);
        assert!(matches!(k_bar(1, 10, 0.5), Err(Error::DegenerateDistribution { .. })));
        assert!(matches!(k_bar(10, 10, 0.0), Err(Error::DegenerateDistribution { .. })));
    }

    #[test]
    fn mean_approx_is_exact_for_point_mass() {
        // λ = 1 puts all mass at k = N < L.
        let cfg = SystemConfig { users: 20, p_active: 1.0, ..fig2() };
        for bf in Beamformer::ALL {
            let exact = sstr_exact(60, 1.0, &cfg, bf).unwrap().value;
            let approx = sstr_mean_approx(60, 1.0, &cfg, bf).unwrap().value;
            assert!((exact - approx).abs() <= 1e-12 * exact, "{exact} vs {approx}");
        }
    }

    #[test]
    fn counting_identity() {
        // N λ q(N-1, k-1) = k q(N, k)
        for (n, k, lambda) in [(2000, 100, 0.05), (50, 3, 0.3), (2000, 1, 0.001), (777, 500, 0.6)] {
            let lhs = n as f64 * lambda * binomial_pmf(n - 1, lambda, k - 1).unwrap();
            let rhs = k as f64 * binomial_pmf(n, lambda, k).unwrap();
            assert!((lhs - rhs).abs() < 1e-12, "{lhs} vs {rhs}");
        }
    }

    proptest! {
        #[test]
        fn probabilities_stay_in_unit_interval(
            k in 0.0f64..400.0,
            l in 1usize..300,
            m in 1usize..512,
            snr_db in -20.0f64..40.0,
        ) {
            let gamma = 10f64.powf(snr_db / 10.0);
            let p = miss_probability(k, l, m, gamma, 1.0);
            prop_assert!((0.0..=1.0).contains(&p));
            for bf in Beamformer::ALL {
                for w in [2, 4] {
                    let psi = ser(bf, w, k, l, m, gamma, 1.0);
                    prop_assert!((0.0..=1.0).contains(&psi));
                }
            }
        }

        #[test]
        fn sinr_monotone_in_antennas_and_users(
            k in 0usize..60,
            extra in 1usize..60,
            m in 61usize..300,
            snr_db in -5.0f64..25.0,
        ) {
            let gamma = 10f64.powf(snr_db / 10.0);
            let l = k + extra + 1;
            for bf in Beamformer::ALL {
                let base = sinr(bf, k as f64, l, m, gamma, 1.0).unwrap();
                prop_assert!(sinr(bf, k as f64, l, m + 1, gamma, 1.0).unwrap() > base);
                prop_assert!(sinr(bf, k as f64 + 1.0, l, m, gamma, 1.0).unwrap() < base);
            }
        }

        #[test]
        fn ser_decreases_in_sinr(g in 0.0f64..30.0, dg in 1e-3f64..5.0) {
            for w in [2, 4] {
                prop_assert!(psk_ser(w, g + dg) < psk_ser(w, g));
            }
            prop_assert!(q_function(g + dg) < q_function(g));
        }

        #[test]
        fn sstr_bounded_and_monotone_in_antennas(
            l in 1usize..199,
            eps in 0.0f64..1.0,
            m in 1usize..256,
        ) {
            let cfg = SystemConfig { users: 400, antennas: m, ..SystemConfig::default() };
            let more = SystemConfig { antennas: m + 8, ..cfg.clone() };
            for bf in Beamformer::ALL {
                let v = sstr_exact(l, eps, &cfg, bf).unwrap().value;
                let bound = (200.0 - l as f64) / 200.0 * 400.0;
                prop_assert!(v >= 0.0 && v <= bound);
                let v2 = sstr_exact(l, eps, &more, bf).unwrap().value;
                prop_assert!(v2 >= v * (1.0 - 1e-12));
            }
        }
    }
}
