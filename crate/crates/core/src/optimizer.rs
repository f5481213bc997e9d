//! Maximisation of the analytic SSTR over the access parameter, the pilot length, or both.

use rand::Rng;
use rayon::prelude::*;

use crate::analytic::{self, ln_binomial_pmf, sstr_from_factors, success_factors};
use crate::error::{Error, Result};
use crate::model::{self, Beamformer, SystemConfig, OPTIMIZER_STREAM};

/// Terms this far below the largest coefficient are dropped (`1e-300`).
const DROP_LN: f64 = -690.775_527_898_213_7;
const CGP_TOL: f64 = 1e-9;
const CGP_MAX_ITERS: usize = 10_000;
const GOLDEN_TOL: f64 = 1e-6;
pub const DEFAULT_RESTARTS: usize = 10;
pub const DEFAULT_GRID: usize = 1001;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptMethod {
    Cgp,
    Grid,
    ExhaustiveMeanApprox,
    ExhaustiveExact,
    Joint,
}

impl OptMethod {
    pub fn name(self) -> &'static str {
        match self {
            OptMethod::Cgp => "cgp",
            OptMethod::Grid => "grid",
            OptMethod::ExhaustiveMeanApprox => "exhaustive_mean_approx",
            OptMethod::ExhaustiveExact => "exhaustive_exact",
            OptMethod::Joint => "joint",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Diagnostics {
    /// Condensation steps of the best restart, or objective evaluations for searches.
    pub iterations: usize,
    pub restarts: usize,
    pub converged: bool,
    /// Auxiliary variable `t` of the CGP formulation at the returned point.
    pub t: Option<f64>,
}

/// Optimiser output. Both coordinates are reported; the one that was held fixed
/// is the caller's input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptResult {
    pub epsilon: f64,
    pub pilot_len: usize,
    pub value: f64,
    pub method: OptMethod,
    pub diagnostics: Diagnostics,
}

/// `Σ_k c_k εᵏ t^{N-k}` with the coefficients kept as logarithms.
#[derive(Debug, Clone, PartialEq)]
pub struct Signomial {
    pub users: usize,
    /// `(k, ln f(k, L))` for the retained terms.
    pub terms: Vec<(usize, f64)>,
}

impl Signomial {
    pub fn new(pilot_len: usize, config: &SystemConfig, beamformer: Beamformer) -> Result<Self> {
        config.check_pilot_len(pilot_len)?;
        let n = config.users;
        let mut terms = Vec::new();
        if config.p_active > 0.0 {
            let ln_frac = analytic::data_fraction(config, pilot_len).ln();
            let ln_pa = config.p_active.ln();
            let n_ln2 = n as f64 * std::f64::consts::LN_2;
            for (k, s) in success_factors(config, beamformer, pilot_len).into_iter().enumerate().skip(1) {
                if s <= 0.0 {
                    continue;
                }
                // ln C(N,k) through the symmetric pmf keeps full relative accuracy
                let ln_choose = ln_binomial_pmf(n, 0.5, k)? + n_ln2;
                terms.push((k, ln_frac + ln_choose + k as f64 * ln_pa + (k as f64).ln() + s.ln()));
            }
        }
        if let Some(top) = terms.iter().map(|t| t.1).reduce(f64::max) {
            terms.retain(|t| t.1 - top >= DROP_LN);
        }
        Ok(Signomial { users: n, terms })
    }

    fn ln_terms(&self, epsilon: f64, t: f64) -> impl Iterator<Item = f64> + '_ {
        let (le, lt) = (epsilon.ln(), t.ln());
        self.terms.iter().map(move |&(k, c)| {
            let rest = self.users - k;
            let a = if k == 0 { 0.0 } else { k as f64 * le };
            let b = if rest == 0 { 0.0 } else { rest as f64 * lt };
            c + a + b
        })
    }

    pub fn value(&self, epsilon: f64, t: f64) -> f64 {
        self.ln_terms(epsilon, t).map(f64::exp).sum()
    }

    /// AM-GM weights at `(ε, t)` and the resulting monomial exponent of `ε`.
    fn condensed_exponent(&self, epsilon: f64, t: f64) -> Option<f64> {
        let lt: Vec<f64> = self.ln_terms(epsilon, t).collect();
        let top = lt.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !top.is_finite() {
            return None;
        }
        let mut total = 0.0;
        let mut first = 0.0;
        for (&(k, _), l) in self.terms.iter().zip(&lt) {
            let w = (l - top).exp();
            total += w;
            first += w * k as f64;
        }
        Some(first / total)
    }
}

/// `f(k, L)` for `k = 1..=N`, zero for `k ≥ L`.
pub fn signomial_coefficients(pilot_len: usize, config: &SystemConfig, beamformer: Beamformer) -> Result<Vec<f64>> {
    let s = Signomial::new(pilot_len, config, beamformer)?;
    let mut out = vec![0.0; config.users];
    for (k, c) in s.terms {
        out[k - 1] = c.exp();
    }
    Ok(out)
}

fn exact_objective(config: &SystemConfig, pilot_len: usize, factors: &[f64], epsilon: f64) -> Result<f64> {
    sstr_from_factors(config, pilot_len, epsilon, factors)
}

/// Uniform grid on `[0, 1]` followed by golden-section refinement of the best cell.
pub fn optimize_epsilon_grid(
    pilot_len: usize,
    config: &SystemConfig,
    beamformer: Beamformer,
    grid_size: usize,
) -> Result<OptResult> {
    config.check_pilot_len(pilot_len)?;
    if grid_size < 3 {
        return Err(Error::range("grid_size", format!("{grid_size} < 3")));
    }
    let factors = success_factors(config, beamformer, pilot_len);
    let f = |e: f64| exact_objective(config, pilot_len, &factors, e);
    let step = 1.0 / (grid_size - 1) as f64;
    let mut best = (0.0, f(0.0)?);
    for i in 1..grid_size {
        let e = i as f64 * step;
        let v = f(e)?;
        if v > best.1 {
            best = (e, v);
        }
    }
    let mut evals = grid_size;
    if best.1 > 0.0 {
        let lo = (best.0 - step).max(0.0);
        let hi = (best.0 + step).min(1.0);
        let (e, v, n) = golden_section(lo, hi, &f)?;
        evals += n;
        if v > best.1 {
            best = (e, v);
        }
    }
    Ok(OptResult {
        epsilon: best.0,
        pilot_len,
        value: best.1,
        method: OptMethod::Grid,
        diagnostics: Diagnostics {
            iterations: evals,
            restarts: 0,
            converged: true,
            t: None,
        },
    })
}

fn golden_section(mut a: f64, mut b: f64, f: &impl Fn(f64) -> Result<f64>) -> Result<(f64, f64, usize)> {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    let mut evals = 2;
    while b - a > GOLDEN_TOL {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d)?;
        }
        evals += 1;
    }
    let x = 0.5 * (a + b);
    Ok((x, f(x)?, evals + 1))
}

/// One condensation step: the AM-GM monomial `ε^a t^{N-a}` built at `ε` is maximised on
/// the active constraint `t = 1 - p_a ε`, whose maximiser is `ε = a / (p_a N)`.
fn condense_step(s: &Signomial, p_active: f64, epsilon: f64) -> Option<f64> {
    let a = s.condensed_exponent(epsilon, 1.0 - p_active * epsilon)?;
    Some((a / (p_active * s.users as f64)).clamp(0.0, 1.0))
}

fn condense_from(s: &Signomial, p_active: f64, start: f64) -> (f64, f64, usize, bool) {
    let mut eps = start;
    let mut value = s.value(eps, 1.0 - p_active * eps);
    for it in 1..=CGP_MAX_ITERS {
        let Some(next) = condense_step(s, p_active, eps) else {
            return (eps, value, it, false);
        };
        let next_value = s.value(next, 1.0 - p_active * next);
        let change = (next_value - value).abs();
        eps = next;
        value = next_value;
        if change <= CGP_TOL * value.abs().max(f64::MIN_POSITIVE) {
            return (eps, value, it, true);
        }
    }
    (eps, value, CGP_MAX_ITERS, false)
}

/// Best stationary point of the CGP iteration over `restarts` random starts.
pub fn optimize_epsilon_cgp(
    pilot_len: usize,
    config: &SystemConfig,
    beamformer: Beamformer,
    restarts: usize,
) -> Result<OptResult> {
    if restarts == 0 {
        return Err(Error::range("restarts", "need at least one restart"));
    }
    let s = Signomial::new(pilot_len, config, beamformer)?;
    let mut result = OptResult {
        epsilon: 0.0,
        pilot_len,
        value: 0.0,
        method: OptMethod::Cgp,
        diagnostics: Diagnostics {
            iterations: 0,
            restarts,
            converged: true,
            t: Some(1.0),
        },
    };
    if s.terms.is_empty() {
        return Ok(result);
    }
    // one restart sequence per pilot length
    let mut rng = model::stream_rng(config.seed.wrapping_add(pilot_len as u64), OPTIMIZER_STREAM);
    let mut best: Option<(f64, f64, usize, bool)> = None;
    for _ in 0..restarts {
        let start = loop {
            let e: f64 = rng.random();
            if e > 0.0 {
                break e;
            }
        };
        let run = condense_from(&s, config.p_active, start);
        if best.is_none_or(|b| run.1 > b.1) {
            best = Some(run);
        }
    }
    let (eps, value, iterations, converged) = best.expect("restarts >= 1");
    result.epsilon = eps;
    result.value = value;
    result.diagnostics.iterations = iterations;
    result.diagnostics.converged = converged;
    result.diagnostics.t = Some(1.0 - config.p_active * eps);
    Ok(result)
}

/// Exhaustive search over `L ∈ {1, …, T-1}` at fixed `ε`; ties go to the smaller `L`.
pub fn optimize_length(
    epsilon: f64,
    config: &SystemConfig,
    beamformer: Beamformer,
    use_mean_approx: bool,
) -> Result<OptResult> {
    analytic::check_probability("epsilon", epsilon)?;
    let mut best = (1, f64::NEG_INFINITY);
    for l in 1..config.coherence {
        let point = if use_mean_approx {
            analytic::sstr_mean_approx(l, epsilon, config, beamformer)
        } else {
            analytic::sstr_exact(l, epsilon, config, beamformer)
        };
        let v = match point {
            Ok(p) => p.value,
            Err(Error::DegenerateDistribution { .. }) => 0.0,
            Err(e) => return Err(e),
        };
        if v > best.1 {
            best = (l, v);
        }
    }
    Ok(OptResult {
        epsilon,
        pilot_len: best.0,
        value: best.1,
        method: if use_mean_approx {
            OptMethod::ExhaustiveMeanApprox
        } else {
            OptMethod::ExhaustiveExact
        },
        diagnostics: Diagnostics {
            iterations: config.coherence - 1,
            restarts: 0,
            converged: true,
            t: None,
        },
    })
}

/// `max_L g(L)` with `g(L)` the CGP optimum over `ε`. A pilot length whose CGP run
/// hits the iteration cap falls back to the grid search.
pub fn optimize_joint(config: &SystemConfig, beamformer: Beamformer, restarts: usize) -> Result<OptResult> {
    if config.p_active == 0.0 {
        return Ok(OptResult {
            epsilon: 0.0,
            pilot_len: 1,
            value: 0.0,
            method: OptMethod::Joint,
            diagnostics: Diagnostics {
                iterations: 0,
                restarts,
                converged: true,
                t: Some(1.0),
            },
        });
    }
    let per_l: Vec<OptResult> = (1..config.coherence)
        .into_par_iter()
        .map(|l| {
            let r = optimize_epsilon_cgp(l, config, beamformer, restarts)?;
            if r.diagnostics.converged {
                Ok(r)
            } else {
                optimize_epsilon_grid(l, config, beamformer, DEFAULT_GRID)
            }
        })
        .collect::<Result<_>>()?;
    let mut best = per_l[0];
    for r in &per_l[1..] {
        if r.value > best.value {
            best = *r;
        }
    }
    best.method = OptMethod::Joint;
    Ok(best)
}
