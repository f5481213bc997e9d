//! Vector AMP for joint activity detection and channel estimation.
//!
//! The pilot observation is treated as `Y = A X + Z` with `A` the `L × N`
//! pilot book and row `n` of `X` equal to `α_n √(L ρ_n) h_n`. Under
//! statistical channel inversion every row has the same Bernoulli-Gaussian
//! prior `x ~ (1-λ) δ₀ + λ CN(0, Lγ I_M)`, so a single MMSE denoiser serves
//! all users.

use ndarray::{linalg::general_mat_mul, Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut1, Axis};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{self, PilotBook, SimRng, SystemConfig, TauMode};

/// Relative change of the residual energy below which the iteration stops early.
pub const STOP_TOL: f64 = 1e-5;

/// MMSE denoiser for the Bernoulli-Gaussian row prior at effective noise `τ²`.
#[derive(Debug, Clone, Copy)]
pub struct Denoiser {
    lambda: f64,
    tau2: f64,
    /// Wiener gain `Lγ / (Lγ + τ²)`.
    beta: f64,
    /// Coefficient of `‖r‖²` in the log-likelihood ratio.
    energy_weight: f64,
    /// `ln((1-λ)/λ) + M ln((Lγ+τ²)/τ²)`; undefined for degenerate priors.
    log_odds_offset: f64,
}

impl Denoiser {
    pub fn new(lambda: f64, signal_var: f64, tau2: f64, antennas: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::range("lambda", format!("{lambda} is not a probability")));
        }
        if !(tau2 > 0.0 && tau2.is_finite()) {
            return Err(Error::range("tau2", format!("{tau2} must be positive")));
        }
        if !(signal_var > 0.0) {
            return Err(Error::range("gamma", "signal variance must be positive"));
        }
        let total = signal_var + tau2;
        let log_odds_offset = if lambda > 0.0 && lambda < 1.0 {
            ((1.0 - lambda) / lambda).ln() + antennas as f64 * (total / tau2).ln()
        } else {
            0.0
        };
        Ok(Denoiser {
            lambda,
            tau2,
            beta: signal_var / total,
            energy_weight: signal_var / (tau2 * total),
            log_odds_offset,
        })
    }

    pub fn tau2(&self) -> f64 {
        self.tau2
    }

    pub fn gain(&self) -> f64 {
        self.beta
    }

    /// Posterior activity probability given `‖r‖²`.
    pub fn posterior(&self, energy: f64) -> f64 {
        if self.lambda == 0.0 {
            return 0.0;
        }
        if self.lambda == 1.0 {
            return 1.0;
        }
        // φ = 1 / (1 + exp(z)), z = log-odds of inactivity
        let z = self.log_odds_offset - energy * self.energy_weight;
        if z > 0.0 {
            let e = (-z).exp();
            e / (1.0 + e)
        } else {
            1.0 / (1.0 + z.exp())
        }
    }

    /// Writes `x̂ = β φ r` into `out` and returns `(φ, divergence)`, where the
    /// divergence is the mean diagonal of `∂x̂/∂r` used by the Onsager term.
    pub fn apply(&self, r: ArrayView1<Complex64>, mut out: ArrayViewMut1<Complex64>) -> (f64, f64) {
        let m = r.len() as f64;
        let energy: f64 = r.iter().map(|z| z.norm_sqr()).sum();
        let phi = self.posterior(energy);
        let scale = self.beta * phi;
        out.zip_mut_with(&r, |o, ri| *o = ri * scale);
        let divergence = self.beta * (phi + phi * (1.0 - phi) * self.energy_weight * energy / m);
        (phi, divergence)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Denoised {
    pub estimate: Array1<Complex64>,
    pub posterior: f64,
    pub divergence: f64,
}

/// Denoises one row `r` at noise `τ²` for pilot length `L`, receive power `γ`
/// and activity prior `λ`.
pub fn denoise(r: ArrayView1<Complex64>, tau2: f64, pilot_len: usize, gamma: f64, lambda: f64) -> Result<Denoised> {
    let d = Denoiser::new(lambda, pilot_len as f64 * gamma, tau2, r.len())?;
    let mut estimate = Array1::zeros(r.len());
    let (posterior, divergence) = d.apply(r, estimate.view_mut());
    Ok(Denoised {
        estimate,
        posterior,
        divergence,
    })
}

/// Initial effective noise `σ² + (N/L) λ Lγ`.
fn initial_tau2(config: &SystemConfig, lambda: f64) -> f64 {
    config.sigma2 + config.users as f64 * lambda * config.gamma
}

/// State-evolution schedule `τ_0², …, τ_{iters-1}²` for activity prior `λ`.
///
/// The denoiser MSE is estimated from `se_samples` draws of the prior, split
/// evenly between active and inactive rows and reweighted by `λ`. The same
/// base draws are reused at every iteration.
pub fn state_evolution_for_prior(config: &SystemConfig, pilot_len: usize, lambda: f64) -> Result<Vec<f64>> {
    if pilot_len == 0 {
        return Err(Error::range("L", "pilot length must be at least 1"));
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::range("lambda", format!("{lambda} is not a probability")));
    }
    let m = config.antennas;
    let signal_var = pilot_len as f64 * config.gamma;
    let ratio = config.users as f64 / pilot_len as f64;
    let mut rng: SimRng = model::stream_rng(config.seed, model::STATE_EVOLUTION_STREAM);
    let half = (config.se_samples / 2).max(1);
    let active_x = model::complex_normal_matrix(&mut rng, half, m, signal_var);
    let active_v = model::complex_normal_matrix(&mut rng, half, m, 1.0);
    let inactive_v = model::complex_normal_matrix(&mut rng, config.se_samples - half, m, 1.0);

    let mut schedule = Vec::with_capacity(config.amp_iters);
    let mut tau2 = initial_tau2(config, lambda);
    let mut r = Array1::<Complex64>::zeros(m);
    let mut est = Array1::<Complex64>::zeros(m);
    for _ in 0..config.amp_iters {
        schedule.push(tau2);
        let d = Denoiser::new(lambda, signal_var, tau2, m)?;
        let tau = tau2.sqrt();
        let mut active_mse = 0.0;
        if lambda > 0.0 {
            for (x, v) in active_x.outer_iter().zip(active_v.outer_iter()) {
                r.zip_mut_with(&x, |ri, xi| *ri = *xi);
                r.scaled_add(Complex64::from(tau), &v);
                d.apply(r.view(), est.view_mut());
                active_mse += est.iter().zip(x.iter()).map(|(e, xi)| (e - xi).norm_sqr()).sum::<f64>();
            }
            active_mse /= half as f64;
        }
        let mut inactive_mse = 0.0;
        if lambda < 1.0 {
            for v in inactive_v.outer_iter() {
                r.zip_mut_with(&v, |ri, vi| *ri = vi * tau);
                d.apply(r.view(), est.view_mut());
                inactive_mse += est.iter().map(|e| e.norm_sqr()).sum::<f64>();
            }
            inactive_mse /= inactive_v.nrows() as f64;
        }
        let mse = lambda * active_mse + (1.0 - lambda) * inactive_mse;
        tau2 = config.sigma2 + ratio * mse / m as f64;
    }
    Ok(schedule)
}

/// State evolution at access parameter `ε` (prior `λ = p_a ε`).
pub fn state_evolution(config: &SystemConfig, pilot_len: usize, epsilon: f64) -> Result<Vec<f64>> {
    state_evolution_for_prior(config, pilot_len, config.activation_probability(epsilon))
}

/// Output of an AMP run.
#[derive(Debug, Clone, PartialEq)]
pub struct AmpEstimate {
    /// `N × M` row estimates `x̂_n`.
    pub estimates: Array2<Complex64>,
    pub posterior: Vec<f64>,
    /// Effective noise variance used at each iteration.
    pub tau2: Vec<f64>,
    /// Residual energy `‖R^t‖² / (L M)` at each iteration.
    pub residual_energy: Vec<f64>,
    pub detected: Vec<bool>,
    /// `1 / √(L ρ_n)`, maps `x̂_n` back to a channel estimate.
    pub channel_scale: Vec<f64>,
}

/// Detected users with their channel estimates as the columns of an `M × K̂` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub users: Vec<usize>,
    pub channels: Array2<Complex64>,
}

impl Detection {
    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }
}

/// Reusable AMP receiver for one operating point `(L, λ)`.
#[derive(Debug, Clone)]
pub struct Amp {
    lambda: f64,
    pilot_len: usize,
    antennas: usize,
    signal_var: f64,
    threshold: f64,
    tau_mode: TauMode,
    iters: usize,
    damping: f64,
    schedule: Vec<f64>,
    channel_scale: Vec<f64>,
    initial_tau2: f64,
}

impl Amp {
    /// Builds the receiver, running state evolution once when configured to use it.
    pub fn new(config: &SystemConfig, pilot_len: usize, lambda: f64) -> Result<Self> {
        let schedule = match config.tau_mode {
            TauMode::StateEvolution => state_evolution_for_prior(config, pilot_len, lambda)?,
            TauMode::Empirical => Vec::new(),
        };
        let powers = model::power_control(&config.gains(), config.gamma)?;
        Ok(Amp {
            lambda,
            pilot_len,
            antennas: config.antennas,
            signal_var: pilot_len as f64 * config.gamma,
            threshold: config.detection_threshold,
            tau_mode: config.tau_mode,
            iters: config.amp_iters,
            damping: config.amp_damping,
            schedule,
            channel_scale: powers.iter().map(|rho| 1.0 / (pilot_len as f64 * rho).sqrt()).collect(),
            initial_tau2: initial_tau2(config, lambda),
        })
    }

    pub fn schedule(&self) -> &[f64] {
        &self.schedule
    }

    /// Runs the iteration on pilot observation `y` (`L × M`).
    pub fn solve(&self, y: ArrayView2<Complex64>, pilots: &PilotBook) -> Result<AmpEstimate> {
        let a = &pilots.matrix;
        let (l, n) = a.dim();
        if y.nrows() != l || l != self.pilot_len {
            return Err(Error::ShapeMismatch(format!(
                "observation has {} rows, pilot book has {l}, receiver built for L = {}",
                y.nrows(),
                self.pilot_len
            )));
        }
        if y.ncols() != self.antennas {
            return Err(Error::ShapeMismatch(format!("observation has {} columns, M = {}", y.ncols(), self.antennas)));
        }
        if n != self.channel_scale.len() {
            return Err(Error::ShapeMismatch(format!(
                "pilot book has {n} users, config has {}",
                self.channel_scale.len()
            )));
        }
        let m = self.antennas;
        let a_h = a.t().mapv(|z| z.conj());
        let one = Complex64::from(1.0);
        let ratio = n as f64 / l as f64;

        let damp = self.damping;
        let mut x = Array2::<Complex64>::zeros((n, m));
        let mut x_prev = Array2::<Complex64>::zeros((n, m));
        let mut residual = y.to_owned();
        let mut pseudo = Array2::<Complex64>::zeros((n, m));
        let mut posterior = vec![0.0; n];
        let mut tau2_used = Vec::with_capacity(self.iters);
        let mut residual_energy: Vec<f64> = Vec::with_capacity(self.iters);

        for t in 0..self.iters {
            let energy = residual.iter().map(|z| z.norm_sqr()).sum::<f64>() / (l * m) as f64;
            if let Some(&last) = residual_energy.last() {
                if (last - energy).abs() <= STOP_TOL * last {
                    break;
                }
            }
            residual_energy.push(energy);
            let tau2 = match self.tau_mode {
                // the schedule is a large-system prediction; never go below the observed residual
                TauMode::StateEvolution => self.schedule[t].max(energy),
                TauMode::Empirical if t == 0 => self.initial_tau2.max(energy),
                TauMode::Empirical => energy,
            }
            .max(f64::MIN_POSITIVE);
            tau2_used.push(tau2);
            let d = Denoiser::new(self.lambda, self.signal_var, tau2, m)?;

            // pseudo-data X + Aᴴ R
            pseudo.assign(&x);
            general_mat_mul(one, &a_h, &residual, one, &mut pseudo);
            let mut divergence = 0.0;
            for ((r_row, x_row), post) in pseudo.outer_iter().zip(x_prev.outer_iter_mut()).zip(posterior.iter_mut()) {
                let (phi, div) = d.apply(r_row, x_row);
                *post = phi;
                divergence += div;
            }
            // x_prev now holds η(pseudo); blend it into the running estimate
            x.zip_mut_with(&x_prev, |x, e| *x = *x * (1.0 - damp) + e * damp);
            let onsager = ratio * damp * divergence / n as f64;

            let mut next = y.to_owned();
            general_mat_mul(-one, a, &x, one, &mut next);
            next.scaled_add(Complex64::from(onsager), &residual);
            residual = next;
        }

        let detected = posterior.iter().map(|p| *p >= self.threshold).collect();
        Ok(AmpEstimate {
            estimates: x,
            posterior,
            tau2: tau2_used,
            residual_energy,
            detected,
            channel_scale: self.channel_scale.clone(),
        })
    }
}

/// One-shot AMP at access parameter `ε`.
pub fn run(y: ArrayView2<Complex64>, pilots: &PilotBook, config: &SystemConfig, epsilon: f64) -> Result<AmpEstimate> {
    Amp::new(config, pilots.len(), config.activation_probability(epsilon))?.solve(y, pilots)
}

/// Hard decisions from the stored posteriors and the rescaled channel estimates
/// `ĥ_n = x̂_n / √(L ρ_n)` of the detected users.
pub fn decide_activity(estimate: &AmpEstimate) -> Detection {
    let users: Vec<usize> = estimate
        .detected
        .iter()
        .enumerate()
        .filter(|(_, d)| **d)
        .map(|(n, _)| n)
        .collect();
    let m = estimate.estimates.ncols();
    let mut channels = Array2::zeros((m, users.len()));
    for (mut col, &n) in channels.axis_iter_mut(Axis(1)).zip(&users) {
        let scale = estimate.channel_scale[n];
        col.zip_mut_with(&estimate.estimates.row(n), |c, x| *c = x * scale);
    }
    Detection { users, channels }
}

/// Re-thresholds posteriors, for sensitivity studies on a finished estimate.
pub fn apply_threshold(estimate: &mut AmpEstimate, threshold: f64) {
    for (d, p) in estimate.detected.iter_mut().zip(&estimate.posterior) {
        *d = *p >= threshold;
    }
}
