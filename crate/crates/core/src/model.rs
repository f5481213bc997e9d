//! Scenario parameters and the random draws behind one coherence interval.
//!
//! Every draw takes an explicit [`SimRng`]. Streams come from
//! [`stream_rng`], so a draw is a pure function of `(seed, stream id)` and
//! concurrent workers never share generator state.

use ndarray::Array2;
use num_complex::Complex64;
use rand::{seq::index, Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type SimRng = ChaCha8Rng;

/// Stream reserved for the state-evolution sample set.
pub const STATE_EVOLUTION_STREAM: u64 = u64::MAX;
/// Stream reserved for a fixed pilot book.
pub const PILOT_BOOK_STREAM: u64 = u64::MAX - 1;
/// Stream reserved for CGP restart points.
pub const OPTIMIZER_STREAM: u64 = u64::MAX - 2;

/// Generator for stream `stream` of the experiment seeded with `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Receive beamforming strategy at the base station.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Beamformer {
    Mrc,
    Zf,
}

impl Beamformer {
    pub const ALL: [Beamformer; 2] = [Beamformer::Mrc, Beamformer::Zf];

    pub fn name(self) -> &'static str {
        match self {
            Beamformer::Mrc => "MRC",
            Beamformer::Zf => "ZF",
        }
    }
}

impl std::str::FromStr for Beamformer {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "mrc" => Ok(Beamformer::Mrc),
            "zf" => Ok(Beamformer::Zf),
            other => Err(format!("unknown beamformer `{other}` (expected MRC or ZF)")),
        }
    }
}

/// How AMP obtains its per-iteration effective noise variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TauMode {
    /// Sampled state-evolution recursion, computed once per operating point.
    StateEvolution,
    /// Residual energy `‖R‖² / (L M)` of the running iterate.
    Empirical,
}

/// All scenario parameters plus the numerical controls of the simulator.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    /// Number of potential users `N`.
    pub users: usize,
    /// Base-station antennas `M`.
    pub antennas: usize,
    /// Coherence-interval length `T` in symbols.
    pub coherence: usize,
    /// Data-generation probability `p_a`.
    pub p_active: f64,
    /// Target receive power `γ` (linear).
    pub gamma: f64,
    /// Noise power `σ²` (linear).
    pub sigma2: f64,
    /// PSK order `W`, 2 or 4.
    pub psk_order: usize,
    /// Upper bound on AMP iterations; the loop also stops once the residual settles.
    pub amp_iters: usize,
    /// Step size of the AMP estimate update, 1 for the undamped recursion.
    pub amp_damping: f64,
    pub se_samples: usize,
    pub seed: u64,
    /// Posterior threshold for declaring a user active.
    pub detection_threshold: f64,
    pub tau_mode: TauMode,
    /// Reuse a single pilot book for every trial instead of redrawing it.
    pub fixed_pilots: bool,
    /// Large-scale gains `γ_n`; `None` means all ones.
    pub path_gains: Option<Vec<f64>>,
}

impl Default for SystemConfig {
    fn default() -> Self {
        SystemConfig {
            users: 2000,
            antennas: 128,
            coherence: 200,
            p_active: 0.1,
            gamma: 10.0,
            sigma2: 1.0,
            psk_order: 4,
            amp_iters: 50,
            amp_damping: 0.7,
            se_samples: 2000,
            seed: 0,
            detection_threshold: 0.5,
            tau_mode: TauMode::StateEvolution,
            fixed_pilots: false,
            path_gains: None,
        }
    }
}

impl SystemConfig {
    /// Checks every invariant and returns the config unchanged when it holds.
    pub fn validate(self) -> Result<Self> {
        if self.users == 0 {
            return Err(Error::range("N", "need at least one user"));
        }
        if self.antennas == 0 {
            return Err(Error::range("M", "need at least one antenna"));
        }
        if self.coherence < 2 {
            return Err(Error::range("T", "coherence interval must hold at least 2 symbols"));
        }
        if !(0.0..=1.0).contains(&self.p_active) {
            return Err(Error::range("p_a", format!("{} is not a probability", self.p_active)));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::range("gamma", format!("{} must be positive", self.gamma)));
        }
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return Err(Error::range("sigma2", format!("{} must be positive", self.sigma2)));
        }
        if !matches!(self.psk_order, 2 | 4) {
            return Err(Error::range("W", format!("PSK order {} not supported (2 or 4)", self.psk_order)));
        }
        if self.amp_iters == 0 {
            return Err(Error::range("amp_iters", "need at least one AMP iteration"));
        }
        if !(self.amp_damping > 0.0 && self.amp_damping <= 1.0) {
            return Err(Error::range("amp_damping", format!("{} outside (0, 1]", self.amp_damping)));
        }
        if self.se_samples < 2 {
            return Err(Error::range("se_samples", "need at least two samples"));
        }
        if !(0.0..=1.0).contains(&self.detection_threshold) {
            return Err(Error::range("threshold", "must lie in [0, 1]"));
        }
        if let Some(gains) = &self.path_gains {
            if gains.len() != self.users {
                return Err(Error::range("path_gains", format!("expected {} gains, got {}", self.users, gains.len())));
            }
            if gains.iter().any(|g| !(*g > 0.0 && g.is_finite())) {
                return Err(Error::range("path_gains", "gains must be positive"));
            }
        }
        Ok(self)
    }

    /// Sets `γ` from an SNR in dB relative to the configured `σ²`.
    pub fn with_snr_db(mut self, snr_db: f64) -> Self {
        self.gamma = self.sigma2 * 10f64.powf(snr_db / 10.0);
        self
    }

    pub fn snr_db(&self) -> f64 {
        10.0 * (self.gamma / self.sigma2).log10()
    }

    /// Per-user activation probability `p_a ε`.
    pub fn activation_probability(&self, epsilon: f64) -> f64 {
        self.p_active * epsilon
    }

    pub fn gains(&self) -> Vec<f64> {
        self.path_gains.clone().unwrap_or_else(|| vec![1.0; self.users])
    }

    pub(crate) fn check_pilot_len(&self, pilot_len: usize) -> Result<()> {
        if pilot_len == 0 || pilot_len >= self.coherence {
            return Err(Error::range(
                "L",
                format!("pilot length {pilot_len} outside [1, {}]", self.coherence - 1),
            ));
        }
        Ok(())
    }
}

/// Free-function form of [`SystemConfig::validate`].
pub fn validate_config(raw: SystemConfig) -> Result<SystemConfig> {
    raw.validate()
}

/// Statistical channel inversion: `ρ_n = γ / γ_n`, shared by pilot and data symbols.
pub fn power_control(gains: &[f64], gamma: f64) -> Result<Vec<f64>> {
    if !(gamma > 0.0) {
        return Err(Error::range("gamma", "receive power must be positive"));
    }
    gains
        .iter()
        .map(|&g| {
            if g > 0.0 && g.is_finite() {
                Ok(gamma / g)
            } else {
                Err(Error::range("path_gains", format!("nonpositive gain {g}")))
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActivityVector {
    pub alpha: Vec<bool>,
    pub active: usize,
}

impl ActivityVector {
    pub fn from_alpha(alpha: Vec<bool>) -> Self {
        let active = alpha.iter().filter(|a| **a).count();
        ActivityVector { alpha, active }
    }

    pub fn active_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.alpha.iter().enumerate().filter(|(_, a)| **a).map(|(n, _)| n)
    }

    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }
}

/// I.i.d. Bernoulli(`p_a ε`) activity for every user.
pub fn draw_activity(rng: &mut SimRng, config: &SystemConfig, epsilon: f64) -> ActivityVector {
    let lambda = config.activation_probability(epsilon).clamp(0.0, 1.0);
    let alpha = (0..config.users).map(|_| rng.random_bool(lambda)).collect();
    ActivityVector::from_alpha(alpha)
}

/// Exactly `k` active users chosen uniformly at random; used to condition on `K = k`.
pub fn draw_activity_exact(rng: &mut SimRng, users: usize, k: usize) -> Result<ActivityVector> {
    if k > users {
        return Err(Error::range("k", format!("{k} active users out of {users}")));
    }
    let mut alpha = vec![false; users];
    for n in index::sample(rng, users, k) {
        alpha[n] = true;
    }
    Ok(ActivityVector { alpha, active: k })
}

/// One `CN(0, variance)` sample.
pub fn complex_normal(rng: &mut SimRng, variance: f64) -> Complex64 {
    let scale = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(scale * re, scale * im)
}

pub(crate) fn complex_normal_matrix(rng: &mut SimRng, rows: usize, cols: usize, variance: f64) -> Array2<Complex64> {
    // Filled in row-major order so the draw sequence is layout independent.
    Array2::from_shape_simple_fn((rows, cols), || complex_normal(rng, variance))
}

/// Pilot sequences, column `n` is user `n`'s pilot `a_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotBook {
    pub matrix: Array2<Complex64>,
}

impl PilotBook {
    pub fn len(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.nrows() == 0
    }

    pub fn users(&self) -> usize {
        self.matrix.ncols()
    }
}

/// `L × N` pilot book with i.i.d. `CN(0, 1/L)` entries.
pub fn draw_pilots(rng: &mut SimRng, users: usize, pilot_len: usize) -> Result<PilotBook> {
    if pilot_len == 0 {
        return Err(Error::range("L", "pilot length must be at least 1"));
    }
    Ok(PilotBook {
        matrix: complex_normal_matrix(rng, pilot_len, users, 1.0 / pilot_len as f64),
    })
}

/// Uplink channels, column `n` is `h_n ~ CN(0, γ_n I_M)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    pub matrix: Array2<Complex64>,
    pub gains: Vec<f64>,
}

pub fn draw_channels(rng: &mut SimRng, config: &SystemConfig) -> ChannelSet {
    let gains = config.gains();
    let mut matrix = complex_normal_matrix(rng, config.antennas, config.users, 1.0);
    for (mut col, g) in matrix.columns_mut().into_iter().zip(&gains) {
        col *= Complex64::from(g.sqrt());
    }
    ChannelSet { matrix, gains }
}
