//! End-to-end Monte-Carlo of one coherence interval and the empirical SSTR estimator.

use std::f64::consts::FRAC_1_SQRT_2;

use nalgebra::DMatrix;
use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;

use crate::amp::{self, Amp};
use crate::analytic::{self, SstrMethod, SstrPoint};
use crate::error::{Error, Result};
use crate::model::{
    self, ActivityVector, Beamformer, ChannelSet, PilotBook, SimRng, SystemConfig, PILOT_BOOK_STREAM,
};

/// Gram matrices with a larger eigenvalue spread are treated as singular.
pub const ZF_MAX_CONDITION: f64 = 1e10;

const Z95: f64 = 1.96;

/// Unit-energy PSK points. QPSK starts at `e^{jπ/4}` and runs counter-clockwise.
pub fn constellation(psk_order: usize) -> Result<Vec<Complex64>> {
    match psk_order {
        2 => Ok(vec![Complex64::new(1.0, 0.0), Complex64::new(-1.0, 0.0)]),
        4 => Ok([(1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0)]
            .iter()
            .map(|(re, im)| Complex64::new(re * FRAC_1_SQRT_2, im * FRAC_1_SQRT_2))
            .collect()),
        w => Err(Error::range("W", format!("PSK order {w} not supported, use 2 or 4"))),
    }
}

/// Index of the nearest constellation point; ties go to the lowest index.
pub fn nearest_point(points: &[Complex64], r: Complex64) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, s) in points.iter().enumerate() {
        let d = (r - s).norm_sqr();
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    best
}

/// Pilot-phase observation `Y = Σ_n √(L ρ_n) α_n a_n h_nᵀ + Z` (`L × M`).
pub fn pilot_phase(
    rng: &mut SimRng,
    config: &SystemConfig,
    pilots: &PilotBook,
    activity: &ActivityVector,
    channels: &ChannelSet,
) -> Result<Array2<Complex64>> {
    let (l, n) = pilots.matrix.dim();
    check_users(config, n, "pilot book")?;
    check_users(config, activity.len(), "activity vector")?;
    check_channels(config, channels)?;
    let powers = model::power_control(&channels.gains, config.gamma)?;

    let active: Vec<usize> = activity.active_indices().collect();
    let m = config.antennas;
    let mut y = model::complex_normal_matrix(rng, l, m, config.sigma2);
    if active.is_empty() {
        return Ok(y);
    }
    let a_act = pilots.matrix.select(Axis(1), &active);
    let mut x = Array2::<Complex64>::zeros((active.len(), m));
    for (mut row, &u) in x.outer_iter_mut().zip(&active) {
        let amp = (l as f64 * powers[u]).sqrt();
        row.zip_mut_with(&channels.matrix.column(u), |x, h| *x = h * amp);
    }
    let one = Complex64::from(1.0);
    general_mat_mul(one, &a_act, &x, one, &mut y);
    Ok(y)
}

/// Receive beamformers for the estimated channel matrix `Ĝ` (`M × K̂`).
pub fn beamformers(g_hat: ArrayView2<Complex64>, kind: Beamformer) -> Result<Array2<Complex64>> {
    match kind {
        Beamformer::Mrc => Ok(g_hat.to_owned()),
        Beamformer::Zf => zero_forcing(g_hat),
    }
}

fn zero_forcing(g_hat: ArrayView2<Complex64>) -> Result<Array2<Complex64>> {
    let (m, k) = g_hat.dim();
    if k == 0 {
        return Ok(Array2::zeros((m, 0)));
    }
    if k >= m {
        return Err(Error::ZfUnavailable(format!("{k} detected users with {m} antennas")));
    }
    let g = DMatrix::from_fn(m, k, |i, j| g_hat[[i, j]]);
    let gram = g.adjoint() * &g;
    let eig = gram.clone().symmetric_eigenvalues();
    let (lo, hi) = eig.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), e| (lo.min(*e), hi.max(*e)));
    if !(lo > 0.0) {
        return Err(Error::ZfUnavailable(format!("rank-deficient Gram matrix (smallest eigenvalue {lo:.3e})")));
    }
    if hi / lo > ZF_MAX_CONDITION {
        return Err(Error::ZfUnavailable(format!("Gram condition number {:.3e}", hi / lo)));
    }
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::ZfUnavailable("Gram matrix not positive definite".into()))?;
    let u = g * chol.inverse();
    Ok(Array2::from_shape_fn((m, k), |(i, j)| u[(i, j)]))
}

/// Data-phase observation `y = Σ_{active n} √ρ_n h_n s_n + z`. Entries of `symbols`
/// for inactive users are ignored.
pub fn data_phase(
    rng: &mut SimRng,
    config: &SystemConfig,
    activity: &ActivityVector,
    channels: &ChannelSet,
    symbols: &[Complex64],
) -> Result<Array1<Complex64>> {
    check_users(config, activity.len(), "activity vector")?;
    check_users(config, symbols.len(), "symbol vector")?;
    check_channels(config, channels)?;
    let powers = model::power_control(&channels.gains, config.gamma)?;
    let mut y = Array1::from_shape_simple_fn(config.antennas, || model::complex_normal(rng, config.sigma2));
    for n in activity.active_indices() {
        let c = symbols[n] * powers[n].sqrt();
        y.zip_mut_with(&channels.matrix.column(n), |y, h| *y += h * c);
    }
    Ok(y)
}

/// Minimum-distance detection for every beamformer column. `powers[j]` is the
/// transmit power `ρ` of the user in column `j`. Returns constellation indices.
pub fn detect_symbols(
    y: ArrayView1<Complex64>,
    u_hat: ArrayView2<Complex64>,
    h_hat: ArrayView2<Complex64>,
    powers: &[f64],
    psk_order: usize,
) -> Result<Vec<usize>> {
    if u_hat.dim() != h_hat.dim() || u_hat.nrows() != y.len() || powers.len() != u_hat.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "y {}, U {:?}, H {:?}, {} powers",
            y.len(),
            u_hat.dim(),
            h_hat.dim(),
            powers.len()
        )));
    }
    let points = constellation(psk_order)?;
    Ok(u_hat
        .columns()
        .into_iter()
        .zip(h_hat.columns())
        .zip(powers)
        .map(|((u, h), rho)| {
            let r = inner(u, y);
            let g = inner(u, h) * rho.sqrt();
            let scaled: Vec<Complex64> = points.iter().map(|s| g * s).collect();
            nearest_point(&scaled, r)
        })
        .collect())
}

fn inner(u: ArrayView1<Complex64>, v: ArrayView1<Complex64>) -> Complex64 {
    u.iter().zip(v).map(|(a, b)| a.conj() * b).sum()
}

fn check_users(config: &SystemConfig, n: usize, what: &str) -> Result<()> {
    if n != config.users {
        return Err(Error::ShapeMismatch(format!("{what} has {n} users, config has {}", config.users)));
    }
    Ok(())
}

fn check_channels(config: &SystemConfig, channels: &ChannelSet) -> Result<()> {
    if channels.matrix.dim() != (config.antennas, config.users) || channels.gains.len() != config.users {
        return Err(Error::ShapeMismatch(format!(
            "channel matrix {:?}, expected ({}, {})",
            channels.matrix.dim(),
            config.antennas,
            config.users
        )));
    }
    Ok(())
}

/// Per-user result of one simulated coherence interval.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub alpha: Vec<bool>,
    pub alpha_hat: Vec<bool>,
    /// True only where the user was active, detected and its symbol decoded correctly.
    pub symbol_correct: Vec<bool>,
    pub pilot_len: usize,
    pub epsilon: f64,
}

impl TrialOutcome {
    pub fn active(&self) -> usize {
        self.alpha.iter().filter(|a| **a).count()
    }

    pub fn successes(&self) -> usize {
        self.symbol_correct.iter().filter(|c| **c).count()
    }

    pub fn missed(&self) -> usize {
        self.alpha.iter().zip(&self.alpha_hat).filter(|(a, d)| **a && !**d).count()
    }

    pub fn false_alarms(&self) -> usize {
        self.alpha.iter().zip(&self.alpha_hat).filter(|(a, d)| !**a && **d).count()
    }
}

/// One interval up to the data-phase observation; the beamformer is applied last
/// so that every beamformer sees the same draws.
struct Interval {
    activity: ActivityVector,
    detection: amp::Detection,
    alpha_hat: Vec<bool>,
    sent: Vec<usize>,
    y_data: Array1<Complex64>,
    powers: Vec<f64>,
}

impl Interval {
    fn outcome(&self, config: &SystemConfig, kind: Beamformer, pilot_len: usize, epsilon: f64) -> Result<TrialOutcome> {
        let mut symbol_correct = vec![false; config.users];
        let g = self.detection.channels.view();
        match beamformers(g, kind) {
            Ok(u) => {
                let powers: Vec<f64> = self.detection.users.iter().map(|&n| self.powers[n]).collect();
                let decided = detect_symbols(self.y_data.view(), u.view(), g, &powers, config.psk_order)?;
                for (&n, s) in self.detection.users.iter().zip(decided) {
                    symbol_correct[n] = self.activity.alpha[n] && s == self.sent[n];
                }
            }
            // all symbols of this interval count as failed
            Err(Error::ZfUnavailable(_)) => {}
            Err(e) => return Err(e),
        }
        Ok(TrialOutcome {
            alpha: self.activity.alpha.clone(),
            alpha_hat: self.alpha_hat.clone(),
            symbol_correct,
            pilot_len,
            epsilon,
        })
    }
}

fn simulate_interval(
    rng: &mut SimRng,
    config: &SystemConfig,
    receiver: &Amp,
    fixed_book: Option<&PilotBook>,
    activity: ActivityVector,
    pilot_len: usize,
) -> Result<Interval> {
    let drawn;
    let pilots = match fixed_book {
        Some(book) => book,
        None => {
            drawn = model::draw_pilots(rng, config.users, pilot_len)?;
            &drawn
        }
    };
    let channels = model::draw_channels(rng, config);
    let y = pilot_phase(rng, config, pilots, &activity, &channels)?;
    let estimate = receiver.solve(y.view(), pilots)?;
    let detection = amp::decide_activity(&estimate);

    let points = constellation(config.psk_order)?;
    let mut sent = vec![0usize; config.users];
    let mut symbols = vec![Complex64::from(0.0); config.users];
    for n in activity.active_indices() {
        sent[n] = rng.random_range(0..points.len());
        symbols[n] = points[sent[n]];
    }
    let y_data = data_phase(rng, config, &activity, &channels, &symbols)?;
    let powers = model::power_control(&channels.gains, config.gamma)?;
    Ok(Interval {
        activity,
        detection,
        alpha_hat: estimate.detected,
        sent,
        y_data,
        powers,
    })
}

/// Pilot book shared by all trials when `fixed_pilots` is set.
pub fn fixed_pilot_book(config: &SystemConfig, pilot_len: usize) -> Result<PilotBook> {
    model::draw_pilots(&mut model::stream_rng(config.seed, PILOT_BOOK_STREAM), config.users, pilot_len)
}

/// Simulates one coherence interval at `(L, ε)`.
pub fn run_trial(
    rng: &mut SimRng,
    config: &SystemConfig,
    pilot_len: usize,
    epsilon: f64,
    beamformer: Beamformer,
) -> Result<TrialOutcome> {
    let runner = TrialRunner::new(config, pilot_len, epsilon)?;
    runner.run(rng, &[beamformer]).map(|mut v| v.remove(0))
}

/// Activity model of a batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activity {
    /// Bernoulli(`p_a ε`) per user.
    Random { epsilon: f64 },
    /// Exactly `k` users active, AMP prior set to `k / N`.
    Conditioned { k: usize },
}

/// Receiver state shared by the trials of one operating point.
pub struct TrialRunner<'a> {
    config: &'a SystemConfig,
    pilot_len: usize,
    activity: Activity,
    receiver: Amp,
    book: Option<PilotBook>,
}

impl<'a> TrialRunner<'a> {
    pub fn new(config: &'a SystemConfig, pilot_len: usize, epsilon: f64) -> Result<Self> {
        analytic::check_probability("epsilon", epsilon)?;
        Self::with_activity(config, pilot_len, Activity::Random { epsilon })
    }

    pub fn conditioned(config: &'a SystemConfig, pilot_len: usize, k: usize) -> Result<Self> {
        Self::with_activity(config, pilot_len, Activity::Conditioned { k })
    }

    fn with_activity(config: &'a SystemConfig, pilot_len: usize, activity: Activity) -> Result<Self> {
        config.check_pilot_len(pilot_len)?;
        let lambda = match activity {
            Activity::Random { epsilon } => config.activation_probability(epsilon),
            Activity::Conditioned { k } => {
                if k > config.users {
                    return Err(Error::range("k", format!("{k} active users out of {}", config.users)));
                }
                k as f64 / config.users as f64
            }
        };
        let receiver = Amp::new(config, pilot_len, lambda)?;
        let book = if config.fixed_pilots {
            Some(fixed_pilot_book(config, pilot_len)?)
        } else {
            None
        };
        Ok(TrialRunner {
            config,
            pilot_len,
            activity,
            receiver,
            book,
        })
    }

    fn epsilon(&self) -> f64 {
        match self.activity {
            Activity::Random { epsilon } => epsilon,
            Activity::Conditioned { .. } => f64::NAN,
        }
    }

    /// One interval evaluated under each beamformer in `kinds`.
    pub fn run(&self, rng: &mut SimRng, kinds: &[Beamformer]) -> Result<Vec<TrialOutcome>> {
        let activity = match self.activity {
            Activity::Random { epsilon } => model::draw_activity(rng, self.config, epsilon),
            Activity::Conditioned { k } => model::draw_activity_exact(rng, self.config.users, k)?,
        };
        let interval = simulate_interval(rng, self.config, &self.receiver, self.book.as_ref(), activity, self.pilot_len)?;
        kinds
            .iter()
            .map(|k| interval.outcome(self.config, *k, self.pilot_len, self.epsilon()))
            .collect()
    }

    /// Trials `0..trials` in parallel; trial `i` uses stream `i` of the config seed.
    /// Result is indexed `[beamformer][trial]`.
    pub fn run_batch(&self, trials: usize, kinds: &[Beamformer]) -> Result<Vec<Vec<TrialOutcome>>> {
        let per_trial: Vec<Vec<TrialOutcome>> = (0..trials as u64)
            .into_par_iter()
            .map(|i| self.run(&mut model::stream_rng(self.config.seed, i), kinds))
            .collect::<Result<_>>()?;
        let mut by_kind: Vec<Vec<TrialOutcome>> = kinds.iter().map(|_| Vec::with_capacity(trials)).collect();
        for outcomes in per_trial {
            for (slot, o) in by_kind.iter_mut().zip(outcomes) {
                slot.push(o);
            }
        }
        Ok(by_kind)
    }
}

fn mean_and_half_width(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, Z95 * (var / n).sqrt())
}

/// `(T-L)/T` times the sample mean of successful symbols, with a 95% half-width.
pub fn empirical_sstr(trials: &[TrialOutcome], coherence: usize) -> Result<SstrPoint> {
    if trials.len() < 2 {
        return Err(Error::InsufficientTrials(trials.len()));
    }
    let (pilot_len, epsilon) = (trials[0].pilot_len, trials[0].epsilon);
    if trials
        .iter()
        .any(|t| t.pilot_len != pilot_len || t.epsilon.to_bits() != epsilon.to_bits())
    {
        return Err(Error::ShapeMismatch("trials from different operating points".into()));
    }
    if pilot_len >= coherence {
        return Err(Error::range("L", format!("{pilot_len} not below T = {coherence}")));
    }
    let frac = (coherence - pilot_len) as f64 / coherence as f64;
    let counts: Vec<f64> = trials.iter().map(|t| t.successes() as f64).collect();
    let (mean, hw) = mean_and_half_width(&counts);
    Ok(SstrPoint {
        pilot_len,
        epsilon,
        value: frac * mean,
        method: SstrMethod::MonteCarlo,
        half_width: frac * hw,
    })
}

/// Per-user success rate at a conditioned `K = k`, scaled by `(T-L)/T`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionalRate {
    pub k: usize,
    pub pilot_len: usize,
    pub value: f64,
    pub half_width: f64,
    /// Fraction of active users declared inactive.
    pub miss_rate: f64,
}

pub fn conditional_rate(trials: &[TrialOutcome], coherence: usize) -> Result<ConditionalRate> {
    if trials.len() < 2 {
        return Err(Error::InsufficientTrials(trials.len()));
    }
    let k = trials[0].active();
    let pilot_len = trials[0].pilot_len;
    if k == 0 || trials.iter().any(|t| t.active() != k || t.pilot_len != pilot_len) {
        return Err(Error::ShapeMismatch("conditioned trials need a common nonzero k and L".into()));
    }
    let frac = (coherence - pilot_len) as f64 / coherence as f64;
    let rates: Vec<f64> = trials.iter().map(|t| t.successes() as f64 / k as f64).collect();
    let (mean, hw) = mean_and_half_width(&rates);
    let missed: usize = trials.iter().map(TrialOutcome::missed).sum();
    Ok(ConditionalRate {
        k,
        pilot_len,
        value: frac * mean,
        half_width: frac * hw,
        miss_rate: missed as f64 / (k * trials.len()) as f64,
    })
}

/// Monte-Carlo SSTR values over a swept parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct SstrCurve {
    pub sweep_name: String,
    pub points: Vec<SstrPoint>,
    pub trials: usize,
}

/// Empirical SSTR at each `(L, ε)` point, one curve per beamformer in `kinds`.
pub fn sstr_curve(
    config: &SystemConfig,
    sweep_name: &str,
    points: &[(usize, f64)],
    trials: usize,
    kinds: &[Beamformer],
) -> Result<Vec<SstrCurve>> {
    let mut curves: Vec<SstrCurve> = kinds
        .iter()
        .map(|_| SstrCurve {
            sweep_name: sweep_name.to_string(),
            points: Vec::with_capacity(points.len()),
            trials,
        })
        .collect();
    for &(l, eps) in points {
        let batch = TrialRunner::new(config, l, eps)?.run_batch(trials, kinds)?;
        for (curve, outcomes) in curves.iter_mut().zip(&batch) {
            curve.points.push(empirical_sstr(outcomes, config.coherence)?);
        }
    }
    Ok(curves)
}

/// Symbol error count of minimum-distance detection on `r = s + n`, `n ~ CN(0, 1/Γ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenieSer {
    pub errors: usize,
    pub symbols: usize,
}

impl GenieSer {
    pub fn rate(&self) -> f64 {
        self.errors as f64 / self.symbols as f64
    }

    /// Standard error of the rate estimate under the binomial model.
    pub fn std_error(&self) -> f64 {
        let p = self.rate();
        (p * (1.0 - p) / self.symbols as f64).sqrt()
    }
}

/// Interference-free detection at a given SINR, i.e. perfect CSI and known activity.
pub fn genie_ser(rng: &mut SimRng, psk_order: usize, sinr: f64, symbols: usize) -> Result<GenieSer> {
    if !(sinr > 0.0) {
        return Err(Error::range("sinr", format!("{sinr} must be positive")));
    }
    let points = constellation(psk_order)?;
    let noise = 1.0 / sinr;
    let mut errors = 0;
    for _ in 0..symbols {
        let i = rng.random_range(0..points.len());
        let r = points[i] + model::complex_normal(rng, noise);
        if nearest_point(&points, r) != i {
            errors += 1;
        }
    }
    Ok(GenieSer { errors, symbols })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;
    use crate::model::{draw_activity_exact, draw_channels, draw_pilots, stream_rng};
    use ndarray::array;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn small() -> SystemConfig {
        SystemConfig {
            users: 40,
            antennas: 16,
            coherence: 60,
            p_active: 0.2,
            ..SystemConfig::default()
        }
        .with_snr_db(15.0)
    }

    #[test]
    fn constellations_are_unit_energy_and_ordered() {
        let q = constellation(4).unwrap();
        for (i, s) in q.iter().enumerate() {
            assert!((s.norm() - 1.0).abs() < 1e-15);
            let expected = Complex64::from_polar(1.0, (2 * i + 1) as f64 * PI / 4.0);
            assert!((s - expected).norm() < 1e-15);
        }
        assert_eq!(constellation(2).unwrap(), vec![c(1.0, 0.0), c(-1.0, 0.0)]);
        assert!(matches!(constellation(8), Err(Error::OutOfRange { field: "W", .. })));
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let q = constellation(4).unwrap();
        // midpoint of points 0 and 1 is on the imaginary axis
        assert_eq!(nearest_point(&q, c(0.0, 0.5)), 0);
        assert_eq!(nearest_point(&q, c(0.0, 0.0)), 0);
        assert_eq!(nearest_point(&q, c(-0.5, 0.0)), 1);
        assert_eq!(nearest_point(&constellation(2).unwrap(), c(0.0, 3.0)), 0);
    }

    #[test]
    fn pilot_phase_null_and_rank_one() {
        let cfg = SystemConfig { sigma2: 1e-300, ..small() };
        let mut rng = stream_rng(3, 0);
        let pilots = draw_pilots(&mut rng, cfg.users, 20).unwrap();
        let h = draw_channels(&mut rng, &cfg);
        let none = ActivityVector::from_alpha(vec![false; cfg.users]);
        let y = pilot_phase(&mut rng, &cfg, &pilots, &none, &h).unwrap();
        assert!(y.iter().all(|z| z.norm() < 1e-140));

        let mut alpha = vec![false; cfg.users];
        alpha[7] = true;
        let y = pilot_phase(&mut rng, &cfg, &pilots, &ActivityVector::from_alpha(alpha), &h).unwrap();
        let amp = (20.0 * cfg.gamma / h.gains[7]).sqrt();
        for i in 0..20 {
            for j in 0..cfg.antennas {
                let want = pilots.matrix[[i, 7]] * h.matrix[[j, 7]] * amp;
                assert!((y[[i, j]] - want).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn pilot_phase_rejects_bad_shapes() {
        let cfg = small();
        let mut rng = stream_rng(3, 0);
        let pilots = draw_pilots(&mut rng, cfg.users - 1, 20).unwrap();
        let h = draw_channels(&mut rng, &cfg);
        let act = ActivityVector::from_alpha(vec![false; cfg.users]);
        assert!(matches!(pilot_phase(&mut rng, &cfg, &pilots, &act, &h), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn pilot_energy_moment() {
        // E‖Y‖²/(LM) = λNγ + σ²
        let cfg = small();
        let l = 20;
        let eps = 0.5;
        let lambda = cfg.activation_probability(eps);
        let draws = 1000;
        let mut vals = Vec::with_capacity(draws);
        for s in 0..draws as u64 {
            let mut rng = stream_rng(11, s);
            let act = model::draw_activity(&mut rng, &cfg, eps);
            let pilots = draw_pilots(&mut rng, cfg.users, l).unwrap();
            let h = draw_channels(&mut rng, &cfg);
            let y = pilot_phase(&mut rng, &cfg, &pilots, &act, &h).unwrap();
            vals.push(y.iter().map(|z| z.norm_sqr()).sum::<f64>() / (l * cfg.antennas) as f64);
        }
        let (mean, hw) = mean_and_half_width(&vals);
        let se = hw / Z95;
        let want = lambda * cfg.users as f64 * cfg.gamma + cfg.sigma2;
        assert!((mean - want).abs() < 3.0 * se, "{mean} vs {want} (se {se})");
    }

    #[test]
    fn data_phase_single_user_exact_and_moment() {
        let cfg = SystemConfig {
            antennas: 1,
            sigma2: 1e-300,
            ..small()
        };
        let mut rng = stream_rng(5, 0);
        let h = draw_channels(&mut rng, &cfg);
        let mut alpha = vec![false; cfg.users];
        alpha[2] = true;
        let mut symbols = vec![c(0.0, 0.0); cfg.users];
        symbols[2] = constellation(4).unwrap()[3];
        let y = data_phase(&mut rng, &cfg, &ActivityVector::from_alpha(alpha), &h, &symbols).unwrap();
        let want = h.matrix[[0, 2]] * symbols[2] * (cfg.gamma / h.gains[2]).sqrt();
        assert!((y[0] - want).norm() < 1e-12);

        // E‖y‖² = Kγ M + M σ² with channel inversion
        let cfg = small();
        let k = 5;
        let draws = 10_000;
        let points = constellation(4).unwrap();
        let mut vals = Vec::with_capacity(draws);
        for s in 0..draws as u64 {
            let mut rng = stream_rng(6, s);
            let act = draw_activity_exact(&mut rng, cfg.users, k).unwrap();
            let h = draw_channels(&mut rng, &cfg);
            let sym: Vec<Complex64> = (0..cfg.users).map(|_| points[rng.random_range(0..4)]).collect();
            let y = data_phase(&mut rng, &cfg, &act, &h, &sym).unwrap();
            vals.push(y.iter().map(|z| z.norm_sqr()).sum::<f64>());
        }
        let (mean, hw) = mean_and_half_width(&vals);
        let want = cfg.antennas as f64 * (k as f64 * cfg.gamma + cfg.sigma2);
        assert!((mean - want).abs() < 3.0 * hw / Z95, "{mean} vs {want}");
    }

    #[test]
    fn mrc_is_identity_map() {
        let g = array![[c(1.0, 2.0), c(0.5, -1.0)], [c(-3.0, 0.0), c(0.0, 1.0)], [c(0.1, 0.1), c(2.0, 0.0)]];
        assert_eq!(beamformers(g.view(), Beamformer::Mrc).unwrap(), g);
    }

    #[test]
    fn zf_scaled_orthonormal() {
        let s = 2.5;
        let g = array![[c(s, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(0.0, s)], [c(0.0, 0.0), c(0.0, 0.0)]];
        let u = beamformers(g.view(), Beamformer::Zf).unwrap();
        let want = g.mapv(|z| z / (s * s));
        assert!(u.iter().zip(want.iter()).all(|(a, b)| (a - b).norm() < 1e-14));
    }

    #[test]
    fn zf_inverts_random_channels() {
        let mut rng = stream_rng(9, 0);
        let g = model::complex_normal_matrix(&mut rng, 16, 4, 1.0);
        let u = beamformers(g.view(), Beamformer::Zf).unwrap();
        let p = u.t().mapv(|z| z.conj()).dot(&g);
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((p[[i, j]] - want).norm() <= 1e-8);
            }
        }
    }

    #[test]
    fn zf_unavailable_cases() {
        let mut rng = stream_rng(9, 1);
        let square = model::complex_normal_matrix(&mut rng, 4, 4, 1.0);
        assert!(matches!(beamformers(square.view(), Beamformer::Zf), Err(Error::ZfUnavailable(_))));
        let mut dup = model::complex_normal_matrix(&mut rng, 8, 3, 1.0);
        let col = dup.column(0).to_owned();
        dup.column_mut(2).assign(&col);
        assert!(matches!(beamformers(dup.view(), Beamformer::Zf), Err(Error::ZfUnavailable(_))));
        let empty = Array2::<Complex64>::zeros((8, 0));
        assert_eq!(beamformers(empty.view(), Beamformer::Zf).unwrap().dim(), (8, 0));
    }

    #[test]
    fn zf_single_user_noiseless_detection() {
        let points = constellation(4).unwrap();
        let h = array![[c(0.3, -1.1)], [c(0.7, 0.2)], [c(-0.4, 0.9)]];
        let rho: f64 = 2.0;
        for (i, s) in points.iter().enumerate() {
            let y = h.column(0).mapv(|x| x * s * rho.sqrt());
            let u = beamformers(h.view(), Beamformer::Zf).unwrap();
            assert_eq!(detect_symbols(y.view(), u.view(), h.view(), &[rho], 4).unwrap(), vec![i]);
        }
    }

    #[test]
    fn detection_rejects_mismatched_shapes() {
        let u = Array2::<Complex64>::zeros((3, 2));
        let y = Array1::<Complex64>::zeros(3);
        assert!(detect_symbols(y.view(), u.view(), u.view(), &[1.0], 4).is_err());
    }

    #[test]
    fn zero_epsilon_gives_empty_outcome() {
        let cfg = small();
        let out = run_trial(&mut stream_rng(1, 0), &cfg, 20, 0.0, Beamformer::Mrc).unwrap();
        assert_eq!(out.active(), 0);
        assert_eq!(out.successes(), 0);
    }

    #[test]
    fn trials_are_deterministic_and_consistent() {
        let cfg = small();
        for kind in Beamformer::ALL {
            let a = run_trial(&mut stream_rng(4, 2), &cfg, 20, 0.7, kind).unwrap();
            let b = run_trial(&mut stream_rng(4, 2), &cfg, 20, 0.7, kind).unwrap();
            assert_eq!(a, b);
            for n in 0..cfg.users {
                if a.symbol_correct[n] {
                    assert!(a.alpha[n] && a.alpha_hat[n]);
                }
            }
        }
    }

    #[test]
    fn both_beamformers_share_draws() {
        let cfg = small();
        let runner = TrialRunner::new(&cfg, 20, 0.7).unwrap();
        let both = runner.run(&mut stream_rng(4, 3), &Beamformer::ALL).unwrap();
        let zf = runner.run(&mut stream_rng(4, 3), &[Beamformer::Zf]).unwrap();
        assert_eq!(both[1], zf[0]);
        assert_eq!(both[0].alpha_hat, both[1].alpha_hat);
    }

    #[test]
    fn batch_is_schedule_independent() {
        let cfg = small();
        let runner = TrialRunner::new(&cfg, 20, 0.6).unwrap();
        let batch = runner.run_batch(8, &[Beamformer::Mrc]).unwrap();
        for (i, t) in batch[0].iter().enumerate() {
            let single = runner.run(&mut stream_rng(cfg.seed, i as u64), &[Beamformer::Mrc]).unwrap();
            assert_eq!(&single[0], t);
        }
    }

    #[test]
    fn fixed_pilots_flag_uses_one_book() {
        let cfg = SystemConfig {
            fixed_pilots: true,
            ..small()
        };
        let a = fixed_pilot_book(&cfg, 20).unwrap();
        let b = fixed_pilot_book(&cfg, 20).unwrap();
        assert_eq!(a, b);
        let out = run_trial(&mut stream_rng(1, 1), &cfg, 20, 0.5, Beamformer::Mrc).unwrap();
        assert_eq!(out.alpha.len(), cfg.users);
    }

    fn synthetic(successes: &[usize], l: usize) -> Vec<TrialOutcome> {
        successes
            .iter()
            .map(|&s| {
                let mut alpha = vec![false; 10];
                for a in alpha.iter_mut().take(s) {
                    *a = true;
                }
                TrialOutcome {
                    alpha_hat: alpha.clone(),
                    symbol_correct: alpha.clone(),
                    alpha,
                    pilot_len: l,
                    epsilon: 0.5,
                }
            })
            .collect()
    }

    #[test]
    fn empirical_estimator_edge_cases() {
        let zero = synthetic(&[0, 0, 0], 5);
        let p = empirical_sstr(&zero, 10).unwrap();
        assert_eq!((p.value, p.half_width), (0.0, 0.0));
        assert!(matches!(empirical_sstr(&zero[..1], 10), Err(Error::InsufficientTrials(1))));

        let p = empirical_sstr(&synthetic(&[2, 4], 5), 10).unwrap();
        assert!((p.value - 1.5).abs() < 1e-15);
        // sd = √2, se = 1
        assert!((p.half_width - 0.5 * 1.96).abs() < 1e-12);

        let mut mixed = synthetic(&[1, 2], 5);
        mixed[1].pilot_len = 6;
        assert!(empirical_sstr(&mixed, 10).is_err());
    }

    #[test]
    fn half_width_scales_as_inverse_root_trials() {
        let pattern: Vec<usize> = (0..400).map(|i| (i * 7) % 5).collect();
        let a = empirical_sstr(&synthetic(&pattern[..100], 5), 10).unwrap();
        let b = empirical_sstr(&synthetic(&pattern, 5), 10).unwrap();
        let ratio = a.half_width / b.half_width;
        assert!((ratio - 2.0).abs() < 0.05, "{ratio}");
    }

    #[test]
    fn genie_bound_respected() {
        let cfg = small();
        let runner = TrialRunner::new(&cfg, 20, 0.8).unwrap();
        let batch = runner.run_batch(20, &[Beamformer::Mrc]).unwrap();
        let p = empirical_sstr(&batch[0], cfg.coherence).unwrap();
        let mean_k = batch[0].iter().map(|t| t.active() as f64).sum::<f64>() / 20.0;
        assert!(p.value <= (40.0 / 60.0) * mean_k + 1e-12);
    }

    #[test]
    fn genie_ser_at_high_sinr_is_clean() {
        let g = genie_ser(&mut stream_rng(0, 0), 4, 1e4, 10_000).unwrap();
        assert_eq!(g.errors, 0);
        assert!(genie_ser(&mut stream_rng(0, 0), 4, 0.0, 10).is_err());
    }

    #[test]
    fn conditioned_batch_reports_rate() {
        let cfg = small();
        let runner = TrialRunner::conditioned(&cfg, 30, 4).unwrap();
        let batch = runner.run_batch(10, &[Beamformer::Zf]).unwrap();
        let r = conditional_rate(&batch[0], cfg.coherence).unwrap();
        assert_eq!(r.k, 4);
        assert!(r.value > 0.0 && r.value <= 0.5 + 1e-12);
        assert!(TrialRunner::conditioned(&cfg, 30, 41).is_err());
    }
}
