//! Long-run behaviour of the recurrence: fixpoints, their stability, the
//! critical noise level and the three noise regimes.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::noise::{BinaryNoiseModel, NoiseError, NoiseModel};
use crate::recurrence::{
    binary_map, generate_map, BinaryFlaggedState, EnsembleState, FlaggedEnsembleState, QuadraticMap,
    RecurrenceError,
};

/// Fidelity of the Werner start state used by every probe unless overridden.
pub const DEFAULT_START_FIDELITY: f64 = 0.85;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DynamicsError {
    #[error(transparent)]
    Recurrence(#[from] RecurrenceError),
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error("ensemble annihilated after {iteration} steps (keep probability {keep_probability:e})")]
    Annihilated { iteration: usize, keep_probability: f64 },
    #[error("{0}")]
    Domain(String),
    #[error("security indicator is {secure} at both ends of [{lo}, {hi}]")]
    NoSignChange { lo: f64, hi: f64, secure: bool },
    #[error("invalid bracket [{lo}, {hi}]")]
    InvalidBracket { lo: f64, hi: f64 },
    #[error("eigenvalue solver did not converge")]
    EigenSolver,
    #[error("fit needs at least 5 points, got {0}")]
    TooFewPoints(usize),
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationOptions {
    /// Stop once the max-norm change of one step is at most this.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for IterationOptions {
    fn default() -> Self {
        Self { tol: 1e-12, max_iter: 100_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixpointResult<S> {
    pub state: S,
    pub iterations: usize,
    pub converged: bool,
    /// Max-norm of the last step.
    pub residual: f64,
    /// Keep probability of the last step.
    pub keep_probability: f64,
}

fn max_delta(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| f64::max(m, (x - y).abs()))
}

/// Iterate `map` from `s0` until one step moves no component by more than
/// `opts.tol`, or the budget runs out.
pub fn iterate_to_fixpoint<S: EnsembleState>(
    s0: &S,
    map: &QuadraticMap,
    opts: &IterationOptions,
) -> Result<FixpointResult<S>, DynamicsError> {
    if map.dim() != S::DIM {
        return Err(RecurrenceError::DimensionMismatch { map: map.dim(), state: S::DIM }.into());
    }
    let mut cur = s0.components().to_vec();
    let mut next = vec![0.0; S::DIM];
    let mut residual = f64::INFINITY;
    let mut keep_probability = f64::NAN;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        keep_probability = map.apply_into(&cur, &mut next).map_err(|e| match e {
            RecurrenceError::Annihilated { keep_probability } => {
                DynamicsError::Annihilated { iteration: iterations, keep_probability }
            }
            e => e.into(),
        })?;
        residual = max_delta(&cur, &next);
        std::mem::swap(&mut cur, &mut next);
        iterations += 1;
        if residual <= opts.tol {
            break;
        }
    }
    Ok(FixpointResult {
        state: S::from_components_unchecked(&cur),
        iterations,
        converged: residual <= opts.tol,
        residual,
        keep_probability,
    })
}

/// The fixpoint of binary pairs under uncorrelated noise `f_μν = f_μ f_ν`
/// that carries all weight in `A0` and `B1`.
pub fn binary_fixpoint_analytic(f0: f64) -> Result<BinaryFlaggedState, DynamicsError> {
    if !(0.75..=1.0).contains(&f0) {
        return Err(DynamicsError::Domain(format!("binary fixpoint needs 3/4 <= f0 <= 1, got {f0}")));
    }
    let u = 2.0 * f0 - 1.0;
    let a0 = (4.0 * f0 * f0 - 4.0 * f0 + u * (4.0 * f0 - 3.0).sqrt() + 1.0) / (2.0 * u * u);
    Ok(BinaryFlaggedState::new(a0, 0.0, 0.0, 1.0 - a0)?)
}

/// Derivative matrix `J[j][k] = ∂a'_j/∂a_k` of the normalized map at `a`.
pub fn jacobian(map: &QuadraticMap, a: &[f64]) -> Result<DMatrix<f64>, DynamicsError> {
    let d = map.dim();
    if a.len() != d {
        return Err(RecurrenceError::DimensionMismatch { map: d, state: a.len() }.into());
    }
    let mut image = vec![0.0; d];
    let n = map.apply_into(a, &mut image)?;
    let g = map.numerator_gradients(a);
    let mut total = vec![0.0; d];
    for j in 0..d {
        for k in 0..d {
            total[k] += g[j * d + k];
        }
    }
    Ok(DMatrix::from_fn(d, d, |j, k| (g[j * d + k] - image[j] * total[k]) / n))
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(m: &DMatrix<f64>) -> Result<f64, DynamicsError> {
    if !m.is_square() || m.iter().any(|v| !v.is_finite()) {
        return Err(DynamicsError::Domain("spectral radius needs a finite square matrix".into()));
    }
    let schur = m.clone().try_schur(f64::EPSILON, 100_000).ok_or(DynamicsError::EigenSolver)?;
    let radius = schur.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max);
    if radius.is_finite() {
        Ok(radius)
    } else {
        Err(DynamicsError::EigenSolver)
    }
}

/// A one-parameter family of noise models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseFamily {
    /// Binary pairs, `f_μν = f_μ f_ν` with reliability `f0` per qubit.
    BinaryUncorrelated,
    /// Full model, both qubits under one-qubit white noise of reliability `f0`.
    WhiteNoise,
    /// The same model for every parameter value.
    Fixed(NoiseModel),
}

/// Outcome of the security probe at one parameter value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub secure: bool,
    pub iterations: usize,
    /// `1 - F^cond` when the probe stopped.
    pub defect: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalOptions {
    pub start_fidelity: f64,
    pub halvings: usize,
    /// The probe counts as secure once `1 - F^cond` is at most this.
    pub threshold: f64,
    /// Step budget of one probe; running out counts as not secure.
    pub budget: usize,
    /// A probe whose step changes nothing beyond this has settled.
    pub stall: f64,
}

impl Default for CriticalOptions {
    fn default() -> Self {
        Self { start_fidelity: DEFAULT_START_FIDELITY, halvings: 40, threshold: 1e-9, budget: 2_000_000, stall: 1e-15 }
    }
}

fn probe_orbit<S: EnsembleState>(s0: &S, map: &QuadraticMap, opts: &CriticalOptions) -> Result<Probe, DynamicsError> {
    let mut cur = s0.components().to_vec();
    let mut next = vec![0.0; S::DIM];
    let mut defect = s0.correlation_defect();
    for iterations in 0..opts.budget {
        if defect <= opts.threshold {
            return Ok(Probe { secure: true, iterations, defect });
        }
        match map.apply_into(&cur, &mut next) {
            Ok(_) => {}
            Err(RecurrenceError::Annihilated { .. }) => return Ok(Probe { secure: false, iterations, defect }),
            Err(e) => return Err(e.into()),
        }
        let delta = max_delta(&cur, &next);
        std::mem::swap(&mut cur, &mut next);
        defect = S::from_components_unchecked(&cur).correlation_defect();
        if delta <= opts.stall {
            return Ok(Probe { secure: defect <= opts.threshold, iterations: iterations + 1, defect });
        }
    }
    Ok(Probe { secure: defect <= opts.threshold, iterations: opts.budget, defect })
}

impl NoiseFamily {
    pub fn probe(&self, x: f64, opts: &CriticalOptions) -> Result<Probe, DynamicsError> {
        match self {
            NoiseFamily::BinaryUncorrelated => {
                let map = binary_map(&BinaryNoiseModel::uncorrelated(x)?);
                probe_orbit(&BinaryFlaggedState::unflagged(opts.start_fidelity)?, &map, opts)
            }
            NoiseFamily::WhiteNoise => {
                let map = generate_map(&NoiseModel::white(x)?);
                probe_orbit(&FlaggedEnsembleState::werner(opts.start_fidelity)?, &map, opts)
            }
            NoiseFamily::Fixed(noise) => {
                probe_orbit(&FlaggedEnsembleState::werner(opts.start_fidelity)?, &generate_map(noise), opts)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalResult {
    /// Midpoint of the final bracket.
    pub critical: f64,
    pub lo: f64,
    pub hi: f64,
    pub halvings: usize,
}

impl CriticalResult {
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Bisect `[lo, hi]` for the parameter where the security probe flips.
pub fn find_critical(family: &NoiseFamily, lo: f64, hi: f64, opts: &CriticalOptions) -> Result<CriticalResult, DynamicsError> {
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(DynamicsError::InvalidBracket { lo, hi });
    }
    let (lo_secure, hi_secure) =
        rayon::join(|| family.probe(lo, opts), || family.probe(hi, opts));
    let lo_secure = lo_secure?.secure;
    if lo_secure == hi_secure?.secure {
        return Err(DynamicsError::NoSignChange { lo, hi, secure: lo_secure });
    }
    let (mut a, mut b) = (lo, hi);
    let mut halvings = 0;
    while halvings < opts.halvings {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        if family.probe(mid, opts)?.secure == lo_secure {
            a = mid;
        } else {
            b = mid;
        }
        halvings += 1;
    }
    Ok(CriticalResult { critical: 0.5 * (a + b), lo: a, hi: b, halvings })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Regime {
    HighNoise,
    Intermediate,
    Security,
}

impl Regime {
    pub const ALL: [Regime; 3] = [Regime::HighNoise, Regime::Intermediate, Regime::Security];

    pub fn name(self) -> &'static str {
        match self {
            Regime::HighNoise => "high-noise",
            Regime::Intermediate => "intermediate",
            Regime::Security => "security",
        }
    }
}

/// `F^cond` at least this close to one counts as secure.
pub const SECURITY_MARGIN: f64 = 1e-6;
/// Fixpoint fidelities up to `0.5 + HIGH_NOISE_MARGIN` count as no purification;
/// maps that stall at `F = 1/2` approach it only to within iteration tolerance.
pub const HIGH_NOISE_MARGIN: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification<S> {
    pub regime: Regime,
    pub fixpoint: FixpointResult<S>,
    pub fidelity: f64,
    pub conditional_fidelity: f64,
    /// Set when the iteration budget ran out before convergence.
    pub warning: Option<String>,
}

/// Iterate to the fixpoint and sort the outcome into a regime.
pub fn classify_regime<S: EnsembleState>(
    map: &QuadraticMap,
    s0: &S,
    opts: &IterationOptions,
) -> Result<Classification<S>, DynamicsError> {
    let fixpoint = iterate_to_fixpoint(s0, map, opts)?;
    let fidelity = fixpoint.state.fidelity();
    let conditional_fidelity = fixpoint.state.conditional_fidelity();
    let (regime, warning) = if !fixpoint.converged {
        let msg = format!("no convergence after {} steps (residual {:e})", fixpoint.iterations, fixpoint.residual);
        (Regime::Intermediate, Some(msg))
    } else if fidelity <= 0.5 + HIGH_NOISE_MARGIN {
        (Regime::HighNoise, None)
    } else if fixpoint.state.correlation_defect() <= SECURITY_MARGIN {
        (Regime::Security, None)
    } else {
        (Regime::Intermediate, None)
    };
    Ok(Classification { regime, fixpoint, fidelity, conditional_fidelity, warning })
}

/// Classify a full noise model from an unflagged Werner start.
pub fn classify_noise(
    noise: &NoiseModel,
    start_fidelity: f64,
    opts: &IterationOptions,
) -> Result<Classification<FlaggedEnsembleState>, DynamicsError> {
    classify_regime(&generate_map(noise), &FlaggedEnsembleState::werner(start_fidelity)?, opts)
}

/// Random noise vector with `f_{Id,Id} = f00` and the other fifteen entries
/// uniform on the simplex of mass `1 - f00`. Sample `index` of a given `seed`
/// uses the same direction on the simplex for every `f00`.
pub fn random_noise(f00: f64, seed: u64, index: u64) -> Result<NoiseModel, DynamicsError> {
    if !(0.0..=1.0).contains(&f00) {
        return Err(NoiseError::OutOfRange { name: "f00", value: f00 }.into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let mut w = [0.0; 15];
    for x in w.iter_mut() {
        *x = -(1.0 - rng.random::<f64>()).ln();
    }
    let total: f64 = w.iter().sum();
    let mut f = [0.0; 16];
    f[0] = f00;
    for (slot, x) in f[1..].iter_mut().zip(w) {
        *slot = (1.0 - f00) * x / total;
    }
    Ok(NoiseModel::general(f)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanResult {
    pub f00: f64,
    pub samples: usize,
    pub high_noise: usize,
    pub intermediate: usize,
    pub security: usize,
    /// Samples that did not converge (counted as intermediate).
    pub unconverged: usize,
}

impl ScanResult {
    pub fn fraction(&self, regime: Regime) -> f64 {
        let count = match regime {
            Regime::HighNoise => self.high_noise,
            Regime::Intermediate => self.intermediate,
            Regime::Security => self.security,
        };
        count as f64 / self.samples.max(1) as f64
    }
}

/// Relative regime frequencies over random noise models with fixed `f00`.
pub fn regime_scan(
    f00: f64,
    samples: usize,
    seed: u64,
    start_fidelity: f64,
    opts: &IterationOptions,
) -> Result<ScanResult, DynamicsError> {
    let start = FlaggedEnsembleState::werner(start_fidelity)?;
    let outcomes: Vec<(Regime, bool)> = (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let c = classify_regime(&generate_map(&random_noise(f00, seed, i)?), &start, opts)?;
            Ok((c.regime, c.warning.is_some()))
        })
        .collect::<Result<_, DynamicsError>>()?;
    let count = |r: Regime| outcomes.iter().filter(|o| o.0 == r).count();
    Ok(ScanResult {
        f00,
        samples,
        high_noise: count(Regime::HighNoise),
        intermediate: count(Regime::Intermediate),
        security: count(Regime::Security),
        unconverged: outcomes.iter().filter(|o| o.1).count(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    /// Which iterate the point belongs to.
    pub n: usize,
    pub fcond: f64,
    pub fcond_next: f64,
}

/// The purification curve `F^cond_{n+1}` against `F^cond_n`.
///
/// The straight segment from `seed` to its image is sampled at
/// `segment_points` states, and segment `n` is that line pushed through `n`
/// steps, so consecutive segments join into one curve.
pub fn purification_curve<S: EnsembleState>(
    map: &QuadraticMap,
    seed: &S,
    n_max: usize,
    segment_points: usize,
) -> Result<Vec<CurvePoint>, DynamicsError> {
    if segment_points < 2 {
        return Err(DynamicsError::Domain("a segment needs at least 2 points".into()));
    }
    let (image, _) = crate::recurrence::step(seed, map)?;
    let mut layer: Vec<S> = (0..segment_points)
        .map(|i| {
            let t = i as f64 / (segment_points - 1) as f64;
            let v: Vec<f64> =
                seed.components().iter().zip(image.components()).map(|(a, b)| (1.0 - t) * a + t * b).collect();
            S::from_components_unchecked(&v)
        })
        .collect();
    let mut points = Vec::with_capacity(n_max * segment_points);
    for n in 0..n_max {
        let next: Vec<S> = layer
            .iter()
            .map(|s| crate::recurrence::step(s, map).map(|(t, _)| t))
            .collect::<Result<_, _>>()?;
        for (a, b) in layer.iter().zip(&next) {
            points.push(CurvePoint { n, fcond: a.conditional_fidelity(), fcond_next: b.conditional_fidelity() });
        }
        layer = next;
    }
    Ok(points)
}

/// Slope of the purification curve where it meets `F^cond = 1`, estimated
/// as the ratio of successive defects `1 - F^cond` deep along the orbit.
pub fn fixpoint_slope<S: EnsembleState>(map: &QuadraticMap, s0: &S, steps: usize) -> Result<f64, DynamicsError> {
    let mut s = s0.clone();
    let mut prev = s.correlation_defect();
    let mut ratio = f64::NAN;
    for _ in 0..steps {
        s = crate::recurrence::step(&s, map)?.0;
        let d = s.correlation_defect();
        if d == 0.0 || prev == 0.0 {
            break;
        }
        ratio = d / prev;
        prev = d;
    }
    Ok(ratio)
}

/// `F^cond ≈ offset + scale √(f0 − onset)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntermediateFit {
    pub offset: f64,
    pub scale: f64,
    pub onset: f64,
    /// Residual sum of squares.
    pub rss: f64,
}

fn linear_fit(points: &[(f64, f64)], onset: f64) -> Option<(f64, f64, f64)> {
    let n = points.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &(f0, y) in points {
        let x = (f0 - onset).sqrt();
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    let det = n * sxx - sx * sx;
    if !(det.abs() > 1e-300) {
        return None;
    }
    let scale = (n * sxy - sx * sy) / det;
    let offset = (sy - scale * sx) / n;
    let rss = points.iter().map(|&(f0, y)| (y - offset - scale * (f0 - onset).sqrt()).powi(2)).sum();
    Some((offset, scale, rss))
}

/// Least-squares fit of `offset + scale √(f0 − onset)`: linear in offset
/// and scale for each onset, with the onset found by a grid search refined
/// by golden-section search.
pub fn fit_intermediate(points: &[(f64, f64)]) -> Result<IntermediateFit, DynamicsError> {
    if points.len() < 5 {
        return Err(DynamicsError::TooFewPoints(points.len()));
    }
    if points.iter().any(|p| !p.0.is_finite() || !p.1.is_finite()) {
        return Err(DynamicsError::DegenerateFit("non-finite point".into()));
    }
    let xmin = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let xmax = points.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    if !(xmax > xmin) {
        return Err(DynamicsError::DegenerateFit("all points share one abscissa".into()));
    }
    let span = xmax - xmin;
    let rss = |onset: f64| linear_fit(points, onset).map_or(f64::INFINITY, |f| f.2);
    let (lo, hi) = (xmin - 2.0 * span, xmin);
    let grid = 400;
    let at = |i: usize| lo + (hi - lo) * i as f64 / grid as f64;
    let best = (0..=grid).min_by(|&i, &j| rss(at(i)).total_cmp(&rss(at(j)))).unwrap_or(grid);
    let (mut a, mut b) = (at(best.saturating_sub(1)), at((best + 1).min(grid)));
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    for _ in 0..200 {
        if rss(c) < rss(d) {
            b = d;
        } else {
            a = c;
        }
        c = b - phi * (b - a);
        d = a + phi * (b - a);
    }
    let onset = [a, b, at(best)].into_iter().min_by(|x, y| rss(*x).total_cmp(&rss(*y))).unwrap_or(a);
    let (offset, scale, rss) =
        linear_fit(points, onset).ok_or_else(|| DynamicsError::DegenerateFit("singular normal equations".into()))?;
    Ok(IntermediateFit { offset, scale, onset, rss })
}
