//! Pair-by-pair simulation of the purification protocol with the lab demon's
//! error flags, and the pair cost of reaching a target security parameter.
//!
//! Random numbers come from ChaCha8 streams keyed by the seed: stream 0
//! draws the initial Bell states, stream 1 shuffles them, and round `r`
//! (counting from 1) shuffles on stream `2r` and draws the error pair of
//! couple `c` from word position `2c` of stream `2r + 1`. Couples can
//! therefore be processed in any order, or in parallel, with identical output.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bellbits::{self, BellIndex, FlagPair, PauliIndex};
use crate::noise::NoiseModel;
use crate::recurrence::{self, cell, generate_map, BellDiagonalState, EnsembleState, FlaggedEnsembleState, CELLS};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MonteCarloError {
    #[error("need at least 2 pairs, got {0}")]
    TooFewPairs(usize),
    #[error(transparent)]
    Recurrence(#[from] recurrence::RecurrenceError),
    #[error("target 1 - F^cond = {target:e} unreachable; best reached {best:e} after {rounds} rounds")]
    Unreachable { target: f64, best: f64, rounds: usize },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MCPair {
    pub bell: BellIndex,
    pub flag: FlagPair,
}

impl MCPair {
    pub fn cell(&self) -> usize {
        cell(self.bell, self.flag)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MCConfig {
    pub n_pairs: usize,
    pub initial: BellDiagonalState,
    pub noise: NoiseModel,
    pub rounds: usize,
    pub seed: u64,
    /// With tracking off every flag stays (0,0); the physical outcome is unchanged.
    pub track_flags: bool,
}

impl MCConfig {
    pub fn new(
        n_pairs: usize,
        initial: BellDiagonalState,
        noise: NoiseModel,
        rounds: usize,
        seed: u64,
    ) -> Result<Self, MonteCarloError> {
        if n_pairs < 2 {
            return Err(MonteCarloError::TooFewPairs(n_pairs));
        }
        Ok(Self { n_pairs, initial, noise, rounds, seed, track_flags: true })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundStats {
    pub round: usize,
    pub pairs_remaining: usize,
    pub f_hat: f64,
    pub f_cond_hat: f64,
    /// Pair count per (Bell state, flag) cell, in recurrence order.
    pub cells: [u64; CELLS],
}

impl RoundStats {
    pub fn from_pairs(round: usize, pairs: &[MCPair]) -> Self {
        let mut cells = [0u64; CELLS];
        for p in pairs {
            cells[p.cell()] += 1;
        }
        let n = pairs.len().max(1) as f64;
        let phi = pairs.iter().filter(|p| p.bell == BellIndex::PHI_PLUS).count();
        let matched = pairs.iter().filter(|p| p.flag == p.bell.as_flag()).count();
        Self { round, pairs_remaining: pairs.len(), f_hat: phi as f64 / n, f_cond_hat: matched as f64 / n, cells }
    }
}

/// Inverse-CDF sampler over a small discrete distribution.
#[derive(Debug, Clone)]
struct Categorical {
    cdf: Vec<f64>,
    last: usize,
}

impl Categorical {
    fn new(weights: &[f64]) -> Self {
        let mut acc = 0.0;
        let cdf = weights
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        let last = weights.iter().rposition(|&w| w > 0.0).unwrap_or(0);
        Self { cdf, last }
    }

    fn sample(&self, u: f64) -> usize {
        self.cdf.iter().position(|&c| u < c).unwrap_or(self.last)
    }
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Twirled, shuffled starting ensemble with all flags clear.
pub fn init_ensemble(cfg: &MCConfig) -> Vec<MCPair> {
    let letters = Categorical::new(&cfg.initial.letters());
    let mut rng = stream(cfg.seed, 0);
    let mut pairs: Vec<MCPair> = (0..cfg.n_pairs)
        .map(|_| MCPair { bell: BellIndex::LETTER_ORDER[letters.sample(rng.random())], flag: FlagPair::CLEAR })
        .collect();
    pairs.shuffle(&mut stream(cfg.seed, 1));
    pairs
}

const CHUNK: usize = 1 << 14;

/// One purification round, numbered from 1.
///
/// Pairs are shuffled and taken two at a time as (source, target); an odd
/// pair left over is carried to the next round untouched.
pub fn round(
    pairs: &[MCPair],
    noise: &NoiseModel,
    seed: u64,
    round_index: usize,
    track_flags: bool,
) -> (Vec<MCPair>, RoundStats) {
    let mut shuffled = pairs.to_vec();
    shuffled.shuffle(&mut stream(seed, 2 * round_index as u64));
    let errors = Categorical::new(noise.as_array());
    let couples = shuffled.len() / 2;
    let mut kept: Vec<MCPair> = shuffled[..2 * couples]
        .par_chunks(2 * CHUNK)
        .enumerate()
        .flat_map_iter(|(chunk, slice)| {
            let mut rng = stream(seed, 2 * round_index as u64 + 1);
            rng.set_word_pos(2 * (chunk * CHUNK) as u128);
            let errors = &errors;
            slice
                .chunks_exact(2)
                .filter_map(move |couple| {
                    let (src, tgt) = (couple[0], couple[1]);
                    let m = errors.sample(rng.random());
                    let (e_src, e_tgt) = (PauliIndex::from_index(m / 4), PauliIndex::from_index(m % 4));
                    let (src_out, tgt_out) = bellbits::epp_with_errors(src.bell, tgt.bell, e_src, e_tgt);
                    if !bellbits::keep_predicate(tgt_out) {
                        return None;
                    }
                    let flag = if track_flags {
                        bellbits::flag_update(bellbits::flag_flip(src.flag, e_src), bellbits::flag_flip(tgt.flag, e_tgt))
                    } else {
                        FlagPair::CLEAR
                    };
                    Some(MCPair { bell: src_out, flag })
                })
                .collect::<Vec<_>>()
        })
        .collect();
    if shuffled.len() % 2 == 1 {
        kept.push(shuffled[shuffled.len() - 1]);
    }
    let stats = RoundStats::from_pairs(round_index, &kept);
    (kept, stats)
}

/// Initial statistics followed by one entry per round, stopping early once
/// fewer than two pairs remain.
pub fn run(cfg: &MCConfig) -> Vec<RoundStats> {
    let mut pairs = init_ensemble(cfg);
    let mut stats = vec![RoundStats::from_pairs(0, &pairs)];
    for r in 1..=cfg.rounds {
        if pairs.len() < 2 {
            break;
        }
        let (next, s) = round(&pairs, &cfg.noise, cfg.seed, r, cfg.track_flags);
        pairs = next;
        stats.push(s);
    }
    stats
}

/// Per-round cost of the analytic recurrence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResourcePoint {
    pub round: usize,
    /// `1 - F^cond` after this round.
    pub epsilon: f64,
    /// Initial pairs consumed per surviving pair, `Π 2/N_k`.
    pub pairs: f64,
    pub fidelity: f64,
}

/// Cost of every round up to `max_rounds`, stopping once `1 - F^cond`
/// drops to `eps_min`.
pub fn resource_curve(
    noise: &NoiseModel,
    initial: &BellDiagonalState,
    eps_min: f64,
    max_rounds: usize,
) -> Result<Vec<ResourcePoint>, MonteCarloError> {
    let map = generate_map(noise);
    let mut s = FlaggedEnsembleState::embed(initial);
    let mut pairs = 1.0;
    let mut out = Vec::new();
    for r in 1..=max_rounds {
        let (next, n) = recurrence::step(&s, &map)?;
        pairs *= 2.0 / n;
        s = next;
        let epsilon = s.correlation_defect();
        out.push(ResourcePoint { round: r, epsilon, pairs, fidelity: s.fidelity() });
        if epsilon <= eps_min {
            break;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResourceResult {
    /// `Π 2/N_k` rounded up.
    pub pairs_required: f64,
    pub rounds_used: usize,
    pub epsilon: f64,
}

/// Initial pairs needed per final pair with `1 - F^cond ≤ target_eps`.
pub fn resources(
    noise: &NoiseModel,
    initial: &BellDiagonalState,
    target_eps: f64,
    max_rounds: usize,
) -> Result<ResourceResult, MonteCarloError> {
    if !(target_eps > 0.0 && target_eps < 1.0) {
        return Err(MonteCarloError::Invalid(format!("target epsilon {target_eps} outside (0, 1)")));
    }
    let curve = resource_curve(noise, initial, target_eps, max_rounds)?;
    match curve.iter().find(|p| p.epsilon <= target_eps) {
        Some(p) => Ok(ResourceResult { pairs_required: p.pairs.ceil(), rounds_used: p.round, epsilon: p.epsilon }),
        None => Err(MonteCarloError::Unreachable {
            target: target_eps,
            best: curve.iter().map(|p| p.epsilon).fold(f64::INFINITY, f64::min),
            rounds: curve.len(),
        }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: usize,
}

/// Least-squares line through `(ln x, ln y)`.
pub fn loglog_fit(points: &[(f64, f64)]) -> Result<LogLogFit, MonteCarloError> {
    if points.len() < 3 || points.iter().any(|&(x, y)| !(x > 0.0 && y > 0.0)) {
        return Err(MonteCarloError::Invalid("log-log fit needs at least 3 positive points".into()));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 || syy == 0.0 {
        return Err(MonteCarloError::Invalid("log-log fit is degenerate".into()));
    }
    let slope = sxy / sxx;
    Ok(LogLogFit { slope, intercept: my - slope * mx, r_squared: sxy * sxy / (sxx * syy), points: points.len() })
}
