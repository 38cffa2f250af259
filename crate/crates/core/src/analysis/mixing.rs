//! Mixing times.
//!
//! The operational `τ(α)` is the total-variation mixing time of the state
//! chain, `min{k : max_i ½ Σ_j |Pᵏ(i,j) − π(j)| ≤ α}`. The geometric model
//! `τ(α) = C log(1/α)` is fitted to the resulting mixing times. [`mc_mixing_check`]
//! tests a candidate `τ` against the operator-level definition by simulation.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dtd::noisy_operators;
use crate::error::{Error, Result};
use crate::exact::FixedPointOracle;
use crate::features::FeatureMap;
use crate::linalg::spectral_norm;
use crate::mdp::{MarkovChain, MultiAgentMdp, StationaryDist};

/// Largest `k` scanned before giving up.
pub const MIXING_CAP: u64 = 1_000_000;
/// Levels over which `C` is fitted.
pub const FIT_ALPHAS: [f64; 4] = [0.1, 0.05, 0.02, 0.01];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MixingMethod {
    TvStateChain,
    McDefinition,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixingEstimate {
    pub alpha: f64,
    pub tau: u64,
    /// Geometric mixing constant `C` in `τ(α) ≈ C log(1/α)`.
    pub c: f64,
    pub method: MixingMethod,
}

/// `d(k) = max_i ½ Σ_j |Pᵏ(i,j) − π(j)|` for `k = 0, 1, …`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingProfile {
    pub diagnostics: Vec<f64>,
}

impl MixingProfile {
    /// Scans until `d(k) ≤ stop` or `k = cap`.
    pub fn scan(chain: &MarkovChain, pi: &StationaryDist, stop: f64, cap: u64) -> Result<Self> {
        let s = chain.num_states();
        if pi.len() != s {
            return Err(Error::Dimension("stationary distribution has the wrong length".into()));
        }
        let p = chain.transition();
        let mut pk = DMatrix::<f64>::identity(s, s);
        let mut diagnostics = vec![tv_distance(&pk, pi.pi())];
        let mut k = 0;
        while *diagnostics.last().unwrap() > stop {
            if k >= cap {
                return Err(Error::MixingCap { cap });
            }
            pk = &pk * p;
            k += 1;
            diagnostics.push(tv_distance(&pk, pi.pi()));
        }
        Ok(Self { diagnostics })
    }

    /// First `k` with `d(k) ≤ alpha`, if scanned.
    pub fn tau(&self, alpha: f64) -> Option<u64> {
        self.diagnostics.iter().position(|&d| d <= alpha).map(|k| k as u64)
    }

    /// Largest increase `d(k+1) − d(k)` over the scan; nonpositive when the
    /// diagnostic is nonincreasing.
    pub fn max_increase(&self) -> f64 {
        self.diagnostics.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Least-squares fit through the origin of `τ(α) = C log(1/α)` over the
    /// given levels; levels not reached by the scan are skipped.
    pub fn fit_c(&self, alphas: &[f64]) -> f64 {
        let (mut sxx, mut sxt) = (0.0, 0.0);
        for &alpha in alphas {
            if let Some(tau) = self.tau(alpha) {
                let x = (1.0 / alpha).ln();
                sxx += x * x;
                sxt += x * tau as f64;
            }
        }
        if sxx > 0.0 {
            sxt / sxx
        } else {
            0.0
        }
    }
}

fn tv_distance(pk: &DMatrix<f64>, pi: &DVector<f64>) -> f64 {
    (0..pk.nrows())
        .map(|i| 0.5 * (0..pk.ncols()).map(|j| (pk[(i, j)] - pi[j]).abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `τ(α) = ⌈C log(1/α)⌉`, clamped at zero.
pub fn tau_from_c(c: f64, alpha: f64) -> u64 {
    let t = (c * (1.0 / alpha).ln()).ceil();
    if t > 0.0 {
        t as u64
    } else {
        0
    }
}

/// State-chain TV mixing time for one `α`, with `C` fitted over
/// [`FIT_ALPHAS`].
pub fn tv_mixing_time(chain: &MarkovChain, pi: &StationaryDist, alpha: f64) -> Result<MixingEstimate> {
    if !(alpha > 0.0) {
        return Err(Error::Parameter(format!("alpha must be positive, got {alpha}")));
    }
    let stop = FIT_ALPHAS.iter().fold(alpha, |a, &b| a.min(b));
    let profile = MixingProfile::scan(chain, pi, stop, MIXING_CAP)?;
    let tau = profile.tau(alpha).expect("scan passes alpha");
    Ok(MixingEstimate { alpha, tau, c: profile.fit_c(&FIT_ALPHAS), method: MixingMethod::TvStateChain })
}

/// Outcome of a Monte-Carlo check of a candidate mixing time.
#[derive(Debug, Clone, PartialEq)]
pub struct McMixingReport {
    pub alpha: f64,
    pub tau: u64,
    /// Worst start state for `‖mean A(X_τ) − A‖₂` and its standard error.
    pub a_deviation: f64,
    pub a_std_err: f64,
    /// Same for `‖mean b̄(X_τ) − b‖₂`.
    pub b_deviation: f64,
    pub b_std_err: f64,
    pub pass: bool,
}

impl McMixingReport {
    pub fn as_estimate(&self, c: f64) -> MixingEstimate {
        MixingEstimate { alpha: self.alpha, tau: self.tau, c, method: MixingMethod::McDefinition }
    }
}

/// For every start state `s_0`, draws `num_mc` samples of `X_τ` and compares
/// the sample means of `A(X_τ)` and `b̄(X_τ)` with `A` and `b`. The trace
/// entering `s_0` comes from a warm-up of geometric length (success
/// probability `1 − γλ`) started from a stationary draw. Passes when every
/// start state is within `alpha + 3·SE` on both operators.
pub fn mc_mixing_check(
    mdp: &MultiAgentMdp,
    fm: &FeatureMap,
    oracle: &FixedPointOracle,
    alpha: f64,
    tau: u64,
    num_mc: usize,
    seed: u64,
) -> Result<McMixingReport> {
    if num_mc < 2 {
        return Err(Error::Parameter("num_mc must be at least 2".into()));
    }
    let s = mdp.num_states();
    let l = fm.num_features();
    let gamma = mdp.gamma();
    let gl = gamma * oracle.lambda;
    let pi = oracle.stationary.pi().as_slice();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut report =
        McMixingReport { alpha, tau, a_deviation: 0.0, a_std_err: 0.0, b_deviation: 0.0, b_std_err: 0.0, pass: true };
    for s0 in 0..s {
        let mut a_sum = DMatrix::<f64>::zeros(l, l);
        let mut a_sq = DMatrix::<f64>::zeros(l, l);
        let mut b_sum = DVector::<f64>::zeros(l);
        let mut b_sq = DVector::<f64>::zeros(l);
        for _ in 0..num_mc {
            let mut z = DVector::<f64>::zeros(l);
            let mut state = draw(pi, &mut rng);
            while gl > 0.0 && rng.random::<f64>() < gl {
                z = &z * gl + fm.row(state);
                state = mdp.chain().sample_next(state, &mut rng);
            }
            let mut state = s0;
            let mut k = 0;
            loop {
                z = &z * gl + fm.row(state);
                let sample = mdp.sample_transition(state, &mut rng);
                if k == tau {
                    let ops = noisy_operators(&sample, &z, fm, gamma);
                    let b = ops.b_mean();
                    a_sq += ops.a.component_mul(&ops.a);
                    a_sum += ops.a;
                    b_sq += b.component_mul(&b);
                    b_sum += b;
                    break;
                }
                state = sample.to;
                k += 1;
            }
        }
        let n = num_mc as f64;
        let a_mean = &a_sum / n;
        let b_mean = &b_sum / n;
        let a_var: f64 = (&a_sq / n - a_mean.component_mul(&a_mean)).iter().map(|v| v.max(0.0)).sum();
        let b_var: f64 = (&b_sq / n - b_mean.component_mul(&b_mean)).iter().map(|v| v.max(0.0)).sum();
        let a_se = (a_var / (n - 1.0)).sqrt();
        let b_se = (b_var / (n - 1.0)).sqrt();
        let a_dev = spectral_norm(&(a_mean - &oracle.a));
        let b_dev = (b_mean - &oracle.b).norm();
        report.pass &= a_dev <= alpha + 3.0 * a_se && b_dev <= alpha + 3.0 * b_se;
        if a_dev > report.a_deviation {
            report.a_deviation = a_dev;
            report.a_std_err = a_se;
        }
        if b_dev > report.b_deviation {
            report.b_deviation = b_dev;
            report.b_std_err = b_se;
        }
    }
    Ok(report)
}

fn draw<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}
