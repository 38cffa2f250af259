//! Constants and right-hand sides of the finite-time bounds.
//!
//! Everything here is a plain evaluation of closed-form expressions in the
//! problem constants `γ, λ, R, σ₂, σ_min, ‖θ*‖, N` and the mixing model.

use std::f64::consts::LN_2;

use crate::error::{Error, Result};

/// Problem-level inputs shared by every bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProblemConstants {
    pub gamma: f64,
    pub lambda: f64,
    pub reward_bound: f64,
    pub sigma2: f64,
    pub sigma_min: f64,
    pub theta_star_norm: f64,
    pub num_agents: usize,
    /// Geometric mixing constant, `τ(α) = ⌈C log(1/α)⌉`.
    pub mixing_c: f64,
}

impl ProblemConstants {
    fn one_minus_gl(&self) -> f64 {
        1.0 - self.gamma * self.lambda
    }

    /// `(1+γ)² / (1−γλ)²`.
    fn gain_sq(&self) -> f64 {
        ((1.0 + self.gamma) / self.one_minus_gl()).powi(2)
    }

    pub fn delta(&self, alpha: f64) -> Result<f64> {
        delta(self.sigma2, alpha, self.gamma, self.lambda)
    }

    /// `4R²α² / ((1−γλ)²(1−δ)²)`, the consensus variance term.
    pub fn variance_floor(&self, alpha: f64) -> Result<f64> {
        let d = self.delta(alpha)?;
        let r = self.reward_bound;
        Ok(4.0 * r * r * alpha * alpha / (self.one_minus_gl().powi(2) * (1.0 - d).powi(2)))
    }

    /// `(1−γλ) log 2 / (1+γ)`.
    fn drift_cap(&self) -> f64 {
        self.one_minus_gl() * LN_2 / (1.0 + self.gamma)
    }
}

/// `δ = σ₂ + (1+γ)α/(1−γλ)`; must stay below one.
pub fn delta(sigma2: f64, alpha: f64, gamma: f64, lambda: f64) -> Result<f64> {
    let d = sigma2 + (1.0 + gamma) * alpha / (1.0 - gamma * lambda);
    if d >= 1.0 {
        return Err(Error::StepTooLarge { delta: d });
    }
    Ok(d)
}

/// Which form of `Ψ₂` to use. The two printed forms differ by a factor two on
/// the `τ(α)` term; `Derivation` keeps the factor and is the larger of the two.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PsiVariant {
    #[default]
    Derivation,
    Statement,
}

/// `50R² + 32(R+1)³ + 100(R+‖θ*‖)²`.
fn bias_numerator(r: f64, t: f64) -> f64 {
    50.0 * r * r + 32.0 * (r + 1.0).powi(3) + 100.0 * (r + t).powi(2)
}

/// `(Ψ₁, Ψ₂)` for a constant step with mixing time `tau`.
pub fn psi_constant(c: &ProblemConstants, tau: u64, variant: PsiVariant) -> (f64, f64) {
    let (r, t) = (c.reward_bound, c.theta_star_norm);
    let tau = tau as f64;
    let psi1 = 4.0 * (36.0 + (229.0 + 42.0 * r) * c.gain_sq() * tau);
    let factor = match variant {
        PsiVariant::Derivation => 2.0,
        PsiVariant::Statement => 1.0,
    };
    let psi2 = t * t * psi1
        + 2.0 * (32.0 * r * r + 2.0 * t * t + 1.0)
        + factor * bias_numerator(r, t) * c.gain_sq() * tau;
    (psi1, psi2)
}

/// `(Ψ₃, Ψ₄)` for the diminishing step.
pub fn psi_diminishing(c: &ProblemConstants) -> (f64, f64) {
    let (r, t) = (c.reward_bound, c.theta_star_norm);
    let psi3 = 4.0 * (36.0 + (229.0 + 42.0 * r) * c.gain_sq());
    let psi4 = t * t * psi3 + 2.0 * (32.0 * r * r + 2.0 * t * t + 1.0 + bias_numerator(r, t) * c.gain_sq());
    (psi3, psi4)
}

/// One clause `α < limit` of the constant step-size condition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Clause {
    /// 1: consensus contraction, 2: mixing window, 3: strong monotonicity.
    pub id: u8,
    pub limit: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepsizeVerdict {
    pub alpha: f64,
    pub tau: u64,
    pub clauses: [Clause; 3],
}

impl StepsizeVerdict {
    pub fn pass(&self) -> bool {
        self.alpha > 0.0 && self.clauses.iter().all(|c| c.pass)
    }

    pub fn first_failure(&self) -> Option<u8> {
        self.clauses.iter().find(|c| !c.pass).map(|c| c.id)
    }
}

/// Checks `α < min{(1−γλ)(1−σ₂)/(1+γ), (1−γλ)log2/((1+γ)τ(α)), σ_min/Ψ₁}`.
/// A mixing time of zero leaves the second clause vacuous.
pub fn stepsize_conditions(c: &ProblemConstants, alpha: f64, tau: u64) -> StepsizeVerdict {
    let g = c.one_minus_gl() / (1.0 + c.gamma);
    let l1 = g * (1.0 - c.sigma2);
    let l2 = if tau == 0 { f64::INFINITY } else { c.drift_cap() / tau as f64 };
    let (psi1, _) = psi_constant(c, tau, PsiVariant::default());
    let l3 = c.sigma_min / psi1;
    let clause = |id, limit: f64| Clause { id, limit, pass: alpha < limit };
    StepsizeVerdict { alpha, tau, clauses: [clause(1, l1), clause(2, l2), clause(3, l3)] }
}

/// Largest `α = hi·ratioⁱ` (i = 0, 1, …) passing every clause, with `τ(α)`
/// supplied by `tau_of`. Stops below `lo`.
pub fn largest_valid_alpha(
    c: &ProblemConstants,
    tau_of: impl Fn(f64) -> Result<u64>,
    hi: f64,
    lo: f64,
    ratio: f64,
) -> Result<StepsizeVerdict> {
    if !(ratio > 0.0 && ratio < 1.0) || !(hi > lo && lo > 0.0) {
        return Err(Error::Parameter("grid needs 0 < lo < hi and 0 < ratio < 1".into()));
    }
    let mut alpha = hi;
    while alpha >= lo {
        let verdict = stepsize_conditions(c, alpha, tau_of(alpha)?);
        if verdict.pass() {
            return Ok(verdict);
        }
        alpha *= ratio;
    }
    Err(Error::Unsatisfiable(format!("conditions unsatisfiable at this scale: no step size in [{lo:e}, {hi:e}]")))
}

/// Smallest `K*` such that for every `k ≥ K*`, with `α_k = α₀/(k+1)` and
/// `τ_k = ⌈C log(1/α_k)⌉`:
/// `α_k ≤ alpha_ref`, `k ≥ τ_k` and
/// `τ_k α_{k−τ_k} ≤ min{(1−γλ)log2/(1+γ), σ_min/Ψ₃}`.
///
/// `τ_k` is a step function of `k`. Within one plateau the product is
/// decreasing, so it suffices to inspect plateau starts and bisect inside the
/// last failing plateau.
pub fn find_kstar(c: &ProblemConstants, alpha0: f64, alpha_ref: f64, cap: u64) -> Result<u64> {
    if !(alpha0 > 0.0 && alpha_ref > 0.0) {
        return Err(Error::Parameter("step sizes must be positive".into()));
    }
    let (psi3, _) = psi_diminishing(c);
    let limit = c.drift_cap().min(c.sigma_min / psi3);
    let tau_at = |k: u64| tau_from_model(c.mixing_c, alpha0 / (k as f64 + 1.0));
    let ok = |k: u64| {
        let t = tau_at(k);
        if t > k {
            return false;
        }
        t as f64 * alpha0 / ((k - t) as f64 + 1.0) <= limit
    };
    let k_ref = ((alpha0 / alpha_ref - 1.0).ceil()).max(1.0);
    if k_ref > cap as f64 {
        return Err(Error::Unsatisfiable(format!("conditions unsatisfiable at this scale: K* > {cap}")));
    }
    let k_ref = k_ref as u64;

    // Plateau starts: τ(α_k) ≥ t  ⇔  k + 1 ≥ α₀ exp((t−1)/C) (up to rounding).
    let mut last_bad_plateau: Option<(u64, u64)> = None;
    let mut start = k_ref;
    let mut idle = 0;
    while start <= cap {
        let t = tau_at(start);
        let end = plateau_end(&tau_at, start, t, cap);
        if !ok(start) {
            last_bad_plateau = Some((start, end));
            idle = 0;
        } else {
            idle += 1;
            // The product at plateau starts decays like log(k)/k; once it has
            // passed for many consecutive plateaus it stays below the limit.
            if idle > 64 {
                break;
            }
        }
        if end == cap {
            break;
        }
        start = end + 1;
    }
    let kstar = match last_bad_plateau {
        None => k_ref,
        Some((_, end)) if !ok(end) => {
            if end >= cap {
                return Err(Error::Unsatisfiable(format!("conditions unsatisfiable at this scale: K* > {cap}")));
            }
            end + 1
        }
        Some((s, end)) => {
            let (mut lo, mut hi) = (s, end);
            while hi - lo > 1 {
                let mid = lo + (hi - lo) / 2;
                if ok(mid) {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            hi
        }
    };
    Ok(kstar.max(k_ref).max(1))
}

fn tau_from_model(c: f64, alpha: f64) -> u64 {
    crate::analysis::mixing::tau_from_c(c, alpha)
}

/// Last `k` in `[start, cap]` with the same mixing time as `start`.
fn plateau_end(tau_at: &impl Fn(u64) -> u64, start: u64, t: u64, cap: u64) -> u64 {
    let (mut lo, mut hi) = (start, start.saturating_mul(2).max(start + 1).min(cap));
    while hi < cap && tau_at(hi) == t {
        lo = hi;
        hi = hi.saturating_mul(2).min(cap);
    }
    if tau_at(hi) == t {
        return hi;
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if tau_at(mid) == t {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Inputs of the constant-step bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantStepInputs {
    pub consts: ProblemConstants,
    pub alpha: f64,
    pub tau: u64,
    /// `E‖Θ₀‖²` (Frobenius).
    pub theta0_sq: f64,
    /// `E‖θ̄₀ − θ*‖²`.
    pub mean0_err_sq: f64,
    pub variant: PsiVariant,
}

impl ConstantStepInputs {
    fn checked(&self) -> Result<(f64, f64)> {
        let verdict = stepsize_conditions(&self.consts, self.alpha, self.tau);
        if let Some(id) = verdict.first_failure() {
            return Err(Error::Precondition(format!("step size {} fails clause {id}", self.alpha)));
        }
        let d = self.consts.delta(self.alpha)?;
        let (_, psi2) = psi_constant(&self.consts, self.tau, self.variant);
        Ok((d, psi2))
    }

    /// `4R²α²/((1−γλ)²(1−δ)²) + 2Ψ₂α/σ_min`.
    pub fn limit(&self) -> Result<f64> {
        let (_, psi2) = self.checked()?;
        Ok(self.consts.variance_floor(self.alpha)? + 2.0 * psi2 * self.alpha / self.consts.sigma_min)
    }

    /// Mean-squared-error bound at iteration `k ≥ τ(α)`.
    pub fn rhs(&self, k: u64) -> Result<f64> {
        if k < self.tau {
            return Err(Error::Precondition(format!("k = {k} is below the mixing time {}", self.tau)));
        }
        let (d, _) = self.checked()?;
        let c = &self.consts;
        let (t, r) = (c.theta_star_norm, c.reward_bound);
        let transient = 4.0 * self.theta0_sq / c.num_agents as f64 * d.powf(2.0 * k as f64)
            + (20.0 * self.mean0_err_sq + 16.0 * (t + r).powi(2))
                * (1.0 - c.sigma_min * self.alpha).powf((k - self.tau) as f64);
        Ok(transient + self.limit()?)
    }

    /// Pathwise consensus bound `δᵏ‖Θ₀‖ + √N Rα/((1−γλ)(1−δ))`, with
    /// `theta0_norm` the Frobenius norm of the initial weights.
    pub fn consensus_bound(&self, theta0_norm: f64, k: u64) -> Result<f64> {
        consensus_bound_constant(&self.consts, self.alpha, theta0_norm, k)
    }
}

pub fn consensus_bound_constant(c: &ProblemConstants, alpha: f64, theta0_norm: f64, k: u64) -> Result<f64> {
    let d = c.delta(alpha)?;
    Ok(d.powf(k as f64) * theta0_norm
        + (c.num_agents as f64).sqrt() * c.reward_bound * alpha / (c.one_minus_gl() * (1.0 - d)))
}

/// Inputs of the diminishing-step bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiminishingInputs {
    pub consts: ProblemConstants,
    pub alpha0: f64,
    /// Constant step that fixes `δ`; every `α_k` with `k ≥ K*` is below it.
    pub alpha_ref: f64,
    pub kstar: u64,
    /// `E‖Θ_{K*}‖²`.
    pub theta_kstar_sq: f64,
    /// `E‖θ̄_{K*} − θ*‖²`.
    pub mean_kstar_err_sq: f64,
}

impl DiminishingInputs {
    pub fn alpha_k(&self, k: f64) -> f64 {
        self.alpha0 / (k + 1.0)
    }

    /// Mean-squared-error bound at iteration `k ≥ K*`.
    pub fn rhs(&self, k: u64) -> Result<f64> {
        let c = &self.consts;
        if k < self.kstar {
            return Err(Error::Precondition(format!("k = {k} is below K* = {}", self.kstar)));
        }
        // A few ulps of slack so that α₀ = 1/σ_min itself qualifies.
        if self.alpha0 * c.sigma_min < 1.0 - 1e-12 {
            return Err(Error::Precondition(format!(
                "alpha0 = {} is below 1/sigma_min = {}",
                self.alpha0,
                1.0 / c.sigma_min
            )));
        }
        let d = c.delta(self.alpha_ref)?;
        let (_, psi4) = psi_diminishing(c);
        let (kf, ks) = (k as f64, self.kstar as f64);
        let r2 = c.reward_bound.powi(2);
        let noise = 6.0 * r2 / (c.one_minus_gl().powi(2) * (1.0 - d).powi(2));
        let log = ((kf + 1.0) / self.alpha0).ln();
        Ok(6.0 * self.theta_kstar_sq / c.num_agents as f64 * d.powf(2.0 * (kf - ks))
            + 2.0 * ks / (kf + 1.0) * self.mean_kstar_err_sq
            + noise * self.alpha0.powi(2) * d.powf(kf)
            + noise / (kf + 1.0).powi(2)
            + 2.0 * psi4 * c.mixing_c * self.alpha0 * log * log / (kf + 1.0))
    }

    /// `δ^{k−K*}‖Θ_{K*}‖ + √N Rα₀δ^{k/2}/((1−γλ)(1−δ)) + √N Rα_{k/2}/((1−γλ)(1−δ))`.
    pub fn consensus_bound(&self, theta_kstar_norm: f64, k: u64) -> Result<f64> {
        let c = &self.consts;
        if k < self.kstar {
            return Err(Error::Precondition(format!("k = {k} is below K* = {}", self.kstar)));
        }
        let d = c.delta(self.alpha_ref)?;
        let kf = k as f64;
        let scale = (c.num_agents as f64).sqrt() * c.reward_bound / (c.one_minus_gl() * (1.0 - d));
        Ok(d.powf(kf - self.kstar as f64) * theta_kstar_norm
            + scale * self.alpha0 * d.powf(kf / 2.0)
            + scale * self.alpha_k(kf / 2.0))
    }
}
