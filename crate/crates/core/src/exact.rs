//! Closed-form ground truth for TD(λ) with linear features.
//!
//! With `U = (1−λ) Σ_k λᵏ (γP)^{k+1}` the expected TD(λ) update is
//! `Aθ + b` where `A = ΦᵀD(U − I)Φ` and `b = ΦᵀD Σ_k (γλP)ᵏ r̄`. The limit
//! point therefore solves `Aθ* + b = 0`.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::features::{weighted_norm, FeatureMap};
use crate::linalg::{self, fmt17};
use crate::mdp::{self, MarkovChain, MultiAgentMdp, StationaryDist};

fn check_gamma_lambda(gamma: f64, lambda: f64) -> Result<()> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::Parameter(format!("gamma {gamma} outside [0, 1)")));
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Parameter(format!("lambda {lambda} outside [0, 1]")));
    }
    Ok(())
}

/// `(I − cP)⁻¹` for `c < 1`.
fn resolvent(chain: &MarkovChain, c: f64) -> Result<DMatrix<f64>> {
    let s = chain.num_states();
    linalg::inverse(&(DMatrix::identity(s, s) - chain.transition() * c))
}

/// `U = (1−λ)γP(I − λγP)⁻¹`, the closed form of the geometric series.
/// At `λ = 1` this is the zero matrix.
pub fn compute_u(chain: &MarkovChain, gamma: f64, lambda: f64) -> Result<DMatrix<f64>> {
    check_gamma_lambda(gamma, lambda)?;
    let gp = chain.transition() * gamma;
    Ok(gp * resolvent(chain, gamma * lambda)? * (1.0 - lambda))
}

/// `A = ΦᵀD(U − I)Φ`; fails unless the symmetric part is negative definite.
pub fn compute_a(fm: &FeatureMap, d: &StationaryDist, u: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let s = fm.num_states();
    if u.shape() != (s, s) || d.len() != s {
        return Err(Error::Dimension(format!("compute_a: U is {:?}, S = {s}", u.shape())));
    }
    let phi = fm.matrix();
    let a = phi.transpose() * d.diag() * (u - DMatrix::identity(s, s)) * phi;
    let max_eigenvalue = *linalg::symmetric_part_eigenvalues(&a).last().unwrap();
    if max_eigenvalue >= 0.0 {
        return Err(Error::NotNegativeDefinite { max_eigenvalue });
    }
    Ok(a)
}

/// `b_v = ΦᵀD(I − γλP)⁻¹ r_v`.
pub fn compute_b(
    fm: &FeatureMap,
    d: &StationaryDist,
    chain: &MarkovChain,
    r_v: &DVector<f64>,
    gamma: f64,
    lambda: f64,
) -> Result<DVector<f64>> {
    check_gamma_lambda(gamma, lambda)?;
    if r_v.len() != fm.num_states() {
        return Err(Error::Dimension(format!("reward vector has length {}", r_v.len())));
    }
    let discounted = resolvent(chain, gamma * lambda)? * r_v;
    Ok(fm.matrix().transpose() * discounted.component_mul(d.pi()))
}

/// Solves `A θ = rhs` and returns `θ` with `σ_min`, the smallest eigenvalue
/// of `−(A + Aᵀ)/2`.
pub fn solve_fixed_point(a: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<(DVector<f64>, f64)> {
    let theta = linalg::solve(a, rhs)?;
    let sigma_min = -*linalg::symmetric_part_eigenvalues(a).last().unwrap();
    if !(sigma_min > 0.0) {
        return Err(Error::NotNegativeDefinite { max_eigenvalue: -sigma_min });
    }
    Ok((theta, sigma_min))
}

/// Every closed-form quantity for one `(MDP, features, λ)` triple.
#[derive(Debug, Clone)]
pub struct FixedPointOracle {
    pub gamma: f64,
    pub lambda: f64,
    pub stationary: StationaryDist,
    pub u: DMatrix<f64>,
    pub a: DMatrix<f64>,
    /// Per-agent `b_v`.
    pub b_v: Vec<DVector<f64>>,
    /// Network average `b = (1/N) Σ_v b_v`.
    pub b: DVector<f64>,
    pub theta_star: DVector<f64>,
    /// Smallest eigenvalue of `−(A + Aᵀ)/2`; the constant used by the bounds.
    pub sigma_min: f64,
    /// Smallest singular value of `−A`, reported alongside.
    pub sigma_min_singular: f64,
}

impl FixedPointOracle {
    /// Builds the oracle. For `λ = 1` the weights are the D-projection of the
    /// exact value, `(ΦᵀDΦ)⁻¹ΦᵀD J`; for `λ < 1` they solve `Aθ* = −b`.
    pub fn build(mdp: &MultiAgentMdp, fm: &FeatureMap, lambda: f64) -> Result<Self> {
        mdp::validate_chain(mdp.chain())?;
        if fm.num_states() != mdp.num_states() {
            return Err(Error::Dimension(format!(
                "features cover {} states, MDP has {}",
                fm.num_states(),
                mdp.num_states()
            )));
        }
        let gamma = mdp.gamma();
        check_gamma_lambda(gamma, lambda)?;
        let stationary = mdp::stationary_distribution(mdp.chain())?;
        let u = compute_u(mdp.chain(), gamma, lambda)?;
        let a = compute_a(fm, &stationary, &u)?;
        let b_v = (0..mdp.num_agents())
            .map(|v| {
                let r = mdp::expected_reward_vector(mdp, v)?;
                compute_b(fm, &stationary, mdp.chain(), &r, gamma, lambda)
            })
            .collect::<Result<Vec<_>>>()?;
        let b = average(&b_v);
        let (closed_form, sigma_min) = solve_fixed_point(&a, &(-&b))?;
        let theta_star = if lambda == 1.0 {
            let j = mdp::true_value(mdp)?;
            fm.projection_weights(&stationary, &j)?
        } else {
            closed_form
        };
        let sigma_min_singular = linalg::singular_values_desc(&(-&a)).last().copied().unwrap_or(0.0);
        Ok(Self { gamma, lambda, stationary, u, a, b_v, b, theta_star, sigma_min, sigma_min_singular })
    }

    /// `‖Aθ* + b‖₂`.
    pub fn residual(&self) -> f64 {
        (&self.a * &self.theta_star + &self.b).norm()
    }

    /// The TD(λ) operator `x ↦ (I − γλP)⁻¹ r̄ + U x` applied to `x`.
    pub fn lambda_operator(&self, mdp: &MultiAgentMdp, x: &DVector<f64>) -> Result<DVector<f64>> {
        let r = mdp::average_reward_vector(mdp);
        Ok(resolvent(mdp.chain(), self.gamma * self.lambda)? * r + &self.u * x)
    }

    /// Plain-text dump of `A`, `b`, `θ*`, `σ_min` and diagnostics.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "gamma {}", fmt17(self.gamma));
        let _ = writeln!(out, "lambda {}", fmt17(self.lambda));
        let _ = writeln!(out, "sigma_min {}", fmt17(self.sigma_min));
        let _ = writeln!(out, "sigma_min_singular {}", fmt17(self.sigma_min_singular));
        let _ = writeln!(out, "residual {}", fmt17(self.residual()));
        let _ = writeln!(out, "norm_A {}", fmt17(linalg::spectral_norm(&self.a)));
        let _ = writeln!(out, "norm_b {}", fmt17(self.b.norm()));
        let _ = writeln!(out, "theta_star_norm {}", fmt17(self.theta_star.norm()));
        let _ = writeln!(out, "A {} {}", self.a.nrows(), self.a.ncols());
        for i in 0..self.a.nrows() {
            let row: Vec<String> = self.a.row(i).iter().map(|&x| fmt17(x)).collect();
            let _ = writeln!(out, "{}", row.join(" "));
        }
        let vec_line = |v: &DVector<f64>| v.iter().map(|&x| fmt17(x)).collect::<Vec<_>>().join(" ");
        let _ = writeln!(out, "b {}", self.b.len());
        let _ = writeln!(out, "{}", vec_line(&self.b));
        let _ = writeln!(out, "theta_star {}", self.theta_star.len());
        let _ = writeln!(out, "{}", vec_line(&self.theta_star));
        for (v, bv) in self.b_v.iter().enumerate() {
            let _ = writeln!(out, "b_agent {v} {}", vec_line(bv));
        }
        out
    }
}

fn average(vs: &[DVector<f64>]) -> DVector<f64> {
    let mut acc = DVector::zeros(vs[0].len());
    for v in vs {
        acc += v;
    }
    acc / vs.len() as f64
}

/// `(‖ΠJ − J‖_D, ‖Φθ* − J‖_D, (1−γλ)/(1−γ) ‖ΠJ − J‖_D)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApproxQuality {
    pub lower: f64,
    pub actual: f64,
    pub upper: f64,
}

/// Evaluates the approximation sandwich and fails if it is violated.
pub fn approximation_quality(
    oracle: &FixedPointOracle,
    j: &DVector<f64>,
    fm: &FeatureMap,
    d: &StationaryDist,
) -> Result<ApproxQuality> {
    let pj = fm.project(d, j)?;
    let lower = weighted_norm(&(&pj - j), d);
    let actual = weighted_norm(&(fm.value_estimate(&oracle.theta_star)? - j), d);
    let upper = (1.0 - oracle.gamma * oracle.lambda) / (1.0 - oracle.gamma) * lower;
    let q = ApproxQuality { lower, actual, upper };
    if lower > actual + 1e-12 || actual > upper + 1e-9 {
        return Err(Error::BoundViolation(format!(
            "approximation sandwich violated: lower {lower:.6e}, actual {actual:.6e}, upper {upper:.6e}"
        )));
    }
    Ok(q)
}

/// Norms of `A` and `b` against `(1+γ)/(1−γλ)` and `R/(1−γλ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormBoundReport {
    pub a_norm: f64,
    pub a_bound: f64,
    pub b_norm: f64,
    pub b_bound: f64,
}

impl NormBoundReport {
    pub fn a_slack(&self) -> f64 {
        self.a_bound - self.a_norm
    }

    pub fn b_slack(&self) -> f64 {
        self.b_bound - self.b_norm
    }
}

pub fn norm_bound_check(oracle: &FixedPointOracle, reward_bound: f64) -> Result<NormBoundReport> {
    let gl = oracle.gamma * oracle.lambda;
    let report = NormBoundReport {
        a_norm: linalg::spectral_norm(&oracle.a),
        a_bound: (1.0 + oracle.gamma) / (1.0 - gl),
        b_norm: oracle.b.norm(),
        b_bound: reward_bound / (1.0 - gl),
    };
    // Relative slack of a few ulps absorbs rounding when the bound is attained.
    let tol = |x: f64| 1e-12 * x.max(1.0);
    if report.a_slack() < -tol(report.a_bound) {
        return Err(Error::BoundViolation(format!(
            "‖A‖ = {} exceeds {}",
            report.a_norm, report.a_bound
        )));
    }
    if report.b_slack() < -tol(report.b_bound) {
        return Err(Error::BoundViolation(format!(
            "‖b‖ = {} exceeds {}",
            report.b_norm, report.b_bound
        )));
    }
    Ok(report)
}
