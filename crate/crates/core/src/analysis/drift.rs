//! Monitor for how far the network average can move within one mixing
//! window under a constant step size.

use crate::dtd::Trajectory;
use crate::error::{Error, Result};

/// Relative slack absorbing rounding in the comparisons.
const REL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftRow {
    pub k: u64,
    /// `‖θ̄_k − θ̄_{k−τ}‖`.
    pub lhs: f64,
    /// `2(1+γ)τα‖θ̄_{k−τ}‖/(1−γλ) + 2Rατ/(1−γλ)`.
    pub rhs_lagged: f64,
    /// `6(1+γ)ατ‖θ̄_k‖/(1−γλ) + 6Rατ/(1−γλ)`.
    pub rhs_current: f64,
    /// `72(1+γ)²α²τ²‖θ̄_k‖²/(1−γλ)² + 72R²α²τ²/(1−γλ)²`.
    pub rhs_squared: f64,
    /// `8‖θ̄_k‖² + 8R²`.
    pub rhs_coarse: f64,
    pub ok: [bool; 3],
}

impl DriftRow {
    pub fn all_ok(&self) -> bool {
        self.ok.iter().all(|&b| b)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriftReport {
    pub tau: u64,
    pub rows: Vec<DriftRow>,
}

impl DriftReport {
    pub fn all_ok(&self) -> bool {
        self.rows.iter().all(DriftRow::all_ok)
    }

    pub fn violations(&self) -> usize {
        self.rows.iter().filter(|r| !r.all_ok()).count()
    }
}

fn within(lhs: f64, rhs: f64) -> bool {
    lhs <= rhs * (1.0 + REL_TOL) + f64::MIN_POSITIVE
}

/// Checks the three drift inequalities at every recorded `k ≥ τ`. The
/// trajectory must have been recorded with `lag = τ`; `ατ` must not exceed
/// `(1−γλ) log 2/(1+γ)`.
pub fn drift_monitor(
    traj: &Trajectory,
    tau: u64,
    gamma: f64,
    lambda: f64,
    reward_bound: f64,
    alpha: f64,
) -> Result<DriftReport> {
    let one_minus_gl = 1.0 - gamma * lambda;
    if alpha * tau as f64 > one_minus_gl * std::f64::consts::LN_2 / (1.0 + gamma) {
        return Err(Error::Precondition(format!("alpha·tau = {} exceeds the drift window limit", alpha * tau as f64)));
    }
    if tau > 0 && traj.lag as u64 != tau {
        return Err(Error::Precondition(format!("trajectory lag {} differs from tau {tau}", traj.lag)));
    }
    let at = alpha * tau as f64;
    let gain = (1.0 + gamma) / one_minus_gl;
    let r = reward_bound;
    let mut rows = Vec::new();
    for snap in traj.snapshots.iter().filter(|s| s.k >= tau) {
        let lagged = if tau == 0 {
            snap.mean.clone()
        } else {
            match &snap.lagged_mean {
                Some(m) => m.clone(),
                None => return Err(Error::Precondition(format!("no lagged mean recorded at k = {}", snap.k))),
            }
        };
        let lhs = (&snap.mean - &lagged).norm();
        let now = snap.mean.norm();
        let rhs_lagged = 2.0 * gain * at * lagged.norm() + 2.0 * r * at / one_minus_gl;
        let rhs_current = 6.0 * gain * at * now + 6.0 * r * at / one_minus_gl;
        let rhs_squared = 72.0 * (gain * at * now).powi(2) + 72.0 * (r * at / one_minus_gl).powi(2);
        let rhs_coarse = 8.0 * now * now + 8.0 * r * r;
        let sq = lhs * lhs;
        rows.push(DriftRow {
            k: snap.k,
            lhs,
            rhs_lagged,
            rhs_current,
            rhs_squared,
            rhs_coarse,
            ok: [
                within(lhs, rhs_lagged),
                within(lhs, rhs_current),
                within(sq, rhs_squared) && within(sq, rhs_coarse),
            ],
        });
    }
    Ok(DriftReport { tau, rows })
}
