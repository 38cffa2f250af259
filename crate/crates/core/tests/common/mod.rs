//! Independent reference computations shared by the integration tests.
//!
//! Nothing here calls the closed forms under test: series are truncated
//! sums, matrix products are explicit loops, and bound formulas are coded a
//! second time from their written form.

#![allow(dead_code)]

use dtd_lab::features::FeatureMap;
use dtd_lab::mdp::{random_mdp, GarnetParams, MultiAgentMdp};
use nalgebra::{DMatrix, DVector};

pub fn instance(s: usize, n: usize, gamma: f64, r: f64, seed: u64) -> MultiAgentMdp {
    random_mdp(GarnetParams {
        num_states: s,
        num_agents: n,
        branching: (s / 2).max(2).min(s),
        reward_bound: r,
        gamma,
        seed,
    })
    .unwrap()
}

/// Plain row-major copy.
pub fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

pub fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let (n, m, p) = (a.len(), b.len(), b[0].len());
    let mut c = vec![vec![0.0; p]; n];
    for i in 0..n {
        for k in 0..m {
            for j in 0..p {
                c[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    c
}

pub fn matvec(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    a.iter().map(|row| row.iter().zip(x).map(|(p, q)| p * q).sum()).collect()
}

pub fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
}

pub fn max_abs_diff(a: &[Vec<f64>], b: &DMatrix<f64>) -> f64 {
    let mut m: f64 = 0.0;
    for i in 0..a.len() {
        for j in 0..a[0].len() {
            m = m.max((a[i][j] - b[(i, j)]).abs());
        }
    }
    m
}

/// `P^power`, row 0, by repeated multiplication.
pub fn power_row(p: &DMatrix<f64>, power: usize) -> Vec<f64> {
    let pr = rows(p);
    let mut acc = identity(p.nrows());
    for _ in 0..power {
        acc = matmul(&acc, &pr);
    }
    acc[0].clone()
}

/// `Σ_{k=0}^{K} (1−λ) λᵏ (γP)^{k+1}`, stopped once the coefficient drops
/// below `1e-18`.
pub fn series_u(p: &DMatrix<f64>, gamma: f64, lambda: f64) -> Vec<Vec<f64>> {
    let s = p.nrows();
    let gp: Vec<Vec<f64>> = rows(p).into_iter().map(|r| r.into_iter().map(|x| gamma * x).collect()).collect();
    let mut power = gp.clone();
    let mut out = vec![vec![0.0; s]; s];
    let mut coeff = 1.0 - lambda;
    while coeff * gamma.max(1e-300) > 1e-18 || coeff == 1.0 - lambda {
        for i in 0..s {
            for j in 0..s {
                out[i][j] += coeff * power[i][j];
            }
        }
        coeff *= lambda;
        if coeff == 0.0 {
            break;
        }
        power = matmul(&power, &gp);
    }
    out
}

/// `Σ_k (γλP)ᵏ r`, truncated once `(γλ)ᵏ max|r| < 1e-18`.
pub fn series_resolvent_apply(p: &DMatrix<f64>, gl: f64, r: &[f64]) -> Vec<f64> {
    let pr = rows(p);
    let mut term = r.to_vec();
    let mut out = r.to_vec();
    let scale = r.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1e-300);
    let mut c = 1.0;
    loop {
        c *= gl;
        if c * scale < 1e-18 {
            break;
        }
        term = matvec(&pr, &term).into_iter().map(|x| gl * x).collect();
        for (o, t) in out.iter_mut().zip(&term) {
            *o += t;
        }
    }
    out
}

/// `r^v(i) = Σ_j p_ij R_v(i, j)` by direct summation.
pub fn reward_vector(mdp: &MultiAgentMdp, v: usize) -> Vec<f64> {
    let p = mdp.chain().transition();
    (0..mdp.num_states())
        .map(|i| (0..mdp.num_states()).map(|j| p[(i, j)] * mdp.reward(v, i, j)).sum())
        .collect()
}

pub fn average_reward(mdp: &MultiAgentMdp) -> Vec<f64> {
    let n = mdp.num_agents() as f64;
    let mut acc = vec![0.0; mdp.num_states()];
    for v in 0..mdp.num_agents() {
        for (a, x) in acc.iter_mut().zip(reward_vector(mdp, v)) {
            *a += x / n;
        }
    }
    acc
}

/// `ΦᵀD M Φ` with explicit loops.
pub fn phi_t_d_m_phi(fm: &FeatureMap, pi: &[f64], m: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let phi = fm.matrix();
    let (s, l) = (phi.nrows(), phi.ncols());
    let mut out = vec![vec![0.0; l]; l];
    for a in 0..l {
        for b in 0..l {
            let mut acc = 0.0;
            for i in 0..s {
                for j in 0..s {
                    acc += phi[(i, a)] * pi[i] * m[i][j] * phi[(j, b)];
                }
            }
            out[a][b] = acc;
        }
    }
    out
}

pub fn phi_t_d_x(fm: &FeatureMap, pi: &[f64], x: &[f64]) -> Vec<f64> {
    let phi = fm.matrix();
    (0..phi.ncols()).map(|a| (0..phi.nrows()).map(|i| phi[(i, a)] * pi[i] * x[i]).sum()).collect()
}

/// Second coding of the bound constants, straight from their written form.
pub struct Reference {
    pub gamma: f64,
    pub lambda: f64,
    pub r: f64,
    pub sigma2: f64,
    pub sigma_min: f64,
    pub theta_star: f64,
    pub n: f64,
    pub c: f64,
}

impl Reference {
    pub fn delta(&self, alpha: f64) -> f64 {
        self.sigma2 + alpha * (1.0 + self.gamma) / (1.0 - self.gamma * self.lambda)
    }

    pub fn psi1(&self, tau: f64) -> f64 {
        let g = (1.0 + self.gamma) * (1.0 + self.gamma) / ((1.0 - self.gamma * self.lambda) * (1.0 - self.gamma * self.lambda));
        144.0 + 4.0 * (229.0 + 42.0 * self.r) * g * tau
    }

    /// `factor` is 2 for the form with the leading 2, 1 otherwise.
    pub fn psi2(&self, tau: f64, factor: f64) -> f64 {
        let (r, t) = (self.r, self.theta_star);
        let g = (1.0 + self.gamma) * (1.0 + self.gamma) / ((1.0 - self.gamma * self.lambda) * (1.0 - self.gamma * self.lambda));
        t * t * self.psi1(tau)
            + 64.0 * r * r
            + 4.0 * t * t
            + 2.0
            + factor * (50.0 * r * r + 32.0 * (r + 1.0) * (r + 1.0) * (r + 1.0) + 100.0 * (r + t) * (r + t)) * g * tau
    }

    pub fn psi3(&self) -> f64 {
        self.psi1(1.0)
    }

    pub fn psi4(&self) -> f64 {
        let (r, t) = (self.r, self.theta_star);
        let g = (1.0 + self.gamma) * (1.0 + self.gamma) / ((1.0 - self.gamma * self.lambda) * (1.0 - self.gamma * self.lambda));
        t * t * self.psi3()
            + 2.0 * (32.0 * r * r + 2.0 * t * t + 1.0)
            + 2.0 * (50.0 * r * r + 32.0 * (r + 1.0) * (r + 1.0) * (r + 1.0) + 100.0 * (r + t) * (r + t)) * g
    }

    pub fn constant_step_bound(&self, alpha: f64, tau: f64, theta0_sq: f64, mean0_sq: f64, k: f64) -> f64 {
        let d = self.delta(alpha);
        let one = 1.0 - self.gamma * self.lambda;
        4.0 * theta0_sq / self.n * d.powf(2.0 * k)
            + (20.0 * mean0_sq + 16.0 * (self.theta_star + self.r).powi(2)) * (1.0 - self.sigma_min * alpha).powf(k - tau)
            + 4.0 * self.r * self.r * alpha * alpha / (one * one * (1.0 - d) * (1.0 - d))
            + 2.0 * self.psi2(tau, 2.0) * alpha / self.sigma_min
    }

    pub fn diminishing_step_bound(&self, alpha0: f64, alpha_ref: f64, kstar: f64, theta_sq: f64, mean_sq: f64, k: f64) -> f64 {
        let d = self.delta(alpha_ref);
        let one = 1.0 - self.gamma * self.lambda;
        let q = 6.0 * self.r * self.r / (one * one * (1.0 - d) * (1.0 - d));
        let lg = ((k + 1.0) / alpha0).ln();
        6.0 * theta_sq / self.n * d.powf(2.0 * k - 2.0 * kstar)
            + 2.0 * kstar / (k + 1.0) * mean_sq
            + q * alpha0 * alpha0 * d.powf(k)
            + q / ((k + 1.0) * (k + 1.0))
            + 2.0 * self.psi4() * self.c * alpha0 * lg * lg / (k + 1.0)
    }

    /// Brute-force `K*`: one past the last failing `k` below `horizon`.
    pub fn kstar_brute(&self, alpha0: f64, alpha_ref: f64, horizon: u64) -> u64 {
        let limit = ((1.0 - self.gamma * self.lambda) * 2f64.ln() / (1.0 + self.gamma)).min(self.sigma_min / self.psi3());
        let mut last_bad = 0u64;
        for k in 0..horizon {
            let ak = alpha0 / (k as f64 + 1.0);
            let t = (self.c * (1.0 / ak).ln()).ceil().max(0.0) as u64;
            let ok = ak <= alpha_ref && t <= k && (t as f64) * alpha0 / ((k - t) as f64 + 1.0) <= limit;
            if !ok {
                last_bad = k + 1;
            }
        }
        last_bad.max(1)
    }
}

pub fn dvec(x: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(x)
}

/// Gaussian elimination with partial pivoting on a copy of `m`.
pub fn gauss_solve(m: &[Vec<f64>], rhs: &[f64]) -> Vec<f64> {
    let n = rhs.len();
    let mut a: Vec<Vec<f64>> = m.iter().zip(rhs).map(|(row, &r)| {
        let mut row = row.clone();
        row.push(r);
        row
    }).collect();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        for i in col + 1..n {
            let f = a[i][col] / a[col][col];
            for j in col..=n {
                a[i][j] -= f * a[col][j];
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|j| a[i][j] * x[j]).sum();
        x[i] = (a[i][n] - s) / a[i][i];
    }
    x
}

/// Largest eigenvalue of a small symmetric matrix by cyclic Jacobi sweeps;
/// returns all eigenvalues in ascending order.
pub fn jacobi_eigenvalues(m: &[Vec<f64>]) -> Vec<f64> {
    let n = m.len();
    let mut a = m.to_vec();
    for _ in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j] * a[i][j]).sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    ev.sort_by(f64::total_cmp);
    ev
}
