//! Finite Markov chains and the multi-agent reward structure.
//!
//! The policy is fixed, so the environment is a Markov chain `P` over `S`
//! states. Agent `v` receives reward `R_v(i, j)` on the transition `i → j`;
//! the team objective is the discounted average reward.

use std::collections::VecDeque;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg;

/// Row-sum tolerance for stochastic matrices.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// First failed property found by [`validate_chain`].
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ChainDefect {
    #[error("entry ({row}, {col}) is outside [0, 1]")]
    EntryRange { row: usize, col: usize },
    #[error("row {row} sums to {sum}")]
    RowSum { row: usize, sum: f64 },
    #[error("reducible: state {state} is not mutually reachable from state 0")]
    Reducible { state: usize },
    #[error("periodic: period {period}")]
    Periodic { period: usize },
}

/// A finite Markov chain with a dense transition matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovChain {
    p: DMatrix<f64>,
    cumulative: Vec<Vec<f64>>,
}

impl MarkovChain {
    /// Wraps a square matrix. Stochasticity is checked by [`validate_chain`],
    /// not here, so defective inputs can still be diagnosed.
    pub fn new(p: DMatrix<f64>) -> Result<Self> {
        if !p.is_square() || p.nrows() == 0 {
            return Err(Error::Dimension(format!(
                "transition matrix must be square and non-empty, got {}x{}",
                p.nrows(),
                p.ncols()
            )));
        }
        if !linalg::all_finite(p.iter()) {
            return Err(Error::Parameter("transition matrix has non-finite entries".into()));
        }
        let cumulative = (0..p.nrows())
            .map(|i| {
                let mut acc = 0.0;
                p.row(i)
                    .iter()
                    .map(|x| {
                        acc += x;
                        acc
                    })
                    .collect()
            })
            .collect();
        Ok(Self { p, cumulative })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let s = rows.len();
        if rows.iter().any(|r| r.len() != s) {
            return Err(Error::Dimension("transition rows must all have length S".into()));
        }
        Self::new(DMatrix::from_fn(s, s, |i, j| rows[i][j]))
    }

    pub fn num_states(&self) -> usize {
        self.p.nrows()
    }

    pub fn transition(&self) -> &DMatrix<f64> {
        &self.p
    }

    /// Draws the successor of state `i` by inverting the row CDF.
    pub fn sample_next<R: Rng + ?Sized>(&self, i: usize, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let row = &self.cumulative[i];
        let total = *row.last().expect("non-empty row");
        let target = u * total;
        let mut last_positive = 0;
        for (j, &c) in row.iter().enumerate() {
            if self.p[(i, j)] > 0.0 {
                last_positive = j;
                if target < c {
                    return j;
                }
            }
        }
        last_positive
    }
}

/// Checks stochasticity, irreducibility and aperiodicity, in that order.
///
/// Irreducibility is strong connectivity of the positive-entry digraph.
/// The period is the gcd of `level(u) + 1 - level(v)` over all positive
/// edges `u → v`, with levels taken from a BFS rooted at state 0.
pub fn validate_chain(chain: &MarkovChain) -> std::result::Result<(), ChainDefect> {
    let p = chain.transition();
    let s = p.nrows();
    for i in 0..s {
        for j in 0..s {
            let x = p[(i, j)];
            if !(0.0..=1.0).contains(&x) {
                return Err(ChainDefect::EntryRange { row: i, col: j });
            }
        }
    }
    for i in 0..s {
        let sum: f64 = p.row(i).iter().sum();
        if (sum - 1.0).abs() > ROW_SUM_TOL {
            return Err(ChainDefect::RowSum { row: i, sum });
        }
    }

    let forward = bfs_levels(s, |u, v| p[(u, v)] > 0.0);
    if let Some(state) = forward.iter().position(Option::is_none) {
        return Err(ChainDefect::Reducible { state });
    }
    let backward = bfs_levels(s, |u, v| p[(v, u)] > 0.0);
    if let Some(state) = backward.iter().position(Option::is_none) {
        return Err(ChainDefect::Reducible { state });
    }

    let levels: Vec<i64> = forward.into_iter().map(|l| l.unwrap() as i64).collect();
    let mut period: u64 = 0;
    for u in 0..s {
        for v in 0..s {
            if p[(u, v)] > 0.0 {
                period = gcd(period, (levels[u] + 1 - levels[v]).unsigned_abs());
            }
        }
    }
    if period != 1 {
        return Err(ChainDefect::Periodic { period: period as usize });
    }
    Ok(())
}

fn bfs_levels(s: usize, edge: impl Fn(usize, usize) -> bool) -> Vec<Option<usize>> {
    let mut level = vec![None; s];
    level[0] = Some(0);
    let mut queue = VecDeque::from([0usize]);
    while let Some(u) = queue.pop_front() {
        let lu = level[u].unwrap();
        for v in 0..s {
            if level[v].is_none() && edge(u, v) {
                level[v] = Some(lu + 1);
                queue.push_back(v);
            }
        }
    }
    level
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Stationary distribution `π` and its diagonal matrix `D`.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryDist {
    pi: DVector<f64>,
}

impl StationaryDist {
    /// Wraps a probability vector, checking positivity and normalisation.
    pub fn new(pi: DVector<f64>) -> Result<Self> {
        if pi.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
            return Err(Error::Parameter("stationary entries must be strictly positive".into()));
        }
        let sum: f64 = pi.iter().sum();
        if (sum - 1.0).abs() > 1e-10 {
            return Err(Error::Parameter(format!("stationary vector sums to {sum}")));
        }
        Ok(Self { pi })
    }

    pub fn pi(&self) -> &DVector<f64> {
        &self.pi
    }

    pub fn len(&self) -> usize {
        self.pi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pi.is_empty()
    }

    pub fn diag(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.pi)
    }

    /// `‖πᵀP − πᵀ‖∞`.
    pub fn residual(&self, chain: &MarkovChain) -> f64 {
        stationary_residual(&self.pi, chain.transition())
    }
}

fn stationary_residual(pi: &DVector<f64>, p: &DMatrix<f64>) -> f64 {
    (p.transpose() * pi - pi).amax()
}

/// Solves `(Pᵀ − I)π = 0, Σπ = 1` directly, falling back to power iteration
/// if the direct residual exceeds `1e-10`.
pub fn stationary_distribution(chain: &MarkovChain) -> Result<StationaryDist> {
    let p = chain.transition();
    let s = p.nrows();
    let mut m = p.transpose() - DMatrix::identity(s, s);
    for j in 0..s {
        m[(s - 1, j)] = 1.0;
    }
    let mut rhs = DVector::zeros(s);
    rhs[s - 1] = 1.0;

    let direct = linalg::solve(&m, &rhs).ok().map(|mut pi| {
        let sum: f64 = pi.iter().sum();
        pi /= sum;
        pi
    });
    if let Some(pi) = direct {
        if stationary_residual(&pi, p) <= 1e-10 && pi.iter().all(|&x| x > 0.0) {
            return StationaryDist::new(pi);
        }
    }

    const MAX_ITERS: usize = 1_000_000;
    let pt = p.transpose();
    let mut pi = DVector::from_element(s, 1.0 / s as f64);
    let mut residual = f64::INFINITY;
    for _ in 0..MAX_ITERS {
        let next = &pt * &pi;
        residual = (&next - &pi).amax();
        pi = next;
        if residual <= 1e-13 {
            break;
        }
    }
    let sum: f64 = pi.iter().sum();
    pi /= sum;
    let residual = stationary_residual(&pi, p).max(if residual.is_finite() { 0.0 } else { residual });
    if residual > 1e-10 || pi.iter().any(|&x| x <= 0.0) {
        return Err(Error::StationaryNonConvergence { residual });
    }
    StationaryDist::new(pi)
}

/// A Markov chain with `N` agents, each holding a reward table `R_v(i, j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiAgentMdp {
    chain: MarkovChain,
    rewards: Vec<DMatrix<f64>>,
    gamma: f64,
    reward_bound: f64,
}

/// One environment step as seen by the agents.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub from: usize,
    pub to: usize,
    /// Reward of each agent on this transition.
    pub rewards: Vec<f64>,
}

impl MultiAgentMdp {
    pub fn new(
        chain: MarkovChain,
        rewards: Vec<DMatrix<f64>>,
        gamma: f64,
        reward_bound: f64,
    ) -> Result<Self> {
        let s = chain.num_states();
        if rewards.is_empty() {
            return Err(Error::Parameter("at least one agent is required".into()));
        }
        if let Some(v) = rewards.iter().position(|r| r.nrows() != s || r.ncols() != s) {
            return Err(Error::Dimension(format!("reward table of agent {v} is not {s}x{s}")));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::Parameter(format!("gamma must lie in [0, 1), got {gamma}")));
        }
        if !(reward_bound >= 0.0) || !reward_bound.is_finite() {
            return Err(Error::Parameter(format!("invalid reward bound {reward_bound}")));
        }
        for (v, r) in rewards.iter().enumerate() {
            if let Some((idx, x)) = r.iter().enumerate().find(|(_, x)| !(x.abs() <= reward_bound)) {
                return Err(Error::Parameter(format!(
                    "reward of agent {v} at ({}, {}) is {x}, exceeding bound {reward_bound}",
                    idx % s,
                    idx / s
                )));
            }
        }
        Ok(Self { chain, rewards, gamma, reward_bound })
    }

    pub fn chain(&self) -> &MarkovChain {
        &self.chain
    }

    pub fn num_states(&self) -> usize {
        self.chain.num_states()
    }

    pub fn num_agents(&self) -> usize {
        self.rewards.len()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn reward_bound(&self) -> f64 {
        self.reward_bound
    }

    pub fn rewards(&self) -> &[DMatrix<f64>] {
        &self.rewards
    }

    /// `R_v(i, j)`.
    pub fn reward(&self, agent: usize, i: usize, j: usize) -> f64 {
        self.rewards[agent][(i, j)]
    }

    /// Same MDP with every reward multiplied by `factor`; the bound scales too.
    pub fn scale_rewards(&self, factor: f64) -> Result<Self> {
        let rewards = self.rewards.iter().map(|r| r * factor).collect();
        Self::new(self.chain.clone(), rewards, self.gamma, self.reward_bound * factor.abs())
    }

    /// Same MDP with a different discount factor.
    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        Self::new(self.chain.clone(), self.rewards.clone(), gamma, self.reward_bound)
    }

    /// Draws `s_{k+1}` from row `i` and reports every agent's reward.
    pub fn sample_transition<R: Rng + ?Sized>(&self, i: usize, rng: &mut R) -> Transition {
        let j = self.chain.sample_next(i, rng);
        let rewards = self.rewards.iter().map(|r| r[(i, j)]).collect();
        Transition { from: i, to: j, rewards }
    }
}

/// `r_v(i) = Σ_j p_ij R_v(i, j)`.
pub fn expected_reward_vector(mdp: &MultiAgentMdp, agent: usize) -> Result<DVector<f64>> {
    if agent >= mdp.num_agents() {
        return Err(Error::Parameter(format!(
            "agent {agent} out of range (N = {})",
            mdp.num_agents()
        )));
    }
    let p = mdp.chain.transition();
    let r = &mdp.rewards[agent];
    Ok(DVector::from_fn(mdp.num_states(), |i, _| p.row(i).dot(&r.row(i))))
}

/// Network-average expected reward `r̄ = (1/N) Σ_v r_v`.
pub fn average_reward_vector(mdp: &MultiAgentMdp) -> DVector<f64> {
    let n = mdp.num_agents();
    let mut acc = DVector::zeros(mdp.num_states());
    for v in 0..n {
        acc += expected_reward_vector(mdp, v).expect("agent in range");
    }
    acc / n as f64
}

/// Exact value `J = (I − γP)⁻¹ r̄`.
pub fn true_value(mdp: &MultiAgentMdp) -> Result<DVector<f64>> {
    let s = mdp.num_states();
    let m = DMatrix::identity(s, s) - mdp.chain.transition() * mdp.gamma;
    linalg::solve(&m, &average_reward_vector(mdp))
        .map_err(|e| Error::Numerical(format!("Bellman solve failed: {e}")))
}

/// Parameters of the Garnet-style instance generator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GarnetParams {
    pub num_states: usize,
    pub num_agents: usize,
    pub branching: usize,
    pub reward_bound: f64,
    pub gamma: f64,
    pub seed: u64,
}

/// Self-loop mass mixed into each generated row.
pub const SELF_LOOP_MASS: f64 = 0.01;

const GENERATION_ATTEMPTS: usize = 100;

/// Random instance: each row has `branching` successors with normalised
/// uniform weights, then `ε = 0.01` is added to the diagonal and the row is
/// renormalised. Rewards are uniform on `[−R, R]`. Irreducibility failures
/// retry with the next seed.
pub fn random_mdp(params: GarnetParams) -> Result<MultiAgentMdp> {
    let GarnetParams { num_states: s, num_agents: n, branching, reward_bound, gamma, seed } = params;
    if s == 0 || n == 0 {
        return Err(Error::Parameter("num_states and num_agents must be positive".into()));
    }
    if branching == 0 || branching > s {
        return Err(Error::Parameter(format!("branching {branching} must lie in [1, {s}]")));
    }
    for attempt in 0..GENERATION_ATTEMPTS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(attempt as u64));
        let mut p = DMatrix::zeros(s, s);
        for i in 0..s {
            let cols = index::sample(&mut rng, s, branching);
            let weights: Vec<f64> = (0..branching).map(|_| rng.random::<f64>() + f64::EPSILON).collect();
            let total: f64 = weights.iter().sum();
            for (c, w) in cols.iter().zip(&weights) {
                p[(i, c)] = w / total;
            }
            p[(i, i)] += SELF_LOOP_MASS;
            let row_sum: f64 = p.row(i).iter().sum();
            for j in 0..s {
                p[(i, j)] /= row_sum;
            }
            // Absorb the rounding error into the largest entry so the row sums to 1.
            let err = 1.0 - p.row(i).iter().sum::<f64>();
            let jmax = p.row(i).transpose().iamax();
            p[(i, jmax)] += err;
        }
        let rewards: Vec<DMatrix<f64>> = (0..n)
            .map(|_| {
                DMatrix::from_fn(s, s, |_, _| {
                    if reward_bound > 0.0 {
                        rng.random_range(-reward_bound..=reward_bound)
                    } else {
                        0.0
                    }
                })
            })
            .collect();
        let chain = MarkovChain::new(p)?;
        if validate_chain(&chain).is_ok() {
            return MultiAgentMdp::new(chain, rewards, gamma, reward_bound);
        }
    }
    Err(Error::GenerationCap {
        attempts: GENERATION_ATTEMPTS,
        what: "irreducible aperiodic chain".into(),
    })
}

impl fmt::Display for MultiAgentMdp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "MDP(S={}, N={}, gamma={}, R={})",
            self.num_states(),
            self.num_agents(),
            self.gamma,
            self.reward_bound
        )
    }
}
