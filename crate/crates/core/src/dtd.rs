//! Distributed TD(λ): consensus step, local TD(λ) step, eligibility traces
//! and time-weighted output averaging.
//!
//! At iteration `k` every agent `v`
//!
//! ```text
//! z_k     = γλ z_{k-1} + φ(s_k)                 (z_{-1} = 0)
//! y_k     = Σ_u W[v][u] θ_k^u
//! d_k     = r_k^v + (γφ(s_{k+1}) − φ(s_k))ᵀ θ_k^v
//! θ_{k+1} = y_k + α_k d_k z_k
//! S_{k+1} = S_k + α_{k+1}
//! θ̂_{k+1} = (S_k θ̂_k + α_{k+1} θ_{k+1}) / S_{k+1}
//! ```
//!
//! The trace is refreshed with `φ(s_k)` before it is used, so that
//! `z_k = Σ_{u≤k} (γλ)^{k−u} φ(s_u)` holds literally.

use std::collections::{BTreeSet, VecDeque};
use std::io::{self, Write};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::analysis::metrics::{error_metrics, mean_theta};
use crate::error::{Error, Result};
use crate::features::FeatureMap;
use crate::linalg::fmt17;
use crate::mdp::{self, MultiAgentMdp, Transition};
use crate::network::ConsensusMatrix;

/// Iterates whose norm exceeds this are treated as divergence.
pub const DIVERGENCE_NORM: f64 = 1e12;

/// Step-size sequence `α_k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSchedule {
    /// `α_k = α`.
    Constant(f64),
    /// `α_k = α₀ / (k + 1)`.
    Diminishing(f64),
}

impl StepSchedule {
    pub fn new_constant(alpha: f64) -> Result<Self> {
        check_positive(alpha, "alpha")?;
        Ok(Self::Constant(alpha))
    }

    pub fn new_diminishing(alpha0: f64) -> Result<Self> {
        check_positive(alpha0, "alpha0")?;
        Ok(Self::Diminishing(alpha0))
    }

    pub fn value(&self, k: u64) -> f64 {
        match *self {
            Self::Constant(a) => a,
            Self::Diminishing(a0) => a0 / (k as f64 + 1.0),
        }
    }
}

fn check_positive(x: f64, name: &str) -> Result<()> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Parameter(format!("{name} must be positive and finite, got {x}")));
    }
    Ok(())
}

/// Local state of one agent.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub theta: DVector<f64>,
    pub trace: DVector<f64>,
    pub out_avg: DVector<f64>,
    /// Sum of the step sizes folded into `out_avg`.
    pub stepsum: f64,
}

/// All agents plus the iteration counter and the current environment state.
#[derive(Debug, Clone, PartialEq)]
pub struct SwarmState {
    pub agents: Vec<AgentState>,
    pub k: u64,
    pub current_state: usize,
    scratch: Vec<f64>,
}

/// `θ_0^v` as given, `z_{-1} = 0`, `θ̂_0 = θ_0`, `S_0 = 0`, `k = 0`.
pub fn init_swarm(theta0: Vec<DVector<f64>>, num_features: usize, num_agents: usize) -> Result<SwarmState> {
    if theta0.len() != num_agents {
        return Err(Error::Dimension(format!(
            "{} initial vectors for {num_agents} agents",
            theta0.len()
        )));
    }
    if let Some(v) = theta0.iter().position(|t| t.len() != num_features) {
        return Err(Error::Dimension(format!("initial theta of agent {v} has wrong length")));
    }
    let agents = theta0
        .into_iter()
        .map(|theta| AgentState {
            out_avg: theta.clone(),
            theta,
            trace: DVector::zeros(num_features),
            stepsum: 0.0,
        })
        .collect();
    Ok(SwarmState { agents, k: 0, current_state: 0, scratch: vec![0.0; num_agents * num_features] })
}

impl SwarmState {
    pub fn num_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn thetas(&self) -> Vec<DVector<f64>> {
        self.agents.iter().map(|a| a.theta.clone()).collect()
    }

    /// `Θ`, one row per agent.
    pub fn theta_matrix(&self) -> DMatrix<f64> {
        let n = self.agents.len();
        let l = self.agents[0].theta.len();
        DMatrix::from_fn(n, l, |v, j| self.agents[v].theta[j])
    }

    pub fn mean_theta(&self) -> DVector<f64> {
        mean_theta(&self.thetas())
    }
}

/// The fixed ingredients of one distributed TD(λ) instance.
#[derive(Debug, Clone, Copy)]
pub struct DtdProblem<'a> {
    pub mdp: &'a MultiAgentMdp,
    pub features: &'a FeatureMap,
    pub consensus: &'a ConsensusMatrix,
    pub lambda: f64,
}

impl DtdProblem<'_> {
    fn check(&self) -> Result<()> {
        if self.features.num_states() != self.mdp.num_states() {
            return Err(Error::Dimension("features and MDP disagree on S".into()));
        }
        if self.consensus.num_agents() != self.mdp.num_agents() {
            return Err(Error::Dimension("consensus matrix and MDP disagree on N".into()));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Parameter(format!("lambda {} outside [0, 1]", self.lambda)));
        }
        Ok(())
    }
}

/// One iteration of the algorithm on an observed transition.
pub fn step(
    swarm: &mut SwarmState,
    problem: &DtdProblem<'_>,
    sample: &Transition,
    schedule: &StepSchedule,
) -> Result<()> {
    if sample.from != swarm.current_state {
        return Err(Error::Precondition(format!(
            "sample starts at state {} but the swarm is at {}",
            sample.from, swarm.current_state
        )));
    }
    let n = swarm.agents.len();
    if sample.rewards.len() != n {
        return Err(Error::Dimension(format!("{} rewards for {n} agents", sample.rewards.len())));
    }
    let gamma = problem.mdp.gamma();
    let gl = gamma * problem.lambda;
    let phi_cur = problem.features.phi_row(sample.from);
    let phi_next = problem.features.phi_row(sample.to);
    let l = phi_cur.len();
    let alpha = schedule.value(swarm.k);
    let alpha_next = schedule.value(swarm.k + 1);

    // Consensus uses the pre-update weights of every neighbour.
    for v in 0..n {
        let y = &mut swarm.scratch[v * l..(v + 1) * l];
        y.fill(0.0);
        for &(u, w) in problem.consensus.row_entries(v) {
            let theta_u = &swarm.agents[u].theta;
            for j in 0..l {
                y[j] += w * theta_u[j];
            }
        }
    }

    for (v, agent) in swarm.agents.iter_mut().enumerate() {
        for j in 0..l {
            agent.trace[j] = gl * agent.trace[j] + phi_cur[j];
        }
        let mut dot = 0.0;
        for j in 0..l {
            dot += (gamma * phi_next[j] - phi_cur[j]) * agent.theta[j];
        }
        let d = sample.rewards[v] + dot;
        let ad = alpha * d;
        let y = &swarm.scratch[v * l..(v + 1) * l];
        for j in 0..l {
            agent.theta[j] = y[j] + ad * agent.trace[j];
        }

        let s_next = agent.stepsum + alpha_next;
        for j in 0..l {
            agent.out_avg[j] = (agent.stepsum * agent.out_avg[j] + alpha_next * agent.theta[j]) / s_next;
        }
        agent.stepsum = s_next;

        let norm = agent.theta.norm();
        if !(norm <= DIVERGENCE_NORM) {
            return Err(Error::Divergence { iteration: swarm.k, norm });
        }
    }
    swarm.k += 1;
    swarm.current_state = sample.to;
    Ok(())
}

/// Direct evaluation of `z_k = Σ_{u=0}^{k} (γλ)^{k−u} φ(s_u)` from a state
/// history.
pub fn trace_closed_form(history: &[usize], gamma: f64, lambda: f64, fm: &FeatureMap, k: usize) -> DVector<f64> {
    let gl = gamma * lambda;
    let mut z = DVector::zeros(fm.num_features());
    for (u, &s) in history.iter().enumerate().take(k + 1) {
        z += fm.row(s) * gl.powi((k - u) as i32);
    }
    z
}

/// The noisy operators `A(X_k) = z_k (γφ(s_{k+1}) − φ(s_k))ᵀ` and
/// `b_v(X_k) = r_k^v z_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisyOperators {
    pub a: DMatrix<f64>,
    pub b: Vec<DVector<f64>>,
}

impl NoisyOperators {
    /// `b̄(X_k) = (1/N) Σ_v b_v(X_k)`.
    pub fn b_mean(&self) -> DVector<f64> {
        mean_theta(&self.b)
    }

    /// `B(X_k)`, one row per agent.
    pub fn b_matrix(&self) -> DMatrix<f64> {
        let l = self.b[0].len();
        DMatrix::from_fn(self.b.len(), l, |v, j| self.b[v][j])
    }
}

pub fn noisy_operators(sample: &Transition, trace: &DVector<f64>, fm: &FeatureMap, gamma: f64) -> NoisyOperators {
    let direction = fm.row(sample.to) * gamma - fm.row(sample.from);
    NoisyOperators {
        a: trace * direction.transpose(),
        b: sample.rewards.iter().map(|&r| trace * r).collect(),
    }
}

/// Where the environment starts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StartState {
    /// `s_0 ~ π`.
    Stationary,
    Fixed(usize),
}

/// How `θ_0^v` is chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum InitTheta {
    Zeros,
    /// Independent `N(0, scale²)` entries, drawn from the run's generator.
    Gaussian { scale: f64 },
    Explicit(Vec<DVector<f64>>),
}

/// Driver settings for [`run`].
#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub schedule: StepSchedule,
    pub num_steps: u64,
    pub record_every: u64,
    /// Additional iterations to snapshot regardless of `record_every`.
    pub extra_records: BTreeSet<u64>,
    pub seed: u64,
    pub start: StartState,
    pub init: InitTheta,
    /// When positive, snapshots also carry `θ̄_{k−lag}` for `k ≥ lag`.
    pub lag: usize,
}

impl RunOptions {
    pub fn new(schedule: StepSchedule, num_steps: u64, record_every: u64, seed: u64) -> Self {
        Self {
            schedule,
            num_steps,
            record_every,
            extra_records: BTreeSet::new(),
            seed,
            start: StartState::Stationary,
            init: InitTheta::Zeros,
            lag: 0,
        }
    }
}

/// State of the swarm at one recorded iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub k: u64,
    pub thetas: Vec<DVector<f64>>,
    pub mean: DVector<f64>,
    pub out_avg: Vec<DVector<f64>>,
    pub mse: f64,
    pub consensus_error: f64,
    /// `α_k`.
    pub stepsize: f64,
    pub lagged_mean: Option<DVector<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub snapshots: Vec<Snapshot>,
    pub lag: usize,
    /// `‖Θ_0‖_F`.
    pub theta0_norm: f64,
}

impl Trajectory {
    pub fn at(&self, k: u64) -> Option<&Snapshot> {
        self.snapshots.binary_search_by_key(&k, |s| s.k).ok().map(|i| &self.snapshots[i])
    }

    /// CSV with columns `k, agent, theta_0..theta_{L-1}, mse, consensus_error,
    /// stepsize`; one row per agent followed by a `mean` row per snapshot.
    /// Per-agent rows carry `‖θ_v − θ*‖²` and `‖θ_v − θ̄‖`.
    pub fn write_csv<W: Write>(&self, theta_star: &DVector<f64>, mut out: W) -> io::Result<()> {
        let l = theta_star.len();
        let mut header = String::from("k,agent");
        for j in 0..l {
            header.push_str(&format!(",theta_{j}"));
        }
        header.push_str(",mse,consensus_error,stepsize");
        writeln!(out, "{header}")?;
        for snap in &self.snapshots {
            let row = |out: &mut W, id: &str, theta: &DVector<f64>, mse: f64, ce: f64| -> io::Result<()> {
                write!(out, "{},{id}", snap.k)?;
                for x in theta.iter() {
                    write!(out, ",{}", fmt17(*x))?;
                }
                writeln!(out, ",{},{},{}", fmt17(mse), fmt17(ce), fmt17(snap.stepsize))
            };
            for (v, theta) in snap.thetas.iter().enumerate() {
                let mse = (theta - theta_star).norm_squared();
                let ce = (theta - &snap.mean).norm();
                row(&mut out, &v.to_string(), theta, mse, ce)?;
            }
            row(&mut out, "mean", &snap.mean, snap.mse, snap.consensus_error)?;
        }
        Ok(())
    }
}

fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
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

fn snapshot(swarm: &SwarmState, theta_star: &DVector<f64>, schedule: &StepSchedule, lagged: Option<DVector<f64>>) -> Snapshot {
    let thetas = swarm.thetas();
    let metrics = error_metrics(&thetas, theta_star);
    Snapshot {
        k: swarm.k,
        mean: mean_theta(&thetas),
        out_avg: swarm.agents.iter().map(|a| a.out_avg.clone()).collect(),
        thetas,
        mse: metrics.mse,
        consensus_error: metrics.consensus_error,
        stepsize: schedule.value(swarm.k),
        lagged_mean: lagged,
    }
}

/// Runs the algorithm for `num_steps` iterations and records snapshots at
/// `k = 0`, every multiple of `record_every`, every `extra_records` entry and
/// the final iteration. Deterministic given `opts.seed`.
pub fn run(problem: &DtdProblem<'_>, theta_star: &DVector<f64>, opts: &RunOptions) -> Result<Trajectory> {
    problem.check()?;
    let n = problem.mdp.num_agents();
    let l = problem.features.num_features();
    if theta_star.len() != l {
        return Err(Error::Dimension("theta_star has the wrong length".into()));
    }
    if opts.record_every == 0 {
        return Err(Error::Parameter("record_every must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);

    let theta0 = match &opts.init {
        InitTheta::Zeros => vec![DVector::zeros(l); n],
        InitTheta::Gaussian { scale } => (0..n)
            .map(|_| DVector::from_fn(l, |_, _| scale * Distribution::<f64>::sample(&StandardNormal, &mut rng)))
            .collect::<Vec<DVector<f64>>>(),
        InitTheta::Explicit(v) => v.clone(),
    };
    let mut swarm = init_swarm(theta0, l, n)?;
    swarm.current_state = match opts.start {
        StartState::Fixed(s) if s < problem.mdp.num_states() => s,
        StartState::Fixed(s) => return Err(Error::Parameter(format!("start state {s} out of range"))),
        StartState::Stationary => {
            let pi = mdp::stationary_distribution(problem.mdp.chain())?;
            sample_index(pi.pi().as_slice(), &mut rng)
        }
    };
    let theta0_norm = swarm.theta_matrix().norm();

    let mut history: VecDeque<DVector<f64>> = VecDeque::with_capacity(opts.lag + 1);
    let track = |swarm: &SwarmState, history: &mut VecDeque<DVector<f64>>| -> Option<DVector<f64>> {
        if opts.lag == 0 {
            return None;
        }
        history.push_back(swarm.mean_theta());
        if history.len() > opts.lag + 1 {
            history.pop_front();
        }
        (history.len() == opts.lag + 1).then(|| history[0].clone())
    };

    let mut snapshots = Vec::new();
    let lagged = track(&swarm, &mut history);
    snapshots.push(snapshot(&swarm, theta_star, &opts.schedule, lagged));
    for _ in 0..opts.num_steps {
        let sample = problem.mdp.sample_transition(swarm.current_state, &mut rng);
        step(&mut swarm, problem, &sample, &opts.schedule)?;
        let lagged = track(&swarm, &mut history);
        let k = swarm.k;
        if k % opts.record_every == 0 || k == opts.num_steps || opts.extra_records.contains(&k) {
            snapshots.push(snapshot(&swarm, theta_star, &opts.schedule, lagged));
        }
    }
    Ok(Trajectory { snapshots, lag: opts.lag, theta0_norm })
}
