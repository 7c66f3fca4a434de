//! Finite networked multi-agent MDPs.
//!
//! All agents share a global state; each agent picks a local action and the
//! joint action is the tuple of local actions, stored as a single mixed-radix
//! index (agent 0 is the least significant digit). The transition tensor is
//! dense over `(state, joint action, next state)` and every agent has its own
//! reward table over `(state, joint action)`.
//!
//! Besides sampling, this module carries the exact oracles used to check the
//! learner: the chain induced by a joint policy, its stationary distribution
//! and the long-run globally averaged reward.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default upper bound on `∏ |A^i|`.
pub const DEFAULT_MAX_JOINT_ACTIONS: usize = 4096;

const ROW_SUM_TOL: f64 = 1e-12;
const CHAIN_ROW_TOL: f64 = 1e-10;
const POWER_ITER_TOL: f64 = 1e-12;
const POWER_ITER_CAP: usize = 100_000;
const STATIONARY_RESIDUAL_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MdpError {
    #[error("{what} index {index} out of range (size {size})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        size: usize,
    },
    #[error("joint action space of size {size} exceeds the cap of {cap}")]
    JointActionCap { size: usize, cap: usize },
    #[error("invalid mdp: {0}")]
    Invalid(String),
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("markov chain is not ergodic: {0}")]
    NotErgodic(String),
}

fn check_index(what: &'static str, index: usize, size: usize) -> Result<(), MdpError> {
    if index < size {
        Ok(())
    } else {
        Err(MdpError::IndexOutOfRange { what, index, size })
    }
}

/// Draws an index from a discrete distribution by inverting its CDF with a
/// single uniform draw from `rng`.
///
/// This is the only way the crate turns probabilities into samples; runs are
/// reproducible because exactly one `f64` is consumed per draw.
pub fn sample_categorical<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (idx, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            last_positive = idx;
        }
        acc += w;
        if u < acc {
            return idx;
        }
    }
    // Rounding left the cumulative sum just below u.
    last_positive
}

/// Mixed-radix encoding of joint actions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JointActionSpace {
    arities: Vec<usize>,
    strides: Vec<usize>,
    size: usize,
}

impl JointActionSpace {
    pub fn new(arities: Vec<usize>, cap: usize) -> Result<Self, MdpError> {
        if arities.is_empty() {
            return Err(MdpError::Invalid("at least one agent is required".into()));
        }
        if let Some(i) = arities.iter().position(|&k| k == 0) {
            return Err(MdpError::Invalid(format!("agent {i} has no actions")));
        }
        let mut strides = Vec::with_capacity(arities.len());
        let mut size: usize = 1;
        for &k in &arities {
            strides.push(size);
            size = size.checked_mul(k).ok_or(MdpError::JointActionCap {
                size: usize::MAX,
                cap,
            })?;
        }
        if size > cap {
            return Err(MdpError::JointActionCap { size, cap });
        }
        Ok(Self {
            arities,
            strides,
            size,
        })
    }

    pub fn n_agents(&self) -> usize {
        self.arities.len()
    }

    pub fn arities(&self) -> &[usize] {
        &self.arities
    }

    pub fn arity(&self, agent: usize) -> usize {
        self.arities[agent]
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn encode(&self, locals: &[usize]) -> Result<usize, MdpError> {
        if locals.len() != self.arities.len() {
            return Err(MdpError::DimensionMismatch(format!(
                "expected {} local actions, got {}",
                self.arities.len(),
                locals.len()
            )));
        }
        let mut a = 0;
        for (i, &b) in locals.iter().enumerate() {
            check_index("local action", b, self.arities[i])?;
            a += b * self.strides[i];
        }
        Ok(a)
    }

    pub fn decode(&self, joint: usize) -> Vec<usize> {
        (0..self.arities.len())
            .map(|i| self.local(joint, i))
            .collect()
    }

    /// Agent `agent`'s component of `joint`.
    pub fn local(&self, joint: usize, agent: usize) -> usize {
        (joint / self.strides[agent]) % self.arities[agent]
    }

    /// `joint` with agent `agent`'s component replaced by `action`; the other
    /// agents' actions are held fixed.
    pub fn with_local(&self, joint: usize, agent: usize, action: usize) -> usize {
        let stride = self.strides[agent];
        joint - self.local(joint, agent) * stride + action * stride
    }
}

/// On-disk layout of an [`Mdp`]. Arrays are flat and row-major:
/// `transition[(s * n_joint + a) * n_states + s']` and
/// `rewards[(i * n_states + s) * n_joint + a]`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MdpFile {
    pub n_agents: usize,
    pub n_states: usize,
    pub action_counts: Vec<usize>,
    pub transition: Vec<f64>,
    pub rewards: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mdp {
    n_states: usize,
    joint: JointActionSpace,
    transition: Vec<f64>,
    rewards: Vec<f64>,
}

impl Mdp {
    pub fn new(
        n_states: usize,
        action_counts: Vec<usize>,
        transition: Vec<f64>,
        rewards: Vec<f64>,
    ) -> Result<Self, MdpError> {
        Self::with_cap(
            n_states,
            action_counts,
            transition,
            rewards,
            DEFAULT_MAX_JOINT_ACTIONS,
        )
    }

    pub fn with_cap(
        n_states: usize,
        action_counts: Vec<usize>,
        transition: Vec<f64>,
        rewards: Vec<f64>,
        max_joint_actions: usize,
    ) -> Result<Self, MdpError> {
        if n_states == 0 {
            return Err(MdpError::Invalid("no states".into()));
        }
        let joint = JointActionSpace::new(action_counts, max_joint_actions)?;
        let n_joint = joint.size();
        let n_agents = joint.n_agents();
        if transition.len() != n_states * n_joint * n_states {
            return Err(MdpError::Invalid(format!(
                "transition has {} entries, expected {}",
                transition.len(),
                n_states * n_joint * n_states
            )));
        }
        if rewards.len() != n_agents * n_states * n_joint {
            return Err(MdpError::Invalid(format!(
                "rewards has {} entries, expected {}",
                rewards.len(),
                n_agents * n_states * n_joint
            )));
        }
        for (row_idx, row) in transition.chunks(n_states).enumerate() {
            let (s, a) = (row_idx / n_joint, row_idx % n_joint);
            if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(MdpError::Invalid(format!(
                    "P(.|s={s}, a={a}) has a negative or non-finite entry"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(MdpError::Invalid(format!(
                    "P(.|s={s}, a={a}) sums to {sum}"
                )));
            }
        }
        if rewards.iter().any(|r| !r.is_finite()) {
            return Err(MdpError::Invalid("non-finite reward".into()));
        }
        Ok(Self {
            n_states,
            joint,
            transition,
            rewards,
        })
    }

    pub fn n_agents(&self) -> usize {
        self.joint.n_agents()
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn action_counts(&self) -> &[usize] {
        self.joint.arities()
    }

    pub fn joint_actions(&self) -> &JointActionSpace {
        &self.joint
    }

    pub fn n_joint_actions(&self) -> usize {
        self.joint.size()
    }

    /// `P(· | s, a)`; indices are assumed valid.
    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.joint.size() + a) * self.n_states;
        &self.transition[start..start + self.n_states]
    }

    pub fn reward(&self, agent: usize, s: usize, a: usize) -> f64 {
        self.rewards[(agent * self.n_states + s) * self.joint.size() + a]
    }

    /// Globally averaged reward `(1/N) Σ_i R^i(s, a)`.
    pub fn mean_reward(&self, s: usize, a: usize) -> f64 {
        let n = self.n_agents();
        (0..n).map(|i| self.reward(i, s, a)).sum::<f64>() / n as f64
    }

    pub fn check_state(&self, s: usize) -> Result<(), MdpError> {
        check_index("state", s, self.n_states)
    }

    pub fn check_joint_action(&self, a: usize) -> Result<(), MdpError> {
        check_index("joint action", a, self.joint.size())
    }

    pub fn sample_transition<R: Rng + ?Sized>(
        &self,
        s: usize,
        a: usize,
        rng: &mut R,
    ) -> Result<usize, MdpError> {
        self.check_state(s)?;
        self.check_joint_action(a)?;
        Ok(sample_categorical(self.transition_row(s, a), rng))
    }

    pub fn to_file(&self) -> MdpFile {
        MdpFile {
            n_agents: self.n_agents(),
            n_states: self.n_states,
            action_counts: self.joint.arities().to_vec(),
            transition: self.transition.clone(),
            rewards: self.rewards.clone(),
        }
    }

    pub fn from_file(file: MdpFile, max_joint_actions: usize) -> Result<Self, MdpError> {
        if file.n_agents != file.action_counts.len() {
            return Err(MdpError::Invalid(format!(
                "n_agents = {} but {} action counts given",
                file.n_agents,
                file.action_counts.len()
            )));
        }
        Self::with_cap(
            file.n_states,
            file.action_counts,
            file.transition,
            file.rewards,
            max_joint_actions,
        )
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("mdp serializes")
    }

    pub fn from_json(text: &str, max_joint_actions: usize) -> Result<Self, MdpError> {
        let file: MdpFile =
            serde_json::from_str(text).map_err(|e| MdpError::Invalid(e.to_string()))?;
        Self::from_file(file, max_joint_actions)
    }
}

/// Parameters of the synthetic environment generator.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomMdpSpec {
    pub n_agents: usize,
    pub n_states: usize,
    pub actions_per_agent: usize,
    pub reward_range: (f64, f64),
    pub max_joint_actions: usize,
}

/// Builds a random MDP whose transition rows are strictly positive (so every
/// induced chain is irreducible and aperiodic) and whose rewards are uniform
/// in `reward_range`. Deterministic in `seed`.
pub fn generate_random_mdp(spec: &RandomMdpSpec, seed: u64) -> Result<Mdp, MdpError> {
    if spec.n_agents < 1 {
        return Err(MdpError::Invalid("n_agents must be >= 1".into()));
    }
    if spec.n_states < 2 {
        return Err(MdpError::Invalid("n_states must be >= 2".into()));
    }
    if spec.actions_per_agent < 2 {
        return Err(MdpError::Invalid("actions_per_agent must be >= 2".into()));
    }
    let (lo, hi) = spec.reward_range;
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(MdpError::Invalid(format!(
            "bad reward range [{lo}, {hi}]"
        )));
    }
    let joint = JointActionSpace::new(
        vec![spec.actions_per_agent; spec.n_agents],
        spec.max_joint_actions,
    )?;
    let n_joint = joint.size();
    let n_states = spec.n_states;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut transition = Vec::with_capacity(n_states * n_joint * n_states);
    let mut row = vec![0.0; n_states];
    for _ in 0..n_states * n_joint {
        // Dirichlet(1) row with a small floor keeping every entry positive.
        for w in row.iter_mut() {
            let u: f64 = rng.random();
            *w = 1e-3 - (1.0 - u).ln();
        }
        let total: f64 = row.iter().sum();
        transition.extend(row.iter().map(|w| w / total));
    }
    let rewards = (0..spec.n_agents * n_states * n_joint)
        .map(|_| lo + (hi - lo) * rng.random::<f64>())
        .collect();
    Mdp::with_cap(
        n_states,
        joint.arities().to_vec(),
        transition,
        rewards,
        spec.max_joint_actions,
    )
}

/// Per-agent local policies `π^i(s, a^i)`, stored as probability tables.
/// The joint policy is their product.
#[derive(Debug, Clone, PartialEq)]
pub struct JointPolicy {
    // [agent][state][local action]
    tables: Vec<Vec<Vec<f64>>>,
}

impl JointPolicy {
    pub fn new(tables: Vec<Vec<Vec<f64>>>) -> Result<Self, MdpError> {
        if tables.is_empty() {
            return Err(MdpError::InvalidPolicy("no agents".into()));
        }
        let n_states = tables[0].len();
        for (i, agent) in tables.iter().enumerate() {
            if agent.len() != n_states {
                return Err(MdpError::InvalidPolicy(format!(
                    "agent {i} covers {} states, expected {n_states}",
                    agent.len()
                )));
            }
            for (s, probs) in agent.iter().enumerate() {
                if probs.is_empty() || probs.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
                    return Err(MdpError::InvalidPolicy(format!(
                        "agent {i}, state {s}: probabilities must be finite and > 0"
                    )));
                }
                let sum: f64 = probs.iter().sum();
                if (sum - 1.0).abs() > ROW_SUM_TOL {
                    return Err(MdpError::InvalidPolicy(format!(
                        "agent {i}, state {s}: probabilities sum to {sum}"
                    )));
                }
            }
        }
        Ok(Self { tables })
    }

    pub fn uniform(mdp: &Mdp) -> Self {
        let tables = mdp
            .action_counts()
            .iter()
            .map(|&k| vec![vec![1.0 / k as f64; k]; mdp.n_states()])
            .collect();
        Self { tables }
    }

    pub fn n_agents(&self) -> usize {
        self.tables.len()
    }

    pub fn n_states(&self) -> usize {
        self.tables[0].len()
    }

    pub fn local_probs(&self, agent: usize, s: usize) -> &[f64] {
        &self.tables[agent][s]
    }

    /// `π(s, a) = ∏_i π^i(s, a^i)`.
    pub fn joint_prob(&self, joint: &JointActionSpace, s: usize, a: usize) -> f64 {
        self.tables
            .iter()
            .enumerate()
            .map(|(i, t)| t[s][joint.local(a, i)])
            .product()
    }

    pub fn check_against(&self, mdp: &Mdp) -> Result<(), MdpError> {
        if self.n_agents() != mdp.n_agents() || self.n_states() != mdp.n_states() {
            return Err(MdpError::DimensionMismatch(format!(
                "policy is {} agents x {} states, mdp is {} x {}",
                self.n_agents(),
                self.n_states(),
                mdp.n_agents(),
                mdp.n_states()
            )));
        }
        for (i, t) in self.tables.iter().enumerate() {
            if t[0].len() != mdp.action_counts()[i] {
                return Err(MdpError::DimensionMismatch(format!(
                    "agent {i} policy has {} actions, mdp has {}",
                    t[0].len(),
                    mdp.action_counts()[i]
                )));
            }
        }
        Ok(())
    }

    /// Dense `π(s, a)` table, laid out as `[s * n_joint + a]`.
    pub fn joint_table(&self, mdp: &Mdp) -> Result<Vec<f64>, MdpError> {
        self.check_against(mdp)?;
        let joint = mdp.joint_actions();
        let mut table = Vec::with_capacity(mdp.n_states() * joint.size());
        for s in 0..mdp.n_states() {
            for a in 0..joint.size() {
                table.push(self.joint_prob(joint, s, a));
            }
        }
        Ok(table)
    }
}

/// Square row-stochastic matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticMatrix {
    n: usize,
    data: Vec<f64>,
}

impl StochasticMatrix {
    pub fn new(n: usize, data: Vec<f64>) -> Result<Self, MdpError> {
        if n == 0 || data.len() != n * n {
            return Err(MdpError::DimensionMismatch(format!(
                "{} entries for a {n}x{n} matrix",
                data.len()
            )));
        }
        for (i, row) in data.chunks(n).enumerate() {
            if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(MdpError::Invalid(format!("row {i} has a bad entry")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > CHAIN_ROW_TOL {
                return Err(MdpError::Invalid(format!("row {i} sums to {sum}")));
            }
        }
        Ok(Self { n, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, MdpError> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(MdpError::DimensionMismatch("matrix is not square".into()));
        }
        Self::new(n, rows.concat())
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    /// `d ↦ d P` for a row vector `d`.
    pub fn left_multiply(&self, d: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (i, &di) in d.iter().enumerate() {
            if di == 0.0 {
                continue;
            }
            for (o, p) in out.iter_mut().zip(self.row(i)) {
                *o += di * p;
            }
        }
        out
    }
}

/// A probability vector over states.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainDistribution(Vec<f64>);

impl ChainDistribution {
    pub fn probabilities(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// `P^θ(s'|s) = Σ_a π_θ(s, a) P(s'|s, a)`.
pub fn induced_chain(mdp: &Mdp, policy: &JointPolicy) -> Result<StochasticMatrix, MdpError> {
    let table = policy.joint_table(mdp)?;
    induced_chain_from_joint(mdp, &table)
}

/// Same as [`induced_chain`] for an arbitrary (not necessarily product)
/// distribution over joint actions, given as `[s * n_joint + a]`.
pub fn induced_chain_from_joint(
    mdp: &Mdp,
    joint_table: &[f64],
) -> Result<StochasticMatrix, MdpError> {
    let (ns, na) = (mdp.n_states(), mdp.n_joint_actions());
    if joint_table.len() != ns * na {
        return Err(MdpError::DimensionMismatch(format!(
            "joint table has {} entries, expected {}",
            joint_table.len(),
            ns * na
        )));
    }
    let mut data = vec![0.0; ns * ns];
    for s in 0..ns {
        let out = &mut data[s * ns..(s + 1) * ns];
        for a in 0..na {
            let w = joint_table[s * na + a];
            if w == 0.0 {
                continue;
            }
            for (o, p) in out.iter_mut().zip(mdp.transition_row(s, a)) {
                *o += w * p;
            }
        }
    }
    StochasticMatrix::new(ns, data)
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn reachable(chain: &StochasticMatrix, reverse: bool) -> Vec<bool> {
    let n = chain.size();
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(u) = stack.pop() {
        for v in 0..n {
            let p = if reverse { chain.get(v, u) } else { chain.get(u, v) };
            if p > 0.0 && !seen[v] {
                seen[v] = true;
                stack.push(v);
            }
        }
    }
    seen
}

/// Checks irreducibility (strong connectivity of the support graph) and
/// aperiodicity (gcd of cycle lengths through BFS levels).
fn check_ergodic(chain: &StochasticMatrix) -> Result<(), MdpError> {
    let n = chain.size();
    if reachable(chain, false).iter().any(|r| !r) || reachable(chain, true).iter().any(|r| !r) {
        return Err(MdpError::NotErgodic("chain is reducible".into()));
    }
    let mut level = vec![usize::MAX; n];
    level[0] = 0;
    let mut queue = std::collections::VecDeque::from([0]);
    while let Some(u) = queue.pop_front() {
        for v in 0..n {
            if chain.get(u, v) > 0.0 && level[v] == usize::MAX {
                level[v] = level[u] + 1;
                queue.push_back(v);
            }
        }
    }
    let mut period = 0;
    for u in 0..n {
        for v in 0..n {
            if chain.get(u, v) > 0.0 {
                let diff = (level[u] + 1).abs_diff(level[v]);
                period = gcd(period, diff);
            }
        }
    }
    if period != 1 {
        return Err(MdpError::NotErgodic(format!("chain has period {period}")));
    }
    Ok(())
}

fn residual(chain: &StochasticMatrix, d: &[f64]) -> f64 {
    chain
        .left_multiply(d)
        .iter()
        .zip(d)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

/// Stationary distribution `d` with `d P = d`.
///
/// Power iteration from the uniform vector; if it stalls, a dense solve of
/// `(Pᵀ − I) d = 0, Σ d = 1` is used instead.
pub fn stationary_distribution(chain: &StochasticMatrix) -> Result<ChainDistribution, MdpError> {
    check_ergodic(chain)?;
    let n = chain.size();
    let mut d = vec![1.0 / n as f64; n];
    for _ in 0..POWER_ITER_CAP {
        let next = chain.left_multiply(&d);
        let change: f64 = next.iter().zip(&d).map(|(a, b)| (a - b).abs()).sum();
        d = next;
        if change < POWER_ITER_TOL {
            break;
        }
    }
    let total: f64 = d.iter().sum();
    d.iter_mut().for_each(|x| *x /= total);
    if residual(chain, &d) < STATIONARY_RESIDUAL_TOL {
        return Ok(ChainDistribution(d));
    }

    let mut a = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] = chain.get(j, i) - if i == j { 1.0 } else { 0.0 };
        }
    }
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(n);
    b[n - 1] = 1.0;
    let solved = a
        .lu()
        .solve(&b)
        .ok_or_else(|| MdpError::NotErgodic("singular stationary system".into()))?;
    let d: Vec<f64> = solved.iter().map(|x| x.max(0.0)).collect();
    let total: f64 = d.iter().sum();
    let d: Vec<f64> = d.iter().map(|x| x / total).collect();
    let res = residual(chain, &d);
    if res < STATIONARY_RESIDUAL_TOL {
        Ok(ChainDistribution(d))
    } else {
        Err(MdpError::NotErgodic(format!(
            "stationary solve did not converge (residual {res:e})"
        )))
    }
}

/// Long-run average of `reward(s, a)` under `policy`:
/// `Σ_{s,a} d_θ(s) π_θ(s, a) reward(s, a)`.
pub fn long_run_average<F>(mdp: &Mdp, policy: &JointPolicy, reward: F) -> Result<f64, MdpError>
where
    F: Fn(usize, usize) -> f64,
{
    let table = policy.joint_table(mdp)?;
    let chain = induced_chain_from_joint(mdp, &table)?;
    let d = stationary_distribution(&chain)?;
    let na = mdp.n_joint_actions();
    let mut total = 0.0;
    for (s, ds) in d.probabilities().iter().enumerate() {
        let mut inner = 0.0;
        for a in 0..na {
            inner += table[s * na + a] * reward(s, a);
        }
        total += ds * inner;
    }
    Ok(total)
}

/// Globally averaged long-run return `J(θ)`.
pub fn global_return(mdp: &Mdp, policy: &JointPolicy) -> Result<f64, MdpError> {
    long_run_average(mdp, policy, |s, a| mdp.mean_reward(s, a))
}

/// Long-run average of one agent's own reward.
pub fn agent_return(mdp: &Mdp, policy: &JointPolicy, agent: usize) -> Result<f64, MdpError> {
    check_index("agent", agent, mdp.n_agents())?;
    long_run_average(mdp, policy, |s, a| mdp.reward(agent, s, a))
}
