//! Synchronous-round simulation of the networked actor-critic.
//!
//! Each call to [`Simulation::step`] executes one round:
//!
//! 1. sample `s_{t+1}`, observe `r^i_{t+1} = R^i(s_t, a_t)`, update `μ^i`;
//! 2. every agent samples `a^i_{t+1} ~ π^i(s_{t+1}, ·)`;
//! 3. every agent computes `δ`, takes its critic step to `ω̃`, computes its
//!    advantage and score and takes its actor step (all from `ω_t`, `θ_t`);
//! 4. every agent broadcasts (`ω̃` if regular, its strategy's payload if not);
//! 5. every regular agent trims and mixes; adversaries keep their own `ω̃`.
//!
//! Random streams: the environment uses ChaCha8 stream 0 of the seed, agent
//! `i` samples actions from stream `i + 1`, and adversary placement uses
//! stream `u64::MAX`. Each categorical draw consumes exactly one `f64`.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{
    actor_step, advantage, critic_local_step, mu_update, q_value, td_error, AgentState, FeatureMap,
    Role,
};
use crate::config::{ConfigError, ExperimentConfig};
use crate::consensus::{
    adversary_message, consensus_combine, hull_violation, trim, AdversaryStrategy,
    ConsensusError, CoordinateWeights, ParameterMessage,
};
use crate::graph::{GraphError, GraphSchedule};
use crate::mdp::{global_return, JointPolicy, Mdp, MdpError};

/// Relative slack of the per-round convex-hull assertion.
pub const HULL_TOL: f64 = 1e-9;

pub const LOG_FORMAT: &str = "netmarl-trajectory/1";

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("mdp")]
    Mdp(#[from] MdpError),
    #[error("graph")]
    Graph(#[from] GraphError),
    #[error("round {round}, agent {agent}")]
    Consensus {
        round: u64,
        agent: usize,
        #[source]
        source: ConsensusError,
    },
    #[error("round {round}, agent {agent}: non-finite {what}")]
    NonFinite {
        round: u64,
        agent: usize,
        what: &'static str,
    },
    #[error("round {round}, agent {agent}: mixed value left the convex hull at coordinate {coordinate}")]
    SafetyViolation {
        round: u64,
        agent: usize,
        coordinate: usize,
    },
    #[error("round {round}, agent {agent}: policy assigns zero probability in state {state}")]
    ZeroProbability {
        round: u64,
        agent: usize,
        state: usize,
    },
    #[error("setup: {0}")]
    Setup(String),
}

/// Step sizes `β_t` as a function of the round counter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StepSizeSchedule {
    /// `β_t = value`. Zero freezes the corresponding parameter.
    Constant { value: f64 },
    /// `β_t = scale / (t + 1)^exponent`.
    Polynomial { scale: f64, exponent: f64 },
}

impl StepSizeSchedule {
    pub fn default_critic() -> Self {
        StepSizeSchedule::Polynomial {
            scale: 1.0,
            exponent: 0.65,
        }
    }

    pub fn default_actor() -> Self {
        StepSizeSchedule::Polynomial {
            scale: 1.0,
            exponent: 0.85,
        }
    }

    pub fn at(&self, t: u64) -> f64 {
        match *self {
            StepSizeSchedule::Constant { value } => value,
            StepSizeSchedule::Polynomial { scale, exponent } => {
                scale / ((t as f64) + 1.0).powf(exponent)
            }
        }
    }

    /// Rejects schedules that are negative, non-finite or increasing.
    pub fn validate(&self) -> Result<(), String> {
        match *self {
            StepSizeSchedule::Constant { value } => {
                if !(value.is_finite() && value >= 0.0) {
                    return Err(format!("constant step size {value} must be finite and >= 0"));
                }
            }
            StepSizeSchedule::Polynomial { scale, exponent } => {
                if !(scale.is_finite() && scale > 0.0) {
                    return Err(format!("scale {scale} must be finite and > 0"));
                }
                if !(exponent.is_finite() && exponent >= 0.0) {
                    return Err(format!("exponent {exponent} must be finite and >= 0"));
                }
            }
        }
        Ok(())
    }
}

/// Count of coordinates at which `agent` discarded `sender`'s value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrimTally {
    pub agent: usize,
    pub sender: usize,
    pub count: u64,
}

/// Observations from one executed round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundStats {
    /// Index of the round just executed (the counter before increment).
    pub round: u64,
    pub rewards: Vec<f64>,
    pub mean_reward: f64,
    /// Max over all agents of `‖θ_{t+1} − θ_t‖∞`.
    pub actor_update_norm: f64,
    /// Nonzero per-(agent, sender) trim counts of this round.
    pub trims: Vec<TrimTally>,
}

/// Everything needed to build a [`Simulation`] without a config file.
#[derive(Debug, Clone)]
pub struct SimulationParts {
    pub mdp: Mdp,
    /// Schedule carrying the adversary set and `F`.
    pub schedule: GraphSchedule,
    pub critic_features: FeatureMap,
    /// Required when the schedule has adversaries.
    pub strategy: Option<AdversaryStrategy>,
    pub critic_steps: StepSizeSchedule,
    pub actor_steps: StepSizeSchedule,
    pub seed: u64,
    pub initial_state: usize,
    pub reward_noise: f64,
    /// Per-agent `θ_0`; zeros when absent.
    pub initial_theta: Option<Vec<Vec<f64>>>,
    /// Per-agent `ω_0`; zeros when absent.
    pub initial_omega: Option<Vec<Vec<f64>>>,
}

impl SimulationParts {
    /// Default schedules, tabular critic, no adversaries, no noise.
    pub fn new(mdp: Mdp, schedule: GraphSchedule, seed: u64) -> Self {
        let critic_features = FeatureMap::tabular(mdp.n_states(), mdp.n_joint_actions());
        Self {
            mdp,
            schedule,
            critic_features,
            strategy: None,
            critic_steps: StepSizeSchedule::default_critic(),
            actor_steps: StepSizeSchedule::default_actor(),
            seed,
            initial_state: 0,
            reward_noise: 0.0,
            initial_theta: None,
            initial_omega: None,
        }
    }
}

pub fn env_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0);
    rng
}

pub fn agent_rng(seed: u64, agent: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(agent as u64 + 1);
    rng
}

pub fn placement_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX);
    rng
}

/// Adversary ids for `config` on `schedule`, placed as a run would place them.
pub fn resolve_adversaries(
    config: &ExperimentConfig,
    schedule: &GraphSchedule,
) -> Result<Vec<usize>, EngineError> {
    let spec = &config.adversaries;
    if let Some(ids) = &spec.ids {
        let mut ids = ids.clone();
        ids.sort_unstable();
        if spec.enforce_f_local && !schedule.is_r_local(&ids, config.f) {
            return Err(EngineError::Setup(format!(
                "adversary set {ids:?} is not {}-local on the communication graph",
                config.f
            )));
        }
        return Ok(ids);
    }
    let count = spec.count.unwrap_or(0);
    let r = if spec.enforce_f_local { config.f } else { count };
    let mut rng = placement_rng(config.seed);
    Ok(schedule.place_adversaries(count, r, &mut rng, spec.max_placement_attempts)?)
}

#[derive(Debug, Clone)]
pub struct Simulation {
    mdp: Mdp,
    schedule: GraphSchedule,
    critic_features: Arc<FeatureMap>,
    agents: Vec<AgentState>,
    critic_steps: StepSizeSchedule,
    actor_steps: StepSizeSchedule,
    env_rng: ChaCha8Rng,
    agent_rngs: Vec<ChaCha8Rng>,
    reward_noise: f64,
    round: u64,
    state: usize,
    joint_action: usize,
}

impl Simulation {
    /// Builds the simulation for a validated config (MDP, graph, placement).
    pub fn new(config: &ExperimentConfig) -> Result<Self, EngineError> {
        config.validate()?;
        let mdp = config.build_mdp()?;
        let schedule = config.build_graph()?;
        let adversaries = resolve_adversaries(config, &schedule)?;
        let schedule = schedule.with_adversaries(adversaries)?;
        let critic_features = config.build_critic_features(&mdp);
        Self::from_parts(SimulationParts {
            critic_features,
            strategy: config.adversaries.strategy.clone(),
            critic_steps: config.step_sizes.critic,
            actor_steps: config.step_sizes.actor,
            initial_state: config.initial_state,
            reward_noise: config.mdp.reward_noise(),
            initial_theta: None,
            initial_omega: None,
            ..SimulationParts::new(mdp, schedule, config.seed)
        })
    }

    pub fn from_parts(parts: SimulationParts) -> Result<Self, EngineError> {
        let SimulationParts {
            mdp,
            schedule,
            critic_features,
            strategy,
            critic_steps,
            actor_steps,
            seed,
            initial_state,
            reward_noise,
            initial_theta,
            initial_omega,
        } = parts;
        let n = mdp.n_agents();
        if schedule.n_nodes() != n {
            return Err(EngineError::Setup(format!(
                "graph has {} nodes but the mdp has {n} agents",
                schedule.n_nodes()
            )));
        }
        mdp.check_state(initial_state)?;
        if critic_features.n_states() != mdp.n_states()
            || critic_features.n_actions() != mdp.n_joint_actions()
        {
            return Err(EngineError::Setup(
                "critic features do not cover the state and joint-action spaces".into(),
            ));
        }
        for (name, s) in [("critic", critic_steps), ("actor", actor_steps)] {
            s.validate()
                .map_err(|m| EngineError::Setup(format!("{name} step size: {m}")))?;
        }
        if !(reward_noise.is_finite() && reward_noise >= 0.0) {
            return Err(EngineError::Setup("reward noise must be finite and >= 0".into()));
        }
        let dim = critic_features.dim();
        if !schedule.adversaries().is_empty() {
            let strategy = strategy.as_ref().ok_or_else(|| {
                EngineError::Setup("adversaries present but no strategy given".into())
            })?;
            strategy.check_dim(dim).map_err(|e| EngineError::Setup(e.to_string()))?;
        }

        let critic_features = Arc::new(critic_features);
        let mut agents = Vec::with_capacity(n);
        for i in 0..n {
            let actor_features = Arc::new(FeatureMap::tabular(mdp.n_states(), mdp.action_counts()[i]));
            let role = if schedule.is_adversary(i) {
                Role::Adversarial(strategy.clone().expect("checked above"))
            } else {
                Role::Regular
            };
            let mut agent = AgentState::new(i, actor_features, dim, role);
            if let Some(thetas) = &initial_theta {
                let theta = thetas.get(i).ok_or_else(|| {
                    EngineError::Setup(format!("initial_theta has no entry for agent {i}"))
                })?;
                if theta.len() != agent.actor.theta.len() {
                    return Err(EngineError::Setup(format!(
                        "initial_theta[{i}] has length {}, expected {}",
                        theta.len(),
                        agent.actor.theta.len()
                    )));
                }
                agent.actor.theta = theta.clone();
            }
            if let Some(omegas) = &initial_omega {
                let omega = omegas.get(i).ok_or_else(|| {
                    EngineError::Setup(format!("initial_omega has no entry for agent {i}"))
                })?;
                if omega.len() != dim {
                    return Err(EngineError::Setup(format!(
                        "initial_omega[{i}] has length {}, expected {dim}",
                        omega.len()
                    )));
                }
                agent.critic.omega = omega.clone();
                agent.critic.omega_tilde = omega.clone();
            }
            if !agent.is_finite() {
                return Err(EngineError::Setup(format!("initial parameters of agent {i} are not finite")));
            }
            agents.push(agent);
        }

        let mut agent_rngs: Vec<ChaCha8Rng> = (0..n).map(|i| agent_rng(seed, i)).collect();
        let locals: Vec<usize> = agents
            .iter()
            .zip(agent_rngs.iter_mut())
            .map(|(agent, rng)| agent.actor.select_action(initial_state, rng))
            .collect();
        let joint_action = mdp.joint_actions().encode(&locals)?;

        Ok(Self {
            mdp,
            schedule,
            critic_features,
            agents,
            critic_steps,
            actor_steps,
            env_rng: env_rng(seed),
            agent_rngs,
            reward_noise,
            round: 0,
            state: initial_state,
            joint_action,
        })
    }

    pub fn agents(&self) -> &[AgentState] {
        &self.agents
    }

    /// Direct parameter access for experiments; the next round's finiteness
    /// check still applies.
    pub fn agents_mut(&mut self) -> &mut [AgentState] {
        &mut self.agents
    }

    /// Number of rounds executed so far.
    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn state(&self) -> usize {
        self.state
    }

    pub fn joint_action(&self) -> usize {
        self.joint_action
    }

    pub fn mdp(&self) -> &Mdp {
        &self.mdp
    }

    pub fn schedule(&self) -> &GraphSchedule {
        &self.schedule
    }

    pub fn critic_features(&self) -> &FeatureMap {
        &self.critic_features
    }

    pub fn regular_ids(&self) -> Vec<usize> {
        self.agents
            .iter()
            .filter(|a| a.is_regular())
            .map(|a| a.id)
            .collect()
    }

    /// Max over regular pairs of `‖ω^i − ω^j‖∞`.
    pub fn disagreement(&self) -> f64 {
        disagreement(self.agents.iter().filter(|a| a.is_regular()).map(|a| a.critic.omega.as_slice()))
    }

    /// Joint policy of all agents' current `θ`.
    pub fn joint_policy(&self) -> Result<JointPolicy, MdpError> {
        joint_policy(&self.agents, self.mdp.n_states())
    }

    /// Exact long-run average of the mean reward under the current policy.
    pub fn j_oracle(&self) -> Result<f64, MdpError> {
        global_return(&self.mdp, &self.joint_policy()?)
    }

    pub fn step(&mut self) -> Result<RoundStats, EngineError> {
        let t = self.round;
        let n = self.agents.len();
        let s = self.state;
        let a = self.joint_action;

        let s_next = self.mdp.sample_transition(s, a, &mut self.env_rng)?;
        let rewards: Vec<f64> = (0..n)
            .map(|i| {
                let base = self.mdp.reward(i, s, a);
                if self.reward_noise > 0.0 {
                    let u: f64 = self.env_rng.random();
                    base + self.reward_noise * (2.0 * u - 1.0)
                } else {
                    base
                }
            })
            .collect();

        let beta_w = self.critic_steps.at(t);
        let beta_th = self.actor_steps.at(t);

        let mu_prev: Vec<f64> = self.agents.iter().map(|ag| ag.mu).collect();
        for (agent, &r) in self.agents.iter_mut().zip(&rewards) {
            agent.mu = mu_update(agent.mu, beta_w, r);
        }

        let locals_next: Vec<usize> = self
            .agents
            .iter()
            .zip(self.agent_rngs.iter_mut())
            .map(|(agent, rng)| agent.actor.select_action(s_next, rng))
            .collect();
        let joint = self.mdp.joint_actions();
        let a_next = joint.encode(&locals_next)?;

        let features = &*self.critic_features;
        let grad = features.phi(s, a);
        let mut actor_update_norm: f64 = 0.0;
        for (i, agent) in self.agents.iter_mut().enumerate() {
            let omega = &agent.critic.omega;
            let q_next = q_value(omega, features, s_next, a_next);
            let q_curr = q_value(omega, features, s, a);
            let delta = td_error(rewards[i], mu_prev[i], q_next, q_curr);
            let omega_tilde = critic_local_step(omega, beta_w, delta, &grad);
            let adv = advantage(omega, &agent.actor, features, joint, i, s, a);
            let psi = agent.actor.score(s, joint.local(a, i));
            let theta = actor_step(&agent.actor.theta, beta_th, adv, &psi);
            for (new, old) in theta.iter().zip(&agent.actor.theta) {
                actor_update_norm = actor_update_norm.max((new - old).abs());
            }
            agent.actor.theta = theta;
            agent.critic.omega_tilde = omega_tilde;
        }

        let mut outgoing = Vec::with_capacity(n);
        for agent in &self.agents {
            let payload = match &agent.role {
                Role::Regular => agent.critic.omega_tilde.clone(),
                Role::Adversarial(strategy) => adversary_message(strategy, agent, t)
                    .map_err(|source| EngineError::Consensus {
                        round: t,
                        agent: agent.id,
                        source,
                    })?,
            };
            outgoing.push(payload);
        }

        let f = self.schedule.f();
        let mut trims = Vec::new();
        let mut mixed = Vec::with_capacity(n);
        for agent in &self.agents {
            let i = agent.id;
            if !agent.is_regular() {
                mixed.push(agent.critic.omega_tilde.clone());
                continue;
            }
            let msgs: Vec<ParameterMessage> = self
                .schedule
                .neighborhood(i, t)
                .iter()
                .map(|&j| ParameterMessage {
                    sender: j,
                    payload: outgoing[j].clone(),
                    sender_degree: self.schedule.degree(j, t),
                })
                .collect();
            let own = &agent.critic.omega_tilde;
            let wrap = |source| EngineError::Consensus {
                round: t,
                agent: i,
                source,
            };
            let outcome = trim(&msgs, f, own.len()).map_err(wrap)?;
            let weights = CoordinateWeights::metropolis(i, self.schedule.degree(i, t), &msgs, &outcome);
            let combined = consensus_combine(own, &msgs, &weights).map_err(wrap)?;
            if let Some(coordinate) = hull_violation(own, &msgs, &outcome, &combined, HULL_TOL) {
                return Err(EngineError::SafetyViolation {
                    round: t,
                    agent: i,
                    coordinate,
                });
            }
            for (m, count) in outcome.trimmed_counts().into_iter().enumerate() {
                if count > 0 {
                    trims.push(TrimTally {
                        agent: i,
                        sender: msgs[m].sender,
                        count: count as u64,
                    });
                }
            }
            mixed.push(combined);
        }
        for (agent, omega) in self.agents.iter_mut().zip(mixed) {
            agent.critic.omega = omega;
        }

        for agent in &self.agents {
            let what = if !agent.mu.is_finite() {
                Some("mu")
            } else if agent.actor.theta.iter().any(|x| !x.is_finite()) {
                Some("theta")
            } else if agent.critic.omega.iter().any(|x| !x.is_finite())
                || agent.critic.omega_tilde.iter().any(|x| !x.is_finite())
            {
                Some("omega")
            } else {
                None
            };
            if let Some(what) = what {
                return Err(EngineError::NonFinite {
                    round: t,
                    agent: agent.id,
                    what,
                });
            }
            if agent.actor.policy_probs(s_next).iter().any(|&p| p <= 0.0) {
                return Err(EngineError::ZeroProbability {
                    round: t,
                    agent: agent.id,
                    state: s_next,
                });
            }
        }

        self.state = s_next;
        self.joint_action = a_next;
        self.round += 1;
        let mean_reward = rewards.iter().sum::<f64>() / n as f64;
        Ok(RoundStats {
            round: t,
            rewards,
            mean_reward,
            actor_update_norm,
            trims,
        })
    }
}

/// `max_k (max_i v_i[k] − min_i v_i[k])`, zero for fewer than two vectors.
pub fn disagreement<'a>(values: impl IntoIterator<Item = &'a [f64]>) -> f64 {
    let mut lo: Vec<f64> = Vec::new();
    let mut hi: Vec<f64> = Vec::new();
    for v in values {
        if lo.is_empty() {
            lo = v.to_vec();
            hi = v.to_vec();
            continue;
        }
        for (k, &x) in v.iter().enumerate() {
            lo[k] = lo[k].min(x);
            hi[k] = hi[k].max(x);
        }
    }
    lo.iter().zip(&hi).map(|(l, h)| h - l).fold(0.0, f64::max)
}

pub fn joint_policy(agents: &[AgentState], n_states: usize) -> Result<JointPolicy, MdpError> {
    JointPolicy::new(
        agents
            .iter()
            .map(|ag| (0..n_states).map(|s| ag.actor.policy_probs(s)).collect())
            .collect(),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSnapshot {
    pub agent: usize,
    pub theta: Vec<f64>,
    pub omega: Vec<f64>,
}

/// One logged point of a trajectory. `round` counts executed rounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub round: u64,
    pub j_oracle: f64,
    /// Mean of the agent-averaged reward over rounds since the previous row.
    pub avg_reward_window: Option<f64>,
    pub disagreement: f64,
    pub mu: Vec<f64>,
    /// Trim counts accumulated since the previous row.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trimmed: Vec<TrimTally>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<Vec<ParamSnapshot>>,
}

/// Metrics of the current agents. `window` holds per-round mean rewards.
pub fn compute_metrics(
    round: u64,
    agents: &[AgentState],
    mdp: &Mdp,
    window: &[f64],
    snapshot_params: bool,
) -> Result<MetricsRow, MdpError> {
    let policy = joint_policy(agents, mdp.n_states())?;
    let j_oracle = global_return(mdp, &policy)?;
    let avg_reward_window =
        (!window.is_empty()).then(|| window.iter().sum::<f64>() / window.len() as f64);
    let params = snapshot_params.then(|| {
        agents
            .iter()
            .map(|ag| ParamSnapshot {
                agent: ag.id,
                theta: ag.actor.theta.clone(),
                omega: ag.critic.omega.clone(),
            })
            .collect()
    });
    Ok(MetricsRow {
        round,
        j_oracle,
        avg_reward_window,
        disagreement: disagreement(
            agents
                .iter()
                .filter(|a| a.is_regular())
                .map(|a| a.critic.omega.as_slice()),
        ),
        mu: agents.iter().map(|a| a.mu).collect(),
        trimmed: Vec::new(),
        params,
    })
}

/// Header record of a trajectory log. Contains no wall-clock data so that
/// reruns produce identical bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub format: String,
    pub config_hash: String,
    pub seed: u64,
    pub adversaries: Vec<usize>,
    pub config: ExperimentConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum Record {
    Meta(RunMeta),
    Metrics(MetricsRow),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryLog {
    pub meta: RunMeta,
    pub rows: Vec<MetricsRow>,
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("line {line}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
}

impl TrajectoryLog {
    /// Appends a row; rounds must strictly increase.
    pub fn push(&mut self, row: MetricsRow) {
        if let Some(last) = self.rows.last() {
            assert!(row.round > last.round, "log rounds must strictly increase");
        }
        self.rows.push(row);
    }

    pub fn last(&self) -> Option<&MetricsRow> {
        self.rows.last()
    }

    /// One JSON object per line: the header, then one line per row.
    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&Record::Meta(self.meta.clone())).expect("meta serializes");
        out.push('\n');
        for row in &self.rows {
            out.push_str(&serde_json::to_string(&Record::Metrics(row.clone())).expect("row serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, LogError> {
        let mut meta = None;
        let mut rows: Vec<MetricsRow> = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let record: Record = serde_json::from_str(line).map_err(|source| LogError::Json {
                line: line_no,
                source,
            })?;
            match record {
                Record::Meta(m) => {
                    if meta.is_some() || !rows.is_empty() {
                        return Err(LogError::Format {
                            line: line_no,
                            message: "metadata must be the single first record".into(),
                        });
                    }
                    meta = Some(m);
                }
                Record::Metrics(row) => {
                    if meta.is_none() {
                        return Err(LogError::Format {
                            line: line_no,
                            message: "metrics before metadata".into(),
                        });
                    }
                    if rows.last().is_some_and(|last| row.round <= last.round) {
                        return Err(LogError::Format {
                            line: line_no,
                            message: "rounds must strictly increase".into(),
                        });
                    }
                    rows.push(row);
                }
            }
        }
        let meta = meta.ok_or(LogError::Format {
            line: 0,
            message: "missing metadata record".into(),
        })?;
        Ok(Self { meta, rows })
    }
}

/// Final parameters of one agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSnapshot {
    pub id: usize,
    pub regular: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategy: Option<AdversaryStrategy>,
    pub mu: f64,
    pub theta: Vec<f64>,
    pub omega: Vec<f64>,
    pub omega_tilde: Vec<f64>,
}

impl From<&AgentState> for AgentSnapshot {
    fn from(agent: &AgentState) -> Self {
        Self {
            id: agent.id,
            regular: agent.is_regular(),
            strategy: match &agent.role {
                Role::Regular => None,
                Role::Adversarial(s) => Some(s.clone()),
            },
            mu: agent.mu,
            theta: agent.actor.theta.clone(),
            omega: agent.critic.omega.clone(),
            omega_tilde: agent.critic.omega_tilde.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub log: TrajectoryLog,
    pub final_agents: Vec<AgentSnapshot>,
    pub rounds_executed: u64,
    pub stopped_early: bool,
}

/// Runs a full experiment: `config.rounds` rounds (or until the early-stop
/// criterion holds), logging every `config.log_interval` rounds plus a final
/// row.
pub fn run(config: &ExperimentConfig) -> Result<RunOutput, EngineError> {
    run_with(config, |_| {})
}

/// [`run`] with a callback after every logged row.
pub fn run_with(
    config: &ExperimentConfig,
    mut on_row: impl FnMut(&MetricsRow),
) -> Result<RunOutput, EngineError> {
    let mut sim = Simulation::new(config)?;
    let meta = RunMeta {
        format: LOG_FORMAT.to_string(),
        config_hash: config.hash(),
        seed: config.seed,
        adversaries: sim.schedule().adversaries().to_vec(),
        config: config.clone(),
    };
    let mut log = TrajectoryLog {
        meta,
        rows: Vec::new(),
    };
    let first = compute_metrics(0, sim.agents(), sim.mdp(), &[], config.snapshot_params)?;
    on_row(&first);
    log.push(first);

    let stop = &config.stop;
    let mut calm_rounds = 0u64;
    let mut stopped_early = false;
    let mut window: Vec<f64> = Vec::new();
    let mut tallies: std::collections::BTreeMap<(usize, usize), u64> = Default::default();

    while sim.round() < config.rounds {
        let stats = sim.step()?;
        window.push(stats.mean_reward);
        for tally in &stats.trims {
            *tallies.entry((tally.agent, tally.sender)).or_default() += tally.count;
        }
        if let (Some(d_thr), Some(a_thr)) = (stop.disagreement_below, stop.actor_update_below) {
            if sim.disagreement() < d_thr && stats.actor_update_norm < a_thr {
                calm_rounds += 1;
            } else {
                calm_rounds = 0;
            }
            stopped_early = calm_rounds >= stop.patience;
        }
        let done = stopped_early || sim.round() == config.rounds;
        if sim.round() % config.log_interval == 0 || done {
            let mut row = compute_metrics(
                sim.round(),
                sim.agents(),
                sim.mdp(),
                &window,
                config.snapshot_params,
            )?;
            row.trimmed = std::mem::take(&mut tallies)
                .into_iter()
                .map(|((agent, sender), count)| TrimTally {
                    agent,
                    sender,
                    count,
                })
                .collect();
            window.clear();
            on_row(&row);
            log.push(row);
        }
        if stopped_early {
            break;
        }
    }

    Ok(RunOutput {
        final_agents: sim.agents().iter().map(AgentSnapshot::from).collect(),
        rounds_executed: sim.round(),
        stopped_early,
        log,
    })
}
