//! Declarative experiment configuration (TOML).
//!
//! Parsing resolves every default, so serializing a parsed config echoes the
//! full run description. Field names are documented in
//! `docs/config-reference.md`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::agent::FeatureMap;
use crate::consensus::AdversaryStrategy;
use crate::engine::StepSizeSchedule;
use crate::graph::{self, Graph, GraphSchedule, DEFAULT_PLACEMENT_ATTEMPTS};
use crate::mdp::{generate_random_mdp, Mdp, RandomMdpSpec, DEFAULT_MAX_JOINT_ACTIONS};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
    #[error("reading {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl ConfigError {
    /// Dotted path of the offending field (`<root>` for the document itself).
    pub fn path(&self) -> &str {
        match self {
            ConfigError::Parse { path, .. } | ConfigError::Invalid { path, .. } => path,
            ConfigError::Io { path, .. } => path,
        }
    }
}

fn invalid(path: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        path: path.into(),
        message: message.into(),
    }
}

fn default_rounds() -> u64 {
    10_000
}

fn default_log_interval() -> u64 {
    100
}

fn default_true() -> bool {
    true
}

fn default_cap() -> usize {
    DEFAULT_MAX_JOINT_ACTIONS
}

fn default_attempts() -> usize {
    DEFAULT_PLACEMENT_ATTEMPTS
}

fn default_patience() -> u64 {
    1000
}

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Number of agents `N`; every other section must agree with it.
    pub n_agents: usize,
    /// Master seed for environment, action and placement streams.
    pub seed: u64,
    #[serde(default = "default_rounds")]
    pub rounds: u64,
    #[serde(default = "default_log_interval")]
    pub log_interval: u64,
    #[serde(default)]
    pub initial_state: usize,
    /// Trimming parameter `F`.
    #[serde(default)]
    pub f: usize,
    #[serde(default, skip_serializing_if = "is_false")]
    pub snapshot_params: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    pub mdp: MdpSpec,
    pub graph: GraphSpec,
    #[serde(default)]
    pub adversaries: AdversarySpec,
    #[serde(default)]
    pub features: FeatureSpec,
    #[serde(default)]
    pub step_sizes: StepSizes,
    #[serde(default)]
    pub stop: StopSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MdpSpec {
    Random {
        n_states: usize,
        actions_per_agent: usize,
        reward_range: [f64; 2],
        seed: u64,
        #[serde(default = "default_cap")]
        max_joint_actions: usize,
        /// Half-width of optional uniform reward noise; 0 disables it.
        #[serde(default)]
        reward_noise: f64,
    },
    File {
        path: PathBuf,
        #[serde(default = "default_cap")]
        max_joint_actions: usize,
        #[serde(default)]
        reward_noise: f64,
    },
}

impl MdpSpec {
    pub fn reward_noise(&self) -> f64 {
        match self {
            MdpSpec::Random { reward_noise, .. } | MdpSpec::File { reward_noise, .. } => {
                *reward_noise
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologyKind {
    Ring,
    Star,
    Complete,
    Path,
    ErdosRenyi,
    Edges,
}

/// One graph: a named generator plus its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologySpec {
    pub topology: TopologyKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges: Option<Vec<[usize; 2]>>,
}

impl TopologySpec {
    fn validate(&self, path: &str, n: usize) -> Result<(), ConfigError> {
        match self.topology {
            TopologyKind::ErdosRenyi => {
                match self.p {
                    Some(p) if (0.0..=1.0).contains(&p) => {}
                    Some(p) => return Err(invalid(format!("{path}.p"), format!("{p} is not a probability"))),
                    None => return Err(invalid(format!("{path}.p"), "missing field `p` for erdos_renyi")),
                }
                if self.seed.is_none() {
                    return Err(invalid(format!("{path}.seed"), "missing field `seed` for erdos_renyi"));
                }
            }
            TopologyKind::Edges => {
                let edges = self
                    .edges
                    .as_ref()
                    .ok_or_else(|| invalid(format!("{path}.edges"), "missing field `edges`"))?;
                for (idx, [u, v]) in edges.iter().enumerate() {
                    if *u >= n || *v >= n {
                        return Err(invalid(
                            format!("{path}.edges[{idx}]"),
                            format!("edge ({u}, {v}) names a node outside 0..{n}; inconsistent with n_agents = {n}"),
                        ));
                    }
                    if u == v {
                        return Err(invalid(format!("{path}.edges[{idx}]"), "self-loop"));
                    }
                }
            }
            _ => {}
        }
        Ok(())
    }

    pub fn build(&self, n: usize) -> Graph {
        match self.topology {
            TopologyKind::Ring => Graph::ring(n),
            TopologyKind::Star => Graph::star(n),
            TopologyKind::Complete => Graph::complete(n),
            TopologyKind::Path => Graph::path(n),
            TopologyKind::ErdosRenyi => {
                Graph::erdos_renyi(n, self.p.unwrap_or(0.0), self.seed.unwrap_or(0))
            }
            TopologyKind::Edges => {
                let edges: Vec<(usize, usize)> = self
                    .edges
                    .iter()
                    .flatten()
                    .map(|&[u, v]| (u, v))
                    .collect();
                Graph::from_edges(n, &edges).expect("edges validated")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSpec {
    /// Static graph; ignored when `schedule` is non-empty.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topology: Option<TopologyKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges: Option<Vec<[usize; 2]>>,
    /// Verify connectivity at load (of the union of phases for schedules).
    #[serde(default = "default_true")]
    pub require_connected: bool,
    /// Periodic schedule: round `t` uses `schedule[t % len]`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub schedule: Vec<TopologySpec>,
}

impl GraphSpec {
    fn phase_specs(&self) -> Result<Vec<(String, TopologySpec)>, ConfigError> {
        if !self.schedule.is_empty() {
            return Ok(self
                .schedule
                .iter()
                .enumerate()
                .map(|(i, s)| (format!("graph.schedule[{i}]"), s.clone()))
                .collect());
        }
        let topology = self.topology.ok_or_else(|| {
            invalid("graph.topology", "missing field `topology` (or a non-empty `schedule`)")
        })?;
        Ok(vec![(
            "graph".to_string(),
            TopologySpec {
                topology,
                p: self.p,
                seed: self.seed,
                edges: self.edges.clone(),
            },
        )])
    }

    /// The graph phases, validated against `n` nodes.
    pub fn build_phases(&self, n: usize) -> Result<Vec<Graph>, ConfigError> {
        let specs = self.phase_specs()?;
        let mut phases = Vec::with_capacity(specs.len());
        for (path, spec) in specs {
            spec.validate(&path, n)?;
            phases.push(spec.build(n));
        }
        Ok(phases)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdversarySpec {
    /// Number of randomly placed adversaries.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    /// Explicit adversary ids (exclusive with `count`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ids: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategy: Option<AdversaryStrategy>,
    /// Require the adversary set to be `f`-local.
    #[serde(default = "default_true")]
    pub enforce_f_local: bool,
    #[serde(default = "default_attempts")]
    pub max_placement_attempts: usize,
}

impl Default for AdversarySpec {
    fn default() -> Self {
        Self {
            count: None,
            ids: None,
            strategy: None,
            enforce_f_local: true,
            max_placement_attempts: DEFAULT_PLACEMENT_ATTEMPTS,
        }
    }
}

impl AdversarySpec {
    pub fn is_empty(&self) -> bool {
        self.count.unwrap_or(0) == 0 && self.ids.as_ref().is_none_or(|ids| ids.is_empty())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FeatureSpec {
    /// One-hot over (state, joint action).
    #[default]
    Tabular,
    /// Seeded Gaussian projection to `dim` features.
    Projection { dim: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepSizes {
    #[serde(default = "StepSizeSchedule::default_critic")]
    pub critic: StepSizeSchedule,
    #[serde(default = "StepSizeSchedule::default_actor")]
    pub actor: StepSizeSchedule,
}

impl Default for StepSizes {
    fn default() -> Self {
        Self {
            critic: StepSizeSchedule::default_critic(),
            actor: StepSizeSchedule::default_actor(),
        }
    }
}

/// Early stop: both thresholds must hold for `patience` consecutive rounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StopSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disagreement_below: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub actor_update_below: Option<f64>,
    #[serde(default = "default_patience")]
    pub patience: u64,
}

impl Default for StopSpec {
    fn default() -> Self {
        Self {
            disagreement_below: None,
            actor_update_below: None,
            patience: default_patience(),
        }
    }
}

impl StopSpec {
    pub fn is_enabled(&self) -> bool {
        self.disagreement_below.is_some() && self.actor_update_below.is_some()
    }
}

/// Parses and validates a TOML config document.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let de = toml::de::Deserializer::parse(text).map_err(|e| ConfigError::Parse {
        path: "<root>".into(),
        message: e.to_string(),
    })?;
    let config: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        ConfigError::Parse {
            path: if path == "." { "<root>".into() } else { path },
            message: e.into_inner().message().to_string(),
        }
    })?;
    config.validate()?;
    Ok(config)
}

impl ExperimentConfig {
    /// Reads a config file; a relative MDP file path is resolved against the
    /// config's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut config = parse_config(&text)?;
        if let MdpSpec::File { path: mdp_path, .. } = &mut config.mdp {
            if mdp_path.is_relative() {
                if let Some(dir) = path.parent() {
                    *mdp_path = dir.join(&*mdp_path);
                }
            }
        }
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to toml")
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes to json");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let n = self.n_agents;
        if n == 0 {
            return Err(invalid("n_agents", "must be at least 1"));
        }
        if self.log_interval == 0 {
            return Err(invalid("log_interval", "must be at least 1"));
        }
        match &self.mdp {
            MdpSpec::Random {
                n_states,
                actions_per_agent,
                reward_range: [lo, hi],
                max_joint_actions,
                reward_noise,
                ..
            } => {
                if *n_states < 2 {
                    return Err(invalid("mdp.n_states", "must be at least 2"));
                }
                if *actions_per_agent < 2 {
                    return Err(invalid("mdp.actions_per_agent", "must be at least 2"));
                }
                if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                    return Err(invalid("mdp.reward_range", "need finite [lo, hi] with lo <= hi"));
                }
                let joint = (*actions_per_agent as f64).powi(n as i32);
                if joint > *max_joint_actions as f64 {
                    return Err(invalid(
                        "mdp.max_joint_actions",
                        format!("joint action space {actions_per_agent}^{n} exceeds the cap {max_joint_actions}"),
                    ));
                }
                if self.initial_state >= *n_states {
                    return Err(invalid("initial_state", format!("must be below n_states = {n_states}")));
                }
                check_noise(*reward_noise)?;
            }
            MdpSpec::File { reward_noise, .. } => check_noise(*reward_noise)?,
        }
        self.graph.build_phases(n)?;

        let adv = &self.adversaries;
        if adv.count.is_some() && adv.ids.is_some() {
            return Err(invalid("adversaries", "give either `count` or `ids`, not both"));
        }
        if let Some(count) = adv.count {
            if count >= n {
                return Err(invalid("adversaries.count", format!("must be below n_agents = {n}")));
            }
        }
        if let Some(ids) = &adv.ids {
            let mut sorted = ids.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != ids.len() {
                return Err(invalid("adversaries.ids", "duplicate id"));
            }
            if let Some(bad) = ids.iter().find(|&&i| i >= n) {
                return Err(invalid(
                    "adversaries.ids",
                    format!("id {bad} is outside 0..{n}; inconsistent with n_agents"),
                ));
            }
            if ids.len() >= n {
                return Err(invalid("adversaries.ids", "at least one agent must be regular"));
            }
        }
        if !adv.is_empty() {
            let strategy = adv
                .strategy
                .as_ref()
                .ok_or_else(|| invalid("adversaries.strategy", "missing field `strategy`"))?;
            if !strategy.is_finite() {
                return Err(invalid("adversaries.strategy", "parameters must be finite"));
            }
            if let AdversaryStrategy::Noise { scale, .. } = strategy {
                if *scale < 0.0 {
                    return Err(invalid("adversaries.strategy.scale", "must be non-negative"));
                }
            }
        }
        if let FeatureSpec::Projection { dim, .. } = self.features {
            if dim == 0 {
                return Err(invalid("features.dim", "must be at least 1"));
            }
        }
        self.step_sizes
            .critic
            .validate()
            .map_err(|m| invalid("step_sizes.critic", m))?;
        self.step_sizes
            .actor
            .validate()
            .map_err(|m| invalid("step_sizes.actor", m))?;
        for (name, v) in [
            ("stop.disagreement_below", self.stop.disagreement_below),
            ("stop.actor_update_below", self.stop.actor_update_below),
        ] {
            if let Some(v) = v {
                if !(v.is_finite() && v >= 0.0) {
                    return Err(invalid(name, "must be a non-negative number"));
                }
            }
        }
        if self.stop.patience == 0 {
            return Err(invalid("stop.patience", "must be at least 1"));
        }
        Ok(())
    }

    /// Non-fatal remarks about the configuration.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let (
            StepSizeSchedule::Polynomial { exponent: ce, .. },
            StepSizeSchedule::Polynomial { exponent: ae, .. },
        ) = (&self.step_sizes.critic, &self.step_sizes.actor)
        {
            if ce >= ae {
                out.push(format!(
                    "critic exponent {ce} is not below actor exponent {ae}; the critic will not run on the faster timescale"
                ));
            }
        }
        if self.stop.disagreement_below.is_some() != self.stop.actor_update_below.is_some() {
            out.push("early stop needs both `disagreement_below` and `actor_update_below`; it is disabled".into());
        }
        out
    }

    /// Builds the environment described by `mdp`.
    pub fn build_mdp(&self) -> Result<Mdp, ConfigError> {
        let mdp = match &self.mdp {
            MdpSpec::Random {
                n_states,
                actions_per_agent,
                reward_range,
                seed,
                max_joint_actions,
                ..
            } => generate_random_mdp(
                &RandomMdpSpec {
                    n_agents: self.n_agents,
                    n_states: *n_states,
                    actions_per_agent: *actions_per_agent,
                    reward_range: (reward_range[0], reward_range[1]),
                    max_joint_actions: *max_joint_actions,
                },
                *seed,
            )
            .map_err(|e| invalid("mdp", e.to_string()))?,
            MdpSpec::File {
                path,
                max_joint_actions,
                ..
            } => {
                let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
                    path: path.display().to_string(),
                    source,
                })?;
                Mdp::from_json(&text, *max_joint_actions)
                    .map_err(|e| invalid("mdp.path", e.to_string()))?
            }
        };
        if mdp.n_agents() != self.n_agents {
            return Err(invalid(
                "mdp",
                format!(
                    "mdp has {} agents but n_agents = {}",
                    mdp.n_agents(),
                    self.n_agents
                ),
            ));
        }
        if self.initial_state >= mdp.n_states() {
            return Err(invalid("initial_state", format!("must be below n_states = {}", mdp.n_states())));
        }
        Ok(mdp)
    }

    /// Builds the graph schedule (adversaries not yet placed).
    pub fn build_graph(&self) -> Result<GraphSchedule, ConfigError> {
        let phases = self.graph.build_phases(self.n_agents)?;
        if self.graph.require_connected {
            let union = Graph::union(&phases).map_err(|e| invalid("graph", e.to_string()))?;
            if !union.is_connected() {
                return Err(invalid("graph", "graph is not connected (set require_connected = false to allow)"));
            }
        }
        GraphSchedule::new(phases, Vec::new(), self.f).map_err(|e| invalid("graph", e.to_string()))
    }

    pub fn build_critic_features(&self, mdp: &Mdp) -> FeatureMap {
        match self.features {
            FeatureSpec::Tabular => FeatureMap::tabular(mdp.n_states(), mdp.n_joint_actions()),
            FeatureSpec::Projection { dim, seed } => {
                FeatureMap::random_projection(mdp.n_states(), mdp.n_joint_actions(), dim, seed)
            }
        }
    }
}

fn check_noise(noise: f64) -> Result<(), ConfigError> {
    if noise.is_finite() && noise >= 0.0 {
        Ok(())
    } else {
        Err(invalid("mdp.reward_noise", "must be a non-negative number"))
    }
}

/// Connectivity, degrees, locality and robustness of a configured graph.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GraphReport {
    pub n_nodes: usize,
    pub phases: Vec<PhaseReport>,
    pub union_connected: bool,
    pub f: usize,
    pub adversaries: Vec<usize>,
    /// `None` when no placement could be made.
    pub f_local: Option<bool>,
    /// Per-node fraction of adversarial neighbors (worst phase).
    pub adversarial_fraction: Vec<f64>,
    pub max_adversarial_fraction: f64,
    /// Largest r with the static graph r-robust; `None` when skipped.
    pub robustness: Option<usize>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseReport {
    pub connected: bool,
    pub degrees: Vec<usize>,
    pub min_degree: usize,
    pub max_degree: usize,
    pub mean_degree: f64,
}

/// Diagnostics for the configured graph and adversary set. Adversaries are
/// placed exactly as a run with this config would place them.
pub fn check_graph(config: &ExperimentConfig) -> Result<GraphReport, ConfigError> {
    let mut relaxed = config.clone();
    relaxed.graph.require_connected = false;
    let schedule = relaxed.build_graph()?;
    let mut warnings = config.warnings();

    let phases: Vec<PhaseReport> = schedule
        .phases()
        .iter()
        .map(|g| {
            let degrees: Vec<usize> = (0..g.n_nodes()).map(|i| g.degree(i)).collect();
            PhaseReport {
                connected: g.is_connected(),
                min_degree: degrees.iter().copied().min().unwrap_or(0),
                max_degree: degrees.iter().copied().max().unwrap_or(0),
                mean_degree: degrees.iter().sum::<usize>() as f64 / degrees.len().max(1) as f64,
                degrees,
            }
        })
        .collect();
    let union_connected = Graph::union(schedule.phases())
        .map(|g| g.is_connected())
        .unwrap_or(false);
    if !union_connected {
        warnings.push("WARNING: the communication graph is DISCONNECTED; consensus cannot be reached".into());
    } else if phases.iter().any(|p| !p.connected) {
        warnings.push("some schedule phases are disconnected (their union is connected)".into());
    }

    let (adversaries, f_local) = match crate::engine::resolve_adversaries(config, &schedule) {
        Ok(set) => {
            let local = schedule.is_r_local(&set, config.f);
            (set, Some(local))
        }
        Err(e) => {
            warnings.push(format!("adversary placement failed: {e}"));
            (Vec::new(), None)
        }
    };
    let fraction = schedule.adversarial_fraction(&adversaries);
    let max_fraction = fraction.iter().copied().fold(0.0, f64::max);

    let robustness = if !schedule.is_static() {
        warnings.push("robustness is only checked for static graphs; skipped".into());
        None
    } else if schedule.n_nodes() > graph::ROBUSTNESS_NODE_CAP {
        warnings.push(format!(
            "graph has {} nodes; robustness check is limited to {} and was skipped",
            schedule.n_nodes(),
            graph::ROBUSTNESS_NODE_CAP
        ));
        None
    } else {
        Some(graph::max_robustness(&schedule.phases()[0]).expect("size checked"))
    };
    if let Some(r) = robustness {
        if config.f > 0 && r < 2 * config.f + 1 {
            warnings.push(format!(
                "graph is {r}-robust; trimming F = {} is only guaranteed on (2F+1)-robust graphs",
                config.f
            ));
        }
    }

    Ok(GraphReport {
        n_nodes: schedule.n_nodes(),
        phases,
        union_connected,
        f: config.f,
        adversaries,
        f_local,
        adversarial_fraction: fraction,
        max_adversarial_fraction: max_fraction,
        robustness,
        warnings,
    })
}
