//! Trim-and-mix consensus and adversarial message strategies.
//!
//! Each regular agent receives one parameter vector per neighbor. For every
//! coordinate independently it drops the `F` largest and `F` smallest
//! received values, then mixes the survivors with its own value using
//! Metropolis weights. Its own value is never trimmed and absorbs the weight
//! of trimmed neighbors, so each coordinate's update is a convex combination
//! of the agent's own value and the surviving neighbor values.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::AgentState;
use crate::graph::{metropolis_weight, ConsensusRow};

/// Largest tolerated deviation of a weight row from summing to one.
pub const WEIGHT_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConsensusError {
    #[error("message from {sender} has {got} coordinates, expected {expected}")]
    PayloadLength {
        sender: usize,
        got: usize,
        expected: usize,
    },
    #[error("message from {sender} carries a non-finite value")]
    NonFinitePayload { sender: usize },
    #[error("weights at coordinate {coordinate} sum to {sum} (or contain a negative entry)")]
    WeightNormalization { coordinate: usize, sum: f64 },
    #[error("weights cover {dim} coordinates and {msgs} messages, expected {expected_dim} and {expected_msgs}")]
    WeightShape {
        dim: usize,
        msgs: usize,
        expected_dim: usize,
        expected_msgs: usize,
    },
    #[error("adversary parameter has {got} coordinates, expected {expected}")]
    StrategyDimension { got: usize, expected: usize },
    #[error("the agent is not adversarial")]
    NotAdversarial,
}

/// What an agent sends to its neighbors in one round.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterMessage {
    pub sender: usize,
    pub payload: Vec<f64>,
    /// Sender's degree in the round's graph, needed for Metropolis weights.
    pub sender_degree: usize,
}

/// A scalar broadcast to every coordinate, or an explicit vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamFill {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl ParamFill {
    pub fn resolve(&self, dim: usize) -> Result<Vec<f64>, ConsensusError> {
        match self {
            ParamFill::Scalar(x) => Ok(vec![*x; dim]),
            ParamFill::Vector(v) if v.len() == dim => Ok(v.clone()),
            ParamFill::Vector(v) => Err(ConsensusError::StrategyDimension {
                got: v.len(),
                expected: dim,
            }),
        }
    }

    fn is_finite(&self) -> bool {
        match self {
            ParamFill::Scalar(x) => x.is_finite(),
            ParamFill::Vector(v) => v.iter().all(|x| x.is_finite()),
        }
    }
}

/// How an adversarial agent builds the payload it broadcasts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AdversaryStrategy {
    /// Always sends `value`.
    Constant { value: ParamFill },
    /// Sends `start + rate * t` coordinatewise.
    Drift { start: ParamFill, rate: f64 },
    /// Sends i.i.d. `scale * N(0, 1)` draws, reproducible from `(seed, t)`.
    Noise { scale: f64, seed: u64 },
    /// Learns on its own reward and shares its own critic, never mixing.
    Selfish,
}

impl AdversaryStrategy {
    pub const NAMES: [&'static str; 4] = ["constant", "drift", "noise", "selfish"];

    pub fn name(&self) -> &'static str {
        match self {
            AdversaryStrategy::Constant { .. } => "constant",
            AdversaryStrategy::Drift { .. } => "drift",
            AdversaryStrategy::Noise { .. } => "noise",
            AdversaryStrategy::Selfish => "selfish",
        }
    }

    pub fn is_finite(&self) -> bool {
        match self {
            AdversaryStrategy::Constant { value } => value.is_finite(),
            AdversaryStrategy::Drift { start, rate } => start.is_finite() && rate.is_finite(),
            AdversaryStrategy::Noise { scale, .. } => scale.is_finite(),
            AdversaryStrategy::Selfish => true,
        }
    }

    /// Checks vector parameters against the critic dimension.
    pub fn check_dim(&self, dim: usize) -> Result<(), ConsensusError> {
        match self {
            AdversaryStrategy::Constant { value } => value.resolve(dim).map(|_| ()),
            AdversaryStrategy::Drift { start, .. } => start.resolve(dim).map(|_| ()),
            _ => Ok(()),
        }
    }
}

/// Payload an adversarial agent sends at round `t`.
pub fn adversary_message(
    strategy: &AdversaryStrategy,
    state: &AgentState,
    t: u64,
) -> Result<Vec<f64>, ConsensusError> {
    let dim = state.critic.omega.len();
    match strategy {
        AdversaryStrategy::Constant { value } => value.resolve(dim),
        AdversaryStrategy::Drift { start, rate } => Ok(start
            .resolve(dim)?
            .into_iter()
            .map(|v| v + rate * t as f64)
            .collect()),
        AdversaryStrategy::Noise { scale, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(
                seed.wrapping_add((state.id as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)),
            );
            rng.set_stream(t);
            Ok((0..dim)
                .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
                .collect())
        }
        AdversaryStrategy::Selfish => Ok(state.critic.omega_tilde.clone()),
    }
}

/// Per-coordinate survival mask produced by [`trim`].
#[derive(Debug, Clone, PartialEq)]
pub struct TrimOutcome {
    n_msgs: usize,
    dim: usize,
    // keep[k * n_msgs + m]
    keep: Vec<bool>,
}

impl TrimOutcome {
    pub fn n_msgs(&self) -> usize {
        self.n_msgs
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_kept(&self, coordinate: usize, msg: usize) -> bool {
        self.keep[coordinate * self.n_msgs + msg]
    }

    /// Indices (into the message list) surviving at `coordinate`.
    pub fn retained_at(&self, coordinate: usize) -> impl Iterator<Item = usize> + '_ {
        let row = &self.keep[coordinate * self.n_msgs..(coordinate + 1) * self.n_msgs];
        row.iter().enumerate().filter(|(_, &k)| k).map(|(m, _)| m)
    }

    /// Values surviving at `coordinate`, in message order.
    pub fn retained_values<'a>(
        &'a self,
        msgs: &'a [ParameterMessage],
        coordinate: usize,
    ) -> impl Iterator<Item = f64> + 'a {
        self.retained_at(coordinate)
            .map(move |m| msgs[m].payload[coordinate])
    }

    /// How many coordinates each message was trimmed at.
    pub fn trimmed_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_msgs];
        for k in 0..self.dim {
            for (m, c) in counts.iter_mut().enumerate() {
                if !self.is_kept(k, m) {
                    *c += 1;
                }
            }
        }
        counts
    }
}

/// Coordinatewise trimming: at each coordinate, drop the `f` largest and `f`
/// smallest neighbor values. Ties are ordered by sender id. With `2f` or
/// fewer messages nothing survives.
pub fn trim(msgs: &[ParameterMessage], f: usize, dim: usize) -> Result<TrimOutcome, ConsensusError> {
    for m in msgs {
        if m.payload.len() != dim {
            return Err(ConsensusError::PayloadLength {
                sender: m.sender,
                got: m.payload.len(),
                expected: dim,
            });
        }
        if m.payload.iter().any(|x| !x.is_finite()) {
            return Err(ConsensusError::NonFinitePayload { sender: m.sender });
        }
    }
    let n = msgs.len();
    let mut keep = vec![f == 0; n * dim];
    if f > 0 && n > 2 * f {
        let mut order: Vec<(f64, usize, usize)> = Vec::with_capacity(n);
        for k in 0..dim {
            order.clear();
            order.extend(msgs.iter().enumerate().map(|(m, msg)| (msg.payload[k], msg.sender, m)));
            order.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            for &(_, _, m) in &order[f..n - f] {
                keep[k * n + m] = true;
            }
        }
    }
    Ok(TrimOutcome { n_msgs: n, dim, keep })
}

/// Per-coordinate mixing weights of one agent.
#[derive(Debug, Clone, PartialEq)]
pub struct CoordinateWeights {
    agent: usize,
    n_msgs: usize,
    self_weight: Vec<f64>,
    // neighbor[k * n_msgs + m]; zero where trimmed
    neighbor: Vec<f64>,
}

impl CoordinateWeights {
    /// Metropolis weights over each coordinate's survivors. Pairwise weights
    /// use the untrimmed degrees; the self weight takes the remainder.
    pub fn metropolis(
        agent: usize,
        own_degree: usize,
        msgs: &[ParameterMessage],
        trimmed: &TrimOutcome,
    ) -> Self {
        let n = msgs.len();
        let pair: Vec<f64> = msgs
            .iter()
            .map(|m| metropolis_weight(own_degree, m.sender_degree))
            .collect();
        let mut self_weight = Vec::with_capacity(trimmed.dim());
        let mut neighbor = vec![0.0; n * trimmed.dim()];
        for k in 0..trimmed.dim() {
            let mut used = 0.0;
            for m in trimmed.retained_at(k) {
                neighbor[k * n + m] = pair[m];
                used += pair[m];
            }
            self_weight.push(1.0 - used);
        }
        Self {
            agent,
            n_msgs: n,
            self_weight,
            neighbor,
        }
    }

    /// Explicit weights: `self_weight[k]` and `neighbor[k][m]`.
    pub fn from_parts(agent: usize, self_weight: Vec<f64>, neighbor: Vec<Vec<f64>>) -> Self {
        let n_msgs = neighbor.first().map_or(0, Vec::len);
        Self {
            agent,
            n_msgs,
            self_weight,
            neighbor: neighbor.concat(),
        }
    }

    pub fn dim(&self) -> usize {
        self.self_weight.len()
    }

    pub fn self_weight(&self, coordinate: usize) -> f64 {
        self.self_weight[coordinate]
    }

    pub fn neighbor_weight(&self, coordinate: usize, msg: usize) -> f64 {
        self.neighbor[coordinate * self.n_msgs + msg]
    }

    /// The mixing row used at `coordinate`, keyed by sender id.
    pub fn row(&self, coordinate: usize, msgs: &[ParameterMessage]) -> ConsensusRow {
        let mut weights: Vec<(usize, f64)> = (0..self.n_msgs)
            .filter_map(|m| {
                let w = self.neighbor_weight(coordinate, m);
                (w != 0.0).then(|| (msgs[m].sender, w))
            })
            .collect();
        weights.sort_by_key(|&(j, _)| j);
        ConsensusRow {
            agent: self.agent,
            weights,
            self_weight: self.self_weight[coordinate],
        }
    }
}

/// Consensus step: at each coordinate `k`,
/// `out[k] = own[k] + Σ_m c_m[k] (payload_m[k] − own[k])`, which equals
/// `c_self[k] own[k] + Σ_m c_m[k] payload_m[k]` when the row sums to one.
pub fn consensus_combine(
    own: &[f64],
    msgs: &[ParameterMessage],
    weights: &CoordinateWeights,
) -> Result<Vec<f64>, ConsensusError> {
    let dim = own.len();
    if weights.dim() != dim || weights.n_msgs != msgs.len() {
        return Err(ConsensusError::WeightShape {
            dim: weights.dim(),
            msgs: weights.n_msgs,
            expected_dim: dim,
            expected_msgs: msgs.len(),
        });
    }
    for m in msgs {
        if m.payload.len() != dim {
            return Err(ConsensusError::PayloadLength {
                sender: m.sender,
                got: m.payload.len(),
                expected: dim,
            });
        }
    }
    let mut out = own.to_vec();
    for (k, o) in out.iter_mut().enumerate() {
        let self_w = weights.self_weight(k);
        let mut sum = self_w;
        let mut negative = self_w < 0.0;
        for m in 0..msgs.len() {
            let w = weights.neighbor_weight(k, m);
            negative |= w < 0.0;
            sum += w;
        }
        if negative || (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(ConsensusError::WeightNormalization { coordinate: k, sum });
        }
        let base = own[k];
        for (m, msg) in msgs.iter().enumerate() {
            let w = weights.neighbor_weight(k, m);
            if w != 0.0 {
                *o += w * (msg.payload[k] - base);
            }
        }
    }
    Ok(out)
}

/// First coordinate where `mixed` leaves the hull of `own` and the values
/// retained by `trimmed`, if any. `tol` is relative to the hull's magnitude.
pub fn hull_violation(
    own: &[f64],
    msgs: &[ParameterMessage],
    trimmed: &TrimOutcome,
    mixed: &[f64],
    tol: f64,
) -> Option<usize> {
    (0..own.len()).find(|&k| {
        let (lo, hi) = trimmed
            .retained_values(msgs, k)
            .fold((own[k], own[k]), |(lo, hi), v| (lo.min(v), hi.max(v)));
        let slack = tol * lo.abs().max(hi.abs()).max(1.0);
        mixed[k] < lo - slack || mixed[k] > hi + slack
    })
}
