//! Per-agent local computations: softmax actor over linear logits, linear
//! critic, TD error, local advantage and the affine actor/critic/μ updates.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::consensus::AdversaryStrategy;
use crate::mdp::{sample_categorical, JointActionSpace};

/// Logits are clamped to `[-LOGIT_CLAMP, LOGIT_CLAMP]` before exponentiation.
pub const LOGIT_CLAMP: f64 = 50.0;

/// Feature map `φ(s, a) ∈ R^dim` over `n_states × n_actions` pairs.
///
/// Used both for the critic (actions are joint actions) and for each actor
/// (actions are the agent's local actions). One-hot maps are stored
/// implicitly.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    n_states: usize,
    n_actions: usize,
    dim: usize,
    // None: one-hot over (s, a). Otherwise laid out as [(s * n_actions + a) * dim + k].
    table: Option<Vec<f64>>,
}

impl FeatureMap {
    /// One-hot features, `dim = n_states * n_actions`.
    pub fn tabular(n_states: usize, n_actions: usize) -> Self {
        Self {
            n_states,
            n_actions,
            dim: n_states * n_actions,
            table: None,
        }
    }

    /// Gaussian random projection with entries `N(0, 1/dim)`.
    pub fn random_projection(n_states: usize, n_actions: usize, dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (dim as f64).sqrt();
        let table = (0..n_states * n_actions * dim)
            .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Self {
            n_states,
            n_actions,
            dim,
            table: Some(table),
        }
    }

    /// Arbitrary dense table laid out as `[(s * n_actions + a) * dim + k]`.
    pub fn from_table(n_states: usize, n_actions: usize, dim: usize, table: Vec<f64>) -> Option<Self> {
        (dim > 0 && table.len() == n_states * n_actions * dim && table.iter().all(|x| x.is_finite()))
            .then_some(Self {
                n_states,
                n_actions,
                dim,
                table: Some(table),
            })
    }

    pub fn is_tabular(&self) -> bool {
        self.table.is_none()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn row(&self, s: usize, a: usize) -> usize {
        s * self.n_actions + a
    }

    pub fn phi(&self, s: usize, a: usize) -> Vec<f64> {
        match &self.table {
            None => {
                let mut v = vec![0.0; self.dim];
                v[self.row(s, a)] = 1.0;
                v
            }
            Some(t) => {
                let start = self.row(s, a) * self.dim;
                t[start..start + self.dim].to_vec()
            }
        }
    }

    /// `φ(s, a)ᵀ w`.
    pub fn dot(&self, s: usize, a: usize, w: &[f64]) -> f64 {
        match &self.table {
            None => w[self.row(s, a)],
            Some(t) => {
                let start = self.row(s, a) * self.dim;
                dot(&t[start..start + self.dim], w)
            }
        }
    }

    /// `out += scale * φ(s, a)`.
    pub fn add_scaled(&self, s: usize, a: usize, scale: f64, out: &mut [f64]) {
        match &self.table {
            None => out[self.row(s, a)] += scale,
            Some(t) => {
                let start = self.row(s, a) * self.dim;
                for (o, f) in out.iter_mut().zip(&t[start..start + self.dim]) {
                    *o += scale * f;
                }
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Policy parameters `θ^i` of one agent with its local feature map.
#[derive(Debug, Clone, PartialEq)]
pub struct ActorParams {
    features: Arc<FeatureMap>,
    pub theta: Vec<f64>,
}

impl ActorParams {
    pub fn new(features: Arc<FeatureMap>) -> Self {
        let theta = vec![0.0; features.dim()];
        Self { features, theta }
    }

    pub fn with_theta(features: Arc<FeatureMap>, theta: Vec<f64>) -> Self {
        assert_eq!(theta.len(), features.dim(), "theta length must match features");
        Self { features, theta }
    }

    pub fn features(&self) -> &FeatureMap {
        &self.features
    }

    pub fn n_actions(&self) -> usize {
        self.features.n_actions()
    }

    pub fn logits(&self, s: usize) -> Vec<f64> {
        (0..self.n_actions())
            .map(|b| self.features.dot(s, b, &self.theta).clamp(-LOGIT_CLAMP, LOGIT_CLAMP))
            .collect()
    }

    /// Softmax over the clamped logits, with max-subtraction.
    pub fn policy_probs(&self, s: usize) -> Vec<f64> {
        let logits = self.logits(s);
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        exps.iter().map(|e| e / total).collect()
    }

    pub fn log_prob(&self, s: usize, a: usize) -> f64 {
        let logits = self.logits(s);
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let total: f64 = logits.iter().map(|l| (l - max).exp()).sum();
        logits[a] - max - total.ln()
    }

    /// `ψ = ∇_θ log π(s, a) = φ(s, a) − Σ_b π(s, b) φ(s, b)`.
    pub fn score(&self, s: usize, a: usize) -> Vec<f64> {
        let probs = self.policy_probs(s);
        let mut psi = self.features.phi(s, a);
        for (b, p) in probs.iter().enumerate() {
            self.features.add_scaled(s, b, -p, &mut psi);
        }
        psi
    }

    pub fn select_action<R: Rng + ?Sized>(&self, s: usize, rng: &mut R) -> usize {
        sample_categorical(&self.policy_probs(s), rng)
    }
}

/// Critic parameters: `omega` is the consensus value, `omega_tilde` the
/// value after the local critic step and before mixing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticParams {
    pub omega: Vec<f64>,
    pub omega_tilde: Vec<f64>,
}

impl CriticParams {
    pub fn zeros(dim: usize) -> Self {
        Self {
            omega: vec![0.0; dim],
            omega_tilde: vec![0.0; dim],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Role {
    Regular,
    Adversarial(AdversaryStrategy),
}

impl Role {
    pub fn is_regular(&self) -> bool {
        matches!(self, Role::Regular)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub id: usize,
    pub actor: ActorParams,
    pub critic: CriticParams,
    pub mu: f64,
    pub role: Role,
}

impl AgentState {
    pub fn new(id: usize, actor_features: Arc<FeatureMap>, critic_dim: usize, role: Role) -> Self {
        Self {
            id,
            actor: ActorParams::new(actor_features),
            critic: CriticParams::zeros(critic_dim),
            mu: 0.0,
            role,
        }
    }

    pub fn is_regular(&self) -> bool {
        self.role.is_regular()
    }

    pub fn is_finite(&self) -> bool {
        self.mu.is_finite()
            && self.actor.theta.iter().all(|x| x.is_finite())
            && self.critic.omega.iter().all(|x| x.is_finite())
            && self.critic.omega_tilde.iter().all(|x| x.is_finite())
    }
}

/// `Q(s, a; ω) = φ(s, a)ᵀ ω`.
pub fn q_value(omega: &[f64], features: &FeatureMap, s: usize, a: usize) -> f64 {
    features.dot(s, a, omega)
}

/// `δ = r − μ + Q(s', a'; ω) − Q(s, a; ω)`.
pub fn td_error(reward: f64, mu: f64, q_next: f64, q_curr: f64) -> f64 {
    reward - mu + q_next - q_curr
}

/// `ω̃ = ω + β_ω δ ∇_ω Q`.
pub fn critic_local_step(omega: &[f64], beta: f64, delta: f64, grad_q: &[f64]) -> Vec<f64> {
    omega
        .iter()
        .zip(grad_q)
        .map(|(w, g)| w + beta * delta * g)
        .collect()
}

/// Local advantage of agent `agent` at `(s, a)`:
/// `Q(s, a) − Σ_b π^i(s, b) Q(s, (b, a^{-i}))`, other agents' actions fixed.
pub fn advantage(
    omega: &[f64],
    actor: &ActorParams,
    features: &FeatureMap,
    joint: &JointActionSpace,
    agent: usize,
    s: usize,
    a: usize,
) -> f64 {
    let q_sa = q_value(omega, features, s, a);
    let probs = actor.policy_probs(s);
    let mut baseline = 0.0;
    for (b, p) in probs.iter().enumerate() {
        baseline += p * q_value(omega, features, s, joint.with_local(a, agent, b));
    }
    q_sa - baseline
}

/// `θ' = θ + β_θ A ψ`.
pub fn actor_step(theta: &[f64], beta: f64, advantage: f64, psi: &[f64]) -> Vec<f64> {
    theta
        .iter()
        .zip(psi)
        .map(|(t, p)| t + beta * advantage * p)
        .collect()
}

/// `μ' = (1 − β) μ + β r`.
pub fn mu_update(mu: f64, beta: f64, reward: f64) -> f64 {
    (1.0 - beta) * mu + beta * reward
}
