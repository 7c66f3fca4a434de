//! Independent reference computations shared by the integration tests.
//!
//! Nothing here calls into the crate's numerical routines: instances are
//! built from raw tensors and every quantity is recomputed by enumeration or
//! dense linear algebra written out in full.

#![allow(dead_code)]

use netmarl_core::mdp::{JointPolicy, Mdp};
use rand::Rng;

/// Raw tensors of a random instance, in the crate's file layout.
#[derive(Debug, Clone)]
pub struct RawInstance {
    pub n_states: usize,
    pub arities: Vec<usize>,
    pub transition: Vec<f64>,
    pub rewards: Vec<f64>,
    /// `[agent][state][local action]`
    pub policy: Vec<Vec<Vec<f64>>>,
}

impl RawInstance {
    pub fn n_agents(&self) -> usize {
        self.arities.len()
    }

    pub fn n_joint(&self) -> usize {
        self.arities.iter().product()
    }

    pub fn mdp(&self) -> Mdp {
        Mdp::new(
            self.n_states,
            self.arities.clone(),
            self.transition.clone(),
            self.rewards.clone(),
        )
        .expect("raw instance is valid")
    }

    pub fn policy(&self) -> JointPolicy {
        JointPolicy::new(self.policy.clone()).expect("raw policy is valid")
    }

    pub fn p(&self, s: usize, a: usize, s2: usize) -> f64 {
        self.transition[(s * self.n_joint() + a) * self.n_states + s2]
    }

    pub fn r(&self, i: usize, s: usize, a: usize) -> f64 {
        self.rewards[(i * self.n_states + s) * self.n_joint() + a]
    }
}

/// Local actions of every joint index, agent 0 varying fastest.
pub fn enumerate_joint(arities: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for &k in arities {
        let mut next = Vec::new();
        for b in 0..k {
            for prefix in &out {
                let mut v: Vec<usize> = prefix.clone();
                v.push(b);
                next.push(v);
            }
        }
        out = next;
    }
    // `out` now has the last agent varying fastest within the outer loop
    // order; re-sort so that index = Σ a_i Π_{j<i} k_j.
    let mut indexed: Vec<(usize, Vec<usize>)> = out
        .into_iter()
        .map(|locals| {
            let mut idx = 0;
            let mut stride = 1;
            for (i, &b) in locals.iter().enumerate() {
                idx += b * stride;
                stride *= arities[i];
            }
            (idx, locals)
        })
        .collect();
    indexed.sort_by_key(|(idx, _)| *idx);
    indexed.into_iter().map(|(_, v)| v).collect()
}

pub fn random_simplex<R: Rng>(rng: &mut R, k: usize, floor: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| floor + rng.random::<f64>()).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|x| x / total).collect()
}

/// Random instance with strictly positive transitions and policy.
pub fn random_instance<R: Rng>(
    rng: &mut R,
    max_states: usize,
    max_agents: usize,
    max_arity: usize,
) -> RawInstance {
    let n_states = rng.random_range(2..=max_states);
    let n_agents = rng.random_range(1..=max_agents);
    let arities: Vec<usize> = (0..n_agents).map(|_| rng.random_range(2..=max_arity)).collect();
    let n_joint: usize = arities.iter().product();
    let mut transition = Vec::new();
    for _ in 0..n_states * n_joint {
        transition.extend(random_simplex(rng, n_states, 0.01));
    }
    let rewards = (0..n_agents * n_states * n_joint)
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    let policy = arities
        .iter()
        .map(|&k| (0..n_states).map(|_| random_simplex(rng, k, 0.05)).collect())
        .collect();
    RawInstance {
        n_states,
        arities,
        transition,
        rewards,
        policy,
    }
}

/// `P^π(s' | s)` by explicit enumeration of every local-action tuple.
pub fn brute_force_chain(inst: &RawInstance) -> Vec<Vec<f64>> {
    let joints = enumerate_joint(&inst.arities);
    let n = inst.n_states;
    let mut chain = vec![vec![0.0; n]; n];
    for s in 0..n {
        for (a, locals) in joints.iter().enumerate() {
            let mut prob = 1.0;
            for (i, &b) in locals.iter().enumerate() {
                prob *= inst.policy[i][s][b];
            }
            for s2 in 0..n {
                chain[s][s2] += prob * inst.p(s, a, s2);
            }
        }
    }
    chain
}

/// Stationary distribution by Gaussian elimination on `(Pᵀ − I) d = 0`
/// with the last equation replaced by `Σ d = 1`.
pub fn stationary_by_elimination(chain: &[Vec<f64>]) -> Vec<f64> {
    let n = chain.len();
    let mut m = vec![vec![0.0; n + 1]; n];
    for (r, row) in m.iter_mut().enumerate() {
        for c in 0..n {
            row[c] = chain[c][r] - if r == c { 1.0 } else { 0.0 };
        }
    }
    for c in 0..n {
        m[n - 1][c] = 1.0;
    }
    m[n - 1][n] = 1.0;
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))
            .unwrap();
        m.swap(col, pivot);
        let p = m[col][col];
        for c in col..=n {
            m[col][c] /= p;
        }
        for r in 0..n {
            if r != col {
                let factor = m[r][col];
                if factor != 0.0 {
                    for c in col..=n {
                        m[r][c] -= factor * m[col][c];
                    }
                }
            }
        }
    }
    (0..n).map(|r| m[r][n]).collect()
}

/// `Σ_s d(s) Σ_a π(s, a) g(s, a)` by enumeration.
pub fn brute_force_average(inst: &RawInstance, g: impl Fn(usize, usize) -> f64) -> f64 {
    let d = stationary_by_elimination(&brute_force_chain(inst));
    let joints = enumerate_joint(&inst.arities);
    let mut total = 0.0;
    for s in 0..inst.n_states {
        for (a, locals) in joints.iter().enumerate() {
            let mut prob = 1.0;
            for (i, &b) in locals.iter().enumerate() {
                prob *= inst.policy[i][s][b];
            }
            total += d[s] * prob * g(s, a);
        }
    }
    total
}

pub fn brute_force_global_return(inst: &RawInstance) -> f64 {
    let n = inst.n_agents() as f64;
    brute_force_average(inst, |s, a| {
        (0..inst.n_agents()).map(|i| inst.r(i, s, a)).sum::<f64>() / n
    })
}

/// Softmax written out directly (no clamping; test logits stay small).
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.iter().map(|x| x / z).collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
