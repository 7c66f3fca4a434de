//! Acceptance suite: one `[PASS]`/`[FAIL]` line per criterion.
//!
//! Runs as a plain binary (no libtest harness) so that every criterion is
//! reported even when an earlier one fails. Exit status is non-zero when any
//! criterion fails.

mod common;

use std::panic::{self, AssertUnwindSafe};
use std::sync::Arc;
use std::time::{Duration, Instant};

use common::*;
use netmarl_core::agent::{advantage, q_value, td_error, ActorParams, FeatureMap};
use netmarl_core::config::parse_config;
use netmarl_core::engine::{run, Simulation, SimulationParts, StepSizeSchedule};
use netmarl_core::graph::{is_r_robust, Graph, GraphSchedule};
use netmarl_core::mdp::{
    agent_return, generate_random_mdp, global_return, induced_chain, JointPolicy, RandomMdpSpec,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn main() {
    let criteria: [(&str, Duration, fn() -> Outcome); 6] = [
        ("AC1 formula fidelity against brute-force oracles", Duration::from_secs(60), ac1_formula_fidelity),
        ("AC2 engine matches straight-line reference bitwise", Duration::from_secs(10), ac2_reduction),
        ("AC3 cooperative learning improves on the uniform policy", Duration::from_secs(300), ac3_cooperative),
        ("AC4 one unfiltered adversary captures every regular critic", Duration::from_secs(300), ac4_attack),
        ("AC5 trimming on a 3-robust graph defeats the adversary", Duration::from_secs(300), ac5_defense),
        ("AC6 frozen actor: running averages match the oracle", Duration::from_secs(60), ac6_two_timescale),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failures = 0;
    for (name, budget, check) in criteria {
        let start = Instant::now();
        let result = panic::catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|e| {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_else(|| "panic".into());
                Err(format!("panicked: {msg}"))
            });
        let elapsed = start.elapsed();
        let result = match result {
            Ok(detail) if elapsed > budget => Err(format!(
                "{detail}; runtime {:.1}s exceeds budget {:.0}s",
                elapsed.as_secs_f64(),
                budget.as_secs_f64()
            )),
            other => other,
        };
        match result {
            Ok(detail) => println!("[PASS] {name} ({:.2}s): {detail}", elapsed.as_secs_f64()),
            Err(detail) => {
                failures += 1;
                println!("[FAIL] {name} ({:.2}s): {detail}", elapsed.as_secs_f64());
            }
        }
    }
    println!("acceptance: {} passed, {failures} failed", 6 - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}

fn ac1_formula_fidelity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xAC1);
    let instances = 150;
    let mut worst_chain: f64 = 0.0;
    let mut worst_j: f64 = 0.0;
    let mut worst_score_rel: f64 = 0.0;
    let mut worst_adv: f64 = 0.0;
    let mut worst_center: f64 = 0.0;
    let mut worst_td: f64 = 0.0;
    let mut worst_metro: f64 = 0.0;

    for _ in 0..instances {
        let inst = random_instance(&mut rng, 6, 3, 3);
        let mdp = inst.mdp();
        let policy = inst.policy();

        let chain = induced_chain(&mdp, &policy).map_err(|e| e.to_string())?;
        let oracle = brute_force_chain(&inst);
        for s in 0..inst.n_states {
            worst_chain = worst_chain.max(max_abs_diff(chain.row(s), &oracle[s]));
            let sum: f64 = chain.row(s).iter().sum();
            ensure!((sum - 1.0).abs() < 1e-10, "chain row {s} sums to {sum}");
        }
        let j = global_return(&mdp, &policy).map_err(|e| e.to_string())?;
        worst_j = worst_j.max((j - brute_force_global_return(&inst)).abs());

        // Score against central differences of log π with dense random
        // features on one agent's local action space.
        let n_actions = inst.arities[0];
        let dim = rng.random_range(2..6);
        let table: Vec<f64> = (0..inst.n_states * n_actions * dim)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let features = Arc::new(
            FeatureMap::from_table(inst.n_states, n_actions, dim, table.clone()).unwrap(),
        );
        let theta: Vec<f64> = (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect();
        let actor = ActorParams::with_theta(features.clone(), theta.clone());
        let s = rng.random_range(0..inst.n_states);
        let a = rng.random_range(0..n_actions);
        let psi = actor.score(s, a);
        let log_pi = |th: &[f64]| {
            let logits: Vec<f64> = (0..n_actions)
                .map(|b| (0..dim).map(|k| table[(s * n_actions + b) * dim + k] * th[k]).sum())
                .collect();
            softmax(&logits)[a].ln()
        };
        let h = 1e-5;
        for k in 0..dim {
            let mut plus = theta.clone();
            let mut minus = theta.clone();
            plus[k] += h;
            minus[k] -= h;
            let fd = (log_pi(&plus) - log_pi(&minus)) / (2.0 * h);
            let rel = (fd - psi[k]).abs() / psi[k].abs().max(1e-3);
            worst_score_rel = worst_score_rel.max(rel);
        }

        // Advantage of agent i with a tabular critic over joint actions.
        let joint = mdp.joint_actions();
        let n_joint = inst.n_joint();
        let critic = FeatureMap::tabular(inst.n_states, n_joint);
        let omega: Vec<f64> = (0..critic.dim()).map(|_| rng.random_range(-3.0..3.0)).collect();
        let i = rng.random_range(0..inst.n_agents());
        let ki = inst.arities[i];
        let local_features = Arc::new(FeatureMap::tabular(inst.n_states, ki));
        let local_theta: Vec<f64> = (0..local_features.dim())
            .map(|_| rng.random_range(-2.0..2.0))
            .collect();
        let local_actor = ActorParams::with_theta(local_features, local_theta.clone());
        let probs = softmax(&local_theta[s * ki..(s + 1) * ki]);
        let joints = enumerate_joint(&inst.arities);
        let a_joint = rng.random_range(0..n_joint);
        let replace = |b: usize| {
            let mut locals = joints[a_joint].clone();
            locals[i] = b;
            joints.iter().position(|l| *l == locals).unwrap()
        };
        let q = |aa: usize| omega[s * n_joint + aa];
        let baseline: f64 = (0..ki).map(|b| probs[b] * q(replace(b))).sum();
        let adv = advantage(&omega, &local_actor, &critic, joint, i, s, a_joint);
        worst_adv = worst_adv.max((adv - (q(a_joint) - baseline)).abs());
        let centered: f64 = (0..ki)
            .map(|b| {
                probs[b] * advantage(&omega, &local_actor, &critic, joint, i, s, replace(b))
            })
            .sum();
        worst_center = worst_center.max(centered.abs());

        // TD error with a dense critic.
        let cdim = rng.random_range(1..8);
        let ctable: Vec<f64> = (0..inst.n_states * n_joint * cdim)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let cfeat = FeatureMap::from_table(inst.n_states, n_joint, cdim, ctable.clone()).unwrap();
        let w: Vec<f64> = (0..cdim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (s2, a2) = (rng.random_range(0..inst.n_states), rng.random_range(0..n_joint));
        let dense_q = |ss: usize, aa: usize| -> f64 {
            (0..cdim).map(|k| ctable[(ss * n_joint + aa) * cdim + k] * w[k]).sum()
        };
        let (r, mu) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let delta = td_error(r, mu, q_value(&w, &cfeat, s2, a2), q_value(&w, &cfeat, s, a_joint));
        let expected = r - mu + dense_q(s2, a2) - dense_q(s, a_joint);
        worst_td = worst_td.max((delta - expected).abs());

        // Metropolis weights against degrees counted from an edge list.
        let n = rng.random_range(2..9);
        let mut edges = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                if rng.random_bool(0.4) {
                    edges.push((u, v));
                }
            }
        }
        let g = Graph::from_edges(n, &edges).unwrap();
        let matrix = GraphSchedule::fixed(g).metropolis_matrix(0);
        let mut deg = vec![0usize; n];
        for &(u, v) in &edges {
            deg[u] += 1;
            deg[v] += 1;
        }
        for u in 0..n {
            let mut off = 0.0;
            for v in 0..n {
                if u == v {
                    continue;
                }
                let linked = edges.contains(&(u.min(v), u.max(v)));
                let expected = if linked {
                    1.0 / (1.0 + deg[u].max(deg[v]) as f64)
                } else {
                    0.0
                };
                off += expected;
                worst_metro = worst_metro.max((matrix[u][v] - expected).abs());
            }
            worst_metro = worst_metro.max((matrix[u][u] - (1.0 - off)).abs());
        }
    }

    ensure!(worst_chain < 1e-12, "induced chain deviates by {worst_chain:e}");
    ensure!(worst_j < 1e-10, "global return deviates by {worst_j:e}");
    ensure!(worst_score_rel < 1e-6, "score relative error {worst_score_rel:e}");
    ensure!(worst_adv < 1e-12, "advantage deviates by {worst_adv:e}");
    ensure!(worst_center < 1e-10, "advantage not centered: {worst_center:e}");
    ensure!(worst_td < 1e-12, "td error deviates by {worst_td:e}");
    ensure!(worst_metro < 1e-12, "metropolis weights deviate by {worst_metro:e}");
    Ok(format!(
        "{instances} instances; max errors: chain {worst_chain:.1e}, J {worst_j:.1e}, score(rel) {worst_score_rel:.1e}, \
         advantage {worst_adv:.1e}, centering {worst_center:.1e}, td {worst_td:.1e}, metropolis {worst_metro:.1e}"
    ))
}

/// Parameters of both agents after one round of the reference loop.
#[derive(Debug, Clone, PartialEq)]
struct RefSnapshot {
    state: usize,
    theta: [Vec<f64>; 2],
    omega: [Vec<f64>; 2],
    omega_tilde: [Vec<f64>; 2],
    mu: [f64; 2],
}

fn reference_draw(probs: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.random();
    let mut cum = 0.0;
    let mut fallback = 0;
    for (k, p) in probs.iter().enumerate() {
        if *p > 0.0 {
            fallback = k;
        }
        cum += p;
        if u < cum {
            return k;
        }
    }
    fallback
}

fn reference_policy(theta: &[f64], s: usize) -> Vec<f64> {
    let l0 = theta[s * 2].clamp(-50.0, 50.0);
    let l1 = theta[s * 2 + 1].clamp(-50.0, 50.0);
    let m = l0.max(l1);
    let e0 = (l0 - m).exp();
    let e1 = (l1 - m).exp();
    let z = e0 + e1;
    vec![e0 / z, e1 / z]
}

/// Two agents, two local actions each, tabular critic over (s, a0 + 2 a1),
/// one edge between the agents, default polynomial step sizes.
fn reference_run(n_states: usize, transition: &[f64], rewards: &[f64], seed: u64, rounds: usize) -> Vec<RefSnapshot> {
    const NJ: usize = 4;
    let mut env = ChaCha8Rng::seed_from_u64(seed);
    env.set_stream(0);
    let mut rngs = [ChaCha8Rng::seed_from_u64(seed), ChaCha8Rng::seed_from_u64(seed)];
    rngs[0].set_stream(1);
    rngs[1].set_stream(2);

    let mut theta = [vec![0.0; n_states * 2], vec![0.0; n_states * 2]];
    let mut omega = [vec![0.0; n_states * NJ], vec![0.0; n_states * NJ]];
    let mut omega_tilde = omega.clone();
    let mut mu = [0.0f64; 2];
    let mut s = 0usize;
    let mut act = [0usize; 2];
    for i in 0..2 {
        act[i] = reference_draw(&reference_policy(&theta[i], s), &mut rngs[i]);
    }
    let mut out = Vec::with_capacity(rounds);

    for t in 0..rounds {
        let a = act[0] + 2 * act[1];
        let beta_w = 1.0 / ((t as f64) + 1.0).powf(0.65);
        let beta_t = 1.0 / ((t as f64) + 1.0).powf(0.85);
        let row = &transition[(s * NJ + a) * n_states..(s * NJ + a + 1) * n_states];
        let s_next = reference_draw(row, &mut env);
        let r = [rewards[s * NJ + a], rewards[(n_states + s) * NJ + a]];
        let mu_old = mu;
        for i in 0..2 {
            mu[i] = (1.0 - beta_w) * mu[i] + beta_w * r[i];
        }
        let mut act_next = [0usize; 2];
        for i in 0..2 {
            act_next[i] = reference_draw(&reference_policy(&theta[i], s_next), &mut rngs[i]);
        }
        let a_next = act_next[0] + 2 * act_next[1];

        for i in 0..2 {
            let q_curr = omega[i][s * NJ + a];
            let q_next = omega[i][s_next * NJ + a_next];
            let delta = r[i] - mu_old[i] + q_next - q_curr;
            omega_tilde[i] = omega[i].clone();
            omega_tilde[i][s * NJ + a] = q_curr + beta_w * delta;

            let pi = reference_policy(&theta[i], s);
            let mut baseline = 0.0;
            for b in 0..2 {
                let swapped = if i == 0 { b + 2 * act[1] } else { act[0] + 2 * b };
                baseline += pi[b] * omega[i][s * NJ + swapped];
            }
            let adv = q_curr - baseline;
            for b in 0..2 {
                let indicator = if b == act[i] { 1.0 } else { 0.0 };
                let psi = indicator - pi[b];
                let k = s * 2 + b;
                theta[i][k] = theta[i][k] + beta_t * adv * psi;
            }
        }

        for i in 0..2 {
            let j = 1 - i;
            omega[i] = omega_tilde[i]
                .iter()
                .zip(&omega_tilde[j])
                .map(|(own, other)| own + 0.5 * (other - own))
                .collect();
        }
        s = s_next;
        act = act_next;
        out.push(RefSnapshot {
            state: s,
            theta: theta.clone(),
            omega: omega.clone(),
            omega_tilde: omega_tilde.clone(),
            mu,
        });
    }
    out
}

fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

fn ac2_reduction() -> Outcome {
    let rounds = 1000;
    let mut checked = 0;
    for (mdp_seed, seed) in [(21u64, 7u64), (22, 8), (23, 9)] {
        let spec = RandomMdpSpec {
            n_agents: 2,
            n_states: 4,
            actions_per_agent: 2,
            reward_range: (0.0, 1.0),
            max_joint_actions: 64,
        };
        let mdp = generate_random_mdp(&spec, mdp_seed).map_err(|e| e.to_string())?;
        let file = mdp.to_file();
        let reference = reference_run(4, &file.transition, &file.rewards, seed, rounds);

        let parts = SimulationParts::new(mdp, GraphSchedule::fixed(Graph::complete(2)), seed);
        let mut sim = Simulation::from_parts(parts).map_err(|e| e.to_string())?;
        for (t, expected) in reference.iter().enumerate() {
            sim.step().map_err(|e| format!("engine failed at round {t}: {e}"))?;
            ensure!(sim.state() == expected.state, "state differs at round {t}");
            for i in 0..2 {
                let ag = &sim.agents()[i];
                ensure!(
                    ag.mu.to_bits() == expected.mu[i].to_bits(),
                    "mu of agent {i} differs at round {t}: {} vs {}",
                    ag.mu,
                    expected.mu[i]
                );
                ensure!(bits(&ag.actor.theta) == bits(&expected.theta[i]), "theta of agent {i} differs at round {t}");
                ensure!(
                    bits(&ag.critic.omega_tilde) == bits(&expected.omega_tilde[i]),
                    "omega_tilde of agent {i} differs at round {t}"
                );
                ensure!(bits(&ag.critic.omega) == bits(&expected.omega[i]), "omega of agent {i} differs at round {t}");
            }
            checked += 1;
        }
    }
    Ok(format!("{checked} rounds over 3 instances identical bit for bit"))
}

fn base_config(seed: u64, graph: &str, extra: &str) -> String {
    format!(
        r#"
n_agents = 5
seed = {seed}
rounds = 200000
log_interval = 20000
{extra}

[mdp]
kind = "random"
n_states = 8
actions_per_agent = 2
reward_range = [0.0, 1.0]
seed = {seed}

[graph]
topology = "{graph}"
"#
    )
}

fn ac3_cooperative() -> Outcome {
    let seeds = [1u64, 2, 3, 4, 5];
    let results: Vec<Result<(f64, f64, f64), String>> = std::thread::scope(|scope| {
        let handles: Vec<_> = seeds
            .iter()
            .map(|&seed| {
                scope.spawn(move || {
                    let config = parse_config(&base_config(seed, "ring", "")).map_err(|e| e.to_string())?;
                    let out = run(&config).map_err(|e| e.to_string())?;
                    let first = &out.log.rows[0];
                    let last = out.log.last().unwrap();
                    Ok((first.j_oracle, last.j_oracle, last.disagreement))
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let mut improved = 0;
    let mut lines = Vec::new();
    let mut worst_dis: f64 = 0.0;
    for (seed, r) in seeds.iter().zip(results) {
        let (j0, j1, dis) = r?;
        if j1 > j0 {
            improved += 1;
        }
        worst_dis = worst_dis.max(dis);
        lines.push(format!("seed {seed}: J {j0:.4} -> {j1:.4} (+{:.4}), disagreement {dis:.1e}", j1 - j0));
    }
    let detail = lines.join("; ");
    ensure!(improved >= 4, "only {improved}/5 seeds improved: {detail}");
    ensure!(worst_dis < 1e-2, "disagreement {worst_dis:e} too large: {detail}");
    Ok(format!("{improved}/5 improved; {detail}"))
}

fn ac4_attack() -> Outcome {
    let broadcast = 5.0;
    let extra = format!(
        "f = 0\n[adversaries]\nids = [0]\nenforce_f_local = false\n[adversaries.strategy]\nkind = \"constant\"\nvalue = {broadcast:?}\n"
    );
    let config = parse_config(&base_config(1, "ring", &extra)).map_err(|e| e.to_string())?;
    let mut sim = Simulation::new(&config).map_err(|e| e.to_string())?;
    for _ in 0..config.rounds {
        sim.step().map_err(|e| e.to_string())?;
    }
    let mut worst: f64 = 0.0;
    for agent in sim.agents().iter().filter(|a| a.is_regular()) {
        for w in &agent.critic.omega {
            worst = worst.max((w - broadcast).abs());
        }
    }
    ensure!(worst < 1e-3, "regular critics are {worst:e} from the broadcast");
    Ok(format!(
        "ring of 5, adversary 0 broadcasting {broadcast}, F = 0: max deviation of regular critics {worst:.2e}"
    ))
}

fn ac5_defense() -> Outcome {
    let broadcast = 100.0;
    let extra = format!(
        "f = 1\n[adversaries]\nids = [0]\n[adversaries.strategy]\nkind = \"constant\"\nvalue = {broadcast:?}\n"
    );
    let config = parse_config(&base_config(1, "complete", &extra)).map_err(|e| e.to_string())?;
    let mut sim = Simulation::new(&config).map_err(|e| e.to_string())?;
    let graph = &sim.schedule().phases()[0];
    ensure!(is_r_robust(graph, 3).map_err(|e| e.to_string())?, "graph is not 3-robust");
    ensure!(sim.schedule().is_r_local(&[0], 1), "adversary set is not 1-local");

    let regular = sim.regular_ids();
    let dim = sim.critic_features().dim();
    for t in 0..config.rounds {
        sim.step().map_err(|e| format!("round {t}: {e}"))?;
        let agents = sim.agents();
        for k in 0..dim {
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for &i in &regular {
                let v = agents[i].critic.omega_tilde[k];
                lo = lo.min(v);
                hi = hi.max(v);
            }
            for &i in &regular {
                let v = agents[i].critic.omega[k];
                ensure!(
                    v >= lo && v <= hi,
                    "round {t}: agent {i} coordinate {k} = {v} outside regular range [{lo}, {hi}]"
                );
            }
        }
    }
    let dis = sim.disagreement();
    let closest = regular
        .iter()
        .flat_map(|&i| sim.agents()[i].critic.omega.iter().map(|w| (w - broadcast).abs()))
        .fold(f64::INFINITY, f64::min);
    ensure!(dis < 1e-2, "final disagreement {dis:e}");
    ensure!(closest > 10.0 * dis, "a regular coordinate is {closest} from the broadcast");
    Ok(format!(
        "K5 (3-robust), F = 1, adversary broadcasting {broadcast}: no safety violation in {} rounds, \
         disagreement {dis:.2e}, closest regular coordinate {closest:.2} from the broadcast",
        config.rounds
    ))
}

fn ac6_two_timescale() -> Outcome {
    let spec = RandomMdpSpec {
        n_agents: 3,
        n_states: 5,
        actions_per_agent: 2,
        reward_range: (0.0, 1.0),
        max_joint_actions: 64,
    };
    let mdp = generate_random_mdp(&spec, 606).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(66);
    let thetas: Vec<Vec<f64>> = (0..3)
        .map(|_| (0..10).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
        .collect();

    let file = mdp.to_file();
    let policy_tables: Vec<Vec<Vec<f64>>> = thetas
        .iter()
        .map(|th| (0..5).map(|s| softmax(&th[s * 2..s * 2 + 2])).collect())
        .collect();
    let inst = RawInstance {
        n_states: 5,
        arities: vec![2, 2, 2],
        transition: file.transition.clone(),
        rewards: file.rewards.clone(),
        policy: policy_tables.clone(),
    };
    let policy = JointPolicy::new(policy_tables).map_err(|e| e.to_string())?;

    let mut parts = SimulationParts::new(mdp.clone(), GraphSchedule::fixed(Graph::ring(3)), 6);
    parts.actor_steps = StepSizeSchedule::Constant { value: 0.0 };
    parts.initial_theta = Some(thetas);
    let mut sim = Simulation::from_parts(parts).map_err(|e| e.to_string())?;
    let rounds = 1_000_000;
    for _ in 0..rounds {
        sim.step().map_err(|e| e.to_string())?;
    }
    let mut worst: f64 = 0.0;
    let mut lines = Vec::new();
    for i in 0..3 {
        let oracle = brute_force_average(&inst, |s, a| inst.r(i, s, a));
        let crate_oracle = agent_return(&mdp, &policy, i).map_err(|e| e.to_string())?;
        ensure!((oracle - crate_oracle).abs() < 1e-10, "oracles disagree for agent {i}");
        let mu = sim.agents()[i].mu;
        worst = worst.max((mu - oracle).abs());
        lines.push(format!("agent {i}: mu {mu:.4} vs {oracle:.4}"));
    }
    ensure!(worst < 1e-2, "max deviation {worst:e}: {}", lines.join("; "));
    Ok(format!("{rounds} rounds, max |mu - oracle| = {worst:.1e}; {}", lines.join("; ")))
}
