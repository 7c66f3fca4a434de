//! Experiment driver behind the `netmarl` binary: single runs, parallel
//! sweeps and graph diagnostics, each writing plain-text artifacts.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use netmarl_core::config::{check_graph, parse_config, ExperimentConfig, GraphReport, MdpSpec};
use netmarl_core::engine::{run_with, MetricsRow, RunOutput, TrajectoryLog};
use serde::{Deserialize, Serialize};

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "NETMARL_OUT";

pub const TRAJECTORY_FILE: &str = "trajectory.jsonl";
pub const METRICS_CSV_FILE: &str = "metrics.csv";
pub const FINAL_PARAMS_FILE: &str = "final_params.json";
pub const SUMMARY_FILE: &str = "summary.json";
pub const RUN_INFO_FILE: &str = "run_info.json";
pub const CONFIG_ECHO_FILE: &str = "config.toml";
pub const SWEEP_SUMMARY_FILE: &str = "sweep_summary.json";

/// Output directory: explicit flag, then the config's `output`, then
/// `$NETMARL_OUT`, then `./runs`.
pub fn resolve_out_dir(flag: Option<&Path>, config_output: Option<&Path>) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| config_output.map(Path::to_path_buf))
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs"))
}

/// Deterministic digest of a run; identical for reruns of the same config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub config_hash: String,
    pub seed: u64,
    pub adversaries: Vec<usize>,
    pub rounds_executed: u64,
    pub stopped_early: bool,
    pub initial_j_oracle: f64,
    pub final_j_oracle: f64,
    pub final_disagreement: f64,
    pub final_mu: Vec<f64>,
}

impl RunSummary {
    pub fn from_output(out: &RunOutput) -> Self {
        let first = out.log.rows.first().expect("log has an initial row");
        let last = out.log.last().expect("log has an initial row");
        Self {
            config_hash: out.log.meta.config_hash.clone(),
            seed: out.log.meta.seed,
            adversaries: out.log.meta.adversaries.clone(),
            rounds_executed: out.rounds_executed,
            stopped_early: out.stopped_early,
            initial_j_oracle: first.j_oracle,
            final_j_oracle: last.j_oracle,
            final_disagreement: last.disagreement,
            final_mu: last.mu.clone(),
        }
    }
}

/// Wall-clock facts kept apart from the deterministic artifacts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunInfo {
    pub started_at: String,
    pub finished_at: String,
    pub wall_seconds: f64,
    pub version: String,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Plot-friendly table of the logged rows.
pub fn metrics_csv(log: &TrajectoryLog) -> Result<String> {
    let n_agents = log.meta.config.n_agents;
    let mut writer = csv::Writer::from_writer(Vec::new());
    let mut header = vec![
        "round".to_string(),
        "j_oracle".into(),
        "avg_reward_window".into(),
        "disagreement".into(),
    ];
    header.extend((0..n_agents).map(|i| format!("mu_{i}")));
    header.push("trimmed_total".into());
    writer.write_record(&header)?;
    for row in &log.rows {
        let mut record = vec![
            row.round.to_string(),
            row.j_oracle.to_string(),
            row.avg_reward_window.map(|x| x.to_string()).unwrap_or_default(),
            row.disagreement.to_string(),
        ];
        record.extend(row.mu.iter().map(f64::to_string));
        record.push(row.trimmed.iter().map(|t| t.count).sum::<u64>().to_string());
        writer.write_record(&record)?;
    }
    Ok(String::from_utf8(writer.into_inner()?)?)
}

/// Runs one experiment and writes its artifacts into `out_dir`:
/// the resolved config, trajectory log, metrics table, final parameters,
/// summary and run info.
pub fn run_experiment(
    config: &ExperimentConfig,
    out_dir: &Path,
    mut on_row: impl FnMut(&MetricsRow),
) -> Result<RunSummary> {
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let started_at = chrono::Utc::now();
    let clock = Instant::now();
    let output = run_with(config, &mut on_row)?;
    let finished_at = chrono::Utc::now();

    fs::write(out_dir.join(CONFIG_ECHO_FILE), config.to_toml())?;
    fs::write(out_dir.join(TRAJECTORY_FILE), output.log.to_jsonl())?;
    fs::write(out_dir.join(METRICS_CSV_FILE), metrics_csv(&output.log)?)?;
    write_json(&out_dir.join(FINAL_PARAMS_FILE), &output.final_agents)?;
    let summary = RunSummary::from_output(&output);
    write_json(&out_dir.join(SUMMARY_FILE), &summary)?;
    write_json(
        &out_dir.join(RUN_INFO_FILE),
        &RunInfo {
            started_at: started_at.to_rfc3339(),
            finished_at: finished_at.to_rfc3339(),
            wall_seconds: clock.elapsed().as_secs_f64(),
            version: env!("CARGO_PKG_VERSION").to_string(),
        },
    )?;
    Ok(summary)
}

/// Loads a config and applies an optional seed override.
pub fn load_config(path: &Path, seed: Option<u64>) -> Result<ExperimentConfig> {
    let mut config = ExperimentConfig::load(path)?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    Ok(config)
}

/// Sweep description: a base config plus named override tables.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepFile {
    /// Base config, relative to the sweep file.
    pub base: PathBuf,
    /// Master seed; run `i` uses `seed + i`. Defaults to the base seed.
    #[serde(default)]
    pub seed: Option<u64>,
    pub runs: Vec<SweepEntry>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepEntry {
    pub name: String,
    #[serde(default)]
    pub overrides: toml::Table,
}

/// A fully resolved member of a sweep.
#[derive(Debug, Clone)]
pub struct SweepPlan {
    pub index: usize,
    pub name: String,
    pub dir_name: String,
    pub config: ExperimentConfig,
}

/// Recursively overlays `over` onto `base`; tables merge, all else replaces.
pub fn deep_merge(base: &mut toml::Table, over: &toml::Table) {
    for (key, value) in over {
        match (base.get_mut(key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => deep_merge(b, o),
            _ => {
                base.insert(key.clone(), value.clone());
            }
        }
    }
}

fn dir_name(index: usize, name: &str) -> String {
    let clean: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    format!("run-{index:03}-{clean}")
}

/// Resolves every run of a sweep file, validating each merged config.
pub fn plan_sweep(path: &Path, seed_override: Option<u64>) -> Result<Vec<SweepPlan>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let sweep: SweepFile = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    if sweep.runs.is_empty() {
        bail!("{}: sweep has no runs", path.display());
    }
    let dir = std::path::absolute(path)?
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();
    let base = ExperimentConfig::load(&dir.join(&sweep.base))?;
    let master = seed_override.or(sweep.seed).unwrap_or(base.seed);
    let base_table = toml::Table::try_from(&base)?;

    let mut plans = Vec::with_capacity(sweep.runs.len());
    for (index, entry) in sweep.runs.iter().enumerate() {
        let mut table = base_table.clone();
        deep_merge(&mut table, &entry.overrides);
        table.insert(
            "seed".into(),
            toml::Value::Integer(master.wrapping_add(index as u64) as i64),
        );
        let merged = toml::to_string(&table)?;
        let mut config = parse_config(&merged)
            .with_context(|| format!("sweep run {index} ({})", entry.name))?;
        if let MdpSpec::File { path: mdp_path, .. } = &mut config.mdp {
            if mdp_path.is_relative() {
                *mdp_path = dir.join(&*mdp_path);
            }
        }
        config.output = None;
        plans.push(SweepPlan {
            index,
            name: entry.name.clone(),
            dir_name: dir_name(index, &entry.name),
            config,
        });
    }
    Ok(plans)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepOutcome {
    pub index: usize,
    pub name: String,
    pub seed: u64,
    pub dir: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub summary: Option<RunSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Executes the plans on a pool of `jobs` threads; each run writes only its
/// own directory under `out_dir`. Outcomes are returned in plan order and
/// also written to `sweep_summary.json`.
pub fn run_sweep(plans: &[SweepPlan], out_dir: &Path, jobs: usize, quiet: bool) -> Result<Vec<SweepOutcome>> {
    use rayon::prelude::*;
    fs::create_dir_all(out_dir)?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build()?;
    let outcomes: Vec<SweepOutcome> = pool.install(|| {
        plans
            .par_iter()
            .map(|plan| {
                let result = run_experiment(&plan.config, &out_dir.join(&plan.dir_name), |_| {});
                if !quiet {
                    match &result {
                        Ok(s) => eprintln!(
                            "[{}] {}: J {:.6} -> {:.6}, disagreement {:.3e}",
                            plan.index, plan.name, s.initial_j_oracle, s.final_j_oracle, s.final_disagreement
                        ),
                        Err(e) => eprintln!("[{}] {}: FAILED: {e:#}", plan.index, plan.name),
                    }
                }
                let (summary, error) = match result {
                    Ok(s) => (Some(s), None),
                    Err(e) => (None, Some(format!("{e:#}"))),
                };
                SweepOutcome {
                    index: plan.index,
                    name: plan.name.clone(),
                    seed: plan.config.seed,
                    dir: plan.dir_name.clone(),
                    summary,
                    error,
                }
            })
            .collect()
    });
    write_json(&out_dir.join(SWEEP_SUMMARY_FILE), &outcomes)?;
    Ok(outcomes)
}

/// Human-readable rendering of a graph report.
pub fn render_graph_report(report: &GraphReport) -> String {
    let yes_no = |b: bool| if b { "yes" } else { "no" };
    let mut out = String::new();
    for w in report.warnings.iter().filter(|w| w.starts_with("WARNING")) {
        let _ = writeln!(out, "{w}");
    }
    let _ = writeln!(
        out,
        "nodes: {}  phases: {}  connected: {}",
        report.n_nodes,
        report.phases.len(),
        yes_no(report.union_connected)
    );
    for (i, p) in report.phases.iter().enumerate() {
        let _ = writeln!(
            out,
            "phase {i}: connected {}, degree min {} / mean {:.2} / max {}, degrees {:?}",
            yes_no(p.connected),
            p.min_degree,
            p.mean_degree,
            p.max_degree,
            p.degrees
        );
    }
    let local = match report.f_local {
        Some(b) => b.to_string(),
        None => "unknown (placement failed)".into(),
    };
    let _ = writeln!(out, "adversaries: {:?}  F = {}  F-local: {local}", report.adversaries, report.f);
    match report.robustness {
        Some(r) => {
            let _ = writeln!(out, "max robustness: {r} ({r}-robust: true, {}-robust: false)", r + 1);
        }
        None => {
            let _ = writeln!(out, "max robustness: not checked");
        }
    }
    let g: Vec<String> = report
        .adversarial_fraction
        .iter()
        .enumerate()
        .map(|(i, x)| format!("{i}:{x:.3}"))
        .collect();
    let _ = writeln!(out, "adversarial neighbor fraction g: {}  (max {:.3})", g.join(" "), report.max_adversarial_fraction);
    for w in report.warnings.iter().filter(|w| !w.starts_with("WARNING")) {
        let _ = writeln!(out, "note: {w}");
    }
    out
}

pub fn graph_report(config: &ExperimentConfig) -> Result<GraphReport> {
    Ok(check_graph(config)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deep_merge_overlays_nested_tables() {
        let mut base: toml::Table = toml::from_str(
            "n_agents = 5\n[graph]\ntopology = \"ring\"\nrequire_connected = true\n[adversaries]\ncount = 1\n",
        )
        .unwrap();
        let over: toml::Table =
            toml::from_str("n_agents = 7\n[graph]\ntopology = \"complete\"\n[stop]\npatience = 3\n").unwrap();
        deep_merge(&mut base, &over);
        let expected: toml::Table = toml::from_str(
            "n_agents = 7\n[graph]\ntopology = \"complete\"\nrequire_connected = true\n\
             [adversaries]\ncount = 1\n[stop]\npatience = 3\n",
        )
        .unwrap();
        assert_eq!(base, expected);
    }

    #[test]
    fn run_directories_are_sanitized() {
        assert_eq!(dir_name(3, "f=1 / two"), "run-003-f_1___two");
    }
}
