use std::fs::File;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};

use rsc_core::envs::Variant;
use rsc_core::error::{Result, RscError};
use rsc_core::hard_instance::{build_rsc_mdp, build_standard_mdp, verify_theorem2 as check_theorem2};
use rsc_core::mdp::{optimal_policy, FiniteMdp};
use rsc_core::robust::robust_value_iteration_rmdp;
use rsc_core::scmdp::{marginalize, robust_sc_value_iteration, ScMdpSpec};
use rsc_core::trainer::{
    evaluate_with, load_agent, save_agent_with, save_scm_with, sweep_csv, train_with_dump, Augmenter, SweepRow,
    TrainConfig,
};
use serde_json::{json, Value};

use crate::config::{ExperimentConfig, RobustKind, SolverSection, Theorem2Section, SEED_ENV};
use crate::output::{emit, provenance, short_float, stamp_csv, write_json, write_text};
use crate::InstanceKind;

fn read_json(path: &Path) -> Result<(String, Value)> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| RscError::Invalid(format!("cannot read {}: {e}", path.display())))?;
    let value = serde_json::from_str(&text).map_err(|e| RscError::Invalid(format!("{}: {e}", path.display())))?;
    Ok((text, value))
}

fn optional_config(path: Option<PathBuf>) -> Result<Option<ExperimentConfig>> {
    path.map(|p| ExperimentConfig::load(&p)).transpose()
}

fn label(labels: Option<&[Vec<i64>]>, s: usize) -> String {
    match labels {
        Some(l) => format!("[{}]", l[s].iter().map(i64::to_string).collect::<Vec<_>>().join(",")),
        None => format!("s{s}"),
    }
}

enum Instance {
    Plain(FiniteMdp),
    Confounded(ScMdpSpec),
}

pub fn solve(
    instance: Option<PathBuf>,
    sigma: Option<f64>,
    robust: Option<RobustKind>,
    config: Option<PathBuf>,
    out: Option<PathBuf>,
) -> Result<()> {
    let base = optional_config(config)?.and_then(|c| c.solver);
    let section = SolverSection {
        instance: instance
            .or_else(|| base.as_ref().map(|b| b.instance.clone()))
            .ok_or_else(|| RscError::Invalid("no instance file given".into()))?,
        sigma: sigma.or(base.as_ref().map(|b| b.sigma)).unwrap_or(0.0),
        robust: robust.or(base.as_ref().map(|b| b.robust)).unwrap_or(RobustKind::None),
    };
    let resolved = ExperimentConfig {
        solver: Some(section.clone()),
        ..Default::default()
    };
    resolved.validate()?;

    let (text, value) = read_json(&section.instance)?;
    let wrap = |e: RscError| match e {
        RscError::Json(j) => RscError::Invalid(format!("{}: {j}", section.instance.display())),
        other => other,
    };
    let parsed = if value.get("confounder_size").is_some() {
        Instance::Confounded(ScMdpSpec::from_json(&text).map_err(wrap)?)
    } else {
        Instance::Plain(FiniteMdp::from_json(&text).map_err(wrap)?)
    };
    let (value_1, labels, report) = match (&parsed, section.robust) {
        (Instance::Plain(_), RobustKind::Rsc) => {
            return Err(RscError::Invalid(
                "robust=rsc needs a confounded instance (with confounder_size)".into(),
            ))
        }
        (Instance::Confounded(spec), RobustKind::Rsc) => {
            let r = robust_sc_value_iteration(spec, section.sigma)?;
            (r.values.v[0].clone(), spec.state_labels().map(<[_]>::to_vec), serde_json::to_value(&r)?)
        }
        (inst, kind) => {
            let mdp = match inst {
                Instance::Plain(m) => m.clone(),
                Instance::Confounded(spec) => marginalize(spec)?,
            };
            let labels = mdp.state_labels().map(<[_]>::to_vec);
            if kind == RobustKind::Rmdp {
                let r = robust_value_iteration_rmdp(&mdp, section.sigma)?;
                (r.values.v[0].clone(), labels, serde_json::to_value(&r)?)
            } else {
                let (policy, values) = optimal_policy(&mdp);
                let v1 = values.v[0].clone();
                (v1, labels, json!({ "values": values, "policy": policy }))
            }
        }
    };
    if let Some(v) = value_1.iter().find(|v| !v.is_finite()) {
        return Err(RscError::NonFinite(format!("value {v} at t = 1")));
    }
    emit(&format!("V*_1({}) = {}\n", label(labels.as_deref(), 0), short_float(value_1[0])));
    if let Some(path) = out {
        write_json(&path, &resolved, json!({ "report": report }))?;
    }
    Ok(())
}

pub fn verify_theorem2(
    horizon: Option<usize>,
    sigma1: Option<f64>,
    sigma2: Option<f64>,
    grid: bool,
    config: Option<PathBuf>,
    out: Option<PathBuf>,
) -> Result<()> {
    let base = optional_config(config)?.and_then(|c| c.theorem2);
    let missing = |what: &str| RscError::Invalid(format!("missing --{what}"));
    let section = Theorem2Section {
        horizon: horizon.or(base.as_ref().map(|b| b.horizon)).ok_or_else(|| missing("T"))?,
        sigma1: sigma1.or(base.as_ref().map(|b| b.sigma1)).ok_or_else(|| missing("sigma1"))?,
        sigma2: match sigma2.or(base.as_ref().map(|b| b.sigma2)) {
            Some(s) => s,
            None if grid => 1.0,
            None => return Err(missing("sigma2")),
        },
        grid: grid || base.as_ref().is_some_and(|b| b.grid),
    };
    let resolved = ExperimentConfig {
        theorem2: Some(section.clone()),
        ..Default::default()
    };
    resolved.validate()?;

    let sigmas: Vec<f64> = if section.grid {
        (0..10).map(|i| (55 + 5 * i) as f64 / 100.0).collect()
    } else {
        vec![section.sigma2]
    };
    let mut reports = Vec::with_capacity(sigmas.len());
    let mut table = String::from("T,sigma1,sigma2,V_rsc_star,V_rmdp_policy,gap,bound,holds\n");
    for s2 in sigmas {
        let r = check_theorem2(section.horizon, section.sigma1, s2)?;
        table.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.horizon, r.sigma1, r.sigma2, r.v_rsc_star, r.v_rmdp_policy, r.gap, r.bound, r.holds
        ));
        reports.push(r);
    }
    emit(&stamp_csv(&table, &resolved)?);
    if let Some(path) = out {
        write_json(&path, &resolved, json!({ "reports": reports }))?;
    }
    Ok(())
}

fn load_with_dir(path: &Path, output_dir: Option<PathBuf>) -> Result<ExperimentConfig> {
    let mut config = ExperimentConfig::load(path)?;
    if let Some(dir) = output_dir {
        config.output_dir = dir;
    }
    Ok(config)
}

fn print_config(config: &ExperimentConfig) -> Result<()> {
    emit(&format!("{}\n", serde_json::to_string_pretty(config)?));
    Ok(())
}

/// Adds provenance to the manifests the trainer writes when it diverges.
fn stamp_dumps(dir: &Path, stamp: &Value) {
    for stem in ["diverged_agent", "diverged_scm"] {
        let path = dir.join(format!("{stem}.json"));
        let Ok(text) = std::fs::read_to_string(&path) else { continue };
        let Ok(mut manifest) = serde_json::from_str::<Value>(&text) else { continue };
        manifest["meta"]["provenance"] = stamp.clone();
        if let Ok(text) = serde_json::to_string_pretty(&manifest) {
            let _ = std::fs::write(&path, text);
        }
    }
}

pub fn train(path: &Path, output_dir: Option<PathBuf>, dry_run: bool) -> Result<()> {
    let config = load_with_dir(path, output_dir)?;
    let train_config = config.train_section()?;
    if dry_run {
        return print_config(&config);
    }
    let dir = &config.output_dir;
    std::fs::create_dir_all(dir)?;
    let stamp = provenance(&config)?;
    let outcome = match train_with_dump(train_config, Some(dir)) {
        Ok(o) => o,
        Err(e) => {
            stamp_dumps(dir, &stamp);
            return Err(e);
        }
    };
    let m = &outcome.metrics;
    write_text(&dir.join("metrics.csv"), &stamp_csv(&m.to_csv(), &config)?)?;
    save_agent_with(&dir.join("agent"), &outcome.agent, Some(stamp.clone()))?;
    if let Some(scm) = &outcome.scm {
        save_scm_with(&dir.join("scm"), scm, Some(stamp))?;
    }
    write_json(
        &dir.join("summary.json"),
        &config,
        json!({
            "final_nominal": m.final_nominal,
            "final_shifted": m.final_shifted,
            "updates": m.updates,
            "wall_clock_secs": m.wall_clock_secs,
        }),
    )?;
    emit(&format!(
        "final nominal {:.4} shifted {:.4}; outputs in {}\n",
        m.final_nominal,
        m.final_shifted,
        dir.display()
    ));
    Ok(())
}

pub fn eval(
    path: &Path,
    checkpoint: &Path,
    episodes: Option<usize>,
    seed: Option<u64>,
    reference: Option<f64>,
    dry_run: bool,
) -> Result<()> {
    let config = ExperimentConfig::load(path)?;
    let tc = config.train_section()?;
    if dry_run {
        return print_config(&config);
    }
    let agent = load_agent(checkpoint)?;
    if agent.obs_dim != tc.env.obs_dim() || agent.action_dim != tc.env.action_dim() {
        return Err(RscError::Invalid(format!(
            "checkpoint expects {} observation dims, environment has {}",
            agent.obs_dim,
            tc.env.obs_dim()
        )));
    }
    let episodes = episodes.unwrap_or(tc.eval_episodes);
    let seed = seed.unwrap_or(tc.eval_seed);
    let mut results = serde_json::Map::new();
    for (name, variant) in [("nominal", Variant::Nominal), ("shifted", Variant::Shifted)] {
        let env = tc.env.with_variant(variant);
        let summary = evaluate_with(&env, episodes, seed, reference, |obs| agent.act_deterministic(obs))?;
        results.insert(name.into(), serde_json::to_value(summary)?);
    }
    let mut doc = provenance(&config)?;
    let obj = doc.as_object_mut().expect("provenance is an object");
    obj.insert("checkpoint".into(), json!(checkpoint));
    obj.insert("episodes".into(), json!(episodes));
    obj.insert("seed".into(), json!(seed));
    obj.extend(results);
    emit(&format!("{}\n", serde_json::to_string_pretty(&doc)?));
    Ok(())
}

struct Run {
    beta: f64,
    seed: u64,
    dir: PathBuf,
}

fn run_child(exe: &Path, run: &Run) -> Result<std::process::Child> {
    let log = File::create(run.dir.join("log.txt"))?;
    Ok(Command::new(exe)
        .arg("train")
        .arg(run.dir.join("config.json"))
        .env_remove(SEED_ENV)
        .stdin(Stdio::null())
        .stdout(log.try_clone()?)
        .stderr(log)
        .spawn()?)
}

fn read_summary(dir: &Path) -> Result<(f64, f64)> {
    let (_, v) = read_json(&dir.join("summary.json"))?;
    let get = |k: &str| {
        v[k].as_f64()
            .ok_or_else(|| RscError::Invalid(format!("{}/summary.json lacks {k}", dir.display())))
    };
    Ok((get("final_nominal")?, get("final_shifted")?))
}

pub fn sweep(path: &Path, output_dir: Option<PathBuf>, jobs: Option<usize>, dry_run: bool) -> Result<()> {
    let config = load_with_dir(path, output_dir)?;
    let base = config.train_section()?;
    let sweep = config.sweep_section()?;
    if dry_run {
        return print_config(&config);
    }
    let seeds = sweep.seeds.clone().unwrap_or_else(|| vec![base.seed]);
    let mut runs = Vec::new();
    for &beta in &sweep.betas {
        for &seed in &seeds {
            let dir = config.output_dir.join(format!("beta_{beta}_seed_{seed}"));
            let child = ExperimentConfig {
                output_dir: dir.clone(),
                train: Some(TrainConfig {
                    beta,
                    seed,
                    augmenter: Augmenter::Rsc,
                    ..base.clone()
                }),
                ..Default::default()
            };
            write_text(&dir.join("config.json"), &serde_json::to_string_pretty(&child)?)?;
            runs.push(Run { beta, seed, dir });
        }
    }

    let exe = std::env::current_exe()?;
    let jobs = jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .max(1);
    let mut failures = Vec::new();
    for wave in runs.chunks(jobs) {
        let children = wave.iter().map(|r| run_child(&exe, r)).collect::<Result<Vec<_>>>()?;
        for (run, mut child) in wave.iter().zip(children) {
            let status = child.wait()?;
            eprintln!("beta {} seed {}: {}", run.beta, run.seed, status);
            if !status.success() {
                failures.push((run.dir.clone(), status.code()));
            }
        }
    }
    if let Some((dir, code)) = failures.first() {
        let msg = format!("{} run(s) failed, first in {} (see log.txt)", failures.len(), dir.display());
        return Err(if *code == Some(2) { RscError::NonFinite(msg) } else { RscError::Invalid(msg) });
    }

    let mut per_run = String::from("beta,seed,nominal_return,shifted_return\n");
    let mut rows = Vec::new();
    for &beta in &sweep.betas {
        let (mut nominal, mut shifted) = (Vec::new(), Vec::new());
        for run in runs.iter().filter(|r| r.beta == beta) {
            let (n, s) = read_summary(&run.dir)?;
            per_run.push_str(&format!("{beta},{},{n},{s}\n", run.seed));
            nominal.push(n);
            shifted.push(s);
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        rows.push(SweepRow {
            beta,
            nominal_return: mean(&nominal),
            shifted_return: mean(&shifted),
            nominal_per_seed: nominal,
            shifted_per_seed: shifted,
        });
    }
    let dir = &config.output_dir;
    write_text(&dir.join("sweep.csv"), &stamp_csv(&sweep_csv(&rows), &config)?)?;
    write_text(&dir.join("sweep_runs.csv"), &stamp_csv(&per_run, &config)?)?;
    write_json(&dir.join("sweep.json"), &config, json!({ "rows": rows }))?;
    emit(&sweep_csv(&rows));
    Ok(())
}

pub fn gen_hard_instance(horizon: usize, kind: InstanceKind, out: &Path) -> Result<()> {
    let (text, name) = match kind {
        InstanceKind::Standard => (build_standard_mdp(horizon)?.to_json()?, "standard"),
        InstanceKind::Rsc => (build_rsc_mdp(horizon)?.to_json()?, "rsc"),
    };
    let mut doc: Value = serde_json::from_str(&text)?;
    doc["provenance"] = provenance(&json!({ "T": horizon, "kind": name }))?;
    write_text(out, &serde_json::to_string_pretty(&doc)?)?;
    emit(&format!("wrote {}\n", out.display()));
    Ok(())
}
