use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use gridzero::agent::{Agent, LearnedModel};
use gridzero::baselines::{DpPolicy, MpcPolicy, MyopicPolicy, NoiseSpec};
use gridzero::env::{clamp_battery, Env};
use gridzero::evaluate::{run_days, AgentPolicy, DayReport, Policy};
use gridzero::grid::{
    load_traces, synth, DispatchDecision, ExogenousTrace, MicrogridConfig, SystemState,
};
use gridzero::nn::read_params;
use gridzero::opf::{max_relaxation_gap, solve_opf};
use gridzero::training::{load_resume, training_loop_from, TrainData};
use log::info;
use serde::Serialize;

use crate::config::RunConfig;
use crate::report::{check_finite, write_csv, write_json, Provenance, Stats};

pub fn gen_data(days: usize, seed: u64, out: &Path) -> Result<()> {
    if days == 0 {
        bail!("--days must be at least 1");
    }
    let trace = synth::generate(days, seed, &synth::SynthParams::default());
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    trace
        .save(out)
        .with_context(|| format!("writing {}", out.display()))?;
    info!("wrote {} rows to {}", trace.len(), out.display());
    Ok(())
}

fn load_trace(path: &Path, cfg: &MicrogridConfig) -> Result<ExogenousTrace> {
    load_traces(path, cfg.dt).with_context(|| format!("ingesting trace {}", path.display()))
}

pub fn train(
    config: &Path,
    seed: Option<u64>,
    out: &Path,
    resume_from: Option<&Path>,
) -> Result<()> {
    let mut cfg = RunConfig::load(config)?;
    if let Some(s) = seed {
        cfg.train.seed = s;
    }
    let trace = load_trace(&cfg.data.trace, &cfg.grid)?;
    cfg.data.trace = fs::canonicalize(&cfg.data.trace)?;
    let starts = trace.episode_starts(cfg.grid.horizon_t);
    let (nt, nv) = (cfg.data.train_days, cfg.data.validation_days);
    if starts.len() < nt + nv {
        bail!(
            "trace has {} complete days, config asks for {nt} training and {nv} validation days",
            starts.len()
        );
    }
    let env = Env::new(cfg.grid.clone(), Arc::new(trace))?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    fs::write(out.join("config.toml"), cfg.to_toml()?)?;
    let resume = match resume_from {
        Some(dir) => {
            let r = load_resume(&cfg.train, checkpoint_dir(dir))
                .with_context(|| format!("resuming from {}", dir.display()))?;
            info!("resuming at training step {}", r.train_steps);
            Some(r)
        }
        None => None,
    };
    let data = TrainData {
        env: &env,
        train_starts: &starts[..nt],
        validation_starts: &starts[nt..nt + nv],
        out_dir: Some(out),
    };
    let outcome = training_loop_from(&cfg.train, &data, resume)?;

    #[derive(Serialize)]
    struct Eval {
        step: u64,
        median_validation_return: f64,
    }
    #[derive(Serialize)]
    struct Summary {
        #[serde(flatten)]
        provenance: Provenance,
        train_steps: u64,
        final_loss: Option<gridzero::training::LossParts>,
        evaluations: Vec<Eval>,
        pace: gridzero::training::PaceStats,
    }
    let evaluations: Vec<Eval> = outcome
        .evaluations
        .iter()
        .map(|e| Eval {
            step: e.step,
            median_validation_return: e.median_return,
        })
        .collect();
    check_finite(
        "validation return",
        &evaluations
            .iter()
            .map(|e| e.median_validation_return)
            .collect::<Vec<_>>(),
    )?;
    let summary = Summary {
        provenance: Provenance::new("train", cfg.hash()?, cfg.train.seed),
        train_steps: outcome.stats.train_steps,
        final_loss: outcome.log.last().map(|r| r.loss),
        evaluations,
        pace: outcome.stats,
    };
    write_json(&out.join("summary.json"), &summary)?;
    info!(
        "trained to step {}; outputs in {}",
        summary.train_steps,
        out.display()
    );
    Ok(())
}

/// A checkpoint argument may name the run directory or its `checkpoint.bin`.
fn checkpoint_dir(p: &Path) -> &Path {
    if p.is_file() {
        p.parent().unwrap_or(Path::new("."))
    } else {
        p
    }
}

/// Config from `--config`, else the one saved next to the checkpoint, else defaults.
fn resolve_config(config: Option<&Path>, checkpoint: Option<&Path>) -> Result<RunConfig> {
    if let Some(c) = config {
        return RunConfig::load(c);
    }
    if let Some(dir) = checkpoint.map(checkpoint_dir) {
        let saved = dir.join("config.toml");
        if saved.exists() {
            return RunConfig::load(&saved);
        }
        bail!("{} not found; pass --config", saved.display());
    }
    Ok(RunConfig::default())
}

fn load_model(cfg: &RunConfig, checkpoint: &Path) -> Result<LearnedModel<f64>> {
    let file = checkpoint_dir(checkpoint).join("checkpoint.bin");
    let params =
        read_params(fs::File::open(&file).with_context(|| format!("opening {}", file.display()))?)
            .with_context(|| format!("reading {}", file.display()))?;
    Ok(LearnedModel::from_params(cfg.train.model.clone(), params)?)
}

/// The first `days` complete days of the trace (all of them by default).
fn select_days(env: &Env, days: Option<usize>) -> Result<Vec<usize>> {
    let starts = env.trace().episode_starts(env.cfg().horizon_t);
    let n = days.unwrap_or(starts.len());
    if n == 0 || n > starts.len() {
        bail!("--days {n}: the trace has {} complete days", starts.len());
    }
    Ok(starts[..n].to_vec())
}

/// Inputs shared by `evaluate` and `compare`.
pub struct EvalArgs<'a> {
    pub config: Option<&'a Path>,
    pub checkpoint: Option<&'a Path>,
    pub trace: Option<&'a Path>,
    pub days: Option<usize>,
    pub seed: u64,
    pub out: &'a Path,
}

fn eval_setup(a: &EvalArgs<'_>) -> Result<(RunConfig, Env, Vec<usize>)> {
    let cfg = resolve_config(a.config, a.checkpoint)?;
    let trace_path: PathBuf = a
        .trace
        .map(Path::to_path_buf)
        .unwrap_or_else(|| cfg.data.trace.clone());
    let trace = load_trace(&trace_path, &cfg.grid)?;
    let env = Env::new(cfg.grid.clone(), Arc::new(trace))?;
    let starts = select_days(&env, a.days)?;
    fs::create_dir_all(a.out).with_context(|| format!("creating {}", a.out.display()))?;
    Ok((cfg, env, starts))
}

fn day_date(env: &Env, start: usize) -> String {
    env.trace().records[start].timestamp.date().to_string()
}

pub fn evaluate(a: &EvalArgs<'_>) -> Result<()> {
    let checkpoint = a
        .checkpoint
        .ok_or_else(|| anyhow!("--checkpoint is required"))?;
    let (cfg, mut env, starts) = eval_setup(a)?;
    let model = load_model(&cfg, checkpoint)?;
    let mut policy = AgentPolicy::new(Agent::new(model, cfg.train.mcts.clone()), a.seed);
    let reports = run_days(
        &mut env,
        &starts,
        cfg.train.soc0,
        &mut policy,
        cfg.train.mcts.gamma,
    )?;

    #[derive(Serialize)]
    struct DayRow {
        day: usize,
        date: String,
        start_row: usize,
        cost: f64,
        discounted_return: f64,
        max_gap: f64,
    }
    #[derive(Serialize)]
    struct StepRow {
        day: usize,
        t: usize,
        hour: f64,
        soc: f64,
        requested_kw: f64,
        p_b: f64,
        cost: f64,
        grid_buy: f64,
        grid_sell: f64,
        dg_p: f64,
        pv_used: f64,
        wt_used: f64,
        dg_committed: bool,
        max_gap: f64,
    }
    let mut days = Vec::new();
    let mut steps = Vec::new();
    for (i, r) in reports.iter().enumerate() {
        let max_gap = r.steps.iter().map(|s| s.max_gap).fold(0.0, f64::max);
        days.push(DayRow {
            day: i,
            date: day_date(&env, r.start),
            start_row: r.start,
            cost: r.cost,
            discounted_return: r.discounted_return,
            max_gap,
        });
        for s in &r.steps {
            check_finite(
                "step report",
                &[
                    s.hour,
                    s.soc,
                    s.requested_kw,
                    s.p_b,
                    s.cost,
                    s.grid_buy,
                    s.grid_sell,
                    s.dg_p,
                    s.pv_used,
                    s.wt_used,
                    s.max_gap,
                ],
            )?;
            steps.push(StepRow {
                day: i,
                t: s.t,
                hour: s.hour,
                soc: s.soc,
                requested_kw: s.requested_kw,
                p_b: s.p_b,
                cost: s.cost,
                grid_buy: s.grid_buy,
                grid_sell: s.grid_sell,
                dg_p: s.dg_p,
                pv_used: s.pv_used,
                wt_used: s.wt_used,
                dg_committed: s.dg_committed,
                max_gap: s.max_gap,
            });
        }
    }
    let costs: Vec<f64> = reports.iter().map(|r| r.cost).collect();
    check_finite("daily cost", &costs)?;
    write_csv(&a.out.join("days.csv"), &days)?;
    write_csv(&a.out.join("steps.csv"), &steps)?;

    #[derive(Serialize)]
    struct Summary {
        #[serde(flatten)]
        provenance: Provenance,
        days: usize,
        cost: Stats,
        max_relaxation_gap: f64,
    }
    let summary = Summary {
        provenance: Provenance::new("evaluate", cfg.hash()?, a.seed),
        days: reports.len(),
        cost: Stats::of(&costs),
        max_relaxation_gap: days.iter().map(|d| d.max_gap).fold(0.0, f64::max),
    };
    write_json(&a.out.join("summary.json"), &summary)?;
    info!(
        "evaluated {} days, mean cost {:.2}",
        summary.days, summary.cost.mean
    );
    Ok(())
}

/// A policy named on the command line.
enum Named {
    Myopic,
    Dp,
    Mpc { horizon: usize, exact: bool },
    Agent,
}

fn parse_policy(name: &str) -> Result<Named> {
    let unknown =
        || anyhow!("unknown policy `{name}` (expected myopic, dp, agent, mpc<H> or mpc<H>-exact)");
    Ok(match name {
        "myopic" => Named::Myopic,
        "dp" => Named::Dp,
        "agent" => Named::Agent,
        _ => {
            let rest = name.strip_prefix("mpc").ok_or_else(unknown)?;
            let (h, exact) = match rest.strip_suffix("-exact") {
                Some(h) => (h, true),
                None => (rest, false),
            };
            let horizon: usize = h.parse().map_err(|_| unknown())?;
            if horizon == 0 {
                return Err(unknown());
            }
            Named::Mpc { horizon, exact }
        }
    })
}

pub fn compare(a: &EvalArgs<'_>, policies: &[String]) -> Result<()> {
    if policies.is_empty() {
        bail!("--policies must name at least one policy");
    }
    let named: Vec<Named> = policies
        .iter()
        .map(|p| parse_policy(p))
        .collect::<Result<_>>()?;
    let (cfg, env, starts) = eval_setup(a)?;
    let model = if named.iter().any(|n| matches!(n, Named::Agent)) {
        let checkpoint = a
            .checkpoint
            .ok_or_else(|| anyhow!("policy `agent` needs --checkpoint"))?;
        Some(load_model(&cfg, checkpoint)?)
    } else {
        None
    };
    let run = |policy: &mut dyn Policy| -> Result<Vec<DayReport>> {
        let mut env = env.clone();
        let name = policy.name();
        run_days(
            &mut env,
            &starts,
            cfg.train.soc0,
            policy,
            cfg.train.mcts.gamma,
        )
        .with_context(|| format!("policy {name}"))
    };
    let myopic = run(&mut MyopicPolicy)?;
    let dp = run(&mut DpPolicy::new(None))?;

    #[derive(Serialize)]
    struct Row {
        day: usize,
        date: String,
        policy: String,
        cost: f64,
        improvement_pct: f64,
        dp_gap: f64,
    }
    #[derive(Serialize)]
    struct PolicySummary {
        policy: String,
        mean_cost: f64,
        mean_improvement_pct: f64,
        mean_dp_gap: f64,
    }
    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    for (name, n) in policies.iter().zip(&named) {
        let reports = match n {
            Named::Myopic => myopic.clone(),
            Named::Dp => dp.clone(),
            Named::Mpc { horizon, exact } => {
                let noise = if *exact {
                    NoiseSpec::zero()
                } else {
                    NoiseSpec::default()
                };
                run(&mut MpcPolicy::new(*horizon, noise, a.seed))?
            }
            Named::Agent => {
                let m = model.clone().expect("loaded above");
                run(&mut AgentPolicy::new(
                    Agent::new(m, cfg.train.mcts.clone()),
                    a.seed,
                ))?
            }
        };
        let mut imp = Vec::new();
        let mut gap = Vec::new();
        for (i, r) in reports.iter().enumerate() {
            let base = myopic[i].cost;
            let improvement_pct = 100.0 * (base - r.cost) / base.abs().max(1e-9);
            let dp_gap = r.cost - dp[i].cost;
            check_finite("comparison", &[r.cost, improvement_pct, dp_gap])?;
            imp.push(improvement_pct);
            gap.push(dp_gap);
            rows.push(Row {
                day: i,
                date: day_date(&env, r.start),
                policy: name.clone(),
                cost: r.cost,
                improvement_pct,
                dp_gap,
            });
        }
        let mean_cost = Stats::of(&reports.iter().map(|r| r.cost).collect::<Vec<_>>()).mean;
        summaries.push(PolicySummary {
            policy: name.clone(),
            mean_cost,
            mean_improvement_pct: Stats::of(&imp).mean,
            mean_dp_gap: Stats::of(&gap).mean,
        });
    }
    write_csv(&a.out.join("comparison.csv"), &rows)?;

    #[derive(Serialize)]
    struct Summary {
        #[serde(flatten)]
        provenance: Provenance,
        days: usize,
        policies: Vec<PolicySummary>,
    }
    let summary = Summary {
        provenance: Provenance::new("compare", cfg.hash()?, a.seed),
        days: starts.len(),
        policies: summaries,
    };
    write_json(&a.out.join("summary.json"), &summary)?;
    for p in &summary.policies {
        println!(
            "{:<12} mean cost {:>10.2}  vs myopic {:>7.2}%  DP gap {:>8.2}",
            p.policy, p.mean_cost, p.mean_improvement_pct, p.mean_dp_gap
        );
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct OpfRow {
    action: usize,
    level_kw: f64,
    p_b: f64,
    feasible: bool,
    cost: Option<f64>,
    max_gap: Option<f64>,
    dg_committed: Option<bool>,
    binding: Vec<String>,
    error: Option<String>,
}

/// Limits met with equality (within `tol` kW or p.u.) by a dispatch.
fn binding_constraints(
    cfg: &MicrogridConfig,
    s: &SystemState,
    requested: f64,
    p_b: f64,
    d: &DispatchDecision,
    dg_on: bool,
) -> Vec<String> {
    let tol = 1e-6;
    let mut out = Vec::new();
    let mut flag = |cond: bool, name: String| {
        if cond {
            out.push(name);
        }
    };
    flag((requested - p_b).abs() > tol, "battery_soc_clamp".into());
    let g = &cfg.grid_link;
    flag(d.grid_buy_p >= g.p_buy_max - tol, "grid_buy_max".into());
    flag(d.grid_sell_p >= g.p_sell_max - tol, "grid_sell_max".into());
    flag(d.grid_q >= g.q_max - tol, "grid_q_max".into());
    flag(d.grid_q <= g.q_min + tol, "grid_q_min".into());
    if dg_on {
        flag(d.dg_p >= cfg.dg.p_max - tol, "dg_p_max".into());
        flag(d.dg_p <= cfg.dg.p_min + tol, "dg_p_min".into());
    }
    flag(
        d.pv_p < s.pv_avail.min(cfg.renewables.pv_s_max) - tol,
        "pv_curtailed".into(),
    );
    flag(
        d.wt_p < s.wt_avail.min(cfg.renewables.wt_s_max) - tol,
        "wt_curtailed".into(),
    );
    let (vmin, vmax) = cfg.voltage_bounds;
    for (i, &v) in d.voltages.iter().enumerate() {
        if cfg.buses[i] == g.bus {
            continue;
        }
        flag(v <= vmin * vmin + tol, format!("v_min@bus{}", cfg.buses[i]));
        flag(v >= vmax * vmax - tol, format!("v_max@bus{}", cfg.buses[i]));
    }
    out
}

fn read_state(arg: &str) -> Result<SystemState> {
    let text = if Path::new(arg).is_file() {
        fs::read_to_string(arg)?
    } else {
        arg.to_string()
    };
    serde_json::from_str(&text).context("parsing --state as a SystemState JSON object")
}

pub fn opf_check(config: Option<&Path>, state: &str, out: Option<&Path>) -> Result<()> {
    let cfg = resolve_config(config, None)?;
    let s = read_state(state)?;
    let n = cfg.grid.n_buses();
    if s.load_p.len() != n || s.load_q.len() != n {
        bail!("state: load_p and load_q need one entry per bus ({n})");
    }
    let g = &cfg.grid;
    let rows: Vec<OpfRow> = g
        .battery
        .action_levels
        .iter()
        .enumerate()
        .map(|(action, &level)| {
            let p_b = clamp_battery(&g.battery, s.soc, level, g.dt);
            let base = OpfRow {
                action,
                level_kw: level,
                p_b,
                feasible: false,
                cost: None,
                max_gap: None,
                dg_committed: None,
                binding: vec![],
                error: None,
            };
            match solve_opf(g, &s, p_b) {
                Ok(r) => OpfRow {
                    feasible: true,
                    cost: Some(r.cost),
                    max_gap: max_relaxation_gap(&r.decision).ok(),
                    dg_committed: Some(r.dg_committed),
                    binding: binding_constraints(g, &s, level, p_b, &r.decision, r.dg_committed),
                    ..base
                },
                Err(e) => OpfRow {
                    error: Some(e.to_string()),
                    ..base
                },
            }
        })
        .collect();
    println!(
        "{:>6} {:>9} {:>9} {:>12} {:>10} {:>3}  binding / error",
        "action", "level_kW", "p_b_kW", "cost", "max_gap", "dg"
    );
    for r in &rows {
        match (&r.cost, &r.error) {
            (Some(c), _) => println!(
                "{:>6} {:>9.2} {:>9.4} {:>12.6} {:>10.2e} {:>3}  {}",
                r.action,
                r.level_kw,
                r.p_b,
                c,
                r.max_gap.unwrap_or(f64::NAN),
                if r.dg_committed == Some(true) {
                    "on"
                } else {
                    "off"
                },
                r.binding.join(",")
            ),
            (None, e) => println!(
                "{:>6} {:>9.2} {:>9.4} {:>12} {:>10} {:>3}  error: {}",
                r.action,
                r.level_kw,
                r.p_b,
                "-",
                "-",
                "-",
                e.as_deref().unwrap_or("")
            ),
        }
    }
    if let Some(path) = out {
        #[derive(Serialize)]
        struct Dump<'a> {
            #[serde(flatten)]
            provenance: Provenance,
            state: &'a SystemState,
            actions: &'a [OpfRow],
        }
        write_json(
            path,
            &Dump {
                provenance: Provenance::new("opf-check", cfg.hash()?, 0),
                state: &s,
                actions: &rows,
            },
        )?;
    }
    Ok(())
}
