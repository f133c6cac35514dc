use std::error::Error;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use semcost::sensor::{self, Noise, ObstacleRef, SensorQuery};
use semcost::session::{compare_runs, PromptVariant};
use semcost::{load_scenario, FixtureRecord, Params, Plan, Scenario, Session};

use crate::backend::BackendOpts;

pub type CliResult<T> = Result<T, Box<dyn Error + Send + Sync>>;

pub fn read_scenario(path: &Path) -> CliResult<Scenario> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("reading {}: {e}", path.display()))?;
    Ok(load_scenario(&text)?)
}

/// Reads a prompt list: either `[{"label": .., "text": ..}, ..]` or a plain
/// array of strings (labels then default to `P1`, `P2`, ..).
pub fn read_prompts(path: &Path) -> CliResult<Vec<PromptVariant>> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("reading {}: {e}", path.display()))?;
    if let Ok(v) = serde_json::from_str::<Vec<PromptVariant>>(&text) {
        return Ok(v);
    }
    let plain: Vec<String> = serde_json::from_str(&text)
        .map_err(|e| format!("{}: expected a list of prompts: {e}", path.display()))?;
    Ok(plain
        .into_iter()
        .enumerate()
        .map(|(i, text)| PromptVariant {
            label: format!("P{}", i + 1),
            text,
        })
        .collect())
}

fn roster(scenario: &Scenario) -> Vec<ObstacleRef> {
    scenario
        .obstacles
        .iter()
        .map(|o| ObstacleRef {
            id: o.id.clone(),
            family: o.family.clone(),
        })
        .collect()
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or("-".to_string(), |x| format!("{x:.3}"))
}

fn plan_report(plan: &Plan) -> String {
    let mut out = String::new();
    let m = plan.metrics.as_ref();
    writeln!(out, "cost            {:.6}", plan.total_cost).unwrap();
    writeln!(out, "cells           {}", plan.path.len()).unwrap();
    writeln!(out, "length_cells    {}", fmt_opt(m.map(|m| m.length_cells))).unwrap();
    writeln!(out, "length_m        {}", fmt_opt(m.map(|m| m.length_m))).unwrap();
    writeln!(out, "min_dist_m      {}", fmt_opt(m.and_then(|m| m.min_obstacle_dist_m))).unwrap();
    writeln!(out, "avg_dist_m      {}", fmt_opt(m.and_then(|m| m.avg_obstacle_dist_m))).unwrap();
    writeln!(
        out,
        "expansions      anchor={} informed={}",
        plan.expansions.anchor_count, plan.expansions.informed_count
    )
    .unwrap();
    out
}

pub struct PlanArgs {
    pub scenario: PathBuf,
    pub gamma: Option<f64>,
    pub w1: Option<f64>,
    pub w2: Option<f64>,
    pub json: bool,
}

pub fn plan(args: &PlanArgs) -> CliResult<String> {
    let scenario = read_scenario(&args.scenario)?;
    let base = scenario.planner_params;
    let params = Params {
        gamma: args.gamma.unwrap_or(base.gamma),
        w1: args.w1.unwrap_or(base.w1),
        w2: args.w2.unwrap_or(base.w2),
        ..base
    };
    let session = Session::new(scenario)?;
    let plan = session.plan_with(&params)?;
    Ok(if args.json {
        serde_json::to_string_pretty(&plan)? + "\n"
    } else {
        plan_report(&plan)
    })
}

pub struct PromptArgs {
    pub scenario: PathBuf,
    pub text: String,
    pub trust: Option<f64>,
    pub backend: BackendOpts,
    /// Session file to continue from and write back to.
    pub session: Option<PathBuf>,
    pub json: bool,
}

pub fn prompt(args: &PromptArgs) -> CliResult<String> {
    let mut session = match &args.session {
        Some(p) if p.exists() => Session::load_state(p)?,
        _ => Session::new(read_scenario(&args.scenario)?)?,
    };
    let mut backend = args.backend.build(None)?;
    let response = session.apply_prompt(&args.text, &mut backend, args.trust)?;
    let plan = session.replan()?;
    if let Some(p) = &args.session {
        session.save_state(p)?;
    }
    if args.json {
        let out = serde_json::json!({ "sensor": response, "snapshot": session.snapshot() });
        return Ok(serde_json::to_string_pretty(&out)? + "\n");
    }
    let m = plan.metrics.expect("replan fills metrics");
    let mut header = vec!["prompt".to_string(), "length_m".into(), "min_dist_m".into(), "avg_dist_m".into()];
    let mut row = vec![
        session.prompt_log().last().map(|e| e.prompt_id.clone()).unwrap_or_default(),
        fmt_opt(Some(m.length_m)),
        fmt_opt(m.min_obstacle_dist_m),
        fmt_opt(m.avg_obstacle_dist_m),
    ];
    for p in session.snapshot().posteriors {
        header.push(format!("{} (post.)", p.family));
        row.push(format!("{:.2}", p.mean));
    }
    let mut out = format!("{}\n{}\n", header.join("\t"), row.join("\t"));
    for c in &response.clamped {
        writeln!(out, "clamped {}: {} -> {}", c.obstacle_id, c.reported, c.clamped_to).unwrap();
    }
    Ok(out)
}

pub struct CompareArgs {
    pub scenario: PathBuf,
    pub prompts: PathBuf,
    pub backend: BackendOpts,
    pub json: bool,
}

pub fn compare(args: &CompareArgs) -> CliResult<String> {
    let scenario = read_scenario(&args.scenario)?;
    let variants = read_prompts(&args.prompts)?;
    let mut backend = args.backend.build(None)?;
    let table = compare_runs(&scenario, &variants, &mut backend)?;
    Ok(if args.json {
        serde_json::to_string_pretty(&table)? + "\n"
    } else {
        let mut out = table.render();
        for c in &table.columns {
            if let Some(e) = &c.error {
                writeln!(out, "{}: {e}", c.label).unwrap();
            }
        }
        out
    })
}

pub struct AblateArgs {
    pub scenario: PathBuf,
    pub text: String,
    pub runs: usize,
    pub noise: Option<String>,
    pub seed: u64,
    pub backend: BackendOpts,
    pub json: bool,
}

pub fn ablate(args: &AblateArgs) -> CliResult<String> {
    let scenario = read_scenario(&args.scenario)?;
    let noise = args.noise.as_deref().map(Noise::parse).transpose()?;
    let mut backend = args.backend.build(noise.map(|n| (n, args.seed)))?;
    let query = SensorQuery::new(args.text.clone(), roster(&scenario));
    let stats = sensor::ablation_run(&query, &mut backend, args.runs, &scenario.fusion_params)?;
    if args.json {
        return Ok(serde_json::to_string_pretty(&stats)? + "\n");
    }
    let mut out = String::from("family\tid\tposterior_mean\tstd\truns\n");
    for (s, o) in stats.iter().zip(&scenario.obstacles) {
        writeln!(out, "{}\t{}\t{:.3}\t{:.3}\t{}", o.family, s.obstacle_id, s.mean, s.std, s.runs).unwrap();
    }
    Ok(out)
}

pub struct SweepArgs {
    pub scenario: PathBuf,
    pub text: String,
    pub n_values: Vec<f64>,
    pub backend: BackendOpts,
    pub json: bool,
}

/// CSV (`obstacle_id,family,trust_n,score,posterior_mean`) or JSON curves.
pub fn sweep(args: &SweepArgs) -> CliResult<String> {
    let scenario = read_scenario(&args.scenario)?;
    let mut backend = args.backend.build(None)?;
    let query = SensorQuery::new(args.text.clone(), roster(&scenario));
    let curves = sensor::trust_sweep(&query, &mut backend, &args.n_values, &scenario.fusion_params)?;
    if args.json {
        return Ok(serde_json::to_string_pretty(&curves)? + "\n");
    }
    let mut out = String::from("obstacle_id,family,trust_n,score,posterior_mean\n");
    for (c, o) in curves.iter().zip(&scenario.obstacles) {
        for p in &c.points {
            writeln!(out, "{},{},{},{},{}", c.obstacle_id, o.family, p.trust_n, p.score, p.mean).unwrap();
        }
    }
    Ok(out)
}

pub struct RecordArgs {
    pub scenario: PathBuf,
    pub prompts: PathBuf,
    pub out: PathBuf,
    pub backend: BackendOpts,
}

/// Captures one fixture record per prompt and writes them as a JSON array.
pub fn record(args: &RecordArgs) -> CliResult<String> {
    let scenario = read_scenario(&args.scenario)?;
    let variants = read_prompts(&args.prompts)?;
    let mut backend = args.backend.build(None)?;
    let mut records = Vec::with_capacity(variants.len());
    for v in &variants {
        let query = SensorQuery::new(v.text.clone(), roster(&scenario));
        records.push(FixtureRecord::capture(&query, &mut backend)?);
    }
    std::fs::write(&args.out, serde_json::to_string_pretty(&records)? + "\n")?;
    Ok(format!("wrote {} records to {}\n", records.len(), args.out.display()))
}

pub fn parse_n_values(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("bad trust value `{t}`: {e}")))
        .collect()
}
