//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Runs offline on mock and fixture backends only.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::{brute_edf, oracle_path, random_instance, round2, step_counts, uniform_cost};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use semcost::distance_field::per_obstacle_edf;
use semcost::fusion::{posterior_mean, update};
use semcost::scenario::GridObstacle;
use semcost::sensor::{self, Noise, ObstacleRef, Rule, RuleTable, SensorQuery, SensorRequest};
use semcost::session::{compare_runs, ComparisonTable, PromptVariant};
use semcost::{
    load_scenario, planner, Beta, Cell, FixtureBackend, Fusion, MockBackend, Params, SemanticGrid, SensorBackend,
    SensorError, Session, SessionError,
};

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn fusion_table() -> Outcome {
    let scores = [1.0, 0.1, 0.2, 0.8, 0.3, 0.6];
    let table = [0.86, 0.21, 0.29, 0.71, 0.36, 0.57];

    let grid: Vec<f64> = (0..=20).map(|i| i as f64 / 20.0).collect();
    let fitting: Vec<u32> = (1..=20u32)
        .filter(|&n| {
            table.iter().all(|&v| {
                grid.iter()
                    .any(|&p| round2(posterior_mean(&update(&Beta::uniform(), p, n as f64).unwrap())) == v)
            })
        })
        .collect();
    check(fitting == vec![5], || format!("trust values fitting every table entry: {fitting:?}"))?;

    let t0 = Instant::now();
    let means: Vec<f64> = scores
        .iter()
        .map(|&p| posterior_mean(&update(&Beta::uniform(), p, 5.0).unwrap()))
        .collect();
    let elapsed = t0.elapsed();
    let rounded: Vec<f64> = means.iter().map(|m| round2(*m)).collect();
    check(rounded == table, || format!("rounded means {rounded:?} != {table:?}"))?;
    check(elapsed < Duration::from_millis(1), || format!("took {elapsed:?}"))?;
    Ok(format!("N=5 is the unique fit; means {rounded:?}"))
}

fn stability_fuzz() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let trusts = [0.0, 1.0, 5.0, 100.0];
    let streams: [(&str, Box<dyn Fn(&mut ChaCha8Rng, usize) -> f64>); 4] = [
        ("random", Box::new(|r: &mut ChaCha8Rng, _| if r.gen::<bool>() { 1.0 } else { 0.0 })),
        ("all ones", Box::new(|_: &mut ChaCha8Rng, _| 1.0)),
        ("all zeros", Box::new(|_: &mut ChaCha8Rng, _| 0.0)),
        ("alternating", Box::new(|_: &mut ChaCha8Rng, i| (i % 2) as f64)),
    ];
    let mut slowest = Duration::ZERO;
    for (name, draw) in &streams {
        for &fixed in &[None, Some(100.0)] {
            let started = Instant::now();
            let mut s = Beta::uniform();
            for i in 0..1_000_000 {
                let n = fixed.unwrap_or_else(|| trusts[rng.gen_range(0..trusts.len())]);
                s = update(&s, draw(&mut rng, i), n).map_err(|e| format!("{name}: update {i} failed: {e}"))?;
                let m = s.mean();
                if !(s.alpha.is_finite() && s.beta.is_finite() && s.alpha > 0.0 && s.beta > 0.0 && m > 0.0 && m < 1.0) {
                    return Err(format!("{name}: after {i} updates alpha={} beta={} mean={m}", s.alpha, s.beta));
                }
            }
            slowest = slowest.max(started.elapsed());
        }
    }
    check(slowest < Duration::from_secs(5), || format!("a 1e6-update chain took {slowest:?}"))?;
    Ok(format!(
        "4 streams x 2 trust schedules x 1e6 updates stay finite with mean in (0,1); slowest chain {slowest:.2?}"
    ))
}

fn edf_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(48);
    let mut worst = 0.0f64;
    for k in 0..200 {
        let w = rng.gen_range(1..=64);
        let h = rng.gen_range(1..=64);
        let mut grid = SemanticGrid::empty(w, h, 0.1);
        for j in 0..rng.gen_range(1..=3) {
            let density = rng.gen_range(0.0005..0.08);
            let mut cells: Vec<Cell> = (0..w * h)
                .filter(|_| rng.gen_bool(density))
                .map(|i| Cell::new(i % w, i / w))
                .collect();
            if cells.is_empty() {
                cells.push(Cell::new(rng.gen_range(0..w), rng.gen_range(0..h)));
            }
            grid.add_obstacle(GridObstacle {
                id: format!("o{j}"),
                family: "Random".into(),
                base_gain: 1.0,
                cells,
            });
        }
        for (j, o) in grid.obstacles.iter().enumerate() {
            let fast = per_obstacle_edf::<f64>(&grid, j).map_err(|e| e.to_string())?;
            let slow = brute_edf(w, h, &o.cells);
            for (i, (a, b)) in fast.values.iter().zip(&slow).enumerate() {
                let err = (a - b).abs();
                worst = worst.max(err);
                if err > 1e-9 {
                    return Err(format!("grid {k} ({w}x{h}) obstacle {j} cell {i}: {a} vs {b}"));
                }
            }
        }
    }
    Ok(format!("200 grids, max abs error {worst:e}"))
}

fn reachable_instances(seed: u64, count: usize, mut each: impl FnMut(usize, &common::RandomInstance, u64) -> Result<(), String>) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut done = 0;
    while done < count {
        let inst = random_instance(&mut rng, 32);
        let zero_gamma = uniform_cost(&inst.grid, &inst.field.values, 0.0, inst.start);
        if zero_gamma[inst.grid.index(inst.goal)].is_infinite() {
            continue;
        }
        each(done, &inst, rng.gen::<u64>())?;
        done += 1;
    }
    Ok(())
}

/// With `γ = 0` every cost is `a + b·√2` for integer move counts `a, b`, and
/// since `√2` is irrational two costs are equal exactly when the counts are.
/// Comparing counts makes the check exact even where two optimal paths sum
/// their floats in different orders.
fn astar_reduction() -> Outcome {
    let mut mismatches = Vec::new();
    let mut bitwise = 0;
    reachable_instances(7, 100, |k, inst, _| {
        let (oracle_cost, oracle_path) = oracle_path(&inst.grid, &inst.field.values, 0.0, inst.start, inst.goal)
            .ok_or_else(|| format!("instance {k}: oracle found no path"))?;
        let want = step_counts(&oracle_path);
        for w2 in [1.0, 1.5, 2.0] {
            let params = Params::new(1.0, w2, 0.0);
            let plan = planner::plan(&inst.grid, &inst.field, inst.start, inst.goal, &params)
                .map_err(|e| format!("instance {k}: {e}"))?;
            let got = step_counts(&plan.path);
            let chain = planner::path_cost(&inst.field, &plan.path, 0.0);
            if got != want || (plan.total_cost - chain).abs() > 1e-9 {
                mismatches.push(format!(
                    "#{k} w2={w2}: moves {got:?} cost {} vs oracle {want:?} cost {oracle_cost}",
                    plan.total_cost
                ));
            } else if plan.total_cost == oracle_cost {
                bitwise += 1;
            }
        }
        Ok(())
    })?;
    if mismatches.is_empty() {
        Ok(format!(
            "300 runs (100 instances x w2 in {{1, 1.5, 2}}) match the oracle's straight/diagonal move counts; {bitwise} also bitwise equal as floats"
        ))
    } else {
        Err(format!(
            "{} of 300 runs differ from the oracle; first: {}",
            mismatches.len(),
            mismatches[..mismatches.len().min(3)].join("; ")
        ))
    }
}

fn suboptimality_bound() -> Outcome {
    let mut worst_ratio = 0.0f64;
    let mut runs = 0;
    reachable_instances(11, 100, |k, inst, pick: u64| {
        let gamma = [0.5, 2.0][(pick & 1) as usize];
        let oracle = uniform_cost(&inst.grid, &inst.field.values, gamma, inst.start)[inst.grid.index(inst.goal)];
        for w1 in [1.0, 1.5] {
            for w2 in [1.5, 2.0] {
                let params = Params::new(w1, w2, gamma);
                let plan = planner::plan(&inst.grid, &inst.field, inst.start, inst.goal, &params)
                    .map_err(|e| format!("instance {k}: {e}"))?;
                let bound = params.bound();
                if plan.total_cost > bound * oracle + 1e-9 {
                    return Err(format!(
                        "#{k} gamma={gamma} w1={w1} w2={w2}: cost {} > {bound} x {oracle}",
                        plan.total_cost
                    ));
                }
                if oracle > 0.0 {
                    worst_ratio = worst_ratio.max(plan.total_cost / oracle);
                }
                runs += 1;
            }
        }
        Ok(())
    })?;
    Ok(format!("{runs} runs within bound; worst cost/optimal {worst_ratio:.4}"))
}

fn table(name: &str) -> Result<ComparisonTable, String> {
    let root = common::repo_root().join("scenarios");
    let text = std::fs::read_to_string(root.join(format!("{name}.json"))).map_err(|e| e.to_string())?;
    let scenario = load_scenario(&text).map_err(|e| e.to_string())?;
    let prompts: Vec<PromptVariant> = serde_json::from_str(
        &std::fs::read_to_string(root.join(format!("prompts/{name}.json"))).map_err(|e| e.to_string())?,
    )
    .map_err(|e| e.to_string())?;
    let mut fixtures =
        FixtureBackend::from_path(root.join(format!("fixtures/{name}.json"))).map_err(|e| e.to_string())?;
    let t = compare_runs(&scenario, &prompts, &mut fixtures).map_err(|e| e.to_string())?;
    if let Some(c) = t.columns.iter().find(|c| c.error.is_some()) {
        return Err(format!("{name}/{}: {}", c.label, c.error.as_deref().unwrap_or_default()));
    }
    Ok(t)
}

struct Col {
    len: f64,
    min: f64,
    post: Vec<f64>,
}

fn col(t: &ComparisonTable, i: usize) -> Col {
    let c = &t.columns[i];
    let m = c.metrics.as_ref().expect("metrics");
    Col {
        len: m.length_m,
        min: m.min_obstacle_dist_m.expect("obstacles present"),
        post: c.posteriors.clone().unwrap_or_default().into_iter().map(round2).collect(),
    }
}

fn behavioural_orderings() -> Outcome {
    let t0 = Instant::now();
    let wz = table("workzone")?;
    let (empty, busy, base) = (col(&wz, 0), col(&wz, 1), col(&wz, 2));
    check(empty.post == [0.21, 0.21] && busy.post == [0.86, 0.29], || {
        format!("workzone posteriors {:?} / {:?}", empty.post, busy.post)
    })?;
    check(busy.len > empty.len, || format!("busy length {} <= empty {}", busy.len, empty.len))?;
    check(busy.min > empty.min && empty.min > base.min, || {
        format!("min-dist busy {} empty {} baseline {}", busy.min, empty.min, base.min)
    })?;

    let mep = table("mep")?;
    let (installed, ongoing) = (col(&mep, 0), col(&mep, 1));
    check(installed.post == [0.36, 0.21] && ongoing.post == [0.71, 0.57], || {
        format!("mep posteriors {:?} / {:?}", installed.post, ongoing.post)
    })?;
    check(ongoing.len > installed.len, || format!("ongoing {} <= installed {}", ongoing.len, installed.len))?;

    let cem = table("cement")?;
    let (dried, wet) = (col(&cem, 0), col(&cem, 1));
    check(dried.post == [0.21, 0.21, 0.71] && wet.post == [0.21, 0.71, 0.29], || {
        format!("cement posteriors {:?} / {:?}", dried.post, wet.post)
    })?;
    check(wet.len > dried.len, || format!("wet length {} <= dried {}", wet.len, dried.len))?;
    check(wet.min > dried.min, || format!("wet min-dist {} <= dried {}", wet.min, dried.min))?;
    let elapsed = t0.elapsed();
    check(elapsed < Duration::from_secs(10), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "busy {:.3}>{:.3} m; min {:.3}>{:.3}>{:.3}; ongoing {:.3}>{:.3}; wet {:.3}>{:.3} m, min {:.3}>{:.3}",
        busy.len, empty.len, busy.min, empty.min, base.min, ongoing.len, installed.len, wet.len, dried.len, wet.min, dried.min
    ))
}

fn trust_sweep_closed_form() -> Outcome {
    let roster: Vec<ObstacleRef> = [
        ("ws", "Workstations"),
        ("wall", "Walls"),
        ("cement", "Floor-Cement"),
        ("storage", "Storage"),
        ("weld", "Welding-Station"),
    ]
    .iter()
    .map(|(id, family)| ObstacleRef { id: id.to_string(), family: family.to_string() })
    .collect();
    let ns = [0.0, 1.0, 2.0, 5.0, 10.0, 50.0];
    let mut worst = 0.0f64;
    let mut points = 0;
    for prompt in ["The work zone is busy today", "empty", "undergoing", "poured cement", "cement is dry", "nothing"] {
        let query = SensorQuery::new(prompt, roster.clone());
        let curves = sensor::trust_sweep(&query, &mut MockBackend::construction(), &ns, &Fusion::default())
            .map_err(|e| e.to_string())?;
        for c in &curves {
            for p in &c.points {
                let expected = (1.0 + p.trust_n * p.score) / (2.0 + p.trust_n);
                let err = (p.mean - expected).abs();
                worst = worst.max(err);
                if err > 1e-12 {
                    return Err(format!("{prompt}/{}: N={} got {} expected {expected}", c.obstacle_id, p.trust_n, p.mean));
                }
                points += 1;
            }
        }
    }
    Ok(format!("{points} points, max error {worst:e}"))
}

fn constant_table(score: f64) -> RuleTable {
    RuleTable {
        rules: vec![Rule {
            name: "constant".into(),
            keywords: vec![String::new()],
            scores: Vec::new(),
            default: score,
        }],
        fallback: score,
    }
}

fn ablation() -> Outcome {
    let t0 = Instant::now();
    let runs = 10_000;
    let n = 5.0;
    let roster = vec![
        ObstacleRef { id: "a".into(), family: "A".into() },
        ObstacleRef { id: "b".into(), family: "B".into() },
    ];
    let query = SensorQuery::new("how dangerous is each element?", roster);
    let mut report = Vec::new();
    // Posterior mean is affine in the score: m = (1 + N p) / (2 + N).
    let slope = n / (2.0 + n);
    let cases = [
        ("discrete", 0.7, Noise::Discrete(vec![-0.1, 0.0, 0.1]), {
            let a = slope * 0.1;
            let sigma = a * (2.0f64 / 3.0).sqrt();
            (sigma, a / (12.0 * runs as f64).sqrt())
        }),
        ("uniform", 0.5, Noise::Uniform(0.2), {
            let w = slope * 0.2;
            let sigma = w / 3.0f64.sqrt();
            (sigma, w / (15.0 * runs as f64).sqrt())
        }),
    ];
    for (name, centre, noise, (sigma, se_std)) in cases {
        let mut backend = MockBackend::new(constant_table(centre)).with_noise(noise, 2024);
        let stats = sensor::ablation_run(&query, &mut backend, runs, &Fusion::with_trust(n)).map_err(|e| e.to_string())?;
        let mu = (1.0 + n * centre) / (2.0 + n);
        let se_mean = sigma / (runs as f64).sqrt();
        for s in &stats {
            let zm = (s.mean - mu) / se_mean;
            let zs = (s.std - sigma) / se_std;
            check(zm.abs() <= 3.0 && zs.abs() <= 3.0, || {
                format!("{name}/{}: mean {} vs {mu} (z={zm:.2}), std {} vs {sigma} (z={zs:.2})", s.obstacle_id, s.mean, s.std)
            })?;
            report.push(format!("{name}/{} z=({zm:+.2},{zs:+.2})", s.obstacle_id));
        }
    }
    let elapsed = t0.elapsed();
    check(elapsed < Duration::from_secs(10), || format!("took {elapsed:?}"))?;
    Ok(report.join(", "))
}

struct Reply(&'static str);

impl SensorBackend for Reply {
    fn kind(&self) -> semcost::BackendKind {
        semcost::BackendKind::Mock
    }
    fn complete(&mut self, _: &SensorRequest) -> Result<String, SensorError> {
        Ok(self.0.to_string())
    }
}

fn sensor_robustness() -> Outcome {
    let text = std::fs::read_to_string(common::repo_root().join("scenarios/workzone.json")).map_err(|e| e.to_string())?;
    let mut session = Session::from_scenario_text(&text).map_err(|e| e.to_string())?;
    session
        .apply_prompt("busy", &mut MockBackend::construction(), None)
        .map_err(|e| e.to_string())?;
    session.replan().map_err(|e| e.to_string())?;
    let bits = |s: &Session| -> Vec<u64> {
        s.posteriors()
            .iter()
            .flat_map(|p| [p.state.alpha.to_bits(), p.state.beta.to_bits()])
            .chain(s.potential().values.iter().map(|v| v.to_bits()))
            .collect()
    };
    let before = session.clone();
    let before_json = session.to_json();
    let before_bits = bits(&session);

    let malformed = session.apply_prompt("x", &mut Reply("Sure! The workstations look risky."), None);
    check(matches!(malformed, Err(SessionError::Sensor(SensorError::Malformed { .. }))), || {
        format!("malformed reply gave {malformed:?}")
    })?;
    let incomplete = session.apply_prompt("x", &mut Reply(r#"{"scores": {"workstations": 0.4}}"#), None);
    check(matches!(incomplete, Err(SessionError::Sensor(SensorError::Incomplete { .. }))), || {
        format!("incomplete reply gave {incomplete:?}")
    })?;
    check(session == before && session.to_json() == before_json && bits(&session) == before_bits, || {
        "session changed after a rejected reply".into()
    })?;

    let out = session
        .apply_prompt("x", &mut Reply(r#"{"scores": {"workstations": 1.7, "wall": -0.3}}"#), None)
        .map_err(|e| format!("out-of-range reply rejected: {e}"))?;
    let scores: Vec<f64> = out.readings.iter().map(|r| r.score).collect();
    check(scores == [1.0, 0.0] && out.clamped.len() == 2, || {
        format!("clamped readings {scores:?}, audit {:?}", out.clamped)
    })?;
    Ok("malformed -> error, incomplete -> error (state bitwise unchanged), out-of-range -> clamped with audit".into())
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome, Option<u64>); 9] = [
        ("fusion arithmetic matches table posteriors", fusion_table, None),
        ("stability fuzz", stability_fuzz, None),
        ("EDF oracle equivalence", edf_oracle, Some(30)),
        ("A* reduction", astar_reduction, Some(60)),
        ("suboptimality bound", suboptimality_bound, Some(120)),
        ("behavioural orderings", behavioural_orderings, Some(10)),
        ("trust-sweep closed form", trust_sweep_closed_form, None),
        ("ablation statistics", ablation, Some(10)),
        ("sensor robustness", sensor_robustness, None),
    ];
    let mut failed = 0;
    for (name, run, budget_s) in criteria {
        let t0 = Instant::now();
        let mut outcome = run();
        let secs = t0.elapsed().as_secs_f64();
        if let (Ok(_), Some(b)) = (&outcome, budget_s) {
            if secs > b as f64 {
                outcome = Err(format!("over the {b} s budget"));
            }
        }
        match outcome {
            Ok(detail) => println!("PASS  {name} ({secs:.2}s): {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name} ({secs:.2}s): {why}");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
