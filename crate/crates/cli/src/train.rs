use std::path::Path;
use std::time::Instant;

use brickfill::env::EnvState;
use brickfill::io::{load_scenario, read_json, write_atomic, write_json};
use brickfill::policy::{
    curve_csv_rows, evaluate, load_checkpoint, save_checkpoint, Policy, TrainConfig, Trainer,
    CURVE_HEADER,
};

use crate::matching::infer_target;
use crate::report::{PolicyScore, TrainReport, SCHEMA_VERSION};
use crate::{ensure_dir, TrainArgs};

/// Rows of an existing curve file up to and including `max_update`.
fn kept_rows(path: &Path, max_update: u64) -> anyhow::Result<String> {
    let Ok(text) = std::fs::read_to_string(path) else {
        return Ok(String::new());
    };
    let mut out = String::new();
    for line in text.lines().skip(1) {
        let update: u64 = line
            .split(',')
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| anyhow::anyhow!("{}: malformed curve row `{line}`", path.display()))?;
        if update <= max_update {
            out.push_str(line);
            out.push('\n');
        }
    }
    Ok(out)
}

fn score(policy: Policy, env: &EnvState, episodes: usize, seed: u64, sim: f64) -> anyhow::Result<PolicyScore> {
    let r = evaluate(policy, env, episodes, seed)?;
    Ok(PolicyScore {
        policy: r.policy,
        episodes,
        mean_final_s_com_percent: 100.0 * r.mean_final_s_com / sim,
        mean_steps: r.mean_steps,
    })
}

pub(crate) fn run(a: &TrainArgs) -> anyhow::Result<()> {
    let start = Instant::now();
    let sc = load_scenario(&a.scenario)?;
    let config: TrainConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => TrainConfig::default(),
    };
    config.validate()?;
    let target = match (&sc.target, &sc.library) {
        (Some(t), _) => t.clone(),
        (None, Some(lib)) => {
            infer_target(sc.incomplete.grid(), lib, &sc.registration, &sc.env.similarity)?.aligned_target
        }
        (None, None) => unreachable!("load_scenario requires a library or a target"),
    };
    let env = EnvState::new(sc.incomplete.clone(), target, sc.inventory.clone(), sc.env)?;

    ensure_dir(&a.out)?;
    let ck_path = |u: u64| a.out.join(format!("checkpoint-{u}.bin"));
    let mut trainer = match &a.resume {
        Some(p) => Trainer::from_checkpoint(load_checkpoint(p)?, config.clone())?,
        None => {
            let t = Trainer::new(config.clone(), &env)?;
            save_checkpoint(ck_path(0), &t.checkpoint())?;
            t
        }
    };
    let curve_path = a.out.join("curve.csv");
    let earlier = if a.resume.is_some() {
        kept_rows(&curve_path, trainer.progress.updates)?
    } else {
        String::new()
    };

    let every = a.checkpoint_every.max(1);
    let curve = trainer.train(
        |_| Ok(env.clone()),
        |t, p| {
            if p.update % every == 0 {
                save_checkpoint(ck_path(p.update), &t.checkpoint())?;
            }
            Ok(())
        },
    )?;
    let final_ck = ck_path(trainer.progress.updates);
    save_checkpoint(&final_ck, &trainer.checkpoint())?;
    let csv = format!("{CURVE_HEADER}\n{earlier}{}", curve_csv_rows(&curve));
    write_atomic(&curve_path, csv.as_bytes())?;

    let total = sc.env.similarity.total();
    let n = a.eval_episodes.max(1);
    let evaluation = vec![
        score(Policy::Greedy, &env, 1, config.seed, total)?,
        score(Policy::RandomValid, &env, n, config.seed, total)?,
        score(Policy::NetArgmax(&trainer.net), &env, 1, config.seed, total)?,
        score(Policy::NetSample(&trainer.net), &env, n, config.seed, total)?,
    ];
    let report = TrainReport {
        schema_version: SCHEMA_VERSION,
        scenario: a.scenario.display().to_string(),
        config,
        resumed_from: a.resume.as_ref().map(|p| p.display().to_string()),
        env_steps: trainer.progress.env_steps,
        updates: trainer.progress.updates,
        checkpoint: final_ck.display().to_string(),
        curve: curve_path.display().to_string(),
        evaluation,
        wall_seconds: start.elapsed().as_secs_f64(),
        success: true,
    };
    let report_path = a.out.join("train_report.json");
    write_json(&report_path, &report)?;
    println!("{}", report_path.display());
    Ok(())
}
