use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use brickfill::env::EnvState;
use brickfill::io::{load_scenario, save_assembly, save_voxel, write_json, write_json_lines};
use brickfill::pointcloud::voxel_to_supersampled_cloud;
use brickfill::policy::{load_checkpoint, rollout, Policy, PolicyNet};

use crate::matching::infer_target;
use crate::report::{Exports, MatchSummary, RunReport, SCHEMA_VERSION};
use crate::{ensure_dir, CompleteArgs, ReportedFailure};

enum Chosen {
    Greedy,
    Random,
    Net(PolicyNet, bool),
}

fn choose_policy(spec: &str, sample: bool) -> anyhow::Result<Chosen> {
    Ok(match spec {
        "greedy" => Chosen::Greedy,
        "random" => Chosen::Random,
        path => Chosen::Net(load_checkpoint(Path::new(path))?.net, sample),
    })
}

pub(crate) fn run(a: &CompleteArgs) -> anyhow::Result<()> {
    let start = Instant::now();
    let mut sc = load_scenario(&a.scenario)?;
    let seed = a.seed.unwrap_or(sc.seed);
    if a.seed.is_some() {
        sc.registration.rng_seed = seed;
    }
    let chosen = choose_policy(&a.policy, a.sample)?;

    let (target, match_summary) = match (&sc.target, &sc.library) {
        (Some(t), _) => (t.clone(), None),
        (None, Some(lib)) => {
            let m = infer_target(sc.incomplete.grid(), lib, &sc.registration, &sc.env.similarity)?;
            let summary = MatchSummary::new(&m, &sc.env.similarity);
            (m.aligned_target, Some(summary))
        }
        (None, None) => unreachable!("load_scenario requires a library or a target"),
    };
    let env = EnvState::new(sc.incomplete.clone(), target, sc.inventory.clone(), sc.env)?;

    let policy = match &chosen {
        Chosen::Greedy => Policy::Greedy,
        Chosen::Random => Policy::RandomValid,
        Chosen::Net(net, false) => Policy::NetArgmax(net),
        Chosen::Net(net, true) => Policy::NetSample(net),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let episode = rollout(&env, policy, &mut rng)?;
    let final_state = &episode.final_state;
    let stalled = episode.steps == 0 && env.current() != env.target();

    ensure_dir(&a.out)?;
    let paths = Exports {
        report: a.out.join("report.json").display().to_string(),
        trace: a.out.join("trace.jsonl").display().to_string(),
        assembly: a.out.join("final_assembly.json").display().to_string(),
        ply: a.out.join("final.ply").display().to_string(),
        target: a.out.join("target.json").display().to_string(),
    };
    write_json_lines(&paths.trace, &episode.trace)?;
    save_assembly(&paths.assembly, final_state.assembly())?;
    voxel_to_supersampled_cloud(final_state.current(), 1).save_ply(&paths.ply)?;
    save_voxel(&paths.target, env.target())?;

    let sim = &sc.env.similarity;
    let report = RunReport {
        schema_version: SCHEMA_VERSION,
        scenario: a.scenario.display().to_string(),
        policy: match &chosen {
            Chosen::Net(..) => format!("{}:{}", policy.name(), a.policy),
            _ => policy.name().to_string(),
        },
        seed,
        target_source: if match_summary.is_some() { "library" } else { "pinned" }.into(),
        match_summary,
        initial_s_com_percent: sim.percent(episode.initial_s_com),
        final_s_com_percent: sim.percent(episode.final_s_com),
        steps: episode.steps,
        bricks_placed: final_state.assembly().len() - env.assembly().len(),
        done_reason: episode.done_reason,
        stalled_at_start: stalled,
        grounded: episode.grounded,
        wall_seconds: start.elapsed().as_secs_f64(),
        exports: paths.clone(),
        success: !stalled && episode.grounded && episode.final_s_com >= episode.initial_s_com,
    };
    write_json(&paths.report, &report)?;
    println!("{}", paths.report);
    log::info!(
        "{} steps, S_com {:.1}% -> {:.1}%",
        report.steps,
        report.initial_s_com_percent,
        report.final_s_com_percent
    );
    if !report.success {
        return Err(ReportedFailure(if stalled {
            "no valid action in the initial state".into()
        } else {
            "completion did not finish in a grounded, non-worse state".into()
        })
        .into());
    }
    Ok(())
}
