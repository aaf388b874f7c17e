use std::collections::BTreeMap;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use brickfill::env::{brute_force_mask_with_tally, EnvState};
use brickfill::io::{load_scenario, write_json};
use brickfill::synth::random_reachable_state;

use crate::report::{AuditReport, AuditSample, RejectionTally, SCHEMA_VERSION};
use crate::{AuditArgs, ReportedFailure};

/// Random reachable states on the scenario's grid, catalog and mask
/// settings, each holding the scenario's inventory.
pub(crate) fn run(a: &AuditArgs) -> anyhow::Result<()> {
    let start = Instant::now();
    let sc = load_scenario(&a.scenario)?;
    let dims = sc.incomplete.dims();
    let catalog = sc.incomplete.catalog().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let mut tally = RejectionTally::default();
    let mut per_sample = Vec::with_capacity(a.samples);
    let mut space = 0;
    for k in 0..a.samples {
        let walked = random_reachable_state(dims, &catalog, sc.env, &mut rng)?;
        let state = EnvState::new(
            walked.assembly().clone(),
            walked.target().clone(),
            sc.inventory.clone(),
            sc.env,
        )?;
        space = state.action_space().size();
        let fast = state.compute_mask();
        let (oracle, t) = brute_force_mask_with_tally(&state);
        tally.boundary += t.boundary;
        tally.collision += t.collision;
        tally.inventory += t.inventory;
        tally.hooking += t.hooking;
        tally.similarity += t.similarity;
        tally.orientation_dedupe += t.orientation_dedupe;
        let mismatches = fast.mismatches(&oracle);
        if !mismatches.is_empty() {
            log::error!("sample {k}: {} mismatched actions", mismatches.len());
        }
        per_sample.push(AuditSample {
            sample: k,
            valid_count: oracle.valid_count,
            mismatches,
        });
    }
    let total_mismatches: usize = per_sample.iter().map(|s| s.mismatches.len()).sum();
    let denom = (a.samples * space).max(1) as f64;
    let rejection_fraction = BTreeMap::from([
        ("boundary".to_string(), tally.boundary as f64 / denom),
        ("collision".to_string(), tally.collision as f64 / denom),
        ("inventory".to_string(), tally.inventory as f64 / denom),
        ("hooking".to_string(), tally.hooking as f64 / denom),
        ("similarity".to_string(), tally.similarity as f64 / denom),
        ("orientation_dedupe".to_string(), tally.orientation_dedupe as f64 / denom),
    ]);
    let report = AuditReport {
        schema_version: SCHEMA_VERSION,
        scenario: a.scenario.display().to_string(),
        seed: a.seed,
        samples: a.samples,
        action_space_size: space,
        total_mismatches,
        mean_valid_count: per_sample.iter().map(|s| s.valid_count as f64).sum::<f64>()
            / a.samples.max(1) as f64,
        rejections: tally,
        rejection_fraction,
        wall_seconds: start.elapsed().as_secs_f64(),
        success: total_mismatches == 0,
        per_sample,
    };
    match &a.out {
        Some(p) => {
            write_json(p, &report)?;
            println!("{}", p.display());
        }
        None => println!("{}", serde_json::to_string_pretty(&report)?),
    }
    if total_mismatches > 0 {
        let offending: Vec<String> = report
            .per_sample
            .iter()
            .filter(|s| !s.mismatches.is_empty())
            .map(|s| format!("sample {}: {:?}", s.sample, s.mismatches))
            .collect();
        return Err(ReportedFailure(format!(
            "{total_mismatches} mask mismatches; {}",
            offending.join("; ")
        ))
        .into());
    }
    Ok(())
}
