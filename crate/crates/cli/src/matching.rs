use std::time::Instant;

use anyhow::Context;

use brickfill::io::{load_grid, load_library, save_voxel, write_json};
use brickfill::matching::{match_library, MatchResult, ObjectLibrary, SimilarityConfig};
use brickfill::pointcloud::RegistrationConfig;
use brickfill::voxel::VoxelGrid;

use crate::report::{MatchReport, SCHEMA_VERSION};
use crate::{ensure_dir, MatchArgs, UsageError};

pub(crate) fn infer_target(
    incomplete: &VoxelGrid,
    library: &ObjectLibrary,
    registration: &RegistrationConfig,
    similarity: &SimilarityConfig,
) -> anyhow::Result<MatchResult> {
    if library.is_empty() {
        return Err(UsageError("library has no entries".into()).into());
    }
    let m = match_library(incomplete, library, registration, similarity)
        .context("matching against the library failed")?;
    log::info!(
        "matched {} at scale {:.3} ({:.1}%)",
        m.name,
        m.scale,
        similarity.percent(m.score)
    );
    Ok(m)
}

pub(crate) fn run(a: &MatchArgs) -> anyhow::Result<()> {
    let start = Instant::now();
    let similarity = match (a.alpha, a.beta) {
        (Some(alpha), Some(beta)) => SimilarityConfig { alpha, beta },
        _ => SimilarityConfig::default(),
    };
    similarity.validate()?;
    let registration = RegistrationConfig {
        rng_seed: a.seed,
        ..RegistrationConfig::default()
    };
    let incomplete = load_grid(&a.incomplete)?;
    let library = load_library(&a.library)?;
    let m = infer_target(&incomplete, &library, &registration, &similarity)?;

    ensure_dir(&a.out)?;
    let target_path = a.out.join("aligned_target.json");
    save_voxel(&target_path, &m.aligned_target)?;
    let report = MatchReport {
        schema_version: SCHEMA_VERSION,
        incomplete: a.incomplete.display().to_string(),
        library: a.library.display().to_string(),
        seed: a.seed,
        selected: m.name.clone(),
        scale: m.scale,
        scale_center: m.scale_center,
        transform: m.transform,
        score: m.score,
        score_percent: similarity.percent(m.score),
        per_entry: m.per_entry.clone(),
        aligned_target: target_path.display().to_string(),
        wall_seconds: start.elapsed().as_secs_f64(),
        success: true,
    };
    let report_path = a.out.join("match_report.json");
    write_json(&report_path, &report)?;
    println!("{}", report_path.display());
    Ok(())
}
