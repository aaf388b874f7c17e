//! JSON documents written by the commands. Field names are stable; any
//! incompatible change bumps [`SCHEMA_VERSION`].

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use brickfill::env::DoneReason;
use brickfill::matching::{EntryReport, MatchResult, SimilarityConfig};
use brickfill::pointcloud::{Point, RigidTransform};
use brickfill::policy::TrainConfig;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    pub schema_version: u32,
    pub incomplete: String,
    pub library: String,
    pub seed: u64,
    pub selected: String,
    pub scale: f64,
    pub scale_center: Point,
    pub transform: RigidTransform,
    pub score: f64,
    pub score_percent: f64,
    pub per_entry: Vec<EntryReport>,
    pub aligned_target: String,
    pub wall_seconds: f64,
    pub success: bool,
}

/// The part of a match carried into a completion report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchSummary {
    pub selected: String,
    pub scale: f64,
    pub transform: RigidTransform,
    pub score_percent: f64,
    /// Failed entries are `null`.
    pub per_entry_percent: BTreeMap<String, Option<f64>>,
}

impl MatchSummary {
    pub fn new(m: &MatchResult, sim: &SimilarityConfig) -> Self {
        Self {
            selected: m.name.clone(),
            scale: m.scale,
            transform: m.transform,
            score_percent: sim.percent(m.score),
            per_entry_percent: m
                .per_entry
                .iter()
                .map(|e| (e.name.clone(), e.score.map(|s| sim.percent(s))))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exports {
    pub report: String,
    pub trace: String,
    pub assembly: String,
    pub ply: String,
    pub target: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub scenario: String,
    pub policy: String,
    pub seed: u64,
    /// `"library"` when the target was inferred, `"pinned"` otherwise.
    pub target_source: String,
    #[serde(rename = "match")]
    pub match_summary: Option<MatchSummary>,
    pub initial_s_com_percent: f64,
    pub final_s_com_percent: f64,
    pub steps: usize,
    pub bricks_placed: usize,
    pub done_reason: Option<DoneReason>,
    /// No valid action existed in the initial state although it differs
    /// from the target.
    pub stalled_at_start: bool,
    pub grounded: bool,
    pub wall_seconds: f64,
    pub exports: Exports,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyScore {
    pub policy: String,
    pub episodes: usize,
    pub mean_final_s_com_percent: f64,
    pub mean_steps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub schema_version: u32,
    pub scenario: String,
    pub config: TrainConfig,
    pub resumed_from: Option<String>,
    pub env_steps: u64,
    pub updates: u64,
    pub checkpoint: String,
    pub curve: String,
    pub evaluation: Vec<PolicyScore>,
    pub wall_seconds: f64,
    pub success: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RejectionTally {
    pub boundary: usize,
    pub collision: usize,
    pub inventory: usize,
    pub hooking: usize,
    pub similarity: usize,
    pub orientation_dedupe: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditSample {
    pub sample: usize,
    pub valid_count: usize,
    pub mismatches: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub schema_version: u32,
    pub scenario: String,
    pub seed: u64,
    pub samples: usize,
    pub action_space_size: usize,
    pub total_mismatches: usize,
    pub mean_valid_count: f64,
    /// Rejections per predicate summed over samples; an action counts once
    /// for every predicate it fails.
    pub rejections: RejectionTally,
    /// `rejections` divided by `samples * action_space_size`.
    pub rejection_fraction: BTreeMap<String, f64>,
    pub per_sample: Vec<AuditSample>,
    pub wall_seconds: f64,
    pub success: bool,
}
