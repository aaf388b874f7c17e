//! Intent inference: similarity scores between voxel structures and the
//! library query that produces an aligned reference grid.

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pointcloud::{
    compute_fpfh, estimate_normals, icp_refine, pca, pca_scale_factor, pointcloud_to_voxel,
    ransac_align, voxel_to_pointcloud, voxel_to_supersampled_cloud, KdTree, Point, PointCloud,
    PcaSummary, RegistrationConfig, RigidTransform,
};
use crate::voxel::{connected_components, is_grounded, Assembly, VoxelGrid};

/// Weights of the geometric (Chamfer) and structural terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityConfig {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for SimilarityConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            beta: 0.5,
        }
    }
}

impl SimilarityConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.beta >= 0.0 && self.alpha + self.beta > 0.0) {
            return Err(Error::Config(format!(
                "similarity weights must be non-negative with a positive sum (alpha {}, beta {})",
                self.alpha, self.beta
            )));
        }
        Ok(())
    }

    pub fn total(&self) -> f64 {
        self.alpha + self.beta
    }

    /// Score as a percentage of the maximum `alpha + beta`.
    pub fn percent(&self, score: f64) -> f64 {
        100.0 * score / self.total()
    }
}

// ---------------------------------------------------------------------------
// Scalar terms shared by every evaluation path.

/// `1 - |u - v| / max(u, v)`, taken as 1 when both are zero.
#[inline]
pub(crate) fn relative_agreement(u: f64, v: f64) -> f64 {
    let m = u.max(v);
    if m == 0.0 {
        1.0
    } else {
        1.0 - (u - v).abs() / m
    }
}

/// Mean of the component-count and density agreements.
#[inline]
pub(crate) fn feature_term(cc_a: usize, cc_b: usize, rho_a: f64, rho_b: f64) -> f64 {
    (relative_agreement(cc_a as f64, cc_b as f64) + relative_agreement(rho_a, rho_b)) / 2.0
}

#[inline]
pub(crate) fn density_of(occupied: usize, bbox_volume: usize) -> f64 {
    if occupied == 0 {
        0.0
    } else {
        occupied as f64 / bbox_volume as f64
    }
}

/// Mean of `sqrt(k)` weighted by `hist[k]`, summed in ascending `k`.
///
/// Cell centers sit on a common integer lattice, so every nearest distance
/// is the root of an integer. Accumulating by squared distance makes the sum
/// independent of point order, which lets incremental and from-scratch
/// evaluations agree bit for bit.
#[inline]
pub(crate) fn histogram_mean(hist: &[u32], count: usize) -> f64 {
    let mut sum = 0.0;
    for (k, &c) in hist.iter().enumerate() {
        if c != 0 {
            sum += c as f64 * (k as f64).sqrt();
        }
    }
    sum / count as f64
}

/// Symmetric Chamfer from the two directed nearest-distance histograms.
/// Infinite when either side is empty.
#[inline]
pub(crate) fn chamfer_from_histograms(h_ab: &[u32], n_a: usize, h_ba: &[u32], n_b: usize) -> f64 {
    if n_a == 0 || n_b == 0 {
        return f64::INFINITY;
    }
    (histogram_mean(h_ab, n_a) + histogram_mean(h_ba, n_b)) / 2.0
}

#[inline]
pub(crate) fn combine(cfg: &SimilarityConfig, chamfer: f64, feature: f64) -> f64 {
    cfg.alpha * (-chamfer).exp() + cfg.beta * feature
}

/// Largest squared distance between two cells of a grid.
pub(crate) fn max_sq_distance(dims: [usize; 3]) -> usize {
    dims.iter().map(|&d| (d.saturating_sub(1)).pow(2)).sum()
}

pub(crate) fn cell_points(grid: &VoxelGrid) -> Vec<Point> {
    grid.occupied_cells()
        .into_iter()
        .map(|c| c.map(|v| v as f64))
        .collect()
}

/// Histogram over `from` cells of the squared distance to the nearest `to` cell.
pub(crate) fn nearest_sq_histogram(from: &[Point], to: &KdTree, len: usize) -> Vec<u32> {
    let mut hist = vec![0u32; len];
    for p in from {
        let (_, d2) = to.nearest(p).expect("non-empty tree");
        hist[d2 as usize] += 1;
    }
    hist
}

/// Chamfer distance between the cell-center clouds of two same-shaped grids.
pub fn grid_chamfer(a: &VoxelGrid, b: &VoxelGrid) -> Result<f64> {
    check_pair(a, b)?;
    Ok(grid_chamfer_unchecked(a, b))
}

fn grid_chamfer_unchecked(a: &VoxelGrid, b: &VoxelGrid) -> f64 {
    if a.is_empty() || b.is_empty() {
        return f64::INFINITY;
    }
    let (pa, pb) = (cell_points(a), cell_points(b));
    let (ta, tb) = (KdTree::build(&pa), KdTree::build(&pb));
    let len = max_sq_distance(a.dims()) + 1;
    let h_ab = nearest_sq_histogram(&pa, &tb, len);
    let h_ba = nearest_sq_histogram(&pb, &ta, len);
    chamfer_from_histograms(&h_ab, pa.len(), &h_ba, pb.len())
}

fn check_pair(a: &VoxelGrid, b: &VoxelGrid) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::ShapeMismatch(a.dims(), b.dims()));
    }
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyInput("similarity needs two non-empty grids"));
    }
    Ok(())
}

fn grid_density(g: &VoxelGrid) -> f64 {
    density_of(g.occupied_count(), g.bounding_box().map_or(0, |b| b.volume()))
}

/// Structural similarity: mean agreement of component counts and densities.
pub fn feature_similarity(a: &VoxelGrid, b: &VoxelGrid) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyInput("similarity needs two non-empty grids"));
    }
    Ok(feature_term(
        connected_components(a),
        connected_components(b),
        grid_density(a),
        grid_density(b),
    ))
}

/// The terms behind one combined score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityBreakdown {
    pub chamfer: f64,
    pub feature: f64,
    pub score: f64,
}

/// Breakdown that treats an empty grid as scoring zero on both terms
/// (infinite Chamfer, no components, no density).
pub fn similarity_breakdown(
    a: &VoxelGrid,
    b: &VoxelGrid,
    cfg: &SimilarityConfig,
) -> Result<SimilarityBreakdown> {
    if a.dims() != b.dims() {
        return Err(Error::ShapeMismatch(a.dims(), b.dims()));
    }
    let chamfer = grid_chamfer_unchecked(a, b);
    let feature = feature_term(
        connected_components(a),
        connected_components(b),
        grid_density(a),
        grid_density(b),
    );
    Ok(SimilarityBreakdown {
        chamfer,
        feature,
        score: combine(cfg, chamfer, feature),
    })
}

/// `alpha * exp(-chamfer) + beta * feature_similarity`.
pub fn combined_similarity(a: &VoxelGrid, b: &VoxelGrid, cfg: &SimilarityConfig) -> Result<f64> {
    check_pair(a, b)?;
    Ok(similarity_breakdown(a, b, cfg)?.score)
}

// ---------------------------------------------------------------------------
// Library query.

/// Named complete assemblies, each grounded.
#[derive(Debug, Clone, Default)]
pub struct ObjectLibrary {
    entries: BTreeMap<String, Assembly>,
}

impl ObjectLibrary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, assembly: Assembly) -> Result<()> {
        let name = name.into();
        if !is_grounded(&assembly) {
            return Err(Error::UngroundedEntry(name));
        }
        if self.entries.contains_key(&name) {
            return Err(Error::Config(format!("duplicate library entry `{name}`")));
        }
        self.entries.insert(name, assembly);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&Assembly> {
        self.entries.get(name)
    }

    /// Entries in name order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &Assembly)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }
}

/// How a library entry was brought onto the incomplete structure: scale
/// about `scale_center`, then `transform`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryRegistration {
    pub scale: f64,
    pub scale_center: Point,
    pub transform: RigidTransform,
    pub ransac_fitness: f64,
    pub icp_rmse: f64,
}

impl EntryRegistration {
    pub fn apply(&self, cloud: &PointCloud) -> PointCloud {
        cloud
            .scaled_about(&self.scale_center, self.scale)
            .transformed(&self.transform)
    }
}

/// Which stages of the registration pipeline run; the full pipeline enables all.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PipelineStages {
    pub scale: bool,
    pub ransac: bool,
    pub icp: bool,
}

impl PipelineStages {
    pub const FULL: Self = Self {
        scale: true,
        ransac: true,
        icp: true,
    };
}

/// Scales and registers `entry` onto `incomplete`.
///
/// Correspondences run from the incomplete cloud into the entry, since every
/// incomplete point has a counterpart in a complete object but not the
/// reverse; the resulting motion is inverted so that the entry is the cloud
/// that moves.
/// Both clouds are voxel cell centers. Each stands for a unit cube, whose
/// own spread adds 1/12 to the variance along every axis.
fn solid(mut p: PcaSummary) -> PcaSummary {
    for v in &mut p.explained_variances {
        *v += 1.0 / 12.0;
    }
    p
}

pub fn register_entry(
    incomplete: &PointCloud,
    entry: &PointCloud,
    config: &RegistrationConfig,
    stages: PipelineStages,
) -> Result<EntryRegistration> {
    let entry_pca = pca(entry)?;
    let center = entry_pca.mean;
    let (scaled, scale) = if stages.scale {
        let scale = pca_scale_factor(&solid(pca(incomplete)?), &solid(entry_pca))?;
        (entry.scaled_about(&center, scale), scale)
    } else {
        (entry.clone(), 1.0)
    };
    let (init, fitness) = if stages.ransac {
        let fi = compute_fpfh(incomplete, &estimate_normals(incomplete, config), config);
        let fe = compute_fpfh(&scaled, &estimate_normals(&scaled, config), config);
        let a = ransac_align(incomplete, &scaled, &fi, &fe, config)?;
        if a.inliers == 0 {
            return Err(Error::DegenerateGeometry(
                "no RANSAC hypothesis produced inliers".into(),
            ));
        }
        (a.transform, a.fitness)
    } else {
        (RigidTransform::identity(), f64::NAN)
    };
    let (forward, rmse) = if stages.icp {
        let r = icp_refine(incomplete, &scaled, &init, config)?;
        (r.transform, r.rmse)
    } else {
        (init, f64::NAN)
    };
    Ok(EntryRegistration {
        scale,
        scale_center: center,
        transform: forward.inverse(),
        ransac_fitness: fitness,
        icp_rmse: rmse,
    })
}

/// Rasterizes a registered entry into `dims`. Cells are supersampled when
/// the entry is enlarged so the scaled cells leave no gaps.
pub fn aligned_grid(entry: &VoxelGrid, reg: &EntryRegistration, dims: [usize; 3]) -> VoxelGrid {
    let n = if reg.scale <= 1.0 {
        1
    } else {
        (reg.scale * 3f64.sqrt()).ceil() as usize
    };
    let cloud = voxel_to_supersampled_cloud(entry, n);
    pointcloud_to_voxel(&reg.apply(&cloud), dims).grid
}

/// Outcome for one library entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryReport {
    pub name: String,
    /// `None` when registration failed.
    pub score: Option<f64>,
    pub error: Option<String>,
    pub registration: Option<EntryRegistration>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    pub name: String,
    pub scale: f64,
    pub scale_center: Point,
    pub transform: RigidTransform,
    pub aligned_target: VoxelGrid,
    pub score: f64,
    pub per_entry: Vec<EntryReport>,
}

impl MatchResult {
    /// Failed entries score negative infinity.
    pub fn per_entry_scores(&self) -> BTreeMap<String, f64> {
        self.per_entry
            .iter()
            .map(|e| (e.name.clone(), e.score.unwrap_or(f64::NEG_INFINITY)))
            .collect()
    }
}

fn score_entry(
    incomplete: &VoxelGrid,
    cloud: &PointCloud,
    entry: &Assembly,
    reg_cfg: &RegistrationConfig,
    sim_cfg: &SimilarityConfig,
    stages: PipelineStages,
) -> Result<(EntryRegistration, VoxelGrid, f64)> {
    let entry_cloud = voxel_to_pointcloud(entry.grid())?;
    let reg = register_entry(cloud, &entry_cloud, reg_cfg, stages)?;
    let aligned = aligned_grid(entry.grid(), &reg, incomplete.dims());
    if aligned.is_empty() {
        return Err(Error::DegenerateGeometry(
            "registered entry falls entirely outside the grid".into(),
        ));
    }
    let score = combined_similarity(incomplete, &aligned, sim_cfg)?;
    Ok((reg, aligned, score))
}

/// Scores every library entry against `incomplete` and returns the best,
/// ties broken by name. Entries that fail to register are reported with
/// their cause and never selected.
pub fn match_library(
    incomplete: &VoxelGrid,
    library: &ObjectLibrary,
    reg_cfg: &RegistrationConfig,
    sim_cfg: &SimilarityConfig,
) -> Result<MatchResult> {
    match_library_with(incomplete, library, reg_cfg, sim_cfg, PipelineStages::FULL)
}

/// [`match_library`] with some registration stages switched off.
pub fn match_library_with(
    incomplete: &VoxelGrid,
    library: &ObjectLibrary,
    reg_cfg: &RegistrationConfig,
    sim_cfg: &SimilarityConfig,
    stages: PipelineStages,
) -> Result<MatchResult> {
    reg_cfg.validate()?;
    sim_cfg.validate()?;
    if library.is_empty() {
        return Err(Error::EmptyInput("object library is empty"));
    }
    let cloud = voxel_to_pointcloud(incomplete)?;
    let entries: Vec<(&str, &Assembly)> = library.iter().collect();
    let outcomes: Vec<(EntryReport, Option<VoxelGrid>)> = entries
        .par_iter()
        .map(|&(name, entry)| {
            let start = Instant::now();
            let outcome = score_entry(incomplete, &cloud, entry, reg_cfg, sim_cfg, stages);
            let seconds = start.elapsed().as_secs_f64();
            match outcome {
                Ok((reg, grid, score)) => (
                    EntryReport {
                        name: name.to_string(),
                        score: Some(score),
                        error: None,
                        registration: Some(reg),
                        seconds,
                    },
                    Some(grid),
                ),
                Err(e) => {
                    log::warn!("library entry `{name}` failed: {e}");
                    (
                        EntryReport {
                            name: name.to_string(),
                            score: None,
                            error: Some(e.to_string()),
                            registration: None,
                            seconds,
                        },
                        None,
                    )
                }
            }
        })
        .collect();

    // Entries are in name order, so keeping the first maximum breaks ties by name.
    let mut best: Option<usize> = None;
    for (i, (report, _)) in outcomes.iter().enumerate() {
        if let Some(s) = report.score {
            if best.is_none_or(|b| s > outcomes[b].0.score.unwrap()) {
                best = Some(i);
            }
        }
    }
    let Some(best) = best else {
        return Err(Error::MatchFailure(
            outcomes
                .iter()
                .map(|(r, _)| format!("{}: {}", r.name, r.error.as_deref().unwrap_or("unknown")))
                .collect(),
        ));
    };
    let per_entry: Vec<EntryReport> = outcomes.iter().map(|(r, _)| r.clone()).collect();
    let (report, grid) = outcomes.into_iter().nth(best).expect("index in range");
    let reg = report.registration.expect("scored entries are registered");
    Ok(MatchResult {
        name: report.name,
        scale: reg.scale,
        scale_center: reg.scale_center,
        transform: reg.transform,
        aligned_target: grid.expect("scored entries have a grid"),
        score: report.score.expect("scored"),
        per_entry,
    })
}
