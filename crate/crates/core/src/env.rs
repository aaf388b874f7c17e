//! The assembly MDP: state, flattened action space, transition, reward and
//! the five-predicate action validity mask.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matching::{
    chamfer_from_histograms, combine, density_of, feature_term, max_sq_distance,
    similarity_breakdown, SimilarityConfig,
};
use crate::pointcloud::KdTree;
use crate::voxel::{
    cells_of, component_labels, connected_components, is_grounded, overlap_count, Assembly,
    BoundingBox, BrickInstance, Cell, Dims, Inventory, VoxelGrid, FACE_NEIGHBORS,
};

/// One placement decision: brick type, anchor cell and orientation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Action {
    #[serde(rename = "B")]
    pub type_id: usize,
    #[serde(rename = "pos")]
    pub position: Cell,
    #[serde(rename = "orient")]
    pub orientation: u8,
}

impl Action {
    pub fn new(type_id: usize, position: Cell, orientation: u8) -> Self {
        Self {
            type_id,
            position,
            orientation,
        }
    }

    pub fn brick(&self) -> BrickInstance {
        BrickInstance::new(self.type_id, self.position, self.orientation)
    }
}

/// Flattening `((((x*w + y)*d + z)*N + B)*2 + orientation)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActionSpace {
    pub dims: Dims,
    pub n_types: usize,
}

impl ActionSpace {
    pub fn new(dims: Dims, n_types: usize) -> Self {
        Self { dims, n_types }
    }

    pub fn size(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2] * self.n_types * 2
    }

    pub fn index(&self, a: &Action) -> Result<usize> {
        let [h, w, d] = self.dims;
        let [x, y, z] = a.position;
        if x >= h || y >= w || z >= d {
            return Err(Error::ActionComponent(format!(
                "position {:?} outside {:?}",
                a.position, self.dims
            )));
        }
        if a.type_id >= self.n_types {
            return Err(Error::ActionComponent(format!(
                "brick type {} with {} types",
                a.type_id, self.n_types
            )));
        }
        if a.orientation > 1 {
            return Err(Error::ActionComponent(format!("orientation {}", a.orientation)));
        }
        Ok(((((x * w + y) * d + z) * self.n_types + a.type_id) * 2) + a.orientation as usize)
    }

    pub fn decode(&self, index: usize) -> Result<Action> {
        if index >= self.size() {
            return Err(Error::ActionIndex {
                index,
                size: self.size(),
            });
        }
        let [_, w, d] = self.dims;
        let orientation = (index % 2) as u8;
        let rest = index / 2;
        let type_id = rest % self.n_types;
        let cell = rest / self.n_types;
        let z = cell % d;
        let y = (cell / d) % w;
        let x = cell / (d * w);
        Ok(Action::new(type_id, [x, y, z], orientation))
    }
}

pub fn action_index(a: &Action, dims: Dims, n_types: usize) -> Result<usize> {
    ActionSpace::new(dims, n_types).index(a)
}

pub fn decode_action(index: usize, dims: Dims, n_types: usize) -> Result<Action> {
    ActionSpace::new(dims, n_types).decode(index)
}

/// Boolean filter over the flattened action space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionMask {
    pub bits: Vec<bool>,
    pub valid_count: usize,
}

impl ActionMask {
    pub fn empty(size: usize) -> Self {
        Self {
            bits: vec![false; size],
            valid_count: 0,
        }
    }

    pub fn from_valid(size: usize, valid: impl IntoIterator<Item = usize>) -> Self {
        let mut m = Self::empty(size);
        for i in valid {
            if !m.bits[i] {
                m.bits[i] = true;
                m.valid_count += 1;
            }
        }
        m
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn is_valid(&self, index: usize) -> bool {
        self.bits.get(index).copied().unwrap_or(false)
    }

    pub fn valid_indices(&self) -> Vec<usize> {
        self.bits
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
            .collect()
    }

    /// Indices where the two masks disagree.
    pub fn mismatches(&self, other: &ActionMask) -> Vec<usize> {
        self.bits
            .iter()
            .zip(&other.bits)
            .enumerate()
            .filter_map(|(i, (a, b))| (a != b).then_some(i))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaskConfig {
    /// Boundary tolerance `X` in cells around the target.
    #[serde(rename = "X")]
    pub boundary_tol: usize,
    /// A placement must raise the combined similarity by more than this.
    #[serde(rename = "eps_sim")]
    pub sim_tolerance: f64,
    #[serde(rename = "dedupe_square")]
    pub dedupe_square_orientations: bool,
}

impl Default for MaskConfig {
    fn default() -> Self {
        Self {
            boundary_tol: 2,
            sim_tolerance: 0.0,
            dedupe_square_orientations: true,
        }
    }
}

impl MaskConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sim_tolerance.is_nan() || self.sim_tolerance < 0.0 {
            return Err(Error::Config(format!(
                "mask.eps_sim must be >= 0, got {}",
                self.sim_tolerance
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    /// Weight of the overlap count.
    pub c: f64,
    /// Weight of the combined similarity.
    pub d: f64,
    pub gamma: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            c: 1.0,
            d: 10.0,
            gamma: 0.99,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c >= 0.0 && self.d >= 0.0 && self.c + self.d > 0.0) || !self.c.is_finite() || !self.d.is_finite() {
            return Err(Error::Config(format!(
                "reward weights must be finite, non-negative and not both zero (c {}, d {})",
                self.c, self.d
            )));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::Config(format!("reward.gamma must be in [0, 1), got {}", self.gamma)));
        }
        Ok(())
    }

    pub fn reward(&self, overlap: usize, s_com: f64) -> f64 {
        overlap as f64 * self.c + s_com * self.d
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EnvConfig {
    pub similarity: SimilarityConfig,
    pub mask: MaskConfig,
    pub reward: RewardConfig,
    /// Defaults to twice the target's occupied cell count.
    pub max_steps: Option<usize>,
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        self.similarity.validate()?;
        self.mask.validate()?;
        self.reward.validate()
    }
}

/// Everything derived from the target once per episode.
#[derive(Debug)]
struct TargetInfo {
    grid: VoxelGrid,
    cells: Vec<[i64; 3]>,
    /// Squared distance from every grid cell to the nearest target cell.
    nearest_sq: Vec<u32>,
    /// Target dilated by the boundary tolerance.
    region: Vec<bool>,
    components: usize,
    density: f64,
    hist_len: usize,
}

impl TargetInfo {
    fn new(grid: VoxelGrid, tol: usize) -> Self {
        let dims = grid.dims();
        let cells_u = grid.occupied_cells();
        let points: Vec<[f64; 3]> = cells_u.iter().map(|c| c.map(|v| v as f64)).collect();
        let tree = KdTree::build(&points);
        let nearest_sq = (0..grid.volume())
            .into_par_iter()
            .map(|i| {
                let c = grid.cell_at(i).map(|v| v as f64);
                tree.nearest(&c).expect("target is non-empty").1 as u32
            })
            .collect();
        let mut region = grid.as_slice().to_vec();
        for _ in 0..tol {
            let prev = region.clone();
            for (i, &occ) in prev.iter().enumerate() {
                if !occ {
                    continue;
                }
                let [x, y, z] = grid.cell_at(i);
                for off in FACE_NEIGHBORS {
                    let (nx, ny, nz) = (x as i64 + off[0], y as i64 + off[1], z as i64 + off[2]);
                    if grid.contains(nx, ny, nz) {
                        region[grid.index([nx as usize, ny as usize, nz as usize])] = true;
                    }
                }
            }
        }
        let components = connected_components(&grid);
        let density = density_of(grid.occupied_count(), grid.bounding_box().map_or(0, |b| b.volume()));
        Self {
            cells: cells_u.iter().map(|c| c.map(|v| v as i64)).collect(),
            nearest_sq,
            region,
            components,
            density,
            hist_len: max_sq_distance(dims) + 1,
            grid,
        }
    }
}

/// Episode state `(V_cur, V_tar, I)` with the cached combined similarity.
#[derive(Debug, Clone)]
pub struct EnvState {
    assembly: Assembly,
    target: Arc<TargetInfo>,
    inventory: Inventory,
    initial_inventory: Inventory,
    config: EnvConfig,
    step: usize,
    max_steps: usize,
    s_com: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DoneReason {
    NoValidActions,
    MaxSteps,
}

#[derive(Debug, Clone)]
pub struct StepResult {
    pub next_state: EnvState,
    pub reward: f64,
    pub done: bool,
    pub done_reason: Option<DoneReason>,
    /// Mask of `next_state`, computed to decide termination.
    pub mask: ActionMask,
}

/// A mask-valid action with the outcome of taking it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidAction {
    pub index: usize,
    pub s_com: f64,
    /// Overlap with the target after placement.
    pub overlap: usize,
}

impl EnvState {
    pub fn new(
        initial: Assembly,
        target: VoxelGrid,
        inventory: Inventory,
        config: EnvConfig,
    ) -> Result<Self> {
        config.validate()?;
        if initial.dims() != target.dims() {
            return Err(Error::ShapeMismatch(initial.dims(), target.dims()));
        }
        if target.is_empty() {
            return Err(Error::EmptyInput("target grid is empty"));
        }
        let max_steps = config.max_steps.unwrap_or(2 * target.occupied_count());
        let s_com = similarity_breakdown(initial.grid(), &target, &config.similarity)?.score;
        Ok(Self {
            target: Arc::new(TargetInfo::new(target, config.mask.boundary_tol)),
            assembly: initial,
            initial_inventory: inventory.clone(),
            inventory,
            config,
            step: 0,
            max_steps,
            s_com,
        })
    }

    pub fn assembly(&self) -> &Assembly {
        &self.assembly
    }

    pub fn current(&self) -> &VoxelGrid {
        self.assembly.grid()
    }

    pub fn target(&self) -> &VoxelGrid {
        &self.target.grid
    }

    pub fn dims(&self) -> Dims {
        self.assembly.dims()
    }

    pub fn inventory(&self) -> &Inventory {
        &self.inventory
    }

    pub fn initial_inventory(&self) -> &Inventory {
        &self.initial_inventory
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn step_count(&self) -> usize {
        self.step
    }

    pub fn max_steps(&self) -> usize {
        self.max_steps
    }

    /// Cached `combined_similarity(v_cur, v_tar)`, zero while `v_cur` is empty.
    pub fn s_com(&self) -> f64 {
        self.s_com
    }

    pub fn overlap(&self) -> usize {
        overlap_count(self.current(), self.target()).expect("dims checked at construction")
    }

    pub fn action_space(&self) -> ActionSpace {
        ActionSpace::new(self.dims(), self.assembly.catalog().len())
    }

    pub fn is_grounded(&self) -> bool {
        is_grounded(&self.assembly)
    }

    /// Every mask-valid action in index order, with its resulting similarity
    /// and overlap.
    pub fn valid_actions(&self) -> Vec<ValidAction> {
        let space = self.action_space();
        let catalog = self.assembly.catalog();
        let [h, w, d] = self.dims();
        let n = catalog.len();
        let eval = Evaluator::new(self);
        let threshold = self.s_com + self.config.mask.sim_tolerance;
        let grid = self.current();
        let target = &*self.target;
        // (type, orientation, extent along x, extent along y) worth trying.
        let shapes: Vec<(usize, u8, usize, usize)> = catalog
            .iter()
            .filter(|b| self.inventory.has(b.id))
            .flat_map(|b| {
                let dedupe = self.config.mask.dedupe_square_orientations && b.is_square();
                let orients: &[u8] = if dedupe { &[0] } else { &[0, 1] };
                orients.iter().map(move |&o| {
                    let (ex, ey) = b.extent(o);
                    (b.id, o, ex, ey)
                })
            })
            .collect();
        (0..h)
            .into_par_iter()
            .flat_map_iter(|x| {
                let mut out = Vec::new();
                let mut cells = Vec::with_capacity(16);
                for y in 0..w {
                    for z in 0..d {
                        for &(b, o, ex, ey) in &shapes {
                            if x + ex > h || y + ey > w {
                                continue;
                            }
                            cells.clear();
                            let mut ok = true;
                            let mut hooked = z == 0;
                            'cells: for i in x..x + ex {
                                for j in y..y + ey {
                                    let idx = grid.index([i, j, z]);
                                    if !target.region[idx] || grid.get_index(idx) {
                                        ok = false;
                                        break 'cells;
                                    }
                                    if !hooked {
                                        hooked = (z > 0 && grid.get([i, j, z - 1]))
                                            || (z + 1 < d && grid.get([i, j, z + 1]));
                                    }
                                    cells.push([i, j, z]);
                                }
                            }
                            if !ok || !hooked {
                                continue;
                            }
                            let s = eval.candidate_score(&cells);
                            if s > threshold {
                                let gained = cells
                                    .iter()
                                    .filter(|&&c| target.grid.get(c))
                                    .count();
                                let index = ((((x * w + y) * d + z) * n + b) * 2) + o as usize;
                                debug_assert_eq!(index, space.index(&Action::new(b, [x, y, z], o)).unwrap());
                                out.push(ValidAction {
                                    index,
                                    s_com: s,
                                    overlap: eval.overlap + gained,
                                });
                            }
                        }
                    }
                }
                out
            })
            .collect()
    }

    /// The action validity mask, evaluated incrementally.
    pub fn compute_mask(&self) -> ActionMask {
        let size = self.action_space().size();
        ActionMask::from_valid(size, self.valid_actions().into_iter().map(|v| v.index))
    }

    /// All five predicates for one action, with the similarity evaluated from scratch.
    pub fn is_valid_action(&self, a: &Action) -> bool {
        if self.config.mask.dedupe_square_orientations
            && a.orientation == 1
            && self
                .assembly
                .catalog()
                .get(a.type_id)
                .is_ok_and(|b| b.is_square())
        {
            return false;
        }
        predicate_inventory(a, self)
            && predicate_collision(a, self)
            && predicate_hooking(a, self)
            && self.in_region(a)
            && self
                .placed_similarity(a)
                .is_some_and(|s| s > self.s_com + self.config.mask.sim_tolerance)
    }

    fn in_region(&self, a: &Action) -> bool {
        match cells_of(&a.brick(), self.assembly.catalog()) {
            Ok(cells) => cells.iter().all(|&c| {
                self.current().contains_cell(c) && self.target.region[self.current().index(c)]
            }),
            Err(_) => false,
        }
    }

    /// Similarity after placing `a`, or `None` if it does not fit.
    fn placed_similarity(&self, a: &Action) -> Option<f64> {
        let next = self.assembly.clone().with_brick(a.brick()).ok()?;
        Some(
            similarity_breakdown(next.grid(), self.target(), &self.config.similarity)
                .expect("same dims")
                .score,
        )
    }

    /// Applies a mask-valid action.
    pub fn step(&self, index: usize) -> Result<StepResult> {
        let a = self.action_space().decode(index)?;
        if !self.is_valid_action(&a) {
            return Err(Error::InvalidAction(index));
        }
        let mut next = self.clone();
        next.assembly.place_brick(a.brick())?;
        let took = next.inventory.take(a.type_id);
        debug_assert!(took);
        next.step += 1;
        next.s_com = similarity_breakdown(next.current(), next.target(), &next.config.similarity)?.score;
        let reward = next.config.reward.reward(next.overlap(), next.s_com);
        let mask = next.compute_mask();
        let done_reason = if mask.valid_count == 0 {
            Some(DoneReason::NoValidActions)
        } else if next.step >= next.max_steps {
            Some(DoneReason::MaxSteps)
        } else {
            None
        };
        Ok(StepResult {
            next_state: next,
            reward,
            done: done_reason.is_some(),
            done_reason,
            mask,
        })
    }
}

/// Incremental similarity of `v_cur ∪ brick` against the target.
///
/// Every term is rebuilt from integer quantities (component count, occupied
/// count, bounding-box volume, squared-distance histograms) and fed through
/// the same final formula as the from-scratch path, so both agree exactly.
struct Evaluator<'s> {
    state: &'s EnvState,
    labels: Vec<u32>,
    components: usize,
    bbox: Option<BoundingBox>,
    occupied: usize,
    overlap: usize,
    hist_ab: Vec<u32>,
    /// Per target cell, squared distance to the nearest current cell.
    target_nearest: Vec<u32>,
    hist_ba: Vec<u32>,
}

impl<'s> Evaluator<'s> {
    fn new(state: &'s EnvState) -> Self {
        let grid = state.current();
        let target = &*state.target;
        let (labels, components) = component_labels(grid);
        let cur = grid.occupied_cells();
        let mut hist_ab = vec![0u32; target.hist_len];
        for &c in &cur {
            hist_ab[target.nearest_sq[grid.index(c)] as usize] += 1;
        }
        let mut hist_ba = vec![0u32; target.hist_len];
        let target_nearest: Vec<u32> = if cur.is_empty() {
            vec![u32::MAX; target.cells.len()]
        } else {
            let points: Vec<[f64; 3]> = cur.iter().map(|c| c.map(|v| v as f64)).collect();
            let tree = KdTree::build(&points);
            target
                .cells
                .iter()
                .map(|t| tree.nearest(&t.map(|v| v as f64)).expect("non-empty").1 as u32)
                .collect()
        };
        if !cur.is_empty() {
            for &d2 in &target_nearest {
                hist_ba[d2 as usize] += 1;
            }
        }
        Self {
            state,
            labels,
            components,
            bbox: grid.bounding_box(),
            occupied: cur.len(),
            overlap: state.overlap(),
            hist_ab,
            target_nearest,
            hist_ba,
        }
    }

    /// Combined similarity once the (free, in-bounds) `cells` are added.
    fn candidate_score(&self, cells: &[Cell]) -> f64 {
        let grid = self.state.current();
        let target = &*self.state.target;

        let mut touching: Vec<u32> = Vec::with_capacity(8);
        for &[x, y, z] in cells {
            for off in FACE_NEIGHBORS {
                let (nx, ny, nz) = (x as i64 + off[0], y as i64 + off[1], z as i64 + off[2]);
                if grid.contains(nx, ny, nz) {
                    let l = self.labels[grid.index([nx as usize, ny as usize, nz as usize])];
                    if l != u32::MAX {
                        touching.push(l);
                    }
                }
            }
        }
        touching.sort_unstable();
        touching.dedup();
        let components = self.components + 1 - touching.len();

        let mut bbox = BoundingBox::from_cell(cells[0]);
        for &c in &cells[1..] {
            bbox.include(c);
        }
        if let Some(b) = &self.bbox {
            bbox = bbox.union(b);
        }
        let occupied = self.occupied + cells.len();
        let density = density_of(occupied, bbox.volume());

        let mut hist_ab = self.hist_ab.clone();
        for &c in cells {
            hist_ab[target.nearest_sq[grid.index(c)] as usize] += 1;
        }

        let mut hist_ba = self.hist_ba.clone();
        for (t, &old) in target.cells.iter().zip(&self.target_nearest) {
            let mut best = old;
            for c in cells {
                let dx = c[0] as i64 - t[0];
                let dy = c[1] as i64 - t[1];
                let dz = c[2] as i64 - t[2];
                best = best.min((dx * dx + dy * dy + dz * dz) as u32);
            }
            if best < old {
                if old != u32::MAX {
                    hist_ba[old as usize] -= 1;
                }
                hist_ba[best as usize] += 1;
            }
        }

        let chamfer = chamfer_from_histograms(&hist_ab, occupied, &hist_ba, target.cells.len());
        let feature = feature_term(components, target.components, density, target.density);
        combine(&self.state.config.similarity, chamfer, feature)
    }
}

// ---------------------------------------------------------------------------
// Predicates evaluated directly, without any cached geometry.

/// Every brick cell lies within `X` face steps of a target cell.
pub fn predicate_boundary(a: &Action, state: &EnvState) -> bool {
    let Ok(cells) = cells_of(&a.brick(), state.assembly.catalog()) else {
        return false;
    };
    let tol = state.config.mask.boundary_tol as i64;
    let target = state.target();
    let target_cells = target.occupied_cells();
    cells.iter().all(|&c| {
        target.contains_cell(c)
            && target_cells.iter().any(|t| {
                (0..3)
                    .map(|k| (c[k] as i64 - t[k] as i64).abs())
                    .sum::<i64>()
                    <= tol
            })
    })
}

/// All brick cells are in bounds and free.
pub fn predicate_collision(a: &Action, state: &EnvState) -> bool {
    let Ok(cells) = cells_of(&a.brick(), state.assembly.catalog()) else {
        return false;
    };
    let grid = state.current();
    cells.iter().all(|&c| grid.contains_cell(c) && !grid.get(c))
}

pub fn predicate_inventory(a: &Action, state: &EnvState) -> bool {
    state.inventory.count(a.type_id) > 0
}

/// Baseplate contact, or an occupied cell directly below or above the footprint.
pub fn predicate_hooking(a: &Action, state: &EnvState) -> bool {
    let Ok(cells) = cells_of(&a.brick(), state.assembly.catalog()) else {
        return false;
    };
    if a.position[2] == 0 {
        return true;
    }
    let grid = state.current();
    cells.iter().any(|&[x, y, z]| {
        let (x, y, z) = (x as i64, y as i64, z as i64);
        grid.get_signed(x, y, z - 1) || grid.get_signed(x, y, z + 1)
    })
}

/// Placing the brick raises the combined similarity by more than `eps_sim`.
/// Both similarities are recomputed from the grids.
pub fn predicate_similarity(a: &Action, state: &EnvState) -> bool {
    let sim = &state.config.similarity;
    let current = similarity_breakdown(state.current(), state.target(), sim)
        .expect("same dims")
        .score;
    similarity_after(a, state, sim).is_some_and(|s| s > current + state.config.mask.sim_tolerance)
}

fn similarity_after(a: &Action, state: &EnvState, sim: &SimilarityConfig) -> Option<f64> {
    let cells = cells_of(&a.brick(), state.assembly.catalog()).ok()?;
    let mut grid = state.current().clone();
    for c in cells {
        if !grid.contains_cell(c) {
            return None;
        }
        grid.set(c, true);
    }
    Some(similarity_breakdown(&grid, state.target(), sim).expect("same dims").score)
}

/// Rejection counts per predicate over the whole action space. An action
/// counts once for every predicate it fails.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredicateTally {
    pub boundary: usize,
    pub collision: usize,
    pub inventory: usize,
    pub hooking: usize,
    pub similarity: usize,
    pub orientation_dedupe: usize,
}

/// Reference mask: every predicate evaluated independently for every index.
pub fn brute_force_mask(state: &EnvState) -> ActionMask {
    brute_force_mask_with_tally(state).0
}

pub fn brute_force_mask_with_tally(state: &EnvState) -> (ActionMask, PredicateTally) {
    let space = state.action_space();
    let sim = state.config.similarity;
    let current = similarity_breakdown(state.current(), state.target(), &sim)
        .expect("same dims")
        .score;
    let threshold = current + state.config.mask.sim_tolerance;
    let results: Vec<[bool; 6]> = (0..space.size())
        .into_par_iter()
        .map(|i| {
            let a = space.decode(i).expect("index in range");
            let dedupe = state.config.mask.dedupe_square_orientations
                && a.orientation == 1
                && state.assembly.catalog().get(a.type_id).is_ok_and(|b| b.is_square());
            [
                predicate_boundary(&a, state),
                predicate_collision(&a, state),
                predicate_inventory(&a, state),
                predicate_hooking(&a, state),
                similarity_after(&a, state, &sim).is_some_and(|s| s > threshold),
                !dedupe,
            ]
        })
        .collect();
    let mut tally = PredicateTally::default();
    let mut mask = ActionMask::empty(space.size());
    for (i, r) in results.iter().enumerate() {
        tally.boundary += !r[0] as usize;
        tally.collision += !r[1] as usize;
        tally.inventory += !r[2] as usize;
        tally.hooking += !r[3] as usize;
        tally.similarity += !r[4] as usize;
        tally.orientation_dedupe += !r[5] as usize;
        if r.iter().all(|&b| b) {
            mask.bits[i] = true;
            mask.valid_count += 1;
        }
    }
    (mask, tally)
}

/// Drops the last `ceil(fraction * n)` bricks of a complete assembly.
pub fn make_scenario(complete: &Assembly, removal_fraction: f64) -> Result<(Assembly, Assembly)> {
    if !(0.0..=1.0).contains(&removal_fraction) {
        return Err(Error::Config(format!(
            "removal fraction must be in [0, 1], got {removal_fraction}"
        )));
    }
    let n = complete.len();
    let remove = ((removal_fraction * n as f64).ceil() as usize).min(n);
    let incomplete = complete.truncated(n - remove);
    if !is_grounded(&incomplete) {
        return Err(Error::UngroundedEntry(format!(
            "prefix of {} bricks is not grounded",
            n - remove
        )));
    }
    Ok((incomplete, complete.clone()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::voxel::BrickCatalog;
    use proptest::prelude::*;

    #[test]
    fn action_index_examples() {
        let a = Action::new(0, [0, 0, 0], 0);
        assert_eq!(action_index(&a, [48, 48, 48], 8).unwrap(), 0);
        let space = ActionSpace::new([48, 48, 48], 8);
        assert_eq!(space.size(), 1_769_472);
        let last = Action::new(7, [47, 47, 47], 1);
        assert_eq!(space.index(&last).unwrap(), 1_769_471);
        assert!(matches!(
            space.index(&Action::new(8, [0, 0, 0], 0)),
            Err(Error::ActionComponent(_))
        ));
        assert!(matches!(
            space.index(&Action::new(0, [0, 48, 0], 0)),
            Err(Error::ActionComponent(_))
        ));
        assert!(matches!(
            space.index(&Action::new(0, [0, 0, 0], 2)),
            Err(Error::ActionComponent(_))
        ));
        assert!(matches!(space.decode(1_769_472), Err(Error::ActionIndex { .. })));
    }

    #[test]
    fn action_index_exhaustive_small() {
        let space = ActionSpace::new([3, 2, 4], 3);
        for i in 0..space.size() {
            let a = space.decode(i).unwrap();
            assert_eq!(space.index(&a).unwrap(), i);
        }
    }

    proptest! {
        #[test]
        fn action_index_roundtrip_48(x in 0usize..48, y in 0usize..48, z in 0usize..48, b in 0usize..8, o in 0u8..2) {
            let space = ActionSpace::new([48, 48, 48], 8);
            let a = Action::new(b, [x, y, z], o);
            let i = space.index(&a).unwrap();
            prop_assert!(i < space.size());
            prop_assert_eq!(space.decode(i).unwrap(), a);
        }
    }

    fn small_catalog() -> BrickCatalog {
        BrickCatalog::from_footprints(&[(1, 1), (1, 2), (2, 2)]).unwrap()
    }

    fn state_with(
        dims: Dims,
        bricks: &[BrickInstance],
        target: &[Cell],
        inv: &[(usize, u32)],
        mask: MaskConfig,
    ) -> EnvState {
        let asm = Assembly::from_bricks(dims, small_catalog(), bricks.iter().copied()).unwrap();
        let cfg = EnvConfig {
            mask,
            ..EnvConfig::default()
        };
        EnvState::new(
            asm,
            VoxelGrid::from_cells(dims, target).unwrap(),
            Inventory::with_counts(inv.iter().copied()),
            cfg,
        )
        .unwrap()
    }

    fn mask_cfg(x: usize) -> MaskConfig {
        MaskConfig {
            boundary_tol: x,
            ..MaskConfig::default()
        }
    }

    #[test]
    fn boundary_examples() {
        let target = [[2, 2, 0], [2, 3, 0], [3, 2, 0], [3, 3, 0]];
        let s0 = state_with([6, 6, 6], &[], &target, &[(0, 5)], mask_cfg(0));
        assert!(predicate_boundary(&Action::new(2, [2, 2, 0], 0), &s0));
        assert!(!predicate_boundary(&Action::new(1, [3, 3, 0], 0), &s0));
        let s1 = state_with([6, 6, 6], &[], &target, &[(0, 5)], mask_cfg(1));
        assert!(predicate_boundary(&Action::new(1, [3, 3, 0], 0), &s1));
        assert!(!predicate_boundary(&Action::new(0, [5, 5, 0], 0), &s1));
        // Off the grid is never inside the region.
        assert!(!predicate_boundary(&Action::new(1, [3, 5, 0], 0), &s1));
    }

    #[test]
    fn collision_examples() {
        let target = [[0, 0, 0], [1, 0, 0]];
        let s = state_with([4, 4, 4], &[], &target, &[(0, 1)], mask_cfg(2));
        assert!(predicate_collision(&Action::new(2, [0, 0, 0], 0), &s));
        let s = state_with([4, 4, 4], &[BrickInstance::new(0, [1, 1, 0], 0)], &target, &[(0, 1)], mask_cfg(2));
        assert!(!predicate_collision(&Action::new(2, [0, 0, 0], 0), &s));
        assert!(!predicate_collision(&Action::new(2, [3, 0, 0], 0), &s));
    }

    #[test]
    fn inventory_examples() {
        let target: Vec<Cell> = (0..6).map(|x| [x, 0, 0]).collect();
        let mut s = state_with([6, 6, 6], &[], &target, &[(0, 5)], mask_cfg(0));
        assert!(!predicate_inventory(&Action::new(1, [0, 0, 0], 0), &s));
        for x in 0..5 {
            let a = Action::new(0, [x, 0, 0], 0);
            assert!(predicate_inventory(&a, &s));
            s = s.step(s.action_space().index(&a).unwrap()).unwrap().next_state;
        }
        assert_eq!(s.inventory().count(0), 0);
        assert!(!predicate_inventory(&Action::new(0, [5, 0, 0], 0), &s));
    }

    #[test]
    fn hooking_examples() {
        let target = [[0, 0, 0]];
        let s = state_with([4, 4, 4], &[], &target, &[(0, 1)], mask_cfg(3));
        assert!(predicate_hooking(&Action::new(0, [1, 1, 0], 0), &s));
        assert!(!predicate_hooking(&Action::new(0, [1, 1, 2], 0), &s));
        // Support below: a column of three 1x1 bricks under (1, 1, 2).
        let column = [
            BrickInstance::new(0, [1, 1, 0], 0),
            BrickInstance::new(0, [1, 1, 1], 0),
        ];
        let s = state_with([4, 4, 4], &column, &target, &[(0, 1)], mask_cfg(3));
        assert!(predicate_hooking(&Action::new(1, [1, 0, 2], 0), &s));
        // Hanging below an occupied cell at z = 3 with nothing under it.
        let overhang = [
            BrickInstance::new(0, [0, 0, 0], 0),
            BrickInstance::new(0, [0, 0, 1], 0),
            BrickInstance::new(0, [0, 0, 2], 0),
            BrickInstance::new(1, [0, 0, 3], 1),
        ];
        let s = state_with([4, 4, 4], &overhang, &target, &[(0, 1)], mask_cfg(3));
        assert!(!s.current().get([1, 0, 1]));
        assert!(predicate_hooking(&Action::new(0, [1, 0, 2], 0), &s));
    }

    #[test]
    fn similarity_predicate_examples() {
        let target = [[0, 0, 0], [1, 0, 0], [2, 0, 0], [3, 0, 0]];
        let bricks = [BrickInstance::new(1, [0, 0, 0], 1)];
        let s = state_with([6, 6, 6], &bricks, &target, &[(0, 3), (1, 3)], mask_cfg(2));
        assert!(predicate_similarity(&Action::new(0, [2, 0, 0], 0), &s));
        assert!(!predicate_similarity(&Action::new(0, [5, 5, 5], 0), &s));

        let mut inf = mask_cfg(2);
        inf.sim_tolerance = f64::INFINITY;
        let s = state_with([6, 6, 6], &bricks, &target, &[(0, 3), (1, 3)], inf);
        assert!(!predicate_similarity(&Action::new(0, [2, 0, 0], 0), &s));
        assert_eq!(s.compute_mask().valid_count, 0);
    }

    #[test]
    fn empty_inventory_and_complete_state_masks() {
        let target = [[0, 0, 0], [1, 0, 0]];
        let s = state_with([4, 4, 4], &[], &target, &[], mask_cfg(2));
        assert_eq!(s.compute_mask().valid_count, 0);
        assert_eq!(brute_force_mask(&s).valid_count, 0);

        let done = state_with([4, 4, 4], &[BrickInstance::new(1, [0, 0, 0], 1)], &target, &[(0, 9), (1, 9), (2, 9)], mask_cfg(2));
        assert_eq!(done.s_com(), 1.0);
        assert_eq!(done.compute_mask().valid_count, 0);
    }

    #[test]
    fn step_reward_and_inventory() {
        let target: Vec<Cell> = (0..5).map(|x| [x, 0, 0]).collect();
        let bricks = [
            BrickInstance::new(0, [0, 0, 0], 0),
            BrickInstance::new(1, [1, 0, 0], 1),
        ];
        let mut cfg = EnvConfig::default();
        cfg.reward = RewardConfig { c: 1.0, d: 0.0, gamma: 0.9 };
        let asm = Assembly::from_bricks([6, 6, 6], small_catalog(), bricks).unwrap();
        let s = EnvState::new(
            asm,
            VoxelGrid::from_cells([6, 6, 6], &target).unwrap(),
            Inventory::with_counts([(1, 2)]),
            cfg,
        )
        .unwrap();
        assert_eq!(s.overlap(), 3);
        let a = Action::new(1, [3, 0, 0], 1);
        let r = s.step(s.action_space().index(&a).unwrap()).unwrap();
        assert_eq!(r.reward, 5.0);
        assert_eq!(r.next_state.inventory().count(1), 1);

        // c = 0, d = 1: the reward is the similarity recomputed from the grids.
        let mut cfg2 = cfg;
        cfg2.reward = RewardConfig { c: 0.0, d: 1.0, gamma: 0.9 };
        let s2 = EnvState::new(s.assembly().clone(), s.target().clone(), s.inventory().clone(), cfg2).unwrap();
        let r2 = s2.step(s2.action_space().index(&a).unwrap()).unwrap();
        let expect = crate::matching::combined_similarity(
            r2.next_state.current(),
            s2.target(),
            &SimilarityConfig::default(),
        )
        .unwrap();
        assert_eq!(r2.reward, expect);

        // An action outside the mask is refused.
        let bad = s.action_space().index(&Action::new(1, [0, 0, 0], 1)).unwrap();
        assert!(matches!(s.step(bad), Err(Error::InvalidAction(_))));
    }

    #[test]
    fn make_scenario_examples() {
        let cat = small_catalog();
        let bricks: Vec<BrickInstance> = (0..4).map(|z| BrickInstance::new(1, [0, 0, z], z as u8 % 2)).collect();
        let full = Assembly::from_bricks([4, 4, 4], cat, bricks).unwrap();
        assert_eq!(make_scenario(&full, 0.0).unwrap().0, full);
        assert!(make_scenario(&full, 1.0).unwrap().0.is_empty());
        for f in [0.1, 0.25, 0.5, 0.75, 0.9] {
            let (inc, comp) = make_scenario(&full, f).unwrap();
            assert!(is_grounded(&inc));
            assert_eq!(comp, full);
            assert_eq!(inc.len(), 4 - (f * 4.0f64).ceil() as usize);
        }
        assert!(make_scenario(&full, 1.5).is_err());
    }
}
