//! Voxel occupancy grids, brick geometry, inventories and assemblies.
//!
//! Coordinates are `(x, y, z)` with `z` vertical; `z = 0` rests on the
//! baseplate (the plate itself is never an occupied cell). Cells are stored
//! row-major: `index = (x * w + y) * d + z` for a grid of dims `[h, w, d]`.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Dims = [usize; 3];
pub type Cell = [usize; 3];

/// A cuboid brick one cell tall.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BrickType {
    pub id: usize,
    pub footprint_w: usize,
    pub footprint_d: usize,
    pub height: usize,
}

impl BrickType {
    pub fn cell_count(&self) -> usize {
        self.footprint_w * self.footprint_d
    }

    pub fn is_square(&self) -> bool {
        self.footprint_w == self.footprint_d
    }

    /// Extent along `(x, y)` for an orientation.
    pub fn extent(&self, orientation: u8) -> (usize, usize) {
        if orientation == 0 {
            (self.footprint_w, self.footprint_d)
        } else {
            (self.footprint_d, self.footprint_w)
        }
    }
}

/// Ordered set of brick types with dense ids `0..len`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BrickCatalog {
    bricks: Vec<BrickType>,
}

/// Footprints of the standard eight-brick storage.
pub const STANDARD_FOOTPRINTS: [(usize, usize); 8] =
    [(1, 1), (1, 2), (1, 4), (1, 6), (1, 8), (2, 2), (2, 4), (2, 6)];

impl Default for BrickCatalog {
    fn default() -> Self {
        Self::from_footprints(&STANDARD_FOOTPRINTS).expect("standard footprints are valid")
    }
}

impl BrickCatalog {
    pub fn from_footprints(footprints: &[(usize, usize)]) -> Result<Self> {
        if footprints.is_empty() {
            return Err(Error::Config("brick catalog must not be empty".into()));
        }
        let bricks = footprints
            .iter()
            .enumerate()
            .map(|(id, &(w, d))| {
                if w == 0 || d == 0 {
                    Err(Error::Config(format!("brick {id} has a zero footprint")))
                } else {
                    Ok(BrickType {
                        id,
                        footprint_w: w,
                        footprint_d: d,
                        height: 1,
                    })
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { bricks })
    }

    pub fn len(&self) -> usize {
        self.bricks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bricks.is_empty()
    }

    pub fn get(&self, id: usize) -> Result<&BrickType> {
        self.bricks.get(id).ok_or(Error::UnknownBrickType(id))
    }

    pub fn iter(&self) -> impl Iterator<Item = &BrickType> {
        self.bricks.iter()
    }

    pub fn footprints(&self) -> Vec<(usize, usize)> {
        self.bricks
            .iter()
            .map(|b| (b.footprint_w, b.footprint_d))
            .collect()
    }

    pub fn is_standard(&self) -> bool {
        self.footprints() == STANDARD_FOOTPRINTS
    }
}

/// One placed brick: type, anchor cell and orientation (`0` keeps the
/// footprint as `(w, d)` along `(x, y)`, `1` swaps it).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BrickInstance {
    pub type_id: usize,
    pub x: usize,
    pub y: usize,
    pub z: usize,
    pub orientation: u8,
}

impl BrickInstance {
    pub fn new(type_id: usize, [x, y, z]: Cell, orientation: u8) -> Self {
        Self {
            type_id,
            x,
            y,
            z,
            orientation,
        }
    }
}

/// Cells covered by a brick, row-major over its footprint. The cells are not
/// bounds-checked; see [`VoxelGrid::contains`].
pub fn cells_of(brick: &BrickInstance, catalog: &BrickCatalog) -> Result<Vec<Cell>> {
    let ty = catalog.get(brick.type_id)?;
    let (ex, ey) = ty.extent(brick.orientation);
    let mut cells = Vec::with_capacity(ex * ey);
    for dx in 0..ex {
        for dy in 0..ey {
            cells.push([brick.x + dx, brick.y + dy, brick.z]);
        }
    }
    Ok(cells)
}

/// Axis-aligned inclusive bounding box over cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundingBox {
    pub min: Cell,
    pub max: Cell,
}

impl BoundingBox {
    pub fn from_cell(c: Cell) -> Self {
        Self { min: c, max: c }
    }

    pub fn include(&mut self, c: Cell) {
        for k in 0..3 {
            self.min[k] = self.min[k].min(c[k]);
            self.max[k] = self.max[k].max(c[k]);
        }
    }

    pub fn union(mut self, other: &BoundingBox) -> Self {
        self.include(other.min);
        self.include(other.max);
        self
    }

    pub fn volume(&self) -> usize {
        (0..3).map(|k| self.max[k] - self.min[k] + 1).product()
    }
}

/// Dense binary occupancy grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VoxelGrid {
    dims: Dims,
    cells: Vec<bool>,
    occupied: usize,
}

impl VoxelGrid {
    pub fn new(dims: Dims) -> Self {
        Self {
            dims,
            cells: vec![false; dims.iter().product()],
            occupied: 0,
        }
    }

    pub fn from_cells(dims: Dims, cells: &[Cell]) -> Result<Self> {
        let mut grid = Self::new(dims);
        for &c in cells {
            if !grid.contains_cell(c) {
                return Err(Error::OutOfBounds {
                    x: c[0] as i64,
                    y: c[1] as i64,
                    z: c[2] as i64,
                    dims,
                });
            }
            grid.set(c, true);
        }
        Ok(grid)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn volume(&self) -> usize {
        self.cells.len()
    }

    pub fn occupied_count(&self) -> usize {
        self.occupied
    }

    pub fn is_empty(&self) -> bool {
        self.occupied == 0
    }

    #[inline]
    pub fn index(&self, [x, y, z]: Cell) -> usize {
        (x * self.dims[1] + y) * self.dims[2] + z
    }

    #[inline]
    pub fn cell_at(&self, index: usize) -> Cell {
        let d = self.dims[2];
        let w = self.dims[1];
        [index / (w * d), (index / d) % w, index % d]
    }

    pub fn contains(&self, x: i64, y: i64, z: i64) -> bool {
        x >= 0
            && y >= 0
            && z >= 0
            && (x as usize) < self.dims[0]
            && (y as usize) < self.dims[1]
            && (z as usize) < self.dims[2]
    }

    pub fn contains_cell(&self, c: Cell) -> bool {
        c[0] < self.dims[0] && c[1] < self.dims[1] && c[2] < self.dims[2]
    }

    #[inline]
    pub fn get(&self, c: Cell) -> bool {
        self.cells[self.index(c)]
    }

    /// Occupancy with out-of-range coordinates reading as empty.
    #[inline]
    pub fn get_signed(&self, x: i64, y: i64, z: i64) -> bool {
        self.contains(x, y, z) && self.get([x as usize, y as usize, z as usize])
    }

    #[inline]
    pub fn get_index(&self, i: usize) -> bool {
        self.cells[i]
    }

    pub fn set(&mut self, c: Cell, value: bool) {
        let i = self.index(c);
        match (self.cells[i], value) {
            (false, true) => self.occupied += 1,
            (true, false) => self.occupied -= 1,
            _ => {}
        }
        self.cells[i] = value;
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.cells
    }

    /// Occupied cells in row-major order.
    pub fn occupied_cells(&self) -> Vec<Cell> {
        self.cells
            .iter()
            .enumerate()
            .filter(|(_, &v)| v)
            .map(|(i, _)| self.cell_at(i))
            .collect()
    }

    pub fn bounding_box(&self) -> Option<BoundingBox> {
        let mut bbox: Option<BoundingBox> = None;
        for (i, &v) in self.cells.iter().enumerate() {
            if v {
                let c = self.cell_at(i);
                match bbox.as_mut() {
                    Some(b) => b.include(c),
                    None => bbox = Some(BoundingBox::from_cell(c)),
                }
            }
        }
        bbox
    }

    /// Occupied set shifted by an integer offset; cells leaving the grid are dropped.
    pub fn translated(&self, offset: [i64; 3]) -> Self {
        let mut out = Self::new(self.dims);
        for c in self.occupied_cells() {
            let (x, y, z) = (
                c[0] as i64 + offset[0],
                c[1] as i64 + offset[1],
                c[2] as i64 + offset[2],
            );
            if out.contains(x, y, z) {
                out.set([x as usize, y as usize, z as usize], true);
            }
        }
        out
    }

    pub fn union(&self, other: &VoxelGrid) -> Result<VoxelGrid> {
        check_dims(self, other)?;
        let mut out = self.clone();
        for (i, &v) in other.cells.iter().enumerate() {
            if v && !out.cells[i] {
                out.cells[i] = true;
                out.occupied += 1;
            }
        }
        Ok(out)
    }
}

fn check_dims(a: &VoxelGrid, b: &VoxelGrid) -> Result<()> {
    if a.dims != b.dims {
        return Err(Error::ShapeMismatch(a.dims, b.dims));
    }
    Ok(())
}

pub(crate) const FACE_NEIGHBORS: [[i64; 3]; 6] = [
    [1, 0, 0],
    [-1, 0, 0],
    [0, 1, 0],
    [0, -1, 0],
    [0, 0, 1],
    [0, 0, -1],
];

/// Per-cell component labels under face adjacency. Unoccupied cells get
/// `u32::MAX`; labels are dense and assigned in row-major discovery order.
pub fn component_labels(grid: &VoxelGrid) -> (Vec<u32>, usize) {
    let mut labels = vec![u32::MAX; grid.volume()];
    let mut count = 0u32;
    let mut queue = VecDeque::new();
    for start in 0..grid.volume() {
        if !grid.get_index(start) || labels[start] != u32::MAX {
            continue;
        }
        labels[start] = count;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            let [x, y, z] = grid.cell_at(i);
            for off in FACE_NEIGHBORS {
                let (nx, ny, nz) = (x as i64 + off[0], y as i64 + off[1], z as i64 + off[2]);
                if grid.get_signed(nx, ny, nz) {
                    let j = grid.index([nx as usize, ny as usize, nz as usize]);
                    if labels[j] == u32::MAX {
                        labels[j] = count;
                        queue.push_back(j);
                    }
                }
            }
        }
        count += 1;
    }
    (labels, count as usize)
}

/// Number of 6-connected components of occupied cells.
pub fn connected_components(grid: &VoxelGrid) -> usize {
    component_labels(grid).1
}

/// Occupied cells over the volume of their tight bounding box; 0 when empty.
pub fn voxel_density(grid: &VoxelGrid) -> f64 {
    match grid.bounding_box() {
        Some(b) => grid.occupied_count() as f64 / b.volume() as f64,
        None => 0.0,
    }
}

/// Cells occupied in both grids.
pub fn overlap_count(a: &VoxelGrid, b: &VoxelGrid) -> Result<usize> {
    check_dims(a, b)?;
    Ok(a.cells
        .iter()
        .zip(&b.cells)
        .filter(|(&p, &q)| p && q)
        .count())
}

/// Remaining bricks per type.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Inventory {
    counts: BTreeMap<usize, u32>,
}

impl Inventory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_counts(counts: impl IntoIterator<Item = (usize, u32)>) -> Self {
        Self {
            counts: counts.into_iter().collect(),
        }
    }

    pub fn count(&self, type_id: usize) -> u32 {
        self.counts.get(&type_id).copied().unwrap_or(0)
    }

    pub fn set(&mut self, type_id: usize, count: u32) {
        self.counts.insert(type_id, count);
    }

    pub fn has(&self, type_id: usize) -> bool {
        self.count(type_id) > 0
    }

    pub fn is_exhausted(&self) -> bool {
        self.counts.values().all(|&c| c == 0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, u32)> + '_ {
        self.counts.iter().map(|(&k, &v)| (k, v))
    }

    /// Takes one brick of a type; `false` (and no change) when none is left.
    pub(crate) fn take(&mut self, type_id: usize) -> bool {
        match self.counts.get_mut(&type_id) {
            Some(c) if *c > 0 => {
                *c -= 1;
                true
            }
            _ => false,
        }
    }
}

/// An ordered brick sequence together with the grid it occupies.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assembly {
    catalog: BrickCatalog,
    bricks: Vec<BrickInstance>,
    grid: VoxelGrid,
}

impl Assembly {
    pub fn new(dims: Dims, catalog: BrickCatalog) -> Self {
        Self {
            catalog,
            bricks: Vec::new(),
            grid: VoxelGrid::new(dims),
        }
    }

    pub fn from_bricks(
        dims: Dims,
        catalog: BrickCatalog,
        bricks: impl IntoIterator<Item = BrickInstance>,
    ) -> Result<Self> {
        let mut asm = Self::new(dims, catalog);
        for b in bricks {
            asm.place_brick(b)?;
        }
        Ok(asm)
    }

    pub fn catalog(&self) -> &BrickCatalog {
        &self.catalog
    }

    pub fn bricks(&self) -> &[BrickInstance] {
        &self.bricks
    }

    pub fn grid(&self) -> &VoxelGrid {
        &self.grid
    }

    pub fn dims(&self) -> Dims {
        self.grid.dims()
    }

    pub fn len(&self) -> usize {
        self.bricks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bricks.is_empty()
    }

    /// Validates and appends a brick. On error the assembly is unchanged.
    pub fn place_brick(&mut self, brick: BrickInstance) -> Result<()> {
        let cells = cells_of(&brick, &self.catalog)?;
        for &c in &cells {
            if !self.grid.contains_cell(c) {
                return Err(Error::OutOfBounds {
                    x: c[0] as i64,
                    y: c[1] as i64,
                    z: c[2] as i64,
                    dims: self.grid.dims(),
                });
            }
            if self.grid.get(c) {
                return Err(Error::Collision {
                    x: c[0],
                    y: c[1],
                    z: c[2],
                });
            }
        }
        for c in cells {
            self.grid.set(c, true);
        }
        self.bricks.push(brick);
        Ok(())
    }

    /// Value-style placement.
    pub fn with_brick(mut self, brick: BrickInstance) -> Result<Self> {
        self.place_brick(brick)?;
        Ok(self)
    }

    /// Assembly holding only the first `n` bricks.
    pub fn truncated(&self, n: usize) -> Self {
        let mut out = Self::new(self.dims(), self.catalog.clone());
        for &b in &self.bricks[..n.min(self.bricks.len())] {
            out.place_brick(b).expect("prefix of a valid assembly is valid");
        }
        out
    }
}

/// True iff every brick reaches a `z = 0` brick through vertical contacts
/// (some cell of one brick directly above a cell of the other).
pub fn is_grounded(assembly: &Assembly) -> bool {
    let n = assembly.bricks.len();
    if n == 0 {
        return true;
    }
    let grid = &assembly.grid;
    let mut owner = vec![u32::MAX; grid.volume()];
    let mut cells = Vec::with_capacity(n);
    for (i, b) in assembly.bricks.iter().enumerate() {
        let cs = cells_of(b, &assembly.catalog).expect("assembly bricks are valid");
        for &c in &cs {
            owner[grid.index(c)] = i as u32;
        }
        cells.push(cs);
    }
    let mut seen = vec![false; n];
    let mut queue: VecDeque<usize> = VecDeque::new();
    for (i, b) in assembly.bricks.iter().enumerate() {
        if b.z == 0 {
            seen[i] = true;
            queue.push_back(i);
        }
    }
    while let Some(i) = queue.pop_front() {
        for &[x, y, z] in &cells[i] {
            for nz in [z.wrapping_sub(1), z + 1] {
                if nz >= grid.dims()[2] {
                    continue;
                }
                let j = owner[grid.index([x, y, nz])];
                if j != u32::MAX && !seen[j as usize] {
                    seen[j as usize] = true;
                    queue.push_back(j as usize);
                }
            }
        }
    }
    seen.into_iter().all(|s| s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn one_by(n: usize) -> BrickCatalog {
        BrickCatalog::from_footprints(&[(1, 1), (1, n), (2, 2)]).unwrap()
    }

    #[test]
    fn cells_of_examples() {
        let cat = BrickCatalog::default();
        assert_eq!(
            cells_of(&BrickInstance::new(0, [0, 0, 0], 0), &cat).unwrap(),
            vec![[0, 0, 0]]
        );
        assert_eq!(
            cells_of(&BrickInstance::new(1, [3, 4, 1], 0), &cat).unwrap(),
            vec![[3, 4, 1], [3, 5, 1]]
        );
        assert_eq!(
            cells_of(&BrickInstance::new(1, [3, 4, 1], 1), &cat).unwrap(),
            vec![[3, 4, 1], [4, 4, 1]]
        );
        assert!(matches!(
            cells_of(&BrickInstance::new(8, [0, 0, 0], 0), &cat),
            Err(Error::UnknownBrickType(8))
        ));
    }

    #[test]
    fn default_catalog_matches_storage() {
        let cat = BrickCatalog::default();
        assert_eq!(cat.len(), 8);
        assert_eq!(cat.get(7).unwrap().cell_count(), 12);
        assert!(cat.iter().all(|b| b.height == 1));
    }

    #[test]
    fn place_brick_examples() {
        let cat = BrickCatalog::default();
        let mut asm = Assembly::new([4, 4, 4], cat.clone());
        asm.place_brick(BrickInstance::new(0, [0, 0, 0], 0)).unwrap();
        assert_eq!(asm.grid().occupied_count(), 1);

        let err = asm.place_brick(BrickInstance::new(0, [0, 0, 0], 0)).unwrap_err();
        assert!(matches!(err, Error::Collision { x: 0, y: 0, z: 0 }));

        let mut empty = Assembly::new([4, 4, 4], cat);
        let err = empty.place_brick(BrickInstance::new(5, [3, 3, 0], 0)).unwrap_err();
        assert!(matches!(err, Error::OutOfBounds { x: 3, y: 4, z: 0, .. }));
        assert!(empty.is_empty());
        assert_eq!(empty.grid().occupied_count(), 0);
    }

    #[test]
    fn components_examples() {
        let g = VoxelGrid::new([3, 3, 3]);
        assert_eq!(connected_components(&g), 0);
        let g = VoxelGrid::from_cells([3, 3, 3], &[[0, 0, 0], [1, 0, 0]]).unwrap();
        assert_eq!(connected_components(&g), 1);
        let g = VoxelGrid::from_cells([3, 3, 3], &[[0, 0, 0], [1, 1, 0]]).unwrap();
        assert_eq!(connected_components(&g), 2);
    }

    #[test]
    fn density_examples() {
        let mut cells = Vec::new();
        for x in 2..4 {
            for y in 1..3 {
                for z in 3..5 {
                    cells.push([x, y, z]);
                }
            }
        }
        let g = VoxelGrid::from_cells([6, 6, 6], &cells).unwrap();
        assert_eq!(voxel_density(&g), 1.0);
        let g = VoxelGrid::from_cells([6, 6, 6], &[[0, 0, 0], [1, 1, 0]]).unwrap();
        assert_eq!(voxel_density(&g), 0.5);
        assert_eq!(voxel_density(&VoxelGrid::new([2, 2, 2])), 0.0);
    }

    #[test]
    fn overlap_examples() {
        let a = VoxelGrid::from_cells([4, 4, 4], &[[0, 0, 0], [1, 2, 3]]).unwrap();
        let b = VoxelGrid::from_cells([4, 4, 4], &[[0, 0, 0], [1, 2, 3], [3, 3, 3]]).unwrap();
        let c = VoxelGrid::from_cells([4, 4, 4], &[[2, 2, 2]]).unwrap();
        assert_eq!(overlap_count(&a, &a).unwrap(), 2);
        assert_eq!(overlap_count(&a, &c).unwrap(), 0);
        assert_eq!(overlap_count(&a, &b).unwrap(), 2);
        assert!(matches!(
            overlap_count(&a, &VoxelGrid::new([4, 4, 5])),
            Err(Error::ShapeMismatch(..))
        ));
    }

    #[test]
    fn grounded_examples() {
        let cat = BrickCatalog::default();
        let a = Assembly::from_bricks([4, 4, 4], cat.clone(), [BrickInstance::new(0, [0, 0, 0], 0)])
            .unwrap();
        assert!(is_grounded(&a));
        let a = Assembly::from_bricks([4, 4, 4], cat.clone(), [BrickInstance::new(0, [0, 0, 3], 0)])
            .unwrap();
        assert!(!is_grounded(&a));
        let a = Assembly::from_bricks(
            [4, 4, 4],
            cat.clone(),
            (0..3).map(|z| BrickInstance::new(0, [1, 1, z], 0)),
        )
        .unwrap();
        assert!(is_grounded(&a));
        // A 1x2 bridging onto a tower reaches the plate through the tower only.
        let a = Assembly::from_bricks(
            [4, 4, 4],
            cat,
            [
                BrickInstance::new(0, [0, 0, 0], 0),
                BrickInstance::new(1, [0, 0, 1], 0),
                BrickInstance::new(0, [0, 1, 2], 0),
                BrickInstance::new(0, [3, 3, 2], 0),
            ],
        )
        .unwrap();
        assert!(!is_grounded(&a));
        assert!(is_grounded(&a.truncated(3)));
    }

    #[test]
    fn inventory_take() {
        let mut inv = Inventory::with_counts([(0, 1)]);
        assert!(inv.has(0));
        assert!(inv.take(0));
        assert!(!inv.has(0));
        assert!(!inv.take(0));
        assert!(!inv.has(3));
    }

    fn arb_grid(dims: Dims) -> impl Strategy<Value = VoxelGrid> {
        proptest::collection::vec(any::<bool>(), dims.iter().product::<usize>()).prop_map(
            move |bits| {
                let mut g = VoxelGrid::new(dims);
                for (i, b) in bits.into_iter().enumerate() {
                    if b {
                        let c = g.cell_at(i);
                        g.set(c, true);
                    }
                }
                g
            },
        )
    }

    proptest! {
        #[test]
        fn placement_adds_exactly_brick_cells(
            t in 0usize..3, x in 0usize..6, y in 0usize..6, z in 0usize..6, o in 0u8..2
        ) {
            let cat = one_by(3);
            let mut asm = Assembly::new([6, 6, 6], cat.clone());
            asm.place_brick(BrickInstance::new(0, [5, 5, 5], 0)).unwrap();
            let before = asm.grid().occupied_count();
            let b = BrickInstance::new(t, [x, y, z], o);
            let n = cells_of(&b, &cat).unwrap().len();
            if asm.place_brick(b).is_ok() {
                prop_assert_eq!(asm.grid().occupied_count(), before + n);
            } else {
                prop_assert_eq!(asm.grid().occupied_count(), before);
            }
        }

        #[test]
        fn orientation_swaps_footprint(w in 1usize..4, d in 1usize..4, x in 0usize..4, y in 0usize..4) {
            let cat = BrickCatalog::from_footprints(&[(w, d)]).unwrap();
            let transposed = BrickCatalog::from_footprints(&[(d, w)]).unwrap();
            let mut a = cells_of(&BrickInstance::new(0, [x, y, 0], 1), &cat).unwrap();
            let mut b = cells_of(&BrickInstance::new(0, [x, y, 0], 0), &transposed).unwrap();
            a.sort();
            b.sort();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn components_translation_invariant(g in arb_grid([4, 4, 4])) {
            let mut big = VoxelGrid::new([7, 7, 7]);
            for c in g.occupied_cells() {
                big.set(c, true);
            }
            let shifted = big.translated([3, 2, 1]);
            prop_assert_eq!(connected_components(&big), connected_components(&shifted));
        }

        #[test]
        fn density_in_unit_interval(g in arb_grid([4, 3, 3])) {
            let rho = voxel_density(&g);
            prop_assert!((0.0..=1.0).contains(&rho));
            if let Some(b) = g.bounding_box() {
                prop_assert_eq!(rho == 1.0, g.occupied_count() == b.volume());
            }
        }

        #[test]
        fn overlap_symmetric_and_bounded(a in arb_grid([3, 3, 3]), b in arb_grid([3, 3, 3])) {
            let ab = overlap_count(&a, &b).unwrap();
            prop_assert_eq!(ab, overlap_count(&b, &a).unwrap());
            prop_assert!(ab <= a.occupied_count().min(b.occupied_count()));
            prop_assert_eq!(overlap_count(&a, &a).unwrap(), a.occupied_count());
        }
    }
}
