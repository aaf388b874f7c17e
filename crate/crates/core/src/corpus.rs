//! Procedural desk-scale objects built from the standard catalog.
//!
//! Each design lists its bricks layer by layer; [`order_grounded`] then
//! sequences them so every prefix is grounded, which is what lets
//! [`crate::env::make_scenario`] strip the top of an object and keep a
//! physically valid remainder.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::synth::random_grounded_assembly;
use crate::voxel::{cells_of, Assembly, BrickCatalog, BrickInstance, Dims};

pub const CORPUS_DIMS: Dims = [12, 12, 12];

/// Grid of the small training scenario.
pub const SCULPTURE_DIMS: Dims = [10, 10, 10];

// Standard catalog ids.
const B1X1: usize = 0;
const B1X2: usize = 1;
const B1X4: usize = 2;
const B1X6: usize = 3;
const B1X8: usize = 4;
const B2X2: usize = 5;
const B2X4: usize = 6;
const B2X6: usize = 7;

fn b(type_id: usize, x: usize, y: usize, z: usize, o: u8) -> BrickInstance {
    BrickInstance::new(type_id, [x, y, z], o)
}

/// Orders bricks so that each one is on the baseplate or vertically touches
/// an earlier brick. Among the placeable bricks the lowest layer goes first,
/// then design order.
pub fn order_grounded(dims: Dims, catalog: &BrickCatalog, bricks: &[BrickInstance]) -> Result<Assembly> {
    let cells: Vec<Vec<[usize; 3]>> = bricks
        .iter()
        .map(|b| cells_of(b, catalog))
        .collect::<Result<_>>()?;
    let mut asm = Assembly::new(dims, catalog.clone());
    let mut placed = vec![false; bricks.len()];
    for _ in 0..bricks.len() {
        let grid = asm.grid();
        let next = (0..bricks.len())
            .filter(|&i| !placed[i])
            .filter(|&i| {
                bricks[i].z == 0
                    || cells[i].iter().any(|&[x, y, z]| {
                        (z > 0 && grid.get([x, y, z - 1])) || (z + 1 < dims[2] && grid.get([x, y, z + 1]))
                    })
            })
            .min_by_key(|&i| (bricks[i].z, i));
        let Some(i) = next else {
            return Err(Error::UngroundedEntry(format!(
                "{} bricks cannot be reached from the baseplate",
                placed.iter().filter(|p| !**p).count()
            )));
        };
        asm.place_brick(bricks[i])?;
        placed[i] = true;
    }
    Ok(asm)
}

/// Three-high 1x1 legs, a two-layer 6x6 seat and a seven-layer back of 1x2 bricks.
pub fn chair() -> Assembly {
    let (ox, oy) = (3, 3);
    let mut v = Vec::new();
    for (lx, ly) in [(0, 0), (0, 5), (5, 0), (5, 5)] {
        for z in 0..3 {
            v.push(b(B1X1, ox + lx, oy + ly, z, 0));
        }
    }
    for i in 0..3 {
        v.push(b(B2X6, ox + 2 * i, oy, 3, 0));
    }
    for i in 0..3 {
        v.push(b(B2X6, ox, oy + 2 * i, 4, 1));
    }
    for z in 5..12 {
        for y in [0, 2, 4] {
            v.push(b(B1X2, ox, oy + y, z, 0));
        }
    }
    order_grounded(CORPUS_DIMS, &BrickCatalog::default(), &v).expect("chair design is grounded")
}

/// 2x2 legs under a two-layer 8x8 top.
pub fn table() -> Assembly {
    let (ox, oy) = (2, 2);
    let mut v = Vec::new();
    for (lx, ly) in [(0, 0), (0, 6), (6, 0), (6, 6)] {
        for z in 0..5 {
            v.push(b(B2X2, ox + lx, oy + ly, z, 0));
        }
    }
    for x in 0..8 {
        v.push(b(B1X8, ox + x, oy, 5, 0));
    }
    for y in 0..8 {
        v.push(b(B1X8, ox, oy + y, 6, 1));
    }
    order_grounded(CORPUS_DIMS, &BrickCatalog::default(), &v).expect("table design is grounded")
}

/// A long 4x12 seat on two end supports, with a low backrest.
pub fn bench() -> Assembly {
    let ox = 4;
    let mut v = Vec::new();
    for y in [0, 10] {
        for z in 0..3 {
            v.push(b(B2X4, ox, y, z, 1));
        }
    }
    for x in 0..4 {
        v.push(b(B1X6, ox + x, 0, 3, 0));
        v.push(b(B1X6, ox + x, 6, 3, 0));
    }
    for x in [0, 2] {
        for y in [0, 4, 8] {
            v.push(b(B2X4, ox + x, y, 4, 0));
        }
    }
    for z in 5..8 {
        v.push(b(B1X6, ox, 0, z, 0));
        v.push(b(B1X6, ox, 6, z, 0));
    }
    order_grounded(CORPUS_DIMS, &BrickCatalog::default(), &v).expect("bench design is grounded")
}

/// Hollow 8x8 walls with a stepped roof.
pub fn house() -> Assembly {
    let (ox, oy) = (2, 2);
    let mut v = Vec::new();
    for z in 0..5 {
        v.push(b(B1X8, ox, oy, z, 0));
        v.push(b(B1X8, ox + 7, oy, z, 0));
        v.push(b(B1X6, ox + 1, oy, z, 1));
        v.push(b(B1X6, ox + 1, oy + 7, z, 1));
    }
    for y in 0..8 {
        v.push(b(B1X8, ox, oy + y, 5, 1));
    }
    for y in 1..7 {
        v.push(b(B1X6, ox + 1, oy + y, 6, 1));
    }
    for y in 2..6 {
        v.push(b(B1X4, ox + 2, oy + y, 7, 1));
    }
    v.push(b(B2X2, ox + 3, oy + 3, 8, 0));
    order_grounded(CORPUS_DIMS, &BrickCatalog::default(), &v).expect("house design is grounded")
}

/// 1x1, 1x2 and 2x2: the three-type catalog used for training.
pub fn small_catalog() -> BrickCatalog {
    BrickCatalog::from_footprints(&[(1, 1), (1, 2), (2, 2)]).expect("non-empty catalog")
}

/// A seeded 14-brick stack on [`SCULPTURE_DIMS`] over [`small_catalog`].
/// Small enough to train a policy on in minutes.
pub fn sculpture() -> Assembly {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    random_grounded_assembly(SCULPTURE_DIMS, &small_catalog(), 14, &mut rng)
}

/// Turns an assembly by `quarter_turns` * 90 degrees about the vertical
/// axis, shifts it by `offset` and re-homes it in a grid of `dims`.
pub fn place(asm: &Assembly, quarter_turns: usize, offset: [usize; 2], dims: Dims) -> Result<Assembly> {
    let catalog = asm.catalog();
    let mut bricks: Vec<BrickInstance> = asm.bricks().to_vec();
    let mut span = [asm.dims()[0], asm.dims()[1]];
    for _ in 0..quarter_turns % 4 {
        for b in &mut bricks {
            let (_, ey) = catalog.get(b.type_id)?.extent(b.orientation);
            let (x, y) = (span[1] - b.y - ey, b.x);
            b.x = x;
            b.y = y;
            b.orientation ^= 1;
        }
        span = [span[1], span[0]];
    }
    for b in &mut bricks {
        b.x += offset[0];
        b.y += offset[1];
    }
    Assembly::from_bricks(dims, catalog.clone(), bricks)
}

/// The bundled objects by name.
pub fn all() -> Vec<(&'static str, Assembly)> {
    vec![
        ("bench", bench()),
        ("chair", chair()),
        ("house", house()),
        ("table", table()),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::voxel::is_grounded;

    #[test]
    fn objects_are_grounded_in_every_prefix() {
        for (name, asm) in all() {
            assert!(asm.len() >= 20, "{name}");
            for k in 0..=asm.len() {
                assert!(is_grounded(&asm.truncated(k)), "{name} prefix {k}");
            }
        }
    }

    #[test]
    fn objects_are_distinct() {
        let objs = all();
        for i in 0..objs.len() {
            for j in i + 1..objs.len() {
                assert_ne!(objs[i].1.grid(), objs[j].1.grid());
            }
        }
    }

    #[test]
    fn quarter_turn_rotates_cells() {
        let cat = small_catalog();
        let asm = Assembly::from_bricks([3, 4, 1], cat, [b(1, 0, 0, 0, 0)]).unwrap();
        // 1x2 at x=0 spanning y 0..1 lands on the far x edge, along x.
        let r = place(&asm, 1, [0, 0], [4, 3, 1]).unwrap();
        assert_eq!(r.grid().occupied_cells(), vec![[2, 0, 0], [3, 0, 0]]);
        let full = place(&asm, 4, [1, 2], [4, 6, 1]).unwrap();
        assert_eq!(full.grid().occupied_cells(), vec![[1, 2, 0], [1, 3, 0]]);
    }

    #[test]
    fn placed_objects_keep_shape_and_grounding() {
        for (name, asm) in all() {
            let r = place(&asm, 1, [3, 2], [16, 16, 12]).unwrap();
            assert_eq!(r.grid().occupied_count(), asm.grid().occupied_count(), "{name}");
            assert!(is_grounded(&r), "{name}");
            let back = place(&r, 3, [0, 0], [16, 16, 12]).unwrap();
            assert_eq!(back.grid().occupied_count(), asm.grid().occupied_count());
        }
    }

    #[test]
    fn sculpture_is_fixed() {
        let s = sculpture();
        assert_eq!(s.len(), 14);
        assert_eq!(s, sculpture());
        assert!(is_grounded(&s));
    }

    #[test]
    fn ungroundable_design_is_rejected() {
        let floating = [b(B1X1, 0, 0, 3, 0)];
        assert!(order_grounded(CORPUS_DIMS, &BrickCatalog::default(), &floating).is_err());
    }
}
