//! Seeded generators for assemblies and reachable environment states.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::env::{EnvConfig, EnvState};
use crate::error::Result;
use crate::voxel::{Assembly, BrickCatalog, BrickInstance, Dims, Inventory};

/// A grounded assembly built bottom-up: each brick sits on the baseplate or
/// on top of an earlier brick, so every prefix is grounded as well.
pub fn random_grounded_assembly(
    dims: Dims,
    catalog: &BrickCatalog,
    n_bricks: usize,
    rng: &mut impl Rng,
) -> Assembly {
    let mut asm = Assembly::new(dims, catalog.clone());
    let mut attempts = 0;
    while asm.len() < n_bricks && attempts < 200 * n_bricks.max(1) {
        attempts += 1;
        let b = catalog.get(rng.gen_range(0..catalog.len())).expect("id in range");
        let o = rng.gen_range(0..2u8);
        let (ex, ey) = b.extent(o);
        if ex > dims[0] || ey > dims[1] {
            continue;
        }
        let (x, y, z) = if asm.is_empty() || rng.gen_bool(0.3) {
            (rng.gen_range(0..=dims[0] - ex), rng.gen_range(0..=dims[1] - ey), 0)
        } else {
            // Stack on a random occupied cell, shifting the anchor so the
            // brick still covers it.
            let cells = asm.grid().occupied_cells();
            let [cx, cy, cz] = *cells.choose(rng).expect("non-empty");
            if cz + 1 >= dims[2] {
                continue;
            }
            let x = cx.saturating_sub(rng.gen_range(0..ex)).min(dims[0] - ex);
            let y = cy.saturating_sub(rng.gen_range(0..ey)).min(dims[1] - ey);
            (x, y, cz + 1)
        };
        let _ = asm.place_brick(BrickInstance::new(b.id, [x, y, z], o));
    }
    asm
}

/// Follows uniformly random mask-valid actions for up to `steps` steps.
pub fn random_walk(state: &EnvState, steps: usize, rng: &mut impl Rng) -> Result<EnvState> {
    let mut s = state.clone();
    for _ in 0..steps {
        let valid = s.compute_mask().valid_indices();
        let Some(&a) = valid.choose(rng) else {
            break;
        };
        s = s.step(a)?.next_state;
    }
    Ok(s)
}

/// A random state reachable from some grounded prefix of a random target,
/// with a random inventory.
pub fn random_reachable_state(
    dims: Dims,
    catalog: &BrickCatalog,
    config: EnvConfig,
    rng: &mut impl Rng,
) -> Result<EnvState> {
    let n = rng.gen_range(4..=14);
    let target = random_grounded_assembly(dims, catalog, n, rng);
    let keep = rng.gen_range(0..=target.len());
    let initial = target.truncated(keep);
    let inventory = Inventory::with_counts((0..catalog.len()).map(|id| (id, rng.gen_range(0..4))));
    let state = EnvState::new(initial, target.grid().clone(), inventory, config)?;
    let walk = rng.gen_range(0..6);
    random_walk(&state, walk, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::voxel::is_grounded;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn assemblies_and_prefixes_are_grounded() {
        let cat = BrickCatalog::default();
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let asm = random_grounded_assembly([8, 8, 8], &cat, 12, &mut rng);
            assert!(!asm.is_empty());
            for k in 0..=asm.len() {
                assert!(is_grounded(&asm.truncated(k)));
            }
        }
    }

    #[test]
    fn generation_is_seeded() {
        let cat = BrickCatalog::default();
        let a = random_grounded_assembly([8, 8, 8], &cat, 10, &mut ChaCha8Rng::seed_from_u64(4));
        let b = random_grounded_assembly([8, 8, 8], &cat, 10, &mut ChaCha8Rng::seed_from_u64(4));
        assert_eq!(a, b);
    }
}
