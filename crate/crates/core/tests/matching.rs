use std::f64::consts::FRAC_PI_2;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use brickfill::corpus;
use brickfill::matching::{combined_similarity, match_library, ObjectLibrary, SimilarityConfig};
use brickfill::pointcloud::{voxel_to_pointcloud, RegistrationConfig, RigidTransform};
use brickfill::synth::random_grounded_assembly;
use brickfill::voxel::{Assembly, BrickCatalog, BrickInstance, VoxelGrid};

fn library() -> ObjectLibrary {
    let mut lib = ObjectLibrary::new();
    for (name, a) in corpus::all() {
        lib.insert(name, a).unwrap();
    }
    lib
}

fn subset(a: &Assembly, keep: &[usize]) -> VoxelGrid {
    let bricks: Vec<BrickInstance> = keep.iter().map(|&i| a.bricks()[i]).collect();
    Assembly::from_bricks(a.dims(), a.catalog().clone(), bricks).unwrap().grid().clone()
}

/// `g` scaled by `s` about `center`, turned by `theta` about z and moved so
/// the center lands on `goal`, sampled at the output cell centers.
fn pose(g: &VoxelGrid, dims: [usize; 3], s: f64, theta: f64, goal: [f64; 3]) -> VoxelGrid {
    let center = voxel_to_pointcloud(g).unwrap().centroid().unwrap();
    let rot = RigidTransform::about_z(theta, [0.0; 3]);
    let rc = rot.apply(&center);
    let inv = RigidTransform::about_z(0.0, [0, 1, 2].map(|i| goal[i] - rc[i]))
        .compose(&rot)
        .inverse();
    let mut out = VoxelGrid::new(dims);
    for x in 0..dims[0] {
        for y in 0..dims[1] {
            for z in 0..dims[2] {
                let r = inv.apply(&[x as f64 + 0.5, y as f64 + 0.5, z as f64 + 0.5]);
                let p = [0, 1, 2].map(|i| (center[i] + (r[i] - center[i]) / s).floor() as i64);
                if g.get_signed(p[0], p[1], p[2]) {
                    out.set([x, y, z], true);
                }
            }
        }
    }
    out
}

/// An object with 30% of its bricks deleted at random, turned a quarter and
/// enlarged 1.5 times.
fn trial(name: &str, seed: u64) -> VoxelGrid {
    let object = corpus::all().into_iter().find(|(n, _)| *n == name).unwrap().1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep: Vec<usize> = (0..object.len()).collect();
    keep.shuffle(&mut rng);
    keep.truncate(object.len() - (object.len() as f64 * 0.3).round() as usize);
    let goal = [rng.gen_range(12.0..14.0), rng.gen_range(12.0..14.0), 9.5];
    pose(&subset(&object, &keep), [26, 26, 20], 1.5, FRAC_PI_2, goal)
}

#[test]
fn complete_version_beats_an_unrelated_object() {
    let (_, chair) = corpus::all().into_iter().find(|(n, _)| *n == "chair").unwrap();
    let (_, house) = corpus::all().into_iter().find(|(n, _)| *n == "house").unwrap();
    let mut lib = ObjectLibrary::new();
    lib.insert("chair", chair.clone()).unwrap();
    lib.insert("house", house).unwrap();
    let incomplete = chair.truncated(chair.len() * 2 / 3);
    let m = match_library(incomplete.grid(), &lib, &RegistrationConfig::default(), &SimilarityConfig::default()).unwrap();
    assert_eq!(m.name, "chair");
    assert_eq!(m.per_entry.len(), 2);
}

#[test]
fn single_entry_is_always_selected() {
    let (_, table) = corpus::all().into_iter().find(|(n, _)| *n == "table").unwrap();
    let mut lib = ObjectLibrary::new();
    lib.insert("table", table).unwrap();
    let incomplete = trial("bench", 0);
    let m = match_library(&incomplete, &lib, &RegistrationConfig::default(), &SimilarityConfig::default()).unwrap();
    assert_eq!(m.name, "table");
}

#[test]
fn selects_the_source_object_after_turn_scale_and_deletion() {
    let lib = library();
    let names = ["bench", "chair", "house", "table"];
    let mut wrong = Vec::new();
    for seed in 0..20u64 {
        let name = names[seed as usize % names.len()];
        let cfg = RegistrationConfig {
            rng_seed: seed,
            ..RegistrationConfig::default()
        };
        let m = match_library(&trial(name, seed), &lib, &cfg, &SimilarityConfig::default()).unwrap();
        if m.name != name {
            wrong.push((seed, name, m.name));
        }
    }
    assert!(wrong.len() <= 1, "misselected: {wrong:?}");
}

/// Each brick becomes twice as wide, deep and tall.
fn doubled(a: &Assembly) -> Assembly {
    let fp: Vec<_> = a.catalog().footprints().iter().map(|&(w, d)| (2 * w, 2 * d)).collect();
    let bricks = a
        .bricks()
        .iter()
        .flat_map(|b| (0..2).map(move |h| BrickInstance::new(b.type_id, [2 * b.x, 2 * b.y, 2 * b.z + h], b.orientation)));
    let d = a.dims();
    Assembly::from_bricks([2 * d[0], 2 * d[1], 2 * d[2]], BrickCatalog::from_footprints(&fp).unwrap(), bricks).unwrap()
}

#[test]
fn selection_ignores_the_scale_of_library_entries() {
    let plain = library();
    for enlarged in ["bench", "chair", "house", "table"] {
        let mut lib = ObjectLibrary::new();
        for (name, a) in corpus::all() {
            lib.insert(name, if name == enlarged { doubled(&a) } else { a }).unwrap();
        }
        for (seed, name) in [(1, "chair"), (2, "house"), (3, "table"), (4, "bench")] {
            let cfg = RegistrationConfig {
                rng_seed: seed,
                ..RegistrationConfig::default()
            };
            let incomplete = trial(name, seed);
            let a = match_library(&incomplete, &plain, &cfg, &SimilarityConfig::default()).unwrap();
            let b = match_library(&incomplete, &lib, &cfg, &SimilarityConfig::default()).unwrap();
            assert_eq!(a.name, b.name, "doubling {enlarged} changed the match for {name}");
        }
    }
}

#[test]
fn matching_is_deterministic_for_a_seed() {
    let lib = library();
    let incomplete = trial("house", 5);
    let cfg = RegistrationConfig {
        rng_seed: 9,
        ..RegistrationConfig::default()
    };
    // Everything except the per-entry wall time.
    let run = || {
        let mut m = match_library(&incomplete, &lib, &cfg, &SimilarityConfig::default()).unwrap();
        for e in &mut m.per_entry {
            e.seconds = 0.0;
        }
        m
    };
    assert_eq!(run(), run());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn deleting_bricks_never_beats_the_original(seed in any::<u64>(), n in 3usize..14, mask in any::<u32>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let full = random_grounded_assembly([8, 8, 8], &corpus::small_catalog(), n, &mut rng);
        let keep: Vec<usize> = (0..full.len()).filter(|i| mask >> (i % 32) & 1 == 1).collect();
        prop_assume!(!keep.is_empty());
        let cfg = SimilarityConfig::default();
        let undeleted = combined_similarity(full.grid(), full.grid(), &cfg).unwrap();
        let deleted = combined_similarity(&subset(&full, &keep), full.grid(), &cfg).unwrap();
        prop_assert!(deleted <= undeleted + 1e-9);
    }
}
