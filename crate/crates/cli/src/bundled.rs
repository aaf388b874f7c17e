//! The in-repo corpus under `corpus/`: object files, a library manifest,
//! incomplete structures and ready-to-run scenarios. Regenerate with
//! `cargo run --example gen_corpus`.

use std::collections::BTreeMap;
use std::path::Path;

use brickfill::corpus::{self, place};
use brickfill::env::{make_scenario, MaskConfig};
use brickfill::io::{save_assembly, write_json, Manifest, ManifestEntry, ScenarioFile};
use brickfill::policy::TrainConfig;
use brickfill::voxel::{Assembly, Dims};
use brickfill::Result;

/// Grid the library scenarios are posed in.
pub const SCENE_DIMS: Dims = [16, 16, 12];
/// Fraction of bricks stripped from each object.
pub const REMOVAL: f64 = 0.3;
/// Spare bricks per type on top of the ones removed.
pub const SPARE: u32 = 2;

fn scenario(incomplete: &str, library: Option<&str>, target: Option<&str>, inventory: BTreeMap<String, u32>, x: usize, seed: u64) -> ScenarioFile {
    ScenarioFile {
        incomplete: incomplete.into(),
        library: library.map(Into::into),
        target: target.map(Into::into),
        inventory,
        mask: MaskConfig {
            boundary_tol: x,
            ..MaskConfig::default()
        },
        reward: Default::default(),
        similarity: Default::default(),
        registration: None,
        max_steps: None,
        seed,
    }
}

/// Removed bricks per type, plus `spare` of every catalog type.
pub fn inventory_for(complete: &Assembly, incomplete: &Assembly, spare: u32) -> BTreeMap<String, u32> {
    let mut inv: BTreeMap<String, u32> = (0..complete.catalog().len()).map(|id| (id.to_string(), spare)).collect();
    for b in &complete.bricks()[incomplete.len()..] {
        *inv.get_mut(&b.type_id.to_string()).expect("catalog id") += 1;
    }
    inv.retain(|_, v| *v > 0);
    inv
}

pub fn write_corpus(root: &Path) -> Result<()> {
    for sub in ["objects", "incomplete", "scenarios", "train", "audit"] {
        let d = root.join(sub);
        std::fs::create_dir_all(&d).map_err(|e| brickfill::Error::Io {
            path: d.display().to_string(),
            source: e,
        })?;
    }
    let objects = corpus::all();
    let mut entries = Vec::new();
    for (i, (name, complete)) in objects.iter().enumerate() {
        save_assembly(root.join(format!("objects/{name}.json")), complete)?;
        entries.push(ManifestEntry {
            name: name.to_string(),
            file: format!("objects/{name}.json"),
        });
        // Each incomplete object is turned a quarter and moved off-center.
        let (stripped, _) = make_scenario(complete, REMOVAL)?;
        let posed = place(&stripped, 1 + i % 3, [1 + i, 2], SCENE_DIMS)?;
        save_assembly(root.join(format!("incomplete/{name}.json")), &posed)?;
        write_json(
            root.join(format!("scenarios/{name}.json")),
            &scenario(
                &format!("../incomplete/{name}.json"),
                Some("../library.json"),
                None,
                inventory_for(complete, &stripped, SPARE),
                2,
                7,
            ),
        )?;
    }
    write_json(root.join("library.json"), &Manifest { entries })?;

    // Already complete: nothing to place.
    write_json(
        root.join("scenarios/solved.json"),
        &scenario("../objects/chair.json", None, Some("../objects/chair.json"), BTreeMap::new(), 2, 0),
    )?;

    // Small pinned-target scenario for training.
    let sculpture = corpus::sculpture();
    let start = sculpture.truncated(sculpture.len() / 3);
    save_assembly(root.join("objects/sculpture.json"), &sculpture)?;
    save_assembly(root.join("incomplete/sculpture.json"), &start)?;
    write_json(
        root.join("scenarios/sculpture.json"),
        &scenario(
            "../incomplete/sculpture.json",
            None,
            Some("../objects/sculpture.json"),
            inventory_for(&sculpture, &start, 0),
            2,
            0,
        ),
    )?;
    write_json(
        root.join("train/sculpture.json"),
        &TrainConfig {
            total_env_steps: 200_000,
            ..TrainConfig::default()
        },
    )?;

    // Mask audits, not completions: an empty 8^3 grid over three brick types.
    let empty = Assembly::new([8, 8, 8], corpus::small_catalog());
    save_assembly(root.join("incomplete/empty8.json"), &empty)?;
    let three = (0..3).map(|id| (id.to_string(), 3)).collect();
    write_json(
        root.join("audit/mask_audit.json"),
        &scenario("../incomplete/empty8.json", None, Some("../incomplete/empty8.json"), three, 1, 0),
    )?;
    write_json(
        root.join("audit/empty_inventory.json"),
        &scenario("../incomplete/empty8.json", None, Some("../incomplete/empty8.json"), BTreeMap::new(), 1, 0),
    )?;
    Ok(())
}
