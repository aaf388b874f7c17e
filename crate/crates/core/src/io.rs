//! JSON file formats and atomic writes.
//!
//! * voxel: `{"dims": [h, w, d], "cells": [[x, y, z], ...]}`
//! * assembly: `{"dims": [...], "catalog": [[w, d], ...], "bricks": [{"B": 0, "pos": [x, y, z], "orient": 0}, ...]}`
//!   (`catalog` is optional and defaults to the standard eight bricks)
//! * library manifest: `{"entries": [{"name": "chair", "file": "chair.json"}, ...]}`
//! * scenario: see [`ScenarioFile`]
//!
//! Relative paths inside a manifest or scenario resolve against that file's directory.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::env::{Action, EnvConfig, MaskConfig, RewardConfig};
use crate::error::{Error, Result};
use crate::matching::{ObjectLibrary, SimilarityConfig};
use crate::pointcloud::RegistrationConfig;
use crate::voxel::{Assembly, BrickCatalog, Cell, Dims, Inventory, VoxelGrid};

/// Writes through a sibling temporary file and a rename.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn write_json(path: impl AsRef<Path>, value: &impl Serialize) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| Error::json(path.as_ref(), e))?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

/// One JSON document per line.
pub fn write_json_lines<T: Serialize>(path: impl AsRef<Path>, rows: &[T]) -> Result<()> {
    let mut out = Vec::new();
    for r in rows {
        serde_json::to_writer(&mut out, r).map_err(|e| Error::json(path.as_ref(), e))?;
        out.write_all(b"\n").expect("vec write");
    }
    write_atomic(path, &out)
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut de = serde_json::Deserializer::from_str(&text);
    let value = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let field = e.path().to_string();
        Error::Json {
            path: path.display().to_string(),
            field: if field == "." { String::new() } else { field },
            source: e.into_inner(),
        }
    })?;
    de.end().map_err(|e| Error::json(path, e))?;
    Ok(value)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VoxelFile {
    pub dims: Dims,
    pub cells: Vec<Cell>,
}

impl VoxelFile {
    pub fn from_grid(grid: &VoxelGrid) -> Self {
        Self {
            dims: grid.dims(),
            cells: grid.occupied_cells(),
        }
    }

    pub fn to_grid(&self) -> Result<VoxelGrid> {
        VoxelGrid::from_cells(self.dims, &self.cells)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssemblyFile {
    pub dims: Dims,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub catalog: Option<Vec<[usize; 2]>>,
    pub bricks: Vec<Action>,
}

pub(crate) fn catalog_from(spec: &Option<Vec<[usize; 2]>>) -> Result<BrickCatalog> {
    match spec {
        None => Ok(BrickCatalog::default()),
        Some(list) => {
            let fp: Vec<(usize, usize)> = list.iter().map(|&[w, d]| (w, d)).collect();
            BrickCatalog::from_footprints(&fp)
        }
    }
}

impl AssemblyFile {
    pub fn from_assembly(asm: &Assembly) -> Self {
        let catalog = (!asm.catalog().is_standard()).then(|| {
            asm.catalog()
                .footprints()
                .into_iter()
                .map(|(w, d)| [w, d])
                .collect()
        });
        Self {
            dims: asm.dims(),
            catalog,
            bricks: asm
                .bricks()
                .iter()
                .map(|b| Action::new(b.type_id, [b.x, b.y, b.z], b.orientation))
                .collect(),
        }
    }

    pub fn to_assembly(&self) -> Result<Assembly> {
        Assembly::from_bricks(
            self.dims,
            catalog_from(&self.catalog)?,
            self.bricks.iter().map(|a| a.brick()),
        )
    }
}

pub fn save_voxel(path: impl AsRef<Path>, grid: &VoxelGrid) -> Result<()> {
    write_json(path, &VoxelFile::from_grid(grid))
}

pub fn save_assembly(path: impl AsRef<Path>, asm: &Assembly) -> Result<()> {
    write_json(path, &AssemblyFile::from_assembly(asm))
}

pub fn load_assembly(path: impl AsRef<Path>) -> Result<Assembly> {
    read_json::<AssemblyFile>(&path)?.to_assembly()
}

/// Reads either a voxel file or an assembly file as an occupancy grid.
pub fn load_grid(path: impl AsRef<Path>) -> Result<VoxelGrid> {
    let path = path.as_ref();
    let value: serde_json::Value = read_json(path)?;
    if value.get("bricks").is_some() {
        let f: AssemblyFile = serde_json::from_value(value).map_err(|e| Error::json(path, e))?;
        Ok(f.to_assembly()?.grid().clone())
    } else {
        let f: VoxelFile = serde_json::from_value(value).map_err(|e| Error::json(path, e))?;
        f.to_grid()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub name: String,
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

fn resolve(base: &Path, rel: &str) -> PathBuf {
    let p = Path::new(rel);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.parent().unwrap_or(Path::new(".")).join(p)
    }
}

/// Loads every manifest entry, checking that each is grounded.
pub fn load_library(manifest: impl AsRef<Path>) -> Result<ObjectLibrary> {
    let manifest = manifest.as_ref();
    let m: Manifest = read_json(manifest)?;
    let mut lib = ObjectLibrary::new();
    for e in &m.entries {
        lib.insert(e.name.clone(), load_assembly(resolve(manifest, &e.file))?)?;
    }
    Ok(lib)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    /// Assembly file with the incomplete structure.
    pub incomplete: String,
    /// Library manifest; required unless `target` pins the reference.
    #[serde(default)]
    pub library: Option<String>,
    /// Voxel or assembly file used as `V_tar` instead of matching.
    #[serde(default)]
    pub target: Option<String>,
    /// Remaining bricks per type id.
    pub inventory: BTreeMap<String, u32>,
    #[serde(default)]
    pub mask: MaskConfig,
    #[serde(default)]
    pub reward: RewardConfig,
    #[serde(default)]
    pub similarity: SimilarityConfig,
    #[serde(default)]
    pub registration: Option<RegistrationConfig>,
    #[serde(default)]
    pub max_steps: Option<usize>,
    #[serde(default)]
    pub seed: u64,
}

/// A scenario with its files loaded.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub path: PathBuf,
    pub incomplete: Assembly,
    pub library: Option<ObjectLibrary>,
    pub target: Option<VoxelGrid>,
    pub inventory: Inventory,
    pub env: EnvConfig,
    pub registration: RegistrationConfig,
    pub seed: u64,
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let path = path.as_ref();
    let f: ScenarioFile = read_json(path)?;
    let incomplete = load_assembly(resolve(path, &f.incomplete))?;
    let library = f.library.as_ref().map(|l| load_library(resolve(path, l))).transpose()?;
    let target = f.target.as_ref().map(|t| load_grid(resolve(path, t))).transpose()?;
    if library.is_none() && target.is_none() {
        return Err(Error::Config(format!(
            "{}: scenario needs a `library` or a `target`",
            path.display()
        )));
    }
    if let Some(t) = &target {
        if t.dims() != incomplete.dims() {
            return Err(Error::ShapeMismatch(incomplete.dims(), t.dims()));
        }
    }
    let mut inventory = Inventory::new();
    for (k, &v) in &f.inventory {
        let id: usize = k.parse().map_err(|_| {
            Error::Config(format!("{}: inventory key `{k}` is not a brick type id", path.display()))
        })?;
        if id >= incomplete.catalog().len() {
            return Err(Error::Config(format!(
                "{}: inventory names brick type {id}, catalog has {}",
                path.display(),
                incomplete.catalog().len()
            )));
        }
        inventory.set(id, v);
    }
    let registration = f.registration.clone().unwrap_or_else(|| RegistrationConfig {
        rng_seed: f.seed,
        ..RegistrationConfig::default()
    });
    let env = EnvConfig {
        similarity: f.similarity,
        mask: f.mask,
        reward: f.reward,
        max_steps: f.max_steps,
    };
    env.validate()?;
    registration.validate()?;
    Ok(Scenario {
        path: path.to_path_buf(),
        incomplete,
        library,
        target,
        inventory,
        env,
        registration,
        seed: f.seed,
    })
}
