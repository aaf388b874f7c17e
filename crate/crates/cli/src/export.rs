use std::path::PathBuf;

use brickfill::io::{load_grid, save_voxel};
use brickfill::pointcloud::voxel_to_supersampled_cloud;

use crate::{ExportArgs, ExportFormat};

/// Writes cell centers as PLY, or the occupancy as voxel JSON.
pub(crate) fn run(a: &ExportArgs) -> anyhow::Result<()> {
    let grid = load_grid(&a.assembly)?;
    let out = a.out.clone().unwrap_or_else(|| {
        let mut p = a.assembly.clone().into_os_string();
        p.push(match a.format {
            ExportFormat::Ply => ".ply",
            ExportFormat::Voxel => ".voxel.json",
        });
        PathBuf::from(p)
    });
    match a.format {
        ExportFormat::Ply => voxel_to_supersampled_cloud(&grid, 1).save_ply(&out)?,
        ExportFormat::Voxel => save_voxel(&out, &grid)?,
    }
    println!("{}", out.display());
    Ok(())
}
