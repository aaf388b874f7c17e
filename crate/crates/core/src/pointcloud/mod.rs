//! Point clouds in voxel units and the geometry used for intent inference:
//! voxel conversion, PCA scaling, FPFH features, RANSAC/ICP registration and
//! the Chamfer distance.

mod features;
pub mod kdtree;
mod registration;

use std::io::Write;
use std::path::Path;

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::voxel::{Dims, VoxelGrid};

pub use features::{compute_fpfh, estimate_normals, FeatureSet, FPFH_BINS, FPFH_DIM};
pub use kdtree::KdTree;
pub use registration::{
    correspondence_rmse, icp_refine, ransac_align, rigid_fit, Alignment, IcpIteration, IcpResult,
    RegistrationConfig,
};

pub type Point = [f64; 3];

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub points: Vec<Point>,
}

impl PointCloud {
    pub fn new(points: Vec<Point>) -> Self {
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn centroid(&self) -> Option<Point> {
        if self.points.is_empty() {
            return None;
        }
        let mut c = [0.0; 3];
        for p in &self.points {
            for k in 0..3 {
                c[k] += p[k];
            }
        }
        let n = self.points.len() as f64;
        Some(c.map(|v| v / n))
    }

    pub fn transformed(&self, t: &RigidTransform) -> Self {
        Self::new(self.points.iter().map(|p| t.apply(p)).collect())
    }

    /// Uniform scaling about `center`.
    pub fn scaled_about(&self, center: &Point, scale: f64) -> Self {
        Self::new(
            self.points
                .iter()
                .map(|p| [0, 1, 2].map(|k| center[k] + scale * (p[k] - center[k])))
                .collect(),
        )
    }

    pub fn is_finite(&self) -> bool {
        self.points.iter().all(|p| p.iter().all(|v| v.is_finite()))
    }

    /// ASCII PLY with six decimals per coordinate.
    pub fn write_ply(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "ply")?;
        writeln!(out, "format ascii 1.0")?;
        writeln!(out, "element vertex {}", self.points.len())?;
        writeln!(out, "property float x")?;
        writeln!(out, "property float y")?;
        writeln!(out, "property float z")?;
        writeln!(out, "end_header")?;
        for p in &self.points {
            writeln!(out, "{:.6} {:.6} {:.6}", p[0], p[1], p[2])?;
        }
        Ok(())
    }

    pub fn save_ply(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut buf = Vec::new();
        self.write_ply(&mut buf).map_err(|e| Error::io(path, e))?;
        crate::io::write_atomic(path, &buf)
    }
}

/// Proper rigid motion `p -> R p + t`. Stored row-major for serialization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            translation: [0.0; 3],
        }
    }

    pub fn from_parts(rotation: &Matrix3<f64>, translation: &Vector3<f64>) -> Self {
        let mut r = [[0.0; 3]; 3];
        for (i, row) in r.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = rotation[(i, j)];
            }
        }
        Self {
            rotation: r,
            translation: [translation[0], translation[1], translation[2]],
        }
    }

    /// Rotation by `angle` radians about the vertical axis, then translation.
    pub fn about_z(angle: f64, translation: [f64; 3]) -> Self {
        let (s, c) = angle.sin_cos();
        Self {
            rotation: [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]],
            translation,
        }
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        Matrix3::from_fn(|i, j| self.rotation[i][j])
    }

    pub fn translation_vector(&self) -> Vector3<f64> {
        Vector3::from(self.translation)
    }

    #[inline]
    pub fn apply(&self, p: &Point) -> Point {
        let r = &self.rotation;
        [0, 1, 2].map(|i| r[i][0] * p[0] + r[i][1] * p[1] + r[i][2] * p[2] + self.translation[i])
    }

    /// `self` after `first`: `p -> self(first(p))`.
    pub fn compose(&self, first: &RigidTransform) -> Self {
        let r = self.rotation_matrix() * first.rotation_matrix();
        let t = self.rotation_matrix() * first.translation_vector() + self.translation_vector();
        Self::from_parts(&r, &t)
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation_matrix().transpose();
        let t = -(rt * self.translation_vector());
        Self::from_parts(&rt, &t)
    }

    /// Orthonormal with determinant +1 within `tol`.
    pub fn is_proper(&self, tol: f64) -> bool {
        let r = self.rotation_matrix();
        let err = (r.transpose() * r - Matrix3::identity()).abs().max();
        err <= tol && (r.determinant() - 1.0).abs() <= tol
    }
}

/// One point per occupied cell, at the cell center, in row-major order.
pub fn voxel_to_pointcloud(grid: &VoxelGrid) -> Result<PointCloud> {
    if grid.is_empty() {
        return Err(Error::EmptyInput("voxel grid has no occupied cells"));
    }
    Ok(PointCloud::new(
        grid.occupied_cells()
            .into_iter()
            .map(|c| c.map(|v| v as f64 + 0.5))
            .collect(),
    ))
}

/// `n^3` sub-cell centers per occupied cell; `n = 1` gives the cell centers.
pub fn voxel_to_supersampled_cloud(grid: &VoxelGrid, n: usize) -> PointCloud {
    let n = n.max(1);
    let step = 1.0 / n as f64;
    let mut points = Vec::with_capacity(grid.occupied_count() * n * n * n);
    for c in grid.occupied_cells() {
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    points.push([
                        c[0] as f64 + (i as f64 + 0.5) * step,
                        c[1] as f64 + (j as f64 + 0.5) * step,
                        c[2] as f64 + (k as f64 + 0.5) * step,
                    ]);
                }
            }
        }
    }
    PointCloud::new(points)
}

/// Result of rasterizing a cloud: the grid and how many points fell outside it.
#[derive(Debug, Clone, PartialEq)]
pub struct Voxelization {
    pub grid: VoxelGrid,
    pub clipped: usize,
}

/// A cell is occupied iff some point lies in `[x, x+1) x [y, y+1) x [z, z+1)`.
pub fn pointcloud_to_voxel(cloud: &PointCloud, dims: Dims) -> Voxelization {
    let mut grid = VoxelGrid::new(dims);
    let mut clipped = 0;
    for p in &cloud.points {
        let c = p.map(|v| v.floor());
        let inside = c.iter().all(|v| v.is_finite() && *v >= 0.0)
            && (0..3).all(|k| (c[k] as usize) < dims[k]);
        if inside {
            grid.set(c.map(|v| v as usize), true);
        } else {
            clipped += 1;
        }
    }
    Voxelization { grid, clipped }
}

/// Principal axes of a cloud, strongest first.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaSummary {
    pub mean: Point,
    /// Unit axes, one per row, ordered by explained variance.
    pub components: [[f64; 3]; 3],
    /// Population variances along each component, descending.
    pub explained_variances: [f64; 3],
}

pub fn pca(cloud: &PointCloud) -> Result<PcaSummary> {
    let mean = cloud
        .centroid()
        .ok_or(Error::EmptyInput("point cloud is empty"))?;
    let mut cov = Matrix3::<f64>::zeros();
    for p in &cloud.points {
        let v = Vector3::new(p[0] - mean[0], p[1] - mean[1], p[2] - mean[2]);
        cov += v * v.transpose();
    }
    cov /= cloud.len() as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut components = [[0.0; 3]; 3];
    let mut variances = [0.0; 3];
    for (rank, &k) in order.iter().enumerate() {
        let v = eig.eigenvectors.column(k);
        components[rank] = [v[0], v[1], v[2]];
        // Round-off can leave tiny negative eigenvalues on flat clouds.
        variances[rank] = eig.eigenvalues[k].max(0.0);
    }
    Ok(PcaSummary {
        mean,
        components,
        explained_variances: variances,
    })
}

/// Variances below this are treated as a degenerate (flat) axis.
const ZERO_VARIANCE: f64 = 1e-12;

/// Uniform factor that fits `target` to `source`: the largest ratio of
/// principal standard deviations over axes where the target has spread.
pub fn pca_scale_factor(source: &PcaSummary, target: &PcaSummary) -> Result<f64> {
    let mut best: Option<f64> = None;
    for i in 0..3 {
        let t = target.explained_variances[i];
        if t <= ZERO_VARIANCE {
            continue;
        }
        let ratio = source.explained_variances[i].sqrt() / t.sqrt();
        best = Some(best.map_or(ratio, |b: f64| b.max(ratio)));
    }
    match best {
        None => Err(Error::DegenerateGeometry(
            "target has zero variance on every principal axis".into(),
        )),
        Some(s) if s <= 0.0 || !s.is_finite() => Err(Error::DegenerateGeometry(format!(
            "scale factor {s} is not positive"
        ))),
        Some(s) => Ok(s),
    }
}

/// Scales `target` about its centroid by [`pca_scale_factor`].
pub fn pca_scale(source: &PointCloud, target: &PointCloud) -> Result<(PointCloud, f64)> {
    let ps = pca(source)?;
    let pt = pca(target)?;
    let scale = pca_scale_factor(&ps, &pt)?;
    Ok((target.scaled_about(&pt.mean, scale), scale))
}

fn mean_nearest_distance(from: &PointCloud, to: &KdTree) -> f64 {
    let sum: f64 = from
        .points
        .iter()
        .map(|p| to.nearest(p).expect("non-empty tree").1.sqrt())
        .sum();
    sum / from.len() as f64
}

/// Symmetric Chamfer distance: the average of both directed mean
/// nearest-neighbour distances.
pub fn chamfer_distance(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyInput("chamfer distance needs two non-empty clouds"));
    }
    let ta = KdTree::build(&a.points);
    let tb = KdTree::build(&b.points);
    Ok((mean_nearest_distance(a, &tb) + mean_nearest_distance(b, &ta)) / 2.0)
}
