//! Surface normals and Fast Point Feature Histograms.

use std::f64::consts::PI;

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use rayon::prelude::*;

use super::kdtree::KdTree;
use super::registration::RegistrationConfig;
use super::{Point, PointCloud};

pub const FPFH_BINS: usize = 11;
pub const FPFH_DIM: usize = 3 * FPFH_BINS;

/// Per-point FPFH descriptors.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub histograms: Vec<[f64; FPFH_DIM]>,
    /// Points with no neighbour inside the feature radius (zero histogram).
    pub isolated: Vec<bool>,
}

impl FeatureSet {
    pub fn len(&self) -> usize {
        self.histograms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.histograms.is_empty()
    }
}

fn sub(a: &Point, b: &Point) -> Vector3<f64> {
    Vector3::new(a[0] - b[0], a[1] - b[1], a[2] - b[2])
}

/// Unit normals from the local covariance's weakest axis, oriented away from
/// the cloud centroid. Points with fewer than three neighbours inside
/// `normal_radius` use the centroid-to-point direction instead.
pub fn estimate_normals(cloud: &PointCloud, config: &RegistrationConfig) -> Vec<Point> {
    let Some(centroid) = cloud.centroid() else {
        return Vec::new();
    };
    let tree = KdTree::build(&cloud.points);
    let r2 = config.normal_radius * config.normal_radius;
    cloud
        .points
        .par_iter()
        .map(|p| {
            let outward = sub(p, &centroid);
            let neighbors = tree.within(p, r2);
            let n = if neighbors.len() < 4 {
                // `within` includes the point itself.
                fallback_normal(&outward)
            } else {
                let mut mean = Vector3::zeros();
                for &j in &neighbors {
                    mean += Vector3::from(cloud.points[j]);
                }
                mean /= neighbors.len() as f64;
                let mut cov = Matrix3::zeros();
                for &j in &neighbors {
                    let v = Vector3::from(cloud.points[j]) - mean;
                    cov += v * v.transpose();
                }
                let eig = SymmetricEigen::new(cov);
                let k = eig.eigenvalues.imin();
                let v = eig.eigenvectors.column(k).into_owned();
                if v.dot(&outward) < 0.0 {
                    -v
                } else {
                    v
                }
            };
            [n[0], n[1], n[2]]
        })
        .collect()
}

fn fallback_normal(outward: &Vector3<f64>) -> Vector3<f64> {
    let norm = outward.norm();
    if norm > 0.0 {
        outward / norm
    } else {
        Vector3::z()
    }
}

/// Darboux-frame angles `(alpha, phi, theta)` of a point pair, with the
/// source chosen as the endpoint whose normal is closer to the connecting line.
pub(crate) fn pair_features(p1: &Point, n1: &Point, p2: &Point, n2: &Point) -> Option<[f64; 3]> {
    let mut dp = sub(p2, p1);
    let dist = dp.norm();
    if dist == 0.0 {
        return None;
    }
    let mut n1v = Vector3::from(*n1);
    let mut n2v = Vector3::from(*n2);
    let angle1 = n1v.dot(&dp) / dist;
    let angle2 = n2v.dot(&dp) / dist;
    let phi = if angle1.abs().acos() > angle2.abs().acos() {
        std::mem::swap(&mut n1v, &mut n2v);
        dp = -dp;
        -angle2
    } else {
        angle1
    };
    let v = dp.cross(&n1v);
    let vn = v.norm();
    if vn == 0.0 {
        return None;
    }
    let v = v / vn;
    let w = n1v.cross(&v);
    let theta = v.dot(&n2v);
    let alpha = w.dot(&n2v).atan2(n1v.dot(&n2v));
    Some([alpha, phi, theta])
}

fn bin(value: f64, lo: f64, hi: f64) -> usize {
    let b = ((value - lo) / (hi - lo) * FPFH_BINS as f64).floor();
    (b.max(0.0) as usize).min(FPFH_BINS - 1)
}

fn spfh(
    i: usize,
    neighbors: &[usize],
    points: &[Point],
    normals: &[Point],
) -> [f64; FPFH_DIM] {
    let mut h = [0.0; FPFH_DIM];
    let pairs: Vec<[f64; 3]> = neighbors
        .iter()
        .filter_map(|&j| pair_features(&points[i], &normals[i], &points[j], &normals[j]))
        .collect();
    if pairs.is_empty() {
        return h;
    }
    let inc = 100.0 / pairs.len() as f64;
    for [alpha, phi, theta] in pairs {
        h[bin(alpha, -PI, PI)] += inc;
        h[FPFH_BINS + bin(phi, -1.0, 1.0)] += inc;
        h[2 * FPFH_BINS + bin(theta, -1.0, 1.0)] += inc;
    }
    h
}

/// FPFH with 11 bins per angle: `SPFH(p) + (1/k) sum_k SPFH(q_k) / |p - q_k|`
/// over the `k` neighbours inside `feature_radius`.
pub fn compute_fpfh(cloud: &PointCloud, normals: &[Point], config: &RegistrationConfig) -> FeatureSet {
    assert_eq!(cloud.len(), normals.len(), "one normal per point");
    let points = &cloud.points;
    let tree = KdTree::build(points);
    let r2 = config.feature_radius * config.feature_radius;
    let neighbors: Vec<Vec<usize>> = points
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            tree.within(p, r2)
                .into_iter()
                .filter(|&j| j != i && points[j] != points[i])
                .collect()
        })
        .collect();
    let spfhs: Vec<[f64; FPFH_DIM]> = (0..points.len())
        .into_par_iter()
        .map(|i| spfh(i, &neighbors[i], points, normals))
        .collect();
    let histograms: Vec<[f64; FPFH_DIM]> = (0..points.len())
        .into_par_iter()
        .map(|i| {
            let nb = &neighbors[i];
            let mut h = spfhs[i];
            if nb.is_empty() {
                return h;
            }
            let k = nb.len() as f64;
            for &j in nb {
                let w = 1.0 / super::kdtree::dist2(&points[i], &points[j]).sqrt() / k;
                for (dst, src) in h.iter_mut().zip(spfhs[j].iter()) {
                    *dst += w * src;
                }
            }
            h
        })
        .collect();
    let isolated = neighbors.iter().map(|n| n.is_empty()).collect();
    FeatureSet {
        histograms,
        isolated,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pointcloud::RigidTransform;
    use nalgebra::{Rotation3, Unit};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cfg() -> RegistrationConfig {
        RegistrationConfig::default()
    }

    #[test]
    fn planar_normals_perpendicular() {
        let mut pts = Vec::new();
        for x in 0..8 {
            for y in 0..8 {
                pts.push([x as f64 * 0.7, y as f64 * 0.7, 2.0]);
            }
        }
        let cloud = PointCloud::new(pts);
        for n in estimate_normals(&cloud, &cfg()) {
            assert!((n[2].abs() - 1.0).abs() < 1e-6, "{n:?}");
            let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
            assert!((len - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn shell_normals_point_outward() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pts: Vec<Point> = (0..400)
            .map(|_| {
                let v = Vector3::new(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0f64),
                )
                .normalize()
                    * 6.0;
                [v[0], v[1], v[2]]
            })
            .collect();
        let cloud = PointCloud::new(pts);
        let normals = estimate_normals(&cloud, &cfg());
        for (p, n) in cloud.points.iter().zip(&normals) {
            let dot = p[0] * n[0] + p[1] * n[1] + p[2] * n[2];
            assert!(dot > 0.0);
            let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
            assert!((len - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn sparse_points_fall_back_to_radial_normals() {
        let cloud = PointCloud::new(vec![[0.0; 3], [10.0, 0.0, 0.0], [0.0, 10.0, 0.0]]);
        let normals = estimate_normals(&cloud, &cfg());
        let c = cloud.centroid().unwrap();
        for (p, n) in cloud.points.iter().zip(&normals) {
            let d = sub(p, &c).normalize();
            assert!((d - Vector3::from(*n)).norm() < 1e-12);
        }
    }

    fn random_cloud(seed: u64) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        PointCloud::new(
            (0..150)
                .map(|_| [0; 3].map(|_| rng.gen_range(0.0..6.0)))
                .collect(),
        )
    }

    #[test]
    fn fpfh_rigid_invariance() {
        let cloud = random_cloud(21);
        let rot = Rotation3::from_axis_angle(&Unit::new_normalize(Vector3::new(0.3, -1.0, 0.5)), 1.1);
        let t = RigidTransform::from_parts(rot.matrix(), &Vector3::new(4.0, -3.0, 10.0));
        let moved = cloud.transformed(&t);
        let fa = compute_fpfh(&cloud, &estimate_normals(&cloud, &cfg()), &cfg());
        let fb = compute_fpfh(&moved, &estimate_normals(&moved, &cfg()), &cfg());
        for (a, b) in fa.histograms.iter().zip(&fb.histograms) {
            for k in 0..FPFH_DIM {
                assert!((a[k] - b[k]).abs() < 1e-6, "bin {k}: {} vs {}", a[k], b[k]);
            }
        }
    }

    #[test]
    fn fpfh_non_negative_and_isolated_zero() {
        let mut cloud = random_cloud(22);
        cloud.points.push([100.0, 100.0, 100.0]);
        let normals = estimate_normals(&cloud, &cfg());
        let f = compute_fpfh(&cloud, &normals, &cfg());
        assert_eq!(f.len(), cloud.len());
        assert!(f.histograms.iter().all(|h| h.iter().all(|&v| v >= 0.0)));
        let last = f.len() - 1;
        assert!(f.isolated[last]);
        assert!(f.histograms[last].iter().all(|&v| v == 0.0));
        assert!(!f.isolated[0]);
        // Each SPFH sub-histogram sums to 100, so a non-isolated FPFH exceeds it.
        let s: f64 = f.histograms[0][..FPFH_BINS].iter().sum();
        assert!(s >= 100.0 - 1e-9);
    }

    #[test]
    fn pair_features_ranges() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let p1 = [0; 3].map(|_| rng.gen_range(-1.0..1.0));
            let p2 = [0; 3].map(|_| rng.gen_range(-1.0..1.0));
            let n1 = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), 0.4).normalize();
            let n2 = Vector3::new(rng.gen_range(-1.0..1.0), 0.2, rng.gen_range(-1.0..1.0)).normalize();
            let [a, phi, theta] = pair_features(&p1, &[n1[0], n1[1], n1[2]], &p2, &[n2[0], n2[1], n2[2]]).unwrap();
            assert!((-PI..=PI).contains(&a));
            assert!((-1.0..=1.0).contains(&phi));
            assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&theta));
        }
    }
}
