//! Feature-based RANSAC for a global pose and point-to-point ICP refinement.

use nalgebra::{Matrix3, Vector3, SVD};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::features::{FeatureSet, FPFH_DIM};
use super::kdtree::{dist2, KdTree};
use super::{Point, PointCloud, RigidTransform};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegistrationConfig {
    pub normal_radius: f64,
    pub feature_radius: f64,
    pub ransac_iterations: usize,
    pub ransac_correspondence_distance: f64,
    /// Strictly decreasing ICP distance thresholds.
    pub icp_schedule: Vec<f64>,
    pub icp_max_iterations_per_threshold: usize,
    pub rng_seed: u64,
}

impl Default for RegistrationConfig {
    fn default() -> Self {
        Self {
            normal_radius: 2.5,
            feature_radius: 5.0,
            ransac_iterations: 4000,
            ransac_correspondence_distance: 1.5,
            icp_schedule: vec![4.0, 2.0, 1.0, 0.5],
            icp_max_iterations_per_threshold: 30,
            rng_seed: 0,
        }
    }
}

impl RegistrationConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.normal_radius > 0.0 && self.feature_radius > 0.0) {
            return bad("normal_radius and feature_radius must be positive");
        }
        if self.ransac_iterations == 0 {
            return bad("ransac_iterations must be at least 1");
        }
        if !(self.ransac_correspondence_distance > 0.0) {
            return bad("ransac_correspondence_distance must be positive");
        }
        if self.icp_schedule.is_empty() || self.icp_schedule.iter().any(|&t| !(t > 0.0)) {
            return bad("icp_schedule must be non-empty and positive");
        }
        if self.icp_schedule.windows(2).any(|w| w[1] >= w[0]) {
            return bad("icp_schedule must be strictly decreasing");
        }
        Ok(())
    }
}

/// Least-squares rigid motion taking `src[i]` onto `dst[i]` (Kabsch).
pub fn rigid_fit(src: &[Point], dst: &[Point]) -> RigidTransform {
    assert_eq!(src.len(), dst.len());
    assert!(!src.is_empty());
    let n = src.len() as f64;
    let mut cs = Vector3::zeros();
    let mut cd = Vector3::zeros();
    for (s, d) in src.iter().zip(dst) {
        cs += Vector3::from(*s);
        cd += Vector3::from(*d);
    }
    cs /= n;
    cd /= n;
    let mut h = Matrix3::zeros();
    for (s, d) in src.iter().zip(dst) {
        h += (Vector3::from(*d) - cd) * (Vector3::from(*s) - cs).transpose();
    }
    let svd = SVD::new(h, true, true);
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        let mut u = u;
        u.column_mut(2).scale_mut(-1.0);
        r = u * v_t;
    }
    let t = cd - r * cs;
    RigidTransform::from_parts(&r, &t)
}

/// RMSE and count of `transform(source)` points whose nearest target lies
/// within `max_distance`. `None` when no point qualifies.
pub fn correspondence_rmse(
    source: &PointCloud,
    target_tree: &KdTree,
    transform: &RigidTransform,
    max_distance: f64,
) -> Option<(f64, usize)> {
    let max2 = max_distance * max_distance;
    let mut sum = 0.0;
    let mut count = 0;
    for p in &source.points {
        let q = transform.apply(p);
        if let Some((_, d2)) = target_tree.nearest(&q) {
            if d2 <= max2 {
                sum += d2;
                count += 1;
            }
        }
    }
    (count > 0).then(|| ((sum / count as f64).sqrt(), count))
}

/// A global alignment hypothesis and its quality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alignment {
    pub transform: RigidTransform,
    pub inliers: usize,
    /// Inliers over source size.
    pub fitness: f64,
    /// RMSE over inliers; infinite when there are none.
    pub rmse: f64,
}

/// Every target whose feature is nearest to `query`. Regular brick geometry
/// gives many identical histograms, so ties are common.
fn feature_nearest(query: &[f64; FPFH_DIM], features: &FeatureSet) -> Vec<usize> {
    let mut best = f64::INFINITY;
    let mut tied = Vec::new();
    for (j, h) in features.histograms.iter().enumerate() {
        let mut d = 0.0;
        for k in 0..FPFH_DIM {
            let e = query[k] - h[k];
            d += e * e;
        }
        if d < best - FEATURE_TIE {
            best = d;
            tied.clear();
            tied.push(j);
        } else if d <= best + FEATURE_TIE {
            tied.push(j);
        }
    }
    tied
}

// Squared feature distances this close count as ties.
const FEATURE_TIE: f64 = 1e-9;

// Sampled correspondences must preserve pairwise lengths to within this ratio.
const EDGE_LENGTH_RATIO: f64 = 0.9;

/// Global registration: each iteration samples three feature-space nearest
/// neighbour correspondences, fits them in closed form and scores the fit by
/// how many transformed source points land within
/// `ransac_correspondence_distance` of the target. The returned transform
/// maps `source` onto `target`.
pub fn ransac_align(
    source: &PointCloud,
    target: &PointCloud,
    source_features: &FeatureSet,
    target_features: &FeatureSet,
    config: &RegistrationConfig,
) -> Result<Alignment> {
    for cloud in [source, target] {
        if cloud.len() < 3 {
            return Err(Error::InsufficientPoints {
                needed: 3,
                got: cloud.len(),
            });
        }
    }
    if config.ransac_iterations == 0 {
        return Err(Error::Config("ransac_iterations must be at least 1".into()));
    }
    let nearest: Vec<Vec<usize>> = source_features
        .histograms
        .par_iter()
        .map(|h| feature_nearest(h, target_features))
        .collect();

    // Each sample draws three distinct source points and one of each point's
    // tied feature neighbours.
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let samples: Vec<[(usize, usize); 3]> = (0..config.ransac_iterations)
        .map(|_| {
            let s = sample(&mut rng, nearest.len(), 3);
            [0, 1, 2].map(|k| {
                let i = s.index(k);
                (i, nearest[i][rng.gen_range(0..nearest[i].len())])
            })
        })
        .collect();

    let tree = KdTree::build(&target.points);
    let candidates: Vec<(usize, Alignment)> = samples
        .par_iter()
        .enumerate()
        .filter_map(|(iter, idx)| {
            let src: Vec<Point> = idx.iter().map(|&(i, _)| source.points[i]).collect();
            let dst: Vec<Point> = idx.iter().map(|&(_, j)| target.points[j]).collect();
            for a in 0..3 {
                for b in a + 1..3 {
                    let ls = dist2(&src[a], &src[b]).sqrt();
                    let ld = dist2(&dst[a], &dst[b]).sqrt();
                    if ls.min(ld) < EDGE_LENGTH_RATIO * ls.max(ld) {
                        return None;
                    }
                }
            }
            let transform = rigid_fit(&src, &dst);
            let (rmse, inliers) = correspondence_rmse(
                source,
                &tree,
                &transform,
                config.ransac_correspondence_distance,
            )?;
            Some((
                iter,
                Alignment {
                    transform,
                    inliers,
                    fitness: inliers as f64 / source.len() as f64,
                    rmse,
                },
            ))
        })
        .collect();

    let best = candidates.into_iter().min_by(|(ia, a), (ib, b)| {
        b.inliers
            .cmp(&a.inliers)
            .then(a.rmse.total_cmp(&b.rmse))
            .then(ia.cmp(ib))
    });
    Ok(match best {
        Some((_, a)) => a,
        None => Alignment {
            transform: RigidTransform::identity(),
            inliers: 0,
            fitness: 0.0,
            rmse: f64::INFINITY,
        },
    })
}

/// One accepted ICP iterate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcpIteration {
    pub threshold: f64,
    pub transform: RigidTransform,
    pub rmse: f64,
    pub correspondences: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcpResult {
    pub transform: RigidTransform,
    /// RMSE of the final transform at the last threshold that had correspondences.
    pub rmse: f64,
    /// Every accepted iterate, in order; the first entry per threshold is the incoming transform.
    pub history: Vec<IcpIteration>,
}

/// Point-to-point ICP over a decreasing threshold schedule. At each
/// threshold, correspondences are nearest targets within the threshold and
/// each step is the closed-form rigid fit to them. A step that would raise
/// the correspondence RMSE is rejected, so RMSE never increases within a
/// threshold; iteration stops when the improvement falls below `1e-6`.
pub fn icp_refine(
    source: &PointCloud,
    target: &PointCloud,
    init: &RigidTransform,
    config: &RegistrationConfig,
) -> Result<IcpResult> {
    if source.is_empty() || target.is_empty() {
        return Err(Error::EmptyInput("icp needs non-empty clouds"));
    }
    let tree = KdTree::build(&target.points);
    let mut current = *init;
    let mut history = Vec::new();
    let mut last_rmse = f64::INFINITY;
    for (stage, &threshold) in config.icp_schedule.iter().enumerate() {
        let Some((mut rmse, mut count)) = correspondence_rmse(source, &tree, &current, threshold)
        else {
            if stage == 0 {
                return Err(Error::NoOverlap { threshold });
            }
            break;
        };
        history.push(IcpIteration {
            threshold,
            transform: current,
            rmse,
            correspondences: count,
        });
        let t2 = threshold * threshold;
        for _ in 0..config.icp_max_iterations_per_threshold {
            let mut src = Vec::with_capacity(count);
            let mut dst = Vec::with_capacity(count);
            for p in &source.points {
                let q = current.apply(p);
                let (j, d2) = tree.nearest(&q).expect("non-empty target");
                if d2 <= t2 {
                    src.push(*p);
                    dst.push(target.points[j]);
                }
            }
            let candidate = rigid_fit(&src, &dst);
            let Some((next_rmse, next_count)) =
                correspondence_rmse(source, &tree, &candidate, threshold)
            else {
                break;
            };
            if next_rmse > rmse {
                break;
            }
            let improvement = rmse - next_rmse;
            current = candidate;
            rmse = next_rmse;
            count = next_count;
            history.push(IcpIteration {
                threshold,
                transform: current,
                rmse,
                correspondences: count,
            });
            if improvement < 1e-6 {
                break;
            }
        }
        last_rmse = rmse;
    }
    Ok(IcpResult {
        transform: current,
        rmse: last_rmse,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pointcloud::{compute_fpfh, estimate_normals};

    fn lattice_object() -> PointCloud {
        // An asymmetric "L" block with a post, on a unit lattice.
        let mut pts = Vec::new();
        for x in 0..7 {
            for y in 0..3 {
                for z in 0..2 {
                    pts.push([x as f64 + 0.5, y as f64 + 0.5, z as f64 + 0.5]);
                }
            }
        }
        for y in 3..6 {
            for z in 0..2 {
                pts.push([0.5, y as f64 + 0.5, z as f64 + 0.5]);
                pts.push([1.5, y as f64 + 0.5, z as f64 + 0.5]);
            }
        }
        for z in 2..6 {
            pts.push([6.5, 0.5, z as f64 + 0.5]);
        }
        PointCloud::new(pts)
    }

    fn rmse_to(a: &PointCloud, b: &PointCloud) -> f64 {
        let s: f64 = a.points.iter().zip(&b.points).map(|(p, q)| dist2(p, q)).sum();
        (s / a.len() as f64).sqrt()
    }

    #[test]
    fn rigid_fit_recovers_known_motion() {
        let src = lattice_object();
        let truth = RigidTransform::about_z(0.7, [3.0, -1.0, 2.0]);
        let dst = src.transformed(&truth);
        let fit = rigid_fit(&src.points, &dst.points);
        assert!(fit.is_proper(1e-9));
        assert!(rmse_to(&src.transformed(&fit), &dst) < 1e-9);
    }

    #[test]
    fn config_validation() {
        assert!(RegistrationConfig::default().validate().is_ok());
        let mut c = RegistrationConfig::default();
        c.icp_schedule = vec![1.0, 2.0];
        assert!(c.validate().is_err());
        c.icp_schedule = vec![1.0, 0.0];
        assert!(c.validate().is_err());
    }

    fn features(c: &PointCloud, cfg: &RegistrationConfig) -> FeatureSet {
        compute_fpfh(c, &estimate_normals(c, cfg), cfg)
    }

    #[test]
    fn ransac_identity_case() {
        let cfg = RegistrationConfig::default();
        let c = lattice_object();
        let f = features(&c, &cfg);
        let a = ransac_align(&c, &c, &f, &f, &cfg).unwrap();
        assert!(a.fitness >= 0.99);
        let id = RigidTransform::identity();
        for i in 0..3 {
            for j in 0..3 {
                assert!((a.transform.rotation[i][j] - id.rotation[i][j]).abs() < 1e-3);
            }
            assert!(a.transform.translation[i].abs() < 1e-3);
        }
    }

    #[test]
    fn ransac_recovers_quarter_turn() {
        let cfg = RegistrationConfig::default();
        let src = lattice_object();
        let truth = RigidTransform::about_z(std::f64::consts::FRAC_PI_2, [12.0, -4.0, 1.0]);
        let tgt = src.transformed(&truth);
        let a = ransac_align(&src, &tgt, &features(&src, &cfg), &features(&tgt, &cfg), &cfg).unwrap();
        // Oracle: the known ground-truth correspondence.
        let moved = src.transformed(&a.transform);
        assert!(rmse_to(&moved, &tgt) <= 0.25, "rmse {}", rmse_to(&moved, &tgt));

        let icp = icp_refine(&src, &tgt, &a.transform, &cfg).unwrap();
        assert!(rmse_to(&src.transformed(&icp.transform), &tgt) <= rmse_to(&moved, &tgt) + 1e-12);
    }

    #[test]
    fn ransac_deterministic_per_seed() {
        let cfg = RegistrationConfig {
            ransac_iterations: 300,
            ..Default::default()
        };
        let src = lattice_object();
        let tgt = src.transformed(&RigidTransform::about_z(0.4, [1.0, 2.0, 0.0]));
        let (fs, ft) = (features(&src, &cfg), features(&tgt, &cfg));
        let a = ransac_align(&src, &tgt, &fs, &ft, &cfg).unwrap();
        let b = ransac_align(&src, &tgt, &fs, &ft, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ransac_needs_three_points() {
        let cfg = RegistrationConfig::default();
        let small = PointCloud::new(vec![[0.0; 3], [1.0, 0.0, 0.0]]);
        let big = lattice_object();
        let (fs, fb) = (features(&small, &cfg), features(&big, &cfg));
        assert!(matches!(
            ransac_align(&small, &big, &fs, &fb, &cfg),
            Err(Error::InsufficientPoints { needed: 3, got: 2 })
        ));
    }

    #[test]
    fn icp_fixed_point_and_translation() {
        let cfg = RegistrationConfig::default();
        let src = lattice_object();
        let r = icp_refine(&src, &src, &RigidTransform::identity(), &cfg).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((r.transform.rotation[i][j] - e).abs() < 1e-6);
            }
            assert!(r.transform.translation[i].abs() < 1e-6);
        }

        let tgt = PointCloud::new(src.points.iter().map(|p| [p[0] + 0.3, p[1], p[2]]).collect());
        let one = RegistrationConfig {
            icp_schedule: vec![1.0],
            icp_max_iterations_per_threshold: 1,
            ..Default::default()
        };
        let r = icp_refine(&src, &tgt, &RigidTransform::identity(), &one).unwrap();
        assert!((r.transform.translation[0] - 0.3).abs() < 1e-6);
        assert!(r.transform.translation[1].abs() < 1e-6);
        assert!(r.transform.translation[2].abs() < 1e-6);
    }

    #[test]
    fn icp_no_overlap() {
        let cfg = RegistrationConfig::default();
        let src = lattice_object();
        let far = src.transformed(&RigidTransform::about_z(0.0, [100.0, 0.0, 0.0]));
        assert!(matches!(
            icp_refine(&src, &far, &RigidTransform::identity(), &cfg),
            Err(Error::NoOverlap { .. })
        ));
    }

    #[test]
    fn icp_history_non_increasing_per_threshold() {
        let cfg = RegistrationConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let src = lattice_object();
        for _ in 0..10 {
            let truth = RigidTransform::about_z(rng.gen_range(-0.4..0.4), [rng.gen_range(-1.5..1.5), 0.5, 0.0]);
            let tgt = src.transformed(&truth);
            let r = icp_refine(&src, &tgt, &RigidTransform::identity(), &cfg).unwrap();
            for w in r.history.windows(2) {
                if w[0].threshold == w[1].threshold {
                    assert!(w[1].rmse <= w[0].rmse);
                }
            }
        }
    }
}
