//! Static 3-d tree over a borrowed point slice.
//!
//! Median splits on the widest axis, built once per query batch. Ties on
//! distance resolve to the lowest point index so results never depend on the
//! tree layout.

const LEAF_SIZE: usize = 8;

pub struct KdTree<'a> {
    points: &'a [[f64; 3]],
    order: Vec<u32>,
    // Split axis for the node whose median sits at `order[mid]`; unused for leaves.
    axes: Vec<u8>,
}

#[inline]
pub(crate) fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

impl<'a> KdTree<'a> {
    pub fn build(points: &'a [[f64; 3]]) -> Self {
        let mut tree = Self {
            points,
            order: (0..points.len() as u32).collect(),
            axes: vec![0; points.len()],
        };
        tree.build_range(0, points.len());
        tree
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn build_range(&mut self, lo: usize, hi: usize) {
        if hi - lo <= LEAF_SIZE {
            return;
        }
        let mut min = [f64::INFINITY; 3];
        let mut max = [f64::NEG_INFINITY; 3];
        for &i in &self.order[lo..hi] {
            let p = &self.points[i as usize];
            for k in 0..3 {
                min[k] = min[k].min(p[k]);
                max[k] = max[k].max(p[k]);
            }
        }
        let axis = (0..3)
            .max_by(|&a, &b| (max[a] - min[a]).total_cmp(&(max[b] - min[b])))
            .unwrap_or(0);
        let mid = (lo + hi) / 2;
        let points = self.points;
        self.order[lo..hi].select_nth_unstable_by(mid - lo, |&a, &b| {
            points[a as usize][axis].total_cmp(&points[b as usize][axis])
        });
        self.axes[mid] = axis as u8;
        self.build_range(lo, mid);
        self.build_range(mid + 1, hi);
    }

    /// Nearest point index and its squared distance.
    pub fn nearest(&self, query: &[f64; 3]) -> Option<(usize, f64)> {
        if self.points.is_empty() {
            return None;
        }
        let mut best = (usize::MAX, f64::INFINITY);
        self.nearest_range(0, self.points.len(), query, &mut best);
        Some(best)
    }

    fn consider(&self, i: usize, query: &[f64; 3], best: &mut (usize, f64)) {
        let d = dist2(&self.points[i], query);
        if d < best.1 || (d == best.1 && i < best.0) {
            *best = (i, d);
        }
    }

    fn nearest_range(&self, lo: usize, hi: usize, query: &[f64; 3], best: &mut (usize, f64)) {
        if hi - lo <= LEAF_SIZE {
            for &i in &self.order[lo..hi] {
                self.consider(i as usize, query, best);
            }
            return;
        }
        let mid = (lo + hi) / 2;
        let axis = self.axes[mid] as usize;
        let pivot = self.order[mid] as usize;
        let diff = query[axis] - self.points[pivot][axis];
        self.consider(pivot, query, best);
        let (near, far) = if diff <= 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.nearest_range(near.0, near.1, query, best);
        // `<=` keeps equal-distance candidates on the far side reachable for the index tie-break.
        if diff * diff <= best.1 {
            self.nearest_range(far.0, far.1, query, best);
        }
    }

    /// Indices of all points within squared radius `r2` (inclusive), ascending.
    pub fn within(&self, query: &[f64; 3], r2: f64) -> Vec<usize> {
        let mut out = Vec::new();
        self.within_range(0, self.points.len(), query, r2, &mut out);
        out.sort_unstable();
        out
    }

    fn within_range(&self, lo: usize, hi: usize, query: &[f64; 3], r2: f64, out: &mut Vec<usize>) {
        if hi - lo <= LEAF_SIZE {
            for &i in &self.order[lo..hi] {
                if dist2(&self.points[i as usize], query) <= r2 {
                    out.push(i as usize);
                }
            }
            return;
        }
        let mid = (lo + hi) / 2;
        let axis = self.axes[mid] as usize;
        let pivot = self.order[mid] as usize;
        if dist2(&self.points[pivot], query) <= r2 {
            out.push(pivot);
        }
        let diff = query[axis] - self.points[pivot][axis];
        if diff <= 0.0 || diff * diff <= r2 {
            self.within_range(lo, mid, query, r2, out);
        }
        if diff >= 0.0 || diff * diff <= r2 {
            self.within_range(mid + 1, hi, query, r2, out);
        }
    }
}
