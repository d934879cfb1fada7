//! Static 2D k-d tree for nearest-neighbour queries.

use nalgebra::Point2;

pub struct KdTree2 {
    points: Vec<Point2<f64>>,
}

impl KdTree2 {
    /// Builds the tree in place (median splits, alternating axes).
    pub fn new(mut points: Vec<Point2<f64>>) -> Self {
        fn build(pts: &mut [Point2<f64>], depth: usize) {
            if pts.len() <= 1 {
                return;
            }
            let axis = depth % 2;
            let mid = pts.len() / 2;
            pts.select_nth_unstable_by(mid, |a, b| a[axis].total_cmp(&b[axis]));
            let (left, right) = pts.split_at_mut(mid);
            build(left, depth + 1);
            build(&mut right[1..], depth + 1);
        }
        build(&mut points, 0);
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Squared distance to the nearest stored point.
    pub fn nearest_sq(&self, q: &Point2<f64>) -> f64 {
        fn search(pts: &[Point2<f64>], depth: usize, q: &Point2<f64>, best: &mut f64) {
            if pts.is_empty() {
                return;
            }
            let mid = pts.len() / 2;
            let p = &pts[mid];
            let d = (p - q).norm_squared();
            if d < *best {
                *best = d;
            }
            let axis = depth % 2;
            let diff = q[axis] - p[axis];
            let (near, far) = if diff < 0.0 { (&pts[..mid], &pts[mid + 1..]) } else { (&pts[mid + 1..], &pts[..mid]) };
            search(near, depth + 1, q, best);
            if diff * diff < *best {
                search(far, depth + 1, q, best);
            }
        }
        let mut best = f64::INFINITY;
        search(&self.points, 0, q, &mut best);
        best
    }

    /// Nearest stored point.
    pub fn nearest(&self, q: &Point2<f64>) -> Option<Point2<f64>> {
        fn search(pts: &[Point2<f64>], depth: usize, q: &Point2<f64>, best: &mut (f64, usize), offset: usize) {
            if pts.is_empty() {
                return;
            }
            let mid = pts.len() / 2;
            let d = (pts[mid] - q).norm_squared();
            if d < best.0 {
                *best = (d, offset + mid);
            }
            let axis = depth % 2;
            let diff = q[axis] - pts[mid][axis];
            if diff < 0.0 {
                search(&pts[..mid], depth + 1, q, best, offset);
                if diff * diff < best.0 {
                    search(&pts[mid + 1..], depth + 1, q, best, offset + mid + 1);
                }
            } else {
                search(&pts[mid + 1..], depth + 1, q, best, offset + mid + 1);
                if diff * diff < best.0 {
                    search(&pts[..mid], depth + 1, q, best, offset);
                }
            }
        }
        let mut best = (f64::INFINITY, usize::MAX);
        search(&self.points, 0, q, &mut best, 0);
        self.points.get(best.1).copied()
    }
}
