use nalgebra::Vector3;

const LEAF: usize = 8;

/// Static 3-d tree for exact nearest-neighbor queries. Points are reordered
/// so each range splits at its median along `depth % 3`.
#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<Vector3<f64>>,
    index: Vec<u32>,
}

impl KdTree {
    pub fn new(points: &[Vector3<f64>]) -> Self {
        let mut index: Vec<u32> = (0..points.len() as u32).collect();
        build(points, &mut index, 0);
        let points = index.iter().map(|&i| points[i as usize]).collect();
        Self { points, index }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Original index and squared distance of the closest point; ties go to
    /// the lower original index.
    pub fn nearest(&self, q: &Vector3<f64>) -> Option<(usize, f64)> {
        if self.points.is_empty() {
            return None;
        }
        let mut best = (f64::INFINITY, u32::MAX);
        self.search(0, self.points.len(), 0, q, &mut best);
        Some((best.1 as usize, best.0))
    }

    fn consider(&self, i: usize, q: &Vector3<f64>, best: &mut (f64, u32)) {
        let d = (self.points[i] - q).norm_squared();
        let id = self.index[i];
        if d < best.0 || (d == best.0 && id < best.1) {
            *best = (d, id);
        }
    }

    fn search(&self, lo: usize, hi: usize, depth: usize, q: &Vector3<f64>, best: &mut (f64, u32)) {
        if hi - lo <= LEAF {
            for i in lo..hi {
                self.consider(i, q, best);
            }
            return;
        }
        let mid = (lo + hi) / 2;
        let axis = depth % 3;
        self.consider(mid, q, best);
        let d = q[axis] - self.points[mid][axis];
        let (near, far) = if d < 0.0 { ((lo, mid), (mid + 1, hi)) } else { ((mid + 1, hi), (lo, mid)) };
        self.search(near.0, near.1, depth + 1, q, best);
        if d * d <= best.0 {
            self.search(far.0, far.1, depth + 1, q, best);
        }
    }
}

fn build(points: &[Vector3<f64>], index: &mut [u32], depth: usize) {
    if index.len() <= LEAF {
        return;
    }
    let mid = index.len() / 2;
    let axis = depth % 3;
    index.select_nth_unstable_by(mid, |&a, &b| {
        points[a as usize][axis]
            .total_cmp(&points[b as usize][axis])
            .then(a.cmp(&b))
    });
    let (left, rest) = index.split_at_mut(mid);
    build(points, left, depth + 1);
    build(points, &mut rest[1..], depth + 1);
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts: Vec<Vector3<f64>> = (0..2000)
            .map(|_| Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let tree = KdTree::new(&pts);
        for _ in 0..300 {
            let q = Vector3::new(rng.gen_range(-1.2..1.2), rng.gen_range(-1.2..1.2), rng.gen_range(-1.2..1.2));
            let (i, d) = tree.nearest(&q).unwrap();
            let (bi, bd) = pts
                .iter()
                .enumerate()
                .map(|(i, p)| (i, (p - q).norm_squared()))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap();
            assert_eq!(d, bd);
            assert_eq!(i, bi);
        }
        assert!(KdTree::new(&[]).nearest(&Vector3::zeros()).is_none());
    }

    #[test]
    fn duplicate_points_pick_lowest_index() {
        let pts = vec![Vector3::new(0.5, 0.0, 0.0); 20];
        assert_eq!(KdTree::new(&pts).nearest(&Vector3::zeros()), Some((0, 0.25)));
    }
}
