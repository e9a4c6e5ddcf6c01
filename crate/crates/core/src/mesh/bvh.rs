//! Bounding-volume hierarchy over mesh triangles for closest-point and ray queries.

use super::{TriMesh, Vec3};

const LEAF_SIZE: usize = 4;

#[derive(Debug, Clone)]
struct Node {
    lo: Vec3,
    hi: Vec3,
    /// Leaf: `start..start+count` into `order`. Inner: children at `start`, `start + 1`.
    start: u32,
    count: u32,
}

#[derive(Debug, Clone)]
pub(crate) struct Bvh {
    nodes: Vec<Node>,
    order: Vec<u32>,
}

/// Which part of a triangle the closest point landed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Feature {
    Face,
    /// Local edge (i, i+1 mod 3).
    Edge(u8),
    Vertex(u8),
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Closest {
    pub dist_sq: f64,
    pub triangle: u32,
    pub point: Vec3,
    pub feature: Feature,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct RayHit {
    pub t: f64,
    /// The hit grazed an edge/vertex or the origin lies on the triangle.
    pub ambiguous: bool,
}

impl Bvh {
    pub fn build(mesh: &TriMesh) -> Self {
        let n = mesh.triangles.len();
        let mut boxes = Vec::with_capacity(n);
        let mut centroids = Vec::with_capacity(n);
        for t in 0..n {
            let [a, b, c] = mesh.triangle(t);
            boxes.push((a.inf(&b).inf(&c), a.sup(&b).sup(&c)));
            centroids.push((a + b + c) / 3.0);
        }
        let mut bvh = Bvh {
            nodes: Vec::with_capacity(2 * n / LEAF_SIZE + 2),
            order: (0..n as u32).collect(),
        };
        bvh.nodes.push(Node {
            lo: Vec3::zeros(),
            hi: Vec3::zeros(),
            start: 0,
            count: 0,
        });
        bvh.split(0, 0, n, &boxes, &centroids);
        bvh
    }

    fn split(&mut self, node: usize, start: usize, end: usize, boxes: &[(Vec3, Vec3)], centroids: &[Vec3]) {
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        let mut clo = Vec3::repeat(f64::INFINITY);
        let mut chi = Vec3::repeat(f64::NEG_INFINITY);
        for &t in &self.order[start..end] {
            let (a, b) = boxes[t as usize];
            lo = lo.inf(&a);
            hi = hi.sup(&b);
            clo = clo.inf(&centroids[t as usize]);
            chi = chi.sup(&centroids[t as usize]);
        }
        self.nodes[node].lo = lo;
        self.nodes[node].hi = hi;
        if end - start <= LEAF_SIZE {
            self.nodes[node].start = start as u32;
            self.nodes[node].count = (end - start) as u32;
            return;
        }
        let axis = (chi - clo).imax();
        let mid = (start + end) / 2;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            centroids[a as usize][axis].total_cmp(&centroids[b as usize][axis])
        });
        let left = self.nodes.len();
        for _ in 0..2 {
            self.nodes.push(Node {
                lo: Vec3::zeros(),
                hi: Vec3::zeros(),
                start: 0,
                count: 0,
            });
        }
        self.nodes[node].start = left as u32;
        self.nodes[node].count = 0;
        self.split(left, start, mid, boxes, centroids);
        self.split(left + 1, mid, end, boxes, centroids);
    }

    pub fn closest(&self, mesh: &TriMesh, p: &Vec3) -> Closest {
        let mut best = Closest {
            dist_sq: f64::INFINITY,
            triangle: 0,
            point: *p,
            feature: Feature::Face,
        };
        let mut stack: Vec<(u32, f64)> = Vec::with_capacity(64);
        stack.push((0, box_dist_sq(&self.nodes[0], p)));
        while let Some((idx, d)) = stack.pop() {
            if d >= best.dist_sq {
                continue;
            }
            let node = &self.nodes[idx as usize];
            if node.count > 0 {
                for &t in &self.order[node.start as usize..(node.start + node.count) as usize] {
                    let [a, b, c] = mesh.triangle(t as usize);
                    let (q, feature) = closest_on_triangle(p, &a, &b, &c);
                    let dsq = (p - q).norm_squared();
                    // ties resolve to the lower triangle index for determinism
                    if dsq < best.dist_sq || (dsq == best.dist_sq && t < best.triangle) {
                        best = Closest {
                            dist_sq: dsq,
                            triangle: t,
                            point: q,
                            feature,
                        };
                    }
                }
            } else {
                let l = node.start;
                let dl = box_dist_sq(&self.nodes[l as usize], p);
                let dr = box_dist_sq(&self.nodes[l as usize + 1], p);
                // push farther first so the nearer child is explored first
                if dl < dr {
                    stack.push((l + 1, dr));
                    stack.push((l, dl));
                } else {
                    stack.push((l, dl));
                    stack.push((l + 1, dr));
                }
            }
        }
        best
    }

    /// Collects every crossing of the ray `origin + t * dir`, `t > 0`.
    pub fn ray_hits(&self, mesh: &TriMesh, origin: &Vec3, dir: &Vec3, hits: &mut Vec<RayHit>) {
        hits.clear();
        let mut stack = vec![0u32];
        while let Some(idx) = stack.pop() {
            let node = &self.nodes[idx as usize];
            if !ray_box(node, origin, dir) {
                continue;
            }
            if node.count > 0 {
                for &t in &self.order[node.start as usize..(node.start + node.count) as usize] {
                    let [a, b, c] = mesh.triangle(t as usize);
                    if let Some(h) = ray_triangle(origin, dir, &a, &b, &c) {
                        hits.push(h);
                    }
                }
            } else {
                stack.push(node.start);
                stack.push(node.start + 1);
            }
        }
    }
}

fn box_dist_sq(node: &Node, p: &Vec3) -> f64 {
    let mut d = 0.0;
    for i in 0..3 {
        let v = if p[i] < node.lo[i] {
            node.lo[i] - p[i]
        } else if p[i] > node.hi[i] {
            p[i] - node.hi[i]
        } else {
            0.0
        };
        d += v * v;
    }
    d
}

fn ray_box(node: &Node, o: &Vec3, d: &Vec3) -> bool {
    let mut tmin = 0.0f64;
    let mut tmax = f64::INFINITY;
    for i in 0..3 {
        if d[i] == 0.0 {
            if o[i] < node.lo[i] || o[i] > node.hi[i] {
                return false;
            }
            continue;
        }
        let inv = 1.0 / d[i];
        let (mut t0, mut t1) = ((node.lo[i] - o[i]) * inv, (node.hi[i] - o[i]) * inv);
        if t0 > t1 {
            std::mem::swap(&mut t0, &mut t1);
        }
        tmin = tmin.max(t0);
        tmax = tmax.min(t1);
        if tmin > tmax * (1.0 + 1e-12) + 1e-12 {
            return false;
        }
    }
    true
}

const GRAZE_EPS: f64 = 1e-9;

fn ray_triangle(o: &Vec3, d: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> Option<RayHit> {
    let e1 = b - a;
    let e2 = c - a;
    let pvec = d.cross(&e2);
    let det = e1.dot(&pvec);
    if det.abs() < 1e-15 * e1.norm() * e2.norm() {
        return None;
    }
    let inv = 1.0 / det;
    let s = o - a;
    let u = s.dot(&pvec) * inv;
    if !(-GRAZE_EPS..=1.0 + GRAZE_EPS).contains(&u) {
        return None;
    }
    let q = s.cross(&e1);
    let v = d.dot(&q) * inv;
    if v < -GRAZE_EPS || u + v > 1.0 + GRAZE_EPS {
        return None;
    }
    let t = e2.dot(&q) * inv;
    if t < -GRAZE_EPS {
        return None;
    }
    let w = 1.0 - u - v;
    let ambiguous = u.abs() < GRAZE_EPS || v.abs() < GRAZE_EPS || w.abs() < GRAZE_EPS || t.abs() <= GRAZE_EPS;
    if t <= 0.0 && !ambiguous {
        return None;
    }
    if !ambiguous && (u < 0.0 || v < 0.0 || w < 0.0) {
        return None;
    }
    Some(RayHit { t, ambiguous })
}

/// Closest point on triangle `abc` to `p` by Voronoi-region classification.
pub(crate) fn closest_on_triangle(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> (Vec3, Feature) {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return (*a, Feature::Vertex(0));
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return (*b, Feature::Vertex(1));
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return (a + ab * v, Feature::Edge(0));
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return (*c, Feature::Vertex(2));
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return (a + ac * w, Feature::Edge(2));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (b + (c - b) * w, Feature::Edge(1));
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    (a + ab * v + ac * w, Feature::Face)
}
