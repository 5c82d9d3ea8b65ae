//! Static 3D kd-tree for exact nearest-neighbor queries over point clouds.

use crate::geom::Vec3;

const LEAF: usize = 8;

#[derive(Debug, Clone)]
enum KdNode {
    Leaf { start: u32, end: u32 },
    Split { axis: u8, value: f64, left: u32, right: u32 },
}

/// Exact nearest-neighbor index. Ties go to the lowest point index, matching a
/// linear scan with strict `<`.
#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<Vec3>,
    order: Vec<u32>,
    nodes: Vec<KdNode>,
}

impl KdTree {
    pub fn new(points: &[Vec3]) -> Self {
        let mut tree = KdTree {
            points: points.to_vec(),
            order: (0..points.len() as u32).collect(),
            nodes: Vec::new(),
        };
        if !points.is_empty() {
            let n = points.len();
            tree.build(0, n);
        }
        tree
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    fn build(&mut self, start: usize, end: usize) -> u32 {
        let idx = self.nodes.len() as u32;
        if end - start <= LEAF {
            self.nodes.push(KdNode::Leaf {
                start: start as u32,
                end: end as u32,
            });
            return idx;
        }
        let (mut lo, mut hi) = (Vec3::repeat(f64::INFINITY), Vec3::repeat(f64::NEG_INFINITY));
        for &i in &self.order[start..end] {
            lo = lo.inf(&self.points[i as usize]);
            hi = hi.sup(&self.points[i as usize]);
        }
        let axis = (hi - lo).imax();
        let mid = (start + end) / 2;
        let pts = &self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            pts[a as usize][axis]
                .total_cmp(&pts[b as usize][axis])
                .then(a.cmp(&b))
        });
        let value = self.points[self.order[mid] as usize][axis];
        self.nodes.push(KdNode::Split {
            axis: axis as u8,
            value,
            left: 0,
            right: 0,
        });
        let left = self.build(start, mid);
        let right = self.build(mid, end);
        if let KdNode::Split { left: l, right: r, .. } = &mut self.nodes[idx as usize] {
            *l = left;
            *r = right;
        }
        idx
    }

    /// Index and squared distance of the nearest point. Panics on an empty tree.
    pub fn nearest(&self, q: &Vec3) -> (usize, f64) {
        assert!(!self.points.is_empty(), "nearest() on empty kd-tree");
        let mut best = (usize::MAX, f64::INFINITY);
        self.search(0, q, &mut best);
        best
    }

    fn search(&self, node: u32, q: &Vec3, best: &mut (usize, f64)) {
        match &self.nodes[node as usize] {
            KdNode::Leaf { start, end } => {
                for &i in &self.order[*start as usize..*end as usize] {
                    let d2 = (self.points[i as usize] - q).norm_squared();
                    let i = i as usize;
                    if d2 < best.1 || (d2 == best.1 && i < best.0) {
                        *best = (i, d2);
                    }
                }
            }
            KdNode::Split { axis, value, left, right } => {
                let diff = q[*axis as usize] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(*near, q, best);
                if diff * diff <= best.1 {
                    self.search(*far, q, best);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn matches_linear_scan() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let pts: Vec<Vec3> = (0..700)
            .map(|_| Vec3::new(rng.random(), rng.random(), rng.random()))
            .collect();
        let tree = KdTree::new(&pts);
        for _ in 0..300 {
            let q = Vec3::new(rng.random(), rng.random(), rng.random()) * 1.2;
            let brute = pts
                .iter()
                .enumerate()
                .fold((usize::MAX, f64::INFINITY), |b, (i, p)| {
                    let d = (p - q).norm_squared();
                    if d < b.1 { (i, d) } else { b }
                });
            assert_eq!(tree.nearest(&q), brute);
        }
    }

    #[test]
    fn duplicate_points_pick_lowest_index() {
        let pts = vec![Vec3::x(); 20];
        let tree = KdTree::new(&pts);
        assert_eq!(tree.nearest(&Vec3::zeros()).0, 0);
    }
}
