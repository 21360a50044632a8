//! Bounding volume hierarchy over scene triangles.

use glam::DVec3;

use super::Triangle;

const LEAF_SIZE: usize = 4;
/// Boxes are padded so that the slab test stays conservative for flat geometry.
const BOX_PAD: f64 = 1e-7;

#[derive(Debug, Clone, Copy)]
pub struct Aabb {
    pub min: DVec3,
    pub max: DVec3,
}

impl Aabb {
    fn empty() -> Self {
        Self {
            min: DVec3::splat(f64::INFINITY),
            max: DVec3::splat(f64::NEG_INFINITY),
        }
    }

    fn grow(&mut self, p: DVec3) {
        self.min = self.min.min(p);
        self.max = self.max.max(p);
    }

    fn padded(self) -> Self {
        Self {
            min: self.min - DVec3::splat(BOX_PAD),
            max: self.max + DVec3::splat(BOX_PAD),
        }
    }

    /// Entry distance of the ray into the box if it overlaps `[0, t_max]`.
    #[inline]
    fn hit(&self, origin: DVec3, inv_dir: DVec3, t_max: f64) -> Option<f64> {
        let t1 = (self.min - origin) * inv_dir;
        let t2 = (self.max - origin) * inv_dir;
        let lo = t1.min(t2);
        let hi = t1.max(t2);
        let enter = lo.x.max(lo.y).max(lo.z).max(0.0);
        let exit = hi.x.min(hi.y).min(hi.z).min(t_max);
        (enter <= exit).then_some(enter)
    }
}

#[derive(Debug, Clone)]
struct Node {
    bounds: Aabb,
    /// First triangle slot for leaves, index of the left child otherwise.
    start: u32,
    /// Triangle count for leaves; zero for interior nodes.
    count: u32,
}

#[derive(Debug, Clone)]
pub struct Bvh {
    nodes: Vec<Node>,
    /// Triangle indices, permuted so every leaf owns a contiguous range.
    order: Vec<u32>,
}

impl Bvh {
    pub fn build(triangles: &[Triangle]) -> Self {
        let mut order: Vec<u32> = (0..triangles.len() as u32).collect();
        let centroids: Vec<DVec3> = triangles
            .iter()
            .map(|t| (t.positions[0] + t.positions[1] + t.positions[2]) / 3.0)
            .collect();
        let mut nodes = Vec::new();
        if !triangles.is_empty() {
            nodes.push(Node {
                bounds: Aabb::empty(),
                start: 0,
                count: 0,
            });
            build_node(&mut nodes, 0, &mut order, 0, triangles, &centroids);
        }
        Self { nodes, order }
    }

    pub fn triangle_order(&self) -> &[u32] {
        &self.order
    }

    /// Visits the triangles of every leaf the ray may touch, nearest leaf
    /// first. The visitor returns a new cutoff distance when it accepted a
    /// hit; a negative cutoff ends the traversal.
    #[inline]
    pub fn traverse(
        &self,
        origin: DVec3,
        direction: DVec3,
        mut t_max: f64,
        mut visit: impl FnMut(u32) -> Option<f64>,
    ) {
        if self.nodes.is_empty() {
            return;
        }
        let inv_dir = direction.recip();
        if self.nodes[0].bounds.hit(origin, inv_dir, t_max).is_none() {
            return;
        }
        // Median splits keep the depth near log2(n), far below the stack size.
        let mut stack = [0u32; 64];
        let mut len = 1;
        let push = |stack: &mut [u32; 64], len: &mut usize, v: u32| {
            stack[*len] = v;
            *len += 1;
        };
        while len > 0 {
            len -= 1;
            let index = stack[len];
            let node = &self.nodes[index as usize];
            if node.count > 0 {
                let range = node.start as usize..(node.start + node.count) as usize;
                for &tri in &self.order[range] {
                    match visit(tri) {
                        Some(t) if t < 0.0 => return,
                        Some(t) => t_max = t_max.min(t),
                        None => {}
                    }
                }
                continue;
            }
            let left = node.start;
            let right = left + 1;
            let hl = self.nodes[left as usize].bounds.hit(origin, inv_dir, t_max);
            let hr = self.nodes[right as usize].bounds.hit(origin, inv_dir, t_max);
            match (hl, hr) {
                (Some(a), Some(b)) => {
                    let (near, far) = if a <= b { (left, right) } else { (right, left) };
                    push(&mut stack, &mut len, far);
                    push(&mut stack, &mut len, near);
                }
                (Some(_), None) => push(&mut stack, &mut len, left),
                (None, Some(_)) => push(&mut stack, &mut len, right),
                (None, None) => {}
            }
        }
    }
}

fn build_node(
    nodes: &mut Vec<Node>,
    index: usize,
    order: &mut [u32],
    offset: usize,
    triangles: &[Triangle],
    centroids: &[DVec3],
) {
    let mut bounds = Aabb::empty();
    let mut cbounds = Aabb::empty();
    for &t in order.iter() {
        for p in triangles[t as usize].positions {
            bounds.grow(p);
        }
        cbounds.grow(centroids[t as usize]);
    }
    nodes[index].bounds = bounds.padded();

    let extent = cbounds.max - cbounds.min;
    if order.len() <= LEAF_SIZE || extent.max_element() <= 0.0 {
        nodes[index].start = offset as u32;
        nodes[index].count = order.len() as u32;
        return;
    }
    let axis = if extent.x >= extent.y && extent.x >= extent.z {
        0
    } else if extent.y >= extent.z {
        1
    } else {
        2
    };
    order.sort_by(|&a, &b| {
        centroids[a as usize][axis]
            .total_cmp(&centroids[b as usize][axis])
            .then(a.cmp(&b))
    });
    let mid = order.len() / 2;
    let left = nodes.len();
    for _ in 0..2 {
        nodes.push(Node {
            bounds: Aabb::empty(),
            start: 0,
            count: 0,
        });
    }
    nodes[index].start = left as u32;
    nodes[index].count = 0;
    let (lo, hi) = order.split_at_mut(mid);
    build_node(nodes, left, lo, offset, triangles, centroids);
    build_node(nodes, left + 1, hi, offset + mid, triangles, centroids);
}
