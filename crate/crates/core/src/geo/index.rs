//! Static R-tree bulk-loaded with Sort-Tile-Recursive packing.

use super::BBox;

const NODE_CAPACITY: usize = 16;

#[derive(Debug, Clone)]
struct Node {
    bbox: BBox,
    start: usize,
    end: usize,
    leaf: bool,
}

#[derive(Debug, Clone)]
pub struct SpatialIndex {
    items: Vec<(usize, BBox)>,
    nodes: Vec<Node>,
    root: Option<usize>,
}

fn str_pack<T>(entries: &mut [T], bbox: impl Fn(&T) -> BBox) {
    let n = entries.len();
    let leaves = n.div_ceil(NODE_CAPACITY);
    let slabs = (leaves as f64).sqrt().ceil() as usize;
    let per_slab = slabs.max(1) * NODE_CAPACITY;
    entries.sort_by(|a, b| bbox(a).center().x.total_cmp(&bbox(b).center().x));
    for slab in entries.chunks_mut(per_slab) {
        slab.sort_by(|a, b| bbox(a).center().y.total_cmp(&bbox(b).center().y));
    }
}

impl SpatialIndex {
    pub fn build(mut items: Vec<(usize, BBox)>) -> Self {
        items.retain(|(_, b)| !b.is_empty());
        if items.is_empty() {
            return SpatialIndex { items, nodes: Vec::new(), root: None };
        }
        str_pack(&mut items, |e| e.1);
        let mut nodes: Vec<Node> = items
            .chunks(NODE_CAPACITY)
            .enumerate()
            .map(|(k, chunk)| Node {
                bbox: chunk.iter().fold(BBox::empty(), |b, e| b.union(&e.1)),
                start: k * NODE_CAPACITY,
                end: k * NODE_CAPACITY + chunk.len(),
                leaf: true,
            })
            .collect();
        let mut level = 0..nodes.len();
        while level.len() > 1 {
            let mut current: Vec<Node> = nodes[level.clone()].to_vec();
            str_pack(&mut current, |n| n.bbox);
            // children must be contiguous, so the packed level replaces the old one
            nodes.splice(level.clone(), current);
            let base = nodes.len();
            let parents: Vec<Node> = (level.start..level.end)
                .step_by(NODE_CAPACITY)
                .map(|s| {
                    let e = (s + NODE_CAPACITY).min(level.end);
                    Node {
                        bbox: nodes[s..e].iter().fold(BBox::empty(), |b, n| b.union(&n.bbox)),
                        start: s,
                        end: e,
                        leaf: false,
                    }
                })
                .collect();
            nodes.extend(parents);
            level = base..nodes.len();
        }
        let root = Some(level.start);
        SpatialIndex { items, nodes, root }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Ids whose boxes intersect `bbox`, sorted ascending.
    pub fn query(&self, bbox: &BBox) -> Vec<usize> {
        let mut out = Vec::new();
        let Some(root) = self.root else { return out };
        let mut stack = vec![root];
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n];
            if !node.bbox.intersects(bbox) {
                continue;
            }
            if node.leaf {
                out.extend(
                    self.items[node.start..node.end]
                        .iter()
                        .filter(|(_, b)| b.intersects(bbox))
                        .map(|(id, _)| *id),
                );
            } else {
                stack.extend(node.start..node.end);
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::Coord;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_segments(rng: &mut ChaCha8Rng, n: usize) -> Vec<(usize, BBox)> {
        (0..n)
            .map(|i| {
                let a = Coord::new(rng.random_range(0.0..1000.0), rng.random_range(0.0..1000.0));
                let b = Coord::new(a.x + rng.random_range(-50.0..50.0), a.y + rng.random_range(-50.0..50.0));
                (i, BBox::of_coords(&[a, b]))
            })
            .collect()
    }

    #[test]
    fn empty_index() {
        let idx = SpatialIndex::build(vec![]);
        assert!(idx.query(&BBox::new(-1e9, -1e9, 1e9, 1e9)).is_empty());
    }

    #[test]
    fn point_query_on_vertex() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let items = random_segments(&mut rng, 100);
        let idx = SpatialIndex::build(items.clone());
        for (id, b) in &items {
            let p = BBox::new(b.min_x, b.min_y, b.min_x, b.min_y);
            assert!(idx.query(&p).contains(id));
        }
    }

    #[test]
    fn superset_of_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..1000 {
            let n = if trial % 10 == 0 { 1000 } else { 100 };
            let items = random_segments(&mut rng, n);
            let idx = SpatialIndex::build(items.clone());
            assert_eq!(idx.len(), n);
            let x = rng.random_range(-100.0..1100.0);
            let y = rng.random_range(-100.0..1100.0);
            let q = BBox::new(x, y, x + rng.random_range(0.0..300.0), y + rng.random_range(0.0..300.0));
            let got = idx.query(&q);
            let want: Vec<usize> = items.iter().filter(|(_, b)| b.intersects(&q)).map(|(i, _)| *i).collect();
            for w in &want {
                assert!(got.contains(w), "trial {trial}: missing {w}");
            }
        }
    }
}
