//! Exact nearest-neighbor search over a fixed cloud.
//!
//! The tree is implicit: points are permuted in place so that every node
//! covering the range `[lo, hi)` keeps its splitting point at
//! `mid = lo + (hi - lo) / 2`, with `[lo, mid)` on the low side and
//! `(mid, hi)` on the high side. Split axes cycle x, y, z with depth and the
//! splitting point is the median along that axis. Ranges of at most
//! `LEAF_SIZE` points are scanned linearly.

use crate::error::Result;
use crate::geometry::{Point3, PointCloud};

const LEAF_SIZE: usize = 8;
const NO_SKIP: u32 = u32::MAX;

/// Result of a nearest-neighbor query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    /// Index of the point in the cloud the index was built from.
    pub index: usize,
    pub distance: f64,
    pub point: Point3,
}

#[derive(Debug, Clone)]
pub struct SpatialIndex {
    coords: Vec<[f64; 3]>,
    ids: Vec<u32>,
}

#[derive(Clone, Copy)]
struct Best {
    dist2: f64,
    id: u32,
    slot: usize,
}

impl Best {
    #[inline]
    fn offer(&mut self, dist2: f64, id: u32, slot: usize) {
        // Equidistant candidates resolve to the smallest original index.
        if dist2 < self.dist2 || (dist2 == self.dist2 && id < self.id) {
            *self = Best { dist2, id, slot };
        }
    }
}

#[inline]
fn squared_distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

impl SpatialIndex {
    pub fn build(cloud: &PointCloud) -> Result<Self> {
        cloud.require_non_empty()?;
        assert!(
            cloud.len() < NO_SKIP as usize,
            "cloud too large for a spatial index"
        );
        let mut entries: Vec<([f64; 3], u32)> = cloud
            .points
            .iter()
            .enumerate()
            .map(|(i, p)| ([p.x, p.y, p.z], i as u32))
            .collect();
        split(&mut entries, 0);
        let (coords, ids) = entries.into_iter().unzip();
        Ok(Self { coords, ids })
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn nearest(&self, query: &Point3) -> Neighbor {
        self.nearest_skipping(query, NO_SKIP)
    }

    /// Nearest neighbor ignoring the point with original index `skip`.
    ///
    /// Returns `None` only when the index holds that single point.
    pub fn nearest_excluding(&self, query: &Point3, skip: usize) -> Option<Neighbor> {
        if self.len() == 1 && self.ids[0] as usize == skip {
            return None;
        }
        Some(self.nearest_skipping(query, skip as u32))
    }

    /// Squared distance to the nearest point, without recovering which one.
    #[inline]
    pub fn nearest_distance_squared(&self, query: &Point3) -> f64 {
        let q = [query.x, query.y, query.z];
        let mut best = Best {
            dist2: f64::INFINITY,
            id: u32::MAX,
            slot: 0,
        };
        self.search(&q, 0, self.coords.len(), 0, NO_SKIP, &mut best);
        best.dist2
    }

    fn nearest_skipping(&self, query: &Point3, skip: u32) -> Neighbor {
        let q = [query.x, query.y, query.z];
        let mut best = Best {
            dist2: f64::INFINITY,
            id: u32::MAX,
            slot: 0,
        };
        self.search(&q, 0, self.coords.len(), 0, skip, &mut best);
        let c = self.coords[best.slot];
        Neighbor {
            index: best.id as usize,
            distance: best.dist2.sqrt(),
            point: Point3::new(c[0], c[1], c[2]),
        }
    }

    fn search(&self, q: &[f64; 3], lo: usize, hi: usize, depth: usize, skip: u32, best: &mut Best) {
        if hi - lo <= LEAF_SIZE {
            for slot in lo..hi {
                let id = self.ids[slot];
                if id != skip {
                    best.offer(squared_distance(q, &self.coords[slot]), id, slot);
                }
            }
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let axis = depth % 3;
        let pivot = &self.coords[mid];
        if self.ids[mid] != skip {
            best.offer(squared_distance(q, pivot), self.ids[mid], mid);
        }
        let diff = q[axis] - pivot[axis];
        let (near, far) = if diff < 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.search(q, near.0, near.1, depth + 1, skip, best);
        // `<=` keeps equidistant points on the far side reachable for the tie-break.
        if diff * diff <= best.dist2 {
            self.search(q, far.0, far.1, depth + 1, skip, best);
        }
    }
}

fn split(entries: &mut [([f64; 3], u32)], depth: usize) {
    if entries.len() <= LEAF_SIZE {
        return;
    }
    let axis = depth % 3;
    let mid = entries.len() / 2;
    entries.select_nth_unstable_by(mid, |a, b| {
        a.0[axis].total_cmp(&b.0[axis]).then(a.1.cmp(&b.1))
    });
    let (low, rest) = entries.split_at_mut(mid);
    split(low, depth + 1);
    split(&mut rest[1..], depth + 1);
}
