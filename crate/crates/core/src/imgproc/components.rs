//! Two-pass connected-component labeling with union-find.

use serde::{Deserialize, Serialize};

use crate::types::{BinaryImage, BoundingBox, Raster};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Connectivity {
    #[serde(rename = "4")]
    Four,
    #[default]
    #[serde(rename = "8")]
    Eight,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Component {
    /// 1-based label; the order matches the output order.
    pub label: u32,
    pub area: u64,
    pub bbox: BoundingBox,
}

struct DisjointSet {
    parent: Vec<u32>,
}

impl DisjointSet {
    fn new() -> Self {
        // label 0 is background
        Self { parent: vec![0] }
    }

    fn make(&mut self) -> u32 {
        let id = self.parent.len() as u32;
        self.parent.push(id);
        id
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let grand = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = grand;
            x = grand;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) -> u32 {
        let (ra, rb) = (self.find(a), self.find(b));
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        self.parent[hi as usize] = lo;
        lo
    }
}

/// Labels the foreground and returns the per-pixel label map (0 = background)
/// with the components sorted by `(ymin, xmin)`.
pub fn label_components(a: &BinaryImage, connectivity: Connectivity) -> (Vec<u32>, Vec<Component>) {
    let (w, h) = (a.width(), a.height());
    let px = a.data();
    let mut labels = vec![0u32; w * h];
    let mut sets = DisjointSet::new();

    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if px[i] == 0 {
                continue;
            }
            let mut current = 0u32;
            let mut visit = |l: u32, sets: &mut DisjointSet| {
                if l != 0 {
                    current = if current == 0 { l } else { sets.union(current, l) };
                }
            };
            if x > 0 {
                visit(labels[i - 1], &mut sets);
            }
            if y > 0 {
                visit(labels[i - w], &mut sets);
                if connectivity == Connectivity::Eight {
                    if x > 0 {
                        visit(labels[i - w - 1], &mut sets);
                    }
                    if x + 1 < w {
                        visit(labels[i - w + 1], &mut sets);
                    }
                }
            }
            labels[i] = if current == 0 { sets.make() } else { current };
        }
    }

    // Second pass: resolve roots and accumulate stats per root, keyed by the
    // raster position of the first pixel seen.
    struct Acc {
        first: usize,
        area: u64,
        xmin: usize,
        ymin: usize,
        xmax: usize,
        ymax: usize,
    }
    let mut root_slot = vec![u32::MAX; sets.parent.len()];
    let mut accs: Vec<Acc> = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if labels[i] == 0 {
                continue;
            }
            let root = sets.find(labels[i]) as usize;
            if root_slot[root] == u32::MAX {
                root_slot[root] = accs.len() as u32;
                accs.push(Acc {
                    first: i,
                    area: 0,
                    xmin: x,
                    ymin: y,
                    xmax: x,
                    ymax: y,
                });
            }
            let slot = root_slot[root];
            let acc = &mut accs[slot as usize];
            acc.area += 1;
            acc.xmin = acc.xmin.min(x);
            acc.xmax = acc.xmax.max(x);
            acc.ymax = y;
            labels[i] = slot;
        }
    }

    let mut order: Vec<usize> = (0..accs.len()).collect();
    order.sort_by_key(|&k| (accs[k].ymin, accs[k].xmin, accs[k].first));
    let mut relabel = vec![0u32; accs.len()];
    let comps = order
        .iter()
        .enumerate()
        .map(|(rank, &k)| {
            relabel[k] = rank as u32 + 1;
            let a = &accs[k];
            Component {
                label: rank as u32 + 1,
                area: a.area,
                bbox: BoundingBox {
                    xmin: a.xmin as u32,
                    ymin: a.ymin as u32,
                    xmax: a.xmax as u32 + 1,
                    ymax: a.ymax as u32 + 1,
                },
            }
        })
        .collect();
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if px[i] != 0 {
                labels[i] = relabel[labels[i] as usize];
            }
        }
    }
    (labels, comps)
}

/// Maximal connected foreground sets with tight boxes and pixel areas.
pub fn connected_components(a: &BinaryImage, connectivity: Connectivity) -> Vec<Component> {
    label_components(a, connectivity).1
}
