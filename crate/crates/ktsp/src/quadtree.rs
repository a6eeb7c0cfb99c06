//! Shifted quadtree over normalized integer points.
//!
//! The root cell is the box `(-a_i - 1/2, 2L - a_i - 1/2)` per axis for a
//! shift `a` in `{0, ..., L-1}^d`: side `2L`, boundaries at half-integers.
//! All bounds are stored as doubled integers (`lo2 = 2*lo`), so every
//! boundary is an odd doubled value and every input point an even one —
//! points can never sit on a cell boundary, at any level, exactly.
//!
//! A cell stops splitting once it holds at most one distinct coordinate;
//! coincident bundles therefore stay together in a single leaf, and a cell
//! of side 1 never needs to split further (it contains at most one integer
//! point per axis). Empty cells are leaves immediately.

use crate::error::{Error, Result};

/// One cell of the tree. Geometry is exact: the open box
/// `prod_i (lo2[i]/2, (lo2[i] + side2)/2)`.
#[derive(Debug, Clone)]
pub struct Cell {
    /// Doubled lower bounds per axis (odd values).
    pub lo2: Vec<i64>,
    /// Doubled side length (the same for every axis).
    pub side2: i64,
    /// Indices of instance points strictly inside this cell.
    pub points: Vec<usize>,
    /// Child cell ids in bit order (bit `i` set = upper half of axis `i`),
    /// empty for leaves.
    pub children: Vec<usize>,
    pub parent: Option<usize>,
    /// Leaf cells have height 1.
    pub height: u32,
}

impl Cell {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    /// Doubled midpoint along an axis.
    pub fn mid2(&self, axis: usize) -> i64 {
        self.lo2[axis] + self.side2 / 2
    }

    /// Doubled upper bound along an axis.
    pub fn hi2(&self, axis: usize) -> i64 {
        self.lo2[axis] + self.side2
    }

    pub fn contains2(&self, p2: &[i64]) -> bool {
        p2.iter()
            .zip(&self.lo2)
            .all(|(&c, &lo)| lo < c && c < lo + self.side2)
    }
}

/// A complete shifted quadtree. `cells[0]` is the root; `post_order`
/// lists every cell after all of its children.
#[derive(Debug, Clone)]
pub struct Quadtree {
    pub cells: Vec<Cell>,
    pub d: usize,
    pub l: i64,
    pub shift: Vec<i64>,
    pub post_order: Vec<usize>,
}

impl Quadtree {
    pub fn root(&self) -> &Cell {
        &self.cells[0]
    }

    /// Build the tree for points in `{0,...,l}^d` under the given shift.
    pub fn build(points: &[Vec<i64>], d: usize, l: i64, shift: &[i64]) -> Result<Quadtree> {
        if shift.len() != d || shift.iter().any(|&a| a < 0 || a >= l.max(1)) {
            return Err(Error::InvalidArgument(format!(
                "shift must lie in {{0..{}}}^{d}, got {shift:?}",
                l.max(1) - 1
            )));
        }
        for p in points {
            if p.len() != d || p.iter().any(|&c| c < 0 || c > l) {
                return Err(Error::InvalidInstance(format!(
                    "point {p:?} outside the {l}-grid"
                )));
            }
        }
        let p2: Vec<Vec<i64>> = points
            .iter()
            .map(|p| p.iter().map(|&c| 2 * c).collect())
            .collect();

        let root_lo2: Vec<i64> = shift.iter().map(|&a| -2 * a - 1).collect();
        let side2 = 4 * l.max(1);
        let mut tree = Quadtree {
            cells: Vec::new(),
            d,
            l,
            shift: shift.to_vec(),
            post_order: Vec::new(),
        };
        let root = tree.alloc(root_lo2, side2, (0..points.len()).collect(), None);
        debug_assert!(p2.iter().all(|p| tree.cells[root].contains2(p)));
        tree.split_recursive(root, &p2)?;
        let mut order = Vec::with_capacity(tree.cells.len());
        tree.post_order_from(root, &mut order);
        tree.post_order = order;
        Ok(tree)
    }

    fn alloc(
        &mut self,
        lo2: Vec<i64>,
        side2: i64,
        points: Vec<usize>,
        parent: Option<usize>,
    ) -> usize {
        debug_assert!(lo2.iter().all(|&b| b % 2 != 0), "boundaries must be odd");
        self.cells.push(Cell {
            lo2,
            side2,
            points,
            children: Vec::new(),
            parent,
            height: 1,
        });
        self.cells.len() - 1
    }

    fn split_recursive(&mut self, id: usize, p2: &[Vec<i64>]) -> Result<()> {
        let distinct = {
            let cell = &self.cells[id];
            let mut coords: Vec<&Vec<i64>> = cell.points.iter().map(|&i| &p2[i]).collect();
            coords.sort();
            coords.dedup();
            coords.len()
        };
        if distinct <= 1 {
            return Ok(()); // leaf: empty or a single coincident bundle
        }
        let (lo2, side2, members) = {
            let c = &self.cells[id];
            (c.lo2.clone(), c.side2, c.points.clone())
        };
        if side2 <= 2 {
            return Err(Error::Internal(
                "side-1 cell with two distinct coordinates cannot exist".into(),
            ));
        }
        let half = side2 / 2;
        let d = self.d;
        let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); 1 << d];
        for &pi in &members {
            let mut idx = 0usize;
            for axis in 0..d {
                let mid = lo2[axis] + half;
                debug_assert!(p2[pi][axis] != mid, "point on a split plane");
                if p2[pi][axis] > mid {
                    idx |= 1 << axis;
                }
            }
            buckets[idx].push(pi);
        }
        let mut children = Vec::with_capacity(1 << d);
        for (idx, bucket) in buckets.into_iter().enumerate() {
            let child_lo2: Vec<i64> = (0..d)
                .map(|axis| {
                    if idx & (1 << axis) != 0 {
                        lo2[axis] + half
                    } else {
                        lo2[axis]
                    }
                })
                .collect();
            let cid = self.alloc(child_lo2, half, bucket, Some(id));
            children.push(cid);
        }
        self.cells[id].children = children.clone();
        let mut max_h = 0;
        for cid in children {
            self.split_recursive(cid, p2)?;
            max_h = max_h.max(self.cells[cid].height);
        }
        self.cells[id].height = 1 + max_h;
        Ok(())
    }

    fn post_order_from(&self, id: usize, out: &mut Vec<usize>) {
        for &c in &self.cells[id].children {
            self.post_order_from(c, out);
        }
        out.push(id);
    }
}
