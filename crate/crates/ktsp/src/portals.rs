//! Portal lattices on quadtree facets and crossing-set validation.
//!
//! Tours are restricted to cross cell boundaries at portals. Each facet
//! carries corner-anchored lattices whose per-axis counts are powers of
//! two: a facet of span `W` with count `g` offers positions
//! `lo + i * W / g` for `i < g`. Corner anchoring plus power-of-two counts
//! make the lattices nest: a parent facet's portals are a subset of each
//! child half-facet's portals whenever the child count is at least half
//! the parent count, so a crossing that is legal at every ancestor level
//! is automatically legal below.
//!
//! A facet crossed once may use any position of its universe lattice; a
//! facet crossed `b >= 2` times must place all crossings on the coarser
//! count-`g(b)` lattice, where `g(b)^(d-1) * b` stays within the grid
//! budget, and `b` may not exceed the per-facet crossing cap.
//!
//! Portal identity is geometric: two facets sharing a plane and position
//! (a wall seen from both sides, or a parent facet and its child half)
//! yield the same identifier, which is what lets the DP consume wall
//! crossings by plain identifier equality. Positions are stored as exact
//! integers at `2 * g_max` times the input scale.

use crate::error::{Error, Result};
use crate::quadtree::Cell;
use std::collections::BTreeMap;

/// Smallest power of two `g` with `g^dm1 >= total`.
fn per_axis_pow2_ceil(total: u64, dm1: u32) -> u32 {
    let mut g: u32 = 1;
    while (g as u64).pow(dm1) < total {
        g *= 2;
    }
    g
}

/// Largest power of two `g` with `g^dm1 <= total` (at least 1).
fn per_axis_pow2_floor(total: u64, dm1: u32) -> u32 {
    let mut g: u32 = 1;
    while (2 * g as u64).pow(dm1) <= total {
        g *= 2;
    }
    g
}

/// Lattice counts and caps shared by every facet of one run.
#[derive(Debug, Clone, Copy)]
pub struct PortalScheme {
    pub d: usize,
    /// Per-axis count of the universe lattice (singles may sit anywhere on
    /// it); the union of the single-crossing lattice and the finest
    /// multi-crossing lattice, which coincides with the larger of the two
    /// because power-of-two corner lattices nest.
    pub per_axis_univ: u32,
    pub facet_cross_cap: u32,
    pub grid_cap: u64,
    /// Global scale unit: positions are integers at `2 * g_max` per grid step.
    pub g_max: i64,
}

impl PortalScheme {
    pub fn new(d: usize, m_tilde: u64, grid_cap: u64, facet_cross_cap: u32) -> PortalScheme {
        assert!(d >= 2 && m_tilde >= 1 && grid_cap >= 1 && facet_cross_cap >= 1);
        let dm1 = d as u32 - 1;
        let single = per_axis_pow2_ceil(m_tilde, dm1);
        let coarse = per_axis_pow2_floor(grid_cap, dm1);
        let univ = single.max(coarse);
        PortalScheme {
            d,
            per_axis_univ: univ,
            facet_cross_cap,
            grid_cap,
            g_max: univ as i64,
        }
    }

    /// Per-axis lattice count available to a facet crossed `b` times, or
    /// `None` when `b` crossings are not allowed at all.
    pub fn per_axis_count(&self, b: u32) -> Option<u32> {
        if b == 0 || b > self.facet_cross_cap || b as u64 > self.grid_cap {
            return None;
        }
        if b == 1 {
            return Some(self.per_axis_univ);
        }
        let dm1 = self.d as u32 - 1;
        let g = per_axis_pow2_floor(self.grid_cap / b as u64, dm1);
        Some(g.min(self.per_axis_univ))
    }
}

/// Geometric identity of a portal: splitting axis, plane, and in-plane
/// position, all at the `2 * g_max` integer scale.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct PortalKey {
    pub axis: u8,
    pub plane_sc: i64,
    /// Remaining coordinates in axis order, the crossing axis skipped.
    pub pos_sc: Vec<i64>,
}

/// All facets of a cell: (axis, upper?, doubled plane).
pub fn facets_of(cell: &Cell) -> Vec<(usize, bool, i64)> {
    let d = cell.lo2.len();
    let mut out = Vec::with_capacity(2 * d);
    for axis in 0..d {
        out.push((axis, false, cell.lo2[axis]));
        out.push((axis, true, cell.hi2(axis)));
    }
    out
}

/// Portal keys of the count-`g` lattice on one facet, in lexicographic
/// position order.
pub fn facet_positions(
    scheme: &PortalScheme,
    cell: &Cell,
    axis: usize,
    plane2: i64,
    g: u32,
) -> Vec<PortalKey> {
    let d = scheme.d;
    let g = g as i64;
    debug_assert!(scheme.g_max % g == 0, "counts must divide g_max");
    let step = cell.side2 * (scheme.g_max / g);
    let others: Vec<usize> = (0..d).filter(|&j| j != axis).collect();
    let mut out = Vec::new();
    let mut idx = vec![0i64; others.len()];
    'fill: loop {
        let pos_sc: Vec<i64> = others
            .iter()
            .zip(&idx)
            .map(|(&j, &i)| cell.lo2[j] * scheme.g_max + i * step)
            .collect();
        out.push(PortalKey {
            axis: axis as u8,
            plane_sc: plane2 * scheme.g_max,
            pos_sc,
        });
        for slot in (0..idx.len()).rev() {
            idx[slot] += 1;
            if idx[slot] < g {
                continue 'fill;
            }
            idx[slot] = 0;
        }
        break;
    }
    out
}

/// Is this key on the count-`g` lattice of the given facet?
pub fn on_facet_grid(
    scheme: &PortalScheme,
    cell: &Cell,
    axis: usize,
    plane2: i64,
    g: u32,
    key: &PortalKey,
) -> bool {
    if key.axis as usize != axis || key.plane_sc != plane2 * scheme.g_max {
        return false;
    }
    let step = cell.side2 * (scheme.g_max / g as i64);
    let others: Vec<usize> = (0..scheme.d).filter(|&j| j != axis).collect();
    key.pos_sc.iter().zip(&others).all(|(&p, &j)| {
        let off = p - cell.lo2[j] * scheme.g_max;
        off >= 0 && off < cell.side2 * scheme.g_max && off % step == 0
    })
}

/// Interned portal identifiers for one tree. Read-only after construction,
/// so lookups can be shared across worker threads.
#[derive(Debug, Clone)]
pub struct PortalInterner {
    map: BTreeMap<PortalKey, u32>,
    keys: Vec<PortalKey>,
    pub g_max: i64,
}

impl PortalInterner {
    /// Intern the universe lattice of every facet of every cell, in
    /// deterministic (cell, axis, side, position) order. Coarser lattices
    /// are subsets of the universe lattice, so this covers every portal
    /// the DP can mention.
    pub fn build(cells: &[Cell], scheme: &PortalScheme) -> PortalInterner {
        let mut it = PortalInterner {
            map: BTreeMap::new(),
            keys: Vec::new(),
            g_max: scheme.g_max,
        };
        for cell in cells {
            for (axis, _, plane2) in facets_of(cell) {
                for key in facet_positions(scheme, cell, axis, plane2, scheme.per_axis_univ) {
                    it.intern(key);
                }
            }
        }
        it
    }

    fn intern(&mut self, key: PortalKey) -> u32 {
        if let Some(&id) = self.map.get(&key) {
            return id;
        }
        let id = self.keys.len() as u32;
        self.map.insert(key.clone(), id);
        self.keys.push(key);
        id
    }

    pub fn id_of(&self, key: &PortalKey) -> Option<u32> {
        self.map.get(key).copied()
    }

    pub fn key(&self, id: u32) -> &PortalKey {
        &self.keys[id as usize]
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    /// Full-dimension coordinates in input units (not doubled).
    pub fn point(&self, id: u32) -> Vec<f64> {
        let k = self.key(id);
        let d = k.pos_sc.len() + 1;
        let denom = (2 * self.g_max) as f64;
        let mut out = Vec::with_capacity(d);
        let mut oi = 0;
        for axis in 0..d {
            if axis == k.axis as usize {
                out.push(k.plane_sc as f64 / denom);
            } else {
                out.push(k.pos_sc[oi] as f64 / denom);
                oi += 1;
            }
        }
        out
    }
}

/// Check the per-facet crossing rules for a realized crossing set on a
/// cell's boundary: every key on some facet of the cell, per-facet counts
/// within the cap, singles anywhere on the universe lattice, multiples
/// jointly on their coarser lattice.
pub fn validate_fine(scheme: &PortalScheme, cell: &Cell, keys: &[&PortalKey]) -> bool {
    let facets = facets_of(cell);
    let mut per_facet: Vec<Vec<&PortalKey>> = vec![Vec::new(); facets.len()];
    'keys: for key in keys {
        for (fi, &(axis, _, plane2)) in facets.iter().enumerate() {
            if key.axis as usize == axis && key.plane_sc == plane2 * scheme.g_max {
                per_facet[fi].push(key);
                continue 'keys;
            }
        }
        return false; // not on this cell's boundary at all
    }
    for (fi, group) in per_facet.iter().enumerate() {
        let b = group.len() as u32;
        if b == 0 {
            continue;
        }
        let g = match scheme.per_axis_count(b) {
            Some(g) => g,
            None => return false,
        };
        let (axis, _, plane2) = facets[fi];
        if !group
            .iter()
            .all(|k| on_facet_grid(scheme, cell, axis, plane2, g, k))
        {
            return false;
        }
    }
    true
}

/// Enumerate every crossing set this cell's boundary admits, smallest
/// first (the empty set leads). Intended for tests and oracles on tiny
/// configurations; errors out beyond `max_sets`.
pub fn enumerate_fine_sets(
    scheme: &PortalScheme,
    cell: &Cell,
    interner: &PortalInterner,
    max_sets: usize,
) -> Result<Vec<Vec<u32>>> {
    let mut per_facet_families: Vec<Vec<Vec<u32>>> = Vec::new();
    for (axis, _, plane2) in facets_of(cell) {
        let mut family: Vec<Vec<u32>> = vec![Vec::new()];
        let univ = facet_positions(scheme, cell, axis, plane2, scheme.per_axis_univ);
        for key in &univ {
            family.push(vec![interner.id_of(key).expect("universe is interned")]);
        }
        for b in 2..=scheme.facet_cross_cap {
            let g = match scheme.per_axis_count(b) {
                Some(g) => g,
                None => break,
            };
            let grid = facet_positions(scheme, cell, axis, plane2, g);
            if (grid.len() as u32) < b {
                continue;
            }
            let ids: Vec<u32> = grid
                .iter()
                .map(|k| interner.id_of(k).expect("coarse lattices nest in the universe"))
                .collect();
            let b = b as usize;
            let mut combo: Vec<usize> = (0..b).collect();
            loop {
                family.push(combo.iter().map(|&i| ids[i]).collect());
                // Advance to the next b-combination of indices, if any.
                let mut advanced = false;
                for slot in (0..b).rev() {
                    if combo[slot] < ids.len() - (b - slot) {
                        combo[slot] += 1;
                        for j in slot + 1..b {
                            combo[j] = combo[j - 1] + 1;
                        }
                        advanced = true;
                        break;
                    }
                }
                if !advanced {
                    break;
                }
            }
        }
        per_facet_families.push(family);
    }

    let mut sets: Vec<Vec<u32>> = vec![Vec::new()];
    for family in &per_facet_families {
        let mut next = Vec::new();
        for base in &sets {
            for choice in family {
                let mut s = base.clone();
                s.extend_from_slice(choice);
                next.push(s);
                if next.len() > max_sets {
                    return Err(Error::CapExceeded(format!(
                        "crossing-set enumeration exceeds {max_sets} sets"
                    )));
                }
            }
        }
        sets = next;
    }
    for s in &mut sets {
        s.sort_unstable();
    }
    sets.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    sets.dedup();
    Ok(sets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadtree::Quadtree;

    fn cell(lo2: Vec<i64>, side2: i64) -> Cell {
        Cell {
            lo2,
            side2,
            points: Vec::new(),
            children: Vec::new(),
            parent: None,
            height: 1,
        }
    }

    #[test]
    fn scheme_reference_counts() {
        // d=2 with 9 single-crossing portals and a grid budget of 16.
        let s = PortalScheme::new(2, 9, 16, 4);
        assert_eq!(s.per_axis_univ, 16);
        assert_eq!(s.per_axis_count(1), Some(16));
        assert_eq!(s.per_axis_count(2), Some(8));
        assert_eq!(s.per_axis_count(3), Some(4));
        assert_eq!(s.per_axis_count(4), Some(4));
        assert_eq!(s.per_axis_count(5), None);

        let s3 = PortalScheme::new(3, 9, 256, 4);
        assert_eq!(s3.per_axis_univ, 16); // sqrt(256)
        assert_eq!(s3.per_axis_count(2), Some(8)); // 8^2 * 2 = 128 <= 256
    }

    #[test]
    fn facet_positions_are_exact_and_counted() {
        let s = PortalScheme::new(2, 4, 4, 2);
        assert_eq!(s.per_axis_univ, 4);
        let c = cell(vec![-1, -1], 8);
        let pos = facet_positions(&s, &c, 0, -1, 4);
        assert_eq!(pos.len(), 4);
        // Corner-anchored: offsets 0, W/4, W/2, 3W/4 from the facet corner.
        let step = 8 * (s.g_max / 4);
        for (i, k) in pos.iter().enumerate() {
            assert_eq!(k.axis, 0);
            assert_eq!(k.plane_sc, -s.g_max);
            assert_eq!(k.pos_sc, vec![-s.g_max + i as i64 * step]);
        }
    }

    #[test]
    fn parent_portals_nest_into_child_halves() {
        let s = PortalScheme::new(2, 8, 8, 4);
        let parent = cell(vec![-1, -1], 16);
        let lower_child = cell(vec![-1, -1], 8);
        let upper_child = cell(vec![-1, 7], 8);
        for g_parent in [2u32, 4, 8] {
            let parent_keys = facet_positions(&s, &parent, 0, -1, g_parent);
            for g_child in [g_parent, g_parent * 2] {
                let g_child = g_child.min(s.per_axis_univ);
                if g_child < g_parent.div_ceil(2) {
                    continue;
                }
                let mut child_keys =
                    facet_positions(&s, &lower_child, 0, -1, g_child);
                child_keys.extend(facet_positions(&s, &upper_child, 0, -1, g_child));
                for pk in &parent_keys {
                    assert!(
                        child_keys.contains(pk),
                        "parent portal {pk:?} missing at child count {g_child}"
                    );
                }
            }
        }
    }

    #[test]
    fn wall_portals_share_identity_across_siblings() {
        let points = vec![vec![0i64, 0], vec![3, 3]];
        let t = Quadtree::build(&points, 2, 4, &[1, 1]).unwrap();
        let s = PortalScheme::new(2, 4, 4, 2);
        let it = PortalInterner::build(&t.cells, &s);
        let root = t.root();
        let left = &t.cells[root.children[0]];
        let right = &t.cells[root.children[1]];
        // Left child's upper-x facet and right child's lower-x facet are
        // the same wall.
        assert_eq!(left.hi2(0), right.lo2[0]);
        let from_left = facet_positions(&s, left, 0, left.hi2(0), s.per_axis_univ);
        let from_right = facet_positions(&s, right, 0, right.lo2[0], s.per_axis_univ);
        assert_eq!(from_left, from_right);
        for k in &from_left {
            assert!(it.id_of(k).is_some());
        }
    }

    #[test]
    fn interner_roundtrip_and_geometry() {
        let points = vec![vec![0i64, 0], vec![2, 3]];
        let t = Quadtree::build(&points, 2, 4, &[0, 0]).unwrap();
        let s = PortalScheme::new(2, 4, 4, 2);
        let it = PortalInterner::build(&t.cells, &s);
        assert!(it.len() > 0);
        for id in 0..it.len() as u32 {
            let k = it.key(id);
            assert_eq!(it.id_of(k), Some(id));
            let p = it.point(id);
            assert_eq!(p.len(), 2);
            // The crossing-axis coordinate must reproduce the plane.
            let back = (p[k.axis as usize] * (2 * it.g_max) as f64).round() as i64;
            assert_eq!(back, k.plane_sc);
        }
    }

    #[test]
    fn fine_validation_rules() {
        let s = PortalScheme::new(2, 4, 4, 2);
        let c = cell(vec![-1, -1], 8);
        let univ = facet_positions(&s, &c, 0, -1, 4);
        let coarse = facet_positions(&s, &c, 0, -1, s.per_axis_count(2).unwrap());
        assert_eq!(coarse.len(), 2);

        // A single crossing may sit anywhere on the universe lattice.
        for k in &univ {
            assert!(validate_fine(&s, &c, &[k]));
        }
        // Two crossings must both sit on the coarse lattice.
        assert!(validate_fine(&s, &c, &[&coarse[0], &coarse[1]]));
        let off_coarse: Vec<&PortalKey> =
            univ.iter().filter(|k| !coarse.contains(k)).collect();
        assert!(!validate_fine(&s, &c, &[off_coarse[0], &coarse[0]]));
        // Three crossings exceed the cap.
        assert!(!validate_fine(
            &s,
            &c,
            &[&univ[0], &univ[1], &univ[2]]
        ));
        // A key from some other plane is not on this boundary.
        let elsewhere = PortalKey {
            axis: 0,
            plane_sc: 999,
            pos_sc: vec![0],
        };
        assert!(!validate_fine(&s, &c, &[&elsewhere]));
    }

    #[test]
    fn enumerate_small_family() {
        // Universe of 2 per facet, multiples impossible (coarse lattice has
        // a single position): family per facet = empty + 2 singles = 3,
        // so a 2-d cell admits 3^4 = 81 crossing sets.
        let points = vec![vec![0i64, 0], vec![1, 1]];
        let t = Quadtree::build(&points, 2, 1, &[0, 0]).unwrap();
        let s = PortalScheme::new(2, 2, 2, 2);
        assert_eq!(s.per_axis_univ, 2);
        assert_eq!(s.per_axis_count(2), Some(1));
        let it = PortalInterner::build(&t.cells, &s);
        let sets = enumerate_fine_sets(&s, t.root(), &it, 10_000).unwrap();
        assert_eq!(sets.len(), 81);
        assert_eq!(sets[0], Vec::<u32>::new());
        for w in sets.windows(2) {
            assert!(w[0].len() <= w[1].len(), "sets must come smallest first");
        }
        assert!(enumerate_fine_sets(&s, t.root(), &it, 50).is_err());
    }

    #[test]
    fn enumerate_with_multi_crossings() {
        // Universe 8, double crossings draw from a 4-position lattice:
        // per facet 1 + 8 + C(4,2) = 15 choices, 15^4 sets for the cell.
        let points = vec![vec![0i64, 0], vec![1, 1]];
        let t = Quadtree::build(&points, 2, 1, &[0, 0]).unwrap();
        let s = PortalScheme::new(2, 1, 8, 3);
        assert_eq!(s.per_axis_univ, 8);
        assert_eq!(s.per_axis_count(2), Some(4));
        let it = PortalInterner::build(&t.cells, &s);
        let sets = enumerate_fine_sets(&s, t.root(), &it, 60_000).unwrap();
        assert_eq!(sets.len(), 15usize.pow(4));
        // Double-crossing choices per facet: exactly C(4,2) = 6 sets of
        // size 2 sharing one facet.
        let root = t.root();
        let coarse = facet_positions(&s, root, 0, root.lo2[0], 4);
        let coarse_ids: Vec<u32> =
            coarse.iter().map(|k| it.id_of(k).unwrap()).collect();
        let doubles = sets
            .iter()
            .filter(|s| s.len() == 2 && s.iter().all(|id| coarse_ids.contains(id)))
            .count();
        assert_eq!(doubles, 6);
    }
}
