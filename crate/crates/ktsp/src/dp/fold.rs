//! Folding child tables into a parent cell.
//!
//! Children are merged pairwise along one axis at a time, so each
//! internal wall is consumed at the join of the two blocks that share
//! it and intermediate tables stay small. A table keys states by
//! (closed?, pairing of not-yet-consumed crossings, visits) and tracks
//! the cheapest threshold chain and the cheapest exact chain
//! independently.
//!
//! Crossings on a wall must be used by exactly the children bordering
//! them. When two blocks join, the crossings whose bordering children
//! all lie inside the merged block form the join's region; both sides
//! are bucketed by their crossing subset inside that region, and only
//! equal buckets are combined. Unequal combinations would leave a
//! dangling crossing with no future partner, so they are never joined,
//! and after the last merge every remaining crossing provably lies on
//! the parent's own boundary.
//!
//! The parent's portal discipline is enforced incrementally: crossings
//! on the parent boundary are never consumed and per-facet counts only
//! grow, so any state whose partial boundary set already violates the
//! parent's caps or lattice positions is dropped on sight.

use super::{CellExport, DpLimits, DpStats, Prov, RawState};
use crate::error::{Error, Result};
use crate::portals::{validate_fine, PortalInterner, PortalKey, PortalScheme};
use crate::quadtree::{Cell, Quadtree};
use crate::rankmatch::{join, JoinOutcome, Matching};
use crate::thresholds::BudgetLadder;
use std::collections::{BTreeMap, BTreeSet};

type RunKey = (bool, Matching, u64);

#[derive(Debug, Clone)]
struct RunVal {
    /// Minimum over realizations of the summed child threshold values.
    slot_sum: f64,
    /// Minimum exact cost, with the child entries realizing it. For open
    /// states this is the crossing-respecting chain; a closed state is
    /// priced by the cycle over its visited points (portals dropped), so
    /// competing realizations are kept by what a tour would really cost.
    sigma: f64,
    refs: Vec<(usize, usize)>,
}

/// Children a crossing borders, as a bitmask over child slots, or `None`
/// for crossings on the parent's own boundary.
fn wall_mask(cell: &Cell, g_max: i64, d: usize, key: &PortalKey) -> Option<u32> {
    let ax = key.axis as usize;
    if key.plane_sc != cell.mid2(ax) * g_max {
        debug_assert!(
            key.plane_sc == cell.lo2[ax] * g_max || key.plane_sc == cell.hi2(ax) * g_max,
            "crossing off every plane of this cell"
        );
        return None;
    }
    let mut mask = 0u32;
    for c in 0..(1u32 << d) {
        let mut borders = true;
        let mut oi = 0;
        for j in 0..d {
            if j == ax {
                continue;
            }
            let pos = key.pos_sc[oi];
            oi += 1;
            let mid = cell.mid2(j) * g_max;
            let upper = (c >> j) & 1 == 1;
            if (pos < mid && upper) || (pos > mid && !upper) {
                borders = false;
                break;
            }
        }
        if borders {
            mask |= 1 << c;
        }
    }
    Some(mask)
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn fold_cell(
    points: &[Vec<i64>],
    tree: &Quadtree,
    cid: usize,
    scheme: &PortalScheme,
    interner: &PortalInterner,
    ladder: &BudgetLadder,
    limits: &DpLimits,
    exports: &[CellExport],
    stats: &mut DpStats,
) -> Result<Vec<RawState>> {
    let cell = &tree.cells[cid];
    let d = tree.d;
    let slots = 1usize << d;
    debug_assert_eq!(cell.children.len(), slots);
    let top = *ladder.values.last().unwrap();
    // Mid-fold states may hold every child's eventual boundary at once.
    let mid_pairs_cap = limits.max_open_pairs.saturating_mul(slots);
    let trace = std::env::var_os("KTSP_DP_TRACE").is_some();

    let mut mask_memo: BTreeMap<u32, Option<u32>> = BTreeMap::new();
    let mask_of = |id: u32, memo: &mut BTreeMap<u32, Option<u32>>| -> Option<u32> {
        *memo
            .entry(id)
            .or_insert_with(|| wall_mask(cell, scheme.g_max, d, interner.key(id)))
    };

    // A state that already violates the parent's boundary discipline can
    // never recover; this is also where a child-lattice position that is
    // off the parent's coarser lattice dies.
    let boundary_ok = |m: &Matching, memo: &mut BTreeMap<u32, Option<u32>>| -> bool {
        if m.is_empty() {
            return true;
        }
        let boundary: Vec<&PortalKey> = m
            .universe()
            .into_iter()
            .filter(|&id| mask_of(id, memo).is_none())
            .map(|id| interner.key(id))
            .collect();
        validate_fine(scheme, cell, &boundary)
    };

    // Lift each child's export into a one-slot block.
    let mut blocks: BTreeMap<u32, BTreeMap<RunKey, RunVal>> = BTreeMap::new();
    for (j, &child) in cell.children.iter().enumerate() {
        let mut table: BTreeMap<RunKey, RunVal> = BTreeMap::new();
        for (ei, e) in exports[child].entries.iter().enumerate() {
            if !boundary_ok(&e.matching, &mut mask_memo) {
                continue;
            }
            table.insert(
                (e.closed, e.matching.clone(), e.kappa),
                RunVal {
                    slot_sum: ladder.values[e.slot],
                    sigma: e.sigma,
                    refs: vec![(child, ei)],
                },
            );
        }
        blocks.insert(1u32 << j, table);
    }

    for axis in 0..d {
        let shift = 1usize << axis;
        let masks: Vec<u32> = blocks.keys().copied().collect();
        for ma in masks {
            let c_min = ma.trailing_zeros() as usize;
            if (c_min >> axis) & 1 != 0 {
                continue;
            }
            let mb = ma << shift;
            let ta = blocks.remove(&ma).expect("block disappeared");
            let tb = blocks.remove(&mb).expect("partner block missing");
            let union = ma | mb;

            // Crossings whose bordering children all lie in the merged
            // block; they must pair up now or never.
            let mut region: BTreeSet<u32> = BTreeSet::new();
            for (_, m, _) in ta.keys().chain(tb.keys()) {
                for id in m.universe() {
                    if let Some(mask) = mask_of(id, &mut mask_memo) {
                        if mask & !union == 0 {
                            region.insert(id);
                        }
                    }
                }
            }
            let bucket_of = |m: &Matching| -> Vec<u32> {
                m.universe()
                    .into_iter()
                    .filter(|id| region.contains(id))
                    .collect()
            };

            let tbv: Vec<(RunKey, RunVal)> = tb.into_iter().collect();
            let mut b_buckets: BTreeMap<Vec<u32>, Vec<usize>> = BTreeMap::new();
            for (bi, ((_, m, _), _)) in tbv.iter().enumerate() {
                b_buckets.entry(bucket_of(m)).or_default().push(bi);
            }

            let mut out: BTreeMap<RunKey, RunVal> = BTreeMap::new();
            for ((aclosed, am, akappa), aval) in &ta {
                let Some(candidates) = b_buckets.get(&bucket_of(am)) else {
                    continue;
                };
                for &bi in candidates {
                    let ((bclosed, bm, bkappa), bval) = &tbv[bi];
                    let (nclosed, nmatching, nkappa, fresh_close) = if *aclosed && *bclosed {
                        // At most one closed component.
                        continue;
                    } else if *aclosed {
                        if !bm.is_empty() || *bkappa != 0 {
                            continue;
                        }
                        (true, Matching::empty(), *akappa, false)
                    } else if *bclosed {
                        if !am.is_empty() || *akappa != 0 {
                            continue;
                        }
                        (true, Matching::empty(), *bkappa, false)
                    } else {
                        stats.joins += 1;
                        match join(am, bm) {
                            JoinOutcome::Open(m2) => (false, m2, akappa + bkappa, false),
                            JoinOutcome::Closed => {
                                (true, Matching::empty(), akappa + bkappa, true)
                            }
                            JoinOutcome::Bot => continue,
                        }
                    };
                    if nmatching.pairs().len() > mid_pairs_cap {
                        continue;
                    }
                    if !boundary_ok(&nmatching, &mut mask_memo) {
                        continue;
                    }
                    let slot_sum = aval.slot_sum + bval.slot_sum;
                    if slot_sum > top {
                        stats.dropped_over_budget += 1;
                        continue;
                    }
                    // A join that closes the cycle fixes the whole tour, so
                    // price it by that tour: rebuild the visit order and take
                    // the cycle cost over the points themselves. States that
                    // stay open keep the additive crossing-respecting chain.
                    let mut ready_refs: Option<Vec<(usize, usize)>> = None;
                    let sigma = if fresh_close {
                        let mut refs = aval.refs.clone();
                        refs.extend_from_slice(&bval.refs);
                        let tour =
                            super::reconstruct::reconstruct_refs(points, tree, exports, &refs)?;
                        debug_assert_eq!(tour.kappa, nkappa, "closure lost a visit");
                        ready_refs = Some(refs);
                        tour.cost
                    } else {
                        aval.sigma + bval.sigma
                    };
                    match out.entry((nclosed, nmatching, nkappa)) {
                        std::collections::btree_map::Entry::Vacant(v) => {
                            let refs = ready_refs.take().unwrap_or_else(|| {
                                let mut r = aval.refs.clone();
                                r.extend_from_slice(&bval.refs);
                                r
                            });
                            v.insert(RunVal {
                                slot_sum,
                                sigma,
                                refs,
                            });
                        }
                        std::collections::btree_map::Entry::Occupied(mut o) => {
                            let cur = o.get_mut();
                            cur.slot_sum = cur.slot_sum.min(slot_sum);
                            if sigma < cur.sigma {
                                cur.sigma = sigma;
                                cur.refs = ready_refs.take().unwrap_or_else(|| {
                                    let mut r = aval.refs.clone();
                                    r.extend_from_slice(&bval.refs);
                                    r
                                });
                            }
                        }
                    }
                }
                if out.len() > limits.max_states_per_cell {
                    return Err(Error::CapExceeded(format!(
                        "cell working table grew to {} states",
                        out.len()
                    )));
                }
            }
            if trace {
                eprintln!(
                    "fold cell {cid} blocks {ma:#b}+{mb:#b}: region={} buckets={} out={}",
                    region.len(),
                    b_buckets.len(),
                    out.len()
                );
            }
            stats.peak_running_states = stats.peak_running_states.max(out.len());
            blocks.insert(union, out);
        }
    }

    debug_assert_eq!(blocks.len(), 1);
    let running = blocks
        .remove(&((1u32 << slots) - 1))
        .expect("merge tree left no full block");

    let mut out = Vec::new();
    for ((closed, matching, kappa), val) in running {
        if !closed && !matching.is_empty() {
            let ids = matching.universe();
            debug_assert!(
                ids.iter()
                    .all(|&id| mask_of(id, &mut mask_memo).is_none()),
                "an internal-wall crossing survived the fold"
            );
            if matching.pairs().len() > limits.max_open_pairs {
                continue;
            }
            let keys: Vec<&PortalKey> = ids.iter().map(|&id| interner.key(id)).collect();
            if !validate_fine(scheme, cell, &keys) {
                continue;
            }
        }
        out.push(RawState {
            closed,
            matching,
            kappa,
            slot_sum: val.slot_sum,
            sigma: val.sigma,
            prov: Prov::Fold {
                children: val.refs,
            },
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key_on(axis: u8, plane2: i64, pos2: Vec<i64>, g_max: i64) -> PortalKey {
        PortalKey {
            axis,
            plane_sc: plane2 * g_max,
            pos_sc: pos2.into_iter().map(|p| p * g_max).collect(),
        }
    }

    #[test]
    fn wall_masks_follow_geometry() {
        // Parent box (-0.5, 15.5)^2 in doubled coordinates: lo2 = -1,
        // side2 = 32, mid2 = 15.
        let cell = Cell {
            lo2: vec![-1, -1],
            side2: 32,
            points: vec![],
            children: vec![],
            parent: None,
            height: 3,
        };
        let g = 4;
        // Crossing of the x-mid wall in the lower y half: children 0, 1.
        let low = key_on(0, 15, vec![5], g);
        assert_eq!(wall_mask(&cell, g, 2, &low), Some(0b0011));
        // Upper y half: children 2, 3.
        let high = key_on(0, 15, vec![21], g);
        assert_eq!(wall_mask(&cell, g, 2, &high), Some(0b1100));
        // Dead center: all four children border it.
        let center = key_on(0, 15, vec![15], g);
        assert_eq!(wall_mask(&cell, g, 2, &center), Some(0b1111));
        // y-mid wall, x below mid: children 0 and 2.
        let ywall = key_on(1, 15, vec![3], g);
        assert_eq!(wall_mask(&cell, g, 2, &ywall), Some(0b0101));
        // Parent's own boundary is never a wall.
        let outer = key_on(0, -1, vec![7], g);
        assert_eq!(wall_mask(&cell, g, 2, &outer), None);
        let outer_hi = key_on(1, 31, vec![7], g);
        assert_eq!(wall_mask(&cell, g, 2, &outer_hi), None);
    }
}
