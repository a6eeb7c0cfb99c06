//! Rebuilding an actual tour from a chosen root entry.
//!
//! Provenance is walked down to the leaves, producing one fragment per
//! leaf pair: its two portal endpoints plus the bundle visits of a detour
//! fragment. In a closed root state every portal is consumed internally,
//! so each endpoint identifier appears in exactly two fragments; gluing
//! them yields a single cycle. Dropping the portals leaves the visited
//! points in cyclic order — by the triangle inequality this only
//! shortens the tour, so the final cost never exceeds the exact chain
//! of the chosen entry.

use super::{CellExport, Prov};
use crate::error::{Error, Result};
use crate::geometry::tour_cost_i;
use crate::quadtree::Quadtree;
use std::collections::BTreeMap;

/// A reconstructed tour: point indices in visit order, visits, and the
/// exact cycle cost over those points.
#[derive(Debug, Clone)]
pub struct SubTour {
    pub order: Vec<usize>,
    pub kappa: u64,
    pub cost: f64,
}

struct Fragment {
    ends: [u32; 2],
    visits: Vec<usize>,
}

fn collect(
    tree: &Quadtree,
    exports: &[CellExport],
    cell: usize,
    entry: usize,
    frags: &mut Vec<Fragment>,
    core: &mut Option<Vec<usize>>,
) -> Result<()> {
    let e = exports
        .get(cell)
        .and_then(|x| x.entries.get(entry))
        .ok_or_else(|| Error::Internal(format!("missing entry {entry} of cell {cell}")))?;
    match &e.prov {
        Prov::Leaf { through } => {
            if e.closed {
                if core.replace(tree.cells[cell].points.clone()).is_some() {
                    return Err(Error::Internal(
                        "two closed cores cannot share one tour".into(),
                    ));
                }
                return Ok(());
            }
            for &(u, v) in e.matching.pairs() {
                let visits = if *through == Some((u, v)) {
                    tree.cells[cell].points.clone()
                } else {
                    Vec::new()
                };
                frags.push(Fragment {
                    ends: [u, v],
                    visits,
                });
            }
        }
        Prov::Fold { children } => {
            for &(ccell, centry) in children {
                collect(tree, exports, ccell, centry, frags, core)?;
            }
        }
    }
    Ok(())
}

/// Rebuild the tour behind `exports[cell].entries[entry]`, which must be
/// a closed state.
pub fn reconstruct_tour(
    points: &[Vec<i64>],
    tree: &Quadtree,
    exports: &[CellExport],
    cell: usize,
    entry: usize,
) -> Result<SubTour> {
    let chosen = &exports[cell].entries[entry];
    if !chosen.closed {
        return Err(Error::Internal("only closed states describe tours".into()));
    }
    let mut frags = Vec::new();
    let mut core = None;
    collect(tree, exports, cell, entry, &mut frags, &mut core)?;
    let tour = glue(points, frags, core)?;
    check(chosen.kappa, tour.kappa, chosen.sigma, tour.cost)?;
    Ok(tour)
}

/// Rebuild the cycle a closing join just formed out of the listed child
/// entries, before any state for it exists. Used by the fold to price a
/// fresh closed state by the tour it actually stands for.
pub(crate) fn reconstruct_refs(
    points: &[Vec<i64>],
    tree: &Quadtree,
    exports: &[CellExport],
    refs: &[(usize, usize)],
) -> Result<SubTour> {
    let mut frags = Vec::new();
    let mut core = None;
    for &(cell, entry) in refs {
        collect(tree, exports, cell, entry, &mut frags, &mut core)?;
    }
    glue(points, frags, core)
}

fn glue(points: &[Vec<i64>], frags: Vec<Fragment>, core: Option<Vec<usize>>) -> Result<SubTour> {
    if let Some(order) = core {
        if !frags.is_empty() {
            return Err(Error::Internal(
                "closed core next to open fragments".into(),
            ));
        }
        let kappa = order.len() as u64;
        let cost = cycle_cost(points, &order);
        return Ok(SubTour { order, kappa, cost });
    }
    if frags.is_empty() {
        return Err(Error::Internal("closed state without any fragment".into()));
    }

    // Each identifier must be consumed by exactly two fragment ends.
    let mut uses: BTreeMap<u32, Vec<(usize, usize)>> = BTreeMap::new();
    for (fi, f) in frags.iter().enumerate() {
        uses.entry(f.ends[0]).or_default().push((fi, 0));
        uses.entry(f.ends[1]).or_default().push((fi, 1));
    }
    for (id, ends) in &uses {
        if ends.len() != 2 {
            return Err(Error::Internal(format!(
                "crossing {id} used by {} fragment ends",
                ends.len()
            )));
        }
    }

    let mut order: Vec<usize> = Vec::new();
    let mut seen = vec![false; frags.len()];
    let mut at = (0usize, 0usize); // traverse fragment 0 from end 0
    for _ in 0..frags.len() {
        let (fi, enter) = at;
        if seen[fi] {
            return Err(Error::Internal("fragment gluing revisits a piece".into()));
        }
        seen[fi] = true;
        if enter == 0 {
            order.extend(frags[fi].visits.iter().copied());
        } else {
            order.extend(frags[fi].visits.iter().rev().copied());
        }
        let exit = 1 - enter;
        let exit_id = frags[fi].ends[exit];
        let pair = &uses[&exit_id];
        let (nf, ne) = if pair[0] == (fi, exit) { pair[1] } else { pair[0] };
        at = (nf, ne);
    }
    if at != (0, 0) || !seen.iter().all(|&s| s) {
        return Err(Error::Internal(
            "fragments do not close into a single cycle".into(),
        ));
    }

    let kappa = order.len() as u64;
    let cost = cycle_cost(points, &order);
    Ok(SubTour { order, kappa, cost })
}

fn cycle_cost(points: &[Vec<i64>], order: &[usize]) -> f64 {
    let seq: Vec<Vec<i64>> = order.iter().map(|&i| points[i].clone()).collect();
    tour_cost_i(&seq)
}

fn check(want_kappa: u64, kappa: u64, sigma: f64, cost: f64) -> Result<()> {
    if kappa != want_kappa {
        return Err(Error::Internal(format!(
            "tour visits {kappa} points, state promised {want_kappa}"
        )));
    }
    if cost > sigma + 1e-6 * sigma.max(1.0) {
        return Err(Error::Internal(format!(
            "tour cost {cost} exceeds its exact chain {sigma}"
        )));
    }
    Ok(())
}
