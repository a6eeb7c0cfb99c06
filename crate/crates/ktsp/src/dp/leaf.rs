//! Leaf state enumeration.
//!
//! A leaf holds at most one distinct location (possibly with
//! multiplicity). Its states are: the untouched pass-through state; for a
//! bundle of two or more points, a zero-cost closed tour over the bundle;
//! and for every admissible crossing set of its boundary, every perfect
//! pairing of the crossings, where each pair is realized either as the
//! straight portal-to-portal segment or as the detour through the bundle.
//! At most one pair detours: a second detour would add cost without
//! visiting anything new, so it is always dominated.

use super::{DpLimits, DpStats, Prov, RawState};
use crate::error::{Error, Result};
use crate::geometry::dist_f;
use crate::par;
use crate::portals::{enumerate_fine_sets, PortalInterner, PortalScheme};
use crate::quadtree::Quadtree;
use crate::rankmatch::{all_perfect_matchings, Matching};
use crate::thresholds::BudgetLadder;

#[allow(clippy::too_many_arguments)]
pub(crate) fn leaf_states(
    points: &[Vec<i64>],
    tree: &Quadtree,
    cid: usize,
    scheme: &PortalScheme,
    interner: &PortalInterner,
    ladder: &BudgetLadder,
    limits: &DpLimits,
    stats: &mut DpStats,
) -> Result<Vec<RawState>> {
    let cell = &tree.cells[cid];
    let bundle: Option<(Vec<f64>, u64)> = cell.points.first().map(|&first| {
        debug_assert!(
            cell.points.iter().all(|&i| points[i] == points[first]),
            "a leaf may hold only one distinct location"
        );
        let loc: Vec<f64> = points[first].iter().map(|&c| c as f64).collect();
        (loc, cell.points.len() as u64)
    });
    let top = *ladder.values.last().unwrap();

    let mut out = vec![RawState {
        closed: false,
        matching: Matching::empty(),
        kappa: 0,
        slot_sum: 0.0,
        sigma: 0.0,
        prov: Prov::Leaf { through: None },
    }];
    if let Some((_, m)) = bundle {
        if m >= 2 {
            out.push(RawState {
                closed: true,
                matching: Matching::empty(),
                kappa: m,
                slot_sum: 0.0,
                sigma: 0.0,
                prov: Prov::Leaf { through: None },
            });
        }
    }

    let sets = enumerate_fine_sets(scheme, cell, interner, limits.max_fine_sets)?;
    // Enumeration work and table size are both proportional to the
    // number of perfect pairings, so bound that up front instead of
    // discovering mid-flight that the menu cannot fit.
    let admissible =
        |ids: &Vec<u32>| !ids.is_empty() && ids.len() % 2 == 0 && ids.len() / 2 <= limits.max_open_pairs;
    let mut expected = out.len() as u64;
    for ids in sets.iter() {
        if !admissible(ids) {
            continue;
        }
        expected = expected.saturating_add(2 * perfect_matching_count(ids.len()));
        if expected > limits.max_states_per_cell as u64 {
            return Err(Error::CapExceeded(format!(
                "leaf cell {cid} admits up to {expected} states (cap {})",
                limits.max_states_per_cell
            )));
        }
    }
    let per_set: Vec<Vec<RawState>> = par::map_vec(sets, |ids| {
        if !admissible(&ids) {
            return Vec::new();
        }
        let coords: Vec<Vec<f64>> = ids.iter().map(|&id| interner.point(id)).collect();
        let at = |id: u32| -> &Vec<f64> {
            let i = ids.binary_search(&id).expect("pair ids come from the set");
            &coords[i]
        };
        let mut states = Vec::new();
        for matching in all_perfect_matchings(&ids) {
            let direct: f64 = matching
                .pairs()
                .iter()
                .map(|&(u, v)| dist_f(at(u), at(v)))
                .sum();
            if direct <= top {
                states.push(RawState {
                    closed: false,
                    matching: matching.clone(),
                    kappa: 0,
                    slot_sum: direct,
                    sigma: direct,
                    prov: Prov::Leaf { through: None },
                });
            }
            if let Some((loc, m)) = &bundle {
                // Cheapest single detour through the bundle, ties broken
                // by pair identity for determinism.
                let best = matching
                    .pairs()
                    .iter()
                    .map(|&(u, v)| {
                        let detour = dist_f(at(u), loc) + dist_f(loc, at(v));
                        let cost = direct - dist_f(at(u), at(v)) + detour;
                        (cost, (u, v))
                    })
                    .min_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
                if let Some((cost, pair)) = best {
                    if cost <= top {
                        states.push(RawState {
                            closed: false,
                            matching,
                            kappa: *m,
                            slot_sum: cost,
                            sigma: cost,
                            prov: Prov::Leaf {
                                through: Some(pair),
                            },
                        });
                    }
                }
            }
        }
        states
    });
    for mut states in per_set {
        out.append(&mut states);
    }
    stats.leaf_entries += out.len() as u64;
    Ok(out)
}

/// Number of perfect matchings on `m` labeled endpoints: `(m - 1)!!`.
fn perfect_matching_count(m: usize) -> u64 {
    let mut count: u64 = 1;
    let mut odd = 1;
    while odd < m as u64 {
        count = count.saturating_mul(odd);
        odd += 2;
    }
    count
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::derive_params;

    #[test]
    fn leaf_menu_shapes() {
        let points = vec![vec![4, 4], vec![4, 4]];
        let tree = Quadtree::build(&points, 2, 8, &[0, 0]).unwrap();
        assert!(tree.root().is_leaf());
        let params = derive_params(1.0, 2, 2, 8);
        let limits = DpLimits::desk_profile();
        let scheme = limits.effective_scheme(&params, 2);
        let interner = PortalInterner::build(&tree.cells, &scheme);
        let ladder = BudgetLadder::new(1.0, 2, 2, 2, 8).unwrap();
        let mut stats = DpStats::default();
        let states = leaf_states(
            &points, &tree, 0, &scheme, &interner, &ladder, &limits, &mut stats,
        )
        .unwrap();

        assert!(states
            .iter()
            .any(|s| !s.closed && s.matching.is_empty() && s.kappa == 0 && s.sigma == 0.0));
        assert!(states
            .iter()
            .any(|s| s.closed && s.kappa == 2 && s.sigma == 0.0));
        // Every open non-empty state is either a pure routing state or a
        // single detour that visits the whole bundle.
        for s in states.iter().filter(|s| !s.closed && !s.matching.is_empty()) {
            match s.prov {
                Prov::Leaf { through: None } => assert_eq!(s.kappa, 0),
                Prov::Leaf { through: Some(_) } => assert_eq!(s.kappa, 2),
                _ => panic!("leaf state with fold provenance"),
            }
            // Zero only for degenerate corner pairs (two facets meeting
            // in one geometric point).
            assert!(s.sigma >= 0.0);
            assert_eq!(s.slot_sum, s.sigma);
        }
        // Detour states must not be cheaper than their routing twin.
        for s in states.iter().filter(|s| s.kappa == 2 && !s.closed) {
            let twin = states
                .iter()
                .find(|t| !t.closed && t.kappa == 0 && t.matching == s.matching)
                .expect("routing twin exists");
            assert!(s.sigma >= twin.sigma - 1e-12);
        }
    }

    #[test]
    fn through_detour_picks_the_cheapest_pair() {
        // Bundle near one corner: the detour must attach to the closest
        // pair, not an arbitrary one.
        let points = vec![vec![1, 1]];
        let tree = Quadtree::build(&points, 2, 8, &[0, 0]).unwrap();
        let params = derive_params(1.0, 1, 2, 8);
        let limits = DpLimits::desk_profile();
        let scheme = limits.effective_scheme(&params, 2);
        let interner = PortalInterner::build(&tree.cells, &scheme);
        let ladder = BudgetLadder::new(1.0, 2, 2, 2, 8).unwrap();
        let mut stats = DpStats::default();
        let states = leaf_states(
            &points, &tree, 0, &scheme, &interner, &ladder, &limits, &mut stats,
        )
        .unwrap();
        for s in states.iter().filter(|s| s.kappa == 1) {
            if let Prov::Leaf {
                through: Some((u, v)),
            } = s.prov
            {
                // The chosen pair minimizes the added cost of detouring,
                // not the raw detour length.
                let loc = vec![1.0, 1.0];
                let delta = |a: u32, b: u32| {
                    let (pa, pb) = (interner.point(a), interner.point(b));
                    dist_f(&pa, &loc) + dist_f(&loc, &pb) - dist_f(&pa, &pb)
                };
                let chosen = delta(u, v);
                for &(a, b) in s.matching.pairs() {
                    assert!(chosen <= delta(a, b) + 1e-12);
                }
            } else {
                panic!("kappa=1 state without a detour");
            }
        }
    }
}
