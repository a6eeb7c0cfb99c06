//! Budget-threshold dynamic program over portal-pairing states.
//!
//! The quadtree is processed bottom-up. Every cell yields a table of
//! states, each recording how tour fragments inside the cell pair up the
//! portal crossings on its boundary (or that a complete closed tour lies
//! inside), how many points those fragments visit, a threshold index on
//! the budget ladder, and the exact cost of the cheapest known
//! realization. Leaves enumerate their states directly; internal cells
//! fold the tables of their `2^d` children, consuming matched crossings
//! on the internal walls and validating the surviving crossings against
//! the cell's own portal discipline.
//!
//! Thresholds and exact costs ride together: the threshold chain (child
//! threshold values summed, then rounded up once per level) bounds the
//! search and decides pruning, while the exact chain picks which
//! realization to keep, so the reported tour never pays for rounding.
//! Per crossing set, the exported table is compressed by the GF(2) rank
//! reduction, which preserves the best reachable visit count against
//! every possible complement.

mod fold;
mod leaf;
mod reconstruct;

pub use reconstruct::{reconstruct_tour, SubTour};

use crate::error::Result;
use crate::geometry::Params;
use crate::par;
use crate::portals::{PortalInterner, PortalScheme};
use crate::quadtree::Quadtree;
use crate::rankmatch::{reduce, Matching};
use crate::thresholds::BudgetLadder;
use std::collections::{BTreeMap, BTreeSet};

/// Resource knobs for one DP run. The defaults keep full fidelity within
/// the reduction's hard width cap; [`DpLimits::desk_profile`] trades
/// portal density for speed and is what the batch solver starts from.
#[derive(Debug, Clone)]
pub struct DpLimits {
    /// Cap on the single-crossing portal density parameter.
    pub m_tilde_cap: Option<u64>,
    /// Cap on the budget shared by all crossings of one facet.
    pub grid_cap_eff: Option<u64>,
    /// Cap on how often one facet may be crossed.
    pub facet_cap_eff: Option<u32>,
    /// Cap on boundary pairs per exported state.
    pub max_open_pairs: usize,
    /// Resource abort when a cell's working table grows past this.
    pub max_states_per_cell: usize,
    /// Resource abort when a cell admits more crossing sets than this.
    pub max_fine_sets: usize,
    /// Multiplier on the snap pitch used by the surrounding solver.
    pub rho_scale: f64,
    /// Per-axis cap on the quadtree shifts the derandomized solver tries.
    pub shift_axis_cap: usize,
}

impl Default for DpLimits {
    fn default() -> Self {
        DpLimits {
            m_tilde_cap: None,
            grid_cap_eff: None,
            facet_cap_eff: None,
            max_open_pairs: 8,
            max_states_per_cell: 400_000,
            max_fine_sets: 100_000,
            rho_scale: 1.0,
            shift_axis_cap: usize::MAX,
        }
    }
}

impl DpLimits {
    /// Coarse settings sized for interactive runs on a workstation:
    /// two portal positions per axis, single crossings per facet, a
    /// widened snap pitch and only a couple of shifts per axis. The
    /// exact-cost chain keeps reported tours honest at this density;
    /// [`DpLimits::bumped`] escalates towards the full scheme.
    pub fn desk_profile() -> Self {
        DpLimits {
            m_tilde_cap: Some(2),
            grid_cap_eff: Some(3),
            facet_cap_eff: Some(2),
            max_open_pairs: 4,
            max_states_per_cell: 200_000,
            max_fine_sets: 20_000,
            rho_scale: 4.0,
            shift_axis_cap: 2,
        }
    }

    /// Deterministically relax every cap one notch; used by the solver
    /// when a run comes back infeasible under the current caps.
    ///
    /// Capacity knobs (states, crossing sets, pairs, shifts) keep
    /// growing, but portal density saturates one notch above the desk
    /// profile: the leaf menu grows factorially in the crossings per
    /// facet, so widening the scheme further buys accuracy the exact-cost
    /// chain already provides at a cost no retry loop should pay.
    pub fn bumped(&self) -> Self {
        let grow = |v: u64, ceiling: u64| v.saturating_mul(2).min(v.max(ceiling));
        DpLimits {
            m_tilde_cap: self.m_tilde_cap.map(|m| grow(m, 4)),
            grid_cap_eff: self.grid_cap_eff.map(|g| grow(g, 6)),
            facet_cap_eff: self.facet_cap_eff.map(|f| (f + 1).min(f.max(3))),
            max_open_pairs: (self.max_open_pairs + 2).min(8),
            max_states_per_cell: self.max_states_per_cell.saturating_mul(2),
            max_fine_sets: self.max_fine_sets.saturating_mul(4),
            rho_scale: (self.rho_scale / 2.0).max(1.0),
            shift_axis_cap: self.shift_axis_cap.saturating_add(1),
        }
    }

    /// Portal scheme for these limits: the derived densities, clamped.
    pub fn effective_scheme(&self, params: &Params, d: usize) -> PortalScheme {
        let m = params
            .m_tilde
            .min(self.m_tilde_cap.unwrap_or(u64::MAX))
            .max(1);
        let gc = params
            .grid_cap
            .min(self.grid_cap_eff.unwrap_or(u64::MAX))
            .max(1);
        let fc = params
            .facet_cross_cap
            .min(self.facet_cap_eff.unwrap_or(u32::MAX) as u64)
            .max(1) as u32;
        PortalScheme::new(d, m, gc, fc)
    }
}

/// How an exported entry was realized; enough to rebuild the tour.
#[derive(Debug, Clone)]
pub enum Prov {
    /// Leaf realization; `through` names the pair whose fragment detours
    /// through the cell's point bundle, if any.
    Leaf { through: Option<(u32, u32)> },
    /// One exported entry per child, in child order.
    Fold { children: Vec<(usize, usize)> },
}

/// One exported cell state.
#[derive(Debug, Clone)]
pub struct Entry {
    /// A complete closed tour lies inside this cell.
    pub closed: bool,
    /// Pairing of the boundary crossings (empty when closed).
    pub matching: Matching,
    /// Points visited inside the cell.
    pub kappa: u64,
    /// Budget-ladder index of the threshold chain.
    pub slot: usize,
    /// Exact cost of the cheapest known realization.
    pub sigma: f64,
    pub prov: Prov,
}

/// Exported table of one cell, indexed by entry position.
#[derive(Debug, Clone, Default)]
pub struct CellExport {
    pub entries: Vec<Entry>,
}

/// Chosen root entry.
#[derive(Debug, Clone, Copy)]
pub struct RootAnswer {
    pub entry: usize,
    pub slot_value: f64,
    pub sigma: f64,
    pub kappa: u64,
}

/// Work counters for one run.
#[derive(Debug, Clone, Copy, Default)]
pub struct DpStats {
    pub cells: usize,
    pub leaf_entries: u64,
    pub exported_entries: u64,
    pub joins: u64,
    pub peak_running_states: usize,
    pub dropped_over_budget: u64,
    pub reduce_calls: u64,
}

/// Everything one DP run produces: per-cell exports, the chosen root
/// entry when one exists, and work counters.
#[derive(Debug, Clone)]
pub struct DpRun {
    pub exports: Vec<CellExport>,
    pub answer: Option<RootAnswer>,
    pub stats: DpStats,
}

/// Working state before export; threshold and exact chains are tracked
/// independently (each the minimum over realizations of this key).
#[derive(Debug, Clone)]
pub struct RawState {
    pub closed: bool,
    pub matching: Matching,
    pub kappa: u64,
    /// Sum of child threshold values along the cheapest threshold chain.
    pub slot_sum: f64,
    /// Exact cost along the cheapest exact chain.
    pub sigma: f64,
    pub prov: Prov,
}

/// Run the full bottom-up DP for one tree. `points` are the coordinates
/// behind the tree's point indices; `k` is the visit target at the root.
pub fn run_dp(
    points: &[Vec<i64>],
    tree: &Quadtree,
    scheme: &PortalScheme,
    interner: &PortalInterner,
    ladder: &BudgetLadder,
    k: u64,
    limits: &DpLimits,
) -> Result<DpRun> {
    Ok(run_dp_inner(points, tree, scheme, interner, ladder, k, limits, false)?.0)
}

/// [`run_dp`], but also return every cell's working table as produced by
/// leaf enumeration or folding, before deduplication and the rank
/// reduction. Diagnostic: lets callers check that specific realizations
/// exist at specific thresholds, which the compressed exports cannot
/// answer entry-by-entry.
pub fn run_dp_with_tables(
    points: &[Vec<i64>],
    tree: &Quadtree,
    scheme: &PortalScheme,
    interner: &PortalInterner,
    ladder: &BudgetLadder,
    k: u64,
    limits: &DpLimits,
) -> Result<(DpRun, Vec<Vec<RawState>>)> {
    run_dp_inner(points, tree, scheme, interner, ladder, k, limits, true)
}

#[allow(clippy::too_many_arguments)]
fn run_dp_inner(
    points: &[Vec<i64>],
    tree: &Quadtree,
    scheme: &PortalScheme,
    interner: &PortalInterner,
    ladder: &BudgetLadder,
    k: u64,
    limits: &DpLimits,
    keep_tables: bool,
) -> Result<(DpRun, Vec<Vec<RawState>>)> {
    let mut exports: Vec<CellExport> = vec![CellExport::default(); tree.cells.len()];
    let mut tables: Vec<Vec<RawState>> = vec![Vec::new(); tree.cells.len()];
    let mut stats = DpStats {
        cells: tree.cells.len(),
        ..DpStats::default()
    };
    for &cid in &tree.post_order {
        let raw = if tree.cells[cid].is_leaf() {
            leaf::leaf_states(points, tree, cid, scheme, interner, ladder, limits, &mut stats)?
        } else {
            fold::fold_cell(
                points, tree, cid, scheme, interner, ladder, limits, &exports, &mut stats,
            )?
        };
        if keep_tables {
            tables[cid] = raw.clone();
        }
        exports[cid] = build_export(raw, ladder, &mut stats)?;
    }

    let mut answer: Option<RootAnswer> = None;
    for (i, e) in exports[0].entries.iter().enumerate() {
        if !e.closed || e.kappa < k {
            continue;
        }
        let cand = RootAnswer {
            entry: i,
            slot_value: ladder.values[e.slot],
            sigma: e.sigma,
            kappa: e.kappa,
        };
        let better = match &answer {
            None => true,
            Some(a) => (cand.sigma, cand.slot_value) < (a.sigma, a.slot_value),
        };
        if better {
            answer = Some(cand);
        }
    }
    Ok((
        DpRun {
            exports,
            answer,
            stats,
        },
        tables,
    ))
}

/// Dedup raw states, prune dominated variants, and compress each
/// crossing-set group through the rank reduction.
///
/// Entries are grouped by crossing set and swept in threshold order;
/// an entry is exported when the reduction retains its row at insertion.
/// Later batches may displace earlier rows from the running basis, but
/// anything once retained stays exported, so for every threshold the
/// exported prefix still answers every complement query exactly.
fn build_export(
    raw: Vec<RawState>,
    ladder: &BudgetLadder,
    stats: &mut DpStats,
) -> Result<CellExport> {
    // (closed, matching, kappa) -> (min slot chain, min exact chain + prov).
    type Key = (bool, Matching, u64);
    let mut best: BTreeMap<Key, (usize, f64, Prov)> = BTreeMap::new();
    for st in raw {
        let Some(slot) = ladder.round_up_index(st.slot_sum) else {
            stats.dropped_over_budget += 1;
            continue;
        };
        match best.entry((st.closed, st.matching, st.kappa)) {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert((slot, st.sigma, st.prov));
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                let cur = o.get_mut();
                cur.0 = cur.0.min(slot);
                if st.sigma < cur.1 {
                    cur.1 = st.sigma;
                    cur.2 = st.prov;
                }
            }
        }
    }

    // Per pairing: drop variants beaten on all three axes by a higher
    // visit count.
    let mut per_matching: BTreeMap<(bool, Matching), Vec<(u64, usize, f64, Prov)>> =
        BTreeMap::new();
    for ((closed, m, kappa), (slot, sigma, prov)) in best {
        per_matching
            .entry((closed, m))
            .or_default()
            .push((kappa, slot, sigma, prov));
    }
    let mut entries: Vec<Entry> = Vec::new();
    let mut open_groups: BTreeMap<Vec<u32>, Vec<Entry>> = BTreeMap::new();
    for ((closed, matching), mut variants) in per_matching {
        variants.sort_by(|a, b| {
            b.0.cmp(&a.0)
                .then(a.1.cmp(&b.1))
                .then(a.2.partial_cmp(&b.2).unwrap())
        });
        let mut kept: Vec<(u64, usize, f64, Prov)> = Vec::new();
        for v in variants {
            let dominated = kept
                .iter()
                .any(|k| k.0 >= v.0 && k.1 <= v.1 && k.2 <= v.2);
            if !dominated {
                kept.push(v);
            }
        }
        for (kappa, slot, sigma, prov) in kept {
            let e = Entry {
                closed,
                matching: matching.clone(),
                kappa,
                slot,
                sigma,
                prov,
            };
            if closed {
                entries.push(e);
            } else {
                open_groups.entry(matching.universe()).or_default().push(e);
            }
        }
    }
    entries.sort_by(|a, b| {
        b.kappa
            .cmp(&a.kappa)
            .then(a.slot.cmp(&b.slot))
            .then(a.sigma.partial_cmp(&b.sigma).unwrap())
    });

    // Threshold sweep with incremental reduction, per crossing set.
    let groups: Vec<(Vec<u32>, Vec<Entry>)> = open_groups.into_iter().collect();
    let swept: Vec<Result<Vec<Entry>>> = par::map_vec(groups, |(_, mut group)| {
        group.sort_by(|a, b| {
            a.slot
                .cmp(&b.slot)
                .then(a.matching.cmp(&b.matching))
                .then(a.kappa.cmp(&b.kappa))
        });
        let mut basis: Vec<(Matching, u64)> = Vec::new();
        let mut out: Vec<Entry> = Vec::new();
        let mut i = 0;
        while i < group.len() {
            let mut j = i;
            while j < group.len() && group[j].slot == group[i].slot {
                j += 1;
            }
            let mut rows = basis.clone();
            rows.extend(
                group[i..j]
                    .iter()
                    .map(|e| (e.matching.clone(), e.kappa)),
            );
            let reduced = reduce(rows)?;
            let retained: BTreeSet<(Matching, u64)> = reduced.iter().cloned().collect();
            for e in &group[i..j] {
                if retained.contains(&(e.matching.clone(), e.kappa)) {
                    out.push(e.clone());
                }
            }
            basis = reduced;
            i = j;
        }
        Ok(out)
    });
    for res in swept {
        let mut kept = res?;
        stats.reduce_calls += 1;
        entries.append(&mut kept);
    }
    stats.exported_entries += entries.len() as u64;
    Ok(CellExport { entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::derive_params;
    use crate::oracle::exact_k_tsp;
    use crate::portals::PortalInterner;
    use crate::quadtree::Quadtree;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup(
        points: &[Vec<i64>],
        l: i64,
        shift: &[i64],
        epsilon: f64,
        n_orig: usize,
        k: usize,
        limits: &DpLimits,
    ) -> (Quadtree, PortalScheme, PortalInterner, BudgetLadder) {
        let d = points[0].len();
        let tree = Quadtree::build(points, d, l, shift).unwrap();
        let params = derive_params(epsilon, n_orig, d, l);
        let scheme = limits.effective_scheme(&params, d);
        let interner = PortalInterner::build(&tree.cells, &scheme);
        let ladder = BudgetLadder::new(epsilon, n_orig, d, k, l).unwrap();
        (tree, scheme, interner, ladder)
    }

    #[test]
    fn two_points_across_a_wall() {
        // One point per side of the root split; the only way to close a
        // tour is two crossings of the internal wall.
        let points = vec![vec![0, 8], vec![16, 8]];
        let limits = DpLimits::desk_profile();
        let (tree, scheme, interner, ladder) =
            setup(&points, 16, &[1, 1], 1.0, 2, 2, &limits);
        assert_eq!(tree.cells.len(), 5, "root plus four leaves");
        let run = run_dp(&points, &tree, &scheme, &interner, &ladder, 2, &limits).unwrap();
        let ans = run.answer.expect("a closed tour must exist");
        assert_eq!(ans.kappa, 2);
        // The portal detour costs more than the direct tour, but the
        // threshold stays above the exact chain.
        assert!(ans.sigma >= 32.0 - 1e-9, "sigma {}", ans.sigma);
        assert!(ans.slot_value >= ans.sigma);
        let tour = reconstruct_tour(&points, &tree, &run.exports, 0, ans.entry).unwrap();
        assert_eq!(tour.kappa, 2);
        let mut order = tour.order.clone();
        order.sort_unstable();
        assert_eq!(order, vec![0, 1]);
        // Dropping the portals leaves the direct two-point tour.
        assert!((tour.cost - 32.0).abs() < 1e-9, "cost {}", tour.cost);
        assert!(tour.cost <= ans.sigma + 1e-9);
    }

    #[test]
    fn coincident_bundle_costs_nothing() {
        let points = vec![vec![4, 4], vec![4, 4], vec![4, 4]];
        let limits = DpLimits::desk_profile();
        let (tree, scheme, interner, ladder) = setup(&points, 8, &[0, 0], 1.0, 3, 3, &limits);
        assert_eq!(tree.cells.len(), 1, "a single bundle never splits");
        let run = run_dp(&points, &tree, &scheme, &interner, &ladder, 3, &limits).unwrap();
        let ans = run.answer.expect("bundle tour");
        assert_eq!(ans.kappa, 3);
        assert_eq!(ans.sigma, 0.0);
        assert_eq!(ans.slot_value, 0.0);
        let tour = reconstruct_tour(&points, &tree, &run.exports, 0, ans.entry).unwrap();
        assert_eq!(tour.kappa, 3);
        assert_eq!(tour.cost, 0.0);
    }

    #[test]
    fn found_tours_are_valid_and_close_to_exact() {
        // The reconstructed tour is a real tour over real points, so its
        // cost can never beat the exact optimum; with portals this dense
        // it also lands within a modest factor of it.
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for trial in 0..6 {
            let n = 3 + (trial % 3);
            let k = 2 + (trial % 2);
            let points: Vec<Vec<i64>> = (0..n)
                .map(|_| vec![rng.gen_range(0..=32), rng.gen_range(0..=32)])
                .collect();
            let (exact, _) = exact_k_tsp(&crate::oracle::to_f64(&points), k).unwrap();
            let limits = DpLimits::desk_profile();
            let (tree, scheme, interner, ladder) =
                setup(&points, 32, &[1, 1], 1.0, n, k, &limits);
            let run =
                run_dp(&points, &tree, &scheme, &interner, &ladder, k as u64, &limits).unwrap();
            let ans = run
                .answer
                .unwrap_or_else(|| panic!("trial {trial}: no tour found"));
            let tour = reconstruct_tour(&points, &tree, &run.exports, 0, ans.entry).unwrap();
            assert!(tour.kappa >= k as u64);
            assert!(
                tour.cost >= exact - 1e-6,
                "trial {trial}: tour {} beats exact {exact}",
                tour.cost
            );
            assert!(
                tour.cost <= exact * 3.0 + 1e-6,
                "trial {trial}: tour {} vs exact {exact}",
                tour.cost
            );
        }
    }

    #[test]
    fn runs_are_deterministic() {
        let points = vec![vec![2, 3], vec![29, 7], vec![11, 30], vec![24, 22]];
        let limits = DpLimits::desk_profile();
        let (tree, scheme, interner, ladder) = setup(&points, 32, &[0, 1], 0.5, 4, 3, &limits);
        let a = run_dp(&points, &tree, &scheme, &interner, &ladder, 3, &limits).unwrap();
        let b = run_dp(&points, &tree, &scheme, &interner, &ladder, 3, &limits).unwrap();
        assert_eq!(a.exports.len(), b.exports.len());
        for (ea, eb) in a.exports.iter().zip(&b.exports) {
            assert_eq!(ea.entries.len(), eb.entries.len());
            for (x, y) in ea.entries.iter().zip(&eb.entries) {
                assert_eq!(x.matching, y.matching);
                assert_eq!(x.kappa, y.kappa);
                assert_eq!(x.slot, y.slot);
                assert_eq!(x.sigma.to_bits(), y.sigma.to_bits());
            }
        }
        let (x, y) = (a.answer.unwrap(), b.answer.unwrap());
        assert_eq!(x.entry, y.entry);
        assert_eq!(x.sigma.to_bits(), y.sigma.to_bits());
    }

    #[test]
    fn every_cell_exports_a_pass_through_state() {
        // Tours must be able to route through empty space, so every cell
        // (and in particular every empty leaf) keeps the "untouched"
        // state and open portal-to-portal states.
        let points = vec![vec![0, 8], vec![16, 8]];
        let limits = DpLimits::desk_profile();
        let (tree, scheme, interner, ladder) =
            setup(&points, 16, &[1, 1], 1.0, 2, 2, &limits);
        let run = run_dp(&points, &tree, &scheme, &interner, &ladder, 2, &limits).unwrap();
        for (cid, export) in run.exports.iter().enumerate() {
            let pass = export
                .entries
                .iter()
                .any(|e| !e.closed && e.matching.is_empty() && e.kappa == 0 && e.sigma == 0.0);
            assert!(pass, "cell {cid} lost its pass-through state");
        }
        let empty_leaf = tree
            .cells
            .iter()
            .position(|c| c.is_leaf() && c.points.is_empty())
            .expect("two corners of the root are empty");
        let open_routes = run.exports[empty_leaf]
            .entries
            .iter()
            .filter(|e| !e.closed && !e.matching.is_empty())
            .count();
        assert!(open_routes > 0, "empty leaf must offer routing states");
    }
}
