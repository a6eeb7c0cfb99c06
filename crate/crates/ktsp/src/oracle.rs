//! Exact reference solvers used to validate the approximation pipeline.
//!
//! Everything in this module is deliberately independent of the production
//! code paths: straightforward exhaustive or textbook-DP implementations
//! whose only job is to be obviously correct on small inputs. Tests compare
//! solver output against these, never the other way around.

/// Convert integer grid points to float points for the reference solvers.
pub fn to_f64(points: &[Vec<i64>]) -> Vec<Vec<f64>> {
    points
        .iter()
        .map(|p| p.iter().map(|&c| c as f64).collect())
        .collect()
}

use crate::geometry::dist_f;

/// Exact shortest closed tour visiting at least `k` of the points, by
/// Held-Karp over (visited-set, last-point) states. Returns the cost and
/// one optimal visiting order. `None` when `k > n`. Capped at `n <= 16`.
///
/// By the triangle inequality a tour over more than `k` points can be
/// shortcut to any `k` of them without increasing cost, so scanning all
/// states with at least `k` points visited is exact.
pub fn exact_k_tsp(points: &[Vec<f64>], k: usize) -> Option<(f64, Vec<usize>)> {
    let n = points.len();
    if k > n {
        return None;
    }
    if k == 0 {
        return Some((0.0, Vec::new()));
    }
    if k == 1 {
        return Some((0.0, vec![0]));
    }
    assert!(n <= 16, "exact tour oracle capped at 16 points, got {n}");

    let dist = |i: usize, j: usize| dist_f(&points[i], &points[j]);
    let full = 1usize << n;
    let mut dp = vec![vec![f64::INFINITY; n]; full];
    let mut parent = vec![vec![u8::MAX; n]; full];
    for a in 0..n {
        dp[1 << a][a] = 0.0;
    }
    for mask in 1..full {
        let anchor = mask.trailing_zeros() as usize;
        for j in 0..n {
            let cur = dp[mask][j];
            if !cur.is_finite() {
                continue;
            }
            for t in (anchor + 1)..n {
                if mask & (1 << t) != 0 {
                    continue;
                }
                let cand = cur + dist(j, t);
                let next = mask | (1 << t);
                if cand < dp[next][t] {
                    dp[next][t] = cand;
                    parent[next][t] = j as u8;
                }
            }
        }
    }

    let mut best: Option<(f64, usize, usize)> = None;
    for mask in 1..full {
        if (mask.count_ones() as usize) < k {
            continue;
        }
        let anchor = mask.trailing_zeros() as usize;
        for j in 0..n {
            if mask & (1 << j) == 0 {
                continue;
            }
            let cost = dp[mask][j] + dist(j, anchor);
            if cost.is_finite() && best.map_or(true, |(b, _, _)| cost < b) {
                best = Some((cost, mask, j));
            }
        }
    }
    let (cost, mut mask, mut j) = best?;
    let mut order = vec![j];
    while mask.count_ones() > 1 {
        let pj = parent[mask][j] as usize;
        mask &= !(1 << j);
        j = pj;
        order.push(j);
    }
    order.reverse();
    Some((cost, order))
}

/// Exact minimal side of an axis-aligned cube containing at least `k`
/// points. Returns the side and the cube's low corner. `None` if `k > n`.
///
/// Some optimal cube has its low corner coordinates at point coordinates
/// and its side equal to a pairwise single-axis difference (shrink-wrap the
/// cube around the `k` points it contains), so searching that finite grid
/// of candidates is exact.
pub fn exact_k_cube(points: &[Vec<f64>], k: usize) -> Option<(f64, Vec<f64>)> {
    let n = points.len();
    if k > n || n == 0 {
        return None;
    }
    let d = points[0].len();
    if k <= 1 {
        return Some((0.0, points[0].clone()));
    }
    assert!(
        d == 2 || n <= 40,
        "exact cube oracle beyond 2 dimensions capped at 40 points"
    );

    let mut sides: Vec<f64> = vec![0.0];
    for i in 0..n {
        for j in (i + 1)..n {
            for axis in 0..d {
                sides.push((points[i][axis] - points[j][axis]).abs());
            }
        }
    }
    sides.sort_by(|a, b| a.partial_cmp(b).unwrap());
    sides.dedup();

    // Binary search the smallest feasible side over the candidate list.
    let (mut lo, mut hi) = (0usize, sides.len() - 1);
    if cube_witness(points, k, sides[hi]).is_none() {
        return None; // cannot happen for k <= n, but stay defensive
    }
    while lo < hi {
        let mid = (lo + hi) / 2;
        if cube_witness(points, k, sides[mid]).is_some() {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    let corner = cube_witness(points, k, sides[lo])?;
    Some((sides[lo], corner))
}

/// Low corner of some side-`s` cube containing at least `k` points, if any.
fn cube_witness(points: &[Vec<f64>], k: usize, s: f64) -> Option<Vec<f64>> {
    let d = points[0].len();
    if d == 2 {
        cube_witness_2d(points, k, s)
    } else {
        let n = points.len();
        let all: Vec<usize> = (0..n).collect();
        cube_witness_rec(points, k, s, 0, &all, &mut vec![0.0; d])
    }
}

fn cube_witness_2d(points: &[Vec<f64>], k: usize, s: f64) -> Option<Vec<f64>> {
    let n = points.len();
    let mut by_y: Vec<usize> = (0..n).collect();
    by_y.sort_by(|&a, &b| points[a][1].partial_cmp(&points[b][1]).unwrap());
    for anchor in 0..n {
        let x0 = points[anchor][0];
        // Members of the x-slab, in ascending y order. Containment is
        // checked in difference form so it is bit-identical to how the
        // candidate sides were computed.
        let slab: Vec<usize> = by_y
            .iter()
            .copied()
            .filter(|&i| points[i][0] >= x0 && points[i][0] - x0 <= s)
            .collect();
        if slab.len() < k {
            continue;
        }
        let mut hi = 0usize;
        for lo in 0..slab.len() {
            let y0 = points[slab[lo]][1];
            if hi < lo {
                hi = lo;
            }
            while hi + 1 < slab.len() && points[slab[hi + 1]][1] - y0 <= s {
                hi += 1;
            }
            if hi - lo + 1 >= k {
                return Some(vec![x0, y0]);
            }
        }
    }
    None
}

fn cube_witness_rec(
    points: &[Vec<f64>],
    k: usize,
    s: f64,
    axis: usize,
    alive: &[usize],
    corner: &mut Vec<f64>,
) -> Option<Vec<f64>> {
    if alive.len() < k {
        return None;
    }
    if axis == points[0].len() {
        return Some(corner.clone());
    }
    // Anchor this axis at each surviving point's coordinate.
    let mut anchors: Vec<f64> = alive.iter().map(|&i| points[i][axis]).collect();
    anchors.sort_by(|a, b| a.partial_cmp(b).unwrap());
    anchors.dedup();
    for a in anchors {
        let next: Vec<usize> = alive
            .iter()
            .copied()
            .filter(|&i| points[i][axis] >= a && points[i][axis] - a <= s)
            .collect();
        corner[axis] = a;
        if let Some(w) = cube_witness_rec(points, k, s, axis + 1, &next, corner) {
            return Some(w);
        }
    }
    None
}

/// Exact minimal radius of a disc containing at least `k` of the points
/// (two dimensions only). Returns the radius and center. `None` if `k > n`.
///
/// The minimal disc around the `k` points it contains is supported by one,
/// two (diametral), or three (circumcircle) of them, so its center is a
/// point, a pair midpoint, or a circumcenter; at each candidate center the
/// exact radius is the `k`-th smallest distance. Capped at `n <= 150`.
pub fn exact_k_ball_2d(points: &[Vec<f64>], k: usize) -> Option<(f64, [f64; 2])> {
    let n = points.len();
    if k > n || n == 0 {
        return None;
    }
    assert!(points[0].len() == 2, "disc oracle is two-dimensional");
    assert!(n <= 150, "exact disc oracle capped at 150 points, got {n}");
    if k == 0 {
        return Some((0.0, [points[0][0], points[0][1]]));
    }

    let mut centers: Vec<[f64; 2]> = Vec::new();
    for p in points {
        centers.push([p[0], p[1]]);
    }
    for i in 0..n {
        for j in (i + 1)..n {
            centers.push([
                (points[i][0] + points[j][0]) / 2.0,
                (points[i][1] + points[j][1]) / 2.0,
            ]);
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            for m in (j + 1)..n {
                if let Some(c) = circumcenter(&points[i], &points[j], &points[m]) {
                    centers.push(c);
                }
            }
        }
    }

    let mut best: Option<(f64, [f64; 2])> = None;
    let mut dists = vec![0.0f64; n];
    for c in centers {
        for (i, p) in points.iter().enumerate() {
            dists[i] = dist_f(p, &c);
        }
        let (_, kth, _) = dists.select_nth_unstable_by(k - 1, |a, b| a.partial_cmp(b).unwrap());
        let r = *kth;
        if best.map_or(true, |(b, _)| r < b) {
            best = Some((r, c));
        }
    }
    best
}

/// Circumcenter of a triangle; `None` when the points are (near) collinear,
/// in which case the diametral-pair candidates already cover the case.
fn circumcenter(a: &[f64], b: &[f64], c: &[f64]) -> Option<[f64; 2]> {
    let det = 2.0 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]));
    if det.abs() < 1e-12 {
        return None;
    }
    let a2 = a[0] * a[0] + a[1] * a[1];
    let b2 = b[0] * b[0] + b[1] * b[1];
    let c2 = c[0] * c[0] + c[1] * c[1];
    let ux = (a2 * (b[1] - c[1]) + b2 * (c[1] - a[1]) + c2 * (a[1] - b[1])) / det;
    let uy = (a2 * (c[0] - b[0]) + b2 * (a[0] - c[0]) + c2 * (b[0] - a[0])) / det;
    Some([ux, uy])
}

use crate::error::{Error, Result};
use crate::portals::{enumerate_fine_sets, validate_fine, PortalInterner, PortalKey, PortalScheme};
use crate::quadtree::Quadtree;
use crate::rankmatch::{all_perfect_matchings, Matching};
use crate::thresholds::BudgetLadder;
use std::collections::BTreeMap;

/// Every reachable cell state with its smallest ladder index, one table
/// per quadtree cell.
pub type UnreducedTables = Vec<BTreeMap<(bool, Matching, u64), usize>>;

/// Recompute the per-cell state tables by literal recursion: leaves
/// enumerate every crossing set and pairing, internal cells try all
/// child-state combinations in child order, and surviving crossings are
/// checked only at the end of each fold. No state is ever compressed,
/// pruned as dominated, or bucketed, so the result is the plain
/// semantics of the program the production tables must agree with.
///
/// Caps are resource aborts only: `state_cap` bounds any working table
/// and the crossing-set enumeration, `max_open_pairs` bounds exported
/// pairings exactly as in the production run it will be compared to.
pub fn unreduced_dp_recompute(
    points: &[Vec<i64>],
    tree: &Quadtree,
    scheme: &PortalScheme,
    interner: &PortalInterner,
    ladder: &BudgetLadder,
    max_open_pairs: usize,
    state_cap: usize,
) -> Result<UnreducedTables> {
    let top = *ladder.values.last().unwrap();
    let d = tree.d;
    let mid_pairs_cap = max_open_pairs << d;
    // Working values are threshold sums; indices are taken at export.
    let mut sums: Vec<BTreeMap<(bool, Matching, u64), f64>> =
        vec![BTreeMap::new(); tree.cells.len()];

    for &cid in &tree.post_order {
        let cell = &tree.cells[cid];
        let mut table: BTreeMap<(bool, Matching, u64), f64> = BTreeMap::new();
        let put = |t: &mut BTreeMap<(bool, Matching, u64), f64>,
                   key: (bool, Matching, u64),
                   sum: f64| {
            t.entry(key)
                .and_modify(|s| *s = s.min(sum))
                .or_insert(sum);
        };

        if cell.is_leaf() {
            table.insert((false, Matching::empty(), 0), 0.0);
            let bundle: Vec<usize> = cell.points.clone();
            let m = bundle.len() as u64;
            let loc: Option<Vec<f64>> = bundle
                .first()
                .map(|&i| points[i].iter().map(|&c| c as f64).collect());
            if m >= 2 {
                table.insert((true, Matching::empty(), m), 0.0);
            }
            for set in enumerate_fine_sets(scheme, cell, interner, state_cap)? {
                if set.is_empty() || set.len() % 2 != 0 || set.len() / 2 > max_open_pairs {
                    continue;
                }
                for pairing in all_perfect_matchings(&set) {
                    let direct: f64 = pairing
                        .pairs()
                        .iter()
                        .map(|&(u, v)| dist_f(&interner.point(u), &interner.point(v)))
                        .sum();
                    if direct <= top {
                        put(&mut table, (false, pairing.clone(), 0), direct);
                    }
                    if let Some(loc) = &loc {
                        let detour = pairing
                            .pairs()
                            .iter()
                            .map(|&(u, v)| {
                                let pu = interner.point(u);
                                let pv = interner.point(v);
                                dist_f(&pu, loc) + dist_f(loc, &pv) - dist_f(&pu, &pv)
                            })
                            .fold(f64::INFINITY, f64::min);
                        if direct + detour <= top {
                            put(&mut table, (false, pairing, m), direct + detour);
                        }
                    }
                }
            }
        } else {
            let g = scheme.g_max;
            // A crossing not on the parent's own boundary must be paired
            // inside this fold; once no remaining child touches its
            // position, a state still holding it open can never finish.
            let hosted_by = |id: u32, children: &[usize]| -> bool {
                let key = interner.key(id);
                let ax = key.axis as usize;
                children.iter().any(|&cc| {
                    let ch = &tree.cells[cc];
                    (key.plane_sc == ch.lo2[ax] * g || key.plane_sc == ch.hi2(ax) * g)
                        && key
                            .pos_sc
                            .iter()
                            .zip((0..d).filter(|&j| j != ax))
                            .all(|(&q, j)| ch.lo2[j] * g <= q && q <= ch.hi2(j) * g)
                })
            };
            let on_parent_boundary = |id: u32| -> bool {
                let key = interner.key(id);
                let ax = key.axis as usize;
                key.plane_sc == cell.lo2[ax] * g || key.plane_sc == cell.hi2(ax) * g
            };
            let mut running: BTreeMap<(bool, Matching, u64), f64> = BTreeMap::new();
            running.insert((false, Matching::empty(), 0), 0.0);
            for (ci, &child) in cell.children.iter().enumerate() {
                let remaining = &cell.children[ci + 1..];
                // Evaluated once per portal id instead of once per state
                // pair. An id no remaining child hosts is frozen: it can
                // never gain a second endpoint, so it either survives to
                // the export (parent boundary) or kills the state.
                let frozen: Vec<bool> = (0..interner.len() as u32)
                    .map(|id| !hosted_by(id, remaining))
                    .collect();
                let survivable: Vec<bool> = (0..interner.len() as u32)
                    .map(|id| on_parent_boundary(id) || !frozen[id as usize])
                    .collect();
                let rounded: Vec<(&(bool, Matching, u64), f64)> = sums[child]
                    .iter()
                    .map(|(key, slot)| {
                        let csum = ladder.values[ladder
                            .round_up_index(*slot)
                            .expect("child sum within ladder")];
                        (key, csum)
                    })
                    .collect();
                let mut next: BTreeMap<(bool, Matching, u64), f64> = BTreeMap::new();
                for ((rc, rm, rk), rsum) in &running {
                    for ((cc, cm, ck), csum) in &rounded {
                        let csum = *csum;
                        let (nc, nm, nk) = if *rc && *cc {
                            continue;
                        } else if *rc {
                            if !cm.is_empty() || *ck != 0 {
                                continue;
                            }
                            (true, Matching::empty(), *rk)
                        } else if *cc {
                            if !rm.is_empty() || *rk != 0 {
                                continue;
                            }
                            (true, Matching::empty(), *ck)
                        } else {
                            match graph_join(rm, cm) {
                                GraphJoin::Open(m2) => (false, m2, rk + ck),
                                GraphJoin::SingleCycle => {
                                    (true, Matching::empty(), rk + ck)
                                }
                                GraphJoin::Torn => continue,
                            }
                        };
                        if nm.pairs().len() > mid_pairs_cap {
                            continue;
                        }
                        if nm.universe().iter().any(|&id| !survivable[id as usize]) {
                            continue;
                        }
                        // Frozen opens all reach the export, which caps the
                        // pairing width; states past that bound are dead
                        // weight and dropping them cannot change any table.
                        let frozen_open = nm
                            .universe()
                            .iter()
                            .filter(|&&id| frozen[id as usize])
                            .count();
                        if frozen_open > 2 * max_open_pairs {
                            continue;
                        }
                        let sum = rsum + csum;
                        if sum > top {
                            continue;
                        }
                        put(&mut next, (nc, nm, nk), sum);
                        if next.len() > state_cap {
                            return Err(Error::CapExceeded(format!(
                                "recompute table grew past {state_cap} states"
                            )));
                        }
                    }
                }
                running = next;
                if std::env::var_os("KTSP_DP_TRACE").is_some() {
                    eprintln!(
                        "recompute cell {cid} child {ci}: child_states={} running={}",
                        sums[child].len(),
                        running.len()
                    );
                }
            }
            for ((closed, m, kappa), sum) in running {
                if !closed && !m.is_empty() {
                    if m.pairs().len() > max_open_pairs {
                        continue;
                    }
                    let on_boundary = m.universe().iter().all(|&id| {
                        let key = interner.key(id);
                        let ax = key.axis as usize;
                        key.plane_sc == cell.lo2[ax] * scheme.g_max
                            || key.plane_sc == cell.hi2(ax) * scheme.g_max
                    });
                    if !on_boundary {
                        continue;
                    }
                    let keys: Vec<&PortalKey> =
                        m.universe().iter().map(|&id| interner.key(id)).collect();
                    if !validate_fine(scheme, cell, &keys) {
                        continue;
                    }
                }
                put(&mut table, (closed, m, kappa), sum);
            }
        }
        sums[cid] = table;
    }

    Ok(sums
        .into_iter()
        .map(|t| {
            t.into_iter()
                .filter_map(|(k, sum)| ladder.round_up_index(sum).map(|s| (k, s)))
                .collect()
        })
        .collect())
}

enum GraphJoin {
    Open(Matching),
    SingleCycle,
    Torn,
}

/// Join two pairings by treating every pair as an edge and walking the
/// resulting degree-<=2 graph: paths become new pairs of their
/// endpoints, one all-consuming cycle closes the tour, and any other
/// cycle is a dead merge.
fn graph_join(a: &Matching, b: &Matching) -> GraphJoin {
    let edges: Vec<(u32, u32)> = a.pairs().iter().chain(b.pairs()).copied().collect();
    let mut adj: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, &(u, v)) in edges.iter().enumerate() {
        adj.entry(u).or_default().push(i);
        adj.entry(v).or_default().push(i);
    }
    if adj.values().any(|uses| uses.len() > 2) {
        return GraphJoin::Torn;
    }
    let mut used = vec![false; edges.len()];
    let mut out: Vec<(u32, u32)> = Vec::new();
    // Trace maximal paths from every endpoint of odd degree.
    for (&start, uses) in &adj {
        if uses.len() != 1 || used[uses[0]] {
            continue;
        }
        let mut node = start;
        let mut edge = uses[0];
        loop {
            used[edge] = true;
            let (u, v) = edges[edge];
            node = if u == node { v } else { u };
            match adj[&node].iter().find(|&&e| !used[e]) {
                Some(&e) => edge = e,
                None => break,
            }
        }
        out.push((start, node));
    }
    if used.iter().all(|&u| u) {
        return GraphJoin::Open(Matching::new(out));
    }
    // Leftover edges form cycles.
    if out.is_empty() && {
        // Walk one cycle and see whether it consumes everything.
        let first = used.iter().position(|&u| !u).unwrap();
        let mut node = edges[first].0;
        let mut edge = first;
        let mut count = 0;
        loop {
            used[edge] = true;
            count += 1;
            let (u, v) = edges[edge];
            node = if u == node { v } else { u };
            match adj[&node].iter().find(|&&e| !used[e]) {
                Some(&e) => edge = e,
                None => break,
            }
        }
        count == edges.len()
    } {
        GraphJoin::SingleCycle
    } else {
        GraphJoin::Torn
    }
}
