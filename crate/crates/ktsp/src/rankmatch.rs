//! Pairings of boundary crossings and their rank-based compression.
//!
//! A cell's DP state records how tour fragments pair up the crossing
//! points on its boundary. Two complementary pairings `a` and `b` of the
//! same crossing set are compatible (`fits`) when their union is a single
//! cycle. The key algebraic fact: over GF(2), encode each pairing by which
//! "consistent cuts" of the crossing set it respects; then `fits(a, b)`
//! equals the inner product of the two encodings, because the number of
//! common consistent cuts is `2^(cycles - 1)`. Keeping only a row basis of
//! those encodings (highest value first) therefore preserves, for every
//! possible complement, the best value among compatible entries — that is
//! [`reduce`]'s contract, and it caps surviving entries at `2^(|B| - 1)`
//! instead of the roughly `(|B| - 1)!!` distinct pairings.

use crate::error::{Error, Result};

/// A perfect pairing of an even set of crossing identifiers.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Matching {
    pairs: Vec<(u32, u32)>,
}

impl Matching {
    pub fn new(pairs: Vec<(u32, u32)>) -> Self {
        let mut pairs: Vec<(u32, u32)> = pairs
            .into_iter()
            .map(|(a, b)| (a.min(b), a.max(b)))
            .collect();
        pairs.sort_unstable();
        let m = Matching { pairs };
        debug_assert!(
            {
                let u = m.universe();
                u.windows(2).all(|w| w[0] != w[1])
            },
            "pairing reuses an identifier: {m:?}"
        );
        m
    }

    pub fn empty() -> Self {
        Matching { pairs: Vec::new() }
    }

    pub fn pairs(&self) -> &[(u32, u32)] {
        &self.pairs
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// All identifiers, ascending.
    pub fn universe(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self
            .pairs
            .iter()
            .flat_map(|&(a, b)| [a, b])
            .collect();
        ids.sort_unstable();
        ids
    }

    fn partner_map(&self) -> std::collections::BTreeMap<u32, u32> {
        self.pairs
            .iter()
            .flat_map(|&(a, b)| [(a, b), (b, a)])
            .collect()
    }
}

/// Outcome of merging two pairings with overlapping identifier sets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum JoinOutcome {
    /// Shared identifiers consumed; the induced pairing on the rest.
    Open(Matching),
    /// Everything consumed by one cycle through all identifiers: a tour.
    Closed,
    /// A premature sub-cycle formed; the combination is invalid.
    Bot,
}

/// Merge two pairings. Identifiers present in both are consumed by path
/// following; identifiers in exactly one remain as the open pairing.
/// Any cycle that does not swallow the entire identifier set is invalid.
pub fn join(a: &Matching, b: &Matching) -> JoinOutcome {
    let map_a = a.partner_map();
    let map_b = b.partner_map();
    let shared: Vec<u32> = map_a
        .keys()
        .filter(|id| map_b.contains_key(id))
        .copied()
        .collect();
    let mut external: Vec<u32> = map_a
        .keys()
        .chain(map_b.keys())
        .filter(|id| map_a.contains_key(id) != map_b.contains_key(id))
        .copied()
        .collect();
    // The two key streams are each sorted but their concatenation is
    // not, and the walk below relies on binary search.
    external.sort_unstable();

    let mut visited = std::collections::BTreeSet::new();
    let mut result = Vec::new();
    for &start in &external {
        if visited.contains(&start) {
            continue;
        }
        visited.insert(start);
        let mut in_a = map_a.contains_key(&start);
        let mut cur = start;
        loop {
            let next = if in_a { map_a[&cur] } else { map_b[&cur] };
            visited.insert(next);
            if external.binary_search(&next).is_ok() {
                result.push((start, next));
                break;
            }
            // Interior node: arrive by one side's edge, leave by the other.
            in_a = !in_a;
            cur = next;
        }
    }
    if shared.iter().any(|id| !visited.contains(id)) {
        // Some interior identifiers sit on cycles never reached from an
        // open endpoint.
        if external.is_empty() {
            // Entire universes coincide: count the cycles.
            let mut cycles = 0;
            for &start in &shared {
                if visited.contains(&start) {
                    continue;
                }
                cycles += 1;
                let mut cur = start;
                let mut in_a = true;
                loop {
                    visited.insert(cur);
                    let next = if in_a { map_a[&cur] } else { map_b[&cur] };
                    in_a = !in_a;
                    cur = next;
                    if cur == start && in_a {
                        break;
                    }
                }
            }
            if cycles == 1 {
                return JoinOutcome::Closed;
            }
        }
        return JoinOutcome::Bot;
    }
    JoinOutcome::Open(Matching::new(result))
}

/// Do two pairings of the same identifier set close into a single tour?
pub fn fits(a: &Matching, b: &Matching) -> bool {
    debug_assert_eq!(a.universe(), b.universe(), "fits needs equal universes");
    if a.is_empty() {
        return false;
    }
    join(a, b) == JoinOutcome::Closed
}

/// Best value among entries compatible with `target`, if any.
pub fn opt_of(entries: &[(Matching, u64)], target: &Matching) -> Option<u64> {
    entries
        .iter()
        .filter(|(m, _)| fits(m, target))
        .map(|&(_, v)| v)
        .max()
}

/// GF(2) encoding of a pairing over the consistent cuts of its universe.
///
/// A cut is a subset containing the first identifier; it is consistent
/// when no pair straddles it. Bit `x` of the row covers the cut whose
/// members beyond the first identifier are selected by the bits of `x`.
fn cut_row(universe: &[u32], m: &Matching) -> Vec<u64> {
    let w = universe.len();
    debug_assert!(w >= 2);
    let cuts = 1usize << (w - 1);
    let mut row = vec![0u64; cuts.div_ceil(64)];
    let idx = |id: u32| universe.binary_search(&id).unwrap();
    'cuts: for x in 0..cuts {
        let in_cut = |i: usize| i == 0 || (x >> (i - 1)) & 1 == 1;
        for &(p, q) in m.pairs() {
            if in_cut(idx(p)) != in_cut(idx(q)) {
                continue 'cuts;
            }
        }
        row[x / 64] |= 1u64 << (x % 64);
    }
    row
}

/// Keep a subset of entries that preserves [`opt_of`] for every possible
/// target pairing. Entries are processed in decreasing value order (ties
/// by pairing order) and kept exactly when their cut-row is linearly
/// independent of the rows already kept, so at most `2^(|B| - 1)` survive.
pub fn reduce(mut entries: Vec<(Matching, u64)>) -> Result<Vec<(Matching, u64)>> {
    if entries.is_empty() {
        return Ok(entries);
    }
    let universe = entries[0].0.universe();
    if entries.iter().any(|(m, _)| m.universe() != universe) {
        return Err(Error::Internal(
            "rank reduction requires a common identifier set".into(),
        ));
    }
    if universe.is_empty() {
        // Only one empty pairing exists; keep its best value.
        let best = entries.iter().map(|&(_, v)| v).max().unwrap();
        return Ok(vec![(Matching::empty(), best)]);
    }
    if universe.len() > 16 {
        return Err(Error::CapExceeded(format!(
            "turning radius: {} boundary crossings is past the rank-reduction width cap",
            universe.len()
        )));
    }
    entries.sort_by(|(ma, va), (mb, vb)| vb.cmp(va).then(ma.cmp(mb)));
    entries.dedup_by(|a, b| a.0 == b.0 && a.1 <= b.1);

    let mut basis: Vec<(Vec<u64>, usize)> = Vec::new(); // (row, leading bit)
    let mut kept = Vec::new();
    'entries: for (m, v) in entries {
        let mut row = cut_row(&universe, &m);
        loop {
            let lead = match leading_bit(&row) {
                Some(l) => l,
                None => continue 'entries, // dependent: dominated, drop
            };
            match basis.iter().find(|(_, bl)| *bl == lead) {
                Some((brow, _)) => {
                    for (r, b) in row.iter_mut().zip(brow) {
                        *r ^= b;
                    }
                }
                None => {
                    basis.push((row, lead));
                    kept.push((m, v));
                    continue 'entries;
                }
            }
        }
    }
    Ok(kept)
}

fn leading_bit(row: &[u64]) -> Option<usize> {
    row.iter()
        .enumerate()
        .find(|(_, w)| **w != 0)
        .map(|(i, w)| i * 64 + w.trailing_zeros() as usize)
}

/// Every perfect pairing of the given identifiers (must be even-sized).
pub fn all_perfect_matchings(ids: &[u32]) -> Vec<Matching> {
    assert!(ids.len() % 2 == 0, "odd identifier sets have no pairing");
    let mut out = Vec::new();
    let mut acc = Vec::new();
    fn rec(rest: &[u32], acc: &mut Vec<(u32, u32)>, out: &mut Vec<Matching>) {
        if rest.is_empty() {
            out.push(Matching::new(acc.clone()));
            return;
        }
        let first = rest[0];
        for j in 1..rest.len() {
            acc.push((first, rest[j]));
            let remaining: Vec<u32> = rest[1..]
                .iter()
                .copied()
                .filter(|&x| x != rest[j])
                .collect();
            rec(&remaining, acc, out);
            acc.pop();
        }
    }
    if ids.is_empty() {
        return vec![Matching::empty()];
    }
    rec(ids, &mut acc, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(pairs: &[(u32, u32)]) -> Matching {
        Matching::new(pairs.to_vec())
    }

    #[test]
    fn two_crossing_case() {
        let a = m(&[(1, 2)]);
        assert!(fits(&a, &a), "identical single pairs close a 2-cycle");
        assert_eq!(join(&a, &a), JoinOutcome::Closed);
    }

    #[test]
    fn four_crossing_fits_table() {
        let ab_cd = m(&[(1, 2), (3, 4)]);
        let ac_bd = m(&[(1, 3), (2, 4)]);
        let ad_bc = m(&[(1, 4), (2, 3)]);
        // With four identifiers, two pairings close a single cycle exactly
        // when they differ.
        for x in [&ab_cd, &ac_bd, &ad_bc] {
            for y in [&ab_cd, &ac_bd, &ad_bc] {
                assert_eq!(fits(x, y), x != y, "{x:?} vs {y:?}");
            }
        }
    }

    #[test]
    fn join_path_following() {
        let left = m(&[(1, 2), (3, 4)]);
        let right = m(&[(3, 5), (4, 6)]);
        // 3 and 4 are consumed; 5 and 6 connect through them.
        assert_eq!(join(&left, &right), JoinOutcome::Open(m(&[(1, 2), (5, 6)])));

        let stranded = m(&[(3, 4), (5, 6)]);
        // The 3-4 double edge forms a closed sub-cycle while 1,2,5,6 stay
        // open, so the combination is invalid.
        assert_eq!(join(&left, &stranded), JoinOutcome::Bot);
    }

    #[test]
    fn join_disjoint_and_empty() {
        let a = m(&[(1, 2)]);
        let b = m(&[(7, 9)]);
        assert_eq!(join(&a, &b), JoinOutcome::Open(m(&[(1, 2), (7, 9)])));
        // Regression: with the left side's identifiers all above the
        // right side's, the open-endpoint list arrives as two sorted runs
        // in the wrong relative order.
        assert_eq!(join(&b, &a), JoinOutcome::Open(m(&[(1, 2), (7, 9)])));
        let hi = m(&[(10, 20)]);
        let lo = m(&[(1, 2)]);
        assert_eq!(join(&hi, &lo), JoinOutcome::Open(m(&[(1, 2), (10, 20)])));
        assert_eq!(
            join(&Matching::empty(), &a),
            JoinOutcome::Open(a.clone()),
            "the empty pairing is a join identity"
        );
        assert_eq!(
            join(&Matching::empty(), &Matching::empty()),
            JoinOutcome::Open(Matching::empty())
        );
    }

    #[test]
    fn reduce_drops_dominated_duplicates() {
        let entries = vec![(m(&[(1, 2), (3, 4)]), 2), (m(&[(1, 2), (3, 4)]), 5)];
        let red = reduce(entries).unwrap();
        assert_eq!(red, vec![(m(&[(1, 2), (3, 4)]), 5)]);
    }

    #[test]
    fn reduce_size_cap() {
        for ids in [vec![1u32, 2], vec![1, 2, 3, 4], vec![1, 2, 3, 4, 5, 6]] {
            let all = all_perfect_matchings(&ids);
            let entries: Vec<(Matching, u64)> = all
                .iter()
                .enumerate()
                .map(|(i, mm)| (mm.clone(), i as u64))
                .collect();
            let red = reduce(entries).unwrap();
            assert!(red.len() <= 1 << (ids.len() - 1));
        }
    }

    #[test]
    fn matching_enumeration_counts() {
        assert_eq!(all_perfect_matchings(&[]).len(), 1);
        assert_eq!(all_perfect_matchings(&[1, 2]).len(), 1);
        assert_eq!(all_perfect_matchings(&[1, 2, 3, 4]).len(), 3);
        assert_eq!(all_perfect_matchings(&[1, 2, 3, 4, 5, 6]).len(), 15);
        assert_eq!(all_perfect_matchings(&[1, 2, 3, 4, 5, 6, 7, 8]).len(), 105);
    }

    /// Independent cycle counter used to cross-check `fits`.
    fn cycle_count(a: &Matching, b: &Matching) -> usize {
        let map_a = a.partner_map();
        let map_b = b.partner_map();
        let mut seen = std::collections::BTreeSet::new();
        let mut cycles = 0;
        for &start in map_a.keys() {
            if seen.contains(&start) {
                continue;
            }
            cycles += 1;
            let (mut cur, mut use_a) = (start, true);
            loop {
                seen.insert(cur);
                cur = if use_a { map_a[&cur] } else { map_b[&cur] };
                use_a = !use_a;
                if cur == start && use_a {
                    break;
                }
            }
        }
        cycles
    }

    proptest! {
        #[test]
        fn fits_is_single_cycle(perm in Just(()).prop_perturb(|_, mut rng| {
            let w = 2 * (1 + rng.random_range(0..4usize));
            let ids: Vec<u32> = (0..w as u32).collect();
            let all = all_perfect_matchings(&ids);
            let a = all[rng.random_range(0..all.len())].clone();
            let b = all[rng.random_range(0..all.len())].clone();
            (a, b)
        })) {
            let (a, b) = perm;
            prop_assert_eq!(fits(&a, &b), cycle_count(&a, &b) == 1);
            prop_assert_eq!(fits(&a, &b), fits(&b, &a));
        }

        /// The reduction contract: for every target pairing, the best
        /// compatible value is unchanged by reduction.
        #[test]
        fn reduce_preserves_opt_of(sel in Just(()).prop_perturb(|_, mut rng| {
            let w = 2 * (1 + rng.random_range(0..3usize));
            let ids: Vec<u32> = (0..w as u32).collect();
            let all = all_perfect_matchings(&ids);
            let mut entries: Vec<(Matching, u64)> = Vec::new();
            for m in &all {
                if rng.random_bool(0.6) {
                    entries.push((m.clone(), rng.random_range(0..50u64)));
                }
            }
            (ids, entries)
        })) {
            let (ids, entries) = sel;
            let red = reduce(entries.clone()).unwrap();
            prop_assert!(red.len() <= entries.len());
            for target in all_perfect_matchings(&ids) {
                prop_assert_eq!(
                    opt_of(&red, &target),
                    opt_of(&entries, &target),
                    "target {:?}", target
                );
            }
        }
    }
}
