//! End-to-end solver: normalize, partition into well-rounded
//! subinstances, run the budget DP over a family of quadtree shifts,
//! reconstruct the winning state, and report the cheapest tour found.
//!
//! The reported cost is always recomputed from the raw input
//! coordinates of the returned visiting order, so normalization and
//! snapping error never leak into the answer; the DP's internal costs
//! only decide which candidate wins.

use crate::dp::{reconstruct_tour, run_dp, DpLimits};
use crate::error::{Error, Result};
use crate::geometry::{derive_params, normalize, tour_cost_f, RawInstance};
use crate::par;
use crate::partition::{derandomized_partitions, WellRounded};
use crate::portals::PortalInterner;
use crate::quadtree::Quadtree;
use crate::thresholds::BudgetLadder;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// How quadtree shifts are chosen. The partition's assignment classes
/// are always enumerated; the shift is the scheme's one random object.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Draw quadtree shifts from a seeded generator; same seed, same
    /// answer.
    Randomized { seed: u64 },
    /// A fixed shift family; no randomness anywhere.
    Derandomized,
}

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Mode::Randomized { .. } => "randomized",
            Mode::Derandomized => "derandomized",
        }
    }
}

/// A closed tour over raw input points, by index.
#[derive(Debug, Clone)]
pub struct Tour {
    pub order: Vec<usize>,
    /// Cycle cost over the raw coordinates of `order`.
    pub cost: f64,
}

/// Solver result plus enough run metadata for reports.
#[derive(Debug, Clone)]
pub struct Solution {
    pub tour: Tour,
    /// Budget-ladder index of the winning DP entry.
    pub chosen_slot: usize,
    /// Quadtree shift of the winning run.
    pub chosen_shift: Vec<i64>,
    /// Point count of the winning subinstance.
    pub sub_size: usize,
    /// How many times every resource cap was relaxed before success.
    pub bumps: u32,
    /// (sub, shift) runs attempted in the successful round.
    pub runs: usize,
    /// Runs that hit a resource cap in the successful round.
    pub capped_runs: usize,
    /// Exported DP states summed over the successful round.
    pub dp_states: u64,
    pub peak_states: usize,
}

/// Recompute and check a tour: indices in range and distinct, at least
/// `k` of them, and (when given) the claimed cost within `1e-9`
/// relative. Returns the recomputed cost.
pub fn validate_tour(
    raw: &RawInstance,
    order: &[usize],
    k: usize,
    claimed: Option<f64>,
) -> Result<f64> {
    if order.len() < k {
        return Err(Error::InvalidArgument(format!(
            "tour visits {} points, needs at least {k}",
            order.len()
        )));
    }
    let mut seen = std::collections::BTreeSet::new();
    for &i in order {
        if i >= raw.points.len() {
            return Err(Error::InvalidArgument(format!("tour index {i} out of range")));
        }
        if !seen.insert(i) {
            return Err(Error::InvalidArgument(format!("tour repeats point {i}")));
        }
    }
    let cycle: Vec<Vec<f64>> = order.iter().map(|&i| raw.points[i].clone()).collect();
    let cost = tour_cost_f(&cycle);
    if let Some(c) = claimed {
        if (c - cost).abs() > 1e-9 * cost.abs().max(1.0) {
            return Err(Error::InvalidArgument(format!(
                "claimed cost {c} differs from recomputed {cost}"
            )));
        }
    }
    Ok(cost)
}

/// The fixed shift family tried per axis in derandomized mode: up to
/// `cap` values evenly spread over `[0, l)`, starting at 1 so the
/// origin never sits on a cell boundary.
fn axis_shifts(l: i64, cap: usize) -> Vec<i64> {
    let cap = cap.max(1);
    let mut out = Vec::new();
    for j in 0..cap.min(l as usize) {
        let v = (1 + (j as i64 * l) / cap as i64).rem_euclid(l);
        if !out.contains(&v) {
            out.push(v);
        }
    }
    if out.is_empty() {
        out.push(0);
    }
    out
}

fn shift_family(l: i64, d: usize, cap: usize) -> Vec<Vec<i64>> {
    let per_axis = axis_shifts(l, cap);
    let mut out: Vec<Vec<i64>> = vec![Vec::new()];
    for _ in 0..d {
        out = out
            .into_iter()
            .flat_map(|head| {
                per_axis.iter().map(move |&v| {
                    let mut h = head.clone();
                    h.push(v);
                    h
                })
            })
            .collect();
    }
    out
}

struct Candidate {
    cost: f64,
    order: Vec<usize>,
    slot: usize,
    shift: Vec<i64>,
    sub_size: usize,
}

struct RunOut {
    candidate: Option<Candidate>,
    exported: u64,
    peak: usize,
}

/// One DP run on one subinstance under one shift. A `None` candidate
/// means the run finished but found no tour (nothing closed reaches `k`
/// under the caps); resource aborts surface as errors so the caller can
/// relax the caps and retry.
fn run_one(
    raw: &RawInstance,
    sub: &WellRounded,
    shift: &[i64],
    epsilon: f64,
    n_orig: usize,
    limits: &DpLimits,
) -> Result<RunOut> {
    let d = sub.d;
    let tree = Quadtree::build(&sub.points, d, sub.l, shift)?;
    if std::env::var_os("KTSP_DP_TRACE").is_some() {
        eprintln!(
            "run_one: sub n={} k={} l={} shift={:?} cells={}",
            sub.points.len(),
            sub.k,
            sub.l,
            shift,
            tree.cells.len()
        );
    }
    let params = derive_params(epsilon, n_orig, d, sub.l);
    let scheme = limits.effective_scheme(&params, d);
    let interner = PortalInterner::build(&tree.cells, &scheme);
    let ladder = BudgetLadder::new(epsilon, n_orig, d, sub.k, sub.l)?;
    let run = run_dp(
        &sub.points,
        &tree,
        &scheme,
        &interner,
        &ladder,
        sub.k as u64,
        limits,
    )?;
    let exported = run.stats.exported_entries;
    let peak = run.stats.peak_running_states;
    let Some(ans) = run.answer else {
        return Ok(RunOut {
            candidate: None,
            exported,
            peak,
        });
    };
    let sub_tour = reconstruct_tour(&sub.points, &tree, &run.exports, 0, ans.entry)?;
    let order: Vec<usize> = sub_tour
        .order
        .iter()
        .map(|&i| sub.orig_indices[i])
        .collect();
    let cycle: Vec<Vec<f64>> = order.iter().map(|&i| raw.points[i].clone()).collect();
    Ok(RunOut {
        candidate: Some(Candidate {
            cost: tour_cost_f(&cycle),
            order,
            slot: run.exports[0].entries[ans.entry].slot,
            shift: shift.to_vec(),
            sub_size: sub.points.len(),
        }),
        exported,
        peak,
    })
}

/// Solve one raw instance: tour of at least `k` points, cost minimized
/// within the approximation and resource budget. Resource caps are
/// relaxed a bounded number of times before giving up with
/// [`Error::Infeasible`].
pub fn solve(raw: &RawInstance, epsilon: f64, mode: Mode, limits: &DpLimits) -> Result<Solution> {
    if raw.points.is_empty() || raw.k == 0 {
        return Err(Error::InvalidInstance(
            "need at least one point and k >= 1".into(),
        ));
    }
    if raw.k > raw.points.len() {
        return Err(Error::InvalidInstance(format!(
            "k = {} exceeds n = {}",
            raw.k,
            raw.points.len()
        )));
    }
    if raw.k == 1 {
        // A single visit is a zero-length tour; take the first point.
        return Ok(Solution {
            tour: Tour {
                order: vec![0],
                cost: 0.0,
            },
            chosen_slot: 0,
            chosen_shift: vec![0; raw.d],
            sub_size: 1,
            bumps: 0,
            runs: 0,
            capped_runs: 0,
            dp_states: 0,
            peak_states: 0,
        });
    }

    let inst = normalize(raw, epsilon)?;
    let mut cur = limits.clone();
    let mut last_err: Option<Error> = None;
    for bump in 0..3u32 {
        match solve_normalized(raw, &inst, epsilon, mode, &cur) {
            Ok(Some(mut s)) => {
                s.bumps = bump;
                return Ok(s);
            }
            Ok(None) => {
                last_err = None;
            }
            Err(e @ Error::CapExceeded(_)) => {
                last_err = Some(e);
            }
            Err(e) => return Err(e),
        }
        cur = cur.bumped();
    }
    Err(Error::Infeasible(match last_err {
        Some(e) => format!("no tour within resource caps after relaxation ({e})"),
        None => "no state reaches k points within the resource caps".into(),
    }))
}

fn solve_normalized(
    raw: &RawInstance,
    inst: &crate::geometry::Instance,
    epsilon: f64,
    mode: Mode,
    limits: &DpLimits,
) -> Result<Option<Solution>> {
    let n_orig = inst.points.len();

    // Distinct subinstances across all partition candidates; a DP run
    // depends only on the subinstance itself, never on which candidate
    // proposed it.
    let mut subs: Vec<WellRounded> = Vec::new();
    let mut seen: std::collections::BTreeSet<Vec<usize>> = Default::default();
    let mut push_sub = |s: WellRounded, subs: &mut Vec<WellRounded>| {
        let mut key = s.orig_indices.clone();
        key.sort_unstable();
        if seen.insert(key) {
            subs.push(s);
        }
    };
    let all = derandomized_partitions(inst, epsilon, limits.rho_scale)?;
    for c in all.candidates {
        for s in c.subs {
            push_sub(s, &mut subs);
        }
    }
    if subs.is_empty() {
        return Err(Error::Internal("partition produced no subinstance".into()));
    }
    for s in &subs {
        s.validate()?;
    }

    // One job per (subinstance, shift).
    let mut jobs: Vec<(usize, Vec<i64>)> = Vec::new();
    match mode {
        Mode::Derandomized => {
            for (si, s) in subs.iter().enumerate() {
                for shift in shift_family(s.l, s.d, limits.shift_axis_cap) {
                    jobs.push((si, shift));
                }
            }
        }
        Mode::Randomized { seed } => {
            // Independent stream from the partition draw.
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
            for (si, s) in subs.iter().enumerate() {
                let tries = limits
                    .shift_axis_cap
                    .max(1)
                    .saturating_pow(s.d as u32)
                    .min(8);
                for _ in 0..tries {
                    let shift: Vec<i64> = (0..s.d).map(|_| rng.gen_range(0..s.l)).collect();
                    jobs.push((si, shift));
                }
            }
        }
    }

    let results = par::map_slice(&jobs, |(si, shift)| {
        run_one(raw, &subs[*si], shift, epsilon, n_orig, limits)
    });

    let runs = results.len();
    let mut capped_runs = 0usize;
    let mut dp_states = 0u64;
    let mut peak_states = 0usize;
    let mut best: Option<Candidate> = None;
    let mut saw_cap: Option<Error> = None;
    for r in results {
        match r {
            Ok(out) => {
                dp_states += out.exported;
                peak_states = peak_states.max(out.peak);
                if let Some(c) = out.candidate {
                    let better = match &best {
                        None => true,
                        Some(b) => c.cost < b.cost,
                    };
                    if better {
                        best = Some(c);
                    }
                }
            }
            Err(e @ Error::CapExceeded(_)) => {
                capped_runs += 1;
                saw_cap = Some(e);
            }
            Err(e) => return Err(e),
        }
    }

    match best {
        Some(c) => Ok(Some(Solution {
            tour: Tour {
                cost: c.cost,
                order: c.order,
            },
            chosen_slot: c.slot,
            chosen_shift: c.shift,
            sub_size: c.sub_size,
            bumps: 0,
            runs,
            capped_runs,
            dp_states,
            peak_states,
        })),
        None => match saw_cap {
            Some(e) => Err(e),
            None => Ok(None),
        },
    }
}
