//! Decomposition of a normalized instance into well-rounded subinstances.
//!
//! The optimal tour over `k` points fits inside a cube whose side is a
//! known fraction of the tour-cost upper estimate `A`, so cutting space
//! into a randomly shifted grid of cells of side `T = d * A * log2(k)`
//! leaves that cube uncut with probability at least `1 - 1/log2(k)`. Every
//! cell holding at least `k` points becomes a candidate subinstance, the
//! solver runs on each, and the best answer wins.
//!
//! Inside a cell, points are snapped to a grid of pitch `rho` (a small
//! fraction of `A`, so the total snap error is a vanishing fraction of the
//! optimum) and rescaled by 8. The result is *well-rounded*: integer
//! coordinates that are multiples of 8, minimum nonzero distance 8, and a
//! bounding box bounded by a fixed multiple of `k^2` times the pitch —
//! the shape the quadtree DP is designed for.
//!
//! The derandomized variant enumerates one shift representative per
//! distinct point-to-cell assignment (per axis, assignments change only
//! at shifts `(-x) mod T`), with the exact probability mass of each class
//! attached as a weight.

use crate::error::{Error, Result};
use crate::geometry::{dist_i, next_pow2_i, Instance, ScaleMap};
use crate::kenclosing::opt_upper_estimate;
use crate::oracle::to_f64;
use rand::Rng;
use std::collections::BTreeMap;

/// Bound on a well-rounded bounding box: `side <= C_B * k^2`.
pub const DEFAULT_C_B: f64 = 2048.0;

/// Coarse cell side constant: `T = C_T * d * A * log2(k)`.
pub const DEFAULT_C_T: f64 = 1.0;

/// A well-rounded subinstance, plus the affine map back to normalized
/// coordinates and the original point index behind every subinstance point.
#[derive(Debug, Clone)]
pub struct WellRounded {
    pub points: Vec<Vec<i64>>,
    pub d: usize,
    pub k: usize,
    /// Power-of-two grid bound for the subinstance's own quadtree.
    pub l: i64,
    /// `orig_indices[i]` is the instance point behind `points[i]`.
    pub orig_indices: Vec<usize>,
    /// Maps subinstance coordinates to normalized instance coordinates.
    pub scale: ScaleMap,
}

impl WellRounded {
    /// Check every well-roundedness invariant; used by tests and callers
    /// that must not continue on a malformed decomposition.
    pub fn validate(&self) -> Result<()> {
        let n = self.points.len();
        if n < self.k || self.k < 1 {
            return Err(Error::Internal(format!(
                "subinstance holds {n} points for target {}",
                self.k
            )));
        }
        for p in &self.points {
            if p.len() != self.d {
                return Err(Error::Internal("dimension mismatch".into()));
            }
            for &c in p {
                if c < 0 || c > self.l {
                    return Err(Error::Internal(format!(
                        "coordinate {c} outside [0, {}]",
                        self.l
                    )));
                }
                if c % 8 != 0 {
                    return Err(Error::Internal(format!(
                        "coordinate {c} is not a multiple of 8"
                    )));
                }
            }
        }
        for i in 0..n {
            for j in (i + 1)..n {
                let dd = dist_i(&self.points[i], &self.points[j]);
                if dd > 0.0 && dd < 8.0 {
                    return Err(Error::Internal(format!(
                        "distinct points at distance {dd} < 8"
                    )));
                }
            }
        }
        let bbox = (0..self.d)
            .map(|a| {
                let lo = self.points.iter().map(|p| p[a]).min().unwrap();
                let hi = self.points.iter().map(|p| p[a]).max().unwrap();
                hi - lo
            })
            .max()
            .unwrap_or(0);
        let cap = DEFAULT_C_B * (self.k as f64) * (self.k as f64);
        if bbox as f64 > cap {
            return Err(Error::Internal(format!(
                "bounding box {bbox} exceeds {cap}"
            )));
        }
        if self.orig_indices.len() != n {
            return Err(Error::Internal("index map length mismatch".into()));
        }
        Ok(())
    }
}

/// One candidate decomposition (one coarse-grid shift).
#[derive(Debug, Clone)]
pub struct CandidatePartition {
    pub subs: Vec<WellRounded>,
    /// Probability mass of this assignment class under a uniform shift
    /// (1.0 for a concrete randomized draw).
    pub weight: f64,
    pub shift: Vec<f64>,
}

/// Result of the randomized partitioning loop.
#[derive(Debug, Clone)]
pub struct PartitionOutcome {
    pub partition: CandidatePartition,
    pub attempts: u32,
    pub rho: f64,
    pub t: f64,
    pub degenerate: bool,
}

/// All derandomized candidates for one instance.
#[derive(Debug, Clone)]
pub struct DerandPartitions {
    pub candidates: Vec<CandidatePartition>,
    pub rho: f64,
    pub t: f64,
    pub degenerate: bool,
}

/// Snap pitch `rho = A * epsilon / (16 * d^(3/2) * k^(2 - 1/d))`.
pub fn compute_rho(a: f64, epsilon: f64, d: usize, k: usize) -> f64 {
    let df = d as f64;
    a * epsilon / (16.0 * df.powf(1.5) * (k as f64).powf(2.0 - 1.0 / df))
}

struct Prep {
    rho: f64,
    t: f64,
    snapped: Vec<Vec<i64>>,
    degenerate: Option<WellRounded>,
}

fn prepare(inst: &Instance, epsilon: f64, rho_scale: f64) -> Result<Prep> {
    if !(epsilon > 0.0) || !(rho_scale > 0.0) {
        return Err(Error::InvalidArgument(
            "epsilon and pitch scale must be positive".into(),
        ));
    }
    let pts = to_f64(&inst.points);
    let a = opt_upper_estimate(&pts, inst.k)?;
    if a == 0.0 {
        // Some location already carries k coincident points: the optimal
        // cost is zero and a single trivial subinstance suffices.
        let mut mult: BTreeMap<&Vec<i64>, Vec<usize>> = BTreeMap::new();
        for (i, p) in inst.points.iter().enumerate() {
            mult.entry(p).or_default().push(i);
        }
        let (loc, members) = mult
            .into_iter()
            .find(|(_, m)| m.len() >= inst.k)
            .expect("zero estimate implies a k-fold location");
        let sub = WellRounded {
            points: vec![vec![0; inst.d]; members.len()],
            d: inst.d,
            k: inst.k,
            l: 1,
            orig_indices: members,
            scale: ScaleMap {
                factor: 1.0,
                offset: loc.iter().map(|&c| c as f64).collect(),
            },
        };
        return Ok(Prep {
            rho: 0.0,
            t: 0.0,
            snapped: Vec::new(),
            degenerate: Some(sub),
        });
    }
    let rho = compute_rho(a, epsilon, inst.d, inst.k) * rho_scale;
    let t = DEFAULT_C_T * inst.d as f64 * a * (inst.k as f64).log2().max(1.0);
    let snapped = inst
        .points
        .iter()
        .map(|p| p.iter().map(|&c| (c as f64 / rho).round() as i64).collect())
        .collect();
    Ok(Prep {
        rho,
        t,
        snapped,
        degenerate: None,
    })
}

/// Cell index of a snapped point under shift `u`.
fn cell_of(snap: &[i64], rho: f64, t: f64, u: &[f64]) -> Vec<i64> {
    snap.iter()
        .zip(u)
        .map(|(&s, &uj)| ((s as f64 * rho + uj) / t).floor() as i64)
        .collect()
}

fn assemble(
    inst: &Instance,
    snapped: &[Vec<i64>],
    rho: f64,
    t: f64,
    shift: &[f64],
    weight: f64,
) -> Result<CandidatePartition> {
    let mut cells: BTreeMap<Vec<i64>, Vec<usize>> = BTreeMap::new();
    for (i, s) in snapped.iter().enumerate() {
        cells.entry(cell_of(s, rho, t, shift)).or_default().push(i);
    }
    let mut subs = Vec::new();
    for (_, members) in cells {
        if members.len() < inst.k {
            continue;
        }
        let mins: Vec<i64> = (0..inst.d)
            .map(|a| members.iter().map(|&i| snapped[i][a]).min().unwrap())
            .collect();
        let points: Vec<Vec<i64>> = members
            .iter()
            .map(|&i| {
                snapped[i]
                    .iter()
                    .zip(&mins)
                    .map(|(&s, &m)| 8 * (s - m))
                    .collect()
            })
            .collect();
        let max_coord = points
            .iter()
            .flat_map(|p| p.iter().copied())
            .max()
            .unwrap_or(0);
        let sub = WellRounded {
            points,
            d: inst.d,
            k: inst.k,
            l: next_pow2_i(max_coord.max(1)),
            orig_indices: members,
            scale: ScaleMap {
                factor: rho / 8.0,
                offset: mins.iter().map(|&m| m as f64 * rho).collect(),
            },
        };
        sub.validate()?;
        subs.push(sub);
    }
    Ok(CandidatePartition {
        subs,
        weight,
        shift: shift.to_vec(),
    })
}

/// Randomized partitioning: draw uniform shifts until some cell holds `k`
/// points (at most 16 draws), then fall back to the derandomized family.
pub fn partition_instance<R: Rng>(
    inst: &Instance,
    epsilon: f64,
    rho_scale: f64,
    rng: &mut R,
) -> Result<PartitionOutcome> {
    let prep = prepare(inst, epsilon, rho_scale)?;
    if let Some(sub) = prep.degenerate {
        return Ok(PartitionOutcome {
            partition: CandidatePartition {
                subs: vec![sub],
                weight: 1.0,
                shift: vec![0.0; inst.d],
            },
            attempts: 0,
            rho: prep.rho,
            t: prep.t,
            degenerate: true,
        });
    }
    for attempt in 1..=16u32 {
        let shift: Vec<f64> = (0..inst.d).map(|_| rng.gen::<f64>() * prep.t).collect();
        let cand = assemble(inst, &prep.snapped, prep.rho, prep.t, &shift, 1.0)?;
        if !cand.subs.is_empty() {
            return Ok(PartitionOutcome {
                partition: cand,
                attempts: attempt,
                rho: prep.rho,
                t: prep.t,
                degenerate: false,
            });
        }
    }
    let der = derandomized_partitions(inst, epsilon, rho_scale)?;
    let cand = der
        .candidates
        .into_iter()
        .find(|c| !c.subs.is_empty())
        .ok_or_else(|| {
            Error::Internal("no shift class yields a populated cell".into())
        })?;
    Ok(PartitionOutcome {
        partition: cand,
        attempts: 17,
        rho: der.rho,
        t: der.t,
        degenerate: false,
    })
}

/// Group signature of an assignment: points mapped to group ranks in
/// first-appearance order, which identifies the partition independently
/// of absolute cell indices.
fn signature(assignment: &[Vec<i64>]) -> Vec<usize> {
    let mut seen: BTreeMap<&Vec<i64>, usize> = BTreeMap::new();
    let mut sig = Vec::with_capacity(assignment.len());
    for cell in assignment {
        let next = seen.len();
        sig.push(*seen.entry(cell).or_insert(next));
    }
    sig
}

/// Enumerate one representative shift per distinct point-to-cell
/// assignment, each weighted by the probability a uniform shift lands in
/// its class. Weights sum to 1.
pub fn derandomized_partitions(
    inst: &Instance,
    epsilon: f64,
    rho_scale: f64,
) -> Result<DerandPartitions> {
    let prep = prepare(inst, epsilon, rho_scale)?;
    if let Some(sub) = prep.degenerate {
        return Ok(DerandPartitions {
            candidates: vec![CandidatePartition {
                subs: vec![sub],
                weight: 1.0,
                shift: vec![0.0; inst.d],
            }],
            rho: prep.rho,
            t: prep.t,
            degenerate: true,
        });
    }
    // Per axis: assignment classes change at shifts (-x) mod T for each
    // snapped coordinate x; each class is [b_i, b_{i+1}).
    let mut axis_classes: Vec<Vec<(f64, f64)>> = Vec::new(); // (rep, weight)
    for a in 0..inst.d {
        let mut breaks: Vec<f64> = prep
            .snapped
            .iter()
            .map(|s| {
                let x = s[a] as f64 * prep.rho;
                ((-x) % prep.t + prep.t) % prep.t
            })
            .collect();
        breaks.sort_by(|p, q| p.partial_cmp(q).unwrap());
        breaks.dedup();
        let m = breaks.len();
        let classes: Vec<(f64, f64)> = (0..m)
            .map(|i| {
                let span = if i + 1 < m {
                    breaks[i + 1] - breaks[i]
                } else {
                    breaks[0] + prep.t - breaks[m - 1]
                };
                (breaks[i], span / prep.t)
            })
            .collect();
        axis_classes.push(classes);
    }
    let combos: usize = axis_classes.iter().map(|c| c.len()).product();
    if combos > 100_000 {
        return Err(Error::CapExceeded(format!(
            "{combos} shift classes to enumerate"
        )));
    }

    let mut by_sig: BTreeMap<Vec<usize>, CandidatePartition> = BTreeMap::new();
    let mut idx = vec![0usize; inst.d];
    'combos: loop {
        let shift: Vec<f64> = idx
            .iter()
            .zip(&axis_classes)
            .map(|(&i, c)| c[i].0)
            .collect();
        let weight: f64 = idx
            .iter()
            .zip(&axis_classes)
            .map(|(&i, c)| c[i].1)
            .product();
        let assignment: Vec<Vec<i64>> = prep
            .snapped
            .iter()
            .map(|s| cell_of(s, prep.rho, prep.t, &shift))
            .collect();
        let sig = signature(&assignment);
        match by_sig.get_mut(&sig) {
            Some(existing) => existing.weight += weight,
            None => {
                let cand = assemble(inst, &prep.snapped, prep.rho, prep.t, &shift, weight)?;
                by_sig.insert(sig, cand);
            }
        }
        for a in 0..inst.d {
            idx[a] += 1;
            if idx[a] < axis_classes[a].len() {
                continue 'combos;
            }
            idx[a] = 0;
        }
        break;
    }
    Ok(DerandPartitions {
        candidates: by_sig.into_values().collect(),
        rho: prep.rho,
        t: prep.t,
        degenerate: false,
    })
}
