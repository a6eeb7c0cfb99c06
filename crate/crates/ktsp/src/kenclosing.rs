//! Approximate smallest k-enclosing ball and cube, plus the derandomized
//! candidate-shrinking loop used to make those estimates deterministic.
//!
//! The ball estimate runs a grid-bucket decision procedure inside an
//! exponential search to bracket the optimal radius within a constant
//! factor, then refines over a uniform net of candidate centers: the
//! returned radius is always feasible (a real ball at a real center
//! containing `k` points) and at most `1 + lambda` times optimal. The cube
//! estimate and the tour-cost upper estimate derive from it.

use crate::error::{Error, Result};
use crate::geometry::dist_f;
use std::collections::{BTreeMap, BTreeSet};

/// A ball guaranteed to contain at least `k` points.
#[derive(Debug, Clone)]
pub struct KBall {
    pub radius: f64,
    pub center: Vec<f64>,
}

/// An axis-aligned cube guaranteed to contain at least `k` points.
#[derive(Debug, Clone)]
pub struct KCube {
    pub side: f64,
    pub corner: Vec<f64>,
}

/// Some location carrying at least `k` coincident points, if any.
fn heavy_location(points: &[Vec<f64>], k: usize) -> Option<Vec<f64>> {
    let mut mult: BTreeMap<Vec<u64>, (usize, usize)> = BTreeMap::new();
    for (i, p) in points.iter().enumerate() {
        let key: Vec<u64> = p.iter().map(|c| c.to_bits()).collect();
        let e = mult.entry(key).or_insert((0, i));
        e.0 += 1;
        if e.0 >= k {
            return Some(points[e.1].clone());
        }
    }
    None
}

/// Does some ball of radius about `r` contain `k` points? Buckets points
/// into cells of diagonal `2r` and scans fixed-size cell neighborhoods.
/// A `true` answer certifies an optimal radius of at most `(2*nbr+1) * r`;
/// a `false` answer certifies it exceeds `r`.
fn grid_decision(points: &[Vec<f64>], k: usize, r: f64) -> bool {
    let d = points[0].len();
    let side = 2.0 * r / (d as f64).sqrt();
    let nbr = ((d as f64).sqrt() / 2.0).ceil() as i64;
    let mut cells: BTreeMap<Vec<i64>, usize> = BTreeMap::new();
    for p in points {
        let key: Vec<i64> = p.iter().map(|&c| (c / side).floor() as i64).collect();
        *cells.entry(key).or_insert(0) += 1;
    }
    let keys: Vec<&Vec<i64>> = cells.keys().collect();
    for key in keys {
        let mut total = 0usize;
        let mut offset = vec![-nbr; d];
        'sum: loop {
            let probe: Vec<i64> = key.iter().zip(&offset).map(|(&a, &b)| a + b).collect();
            total += cells.get(&probe).copied().unwrap_or(0);
            for axis in 0..d {
                offset[axis] += 1;
                if offset[axis] <= nbr {
                    continue 'sum;
                }
                offset[axis] = -nbr;
            }
            break;
        }
        if total >= k {
            return true;
        }
    }
    false
}

/// Radius of the `k`-th closest point to `c`.
fn kth_dist(points: &[Vec<f64>], k: usize, c: &[f64], scratch: &mut Vec<f64>) -> f64 {
    scratch.clear();
    scratch.extend(points.iter().map(|p| dist_f(p, c)));
    let (_, kth, _) = scratch.select_nth_unstable_by(k - 1, |a, b| a.partial_cmp(b).unwrap());
    *kth
}

/// Smallest `k`-enclosing ball, within a factor `1 + lambda` of optimal.
///
/// The result is always feasible: the returned ball really contains at
/// least `k` points, so its radius is an upper bound on the optimum as well.
pub fn approx_k_ball(points: &[Vec<f64>], k: usize, lambda: f64) -> Result<KBall> {
    let n = points.len();
    if n == 0 || k > n {
        return Err(Error::InvalidArgument(format!(
            "ball estimate needs 1 <= k <= n, got k={k} n={n}"
        )));
    }
    if !(lambda > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "approximation slack must be positive, got {lambda}"
        )));
    }
    let d = points[0].len();
    if k <= 1 {
        return Ok(KBall {
            radius: 0.0,
            center: points[0].clone(),
        });
    }
    if let Some(center) = heavy_location(points, k) {
        return Ok(KBall {
            radius: 0.0,
            center,
        });
    }

    // No single location holds k points, so any k-enclosing ball spans two
    // distinct locations: half the minimal distinct-pair distance is a
    // lower bound to seed the exponential search.
    let mut d_min = f64::INFINITY;
    for i in 0..n {
        for j in (i + 1)..n {
            let dd = dist_f(&points[i], &points[j]);
            if dd > 0.0 && dd < d_min {
                d_min = dd;
            }
        }
    }
    let nbr = ((d as f64).sqrt() / 2.0).ceil() as i64;
    let mut lb = d_min / 2.0;
    let mut guess = lb;
    let mut doublings = 0;
    while !grid_decision(points, k, guess) {
        lb = guess;
        guess *= 2.0;
        doublings += 1;
        assert!(doublings < 2100, "radius search failed to terminate");
    }
    let ub = (2 * nbr + 1) as f64 * guess;

    // Refine over a net fine enough that some candidate center sits within
    // lambda * lb (<= lambda * optimum) of the true optimal center.
    let delta = 2.0 * lambda * lb / (d as f64).sqrt();
    let reach = (ub / delta).ceil() as i64 + 1;
    let mut net: BTreeSet<Vec<i64>> = BTreeSet::new();
    for p in points {
        let base: Vec<i64> = p.iter().map(|&c| (c / delta).round() as i64).collect();
        let mut offset = vec![-reach; d];
        'fill: loop {
            net.insert(base.iter().zip(&offset).map(|(&a, &b)| a + b).collect());
            for axis in 0..d {
                offset[axis] += 1;
                if offset[axis] <= reach {
                    continue 'fill;
                }
                offset[axis] = -reach;
            }
            break;
        }
    }

    let mut scratch = Vec::with_capacity(n);
    let mut best = KBall {
        radius: f64::INFINITY,
        center: Vec::new(),
    };
    for cell in net {
        let c: Vec<f64> = cell.iter().map(|&u| u as f64 * delta).collect();
        let r = kth_dist(points, k, &c, &mut scratch);
        if r < best.radius {
            best = KBall { radius: r, center: c };
        }
    }
    for p in points {
        let r = kth_dist(points, k, p, &mut scratch);
        if r < best.radius {
            best = KBall {
                radius: r,
                center: p.clone(),
            };
        }
    }
    Ok(best)
}

/// Smallest `k`-enclosing cube within a factor `2 sqrt(d)` of optimal:
/// the bounding cube of the ball estimate at unit slack. Feasible by
/// construction (side at least the optimum).
pub fn approx_k_cube(points: &[Vec<f64>], k: usize) -> Result<KCube> {
    let ball = approx_k_ball(points, k, 1.0)?;
    let corner = ball.center.iter().map(|&c| c - ball.radius).collect();
    Ok(KCube {
        side: 2.0 * ball.radius,
        corner,
    })
}

/// Upper estimate `A = d * k^(1 - 1/d) * side` for the optimal tour cost
/// over the best `k` points, from the cube estimate. Sandwiched between
/// the optimum and `2 d^(3/2) k^(1 - 1/d)` times the optimum.
pub fn opt_upper_estimate(points: &[Vec<f64>], k: usize) -> Result<f64> {
    let d = points[0].len() as f64;
    let cube = approx_k_cube(points, k)?;
    Ok(d * (k as f64).powf(1.0 - 1.0 / d) * cube.side)
}

/// One round of the candidate-shrinking loop.
#[derive(Debug, Clone, Copy)]
pub struct SparsifyRound {
    pub pivot: usize,
    pub before: usize,
    pub after: usize,
}

/// Full trace of the candidate-shrinking loop.
#[derive(Debug, Clone)]
pub struct SparsifyTrace {
    pub rounds: Vec<SparsifyRound>,
    pub survivors: Vec<usize>,
    /// Modeled cost: the square of the working-set size, summed per round.
    pub total_work: u64,
}

/// Deterministic replacement for sample-and-shrink estimation loops.
///
/// Starting from the full index set, each round evaluates `step(W, p)` for
/// every pivot `p` in the working set `W` and keeps the smallest candidate
/// (ties to the smallest pivot). Each accepted candidate must shrink the
/// working set to at most 15/16 of its size — the property a random pivot
/// delivers in expectation — otherwise the contract is violated and an
/// error is returned. The modeled work per round is `|W|^2`, and geometric
/// decay keeps the total under `16 |W_0|^2`.
pub fn derandomized_sparsify_loop(
    n0: usize,
    floor: usize,
    mut step: impl FnMut(&[usize], usize) -> Vec<usize>,
) -> Result<SparsifyTrace> {
    let mut w: Vec<usize> = (0..n0).collect();
    let mut rounds = Vec::new();
    let mut total_work: u64 = 0;
    let budget = 16 * (n0 as u64) * (n0 as u64);
    while w.len() > floor {
        let mut best: Option<(usize, usize, Vec<usize>)> = None;
        for &p in &w {
            let cand = step(&w, p);
            let members: BTreeSet<usize> = w.iter().copied().collect();
            if !cand.iter().all(|i| members.contains(i)) {
                return Err(Error::Internal(format!(
                    "shrink step for pivot {p} returned indices outside the working set"
                )));
            }
            if best.as_ref().map_or(true, |(l, bp, _)| {
                cand.len() < *l || (cand.len() == *l && p < *bp)
            }) {
                best = Some((cand.len(), p, cand));
            }
        }
        let (len, pivot, mut cand) = best.expect("working set is nonempty");
        let threshold = w.len() * 15 / 16;
        if len > threshold {
            return Err(Error::Internal(format!(
                "shrink step stalled: best candidate keeps {len} of {} (limit {threshold})",
                w.len()
            )));
        }
        total_work += (w.len() as u64) * (w.len() as u64);
        if total_work > budget {
            return Err(Error::Internal(format!(
                "shrink loop exceeded its work budget: {total_work} > {budget}"
            )));
        }
        cand.sort_unstable();
        cand.dedup();
        rounds.push(SparsifyRound {
            pivot,
            before: w.len(),
            after: cand.len(),
        });
        w = cand;
    }
    Ok(SparsifyTrace {
        rounds,
        survivors: w,
        total_work,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{exact_k_ball_2d, exact_k_cube, exact_k_tsp};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_points(rng: &mut ChaCha8Rng, n: usize, span: f64) -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| vec![rng.gen::<f64>() * span, rng.gen::<f64>() * span])
            .collect()
    }

    #[test]
    fn ball_within_slack_of_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for trial in 0..12 {
            let n = 30 + (trial % 3) * 20;
            let points = random_points(&mut rng, n, 10.0);
            for k in [2, 3, n / 3, n] {
                let (exact, _) = exact_k_ball_2d(&points, k).unwrap();
                for lambda in [1.0, 0.5] {
                    let ball = approx_k_ball(&points, k, lambda).unwrap();
                    assert!(
                        ball.radius >= exact - 1e-9,
                        "trial {trial} k={k}: {} < optimal {exact}",
                        ball.radius
                    );
                    assert!(
                        ball.radius <= (1.0 + lambda) * exact + 1e-9,
                        "trial {trial} k={k} lambda={lambda}: {} > {}",
                        ball.radius,
                        (1.0 + lambda) * exact
                    );
                    // Feasibility: the returned ball really holds k points.
                    let inside = points
                        .iter()
                        .filter(|p| dist_f(p, &ball.center) <= ball.radius + 1e-9)
                        .count();
                    assert!(inside >= k);
                }
            }
        }
    }

    #[test]
    fn ball_shortcuts() {
        let p = vec![
            vec![1.0, 1.0],
            vec![1.0, 1.0],
            vec![1.0, 1.0],
            vec![50.0, 50.0],
        ];
        let ball = approx_k_ball(&p, 3, 0.5).unwrap();
        assert_eq!(ball.radius, 0.0);
        assert_eq!(ball.center, vec![1.0, 1.0]);
        assert_eq!(approx_k_ball(&p, 1, 1.0).unwrap().radius, 0.0);
        assert!(approx_k_ball(&p, 5, 1.0).is_err());
    }

    #[test]
    fn cube_within_factor_of_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        for trial in 0..12 {
            let n = 40;
            let points = random_points(&mut rng, n, 6.0);
            for k in [2, 5, 20, n] {
                let (exact, _) = exact_k_cube(&points, k).unwrap();
                let cube = approx_k_cube(&points, k).unwrap();
                assert!(
                    cube.side >= exact - 1e-9,
                    "trial {trial} k={k}: {} < {exact}",
                    cube.side
                );
                assert!(
                    cube.side <= 2.0 * 2f64.sqrt() * exact + 1e-9,
                    "trial {trial} k={k}: {} vs optimal {exact}",
                    cube.side
                );
                let inside = points
                    .iter()
                    .filter(|p| {
                        (0..2).all(|a| {
                            p[a] >= cube.corner[a] - 1e-9
                                && p[a] <= cube.corner[a] + cube.side + 1e-9
                        })
                    })
                    .count();
                assert!(inside >= k, "cube must contain k points");
            }
        }
    }

    #[test]
    fn upper_estimate_sandwiches_tour_cost() {
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        for trial in 0..10 {
            let n = 9;
            let points = random_points(&mut rng, n, 8.0);
            for k in 2..=n {
                let (opt, _) = exact_k_tsp(&points, k).unwrap();
                if opt == 0.0 {
                    continue;
                }
                let a = opt_upper_estimate(&points, k).unwrap();
                let d: f64 = 2.0;
                let hi = 2.0 * d.powf(1.5) * (k as f64).powf(1.0 - 1.0 / d) * opt;
                assert!(a >= opt - 1e-9, "trial {trial} k={k}: A={a} < opt={opt}");
                assert!(a <= hi + 1e-9, "trial {trial} k={k}: A={a} > {hi}");
            }
        }
    }

    #[test]
    fn sparsify_runs_to_floor() {
        // Dropping ceil(|W|/16) per round sits exactly at the shrink limit.
        let trace = derandomized_sparsify_loop(200, 1, |w, _| {
            let keep = w.len() * 15 / 16;
            w[..keep].to_vec()
        })
        .unwrap();
        assert_eq!(trace.survivors, vec![0]);
        assert!(trace.total_work <= 16 * 200 * 200);
        for r in &trace.rounds {
            assert!(r.after <= r.before * 15 / 16);
        }
    }

    #[test]
    fn sparsify_picks_smallest_candidate_then_smallest_pivot() {
        // Pivot p keeps a prefix whose length depends on p; the loop must
        // pick the smallest resulting set, breaking ties by pivot index.
        let trace = derandomized_sparsify_loop(64, 1, |w, p| {
            let keep = if p % 2 == 0 { w.len() / 2 } else { w.len() * 3 / 4 };
            w[..keep.max(1)].to_vec()
        })
        .unwrap();
        assert_eq!(trace.rounds[0].pivot, 0);
        assert_eq!(trace.rounds[0].after, 32);
    }

    #[test]
    fn sparsify_rejects_stalling_step() {
        let err = derandomized_sparsify_loop(32, 1, |w, _| w.to_vec()).unwrap_err();
        assert!(err.to_string().contains("stalled"), "got: {err}");
    }

    #[test]
    fn sparsify_rejects_foreign_indices() {
        let err = derandomized_sparsify_loop(8, 1, |_, _| vec![99]).unwrap_err();
        assert!(err.to_string().contains("outside"), "got: {err}");
    }

    #[test]
    fn sparsify_geometric_step_converges() {
        // A concrete geometric shrink: keep the half of the working set
        // closest to the pivot.
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        let points = random_points(&mut rng, 100, 1.0);
        let trace = derandomized_sparsify_loop(points.len(), 4, |w, p| {
            let mut by_dist: Vec<usize> = w.to_vec();
            by_dist.sort_by(|&a, &b| {
                dist_f(&points[a], &points[p])
                    .partial_cmp(&dist_f(&points[b], &points[p]))
                    .unwrap()
                    .then(a.cmp(&b))
            });
            by_dist[..w.len() / 2].to_vec()
        })
        .unwrap();
        assert!(trace.survivors.len() <= 4);
        assert!(trace.total_work <= 16 * 100 * 100);
    }
}
