//! Seeded point-cloud generators for tests, benchmarks and the CLI.
//!
//! Every randomized generator takes the RNG by argument so callers own
//! the seed; the same seed always yields the same instance. Coordinates
//! are plain `f64`, ready to wrap in a [`RawInstance`](crate::geometry::RawInstance).

use rand::Rng;

/// `n` points drawn independently and uniformly from `[0, side)^d`.
pub fn uniform<R: Rng>(rng: &mut R, n: usize, d: usize, side: f64) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..d).map(|_| rng.gen::<f64>() * side).collect())
        .collect()
}

/// `n` points grouped around `clusters` uniformly placed centers, each
/// point offset uniformly within `[-spread, spread]^d` of its center.
/// Points are assigned to centers round-robin so every cluster is
/// populated even for small `n`.
pub fn clustered<R: Rng>(
    rng: &mut R,
    n: usize,
    d: usize,
    side: f64,
    clusters: usize,
    spread: f64,
) -> Vec<Vec<f64>> {
    let clusters = clusters.max(1);
    let centers: Vec<Vec<f64>> = (0..clusters)
        .map(|_| (0..d).map(|_| rng.gen::<f64>() * side).collect())
        .collect();
    (0..n)
        .map(|i| {
            let c = &centers[i % clusters];
            c.iter()
                .map(|&x| x + (rng.gen::<f64>() * 2.0 - 1.0) * spread)
                .collect()
        })
        .collect()
}

/// `n` points on a single straight segment with a random direction,
/// at sorted random positions along it. Degenerate by construction:
/// the optimal tour is twice the span of the chosen points.
pub fn collinear<R: Rng>(rng: &mut R, n: usize, d: usize, side: f64) -> Vec<Vec<f64>> {
    let origin: Vec<f64> = (0..d).map(|_| rng.gen::<f64>() * side * 0.25).collect();
    let mut dir: Vec<f64> = (0..d).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
    let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm < 1e-9 {
        dir = vec![0.0; d];
        dir[0] = 1.0;
    } else {
        for x in &mut dir {
            *x /= norm;
        }
    }
    let mut ts: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * side * 0.5).collect();
    ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ts.iter()
        .map(|&t| origin.iter().zip(&dir).map(|(&o, &u)| o + t * u).collect())
        .collect()
}

/// The full `per_side^d` lattice with the given pitch, in row-major
/// order. Deterministic; handy as a worst case for grid-aligned inputs.
pub fn grid(per_side: usize, d: usize, pitch: f64) -> Vec<Vec<f64>> {
    let n = per_side.pow(d as u32);
    (0..n)
        .map(|mut i| {
            (0..d)
                .map(|_| {
                    let c = i % per_side;
                    i /= per_side;
                    c as f64 * pitch
                })
                .collect()
        })
        .collect()
}
