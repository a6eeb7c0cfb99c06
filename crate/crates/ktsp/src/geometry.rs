//! Instances, grid normalization and derived solver parameters.
//!
//! The solver never works on raw floating-point coordinates: inputs are
//! first scaled onto the integer grid `{0,...,L}^d` where `L` is the
//! smallest power of two at least `C_L * n * sqrt(d) / epsilon`. At that
//! resolution the per-point rounding error is a vanishing fraction of any
//! tour through at least two distinct points, so optimizing on the grid
//! and unscaling loses at most a `1 + epsilon/2` factor.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Default constant in the grid bound `L >= C_L * n * sqrt(d) / epsilon`.
///
/// One unit of safety margin beyond the minimum keeps the per-pair
/// distance distortion within `epsilon/n` on ordinary instances (points
/// separated by a quarter of the bounding box or more).
pub const DEFAULT_C_L: f64 = 2.0;

/// Default constant in the crossing bound `r = ceil(C_R / epsilon)`.
pub const DEFAULT_C_R: f64 = 4.0;

/// Default constant in the single-crossing portal count.
pub const DEFAULT_C_M: f64 = 1.0;

/// A raw instance as read from disk: `n` points in `R^d`, visit target `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct RawInstance {
    pub points: Vec<Vec<f64>>,
    pub d: usize,
    pub k: usize,
}

/// Affine map from grid coordinates back to raw coordinates:
/// `raw = grid * factor + offset`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScaleMap {
    pub factor: f64,
    pub offset: Vec<f64>,
}

impl ScaleMap {
    pub fn to_raw(&self, grid: &[i64]) -> Vec<f64> {
        grid.iter()
            .zip(&self.offset)
            .map(|(&g, &o)| g as f64 * self.factor + o)
            .collect()
    }
}

/// A normalized instance: integer points in `{0,...,l}^d`.
#[derive(Debug, Clone)]
pub struct Instance {
    pub points: Vec<Vec<i64>>,
    pub d: usize,
    pub k: usize,
    /// Grid bound: every coordinate lies in `[0, l]`; `l` is a power of two.
    pub l: i64,
    pub scale: ScaleMap,
}

/// Derived per-instance solver parameters.
///
/// `r` bounds how often a single tour may cross a quadtree facet,
/// `m_tilde` is the portal count offered to single crossings, and the two
/// caps bound the coarse portal grids available to multiple crossings:
/// a facet crossed `m` times draws its portals from a grid of at most
/// `grid_cap / m` points, with `m <= facet_cross_cap`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub epsilon: f64,
    pub r: u32,
    pub m_tilde: u64,
    pub grid_cap: u64,
    pub facet_cross_cap: u64,
}

/// Smallest power of two `>= x` (and `>= 1`).
pub fn next_pow2(x: f64) -> i64 {
    let mut p: i64 = 1;
    while (p as f64) < x {
        p = p
            .checked_mul(2)
            .expect("grid bound overflows i64; instance is absurdly large");
    }
    p
}

/// Smallest power of two `>= x` for integer input.
pub fn next_pow2_i(x: i64) -> i64 {
    next_pow2(x as f64)
}

/// Euclidean distance between two float points.
pub fn dist_f(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Euclidean distance between two integer grid points.
pub fn dist_i(a: &[i64], b: &[i64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let delta = (x - y) as f64;
            delta * delta
        })
        .sum::<f64>()
        .sqrt()
}

/// Length of the closed tour `p[0] -> p[1] -> ... -> p[0]` (float points).
pub fn tour_cost_f(points: &[Vec<f64>]) -> f64 {
    if points.len() < 2 {
        return 0.0;
    }
    let mut cost = 0.0;
    for i in 0..points.len() {
        cost += dist_f(&points[i], &points[(i + 1) % points.len()]);
    }
    cost
}

/// Length of the closed tour over integer grid points.
pub fn tour_cost_i(points: &[Vec<i64>]) -> f64 {
    if points.len() < 2 {
        return 0.0;
    }
    let mut cost = 0.0;
    for i in 0..points.len() {
        cost += dist_i(&points[i], &points[(i + 1) % points.len()]);
    }
    cost
}

fn check_raw(raw: &RawInstance) -> Result<()> {
    if raw.d < 2 {
        return Err(Error::InvalidInstance(format!(
            "dimension must be at least 2, got {}",
            raw.d
        )));
    }
    if raw.points.len() < 2 {
        return Err(Error::InvalidInstance(format!(
            "need at least 2 points, got {}",
            raw.points.len()
        )));
    }
    if raw.k < 2 || raw.k > raw.points.len() {
        return Err(Error::InvalidInstance(format!(
            "k must satisfy 2 <= k <= n, got k={} n={}",
            raw.k,
            raw.points.len()
        )));
    }
    for (i, p) in raw.points.iter().enumerate() {
        if p.len() != raw.d {
            return Err(Error::InvalidInstance(format!(
                "point {} has {} coordinates, expected {}",
                i,
                p.len(),
                raw.d
            )));
        }
        if p.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInstance(format!(
                "point {i} has a non-finite coordinate"
            )));
        }
    }
    Ok(())
}

/// Snap a raw instance onto the integer grid `{0,...,L}^d`.
///
/// The bounding box is translated to the origin and scaled so its longest
/// side spans `[0, L]`; coordinates round half-up. The exact affine map
/// back to raw coordinates is recorded in [`Instance::scale`].
pub fn normalize(raw: &RawInstance, epsilon: f64) -> Result<Instance> {
    normalize_with(raw, epsilon, DEFAULT_C_L)
}

/// [`normalize`] with an explicit grid-bound constant.
pub fn normalize_with(raw: &RawInstance, epsilon: f64, c_l: f64) -> Result<Instance> {
    check_raw(raw)?;
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "epsilon must be positive and finite, got {epsilon}"
        )));
    }
    let n = raw.points.len();
    let d = raw.d;
    let l = next_pow2(c_l * n as f64 * (d as f64).sqrt() / epsilon);

    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for p in &raw.points {
        for (j, &c) in p.iter().enumerate() {
            lo[j] = lo[j].min(c);
            hi[j] = hi[j].max(c);
        }
    }
    let side = lo
        .iter()
        .zip(&hi)
        .map(|(&a, &b)| b - a)
        .fold(0.0f64, f64::max);

    // All points coincide: everything maps to the origin, unit scale.
    let factor = if side > 0.0 { side / l as f64 } else { 1.0 };

    let points = raw
        .points
        .iter()
        .map(|p| {
            p.iter()
                .zip(&lo)
                .map(|(&c, &o)| {
                    let g = ((c - o) / factor).round() as i64;
                    g.clamp(0, l)
                })
                .collect()
        })
        .collect();

    Ok(Instance {
        points,
        d,
        k: raw.k,
        l,
        scale: ScaleMap { factor, offset: lo },
    })
}

/// Derive solver parameters from the instance shape, with default constants.
pub fn derive_params(epsilon: f64, _n: usize, d: usize, l: i64) -> Params {
    derive_params_with(epsilon, _n, d, l, DEFAULT_C_R, DEFAULT_C_M)
}

/// [`derive_params`] with explicit constants.
///
/// Shrinking `epsilon` never shrinks `r` or `m_tilde`.
pub fn derive_params_with(
    epsilon: f64,
    _n: usize,
    d: usize,
    l: i64,
    c_r: f64,
    c_m: f64,
) -> Params {
    assert!(epsilon > 0.0 && d >= 2 && l >= 1);
    let r = (c_r / epsilon).ceil() as u32;
    let log2_l = (l as f64).log2().max(1.0);
    let base = c_m * (d as f64).sqrt() / epsilon * log2_l;
    let m_tilde = (base.powi(d as i32 - 1)).ceil().max(1.0) as u64;
    let grid_cap = (r as u64).pow(2 * d as u32 - 2);
    let facet_cross_cap = (r as u64).pow(d as u32 - 1);
    Params {
        epsilon,
        r,
        m_tilde,
        grid_cap,
        facet_cross_cap,
    }
}

// ── instance text format ────────────────────────────────────────────────
//
//   n d k
//   x_1 ... x_d        (n lines)
//
// Blank lines and lines starting with `#` are ignored.

/// Parse the plain-text instance format.
pub fn parse_instance(text: &str) -> Result<RawInstance> {
    let mut header: Option<(usize, usize, usize)> = None;
    let mut points: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        match header {
            None => {
                if fields.len() != 3 {
                    return Err(Error::InvalidInstance(format!(
                        "line {lineno}: header must be `n d k`, got {} fields",
                        fields.len()
                    )));
                }
                let parse = |s: &str, what: &str| -> Result<usize> {
                    s.parse().map_err(|_| {
                        Error::InvalidInstance(format!("line {lineno}: bad {what} `{s}`"))
                    })
                };
                header = Some((
                    parse(fields[0], "n")?,
                    parse(fields[1], "d")?,
                    parse(fields[2], "k")?,
                ));
            }
            Some((n, d, _)) => {
                if points.len() == n {
                    return Err(Error::InvalidInstance(format!(
                        "line {lineno}: more than {n} point lines"
                    )));
                }
                if fields.len() != d {
                    return Err(Error::InvalidInstance(format!(
                        "line {lineno}: expected {d} coordinates, got {}",
                        fields.len()
                    )));
                }
                let mut p = Vec::with_capacity(d);
                for f in fields {
                    p.push(f.parse::<f64>().map_err(|_| {
                        Error::InvalidInstance(format!("line {lineno}: bad coordinate `{f}`"))
                    })?);
                }
                points.push(p);
            }
        }
    }
    let (n, d, k) =
        header.ok_or_else(|| Error::InvalidInstance("empty instance file".into()))?;
    if points.len() != n {
        return Err(Error::InvalidInstance(format!(
            "header promises {n} points, file has {}",
            points.len()
        )));
    }
    let raw = RawInstance { points, d, k };
    check_raw(&raw)?;
    Ok(raw)
}

/// Serialize an instance in the plain-text format.
pub fn write_instance(raw: &RawInstance) -> String {
    let mut out = String::new();
    out.push_str(&format!("{} {} {}\n", raw.points.len(), raw.d, raw.k));
    for p in &raw.points {
        let fields: Vec<String> = p.iter().map(|c| format!("{c}")).collect();
        out.push_str(&fields.join(" "));
        out.push('\n');
    }
    out
}
