//! Packing numbers and minimal enclosing balls.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

const EXACT_LIMIT: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PackingResult {
    pub count: usize,
    /// `false` when the greedy lower bound was used.
    pub exact: bool,
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Largest subset of `points` with pairwise distances `> delta`. Exact search
/// up to 20 points; greedy (in the given order) above that.
pub fn packing_number_bruteforce(points: &[Vec<f64>], delta: f64) -> PackingResult {
    let n = points.len();
    if n == 0 {
        return PackingResult { count: 0, exact: true };
    }
    if n > EXACT_LIMIT {
        let mut chosen: Vec<&Vec<f64>> = Vec::new();
        for p in points {
            if chosen.iter().all(|q| dist(p, q) > delta) {
                chosen.push(p);
            }
        }
        return PackingResult { count: chosen.len(), exact: false };
    }
    // compatible[i]: points that may coexist with i
    let compatible: Vec<u32> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| j != i && dist(&points[i], &points[j]) > delta)
                .fold(0u32, |m, j| m | (1 << j))
        })
        .collect();
    fn best(candidates: u32, size: usize, compatible: &[u32], record: &mut usize) {
        if candidates == 0 {
            *record = (*record).max(size);
            return;
        }
        if size + candidates.count_ones() as usize <= *record {
            return;
        }
        let i = candidates.trailing_zeros() as usize;
        let rest = candidates & !(1 << i);
        best(rest & compatible[i], size + 1, compatible, record);
        best(rest, size, compatible, record);
    }
    let mut record = 0;
    best((1u32 << n) - 1, 0, &compatible, &mut record);
    PackingResult { count: record, exact: true }
}

/// Volume of the unit ball in `ℝ^n`.
pub fn unit_ball_volume(n: usize) -> f64 {
    match n {
        0 => 1.0,
        1 => 2.0,
        _ => 2.0 * std::f64::consts::PI / n as f64 * unit_ball_volume(n - 2),
    }
}

/// `3^n vol(K) / (δ^n vol(B))`, valid for convex `K` containing a ball of radius `δ`.
pub fn packing_volume_bound(n: usize, volume: f64, delta: f64) -> f64 {
    3f64.powi(n as i32) * volume / (delta.powi(n as i32) * unit_ball_volume(n))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JungReport {
    pub meb_radius: f64,
    pub diam: f64,
    pub bound: f64,
    pub pass: bool,
}

/// Centre and radius of the smallest ball with all `boundary` points on its
/// surface (the circumball within their affine hull).
fn circumball(boundary: &[&[f64]], dim: usize) -> Option<(Vec<f64>, f64)> {
    match boundary.len() {
        0 => None,
        1 => Some((boundary[0].to_vec(), 0.0)),
        k => {
            let p0 = boundary[0];
            let v: Vec<Vec<f64>> = boundary[1..].iter().map(|p| p.iter().zip(p0).map(|(a, b)| a - b).collect()).collect();
            let m = k - 1;
            // Gram system G λ = b with b_i = |v_i|^2 / 2
            let mut a = vec![vec![0.0; m + 1]; m];
            for i in 0..m {
                for j in 0..m {
                    a[i][j] = v[i].iter().zip(&v[j]).map(|(x, y)| x * y).sum();
                }
                a[i][m] = a[i][i] / 2.0;
            }
            let lambda = solve(a)?;
            let mut c = p0.to_vec();
            for (l, vi) in lambda.iter().zip(&v) {
                for d in 0..dim {
                    c[d] += l * vi[d];
                }
            }
            let r = dist(&c, p0);
            Some((c, r))
        }
    }
}

/// Gaussian elimination with partial pivoting on an augmented matrix.
fn solve(mut a: Vec<Vec<f64>>) -> Option<Vec<f64>> {
    let m = a.len();
    for col in 0..m {
        let pivot = (col..m).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-14 {
            return None;
        }
        a.swap(col, pivot);
        for row in 0..m {
            if row != col {
                let f = a[row][col] / a[col][col];
                for k in col..=m {
                    a[row][k] -= f * a[col][k];
                }
            }
        }
    }
    Some((0..m).map(|i| a[i][m] / a[i][i]).collect())
}

fn contains(ball: &(Vec<f64>, f64), p: &[f64]) -> bool {
    dist(&ball.0, p) <= ball.1 * (1.0 + 1e-10) + 1e-12
}

fn welzl(points: &[&[f64]], boundary: &mut Vec<usize>, all: &[&[f64]], dim: usize) -> (Vec<f64>, f64) {
    let support: Vec<&[f64]> = boundary.iter().map(|&i| all[i]).collect();
    if points.is_empty() || boundary.len() == dim + 1 {
        return circumball(&support, dim).unwrap_or_else(|| (vec![0.0; dim], -1.0));
    }
    let (&p, rest) = points.split_last().unwrap();
    let ball = welzl(rest, boundary, all, dim);
    if ball.1 >= 0.0 && contains(&ball, p) {
        return ball;
    }
    let index = all.iter().position(|q| std::ptr::eq(*q, p)).unwrap();
    boundary.push(index);
    let ball = welzl(rest, boundary, all, dim);
    boundary.pop();
    ball
}

/// Minimal enclosing ball by Welzl's algorithm on a fixed shuffle.
pub fn min_enclosing_ball(points: &[Vec<f64>]) -> Result<(Vec<f64>, f64)> {
    let dim = points.first().map_or(0, |p| p.len());
    if points.is_empty() || dim == 0 || dim > 3 || points.len() > 50 {
        return Err(Error::Capability("enclosing-ball solver handles 1..=50 points in n <= 3".into()));
    }
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::InvalidArgument("points have mixed dimensions".into()));
    }
    let mut order: Vec<&[f64]> = points.iter().map(|p| p.as_slice()).collect();
    order.shuffle(&mut rng::aux_stream(0x5eed));
    let all = order.clone();
    Ok(welzl(&order, &mut Vec::new(), &all, dim))
}

/// Brute force: smallest circumball over subsets of size `<= n+1` that
/// contains every point. For cross-checking small inputs.
pub fn min_enclosing_ball_bruteforce(points: &[Vec<f64>]) -> f64 {
    let dim = points[0].len();
    let n = points.len();
    let mut best = f64::INFINITY;
    let mut subset = Vec::new();
    fn rec(start: usize, subset: &mut Vec<usize>, points: &[Vec<f64>], dim: usize, best: &mut f64) {
        if !subset.is_empty() {
            let refs: Vec<&[f64]> = subset.iter().map(|&i| points[i].as_slice()).collect();
            if let Some(ball) = circumball(&refs, dim) {
                if ball.1 < *best && points.iter().all(|p| contains(&ball, p)) {
                    *best = ball.1;
                }
            }
        }
        if subset.len() == dim + 1 {
            return;
        }
        for i in start..points.len() {
            subset.push(i);
            rec(i + 1, subset, points, dim, best);
            subset.pop();
        }
    }
    let _ = n;
    rec(0, &mut subset, points, dim, &mut best);
    best
}

pub fn diameter(points: &[Vec<f64>]) -> f64 {
    let mut d: f64 = 0.0;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            d = d.max(dist(&points[i], &points[j]));
        }
    }
    d
}

/// Compare the minimal enclosing radius against `diam · sqrt(n / (2(n+1)))`.
pub fn jung_radius_check(points: &[Vec<f64>]) -> Result<JungReport> {
    let (_, meb_radius) = min_enclosing_ball(points)?;
    let n = points[0].len() as f64;
    let diam = diameter(points);
    let bound = diam * (n / (2.0 * (n + 1.0))).sqrt();
    Ok(JungReport { meb_radius, diam, bound, pass: meb_radius <= bound + 1e-9 })
}
