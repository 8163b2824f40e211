//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use pvtest::tda::{Filtration, IndexedPairs, Landscape, PersistenceDiagram};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_cloud(n: usize, seed: u64) -> Vec<[f64; 2]> {
    let mut r = rng(seed);
    (0..n).map(|_| [r.gen::<f64>(), r.gen::<f64>()]).collect()
}

/// Half-lengths of a Euclidean minimum spanning tree by Kruskal on the
/// complete graph, sorted ascending.
pub fn kruskal_half_lengths(points: &[[f64; 2]]) -> Vec<f64> {
    let n = points.len();
    let mut edges = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            let d = (points[i][0] - points[j][0]).hypot(points[i][1] - points[j][1]);
            edges.push((d, i, j));
        }
    }
    edges.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    let mut out = Vec::with_capacity(n - 1);
    for (d, i, j) in edges {
        let (a, b) = (find(&mut parent, i), find(&mut parent, j));
        if a != b {
            parent[a] = b;
            out.push(0.5 * d);
        }
    }
    out
}

/// Checks `V - E + F = beta0 - beta1` after every insertion; returns the
/// first failing position.
pub fn euler_violation(filt: &Filtration, pairs: &IndexedPairs) -> Option<usize> {
    let mut chi: i64 = 0;
    for (i, s) in filt.simplices.iter().enumerate() {
        chi += if s.dim % 2 == 0 { 1 } else { -1 };
        let alive = |p: &[(usize, usize)]| p.iter().filter(|&&(b, d)| b <= i && d > i).count() as i64;
        let b0 = alive(&pairs.h0) + pairs.essential.iter().filter(|&&b| b <= i).count() as i64;
        let b1 = alive(&pairs.h1);
        if chi != b0 - b1 {
            return Some(i);
        }
    }
    None
}

/// All tent values at `t`, sorted descending.
pub fn tents_desc(pairs: &[(f64, f64)], t: f64) -> Vec<f64> {
    let mut v: Vec<f64> = pairs.iter().map(|&(b, d)| (t - b).min(d - t).max(0.0)).collect();
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

/// Sup-norm difference between an exact landscape and the brute-force
/// k-th largest tent on `grid` points over `[0, t_end]`.
pub fn kmax_sup_error(l: &Landscape, pairs: &[(f64, f64)], t_end: f64, grid: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for g in 0..=grid {
        let t = t_end * g as f64 / grid as f64;
        let tents = tents_desc(pairs, t);
        for k in 1..=tents.len() + 1 {
            let brute = tents.get(k - 1).copied().unwrap_or(0.0);
            worst = worst.max((l.value(k, t) - brute).abs());
        }
    }
    worst
}

/// `sqrt(sum_k int (lambda_k - mu_k)^2)` by the midpoint rule with `m`
/// nodes, evaluating tents directly.
pub fn quadrature_distance(a: &[(f64, f64)], b: &[(f64, f64)], t_end: f64, m: usize) -> f64 {
    let h = t_end / m as f64;
    let mut sum = 0.0;
    for i in 0..m {
        let t = (i as f64 + 0.5) * h;
        let (ta, tb) = (tents_desc(a, t), tents_desc(b, t));
        let n = ta.len().max(tb.len());
        for k in 0..n {
            let d = ta.get(k).copied().unwrap_or(0.0) - tb.get(k).copied().unwrap_or(0.0);
            sum += d * d;
        }
    }
    (sum * h).sqrt()
}

pub fn finite_pairs(diag: &PersistenceDiagram, dim: usize) -> Vec<(f64, f64)> {
    diag.pairs(dim).to_vec()
}

pub fn weighted_mean(values: &[f64], weights: &[f64]) -> f64 {
    values.iter().zip(weights).map(|(v, w)| v * w).sum::<f64>() / weights.iter().sum::<f64>()
}

/// Fraction of weight on `pred`, with its Monte Carlo standard error under
/// weighted sampling.
pub fn weighted_rate(flags: &[bool], weights: &[f64]) -> (f64, f64) {
    let total: f64 = weights.iter().sum();
    let p = flags.iter().zip(weights).filter(|(f, _)| **f).map(|(_, w)| w).sum::<f64>() / total;
    let var: f64 = flags
        .iter()
        .zip(weights)
        .map(|(f, w)| {
            let x = if *f { 1.0 } else { 0.0 };
            (w / total).powi(2) * (x - p).powi(2)
        })
        .sum();
    (p, var.sqrt())
}
