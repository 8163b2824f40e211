use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::persistence::PersistenceDiagram;
use crate::error::{invalid, Result};

/// Piecewise-linear landscape functions stored as breakpoints `[t, value]`.
///
/// `levels[k - 1]` is `lambda(k, .)`; each function is zero outside the
/// range of its breakpoints. Trailing all-zero levels are not stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Landscape {
    pub levels: Vec<Vec<[f64; 2]>>,
    pub domain_end: f64,
}

fn eval_pl(f: &[[f64; 2]], t: f64) -> f64 {
    if f.is_empty() || t < f[0][0] || t > f[f.len() - 1][0] {
        return 0.0;
    }
    let j = f.partition_point(|p| p[0] <= t);
    if j == 0 {
        return f[0][1];
    }
    if j == f.len() {
        return f[j - 1][1];
    }
    let (a, b) = (f[j - 1], f[j]);
    if b[0] == a[0] {
        return b[1];
    }
    a[1] + (b[1] - a[1]) * (t - a[0]) / (b[0] - a[0])
}

/// Drops interior breakpoints lying on the segment of their neighbours and
/// surplus zeros at both ends.
fn simplify(points: Vec<[f64; 2]>) -> Vec<[f64; 2]> {
    let mut out: Vec<[f64; 2]> = Vec::with_capacity(points.len());
    for p in points {
        if let Some(last) = out.last() {
            if p[0] <= last[0] {
                continue;
            }
        }
        while out.len() >= 2 {
            let (a, b) = (out[out.len() - 2], out[out.len() - 1]);
            let interp = a[1] + (p[1] - a[1]) * (b[0] - a[0]) / (p[0] - a[0]);
            if (interp - b[1]).abs() <= 1e-15 * (1.0 + b[1].abs()) {
                out.pop();
            } else {
                break;
            }
        }
        out.push(p);
    }
    let first = out.iter().position(|p| p[1] != 0.0);
    let Some(first) = first else { return Vec::new() };
    let last = out.iter().rposition(|p| p[1] != 0.0).expect("nonzero exists");
    out[first.saturating_sub(1)..=(last + 1).min(out.len() - 1)].to_vec()
}

fn tent(b: f64, d: f64, t: f64) -> f64 {
    (t - b).min(d - t).max(0.0)
}

impl Landscape {
    pub fn empty(domain_end: f64) -> Self {
        Self { levels: Vec::new(), domain_end }
    }

    /// Number of stored (nonzero) levels.
    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    /// `lambda(k, t)` with `k >= 1`.
    pub fn value(&self, k: usize, t: f64) -> f64 {
        match k.checked_sub(1).and_then(|i| self.levels.get(i)) {
            Some(f) => eval_pl(f, t),
            None => 0.0,
        }
    }

    /// Exact landscape of tents `(b, d)` with `d > b`.
    pub fn from_pairs(pairs: &[(f64, f64)], domain_end: f64) -> Result<Self> {
        let tents: Vec<(f64, f64)> = pairs.iter().copied().filter(|(b, d)| d > b).collect();
        if let Some(&(_, d)) = tents.iter().max_by(|a, b| a.1.total_cmp(&b.1)) {
            if !(domain_end >= d) {
                return Err(invalid(format!("domain end {domain_end} is below the largest death {d}")));
            }
        }
        if pairs.iter().any(|(b, d)| !b.is_finite() || !d.is_finite() || d < b) {
            return Err(invalid("pairs must be finite with death >= birth"));
        }
        if tents.is_empty() {
            return Ok(Self::empty(domain_end));
        }
        // Ordering between tents changes only at tent corners and where a
        // rising edge meets a falling one.
        let mut ts: Vec<f64> = Vec::with_capacity(3 * tents.len());
        for &(b, d) in &tents {
            ts.extend([b, 0.5 * (b + d), d]);
        }
        for &(bi, di) in &tents {
            for &(bj, dj) in &tents {
                if bi < dj && bj < di {
                    let t = 0.5 * (bi + dj);
                    if t > bi.max(bj) && t < di.min(dj) {
                        ts.push(t);
                    }
                }
            }
        }
        ts.sort_by(f64::total_cmp);
        ts.dedup();
        let n = tents.len();
        let mut levels: Vec<Vec<[f64; 2]>> = vec![Vec::with_capacity(ts.len()); n];
        let mut values = Vec::with_capacity(n);
        for &t in &ts {
            values.clear();
            values.extend(tents.iter().map(|&(b, d)| tent(b, d, t)));
            values.sort_by(|a, b| b.total_cmp(a));
            for (k, &v) in values.iter().enumerate() {
                levels[k].push([t, v]);
            }
        }
        let levels: Vec<Vec<[f64; 2]>> = levels.into_iter().map(simplify).take_while(|f| !f.is_empty()).collect();
        Ok(Self { levels, domain_end })
    }

    /// Weighted pointwise combination `sum_i w_i f_i`, exact on the union of
    /// breakpoints.
    pub fn weighted_sum(items: &[(&Landscape, f64)]) -> Self {
        let domain_end = items.iter().map(|(l, _)| l.domain_end).fold(0.0, f64::max);
        let depth = items.iter().map(|(l, _)| l.depth()).max().unwrap_or(0);
        let mut levels = Vec::with_capacity(depth);
        for k in 0..depth {
            // Each function contributes slope changes at its breakpoints;
            // sweeping them in order rebuilds the sum.
            let mut events: Vec<(f64, f64)> = Vec::new();
            for (l, w) in items {
                let Some(f) = l.levels.get(k) else { continue };
                if f.len() < 2 || *w == 0.0 {
                    continue;
                }
                let mut prev_slope = 0.0;
                for j in 0..f.len() {
                    let slope = if j + 1 < f.len() { (f[j + 1][1] - f[j][1]) / (f[j + 1][0] - f[j][0]) } else { 0.0 };
                    events.push((f[j][0], w * (slope - prev_slope)));
                    prev_slope = slope;
                }
            }
            events.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut points: Vec<[f64; 2]> = Vec::with_capacity(events.len());
            let (mut value, mut slope) = (0.0, 0.0);
            let mut i = 0;
            while i < events.len() {
                let t = events[i].0;
                if let Some(last) = points.last() {
                    value += slope * (t - last[0]);
                }
                while i < events.len() && events[i].0 == t {
                    slope += events[i].1;
                    i += 1;
                }
                points.push([t, value.max(0.0)]);
            }
            if let Some(last) = points.last_mut() {
                last[1] = 0.0;
            }
            levels.push(simplify(points));
        }
        while levels.last().is_some_and(|f| f.is_empty()) {
            levels.pop();
        }
        Self { levels, domain_end }
    }

    pub fn write_csv(&self, out: &mut impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["k", "t", "value"])?;
        for (k, f) in self.levels.iter().enumerate() {
            for p in f {
                w.write_record([(k + 1).to_string(), p[0].to_string(), p[1].to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv_file(&self, path: &Path) -> Result<()> {
        self.write_csv(&mut std::fs::File::create(path)?)
    }
}

/// Largest finite death over the given diagrams (the default domain end).
pub fn default_domain_end<'a>(diagrams: impl IntoIterator<Item = &'a PersistenceDiagram>) -> f64 {
    diagrams.into_iter().map(PersistenceDiagram::max_death).fold(0.0, f64::max)
}

/// Landscape of one homology dimension; the essential class never enters.
pub fn landscape_from_diagram(diag: &PersistenceDiagram, dimension: usize, domain_end: f64) -> Result<Landscape> {
    if dimension > 1 {
        return Err(invalid(format!("no homology in dimension {dimension} for planar clouds")));
    }
    Landscape::from_pairs(diag.pairs(dimension), domain_end)
}

pub fn mean_landscape(landscapes: &[Landscape]) -> Result<Landscape> {
    if landscapes.is_empty() {
        return Err(invalid("mean of no landscapes"));
    }
    let w = 1.0 / landscapes.len() as f64;
    Ok(Landscape::weighted_sum(&landscapes.iter().map(|l| (l, w)).collect::<Vec<_>>()))
}

/// Weighted mean; weights are normalised to sum to one.
pub fn weighted_mean_landscape(landscapes: &[Landscape], weights: &[f64]) -> Result<Landscape> {
    if landscapes.is_empty() || landscapes.len() != weights.len() {
        return Err(invalid("need one weight per landscape"));
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) || weights.iter().any(|w| *w < 0.0 || !w.is_finite()) {
        return Err(invalid("weights must be nonnegative with positive sum"));
    }
    Ok(Landscape::weighted_sum(&landscapes.iter().zip(weights).map(|(l, w)| (l, w / total)).collect::<Vec<_>>()))
}

fn level_sq_distance(a: &[[f64; 2]], b: &[[f64; 2]], t_end: f64) -> f64 {
    let mut ts: Vec<f64> = a.iter().chain(b).map(|p| p[0]).filter(|&t| t <= t_end).collect();
    if a.iter().chain(b).any(|p| p[0] > t_end) {
        ts.push(t_end);
    }
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    let mut total = 0.0;
    let mut prev: Option<(f64, f64)> = None;
    for &t in &ts {
        let d = eval_pl(a, t) - eval_pl(b, t);
        if let Some((t0, d0)) = prev {
            total += (t - t0) * (d0 * d0 + d0 * d + d * d) / 3.0;
        }
        prev = Some((t, d));
    }
    total
}

/// `[sum_k int_0^T (a(k,t) - b(k,t))^2 dt]^(1/2)` with `T` the larger domain
/// end; computed exactly on the merged breakpoints.
pub fn landscape_l2_distance(a: &Landscape, b: &Landscape) -> f64 {
    let t_end = a.domain_end.max(b.domain_end);
    let depth = a.depth().max(b.depth());
    let empty: Vec<[f64; 2]> = Vec::new();
    (0..depth)
        .map(|k| level_sq_distance(a.levels.get(k).unwrap_or(&empty), b.levels.get(k).unwrap_or(&empty), t_end))
        .sum::<f64>()
        .sqrt()
}

/// Prefix integrals of a fixed landscape, for fast distances from many
/// landscapes to the same reference.
#[derive(Debug, Clone)]
pub struct LandscapeMoments {
    levels: Vec<LevelMoments>,
}

#[derive(Debug, Clone)]
struct LevelMoments {
    points: Vec<[f64; 2]>,
    /// `int m` and `int t m` from the first breakpoint to each breakpoint.
    i0: Vec<f64>,
    i1: Vec<f64>,
    sq: f64,
}

fn seg_moments(a: [f64; 2], b: [f64; 2]) -> (f64, f64) {
    let h = b[0] - a[0];
    (0.5 * h * (a[1] + b[1]), h / 6.0 * (a[0] * (2.0 * a[1] + b[1]) + b[0] * (a[1] + 2.0 * b[1])))
}

impl LevelMoments {
    fn new(points: &[[f64; 2]]) -> Self {
        let mut i0 = vec![0.0; points.len()];
        let mut i1 = vec![0.0; points.len()];
        let mut sq = 0.0;
        for j in 1..points.len() {
            let (a, b) = (points[j - 1], points[j]);
            let (m0, m1) = seg_moments(a, b);
            i0[j] = i0[j - 1] + m0;
            i1[j] = i1[j - 1] + m1;
            sq += (b[0] - a[0]) * (a[1] * a[1] + a[1] * b[1] + b[1] * b[1]) / 3.0;
        }
        Self { points: points.to_vec(), i0, i1, sq }
    }

    /// `(int m, int t m)` from the first breakpoint to `t`.
    fn prefix(&self, t: f64) -> (f64, f64) {
        let p = &self.points;
        if p.is_empty() || t <= p[0][0] {
            return (0.0, 0.0);
        }
        let last = p.len() - 1;
        if t >= p[last][0] {
            return (self.i0[last], self.i1[last]);
        }
        let j = p.partition_point(|q| q[0] <= t) - 1;
        let (m0, m1) = seg_moments(p[j], [t, eval_pl(p, t)]);
        (self.i0[j] + m0, self.i1[j] + m1)
    }
}

impl LandscapeMoments {
    pub fn new(reference: &Landscape) -> Self {
        Self { levels: reference.levels.iter().map(|f| LevelMoments::new(f)).collect() }
    }

    /// Squared L2 distance from `other` to the reference.
    pub fn sq_distance(&self, other: &Landscape) -> f64 {
        let depth = self.levels.len().max(other.depth());
        let mut total = 0.0;
        for k in 0..depth {
            let m = self.levels.get(k);
            total += m.map_or(0.0, |m| m.sq);
            let Some(f) = other.levels.get(k) else { continue };
            let mut prev = m.map(|m| m.prefix(f.first().map_or(0.0, |p| p[0])));
            for w in f.windows(2) {
                let (a, b) = (w[0], w[1]);
                let h = b[0] - a[0];
                total += h * (a[1] * a[1] + a[1] * b[1] + b[1] * b[1]) / 3.0;
                if let Some(m) = m {
                    let cur = m.prefix(b[0]);
                    let p = prev.expect("set with m");
                    let beta = (b[1] - a[1]) / h;
                    let alpha = a[1] - beta * a[0];
                    total -= 2.0 * (alpha * (cur.0 - p.0) + beta * (cur.1 - p.1));
                    prev = Some(cur);
                }
            }
        }
        total.max(0.0)
    }
}

pub fn write_diagram_csv(diag: &PersistenceDiagram, out: &mut impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["dimension", "birth", "death"])?;
    for (dim, pairs) in [(0, &diag.pairs_h0), (1, &diag.pairs_h1)] {
        for (b, d) in pairs {
            w.write_record([dim.to_string(), b.to_string(), d.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}
