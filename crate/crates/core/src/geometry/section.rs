//! Planar section of a 3D Voronoi diagram computed as a 2D power diagram.
//!
//! A point `x` of the plane belongs to generator `i` iff
//! `|x - q_i|^2 + d_i^2 <= |x - q_j|^2 + d_j^2` for all `j`, where `q` is the
//! projection onto the plane and `d` the distance to it. Each cell is built by
//! clipping a start polygon with these half-planes; neighbours are visited in
//! shells of a 3D bucket grid until no unvisited generator can reach the cell.

use std::collections::VecDeque;

use super::polygon::LabelledPolygon;
use super::{Cell, GeneratorSet, SectionPlane, SectionTessellation, Visibility};
use crate::error::{invalid, Error, Result};

/// Generators in plane-local coordinates `(u, v, w)`, `w` being the signed
/// distance to the plane.
struct LocalGrid {
    pos: Vec<[f64; 3]>,
    origin: [f64; 3],
    len: [f64; 3],
    bins: [usize; 3],
    periodic: bool,
    start: Vec<usize>,
    items: Vec<usize>,
}

impl LocalGrid {
    fn new(pos: Vec<[f64; 3]>, origin: [f64; 3], len: [f64; 3], periodic: bool) -> Self {
        let n = pos.len().max(1) as f64;
        let volume: f64 = len.iter().product();
        let h = (2.0 * volume / n).cbrt();
        let bins = len.map(|l| ((l / h).floor() as usize).clamp(1, 512));
        let total = bins[0] * bins[1] * bins[2];
        let mut counts = vec![0usize; total + 1];
        let keys: Vec<usize> = pos
            .iter()
            .map(|p| {
                let b = Self::bin_of(p, &origin, &len, &bins);
                (b[2] * bins[1] + b[1]) * bins[0] + b[0]
            })
            .collect();
        for &k in &keys {
            counts[k + 1] += 1;
        }
        for i in 0..total {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut items = vec![0; pos.len()];
        for (i, &k) in keys.iter().enumerate() {
            items[fill[k]] = i;
            fill[k] += 1;
        }
        Self { pos, origin, len, bins, periodic, start: counts, items }
    }

    fn bin_of(p: &[f64; 3], origin: &[f64; 3], len: &[f64; 3], bins: &[usize; 3]) -> [usize; 3] {
        let mut b = [0; 3];
        for d in 0..3 {
            let t = ((p[d] - origin[d]) / len[d] * bins[d] as f64).floor();
            b[d] = (t.max(0.0) as usize).min(bins[d] - 1);
        }
        b
    }

    fn bin_size(&self, d: usize) -> f64 {
        self.len[d] / self.bins[d] as f64
    }
}

/// Planar section of the Voronoi diagram of `gen` by `plane`.
///
/// In periodic mode the window must be the full box face; every cell is
/// returned whole, in unwrapped coordinates around its generator, so the
/// cells tile the window as a torus. In bounded mode cells are clipped to the
/// window.
pub fn section_tessellation(gen: &GeneratorSet, plane: &SectionPlane) -> Result<SectionTessellation> {
    if gen.is_empty() {
        return Err(Error::EmptyGenerators);
    }
    let geometry = gen.geometry;
    let l = geometry.lengths();
    let a = plane.axis();
    let (ua, va) = plane.plane_axes();
    let periodic = geometry.is_periodic();
    let window = plane.window;

    if periodic {
        let full = window.x0 == 0.0 && window.y0 == 0.0 && window.x1 == l[ua] && window.y1 == l[va];
        if !full {
            return Err(invalid("periodic sections require the full box face as window"));
        }
    } else if !(plane.offset > 0.0 && plane.offset < l[a]) {
        return Ok(SectionTessellation { cells: vec![], window, periodic, degenerate: true });
    }

    let pos: Vec<[f64; 3]> = gen
        .points
        .iter()
        .map(|p| {
            let mut w = p[a] - plane.offset;
            if periodic {
                w -= l[a] * (w / l[a]).round();
                if w >= 0.5 * l[a] {
                    w -= l[a];
                }
            }
            [p[ua], p[va], w]
        })
        .collect();
    let origin = if periodic { [0.0, 0.0, -0.5 * l[a]] } else { [0.0, 0.0, -plane.offset] };
    let grid = LocalGrid::new(pos, origin, [l[ua], l[va], l[a]], periodic);

    let tol = 1e-12 * window.diagonal();
    let start = nearest_generator(&grid, window.center());
    let mut visited = vec![false; grid.pos.len()];
    let mut queue = VecDeque::from([start]);
    visited[start] = true;
    let mut cells = Vec::new();
    while let Some(i) = queue.pop_front() {
        let Some(poly) = build_cell(&grid, i, plane, tol) else { continue };
        for &j in poly.labels.iter().flatten() {
            if !visited[j] {
                visited[j] = true;
                queue.push_back(j);
            }
        }
        let q = grid.pos[i];
        let clipped = poly.labels.iter().any(Option::is_none);
        cells.push(Cell {
            vertices: poly.vertices.iter().map(|v| [v[0] + q[0], v[1] + q[1]]).collect(),
            generator_id: i,
            visibility: if clipped { Visibility::Clipped } else { Visibility::Complete },
            neighbors: poly.labels,
        });
    }
    cells.sort_by_key(|c| c.generator_id);
    Ok(SectionTessellation { cells, window, periodic, degenerate: false })
}

fn nearest_generator(grid: &LocalGrid, x: [f64; 2]) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (i, p) in grid.pos.iter().enumerate() {
        let mut du = x[0] - p[0];
        let mut dv = x[1] - p[1];
        if grid.periodic {
            du -= grid.len[0] * (du / grid.len[0]).round();
            dv -= grid.len[1] * (dv / grid.len[1]).round();
        }
        let d = du * du + dv * dv + p[2] * p[2];
        if d < best.0 {
            best = (d, i);
        }
    }
    best.1
}

fn max_radius(poly: &LabelledPolygon, w: f64) -> f64 {
    poly.vertices
        .iter()
        .map(|v| v[0] * v[0] + v[1] * v[1])
        .fold(w * w, |acc, r2| acc.max(r2 + w * w))
        .sqrt()
}

/// Power cell of generator `i` in coordinates relative to its projection.
fn build_cell(grid: &LocalGrid, i: usize, plane: &SectionPlane, tol: f64) -> Option<LabelledPolygon> {
    let p = grid.pos[i];
    let mut poly = if grid.periodic {
        let (hu, hv) = (0.5 * grid.len[0], 0.5 * grid.len[1]);
        LabelledPolygon::rect(-hu, -hv, hu, hv, Some(i))
    } else {
        let w = plane.window;
        LabelledPolygon::rect(w.x0 - p[0], w.y0 - p[1], w.x1 - p[0], w.y1 - p[1], None)
    };
    let home = LocalGrid::bin_of(&p, &grid.origin, &grid.len, &grid.bins);
    let h_min = (0..3).map(|d| grid.bin_size(d)).fold(f64::INFINITY, f64::min);
    let max_shell = grid.bins.iter().copied().max().unwrap_or(1) as i64;
    let mut radius = max_radius(&poly, p[2]);

    let mut s: i64 = 0;
    loop {
        for dz in -s..=s {
            for dy in -s..=s {
                for dx in -s..=s {
                    if dx.abs().max(dy.abs()).max(dz.abs()) != s {
                        continue;
                    }
                    let off = [dx, dy, dz];
                    let mut bin = [0usize; 3];
                    let mut shift = [0.0; 3];
                    let mut skip = false;
                    for d in 0..3 {
                        let t = home[d] as i64 + off[d];
                        let nb = grid.bins[d] as i64;
                        if grid.periodic {
                            let m = t.div_euclid(nb);
                            bin[d] = t.rem_euclid(nb) as usize;
                            shift[d] = m as f64 * grid.len[d];
                        } else if t < 0 || t >= nb {
                            skip = true;
                            break;
                        } else {
                            bin[d] = t as usize;
                        }
                    }
                    if skip {
                        continue;
                    }
                    // Bin extent in unwrapped local coordinates.
                    let mut gap2 = 0.0;
                    let mut w_range = (0.0, 0.0);
                    for d in 0..3 {
                        let lo = grid.origin[d] + bin[d] as f64 * grid.bin_size(d) + shift[d];
                        let hi = lo + grid.bin_size(d);
                        let g = if p[d] < lo { lo - p[d] } else if p[d] > hi { p[d] - hi } else { 0.0 };
                        gap2 += g * g;
                        if d == 2 {
                            w_range = (lo, hi);
                        }
                    }
                    // A generator can only cut the cell if it is within 2R of
                    // the generator and within R of the plane.
                    if gap2 >= 4.0 * radius * radius || w_range.0 >= radius || w_range.1 <= -radius {
                        continue;
                    }
                    let key = (bin[2] * grid.bins[1] + bin[1]) * grid.bins[0] + bin[0];
                    for &j in &grid.items[grid.start[key]..grid.start[key + 1]] {
                        if j == i && shift == [0.0; 3] {
                            continue;
                        }
                        let q = grid.pos[j];
                        let (qu, qv, qw) = (q[0] + shift[0], q[1] + shift[1], q[2] + shift[2]);
                        if qw.abs() >= radius {
                            continue;
                        }
                        let dq = [qu - p[0], qv - p[1]];
                        let dq2 = dq[0] * dq[0] + dq[1] * dq[1];
                        let dw = qw * qw - p[2] * p[2];
                        if dq2 == 0.0 {
                            if dw < 0.0 || (dw == 0.0 && j < i) {
                                return None;
                            }
                            continue;
                        }
                        if dq2 + (qw - p[2]).powi(2) >= 4.0 * radius * radius {
                            continue;
                        }
                        poly.clip(dq, 0.5 * (dq2 + dw), Some(j));
                        if poly.is_empty() {
                            return None;
                        }
                    }
                }
            }
        }
        poly.dedup(tol);
        if poly.is_empty() {
            return None;
        }
        radius = max_radius(&poly, p[2]);
        if s as f64 * h_min >= 2.0 * radius || (!grid.periodic && s > max_shell) {
            break;
        }
        s += 1;
    }
    Some(poly)
}
