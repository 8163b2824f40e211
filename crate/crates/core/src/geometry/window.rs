use super::polygon::{distance_to_boundary, polygon_area, LabelledPolygon};
use super::{Cell, Rect, SectionTessellation, Visibility};
use crate::error::{invalid, Error, Result};

fn edge_on_rect(a: [f64; 2], b: [f64; 2], r: &Rect, tol: f64) -> bool {
    let near = |x: f64, y: f64| (x - y).abs() <= tol;
    (near(a[0], r.x0) && near(b[0], r.x0))
        || (near(a[0], r.x1) && near(b[0], r.x1))
        || (near(a[1], r.y0) && near(b[1], r.y0))
        || (near(a[1], r.y1) && near(b[1], r.y1))
}

fn shifts(tess: &SectionTessellation) -> Vec<[f64; 2]> {
    if !tess.periodic {
        return vec![[0.0, 0.0]];
    }
    let (w, h) = (tess.window.width(), tess.window.height());
    let mut out = Vec::with_capacity(9);
    for sx in [-1.0, 0.0, 1.0] {
        for sy in [-1.0, 0.0, 1.0] {
            out.push([sx * w, sy * h]);
        }
    }
    out
}

/// Pieces of every cell inside `rect`, with visibility recomputed.
fn clip_to_rect(tess: &SectionTessellation, rect: &Rect) -> Vec<Cell> {
    let tol = 1e-12 * tess.window.diagonal();
    let area_tol = 1e-14 * tess.window_area();
    let mut out = Vec::new();
    for cell in &tess.cells {
        for s in shifts(tess) {
            let n = cell.vertices.len();
            let labels = if cell.neighbors.len() == n { cell.neighbors.clone() } else { vec![Some(usize::MAX); n] };
            let mut poly = LabelledPolygon {
                vertices: cell.vertices.iter().map(|v| [v[0] + s[0], v[1] + s[1]]).collect(),
                labels,
            };
            poly.clip([1.0, 0.0], rect.x1, None);
            poly.clip([-1.0, 0.0], -rect.x0, None);
            poly.clip([0.0, 1.0], rect.y1, None);
            poly.clip([0.0, -1.0], -rect.y0, None);
            poly.dedup(tol);
            if poly.is_empty() || polygon_area(&poly.vertices) <= area_tol {
                continue;
            }
            let m = poly.vertices.len();
            let clipped = (0..m).any(|i| edge_on_rect(poly.vertices[i], poly.vertices[(i + 1) % m], rect, tol));
            let neighbors = poly.labels.iter().map(|l| l.filter(|&j| j != usize::MAX)).collect();
            out.push(Cell {
                vertices: poly.vertices,
                generator_id: cell.generator_id,
                visibility: if clipped { Visibility::Clipped } else { Visibility::Complete },
                neighbors,
            });
        }
    }
    out
}

/// Shrinks the window around its centre until exactly `target` cells are
/// (fully or partially) visible, keeping the largest such window.
///
/// When the centre lies on a cell boundary the anchor is moved halfway
/// towards the centroid of the lowest-id cell containing it.
pub fn window_cut(tess: &SectionTessellation, target: usize) -> Result<SectionTessellation> {
    let n = tess.n_2d();
    if target == 0 {
        return Err(invalid("target cell count must be positive"));
    }
    if target > n {
        return Err(Error::InfeasibleTarget { target, available: n });
    }
    if clip_to_rect(tess, &tess.window).len() == target {
        return Ok(tess.clone());
    }
    let w = tess.window;
    let mut anchor = w.center();
    let band = 1e-9 * w.diagonal();
    if tess.cells.iter().any(|c| distance_to_boundary(&c.vertices, anchor) <= band) {
        if let Some(c) = tess.cells.iter().filter(|c| distance_to_boundary(&c.vertices, anchor) <= band).min_by_key(|c| c.generator_id) {
            let g = c.centroid();
            anchor = [0.5 * (anchor[0] + g[0]), 0.5 * (anchor[1] + g[1])];
        }
    }
    let (hw, hh) = (0.5 * w.width(), 0.5 * w.height());
    let s_max = [(anchor[0] - w.x0) / hw, (w.x1 - anchor[0]) / hw, (anchor[1] - w.y0) / hh, (w.y1 - anchor[1]) / hh]
        .into_iter()
        .fold(1.0f64, f64::min);
    let rect_at = |s: f64| Rect::new(anchor[0] - s * hw, anchor[1] - s * hh, anchor[0] + s * hw, anchor[1] + s * hh);
    let count = |s: f64| clip_to_rect(tess, &rect_at(s)).len();

    let full = count(s_max);
    if full == target {
        return Ok(SectionTessellation { cells: clip_to_rect(tess, &rect_at(s_max)), window: rect_at(s_max), periodic: false, degenerate: false });
    }
    if full < target {
        return Err(Error::InfeasibleTarget { target, available: full });
    }
    let (mut lo, mut hi) = (0.0, s_max);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if count(mid) <= target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let cells = clip_to_rect(tess, &rect_at(lo));
    if cells.len() != target {
        return Err(Error::InfeasibleTarget { target, available: cells.len() });
    }
    Ok(SectionTessellation { cells, window: rect_at(lo), periodic: false, degenerate: false })
}
