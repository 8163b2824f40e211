use serde::{Deserialize, Serialize};

use super::Cell;
use crate::error::{invalid, Result};

/// Geometric characteristics of one section cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellMetrics {
    pub area: f64,
    pub perimeter: f64,
    pub n_edges: usize,
}

/// Shoelace area (positive for counter-clockwise order).
pub fn polygon_area(v: &[[f64; 2]]) -> f64 {
    if v.len() < 3 {
        return 0.0;
    }
    // Relative to the first vertex to limit cancellation.
    let o = v[0];
    let mut twice = 0.0;
    for w in v[1..].windows(2) {
        let a = [w[0][0] - o[0], w[0][1] - o[1]];
        let b = [w[1][0] - o[0], w[1][1] - o[1]];
        twice += a[0] * b[1] - a[1] * b[0];
    }
    0.5 * twice
}

pub fn polygon_perimeter(v: &[[f64; 2]]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    (0..v.len())
        .map(|i| {
            let a = v[i];
            let b = v[(i + 1) % v.len()];
            (b[0] - a[0]).hypot(b[1] - a[1])
        })
        .sum()
}

/// Area centroid of a simple polygon.
pub fn polygon_centroid(v: &[[f64; 2]]) -> [f64; 2] {
    let n = v.len();
    if n == 0 {
        return [f64::NAN, f64::NAN];
    }
    let o = v[0];
    let (mut cx, mut cy, mut twice) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let a = [v[i][0] - o[0], v[i][1] - o[1]];
        let b = [v[(i + 1) % n][0] - o[0], v[(i + 1) % n][1] - o[1]];
        let cross = a[0] * b[1] - a[1] * b[0];
        twice += cross;
        cx += (a[0] + b[0]) * cross;
        cy += (a[1] + b[1]) * cross;
    }
    if twice.abs() < f64::MIN_POSITIVE {
        let mx = v.iter().map(|p| p[0]).sum::<f64>() / n as f64;
        let my = v.iter().map(|p| p[1]).sum::<f64>() / n as f64;
        return [mx, my];
    }
    [o[0] + cx / (3.0 * twice), o[1] + cy / (3.0 * twice)]
}

pub(crate) fn convex_contains(v: &[[f64; 2]], p: [f64; 2]) -> bool {
    let n = v.len();
    if n < 3 {
        return false;
    }
    (0..n).all(|i| {
        let a = v[i];
        let b = v[(i + 1) % n];
        (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]) >= 0.0
    })
}

pub(crate) fn segment_distance(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> f64 {
    let d = [b[0] - a[0], b[1] - a[1]];
    let len2 = d[0] * d[0] + d[1] * d[1];
    let t = if len2 > 0.0 {
        (((p[0] - a[0]) * d[0] + (p[1] - a[1]) * d[1]) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let q = [a[0] + t * d[0], a[1] + t * d[1]];
    (p[0] - q[0]).hypot(p[1] - q[1])
}

pub(crate) fn distance_to_boundary(v: &[[f64; 2]], p: [f64; 2]) -> f64 {
    let n = v.len();
    (0..n).map(|i| segment_distance(v[i], v[(i + 1) % n], p)).fold(f64::INFINITY, f64::min)
}

/// Vertex count after dropping vertices whose triangle with their neighbours
/// has area below `area_tol`.
fn merged_vertex_count(v: &[[f64; 2]], area_tol: f64) -> usize {
    let mut pts: Vec<[f64; 2]> = v.to_vec();
    loop {
        let n = pts.len();
        if n <= 3 {
            return n;
        }
        let drop = (0..n).find(|&i| {
            let a = pts[(i + n - 1) % n];
            let b = pts[i];
            let c = pts[(i + 1) % n];
            let tri = 0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]));
            tri.abs() < area_tol
        });
        match drop {
            Some(i) => {
                pts.remove(i);
            }
            None => return n,
        }
    }
}

/// Area, perimeter and edge count of a cell. Collinear vertices are merged
/// with tolerance `1e-12 * window_area`.
pub fn cell_metrics(cell: &Cell, window_area: f64) -> Result<CellMetrics> {
    let distinct = {
        let mut d = cell.vertices.clone();
        d.dedup();
        if d.len() > 1 && d.first() == d.last() {
            d.pop();
        }
        d.len()
    };
    if distinct < 3 {
        return Err(invalid(format!("cell {} has fewer than 3 distinct vertices", cell.generator_id)));
    }
    let n_edges = merged_vertex_count(&cell.vertices, 1e-12 * window_area);
    Ok(CellMetrics {
        area: polygon_area(&cell.vertices),
        perimeter: polygon_perimeter(&cell.vertices),
        n_edges,
    })
}

/// Convex polygon with one neighbour label per edge (`labels[i]` belongs to
/// the edge starting at `vertices[i]`).
#[derive(Debug, Clone)]
pub(crate) struct LabelledPolygon {
    pub vertices: Vec<[f64; 2]>,
    pub labels: Vec<Option<usize>>,
}

impl LabelledPolygon {
    pub fn rect(x0: f64, y0: f64, x1: f64, y1: f64, label: Option<usize>) -> Self {
        Self {
            vertices: vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1]],
            labels: vec![label; 4],
        }
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.len() < 3
    }

    /// Keeps the part where `n . x <= c`; the new edge gets `label`.
    pub fn clip(&mut self, n: [f64; 2], c: f64, label: Option<usize>) {
        let m = self.vertices.len();
        if m == 0 {
            return;
        }
        let f: Vec<f64> = self.vertices.iter().map(|p| n[0] * p[0] + n[1] * p[1] - c).collect();
        if f.iter().all(|&x| x <= 0.0) {
            return;
        }
        if f.iter().all(|&x| x > 0.0) {
            self.vertices.clear();
            self.labels.clear();
            return;
        }
        let mut verts = Vec::with_capacity(m + 1);
        let mut labs = Vec::with_capacity(m + 1);
        for i in 0..m {
            let j = (i + 1) % m;
            let (a, b) = (self.vertices[i], self.vertices[j]);
            let (fa, fb) = (f[i], f[j]);
            let crossing = |fa: f64, fb: f64| {
                let t = fa / (fa - fb);
                [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
            };
            if fa <= 0.0 {
                verts.push(a);
                labs.push(self.labels[i]);
                if fb > 0.0 {
                    verts.push(crossing(fa, fb));
                    labs.push(label);
                }
            } else if fb <= 0.0 {
                verts.push(crossing(fa, fb));
                labs.push(self.labels[i]);
            }
        }
        self.vertices = verts;
        self.labels = labs;
    }

    /// Removes consecutive vertices closer than `tol`.
    pub fn dedup(&mut self, tol: f64) {
        let mut i = 0;
        while self.vertices.len() > 1 && i < self.vertices.len() {
            let j = (i + 1) % self.vertices.len();
            let (a, b) = (self.vertices[i], self.vertices[j]);
            if (a[0] - b[0]).hypot(a[1] - b[1]) <= tol {
                // Drop vertex j together with the zero-length edge i -> j.
                self.labels[i] = self.labels[j];
                self.vertices.remove(j);
                self.labels.remove(j);
                if j < i {
                    i -= 1;
                }
            } else {
                i += 1;
            }
        }
        if self.vertices.len() < 3 {
            self.vertices.clear();
            self.labels.clear();
        }
    }
}
