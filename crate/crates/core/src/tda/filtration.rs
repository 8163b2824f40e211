use std::collections::HashMap;

use super::delaunay::{delaunay2, PointCloud2};
use crate::error::Result;

/// A vertex, edge or triangle; unused trailing slots of `vertices` are zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Simplex {
    pub vertices: [usize; 3],
    pub dim: usize,
    pub value: f64,
}

impl Simplex {
    pub fn verts(&self) -> &[usize] {
        &self.vertices[..=self.dim]
    }
}

/// Simplices sorted by filtration value, then dimension.
#[derive(Debug, Clone)]
pub struct Filtration {
    pub simplices: Vec<Simplex>,
}

impl Filtration {
    /// Sorts simplices by `(value, dim, vertices)`.
    pub fn from_simplices(mut simplices: Vec<Simplex>) -> Self {
        simplices.sort_by(|a, b| {
            a.value
                .total_cmp(&b.value)
                .then(a.dim.cmp(&b.dim))
                .then(a.vertices.cmp(&b.vertices))
        });
        Self { simplices }
    }

    pub fn len(&self) -> usize {
        self.simplices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.simplices.is_empty()
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn circumradius(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    let cross = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
    dist(a, b) * dist(b, c) * dist(c, a) / (2.0 * cross.abs())
}

/// Alpha filtration in radius units: vertices enter at 0, triangles at their
/// circumradius, Gabriel edges at half their length and other edges at the
/// smallest circumradius of their incident triangles.
pub fn alpha_filtration(cloud: &PointCloud2) -> Result<Filtration> {
    let tri = delaunay2(cloud)?;
    let p = &tri.points;
    let index: HashMap<[usize; 2], usize> = tri.edges.iter().enumerate().map(|(i, e)| (*e, i)).collect();
    let mut attached = vec![false; tri.edges.len()];
    let mut min_radius = vec![f64::INFINITY; tri.edges.len()];

    let mut simplices: Vec<Simplex> = (0..p.len()).map(|i| Simplex { vertices: [i, 0, 0], dim: 0, value: 0.0 }).collect();
    for t in &tri.triangles {
        let r = circumradius(p[t[0]], p[t[1]], p[t[2]]);
        simplices.push(Simplex { vertices: *t, dim: 2, value: r });
        for (e, opp) in [([t[0], t[1]], t[2]), ([t[0], t[2]], t[1]), ([t[1], t[2]], t[0])] {
            let k = index[&e];
            min_radius[k] = min_radius[k].min(r);
            let (a, b, c) = (p[e[0]], p[e[1]], p[opp]);
            // Opposite vertex strictly inside the diametral circle.
            if (c[0] - a[0]) * (c[0] - b[0]) + (c[1] - a[1]) * (c[1] - b[1]) < 0.0 {
                attached[k] = true;
            }
        }
    }
    for (k, e) in tri.edges.iter().enumerate() {
        let value = if attached[k] { min_radius[k] } else { 0.5 * dist(p[e[0]], p[e[1]]) };
        simplices.push(Simplex { vertices: [e[0], e[1], 0], dim: 1, value });
    }
    Ok(Filtration::from_simplices(simplices))
}
