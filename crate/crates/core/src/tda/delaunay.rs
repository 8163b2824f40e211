use spade::{DelaunayTriangulation, HasPosition, Point2, Triangulation as _};

use crate::error::{invalid, Error, Result};

/// Planar point cloud with distinct, finite points.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud2 {
    points: Vec<[f64; 2]>,
}

impl PointCloud2 {
    pub fn new(points: Vec<[f64; 2]>) -> Result<Self> {
        if points.iter().flatten().any(|x| !x.is_finite()) {
            return Err(invalid("point coordinates must be finite"));
        }
        let mut order: Vec<usize> = (0..points.len()).collect();
        order.sort_by(|&a, &b| points[a].partial_cmp(&points[b]).expect("finite"));
        if let Some(w) = order.windows(2).find(|w| points[w[0]] == points[w[1]]) {
            return Err(Error::DuplicatePoint(w[0].max(w[1])));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Delaunay triangulation by vertex index.
#[derive(Debug, Clone)]
pub struct Triangulation {
    pub points: Vec<[f64; 2]>,
    /// Undirected edges with `e[0] < e[1]`, sorted.
    pub edges: Vec<[usize; 2]>,
    /// Triangles with ascending vertex ids, sorted.
    pub triangles: Vec<[usize; 3]>,
}

struct Indexed {
    pos: Point2<f64>,
    id: usize,
}

impl HasPosition for Indexed {
    type Scalar = f64;

    fn position(&self) -> Point2<f64> {
        self.pos
    }
}

/// Delaunay triangulation using exact orientation and in-circle predicates.
pub fn delaunay2(cloud: &PointCloud2) -> Result<Triangulation> {
    let vertices = cloud
        .points
        .iter()
        .enumerate()
        .map(|(id, p)| Indexed { pos: Point2::new(p[0], p[1]), id })
        .collect();
    let dt: DelaunayTriangulation<Indexed> =
        DelaunayTriangulation::bulk_load(vertices).map_err(|e| invalid(format!("triangulation failed: {e:?}")))?;
    let mut edges: Vec<[usize; 2]> = dt
        .undirected_edges()
        .map(|e| {
            let [a, b] = e.vertices();
            let (a, b) = (a.data().id, b.data().id);
            [a.min(b), a.max(b)]
        })
        .collect();
    edges.sort_unstable();
    let mut triangles: Vec<[usize; 3]> = dt
        .inner_faces()
        .map(|f| {
            let mut t = f.vertices().map(|v| v.data().id);
            t.sort_unstable();
            t
        })
        .collect();
    triangles.sort_unstable();
    Ok(Triangulation { points: cloud.points.clone(), edges, triangles })
}
