//! Poisson generator sampling, planar sections of the 3D Voronoi diagram and
//! cell geometry.

mod io;
mod oracle;
mod polygon;
mod section;
mod window;

pub use io::{read_tessellation_csv, read_tessellation_json, write_tessellation_csv, write_tessellation_json, TessellationFile};
pub use oracle::brute_force_section_oracle;
pub use polygon::{cell_metrics, polygon_area, polygon_centroid, polygon_perimeter, CellMetrics};
pub use section::section_tessellation;
pub use window::window_cut;

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::rng::rng_from_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryMode {
    Periodic,
    Bounded,
}

/// Axis-aligned simulation box `[0, L_x) x [0, L_y) x [0, L_z)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxGeometry {
    lengths: [f64; 3],
    mode: BoundaryMode,
}

impl BoxGeometry {
    pub fn new(lengths: [f64; 3], mode: BoundaryMode) -> Result<Self> {
        if lengths.iter().any(|l| !l.is_finite() || *l <= 0.0) {
            return Err(invalid(format!("box lengths must be positive and finite, got {lengths:?}")));
        }
        Ok(Self { lengths, mode })
    }

    pub fn cube(side: f64, mode: BoundaryMode) -> Result<Self> {
        Self::new([side; 3], mode)
    }

    pub fn lengths(&self) -> [f64; 3] {
        self.lengths
    }

    pub fn mode(&self) -> BoundaryMode {
        self.mode
    }

    pub fn is_periodic(&self) -> bool {
        self.mode == BoundaryMode::Periodic
    }

    pub fn volume(&self) -> f64 {
        self.lengths.iter().product()
    }

    pub fn with_mode(&self, mode: BoundaryMode) -> Self {
        Self { lengths: self.lengths, mode }
    }

    pub fn scaled(&self, s: f64) -> Result<Self> {
        Self::new(self.lengths.map(|l| l * s), self.mode)
    }

    pub fn contains(&self, p: &[f64; 3]) -> bool {
        p.iter().zip(&self.lengths).all(|(x, l)| *x >= 0.0 && x < l)
    }
}

/// A realised generator pattern inside a box.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeneratorSet {
    pub points: Vec<[f64; 3]>,
    /// Intensity the pattern was drawn with (points per unit volume).
    pub intensity: f64,
    pub seed: Option<u64>,
    pub geometry: BoxGeometry,
}

impl GeneratorSet {
    pub fn new(points: Vec<[f64; 3]>, geometry: BoxGeometry) -> Result<Self> {
        if let Some(i) = points.iter().position(|p| !geometry.contains(p)) {
            return Err(invalid(format!("generator {i} lies outside the box")));
        }
        let intensity = points.len() as f64 / geometry.volume();
        Ok(Self { points, intensity, seed: None, geometry })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Scales coordinates and box by `s`.
    pub fn scaled(&self, s: f64) -> Result<Self> {
        let geometry = self.geometry.scaled(s)?;
        let points = self.points.iter().map(|p| p.map(|x| x * s)).collect();
        Ok(Self { points, intensity: self.intensity / (s * s * s), seed: self.seed, geometry })
    }

    /// Translates all generators, wrapping them back into the box.
    pub fn translated_periodic(&self, shift: [f64; 3]) -> Self {
        let l = self.geometry.lengths();
        let points = self
            .points
            .iter()
            .map(|p| {
                let mut q = [0.0; 3];
                for a in 0..3 {
                    q[a] = (p[a] + shift[a]).rem_euclid(l[a]);
                    if q[a] >= l[a] {
                        q[a] = 0.0;
                    }
                }
                q
            })
            .collect();
        Self { points, ..self.clone() }
    }
}

fn uniform_points<R: Rng>(rng: &mut R, count: usize, geometry: &BoxGeometry) -> Vec<[f64; 3]> {
    let l = geometry.lengths();
    (0..count)
        .map(|_| [rng.gen::<f64>() * l[0], rng.gen::<f64>() * l[1], rng.gen::<f64>() * l[2]])
        .collect()
}

/// Homogeneous Poisson process of intensity `lambda` in the box.
pub fn sample_poisson_generators(lambda: f64, geometry: &BoxGeometry, seed: u64) -> Result<GeneratorSet> {
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(invalid(format!("intensity must be finite and nonnegative, got {lambda}")));
    }
    let mut rng = rng_from_seed(seed);
    let mean = lambda * geometry.volume();
    let count = if mean > 0.0 {
        let poisson = Poisson::new(mean).map_err(|e| invalid(e.to_string()))?;
        poisson.sample(&mut rng) as usize
    } else {
        0
    };
    Ok(GeneratorSet {
        points: uniform_points(&mut rng, count, geometry),
        intensity: lambda,
        seed: Some(seed),
        geometry: *geometry,
    })
}

/// Binomial process: exactly `k` i.i.d. uniform points.
pub fn sample_fixed_generators(k: usize, geometry: &BoxGeometry, seed: u64) -> GeneratorSet {
    let mut rng = rng_from_seed(seed);
    sample_fixed_generators_with(k, geometry, &mut rng, seed)
}

pub(crate) fn sample_fixed_generators_with<R: Rng>(
    k: usize,
    geometry: &BoxGeometry,
    rng: &mut R,
    seed: u64,
) -> GeneratorSet {
    GeneratorSet {
        points: uniform_points(rng, k, geometry),
        intensity: k as f64 / geometry.volume(),
        seed: Some(seed),
        geometry: *geometry,
    }
}

/// Axis-aligned rectangle `[x0, x1] x [y0, y1]` in plane coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self { x0, y0, x1, y1 }
    }

    pub fn from_size(w: f64, h: f64) -> Self {
        Self::new(0.0, 0.0, w, h)
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> [f64; 2] {
        [0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1)]
    }

    pub fn diagonal(&self) -> f64 {
        self.width().hypot(self.height())
    }

    pub fn corners(&self) -> [[f64; 2]; 4] {
        [[self.x0, self.y0], [self.x1, self.y0], [self.x1, self.y1], [self.x0, self.y1]]
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0] >= self.x0 && p[0] <= self.x1 && p[1] >= self.y0 && p[1] <= self.y1
    }

    fn is_valid(&self) -> bool {
        [self.x0, self.y0, self.x1, self.y1].iter().all(|v| v.is_finite()) && self.x1 > self.x0 && self.y1 > self.y0
    }
}

/// Plane perpendicular to one box axis.
///
/// Plane coordinates are the two remaining box axes in cyclic order: for
/// normal axis `a`, `u` is axis `(a + 1) % 3` and `v` is axis `(a + 2) % 3`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectionPlane {
    pub normal: [f64; 3],
    pub offset: f64,
    pub window: Rect,
    axis: usize,
}

impl SectionPlane {
    /// Only coordinate-axis normals are supported.
    pub fn new(normal: [f64; 3], offset: f64, window: Rect) -> Result<Self> {
        let norm = normal.iter().map(|x| x * x).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(invalid(format!("plane normal must be a unit vector, |n| = {norm}")));
        }
        let axis = (0..3)
            .find(|&a| (normal[a].abs() - 1.0).abs() <= 1e-12)
            .ok_or_else(|| invalid("only planes parallel to a box face are supported"))?;
        if !offset.is_finite() {
            return Err(invalid("plane offset must be finite"));
        }
        if !window.is_valid() {
            return Err(invalid(format!("degenerate window {window:?}")));
        }
        let mut unit = [0.0; 3];
        unit[axis] = 1.0;
        let offset = if normal[axis] < 0.0 { -offset } else { offset };
        Ok(Self { normal: unit, offset, window, axis })
    }

    /// Plane `x_axis = offset` with the full box face as window.
    pub fn axis_aligned(axis: usize, offset: f64, geometry: &BoxGeometry) -> Result<Self> {
        if axis > 2 {
            return Err(invalid(format!("axis {axis} out of range")));
        }
        let l = geometry.lengths();
        let mut normal = [0.0; 3];
        normal[axis] = 1.0;
        Self::new(normal, offset, Rect::from_size(l[(axis + 1) % 3], l[(axis + 2) % 3]))
    }

    pub fn with_window(mut self, window: Rect) -> Result<Self> {
        if !window.is_valid() {
            return Err(invalid(format!("degenerate window {window:?}")));
        }
        self.window = window;
        Ok(self)
    }

    pub fn axis(&self) -> usize {
        self.axis
    }

    /// Box axes carrying the plane's `u` and `v` coordinates.
    pub fn plane_axes(&self) -> (usize, usize) {
        ((self.axis + 1) % 3, (self.axis + 2) % 3)
    }

    /// Plane parallel to a uniformly chosen face pair at a uniform offset.
    pub fn random<R: Rng>(geometry: &BoxGeometry, axis: Option<usize>, rng: &mut R) -> Self {
        let axis = axis.unwrap_or_else(|| rng.gen_range(0..3));
        let l = geometry.lengths();
        let offset = rng.gen::<f64>() * l[axis];
        Self::axis_aligned(axis, offset, geometry).expect("valid box yields valid plane")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Visibility {
    Complete,
    Clipped,
}

/// One polygonal cell of a planar section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    /// Counter-clockwise convex polygon in plane coordinates.
    pub vertices: Vec<[f64; 2]>,
    pub generator_id: usize,
    pub visibility: Visibility,
    /// Generator across edge `i -> i + 1`; `None` for window-boundary edges.
    #[serde(skip)]
    pub neighbors: Vec<Option<usize>>,
}

impl Cell {
    pub fn area(&self) -> f64 {
        polygon_area(&self.vertices)
    }

    pub fn perimeter(&self) -> f64 {
        polygon_perimeter(&self.vertices)
    }

    pub fn centroid(&self) -> [f64; 2] {
        polygon_centroid(&self.vertices)
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        polygon::convex_contains(&self.vertices, p)
    }
}

/// Cells of one planar section together with the observation window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionTessellation {
    pub cells: Vec<Cell>,
    pub window: Rect,
    /// Cells live on the torus obtained by identifying opposite window sides.
    pub periodic: bool,
    /// The plane missed the box interior; no cells were built.
    pub degenerate: bool,
}

impl SectionTessellation {
    pub fn n_2d(&self) -> usize {
        self.cells.len()
    }

    pub fn window_area(&self) -> f64 {
        self.window.area()
    }

    pub fn areas(&self) -> Vec<f64> {
        self.cells.iter().map(Cell::area).collect()
    }

    pub fn centroids(&self) -> Vec<[f64; 2]> {
        self.cells.iter().map(Cell::centroid).collect()
    }

    pub fn metrics(&self) -> Result<Vec<CellMetrics>> {
        let area = self.window_area();
        self.cells.iter().map(|c| cell_metrics(c, area)).collect()
    }

    /// Generator owning `p`, by polygon point location.
    pub fn locate(&self, p: [f64; 2]) -> Option<usize> {
        let w = self.window.width();
        let h = self.window.height();
        let shifts: &[[f64; 2]] = if self.periodic {
            &[[0.0, 0.0], [w, 0.0], [-w, 0.0], [0.0, h], [0.0, -h], [w, h], [w, -h], [-w, h], [-w, -h]]
        } else {
            &[[0.0, 0.0]]
        };
        shifts.iter().find_map(|s| {
            let q = [p[0] + s[0], p[1] + s[1]];
            self.cells.iter().find(|c| c.contains(q)).map(|c| c.generator_id)
        })
    }

    /// Distance from `p` to the nearest cell edge.
    pub fn distance_to_edges(&self, p: [f64; 2]) -> f64 {
        let w = self.window.width();
        let h = self.window.height();
        let mut best = f64::INFINITY;
        let range: &[f64] = if self.periodic { &[-1.0, 0.0, 1.0] } else { &[0.0] };
        for &sx in range {
            for &sy in range {
                let q = [p[0] + sx * w, p[1] + sy * h];
                for c in &self.cells {
                    best = best.min(polygon::distance_to_boundary(&c.vertices, q));
                }
            }
        }
        best
    }
}
