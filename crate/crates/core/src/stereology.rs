//! Section summaries and intensity estimators.
//!
//! For a 3D Poisson-Voronoi diagram of intensity `lambda`, planar sections
//! satisfy `P_A = c1 lambda^(2/3)`, `N_A = c1/2 lambda^(2/3)` and
//! `L_A = c2 lambda^(1/3)`, with `N_A = 1 / E(a)`. Inverting these gives four
//! estimators of `lambda`.

use std::collections::HashMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::geometry::{SectionTessellation, Visibility};

/// `(8/15) (3/4)^(1/3) pi^(5/3) Gamma(4/3)`.
pub fn c1() -> f64 {
    8.0 / 15.0 * 0.75f64.cbrt() * PI.powf(5.0 / 3.0) * gamma(4.0 / 3.0)
}

/// `pi (pi/6)^(1/3) Gamma(5/3)`.
pub fn c2() -> f64 {
    PI * (PI / 6.0).cbrt() * gamma(5.0 / 3.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectionSummary {
    /// Interior vertices per unit area.
    pub p_a: f64,
    /// Cells per unit area.
    pub n_a: f64,
    /// Interior edge length per unit area.
    pub l_a: f64,
    /// Mean cell area over complete and clipped cells.
    pub mean_area: f64,
    pub n_cells: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    P,
    N,
    L,
    A,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::P, Method::N, Method::L, Method::A];

    pub fn name(&self) -> &'static str {
        match self {
            Method::P => "P",
            Method::N => "N",
            Method::L => "L",
            Method::A => "a",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaEstimate {
    pub value: f64,
    pub method: Method,
}

/// Welds vertices closer than `tol` (modulo the window period when
/// `period` is given) and returns the number of distinct positions.
fn count_distinct(points: &[[f64; 2]], tol: f64, period: Option<[f64; 2]>) -> usize {
    let key = |p: [f64; 2]| ((p[0] / tol).floor() as i64, (p[1] / tol).floor() as i64);
    let wrap_key = |k: (i64, i64)| match period {
        Some([w, h]) => {
            let nx = (w / tol).round() as i64;
            let ny = (h / tol).round() as i64;
            (k.0.rem_euclid(nx), k.1.rem_euclid(ny))
        }
        None => k,
    };
    let mut seen: HashMap<(i64, i64), ()> = HashMap::with_capacity(points.len());
    let mut count = 0;
    for p in points {
        let q = match period {
            Some([w, h]) => [p[0].rem_euclid(w), p[1].rem_euclid(h)],
            None => *p,
        };
        let k = key(q);
        let hit = (-1..=1).any(|dx| (-1..=1).any(|dy| seen.contains_key(&wrap_key((k.0 + dx, k.1 + dy)))));
        if !hit {
            count += 1;
        }
        seen.insert(wrap_key(k), ());
    }
    count
}

/// Which cells enter the mean area.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClippedCells {
    #[default]
    Include,
    Exclude,
}

/// Per-area densities of a section. Vertices and edges on the window
/// boundary are excluded from `p_a` and `l_a`; shared edges count once.
/// Clipped cells count in `n_a` and in the mean area.
pub fn summarize_section(tess: &SectionTessellation) -> Result<SectionSummary> {
    summarize_section_with(tess, ClippedCells::Include)
}

/// As [`summarize_section`], optionally averaging areas over complete cells
/// only.
pub fn summarize_section_with(tess: &SectionTessellation, clipped: ClippedCells) -> Result<SectionSummary> {
    if tess.cells.is_empty() {
        return Err(Error::EmptyTessellation);
    }
    let w = tess.window;
    let area = w.area();
    let tol = 1e-9 * w.diagonal();
    let on_boundary = |p: [f64; 2]| {
        !tess.periodic
            && ((p[0] - w.x0).abs() <= tol
                || (p[0] - w.x1).abs() <= tol
                || (p[1] - w.y0).abs() <= tol
                || (p[1] - w.y1).abs() <= tol)
    };
    let mut interior = Vec::new();
    let mut edge_total = 0.0;
    let mut boundary_edges = 0.0;
    let mut cell_area = 0.0;
    let mut averaged = 0usize;
    for c in &tess.cells {
        let v = &c.vertices;
        let n = v.len();
        if clipped == ClippedCells::Include || c.visibility == Visibility::Complete {
            cell_area += c.area();
            averaged += 1;
        }
        for i in 0..n {
            let (a, b) = (v[i], v[(i + 1) % n]);
            let len = (b[0] - a[0]).hypot(b[1] - a[1]);
            edge_total += len;
            if on_boundary(a) && on_boundary(b) && on_boundary([0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]) {
                boundary_edges += len;
            }
            if !on_boundary(a) {
                interior.push(a);
            }
        }
    }
    let period = tess.periodic.then(|| [w.width(), w.height()]);
    let shifted: Vec<[f64; 2]> = interior.iter().map(|p| [p[0] - w.x0, p[1] - w.y0]).collect();
    let vertices = count_distinct(&shifted, tol, period);
    let n = tess.cells.len();
    Ok(SectionSummary {
        p_a: vertices as f64 / area,
        n_a: n as f64 / area,
        l_a: 0.5 * (edge_total - boundary_edges) / area,
        // Undefined (NaN) when every cell is clipped and clipped cells are
        // excluded; the estimator then reports the failure.
        mean_area: if averaged > 0 { cell_area / averaged as f64 } else { f64::NAN },
        n_cells: n,
    })
}

pub fn estimate_lambda(summary: &SectionSummary, method: Method) -> Result<LambdaEstimate> {
    let (input, name) = match method {
        Method::P => (summary.p_a, "P_A"),
        Method::N => (summary.n_a, "N_A"),
        Method::L => (summary.l_a, "L_A"),
        Method::A => (summary.mean_area, "mean area"),
    };
    if !(input.is_finite() && input > 0.0) {
        return Err(Error::UndefinedEstimate(format!("{name} = {input} must be positive")));
    }
    let value = match method {
        Method::P => (input / c1()).powf(1.5),
        Method::N => (2.0 * input / c1()).powf(1.5),
        Method::L => (input / c2()).powi(3),
        Method::A => (2.0 / (c1() * input)).powf(1.5),
    };
    Ok(LambdaEstimate { value, method })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Cell, Rect};

    fn grid2x2() -> SectionTessellation {
        let sq = |x: f64, y: f64| vec![[x, y], [x + 1.0, y], [x + 1.0, y + 1.0], [x, y + 1.0]];
        let cells = [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)]
            .iter()
            .enumerate()
            .map(|(i, &(x, y))| Cell { vertices: sq(x, y), generator_id: i, visibility: Visibility::Clipped, neighbors: vec![] })
            .collect();
        SectionTessellation { cells, window: Rect::from_size(2.0, 2.0), periodic: false, degenerate: false }
    }

    #[test]
    fn clipped_switch_changes_only_mean_area() {
        let mut t = grid2x2();
        t.cells[0].visibility = Visibility::Complete;
        t.cells[0].vertices = vec![[0.0, 0.0], [1.5, 0.0], [1.5, 1.0], [0.0, 1.0]];
        let inc = summarize_section(&t).unwrap();
        let exc = summarize_section_with(&t, ClippedCells::Exclude).unwrap();
        assert_eq!(exc.mean_area, 1.5);
        assert_eq!((inc.p_a, inc.n_a, inc.l_a), (exc.p_a, exc.n_a, exc.l_a));
        assert!(summarize_section_with(&grid2x2(), ClippedCells::Exclude).unwrap().mean_area.is_nan());
    }

    #[test]
    fn prefactors() {
        assert_eq!(format!("{:.4}", (1.0 / c1()).powf(1.5)), "0.2008");
        assert_eq!(format!("{:.4}", (2.0 / c1()).powf(1.5)), "0.5680");
        assert_eq!(format!("{:.4}", (1.0 / c2()).powi(3)), "0.0837");
    }

    #[test]
    fn p_a_equal_to_c1_gives_unit_lambda() {
        let s = SectionSummary { p_a: c1(), n_a: 1.0, l_a: 1.0, mean_area: 1.0, n_cells: 1 };
        assert!((estimate_lambda(&s, Method::P).unwrap().value - 1.0).abs() < 1e-15);
    }

    #[test]
    fn mean_area_from_moment_table() {
        let s = SectionSummary { p_a: 1.0, n_a: 1.0, l_a: 1.0, mean_area: 0.686, n_cells: 1 };
        assert!((estimate_lambda(&s, Method::A).unwrap().value - 1.0).abs() < 0.002);
    }

    #[test]
    fn single_full_window_cell() {
        let t = SectionTessellation {
            cells: vec![Cell { vertices: vec![[0.0, 0.0], [3.0, 0.0], [3.0, 2.0], [0.0, 2.0]], generator_id: 0, visibility: Visibility::Clipped, neighbors: vec![] }],
            window: Rect::from_size(3.0, 2.0),
            periodic: false,
            degenerate: false,
        };
        let s = summarize_section(&t).unwrap();
        assert_eq!(s, SectionSummary { p_a: 0.0, n_a: 1.0 / 6.0, l_a: 0.0, mean_area: 6.0, n_cells: 1 });
        assert!(estimate_lambda(&s, Method::P).is_err());
        assert!(estimate_lambda(&s, Method::L).is_err());
    }

    #[test]
    fn two_by_two_grid_hand_count() {
        let s = summarize_section(&grid2x2()).unwrap();
        assert!((s.p_a - 0.25).abs() < 1e-15);
        assert!((s.l_a - 1.0).abs() < 1e-15);
        assert!((s.n_a - 1.0).abs() < 1e-15);
        assert!((s.mean_area - 1.0).abs() < 1e-15);
    }

    #[test]
    fn empty_tessellation_rejected() {
        let mut t = grid2x2();
        t.cells.clear();
        assert!(matches!(summarize_section(&t), Err(Error::EmptyTessellation)));
    }
}
