use super::{GeneratorSet, SectionPlane};

/// Labels `grid_n x grid_n` window sample points (cell centres of a regular
/// grid, row-major from the lower-left) with the 3D-nearest generator.
/// Distances use the minimum-image convention in periodic mode; ties go to
/// the lowest generator id.
pub fn brute_force_section_oracle(gen: &GeneratorSet, plane: &SectionPlane, grid_n: usize) -> Vec<usize> {
    assert!(grid_n >= 2, "grid_n must be at least 2");
    let l = gen.geometry.lengths();
    let periodic = gen.geometry.is_periodic();
    let (ua, va) = plane.plane_axes();
    let a = plane.axis();
    let w = plane.window;
    let mut labels = Vec::with_capacity(grid_n * grid_n);
    for row in 0..grid_n {
        for col in 0..grid_n {
            let u = w.x0 + (col as f64 + 0.5) / grid_n as f64 * w.width();
            let v = w.y0 + (row as f64 + 0.5) / grid_n as f64 * w.height();
            let mut x = [0.0; 3];
            x[ua] = u;
            x[va] = v;
            x[a] = plane.offset;
            let mut best = (f64::INFINITY, usize::MAX);
            for (i, p) in gen.points.iter().enumerate() {
                let d2: f64 = (0..3)
                    .map(|d| {
                        let mut delta = x[d] - p[d];
                        if periodic {
                            delta -= l[d] * (delta / l[d]).round();
                        }
                        delta * delta
                    })
                    .sum();
                if d2 < best.0 {
                    best = (d2, i);
                }
            }
            labels.push(best.1);
        }
    }
    labels
}
