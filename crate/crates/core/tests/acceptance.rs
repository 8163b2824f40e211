//! Acceptance suite: one line per criterion, nonzero exit when any fails.

mod common;

use std::time::Instant;

use common::*;
use pvtest::geometry::{
    brute_force_section_oracle, sample_poisson_generators, section_tessellation, BoundaryMode, BoxGeometry, SectionPlane,
};
use pvtest::nulldist::*;
use pvtest::rng::child_seed;
use pvtest::statistics::{cv_of, landscape_rejects, sup_distance_to_sample, StatisticName, TestResult};
use pvtest::stereology::{estimate_lambda, summarize_section, Method};
use pvtest::tda::{
    alpha_filtration, landscape_from_diagram, landscape_l2_distance, persistence_indexed, persistence_pairs, LandscapeMoments,
    PointCloud2,
};
use rayon::prelude::*;

struct Outcome {
    pass: bool,
    detail: String,
}

fn within(x: f64, target: f64, tol: f64) -> bool {
    (x - target).abs() <= tol
}

/// Pooled sectional cell moments at unit intensity, periodic boundaries.
fn moments() -> Outcome {
    let b = BoxGeometry::cube(10.0, BoundaryMode::Periodic).unwrap();
    let per_section: Vec<Vec<(f64, f64, usize)>> = (0..720u64)
        .into_par_iter()
        .map(|i| {
            let g = sample_poisson_generators(1.0, &b, child_seed(1, &[i, 0])).unwrap();
            let plane = SectionPlane::random(&b, None, &mut rng(child_seed(1, &[i, 1])));
            let t = section_tessellation(&g, &plane).unwrap();
            t.metrics().unwrap().iter().map(|m| (m.area, m.perimeter, m.n_edges)).collect()
        })
        .collect();
    let cells: Vec<(f64, f64, usize)> = per_section.concat();
    let n = cells.len() as f64;
    let mean = |f: &dyn Fn(&(f64, f64, usize)) -> f64| cells.iter().map(f).sum::<f64>() / n;
    let a1 = mean(&|c| c.0);
    let a2 = mean(&|c| c.0 * c.0);
    let per = mean(&|c| c.1);
    let edges = mean(&|c| c.2 as f64);
    let sd = (cells.iter().map(|c| (c.0 - a1).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let pass = cells.len() >= 100_000
        && within(a1, 0.686, 0.005)
        && within(per, 3.136, 0.02)
        && within(edges, 6.00, 0.05)
        && within(a2, 0.699, 0.01)
        && within(sd, 0.4734, 0.005);
    Outcome {
        pass,
        detail: format!(
            "{} cells: mean area {a1:.4}, perimeter {per:.4}, edges {edges:.4}, E[a^2] {a2:.4}, sd {sd:.4}",
            cells.len()
        ),
    }
}

/// Mean of each intensity estimator over periodic sections with about 50
/// cells.
fn estimator_bias() -> Outcome {
    let b = BoxGeometry::cube(5.86, BoundaryMode::Periodic).unwrap();
    let reps = 10_000u64;
    let est: Vec<[f64; 4]> = (0..reps)
        .into_par_iter()
        .map(|i| {
            let g = sample_poisson_generators(1.0, &b, child_seed(2, &[i, 0])).unwrap();
            let plane = SectionPlane::random(&b, None, &mut rng(child_seed(2, &[i, 1])));
            let s = summarize_section(&section_tessellation(&g, &plane).unwrap()).unwrap();
            Method::ALL.map(|m| estimate_lambda(&s, m).unwrap().value)
        })
        .collect();
    let means: Vec<f64> = (0..4).map(|j| est.iter().map(|e| e[j]).sum::<f64>() / reps as f64).collect();
    let pass = means.iter().all(|m| (m - 1.0).abs() < 0.01);
    let names = Method::ALL.map(|m| m.name());
    Outcome {
        pass,
        detail: names.iter().zip(&means).map(|(n, m)| format!("{n} {m:.4}")).collect::<Vec<_>>().join(", "),
    }
}

/// Conditional replicates at the reference setting, shared by the quantile
/// and calibration criteria.
fn reference_set() -> ReplicateSet {
    simulate_conditional(50, 0.2, &SimulationGeometry::paper(), Allocation::Proportional { total: 200_000 }, true, 2024).unwrap()
}

fn cv_quantiles(set: &ReplicateSet) -> Outcome {
    let t = null_table_from_set(set, StatisticName::C).unwrap();
    let (q05, q95) = (t.quantile(0.05), t.quantile(0.95));
    Outcome {
        pass: within(q05, 0.591, 0.01) && within(q95, 0.826, 0.01),
        detail: format!("c0.05 {q05:.4} (0.591), c0.95 {q95:.4} (0.826); {} retained", set.len()),
    }
}

fn ks_quantile(set: &ReplicateSet) -> Outcome {
    let q = loo_quantiles(StatisticName::D, set, &[0.95]).unwrap().values[0];
    Outcome { pass: within(q, 0.135, 0.01), detail: format!("d0.95 {q:.4} (0.135)") }
}

fn bootstrap() -> Outcome {
    let ci = bootstrap_ci_lambda(0.2, &SimulationGeometry::paper(), 10_000, 5).unwrap();
    Outcome {
        pass: within(ci.lower, 0.1498, 0.01) && within(ci.upper, 0.2439, 0.01),
        detail: format!("[{:.4}, {:.4}] vs [0.1498, 0.2439]", ci.lower, ci.upper),
    }
}

fn h0_oracle() -> Outcome {
    let bad = (0..100u64)
        .filter(|&seed| {
            let pts = random_cloud(100, 6_000 + seed);
            let d = persistence_pairs(&alpha_filtration(&PointCloud2::new(pts.clone()).unwrap()).unwrap()).unwrap();
            let mut deaths: Vec<f64> = d.pairs_h0.iter().map(|p| p.1).collect();
            deaths.sort_by(f64::total_cmp);
            deaths != kruskal_half_lengths(&pts)
        })
        .count();
    Outcome { pass: bad == 0, detail: format!("{bad} of 100 clouds differ from Kruskal") }
}

fn euler() -> Outcome {
    let mut steps = 0;
    let bad = (0..100u64)
        .filter(|&seed| {
            let f = alpha_filtration(&PointCloud2::new(random_cloud(100, 7_000 + seed)).unwrap()).unwrap();
            steps += f.len();
            euler_violation(&f, &persistence_indexed(&f).unwrap()).is_some()
        })
        .count();
    Outcome { pass: bad == 0, detail: format!("{bad} of 100 clouds violate V-E+F = b0-b1 ({steps} steps checked)") }
}

fn landscape_oracle() -> Outcome {
    let mut worst_grid: f64 = 0.0;
    for seed in 0..20u64 {
        let d = persistence_pairs(&alpha_filtration(&PointCloud2::new(random_cloud(100, 8_000 + seed)).unwrap()).unwrap()).unwrap();
        let t = d.max_death();
        for dim in [0, 1] {
            let l = landscape_from_diagram(&d, dim, t).unwrap();
            worst_grid = worst_grid.max(kmax_sup_error(&l, d.pairs(dim), t, 5_000));
        }
    }
    let mut worst_rel: f64 = 0.0;
    for seed in 0..3u64 {
        let diag = |s| persistence_pairs(&alpha_filtration(&PointCloud2::new(random_cloud(100, s)).unwrap()).unwrap()).unwrap();
        let (a, b) = (diag(9_000 + 2 * seed), diag(9_001 + 2 * seed));
        let t = a.max_death().max(b.max_death());
        for dim in [0, 1] {
            let exact =
                landscape_l2_distance(&landscape_from_diagram(&a, dim, t).unwrap(), &landscape_from_diagram(&b, dim, t).unwrap());
            let quad = quadrature_distance(a.pairs(dim), b.pairs(dim), t, 1_000_000);
            worst_rel = worst_rel.max((exact - quad).abs() / quad);
        }
    }
    Outcome {
        pass: worst_grid <= 1e-12 && worst_rel <= 1e-6,
        detail: format!("k-max grid sup error {worst_grid:.2e}; L2 vs 1e6-node quadrature rel error {worst_rel:.2e}"),
    }
}

fn sectioning_oracle() -> Outcome {
    let results: Vec<(usize, usize)> = (0..100u64)
        .into_par_iter()
        .map(|i| {
            let mode = if i % 2 == 0 { BoundaryMode::Bounded } else { BoundaryMode::Periodic };
            let b = BoxGeometry::cube(4.0, mode).unwrap();
            let g = sample_poisson_generators(1.5, &b, child_seed(9, &[i])).unwrap();
            let plane = SectionPlane::random(&b, None, &mut rng(child_seed(9, &[i, 1])));
            let t = section_tessellation(&g, &plane).unwrap();
            let labels = brute_force_section_oracle(&g, &plane, 100);
            let (mut checked, mut bad) = (0, 0);
            for row in 0..100 {
                for col in 0..100 {
                    let w = t.window;
                    let p = [w.x0 + (col as f64 + 0.5) / 100.0 * w.width(), w.y0 + (row as f64 + 0.5) / 100.0 * w.height()];
                    if t.distance_to_edges(p) <= 1e-9 {
                        continue;
                    }
                    checked += 1;
                    if t.locate(p) != Some(labels[row * 100 + col]) {
                        bad += 1;
                    }
                }
            }
            (checked, bad)
        })
        .collect();
    let checked: usize = results.iter().map(|r| r.0).sum();
    let bad: usize = results.iter().map(|r| r.1).sum();
    Outcome { pass: bad == 0, detail: format!("{bad} mismatches over {checked} grid points in 100 sections") }
}

/// Stratified conditional p-values against direct simulate-then-condition.
fn lemma1() -> Outcome {
    let geometry = SimulationGeometry::cube(2.0).unwrap();
    let (n_2d, lambda) = (3, 0.5);
    let set = simulate_conditional(n_2d, lambda, &geometry, Allocation::Uniform { per_k: 2_000 }, false, 10).unwrap();
    let table = null_table_from_set(&set, StatisticName::C).unwrap();
    let direct: Vec<f64> = (0..200_000u64)
        .into_par_iter()
        .filter_map(|i| {
            let g = sample_poisson_generators(lambda, &geometry.domain, child_seed(11, &[i, 0])).unwrap();
            if g.len() < n_2d {
                return None;
            }
            let plane = SectionPlane::random(&geometry.domain, None, &mut rng(child_seed(11, &[i, 1])));
            let t = section_tessellation(&g, &plane).unwrap();
            (t.n_2d() == n_2d).then(|| cv_of(&t.areas()))
        })
        .collect();
    let w: Vec<f64> = table.samples.iter().map(|s| s.weight).collect();
    let mut worst: f64 = 0.0;
    for t in [0.2, 0.35, 0.5, 0.65, 0.8, 1.0] {
        let p = p_value(&table, &TestResult::new(StatisticName::C, t, n_2d), Tail::Upper).unwrap().p;
        let (_, se_mix) = weighted_rate(&table.samples.iter().map(|s| s.value >= t).collect::<Vec<_>>(), &w);
        let q = direct.iter().filter(|&&c| c >= t).count() as f64 / direct.len() as f64;
        let se = (se_mix.powi(2) + q * (1.0 - q) / direct.len() as f64).sqrt();
        worst = worst.max((p - q).abs() / se);
    }
    Outcome {
        pass: worst <= 3.0,
        detail: format!("largest p-value gap {worst:.2} SE ({} stratified, {} direct sections)", set.len(), direct.len()),
    }
}

/// Rejection rates under the null with thresholds from `null` and fresh
/// null sections from an independent seed.
fn calibration(null: &ReplicateSet) -> Outcome {
    let alpha = 0.05;
    let fresh = simulate_conditional(50, 0.2, &SimulationGeometry::paper(), Allocation::Proportional { total: 32_000 }, true, 77).unwrap();
    let w = &fresh.weights;

    let c = null_table_from_set(null, StatisticName::C).unwrap();
    let (lo, hi) = (c.quantile(alpha / 2.0), c.quantile(1.0 - alpha / 2.0));
    let c_rej: Vec<bool> = fresh.replicates.iter().map(|r| {
        let v = cv_of(&r.areas);
        v < lo || v > hi
    }).collect();

    let d_q = loo_quantiles(StatisticName::D, null, &[1.0 - alpha]).unwrap().values[0];
    let m = null.mean_cdf().unwrap().cdf;
    let d_rej: Vec<bool> = fresh
        .replicates
        .iter()
        .map(|r| {
            let mut a = r.areas.clone();
            a.sort_by(f64::total_cmp);
            sup_distance_to_sample(&m, &a) > d_q
        })
        .collect();

    let l0 = null.loo_values(StatisticName::L0).unwrap();
    let l1 = null.loo_values(StatisticName::L1).unwrap();
    let rule = JointLandscapeRule::calibrate(&l0, &l1, &null.weights, alpha).unwrap();
    let (m0, m1) = (LandscapeMoments::new(&null.mean_landscape(0).unwrap()), LandscapeMoments::new(&null.mean_landscape(1).unwrap()));
    let l_rej: Vec<bool> = fresh
        .replicates
        .iter()
        .map(|r| {
            let l = r.landscapes.as_ref().unwrap();
            landscape_rejects(m0.sq_distance(&l.h0).sqrt(), m1.sq_distance(&l.h1).sqrt(), rule.q0, rule.q1)
        })
        .collect();

    let rates = [weighted_rate(&c_rej, w), weighted_rate(&d_rej, w), weighted_rate(&l_rej, w)];
    Outcome {
        pass: fresh.len() >= 1000 && rates.iter().all(|r| within(r.0, alpha, 0.02)),
        detail: format!(
            "{} null sections: C {:.3} (se {:.3}), D {:.3} (se {:.3}), joint L0/L1 {:.3} (se {:.3}; marginal level {:.4})",
            fresh.len(),
            rates[0].0,
            rates[0].1,
            rates[1].0,
            rates[1].1,
            rates[2].0,
            rates[2].1,
            rule.gamma
        ),
    }
}

fn report(n: usize, name: &str, start: Instant, o: &Outcome) -> bool {
    println!(
        "criterion {n:>2} {} {name}: {} [{:.1}s]",
        if o.pass { "PASS" } else { "FAIL" },
        o.detail,
        start.elapsed().as_secs_f64()
    );
    o.pass
}

fn main() {
    let mut all = true;
    let mut run = |n: usize, name: &str, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        all &= report(n, name, start, &f());
    };
    run(1, "sectional cell moments", &mut moments);
    run(2, "estimator bias", &mut estimator_bias);
    let start = Instant::now();
    let set = reference_set();
    println!("reference set: {} retained of {} simulated [{:.1}s]", set.len(), set.strata.iter().map(|s| s.simulated).sum::<usize>(), start.elapsed().as_secs_f64());
    run(3, "CV null quantiles", &mut || cv_quantiles(&set));
    run(4, "KS null quantile", &mut || ks_quantile(&set));
    run(5, "bootstrap interval", &mut bootstrap);
    run(6, "H0 persistence vs MST", &mut h0_oracle);
    run(7, "Euler characteristic", &mut euler);
    run(8, "landscape oracle", &mut landscape_oracle);
    run(9, "sectioning oracle", &mut sectioning_oracle);
    run(10, "stratified conditioning", &mut lemma1);
    run(11, "test calibration", &mut || calibration(&set));
    if !all {
        std::process::exit(1);
    }
}
