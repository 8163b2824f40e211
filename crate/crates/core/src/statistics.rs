//! Test statistics on section cell areas and centroid landscapes.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{section_tessellation, sample_poisson_generators, BoxGeometry, SectionPlane, SectionTessellation};
use crate::rng::{child_seed, rng_from_seed};
use crate::tda::{alpha_filtration, landscape_from_diagram, landscape_l2_distance, persistence_pairs, Landscape, PointCloud2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleSource {
    PeriodicModel,
    Observed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AreaSample {
    areas: Vec<f64>,
    pub source: SampleSource,
}

impl AreaSample {
    pub fn new(areas: Vec<f64>, source: SampleSource) -> Result<Self> {
        if areas.is_empty() {
            return Err(invalid("area sample is empty"));
        }
        if let Some(a) = areas.iter().find(|a| !(a.is_finite() && **a > 0.0)) {
            return Err(invalid(format!("cell areas must be positive, got {a}")));
        }
        Ok(Self { areas, source })
    }

    pub fn from_tessellation(t: &SectionTessellation) -> Result<Self> {
        if t.cells.is_empty() {
            return Err(Error::EmptyTessellation);
        }
        let source = if t.periodic { SampleSource::PeriodicModel } else { SampleSource::Observed };
        Self::new(t.areas(), source)
    }

    pub fn areas(&self) -> &[f64] {
        &self.areas
    }

    pub fn n(&self) -> usize {
        self.areas.len()
    }

    pub fn mean(&self) -> f64 {
        self.areas.iter().sum::<f64>() / self.n() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StatisticName {
    C,
    D,
    L0,
    L1,
}

impl StatisticName {
    pub fn as_str(&self) -> &'static str {
        match self {
            StatisticName::C => "C",
            StatisticName::D => "D",
            StatisticName::L0 => "L0",
            StatisticName::L1 => "L1",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: StatisticName,
    pub value: f64,
    pub p_value: Option<f64>,
    pub n_2d: usize,
    pub lambda_hat: Option<f64>,
    /// Landscape integration end, when relevant.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub domain_end: Option<f64>,
    /// `(alpha, quantile)` pairs the decision was based on.
    pub quantiles_used: Vec<(f64, f64)>,
}

impl TestResult {
    pub fn new(statistic: StatisticName, value: f64, n_2d: usize) -> Self {
        Self { statistic, value, p_value: None, n_2d, lambda_hat: None, domain_end: None, quantiles_used: Vec::new() }
    }
}

/// Coefficient of variation, sample sd (n - 1) over mean.
pub fn cv_of(areas: &[f64]) -> f64 {
    let n = areas.len() as f64;
    let mean = areas.iter().sum::<f64>() / n;
    let ss: f64 = areas.iter().map(|a| (a - mean) * (a - mean)).sum();
    (ss / (n - 1.0)).sqrt() / mean
}

pub fn cv_statistic(sample: &AreaSample) -> Result<TestResult> {
    if sample.n() < 2 {
        return Err(invalid("coefficient of variation needs at least 2 areas"));
    }
    Ok(TestResult::new(StatisticName::C, cv_of(&sample.areas), sample.n()))
}

/// Weighted right-continuous step CDF. `xs` are distinct and sorted and
/// `cum[i]` is the CDF value at `xs[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ecdf {
    pub xs: Vec<f64>,
    pub cum: Vec<f64>,
}

impl Ecdf {
    pub fn from_sample(values: &[f64]) -> Self {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len() as f64;
        let mut xs = Vec::with_capacity(v.len());
        let mut cum = Vec::with_capacity(v.len());
        for (i, &x) in v.iter().enumerate() {
            if xs.last() == Some(&x) {
                *cum.last_mut().expect("nonempty") = (i + 1) as f64 / n;
            } else {
                xs.push(x);
                cum.push((i + 1) as f64 / n);
            }
        }
        Self { xs, cum }
    }

    /// Weighted mixture; weights are normalised to sum to one.
    pub fn mixture(parts: &[(&[f64], f64)]) -> Result<Self> {
        let total: f64 = parts.iter().map(|p| p.1).sum();
        if !(total > 0.0) {
            return Err(invalid("mixture weights must have positive sum"));
        }
        let mut jumps: Vec<(f64, f64)> = Vec::new();
        for (values, w) in parts {
            if values.is_empty() {
                continue;
            }
            let mass = w / total / values.len() as f64;
            jumps.extend(values.iter().map(|&x| (x, mass)));
        }
        jumps.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut xs = Vec::new();
        let mut cum = Vec::new();
        let mut acc = 0.0;
        for (x, m) in jumps {
            acc += m;
            if xs.last() == Some(&x) {
                *cum.last_mut().expect("nonempty") = acc;
            } else {
                xs.push(x);
                cum.push(acc);
            }
        }
        // Guard against rounding drift at the top.
        if let Some(last) = cum.last_mut() {
            *last = 1.0;
        }
        Ok(Self { xs, cum })
    }

    pub fn eval(&self, x: f64) -> f64 {
        let j = self.xs.partition_point(|&t| t <= x);
        if j == 0 {
            0.0
        } else {
            self.cum[j - 1]
        }
    }

    /// Left limit `F(x-)`.
    pub fn eval_left(&self, x: f64) -> f64 {
        let j = self.xs.partition_point(|&t| t < x);
        if j == 0 {
            0.0
        } else {
            self.cum[j - 1]
        }
    }

    /// Smallest support point with CDF at least `p`.
    pub fn quantile(&self, p: f64) -> f64 {
        let j = self.cum.partition_point(|&c| c < p);
        self.xs[j.min(self.xs.len() - 1)]
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }
}

/// `sup_x |F(x) - G(x)|` for two step CDFs. Left limits at a jump equal the
/// value at the previous merged point, so checking the right values at every
/// merged point covers both one-sided limits.
pub fn sup_distance(f: &Ecdf, g: &Ecdf) -> f64 {
    let (mut i, mut j) = (0, 0);
    let (mut fv, mut gv) = (0.0f64, 0.0f64);
    let mut best = 0.0f64;
    while i < f.xs.len() || j < g.xs.len() {
        let x = match (f.xs.get(i), g.xs.get(j)) {
            (Some(&a), Some(&b)) => a.min(b),
            (Some(&a), None) => a,
            (None, Some(&b)) => b,
            (None, None) => unreachable!(),
        };
        if f.xs.get(i) == Some(&x) {
            fv = f.cum[i];
            i += 1;
        }
        if g.xs.get(j) == Some(&x) {
            gv = g.cum[j];
            j += 1;
        }
        best = best.max((fv - gv).abs());
    }
    best
}

/// `sup_x |M(x) - F_n(x)|` for the unweighted empirical CDF of `sorted`;
/// needs only `O(n log |M|)` work.
pub fn sup_distance_to_sample(m: &Ecdf, sorted: &[f64]) -> f64 {
    let n = sorted.len() as f64;
    let mut best = 0.0f64;
    let mut i = 0;
    while i < sorted.len() {
        let x = sorted[i];
        let before = i as f64 / n;
        while i < sorted.len() && sorted[i] == x {
            i += 1;
        }
        let after = i as f64 / n;
        best = best.max((m.eval(x) - after).abs()).max((m.eval_left(x) - before).abs());
    }
    best
}

/// Empirical CDF of sectional cell areas at unit intensity under periodic
/// boundaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceCdf {
    pub cdf: Ecdf,
    pub sample_size: usize,
    pub sections: usize,
    pub seed: u64,
}

impl ReferenceCdf {
    pub fn from_areas(areas: &[f64]) -> Result<Self> {
        if areas.is_empty() {
            return Err(invalid("reference sample is empty"));
        }
        Ok(Self { cdf: Ecdf::from_sample(areas), sample_size: areas.len(), sections: 0, seed: 0 })
    }

    /// Simulates `sections` periodic unit-intensity sections of a box with
    /// side `side` (one random axis-aligned full-face section per diagram).
    pub fn simulate(sections: usize, side: f64, seed: u64) -> Result<Self> {
        let geometry = BoxGeometry::cube(side, crate::geometry::BoundaryMode::Periodic)?;
        let areas: Vec<Vec<f64>> = (0..sections)
            .into_par_iter()
            .map(|i| -> Result<Vec<f64>> {
                let s = child_seed(seed, &[i as u64]);
                let gen = sample_poisson_generators(1.0, &geometry, child_seed(s, &[0]))?;
                if gen.is_empty() {
                    return Ok(Vec::new());
                }
                let plane = SectionPlane::random(&geometry, None, &mut rng_from_seed(child_seed(s, &[1])));
                Ok(section_tessellation(&gen, &plane)?.areas())
            })
            .collect::<Result<_>>()?;
        let flat: Vec<f64> = areas.concat();
        let mut out = Self::from_areas(&flat)?;
        out.sections = sections;
        out.seed = seed;
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        serde_json::to_writer(BufWriter::new(File::create(path)?), self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
    }

    /// Loads the cached table when it matches `(sections, side, seed)`,
    /// otherwise simulates and stores it.
    pub fn load_or_build(path: &Path, sections: usize, side: f64, seed: u64) -> Result<Self> {
        if let Ok(r) = Self::load(path) {
            if r.sections == sections && r.seed == seed {
                return Ok(r);
            }
        }
        let r = Self::simulate(sections, side, seed)?;
        r.save(path)?;
        Ok(r)
    }
}

/// `sup_x |F_1(x) - G(x)|` where `G` is the empirical CDF of the standardised
/// areas `lambda_hat^(2/3) a_i`, so that `D` depends on the areas only
/// through the standardised values.
pub fn ks_statistic_periodic(sample: &AreaSample, reference: &ReferenceCdf, lambda_hat: f64) -> Result<TestResult> {
    if !(lambda_hat.is_finite() && lambda_hat > 0.0) {
        return Err(invalid(format!("lambda_hat must be positive, got {lambda_hat}")));
    }
    let s = lambda_hat.powf(2.0 / 3.0);
    let standardised: Vec<f64> = sample.areas.iter().map(|a| s * a).collect();
    let d = sup_distance(&reference.cdf, &Ecdf::from_sample(&standardised));
    let mut r = TestResult::new(StatisticName::D, d, sample.n());
    r.lambda_hat = Some(lambda_hat);
    Ok(r)
}

/// Expected area CDF conditional on observing `n_2d` section cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalMeanCdf {
    pub n_2d: usize,
    pub lambda: f64,
    pub cdf: Ecdf,
}

pub fn ks_statistic_conditional(sample: &AreaSample, mean_cdf: &ConditionalMeanCdf) -> Result<TestResult> {
    if sample.n() != mean_cdf.n_2d {
        return Err(Error::Mismatch(format!("sample has {} cells, mean CDF is conditioned on {}", sample.n(), mean_cdf.n_2d)));
    }
    let d = sup_distance(&mean_cdf.cdf, &Ecdf::from_sample(&sample.areas));
    let mut r = TestResult::new(StatisticName::D, d, sample.n());
    r.lambda_hat = Some(mean_cdf.lambda);
    Ok(r)
}

/// H0 and H1 landscapes of the cell centroids of a section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentroidLandscapes {
    pub h0: Landscape,
    pub h1: Landscape,
}

pub fn centroid_landscapes(tess: &SectionTessellation) -> Result<CentroidLandscapes> {
    if tess.cells.is_empty() {
        return Err(Error::EmptyTessellation);
    }
    let cloud = PointCloud2::new(tess.centroids())?;
    let diag = persistence_pairs(&alpha_filtration(&cloud)?)?;
    let t = diag.max_death();
    Ok(CentroidLandscapes { h0: landscape_from_diagram(&diag, 0, t)?, h1: landscape_from_diagram(&diag, 1, t)? })
}

/// `L0` and `L1`: L2 distances between observed and mean landscapes. Both
/// functions vanish beyond their last death, so any common end `T` at or
/// past the largest death gives the same value; the larger of the two
/// domain ends is recorded.
pub fn landscape_statistics(
    observed: &CentroidLandscapes,
    means: (Option<&Landscape>, Option<&Landscape>),
    n_2d: usize,
) -> Result<(TestResult, TestResult)> {
    let (Some(m0), Some(m1)) = means else {
        return Err(invalid("both mean landscapes are required"));
    };
    let mk = |name, obs: &Landscape, mean: &Landscape| {
        let mut r = TestResult::new(name, landscape_l2_distance(obs, mean), n_2d);
        r.domain_end = Some(obs.domain_end.max(mean.domain_end));
        r
    };
    Ok((mk(StatisticName::L0, &observed.h0, m0), mk(StatisticName::L1, &observed.h1, m1)))
}

/// The joint landscape rule accepts only when both statistics are below
/// their thresholds.
pub fn landscape_rejects(l0: f64, l1: f64, q0: f64, q1: f64) -> bool {
    !(l0 < q0 && l1 < q1)
}

fn epanechnikov(u: f64) -> f64 {
    if u.abs() <= 1.0 {
        0.75 * (1.0 - u * u)
    } else {
        0.0
    }
}

/// Epanechnikov density estimate on `[0, inf)` with the linear-combination
/// boundary correction; evaluated at `points` (zero for negative points).
pub fn kde_boundary_corrected(sample: &AreaSample, h: f64, points: &[f64]) -> Result<Vec<f64>> {
    if !(h.is_finite() && h > 0.0) {
        return Err(invalid(format!("bandwidth must be positive, got {h}")));
    }
    let n = sample.n() as f64;
    Ok(points
        .iter()
        .map(|&x| {
            if x < 0.0 {
                return 0.0;
            }
            let p = (x / h).min(1.0);
            // Partial moments of the kernel over [-1, p].
            let a0 = 0.75 * (p - p.powi(3) / 3.0 + 2.0 / 3.0);
            let a1 = 0.75 * (p * p / 2.0 - p.powi(4) / 4.0 - 0.25);
            let a2 = 0.75 * (p.powi(3) / 3.0 - p.powi(5) / 5.0 + 2.0 / 15.0);
            let det = a0 * a2 - a1 * a1;
            let sum: f64 = sample
                .areas
                .iter()
                .map(|&xi| {
                    let u = (x - xi) / h;
                    if p >= 1.0 {
                        epanechnikov(u)
                    } else {
                        (a2 - a1 * u) * epanechnikov(u) / det
                    }
                })
                .sum();
            sum / (n * h)
        })
        .collect())
}
