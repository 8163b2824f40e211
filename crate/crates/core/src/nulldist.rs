//! Null distributions conditional on the number of section cells.
//!
//! Given `N3D = k` generators the section statistics do not depend on the
//! intensity, so simulations are stratified by `k` and mixed with Poisson
//! weights `P(N3D = k)`. A retained replicate (one with exactly `n_2d`
//! cells) from stratum `k` with `R_k` simulations carries weight
//! `P(N3D = k) / R_k`; these weights estimate
//! `P(N2D = n_2d | N3D = k) P(N3D = k)` per stratum and can be recomputed
//! for any other intensity without new simulation.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, Poisson as PoissonSampler};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use statrs::distribution::{Discrete, Poisson};

use crate::error::{invalid, Error, Result};
use crate::geometry::{
    sample_fixed_generators_with, section_tessellation, BoundaryMode, BoxGeometry, Rect, SectionPlane,
    SectionTessellation,
};
use crate::rng::{child_seed, rng_from_seed};
use crate::statistics::{
    centroid_landscapes, cv_of, ks_statistic_periodic, sup_distance_to_sample, AreaSample, CentroidLandscapes,
    ConditionalMeanCdf, Ecdf, ReferenceCdf, SampleSource, StatisticName, TestResult,
};
use crate::stereology::{c1, estimate_lambda, Method, SectionSummary};
use crate::tda::{weighted_mean_landscape, Landscape, LandscapeMoments};

pub const SCHEMA_VERSION: u32 = 1;

/// Quantile levels of the published tables.
pub const PAPER_ALPHAS: [f64; 12] = [0.005, 0.01, 0.0125, 0.025, 0.05, 0.1, 0.9, 0.95, 0.975, 0.9875, 0.99, 0.995];

/// Poisson mass left out of the stratified sums.
pub const TRUNCATION_MASS: f64 = 1e-6;

/// Simulation domain and how sections are taken from it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationGeometry {
    pub domain: BoxGeometry,
    /// Observation window in plane coordinates; the full face when absent.
    pub window: Option<Rect>,
    /// Normal axis of the section; uniform over the three axes when absent.
    pub axis: Option<usize>,
    /// Plane offsets are uniform on `[margin, L - margin]` along the normal.
    #[serde(default)]
    pub margin: f64,
}

impl SimulationGeometry {
    pub fn new(domain: BoxGeometry, window: Option<Rect>, axis: Option<usize>) -> Result<Self> {
        if let Some(a) = axis {
            if a > 2 {
                return Err(invalid(format!("axis {a} out of range")));
            }
        }
        if window.is_some() && domain.is_periodic() {
            return Err(invalid("periodic sections use the full box face"));
        }
        let g = Self { domain, window, axis, margin: 0.0 };
        if window.is_some() && axis.is_none() && !g.faces_equal() {
            return Err(invalid("a custom window needs a fixed axis unless the box is a cube"));
        }
        Ok(g)
    }

    /// Keeps section planes at least `margin` away from the faces they are
    /// parallel to.
    pub fn with_margin(mut self, margin: f64) -> Result<Self> {
        let min_len = self.domain.lengths().into_iter().fold(f64::INFINITY, f64::min);
        if !(margin >= 0.0 && 2.0 * margin < min_len) {
            return Err(invalid(format!("margin {margin} must be in [0, {})", 0.5 * min_len)));
        }
        self.margin = margin;
        Ok(self)
    }

    /// Bounded cube of side `side` with full-face sections.
    pub fn cube(side: f64) -> Result<Self> {
        Self::new(BoxGeometry::cube(side, BoundaryMode::Bounded)?, None, None)
    }

    /// Reference setting for the published tables: bounded cube of side 10,
    /// planes at least one unit from the faces.
    pub fn paper() -> Self {
        Self::cube(10.0).and_then(|g| g.with_margin(1.0)).expect("valid preset")
    }

    /// Geometry matching an observed `w x h` window: a cube of side `w`
    /// for square windows (margin a tenth of the side when bounded),
    /// otherwise a `w x h x max(w, h)` box cut normal to `z`.
    pub fn for_window(w: f64, h: f64, mode: BoundaryMode) -> Result<Self> {
        let periodic = mode == BoundaryMode::Periodic;
        if w == h {
            let g = Self::new(BoxGeometry::cube(w, mode)?, None, None)?;
            return if periodic { Ok(g) } else { g.with_margin(0.1 * w) };
        }
        let d = w.max(h);
        let g = Self::new(BoxGeometry::new([w, h, d], mode)?, None, Some(2))?;
        if periodic {
            Ok(g)
        } else {
            g.with_margin(0.1 * d)
        }
    }

    fn faces_equal(&self) -> bool {
        let l = self.domain.lengths();
        l[0] == l[1] && l[1] == l[2]
    }

    pub fn volume(&self) -> f64 {
        self.domain.volume()
    }

    /// Window area; for full-face sections of a non-cubic box with a random
    /// axis this is the mean face area.
    pub fn window_area(&self) -> f64 {
        if let Some(w) = self.window {
            return w.area();
        }
        let l = self.domain.lengths();
        let face = |a: usize| l[(a + 1) % 3] * l[(a + 2) % 3];
        match self.axis {
            Some(a) => face(a),
            None => (face(0) + face(1) + face(2)) / 3.0,
        }
    }

    /// Short stable digest of the geometry, used in cache keys.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("geometry serialises");
        hex::encode(&Sha256::digest(&json)[..8])
    }

    /// Section of `k` uniform generators by a random plane, fully determined
    /// by `seed`.
    pub fn simulate_section(&self, k: usize, seed: u64) -> Result<SectionTessellation> {
        let mut rng = rng_from_seed(seed);
        let gen = sample_fixed_generators_with(k, &self.domain, &mut rng, seed);
        let axis = self.axis.unwrap_or_else(|| rng.gen_range(0..3));
        let l = self.domain.lengths()[axis];
        let offset = self.margin + rng.gen::<f64>() * (l - 2.0 * self.margin);
        let mut plane = SectionPlane::axis_aligned(axis, offset, &self.domain)?;
        if let Some(w) = self.window {
            plane = plane.with_window(w)?;
        }
        if gen.is_empty() {
            return Ok(SectionTessellation { cells: vec![], window: plane.window, periodic: false, degenerate: true });
        }
        section_tessellation(&gen, &plane)
    }

    /// Section of a Poisson diagram with intensity `lambda`.
    pub fn simulate_poisson_section(&self, lambda: f64, seed: u64) -> Result<SectionTessellation> {
        check_lambda(lambda)?;
        let mean = lambda * self.volume();
        let k = PoissonSampler::new(mean).map_err(|e| invalid(e.to_string()))?.sample(&mut rng_from_seed(child_seed(seed, &[0])));
        self.simulate_section(k as usize, child_seed(seed, &[1]))
    }
}

fn poisson_pmf(mean: f64, k: usize) -> f64 {
    if mean <= 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    Poisson::new(mean).expect("positive mean").ln_pmf(k as u64).exp()
}

/// Smallest range `[lo, hi]` around the mode holding at least
/// `1 - TRUNCATION_MASS` of the Poisson(`mean`) mass.
fn poisson_support(mean: f64) -> (usize, usize) {
    if mean <= 0.0 {
        return (0, 0);
    }
    let mode = mean.floor() as usize;
    let (mut lo, mut hi) = (mode, mode);
    let mut mass = poisson_pmf(mean, mode);
    while mass < 1.0 - TRUNCATION_MASS {
        let left = if lo > 0 { poisson_pmf(mean, lo - 1) } else { 0.0 };
        let right = poisson_pmf(mean, hi + 1);
        if left >= right && lo > 0 {
            lo -= 1;
            mass += left;
        } else {
            hi += 1;
            mass += right;
        }
    }
    (lo, hi)
}

/// How many simulations each `N3D = k` stratum receives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Allocation {
    /// `R_k = max(1, round(total P(N3D = k)))`; equivalent to direct
    /// simulation, so retained weights are nearly equal.
    Proportional { total: usize },
    /// Same count for every stratum.
    Uniform { per_k: usize },
}

impl Allocation {
    fn count(&self, prior: f64) -> usize {
        match *self {
            Allocation::Proportional { total } => ((total as f64 * prior).round() as usize).max(1),
            Allocation::Uniform { per_k } => per_k,
        }
    }

    pub fn nominal_total(&self) -> usize {
        match *self {
            Allocation::Proportional { total } => total,
            Allocation::Uniform { per_k } => per_k,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stratum {
    pub k: usize,
    /// `P(N3D = k)` at the set's intensity.
    pub prior: f64,
    pub simulated: usize,
    pub retained: usize,
}

impl Stratum {
    pub fn retention_rate(&self) -> f64 {
        self.retained as f64 / self.simulated as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replicate {
    pub n_3d: usize,
    /// Index within its stratum.
    pub index: usize,
    pub areas: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub landscapes: Option<CentroidLandscapes>,
}

/// Retained replicates with exactly `n_2d` cells and their mixture weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateSet {
    pub n_2d: usize,
    pub lambda: f64,
    pub geometry: SimulationGeometry,
    pub seed: u64,
    pub allocation: Allocation,
    pub strata: Vec<Stratum>,
    pub replicates: Vec<Replicate>,
    /// Normalised weights, one per replicate.
    pub weights: Vec<f64>,
    /// Poisson mass of `N3D` outside the simulated strata.
    pub truncated_mass: f64,
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(invalid(format!("intensity must be positive, got {lambda}")));
    }
    Ok(())
}

/// Simulates the strata for conditioning on `n_2d` cells at intensity
/// `lambda`. Landscapes of retained sections are computed when requested.
pub fn simulate_conditional(
    n_2d: usize,
    lambda: f64,
    geometry: &SimulationGeometry,
    allocation: Allocation,
    with_landscapes: bool,
    seed: u64,
) -> Result<ReplicateSet> {
    check_lambda(lambda)?;
    if n_2d == 0 {
        return Err(invalid("conditioning count must be positive"));
    }
    let mean = lambda * geometry.volume();
    let (lo, hi) = poisson_support(mean);
    let ks: Vec<usize> = (lo.max(n_2d)..=hi).collect();
    if ks.is_empty() {
        return Err(Error::InfeasibleConditioning {
            n_2d,
            diagnostics: format!("N3D support [{lo}, {hi}] lies below n_2d at lambda*V = {mean:.4}"),
        });
    }
    let priors: Vec<f64> = ks.iter().map(|&k| poisson_pmf(mean, k)).collect();
    let jobs: Vec<(usize, usize)> = ks
        .iter()
        .zip(&priors)
        .flat_map(|(&k, &p)| (0..allocation.count(p)).map(move |r| (k, r)))
        .collect();
    let results: Vec<Option<Replicate>> = jobs
        .par_iter()
        .map(|&(k, r)| -> Result<Option<Replicate>> {
            let tess = geometry.simulate_section(k, child_seed(seed, &[k as u64, r as u64]))?;
            if tess.n_2d() != n_2d {
                return Ok(None);
            }
            let landscapes = if with_landscapes { Some(centroid_landscapes(&tess)?) } else { None };
            Ok(Some(Replicate { n_3d: k, index: r, areas: tess.areas(), landscapes }))
        })
        .collect::<Result<_>>()?;

    let mut strata: Vec<Stratum> = ks
        .iter()
        .zip(&priors)
        .map(|(&k, &prior)| Stratum { k, prior, simulated: allocation.count(prior), retained: 0 })
        .collect();
    let replicates: Vec<Replicate> = results.into_iter().flatten().collect();
    for rep in &replicates {
        strata[rep.n_3d - ks[0]].retained += 1;
    }
    let mut set = ReplicateSet {
        n_2d,
        lambda,
        geometry: *geometry,
        seed,
        allocation,
        strata,
        replicates,
        weights: Vec::new(),
        truncated_mass: 0.0,
    };
    set.update_weights()?;
    Ok(set)
}

impl ReplicateSet {
    fn update_weights(&mut self) -> Result<()> {
        if self.replicates.is_empty() {
            let simulated: usize = self.strata.iter().map(|s| s.simulated).sum();
            return Err(Error::InfeasibleConditioning {
                n_2d: self.n_2d,
                diagnostics: format!(
                    "{simulated} sections simulated over N3D in [{}, {}] at lambda = {}",
                    self.strata.first().map_or(0, |s| s.k),
                    self.strata.last().map_or(0, |s| s.k),
                    self.lambda
                ),
            });
        }
        let k0 = self.strata[0].k;
        let raw: Vec<f64> = self
            .replicates
            .iter()
            .map(|r| {
                let s = &self.strata[r.n_3d - k0];
                s.prior / s.simulated as f64
            })
            .collect();
        let total: f64 = raw.iter().sum();
        if !(total > 0.0) {
            return Err(Error::InfeasibleConditioning {
                n_2d: self.n_2d,
                diagnostics: format!("retained strata carry no Poisson mass at lambda = {}", self.lambda),
            });
        }
        self.weights = raw.iter().map(|w| w / total).collect();
        self.truncated_mass = (1.0 - self.strata.iter().map(|s| s.prior).sum::<f64>()).max(0.0);
        Ok(())
    }

    /// The same simulations mixed for intensity `lambda`. Strata are not
    /// extended, so `truncated_mass` grows when `lambda` moves far away.
    pub fn reweighted(&self, lambda: f64) -> Result<Self> {
        check_lambda(lambda)?;
        let mean = lambda * self.geometry.volume();
        let mut out = self.clone();
        out.lambda = lambda;
        for s in &mut out.strata {
            s.prior = poisson_pmf(mean, s.k);
        }
        out.update_weights()?;
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.replicates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.replicates.is_empty()
    }

    /// Normalised `P(N3D = k | N2D = n_2d)` estimates.
    pub fn weights_by_n3d(&self) -> BTreeMap<usize, f64> {
        let mut m = BTreeMap::new();
        for (r, w) in self.replicates.iter().zip(&self.weights) {
            *m.entry(r.n_3d).or_insert(0.0) += w;
        }
        m
    }

    /// Kish effective sample size of the weights.
    pub fn effective_size(&self) -> f64 {
        let s2: f64 = self.weights.iter().map(|w| w * w).sum();
        1.0 / s2
    }

    pub fn mean_cdf(&self) -> Result<ConditionalMeanCdf> {
        let parts: Vec<(&[f64], f64)> = self.replicates.iter().zip(&self.weights).map(|(r, &w)| (&r.areas[..], w)).collect();
        Ok(ConditionalMeanCdf { n_2d: self.n_2d, lambda: self.lambda, cdf: Ecdf::mixture(&parts)? })
    }

    fn landscapes(&self, dimension: usize) -> Result<Vec<&Landscape>> {
        self.replicates
            .iter()
            .map(|r| {
                let l = r.landscapes.as_ref().ok_or_else(|| invalid("replicate set was simulated without landscapes"))?;
                match dimension {
                    0 => Ok(&l.h0),
                    1 => Ok(&l.h1),
                    d => Err(invalid(format!("no landscapes in dimension {d}"))),
                }
            })
            .collect()
    }

    pub fn mean_landscape(&self, dimension: usize) -> Result<Landscape> {
        let ls: Vec<Landscape> = self.landscapes(dimension)?.into_iter().cloned().collect();
        weighted_mean_landscape(&ls, &self.weights)
    }

    /// Statistic of every replicate against the weighted mean of the others.
    ///
    /// With `M = sum_j w_j f_j`, the mean without `i` is
    /// `(M - w_i f_i) / (1 - w_i)`, so `f_i` minus it equals
    /// `(f_i - M) / (1 - w_i)` and every leave-one-out distance is a
    /// rescaled distance to the full mean.
    pub fn loo_values(&self, statistic: StatisticName) -> Result<Vec<f64>> {
        if self.len() < 2 {
            return Err(invalid("leave-one-out needs at least 2 replicates"));
        }
        let scale = |w: f64| if w < 1.0 { 1.0 / (1.0 - w) } else { 0.0 };
        match statistic {
            StatisticName::D => {
                let m = self.mean_cdf()?.cdf;
                Ok(self
                    .replicates
                    .par_iter()
                    .zip(&self.weights)
                    .map(|(r, &w)| {
                        let mut a = r.areas.clone();
                        a.sort_by(f64::total_cmp);
                        sup_distance_to_sample(&m, &a) * scale(w)
                    })
                    .collect())
            }
            StatisticName::L0 | StatisticName::L1 => {
                let dim = if statistic == StatisticName::L0 { 0 } else { 1 };
                let moments = LandscapeMoments::new(&self.mean_landscape(dim)?);
                let ls = self.landscapes(dim)?;
                Ok(ls.par_iter().zip(&self.weights).map(|(l, &w)| moments.sq_distance(l).sqrt() * scale(w)).collect())
            }
            StatisticName::C => Err(invalid("the coefficient of variation has no leave-one-out form")),
        }
    }

    /// Per-replicate null values of `statistic`.
    pub fn statistic_values(&self, statistic: StatisticName) -> Result<Vec<f64>> {
        match statistic {
            StatisticName::C => {
                if self.n_2d < 2 {
                    return Err(invalid("coefficient of variation needs n_2d >= 2"));
                }
                Ok(self.replicates.iter().map(|r| cv_of(&r.areas)).collect())
            }
            s => self.loo_values(s),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NullSample {
    pub value: f64,
    pub n_3d: usize,
    pub weight: f64,
}

/// Weighted null sample of one statistic given `n_2d` section cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullTable {
    pub schema_version: u32,
    pub statistic: StatisticName,
    pub n_2d: usize,
    pub lambda: f64,
    pub geometry: SimulationGeometry,
    pub geometry_digest: String,
    pub seed: u64,
    pub replicates: usize,
    pub samples: Vec<NullSample>,
    pub weights_by_n3d: BTreeMap<usize, f64>,
    pub strata: Vec<Stratum>,
    pub truncated_mass: f64,
    /// Mean object observed sections are compared with (D, L0, L1).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<NullReference>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NullReference {
    MeanCdf(ConditionalMeanCdf),
    MeanLandscape(Landscape),
    /// Unit-intensity reference for the periodic KS statistic, identified by
    /// its section count and seed.
    PeriodicReference { sections: usize, seed: u64 },
}

fn table_from_values(set: &ReplicateSet, statistic: StatisticName, values: &[f64], reference: Option<NullReference>) -> NullTable {
    NullTable {
        schema_version: SCHEMA_VERSION,
        statistic,
        n_2d: set.n_2d,
        lambda: set.lambda,
        geometry: set.geometry,
        geometry_digest: set.geometry.digest(),
        seed: set.seed,
        replicates: set.allocation.nominal_total(),
        samples: values
            .iter()
            .zip(&set.replicates)
            .zip(&set.weights)
            .map(|((&value, r), &weight)| NullSample { value, n_3d: r.n_3d, weight })
            .collect(),
        weights_by_n3d: set.weights_by_n3d(),
        strata: set.strata.clone(),
        truncated_mass: set.truncated_mass,
        reference,
    }
}

/// Null table of the periodic KS statistic: every replicate is compared
/// with `reference` after standardising by its own `lambda_hat` (method a).
pub fn null_table_periodic_ks(set: &ReplicateSet, reference: &ReferenceCdf) -> Result<NullTable> {
    let values: Vec<f64> = set
        .replicates
        .par_iter()
        .map(|r| {
            let sample = AreaSample::new(r.areas.clone(), SampleSource::PeriodicModel)?;
            let lambda_hat = mean_area_lambda(sample.mean())?;
            Ok(ks_statistic_periodic(&sample, reference, lambda_hat)?.value)
        })
        .collect::<Result<_>>()?;
    let tag = NullReference::PeriodicReference { sections: reference.sections, seed: reference.seed };
    Ok(table_from_values(set, StatisticName::D, &values, Some(tag)))
}

/// Intensity estimate from the mean cell area.
pub fn mean_area_lambda(mean_area: f64) -> Result<f64> {
    let s = SectionSummary { p_a: 0.0, n_a: 0.0, l_a: 0.0, mean_area, n_cells: 0 };
    Ok(estimate_lambda(&s, Method::A)?.value)
}

pub fn null_table_from_set(set: &ReplicateSet, statistic: StatisticName) -> Result<NullTable> {
    let values = set.statistic_values(statistic)?;
    let reference = match statistic {
        StatisticName::C => None,
        StatisticName::D => Some(NullReference::MeanCdf(set.mean_cdf()?)),
        StatisticName::L0 => Some(NullReference::MeanLandscape(set.mean_landscape(0)?)),
        StatisticName::L1 => Some(NullReference::MeanLandscape(set.mean_landscape(1)?)),
    };
    Ok(table_from_values(set, statistic, &values, reference))
}

/// Conditional null table with proportional allocation of `replicates`
/// simulations.
pub fn build_null_table(
    statistic: StatisticName,
    n_2d: usize,
    lambda: f64,
    geometry: &SimulationGeometry,
    replicates: usize,
    seed: u64,
) -> Result<NullTable> {
    let needs_landscapes = matches!(statistic, StatisticName::L0 | StatisticName::L1);
    let set = simulate_conditional(n_2d, lambda, geometry, Allocation::Proportional { total: replicates }, needs_landscapes, seed)?;
    null_table_from_set(&set, statistic)
}

/// Smallest value whose cumulative weight reaches `alpha`.
pub fn weighted_quantile(values: &[f64], weights: &[f64], alpha: f64) -> f64 {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let total: f64 = weights.iter().sum();
    let target = alpha * total;
    let mut acc = 0.0;
    for &i in &idx {
        acc += weights[i];
        // Relative slack so that e.g. 0.95 of equal weights is not missed
        // by rounding.
        if acc >= target * (1.0 - 1e-12) {
            return values[i];
        }
    }
    values[*idx.last().expect("nonempty")]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tail {
    Upper,
    /// Twice the smaller tail, capped at one.
    TwoSided,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PValue {
    pub p: f64,
    /// `1 / effective sample size`: p-values below this are not resolved.
    pub resolution: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileTable {
    pub statistic: StatisticName,
    pub alphas: Vec<f64>,
    pub values: Vec<f64>,
}

impl QuantileTable {
    pub fn get(&self, alpha: f64) -> Option<f64> {
        self.alphas.iter().position(|a| (a - alpha).abs() < 1e-12).map(|i| self.values[i])
    }

    pub fn write_csv(&self, out: &mut impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["alpha", self.statistic.as_str()])?;
        for (a, v) in self.alphas.iter().zip(&self.values) {
            w.write_record([a.to_string(), v.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn pairs(&self) -> Vec<(f64, f64)> {
        self.alphas.iter().copied().zip(self.values.iter().copied()).collect()
    }
}

impl NullTable {
    fn values(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.value).collect()
    }

    fn weights(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.weight).collect()
    }

    pub fn effective_size(&self) -> f64 {
        let w = self.weights();
        let s: f64 = w.iter().sum();
        s * s / w.iter().map(|x| x * x).sum::<f64>()
    }

    pub fn quantile(&self, alpha: f64) -> f64 {
        weighted_quantile(&self.values(), &self.weights(), alpha)
    }

    pub fn quantiles(&self, alphas: &[f64]) -> QuantileTable {
        let (v, w) = (self.values(), self.weights());
        QuantileTable {
            statistic: self.statistic,
            alphas: alphas.to_vec(),
            values: alphas.iter().map(|&a| weighted_quantile(&v, &w, a)).collect(),
        }
    }

    /// Cache file name built from the table's key fields.
    pub fn cache_name(statistic: StatisticName, n_2d: usize, lambda: f64, geometry: &SimulationGeometry, seed: u64, replicates: usize) -> String {
        format!(
            "null-v{SCHEMA_VERSION}-{}-n{n_2d}-l{lambda:.3e}-g{}-s{seed}-r{replicates}.json",
            statistic.as_str(),
            geometry.digest()
        )
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        serde_json::to_writer(&mut out, self)?;
        out.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let t: Self = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        if t.schema_version != SCHEMA_VERSION {
            return Err(Error::Mismatch(format!("cache schema {} != {SCHEMA_VERSION}", t.schema_version)));
        }
        Ok(t)
    }
}

/// Looks up a cached table; `Ok(None)` when absent.
pub fn load_cached(
    dir: &Path,
    statistic: StatisticName,
    n_2d: usize,
    lambda: f64,
    geometry: &SimulationGeometry,
    seed: u64,
    replicates: usize,
) -> Result<Option<NullTable>> {
    let path = dir.join(NullTable::cache_name(statistic, n_2d, lambda, geometry, seed, replicates));
    if !path.exists() {
        return Ok(None);
    }
    NullTable::load(&path).map(Some)
}

pub fn store_cached(dir: &Path, table: &NullTable) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(NullTable::cache_name(table.statistic, table.n_2d, table.lambda, &table.geometry, table.seed, table.replicates));
    table.save(&path)?;
    Ok(path)
}

/// Weighted tail probability of `observed` under `table`.
pub fn p_value(table: &NullTable, observed: &TestResult, tail: Tail) -> Result<PValue> {
    if table.statistic != observed.statistic || table.n_2d != observed.n_2d {
        return Err(Error::Mismatch(format!(
            "table is for {} with n_2d = {}, observation is {} with n_2d = {}",
            table.statistic.as_str(),
            table.n_2d,
            observed.statistic.as_str(),
            observed.n_2d
        )));
    }
    let t = observed.value;
    let total: f64 = table.samples.iter().map(|s| s.weight).sum();
    let upper: f64 = table.samples.iter().filter(|s| s.value >= t).map(|s| s.weight).sum::<f64>() / total;
    let p = match tail {
        Tail::Upper => upper,
        Tail::TwoSided => {
            let lower: f64 = table.samples.iter().filter(|s| s.value <= t).map(|s| s.weight).sum::<f64>() / total;
            (2.0 * upper.min(lower)).min(1.0)
        }
    };
    Ok(PValue { p: p.clamp(0.0, 1.0), resolution: 1.0 / table.effective_size() })
}

/// `P(N2D = n | N3D = k)` by simulation; `k = 0` gives `{0: 1}`.
pub fn estimate_n2d_given_n3d(k: usize, geometry: &SimulationGeometry, replicates: usize, seed: u64) -> Result<BTreeMap<usize, f64>> {
    if k == 0 || replicates == 0 {
        return Ok(BTreeMap::from([(0, 1.0)]));
    }
    let counts: Vec<usize> = (0..replicates)
        .into_par_iter()
        .map(|r| geometry.simulate_section(k, child_seed(seed, &[k as u64, r as u64])).map(|t| t.n_2d()))
        .collect::<Result<_>>()?;
    let mut hist: BTreeMap<usize, usize> = BTreeMap::new();
    for c in counts {
        *hist.entry(c).or_insert(0) += 1;
    }
    Ok(hist.into_iter().map(|(n, c)| (n, c as f64 / replicates as f64)).collect())
}

pub fn mean_cdf_conditional(n_2d: usize, lambda: f64, geometry: &SimulationGeometry, replicates: usize, seed: u64) -> Result<ConditionalMeanCdf> {
    simulate_conditional(n_2d, lambda, geometry, Allocation::Proportional { total: replicates }, false, seed)?.mean_cdf()
}

pub fn mean_landscape_conditional(
    n_2d: usize,
    lambda: f64,
    geometry: &SimulationGeometry,
    dimension: usize,
    replicates: usize,
    seed: u64,
) -> Result<Landscape> {
    simulate_conditional(n_2d, lambda, geometry, Allocation::Proportional { total: replicates }, true, seed)?.mean_landscape(dimension)
}

/// Leave-one-out quantiles of `statistic` (D, L0 or L1) over a replicate set.
pub fn loo_quantiles(statistic: StatisticName, set: &ReplicateSet, alphas: &[f64]) -> Result<QuantileTable> {
    let v = set.loo_values(statistic)?;
    Ok(QuantileTable { statistic, alphas: alphas.to_vec(), values: alphas.iter().map(|&a| weighted_quantile(&v, &set.weights, a)).collect() })
}

/// Thresholds for the joint landscape rule: reject unless both `L0 < q0`
/// and `L1 < q1`. Both thresholds are upper quantiles at a common marginal
/// level `gamma`, chosen so that the joint null rejection rate is `alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointLandscapeRule {
    pub alpha: f64,
    pub gamma: f64,
    pub q0: f64,
    pub q1: f64,
}

impl JointLandscapeRule {
    pub fn rejects(&self, l0: f64, l1: f64) -> bool {
        crate::statistics::landscape_rejects(l0, l1, self.q0, self.q1)
    }

    /// Uses the marginal `1 - alpha` quantiles without calibration.
    pub fn uncalibrated(l0: &[f64], l1: &[f64], weights: &[f64], alpha: f64) -> Self {
        let q0 = weighted_quantile(l0, weights, 1.0 - alpha);
        let q1 = weighted_quantile(l1, weights, 1.0 - alpha);
        Self { alpha, gamma: alpha, q0, q1 }
    }

    pub fn calibrate(l0: &[f64], l1: &[f64], weights: &[f64], alpha: f64) -> Result<Self> {
        if l0.len() != l1.len() || l0.len() != weights.len() || l0.is_empty() {
            return Err(invalid("landscape null samples must be nonempty and aligned"));
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(invalid(format!("alpha must lie in (0, 1), got {alpha}")));
        }
        let total: f64 = weights.iter().sum();
        let size = |rule: &Self| -> f64 {
            l0.iter().zip(l1).zip(weights).filter(|((&a, &b), _)| rule.rejects(a, b)).map(|(_, w)| w).sum::<f64>() / total
        };
        let mut best = Self::uncalibrated(l0, l1, weights, 0.0);
        best.alpha = alpha;
        let steps = 2000;
        for i in 1..=steps {
            let gamma = alpha * i as f64 / steps as f64;
            let mut rule = Self::uncalibrated(l0, l1, weights, gamma);
            rule.alpha = alpha;
            if size(&rule) <= alpha {
                best = rule;
            } else {
                break;
            }
        }
        Ok(best)
    }
}

/// Ninety-percent bootstrap confidence set for the intensity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapCi {
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    pub lambda_hat: f64,
    /// Quantiles of `sqrt(lambda*) - sqrt(lambda_hat)`.
    pub l_low: f64,
    pub l_high: f64,
}

/// Interval from weighted draws `(lambda*, weight)`.
pub fn bootstrap_ci_from_draws(lambda_hat: f64, draws: &[(f64, f64)]) -> Result<BootstrapCi> {
    check_lambda(lambda_hat)?;
    if draws.is_empty() {
        return Err(invalid("no bootstrap draws"));
    }
    let root = lambda_hat.sqrt();
    let u: Vec<f64> = draws.iter().map(|d| d.0.sqrt() - root).collect();
    let w: Vec<f64> = draws.iter().map(|d| d.1).collect();
    let l_low = weighted_quantile(&u, &w, 0.05);
    let l_high = weighted_quantile(&u, &w, 0.95);
    let lower = (root - l_high).max(0.0).powi(2);
    let upper = (root - l_low).max(0.0).powi(2);
    Ok(BootstrapCi { lower, upper, level: 0.90, lambda_hat, l_low, l_high })
}

/// Simulates diagrams at `lambda_hat`, stratified over `N3D`, and
/// re-estimates the intensity from one random section each using the cell
/// count (`mean area = window area / N2D`).
pub fn bootstrap_ci_lambda(lambda_hat: f64, geometry: &SimulationGeometry, n_boot: usize, seed: u64) -> Result<BootstrapCi> {
    check_lambda(lambda_hat)?;
    if n_boot == 0 {
        return Err(invalid("n_boot must be positive"));
    }
    let draws = bootstrap_draws(lambda_hat, geometry, n_boot, seed)?;
    bootstrap_ci_from_draws(lambda_hat, &draws)
}

/// Weighted `(lambda*, weight)` draws behind [`bootstrap_ci_lambda`].
pub fn bootstrap_draws(lambda_hat: f64, geometry: &SimulationGeometry, n_boot: usize, seed: u64) -> Result<Vec<(f64, f64)>> {
    let mean = lambda_hat * geometry.volume();
    let (lo, hi) = poisson_support(mean);
    let alloc = Allocation::Proportional { total: n_boot };
    let jobs: Vec<(usize, usize, f64)> = (lo..=hi)
        .flat_map(|k| {
            let p = poisson_pmf(mean, k);
            let r = alloc.count(p);
            (0..r).map(move |i| (k, i, p / r as f64))
        })
        .collect();
    let area = geometry.window_area();
    let c = c1();
    jobs.par_iter()
        .map(|&(k, r, w)| {
            let n = geometry.simulate_section(k, child_seed(seed, &[k as u64, r as u64]))?.n_2d();
            Ok(((2.0 * n as f64 / (c * area)).powf(1.5), w))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_world() -> SimulationGeometry {
        SimulationGeometry::cube(2.0).unwrap()
    }

    #[test]
    fn poisson_support_mass() {
        let (lo, hi) = poisson_support(200.0);
        let mass: f64 = (lo..=hi).map(|k| poisson_pmf(200.0, k)).sum();
        assert!(mass >= 1.0 - TRUNCATION_MASS && lo < 200 && hi > 200);
    }

    #[test]
    fn n2d_given_n3d_trivial_cases() {
        let g = small_world();
        assert_eq!(estimate_n2d_given_n3d(0, &g, 10, 1).unwrap(), BTreeMap::from([(0, 1.0)]));
        assert_eq!(estimate_n2d_given_n3d(1, &g, 10, 1).unwrap(), BTreeMap::from([(1, 1.0)]));
    }

    #[test]
    fn weights_normalise_and_are_deterministic() {
        let g = small_world();
        let a = simulate_conditional(3, 0.5, &g, Allocation::Uniform { per_k: 20 }, false, 9).unwrap();
        let b = simulate_conditional(3, 0.5, &g, Allocation::Uniform { per_k: 20 }, false, 9).unwrap();
        assert_eq!(a, b);
        assert!((a.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(a.replicates.iter().all(|r| r.n_3d >= 3 && r.areas.len() == 3));
        let t = null_table_from_set(&a, StatisticName::C).unwrap();
        assert!((t.weights_by_n3d.values().sum::<f64>() - 1.0).abs() < 1e-12);
        let r = a.reweighted(0.7).unwrap();
        assert!((r.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_ne!(r.weights, a.weights);
    }

    #[test]
    fn infeasible_conditioning_reported() {
        let g = small_world();
        let e = simulate_conditional(500, 0.5, &g, Allocation::Uniform { per_k: 2 }, false, 1);
        assert!(matches!(e, Err(Error::InfeasibleConditioning { .. })));
    }

    fn table(values: &[f64]) -> NullTable {
        let n = values.len() as f64;
        NullTable {
            schema_version: SCHEMA_VERSION,
            statistic: StatisticName::C,
            n_2d: 5,
            lambda: 1.0,
            geometry: small_world(),
            geometry_digest: small_world().digest(),
            seed: 0,
            replicates: values.len(),
            samples: values.iter().map(|&v| NullSample { value: v, n_3d: 5, weight: 1.0 / n }).collect(),
            weights_by_n3d: BTreeMap::from([(5, 1.0)]),
            strata: vec![],
            truncated_mass: 0.0,
            reference: None,
        }
    }

    #[test]
    fn p_value_edges_and_monotonicity() {
        let t = table(&[0.1, 0.2, 0.3, 0.4]);
        let obs = |v| TestResult::new(StatisticName::C, v, 5);
        assert_eq!(p_value(&t, &obs(0.0), Tail::Upper).unwrap().p, 1.0);
        let top = p_value(&t, &obs(1.0), Tail::Upper).unwrap();
        assert!(top.p <= top.resolution);
        let mut prev = 1.0;
        for i in 0..50 {
            let p = p_value(&t, &obs(i as f64 * 0.01), Tail::Upper).unwrap().p;
            assert!(p <= prev);
            prev = p;
        }
        assert_eq!(p_value(&t, &obs(0.1), Tail::TwoSided).unwrap().p, 0.5);
        assert!(p_value(&t, &TestResult::new(StatisticName::D, 0.1, 5), Tail::Upper).is_err());
    }

    #[test]
    fn quantiles_on_grid() {
        let vals: Vec<f64> = (1..=100).map(|i| i as f64).collect();
        let t = table(&vals);
        assert_eq!(t.quantile(0.05), 5.0);
        assert_eq!(t.quantile(0.95), 95.0);
        let mut buf = Vec::new();
        t.quantiles(&PAPER_ALPHAS).write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 13);
    }

    #[test]
    fn degenerate_bootstrap_collapses() {
        let ci = bootstrap_ci_from_draws(0.2, &[(0.2, 1.0); 10]).unwrap();
        assert!((ci.lower - 0.2).abs() < 1e-15 && (ci.upper - 0.2).abs() < 1e-15);
        assert!(bootstrap_ci_from_draws(0.0, &[(0.2, 1.0)]).is_err());
    }

    #[test]
    fn identical_replicates_have_zero_loo() {
        let rep = Replicate { n_3d: 4, index: 0, areas: vec![1.0, 2.0, 1.0], landscapes: None };
        let set = ReplicateSet {
            n_2d: 3,
            lambda: 1.0,
            geometry: small_world(),
            seed: 0,
            allocation: Allocation::Uniform { per_k: 3 },
            strata: vec![],
            replicates: vec![rep.clone(), rep.clone(), rep],
            weights: vec![1.0 / 3.0; 3],
            truncated_mass: 0.0,
        };
        assert!(set.loo_values(StatisticName::D).unwrap().iter().all(|&d| d < 1e-12));
    }

    #[test]
    fn cache_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let t = table(&[0.1, 0.2]);
        store_cached(dir.path(), &t).unwrap();
        let back = load_cached(dir.path(), StatisticName::C, 5, 1.0, &small_world(), 0, 2).unwrap().unwrap();
        assert_eq!(back, t);
        assert!(load_cached(dir.path(), StatisticName::C, 6, 1.0, &small_world(), 0, 2).unwrap().is_none());
    }
}
