//! Command-line front end.
//!
//! Every subcommand that writes into an output directory also writes a
//! `manifest.json` holding the effective configuration (paths made
//! absolute); `pvtest rerun <manifest>` repeats the run from it alone.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{
    read_tessellation_csv, read_tessellation_json, window_cut, write_tessellation_json, BoundaryMode, BoxGeometry,
    SectionTessellation, Visibility,
};
use crate::nulldist::{
    bootstrap_ci_lambda, null_table_from_set, null_table_periodic_ks, p_value, simulate_conditional, store_cached,
    Allocation, BootstrapCi, JointLandscapeRule, NullReference, NullTable, QuantileTable, SimulationGeometry, Tail,
    PAPER_ALPHAS,
};
use crate::rng::child_seed;
use crate::statistics::{
    centroid_landscapes, cv_statistic, ks_statistic_conditional, ks_statistic_periodic, landscape_statistics,
    AreaSample, CentroidLandscapes, ReferenceCdf, StatisticName, TestResult,
};
use crate::stereology::{estimate_lambda, summarize_section_with, ClippedCells, Method, SectionSummary};
use crate::tda::{alpha_filtration, landscape_from_diagram, persistence_pairs, write_diagram_csv, PointCloud2};

#[derive(Debug, Parser)]
#[command(name = "pvtest", version, about = "Test planar sections against the 3D Poisson-Voronoi model")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(tag = "subcommand", rename_all = "kebab-case")]
pub enum Command {
    /// Simulate Poisson-Voronoi diagrams and write one planar section of each.
    Simulate(SimulateArgs),
    /// Estimate the 3D intensity from a section, with a bootstrap interval.
    Estimate(EstimateArgs),
    /// Test a section against the conditional null distributions.
    Test(TestArgs),
    /// Persistence diagram and landscapes of cell centroids or a point cloud.
    Tda(TdaArgs),
    /// Build a conditional null table and write its quantiles.
    NullTable(NullTableArgs),
    /// Repeat the run recorded in a manifest.
    #[serde(skip)]
    Rerun { manifest: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StatisticChoice {
    /// Coefficient of variation of the cell areas.
    Cv,
    /// Kolmogorov-Smirnov distance of the area distribution.
    Ks,
    /// L2 distances of the H0 and H1 centroid landscapes.
    Landscape,
}

impl StatisticChoice {
    fn names(self) -> &'static [StatisticName] {
        match self {
            StatisticChoice::Cv => &[StatisticName::C],
            StatisticChoice::Ks => &[StatisticName::D],
            StatisticChoice::Landscape => &[StatisticName::L0, StatisticName::L1],
        }
    }
}

fn expand(choices: &[StatisticChoice]) -> Vec<StatisticName> {
    let mut out: Vec<StatisticName> = Vec::new();
    for c in choices {
        for s in c.names() {
            if !out.contains(s) {
                out.push(*s);
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KsReference {
    /// Mean area CDF of simulated sections with the observed cell count.
    Conditional,
    /// Unit-intensity periodic reference after rescaling by the estimated intensity.
    Periodic,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct BoxArgs {
    /// Periodic (toroidal) simulation box.
    #[arg(long, conflicts_with = "bounded")]
    pub periodic: bool,
    /// Bounded simulation box (the default).
    #[arg(long)]
    pub bounded: bool,
    /// Side of the cubic simulation box.
    #[arg(long = "box", default_value_t = 10.0)]
    pub side: f64,
    /// Minimum distance of section planes from the box faces; defaults to a
    /// tenth of the side for bounded boxes.
    #[arg(long)]
    pub margin: Option<f64>,
}

impl BoxArgs {
    pub fn geometry(&self) -> Result<SimulationGeometry> {
        let mode = if self.periodic { BoundaryMode::Periodic } else { BoundaryMode::Bounded };
        let g = SimulationGeometry::new(BoxGeometry::cube(self.side, mode)?, None, None)?;
        let margin = self.margin.unwrap_or(if self.periodic { 0.0 } else { 0.1 * self.side });
        g.with_margin(margin)
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SimulateArgs {
    /// Generator intensity (points per unit volume).
    #[arg(long)]
    pub lambda: f64,
    #[arg(long)]
    pub seed: u64,
    /// Number of diagrams, one section each.
    #[arg(long, default_value_t = 1)]
    pub replicates: usize,
    #[command(flatten)]
    pub geometry: BoxArgs,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct EstimateArgs {
    /// Tessellation JSON, or CSV with a `.header.json` sidecar.
    pub input: PathBuf,
    #[arg(long)]
    pub seed: u64,
    /// Bootstrap simulations.
    #[arg(long, default_value_t = 10_000)]
    pub n_boot: usize,
    /// Average cell areas over complete cells only.
    #[arg(long)]
    pub exclude_clipped: bool,
    /// Output directory; the report goes to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct TestArgs {
    /// Tessellation JSON, or CSV with a `.header.json` sidecar.
    pub input: PathBuf,
    /// Statistics to compute.
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [StatisticChoice::Cv, StatisticChoice::Ks, StatisticChoice::Landscape])]
    pub statistic: Vec<StatisticChoice>,
    #[arg(long)]
    pub seed: u64,
    /// Simulations behind each null table (before conditioning).
    #[arg(long, default_value_t = 100_000)]
    pub replicates: usize,
    /// Intensity of the null model; estimated from mean cell area when absent.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Shrink the window to this many cells before testing.
    #[arg(long)]
    pub n2d: Option<usize>,
    /// Directory of cached null tables.
    #[arg(long, default_value = "pvtest-cache")]
    pub cache_dir: PathBuf,
    /// Simulate null tables that are not cached.
    #[arg(long)]
    pub build_null: bool,
    /// Significance level of the decisions.
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Quantile levels echoed in the report.
    #[arg(long, value_delimiter = ',')]
    pub alpha_grid: Option<Vec<f64>>,
    #[arg(long, value_enum, default_value_t = KsReference::Conditional)]
    pub ks_reference: KsReference,
    /// Sections in the periodic unit-intensity reference sample.
    #[arg(long, default_value_t = 10_000)]
    pub reference_sections: usize,
    /// Average cell areas over complete cells only when estimating the intensity.
    #[arg(long)]
    pub exclude_clipped: bool,
    /// Also test against nulls at the bootstrap interval endpoints and report p-value ranges.
    #[arg(long)]
    pub ci_band: bool,
    /// Bootstrap simulations for --ci-band.
    #[arg(long, default_value_t = 10_000)]
    pub n_boot: usize,
    /// Output directory; the JSON result goes to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct TdaArgs {
    /// Tessellation (JSON, or CSV with sidecar) or a point CSV with columns `x,y`.
    pub input: PathBuf,
    /// Landscape domain end; the largest death by default.
    #[arg(long)]
    pub domain_end: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct NullTableArgs {
    #[arg(long, value_enum)]
    pub statistic: StatisticChoice,
    #[arg(long)]
    pub n2d: usize,
    #[arg(long)]
    pub lambda: f64,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 100_000)]
    pub replicates: usize,
    #[command(flatten)]
    pub geometry: BoxArgs,
    /// Quantile levels to tabulate.
    #[arg(long, value_delimiter = ',')]
    pub alpha_grid: Option<Vec<f64>>,
    /// Level of the calibrated joint landscape rule.
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Reuse and store tables here.
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: Command,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let m: Self = serde_json::from_reader(File::open(path)?)?;
        if m.tool != env!("CARGO_PKG_NAME") {
            return Err(invalid(format!("{} is not a {} manifest", path.display(), env!("CARGO_PKG_NAME"))));
        }
        Ok(m)
    }
}

fn absolute(p: &mut PathBuf) -> Result<()> {
    *p = std::path::absolute(&*p)?;
    Ok(())
}

impl Command {
    /// Absolute paths, so that a manifest can be replayed from anywhere.
    fn normalized(mut self) -> Result<Self> {
        match &mut self {
            Command::Simulate(a) => absolute(&mut a.out)?,
            Command::Estimate(a) => {
                absolute(&mut a.input)?;
                if let Some(o) = &mut a.out {
                    absolute(o)?;
                }
            }
            Command::Test(a) => {
                absolute(&mut a.input)?;
                absolute(&mut a.cache_dir)?;
                if let Some(o) = &mut a.out {
                    absolute(o)?;
                }
            }
            Command::Tda(a) => {
                absolute(&mut a.input)?;
                absolute(&mut a.out)?;
            }
            Command::NullTable(a) => {
                absolute(&mut a.out)?;
                if let Some(c) = &mut a.cache_dir {
                    absolute(c)?;
                }
            }
            Command::Rerun { manifest } => absolute(manifest)?,
        }
        Ok(self)
    }
}

/// Runs a parsed command, writing human-readable output to `stdout`.
pub fn run(command: Command, stdout: &mut dyn Write) -> Result<()> {
    let command = command.normalized()?;
    match &command {
        Command::Rerun { manifest } => return run(Manifest::load(manifest)?.command, stdout),
        Command::Simulate(a) => {
            prepare_out(&a.out)?;
            cmd_simulate(a)?;
        }
        Command::Estimate(a) => {
            check_input(&a.input)?;
            if let Some(o) = &a.out {
                prepare_out(o)?;
            }
            let report = cmd_estimate(a)?;
            match &a.out {
                Some(o) => write_json(&o.join("estimate.json"), &report)?,
                None => writeln!(stdout, "{}", serde_json::to_string_pretty(&report)?)?,
            }
        }
        Command::Test(a) => {
            check_input(&a.input)?;
            if let Some(o) = &a.out {
                prepare_out(o)?;
            }
            let report = cmd_test(a)?;
            match &a.out {
                Some(o) => {
                    write_json(&o.join("test.json"), &report)?;
                    write!(stdout, "{}", render_test_report(&report))?;
                }
                None => writeln!(stdout, "{}", serde_json::to_string_pretty(&report)?)?,
            }
        }
        Command::Tda(a) => {
            check_input(&a.input)?;
            prepare_out(&a.out)?;
            cmd_tda(a)?;
        }
        Command::NullTable(a) => {
            prepare_out(&a.out)?;
            cmd_null_table(a)?;
        }
    }
    if let Some(dir) = out_dir(&command) {
        let m = Manifest { tool: env!("CARGO_PKG_NAME").into(), version: env!("CARGO_PKG_VERSION").into(), command: command.clone() };
        write_json(&dir.join("manifest.json"), &m)?;
    }
    Ok(())
}

fn out_dir(c: &Command) -> Option<&Path> {
    match c {
        Command::Simulate(a) => Some(&a.out),
        Command::Estimate(a) => a.out.as_deref(),
        Command::Test(a) => a.out.as_deref(),
        Command::Tda(a) => Some(&a.out),
        Command::NullTable(a) => Some(&a.out),
        Command::Rerun { .. } => None,
    }
}

fn check_input(p: &Path) -> Result<()> {
    if !p.is_file() {
        return Err(invalid(format!("input {} is not a readable file", p.display())));
    }
    Ok(())
}

fn prepare_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| invalid(format!("cannot create output directory {}: {e}", dir.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn has_extension(p: &Path, ext: &str) -> bool {
    p.extension().is_some_and(|e| e.eq_ignore_ascii_case(ext))
}

fn csv_header_exists(p: &Path) -> bool {
    let mut s = p.as_os_str().to_owned();
    s.push(".header.json");
    Path::new(&s).is_file()
}

pub fn read_tessellation(path: &Path) -> Result<SectionTessellation> {
    if has_extension(path, "csv") {
        read_tessellation_csv(path)
    } else {
        read_tessellation_json(path)
    }
}

fn cmd_simulate(a: &SimulateArgs) -> Result<()> {
    let geometry = a.geometry.geometry()?;
    let sections: Vec<SectionTessellation> = (0..a.replicates)
        .into_par_iter()
        .map(|i| geometry.simulate_poisson_section(a.lambda, child_seed(a.seed, &[i as u64])))
        .collect::<Result<_>>()?;
    let mut w = csv::Writer::from_path(a.out.join("cells.csv"))?;
    w.write_record(["section", "cell", "area", "perimeter", "n_edges", "visibility", "centroid_x", "centroid_y"])?;
    for (i, t) in sections.iter().enumerate() {
        write_tessellation_json(t, &a.out.join(format!("section_{i:05}.json")))?;
        for (j, (cell, m)) in t.cells.iter().zip(t.metrics()?).enumerate() {
            let c = cell.centroid();
            let vis = match cell.visibility {
                Visibility::Complete => "complete",
                Visibility::Clipped => "clipped",
            };
            w.write_record([
                i.to_string(),
                j.to_string(),
                m.area.to_string(),
                m.perimeter.to_string(),
                m.n_edges.to_string(),
                vis.to_string(),
                (c[0] - t.window.x0).to_string(),
                (c[1] - t.window.y0).to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimateEntry {
    pub method: Method,
    pub value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimateReport {
    pub n_2d: usize,
    pub window: [f64; 2],
    pub periodic: bool,
    pub summary: SectionSummary,
    pub estimates: Vec<EstimateEntry>,
    /// Interval around the mean-area estimate.
    pub bootstrap: BootstrapCi,
    pub n_boot: usize,
    pub seed: u64,
}

fn boundary_mode(t: &SectionTessellation) -> BoundaryMode {
    if t.periodic {
        BoundaryMode::Periodic
    } else {
        BoundaryMode::Bounded
    }
}

pub fn cmd_estimate(a: &EstimateArgs) -> Result<EstimateReport> {
    let tess = read_tessellation(&a.input)?;
    let clipped = if a.exclude_clipped { ClippedCells::Exclude } else { ClippedCells::Include };
    let summary = summarize_section_with(&tess, clipped)?;
    let estimates = Method::ALL
        .iter()
        .map(|&method| match estimate_lambda(&summary, method) {
            Ok(e) => EstimateEntry { method, value: Some(e.value), error: None },
            Err(e) => EstimateEntry { method, value: None, error: Some(e.to_string()) },
        })
        .collect();
    let lambda_hat = estimate_lambda(&summary, Method::A)?.value;
    let (w, h) = (tess.window.width(), tess.window.height());
    let geometry = SimulationGeometry::for_window(w, h, boundary_mode(&tess))?;
    let bootstrap = bootstrap_ci_lambda(lambda_hat, &geometry, a.n_boot, a.seed)?;
    Ok(EstimateReport {
        n_2d: tess.n_2d(),
        window: [w, h],
        periodic: tess.periodic,
        summary,
        estimates,
        bootstrap,
        n_boot: a.n_boot,
        seed: a.seed,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StatisticReport {
    pub result: TestResult,
    pub tail: Tail,
    /// Smallest resolvable p-value (inverse effective null size).
    pub resolution: f64,
    pub reject: bool,
    /// Smallest and largest p-value over nulls at the estimate and at the
    /// bootstrap interval endpoints.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_range: Option<[f64; 2]>,
    pub quantiles: QuantileTable,
    pub table: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JointReport {
    pub rule: JointLandscapeRule,
    pub reject: bool,
    /// `[rejects under some endpoint null, rejects under all]`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reject_range: Option<[bool; 2]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TestReport {
    pub input: PathBuf,
    pub n_2d: usize,
    pub lambda: f64,
    /// `estimate` (mean cell area) or `override`.
    pub lambda_source: String,
    /// Bootstrap interval whose endpoints gave the p-value ranges.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_band: Option<BootstrapCi>,
    pub geometry: SimulationGeometry,
    pub alpha: f64,
    pub results: Vec<StatisticReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub joint: Option<JointReport>,
}

#[derive(Clone, Copy)]
struct TableRequest<'a> {
    n_2d: usize,
    lambda: f64,
    geometry: SimulationGeometry,
    replicates: usize,
    seed: u64,
    cache_dir: Option<&'a Path>,
    build: bool,
    /// Sections of the periodic KS reference, when that form is used.
    periodic_ks: Option<usize>,
}

impl TableRequest<'_> {
    fn path(&self, s: StatisticName) -> Option<PathBuf> {
        let name = NullTable::cache_name(s, self.n_2d, self.lambda, &self.geometry, self.seed, self.replicates);
        let name = if s == StatisticName::D && self.periodic_ks.is_some() { format!("periodic-{name}") } else { name };
        self.cache_dir.map(|d| d.join(name))
    }

    fn reference(&self, sections: usize) -> Result<ReferenceCdf> {
        let seed = child_seed(self.seed, &[u64::MAX]);
        match self.cache_dir {
            Some(d) => {
                fs::create_dir_all(d)?;
                ReferenceCdf::load_or_build(&d.join(format!("reference-{sections}-{seed}.json")), sections, 10.0, seed)
            }
            None => ReferenceCdf::simulate(sections, 10.0, seed),
        }
    }

    /// Cached tables where present; the rest from one shared simulation.
    fn obtain(&self, stats: &[StatisticName]) -> Result<Vec<(NullTable, Option<PathBuf>)>> {
        let mut tables: Vec<Option<(NullTable, Option<PathBuf>)>> = Vec::with_capacity(stats.len());
        for &s in stats {
            let path = self.path(s);
            match &path {
                Some(p) if p.is_file() => tables.push(Some((NullTable::load(p)?, path))),
                Some(p) if !self.build => return Err(Error::MissingNullTable(p.display().to_string())),
                _ => tables.push(None),
            }
        }
        let missing: Vec<usize> = (0..stats.len()).filter(|&i| tables[i].is_none()).collect();
        if !missing.is_empty() {
            let landscapes = missing.iter().any(|&i| matches!(stats[i], StatisticName::L0 | StatisticName::L1));
            let alloc = Allocation::Proportional { total: self.replicates };
            let set = simulate_conditional(self.n_2d, self.lambda, &self.geometry, alloc, landscapes, self.seed)?;
            for i in missing {
                let table = match (stats[i], self.periodic_ks) {
                    (StatisticName::D, Some(sections)) => null_table_periodic_ks(&set, &self.reference(sections)?)?,
                    (s, _) => null_table_from_set(&set, s)?,
                };
                if let Some(dir) = self.cache_dir {
                    let stored = store_cached(dir, &table)?;
                    let path = self.path(stats[i]).expect("cache dir set");
                    if stored != path {
                        fs::rename(&stored, &path)?;
                    }
                }
                tables[i] = Some((table, self.path(stats[i])));
            }
        }
        Ok(tables.into_iter().map(|t| t.expect("filled")).collect())
    }
}

fn alpha_grid(grid: &Option<Vec<f64>>, extra: &[f64]) -> Result<Vec<f64>> {
    let mut g = grid.clone().unwrap_or_else(|| PAPER_ALPHAS.to_vec());
    for &a in extra {
        if !g.iter().any(|x| (x - a).abs() < 1e-12) {
            g.push(a);
        }
    }
    if g.iter().any(|a| !(*a > 0.0 && *a < 1.0)) {
        return Err(invalid("alpha levels must lie in (0, 1)"));
    }
    g.sort_by(f64::total_cmp);
    Ok(g)
}

fn joint_rule(l0: &NullTable, l1: &NullTable, alpha: f64) -> Result<JointLandscapeRule> {
    let aligned = l0.samples.len() == l1.samples.len()
        && l0.samples.iter().zip(&l1.samples).all(|(a, b)| a.n_3d == b.n_3d && a.weight == b.weight);
    if !aligned {
        return Err(Error::Mismatch("L0 and L1 tables come from different simulations".into()));
    }
    let v0: Vec<f64> = l0.samples.iter().map(|s| s.value).collect();
    let v1: Vec<f64> = l1.samples.iter().map(|s| s.value).collect();
    let w: Vec<f64> = l0.samples.iter().map(|s| s.weight).collect();
    JointLandscapeRule::calibrate(&v0, &v1, &w, alpha)
}

/// Observed section, prepared once for all statistics.
struct Observation {
    tess: SectionTessellation,
    sample: AreaSample,
    /// Mean-area estimate, used to standardise the periodic KS statistic.
    lambda_hat: f64,
    landscapes: Option<CentroidLandscapes>,
}

fn evaluate(
    obs: &Observation,
    request: &TableRequest,
    stats: &[StatisticName],
    alpha: f64,
    grid: &[f64],
) -> Result<(Vec<StatisticReport>, Option<JointReport>)> {
    let tables = request.obtain(stats)?;
    let n_2d = obs.tess.n_2d();
    let mean_landscape = |s: StatisticName| {
        tables.iter().find(|(t, _)| t.statistic == s).and_then(|(t, _)| match &t.reference {
            Some(NullReference::MeanLandscape(l)) => Some(l),
            _ => None,
        })
    };
    let observed_l = match &obs.landscapes {
        Some(l) => Some(landscape_statistics(l, (mean_landscape(StatisticName::L0), mean_landscape(StatisticName::L1)), n_2d)?),
        None => None,
    };

    let mut results = Vec::new();
    for (table, path) in &tables {
        let observed = match table.statistic {
            StatisticName::C => cv_statistic(&obs.sample)?,
            StatisticName::D => match &table.reference {
                Some(NullReference::MeanCdf(m)) => ks_statistic_conditional(&obs.sample, m)?,
                Some(NullReference::PeriodicReference { sections, .. }) => {
                    ks_statistic_periodic(&obs.sample, &request.reference(*sections)?, obs.lambda_hat)?
                }
                _ => return Err(Error::Mismatch("KS table carries no reference distribution".into())),
            },
            StatisticName::L0 => observed_l.as_ref().expect("landscapes computed").0.clone(),
            StatisticName::L1 => observed_l.as_ref().expect("landscapes computed").1.clone(),
        };
        let tail = if table.statistic == StatisticName::C { Tail::TwoSided } else { Tail::Upper };
        let p = p_value(table, &observed, tail)?;
        let (used, reject) = match tail {
            Tail::TwoSided => {
                let (lo, hi) = (table.quantile(0.5 * alpha), table.quantile(1.0 - 0.5 * alpha));
                (vec![(0.5 * alpha, lo), (1.0 - 0.5 * alpha, hi)], observed.value < lo || observed.value > hi)
            }
            Tail::Upper => {
                let q = table.quantile(1.0 - alpha);
                (vec![(1.0 - alpha, q)], observed.value > q)
            }
        };
        let mut result = observed;
        result.p_value = Some(p.p);
        result.quantiles_used = used;
        if result.lambda_hat.is_none() {
            result.lambda_hat = Some(request.lambda);
        }
        results.push(StatisticReport {
            result,
            tail,
            resolution: p.resolution,
            reject,
            p_range: None,
            quantiles: table.quantiles(grid),
            table: path.clone().unwrap_or_default(),
        });
    }

    let joint = match observed_l {
        Some((l0, l1)) => {
            let t = |s| &tables.iter().find(|(t, _)| t.statistic == s).expect("table present").0;
            let rule = joint_rule(t(StatisticName::L0), t(StatisticName::L1), alpha)?;
            Some(JointReport { rule, reject: rule.rejects(l0.value, l1.value), reject_range: None })
        }
        None => None,
    };
    Ok((results, joint))
}

pub fn cmd_test(a: &TestArgs) -> Result<TestReport> {
    if !(a.alpha > 0.0 && a.alpha < 0.5) {
        return Err(invalid(format!("alpha must lie in (0, 0.5), got {}", a.alpha)));
    }
    let mut tess = read_tessellation(&a.input)?;
    if let Some(n) = a.n2d {
        if n != tess.n_2d() {
            tess = window_cut(&tess, n)?;
        }
    }
    let n_2d = tess.n_2d();
    let clipped = if a.exclude_clipped { ClippedCells::Exclude } else { ClippedCells::Include };
    let lambda_hat = estimate_lambda(&summarize_section_with(&tess, clipped)?, Method::A)?.value;
    let (lambda, lambda_source) = match a.lambda {
        Some(l) => (l, "override"),
        None => (lambda_hat, "estimate"),
    };
    let periodic_ks = a.ks_reference == KsReference::Periodic;
    if periodic_ks && !tess.periodic {
        return Err(invalid("the periodic KS reference needs a periodic section"));
    }
    let geometry = SimulationGeometry::for_window(tess.window.width(), tess.window.height(), boundary_mode(&tess))?;
    let stats = expand(&a.statistic);
    if stats.is_empty() {
        return Err(invalid("no statistic selected"));
    }
    let grid = alpha_grid(&a.alpha_grid, &[0.5 * a.alpha, 1.0 - 0.5 * a.alpha, 1.0 - a.alpha])?;
    let landscapes = if stats.contains(&StatisticName::L0) { Some(centroid_landscapes(&tess)?) } else { None };
    let obs = Observation { sample: AreaSample::from_tessellation(&tess)?, tess, lambda_hat, landscapes };
    let request = TableRequest {
        n_2d,
        lambda,
        geometry,
        replicates: a.replicates,
        seed: a.seed,
        cache_dir: Some(&a.cache_dir),
        build: a.build_null,
        periodic_ks: periodic_ks.then_some(a.reference_sections),
    };
    let (mut results, mut joint) = evaluate(&obs, &request, &stats, a.alpha, &grid)?;

    // Same statistics against nulls at the interval endpoints.
    let lambda_band = if a.ci_band {
        let ci = bootstrap_ci_lambda(lambda, &geometry, a.n_boot, child_seed(a.seed, &[1]))?;
        for end in [ci.lower, ci.upper] {
            let (r, j) = evaluate(&obs, &TableRequest { lambda: end, ..request }, &stats, a.alpha, &grid)?;
            for (base, other) in results.iter_mut().zip(&r) {
                let (p0, p1) = (base.result.p_value.unwrap_or(f64::NAN), other.result.p_value.unwrap_or(f64::NAN));
                let [lo, hi] = base.p_range.unwrap_or([p0, p0]);
                base.p_range = Some([lo.min(p1), hi.max(p1)]);
            }
            if let (Some(base), Some(other)) = (joint.as_mut(), j) {
                let [any, all] = base.reject_range.unwrap_or([base.reject, base.reject]);
                base.reject_range = Some([any || other.reject, all && other.reject]);
            }
        }
        Some(ci)
    } else {
        None
    };
    Ok(TestReport {
        input: a.input.clone(),
        n_2d,
        lambda,
        lambda_source: lambda_source.into(),
        lambda_band,
        geometry,
        alpha: a.alpha,
        results,
        joint,
    })
}

pub fn render_test_report(r: &TestReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "input      {}", r.input.display());
    let _ = writeln!(s, "n_2d       {}", r.n_2d);
    let _ = writeln!(s, "lambda     {:.6} ({})", r.lambda, r.lambda_source);
    if let Some(ci) = &r.lambda_band {
        let _ = writeln!(s, "interval   [{:.6}, {:.6}] ({:.0}% bootstrap)", ci.lower, ci.upper, 100.0 * ci.level);
    }
    let _ = writeln!(s, "alpha      {}", r.alpha);
    for st in &r.results {
        let res = &st.result;
        let p = res.p_value.unwrap_or(f64::NAN);
        let _ = writeln!(
            s,
            "\n{:<3} = {:.6}  p = {:.4}{}  {}",
            res.statistic.as_str(),
            res.value,
            p,
            if p < st.resolution { " (below resolution)" } else { "" },
            if st.reject { "REJECT" } else { "accept" }
        );
        if let Some([lo, hi]) = st.p_range {
            let _ = writeln!(s, "    p over the lambda interval: [{lo:.4}, {hi:.4}]");
        }
        let used: Vec<String> = res.quantiles_used.iter().map(|(a, q)| format!("q{a} = {q:.6}")).collect();
        let _ = writeln!(s, "    decision on {}", used.join(", "));
        let _ = writeln!(s, "    null table {}", st.table.display());
        for (a, q) in st.quantiles.pairs() {
            let _ = writeln!(s, "    {a:<8} {q:.6}");
        }
    }
    if let Some(j) = &r.joint {
        let _ = writeln!(
            s,
            "\njoint landscape rule: reject unless L0 < {:.6} and L1 < {:.6} (marginal level {:.5})  {}",
            j.rule.q0,
            j.rule.q1,
            j.rule.gamma,
            if j.reject { "REJECT" } else { "accept" }
        );
    }
    s
}

#[derive(Debug, Deserialize)]
struct PointRow {
    x: f64,
    y: f64,
}

fn read_points(path: &Path) -> Result<Vec<[f64; 2]>> {
    if has_extension(path, "json") || (has_extension(path, "csv") && csv_header_exists(path)) {
        let t = read_tessellation(path)?;
        return Ok(t.centroids());
    }
    let mut r = csv::Reader::from_path(path)?;
    let pts = r.deserialize::<PointRow>().map(|row| row.map(|p| [p.x, p.y])).collect::<std::result::Result<Vec<_>, _>>()?;
    if pts.is_empty() {
        return Err(invalid(format!("{} holds no points", path.display())));
    }
    Ok(pts)
}

fn cmd_tda(a: &TdaArgs) -> Result<()> {
    let cloud = PointCloud2::new(read_points(&a.input)?)?;
    let diag = persistence_pairs(&alpha_filtration(&cloud)?)?;
    let t = a.domain_end.unwrap_or_else(|| diag.max_death());
    let mut out = BufWriter::new(File::create(a.out.join("diagram.csv"))?);
    write_diagram_csv(&diag, &mut out)?;
    out.flush()?;
    for dim in [0, 1] {
        landscape_from_diagram(&diag, dim, t)?.write_csv_file(&a.out.join(format!("landscape_h{dim}.csv")))?;
    }
    Ok(())
}

fn cmd_null_table(a: &NullTableArgs) -> Result<()> {
    let stats = a.statistic.names();
    let request = TableRequest {
        n_2d: a.n2d,
        lambda: a.lambda,
        geometry: a.geometry.geometry()?,
        replicates: a.replicates,
        seed: a.seed,
        cache_dir: a.cache_dir.as_deref(),
        build: true,
        periodic_ks: None,
    };
    let tables = request.obtain(stats)?;
    let grid = alpha_grid(&a.alpha_grid, &[])?;
    for (t, _) in &tables {
        let mut w = BufWriter::new(File::create(a.out.join(format!("quantiles_{}.csv", t.statistic.as_str())))?);
        t.quantiles(&grid).write_csv(&mut w)?;
        w.flush()?;
    }
    if let [(l0, _), (l1, _)] = &tables[..] {
        write_json(&a.out.join("joint_rule.json"), &joint_rule(l0, l1, a.alpha)?)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn command_round_trips_through_json() {
        let cli = Cli::try_parse_from([
            "pvtest", "null-table", "--statistic", "landscape", "--n2d", "5", "--lambda", "0.2", "--seed", "3", "--periodic",
            "--out", "x",
        ])
        .unwrap();
        let json = serde_json::to_string(&cli.command).unwrap();
        let back: Command = serde_json::from_str(&json).unwrap();
        assert_eq!(back, cli.command);
    }

    #[test]
    fn seed_is_mandatory_for_stochastic_commands() {
        assert!(Cli::try_parse_from(["pvtest", "simulate", "--lambda", "1", "--out", "x"]).is_err());
        assert!(Cli::try_parse_from(["pvtest", "estimate", "in.json"]).is_err());
    }

    #[test]
    fn periodic_and_bounded_conflict() {
        assert!(Cli::try_parse_from(["pvtest", "simulate", "--lambda", "1", "--seed", "1", "--out", "x", "--periodic", "--bounded"]).is_err());
    }

    #[test]
    fn statistic_expansion_dedups() {
        assert_eq!(
            expand(&[StatisticChoice::Landscape, StatisticChoice::Cv, StatisticChoice::Landscape]),
            vec![StatisticName::L0, StatisticName::L1, StatisticName::C]
        );
    }
}
