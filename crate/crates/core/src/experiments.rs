//! Experiment drivers behind the CLI: single runs, refinement studies, noise
//! studies and alpha sweeps, plus their CSV tables.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use crate::direct::{
    check_apriori_l2, check_stability_bound, march_direct_exact, BoundReport, SolutionField,
};
use crate::error::{invalid, Error, Result};
use crate::inverse::{identify, Identification, IdentifyOptions};
use crate::mesh::{
    build_graded_mesh, build_spatial_grid, rate_optimal_grading, GradedTimeMesh, SpatialGrid,
};
use crate::metrics::{convergence_order, error_p, error_u, ErrorReport};
use crate::problems::{perturb_observations, ObservationSeries, ProblemSpec};

/// A registered problem plus optional domain overrides; instantiated per alpha.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSelection {
    pub name: String,
    pub length: Option<f64>,
    pub final_time: Option<f64>,
}

impl ProblemSelection {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            length: None,
            final_time: None,
        }
    }

    pub fn build(&self, alpha: f64) -> Result<ProblemSpec> {
        let spec =
            ProblemSpec::by_name(&self.name, alpha)?.with_domain(self.length, self.final_time);
        spec.validate()?;
        Ok(spec)
    }
}

/// `r` if given, otherwise `(2 - a) / a`.
pub fn resolve_grading(grading: Option<f64>, alpha: f64) -> f64 {
    grading.unwrap_or_else(|| rate_optimal_grading(alpha))
}

fn discretize(
    spec: &ProblemSpec,
    n: usize,
    m: usize,
    grading: f64,
) -> Result<(SpatialGrid, GradedTimeMesh)> {
    Ok((
        build_spatial_grid(spec.length, n)?,
        build_graded_mesh(spec.final_time, m, grading)?,
    ))
}

fn optional_error<T>(r: Result<T>) -> Result<Option<T>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::MissingExact(..)) => Ok(None),
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone)]
pub struct DirectRun {
    pub grid: SpatialGrid,
    pub mesh: GradedTimeMesh,
    pub field: SolutionField,
    pub stability: BoundReport,
    pub apriori: BoundReport,
    pub error_u: Option<ErrorReport>,
}

impl DirectRun {
    pub fn checks_pass(&self) -> bool {
        checks_pass(&self.stability, &self.apriori)
    }
}

/// Both bounds are only claimed for `p >= 0`; a run with a negative coefficient
/// is judged on the stability bound alone.
fn checks_pass(stability: &BoundReport, apriori: &BoundReport) -> bool {
    if stability.coefficient_nonnegative {
        stability.holds() && apriori.holds()
    } else {
        true
    }
}

/// Forward solve with the problem's known coefficient.
pub fn run_direct(spec: &ProblemSpec, n: usize, m: usize, grading: f64) -> Result<DirectRun> {
    let (grid, mesh) = discretize(spec, n, m, grading)?;
    let field = march_direct_exact(spec, &grid, &mesh)?;
    let stability = check_stability_bound(&field, spec, &grid, &mesh);
    let apriori = check_apriori_l2(&field, spec, &grid, &mesh)?;
    let error_u = optional_error(error_u(&field, spec, &grid, &mesh))?;
    Ok(DirectRun {
        grid,
        mesh,
        field,
        stability,
        apriori,
        error_u,
    })
}

#[derive(Debug, Clone)]
pub struct IdentifyRun {
    pub grid: SpatialGrid,
    pub mesh: GradedTimeMesh,
    pub observations: ObservationSeries,
    pub identification: Identification,
    pub stability: BoundReport,
    pub apriori: BoundReport,
    pub error_u: Option<ErrorReport>,
    pub error_p: Option<ErrorReport>,
}

impl IdentifyRun {
    pub fn field(&self) -> &SolutionField {
        &self.identification.field
    }

    pub fn checks_pass(&self) -> bool {
        checks_pass(&self.stability, &self.apriori)
    }
}

/// Identification from (optionally perturbed) observation data.
pub fn run_identify(
    spec: &ProblemSpec,
    n: usize,
    m: usize,
    grading: f64,
    noise_level: f64,
    seed: u64,
    options: &IdentifyOptions,
) -> Result<IdentifyRun> {
    let (grid, mesh) = discretize(spec, n, m, grading)?;
    let observations =
        perturb_observations(&ObservationSeries::sample(spec, &mesh), noise_level, seed)?;
    let identification = identify(spec, &grid, &mesh, &observations, options)?;
    let field = &identification.field;
    let stability = check_stability_bound(field, spec, &grid, &mesh);
    let apriori = check_apriori_l2(field, spec, &grid, &mesh)?;
    let error_u = optional_error(error_u(field, spec, &grid, &mesh))?;
    let error_p = optional_error(error_p(field, spec, &mesh))?;
    Ok(IdentifyRun {
        grid,
        mesh,
        observations,
        identification,
        stability,
        apriori,
        error_u,
        error_p,
    })
}

/// Maps `f` over `items` on `threads` workers; results keep the input order.
pub fn map_ordered<T, R, F>(items: &[T], threads: usize, f: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    if threads <= 1 {
        return Ok(items.iter().map(f).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidInput(format!("cannot start {threads} worker threads: {e}")))?;
    Ok(pool.install(|| items.par_iter().map(f).collect()))
}

fn status_of<T>(r: &Result<T>) -> String {
    match r {
        Ok(_) => "ok".into(),
        Err(e) => format!("failed: {e}"),
    }
}

fn check_increasing(values: &[usize], what: &str) -> Result<()> {
    if values.is_empty() {
        return invalid(format!("{what} list is empty"));
    }
    if values.windows(2).any(|w| w[1] <= w[0]) {
        return invalid(format!(
            "{what} list must be strictly increasing, got {values:?}"
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvRow {
    pub alpha: f64,
    pub r: f64,
    pub n: usize,
    pub m: usize,
    pub max_err_u: f64,
    pub l2_err_u: f64,
    /// Order against the previous row; `None` on the first row or after a failure.
    pub order_max: Option<f64>,
    pub order_l2: Option<f64>,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvTable {
    pub rows: Vec<ConvRow>,
}

impl ConvTable {
    pub fn all_ok(&self) -> bool {
        self.rows.iter().all(|r| r.status == "ok")
    }

    /// Order columns are present only when there is a pair to compare.
    pub fn has_orders(&self) -> bool {
        self.rows.len() > 1
    }

    pub fn orders_max(&self) -> Vec<Option<f64>> {
        self.rows.iter().skip(1).map(|r| r.order_max).collect()
    }
}

fn conv_table(
    alpha: f64,
    grading: f64,
    sizes: &[(usize, usize)],
    runs: Vec<Result<ErrorReport>>,
    ratio: impl Fn(usize) -> f64,
) -> ConvTable {
    let mut rows: Vec<ConvRow> = Vec::with_capacity(sizes.len());
    for (i, (&(n, m), run)) in sizes.iter().zip(runs).enumerate() {
        let status = status_of(&run);
        let (max_err_u, l2_err_u) = run
            .map(|e| (e.max_err, e.l2_err))
            .unwrap_or((f64::NAN, f64::NAN));
        let (order_max, order_l2) = match rows.last() {
            Some(prev) if i > 0 => (
                convergence_order(prev.max_err_u, max_err_u, ratio(i)).ok(),
                convergence_order(prev.l2_err_u, l2_err_u, ratio(i)).ok(),
            ),
            _ => (None, None),
        };
        rows.push(ConvRow {
            alpha,
            r: grading,
            n,
            m,
            max_err_u,
            l2_err_u,
            order_max,
            order_l2,
            status,
        });
    }
    ConvTable { rows }
}

fn identify_error_u(
    spec: &ProblemSpec,
    n: usize,
    m: usize,
    grading: f64,
    options: &IdentifyOptions,
) -> Result<ErrorReport> {
    let run = run_identify(spec, n, m, grading, 0.0, 0, options)?;
    run.error_u
        .ok_or_else(|| Error::MissingExact(spec.name.clone(), "exact_u"))
}

/// Identification runs with `M` fixed and `N` refined.
pub fn run_conv_space(
    problem: &ProblemSelection,
    alpha: f64,
    m_fixed: usize,
    n_list: &[usize],
    grading: Option<f64>,
    options: &IdentifyOptions,
    threads: usize,
) -> Result<ConvTable> {
    check_increasing(n_list, "N")?;
    let spec = problem.build(alpha)?;
    let r = resolve_grading(grading, alpha);
    let sizes: Vec<(usize, usize)> = n_list.iter().map(|&n| (n, m_fixed)).collect();
    let runs = map_ordered(&sizes, threads, |&(n, m)| {
        identify_error_u(&spec, n, m, r, options)
    })?;
    Ok(conv_table(alpha, r, &sizes, runs, |i| {
        n_list[i] as f64 / n_list[i - 1] as f64
    }))
}

/// Identification runs with `N` fixed and `M` refined.
pub fn run_conv_time(
    problem: &ProblemSelection,
    alpha: f64,
    n_fixed: usize,
    m_list: &[usize],
    grading: Option<f64>,
    options: &IdentifyOptions,
    threads: usize,
) -> Result<ConvTable> {
    check_increasing(m_list, "M")?;
    let spec = problem.build(alpha)?;
    let r = resolve_grading(grading, alpha);
    let sizes: Vec<(usize, usize)> = m_list.iter().map(|&m| (n_fixed, m)).collect();
    let runs = map_ordered(&sizes, threads, |&(n, m)| {
        identify_error_u(&spec, n, m, r, options)
    })?;
    Ok(conv_table(alpha, r, &sizes, runs, |i| {
        m_list[i] as f64 / m_list[i - 1] as f64
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseRowKind {
    Run,
    Mean,
    Stddev,
}

impl NoiseRowKind {
    fn as_str(self) -> &'static str {
        match self {
            Self::Run => "run",
            Self::Mean => "mean",
            Self::Stddev => "stddev",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseRow {
    pub kind: NoiseRowKind,
    pub delta: f64,
    /// `None` on summary rows.
    pub seed: Option<u64>,
    pub max_err_p: f64,
    pub l2_err_p: f64,
    pub max_err_u: f64,
    pub l2_err_u: f64,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseTable {
    pub rows: Vec<NoiseRow>,
}

impl NoiseTable {
    pub fn all_ok(&self) -> bool {
        self.rows
            .iter()
            .filter(|r| r.kind == NoiseRowKind::Run)
            .all(|r| r.status == "ok")
    }

    pub fn summary(&self, kind: NoiseRowKind) -> Vec<&NoiseRow> {
        self.rows.iter().filter(|r| r.kind == kind).collect()
    }
}

fn mean_and_stddev(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Identification from perturbed data for every `(delta, seed)` pair, followed
/// by per-delta mean and sample standard deviation rows over the successful runs.
#[allow(clippy::too_many_arguments)]
pub fn run_noise_study(
    problem: &ProblemSelection,
    alpha: f64,
    n: usize,
    m: usize,
    grading: Option<f64>,
    deltas: &[f64],
    seeds: &[u64],
    options: &IdentifyOptions,
    threads: usize,
) -> Result<NoiseTable> {
    if deltas.iter().any(|d| !(*d >= 0.0)) {
        return invalid(format!("noise levels must be nonnegative, got {deltas:?}"));
    }
    if seeds.is_empty() {
        return invalid("at least one seed is required");
    }
    let spec = problem.build(alpha)?;
    let r = resolve_grading(grading, alpha);
    let mut sorted_deltas = deltas.to_vec();
    sorted_deltas.sort_by(f64::total_cmp);
    sorted_deltas.dedup();
    let mut sorted_seeds = seeds.to_vec();
    sorted_seeds.sort_unstable();
    sorted_seeds.dedup();
    let pairs: Vec<(f64, u64)> = sorted_deltas
        .iter()
        .flat_map(|&d| sorted_seeds.iter().map(move |&s| (d, s)))
        .collect();
    let runs = map_ordered(
        &pairs,
        threads,
        |&(delta, seed)| -> Result<(ErrorReport, ErrorReport)> {
            let run = run_identify(&spec, n, m, r, delta, seed, options)?;
            match (run.error_p, run.error_u) {
                (Some(p), Some(u)) => Ok((p, u)),
                _ => Err(Error::MissingExact(
                    spec.name.clone(),
                    "exact_p and exact_u",
                )),
            }
        },
    )?;

    let mut rows = Vec::with_capacity(pairs.len() + 2 * sorted_deltas.len());
    for (&(delta, seed), run) in pairs.iter().zip(runs) {
        let status = status_of(&run);
        let (p, u) = match run {
            Ok((p, u)) => ((p.max_err, p.l2_err), (u.max_err, u.l2_err)),
            Err(_) => ((f64::NAN, f64::NAN), (f64::NAN, f64::NAN)),
        };
        rows.push(NoiseRow {
            kind: NoiseRowKind::Run,
            delta,
            seed: Some(seed),
            max_err_p: p.0,
            l2_err_p: p.1,
            max_err_u: u.0,
            l2_err_u: u.1,
            status,
        });
    }
    for &delta in &sorted_deltas {
        let ok: Vec<&NoiseRow> = rows
            .iter()
            .filter(|r| r.kind == NoiseRowKind::Run && r.delta == delta && r.status == "ok")
            .collect();
        let column =
            |f: fn(&NoiseRow) -> f64| mean_and_stddev(&ok.iter().map(|r| f(r)).collect::<Vec<_>>());
        let stats = [
            column(|r| r.max_err_p),
            column(|r| r.l2_err_p),
            column(|r| r.max_err_u),
            column(|r| r.l2_err_u),
        ];
        let status = format!("ok ({} of {} runs)", ok.len(), sorted_seeds.len());
        for (kind, pick) in [(NoiseRowKind::Mean, 0usize), (NoiseRowKind::Stddev, 1)] {
            let v = |i: usize| if pick == 0 { stats[i].0 } else { stats[i].1 };
            rows.push(NoiseRow {
                kind,
                delta,
                seed: None,
                max_err_p: v(0),
                l2_err_p: v(1),
                max_err_u: v(2),
                l2_err_u: v(3),
                status: status.clone(),
            });
        }
    }
    Ok(NoiseTable { rows })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepSeries {
    InitialProfile,
    FinalProfile,
    Coefficient,
}

impl SweepSeries {
    fn as_str(self) -> &'static str {
        match self {
            Self::InitialProfile => "u_initial",
            Self::FinalProfile => "u_final",
            Self::Coefficient => "p",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub alpha: f64,
    pub series: SweepSeries,
    /// `x` for the profiles, `t` for the coefficient.
    pub coord: f64,
    pub num: f64,
    pub exact: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    /// `(alpha, status)` per block.
    pub status: Vec<(f64, String)>,
}

impl SweepTable {
    pub fn all_ok(&self) -> bool {
        self.status.iter().all(|(_, s)| s == "ok")
    }
}

fn sweep_block(spec: &ProblemSpec, run: &IdentifyRun) -> Vec<SweepRow> {
    let alpha = spec.alpha;
    let field = run.field();
    let final_t = run.mesh.final_time();
    let exact_u = spec.exact_u().ok();
    let exact_p = spec.exact_p().ok();
    let mut rows = Vec::new();
    for (series, row, t) in [
        (SweepSeries::InitialProfile, field.row(0), 0.0),
        (SweepSeries::FinalProfile, field.final_row(), final_t),
    ] {
        rows.extend(row.iter().zip(run.grid.nodes()).map(|(&u, &x)| SweepRow {
            alpha,
            series,
            coord: x,
            num: u,
            exact: exact_u.map(|f| f(x, t)),
        }));
    }
    rows.extend(
        field
            .p
            .iter()
            .zip(run.mesh.levels())
            .map(|(&p, &t)| SweepRow {
                alpha,
                series: SweepSeries::Coefficient,
                coord: t,
                num: p,
                exact: exact_p.map(|f| f(t)),
            }),
    );
    rows
}

/// One clean identification per alpha, keeping the initial and final profiles
/// and the recovered coefficient. Blocks appear in increasing alpha.
#[allow(clippy::too_many_arguments)]
pub fn run_alpha_sweep(
    problem: &ProblemSelection,
    alphas: &[f64],
    n: usize,
    m: usize,
    grading: Option<f64>,
    options: &IdentifyOptions,
    threads: usize,
) -> Result<SweepTable> {
    if alphas.is_empty() || alphas.iter().any(|a| !(*a > 0.0 && *a < 1.0)) {
        return invalid(format!(
            "alphas must be a nonempty subset of (0, 1), got {alphas:?}"
        ));
    }
    let mut sorted = alphas.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let blocks = map_ordered(&sorted, threads, |&alpha| -> Result<Vec<SweepRow>> {
        let spec = problem.build(alpha)?;
        let run = run_identify(
            &spec,
            n,
            m,
            resolve_grading(grading, alpha),
            0.0,
            0,
            options,
        )?;
        Ok(sweep_block(&spec, &run))
    })?;
    let mut rows = Vec::new();
    let mut status = Vec::new();
    for (&alpha, block) in sorted.iter().zip(blocks) {
        status.push((alpha, status_of(&block)));
        if let Ok(b) = block {
            rows.extend(b);
        }
    }
    Ok(SweepTable { rows, status })
}

/// Shortest decimal string that parses back to the same `f64`.
pub fn format_float(v: f64) -> String {
    format!("{v:?}")
}

fn opt_float(v: Option<f64>) -> String {
    v.map(format_float).unwrap_or_default()
}

/// Table with a fixed header and string records.
pub trait CsvTable {
    fn header(&self) -> Vec<&'static str>;
    fn records(&self) -> Vec<Vec<String>>;
}

impl CsvTable for ConvTable {
    fn header(&self) -> Vec<&'static str> {
        if self.has_orders() {
            vec![
                "alpha",
                "r",
                "N",
                "M",
                "max_err_u",
                "l2_err_u",
                "order_max",
                "order_l2",
                "status",
            ]
        } else {
            vec!["alpha", "r", "N", "M", "max_err_u", "l2_err_u", "status"]
        }
    }

    fn records(&self) -> Vec<Vec<String>> {
        let with_orders = self.has_orders();
        self.rows
            .iter()
            .map(|r| {
                let mut rec = vec![
                    format_float(r.alpha),
                    format_float(r.r),
                    r.n.to_string(),
                    r.m.to_string(),
                    format_float(r.max_err_u),
                    format_float(r.l2_err_u),
                ];
                if with_orders {
                    rec.push(opt_float(r.order_max));
                    rec.push(opt_float(r.order_l2));
                }
                rec.push(r.status.clone());
                rec
            })
            .collect()
    }
}

impl CsvTable for NoiseTable {
    fn header(&self) -> Vec<&'static str> {
        vec![
            "kind",
            "delta",
            "seed",
            "max_err_p",
            "l2_err_p",
            "max_err_u",
            "l2_err_u",
            "status",
        ]
    }

    fn records(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                vec![
                    r.kind.as_str().to_string(),
                    format_float(r.delta),
                    r.seed.map(|s| s.to_string()).unwrap_or_default(),
                    format_float(r.max_err_p),
                    format_float(r.l2_err_p),
                    format_float(r.max_err_u),
                    format_float(r.l2_err_u),
                    r.status.clone(),
                ]
            })
            .collect()
    }
}

impl CsvTable for SweepTable {
    fn header(&self) -> Vec<&'static str> {
        vec!["alpha", "series", "coord", "num", "exact"]
    }

    fn records(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                vec![
                    format_float(r.alpha),
                    r.series.as_str().to_string(),
                    format_float(r.coord),
                    format_float(r.num),
                    opt_float(r.exact),
                ]
            })
            .collect()
    }
}

/// Every `(x_i, t_k)` node of a computed field.
pub struct SolutionTable<'a> {
    pub field: &'a SolutionField,
    pub spec: &'a ProblemSpec,
    pub grid: &'a SpatialGrid,
    pub mesh: &'a GradedTimeMesh,
}

impl CsvTable for SolutionTable<'_> {
    fn header(&self) -> Vec<&'static str> {
        vec!["x", "t", "u_num", "u_exact", "abs_err"]
    }

    fn records(&self) -> Vec<Vec<String>> {
        let exact = self.spec.exact_u().ok();
        let mut out = Vec::with_capacity(self.field.levels() * self.grid.nodes().len());
        for (row, &t) in self.field.u.iter().zip(self.mesh.levels()) {
            for (&u, &x) in row.iter().zip(self.grid.nodes()) {
                let e = exact.map(|f| f(x, t));
                out.push(vec![
                    format_float(x),
                    format_float(t),
                    format_float(u),
                    opt_float(e),
                    opt_float(e.map(|e| (u - e).abs())),
                ]);
            }
        }
        out
    }
}

/// Recovered coefficient at every level.
pub struct CoefficientTable<'a> {
    pub p: &'a [f64],
    pub spec: &'a ProblemSpec,
    pub mesh: &'a GradedTimeMesh,
}

impl CsvTable for CoefficientTable<'_> {
    fn header(&self) -> Vec<&'static str> {
        vec!["t", "p_num", "p_exact", "abs_err"]
    }

    fn records(&self) -> Vec<Vec<String>> {
        let exact = self.spec.exact_p().ok();
        self.p
            .iter()
            .zip(self.mesh.levels())
            .map(|(&p, &t)| {
                let e = exact.map(|f| f(t));
                vec![
                    format_float(t),
                    format_float(p),
                    opt_float(e),
                    opt_float(e.map(|e| (p - e).abs())),
                ]
            })
            .collect()
    }
}

/// Per-level stability and a priori checks; slack is `rhs - lhs`.
pub struct ChecksTable<'a> {
    pub stability: &'a BoundReport,
    pub apriori: &'a BoundReport,
}

impl CsvTable for ChecksTable<'_> {
    fn header(&self) -> Vec<&'static str> {
        vec![
            "level",
            "stability_ok",
            "apriori_ok",
            "stability_slack",
            "apriori_slack",
        ]
    }

    fn records(&self) -> Vec<Vec<String>> {
        self.stability
            .levels
            .iter()
            .zip(&self.apriori.levels)
            .map(|(s, a)| {
                vec![
                    s.level.to_string(),
                    s.holds.to_string(),
                    a.holds.to_string(),
                    format_float(s.slack()),
                    format_float(a.slack()),
                ]
            })
            .collect()
    }
}

/// Writes `# <provenance>`, the header row and the records.
pub fn write_csv_to<W: Write>(mut out: W, provenance: &str, table: &impl CsvTable) -> Result<()> {
    writeln!(out, "# {}", provenance.replace(['\n', '\r'], " "))?;
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(table.header())?;
    for record in table.records() {
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn write_csv(path: &Path, provenance: &str, table: &impl CsvTable) -> Result<()> {
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_csv_to(file, provenance, table)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn render(table: &impl CsvTable) -> String {
        let mut buf = Vec::new();
        write_csv_to(&mut buf, "test", table).unwrap();
        String::from_utf8(buf).unwrap()
    }

    fn manufactured() -> ProblemSelection {
        ProblemSelection::new("manufactured")
    }

    #[test]
    fn floats_round_trip() {
        for v in [0.1, 1.0 / 3.0, 1e-300, 6.02e23, -2.5, std::f64::consts::PI] {
            assert_eq!(format_float(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn single_row_convergence_table_has_no_order_columns() {
        let t = run_conv_time(
            &manufactured(),
            0.5,
            16,
            &[16],
            None,
            &IdentifyOptions::default(),
            1,
        )
        .unwrap();
        assert_eq!(t.rows.len(), 1);
        assert!(!t.has_orders());
        let csv = render(&t);
        assert!(csv.lines().nth(1).unwrap() == "alpha,r,N,M,max_err_u,l2_err_u,status");
    }

    #[test]
    fn space_refinement_orders() {
        let t = run_conv_space(
            &manufactured(),
            0.5,
            200,
            &[8, 16, 32],
            None,
            &IdentifyOptions::default(),
            1,
        )
        .unwrap();
        assert!(t.all_ok());
        assert_eq!(t.rows[0].order_max, None);
        for o in t.orders_max() {
            assert!(o.unwrap() > 1.5);
        }
        assert_eq!(t.rows[1].r, 3.0);
    }

    #[test]
    fn refinement_lists_must_increase() {
        let opts = IdentifyOptions::default();
        assert!(run_conv_space(&manufactured(), 0.5, 8, &[16, 8], None, &opts, 1).is_err());
        assert!(run_conv_time(&manufactured(), 0.5, 8, &[], None, &opts, 1).is_err());
    }

    #[test]
    fn failures_are_marked_not_fatal() {
        let t = run_conv_time(
            &ProblemSelection::new("zero"),
            0.5,
            8,
            &[4, 8],
            None,
            &IdentifyOptions::default(),
            1,
        )
        .unwrap();
        assert!(!t.all_ok());
        assert!(t.rows.iter().all(|r| r.status.starts_with("failed")));
        assert!(t.rows.iter().all(|r| r.order_max.is_none()));
    }

    #[test]
    fn parallel_and_sequential_tables_match() {
        let opts = IdentifyOptions::default();
        let a = run_conv_time(&manufactured(), 0.75, 16, &[8, 16, 32], None, &opts, 1).unwrap();
        let b = run_conv_time(&manufactured(), 0.75, 16, &[8, 16, 32], None, &opts, 3).unwrap();
        assert_eq!(render(&a), render(&b));
    }

    #[test]
    fn clean_noise_row_matches_identify() {
        let opts = IdentifyOptions::default();
        let t = run_noise_study(
            &manufactured(),
            0.5,
            16,
            16,
            None,
            &[0.0, 0.05],
            &[2, 1],
            &opts,
            2,
        )
        .unwrap();
        let spec = manufactured().build(0.5).unwrap();
        let clean = run_identify(&spec, 16, 16, 3.0, 0.0, 0, &opts).unwrap();
        let first = &t.rows[0];
        assert_eq!((first.delta, first.seed), (0.0, Some(1)));
        assert_eq!(first.max_err_p, clean.error_p.unwrap().max_err);
        assert_eq!(t.summary(NoiseRowKind::Mean).len(), 2);
        let zero_sd = t.summary(NoiseRowKind::Stddev)[0];
        assert_eq!(zero_sd.max_err_p, 0.0);
        assert!(t.all_ok());
        assert!(render(&t)
            .lines()
            .nth(1)
            .unwrap()
            .starts_with("kind,delta,seed"));
    }

    #[test]
    fn sweep_blocks() {
        let t = run_alpha_sweep(
            &manufactured(),
            &[0.9, 0.1, 0.5],
            8,
            8,
            None,
            &IdentifyOptions::default(),
            1,
        )
        .unwrap();
        assert!(t.all_ok());
        let alphas: Vec<f64> = t.status.iter().map(|s| s.0).collect();
        assert_eq!(alphas, vec![0.1, 0.5, 0.9]);
        let spec = manufactured().build(0.5).unwrap();
        for row in t
            .rows
            .iter()
            .filter(|r| r.alpha == 0.5 && r.series == SweepSeries::InitialProfile)
        {
            let phi = if row.coord == 0.0 || row.coord == 1.0 {
                0.0
            } else {
                (spec.initial)(row.coord)
            };
            assert_eq!(row.num, phi);
        }
        let finals: Vec<&SweepRow> = t
            .rows
            .iter()
            .filter(|r| r.series == SweepSeries::FinalProfile)
            .collect();
        assert_eq!(finals.len(), 27);
        for r in finals.iter().filter(|r| r.coord == 0.0 || r.coord == 1.0) {
            assert_eq!(r.num, 0.0);
        }
    }

    #[test]
    fn direct_run_and_tables() {
        let spec = manufactured().build(0.5).unwrap();
        let run = run_direct(&spec, 8, 4, 3.0).unwrap();
        assert!(run.checks_pass());
        let sol = render(&SolutionTable {
            field: &run.field,
            spec: &spec,
            grid: &run.grid,
            mesh: &run.mesh,
        });
        assert_eq!(sol.lines().count(), 2 + 9 * 5);
        let checks = render(&ChecksTable {
            stability: &run.stability,
            apriori: &run.apriori,
        });
        assert_eq!(checks.lines().count(), 2 + 4);
        assert!(checks.starts_with(
            "# test\nlevel,stability_ok,apriori_ok,stability_slack,apriori_slack\n1,true,true,"
        ));
    }
}
