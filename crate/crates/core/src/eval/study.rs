//! Study drivers: every configured method on every dataset and seed,
//! aggregated into a [`MetricsReport`].
//!
//! Cells are independent and run on a bounded rayon pool. Every random
//! stream is derived from the cell's seed, so results do not depend on the
//! number of workers or on scheduling order.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{auroc, target_risk};
use super::splits::{make_splits, LossAudit, Split, SplitAssignment};
use crate::autodiff::{Classifier, GraphInput, ScoreModel};
use crate::baselines::{train_baseline, BaselineConfig, BaselineMethod};
use crate::error::{Error, Result};
use crate::graph::io::read_graph_with_novel;
use crate::graph::AttributedGraph;
use crate::reco_slip::{self, CandidateRow, RecoSlipConfig, SamplingMode};
use crate::synth::{scar_violation_report, DatasetSpec, ScarReport};

/// A detector a study can run: RECO-SLIP, one of its link-prediction
/// ablations, or a baseline.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Method {
    RecoSlip,
    /// No link loss at all (`ξ = 0`).
    RecoSlipNoLink,
    /// Link loss over every target node.
    RecoSlipTargetLink,
    /// Link loss over every node.
    RecoSlipFullLink,
    Baseline(BaselineMethod),
}

impl Method {
    /// Everything the main comparison runs.
    pub const MAIN: [Method; 6] = [
        Method::RecoSlip,
        Method::Baseline(BaselineMethod::DomainDisc),
        Method::Baseline(BaselineMethod::Upu),
        Method::Baseline(BaselineMethod::Nnpu),
        Method::Baseline(BaselineMethod::LpPul),
        Method::Baseline(BaselineMethod::Oracle),
    ];

    /// The four link-prediction variants.
    pub const ABLATION: [Method; 4] = [
        Method::RecoSlipNoLink,
        Method::RecoSlipFullLink,
        Method::RecoSlipTargetLink,
        Method::RecoSlip,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::RecoSlip => "reco-slip",
            Method::RecoSlipNoLink => "reco-slip-no-link",
            Method::RecoSlipTargetLink => "reco-slip-target-link",
            Method::RecoSlipFullLink => "reco-slip-full-link",
            Method::Baseline(b) => b.name(),
        }
    }

    /// RECO-SLIP configuration for this variant, `None` for baselines.
    pub fn reco_config(self, base: &RecoSlipConfig) -> Option<RecoSlipConfig> {
        let mode = match self {
            Method::RecoSlip => base.sampling_mode,
            Method::RecoSlipNoLink => SamplingMode::Off,
            Method::RecoSlipTargetLink => SamplingMode::TargetSubgraph,
            Method::RecoSlipFullLink => SamplingMode::FullComplement,
            Method::Baseline(_) => return None,
        };
        let mut config = base.clone();
        config.sampling_mode = mode;
        if mode == SamplingMode::Off {
            config.xi = 0.0;
        }
        Some(config)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let reco = [
            Method::RecoSlip,
            Method::RecoSlipNoLink,
            Method::RecoSlipTargetLink,
            Method::RecoSlipFullLink,
        ];
        reco.into_iter()
            .chain(BaselineMethod::ALL.map(Method::Baseline))
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method `{s}`")))
    }
}

impl TryFrom<String> for Method {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Method> for String {
    fn from(m: Method) -> String {
        m.name().to_string()
    }
}

/// Result of training one method on one graph.
#[derive(Clone, Debug)]
pub struct MethodRun {
    pub scores: Vec<f64>,
    pub model: Option<Classifier<f64>>,
    /// RECO-SLIP candidate table and its `constraint_unmet` flag.
    pub candidates: Option<(Vec<CandidateRow>, bool)>,
    pub audit: LossAudit,
}

/// Trains `method` with the seeds of both configs replaced by `seed`.
pub fn train_method(
    method: Method,
    graph: &AttributedGraph<f64>,
    splits: &SplitAssignment,
    reco: &RecoSlipConfig,
    baseline: &BaselineConfig,
    seed: u64,
) -> Result<MethodRun> {
    if let Some(mut config) = method.reco_config(reco) {
        config.seed = seed;
        let out = reco_slip::run(graph, splits, &config)?;
        let table = out.table(config.beta_max);
        let model = out.selected_model().model.clone();
        let scores = model.scores(&GraphInput::new(graph))?;
        return Ok(MethodRun {
            scores,
            model: Some(model),
            candidates: Some((table, out.constraint_unmet)),
            audit: out.audit,
        });
    }
    let Method::Baseline(b) = method else { unreachable!("reco variants handled above") };
    let config = BaselineConfig {
        seed,
        ..baseline.clone()
    };
    let out = train_baseline(b, graph, splits, &config)?;
    Ok(MethodRun {
        scores: out.scores,
        model: out.model,
        candidates: None,
        audit: out.audit,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StudyKind {
    Main,
    Ablation,
    Shift,
}

impl StudyKind {
    pub fn name(self) -> &'static str {
        match self {
            StudyKind::Main => "main",
            StudyKind::Ablation => "ablation",
            StudyKind::Shift => "shift",
        }
    }

    pub fn default_methods(self) -> Vec<Method> {
        match self {
            StudyKind::Ablation => Method::ABLATION.to_vec(),
            StudyKind::Main | StudyKind::Shift => Method::MAIN.to_vec(),
        }
    }

    /// Benchmark datasets: the shifted one for main and ablation, the
    /// no/minor/full shift trio for the sweep.
    pub fn default_datasets(self) -> Vec<DatasetConfig> {
        let synth = |name: &str, r: [f64; 3]| DatasetConfig {
            name: name.to_string(),
            group: None,
            synthetic: Some(DatasetSpec::benchmark(r)),
            path: None,
        };
        match self {
            StudyKind::Main | StudyKind::Ablation => vec![synth("S", [0.1, 0.9, 0.5])],
            StudyKind::Shift => vec![
                synth("NS", [0.5, 0.5, 0.5]),
                synth("MS", [0.3, 0.7, 0.5]),
                synth("S", [0.1, 0.9, 0.5]),
            ],
        }
    }
}

impl FromStr for StudyKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        [StudyKind::Main, StudyKind::Ablation, StudyKind::Shift]
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown study `{s}`")))
    }
}

/// One dataset of a study: either a generator spec realized per seed or a
/// directory in the CSV graph format.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub name: String,
    /// Column the dataset contributes to in plot data and rank tables;
    /// defaults to `name`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<DatasetSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

impl DatasetConfig {
    pub fn group(&self) -> &str {
        self.group.as_deref().unwrap_or(&self.name)
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.synthetic, &self.path) {
            (Some(spec), None) => spec.validate(),
            (None, Some(_)) => Ok(()),
            _ => Err(Error::InvalidArgument(format!(
                "dataset `{}` needs exactly one of `synthetic` or `path`",
                self.name
            ))),
        }
    }

    /// Graph for `seed`. Loaded graphs ignore the seed.
    pub fn load(&self, seed: u64) -> Result<AttributedGraph<f64>> {
        match (&self.synthetic, &self.path) {
            (Some(spec), _) => spec.realize(seed),
            (None, Some(path)) => read_graph_with_novel(path),
            (None, None) => Err(Error::InvalidArgument(format!("dataset `{}` has no source", self.name))),
        }
    }
}

/// Study configuration, read from TOML by the command line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    pub seeds: Vec<u64>,
    /// Worker threads; 1 keeps execution fully sequential.
    pub jobs: usize,
    /// Empty means the study's default method set.
    pub methods: Vec<Method>,
    /// Empty means the study's default datasets.
    pub datasets: Vec<DatasetConfig>,
    pub reco_slip: RecoSlipConfig,
    pub baseline: BaselineConfig,
    /// Also write an SVG chart next to the plot data.
    pub svg: bool,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            seeds: (1..=10).map(|k| 10 * k).collect(),
            jobs: 1,
            methods: Vec::new(),
            datasets: Vec::new(),
            reco_slip: RecoSlipConfig::default(),
            baseline: BaselineConfig::default(),
            svg: true,
        }
    }
}

impl StudyConfig {
    /// Fills empty method and dataset lists with the study defaults.
    pub fn resolved(mut self, kind: StudyKind) -> Self {
        if self.methods.is_empty() {
            self.methods = kind.default_methods();
        }
        if self.datasets.is_empty() {
            self.datasets = kind.default_datasets();
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::InvalidArgument("no seeds configured".into()));
        }
        if self.jobs == 0 {
            return Err(Error::InvalidArgument("jobs must be at least 1".into()));
        }
        let mut names: Vec<&str> = self.datasets.iter().map(|d| d.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument("dataset names must be unique".into()));
        }
        let mut methods = self.methods.clone();
        methods.sort_unstable();
        if methods.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument("methods must be unique".into()));
        }
        self.datasets.iter().try_for_each(DatasetConfig::validate)?;
        self.reco_slip.validate()?;
        self.baseline.validate()
    }
}

/// Outcome of one (dataset, seed, method) cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub dataset: String,
    pub group: String,
    pub seed: u64,
    pub method: Method,
    pub auroc: Option<f64>,
    pub target_risk: Option<f64>,
    /// The trainer never put a test node into a loss.
    pub leak_free: Option<bool>,
    pub error: Option<String>,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: Method,
    pub dataset: String,
    pub group: String,
    /// Successful seeds.
    pub n: usize,
    pub failed: usize,
    pub mean_auroc: Option<f64>,
    /// Sample standard deviation over seeds divided by `sqrt(n)`.
    pub stderr_auroc: Option<f64>,
    pub mean_target_risk: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankRow {
    pub method: Method,
    pub group: String,
    /// Rank by mean AUROC (1 is best, ties share their average) averaged
    /// over the group's datasets.
    pub mean_rank: f64,
    pub datasets: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScarEntry {
    pub dataset: String,
    pub seed: u64,
    pub report: ScarReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateEntry {
    pub dataset: String,
    pub seed: u64,
    pub method: Method,
    pub constraint_unmet: bool,
    pub rows: Vec<CandidateRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub study: StudyKind,
    pub config: StudyConfig,
    pub cells: Vec<CellResult>,
    pub summary: Vec<SummaryRow>,
    pub ranks: Vec<RankRow>,
    pub scar: Vec<ScarEntry>,
    pub candidates: Vec<CandidateEntry>,
}

impl MetricsReport {
    pub fn summary_for(&self, method: Method, dataset: &str) -> Option<&SummaryRow> {
        self.summary.iter().find(|r| r.method == method && r.dataset == dataset)
    }

    /// Mean test AUROC per method per group, in method and group order.
    pub fn plot_table(&self) -> (Vec<String>, Vec<(Method, Vec<Option<f64>>)>) {
        let groups = unique(self.config.datasets.iter().map(|d| d.group().to_string()));
        let rows = self
            .config
            .methods
            .iter()
            .map(|&m| {
                let vals = groups
                    .iter()
                    .map(|g| {
                        let v: Vec<f64> = self
                            .summary
                            .iter()
                            .filter(|r| r.method == m && &r.group == g)
                            .filter_map(|r| r.mean_auroc)
                            .collect();
                        (!v.is_empty()).then(|| mean(&v))
                    })
                    .collect();
                (m, vals)
            })
            .collect();
        (groups, rows)
    }
}

fn unique(items: impl Iterator<Item = String>) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for s in items {
        if !out.contains(&s) {
            out.push(s);
        }
    }
    out
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Mean and standard error of the mean (zero for a single value).
pub fn mean_stderr(v: &[f64]) -> (f64, f64) {
    let m = mean(v);
    if v.len() < 2 {
        return (m, 0.0);
    }
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64;
    (m, (var / v.len() as f64).sqrt())
}

/// Ranks `values` in descending order, 1 for the largest, ties sharing the
/// average of the ranks they span.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        let r = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = r;
        }
        i = j;
    }
    ranks
}

/// Mean rank per method within each group. Each dataset ranks the methods
/// that have a mean AUROC on it.
pub fn rank_table(summary: &[SummaryRow]) -> Vec<RankRow> {
    let mut per_dataset: BTreeMap<(&str, &str), Vec<(Method, f64)>> = BTreeMap::new();
    for r in summary {
        if let Some(a) = r.mean_auroc {
            per_dataset.entry((&r.group, &r.dataset)).or_default().push((r.method, a));
        }
    }
    let mut acc: BTreeMap<(String, Method), (f64, usize)> = BTreeMap::new();
    for ((group, _), rows) in per_dataset {
        let vals: Vec<f64> = rows.iter().map(|r| r.1).collect();
        for ((m, _), rank) in rows.iter().zip(average_ranks(&vals)) {
            let e = acc.entry((group.to_string(), *m)).or_default();
            e.0 += rank;
            e.1 += 1;
        }
    }
    acc.into_iter()
        .map(|((group, method), (sum, n))| RankRow {
            method,
            group,
            mean_rank: sum / n as f64,
            datasets: n,
        })
        .collect()
}

struct Prepared {
    graph: AttributedGraph<f64>,
    splits: SplitAssignment,
}

struct CellOutput {
    result: CellResult,
    candidates: Option<CandidateEntry>,
}

fn run_cell(
    config: &StudyConfig,
    dataset: &DatasetConfig,
    seed: u64,
    method: Method,
    prepared: &std::result::Result<Prepared, String>,
) -> CellOutput {
    let start = Instant::now();
    let mut result = CellResult {
        dataset: dataset.name.clone(),
        group: dataset.group().to_string(),
        seed,
        method,
        auroc: None,
        target_risk: None,
        leak_free: None,
        error: None,
        seconds: 0.0,
    };
    let mut candidates = None;
    let outcome = prepared.as_ref().map_err(Clone::clone).and_then(|p| {
        let run = train_method(method, &p.graph, &p.splits, &config.reco_slip, &config.baseline, seed)
            .map_err(|e| e.to_string())?;
        let novel = p
            .graph
            .novel_mask()
            .ok_or_else(|| "dataset has no novel labels to evaluate against".to_string())?;
        let test = p.splits.nodes(Split::TgtTest);
        let a = auroc(&run.scores, novel, &test).map_err(|e| e.to_string())?;
        let r = target_risk(&run.scores, novel, &test).map_err(|e| e.to_string())?;
        let leak_free = !run.audit.touches(&p.splits, Split::TgtTest);
        Ok((run, a, r, leak_free))
    });
    match outcome {
        Ok((run, a, r, leak_free)) => {
            result.auroc = Some(a);
            result.target_risk = Some(r);
            result.leak_free = Some(leak_free);
            if !leak_free {
                result.error = Some("test nodes entered a training loss".into());
            }
            candidates = run.candidates.map(|(rows, unmet)| CandidateEntry {
                dataset: dataset.name.clone(),
                seed,
                method,
                constraint_unmet: unmet,
                rows,
            });
        }
        Err(e) => {
            log::warn!("cell {}/{seed}/{method} failed: {e}", dataset.name);
            result.error = Some(e);
        }
    }
    result.seconds = start.elapsed().as_secs_f64();
    CellOutput { result, candidates }
}

/// Runs every (dataset, seed, method) cell on a pool of `config.jobs`
/// threads. Cell failures are recorded in the report and do not stop the
/// study; only an invalid configuration is an error.
pub fn run_study(kind: StudyKind, config: StudyConfig) -> Result<MetricsReport> {
    let config = config.resolved(kind);
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;

    let keys: Vec<(usize, u64)> = (0..config.datasets.len())
        .flat_map(|d| config.seeds.iter().map(move |&s| (d, s)))
        .collect();
    let prepared: Vec<std::result::Result<Prepared, String>> = pool.install(|| {
        keys.par_iter()
            .map(|&(d, seed)| {
                let graph = config.datasets[d].load(seed).map_err(|e| e.to_string())?;
                let splits = make_splits(&graph, seed).map_err(|e| e.to_string())?;
                Ok(Prepared { graph, splits })
            })
            .collect()
    });

    let cells: Vec<(usize, Method)> = (0..keys.len())
        .flat_map(|k| config.methods.iter().map(move |&m| (k, m)))
        .collect();
    let outputs: Vec<CellOutput> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(k, method)| {
                let (d, seed) = keys[k];
                run_cell(&config, &config.datasets[d], seed, method, &prepared[k])
            })
            .collect()
    });

    let scar = keys
        .iter()
        .zip(&prepared)
        .filter_map(|(&(d, seed), p)| {
            let p = p.as_ref().ok()?;
            p.graph.categories().iter().any(Option::is_some).then_some(())?;
            let report = scar_violation_report(&p.graph).ok()?;
            Some(ScarEntry {
                dataset: config.datasets[d].name.clone(),
                seed,
                report,
            })
        })
        .collect();

    let mut results = Vec::with_capacity(outputs.len());
    let mut candidates = Vec::new();
    for o in outputs {
        results.push(o.result);
        candidates.extend(o.candidates);
    }
    let summary = summarize(&config, &results);
    let ranks = rank_table(&summary);
    Ok(MetricsReport {
        study: kind,
        config,
        cells: results,
        summary,
        ranks,
        scar,
        candidates,
    })
}

fn summarize(config: &StudyConfig, cells: &[CellResult]) -> Vec<SummaryRow> {
    let mut rows = Vec::new();
    for d in &config.datasets {
        for &m in &config.methods {
            let mine: Vec<&CellResult> = cells.iter().filter(|c| c.method == m && c.dataset == d.name).collect();
            let ok: Vec<&CellResult> = mine.iter().copied().filter(|c| c.error.is_none()).collect();
            let a: Vec<f64> = ok.iter().filter_map(|c| c.auroc).collect();
            let r: Vec<f64> = ok.iter().filter_map(|c| c.target_risk).collect();
            let (mean_auroc, stderr_auroc) = if a.is_empty() {
                (None, None)
            } else {
                let (m, s) = mean_stderr(&a);
                (Some(m), Some(s))
            };
            rows.push(SummaryRow {
                method: m,
                dataset: d.name.clone(),
                group: d.group().to_string(),
                n: a.len(),
                failed: mine.len() - ok.len(),
                mean_auroc,
                stderr_auroc,
                mean_target_risk: (!r.is_empty()).then(|| mean(&r)),
            });
        }
    }
    rows
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:.6}"))
}

/// Writes `report.json`, `summary.csv`, `plotdata_<study>.csv` and, when
/// enabled, `plot_<study>.svg` into `dir`.
pub fn write_report(report: &MetricsReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut f = std::fs::File::create(dir.join("report.json"))?;
    serde_json::to_writer_pretty(&mut f, report)?;
    writeln!(f)?;

    let mut s = String::from("method,dataset,group,n,failed,mean_auroc,stderr_auroc,mean_target_risk\n");
    for r in &report.summary {
        s += &format!(
            "{},{},{},{},{},{},{},{}\n",
            r.method,
            r.dataset,
            r.group,
            r.n,
            r.failed,
            opt(r.mean_auroc),
            opt(r.stderr_auroc),
            opt(r.mean_target_risk)
        );
    }
    std::fs::write(dir.join("summary.csv"), s)?;

    let (groups, rows) = report.plot_table();
    let mut p = format!("method,{}\n", groups.join(","));
    for (m, vals) in &rows {
        let cols: Vec<String> = vals.iter().map(|v| opt(*v)).collect();
        p += &format!("{m},{}\n", cols.join(","));
    }
    let kind = report.study.name();
    std::fs::write(dir.join(format!("plotdata_{kind}.csv")), p)?;

    if report.config.svg {
        let svg = super::plot::line_chart(&format!("{kind} study: mean test AUROC"), &groups, &rows);
        std::fs::write(dir.join(format!("plot_{kind}.svg")), svg)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names_round_trip() {
        for m in Method::MAIN.into_iter().chain(Method::ABLATION) {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("reco".parse::<Method>().is_err());
    }

    #[test]
    fn ablation_variants_configure_the_link_loss() {
        let base = RecoSlipConfig::default();
        let off = Method::RecoSlipNoLink.reco_config(&base).unwrap();
        assert_eq!((off.xi, off.sampling_mode), (0.0, SamplingMode::Off));
        let full = Method::RecoSlipFullLink.reco_config(&base).unwrap();
        assert_eq!((full.xi, full.sampling_mode), (base.xi, SamplingMode::FullComplement));
        assert!(Method::Baseline(BaselineMethod::Oracle).reco_config(&base).is_none());
    }

    #[test]
    fn ranks_average_ties() {
        assert_eq!(average_ranks(&[0.7, 0.9, 0.7, 0.1]), vec![2.5, 1.0, 2.5, 4.0]);
    }

    #[test]
    fn mean_rank_over_two_datasets() {
        // d1: A 0.9, B 0.8; d2: A 0.6, B 0.7 -> both average 1.5.
        let row = |method, dataset: &str, a| SummaryRow {
            method,
            dataset: dataset.into(),
            group: "S".into(),
            n: 1,
            failed: 0,
            mean_auroc: Some(a),
            stderr_auroc: Some(0.0),
            mean_target_risk: None,
        };
        let a = Method::RecoSlip;
        let b = Method::Baseline(BaselineMethod::DomainDisc);
        let ranks = rank_table(&[row(a, "d1", 0.9), row(b, "d1", 0.8), row(a, "d2", 0.6), row(b, "d2", 0.7)]);
        assert_eq!(ranks.len(), 2);
        assert!(ranks.iter().all(|r| r.mean_rank == 1.5 && r.datasets == 2));
    }

    #[test]
    fn stderr_is_sample_std_over_sqrt_n() {
        let (m, s) = mean_stderr(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        let sd = (5.0f64 / 3.0).sqrt();
        assert!((s - sd / 2.0).abs() < 1e-15);
        assert_eq!(mean_stderr(&[0.3]), (0.3, 0.0));
    }

    #[test]
    fn config_parses_from_toml() {
        let text = r#"
            seeds = [1, 2]
            methods = ["reco-slip", "domain-disc"]
            [reco_slip]
            steps = 5
            [[datasets]]
            name = "S"
            [datasets.synthetic.graph]
            p_intra = 0.5
            p_inter = 0.1
            seed = 0
            categories = [{ mean = [1.0], std = 1.0, count = 10 }, { mean = [-1.0], std = 1.0, count = 10, novel = true }]
            [datasets.synthetic.shift]
            source_ratio = [0.5, 0.0]
        "#;
        let c: StudyConfig = toml::from_str(text).unwrap();
        let c = c.resolved(StudyKind::Main);
        c.validate().unwrap();
        assert_eq!(c.methods.len(), 2);
        assert_eq!(c.reco_slip.steps, 5);
        assert!(toml::from_str::<StudyConfig>("sedes = [1]").is_err());
    }

    #[test]
    fn failing_cells_are_recorded() {
        let lp = Method::Baseline(BaselineMethod::LpPul);
        let mut config = StudyConfig {
            seeds: vec![1],
            methods: vec![lp],
            svg: false,
            ..StudyConfig::default()
        };
        config.datasets = StudyKind::Main.default_datasets();
        config.datasets.push(DatasetConfig {
            name: "missing".into(),
            group: None,
            synthetic: None,
            path: Some(PathBuf::from("/nonexistent/graph")),
        });
        let report = run_study(StudyKind::Main, config).unwrap();
        assert_eq!(report.cells.len(), 2);
        let bad = report.cells.iter().find(|c| c.dataset == "missing").unwrap();
        assert!(bad.error.is_some() && bad.auroc.is_none());
        assert_eq!(report.summary_for(lp, "missing").map(|r| (r.n, r.failed)), Some((0, 1)));
        let good = report.summary_for(lp, "S").unwrap();
        assert_eq!((good.n, good.failed), (1, 0));
        assert_eq!(report.scar.len(), 1);
    }
}
