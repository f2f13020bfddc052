use std::path::{Path, PathBuf};
use std::process::ExitCode;

use recoslip::autodiff::checkpoint;
use recoslip::baselines::BaselineConfig;
use recoslip::eval::{
    auroc, make_splits, read_scores, read_splits, run_study, target_risk, thresholded_target_risk, train_method,
    write_report, write_scores, write_splits, Method, Split, StudyConfig, StudyKind,
};
use recoslip::graph::io::{read_graph_with_novel, write_graph};
use recoslip::reco_slip::{write_candidate_table, RecoSlipConfig};
use recoslip::synth::{scar_violation_report, DatasetSpec};
use recoslip::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::manifest::{self, Invocation};

/// Configuration file of `train`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub seed: u64,
    pub reco_slip: RecoSlipConfig,
    pub baseline: BaselineConfig,
}

fn read_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    toml::from_str(&text).map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))
}

pub fn resolve_gen(spec: Option<&Path>, preset: Option<&str>, seed: u64, out: PathBuf) -> Result<Invocation> {
    let spec = match (spec, preset) {
        (Some(path), _) => read_toml::<DatasetSpec>(path)?,
        (None, Some(p)) => {
            let ratios = match p.to_ascii_lowercase().as_str() {
                "ns" => [0.5, 0.5, 0.5],
                "ms" => [0.3, 0.7, 0.5],
                "s" => [0.1, 0.9, 0.5],
                other => return Err(Error::InvalidArgument(format!("unknown preset `{other}` (ns, ms, s)"))),
            };
            DatasetSpec::benchmark(ratios)
        }
        (None, None) => return Err(Error::InvalidArgument("either --spec or --preset is required".into())),
    };
    spec.validate()?;
    Ok(Invocation::Gen { spec, seed, out })
}

pub fn resolve_train(
    method: Method,
    data: PathBuf,
    config: Option<&Path>,
    seed: Option<u64>,
    out: PathBuf,
) -> Result<Invocation> {
    let mut config: TrainConfig = config.map(read_toml).transpose()?.unwrap_or_default();
    if let Some(s) = seed {
        config.seed = s;
    }
    config.reco_slip.validate()?;
    config.baseline.validate()?;
    Ok(Invocation::Train {
        method,
        data,
        config,
        out,
    })
}

pub fn resolve_study(
    kind: StudyKind,
    config: Option<&Path>,
    jobs: Option<usize>,
    seeds: Option<Vec<u64>>,
    out: PathBuf,
) -> Result<Invocation> {
    let mut study: StudyConfig = config.map(read_toml).transpose()?.unwrap_or_default();
    // Dataset paths in the file are relative to the file.
    if let Some(base) = config.and_then(Path::parent) {
        for d in &mut study.datasets {
            if let Some(p) = d.path.as_mut().filter(|p| p.is_relative()) {
                *p = base.join(&*p);
            }
        }
    }
    if let Some(j) = jobs {
        study.jobs = j;
    }
    if let Some(s) = seeds {
        study.seeds = s;
    }
    let study = study.resolved(kind);
    study.validate()?;
    Ok(Invocation::Study {
        study: kind,
        config: study,
        out,
    })
}

/// Records the manifest, then runs the command.
pub fn execute(invocation: Invocation) -> Result<ExitCode> {
    manifest::write(&invocation)?;
    match invocation {
        Invocation::Gen { spec, seed, out } => gen(&spec, seed, &out),
        Invocation::Train {
            method,
            data,
            config,
            out,
        } => train(method, &data, &config, &out),
        Invocation::Eval {
            scores,
            data,
            splits,
            seed,
            out,
        } => eval(&scores, &data, splits.as_deref(), seed, out.as_deref()),
        Invocation::Study { study, config, out } => study_cmd(study, config, &out),
    }
}

fn gen(spec: &DatasetSpec, seed: u64, out: &Path) -> Result<ExitCode> {
    let graph = spec.realize(seed)?;
    write_graph(&graph, out)?;
    let report = scar_violation_report(&graph)?;
    std::fs::write(out.join("scar.json"), serde_json::to_string_pretty(&report)? + "\n")?;
    println!(
        "{} nodes, {} edges written to {}",
        graph.num_nodes(),
        graph.num_edges(),
        out.display()
    );
    println!("category,nodes,source,p_source");
    for r in &report.rows {
        println!("{},{},{},{:.4}", r.category, r.nodes, r.source, r.p_source);
    }
    println!("max_gap {:.4}", report.max_gap);
    Ok(ExitCode::SUCCESS)
}

fn train(method: Method, data: &Path, config: &TrainConfig, out: &Path) -> Result<ExitCode> {
    let graph = read_graph_with_novel::<f64>(data)?;
    let splits = make_splits(&graph, config.seed)?;
    let run = train_method(method, &graph, &splits, &config.reco_slip, &config.baseline, config.seed)?;
    write_scores(&out.join("scores.csv"), &run.scores)?;
    write_splits(&out.join("splits.csv"), &splits)?;
    if let Some(model) = &run.model {
        checkpoint::save(model, &out.join("checkpoint"))?;
    }
    if let Some((rows, unmet)) = &run.candidates {
        write_candidate_table(rows, *unmet, out)?;
    }
    println!("{method}: {} scores written to {}", run.scores.len(), out.display());
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct EvalOutput {
    test_nodes: usize,
    novel_test_nodes: usize,
    auroc: f64,
    target_risk: f64,
    target_risk_at_half: f64,
}

fn eval(scores: &Path, data: &Path, splits: Option<&Path>, seed: Option<u64>, out: Option<&Path>) -> Result<ExitCode> {
    let graph = read_graph_with_novel::<f64>(data)?;
    let novel = graph
        .novel_mask()
        .ok_or_else(|| Error::InvalidArgument(format!("{} has no novel.csv to evaluate against", data.display())))?;
    let splits = match (splits, seed) {
        (Some(path), _) => read_splits(path, graph.domains()?)?,
        (None, Some(seed)) => make_splits(&graph, seed)?,
        (None, None) => return Err(Error::InvalidArgument("either --splits or --seed is required".into())),
    };
    let scores = read_scores(scores, graph.num_nodes())?;
    let test = splits.nodes(Split::TgtTest);
    let result = EvalOutput {
        test_nodes: test.len(),
        novel_test_nodes: test.iter().filter(|&&v| novel[v]).count(),
        auroc: auroc(&scores, novel, &test)?,
        target_risk: target_risk(&scores, novel, &test)?,
        target_risk_at_half: thresholded_target_risk(&scores, novel, &test, 0.5)?,
    };
    let text = serde_json::to_string_pretty(&result)? + "\n";
    print!("{text}");
    if let Some(dir) = out {
        std::fs::write(dir.join("eval.json"), text)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn study_cmd(kind: StudyKind, config: StudyConfig, out: &Path) -> Result<ExitCode> {
    let report = run_study(kind, config)?;
    write_report(&report, out)?;
    println!("{:<24} {:<8} {:>4} {:>10} {:>10}", "method", "dataset", "n", "auroc", "stderr");
    for r in &report.summary {
        let f = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"));
        println!(
            "{:<24} {:<8} {:>4} {:>10} {:>10}",
            r.method.name(),
            r.dataset,
            r.n,
            f(r.mean_auroc),
            f(r.stderr_auroc)
        );
    }
    let failed: Vec<_> = report.cells.iter().filter(|c| c.error.is_some()).collect();
    for c in &failed {
        eprintln!(
            "failed cell: dataset={} seed={} method={}: {}",
            c.dataset,
            c.seed,
            c.method,
            c.error.as_deref().unwrap_or_default()
        );
    }
    Ok(if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}
