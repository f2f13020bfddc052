//! Synthetic attributed graphs with a controllable subpopulation shift.
//!
//! Nodes of each category get isotropic Gaussian features around the
//! category mean; edges follow a planted-partition model with a higher
//! probability inside a category than across. A [`ShiftSpec`] then decides,
//! per category, which share of nodes is observed in the source domain.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{AttributedGraph, Domain};
use crate::matrix::Matrix;
use crate::rng::{derive_seed, seeded, SeededRng};

/// One mixture component.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CategorySpec {
    pub mean: Vec<f64>,
    /// Isotropic feature noise scale.
    pub std: f64,
    pub count: usize,
    /// Documents intent only; novelty itself comes from a zero source ratio.
    #[serde(default)]
    pub novel: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphGenSpec {
    pub categories: Vec<CategorySpec>,
    pub p_intra: f64,
    pub p_inter: f64,
    #[serde(default)]
    pub seed: u64,
}

impl GraphGenSpec {
    pub fn validate(&self) -> Result<()> {
        let Some(first) = self.categories.first() else {
            return Err(Error::InvalidArgument("generator needs at least one category".into()));
        };
        let d = first.mean.len();
        for (c, cat) in self.categories.iter().enumerate() {
            if cat.mean.len() != d {
                return Err(Error::InvalidArgument(format!(
                    "category {c} mean has dimension {}, category 0 has {d}",
                    cat.mean.len()
                )));
            }
            if cat.count == 0 {
                return Err(Error::InvalidArgument(format!("category {c} has zero nodes")));
            }
            if !(cat.std > 0.0 && cat.std.is_finite()) {
                return Err(Error::InvalidArgument(format!("category {c} std must be positive")));
            }
            if cat.mean.iter().any(|m| !m.is_finite()) {
                return Err(Error::InvalidArgument(format!("category {c} mean is not finite")));
            }
        }
        let single = self.categories.len() == 1;
        let ok = (0.0..=1.0).contains(&self.p_inter)
            && (0.0..=1.0).contains(&self.p_intra)
            && (single || self.p_inter < self.p_intra);
        if !ok {
            return Err(Error::InvalidArgument(format!(
                "need 0 <= p_inter < p_intra <= 1, got p_inter {} and p_intra {}",
                self.p_inter, self.p_intra
            )));
        }
        Ok(())
    }

    pub fn num_nodes(&self) -> usize {
        self.categories.iter().map(|c| c.count).sum()
    }
}

/// Draws features and edges. Nodes are laid out category by category; the
/// result carries category labels but no domains.
pub fn generate_graph(spec: &GraphGenSpec) -> Result<AttributedGraph<f64>> {
    spec.validate()?;
    let n = spec.num_nodes();
    let d = spec.categories[0].mean.len();

    let mut feat_rng = seeded(derive_seed(spec.seed, 1));
    let mut features = Matrix::zeros(n, d);
    let mut categories = Vec::with_capacity(n);
    let mut v = 0;
    for (c, cat) in spec.categories.iter().enumerate() {
        let noise = Normal::new(0.0, cat.std).expect("validated std");
        for _ in 0..cat.count {
            for (k, &m) in cat.mean.iter().enumerate() {
                features.set(v, k, m + noise.sample(&mut feat_rng));
            }
            categories.push(Some(c as u32));
            v += 1;
        }
    }

    let mut edge_rng = seeded(derive_seed(spec.seed, 2));
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let p = if categories[i] == categories[j] {
                spec.p_intra
            } else {
                spec.p_inter
            };
            if p > 0.0 && edge_rng.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    AttributedGraph::new(features, edges, None, categories, None)
}

/// Per-category probability of landing in the source domain. A category with
/// ratio 0 never appears in the source and is therefore the novel one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShiftSpec {
    pub source_ratio: Vec<f64>,
}

impl ShiftSpec {
    pub fn validate(&self) -> Result<()> {
        if let Some((c, r)) = self.source_ratio.iter().enumerate().find(|(_, r)| !(0.0..=1.0).contains(*r)) {
            return Err(Error::InvalidArgument(format!("source ratio {r} of category {c} outside [0, 1]")));
        }
        Ok(())
    }

    pub fn is_novel(&self, category: u32) -> bool {
        self.source_ratio.get(category as usize) == Some(&0.0)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitMode {
    /// Exactly `round(ratio * n_c)` nodes of category `c` go to the source.
    #[default]
    ExactCount,
    /// Each node goes to the source independently with its category's ratio.
    Bernoulli,
}

/// Assigns domains by category and sets the novel mask.
pub fn apply_shift_split(
    graph: &AttributedGraph<f64>,
    shift: &ShiftSpec,
    mode: SplitMode,
    rng: &mut SeededRng,
) -> Result<AttributedGraph<f64>> {
    shift.validate()?;
    let n = graph.num_nodes();
    let mut by_cat: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (v, c) in graph.categories().iter().enumerate() {
        let c = c.ok_or_else(|| Error::InvalidArgument(format!("node {v} has no category")))?;
        if c as usize >= shift.source_ratio.len() {
            return Err(Error::InvalidArgument(format!(
                "node {v} has category {c} but only {} source ratios were given",
                shift.source_ratio.len()
            )));
        }
        by_cat.entry(c).or_default().push(v);
    }

    let mut domains = vec![Domain::Target; n];
    for (&c, nodes) in &by_cat {
        let ratio = shift.source_ratio[c as usize];
        match mode {
            SplitMode::ExactCount => {
                let k = (ratio * nodes.len() as f64).round() as usize;
                let mut order = nodes.clone();
                order.shuffle(rng);
                for &v in &order[..k] {
                    domains[v] = Domain::Source;
                }
            }
            SplitMode::Bernoulli => {
                for &v in nodes {
                    if rng.random_bool(ratio) {
                        domains[v] = Domain::Source;
                    }
                }
            }
        }
    }
    let novel = graph
        .categories()
        .iter()
        .map(|c| c.is_some_and(|c| shift.is_novel(c)))
        .collect();
    graph.clone().with_labels(Some(domains), Some(novel))
}

/// Generator, shift and split mode in one document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub graph: GraphGenSpec,
    pub shift: ShiftSpec,
    #[serde(default)]
    pub split_mode: SplitMode,
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        self.graph.validate()?;
        self.shift.validate()?;
        if self.shift.source_ratio.len() != self.graph.categories.len() {
            return Err(Error::InvalidArgument(format!(
                "{} source ratios for {} categories",
                self.shift.source_ratio.len(),
                self.graph.categories.len()
            )));
        }
        for (c, cat) in self.graph.categories.iter().enumerate() {
            if cat.novel && self.shift.source_ratio[c] != 0.0 {
                return Err(Error::InvalidArgument(format!("novel category {c} must have source ratio 0")));
            }
        }
        Ok(())
    }

    /// Generates the graph with `seed` and applies the shift. The seed
    /// replaces the one in the graph spec.
    pub fn realize(&self, seed: u64) -> Result<AttributedGraph<f64>> {
        self.validate()?;
        let mut spec = self.graph.clone();
        spec.seed = derive_seed(seed, 10);
        let graph = generate_graph(&spec)?;
        let mut rng = seeded(derive_seed(seed, 11));
        apply_shift_split(&graph, &self.shift, self.split_mode, &mut rng)
    }

    /// Three non-novel Gaussian categories plus one novel category, with
    /// homophilous edges. Each mean sits one noise unit out on its own axis.
    /// The novel mean also leans toward category 0, the one the shifted
    /// presets under-sample in the source, so a detector that only learns
    /// "rare in the source" confuses the two.
    pub fn benchmark(source_ratio: [f64; 3]) -> Self {
        let dim = 8;
        let sep = 1.0;
        let axis = |k: usize, scale: f64| {
            let mut m = vec![0.0; dim];
            m[k] = scale;
            m
        };
        let mut novel_mean = axis(3, sep);
        novel_mean[0] = 0.7 * sep;
        let cat = |mean: Vec<f64>, count: usize, novel: bool| CategorySpec {
            mean,
            std: 1.0,
            count,
            novel,
        };
        Self {
            graph: GraphGenSpec {
                categories: vec![
                    cat(axis(0, sep), 350, false),
                    cat(axis(1, sep), 350, false),
                    cat(axis(2, sep), 350, false),
                    cat(novel_mean, 150, true),
                ],
                p_intra: 0.02,
                p_inter: 0.002,
                seed: 0,
            },
            shift: ShiftSpec {
                source_ratio: vec![source_ratio[0], source_ratio[1], source_ratio[2], 0.0],
            },
            split_mode: SplitMode::ExactCount,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScarRow {
    pub category: u32,
    pub nodes: usize,
    pub source: usize,
    /// Share of the category observed in the source domain.
    pub p_source: f64,
}

/// Per-category source probabilities. Under the selected-completely-at-random
/// assumption they would all be equal; `max_gap` measures how far they are.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScarReport {
    pub rows: Vec<ScarRow>,
    pub max_gap: f64,
    /// Category ids below the largest one that have no nodes.
    pub empty_categories: Vec<u32>,
}

/// Source probability per non-novel category. Categories holding any novel
/// node are left out; so are unlabelled nodes.
pub fn scar_violation_report(graph: &AttributedGraph<f64>) -> Result<ScarReport> {
    let domains = graph.domains()?;
    let novel = graph.novel_mask();
    let mut counts: BTreeMap<u32, (usize, usize, bool)> = BTreeMap::new();
    for (v, c) in graph.categories().iter().enumerate() {
        let Some(c) = *c else { continue };
        let e = counts.entry(c).or_default();
        e.0 += 1;
        if domains[v] == Domain::Source {
            e.1 += 1;
        }
        e.2 |= novel.is_some_and(|m| m[v]);
    }
    if counts.is_empty() {
        return Err(Error::InvalidArgument("SCAR report needs category labels".into()));
    }
    let max_id = *counts.keys().next_back().expect("nonempty");
    let empty_categories: Vec<u32> = (0..max_id).filter(|c| !counts.contains_key(c)).collect();
    for c in &empty_categories {
        log::warn!("category {c} has no nodes and is omitted from the SCAR report");
    }
    let rows: Vec<ScarRow> = counts
        .into_iter()
        .filter(|(_, (_, _, is_novel))| !is_novel)
        .map(|(category, (nodes, source, _))| ScarRow {
            category,
            nodes,
            source,
            p_source: source as f64 / nodes as f64,
        })
        .collect();
    let (lo, hi) = rows
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r.p_source), hi.max(r.p_source)));
    let max_gap = if rows.is_empty() { 0.0 } else { hi - lo };
    Ok(ScarReport {
        rows,
        max_gap,
        empty_categories,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blob(mean: Vec<f64>, count: usize) -> CategorySpec {
        CategorySpec {
            mean,
            std: 1.0,
            count,
            novel: false,
        }
    }

    fn spec(categories: Vec<CategorySpec>, p_intra: f64, p_inter: f64) -> GraphGenSpec {
        GraphGenSpec {
            categories,
            p_intra,
            p_inter,
            seed: 7,
        }
    }

    #[test]
    fn forced_edges_make_a_triangle() {
        let g = generate_graph(&spec(vec![blob(vec![0.0], 3)], 1.0, 0.0)).unwrap();
        assert_eq!(g.edges(), &[(0, 1), (0, 2), (1, 2)]);
        assert!(!g.has_domains());
    }

    #[test]
    fn no_cross_edges_without_inter_probability() {
        let g = generate_graph(&spec(vec![blob(vec![0.0], 20), blob(vec![1.0], 20)], 0.5, 0.0)).unwrap();
        let cats = g.categories();
        assert!(g.num_edges() > 0);
        assert!(g.edges().iter().all(|&(i, j)| cats[i] == cats[j]));
    }

    #[test]
    fn rejects_invalid_specs() {
        assert!(generate_graph(&spec(vec![blob(vec![0.0], 3), blob(vec![0.0, 1.0], 3)], 0.5, 0.1)).is_err());
        assert!(generate_graph(&spec(vec![blob(vec![0.0], 3), blob(vec![1.0], 3)], 0.1, 0.1)).is_err());
        assert!(generate_graph(&spec(vec![blob(vec![0.0], 0)], 0.5, 0.1)).is_err());
        let mut bad = blob(vec![0.0], 3);
        bad.std = 0.0;
        assert!(generate_graph(&spec(vec![bad], 0.5, 0.1)).is_err());
    }

    #[test]
    fn separated_means_are_linearly_separable() {
        let g = generate_graph(&spec(vec![blob(vec![-2.0; 4], 100), blob(vec![2.0; 4], 100)], 0.05, 0.01)).unwrap();
        let x = g.features();
        let y: Vec<f64> = g.categories().iter().map(|c| c.unwrap() as f64).collect();
        // logistic regression by full-batch gradient descent as the probe
        let mut w = [0.0; 5];
        for _ in 0..300 {
            let mut grad = [0.0; 5];
            for i in 0..x.rows() {
                let z = w[4] + (0..4).map(|k| w[k] * x.get(i, k)).sum::<f64>();
                let err = 1.0 / (1.0 + (-z).exp()) - y[i];
                for k in 0..4 {
                    grad[k] += err * x.get(i, k);
                }
                grad[4] += err;
            }
            for k in 0..5 {
                w[k] -= 0.1 * grad[k] / x.rows() as f64;
            }
        }
        let correct = (0..x.rows())
            .filter(|&i| {
                let z = w[4] + (0..4).map(|k| w[k] * x.get(i, k)).sum::<f64>();
                (z > 0.0) == (y[i] == 1.0)
            })
            .count();
        assert!(correct as f64 / 200.0 > 0.95, "accuracy {}", correct as f64 / 200.0);
    }

    #[test]
    fn edges_are_homophilous() {
        let g = generate_graph(&spec(vec![blob(vec![0.0], 100), blob(vec![0.0], 100)], 0.05, 0.01)).unwrap();
        let cats = g.categories();
        let intra = g.edges().iter().filter(|&&(i, j)| cats[i] == cats[j]).count() as f64;
        let inter = g.num_edges() as f64 - intra;
        let intra_rate = intra / (2.0 * 100.0 * 99.0 / 2.0);
        let inter_rate = inter / (100.0 * 100.0);
        assert!(intra_rate > inter_rate, "{intra_rate} vs {inter_rate}");
    }

    #[test]
    fn same_seed_same_graph() {
        let s = spec(vec![blob(vec![0.0, 1.0], 30), blob(vec![1.0, 0.0], 30)], 0.2, 0.05);
        assert_eq!(generate_graph(&s).unwrap(), generate_graph(&s).unwrap());
    }

    fn seven_categories(count: usize) -> AttributedGraph<f64> {
        let cats = (0..7).map(|c| blob(vec![c as f64], count)).collect();
        generate_graph(&spec(cats, 0.1, 0.0)).unwrap()
    }

    #[test]
    fn exact_count_split_hits_rounded_counts() {
        let g = seven_categories(30);
        let shift = ShiftSpec {
            source_ratio: vec![0.1, 0.9, 0.1, 0.9, 0.1, 0.9, 0.0],
        };
        let split = apply_shift_split(&g, &shift, SplitMode::ExactCount, &mut seeded(3)).unwrap();
        let rep = scar_violation_report(&split).unwrap();
        let want = [3, 27, 3, 27, 3, 27];
        assert_eq!(rep.rows.iter().map(|r| r.source).collect::<Vec<_>>(), want);
        assert!((rep.rows[0].p_source - 0.1).abs() < 1e-12);
        assert!((rep.max_gap - 0.8).abs() < 1e-12);
        // the novel category stays entirely in the target domain
        let d = split.domains().unwrap();
        let novel = split.novel_mask().unwrap();
        assert_eq!(novel.iter().filter(|&&m| m).count(), 30);
        assert!((0..split.num_nodes()).all(|v| !novel[v] || d[v] == Domain::Target));
    }

    #[test]
    fn even_halves_and_determinism() {
        let g = seven_categories(10);
        let shift = ShiftSpec {
            source_ratio: vec![0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.0],
        };
        let a = apply_shift_split(&g, &shift, SplitMode::ExactCount, &mut seeded(9)).unwrap();
        let b = apply_shift_split(&g, &shift, SplitMode::ExactCount, &mut seeded(9)).unwrap();
        assert_eq!(a, b);
        let rep = scar_violation_report(&a).unwrap();
        assert!(rep.rows.iter().all(|r| r.source == 5));
        assert_eq!(rep.max_gap, 0.0);
    }

    #[test]
    fn minor_shift_gap() {
        let g = seven_categories(20);
        let shift = ShiftSpec {
            source_ratio: vec![0.3, 0.7, 0.3, 0.7, 0.3, 0.7, 0.0],
        };
        let s = apply_shift_split(&g, &shift, SplitMode::ExactCount, &mut seeded(1)).unwrap();
        assert!((scar_violation_report(&s).unwrap().max_gap - 0.4).abs() < 1e-12);
    }

    #[test]
    fn bernoulli_split_never_puts_novel_in_source() {
        let g = seven_categories(40);
        let shift = ShiftSpec {
            source_ratio: vec![0.9; 6].into_iter().chain([0.0]).collect(),
        };
        let s = apply_shift_split(&g, &shift, SplitMode::Bernoulli, &mut seeded(5)).unwrap();
        let d = s.domains().unwrap();
        assert!((240..280).all(|v| d[v] == Domain::Target));
        assert!((0..240).any(|v| d[v] == Domain::Source));
    }

    #[test]
    fn split_rejects_bad_ratios() {
        let g = seven_categories(2);
        let bad = ShiftSpec {
            source_ratio: vec![1.2, 0.5, 0.5, 0.5, 0.5, 0.5, 0.0],
        };
        assert!(apply_shift_split(&g, &bad, SplitMode::ExactCount, &mut seeded(0)).is_err());
        let short = ShiftSpec {
            source_ratio: vec![0.5],
        };
        assert!(apply_shift_split(&g, &short, SplitMode::ExactCount, &mut seeded(0)).is_err());
    }

    #[test]
    fn report_lists_empty_categories() {
        let g = generate_graph(&spec(vec![blob(vec![0.0], 4), blob(vec![1.0], 4)], 0.1, 0.0)).unwrap();
        // relabel category 1 as 2, leaving 1 empty
        let cats: Vec<Option<u32>> = g.categories().iter().map(|c| c.map(|c| c * 2)).collect();
        let g = AttributedGraph::new(g.features().clone(), vec![], None, cats, None).unwrap();
        let shift = ShiftSpec {
            source_ratio: vec![0.5, 0.5, 0.5],
        };
        let s = apply_shift_split(&g, &shift, SplitMode::ExactCount, &mut seeded(0)).unwrap();
        let rep = scar_violation_report(&s).unwrap();
        assert_eq!(rep.empty_categories, vec![1]);
        assert_eq!(rep.rows.len(), 2);
    }

    #[test]
    fn dataset_spec_round_trips_through_toml() {
        let spec = DatasetSpec::benchmark([0.1, 0.9, 0.5]);
        spec.validate().unwrap();
        let text = toml::to_string(&spec).unwrap();
        let back: DatasetSpec = toml::from_str(&text).unwrap();
        assert_eq!(spec, back);
        let g = spec.realize(10).unwrap();
        assert_eq!(g.num_nodes(), 1200);
        assert_eq!(g.novel_mask().unwrap().iter().filter(|&&m| m).count(), 150);
    }
}
