//! Checkpoint directory: `manifest.json` lists the network widths, every
//! tensor's name and shape, and the batch-norm statistics; `weights.csv`
//! holds `layer,row,col,value` rows in manifest order.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::nn::{BatchNormParams, Classifier, ClassifierConfig, ClassifierParams};
use super::tape::BatchStats;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const WEIGHTS_FILE: &str = "weights.csv";
const FORMAT: &str = "recoslip-checkpoint/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub config: ClassifierConfig,
    pub layers: Vec<LayerEntry>,
    pub batch_stats: Vec<BatchStats<f64>>,
}

pub fn save(model: &Classifier<f64>, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let named = model.params.named();
    let manifest = Manifest {
        format: FORMAT.into(),
        config: model.config.clone(),
        layers: named
            .iter()
            .map(|(name, m)| LayerEntry {
                name: (*name).into(),
                rows: m.rows(),
                cols: m.cols(),
            })
            .collect(),
        batch_stats: model.stats.clone(),
    };
    std::fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)?)?;
    let mut w = BufWriter::new(File::create(dir.join(WEIGHTS_FILE))?);
    writeln!(w, "layer,row,col,value")?;
    for (name, m) in named {
        for r in 0..m.rows() {
            for c in 0..m.cols() {
                writeln!(w, "{name},{r},{c},{}", m.get(r, c))?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load(dir: &Path) -> Result<Classifier<f64>> {
    let manifest: Manifest = serde_json::from_str(&std::fs::read_to_string(dir.join(MANIFEST_FILE))?)?;
    if manifest.format != FORMAT {
        return Err(Error::InvalidArgument(format!("unsupported checkpoint format `{}`", manifest.format)));
    }
    let mut tensors: HashMap<String, Matrix<f64>> = manifest
        .layers
        .iter()
        .map(|l| (l.name.clone(), Matrix::zeros(l.rows, l.cols)))
        .collect();
    let path = dir.join(WEIGHTS_FILE);
    let mut rdr = csv::Reader::from_path(&path)?;
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let bad = |msg: &str| Error::Parse {
            path: path.display().to_string(),
            line,
            msg: msg.into(),
        };
        let m = tensors.get_mut(&rec[0]).ok_or_else(|| bad("unknown layer"))?;
        let r: usize = rec[1].parse().map_err(|_| bad("bad row"))?;
        let c: usize = rec[2].parse().map_err(|_| bad("bad col"))?;
        let v: f64 = rec[3].parse().map_err(|_| bad("bad value"))?;
        if r >= m.rows() || c >= m.cols() {
            return Err(bad("index outside the layer shape"));
        }
        m.set(r, c, v);
    }
    let mut take = |name: &str| {
        tensors
            .remove(name)
            .ok_or_else(|| Error::InvalidArgument(format!("checkpoint lacks `{name}`")))
    };
    let bn = |take: &mut dyn FnMut(&str) -> Result<Matrix<f64>>, k: usize| -> Result<Option<BatchNormParams<f64>>> {
        if !manifest.config.batch_norm {
            return Ok(None);
        }
        Ok(Some(BatchNormParams {
            gamma: take(&format!("bn{k}.gamma"))?,
            beta: take(&format!("bn{k}.beta"))?,
        }))
    };
    let params = ClassifierParams {
        gcn1_weight: take("gcn1.weight")?,
        bn1: bn(&mut take, 1)?,
        gcn2_weight: take("gcn2.weight")?,
        bn2: bn(&mut take, 2)?,
        mlp1_weight: take("mlp1.weight")?,
        mlp1_bias: take("mlp1.bias")?,
        bn3: bn(&mut take, 3)?,
        mlp2_weight: take("mlp2.weight")?,
        mlp2_bias: take("mlp2.bias")?,
    };
    let mut model = Classifier::from_params(manifest.config, params);
    model.stats = manifest.batch_stats;
    Ok(model)
}
