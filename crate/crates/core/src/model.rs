//! Fitted models of every kind and their common on-disk envelope.
//!
//! An envelope is a format line, one line of JSON metadata and an optional
//! little-endian `f64` blob:
//!
//! ```text
//! pathseg-model/1
//! {"kind":"mlp","path_id":"path_1",...,"blob_len":32524}
//! <blob_len * 8 bytes>
//! ```

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural::{ArchitectureSpec, Network};
use crate::preprocess::NormParams;
use crate::tree::{DecisionTree, FeatureImportance, ForestModel, ForestParams, TreeParams};

pub const FORMAT_LINE: &str = "pathseg-model/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Dt,
    Rf,
    Mlp,
    Fcn,
    Cnn1d,
    Cnn2d,
    Lstm,
    Bilstm,
}

impl ModelKind {
    pub const ALL: [ModelKind; 8] = [
        ModelKind::Dt,
        ModelKind::Rf,
        ModelKind::Mlp,
        ModelKind::Fcn,
        ModelKind::Cnn1d,
        ModelKind::Cnn2d,
        ModelKind::Lstm,
        ModelKind::Bilstm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Dt => "dt",
            ModelKind::Rf => "rf",
            ModelKind::Mlp => "mlp",
            ModelKind::Fcn => "fcn",
            ModelKind::Cnn1d => "cnn1d",
            ModelKind::Cnn2d => "cnn2d",
            ModelKind::Lstm => "lstm",
            ModelKind::Bilstm => "bilstm",
        }
    }

    pub fn is_neural(self) -> bool {
        !matches!(self, ModelKind::Dt | ModelKind::Rf)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| {
            Error::config(
                "model",
                format!("unknown model `{s}` (expected dt, rf, mlp, fcn, cnn1d, cnn2d, lstm or bilstm)"),
            )
        })
    }
}

#[derive(Debug)]
pub enum Estimator {
    Tree { params: TreeParams, tree: DecisionTree },
    Forest { params: ForestParams, forest: ForestModel },
    Net(Network),
}

/// How the training runs were chosen, so evaluation can recover the test split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitRecord {
    pub seed: u64,
    pub fractions: (f64, f64, f64),
}

/// A fitted model plus everything needed to apply it to raw runs.
#[derive(Debug)]
pub struct TrainedModel {
    pub kind: ModelKind,
    pub path_id: String,
    pub seed: u64,
    pub j: usize,
    pub n: usize,
    pub class_names: Vec<String>,
    pub norm: NormParams,
    pub split: SplitRecord,
    pub estimator: Estimator,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    kind: ModelKind,
    path_id: String,
    seed: u64,
    j: usize,
    n: usize,
    class_names: Vec<String>,
    norm: NormParams,
    split: SplitRecord,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    tree_params: Option<TreeParams>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    tree: Option<DecisionTree>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    forest_params: Option<ForestParams>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    forest: Option<ForestModel>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    architecture: Option<ArchitectureSpec>,
    blob_len: usize,
}

impl TrainedModel {
    pub fn classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn window_len(&self) -> usize {
        self.j * self.n
    }

    /// Predicted class per window (each `j * n` values, row-major).
    pub fn predict(&self, windows: &[&[f64]]) -> Result<Vec<usize>> {
        let w = self.window_len();
        if let Some(bad) = windows.iter().find(|x| x.len() != w) {
            return Err(Error::shape(format!(
                "{} model expects windows of {} x {} = {w} values, got {}",
                self.kind,
                self.j,
                self.n,
                bad.len()
            )));
        }
        match &self.estimator {
            Estimator::Tree { tree, .. } => windows.iter().map(|x| tree.predict(x)).collect(),
            Estimator::Forest { forest, .. } => windows.iter().map(|x| forest.predict(x)).collect(),
            Estimator::Net(net) => net.predict(windows),
        }
    }

    /// Mean decrease in impurity over the `j * n` window inputs.
    pub fn feature_importance(&self) -> Result<FeatureImportance> {
        match &self.estimator {
            Estimator::Tree { tree, .. } => Ok(tree.feature_importance()),
            Estimator::Forest { forest, .. } => Ok(forest.feature_importance()),
            Estimator::Net(_) => Err(Error::State(format!(
                "{} models carry no impurity-based feature importance",
                self.kind
            ))),
        }
    }

    /// Importance summed over window positions, one weight per sensor feature.
    pub fn sensor_importance(&self) -> Result<Vec<(String, f64)>> {
        let imp = self.feature_importance()?;
        let mut per = vec![0.0; self.n];
        for (i, w) in imp.weights.iter().enumerate() {
            per[i % self.n] += w;
        }
        Ok(self.norm.feature_names.iter().cloned().zip(per).collect())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut header = Header {
            kind: self.kind,
            path_id: self.path_id.clone(),
            seed: self.seed,
            j: self.j,
            n: self.n,
            class_names: self.class_names.clone(),
            norm: self.norm.clone(),
            split: self.split.clone(),
            tree_params: None,
            tree: None,
            forest_params: None,
            forest: None,
            architecture: None,
            blob_len: 0,
        };
        let mut blob = Vec::new();
        match &self.estimator {
            Estimator::Tree { params, tree } => {
                header.tree_params = Some(*params);
                header.tree = Some(tree.clone());
            }
            Estimator::Forest { params, forest } => {
                header.forest_params = Some(*params);
                header.forest = Some(forest.clone());
            }
            Estimator::Net(net) => {
                header.architecture = Some(net.spec.clone());
                blob = net.state();
                header.blob_len = blob.len();
            }
        }
        let json = serde_json::to_string(&header).map_err(|e| Error::Format(e.to_string()))?;
        let mut out = Vec::with_capacity(FORMAT_LINE.len() + json.len() + 2 + blob.len() * 8);
        out.extend_from_slice(FORMAT_LINE.as_bytes());
        out.push(b'\n');
        out.extend_from_slice(json.as_bytes());
        out.push(b'\n');
        for v in blob {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Format(format!("model envelope: {m}"));
        let first = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| bad("missing format line"))?;
        if &bytes[..first] != FORMAT_LINE.as_bytes() {
            return Err(bad("unrecognized format line"));
        }
        let rest = &bytes[first + 1..];
        let second = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| bad("missing header"))?;
        let header: Header = serde_json::from_slice(&rest[..second]).map_err(|e| bad(&e.to_string()))?;
        let blob = &rest[second + 1..];
        if blob.len() != header.blob_len * 8 {
            return Err(bad(&format!(
                "expected {} blob bytes, found {}",
                header.blob_len * 8,
                blob.len()
            )));
        }
        let values: Vec<f64> = blob
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let w = header.j * header.n;
        let estimator = if header.kind.is_neural() {
            let spec = header
                .architecture
                .ok_or_else(|| bad("neural model without architecture"))?;
            if spec.input_shape.iter().product::<usize>() != w || spec.classes() != header.class_names.len() {
                return Err(bad("architecture disagrees with window shape or classes"));
            }
            let mut net = Network::build(&spec, header.seed)?;
            net.load_state(&values)?;
            net.validate()?;
            Estimator::Net(net)
        } else if header.kind == ModelKind::Dt {
            let tree = header.tree.ok_or_else(|| bad("decision tree without nodes"))?;
            tree.validate()?;
            if tree.n_features != w {
                return Err(bad("tree input width disagrees with window shape"));
            }
            Estimator::Tree {
                params: header.tree_params.unwrap_or_default(),
                tree,
            }
        } else {
            let forest = header.forest.ok_or_else(|| bad("forest without trees"))?;
            forest.validate()?;
            if forest.n_features != w {
                return Err(bad("forest input width disagrees with window shape"));
            }
            Estimator::Forest {
                params: header.forest_params.unwrap_or_default(),
                forest,
            }
        };
        if header.norm.feature_names.len() != header.n {
            return Err(bad("normalization parameters disagree with feature count"));
        }
        Ok(TrainedModel {
            kind: header.kind,
            path_id: header.path_id,
            seed: header.seed,
            j: header.j,
            n: header.n,
            class_names: header.class_names,
            norm: header.norm,
            split: header.split,
            estimator,
        })
    }

    /// Writes the envelope and, next to it, `<file>.norm.json`.
    pub fn save(&self, file: &Path) -> Result<()> {
        std::fs::write(file, self.to_bytes()?).map_err(|e| Error::io(file, e))?;
        self.norm.save(&norm_path(file))
    }

    pub fn load(file: &Path) -> Result<Self> {
        let bytes = std::fs::read(file).map_err(|e| Error::io(file, e))?;
        TrainedModel::from_bytes(&bytes)
    }
}

/// Sidecar file holding the normalization parameters of `model_file`.
pub fn norm_path(model_file: &Path) -> std::path::PathBuf {
    let mut s = model_file.as_os_str().to_owned();
    s.push(".norm.json");
    s.into()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kinds_parse() {
        for k in ModelKind::ALL {
            assert_eq!(k.name().parse::<ModelKind>().unwrap(), k);
        }
        assert!(matches!("svm".parse::<ModelKind>(), Err(Error::Config { .. })));
    }

    #[test]
    fn corrupt_envelopes_are_rejected() {
        assert!(TrainedModel::from_bytes(b"nope\n{}\n").is_err());
        assert!(TrainedModel::from_bytes(b"pathseg-model/1\n{\"kind\":\"dt\"}\n").is_err());
        assert!(TrainedModel::from_bytes(b"").is_err());
    }
}
