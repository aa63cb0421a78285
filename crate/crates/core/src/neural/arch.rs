//! Declarative network descriptions and the six benchmark architectures.

use serde::{Deserialize, Serialize};

use super::conv::Padding;
use super::layers::Activation;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmSpec {
    pub units: usize,
    pub return_sequences: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    Dense {
        units: usize,
        activation: Activation,
    },
    Conv1d {
        filters: usize,
        kernel: usize,
        padding: Padding,
        activation: Activation,
    },
    Conv2d {
        filters: usize,
        kernel: [usize; 2],
        padding: Padding,
        activation: Activation,
    },
    /// Stride-1 pooling is the only configuration the architectures use,
    /// with `same` padding.
    Maxpool {
        pool: Vec<usize>,
        stride: usize,
        padding: Padding,
    },
    Batchnorm,
    Activation {
        activation: Activation,
    },
    Dropout {
        rate: f64,
    },
    GlobalAvgPool,
    Flatten,
    Lstm(LstmSpec),
    Bidirectional {
        inner: LstmSpec,
    },
    /// Linear dense layer whose logits feed softmax cross entropy.
    SoftmaxOutput {
        classes: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    CategoricalCrossEntropy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSpec {
    pub loss: Loss,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureSpec {
    pub name: String,
    /// Per-window input shape, without the batch axis.
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
    pub training: TrainingSpec,
}

pub const ARCHITECTURES: [&str; 6] = ["mlp", "fcn", "cnn1d", "cnn2d", "lstm", "bilstm"];

fn training(learning_rate: f64, batch_size: usize) -> TrainingSpec {
    TrainingSpec {
        loss: Loss::CategoricalCrossEntropy,
        learning_rate,
        batch_size,
        epochs: 30,
    }
}

fn dense(units: usize) -> LayerSpec {
    LayerSpec::Dense {
        units,
        activation: Activation::Relu,
    }
}

/// The published configuration of architecture `name` for windows of
/// `j` steps over `n` features and `classes` segments.
pub fn build_architecture(name: &str, j: usize, n: usize, classes: usize) -> Result<ArchitectureSpec> {
    use LayerSpec::*;
    let out = SoftmaxOutput { classes };
    let (input_shape, layers, train) = match name {
        "mlp" => (
            vec![j, n],
            vec![dense(64), dense(64), dense(64), Flatten, out],
            training(3e-4, 256),
        ),
        "fcn" => {
            let mut layers = Vec::new();
            for (k, rate) in [(8, 0.3), (5, 0.3), (3, 0.2)] {
                layers.push(Conv2d {
                    filters: 16,
                    kernel: [k, k],
                    padding: Padding::Same,
                    activation: super::layers::Activation::Linear,
                });
                layers.push(Batchnorm);
                layers.push(Activation {
                    activation: super::layers::Activation::Relu,
                });
                layers.push(Dropout { rate });
            }
            layers.extend([GlobalAvgPool, Flatten, out]);
            (vec![j, n, 1], layers, training(5e-5, 100))
        }
        "cnn1d" => (
            vec![j, n],
            vec![
                Conv1d {
                    filters: 64,
                    kernel: 5,
                    padding: Padding::Valid,
                    activation: super::layers::Activation::Relu,
                },
                Maxpool {
                    pool: vec![3],
                    stride: 1,
                    padding: Padding::Same,
                },
                Batchnorm,
                Flatten,
                dense(32),
                dense(32),
                out,
            ],
            training(3e-5, 256),
        ),
        "cnn2d" => (
            vec![j, n, 1],
            vec![
                Conv2d {
                    filters: 64,
                    kernel: [5, 5],
                    padding: Padding::Valid,
                    activation: super::layers::Activation::Relu,
                },
                Maxpool {
                    pool: vec![3, 3],
                    stride: 1,
                    padding: Padding::Same,
                },
                Batchnorm,
                dense(32),
                dense(32),
                Flatten,
                out,
            ],
            training(3e-5, 256),
        ),
        "lstm" => {
            let mut layers = Vec::new();
            for i in 0..3 {
                layers.push(Lstm(LstmSpec {
                    units: 64,
                    return_sequences: i < 2,
                }));
                layers.push(Dropout { rate: 0.2 });
            }
            layers.push(out);
            (vec![j, n], layers, training(3e-5, 200))
        }
        "bilstm" => {
            let mut layers = Vec::new();
            for i in 0..2 {
                layers.push(Bidirectional {
                    inner: LstmSpec {
                        units: 64,
                        return_sequences: i < 1,
                    },
                });
                layers.push(Dropout { rate: 0.3 });
            }
            layers.push(out);
            (vec![j, n], layers, training(3e-5, 1024))
        }
        other => {
            return Err(Error::config(
                "architecture",
                format!("unknown architecture `{other}` (expected one of {ARCHITECTURES:?})"),
            ))
        }
    };
    let spec = ArchitectureSpec {
        name: name.to_string(),
        input_shape,
        layers,
        training: train,
    };
    spec.output_shapes()?;
    Ok(spec)
}

fn chain_error(index: usize, layer: &LayerSpec, shape: &[usize], why: &str) -> Error {
    Error::shape(format!("layer {index} ({layer:?}) cannot take input {shape:?}: {why}"))
}

impl LayerSpec {
    /// Output shape (without batch) for the given input shape.
    pub fn output_shape(&self, index: usize, shape: &[usize]) -> Result<Vec<usize>> {
        let err = |why: &str| chain_error(index, self, shape, why);
        let mut out = shape.to_vec();
        match self {
            LayerSpec::Dense { units, .. } => {
                if shape.is_empty() || *units == 0 {
                    return Err(err("dense needs a feature axis and positive units"));
                }
                *out.last_mut().unwrap() = *units;
            }
            LayerSpec::Conv1d {
                filters,
                kernel,
                padding,
                ..
            } => {
                if *padding != Padding::Valid {
                    return Err(Error::config("conv1d", "only valid padding is supported"));
                }
                if shape.len() != 2 || *kernel == 0 || shape[0] < *kernel || *filters == 0 {
                    return Err(err("conv1d needs (time, channels) with time >= kernel"));
                }
                out = vec![shape[0] - kernel + 1, *filters];
            }
            LayerSpec::Conv2d {
                filters,
                kernel,
                padding,
                ..
            } => {
                if shape.len() != 3 || kernel.contains(&0) || *filters == 0 {
                    return Err(err("conv2d needs (height, width, channels)"));
                }
                out = match padding {
                    Padding::Same => vec![shape[0], shape[1], *filters],
                    Padding::Valid => {
                        if shape[0] < kernel[0] || shape[1] < kernel[1] {
                            return Err(err("kernel larger than input with valid padding"));
                        }
                        vec![shape[0] - kernel[0] + 1, shape[1] - kernel[1] + 1, *filters]
                    }
                };
            }
            LayerSpec::Maxpool { pool, stride, padding } => {
                if *padding != Padding::Same {
                    return Err(Error::config("maxpool", "only same padding is supported"));
                }
                if pool.is_empty() || pool.contains(&0) || *stride == 0 {
                    return Err(Error::config("maxpool", "pool sizes and stride must be positive"));
                }
                if shape.len() != pool.len() + 1 {
                    return Err(err("pool rank does not match the spatial rank"));
                }
                for (d, _) in pool.iter().enumerate() {
                    out[d] = shape[d].div_ceil(*stride);
                }
            }
            LayerSpec::Batchnorm | LayerSpec::Activation { .. } => {
                if shape.is_empty() {
                    return Err(err("needs a channel axis"));
                }
            }
            LayerSpec::Dropout { rate } => {
                if !(0.0..1.0).contains(rate) {
                    return Err(Error::config("dropout", format!("rate {rate} outside [0, 1)")));
                }
            }
            LayerSpec::GlobalAvgPool => {
                if shape.len() != 3 {
                    return Err(err("global average pooling needs (height, width, channels)"));
                }
                out = vec![shape[2]];
            }
            LayerSpec::Flatten => out = vec![shape.iter().product()],
            LayerSpec::Lstm(inner) | LayerSpec::Bidirectional { inner } => {
                if shape.len() != 2 || shape[0] == 0 || inner.units == 0 {
                    return Err(err("lstm needs (time, features)"));
                }
                let width = if matches!(self, LayerSpec::Bidirectional { .. }) {
                    2 * inner.units
                } else {
                    inner.units
                };
                out = if inner.return_sequences {
                    vec![shape[0], width]
                } else {
                    vec![width]
                };
            }
            LayerSpec::SoftmaxOutput { classes } => {
                if shape.len() != 1 {
                    return Err(err("softmax output needs a flat feature vector"));
                }
                if *classes < 2 {
                    return Err(Error::config("classes", "softmax output needs at least 2 classes"));
                }
                out = vec![*classes];
            }
        }
        Ok(out)
    }

    /// Number of trainable scalars given the layer's input shape.
    pub fn param_count(&self, shape: &[usize]) -> usize {
        let last = shape.last().copied().unwrap_or(0);
        match self {
            LayerSpec::Dense { units, .. } => last * units + units,
            LayerSpec::SoftmaxOutput { classes } => last * classes + classes,
            LayerSpec::Conv1d { filters, kernel, .. } => kernel * last * filters + filters,
            LayerSpec::Conv2d { filters, kernel, .. } => kernel[0] * kernel[1] * last * filters + filters,
            LayerSpec::Batchnorm => 2 * last,
            LayerSpec::Lstm(s) => 4 * s.units * (last + s.units + 1),
            LayerSpec::Bidirectional { inner } => 8 * inner.units * (last + inner.units + 1),
            _ => 0,
        }
    }
}

impl ArchitectureSpec {
    /// Statically propagates shapes; the result starts with the input shape
    /// and has one entry per layer.
    pub fn output_shapes(&self) -> Result<Vec<Vec<usize>>> {
        if self.input_shape.is_empty() || self.input_shape.contains(&0) {
            return Err(Error::shape(format!("invalid input shape {:?}", self.input_shape)));
        }
        match self.layers.last() {
            Some(LayerSpec::SoftmaxOutput { .. }) => {}
            _ => return Err(Error::config("layers", "the last layer must be softmax_output")),
        }
        if self.layers[..self.layers.len() - 1]
            .iter()
            .any(|l| matches!(l, LayerSpec::SoftmaxOutput { .. }))
        {
            return Err(Error::config("layers", "softmax_output may only appear last"));
        }
        let mut shapes = vec![self.input_shape.clone()];
        for (i, layer) in self.layers.iter().enumerate() {
            let next = layer.output_shape(i, shapes.last().unwrap())?;
            shapes.push(next);
        }
        Ok(shapes)
    }

    pub fn classes(&self) -> usize {
        match self.layers.last() {
            Some(LayerSpec::SoftmaxOutput { classes }) => *classes,
            _ => 0,
        }
    }

    /// Accepts exactly the declared per-window input shape.
    pub fn check_input(&self, shape: &[usize]) -> Result<()> {
        if shape != self.input_shape.as_slice() {
            return Err(Error::shape(format!(
                "{} expects inputs of shape {:?}, got {shape:?}",
                self.name, self.input_shape
            )));
        }
        Ok(())
    }

    pub fn param_count(&self) -> Result<usize> {
        let shapes = self.output_shapes()?;
        Ok(self.layers.iter().zip(&shapes).map(|(l, s)| l.param_count(s)).sum())
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.training;
        if !(t.learning_rate > 0.0 && t.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate", "must be positive and finite"));
        }
        if t.batch_size == 0 {
            return Err(Error::config("batch_size", "must be at least 1"));
        }
        self.output_shapes().map(|_| ())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mlp_matches_published_recipe() {
        let s = build_architecture("mlp", 30, 17, 12).unwrap();
        assert_eq!(s.layers.len(), 5);
        assert_eq!(s.training.learning_rate, 3e-4);
        assert_eq!(s.training.batch_size, 256);
        assert_eq!(s.training.epochs, 30);
        assert_eq!(s.param_count().unwrap(), 32524);
    }

    #[test]
    fn cnn1d_imu_layout() {
        let s = build_architecture("cnn1d", 30, 9, 8).unwrap();
        let shapes = s.output_shapes().unwrap();
        assert_eq!(shapes[1], vec![26, 64]);
        assert_eq!(shapes[3], vec![26, 64]);
        assert_eq!(shapes.last().unwrap(), &vec![8]);
        assert_eq!(s.training.batch_size, 256);
        assert_eq!(s.training.learning_rate, 3e-5);
    }

    #[test]
    fn recurrent_recipes() {
        let b = build_architecture("bilstm", 30, 17, 12).unwrap();
        assert_eq!(b.training.batch_size, 1024);
        let shapes = b.output_shapes().unwrap();
        assert_eq!(shapes[1], vec![30, 128]);
        assert_eq!(shapes[3], vec![128]);
        let l = build_architecture("lstm", 30, 17, 12).unwrap();
        assert_eq!(l.training.batch_size, 200);
        assert_eq!(l.layers.iter().filter(|x| matches!(x, LayerSpec::Lstm(_))).count(), 3);
    }

    #[test]
    fn fcn_and_cnn2d_take_imu_inputs() {
        for name in ["fcn", "cnn2d"] {
            let s = build_architecture(name, 30, 9, 8).unwrap();
            assert_eq!(s.input_shape, vec![30, 9, 1]);
        }
        let f = build_architecture("fcn", 30, 17, 12).unwrap();
        assert_eq!(f.training.learning_rate, 5e-5);
        assert_eq!(f.training.batch_size, 100);
    }

    #[test]
    fn chain_check_rejects_wrong_inputs() {
        let s = build_architecture("mlp", 30, 17, 12).unwrap();
        assert!(s.check_input(&[30, 17]).is_ok());
        assert!(s.check_input(&[30, 9]).is_err());
        assert!(s.check_input(&[30, 17, 1]).is_err());
        assert!(build_architecture("cnn1d", 4, 17, 12).is_err());
        assert!(matches!(
            build_architecture("transformer", 30, 17, 12),
            Err(Error::Config { .. })
        ));
        let mut bad = s.clone();
        bad.layers.pop();
        assert!(bad.output_shapes().is_err());
    }

    #[test]
    fn spec_round_trips_through_json() {
        for name in ARCHITECTURES {
            let s = build_architecture(name, 30, 17, 12).unwrap();
            let back: ArchitectureSpec = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
            assert_eq!(back, s);
        }
    }
}
