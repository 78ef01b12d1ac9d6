//! Model assembly: architecture descriptions, their parameter containers,
//! forward execution and parameter counting.

pub mod layers;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{Matrix, Real};
use layers::{fc_forward, flatten, lst_forward, res_lst_forward, Activation, FcLayer, LstBlock};

pub const IMAGE_SIDE: usize = 28;
pub const NUM_CLASSES: usize = 10;

/// One stage of a model architecture.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StageSpec {
    /// LST block: `d_in x d_in` image in, `d_out x d_out` image out.
    Lst { d_in: usize, d_out: usize },
    /// LST block with a skip connection; requires `d_in == d_out == d`.
    ResLst { d: usize },
    /// Row-major reshape of a `d x d` image into a length `d^2` vector.
    Flatten,
    /// Fully connected stage on a flattened vector.
    Fc {
        d_in: usize,
        d_out: usize,
        activation: Activation,
    },
}

/// Architecture description: an ordered list of stages plus a display name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    pub stages: Vec<StageSpec>,
}

/// Shape flowing between stages during validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Shape {
    Image(usize),
    Vector(usize),
}

impl ModelSpec {
    /// Single LST block, flatten, linear classifier.
    pub fn lst1() -> Self {
        ModelSpec {
            name: "lst1".into(),
            stages: vec![
                StageSpec::Lst {
                    d_in: IMAGE_SIDE,
                    d_out: IMAGE_SIDE,
                },
                StageSpec::Flatten,
                StageSpec::Fc {
                    d_in: IMAGE_SIDE * IMAGE_SIDE,
                    d_out: NUM_CLASSES,
                    activation: Activation::None,
                },
            ],
        }
    }

    /// Two stacked LST blocks with a 28x28 hidden representation.
    pub fn lst2() -> Self {
        ModelSpec {
            name: "lst2".into(),
            stages: vec![
                StageSpec::Lst {
                    d_in: IMAGE_SIDE,
                    d_out: IMAGE_SIDE,
                },
                StageSpec::Lst {
                    d_in: IMAGE_SIDE,
                    d_out: IMAGE_SIDE,
                },
                StageSpec::Flatten,
                StageSpec::Fc {
                    d_in: IMAGE_SIDE * IMAGE_SIDE,
                    d_out: NUM_CLASSES,
                    activation: Activation::None,
                },
            ],
        }
    }

    /// Three residual LST blocks, flatten, linear classifier.
    pub fn reslst3() -> Self {
        ModelSpec {
            name: "reslst3".into(),
            stages: vec![
                StageSpec::ResLst { d: IMAGE_SIDE },
                StageSpec::ResLst { d: IMAGE_SIDE },
                StageSpec::ResLst { d: IMAGE_SIDE },
                StageSpec::Flatten,
                StageSpec::Fc {
                    d_in: IMAGE_SIDE * IMAGE_SIDE,
                    d_out: NUM_CLASSES,
                    activation: Activation::None,
                },
            ],
        }
    }

    /// Plain feedforward baseline: flatten, then FC layers with tanh on
    /// hidden layers and identity on the output. `widths[0]` must equal
    /// the flattened input size.
    pub fn ffnn(widths: &[usize]) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::SpecInvalid("ffnn needs at least two widths".into()));
        }
        let mut stages = vec![StageSpec::Flatten];
        for (i, w) in widths.windows(2).enumerate() {
            let last = i == widths.len() - 2;
            stages.push(StageSpec::Fc {
                d_in: w[0],
                d_out: w[1],
                activation: if last {
                    Activation::None
                } else {
                    Activation::Tanh
                },
            });
        }
        let name = format!(
            "ffnn:{}",
            widths
                .iter()
                .map(|w| w.to_string())
                .collect::<Vec<_>>()
                .join("-")
        );
        Ok(ModelSpec { name, stages })
    }

    /// Look a model up by CLI name: `lst1`, `lst2`, `reslst3` or
    /// `ffnn:<w0>-<w1>-...`.
    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "lst1" => Ok(Self::lst1()),
            "lst2" => Ok(Self::lst2()),
            "reslst3" => Ok(Self::reslst3()),
            _ => {
                if let Some(list) = name.strip_prefix("ffnn:") {
                    let widths: std::result::Result<Vec<usize>, _> =
                        list.split('-').map(str::parse).collect();
                    let widths = widths
                        .map_err(|_| Error::SpecInvalid(format!("bad ffnn width list {list:?}")))?;
                    Self::ffnn(&widths)
                } else {
                    Err(Error::SpecInvalid(format!("unknown model {name:?}")))
                }
            }
        }
    }

    /// The image side length this spec consumes.
    pub fn input_side(&self) -> Result<usize> {
        match self.stages.first() {
            Some(StageSpec::Lst { d_in, .. }) => Ok(*d_in),
            Some(StageSpec::ResLst { d }) => Ok(*d),
            Some(StageSpec::Flatten) => match self.stages.get(1) {
                Some(StageSpec::Fc { d_in, .. }) => {
                    let side = (*d_in as f64).sqrt().round() as usize;
                    if side * side != *d_in {
                        return Err(Error::SpecInvalid(format!(
                            "flatten feeds fc with non-square d_in {d_in}"
                        )));
                    }
                    Ok(side)
                }
                _ => Err(Error::SpecInvalid("flatten must feed an fc stage".into())),
            },
            Some(StageSpec::Fc { .. }) => Err(Error::SpecInvalid(
                "model input is 2D; first fc needs a flatten".into(),
            )),
            None => Err(Error::SpecInvalid("empty stage list".into())),
        }
    }

    /// Check stage-to-stage shape chaining and the final-classifier rule.
    pub fn validate(&self) -> Result<()> {
        let mut shape = Shape::Image(self.input_side()?);
        for (i, stage) in self.stages.iter().enumerate() {
            shape = match (*stage, shape) {
                (StageSpec::Lst { d_in, d_out }, Shape::Image(d)) if d == d_in => {
                    Shape::Image(d_out)
                }
                (StageSpec::ResLst { d }, Shape::Image(s)) if s == d => Shape::Image(d),
                (StageSpec::Flatten, Shape::Image(d)) => Shape::Vector(d * d),
                (StageSpec::Fc { d_in, d_out, .. }, Shape::Vector(n)) if n == d_in => {
                    Shape::Vector(d_out)
                }
                (stage, shape) => {
                    return Err(Error::SpecInvalid(format!(
                        "stage {i} ({stage:?}) cannot consume {shape:?}"
                    )))
                }
            };
        }
        match (self.stages.last(), shape) {
            (
                Some(StageSpec::Fc {
                    activation: Activation::None,
                    ..
                }),
                Shape::Vector(NUM_CLASSES),
            ) => Ok(()),
            _ => Err(Error::SpecInvalid(
                "last stage must be an identity-activation fc producing 10 logits".into(),
            )),
        }
    }

    /// Number of learnable parameters. LST and residual LST blocks cost
    /// `2 (d_in + 1) d_out`, FC stages `(d_in + 1) d_out`, flatten nothing.
    pub fn param_count(&self) -> Result<usize> {
        self.validate()?;
        Ok(self
            .stages
            .iter()
            .map(|s| match *s {
                StageSpec::Lst { d_in, d_out } => 2 * (d_in + 1) * d_out,
                StageSpec::ResLst { d } => 2 * (d + 1) * d,
                StageSpec::Flatten => 0,
                StageSpec::Fc { d_in, d_out, .. } => (d_in + 1) * d_out,
            })
            .sum())
    }
}

/// Learned parameters for one stage.
#[derive(Debug, Clone, PartialEq)]
pub enum StageParams<T> {
    Lst(LstBlock<T>),
    ResLst(LstBlock<T>),
    Fc(FcLayer<T>),
    Flatten,
}

/// All learned parameters of a model, stage by stage.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub stages: Vec<StageParams<T>>,
}

impl<T: Real> ModelParams<T> {
    /// All-zero parameters shaped for `spec`.
    pub fn zeros(spec: &ModelSpec) -> Result<Self> {
        spec.validate()?;
        let stages = spec
            .stages
            .iter()
            .map(|s| match *s {
                StageSpec::Lst { d_in, d_out } => StageParams::Lst(LstBlock::zeros(d_in, d_out)),
                StageSpec::ResLst { d } => StageParams::ResLst(LstBlock::zeros(d, d)),
                StageSpec::Flatten => StageParams::Flatten,
                StageSpec::Fc {
                    d_in,
                    d_out,
                    activation,
                } => StageParams::Fc(FcLayer::zeros(d_in, d_out, activation)),
            })
            .collect();
        Ok(ModelParams { stages })
    }

    /// Same stage shapes as `self`, every value zero. Used for gradient
    /// and optimizer-moment containers.
    pub fn zeros_like(&self) -> Self {
        let stages = self
            .stages
            .iter()
            .map(|s| match s {
                StageParams::Lst(b) => StageParams::Lst(LstBlock::zeros(b.d_in(), b.d_out())),
                StageParams::ResLst(b) => StageParams::ResLst(LstBlock::zeros(b.d_in(), b.d_out())),
                StageParams::Fc(l) => {
                    StageParams::Fc(FcLayer::zeros(l.d_in(), l.d_out(), l.activation))
                }
                StageParams::Flatten => StageParams::Flatten,
            })
            .collect();
        ModelParams { stages }
    }

    /// Check that these parameters are shaped exactly as `spec` describes.
    pub fn congruent_with(&self, spec: &ModelSpec) -> Result<()> {
        if self.stages.len() != spec.stages.len() {
            return Err(Error::SpecInvalid(format!(
                "{} parameter stages for {} spec stages",
                self.stages.len(),
                spec.stages.len()
            )));
        }
        for (i, (p, s)) in self.stages.iter().zip(&spec.stages).enumerate() {
            let ok = match (p, s) {
                (StageParams::Lst(b), StageSpec::Lst { d_in, d_out }) => {
                    b.d_in() == *d_in && b.d_out() == *d_out
                }
                (StageParams::ResLst(b), StageSpec::ResLst { d }) => {
                    b.d_in() == *d && b.d_out() == *d
                }
                (StageParams::Flatten, StageSpec::Flatten) => true,
                (
                    StageParams::Fc(l),
                    StageSpec::Fc {
                        d_in,
                        d_out,
                        activation,
                    },
                ) => l.d_in() == *d_in && l.d_out() == *d_out && l.activation == *activation,
                _ => false,
            };
            if !ok {
                return Err(Error::SpecInvalid(format!(
                    "stage {i} params do not match spec"
                )));
            }
        }
        Ok(())
    }

    /// Flat views of every parameter tensor in serialization order:
    /// per stage, LST blocks contribute `w1, b1, w2, b2` and FC stages
    /// `w, b`, matrices row-major.
    pub fn tensors(&self) -> Vec<&[T]> {
        let mut out = Vec::new();
        for stage in &self.stages {
            match stage {
                StageParams::Lst(b) | StageParams::ResLst(b) => {
                    out.push(b.fc_row.w.as_slice());
                    out.push(b.fc_row.b.as_slice());
                    out.push(b.fc_col.w.as_slice());
                    out.push(b.fc_col.b.as_slice());
                }
                StageParams::Fc(l) => {
                    out.push(l.w.as_slice());
                    out.push(l.b.as_slice());
                }
                StageParams::Flatten => {}
            }
        }
        out
    }

    /// Mutable counterpart of [`ModelParams::tensors`], same order.
    pub fn tensors_mut(&mut self) -> Vec<&mut [T]> {
        let mut out = Vec::new();
        for stage in &mut self.stages {
            match stage {
                StageParams::Lst(b) | StageParams::ResLst(b) => {
                    out.push(b.fc_row.w.as_mut_slice());
                    out.push(b.fc_row.b.as_mut_slice());
                    out.push(b.fc_col.w.as_mut_slice());
                    out.push(b.fc_col.b.as_mut_slice());
                }
                StageParams::Fc(l) => {
                    out.push(l.w.as_mut_slice());
                    out.push(l.b.as_mut_slice());
                }
                StageParams::Flatten => {}
            }
        }
        out
    }

    /// Total number of stored real values.
    pub fn value_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }
}

/// Activation value flowing between stages.
#[derive(Debug, Clone)]
pub enum StageValue<T> {
    Image(Matrix<T>),
    Vector(Vec<T>),
}

/// Apply one stage to a value.
pub fn stage_forward<T: Real>(
    params: &StageParams<T>,
    value: StageValue<T>,
) -> Result<StageValue<T>> {
    match (params, value) {
        (StageParams::Lst(b), StageValue::Image(x)) => Ok(StageValue::Image(lst_forward(b, &x)?)),
        (StageParams::ResLst(b), StageValue::Image(x)) => {
            Ok(StageValue::Image(res_lst_forward(b, &x)?))
        }
        (StageParams::Flatten, StageValue::Image(x)) => Ok(StageValue::Vector(flatten(&x))),
        (StageParams::Fc(l), StageValue::Vector(x)) => Ok(StageValue::Vector(fc_forward(l, &x)?)),
        (p, v) => Err(Error::ShapeMismatch(format!(
            "stage {:?} cannot consume {}",
            std::mem::discriminant(p),
            match v {
                StageValue::Image(m) => format!("{}x{} image", m.rows(), m.cols()),
                StageValue::Vector(x) => format!("length-{} vector", x.len()),
            }
        ))),
    }
}

/// Run the full model on one image and return the 10 raw logits. Softmax
/// is deferred to the loss; argmax at inference does not need it.
pub fn model_forward<T: Real>(
    spec: &ModelSpec,
    params: &ModelParams<T>,
    x: &Matrix<T>,
) -> Result<Vec<T>> {
    params.congruent_with(spec)?;
    let side = spec.input_side()?;
    if x.rows() != side || x.cols() != side {
        return Err(Error::ShapeMismatch(format!(
            "input {}x{}, model expects {side}x{side}",
            x.rows(),
            x.cols()
        )));
    }
    let mut value = StageValue::Image(x.clone());
    for stage in &params.stages {
        value = stage_forward(stage, value)?;
    }
    match value {
        StageValue::Vector(v) if v.len() == NUM_CLASSES => Ok(v),
        _ => Err(Error::SpecInvalid("model did not end in 10 logits".into())),
    }
}

/// Feedforward baseline on an already-flattened input vector.
pub fn ffnn_forward<T: Real>(widths: &[usize], params: &ModelParams<T>, x: &[T]) -> Result<Vec<T>> {
    if widths.first() != Some(&x.len()) {
        return Err(Error::ShapeMismatch(format!(
            "input length {} != first width {:?}",
            x.len(),
            widths.first()
        )));
    }
    let mut v = x.to_vec();
    for stage in &params.stages {
        if let StageParams::Fc(l) = stage {
            v = fc_forward(l, &v)?;
        }
    }
    Ok(v)
}

/// Index of the largest logit, ties broken toward the lowest class index.
pub fn argmax<T: Real>(logits: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in logits.iter().enumerate().skip(1) {
        if v > logits[best] {
            best = i;
        }
    }
    best
}
