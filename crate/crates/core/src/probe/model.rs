// SPDX-License-Identifier: MIT OR Apache-2.0

//! Probe parameters and the batched forward/backward pass.
//!
//! Everything here is generic over the float type so that training runs in
//! `f32` while gradient checks run the identical code in `f64`.

use ndarray::{concatenate, s, Array2, ArrayView2, Axis, NdFloat};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::task::{TaskDataset, TaskKind};

/// A rank-`d` linear map `d x D` applied to representations before the probe.
///
/// No orthogonality or idempotence is implied.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    matrix: Array2<f32>,
}

impl Projection {
    pub fn new(matrix: Array2<f32>) -> Result<Self> {
        if matrix.nrows() == 0 || matrix.ncols() == 0 {
            return Err(Error::Shape("projection must be at least 1x1".into()));
        }
        if matrix.nrows() > matrix.ncols() {
            return Err(Error::Shape(format!(
                "projection rank {} exceeds input width {}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if let Some(index) = matrix.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Projection {
            matrix: matrix.as_standard_layout().into_owned(),
        })
    }

    pub fn rank(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn input_width(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn matrix(&self) -> &Array2<f32> {
        &self.matrix
    }

    pub fn into_matrix(self) -> Array2<f32> {
        self.matrix
    }
}

/// How wide the MLP hidden layer is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HiddenWidth {
    /// Width of the unprojected probe input: `D`, or `2D` for pair tasks.
    /// Keeps capacity fixed across a rank sweep.
    Unprojected,
    /// Width of the projected probe input: `d`, or `2d` for pair tasks.
    Projected,
    Fixed(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClassifierKind {
    Mlp,
    Linear,
}

/// Two-layer MLP `W2 relu(W1 x)` without biases.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpProbe<T> {
    pub w1: Array2<T>,
    pub w2: Array2<T>,
}

/// Affine softmax classifier `W x + b`; `b` is stored as a `1 x k` row.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProbe<T> {
    pub w: Array2<T>,
    pub b: Array2<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Classifier<T> {
    Mlp(MlpProbe<T>),
    Linear(LinearProbe<T>),
}

impl<T> Classifier<T> {
    pub fn kind(&self) -> ClassifierKind {
        match self {
            Classifier::Mlp(_) => ClassifierKind::Mlp,
            Classifier::Linear(_) => ClassifierKind::Linear,
        }
    }
}

/// Projection plus classifier. A `None` projection feeds raw
/// representations straight into the classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeParams<T> {
    pub kind: TaskKind,
    pub projection: Option<Array2<T>>,
    pub classifier: Classifier<T>,
}

/// Inputs of one batch: a single row block, or (head, dependent) blocks.
pub enum Batch<T> {
    Single(Array2<T>),
    Pair(Array2<T>, Array2<T>),
}

impl<T: NdFloat> Batch<T> {
    pub fn rows(&self) -> usize {
        match self {
            Batch::Single(x) => x.nrows(),
            Batch::Pair(h, _) => h.nrows(),
        }
    }
}

/// Supervision of one batch.
pub enum Targets<'a> {
    Classes(&'a [usize]),
    Binary(&'a [bool]),
}

fn uniform<T: NdFloat>(rng: &mut ChaCha8Rng, rows: usize, cols: usize, bound: f64) -> Array2<T> {
    Array2::from_shape_simple_fn((rows, cols), || {
        T::from(rng.random_range(-bound..bound)).unwrap()
    })
}

/// Number of outputs the classifier needs for `task`.
pub fn output_width(task: &TaskDataset) -> usize {
    match task.kind {
        TaskKind::HeadSelection => 1,
        _ => task.num_labels(),
    }
}

fn arity(kind: TaskKind) -> usize {
    match kind {
        TaskKind::SingleToken => 1,
        _ => 2,
    }
}

impl<T: NdFloat> ProbeParams<T> {
    /// Seeded initialization: uniform with bound `gain * sqrt(3 / fan_in)`,
    /// gain `sqrt(2)` for the layer feeding a ReLU and 1 elsewhere. Linear
    /// classifier biases start at zero.
    pub fn init(
        kind: TaskKind,
        classifier: ClassifierKind,
        rank: Option<usize>,
        repr_width: usize,
        outputs: usize,
        hidden: HiddenWidth,
        seed: u64,
    ) -> Result<Self> {
        if let Some(d) = rank {
            if d == 0 || d > repr_width {
                return Err(Error::Config(format!(
                    "rank {d} must lie in 1..={repr_width}"
                )));
            }
        }
        if outputs == 0 {
            return Err(Error::Config("classifier needs at least one output".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let projection =
            rank.map(|d| uniform(&mut rng, d, repr_width, (3.0 / repr_width as f64).sqrt()));
        let a = arity(kind);
        let input = a * rank.unwrap_or(repr_width);
        let classifier = match classifier {
            ClassifierKind::Mlp => {
                let h = match hidden {
                    HiddenWidth::Unprojected => a * repr_width,
                    HiddenWidth::Projected => input,
                    HiddenWidth::Fixed(h) => h,
                };
                if h == 0 {
                    return Err(Error::Config("hidden width must be positive".into()));
                }
                Classifier::Mlp(MlpProbe {
                    w1: uniform(&mut rng, h, input, (6.0 / input as f64).sqrt()),
                    w2: uniform(&mut rng, outputs, h, (3.0 / h as f64).sqrt()),
                })
            }
            ClassifierKind::Linear => Classifier::Linear(LinearProbe {
                w: uniform(&mut rng, outputs, input, (3.0 / input as f64).sqrt()),
                b: Array2::zeros((1, outputs)),
            }),
        };
        Ok(ProbeParams {
            kind,
            projection,
            classifier,
        })
    }

    /// Width of representations this probe accepts.
    pub fn repr_width(&self) -> usize {
        match (&self.projection, &self.classifier) {
            (Some(p), _) => p.ncols(),
            (None, Classifier::Mlp(m)) => m.w1.ncols() / arity(self.kind),
            (None, Classifier::Linear(l)) => l.w.ncols() / arity(self.kind),
        }
    }

    pub fn rank(&self) -> Option<usize> {
        self.projection.as_ref().map(|p| p.nrows())
    }

    pub fn outputs(&self) -> usize {
        match &self.classifier {
            Classifier::Mlp(m) => m.w2.nrows(),
            Classifier::Linear(l) => l.w.nrows(),
        }
    }

    /// All parameter tensors in a fixed order: projection first.
    pub fn tensors(&self) -> Vec<&Array2<T>> {
        let mut out: Vec<&Array2<T>> = self.projection.iter().collect();
        match &self.classifier {
            Classifier::Mlp(m) => out.extend([&m.w1, &m.w2]),
            Classifier::Linear(l) => out.extend([&l.w, &l.b]),
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Array2<T>> {
        let mut out: Vec<&mut Array2<T>> = self.projection.iter_mut().collect();
        match &mut self.classifier {
            Classifier::Mlp(m) => out.extend([&mut m.w1, &mut m.w2]),
            Classifier::Linear(l) => out.extend([&mut l.w, &mut l.b]),
        }
        out
    }

    pub fn tensor_names(&self) -> Vec<&'static str> {
        let mut out: Vec<&'static str> = self.projection.iter().map(|_| "projection").collect();
        match &self.classifier {
            Classifier::Mlp(_) => out.extend(["w1", "w2"]),
            Classifier::Linear(_) => out.extend(["w", "b"]),
        }
        out
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.fill(T::zero());
        }
        z
    }

    pub fn cast<U: NdFloat>(&self) -> ProbeParams<U> {
        let c = |a: &Array2<T>| a.mapv(|v| U::from(v).unwrap());
        ProbeParams {
            kind: self.kind,
            projection: self.projection.as_ref().map(c),
            classifier: match &self.classifier {
                Classifier::Mlp(m) => Classifier::Mlp(MlpProbe {
                    w1: c(&m.w1),
                    w2: c(&m.w2),
                }),
                Classifier::Linear(l) => Classifier::Linear(LinearProbe { w: c(&l.w), b: c(&l.b) }),
            },
        }
    }

    fn check_width(&self, cols: usize) -> Result<()> {
        if cols != self.repr_width() {
            return Err(Error::Shape(format!(
                "probe expects width {}, got {cols}",
                self.repr_width()
            )));
        }
        Ok(())
    }

    /// Apply the projection to a block of representation rows.
    pub fn project(&self, x: ArrayView2<T>) -> Array2<T> {
        match &self.projection {
            Some(p) => x.dot(&p.t()),
            None => x.to_owned(),
        }
    }

    fn projected_input(&self, batch: &Batch<T>) -> Result<Array2<T>> {
        match batch {
            Batch::Single(x) => {
                if self.kind != TaskKind::SingleToken {
                    return Err(Error::Shape("pair task given single inputs".into()));
                }
                self.check_width(x.ncols())?;
                Ok(self.project(x.view()))
            }
            Batch::Pair(h, d) => {
                if self.kind == TaskKind::SingleToken {
                    return Err(Error::Shape("single-token task given pair inputs".into()));
                }
                self.check_width(h.ncols())?;
                self.check_width(d.ncols())?;
                let ph = self.project(h.view());
                let pd = self.project(d.view());
                Ok(concatenate(Axis(1), &[ph.view(), pd.view()]).expect("equal row counts"))
            }
        }
    }

    /// Pre-activation outputs from already projected (and concatenated)
    /// inputs, together with the hidden activations needed for backward.
    fn classify(&self, p: &Array2<T>) -> (Array2<T>, Option<(Array2<T>, Array2<T>)>) {
        match &self.classifier {
            Classifier::Mlp(m) => {
                let z1 = p.dot(&m.w1.t());
                let h = z1.mapv(|v| v.max(T::zero()));
                let logits = h.dot(&m.w2.t());
                (logits, Some((z1, h)))
            }
            Classifier::Linear(l) => (p.dot(&l.w.t()) + &l.b, None),
        }
    }

    /// Logits (or head-selection scores) from projected inputs.
    pub fn logits_from_projected(&self, p: &Array2<T>) -> Array2<T> {
        self.classify(p).0
    }

    /// Output distribution per row: softmax over labels, or a one-column
    /// sigmoid score for head selection.
    pub fn forward(&self, batch: &Batch<T>) -> Result<Array2<T>> {
        let p = self.projected_input(batch)?;
        let mut out = self.logits_from_projected(&p);
        if self.kind == TaskKind::HeadSelection {
            out.mapv_inplace(sigmoid);
        } else {
            softmax_rows(&mut out);
        }
        Ok(out)
    }

    /// Mean negative log-likelihood of the batch.
    pub fn loss(&self, batch: &Batch<T>, targets: &Targets) -> Result<T> {
        let p = self.projected_input(batch)?;
        let (logits, _) = self.classify(&p);
        Ok(nll(&logits, targets)?.0)
    }

    /// Mean negative log-likelihood and its gradient with respect to every
    /// parameter tensor.
    pub fn loss_and_grad(&self, batch: &Batch<T>, targets: &Targets) -> Result<(T, ProbeParams<T>)> {
        let p = self.projected_input(batch)?;
        let (logits, cache) = self.classify(&p);
        let (loss, g) = nll(&logits, targets)?;
        let mut grads = self.zeros_like();
        let dp = match (&self.classifier, &mut grads.classifier) {
            (Classifier::Mlp(m), Classifier::Mlp(gm)) => {
                let (z1, h) = cache.expect("mlp caches activations");
                gm.w2 = g.t().dot(&h);
                let mut dz1 = g.dot(&m.w2);
                ndarray::Zip::from(&mut dz1).and(&z1).for_each(|d, &z| {
                    if z <= T::zero() {
                        *d = T::zero();
                    }
                });
                gm.w1 = dz1.t().dot(&p);
                dz1.dot(&m.w1)
            }
            (Classifier::Linear(l), Classifier::Linear(gl)) => {
                gl.w = g.t().dot(&p);
                gl.b = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                g.dot(&l.w)
            }
            _ => unreachable!("gradient mirrors parameters"),
        };
        if let Some(gp) = grads.projection.as_mut() {
            match batch {
                Batch::Single(x) => *gp = dp.t().dot(x),
                Batch::Pair(h, d) => {
                    let r = gp.nrows();
                    *gp = dp.slice(s![.., ..r]).t().dot(h) + dp.slice(s![.., r..]).t().dot(d);
                }
            }
        }
        Ok((loss, grads))
    }
}

fn sigmoid<T: NdFloat>(v: T) -> T {
    T::one() / (T::one() + (-v).exp())
}

/// Numerically stable row-wise softmax, in place.
pub fn softmax_rows<T: NdFloat>(a: &mut Array2<T>) {
    for mut row in a.rows_mut() {
        let m = row.fold(T::neg_infinity(), |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - m).exp());
        let z = row.sum();
        row.mapv_inplace(|v| v / z);
    }
}

/// Loss and gradient of the mean loss with respect to the logits.
fn nll<T: NdFloat>(logits: &Array2<T>, targets: &Targets) -> Result<(T, Array2<T>)> {
    let b = logits.nrows();
    if b == 0 {
        return Err(Error::EmptyDataset("empty batch".into()));
    }
    let scale = T::from(b).unwrap();
    let mut grad = logits.clone();
    let mut total = T::zero();
    match targets {
        Targets::Classes(labels) => {
            if labels.len() != b {
                return Err(Error::Shape("label count differs from batch size".into()));
            }
            for (mut row, &y) in grad.rows_mut().into_iter().zip(labels.iter()) {
                let m = row.fold(T::neg_infinity(), |m, &v| m.max(v));
                let lse = row.fold(T::zero(), |acc, &v| acc + (v - m).exp()).ln() + m;
                total += lse - row[y];
                row.mapv_inplace(|v| (v - lse).exp());
                row[y] -= T::one();
            }
        }
        Targets::Binary(flags) => {
            if flags.len() != b || logits.ncols() != 1 {
                return Err(Error::Shape("binary targets need one score per row".into()));
            }
            for (mut row, &t) in grad.rows_mut().into_iter().zip(flags.iter()) {
                let s = row[0];
                // log(1 + e^{-|s|}) + max(s, 0) - t*s
                let softplus = (-s.abs()).exp().ln_1p() + s.max(T::zero());
                total += if t { softplus - s } else { softplus };
                row[0] = sigmoid(s) - if t { T::one() } else { T::zero() };
            }
        }
    }
    grad.mapv_inplace(|v| v / scale);
    Ok((total / scale, grad))
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax<T: PartialOrd + Copy>(row: impl IntoIterator<Item = T>) -> usize {
    let mut best = 0;
    let mut best_v: Option<T> = None;
    for (i, v) in row.into_iter().enumerate() {
        match best_v {
            Some(b) if !(v > b) => {}
            _ => {
                best = i;
                best_v = Some(v);
            }
        }
    }
    best
}
