// SPDX-License-Identifier: MIT OR Apache-2.0

//! Synthetic corpora with planted, verifiable low-dimensional structure.
//!
//! A latent `z` in `d_true` dimensions fixes each token's label; the
//! representation is `B z` for an orthonormal basis `B` plus Gaussian noise
//! confined to the orthogonal complement of every planted block, so the
//! planted subspace is exactly sufficient. Part of the complement noise is
//! shared by all tokens of a word type, which makes control tasks
//! learnable only from many dimensions.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Sentence, Split};
use crate::error::{Error, Result};
use crate::hierarchy::SubtaskSpec;
use crate::linalg::{principal_angles, random_orthonormal, row_space_basis, RANK_CUTOFF};
use crate::probe::Projection;
use crate::report::SubspaceReport;
use crate::repr::ReprMatrix;
use crate::task::{derive_task, TaskDataset, Which};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Encoding {
    /// Label is the argmax of `k` linear scores of `z` (cones through the
    /// origin). Needs `k > d_true`.
    Linear,
    /// Binary label given by the sign parity of the coordinates of `z`.
    NonlinearXor,
}

/// A fine feature living in the first `d_fine` latent coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NestedSpec {
    pub d_fine: usize,
    /// Number of fine tags; tokens outside the fine group get coarse tags
    /// determined by the remaining coordinates.
    pub k_fine: usize,
}

/// A second, independent feature planted orthogonally to the first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairSpec {
    pub d_b: usize,
    pub k_b: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantSpec {
    pub dim: usize,
    pub n: usize,
    pub d_true: usize,
    pub k: usize,
    pub encoding: Encoding,
    pub noise: f64,
    /// Neuron indices the planted basis is restricted to.
    pub axis_support: Option<Vec<usize>>,
    pub nested: Option<NestedSpec>,
    pub orthogonal_pair: Option<PairSpec>,
    pub type_vocab_size: usize,
    pub zipf_exponent: f64,
    /// Fraction of complement noise variance shared by a word type.
    pub type_share: f64,
    /// Added to the score of tag `T0` in the linear rule; positive values
    /// make it the clear majority class.
    pub majority_offset: f64,
    pub sentence_len: (usize, usize),
    pub seed: u64,
}

impl Default for PlantSpec {
    fn default() -> Self {
        PlantSpec {
            dim: 64,
            n: 20_000,
            d_true: 3,
            k: 10,
            encoding: Encoding::Linear,
            noise: 0.1,
            axis_support: None,
            nested: None,
            orthogonal_pair: None,
            type_vocab_size: 5_000,
            zipf_exponent: 1.1,
            type_share: 0.9,
            majority_offset: 0.0,
            sentence_len: (8, 24),
            seed: 0,
        }
    }
}

impl PlantSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InfeasiblePlant(m));
        if self.dim == 0 || self.n == 0 || self.d_true == 0 {
            return bad("D, n and d_true must be positive".into());
        }
        let extra = self.orthogonal_pair.map_or(0, |p| p.d_b);
        if self.d_true + extra > self.dim {
            return bad(format!(
                "planted dimensions {} exceed D = {}",
                self.d_true + extra,
                self.dim
            ));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return bad("noise scale must be finite and non-negative".into());
        }
        if !self.majority_offset.is_finite() {
            return bad("majority offset must be finite".into());
        }
        if !(0.0..=1.0).contains(&self.type_share) {
            return bad("type_share must lie in [0, 1]".into());
        }
        if self.type_vocab_size == 0 || self.zipf_exponent <= 0.0 {
            return bad("type vocabulary needs a positive size and exponent".into());
        }
        let (lo, hi) = self.sentence_len;
        if lo == 0 || lo > hi {
            return bad(format!("bad sentence length range {lo}..={hi}"));
        }
        match self.encoding {
            Encoding::NonlinearXor => {
                if self.k != 2 {
                    return bad("xor encoding has exactly two labels".into());
                }
                if self.nested.is_some() {
                    return bad("nested features require linear encoding".into());
                }
            }
            Encoding::Linear => match self.nested {
                None if self.k <= self.d_true => {
                    return bad(format!(
                        "linear encoding needs k > d_true to use every planted dimension (k={}, d_true={})",
                        self.k, self.d_true
                    ))
                }
                None => {}
                Some(n) => {
                    if n.d_fine == 0 || n.d_fine >= self.d_true {
                        return bad(format!(
                            "d_fine = {} must lie in 1..d_true = {}",
                            n.d_fine, self.d_true
                        ));
                    }
                    if n.k_fine < n.d_fine {
                        return bad("fine feature needs k_fine >= d_fine".into());
                    }
                    let rest_tags = self.k.saturating_sub(n.k_fine);
                    if rest_tags <= self.d_true - n.d_fine {
                        return bad(format!(
                            "{} coarse-only tags cannot use {} remaining dimensions",
                            rest_tags,
                            self.d_true - n.d_fine
                        ));
                    }
                }
            },
        }
        if let Some(p) = self.orthogonal_pair {
            if p.d_b == 0 || p.k_b <= p.d_b {
                return bad("second feature needs 0 < d_b < k_b".into());
            }
        }
        if let Some(s) = &self.axis_support {
            let mut sorted = s.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != s.len() || s.iter().any(|&j| j >= self.dim) {
                return bad("axis support must be distinct indices below D".into());
            }
            if s.len() < self.d_true + extra {
                return bad(format!(
                    "support of {} neurons cannot hold {} planted dimensions",
                    s.len(),
                    self.d_true + extra
                ));
            }
        }
        Ok(())
    }
}

/// How labels are computed from latents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LabelRule {
    /// `tag = prefix + argmax(frame * z + offset * e_0)`.
    Cones {
        frame: Vec<Vec<f64>>,
        prefix: String,
        #[serde(default)]
        offset: f64,
    },
    Xor,
    /// Fine cones on the first `d_fine` coordinates; cone 0 falls through
    /// to the coarse cones on the remaining coordinates.
    Nested {
        d_fine: usize,
        fine_frame: Vec<Vec<f64>>,
        rest_frame: Vec<Vec<f64>>,
    },
}

fn apply_frame(frame: &[Vec<f64>], z: &[f64], offset: f64) -> usize {
    let scores = frame.iter().enumerate().map(|(i, row)| {
        let s: f64 = row.iter().zip(z).map(|(a, b)| a * b).sum();
        if i == 0 {
            s + offset
        } else {
            s
        }
    });
    crate::probe::argmax(scores)
}

impl LabelRule {
    pub fn label(&self, z: &[f64]) -> String {
        match self {
            LabelRule::Cones { frame, prefix, offset } => format!("{prefix}{}", apply_frame(frame, z, *offset)),
            LabelRule::Xor => {
                let negatives = z.iter().filter(|v| **v < 0.0).count();
                format!("X{}", negatives % 2)
            }
            LabelRule::Nested {
                d_fine,
                fine_frame,
                rest_frame,
            } => match apply_frame(fine_frame, &z[..*d_fine], 0.0) {
                0 => format!("C{}", apply_frame(rest_frame, &z[*d_fine..], 0.0)),
                f => format!("F{f}"),
            },
        }
    }
}

/// Everything needed to check a discovered subspace against the plant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub spec: PlantSpec,
    /// Orthonormal basis of the main feature, one `D`-vector per row.
    pub basis: Vec<Vec<f64>>,
    pub basis_b: Option<Vec<Vec<f64>>>,
    pub rule: LabelRule,
    pub rule_b: Option<LabelRule>,
    pub latents: Vec<Vec<f64>>,
    pub latents_b: Option<Vec<Vec<f64>>>,
    pub labels: Vec<String>,
    pub labels_b: Option<Vec<String>>,
    /// Tags kept by the fine subtask of a nested plant.
    pub fine_tags: Option<Vec<String>>,
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub fn matrix_of(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let cols = rows.first().map_or(0, |r| r.len());
    DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j])
}

impl GroundTruth {
    /// Re-apply the stored rules to the stored latents.
    pub fn relabel(&self) -> (Vec<String>, Option<Vec<String>>) {
        let a = self.latents.iter().map(|z| self.rule.label(z)).collect();
        let b = match (&self.rule_b, &self.latents_b) {
            (Some(rule), Some(zs)) => Some(zs.iter().map(|z| rule.label(z)).collect()),
            _ => None,
        };
        (a, b)
    }

    pub fn basis_matrix(&self) -> DMatrix<f64> {
        matrix_of(&self.basis)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = serde_json::to_vec(self)?;
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_slice(&bytes)?)
    }

    /// Subtask keeping the fine tags of a nested plant.
    pub fn fine_subtask(&self) -> Option<SubtaskSpec> {
        self.fine_tags.as_ref().map(|tags| SubtaskSpec {
            name: "fine".into(),
            keep_tags: tags.clone(),
            collapse_label: "N/A".into(),
        })
    }
}

pub struct SynthOutput {
    pub reprs: ReprMatrix,
    pub corpus: Corpus,
    pub truth: GroundTruth,
}

impl SynthOutput {
    /// The planted feature as a single-token task.
    pub fn task(&self) -> Result<TaskDataset> {
        derive_task(&self.corpus, Which::Pos)
    }

    /// The orthogonally planted second feature, if any.
    pub fn task_b(&self) -> Result<Option<TaskDataset>> {
        match &self.truth.labels_b {
            Some(labels) => Ok(Some(TaskDataset::from_token_labels("feature-b", &self.corpus, labels)?)),
            None => Ok(None),
        }
    }
}

/// `k x d` frame with orthonormal columns orthogonal to the all-ones
/// vector, so every latent direction matters equally to the argmax.
fn centered_frame(rng: &mut ChaCha8Rng, k: usize, d: usize) -> DMatrix<f64> {
    let mut g = DMatrix::from_fn(k, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    for mut col in g.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
    }
    g.qr().q().columns(0, d).into_owned()
}

fn zipf_cdf(size: usize, exponent: f64) -> Vec<f64> {
    let mut acc = 0.0;
    let mut cdf: Vec<f64> = (1..=size)
        .map(|r| {
            acc += (r as f64).powf(-exponent);
            acc
        })
        .collect();
    for v in &mut cdf {
        *v /= acc;
    }
    cdf
}

fn random_tree(rng: &mut ChaCha8Rng, len: usize) -> Vec<i64> {
    let mut order: Vec<usize> = (0..len).collect();
    for i in (1..len).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    let mut heads = vec![-1i64; len];
    for i in 1..len {
        heads[order[i]] = order[rng.random_range(0..i)] as i64;
    }
    heads
}

fn gaussian_rows(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..d).map(|_| rng.sample(StandardNormal)).collect())
        .collect()
}

/// Draw a corpus, representation matrix and ground truth from `spec`.
pub fn generate(spec: &PlantSpec) -> Result<SynthOutput> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let dim = spec.dim;
    let d_b = spec.orthogonal_pair.map_or(0, |p| p.d_b);
    let planted = spec.d_true + d_b;

    // one QR for all blocks keeps them mutually orthogonal
    let q = match &spec.axis_support {
        Some(support) => {
            let local = random_orthonormal(&mut rng, support.len(), planted);
            let mut q = DMatrix::zeros(dim, planted);
            for (r, &j) in support.iter().enumerate() {
                q.set_row(j, &local.row(r));
            }
            q
        }
        None => random_orthonormal(&mut rng, dim, planted),
    };
    let basis_a = q.columns(0, spec.d_true).into_owned();
    let basis_b = (d_b > 0).then(|| q.columns(spec.d_true, d_b).into_owned());

    let rule = match (spec.encoding, spec.nested) {
        (Encoding::NonlinearXor, _) => LabelRule::Xor,
        (Encoding::Linear, None) => LabelRule::Cones {
            frame: rows_of(&centered_frame(&mut rng, spec.k, spec.d_true)),
            prefix: "T".into(),
            offset: spec.majority_offset,
        },
        (Encoding::Linear, Some(n)) => LabelRule::Nested {
            d_fine: n.d_fine,
            fine_frame: rows_of(&centered_frame(&mut rng, n.k_fine + 1, n.d_fine)),
            rest_frame: rows_of(&centered_frame(&mut rng, spec.k - n.k_fine, spec.d_true - n.d_fine)),
        },
    };
    let rule_b = spec.orthogonal_pair.map(|p| LabelRule::Cones {
        frame: rows_of(&centered_frame(&mut rng, p.k_b, p.d_b)),
        prefix: "B".into(),
        offset: 0.0,
    });

    // sentence lengths, splits and word types
    let cdf = zipf_cdf(spec.type_vocab_size, spec.zipf_exponent);
    let mut sentences = Vec::new();
    let mut type_ids = Vec::with_capacity(spec.n);
    let mut remaining = spec.n;
    while remaining > 0 {
        let len = rng
            .random_range(spec.sentence_len.0..=spec.sentence_len.1)
            .min(remaining);
        let u: f64 = rng.random();
        let split = if u < 0.8 {
            Split::Train
        } else if u < 0.9 {
            Split::Dev
        } else {
            Split::Test
        };
        let mut tokens = Vec::with_capacity(len);
        for _ in 0..len {
            let u: f64 = rng.random();
            let t = cdf.partition_point(|&c| c < u).min(spec.type_vocab_size - 1);
            type_ids.push(t);
            tokens.push(format!("w{}", t + 1));
        }
        let heads = random_tree(&mut rng, len);
        sentences.push((tokens, heads, split));
        remaining -= len;
    }

    let latents = gaussian_rows(&mut rng, spec.n, spec.d_true);
    let latents_b = basis_b.as_ref().map(|_| gaussian_rows(&mut rng, spec.n, d_b));
    let labels: Vec<String> = latents.iter().map(|z| rule.label(z)).collect();
    let labels_b: Option<Vec<String>> = match (&rule_b, &latents_b) {
        (Some(r), Some(zs)) => Some(zs.iter().map(|z| r.label(z)).collect()),
        _ => None,
    };

    // representation rows
    let type_vectors: Vec<DVector<f64>> = (0..spec.type_vocab_size)
        .map(|_| DVector::from_fn(dim, |_, _| rng.sample(StandardNormal)))
        .collect();
    let shared = spec.type_share.sqrt();
    let private = (1.0 - spec.type_share).sqrt();
    let mut data = Array2::<f32>::zeros((spec.n, dim));
    for g in 0..spec.n {
        let eps = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let u = &type_vectors[type_ids[g]] * shared + eps * private;
        let noise = &u - &q * (q.transpose() * &u);
        let mut r = noise * spec.noise + &basis_a * DVector::from_column_slice(&latents[g]);
        if let (Some(bb), Some(zb)) = (&basis_b, &latents_b) {
            r += bb * DVector::from_column_slice(&zb[g]);
        }
        for j in 0..dim {
            data[[g, j]] = r[j] as f32;
        }
    }

    let mut at = 0;
    let corpus_sentences = sentences
        .into_iter()
        .map(|(tokens, heads, split)| {
            let len = tokens.len();
            let pos: Vec<String> = labels[at..at + len].to_vec();
            at += len;
            Sentence {
                deprels: pos.iter().map(|p| format!("r{p}")).collect(),
                tokens,
                pos,
                heads,
                split,
                offset: None,
            }
        })
        .collect();
    let corpus = Corpus::new(corpus_sentences)?;
    let reprs = ReprMatrix::new(data, format!("synth-d{}-seed{}", spec.d_true, spec.seed), 0)?;

    let fine_tags = spec
        .nested
        .map(|n| (1..=n.k_fine).map(|f| format!("F{f}")).collect());
    let truth = GroundTruth {
        spec: spec.clone(),
        basis: rows_of(&basis_a.transpose()),
        basis_b: basis_b.map(|b| rows_of(&b.transpose())),
        rule,
        rule_b,
        latents,
        latents_b,
        labels,
        labels_b,
        fine_tags,
    };
    Ok(SynthOutput { reprs, corpus, truth })
}

/// Comparison of a discovered subspace against the planted one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Principal angles in degrees, ascending.
    pub principal_angles_deg: Vec<f64>,
    /// `d* - d_true`, when a report was supplied.
    pub rank_error: Option<i64>,
}

/// Principal angles between the row space of `projection` and the planted
/// basis.
pub fn verify_projection(truth: &GroundTruth, projection: &Projection) -> Result<Diagnostics> {
    if projection.input_width() != truth.spec.dim {
        return Err(Error::Shape(format!(
            "projection width {} differs from planted D = {}",
            projection.input_width(),
            truth.spec.dim
        )));
    }
    let (found, _) = row_space_basis(&crate::linalg::to_dmatrix(projection.matrix()), RANK_CUTOFF);
    let angles = principal_angles(&found, &truth.basis_matrix());
    Ok(Diagnostics {
        principal_angles_deg: angles.iter().map(|a| a.to_degrees()).collect(),
        rank_error: None,
    })
}

/// Rank error of a sweep report, plus principal angles when it stores a
/// projection.
pub fn verify_report(truth: &GroundTruth, report: &SubspaceReport) -> Result<Diagnostics> {
    if report.repr_width != truth.spec.dim {
        return Err(Error::Shape(format!(
            "report width {} differs from planted D = {}",
            report.repr_width, truth.spec.dim
        )));
    }
    let mut diag = match &report.projection {
        Some(p) => verify_projection(truth, p)?,
        None => Diagnostics {
            principal_angles_deg: Vec::new(),
            rank_error: None,
        },
    };
    diag.rank_error = Some(report.selected_rank as i64 - truth.spec.d_true as i64);
    Ok(diag)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(spec: PlantSpec) -> PlantSpec {
        PlantSpec {
            n: 2_000,
            dim: 16,
            type_vocab_size: 200,
            ..spec
        }
    }

    #[test]
    fn infeasible_specs_rejected() {
        let nested = PlantSpec {
            d_true: 3,
            nested: Some(NestedSpec { d_fine: 4, k_fine: 5 }),
            ..PlantSpec::default()
        };
        assert!(matches!(generate(&nested), Err(Error::InfeasiblePlant(_))));
        let xor = PlantSpec {
            encoding: Encoding::NonlinearXor,
            k: 3,
            ..PlantSpec::default()
        };
        assert!(xor.validate().is_err());
        let support = PlantSpec {
            d_true: 3,
            axis_support: Some(vec![0, 1]),
            ..PlantSpec::default()
        };
        assert!(support.validate().is_err());
    }

    #[test]
    fn labels_reconstruct_from_latents() {
        let out = generate(&small(PlantSpec {
            orthogonal_pair: Some(PairSpec { d_b: 2, k_b: 4 }),
            ..PlantSpec::default()
        }))
        .unwrap();
        let (a, b) = out.truth.relabel();
        assert_eq!(a, out.truth.labels);
        assert_eq!(b, out.truth.labels_b);
        let corpus_labels: Vec<String> = out
            .corpus
            .sentences()
            .iter()
            .flat_map(|s| s.pos.iter().cloned())
            .collect();
        assert_eq!(corpus_labels, a);
    }

    #[test]
    fn planted_blocks_orthogonal() {
        let out = generate(&small(PlantSpec {
            d_true: 3,
            orthogonal_pair: Some(PairSpec { d_b: 4, k_b: 6 }),
            ..PlantSpec::default()
        }))
        .unwrap();
        let a = out.truth.basis_matrix();
        let b = matrix_of(out.truth.basis_b.as_ref().unwrap());
        assert!((&a * b.transpose()).abs().max() < 1e-12);
    }

    #[test]
    fn noise_stays_in_complement() {
        let out = generate(&small(PlantSpec::default())).unwrap();
        let basis = out.truth.basis_matrix();
        for g in [0, 17, 1999] {
            let r = DVector::from_iterator(16, out.reprs.data().row(g).iter().map(|v| f64::from(*v)));
            let coords = &basis * &r;
            for (c, z) in coords.iter().zip(&out.truth.latents[g]) {
                assert!((c - z).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let a = generate(&small(PlantSpec::default())).unwrap();
        let b = generate(&small(PlantSpec::default())).unwrap();
        assert_eq!(a.reprs, b.reprs);
        assert_eq!(a.corpus, b.corpus);
        let c = generate(&small(PlantSpec {
            seed: 1,
            ..PlantSpec::default()
        }))
        .unwrap();
        assert_ne!(a.reprs, c.reprs);
    }

    #[test]
    fn axis_support_respected() {
        let out = generate(&small(PlantSpec {
            d_true: 3,
            axis_support: Some(vec![2, 5, 11]),
            ..PlantSpec::default()
        }))
        .unwrap();
        for row in &out.truth.basis {
            for (j, v) in row.iter().enumerate() {
                if ![2, 5, 11].contains(&j) {
                    assert_eq!(*v, 0.0);
                }
            }
        }
    }

    #[test]
    fn noiseless_rank_one_threshold() {
        let out = generate(&small(PlantSpec {
            d_true: 1,
            k: 2,
            noise: 0.0,
            ..PlantSpec::default()
        }))
        .unwrap();
        // projecting on the planted direction separates the labels by sign
        let basis = out.truth.basis_matrix();
        let mut sign_of = std::collections::HashMap::new();
        for g in 0..out.reprs.token_count() {
            let r = DVector::from_iterator(16, out.reprs.data().row(g).iter().map(|v| f64::from(*v)));
            let s = (&basis * r)[0] > 0.0;
            let prev = sign_of.insert(out.truth.labels[g].clone(), s);
            assert!(prev.is_none() || prev == Some(s));
        }
    }

    #[test]
    fn identical_projection_zero_angles() {
        let out = generate(&small(PlantSpec::default())).unwrap();
        let m = out.truth.basis_matrix().map(|v| v as f32);
        let p = Projection::new(Array2::from_shape_fn((3, 16), |(i, j)| m[(i, j)])).unwrap();
        let diag = verify_projection(&out.truth, &p).unwrap();
        assert_eq!(diag.principal_angles_deg.len(), 3);
        assert!(diag.principal_angles_deg.iter().all(|a| *a < 0.1));
    }

    #[test]
    fn random_projection_nearly_orthogonal() {
        // Monte Carlo over 100 seeds: for independent 3-dim subspaces of R^64
        // the mean squared cosine per principal angle is d/D = 3/64.
        let out = generate(&PlantSpec {
            n: 50,
            type_vocab_size: 10,
            ..PlantSpec::default()
        })
        .unwrap();
        let mut mean_cos2 = 0.0;
        let mut wide = 0;
        for seed in 0..100u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let m = Array2::from_shape_simple_fn((3, 64), || rng.sample::<f32, _>(StandardNormal));
            let diag = verify_projection(&out.truth, &Projection::new(m).unwrap()).unwrap();
            mean_cos2 += diag
                .principal_angles_deg
                .iter()
                .map(|a| a.to_radians().cos().powi(2))
                .sum::<f64>()
                / 3.0;
            if diag.principal_angles_deg[0] > 45.0 {
                wide += 1;
            }
        }
        mean_cos2 /= 100.0;
        let expected = 3.0 / 64.0;
        assert!((mean_cos2 - expected).abs() < 0.25 * expected, "{mean_cos2}");
        assert!(wide >= 95, "{wide}");
    }
}
