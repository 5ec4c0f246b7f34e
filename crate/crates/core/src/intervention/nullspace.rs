// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::Path;

use nalgebra::DMatrix;
use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::container::{self, MAGIC_PROJECTOR};
use crate::error::{Error, Result};
use crate::linalg::{row_space_basis, to_array, to_dmatrix, RANK_CUTOFF};
use crate::manifest::RunManifest;
use crate::probe::Projection;
use crate::repr::ReprMatrix;

/// A linear map that removes the span of an orthonormal basis.
pub trait Ablation {
    /// Removed directions, one orthonormal `D`-vector per row.
    fn removed_basis(&self) -> &Array2<f64>;

    fn width(&self) -> usize {
        self.removed_basis().ncols()
    }

    /// Rank of the projector, `D - removed`.
    fn kept_rank(&self) -> usize {
        self.width() - self.removed_basis().nrows()
    }

    /// Dense `D x D` projector `I - BᵀB`.
    fn matrix(&self) -> Array2<f64> {
        let b = self.removed_basis();
        Array2::eye(self.width()) - b.t().dot(b)
    }

    /// Project every row of `vectors`.
    fn apply_rows(&self, vectors: ArrayView2<f64>) -> Result<Array2<f64>> {
        if vectors.ncols() != self.width() {
            return Err(Error::Shape(format!(
                "projector width {} does not match vectors of width {}",
                self.width(),
                vectors.ncols()
            )));
        }
        let b = self.removed_basis();
        let coords = vectors.dot(&b.t());
        Ok(&vectors - &coords.dot(b))
    }

    /// Project a representation matrix, computing in `f64`.
    fn apply(&self, reprs: &ReprMatrix) -> Result<ReprMatrix> {
        let mut out = Array2::<f32>::zeros(reprs.data().raw_dim());
        for (src, mut dst) in reprs
            .data()
            .axis_chunks_iter(Axis(0), 4096)
            .zip(out.axis_chunks_iter_mut(Axis(0), 4096))
        {
            let projected = self.apply_rows(src.mapv(f64::from).view())?;
            dst.assign(&projected.mapv(|v| v as f32));
        }
        ReprMatrix::new(out, reprs.model_id.clone(), reprs.layer)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NullspaceProjector {
    /// Rows of the projection it was built from.
    pub source_rank: usize,
    /// Singular directions above the cutoff.
    pub effective_rank: usize,
    pub cutoff: f64,
    pub singular_values: Vec<f64>,
    basis: Array2<f64>,
    pub manifest: Option<RunManifest>,
}

impl Ablation for NullspaceProjector {
    fn removed_basis(&self) -> &Array2<f64> {
        &self.basis
    }
}

/// `N = I - VVᵀ`, with `V` the right singular vectors of `Π` whose
/// singular values exceed `1e-8 * sigma_max`: these span the row space of
/// `Π`, so `N Πᵀ = 0`.
pub fn nullspace_projector(proj: &Projection) -> NullspaceProjector {
    let (basis, singular_values) = row_space_basis(&to_dmatrix(proj.matrix()), RANK_CUTOFF);
    NullspaceProjector {
        source_rank: proj.rank(),
        effective_rank: basis.nrows(),
        cutoff: RANK_CUTOFF,
        singular_values,
        basis: to_array(&basis),
        manifest: None,
    }
}

impl NullspaceProjector {
    /// Projector that removes nothing.
    pub fn identity(width: usize) -> Self {
        NullspaceProjector {
            source_rank: 0,
            effective_rank: 0,
            cutoff: RANK_CUTOFF,
            singular_values: Vec::new(),
            basis: Array2::zeros((0, width)),
            manifest: None,
        }
    }

    /// Projector removing the row space of an arbitrary `f64` matrix.
    pub fn from_rows(rows: &DMatrix<f64>) -> Self {
        let (basis, singular_values) = row_space_basis(rows, RANK_CUTOFF);
        NullspaceProjector {
            source_rank: rows.nrows(),
            effective_rank: basis.nrows(),
            cutoff: RANK_CUTOFF,
            singular_values,
            basis: to_array(&basis),
            manifest: None,
        }
    }

    pub fn is_rank_deficient(&self) -> bool {
        self.effective_rank < self.source_rank
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let header = ProjectorHeader {
            kind: "nullspace".into(),
            width: self.width(),
            source_rank: self.source_rank,
            effective_rank: self.effective_rank,
            cutoff: self.cutoff,
            singular_values: self.singular_values.clone(),
            manifest: self.manifest.clone(),
        };
        let payload: Vec<f32> = self.matrix().iter().map(|v| *v as f32).collect();
        container::write(path, MAGIC_PROJECTOR, &header, &payload)
    }

    /// Read the stored header and dense `D x D` matrix.
    pub fn load_matrix(path: &Path) -> Result<(ProjectorHeader, Array2<f32>)> {
        let framed = container::read::<ProjectorHeader>(path, MAGIC_PROJECTOR)?;
        let w = framed.header.width;
        let values = container::floats(&framed.payload, w * w)?;
        let m = Array2::from_shape_vec((w, w), values).map_err(|e| Error::Shape(e.to_string()))?;
        Ok((framed.header, m))
    }
}

/// Header of a stored projector file; the payload is the dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectorHeader {
    pub kind: String,
    pub width: usize,
    pub source_rank: usize,
    pub effective_rank: usize,
    pub cutoff: f64,
    pub singular_values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<RunManifest>,
}
