// SPDX-License-Identifier: MIT OR Apache-2.0

//! Token representation matrices and their on-disk format.

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::container::{self, MAGIC_REPRS};
use crate::error::{Error, Result};

/// Header of a representation file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReprHeader {
    pub n: usize,
    #[serde(rename = "D")]
    pub dim: usize,
    pub model_id: String,
    pub layer: u32,
    pub dtype: String,
    pub layout: String,
}

/// An `n x D` matrix of token representations, one row per token.
#[derive(Debug, Clone, PartialEq)]
pub struct ReprMatrix {
    data: Array2<f32>,
    pub model_id: String,
    pub layer: u32,
}

impl ReprMatrix {
    pub fn new(data: Array2<f32>, model_id: impl Into<String>, layer: u32) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::Shape(format!(
                "representation matrix must be non-empty, got {}x{}",
                data.nrows(),
                data.ncols()
            )));
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(ReprMatrix {
            data: data.as_standard_layout().into_owned(),
            model_id: model_id.into(),
            layer,
        })
    }

    pub fn data(&self) -> &Array2<f32> {
        &self.data
    }

    pub fn token_count(&self) -> usize {
        self.data.nrows()
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn header(&self) -> ReprHeader {
        ReprHeader {
            n: self.token_count(),
            dim: self.dim(),
            model_id: self.model_id.clone(),
            layer: self.layer,
            dtype: "f32".into(),
            layout: "row-major".into(),
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let flat = self
            .data
            .as_slice()
            .expect("representation data is kept in standard layout");
        container::encode(MAGIC_REPRS, &self.header(), flat)
    }

    pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<Self> {
        let framed = container::decode::<ReprHeader>(bytes, MAGIC_REPRS, origin)?;
        let h = framed.header;
        if h.dtype != "f32" {
            return Err(Error::MalformedHeader(format!("unsupported dtype {:?}", h.dtype)));
        }
        if h.layout != "row-major" {
            return Err(Error::MalformedHeader(format!("unsupported layout {:?}", h.layout)));
        }
        if h.n == 0 || h.dim == 0 {
            return Err(Error::MalformedHeader(format!(
                "n and D must be positive, got n={} D={}",
                h.n, h.dim
            )));
        }
        let values = container::floats(&framed.payload, h.n * h.dim)?;
        container::check_finite(&values)?;
        let data = Array2::from_shape_vec((h.n, h.dim), values)
            .map_err(|e| Error::Shape(e.to_string()))?;
        Ok(ReprMatrix {
            data,
            model_id: h.model_id,
            layer: h.layer,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    /// Multiply every row by `map` (`k x D`), giving an `n x k` matrix.
    pub fn project(&self, map: &Array2<f32>, model_id: impl Into<String>) -> Result<Self> {
        if map.ncols() != self.dim() {
            return Err(Error::Shape(format!(
                "projection expects width {}, representations have {}",
                map.ncols(),
                self.dim()
            )));
        }
        ReprMatrix::new(self.data.dot(&map.t()), model_id, self.layer)
    }
}

/// Load and validate a representation file.
pub fn load_reprs(path: &Path) -> Result<ReprMatrix> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    ReprMatrix::from_bytes(&bytes, path)
}
