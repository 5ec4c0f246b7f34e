// SPDX-License-Identifier: MIT OR Apache-2.0

//! Central finite-difference check of the analytic probe gradients.

use crate::error::Result;
use crate::probe::model::{Batch, ProbeParams, Targets};

/// Relative error of one parameter tensor.
#[derive(Debug, Clone)]
pub struct TensorCheck {
    pub name: &'static str,
    /// `|analytic - numeric| / max(|analytic|, |numeric|)`, norm-wise.
    pub relative_error: f64,
    pub analytic_norm: f64,
}

/// Compare `loss_and_grad` against central differences with step `h`.
pub fn check_gradients(
    params: &ProbeParams<f64>,
    batch: &Batch<f64>,
    targets: &Targets,
    h: f64,
) -> Result<Vec<TensorCheck>> {
    let (_, analytic) = params.loss_and_grad(batch, targets)?;
    let names = params.tensor_names();
    let mut probe = params.clone();
    let mut out = Vec::new();
    for (t, name) in names.into_iter().enumerate() {
        let a = analytic.tensors()[t].clone();
        let shape = a.dim();
        let mut diff2 = 0.0;
        let mut an2 = 0.0;
        let mut num2 = 0.0;
        for i in 0..shape.0 {
            for j in 0..shape.1 {
                let orig = probe.tensors()[t][[i, j]];
                probe.tensors_mut()[t][[i, j]] = orig + h;
                let up = probe.loss(batch, targets)?;
                probe.tensors_mut()[t][[i, j]] = orig - h;
                let down = probe.loss(batch, targets)?;
                probe.tensors_mut()[t][[i, j]] = orig;
                let numeric = (up - down) / (2.0 * h);
                diff2 += (a[[i, j]] - numeric).powi(2);
                an2 += a[[i, j]].powi(2);
                num2 += numeric.powi(2);
            }
        }
        let denom = an2.sqrt().max(num2.sqrt());
        let relative_error = if denom == 0.0 { 0.0 } else { diff2.sqrt() / denom };
        out.push(TensorCheck {
            name,
            relative_error,
            analytic_norm: an2.sqrt(),
        });
    }
    Ok(out)
}
