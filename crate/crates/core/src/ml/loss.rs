//! The anchor-point loss for shape/scale networks and the parameter scaler
//! that maps sigmoid outputs onto parameter ranges.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::mlp::Loss;
use super::MlError;
use crate::dist::numeric::{normal_cdf, normal_pdf};
use crate::dist::{DistFamily, DistParams};

/// Maps sigmoid outputs `(s0, s1)` affinely onto the training range of shape
/// and scale. The Weibull scale spans orders of magnitude and is mapped in
/// log space; the lognormal "scale" is already the log-scale μ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamScaler {
    pub family: DistFamily,
    pub shape_range: (f64, f64),
    pub scale_range: (f64, f64),
    pub log_scale: bool,
}

impl ParamScaler {
    pub fn fit(family: DistFamily, params: &[DistParams]) -> Result<Self, MlError> {
        if params.is_empty() {
            return Err(MlError::TooFewExamples { needed: 1, got: 0 });
        }
        let log_scale = family == DistFamily::Weibull;
        let range = |f: &dyn Fn(&DistParams) -> f64| {
            params.iter().map(f).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(v), hi.max(v))
            })
        };
        let scale_range = if log_scale {
            range(&|p| p.scale.ln())
        } else {
            range(&|p| p.scale)
        };
        Ok(ParamScaler {
            family,
            shape_range: range(&|p| p.shape),
            scale_range,
            log_scale,
        })
    }

    pub fn decode(&self, s: [f64; 2]) -> (f64, f64) {
        let (a, b) = self.shape_range;
        let (c, d) = self.scale_range;
        let raw = c + s[1] * (d - c);
        (a + s[0] * (b - a), if self.log_scale { raw.exp() } else { raw })
    }

    /// `(d shape / d s0, d scale / d s1)`.
    fn decode_grad(&self, s: [f64; 2]) -> (f64, f64) {
        let (a, b) = self.shape_range;
        let (c, d) = self.scale_range;
        let ds = if self.log_scale {
            self.decode(s).1 * (d - c)
        } else {
            d - c
        };
        (b - a, ds)
    }
}

/// CDF of the unshifted family at `x`, with `scale` = λ (Weibull) or μ (lognormal),
/// plus its partial derivatives in shape and scale.
fn cdf_with_grad(family: DistFamily, shape: f64, scale: f64, x: f64) -> (f64, f64, f64) {
    if x <= 0.0 {
        return (0.0, 0.0, 0.0);
    }
    match family {
        DistFamily::Lognormal => {
            let z = (x.ln() - scale) / shape;
            let phi = normal_pdf(z);
            (normal_cdf(z), -phi * z / shape, -phi / shape)
        }
        _ => {
            let r = x / scale;
            let u = r.powf(shape);
            let e = (-u).exp();
            (1.0 - e, e * u * r.ln(), -e * u * shape / scale)
        }
    }
}

pub fn family_cdf(family: DistFamily, shape: f64, scale: f64, x: f64) -> f64 {
    cdf_with_grad(family, shape, scale, x).0
}

/// `|F - empirical| + |shape - predicted shape|` for an already evaluated `F`.
pub fn anchor_loss_value(f_pred: f64, empirical: f64, label_shape: f64, pred_shape: f64) -> f64 {
    (f_pred - empirical).abs() + (label_shape - pred_shape).abs()
}

/// The anchor loss at one observed runtime `anchor_x` (location already
/// subtracted) with empirical cumulative probability `anchor_prob`.
pub fn anchor_loss(
    pred_shape: f64,
    pred_scale: f64,
    label_shape: f64,
    anchor_x: f64,
    anchor_prob: f64,
    family: DistFamily,
) -> f64 {
    let f = family_cdf(family, pred_shape, pred_scale, anchor_x);
    anchor_loss_value(f, anchor_prob, label_shape, pred_shape)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnchorTarget {
    pub anchor_x: f64,
    pub anchor_prob: f64,
    pub label_shape: f64,
}

/// Batch mean of [`anchor_loss`] over decoded sigmoid outputs.
pub struct AnchorLoss {
    pub scaler: ParamScaler,
    pub targets: Vec<AnchorTarget>,
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

impl Loss for AnchorLoss {
    fn eval(&self, out: &Array2<f64>, rows: &[usize]) -> (f64, Array2<f64>) {
        let n = rows.len() as f64;
        let mut g = Array2::zeros(out.raw_dim());
        let mut total = 0.0;
        for (i, &r) in rows.iter().enumerate() {
            let t = &self.targets[r];
            let s = [out[[i, 0]], out[[i, 1]]];
            let (shape, scale) = self.scaler.decode(s);
            let (f, df_shape, df_scale) =
                cdf_with_grad(self.scaler.family, shape, scale, t.anchor_x);
            total += anchor_loss_value(f, t.anchor_prob, t.label_shape, shape);
            let sf = sign(f - t.anchor_prob);
            let d_shape = sf * df_shape - sign(t.label_shape - shape);
            let d_scale = sf * df_scale;
            let (j0, j1) = self.scaler.decode_grad(s);
            g[[i, 0]] = d_shape * j0 / n;
            g[[i, 1]] = d_scale * j1 / n;
        }
        (total / n, g)
    }
}
