use crate::datamodel::Matrix;
use crate::error::{Error, Result};
use crate::scalar::{self, Scalar};

/// In-batch image/text pairs; row i of `visual` matches row i of `textual`.
#[derive(Debug, Clone)]
pub struct BatchEmbeddings<S> {
    pub visual: Matrix<S>,
    pub textual: Matrix<S>,
    pub tau: S,
}

impl<S: Scalar> BatchEmbeddings<S> {
    pub fn new(visual: Matrix<S>, textual: Matrix<S>, tau: S) -> Result<Self> {
        if visual.rows() == 0 || visual.rows() != textual.rows() {
            return Err(Error::invalid(format!(
                "batch needs matching non-empty sides, got {} visual and {} textual rows",
                visual.rows(),
                textual.rows()
            )));
        }
        if visual.dim() != textual.dim() {
            return Err(Error::DimensionMismatch {
                expected: visual.dim(),
                found: textual.dim(),
            });
        }
        if !tau.is_finite() || tau <= S::zero() {
            return Err(Error::invalid(format!("temperature must be positive, got {tau}")));
        }
        visual.check_rows()?;
        textual.check_rows()?;
        Ok(Self { visual, textual, tau })
    }

    pub fn len(&self) -> usize {
        self.visual.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone)]
pub struct ItcOutput<S> {
    pub loss: S,
    pub grad_visual: Matrix<S>,
    pub grad_textual: Matrix<S>,
    pub grad_tau: S,
}

/// Row-wise softmax of a row-major `n x n` matrix, max-subtracted.
pub fn softmax_rows<S: Scalar>(logits: &[S], n: usize) -> Vec<S> {
    let mut out = vec![S::zero(); n * n];
    for i in 0..n {
        let row = &logits[i * n..(i + 1) * n];
        let max = row.iter().copied().fold(S::neg_infinity(), S::max);
        let mut total = S::zero();
        for (j, &z) in row.iter().enumerate() {
            let e = (z - max).exp();
            out[i * n + j] = e;
            total += e;
        }
        for v in &mut out[i * n..(i + 1) * n] {
            *v /= total;
        }
    }
    out
}

fn log_sum_exp<S: Scalar>(values: impl Iterator<Item = S> + Clone) -> S {
    let max = values.clone().fold(S::neg_infinity(), S::max);
    max + values.map(|v| (v - max).exp()).sum::<S>().ln()
}

fn transpose<S: Scalar>(m: &[S], n: usize) -> Vec<S> {
    let mut t = vec![S::zero(); n * n];
    for i in 0..n {
        for j in 0..n {
            t[j * n + i] = m[i * n + j];
        }
    }
    t
}

/// Symmetric contrastive loss over cosine similarities scaled by `1/tau`.
///
/// With `z_ij = cos(V_i, T_j) / tau`, the loss is the mean over i of
/// `-(log softmax_j(z_i.)_i + log softmax_j(z_.i)_i) / 2`.
pub fn itc_loss<S: Scalar>(batch: &BatchEmbeddings<S>) -> ItcOutput<S> {
    let n = batch.len();
    let d = batch.visual.dim();
    let tau = batch.tau;
    let vn: Vec<S> = batch.visual.iter_rows().map(scalar::norm).collect();
    let tn: Vec<S> = batch.textual.iter_rows().map(scalar::norm).collect();

    let mut sim = vec![S::zero(); n * n];
    for i in 0..n {
        for j in 0..n {
            sim[i * n + j] = scalar::dot(batch.visual.row(i), batch.textual.row(j)) / (vn[i] * tn[j]);
        }
    }
    let logits: Vec<S> = sim.iter().map(|&s| s / tau).collect();

    let nf = S::from(n).expect("batch size fits scalar");
    let half = S::of(0.5);
    let mut loss = S::zero();
    for i in 0..n {
        let row = logits[i * n..(i + 1) * n].iter().copied();
        let col = (0..n).map(|k| logits[k * n + i]);
        let zii = logits[i * n + i];
        loss += (log_sum_exp(row) - zii) + (log_sum_exp(col) - zii);
    }
    loss = loss * half / nf;

    let p_row = softmax_rows(&logits, n);
    let p_col = transpose(&softmax_rows(&transpose(&logits, n), n), n);

    // dL/dz_ij
    let scale = half / nf;
    let mut g_logit = vec![S::zero(); n * n];
    for i in 0..n {
        for j in 0..n {
            let delta = if i == j { S::one() } else { S::zero() };
            g_logit[i * n + j] = scale * ((p_row[i * n + j] - delta) + (p_col[i * n + j] - delta));
        }
    }

    let mut grad_tau = S::zero();
    let mut gv = vec![S::zero(); n * d];
    let mut gt = vec![S::zero(); n * d];
    for i in 0..n {
        let v = batch.visual.row(i);
        for j in 0..n {
            let t = batch.textual.row(j);
            let g_sim = g_logit[i * n + j] / tau;
            let s = sim[i * n + j];
            grad_tau -= g_sim * s / tau;
            // d cos / dv = t / (|v||t|) - s v / |v|^2, symmetrically for t
            let inv = S::one() / (vn[i] * tn[j]);
            let sv = s / (vn[i] * vn[i]);
            let st = s / (tn[j] * tn[j]);
            for k in 0..d {
                gv[i * d + k] += g_sim * (t[k] * inv - sv * v[k]);
                gt[j * d + k] += g_sim * (v[k] * inv - st * t[k]);
            }
        }
    }

    ItcOutput {
        loss,
        grad_visual: Matrix::from_flat(d, gv).expect("d >= 1"),
        grad_textual: Matrix::from_flat(d, gt).expect("d >= 1"),
        grad_tau,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn batch(v: &[Vec<f64>], t: &[Vec<f64>], tau: f64) -> BatchEmbeddings<f64> {
        BatchEmbeddings::new(Matrix::from_rows(v).unwrap(), Matrix::from_rows(t).unwrap(), tau).unwrap()
    }

    #[test]
    fn singleton_is_zero() {
        let out = itc_loss(&batch(&[vec![0.3, -1.0]], &[vec![2.0, 0.5]], 0.07));
        assert!(out.loss.abs() <= 1e-12);
    }

    #[test]
    fn identity_two_by_two() {
        let id = [vec![1.0, 0.0], vec![0.0, 1.0]];
        let out = itc_loss(&batch(&id, &id, 1.0));
        let expected = -(std::f64::consts::E / (std::f64::consts::E + 1.0)).ln();
        assert!((out.loss - expected).abs() < 1e-12);
        assert!((out.loss - 0.313262).abs() < 1e-5);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let logits = [1000.0, -3.0, 0.5, 2.0, 2.0, -700.0, 0.0, 1e-3, 5.0];
        let p = softmax_rows(&logits, 3);
        for r in p.chunks(3) {
            assert!((r.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn rejects_bad_batches() {
        let m = Matrix::from_rows(&[vec![1.0, 0.0]]).unwrap();
        assert!(BatchEmbeddings::new(m.clone(), m.clone(), 0.0).is_err());
        let three = Matrix::from_rows(&[vec![1.0, 0.0, 0.0]]).unwrap();
        assert!(BatchEmbeddings::new(m.clone(), three, 1.0).is_err());
        let zero = Matrix::from_rows(&[vec![0.0, 0.0]]).unwrap();
        assert!(BatchEmbeddings::new(m, zero, 1.0).is_err());
    }

    #[test]
    fn f32_agrees_with_f64() {
        let v = [vec![1.0, 0.2], vec![-0.3, 0.9], vec![0.5, 0.5]];
        let t = [vec![0.9, 0.1], vec![0.0, 1.0], vec![0.4, 0.7]];
        let l64 = itc_loss(&batch(&v, &t, 0.2)).loss;
        let to32 = |rows: &[Vec<f64>]| Matrix::from_rows(rows).unwrap().cast::<f32>();
        let l32 = itc_loss(&BatchEmbeddings::new(to32(&v), to32(&t), 0.2f32).unwrap()).loss;
        assert!((l64 - l32 as f64).abs() < 1e-5);
    }
}
