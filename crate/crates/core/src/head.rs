//! Contrastive term, view fusion, event probability and the joint loss.

use crate::autodiff::{ParamSpec, ParamStore, Tape, Tensor};
use crate::config::check_loss_weight;
use crate::error::{Error, Result};

/// Predictions are clamped into `[PROB_EPS, 1 - PROB_EPS]` before the log loss.
pub const PROB_EPS: f64 = 1e-7;

/// `1 - cos(z_local, z_global)`, in `[0, 2]`.
pub fn contrastive_loss(tape: &mut Tape, z_local: Tensor, z_global: Tensor) -> Result<Tensor> {
    let c = tape.cosine_similarity(z_local, z_global)?;
    let neg = tape.scale(c, -1.0)?;
    let one = tape.constant(crate::autodiff::Matrix::scalar(1.0))?;
    tape.add(one, neg)
}

#[derive(Clone, Debug)]
pub struct Head {
    /// Width of each view embedding (`2h`).
    pub view_dim: usize,
    pub mlp_hidden: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct FuseWeights {
    pub w_l: Tensor,
    pub b_l: Tensor,
    pub w_g: Tensor,
    pub b_g: Tensor,
}

#[derive(Clone, Copy, Debug)]
pub struct MlpWeights {
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
}

/// `tanh([z_l·W_l + b_l ‖ z_g·W_g + b_g])`
pub fn fuse(tape: &mut Tape, z_local: Tensor, z_global: Tensor, w: &FuseWeights) -> Result<Tensor> {
    let l = tape.matmul(z_local, w.w_l)?;
    let l = tape.add_bias(l, w.b_l)?;
    let g = tape.matmul(z_global, w.w_g)?;
    let g = tape.add_bias(g, w.b_g)?;
    let cat = tape.concat_cols(l, g)?;
    tape.tanh(cat)
}

/// `sigmoid(tanh(z·W1 + b1)·W2 + b2)`, clamped away from 0 and 1.
pub fn predict(tape: &mut Tape, z_final: Tensor, w: &MlpWeights) -> Result<Tensor> {
    let a = tape.matmul(z_final, w.w1)?;
    let a = tape.add_bias(a, w.b1)?;
    let a = tape.tanh(a)?;
    let logit = tape.matmul(a, w.w2)?;
    let logit = tape.add_bias(logit, w.b2)?;
    if tape.shape(logit) != (1, 1) {
        return Err(Error::dim("predict", tape.shape(z_final), tape.shape(w.w2)));
    }
    let p = tape.sigmoid(logit)?;
    tape.clamp(p, PROB_EPS, 1.0 - PROB_EPS)
}

/// Two-term binary cross-entropy of one prediction.
pub fn supervised_loss(tape: &mut Tape, prob: Tensor, label: u8) -> Result<Tensor> {
    if label > 1 {
        return Err(Error::Numeric(format!("label {label} is not binary")));
    }
    tape.bce(prob, f64::from(label))
}

/// `λ·L_sup + (1-λ)·L_contra`; the endpoints return the single term untouched.
pub fn total_loss(tape: &mut Tape, l_sup: Tensor, l_contra: Tensor, lambda: f64) -> Result<Tensor> {
    check_loss_weight(lambda)?;
    if lambda == 1.0 {
        return Ok(l_sup);
    }
    if lambda == 0.0 {
        return Ok(l_contra);
    }
    let a = tape.scale(l_sup, lambda)?;
    let b = tape.scale(l_contra, 1.0 - lambda)?;
    tape.add(a, b)
}

impl Head {
    pub fn param_specs(&self) -> Vec<ParamSpec> {
        let (v, m) = (self.view_dim, self.mlp_hidden);
        vec![
            ParamSpec::glorot("head.w_l", v, v),
            ParamSpec::zeros("head.b_l", 1, v),
            ParamSpec::glorot("head.w_g", v, v),
            ParamSpec::zeros("head.b_g", 1, v),
            ParamSpec::glorot("head.mlp.w1", 2 * v, m),
            ParamSpec::zeros("head.mlp.b1", 1, m),
            ParamSpec::glorot("head.mlp.w2", m, 1),
            ParamSpec::zeros("head.mlp.b2", 1, 1),
        ]
    }

    /// Fused representation and clamped event probability.
    pub fn forward(
        &self,
        tape: &mut Tape,
        params: &ParamStore,
        z_local: Tensor,
        z_global: Tensor,
    ) -> Result<(Tensor, Tensor)> {
        let fw = FuseWeights {
            w_l: tape.param(params, "head.w_l")?,
            b_l: tape.param(params, "head.b_l")?,
            w_g: tape.param(params, "head.w_g")?,
            b_g: tape.param(params, "head.b_g")?,
        };
        let mw = MlpWeights {
            w1: tape.param(params, "head.mlp.w1")?,
            b1: tape.param(params, "head.mlp.b1")?,
            w2: tape.param(params, "head.mlp.w2")?,
            b2: tape.param(params, "head.mlp.b2")?,
        };
        let z_final = fuse(tape, z_local, z_global, &fw)?;
        let prob = predict(tape, z_final, &mw)?;
        Ok((z_final, prob))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{sigmoid, Matrix};

    fn row(t: &mut Tape, v: &[f64]) -> Tensor {
        t.leaf(Matrix::row_vector(v)).unwrap()
    }

    #[test]
    fn contrastive_examples() {
        let mut t = Tape::new();
        let a = row(&mut t, &[1.0, 2.0, -0.5]);
        let l = contrastive_loss(&mut t, a, a).unwrap();
        assert!(t.scalar(l).unwrap().abs() < 1e-15);

        let x = row(&mut t, &[1.0, 0.0]);
        let y = row(&mut t, &[0.0, 3.0]);
        let l = contrastive_loss(&mut t, x, y).unwrap();
        assert_eq!(t.scalar(l).unwrap(), 1.0);

        let z = row(&mut t, &[-2.0, 0.0]);
        let l = contrastive_loss(&mut t, x, z).unwrap();
        assert_eq!(t.scalar(l).unwrap(), 2.0);

        let zero = row(&mut t, &[0.0, 0.0]);
        assert!(matches!(
            contrastive_loss(&mut t, x, zero),
            Err(Error::Numeric(_))
        ));
    }

    #[test]
    fn fuse_examples() {
        let mut t = Tape::new();
        let zl = row(&mut t, &[0.1, -0.2]);
        let zg = row(&mut t, &[0.05, 0.3]);
        let z = t.constant(Matrix::zeros(2, 2)).unwrap();
        let zb = t.constant(Matrix::zeros(1, 2)).unwrap();
        let w = FuseWeights {
            w_l: z,
            b_l: zb,
            w_g: z,
            b_g: zb,
        };
        let out = fuse(&mut t, zl, zg, &w).unwrap();
        assert_eq!(t.value(out), &Matrix::zeros(1, 4));

        let id = t.constant(Matrix::identity(2)).unwrap();
        let w = FuseWeights {
            w_l: id,
            w_g: id,
            ..w
        };
        let out = fuse(&mut t, zl, zg, &w).unwrap();
        let expected: Vec<f64> = [0.1f64, -0.2, 0.05, 0.3].iter().map(|v| v.tanh()).collect();
        assert_eq!(t.value(out).data(), expected.as_slice());

        // Swapping the inputs and the weight pairs permutes the halves.
        let a = t
            .constant(Matrix::from_rows(&[[0.3, 0.1], [-0.4, 0.2]]))
            .unwrap();
        let b = t
            .constant(Matrix::from_rows(&[[0.7, -0.1], [0.0, 0.5]]))
            .unwrap();
        let w1 = FuseWeights {
            w_l: a,
            w_g: b,
            ..w
        };
        let w2 = FuseWeights {
            w_l: b,
            w_g: a,
            ..w
        };
        let o1 = fuse(&mut t, zl, zg, &w1).unwrap();
        let o2 = fuse(&mut t, zg, zl, &w2).unwrap();
        let (v1, v2) = (t.value(o1).data(), t.value(o2).data());
        assert_eq!(&v1[..2], &v2[2..]);
        assert_eq!(&v1[2..], &v2[..2]);
    }

    #[test]
    fn predict_examples() {
        let mut t = Tape::new();
        let z = row(&mut t, &[0.4]);
        let zero = t.constant(Matrix::zeros(1, 1)).unwrap();
        let w = MlpWeights {
            w1: zero,
            b1: zero,
            w2: zero,
            b2: zero,
        };
        let p = predict(&mut t, z, &w).unwrap();
        assert_eq!(t.scalar(p).unwrap(), 0.5);

        let one = t.constant(Matrix::scalar(1.0)).unwrap();
        let w = MlpWeights {
            w1: one,
            w2: one,
            ..w
        };
        let p = predict(&mut t, z, &w).unwrap();
        assert!((t.scalar(p).unwrap() - sigmoid(0.4f64.tanh())).abs() < 1e-15);

        let big = t.constant(Matrix::scalar(1e4)).unwrap();
        let w = MlpWeights { b2: big, ..w };
        let p = predict(&mut t, z, &w).unwrap();
        assert_eq!(t.scalar(p).unwrap(), 1.0 - PROB_EPS);
    }

    #[test]
    fn supervised_examples() {
        let mut t = Tape::new();
        let half = t.leaf(Matrix::scalar(0.5)).unwrap();
        let l1 = supervised_loss(&mut t, half, 1).unwrap();
        let l0 = supervised_loss(&mut t, half, 0).unwrap();
        assert!((t.scalar(l1).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((t.scalar(l0).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((t.scalar(l1).unwrap() - 0.6931).abs() < 1e-4);

        let near = t.leaf(Matrix::scalar(1.0 - PROB_EPS)).unwrap();
        let l = supervised_loss(&mut t, near, 1).unwrap();
        assert!(t.scalar(l).unwrap() < 1e-6);

        let bad = t.leaf(Matrix::scalar(1.0)).unwrap();
        assert!(matches!(
            supervised_loss(&mut t, bad, 1),
            Err(Error::Numeric(_))
        ));
        assert!(supervised_loss(&mut t, half, 2).is_err());
    }

    #[test]
    fn total_loss_examples() {
        let mut t = Tape::new();
        let s = t.leaf(Matrix::scalar(0.6931)).unwrap();
        let c = t.leaf(Matrix::scalar(1.0)).unwrap();
        assert_eq!(total_loss(&mut t, s, c, 1.0).unwrap(), s);
        assert_eq!(total_loss(&mut t, s, c, 0.0).unwrap(), c);
        let l = total_loss(&mut t, s, c, 0.5).unwrap();
        assert!((t.scalar(l).unwrap() - 0.84655).abs() < 1e-12);
        assert!(matches!(
            total_loss(&mut t, s, c, 1.5),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            total_loss(&mut t, s, c, -0.1),
            Err(Error::Config(_))
        ));
    }
}
