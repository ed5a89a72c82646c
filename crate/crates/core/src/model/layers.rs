use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::numerics::{Activation, NumericsError, Tape, Tensor, Var};

/// Glorot-uniform half-width `sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

pub fn glorot<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Tensor {
    let bound = glorot_bound(rows, cols);
    let data = (0..rows * cols).map(|_| rng.random_range(-bound..=bound)).collect();
    Tensor::from_vec(rows, cols, data).expect("length matches shape")
}

/// `act(x·w + b)`.
pub fn dense(tape: &mut Tape, x: Var, w: Var, b: Var, act: Activation) -> Result<Var, NumericsError> {
    let xw = tape.matmul(x, w)?;
    let z = tape.add_row(xw, b)?;
    tape.activate(z, act)
}

/// Appends `e` (`[B, p]`) to every row of its `n`-row block of `x` (`[B·n, L]`).
pub fn tile_concat_var(tape: &mut Tape, x: Var, e: Var, n: usize) -> Result<Var, NumericsError> {
    let tiled = tape.repeat_rows(e, n)?;
    tape.concat(&[x, tiled])
}

/// `[N, L] ++ E_T` broadcast to every row, giving `[N, L + p]`.
pub fn tile_and_concat(x: &Tensor, e: &[f64]) -> Tensor {
    if e.is_empty() {
        return x.clone();
    }
    let tiled = Tensor::row_vector(e).repeat_rows(x.rows());
    Tensor::concat_cols(&[x, &tiled]).expect("row counts match")
}

/// Trainable tensors of one residual multi-graph convolution block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RmgcBlock {
    /// `[7·f_in, f_out]`.
    pub w: Tensor,
    /// `[1, f_out]`.
    pub b: Tensor,
    /// `[f_in, f_out]`, absent when `f_in == f_out`.
    pub proj: Option<Tensor>,
}

impl RmgcBlock {
    pub fn init<R: Rng + ?Sized>(f_in: usize, f_out: usize, graphs: usize, rng: &mut R) -> Self {
        let w = glorot(graphs * f_in, f_out, rng);
        let proj = (f_in != f_out).then(|| glorot(f_in, f_out, rng));
        Self {
            w,
            b: Tensor::zeros(1, f_out),
            proj,
        }
    }

    /// Stand-alone evaluation of one block on `h` (`[N, f_in]`).
    pub fn forward(&self, h: &Tensor, stack: &[Arc<Tensor>], act: Activation) -> Result<Tensor, ModelError> {
        let mut tape = Tape::new();
        let h = tape.constant(h.clone());
        let w = tape.constant(self.w.clone());
        let b = tape.constant(self.b.clone());
        let proj = self.proj.as_ref().map(|p| tape.constant(p.clone()));
        let out = rmgc_forward(&mut tape, h, w, b, proj, stack, act, None)?;
        Ok(tape.value(out).clone())
    }
}

/// `act([Ã_1 H | … | Ã_K H] · W + b) ⊙ mask + residual(H)`, where the
/// residual is `H` or `H · proj`. `H` may hold several stacked `[N, f_in]`
/// samples; each is convolved with the same graphs.
#[allow(clippy::too_many_arguments)]
pub fn rmgc_forward(
    tape: &mut Tape,
    h: Var,
    w: Var,
    b: Var,
    proj: Option<Var>,
    stack: &[Arc<Tensor>],
    act: Activation,
    mask: Option<Tensor>,
) -> Result<Var, ModelError> {
    let (_, f_in) = tape.shape(h);
    let (w_rows, f_out) = tape.shape(w);
    if w_rows != stack.len() * f_in {
        return Err(ModelError::Shape(format!(
            "RMGC weight has {w_rows} rows, expected {} graphs x {f_in} features",
            stack.len()
        )));
    }
    let parts = stack
        .iter()
        .map(|a| tape.propagate(a, h))
        .collect::<Result<Vec<_>, _>>()?;
    let z = tape.concat(&parts)?;
    let mut conv = dense(tape, z, w, b, act)?;
    if let Some(m) = mask {
        conv = tape.mask_mul(conv, m)?;
    }
    let residual = match proj {
        Some(p) => tape.matmul(h, p)?,
        None if f_in == f_out => h,
        None => {
            return Err(ModelError::Shape(format!(
                "RMGC block maps {f_in} to {f_out} features without a projection"
            )))
        }
    };
    Ok(tape.add(conv, residual)?)
}

/// Gate tensors of a recurrent cell, one `(W, U, b)` triple per gate.
pub struct GateVars {
    pub w: Var,
    pub u: Var,
    pub b: Var,
}

fn gate(tape: &mut Tape, x: Var, h: Var, g: &GateVars, act: Activation) -> Result<Var, NumericsError> {
    let xw = tape.matmul(x, g.w)?;
    let hu = tape.matmul(h, g.u)?;
    let s = tape.add(xw, hu)?;
    let s = tape.add_row(s, g.b)?;
    tape.activate(s, act)
}

/// GRU step with gates `[update, reset, candidate]`:
/// `h' = n + z ⊙ (h − n)`, `n = tanh(x W_n + (r ⊙ h) U_n + b_n)`.
pub fn gru_step(tape: &mut Tape, x: Var, h: Var, gates: &[GateVars; 3]) -> Result<Var, NumericsError> {
    let z = gate(tape, x, h, &gates[0], Activation::Sigmoid)?;
    let r = gate(tape, x, h, &gates[1], Activation::Sigmoid)?;
    let rh = tape.mul(r, h)?;
    let n = gate(tape, x, rh, &gates[2], Activation::Tanh)?;
    let d = tape.sub(h, n)?;
    let zd = tape.mul(z, d)?;
    tape.add(n, zd)
}

/// LSTM step with gates `[input, forget, output, candidate]`; returns `(h', c')`.
pub fn lstm_step(
    tape: &mut Tape,
    x: Var,
    h: Var,
    c: Var,
    gates: &[GateVars; 4],
) -> Result<(Var, Var), NumericsError> {
    let i = gate(tape, x, h, &gates[0], Activation::Sigmoid)?;
    let f = gate(tape, x, h, &gates[1], Activation::Sigmoid)?;
    let o = gate(tape, x, h, &gates[2], Activation::Sigmoid)?;
    let g = gate(tape, x, h, &gates[3], Activation::Tanh)?;
    let fc = tape.mul(f, c)?;
    let ig = tape.mul(i, g)?;
    let c2 = tape.add(fc, ig)?;
    let tc = tape.tanh(c2)?;
    let h2 = tape.mul(o, tc)?;
    Ok((h2, c2))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor {
        let data = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
        Tensor::from_vec(rows, cols, data).unwrap()
    }

    fn stochastic(n: usize, rng: &mut ChaCha8Rng) -> Arc<Tensor> {
        let mut m = random(n, n, rng).map(f64::abs);
        for r in 0..n {
            let s: f64 = m.row(r).iter().sum();
            m.row_mut(r).iter_mut().for_each(|v| *v /= s);
        }
        Arc::new(m)
    }

    /// Direct loops over the block definition.
    pub(crate) fn naive_rmgc(block: &RmgcBlock, h: &Tensor, stack: &[Arc<Tensor>], relu: bool) -> Tensor {
        let (n, f_in) = h.shape();
        let f_out = block.b.cols();
        let mut z = vec![vec![0.0; stack.len() * f_in]; n];
        for (u, a) in stack.iter().enumerate() {
            for i in 0..n {
                for f in 0..f_in {
                    let mut s = 0.0;
                    for j in 0..n {
                        s += a.get(i, j) * h.get(j, f);
                    }
                    z[i][u * f_in + f] = s;
                }
            }
        }
        let mut out = Tensor::zeros(n, f_out);
        for i in 0..n {
            for o in 0..f_out {
                let mut s = block.b.get(0, o);
                for (k, zk) in z[i].iter().enumerate() {
                    s += zk * block.w.get(k, o);
                }
                if relu {
                    s = s.max(0.0);
                }
                let res = match &block.proj {
                    Some(p) => (0..f_in).map(|f| h.get(i, f) * p.get(f, o)).sum(),
                    None => h.get(i, o),
                };
                out.set(i, o, s + res);
            }
        }
        out
    }

    #[test]
    fn rmgc_matches_naive_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for case in 0..20 {
            let n = 2 + case % 7;
            let f_in = 1 + case % 3;
            let f_out = if case % 2 == 0 { f_in } else { 1 + case % 4 };
            let stack: Vec<_> = (0..7).map(|_| stochastic(n, &mut rng)).collect();
            let mut block = RmgcBlock::init(f_in, f_out, 7, &mut rng);
            block.b = random(1, f_out, &mut rng);
            let h = random(n, f_in, &mut rng);
            let got = block.forward(&h, &stack, Activation::Relu).unwrap();
            let want = naive_rmgc(&block, &h, &stack, true);
            assert!(got.max_abs_diff(&want).unwrap() <= 1e-12, "case {case}");
        }
    }

    #[test]
    fn rmgc_residual_paths() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let stack = vec![Arc::new(Tensor::identity(3)); 7];
        let h = random(3, 2, &mut rng);
        let zeroed = RmgcBlock {
            w: Tensor::zeros(14, 2),
            b: Tensor::zeros(1, 2),
            proj: None,
        };
        assert_eq!(zeroed.forward(&h, &stack, Activation::Relu).unwrap(), h);
        // W sums the seven identical copies; zero input stays zero
        let mut sum = Tensor::zeros(14, 2);
        for u in 0..7 {
            sum.set(2 * u, 0, 1.0);
            sum.set(2 * u + 1, 1, 1.0);
        }
        let summing = RmgcBlock { w: sum, ..zeroed.clone() };
        let zero = Tensor::zeros(3, 2);
        assert_eq!(summing.forward(&zero, &stack, Activation::Identity).unwrap(), zero);
        let missing = RmgcBlock {
            w: Tensor::zeros(14, 3),
            b: Tensor::zeros(1, 3),
            proj: None,
        };
        assert!(matches!(
            missing.forward(&h, &stack, Activation::Relu),
            Err(ModelError::Shape(_))
        ));
    }

    #[test]
    fn glorot_bounds_and_determinism() {
        assert!((glorot_bound(4, 4) - 0.75f64.sqrt()).abs() < 1e-15);
        let a = glorot(4, 4, &mut ChaCha8Rng::seed_from_u64(1));
        let b = glorot(4, 4, &mut ChaCha8Rng::seed_from_u64(1));
        let c = glorot(4, 4, &mut ChaCha8Rng::seed_from_u64(2));
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.data().iter().all(|v| v.abs() <= glorot_bound(4, 4)));
    }

    #[test]
    fn tiling() {
        let x = Tensor::from_rows(&[[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]).unwrap();
        let out = tile_and_concat(&x, &[7.0, 8.0, 9.0]);
        assert_eq!(out.shape(), (3, 5));
        for r in 0..3 {
            assert_eq!(&out.row(r)[2..], &[7.0, 8.0, 9.0]);
        }
        assert_eq!(tile_and_concat(&x, &[]), x);
    }

    fn gates<const K: usize>(tape: &mut Tape, n: usize, h: usize, rng: &mut ChaCha8Rng) -> [GateVars; K] {
        std::array::from_fn(|_| GateVars {
            w: tape.param(random(n, h, rng)),
            u: tape.param(random(h, h, rng)),
            b: tape.param(Tensor::zeros(1, h)),
        })
    }

    #[test]
    fn gru_zero_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut tape = Tape::new();
        let g: [GateVars; 3] = gates(&mut tape, 5, 3, &mut rng);
        let mut h = tape.constant(Tensor::zeros(1, 3));
        for _ in 0..4 {
            let x = tape.constant(Tensor::zeros(1, 5));
            h = gru_step(&mut tape, x, h, &g).unwrap();
        }
        assert_eq!(tape.value(h), &Tensor::zeros(1, 3));
    }

    #[test]
    fn gru_scalar_recurrence_by_hand() {
        let (wz, uz, bz) = (0.5, -0.3, 0.1);
        let (wr, ur, br) = (-0.4, 0.8, 0.0);
        let (wn, un, bn) = (1.2, 0.7, -0.2);
        let xs = [0.3, -1.0, 2.0, 0.5];
        let mut tape = Tape::new();
        let s = |tape: &mut Tape, v: f64| tape.constant(Tensor::scalar(v));
        let g = [
            GateVars { w: s(&mut tape, wz), u: s(&mut tape, uz), b: s(&mut tape, bz) },
            GateVars { w: s(&mut tape, wr), u: s(&mut tape, ur), b: s(&mut tape, br) },
            GateVars { w: s(&mut tape, wn), u: s(&mut tape, un), b: s(&mut tape, bn) },
        ];
        let mut h = s(&mut tape, 0.0);
        let mut hh = 0.0f64;
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        for x in xs {
            let xv = s(&mut tape, x);
            h = gru_step(&mut tape, xv, h, &g).unwrap();
            let z = sig(wz * x + uz * hh + bz);
            let r = sig(wr * x + ur * hh + br);
            let n = (wn * x + un * (r * hh) + bn).tanh();
            hh = (1.0 - z) * n + z * hh;
        }
        assert!((tape.value(h).get(0, 0) - hh).abs() < 1e-14);
    }

    #[test]
    fn sequence_order_matters() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let xs: Vec<Tensor> = (0..4).map(|_| random(1, 4, &mut rng)).collect();
        let run = |order: &[usize], seed: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut tape = Tape::new();
            let g: [GateVars; 3] = gates(&mut tape, 4, 3, &mut rng);
            let mut h = tape.constant(Tensor::zeros(1, 3));
            for &k in order {
                let x = tape.constant(xs[k].clone());
                h = gru_step(&mut tape, x, h, &g).unwrap();
            }
            tape.value(h).clone()
        };
        assert_ne!(run(&[0, 1, 2, 3], 1), run(&[3, 2, 1, 0], 1));
    }

    #[test]
    fn lstm_zero_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut tape = Tape::new();
        let g: [GateVars; 4] = gates(&mut tape, 5, 3, &mut rng);
        let mut h = tape.constant(Tensor::zeros(1, 3));
        let mut c = tape.constant(Tensor::zeros(1, 3));
        for _ in 0..4 {
            let x = tape.constant(Tensor::zeros(1, 5));
            (h, c) = lstm_step(&mut tape, x, h, c, &g).unwrap();
        }
        assert_eq!(tape.value(h), &Tensor::zeros(1, 3));
    }
}
