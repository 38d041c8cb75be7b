//! Randomly composed tape programs checked against central differences.

use std::borrow::Cow;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Matrix, Tape, TensorError, Var};

#[derive(Debug, Clone, PartialEq)]
enum Step {
    /// Right-multiply by parameter `k`.
    Matmul(usize),
    /// Add parameter `k`.
    Add(usize),
    Relu,
    Sigmoid,
}

#[derive(Debug, Clone, PartialEq)]
enum Loss {
    Bce {
        targets: Matrix,
        pos_weight: f64,
        rows: Vec<bool>,
    },
    Mse {
        targets: Matrix,
        mask: Matrix,
    },
}

/// A chain of at most four operations applied to a parameter input,
/// finished by one of the two losses. Every matrix is at most 8×8.
#[derive(Debug, Clone, PartialEq)]
pub struct Program {
    /// Parameter 0 is the input; the rest are consumed by `Matmul`/`Add`.
    pub params: Vec<Matrix>,
    steps: Vec<Step>,
    loss: Loss,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub loss: f64,
    /// Largest `|g - fd| / max(|g|, |fd|, 1e-3)` over every parameter entry.
    pub max_rel_err: f64,
    pub n_entries: usize,
    pub ops: Vec<&'static str>,
}

fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(lo..hi))
}

impl Program {
    /// Draws a program from `seed`. The first step is always a product and
    /// even seeds end in the classification loss, odd seeds in the masked
    /// squared error.
    pub fn random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = rng.random_range(1..=8);
        let mut cols = rng.random_range(1..=8);
        let mut params = vec![uniform(&mut rng, rows, cols, -1.0, 1.0)];
        let depth = rng.random_range(1..=4);
        let mut steps = Vec::with_capacity(depth);
        for d in 0..depth {
            let pick = if d == 0 { 0 } else { rng.random_range(0..4) };
            let step = match pick {
                0 => {
                    let out = rng.random_range(1..=8);
                    params.push(uniform(&mut rng, cols, out, -1.0, 1.0));
                    cols = out;
                    Step::Matmul(params.len() - 1)
                }
                1 => {
                    params.push(uniform(&mut rng, rows, cols, -1.0, 1.0));
                    Step::Add(params.len() - 1)
                }
                2 => Step::Relu,
                _ => Step::Sigmoid,
            };
            steps.push(step);
        }
        let loss = if seed % 2 == 0 {
            let targets = Matrix::from_fn(rows, cols, |_, _| f64::from(u8::from(rng.random_bool(0.3))));
            let mut mask: Vec<bool> = (0..rows).map(|_| rng.random_bool(0.7)).collect();
            mask[0] = true;
            Loss::Bce {
                targets,
                pos_weight: rng.random_range(0.5..5.0),
                rows: mask,
            }
        } else {
            let targets = uniform(&mut rng, rows, cols, 0.0, 1.0);
            let mask = Matrix::from_fn(rows, cols, |i, j| {
                f64::from(u8::from(i + j == 0 || rng.random_bool(0.6)))
            });
            Loss::Mse { targets, mask }
        };
        Self { params, steps, loss }
    }

    pub fn op_names(&self) -> Vec<&'static str> {
        let mut names: Vec<&'static str> = self
            .steps
            .iter()
            .map(|s| match s {
                Step::Matmul(_) => "matmul",
                Step::Add(_) => "add",
                Step::Relu => "relu",
                Step::Sigmoid => "sigmoid",
            })
            .collect();
        names.push(match self.loss {
            Loss::Bce { .. } => "bce_with_logits",
            Loss::Mse { .. } => "masked_squared_error",
        });
        names
    }

    fn record<'a>(&'a self, tape: &mut Tape<'a>, params: &[Var]) -> Result<(Var, f64), TensorError> {
        let mut x = params[0];
        // distance of the closest relu input from its kink
        let mut kink = f64::INFINITY;
        for s in &self.steps {
            x = match *s {
                Step::Matmul(k) => tape.matmul(x, params[k])?,
                Step::Add(k) => tape.add(x, params[k])?,
                Step::Relu => {
                    kink = tape.value(x).as_slice().iter().fold(kink, |m, v| m.min(v.abs()));
                    tape.relu(x)
                }
                Step::Sigmoid => tape.sigmoid(x),
            };
        }
        let n = tape.value(x).rows() as f64;
        let loss = match &self.loss {
            Loss::Bce {
                targets,
                pos_weight,
                rows,
            } => tape.bce_with_logits(x, Cow::Borrowed(targets), *pos_weight, Some(rows.clone()), n)?,
            Loss::Mse { targets, mask } => {
                tape.masked_squared_error(x, Cow::Borrowed(targets), Cow::Borrowed(mask), n)?
            }
        };
        Ok((loss, kink))
    }

    fn eval_at(&self, params: &[Matrix]) -> Result<(f64, f64), TensorError> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = params.iter().map(|p| tape.constant_ref(p)).collect();
        let (loss, kink) = self.record(&mut tape, &vars)?;
        Ok((tape.scalar(loss), kink))
    }

    /// Smallest distance of any relu input from zero.
    pub fn relu_margin(&self) -> Result<f64, TensorError> {
        Ok(self.eval_at(&self.params)?.1)
    }

    /// Reverse-mode gradients of every parameter.
    pub fn gradients(&self) -> Result<(f64, Vec<Matrix>), TensorError> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = self.params.iter().map(|p| tape.leaf(p.clone(), true)).collect();
        let (loss, _) = self.record(&mut tape, &vars)?;
        tape.backward(loss)?;
        let grads = vars
            .iter()
            .zip(&self.params)
            .map(|(&v, p)| tape.grad(v).cloned().unwrap_or_else(|| Matrix::zeros(p.rows(), p.cols())))
            .collect();
        Ok((tape.scalar(loss), grads))
    }

    /// Central differences with step `h` for every parameter entry.
    pub fn finite_differences(&self, h: f64) -> Result<Vec<Matrix>, TensorError> {
        let mut out = Vec::with_capacity(self.params.len());
        let mut work = self.params.clone();
        for k in 0..self.params.len() {
            let base = &self.params[k];
            let mut g = Matrix::zeros(base.rows(), base.cols());
            for i in 0..base.rows() {
                for j in 0..base.cols() {
                    work[k].set(i, j, base.get(i, j) + h);
                    let plus = self.eval_at(&work)?.0;
                    work[k].set(i, j, base.get(i, j) - h);
                    let minus = self.eval_at(&work)?.0;
                    work[k].set(i, j, base.get(i, j));
                    g.set(i, j, (plus - minus) / (2.0 * h));
                }
            }
            out.push(g);
        }
        Ok(out)
    }

    pub fn check(&self, h: f64) -> Result<GradCheck, TensorError> {
        let (loss, grads) = self.gradients()?;
        let fd = self.finite_differences(h)?;
        let mut max_rel_err: f64 = 0.0;
        let mut n_entries = 0;
        for (g, f) in grads.iter().zip(&fd) {
            for (a, b) in g.as_slice().iter().zip(f.as_slice()) {
                max_rel_err = max_rel_err.max((a - b).abs() / a.abs().max(b.abs()).max(1e-3));
                n_entries += 1;
            }
        }
        Ok(GradCheck {
            loss,
            max_rel_err,
            n_entries,
            ops: self.op_names(),
        })
    }
}

/// The program for `seed`, redrawn from derived seeds while any relu input
/// sits within `margin` of zero, where the derivative does not exist and a
/// difference quotient straddles the kink.
pub fn program_away_from_kinks(seed: u64, margin: f64) -> Result<Program, TensorError> {
    let mut s = seed;
    loop {
        let p = Program::random(s);
        if p.relu_margin()? >= margin {
            return Ok(p);
        }
        s = s.wrapping_add(1 << 32);
    }
}
