use std::borrow::Cow;

use rand::Rng;

use super::{DenseTensor, Matrix, TensorError};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<'a> {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Relu(Var),
    Sigmoid(Var),
    /// Elementwise multiply by a fixed matrix (dropout masks).
    MulConst(Var, Matrix),
    ScaleRows(Var, Vec<f64>),
    AddRowBias(Var, Var),
    Sum(Var),
    Scale(Var, f64),
    BceWithLogits {
        logits: Var,
        targets: Cow<'a, Matrix>,
        pos_weight: f64,
        rows: Option<Vec<bool>>,
        norm: f64,
    },
    MaskedSquaredError {
        pred: Var,
        targets: Cow<'a, Matrix>,
        mask: Cow<'a, Matrix>,
        norm: f64,
    },
}

#[derive(Debug)]
struct Node<'a> {
    value: Cow<'a, Matrix>,
    op: Op<'a>,
    requires_grad: bool,
    /// Accumulated gradient, kept only for leaves.
    grad: Option<Matrix>,
}

/// Records matrix operations in execution order so that [`Tape::backward`]
/// can walk them in reverse. Leaves may borrow their values (parameters,
/// adjacency matrices) for the lifetime of the tape.
#[derive(Debug, Default)]
pub struct Tape<'a> {
    nodes: Vec<Node<'a>>,
}

impl<'a> Tape<'a> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Cow<'a, Matrix>, op: Op<'a>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Records a parameter without copying it.
    pub fn param(&mut self, t: &'a DenseTensor) -> Var {
        self.push(Cow::Borrowed(&t.value), Op::Leaf, t.requires_grad)
    }

    pub fn leaf(&mut self, value: Matrix, requires_grad: bool) -> Var {
        self.push(Cow::Owned(value), Op::Leaf, requires_grad)
    }

    pub fn constant(&mut self, value: Matrix) -> Var {
        self.leaf(value, false)
    }

    pub fn constant_ref(&mut self, value: &'a Matrix) -> Var {
        self.push(Cow::Borrowed(value), Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    /// The single entry of a 1×1 value.
    pub fn scalar(&self, v: Var) -> f64 {
        let m = self.value(v);
        debug_assert_eq!(m.shape(), (1, 1));
        m.get(0, 0)
    }

    /// Gradient accumulated into a leaf by previous `backward` calls.
    pub fn grad(&self, v: Var) -> Option<&Matrix> {
        self.nodes[v.0].grad.as_ref()
    }

    /// Total gradient reaching `t` over every [`Tape::param`] record of it.
    pub fn grad_for(&self, t: &DenseTensor) -> Option<Matrix> {
        let mut total: Option<Matrix> = None;
        for node in &self.nodes {
            let same = matches!(&node.value, Cow::Borrowed(v) if std::ptr::eq(*v, &t.value));
            if let (true, Op::Leaf, Some(g)) = (same, &node.op, &node.grad) {
                match &mut total {
                    Some(acc) => acc.add_assign(g),
                    None => total = Some(g.clone()),
                }
            }
        }
        total
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let value = self.value(a).matmul(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Cow::Owned(value), Op::MatMul(a, b), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let value = self.value(a).try_add(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Cow::Owned(value), Op::Add(a, b), rg))
    }

    /// Sums a non-empty list of equally shaped values left to right.
    pub fn add_all(&mut self, vars: &[Var]) -> Result<Var, TensorError> {
        let (&first, rest) = vars
            .split_first()
            .ok_or_else(|| TensorError::Param("add_all of an empty list".into()))?;
        rest.iter().try_fold(first, |acc, &v| self.add(acc, v))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| if x > 0.0 { x } else { 0.0 });
        let rg = self.rg(a);
        self.push(Cow::Owned(value), Op::Relu(a), rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).map(sigmoid);
        let rg = self.rg(a);
        self.push(Cow::Owned(value), Op::Sigmoid(a), rg)
    }

    /// Inverted dropout: in training mode each entry is zeroed with
    /// probability `rate` and survivors are scaled by `1/(1-rate)`.
    /// Outside training (or at rate 0) the input handle is returned as is.
    pub fn dropout<R: Rng + ?Sized>(
        &mut self,
        a: Var,
        rate: f64,
        training: bool,
        rng: &mut R,
    ) -> Result<Var, TensorError> {
        check_rate(rate)?;
        if !training || rate == 0.0 {
            return Ok(a);
        }
        let keep = 1.0 / (1.0 - rate);
        let (r, c) = self.value(a).shape();
        let mask = Matrix::from_fn(r, c, |_, _| {
            if rng.random::<f64>() < rate {
                0.0
            } else {
                keep
            }
        });
        let value = self.value(a).zip_map(&mask, |x, m| x * m);
        let rg = self.rg(a);
        Ok(self.push(Cow::Owned(value), Op::MulConst(a, mask), rg))
    }

    /// Dropout applied to an identity feature matrix and then multiplied by
    /// `a`: since `dropout(I)` is diagonal, this scales whole rows of `a`.
    pub fn row_dropout<R: Rng + ?Sized>(
        &mut self,
        a: Var,
        rate: f64,
        training: bool,
        rng: &mut R,
    ) -> Result<Var, TensorError> {
        check_rate(rate)?;
        if !training || rate == 0.0 {
            return Ok(a);
        }
        let keep = 1.0 / (1.0 - rate);
        let scale: Vec<f64> = (0..self.value(a).rows())
            .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
            .collect();
        self.scale_rows(a, scale)
    }

    /// Multiplies row `i` by `scale[i]`.
    pub fn scale_rows(&mut self, a: Var, scale: Vec<f64>) -> Result<Var, TensorError> {
        let src = self.value(a);
        if scale.len() != src.rows() {
            return Err(TensorError::Shape {
                op: "scale_rows",
                left: src.shape(),
                right: (scale.len(), 1),
            });
        }
        let mut value = src.clone();
        for (i, s) in scale.iter().enumerate() {
            value.row_mut(i).iter_mut().for_each(|x| *x *= s);
        }
        let rg = self.rg(a);
        Ok(self.push(Cow::Owned(value), Op::ScaleRows(a, scale), rg))
    }

    /// Adds a 1×c bias row to every row of an r×c value.
    pub fn add_row_bias(&mut self, a: Var, bias: Var) -> Result<Var, TensorError> {
        let (x, b) = (self.value(a), self.value(bias));
        if b.rows() != 1 || b.cols() != x.cols() {
            return Err(TensorError::Shape {
                op: "add_row_bias",
                left: x.shape(),
                right: b.shape(),
            });
        }
        let mut value = x.clone();
        for i in 0..value.rows() {
            for (v, bb) in value.row_mut(i).iter_mut().zip(b.row(0)) {
                *v += bb;
            }
        }
        let rg = self.rg(a) || self.rg(bias);
        Ok(self.push(Cow::Owned(value), Op::AddRowBias(a, bias), rg))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        let rg = self.rg(a);
        self.push(Cow::Owned(Matrix::filled(1, 1, s)), Op::Sum(a), rg)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let value = self.value(a).scale(s);
        let rg = self.rg(a);
        self.push(Cow::Owned(value), Op::Scale(a, s), rg)
    }

    /// Weighted binary cross-entropy evaluated from logits:
    /// `-(1/norm) Σ_{i∈rows} Σ_j [w·a_ij·log σ(z_ij) + (1-a_ij)·log(1-σ(z_ij))]`.
    /// Uses `log σ(z) = -softplus(-z)` so saturated logits never hit log(0).
    pub fn bce_with_logits(
        &mut self,
        logits: Var,
        targets: Cow<'a, Matrix>,
        pos_weight: f64,
        rows: Option<Vec<bool>>,
        norm: f64,
    ) -> Result<Var, TensorError> {
        let z = self.value(logits);
        if z.shape() != targets.shape() {
            return Err(TensorError::Shape {
                op: "bce_with_logits",
                left: z.shape(),
                right: targets.shape(),
            });
        }
        if let Some(r) = &rows {
            if r.len() != z.rows() {
                return Err(TensorError::Shape {
                    op: "bce_with_logits rows",
                    left: z.shape(),
                    right: (r.len(), 1),
                });
            }
        }
        let mut total = 0.0;
        for i in 0..z.rows() {
            if rows.as_ref().is_some_and(|r| !r[i]) {
                continue;
            }
            for (&zz, &a) in z.row(i).iter().zip(targets.row(i)) {
                total += pos_weight * a * softplus(-zz) + (1.0 - a) * softplus(zz);
            }
        }
        let value = Matrix::filled(1, 1, total / norm);
        let rg = self.rg(logits);
        Ok(self.push(
            Cow::Owned(value),
            Op::BceWithLogits {
                logits,
                targets,
                pos_weight,
                rows,
                norm,
            },
            rg,
        ))
    }

    /// `(1/norm) Σ m_ij (v_ij - a_ij)²`.
    pub fn masked_squared_error(
        &mut self,
        pred: Var,
        targets: Cow<'a, Matrix>,
        mask: Cow<'a, Matrix>,
        norm: f64,
    ) -> Result<Var, TensorError> {
        let v = self.value(pred);
        for other in [targets.shape(), mask.shape()] {
            if other != v.shape() {
                return Err(TensorError::Shape {
                    op: "masked_squared_error",
                    left: v.shape(),
                    right: other,
                });
            }
        }
        let total: f64 = v
            .as_slice()
            .iter()
            .zip(targets.as_slice())
            .zip(mask.as_slice())
            .map(|((v, a), m)| m * (v - a) * (v - a))
            .sum();
        let value = Matrix::filled(1, 1, total / norm);
        let rg = self.rg(pred);
        Ok(self.push(
            Cow::Owned(value),
            Op::MaskedSquaredError {
                pred,
                targets,
                mask,
                norm,
            },
            rg,
        ))
    }

    /// Reverse-mode sweep from a 1×1 `loss`. Gradients are added to the
    /// accumulators of every reachable leaf that requires grad, so calling
    /// this twice doubles them.
    pub fn backward(&mut self, loss: Var) -> Result<(), TensorError> {
        let shape = self.value(loss).shape();
        if shape != (1, 1) {
            return Err(TensorError::Shape {
                op: "backward",
                left: shape,
                right: (1, 1),
            });
        }
        let mut grads: Vec<Option<Matrix>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Matrix::filled(1, 1, 1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            if !self.nodes[idx].requires_grad {
                continue;
            }
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {
                    let node = &mut self.nodes[idx];
                    match &mut node.grad {
                        Some(acc) => acc.add_assign(&g),
                        None => node.grad = Some(g),
                    }
                }
                Op::MatMul(a, b) => {
                    let (a, b) = (*a, *b);
                    if self.rg(a) {
                        let ga = g.matmul_nt(self.value(b))?;
                        accumulate(&mut grads, a, ga);
                    }
                    if self.rg(b) {
                        let gb = self.value(a).matmul_tn(&g)?;
                        accumulate(&mut grads, b, gb);
                    }
                }
                Op::Add(a, b) => {
                    let (a, b) = (*a, *b);
                    if self.rg(a) {
                        accumulate(&mut grads, a, g.clone());
                    }
                    if self.rg(b) {
                        accumulate(&mut grads, b, g);
                    }
                }
                Op::Relu(a) => {
                    let a = *a;
                    let x = self.value(a);
                    let ga = g.zip_map(x, |gv, xv| if xv > 0.0 { gv } else { 0.0 });
                    accumulate(&mut grads, a, ga);
                }
                Op::Sigmoid(a) => {
                    let a = *a;
                    let s = &node.value;
                    let ga = g.zip_map(s, |gv, sv| gv * sv * (1.0 - sv));
                    accumulate(&mut grads, a, ga);
                }
                Op::MulConst(a, mask) => {
                    let ga = g.zip_map(mask, |gv, m| gv * m);
                    accumulate(&mut grads, *a, ga);
                }
                Op::ScaleRows(a, scale) => {
                    let mut ga = g;
                    for (i, s) in scale.iter().enumerate() {
                        ga.row_mut(i).iter_mut().for_each(|x| *x *= s);
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::AddRowBias(a, bias) => {
                    let (a, bias) = (*a, *bias);
                    if self.rg(bias) {
                        let mut gb = Matrix::zeros(1, g.cols());
                        for i in 0..g.rows() {
                            for (acc, v) in gb.row_mut(0).iter_mut().zip(g.row(i)) {
                                *acc += v;
                            }
                        }
                        accumulate(&mut grads, bias, gb);
                    }
                    if self.rg(a) {
                        accumulate(&mut grads, a, g);
                    }
                }
                Op::Sum(a) => {
                    let a = *a;
                    let (r, c) = self.value(a).shape();
                    accumulate(&mut grads, a, Matrix::filled(r, c, g.get(0, 0)));
                }
                Op::Scale(a, s) => {
                    let ga = g.scale(*s);
                    accumulate(&mut grads, *a, ga);
                }
                Op::BceWithLogits {
                    logits,
                    targets,
                    pos_weight,
                    rows,
                    norm,
                } => {
                    let z = self.value(*logits);
                    let upstream = g.get(0, 0) / norm;
                    let mut gz = Matrix::zeros(z.rows(), z.cols());
                    for i in 0..z.rows() {
                        if rows.as_ref().is_some_and(|r| !r[i]) {
                            continue;
                        }
                        let out = gz.row_mut(i);
                        for ((o, &zz), &a) in out.iter_mut().zip(z.row(i)).zip(targets.row(i)) {
                            let s = sigmoid(zz);
                            *o = upstream * (-pos_weight * a * (1.0 - s) + (1.0 - a) * s);
                        }
                    }
                    accumulate(&mut grads, *logits, gz);
                }
                Op::MaskedSquaredError {
                    pred,
                    targets,
                    mask,
                    norm,
                } => {
                    let v = self.value(*pred);
                    let scale = 2.0 * g.get(0, 0) / norm;
                    let data: Vec<f64> = v
                        .as_slice()
                        .iter()
                        .zip(targets.as_slice())
                        .zip(mask.as_slice())
                        .map(|((v, a), m)| scale * m * (v - a))
                        .collect();
                    let gv = Matrix::from_vec(v.rows(), v.cols(), data)?;
                    accumulate(&mut grads, *pred, gv);
                }
            }
        }
        Ok(())
    }
}

fn accumulate(grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
    match &mut grads[v.0] {
        Some(acc) => acc.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

fn check_rate(rate: f64) -> Result<(), TensorError> {
    if (0.0..1.0).contains(&rate) {
        Ok(())
    } else {
        Err(TensorError::Param(format!(
            "dropout rate {rate} outside [0, 1)"
        )))
    }
}

/// Logistic function, branching on sign so neither side overflows.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn central_diff(f: impl Fn(&Matrix) -> f64, x: &Matrix, h: f64) -> Matrix {
        let mut out = Matrix::zeros(x.rows(), x.cols());
        for i in 0..x.rows() {
            for j in 0..x.cols() {
                let mut plus = x.clone();
                plus.set(i, j, x.get(i, j) + h);
                let mut minus = x.clone();
                minus.set(i, j, x.get(i, j) - h);
                out.set(i, j, (f(&plus) - f(&minus)) / (2.0 * h));
            }
        }
        out
    }

    fn max_rel_err(a: &Matrix, b: &Matrix) -> f64 {
        a.as_slice()
            .iter()
            .zip(b.as_slice())
            .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-3))
            .fold(0.0, f64::max)
    }

    #[test]
    fn sum_of_product_gradient_is_row_sums_of_b() {
        let a0 = Matrix::from_rows(&[[0.3, -1.2, 2.0], [0.5, 0.1, -0.7]]);
        let b = Matrix::from_rows(&[[1.0, 2.0], [-3.0, 0.5], [0.25, 4.0]]);
        let mut tape = Tape::new();
        let a = tape.leaf(a0.clone(), true);
        let bv = tape.constant(b.clone());
        let p = tape.matmul(a, bv).unwrap();
        let s = tape.sum(p);
        tape.backward(s).unwrap();
        let g = tape.grad(a).unwrap().clone();
        let row_sums: Vec<f64> = (0..3).map(|k| b.row(k).iter().sum()).collect();
        for i in 0..2 {
            for k in 0..3 {
                assert_eq!(g.get(i, k), row_sums[k]);
            }
        }
        let fd = central_diff(|x| x.matmul(&b).unwrap().sum(), &a0, 1e-5);
        assert!(max_rel_err(&g, &fd) < 1e-8);
    }

    #[test]
    fn add_identity_and_elementwise() {
        let mut tape = Tape::new();
        let a = tape.leaf(Matrix::from_rows(&[[1.0, 2.0]]), true);
        let z = tape.constant(Matrix::zeros(1, 2));
        let b = tape.leaf(Matrix::from_rows(&[[3.0, 4.0]]), true);
        let az = tape.add(a, z).unwrap();
        assert_eq!(tape.value(az), tape.value(a));
        let ab = tape.add(a, b).unwrap();
        assert_eq!(tape.value(ab), &Matrix::from_rows(&[[4.0, 6.0]]));
        let s = tape.sum(ab);
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(a).unwrap(), &Matrix::filled(1, 2, 1.0));
        assert_eq!(tape.grad(b).unwrap(), &Matrix::filled(1, 2, 1.0));
        let bad = tape.constant(Matrix::zeros(2, 2));
        assert!(matches!(tape.add(a, bad), Err(TensorError::Shape { .. })));
    }

    #[test]
    fn relu_values_and_zero_subgradient() {
        let mut tape = Tape::new();
        let x = tape.leaf(Matrix::from_rows(&[[-1.0, 2.0, 0.0]]), true);
        let y = tape.relu(x);
        assert_eq!(tape.value(y), &Matrix::from_rows(&[[0.0, 2.0, 0.0]]));
        let s = tape.sum(y);
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &Matrix::from_rows(&[[0.0, 1.0, 0.0]]));

        let pos = Matrix::from_rows(&[[0.0, 3.5, 1e-300]]);
        let p = tape.leaf(pos.clone(), false);
        let r = tape.relu(p);
        assert_eq!(tape.value(r), &pos);
    }

    #[test]
    fn sigmoid_symmetry_saturation_and_derivative() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((sigmoid(40.0) - 1.0).abs() <= 1e-15);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(-800.0).is_finite());
        assert!(sigmoid(800.0) == 1.0);

        let mut tape = Tape::new();
        let x = tape.leaf(Matrix::zeros(1, 1), true);
        let y = tape.sigmoid(x);
        let s = tape.sum(y);
        tape.backward(s).unwrap();
        let analytic = tape.grad(x).unwrap().get(0, 0);
        assert_eq!(analytic, 0.25);
        let h = 1e-5;
        let fd = (sigmoid(h) - sigmoid(-h)) / (2.0 * h);
        assert!((analytic - fd).abs() < 1e-10);
    }

    #[test]
    fn dropout_identity_cases_and_rate_guard() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut tape = Tape::new();
        let x = tape.leaf(Matrix::from_fn(4, 4, |i, j| (i + j) as f64), true);
        assert_eq!(tape.dropout(x, 0.0, true, &mut rng).unwrap(), x);
        assert_eq!(tape.dropout(x, 0.9, false, &mut rng).unwrap(), x);
        assert!(matches!(
            tape.dropout(x, 1.0, true, &mut rng),
            Err(TensorError::Param(_))
        ));
        assert!(tape.dropout(x, -0.1, true, &mut rng).is_err());
    }

    #[test]
    fn dropout_monte_carlo_fraction_and_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 1000;
        let mut tape = Tape::new();
        let x = tape.constant(Matrix::filled(n, n, 1.0));
        let d = tape.dropout(x, 0.1, true, &mut rng).unwrap();
        let v = tape.value(d);
        let survivors = v.count_nonzero() as f64 / (n * n) as f64;
        assert!((survivors - 0.9).abs() < 0.002, "{survivors}");
        let mean = v.sum() / (n * n) as f64;
        assert!((mean - 1.0).abs() < 0.01, "{mean}");
    }

    #[test]
    fn backward_sum_of_leaf_is_ones_and_accumulates() {
        let mut tape = Tape::new();
        let w = tape.leaf(Matrix::from_fn(2, 3, |i, j| (i * 3 + j) as f64), true);
        let s = tape.sum(w);
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(w).unwrap(), &Matrix::filled(2, 3, 1.0));
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(w).unwrap(), &Matrix::filled(2, 3, 2.0));
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut tape = Tape::new();
        let w = tape.leaf(Matrix::zeros(2, 2), true);
        assert!(matches!(tape.backward(w), Err(TensorError::Shape { .. })));
    }

    #[test]
    fn sigmoid_of_product_matches_finite_differences() {
        let x = Matrix::from_fn(3, 4, |i, j| ((i * 5 + j * 3) % 7) as f64 * 0.3 - 0.9);
        let w0 = Matrix::from_fn(4, 2, |i, j| ((i * 2 + j * 5) % 6) as f64 * 0.25 - 0.6);
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        let w = tape.leaf(w0.clone(), true);
        let p = tape.matmul(xv, w).unwrap();
        let s = tape.sigmoid(p);
        let l = tape.sum(s);
        tape.backward(l).unwrap();
        let fd = central_diff(|w| x.matmul(w).unwrap().map(sigmoid).sum(), &w0, 1e-5);
        assert!(max_rel_err(tape.grad(w).unwrap(), &fd) < 1e-4);
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut tape = Tape::new();
        let a = tape.constant(Matrix::filled(2, 2, 1.0));
        let b = tape.leaf(Matrix::filled(2, 2, 2.0), true);
        let p = tape.matmul(a, b).unwrap();
        let s = tape.sum(p);
        tape.backward(s).unwrap();
        assert!(tape.grad(a).is_none());
        assert!(tape.grad(b).is_some());
    }

    #[test]
    fn grad_for_sums_every_use_of_a_parameter() {
        let w = DenseTensor::parameter(Matrix::from_rows(&[[2.0]]));
        let mut tape = Tape::new();
        let a = tape.param(&w);
        let b = tape.param(&w);
        let p = tape.matmul(a, b).unwrap();
        tape.backward(p).unwrap();
        // d(w·w)/dw = 2w
        assert_eq!(tape.grad_for(&w).unwrap(), Matrix::from_rows(&[[4.0]]));
        let other = DenseTensor::parameter(Matrix::from_rows(&[[2.0]]));
        assert!(tape.grad_for(&other).is_none());
    }
}
