//! Tape-based reverse-mode differentiation over [`Tensor2`] values.
//!
//! A [`Graph`] records every operation as it is evaluated. Leaves are either
//! constants or parameters; `backward` walks the tape in reverse and returns
//! the gradient of a scalar node with respect to every node that depends on
//! a parameter.

use super::tensor::Tensor2;
use crate::error::{Result, RscError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    AddRow(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    AddScalar(usize),
    Relu(usize),
    Tanh(usize),
    Sigmoid(usize),
    Exp(usize),
    Ln(usize),
    Square(usize),
    Pow(usize, f64),
    Clamp(usize, f64, f64),
    Minimum(usize, usize),
    Sum(usize),
    Mean(usize),
    SumCols(usize),
    MulCol(usize, usize),
    ConcatCols(usize, usize),
    SliceCols(usize, usize),
    Reshape(usize),
    TileRows(usize, usize),
    GraphMix { fe: usize, g: usize, j: usize, k: usize },
    StraightThrough(usize),
}

#[derive(Debug)]
struct Node {
    value: Tensor2,
    op: Op,
    needs_grad: bool,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients indexed by graph node.
#[derive(Debug)]
pub struct Grads {
    grads: Vec<Option<Tensor2>>,
}

impl Grads {
    pub fn wrt(&self, v: Var) -> Option<&Tensor2> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient of `v`, or zeros of `shape` when `v` did not influence the
    /// loss.
    pub fn wrt_or_zeros(&self, v: Var, shape: (usize, usize)) -> Tensor2 {
        self.wrt(v).cloned().unwrap_or_else(|| Tensor2::zeros(shape.0, shape.1))
    }
}

fn same_shape(a: &Tensor2, b: &Tensor2, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(RscError::Shape(format!("{what}: {:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor2 {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor2, op: Op, what: &str) -> Result<Var> {
        value.check_finite(what)?;
        let needs_grad = match &op {
            Op::Leaf => false,
            op => parents(op).iter().any(|&p| self.nodes[p].needs_grad),
        };
        self.nodes.push(Node { value, op, needs_grad });
        Ok(Var(self.nodes.len() - 1))
    }

    fn v(&self, v: Var) -> &Tensor2 {
        &self.nodes[v.0].value
    }

    pub fn constant(&mut self, value: Tensor2) -> Result<Var> {
        self.push(value, Op::Leaf, "constant")
    }

    pub fn param(&mut self, value: &Tensor2) -> Result<Var> {
        let v = self.push(value.clone(), Op::Leaf, "parameter")?;
        self.nodes[v.0].needs_grad = true;
        Ok(v)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.v(a).matmul(self.v(b))?;
        self.push(out, Op::MatMul(a.0, b.0), "matmul")
    }

    /// `a + bias` with a `1 × cols` bias broadcast over rows.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (x, b) = (self.v(a), self.v(bias));
        if b.rows() != 1 || b.cols() != x.cols() {
            return Err(RscError::Shape(format!("bias {:?} for input {:?}", b.shape(), x.shape())));
        }
        let mut out = x.clone();
        let cols = x.cols();
        for (i, o) in out.data_mut().iter_mut().enumerate() {
            *o += b.data()[i % cols];
        }
        self.push(out, Op::AddRow(a.0, bias.0), "add_row")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self.v(a), self.v(b), "add")?;
        let out = self.v(a).zip_map(self.v(b), |x, y| x + y);
        self.push(out, Op::Add(a.0, b.0), "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self.v(a), self.v(b), "sub")?;
        let out = self.v(a).zip_map(self.v(b), |x, y| x - y);
        self.push(out, Op::Sub(a.0, b.0), "sub")
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self.v(a), self.v(b), "mul")?;
        let out = self.v(a).zip_map(self.v(b), |x, y| x * y);
        self.push(out, Op::Mul(a.0, b.0), "mul")
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Result<Var> {
        let out = self.v(a).map(|x| k * x);
        self.push(out, Op::Scale(a.0, k), "scale")
    }

    pub fn add_scalar(&mut self, a: Var, k: f64) -> Result<Var> {
        let out = self.v(a).map(|x| x + k);
        self.push(out, Op::AddScalar(a.0), "add_scalar")
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let out = self.v(a).map(|x| x.max(0.0));
        self.push(out, Op::Relu(a.0), "relu")
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        let out = self.v(a).map(f64::tanh);
        self.push(out, Op::Tanh(a.0), "tanh")
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let out = self.v(a).map(sigmoid);
        self.push(out, Op::Sigmoid(a.0), "sigmoid")
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        let out = self.v(a).map(f64::exp);
        self.push(out, Op::Exp(a.0), "exp")
    }

    pub fn ln(&mut self, a: Var) -> Result<Var> {
        let out = self.v(a).map(f64::ln);
        self.push(out, Op::Ln(a.0), "ln")
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        let out = self.v(a).map(|x| x * x);
        self.push(out, Op::Square(a.0), "square")
    }

    /// Elementwise `x^e` for `x > 0`.
    pub fn pow(&mut self, a: Var, e: f64) -> Result<Var> {
        let out = self.v(a).map(|x| x.powf(e));
        self.push(out, Op::Pow(a.0, e), "pow")
    }

    /// Elementwise clamp; the gradient is zero outside `[lo, hi]`.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Result<Var> {
        let out = self.v(a).map(|x| x.clamp(lo, hi));
        self.push(out, Op::Clamp(a.0, lo, hi), "clamp")
    }

    pub fn minimum(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self.v(a), self.v(b), "minimum")?;
        let out = self.v(a).zip_map(self.v(b), f64::min);
        self.push(out, Op::Minimum(a.0, b.0), "minimum")
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let out = Tensor2::scalar(self.v(a).sum());
        self.push(out, Op::Sum(a.0), "sum")
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let t = self.v(a);
        if t.is_empty() {
            return Err(RscError::Shape("mean of an empty tensor".into()));
        }
        let out = Tensor2::scalar(t.sum() / t.len() as f64);
        self.push(out, Op::Mean(a.0), "mean")
    }

    /// Per-row sum: `rows × cols → rows × 1`.
    pub fn sum_cols(&mut self, a: Var) -> Result<Var> {
        let t = self.v(a);
        let data = (0..t.rows()).map(|r| t.row_slice(r).iter().sum()).collect();
        let out = Tensor2::new(t.rows(), 1, data)?;
        self.push(out, Op::SumCols(a.0), "sum_cols")
    }

    /// Scales each row of `a` by the matching entry of the column `col`.
    pub fn mul_col(&mut self, a: Var, col: Var) -> Result<Var> {
        let (x, c) = (self.v(a), self.v(col));
        if c.cols() != 1 || c.rows() != x.rows() {
            return Err(RscError::Shape(format!("column {:?} for input {:?}", c.shape(), x.shape())));
        }
        let mut out = x.clone();
        let cols = x.cols();
        for (i, o) in out.data_mut().iter_mut().enumerate() {
            *o *= c.data()[i / cols];
        }
        self.push(out, Op::MulCol(a.0, col.0), "mul_col")
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.v(a), self.v(b));
        if x.rows() != y.rows() {
            return Err(RscError::Shape(format!("concat {:?} with {:?}", x.shape(), y.shape())));
        }
        let mut data = Vec::with_capacity(x.len() + y.len());
        for r in 0..x.rows() {
            data.extend_from_slice(x.row_slice(r));
            data.extend_from_slice(y.row_slice(r));
        }
        let out = Tensor2::new(x.rows(), x.cols() + y.cols(), data)?;
        self.push(out, Op::ConcatCols(a.0, b.0), "concat_cols")
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let x = self.v(a);
        if start >= end || end > x.cols() {
            return Err(RscError::Shape(format!("columns {start}..{end} of {:?}", x.shape())));
        }
        let mut data = Vec::with_capacity(x.rows() * (end - start));
        for r in 0..x.rows() {
            data.extend_from_slice(&x.row_slice(r)[start..end]);
        }
        let out = Tensor2::new(x.rows(), end - start, data)?;
        self.push(out, Op::SliceCols(a.0, start), "slice_cols")
    }

    /// Reinterprets the row-major data with a new shape.
    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        let out = Tensor2::new(rows, cols, self.v(a).data().to_vec())?;
        self.push(out, Op::Reshape(a.0), "reshape")
    }

    /// Stacks `times` copies of `a` vertically.
    pub fn tile_rows(&mut self, a: Var, times: usize) -> Result<Var> {
        let x = self.v(a);
        let out = Tensor2::new(x.rows() * times, x.cols(), x.data().repeat(times))?;
        self.push(out, Op::TileRows(a.0, times), "tile_rows")
    }

    /// Per-sample linear mixing through a graph. `fe` stacks `B` blocks of
    /// `j × F` input features, `g` holds one flattened `j × k` adjacency per
    /// row (`B × jk`). Output block `b` is `fe_bᵀ g_b` transposed, i.e.
    /// `out[b·k + c] = Σ_i g_b[i, c] fe[b·j + i]`, shape `Bk × F`.
    pub fn graph_mix(&mut self, fe: Var, g: Var, j: usize, k: usize) -> Result<Var> {
        let (f, gm) = (self.v(fe), self.v(g));
        let batch = gm.rows();
        if gm.cols() != j * k || f.rows() != batch * j {
            return Err(RscError::Shape(format!(
                "graph_mix: features {:?}, graph {:?}, j={j}, k={k}",
                f.shape(),
                gm.shape()
            )));
        }
        let width = f.cols();
        let mut out = Tensor2::zeros(batch * k, width);
        for b in 0..batch {
            let gb = gm.row_slice(b);
            for i in 0..j {
                let src = f.row_slice(b * j + i);
                for c in 0..k {
                    let w = gb[i * k + c];
                    if w == 0.0 {
                        continue;
                    }
                    let row = b * k + c;
                    let dst = &mut out.data_mut()[row * width..(row + 1) * width];
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d += w * s;
                    }
                }
            }
        }
        self.push(out, Op::GraphMix { fe: fe.0, g: g.0, j, k }, "graph_mix")
    }

    /// Forward: `1` where `x ≥ ½`, else `0`. Backward: identity.
    pub fn straight_through(&mut self, a: Var) -> Result<Var> {
        let out = self.v(a).map(|x| if x >= 0.5 { 1.0 } else { 0.0 });
        self.push(out, Op::StraightThrough(a.0), "straight_through")
    }

    /// Gradients of the scalar `loss` with respect to every node.
    pub fn backward(&self, loss: Var) -> Result<Grads> {
        let node = self
            .nodes
            .get(loss.0)
            .ok_or_else(|| RscError::Invalid("backward on a node that was never evaluated".into()))?;
        if node.value.shape() != (1, 1) {
            return Err(RscError::Shape(format!("loss must be scalar, got {:?}", node.value.shape())));
        }
        let mut grads: Vec<Option<Tensor2>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor2::scalar(1.0));
        for idx in (0..=loss.0).rev() {
            let Some(upstream) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.needs_grad {
                grads[idx] = Some(upstream);
                continue;
            }
            self.propagate(idx, &upstream, &mut grads)?;
            grads[idx] = Some(upstream);
        }
        for (g, n) in grads.iter().zip(&self.nodes) {
            if let Some(g) = g {
                if n.needs_grad {
                    g.check_finite("gradient")?;
                }
            }
        }
        Ok(Grads { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor2>], target: usize, g: Tensor2) {
        if !self.nodes[target].needs_grad {
            return;
        }
        match &mut grads[target] {
            Some(existing) => existing.add_assign(&g),
            slot => *slot = Some(g),
        }
    }

    fn propagate(&self, idx: usize, up: &Tensor2, grads: &mut [Option<Tensor2>]) -> Result<()> {
        let node = &self.nodes[idx];
        let val = |i: usize| &self.nodes[i].value;
        match node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.nodes[a].needs_grad {
                    self.accumulate(grads, a, up.matmul_t(val(b))?);
                }
                if self.nodes[b].needs_grad {
                    self.accumulate(grads, b, val(a).t_matmul(up)?);
                }
            }
            Op::AddRow(a, bias) => {
                self.accumulate(grads, a, up.clone());
                if self.nodes[bias].needs_grad {
                    let cols = up.cols();
                    let mut g = Tensor2::zeros(1, cols);
                    for r in 0..up.rows() {
                        for (o, x) in g.data_mut().iter_mut().zip(up.row_slice(r)) {
                            *o += x;
                        }
                    }
                    self.accumulate(grads, bias, g);
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, a, up.clone());
                self.accumulate(grads, b, up.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, a, up.clone());
                self.accumulate(grads, b, up.map(|x| -x));
            }
            Op::Mul(a, b) => {
                self.accumulate(grads, a, up.zip_map(val(b), |g, y| g * y));
                self.accumulate(grads, b, up.zip_map(val(a), |g, x| g * x));
            }
            Op::Scale(a, k) => self.accumulate(grads, a, up.map(|g| g * k)),
            Op::AddScalar(a) => self.accumulate(grads, a, up.clone()),
            Op::Relu(a) => {
                self.accumulate(grads, a, up.zip_map(val(a), |g, x| if x > 0.0 { g } else { 0.0 }))
            }
            Op::Tanh(a) => self.accumulate(grads, a, up.zip_map(&node.value, |g, y| g * (1.0 - y * y))),
            Op::Sigmoid(a) => self.accumulate(grads, a, up.zip_map(&node.value, |g, y| g * y * (1.0 - y))),
            Op::Exp(a) => self.accumulate(grads, a, up.zip_map(&node.value, |g, y| g * y)),
            Op::Ln(a) => self.accumulate(grads, a, up.zip_map(val(a), |g, x| g / x)),
            Op::Square(a) => self.accumulate(grads, a, up.zip_map(val(a), |g, x| 2.0 * g * x)),
            Op::Pow(a, e) => self.accumulate(grads, a, up.zip_map(val(a), |g, x| g * e * x.powf(e - 1.0))),
            Op::Clamp(a, lo, hi) => self.accumulate(
                grads,
                a,
                up.zip_map(val(a), |g, x| if x >= lo && x <= hi { g } else { 0.0 }),
            ),
            Op::Minimum(a, b) => {
                let (x, y) = (val(a), val(b));
                let mask = x.zip_map(y, |p, q| if p <= q { 1.0 } else { 0.0 });
                self.accumulate(grads, a, up.zip_map(&mask, |g, m| g * m));
                self.accumulate(grads, b, up.zip_map(&mask, |g, m| g * (1.0 - m)));
            }
            Op::Sum(a) => {
                let x = val(a);
                self.accumulate(grads, a, Tensor2::filled(x.rows(), x.cols(), up.item()));
            }
            Op::Mean(a) => {
                let x = val(a);
                let g = up.item() / x.len() as f64;
                self.accumulate(grads, a, Tensor2::filled(x.rows(), x.cols(), g));
            }
            Op::SumCols(a) => {
                let x = val(a);
                let cols = x.cols();
                let data = (0..x.len()).map(|i| up.data()[i / cols]).collect();
                self.accumulate(grads, a, Tensor2::new(x.rows(), cols, data)?);
            }
            Op::MulCol(a, col) => {
                let (x, c) = (val(a), val(col));
                let cols = x.cols();
                if self.nodes[a].needs_grad {
                    let mut g = up.clone();
                    for (i, o) in g.data_mut().iter_mut().enumerate() {
                        *o *= c.data()[i / cols];
                    }
                    self.accumulate(grads, a, g);
                }
                if self.nodes[col].needs_grad {
                    let data = (0..x.rows())
                        .map(|r| x.row_slice(r).iter().zip(up.row_slice(r)).map(|(p, q)| p * q).sum())
                        .collect();
                    self.accumulate(grads, col, Tensor2::new(x.rows(), 1, data)?);
                }
            }
            Op::ConcatCols(a, b) => {
                let ca = val(a).cols();
                let cb = val(b).cols();
                let mut ga = Vec::with_capacity(up.rows() * ca);
                let mut gb = Vec::with_capacity(up.rows() * cb);
                for r in 0..up.rows() {
                    let row = up.row_slice(r);
                    ga.extend_from_slice(&row[..ca]);
                    gb.extend_from_slice(&row[ca..]);
                }
                self.accumulate(grads, a, Tensor2::new(up.rows(), ca, ga)?);
                self.accumulate(grads, b, Tensor2::new(up.rows(), cb, gb)?);
            }
            Op::SliceCols(a, start) => {
                let x = val(a);
                let mut g = Tensor2::zeros(x.rows(), x.cols());
                let w = up.cols();
                for r in 0..x.rows() {
                    for c in 0..w {
                        g.set(r, start + c, up.get(r, c));
                    }
                }
                self.accumulate(grads, a, g);
            }
            Op::Reshape(a) => {
                let x = val(a);
                self.accumulate(grads, a, Tensor2::new(x.rows(), x.cols(), up.data().to_vec())?);
            }
            Op::TileRows(a, times) => {
                let x = val(a);
                let block = x.len();
                let mut g = Tensor2::zeros(x.rows(), x.cols());
                for t in 0..times {
                    for (o, u) in g.data_mut().iter_mut().zip(&up.data()[t * block..(t + 1) * block]) {
                        *o += u;
                    }
                }
                self.accumulate(grads, a, g);
            }
            Op::GraphMix { fe, g, j, k } => {
                let (f, gm) = (val(fe), val(g));
                let width = f.cols();
                let batch = gm.rows();
                if self.nodes[fe].needs_grad {
                    let mut gf = Tensor2::zeros(f.rows(), width);
                    for b in 0..batch {
                        let gb = gm.row_slice(b);
                        for i in 0..j {
                            let row = b * j + i;
                            for c in 0..k {
                                let w = gb[i * k + c];
                                if w == 0.0 {
                                    continue;
                                }
                                let src = up.row_slice(b * k + c);
                                let dst = &mut gf.data_mut()[row * width..(row + 1) * width];
                                for (d, s) in dst.iter_mut().zip(src) {
                                    *d += w * s;
                                }
                            }
                        }
                    }
                    self.accumulate(grads, fe, gf);
                }
                if self.nodes[g].needs_grad {
                    let mut gg = Tensor2::zeros(batch, j * k);
                    for b in 0..batch {
                        for i in 0..j {
                            let fi = f.row_slice(b * j + i);
                            for c in 0..k {
                                let uc = up.row_slice(b * k + c);
                                let d: f64 = fi.iter().zip(uc).map(|(x, y)| x * y).sum();
                                gg.set(b, i * k + c, d);
                            }
                        }
                    }
                    self.accumulate(grads, g, gg);
                }
            }
            Op::StraightThrough(a) => self.accumulate(grads, a, up.clone()),
        }
        Ok(())
    }
}

fn parents(op: &Op) -> Vec<usize> {
    match *op {
        Op::Leaf => vec![],
        Op::MatMul(a, b)
        | Op::AddRow(a, b)
        | Op::Add(a, b)
        | Op::Sub(a, b)
        | Op::Mul(a, b)
        | Op::Minimum(a, b)
        | Op::MulCol(a, b)
        | Op::ConcatCols(a, b) => vec![a, b],
        Op::GraphMix { fe, g, .. } => vec![fe, g],
        Op::Scale(a, _)
        | Op::AddScalar(a)
        | Op::Relu(a)
        | Op::Tanh(a)
        | Op::Sigmoid(a)
        | Op::Exp(a)
        | Op::Ln(a)
        | Op::Square(a)
        | Op::Pow(a, _)
        | Op::Clamp(a, _, _)
        | Op::Sum(a)
        | Op::Mean(a)
        | Op::SumCols(a)
        | Op::SliceCols(a, _)
        | Op::Reshape(a)
        | Op::TileRows(a, _)
        | Op::StraightThrough(a) => vec![a],
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
