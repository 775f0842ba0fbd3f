use super::params::ParamVector;
use super::tensor::{affine_forward, log_softmax, softmax, Tensor};
use super::AutodiffError;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Affine { w: Var, x: Var, b: Option<Var> },
    Relu(Var),
    Softmax { x: Var, beta: f64 },
    LogSoftmax { x: Var, beta: f64 },
    Log(Var),
    Exp(Var),
    Sum(Var),
    Mul(Var, Var),
    Square(Var),
    Div(Var, Var),
    Sigmoid(Var),
    Clip { x: Var, lo: f64, hi: f64 },
    // structural helpers
    Add(Var, Var),
    Sub(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Sqrt(Var),
    Index(Var, usize),
    Row(Var, usize),
    Transpose(Var),
    Reshape(Var),
    Stack(Vec<Var>),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Affine { .. } => "affine",
            Op::Relu(_) => "relu",
            Op::Softmax { .. } => "softmax",
            Op::LogSoftmax { .. } => "log_softmax",
            Op::Log(_) => "log",
            Op::Exp(_) => "exp",
            Op::Sum(_) => "sum",
            Op::Mul(..) => "mul",
            Op::Square(_) => "square",
            Op::Div(..) => "div",
            Op::Sigmoid(_) => "sigmoid",
            Op::Clip { .. } => "clip",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Scale(..) => "scale",
            Op::AddScalar(..) => "add_scalar",
            Op::Sqrt(_) => "sqrt",
            Op::Index(..) => "index",
            Op::Row(..) => "row",
            Op::Transpose(_) => "transpose",
            Op::Reshape(_) => "reshape",
            Op::Stack(_) => "stack",
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Tensor,
}

/// Append-only record of primitive applications.
///
/// Every node only references nodes recorded before it, so a single reverse
/// sweep from any output visits its inputs in dependency order.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn shape_err(op: &'static str, detail: String) -> AutodiffError {
    AutodiffError::Shape { op, detail }
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn scalar_value(&self, v: Var) -> f64 {
        self.nodes[v.0].value.data[0]
    }

    fn push(&mut self, op: Op, value: Tensor) -> Var {
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    /// Records an input (constant or differentiable leaf, the tape does not distinguish).
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push(Op::Leaf, t)
    }

    pub fn constant(&mut self, v: f64) -> Var {
        self.leaf(Tensor::scalar(v))
    }

    pub fn vector(&mut self, v: Vec<f64>) -> Var {
        self.leaf(Tensor::vector(v))
    }

    /// One leaf per segment of `p`, in layout order.
    pub fn params(&mut self, p: &ParamVector) -> ParamVars {
        let vars = (0..p.layout().len()).map(|i| self.leaf(p.tensor(i))).collect();
        ParamVars { vars, layout: p.clone().zeros_like() }
    }

    pub fn affine(&mut self, w: Var, x: Var, b: Option<Var>) -> Result<Var, AutodiffError> {
        let (wv, xv) = (self.value(w), self.value(x));
        if wv.cols != xv.rows {
            return Err(shape_err("affine", format!("W is {:?} but x is {:?}", wv.shape(), xv.shape())));
        }
        if let Some(b) = b {
            let bv = self.value(b);
            if bv.cols != 1 || bv.rows != wv.rows {
                return Err(shape_err("affine", format!("bias is {:?}, expected ({}, 1)", bv.shape(), wv.rows)));
            }
        }
        let y = affine_forward(wv, xv, b.map(|b| self.value(b)));
        Ok(self.push(Op::Affine { w, x, b }, y))
    }

    fn map(&mut self, x: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let xv = self.value(x);
        let data = xv.data.iter().map(|&v| f(v)).collect();
        let t = Tensor::new(xv.rows, xv.cols, data);
        self.push(op, t)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.map(x, Op::Relu(x), |v| v.max(0.0))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.map(x, Op::Sigmoid(x), sigmoid)
    }

    pub fn log(&mut self, x: Var) -> Var {
        self.map(x, Op::Log(x), f64::ln)
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.map(x, Op::Exp(x), f64::exp)
    }

    pub fn sqrt(&mut self, x: Var) -> Var {
        self.map(x, Op::Sqrt(x), f64::sqrt)
    }

    pub fn square(&mut self, x: Var) -> Var {
        self.map(x, Op::Square(x), |v| v * v)
    }

    /// Clamps into `[lo, hi]`; the gradient is zero wherever the input lies outside.
    pub fn clip(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        self.map(x, Op::Clip { x, lo, hi }, move |v| v.clamp(lo, hi))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        self.map(x, Op::Scale(x, c), move |v| c * v)
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Var {
        self.map(x, Op::AddScalar(x), move |v| v + c)
    }

    fn vector_check(&self, op: &'static str, x: Var) -> Result<(), AutodiffError> {
        let s = self.value(x).shape();
        if s.1 != 1 {
            return Err(shape_err(op, format!("expected a column vector, got {s:?}")));
        }
        Ok(())
    }

    /// `softmax(beta * x)` over a column vector.
    pub fn softmax(&mut self, x: Var, beta: f64) -> Result<Var, AutodiffError> {
        self.vector_check("softmax", x)?;
        let p = softmax(&self.value(x).data, beta);
        Ok(self.push(Op::Softmax { x, beta }, Tensor::vector(p)))
    }

    /// Fused `log(softmax(beta * x))`.
    pub fn log_softmax(&mut self, x: Var, beta: f64) -> Result<Var, AutodiffError> {
        self.vector_check("log_softmax", x)?;
        let p = log_softmax(&self.value(x).data, beta);
        Ok(self.push(Op::LogSoftmax { x, beta }, Tensor::vector(p)))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data.iter().sum();
        self.push(Op::Sum(x), Tensor::scalar(s))
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        allow_scalar_rhs: bool,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor, AutodiffError> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() == bv.shape() {
            let data = av.data.iter().zip(&bv.data).map(|(&x, &y)| f(x, y)).collect();
            Ok(Tensor::new(av.rows, av.cols, data))
        } else if allow_scalar_rhs && bv.is_scalar() {
            let y = bv.data[0];
            let data = av.data.iter().map(|&x| f(x, y)).collect();
            Ok(Tensor::new(av.rows, av.cols, data))
        } else {
            Err(shape_err(name, format!("operands {:?} and {:?}", av.shape(), bv.shape())))
        }
    }

    /// Elementwise product; `b` may also be a scalar.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let t = self.binary("mul", a, b, true, |x, y| x * y)?;
        Ok(self.push(Op::Mul(a, b), t))
    }

    /// Elementwise quotient; `b` may also be a scalar.
    pub fn div(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let t = self.binary("div", a, b, true, |x, y| x / y)?;
        Ok(self.push(Op::Div(a, b), t))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let t = self.binary("add", a, b, false, |x, y| x + y)?;
        Ok(self.push(Op::Add(a, b), t))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let t = self.binary("sub", a, b, false, |x, y| x - y)?;
        Ok(self.push(Op::Sub(a, b), t))
    }

    /// Flat element `i` as a scalar.
    pub fn index(&mut self, x: Var, i: usize) -> Result<Var, AutodiffError> {
        let xv = self.value(x);
        if i >= xv.len() {
            return Err(shape_err("index", format!("index {i} out of range for {:?}", xv.shape())));
        }
        let v = xv.data[i];
        Ok(self.push(Op::Index(x, i), Tensor::scalar(v)))
    }

    /// Row `r` of a matrix as a column vector.
    pub fn row(&mut self, x: Var, r: usize) -> Result<Var, AutodiffError> {
        let xv = self.value(x);
        if r >= xv.rows {
            return Err(shape_err("row", format!("row {r} out of range for {:?}", xv.shape())));
        }
        let data = xv.data[r * xv.cols..(r + 1) * xv.cols].to_vec();
        Ok(self.push(Op::Row(x, r), Tensor::vector(data)))
    }

    pub fn transpose(&mut self, x: Var) -> Var {
        let t = self.value(x).transpose();
        self.push(Op::Transpose(x), t)
    }

    /// Same data, new shape.
    pub fn reshape(&mut self, x: Var, rows: usize, cols: usize) -> Result<Var, AutodiffError> {
        let xv = self.value(x);
        if rows * cols != xv.len() {
            return Err(shape_err("reshape", format!("cannot view {:?} as ({rows}, {cols})", xv.shape())));
        }
        let t = Tensor::new(rows, cols, xv.data.clone());
        Ok(self.push(Op::Reshape(x), t))
    }

    /// Column vector of scalar nodes.
    pub fn stack(&mut self, xs: &[Var]) -> Result<Var, AutodiffError> {
        let mut data = Vec::with_capacity(xs.len());
        for &x in xs {
            let xv = self.value(x);
            if !xv.is_scalar() {
                return Err(shape_err("stack", format!("element has shape {:?}", xv.shape())));
            }
            data.push(xv.data[0]);
        }
        Ok(self.push(Op::Stack(xs.to_vec()), Tensor::vector(data)))
    }

    /// Dot product of two equally shaped nodes.
    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let m = self.mul(a, b)?;
        Ok(self.sum(m))
    }

    /// Reverse sweep from a scalar output.
    pub fn backward(&self, output: Var) -> Result<Gradients, AutodiffError> {
        let out = &self.nodes[output.0];
        if !out.value.is_scalar() {
            return Err(AutodiffError::NonScalarOutput { shape: out.value.shape() });
        }
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; output.0 + 1];
        adj[output.0] = Some(vec![1.0]);

        for idx in (0..=output.0).rev() {
            let Some(g) = adj[idx].take() else { continue };
            let node = &self.nodes[idx];
            self.propagate(&node.op, &node.value, &g, &mut adj);
            adj[idx] = Some(g);
        }
        Ok(Gradients { adj })
    }

    fn propagate(&self, op: &Op, out: &Tensor, g: &[f64], adj: &mut [Option<Vec<f64>>]) {
        let val = |v: Var| &self.nodes[v.0].value;
        // Accumulators are borrowed one at a time so ops that use the same
        // node twice (mul(x, x)) just add twice.
        macro_rules! grad {
            ($v:expr) => {{
                let len = val($v).len();
                adj[$v.0].get_or_insert_with(|| vec![0.0; len])
            }};
        }
        match *op {
            Op::Leaf => {}
            Op::Affine { w, x, b } => {
                let (wv, xv) = (val(w), val(x));
                let (m, n) = wv.shape();
                let batch = xv.cols;
                {
                    let gw = grad!(w);
                    for i in 0..m {
                        let gi = &g[i * batch..(i + 1) * batch];
                        for p in 0..n {
                            let xp = &xv.data[p * batch..(p + 1) * batch];
                            gw[i * n + p] += super::tensor::dot(gi, xp);
                        }
                    }
                }
                {
                    let gx = grad!(x);
                    if batch == 1 {
                        for i in 0..m {
                            let gi = g[i];
                            if gi == 0.0 {
                                continue;
                            }
                            let row = &wv.data[i * n..(i + 1) * n];
                            for (gxp, wip) in gx.iter_mut().zip(row) {
                                *gxp += gi * wip;
                            }
                        }
                    } else {
                        for i in 0..m {
                            let gi = &g[i * batch..(i + 1) * batch];
                            for p in 0..n {
                                let wip = wv.data[i * n + p];
                                let gxp = &mut gx[p * batch..(p + 1) * batch];
                                for (a, b) in gxp.iter_mut().zip(gi) {
                                    *a += wip * b;
                                }
                            }
                        }
                    }
                }
                if let Some(b) = b {
                    let gb = grad!(b);
                    for i in 0..m {
                        gb[i] += g[i * batch..(i + 1) * batch].iter().sum::<f64>();
                    }
                }
            }
            Op::Relu(x) => {
                let xv = &val(x).data;
                let gx = grad!(x);
                for i in 0..g.len() {
                    if xv[i] > 0.0 {
                        gx[i] += g[i];
                    }
                }
            }
            Op::Sigmoid(x) => {
                let gx = grad!(x);
                for i in 0..g.len() {
                    let s = out.data[i];
                    gx[i] += g[i] * s * (1.0 - s);
                }
            }
            Op::Softmax { x, beta } => {
                let p = &out.data;
                let gp: f64 = g.iter().zip(p).map(|(a, b)| a * b).sum();
                let gx = grad!(x);
                for i in 0..p.len() {
                    gx[i] += beta * p[i] * (g[i] - gp);
                }
            }
            Op::LogSoftmax { x, beta } => {
                let gs: f64 = g.iter().sum();
                let gx = grad!(x);
                for i in 0..g.len() {
                    let p = out.data[i].exp();
                    gx[i] += beta * (g[i] - p * gs);
                }
            }
            Op::Log(x) => {
                let xv = &val(x).data;
                let gx = grad!(x);
                for i in 0..g.len() {
                    gx[i] += g[i] / xv[i];
                }
            }
            Op::Exp(x) => {
                let gx = grad!(x);
                for i in 0..g.len() {
                    gx[i] += g[i] * out.data[i];
                }
            }
            Op::Sqrt(x) => {
                let gx = grad!(x);
                for i in 0..g.len() {
                    gx[i] += g[i] * 0.5 / out.data[i];
                }
            }
            Op::Sum(x) => {
                let gx = grad!(x);
                for v in gx.iter_mut() {
                    *v += g[0];
                }
            }
            Op::Square(x) => {
                let xv = &val(x).data;
                let gx = grad!(x);
                for i in 0..g.len() {
                    gx[i] += 2.0 * xv[i] * g[i];
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (&val(a).data, &val(b).data);
                let scalar_b = bv.len() == 1 && av.len() != 1;
                {
                    let ga = grad!(a);
                    for i in 0..g.len() {
                        ga[i] += g[i] * if scalar_b { bv[0] } else { bv[i] };
                    }
                }
                let gb = grad!(b);
                if scalar_b {
                    gb[0] += g.iter().zip(av).map(|(x, y)| x * y).sum::<f64>();
                } else {
                    for i in 0..g.len() {
                        gb[i] += g[i] * av[i];
                    }
                }
            }
            Op::Div(a, b) => {
                let (av, bv) = (&val(a).data, &val(b).data);
                let scalar_b = bv.len() == 1 && av.len() != 1;
                {
                    let ga = grad!(a);
                    for i in 0..g.len() {
                        ga[i] += g[i] / if scalar_b { bv[0] } else { bv[i] };
                    }
                }
                let gb = grad!(b);
                if scalar_b {
                    let d = bv[0];
                    gb[0] -= g.iter().zip(av).map(|(x, y)| x * y).sum::<f64>() / (d * d);
                } else {
                    for i in 0..g.len() {
                        gb[i] -= g[i] * av[i] / (bv[i] * bv[i]);
                    }
                }
            }
            Op::Clip { x, lo, hi } => {
                let xv = &val(x).data;
                let gx = grad!(x);
                for i in 0..g.len() {
                    if xv[i] >= lo && xv[i] <= hi {
                        gx[i] += g[i];
                    }
                }
            }
            Op::Add(a, b) => {
                {
                    let ga = grad!(a);
                    for i in 0..g.len() {
                        ga[i] += g[i];
                    }
                }
                let gb = grad!(b);
                for i in 0..g.len() {
                    gb[i] += g[i];
                }
            }
            Op::Sub(a, b) => {
                {
                    let ga = grad!(a);
                    for i in 0..g.len() {
                        ga[i] += g[i];
                    }
                }
                let gb = grad!(b);
                for i in 0..g.len() {
                    gb[i] -= g[i];
                }
            }
            Op::Scale(x, c) => {
                let gx = grad!(x);
                for i in 0..g.len() {
                    gx[i] += c * g[i];
                }
            }
            Op::AddScalar(x) => {
                let gx = grad!(x);
                for i in 0..g.len() {
                    gx[i] += g[i];
                }
            }
            Op::Index(x, i) => {
                let gx = grad!(x);
                gx[i] += g[0];
            }
            Op::Row(x, r) => {
                let cols = val(x).cols;
                let gx = grad!(x);
                for (c, gv) in g.iter().enumerate() {
                    gx[r * cols + c] += gv;
                }
            }
            Op::Stack(ref xs) => {
                for (i, &x) in xs.iter().enumerate() {
                    grad!(x)[0] += g[i];
                }
            }
            Op::Reshape(x) => {
                let gx = grad!(x);
                for (a, b) in gx.iter_mut().zip(g) {
                    *a += b;
                }
            }
            Op::Transpose(x) => {
                let (rows, cols) = val(x).shape();
                let gx = grad!(x);
                // out is cols×rows; out[c, r] = x[r, c]
                for r in 0..rows {
                    for c in 0..cols {
                        gx[r * cols + c] += g[c * rows + r];
                    }
                }
            }
        }
    }

    /// Name of the primitive that produced `v`.
    pub fn op_name(&self, v: Var) -> &'static str {
        self.nodes[v.0].op.name()
    }
}

pub(crate) fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// Adjoints of every node reachable from the output.
#[derive(Debug, Clone)]
pub struct Gradients {
    adj: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient with respect to `v`; zeros when `v` does not influence the output.
    pub fn wrt(&self, v: Var, len: usize) -> Vec<f64> {
        match self.adj.get(v.0).and_then(|g| g.as_ref()) {
            Some(g) => g.clone(),
            None => vec![0.0; len],
        }
    }

    fn add_into(&self, v: Var, dst: &mut [f64]) {
        if let Some(Some(g)) = self.adj.get(v.0) {
            for (d, s) in dst.iter_mut().zip(g) {
                *d += s;
            }
        }
    }
}

/// Leaves recorded for a [`ParamVector`], one per segment.
#[derive(Debug, Clone)]
pub struct ParamVars {
    pub vars: Vec<Var>,
    layout: ParamVector,
}

impl ParamVars {
    pub fn get(&self, name: &str) -> Option<Var> {
        self.layout.layout().iter().position(|s| s.name == name).map(|i| self.vars[i])
    }

    pub fn len(&self) -> usize {
        self.layout.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layout.is_empty()
    }

    /// Flat gradient in the parameter layout.
    pub fn flat_grad(&self, grads: &Gradients) -> Vec<f64> {
        let mut out = vec![0.0; self.layout.len()];
        for (seg, &v) in self.layout.layout().iter().zip(&self.vars) {
            grads.add_into(v, &mut out[seg.range()]);
        }
        out
    }

    /// Gradient as a [`ParamVector`] keyed by segment name.
    pub fn grad(&self, grads: &Gradients) -> ParamVector {
        self.layout.with_values(self.flat_grad(grads)).expect("layout length is fixed")
    }
}
