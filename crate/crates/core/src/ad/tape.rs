use std::f64::consts::PI;

use super::tensor::{gemm, Tensor};
use super::AdError;

/// Handle to a node of a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Input { name: String, param: bool },
    Const(Tensor),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Minimum(Var, Var),
    Scale(Var, f64),
    AddScalar(Var, f64),
    Elu(Var),
    Tanh(Var),
    Exp(Var),
    LogSoftmax(Var),
    GaussianLogDensity { x: Var, mean: Var, log_std: Var },
    Sum(Var),
    Mean(Var),
    RowSum(Var),
    Clip(Var, f64, f64),
    StopGradient(Var),
}

impl Op {
    fn kind(&self) -> &'static str {
        match self {
            Op::Input { .. } => "input",
            Op::Const(_) => "const",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Minimum(..) => "minimum",
            Op::Scale(..) => "scale",
            Op::AddScalar(..) => "add_scalar",
            Op::Elu(_) => "elu",
            Op::Tanh(_) => "tanh",
            Op::Exp(_) => "exp",
            Op::LogSoftmax(_) => "log_softmax",
            Op::GaussianLogDensity { .. } => "gaussian_log_density",
            Op::Sum(_) => "sum",
            Op::Mean(_) => "mean",
            Op::RowSum(_) => "row_sum",
            Op::Clip(..) => "clip",
            Op::StopGradient(_) => "stop_gradient",
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    needs_grad: bool,
}

/// Gradients of a scalar (or seeded) output with respect to every
/// parameter input of a tape, in declaration order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    entries: Vec<(String, Tensor)>,
}

impl Gradients {
    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.entries
            .iter_mut()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.entries.iter_mut().map(|(n, t)| (n.as_str(), t))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Euclidean norm over all entries whose name passes `filter`.
    pub fn norm_where(&self, filter: impl Fn(&str) -> bool) -> f64 {
        self.entries
            .iter()
            .filter(|(n, _)| filter(n))
            .map(|(_, t)| t.squared_norm())
            .sum::<f64>()
            .sqrt()
    }
}

/// A recorded computation over named inputs.
///
/// The graph is built once, then evaluated any number of times: bind the
/// named inputs, call [`Tape::forward`], read values, and call
/// [`Tape::backward`] for gradients of the parameter inputs. Nodes are
/// appended in construction order, which is a topological order.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    values: Vec<Option<Tensor>>,
    evaluated: bool,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, op: Op) -> Var {
        let needs_grad = match &op {
            Op::Input { param, .. } => *param,
            Op::Const(_) | Op::StopGradient(_) => false,
            Op::MatMul(a, b)
            | Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::Minimum(a, b) => self.nodes[a.0].needs_grad || self.nodes[b.0].needs_grad,
            Op::GaussianLogDensity { x, mean, log_std } => {
                self.nodes[x.0].needs_grad
                    || self.nodes[mean.0].needs_grad
                    || self.nodes[log_std.0].needs_grad
            }
            Op::Scale(a, _)
            | Op::AddScalar(a, _)
            | Op::Elu(a)
            | Op::Tanh(a)
            | Op::Exp(a)
            | Op::LogSoftmax(a)
            | Op::Sum(a)
            | Op::Mean(a)
            | Op::RowSum(a)
            | Op::Clip(a, ..) => self.nodes[a.0].needs_grad,
        };
        let value = match &op {
            Op::Const(t) => Some(t.clone()),
            _ => None,
        };
        self.nodes.push(Node { op, needs_grad });
        self.values.push(value);
        self.evaluated = false;
        Var(self.nodes.len() - 1)
    }

    /// A differentiable named input (a learnable parameter).
    pub fn param(&mut self, name: &str) -> Var {
        self.push(Op::Input {
            name: name.to_string(),
            param: true,
        })
    }

    /// A named data input; no gradient is produced for it.
    pub fn input(&mut self, name: &str) -> Var {
        self.push(Op::Input {
            name: name.to_string(),
            param: false,
        })
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(Op::Const(t))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        self.push(Op::MatMul(a, b))
    }

    /// Elementwise sum with row/column broadcasting of unit extents.
    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.push(Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.push(Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.push(Op::Mul(a, b))
    }

    pub fn minimum(&mut self, a: Var, b: Var) -> Var {
        self.push(Op::Minimum(a, b))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        self.push(Op::Scale(a, k))
    }

    pub fn add_scalar(&mut self, a: Var, k: f64) -> Var {
        self.push(Op::AddScalar(a, k))
    }

    /// ELU with alpha = 1.
    pub fn elu(&mut self, a: Var) -> Var {
        self.push(Op::Elu(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.push(Op::Tanh(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.push(Op::Exp(a))
    }

    /// Row-wise log-softmax.
    pub fn log_softmax(&mut self, a: Var) -> Var {
        self.push(Op::LogSoftmax(a))
    }

    /// Elementwise log N(x; mean, exp(log_std)^2). `log_std` may be a
    /// single row broadcast over the batch.
    pub fn gaussian_log_density(&mut self, x: Var, mean: Var, log_std: Var) -> Var {
        self.push(Op::GaussianLogDensity { x, mean, log_std })
    }

    pub fn sum(&mut self, a: Var) -> Var {
        self.push(Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        self.push(Op::Mean(a))
    }

    pub fn row_sum(&mut self, a: Var) -> Var {
        self.push(Op::RowSum(a))
    }

    pub fn clip(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        self.push(Op::Clip(a, lo, hi))
    }

    pub fn stop_gradient(&mut self, a: Var) -> Var {
        self.push(Op::StopGradient(a))
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Names of all inputs, with a flag marking parameters.
    pub fn input_names(&self) -> impl Iterator<Item = (&str, bool)> {
        self.nodes.iter().filter_map(|n| match &n.op {
            Op::Input { name, param } => Some((name.as_str(), *param)),
            _ => None,
        })
    }

    fn find_input(&self, name: &str) -> Option<usize> {
        self.nodes.iter().position(|n| match &n.op {
            Op::Input { name: n, .. } => n == name,
            _ => false,
        })
    }

    /// Binds a value to a named input. Unknown names are an error.
    pub fn bind(&mut self, name: &str, value: Tensor) -> Result<(), AdError> {
        let id = self
            .find_input(name)
            .ok_or_else(|| AdError::UnknownInput(name.to_string()))?;
        self.values[id] = Some(value);
        self.evaluated = false;
        Ok(())
    }

    /// Binds a value only if the tape declares `name`.
    pub fn bind_if_present(&mut self, name: &str, value: &Tensor) -> bool {
        match self.find_input(name) {
            Some(id) => {
                self.values[id] = Some(value.clone());
                self.evaluated = false;
                true
            }
            None => false,
        }
    }

    pub fn bound(&self, name: &str) -> Option<&Tensor> {
        self.find_input(name).and_then(|id| self.values[id].as_ref())
    }

    /// Binds the given inputs and evaluates every node.
    pub fn run<'a>(
        &mut self,
        inputs: impl IntoIterator<Item = (&'a str, Tensor)>,
    ) -> Result<(), AdError> {
        for (name, t) in inputs {
            self.bind(name, t)?;
        }
        self.forward()
    }

    /// Evaluates every node in order using the currently bound inputs.
    pub fn forward(&mut self) -> Result<(), AdError> {
        self.evaluated = false;
        for id in 0..self.nodes.len() {
            let out = match &self.nodes[id].op {
                Op::Input { name, .. } => {
                    if self.values[id].is_none() {
                        return Err(AdError::Unbound(name.clone()));
                    }
                    continue;
                }
                Op::Const(_) => continue,
                op => self.eval(id, op)?,
            };
            self.values[id] = Some(out);
        }
        self.evaluated = true;
        Ok(())
    }

    fn val(&self, v: Var) -> &Tensor {
        self.values[v.0]
            .as_ref()
            .expect("operands are evaluated before their consumers")
    }

    fn shape_err(&self, id: usize, detail: String) -> AdError {
        let label = match &self.nodes[id].op {
            Op::Input { name, .. } => name.clone(),
            op => op.kind().to_string(),
        };
        AdError::Shape {
            node: id,
            op: label,
            detail,
        }
    }

    fn eval(&self, id: usize, op: &Op) -> Result<Tensor, AdError> {
        Ok(match *op {
            Op::MatMul(a, b) => {
                let (a, b) = (self.val(a), self.val(b));
                if a.cols() != b.rows() {
                    return Err(
                        self.shape_err(id, format!("{:?} x {:?}", a.shape(), b.shape()))
                    );
                }
                gemm(a, false, b, false)
            }
            Op::Add(a, b) => self.broadcast(id, a, b, |x, y| x + y)?,
            Op::Sub(a, b) => self.broadcast(id, a, b, |x, y| x - y)?,
            Op::Mul(a, b) => self.broadcast(id, a, b, |x, y| x * y)?,
            Op::Minimum(a, b) => self.broadcast(id, a, b, f64::min)?,
            Op::Scale(a, k) => self.val(a).map(|x| x * k),
            Op::AddScalar(a, k) => self.val(a).map(|x| x + k),
            Op::Elu(a) => self.val(a).map(elu),
            Op::Tanh(a) => self.val(a).map(f64::tanh),
            Op::Exp(a) => self.val(a).map(f64::exp),
            Op::LogSoftmax(a) => {
                let a = self.val(a);
                let mut out = a.clone();
                for r in 0..a.rows() {
                    let row = a.row_slice(r);
                    let lse = log_sum_exp(row);
                    for (c, &x) in row.iter().enumerate() {
                        out.set(r, c, x - lse);
                    }
                }
                out
            }
            Op::GaussianLogDensity { x, mean, log_std } => {
                let (xv, mv, lv) = (self.val(x), self.val(mean), self.val(log_std));
                if xv.shape() != mv.shape()
                    || lv.cols() != xv.cols()
                    || (lv.rows() != 1 && lv.rows() != xv.rows())
                {
                    return Err(self.shape_err(
                        id,
                        format!(
                            "x {:?}, mean {:?}, log_std {:?}",
                            xv.shape(),
                            mv.shape(),
                            lv.shape()
                        ),
                    ));
                }
                let half_ln_2pi = 0.5 * (2.0 * PI).ln();
                let mut out = Tensor::zeros(xv.rows(), xv.cols());
                for r in 0..xv.rows() {
                    let lr = if lv.rows() == 1 { 0 } else { r };
                    for c in 0..xv.cols() {
                        let ls = lv.get(lr, c);
                        let z = (xv.get(r, c) - mv.get(r, c)) * (-ls).exp();
                        out.set(r, c, -0.5 * z * z - ls - half_ln_2pi);
                    }
                }
                out
            }
            Op::Sum(a) => Tensor::scalar(self.val(a).data().iter().sum()),
            Op::Mean(a) => {
                let a = self.val(a);
                if a.is_empty() {
                    return Err(self.shape_err(id, "mean of empty tensor".into()));
                }
                Tensor::scalar(a.data().iter().sum::<f64>() / a.len() as f64)
            }
            Op::RowSum(a) => {
                let a = self.val(a);
                let data = (0..a.rows()).map(|r| a.row_slice(r).iter().sum()).collect();
                Tensor::new(a.rows(), 1, data)?
            }
            Op::Clip(a, lo, hi) => self.val(a).map(|x| x.clamp(lo, hi)),
            Op::StopGradient(a) => self.val(a).clone(),
            Op::Input { .. } | Op::Const(_) => unreachable!(),
        })
    }

    fn broadcast(
        &self,
        id: usize,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor, AdError> {
        let (a, b) = (self.val(a), self.val(b));
        let shape = broadcast_shape(a.shape(), b.shape())
            .ok_or_else(|| self.shape_err(id, format!("{:?} vs {:?}", a.shape(), b.shape())))?;
        if a.shape() == b.shape() {
            let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
            return Tensor::new(shape[0], shape[1], data);
        }
        let mut out = Tensor::zeros(shape[0], shape[1]);
        for r in 0..shape[0] {
            for c in 0..shape[1] {
                out.set(r, c, f(at(a, r, c), at(b, r, c)));
            }
        }
        Ok(out)
    }

    /// Value of a node after [`Tape::forward`].
    pub fn value(&self, v: Var) -> Result<&Tensor, AdError> {
        if !self.evaluated {
            return Err(AdError::NotEvaluated);
        }
        Ok(self.val(v))
    }

    /// Reverse sweep from `output` seeded with `seed`.
    ///
    /// Returns a gradient for every parameter input; parameters with no path
    /// to `output` get an exact zero tensor.
    pub fn backward(&self, output: Var, seed: Tensor) -> Result<Gradients, AdError> {
        if !self.evaluated {
            return Err(AdError::NotEvaluated);
        }
        if seed.shape() != self.val(output).shape() {
            return Err(AdError::SeedShape {
                seed: seed.shape(),
                output: self.val(output).shape(),
            });
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; output.0 + 1];
        grads[output.0] = Some(seed);
        for id in (0..=output.0).rev() {
            if !self.nodes[id].needs_grad {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            let op = &self.nodes[id].op;
            if let Op::Input { .. } = op {
                grads[id] = Some(g);
                continue;
            }
            self.propagate(id, op, &g, &mut grads);
        }
        let mut entries = Vec::new();
        for (id, node) in self.nodes.iter().enumerate() {
            if let Op::Input { name, param: true } = &node.op {
                let shape = self.val(Var(id)).shape();
                let g = grads
                    .get_mut(id)
                    .and_then(Option::take)
                    .unwrap_or_else(|| Tensor::zeros(shape[0], shape[1]));
                entries.push((name.clone(), g));
            }
        }
        Ok(Gradients { entries })
    }

    fn propagate(&self, id: usize, op: &Op, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let y = self.val(Var(id));
        match *op {
            Op::MatMul(a, b) => {
                if self.nodes[a.0].needs_grad {
                    accumulate(grads, a, gemm(g, false, self.val(b), true));
                }
                if self.nodes[b.0].needs_grad {
                    accumulate(grads, b, gemm(self.val(a), true, g, false));
                }
            }
            Op::Add(a, b) => {
                self.send_reduced(grads, a, g.clone());
                self.send_reduced(grads, b, g.clone());
            }
            Op::Sub(a, b) => {
                self.send_reduced(grads, a, g.clone());
                self.send_reduced(grads, b, g.map(|x| -x));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.val(a), self.val(b));
                if self.nodes[a.0].needs_grad {
                    self.send_reduced(grads, a, zip_broadcast(g, bv, |g, y| g * y));
                }
                if self.nodes[b.0].needs_grad {
                    self.send_reduced(grads, b, zip_broadcast(g, av, |g, x| g * x));
                }
            }
            Op::Minimum(a, b) => {
                let (av, bv) = (self.val(a), self.val(b));
                let mut ga = g.clone();
                let mut gb = g.clone();
                for r in 0..g.rows() {
                    for c in 0..g.cols() {
                        if at(av, r, c) <= at(bv, r, c) {
                            gb.set(r, c, 0.0);
                        } else {
                            ga.set(r, c, 0.0);
                        }
                    }
                }
                self.send_reduced(grads, a, ga);
                self.send_reduced(grads, b, gb);
            }
            Op::Scale(a, k) => accumulate(grads, a, g.map(|x| x * k)),
            Op::AddScalar(a, _) => accumulate(grads, a, g.clone()),
            Op::Elu(a) => {
                let x = self.val(a);
                let d = zip3(g, x, y, |g, x, y| if x > 0.0 { g } else { g * (y + 1.0) });
                accumulate(grads, a, d);
            }
            Op::Tanh(a) => accumulate(grads, a, zip_same(g, y, |g, y| g * (1.0 - y * y))),
            Op::Exp(a) => accumulate(grads, a, zip_same(g, y, |g, y| g * y)),
            Op::LogSoftmax(a) => {
                let mut d = g.clone();
                for r in 0..g.rows() {
                    let gs: f64 = g.row_slice(r).iter().sum();
                    for c in 0..g.cols() {
                        d.set(r, c, g.get(r, c) - y.get(r, c).exp() * gs);
                    }
                }
                accumulate(grads, a, d);
            }
            Op::GaussianLogDensity { x, mean, log_std } => {
                let (xv, mv, lv) = (self.val(x), self.val(mean), self.val(log_std));
                let mut dx = Tensor::zeros(xv.rows(), xv.cols());
                let mut dm = Tensor::zeros(xv.rows(), xv.cols());
                let mut dl = Tensor::zeros(lv.rows(), lv.cols());
                for r in 0..xv.rows() {
                    let lr = if lv.rows() == 1 { 0 } else { r };
                    for c in 0..xv.cols() {
                        let inv = (-lv.get(lr, c)).exp();
                        let z = (xv.get(r, c) - mv.get(r, c)) * inv;
                        let gv = g.get(r, c);
                        dm.set(r, c, gv * z * inv);
                        dx.set(r, c, -gv * z * inv);
                        let prev = dl.get(lr, c);
                        dl.set(lr, c, prev + gv * (z * z - 1.0));
                    }
                }
                if self.nodes[x.0].needs_grad {
                    accumulate(grads, x, dx);
                }
                if self.nodes[mean.0].needs_grad {
                    accumulate(grads, mean, dm);
                }
                if self.nodes[log_std.0].needs_grad {
                    accumulate(grads, log_std, dl);
                }
            }
            Op::Sum(a) => {
                let s = self.val(a).shape();
                accumulate(grads, a, Tensor::full(s[0], s[1], g.item()));
            }
            Op::Mean(a) => {
                let av = self.val(a);
                let s = av.shape();
                accumulate(grads, a, Tensor::full(s[0], s[1], g.item() / av.len() as f64));
            }
            Op::RowSum(a) => {
                let s = self.val(a).shape();
                let mut d = Tensor::zeros(s[0], s[1]);
                for r in 0..s[0] {
                    let gv = g.get(r, 0);
                    for c in 0..s[1] {
                        d.set(r, c, gv);
                    }
                }
                accumulate(grads, a, d);
            }
            Op::Clip(a, lo, hi) => {
                let x = self.val(a);
                let d = zip_same(g, x, |g, x| if x >= lo && x <= hi { g } else { 0.0 });
                accumulate(grads, a, d);
            }
            Op::StopGradient(_) | Op::Input { .. } | Op::Const(_) => {}
        }
    }

    /// Sums `g` over the axes along which `v` was broadcast, then accumulates.
    fn send_reduced(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        let target = self.val(v).shape();
        if target == g.shape() {
            accumulate(grads, v, g);
            return;
        }
        let mut out = Tensor::zeros(target[0], target[1]);
        for r in 0..g.rows() {
            let tr = if target[0] == 1 { 0 } else { r };
            for c in 0..g.cols() {
                let tc = if target[1] == 1 { 0 } else { c };
                let prev = out.get(tr, tc);
                out.set(tr, tc, prev + g.get(r, c));
            }
        }
        accumulate(grads, v, out);
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot => *slot = Some(g),
    }
}

fn broadcast_shape(a: [usize; 2], b: [usize; 2]) -> Option<[usize; 2]> {
    let dim = |x: usize, y: usize| match (x, y) {
        _ if x == y => Some(x),
        (1, y) => Some(y),
        (x, 1) => Some(x),
        _ => None,
    };
    Some([dim(a[0], b[0])?, dim(a[1], b[1])?])
}

fn at(t: &Tensor, r: usize, c: usize) -> f64 {
    let rr = if t.rows() == 1 { 0 } else { r };
    let cc = if t.cols() == 1 { 0 } else { c };
    t.get(rr, cc)
}

fn zip_same(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.rows(), a.cols(), data).expect("same shape")
}

fn zip3(a: &Tensor, b: &Tensor, c: &Tensor, f: impl Fn(f64, f64, f64) -> f64) -> Tensor {
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .zip(c.data())
        .map(|((&x, &y), &z)| f(x, y, z))
        .collect();
    Tensor::new(a.rows(), a.cols(), data).expect("same shape")
}

/// `g` has the full broadcast shape; `other` may be broadcast into it.
fn zip_broadcast(g: &Tensor, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    if g.shape() == other.shape() {
        return zip_same(g, other, f);
    }
    let mut out = g.clone();
    for r in 0..g.rows() {
        for c in 0..g.cols() {
            out.set(r, c, f(g.get(r, c), at(other, r, c)));
        }
    }
    out
}

fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

fn log_sum_exp(row: &[f64]) -> f64 {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + row.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}
