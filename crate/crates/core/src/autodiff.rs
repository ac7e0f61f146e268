//! Define-by-run reverse-mode automatic differentiation over dense matrices.
//!
//! A [`Tape`] is an append-only list of nodes. Every node holds the forward
//! value of one operation; inputs always refer to earlier nodes, so the
//! tape is topologically ordered by construction and [`Tape::backward`]
//! is a single reverse sweep.
//!
//! Shape rules (rows are batch items):
//!
//! | op | inputs | output |
//! |----|--------|--------|
//! | `Affine` | x `n×i`, W `o×i`, b `1×o` | `x·Wᵀ + b`, `n×o` |
//! | `Relu`, `Tanh`, `Exp`, `Log`, `Square`, `Scale` | x | same as x |
//! | `Add`, `Sub`, `Hadamard` | a, b of equal shape | same |
//! | `Sum`, `Mean` | x | `1×1` |
//! | `LogSumExpRows` | x `n×k` | `n×1` |
//! | `ConcatCols` | a `n×i`, b `n×j` | `n×(i+j)` |
//!
//! There is no broadcasting apart from the row-vector bias of `Affine`.

use crate::error::{Error, Result};
use crate::mat::{gemm_into, Mat};

/// Index of a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A differentiable operation together with its input nodes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Op {
    Affine { x: NodeId, w: NodeId, b: NodeId },
    Relu(NodeId),
    Tanh(NodeId),
    Exp(NodeId),
    Log(NodeId),
    Square(NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Hadamard(NodeId, NodeId),
    Sum(NodeId),
    Mean(NodeId),
    LogSumExpRows(NodeId),
    ConcatCols(NodeId, NodeId),
    Scale(NodeId, f64),
}

impl Op {
    pub fn name(&self) -> &'static str {
        match self {
            Op::Affine { .. } => "affine",
            Op::Relu(_) => "relu",
            Op::Tanh(_) => "tanh",
            Op::Exp(_) => "exp",
            Op::Log(_) => "log",
            Op::Square(_) => "square",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Hadamard(..) => "hadamard",
            Op::Sum(_) => "sum",
            Op::Mean(_) => "mean",
            Op::LogSumExpRows(_) => "logsumexp-rows",
            Op::ConcatCols(..) => "concat-cols",
            Op::Scale(..) => "scale",
        }
    }

    fn inputs(&self) -> ([NodeId; 3], usize) {
        let z = NodeId(0);
        match *self {
            Op::Affine { x, w, b } => ([x, w, b], 3),
            Op::Relu(a)
            | Op::Tanh(a)
            | Op::Exp(a)
            | Op::Log(a)
            | Op::Square(a)
            | Op::Sum(a)
            | Op::Mean(a)
            | Op::LogSumExpRows(a)
            | Op::Scale(a, _) => ([a, z, z], 1),
            Op::Add(a, b) | Op::Sub(a, b) | Op::Hadamard(a, b) | Op::ConcatCols(a, b) => {
                ([a, b, z], 2)
            }
        }
    }
}

#[derive(Debug)]
struct Node {
    op: Option<Op>,
    value: Mat,
}

/// Append-only computation record.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar root with respect to every node of a tape.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Mat>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> &Mat {
        &self.grads[id.0]
    }

    pub fn take(&mut self, id: NodeId) -> Mat {
        std::mem::replace(&mut self.grads[id.0], Mat::zeros(0, 0))
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }
}

fn same_shape(op: &'static str, a: &Mat, b: &Mat) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Shape {
            op,
            left: a.shape(),
            right: b.shape(),
        });
    }
    Ok(())
}

fn zip_with(a: &Mat, b: &Mat, f: impl Fn(f64, f64) -> f64) -> Mat {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Mat::new(a.rows(), a.cols(), data).expect("congruent shapes")
}

/// Row-wise `max + log Σ exp(x - max)`.
pub fn logsumexp(row: &[f64]) -> f64 {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + row.iter().map(|&v| (v - m).exp()).sum::<f64>().ln()
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records an input (parameter, data or constant).
    pub fn leaf(&mut self, value: Mat) -> NodeId {
        self.nodes.push(Node { op: None, value });
        NodeId(self.nodes.len() - 1)
    }

    pub fn value(&self, id: NodeId) -> &Mat {
        &self.nodes[id.0].value
    }

    fn check_ids(&self, op: &Op) -> Result<()> {
        let (ids, k) = op.inputs();
        for id in &ids[..k] {
            if id.0 >= self.nodes.len() {
                return Err(Error::Domain {
                    op: op.name(),
                    detail: format!("unknown input node {}", id.0),
                });
            }
        }
        Ok(())
    }

    /// Evaluates `op` on existing nodes and appends the result.
    pub fn apply(&mut self, op: Op) -> Result<NodeId> {
        self.check_ids(&op)?;
        let v = |id: NodeId| &self.nodes[id.0].value;
        let value = match op {
            Op::Affine { x, w, b } => {
                let (x, w, b) = (v(x), v(w), v(b));
                if x.cols() != w.cols() {
                    return Err(Error::Shape {
                        op: "affine",
                        left: x.shape(),
                        right: w.shape(),
                    });
                }
                if b.shape() != (1, w.rows()) {
                    return Err(Error::Shape {
                        op: "affine",
                        left: w.shape(),
                        right: b.shape(),
                    });
                }
                let mut out = x.matmul_t(w)?;
                for i in 0..out.rows() {
                    for (o, bias) in out.row_mut(i).iter_mut().zip(b.data()) {
                        *o += bias;
                    }
                }
                out
            }
            Op::Relu(a) => v(a).map(|t| if t > 0.0 { t } else { 0.0 }),
            Op::Tanh(a) => v(a).map(f64::tanh),
            Op::Exp(a) => v(a).map(f64::exp),
            Op::Log(a) => {
                let a = v(a);
                if let Some(bad) = a.data().iter().find(|&&t| !(t > 0.0)) {
                    return Err(Error::Domain {
                        op: "log",
                        detail: format!("non-positive input {bad}"),
                    });
                }
                a.map(f64::ln)
            }
            Op::Square(a) => v(a).map(|t| t * t),
            Op::Add(a, b) => {
                same_shape("add", v(a), v(b))?;
                zip_with(v(a), v(b), |x, y| x + y)
            }
            Op::Sub(a, b) => {
                same_shape("sub", v(a), v(b))?;
                zip_with(v(a), v(b), |x, y| x - y)
            }
            Op::Hadamard(a, b) => {
                same_shape("hadamard", v(a), v(b))?;
                zip_with(v(a), v(b), |x, y| x * y)
            }
            Op::Sum(a) => Mat::scalar(v(a).sum()),
            Op::Mean(a) => {
                let a = v(a);
                if a.is_empty() {
                    return Err(Error::Domain {
                        op: "mean",
                        detail: "empty input".into(),
                    });
                }
                Mat::scalar(a.sum() / a.len() as f64)
            }
            Op::LogSumExpRows(a) => {
                let a = v(a);
                if a.cols() == 0 {
                    return Err(Error::Domain {
                        op: "logsumexp-rows",
                        detail: "zero columns".into(),
                    });
                }
                Mat::from_fn(a.rows(), 1, |i, _| logsumexp(a.row(i)))
            }
            Op::ConcatCols(a, b) => v(a).hcat(v(b))?,
            Op::Scale(a, c) => v(a).map(|t| t * c),
        };
        self.nodes.push(Node {
            op: Some(op),
            value,
        });
        Ok(NodeId(self.nodes.len() - 1))
    }

    pub fn affine(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(Op::Affine { x, w, b })
    }
    pub fn relu(&mut self, x: NodeId) -> Result<NodeId> {
        self.apply(Op::Relu(x))
    }
    pub fn tanh(&mut self, x: NodeId) -> Result<NodeId> {
        self.apply(Op::Tanh(x))
    }
    pub fn exp(&mut self, x: NodeId) -> Result<NodeId> {
        self.apply(Op::Exp(x))
    }
    pub fn log(&mut self, x: NodeId) -> Result<NodeId> {
        self.apply(Op::Log(x))
    }
    pub fn square(&mut self, x: NodeId) -> Result<NodeId> {
        self.apply(Op::Square(x))
    }
    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(Op::Add(a, b))
    }
    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(Op::Sub(a, b))
    }
    pub fn hadamard(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(Op::Hadamard(a, b))
    }
    pub fn sum(&mut self, x: NodeId) -> Result<NodeId> {
        self.apply(Op::Sum(x))
    }
    pub fn mean(&mut self, x: NodeId) -> Result<NodeId> {
        self.apply(Op::Mean(x))
    }
    pub fn logsumexp_rows(&mut self, x: NodeId) -> Result<NodeId> {
        self.apply(Op::LogSumExpRows(x))
    }
    pub fn concat_cols(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(Op::ConcatCols(a, b))
    }
    pub fn scale(&mut self, x: NodeId, c: f64) -> Result<NodeId> {
        self.apply(Op::Scale(x, c))
    }

    /// Reverse sweep from a scalar root.
    ///
    /// Nodes that do not feed into `root` receive zero gradients.
    pub fn backward(&self, root: NodeId) -> Result<Gradients> {
        let root_value = self
            .nodes
            .get(root.0)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown root node {}", root.0)))?;
        if root_value.value.shape() != (1, 1) {
            return Err(Error::Domain {
                op: "backward",
                detail: format!("root must be 1x1, got {:?}", root_value.value.shape()),
            });
        }
        let mut grads: Vec<Option<Mat>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Mat::scalar(1.0));

        for id in (0..=root.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            if let Some(op) = node.op {
                self.propagate(op, &node.value, &g, &mut grads);
            }
            grads[id] = Some(g);
        }

        let grads = grads
            .into_iter()
            .zip(&self.nodes)
            .map(|(g, n)| g.unwrap_or_else(|| Mat::zeros(n.value.rows(), n.value.cols())))
            .collect();
        Ok(Gradients { grads })
    }

    fn propagate(&self, op: Op, out: &Mat, g: &Mat, grads: &mut [Option<Mat>]) {
        let val = |id: NodeId| &self.nodes[id.0].value;
        let mut acc = |id: NodeId, delta: Mat| match &mut grads[id.0] {
            Some(existing) => existing.add_assign(&delta),
            slot @ None => *slot = Some(delta),
        };
        match op {
            Op::Affine { x, w, b } => {
                let (xv, wv) = (val(x), val(w));
                let (n, i, o) = (xv.rows(), xv.cols(), wv.rows());
                // dx = g · W
                let mut dx = Mat::zeros(n, i);
                gemm_into(
                    n,
                    o,
                    i,
                    (g.data(), o as isize, 1),
                    (wv.data(), i as isize, 1),
                    dx.data_mut(),
                    false,
                );
                // dW = gᵀ · x
                let mut dw = Mat::zeros(o, i);
                gemm_into(
                    o,
                    n,
                    i,
                    (g.data(), 1, o as isize),
                    (xv.data(), i as isize, 1),
                    dw.data_mut(),
                    false,
                );
                let mut db = Mat::zeros(1, o);
                for r in 0..n {
                    for (d, gv) in db.data_mut().iter_mut().zip(g.row(r)) {
                        *d += gv;
                    }
                }
                acc(x, dx);
                acc(w, dw);
                acc(b, db);
            }
            Op::Relu(a) => acc(a, zip_with(val(a), g, |x, gv| if x > 0.0 { gv } else { 0.0 })),
            Op::Tanh(a) => acc(a, zip_with(out, g, |t, gv| gv * (1.0 - t * t))),
            Op::Exp(a) => acc(a, zip_with(out, g, |e, gv| gv * e)),
            Op::Log(a) => acc(a, zip_with(val(a), g, |x, gv| gv / x)),
            Op::Square(a) => acc(a, zip_with(val(a), g, |x, gv| 2.0 * x * gv)),
            Op::Add(a, b) => {
                acc(a, g.clone());
                acc(b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(a, g.clone());
                acc(b, g.map(|v| -v));
            }
            Op::Hadamard(a, b) => {
                let da = zip_with(val(b), g, |y, gv| y * gv);
                let db = zip_with(val(a), g, |x, gv| x * gv);
                acc(a, da);
                acc(b, db);
            }
            Op::Sum(a) => {
                let (r, c) = val(a).shape();
                acc(a, Mat::filled(r, c, g.item()));
            }
            Op::Mean(a) => {
                let (r, c) = val(a).shape();
                acc(a, Mat::filled(r, c, g.item() / (r * c) as f64));
            }
            Op::LogSumExpRows(a) => {
                let av = val(a);
                let mut d = Mat::zeros(av.rows(), av.cols());
                for i in 0..av.rows() {
                    let row = av.row(i);
                    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let total: f64 = row.iter().map(|v| (v - m).exp()).sum();
                    for (dst, v) in d.row_mut(i).iter_mut().zip(row) {
                        *dst = g.get(i, 0) * (v - m).exp() / total;
                    }
                }
                acc(a, d);
            }
            Op::ConcatCols(a, b) => {
                let ca = val(a).cols();
                let cb = val(b).cols();
                let da = Mat::from_fn(g.rows(), ca, |i, j| g.get(i, j));
                let db = Mat::from_fn(g.rows(), cb, |i, j| g.get(i, ca + j));
                acc(a, da);
                acc(b, db);
            }
            Op::Scale(a, c) => acc(a, g.map(|v| v * c)),
        }
    }
}

/// Compares reverse-mode gradients of a scalar graph with central differences.
///
/// Returns the maximum over all coordinates of
/// `|analytic - numeric| / (|analytic| + |numeric| + 1e-12)`.
pub fn grad_check<F>(f: F, x: &Mat, h: f64) -> Result<f64>
where
    F: Fn(&mut Tape, NodeId) -> Result<NodeId>,
{
    grad_check_many(|tape, ids| f(tape, ids[0]), std::slice::from_ref(x), h)
}

/// [`grad_check`] over several input matrices at once.
pub fn grad_check_many<F>(f: F, xs: &[Mat], h: f64) -> Result<f64>
where
    F: Fn(&mut Tape, &[NodeId]) -> Result<NodeId>,
{
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("step h must be positive, got {h}")));
    }
    let eval = |inputs: &[Mat]| -> Result<f64> {
        let mut tape = Tape::new();
        let ids: Vec<NodeId> = inputs.iter().map(|m| tape.leaf(m.clone())).collect();
        let root = f(&mut tape, &ids)?;
        Ok(tape.value(root).item())
    };

    let mut tape = Tape::new();
    let ids: Vec<NodeId> = xs.iter().map(|m| tape.leaf(m.clone())).collect();
    let root = f(&mut tape, &ids)?;
    let grads = tape.backward(root)?;

    let mut worst: f64 = 0.0;
    let mut work: Vec<Mat> = xs.to_vec();
    for (k, id) in ids.iter().enumerate() {
        let analytic = grads.get(*id);
        for c in 0..xs[k].len() {
            let orig = xs[k].data()[c];
            work[k].data_mut()[c] = orig + h;
            let up = eval(&work)?;
            work[k].data_mut()[c] = orig - h;
            let down = eval(&work)?;
            work[k].data_mut()[c] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic.data()[c];
            let rel = (a - numeric).abs() / (a.abs() + numeric.abs() + 1e-12);
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat {
        Mat::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn relu_forward() {
        let mut t = Tape::new();
        let x = t.leaf(Mat::from_rows(&[[-1.0, 2.0]]));
        let y = t.relu(x).unwrap();
        assert_eq!(t.value(y), &Mat::from_rows(&[[0.0, 2.0]]));
    }

    #[test]
    fn logsumexp_of_equal_entries() {
        let mut t = Tape::new();
        let x = t.leaf(Mat::from_rows(&[[0.0, 0.0]]));
        let y = t.logsumexp_rows(x).unwrap();
        assert!((t.value(y).item() - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn logsumexp_does_not_overflow() {
        let mut t = Tape::new();
        let x = t.leaf(Mat::from_rows(&[[700.0, 699.0], [-700.0, -700.0]]));
        let y = t.logsumexp_rows(x).unwrap();
        let v = t.value(y);
        assert!(v.all_finite());
        assert!((v.get(0, 0) - (700.0 + (1.0 + (-1f64).exp()).ln())).abs() < 1e-12);
        assert!((v.get(1, 0) - (-700.0 + 2f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn affine_identity() {
        let mut t = Tape::new();
        let x = t.leaf(Mat::from_rows(&[[3.0], [4.0]]));
        // rows are batch items: a 2x1 input needs a 1x1 identity weight
        let w = t.leaf(Mat::identity(1));
        let b = t.leaf(Mat::zeros(1, 1));
        let y = t.affine(x, w, b).unwrap();
        assert_eq!(t.value(y), &Mat::from_rows(&[[3.0], [4.0]]));

        let x2 = t.leaf(Mat::from_rows(&[[3.0, 4.0]]));
        let w2 = t.leaf(Mat::identity(2));
        let b2 = t.leaf(Mat::zeros(1, 2));
        let y2 = t.affine(x2, w2, b2).unwrap();
        assert_eq!(t.value(y2), &Mat::from_rows(&[[3.0, 4.0]]));
    }

    #[test]
    fn shape_errors_name_op() {
        let mut t = Tape::new();
        let a = t.leaf(Mat::zeros(2, 2));
        let b = t.leaf(Mat::zeros(2, 3));
        let err = t.add(a, b).unwrap_err().to_string();
        assert!(err.contains("add") && err.contains("(2, 2)") && err.contains("(2, 3)"));
        let w = t.leaf(Mat::zeros(4, 3));
        let bias = t.leaf(Mat::zeros(1, 4));
        assert!(t.affine(a, w, bias).is_err());
    }

    #[test]
    fn log_rejects_non_positive() {
        let mut t = Tape::new();
        let a = t.leaf(Mat::from_rows(&[[1.0, 0.0]]));
        assert!(matches!(t.log(a), Err(Error::Domain { op: "log", .. })));
    }

    #[test]
    fn backward_square() {
        let mut t = Tape::new();
        let x = t.leaf(Mat::scalar(3.0));
        let y = t.square(x).unwrap();
        let g = t.backward(y).unwrap();
        assert_eq!(g.get(x).item(), 6.0);
        assert_eq!(g.get(y).item(), 1.0);
    }

    #[test]
    fn backward_fan_out_accumulates() {
        let mut t = Tape::new();
        let x = t.leaf(Mat::from_rows(&[[1.0, 2.0]]));
        let h = t.hadamard(x, x).unwrap();
        let s = t.sum(h).unwrap();
        let g = t.backward(s).unwrap();
        assert_eq!(g.get(x), &Mat::from_rows(&[[2.0, 4.0]]));
    }

    #[test]
    fn backward_logsumexp_softmax() {
        for a in [-5.0, 0.0, 3.5, 600.0] {
            let mut t = Tape::new();
            let x = t.leaf(Mat::from_rows(&[[a, a]]));
            let y = t.logsumexp_rows(x).unwrap();
            let g = t.backward(y).unwrap();
            assert!(g.get(x).data().iter().all(|v| (v - 0.5).abs() < 1e-15), "{a}: {:?}", g.get(x));
        }
    }

    #[test]
    fn backward_rejects_non_scalar_root() {
        let mut t = Tape::new();
        let x = t.leaf(Mat::zeros(1, 2));
        assert!(t.backward(x).is_err());
    }

    #[test]
    fn unreachable_nodes_get_zero_gradient() {
        let mut t = Tape::new();
        let x = t.leaf(Mat::from_rows(&[[1.0, 2.0]]));
        let unused = t.leaf(Mat::from_rows(&[[5.0], [6.0]]));
        let e = t.exp(unused).unwrap();
        let s = t.sum(x).unwrap();
        let g = t.backward(s).unwrap();
        assert_eq!(g.get(unused), &Mat::zeros(2, 1));
        assert_eq!(g.get(e), &Mat::zeros(2, 1));
        assert_eq!(g.len(), t.len());
    }

    #[test]
    fn relu_subgradient_at_zero_is_zero() {
        let mut t = Tape::new();
        let x = t.leaf(Mat::from_rows(&[[0.0, 1.0]]));
        let r = t.relu(x).unwrap();
        let s = t.sum(r).unwrap();
        let g = t.backward(s).unwrap();
        assert_eq!(g.get(x), &Mat::from_rows(&[[0.0, 1.0]]));
    }

    #[test]
    fn grad_check_sum_of_squares() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_mat(&mut rng, 3, 2);
        let err = grad_check(
            |t, x| {
                let s = t.square(x)?;
                t.sum(s)
            },
            &x,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn grad_check_relu_away_from_kinks() {
        let x = Mat::from_rows(&[[0.7, -0.3, 1.2], [-0.9, 0.25, 0.4]]);
        let err = grad_check(
            |t, x| {
                let r = t.relu(x)?;
                let q = t.hadamard(r, x)?;
                t.sum(q)
            },
            &x,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-6, "{err}");
    }

    /// Every op against central differences at 100 random smooth points.
    #[test]
    fn every_op_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let h = 1e-5;
        for trial in 0..100 {
            let x = random_mat(&mut rng, 3, 2);
            let w = random_mat(&mut rng, 4, 2);
            let b = random_mat(&mut rng, 1, 4);
            let other = random_mat(&mut rng, 3, 2);
            // keep ReLU inputs at least 10h away from the kink
            let relu_in = x.map(|v| if v.abs() < 10.0 * h { v + 20.0 * h } else { v });
            let positive = x.map(|v| v.abs() + 0.5);

            type Builder = Box<dyn Fn(&mut Tape, &[NodeId]) -> Result<NodeId>>;
            let cases: Vec<(&str, Vec<Mat>, Builder)> = vec![
                (
                    "affine",
                    vec![x.clone(), w.clone(), b.clone()],
                    Box::new(|t, ids| {
                        let a = t.affine(ids[0], ids[1], ids[2])?;
                        let q = t.tanh(a)?;
                        t.sum(q)
                    }),
                ),
                (
                    "relu",
                    vec![relu_in.clone(), other.clone()],
                    Box::new(|t, ids| {
                        let r = t.relu(ids[0])?;
                        let q = t.hadamard(r, ids[1])?;
                        t.sum(q)
                    }),
                ),
                (
                    "tanh",
                    vec![x.clone()],
                    Box::new(|t, ids| {
                        let r = t.tanh(ids[0])?;
                        t.sum(r)
                    }),
                ),
                (
                    "exp",
                    vec![x.clone()],
                    Box::new(|t, ids| {
                        let r = t.exp(ids[0])?;
                        t.mean(r)
                    }),
                ),
                (
                    "log",
                    vec![positive.clone()],
                    Box::new(|t, ids| {
                        let r = t.log(ids[0])?;
                        t.sum(r)
                    }),
                ),
                (
                    "square-sub-add",
                    vec![x.clone(), other.clone()],
                    Box::new(|t, ids| {
                        let d = t.sub(ids[0], ids[1])?;
                        let s = t.add(d, ids[0])?;
                        let q = t.square(s)?;
                        t.sum(q)
                    }),
                ),
                (
                    "logsumexp-concat-scale",
                    vec![x.clone(), other.clone()],
                    Box::new(|t, ids| {
                        let c = t.concat_cols(ids[0], ids[1])?;
                        let s = t.scale(c, 1.7)?;
                        let l = t.logsumexp_rows(s)?;
                        let q = t.square(l)?;
                        t.mean(q)
                    }),
                ),
            ];
            for (name, inputs, build) in cases {
                let err = grad_check_many(|t, ids| build(t, ids), &inputs, h).unwrap();
                assert!(err < 1e-5, "trial {trial} op {name}: rel err {err}");
            }
        }
    }

    #[test]
    fn backward_is_bit_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_mat(&mut rng, 5, 3);
        let w = random_mat(&mut rng, 2, 3);
        let build = |x: &Mat, w: &Mat| {
            let mut t = Tape::new();
            let xi = t.leaf(x.clone());
            let wi = t.leaf(w.clone());
            let b = t.leaf(Mat::zeros(1, 2));
            let a = t.affine(xi, wi, b).unwrap();
            let l = t.logsumexp_rows(a).unwrap();
            let s = t.sum(l).unwrap();
            let g = t.backward(s).unwrap();
            (g.get(xi).clone(), g.get(wi).clone())
        };
        let (a1, b1) = build(&x, &w);
        let (a2, b2) = build(&x, &w);
        assert_eq!(a1.data(), a2.data());
        assert_eq!(b1.data(), b2.data());
    }

    #[test]
    fn node_inputs_precede_node() {
        let mut t = Tape::new();
        let x = t.leaf(Mat::scalar(1.0));
        let y = t.exp(x).unwrap();
        let z = t.add(x, y).unwrap();
        assert!(x < y && y < z);
        assert!(t.apply(Op::Relu(NodeId(99))).is_err());
    }
}
