use super::gemm::gemm;
use super::{split_axis, ParamStore, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Graph`] tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Param(String),
    MatMul { a: Var, b: Var, trans_b: bool },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow { a: Var, row: Var },
    Scale(Var, f64),
    AddScalar(Var),
    Concat { parts: Vec<Var>, axis: usize },
    Slice { a: Var, axis: usize, start: usize },
    Reshape(Var),
    // source flat index per output element
    ReduceMax { a: Var, argmax: Vec<usize> },
    ReduceMean { a: Var, axis: usize },
    Sum(Var),
    Mean(Var),
    LeakyRelu(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    Softmax { a: Var, axis: usize },
    LogSoftmax { a: Var, axis: usize },
    GatherRows { a: Var, idx: Vec<usize> },
    NeighborMax { a: Var, argmax: Vec<usize> },
    RowNorm(Var),
    SelectPerRow { a: Var, idx: Vec<usize> },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Adjoints of every node from one backward sweep.
pub struct Gradients {
    adj: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.adj.get(v.0).and_then(|a| a.as_deref())
    }
}

/// Single-owner computation tape.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

fn shape_str(shapes: &[&[usize]]) -> String {
    shapes
        .iter()
        .map(|s| format!("{:?}", s))
        .collect::<Vec<_>>()
        .join(" vs ")
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

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Untracked input.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// Tracked leaf that is not a stored parameter (used to differentiate with
    /// respect to inputs).
    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// Brings a stored parameter onto the tape. Frozen parameters enter as
    /// constants.
    pub fn param(&mut self, store: &ParamStore, name: &str) -> Result<Var> {
        let p = store
            .get(name)
            .ok_or_else(|| Error::Checkpoint(vec![name.to_string()]))?;
        Ok(self.push(p.value.clone(), Op::Param(name.to_string()), p.trainable))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, false)
    }

    /// `a · bᵀ`
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, true)
    }

    fn matmul_impl(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        let bad = || Error::shape("matmul", shape_str(&[sa, sb]));
        if sa.len() != 2 || sb.len() != 2 {
            return Err(bad());
        }
        let (m, k) = (sa[0], sa[1]);
        let (kb, n) = if trans_b {
            (sb[1], sb[0])
        } else {
            (sb[0], sb[1])
        };
        if k != kb {
            return Err(bad());
        }
        let mut out = vec![0.0; m * n];
        gemm(
            m,
            k,
            n,
            self.value(a).data(),
            false,
            self.value(b).data(),
            trans_b,
            &mut out,
            false,
        );
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(
            Tensor::new(vec![m, n], out)?,
            Op::MatMul { a, b, trans_b },
            rg,
        ))
    }

    fn zip_same(
        &mut self,
        op_name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(
                op_name,
                shape_str(&[self.shape(a), self.shape(b)]),
            ));
        }
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let t = Tensor::new(self.shape(a).to_vec(), data)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(t, op, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    /// Element-wise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// Adds a vector of length `last dim` to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (sa, sr) = (self.shape(a), self.shape(row));
        let n = *sa.last().unwrap_or(&0);
        if sr.len() != 1 || sr[0] != n || n == 0 {
            return Err(Error::shape("add_row", shape_str(&[sa, sr])));
        }
        let r = self.value(row).data();
        let mut data = self.value(a).data().to_vec();
        for chunk in data.chunks_exact_mut(n) {
            add_into(chunk, r);
        }
        let t = Tensor::new(sa.to_vec(), data)?;
        let rg = self.rg(a) || self.rg(row);
        Ok(self.push(t, Op::AddRow { a, row }, rg))
    }

    fn map(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let v = self.value(a);
        let data = v.data().iter().map(|&x| f(x)).collect();
        let t = Tensor {
            shape: v.shape().to_vec(),
            data,
        };
        let rg = self.rg(a);
        self.push(t, op, rg)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.map(a, |x| x * c, Op::Scale(a, c))
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        self.map(a, |x| x + c, Op::AddScalar(a))
    }

    pub fn leaky_relu(&mut self, a: Var, alpha: f64) -> Var {
        self.map(
            a,
            |x| if x > 0.0 { x } else { alpha * x },
            Op::LeakyRelu(a, alpha),
        )
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.map(a, f64::tanh, Op::Tanh(a))
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::shape("concat", "no inputs"))?;
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(Error::shape(
                "concat",
                format!("axis {} on {:?}", axis, base),
            ));
        }
        let mut total = 0;
        for &p in parts {
            let s = self.shape(p);
            let ok = s.len() == base.len()
                && s.iter()
                    .zip(&base)
                    .enumerate()
                    .all(|(i, (x, y))| i == axis || x == y);
            if !ok {
                let all: Vec<&[usize]> = parts.iter().map(|&p| self.shape(p)).collect();
                return Err(Error::shape("concat", shape_str(&all)));
            }
            total += s[axis];
        }
        let mut shape = base.clone();
        shape[axis] = total;
        let (outer, _, inner) = split_axis(&shape, axis);
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &p in parts {
                let v = self.value(p);
                let len = v.shape()[axis] * inner;
                data.extend_from_slice(&v.data()[o * len..(o + 1) * len]);
            }
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(
            Tensor { shape, data },
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
            rg,
        ))
    }

    pub fn slice(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let s = self.shape(a).to_vec();
        if axis >= s.len() || start + len > s[axis] {
            return Err(Error::shape(
                "slice",
                format!("{:?} axis {} range {}..{}", s, axis, start, start + len),
            ));
        }
        let (outer, alen, inner) = split_axis(&s, axis);
        let src = self.value(a).data();
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = o * alen * inner + start * inner;
            data.extend_from_slice(&src[base..base + len * inner]);
        }
        let mut shape = s;
        shape[axis] = len;
        let rg = self.rg(a);
        Ok(self.push(Tensor { shape, data }, Op::Slice { a, axis, start }, rg))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(a).clone().reshape(shape)?;
        let rg = self.rg(a);
        Ok(self.push(t, Op::Reshape(a), rg))
    }

    /// Maximum along `axis` (removed from the shape). The gradient routes to
    /// the first maximal element.
    pub fn reduce_max(&mut self, a: Var, axis: usize) -> Result<Var> {
        let s = self.shape(a).to_vec();
        if axis >= s.len() || s[axis] == 0 {
            return Err(Error::shape("reduce_max", format!("{:?} axis {}", s, axis)));
        }
        let (outer, len, inner) = split_axis(&s, axis);
        let src = self.value(a).data();
        let mut data = Vec::with_capacity(outer * inner);
        let mut argmax = Vec::with_capacity(outer * inner);
        for o in 0..outer {
            let base = o * len * inner;
            let start = data.len();
            data.extend_from_slice(&src[base..base + inner]);
            argmax.extend(base..base + inner);
            let (out, arg) = (&mut data[start..], &mut argmax[start..]);
            for l in 1..len {
                let off = base + l * inner;
                for (i, (m, v)) in out.iter_mut().zip(&src[off..off + inner]).enumerate() {
                    if *v > *m {
                        *m = *v;
                        arg[i] = off + i;
                    }
                }
            }
        }
        let mut shape = s;
        shape.remove(axis);
        let rg = self.rg(a);
        Ok(self.push(Tensor { shape, data }, Op::ReduceMax { a, argmax }, rg))
    }

    pub fn reduce_mean(&mut self, a: Var, axis: usize) -> Result<Var> {
        let s = self.shape(a).to_vec();
        if axis >= s.len() || s[axis] == 0 {
            return Err(Error::shape(
                "reduce_mean",
                format!("{:?} axis {}", s, axis),
            ));
        }
        let (outer, len, inner) = split_axis(&s, axis);
        let src = self.value(a).data();
        let mut data = vec![0.0; outer * inner];
        for o in 0..outer {
            for l in 0..len {
                for i in 0..inner {
                    data[o * inner + i] += src[o * len * inner + l * inner + i];
                }
            }
        }
        for x in &mut data {
            *x /= len as f64;
        }
        let mut shape = s;
        shape.remove(axis);
        let rg = self.rg(a);
        Ok(self.push(Tensor { shape, data }, Op::ReduceMean { a, axis }, rg))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s: f64 = self.value(a).data().iter().sum();
        let rg = self.rg(a);
        self.push(Tensor::scalar(s), Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let m = v.data().iter().sum::<f64>() / v.len().max(1) as f64;
        let rg = self.rg(a);
        self.push(Tensor::scalar(m), Op::Mean(a), rg)
    }

    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var> {
        let t = self.softmax_values(a, axis, false)?;
        let rg = self.rg(a);
        Ok(self.push(t, Op::Softmax { a, axis }, rg))
    }

    pub fn log_softmax(&mut self, a: Var, axis: usize) -> Result<Var> {
        let t = self.softmax_values(a, axis, true)?;
        let rg = self.rg(a);
        Ok(self.push(t, Op::LogSoftmax { a, axis }, rg))
    }

    fn softmax_values(&self, a: Var, axis: usize, log: bool) -> Result<Tensor> {
        let s = self.shape(a).to_vec();
        if axis >= s.len() || s[axis] == 0 {
            return Err(Error::shape("softmax", format!("{:?} axis {}", s, axis)));
        }
        let (outer, len, inner) = split_axis(&s, axis);
        let src = self.value(a).data();
        let mut data = vec![0.0; src.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |l: usize| o * len * inner + l * inner + i;
                let m = (0..len)
                    .map(|l| src[at(l)])
                    .fold(f64::NEG_INFINITY, f64::max);
                let z: f64 = (0..len).map(|l| (src[at(l)] - m).exp()).sum();
                for l in 0..len {
                    data[at(l)] = if log {
                        src[at(l)] - m - z.ln()
                    } else {
                        (src[at(l)] - m).exp() / z
                    };
                }
            }
        }
        Ok(Tensor { shape: s, data })
    }

    /// Rows of a 2-D tensor selected (with repetition) by `idx`.
    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let s = self.shape(a).to_vec();
        if s.len() != 2 || idx.iter().any(|&i| i >= s[0]) {
            return Err(Error::shape(
                "gather_rows",
                format!("{:?} with max index {:?}", s, idx.iter().max()),
            ));
        }
        let n = s[1];
        let src = self.value(a).data();
        let mut data = Vec::with_capacity(idx.len() * n);
        for &i in idx {
            data.extend_from_slice(&src[i * n..(i + 1) * n]);
        }
        let rg = self.rg(a);
        Ok(self.push(
            Tensor {
                shape: vec![idx.len(), n],
                data,
            },
            Op::GatherRows {
                a,
                idx: idx.to_vec(),
            },
            rg,
        ))
    }

    /// For a 2-D `a` (m×c) and a neighbor table of `rows × slots` row indices,
    /// returns rows×c with `out[i][ch] = max_t a[nbr[i·slots + t]][ch]`.
    /// Ties resolve to the lowest slot.
    pub fn neighbor_max(&mut self, a: Var, neighbors: &[usize], slots: usize) -> Result<Var> {
        let s = self.shape(a).to_vec();
        if s.len() != 2
            || slots == 0
            || neighbors.len() % slots != 0
            || neighbors.iter().any(|&j| j >= s[0])
        {
            return Err(Error::shape(
                "neighbor_max",
                format!("{:?} with {} indices / {} slots", s, neighbors.len(), slots),
            ));
        }
        let c = s[1];
        let rows = neighbors.len() / slots;
        let src = self.value(a).data();
        let mut data = Vec::with_capacity(rows * c);
        let mut argmax = Vec::with_capacity(rows * c);
        for nb in neighbors.chunks_exact(slots) {
            let start = data.len();
            let first = nb[0] * c;
            data.extend_from_slice(&src[first..first + c]);
            argmax.extend(first..first + c);
            let (out, arg) = (&mut data[start..], &mut argmax[start..]);
            for &j in &nb[1..] {
                let base = j * c;
                for (ch, (o, v)) in out.iter_mut().zip(&src[base..base + c]).enumerate() {
                    if *v > *o {
                        *o = *v;
                        arg[ch] = base + ch;
                    }
                }
            }
        }
        let rg = self.rg(a);
        Ok(self.push(
            Tensor {
                shape: vec![rows, c],
                data,
            },
            Op::NeighborMax { a, argmax },
            rg,
        ))
    }

    /// Euclidean norm of each row of a 2-D tensor. The gradient at a zero row
    /// is taken as zero.
    pub fn row_norm(&mut self, a: Var) -> Result<Var> {
        let s = self.shape(a).to_vec();
        if s.len() != 2 {
            return Err(Error::shape("row_norm", format!("{:?}", s)));
        }
        let n = s[1];
        let data = self
            .value(a)
            .data()
            .chunks(n.max(1))
            .map(|r| r.iter().map(|x| x * x).sum::<f64>().sqrt())
            .take(s[0])
            .collect();
        let rg = self.rg(a);
        Ok(self.push(
            Tensor {
                shape: vec![s[0]],
                data,
            },
            Op::RowNorm(a),
            rg,
        ))
    }

    /// `out[i] = a[i][idx[i]]` for a 2-D `a`.
    pub fn select_per_row(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let s = self.shape(a).to_vec();
        if s.len() != 2 || idx.len() != s[0] || idx.iter().any(|&j| j >= s[1]) {
            return Err(Error::shape(
                "select_per_row",
                format!("{:?} with {} indices", s, idx.len()),
            ));
        }
        let src = self.value(a).data();
        let data = idx
            .iter()
            .enumerate()
            .map(|(i, &j)| src[i * s[1] + j])
            .collect();
        let rg = self.rg(a);
        Ok(self.push(
            Tensor {
                shape: vec![s[0]],
                data,
            },
            Op::SelectPerRow {
                a,
                idx: idx.to_vec(),
            },
            rg,
        ))
    }

    /// `x · wᵀ + b` for x (m×in), w (out×in), b (out).
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let y = self.matmul_t(x, w)?;
        self.add_row(y, b)
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn gradients(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(Error::shape(
                "backward",
                format!("loss must be scalar, got {:?}", self.shape(loss)),
            ));
        }
        let mut adj: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        adj[loss.0] = Some(vec![1.0]);
        for id in (0..=loss.0).rev() {
            let node = &self.nodes[id];
            if !node.requires_grad {
                continue;
            }
            let g = match adj[id].take() {
                Some(g) => g,
                None => continue,
            };
            self.propagate(node, &g, &mut adj);
            adj[id] = Some(g);
        }
        Ok(Gradients { adj })
    }

    /// Runs the reverse sweep and adds every trainable parameter's gradient
    /// into `store`. Calling twice doubles the stored gradients.
    pub fn backward(&self, loss: Var, store: &mut ParamStore) -> Result<()> {
        let grads = self.gradients(loss)?;
        for (id, node) in self.nodes.iter().enumerate() {
            if let Op::Param(name) = &node.op {
                if !node.requires_grad {
                    continue;
                }
                match grads.adj[id].as_deref() {
                    Some(g) => store.accumulate_grad(name, g)?,
                    None => store.accumulate_grad(name, &vec![0.0; node.value.len()])?,
                }
            }
        }
        Ok(())
    }

    fn propagate(&self, node: &Node, g: &[f64], adj: &mut [Option<Vec<f64>>]) {
        let nodes = &self.nodes;
        // Returns the adjoint buffer of `v` if it needs one.
        let mut with = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
            let n = &nodes[v.0];
            if !n.requires_grad {
                return;
            }
            let buf = adj[v.0].get_or_insert_with(|| vec![0.0; n.value.len()]);
            f(buf);
        };
        match &node.op {
            Op::Leaf | Op::Param(_) => {}
            Op::MatMul { a, b, trans_b } => {
                let av = &nodes[a.0].value;
                let bv = &nodes[b.0].value;
                let (m, k) = (av.shape()[0], av.shape()[1]);
                let n = node.value.shape()[1];
                with(*a, &mut |da| {
                    // dA = dC · B̃ᵀ
                    gemm(m, n, k, g, false, bv.data(), !*trans_b, da, true);
                });
                with(*b, &mut |db| {
                    if *trans_b {
                        // dB (n×k) = dCᵀ · A
                        gemm(n, m, k, g, true, av.data(), false, db, true);
                    } else {
                        // dB (k×n) = Aᵀ · dC
                        gemm(k, m, n, av.data(), true, g, false, db, true);
                    }
                });
            }
            Op::Add(a, b) => {
                with(*a, &mut |d| add_into(d, g));
                with(*b, &mut |d| add_into(d, g));
            }
            Op::Sub(a, b) => {
                with(*a, &mut |d| add_into(d, g));
                with(*b, &mut |d| {
                    for (x, y) in d.iter_mut().zip(g) {
                        *x -= y;
                    }
                });
            }
            Op::Mul(a, b) => {
                let av = nodes[a.0].value.data();
                let bv = nodes[b.0].value.data();
                with(*a, &mut |d| {
                    for ((x, y), z) in d.iter_mut().zip(g).zip(bv) {
                        *x += y * z;
                    }
                });
                with(*b, &mut |d| {
                    for ((x, y), z) in d.iter_mut().zip(g).zip(av) {
                        *x += y * z;
                    }
                });
            }
            Op::AddRow { a, row } => {
                with(*a, &mut |d| add_into(d, g));
                let n = nodes[row.0].value.len();
                with(*row, &mut |d| {
                    for chunk in g.chunks(n) {
                        add_into(d, chunk);
                    }
                });
            }
            Op::Scale(a, c) => with(*a, &mut |d| {
                for (x, y) in d.iter_mut().zip(g) {
                    *x += c * y;
                }
            }),
            Op::AddScalar(a) | Op::Reshape(a) => with(*a, &mut |d| add_into(d, g)),
            Op::Concat { parts, axis } => {
                let shape = node.value.shape();
                let (outer, total, inner) = split_axis(shape, *axis);
                let mut offset = 0;
                for &p in parts {
                    let len = nodes[p.0].value.shape()[*axis];
                    with(p, &mut |d| {
                        for o in 0..outer {
                            let src = o * total * inner + offset * inner;
                            let dst = o * len * inner;
                            add_into(&mut d[dst..dst + len * inner], &g[src..src + len * inner]);
                        }
                    });
                    offset += len;
                }
            }
            Op::Slice { a, axis, start } => {
                let src_shape = nodes[a.0].value.shape();
                let (outer, alen, inner) = split_axis(src_shape, *axis);
                let len = node.value.shape()[*axis];
                with(*a, &mut |d| {
                    for o in 0..outer {
                        let base = o * alen * inner + start * inner;
                        let gb = o * len * inner;
                        add_into(&mut d[base..base + len * inner], &g[gb..gb + len * inner]);
                    }
                });
            }
            Op::ReduceMax { a, argmax } | Op::NeighborMax { a, argmax } => with(*a, &mut |d| {
                for (&src, y) in argmax.iter().zip(g) {
                    d[src] += y;
                }
            }),
            Op::ReduceMean { a, axis } => {
                let (outer, len, inner) = split_axis(nodes[a.0].value.shape(), *axis);
                with(*a, &mut |d| {
                    for o in 0..outer {
                        for l in 0..len {
                            for i in 0..inner {
                                d[o * len * inner + l * inner + i] += g[o * inner + i] / len as f64;
                            }
                        }
                    }
                });
            }
            Op::Sum(a) => with(*a, &mut |d| {
                for x in d.iter_mut() {
                    *x += g[0];
                }
            }),
            Op::Mean(a) => with(*a, &mut |d| {
                let s = g[0] / d.len().max(1) as f64;
                for x in d.iter_mut() {
                    *x += s;
                }
            }),
            Op::LeakyRelu(a, alpha) => {
                let av = nodes[a.0].value.data();
                with(*a, &mut |d| {
                    for ((x, y), z) in d.iter_mut().zip(g).zip(av) {
                        *x += if *z > 0.0 { *y } else { alpha * y };
                    }
                });
            }
            Op::Sigmoid(a) => {
                let out = node.value.data();
                with(*a, &mut |d| {
                    for ((x, y), s) in d.iter_mut().zip(g).zip(out) {
                        *x += y * s * (1.0 - s);
                    }
                });
            }
            Op::Tanh(a) => {
                let out = node.value.data();
                with(*a, &mut |d| {
                    for ((x, y), t) in d.iter_mut().zip(g).zip(out) {
                        *x += y * (1.0 - t * t);
                    }
                });
            }
            Op::Softmax { a, axis } | Op::LogSoftmax { a, axis } => {
                let log = matches!(node.op, Op::LogSoftmax { .. });
                let out = node.value.data();
                let (outer, len, inner) = split_axis(node.value.shape(), *axis);
                with(*a, &mut |d| {
                    for o in 0..outer {
                        for i in 0..inner {
                            let at = |l: usize| o * len * inner + l * inner + i;
                            if log {
                                let gs: f64 = (0..len).map(|l| g[at(l)]).sum();
                                for l in 0..len {
                                    d[at(l)] += g[at(l)] - out[at(l)].exp() * gs;
                                }
                            } else {
                                let dot: f64 = (0..len).map(|l| g[at(l)] * out[at(l)]).sum();
                                for l in 0..len {
                                    d[at(l)] += out[at(l)] * (g[at(l)] - dot);
                                }
                            }
                        }
                    }
                });
            }
            Op::GatherRows { a, idx } => {
                let n = node.value.shape()[1];
                with(*a, &mut |d| {
                    for (r, &i) in idx.iter().enumerate() {
                        add_into(&mut d[i * n..(i + 1) * n], &g[r * n..(r + 1) * n]);
                    }
                });
            }
            Op::RowNorm(a) => {
                let av = nodes[a.0].value.data();
                let norms = node.value.data();
                let n = nodes[a.0].value.shape()[1];
                with(*a, &mut |d| {
                    for (r, (&nr, &gy)) in norms.iter().zip(g).enumerate() {
                        if nr > 0.0 {
                            for c in 0..n {
                                d[r * n + c] += gy * av[r * n + c] / nr;
                            }
                        }
                    }
                });
            }
            Op::SelectPerRow { a, idx } => {
                let n = nodes[a.0].value.shape()[1];
                with(*a, &mut |d| {
                    for (i, (&j, &gy)) in idx.iter().zip(g).enumerate() {
                        d[i * n + j] += gy;
                    }
                });
            }
        }
    }
}

fn add_into(d: &mut [f64], g: &[f64]) {
    for (x, y) in d.iter_mut().zip(g) {
        *x += y;
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
