//! Linearized expression tapes with reverse-mode gradients and
//! forward-over-reverse Hessians.

use std::collections::HashMap;

use crate::scalar::Real;

use super::expr::{pow, Expr, Node};

#[derive(Debug, Clone, Copy)]
pub(crate) enum Op {
    Const(f64),
    /// Local variable slot.
    Var(usize),
    Add(usize, usize),
    Mul(usize, usize),
    Pow(usize, f64),
    Neg(usize),
    Inv(usize),
    Sin(usize),
    Cos(usize),
    Exp(usize),
    Log(usize),
    Sqrt(usize),
}

/// One term of a function, in topological order; the last op is the output.
#[derive(Debug, Clone)]
pub(crate) struct Tape {
    ops: Vec<Op>,
    /// Local slot → global variable index (sorted ascending).
    vars: Vec<usize>,
    /// Second derivatives vanish identically.
    linear: bool,
}

/// Scratch buffers for tape sweeps.
#[derive(Debug, Clone, Default)]
pub(crate) struct TapeScratch<T> {
    v: Vec<T>,
    adj: Vec<T>,
    dv: Vec<T>,
    dadj: Vec<T>,
    d1: Vec<T>,
    d2: Vec<T>,
}

impl<T: Real> TapeScratch<T> {
    fn ensure(&mut self, len: usize) {
        if self.v.len() < len {
            for b in [&mut self.v, &mut self.adj, &mut self.dv, &mut self.dadj, &mut self.d1, &mut self.d2] {
                b.resize(len, T::zero());
            }
        }
    }
}

impl Tape {
    pub fn compile(expr: &Expr) -> Tape {
        let mut vars: Vec<usize> = Vec::new();
        collect_vars(expr, &mut vars, &mut std::collections::HashSet::new());
        vars.sort_unstable();
        vars.dedup();
        let local: HashMap<usize, usize> = vars.iter().enumerate().map(|(k, &g)| (g, k)).collect();
        let mut b = Builder { ops: Vec::new(), memo: HashMap::new(), var_node: HashMap::new(), degree: Vec::new() };
        b.emit(expr, &local);
        let linear = b.degree.last().copied().unwrap_or(0) <= 1;
        Tape { ops: b.ops, vars, linear }
    }

    pub fn vars(&self) -> &[usize] {
        &self.vars
    }

    pub fn is_linear(&self) -> bool {
        self.linear
    }

    /// Forward sweep; `x` is indexed by global variable.
    pub fn value<T: Real>(&self, x: &[T], s: &mut TapeScratch<T>) -> T {
        s.ensure(self.ops.len());
        self.forward(x, &mut s.v);
        s.v[self.ops.len() - 1]
    }

    fn forward<T: Real>(&self, x: &[T], v: &mut [T]) {
        for (i, op) in self.ops.iter().enumerate() {
            v[i] = match *op {
                Op::Const(c) => T::lit(c),
                Op::Var(l) => x[self.vars[l]],
                Op::Add(a, b) => v[a] + v[b],
                Op::Mul(a, b) => v[a] * v[b],
                Op::Pow(a, p) => pow(v[a], p),
                Op::Neg(a) => -v[a],
                Op::Inv(a) => T::one() / v[a],
                Op::Sin(a) => v[a].sin(),
                Op::Cos(a) => v[a].cos(),
                Op::Exp(a) => v[a].exp(),
                Op::Log(a) => v[a].ln(),
                Op::Sqrt(a) => v[a].sqrt(),
            };
        }
    }

    /// First and second derivatives of each unary op with respect to its argument.
    fn local_derivatives<T: Real>(&self, v: &[T], d1: &mut [T], d2: &mut [T]) {
        let two = T::lit(2.0);
        for (i, op) in self.ops.iter().enumerate() {
            let (a1, a2) = match *op {
                Op::Pow(_, p) if p == 0.0 => (T::zero(), T::zero()),
                Op::Pow(_, p) if p == 1.0 => (T::one(), T::zero()),
                Op::Pow(a, p) => {
                    let x = v[a];
                    (T::lit(p) * pow(x, p - 1.0), T::lit(p * (p - 1.0)) * pow(x, p - 2.0))
                }
                Op::Neg(_) => (-T::one(), T::zero()),
                Op::Inv(_) => (-v[i] * v[i], two * v[i] * v[i] * v[i]),
                Op::Sin(a) => (v[a].cos(), -v[i]),
                Op::Cos(a) => (-v[a].sin(), -v[i]),
                Op::Exp(_) => (v[i], v[i]),
                Op::Log(a) => (T::one() / v[a], -T::one() / (v[a] * v[a])),
                Op::Sqrt(a) => (T::lit(0.5) / v[i], T::lit(-0.25) / (v[i] * v[a])),
                _ => (T::zero(), T::zero()),
            };
            d1[i] = a1;
            d2[i] = a2;
        }
    }

    fn reverse<T: Real>(&self, v: &[T], d1: &[T], adj: &mut [T]) {
        let n = self.ops.len();
        adj[..n].iter_mut().for_each(|a| *a = T::zero());
        adj[n - 1] = T::one();
        for i in (0..n).rev() {
            let w = adj[i];
            if w == T::zero() {
                continue;
            }
            match self.ops[i] {
                Op::Const(_) | Op::Var(_) => {}
                Op::Add(a, b) => {
                    adj[a] += w;
                    adj[b] += w;
                }
                Op::Mul(a, b) => {
                    adj[a] += w * v[b];
                    adj[b] += w * v[a];
                }
                Op::Pow(a, _)
                | Op::Neg(a)
                | Op::Inv(a)
                | Op::Sin(a)
                | Op::Cos(a)
                | Op::Exp(a)
                | Op::Log(a)
                | Op::Sqrt(a) => adj[a] += w * d1[i],
            }
        }
    }

    /// Value and local gradient (`grad[l]` for local slot `l`).
    pub fn gradient<T: Real>(&self, x: &[T], s: &mut TapeScratch<T>, grad: &mut [T]) -> T {
        let n = self.ops.len();
        s.ensure(n);
        self.forward(x, &mut s.v);
        self.local_derivatives(&s.v, &mut s.d1, &mut s.d2);
        self.reverse(&s.v, &s.d1, &mut s.adj);
        grad.iter_mut().for_each(|g| *g = T::zero());
        for (i, op) in self.ops.iter().enumerate() {
            if let Op::Var(l) = *op {
                grad[l] += s.adj[i];
            }
        }
        s.v[n - 1]
    }

    /// Local Hessian, packed lower triangle by columns: entry `(r, c)` with
    /// `r >= c` lands at `c*k - c*(c-1)/2 + (r - c)` for `k` local variables.
    /// `weight` multiplies every entry and the result is accumulated into `out`.
    pub fn hessian_accumulate<T: Real>(&self, x: &[T], weight: T, s: &mut TapeScratch<T>, out: &mut [T]) {
        if self.linear || weight == T::zero() {
            return;
        }
        let n = self.ops.len();
        let k = self.vars.len();
        s.ensure(n);
        self.forward(x, &mut s.v);
        self.local_derivatives(&s.v, &mut s.d1, &mut s.d2);
        self.reverse(&s.v, &s.d1, &mut s.adj);
        let TapeScratch { v, adj, dv, dadj, d1, d2 } = s;
        for seed in 0..k {
            for (i, op) in self.ops.iter().enumerate() {
                dv[i] = match *op {
                    Op::Const(_) => T::zero(),
                    Op::Var(l) => {
                        if l == seed {
                            T::one()
                        } else {
                            T::zero()
                        }
                    }
                    Op::Add(a, b) => dv[a] + dv[b],
                    Op::Mul(a, b) => dv[a] * v[b] + v[a] * dv[b],
                    Op::Pow(a, _)
                    | Op::Neg(a)
                    | Op::Inv(a)
                    | Op::Sin(a)
                    | Op::Cos(a)
                    | Op::Exp(a)
                    | Op::Log(a)
                    | Op::Sqrt(a) => d1[i] * dv[a],
                };
            }
            dadj[..n].iter_mut().for_each(|a| *a = T::zero());
            for i in (0..n).rev() {
                let (w, dw) = (adj[i], dadj[i]);
                match self.ops[i] {
                    Op::Const(_) | Op::Var(_) => {}
                    Op::Add(a, b) => {
                        dadj[a] += dw;
                        dadj[b] += dw;
                    }
                    Op::Mul(a, b) => {
                        dadj[a] += dw * v[b] + w * dv[b];
                        dadj[b] += dw * v[a] + w * dv[a];
                    }
                    Op::Pow(a, _)
                    | Op::Neg(a)
                    | Op::Inv(a)
                    | Op::Sin(a)
                    | Op::Cos(a)
                    | Op::Exp(a)
                    | Op::Log(a)
                    | Op::Sqrt(a) => dadj[a] += dw * d1[i] + w * d2[i] * dv[a],
                }
            }
            let base = packed_index(k, seed, seed);
            for (i, op) in self.ops.iter().enumerate() {
                if let Op::Var(l) = *op {
                    if l >= seed {
                        out[base + (l - seed)] += weight * dadj[i];
                    }
                }
            }
        }
    }
}

/// Packed lower-triangle position of `(r, c)`, `r >= c`, for a `k × k` block.
pub(crate) fn packed_index(k: usize, r: usize, c: usize) -> usize {
    debug_assert!(r >= c && r < k);
    c * (2 * k - c + 1) / 2 + (r - c)
}

fn collect_vars(e: &Expr, out: &mut Vec<usize>, seen: &mut std::collections::HashSet<usize>) {
    if !seen.insert(e.id()) {
        return;
    }
    match e.node() {
        Node::Const(_) => {}
        Node::Var(i) => out.push(*i),
        Node::Sum(ch) => ch.iter().for_each(|c| collect_vars(c, out, seen)),
        Node::Mul(a, b) => {
            collect_vars(a, out, seen);
            collect_vars(b, out, seen);
        }
        Node::Pow(a, _)
        | Node::Neg(a)
        | Node::Inv(a)
        | Node::Sin(a)
        | Node::Cos(a)
        | Node::Exp(a)
        | Node::Log(a)
        | Node::Sqrt(a) => collect_vars(a, out, seen),
    }
}

struct Builder {
    ops: Vec<Op>,
    memo: HashMap<usize, usize>,
    var_node: HashMap<usize, usize>,
    /// 0 constant, 1 affine, 2 nonlinear
    degree: Vec<u8>,
}

impl Builder {
    fn push(&mut self, op: Op, degree: u8) -> usize {
        self.ops.push(op);
        self.degree.push(degree);
        self.ops.len() - 1
    }

    fn emit(&mut self, e: &Expr, local: &HashMap<usize, usize>) -> usize {
        if let Some(&i) = self.memo.get(&e.id()) {
            return i;
        }
        let idx = match e.node() {
            Node::Const(c) => self.push(Op::Const(*c), 0),
            Node::Var(g) => {
                if let Some(&i) = self.var_node.get(g) {
                    i
                } else {
                    let i = self.push(Op::Var(local[g]), 1);
                    self.var_node.insert(*g, i);
                    i
                }
            }
            Node::Sum(ch) => {
                let mut acc = self.emit(&ch[0], local);
                for c in &ch[1..] {
                    let b = self.emit(c, local);
                    let d = self.degree[acc].max(self.degree[b]);
                    acc = self.push(Op::Add(acc, b), d);
                }
                acc
            }
            Node::Mul(a, b) => {
                let (ia, ib) = (self.emit(a, local), self.emit(b, local));
                let (da, db) = (self.degree[ia], self.degree[ib]);
                let d = if da == 0 || db == 0 { da.max(db) } else { 2 };
                self.push(Op::Mul(ia, ib), d)
            }
            Node::Pow(a, p) => {
                let ia = self.emit(a, local);
                let d = match self.degree[ia] {
                    0 => 0,
                    1 if *p == 1.0 => 1,
                    _ if *p == 0.0 => 0,
                    _ => 2,
                };
                self.push(Op::Pow(ia, *p), d)
            }
            Node::Neg(a) => {
                let ia = self.emit(a, local);
                let d = self.degree[ia];
                self.push(Op::Neg(ia), d)
            }
            Node::Inv(a) => self.unary(a, local, Op::Inv),
            Node::Sin(a) => self.unary(a, local, Op::Sin),
            Node::Cos(a) => self.unary(a, local, Op::Cos),
            Node::Exp(a) => self.unary(a, local, Op::Exp),
            Node::Log(a) => self.unary(a, local, Op::Log),
            Node::Sqrt(a) => self.unary(a, local, Op::Sqrt),
        };
        self.memo.insert(e.id(), idx);
        idx
    }

    fn unary(&mut self, a: &Expr, local: &HashMap<usize, usize>, make: fn(usize) -> Op) -> usize {
        let ia = self.emit(a, local);
        let d = if self.degree[ia] == 0 { 0 } else { 2 };
        self.push(make(ia), d)
    }
}
