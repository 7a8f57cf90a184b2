use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::sync::Arc;

use crate::scalar::Real;

/// Node of an expression graph. Children are shared through [`Expr`] handles,
/// so common subexpressions form a DAG.
#[derive(Debug)]
pub enum Node {
    Const(f64),
    Var(usize),
    Sum(Vec<Expr>),
    Mul(Expr, Expr),
    /// Power with a constant exponent.
    Pow(Expr, f64),
    Neg(Expr),
    Inv(Expr),
    Sin(Expr),
    Cos(Expr),
    Exp(Expr),
    Log(Expr),
    Sqrt(Expr),
}

/// Cheaply clonable handle to an immutable expression node.
#[derive(Clone)]
pub struct Expr(pub(crate) Arc<Node>);

impl Expr {
    pub fn constant(c: f64) -> Self {
        Expr(Arc::new(Node::Const(c)))
    }

    pub fn var(index: usize) -> Self {
        Expr(Arc::new(Node::Var(index)))
    }

    pub fn node(&self) -> &Node {
        &self.0
    }

    pub(crate) fn id(&self) -> usize {
        Arc::as_ptr(&self.0) as usize
    }

    pub fn sum<I: IntoIterator<Item = Expr>>(terms: I) -> Self {
        let mut flat = Vec::new();
        for t in terms {
            match t.node() {
                Node::Sum(inner) => flat.extend(inner.iter().cloned()),
                _ => flat.push(t),
            }
        }
        match flat.len() {
            0 => Expr::constant(0.0),
            1 => flat.pop().unwrap(),
            _ => Expr(Arc::new(Node::Sum(flat))),
        }
    }

    pub fn powf(self, p: f64) -> Self {
        Expr(Arc::new(Node::Pow(self, p)))
    }

    pub fn powi(self, p: i32) -> Self {
        self.powf(p as f64)
    }

    pub fn inv(self) -> Self {
        Expr(Arc::new(Node::Inv(self)))
    }

    pub fn sin(self) -> Self {
        Expr(Arc::new(Node::Sin(self)))
    }

    pub fn cos(self) -> Self {
        Expr(Arc::new(Node::Cos(self)))
    }

    pub fn exp(self) -> Self {
        Expr(Arc::new(Node::Exp(self)))
    }

    pub fn ln(self) -> Self {
        Expr(Arc::new(Node::Log(self)))
    }

    pub fn sqrt(self) -> Self {
        Expr(Arc::new(Node::Sqrt(self)))
    }

    pub fn as_const(&self) -> Option<f64> {
        match self.node() {
            Node::Const(c) => Some(*c),
            _ => None,
        }
    }

    /// Largest variable index referenced, if any.
    pub fn max_var(&self) -> Option<usize> {
        let mut best = None;
        let mut stack = vec![self];
        let mut seen = std::collections::HashSet::new();
        while let Some(e) = stack.pop() {
            if !seen.insert(e.id()) {
                continue;
            }
            match e.node() {
                Node::Const(_) => {}
                Node::Var(i) => best = Some(best.map_or(*i, |b: usize| b.max(*i))),
                Node::Sum(ch) => stack.extend(ch.iter()),
                Node::Mul(a, b) => {
                    stack.push(a);
                    stack.push(b);
                }
                Node::Pow(a, _)
                | Node::Neg(a)
                | Node::Inv(a)
                | Node::Sin(a)
                | Node::Cos(a)
                | Node::Exp(a)
                | Node::Log(a)
                | Node::Sqrt(a) => stack.push(a),
            }
        }
        best
    }

    /// Direct recursive evaluation. Used as a reference; solvers use compiled tapes.
    pub fn eval<T: Real>(&self, t: &[T]) -> T {
        match self.node() {
            Node::Const(c) => T::lit(*c),
            Node::Var(i) => t[*i],
            Node::Sum(ch) => ch.iter().map(|c| c.eval(t)).sum(),
            Node::Mul(a, b) => a.eval(t) * b.eval(t),
            Node::Pow(a, p) => pow(a.eval(t), *p),
            Node::Neg(a) => -a.eval(t),
            Node::Inv(a) => T::one() / a.eval(t),
            Node::Sin(a) => a.eval(t).sin(),
            Node::Cos(a) => a.eval(t).cos(),
            Node::Exp(a) => a.eval(t).exp(),
            Node::Log(a) => a.eval(t).ln(),
            Node::Sqrt(a) => a.eval(t).sqrt(),
        }
    }
}

/// `a^p`; integral exponents use repeated multiplication so negative bases work.
pub(crate) fn pow<T: Real>(a: T, p: f64) -> T {
    if p.fract() == 0.0 && p.abs() <= i32::MAX as f64 {
        a.powi(p as i32)
    } else {
        a.powf(T::lit(p))
    }
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// Prints the prefix form accepted by the instance file parser.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.node() {
            Node::Const(c) => write!(f, "{c:?}"),
            Node::Var(i) => write!(f, "t{}", i + 1),
            Node::Sum(ch) => {
                write!(f, "(+")?;
                for c in ch {
                    write!(f, " {c}")?;
                }
                write!(f, ")")
            }
            Node::Mul(a, b) => write!(f, "(* {a} {b})"),
            Node::Pow(a, p) => write!(f, "(^ {a} {p:?})"),
            Node::Neg(a) => write!(f, "(neg {a})"),
            Node::Inv(a) => write!(f, "(inv {a})"),
            Node::Sin(a) => write!(f, "(sin {a})"),
            Node::Cos(a) => write!(f, "(cos {a})"),
            Node::Exp(a) => write!(f, "(exp {a})"),
            Node::Log(a) => write!(f, "(log {a})"),
            Node::Sqrt(a) => write!(f, "(sqrt {a})"),
        }
    }
}

impl From<f64> for Expr {
    fn from(c: f64) -> Self {
        Expr::constant(c)
    }
}

impl Add for Expr {
    type Output = Expr;
    fn add(self, rhs: Expr) -> Expr {
        Expr::sum([self, rhs])
    }
}

impl Sub for Expr {
    type Output = Expr;
    fn sub(self, rhs: Expr) -> Expr {
        Expr::sum([self, -rhs])
    }
}

impl Mul for Expr {
    type Output = Expr;
    fn mul(self, rhs: Expr) -> Expr {
        Expr(Arc::new(Node::Mul(self, rhs)))
    }
}

impl Div for Expr {
    type Output = Expr;
    fn div(self, rhs: Expr) -> Expr {
        match rhs.as_const() {
            Some(c) => self * Expr::constant(1.0 / c),
            None => self * rhs.inv(),
        }
    }
}

impl Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        match self.node() {
            Node::Const(c) => Expr::constant(-c),
            _ => Expr(Arc::new(Node::Neg(self))),
        }
    }
}

macro_rules! scalar_ops {
    ($($tr:ident $method:ident),*) => {$(
        impl $tr<f64> for Expr {
            type Output = Expr;
            fn $method(self, rhs: f64) -> Expr {
                $tr::$method(self, Expr::constant(rhs))
            }
        }
        impl $tr<Expr> for f64 {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                $tr::$method(Expr::constant(self), rhs)
            }
        }
    )*};
}

scalar_ops!(Add add, Sub sub, Mul mul, Div div);
