//! Expression trees over regressor variables.
//!
//! An [`Expr`] is a finite tree whose leaves are constants or regressor
//! variables (`v0`, `v1`, ...) and whose inner nodes apply one of the
//! elementary functions in [`Op`]. Trees are immutable values: mutation
//! returns a new tree.
//!
//! Depth convention: leaves have depth 0, so a maximum depth `d` allows
//! `d + 1` node levels.

use std::fmt;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::Rng;

/// Probability that a non-forced node becomes a leaf during random growth.
const LEAF_PROB: f64 = 0.4;
/// Probability that a leaf is a variable rather than a constant.
const VAR_PROB: f64 = 0.75;
/// Largest depth of a freshly grown replacement subtree.
const SUBTREE_DEPTH: usize = 3;
/// Standard deviation of the constant perturbation step.
const CONST_STEP: f64 = 0.1;

/// Elementary functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Op {
    Add,
    Sub,
    Mul,
    Sin,
    Cos,
    Sign,
    Square,
    Cube,
}

impl Op {
    pub const ALL: [Op; 8] = [
        Op::Add,
        Op::Sub,
        Op::Mul,
        Op::Sin,
        Op::Cos,
        Op::Sign,
        Op::Square,
        Op::Cube,
    ];

    pub fn arity(self) -> usize {
        match self {
            Op::Add | Op::Sub | Op::Mul => 2,
            Op::Sin | Op::Cos | Op::Sign | Op::Square | Op::Cube => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Op::Add => "add",
            Op::Sub => "sub",
            Op::Mul => "mul",
            Op::Sin => "sin",
            Op::Cos => "cos",
            Op::Sign => "sign",
            Op::Square => "square",
            Op::Cube => "cube",
        }
    }

    pub fn from_name(name: &str) -> Option<Op> {
        Op::ALL.into_iter().find(|op| op.name() == name)
    }

    fn infix(self) -> Option<&'static str> {
        match self {
            Op::Add => Some("+"),
            Op::Sub => Some("-"),
            Op::Mul => Some("*"),
            _ => None,
        }
    }

    #[inline]
    pub fn apply1(self, a: f64) -> f64 {
        match self {
            Op::Sin => a.sin(),
            Op::Cos => a.cos(),
            Op::Sign => sign(a),
            Op::Square => a * a,
            Op::Cube => a * a * a,
            _ => unreachable!("{} is binary", self.name()),
        }
    }

    #[inline]
    pub fn apply2(self, a: f64, b: f64) -> f64 {
        match self {
            Op::Add => a + b,
            Op::Sub => a - b,
            Op::Mul => a * b,
            _ => unreachable!("{} is unary", self.name()),
        }
    }
}

/// Three-valued sign: `sign(0) = 0`. NaN propagates.
#[inline]
pub fn sign(a: f64) -> f64 {
    if a > 0.0 {
        1.0
    } else if a < 0.0 {
        -1.0
    } else {
        // 0.0, -0.0 and NaN
        a * 0.0
    }
}

/// Ordered, duplicate-free set of elementary functions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Op>", into = "Vec<Op>")]
pub struct FunctionSet {
    ops: Vec<Op>,
}

impl FunctionSet {
    pub fn new(ops: Vec<Op>) -> Result<Self> {
        if ops.is_empty() {
            return Err(Error::InvalidArgument("function set is empty".into()));
        }
        for (i, op) in ops.iter().enumerate() {
            if ops[..i].contains(op) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate function `{}` in function set",
                    op.name()
                )));
            }
        }
        Ok(Self { ops })
    }

    /// `{*, +, -, sin, cos}`, used for the mobile robot.
    pub fn arithmetic_trig() -> Self {
        Self {
            ops: vec![Op::Mul, Op::Add, Op::Sub, Op::Sin, Op::Cos],
        }
    }

    /// `{*, +, -, sin, cos, sign}`, used for the pendulum.
    pub fn arithmetic_trig_sign() -> Self {
        Self {
            ops: vec![Op::Mul, Op::Add, Op::Sub, Op::Sin, Op::Cos, Op::Sign],
        }
    }

    /// Parse a comma- or space-separated list of function names.
    pub fn parse(text: &str) -> Result<Self> {
        let ops = text
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(|s| {
                Op::from_name(s)
                    .ok_or_else(|| Error::InvalidArgument(format!("unknown function `{s}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(ops)
    }

    pub fn ops(&self) -> &[Op] {
        &self.ops
    }

    pub fn contains(&self, op: Op) -> bool {
        self.ops.contains(&op)
    }

    fn choose(&self, rng: &mut Rng) -> Op {
        self.ops[rng.random_range(0..self.ops.len())]
    }
}

impl TryFrom<Vec<Op>> for FunctionSet {
    type Error = Error;

    fn try_from(ops: Vec<Op>) -> Result<Self> {
        Self::new(ops)
    }
}

impl From<FunctionSet> for Vec<Op> {
    fn from(fs: FunctionSet) -> Self {
        fs.ops
    }
}

impl fmt::Display for FunctionSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<_> = self.ops.iter().map(|op| op.name()).collect();
        f.write_str(&names.join(","))
    }
}

/// Expression tree node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Expr {
    Const(f64),
    Var(usize),
    Op(Op, Vec<Expr>),
}

impl Expr {
    pub fn var(index: usize) -> Self {
        Expr::Var(index)
    }

    pub fn constant(value: f64) -> Self {
        Expr::Const(value)
    }

    pub fn unary(op: Op, a: Expr) -> Self {
        debug_assert_eq!(op.arity(), 1);
        Expr::Op(op, vec![a])
    }

    pub fn binary(op: Op, a: Expr, b: Expr) -> Self {
        debug_assert_eq!(op.arity(), 2);
        Expr::Op(op, vec![a, b])
    }

    /// Evaluate at a single regressor vector.
    ///
    /// Non-finite results are returned as-is; only an out-of-range variable
    /// index is an error.
    pub fn evaluate(&self, regressor: &[f64]) -> Result<f64> {
        match self {
            Expr::Const(c) => Ok(*c),
            Expr::Var(i) => regressor.get(*i).copied().ok_or(Error::VariableOutOfBounds {
                index: *i,
                len: regressor.len(),
            }),
            Expr::Op(op, children) => match children.as_slice() {
                [a] => Ok(op.apply1(a.evaluate(regressor)?)),
                [a, b] => Ok(op.apply2(a.evaluate(regressor)?, b.evaluate(regressor)?)),
                _ => unreachable!("arity checked at construction"),
            },
        }
    }

    /// Evaluate over a column-major data table, returning one value per row.
    pub fn evaluate_columns(&self, columns: &[Vec<f64>], n_rows: usize) -> Result<Vec<f64>> {
        match self {
            Expr::Const(c) => Ok(vec![*c; n_rows]),
            Expr::Var(i) => columns
                .get(*i)
                .cloned()
                .ok_or(Error::VariableOutOfBounds {
                    index: *i,
                    len: columns.len(),
                }),
            Expr::Op(op, children) => match children.as_slice() {
                [a] => {
                    let mut out = a.evaluate_columns(columns, n_rows)?;
                    out.iter_mut().for_each(|v| *v = op.apply1(*v));
                    Ok(out)
                }
                [a, b] => {
                    let mut out = a.evaluate_columns(columns, n_rows)?;
                    let rhs = b.evaluate_columns(columns, n_rows)?;
                    out.iter_mut()
                        .zip(&rhs)
                        .for_each(|(l, r)| *l = op.apply2(*l, *r));
                    Ok(out)
                }
                _ => unreachable!("arity checked at construction"),
            },
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Expr::Const(_) | Expr::Var(_) => 0,
            Expr::Op(_, children) => 1 + children.iter().map(Expr::depth).max().unwrap_or(0),
        }
    }

    /// Total number of nodes.
    pub fn size(&self) -> usize {
        match self {
            Expr::Const(_) | Expr::Var(_) => 1,
            Expr::Op(_, children) => 1 + children.iter().map(Expr::size).sum::<usize>(),
        }
    }

    /// Largest variable index used, if any.
    /// All operator-rooted subtrees in preorder, the tree itself first.
    pub fn op_subtrees(&self) -> Vec<&Expr> {
        fn walk<'a>(e: &'a Expr, out: &mut Vec<&'a Expr>) {
            if let Expr::Op(_, args) = e {
                out.push(e);
                args.iter().for_each(|a| walk(a, out));
            }
        }
        let mut out = Vec::new();
        walk(self, &mut out);
        out
    }

    pub fn max_var(&self) -> Option<usize> {
        match self {
            Expr::Const(_) => None,
            Expr::Var(i) => Some(*i),
            Expr::Op(_, children) => children.iter().filter_map(Expr::max_var).max(),
        }
    }

    /// Check the tree against a function set, regressor dimension, and depth limit.
    pub fn validate(&self, fs: &FunctionSet, n_vars: usize, max_depth: usize) -> Result<()> {
        if let Some(i) = self.max_var() {
            if i >= n_vars {
                return Err(Error::VariableOutOfBounds {
                    index: i,
                    len: n_vars,
                });
            }
        }
        if self.depth() > max_depth {
            return Err(Error::InvalidArgument(format!(
                "expression depth {} exceeds {max_depth}",
                self.depth()
            )));
        }
        self.check_ops(fs)
    }

    fn check_ops(&self, fs: &FunctionSet) -> Result<()> {
        match self {
            Expr::Const(_) | Expr::Var(_) => Ok(()),
            Expr::Op(op, children) => {
                if !fs.contains(*op) {
                    return Err(Error::InvalidArgument(format!(
                        "function `{}` not in function set",
                        op.name()
                    )));
                }
                if children.len() != op.arity() {
                    return Err(Error::InvalidArgument(format!(
                        "`{}` expects {} children, found {}",
                        op.name(),
                        op.arity(),
                        children.len()
                    )));
                }
                children.iter().try_for_each(|c| c.check_ops(fs))
            }
        }
    }

    /// Grow a random tree of depth at most `max_depth`.
    pub fn random(fs: &FunctionSet, n_vars: usize, max_depth: usize, rng: &mut Rng) -> Self {
        assert!(n_vars >= 1, "need at least one regressor variable");
        if max_depth == 0 || rng.random_bool(LEAF_PROB) {
            return random_leaf(n_vars, rng);
        }
        let op = fs.choose(rng);
        let children = (0..op.arity())
            .map(|_| Expr::random(fs, n_vars, max_depth - 1, rng))
            .collect();
        Expr::Op(op, children)
    }

    /// Return a mutated copy.
    ///
    /// One of four moves is chosen uniformly: replace a random subtree with a
    /// freshly grown one, perturb a constant, swap an operator for another of
    /// equal arity, or change a variable index. A move with no applicable
    /// site falls back to subtree replacement.
    pub fn mutate(&self, fs: &FunctionSet, n_vars: usize, max_depth: usize, rng: &mut Rng) -> Self {
        let sites = self.sites();
        let pick = |rng: &mut Rng, filter: &dyn Fn(&Site) -> bool| -> Option<usize> {
            let candidates: Vec<usize> = (0..sites.len()).filter(|&i| filter(&sites[i])).collect();
            (!candidates.is_empty()).then(|| candidates[rng.random_range(0..candidates.len())])
        };

        let mv = rng.random_range(0..4u8);
        let edit: Option<(usize, Edit)> = match mv {
            1 => pick(rng, &|s| s.kind == SiteKind::Const).map(|i| (i, Edit::PerturbConst)),
            2 => pick(rng, &|s| match s.kind {
                SiteKind::Op(op) => fs.ops().iter().any(|o| *o != op && o.arity() == op.arity()),
                _ => false,
            })
            .map(|i| (i, Edit::SwapOp)),
            3 if n_vars > 1 => pick(rng, &|s| s.kind == SiteKind::Var).map(|i| (i, Edit::SwapVar)),
            _ => None,
        };
        let (target, edit) = edit.unwrap_or_else(|| (rng.random_range(0..sites.len()), Edit::Subtree));

        let mut counter = 0;
        self.rewrite(target, 0, &mut counter, &mut |node, depth| match edit {
            Edit::Subtree => {
                let room = max_depth.saturating_sub(depth).min(SUBTREE_DEPTH);
                Expr::random(fs, n_vars, room, rng)
            }
            Edit::PerturbConst => match node {
                Expr::Const(c) => {
                    let step = Normal::new(0.0, CONST_STEP).expect("valid sigma").sample(rng);
                    Expr::Const(c + step)
                }
                _ => unreachable!(),
            },
            Edit::SwapOp => match node {
                Expr::Op(op, children) => {
                    let others: Vec<Op> = fs
                        .ops()
                        .iter()
                        .copied()
                        .filter(|o| o != op && o.arity() == op.arity())
                        .collect();
                    Expr::Op(others[rng.random_range(0..others.len())], children.clone())
                }
                _ => unreachable!(),
            },
            Edit::SwapVar => match node {
                Expr::Var(i) => {
                    let shift = rng.random_range(1..n_vars);
                    Expr::Var((i + shift) % n_vars)
                }
                _ => unreachable!(),
            },
        })
    }

    fn sites(&self) -> Vec<Site> {
        fn walk(e: &Expr, out: &mut Vec<Site>) {
            match e {
                Expr::Const(_) => out.push(Site {
                    kind: SiteKind::Const,
                }),
                Expr::Var(_) => out.push(Site {
                    kind: SiteKind::Var,
                }),
                Expr::Op(op, children) => {
                    out.push(Site {
                        kind: SiteKind::Op(*op),
                    });
                    children.iter().for_each(|c| walk(c, out));
                }
            }
        }
        let mut out = Vec::with_capacity(self.size());
        walk(self, &mut out);
        out
    }

    /// Rebuild the tree, replacing the node at preorder position `target`.
    fn rewrite(
        &self,
        target: usize,
        depth: usize,
        counter: &mut usize,
        f: &mut dyn FnMut(&Expr, usize) -> Expr,
    ) -> Expr {
        let here = *counter;
        *counter += 1;
        if here == target {
            *counter += self.size() - 1;
            return f(self, depth);
        }
        match self {
            Expr::Op(op, children) => Expr::Op(
                *op,
                children
                    .iter()
                    .map(|c| c.rewrite(target, depth + 1, counter, f))
                    .collect(),
            ),
            leaf => leaf.clone(),
        }
    }

    /// Parenthesized infix rendering with constants at `precision` decimals.
    pub fn to_canonical_text(&self, precision: usize) -> String {
        let mut out = String::new();
        self.write_canonical(&mut out, precision);
        out
    }

    fn write_canonical(&self, out: &mut String, precision: usize) {
        use std::fmt::Write;
        match self {
            Expr::Const(c) => out.push_str(&format_const(*c, precision)),
            Expr::Var(i) => {
                let _ = write!(out, "v{i}");
            }
            Expr::Op(op, children) => match (op.infix(), children.as_slice()) {
                (Some(sym), [a, b]) => {
                    out.push('(');
                    a.write_canonical(out, precision);
                    let _ = write!(out, " {sym} ");
                    b.write_canonical(out, precision);
                    out.push(')');
                }
                (None, [a]) => {
                    out.push_str(op.name());
                    out.push('(');
                    a.write_canonical(out, precision);
                    out.push(')');
                }
                _ => unreachable!("arity checked at construction"),
            },
        }
    }

    /// Parse canonical text as produced by [`Expr::to_canonical_text`].
    pub fn parse(text: &str) -> Result<Self> {
        let mut p = Parser {
            src: text.as_bytes(),
            pos: 0,
        };
        let e = p.expr()?;
        p.skip_ws();
        if p.pos != p.src.len() {
            return Err(p.error("trailing input"));
        }
        Ok(e)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_canonical_text(f.precision().unwrap_or(10)))
    }
}

/// Fixed-point rendering; negative zero prints as zero.
pub fn format_const(c: f64, precision: usize) -> String {
    let c = if c == 0.0 { 0.0 } else { c };
    let s = format!("{c:.precision$}");
    if s.starts_with('-') && s[1..].chars().all(|ch| ch == '0' || ch == '.') {
        s[1..].to_string()
    } else {
        s
    }
}

fn random_leaf(n_vars: usize, rng: &mut Rng) -> Expr {
    if rng.random_bool(VAR_PROB) {
        Expr::Var(rng.random_range(0..n_vars))
    } else {
        Expr::Const(rng.random_range(-1.0..=1.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SiteKind {
    Const,
    Var,
    Op(Op),
}

struct Site {
    kind: SiteKind,
}

#[derive(Clone, Copy)]
enum Edit {
    Subtree,
    PerturbConst,
    SwapOp,
    SwapVar,
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn error(&self, message: &str) -> Error {
        Error::Syntax {
            pos: self.pos,
            message: message.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expect(&mut self, ch: u8) -> Result<()> {
        if self.peek() == Some(ch) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(&format!("expected `{}`", ch as char)))
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let lhs = self.expr()?;
                let op = match self.peek() {
                    Some(b'+') => Op::Add,
                    Some(b'-') => Op::Sub,
                    Some(b'*') => Op::Mul,
                    _ => return Err(self.error("expected infix operator")),
                };
                self.pos += 1;
                let rhs = self.expr()?;
                self.expect(b')')?;
                Ok(Expr::binary(op, lhs, rhs))
            }
            Some(b'v') if self.src.get(self.pos + 1).is_some_and(u8::is_ascii_digit) => {
                self.pos += 1;
                let start = self.pos;
                while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                    self.pos += 1;
                }
                let digits = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
                digits
                    .parse()
                    .map(Expr::Var)
                    .map_err(|_| self.error("bad variable index"))
            }
            Some(c) if c == b'-' || c == b'.' || c.is_ascii_digit() => {
                let start = self.pos;
                self.pos += 1;
                while self.pos < self.src.len()
                    && matches!(self.src[self.pos], b'0'..=b'9' | b'.' | b'e' | b'E' | b'+' | b'-')
                {
                    // stop at an infix minus/plus that is not an exponent sign
                    let c = self.src[self.pos];
                    if (c == b'+' || c == b'-') && !matches!(self.src[self.pos - 1], b'e' | b'E') {
                        break;
                    }
                    self.pos += 1;
                }
                let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
                text.parse()
                    .map(Expr::Const)
                    .map_err(|_| self.error("bad number"))
            }
            Some(c) if c.is_ascii_alphabetic() => {
                let start = self.pos;
                while self.pos < self.src.len() && self.src[self.pos].is_ascii_alphabetic() {
                    self.pos += 1;
                }
                let name = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
                let op = Op::from_name(name)
                    .filter(|op| op.arity() == 1)
                    .ok_or_else(|| self.error(&format!("unknown function `{name}`")))?;
                self.expect(b'(')?;
                let arg = self.expr()?;
                self.expect(b')')?;
                Ok(Expr::unary(op, arg))
            }
            _ => Err(self.error("unexpected input")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    fn v(i: usize) -> Expr {
        Expr::var(i)
    }

    #[test]
    fn evaluate_examples() {
        let e = Expr::binary(Op::Add, Expr::unary(Op::Sin, v(0)), v(1));
        assert_eq!(e.evaluate(&[0.0, 2.0]).unwrap(), 2.0);

        let e = Expr::unary(Op::Sign, v(0));
        assert_eq!(e.evaluate(&[0.0]).unwrap(), 0.0);
        assert_eq!(e.evaluate(&[-3.0]).unwrap(), -1.0);

        let e = Expr::binary(Op::Sub, Expr::unary(Op::Cube, v(0)), Expr::unary(Op::Square, v(1)));
        assert_eq!(e.evaluate(&[2.0, 3.0]).unwrap(), -1.0);
    }

    #[test]
    fn out_of_bounds_is_structural_error() {
        let e = Expr::binary(Op::Add, v(0), v(3));
        assert!(matches!(
            e.evaluate(&[1.0, 2.0]),
            Err(Error::VariableOutOfBounds { index: 3, len: 2 })
        ));
    }

    #[test]
    fn non_finite_is_reported_not_replaced() {
        let e = Expr::unary(Op::Cube, v(0));
        assert!(e.evaluate(&[1e200]).unwrap().is_infinite());
        assert!(Expr::unary(Op::Sign, v(0)).evaluate(&[f64::NAN]).unwrap().is_nan());
    }

    #[test]
    fn depth_examples() {
        assert_eq!(v(0).depth(), 0);
        assert_eq!(Expr::unary(Op::Sin, v(0)).depth(), 1);
        let e = Expr::binary(Op::Add, Expr::unary(Op::Sin, v(0)), Expr::unary(Op::Cos, v(1)));
        assert_eq!(e.depth(), 2);
        assert_eq!(e.size(), 5);
    }

    #[test]
    fn canonical_text_examples() {
        assert_eq!(Expr::constant(0.05).to_canonical_text(10), "0.0500000000");
        assert_eq!(Expr::constant(0.0499998879).to_canonical_text(10), "0.0499998879");
        assert_eq!(Expr::constant(-0.0).to_canonical_text(3), "0.000");
        assert_eq!(Expr::constant(-1e-12).to_canonical_text(3), "0.000");
        let e = Expr::binary(Op::Mul, v(0), Expr::unary(Op::Sin, v(1)));
        assert_eq!(e.to_canonical_text(10), "(v0 * sin(v1))");
        assert_eq!(format!("{e}"), "(v0 * sin(v1))");
    }

    #[test]
    fn parse_round_trip() {
        let text = "((v0 * sin(v1)) - (-0.2500000000 + sign(cube(v12))))";
        let e = Expr::parse(text).unwrap();
        assert_eq!(e.to_canonical_text(10), text);
        assert!(Expr::parse("(v0 ^ v1)").is_err());
        assert!(Expr::parse("tan(v0)").is_err());
        assert!(Expr::parse("v0 v1").is_err());
    }

    #[test]
    fn function_set_validation() {
        assert!(FunctionSet::new(vec![]).is_err());
        assert!(FunctionSet::new(vec![Op::Add, Op::Add]).is_err());
        let fs = FunctionSet::parse("mul, add,sub sin,cos,sign").unwrap();
        assert_eq!(fs, FunctionSet::arithmetic_trig_sign());
        assert_eq!(fs.to_string(), "mul,add,sub,sin,cos,sign");
        assert!(FunctionSet::parse("add,tan").is_err());
    }

    #[test]
    fn random_depth_zero_is_leaf() {
        let fs = FunctionSet::arithmetic_trig();
        let mut rng = seed::rng(1);
        for _ in 0..200 {
            let e = Expr::random(&fs, 3, 0, &mut rng);
            assert!(matches!(e, Expr::Const(_) | Expr::Var(_)));
        }
    }

    #[test]
    fn random_is_deterministic() {
        let fs = FunctionSet::arithmetic_trig_sign();
        let a = Expr::random(&fs, 4, 6, &mut seed::rng(99));
        let b = Expr::random(&fs, 4, 6, &mut seed::rng(99));
        assert_eq!(a, b);
    }

    #[test]
    fn random_covers_every_operator() {
        let fs = FunctionSet::new(Op::ALL.to_vec()).unwrap();
        let mut seen = std::collections::HashSet::new();
        let mut rng = seed::rng(5);
        fn collect(e: &Expr, seen: &mut std::collections::HashSet<Op>) {
            if let Expr::Op(op, children) = e {
                seen.insert(*op);
                children.iter().for_each(|c| collect(c, seen));
            }
        }
        for _ in 0..10_000 {
            let e = Expr::random(&fs, 3, 4, &mut rng);
            assert!(e.depth() <= 4);
            e.validate(&fs, 3, 4).unwrap();
            collect(&e, &mut seen);
        }
        assert_eq!(seen.len(), Op::ALL.len());
    }

    #[test]
    fn mutate_leaf_and_determinism() {
        let fs = FunctionSet::arithmetic_trig();
        let leaf = v(0);
        for s in 0..100 {
            let m = leaf.mutate(&fs, 2, 3, &mut seed::rng(s));
            m.validate(&fs, 2, 3).unwrap();
            assert_eq!(m, leaf.mutate(&fs, 2, 3, &mut seed::rng(s)));
        }
        assert_eq!(leaf, v(0));
    }

    #[test]
    fn chained_mutations_respect_limits() {
        let fs = FunctionSet::arithmetic_trig_sign();
        let mut rng = seed::rng(2024);
        let mut e = Expr::random(&fs, 3, 7, &mut rng);
        for _ in 0..10_000 {
            e = e.mutate(&fs, 3, 7, &mut rng);
            assert!(e.depth() <= 7);
            assert!(e.max_var().is_none_or(|i| i < 3));
        }
    }
}
