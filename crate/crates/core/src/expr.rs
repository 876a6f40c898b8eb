//! Descriptor lineage as expression trees.
//!
//! Canonical strings use prefix notation with comma separators and raw
//! column names as leaves: `div(log(f3),f7)`. Whitespace around tokens is
//! accepted when parsing and never emitted when rendering.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::ops::{BinaryOp, Operation, UnaryOp};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Expr {
    Raw(String),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
}

/// A raw column name must survive a render/parse cycle untouched.
pub fn is_valid_raw_name(name: &str) -> bool {
    !name.is_empty()
        && name.trim() == name
        && !name.contains(['(', ')', ','])
        && !name.chars().any(char::is_control)
}

impl Expr {
    pub fn raw(name: impl Into<String>) -> Self {
        Expr::Raw(name.into())
    }

    pub fn unary(op: UnaryOp, child: Expr) -> Self {
        Expr::Unary(op, Box::new(child))
    }

    pub fn binary(op: BinaryOp, left: Expr, right: Expr) -> Self {
        Expr::Binary(op, Box::new(left), Box::new(right))
    }

    pub fn is_raw(&self) -> bool {
        matches!(self, Expr::Raw(_))
    }

    pub fn operation(&self) -> Option<Operation> {
        match self {
            Expr::Raw(_) => None,
            Expr::Unary(op, _) => Some(Operation::Unary(*op)),
            Expr::Binary(op, _, _) => Some(Operation::Binary(*op)),
        }
    }

    /// Immediate children, left to right.
    pub fn parents(&self) -> Vec<&Expr> {
        match self {
            Expr::Raw(_) => Vec::new(),
            Expr::Unary(_, c) => vec![c],
            Expr::Binary(_, l, r) => vec![l, r],
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Expr::Raw(_) => 0,
            Expr::Unary(_, c) => 1 + c.depth(),
            Expr::Binary(_, l, r) => 1 + l.depth().max(r.depth()),
        }
    }

    /// Distinct leaf names in first-occurrence order.
    pub fn leaves(&self) -> Vec<&str> {
        fn walk<'a>(e: &'a Expr, out: &mut Vec<&'a str>) {
            match e {
                Expr::Raw(n) => {
                    if !out.contains(&n.as_str()) {
                        out.push(n);
                    }
                }
                Expr::Unary(_, c) => walk(c, out),
                Expr::Binary(_, l, r) => {
                    walk(l, out);
                    walk(r, out);
                }
            }
        }
        let mut out = Vec::new();
        walk(self, &mut out);
        out
    }

    pub fn operations(&self) -> Vec<Operation> {
        let mut out = Vec::new();
        self.visit_ops(&mut |op| out.push(op));
        out
    }

    fn visit_ops(&self, f: &mut impl FnMut(Operation)) {
        match self {
            Expr::Raw(_) => {}
            Expr::Unary(op, c) => {
                f(Operation::Unary(*op));
                c.visit_ops(f);
            }
            Expr::Binary(op, l, r) => {
                f(Operation::Binary(*op));
                l.visit_ops(f);
                r.visit_ops(f);
            }
        }
    }

    /// Multi-line lineage tree, root first.
    pub fn lineage_tree(&self) -> String {
        fn walk(e: &Expr, prefix: &str, last: bool, root: bool, out: &mut String) {
            let (branch, next) = if root {
                ("", String::new())
            } else if last {
                ("└── ", format!("{prefix}    "))
            } else {
                ("├── ", format!("{prefix}│   "))
            };
            let label = match e {
                Expr::Raw(n) => format!("{n} [original]"),
                Expr::Unary(op, _) => format!("{}  = {}(·)", e, op.name()),
                Expr::Binary(op, _, _) => format!("{}  = {}(·,·)", e, op.name()),
            };
            out.push_str(prefix);
            out.push_str(branch);
            out.push_str(&label);
            out.push('\n');
            let parents = e.parents();
            let n = parents.len();
            for (i, p) in parents.into_iter().enumerate() {
                walk(p, &next, i + 1 == n, false, out);
            }
        }
        let mut out = String::new();
        walk(self, "", true, true, &mut out);
        out
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Raw(n) => f.write_str(n),
            Expr::Unary(op, c) => write!(f, "{}({})", op.symbol(), c),
            Expr::Binary(op, l, r) => write!(f, "{}({},{})", op.symbol(), l, r),
        }
    }
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse {
            pos: self.pos,
            msg: msg.into(),
        }
    }

    fn skip_ws(&mut self) {
        let rest = &self.src[self.pos..];
        self.pos += rest.len() - rest.trim_start().len();
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn expect(&mut self, c: char) -> Result<()> {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += c.len_utf8();
            Ok(())
        } else {
            Err(self.err(format!("expected `{c}`")))
        }
    }

    fn token(&mut self) -> Result<&'a str> {
        self.skip_ws();
        let rest = &self.src[self.pos..];
        let end = rest.find(['(', ')', ',']).unwrap_or(rest.len());
        let tok = rest[..end].trim_end();
        if tok.is_empty() {
            return Err(self.err("expected a name"));
        }
        self.pos += end;
        Ok(tok)
    }

    fn expr(&mut self) -> Result<Expr> {
        let start = self.pos;
        let tok = self.token()?;
        self.skip_ws();
        if self.peek() != Some('(') {
            return Ok(Expr::Raw(tok.to_string()));
        }
        let op: Operation = tok.parse().map_err(|_| Error::Parse {
            pos: start,
            msg: format!("unknown operation `{tok}`"),
        })?;
        self.expect('(')?;
        let first = self.expr()?;
        let out = match op {
            Operation::Unary(u) => Expr::unary(u, first),
            Operation::Binary(b) => {
                self.expect(',')?;
                let second = self.expr()?;
                Expr::binary(b, first, second)
            }
        };
        self.expect(')')?;
        Ok(out)
    }
}

impl FromStr for Expr {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut p = Parser { src: s, pos: 0 };
        let e = p.expr()?;
        p.skip_ws();
        if p.pos != s.len() {
            return Err(p.err("trailing input"));
        }
        Ok(e)
    }
}

impl Serialize for Expr {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Expr {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn renders_prefix_form() {
        let e = Expr::binary(
            BinaryOp::DivideSafe,
            Expr::unary(UnaryOp::LogAbs, Expr::raw("f3")),
            Expr::raw("f7"),
        );
        assert_eq!(e.to_string(), "div(log(f3),f7)");
        assert_eq!("div( log(f3) , f7 )".parse::<Expr>().unwrap(), e);
        assert_eq!(e.depth(), 2);
        assert_eq!(e.leaves(), vec!["f3", "f7"]);
    }

    #[test]
    fn raw_names_may_contain_spaces() {
        let e: Expr = "mul(cross sectional area,f2)".parse().unwrap();
        assert_eq!(e.leaves(), vec!["cross sectional area", "f2"]);
    }

    #[test]
    fn rejects_malformed() {
        for bad in ["", "sq(", "sq(f1", "add(f1)", "sq(f1,f2)", "pow(f1)", "f1)", "add(f1,,f2)"] {
            assert!(bad.parse::<Expr>().is_err(), "{bad:?} parsed");
        }
    }

    #[test]
    fn lineage_tree_lists_every_node() {
        let e: Expr = "add(sq(f1),f2)".parse().unwrap();
        let tree = e.lineage_tree();
        assert_eq!(tree.lines().count(), 4);
        assert!(tree.contains("f1 [original]"));
    }

    fn arb_expr() -> impl Strategy<Value = Expr> {
        let leaf = "[a-z][a-z0-9_ ]{0,6}[a-z0-9]".prop_map(Expr::Raw);
        leaf.prop_recursive(6, 64, 2, |inner| {
            prop_oneof![
                (prop::sample::select(UnaryOp::ALL.to_vec()), inner.clone())
                    .prop_map(|(op, c)| Expr::unary(op, c)),
                (prop::sample::select(BinaryOp::ALL.to_vec()), inner.clone(), inner)
                    .prop_map(|(op, l, r)| Expr::binary(op, l, r)),
            ]
        })
    }

    proptest! {
        #[test]
        fn canonical_string_round_trips(e in arb_expr()) {
            prop_assert!(e.depth() <= 6);
            let back: Expr = e.to_string().parse().unwrap();
            prop_assert_eq!(back, e);
        }
    }
}
