//! Mathematical operations used to derive new descriptors.
//!
//! Every operation is a total function on finite inputs: domain problems
//! (division by zero, logarithm of zero, overflowing exponentials) are
//! resolved inside the operation itself so that a descriptor's values can
//! always be reproduced from its expression.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Offset used by the safe reciprocal, safe division and log operations.
pub const SAFE_EPSILON: f64 = 1e-10;
/// Upper clamp applied to the exponent argument.
pub const EXP_CLAMP: f64 = 50.0;

#[inline]
fn nudge_away_from_zero(x: f64) -> f64 {
    // sign(0) = +1
    if x >= 0.0 {
        x + SAFE_EPSILON
    } else {
        x - SAFE_EPSILON
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnaryOp {
    Square,
    SqrtAbs,
    LogAbs,
    ExpClamped,
    Sin,
    Cos,
    ReciprocalSafe,
    Tanh,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinaryOp {
    Add,
    Subtract,
    Multiply,
    DivideSafe,
}

impl UnaryOp {
    pub const ALL: [UnaryOp; 8] = [
        UnaryOp::Square,
        UnaryOp::SqrtAbs,
        UnaryOp::LogAbs,
        UnaryOp::ExpClamped,
        UnaryOp::Sin,
        UnaryOp::Cos,
        UnaryOp::ReciprocalSafe,
        UnaryOp::Tanh,
    ];

    /// Token used in canonical expression strings.
    pub fn symbol(self) -> &'static str {
        match self {
            UnaryOp::Square => "sq",
            UnaryOp::SqrtAbs => "sqrt",
            UnaryOp::LogAbs => "log",
            UnaryOp::ExpClamped => "exp",
            UnaryOp::Sin => "sin",
            UnaryOp::Cos => "cos",
            UnaryOp::ReciprocalSafe => "recip",
            UnaryOp::Tanh => "tanh",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            UnaryOp::Square => "square",
            UnaryOp::SqrtAbs => "sqrt_abs",
            UnaryOp::LogAbs => "log_abs",
            UnaryOp::ExpClamped => "exp_clamped",
            UnaryOp::Sin => "sin",
            UnaryOp::Cos => "cos",
            UnaryOp::ReciprocalSafe => "reciprocal_safe",
            UnaryOp::Tanh => "tanh",
        }
    }

    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            UnaryOp::Square => x * x,
            UnaryOp::SqrtAbs => x.abs().sqrt(),
            UnaryOp::LogAbs => (x.abs() + SAFE_EPSILON).ln(),
            UnaryOp::ExpClamped => x.min(EXP_CLAMP).exp(),
            UnaryOp::Sin => x.sin(),
            UnaryOp::Cos => x.cos(),
            UnaryOp::ReciprocalSafe => 1.0 / nudge_away_from_zero(x),
            UnaryOp::Tanh => x.tanh(),
        }
    }

    pub fn apply_all(self, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|&x| self.apply(x)).collect()
    }
}

impl BinaryOp {
    pub const ALL: [BinaryOp; 4] = [
        BinaryOp::Add,
        BinaryOp::Subtract,
        BinaryOp::Multiply,
        BinaryOp::DivideSafe,
    ];

    pub fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Add => "add",
            BinaryOp::Subtract => "sub",
            BinaryOp::Multiply => "mul",
            BinaryOp::DivideSafe => "div",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BinaryOp::Add => "add",
            BinaryOp::Subtract => "subtract",
            BinaryOp::Multiply => "multiply",
            BinaryOp::DivideSafe => "divide_safe",
        }
    }

    #[inline]
    pub fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            BinaryOp::Add => a + b,
            BinaryOp::Subtract => a - b,
            BinaryOp::Multiply => a * b,
            BinaryOp::DivideSafe => a / nudge_away_from_zero(b),
        }
    }

    pub fn apply_all(self, a: &[f64], b: &[f64]) -> Vec<f64> {
        a.iter().zip(b).map(|(&x, &y)| self.apply(x, y)).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Operation {
    Unary(UnaryOp),
    Binary(BinaryOp),
}

impl Operation {
    pub fn is_binary(self) -> bool {
        matches!(self, Operation::Binary(_))
    }

    pub fn name(self) -> &'static str {
        match self {
            Operation::Unary(op) => op.name(),
            Operation::Binary(op) => op.name(),
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Operation::Unary(op) => op.symbol(),
            Operation::Binary(op) => op.symbol(),
        }
    }
}

impl fmt::Display for Operation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Accepts both the long name (`divide_safe`) and the expression token (`div`).
impl FromStr for Operation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(op) = UnaryOp::ALL
            .iter()
            .find(|op| op.name() == s || op.symbol() == s)
        {
            return Ok(Operation::Unary(*op));
        }
        if let Some(op) = BinaryOp::ALL
            .iter()
            .find(|op| op.name() == s || op.symbol() == s)
        {
            return Ok(Operation::Binary(*op));
        }
        Err(Error::UnknownOperation(s.to_string()))
    }
}

/// Ordered operation inventory. Unary operations come first, then binary;
/// an operation's position is its one-hot index for the whole run.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OperationSet {
    unary: Vec<UnaryOp>,
    binary: Vec<BinaryOp>,
}

impl Default for OperationSet {
    fn default() -> Self {
        Self {
            unary: UnaryOp::ALL.to_vec(),
            binary: BinaryOp::ALL.to_vec(),
        }
    }
}

impl OperationSet {
    pub fn new(unary: Vec<UnaryOp>, binary: Vec<BinaryOp>) -> Result<Self> {
        if unary.is_empty() && binary.is_empty() {
            return Err(Error::Config("operation set is empty".into()));
        }
        for (i, op) in unary.iter().enumerate() {
            if unary[..i].contains(op) {
                return Err(Error::Config(format!("operation `{}` listed twice", op.name())));
            }
        }
        for (i, op) in binary.iter().enumerate() {
            if binary[..i].contains(op) {
                return Err(Error::Config(format!("operation `{}` listed twice", op.name())));
            }
        }
        Ok(Self { unary, binary })
    }

    /// Builds a set from operation names in any order; unary and binary
    /// operations are split while keeping their relative order.
    pub fn from_names<S: AsRef<str>>(names: &[S]) -> Result<Self> {
        let mut unary = Vec::new();
        let mut binary = Vec::new();
        for name in names {
            match name.as_ref().parse::<Operation>()? {
                Operation::Unary(op) => unary.push(op),
                Operation::Binary(op) => binary.push(op),
            }
        }
        Self::new(unary, binary)
    }

    pub fn unary(&self) -> &[UnaryOp] {
        &self.unary
    }

    pub fn binary(&self) -> &[BinaryOp] {
        &self.binary
    }

    pub fn len(&self) -> usize {
        self.unary.len() + self.binary.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn operations(&self) -> Vec<Operation> {
        self.unary
            .iter()
            .map(|&op| Operation::Unary(op))
            .chain(self.binary.iter().map(|&op| Operation::Binary(op)))
            .collect()
    }

    pub fn index_of(&self, op: Operation) -> Option<usize> {
        match op {
            Operation::Unary(u) => self.unary.iter().position(|&x| x == u),
            Operation::Binary(b) => self
                .binary
                .iter()
                .position(|&x| x == b)
                .map(|i| i + self.unary.len()),
        }
    }

    pub fn contains(&self, op: Operation) -> bool {
        self.index_of(op).is_some()
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.operations().into_iter().map(Operation::name).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sanitized_operations_are_total() {
        assert_eq!(UnaryOp::ReciprocalSafe.apply(0.0), 1.0 / SAFE_EPSILON);
        assert_eq!(BinaryOp::DivideSafe.apply(3.0, 0.0), 3.0 / SAFE_EPSILON);
        assert_eq!(BinaryOp::DivideSafe.apply(1.0, -2.0), 1.0 / (-2.0 - SAFE_EPSILON));
        assert_eq!(UnaryOp::LogAbs.apply(0.0), SAFE_EPSILON.ln());
        assert_eq!(UnaryOp::ExpClamped.apply(1e6), EXP_CLAMP.exp());
        assert_eq!(UnaryOp::SqrtAbs.apply(-4.0), 2.0);
    }

    #[test]
    fn names_and_symbols_parse() {
        for op in OperationSet::default().operations() {
            assert_eq!(op.name().parse::<Operation>().unwrap(), op);
            assert_eq!(op.symbol().parse::<Operation>().unwrap(), op);
        }
        assert!("pow".parse::<Operation>().is_err());
    }

    #[test]
    fn indices_are_unary_then_binary() {
        let ops = OperationSet::from_names(&["multiply", "square", "add", "sin"]).unwrap();
        assert_eq!(ops.index_of(Operation::Unary(UnaryOp::Square)), Some(0));
        assert_eq!(ops.index_of(Operation::Unary(UnaryOp::Sin)), Some(1));
        assert_eq!(ops.index_of(Operation::Binary(BinaryOp::Multiply)), Some(2));
        assert_eq!(ops.index_of(Operation::Binary(BinaryOp::Add)), Some(3));
        assert_eq!(ops.index_of(Operation::Binary(BinaryOp::Subtract)), None);
    }

    #[test]
    fn rejects_empty_and_duplicates() {
        assert!(OperationSet::new(vec![], vec![]).is_err());
        assert!(OperationSet::from_names(&["sin", "sin"]).is_err());
    }
}
