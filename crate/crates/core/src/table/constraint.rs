//! Boolean constraints over dimension values.
//!
//! A constraint is an expression tree whose leaves compare one dimension
//! against a literal (`=`, `!=`, `<`, `<=`, `>`, `>=`, `IN`) and whose inner
//! nodes are `AND`/`OR`/`NOT`. Constraints only ever reference dimensions,
//! never measures.

use std::fmt;

use thiserror::Error;

/// A literal a dimension is compared against.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Literal {
    Int(i64),
    Str(String),
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Int(v) => write!(f, "{v}"),
            Literal::Str(s) => write!(f, "'{s}'"),
        }
    }
}

/// Comparison operator in a constraint leaf.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    fn holds(self, ord: std::cmp::Ordering) -> bool {
        use std::cmp::Ordering::*;
        match self {
            CmpOp::Eq => ord == Equal,
            CmpOp::Ne => ord != Equal,
            CmpOp::Lt => ord == Less,
            CmpOp::Le => ord != Greater,
            CmpOp::Gt => ord == Greater,
            CmpOp::Ge => ord != Less,
        }
    }
}

impl fmt::Display for CmpOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            CmpOp::Eq => "=",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        };
        f.write_str(s)
    }
}

/// Borrowed view of one dimension value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DimRef<'a> {
    Int(i64),
    Str(&'a str),
}

/// Anything that can resolve a dimension name to a value for one row.
pub trait DimLookup {
    fn dim(&self, name: &str) -> Option<DimRef<'_>>;
}

#[derive(Debug, Error, PartialEq)]
pub enum ConstraintError {
    #[error("constraint references unknown dimension `{0}`")]
    UnknownDimension(String),
    #[error("type mismatch: dimension `{dim}` cannot be compared with {literal}")]
    TypeMismatch { dim: String, literal: String },
}

/// Boolean expression tree over dimension predicates.
#[derive(Debug, Clone, PartialEq)]
pub enum Constraint {
    /// Matches every row.
    True,
    Cmp {
        dim: String,
        op: CmpOp,
        literal: Literal,
    },
    In {
        dim: String,
        literals: Vec<Literal>,
    },
    Not(Box<Constraint>),
    And(Box<Constraint>, Box<Constraint>),
    Or(Box<Constraint>, Box<Constraint>),
}

fn compare(dim: &str, value: DimRef<'_>, literal: &Literal) -> Result<std::cmp::Ordering, ConstraintError> {
    match (value, literal) {
        (DimRef::Int(v), Literal::Int(l)) => Ok(v.cmp(l)),
        (DimRef::Str(v), Literal::Str(l)) => Ok(v.cmp(l.as_str())),
        _ => Err(ConstraintError::TypeMismatch {
            dim: dim.to_string(),
            literal: literal.to_string(),
        }),
    }
}

impl Constraint {
    pub fn not(c: Constraint) -> Constraint {
        Constraint::Not(Box::new(c))
    }

    pub fn and(a: Constraint, b: Constraint) -> Constraint {
        Constraint::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: Constraint, b: Constraint) -> Constraint {
        Constraint::Or(Box::new(a), Box::new(b))
    }

    pub fn cmp(dim: impl Into<String>, op: CmpOp, literal: Literal) -> Constraint {
        Constraint::Cmp {
            dim: dim.into(),
            op,
            literal,
        }
    }

    /// Evaluates the constraint on one row. Inner nodes short-circuit, which
    /// does not change the result because leaf evaluation is side-effect free.
    pub fn eval(&self, row: &impl DimLookup) -> Result<bool, ConstraintError> {
        match self {
            Constraint::True => Ok(true),
            Constraint::Cmp { dim, op, literal } => {
                let value = row
                    .dim(dim)
                    .ok_or_else(|| ConstraintError::UnknownDimension(dim.clone()))?;
                Ok(op.holds(compare(dim, value, literal)?))
            }
            Constraint::In { dim, literals } => {
                let value = row
                    .dim(dim)
                    .ok_or_else(|| ConstraintError::UnknownDimension(dim.clone()))?;
                for lit in literals {
                    if compare(dim, value, lit)? == std::cmp::Ordering::Equal {
                        return Ok(true);
                    }
                }
                Ok(false)
            }
            Constraint::Not(inner) => Ok(!inner.eval(row)?),
            Constraint::And(a, b) => Ok(a.eval(row)? && b.eval(row)?),
            Constraint::Or(a, b) => Ok(a.eval(row)? || b.eval(row)?),
        }
    }

    /// Names of all dimensions the constraint references.
    pub fn referenced_dims(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_dims(&mut out);
        out.sort_unstable();
        out.dedup();
        out
    }

    fn collect_dims<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Constraint::True => {}
            Constraint::Cmp { dim, .. } | Constraint::In { dim, .. } => out.push(dim),
            Constraint::Not(inner) => inner.collect_dims(out),
            Constraint::And(a, b) | Constraint::Or(a, b) => {
                a.collect_dims(out);
                b.collect_dims(out);
            }
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Constraint::Or(..) => 1,
            Constraint::And(..) => 2,
            Constraint::Not(..) => 3,
            _ => 4,
        }
    }

    fn fmt_child(&self, child: &Constraint, right: bool, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // Parsing is left-associative, so a right-nested child of equal
        // precedence needs parentheses to reparse into the same tree.
        let needs_parens = child.precedence() < self.precedence()
            || (right && child.precedence() == self.precedence());
        if needs_parens {
            write!(f, "({child})")
        } else {
            write!(f, "{child}")
        }
    }
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Constraint::True => f.write_str("TRUE"),
            Constraint::Cmp { dim, op, literal } => write!(f, "{dim} {op} {literal}"),
            Constraint::In { dim, literals } => {
                write!(f, "{dim} IN (")?;
                for (i, lit) in literals.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{lit}")?;
                }
                f.write_str(")")
            }
            Constraint::Not(inner) => {
                f.write_str("NOT ")?;
                self.fmt_child(inner, false, f)
            }
            Constraint::And(a, b) => {
                self.fmt_child(a, false, f)?;
                f.write_str(" AND ")?;
                self.fmt_child(b, true, f)
            }
            Constraint::Or(a, b) => {
                self.fmt_child(a, false, f)?;
                f.write_str(" OR ")?;
                self.fmt_child(b, true, f)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    struct MapRow(HashMap<&'static str, DimRef<'static>>);

    impl DimLookup for MapRow {
        fn dim(&self, name: &str) -> Option<DimRef<'_>> {
            self.0.get(name).copied()
        }
    }

    fn row(age: i64, gender: &'static str) -> MapRow {
        let mut m = HashMap::new();
        m.insert("Age", DimRef::Int(age));
        m.insert("Gender", DimRef::Str(gender));
        MapRow(m)
    }

    #[test]
    fn age_and_gender_example() {
        let c = Constraint::and(
            Constraint::cmp("Age", CmpOp::Le, Literal::Int(30)),
            Constraint::cmp("Gender", CmpOp::Eq, Literal::Str("F".into())),
        );
        assert_eq!(c.eval(&row(30, "F")), Ok(true));
        assert_eq!(c.eval(&row(31, "F")), Ok(false));
        assert_eq!(c.eval(&row(30, "M")), Ok(false));
    }

    #[test]
    fn true_literal_matches_everything() {
        assert_eq!(Constraint::True.eval(&row(1, "X")), Ok(true));
    }

    #[test]
    fn not_is_complement() {
        let c = Constraint::cmp("Age", CmpOp::Gt, Literal::Int(10));
        for age in [5, 10, 15] {
            let r = row(age, "F");
            assert_eq!(
                Constraint::not(c.clone()).eval(&r).unwrap(),
                !c.eval(&r).unwrap()
            );
        }
    }

    #[test]
    fn in_list_matches_membership() {
        let c = Constraint::In {
            dim: "Gender".into(),
            literals: vec![Literal::Str("F".into()), Literal::Str("X".into())],
        };
        assert_eq!(c.eval(&row(1, "F")), Ok(true));
        assert_eq!(c.eval(&row(1, "M")), Ok(false));
    }

    #[test]
    fn type_mismatch_is_reported() {
        let c = Constraint::cmp("Age", CmpOp::Eq, Literal::Str("x".into()));
        assert!(matches!(
            c.eval(&row(1, "F")),
            Err(ConstraintError::TypeMismatch { .. })
        ));
    }

    #[test]
    fn display_respects_precedence() {
        let c = Constraint::or(
            Constraint::and(
                Constraint::cmp("Age", CmpOp::Le, Literal::Int(30)),
                Constraint::cmp("Gender", CmpOp::Eq, Literal::Str("F".into())),
            ),
            Constraint::not(Constraint::cmp("Age", CmpOp::Eq, Literal::Int(7))),
        );
        assert_eq!(c.to_string(), "Age <= 30 AND Gender = 'F' OR NOT Age = 7");
        let nested = Constraint::and(
            Constraint::or(
                Constraint::cmp("Age", CmpOp::Lt, Literal::Int(1)),
                Constraint::cmp("Age", CmpOp::Gt, Literal::Int(9)),
            ),
            Constraint::True,
        );
        assert_eq!(nested.to_string(), "(Age < 1 OR Age > 9) AND TRUE");
    }

    /// Independent recursive evaluator used as an oracle: no short-circuiting,
    /// no shared code with `Constraint::eval`.
    fn naive_eval(c: &Constraint, r: &MapRow) -> bool {
        match c {
            Constraint::True => true,
            Constraint::Cmp { dim, op, literal } => {
                let v = r.0[dim.as_str()];
                let ord = match (v, literal) {
                    (DimRef::Int(a), Literal::Int(b)) => a.cmp(b),
                    (DimRef::Str(a), Literal::Str(b)) => a.cmp(&b.as_str()),
                    _ => unreachable!(),
                };
                match op {
                    CmpOp::Eq => ord.is_eq(),
                    CmpOp::Ne => ord.is_ne(),
                    CmpOp::Lt => ord.is_lt(),
                    CmpOp::Le => ord.is_le(),
                    CmpOp::Gt => ord.is_gt(),
                    CmpOp::Ge => ord.is_ge(),
                }
            }
            Constraint::In { dim, literals } => literals.iter().any(|l| {
                naive_eval(
                    &Constraint::cmp(dim.clone(), CmpOp::Eq, l.clone()),
                    r,
                )
            }),
            Constraint::Not(i) => !naive_eval(i, r),
            Constraint::And(a, b) => {
                let (ra, rb) = (naive_eval(a, r), naive_eval(b, r));
                ra && rb
            }
            Constraint::Or(a, b) => {
                let (ra, rb) = (naive_eval(a, r), naive_eval(b, r));
                ra || rb
            }
        }
    }

    /// Pseudo-random depth-3 trees evaluated against the naive oracle.
    #[test]
    fn random_trees_match_naive_evaluator() {
        use crate::rng::hash64;

        fn gen(seed: u64, counter: &mut u64, depth: u32) -> Constraint {
            let h = hash64(seed, {
                *counter += 1;
                *counter
            });
            if depth == 0 {
                match h % 3 {
                    0 => Constraint::cmp(
                        "Age",
                        match h / 3 % 6 {
                            0 => CmpOp::Eq,
                            1 => CmpOp::Ne,
                            2 => CmpOp::Lt,
                            3 => CmpOp::Le,
                            4 => CmpOp::Gt,
                            _ => CmpOp::Ge,
                        },
                        Literal::Int((h / 18 % 50) as i64),
                    ),
                    1 => Constraint::cmp(
                        "Gender",
                        if h / 3 % 2 == 0 { CmpOp::Eq } else { CmpOp::Ne },
                        Literal::Str(if h / 6 % 2 == 0 { "F" } else { "M" }.into()),
                    ),
                    _ => Constraint::In {
                        dim: "Age".into(),
                        literals: vec![
                            Literal::Int((h / 3 % 50) as i64),
                            Literal::Int((h / 150 % 50) as i64),
                        ],
                    },
                }
            } else {
                match h % 3 {
                    0 => Constraint::not(gen(seed, counter, depth - 1)),
                    1 => Constraint::and(
                        gen(seed, counter, depth - 1),
                        gen(seed, counter, depth - 1),
                    ),
                    _ => Constraint::or(
                        gen(seed, counter, depth - 1),
                        gen(seed, counter, depth - 1),
                    ),
                }
            }
        }

        let mut counter = 0u64;
        for case in 0..100 {
            let tree = gen(0xC0FFEE, &mut counter, 3);
            let age = (hash64(1, case) % 50) as i64;
            let gender = if hash64(2, case) % 2 == 0 { "F" } else { "M" };
            let r = row(age, gender);
            assert_eq!(tree.eval(&r).unwrap(), naive_eval(&tree, &r), "case {case}: {tree}");
        }
    }
}
