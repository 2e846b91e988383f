//! The forecasting-task language.
//!
//! One statement per task:
//!
//! ```text
//! FORECAST SUM(<measure>) FROM <table> WHERE <constraint>
//!   USING (<t_s>, <t_e>)
//!   OPTION (MODEL='<id>', FORE_PERIOD=<h> [, GAMMA=<g>] [, ERROR_TARGET=<r>])
//! ```
//!
//! Keywords are case-insensitive; identifiers are not. `COUNT(*)` is sugar
//! for SUM over an implicit all-ones measure, and `AVG(<measure>)` is the
//! ratio of the SUM and COUNT estimates (its ratio bias is documented, not
//! corrected). Constraints are boolean trees over dimension predicates with
//! `=`, `!=`, `<`, `<=`, `>`, `>=`, `IN`, combined by `AND`/`OR`/`NOT`
//! (NOT binds tightest, then AND, then OR).

use std::fmt;

use thiserror::Error;

use aggcast_core::table::{CmpOp, Constraint, Literal};

#[derive(Debug, Error, PartialEq)]
pub enum TaskError {
    #[error("syntax error at byte {position}: expected {expected}")]
    Syntax { position: usize, expected: String },
    #[error("unknown measure `{0}`")]
    UnknownMeasure(String),
    #[error("unknown dimension `{0}`")]
    UnknownDimension(String),
    #[error("empty training window: ({t_start}, {t_end})")]
    EmptyWindow { t_start: i64, t_end: i64 },
}

/// Aggregate requested by a task.
#[derive(Debug, Clone, PartialEq)]
pub enum Aggregate {
    Sum(String),
    Count,
    Avg(String),
}

impl Aggregate {
    /// Measure the aggregate reads, when it reads one.
    pub fn measure(&self) -> Option<&str> {
        match self {
            Aggregate::Sum(m) | Aggregate::Avg(m) => Some(m),
            Aggregate::Count => None,
        }
    }
}

impl fmt::Display for Aggregate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Aggregate::Sum(m) => write!(f, "SUM({m})"),
            Aggregate::Count => write!(f, "COUNT(*)"),
            Aggregate::Avg(m) => write!(f, "AVG({m})"),
        }
    }
}

/// Forecasting model requested in the OPTION clause.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelSpec {
    /// Grid-search (p, d, q) by AIC.
    AutoArima,
    /// Pinned orders.
    Arima { p: usize, d: usize, q: usize },
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelSpec::AutoArima => f.write_str("arima"),
            ModelSpec::Arima { p, d, q } => write!(f, "arima({p},{d},{q})"),
        }
    }
}

impl ModelSpec {
    fn parse(s: &str, position: usize) -> Result<Self, TaskError> {
        if s == "arima" {
            return Ok(ModelSpec::AutoArima);
        }
        let inner = s
            .strip_prefix("arima(")
            .and_then(|r| r.strip_suffix(')'))
            .ok_or_else(|| TaskError::Syntax {
                position,
                expected: "MODEL 'arima' or 'arima(p,d,q)'".into(),
            })?;
        let parts: Vec<&str> = inner.split(',').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(TaskError::Syntax {
                position,
                expected: "three comma-separated orders in 'arima(p,d,q)'".into(),
            });
        }
        let ord = |s: &str| {
            s.parse::<usize>().map_err(|_| TaskError::Syntax {
                position,
                expected: "non-negative integer order".into(),
            })
        };
        Ok(ModelSpec::Arima {
            p: ord(parts[0])?,
            d: ord(parts[1])?,
            q: ord(parts[2])?,
        })
    }
}

/// A parsed forecasting task.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastTask {
    pub agg: Aggregate,
    pub table: String,
    pub constraint: Constraint,
    pub t_start: i64,
    pub t_end: i64,
    pub model: ModelSpec,
    pub horizon: usize,
    pub gamma: f64,
    pub error_target: Option<f64>,
}

impl ForecastTask {
    /// Checks every referenced name against the available dimensions and
    /// measures.
    pub fn validate(&self, dims: &[String], measures: &[String]) -> Result<(), TaskError> {
        if let Some(m) = self.agg.measure() {
            if !measures.iter().any(|x| x == m) {
                return Err(TaskError::UnknownMeasure(m.to_string()));
            }
        }
        for d in self.constraint.referenced_dims() {
            if !dims.iter().any(|x| x == d) {
                return Err(TaskError::UnknownDimension(d.to_string()));
            }
        }
        Ok(())
    }
}

impl fmt::Display for ForecastTask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "FORECAST {} FROM {} WHERE {} USING ({}, {}) OPTION (MODEL='{}', FORE_PERIOD={}, GAMMA={}",
            self.agg,
            self.table,
            self.constraint,
            self.t_start,
            self.t_end,
            self.model,
            self.horizon,
            self.gamma,
        )?;
        if let Some(r) = self.error_target {
            write!(f, ", ERROR_TARGET={r}")?;
        }
        f.write_str(")")
    }
}

/// One per-timestamp aggregation query produced from a task.
#[derive(Debug, Clone, PartialEq)]
pub struct AggQuery {
    pub constraint: Constraint,
    pub measure: Option<String>,
    pub ts: i64,
}

/// Rewrites the task into per-timestamp aggregation queries: one descriptor
/// per distinct domain timestamp inside the training window, in timestamp
/// order, all sharing the constraint and measure.
pub fn rewrite_to_aggregations(task: &ForecastTask, ts_domain: &[i64]) -> Vec<AggQuery> {
    let mut sorted: Vec<i64> = ts_domain
        .iter()
        .copied()
        .filter(|t| *t >= task.t_start && *t <= task.t_end)
        .collect();
    sorted.sort_unstable();
    sorted.dedup();
    sorted
        .into_iter()
        .map(|ts| AggQuery {
            constraint: task.constraint.clone(),
            measure: task.agg.measure().map(str::to_string),
            ts,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Int(i64),
    Float(f64),
    Str(String),
    LParen,
    RParen,
    Comma,
    Star,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "identifier `{s}`"),
            Tok::Int(v) => write!(f, "integer {v}"),
            Tok::Float(v) => write!(f, "number {v}"),
            Tok::Str(s) => write!(f, "string '{s}'"),
            Tok::LParen => f.write_str("'('"),
            Tok::RParen => f.write_str("')'"),
            Tok::Comma => f.write_str("','"),
            Tok::Star => f.write_str("'*'"),
            Tok::Eq => f.write_str("'='"),
            Tok::Ne => f.write_str("'!='"),
            Tok::Lt => f.write_str("'<'"),
            Tok::Le => f.write_str("'<='"),
            Tok::Gt => f.write_str("'>'"),
            Tok::Ge => f.write_str("'>='"),
        }
    }
}

struct Lexer<'a> {
    text: &'a str,
    pos: usize,
    tokens: Vec<(usize, Tok)>,
}

fn lex(text: &str) -> Result<Vec<(usize, Tok)>, TaskError> {
    let mut lx = Lexer {
        text,
        pos: 0,
        tokens: Vec::new(),
    };
    let bytes = text.as_bytes();
    while lx.pos < bytes.len() {
        let start = lx.pos;
        let c = bytes[lx.pos];
        match c {
            b' ' | b'\t' | b'\r' | b'\n' => lx.pos += 1,
            b'(' => lx.push1(Tok::LParen),
            b')' => lx.push1(Tok::RParen),
            b',' => lx.push1(Tok::Comma),
            b'*' => lx.push1(Tok::Star),
            b'=' => lx.push1(Tok::Eq),
            b'!' => {
                if bytes.get(lx.pos + 1) == Some(&b'=') {
                    lx.tokens.push((start, Tok::Ne));
                    lx.pos += 2;
                } else {
                    return Err(TaskError::Syntax {
                        position: start,
                        expected: "'=' after '!'".into(),
                    });
                }
            }
            b'<' => match bytes.get(lx.pos + 1) {
                Some(b'=') => {
                    lx.tokens.push((start, Tok::Le));
                    lx.pos += 2;
                }
                Some(b'>') => {
                    lx.tokens.push((start, Tok::Ne));
                    lx.pos += 2;
                }
                _ => lx.push1(Tok::Lt),
            },
            b'>' => {
                if bytes.get(lx.pos + 1) == Some(&b'=') {
                    lx.tokens.push((start, Tok::Ge));
                    lx.pos += 2;
                } else {
                    lx.push1(Tok::Gt)
                }
            }
            b'\'' => {
                let mut end = lx.pos + 1;
                while end < bytes.len() && bytes[end] != b'\'' {
                    end += 1;
                }
                if end >= bytes.len() {
                    return Err(TaskError::Syntax {
                        position: start,
                        expected: "closing single quote".into(),
                    });
                }
                lx.tokens
                    .push((start, Tok::Str(text[lx.pos + 1..end].to_string())));
                lx.pos = end + 1;
            }
            b'-' | b'0'..=b'9' => {
                let mut end = lx.pos + 1;
                let mut is_float = false;
                while end < bytes.len()
                    && (bytes[end].is_ascii_digit() || (bytes[end] == b'.' && !is_float))
                {
                    if bytes[end] == b'.' {
                        is_float = true;
                    }
                    end += 1;
                }
                let slice = &text[lx.pos..end];
                let tok = if is_float {
                    Tok::Float(slice.parse().map_err(|_| TaskError::Syntax {
                        position: start,
                        expected: "number".into(),
                    })?)
                } else {
                    Tok::Int(slice.parse().map_err(|_| TaskError::Syntax {
                        position: start,
                        expected: "integer".into(),
                    })?)
                };
                lx.tokens.push((start, tok));
                lx.pos = end;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                let mut end = lx.pos + 1;
                while end < bytes.len()
                    && (bytes[end].is_ascii_alphanumeric() || bytes[end] == b'_')
                {
                    end += 1;
                }
                lx.tokens
                    .push((start, Tok::Ident(text[lx.pos..end].to_string())));
                lx.pos = end;
            }
            _ => {
                return Err(TaskError::Syntax {
                    position: start,
                    expected: "token".into(),
                })
            }
        }
    }
    Ok(lx.tokens)
}

impl Lexer<'_> {
    fn push1(&mut self, tok: Tok) {
        self.tokens.push((self.pos, tok));
        self.pos += 1;
        let _ = self.text;
    }
}

struct Parser {
    tokens: Vec<(usize, Tok)>,
    idx: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.idx).map(|(_, t)| t)
    }

    fn position(&self) -> usize {
        self.tokens.get(self.idx).map_or(self.end, |(p, _)| *p)
    }

    fn err(&self, expected: impl Into<String>) -> TaskError {
        TaskError::Syntax {
            position: self.position(),
            expected: expected.into(),
        }
    }

    fn next(&mut self, expected: &str) -> Result<Tok, TaskError> {
        let tok = self
            .tokens
            .get(self.idx)
            .map(|(_, t)| t.clone())
            .ok_or_else(|| self.err(expected))?;
        self.idx += 1;
        Ok(tok)
    }

    /// Consumes a case-insensitive keyword.
    fn keyword(&mut self, kw: &str) -> Result<(), TaskError> {
        match self.peek() {
            Some(Tok::Ident(s)) if s.eq_ignore_ascii_case(kw) => {
                self.idx += 1;
                Ok(())
            }
            _ => Err(self.err(format!("keyword {kw}"))),
        }
    }

    fn peek_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(s)) if s.eq_ignore_ascii_case(kw))
    }

    fn expect(&mut self, tok: Tok) -> Result<(), TaskError> {
        match self.peek() {
            Some(t) if *t == tok => {
                self.idx += 1;
                Ok(())
            }
            _ => Err(self.err(tok.to_string())),
        }
    }

    fn ident(&mut self, what: &str) -> Result<String, TaskError> {
        match self.next(what)? {
            Tok::Ident(s) => Ok(s),
            _ => {
                self.idx -= 1;
                Err(self.err(what))
            }
        }
    }

    fn int(&mut self, what: &str) -> Result<i64, TaskError> {
        match self.next(what)? {
            Tok::Int(v) => Ok(v),
            _ => {
                self.idx -= 1;
                Err(self.err(what))
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<f64, TaskError> {
        match self.next(what)? {
            Tok::Float(v) => Ok(v),
            Tok::Int(v) => Ok(v as f64),
            _ => {
                self.idx -= 1;
                Err(self.err(what))
            }
        }
    }

    fn literal(&mut self) -> Result<Literal, TaskError> {
        match self.next("literal")? {
            Tok::Int(v) => Ok(Literal::Int(v)),
            Tok::Str(s) => Ok(Literal::Str(s)),
            _ => {
                self.idx -= 1;
                Err(self.err("integer or single-quoted string literal"))
            }
        }
    }

    fn constraint(&mut self) -> Result<Constraint, TaskError> {
        let mut left = self.and_expr()?;
        while self.peek_keyword("OR") {
            self.idx += 1;
            let right = self.and_expr()?;
            left = Constraint::or(left, right);
        }
        Ok(left)
    }

    fn and_expr(&mut self) -> Result<Constraint, TaskError> {
        let mut left = self.unary_expr()?;
        while self.peek_keyword("AND") {
            self.idx += 1;
            let right = self.unary_expr()?;
            left = Constraint::and(left, right);
        }
        Ok(left)
    }

    fn unary_expr(&mut self) -> Result<Constraint, TaskError> {
        if self.peek_keyword("NOT") {
            self.idx += 1;
            return Ok(Constraint::not(self.unary_expr()?));
        }
        self.primary_expr()
    }

    fn primary_expr(&mut self) -> Result<Constraint, TaskError> {
        if self.peek_keyword("TRUE") {
            self.idx += 1;
            return Ok(Constraint::True);
        }
        if self.peek() == Some(&Tok::LParen) {
            self.idx += 1;
            let inner = self.constraint()?;
            self.expect(Tok::RParen)?;
            return Ok(inner);
        }
        let dim = self.ident("dimension name, TRUE, NOT or '('")?;
        if self.peek_keyword("IN") {
            self.idx += 1;
            self.expect(Tok::LParen)?;
            let mut literals = vec![self.literal()?];
            while self.peek() == Some(&Tok::Comma) {
                self.idx += 1;
                literals.push(self.literal()?);
            }
            self.expect(Tok::RParen)?;
            return Ok(Constraint::In { dim, literals });
        }
        let op = match self.next("comparison operator")? {
            Tok::Eq => CmpOp::Eq,
            Tok::Ne => CmpOp::Ne,
            Tok::Lt => CmpOp::Lt,
            Tok::Le => CmpOp::Le,
            Tok::Gt => CmpOp::Gt,
            Tok::Ge => CmpOp::Ge,
            _ => {
                self.idx -= 1;
                return Err(self.err("comparison operator or IN"));
            }
        };
        let literal = self.literal()?;
        Ok(Constraint::Cmp { dim, op, literal })
    }
}

/// Parses a bare constraint expression (the WHERE-clause sublanguage).
pub fn parse_constraint(text: &str) -> Result<Constraint, TaskError> {
    let tokens = lex(text)?;
    let mut p = Parser {
        tokens,
        idx: 0,
        end: text.len(),
    };
    let c = p.constraint()?;
    if p.idx != p.tokens.len() {
        return Err(p.err("end of constraint"));
    }
    Ok(c)
}

/// Parses one statement of the task language.
pub fn parse_task(text: &str) -> Result<ForecastTask, TaskError> {
    let tokens = lex(text)?;
    let mut p = Parser {
        tokens,
        idx: 0,
        end: text.len(),
    };

    p.keyword("FORECAST")?;
    let agg = {
        let pos = p.position();
        let kind = p.ident("SUM, COUNT or AVG")?;
        p.expect(Tok::LParen)?;
        let agg = if kind.eq_ignore_ascii_case("SUM") {
            Aggregate::Sum(p.ident("measure name")?)
        } else if kind.eq_ignore_ascii_case("COUNT") {
            p.expect(Tok::Star)?;
            Aggregate::Count
        } else if kind.eq_ignore_ascii_case("AVG") {
            Aggregate::Avg(p.ident("measure name")?)
        } else {
            return Err(TaskError::Syntax {
                position: pos,
                expected: "SUM, COUNT or AVG".into(),
            });
        };
        p.expect(Tok::RParen)?;
        agg
    };
    p.keyword("FROM")?;
    let table = p.ident("table name")?;
    p.keyword("WHERE")?;
    let constraint = p.constraint()?;
    p.keyword("USING")?;
    p.expect(Tok::LParen)?;
    let t_start = p.int("window start timestamp")?;
    p.expect(Tok::Comma)?;
    let t_end = p.int("window end timestamp")?;
    p.expect(Tok::RParen)?;
    if t_start > t_end {
        return Err(TaskError::EmptyWindow { t_start, t_end });
    }

    p.keyword("OPTION")?;
    p.expect(Tok::LParen)?;
    p.keyword("MODEL")?;
    p.expect(Tok::Eq)?;
    let model_pos = p.position();
    let model = match p.next("model string")? {
        Tok::Str(s) => ModelSpec::parse(&s, model_pos)?,
        _ => {
            return Err(TaskError::Syntax {
                position: model_pos,
                expected: "single-quoted model id".into(),
            })
        }
    };
    p.expect(Tok::Comma)?;
    p.keyword("FORE_PERIOD")?;
    p.expect(Tok::Eq)?;
    let horizon_pos = p.position();
    let horizon_raw = p.int("forecast horizon")?;
    if horizon_raw < 1 {
        return Err(TaskError::Syntax {
            position: horizon_pos,
            expected: "FORE_PERIOD >= 1".into(),
        });
    }
    let horizon = horizon_raw as usize;

    let mut gamma = 0.9;
    let mut error_target = None;
    if p.peek() == Some(&Tok::Comma) && p.tokens.get(p.idx + 1).map_or(false, |(_, t)| {
        matches!(t, Tok::Ident(s) if s.eq_ignore_ascii_case("GAMMA"))
    }) {
        p.idx += 2;
        p.expect(Tok::Eq)?;
        let pos = p.position();
        gamma = p.number("confidence level")?;
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(TaskError::Syntax {
                position: pos,
                expected: "GAMMA strictly between 0 and 1".into(),
            });
        }
    }
    if p.peek() == Some(&Tok::Comma) {
        p.idx += 1;
        p.keyword("ERROR_TARGET")?;
        p.expect(Tok::Eq)?;
        let pos = p.position();
        let r = p.number("error target")?;
        if !(r > 0.0) {
            return Err(TaskError::Syntax {
                position: pos,
                expected: "ERROR_TARGET > 0".into(),
            });
        }
        error_target = Some(r);
    }
    p.expect(Tok::RParen)?;
    if p.idx != p.tokens.len() {
        return Err(p.err("end of statement"));
    }

    Ok(ForecastTask {
        agg,
        table,
        constraint,
        t_start,
        t_end,
        model,
        horizon,
        gamma,
        error_target,
    })
}
