//! Concrete syntax for contracts.
//!
//! ```text
//! contract := operand (op operand)*          op is `+` or `(+)`, one kind per choice
//! operand  := 'rec' ident '.' contract       extends as far right as possible
//!           | '!'? ident ('.' operand)?      a missing continuation means `.1`
//!           | '1' | '(' contract ')'
//!           | ident                          a variable when bound by an enclosing `rec`
//! ```
//!
//! `!a` is an output, `a` an input. A `+` choice of outputs is retractable,
//! a `(+)` choice (also written `⊕`) is not. `#` starts a line comment.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::contract::{
    make_sum, validate_with, Branch, Contract, Label, Polarity, SumKind, ValidateOptions,
    ValidationError, Var,
};

/// Byte range `[start, end)` into the parsed text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        debug_assert!(start <= end);
        Span { start, end }
    }

    fn join(self, other: Span) -> Span {
        Span::new(self.start.min(other.start), self.end.max(other.end))
    }

    /// 1-based line and column of `start` in `src`.
    pub fn line_col(&self, src: &str) -> (usize, usize) {
        let upto = &src[..self.start.min(src.len())];
        let line = upto.matches('\n').count() + 1;
        let col = upto.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
        (line, col)
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.start, self.end)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("syntax error at {span}: {message}")]
    Syntax { span: Span, message: String },
    #[error("invalid contract at {span}: {error}")]
    Invalid { span: Span, error: ValidationError },
}

impl ParseError {
    pub fn span(&self) -> Span {
        match self {
            ParseError::Syntax { span, .. } | ParseError::Invalid { span, .. } => *span,
        }
    }

    /// Human readable message with line/column and a caret under the span.
    pub fn render(&self, src: &str) -> String {
        let span = self.span();
        let (line, col) = span.line_col(src);
        let text = src.lines().nth(line - 1).unwrap_or("");
        let width = src.get(span.start..span.end).map_or(1, |s| {
            s.lines().next().map_or(1, |l| l.chars().count().max(1))
        });
        let detail = match self {
            ParseError::Syntax { message, .. } => format!("syntax error: {message}"),
            ParseError::Invalid { error, .. } => format!("invalid contract: {error}"),
        };
        format!(
            "{line}:{col}: {detail}\n  {text}\n  {}{}",
            " ".repeat(col - 1),
            "^".repeat(width)
        )
    }
}

fn syntax(span: Span, message: impl Into<String>) -> ParseError {
    ParseError::Syntax {
        span,
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Rec,
    One,
    Bang,
    Dot,
    Plus,
    OPlus,
    LParen,
    RParen,
    Eq,
    Semi,
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Rec => "`rec`".into(),
            Tok::One => "`1`".into(),
            Tok::Bang => "`!`".into(),
            Tok::Dot => "`.`".into(),
            Tok::Plus => "`+`".into(),
            Tok::OPlus => "`(+)`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::Eq => "`=`".into(),
            Tok::Semi => "`;`".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

struct Comment {
    at: usize,
    text: String,
}

type Lexed = (Vec<(Tok, Span)>, Vec<Comment>);

fn lex(src: &str) -> Result<Lexed, ParseError> {
    let bytes = src.as_bytes();
    let mut toks = Vec::new();
    let mut comments = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        match c {
            b' ' | b'\t' | b'\r' | b'\n' => {
                i += 1;
                continue;
            }
            b'#' => {
                let end = src[i..].find('\n').map_or(src.len(), |n| i + n);
                comments.push(Comment {
                    at: i,
                    text: src[i + 1..end].trim_end().to_string(),
                });
                i = end;
                continue;
            }
            b'(' if src[i..].starts_with("(+)") => {
                i += 3;
                toks.push((Tok::OPlus, Span::new(start, i)));
                continue;
            }
            b'(' => toks.push((Tok::LParen, Span::new(start, start + 1))),
            b')' => toks.push((Tok::RParen, Span::new(start, start + 1))),
            b'!' => toks.push((Tok::Bang, Span::new(start, start + 1))),
            b'.' => toks.push((Tok::Dot, Span::new(start, start + 1))),
            b'+' => toks.push((Tok::Plus, Span::new(start, start + 1))),
            b'=' => toks.push((Tok::Eq, Span::new(start, start + 1))),
            b';' => toks.push((Tok::Semi, Span::new(start, start + 1))),
            b'0'..=b'9' => {
                let mut j = i;
                while j < bytes.len() && bytes[j].is_ascii_alphanumeric() {
                    j += 1;
                }
                if &src[i..j] != "1" {
                    return Err(syntax(
                        Span::new(i, j),
                        format!("unexpected `{}`; only `1` is a numeric token", &src[i..j]),
                    ));
                }
                i = j;
                toks.push((Tok::One, Span::new(start, i)));
                continue;
            }
            c if c.is_ascii_alphabetic() => {
                let mut j = i;
                while j < bytes.len() && (bytes[j].is_ascii_alphanumeric() || bytes[j] == b'_') {
                    j += 1;
                }
                let word = &src[i..j];
                let tok = if word == "rec" {
                    Tok::Rec
                } else {
                    Tok::Ident(word.to_string())
                };
                i = j;
                toks.push((tok, Span::new(start, i)));
                continue;
            }
            _ => {
                let ch = src[i..].chars().next().expect("in bounds");
                let len = ch.len_utf8();
                if ch == '⊕' {
                    i += len;
                    toks.push((Tok::OPlus, Span::new(start, i)));
                    continue;
                }
                return Err(syntax(
                    Span::new(i, i + len),
                    format!("unexpected character `{ch}`"),
                ));
            }
        }
        i += 1;
    }
    toks.push((Tok::Eof, Span::new(src.len(), src.len())));
    Ok((toks, comments))
}

const MAX_NESTING: usize = 256;

struct Parser {
    toks: Vec<(Tok, Span)>,
    pos: usize,
    bound: Vec<Var>,
    nesting: usize,
    opts: ValidateOptions,
}

/// An operand together with enough information to place it in a choice.
struct Operand {
    term: Contract,
    span: Span,
}

impl Parser {
    fn new(toks: Vec<(Tok, Span)>, opts: ValidateOptions) -> Self {
        Parser {
            toks,
            pos: 0,
            bound: Vec::new(),
            nesting: 0,
            opts,
        }
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn peek_at(&self, off: usize) -> &Tok {
        let i = (self.pos + off).min(self.toks.len() - 1);
        &self.toks[i].0
    }

    fn span(&self) -> Span {
        self.toks[self.pos].1
    }

    fn prev_end(&self) -> usize {
        if self.pos == 0 {
            0
        } else {
            self.toks[self.pos - 1].1.end
        }
    }

    fn bump(&mut self) -> (Tok, Span) {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, want: Tok) -> Result<Span, ParseError> {
        if *self.peek() == want {
            Ok(self.bump().1)
        } else {
            Err(syntax(
                self.span(),
                format!(
                    "expected {}, found {}",
                    want.describe(),
                    self.peek().describe()
                ),
            ))
        }
    }

    fn enter(&mut self) -> Result<(), ParseError> {
        self.nesting += 1;
        if self.nesting > MAX_NESTING {
            Err(syntax(self.span(), "nesting too deep"))
        } else {
            Ok(())
        }
    }

    fn contract(&mut self) -> Result<Operand, ParseError> {
        self.enter()?;
        let first = self.operand()?;
        let op = match self.peek() {
            Tok::Plus => SumOp::Plus,
            Tok::OPlus => SumOp::OPlus,
            _ => {
                self.nesting -= 1;
                return Ok(first);
            }
        };
        let mut operands = vec![first];
        while matches!(self.peek(), Tok::Plus | Tok::OPlus) {
            let (tok, span) = self.bump();
            let this = if tok == Tok::Plus {
                SumOp::Plus
            } else {
                SumOp::OPlus
            };
            if this != op {
                return Err(syntax(
                    span,
                    "a choice must use a single operator; parenthesize to mix `+` and `(+)`",
                ));
            }
            operands.push(self.operand()?);
        }
        self.nesting -= 1;
        build_choice(op, operands)
    }

    fn operand(&mut self) -> Result<Operand, ParseError> {
        let start = self.span();
        match self.peek().clone() {
            Tok::Rec => {
                self.bump();
                let (tok, vspan) = self.bump();
                let var = match tok {
                    Tok::Ident(v) => Var::new(v),
                    other => {
                        return Err(syntax(
                            vspan,
                            format!(
                                "expected a variable after `rec`, found {}",
                                other.describe()
                            ),
                        ))
                    }
                };
                if !self.opts.allow_shadowing && self.bound.contains(&var) {
                    return Err(ParseError::Invalid {
                        span: vspan,
                        error: ValidationError::ShadowedVariable(var),
                    });
                }
                self.expect(Tok::Dot)?;
                self.bound.push(var.clone());
                let body = self.contract();
                self.bound.pop();
                let body = body?;
                if matches!(body.term, Contract::Var(_)) {
                    return Err(ParseError::Invalid {
                        span: start.join(body.span),
                        error: ValidationError::UnguardedRecursion(var),
                    });
                }
                Ok(Operand {
                    span: start.join(body.span),
                    term: Contract::Rec(var, Box::new(body.term)),
                })
            }
            Tok::One => {
                self.bump();
                Ok(Operand {
                    term: Contract::Success,
                    span: start,
                })
            }
            Tok::LParen => {
                self.bump();
                let inner = self.contract()?;
                let close = self.expect(Tok::RParen)?;
                Ok(Operand {
                    term: inner.term,
                    span: start.join(close),
                })
            }
            Tok::Bang => {
                self.bump();
                let (tok, lspan) = self.bump();
                let label = match tok {
                    Tok::Ident(l) => l,
                    other => {
                        return Err(syntax(
                            lspan,
                            format!("expected a label after `!`, found {}", other.describe()),
                        ))
                    }
                };
                self.prefix(Polarity::Coname, label, start)
            }
            Tok::Ident(name) => {
                let is_var =
                    self.bound.iter().any(|v| v.as_str() == name) && *self.peek_at(1) != Tok::Dot;
                if is_var {
                    self.bump();
                    Ok(Operand {
                        term: Contract::Var(Var::new(name)),
                        span: start,
                    })
                } else {
                    self.bump();
                    self.prefix(Polarity::Name, name, start)
                }
            }
            other => Err(syntax(
                start,
                format!("expected a contract, found {}", other.describe()),
            )),
        }
    }

    fn prefix(
        &mut self,
        polarity: Polarity,
        label: String,
        start: Span,
    ) -> Result<Operand, ParseError> {
        let (cont, end) = if *self.peek() == Tok::Dot {
            self.bump();
            self.enter()?;
            let c = self.operand()?;
            self.nesting -= 1;
            (c.term, c.span.end)
        } else {
            (Contract::Success, self.prev_end())
        };
        let branch = Branch {
            label: Label::new(label),
            cont,
        };
        let term = match polarity {
            Polarity::Name => Contract::Input(vec![branch]),
            Polarity::Coname => Contract::UnretractableOutput(vec![branch]),
        };
        Ok(Operand {
            term,
            span: Span::new(start.start, end.max(start.end)),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SumOp {
    Plus,
    OPlus,
}

fn build_choice(op: SumOp, operands: Vec<Operand>) -> Result<Operand, ParseError> {
    let span = operands
        .iter()
        .map(|o| o.span)
        .reduce(Span::join)
        .expect("at least two operands");
    let mut polarity = None;
    let mut branches: Vec<Branch> = Vec::with_capacity(operands.len());
    for o in operands {
        let (pol, mut bs) = match o.term {
            Contract::Input(bs) if bs.len() == 1 => (Polarity::Name, bs),
            Contract::UnretractableOutput(bs) if bs.len() == 1 => (Polarity::Coname, bs),
            _ => {
                return Err(syntax(
                    o.span,
                    "each alternative of a choice must be a single action prefix",
                ))
            }
        };
        match polarity {
            None => polarity = Some(pol),
            Some(p) if p != pol => {
                return Err(syntax(o.span, "a choice cannot mix inputs and outputs"));
            }
            _ => {}
        }
        let b = bs.pop().expect("one branch");
        if branches.iter().any(|x| x.label == b.label) {
            return Err(ParseError::Invalid {
                span: o.span,
                error: ValidationError::DuplicateLabel {
                    label: b.label,
                    position: Vec::new(),
                },
            });
        }
        branches.push(b);
    }
    let kind = match (polarity.expect("nonempty"), op) {
        (Polarity::Name, SumOp::Plus) => SumKind::Input,
        (Polarity::Name, SumOp::OPlus) => {
            return Err(syntax(
                span,
                "`(+)` is an output choice; its alternatives must be outputs `!a`",
            ))
        }
        (Polarity::Coname, SumOp::Plus) => SumKind::RetractableOutput,
        (Polarity::Coname, SumOp::OPlus) => SumKind::UnretractableOutput,
    };
    Ok(Operand {
        term: make_sum(kind, branches),
        span,
    })
}

fn finish(term: Contract, span: Span, opts: ValidateOptions) -> Result<Contract, ParseError> {
    validate_with(&term, opts).map_err(|error| ParseError::Invalid { span, error })
}

/// Parses and validates a single contract expression.
pub fn parse(text: &str) -> Result<Contract, ParseError> {
    parse_with(text, ValidateOptions::default())
}

/// Like [`parse`] but accepts shadowed recursion variables, which show up
/// in unfolded terms stored in traces and derivations.
pub fn parse_residual(text: &str) -> Result<Contract, ParseError> {
    parse_with(
        text,
        ValidateOptions {
            allow_shadowing: true,
        },
    )
}

pub fn parse_with(text: &str, opts: ValidateOptions) -> Result<Contract, ParseError> {
    let (toks, _) = lex(text)?;
    let mut p = Parser::new(toks, opts);
    let c = p.contract()?;
    if *p.peek() != Tok::Eof {
        return Err(syntax(
            p.span(),
            format!("unexpected {} after contract", p.peek().describe()),
        ));
    }
    finish(c.term, c.span, opts)
}

/// A `name = contract ;` entry of a contract file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Binding {
    pub name: String,
    pub contract: Contract,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Item {
    Comment(String),
    Binding(Binding),
}

/// A parsed contract file. Comments are kept so the file can be
/// re-emitted in canonical form.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ContractFile {
    pub items: Vec<Item>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FileError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("missing required binding `{0}`")]
    Missing(&'static str),
}

impl ContractFile {
    pub fn bindings(&self) -> impl Iterator<Item = &Binding> {
        self.items.iter().filter_map(|i| match i {
            Item::Binding(b) => Some(b),
            Item::Comment(_) => None,
        })
    }

    pub fn get(&self, name: &str) -> Option<&Contract> {
        self.bindings()
            .find(|b| b.name == name)
            .map(|b| &b.contract)
    }

    /// The `client` and `server` bindings.
    pub fn pair(&self) -> Result<(Contract, Contract), FileError> {
        let client = self.get("client").ok_or(FileError::Missing("client"))?;
        let server = self.get("server").ok_or(FileError::Missing("server"))?;
        Ok((client.clone(), server.clone()))
    }

    /// Canonical text: one comment or binding per line.
    pub fn pretty(&self) -> String {
        let mut out = String::new();
        for item in &self.items {
            match item {
                Item::Comment(t) => {
                    out.push('#');
                    out.push_str(t);
                }
                Item::Binding(b) => {
                    out.push_str(&format!("{} = {};", b.name, pretty(&b.contract)));
                }
            }
            out.push('\n');
        }
        out
    }
}

pub fn parse_file(text: &str) -> Result<ContractFile, ParseError> {
    let (toks, comments) = lex(text)?;
    let mut p = Parser::new(toks, ValidateOptions::default());
    let mut bindings: Vec<(usize, Binding)> = Vec::new();
    while *p.peek() != Tok::Eof {
        let start = p.span();
        let name = match p.bump() {
            (Tok::Ident(n), _) => n,
            (other, span) => {
                return Err(syntax(
                    span,
                    format!("expected a binding name, found {}", other.describe()),
                ))
            }
        };
        if bindings.iter().any(|(_, b)| b.name == name) {
            return Err(syntax(start, format!("`{name}` is bound twice")));
        }
        p.expect(Tok::Eq)?;
        let c = p.contract()?;
        let contract = finish(c.term, c.span, p.opts)?;
        p.expect(Tok::Semi)?;
        bindings.push((
            start.start,
            Binding {
                name,
                contract,
                span: c.span,
            },
        ));
    }
    let mut items = Vec::new();
    let mut comments = comments.into_iter().peekable();
    for (at, b) in bindings {
        while let Some(c) = comments.next_if(|c| c.at < at) {
            items.push(Item::Comment(c.text));
        }
        items.push(Item::Binding(b));
    }
    items.extend(comments.map(|c| Item::Comment(c.text)));
    Ok(ContractFile { items })
}

/// Canonical text for `c`. `parse(&pretty(c)) == Ok(c)` for validated `c`.
pub fn pretty(c: &Contract) -> String {
    let mut out = String::new();
    let mut bound = Vec::new();
    write_term(&mut out, c, &mut bound, true);
    out
}

// `tail` is false when something may follow the term in the same group,
// in which case a `rec` has to be parenthesized.
fn write_term(out: &mut String, c: &Contract, bound: &mut Vec<Var>, tail: bool) {
    match c {
        Contract::Success => out.push('1'),
        Contract::Var(v) => out.push_str(v.as_str()),
        Contract::Rec(v, body) => {
            if !tail {
                out.push('(');
            }
            out.push_str("rec ");
            out.push_str(v.as_str());
            out.push('.');
            bound.push(v.clone());
            write_cont(out, body, bound, true);
            bound.pop();
            if !tail {
                out.push(')');
            }
        }
        Contract::Input(bs)
        | Contract::RetractableOutput(bs)
        | Contract::UnretractableOutput(bs) => {
            let (kind, _) = c.sum().expect("sum");
            let sep = if kind == SumKind::UnretractableOutput {
                " (+) "
            } else {
                " + "
            };
            let pol = kind.polarity();
            if bs.len() == 1 {
                write_branch(out, pol, &bs[0], bound, tail);
            } else {
                for (i, b) in bs.iter().enumerate() {
                    if i > 0 {
                        out.push_str(sep);
                    }
                    write_branch(out, pol, b, bound, false);
                }
            }
        }
    }
}

fn write_cont(out: &mut String, c: &Contract, bound: &mut Vec<Var>, tail: bool) {
    match c.sum() {
        Some((_, bs)) if bs.len() > 1 => {
            out.push('(');
            write_term(out, c, bound, true);
            out.push(')');
        }
        _ => write_term(out, c, bound, tail),
    }
}

fn write_branch(out: &mut String, pol: Polarity, b: &Branch, bound: &mut Vec<Var>, tail: bool) {
    if pol == Polarity::Coname {
        out.push('!');
    }
    out.push_str(b.label.as_str());
    let clashes = pol == Polarity::Name && bound.iter().any(|v| v.as_str() == b.label.as_str());
    if b.cont.is_success() && !clashes {
        return;
    }
    out.push('.');
    write_cont(out, &b.cont, bound, tail);
}

impl fmt::Display for Contract {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&pretty(self))
    }
}

impl Serialize for Contract {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&pretty(self))
    }
}

impl<'de> Deserialize<'de> for Contract {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        parse_residual(&s).map_err(serde::de::Error::custom)
    }
}
