//! Contract terms, actions, histories and configured contracts.
//!
//! A [`Contract`] value is only meaningful once it went through
//! [`validate`]: validated terms are closed, guarded, have pairwise
//! distinct labels in every sum, keep their branches sorted by label and
//! never contain a one-branch retractable output (that form is stored as a
//! one-branch unretractable output, which has the same behaviour).
//!
//! Recursion is equi-recursive: `rec x.body` stands for
//! `body[rec x.body / x]`. [`unfold`] performs one such step at the top and
//! [`head_normal`] iterates it until a sum or `1` shows up.

use std::collections::{BTreeSet, HashSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A branch or action label.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Label(String);

impl Label {
    pub fn new(s: impl Into<String>) -> Self {
        Label(s.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Letters, digits and underscores, starting with a letter.
    pub fn is_identifier(s: &str) -> bool {
        let mut chars = s.chars();
        matches!(chars.next(), Some(c) if c.is_ascii_alphabetic())
            && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for Label {
    fn from(s: &str) -> Self {
        Label::new(s)
    }
}

/// A recursion variable.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(String);

impl Var {
    pub fn new(s: impl Into<String>) -> Self {
        Var(s.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for Var {
    fn from(s: &str) -> Self {
        Var::new(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Polarity {
    /// An input `a`.
    Name,
    /// An output `!a`.
    Coname,
}

impl Polarity {
    pub fn flip(self) -> Self {
        match self {
            Polarity::Name => Polarity::Coname,
            Polarity::Coname => Polarity::Name,
        }
    }
}

/// A name (input) or coname (output).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Action {
    pub polarity: Polarity,
    pub label: Label,
}

impl Action {
    pub fn name(label: impl Into<String>) -> Self {
        Action {
            polarity: Polarity::Name,
            label: Label::new(label),
        }
    }

    pub fn coname(label: impl Into<String>) -> Self {
        Action {
            polarity: Polarity::Coname,
            label: Label::new(label),
        }
    }

    /// Flips the polarity and keeps the label. An involution.
    pub fn dual(&self) -> Action {
        Action {
            polarity: self.polarity.flip(),
            label: self.label.clone(),
        }
    }
}

/// Free-function form of [`Action::dual`].
pub fn dual_action(a: &Action) -> Action {
    a.dual()
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.polarity {
            Polarity::Name => write!(f, "{}", self.label),
            Polarity::Coname => write!(f, "!{}", self.label),
        }
    }
}

/// One `label.continuation` alternative of a sum.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Branch {
    pub label: Label,
    pub cont: Contract,
}

impl Branch {
    pub fn new(label: impl Into<String>, cont: Contract) -> Self {
        Branch {
            label: Label::new(label),
            cont,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Contract {
    /// `1`
    Success,
    /// `a.σ + b.σ′ + …`
    Input(Vec<Branch>),
    /// `!a.σ + !b.σ′ + …`, alternatives are kept for rollback.
    RetractableOutput(Vec<Branch>),
    /// `!a.σ (+) !b.σ′ (+) …`, resolved silently; alternatives are lost.
    UnretractableOutput(Vec<Branch>),
    Rec(Var, Box<Contract>),
    Var(Var),
}

/// Which kind of sum a term is, if any.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SumKind {
    Input,
    RetractableOutput,
    UnretractableOutput,
}

impl SumKind {
    pub fn polarity(self) -> Polarity {
        match self {
            SumKind::Input => Polarity::Name,
            SumKind::RetractableOutput | SumKind::UnretractableOutput => Polarity::Coname,
        }
    }
}

impl Contract {
    pub fn rec(var: impl Into<String>, body: Contract) -> Self {
        Contract::Rec(Var::new(var), Box::new(body))
    }

    pub fn var(var: impl Into<String>) -> Self {
        Contract::Var(Var::new(var))
    }

    /// Single input prefix `label.cont`.
    pub fn input(label: impl Into<String>, cont: Contract) -> Self {
        Contract::Input(vec![Branch::new(label, cont)])
    }

    /// Single output prefix `!label.cont` in canonical form.
    pub fn output(label: impl Into<String>, cont: Contract) -> Self {
        Contract::UnretractableOutput(vec![Branch::new(label, cont)])
    }

    pub fn is_success(&self) -> bool {
        matches!(self, Contract::Success)
    }

    pub fn sum(&self) -> Option<(SumKind, &[Branch])> {
        match self {
            Contract::Input(bs) => Some((SumKind::Input, bs)),
            Contract::RetractableOutput(bs) => Some((SumKind::RetractableOutput, bs)),
            Contract::UnretractableOutput(bs) => Some((SumKind::UnretractableOutput, bs)),
            _ => None,
        }
    }

    /// The term viewed as a retractable sum: inputs, retractable outputs,
    /// and one-branch outputs (which behave like a unary retractable output).
    pub fn as_retractable_sum(&self) -> Option<(Polarity, &[Branch])> {
        match self {
            Contract::Input(bs) => Some((Polarity::Name, bs)),
            Contract::RetractableOutput(bs) => Some((Polarity::Coname, bs)),
            Contract::UnretractableOutput(bs) if bs.len() == 1 => Some((Polarity::Coname, bs)),
            _ => None,
        }
    }

    pub fn as_unretractable(&self) -> Option<&[Branch]> {
        match self {
            Contract::UnretractableOutput(bs) => Some(bs),
            _ => None,
        }
    }

    pub fn as_input(&self) -> Option<&[Branch]> {
        match self {
            Contract::Input(bs) => Some(bs),
            _ => None,
        }
    }

    pub fn contains_rec(&self) -> bool {
        match self {
            Contract::Success => false,
            Contract::Rec(..) | Contract::Var(_) => true,
            Contract::Input(bs)
            | Contract::RetractableOutput(bs)
            | Contract::UnretractableOutput(bs) => bs.iter().any(|b| b.cont.contains_rec()),
        }
    }

    /// Syntactic nesting depth of the term tree; leaves have depth 1.
    pub fn depth(&self) -> usize {
        match self {
            Contract::Success | Contract::Var(_) => 1,
            Contract::Rec(_, body) => 1 + body.depth(),
            Contract::Input(bs)
            | Contract::RetractableOutput(bs)
            | Contract::UnretractableOutput(bs) => {
                1 + bs.iter().map(|b| b.cont.depth()).max().unwrap_or(0)
            }
        }
    }

    /// Longest chain of action prefixes, not looking through recursion.
    pub fn prefix_depth(&self) -> usize {
        match self {
            Contract::Success | Contract::Var(_) => 0,
            Contract::Rec(_, body) => body.prefix_depth(),
            Contract::Input(bs)
            | Contract::RetractableOutput(bs)
            | Contract::UnretractableOutput(bs) => {
                1 + bs.iter().map(|b| b.cont.prefix_depth()).max().unwrap_or(0)
            }
        }
    }

    pub fn size(&self) -> usize {
        match self {
            Contract::Success | Contract::Var(_) => 1,
            Contract::Rec(_, body) => 1 + body.size(),
            Contract::Input(bs)
            | Contract::RetractableOutput(bs)
            | Contract::UnretractableOutput(bs) => {
                1 + bs.iter().map(|b| b.cont.size()).sum::<usize>()
            }
        }
    }

    /// Replaces free occurrences of `var` by `by`. `by` must be closed, so
    /// no capture can happen; substitution stops at a rebinding of `var`.
    pub fn substitute(&self, var: &Var, by: &Contract) -> Contract {
        match self {
            Contract::Success => Contract::Success,
            Contract::Var(v) if v == var => by.clone(),
            Contract::Var(v) => Contract::Var(v.clone()),
            Contract::Rec(v, _) if v == var => self.clone(),
            Contract::Rec(v, body) => Contract::Rec(v.clone(), Box::new(body.substitute(var, by))),
            Contract::Input(bs) => Contract::Input(subst_branches(bs, var, by)),
            Contract::RetractableOutput(bs) => {
                Contract::RetractableOutput(subst_branches(bs, var, by))
            }
            Contract::UnretractableOutput(bs) => {
                Contract::UnretractableOutput(subst_branches(bs, var, by))
            }
        }
    }
}

fn subst_branches(bs: &[Branch], var: &Var, by: &Contract) -> Vec<Branch> {
    bs.iter()
        .map(|b| Branch {
            label: b.label.clone(),
            cont: b.cont.substitute(var, by),
        })
        .collect()
}

/// Builds a sum of `kind` from `branches` in canonical form: sorted by
/// label, and a single retractable output collapses to the unretractable
/// constructor.
pub fn make_sum(kind: SumKind, mut branches: Vec<Branch>) -> Contract {
    branches.sort_by(|a, b| a.label.cmp(&b.label));
    match kind {
        SumKind::Input => Contract::Input(branches),
        SumKind::RetractableOutput if branches.len() == 1 => {
            Contract::UnretractableOutput(branches)
        }
        SumKind::RetractableOutput => Contract::RetractableOutput(branches),
        SumKind::UnretractableOutput => Contract::UnretractableOutput(branches),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ValidationError {
    #[error("free variable `{0}`")]
    FreeVariable(Var),
    #[error("unguarded recursion: the body of `rec {0}` is a bare variable")]
    UnguardedRecursion(Var),
    #[error("duplicate label `{label}` in the sum at branch path {position:?}")]
    DuplicateLabel { label: Label, position: Vec<usize> },
    #[error("empty sum at branch path {0:?}")]
    EmptySum(Vec<usize>),
    #[error("recursion variable `{0}` shadows an enclosing binder")]
    ShadowedVariable(Var),
    #[error("`{0}` is not a valid identifier")]
    BadIdentifier(String),
}

/// Strictness knobs for [`validate_with`].
#[derive(Debug, Clone, Copy, Default)]
pub struct ValidateOptions {
    /// Accept `rec x. … rec x. …`. Unfolding nested recursion produces such
    /// terms, so residuals read back from traces need this.
    pub allow_shadowing: bool,
}

/// Checks that `term` is a retractable contract and returns its canonical
/// form.
pub fn validate(term: &Contract) -> Result<Contract, ValidationError> {
    validate_with(term, ValidateOptions::default())
}

pub fn validate_with(term: &Contract, opts: ValidateOptions) -> Result<Contract, ValidationError> {
    let mut bound = Vec::new();
    let mut path = Vec::new();
    canon(term, &mut bound, &mut path, opts)
}

fn canon(
    term: &Contract,
    bound: &mut Vec<Var>,
    path: &mut Vec<usize>,
    opts: ValidateOptions,
) -> Result<Contract, ValidationError> {
    match term {
        Contract::Success => Ok(Contract::Success),
        Contract::Var(v) => {
            if bound.contains(v) {
                Ok(Contract::Var(v.clone()))
            } else {
                Err(ValidationError::FreeVariable(v.clone()))
            }
        }
        Contract::Rec(v, body) => {
            if !Label::is_identifier(v.as_str()) || v.as_str() == "rec" {
                return Err(ValidationError::BadIdentifier(v.to_string()));
            }
            if matches!(**body, Contract::Var(_)) {
                return Err(ValidationError::UnguardedRecursion(v.clone()));
            }
            if !opts.allow_shadowing && bound.contains(v) {
                return Err(ValidationError::ShadowedVariable(v.clone()));
            }
            bound.push(v.clone());
            let body = canon(body, bound, path, opts);
            bound.pop();
            Ok(Contract::Rec(v.clone(), Box::new(body?)))
        }
        Contract::Input(bs)
        | Contract::RetractableOutput(bs)
        | Contract::UnretractableOutput(bs) => {
            let kind = term.sum().map(|(k, _)| k).expect("sum");
            if bs.is_empty() {
                return Err(ValidationError::EmptySum(path.clone()));
            }
            let mut seen = BTreeSet::new();
            let mut out = Vec::with_capacity(bs.len());
            for (i, b) in bs.iter().enumerate() {
                if !Label::is_identifier(b.label.as_str()) || b.label.as_str() == "rec" {
                    return Err(ValidationError::BadIdentifier(b.label.to_string()));
                }
                if !seen.insert(&b.label) {
                    return Err(ValidationError::DuplicateLabel {
                        label: b.label.clone(),
                        position: path.clone(),
                    });
                }
                path.push(i);
                let cont = canon(&b.cont, bound, path, opts);
                path.pop();
                out.push(Branch {
                    label: b.label.clone(),
                    cont: cont?,
                });
            }
            Ok(make_sum(kind, out))
        }
    }
}

/// One top-level fold/unfold step: `rec x.σ` becomes `σ[rec x.σ/x]`; any
/// other term is returned unchanged.
pub fn unfold(c: &Contract) -> Contract {
    match c {
        Contract::Rec(v, body) => body.substitute(v, c),
        _ => c.clone(),
    }
}

/// Unfolds until the head is `1` or a sum. Guardedness makes this
/// terminate within `c.depth()` steps.
pub fn head_normal(c: &Contract) -> Contract {
    head_normal_counted(c).0
}

/// [`head_normal`] together with the number of unfold steps it took.
pub fn head_normal_counted(c: &Contract) -> (Contract, usize) {
    let mut cur = c.clone();
    let mut steps = 0;
    while let Contract::Rec(..) = cur {
        cur = unfold(&cur);
        steps += 1;
    }
    debug_assert!(
        !matches!(cur, Contract::Var(_)),
        "open term reached head position"
    );
    (cur, steps)
}

/// The set of head-normal terms reachable from `c` by taking branch
/// continuations. Finite since contracts denote regular trees.
pub fn subterm_closure(c: &Contract) -> HashSet<Contract> {
    let mut seen = HashSet::new();
    let mut queue = VecDeque::new();
    let start = head_normal(c);
    seen.insert(start.clone());
    queue.push_back(start);
    while let Some(t) = queue.pop_front() {
        if let Some((_, bs)) = t.sum() {
            for b in bs {
                let n = head_normal(&b.cont);
                if seen.insert(n.clone()) {
                    queue.push_back(n);
                }
            }
        }
    }
    seen
}

/// A stack element: a contract or the placeholder `∘`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Entry {
    Contract(Contract),
    Hole,
}

impl Entry {
    pub fn as_contract(&self) -> Option<&Contract> {
        match self {
            Entry::Contract(c) => Some(c),
            Entry::Hole => None,
        }
    }

    pub fn is_hole(&self) -> bool {
        matches!(self, Entry::Hole)
    }
}

impl From<Contract> for Entry {
    fn from(c: Contract) -> Self {
        Entry::Contract(c)
    }
}

/// A stack of discarded alternatives, bottom first.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct History {
    entries: Vec<Entry>,
}

impl History {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_entries(entries: Vec<Entry>) -> Self {
        History { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn top(&self) -> Option<&Entry> {
        self.entries.last()
    }

    pub fn push(&mut self, e: Entry) {
        self.entries.push(e);
    }

    pub fn pop(&mut self) -> Option<Entry> {
        self.entries.pop()
    }

    pub fn pushed(&self, e: Entry) -> History {
        let mut h = self.clone();
        h.push(e);
        h
    }

    /// `other` placed below `self`.
    pub fn prepend(&self, other: &History) -> History {
        let mut entries = other.entries.clone();
        entries.extend(self.entries.iter().cloned());
        History { entries }
    }
}

/// A history paired with the current contract (or `∘`).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConfiguredContract {
    pub history: History,
    pub current: Entry,
}

impl ConfiguredContract {
    /// `⟨[]⟩ c`
    pub fn fresh(c: Contract) -> Self {
        ConfiguredContract {
            history: History::new(),
            current: Entry::Contract(c),
        }
    }

    pub fn new(history: History, current: Entry) -> Self {
        ConfiguredContract { history, current }
    }

    /// True when the current contract is `1` up to unfolding.
    pub fn is_success(&self) -> bool {
        match &self.current {
            Entry::Contract(c) => head_normal(c).is_success(),
            Entry::Hole => false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rho_ex2() -> Contract {
        // rec x.(!b.x (+) !a.c.x)
        Contract::rec(
            "x",
            Contract::UnretractableOutput(vec![
                Branch::new("b", Contract::var("x")),
                Branch::new("a", Contract::input("c", Contract::var("x"))),
            ]),
        )
    }

    fn sigma() -> Contract {
        // rec x.(b.x + a.!e.x)
        Contract::rec(
            "x",
            Contract::Input(vec![
                Branch::new("b", Contract::var("x")),
                Branch::new("a", Contract::output("e", Contract::var("x"))),
            ]),
        )
    }

    #[test]
    fn dual_is_involution() {
        let a = Action::name("price");
        assert_eq!(a.dual(), Action::coname("price"));
        assert_eq!(a.dual().dual(), a);
        assert_eq!(dual_action(&Action::coname("cash")), Action::name("cash"));
    }

    #[test]
    fn validate_accepts_example_terms() {
        let r = validate(&rho_ex2()).unwrap();
        // branches are sorted
        match &r {
            Contract::Rec(_, body) => {
                let bs = body.as_unretractable().unwrap();
                assert_eq!(bs[0].label.as_str(), "a");
                assert_eq!(bs[1].label.as_str(), "b");
            }
            _ => panic!("expected rec"),
        }
        validate(&sigma()).unwrap();
    }

    #[test]
    fn validate_rejects_unguarded() {
        let t = Contract::rec("x", Contract::var("x"));
        assert_eq!(
            validate(&t),
            Err(ValidationError::UnguardedRecursion(Var::new("x")))
        );
        let t = Contract::rec("x", Contract::rec("y", Contract::var("x")));
        assert_eq!(
            validate(&t),
            Err(ValidationError::UnguardedRecursion(Var::new("y")))
        );
    }

    #[test]
    fn validate_rejects_duplicates_free_and_empty() {
        let t = Contract::Input(vec![
            Branch::new("a", Contract::Success),
            Branch::new("a", Contract::Success),
        ]);
        assert!(matches!(
            validate(&t),
            Err(ValidationError::DuplicateLabel { .. })
        ));
        assert_eq!(
            validate(&Contract::var("x")),
            Err(ValidationError::FreeVariable(Var::new("x")))
        );
        let t = Contract::input("a", Contract::Input(vec![]));
        assert_eq!(validate(&t), Err(ValidationError::EmptySum(vec![0])));
    }

    #[test]
    fn validate_shadowing_policy() {
        let t = Contract::rec(
            "x",
            Contract::input(
                "a",
                Contract::rec("x", Contract::input("b", Contract::var("x"))),
            ),
        );
        assert_eq!(
            validate(&t),
            Err(ValidationError::ShadowedVariable(Var::new("x")))
        );
        assert!(validate_with(
            &t,
            ValidateOptions {
                allow_shadowing: true
            }
        )
        .is_ok());
    }

    #[test]
    fn unary_retractable_output_is_canonicalized() {
        let t = Contract::RetractableOutput(vec![Branch::new("card", Contract::Success)]);
        assert_eq!(
            validate(&t).unwrap(),
            Contract::output("card", Contract::Success)
        );
    }

    #[test]
    fn unfold_top_only() {
        let s = validate(&sigma()).unwrap();
        let u = unfold(&s);
        let expected = validate(&Contract::Input(vec![
            Branch::new("b", s.clone()),
            Branch::new("a", Contract::output("e", s.clone())),
        ]))
        .unwrap();
        assert_eq!(u, expected);
        assert_eq!(unfold(&Contract::Success), Contract::Success);
        let t = validate(&Contract::input(
            "a",
            Contract::rec("x", Contract::input("a", Contract::var("x"))),
        ))
        .unwrap();
        assert_eq!(unfold(&t), t);
    }

    #[test]
    fn head_normal_is_idempotent_and_bounded() {
        let t = validate(&Contract::rec(
            "x",
            Contract::rec("y", Contract::input("a", Contract::var("x"))),
        ))
        .unwrap();
        let (h, steps) = head_normal_counted(&t);
        assert!(steps <= t.depth());
        assert_eq!(steps, 2);
        assert_eq!(head_normal(&h), h);
        assert!(h.as_input().is_some());
    }

    #[test]
    fn closure_of_simple_terms() {
        let t = Contract::input("a", Contract::Success);
        let s = subterm_closure(&t);
        assert_eq!(s.len(), 2);
        assert!(s.contains(&Contract::Success));

        let r = validate(&Contract::rec(
            "x",
            Contract::input("a", Contract::var("x")),
        ))
        .unwrap();
        let s = subterm_closure(&r);
        assert_eq!(s.len(), 1);
        assert!(s.contains(&Contract::input("a", r.clone())));
    }

    #[test]
    fn history_push_pop() {
        let mut h = History::new();
        assert_eq!(h.pop(), None);
        let before = h.clone();
        h.push(Entry::Hole);
        h.pop();
        assert_eq!(h, before);
    }
}
