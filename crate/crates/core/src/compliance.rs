//! The compliance decider: a derivation search over the rules `Ax`, `Hyp`,
//! `(+,+)`, `(⊕,+)` and `(+,⊕)`.
//!
//! Judgments have the shape `Γ ▷ ρ ⊣ σ` where `Γ` holds client/server pairs
//! already under examination. Every premise is proved under the hypotheses
//! of its conclusion plus the conclusion itself, which is what lets
//! recursive pairs close with `Hyp` instead of unfolding forever.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::contract::{head_normal, subterm_closure, Branch, Contract, Label};
use crate::parser::pretty;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Rule {
    Ax,
    Hyp,
    #[serde(rename = "(+,+)")]
    PlusPlus,
    #[serde(rename = "(⊕,+)")]
    OplusPlus,
    #[serde(rename = "(+,⊕)")]
    PlusOplus,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Rule::Ax => "Ax",
            Rule::Hyp => "Hyp",
            Rule::PlusPlus => "(+,+)",
            Rule::OplusPlus => "(⊕,+)",
            Rule::PlusOplus => "(+,⊕)",
        })
    }
}

/// Client/server pairs assumed compliant, kept in head-normal form.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Hypotheses {
    pairs: HashSet<(Contract, Contract)>,
}

impl Hypotheses {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Membership up to fold/unfold.
    pub fn contains(&self, client: &Contract, server: &Contract) -> bool {
        self.pairs
            .contains(&(head_normal(client), head_normal(server)))
    }

    pub fn insert(&mut self, client: &Contract, server: &Contract) -> bool {
        self.pairs
            .insert((head_normal(client), head_normal(server)))
    }

    pub fn with(&self, client: &Contract, server: &Contract) -> Hypotheses {
        let mut h = self.clone();
        h.insert(client, server);
        h
    }

    fn remove(&mut self, pair: &(Contract, Contract)) {
        self.pairs.remove(pair);
    }

    pub fn iter(&self) -> impl Iterator<Item = &(Contract, Contract)> {
        self.pairs.iter()
    }
}

/// A derivation tree. Conclusions are stored head-normalized.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Derivation {
    pub rule: Rule,
    pub client: Contract,
    pub server: Contract,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chosen_label: Option<Label>,
    #[serde(default)]
    pub premises: Vec<Derivation>,
}

impl Derivation {
    pub fn leaf(rule: Rule, client: Contract, server: Contract) -> Self {
        Derivation {
            rule,
            client,
            server,
            chosen_label: None,
            premises: Vec::new(),
        }
    }

    /// Number of nodes using each rule, in `Rule` declaration order.
    pub fn rule_counts(&self) -> Vec<(Rule, usize)> {
        let mut counts = Vec::new();
        for r in [
            Rule::Ax,
            Rule::Hyp,
            Rule::PlusPlus,
            Rule::OplusPlus,
            Rule::PlusOplus,
        ] {
            let n = self.nodes().filter(|d| d.rule == r).count();
            if n > 0 {
                counts.push((r, n));
            }
        }
        counts
    }

    /// Pre-order iteration over all nodes.
    pub fn nodes(&self) -> impl Iterator<Item = &Derivation> {
        let mut stack = vec![self];
        std::iter::from_fn(move || {
            let d = stack.pop()?;
            stack.extend(d.premises.iter().rev());
            Some(d)
        })
    }

    /// Chosen labels of `(+,+)` nodes in pre-order.
    pub fn chosen_labels(&self) -> Vec<&Label> {
        self.nodes()
            .filter_map(|d| d.chosen_label.as_ref())
            .collect()
    }

    /// Indented rendering, conclusion first and premises below.
    pub fn render(&self) -> String {
        let mut out = String::new();
        self.render_into(&mut out, 0);
        out
    }

    fn render_into(&self, out: &mut String, indent: usize) {
        let rule = match &self.chosen_label {
            Some(l) => format!("{} [{}]", self.rule, l),
            None => self.rule.to_string(),
        };
        out.push_str(&format!(
            "{}{}  ▷ {} ⊣ {}\n",
            "  ".repeat(indent),
            rule,
            pretty(&self.client),
            pretty(&self.server)
        ));
        for p in &self.premises {
            p.render_into(out, indent + 1);
        }
    }
}

/// Why a judgment could not be derived.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Failure {
    pub client: Contract,
    pub server: Contract,
    pub reason: FailReason,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FailReason {
    /// The head shapes match no rule.
    NoRule {
        client_shape: String,
        server_shape: String,
    },
    /// Two opposite retractable sums without a common label.
    NoSharedLabel,
    /// `(+,+)`: every shared label was tried and failed.
    NoWitness { attempts: Vec<(Label, Failure)> },
    /// `(⊕,+)` or `(+,⊕)`: some output labels have no matching input.
    NotIncluded { rule: Rule, missing: Vec<Label> },
    /// `(⊕,+)` or `(+,⊕)`: the premise for `label` failed.
    Premise {
        rule: Rule,
        label: Label,
        failure: Box<Failure>,
    },
}

impl Failure {
    /// Root-to-leaf label paths ending at each primitive cause.
    pub fn causes(&self) -> Vec<(Vec<Label>, &Failure)> {
        let mut out = Vec::new();
        self.collect(&mut Vec::new(), &mut out);
        out
    }

    fn collect<'a>(&'a self, path: &mut Vec<Label>, out: &mut Vec<(Vec<Label>, &'a Failure)>) {
        match &self.reason {
            FailReason::NoWitness { attempts } => {
                for (l, f) in attempts {
                    path.push(l.clone());
                    f.collect(path, out);
                    path.pop();
                }
            }
            FailReason::Premise { label, failure, .. } => {
                path.push(label.clone());
                failure.collect(path, out);
                path.pop();
            }
            _ => out.push((path.clone(), self)),
        }
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        self.render_into(&mut out, 0);
        out
    }

    fn render_into(&self, out: &mut String, indent: usize) {
        let pad = "  ".repeat(indent);
        let head = format!("{pad}✗ {} ⊣ {}", pretty(&self.client), pretty(&self.server));
        match &self.reason {
            FailReason::NoRule {
                client_shape,
                server_shape,
            } => {
                out.push_str(&format!(
                    "{head}: no rule for {client_shape} against {server_shape}\n"
                ));
            }
            FailReason::NoSharedLabel => {
                out.push_str(&format!("{head}: (+,+) has no shared label\n"));
            }
            FailReason::NoWitness { attempts } => {
                out.push_str(&format!("{head}: (+,+) fails for every shared label\n"));
                for (l, f) in attempts {
                    out.push_str(&format!("{pad}  via {l}:\n"));
                    f.render_into(out, indent + 2);
                }
            }
            FailReason::NotIncluded { rule, missing } => {
                let m: Vec<_> = missing.iter().map(Label::as_str).collect();
                out.push_str(&format!(
                    "{head}: {rule} needs a partner for {}\n",
                    m.join(", ")
                ));
            }
            FailReason::Premise {
                rule,
                label,
                failure,
            } => {
                out.push_str(&format!("{head}: {rule} premise for {label} fails\n"));
                failure.render_into(out, indent + 1);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Compliant(Derivation),
    NotCompliant(Failure),
}

impl Verdict {
    pub fn is_compliant(&self) -> bool {
        matches!(self, Verdict::Compliant(_))
    }

    pub fn derivation(&self) -> Option<&Derivation> {
        match self {
            Verdict::Compliant(d) => Some(d),
            Verdict::NotCompliant(_) => None,
        }
    }

    pub fn failure(&self) -> Option<&Failure> {
        match self {
            Verdict::NotCompliant(f) => Some(f),
            Verdict::Compliant(_) => None,
        }
    }
}

/// Counters collected during a search.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ProveStats {
    pub calls: usize,
    /// Distinct `(client, server)` pairs the procedure was called on.
    pub distinct_pairs: usize,
}

struct Search {
    gamma: Hypotheses,
    seen: HashSet<(Contract, Contract)>,
    calls: usize,
}

fn shape(c: &Contract) -> &'static str {
    match c {
        Contract::Success => "1",
        Contract::Input(_) => "an input sum",
        Contract::RetractableOutput(_) => "a retractable output sum",
        Contract::UnretractableOutput(bs) if bs.len() == 1 => "an output prefix",
        Contract::UnretractableOutput(_) => "an unretractable output choice",
        Contract::Rec(..) | Contract::Var(_) => "a recursion",
    }
}

fn find<'a>(bs: &'a [Branch], l: &Label) -> Option<&'a Branch> {
    bs.binary_search_by(|b| b.label.cmp(l)).ok().map(|i| &bs[i])
}

impl Search {
    fn prove(&mut self, client: &Contract, server: &Contract) -> Result<Derivation, Failure> {
        let client = head_normal(client);
        let server = head_normal(server);
        self.calls += 1;
        self.seen.insert((client.clone(), server.clone()));

        if client.is_success() {
            return Ok(Derivation::leaf(Rule::Ax, client, server));
        }
        if self.gamma.contains(&client, &server) {
            return Ok(Derivation::leaf(Rule::Hyp, client, server));
        }

        let pair = (client.clone(), server.clone());
        self.gamma.insert(&client, &server);
        let result = self.dispatch(&client, &server);
        self.gamma.remove(&pair);
        result
    }

    fn dispatch(&mut self, client: &Contract, server: &Contract) -> Result<Derivation, Failure> {
        let fail = |reason| Failure {
            client: client.clone(),
            server: server.clone(),
            reason,
        };

        if let (Some((cp, cbs)), Some((sp, sbs))) =
            (client.as_retractable_sum(), server.as_retractable_sum())
        {
            if cp != sp {
                let mut attempts = Vec::new();
                for cb in cbs {
                    let Some(sb) = find(sbs, &cb.label) else {
                        continue;
                    };
                    match self.prove(&cb.cont, &sb.cont) {
                        Ok(d) => {
                            return Ok(Derivation {
                                rule: Rule::PlusPlus,
                                client: client.clone(),
                                server: server.clone(),
                                chosen_label: Some(cb.label.clone()),
                                premises: vec![d],
                            })
                        }
                        Err(f) => attempts.push((cb.label.clone(), f)),
                    }
                }
                return Err(fail(if attempts.is_empty() {
                    FailReason::NoSharedLabel
                } else {
                    FailReason::NoWitness { attempts }
                }));
            }
        }

        let (rule, outs, ins, outputs_are_client) = match (client, server) {
            (Contract::UnretractableOutput(o), Contract::Input(i)) => (Rule::OplusPlus, o, i, true),
            (Contract::Input(i), Contract::UnretractableOutput(o)) => {
                (Rule::PlusOplus, o, i, false)
            }
            _ => {
                return Err(fail(FailReason::NoRule {
                    client_shape: shape(client).into(),
                    server_shape: shape(server).into(),
                }))
            }
        };
        let missing: Vec<Label> = outs
            .iter()
            .filter(|o| find(ins, &o.label).is_none())
            .map(|o| o.label.clone())
            .collect();
        if !missing.is_empty() {
            return Err(fail(FailReason::NotIncluded { rule, missing }));
        }
        let mut premises = Vec::with_capacity(outs.len());
        for o in outs {
            let i = find(ins, &o.label).expect("inclusion checked");
            let (c, s) = if outputs_are_client {
                (&o.cont, &i.cont)
            } else {
                (&i.cont, &o.cont)
            };
            match self.prove(c, s) {
                Ok(d) => premises.push(d),
                Err(f) => {
                    return Err(fail(FailReason::Premise {
                        rule,
                        label: o.label.clone(),
                        failure: Box::new(f),
                    }))
                }
            }
        }
        Ok(Derivation {
            rule,
            client: client.clone(),
            server: server.clone(),
            chosen_label: None,
            premises,
        })
    }
}

/// Searches for a derivation of `gamma ▷ client ⊣ server`.
pub fn prove(
    gamma: &Hypotheses,
    client: &Contract,
    server: &Contract,
) -> Result<Derivation, Failure> {
    prove_counted(gamma, client, server).0
}

pub fn prove_counted(
    gamma: &Hypotheses,
    client: &Contract,
    server: &Contract,
) -> (Result<Derivation, Failure>, ProveStats) {
    let mut s = Search {
        gamma: gamma.clone(),
        seen: HashSet::new(),
        calls: 0,
    };
    let r = s.prove(client, server);
    let stats = ProveStats {
        calls: s.calls,
        distinct_pairs: s.seen.len(),
    };
    (r, stats)
}

/// Decides `▷ client ⊣ server` from no hypotheses.
pub fn check(client: &Contract, server: &Contract) -> Verdict {
    match prove(&Hypotheses::new(), client, server) {
        Ok(d) => Verdict::Compliant(d),
        Err(f) => Verdict::NotCompliant(f),
    }
}

/// `|closure(client)| · |closure(server)|`, the bound on distinct calls.
pub fn call_bound(client: &Contract, server: &Contract) -> usize {
    subterm_closure(client).len() * subterm_closure(server).len()
}

/// Checks every node of `d` against its rule, threading hypotheses from the
/// root (which starts from none).
pub fn validate_derivation(d: &Derivation) -> bool {
    validate_under(&Hypotheses::new(), d)
}

pub fn validate_under(gamma: &Hypotheses, d: &Derivation) -> bool {
    let client = head_normal(&d.client);
    let server = head_normal(&d.server);
    let premise_matches = |p: &Derivation, c: &Contract, s: &Contract| {
        head_normal(&p.client) == head_normal(c) && head_normal(&p.server) == head_normal(s)
    };
    let inner = gamma.with(&client, &server);
    let premises_ok = || d.premises.iter().all(|p| validate_under(&inner, p));
    match d.rule {
        Rule::Ax => client.is_success() && d.premises.is_empty() && d.chosen_label.is_none(),
        Rule::Hyp => {
            gamma.contains(&client, &server) && d.premises.is_empty() && d.chosen_label.is_none()
        }
        Rule::PlusPlus => {
            let (Some((cp, cbs)), Some((sp, sbs))) =
                (client.as_retractable_sum(), server.as_retractable_sum())
            else {
                return false;
            };
            let Some(k) = &d.chosen_label else {
                return false;
            };
            let (Some(cb), Some(sb)) = (find(cbs, k), find(sbs, k)) else {
                return false;
            };
            cp != sp
                && d.premises.len() == 1
                && premise_matches(&d.premises[0], &cb.cont, &sb.cont)
                && premises_ok()
        }
        Rule::OplusPlus | Rule::PlusOplus => {
            let (outs, ins, outputs_are_client) = match (d.rule, &client, &server) {
                (Rule::OplusPlus, Contract::UnretractableOutput(o), Contract::Input(i)) => {
                    (o, i, true)
                }
                (Rule::PlusOplus, Contract::Input(i), Contract::UnretractableOutput(o)) => {
                    (o, i, false)
                }
                _ => return false,
            };
            if d.chosen_label.is_some() || d.premises.len() != outs.len() {
                return false;
            }
            for (o, p) in outs.iter().zip(&d.premises) {
                let Some(i) = find(ins, &o.label) else {
                    return false;
                };
                let ok = if outputs_are_client {
                    premise_matches(p, &o.cont, &i.cont)
                } else {
                    premise_matches(p, &i.cont, &o.cont)
                };
                if !ok {
                    return false;
                }
            }
            premises_ok()
        }
    }
}

/// Which head shape a compliant pair has.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairShape {
    ClientSuccess,
    /// Opposite retractable sums with at least one shared label.
    SharedRetractable,
    /// Client unretractable choice whose labels the server's inputs cover.
    OutputsCovered,
    /// Server unretractable choice whose labels the client's inputs cover.
    InputsCover,
}

/// Classifies the head-normal tops of a pair into the shapes a compliant
/// pair can have; `None` when no shape fits.
pub fn pair_shape(client: &Contract, server: &Contract) -> Option<PairShape> {
    let client = head_normal(client);
    let server = head_normal(server);
    if client.is_success() {
        return Some(PairShape::ClientSuccess);
    }
    if let (Some((cp, cbs)), Some((sp, sbs))) =
        (client.as_retractable_sum(), server.as_retractable_sum())
    {
        if cp != sp && cbs.iter().any(|b| find(sbs, &b.label).is_some()) {
            return Some(PairShape::SharedRetractable);
        }
    }
    let covers =
        |outs: &[Branch], ins: &[Branch]| outs.iter().all(|o| find(ins, &o.label).is_some());
    match (&client, &server) {
        (Contract::UnretractableOutput(o), Contract::Input(i)) if covers(o, i) => {
            Some(PairShape::OutputsCovered)
        }
        (Contract::Input(i), Contract::UnretractableOutput(o)) if covers(o, i) => {
            Some(PairShape::InputsCover)
        }
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse;

    fn c(s: &str) -> Contract {
        parse(s).unwrap()
    }

    const BUYER: &str = "!bag.price.(!card (+) !cash) (+) !belt.price.(!card (+) !cash)";
    const BUYER_P: &str = "!bag.price.(!card (+) !cash) + !belt.price.(!card (+) !cash)";
    const SELLER: &str = "belt.!price.cash + bag.!price.(card + cash)";

    #[test]
    fn example4_spine() {
        let v = check(&c(BUYER_P), &c(SELLER));
        let d = v.derivation().expect("compliant");
        assert_eq!(d.rule, Rule::PlusPlus);
        assert_eq!(d.chosen_label.as_ref().unwrap().as_str(), "bag");
        let d1 = &d.premises[0];
        assert_eq!(d1.rule, Rule::PlusPlus);
        assert_eq!(d1.chosen_label.as_ref().unwrap().as_str(), "price");
        let d2 = &d1.premises[0];
        assert_eq!(d2.rule, Rule::OplusPlus);
        assert!(d2.premises.iter().all(|p| p.rule == Rule::Ax));
        assert_eq!(d2.premises.len(), 2);
        assert!(validate_derivation(d));
    }

    #[test]
    fn example5_closes_with_hyp() {
        let rho = c("rec x.(!b.x + !a.c.x)");
        let sigma = c("rec x.(b.x + a.!e.x)");
        let d = check(&rho, &sigma)
            .derivation()
            .cloned()
            .expect("compliant");
        assert_eq!(d.rule, Rule::PlusPlus);
        assert_eq!(d.chosen_label.as_ref().unwrap().as_str(), "b");
        assert_eq!(d.premises[0].rule, Rule::Hyp);
        assert!(validate_derivation(&d));
    }

    #[test]
    fn success_is_an_axiom() {
        let d = check(&Contract::Success, &c("a.!b"))
            .derivation()
            .cloned()
            .unwrap();
        assert_eq!(d, Derivation::leaf(Rule::Ax, Contract::Success, c("a.!b")));
    }

    #[test]
    fn buyer_fails_on_belt_inclusion() {
        let f = check(&c(BUYER), &c(SELLER))
            .failure()
            .cloned()
            .expect("not compliant");
        let causes = f.causes();
        assert_eq!(causes.len(), 1);
        let (path, leaf) = &causes[0];
        let path: Vec<_> = path.iter().map(Label::as_str).collect();
        assert_eq!(path, ["belt", "price"]);
        assert_eq!(
            leaf.reason,
            FailReason::NotIncluded {
                rule: Rule::OplusPlus,
                missing: vec![Label::new("card")]
            }
        );
    }

    #[test]
    fn example2_is_not_compliant() {
        let v = check(&c("rec x.(!b.x (+) !a.c.x)"), &c("rec x.(b.x + a.!e.x)"));
        let f = v.failure().expect("not compliant");
        match &f.reason {
            FailReason::Premise {
                rule: Rule::OplusPlus,
                label,
                failure,
            } => {
                assert_eq!(label.as_str(), "a");
                assert_eq!(failure.reason, FailReason::NoSharedLabel);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn trivial_pairs() {
        let d = check(&c("a"), &c("!a")).derivation().cloned().unwrap();
        assert_eq!(d.rule, Rule::PlusPlus);
        assert_eq!(d.premises[0].rule, Rule::Ax);
        assert!(!check(&c("a"), &c("!b")).is_compliant());
        assert!(!check(&c("!a (+) !b"), &c("!a (+) !b")).is_compliant());
        assert!(!check(&c("a"), &Contract::Success).is_compliant());
    }

    #[test]
    fn broken_derivations_are_rejected() {
        assert!(!validate_derivation(&Derivation::leaf(
            Rule::Ax,
            c("a"),
            c("!a")
        )));
        assert!(!validate_derivation(&Derivation::leaf(
            Rule::Hyp,
            c("a"),
            c("!a")
        )));
        let mut d = check(&c(BUYER_P), &c(SELLER))
            .derivation()
            .cloned()
            .unwrap();
        d.chosen_label = Some(Label::new("belt"));
        assert!(!validate_derivation(&d));
        let mut d = check(&c(BUYER_P), &c(SELLER))
            .derivation()
            .cloned()
            .unwrap();
        d.premises[0].premises[0].premises.pop();
        assert!(!validate_derivation(&d));
    }

    #[test]
    fn hypotheses_monotone_in_search() {
        let rho = c("rec x.(!b.x + !a.c.x)");
        let sigma = c("rec x.(b.x + a.!e.x)");
        let (r, stats) = prove_counted(&Hypotheses::new(), &rho, &sigma);
        assert!(r.is_ok());
        assert!(stats.distinct_pairs <= call_bound(&rho, &sigma));
    }
}
