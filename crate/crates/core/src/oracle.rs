//! Ground truth for recursion-free pairs: explore every configuration
//! reachable from `⟨[]⟩ρ ∥ ⟨[]⟩σ` and look for a stuck one whose client
//! is not `1`.
//!
//! On recursion-free contracts every stack entry is a sub-sum of some
//! subterm and stacks never get deeper than the longest prefix chain, so
//! the graph is finite and breadth-first search terminates without a cap.

use std::collections::{HashMap, HashSet, VecDeque};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::compliance::{check, Derivation, Verdict};
use crate::contract::{make_sum, Branch, ConfiguredContract, Contract, Entry};
use crate::gen::{random_contract, GenParams};
use crate::lts::{pair_steps, PairConfig, PairStep, StepKind, Trace};
use crate::serial::TraceDoc;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("exhaustive exploration only handles recursion-free contracts")]
    RecursionUnsupported,
}

#[derive(Debug, Clone)]
pub struct ReductionGraph {
    /// Nodes in breadth-first discovery order; `nodes[0]` is the root.
    pub nodes: Vec<PairConfig>,
    /// `(from, kind, to)` for every enabled step.
    pub edges: Vec<(usize, StepKind, usize)>,
    index: HashMap<PairConfig, usize>,
    parent: Vec<Option<(usize, usize)>>,
}

impl ReductionGraph {
    pub fn root(&self) -> &PairConfig {
        &self.nodes[0]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn index_of(&self, p: &PairConfig) -> Option<usize> {
        self.index.get(p).copied()
    }

    pub fn successors(&self, i: usize) -> impl Iterator<Item = &(usize, StepKind, usize)> {
        self.edges.iter().filter(move |e| e.0 == i)
    }

    pub fn stuck_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        let mut has_out = vec![false; self.nodes.len()];
        for e in &self.edges {
            has_out[e.0] = true;
        }
        (0..self.nodes.len()).filter(move |&i| !has_out[i])
    }

    /// The breadth-first (hence shortest) path from the root to node `i`.
    pub fn path_to(&self, i: usize) -> Trace {
        let mut steps = Vec::new();
        let mut cur = i;
        while let Some((from, e)) = self.parent[cur] {
            steps.push(PairStep {
                kind: self.edges[e].1.clone(),
                next: self.nodes[cur].clone(),
            });
            cur = from;
        }
        steps.reverse();
        Trace {
            initial: self.nodes[0].clone(),
            steps,
        }
    }

    /// Nodes reachable from the root through `comm` and `τ` steps only.
    pub fn reachable_without_rollback(&self) -> HashSet<usize> {
        let mut seen = HashSet::from([0]);
        let mut queue = VecDeque::from([0]);
        while let Some(i) = queue.pop_front() {
            for (_, kind, to) in self.successors(i) {
                if !kind.is_rollback() && seen.insert(*to) {
                    queue.push_back(*to);
                }
            }
        }
        seen
    }
}

fn entry_has_rec(e: &Entry) -> bool {
    e.as_contract().is_some_and(Contract::contains_rec)
}

fn side_has_rec(cc: &ConfiguredContract) -> bool {
    entry_has_rec(&cc.current) || cc.history.entries().iter().any(entry_has_rec)
}

pub fn explore(client: &Contract, server: &Contract) -> Result<ReductionGraph, OracleError> {
    explore_from(PairConfig::start(client.clone(), server.clone()))
}

/// Explores from an arbitrary configuration, histories included.
pub fn explore_from(root: PairConfig) -> Result<ReductionGraph, OracleError> {
    if side_has_rec(&root.client) || side_has_rec(&root.server) {
        return Err(OracleError::RecursionUnsupported);
    }
    let mut g = ReductionGraph {
        nodes: vec![root.clone()],
        edges: Vec::new(),
        index: HashMap::from([(root, 0)]),
        parent: vec![None],
    };
    let mut queue = VecDeque::from([0]);
    while let Some(i) = queue.pop_front() {
        for step in pair_steps(&g.nodes[i]) {
            let to = match g.index.get(&step.next) {
                Some(&j) => j,
                None => {
                    let j = g.nodes.len();
                    g.index.insert(step.next.clone(), j);
                    g.nodes.push(step.next);
                    g.parent.push(Some((i, g.edges.len())));
                    queue.push_back(j);
                    j
                }
            };
            g.edges.push((i, step.kind, to));
        }
    }
    Ok(g)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OracleVerdict {
    Compliant,
    /// A shortest trace to a stuck configuration whose client is not `1`.
    NotCompliant(Trace),
}

impl OracleVerdict {
    pub fn is_compliant(&self) -> bool {
        matches!(self, OracleVerdict::Compliant)
    }
}

pub fn oracle_check(client: &Contract, server: &Contract) -> Result<OracleVerdict, OracleError> {
    let g = explore(client, server)?;
    Ok(verdict_of(&g))
}

pub fn verdict_of(g: &ReductionGraph) -> OracleVerdict {
    // nodes are in BFS order, so the first bad stuck node is a closest one
    match g.stuck_nodes().find(|&i| !g.nodes[i].client.is_success()) {
        Some(i) => OracleVerdict::NotCompliant(g.path_to(i)),
        None => OracleVerdict::Compliant,
    }
}

/// Every contract that can show up as a current contract or stack entry
/// of a participant starting from `c` (recursion-free).
pub fn entry_universe(c: &Contract) -> HashSet<Contract> {
    let mut seen = HashSet::new();
    let mut todo = vec![c.clone()];
    while let Some(t) = todo.pop() {
        if !seen.insert(t.clone()) {
            continue;
        }
        let Some((kind, bs)) = t.sum() else { continue };
        for b in bs {
            todo.push(b.cont.clone());
        }
        if bs.len() > 1 {
            if kind == crate::contract::SumKind::UnretractableOutput {
                todo.extend(
                    bs.iter()
                        .map(|b| Contract::output(b.label.as_str(), b.cont.clone())),
                );
            } else {
                for mask in 1..(1u64 << bs.len()) - 1 {
                    let sub: Vec<Branch> = bs
                        .iter()
                        .enumerate()
                        .filter(|(i, _)| mask & (1 << i) != 0)
                        .map(|(_, b)| b.clone())
                        .collect();
                    todo.push(make_sum(kind, sub));
                }
            }
        }
    }
    seen
}

/// An upper bound on the number of reachable configurations of the pair,
/// counting every stack up to the deeper prefix depth over each side's
/// entry universe plus `∘`.
pub fn state_bound(client: &Contract, server: &Contract) -> u128 {
    let depth = client.prefix_depth().max(server.prefix_depth()) as u32;
    let side = |c: &Contract| -> u128 {
        let e = entry_universe(c).len() as u128 + 1;
        let stacks: u128 = (0..=depth)
            .map(|l| e.saturating_pow(l))
            .fold(0u128, |a, b| a.saturating_add(b));
        e.saturating_mul(stacks)
    };
    side(client).saturating_mul(side(server))
}

#[derive(Debug, Clone, Serialize)]
pub struct Disagreement {
    pub index: usize,
    pub client: Contract,
    pub server: Contract,
    pub decider_compliant: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub derivation: Option<Derivation>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<TraceDoc>,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct CrosscheckReport {
    pub total: usize,
    pub agree_compliant: usize,
    pub agree_noncompliant: usize,
    pub disagreements: Vec<Disagreement>,
}

impl CrosscheckReport {
    pub fn is_clean(&self) -> bool {
        self.disagreements.is_empty()
    }
}

/// Outcome of checking one pair both ways.
#[derive(Debug, Clone)]
pub struct PairOutcome {
    pub client: Contract,
    pub server: Contract,
    pub verdict: Verdict,
    pub oracle: OracleVerdict,
}

impl PairOutcome {
    pub fn agrees(&self) -> bool {
        self.verdict.is_compliant() == self.oracle.is_compliant()
    }
}

pub fn compare(client: &Contract, server: &Contract) -> Result<PairOutcome, OracleError> {
    let oracle = oracle_check(client, server)?;
    Ok(PairOutcome {
        client: client.clone(),
        server: server.clone(),
        verdict: check(client, server),
        oracle,
    })
}

/// The `count` pairs [`crosscheck`] draws for `seed`, in order.
pub fn random_pairs(params: &GenParams, seed: u64, count: usize) -> Vec<(Contract, Contract)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let c = random_contract(&mut rng, params);
            let s = random_contract(&mut rng, params);
            (c, s)
        })
        .collect()
}

/// Runs decider and oracle on `count` random recursion-free pairs.
pub fn crosscheck(params: &GenParams, seed: u64, count: usize) -> CrosscheckReport {
    crosscheck_pairs(&random_pairs(params, seed, count))
        .expect("generated pairs are recursion-free")
}

/// Runs decider and oracle on the given pairs, fanning out over threads;
/// the report lists results in input order.
pub fn crosscheck_pairs(pairs: &[(Contract, Contract)]) -> Result<CrosscheckReport, OracleError> {
    crosscheck_outcomes(pairs).map(|outs| report(&outs))
}

pub fn crosscheck_outcomes(
    pairs: &[(Contract, Contract)],
) -> Result<Vec<PairOutcome>, OracleError> {
    let workers = std::thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(8);
    let chunk = pairs.len().div_ceil(workers).max(1);
    let results: Vec<Result<Vec<PairOutcome>, OracleError>> = std::thread::scope(|s| {
        let handles: Vec<_> = pairs
            .chunks(chunk)
            .map(|part| s.spawn(move || part.iter().map(|(c, sv)| compare(c, sv)).collect()))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("worker panicked"))
            .collect()
    });
    let mut out = Vec::with_capacity(pairs.len());
    for r in results {
        out.extend(r?);
    }
    Ok(out)
}

pub fn report(outcomes: &[PairOutcome]) -> CrosscheckReport {
    let mut rep = CrosscheckReport {
        total: outcomes.len(),
        ..Default::default()
    };
    for (index, o) in outcomes.iter().enumerate() {
        match (o.verdict.is_compliant(), &o.oracle) {
            (true, OracleVerdict::Compliant) => rep.agree_compliant += 1,
            (false, OracleVerdict::NotCompliant(_)) => rep.agree_noncompliant += 1,
            (decider, oracle) => rep.disagreements.push(Disagreement {
                index,
                client: o.client.clone(),
                server: o.server.clone(),
                decider_compliant: decider,
                derivation: o.verdict.derivation().cloned(),
                witness: match oracle {
                    OracleVerdict::NotCompliant(t) => Some(TraceDoc::new(t, None)),
                    OracleVerdict::Compliant => None,
                },
            }),
        }
    }
    rep
}
