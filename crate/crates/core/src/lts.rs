//! Transition systems: single contracts with histories, and client/server
//! pairs with synchronous rollback.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contract::{
    head_normal, make_sum, Action, Branch, ConfiguredContract, Contract, Entry, History, Label,
    SumKind,
};
use crate::parser::pretty;

/// Label of a single-participant step.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum StepLabel {
    Act(Action),
    Tau,
    Rb,
}

/// All steps of a configured contract, in label order with `Rb` last.
pub fn contract_steps(cc: &ConfiguredContract) -> Vec<(StepLabel, ConfiguredContract)> {
    let mut steps = Vec::new();
    if let Entry::Contract(c) = &cc.current {
        let c = head_normal(c);
        if let Some((kind, bs)) = c.sum() {
            match kind {
                SumKind::UnretractableOutput if bs.len() > 1 => {
                    for b in bs {
                        let next = Contract::output(b.label.as_str(), b.cont.clone());
                        steps.push((
                            StepLabel::Tau,
                            ConfiguredContract::new(cc.history.clone(), next.into()),
                        ));
                    }
                }
                _ => {
                    let pol = kind.polarity();
                    for (i, b) in bs.iter().enumerate() {
                        let saved = if bs.len() == 1 {
                            Entry::Hole
                        } else {
                            Entry::Contract(residual(kind, bs, i))
                        };
                        let action = Action {
                            polarity: pol,
                            label: b.label.clone(),
                        };
                        steps.push((
                            StepLabel::Act(action),
                            ConfiguredContract::new(
                                cc.history.pushed(saved),
                                b.cont.clone().into(),
                            ),
                        ));
                    }
                }
            }
        }
    }
    if let Some(top) = cc.history.top() {
        let mut h = cc.history.clone();
        h.pop();
        steps.push((StepLabel::Rb, ConfiguredContract::new(h, top.clone())));
    }
    steps
}

/// The sum of all branches but the `i`-th.
fn residual(kind: SumKind, bs: &[Branch], i: usize) -> Contract {
    let rest = bs
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != i)
        .map(|(_, b)| b.clone())
        .collect();
    make_sum(kind, rest)
}

/// A client/server configuration.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PairConfig {
    pub client: ConfiguredContract,
    pub server: ConfiguredContract,
}

impl PairConfig {
    /// `⟨[]⟩ client ∥ ⟨[]⟩ server`
    pub fn start(client: Contract, server: Contract) -> Self {
        PairConfig {
            client: ConfiguredContract::fresh(client),
            server: ConfiguredContract::fresh(server),
        }
    }

    pub fn new(client: ConfiguredContract, server: ConfiguredContract) -> Self {
        PairConfig { client, server }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum StepKind {
    /// Synchronization; carries the client's action.
    Comm(Action),
    /// Client resolves an unretractable choice towards the given label.
    TauClient(Label),
    TauServer(Label),
    Rbk,
}

impl StepKind {
    pub fn tag(&self) -> &'static str {
        match self {
            StepKind::Comm(_) => "comm",
            StepKind::TauClient(_) => "tau-client",
            StepKind::TauServer(_) => "tau-server",
            StepKind::Rbk => "rbk",
        }
    }

    pub fn label(&self) -> Option<&Label> {
        match self {
            StepKind::Comm(a) => Some(&a.label),
            StepKind::TauClient(l) | StepKind::TauServer(l) => Some(l),
            StepKind::Rbk => None,
        }
    }

    pub fn is_rollback(&self) -> bool {
        matches!(self, StepKind::Rbk)
    }
}

impl fmt::Display for StepKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StepKind::Comm(a) => write!(f, "comm {a}"),
            StepKind::TauClient(l) => write!(f, "tau client !{l}"),
            StepKind::TauServer(l) => write!(f, "tau server !{l}"),
            StepKind::Rbk => write!(f, "rbk"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PairStep {
    pub kind: StepKind,
    pub next: PairConfig,
}

fn tau_label(cc: &ConfiguredContract) -> Label {
    match &cc.current {
        Entry::Contract(Contract::UnretractableOutput(bs)) => bs[0].label.clone(),
        _ => unreachable!("tau target is a unary output"),
    }
}

/// Enabled pair steps: `comm` by label, client `τ` by label, server `τ` by
/// label. Rollback is offered alone, only when nothing else is enabled, the
/// client is not `1` and both stacks can pop.
pub fn pair_steps(p: &PairConfig) -> Vec<PairStep> {
    let client = contract_steps(&p.client);
    let server = contract_steps(&p.server);
    let mut out = Vec::new();
    for (cl, cnext) in &client {
        if let StepLabel::Act(a) = cl {
            let want = a.dual();
            for (sl, snext) in &server {
                if matches!(sl, StepLabel::Act(b) if *b == want) {
                    out.push(PairStep {
                        kind: StepKind::Comm(a.clone()),
                        next: PairConfig::new(cnext.clone(), snext.clone()),
                    });
                }
            }
        }
    }
    for (cl, cnext) in &client {
        if *cl == StepLabel::Tau {
            out.push(PairStep {
                kind: StepKind::TauClient(tau_label(cnext)),
                next: PairConfig::new(cnext.clone(), p.server.clone()),
            });
        }
    }
    for (sl, snext) in &server {
        if *sl == StepLabel::Tau {
            out.push(PairStep {
                kind: StepKind::TauServer(tau_label(snext)),
                next: PairConfig::new(p.client.clone(), snext.clone()),
            });
        }
    }
    if out.is_empty() && !p.client.is_success() {
        let crb = client.iter().find(|(l, _)| *l == StepLabel::Rb);
        let srb = server.iter().find(|(l, _)| *l == StepLabel::Rb);
        if let (Some((_, c)), Some((_, s))) = (crb, srb) {
            out.push(PairStep {
                kind: StepKind::Rbk,
                next: PairConfig::new(c.clone(), s.clone()),
            });
        }
    }
    out
}

pub fn is_stuck(p: &PairConfig) -> bool {
    pair_steps(p).is_empty()
}

/// How [`run`] picks among enabled steps.
#[derive(Debug, Clone)]
pub enum Policy {
    /// Uniformly at random from a seeded generator.
    Random(u64),
    /// Indices into the enabled-step list, one per step. The run stops
    /// (as exhausted) when the script runs out.
    Scripted(Vec<usize>),
    /// Always the first enabled step.
    First,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum Terminal {
    Stuck,
    Exhausted,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    pub initial: PairConfig,
    pub steps: Vec<PairStep>,
}

impl Trace {
    pub fn new(initial: PairConfig) -> Self {
        Trace {
            initial,
            steps: Vec::new(),
        }
    }

    pub fn last(&self) -> &PairConfig {
        self.steps.last().map_or(&self.initial, |s| &s.next)
    }

    pub fn configs(&self) -> impl Iterator<Item = &PairConfig> {
        std::iter::once(&self.initial).chain(self.steps.iter().map(|s| &s.next))
    }

    /// Checks every step against [`pair_steps`] of its predecessor.
    pub fn replay(&self) -> Result<(), ReplayError> {
        let mut cur = &self.initial;
        for (i, s) in self.steps.iter().enumerate() {
            if !pair_steps(cur).contains(s) {
                return Err(ReplayError { index: i + 1 });
            }
            cur = &s.next;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("step {index} does not follow from the previous configuration")]
pub struct ReplayError {
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RunError {
    #[error("script index {index} at step {step} is out of range ({enabled} steps enabled)")]
    ScriptMismatch {
        step: usize,
        index: usize,
        enabled: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunOutcome {
    pub trace: Trace,
    pub terminal: Terminal,
}

impl RunOutcome {
    /// Stuck with a client that is not `1`.
    pub fn is_failure(&self) -> bool {
        self.terminal == Terminal::Stuck && !self.trace.last().client.is_success()
    }
}

pub fn run(p: PairConfig, policy: &Policy, max_steps: usize) -> Result<RunOutcome, RunError> {
    let mut rng = match policy {
        Policy::Random(seed) => Some(ChaCha8Rng::seed_from_u64(*seed)),
        _ => None,
    };
    let mut trace = Trace::new(p);
    loop {
        let enabled = pair_steps(trace.last());
        if enabled.is_empty() {
            return Ok(RunOutcome {
                trace,
                terminal: Terminal::Stuck,
            });
        }
        let n = trace.steps.len();
        if n >= max_steps {
            break;
        }
        let idx = match policy {
            Policy::Random(_) => rng.as_mut().expect("seeded").gen_range(0..enabled.len()),
            Policy::First => 0,
            Policy::Scripted(script) => match script.get(n) {
                None => break,
                Some(&i) if i >= enabled.len() => {
                    return Err(RunError::ScriptMismatch {
                        step: n + 1,
                        index: i,
                        enabled: enabled.len(),
                    })
                }
                Some(&i) => i,
            },
        };
        let step = enabled.into_iter().nth(idx).expect("index checked");
        trace.steps.push(step);
    }
    Ok(RunOutcome {
        trace,
        terminal: Terminal::Exhausted,
    })
}

/// Text for a stack entry; `∘` for the placeholder.
pub fn entry_text(e: &Entry) -> String {
    match e {
        Entry::Contract(c) => pretty(c),
        Entry::Hole => "∘".to_string(),
    }
}

fn history_text(h: &History) -> String {
    if h.is_empty() {
        "[]".to_string()
    } else {
        h.entries()
            .iter()
            .map(|e| {
                let t = entry_text(e);
                if t.contains(' ') {
                    format!("({t})")
                } else {
                    t
                }
            })
            .collect::<Vec<_>>()
            .join(" : ")
    }
}

impl fmt::Display for ConfiguredContract {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "<{}> {}",
            history_text(&self.history),
            entry_text(&self.current)
        )
    }
}

impl fmt::Display for PairConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}  ||  {}", self.client, self.server)
    }
}

impl fmt::Display for Trace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:>20}  {}", "", self.initial)?;
        for s in &self.steps {
            writeln!(f, "{:>20}  {}", format!("-{}->", s.kind), s.next)?;
        }
        Ok(())
    }
}
