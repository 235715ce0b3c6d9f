//! Machine-readable formats for traces.
//!
//! Contracts are written in the concrete syntax of [`crate::parser`], the
//! placeholder as `∘`. A trace is either a stream of [`TraceRecord`] lines
//! (one JSON object per configuration) or a single [`TraceDoc`].

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::contract::{Action, ConfiguredContract, Entry, Label};
use crate::lts::{entry_text, PairConfig, PairStep, StepKind, Terminal, Trace};
use crate::parser::{parse_residual, ParseError};

pub const HOLE: &str = "∘";

impl Serialize for Entry {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&entry_text(self))
    }
}

impl<'de> Deserialize<'de> for Entry {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        if s == HOLE {
            return Ok(Entry::Hole);
        }
        parse_residual(&s)
            .map(Entry::Contract)
            .map_err(serde::de::Error::custom)
    }
}

/// One line of a line-delimited trace. Index 0 is the initial
/// configuration, with kind `init`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub index: usize,
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub client_history_len: usize,
    pub server_history_len: usize,
    pub client: ConfiguredContract,
    pub server: ConfiguredContract,
}

impl TraceRecord {
    fn new(index: usize, kind: Option<&StepKind>, p: &PairConfig) -> Self {
        TraceRecord {
            index,
            kind: kind.map_or("init", StepKind::tag).to_string(),
            label: kind.and_then(StepKind::label).map(|l| l.to_string()),
            client_history_len: p.client.history.len(),
            server_history_len: p.server.history.len(),
            client: p.client.clone(),
            server: p.server.clone(),
        }
    }
}

pub fn trace_records(t: &Trace) -> Vec<TraceRecord> {
    std::iter::once(TraceRecord::new(0, None, &t.initial))
        .chain(
            t.steps
                .iter()
                .enumerate()
                .map(|(i, s)| TraceRecord::new(i + 1, Some(&s.kind), &s.next)),
        )
        .collect()
}

/// Line-delimited JSON, one record per configuration.
pub fn trace_to_jsonl(t: &Trace) -> String {
    let mut out = String::new();
    for r in trace_records(t) {
        out.push_str(&serde_json::to_string(&r).expect("records serialize"));
        out.push('\n');
    }
    out
}

#[derive(Debug, Error)]
pub enum TraceFormatError {
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        source: serde_json::Error,
    },
    #[error("empty trace")]
    Empty,
    #[error("record {index}: unknown step kind `{kind}`")]
    Kind { index: usize, kind: String },
    #[error("record {index}: missing label")]
    MissingLabel { index: usize },
    #[error("record {index}: {source}")]
    Action { index: usize, source: ParseError },
}

/// Reads back [`trace_to_jsonl`] output. The comm action polarity is
/// recovered from the client's previous current contract.
pub fn trace_from_jsonl(text: &str) -> Result<Trace, TraceFormatError> {
    let mut records = Vec::new();
    for (i, line) in text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
    {
        let r: TraceRecord =
            serde_json::from_str(line).map_err(|source| TraceFormatError::Json {
                line: i + 1,
                source,
            })?;
        records.push(r);
    }
    let mut it = records.into_iter();
    let first = it.next().ok_or(TraceFormatError::Empty)?;
    let mut trace = Trace::new(PairConfig::new(first.client, first.server));
    for r in it {
        let label = || {
            r.label
                .clone()
                .map(Label::new)
                .ok_or(TraceFormatError::MissingLabel { index: r.index })
        };
        let kind = match r.kind.as_str() {
            "comm" => {
                let l = label()?;
                let pol = comm_polarity(trace.last(), &l);
                StepKind::Comm(Action {
                    polarity: pol,
                    label: l,
                })
            }
            "tau-client" => StepKind::TauClient(label()?),
            "tau-server" => StepKind::TauServer(label()?),
            "rbk" => StepKind::Rbk,
            other => {
                return Err(TraceFormatError::Kind {
                    index: r.index,
                    kind: other.into(),
                })
            }
        };
        trace.steps.push(PairStep {
            kind,
            next: PairConfig::new(r.client, r.server),
        });
    }
    Ok(trace)
}

fn comm_polarity(p: &PairConfig, label: &Label) -> crate::contract::Polarity {
    use crate::contract::{head_normal, Polarity};
    match &p.client.current {
        Entry::Contract(c) => match head_normal(c).sum() {
            Some((kind, bs)) if bs.iter().any(|b| &b.label == label) => kind.polarity(),
            _ => Polarity::Name,
        },
        Entry::Hole => Polarity::Name,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepDoc {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    /// The client's action for `comm` steps, e.g. `!bag`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<String>,
    pub next: PairConfig,
}

/// A whole trace as one document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceDoc {
    pub initial: PairConfig,
    pub steps: Vec<StepDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terminal: Option<Terminal>,
}

impl TraceDoc {
    pub fn new(t: &Trace, terminal: Option<Terminal>) -> Self {
        TraceDoc {
            initial: t.initial.clone(),
            steps: t
                .steps
                .iter()
                .map(|s| StepDoc {
                    kind: s.kind.tag().to_string(),
                    label: s.kind.label().map(|l| l.to_string()),
                    action: match &s.kind {
                        StepKind::Comm(a) => Some(a.to_string()),
                        _ => None,
                    },
                    next: s.next.clone(),
                })
                .collect(),
            terminal,
        }
    }

    pub fn to_trace(&self) -> Result<Trace, TraceFormatError> {
        let mut t = Trace::new(self.initial.clone());
        for (i, s) in self.steps.iter().enumerate() {
            let index = i + 1;
            let label = || {
                s.label
                    .clone()
                    .map(Label::new)
                    .ok_or(TraceFormatError::MissingLabel { index })
            };
            let kind = match s.kind.as_str() {
                "comm" => {
                    let text = s
                        .action
                        .clone()
                        .or_else(|| s.label.clone())
                        .ok_or(TraceFormatError::MissingLabel { index })?;
                    StepKind::Comm(
                        parse_action(&text)
                            .map_err(|source| TraceFormatError::Action { index, source })?,
                    )
                }
                "tau-client" => StepKind::TauClient(label()?),
                "tau-server" => StepKind::TauServer(label()?),
                "rbk" => StepKind::Rbk,
                other => {
                    return Err(TraceFormatError::Kind {
                        index,
                        kind: other.into(),
                    })
                }
            };
            t.steps.push(PairStep {
                kind,
                next: s.next.clone(),
            });
        }
        Ok(t)
    }
}

/// `a` or `!a`.
pub fn parse_action(text: &str) -> Result<Action, ParseError> {
    let (out, rest) = match text.strip_prefix('!') {
        Some(r) => (true, r),
        None => (false, text),
    };
    if !Label::is_identifier(rest) || rest == "rec" {
        return Err(ParseError::Syntax {
            span: crate::parser::Span::new(0, text.len()),
            message: format!("`{text}` is not an action"),
        });
    }
    Ok(if out {
        Action::coname(rest)
    } else {
        Action::name(rest)
    })
}
