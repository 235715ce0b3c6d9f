//! Random contract generation for cross-checks and property tests.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::contract::{make_sum, validate, Branch, Contract, Label, SumKind, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenParams {
    /// Longest chain of action prefixes.
    pub max_depth: usize,
    pub max_branching: usize,
    /// Number of distinct labels drawn from (`a`, `b`, …).
    pub alphabet: usize,
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams {
            max_depth: 3,
            max_branching: 2,
            alphabet: 3,
        }
    }
}

pub fn label_name(i: usize) -> String {
    if i < 26 {
        ((b'a' + i as u8) as char).to_string()
    } else {
        format!("l{i}")
    }
}

fn labels<R: Rng>(rng: &mut R, params: &GenParams, at_least_two: bool) -> Vec<Label> {
    let alphabet = params.alphabet.max(1);
    let hi = params.max_branching.max(1).min(alphabet);
    let lo = if at_least_two && hi >= 2 { 2 } else { 1 };
    let k = rng.gen_range(lo..=hi);
    let mut idx: Vec<usize> = sample(rng, alphabet, k).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| Label::new(label_name(i))).collect()
}

/// A recursion-free contract. Each node picks uniformly among `1`, a
/// single input, an input sum, a retractable output sum and an
/// unretractable output choice; prefix depth never exceeds `max_depth`.
pub fn random_contract<R: Rng>(rng: &mut R, params: &GenParams) -> Contract {
    gen_finite(rng, params, params.max_depth)
}

fn gen_finite<R: Rng>(rng: &mut R, params: &GenParams, depth: usize) -> Contract {
    if depth == 0 {
        return Contract::Success;
    }
    let (kind, at_least_two, single) = match rng.gen_range(0..5) {
        0 => return Contract::Success,
        1 => (SumKind::Input, false, true),
        2 => (SumKind::Input, true, false),
        3 => (SumKind::RetractableOutput, false, false),
        _ => (SumKind::UnretractableOutput, false, false),
    };
    let ls = if single {
        labels(
            rng,
            &GenParams {
                max_branching: 1,
                ..*params
            },
            false,
        )
    } else {
        labels(rng, params, at_least_two)
    };
    let branches = ls
        .into_iter()
        .map(|label| Branch {
            label,
            cont: gen_finite(rng, params, depth - 1),
        })
        .collect();
    make_sum(kind, branches)
}

/// A contract that may use recursion. Variables only occur under a
/// prefix, so the result is always guarded and closed.
pub fn random_recursive<R: Rng>(rng: &mut R, params: &GenParams) -> Contract {
    let mut bound = Vec::new();
    let mut fresh = 0;
    let t = gen_rec(rng, params, params.max_depth, &mut bound, &mut fresh, true);
    validate(&t).expect("generator produces valid contracts")
}

fn gen_rec<R: Rng>(
    rng: &mut R,
    params: &GenParams,
    depth: usize,
    bound: &mut Vec<Var>,
    fresh: &mut usize,
    may_bind: bool,
) -> Contract {
    if !bound.is_empty() && !may_bind && (depth == 0 || rng.gen_bool(0.3)) {
        let i = rng.gen_range(0..bound.len());
        return Contract::Var(bound[i].clone());
    }
    if depth == 0 {
        return Contract::Success;
    }
    if may_bind && rng.gen_bool(0.5) {
        let v = Var::new(format!("x{fresh}"));
        *fresh += 1;
        bound.push(v.clone());
        let body = gen_sum(rng, params, depth, bound, fresh);
        bound.pop();
        return Contract::Rec(v, Box::new(body));
    }
    if rng.gen_range(0..6) == 0 {
        return Contract::Success;
    }
    gen_sum(rng, params, depth, bound, fresh)
}

fn gen_sum<R: Rng>(
    rng: &mut R,
    params: &GenParams,
    depth: usize,
    bound: &mut Vec<Var>,
    fresh: &mut usize,
) -> Contract {
    let kind = match rng.gen_range(0..3) {
        0 => SumKind::Input,
        1 => SumKind::RetractableOutput,
        _ => SumKind::UnretractableOutput,
    };
    let branches = labels(rng, params, false)
        .into_iter()
        .map(|label| {
            let may_bind = rng.gen_bool(0.25);
            Branch {
                label,
                cont: gen_rec(rng, params, depth - 1, bound, fresh, may_bind),
            }
        })
        .collect();
    make_sum(kind, branches)
}
