//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each
//! and exits non-zero if any failed.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rct_core::compliance::{call_bound, pair_shape, prove_counted, FailReason, PairShape, Rule};
use rct_core::contract::{ConfiguredContract, Entry, History};
use rct_core::gen::{random_contract, random_recursive, GenParams};
use rct_core::oracle::{crosscheck_outcomes, oracle_check, random_pairs, report};
use rct_core::parser::{parse_file, ContractFile};
use rct_core::{
    check, head_normal, pair_steps, parse, pretty, run, subterm_closure, validate_derivation,
    Contract, Hypotheses, PairConfig, Policy, StepKind,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn c(s: &str) -> Contract {
    parse(s).unwrap_or_else(|e| panic!("{s}: {e}"))
}

fn entry(s: &str) -> Entry {
    if s == "o" {
        Entry::Hole
    } else {
        Entry::Contract(c(s))
    }
}

fn side(history: &[&str], current: &str) -> ConfiguredContract {
    ConfiguredContract::new(
        History::from_entries(history.iter().map(|s| entry(s)).collect()),
        entry(current),
    )
}

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(start: Instant, limit: Duration) -> Result<(), String> {
    let took = start.elapsed();
    ensure(took < limit, format!("took {took:?}, limit {limit:?}"))
}

const BUYER_P: &str = "!bag.price.(!card (+) !cash) + !belt.price.(!card (+) !cash)";
const BUYER: &str = "!bag.price.(!card (+) !cash) (+) !belt.price.(!card (+) !cash)";
const SELLER: &str = "belt.!price.cash + bag.!price.(card + cash)";
const SIGMA: &str = "rec x.(b.x + a.!e.x)";

fn example1_golden_trace() -> Outcome {
    let t0 = Instant::now();
    let out = run(
        PairConfig::start(c(BUYER_P), c(SELLER)),
        &Policy::Scripted(vec![1, 0, 0, 0, 0, 0, 0, 0, 0]),
        100,
    )
    .map_err(|e| e.to_string())?;
    let b = "!bag.price.(!card (+) !cash)";
    let s = "bag.!price.(card + cash)";
    let expected = [
        PairConfig::new(side(&[], BUYER_P), side(&[], SELLER)),
        PairConfig::new(
            side(&[b], "price.(!card (+) !cash)"),
            side(&[s], "!price.cash"),
        ),
        PairConfig::new(side(&[b, "o"], "!card (+) !cash"), side(&[s, "o"], "cash")),
        PairConfig::new(side(&[b, "o"], "!card"), side(&[s, "o"], "cash")),
        PairConfig::new(side(&[b], "o"), side(&[s], "o")),
        PairConfig::new(side(&[], b), side(&[], s)),
        PairConfig::new(
            side(&["o"], "price.(!card (+) !cash)"),
            side(&["o"], "!price.(card + cash)"),
        ),
        PairConfig::new(
            side(&["o", "o"], "!card (+) !cash"),
            side(&["o", "o"], "card + cash"),
        ),
        PairConfig::new(side(&["o", "o"], "!card"), side(&["o", "o"], "card + cash")),
        PairConfig::new(side(&["o", "o", "o"], "1"), side(&["o", "o", "cash"], "1")),
    ];
    let kinds = [
        "comm",
        "comm",
        "tau-client",
        "rbk",
        "rbk",
        "comm",
        "comm",
        "tau-client",
        "comm",
    ];
    let got: Vec<_> = out.trace.configs().cloned().collect();
    ensure(
        got.len() == expected.len(),
        format!("{} configurations, expected {}", got.len(), expected.len()),
    )?;
    for (i, (g, e)) in got.iter().zip(&expected).enumerate() {
        ensure(g == e, format!("row {i}: got {g}, expected {e}"))?;
    }
    for (i, (s, k)) in out.trace.steps.iter().zip(kinds).enumerate() {
        ensure(
            s.kind.tag() == k,
            format!("step {}: {} instead of {k}", i + 1, s.kind),
        )?;
    }
    ensure(out.terminal == rct_core::lts::Terminal::Stuck, "not stuck")?;
    ensure(out.trace.last().client.is_success(), "client is not 1")?;
    within(t0, Duration::from_secs(1))?;
    Ok("10 configurations match, stuck with client 1".into())
}

fn example2_deadlock() -> Outcome {
    let t0 = Instant::now();
    let rho = c("rec x.(!b.x (+) !a.c.x)");
    let sigma = c(SIGMA);
    let out = run(
        PairConfig::start(rho.clone(), sigma.clone()),
        &Policy::Scripted(vec![0, 0, 0]),
        100,
    )
    .map_err(|e| e.to_string())?;
    ensure(
        out.trace.steps.len() == 3,
        format!("{} steps", out.trace.steps.len()),
    )?;
    let kinds: Vec<_> = out.trace.steps.iter().map(|s| s.kind.tag()).collect();
    ensure(
        kinds == ["tau-client", "comm", "rbk"],
        format!("step kinds {kinds:?}"),
    )?;
    let want = PairConfig::new(side(&[], "o"), side(&[], &format!("b.{SIGMA}")));
    ensure(
        *out.trace.last() == want,
        format!("final {}", out.trace.last()),
    )?;
    ensure(
        out.is_failure(),
        "final configuration should be stuck with client ≠ 1",
    )?;
    ensure(
        !check(&rho, &sigma).is_compliant(),
        "decider says compliant",
    )?;
    within(t0, Duration::from_secs(1))?;
    Ok("stuck at <[]> ∘ || <[]> b.σ after 3 steps; NotCompliant".into())
}

fn example3_divergence() -> Outcome {
    let t0 = Instant::now();
    let rho = c("rec x.(!b.x + !a.c.x)");
    let sigma = c(SIGMA);
    let out = run(
        PairConfig::start(rho.clone(), sigma.clone()),
        &Policy::First,
        1000,
    )
    .map_err(|e| e.to_string())?;
    ensure(
        out.trace.steps.len() == 1000,
        format!("stopped after {} steps", out.trace.steps.len()),
    )?;
    ensure(
        out.terminal == rct_core::lts::Terminal::Exhausted,
        "got stuck",
    )?;
    let longest = out
        .trace
        .configs()
        .map(|p| p.client.history.len())
        .max()
        .unwrap_or(0);
    ensure(
        longest >= 100,
        format!("history length only reached {longest}"),
    )?;
    let v = check(&rho, &sigma);
    let d = v.derivation().ok_or("decider says not compliant")?;
    ensure(
        d.rule == Rule::PlusPlus && d.premises.len() == 1 && d.premises[0].rule == Rule::Hyp,
        "derivation is not (+,+) over Hyp",
    )?;
    within(t0, Duration::from_secs(1))?;
    Ok(format!(
        "1000 steps, history length {longest}; Compliant via (+,+)[{}] / Hyp",
        d.chosen_label.as_ref().unwrap()
    ))
}

fn example4_derivation() -> Outcome {
    let t0 = Instant::now();
    let v = check(&c(BUYER_P), &c(SELLER));
    let d = v.derivation().ok_or("not compliant")?;
    let counts = d.rule_counts();
    let want = vec![(Rule::Ax, 2), (Rule::PlusPlus, 2), (Rule::OplusPlus, 1)];
    ensure(counts == want, format!("rule multiset {counts:?}"))?;
    let labels: Vec<_> = d
        .chosen_labels()
        .into_iter()
        .map(|l| l.as_str().to_string())
        .collect();
    ensure(
        labels == ["bag", "price"],
        format!("chosen labels {labels:?}"),
    )?;
    ensure(validate_derivation(d), "validate_derivation rejected it")?;
    within(t0, Duration::from_secs(1))?;
    Ok("{(+,+)×2, (⊕,+)×1, Ax×2}, labels bag then price, valid".into())
}

fn buyer_noncompliance() -> Outcome {
    let t0 = Instant::now();
    let v = check(&c(BUYER), &c(SELLER));
    let f = v.failure().ok_or("decider says compliant")?;
    let causes = f.causes();
    ensure(causes.len() == 1, format!("{} causes", causes.len()))?;
    let (path, leaf) = &causes[0];
    ensure(
        path.first().map(|l| l.as_str()) == Some("belt"),
        format!("failure path {path:?}"),
    )?;
    ensure(
        matches!(&leaf.reason, FailReason::NotIncluded { rule: Rule::OplusPlus, missing } if missing.iter().any(|l| l.as_str() == "card")),
        format!("leaf reason {:?}", leaf.reason),
    )?;
    ensure(
        matches!(
            &f.reason,
            FailReason::Premise {
                rule: Rule::OplusPlus,
                ..
            }
        ),
        "top-level rule is not (⊕,+)",
    )?;
    within(t0, Duration::from_secs(1))?;
    Ok("NotCompliant; localized at belt/price: (⊕,+) lacks a partner for card".into())
}

fn crosscheck_params() -> GenParams {
    GenParams {
        max_depth: 4,
        max_branching: 3,
        alphabet: 4,
    }
}

fn decider_equals_oracle() -> Outcome {
    let t0 = Instant::now();
    let pairs = random_pairs(&crosscheck_params(), 42, 1000);
    let outs = crosscheck_outcomes(&pairs).map_err(|e| e.to_string())?;
    let rep = report(&outs);
    ensure(rep.total == 1000, "wrong total")?;
    ensure(
        rep.is_clean(),
        format!(
            "{} disagreements, first: {:?}",
            rep.disagreements.len(),
            rep.disagreements.first()
        ),
    )?;
    within(t0, Duration::from_secs(60))?;
    Ok(format!(
        "1000 pairs: {} compliant, {} not, 0 disagreements in {:.2?}",
        rep.agree_compliant,
        rep.agree_noncompliant,
        t0.elapsed()
    ))
}

fn invariant_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let finite = GenParams {
        max_depth: 4,
        max_branching: 3,
        alphabet: 3,
    };
    let recursive = GenParams {
        max_depth: 4,
        max_branching: 2,
        alphabet: 3,
    };
    let mut steps = 0usize;
    let mut rbk_seen = 0usize;
    let mut runs = 0usize;
    while steps < 10_000 {
        let (cl, sv) = if rng.gen_bool(0.5) {
            (
                random_contract(&mut rng, &finite),
                random_contract(&mut rng, &finite),
            )
        } else {
            (
                random_recursive(&mut rng, &recursive),
                random_recursive(&mut rng, &recursive),
            )
        };
        let out = run(PairConfig::start(cl, sv), &Policy::Random(rng.gen()), 200)
            .map_err(|e| e.to_string())?;
        runs += 1;
        let mut prev = &out.trace.initial;
        for s in &out.trace.steps {
            steps += 1;
            let enabled = pair_steps(prev);
            let has_rbk = enabled.iter().any(|e| e.kind == StepKind::Rbk);
            ensure(
                !has_rbk || enabled.len() == 1,
                format!("rbk co-enabled at {prev}"),
            )?;
            ensure(
                !(has_rbk && prev.client.is_success()),
                format!("rbk enabled with client 1 at {prev}"),
            )?;
            let (dc, ds) = (
                s.next.client.history.len() as isize - prev.client.history.len() as isize,
                s.next.server.history.len() as isize - prev.server.history.len() as isize,
            );
            let want = match s.kind {
                StepKind::Comm(_) => (1, 1),
                StepKind::TauClient(_) | StepKind::TauServer(_) => (0, 0),
                StepKind::Rbk => {
                    rbk_seen += 1;
                    (-1, -1)
                }
            };
            ensure(
                (dc, ds) == want,
                format!("{} changed stacks by {dc}/{ds}", s.kind),
            )?;
            ensure(
                s.next.client.history.len() == s.next.server.history.len(),
                format!("unequal stacks at {}", s.next),
            )?;
            prev = &s.next;
        }
    }
    Ok(format!(
        "{steps} steps over {runs} runs ({rbk_seen} rollbacks), zero violations"
    ))
}

fn termination_bound() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let params = GenParams {
        max_depth: 5,
        max_branching: 3,
        alphabet: 3,
    };
    let mut done = 0;
    let mut worst = Duration::ZERO;
    let mut max_ratio = 0.0f64;
    let mut recursive = 0;
    while done < 100 {
        let cl = random_recursive(&mut rng, &params);
        let sv = random_recursive(&mut rng, &params);
        let bound = call_bound(&cl, &sv);
        if bound > 2500 {
            continue;
        }
        recursive += (cl.contains_rec() || sv.contains_rec()) as usize;
        let t0 = Instant::now();
        let (_, stats) = prove_counted(&Hypotheses::new(), &cl, &sv);
        let took = t0.elapsed();
        worst = worst.max(took);
        ensure(
            stats.distinct_pairs <= bound,
            format!(
                "{} distinct calls > bound {bound} for {} ⊣ {}",
                stats.distinct_pairs,
                pretty(&cl),
                pretty(&sv)
            ),
        )?;
        ensure(
            took < Duration::from_secs(1),
            format!("check took {took:?} on {} ⊣ {}", pretty(&cl), pretty(&sv)),
        )?;
        max_ratio = max_ratio.max(stats.distinct_pairs as f64 / bound as f64);
        done += 1;
    }
    ensure(
        recursive >= 50,
        format!("only {recursive} pairs used recursion"),
    )?;
    Ok(format!(
        "100 pairs ({recursive} recursive), max distinct/bound {max_ratio:.2}, slowest {worst:.2?}"
    ))
}

fn shape_characterization() -> Outcome {
    let pairs = random_pairs(&crosscheck_params(), 42, 1000);
    let outs = crosscheck_outcomes(&pairs).map_err(|e| e.to_string())?;
    let oracle_ok = |a: &Contract, b: &Contract| {
        oracle_check(a, b)
            .map(|v| v.is_compliant())
            .unwrap_or(false)
    };
    let mut checked = 0;
    for o in outs.iter().filter(|o| o.verdict.is_compliant()) {
        let (cl, sv) = (head_normal(&o.client), head_normal(&o.server));
        if cl.is_success() {
            continue;
        }
        checked += 1;
        let shape = pair_shape(&cl, &sv);
        let ok = match shape {
            Some(PairShape::SharedRetractable) => {
                let (_, cbs) = cl.as_retractable_sum().unwrap();
                let (_, sbs) = sv.as_retractable_sum().unwrap();
                cbs.iter().any(|cb| {
                    sbs.iter()
                        .any(|sb| sb.label == cb.label && oracle_ok(&cb.cont, &sb.cont))
                })
            }
            Some(PairShape::OutputsCovered) => {
                let outs = cl.as_unretractable().unwrap();
                let ins = sv.as_input().unwrap();
                outs.iter().all(|ob| {
                    ins.iter()
                        .any(|ib| ib.label == ob.label && oracle_ok(&ob.cont, &ib.cont))
                })
            }
            Some(PairShape::InputsCover) => {
                let ins = cl.as_input().unwrap();
                let outs = sv.as_unretractable().unwrap();
                outs.iter().all(|ob| {
                    ins.iter()
                        .any(|ib| ib.label == ob.label && oracle_ok(&ib.cont, &ob.cont))
                })
            }
            Some(PairShape::ClientSuccess) | None => false,
        };
        ensure(
            ok,
            format!(
                "{} ⊣ {} has no admissible shape ({shape:?})",
                pretty(&cl),
                pretty(&sv)
            ),
        )?;
    }
    ensure(checked > 0, "no compliant pair with client ≠ 1")?;
    Ok(format!(
        "{checked} compliant pairs with client ≠ 1, zero violations"
    ))
}

fn fixtures() -> Vec<(PathBuf, ContractFile)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures");
    let mut files: Vec<_> = std::fs::read_dir(&dir)
        .expect("fixtures directory")
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "rct"))
        .collect();
    files.sort();
    files
        .into_iter()
        .map(|p| {
            let text = std::fs::read_to_string(&p).unwrap();
            let f = parse_file(&text)
                .unwrap_or_else(|e| panic!("{}: {}", p.display(), e.render(&text)));
            (p, f)
        })
        .collect()
}

fn round_trip_and_determinism() -> Outcome {
    let files = fixtures();
    ensure(files.len() >= 8, format!("only {} fixtures", files.len()))?;
    let mut terms = 0;
    let mut derivations = 0;
    for (path, f) in &files {
        let canon = f.pretty();
        let again = parse_file(&canon).map_err(|e| format!("{}: {e}", path.display()))?;
        ensure(
            again.pretty() == canon,
            format!("{}: fmt not idempotent", path.display()),
        )?;
        for b in f.bindings() {
            for t in std::iter::once(b.contract.clone()).chain(subterm_closure(&b.contract)) {
                let text = pretty(&t);
                let back =
                    rct_core::parser::parse_residual(&text).map_err(|e| format!("{text}: {e}"))?;
                ensure(
                    back == t,
                    format!("{}: `{text}` does not round-trip", path.display()),
                )?;
                terms += 1;
            }
        }
        let (cl, sv) = f.pair().map_err(|e| e.to_string())?;
        let first = serde_json::to_string(&check(&cl, &sv).derivation()).unwrap();
        for _ in 0..5 {
            let again = serde_json::to_string(&check(&cl, &sv).derivation()).unwrap();
            ensure(
                again == first,
                format!("{}: derivation differs between runs", path.display()),
            )?;
        }
        derivations += 1;
    }
    Ok(format!(
        "{} files, {terms} terms round-trip, {derivations} derivations byte-identical over 6 runs",
        files.len()
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("golden trace of Buyer' || Seller", example1_golden_trace),
        ("deadlock with unretractable client", example2_deadlock),
        (
            "unbounded stack growth, compliant via Hyp",
            example3_divergence,
        ),
        ("Buyer' / Seller derivation", example4_derivation),
        ("Buyer / Seller non-compliance", buyer_noncompliance),
        (
            "decider agrees with exhaustive oracle",
            decider_equals_oracle,
        ),
        ("pair-step invariants", invariant_suite),
        ("prove call bound", termination_bound),
        ("shapes of compliant pairs", shape_characterization),
        ("round trip and determinism", round_trip_and_determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t0 = Instant::now();
        let result = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        match result {
            Ok(detail) => println!(
                "criterion {:>2} PASS  {name}: {detail} [{:.2?}]",
                i + 1,
                t0.elapsed()
            ),
            Err(why) => {
                failed += 1;
                println!(
                    "criterion {:>2} FAIL  {name}: {why} [{:.2?}]",
                    i + 1,
                    t0.elapsed()
                );
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
