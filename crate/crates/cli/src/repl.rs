//! The interactive stepper behind `rct step`.

use std::io::{self, BufRead, Write};

use rct_core::{pair_steps, PairConfig, Trace};

const HELP: &str = "enter a step index, u (undo), t (show trace), q (quit)";

fn show_state<W: Write>(out: &mut W, trace: &Trace) -> io::Result<()> {
    let cur = trace.last();
    writeln!(out, "\nstep {}", trace.steps.len())?;
    writeln!(out, "  client: {}", cur.client)?;
    writeln!(out, "  server: {}", cur.server)?;
    let enabled = pair_steps(cur);
    if enabled.is_empty() {
        let how = if cur.client.is_success() {
            "client succeeded"
        } else {
            "client has not succeeded"
        };
        writeln!(out, "  stuck ({how})")?;
    }
    for (i, s) in enabled.iter().enumerate() {
        writeln!(out, "  [{i}] {:<16} -> {}", s.kind.to_string(), s.next)?;
    }
    Ok(())
}

/// Runs the loop until `q` or end of input, then prints the trace.
pub fn run<R: BufRead, W: Write>(start: PairConfig, input: R, mut out: W) -> io::Result<Trace> {
    let mut trace = Trace::new(start);
    writeln!(out, "{HELP}")?;
    show_state(&mut out, &trace)?;
    let mut lines = input.lines();
    loop {
        write!(out, "> ")?;
        out.flush()?;
        let Some(line) = lines.next().transpose()? else {
            writeln!(out)?;
            break;
        };
        match line.trim() {
            "" => continue,
            "q" => break,
            "t" => write!(out, "{trace}")?,
            "u" => {
                if trace.steps.pop().is_some() {
                    show_state(&mut out, &trace)?;
                } else {
                    writeln!(out, "nothing to undo")?;
                }
            }
            other => {
                let enabled = pair_steps(trace.last());
                match other.parse::<usize>() {
                    Ok(i) if i < enabled.len() => {
                        trace
                            .steps
                            .push(enabled.into_iter().nth(i).expect("index checked"));
                        show_state(&mut out, &trace)?;
                    }
                    Ok(i) => writeln!(out, "no step {i}; {} enabled", enabled.len())?,
                    Err(_) => writeln!(out, "unknown command `{other}`; {HELP}")?,
                }
            }
        }
    }
    writeln!(out, "trace ({} steps):", trace.steps.len())?;
    write!(out, "{trace}")?;
    out.flush()?;
    Ok(trace)
}
