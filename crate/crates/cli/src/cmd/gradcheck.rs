use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::Context;
use swgformer::verify::{gradient_suite, CaseOutcome, Level};

use crate::failure::NumericalFailure;
use crate::manifest::Manifest;

pub const RESULTS_FILE: &str = "gradcheck.csv";

#[derive(clap::ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    All,
    Op,
    Block,
    Model,
}

#[derive(clap::Args, Debug)]
pub struct Args {
    #[arg(long, value_enum, default_value_t = Suite::All)]
    pub suite: Suite,
    /// Only cases whose name contains this text.
    #[arg(long)]
    pub filter: Option<String>,
    /// Receives `gradcheck.csv`.
    #[arg(long)]
    pub out: PathBuf,
}

fn selected(suite: Suite, level: Level) -> bool {
    matches!(
        (suite, level),
        (Suite::All, _) | (Suite::Op, Level::Op) | (Suite::Block, Level::Block) | (Suite::Model, Level::Model)
    )
}

pub fn results_csv(outcomes: &[CaseOutcome]) -> String {
    let mut s = String::from("case,level,max_rel_err,tolerance,passed,seconds,detail\n");
    for o in outcomes {
        let _ = writeln!(
            s,
            "{},{},{:.3e},{:.0e},{},{:.3},\"{}\"",
            o.name,
            o.level.name(),
            o.max_rel_err,
            o.tolerance,
            o.passed,
            o.elapsed.as_secs_f64(),
            o.detail.replace('"', "'")
        );
    }
    s
}

pub fn run(a: &Args, m: &mut Manifest) -> anyhow::Result<()> {
    m.set("suite", format!("{:?}", a.suite).to_lowercase());
    if let Some(f) = &a.filter {
        m.set("filter", f);
    }
    let cases: Vec<_> = gradient_suite()
        .into_iter()
        .filter(|c| selected(a.suite, c.level))
        .filter(|c| a.filter.as_ref().is_none_or(|f| c.name.contains(f.as_str())))
        .collect();
    let mut outcomes = Vec::with_capacity(cases.len());
    for case in &cases {
        let o = case.run();
        say!(
            "{} {:<24} {:<5} rel err {:.3e} (tol {:.0e})",
            if o.passed { "PASS" } else { "FAIL" },
            o.name,
            o.level.name(),
            o.max_rel_err,
            o.tolerance
        );
        outcomes.push(o);
    }
    let path = a.out.join(RESULTS_FILE);
    std::fs::write(&path, results_csv(&outcomes)).with_context(|| format!("writing {}", path.display()))?;
    let failed: Vec<&str> = outcomes.iter().filter(|o| !o.passed).map(|o| o.name.as_str()).collect();
    m.set("cases", outcomes.len());
    m.set("failed", failed.len());
    if !failed.is_empty() {
        return Err(NumericalFailure(format!("{} gradient case(s) failed: {}", failed.len(), failed.join(", "))).into());
    }
    say!("{} cases passed", outcomes.len());
    Ok(())
}
