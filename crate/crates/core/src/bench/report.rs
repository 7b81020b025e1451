use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{CellStatus, RunReport};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Json,
    Markdown,
}

impl ReportFormat {
    pub const ALL: [ReportFormat; 3] = [ReportFormat::Csv, ReportFormat::Json, ReportFormat::Markdown];

    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Csv => "csv",
            ReportFormat::Json => "json",
            ReportFormat::Markdown => "md",
        }
    }
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            "md" | "markdown" => Ok(ReportFormat::Markdown),
            _ => Err(format!("unknown report format {s:?} (csv, json, md)")),
        }
    }
}

pub fn render_report(rep: &RunReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Csv => csv_rows(rep),
        ReportFormat::Json => rep.to_json(),
        ReportFormat::Markdown => markdown(rep),
    }
}

/// Write `report.csv`, `report.json` and `report.md` into `dir`.
pub fn write_report(rep: &RunReport, dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    ReportFormat::ALL
        .iter()
        .map(|&f| {
            let path = dir.join(format!("report.{}", f.extension()));
            std::fs::write(&path, render_report(rep, f))?;
            Ok(path)
        })
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

fn csv_rows(rep: &RunReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "agent",
        "seed",
        "split",
        "status",
        "objective",
        "trace_hash",
        "steps",
        "replans",
        "plan_fallbacks",
        "train_episodes",
        "train_seeds",
        "runtime_ms",
        "error",
    ])
    .expect("in-memory write");
    for r in &rep.rows {
        let seeds: Vec<String> = r.train_seeds.iter().map(|s| s.to_string()).collect();
        w.write_record([
            r.agent.clone(),
            r.seed.to_string(),
            r.split.clone(),
            match r.status {
                CellStatus::Ok => "ok".into(),
                CellStatus::Failed => "failed".into(),
            },
            opt(r.objective),
            r.trace_hash.clone().unwrap_or_default(),
            r.steps.to_string(),
            r.replans.to_string(),
            r.plan_fallbacks.to_string(),
            r.train_episodes.to_string(),
            seeds.join(" "),
            format!("{:.3}", r.runtime_ms),
            r.error.clone().unwrap_or_default(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

fn num(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |x| format!("{x:.4}"))
}

fn list(xs: &[u64]) -> String {
    xs.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(", ")
}

fn markdown(rep: &RunReport) -> String {
    let cfg = &rep.config;
    let mut out = String::new();
    let title = cfg.name.as_deref().unwrap_or("experiment");
    let _ = writeln!(out, "# Report: {title}\n");

    let _ = writeln!(out, "## Setup\n");
    let _ = writeln!(out, "- instance: {}", rep.setup.instance_name.as_deref().unwrap_or("(unnamed)"));
    let _ = writeln!(out, "- problem: `{}`", rep.setup.triplet);
    let _ = writeln!(out, "- objective: `{}`", rep.setup.objective);
    let _ = writeln!(out, "- size: {} jobs, {} machines", rep.setup.n_jobs, rep.setup.n_machines);
    let _ = writeln!(out, "- breakdown: {}", cfg.env.breakdown.name());
    let _ = writeln!(out, "- action encoding: {}", serde_json::to_string(&cfg.env.action).unwrap_or_default());
    let _ = writeln!(out, "- reward shaping: {:?}", cfg.env.shaping);
    let _ = writeln!(out, "- horizon: {}", cfg.env.horizon.map_or("none".into(), |h| h.to_string()));
    let _ = writeln!(
        out,
        "- versions: package {}, config {}, report {}, instance schema {}, q-table {}, protocol {}\n",
        rep.versions.package,
        rep.versions.config,
        rep.versions.report,
        rep.versions.instance_schema,
        rep.versions.qtable,
        rep.versions.protocol
    );

    let trained = rep.rows.iter().any(|r| r.train_episodes > 0);
    let launched = rep.agents.len() * cfg.seeds.len();
    let _ = writeln!(out, "## Disclosure\n");
    let _ = writeln!(out, "| criterion | status | evidence |");
    let _ = writeln!(out, "|---|---|---|");
    let _ = writeln!(
        out,
        "| reproducible stochasticity | yes | {} seeded test runs, trace hash per row |",
        cfg.seeds.len()
    );
    let split = match (trained, cfg.split.stream_fraction) {
        (false, _) => "no trained agents".to_string(),
        (true, Some(f)) => format!(
            "trained on the first {} jobs (fraction {f}), tested on the last {}",
            rep.setup.train_jobs, rep.setup.test_jobs
        ),
        (true, None) => "train seeds disjoint from test seeds".to_string(),
    };
    let _ = writeln!(out, "| train-test split | {} | {split} |", if trained { "yes" } else { "n/a" });
    let _ = writeln!(out, "| sufficient baselines | yes | {} |", rep.baselines.join(", "));
    let _ = writeln!(
        out,
        "| cherry picking | none | {} of {launched} launched runs reported, {} failed |\n",
        rep.rows.len(),
        rep.failed_cells()
    );

    let _ = writeln!(out, "## Results (lower is better)\n");
    let _ = writeln!(out, "| agent | n | failed | mean | std | min | max | 95% CI |");
    let _ = writeln!(out, "|---|---|---|---|---|---|---|---|");
    for s in &rep.summaries {
        let st = &s.stats;
        let ci = st
            .ci95
            .map_or("n/a".to_string(), |(lo, hi)| format!("[{lo:.4}, {hi:.4}]"));
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} | {} | {} | {ci} |",
            s.agent,
            st.n,
            s.failed,
            num(st.mean),
            num(st.std),
            num(st.min),
            num(st.max)
        );
    }
    let _ = writeln!(out);

    if !rep.comparisons.is_empty() {
        let _ = writeln!(out, "## Paired sign tests\n");
        let _ = writeln!(out, "| agent | baseline | pairs | wins | losses | ties | p |");
        let _ = writeln!(out, "|---|---|---|---|---|---|---|");
        for c in &rep.comparisons {
            let t = &c.test;
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} | {} | {} | {} |",
                c.agent,
                c.baseline,
                t.n_pairs,
                t.wins,
                t.losses,
                t.ties,
                t.p_value.map_or("n/a".into(), |p| if p < 1e-4 { format!("{p:.2e}") } else { format!("{p:.5}") })
            );
        }
        let _ = writeln!(out);
    }

    let _ = writeln!(out, "## Seeds\n");
    let _ = writeln!(out, "- test: {}", list(&cfg.seeds));
    if trained {
        let _ = writeln!(out, "- train: {}", list(&rep.train_seeds));
    }
    let _ = writeln!(out, "- bootstrap: {}", cfg.bootstrap_seed);

    let failures: Vec<_> = rep.rows.iter().filter(|r| r.status == CellStatus::Failed).collect();
    if !failures.is_empty() {
        let _ = writeln!(out, "\n## Failed runs\n");
        for r in failures {
            let _ = writeln!(
                out,
                "- {} seed {}: {}",
                r.agent,
                r.seed,
                r.error.as_deref().unwrap_or("unknown error")
            );
        }
    }
    out
}
