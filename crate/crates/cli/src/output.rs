//! CSV and JSON writers. Column sets are part of the versioned output schema;
//! change [`auction_learn::experiment::SCHEMA_VERSION`] when they change.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use auction_learn::experiment::{OutputFormat, Resolved, SCHEMA_VERSION};
use auction_learn::simulation::Summary;
use auction_learn::{FeedbackMode, Report};
use serde::Serialize;
use sha2::{Digest, Sha256};

/// Every seed's report for one arm plus their aggregate.
pub struct ArmResult {
    pub mode: FeedbackMode,
    pub reports: Vec<Report>,
    pub summary: Summary<f64>,
}

pub const REGRET_HEADER: &[&str] =
    &["arm", "bidder", "t", "regret_mean", "regret_std", "loss_regret_mean", "loss_regret_std"];
pub const ALPHA_HEADER: &[&str] = &["arm", "bidder", "actions", "alpha_mean", "alpha_std", "bound_loss_mean"];
pub const ZERO_HEADER: &[&str] = &["arm", "bidder", "zero_allocations_mean", "zero_allocations_std"];
pub const SOCIAL_HEADER: &[&str] = &[
    "arm",
    "social_cost_mean",
    "social_cost_std",
    "truthful_social_cost",
    "cce_gap_mean",
    "cce_gap_std",
];
pub const RUNS_HEADER: &[&str] = &[
    "arm",
    "seed",
    "bidder",
    "final_regret",
    "final_loss_regret",
    "alpha_avg",
    "regret_bound",
    "zero_allocations",
    "cce_gap",
    "average_social_cost",
];
pub const SWEEP_HEADER: &[&str] = &[
    "param",
    "value",
    "arm",
    "final_regret_mean",
    "final_regret_std",
    "final_loss_regret_mean",
    "alpha_mean",
    "alpha_std",
    "zero_allocations_mean",
    "social_cost_mean",
];

fn writer(path: &Path) -> io::Result<csv::Writer<fs::File>> {
    Ok(csv::Writer::from_writer(fs::File::create(path)?))
}

fn to_io(e: csv::Error) -> io::Error {
    io::Error::other(e)
}

fn write_rows(path: &Path, header: &[&str], rows: Vec<Vec<String>>) -> io::Result<()> {
    let mut w = writer(path)?;
    w.write_record(header).map_err(to_io)?;
    for r in rows {
        w.write_record(&r).map_err(to_io)?;
    }
    w.flush()
}

fn f(x: f64) -> String {
    format!("{x}")
}

/// Writes the aggregate files for one config into `dir`, returning their
/// names.
pub fn write_run(dir: &Path, arms: &[ArmResult], formats: &[OutputFormat], keep_runs: bool) -> io::Result<Vec<String>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    if formats.contains(&OutputFormat::Csv) {
        let mut regret = Vec::new();
        let mut alpha = Vec::new();
        let mut zeros = Vec::new();
        let mut social = Vec::new();
        let mut runs = Vec::new();
        for arm in arms {
            let label = arm.mode.label().to_string();
            let s = &arm.summary;
            for (l, b) in s.bidders.iter().enumerate() {
                let id = (l + 1).to_string();
                for t in 0..s.horizon {
                    regret.push(vec![
                        label.clone(),
                        id.clone(),
                        (t + 1).to_string(),
                        f(b.regret[t].mean),
                        f(b.regret[t].std),
                        f(b.loss_regret[t].mean),
                        f(b.loss_regret[t].std),
                    ]);
                }
                let actions = arm.reports[0].bidders[l].actions;
                alpha.push(vec![
                    label.clone(),
                    id.clone(),
                    actions.to_string(),
                    f(b.alpha_avg.mean),
                    f(b.alpha_avg.std),
                    f(b.regret_bound.mean),
                ]);
                zeros.push(vec![label.clone(), id, f(b.zero_allocations.mean), f(b.zero_allocations.std)]);
            }
            for t in 0..s.horizon {
                regret.push(vec![
                    label.clone(),
                    "all".into(),
                    (t + 1).to_string(),
                    f(s.regret_all[t].mean),
                    f(s.regret_all[t].std),
                    f(s.loss_regret_all[t].mean),
                    f(s.loss_regret_all[t].std),
                ]);
            }
            alpha.push(vec![
                label.clone(),
                "all".into(),
                String::new(),
                f(s.alpha_avg_all.mean),
                f(s.alpha_avg_all.std),
                String::new(),
            ]);
            social.push(vec![
                label.clone(),
                f(s.social_cost.mean),
                f(s.social_cost.std),
                f(s.truthful_social_cost),
                f(s.cce_gap.mean),
                f(s.cce_gap.std),
            ]);
            for r in &arm.reports {
                for (l, b) in r.bidders.iter().enumerate() {
                    runs.push(vec![
                        label.clone(),
                        r.seed.to_string(),
                        (l + 1).to_string(),
                        f(*b.regret.dollars.last().unwrap()),
                        f(*b.regret.losses.last().unwrap()),
                        f(b.alpha_avg),
                        f(b.regret_bound),
                        b.zero_allocations.to_string(),
                        f(b.cce_gap),
                        f(r.average_social_cost),
                    ]);
                }
            }
        }
        for (name, header, rows) in [
            ("regret.csv", REGRET_HEADER, regret),
            ("alpha.csv", ALPHA_HEADER, alpha),
            ("zero_allocations.csv", ZERO_HEADER, zeros),
            ("social_cost.csv", SOCIAL_HEADER, social),
            ("runs.csv", RUNS_HEADER, runs),
        ] {
            write_rows(&dir.join(name), header, rows)?;
            written.push(name.to_string());
        }
    }
    if formats.contains(&OutputFormat::Json) {
        #[derive(Serialize)]
        struct ArmJson<'a> {
            arm: &'static str,
            summary: &'a Summary<f64>,
        }
        #[derive(Serialize)]
        struct SummaryJson<'a> {
            schema_version: u32,
            arms: Vec<ArmJson<'a>>,
        }
        let doc = SummaryJson {
            schema_version: SCHEMA_VERSION,
            arms: arms.iter().map(|a| ArmJson { arm: a.mode.label(), summary: &a.summary }).collect(),
        };
        write_json(&dir.join("summary.json"), &doc)?;
        written.push("summary.json".into());
    }
    if keep_runs {
        let runs_dir = dir.join("runs");
        fs::create_dir_all(&runs_dir)?;
        for arm in arms {
            for r in &arm.reports {
                let name = format!("runs/{}_seed{}.json", arm.mode.label(), r.seed);
                write_json(&dir.join(&name), r)?;
                written.push(name);
            }
        }
    }
    Ok(written)
}

pub struct SweepRow {
    pub value: f64,
    pub mode: FeedbackMode,
    pub summary: Summary<f64>,
}

pub fn write_sweep(dir: &Path, param: &str, rows: &[SweepRow]) -> io::Result<String> {
    let body = rows
        .iter()
        .map(|r| {
            let s = &r.summary;
            let zeros = s.bidders.iter().map(|b| b.zero_allocations.mean).sum::<f64>() / s.bidders.len() as f64;
            let loss = s.bidders.iter().map(|b| b.final_loss_regret.mean).sum::<f64>() / s.bidders.len() as f64;
            vec![
                param.to_string(),
                f(r.value),
                r.mode.label().to_string(),
                f(s.final_regret_all.mean),
                f(s.final_regret_all.std),
                f(loss),
                f(s.alpha_avg_all.mean),
                f(s.alpha_avg_all.std),
                f(zeros),
                f(s.social_cost.mean),
            ]
        })
        .collect();
    write_rows(&dir.join("sweep.csv"), SWEEP_HEADER, body)?;
    Ok("sweep.csv".into())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> io::Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(io::Error::other)?;
    fs::write(path, text + "\n")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Everything needed to rerun and reproduce the outputs bit for bit.
#[derive(Serialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config_path: PathBuf,
    pub config_sha256: String,
    pub config: String,
    pub seeds: Vec<u64>,
    pub seed_override: bool,
    pub workers: usize,
    pub sweep: Option<SweepSpec>,
    pub resolved: Resolved,
    pub outputs: Vec<String>,
}

#[derive(Serialize)]
pub struct SweepSpec {
    pub param: String,
    pub values: Vec<f64>,
}
