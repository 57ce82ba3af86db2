use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::comm_cost;
use crate::baselines::{collaborative_run, local_ucb_run};
use crate::env::{load_instance, synth_instance, BanditInstance, SynthParams};
use crate::error::{Error, Result};
use crate::protocol::{run_policy, AlgorithmConfig, ScheduleKind, Variant};
use crate::trace::{CommMode, Trace};

pub const TRACE_HEADER: &str = "algo,seed,round,cum_regret";
pub const PHASES_HEADER: &str = "algo,seed,phase,f_p,up_scalars,down_scalars,sparsity,sweeps";
pub const SUMMARY_HEADER: &str = "algo,final_regret_mean,final_regret_std,total_comm_mean,sparsity_mean,sweeps_mean";
const FAILURES_HEADER: &str = "algo,seed,error";

/// Traces longer than this are written at checkpoints only.
const FULL_TRACE_LIMIT: usize = 1 << 15;
const CHECKPOINTS: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algo {
    FedPe,
    Enhanced,
    Shared,
    LocalUcb,
    Collaborative,
}

impl Algo {
    pub const ALL: [Algo; 5] = [Algo::FedPe, Algo::Enhanced, Algo::Shared, Algo::LocalUcb, Algo::Collaborative];

    pub fn name(self) -> &'static str {
        match self {
            Algo::FedPe => "fed-pe",
            Algo::Enhanced => "enhanced",
            Algo::Shared => "shared",
            Algo::LocalUcb => "local-ucb",
            Algo::Collaborative => "collaborative",
        }
    }
}

impl std::fmt::Display for Algo {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Algo {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algo::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown algorithm `{s}`")))
    }
}

#[derive(Debug, Clone)]
pub enum InstanceSource {
    File(PathBuf),
    /// Drawn once from `ChaCha8Rng::seed_from_u64(seed)`; every cell sees
    /// the same instance.
    Synth { params: SynthParams, seed: u64 },
    /// Already in memory.
    Given(Box<BanditInstance>),
}

#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub instance: InstanceSource,
    pub algos: Vec<Algo>,
    pub horizon: u64,
    pub delta: f64,
    pub schedule: ScheduleKind,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    pub comm_mode: CommMode,
    /// Worker threads; `None` uses the global rayon pool.
    pub jobs: Option<usize>,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.algos.is_empty() {
            return Err(Error::InvalidConfig("no algorithms given".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::InvalidConfig("no seeds given".into()));
        }
        if self.horizon == 0 {
            return Err(Error::InvalidConfig("horizon must be positive".into()));
        }
        if self.jobs == Some(0) {
            return Err(Error::InvalidConfig("jobs must be positive".into()));
        }
        self.config(Variant::FedPe).validate()
    }

    pub fn load_instance(&self) -> Result<BanditInstance> {
        match &self.instance {
            InstanceSource::File(p) => load_instance(p),
            InstanceSource::Synth { params, seed } => synth_instance(params, &mut ChaCha8Rng::seed_from_u64(*seed)),
            InstanceSource::Given(env) => Ok((**env).clone()),
        }
    }

    fn config(&self, variant: Variant) -> AlgorithmConfig {
        let mut cfg = AlgorithmConfig::new(variant, self.horizon, self.delta, self.schedule);
        cfg.comm_mode = self.comm_mode;
        cfg
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub algo: Algo,
    pub final_regret_mean: f64,
    pub final_regret_std: f64,
    pub total_comm_mean: f64,
    pub sparsity_mean: f64,
    pub sweeps_mean: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    /// Successful cells in (algorithm, seed) order.
    pub traces: Vec<(Algo, Trace)>,
    pub failures: Vec<(Algo, u64, String)>,
    pub summary: Vec<SummaryRow>,
    pub files: Vec<PathBuf>,
}

/// Runs a single (algorithm, seed) cell.
pub fn run_cell(env: &BanditInstance, spec: &ExperimentSpec, algo: Algo, seed: u64) -> Result<Trace> {
    match algo {
        Algo::FedPe => run_policy(env, &spec.config(Variant::FedPe), seed),
        Algo::Enhanced => run_policy(env, &spec.config(Variant::Enhanced), seed),
        Algo::Shared => run_policy(env, &spec.config(Variant::Shared), seed),
        Algo::LocalUcb => local_ucb_run(env, spec.horizon, seed),
        Algo::Collaborative => collaborative_run(env, &spec.config(Variant::FedPe), seed),
    }
}

/// Runs every cell and writes `trace_<algo>_<seed>.csv`, `phases.csv`,
/// `summary.csv` and `failures.csv` under the output directory. A failing
/// cell is recorded and skipped; only an invalid `ExperimentSpec`, an unreadable
/// instance or an I/O error aborts the whole run.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    spec.validate()?;
    let env = spec.load_instance()?;
    fs::create_dir_all(&spec.out_dir)?;

    let cells: Vec<(Algo, u64)> = spec
        .algos
        .iter()
        .flat_map(|&a| spec.seeds.iter().map(move |&s| (a, s)))
        .collect();
    let work = || -> Vec<(Algo, u64, Result<Trace>)> {
        cells
            .par_iter()
            .map(|&(a, s)| {
                let res = run_cell(&env, spec, a, s);
                if let Ok(tr) = &res {
                    let path = spec.out_dir.join(format!("trace_{a}_{s}.csv"));
                    if let Err(e) = write_atomic(&path, &trace_rows(tr, env.num_arms() as u64)) {
                        return (a, s, Err(e));
                    }
                }
                (a, s, res)
            })
            .collect()
    };
    let results = match spec.jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    };

    let mut traces = Vec::new();
    let mut failures = Vec::new();
    let mut files = Vec::new();
    for (a, s, res) in results {
        match res {
            Ok(tr) => {
                files.push(spec.out_dir.join(format!("trace_{a}_{s}.csv")));
                traces.push((a, tr));
            }
            Err(Error::Io(e)) => return Err(Error::Io(e)),
            Err(e) => failures.push((a, s, e.to_string())),
        }
    }

    let mut phases = String::from(PHASES_HEADER);
    phases.push('\n');
    for (a, tr) in &traces {
        phases.push_str(&phase_rows(*a, tr, spec.comm_mode));
    }
    let summary = summarize(&spec.algos, &traces, spec.comm_mode);
    let mut sum_csv = String::from(SUMMARY_HEADER);
    sum_csv.push('\n');
    for r in &summary {
        let _ = writeln!(
            sum_csv,
            "{},{},{},{},{},{}",
            r.algo, r.final_regret_mean, r.final_regret_std, r.total_comm_mean, r.sparsity_mean, r.sweeps_mean
        );
    }
    let mut fail_csv = String::from(FAILURES_HEADER);
    fail_csv.push('\n');
    for (a, s, msg) in &failures {
        let _ = writeln!(fail_csv, "{a},{s},\"{}\"", msg.replace('"', "\"\""));
    }
    for (name, body) in [("phases.csv", phases), ("summary.csv", sum_csv), ("failures.csv", fail_csv)] {
        let path = spec.out_dir.join(name);
        write_atomic(&path, &body)?;
        files.push(path);
    }
    Ok(ExperimentReport {
        traces,
        failures,
        summary,
        files,
    })
}

/// Trace CSV body including the header. Every round is written up to
/// 2^15 rounds; longer runs keep 1024 evenly spaced checkpoints plus the
/// phase boundaries.
pub fn trace_rows(trace: &Trace, num_arms: u64) -> String {
    let n = trace.cum_regret.len();
    let rounds: Vec<usize> = if n <= FULL_TRACE_LIMIT {
        (1..=n).collect()
    } else {
        let mut r: Vec<usize> = (1..=CHECKPOINTS).map(|j| (j * n).div_ceil(CHECKPOINTS)).collect();
        r.extend(
            trace
                .phase_boundaries(num_arms)
                .into_iter()
                .map(|b| b as usize)
                .filter(|&b| b >= 1 && b <= n),
        );
        if trace.init_comm.is_some() && num_arms as usize <= n {
            r.push(num_arms as usize);
        }
        r.sort_unstable();
        r.dedup();
        r
    };
    let mut out = String::with_capacity(32 * (rounds.len() + 1));
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for t in rounds {
        let _ = writeln!(out, "{},{},{},{}", trace.algo, trace.seed, t, trace.cum_regret[t - 1]);
    }
    out
}

/// Phase CSV rows (no header). Initialisation is phase 0 with `f_p = 1`.
pub fn phase_rows(algo: Algo, trace: &Trace, mode: CommMode) -> String {
    let mut out = String::new();
    if let Some(c) = &trace.init_comm {
        let (up, down) = c.scalars(mode);
        let _ = writeln!(out, "{algo},{},0,1,{up},{down},0,0", trace.seed);
    }
    for p in &trace.phases {
        let (up, down) = p.comm.scalars(mode);
        let _ = writeln!(
            out,
            "{algo},{},{},{},{up},{down},{},{}",
            trace.seed, p.phase, p.f_p, p.sparsity, p.sweeps
        );
    }
    out
}

/// Per-algorithm statistics over the successful seeds. Cell sparsity and
/// sweeps are averaged over the cell's phases (zero for runs without
/// phases); the standard deviation is the sample one (zero for a single
/// seed).
pub fn summarize(algos: &[Algo], traces: &[(Algo, Trace)], mode: CommMode) -> Vec<SummaryRow> {
    let mut rows = Vec::new();
    for &algo in algos {
        let cells: Vec<&Trace> = traces.iter().filter(|(a, _)| *a == algo).map(|(_, t)| t).collect();
        if cells.is_empty() {
            continue;
        }
        let n = cells.len() as f64;
        let finals: Vec<f64> = cells.iter().map(|t| t.final_regret()).collect();
        let mean = finals.iter().sum::<f64>() / n;
        let std = if cells.len() > 1 {
            (finals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        let comm = cells
            .iter()
            .map(|t| {
                let (u, d) = comm_cost(t.init_comm.as_ref(), &t.phases, mode);
                (u + d) as f64
            })
            .sum::<f64>()
            / n;
        let (mut sp, mut sw) = (0.0, 0.0);
        for t in &cells {
            if !t.phases.is_empty() {
                let k = t.phases.len() as f64;
                sp += t.phases.iter().map(|p| p.sparsity).sum::<f64>() / k;
                sw += t.phases.iter().map(|p| p.sweeps as f64).sum::<f64>() / k;
            }
        }
        rows.push(SummaryRow {
            algo,
            final_regret_mean: mean,
            final_regret_std: std,
            total_comm_mean: comm,
            sparsity_mean: sp / n,
            sweeps_mean: sw / n,
        });
    }
    rows
}

fn write_atomic(path: &Path, body: &str) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, body)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn algo_names_round_trip() {
        for a in Algo::ALL {
            assert_eq!(a.name().parse::<Algo>().unwrap(), a);
        }
        assert!("ucb".parse::<Algo>().is_err());
    }

    #[test]
    fn long_traces_are_downsampled() {
        let n = 1 << 16;
        let tr = Trace {
            algo: "x".into(),
            seed: 0,
            cum_regret: (0..n).map(|t| t as f64).collect(),
            init_comm: None,
            phases: Vec::new(),
            pulls_per_client: vec![n as u64],
            optimal_eliminated: false,
        };
        let body = trace_rows(&tr, 2);
        assert_eq!(body.lines().count(), 1 + CHECKPOINTS);
        assert!(body.ends_with(&format!("x,0,{n},{}\n", n - 1)));
    }
}
