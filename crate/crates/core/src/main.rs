use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgGroup, Parser, Subcommand, ValueEnum};
use serde_json::json;

use hidden_chsh::correlation::analyze;
use hidden_chsh::filtering::{normal_form, normal_form_state, tradeoff_table, NormalFormCase};
use hidden_chsh::linalg::Mat2;
use hidden_chsh::oracle::{judge, search_filters, FilterSearchConfig};
use hidden_chsh::qstate::{random_channel_choi, random_pure_state, DEFAULT_STATE_TOL};
use hidden_chsh::statefile::{read_state, write_state};
use hidden_chsh::survey::{run_survey_with_progress, SurveyConfig, DEFAULT_MEASURE};
use hidden_chsh::{Error, SeedStream, TwoQubitState};

#[derive(Parser)]
#[command(name = "hidden-chsh", version, about = "Hidden Bell-CHSH nonlocality of two-qubit states under local filtering")]
struct Cli {
    /// Worker threads for survey and verify (default: available cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form criterion, filtered optimum and separability of a state.
    Analyze {
        #[arg(long)]
        state: PathBuf,
        #[arg(long, conflicts_with = "table")]
        json: bool,
        #[arg(long)]
        table: bool,
    },
    /// Monte-Carlo class volumes over states with one marginal maximally mixed.
    Survey {
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        samples: u64,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value = DEFAULT_MEASURE)]
        measure: String,
        /// JSON report destination (standard output if absent).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the per-class CSV table here.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Cross-check the closed form against a brute-force filter search.
    #[command(group(ArgGroup::new("input").required(true).args(["state", "random"])))]
    Verify {
        #[arg(long)]
        state: Option<PathBuf>,
        /// Number of random Choi states to check.
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        random: Option<u64>,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 0.01)]
        tmin: f64,
        #[arg(long, default_value_t = 0.05)]
        slack: f64,
        #[arg(long, default_value_t = 2000, value_parser = clap::value_parser!(u64).range(1..))]
        n_random: u64,
        #[arg(long, default_value_t = 3)]
        n_refine: usize,
    },
    /// Normal form and, for rank-deficient states, the quasi-distillation trade-off.
    Distill {
        #[arg(long)]
        state: PathBuf,
        #[arg(long, default_value_t = 1e-9)]
        eps: f64,
        #[arg(long, default_value_t = 10_000)]
        max_iter: usize,
        #[arg(long, value_delimiter = ',', default_value = "1,2,5,10,20,50,100,1000")]
        n_grid: Vec<f64>,
        #[arg(long)]
        json: bool,
    },
    /// Write a state file.
    Gen {
        #[arg(long, value_enum)]
        kind: Kind,
        #[arg(short = 'p')]
        p: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 4)]
        env_dim: usize,
        #[arg(short = 'a', allow_negative_numbers = true)]
        a: Option<f64>,
        #[arg(short = 'b', allow_negative_numbers = true)]
        b: Option<f64>,
        #[arg(short = 'c', allow_negative_numbers = true)]
        c: Option<f64>,
        #[arg(short = 'd', allow_negative_numbers = true)]
        d: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Werner,
    Pure,
    Choi,
    Eq7,
}

/// Failures of this binary: bad invocations exit 2, domain errors exit 1.
enum Failure {
    Usage(String),
    Domain(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::StateFile(_) => Failure::Usage(e.to_string()),
            e => Failure::Domain(e),
        }
    }
}

type CliResult = Result<ExitCode, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli.command) {
        Ok(code) => code,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Domain(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn run(cmd: Command) -> CliResult {
    match cmd {
        Command::Analyze { state, json, .. } => cmd_analyze(&state, json),
        Command::Survey { samples, seed, measure, out, csv } => {
            cmd_survey(samples as usize, seed, measure, out.as_deref(), csv.as_deref())
        }
        Command::Verify { state, random, seed, tmin, slack, n_random, n_refine } => {
            let cfg = FilterSearchConfig { n_random: n_random as usize, n_refine, t_min: tmin, seed: SeedStream::new(seed) };
            if !(tmin > 0.0 && tmin <= 1.0) {
                return Err(Failure::Usage(format!("--tmin must lie in (0, 1], got {tmin}")));
            }
            cmd_verify(state.as_deref(), random, cfg, slack)
        }
        Command::Distill { state, eps, max_iter, n_grid, json } => cmd_distill(&state, eps, max_iter, &n_grid, json),
        Command::Gen { kind, p, seed, env_dim, a, b, c, d, out } => cmd_gen(kind, p, seed, env_dim, [a, b, c, d], &out),
    }
}

fn load(path: &Path) -> Result<TwoQubitState, Failure> {
    Ok(read_state(path, DEFAULT_STATE_TOL)?)
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable")
}

fn cmd_analyze(path: &Path, json: bool) -> CliResult {
    let report = analyze(&load(path)?)?;
    if json {
        println!("{}", to_json(&report));
    } else {
        let l = report.spectrum.lambda;
        println!("lambda              {:.12e} {:.12e} {:.12e} {:.12e}", l[0], l[1], l[2], l[3]);
        println!("hidden_nonlocal     {}", report.hidden_nonlocal);
        println!("max_filtered_chsh   {:.12}", report.max_filtered_chsh);
        println!("horodecki_M         {:.12}", report.horodecki_m);
        println!("chsh_unfiltered     {:.12}", report.chsh_unfiltered);
        println!("separable           {}", report.separable);
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_survey(samples: usize, seed: u64, measure: String, out: Option<&Path>, csv: Option<&Path>) -> CliResult {
    let cfg = SurveyConfig { measure_tag: measure, ..SurveyConfig::new(samples, seed) };
    let report = run_survey_with_progress(&cfg, |done, total| {
        eprintln!("progress: {done}/{total} ({}%)", done * 100 / total);
    })?;
    let write = |path: &Path, text: String| {
        std::fs::write(path, text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
    };
    match out {
        Some(path) => write(path, report.to_json())?,
        None => print!("{}", report.to_json()),
    }
    if let Some(path) = csv {
        write(path, report.to_csv())?;
    }
    Ok(ExitCode::SUCCESS)
}

fn matrix_json(m: &Mat2) -> serde_json::Value {
    json!((0..2).map(|i| (0..2).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect::<Vec<_>>()).collect::<Vec<_>>())
}

fn cmd_verify(state: Option<&Path>, random: Option<u64>, cfg: FilterSearchConfig, slack: f64) -> CliResult {
    let root = cfg.seed;
    let states: Vec<(String, TwoQubitState, FilterSearchConfig)> = match (state, random) {
        (Some(path), _) => vec![(path.display().to_string(), load(path)?, cfg)],
        (None, Some(n)) => (0..n)
            .map(|i| {
                let s = random_channel_choi(&root.child(0).child(i), 4);
                (format!("choi-{i}"), s, FilterSearchConfig { seed: root.child(1).child(i), ..cfg })
            })
            .collect(),
        (None, None) => return Err(Failure::Usage("one of --state or --random is required".into())),
    };
    let mut rows = Vec::with_capacity(states.len());
    let mut certified = 0usize;
    for (name, s, c) in &states {
        let r = search_filters(s, c)?;
        let ok = judge(&r, slack);
        certified += ok as usize;
        rows.push(json!({
            "state": name,
            "certified": ok,
            "hidden_nonlocal": r.report.hidden_nonlocal,
            "best_chsh": r.best_chsh,
            "closed_form_bound": r.closed_form_bound,
            "gap": r.gap,
            "success_prob_at_best": r.success_prob_at_best,
            "filter_a": matrix_json(r.best_filter.a()),
            "filter_b": matrix_json(r.best_filter.b()),
        }));
    }
    let total = states.len();
    println!(
        "{}",
        to_json(&json!({
            "states": rows,
            "certified": certified,
            "total": total,
            "all_certified": certified == total,
            "slack": slack,
            "t_min": cfg.t_min,
            "n_random": cfg.n_random,
            "n_refine": cfg.n_refine,
        }))
    );
    Ok(if certified == total { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn cmd_distill(path: &Path, eps: f64, max_iter: usize, n_grid: &[f64], json: bool) -> CliResult {
    if n_grid.iter().any(|&n| !(n >= 1.0)) {
        return Err(Failure::Usage("--n-grid values must be at least 1".into()));
    }
    let s = load(path)?;
    let nf = normal_form(&s, eps, max_iter)?;
    let report = analyze(&s)?;
    let table = if nf.params.case_tag == NormalFormCase::RankDeficientI && nf.params.d != 0.0 {
        Some(tradeoff_table(&s, &nf, n_grid)?)
    } else {
        None
    };
    if json {
        println!(
            "{}",
            to_json(&json!({
                "case": nf.params.case_tag.label(),
                "params": nf.params,
                "iterations": nf.iterations,
                "success_probability": nf.success_probability,
                "filter_a": matrix_json(nf.filter.a()),
                "filter_b": matrix_json(nf.filter.b()),
                "closed_form_bound": report.max_filtered_chsh,
                "tradeoff": table,
            }))
        );
    } else {
        let p = &nf.params;
        println!("case                {}", p.case_tag.label());
        println!("iterations          {}", nf.iterations);
        println!("a b c d             {:.9} {:.9} {:.9} {:.9}", p.a, p.b, p.c, p.d);
        println!(
            "diagonal            {:.9} {:.9} {:.9} {:.9}",
            p.diagonal[0], p.diagonal[1], p.diagonal[2], p.diagonal[3]
        );
        println!("success_probability {:.9e}", nf.success_probability);
        println!("closed_form_bound   {:.12}", report.max_filtered_chsh);
        if let Some(rows) = table {
            println!();
            println!("{:>12} {:>22} {:>16}", "n", "success_probability", "chsh");
            for r in rows {
                println!("{:>12} {:>22.12e} {:>16.12}", r.n, r.success_probability, r.chsh);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_gen(kind: Kind, p: Option<f64>, seed: Option<u64>, env_dim: usize, abcd: [Option<f64>; 4], out: &Path) -> CliResult {
    let need = |v: Option<f64>, flag: &str| v.ok_or_else(|| Failure::Usage(format!("{flag} is required for this kind")));
    let usage = |e: Error| Failure::Usage(e.to_string());
    let state = match kind {
        Kind::Werner => {
            let p = need(p, "-p")?;
            if !(0.0..=1.0).contains(&p) {
                return Err(Failure::Usage(format!("-p must lie in [0, 1], got {p}")));
            }
            TwoQubitState::werner(p).map_err(usage)?
        }
        Kind::Pure => {
            let seed = seed.ok_or_else(|| Failure::Usage("--seed is required for this kind".into()))?;
            random_pure_state(&SeedStream::new(seed))
        }
        Kind::Choi => {
            let seed = seed.ok_or_else(|| Failure::Usage("--seed is required for this kind".into()))?;
            if !(1..=64).contains(&env_dim) {
                return Err(Failure::Usage(format!("--env-dim must lie in 1..=64, got {env_dim}")));
            }
            random_channel_choi(&SeedStream::new(seed), env_dim)
        }
        Kind::Eq7 => {
            let [a, b, c, d] = [need(abcd[0], "-a")?, need(abcd[1], "-b")?, need(abcd[2], "-c")?, need(abcd[3], "-d")?];
            normal_form_state(a, b, c, d).map_err(usage)?
        }
    };
    write_state(out, &state)?;
    Ok(ExitCode::SUCCESS)
}
