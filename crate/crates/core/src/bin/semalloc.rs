use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use semalloc::baselines::{run_methods, Method};
use semalloc::compression::{train_dqn, ActionCatalog, StateSampler};
use semalloc::harness::{
    load_tables, run_experiment, write_outputs, write_results_csv, ExperimentId, ExperimentPlan, ResultsRow, RunConfig,
    Toolkit,
};
use semalloc::matching::{write_trace_csv, Matching};
use semalloc::netmodel::{generate_scenario, Scenario};
use semalloc::semantics::{approx_semantic_entropy, fit_fidelity, FitConfig, FitReport, TaskKind};
use semalloc::solution::{audit_constraints, evaluate, AuditReport, KPolicy, Solution, Violation};
use semalloc::Error;

#[derive(Parser)]
#[command(name = "semalloc", version, about = "Semantic-aware multi-cell resource allocation")]
struct Cli {
    /// Master seed; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// TOML or JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Single,
    Bimodal,
}

impl From<Kind> for TaskKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Single => TaskKind::SingleText,
            Kind::Bimodal => TaskKind::BimodalVqa,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write a seeded scenario as JSON.
    GenScenario {
        /// Make half of each user type conventional.
        #[arg(long)]
        coexistence: bool,
    },
    /// Write the synthetic fidelity tables as CSV.
    SynthTable,
    /// Fit the fidelity MLPs and write their loss curves.
    FitFidelity,
    /// Print the approximate semantic entropies.
    Entropy,
    /// Train a DQN compression policy.
    TrainPolicy {
        #[arg(long, value_enum)]
        kind: Kind,
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Run one method on one scenario.
    Solve {
        /// Scenario JSON; generated from the seed when absent.
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// proposed, random, sum_sr_max, conventional_k<k>, conventional_opt_k or no_coop.
        #[arg(long, default_value = "proposed")]
        method: String,
    },
    /// Run a Monte Carlo experiment.
    Experiment {
        /// fit, g_th_sweep, algo_compare, conventional_compare, cooperation,
        /// settings_sweep, coexistence_qoe or coexistence_sr.
        id: String,
        /// Monte Carlo drops per sweep value; overrides the config file.
        #[arg(long)]
        drops: Option<usize>,
    },
    /// Print the effective configuration as TOML.
    PrintConfig,
    /// Check a solution or matching against the constraints.
    Audit {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, conflicts_with = "matching", required_unless_present = "matching")]
        solution: Option<PathBuf>,
        #[arg(long)]
        matching: Option<PathBuf>,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Toml(_) | Error::Json(_) | Error::Schema { .. } | Error::Table(_) => 2,
        Error::Audit(_) => 3,
        _ => 1,
    }
}

fn write(path: &Path, text: &str) -> semalloc::Result<()> {
    fs::write(path, text)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn load_scenario(path: &Path) -> semalloc::Result<Scenario> {
    Scenario::from_json(&fs::read_to_string(path)?)
}

fn report_audit(report: &AuditReport) -> semalloc::Result<()> {
    if report.is_clean() {
        println!("audit: clean");
        return Ok(());
    }
    for v in &report.violations {
        println!("{}: {}", v.constraint, v.detail);
    }
    Err(Error::Audit(format!("{} violation(s)", report.violations.len())))
}

fn run(cli: Cli) -> semalloc::Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Command::PrintConfig = cli.command {
        print!("{}", cfg.to_toml()?);
        return Ok(());
    }
    let out = cli.out.as_path();
    fs::create_dir_all(out)?;
    match cli.command {
        Command::PrintConfig => {}
        Command::GenScenario { coexistence } => {
            let sc_cfg = if coexistence { cfg.scenario.clone().coexistence() } else { cfg.scenario.clone() };
            let scenario = generate_scenario(&sc_cfg, cfg.seed)?;
            write(&out.join("scenario.json"), &scenario.to_json()?)?;
        }
        Command::SynthTable => {
            let (s, b) = load_tables(&cfg.fidelity)?;
            for (t, name) in [(s, "single_text.csv"), (b, "bimodal_vqa.csv")] {
                let p = out.join(name);
                t.write_csv(fs::File::create(&p)?)?;
                println!("wrote {}", p.display());
            }
        }
        Command::FitFidelity => {
            let (s, b) = load_tables(&cfg.fidelity)?;
            let mut reports = Vec::new();
            for (t, kind, name) in [
                (s, TaskKind::SingleText, "model_single_text.json"),
                (b, TaskKind::BimodalVqa, "model_bimodal_vqa.json"),
            ] {
                let (model, report) = fit_fidelity(&t, &FitConfig::for_kind(kind))?;
                println!("{kind:?}: mse {:.3e} after {} epochs", report.mse, report.epochs);
                write(&out.join(name), &serde_json::to_string_pretty(&model)?)?;
                reports.push(report);
            }
            let p = out.join("fit.csv");
            FitReport::write_csv(&reports, fs::File::create(&p)?)?;
            println!("wrote {}", p.display());
        }
        Command::Entropy => {
            let (s, b) = load_tables(&cfg.fidelity)?;
            let h = approx_semantic_entropy(&s, &b, cfg.fidelity.epsilon)?;
            let text = serde_json::to_string_pretty(&h)?;
            println!("{text}");
            write(&out.join("entropy.json"), &text)?;
        }
        Command::TrainPolicy { kind, episodes } => {
            let kit = Toolkit::build(&cfg)?;
            let kind = TaskKind::from(kind);
            let mut dqn = cfg.dqn.clone();
            if let Some(n) = episodes {
                dqn.episodes = n;
            }
            if cli.seed.is_some() {
                dqn.seed = cfg.seed;
            }
            let catalog = ActionCatalog::full(&kit.models, kind);
            let (policy, log) = train_dqn(&kit.models, kind, catalog, StateSampler::default(), &dqn)?;
            if let Some(ratio) = log.rows.last().and_then(|r| r.eval_ratio) {
                println!("held-out reward ratio {ratio:.4}");
            }
            let tag = match kind {
                TaskKind::SingleText => "single",
                TaskKind::BimodalVqa => "bimodal",
            };
            write(&out.join(format!("policy_{tag}.json")), &policy.to_json()?)?;
            let p = out.join(format!("training_{tag}.csv"));
            log.write_csv(fs::File::create(&p)?)?;
            println!("wrote {}", p.display());
        }
        Command::Solve { scenario, method } => {
            let method: Method = method.parse()?;
            let scenario = match scenario {
                Some(p) => load_scenario(&p)?,
                None => generate_scenario(&cfg.scenario, cfg.seed)?,
            };
            let kit = Toolkit::build(&cfg)?;
            let run = run_methods(&[method], &scenario, kit.solvers(), cfg.matching, Default::default(), cfg.seed)?
                .pop()
                .expect("one method requested");
            write(&out.join("scenario.json"), &scenario.to_json()?)?;
            let mut row = ResultsRow {
                experiment: "solve".into(),
                method: method.name(),
                sweep_variable: "none".into(),
                sweep_value: "-".into(),
                drop_seed: cfg.seed,
                total_qoe: run.value,
                ..Default::default()
            };
            if let Some(sol) = &run.solution {
                report_audit(&audit_constraints(&scenario, &*kit.exact, sol))?;
                let served = sol.served_counts();
                row.total_sr_ksuts = sol.total_sr_ksuts;
                row.served_sem_single = served.semantic_single;
                row.served_sem_bimodal = served.semantic_bimodal;
                row.served_conv_single = served.conventional_single;
                row.served_conv_bimodal = served.conventional_bimodal;
                row.power_mw = sol.power_mw;
                write(&out.join("solution.json"), &sol.to_json()?)?;
            }
            if let Some(m) = &run.matching {
                write(&out.join("matching.json"), &m.to_json()?)?;
            }
            if let Some(t) = &run.trace {
                row.swaps = t.swaps;
                let p = out.join("trace.csv");
                write_trace_csv(t, fs::File::create(&p)?)?;
                println!("wrote {}", p.display());
            }
            let p = out.join("results.csv");
            write_results_csv(&[row], fs::File::create(&p)?)?;
            println!("wrote {}", p.display());
            println!("{method}: total QoE {:.4}", run.value);
        }
        Command::Experiment { id, drops } => {
            let id: ExperimentId = id.parse()?;
            if let Some(d) = drops {
                cfg.experiment.drops = d;
            }
            cfg.validate()?;
            let plan = ExperimentPlan::default_for(id, &cfg);
            let kit = Toolkit::build(&cfg)?;
            let output = run_experiment(&plan, &cfg, &kit)?;
            for p in write_outputs(&output, &out.join(id.as_str()))? {
                println!("wrote {}", p.display());
            }
        }
        Command::Audit { scenario, solution, matching } => {
            let scenario = load_scenario(&scenario)?;
            let kit = Toolkit::build(&cfg)?;
            let solution = match (solution, matching) {
                (Some(p), _) => Solution::from_json(&fs::read_to_string(p)?)?,
                (None, Some(p)) => {
                    let m = Matching::from_json(&fs::read_to_string(p)?)?;
                    if let Err(e) = m.check(&scenario) {
                        let constraint = if matches!(e, Error::Orthogonality { .. }) { "C2" } else { "C1" };
                        return report_audit(&AuditReport {
                            violations: vec![Violation { constraint: constraint.into(), detail: e.to_string() }],
                        });
                    }
                    evaluate(&scenario, &m, &*kit.exact, KPolicy::QoeOptimal, Default::default(), "audit")?
                }
                (None, None) => unreachable!("clap requires one of the inputs"),
            };
            report_audit(&audit_constraints(&scenario, &*kit.exact, &solution))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
