use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dif::baselines::ReductionParams;
use dif::cli::{self, Algorithm, RunConfig, Scenario, ScoreFormat, Suite};
use dif::data::{adjust_contamination, load_csv, parse_csv, write_csv, CsvOptions};
use dif::error::{Error, Result};
use dif::math::Matrix;
use dif::scoring::{provenance_comment, ScoreMode};

#[derive(Parser)]
#[command(name = "dif", version, about = "Deep isolation forest anomaly detection")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Key-value config file; flags override its entries.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "DIF_THREADS")]
    threads: Option<usize>,
    /// dif, iforest or eif.
    #[arg(long, global = true)]
    algo: Option<String>,
    /// Number of representations.
    #[arg(long, global = true)]
    r: Option<String>,
    /// Trees per representation.
    #[arg(long, global = true)]
    t: Option<String>,
    /// Subsample size.
    #[arg(long, global = true)]
    n: Option<String>,
    /// Depth limit, or `auto`.
    #[arg(long, global = true)]
    depth: Option<String>,
    /// Hidden widths: comma list, `none` or `auto`.
    #[arg(long, global = true)]
    hidden: Option<String>,
    #[arg(long, global = true)]
    out_dim: Option<String>,
    /// tanh, relu or leaky-relu[:slope].
    #[arg(long, global = true)]
    activation: Option<String>,
    #[arg(long, global = true)]
    batch: Option<String>,
    /// Tree count of the baselines.
    #[arg(long, global = true)]
    trees: Option<String>,
    /// deas or path-only.
    #[arg(long, global = true)]
    mode: Option<String>,
    /// Name of the label column in input CSVs.
    #[arg(long, global = true)]
    label_col: Option<String>,
    /// Output path (default: standard output where that makes sense).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

impl Global {
    fn run_config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        let flags = [
            ("algo", &self.algo),
            ("r", &self.r),
            ("t", &self.t),
            ("n", &self.n),
            ("depth", &self.depth),
            ("hidden", &self.hidden),
            ("out_dim", &self.out_dim),
            ("activation", &self.activation),
            ("batch", &self.batch),
            ("mode", &self.mode),
            ("trees", &self.trees),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        Ok(cfg)
    }

    fn csv_options(&self) -> CsvOptions {
        CsvOptions {
            label_column: self.label_col.clone(),
            ..CsvOptions::default()
        }
    }

    fn out(&self) -> Option<&Path> {
        self.out.as_deref()
    }

    fn require_out(&self, what: &str) -> Result<&Path> {
        self.out().ok_or_else(|| Error::Config(format!("{what} needs --out")))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model on a CSV file and write the model file to --out.
    Fit {
        train: PathBuf,
    },
    /// Score a CSV file with a fitted model.
    Score {
        model: PathBuf,
        test: PathBuf,
        /// csv or jsonl.
        #[arg(long, default_value = "csv")]
        format: String,
        /// Also write one representation member of the test data here.
        #[arg(long)]
        dump_rep: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        member: usize,
    },
    /// AUC-ROC, AUC-PR and optionally AII of a scores file.
    Eval {
        scores: PathBuf,
        /// CSV holding the label column (--label-col, default `label`).
        labels: PathBuf,
        /// Representation dump from `score --dump-rep`.
        #[arg(long)]
        rep: Option<PathBuf>,
    },
    /// Run every method on a synthetic suite.
    Benchmark {
        /// ring, blobs or contamination.
        #[arg(long, default_value = "ring")]
        suite: String,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
        seeds: Vec<u64>,
        #[arg(long, value_delimiter = ',', default_value = "dif,iforest,eif")]
        methods: Vec<String>,
    },
    /// Score a lattice around a generated 2-D scenario.
    ScoreMap {
        /// ring, single-blob, two-blob or sinusoid.
        #[arg(long, default_value = "ring")]
        scenario: String,
        #[arg(long, default_value_t = 100)]
        resolution: usize,
    },
    /// Check the iForest and EIF reductions.
    Verify {
        /// Dataset to check; ring, two-blob and sinusoid are generated otherwise.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Trees grown on each side of the comparison.
        #[arg(long, default_value_t = 100)]
        reduction_trees: usize,
        /// Shift one baseline split so the check must fail.
        #[arg(long)]
        corrupt: bool,
    },
    /// Time fitting over a grid of sizes and dimensions.
    Scaling {
        #[arg(long, value_delimiter = ',', default_value = "1000,2000,4000,8000")]
        sizes: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "16,64,256,1024")]
        dims: Vec<usize>,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
    },
    /// Write a synthetic dataset as CSV with a `label` column.
    Generate {
        /// ring, single-blob, two-blob or sinusoid.
        #[arg(long, default_value = "ring")]
        scenario: String,
        #[arg(long)]
        n_normal: Option<usize>,
        #[arg(long)]
        n_anomaly: Option<usize>,
        /// Blob spread or sinusoid noise.
        #[arg(long)]
        noise: Option<f64>,
        #[arg(long)]
        radius: Option<f64>,
        #[arg(long)]
        thickness: Option<f64>,
        #[arg(long)]
        anomaly_radius: Option<f64>,
        /// Resample to this anomaly ratio.
        #[arg(long)]
        contamination: Option<f64>,
    },
}

fn scenario_from(
    name: &str,
    n_normal: Option<usize>,
    n_anomaly: Option<usize>,
    noise: Option<f64>,
    ring: (Option<f64>, Option<f64>, Option<f64>),
) -> Result<Scenario> {
    Ok(match Scenario::by_name(name)? {
        Scenario::Ring(mut p) => {
            p.n_normal = n_normal.unwrap_or(p.n_normal);
            p.n_anomaly = n_anomaly.unwrap_or(p.n_anomaly);
            p.radius = ring.0.unwrap_or(p.radius);
            p.thickness = ring.1.unwrap_or(p.thickness);
            p.anomaly_radius = ring.2.unwrap_or(p.anomaly_radius);
            Scenario::Ring(p)
        }
        Scenario::Blobs {
            kind,
            n_normal: nn,
            n_anomaly: na,
            noise: ns,
        } => Scenario::Blobs {
            kind,
            n_normal: n_normal.unwrap_or(nn),
            n_anomaly: n_anomaly.unwrap_or(na),
            noise: noise.unwrap_or(ns),
        },
    })
}

fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    let config = g.run_config()?;
    cli::with_threads(g.threads, || match &cli.command {
        Command::Fit { train } => {
            let out = g.require_out("fit")?;
            let model = cli::cmd_fit(&config, train, &g.csv_options(), out)?;
            eprintln!(
                "wrote {} ({} trees, config_hash={})",
                out.display(),
                model.model.tree_count(),
                config.hash()
            );
            Ok(())
        }
        Command::Score {
            model,
            test,
            format,
            dump_rep,
            member,
        } => {
            let format: ScoreFormat = format.parse()?;
            let mode = g.mode.as_deref().map(str::parse::<ScoreMode>).transpose()?;
            let text = cli::cmd_score(model, test, &g.csv_options(), mode, format)?;
            let rep = match dump_rep {
                Some(path) => {
                    let m = cli::ModelFile::load(model)?;
                    let data = load_csv(test, &g.csv_options())?;
                    Some((path, cli::representation_csv(&m, data.values(), *member)?))
                }
                None => None,
            };
            cli::emit(g.out(), &text)?;
            if let Some((path, text)) = rep {
                std::fs::write(path, text)?;
            }
            Ok(())
        }
        Command::Eval { scores, labels, rep } => {
            let scores = std::fs::read_to_string(scores)?;
            let labels = cli::read_labels(
                &std::fs::read_to_string(labels)?,
                g.label_col.as_deref().unwrap_or("label"),
            )?;
            let rep: Option<Matrix> = match rep {
                Some(p) => Some(parse_csv(&std::fs::read_to_string(p)?, &CsvOptions::default())?.values().clone()),
                None => None,
            };
            let report = cli::cmd_eval(&scores, &labels, rep.as_ref(), config.seed)?;
            cli::emit(g.out(), &cli::to_json(&report))
        }
        Command::Benchmark { suite, seeds, methods } => {
            let suite: Suite = suite.parse()?;
            let methods = methods.iter().map(|m| m.parse()).collect::<Result<Vec<Algorithm>>>()?;
            let report = cli::cmd_benchmark(&config, suite, seeds, &methods)?;
            cli::emit(g.out(), &cli::to_json(&report))
        }
        Command::ScoreMap { scenario, resolution } => {
            let out = g.require_out("score-map")?;
            let scenario = Scenario::by_name(scenario)?;
            let (map, meta) = cli::cmd_score_map(&config, &scenario, *resolution)?;
            let mut buf = Vec::new();
            map.write_csv(&mut buf, &provenance_comment(&meta.config_hash, meta.seed))?;
            std::fs::write(out, buf)?;
            std::fs::write(out.with_extension("json"), cli::to_json(&meta))?;
            Ok(())
        }
        Command::Verify {
            data,
            reduction_trees,
            corrupt,
        } => {
            let datasets = match data {
                Some(p) => vec![load_csv(p, &g.csv_options())?],
                None => cli::default_verify_datasets(config.seed)?,
            };
            let params = ReductionParams {
                n_trees: *reduction_trees,
                subsample_size: config.n,
            };
            let report = cli::cmd_verify(&datasets, config.seed, params, *corrupt)?;
            cli::emit(g.out(), &cli::to_json(&report))?;
            if report.passed {
                Ok(())
            } else {
                Err(Error::Verification(format!(
                    "iforest_max_diff={} eif_predicate_agreement={}",
                    report.iforest_max_diff, report.eif_predicate_agreement
                )))
            }
        }
        Command::Scaling { sizes, dims, repeats } => {
            let report = cli::cmd_scaling(&config, sizes, dims, *repeats)?;
            cli::emit(g.out(), &cli::to_json(&report))
        }
        Command::Generate {
            scenario,
            n_normal,
            n_anomaly,
            noise,
            radius,
            thickness,
            anomaly_radius,
            contamination,
        } => {
            let scenario = scenario_from(
                scenario,
                *n_normal,
                *n_anomaly,
                *noise,
                (*radius, *thickness, *anomaly_radius),
            )?;
            let mut data = scenario.generate(config.seed)?;
            if let Some(rho) = contamination {
                data = adjust_contamination(&data, *rho, config.seed)?;
            }
            let mut buf = (provenance_comment(&config.hash(), config.seed) + "\n").into_bytes();
            write_csv(&data, &mut buf)?;
            std::fs::write(g.require_out("generate")?, buf)?;
            Ok(())
        }
    })?
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
