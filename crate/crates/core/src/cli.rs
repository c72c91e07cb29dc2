//! Command-line entry point.
//!
//! One binary, subcommand style. A JSON config file (via `--config` or the
//! `ATTACK_FORECAST_CONFIG` environment variable) supplies defaults; flags
//! win over config values. Exit codes: 0 success, 1 validation or runtime
//! failure (with a machine-parseable `error: ...` line on stderr), 2 usage.

use crate::align::{align, interpret, AlignmentConfig};
use crate::asg::{build_asg, parse_report, CorefConfig, VerbLexicon, DEFAULT_MIN_NODES};
use crate::atg::{load_templates, synthesize_corpus, template_stats, AtgTemplate, CorpusSpec, SpliceRule};
use crate::error::{Error, Result};
use crate::eval::{
    dispatch, perturbation_study, reconstruction_experiment, reconstruction_summary, study_table,
    ReconstructionConfig, DEFAULT_MAX_DELETIONS,
};
use crate::graph::{export_dot, read_graph, to_sequence, write_graph, AttackGraph, SequenceEncoding};
use crate::model::{
    forecast, load_model, save_model, train, ModelConfig, StopCriterion, DEFAULT_STEP_BUDGET,
};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

pub const CONFIG_ENV: &str = "ATTACK_FORECAST_CONFIG";

#[derive(Debug, Parser)]
#[command(
    name = "attack-forecast",
    version,
    about = "Attack graph forecasting and technique-level interpretation toolkit"
)]
struct Cli {
    /// JSON config file with defaults; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build an attack scene graph from an annotated-sentence report.
    BuildAsg {
        /// Report file: a JSON array of annotated sentences.
        #[arg(long)]
        report: PathBuf,
        /// Verb lexicon file; defaults to the bundled lexicon.
        #[arg(long)]
        lexicon: Option<PathBuf>,
        /// Minimum unified entities worth keeping.
        #[arg(long)]
        min_nodes: Option<usize>,
        /// Output graph file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Load, validate, and summarize a template directory.
    Templates {
        #[arg(long)]
        templates: Option<PathBuf>,
        /// Print aggregate statistics as JSON.
        #[arg(long)]
        stats: bool,
    },
    /// Synthesize a training corpus by splicing templates.
    Synth {
        #[arg(long)]
        templates: Option<PathBuf>,
        /// Output directory for graph files plus a manifest.tsv.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 50)]
        count: usize,
        #[arg(long, default_value_t = 1)]
        chain_min: usize,
        #[arg(long, default_value_t = 3)]
        chain_max: usize,
        /// Splice rule: share-root-process or sequential-taint.
        #[arg(long, default_value = "share-root-process")]
        splice: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train the forecast model on a directory of graph files.
    Train {
        #[arg(long)]
        corpus: PathBuf,
        /// Output checkpoint file.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        window: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Extend a provenance graph into a forecast graph.
    Forecast {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        apg: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        budget: Option<usize>,
        /// Template directory; enables the matched-technique stop criterion.
        #[arg(long)]
        templates: Option<PathBuf>,
        /// Print reinforcement rules for the forecast edges.
        #[arg(long)]
        dispatch: bool,
    },
    /// Align a query graph against a host graph.
    Align {
        #[arg(long)]
        query: PathBuf,
        #[arg(long)]
        host: PathBuf,
        #[command(flatten)]
        align_args: AlignArgs,
    },
    /// Report techniques whose templates align into a graph.
    Interpret {
        #[arg(long)]
        afg: PathBuf,
        #[arg(long)]
        templates: Option<PathBuf>,
        #[command(flatten)]
        align_args: AlignArgs,
    },
    /// Run an experiment.
    #[command(subcommand)]
    Evaluate(EvaluateCommand),
    /// Render a graph file as DOT.
    ExportDot {
        #[arg(long)]
        graph: PathBuf,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
enum EvaluateCommand {
    /// Alignment score vs. structural modification, averaged over seeds.
    PerturbationStudy {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = 3)]
        max_count: usize,
        /// Comma-separated perturbation seeds.
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
        seeds: Vec<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        align_args: AlignArgs,
    },
    /// Break graphs, forecast them back, and score the reconstruction.
    Reconstruction {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        templates: Option<PathBuf>,
        #[arg(long)]
        budget: Option<usize>,
        #[arg(long)]
        max_del: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        align_args: AlignArgs,
    },
}

#[derive(Debug, Args)]
struct AlignArgs {
    /// Minimum node score required to fix a candidate.
    #[arg(long)]
    fix_threshold: Option<f64>,
    /// Interpretation threshold.
    #[arg(long)]
    threshold: Option<f64>,
    /// Cap on multi-hop realization length.
    #[arg(long)]
    max_hops: Option<usize>,
}

/// Optional defaults loaded from the config file.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    templates: Option<PathBuf>,
    fix_threshold: Option<f64>,
    interpret_threshold: Option<f64>,
    max_hops: Option<usize>,
    window: Option<usize>,
    epochs: Option<usize>,
    batch_size: Option<usize>,
    learning_rate: Option<f64>,
    budget: Option<usize>,
    min_nodes: Option<usize>,
    coref: Option<CorefConfig>,
}

impl FileConfig {
    fn load(explicit: Option<&Path>) -> Result<Self> {
        let path = match explicit {
            Some(p) => Some(p.to_path_buf()),
            None => std::env::var_os(CONFIG_ENV).map(PathBuf::from),
        };
        match path {
            Some(p) => Ok(serde_json::from_str(&std::fs::read_to_string(&p).map_err(
                |e| Error::invalid_input(format!("config {}: {e}", p.display())),
            )?)?),
            None => Ok(FileConfig::default()),
        }
    }

    fn align_cfg(&self, args: &AlignArgs) -> AlignmentConfig {
        let base = AlignmentConfig::default();
        AlignmentConfig {
            fix_threshold: args.fix_threshold.or(self.fix_threshold).unwrap_or(base.fix_threshold),
            interpret_threshold: args
                .threshold
                .or(self.interpret_threshold)
                .unwrap_or(base.interpret_threshold),
            max_hops: args.max_hops.or(self.max_hops).unwrap_or(base.max_hops),
        }
    }

    fn templates_dir(&self, flag: Option<PathBuf>) -> Result<PathBuf> {
        flag.or_else(|| self.templates.clone()).ok_or_else(|| {
            Error::invalid_input("no template directory: pass --templates or set it in the config")
        })
    }
}

fn load_template_dir(dir: &Path) -> Result<Vec<AtgTemplate>> {
    let (templates, diagnostics) = load_templates(dir)?;
    for d in diagnostics {
        eprintln!("warning: {d}");
    }
    Ok(templates)
}

/// Loads every `*.json` graph in a directory, sorted by file name.
fn load_graph_dir(dir: &Path) -> Result<Vec<AttackGraph>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json") && !p.ends_with("manifest.tsv"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::invalid_input(format!(
            "no graph files in {}",
            dir.display()
        )));
    }
    paths.iter().map(|p| read_graph(p)).collect()
}

/// Parses argv and runs the selected subcommand, returning the process exit
/// code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    let cfg = FileConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::BuildAsg {
            report,
            lexicon,
            min_nodes,
            out,
        } => {
            let sentences = parse_report(&std::fs::read_to_string(&report)?)?;
            let lexicon = match lexicon {
                Some(p) => VerbLexicon::parse(&std::fs::read_to_string(&p)?)?,
                None => VerbLexicon::bundled(),
            };
            let coref = cfg.coref.clone().unwrap_or_default();
            let min_nodes = min_nodes.or(cfg.min_nodes).unwrap_or(DEFAULT_MIN_NODES);
            let provenance = report.display().to_string();
            let build = build_asg(&sentences, &lexicon, &coref, min_nodes, &provenance)?;
            for d in &build.diagnostics {
                eprintln!("warning: {d}");
            }
            let graph = build.graph.ok_or_else(|| {
                Error::invalid_input(format!("report yields fewer than {min_nodes} entities"))
            })?;
            write_graph(&graph, &out)?;
            println!(
                "asg\t{}\tnodes\t{}\tedges\t{}",
                out.display(),
                graph.node_count(),
                graph.edge_count()
            );
        }
        Command::Templates { templates, stats } => {
            let dir = cfg.templates_dir(templates)?;
            let list = load_template_dir(&dir)?;
            for t in &list {
                println!(
                    "{}\t{}\tnodes\t{}\tedges\t{}",
                    t.technique_id,
                    t.tactic,
                    t.graph.node_count(),
                    t.graph.edge_count()
                );
            }
            if stats {
                let s = template_stats(&list)?;
                println!("{}", serde_json::to_string_pretty(&s).expect("stats serialize"));
            }
        }
        Command::Synth {
            templates,
            out,
            count,
            chain_min,
            chain_max,
            splice,
            seed,
        } => {
            let dir = cfg.templates_dir(templates)?;
            let list = load_template_dir(&dir)?;
            let splice: SpliceRule =
                serde_json::from_value(serde_json::Value::String(splice.clone()))
                    .map_err(|_| Error::invalid_input(format!("unknown splice rule {splice:?}")))?;
            let spec = CorpusSpec {
                chain_min,
                chain_max,
                splice,
                count,
                seed,
            };
            let corpus = synthesize_corpus(&list, &spec)?;
            std::fs::create_dir_all(&out)?;
            let mut manifest = String::from("file\ttechniques\n");
            for (i, sg) in corpus.iter().enumerate() {
                let name = format!("synth_{i:04}.json");
                write_graph(&sg.graph, &out.join(&name))?;
                manifest.push_str(&format!("{name}\t{}\n", sg.techniques.join(",")));
            }
            std::fs::write(out.join("manifest.tsv"), manifest)?;
            println!("synthesized\t{}\tinto\t{}", corpus.len(), out.display());
        }
        Command::Train {
            corpus,
            out,
            window,
            epochs,
            batch_size,
            learning_rate,
            seed,
        } => {
            let base = ModelConfig::default();
            let model_cfg = ModelConfig {
                window: window.or(cfg.window).unwrap_or(base.window),
                epochs: epochs.or(cfg.epochs).unwrap_or(base.epochs),
                batch_size: batch_size.or(cfg.batch_size).unwrap_or(base.batch_size),
                learning_rate: learning_rate
                    .or(cfg.learning_rate)
                    .unwrap_or(base.learning_rate),
                seed: seed.unwrap_or(base.seed),
                ..base
            };
            let graphs = load_graph_dir(&corpus)?;
            let encodings: Vec<SequenceEncoding> = graphs
                .iter()
                .map(|g| to_sequence(g, model_cfg.window))
                .collect();
            let (model, report) = train::<f64>(&encodings, &model_cfg)?;
            save_model(&model, &out)?;
            print!("{}", report.to_table());
            println!("checkpoint\t{}", out.display());
        }
        Command::Forecast {
            model,
            apg,
            out,
            budget,
            templates,
            dispatch: want_rules,
        } => {
            let model = load_model::<f64>(&model)?;
            let graph = read_graph(&apg)?;
            let budget = budget.or(cfg.budget).unwrap_or(DEFAULT_STEP_BUDGET);
            let stop = match templates {
                Some(dir) => StopCriterion::AtgGain {
                    templates: load_template_dir(&dir)?,
                    align_cfg: cfg.align_cfg(&AlignArgs {
                        fix_threshold: None,
                        threshold: None,
                        max_hops: None,
                    }),
                },
                None => StopCriterion::Budget,
            };
            let outcome = forecast(&model, &graph, &stop, budget)?;
            for d in &outcome.diagnostics {
                eprintln!("warning: {d}");
            }
            write_graph(&outcome.graph, &out)?;
            println!(
                "afg\t{}\tsteps\t{}\treason\t{:?}",
                out.display(),
                outcome.steps,
                outcome.reason
            );
            if want_rules {
                for r in dispatch(&outcome.graph) {
                    println!("{}", serde_json::to_string(&r).expect("rule serializes"));
                }
            }
        }
        Command::Align {
            query,
            host,
            align_args,
        } => {
            let gq = read_graph(&query)?;
            let gp = read_graph(&host)?;
            let r = align(&gq, &gp, &cfg.align_cfg(&align_args))?;
            println!("score\t{:.4}", r.score);
            println!("flows\t{}/{}", r.matched_flows, r.total_flows);
            for (q, h) in &r.fixed {
                println!("map\t{q}\t{h}");
            }
        }
        Command::Interpret {
            afg,
            templates,
            align_args,
        } => {
            let dir = cfg.templates_dir(templates)?;
            let list = load_template_dir(&dir)?;
            let graph = read_graph(&afg)?;
            for (technique, score) in interpret(&graph, &list, &cfg.align_cfg(&align_args))? {
                println!("{technique}\t{score:.4}");
            }
        }
        Command::Evaluate(EvaluateCommand::PerturbationStudy {
            corpus,
            max_count,
            seeds,
            out,
            align_args,
        }) => {
            let graphs = load_graph_dir(&corpus)?;
            let rows = perturbation_study(&graphs, max_count, &seeds, &cfg.align_cfg(&align_args))?;
            let table = study_table(&rows);
            match out {
                Some(p) => {
                    std::fs::write(&p, &table)?;
                    println!("study\t{}", p.display());
                }
                None => print!("{table}"),
            }
        }
        Command::Evaluate(EvaluateCommand::Reconstruction {
            model,
            corpus,
            templates,
            budget,
            max_del,
            out,
            align_args,
        }) => {
            let model = load_model::<f64>(&model)?;
            let graphs = load_graph_dir(&corpus)?;
            let dir = cfg.templates_dir(templates)?;
            let list = load_template_dir(&dir)?;
            let rc = ReconstructionConfig {
                align: cfg.align_cfg(&align_args),
                budget: budget.or(cfg.budget).unwrap_or(DEFAULT_STEP_BUDGET),
                max_del: max_del.unwrap_or(DEFAULT_MAX_DELETIONS),
            };
            let report = reconstruction_experiment(&model, &graphs, &list, &rc)?;
            for d in &report.diagnostics {
                eprintln!("warning: {d}");
            }
            let mut table = String::from(
                "graph\tdeleted\tbroken_score\tafg_score\ttruth\tbroken\tafg\tgen_nodes\tgen_edges\n",
            );
            for r in &report.records {
                table.push_str(&format!(
                    "{}\t{}\t{:.4}\t{:.4}\t{}\t{}\t{}\t{}\t{}\n",
                    r.graph_id,
                    r.deleted,
                    r.broken_score,
                    r.afg_score,
                    r.truth.join(","),
                    r.broken_techniques.join(","),
                    r.afg_techniques.join(","),
                    r.generated_nodes,
                    r.generated_edges
                ));
            }
            match out {
                Some(p) => {
                    std::fs::write(&p, &table)?;
                    println!("records\t{}", p.display());
                }
                None => print!("{table}"),
            }
            for s in reconstruction_summary(&report.records) {
                println!(
                    "summary\tdeleted\t{}\tbroken\t{:.4}\tafg\t{:.4}\trecords\t{}",
                    s.deleted, s.mean_broken_score, s.mean_afg_score, s.records
                );
            }
        }
        Command::ExportDot { graph, out } => {
            let g = read_graph(&graph)?;
            let dot = export_dot(&g);
            match out {
                Some(p) => {
                    std::fs::write(&p, &dot)?;
                    println!("dot\t{}", p.display());
                }
                None => print!("{dot}"),
            }
        }
    }
    Ok(())
}
