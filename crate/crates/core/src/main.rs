use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{ArgAction, Args, Parser, Subcommand};

use edbn::detect::{explain, rank_traces};
use edbn::eval::{report, LabeledScore};
use edbn::synth::{inject_anomalies, read_labels, Label, ProcessModel};
use edbn::{build_k_context, learn_edbn, parse_log, AttributeSchema, EdbnModel, EventLog, ParseOptions};

#[derive(Parser)]
#[command(name = "edbn", version, about = "Anomaly detection in event logs with extended dynamic Bayesian networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a process and optionally corrupt some traces.
    Generate(GenerateArgs),
    /// Learn a model from a log.
    Train(TrainArgs),
    /// Rank the traces of a log, most anomalous first.
    Score(ScoreArgs),
    /// Train on one log, score a labelled one and report AUC.
    Evaluate(EvaluateArgs),
    /// Write the k-context table of a log.
    Context(ContextArgs),
}

#[derive(Args)]
struct LogArgs {
    /// Delimited event log.
    #[arg(long)]
    log: PathBuf,
    /// Column holding the trace id.
    #[arg(long)]
    trace_col: Option<String>,
    /// Comma-separated attribute columns to model.
    #[arg(long, value_delimiter = ',')]
    attrs: Vec<String>,
    /// Column holding event ids (default: row index).
    #[arg(long)]
    id_col: Option<String>,
    /// Column giving the event order within a trace (default: file order).
    #[arg(long)]
    order_col: Option<String>,
    /// Field delimiter; `tab` or `\t` for tabs.
    #[arg(long, default_value = ",")]
    delimiter: String,
    /// Whether the first row names the columns; without one, columns are
    /// named 1, 2, ...
    #[arg(long, default_value_t = true, action = ArgAction::Set)]
    header: bool,
}

#[derive(Args)]
struct GenerateArgs {
    /// Output log.
    #[arg(long)]
    out: PathBuf,
    /// Output labels file.
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    n_traces: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Share of traces to corrupt.
    #[arg(long, default_value_t = 0.0)]
    fraction: f64,
    /// Process model JSON (default: built-in shipping process).
    #[arg(long)]
    process: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    input: LogArgs,
    /// Where to write the model.
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = 1)]
    k: usize,
    #[arg(long, default_value_t = edbn::fd::DEFAULT_FD_THRESHOLD)]
    fd_threshold: f64,
}

#[derive(Args)]
struct ScoreArgs {
    #[command(flatten)]
    input: LogArgs,
    #[arg(long)]
    model: PathBuf,
    /// Score CSV (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print the N smallest factors of each of the top traces.
    #[arg(long)]
    explain: Option<usize>,
    /// How many traces to explain.
    #[arg(long, default_value_t = 10)]
    top: usize,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Labelled log to score.
    #[command(flatten)]
    input: LogArgs,
    /// Training log, read with the same column options.
    #[arg(long)]
    train: PathBuf,
    /// Labels CSV: trace_id,label.
    #[arg(long)]
    labels: PathBuf,
    #[arg(long, default_value_t = 1)]
    k: usize,
    #[arg(long, default_value_t = edbn::fd::DEFAULT_FD_THRESHOLD)]
    fd_threshold: f64,
    /// Precision/recall curve CSV.
    #[arg(long)]
    curve: Option<PathBuf>,
}

#[derive(Args)]
struct ContextArgs {
    #[command(flatten)]
    input: LogArgs,
    #[arg(long, default_value_t = 1)]
    k: usize,
    /// Output CSV (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn delimiter(text: &str) -> Result<u8> {
    match text {
        "tab" | "\\t" | "\t" => Ok(b'\t'),
        s if s.len() == 1 => Ok(s.as_bytes()[0]),
        s => bail!("delimiter must be a single byte, got `{s}`"),
    }
}

impl LogArgs {
    fn options(&self) -> Result<ParseOptions> {
        Ok(ParseOptions { delimiter: delimiter(&self.delimiter)?, has_header: self.header })
    }

    /// Columns from the flags, falling back to `base` (a model's schema).
    fn schema(&self, base: Option<&AttributeSchema>) -> Result<AttributeSchema> {
        let trace = match (&self.trace_col, base) {
            (Some(t), _) => t.clone(),
            (None, Some(b)) => b.trace_id_column().to_string(),
            (None, None) => bail!("--trace-col is required"),
        };
        let attrs = match (self.attrs.is_empty(), base) {
            (false, _) => self.attrs.clone(),
            (true, Some(b)) => b.names().to_vec(),
            (true, None) => bail!("--attrs is required"),
        };
        let mut schema = AttributeSchema::new(attrs, trace)?;
        let id = self.id_col.as_deref().or(base.and_then(|b| b.event_id_column()));
        if let Some(c) = id {
            schema = schema.with_event_id_column(c)?;
        }
        let order = self.order_col.as_deref().or(base.and_then(|b| b.event_order_column()));
        if let Some(c) = order {
            schema = schema.with_order_column(c)?;
        }
        Ok(schema)
    }

    fn read_from(&self, path: &Path, schema: &AttributeSchema) -> Result<EventLog> {
        let file = File::open(path).with_context(|| format!("opening log {}", path.display()))?;
        parse_log(BufReader::new(file), schema, self.options()?).with_context(|| format!("parsing log {}", path.display()))
    }

    fn read(&self, fallback: Option<&AttributeSchema>) -> Result<EventLog> {
        let schema = self.schema(fallback).context("building the attribute schema")?;
        self.read_from(&self.log, &schema)
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn generate(args: GenerateArgs) -> Result<()> {
    let process = match &args.process {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            ProcessModel::from_json(&text).context("loading the process model")?
        }
        None => ProcessModel::shipping(),
    };
    let clean = process.generate(args.n_traces, args.seed).context("generating traces")?;
    let labeled = inject_anomalies(&clean, args.fraction, args.seed).context("injecting anomalies")?;
    let mut out = create(&args.out)?;
    edbn::event_log::write_log(&labeled.log, &mut out, b',').context("writing the log")?;
    out.flush()?;
    if let Some(path) = &args.labels {
        let mut w = create(path)?;
        labeled.write_labels(&mut w).context("writing labels")?;
        w.flush()?;
    }
    eprintln!(
        "wrote {} traces ({} events, {} anomalous) to {}",
        labeled.log.traces().len(),
        labeled.log.event_count(),
        labeled.anomalous_count(),
        args.out.display()
    );
    Ok(())
}

fn print_model(model: &EdbnModel, mut out: impl Write) -> io::Result<()> {
    let names = model.schema().names();
    writeln!(out, "k = {}, {} training events", model.k(), model.training_event_count())?;
    writeln!(out, "functional dependencies:")?;
    for fd in model.fd_mappings() {
        writeln!(
            out,
            "  {} -> {}  U={:.4}  violations={}",
            model.var_name(fd.edge.source),
            model.var_name(fd.edge.target_var()),
            fd.edge.strength,
            fd.violation
        )?;
    }
    writeln!(out, "conditional parents:")?;
    for cpt in model.cpts().iter().filter(|c| c.has_parents()) {
        let parents: Vec<String> = cpt.parents.iter().map(|p| model.var_name(*p)).collect();
        writeln!(out, "  {}_0 <- {}", names[cpt.child], parents.join(", "))?;
    }
    writeln!(out, "new value / new relation rates:")?;
    for (i, name) in names.iter().enumerate() {
        writeln!(out, "  {name}: {:.6} / {:.6}", model.new_value(i).value(), model.new_relation(i).value())?;
    }
    Ok(())
}

fn train(args: TrainArgs) -> Result<()> {
    let log = args.input.read(None)?;
    let model = learn_edbn(&log, args.k, args.fd_threshold).context("learning the model")?;
    let mut w = create(&args.model)?;
    model.save(&mut w).context("writing the model")?;
    w.flush()?;
    print_model(&model, io::stdout().lock())?;
    Ok(())
}

fn load_model(path: &Path) -> Result<EdbnModel> {
    let file = File::open(path).with_context(|| format!("opening model {}", path.display()))?;
    EdbnModel::load(BufReader::new(file)).with_context(|| format!("loading model {}", path.display()))
}

fn score(args: ScoreArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let log = args.input.read(Some(model.schema()))?;
    let ranking = rank_traces(&model, &log).context("scoring traces")?;
    let mut out = output(args.out.as_deref())?;
    writeln!(out, "trace_id,score,log_score,event_count,zero_factors")?;
    for s in &ranking.scores {
        writeln!(out, "{},{:e},{},{},{}", s.trace_id, s.score, s.log_score, s.event_count, s.zero_factors)?;
    }
    out.flush()?;
    drop(out);
    let Some(n) = args.explain else { return Ok(()) };
    let mut out = io::stdout().lock();
    if args.out.is_none() {
        writeln!(out)?;
    }
    for s in ranking.scores.iter().take(args.top) {
        writeln!(out, "trace {} (score {:e})", s.trace_id, s.score)?;
        for e in explain(s, n).context("explaining scores")? {
            let (attr, source) = e.describe(model.schema());
            let from = if source.is_empty() { String::new() } else { format!(" from {source}") };
            writeln!(out, "  event {} {attr} {}{from}: {:e}", e.event_id, e.kind.label(), e.contribution)?;
        }
    }
    Ok(())
}

fn evaluate(args: EvaluateArgs) -> Result<()> {
    let schema = args.input.schema(None).context("building the attribute schema")?;
    let train = args.input.read_from(&args.train, &schema)?;
    let test = args.input.read_from(&args.input.log, &schema)?;
    let labels_file = File::open(&args.labels).with_context(|| format!("opening labels {}", args.labels.display()))?;
    let labels = read_labels(BufReader::new(labels_file)).context("parsing labels")?;
    let model = learn_edbn(&train, args.k, args.fd_threshold).context("learning the model")?;
    let ranking = rank_traces(&model, &test).context("scoring traces")?;
    let scores = ranking
        .scores
        .iter()
        .map(|s| {
            let label = labels.get(&s.trace_id).with_context(|| format!("trace `{}` has no label", s.trace_id))?;
            Ok(LabeledScore { trace_id: s.trace_id.clone(), score: s.score, anomalous: *label == Label::Anomalous })
        })
        .collect::<Result<Vec<_>>>()?;
    let result = report(scores).context("evaluating")?;
    result.write_summary(io::stdout().lock())?;
    if let Some(path) = &args.curve {
        let mut w = create(path)?;
        result.write_curve(&mut w)?;
        w.flush()?;
    }
    Ok(())
}

fn context(args: ContextArgs) -> Result<()> {
    let log = args.input.read(None)?;
    let ctx = build_k_context(&log, args.k).context("building the k-context")?;
    let mut out = output(args.out.as_deref())?;
    ctx.write(&mut out, args.input.options()?.delimiter).context("writing the k-context")?;
    out.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    let result = match Cli::parse().command {
        Command::Generate(a) => generate(a),
        Command::Train(a) => train(a),
        Command::Score(a) => score(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Context(a) => context(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
