//! `vertlabel`: label vertebra chains, evaluate labellings, generate synthetic
//! corpora and run parameter sweeps.
//!
//! Batch files hold one JSON document per line. Exit codes: 0 success,
//! 1 usage, 2 data error, 3 internal error.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use vertlabel::classifier_io::peek_subject_id;
use vertlabel::metrics::CSV_HEADER;
use vertlabel::sweep::{run_sweep, sweep_csv, SweepKind, SweepSpec};
use vertlabel::synthgen::{generate_corpus, inject_gap, FovMode, NoiseConfig, SynthConfig};
use vertlabel::{
    parse_subject, solve_subject, subject_to_json, Config, EvalReport, FinalLabel, Labeling,
    Normalization, RawLabel, SolveError, Subject,
};

#[derive(Parser)]
#[command(
    name = "vertlabel",
    version,
    about = "Anatomically constrained vertebra labelling"
)]
struct Cli {
    /// Worker threads; 0 uses one per core. Results do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Label every subject of a batch file.
    Label {
        /// Subject batch, or `-` for stdin.
        input: PathBuf,
        /// Result file; stdout when omitted.
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        norm: NormArgs,
    },
    /// Compare predicted labels with reference labels.
    Eval {
        /// Label results (`labels`) or subject documents (`reference_labels`).
        predictions: PathBuf,
        /// Documents carrying `reference_labels` or `labels`.
        references: PathBuf,
        /// Value written in the `param` column of the CSV row.
        #[arg(long, default_value = "baseline")]
        param: String,
        /// Also write header and row to this CSV file.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Generate a synthetic corpus with classifier outputs and references.
    Synth {
        #[arg(short, long)]
        output: PathBuf,
        /// Manifest path; defaults to `<output>.manifest.json`.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Number of spines drawn before windowing.
        #[arg(long, default_value_t = 100)]
        count: usize,
        #[command(flatten)]
        synth: SynthArgs,
        #[command(flatten)]
        noise: NoiseArgs,
        /// Remove one random vertebra from every generated subject.
        #[arg(long)]
        inject_gap: bool,
    },
    /// Sweep one parameter over a corpus with reference labels and emit CSV.
    Sweep {
        input: PathBuf,
        #[arg(long, value_enum)]
        kind: KindArg,
        /// Defaults: gamma -2, skip-cost 0, fov 1.
        #[arg(long, allow_hyphen_values = true)]
        lo: Option<f64>,
        /// Defaults: 2 for gamma and skip-cost, longest subject for fov.
        #[arg(long, allow_hyphen_values = true)]
        hi: Option<f64>,
        /// Defaults: 0.25, or 1 for fov.
        #[arg(long)]
        step: Option<f64>,
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        norm: NormArgs,
    },
}

#[derive(Args, Clone)]
struct SolverArgs {
    #[arg(long, default_value_t = 0.9)]
    w_label: f64,
    #[arg(long, default_value_t = 1.1)]
    w_region: f64,
    #[arg(long, default_value_t = 0.6)]
    w_transition: f64,
    /// Cost added per anomaly category in a path; positive discourages anomalies.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    anomaly_gamma: f64,
    #[arg(long)]
    gaps_enabled: bool,
    /// Cost per skipped label when gaps are enabled.
    #[arg(long, default_value_t = 0.0)]
    gap_penalty: f64,
    #[arg(long, default_value_t = true, action = ArgAction::Set)]
    include_none_transition: bool,
}

impl SolverArgs {
    fn config(&self) -> Config {
        Config {
            w_label: self.w_label,
            w_region: self.w_region,
            w_transition: self.w_transition,
            anomaly_gamma: self.anomaly_gamma,
            gaps_enabled: self.gaps_enabled,
            gap_penalty: self.gap_penalty,
            include_none_transition: self.include_none_transition,
        }
    }
}

#[derive(Args, Clone)]
struct NormArgs {
    #[arg(long, default_value_t = 1.0)]
    gaussian_sigma: f64,
    #[arg(long, default_value_t = true, action = ArgAction::Set)]
    enable_smoothing: bool,
    #[arg(long, default_value_t = true, action = ArgAction::Set)]
    transition_column_norm: bool,
}

impl NormArgs {
    fn config(&self) -> Result<Normalization, Failure> {
        if !(self.gaussian_sigma >= 0.0 && self.gaussian_sigma.is_finite()) {
            return Err(Failure::usage(format!(
                "--gaussian-sigma must be >= 0, got {}",
                self.gaussian_sigma
            )));
        }
        Ok(Normalization {
            gaussian_sigma: self.gaussian_sigma,
            enable_smoothing: self.enable_smoothing,
            transition_column_norm: self.transition_column_norm,
        })
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FovArg {
    Full,
    RandomWindow,
    AllWindows,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Gamma,
    SkipCost,
    Fov,
}

#[derive(Args, Clone)]
struct SynthArgs {
    #[arg(long, default_value_t = 0.058)]
    tea_rate: f64,
    #[arg(long, default_value_t = 0.097)]
    lea_rate: f64,
    #[arg(long, default_value_t = 0.5)]
    t11_vs_t13_split: f64,
    #[arg(long, default_value_t = 0.5)]
    l4_vs_l6_split: f64,
    #[arg(long, value_enum, default_value_t = FovArg::Full)]
    fov: FovArg,
    /// Window length bounds for `--fov random-window`.
    #[arg(long, default_value_t = 2)]
    min_len: usize,
    #[arg(long, default_value_t = 24)]
    max_len: usize,
    /// Emit classifier outputs as if anomalies were counted away; references stay true.
    #[arg(long)]
    relabel_anomalies: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl SynthArgs {
    fn config(&self) -> SynthConfig {
        SynthConfig {
            tea_rate: self.tea_rate,
            lea_rate: self.lea_rate,
            t11_vs_t13_split: self.t11_vs_t13_split,
            l4_vs_l6_split: self.l4_vs_l6_split,
            fov_mode: match self.fov {
                FovArg::Full => FovMode::Full,
                FovArg::RandomWindow => FovMode::RandomWindow {
                    min_len: self.min_len,
                    max_len: self.max_len,
                },
                FovArg::AllWindows => FovMode::AllWindows,
            },
            relabel_anomalies: self.relabel_anomalies,
            seed: self.seed,
        }
    }
}

#[derive(Args, Clone)]
struct NoiseArgs {
    #[arg(long, default_value_t = 0.0)]
    label_confusion: f64,
    #[arg(long, default_value_t = 0.0)]
    head_dropout: f64,
    #[arg(long, default_value_t = 1.0)]
    transition_strength: f64,
    #[arg(long, default_value_t = 0.0)]
    visibility_boundary_decay: f64,
    /// Seed of the classifier-noise streams; defaults to `--seed`.
    #[arg(long)]
    noise_seed: Option<u64>,
}

impl NoiseArgs {
    fn config(&self, seed: u64) -> NoiseConfig {
        NoiseConfig {
            label_confusion: self.label_confusion,
            head_dropout: self.head_dropout,
            transition_strength: self.transition_strength,
            visibility_boundary_decay: self.visibility_boundary_decay,
            seed: self.noise_seed.unwrap_or(seed),
        }
    }
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }

    fn data(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }

    fn internal(message: impl Into<String>) -> Self {
        Self {
            code: 3,
            message: message.into(),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    if cli.workers > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.workers)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(3);
        }
    }
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(command: Command) -> Result<u8, Failure> {
    match command {
        Command::Label {
            input,
            output,
            solver,
            norm,
        } => cmd_label(&input, output.as_deref(), &solver.config(), &norm.config()?),
        Command::Eval {
            predictions,
            references,
            param,
            csv,
        } => cmd_eval(&predictions, &references, &param, csv.as_deref()),
        Command::Synth {
            output,
            manifest,
            count,
            synth,
            noise,
            inject_gap,
        } => cmd_synth(
            &output,
            manifest.as_deref(),
            count,
            &synth,
            &noise,
            inject_gap,
        ),
        Command::Sweep {
            input,
            kind,
            lo,
            hi,
            step,
            output,
            solver,
            norm,
        } => cmd_sweep(
            &input,
            kind,
            (lo, hi, step),
            output.as_deref(),
            &solver.config(),
            &norm.config()?,
        ),
    }
}

fn read_input(path: &Path) -> Result<String, Failure> {
    if path == Path::new("-") {
        let mut text = String::new();
        io::stdin()
            .read_to_string(&mut text)
            .map_err(|e| Failure::data(format!("stdin: {e}")))?;
        return Ok(text);
    }
    fs::read_to_string(path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

fn write_output(path: Option<&Path>, text: &str) -> Result<(), Failure> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| Failure::data(format!("{}: {e}", p.display()))),
        None => io::stdout()
            .lock()
            .write_all(text.as_bytes())
            .map_err(|e| Failure::internal(format!("stdout: {e}"))),
    }
}

/// Non-blank lines with their 1-based line numbers.
fn documents(text: &str) -> Vec<(usize, &str)> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l))
        .collect()
}

/// A document that failed to parse: its subject id when readable, and the message.
type ParseFailure = (Option<String>, String);

fn parse_batch(text: &str) -> Vec<(usize, Result<Subject, ParseFailure>)> {
    documents(text)
        .into_par_iter()
        .map(|(line, doc)| {
            let parsed = parse_subject::<f64>(doc).map_err(|e| {
                let id = peek_subject_id(doc);
                let who = id
                    .as_ref()
                    .map_or_else(|| format!("line {line}"), |id| format!("subject `{id}`"));
                (id, format!("{who}: {e}"))
            });
            (line, parsed)
        })
        .collect()
}

#[derive(Serialize)]
struct LabelOk<'a> {
    subject_id: &'a str,
    status: &'static str,
    labels: &'a [FinalLabel],
    raw_labels: &'a [RawLabel],
    gaps: &'a [u8],
    total_cost: f64,
    tea_flag: bool,
    lea_flag: bool,
}

#[derive(Serialize)]
struct LabelFailed<'a> {
    subject_id: Option<&'a str>,
    line: usize,
    status: &'static str,
    error: String,
}

/// One output line, or the error message of a failed subject.
fn result_line(
    line: usize,
    subject: Result<&Subject, &ParseFailure>,
    result: Option<&Result<Labeling, SolveError>>,
) -> Result<String, (String, String)> {
    let failed = |id: Option<&str>, error: String| {
        let doc = LabelFailed {
            subject_id: id,
            line,
            status: "failed",
            error: error.clone(),
        };
        (
            serde_json::to_string(&doc).expect("plain data serializes"),
            error,
        )
    };
    match (subject, result) {
        (Err((id, message)), _) => Err(failed(id.as_deref(), message.clone())),
        (Ok(s), Some(Ok(r))) => Ok(serde_json::to_string(&LabelOk {
            subject_id: &s.subject_id,
            status: "ok",
            labels: &r.final_labels,
            raw_labels: r.raw_path.labels(),
            gaps: r.raw_path.gaps(),
            total_cost: r.total_cost,
            tea_flag: r.tea_flag,
            lea_flag: r.lea_flag,
        })
        .expect("plain data serializes")),
        (Ok(s), Some(Err(e))) => Err(failed(
            Some(&s.subject_id),
            format!("subject `{}`: {e}", s.subject_id),
        )),
        (Ok(s), None) => Err(failed(Some(&s.subject_id), "not solved".into())),
    }
}

fn cmd_label(
    input: &Path,
    output: Option<&Path>,
    cfg: &Config,
    norm: &Normalization,
) -> Result<u8, Failure> {
    cfg.validate().map_err(|e| Failure::usage(e.to_string()))?;
    let text = read_input(input)?;
    let batch = parse_batch(&text);
    if batch.is_empty() {
        eprintln!("warning: {} contains no subjects", input.display());
        write_output(output, "")?;
        return Ok(0);
    }
    let results: Vec<Option<Result<Labeling, SolveError>>> = batch
        .par_iter()
        .map(|(_, s)| s.as_ref().ok().map(|s| solve_subject(s, norm, cfg)))
        .collect();

    let mut out = String::new();
    let mut failures = 0;
    let mut internal = false;
    for ((line, subject), result) in batch.iter().zip(&results) {
        let text = match result_line(*line, subject.as_ref(), result.as_ref()) {
            Ok(text) => text,
            Err((text, message)) => {
                failures += 1;
                eprintln!("error: {message}");
                text
            }
        };
        internal |= matches!(result, Some(Err(SolveError::Internal)));
        out.push_str(&text);
        out.push('\n');
    }
    write_output(output, &out)?;
    if internal {
        return Ok(3);
    }
    if failures > 0 {
        eprintln!("{failures} of {} subjects failed", batch.len());
        return Ok(2);
    }
    Ok(0)
}

/// `subject_id -> labels` from documents carrying `labels` or `reference_labels`.
fn read_labelled(path: &Path) -> Result<Vec<(String, Vec<FinalLabel>)>, Failure> {
    let text = read_input(path)?;
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (line, doc) in documents(&text) {
        let at = |msg: String| Failure::data(format!("{}:{line}: {msg}", path.display()));
        let value: Value = serde_json::from_str(doc).map_err(|e| at(e.to_string()))?;
        let id = value["subject_id"]
            .as_str()
            .ok_or_else(|| at("missing string field `subject_id`".into()))?
            .to_string();
        if value["status"] == "failed" {
            return Err(at(format!("subject `{id}` failed to label")));
        }
        let labels = value
            .get("labels")
            .or_else(|| value.get("reference_labels"))
            .filter(|v| !v.is_null())
            .ok_or_else(|| {
                at(format!(
                    "subject `{id}` has neither `labels` nor `reference_labels`"
                ))
            })?;
        let labels: Vec<FinalLabel> = serde_json::from_value(labels.clone())
            .map_err(|e| at(format!("subject `{id}` labels: {e}")))?;
        if !seen.insert(id.clone()) {
            return Err(at(format!("duplicate subject `{id}`")));
        }
        out.push((id, labels));
    }
    Ok(out)
}

fn cmd_eval(
    predictions: &Path,
    references: &Path,
    param: &str,
    csv: Option<&Path>,
) -> Result<u8, Failure> {
    let predicted: HashMap<String, Vec<FinalLabel>> =
        read_labelled(predictions)?.into_iter().collect();
    let reference = read_labelled(references)?;
    let reference_ids: HashSet<&str> = reference.iter().map(|(id, _)| id.as_str()).collect();

    let mut unmatched: Vec<&str> = reference
        .iter()
        .map(|(id, _)| id.as_str())
        .filter(|id| !predicted.contains_key(*id))
        .chain(
            predicted
                .keys()
                .map(String::as_str)
                .filter(|id| !reference_ids.contains(id)),
        )
        .collect();
    if !unmatched.is_empty() {
        unmatched.sort_unstable();
        return Err(Failure::data(format!(
            "unmatched subject ids: {}",
            unmatched.join(", ")
        )));
    }
    let pairs: Vec<(&[FinalLabel], &[FinalLabel])> = reference
        .iter()
        .map(|(id, r)| (predicted[id].as_slice(), r.as_slice()))
        .collect();
    let report = EvalReport::compute(&pairs).map_err(|e| Failure::data(e.to_string()))?;

    let row = format!("{CSV_HEADER}\n{}\n", report.csv_row(param));
    if let Some(path) = csv {
        write_output(Some(path), &row)?;
    }
    let text = serde_json::to_string(&report).expect("plain data serializes");
    write_output(None, &format!("{text}\n{row}"))?;
    Ok(0)
}

fn cmd_synth(
    output: &Path,
    manifest: Option<&Path>,
    count: usize,
    synth: &SynthArgs,
    noise: &NoiseArgs,
    with_gap: bool,
) -> Result<u8, Failure> {
    let synth_cfg = synth.config();
    let noise_cfg = noise.config(synth.seed);
    let mut corpus: Vec<Subject> = generate_corpus(&synth_cfg, &noise_cfg, count)
        .map_err(|e| Failure::usage(e.to_string()))?;
    if with_gap {
        let mut gapped = Vec::with_capacity(corpus.len());
        for (index, s) in corpus.iter().enumerate() {
            match inject_gap(s, synth.seed.wrapping_add(index as u64)) {
                Ok((g, _)) => gapped.push(g),
                Err(e) => {
                    eprintln!("warning: subject `{}` kept without gap: {e}", s.subject_id);
                    gapped.push(s.clone());
                }
            }
        }
        corpus = gapped;
    }
    let mut text = String::new();
    for s in &corpus {
        text.push_str(&subject_to_json(s));
        text.push('\n');
    }
    write_output(Some(output), &text)?;

    let fov = match synth_cfg.fov_mode {
        FovMode::Full => json!({"mode": "full"}),
        FovMode::RandomWindow { min_len, max_len } => {
            json!({"mode": "random_window", "min_len": min_len, "max_len": max_len})
        }
        FovMode::AllWindows => json!({"mode": "all_windows"}),
    };
    let document = json!({
        "generator": concat!("vertlabel ", env!("CARGO_PKG_VERSION")),
        "output": output.file_name().map(|n| n.to_string_lossy().into_owned()),
        "spines": count,
        "subjects": corpus.len(),
        "inject_gap": with_gap,
        "synth": {
            "tea_rate": synth_cfg.tea_rate,
            "lea_rate": synth_cfg.lea_rate,
            "t11_vs_t13_split": synth_cfg.t11_vs_t13_split,
            "l4_vs_l6_split": synth_cfg.l4_vs_l6_split,
            "fov": fov,
            "relabel_anomalies": synth_cfg.relabel_anomalies,
            "seed": synth_cfg.seed,
        },
        "noise": {
            "label_confusion": noise_cfg.label_confusion,
            "head_dropout": noise_cfg.head_dropout,
            "transition_strength": noise_cfg.transition_strength,
            "visibility_boundary_decay": noise_cfg.visibility_boundary_decay,
            "seed": noise_cfg.seed,
        },
    });
    let manifest_path = manifest.map(Path::to_path_buf).unwrap_or_else(|| {
        let mut name = output.as_os_str().to_owned();
        name.push(".manifest.json");
        PathBuf::from(name)
    });
    let pretty = serde_json::to_string_pretty(&document).expect("plain data serializes");
    write_output(Some(&manifest_path), &format!("{pretty}\n"))?;
    eprintln!("wrote {} subjects to {}", corpus.len(), output.display());
    Ok(0)
}

fn cmd_sweep(
    input: &Path,
    kind: KindArg,
    (lo, hi, step): (Option<f64>, Option<f64>, Option<f64>),
    output: Option<&Path>,
    cfg: &Config,
    norm: &Normalization,
) -> Result<u8, Failure> {
    cfg.validate().map_err(|e| Failure::usage(e.to_string()))?;
    let text = read_input(input)?;
    let mut corpus = Vec::new();
    for (_, parsed) in parse_batch(&text) {
        let subject = parsed.map_err(|(_, message)| Failure::data(message))?;
        if subject.reference_labels.is_none() {
            return Err(Failure::data(format!(
                "subject `{}` has no reference labels",
                subject.subject_id
            )));
        }
        corpus.push(subject);
    }
    if corpus.is_empty() {
        return Err(Failure::data(format!(
            "{} contains no subjects",
            input.display()
        )));
    }
    let defaults = match kind {
        KindArg::Gamma => SweepSpec::gamma(),
        KindArg::SkipCost => SweepSpec::skip_cost(),
        KindArg::Fov => SweepSpec::fov(1, corpus.iter().map(Subject::len).max().unwrap_or(1)),
    };
    let spec = SweepSpec {
        kind: match kind {
            KindArg::Gamma => SweepKind::Gamma,
            KindArg::SkipCost => SweepKind::SkipCost,
            KindArg::Fov => SweepKind::Fov,
        },
        lo: lo.unwrap_or(defaults.lo),
        hi: hi.unwrap_or(defaults.hi),
        step: step.unwrap_or(defaults.step),
    };
    spec.values().map_err(|e| Failure::usage(e.to_string()))?;
    let rows = run_sweep(&corpus, &spec, norm, cfg).map_err(|e| match e {
        vertlabel::SweepError::Range(m) => Failure::usage(m),
        vertlabel::SweepError::Solve {
            source: SolveError::Internal,
            ..
        } => Failure::internal(e.to_string()),
        other => Failure::data(other.to_string()),
    })?;
    write_output(output, &sweep_csv(&rows))?;
    Ok(0)
}
