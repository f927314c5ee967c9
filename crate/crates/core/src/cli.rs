//! Command-line front end.
//!
//! Every command writes a JSON manifest next to its main output holding the
//! effective arguments and SHA-256 hashes of the files it read and wrote;
//! `lem rerun --from FILE` replays it and checks the outputs match.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, CommandFactory, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analytics::{
    match_stats, points_distribution, project_league, read_reference_csv, write_distribution_long_csv,
    write_projection_csv, write_stats_csv, DistributionConfig,
};
use crate::cascade::ModelCascade;
use crate::error::LemError;
use crate::event::TimeUnit;
use crate::ingest::{
    parse_events, parse_matches, read_corpus, split_corpus, write_corpus, write_csv, Corpus, ParseOptions,
    SplitSpec, UnknownTypePolicy,
};
use crate::sim::{simulate_batch, write_results_csv, Batch, BatchConfig, Side};
use crate::train::{
    build_pairs, finetune, select_finetune_pairs, train_base, BaseConfig, FineTuneConfig, FineTuneJob,
    FineTuneKind, FineTuneSpec, Hyperparameters,
};
use crate::vocab::TypeMapping;

#[derive(Debug, Parser)]
#[command(name = "lem", version, about = "Large events models for soccer", args_override_self = true)]
struct Cli {
    /// TOML file whose keys mirror the long flags; a `[command]` table applies
    /// to that command only. Flags given on the command line win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Where to write the run manifest (default: next to the main output).
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,

    /// Log filter, e.g. `info` or `lem=debug`.
    #[arg(long, global = true, default_value = "warn")]
    log_level: String,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse Wyscout event JSON into a corpus file.
    Ingest(IngestArgs),
    /// Train the base cascade.
    Train(TrainArgs),
    /// Fine-tune a base cascade on a team or player subset.
    Finetune(FinetuneArgs),
    /// Simulate matches with one cascade.
    Simulate(SimulateArgs),
    /// Project a league table from one fine-tuned cascade per team.
    League(LeagueArgs),
    /// Compare points distributions of a baseline and scenario cascades.
    Scenario(ScenarioArgs),
    /// Replay a run from its manifest and verify its outputs.
    Rerun(RerunArgs),
}

#[derive(Debug, Args)]
struct IngestArgs {
    /// Wyscout events file (one JSON array).
    #[arg(long)]
    events: PathBuf,
    /// Wyscout matches file giving home and away sides.
    #[arg(long)]
    matches: Option<PathBuf>,
    #[arg(long)]
    league: String,
    #[arg(long, default_value = "")]
    season: String,
    /// Type-mapping table (defaults to the bundled one).
    #[arg(long)]
    mapping: Option<PathBuf>,
    /// What to do with records whose type is not in the mapping: drop|error.
    #[arg(long, default_value = "drop")]
    unknown: UnknownTypePolicy,
    /// Existing corpus files to merge into the output.
    #[arg(long)]
    merge: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Optional flat CSV export.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Leagues used for training (comma separated).
    #[arg(long, value_delimiter = ',', required = true)]
    train_leagues: Vec<String>,
    /// Leagues used for validation (comma separated).
    #[arg(long, value_delimiter = ',', required = true)]
    val_leagues: Vec<String>,
    #[arg(long, default_value_t = 25)]
    epochs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Unit of the time-elapsed bins: minutes|seconds.
    #[arg(long, default_value = "minutes")]
    time_unit: TimeUnit,
    /// JSON file overriding the default layer sizes and learning rates.
    #[arg(long)]
    hyperparameters: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct FinetuneArgs {
    /// Job descriptor (JSON); replaces the other options.
    #[arg(long, conflicts_with_all = ["base", "kind"])]
    job: Option<PathBuf>,
    #[arg(long, required_unless_present = "job")]
    base: Option<PathBuf>,
    /// Corpus holding the fine-tuning pool.
    #[arg(long, required_unless_present = "job")]
    corpus: Option<PathBuf>,
    /// Restrict the pool to these leagues (comma separated).
    #[arg(long, value_delimiter = ',')]
    leagues: Vec<String>,
    /// team|player|addition|replacement
    #[arg(long, required_unless_present = "job")]
    kind: Option<FineTuneKind>,
    #[arg(long)]
    team: Option<u64>,
    #[arg(long)]
    player: Option<u64>,
    #[arg(long)]
    replaced: Option<u64>,
    /// Use only the team's home matches for team-side pairs.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    is_home: bool,
    #[arg(long, default_value_t = 25)]
    epochs: usize,
    /// Independent repetitions; repetition r uses seed + r.
    #[arg(long, default_value_t = 1)]
    repeats: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output cascade; with several repeats `.rN` is inserted before the extension.
    #[arg(long, required_unless_present = "job")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Clone)]
struct SimArgs {
    #[arg(long, default_value_t = 2500)]
    n_sims: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Report points for the home side (true) or the away side (false).
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    is_home: bool,
    #[arg(long, default_value_t = 47.0)]
    half_length: f64,
    #[arg(long, default_value_t = 4000)]
    max_events: usize,
    #[arg(long, default_value_t = 1.0)]
    temperature: f64,
}

impl SimArgs {
    fn batch_config(&self) -> BatchConfig {
        BatchConfig {
            n_simulations: self.n_sims,
            base_seed: self.seed,
            max_events_per_match: self.max_events,
            half_length_minutes: self.half_length,
            record_events: false,
            temperature: self.temperature,
            perspective: if self.is_home { Side::Home } else { Side::Away },
        }
    }
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    sim: SimArgs,
    /// Per-simulation CSV.
    #[arg(long)]
    out: PathBuf,
    /// Summary JSON (default: OUT with a .summary.json suffix).
    #[arg(long)]
    summary: Option<PathBuf>,
    /// Also write every simulated event as JSON lines.
    #[arg(long)]
    events: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct LeagueArgs {
    /// LABEL=MODEL, one per team.
    #[arg(long = "team", required = true)]
    teams: Vec<String>,
    /// CSV with columns team,full_rank,home_rank.
    #[arg(long)]
    reference: PathBuf,
    #[command(flatten)]
    sim: SimArgs,
    #[arg(long, default_value_t = crate::analytics::HOME_FIXTURES)]
    home_fixtures: u32,
    #[arg(long, default_value_t = crate::analytics::TOP_K)]
    top_k: usize,
    /// Projection CSV; a JSON summary is written next to it.
    #[arg(long)]
    out: PathBuf,
    /// Per-game statistics CSV.
    #[arg(long)]
    stats: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ScenarioArgs {
    #[arg(long)]
    baseline: PathBuf,
    /// NAME=MODEL, one per scenario.
    #[arg(long = "scenario", required = true)]
    scenarios: Vec<String>,
    #[command(flatten)]
    sim: SimArgs,
    #[arg(long, default_value_t = 10_000)]
    bootstrap: usize,
    #[arg(long, default_value_t = crate::analytics::HOME_FIXTURES)]
    home_fixtures: u32,
    /// Distribution summary CSV.
    #[arg(long)]
    out: PathBuf,
    /// Long-format per-simulation points CSV.
    #[arg(long)]
    long: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RerunArgs {
    #[arg(long = "from")]
    from: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct FileHash {
    path: PathBuf,
    sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Manifest {
    tool: String,
    version: String,
    command: String,
    /// Effective arguments, config file already expanded.
    argv: Vec<String>,
    inputs: Vec<FileHash>,
    outputs: Vec<FileHash>,
}

fn sha256_file(path: &Path) -> anyhow::Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

fn hashes(paths: &[PathBuf]) -> anyhow::Result<Vec<FileHash>> {
    paths
        .iter()
        .map(|p| {
            Ok(FileHash {
                path: p.clone(),
                sha256: sha256_file(p)?,
            })
        })
        .collect()
}

/// Files a command read and wrote; the first output names the manifest.
#[derive(Default)]
struct Io {
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn repeat_path(out: &Path, r: usize) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match out.extension() {
        Some(ext) => format!("{stem}.r{r}.{}", ext.to_string_lossy()),
        None => format!("{stem}.r{r}"),
    };
    out.with_file_name(name)
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn parse_labelled(items: &[String], what: &str) -> anyhow::Result<Vec<(String, PathBuf)>> {
    items
        .iter()
        .map(|s| {
            let (label, path) = s
                .split_once('=')
                .ok_or_else(|| LemError::InvalidInput(format!("{what} '{s}' is not LABEL=PATH")))?;
            Ok((label.to_string(), PathBuf::from(path)))
        })
        .collect()
}

fn cmd_ingest(a: &IngestArgs, io: &mut Io) -> anyhow::Result<()> {
    let mapping = match &a.mapping {
        Some(p) => {
            io.inputs.push(p.clone());
            let raw = std::fs::read_to_string(p).map_err(|e| LemError::io(p, e))?;
            TypeMapping::from_json(&raw)?
        }
        None => TypeMapping::default(),
    };
    let mut options = ParseOptions {
        league: a.league.clone(),
        season: a.season.clone(),
        unknown_types: a.unknown,
        ..Default::default()
    };
    if let Some(m) = &a.matches {
        io.inputs.push(m.clone());
        options.sides = parse_matches(&std::fs::read(m).map_err(|e| LemError::io(m, e))?)?;
    }
    io.inputs.push(a.events.clone());
    let raw = std::fs::read(&a.events).map_err(|e| LemError::io(&a.events, e))?;
    let (parsed, report) = parse_events(&raw, &mapping, &options)?;
    log::info!(
        "{} records, {} events, {} dropped",
        report.records,
        report.events,
        report.dropped.len()
    );
    let mut corpus = Corpus::new(mapping.vocabulary.version.clone());
    for m in &a.merge {
        io.inputs.push(m.clone());
        corpus.merge(read_corpus(m)?)?;
    }
    corpus.merge(parsed)?;
    corpus.validate()?;
    write_corpus(&corpus, &a.out)?;
    io.outputs.push(a.out.clone());
    if let Some(csv) = &a.csv {
        write_csv(&corpus, &mapping.vocabulary, create(csv)?)?;
        io.outputs.push(csv.clone());
    }
    Ok(())
}

fn cmd_train(a: &TrainArgs, io: &mut Io) -> anyhow::Result<()> {
    io.inputs.push(a.corpus.clone());
    let corpus = read_corpus(&a.corpus)?;
    let (train, val, _) = split_corpus(
        &corpus,
        &SplitSpec {
            train: a.train_leagues.clone(),
            validation: a.val_leagues.clone(),
            pool: vec![],
        },
    )?;
    let hyperparameters = match &a.hyperparameters {
        Some(p) => {
            io.inputs.push(p.clone());
            serde_json::from_slice(&std::fs::read(p).map_err(|e| LemError::io(p, e))?)
                .with_context(|| format!("parsing {}", p.display()))?
        }
        None => Hyperparameters::default(),
    };
    let cfg = BaseConfig {
        hyperparameters,
        max_epochs: a.epochs,
        seed: a.seed,
        time_unit: a.time_unit,
    };
    let (cascade, report) = train_base(&train, &val, &cfg)?;
    cascade.save(&a.out)?;
    io.outputs.push(a.out.clone());
    let report_path = with_suffix(&a.out, ".report.json");
    write_json(&report_path, &report)?;
    io.outputs.push(report_path);
    Ok(())
}

fn cmd_finetune(a: &FinetuneArgs, io: &mut Io) -> anyhow::Result<()> {
    let job = match &a.job {
        Some(p) => {
            io.inputs.push(p.clone());
            let raw = std::fs::read(p).map_err(|e| LemError::io(p, e))?;
            serde_json::from_slice::<FineTuneJob>(&raw).with_context(|| format!("parsing {}", p.display()))?
        }
        None => FineTuneJob {
            spec: FineTuneSpec {
                kind: a.kind.expect("required by clap"),
                team_id: a.team,
                player_id: a.player,
                replaced_player_id: a.replaced,
                home_only: a.is_home,
            },
            seed: a.seed,
            epochs: a.epochs,
            repeats: a.repeats,
            base: a.base.clone().expect("required by clap"),
            corpus: a.corpus.clone().expect("required by clap"),
            out: a.out.clone().expect("required by clap"),
        },
    };
    job.spec.validate()?;
    if job.repeats == 0 {
        bail!(LemError::InvalidInput("repeats must be at least 1".into()));
    }
    io.inputs.push(job.base.clone());
    io.inputs.push(job.corpus.clone());
    let base = ModelCascade::load(&job.base)?;
    let mut corpus = read_corpus(&job.corpus)?;
    if !a.leagues.is_empty() {
        corpus.matches.retain(|m| a.leagues.contains(&m.league));
    }
    let pairs = build_pairs(&corpus, base.time_unit())?;
    let selected = select_finetune_pairs(&pairs, &job.spec)?;
    log::info!("{} of {} pairs selected", selected.len(), pairs.len());

    let outs: Vec<PathBuf> = if job.repeats == 1 {
        vec![job.out.clone()]
    } else {
        (0..job.repeats).map(|r| repeat_path(&job.out, r)).collect()
    };
    outs.par_iter()
        .enumerate()
        .map(|(r, out)| -> anyhow::Result<()> {
            let cfg = FineTuneConfig {
                epochs: job.epochs,
                seed: job.seed.wrapping_add(r as u64),
            };
            let (tuned, _) = finetune(&base, &selected, &job.spec, &cfg)?;
            tuned.save(out)?;
            Ok(())
        })
        .collect::<anyhow::Result<()>>()?;
    io.outputs.extend(outs);
    Ok(())
}

fn run_batch(model: &Path, sim: &SimArgs, io: &mut Io) -> anyhow::Result<(ModelCascade, Batch)> {
    io.inputs.push(model.to_path_buf());
    let cascade = ModelCascade::load(model)?;
    let batch = simulate_batch(&cascade, &sim.batch_config())?;
    Ok((cascade, batch))
}

fn type_names(c: &ModelCascade) -> Vec<String> {
    c.vocabulary().types.iter().map(|t| t.name.clone()).collect()
}

fn cmd_simulate(a: &SimulateArgs, io: &mut Io) -> anyhow::Result<()> {
    io.inputs.push(a.model.clone());
    let cascade = ModelCascade::load(&a.model)?;
    let mut cfg = a.sim.batch_config();
    cfg.record_events = a.events.is_some();
    let batch = simulate_batch(&cascade, &cfg)?;
    write_results_csv(&batch, &type_names(&cascade), create(&a.out)?)?;
    io.outputs.push(a.out.clone());
    let summary = a.summary.clone().unwrap_or_else(|| with_suffix(&a.out, ".summary.json"));
    write_json(&summary, &batch.summary)?;
    io.outputs.push(summary);
    if let Some(path) = &a.events {
        let mut w = create(path)?;
        for (i, r) in batch.results.iter().enumerate() {
            for e in &r.events {
                serde_json::to_writer(&mut w, &serde_json::json!({"simulation": i, "seed": r.seed, "event": e}))?;
                w.write_all(b"\n")?;
            }
        }
        w.flush()?;
        io.outputs.push(path.clone());
    }
    Ok(())
}

fn cmd_league(a: &LeagueArgs, io: &mut Io) -> anyhow::Result<()> {
    let teams = parse_labelled(&a.teams, "team")?;
    io.inputs.push(a.reference.clone());
    let reference = read_reference_csv(File::open(&a.reference).map_err(|e| LemError::io(&a.reference, e))?)?;
    let mut expected = Vec::new();
    let mut stats = Vec::new();
    for (label, model) in &teams {
        let (cascade, batch) = run_batch(model, &a.sim, io)?;
        log::info!("{label}: {:.3} expected points", batch.summary.expected_points);
        expected.push((label.clone(), batch.summary.expected_points));
        stats.push((label.clone(), match_stats(&batch.results, cascade.vocabulary())?));
    }
    let projection = project_league(&expected, &reference, a.home_fixtures, a.top_k)?;
    write_projection_csv(&projection, create(&a.out)?)?;
    io.outputs.push(a.out.clone());
    let summary = with_suffix(&a.out, ".summary.json");
    write_json(&summary, &projection)?;
    io.outputs.push(summary);
    if let Some(path) = &a.stats {
        write_stats_csv(&stats, create(path)?)?;
        io.outputs.push(path.clone());
    }
    Ok(())
}

fn cmd_scenario(a: &ScenarioArgs, io: &mut Io) -> anyhow::Result<()> {
    let mut runs = vec![("baseline".to_string(), a.baseline.clone())];
    runs.extend(parse_labelled(&a.scenarios, "scenario")?);
    let mut batches = Vec::new();
    for (name, model) in &runs {
        let (_, batch) = run_batch(model, &a.sim, io)?;
        batches.push((name.clone(), batch.points()));
    }
    let cfg = DistributionConfig {
        home_fixtures: a.home_fixtures,
        bootstrap_samples: a.bootstrap,
        seed: a.sim.seed,
    };
    let dist = points_distribution(&batches, &cfg)?;
    let mut w = csv::Writer::from_writer(create(&a.out)?);
    w.write_record([
        "scenario",
        "n",
        "p_loss",
        "p_draw",
        "p_win",
        "mean",
        "variance",
        "season_mean",
        "season_variance",
        "season_q05",
        "season_q25",
        "season_q50",
        "season_q75",
        "season_q95",
        "delta_mean",
        "delta_variance",
        "delta_p_loss",
        "delta_p_draw",
        "delta_p_win",
    ])?;
    for d in &dist {
        let mut row = vec![d.scenario.clone(), d.n.to_string()];
        let nums = [
            d.histogram.loss,
            d.histogram.draw,
            d.histogram.win,
            d.mean,
            d.variance,
            d.season.mean,
            d.season.variance,
        ]
        .into_iter()
        .chain(d.season.quantiles)
        .chain([
            d.delta_mean,
            d.delta_variance,
            d.delta_histogram.loss,
            d.delta_histogram.draw,
            d.delta_histogram.win,
        ]);
        row.extend(nums.map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    io.outputs.push(a.out.clone());
    if let Some(long) = &a.long {
        write_distribution_long_csv(&batches, create(long)?)?;
        io.outputs.push(long.clone());
    }
    Ok(())
}

fn cmd_rerun(a: &RerunArgs) -> anyhow::Result<()> {
    let raw = std::fs::read(&a.from).map_err(|e| LemError::io(&a.from, e))?;
    let manifest: Manifest = serde_json::from_slice(&raw).with_context(|| format!("parsing {}", a.from.display()))?;
    for input in &manifest.inputs {
        let now = sha256_file(&input.path)?;
        if now != input.sha256 {
            bail!(LemError::InvalidInput(format!(
                "input {} changed since the recorded run",
                input.path.display()
            )));
        }
    }
    let mut argv = manifest.argv.clone();
    argv.push("--manifest".into());
    argv.push(a.from.to_string_lossy().into_owned());
    execute(argv)?;
    let replayed: Manifest = serde_json::from_slice(&std::fs::read(&a.from).map_err(|e| LemError::io(&a.from, e))?)?;
    for (old, new) in manifest.outputs.iter().zip(&replayed.outputs) {
        if old != new {
            bail!(LemError::InvalidInput(format!(
                "output {} differs from the recorded run",
                old.path.display()
            )));
        }
    }
    Ok(())
}

fn toml_to_flags(value: &toml::Value, key: &str, out: &mut Vec<String>) -> anyhow::Result<()> {
    let flag = format!("--{}", key.replace('_', "-"));
    match value {
        toml::Value::String(s) => out.extend([flag, s.clone()]),
        toml::Value::Integer(i) => out.extend([flag, i.to_string()]),
        toml::Value::Float(f) => out.extend([flag, f.to_string()]),
        toml::Value::Boolean(b) => out.extend([flag, b.to_string()]),
        toml::Value::Array(items) => {
            for item in items {
                toml_to_flags(item, key, out)?;
            }
        }
        _ => bail!(LemError::InvalidInput(format!("config key {key} has an unsupported value"))),
    }
    Ok(())
}

/// Splices config-file keys in front of the command-line flags of the
/// selected subcommand so that explicit flags override them.
fn expand_config(args: Vec<String>) -> anyhow::Result<Vec<String>> {
    let Some(pos) = args.iter().position(|a| a == "--config" || a.starts_with("--config=")) else {
        return Ok(args);
    };
    let path = match args[pos].strip_prefix("--config=") {
        Some(p) => p.to_string(),
        None => args
            .get(pos + 1)
            .cloned()
            .ok_or_else(|| LemError::InvalidInput("--config needs a file".into()))?,
    };
    let mut rest = args.clone();
    rest.drain(pos..if args[pos].contains('=') { pos + 1 } else { pos + 2 });
    let raw = std::fs::read_to_string(&path).map_err(|e| LemError::io(&path, e))?;
    let table: toml::Table = raw.parse().with_context(|| format!("parsing config {path}"))?;

    let names: Vec<String> = Cli::command().get_subcommands().map(|c| c.get_name().to_string()).collect();
    let Some(sub_at) = rest.iter().position(|a| names.contains(a)) else {
        return Ok(rest);
    };
    let sub = rest[sub_at].clone();
    let cmd = Cli::command();
    let accepted: Vec<String> = cmd
        .find_subcommand(&sub)
        .expect("listed subcommand")
        .get_arguments()
        .filter_map(|a| a.get_long().map(str::to_string))
        .collect();
    let mut flags = Vec::new();
    for (key, value) in &table {
        if value.is_table() {
            continue;
        }
        if accepted.contains(&key.replace('_', "-")) {
            toml_to_flags(value, key, &mut flags)?;
        }
    }
    if let Some(section) = table.get(&sub).and_then(|v| v.as_table()) {
        for (key, value) in section {
            toml_to_flags(value, key, &mut flags)?;
        }
    }
    let mut out = rest[..=sub_at].to_vec();
    out.extend(flags);
    out.extend_from_slice(&rest[sub_at + 1..]);
    Ok(out)
}

fn execute(args: Vec<String>) -> anyhow::Result<()> {
    let args = expand_config(args)?;
    let cli = Cli::try_parse_from(&args)?;
    let _ = env_logger::Builder::new().parse_filters(&cli.log_level).try_init();
    let mut io = Io::default();
    let name = match &cli.command {
        Command::Ingest(a) => {
            cmd_ingest(a, &mut io)?;
            "ingest"
        }
        Command::Train(a) => {
            cmd_train(a, &mut io)?;
            "train"
        }
        Command::Finetune(a) => {
            cmd_finetune(a, &mut io)?;
            "finetune"
        }
        Command::Simulate(a) => {
            cmd_simulate(a, &mut io)?;
            "simulate"
        }
        Command::League(a) => {
            cmd_league(a, &mut io)?;
            "league"
        }
        Command::Scenario(a) => {
            cmd_scenario(a, &mut io)?;
            "scenario"
        }
        Command::Rerun(a) => return cmd_rerun(a),
    };
    io.inputs.dedup();
    // the recorded argv must not point at a manifest path, so strip it
    let mut argv = Vec::with_capacity(args.len());
    let mut skip = false;
    for a in &args {
        if skip {
            skip = false;
            continue;
        }
        if a == "--manifest" {
            skip = true;
            continue;
        }
        if a.starts_with("--manifest=") {
            continue;
        }
        argv.push(a.clone());
    }
    let manifest = Manifest {
        tool: "lem".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: name.into(),
        argv,
        inputs: hashes(&io.inputs)?,
        outputs: hashes(&io.outputs)?,
    };
    let path = cli
        .manifest
        .clone()
        .unwrap_or_else(|| with_suffix(&io.outputs[0], ".manifest.json"));
    write_json(&path, &manifest)?;
    Ok(())
}

fn error_kind(e: &anyhow::Error) -> &'static str {
    if let Some(e) = e.downcast_ref::<LemError>() {
        return match e {
            LemError::InvalidEvent(_) => "invalid_event",
            LemError::InvalidVocabulary(_) => "invalid_vocabulary",
            LemError::DimensionMismatch { .. } => "dimension_mismatch",
            LemError::InvalidNetwork(_) => "invalid_network",
            LemError::InvalidTarget(_) => "invalid_target",
            LemError::NonFiniteLoss { .. } => "non_finite_loss",
            LemError::InvalidInput(_) => "invalid_input",
            LemError::Json { .. } => "json",
            LemError::UnknownEventType { .. } => "unknown_event_type",
            LemError::EmptySelection(_) => "empty_selection",
            LemError::EmptyFineTuneSet(_) => "empty_finetune_set",
            LemError::InvalidSpec(_) => "invalid_spec",
            LemError::Checkpoint(_) => "checkpoint",
            LemError::Checksum { .. } => "checksum",
            LemError::Version { .. } => "version",
            LemError::TeamMismatch(_) => "team_mismatch",
            LemError::Io { .. } => "io",
            LemError::Csv(_) => "csv",
        };
    }
    if e.downcast_ref::<clap::Error>().is_some() {
        return "usage";
    }
    if e.downcast_ref::<std::io::Error>().is_some() {
        return "io";
    }
    "error"
}

/// Runs the command line and returns the process exit code. Failures are
/// reported on stderr as one JSON object.
pub fn run(args: Vec<String>) -> i32 {
    match execute(args) {
        Ok(()) => 0,
        Err(e) => {
            if let Some(c) = e.downcast_ref::<clap::Error>() {
                if !c.use_stderr() {
                    // --help and --version
                    let _ = c.print();
                    return 0;
                }
            }
            let report = serde_json::json!({
                "error": {
                    "kind": error_kind(&e),
                    "message": format!("{e:#}"),
                }
            });
            eprintln!("{report}");
            if error_kind(&e) == "usage" {
                2
            } else {
                1
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn repeat_paths() {
        assert_eq!(repeat_path(Path::new("out/city.lemc"), 3), PathBuf::from("out/city.r3.lemc"));
        assert_eq!(repeat_path(Path::new("city"), 0), PathBuf::from("city.r0"));
    }

    #[test]
    fn config_keys_become_flags_before_explicit_ones() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.toml");
        std::fs::write(&cfg, "seed = 5\nepochs = 3\n[simulate]\nn_sims = 10\n").unwrap();
        let args: Vec<String> = ["lem", "--config", cfg.to_str().unwrap(), "simulate", "--model", "m", "--out", "o", "--seed", "9"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let out = expand_config(args).unwrap();
        assert_eq!(
            out,
            ["lem", "simulate", "--seed", "5", "--n-sims", "10", "--model", "m", "--out", "o", "--seed", "9"]
        );
        let cli = Cli::try_parse_from(&out).unwrap();
        match cli.command {
            Command::Simulate(s) => {
                assert_eq!(s.sim.seed, 9);
                assert_eq!(s.sim.n_sims, 10);
            }
            _ => panic!(),
        }
    }

    #[test]
    fn errors_are_json_with_nonzero_exit() {
        let code = run(vec!["lem".into(), "simulate".into(), "--model".into(), "/nonexistent".into(), "--out".into(), "/tmp/x.csv".into()]);
        assert_eq!(code, 1);
        assert_eq!(run(vec!["lem".into(), "bogus".into()]), 2);
    }
}
