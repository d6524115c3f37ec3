//! Command-line front end.
//!
//! Every stage reads and writes the documented file formats, so `pipeline`
//! produces exactly what running `track`, `teams`, `evaluate` and `render`
//! one after another would.
//!
//! Exit codes: 0 success, 2 input or data error, 3 configuration error.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::adapter::{run_external_detector, AdapterConfig};
use crate::error::{Error, Result};
use crate::eval::{evaluate, identity_summary, parse_ground_truth, EvalConfig, TrackedBox};
use crate::geometry::{ClassLabel, ClassMap, Detection};
use crate::ingest::{parse_detections, parse_embeddings, write_detections, write_embeddings, DEFAULT_EMBEDDING_STRIDE};
use crate::render::{frame_file_name, render_frames};
use crate::sim::{simulate, SimConfig};
use crate::team::{assign_track_teams, TeamAssignment, UmapConfig};
use crate::tracker::{read_tracks, run_sequence_strided, track_records, write_tracks_csv, write_tracks_jsonl, TrackerConfig};

pub const CONFIG_ENV: &str = "PITCHTRACK_CONFIG";

pub const TRACKS_FILE: &str = "tracks.jsonl";
pub const TRACKS_CSV_FILE: &str = "tracks.csv";
pub const TEAMS_FILE: &str = "teams.jsonl";
pub const REPORT_FILE: &str = "report.txt";
pub const REPORT_RECORDS_FILE: &str = "report.jsonl";
pub const IDENTITY_FILE: &str = "identity.json";
pub const FRAMES_DIR: &str = "frames";
pub const DETECTIONS_FILE: &str = "detections.jsonl";
pub const EMBEDDINGS_FILE: &str = "embeddings.jsonl";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.jsonl";
pub const ROSTER_FILE: &str = "roster.jsonl";

#[derive(Debug, Parser)]
#[command(name = "pitchtrack", version, about = "Soccer tracking, team assignment and detection evaluation")]
pub struct Cli {
    /// Pipeline configuration (TOML).
    #[arg(long, global = true, env = CONFIG_ENV)]
    pub config: Option<PathBuf>,
    /// Seed for clustering and simulation.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory [default: current directory].
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    /// Process every n-th frame when tracking [default: 1].
    #[arg(long, global = true)]
    pub tracking_stride: Option<u64>,
    /// Use embeddings from every n-th frame [default: 30].
    #[arg(long, global = true)]
    pub embedding_stride: Option<u64>,
    /// Suppress summaries on stdout.
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Track detections and write tracks.jsonl and tracks.csv.
    Track(TrackArgs),
    /// Score detections against ground truth; writes report.txt and report.jsonl.
    Evaluate(EvaluateArgs),
    /// Assign player tracks to two teams; writes teams.jsonl.
    Teams(TeamsArgs),
    /// Generate a synthetic match: ground truth, detections, embeddings, roster.
    Simulate,
    /// Draw one SVG overlay per frame into frames/.
    Render(RenderArgs),
    /// track -> teams -> evaluate -> render.
    Pipeline(PipelineArgs),
}

#[derive(Debug, Args)]
pub struct TrackArgs {
    /// Detection stream (JSON lines).
    #[arg(long, conflicts_with = "adapter")]
    pub detections: Option<PathBuf>,
    /// External detector configuration (TOML); runs it on --source first.
    #[arg(long, requires = "source")]
    pub adapter: Option<PathBuf>,
    /// Frame source handed to the adapter.
    #[arg(long)]
    pub source: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Scored predictions in the detection stream format.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    #[arg(long)]
    pub ground_truth: Option<PathBuf>,
    /// Track stream to score for identity consistency (identity.json).
    #[arg(long)]
    pub tracks: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TeamsArgs {
    #[arg(long)]
    pub tracks: PathBuf,
    /// Detections the embeddings refer to.
    #[arg(long)]
    pub detections: Option<PathBuf>,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub tracks: PathBuf,
    /// Team assignments to label boxes with.
    #[arg(long)]
    pub teams: Option<PathBuf>,
    #[arg(long)]
    pub width: Option<u32>,
    #[arg(long)]
    pub height: Option<u32>,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    #[arg(long)]
    pub detections: Option<PathBuf>,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Enables the evaluation stage.
    #[arg(long)]
    pub ground_truth: Option<PathBuf>,
    /// Skip the render stage.
    #[arg(long)]
    pub no_render: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub detections: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub ground_truth: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderConfig {
    pub enabled: bool,
    pub width: u32,
    pub height: u32,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig {
            enabled: true,
            width: 1920,
            height: 1080,
        }
    }
}

/// Everything a run needs. Relative paths are resolved against the
/// directory of the configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: Paths,
    pub classes: ClassMap,
    pub tracker: TrackerConfig,
    pub umap: UmapConfig,
    pub eval: EvalConfig,
    pub simulator: SimConfig,
    pub render: RenderConfig,
    pub tracking_stride: u64,
    pub embedding_stride: u64,
    pub seed: Option<u64>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            paths: Paths::default(),
            classes: ClassMap::default(),
            tracker: TrackerConfig::default(),
            umap: UmapConfig::default(),
            eval: EvalConfig::default(),
            simulator: SimConfig::default(),
            render: RenderConfig::default(),
            tracking_stride: 1,
            embedding_stride: DEFAULT_EMBEDDING_STRIDE,
            seed: None,
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut cfg.paths.detections,
            &mut cfg.paths.embeddings,
            &mut cfg.paths.ground_truth,
            &mut cfg.paths.output,
        ] {
            if let Some(rel) = p.as_ref().filter(|p| p.is_relative()) {
                *p = Some(base.join(rel));
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.tracker.validate()?;
        self.umap.validate()?;
        self.eval.validate()?;
        if self.tracking_stride == 0 || self.embedding_stride == 0 {
            return Err(Error::InvalidConfig("strides must be at least 1".into()));
        }
        Ok(())
    }
}

/// Resolved settings shared by all commands.
#[derive(Debug)]
struct Context {
    cfg: PipelineConfig,
    output: PathBuf,
    quiet: bool,
}

impl Context {
    fn from_cli(cli: &Cli) -> Result<Self> {
        let mut cfg = match &cli.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        if let Some(s) = cli.tracking_stride {
            cfg.tracking_stride = s;
        }
        if let Some(s) = cli.embedding_stride {
            cfg.embedding_stride = s;
            cfg.simulator.embedding_stride = s;
        }
        if let Some(seed) = cli.seed.or(cfg.seed) {
            cfg.seed = Some(seed);
            cfg.umap.seed = seed;
            cfg.simulator.seed = seed;
        }
        cfg.validate()?;
        let output = cli
            .output
            .clone()
            .or_else(|| cfg.paths.output.clone())
            .unwrap_or_else(|| PathBuf::from("."));
        fs::create_dir_all(&output).map_err(|e| Error::io(&output, e))?;
        Ok(Context {
            cfg,
            output,
            quiet: cli.quiet,
        })
    }

    fn say(&self, line: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", line.as_ref());
        }
    }

    fn out(&self, name: &str) -> PathBuf {
        self.output.join(name)
    }
}

fn required(flag: Option<&PathBuf>, config: Option<&PathBuf>, what: &str) -> Result<PathBuf> {
    flag.or(config)
        .cloned()
        .ok_or_else(|| Error::InvalidConfig(format!("no {what} file given (flag or [paths] in the config)")))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let mut w = create(path)?;
    f(&mut w)?;
    w.flush().map_err(|e| Error::io(path, e))
}

fn origin(path: &Path) -> String {
    path.display().to_string()
}

fn track(ctx: &Context, args: &TrackArgs) -> Result<()> {
    let classes = &ctx.cfg.classes;
    let stream = match (&args.adapter, &args.source) {
        (Some(adapter), Some(source)) => {
            let text = fs::read_to_string(adapter).map_err(|e| Error::io(adapter, e))?;
            let stream = run_external_detector(source, &AdapterConfig::from_toml(&text)?, classes)?;
            let path = ctx.out(DETECTIONS_FILE);
            write_file(&path, |w| write_detections(w, &stream, classes).map_err(|e| Error::io(&path, e)))?;
            stream
        }
        _ => {
            let path = required(args.detections.as_ref(), ctx.cfg.paths.detections.as_ref(), "detections")?;
            parse_detections(open(&path)?, &origin(&path), classes)?
        }
    };
    let tracks = run_sequence_strided(&stream, &ctx.cfg.tracker, ctx.cfg.tracking_stride)?;
    let rows = track_records(&tracks, classes);
    let jsonl = ctx.out(TRACKS_FILE);
    write_file(&jsonl, |w| write_tracks_jsonl(w, &rows).map_err(|e| Error::io(&jsonl, e)))?;
    write_file(&ctx.out(TRACKS_CSV_FILE), |w| write_tracks_csv(w, &rows))?;

    let confirmed: Vec<_> = tracks.iter().filter(|t| t.confirmed).collect();
    let frames = stream
        .last_frame()
        .map_or(0, |last| last / ctx.cfg.tracking_stride + 1);
    ctx.say(format!(
        "tracks: {} over {frames} processed frames ({} detections)",
        confirmed.len(),
        stream.len()
    ));
    for class in ClassLabel::ALL {
        let n = confirmed.iter().filter(|t| t.class == class).count();
        ctx.say(format!("  {class:<11} {n}"));
    }
    ctx.say(format!("wrote {}", jsonl.display()));
    Ok(())
}

fn evaluate_cmd(ctx: &Context, args: &EvaluateArgs) -> Result<()> {
    let classes = &ctx.cfg.classes;
    let gt_path = required(args.ground_truth.as_ref(), ctx.cfg.paths.ground_truth.as_ref(), "ground truth")?;
    let gts = parse_ground_truth(open(&gt_path)?, &origin(&gt_path), classes)?;
    let pred_path = required(args.predictions.as_ref(), ctx.cfg.paths.detections.as_ref(), "predictions")?;
    let preds: Vec<Detection> = parse_detections(open(&pred_path)?, &origin(&pred_path), classes)?.into_inner();
    let report = evaluate(&preds, &gts, &ctx.cfg.eval)?;
    let table = report.to_table();
    let txt = ctx.out(REPORT_FILE);
    write_file(&txt, |w| w.write_all(table.as_bytes()).map_err(|e| Error::io(&txt, e)))?;
    let records = ctx.out(REPORT_RECORDS_FILE);
    write_file(&records, |w| report.write_records(w).map_err(|e| Error::io(&records, e)))?;
    ctx.say(table.trim_end());

    if let Some(tracks_path) = &args.tracks {
        let rows = read_tracks(open(tracks_path)?, &origin(tracks_path), classes)?;
        let boxes: Vec<TrackedBox> = rows.iter().map(TrackedBox::from).collect();
        let s = identity_summary(&gts, &boxes, ctx.cfg.eval.iou_threshold);
        let json = serde_json::json!({
            "objects": s.objects,
            "tracks": rows.iter().map(|r| r.track_id).collect::<std::collections::BTreeSet<_>>().len(),
            "id_switches": s.id_switches,
            "single_id_objects": s.single_id_objects,
            "unmatched_objects": s.unmatched_objects,
            "gt_boxes": s.gt_boxes,
            "matched_boxes": s.matched_boxes,
        });
        let path = ctx.out(IDENTITY_FILE);
        write_file(&path, |w| writeln!(w, "{json}").map_err(|e| Error::io(&path, e)))?;
        ctx.say(format!(
            "identity: {} id switches, {}/{} objects kept one id",
            s.id_switches, s.single_id_objects, s.objects
        ));
    }
    Ok(())
}

fn teams(ctx: &Context, args: &TeamsArgs) -> Result<()> {
    let classes = &ctx.cfg.classes;
    let det_path = required(args.detections.as_ref(), ctx.cfg.paths.detections.as_ref(), "detections")?;
    let emb_path = required(args.embeddings.as_ref(), ctx.cfg.paths.embeddings.as_ref(), "embeddings")?;
    let rows = read_tracks(open(&args.tracks)?, &origin(&args.tracks), classes)?;
    let detections = parse_detections(open(&det_path)?, &origin(&det_path), classes)?;
    let embeddings = parse_embeddings(open(&emb_path)?, &origin(&emb_path), Some(&detections))?;
    let report = assign_track_teams(&rows, &detections, &embeddings, ctx.cfg.embedding_stride, &ctx.cfg.umap)?;
    let path = ctx.out(TEAMS_FILE);
    write_file(&path, |w| {
        crate::ingest::write_jsonl(w, &report.assignments).map_err(|e| Error::io(&path, e))
    })?;
    let per_team = |t: u8| report.assignments.iter().filter(|a| a.team == Some(t)).count();
    ctx.say(format!(
        "teams: {} player tracks ({} / {}), {} unassigned, {} embeddings used",
        report.player_tracks,
        per_team(0),
        per_team(1),
        report.unassigned_players,
        report.samples
    ));
    ctx.say(format!("wrote {}", path.display()));
    Ok(())
}

fn simulate_cmd(ctx: &Context) -> Result<()> {
    let cfg = &ctx.cfg.simulator;
    let classes = &ctx.cfg.classes;
    let out = simulate(cfg)?;
    let p = ctx.out(GROUND_TRUTH_FILE);
    write_file(&p, |w| out.write_ground_truth(w, classes).map_err(|e| Error::io(&p, e)))?;
    let p = ctx.out(DETECTIONS_FILE);
    write_file(&p, |w| write_detections(w, &out.detections, classes).map_err(|e| Error::io(&p, e)))?;
    let p = ctx.out(EMBEDDINGS_FILE);
    write_file(&p, |w| write_embeddings(w, &out.embeddings).map_err(|e| Error::io(&p, e)))?;
    let p = ctx.out(ROSTER_FILE);
    write_file(&p, |w| out.write_roster(w, classes).map_err(|e| Error::io(&p, e)))?;
    ctx.say(format!("seed {}", cfg.seed));
    ctx.say(format!(
        "{} objects, {} frames: {} ground-truth boxes, {} detections, {} embeddings",
        out.roster.len(),
        cfg.frames,
        out.ground_truth.len(),
        out.detections.len(),
        out.embeddings.len()
    ));
    Ok(())
}

fn render(ctx: &Context, args: &RenderArgs) -> Result<()> {
    let classes = &ctx.cfg.classes;
    let rows = read_tracks(open(&args.tracks)?, &origin(&args.tracks), classes)?;
    let mut teams = BTreeMap::new();
    if let Some(p) = &args.teams {
        for (_, a) in crate::ingest::read_jsonl::<TeamAssignment>(open(p)?, &origin(p))? {
            if let Some(t) = a.team {
                teams.insert(a.track_id, t);
            }
        }
    }
    let width = args.width.unwrap_or(ctx.cfg.render.width);
    let height = args.height.unwrap_or(ctx.cfg.render.height);
    let frames = render_frames(&rows, &teams, width, height);
    let dir = ctx.out(FRAMES_DIR);
    if !frames.is_empty() {
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    for (frame, svg) in &frames {
        let p = dir.join(frame_file_name(*frame));
        fs::write(&p, svg).map_err(|e| Error::io(&p, e))?;
    }
    ctx.say(format!("rendered {} frames into {}", frames.len(), dir.display()));
    Ok(())
}

fn pipeline(ctx: &Context, args: &PipelineArgs) -> Result<()> {
    let paths = &ctx.cfg.paths;
    let detections = required(args.detections.as_ref(), paths.detections.as_ref(), "detections")?;
    let ground_truth = args.ground_truth.clone().or_else(|| paths.ground_truth.clone());
    let embeddings = args.embeddings.clone().or_else(|| paths.embeddings.clone());
    let tracks = ctx.out(TRACKS_FILE);
    let teams_file = ctx.out(TEAMS_FILE);

    track(
        ctx,
        &TrackArgs {
            detections: Some(detections.clone()),
            adapter: None,
            source: None,
        },
    )?;
    teams(
        ctx,
        &TeamsArgs {
            tracks: tracks.clone(),
            detections: Some(detections.clone()),
            embeddings: Some(required(embeddings.as_ref(), None, "embeddings")?),
        },
    )?;
    if let Some(gt) = ground_truth {
        evaluate_cmd(
            ctx,
            &EvaluateArgs {
                predictions: Some(detections),
                ground_truth: Some(gt),
                tracks: Some(tracks.clone()),
            },
        )?;
    }
    if ctx.cfg.render.enabled && !args.no_render {
        render(
            ctx,
            &RenderArgs {
                tracks,
                teams: Some(teams_file),
                width: None,
                height: None,
            },
        )?;
    }
    Ok(())
}

/// Runs a parsed command line.
pub fn execute(cli: &Cli) -> Result<()> {
    let ctx = Context::from_cli(cli)?;
    match &cli.command {
        Command::Track(a) => track(&ctx, a),
        Command::Evaluate(a) => evaluate_cmd(&ctx, a),
        Command::Teams(a) => teams(&ctx, a),
        Command::Simulate => simulate_cmd(&ctx),
        Command::Render(a) => render(&ctx, a),
        Command::Pipeline(a) => pipeline(&ctx, a),
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code. Diagnostics go to stderr.
pub fn run_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 3 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            let mut msg = format!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                if !msg.ends_with(&s.to_string()) {
                    msg.push_str(&format!(": {s}"));
                }
                source = s.source();
            }
            eprintln!("{msg}");
            e.exit_code()
        }
    }
}
