//! `amt` — command-line frontend for the piano transcription toolkit.
//!
//! Every subcommand is a pure function of its input files and flags:
//! no clock, no hidden state, and randomness only where a `--seed` makes
//! it reproducible. Reports print as human-readable text by default or
//! as JSON with `--format json`. Exit codes: 0 on success, 1 on a
//! validation or processing failure, 2 on a usage error.
//!
//! Defaults can be supplied by a versioned JSON config file passed with
//! `--config` or named by the `AMT_CONFIG` environment variable;
//! command-line flags override the file, which overrides built-ins.
//! Run with `--log-level debug` to see every resolved configuration.

use std::fs;
use std::io::{BufReader, BufWriter, Write as _};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{ArgGroup, CommandFactory, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use amt_core::dataset::{self, Manifest};
use amt_core::decoder::{self, DecoderParams, ScorePrediction};
use amt_core::eval::{self, MatchConfig};
use amt_core::frontend::{self, FrontendConfig};
use amt_core::losses::{self, LossConfig, LossKind};
use amt_core::midi::{self, NoteSequence};
use amt_core::network::{self, ModelSpec, ModelWeights};
use amt_core::pipeline::{self, PipelineConfig};
use amt_core::roll::{self, PianoRoll, RollConfig};
use amt_core::selftest;

/// Note length used when turning decoded onsets into events, matching
/// the clip applied to reference labels during loss preparation.
const DEFAULT_NOTE_LENGTH: f64 = 0.032;

// ---------------------------------------------------------------------------
// Argument surface

#[derive(Parser)]
#[command(
    name = "amt",
    version,
    about = "Piano transcription toolkit: labels, spectrograms, inference, decoding, scoring",
    propagate_version = true
)]
struct Cli {
    /// Report format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// JSON config file with default parameters (also via AMT_CONFIG).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (default: one per CPU).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Log verbosity; `debug` echoes every resolved configuration.
    #[arg(long, global = true, value_enum, default_value_t = LogLevel::Warn)]
    log_level: LogLevel,
    /// Seed for generated fixtures and randomized checks.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
enum Format {
    Text,
    Json,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
enum LogLevel {
    Error,
    Warn,
    Info,
    Debug,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum ModelKind {
    /// Small configuration for tests and demos (~84k parameters).
    Toy,
    /// Full-size configuration (~3.1M parameters).
    Reference,
}

impl ModelKind {
    fn spec(self) -> ModelSpec {
        match self {
            ModelKind::Toy => ModelSpec::toy(),
            ModelKind::Reference => ModelSpec::reference(),
        }
    }
    fn name(self) -> &'static str {
        match self {
            ModelKind::Toy => "toy",
            ModelKind::Reference => "reference",
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Quantize a MIDI file into onset, velocity, and frame rolls.
    Rollify {
        /// Input MIDI file.
        #[arg(long)]
        midi: PathBuf,
        /// Prefix for the output roll files.
        #[arg(long)]
        out_prefix: PathBuf,
        /// Frame period in seconds (default: the frontend grid).
        #[arg(long)]
        delta_t: Option<f64>,
        /// Force this many frames instead of covering the whole duration.
        #[arg(long)]
        frames: Option<usize>,
        /// Apply sustain-pedal ring-out before quantizing.
        #[arg(long)]
        resolve_sustain: bool,
        /// Also write rolls with onsets spread over three frames.
        #[arg(long)]
        prolong: bool,
        /// Also write the note events as a TSV table.
        #[arg(long)]
        notes_tsv: Option<PathBuf>,
    },
    /// Compute the two-plane log-mel spectrogram of a WAV file.
    Frontend {
        /// Input WAV file.
        #[arg(long)]
        wav: PathBuf,
        /// Output spectrogram file.
        #[arg(long)]
        out: PathBuf,
        /// Named parameter set: ov-2023 (24 ms hop) or of-2017 (32 ms hop).
        #[arg(long)]
        preset: Option<String>,
    },
    /// Stretch time and shift pitch of a recording and its labels.
    Augment {
        /// Input WAV file.
        #[arg(long)]
        wav: PathBuf,
        /// Input MIDI file with the matching labels.
        #[arg(long)]
        midi: PathBuf,
        /// Time-stretch factor (2 plays twice as long).
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        /// Frequency scale factor (2 moves up an octave).
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
        /// Output WAV file.
        #[arg(long)]
        out_wav: PathBuf,
        /// Optional output MIDI file with the adjusted labels.
        #[arg(long)]
        out_midi: Option<PathBuf>,
        /// Optional output TSV table with the adjusted labels.
        #[arg(long)]
        out_tsv: Option<PathBuf>,
    },
    /// Run the network forward over a stored spectrogram.
    Infer {
        /// Input spectrogram file.
        #[arg(long)]
        spectro: PathBuf,
        /// Weight file to load.
        #[arg(long)]
        weights: PathBuf,
        /// Prefix for the output roll files.
        #[arg(long)]
        out_prefix: PathBuf,
        /// Model configuration the weights belong to.
        #[arg(long, value_enum)]
        model: Option<ModelKind>,
    },
    /// Turn predicted rolls into a table of note events.
    Decode {
        /// Predicted onset roll.
        #[arg(long)]
        onset: PathBuf,
        /// Predicted velocity roll.
        #[arg(long)]
        velocity: PathBuf,
        /// Output TSV note table.
        #[arg(long)]
        out: PathBuf,
        /// Optional output MIDI file.
        #[arg(long)]
        midi_out: Option<PathBuf>,
        /// Gaussian smoothing width in frames.
        #[arg(long)]
        sigma: Option<f64>,
        /// Detection threshold in (0, 1).
        #[arg(long)]
        rho: Option<f64>,
        /// Constant shift added to decoded times, in seconds.
        #[arg(long, allow_negative_numbers = true)]
        mu: Option<f64>,
        /// Fixed length given to emitted notes, in seconds.
        #[arg(long)]
        note_length: Option<f64>,
    },
    /// Score predicted rolls against reference labels.
    #[command(group(ArgGroup::new("mode").args(["pred", "pred_onset", "stages"]).required(true)))]
    Loss {
        /// Single-roll mode: the prediction to score.
        #[arg(long, requires = "target")]
        pred: Option<PathBuf>,
        /// Single-roll mode: the matching label roll.
        #[arg(long)]
        target: Option<PathBuf>,
        /// Single-roll mode: objective (bce, frame, frame-weighted, velocity).
        #[arg(long, default_value = "bce")]
        kind: String,
        /// Single-roll mode: indicator roll gating the velocity objective.
        #[arg(long)]
        mask: Option<PathBuf>,
        /// Two-part mode: predicted onset roll (with --pred-frame and --midi).
        #[arg(long, requires = "pred_frame")]
        pred_onset: Option<PathBuf>,
        /// Two-part mode: predicted frame-activity roll.
        #[arg(long)]
        pred_frame: Option<PathBuf>,
        /// Multi-stage mode: predicted onset rolls, one per stage.
        #[arg(long, num_args = 1.., requires = "velocity_pred")]
        stages: Vec<PathBuf>,
        /// Multi-stage mode: predicted velocity roll.
        #[arg(long)]
        velocity_pred: Option<PathBuf>,
        /// Reference MIDI file with the ground-truth labels.
        #[arg(long)]
        midi: Option<PathBuf>,
        /// Apply sustain-pedal ring-out to the reference labels.
        #[arg(long)]
        resolve_sustain: bool,
        /// Weight of the velocity term in the multi-stage objective.
        #[arg(long)]
        lambda: Option<f64>,
    },
    /// Compare an estimated note table against a reference.
    Eval {
        /// Reference note table (TSV).
        #[arg(long = "ref")]
        reference: Option<PathBuf>,
        /// Estimated note table (TSV).
        #[arg(long)]
        est: Option<PathBuf>,
        /// CSV of ref,est path pairs to evaluate as a corpus.
        #[arg(long, conflicts_with_all = ["reference", "est"])]
        corpus: Option<PathBuf>,
        /// Require velocities to agree as well as onsets.
        #[arg(long)]
        velocity: bool,
        /// Also report alignment error rates.
        #[arg(long)]
        alignment: bool,
        /// Matching window for onsets, in seconds.
        #[arg(long)]
        onset_tolerance: Option<f64>,
        /// Matching window for velocities.
        #[arg(long)]
        velocity_tolerance: Option<f64>,
    },
    /// Summarize a dataset manifest per split.
    Stats {
        /// Manifest CSV file.
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Check a manifest for leakage across splits and lopsided shares.
    ValidateSplits {
        /// Manifest CSV file.
        #[arg(long)]
        manifest: PathBuf,
        /// Allowed deviation from the 80/10/10 split, in percentage points.
        #[arg(long)]
        slack: Option<f64>,
    },
    /// Run the built-in verification suite.
    Selftest {
        /// Run only the named check.
        #[arg(long)]
        only: Option<String>,
    },
    /// Transcribe a WAV file end to end.
    Transcribe {
        /// Input WAV file.
        #[arg(long)]
        wav: PathBuf,
        /// Weight file to load.
        #[arg(long)]
        weights: PathBuf,
        /// Model configuration the weights belong to.
        #[arg(long, value_enum)]
        model: Option<ModelKind>,
        /// Output TSV note table.
        #[arg(long)]
        out: PathBuf,
        /// Optional output MIDI file.
        #[arg(long)]
        midi_out: Option<PathBuf>,
        /// Also write the spectrogram and rolls under this prefix.
        #[arg(long)]
        dump_prefix: Option<PathBuf>,
        /// Named frontend parameter set.
        #[arg(long)]
        preset: Option<String>,
        /// Gaussian smoothing width in frames.
        #[arg(long)]
        sigma: Option<f64>,
        /// Detection threshold in (0, 1).
        #[arg(long)]
        rho: Option<f64>,
        /// Constant shift added to decoded times, in seconds.
        #[arg(long, allow_negative_numbers = true)]
        mu: Option<f64>,
        /// Fixed length given to emitted notes, in seconds.
        #[arg(long)]
        note_length: Option<f64>,
    },
    /// Write a weight file for a model configuration.
    InitWeights {
        /// Model configuration to size the weights for.
        #[arg(long, value_enum)]
        model: Option<ModelKind>,
        /// Output weight file.
        #[arg(long)]
        out: PathBuf,
        /// Write all-zero weights instead of seeded random ones.
        #[arg(long)]
        zeros: bool,
    },
}

// ---------------------------------------------------------------------------
// Config file

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    /// Config format version; must be 1.
    version: u32,
    preset: Option<String>,
    frontend: Option<FrontendOverrides>,
    decoder: Option<DecoderOverrides>,
    loss: Option<LossOverrides>,
    eval: Option<EvalOverrides>,
    note_length: Option<f64>,
    model: Option<ModelKind>,
}

impl FileConfig {
    fn empty() -> Self {
        Self {
            version: 1,
            preset: None,
            frontend: None,
            decoder: None,
            loss: None,
            eval: None,
            note_length: None,
            model: None,
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrontendOverrides {
    sample_rate: Option<u32>,
    window: Option<usize>,
    hop: Option<usize>,
    mel_bins: Option<usize>,
    fmin: Option<f64>,
    fmax: Option<f64>,
    log_floor: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct DecoderOverrides {
    sigma: Option<f64>,
    rho: Option<f64>,
    mu: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct LossOverrides {
    eps: Option<f64>,
    frame_weight: Option<f64>,
    lambda: Option<f64>,
    onset_length: Option<f64>,
    completion_frames: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct EvalOverrides {
    onset_tolerance: Option<f64>,
    velocity_tolerance: Option<f64>,
}

fn load_file_config(flag: Option<&Path>) -> Result<FileConfig> {
    let path = match flag {
        Some(p) => Some(p.to_path_buf()),
        None => std::env::var_os("AMT_CONFIG").filter(|v| !v.is_empty()).map(PathBuf::from),
    };
    let Some(path) = path else {
        return Ok(FileConfig::empty());
    };
    let text = fs::read_to_string(&path)
        .with_context(|| format!("reading config file {}", path.display()))?;
    let cfg: FileConfig = serde_json::from_str(&text)
        .with_context(|| format!("parsing config file {}", path.display()))?;
    if cfg.version != 1 {
        bail!("config file {}: unsupported version {}, expected 1", path.display(), cfg.version);
    }
    log::debug!("loaded config file {}", path.display());
    Ok(cfg)
}

// ---------------------------------------------------------------------------
// Parameter resolution: built-ins < config file < flags

fn debug_echo(label: &str, value: &impl Serialize) {
    if log::log_enabled!(log::Level::Debug) {
        log::debug!(
            "resolved {label}: {}",
            serde_json::to_string(value).unwrap_or_else(|e| format!("<unserializable: {e}>"))
        );
    }
}

fn resolved_frontend(file: &FileConfig, preset_flag: Option<&str>) -> Result<FrontendConfig> {
    let mut cfg = match preset_flag.or(file.preset.as_deref()) {
        Some(name) => FrontendConfig::preset(name).with_context(|| {
            format!("unknown frontend preset `{name}` (expected ov-2023 or of-2017)")
        })?,
        None => FrontendConfig::default(),
    };
    if let Some(o) = &file.frontend {
        if let Some(v) = o.sample_rate {
            cfg.sample_rate = v;
        }
        if let Some(v) = o.window {
            cfg.window = v;
        }
        if let Some(v) = o.hop {
            cfg.hop = v;
        }
        if let Some(v) = o.mel_bins {
            cfg.mel_bins = v;
        }
        if let Some(v) = o.fmin {
            cfg.fmin = v;
        }
        if let Some(v) = o.fmax {
            cfg.fmax = v;
        }
        if let Some(v) = o.log_floor {
            cfg.log_floor = v;
        }
    }
    debug_echo("frontend", &cfg);
    Ok(cfg)
}

fn resolved_decoder(
    file: &FileConfig,
    sigma: Option<f64>,
    rho: Option<f64>,
    mu: Option<f64>,
) -> DecoderParams {
    let mut params = DecoderParams::default();
    if let Some(o) = &file.decoder {
        if let Some(v) = o.sigma {
            params.sigma = v;
        }
        if let Some(v) = o.rho {
            params.rho = v;
        }
        if let Some(v) = o.mu {
            params.mu = v;
        }
    }
    if let Some(v) = sigma {
        params.sigma = v;
    }
    if let Some(v) = rho {
        params.rho = v;
    }
    if let Some(v) = mu {
        params.mu = v;
    }
    debug_echo("decoder", &params);
    params
}

fn resolved_loss(file: &FileConfig, lambda: Option<f64>) -> LossConfig {
    let mut cfg = LossConfig::default();
    if let Some(o) = &file.loss {
        if let Some(v) = o.eps {
            cfg.eps = v;
        }
        if let Some(v) = o.frame_weight {
            cfg.frame_weight = v;
        }
        if let Some(v) = o.lambda {
            cfg.lambda = v;
        }
        if let Some(v) = o.onset_length {
            cfg.onset_length = v;
        }
        if let Some(v) = o.completion_frames {
            cfg.completion_frames = v;
        }
    }
    if let Some(v) = lambda {
        cfg.lambda = v;
    }
    debug_echo("loss", &cfg);
    cfg
}

fn resolved_eval(
    file: &FileConfig,
    onset_tolerance: Option<f64>,
    velocity_tolerance: Option<f64>,
    require_velocity: bool,
) -> MatchConfig {
    let mut cfg = MatchConfig::default();
    if let Some(o) = &file.eval {
        if let Some(v) = o.onset_tolerance {
            cfg.onset_tolerance = v;
        }
        if let Some(v) = o.velocity_tolerance {
            cfg.velocity_tolerance = v;
        }
    }
    if let Some(v) = onset_tolerance {
        cfg.onset_tolerance = v;
    }
    if let Some(v) = velocity_tolerance {
        cfg.velocity_tolerance = v;
    }
    cfg.require_velocity = require_velocity;
    debug_echo("eval", &cfg);
    cfg
}

fn resolved_model(file: &FileConfig, flag: Option<ModelKind>) -> ModelKind {
    flag.or(file.model).unwrap_or(ModelKind::Toy)
}

fn resolved_note_length(file: &FileConfig, flag: Option<f64>) -> f64 {
    flag.or(file.note_length).unwrap_or(DEFAULT_NOTE_LENGTH)
}

// ---------------------------------------------------------------------------
// Small I/O helpers

fn suffixed(prefix: &Path, suffix: &str) -> PathBuf {
    PathBuf::from(format!("{}{suffix}", prefix.display()))
}

fn read_roll_file(path: &Path) -> Result<PianoRoll> {
    let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    roll::read_roll(&mut BufReader::new(file))
        .with_context(|| format!("reading roll file {}", path.display()))
}

fn write_roll_file(path: &Path, r: &PianoRoll) -> Result<()> {
    let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    roll::write_roll(r, &mut w).with_context(|| format!("writing roll file {}", path.display()))?;
    w.flush().with_context(|| format!("writing roll file {}", path.display()))
}

fn read_midi_file(path: &Path, resolve_sustain: bool) -> Result<NoteSequence> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let parsed =
        midi::parse_midi(&bytes).with_context(|| format!("parsing MIDI file {}", path.display()))?;
    for warning in &parsed.warnings {
        log::warn!("{}: {warning}", path.display());
    }
    let seq = parsed.sequence;
    Ok(if resolve_sustain { midi::resolve_sustain(&seq) } else { seq })
}

fn read_tsv_score(path: &Path) -> Result<ScorePrediction> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let seq = midi::read_notes_tsv(&text)
        .with_context(|| format!("parsing note table {}", path.display()))?;
    Ok(eval::score_from_sequence(&seq))
}

fn emit(format: Format, value: serde_json::Value, text: impl FnOnce() -> String) -> Result<()> {
    match format {
        Format::Json => println!("{}", serde_json::to_string_pretty(&value)?),
        Format::Text => println!("{}", text()),
    }
    Ok(())
}

/// Reports a bad flag combination through the normal usage-error path
/// (exit code 2 with usage text).
fn usage_error(message: &str) -> ! {
    Cli::command()
        .error(clap::error::ErrorKind::MissingRequiredArgument, message)
        .exit()
}

// ---------------------------------------------------------------------------
// Entry point

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.log_level);
    if let Some(n) = cli.threads {
        if let Err(e) =
            rayon::ThreadPoolBuilder::new().num_threads(n).build_global()
        {
            eprintln!("error: building a {n}-thread pool: {e}");
            return ExitCode::FAILURE;
        }
    }
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn init_logging(level: LogLevel) {
    let filter = match level {
        LogLevel::Error => log::LevelFilter::Error,
        LogLevel::Warn => log::LevelFilter::Warn,
        LogLevel::Info => log::LevelFilter::Info,
        LogLevel::Debug => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(filter)
        .format_timestamp(None)
        .format_target(false)
        .init();
}

fn run(cli: Cli) -> Result<u8> {
    let format = cli.format;
    let seed = cli.seed;
    let file = load_file_config(cli.config.as_deref())?;

    match cli.command {
        Command::Rollify {
            midi,
            out_prefix,
            delta_t,
            frames,
            resolve_sustain,
            prolong,
            notes_tsv,
        } => cmd_rollify(
            format,
            &file,
            &midi,
            &out_prefix,
            delta_t,
            frames,
            resolve_sustain,
            prolong,
            notes_tsv.as_deref(),
        ),
        Command::Frontend { wav, out, preset } => {
            cmd_frontend(format, &file, &wav, &out, preset.as_deref())
        }
        Command::Augment { wav, midi, alpha, beta, out_wav, out_midi, out_tsv } => cmd_augment(
            format,
            &wav,
            &midi,
            alpha,
            beta,
            &out_wav,
            out_midi.as_deref(),
            out_tsv.as_deref(),
        ),
        Command::Infer { spectro, weights, out_prefix, model } => {
            cmd_infer(format, &file, &spectro, &weights, &out_prefix, model)
        }
        Command::Decode { onset, velocity, out, midi_out, sigma, rho, mu, note_length } => {
            cmd_decode(
                format,
                &file,
                &onset,
                &velocity,
                &out,
                midi_out.as_deref(),
                sigma,
                rho,
                mu,
                note_length,
            )
        }
        Command::Loss {
            pred,
            target,
            kind,
            mask,
            pred_onset,
            pred_frame,
            stages,
            velocity_pred,
            midi,
            resolve_sustain,
            lambda,
        } => cmd_loss(
            format,
            &file,
            pred.as_deref(),
            target.as_deref(),
            &kind,
            mask.as_deref(),
            pred_onset.as_deref(),
            pred_frame.as_deref(),
            &stages,
            velocity_pred.as_deref(),
            midi.as_deref(),
            resolve_sustain,
            lambda,
        ),
        Command::Eval {
            reference,
            est,
            corpus,
            velocity,
            alignment,
            onset_tolerance,
            velocity_tolerance,
        } => cmd_eval(
            format,
            &file,
            reference.as_deref(),
            est.as_deref(),
            corpus.as_deref(),
            velocity,
            alignment,
            onset_tolerance,
            velocity_tolerance,
        ),
        Command::Stats { manifest } => cmd_stats(format, &manifest),
        Command::ValidateSplits { manifest, slack } => {
            cmd_validate_splits(format, &manifest, slack)
        }
        Command::Selftest { only } => cmd_selftest(format, seed, only.as_deref()),
        Command::Transcribe {
            wav,
            weights,
            model,
            out,
            midi_out,
            dump_prefix,
            preset,
            sigma,
            rho,
            mu,
            note_length,
        } => cmd_transcribe(
            format,
            &file,
            &wav,
            &weights,
            model,
            &out,
            midi_out.as_deref(),
            dump_prefix.as_deref(),
            preset.as_deref(),
            sigma,
            rho,
            mu,
            note_length,
        ),
        Command::InitWeights { model, out, zeros } => {
            cmd_init_weights(format, &file, seed, model, &out, zeros)
        }
    }
}

// ---------------------------------------------------------------------------
// Subcommand bodies

#[allow(clippy::too_many_arguments)]
fn cmd_rollify(
    format: Format,
    file: &FileConfig,
    midi_path: &Path,
    out_prefix: &Path,
    delta_t: Option<f64>,
    frames: Option<usize>,
    resolve_sustain: bool,
    prolong: bool,
    notes_tsv: Option<&Path>,
) -> Result<u8> {
    let seq = read_midi_file(midi_path, resolve_sustain)?;
    let delta_t = delta_t.unwrap_or_else(|| {
        resolved_frontend(file, None).map(|c| c.delta_t()).unwrap_or(0.024)
    });
    let cfg = RollConfig { delta_t, ..RollConfig::default() };
    debug_echo("roll grid", &json!({"delta_t": cfg.delta_t, "pitch_min": cfg.pitch_min}));
    let labels = roll::quantize(&seq, &cfg, frames)
        .with_context(|| format!("quantizing {}", midi_path.display()))?;

    let mut outputs = Vec::new();
    for (suffix, r) in [
        (".onset.amtr", &labels.onset),
        (".velocity.amtr", &labels.velocity),
        (".frames.amtr", &labels.frames),
    ] {
        let path = suffixed(out_prefix, suffix);
        write_roll_file(&path, r)?;
        outputs.push(path);
    }
    if prolong {
        let (onset3, velocity3) = roll::prolong(&labels.onset, &labels.velocity)?;
        for (suffix, r) in [(".onset3.amtr", &onset3), (".velocity3.amtr", &velocity3)] {
            let path = suffixed(out_prefix, suffix);
            write_roll_file(&path, r)?;
            outputs.push(path);
        }
    }
    if let Some(path) = notes_tsv {
        fs::write(path, midi::write_notes_tsv(&seq))
            .with_context(|| format!("writing {}", path.display()))?;
        outputs.push(path.to_path_buf());
    }

    let onset_cells = labels.onset.active_cells().count();
    emit(
        format,
        json!({
            "input": midi_path,
            "notes": seq.notes.len(),
            "delta_t": delta_t,
            "keys": labels.onset.keys(),
            "frames": labels.onset.frames(),
            "onset_cells": onset_cells,
            "outputs": outputs,
        }),
        || {
            format!(
                "quantized {} notes into {}x{} rolls (frame period {:.0} ms, {} onset cells); wrote {} files",
                seq.notes.len(),
                labels.onset.keys(),
                labels.onset.frames(),
                delta_t * 1e3,
                onset_cells,
                outputs.len()
            )
        },
    )?;
    Ok(0)
}

fn cmd_frontend(
    format: Format,
    file: &FileConfig,
    wav_path: &Path,
    out: &Path,
    preset: Option<&str>,
) -> Result<u8> {
    let cfg = resolved_frontend(file, preset)?;
    let wav = frontend::load_wav(wav_path)
        .with_context(|| format!("reading WAV file {}", wav_path.display()))?;
    let samples = wav.at_rate(cfg.sample_rate);
    let input = frontend::compute(&samples, &cfg)
        .with_context(|| format!("analyzing {}", wav_path.display()))?;
    let out_file = fs::File::create(out).with_context(|| format!("creating {}", out.display()))?;
    let mut w = BufWriter::new(out_file);
    frontend::write_spectro(&input, &cfg, &mut w)
        .with_context(|| format!("writing {}", out.display()))?;
    w.flush().with_context(|| format!("writing {}", out.display()))?;

    emit(
        format,
        json!({
            "input": wav_path,
            "source_sample_rate": wav.sample_rate,
            "sample_rate": cfg.sample_rate,
            "mel_bins": input.mel.rows(),
            "frames": input.mel.cols(),
            "delta_t": input.delta_t,
            "output": out,
        }),
        || {
            format!(
                "computed {} mel bins x {} frames ({:.0} ms grid) from {:.2} s of audio -> {}",
                input.mel.rows(),
                input.mel.cols(),
                input.delta_t * 1e3,
                samples.len() as f64 / cfg.sample_rate as f64,
                out.display()
            )
        },
    )?;
    Ok(0)
}

#[allow(clippy::too_many_arguments)]
fn cmd_augment(
    format: Format,
    wav_path: &Path,
    midi_path: &Path,
    alpha: f64,
    beta: f64,
    out_wav: &Path,
    out_midi: Option<&Path>,
    out_tsv: Option<&Path>,
) -> Result<u8> {
    let wav = frontend::load_wav(wav_path)
        .with_context(|| format!("reading WAV file {}", wav_path.display()))?;
    let seq = read_midi_file(midi_path, false)?;
    let params = amt_core::augment::AugmentParams { alpha, beta };
    debug_echo("augment", &json!({"alpha": alpha, "beta": beta}));
    let pair = amt_core::augment::augment_pair(&wav.samples, &seq, &params)
        .with_context(|| format!("augmenting {}", wav_path.display()))?;
    frontend::save_wav(&pair.samples, wav.sample_rate, out_wav)
        .with_context(|| format!("writing {}", out_wav.display()))?;
    if let Some(path) = out_midi {
        let bytes = midi::write_midi(&pair.labels)?;
        fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))?;
    }
    if let Some(path) = out_tsv {
        fs::write(path, midi::write_notes_tsv(&pair.labels))
            .with_context(|| format!("writing {}", path.display()))?;
    }

    emit(
        format,
        json!({
            "alpha": alpha,
            "beta": beta,
            "input_samples": wav.samples.len(),
            "output_samples": pair.samples.len(),
            "notes": pair.labels.notes.len(),
            "dropped_notes": pair.dropped_notes,
            "output": out_wav,
        }),
        || {
            format!(
                "stretched {} -> {} samples (alpha {alpha}, beta {beta}); {} notes kept, {} dropped -> {}",
                wav.samples.len(),
                pair.samples.len(),
                pair.labels.notes.len(),
                pair.dropped_notes,
                out_wav.display()
            )
        },
    )?;
    Ok(0)
}

fn cmd_infer(
    format: Format,
    file: &FileConfig,
    spectro: &Path,
    weights_path: &Path,
    out_prefix: &Path,
    model: Option<ModelKind>,
) -> Result<u8> {
    let spec_file =
        fs::File::open(spectro).with_context(|| format!("opening {}", spectro.display()))?;
    let input = frontend::read_spectro(&mut BufReader::new(spec_file))
        .with_context(|| format!("reading spectrogram {}", spectro.display()))?;
    let weights = ModelWeights::load(weights_path)
        .with_context(|| format!("loading weights {}", weights_path.display()))?;
    let kind = resolved_model(file, model);
    let spec = kind.spec();
    debug_echo("model", &json!({"model": kind.name()}));
    let output = network::forward(&spec, &weights, &input)
        .with_context(|| format!("running the {} model", kind.name()))?;

    let mut outputs = Vec::new();
    for (i, stage) in output.onset_stages.iter().enumerate() {
        let path = suffixed(out_prefix, &format!(".onset{}.amtr", i + 1));
        write_roll_file(&path, stage)?;
        outputs.push(path);
    }
    let final_onset = output.onset_stages.last().expect("at least one stage");
    let onset_path = suffixed(out_prefix, ".onset.amtr");
    write_roll_file(&onset_path, final_onset)?;
    outputs.push(onset_path);
    let velocity_path = suffixed(out_prefix, ".velocity.amtr");
    write_roll_file(&velocity_path, &output.velocity)?;
    outputs.push(velocity_path);

    emit(
        format,
        json!({
            "spectro": spectro,
            "weights": weights_path,
            "model": kind.name(),
            "stages": output.onset_stages.len(),
            "keys": final_onset.keys(),
            "frames": final_onset.frames(),
            "outputs": outputs,
        }),
        || {
            format!(
                "ran the {} model over {} frames: {} onset stages + velocity -> {} roll files",
                kind.name(),
                final_onset.frames(),
                output.onset_stages.len(),
                outputs.len()
            )
        },
    )?;
    Ok(0)
}

#[allow(clippy::too_many_arguments)]
fn cmd_decode(
    format: Format,
    file: &FileConfig,
    onset: &Path,
    velocity: &Path,
    out: &Path,
    midi_out: Option<&Path>,
    sigma: Option<f64>,
    rho: Option<f64>,
    mu: Option<f64>,
    note_length: Option<f64>,
) -> Result<u8> {
    let onset_roll = read_roll_file(onset)?;
    let velocity_roll = read_roll_file(velocity)?;
    let params = resolved_decoder(file, sigma, rho, mu);
    let note_length = resolved_note_length(file, note_length);
    let score = decoder::decode(&onset_roll, &velocity_roll, &params)?;
    let seq = score.to_note_sequence(note_length);
    fs::write(out, midi::write_notes_tsv(&seq))
        .with_context(|| format!("writing {}", out.display()))?;
    if let Some(path) = midi_out {
        fs::write(path, midi::write_midi(&seq)?)
            .with_context(|| format!("writing {}", path.display()))?;
    }

    emit(
        format,
        json!({
            "onset": onset,
            "velocity": velocity,
            "sigma": params.sigma,
            "rho": params.rho,
            "mu": params.mu,
            "note_length": note_length,
            "notes": score.events.len(),
            "output": out,
        }),
        || {
            format!(
                "decoded {} notes (sigma {}, rho {}, mu {}) -> {}",
                score.events.len(),
                params.sigma,
                params.rho,
                params.mu,
                out.display()
            )
        },
    )?;
    Ok(0)
}

#[allow(clippy::too_many_arguments)]
fn cmd_loss(
    format: Format,
    file: &FileConfig,
    pred: Option<&Path>,
    target: Option<&Path>,
    kind: &str,
    mask: Option<&Path>,
    pred_onset: Option<&Path>,
    pred_frame: Option<&Path>,
    stages: &[PathBuf],
    velocity_pred: Option<&Path>,
    midi_path: Option<&Path>,
    resolve_sustain: bool,
    lambda: Option<f64>,
) -> Result<u8> {
    let cfg = resolved_loss(file, lambda);

    if let Some(pred_path) = pred {
        // single-roll mode
        let Some(parsed_kind) = LossKind::parse(kind) else {
            usage_error(&format!(
                "unknown loss kind `{kind}` (expected bce, frame, frame-weighted, or velocity)"
            ));
        };
        let pred_roll = read_roll_file(pred_path)?;
        let target_roll = read_roll_file(target.expect("clap enforces --target"))?;
        let mask_roll = mask.map(read_roll_file).transpose()?;
        if parsed_kind == LossKind::VelocityMasked && mask_roll.is_none() {
            usage_error("loss kind `velocity` needs --mask with the onset indicator roll");
        }
        let value =
            losses::loss_value(parsed_kind, &pred_roll, &target_roll, mask_roll.as_ref(), &cfg)?;
        emit(format, json!({"mode": "single", "kind": kind, "value": value}), || {
            format!("loss {value:.6}")
        })?;
        return Ok(0);
    }

    if let Some(onset_path) = pred_onset {
        // two-part mode: onset + weighted frame terms against MIDI labels
        let Some(midi_path) = midi_path else {
            usage_error("two-part loss needs --midi with the reference labels");
        };
        let p_onset = read_roll_file(onset_path)?;
        let p_frame = read_roll_file(pred_frame.expect("clap enforces --pred-frame"))?;
        let seq = read_midi_file(midi_path, resolve_sustain)?;
        let b = losses::total_loss(&p_onset, &p_frame, &seq, &cfg)?;
        emit(
            format,
            json!({"mode": "two-part", "onset": b.onset, "frame": b.frame, "total": b.total}),
            || format!("onset {:.6} + frame {:.6} = total {:.6}", b.onset, b.frame, b.total),
        )?;
        return Ok(0);
    }

    // multi-stage mode: per-stage onset terms plus the gated velocity term
    let Some(midi_path) = midi_path else {
        usage_error("multi-stage loss needs --midi with the reference labels");
    };
    let stage_rolls: Vec<PianoRoll> =
        stages.iter().map(|p| read_roll_file(p)).collect::<Result<_>>()?;
    let vel_roll = read_roll_file(velocity_pred.expect("clap enforces --velocity-pred"))?;
    let seq = read_midi_file(midi_path, resolve_sustain)?;
    let frames = stage_rolls[0].frames();
    let roll_cfg = RollConfig { delta_t: stage_rolls[0].delta_t(), ..RollConfig::default() };
    let labels = roll::quantize(&seq, &roll_cfg, Some(frames))?;
    let (onset3, velocity3) = roll::prolong(&labels.onset, &labels.velocity)?;
    let b = losses::multitask_loss(&stage_rolls, &vel_roll, &onset3, &velocity3, &cfg)?;
    emit(
        format,
        json!({
            "mode": "multi-stage",
            "stage_terms": b.stage_terms,
            "velocity_term": b.velocity_term,
            "lambda": b.lambda,
            "total": b.total,
        }),
        || {
            let stages_text = b
                .stage_terms
                .iter()
                .map(|v| format!("{v:.6}"))
                .collect::<Vec<_>>()
                .join(" + ");
            format!(
                "stages {stages_text}; velocity {:.6} (lambda {}); total {:.6}",
                b.velocity_term, b.lambda, b.total
            )
        },
    )?;
    Ok(0)
}

#[allow(clippy::too_many_arguments)]
fn cmd_eval(
    format: Format,
    file: &FileConfig,
    reference: Option<&Path>,
    est: Option<&Path>,
    corpus: Option<&Path>,
    velocity: bool,
    alignment: bool,
    onset_tolerance: Option<f64>,
    velocity_tolerance: Option<f64>,
) -> Result<u8> {
    let cfg = resolved_eval(file, onset_tolerance, velocity_tolerance, velocity);

    let eval_pair = |ref_path: &Path, est_path: &Path| -> Result<serde_json::Value> {
        let ref_score = read_tsv_score(ref_path)?;
        let est_score = read_tsv_score(est_path)?;
        let report = if velocity {
            eval::onset_velocity_eval(&ref_score, &est_score, &cfg)?
        } else {
            eval::onset_eval(&ref_score, &est_score, &cfg)?
        };
        let mut value = serde_json::to_value(report)?;
        if alignment {
            let stats = eval::alignment_stats(&ref_score, &est_score, &cfg)?;
            value["alignment"] = serde_json::to_value(stats)?;
        }
        Ok(value)
    };

    if let Some(corpus_path) = corpus {
        let base = corpus_path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &str| -> PathBuf {
            let p = Path::new(p);
            if p.is_absolute() {
                p.to_path_buf()
            } else {
                base.join(p)
            }
        };
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(corpus_path)
            .with_context(|| format!("reading corpus list {}", corpus_path.display()))?;
        let headers = rdr.headers().map(|h| h.clone()).unwrap_or_default();
        if headers.iter().collect::<Vec<_>>() != ["ref", "est"] {
            bail!(
                "corpus list {}: expected header `ref,est`, found `{}`",
                corpus_path.display(),
                headers.iter().collect::<Vec<_>>().join(",")
            );
        }
        let mut reports = Vec::new();
        let mut align = Vec::new();
        let mut pieces = Vec::new();
        for (i, row) in rdr.records().enumerate() {
            let row = row.with_context(|| {
                format!("corpus list {}: row {}", corpus_path.display(), i + 2)
            })?;
            if row.len() != 2 {
                bail!("corpus list {}: row {} has {} fields", corpus_path.display(), i + 2, row.len());
            }
            let (ref_path, est_path) = (resolve(&row[0]), resolve(&row[1]));
            let ref_score = read_tsv_score(&ref_path)?;
            let est_score = read_tsv_score(&est_path)?;
            let report = if velocity {
                eval::onset_velocity_eval(&ref_score, &est_score, &cfg)?
            } else {
                eval::onset_eval(&ref_score, &est_score, &cfg)?
            };
            let mut piece = serde_json::to_value(report)?;
            piece["ref"] = json!(row[0].to_string());
            piece["est"] = json!(row[1].to_string());
            if alignment {
                let stats = eval::alignment_stats(&ref_score, &est_score, &cfg)?;
                piece["alignment"] = serde_json::to_value(stats)?;
                align.push(stats);
            }
            reports.push(report);
            pieces.push(piece);
        }
        let summary = eval::aggregate_reports(&reports)?;
        let mut value = json!({"pieces": pieces, "summary": summary});
        if alignment {
            value["alignment_summary"] = serde_json::to_value(eval::aggregate_alignment(&align)?)?;
        }
        emit(format, value, || {
            let mut lines: Vec<String> = pieces
                .iter()
                .map(|p| {
                    format!(
                        "{}: P {:.4} R {:.4} F1 {:.4}",
                        p["est"].as_str().unwrap_or("?"),
                        p["precision"].as_f64().unwrap_or(f64::NAN),
                        p["recall"].as_f64().unwrap_or(f64::NAN),
                        p["f1"].as_f64().unwrap_or(f64::NAN),
                    )
                })
                .collect();
            lines.push(format!(
                "{} pieces: median P {:.4} R {:.4} F1 {:.4}; mean F1 {:.4}",
                reports.len(),
                summary.precision.median,
                summary.recall.median,
                summary.f1.median,
                summary.f1.mean,
            ));
            lines.join("\n")
        })?;
        return Ok(0);
    }

    let (Some(ref_path), Some(est_path)) = (reference, est) else {
        usage_error("eval needs either --ref and --est, or --corpus");
    };
    let value = eval_pair(ref_path, est_path)?;
    emit(format, value.clone(), || {
        let mut line = format!(
            "precision {:.4}  recall {:.4}  F1 {:.4}  ({} matched / {} ref / {} est)",
            value["precision"].as_f64().unwrap_or(f64::NAN),
            value["recall"].as_f64().unwrap_or(f64::NAN),
            value["f1"].as_f64().unwrap_or(f64::NAN),
            value["matched"].as_u64().unwrap_or(0),
            value["ref_count"].as_u64().unwrap_or(0),
            value["est_count"].as_u64().unwrap_or(0),
        );
        if let Some(a) = value.get("alignment") {
            line.push_str(&format!(
                "\nalignment: S {:.4}  D {:.4}  I {:.4}  ER {:.4}",
                a["substitution_rate"].as_f64().unwrap_or(f64::NAN),
                a["deletion_rate"].as_f64().unwrap_or(f64::NAN),
                a["insertion_rate"].as_f64().unwrap_or(f64::NAN),
                a["error_rate"].as_f64().unwrap_or(f64::NAN),
            ));
        }
        line
    })?;
    Ok(0)
}

fn cmd_stats(format: Format, manifest_path: &Path) -> Result<u8> {
    let manifest = Manifest::load(manifest_path)
        .with_context(|| format!("loading manifest {}", manifest_path.display()))?;
    let table = dataset::stats(&manifest);
    emit(format, serde_json::to_value(&table)?, || {
        let mut lines = vec![format!(
            "{:<12} {:>13} {:>13} {:>10} {:>12}",
            "split", "performances", "compositions", "hours", "notes"
        )];
        for row in table.rows.iter().chain([&table.total]) {
            lines.push(format!(
                "{:<12} {:>13} {:>13} {:>10.1} {:>12}",
                row.split, row.performances, row.compositions, row.duration_hours, row.notes
            ));
        }
        lines.join("\n")
    })?;
    Ok(0)
}

fn cmd_validate_splits(format: Format, manifest_path: &Path, slack: Option<f64>) -> Result<u8> {
    let manifest = Manifest::load(manifest_path)
        .with_context(|| format!("loading manifest {}", manifest_path.display()))?;
    let slack = slack.unwrap_or(dataset::DEFAULT_SPLIT_SLACK);
    let report = dataset::validate_splits(&manifest, slack)?;
    let clean = report.is_clean();
    let mut value = serde_json::to_value(&report)?;
    value["clean"] = json!(clean);
    emit(format, value, || {
        let mut lines = Vec::new();
        for v in &report.violations {
            lines.push(format!("violation: {v}"));
        }
        for w in &report.warnings {
            lines.push(format!("warning: {w}"));
        }
        if clean {
            lines.push(format!(
                "splits clean: {} entries, no compositions crossing splits (slack {slack} points)",
                manifest.entries.len()
            ));
        } else {
            lines.push(format!("{} violations found", report.violations.len()));
        }
        lines.join("\n")
    })?;
    Ok(if clean { 0 } else { 1 })
}

fn cmd_selftest(format: Format, seed: u64, only: Option<&str>) -> Result<u8> {
    let outcomes = match only {
        Some(name) => {
            let Some((_, check)) = selftest::CHECKS.iter().find(|(n, _)| *n == name) else {
                let known = selftest::CHECKS
                    .iter()
                    .map(|(n, _)| *n)
                    .collect::<Vec<_>>()
                    .join(", ");
                usage_error(&format!("unknown check `{name}` (known checks: {known})"));
            };
            vec![check(seed)]
        }
        None => selftest::run_all(seed),
    };
    let passed = selftest::all_passed(&outcomes);
    emit(
        format,
        json!({"seed": seed, "passed": passed, "checks": outcomes}),
        || {
            let mut lines: Vec<String> = outcomes
                .iter()
                .map(|o| {
                    let status = if o.passed { "PASS" } else { "FAIL" };
                    format!("{status} {} ({:.2}s): {}", o.name, o.duration_secs, o.details)
                })
                .collect();
            let ok = outcomes.iter().filter(|o| o.passed).count();
            lines.push(format!("{ok}/{} checks passed (seed {seed})", outcomes.len()));
            lines.join("\n")
        },
    )?;
    Ok(if passed { 0 } else { 1 })
}

#[allow(clippy::too_many_arguments)]
fn cmd_transcribe(
    format: Format,
    file: &FileConfig,
    wav_path: &Path,
    weights_path: &Path,
    model: Option<ModelKind>,
    out: &Path,
    midi_out: Option<&Path>,
    dump_prefix: Option<&Path>,
    preset: Option<&str>,
    sigma: Option<f64>,
    rho: Option<f64>,
    mu: Option<f64>,
    note_length: Option<f64>,
) -> Result<u8> {
    let wav = frontend::load_wav(wav_path)
        .with_context(|| format!("reading WAV file {}", wav_path.display()))?;
    let weights = ModelWeights::load(weights_path)
        .with_context(|| format!("loading weights {}", weights_path.display()))?;
    let kind = resolved_model(file, model);
    let cfg = PipelineConfig {
        frontend: resolved_frontend(file, preset)?,
        decoder: resolved_decoder(file, sigma, rho, mu),
    };
    let note_length = resolved_note_length(file, note_length);
    let result = pipeline::transcribe(&wav.samples, wav.sample_rate, &kind.spec(), &weights, &cfg)
        .with_context(|| format!("transcribing {}", wav_path.display()))?;
    let seq = result.score.to_note_sequence(note_length);
    fs::write(out, midi::write_notes_tsv(&seq))
        .with_context(|| format!("writing {}", out.display()))?;
    if let Some(path) = midi_out {
        fs::write(path, midi::write_midi(&seq)?)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    if let Some(prefix) = dump_prefix {
        let spec_path = suffixed(prefix, ".spectro.amts");
        let f = fs::File::create(&spec_path)
            .with_context(|| format!("creating {}", spec_path.display()))?;
        let mut w = BufWriter::new(f);
        frontend::write_spectro(&result.input, &cfg.frontend, &mut w)
            .with_context(|| format!("writing {}", spec_path.display()))?;
        w.flush().with_context(|| format!("writing {}", spec_path.display()))?;
        for (i, stage) in result.output.onset_stages.iter().enumerate() {
            write_roll_file(&suffixed(prefix, &format!(".onset{}.amtr", i + 1)), stage)?;
        }
        write_roll_file(&suffixed(prefix, ".onset.amtr"), result.final_onset_roll())?;
        write_roll_file(&suffixed(prefix, ".velocity.amtr"), &result.output.velocity)?;
    }

    emit(
        format,
        json!({
            "input": wav_path,
            "model": kind.name(),
            "sigma": cfg.decoder.sigma,
            "rho": cfg.decoder.rho,
            "mu": cfg.decoder.mu,
            "note_length": note_length,
            "frames": result.input.mel.cols(),
            "notes": seq.notes.len(),
            "output": out,
        }),
        || {
            format!(
                "transcribed {:.2} s of audio with the {} model: {} notes -> {}",
                wav.samples.len() as f64 / wav.sample_rate as f64,
                kind.name(),
                seq.notes.len(),
                out.display()
            )
        },
    )?;
    Ok(0)
}

fn cmd_init_weights(
    format: Format,
    file: &FileConfig,
    seed: u64,
    model: Option<ModelKind>,
    out: &Path,
    zeros: bool,
) -> Result<u8> {
    let kind = resolved_model(file, model);
    let spec = kind.spec();
    let weights =
        if zeros { ModelWeights::zeros(&spec) } else { ModelWeights::random(&spec, seed) };
    weights.save(out).with_context(|| format!("writing {}", out.display()))?;
    let params = network::count_params(&spec);
    emit(
        format,
        json!({
            "model": kind.name(),
            "parameters": params,
            "zeros": zeros,
            "seed": if zeros { serde_json::Value::Null } else { json!(seed) },
            "output": out,
        }),
        || {
            format!(
                "wrote {} {} weights ({params} parameters) -> {}",
                if zeros { "zeroed" } else { "seeded random" },
                kind.name(),
                out.display()
            )
        },
    )?;
    Ok(0)
}
