//! Command-line pipeline: simulate, render, analyze, bpm, report.
//!
//! Exit codes: 0 clean, 2 when hazards are found or a pitch verdict fails,
//! 1 on any error.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::analysis::{
    self, compare_delta_spl, estimate_f0, spectrogram, AnalysisReport, DeltaComparison,
};
use crate::config::Config;
use crate::fingering::Register;
use crate::midi_ingest::{load_score, note_name, Score};
use crate::scheduler::{
    bpm_table, build_timeline, detect_transient_hazards, ActuationProfile, ActuationTimeline,
    Hazard,
};
use crate::synth::{render, AudioBuffer};
use crate::wav::{read_wav, write_wav};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_FINDINGS: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "flute-twin", version, about = "Simulate, render and evaluate a MIDI-driven flute")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OnOff {
    On,
    Off,
}

#[derive(Debug, clap::Args)]
pub struct Common {
    /// Config file (`section.key = value` lines).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override the jet-offset assist (head-joint rotation).
    #[arg(long, value_enum)]
    pub assist: Option<OnOff>,
    /// Override the key-click noise seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Plan actuations and report transient-fingering hazards.
    Simulate {
        score: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Render a score to a WAV file.
    Render {
        score: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate a rendering against its score.
    Analyze {
        wav: PathBuf,
        score: PathBuf,
        /// Rendering made with the assist off, for the ΔSPL comparison.
        #[arg(long)]
        baseline: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Print tempo ceilings implied by an actuation profile.
    Bpm {
        /// Profile file; defaults to the configured one.
        profile: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Merge analysis reports into one summary.
    Report {
        #[arg(required = true)]
        reports: Vec<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

/// Loads the config and applies command-line overrides.
pub fn effective_config(common: &Common) -> Result<Config> {
    let mut cfg = match &common.config {
        Some(p) => Config::load(p).with_context(|| format!("loading config {}", p.display()))?,
        None => Config::default(),
    };
    if let Some(a) = common.assist {
        cfg.scheduler.assist = a == OnOff::On;
    }
    if let Some(s) = common.seed {
        cfg.synth.seed = s;
    }
    if let Some(o) = &common.out {
        cfg.output_dir = o.clone();
    }
    Ok(cfg)
}

pub struct Simulation {
    pub timeline: ActuationTimeline,
    pub hazards: Vec<Hazard>,
}

pub fn simulate(score: &Score, cfg: &Config) -> Result<Simulation> {
    let timeline = build_timeline(score, &cfg.table, &cfg.profile, &cfg.scheduler)?;
    let hazards = detect_transient_hazards(&timeline, &cfg.table, cfg.scheduler.hazard_threshold_ms);
    Ok(Simulation { timeline, hazards })
}

pub fn render_score(score: &Score, cfg: &Config) -> Result<AudioBuffer> {
    let sim = simulate(score, cfg)?;
    Ok(render(&sim.timeline, &cfg.table, &cfg.synth)?)
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map_or_else(|| "score".into(), |s| s.to_string_lossy().into_owned())
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

pub fn cmd_simulate(score_path: &Path, cfg: &Config, out: &mut dyn Write) -> Result<i32> {
    let score = load_score(score_path)?;
    let sim = simulate(&score, cfg)?;
    create_dir(&cfg.output_dir)?;
    let name = stem(score_path);
    let timeline_path = cfg.output_dir.join(format!("{name}.timeline.jsonl"));
    write_file(&timeline_path, &sim.timeline.to_jsonl())?;
    let hazards: Vec<_> = sim
        .hazards
        .iter()
        .map(|h| {
            json!({
                "between": [h.between.0, h.between.1],
                "from": note_name(score.events()[h.between.0].midi_note),
                "to": note_name(score.events()[h.between.1].midi_note),
                "transient_mask": h.transient_mask,
                "sounding_as": h.sounding_as.map(note_name),
                "start_ms": round2(h.start_ms),
                "window_ms": round2(h.window_ms),
            })
        })
        .collect();
    let hazard_path = cfg.output_dir.join(format!("{name}.hazards.json"));
    let doc = json!({
        "config_hash": cfg.hash(),
        "score": score_path.display().to_string(),
        "notes": score.len(),
        "events": sim.timeline.events.len(),
        "threshold_ms": cfg.scheduler.hazard_threshold_ms,
        "hazards": hazards,
    });
    write_file(&hazard_path, &serde_json::to_string_pretty(&doc)?)?;
    writeln!(
        out,
        "{} notes, {} actuation events -> {}",
        score.len(),
        sim.timeline.events.len(),
        timeline_path.display()
    )?;
    for h in &sim.hazards {
        writeln!(
            out,
            "hazard {}->{} ({} -> {}): {} for {:.2} ms{}",
            h.between.0,
            h.between.1,
            note_name(score.events()[h.between.0].midi_note),
            note_name(score.events()[h.between.1].midi_note),
            h.transient_mask,
            h.window_ms,
            h.sounding_as
                .map_or(String::new(), |n| format!(", sounds as {}", note_name(n)))
        )?;
    }
    writeln!(out, "{} hazard(s) -> {}", sim.hazards.len(), hazard_path.display())?;
    Ok(if sim.hazards.is_empty() { EXIT_OK } else { EXIT_FINDINGS })
}

pub fn render_path(score_path: &Path, cfg: &Config) -> PathBuf {
    let assist = if cfg.scheduler.assist { "on" } else { "off" };
    cfg.output_dir
        .join(format!("{}.assist-{assist}.wav", stem(score_path)))
}

pub fn cmd_render(score_path: &Path, cfg: &Config, out: &mut dyn Write) -> Result<i32> {
    let score = load_score(score_path)?;
    let audio = render_score(&score, cfg)?;
    create_dir(&cfg.output_dir)?;
    let path = render_path(score_path, cfg);
    write_wav(&audio, &path)?;
    writeln!(
        out,
        "{} samples ({:.2} s) -> {}",
        audio.len(),
        audio.duration_ms() / 1000.0,
        path.display()
    )?;
    Ok(EXIT_OK)
}

#[derive(Debug, Clone, Serialize)]
pub struct NoteRow {
    pub note_index: usize,
    pub midi_note: u8,
    pub note: String,
    pub register: Register,
    pub onset_ms: f64,
    pub duration_ms: f64,
    pub target_hz: f64,
    pub median_f0_hz: Option<f64>,
    pub deviation_cents: Option<f64>,
    pub pass: bool,
    pub flags: Vec<&'static str>,
    pub spl2_db: Option<f64>,
    pub spl3_db: Option<f64>,
    pub delta_spl_db: Option<f64>,
    pub baseline_delta_spl_db: Option<f64>,
    pub delta_change_db: Option<f64>,
}

/// Columns of `report.csv`, in order.
pub const CSV_COLUMNS: [&str; 16] = [
    "note_index",
    "midi_note",
    "note",
    "register",
    "onset_ms",
    "duration_ms",
    "target_hz",
    "median_f0_hz",
    "deviation_cents",
    "pass",
    "flags",
    "spl2_db",
    "spl3_db",
    "delta_spl_db",
    "baseline_delta_spl_db",
    "delta_change_db",
];

fn opt(v: Option<f64>, digits: usize) -> String {
    v.map_or(String::new(), |x| format!("{x:.digits$}"))
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

pub fn rows_to_csv(rows: &[NoteRow]) -> String {
    let mut s = CSV_COLUMNS.join(",");
    s.push('\n');
    for r in rows {
        writeln!(
            s,
            "{},{},{},{:?},{:.3},{:.3},{:.4},{},{},{},{},{},{},{},{},{}",
            r.note_index,
            r.midi_note,
            r.note,
            r.register,
            r.onset_ms,
            r.duration_ms,
            r.target_hz,
            opt(r.median_f0_hz, 4),
            opt(r.deviation_cents, 3),
            r.pass,
            r.flags.join(";"),
            opt(r.spl2_db, 3),
            opt(r.spl3_db, 3),
            opt(r.delta_spl_db, 3),
            opt(r.baseline_delta_spl_db, 3),
            opt(r.delta_change_db, 3),
        )
        .expect("string write");
    }
    s
}

pub struct Analysis {
    pub report: AnalysisReport,
    pub baseline: Option<AnalysisReport>,
    pub comparison: Option<DeltaComparison>,
    pub rows: Vec<NoteRow>,
}

impl Analysis {
    pub fn median_abs_deviation(&self) -> Option<f64> {
        let mut d: Vec<f64> = self
            .report
            .verdicts
            .iter()
            .filter_map(|v| v.deviation_cents.map(f64::abs))
            .collect();
        if d.is_empty() {
            return None;
        }
        d.sort_by(f64::total_cmp);
        let m = d.len() / 2;
        Some(if d.len() % 2 == 1 { d[m] } else { 0.5 * (d[m - 1] + d[m]) })
    }
}

/// Evaluates `audio` (and optionally an assist-off `baseline`) against a
/// score on the score clock; the configured lead-in is applied here.
pub fn analyze_audio(
    audio: &AudioBuffer,
    baseline: Option<&AudioBuffer>,
    score: &Score,
    cfg: &Config,
) -> Result<Analysis> {
    let shifted = score.shifted(cfg.scheduler.lead_in_ms);
    let report = analysis::analyze(audio, &shifted, cfg.synth.a4_hz, &cfg.analysis)?;
    let registers = analysis::registers(score, &cfg.scheduler.registers);
    let baseline = baseline
        .map(|b| analysis::analyze(b, &shifted, cfg.synth.a4_hz, &cfg.analysis))
        .transpose()?;
    let comparison = match &baseline {
        Some(b) => {
            let (mut on, mut off, mut reg) = (Vec::new(), Vec::new(), Vec::new());
            for i in 0..score.len() {
                if let (Some(x), Some(y)) = (&report.harmonics[i], &b.harmonics[i]) {
                    on.push(x.clone());
                    off.push(y.clone());
                    reg.push(registers[i]);
                }
            }
            Some(compare_delta_spl(&on, &off, &reg)?)
        }
        None => None,
    };
    let rows = score
        .events()
        .iter()
        .enumerate()
        .map(|(i, n)| {
            let v = &report.verdicts[i];
            let h = report.harmonics[i].as_ref();
            let bh = baseline.as_ref().and_then(|b| b.harmonics[i].as_ref());
            NoteRow {
                note_index: i,
                midi_note: n.midi_note,
                note: note_name(n.midi_note),
                register: registers[i],
                onset_ms: n.onset_ms,
                duration_ms: n.duration_ms,
                target_hz: v.target_hz,
                median_f0_hz: v.median_f0_hz,
                deviation_cents: v.deviation_cents,
                pass: v.pass,
                flags: v.flags.iter().map(|f| f.name()).collect(),
                spl2_db: h.map(|h| h.spl2_db),
                spl3_db: h.map(|h| h.spl3_db),
                delta_spl_db: h.map(|h| h.delta_spl_db),
                baseline_delta_spl_db: bh.map(|h| h.delta_spl_db),
                delta_change_db: h.zip(bh).map(|(a, b)| a.delta_spl_db - b.delta_spl_db),
            }
        })
        .collect();
    Ok(Analysis {
        report,
        baseline,
        comparison,
        rows,
    })
}

pub fn cmd_analyze(
    wav_path: &Path,
    score_path: &Path,
    baseline_path: Option<&Path>,
    cfg: &Config,
    out: &mut dyn Write,
) -> Result<i32> {
    let score = load_score(score_path)?;
    let audio = read_wav(wav_path).with_context(|| format!("reading {}", wav_path.display()))?;
    if audio.sample_rate_hz != cfg.synth.sample_rate_hz {
        bail!(
            "{} is sampled at {} Hz but the config expects {} Hz",
            wav_path.display(),
            audio.sample_rate_hz,
            cfg.synth.sample_rate_hz
        );
    }
    let baseline = baseline_path
        .map(|p| read_wav(p).with_context(|| format!("reading {}", p.display())))
        .transpose()?;
    let a = analyze_audio(&audio, baseline.as_ref(), &score, cfg)?;

    create_dir(&cfg.output_dir)?;
    let dir = &cfg.output_dir;
    let passed = a.report.passed();
    let empty = a.report.verdicts.iter().filter(|v| v.median_f0_hz.is_none()).count();
    let doc = json!({
        "config_hash": cfg.hash(),
        "wav": wav_path.display().to_string(),
        "baseline": baseline_path.map(|p| p.display().to_string()),
        "score": score_path.display().to_string(),
        "lead_in_ms": cfg.scheduler.lead_in_ms,
        "csv_columns": CSV_COLUMNS,
        "summary": {
            "notes": score.len(),
            "passed": passed,
            "empty_notes": empty,
            "median_abs_deviation_cents": a.median_abs_deviation(),
            "note_sequence": score.notes(),
            "detected_sequence": a.report.verdicts.iter().map(|v| v.detected_midi).collect::<Vec<_>>(),
        },
        "notes": a.rows,
        "verdicts": a.report.verdicts,
        "harmonics": a.report.harmonic_list(),
        "comparison": a.comparison,
    });
    write_file(&dir.join("report.json"), &serde_json::to_string_pretty(&doc)?)?;
    write_file(&dir.join("report.csv"), &rows_to_csv(&a.rows))?;
    let spec = spectrogram(
        &audio,
        cfg.analysis.spectrogram_window_ms,
        cfg.analysis.spectrogram_hop_ms,
    )?;
    write_file(&dir.join("spectrogram.csv"), &spec.to_csv())?;
    let track = estimate_f0(
        &audio,
        cfg.analysis.frame_ms,
        cfg.analysis.hop_ms,
        cfg.analysis.fmin_hz,
        cfg.analysis.fmax_hz,
    )?;
    write_file(&dir.join("f0.csv"), &track.to_csv())?;

    writeln!(out, "{passed}/{} notes within ±{} cents", score.len(), cfg.analysis.tol_cents)?;
    if empty > 0 {
        writeln!(out, "{empty} note(s) without a voiced frame")?;
    }
    if let Some(m) = a.median_abs_deviation() {
        writeln!(out, "median |deviation| {m:.2} cents")?;
    }
    if let Some(c) = &a.comparison {
        writeln!(out, "note  register  ΔSPL on  ΔSPL off  change")?;
        for r in &c.rows {
            writeln!(
                out,
                "{:>4}  {:<8}  {:>7.2}  {:>8.2}  {:>+6.2}",
                r.note_index,
                format!("{:?}", r.register),
                r.delta_on_db,
                r.delta_off_db,
                r.difference_db
            )?;
        }
        writeln!(
            out,
            "low register all increased: {}; middle register consistent change: {}",
            c.low_all_increased, c.middle_consistent_change
        )?;
    }
    writeln!(out, "reports -> {}", dir.display())?;
    Ok(if a.report.all_pass() { EXIT_OK } else { EXIT_FINDINGS })
}

pub fn cmd_bpm(profile: &ActuationProfile, out: &mut dyn Write) -> Result<i32> {
    let (key, key_ms) = profile.slowest_key();
    let limits = [
        (format!("fingering ({key} key, {key_ms:.2} ms)"), key_ms),
        (format!("head joint ({:.2} ms)", profile.head_joint_ms), profile.head_joint_ms),
    ];
    for (title, limit) in limits {
        let table = bpm_table(limit)?;
        writeln!(out, "{title}")?;
        for (value, l) in table {
            if l.is_feasible() {
                writeln!(out, "  {:<9} {:>6} BPM", value.name(), l.bpm)?;
            } else {
                writeln!(out, "  {:<9} {:>6} BPM (infeasible: below 1 BPM)", value.name(), l.bpm)?;
            }
        }
        writeln!(out, "  measure   {:>6.2} s", table[0].1.measure_s)?;
    }
    Ok(EXIT_OK)
}

pub fn cmd_report(reports: &[PathBuf], cfg: &Config, out: &mut dyn Write) -> Result<i32> {
    let mut entries = Vec::new();
    let mut all_pass = true;
    for p in reports {
        let path = if p.is_dir() { p.join("report.json") } else { p.clone() };
        let text = std::fs::read_to_string(&path)
            .with_context(|| format!("reading {}", path.display()))?;
        let doc: serde_json::Value =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let summary = &doc["summary"];
        let (notes, passed) = (summary["notes"].as_u64(), summary["passed"].as_u64());
        let (Some(notes), Some(passed)) = (notes, passed) else {
            bail!("{} is not an analysis report", path.display());
        };
        all_pass &= notes == passed;
        writeln!(
            out,
            "{}: {passed}/{notes} pass, median |dev| {} cents{}",
            path.display(),
            summary["median_abs_deviation_cents"]
                .as_f64()
                .map_or("-".into(), |m| format!("{m:.2}")),
            doc["comparison"]["low_all_increased"]
                .as_bool()
                .map_or(String::new(), |b| format!(", low ΔSPL increased: {b}"))
        )?;
        entries.push(json!({
            "report": path.display().to_string(),
            "config_hash": doc["config_hash"],
            "wav": doc["wav"],
            "score": doc["score"],
            "summary": summary,
            "comparison": doc["comparison"],
        }));
    }
    create_dir(&cfg.output_dir)?;
    let path = cfg.output_dir.join("summary.json");
    let doc = json!({ "config_hash": cfg.hash(), "reports": entries, "all_pass": all_pass });
    write_file(&path, &serde_json::to_string_pretty(&doc)?)?;
    writeln!(out, "summary -> {}", path.display())?;
    Ok(if all_pass { EXIT_OK } else { EXIT_FINDINGS })
}

fn dispatch(cli: Cli, out: &mut dyn Write) -> Result<i32> {
    match cli.command {
        Command::Simulate { score, common } => cmd_simulate(&score, &effective_config(&common)?, out),
        Command::Render { score, common } => cmd_render(&score, &effective_config(&common)?, out),
        Command::Analyze {
            wav,
            score,
            baseline,
            common,
        } => cmd_analyze(&wav, &score, baseline.as_deref(), &effective_config(&common)?, out),
        Command::Bpm { profile, common } => {
            let profile = match profile {
                Some(p) => {
                    let text = std::fs::read_to_string(&p)
                        .with_context(|| format!("reading {}", p.display()))?;
                    ActuationProfile::parse(&text)
                        .with_context(|| format!("loading profile {}", p.display()))?
                }
                None => effective_config(&common)?.profile,
            };
            cmd_bpm(&profile, out)
        }
        Command::Report { reports, common } => cmd_report(&reports, &effective_config(&common)?, out),
    }
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
            let _ = write!(err, "{e}");
            return code;
        }
    };
    match dispatch(cli, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e:#}");
            EXIT_ERROR
        }
    }
}
