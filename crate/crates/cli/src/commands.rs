//! Command-line surface. Every subcommand reads its inputs, computes in
//! memory, and commits outputs plus a provenance manifest at the end.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use biodecode::artifact::{fit_ocular_model, reconstruct};
use biodecode::eval::{
    cascade_stream, fit_pipeline, loocv, me_stream, PipelineConfig, StreamReport, Task, TrialData,
};
use biodecode::recording::{epoch_at, ChannelKind, ClassLabel, Session, Transition};
use biodecode::tfa::{ersp, matrix_text};
use clap::{Parser, Subcommand};
use ndarray::{concatenate, Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::Serialize;

use crate::bundle::{bundle_files, encode_bundle, read_bundle, Bundle};
use crate::config::Config;
use crate::error::{CliError, CliResult};
use crate::fsio::{self, Outputs};
use crate::manifest::Manifest;
use crate::pipeline::{attach_onsets, detect_onsets, emg_envelopes, load_trials, preprocess_eeg, TrialOnset};
use crate::report::{
    pooled, table_i, table_ii, LoocvSummary, StreamSummary, LOOCV_SUMMARY, STREAM_SUMMARY,
};
use crate::synth::{subject_id, synth_recording, SynthSpec};

pub const EEG_DIR: &str = "eeg";
pub const EMG_DIR: &str = "emg";
pub const TRUTH_FILE: &str = "truth.json";

#[derive(Debug, Parser)]
#[command(name = "biodecode", version, about = "EEG/EMG/EOG decoding of action observation, imagery and execution")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Flat key = value configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub subject: Option<String>,
    /// sit_to_stand or stand_to_sit.
    #[arg(long, global = true)]
    pub transition: Option<Transition>,
    /// MI or ME.
    #[arg(long, global = true)]
    pub session: Option<Session>,
    /// r_ao, ao_mi or ao_mrcp.
    #[arg(long, global = true)]
    pub task: Option<Task>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic recordings with a ground-truth sidecar.
    Synth,
    /// Notch, band-limit and down-sample EEG/EOG.
    Preprocess {
        #[arg(long)]
        input: PathBuf,
    },
    /// Detect EMG movement onsets and attach them to the EEG events.
    Onset {
        #[arg(long)]
        input: PathBuf,
    },
    /// Fit the full pipeline on every trial and save the model.
    Train {
        #[arg(long)]
        input: PathBuf,
    },
    /// Leave-one-trial-out evaluation.
    EvalLoocv {
        #[arg(long)]
        input: PathBuf,
    },
    /// Pseudo-online replay of held-out trials.
    Stream {
        #[arg(long)]
        input: PathBuf,
    },
    /// Baseline-normalized time-frequency maps with significance masks.
    Ersp {
        #[arg(long)]
        input: PathBuf,
    },
    /// Sweep the onset threshold multiplier and score AO vs MRCP.
    SweepH {
        #[arg(long)]
        input: PathBuf,
    },
    /// Collect summaries into the accuracy and detection-rate tables.
    Report {
        #[arg(long, required = true, num_args = 1..)]
        input: Vec<PathBuf>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Synth => "synth",
            Self::Preprocess { .. } => "preprocess",
            Self::Onset { .. } => "onset",
            Self::Train { .. } => "train",
            Self::EvalLoocv { .. } => "eval-loocv",
            Self::Stream { .. } => "stream",
            Self::Ersp { .. } => "ersp",
            Self::SweepH { .. } => "sweep-h",
            Self::Report { .. } => "report",
        }
    }
}

/// Runs a parsed command line and maps the outcome to an exit code.
pub fn run_cli(cli: Cli) -> i32 {
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            e.exit_code()
        }
    }
}

struct Ctx<'a> {
    cli: &'a Cli,
    config: Config,
    config_bytes: Option<Vec<u8>>,
    out: PathBuf,
    seed: u64,
}

impl Ctx<'_> {
    fn manifest(&self, inputs: &[PathBuf], outputs: &mut Outputs) -> CliResult<()> {
        let m = Manifest::new(self.cli.command.name(), self.seed, self.config_bytes.as_deref(), inputs)?;
        m.attach(&self.out, outputs);
        Ok(())
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

pub fn run(cli: &Cli) -> CliResult<()> {
    let (config, config_bytes) = match &cli.config {
        Some(p) => {
            let bytes = fsio::read(p)?;
            let text = String::from_utf8(bytes.clone()).map_err(|_| CliError::schema(p, "not UTF-8"))?;
            (Config::parse(&text, p)?, Some(bytes))
        }
        None => (Config::default(), None),
    };
    let out = cli
        .out
        .clone()
        .ok_or_else(|| CliError::Config(format!("{} needs --out", cli.command.name())))?;
    let seed = cli.seed.or(config.get_opt("seed")?).unwrap_or(0);
    let ctx = Ctx { cli, config, config_bytes, out, seed };
    match &cli.command {
        Command::Synth => synth(&ctx),
        Command::Preprocess { input } => preprocess(&ctx, input),
        Command::Onset { input } => onset(&ctx, input),
        Command::Train { input } => train(&ctx, input),
        Command::EvalLoocv { input } => eval_loocv(&ctx, input),
        Command::Stream { input } => stream(&ctx, input),
        Command::Ersp { input } => ersp_cmd(&ctx, input),
        Command::SweepH { input } => sweep_h(&ctx, input),
        Command::Report { input } => report(&ctx, input),
    }
}

fn add_bundle(outputs: &mut Outputs, dir: &Path, bundle: &Bundle) {
    for (name, bytes) in encode_bundle(bundle) {
        outputs.add(dir.join(name), bytes);
    }
}

fn json<T: Serialize>(v: &T) -> Vec<u8> {
    serde_json::to_vec_pretty(v).expect("serializable")
}

fn synth(ctx: &Ctx) -> CliResult<()> {
    let spec = SynthSpec::from_config(&ctx.config, ctx.cli.seed)?;
    let mut outputs = Outputs::default();
    for subject in 0..spec.subjects {
        let id = subject_id(subject);
        if ctx.cli.subject.as_ref().is_some_and(|s| *s != id) {
            continue;
        }
        for &session in &spec.sessions {
            if ctx.cli.session.is_some_and(|s| s != session) {
                continue;
            }
            for &transition in &spec.transitions {
                if ctx.cli.transition.is_some_and(|t| t != transition) {
                    continue;
                }
                let rec = synth_recording(&spec, subject, session, transition)?;
                let dir = ctx.out.join(&id).join(session.as_str()).join(transition.as_str());
                add_bundle(&mut outputs, &dir.join(EEG_DIR), &rec.eeg);
                add_bundle(&mut outputs, &dir.join(EMG_DIR), &rec.emg);
                outputs.add(dir.join(TRUTH_FILE), json(&rec.truth));
            }
        }
    }
    if outputs.paths().next().is_none() {
        return Err(CliError::Config("filters select no subject/session/transition".into()));
    }
    outputs.add(ctx.path("synth_spec.json"), json(&spec));
    let inputs: Vec<PathBuf> = ctx.cli.config.iter().cloned().collect();
    ctx.manifest(&inputs, &mut outputs)?;
    outputs.commit()
}

/// Reads `<input>/eeg` and checks it against the session/subject/transition
/// flags.
fn read_eeg(ctx: &Ctx, input: &Path) -> CliResult<(Bundle, Vec<PathBuf>)> {
    let dir = input.join(EEG_DIR);
    let b = read_bundle(&dir)?;
    let cli = ctx.cli;
    if let Some(s) = cli.session.filter(|s| *s != b.session) {
        return Err(CliError::Config(format!("--session {s} but the bundle is {}", b.session)));
    }
    if let Some(t) = cli.transition.filter(|t| *t != b.transition) {
        return Err(CliError::Config(format!("--transition {t} but the bundle is {}", b.transition)));
    }
    if let Some(s) = cli.subject.as_ref().filter(|s| **s != b.subject) {
        return Err(CliError::Config(format!("--subject {s} but the bundle is {}", b.subject)));
    }
    Ok((b, bundle_files(&dir)))
}

fn read_emg(input: &Path) -> CliResult<(Bundle, Vec<PathBuf>)> {
    let dir = input.join(EMG_DIR);
    Ok((read_bundle(&dir)?, bundle_files(&dir)))
}

fn preprocess(ctx: &Ctx, input: &Path) -> CliResult<()> {
    let cfg = ctx.config.preprocess()?;
    let (eeg, mut inputs) = read_eeg(ctx, input)?;
    let mut outputs = Outputs::default();
    add_bundle(&mut outputs, &ctx.path(EEG_DIR), &preprocess_eeg(&eeg, &cfg)?);
    if input.join(EMG_DIR).exists() {
        let (emg, files) = read_emg(input)?;
        add_bundle(&mut outputs, &ctx.path(EMG_DIR), &emg);
        inputs.extend(files);
    }
    outputs.add(ctx.path("preprocess.json"), json(&cfg));
    ctx.manifest(&inputs, &mut outputs)?;
    outputs.commit()
}

fn onsets_csv(onsets: &[TrialOnset]) -> String {
    let mut s = String::from("trial,cue_sample,onset_sample,latency_s,channel\n");
    for o in onsets {
        let opt = |v: Option<String>| v.unwrap_or_default();
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            o.trial,
            o.cue_sample,
            opt(o.onset_sample.map(|v| v.to_string())),
            opt(o.latency_s.map(|v| format!("{v:.4}"))),
            opt(o.channel.map(|v| v.to_string()))
        );
    }
    s
}

fn onset(ctx: &Ctx, input: &Path) -> CliResult<()> {
    let cfg = ctx.config.onset()?;
    let (eeg, mut inputs) = read_eeg(ctx, input)?;
    let (emg, files) = read_emg(input)?;
    inputs.extend(files);
    let env = emg_envelopes(&emg.recording)?;
    let onsets = detect_onsets(&emg.recording, &env, &cfg)?;
    let mut outputs = Outputs::default();
    add_bundle(&mut outputs, &ctx.path(EEG_DIR), &attach_onsets(&eeg, emg.recording.fs(), &onsets)?);
    add_bundle(&mut outputs, &ctx.path(EMG_DIR), &emg);
    outputs.add(ctx.path("onsets.csv"), onsets_csv(&onsets));
    ctx.manifest(&inputs, &mut outputs)?;
    outputs.commit()
}

fn task_for(ctx: &Ctx, session: Session) -> CliResult<Task> {
    let task = ctx.cli.task.unwrap_or(match session {
        Session::Mi => Task::AoVsMi,
        Session::Me => Task::AoVsMrcp,
    });
    if task.session() != session {
        return Err(CliError::Config(format!("task {task} cannot run on a {session} recording")));
    }
    Ok(task)
}

struct Prepared {
    eeg: Bundle,
    inputs: Vec<PathBuf>,
    trials: Vec<TrialData>,
    dropped: Vec<usize>,
}

fn prepare(ctx: &Ctx, input: &Path, task: Option<Task>) -> CliResult<Prepared> {
    let (eeg, inputs) = read_eeg(ctx, input)?;
    let need_movement = task.is_some_and(|t| t == Task::AoVsMrcp);
    let (trials, dropped) = load_trials(&eeg, need_movement)?;
    if trials.len() < 3 {
        return Err(CliError::Config(format!(
            "{} usable trials (dropped {:?}); at least 3 are needed",
            trials.len(),
            dropped
        )));
    }
    Ok(Prepared { eeg, inputs, trials, dropped })
}

fn pipeline_config(ctx: &Ctx, task: Task, transition: Transition) -> CliResult<PipelineConfig> {
    ctx.config.pipeline(task, transition, ctx.seed)
}

fn train(ctx: &Ctx, input: &Path) -> CliResult<()> {
    let (probe, _) = read_eeg(ctx, input)?;
    let task = task_for(ctx, probe.session)?;
    let p = prepare(ctx, input, Some(task))?;
    let cfg = pipeline_config(ctx, task, p.eeg.transition)?;
    let refs: Vec<&TrialData> = p.trials.iter().collect();
    let model = fit_pipeline(&refs, &cfg)?;
    let mut outputs = Outputs::default();
    outputs.add(ctx.path("model.json"), json(&model));
    outputs.add(ctx.path("pipeline_config.json"), json(&cfg));
    ctx.manifest(&p.inputs, &mut outputs)?;
    outputs.commit()
}

fn folds_csv(summary: &LoocvSummary) -> String {
    let mut s = String::from("fold,correct,total,accuracy,kernel,c,gamma,cv_accuracy,flag\n");
    for f in &summary.folds {
        let acc = f.accuracy.map(|a| format!("{a:.6}")).unwrap_or_default();
        let (kernel, c, gamma) = f
            .best
            .map(|b| (b.kernel.kind.as_str().to_string(), b.c.to_string(), b.kernel.gamma.to_string()))
            .unwrap_or_default();
        let cv = f.best_cv_accuracy.map(|a| format!("{a:.6}")).unwrap_or_default();
        let flag = f.flag.clone().unwrap_or_default().replace(',', ";");
        let _ = writeln!(s, "{},{},{},{acc},{kernel},{c},{gamma},{cv},{flag}", f.fold, f.correct, f.total);
    }
    s
}

fn fmt_pct(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |x| format!("{:.2}", 100.0 * x))
}

fn eval_loocv(ctx: &Ctx, input: &Path) -> CliResult<()> {
    let (probe, _) = read_eeg(ctx, input)?;
    let task = task_for(ctx, probe.session)?;
    let p = prepare(ctx, input, Some(task))?;
    let cfg = pipeline_config(ctx, task, p.eeg.transition)?;
    let report = loocv(&p.trials, &cfg)?;
    let summary = LoocvSummary {
        subject: p.eeg.subject.clone(),
        session: p.eeg.session,
        transition: p.eeg.transition,
        task,
        mean: report.mean,
        se: report.se,
        n_flagged: report.n_flagged,
        dropped_trials: p.dropped.clone(),
        folds: report.folds,
    };
    let table = folds_csv(&summary);
    println!("{table}mean = {} % +- {} % (SE), flagged folds = {}", fmt_pct(summary.mean), fmt_pct(summary.se), summary.n_flagged);
    let mut outputs = Outputs::default();
    outputs.add(ctx.path("folds.csv"), table);
    outputs.add(ctx.path(LOOCV_SUMMARY), json(&summary));
    ctx.manifest(&p.inputs, &mut outputs)?;
    outputs.commit()
}

fn others(trials: &[TrialData], k: usize) -> Vec<&TrialData> {
    trials.iter().enumerate().filter(|(i, _)| *i != k).map(|(_, t)| t).collect()
}

fn stream(ctx: &Ctx, input: &Path) -> CliResult<()> {
    let (probe, _) = read_eeg(ctx, input)?;
    let session = probe.session;
    let task = (session == Session::Me).then_some(Task::AoVsMrcp);
    let p = prepare(ctx, input, task)?;
    let transition = p.eeg.transition;
    let scfg = ctx.config.stream(session)?;
    let reports: Vec<StreamReport> = (0..p.trials.len())
        .into_par_iter()
        .map(|k| -> CliResult<StreamReport> {
            let train = others(&p.trials, k);
            match session {
                Session::Mi => {
                    let s1 = fit_pipeline(&train, &pipeline_config(ctx, Task::RvsAo, transition)?)?;
                    let s2 = fit_pipeline(&train, &pipeline_config(ctx, Task::AoVsMi, transition)?)?;
                    Ok(cascade_stream(&p.trials[k], &s1, &s2, &scfg)?)
                }
                Session::Me => {
                    let m = fit_pipeline(&train, &pipeline_config(ctx, Task::AoVsMrcp, transition)?)?;
                    Ok(me_stream(&p.trials[k], &m, &scfg)?)
                }
            }
        })
        .collect::<CliResult<_>>()?;
    let n_windows = reports.first().map_or(0, |r| r.decisions.len());
    let mut raster = String::from("trial");
    for w in 0..n_windows {
        let _ = write!(raster, ",w{w}");
    }
    raster.push('\n');
    for (k, r) in reports.iter().enumerate() {
        let labels: Vec<&str> = r.decisions.iter().map(ClassLabel::as_str).collect();
        let _ = writeln!(raster, "{k},{}", labels.join(","));
    }
    let per_trial: Vec<_> = reports.iter().map(|r| r.counts).collect();
    let (counts, rates) = pooled(&per_trial);
    let summary = StreamSummary {
        subject: p.eeg.subject.clone(),
        session,
        transition,
        n_windows,
        counts,
        rates,
        per_trial,
        switch_windows: reports.iter().map(|r| r.switch_window).collect(),
    };
    println!(
        "{} windows per trial; TPR {} % FPR {} % FNR {} %",
        n_windows,
        fmt_pct(rates.tpr.value()),
        fmt_pct(rates.fpr.value()),
        fmt_pct(rates.fnr.value())
    );
    let mut outputs = Outputs::default();
    outputs.add(ctx.path("raster.csv"), raster);
    outputs.add(ctx.path(STREAM_SUMMARY), json(&summary));
    ctx.manifest(&p.inputs, &mut outputs)?;
    outputs.commit()
}

#[derive(Debug, Serialize)]
struct ErspSummary {
    channels: Vec<String>,
    freqs_hz: Vec<f64>,
    times_s: Vec<f64>,
    significant_fraction: f64,
    ica_rejected: Vec<usize>,
}

fn ersp_cmd(ctx: &Ctx, input: &Path) -> CliResult<()> {
    let (ecfg, end_s) = ctx.config.ersp(ctx.seed)?;
    let p = prepare(ctx, input, None)?;
    let use_ica = ctx.config.get("ica", true)?;
    let ica = if use_ica {
        let eeg: Vec<ArrayView2<f64>> = p.trials.iter().map(|t| t.eeg.view()).collect();
        let eog = p
            .trials
            .iter()
            .map(|t| t.eog.as_ref().map(|e| e.view()))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| CliError::Config("ICA needs EOG channels (set ica = false to skip)".into()))?;
        let cat = |v: &[ArrayView2<f64>]| concatenate(Axis(1), v).map_err(|e| biodecode::Error::Shape(e.to_string()));
        let thr = ctx.config.get("eog_threshold", biodecode::artifact::DEFAULT_EOG_THRESHOLD)?;
        Some(fit_ocular_model(cat(&eeg)?.view(), cat(&eog)?.view(), thr, ctx.seed)?)
    } else {
        None
    };
    let epochs: Vec<Array2<f64>> = p
        .trials
        .iter()
        .enumerate()
        .map(|(k, t)| {
            let clean = match &ica {
                Some(d) => reconstruct(d, t.eeg.view())?,
                None => t.eeg.clone(),
            };
            epoch_at(clean.view(), t.fs, t.rest_onset, ecfg.epoch_start_s, end_s, k)
        })
        .collect::<biodecode::Result<_>>()?;
    let result = ersp(&epochs, p.trials[0].fs, &ecfg)?;
    let names: Vec<String> = p
        .eeg
        .recording
        .channels()
        .iter()
        .filter(|c| c.kind == ChannelKind::Eeg)
        .map(|c| c.name.clone())
        .collect();
    let mut outputs = Outputs::default();
    for (name, ch) in names.iter().zip(&result.channels) {
        outputs.add(ctx.path(&format!("ersp_{name}.txt")), matrix_text(&result.freqs_hz, &result.times_s, ch.power_db.view()));
        let mask = ch.significant.mapv(|s| if s { 1.0 } else { 0.0 });
        outputs.add(ctx.path(&format!("mask_{name}.txt")), matrix_text(&result.freqs_hz, &result.times_s, mask.view()));
    }
    let summary = ErspSummary {
        channels: names,
        freqs_hz: result.freqs_hz.clone(),
        times_s: result.times_s.clone(),
        significant_fraction: result.significant_fraction(),
        ica_rejected: ica.map(|d| d.rejected.iter().copied().collect()).unwrap_or_default(),
    };
    outputs.add(ctx.path("ersp_summary.json"), json(&summary));
    ctx.manifest(&p.inputs, &mut outputs)?;
    outputs.commit()
}

#[derive(Debug, Serialize)]
struct SweepRow {
    h: f64,
    n_detected: usize,
    mean: Option<f64>,
    se: Option<f64>,
}

fn sweep_h(ctx: &Ctx, input: &Path) -> CliResult<()> {
    let (eeg, mut inputs) = read_eeg(ctx, input)?;
    if eeg.session != Session::Me {
        return Err(CliError::Config("sweep-h scores AO vs MRCP and needs an ME recording".into()));
    }
    let (emg, files) = read_emg(input)?;
    inputs.extend(files);
    let lo: u32 = ctx.config.get("sweep_h_min", 3)?;
    let hi: u32 = ctx.config.get("sweep_h_max", 20)?;
    if lo == 0 || hi < lo {
        return Err(CliError::Config(format!("bad sweep range {lo}..={hi}")));
    }
    let base = ctx.config.onset()?;
    let env = emg_envelopes(&emg.recording)?;
    let cfg = pipeline_config(ctx, Task::AoVsMrcp, eeg.transition)?;
    let rows: Vec<SweepRow> = (lo..=hi)
        .map(|h| -> CliResult<SweepRow> {
            let onset_cfg = biodecode::onset::OnsetConfig { h: h as f64, ..base };
            let onsets = detect_onsets(&emg.recording, &env, &onset_cfg)?;
            let tagged = attach_onsets(&eeg, emg.recording.fs(), &onsets)?;
            let (trials, _) = load_trials(&tagged, true)?;
            let n_detected = trials.len();
            let (mean, se) = if n_detected >= 3 {
                let r = loocv(&trials, &cfg)?;
                (r.mean, r.se)
            } else {
                (None, None)
            };
            Ok(SweepRow { h: h as f64, n_detected, mean, se })
        })
        .collect::<CliResult<_>>()?;
    let best = rows
        .iter()
        .filter(|r| r.mean.is_some())
        .fold(None::<&SweepRow>, |b, r| match b {
            Some(b) if b.mean >= r.mean => Some(b),
            _ => Some(r),
        });
    let mut csv = String::from("h,n_detected,mean,se\n");
    for r in &rows {
        let f = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        let _ = writeln!(csv, "{},{},{},{}", r.h, r.n_detected, f(r.mean), f(r.se));
    }
    println!("{csv}best h = {}", best.map_or("none".into(), |b| b.h.to_string()));
    let mut outputs = Outputs::default();
    outputs.add(ctx.path("sweep_h.csv"), csv);
    outputs.add(ctx.path("sweep_h.json"), json(&serde_json::json!({ "rows": rows, "best_h": best.map(|b| b.h) })));
    ctx.manifest(&inputs, &mut outputs)?;
    outputs.commit()
}

fn collect(dir: &Path, found: &mut Vec<PathBuf>) -> CliResult<()> {
    if dir.is_file() {
        found.push(dir.to_path_buf());
        return Ok(());
    }
    let entries = std::fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    let mut paths: Vec<PathBuf> = entries.filter_map(|e| e.ok().map(|e| e.path())).collect();
    paths.sort();
    for p in paths {
        if p.is_dir() {
            collect(&p, found)?;
        } else if p.file_name().is_some_and(|n| n == LOOCV_SUMMARY || n == STREAM_SUMMARY) {
            found.push(p);
        }
    }
    Ok(())
}

fn report(ctx: &Ctx, inputs: &[PathBuf]) -> CliResult<()> {
    let mut files = Vec::new();
    for dir in inputs {
        collect(dir, &mut files)?;
    }
    let mut loocv_rows = Vec::new();
    let mut stream_rows = Vec::new();
    for f in &files {
        let bytes = fsio::read(f)?;
        if f.file_name().is_some_and(|n| n == STREAM_SUMMARY) {
            stream_rows.push(serde_json::from_slice::<StreamSummary>(&bytes).map_err(|e| CliError::schema(f, e.to_string()))?);
        } else if f.file_name().is_some_and(|n| n == LOOCV_SUMMARY) {
            loocv_rows.push(serde_json::from_slice::<LoocvSummary>(&bytes).map_err(|e| CliError::schema(f, e.to_string()))?);
        }
    }
    if loocv_rows.is_empty() && stream_rows.is_empty() {
        return Err(CliError::Empty(format!("no {LOOCV_SUMMARY} or {STREAM_SUMMARY} under the inputs")));
    }
    let (t1, t2) = (table_i(&loocv_rows), table_ii(&stream_rows));
    println!("{t1}\n{t2}");
    let mut outputs = Outputs::default();
    outputs.add(ctx.path("table_i.txt"), t1);
    outputs.add(ctx.path("table_ii.txt"), t2);
    ctx.manifest(&files, &mut outputs)?;
    outputs.commit()
}
