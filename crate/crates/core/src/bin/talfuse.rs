//! Command-line front end: dataset synthesis, alignment, fusion, training,
//! inference, decision fusion and evaluation.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use talfuse::align::{align, AlignMethod, AlignedPair, AlignmentTrace, DEFAULT_AUDIO_WINDOW};
use talfuse::eval::{evaluate, per_class_delta, read_report, write_delta_csv, write_report, Preset};
use talfuse::fusion::{concat_fuse, rmattn_forward, RMAttnParams};
use talfuse::io::{read_features, read_ground_truth, read_proposals, write_features, write_proposals, Checkpoint};
use talfuse::pipeline::{expect_modality, fuse_decisions, train, Model, PipelineConfig, Scheme};
use talfuse::synth::{Manifest, Split, SynthJob};
use talfuse::{Error, Modality, Result};

#[derive(Parser)]
#[command(
    name = "talfuse",
    version,
    about = "Audio-visual fusion for temporal action localization"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Paired,
    Duptrim,
    Avgtrim,
}

impl From<MethodArg> for AlignMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Paired => AlignMethod::Paired,
            MethodArg::Duptrim => AlignMethod::DupTrim,
            MethodArg::Avgtrim => AlignMethod::AvgTrim,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FuseArg {
    Concat,
    Rmattn,
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    Thumos,
    Anet,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset and its manifest.
    Synth {
        #[arg(long, required_unless_present = "dump_config")]
        config: Option<PathBuf>,
        #[arg(long, required_unless_present = "dump_config")]
        out: Option<PathBuf>,
        /// Print the default job config as TOML and exit.
        #[arg(long)]
        dump_config: bool,
    },
    /// Equalize an audio/video pair. Writes the trace to OUT and the aligned
    /// sequences next to it as <stem>.video.mmfs and <stem>.audio.mmfs.
    Align {
        #[arg(long, value_enum)]
        method: MethodArg,
        #[arg(long)]
        video: PathBuf,
        #[arg(long)]
        audio: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Centering window in seconds (paired only).
        #[arg(long, default_value_t = DEFAULT_AUDIO_WINDOW)]
        window: f64,
    },
    /// Fuse an aligned pair written by `align` into one feature sequence.
    Fuse {
        #[arg(long, value_enum)]
        scheme: FuseArg,
        /// Trace file written by `align`.
        #[arg(long)]
        pair: PathBuf,
        /// RMAttn parameters: a model checkpoint or a bare parameter checkpoint.
        #[arg(long)]
        params: Option<PathBuf>,
        /// Init seed when rmattn runs without --params.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a scorer (and RMAttn when selected) on the manifest's train split.
    Train {
        #[arg(long, required_unless_present = "dump_config")]
        manifest: Option<PathBuf>,
        /// Overrides the scheme in --config.
        #[arg(long)]
        scheme: Option<String>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, required_unless_present = "dump_config")]
        out: Option<PathBuf>,
        /// Print the default training config as TOML and exit.
        #[arg(long)]
        dump_config: bool,
    },
    /// Generate proposals for every test video of the manifest.
    Infer {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pool several proposal files per video and apply class-wise NMS.
    NmsFuse {
        #[arg(long, value_delimiter = ',', required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        iou: f64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        max_out: Option<usize>,
    },
    /// Score proposals against ground truth.
    Eval {
        #[arg(long)]
        preds: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, value_enum)]
        preset: PresetArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-class AP difference (a − b) at one IoU threshold, as CSV.
    Delta {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long)]
        iou: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help / --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            return fail("usage", first);
        }
    };
    if let Err(e) = init_threads().and_then(|()| run(cli.command)) {
        return fail(e.kind(), &e.to_string());
    }
    ExitCode::SUCCESS
}

fn fail(kind: &str, message: &str) -> ExitCode {
    let record = serde_json::json!({ "error": kind, "message": message });
    eprintln!("{record}");
    ExitCode::FAILURE
}

fn init_threads() -> Result<()> {
    let Ok(raw) = std::env::var("TALFUSE_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Config(format!("TALFUSE_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(e.to_string()))
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn sibling(trace: &Path, suffix: &str) -> PathBuf {
    let stem = trace.file_stem().unwrap_or_default().to_string_lossy();
    trace.with_file_name(format!("{stem}.{suffix}.mmfs"))
}

fn load_manifest(path: &Path, split: Split) -> Result<Vec<talfuse::synth::Episode>> {
    let eps = Manifest::read(path)?.load(split)?;
    if eps.is_empty() {
        return Err(Error::Validation(format!(
            "manifest {} has no {split:?} entries",
            path.display()
        )));
    }
    Ok(eps)
}

fn opt(v: Option<String>) -> String {
    v.unwrap_or_else(|| "-".into())
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Synth {
            config,
            out,
            dump_config,
        } => {
            if dump_config {
                print!("{}", SynthJob::default().to_toml());
                return Ok(());
            }
            let job = SynthJob::from_toml(&read_text(&config.expect("required"))?)?;
            let out = out.expect("required");
            let manifest = job.run(&out)?;
            println!(
                "wrote {} episodes ({} train, {} test) to {}",
                manifest.entries.len(),
                job.n_train,
                job.n_test,
                out.display()
            );
        }
        Command::Align {
            method,
            video,
            audio,
            out,
            window,
        } => {
            let v = read_features(&video)?;
            let a = read_features(&audio)?;
            let pair = align(method.into(), &a, &v, window)?;
            let t = &pair.trace;
            let trace = serde_json::to_string(t).expect("trace serializes");
            write_features(&pair.video, sibling(&out, "video"))?;
            write_features(&pair.audio, sibling(&out, "audio"))?;
            write_text(&out, &(trace + "\n"))?;
            println!(
                "k={} k_prime={} l_m={} l_a_prime={}",
                t.k,
                opt(t.k_prime.map(|x| x.to_string())),
                t.l_m,
                opt(t.l_a_prime.map(|x| x.to_string())),
            );
        }
        Command::Fuse {
            scheme,
            pair,
            params,
            seed,
            out,
        } => {
            let trace: AlignmentTrace = serde_json::from_str(&read_text(&pair)?)
                .map_err(|e| Error::Format(format!("{}: {e}", pair.display())))?;
            let video = read_features(sibling(&pair, "video"))?;
            let audio = read_features(sibling(&pair, "audio"))?;
            expect_modality(&video, Modality::Video)?;
            expect_modality(&audio, Modality::Audio)?;
            let mut aligned = AlignedPair::from_equal_length(video, audio)?;
            aligned.trace = trace;
            let fused = match scheme {
                FuseArg::Concat => concat_fuse(&aligned)?,
                FuseArg::Rmattn => {
                    let p = match params {
                        Some(path) => {
                            let ck = Checkpoint::read(&path)?;
                            let prefix = if ck.has("rmattn.topology") { "rmattn." } else { "" };
                            RMAttnParams::read_from(&ck, prefix)?
                        }
                        None => RMAttnParams::init(
                            aligned.video.dim(),
                            aligned.audio.dim(),
                            RMAttnParams::default_hidden(aligned.video.dim(), aligned.audio.dim()),
                            seed,
                        )?,
                    };
                    rmattn_forward(&p, &aligned)?.0
                }
            };
            write_features(&fused, &out)?;
            println!("fused {} x {}", fused.len(), fused.dim());
        }
        Command::Train {
            manifest,
            scheme,
            config,
            out,
            dump_config,
        } => {
            if dump_config {
                print!("{}", PipelineConfig::default().to_toml());
                return Ok(());
            }
            let mut cfg = match config {
                Some(path) => PipelineConfig::from_toml(&read_text(&path)?)?,
                None => PipelineConfig::default(),
            };
            if let Some(s) = scheme {
                cfg.scheme = s.parse::<Scheme>()?;
            }
            let episodes = load_manifest(&manifest.expect("required"), Split::Train)?;
            let trained = train(&episodes, &cfg)?;
            for (i, loss) in trained.loss_trace.iter().enumerate() {
                println!("epoch {} loss {loss:.6}", i + 1);
            }
            trained.model.save(out.expect("required"))?;
        }
        Command::Infer { manifest, ckpt, out } => {
            let model = Model::load(&ckpt)?;
            let episodes = load_manifest(&manifest, Split::Test)?;
            let sets = model.infer_all(&episodes)?;
            write_proposals(&sets, &out)?;
            let n: usize = sets.iter().map(|s| s.len()).sum();
            println!("{n} proposals over {} videos", sets.len());
        }
        Command::NmsFuse {
            inputs,
            iou,
            out,
            max_out,
        } => {
            let runs = inputs.iter().map(read_proposals).collect::<Result<Vec<_>>>()?;
            let fused = fuse_decisions(&runs, iou, max_out)?;
            write_proposals(&fused, &out)?;
            let n: usize = fused.iter().map(|s| s.len()).sum();
            println!("{n} proposals over {} videos", fused.len());
        }
        Command::Eval { preds, gt, preset, out } => {
            let preset = match preset {
                PresetArg::Thumos => Preset::Thumos,
                PresetArg::Anet => Preset::Anet,
            };
            let report = evaluate(&read_proposals(&preds)?, &read_ground_truth(&gt)?, &preset.thresholds())?;
            write_report(&report, &out)?;
            for (t, m) in report.thresholds.iter().zip(&report.map_at) {
                println!("mAP@{t}\t{m:.4}");
            }
            println!("average\t{:.4}", report.average_map);
        }
        Command::Delta { a, b, iou, out } => {
            let deltas = per_class_delta(&read_report(&a)?, &read_report(&b)?, iou)?;
            write_delta_csv(&deltas, &out)?;
            for (class, d) in &deltas {
                println!("{class}\t{d:+.4}");
            }
        }
    }
    Ok(())
}
