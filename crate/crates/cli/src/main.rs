//! `handmap`: record and embodiment mapping from the command line.
//!
//! Exit codes: 0 success, 1 data error, 2 usage or configuration error.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use handmap_client::HandmapClient;
use handmap_core::api::EmbodyRequest;
use handmap_core::config::{load_embodiment, load_pipeline, FileSystem, Pipeline};
use handmap_core::embodiment::{embody_trajectory, EmbodimentConfig};
use handmap_core::hand_model::FingerId;
use handmap_core::metrics::timing_stats;
use handmap_core::mocap::{fill_gaps, parse_mocap_tsv_with, write_mocap_tsv, ParseOptions};
use handmap_core::pipeline::{contact_distances, embody_file, record_take, PipelineError};
use handmap_core::record::{record_sequence_timed, RecordError};
use handmap_core::robot_hands::clone_from_shape;
use handmap_core::se3::Transform;
use handmap_core::shipped::{self, Embedded};
use handmap_core::synth::{marker_sequence, smooth_motion};
use handmap_core::trajectory::{read_trajectory, write_trajectory, TrajectoryBody, TrajectoryError};
use handmap_service::AppState;

#[derive(Parser)]
#[command(name = "handmap", version, about = "Map glove motion capture to robot hand joint trajectories")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Pipeline config (TOML). The built-in configs are used if omitted.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct HandArgs {
    /// Embodiment config (TOML), overriding the pipeline's.
    #[arg(long, conflicts_with = "hand")]
    embodiment: Option<PathBuf>,
    /// Built-in robot hand: mia, shadow, robotiq_2f140 or clone.
    #[arg(long)]
    hand: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the hand model to a motion-capture take (TSV).
    Record {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Drop malformed rows instead of failing.
        #[arg(long)]
        lenient: bool,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Map a hand-state trajectory onto a robot hand.
    Embody {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[command(flatten)]
        hand: HandArgs,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Mean contact-surface distance (mm) between robot and model fingers.
    EvalDistance {
        /// Robot-command trajectory.
        robot: PathBuf,
        /// Hand-state trajectory the robot trajectory was computed from.
        /// Defaults to the source recorded in the robot trajectory.
        #[arg(long)]
        states: Option<PathBuf>,
        /// Frame indices, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        frames: Vec<usize>,
        /// Surface samples per finger; defaults to the pipeline's.
        #[arg(short = 'n', long)]
        samples: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        hand: HandArgs,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Throughput of both mappings.
    Bench {
        /// Motion-capture take; a synthetic take is used if omitted.
        input: Option<PathBuf>,
        /// Frames of the synthetic take.
        #[arg(long, default_value_t = 1000)]
        frames: usize,
        #[arg(long, default_value_t = 1)]
        repetitions: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Robot hands to bench; all built-in hands if omitted.
        #[arg(long = "hand")]
        hands: Vec<String>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Write a synthetic motion-capture take.
    Synth {
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, default_value_t = 200)]
        frames: usize,
        #[arg(long, default_value_t = 100.0)]
        rate: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write the generating hand states.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Write a robot hand config with the hand model's own kinematics.
    CloneHand {
        #[arg(short, long)]
        output: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Run the HTTP/websocket service.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Directory with the built explorer UI.
        #[arg(long = "static")]
        static_dir: Option<PathBuf>,
    },
    /// Talk to a running service.
    Remote {
        #[arg(long, default_value = "http://127.0.0.1:8080")]
        url: String,
        #[command(subcommand)]
        command: RemoteCommand,
    },
}

#[derive(Subcommand)]
enum RemoteCommand {
    /// List robot hands.
    Hands,
    /// Embody one request (JSON file, `-` for stdin).
    Embody { request: PathBuf },
}

/// Failure with its exit code.
enum Failure {
    Data(String),
    Usage(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Data(_) => 1,
            Failure::Usage(_) => 2,
        }
    }
}

fn usage(e: impl ToString) -> Failure {
    Failure::Usage(e.to_string())
}

fn data(e: impl ToString) -> Failure {
    Failure::Data(e.to_string())
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Trajectory(TrajectoryError::KindMismatch { .. }) | PipelineError::Input(_) => usage(e),
            other => data(other),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (Failure::Data(m) | Failure::Usage(m)) = &f;
            eprintln!("error: {m}");
            ExitCode::from(f.code())
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Record {
            input,
            output,
            lenient,
            config,
        } => record(&input, &output, lenient, &config),
        Command::Embody {
            input,
            output,
            hand,
            config,
        } => embody(&input, &output, &hand, &config),
        Command::EvalDistance {
            robot,
            states,
            frames,
            samples,
            seed,
            hand,
            config,
        } => eval_distance(&robot, states.as_deref(), &frames, samples, seed, &hand, &config),
        Command::Bench {
            input,
            frames,
            repetitions,
            seed,
            hands,
            config,
        } => bench(input.as_deref(), frames, repetitions, seed, &hands, &config),
        Command::Synth {
            output,
            frames,
            rate,
            seed,
            truth,
            config,
        } => synth(&output, frames, rate, seed, truth.as_deref(), &config),
        Command::CloneHand { output, config } => {
            let p = pipeline(&config)?;
            let text = toml::to_string(&clone_from_shape(&p.shape)).map_err(data)?;
            write(&output, &text)
        }
        Command::Serve { port, host, static_dir } => serve(&host, port, static_dir),
        Command::Remote { url, command } => remote(&url, command),
    }
}

fn pipeline(args: &ConfigArgs) -> Result<Pipeline, Failure> {
    match &args.config {
        Some(path) => load_pipeline(&FileSystem, path).map_err(usage),
        None => load_pipeline(&Embedded, Path::new("pipeline.toml")).map_err(usage),
    }
}

/// Embodiment config selected by the flags, with the digests of any files
/// read for it.
fn embodiment(p: &Pipeline, args: &HandArgs) -> Result<(EmbodimentConfig, BTreeMap<String, String>), Failure> {
    if let Some(path) = &args.embodiment {
        let mut digests = BTreeMap::new();
        let cfg = load_embodiment(&FileSystem, path, &mut digests).map_err(usage)?;
        return Ok((cfg, digests));
    }
    match args.hand.as_deref() {
        None => Ok((p.embodiment.clone(), BTreeMap::new())),
        Some(shipped::CLONE_ID) => {
            let hand = Arc::new(shipped::clone_hand(&p.shape));
            let cfg = EmbodimentConfig::new(Transform::identity(), hand, p.embodiment.solver.clone()).map_err(usage)?;
            Ok((cfg, BTreeMap::new()))
        }
        Some(id) => shipped::embodiment(id).map(|c| (c, BTreeMap::new())).ok_or_else(|| {
            usage(format!(
                "unknown hand '{id}' (built-in: {}, {})",
                shipped::HAND_IDS.join(", "),
                shipped::CLONE_ID
            ))
        }),
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    if path == Path::new("-") {
        let mut s = String::new();
        std::io::Read::read_to_string(&mut std::io::stdin(), &mut s).map_err(usage)?;
        return Ok(s);
    }
    std::fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| usage(format!("cannot write {}: {e}", path.display())))
}

fn record(input: &Path, output: &Path, lenient: bool, config: &ConfigArgs) -> Result<(), Failure> {
    let p = pipeline(config)?;
    let text = read(input)?;
    if text.trim().is_empty() {
        return Err(data(RecordError::EmptyUsableSequence));
    }
    let opts = ParseOptions {
        label_map: p.io.label_map.clone(),
        lenient,
    };
    let parsed = parse_mocap_tsv_with(&text, &opts).map_err(|e| data(format!("{}: {e}", input.display())))?;
    for r in &parsed.rejected {
        eprintln!("warning: line {} rejected: {}", r.line, r.reason);
    }
    let run = record_take(
        &parsed.sequence,
        &p.record,
        p.io.max_gap,
        &input.display().to_string(),
        p.digests.clone(),
    )?;
    write(output, &write_trajectory(&run.file))?;
    println!("frames: {}", run.file.body.len());
    println!("skipped: {}", run.file.provenance.skipped_head_frames);
    println!("rejected rows: {}", parsed.rejected.len());
    println!("reprojection rms: {:.6} mm", run.rms * 1e3);
    Ok(())
}

fn embody(input: &Path, output: &Path, hand: &HandArgs, config: &ConfigArgs) -> Result<(), Failure> {
    let p = pipeline(config)?;
    let (cfg, mut digests) = embodiment(&p, hand)?;
    let file = read_trajectory(&read(input)?).map_err(|e| data(format!("{}: {e}", input.display())))?;
    if config.config.is_some() {
        digests.extend(p.digests.clone());
    }
    let run = embody_file(&file, &p.shape, &cfg, &cfg.hand.name, &input.display().to_string(), digests)?;
    write(output, &write_trajectory(&run.file))?;

    let TrajectoryBody::RobotCommand(frames) = &run.file.body else {
        unreachable!("embodiment writes robot commands");
    };
    println!("hand: {}", cfg.hand.name);
    println!("frames: {}", frames.len());
    let free: Vec<&str> = cfg.hand.free_actuators().map(|a| a.name.as_str()).collect();
    println!("commanded: {} ({})", free.len(), free.join(", "));
    for a in cfg.hand.actuators().iter().filter(|a| !a.is_free()) {
        println!("locked: {} = {}", a.name, a.default_command());
    }
    println!("mean residual per finger (mm):");
    for f in FingerId::ALL {
        let values: Vec<f64> = frames.iter().filter_map(|r| r.residuals.get(&f).copied()).collect();
        if values.is_empty() {
            println!("  {f:<7} -");
        } else {
            println!("  {f:<7} {:.4}", 1e3 * values.iter().sum::<f64>() / values.len() as f64);
        }
    }
    let t = timing_stats(&run.durations).map_err(data)?;
    println!("timing: mean {:.1} Hz, min {:.1} Hz", t.mean_hz, t.min_hz);
    Ok(())
}

fn eval_distance(
    robot: &Path,
    states: Option<&Path>,
    frames: &[usize],
    samples: Option<usize>,
    seed: Option<u64>,
    hand: &HandArgs,
    config: &ConfigArgs,
) -> Result<(), Failure> {
    let p = pipeline(config)?;
    let (cfg, _) = embodiment(&p, hand)?;
    let robot_file = read_trajectory(&read(robot)?).map_err(|e| data(format!("{}: {e}", robot.display())))?;
    let commands = robot_file.robot_commands().map_err(usage)?;
    if let Some(h) = &robot_file.provenance.hand {
        if *h != cfg.hand.name {
            return Err(usage(format!(
                "{} was computed for hand '{h}', not '{}'",
                robot.display(),
                cfg.hand.name
            )));
        }
    }
    let states_path = match states {
        Some(s) => s.to_path_buf(),
        None => PathBuf::from(&robot_file.provenance.source),
    };
    let state_file =
        read_trajectory(&read(&states_path)?).map_err(|e| data(format!("{}: {e}", states_path.display())))?;
    let states = state_file.hand_states().map_err(usage)?;
    let n = samples.unwrap_or(p.io.samples);
    let seed = seed.unwrap_or(p.io.seed);
    let d = contact_distances(states, commands, &p.shape, &cfg, frames, n, seed)?;
    print!("{}", distance_table(&cfg.hand.name, &d));
    Ok(())
}

fn distance_table(hand: &str, d: &BTreeMap<FingerId, f64>) -> String {
    let mut out = String::from("mean distance (mm)\n");
    let _ = write!(out, "{:<16}", "hand");
    for f in FingerId::ALL {
        let _ = write!(out, "{:>9}", f.name());
    }
    out.push('\n');
    let _ = write!(out, "{hand:<16}");
    for f in FingerId::ALL {
        match d.get(&f) {
            Some(v) => {
                let _ = write!(out, "{:>9.3}", v * 1e3);
            }
            None => {
                let _ = write!(out, "{:>9}", "-");
            }
        }
    }
    out.push('\n');
    out
}

fn bench(
    input: Option<&Path>,
    frames: usize,
    repetitions: usize,
    seed: u64,
    hands: &[String],
    config: &ConfigArgs,
) -> Result<(), Failure> {
    let p = pipeline(config)?;
    let seq = match input {
        Some(path) => {
            let parsed = parse_mocap_tsv_with(&read(path)?, &ParseOptions {
                label_map: p.io.label_map.clone(),
                lenient: true,
            })
            .map_err(data)?;
            fill_gaps(&parsed.sequence, p.io.max_gap)
        }
        None => {
            if frames == 0 {
                return Err(usage("--frames must be at least 1"));
            }
            let states = smooth_motion(&p.shape, frames, 100.0, seed);
            marker_sequence(&states, &p.shape, &p.record.t_hand_model, 100.0)
        }
    };
    let hands: Vec<String> = if hands.is_empty() {
        shipped::HAND_IDS.iter().map(|s| s.to_string()).collect()
    } else {
        hands.to_vec()
    };
    let configs = hands
        .iter()
        .map(|h| {
            embodiment(&p, &HandArgs {
                embodiment: None,
                hand: Some(h.clone()),
            })
            .map(|(c, _)| (h.clone(), c))
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut record_durations = Vec::new();
    let mut recorded = Vec::new();
    for _ in 0..repetitions.max(1) {
        let (out, d) = record_sequence_timed(&seq, &p.record).map_err(data)?;
        record_durations.extend(d);
        recorded = out.frames;
    }
    let states: Vec<_> = recorded.iter().map(|r| (r.timestamp, r.state)).collect();

    println!("{:<24}{:>12}{:>12}", "mapping", "mean (Hz)", "min (Hz)");
    let t = timing_stats(&record_durations).map_err(data)?;
    println!("{:<24}{:>12.1}{:>12.1}", "record", t.mean_hz, t.min_hz);
    for (id, cfg) in &configs {
        let mut durations = Vec::new();
        for _ in 0..repetitions.max(1) {
            durations.extend(embody_trajectory(&states, &p.shape, cfg).map_err(data)?.durations);
        }
        let t = timing_stats(&durations).map_err(data)?;
        println!("{:<24}{:>12.1}{:>12.1}", format!("embody {id}"), t.mean_hz, t.min_hz);
    }
    Ok(())
}

fn synth(output: &Path, frames: usize, rate: f64, seed: u64, truth: Option<&Path>, config: &ConfigArgs) -> Result<(), Failure> {
    if frames == 0 || !(rate > 0.0) {
        return Err(usage("--frames and --rate must be positive"));
    }
    let p = pipeline(config)?;
    let states = smooth_motion(&p.shape, frames, rate, seed);
    let seq = marker_sequence(&states, &p.shape, &p.record.t_hand_model, rate);
    write(output, &write_mocap_tsv(&seq))?;
    if let Some(path) = truth {
        use handmap_core::record::RecordedFrame;
        use handmap_core::trajectory::{HandStateRecord, Provenance, TrajectoryFile};
        let records = states
            .iter()
            .map(|(t, s)| {
                HandStateRecord::from(&RecordedFrame {
                    timestamp: *t,
                    state: *s,
                    pose_carried: false,
                    carried_fingers: Vec::new(),
                })
            })
            .collect();
        let file = TrajectoryFile::new(
            Provenance {
                source: format!("synthetic seed {seed}"),
                tool: handmap_core::pipeline::tool_version(),
                configs: p.digests.clone(),
                ..Default::default()
            },
            TrajectoryBody::HandState(records),
        );
        write(path, &write_trajectory(&file))?;
    }
    println!("frames: {frames}");
    Ok(())
}

fn serve(host: &str, port: u16, static_dir: Option<PathBuf>) -> Result<(), Failure> {
    if let Some(dir) = &static_dir {
        if !dir.is_dir() {
            return Err(usage(format!("{} is not a directory", dir.display())));
        }
    }
    let rt = tokio::runtime::Runtime::new().map_err(usage)?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind((host, port))
            .await
            .map_err(|e| usage(format!("cannot listen on {host}:{port}: {e}")))?;
        eprintln!("listening on http://{}", listener.local_addr().map_err(usage)?);
        handmap_service::serve(listener, Arc::new(AppState::shipped(static_dir)))
            .await
            .map_err(data)
    })
}

fn remote(url: &str, command: RemoteCommand) -> Result<(), Failure> {
    let rt = tokio::runtime::Runtime::new().map_err(usage)?;
    let client = HandmapClient::new(url);
    let value = match command {
        RemoteCommand::Hands => rt.block_on(client.hands()).map(|r| serde_json::to_value(r).expect("serializes")),
        RemoteCommand::Embody { request } => {
            let req: EmbodyRequest = serde_json::from_str(&read(&request)?).map_err(usage)?;
            rt.block_on(client.embody(&req)).map(|r| serde_json::to_value(r).expect("serializes"))
        }
    }
    .map_err(data)?;
    println!("{}", serde_json::to_string_pretty(&value).expect("serializes"));
    Ok(())
}
