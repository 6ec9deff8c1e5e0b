//! `routecodec` command-line front end.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use routecodec::dra::DraModel;
use routecodec::pipeline::{
    bd_metrics, bitrate_error, decode_sequence, encode_sequence, format_db, psnr, read_dataset, read_sequence, write_sequence,
    write_synthetic, BitstreamContainer, MotionProfile, RdCurve, RoutePolicy, SequenceStats, DEFAULT_GOP,
};
use routecodec::rca::{collect_samples, relative_errors, train_estimator, write_samples_csv, EstimatorModel, EstimatorTrainConfig, LearnedEstimator, OracleEstimator, DEFAULT_WINDOW};
use routecodec::training::{jro, parse_size, train_initial, write_trajectory, TrainConfig};
use routecodec::{Error, Result};

#[derive(Parser)]
#[command(name = "routecodec", version, about = "Frame-level adaptive neural video codec")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write seeded synthetic sequences as PGM frame directories.
    GenSynth {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 8)]
        sequences: usize,
        #[arg(long, default_value_t = 16)]
        frames: usize,
        /// Frame size as WxH.
        #[arg(long, default_value = "64x64")]
        size: String,
        /// static, mixed or shift:DX,DY
        #[arg(long, default_value = "mixed")]
        motion: String,
    },
    /// Initial training of all routes.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Joint-routes optimization of a pre-trained model.
    Jro {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        init: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        log: PathBuf,
    },
    /// Train the rate estimator on sequences coded by a model.
    TrainRca {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_GOP)]
        gop: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 600)]
        steps: usize,
        /// Also write the collected samples here.
        #[arg(long)]
        samples: Option<PathBuf>,
    },
    /// Encode a frame directory.
    Encode {
        #[arg(long)]
        model: PathBuf,
        /// Estimator checkpoint, `oracle`, or `route:K` for a fixed route.
        #[arg(long)]
        rca: String,
        /// Target rate in bits per pixel.
        #[arg(long)]
        target: Option<f64>,
        #[arg(long, default_value_t = DEFAULT_GOP)]
        gop: usize,
        #[arg(long, default_value_t = DEFAULT_WINDOW)]
        window: usize,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        stats: PathBuf,
    },
    /// Decode a bitstream into a frame directory.
    Decode {
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// PSNR and bitrate error of a decoded sequence.
    Eval {
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        dec: PathBuf,
        #[arg(long)]
        stats: PathBuf,
        #[arg(long)]
        report: PathBuf,
    },
    /// Bjøntegaard deltas of curve B against curve A.
    Bd {
        #[arg(long)]
        curve_a: PathBuf,
        #[arg(long)]
        curve_b: PathBuf,
    },
}

fn load_model(path: &Path) -> Result<DraModel> {
    DraModel::from_checkpoint(&fs::read(path)?)
}

fn print_points(label: &str, points: &[routecodec::training::RDPoint]) {
    for p in points {
        println!("{label} route {}: {:.4} bpp, {:.2} dB", p.route, p.rate, p.psnr());
    }
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::GenSynth { seed, out, sequences, frames, size, motion } => {
            let (w, h) = parse_size(&size)?;
            let profile: MotionProfile = motion.parse()?;
            write_synthetic(&out, seed, sequences, frames, w, h, profile)?;
            println!("wrote {sequences} sequences of {frames} frames to {}", out.display());
        }
        Command::Train { config, out } => {
            let cfg = TrainConfig::load(&config)?;
            let data = cfg.training_set()?;
            let val = cfg.validation_set()?;
            let result = train_initial(&cfg, &data, &val)?;
            if let Some((_, points)) = result.validation.last() {
                print_points("validation", points);
            }
            fs::write(&out, result.model.to_checkpoint())?;
        }
        Command::Jro { config, init, out, log } => {
            let cfg = TrainConfig::load(&config)?;
            let data = cfg.training_set()?;
            let val = cfg.validation_set()?;
            let result = jro(&cfg, load_model(&init)?, &data, &val)?;
            for w in &result.warnings {
                eprintln!("warning: {w}");
            }
            write_trajectory(&result.trajectory, cfg.seed, BufWriter::new(File::create(&log)?))?;
            if let Some(last) = result.trajectory.last() {
                print_points("validation", &last.points);
            }
            println!("final lambdas {:?}", result.schedule.lambdas);
            fs::write(&out, result.model.to_checkpoint())?;
        }
        Command::TrainRca { model, data, out, gop, seed, steps, samples } => {
            let model = load_model(&model)?;
            let sequences = read_dataset(&data)?;
            let collected = collect_samples(&model, &sequences, gop, seed)?;
            if let Some(p) = samples {
                write_samples_csv(&collected, BufWriter::new(File::create(p)?))?;
            }
            let cfg = EstimatorTrainConfig { steps, seed, ..EstimatorTrainConfig::default() };
            let (est, _) = train_estimator(&collected, &cfg)?;
            let errs = relative_errors(&est, &collected)?;
            println!("{} samples; training relative error per route {errs:.3?}", collected.len());
            fs::write(&out, est.to_checkpoint())?;
        }
        Command::Encode { model, rca, target, gop, window, input, out, stats } => {
            let model = load_model(&model)?;
            let frames = read_sequence(&input)?;
            let need_target = || target.ok_or_else(|| Error::InvalidArgument("--target is required with rate control".into()));
            let (container, s, _) = if let Some(k) = rca.strip_prefix("route:") {
                let k = k.parse().map_err(|_| Error::InvalidArgument(format!("bad route {k:?}")))?;
                encode_sequence(&frames, &model, RoutePolicy::Fixed(k), gop)?
            } else if rca == "oracle" {
                let mut est = OracleEstimator { model: &model };
                let policy = RoutePolicy::Controlled { estimator: &mut est, target_bpp: need_target()?, window };
                encode_sequence(&frames, &model, policy, gop)?
            } else {
                let em = EstimatorModel::from_checkpoint(&fs::read(&rca)?)?;
                let mut est = LearnedEstimator::new(em, model.spec.routes())?;
                let policy = RoutePolicy::Controlled { estimator: &mut est, target_bpp: need_target()?, window };
                encode_sequence(&frames, &model, policy, gop)?
            };
            fs::write(&out, container.to_bytes()?)?;
            s.write_csv(BufWriter::new(File::create(&stats)?))?;
            print!("{} frames, {:.4} bpp, {} dB", s.frames.len(), s.mean_bpp(), format_db(s.mean_psnr()));
            match s.target_bpp {
                Some(_) => println!(", bitrate error {:.2}%", s.delta_r()?),
                None => println!(),
            }
        }
        Command::Decode { model, input, out } => {
            let model = load_model(&model)?;
            let container = BitstreamContainer::from_bytes(&fs::read(&input)?)?;
            let frames = decode_sequence(&container, &model)?;
            write_sequence(&out, &frames)?;
            println!("decoded {} frames", frames.len());
        }
        Command::Eval { reference, dec, stats, report } => {
            let a = read_sequence(&reference)?;
            let b = read_sequence(&dec)?;
            if a.len() != b.len() {
                return Err(Error::Format(format!("{} reference frames, {} decoded", a.len(), b.len())));
            }
            let s = SequenceStats::read_csv(File::open(&stats)?)?;
            let values = a.iter().zip(&b).map(|(x, y)| psnr(x, y)).collect::<Result<Vec<_>>>()?;
            let mean_psnr = values.iter().sum::<f64>() / values.len() as f64;
            let mut w = csv::Writer::from_writer(BufWriter::new(File::create(&report)?));
            let mut row = |k: &str, v: String| w.write_record([k, v.as_str()]).map_err(|e| Error::Format(e.to_string()));
            row("metric", "value".into())?;
            row("frames", values.len().to_string())?;
            row("mean_bpp", s.mean_bpp().to_string())?;
            row("mean_psnr", format_db(mean_psnr))?;
            if let Some(t) = s.target_bpp {
                row("target_bpp", t.to_string())?;
                row("delta_r_percent", bitrate_error(s.mean_bpp(), t)?.to_string())?;
            }
            w.flush()?;
            println!("{} frames, {:.4} bpp, {} dB", values.len(), s.mean_bpp(), format_db(mean_psnr));
        }
        Command::Bd { curve_a, curve_b } => {
            let (rate, quality) = bd_metrics(&RdCurve::read_csv(&curve_a)?, &RdCurve::read_csv(&curve_b)?)?;
            println!("BD-Rate {rate:.3}%");
            println!("BD-PSNR {quality:.4} dB");
        }
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidArgument(_) => 2,
        Error::NonFinite(_) | Error::ZeroProbability { .. } => 4,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
