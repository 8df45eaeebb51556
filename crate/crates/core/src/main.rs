//! Command-line front end. Exit codes: 0 success, 2 usage, 3 runtime failure.

use std::fs;
use std::io::Write;
use std::ops::Range;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{error::ErrorKind, CommandFactory, Parser, Subcommand};

use voxseq::bench::bench_block;
use voxseq::locality::{compare_schemes, CSV_HEADER};
use voxseq::train::{evaluate, train_toy_with, SavedModel, TrainConfig};
use voxseq::{build_ordering, GridDims, OrderingScheme, Scheme};

#[derive(Parser)]
#[command(name = "voxseq", version, about = "Voxel serialization orders, locality analysis and a toy Mamba occupancy model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a VORD ordering file.
    Order {
        #[arg(long)]
        scheme: Scheme,
        #[arg(long, value_parser = parse_dims)]
        dims: GridDims,
        /// Reverse the column direction on every other column.
        #[arg(long)]
        z_snake: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print neighbor-distance statistics as CSV.
    Locality {
        #[arg(long, value_parser = parse_dims)]
        dims: GridDims,
        #[arg(long, value_delimiter = ',', required = true)]
        schemes: Vec<Scheme>,
        /// Also write the CSV to this file.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Time the block forward pass over several sequence lengths.
    Bench {
        #[arg(long, value_delimiter = ',', required = true)]
        lengths: Vec<usize>,
        #[arg(long, default_value_t = 16)]
        channels: usize,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train the toy model on synthetic scenes.
    TrainToy {
        /// JSON training config; flags below override it.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        scheme: Option<Scheme>,
        #[arg(long)]
        z_snake: bool,
        /// Where `train_log.jsonl` and `params.json` are written.
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Evaluate saved parameters on a seed range.
    Eval {
        #[arg(long)]
        params: PathBuf,
        /// Half-open range `a..b`.
        #[arg(long, value_parser = parse_range)]
        seeds: Range<u64>,
    },
}

fn parse_dims(s: &str) -> Result<GridDims, String> {
    let parts: Vec<&str> = s.split('x').collect();
    let [w, h, d] = parts[..] else {
        return Err(format!("expected WxHxD, got {s:?}"));
    };
    let num = |p: &str| p.parse::<usize>().map_err(|e| format!("{p:?}: {e}"));
    GridDims::spatial(num(w)?, num(h)?, num(d)?).map_err(|e| e.to_string())
}

fn parse_range(s: &str) -> Result<Range<u64>, String> {
    let (a, b) = s.split_once("..").ok_or_else(|| format!("expected a..b, got {s:?}"))?;
    let a = a.parse::<u64>().map_err(|e| format!("{a:?}: {e}"))?;
    let b = b.parse::<u64>().map_err(|e| format!("{b:?}: {e}"))?;
    if b < a {
        return Err(format!("empty range {s}"));
    }
    Ok(a..b)
}

fn configure_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var("VOXSEQ_THREADS") else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().map_err(|_| format!("VOXSEQ_THREADS must be an integer, got {raw:?}"))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())
}

fn run(command: Command) -> voxseq::Result<()> {
    let mut stdout = std::io::stdout().lock();
    match command {
        Command::Order { scheme, dims, z_snake, out } => {
            let ordering = build_ordering(OrderingScheme { scheme, z_snake }, dims)?;
            voxseq::io::write_ordering(&out, &ordering)?;
        }
        Command::Locality { dims, schemes, csv } => {
            let schemes: Vec<OrderingScheme> = schemes.into_iter().map(Into::into).collect();
            let mut text = format!("{CSV_HEADER}\n");
            for r in compare_schemes(dims, &schemes)? {
                text.push_str(&r.csv_row());
                text.push('\n');
            }
            stdout.write_all(text.as_bytes())?;
            if let Some(path) = csv {
                fs::write(path, &text)?;
            }
        }
        Command::Bench { lengths, channels, repeats, seed } => {
            let report = bench_block(&lengths, channels, repeats, seed)?;
            for row in &report.rows {
                writeln!(stdout, "{}", serde_json::to_string(row)?)?;
            }
            writeln!(stdout, "{}", serde_json::json!({ "slope": report.slope }))?;
        }
        Command::TrainToy { config, steps, lr, seed, scheme, z_snake, out_dir } => {
            let mut cfg = match config {
                Some(path) => serde_json::from_slice::<TrainConfig>(&fs::read(path)?)?,
                None => TrainConfig::default(),
            };
            cfg.steps = steps.unwrap_or(cfg.steps);
            cfg.lr = lr.unwrap_or(cfg.lr);
            cfg.seed = seed.unwrap_or(cfg.seed);
            if let Some(s) = scheme {
                cfg.hierarchy.scheme = OrderingScheme { scheme: s, z_snake };
            } else if z_snake {
                cfg.hierarchy.scheme.z_snake = true;
            }
            cfg.validate()?;
            fs::create_dir_all(&out_dir)?;
            let mut log = std::io::BufWriter::new(fs::File::create(out_dir.join("train_log.jsonl"))?);
            let mut io_err = None;
            let outcome = train_toy_with(&cfg, |entry| {
                let line = serde_json::to_string(entry).expect("log entries serialize");
                if let Err(e) = writeln!(log, "{line}").and_then(|_| writeln!(stdout, "{line}")) {
                    io_err.get_or_insert(e);
                }
            });
            log.flush()?;
            if let Some(e) = io_err {
                return Err(e.into());
            }
            let outcome = outcome?;
            let saved = SavedModel { config: cfg, model: outcome.model };
            fs::write(out_dir.join("params.json"), serde_json::to_vec(&saved)?)?;
        }
        Command::Eval { params, seeds } => {
            let saved: SavedModel = serde_json::from_slice(&fs::read(params)?)?;
            let report = evaluate(&saved.model, seeds)?;
            writeln!(stdout, "{}", serde_json::to_string(&report)?)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Command::Bench { lengths, .. } = &cli.command {
        if lengths.len() < 3 {
            Cli::command()
                .error(ErrorKind::ValueValidation, format!("--lengths needs at least 3 values, got {}", lengths.len()))
                .exit();
        }
    }
    if let Err(msg) = configure_threads() {
        Cli::command().error(ErrorKind::InvalidValue, msg).exit();
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}
