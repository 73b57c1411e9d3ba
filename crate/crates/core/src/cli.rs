//! Command-line driver: `mdn <subcommand> ...`.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use crate::config::{ExperimentConfig, Supervision, Task};
use crate::error::{MdnError, Result};
use crate::experiments::ablate::{run_ablation, AblationConfig};
use crate::experiments::bench::{run_bench, write_bench_csv};
use crate::experiments::demo::{render_demo, DemoShape};
use crate::experiments::gradcheck::{all_kernels, run_gradcheck};
use crate::field::export_pgm;
use crate::kernel::{KernelFamily, KernelSpec};
use crate::toynet::{heldout_scenes, train};
use crate::vote::VoteMode;

#[derive(Debug, Parser)]
#[command(name = "mdn", version, about = "Mass-displacement voting experiments")]
struct Cli {
    /// Worker threads for the voting operator.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct KernelArgs {
    #[arg(long, value_parser = parse_family)]
    kernel: Option<KernelFamily>,
    #[arg(long)]
    kf: Option<usize>,
    #[arg(long)]
    sigma: Option<f64>,
}

impl KernelArgs {
    fn spec(&self, family: KernelFamily) -> Result<KernelSpec> {
        match family {
            KernelFamily::Bilinear => Ok(KernelSpec::bilinear()),
            KernelFamily::Gaussian => {
                let kf = self.kf.unwrap_or(5);
                match self.sigma {
                    Some(s) => KernelSpec::gaussian_with_sigma(kf, s),
                    None => KernelSpec::gaussian(kf),
                }
            }
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Finite-difference check of the voting backward pass; exits 1 on failure.
    Gradcheck {
        /// Omit to check every mode.
        #[arg(long, value_parser = parse_mode)]
        mode: Option<VoteMode>,
        /// Omit to check every Gaussian support and the bilinear kernel.
        #[command(flatten)]
        kernel: KernelArgs,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// Render hand-built displacement examples as PGM files.
    Demo {
        /// Omit to render every shape.
        #[arg(long, value_parser = parse_shape)]
        shape: Option<DemoShape>,
        #[arg(long, default_value = "demo_out")]
        out: PathBuf,
    },
    /// Train the toy network and write metrics and final maps.
    Train {
        /// Base JSON config; flags below override it.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_parser = parse_task)]
        task: Option<Task>,
        #[arg(long, value_parser = parse_mode)]
        mode: Option<VoteMode>,
        #[command(flatten)]
        kernel: KernelArgs,
        #[arg(long, value_parser = parse_supervision)]
        supervision: Option<Supervision>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "train_out")]
        out: PathBuf,
    },
    /// No-voting vs post-hoc vs end-to-end sweep; writes a summary CSV.
    Ablate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "ablate_out")]
        out: PathBuf,
    },
    /// Voting throughput per mode and kernel as CSV.
    Bench {
        #[arg(long, value_delimiter = ',', default_value = "32,64,128")]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 20)]
        iters: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Defaults to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_mode(s: &str) -> std::result::Result<VoteMode, String> {
    s.parse().map_err(|e: MdnError| e.to_string())
}

fn parse_family(s: &str) -> std::result::Result<KernelFamily, String> {
    s.parse().map_err(|e: MdnError| e.to_string())
}

fn parse_task(s: &str) -> std::result::Result<Task, String> {
    s.parse().map_err(|e: MdnError| e.to_string())
}

fn parse_supervision(s: &str) -> std::result::Result<Supervision, String> {
    s.parse().map_err(|e: MdnError| e.to_string())
}

fn parse_shape(s: &str) -> std::result::Result<DemoShape, String> {
    s.parse().map_err(|e: MdnError| e.to_string())
}

/// Parses `argv` (including the program name) and runs the subcommand.
/// Returns the process exit code: 0 on success, 1 on failure, 2 on usage
/// errors.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn dispatch(cli: Cli) -> Result<i32> {
    let threads = cli.threads.max(1);
    match cli.command {
        Command::Gradcheck { mode, kernel, seed } => {
            let modes = mode.map_or_else(|| VoteMode::ALL.to_vec(), |m| vec![m]);
            let kernels = match kernel.kernel {
                Some(f) => vec![kernel.spec(f)?],
                None => all_kernels(),
            };
            let report = run_gradcheck(&modes, &kernels, seed)?;
            emit(serde_json::to_string_pretty(&report)?)?;
            Ok(if report.passed { 0 } else { 1 })
        }
        Command::Demo { shape, out } => {
            let shapes = shape.map_or_else(|| DemoShape::ALL.to_vec(), |s| vec![s]);
            for s in shapes {
                for path in render_demo(s)?.write(&out)? {
                    emit(path.display())?;
                }
            }
            Ok(0)
        }
        Command::Train {
            config,
            task,
            mode,
            kernel,
            supervision,
            steps,
            seed,
            out,
        } => {
            let mut cfg = match config {
                Some(p) => ExperimentConfig::load(p)?,
                None => ExperimentConfig::for_task(task.unwrap_or(Task::Within)),
            };
            if let Some(t) = task {
                cfg.task = t;
            }
            if let Some(m) = mode {
                cfg.mode = m;
            }
            if let Some(f) = kernel.kernel {
                cfg.kernel = kernel.spec(f)?;
            } else if kernel.kf.is_some() || kernel.sigma.is_some() {
                cfg.kernel = kernel.spec(cfg.kernel.family())?;
            }
            if let Some(s) = supervision {
                cfg.supervision = s;
            }
            if let Some(s) = steps {
                cfg.train.steps = s;
            }
            if let Some(s) = seed {
                cfg.train.seed = s;
            }
            cfg.train.threads = threads;
            cfg.validate()?;
            run_train(&cfg, &out)?;
            Ok(0)
        }
        Command::Ablate { config, out } => {
            let mut cfg = match config {
                Some(p) => AblationConfig::load(p)?,
                None => AblationConfig::default(),
            };
            cfg.experiment.train.threads = threads;
            std::fs::create_dir_all(&out)?;
            let res = run_ablation(&cfg, |r| {
                eprintln!(
                    "seed {} {:<9} {:<10} pck={:.3}",
                    r.seed,
                    r.method.name(),
                    r.kernel.as_deref().unwrap_or("-"),
                    r.pck
                );
            })?;
            let table = out.join("ablation.csv");
            res.write_csv(&table)?;
            std::fs::write(
                out.join("runs.json"),
                serde_json::to_string_pretty(&res.runs)?,
            )?;
            emit(std::fs::read_to_string(&table)?.trim_end())?;
            Ok(0)
        }
        Command::Bench {
            sizes,
            iters,
            seed,
            out,
        } => {
            let rows = run_bench(&sizes, iters, threads, seed)?;
            match out {
                Some(p) => write_bench_csv(&rows, std::fs::File::create(p)?)?,
                None => {
                    let mut buf = Vec::new();
                    write_bench_csv(&rows, &mut buf)?;
                    emit(String::from_utf8_lossy(&buf).trim_end())?;
                }
            }
            Ok(0)
        }
    }
}

fn run_train(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("config.json"), serde_json::to_string_pretty(cfg)?)?;
    let result = train(cfg)?;
    result.write_log(out.join("metrics.csv"))?;
    std::fs::write(
        out.join("eval.json"),
        serde_json::to_string_pretty(&result.eval)?,
    )?;
    let scene = heldout_scenes(cfg.task, 1).remove(0);
    let p = result.net.predict(&scene.image)?;
    export_pgm(&scene.image, 0, out.join("input.pgm"))?;
    for j in 0..p.c.channels() {
        export_pgm(&p.c, j, out.join(format!("c_{j}.pgm")))?;
        export_pgm(&p.m, j, out.join(format!("m_{j}.pgm")))?;
    }
    emit(format!(
        "steps={} pck_c={:.4} pck_m={:.4} -> {}",
        cfg.train.steps,
        result.eval.pck_c,
        result.eval.pck_m,
        out.display()
    ))
}

/// Writes one line to stdout; a closed pipe (`mdn ... | head`) is not an error.
fn emit(text: impl std::fmt::Display) -> Result<()> {
    let mut lock = std::io::stdout().lock();
    match writeln!(lock, "{text}").and_then(|()| lock.flush()) {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        r => Ok(r?),
    }
}
