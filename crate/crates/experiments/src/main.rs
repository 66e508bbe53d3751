use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::bail;
use clap::{Parser, Subcommand, ValueEnum};

use morphlearn::datagen::{DefectSpec, NoiseModel, Operator, SceneSpec};
use morphlearn::layers::gradcheck::check_pconv_instance;
use morphlearn_experiments::error::Stage;
use morphlearn_experiments::experiment::{apply, eval, run, ExperimentReport, Metrics};
use morphlearn_experiments::gen::generate;
use morphlearn_experiments::presets::{preset, PRESETS};
use morphlearn_experiments::{ExperimentConfig, ExperimentError, Synth};

#[derive(Parser)]
#[command(name = "morphlearn", version, about = "Learn morphological operators with counter-harmonic mean layers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Scene,
    Defects,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a dataset of PGM images (and targets when an operator is given).
    Gen {
        #[arg(long, value_enum, default_value = "scene")]
        kind: Kind,
        #[arg(long, default_value_t = 4)]
        count: usize,
        #[arg(long, default_value_t = 128)]
        width: usize,
        #[arg(long, default_value_t = 128)]
        height: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Target operator, e.g. `dilate:square:5`.
        #[arg(long)]
        operator: Option<Operator>,
        /// Noise applied to the inputs, e.g. `binomial:0.1`.
        #[arg(long, default_value = "none")]
        noise: NoiseModel,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train and evaluate the experiment described by a config file.
    Train { config: PathBuf },
    /// Evaluate saved parameters on a config's held-out set.
    Eval { config: PathBuf, params: PathBuf },
    /// Run saved parameters on PGM images.
    Apply {
        params: PathBuf,
        #[arg(required = true)]
        images: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Finite-difference check of PConv gradients on random instances.
    Gradcheck {
        #[arg(long, default_value_t = 20)]
        seeds: u64,
    },
    /// Run a built-in experiment.
    Preset {
        /// Preset name; omit with --list.
        name: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Directory relative data paths resolve against.
        #[arg(long, default_value = ".")]
        data_root: PathBuf,
        /// Print the preset's config instead of running it.
        #[arg(long)]
        print: bool,
        #[arg(long)]
        list: bool,
    },
}

const GRADCHECK_ORDERS: [f64; 9] = [-10.0, -5.0, -1.0, -0.5, 0.0, 0.5, 1.0, 5.0, 10.0];

fn print_metrics(label: &str, m: &Metrics) {
    println!("{label:<14} mse {:.4e}  psnr {:.2} dB", m.mean_mse, m.mean_psnr);
}

fn print_report(r: &ExperimentReport) {
    println!("experiment {}", r.name);
    println!("data: {}", r.data);
    println!(
        "trained {} samples, selected snapshot at {}{}",
        r.samples,
        r.best_sample,
        if r.stopped_early { " (stopped early)" } else { "" }
    );
    for o in &r.orders {
        println!("layer {} filter {}: P = {:.3}", o.layer, o.filter, o.order);
    }
    print_metrics("network", &r.network);
    print_metrics("network_final", &r.network_final);
    if let Some(b) = &r.baseline {
        print_metrics("baseline", b);
    }
    println!("artifacts in {}", r.output_dir.display());
}

fn gradcheck(seeds: u64) -> anyhow::Result<()> {
    let mut worst = 0.0f64;
    let mut failures = 0;
    for seed in 0..seeds {
        for p in GRADCHECK_ORDERS {
            let report = check_pconv_instance(seed, p, 1e-5, 1e-4).map_err(|error| ExperimentError::Core {
                stage: Stage::Gradcheck,
                error,
            })?;
            worst = worst.max(report.max_rel_err());
            if !report.passed {
                failures += 1;
                println!("seed {seed} P {p}: FAIL\n{report}");
            }
        }
    }
    let total = seeds as usize * GRADCHECK_ORDERS.len();
    println!("{total} instances, max relative error {worst:.3e}, {failures} failed");
    if failures > 0 {
        return Err(ExperimentError::Invalid {
            stage: Stage::Gradcheck,
            message: format!("{failures} of {total} instances exceeded the 1e-4 tolerance"),
        }
        .into());
    }
    Ok(())
}

fn execute(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Gen {
            kind,
            count,
            width,
            height,
            seed,
            operator,
            noise,
            out,
        } => {
            let kind = match kind {
                Kind::Scene => Synth::Scene(SceneSpec::default()),
                Kind::Defects => Synth::Defects(DefectSpec::default()),
            };
            generate(&kind, count, (width, height), seed, operator.as_ref(), noise, &out)?;
            println!("wrote {count} images to {}", out.display());
            Ok(())
        }
        Command::Train { config } => {
            let config = ExperimentConfig::load(&config).map_err(ExperimentError::from)?;
            print_report(&run(&config)?);
            Ok(())
        }
        Command::Eval { config, params } => {
            let config = ExperimentConfig::load(&config).map_err(ExperimentError::from)?;
            let (net, baseline) = eval(&config, &params)?;
            for im in &net.images {
                println!("{:<14} mse {:.4e}  psnr {:.2} dB", im.name, im.mse, im.psnr);
            }
            print_metrics("network", &net);
            if let Some(b) = &baseline {
                print_metrics("baseline", b);
            }
            Ok(())
        }
        Command::Apply { params, images, out } => {
            for p in apply(&params, &images, &out)? {
                println!("{}", p.display());
            }
            Ok(())
        }
        Command::Gradcheck { seeds } => gradcheck(seeds),
        Command::Preset {
            name,
            out,
            seed,
            data_root,
            print,
            list,
        } => {
            if list {
                for (n, d) in PRESETS {
                    println!("{n:<20} {d}");
                }
                return Ok(());
            }
            let Some(name) = name else {
                bail!("give a preset name or --list");
            };
            let out = out.unwrap_or_else(|| PathBuf::from("out").join(&name));
            let Some(config) = preset(&name, seed, &out, &data_root) else {
                bail!("unknown preset `{name}` (see --list)");
            };
            let config = config.map_err(ExperimentError::from)?;
            if print {
                print!("{config}");
                return Ok(());
            }
            print_report(&run(&config)?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let stage = err
                .downcast_ref::<ExperimentError>()
                .map_or_else(|| "cli".to_string(), |e| e.stage().to_string());
            eprintln!("error [{stage}]: {err:#}");
            ExitCode::FAILURE
        }
    }
}
