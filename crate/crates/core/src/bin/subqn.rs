use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use subqn::harness::{self, ExperimentConfig, RateModel, Summary};
use subqn::optimizer::Trace;
use subqn::sketch::concentration_stats;
use subqn::Error;

#[derive(Parser)]
#[command(name = "subqn", version, about = "Subspace quasi-Newton experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every configured (method, seed) pair and write traces and summaries.
    Run {
        config: Option<PathBuf>,
        /// Print every config key with its default and exit.
        #[arg(long)]
        print_defaults: bool,
    },
    /// Fit a convergence-rate model to the mean curve of one or more traces.
    Rates {
        #[arg(required = true)]
        traces: Vec<PathBuf>,
        /// Optimal value; required for the inv_k and geometric models.
        #[arg(long, allow_hyphen_values = true)]
        fstar: Option<f64>,
        /// inv_sqrt_k, inv_k or geometric.
        #[arg(long)]
        model: String,
        /// First iteration of the fit window; raised to m/2 for methods with a basis.
        #[arg(long, default_value_t = 1)]
        from: usize,
        #[arg(long, default_value_t = usize::MAX)]
        to: usize,
    },
    /// Empirical concentration of Gaussian sketches.
    Concentration {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        d: usize,
        #[arg(long)]
        trials: usize,
        #[arg(long, default_value_t = 0.5)]
        eps: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Render SVG plots from a summary CSV.
    Plot {
        summary: PathBuf,
        /// Output directory; defaults to the summary's directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidConfig(_) | Error::Parse(_) | Error::CapabilityMissing(_) => 2,
        Error::NumericalOverflow { .. } | Error::NumericalError(_) => 3,
        _ => 1,
    }
}

fn rates(traces: &[PathBuf], fstar: Option<f64>, model: &str, window: (usize, usize)) -> subqn::Result<()> {
    let model: RateModel = model.parse()?;
    let loaded = traces.iter().map(|p| Trace::load(p)).collect::<subqn::Result<Vec<_>>>()?;
    // methods with a basis record `m` in the header; iterations before m/2 are warm-up
    let m = loaded
        .iter()
        .filter(|t| {
            let method = t.config.iter().find(|(k, _)| k == "method").map(|(_, v)| v.as_str());
            matches!(method, Some("sqn-exact" | "sqn-fd" | "lmn"))
        })
        .filter_map(|t| t.config.iter().find(|(k, _)| k == "m").and_then(|(_, v)| v.parse::<usize>().ok()))
        .max()
        .unwrap_or(0);
    let window = (window.0.max(harness::warmup_end(m)), window.1);
    let (curve, fstar) = match model {
        RateModel::InvSqrtK => {
            let true_grad = harness::mean_curve(&loaded, 1);
            let usable = true_grad.iter().skip(1).any(|v| v.is_finite());
            (if usable { true_grad } else { harness::mean_curve(&loaded, 2) }, f64::NAN)
        }
        _ => {
            let fstar = fstar.ok_or_else(|| Error::InvalidConfig(format!("--fstar is required for {model}")))?;
            (harness::mean_curve(&loaded, 0), fstar)
        }
    };
    println!("{}", harness::fit_rate(&curve, fstar, model, window)?);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { print_defaults: true, .. } => {
            print!("{}", ExperimentConfig::defaults_text());
            Ok(0)
        }
        Command::Run { config: None, .. } => Err(Error::InvalidConfig("missing config file".into())),
        Command::Run { config: Some(path), .. } => ExperimentConfig::load(&path)
            .and_then(|cfg| harness::run_experiment(&cfg))
            .map(|report| {
                for r in &report.runs {
                    match &r.result {
                        Ok(t) => println!("{} seed {}: {} rows, stop={}", r.method, r.seed, t.rows.len(), t.stop),
                        Err(msg) => eprintln!("{} seed {}: failed: {msg}", r.method, r.seed),
                    }
                }
                if report.has_numerical_abort() { 3 } else { 0 }
            }),
        Command::Rates { traces, fstar, model, from, to } => rates(&traces, fstar, &model, (from, to)).map(|_| 0),
        Command::Concentration { n, d, trials, eps, seed } => concentration_stats(n, d, trials, eps, seed).map(|r| {
            println!("n={} d={} trials={} eps={}", r.n, r.d, r.trials, r.eps_jl);
            println!("frac_vector_norm_ok={}", r.frac_vector_norm_ok);
            println!("max_op_norm_ratio={}", r.max_op_norm_ratio);
            0
        }),
        Command::Plot { summary, out } => Summary::load(&summary).and_then(|s| {
            let dir = out.unwrap_or_else(|| summary.parent().map(PathBuf::from).unwrap_or_default());
            for p in harness::emit_plots(&s, &dir)? {
                println!("{}", p.display());
            }
            Ok(0)
        }),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
