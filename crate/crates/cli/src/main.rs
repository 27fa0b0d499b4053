use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use daisy_mimo::harness::{
    run_ber_sweep, run_mse_sweep, run_rate_table, run_simulation, ExecMode, ExperimentKind,
    ExperimentSpec,
};
use daisy_mimo::interconnect;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Parser)]
#[command(
    name = "mimo",
    version,
    about = "Daisy-chain Massive MIMO uplink detection experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// MSE against antenna index for each configured detector.
    MseSweep(SweepArgs),
    /// Bit error rate against SNR.
    BerSweep(SweepArgs),
    /// Interconnect data-rate comparison.
    RateTable {
        /// Scenario list; the four reference configurations when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Also write the CSV to this file.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Cluster-chain slot simulation with a per-cluster timeline.
    Simulate {
        #[command(flatten)]
        run: RunArgs,
        /// Timeline CSV of the first slot. With several detectors, the
        /// second and later ones go to `<stem>_<label>.csv`.
        #[arg(long)]
        timeline: PathBuf,
        /// Directory for MSE-per-RE curves and the run manifest.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the master seed from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the trial count from the config.
    #[arg(long)]
    trials: Option<usize>,
    /// Run trials on the calling thread only.
    #[arg(long)]
    sequential: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Output directory for curve CSVs and `manifest.json`.
    #[arg(long)]
    out: PathBuf,
}

impl RunArgs {
    fn load(&self, kind: ExperimentKind) -> Result<ExperimentSpec> {
        let mut spec = ExperimentSpec::from_path(&self.config)
            .with_context(|| format!("reading {}", self.config.display()))?;
        if spec.kind != kind {
            bail!(
                "{} describes a {:?} experiment, this subcommand runs {:?}",
                self.config.display(),
                spec.kind,
                kind
            );
        }
        if let Some(seed) = self.seed {
            spec.seed = seed;
        }
        if let Some(trials) = self.trials {
            spec.trials = trials;
        }
        spec.validate()?;
        Ok(spec)
    }

    fn mode(&self) -> ExecMode {
        if self.sequential {
            ExecMode::Sequential
        } else {
            ExecMode::Parallel
        }
    }
}

fn timeline_path(base: &Path, index: usize, label: &str) -> PathBuf {
    if index == 0 {
        return base.to_path_buf();
    }
    let stem = base
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("timeline");
    base.with_file_name(format!("{stem}_{label}.csv"))
}

fn report_written(out: &mut impl Write, paths: &[PathBuf]) -> Result<()> {
    for p in paths {
        writeln!(out, "wrote {}", p.display())?;
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match run(cli, &mut std::io::stdout().lock()) {
        Err(e)
            if e.downcast_ref::<std::io::Error>()
                .is_some_and(|io| io.kind() == std::io::ErrorKind::BrokenPipe) =>
        {
            Ok(())
        }
        other => other,
    }
}

fn run(cli: Cli, out: &mut impl Write) -> Result<()> {
    match cli.command {
        Command::MseSweep(args) => {
            let spec = args.run.load(ExperimentKind::MseSweep)?;
            let start = Instant::now();
            let results = run_mse_sweep(&spec, args.run.mode())?;
            report_written(
                out,
                &results.write_to_dir(&args.out, start.elapsed().as_secs_f64())?,
            )?;
        }
        Command::BerSweep(args) => {
            let spec = args.run.load(ExperimentKind::BerSweep)?;
            let start = Instant::now();
            let results = run_ber_sweep(&spec, args.run.mode())?;
            report_written(
                out,
                &results.write_to_dir(&args.out, start.elapsed().as_secs_f64())?,
            )?;
        }
        Command::RateTable { config, csv } => {
            let spec = match &config {
                Some(path) => ExperimentSpec::from_path(path)
                    .with_context(|| format!("reading {}", path.display()))?,
                None => ExperimentSpec::new(ExperimentKind::RateTable),
            };
            let reports = run_rate_table(&spec)?;
            writeln!(out, "{}", interconnect::format_table(&reports))?;
            let mut buf = Vec::new();
            interconnect::write_csv(&reports, &mut buf)?;
            out.write_all(&buf)?;
            if let Some(path) = csv {
                std::fs::write(&path, buf)
                    .with_context(|| format!("writing {}", path.display()))?;
            }
        }
        Command::Simulate {
            run: args,
            timeline,
            out: out_dir,
        } => {
            let spec = args.load(ExperimentKind::Simulate)?;
            let start = Instant::now();
            let output = run_simulation(&spec, args.mode())?;
            if output.timelines.is_empty() {
                bail!("no recursive detector configured, nothing to put on a timeline");
            }
            let mut written = Vec::new();
            for (i, (label, report)) in output.timelines.iter().enumerate() {
                let path = timeline_path(&timeline, i, label);
                report.write_csv(
                    std::fs::File::create(&path)
                        .with_context(|| format!("creating {}", path.display()))?,
                )?;
                written.push(path);
            }
            if let Some(dir) = out_dir {
                written.extend(
                    output
                        .results
                        .write_to_dir(dir, start.elapsed().as_secs_f64())?,
                );
            }
            report_written(out, &written)?;
            for (key, value) in &output.results.summary {
                writeln!(out, "{key} = {value}")?;
            }
        }
    }
    Ok(())
}
