use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use dlcz::calibrate::{calibrate, Setup, PAPER_T60_TARGETS};
use dlcz::engine::{simulate, SplitterMode};
use dlcz::io::config::{parse_config, serialize_config, Scenario};
use dlcz::io::events::{read_events, write_events, EventFile, EventHeader};
use dlcz::io::presets;
use dlcz::io::report::{export_report, ReportDocument, ReportFormat};
use dlcz::pipeline::{
    analyze_streams, grid, in_pool, predict, run_scenario, sweep, sweep_csv, ModeStreams,
    SweepParam,
};

macro_rules! out {
    ($($t:tt)*) => {
        write!(std::io::stdout().lock(), $($t)*)?
    };
}

macro_rules! outln {
    ($($t:tt)*) => {
        writeln!(std::io::stdout().lock(), $($t)*)?
    };
}

#[derive(Parser)]
#[command(name = "dlcz", version, about = "Simulate and analyze write/read photon-pair coincidences")]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ScenarioArgs {
    /// Built-in scenario (see `dlcz presets`).
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    /// Scenario file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<u64>,
}

impl ScenarioArgs {
    fn load(&self, default_preset: &str) -> Result<Scenario> {
        let mut s = match (&self.config, &self.preset) {
            (Some(path), _) => {
                let text = fs::read_to_string(path)
                    .with_context(|| format!("cannot read {}", path.display()))?;
                parse_config(&text).with_context(|| format!("{}", path.display()))?
            }
            (None, Some(name)) => presets::get(name)?,
            (None, None) => presets::get(default_preset)?,
        };
        if let Some(seed) = self.seed {
            s = s.with_seed(seed);
        }
        if let Some(trials) = self.trials {
            s = s.with_trials(trials);
        }
        s.validate()?;
        Ok(s)
    }
}

#[derive(Subcommand)]
enum Command {
    /// List built-in scenarios.
    Presets {
        /// Print the full TOML of one preset.
        #[arg(long)]
        show: Option<String>,
    },
    /// Simulate a scenario and write event files.
    Simulate {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Splitter setting; `all` writes pair/auto1/auto2 files into --out.
        #[arg(long, default_value = "all")]
        mode: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Analyze pair, auto1 and auto2 event files into a report.
    Analyze {
        /// Event files; the splitter setting is read from each header.
        #[arg(required = true)]
        files: Vec<PathBuf>,
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, default_value = "report")]
        out_dir: PathBuf,
        #[arg(long, value_enum, default_value_t)]
        format: ReportFormat,
    },
    /// Simulate and analyze in one go.
    Run {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, default_value = "report")]
        out_dir: PathBuf,
        #[arg(long, value_enum, default_value_t)]
        format: ReportFormat,
        /// Also write the three event files into the output directory.
        #[arg(long)]
        save_events: bool,
    },
    /// Vary one parameter over a grid and tabulate g~ and R.
    Sweep {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long)]
        param: SweepParam,
        #[arg(long)]
        from: f64,
        #[arg(long)]
        to: f64,
        #[arg(long)]
        steps: usize,
        /// Write the table here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit p, bg1 and the field-2 noise to the 60 ns measurement.
    Calibrate {
        #[command(flatten)]
        scenario: ScenarioArgs,
    },
}

fn events_path(dir: &Path, mode: SplitterMode) -> PathBuf {
    dir.join(format!("{mode}.events"))
}

fn save_streams(dir: &Path, s: &Scenario, streams: &ModeStreams) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    for mode in SplitterMode::ALL {
        let file = EventFile {
            header: EventHeader::for_run(&s.run.for_mode(mode)),
            events: streams.get(mode).to_vec(),
        };
        write_events(&events_path(dir, mode), &file)?;
    }
    Ok(())
}

fn summary(doc: &ReportDocument) -> String {
    let cs = &doc.cauchy_schwarz;
    format!(
        "g11={:.4}±{:.4} g22={:.4}±{:.4} g12={:.4}±{:.4} g12^2={:.3}±{:.3} g11*g22={:.3}±{:.3} R={:.4}±{:.4} significance={} verdict={}",
        doc.g11.value,
        doc.g11.sigma,
        doc.g22.value,
        doc.g22.sigma,
        doc.g12.value,
        doc.g12.sigma,
        cs.numerator.value,
        cs.numerator.sigma,
        cs.denominator.value,
        cs.denominator.sigma,
        cs.ratio.value,
        cs.ratio.sigma,
        cs.significance.map_or("n/a".to_string(), |s| format!("{s:.2}")),
        cs.verdict.as_str(),
    )
}

fn execute(cli: Cli) -> Result<()> {
    let workers = cli.workers;
    match cli.command {
        Command::Presets { show } => {
            if let Some(name) = show {
                out!("{}", serialize_config(&presets::get(&name)?));
            } else {
                for s in presets::all() {
                    outln!("{}\t{}", s.name, s.description);
                }
            }
        }
        Command::Simulate {
            scenario,
            mode,
            out,
        } => {
            let s = scenario.load(presets::PAPER_T60)?;
            if mode == "all" {
                let streams = in_pool(workers, || dlcz::pipeline::simulate_modes(&s))??;
                save_streams(&out, &s, &streams)?;
            } else {
                let mode = SplitterMode::parse(&mode)
                    .ok_or_else(|| anyhow!("unknown mode `{mode}` (pair, auto1, auto2, all)"))?;
                let cfg = s.run.for_mode(mode);
                let events = in_pool(workers, || simulate(&cfg))??;
                write_events(
                    &out,
                    &EventFile {
                        header: EventHeader::for_run(&cfg),
                        events,
                    },
                )?;
            }
        }
        Command::Analyze {
            files,
            scenario,
            out_dir,
            format,
        } => {
            for f in &files {
                if !f.is_file() {
                    bail!("no such event file: {}", f.display());
                }
            }
            let mut s = scenario.load(presets::PAPER_T60)?;
            let mut streams: [Option<EventFile>; 3] = [None, None, None];
            for f in &files {
                let read = read_events(f, None)?;
                let mode = read.file.header.splitter;
                let slot = &mut streams[mode as usize];
                if slot.is_some() {
                    bail!("two {mode} event files given ({})", f.display());
                }
                if read.file.header.trial_period_ns != s.run.timing.trial_period_ns {
                    bail!(
                        "{}: trial period {} ns does not match the scenario ({} ns)",
                        f.display(),
                        read.file.header.trial_period_ns,
                        s.run.timing.trial_period_ns
                    );
                }
                *slot = Some(read.file);
            }
            let [pair, auto1, auto2] = streams;
            let missing = |m: &str| anyhow!("missing {m} event file");
            let (pair, auto1, auto2) = (
                pair.ok_or_else(|| missing("pair"))?,
                auto1.ok_or_else(|| missing("auto1"))?,
                auto2.ok_or_else(|| missing("auto2"))?,
            );
            s = s.with_trials(pair.header.trials_per_run);
            for (mode, file) in [
                (SplitterMode::Pair, &pair),
                (SplitterMode::Auto1, &auto1),
                (SplitterMode::Auto2, &auto2),
            ] {
                let expected = EventHeader::for_run(&s.run.for_mode(mode)).config_digest;
                if expected != file.header.config_digest {
                    eprintln!("warning: digest_mismatch: {mode} events were not generated by scenario `{}`", s.name);
                }
            }
            let streams = ModeStreams {
                pair: pair.events,
                auto1: auto1.events,
                auto2: auto2.events,
            };
            let report = in_pool(workers, || analyze_streams(&s, &streams))??;
            let doc = ReportDocument::new(&s, &report, predict(&s).ok().as_ref());
            export_report(&out_dir, &doc, &report, format)?;
            outln!("{}", summary(&doc));
        }
        Command::Run {
            scenario,
            out_dir,
            format,
            save_events,
        } => {
            let s = scenario.load(presets::PAPER_T60)?;
            let out = in_pool(workers, || run_scenario(&s))??;
            let doc = ReportDocument::new(&s, &out.report, Some(&out.prediction));
            export_report(&out_dir, &doc, &out.report, format)?;
            if save_events {
                save_streams(&out_dir, &s, &out.streams)?;
            }
            outln!("{}", summary(&doc));
        }
        Command::Sweep {
            scenario,
            param,
            from,
            to,
            steps,
            out,
        } => {
            if steps == 0 {
                bail!("--steps must be at least 1");
            }
            let s = scenario.load(presets::IDEAL)?;
            let values = grid(from, to, steps);
            for &v in &values {
                param
                    .apply(&s, v)
                    .validate()
                    .with_context(|| format!("{} = {v}", param.name()))?;
            }
            let rows = in_pool(workers, || sweep(&s, param, &values))??;
            let table = sweep_csv(param, &rows);
            match out {
                Some(path) => fs::write(&path, table)
                    .with_context(|| format!("cannot write {}", path.display()))?,
                None => out!("{table}"),
            }
        }
        Command::Calibrate { scenario } => {
            let s = scenario.load(presets::PAPER_T60)?;
            let cal = calibrate(&PAPER_T60_TARGETS, &Setup::default(), &s.run.timing)?;
            let src = &cal.source;
            outln!("# fitted to g11={} g22={} g12={} (gate {} ns)", PAPER_T60_TARGETS.g11, PAPER_T60_TARGETS.g22, PAPER_T60_TARGETS.g12, s.run.timing.gate_width_ns);
            let show = |x: Option<f64>| x.map_or("undefined".to_string(), |v| format!("{v:.4}"));
            outln!(
                "# predicted g11={} g22={} g12={} ratio={}",
                show(cal.predicted.g2_11),
                show(cal.predicted.g2_22),
                show(cal.predicted.g2_12),
                show(cal.predicted.cs_ratio())
            );
            outln!("# objective={:e} iterations={} p_on_bound={}", cal.objective, cal.iterations, cal.on_p_bound);
            outln!("[source]");
            outln!("p = {:?}", src.p);
            outln!("zeta = {:?}", src.zeta);
            outln!("eta1 = {:?}", src.eta1);
            outln!("eta2 = {:?}", src.eta2);
            outln!("bg1 = {:?}", src.bg1);
            outln!("bg2 = {:?}", src.bg2);
            outln!("leak2 = {:?}", src.leak2);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("error: usage: {first}");
            return ExitCode::from(2);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.downcast_ref::<std::io::Error>().is_some_and(|io| io.kind() == std::io::ErrorKind::BrokenPipe) => {
            ExitCode::SUCCESS
        }
        Err(e) => {
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
