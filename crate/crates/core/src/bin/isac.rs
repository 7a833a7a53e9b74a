use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use isac_core::beam_tracking::TrackingMode;
use isac_core::experiments::{determinism, run_criterion, CRITERIA};
use isac_core::nr_frame::Numerology;
use isac_core::radio_slam::Modalities;
use isac_core::scenario::{
    dump_vectors, run, BeamtrackExperiment, Experiment, ImagingScenario, MapRef, NetsenseExperiment, RunReport, Scenario,
    SlamExperiment,
};
use isac_core::{Error, Result};

#[derive(Parser)]
#[command(name = "isac", version, about = "Deterministic ISAC simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Root seed; replaces the seed list of a scenario file.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Scenario file (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Numerology file (JSON).
    #[arg(long)]
    numerology: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Monostatic angle-range image and bistatic RSRP image.
    Imaging {
        #[command(flatten)]
        common: Common,
        /// Built-in map name or map file.
        #[arg(long)]
        map: Option<String>,
    },
    /// Stop-and-scan SLAM in the corridor.
    Slam {
        #[command(flatten)]
        common: Common,
        /// Comma-separated subset of radio,imu,vision.
        #[arg(long)]
        modalities: Option<String>,
    },
    /// Exhaustive versus sensing-aided beam tracking.
    Beamtrack {
        #[command(flatten)]
        common: Common,
        /// exhaustive or sensing_aided; both are compared when omitted.
        #[arg(long)]
        mode: Option<TrackingMode>,
        #[arg(long = "m-beams")]
        m_beams: Option<usize>,
        /// UE speed, m/s.
        #[arg(long)]
        speed: Option<f64>,
        /// Simulated time, s.
        #[arg(long)]
        duration: Option<f64>,
    },
    /// Two-UE cooperative sensing and fusion at the BS.
    Netsense {
        #[command(flatten)]
        common: Common,
    },
    /// Write reference sequences and waveforms.
    DumpVectors {
        #[command(flatten)]
        common: Common,
    },
    /// Parse and validate a scenario file.
    ValidateConfig {
        /// Scenario file (JSON).
        path: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run acceptance criteria by number (all when none given).
    Accept {
        #[arg(long, default_value_t = 2024)]
        seed: u64,
        #[arg(long, default_value = "out/acceptance")]
        out: PathBuf,
        criteria: Vec<u8>,
    },
}

fn load_numerology(path: &Option<PathBuf>) -> Result<Option<Numerology>> {
    path.as_ref()
        .map(|p| {
            let text = std::fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
            Numerology::from_json(&text)
        })
        .transpose()
}

/// Scenario from `--config` (checked against the subcommand) or the default.
fn scenario(common: &Common, kind: &str, default: impl FnOnce() -> Experiment) -> Result<Scenario> {
    let mut scn = match &common.config {
        Some(p) => {
            let s = Scenario::load(p)?;
            if s.experiment.kind() != kind {
                return Err(Error::Config(format!("{} holds a {} experiment, not {kind}", p.display(), s.experiment.kind())));
            }
            s
        }
        None => Scenario::new(default(), vec![1]),
    };
    if let Some(seed) = common.seed {
        scn.seeds = vec![seed];
    }
    if let Some(n) = load_numerology(&common.numerology)? {
        scn.numerology = Some(n);
    }
    scn.validate()?;
    Ok(scn)
}

fn finish(report: &RunReport, out: &Path) -> Result<bool> {
    report.write(out)?;
    print!("{}", report.summary_text());
    eprintln!("wrote {} artifacts to {}", report.artifacts.len(), out.display());
    Ok(report.passed())
}

fn execute(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Imaging { common, map } => {
            let mut scn = scenario(&common, "imaging", || Experiment::Imaging(ImagingScenario::nominal("imaging")))?;
            if let (Some(m), Experiment::Imaging(s)) = (map, &mut scn.experiment) {
                s.map = MapRef::Name(m);
                scn.validate()?;
            }
            finish(&run(&scn)?, &common.out)
        }
        Command::Slam { common, modalities } => {
            let mut scn = scenario(&common, "slam", || {
                Experiment::Slam(SlamExperiment {
                    modalities: Modalities::ALL.label(),
                    scenario: None,
                    filter: Default::default(),
                })
            })?;
            if let (Some(m), Experiment::Slam(s)) = (modalities, &mut scn.experiment) {
                s.modalities = Modalities::parse(&m)?.label();
            }
            finish(&run(&scn)?, &common.out)
        }
        Command::Beamtrack {
            common,
            mode,
            m_beams,
            speed,
            duration,
        } => {
            let mut scn = scenario(&common, "beamtrack", || {
                Experiment::Beamtrack(BeamtrackExperiment {
                    mode: None,
                    config: Default::default(),
                    scenario: None,
                })
            })?;
            if let Experiment::Beamtrack(s) = &mut scn.experiment {
                s.mode = mode.or(s.mode);
                s.config.m_beams = m_beams.unwrap_or(s.config.m_beams);
                s.config.ue_speed = speed.unwrap_or(s.config.ue_speed);
                s.config.sim_duration_s = duration.unwrap_or(s.config.sim_duration_s);
            }
            scn.validate()?;
            finish(&run(&scn)?, &common.out)
        }
        Command::Netsense { common } => {
            let scn = scenario(&common, "netsense", || Experiment::Netsense(NetsenseExperiment { scenario: None }))?;
            finish(&run(&scn)?, &common.out)
        }
        Command::DumpVectors { common } => {
            if common.config.is_some() || common.seed.is_some() {
                eprintln!("dump-vectors is deterministic and ignores --config and --seed");
            }
            let num = load_numerology(&common.numerology)?.unwrap_or_default();
            finish(&dump_vectors(&num)?, &common.out)
        }
        Command::ValidateConfig { path, config } => {
            let p = path.or(config).ok_or_else(|| Error::Config("no scenario file given".into()))?;
            let s = Scenario::load(&p)?;
            println!("{}: valid {} scenario, version {}, {} seed(s)", p.display(), s.experiment.kind(), s.version, s.seeds.len());
            Ok(true)
        }
        Command::Accept { seed, out, criteria } => {
            let ids: Vec<u8> = if criteria.is_empty() { CRITERIA.iter().map(|c| c.0).collect() } else { criteria };
            let mut done = Vec::new();
            let mut ok = true;
            for id in ids {
                let o = if id == 10 { determinism(&done, seed)? } else { run_criterion(id, seed)? };
                println!("{}", o.line());
                let dir = out.join(format!("criterion{id:02}"));
                std::fs::create_dir_all(&dir)?;
                for (name, body) in &o.artifacts {
                    std::fs::write(dir.join(name), body)?;
                }
                ok &= o.passed;
                if id != 10 {
                    done.push(o);
                }
            }
            Ok(ok)
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("one or more checks failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
