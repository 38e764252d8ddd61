use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use ibvs_grasp::sim::{
    read_step_log, read_tracks, run_trial, write_step_log, write_tracks, CampaignSummary, Jump, MotionModel, Scenario,
    TrialResult,
};

mod svg;

#[derive(Parser)]
#[command(
    name = "ibvs-grasp",
    version,
    about = "Switching PBVS/IBVS grasp experiments in simulation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// IBVS reaching with predicted goal features, static and with target jumps
    Experiment1(RunSpec),
    /// Full switching-controller grasp campaigns
    Experiment2(RunSpec),
    /// Render SVG plots from step or track logs
    Plot(PlotArgs),
}

#[derive(Args)]
struct RunSpec {
    /// Scenario TOML file; the built-in preset is used when omitted
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Seeds, e.g. `0,3,10-19`
    #[arg(long, value_parser = parse_seeds, conflicts_with = "trials")]
    seeds: Option<SeedList>,
    /// Number of trials, seeds 0..n
    #[arg(long)]
    trials: Option<u64>,
    /// Also write SVG plots
    #[arg(long)]
    svg: bool,
}

#[derive(Args)]
struct PlotArgs {
    /// Step logs (`t,mode,mean_err_px,...`) or track logs (`t,ref_id,u,v,...`)
    #[arg(required = true)]
    logs: Vec<PathBuf>,
    /// Output directory; defaults to each log's directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Scenario providing the image size for path plots
    #[arg(long)]
    scenario: Option<PathBuf>,
}

#[derive(Clone, Debug)]
struct SeedList(Vec<u64>);

fn parse_seeds(s: &str) -> Result<SeedList, String> {
    let mut seeds = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => {
                let a: u64 = a.trim().parse().map_err(|e| format!("bad seed `{a}`: {e}"))?;
                let b: u64 = b.trim().parse().map_err(|e| format!("bad seed `{b}`: {e}"))?;
                if b < a {
                    return Err(format!("empty seed range `{part}`"));
                }
                seeds.extend(a..=b);
            }
            None => seeds.push(part.parse().map_err(|e| format!("bad seed `{part}`: {e}"))?),
        }
    }
    if seeds.is_empty() {
        return Err("seed list is empty".into());
    }
    Ok(SeedList(seeds))
}

impl RunSpec {
    fn seeds(&self, default_trials: u64) -> Vec<u64> {
        match (&self.seeds, self.trials) {
            (Some(s), _) => s.0.clone(),
            (None, Some(n)) => (0..n).collect(),
            (None, None) => (0..default_trials).collect(),
        }
    }
}

fn load_scenario(path: &Path) -> Result<Scenario> {
    Scenario::load(path).with_context(|| format!("loading scenario {}", path.display()))
}

fn write_trial(dir: &Path, stem: &str, r: &TrialResult, svg: bool, image_size: [usize; 2]) -> Result<()> {
    let steps = dir.join(format!("{stem}_steps.csv"));
    write_step_log(&r.log, BufWriter::new(File::create(&steps)?))
        .with_context(|| format!("writing {}", steps.display()))?;
    let tracks = dir.join(format!("{stem}_tracks.csv"));
    write_tracks(&r.tracks, BufWriter::new(File::create(&tracks)?))
        .with_context(|| format!("writing {}", tracks.display()))?;
    if svg {
        fs::write(dir.join(format!("{stem}_error.svg")), svg::error_plot(&r.log, stem))?;
        fs::write(
            dir.join(format!("{stem}_paths.svg")),
            svg::paths_plot(&r.tracks, image_size, stem),
        )?;
    }
    Ok(())
}

/// Two 3 cm jumps in different directions while the camera is still reaching.
fn with_jumps(sc: &Scenario) -> Scenario {
    let mut d = sc.clone();
    d.name = format!("{}-jumps", sc.name);
    d.motion = MotionModel::Scripted {
        jumps: vec![
            Jump {
                at: 3.0,
                dx: 0.03,
                dy: 0.0,
                dyaw: 0.0,
            },
            Jump {
                at: 6.0,
                dx: 0.0,
                dy: -0.03,
                dyaw: 0.0,
            },
        ],
        segments: Vec::new(),
    };
    d
}

fn cmd_experiment1(spec: &RunSpec) -> Result<bool> {
    let base = match &spec.scenario {
        Some(p) => load_scenario(p)?,
        None => Scenario::experiment1(),
    };
    let variants = if base.motion.is_static() {
        vec![("static", base.clone()), ("dynamic", with_jumps(&base))]
    } else {
        vec![("dynamic", base.clone())]
    };
    let dir = spec.out.join("experiment1");
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut ok = true;
    for seed in spec.seeds(1) {
        for (kind, sc) in &variants {
            let r = run_trial(sc, seed);
            write_trial(&dir, &format!("{kind}_seed{seed}"), &r, spec.svg, sc.camera.image_size)?;
            let cause = r.cause.map_or("-", |c| c.name());
            println!(
                "{kind:8} seed {seed:4}  success {:5}  steps {:5}  final error {:7.3} px  cause {cause}",
                r.success, r.steps, r.final_err_px
            );
            ok &= r.success;
        }
    }
    Ok(ok)
}

fn cmd_experiment2(spec: &RunSpec) -> Result<bool> {
    let scenarios = match &spec.scenario {
        Some(p) => vec![load_scenario(p)?],
        None => vec![Scenario::experiment2_static(), Scenario::experiment2_dynamic()],
    };
    let seeds = spec.seeds(10);
    println!(
        "{:24} {:>7} {:>9} {:>8}  causes",
        "scenario", "trials", "successes", "rate"
    );
    for sc in &scenarios {
        let dir = spec.out.join(&sc.name);
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        let mut results = Vec::with_capacity(seeds.len());
        for &seed in &seeds {
            let r = run_trial(sc, seed);
            write_trial(&dir, &format!("seed{seed}"), &r, spec.svg, sc.camera.image_size)?;
            results.push(r);
        }
        let summary = CampaignSummary::from_results(&sc.name, &results);
        fs::write(dir.join("summary.json"), summary.to_json())?;
        let causes: Vec<String> = summary.causes.iter().map(|(k, v)| format!("{k}={v}")).collect();
        println!(
            "{:24} {:>7} {:>9} {:>8.3}  {}",
            sc.name,
            summary.n_trials,
            summary.successes,
            summary.success_rate,
            causes.join(" ")
        );
    }
    Ok(true)
}

fn cmd_plot(args: &PlotArgs) -> Result<bool> {
    let image_size = match &args.scenario {
        Some(p) => load_scenario(p)?.camera.image_size,
        None => Scenario::default().camera.image_size,
    };
    for log in &args.logs {
        let content = fs::read(log).with_context(|| format!("reading {}", log.display()))?;
        let header = content.split(|&b| b == b'\n').next().unwrap_or_default();
        let header = String::from_utf8_lossy(header);
        let stem = log.file_stem().and_then(|s| s.to_str()).unwrap_or("log");
        let dir = match &args.out {
            Some(d) => d.clone(),
            None => log.parent().map(Path::to_path_buf).unwrap_or_default(),
        };
        fs::create_dir_all(&dir)?;
        let (name, svg) = if header.split(',').any(|h| h.trim() == "ref_id") {
            let tracks = read_tracks(content.as_slice()).with_context(|| format!("parsing {}", log.display()))?;
            if tracks.is_empty() {
                bail!("{} has no records", log.display());
            }
            (format!("{stem}_paths.svg"), svg::paths_plot(&tracks, image_size, stem))
        } else {
            let steps = read_step_log(content.as_slice()).with_context(|| format!("parsing {}", log.display()))?;
            if steps.is_empty() {
                bail!("{} has no records", log.display());
            }
            (format!("{stem}_error.svg"), svg::error_plot(&steps, stem))
        };
        let path = dir.join(name);
        fs::write(&path, svg)?;
        println!("{}", path.display());
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Experiment1(spec) => cmd_experiment1(spec),
        Command::Experiment2(spec) => cmd_experiment2(spec),
        Command::Plot(args) => cmd_plot(args),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: at least one trial failed");
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
