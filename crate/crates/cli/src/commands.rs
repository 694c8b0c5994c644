use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde_json::json;
use slitflight::analysis::{arrival_bins, build_histogram, uniform_edges, write_flux_csv, write_histogram_csv};
use slitflight::checks::invariant_suite;
use slitflight::{load_config, load_history, preset, run, run_on_history, write_events_csv, RunOptions, RunOutput};
use slitflight::{ScenarioConfig, SlitTag};

use crate::manifest::RunManifest;
use crate::{CliError, RunArgs};

const DEFAULT_BINS: usize = 64;

fn scenario(args: &RunArgs) -> Result<ScenarioConfig, CliError> {
    let mut config = match (&args.preset, &args.config) {
        (Some(name), None) => preset(name)?,
        (None, Some(path)) => load_config(path)?,
        _ => return Err(CliError::Usage("give exactly one of --preset or --config".into())),
    };
    if let Some(seed) = args.seed {
        config.ensemble.seed = seed;
    }
    if let Some(n) = args.n {
        config.ensemble.n_particles = n as usize;
    }
    config.validate()?;
    Ok(config)
}

fn require_seed(args: &RunArgs) -> Result<u64, CliError> {
    args.seed
        .ok_or_else(|| CliError::Usage("--seed is required; runs never draw entropy implicitly".into()))
}

fn bins(args: &RunArgs) -> (usize, usize) {
    match (args.bins_x, args.bins_t) {
        (Some(x), Some(t)) => (x as usize, t as usize),
        _ => (DEFAULT_BINS, DEFAULT_BINS),
    }
}

fn execute(config: &ScenarioConfig, args: &RunArgs, opts: RunOptions) -> Result<RunOutput, CliError> {
    let opts = RunOptions {
        dump_history: args.dump_history.clone(),
        ..opts
    };
    Ok(match &args.history {
        Some(path) => run_on_history(config, &load_history(path)?, &opts)?,
        None => run(config, &opts)?,
    })
}

fn write_file(dir: &Path, name: &str, fill: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<String, CliError> {
    let path = dir.join(name);
    let mut out = BufWriter::new(File::create(&path)?);
    fill(&mut out)?;
    out.flush()?;
    Ok(name.to_string())
}

pub fn simulate(args: &RunArgs) -> Result<u8, CliError> {
    let seed = require_seed(args)?;
    let config = scenario(args)?;
    fs::create_dir_all(&args.out)?;
    let out = execute(
        &config,
        args,
        RunOptions {
            trajectories: true,
            flux: true,
            ..Default::default()
        },
    )?;
    let outcome = out.outcome.expect("trajectories requested");
    let trace = out.flux.expect("flux requested");
    let events = outcome.events();
    let (nx, nt) = bins(args);
    let (xe, te) = arrival_bins(&events, &config.region(), config.solver.t_max, nx, nt);
    let hist = build_histogram(&events, &xe, &te)?;
    let flux = trace.profile(&xe, &te)?;

    let dir = args.out.as_path();
    let outputs = vec![
        write_file(dir, "events.csv", |w| write_events_csv(w, &outcome.records))?,
        write_file(dir, "histogram.csv", |w| write_histogram_csv(w, &hist, &config.name, seed))?,
        write_file(dir, "flux.csv", |w| write_flux_csv(w, &flux, &config.name, Some(seed)))?,
        write_file(dir, "scenario.cfg", |w| w.write_all(config.to_kv_string().as_bytes()))?,
    ];
    let s = outcome.summary;
    let (left, right) = events.iter().fold((0usize, 0usize), |(l, r), e| match e.slit_tag {
        SlitTag::Left => (l + 1, r),
        SlitTag::Right => (l, r + 1),
        SlitTag::Undetermined => (l, r),
    });
    RunManifest {
        command: "simulate",
        config: &config,
        seed: Some(seed),
        timings: &out.timings,
        outputs,
        summary: json!({
            "n": s.n,
            "detected": s.detected,
            "backscattered": s.backscattered,
            "node_abort": s.node_abort,
            "transmission": s.transmission(),
            "left": left,
            "right": right,
            "flux_total": flux.total(),
            "histogram_overflow": hist.overflow,
        }),
    }
    .write(dir)?;
    println!("scenario      {}", config.name);
    println!("trajectories  {}", s.n);
    println!("detected      {} (transmission {:.4})", s.detected, s.transmission());
    println!("backscattered {}", s.backscattered);
    println!("node aborts   {}", s.node_abort);
    println!("slit L / R    {left} / {right}");
    println!("flux total    {:.4}", flux.total());
    println!("output        {}", dir.display());
    Ok(0)
}

pub fn flux(args: &RunArgs) -> Result<u8, CliError> {
    let config = scenario(args)?;
    fs::create_dir_all(&args.out)?;
    let out = execute(
        &config,
        args,
        RunOptions {
            flux: true,
            ..Default::default()
        },
    )?;
    let trace = out.flux.expect("flux requested");
    let (nx, nt) = bins(args);
    let region = config.region();
    let xe = uniform_edges(region.x_lo, region.x_hi, nx);
    let te = uniform_edges(0.0, config.solver.t_max, nt);
    let flux = trace.profile(&xe, &te)?;
    let dir = args.out.as_path();
    let outputs = vec![write_file(dir, "flux.csv", |w| write_flux_csv(w, &flux, &config.name, args.seed))?];
    RunManifest {
        command: "flux",
        config: &config,
        seed: args.seed,
        timings: &out.timings,
        outputs,
        summary: json!({ "flux_total": flux.total(), "norm": out.ledger.norm, "absorbed_front": out.ledger.absorbed_front, "absorbed_rear": out.ledger.absorbed_rear }),
    }
    .write(dir)?;
    println!("scenario    {}", config.name);
    println!("flux total  {:.4}", flux.total());
    println!("output      {}", dir.display());
    Ok(0)
}

pub fn validate(args: &RunArgs) -> Result<u8, CliError> {
    require_seed(args)?;
    if args.history.is_some() || args.dump_history.is_some() {
        return Err(CliError::Usage("validate always solves from scratch; drop --history/--dump-history".into()));
    }
    let config = scenario(args)?;
    let (nx, nt) = bins(args);
    let rows = invariant_suite(&config, nx, nt)?;
    let width = rows.iter().map(|r| r.name.len()).max().unwrap_or(0);
    println!("invariant suite for {} (seed {})", config.name, config.ensemble.seed);
    for r in &rows {
        println!(
            "{:<width$}  {:>12.4e}  {:<12}  {}",
            r.name,
            r.value,
            r.threshold,
            if r.pass { "PASS" } else { "FAIL" }
        );
    }
    let failed = rows.iter().filter(|r| !r.pass).count();
    println!("{} of {} checks passed", rows.len() - failed, rows.len());
    Ok(if failed == 0 { 0 } else { 4 })
}
