//! The `fiberlink` command line.
//!
//! Every command is a pure function of its inputs, config and seed; output
//! files carry a comment header with the tool version, a hash of the
//! configuration and the column schema.

use std::fs;
use std::io::{BufWriter, IsTerminal, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use crate::io::{self, Header};
use crate::link::{check_plan, simulate_end_to_end};
use crate::noise::derive_seed;
use crate::postproc::{
    combine_budget, renewal_mask, three_observable_select, uptime, Policy, SelectionConfig, UncertaintyBudget,
};
use crate::scenario::{config_hash, Scenario};
use crate::series::{histogram, summary_stats, FreqSeries, ValidityMask};
use crate::stability::{adev, mdev, write_table, TauSpec};

/// Exit code for validation violations such as a failed plan check.
pub const EXIT_VIOLATION: u8 = 2;
/// Exit code for I/O, format and configuration errors.
pub const EXIT_ERROR: u8 = 1;

#[derive(Debug, Parser)]
#[command(name = "fiberlink", version, about = "Optical fiber link simulation and post-processing")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Output directory (created if missing).
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a scenario and write remote, end-to-end and monitor series.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        common: Common,
    },
    /// Stability tables, histogram and summary of series files.
    Analyze {
        files: Vec<PathBuf>,
        /// `1-2-5`, `octave` or a comma-separated list of seconds.
        #[arg(long, default_value = "1-2-5")]
        taus: String,
        /// Read counter exports: channel name with optional `=NOMINAL_HZ`.
        #[arg(long)]
        channel: Option<String>,
        #[arg(long)]
        nu0: Option<f64>,
        /// Histogram bin width in Hz.
        #[arg(long, default_value_t = 1e-3)]
        bin_width: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Three-observable data selection; writes a sidecar mask.
    Select {
        file: PathBuf,
        /// Scenario file with a `[select]` table.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        nu0: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Uptime of masks or series files (`label=path` or `path`), or of the
    /// seeded fixture in a config `[uptime]` table.
    Uptime {
        masks: Vec<String>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        common: Common,
    },
    /// Combine a `label bias uncertainty` budget table.
    Budget {
        file: PathBuf,
        /// `quadrature` or `conservative`.
        #[arg(long, default_value = "conservative")]
        policy: String,
        #[command(flatten)]
        common: Common,
    },
    /// Check the frequency plan of a config; exits 2 on violations.
    Plan {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

fn color() -> bool {
    std::env::var_os("FIBERLINK_NO_COLOR").is_none() && std::io::stdout().is_terminal()
}

fn paint(text: &str, ok: bool) -> String {
    if color() {
        format!("\x1b[{}m{text}\x1b[0m", if ok { 32 } else { 31 })
    } else {
        text.to_string()
    }
}

/// Hash of the inputs of a run without a config file.
fn inputs_hash(parts: &[&[u8]]) -> String {
    let mut all = Vec::new();
    for p in parts {
        all.extend_from_slice(&(p.len() as u64).to_le_bytes());
        all.extend_from_slice(p);
    }
    config_hash(&all)
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "series".into())
}

fn create(path: &Path) -> anyhow::Result<BufWriter<fs::File>> {
    Ok(BufWriter::new(
        fs::File::create(path).with_context(|| format!("cannot create {}", path.display()))?,
    ))
}

fn write_manifest(dir: &Path, hash: &str, seed: Option<u64>, command: &str, files: &[PathBuf]) -> anyhow::Result<()> {
    let mut header = Header::new(hash, &["file", "sha256"]).note("command", command);
    if let Some(seed) = seed {
        header = header.note("seed", seed);
    }
    let mut w = create(&dir.join("manifest.tsv"))?;
    header.write(&mut w)?;
    for f in files {
        let digest = config_hash(&fs::read(f)?);
        let name = f.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        writeln!(w, "{name}\t{digest}")?;
    }
    w.flush()?;
    Ok(())
}

/// Run a parsed command line and return the process exit code.
pub fn run(cli: Cli) -> anyhow::Result<u8> {
    match cli.command {
        Command::Simulate { config, seed, common } => simulate(&config, seed, &common.out),
        Command::Analyze {
            files,
            taus,
            channel,
            nu0,
            bin_width,
            common,
        } => analyze(&files, &taus, channel.as_deref(), nu0, bin_width, &common.out),
        Command::Select {
            file,
            config,
            nu0,
            common,
        } => select(&file, config.as_deref(), nu0, &common.out),
        Command::Uptime {
            masks,
            config,
            seed,
            common,
        } => uptime_cmd(&masks, config.as_deref(), seed, &common.out),
        Command::Budget { file, policy, common } => budget(&file, &policy, &common.out),
        Command::Plan { config, common } => plan(&config, &common.out),
    }
}

fn simulate(config: &Path, seed: Option<u64>, out: &Path) -> anyhow::Result<u8> {
    let (scn, hash) = Scenario::load(config).with_context(|| format!("reading {}", config.display()))?;
    let seed = seed.unwrap_or(scn.run.seed);
    let n = scn.run.samples()?;
    let topo = scn.topology()?;
    let noise = scn.link_noise()?;
    let sim = simulate_end_to_end(&topo, &noise, n, scn.run.gate, scn.run.t0_mjd, scn.run.nu0, seed)?;
    fs::create_dir_all(out)?;

    let mut files = Vec::new();
    let remote = out.join("remote.tsv");
    io::write_series(&remote, &sim.remote, &hash, "y")?;
    files.push(remote);
    let e2e = out.join("end_to_end.tsv");
    io::write_series(&e2e, &sim.end_to_end, &hash, "y")?;
    files.push(e2e);
    for (k, (rec, mon)) in sim.monitors.iter().zip(&topo.short_links).enumerate() {
        let name = if sim.monitors.len() == 1 {
            "monitor.tsv".to_string()
        } else {
            format!("monitor_{k}.tsv")
        };
        let path = out.join(name);
        let header = Header::new(&hash, &["mjd", "df_hz", "valid"])
            .note("gate_s", rec.gate)
            .note("monitor", &mon.label)
            .note("counted_nominal_hz", mon.counted_frequency())
            .note("divide_by", mon.divide_by)
            .note("correction", "y_corr = divide_by * df_hz / (2 nu0); corrected = comparison - y_corr");
        let mut w = create(&path)?;
        io::write_columns(&mut w, &header, rec.t0, rec.gate, &rec.df_hz, &rec.valid)?;
        w.flush()?;
        files.push(path);
    }
    write_manifest(out, &hash, Some(seed), "simulate", &files)?;
    println!("simulated {n} samples (seed {seed}) into {}", out.display());
    Ok(0)
}

fn parse_channel(spec: &str) -> anyhow::Result<(String, f64)> {
    match spec.split_once('=') {
        Some((name, nominal)) => Ok((
            name.to_string(),
            nominal.parse().with_context(|| format!("bad nominal frequency `{nominal}`"))?,
        )),
        None => Ok((spec.to_string(), 0.0)),
    }
}

fn load_series(path: &Path, channel: Option<&str>, nu0: Option<f64>) -> anyhow::Result<(FreqSeries, Vec<u8>)> {
    let bytes = fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    let s = match channel {
        Some(spec) => {
            let (name, nominal) = parse_channel(spec)?;
            let export = io::read_counter(bytes.as_slice())?;
            export.channel_series(&name, nominal, nu0.unwrap_or(crate::constants::DEFAULT_NU0))?
        }
        None => io::read_record(bytes.as_slice())?.into_series(nu0)?,
    };
    Ok((s, bytes))
}

fn analyze(
    files: &[PathBuf],
    taus: &str,
    channel: Option<&str>,
    nu0: Option<f64>,
    bin_width: f64,
    out: &Path,
) -> anyhow::Result<u8> {
    if files.is_empty() {
        bail!("no input files");
    }
    let spec: TauSpec = taus.parse()?;
    fs::create_dir_all(out)?;
    let mut written = Vec::new();
    let mut hashes = Vec::new();
    for path in files {
        let (s, bytes) = load_series(path, channel, nu0)?;
        let params = format!("taus={taus};channel={channel:?};nu0={nu0:?};bin_width={bin_width}");
        let hash = inputs_hash(&[&bytes, params.as_bytes()]);
        hashes.push(hash.clone());
        let taus = spec.resolve(s.len(), s.gate());
        let a = adev(&s, &taus)?;
        let m = mdev(&s, &taus)?;
        let name = stem(path);

        let stab = out.join(format!("{name}.stability.tsv"));
        let mut w = create(&stab)?;
        Header::new(&hash, &["tau_s", "adev", "mdev", "n_terms"])
            .note("source", path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default())
            .write(&mut w)?;
        write_table(&mut w, &a, &m)?;
        w.flush()?;
        written.push(stab);

        let stats = summary_stats(&s)?;
        let hist = histogram(&s, bin_width)?;
        let hpath = out.join(format!("{name}.histogram.tsv"));
        let mut w = create(&hpath)?;
        Header::new(&hash, &["bin_center_hz", "count"])
            .note("bin_width_hz", bin_width)
            .note("mean_y", format!("{:.6e}", stats.mean))
            .note("median_y", format!("{:.6e}", stats.median))
            .write(&mut w)?;
        for (c, k) in hist.centers().zip(&hist.counts) {
            writeln!(w, "{c:.9e}\t{k}")?;
        }
        w.flush()?;
        written.push(hpath);

        let hz = stats.scaled(s.nu0());
        println!(
            "{}: {} valid of {} samples, mean {:.3e} ({:.3e} Hz), median {:.3e} ({:.3e} Hz)",
            path.display(),
            stats.count,
            s.len(),
            stats.mean,
            hz.mean,
            stats.median,
            hz.median
        );
        if let Some(v) = a.at(s.gate()) {
            println!("  adev({} s) = {:.3e}", s.gate(), v);
        }
    }
    let manifest_hash = inputs_hash(&hashes.iter().map(|h| h.as_bytes()).collect::<Vec<_>>());
    write_manifest(out, &manifest_hash, None, "analyze", &written)?;
    Ok(0)
}

fn select(file: &Path, config: Option<&Path>, nu0: Option<f64>, out: &Path) -> anyhow::Result<u8> {
    let (s, bytes) = load_series(file, None, nu0)?;
    let (cfg, cfg_bytes): (SelectionConfig, Vec<u8>) = match config {
        Some(p) => {
            let (scn, _) = Scenario::load(p)?;
            (scn.select.unwrap_or_default().config(), fs::read(p)?)
        }
        None => (SelectionConfig::default(), Vec::new()),
    };
    let hash = inputs_hash(&[&bytes, &cfg_bytes]);
    let outcome = three_observable_select(&s, &cfg)?;
    fs::create_dir_all(out)?;
    let name = stem(file);

    let mask_path = out.join(format!("{name}.mask.tsv"));
    io::write_mask(&mask_path, &outcome.mask, &outcome.reasons, &hash)?;

    let obs_path = out.join(format!("{name}.observables.tsv"));
    let mut w = create(&obs_path)?;
    let header = Header::new(&hash, &["mjd", "rolling_mean", "rolling_std", "qf_std"])
        .note("mean_center", format!("{:.6e}", outcome.limits.mean_center))
        .note("mean_limit", format!("{:.6e}", outcome.limits.mean))
        .note("std_limit", format!("{:.6e}", outcome.limits.std))
        .note("qf_limit", format!("{:.6e}", outcome.limits.qf));
    header.write(&mut w)?;
    let obs = &outcome.observables;
    for i in 0..s.len() {
        let f = |x: &FreqSeries| {
            if x.valid()[i] {
                format!("{:.9e}", x.y()[i])
            } else {
                "NaN".to_string()
            }
        };
        writeln!(
            w,
            "{:.12}\t{}\t{}\t{}",
            s.timestamp(i),
            f(&obs.rolling_mean),
            f(&obs.rolling_std),
            f(&obs.qf_std)
        )?;
    }
    w.flush()?;

    let sel_path = out.join(format!("{name}.selected.tsv"));
    io::write_series(&sel_path, &outcome.apply(&s)?, &hash, "y")?;
    write_manifest(out, &hash, None, "select", &[mask_path, obs_path, sel_path])?;
    println!(
        "kept {} of {} samples ({:.3}%)",
        outcome.mask.kept(),
        s.len(),
        100.0 * outcome.mask.uptime()
    );
    Ok(0)
}

fn uptime_cmd(masks: &[String], config: Option<&Path>, seed: Option<u64>, out: &Path) -> anyhow::Result<u8> {
    let mut labelled: Vec<(String, ValidityMask)> = Vec::new();
    let mut parts: Vec<Vec<u8>> = Vec::new();
    let mut used_seed = None;
    if let Some(p) = config {
        let (scn, hash) = Scenario::load(p)?;
        let fixture = scn.uptime.context("config has no [uptime] table")?;
        let seed = seed.unwrap_or(scn.run.seed);
        used_seed = Some(seed);
        let n = scn.run.samples()?;
        for e in &fixture.elements {
            let m = renewal_mask(
                e.uptime,
                fixture.mean_outage_s,
                n,
                scn.run.gate,
                scn.run.t0_mjd,
                derive_seed(seed, &e.label),
            )?;
            labelled.push((e.label.clone(), m));
        }
        parts.push(hash.into_bytes());
        parts.push(seed.to_le_bytes().to_vec());
    }
    for spec in masks {
        let (label, path) = match spec.split_once('=') {
            Some((l, p)) => (l.to_string(), PathBuf::from(p)),
            None => (stem(Path::new(spec)), PathBuf::from(spec)),
        };
        parts.push(fs::read(&path).with_context(|| format!("cannot read {}", path.display()))?);
        labelled.push((label, io::read_mask(&path)?));
    }
    if labelled.is_empty() {
        bail!("give mask files or --config with an [uptime] table");
    }
    let report = uptime(&labelled)?;
    let hash = inputs_hash(&parts.iter().map(|p| p.as_slice()).collect::<Vec<_>>());
    fs::create_dir_all(out)?;
    let path = out.join("uptime.tsv");
    let mut w = create(&path)?;
    Header::new(&hash, &["element", "uptime"])
        .note("samples", report.samples)
        .write(&mut w)?;
    for (label, u) in &report.per_element {
        writeln!(w, "{label}\t{u:.6}")?;
        println!("{label:<20} {:>8.3}%", 100.0 * u);
    }
    writeln!(w, "combined\t{:.6}", report.combined)?;
    w.flush()?;
    println!("{:<20} {:>8.3}%", "combined", 100.0 * report.combined);
    write_manifest(out, &hash, used_seed, "uptime", &[path])?;
    Ok(0)
}

fn budget(file: &Path, policy: &str, out: &Path) -> anyhow::Result<u8> {
    let bytes = fs::read(file).with_context(|| format!("cannot read {}", file.display()))?;
    let policy: Policy = policy.parse()?;
    let b = UncertaintyBudget {
        entries: io::read_budget(bytes.as_slice())?,
        policy,
    };
    let total = combine_budget(&b)?;
    let hash = inputs_hash(&[&bytes, format!("{policy:?}").as_bytes()]);
    fs::create_dir_all(out)?;
    let path = out.join("budget.tsv");
    let mut w = create(&path)?;
    Header::new(&hash, &["label", "bias", "uncertainty"])
        .note("policy", format!("{policy:?}"))
        .write(&mut w)?;
    for e in &b.entries {
        writeln!(w, "{}\t{:.6e}\t{:.6e}", e.label, e.bias, e.uncertainty)?;
    }
    writeln!(w, "quadrature\t{:.6e}\t{:.6e}", total.bias, total.quadrature)?;
    writeln!(w, "total\t{:.6e}\t{:.6e}", total.bias, total.uncertainty)?;
    w.flush()?;
    write_manifest(out, &hash, None, "budget", &[path])?;
    println!(
        "bias {:.3e}, uncertainty {:.3e} (quadrature {:.4e})",
        total.bias, total.uncertainty, total.quadrature
    );
    Ok(0)
}

fn plan(config: &Path, out: &Path) -> anyhow::Result<u8> {
    let (scn, hash) = Scenario::load(config)?;
    let plan = scn.plan.context("config has no [plan] table")?.plan()?;
    let report = check_plan(&plan);
    fs::create_dir_all(out)?;
    let path = out.join("plan.txt");
    let mut w = create(&path)?;
    Header::new(&hash, &["stage", "offset_MHz", "beat_MHz", "counted_MHz", "status"]).write(&mut w)?;
    write!(w, "{report}")?;
    w.flush()?;
    write_manifest(out, &hash, None, "plan", &[path])?;
    print!("{report}");
    if report.ok() {
        println!("{}", paint("plan ok", true));
        Ok(0)
    } else {
        println!("{}", paint(&format!("plan violations: {}", report.flagged().join(", ")), false));
        Ok(EXIT_VIOLATION)
    }
}
