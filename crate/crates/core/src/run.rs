//! Orchestration behind the CLI: runs one [`ExperimentSpec`] and writes its
//! artifacts.
//!
//! Every file is staged as `<name>.partial` and renamed once complete, and
//! every run ends with a `manifest.toml` whose `status` says whether all
//! outputs were written. Results never depend on the worker count.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::channel::ChannelConfig;
use crate::config::{Command, ExperimentSpec};
use crate::error::{Error, Result};
use crate::infotheory::{rate_sweep, RateGrid, RateTable};
use crate::moments::{classify_graphs, neff, wick_exact, Graph, MonomialSum};
use crate::stability::{bin_moment_spec, mc_normalized_variance, predicted_normalized_variance, fit_loglog, VarianceEstimate};

/// Outcome of a successful run.
#[derive(Debug, Clone)]
pub struct RunReport {
    /// Written artifacts, manifest last.
    pub files: Vec<PathBuf>,
    /// Human-readable result summary for stdout.
    pub summary: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    status: &'a str,
    command: &'a str,
    version: &'a str,
    seed: u64,
    fingerprint: String,
    workers: usize,
    wall_time_secs: f64,
    files: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    config: &'a ExperimentSpec,
}

struct Outputs {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Outputs {
    fn partial(&self, name: &str) -> PathBuf {
        self.dir.join(format!("{name}.partial"))
    }

    /// Renames a finished `<name>.partial` into place.
    fn commit(&mut self, name: &str) -> Result<()> {
        let dst = self.dir.join(name);
        fs::rename(self.partial(name), &dst)?;
        self.files.push(dst);
        Ok(())
    }

    fn write(&mut self, name: &str, body: &str) -> Result<()> {
        fs::write(self.partial(name), body)?;
        self.commit(name)
    }
}

/// Runs `spec`, writing artifacts under `spec.output`.
///
/// On failure the manifest is still written with `status = "incomplete"`
/// and any unfinished file keeps its `.partial` suffix.
pub fn run(spec: &ExperimentSpec) -> Result<RunReport> {
    spec.validate().map_err(Error::Config)?;
    fs::create_dir_all(&spec.output)?;
    let mut out = Outputs {
        dir: spec.output.clone(),
        files: Vec::new(),
    };
    let start = Instant::now();
    let result = dispatch(spec, &mut out);
    let (status, error) = match &result {
        Ok(_) => ("complete", None),
        Err(e) => ("incomplete", Some(e.to_string())),
    };
    let manifest = Manifest {
        status,
        command: spec.command.name(),
        version: env!("CARGO_PKG_VERSION"),
        seed: spec.channel.seed,
        fingerprint: spec.channel.fingerprint(),
        workers: spec.workers.unwrap_or_else(rayon::current_num_threads),
        wall_time_secs: start.elapsed().as_secs_f64(),
        files: out
            .files
            .iter()
            .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
            .collect(),
        error,
        config: spec,
    };
    let body = toml::to_string(&manifest).map_err(|e| Error::InvalidInput(format!("manifest: {e}")))?;
    out.write("manifest.toml", &body)?;
    let summary = result?;
    Ok(RunReport {
        files: out.files,
        summary,
    })
}

fn dispatch(spec: &ExperimentSpec, out: &mut Outputs) -> Result<String> {
    match spec.command {
        Command::Stability => stability(spec, out),
        Command::Sweep => sweep(spec, out),
        Command::Moments => moments(&spec.channel, out),
        Command::Graphs => graphs(&spec.channel, out),
        Command::Rate => rate(spec, out),
        Command::Neff => neff_report(&spec.channel, out),
    }
}

fn header(cfg: &ChannelConfig) -> String {
    format!("# config {}\n", cfg.fingerprint())
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:e}")).unwrap_or_default()
}

fn stability(spec: &ExperimentSpec, out: &mut Outputs) -> Result<String> {
    let cfg = &spec.channel;
    let est = mc_normalized_variance(cfg, spec.trials, spec.workers)?;
    let mut buf = Vec::new();
    writeln!(buf, "{}", VarianceEstimate::CSV_HEADER)?;
    est.write_csv_rows(&mut buf)?;
    fs::write(out.partial("stability.csv"), &buf)?;
    out.commit("stability.csv")?;

    let pred = predicted_normalized_variance(cfg);
    let c = cfg.central_symbol();
    let measured = match est.nvar_at(c) {
        Some((m, se)) => format!("{m:.6} ± {se:.6}"),
        None => "unresolved (mean indistinguishable from zero)".into(),
    };
    Ok(format!(
        "regime {}\nN_eff {}\npredicted normalized variance {:.6}\nmeasured at symbol {c} {measured}\n",
        pred.regime.name(),
        short(pred.n_eff),
        pred.predicted
    ))
}

fn sweep(spec: &ExperimentSpec, out: &mut Outputs) -> Result<String> {
    let points = spec.sweep_points().map_err(Error::Config)?;
    let names: Vec<&str> = spec.sweep.axes.iter().map(|a| a.parameter.as_str()).collect();
    let mut csv = fs::File::create(out.partial("sweep.csv"))?;
    let mut cols = vec!["config_id"];
    cols.extend(&names);
    cols.extend(["regime", "n_eff", "predicted", "measured", "measured_se", "trials", "reliable"]);
    writeln!(csv, "{}", cols.join(","))?;

    let mut pairs = Vec::new();
    for (vals, cfg) in &points {
        let est = mc_normalized_variance(cfg, spec.trials, spec.workers)?;
        let pred = predicted_normalized_variance(cfg);
        let m = est.nvar_at(cfg.central_symbol());
        if let Some((v, _)) = m {
            pairs.push((pred.predicted, v));
        }
        let mut row = vec![cfg.fingerprint()];
        row.extend(vals.iter().map(|v| v.to_string()));
        row.extend([
            pred.regime.name().to_string(),
            format!("{:e}", pred.n_eff),
            format!("{:e}", pred.predicted),
            fmt_opt(m.map(|x| x.0)),
            fmt_opt(m.map(|x| x.1)),
            spec.trials.to_string(),
            m.is_some().to_string(),
        ]);
        writeln!(csv, "{}", row.join(","))?;
        csv.flush()?;
    }
    drop(csv);
    out.commit("sweep.csv")?;

    let mut reg = header(&spec.channel);
    match fit_loglog(&pairs) {
        Ok(fit) => {
            writeln!(reg, "points = {}", fit.points).ok();
            writeln!(reg, "slope = {:.6}", fit.slope).ok();
            writeln!(reg, "slope_ci95 = [{:.6}, {:.6}]", fit.slope_ci.0, fit.slope_ci.1).ok();
            writeln!(reg, "intercept = {:.6}", fit.intercept).ok();
            writeln!(reg, "r2 = {:.6}", fit.r2).ok();
        }
        Err(e) => {
            writeln!(reg, "# no fit: {e}").ok();
        }
    }
    out.write("regression.txt", &reg)?;
    Ok(reg)
}

fn graph_line(g: &Graph, n: usize, value: f64, leading: bool) -> String {
    format!(
        "{:0n$b}\t{}\t{}\t{:e}\t{}",
        g.mask, g.monomial, g.monomial.coefficient, value, leading
    )
}

fn moments(cfg: &ChannelConfig, out: &mut Outputs) -> Result<String> {
    let ms = bin_moment_spec(cfg);
    let w = wick_exact(&ms)?;
    let cls = classify_graphs(ms.n_stages())?;
    let n = ms.n_stages();
    let mut s = header(cfg);
    writeln!(s, "# second_moment = {:e}", w.value).ok();
    writeln!(s, "# mean_squared = {:e}", w.mean_sq).ok();
    writeln!(s, "# variance = {:e}", w.variance(&ms)).ok();
    writeln!(s, "# bit k set: stage k+1 paired as a ladder").ok();
    writeln!(s, "mask\tmonomial\tcoefficient\tvalue\tleading").ok();
    for g in &w.graphs {
        let value = MonomialSum {
            terms: vec![g.monomial.clone()],
        }
        .evaluate(&ms);
        let leading = cls.leading.iter().any(|l| l.mask == g.mask);
        writeln!(s, "{}", graph_line(g, n, value, leading)).ok();
    }
    writeln!(s, "# collected: {}", w.expansion.collected()).ok();
    out.write("moments.txt", &s)?;
    Ok(format!(
        "E|X|^2 = {:e}\n|EX|^2 = {:e}\nvariance = {:e}\ngraphs = {}\n",
        w.value,
        w.mean_sq,
        w.variance(&ms),
        w.graphs.len()
    ))
}

fn graphs(cfg: &ChannelConfig, out: &mut Outputs) -> Result<String> {
    let n = cfg.n_stages();
    let cls = classify_graphs(n)?;
    let mut summary = format!(
        "{} leading graphs of {} (n = {n}, leading fluctuation degree {})\n",
        cls.leading_count(),
        1usize << n,
        cls.leading_degree
    );
    for g in &cls.leading {
        writeln!(summary, "{:0n$b}\t{}", g.mask, g.monomial).ok();
    }
    let mut s = header(cfg);
    writeln!(s, "# n = {n}, leading degree {}", cls.leading_degree).ok();
    writeln!(s, "mask\tmonomial\tladders\tdegree\tleading").ok();
    let mut all: Vec<(&Graph, bool)> = cls
        .leading
        .iter()
        .map(|g| (g, true))
        .chain(cls.subleading.iter().map(|g| (g, false)))
        .collect();
    all.sort_by_key(|(g, _)| g.mask);
    for (g, lead) in all {
        writeln!(
            s,
            "{:0n$b}\t{}\t{}\t{}\t{lead}",
            g.mask,
            g.monomial,
            g.ladder_count(),
            g.monomial.degree()
        )
        .ok();
    }
    out.write("graphs.txt", &s)?;
    Ok(summary)
}

fn rate(spec: &ExperimentSpec, out: &mut Outputs) -> Result<String> {
    let r = spec.rate.clone().unwrap_or_default();
    let powers = if r.powers.is_empty() {
        vec![spec.channel.tx_power]
    } else {
        r.powers
    };
    let table: RateTable = rate_sweep(&spec.channel, &RateGrid::log_spaced(r.mc_lo, r.mc_hi, r.points, powers))?;
    let mut buf = Vec::new();
    table.write_csv(&spec.channel.fingerprint(), &mut buf)?;
    fs::write(out.partial("rate.csv"), &buf)?;
    out.commit("rate.csv")?;
    let b = table.best();
    Ok(format!(
        "regime {}\noptimum MC = {:e}, P = {:e}: R = {:.6} nats per unit time, sinr {:.6}, predicted normalized variance {:.6}\n",
        table.regime.name(),
        b.mc(),
        b.power,
        b.rate,
        b.sinr,
        b.predicted_nvar
    ))
}

/// Drops floating-point noise below twelve significant digits.
fn short(x: f64) -> f64 {
    format!("{x:.11e}").parse().unwrap_or(x)
}

fn neff_report(cfg: &ChannelConfig, out: &mut Outputs) -> Result<String> {
    let ks: Vec<f64> = cfg.pinholes.iter().map(|&k| k as f64).collect();
    let (ne, kp) = neff(cfg.n_tx as f64, &ks);
    let (ne, kp) = (short(ne), kp.map(short));
    let mut s = format!("{ne}\n");
    if let Some(k) = kp {
        writeln!(s, "{k}").ok();
    }
    let mut body = header(cfg);
    writeln!(body, "n_eff = {ne}").ok();
    if let Some(k) = kp {
        writeln!(body, "pinhole_eff = {k}").ok();
    }
    out.write("neff.txt", &body)?;
    Ok(s)
}

/// Reads and parses an experiment file.
pub fn load(path: &Path) -> Result<ExperimentSpec> {
    crate::config::parse_config(&fs::read_to_string(path)?)
}

