//! The workflows behind each subcommand.
//!
//! Output layout under `<output_dir>/<run_id>/`:
//!
//! ```text
//! manifest.json  data.csv  truth.csv (simulated data only)
//! kappa=<v>/                 draws.csv diagnostics.csv acceptance.json curves.csv ppc.*
//! lambda=<label>/kappa=0/    the same, for an alternative prior on λ
//! itt/                       draws.csv curves.csv km_control.csv km_treated.csv
//! ```
//!
//! Parallel work is collected in index order, so outputs do not depend on
//! the number of threads.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use switchstrat_core::diagnostics::{posterior_table, ParamSummary};
use switchstrat_core::estimands::{self as est, McNodes, Region};
use switchstrat_core::km::km_fit;
use switchstrat_core::ppc::{self, PppvReport};
use switchstrat_core::sampler::{self, itt, ChainDraws, Draws};
use switchstrat_core::trial::{generate, LatentTruth};
use switchstrat_core::{Arm, Dataset, Param, PriorSpec, Theta};

use crate::config::{kappa_label, RunConfig, Seeds};
use crate::error::{AppError, Result};
use crate::io::{self, CurveRow};

/// Which posterior a command works on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Target<'a> {
    pub kappa: f64,
    /// Label of an alternative λ prior, or `None` for the main prior.
    pub lambda: Option<&'a str>,
}

impl<'a> Target<'a> {
    pub fn main(kappa: f64) -> Self {
        Target { kappa, lambda: None }
    }

    pub fn dir(&self, cfg: &RunConfig) -> PathBuf {
        let base = cfg.run_dir();
        match self.lambda {
            Some(label) => base.join(format!("lambda={label}")).join(kappa_label(self.kappa)),
            None => base.join(kappa_label(self.kappa)),
        }
    }

    pub fn prior(&self, cfg: &RunConfig) -> Result<PriorSpec> {
        match self.lambda {
            None => Ok(cfg.prior),
            Some(label) => cfg
                .lambda_variants
                .iter()
                .find(|v| v.label == label)
                .map(|v| PriorSpec { lambda: v.prior, ..cfg.prior })
                .ok_or_else(|| AppError::Config(format!("no lambda variant labelled `{label}`"))),
        }
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    run_id: &'a str,
    command: &'a str,
    config_sha256: String,
    seeds: Seeds,
    versions: Versions,
}

#[derive(Serialize)]
struct Versions {
    switchstrat: &'static str,
    switchstrat_core: &'static str,
}

/// Writes `manifest.json`; it holds no timestamps so reruns are identical.
pub fn write_manifest(cfg: &RunConfig, command: &str) -> Result<()> {
    let m = Manifest {
        run_id: &cfg.run_id,
        command,
        config_sha256: cfg.hash(),
        seeds: cfg.seeds(),
        versions: Versions { switchstrat: env!("CARGO_PKG_VERSION"), switchstrat_core: switchstrat_core::VERSION },
    };
    io::write_file(&cfg.run_dir().join("manifest.json"), |w| io::write_json(w, &m))
}

/// The analysis data: read from `cfg.data`, or simulated with the latent truth.
pub fn load_data(cfg: &RunConfig) -> Result<(Dataset, Option<Vec<LatentTruth>>)> {
    match &cfg.data {
        Some(path) => Ok((io::read_dataset(path, cfg.c_max)?, None)),
        None => {
            let (data, truth) = generate(&cfg.generator_config())?;
            Ok((data, Some(truth)))
        }
    }
}

fn save_data(cfg: &RunConfig, data: &Dataset, truth: Option<&[LatentTruth]>) -> Result<Vec<PathBuf>> {
    let dir = cfg.run_dir();
    let mut written = vec![dir.join("data.csv")];
    io::write_file(&written[0], |w| io::write_dataset(w, data))?;
    if let Some(truth) = truth {
        written.push(dir.join("truth.csv"));
        io::write_file(&written[1], |w| io::write_truth(w, truth))?;
    }
    Ok(written)
}

/// `generate`: simulates a trial and writes it with its latent truth.
pub fn cmd_generate(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let (data, truth) = generate(&cfg.generator_config())?;
    let written = save_data(cfg, &data, Some(&truth))?;
    write_manifest(cfg, "generate")?;
    Ok(written)
}

/// Runs `config.n_chains` chains in parallel, in chain order.
pub fn fit_chains(data: &Dataset, prior: &PriorSpec, mcmc: &sampler::McmcConfig, kappa: f64) -> Result<Draws> {
    mcmc.validate()?;
    let chains = (0..mcmc.n_chains)
        .into_par_iter()
        .map(|k| sampler::run_chain(data, prior, mcmc, kappa, k))
        .collect::<switchstrat_core::Result<Vec<ChainDraws>>>()?;
    Ok(Draws { kappa, chains })
}

/// What `fit` produced.
pub struct FitOutcome {
    pub dir: PathBuf,
    pub draws: Draws,
    pub table: Vec<(Param, ParamSummary)>,
}

/// `fit`: fits one posterior and writes draws, the summary table and
/// acceptance rates. The ITT model is fitted too when enabled and `target`
/// uses the main prior.
pub fn cmd_fit(cfg: &RunConfig, target: Target, strict: bool) -> Result<FitOutcome> {
    cfg.validate()?;
    check_kappa(target.kappa)?;
    let prior = target.prior(cfg)?;
    let (data, truth) = load_data(cfg)?;
    save_data(cfg, &data, truth.as_deref())?;
    let dir = target.dir(cfg);
    let draws = fit_chains(&data, &prior, &cfg.mcmc_config(), target.kappa)?;
    io::write_file(&dir.join("draws.csv"), |w| io::write_draws(w, &draws))?;
    write_acceptance(&dir, &draws)?;
    let table = write_diagnostics(&dir, &draws)?;
    if cfg.itt.enabled && target.lambda.is_none() {
        fit_itt(cfg, &data)?;
    }
    write_manifest(cfg, "fit")?;
    check_rhat(cfg, &table, strict)?;
    Ok(FitOutcome { dir, draws, table })
}

fn check_kappa(kappa: f64) -> Result<()> {
    if (0.0..=1.0).contains(&kappa) {
        Ok(())
    } else {
        Err(AppError::Config(format!("kappa must be in [0, 1], got {kappa}")))
    }
}

fn check_rhat(cfg: &RunConfig, table: &[(Param, ParamSummary)], strict: bool) -> Result<()> {
    let bad: Vec<String> = table
        .iter()
        .filter_map(|(p, s)| s.rhat.filter(|&r| !(r < cfg.rhat_threshold)).map(|r| format!("{}={r:.3}", p.name())))
        .collect();
    if strict && !bad.is_empty() {
        return Err(AppError::Runtime(format!(
            "R-hat above {} for {}",
            cfg.rhat_threshold,
            bad.join(", ")
        )));
    }
    Ok(())
}

fn write_diagnostics(dir: &Path, draws: &Draws) -> Result<Vec<(Param, ParamSummary)>> {
    let table = posterior_table(draws)?;
    io::write_file(&dir.join("diagnostics.csv"), |w| io::write_param_table(w, &table))?;
    Ok(table)
}

#[derive(Serialize)]
struct ChainAcceptance {
    chain: usize,
    blocks: std::collections::BTreeMap<&'static str, BlockAcceptance>,
    switching_status: Option<f64>,
    treated_y0: Option<f64>,
}

#[derive(Serialize)]
struct BlockAcceptance {
    rate: Option<f64>,
    scale: f64,
}

fn ratio(accepted: u64, tried: u64) -> Option<f64> {
    (tried > 0).then(|| accepted as f64 / tried as f64)
}

fn write_acceptance(dir: &Path, draws: &Draws) -> Result<()> {
    let rows: Vec<ChainAcceptance> = draws
        .chains
        .iter()
        .map(|c| ChainAcceptance {
            chain: c.chain,
            blocks: Param::MH_BLOCKS
                .iter()
                .zip(c.scales)
                .map(|(&p, scale)| (p.name(), BlockAcceptance { rate: c.acceptance.rate(p), scale }))
                .collect(),
            switching_status: ratio(c.acceptance.status_accepted, c.acceptance.status_tried),
            treated_y0: ratio(c.acceptance.y0_accepted, c.acceptance.y0_tried),
        })
        .collect();
    io::write_file(&dir.join("acceptance.json"), |w| io::write_json(w, &rows))
}

fn fit_itt(cfg: &RunConfig, data: &Dataset) -> Result<()> {
    let dir = cfg.run_dir().join("itt");
    let mcmc = cfg.mcmc_config();
    let chains = (0..mcmc.n_chains)
        .into_par_iter()
        .map(|k| itt::run_chain(data, &cfg.itt.prior, &mcmc, k))
        .collect::<switchstrat_core::Result<Vec<_>>>()?;
    io::write_file(&dir.join("draws.csv"), |w| {
        writeln!(w, "chain,draw,alpha_0,beta_0,alpha_1,beta_1")?;
        for (k, chain) in chains.iter().enumerate() {
            for (j, d) in chain.iter().enumerate() {
                let (c, t) = (d.control, d.treated);
                writeln!(w, "{k},{j},{},{},{},{}", c.shape, c.log_rate, t.shape, t.log_rate)?;
            }
        }
        Ok(())
    })?;
    let all: Vec<&itt::IttDraw> = chains.iter().flatten().collect();
    let picked = subsample(all.len(), cfg.estimands.max_draws);
    let pick = |f: &dyn Fn(&itt::IttDraw) -> f64| -> Vec<Option<f64>> { picked.iter().map(|&i| Some(f(all[i]))).collect() };
    let mut rows = vec![summary_row("itt_ace", None, None, None, &pick(&|d| est::itt_ace(&d.control, &d.treated)))];
    for &y in &cfg.estimands.y_grid {
        rows.push(summary_row("itt_dce", None, Some(y), None, &pick(&|d| est::itt_dce(y, &d.control, &d.treated))));
    }
    io::write_file(&dir.join("curves.csv"), |w| io::write_curves(w, &rows))?;
    for (arm, name) in [(Arm::Control, "km_control.csv"), (Arm::Treated, "km_treated.csv")] {
        let (times, events): (Vec<f64>, Vec<bool>) =
            data.records().iter().filter(|r| r.arm == arm).map(|r| (r.y_tilde, r.y_event)).unzip();
        if !times.is_empty() {
            let curve = km_fit(&times, &events)?;
            io::write_file(&dir.join(name), |w| io::write_km(w, &curve))?;
        }
    }
    Ok(())
}

/// `diagnose`: recomputes the summary table from a saved draws file.
pub fn cmd_diagnose(cfg: &RunConfig, target: Target, strict: bool) -> Result<Vec<(Param, ParamSummary)>> {
    cfg.validate()?;
    check_kappa(target.kappa)?;
    let dir = target.dir(cfg);
    let draws = io::read_draws(&dir.join("draws.csv"), target.kappa)?;
    let table = write_diagnostics(&dir, &draws)?;
    check_rhat(cfg, &table, strict)?;
    Ok(table)
}

/// `count` indices spread evenly over `0..n` (all of them when `n ≤ count`).
pub fn subsample(n: usize, count: usize) -> Vec<usize> {
    if n <= count {
        (0..n).collect()
    } else {
        (0..count).map(|i| i * n / count).collect()
    }
}

fn summary_row(name: &str, s: Option<f64>, y: Option<f64>, kappa: Option<f64>, values: &[Option<f64>]) -> CurveRow {
    let defined: Vec<f64> = values.iter().flatten().copied().collect();
    let sum = est::summarize(&defined).ok();
    CurveRow {
        estimand: name.to_string(),
        s,
        y,
        kappa,
        q025: sum.map(|x| x.q025),
        median: sum.map(|x| x.median),
        q975: sum.map(|x| x.q975),
    }
}

fn region_parts(r: Region) -> (&'static str, Option<f64>) {
    match r {
        Region::All => ("all", None),
        Region::UpTo(s) => ("up_to", Some(s)),
        Region::Beyond(s) => ("beyond", Some(s)),
    }
}

/// The rows of a curves file, in output order: (estimand, s, y).
pub fn curve_layout(cfg: &RunConfig) -> Vec<(String, Option<f64>, Option<f64>)> {
    let e = &cfg.estimands;
    let mut rows = vec![("ace_ns".to_string(), None, None)];
    rows.extend(e.y_grid.iter().map(|&y| ("dce_ns".to_string(), None, Some(y))));
    rows.extend(e.s_values.iter().map(|&s| ("ace_sw".to_string(), Some(s), None)));
    for name in ["dce_sw", "cdce_sw"] {
        for &s in &e.s_values {
            rows.extend(e.y_grid.iter().map(|&y| (name.to_string(), Some(s), Some(y))));
        }
    }
    for &r in &e.regions {
        let (tag, bound) = region_parts(r);
        rows.push((format!("coarse_ace_{tag}"), bound, None));
        for name in ["coarse_dce", "coarse_cdce"] {
            rows.extend(e.y_grid.iter().map(|&y| (format!("{name}_{tag}"), bound, Some(y))));
        }
    }
    rows
}

/// Every estimand of [`curve_layout`] at one parameter draw. `None` marks an
/// undefined value (an empty conditioning event or a zero-mass region).
pub fn estimands_at(cfg: &RunConfig, theta: &Theta, nodes: &McNodes) -> Vec<Option<f64>> {
    let e = &cfg.estimands;
    let mut out = vec![Some(est::ace_ns(theta))];
    out.extend(e.y_grid.iter().map(|&y| Some(est::dce_ns(y, theta, nodes))));
    out.extend(e.s_values.iter().map(|&s| Some(est::ace_sw(s, theta))));
    for &s in &e.s_values {
        out.extend(e.y_grid.iter().map(|&y| Some(est::dce_sw(y, s, theta, nodes))));
    }
    for &s in &e.s_values {
        out.extend(e.y_grid.iter().map(|&y| est::cdce_sw(y, s, theta, nodes)));
    }
    for &r in &e.regions {
        out.push(est::coarse_ace(r, theta, nodes).ok());
        out.extend(e.y_grid.iter().map(|&y| est::coarse_dce(r, y, theta, nodes).ok()));
        out.extend(e.y_grid.iter().map(|&y| est::coarse_cdce(r, y, theta, nodes).ok().flatten()));
    }
    out
}

/// Pointwise posterior summaries of every estimand over (a subsample of) `draws`.
pub fn curves(cfg: &RunConfig, draws: &Draws) -> Result<Vec<CurveRow>> {
    let thetas: Vec<&Theta> = draws.thetas().collect();
    if thetas.is_empty() {
        return Err(AppError::Model(switchstrat_core::Error::EmptyInput("no posterior draws")));
    }
    let nodes = McNodes::new(cfg.estimands.mc_size, cfg.seeds().nodes);
    let per_draw: Vec<Vec<Option<f64>>> = subsample(thetas.len(), cfg.estimands.max_draws)
        .into_par_iter()
        .map(|i| estimands_at(cfg, thetas[i], &nodes))
        .collect();
    let layout = curve_layout(cfg);
    Ok(layout
        .into_iter()
        .enumerate()
        .map(|(k, (name, s, y))| {
            let column: Vec<Option<f64>> = per_draw.iter().map(|v| v[k]).collect();
            summary_row(&name, s, y, Some(draws.kappa), &column)
        })
        .collect())
}

/// `estimands`: writes `curves.csv` next to a saved draws file.
pub fn cmd_estimands(cfg: &RunConfig, target: Target) -> Result<Vec<CurveRow>> {
    cfg.validate()?;
    check_kappa(target.kappa)?;
    let dir = target.dir(cfg);
    let draws = io::read_draws(&dir.join("draws.csv"), target.kappa)?;
    let rows = curves(cfg, &draws)?;
    io::write_file(&dir.join("curves.csv"), |w| io::write_curves(w, &rows))?;
    write_manifest(cfg, "estimands")?;
    Ok(rows)
}

/// Posterior predictive p-values, one replicate per draw, draws in parallel.
pub fn ppc_report(data: &Dataset, thetas: &[Theta], t_grid: &[f64], seed: u64) -> Result<PppvReport> {
    let pairs = thetas
        .par_iter()
        .enumerate()
        .map(|(j, theta)| ppc::ppc_draw(data, theta, t_grid, &mut switchstrat_core::stream_rng(seed, j as u64)))
        .collect::<switchstrat_core::Result<Vec<_>>>()?;
    Ok(ppc::aggregate(&pairs, t_grid)?)
}

/// `ppc`: posterior predictive checks for a κ = 0 fit.
pub fn cmd_ppc(cfg: &RunConfig, target: Target) -> Result<PppvReport> {
    cfg.validate()?;
    if target.kappa != 0.0 {
        return Err(AppError::Config(format!(
            "posterior predictive checks are defined for kappa = 0 fits only, got kappa = {}",
            target.kappa
        )));
    }
    let dir = target.dir(cfg);
    let draws = io::read_draws(&dir.join("draws.csv"), target.kappa)?;
    let (data, _) = load_data(cfg)?;
    let thetas: Vec<Theta> = draws.thetas().copied().collect();
    let report = ppc_report(&data, &thetas, &cfg.ppc.t_grid, cfg.seeds().ppc)?;
    io::write_file(&dir.join("ppc.json"), |w| io::write_json(w, &report))?;
    io::write_file(&dir.join("ppc.csv"), |w| io::write_pppv_rows(w, &report))?;
    io::write_file(&dir.join("ppc_km.csv"), |w| io::write_pppv_km(w, &report))?;
    write_manifest(cfg, "ppc")?;
    Ok(report)
}

/// `sensitivity`: fit and estimands over the κ grid, then over each
/// alternative λ prior at κ = 0. Returns the directories written.
pub fn cmd_sensitivity(cfg: &RunConfig, strict: bool) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let mut targets: Vec<Target> = cfg.kappa_grid.iter().map(|&k| Target::main(k)).collect();
    targets.extend(cfg.lambda_variants.iter().map(|v| Target { kappa: 0.0, lambda: Some(&v.label) }));
    let mut dirs = Vec::new();
    for t in targets {
        let fit = cmd_fit(cfg, t, strict)?;
        let rows = curves(cfg, &fit.draws)?;
        io::write_file(&fit.dir.join("curves.csv"), |w| io::write_curves(w, &rows))?;
        dirs.push(fit.dir);
    }
    write_manifest(cfg, "sensitivity")?;
    Ok(dirs)
}
