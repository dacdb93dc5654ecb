//! Command implementations behind the `compdlm` binary.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde_json::json;

use crate::causal::{lift_transform, lookahead_effect, run_causal, DEFAULT_PROBS};
use crate::config::RunConfig;
use crate::datagen::{aggregate_groups, simulate, svd_stratify};
use crate::error::{Error, Result};
use crate::io::{fmt_f64, load_dataset, load_panel, matrix_json, sha256_hex, write_dataset, write_json, write_rows, QuantileTable};
use crate::mvdlm::{filter_run, filter_run_from_prior};
use crate::rng::RngStream;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub samples: Option<usize>,
}

pub fn load_config(path: Option<&Path>, overrides: &Overrides) -> Result<RunConfig> {
    let mut cfg = match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = overrides.seed {
        cfg.causal.seed = seed;
        cfg.simulate.seed = seed;
    }
    if let Some(n) = overrides.samples {
        cfg.causal.nsamples = n;
    }
    Ok(cfg)
}

fn config_json(cfg: &RunConfig) -> serde_json::Value {
    serde_json::to_value(cfg).expect("config serializes")
}

/// Writes `observed.csv`, `counterfactual.csv` and `truth.json`.
pub fn cmd_simulate(cfg: &RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let sim_cfg = cfg.sim_config()?;
    let sim = simulate(&sim_cfg)?;
    let (controls, experimental) = cfg.sim_names();
    let mut names = controls;
    names.extend(experimental.iter().cloned());
    let times: Vec<i64> = (1..=sim_cfg.t_total as i64).collect();

    let observed = out.join("observed.csv");
    let counterfactual = out.join("counterfactual.csv");
    let truth = out.join("truth.json");
    write_dataset(&observed, &times, &names, &sim.observed)?;
    write_dataset(&counterfactual, &times, &experimental, &sim.counterfactual)?;
    write_json(
        &truth,
        &json!({
            "version": VERSION,
            "seed": sim_cfg.seed,
            "intervention": sim_cfg.intervention,
            "series": names,
            "sigma": matrix_json(&sim.sigma),
            "r": matrix_json(sim_cfg.sigma_prior.scale()),
            "r_correlation": matrix_json(&sim.r_corr),
            "shock_scale": sim_cfg.shock.as_slice(),
            "shock_draw": matrix_json(&sim.shock_draw),
            "config": config_json(cfg),
        }),
    )?;
    Ok(vec![observed, counterfactual, truth])
}

/// Writes quantile tables for both branches, the effects, percent lift when
/// `log_scale` is set, and `manifest.json`.
pub fn cmd_causal(cfg: &RunConfig, data_path: &Path, out: &Path) -> Result<Vec<PathBuf>> {
    let ds = load_dataset(data_path, cfg.causal.log_scale)?;
    let prep = cfg.prepare_causal(&ds)?;
    let spec = &prep.spec;
    let stream = RngStream::new(cfg.causal.seed);
    let run = run_causal(spec, &prep.data, &prep.init, &stream)?;
    let names = &prep.experimental;
    let time_of = |t: usize| prep.times[t - 1];

    let mut e0 = QuantileTable::new(&DEFAULT_PROBS);
    let mut e1 = QuantileTable::new(&DEFAULT_PROBS);
    let mut effect = QuantileTable::new(&DEFAULT_PROBS);
    let mut lift = QuantileTable::new(&DEFAULT_PROBS);
    let mut filtered = QuantileTable::new(&DEFAULT_PROBS);
    for step in &run.post {
        let time = time_of(step.t);
        e0.push_ensemble(time, names, &step.e0_forecast)?;
        e1.push_ensemble(time, names, &step.e1_forecast)?;
        effect.push_ensemble(time, names, &step.effect)?;
        if spec.log_scale {
            lift.push_ensemble(time, names, &lift_transform(&step.effect, spec)?)?;
        }
        if let Some(f) = &step.filtered_effect {
            filtered.push_ensemble(time, names, f)?;
        }
    }

    let mut written = Vec::new();
    let mut emit = |table: &QuantileTable, name: &str| -> Result<()> {
        let path = out.join(name);
        table.write(&path, "time")?;
        written.push(path);
        Ok(())
    };
    emit(&e0, "counterfactual_forecast.csv")?;
    emit(&e1, "oam_forecast.csv")?;
    emit(&effect, "effect.csv")?;
    if spec.log_scale {
        emit(&lift, "lift.csv")?;
    }
    if spec.filtered {
        emit(&filtered, "filtered_effect.csv")?;
    }
    if cfg.causal.lookahead > 0 {
        let origin = spec.intervention - 1;
        let k = cfg.causal.lookahead.min(prep.data.nrows() - origin);
        let realized = prep.data.view((origin, spec.qc()), (k, spec.qe())).into_owned();
        let la = lookahead_effect(
            run.pre_intervention(spec),
            origin,
            spec,
            k,
            Some(&realized),
            &stream.split(u64::MAX),
        )?;
        let mut t_e0 = QuantileTable::new(&DEFAULT_PROBS);
        let mut t_e1 = QuantileTable::new(&DEFAULT_PROBS);
        let mut t_eff = QuantileTable::new(&DEFAULT_PROBS);
        for h in 0..k {
            let time = time_of(origin + h + 1);
            t_e0.push_ensemble(time, names, &la.e0_forecast[h])?;
            t_e1.push_ensemble(time, names, &la.e1_forecast[h])?;
            t_eff.push_ensemble(time, names, &la.effect[h])?;
        }
        emit(&t_e0, "lookahead_counterfactual.csv")?;
        emit(&t_e1, "lookahead_oam.csv")?;
        emit(&t_eff, "lookahead_effect.csv")?;
    }

    let manifest = out.join("manifest.json");
    let outputs: Vec<String> =
        written.iter().filter_map(|p| p.file_name()).map(|n| n.to_string_lossy().into_owned()).collect();
    write_json(
        &manifest,
        &json!({
            "command": "causal",
            "version": VERSION,
            "seed": cfg.causal.seed,
            "nsamples": spec.nsamples,
            "intervention_row": spec.intervention,
            "data": {
                "file": data_path.file_name().map(|n| n.to_string_lossy().into_owned()),
                "sha256": sha256_hex(data_path)?,
                "rows": prep.data.nrows(),
            },
            "config": config_json(cfg),
            "outputs": outputs,
        }),
    )?;
    written.push(manifest);
    Ok(written)
}

/// Writes `unit,label,loading` rows for factor `factor` of a `unit x time`
/// panel, plus group means when `means` is given.
pub fn cmd_stratify(panel_path: &Path, factor: usize, out: &Path, means: Option<&Path>) -> Result<Vec<PathBuf>> {
    let panel = load_panel(panel_path)?;
    let strat = svd_stratify(&panel.values, factor)?;
    let rows: Vec<Vec<String>> = panel
        .units
        .iter()
        .zip(&strat.labels)
        .zip(strat.loadings.iter())
        .map(|((u, l), &v)| vec![u.clone(), l.to_string(), fmt_f64(v)])
        .collect();
    write_rows(out, &["unit", "label", "loading"], &rows)?;
    let mut written = vec![out.to_path_buf()];
    if let Some(path) = means {
        let groups: Vec<usize> = strat.labels.iter().map(|l| *l as usize).collect();
        let agg = aggregate_groups(&panel.values, &groups, 2)?;
        let mut rows = Vec::with_capacity(panel.times.len());
        for (j, t) in panel.times.iter().enumerate() {
            rows.push(vec![t.clone(), fmt_f64(agg[(0, j)]), fmt_f64(agg[(1, j)])]);
        }
        write_rows(path, &["time", "Lo", "Hi"], &rows)?;
        written.push(path.to_path_buf());
    }
    Ok(written)
}

/// Plain multivariate filter over every series in the file. Writes one-step
/// forecast diagnostics to `filter.csv`.
pub fn cmd_filter(cfg: &RunConfig, data_path: &Path, out: &Path) -> Result<Vec<PathBuf>> {
    let ds = load_dataset(data_path, cfg.causal.log_scale)?;
    let spec = cfg.model_spec(ds.names.len())?;
    let init = cfg.initial_niw(&ds.values, spec.p())?;
    let skip = cfg.init.warmup;
    if skip >= ds.len() {
        return Err(Error::Config(format!("warm-up window {skip} leaves no rows to filter")));
    }
    let data = ds.values.rows(skip, ds.len() - skip).into_owned();
    let steps = if cfg.init.as_prior {
        filter_run_from_prior(&spec, &init, &data)?
    } else {
        filter_run(&spec, &init, &data)?
    };
    let mut rows = Vec::with_capacity(steps.len() * ds.names.len());
    for (k, step) in steps.iter().enumerate() {
        let i = k + skip;
        let scale = step.forecast.scale();
        let cov = step.forecast.covariance();
        for (j, name) in ds.names.iter().enumerate() {
            let sd = cov.as_ref().map_or(f64::NAN, |c: &DMatrix<f64>| c[(j, j)].sqrt());
            rows.push(vec![
                ds.times[i].to_string(),
                name.clone(),
                fmt_f64(ds.values[(i, j)]),
                fmt_f64(step.forecast.f[j]),
                fmt_f64(scale[(j, j)].sqrt()),
                fmt_f64(sd),
                fmt_f64(step.forecast.dof),
                fmt_f64((ds.values[(i, j)] - step.forecast.f[j]) / scale[(j, j)].sqrt()),
            ]);
        }
    }
    let path = out.join("filter.csv");
    write_rows(&path, &["time", "series", "observed", "forecast", "scale", "sd", "dof", "std_error"], &rows)?;
    Ok(vec![path])
}
