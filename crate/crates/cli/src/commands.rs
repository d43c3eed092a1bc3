use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nowcast_core::mcmc::{convergence_subset, effective_sample_size, psrf, PosteriorSamples};
use nowcast_core::model::ModelContext;
use nowcast_core::predictive::{
    self, interval_coverage, ppc_covariance, ppc_mean_var_sorted, replicate_insample, total_variance_identity,
    write_json_index, PpcReport, PredictionSummary, Quantity,
};
use nowcast_core::simulator::{simulate_dataset, ScenarioConfig};
use nowcast_core::triangle::{
    collapse_remainder, cumulative_proportion_quantiles, parse_long_reader_by_series, select_delay_horizon,
    CensoringSpec, CsvSchema, ReportingTriangle,
};
use serde_json::json;

use crate::args::{CheckArgs, DiagnoseArgs, FitArgs, ForecastArgs, NowcastArgs, QuantityArg, RunArgs, SelectDelayArgs, SimulateArgs};
use crate::config::{default_out, resolve_data, resolve_fit, validate_levels, DataConfig, Document, RunConfig};
use crate::error::{invalid, CliError, CliResult};

pub const CONFIG_FILE: &str = "config.toml";
pub const TRIANGLE_FILE: &str = "triangle.csv";
pub const SAMPLES_DIR: &str = "samples";

/// Quantiles of the per-row reported proportions written by `select-delay`.
const PROPORTION_QUANTILES: [f64; 4] = [0.2, 0.4, 0.6, 0.8];

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| invalid(format!("{}: {e}", dir.display())))
}

fn writer(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| invalid(format!("{}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    let mut w = writer(path)?;
    w.write_all(text.as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| invalid(format!("{}: {e}", path.display())))
}

fn write_with(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> nowcast_core::Result<()>) -> CliResult<PathBuf> {
    let mut w = writer(path)?;
    f(&mut w)?;
    w.flush().map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    Ok(path.to_path_buf())
}

/// Raw triangle of the configured series, censored at the present day.
fn read_raw(data: &DataConfig, delay_horizon: usize) -> CliResult<ReportingTriangle> {
    let censoring = CensoringSpec::new(data.present_day, delay_horizon, data.maturity)?;
    let file = File::open(&data.path).map_err(|e| invalid(format!("{}: {e}", data.path.display())))?;
    let mut all = parse_long_reader_by_series(file, &CsvSchema::default(), &censoring).map_err(|e| match e {
        nowcast_core::Error::NoRecords { .. } => invalid(format!("{}: no records", data.path.display())),
        e => e.into(),
    })?;
    match &data.series {
        Some(id) => all.remove(id).ok_or_else(|| invalid(format!("series '{id}' not found in the data"))),
        None if all.len() == 1 => Ok(all.pop_first().expect("one series").1),
        None => Err(invalid(format!(
            "{} series in the data ({}); choose one with --series",
            all.len(),
            all.keys().cloned().collect::<Vec<_>>().join(", ")
        ))),
    }
}

/// A fitted run directory.
pub struct RunDir {
    pub config: RunConfig,
    pub triangle: ReportingTriangle,
    pub samples: PosteriorSamples,
}

impl RunDir {
    pub fn open(dir: &Path) -> CliResult<Self> {
        let cfg_path = dir.join(CONFIG_FILE);
        let text = fs::read_to_string(&cfg_path)
            .map_err(|e| invalid(format!("{}: {e} (not a fitted run directory?)", cfg_path.display())))?;
        let config = RunConfig::from_toml(&text)?;
        let tri_path = dir.join(TRIANGLE_FILE);
        let file = File::open(&tri_path).map_err(|e| invalid(format!("{}: {e}", tri_path.display())))?;
        let triangle = ReportingTriangle::read_wide_csv(file, config.data.present_day, config.data.maturity)?;
        let samples = PosteriorSamples::load(&dir.join(SAMPLES_DIR))?;
        Ok(Self { config, triangle, samples })
    }
}

fn output_dir(run: &RunArgs) -> CliResult<PathBuf> {
    let dir = run.out.clone().unwrap_or_else(|| run.run.clone());
    create_dir(&dir)?;
    Ok(dir)
}

pub fn simulate(args: &SimulateArgs) -> CliResult<()> {
    let mut sc = match &args.scenario {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| invalid(format!("{}: {e}", p.display())))?;
            ScenarioConfig::from_toml(&text)?
        }
        None => ScenarioConfig::default(),
    };
    if let Some(seed) = args.seed {
        sc.seed = seed;
    }
    sc.validate()?;
    let out = default_out(&args.out, "simulate");
    create_dir(&out)?;
    let (tri, truth) = simulate_dataset(&sc)?;

    let files = vec![
        write_with(&out.join("data.csv"), |w| tri.write_long_csv(w))?,
        write_with(&out.join(TRIANGLE_FILE), |w| tri.write_wide_csv(w))?,
        write_with(&out.join("truth.json"), |w| truth.write_json(w))?,
    ];
    let scenario = toml::to_string(&sc).map_err(|e| invalid(e.to_string()))?;
    write_text(&out.join("scenario.toml"), &scenario)?;
    // a fit configuration for this dataset, paths relative to itself
    let run = format!(
        "[data]\npath = \"data.csv\"\npresent_day = {}\nmaturity = {}\n\n[model]\nvariant = \"gdm\"\ndelay_horizon = {}\n",
        sc.present_day, sc.maturity, sc.delay_horizon
    );
    write_text(&out.join("run.toml"), &run)?;
    let mut all = files;
    all.push(out.join("scenario.toml"));
    all.push(out.join("run.toml"));
    let summary = json!({
        "n_times": sc.n_times,
        "delay_horizon": sc.delay_horizon,
        "present_day": sc.present_day,
        "maturity": sc.maturity,
        "seed": sc.seed,
        "complete_rows": tri.complete_rows().len(),
    });
    write_json_index(&out.join("simulate.json"), "simulate", &all, &summary)?;
    println!("simulated {} rows into {}", sc.n_times, out.display());
    Ok(())
}

pub fn fit(args: &FitArgs) -> CliResult<()> {
    let cfg = resolve_fit(args)?;
    let out = cfg.output.dir.clone();
    if out.join(SAMPLES_DIR).exists() && !args.force {
        return Err(invalid(format!("{} already holds a run; use --force to replace it", out.display())));
    }
    let raw = read_raw(&cfg.data, cfg.model.delay_horizon)?;
    let censoring = CensoringSpec::new(cfg.data.present_day, cfg.model.delay_horizon, cfg.data.maturity)?;
    let tri = collapse_remainder(&raw, &censoring)?;
    let ctx = ModelContext::new(&cfg.model, &tri)?;
    log::info!(
        "fitting {} to {} rows: {} chains x {} iterations",
        cfg.model.variant.name(),
        tri.n_rows(),
        cfg.sampler.n_chains,
        cfg.sampler.n_iterations
    );
    let samples = nowcast_core::mcmc::run_chains_in(&ctx, &cfg.sampler)?;

    create_dir(&out)?;
    samples.save(&out.join(SAMPLES_DIR))?;
    let mut files = vec![write_with(&out.join(TRIANGLE_FILE), |w| tri.write_wide_csv(w))?];
    write_text(&out.join(CONFIG_FILE), &cfg.to_toml()?)?;
    files.push(out.join(CONFIG_FILE));
    files.push(out.join(SAMPLES_DIR).join(nowcast_core::mcmc::META_FILE));

    let gate = convergence_subset(&samples, &ctx).and_then(|s| s.mpsrf());
    let acceptance: Vec<_> = samples.chains.iter().map(|c| &c.stats.acceptance).collect();
    let summary = json!({
        "variant": cfg.model.variant.name(),
        "n_chains": samples.n_chains(),
        "n_kept": samples.n_kept(),
        "mpsrf": gate.as_ref().ok(),
        "acceptance": acceptance,
    });
    write_json_index(&out.join("fit.json"), "fit", &files, &summary)?;
    match gate {
        Ok(m) => {
            println!("MPSRF {:.4} over {} parameters; run written to {}", m.value, m.dim, out.display());
            if args.strict && !m.converged() {
                return Err(CliError::NotConverged(m.value));
            }
        }
        Err(e) if args.strict => return Err(e.into()),
        Err(e) => log::warn!("MPSRF unavailable: {e}"),
    }
    Ok(())
}

fn write_prediction(out: &Path, name: &str, summary: &PredictionSummary) -> CliResult<()> {
    let files = vec![
        write_with(&out.join(format!("{name}.csv")), |w| summary.write_csv(w))?,
        write_with(&out.join(format!("{name}_draws.csv")), |w| summary.write_draws_csv(w))?,
    ];
    let index = json!({
        "times": summary.times,
        "levels": summary.levels,
        "n_draws": summary.draws.len(),
    });
    write_json_index(&out.join(format!("{name}.json")), name, &files, &index)?;
    println!("{} {} rows written to {}", summary.len(), name, out.display());
    Ok(())
}

pub fn nowcast(args: &NowcastArgs) -> CliResult<()> {
    let run = RunDir::open(&args.run.run)?;
    let levels = args.levels.clone().unwrap_or_else(|| run.config.output.levels.clone());
    validate_levels(&levels)?;
    let summary = predictive::nowcast(&run.samples, &run.triangle, &levels)?;
    write_prediction(&output_dir(&args.run)?, "nowcast", &summary)
}

pub fn forecast(args: &ForecastArgs) -> CliResult<()> {
    let run = RunDir::open(&args.run.run)?;
    let levels = args.levels.clone().unwrap_or_else(|| run.config.output.levels.clone());
    validate_levels(&levels)?;
    if args.horizon == 0 {
        return Err(invalid("forecast horizon must be positive"));
    }
    let quantity = match args.quantity {
        QuantityArg::Reported => Quantity::Reported,
        QuantityArg::True => Quantity::True,
    };
    let summary = predictive::forecast(&run.samples, &run.triangle, args.horizon, &levels, quantity)?;
    write_prediction(&output_dir(&args.run)?, "forecast", &summary)
}

pub fn check(args: &CheckArgs) -> CliResult<()> {
    validate_levels(&[args.level])?;
    let run = RunDir::open(&args.run.run)?;
    let (samples, tri) = (&run.samples, &run.triangle);
    let reps = replicate_insample(samples, tri)?;
    let identity = (0..reps.n_replicates())
        .map(|r| {
            let (v, s) = total_variance_identity(&reps, r);
            (v - s).abs() / v.abs().max(1e-300)
        })
        .fold(0.0, f64::max);
    let mut report = PpcReport {
        covariance: Some(ppc_covariance(&reps, tri, !args.exclude_remainder)?),
        mean_var: Some(ppc_mean_var_sorted(&reps, tri)?),
        coverage: vec![interval_coverage(samples, tri, args.level, false)?],
    };
    if samples.spec.variant.is_gdm() && !samples.spec.multinomial_limit {
        report.coverage.push(interval_coverage(samples, tri, args.level, true)?);
    }
    let out = output_dir(&args.run)?;
    let files = report.write_csvs(&out)?;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
    let cov = report.covariance.as_ref().expect("set above");
    let mv = report.mean_var.as_ref().expect("set above");
    let coverage: Vec<_> = report
        .coverage
        .iter()
        .map(|c| json!({"multinomial_limit": c.multinomial_limit, "level": c.level, "overall": c.overall}))
        .collect();
    let summary = json!({
        "replicates": reps.n_replicates(),
        "rows": reps.n_rows(),
        "mean_bias_z": mean(&cov.bias_z),
        "mean_bias_p": mean(&cov.bias_p),
        "p_mean": mv.p_mean,
        "p_var": mv.p_var,
        "coverage": coverage,
        "variance_identity_max_rel_error": identity,
    });
    write_json_index(&out.join("check.json"), "check", &files, &summary)?;
    for c in &report.coverage {
        let which = if c.multinomial_limit { "multinomial limit" } else { "fitted" };
        println!("{which}: {:.1}% of proportions inside the {} intervals", 100.0 * c.overall, c.level);
    }
    Ok(())
}

pub fn diagnose(args: &DiagnoseArgs) -> CliResult<()> {
    let run = RunDir::open(&args.run.run)?;
    let ctx = predictive::context_for(&run.samples, &run.triangle)?;
    let subset = convergence_subset(&run.samples, &ctx)?;
    let m = subset.mpsrf()?;
    let out = output_dir(&args.run)?;
    let path = out.join("diagnose.csv");
    let mut w = writer(&path)?;
    let mut lowest: Option<(f64, &str)> = None;
    let io = |e: std::io::Error| invalid(format!("{}: {e}", path.display()));
    writeln!(w, "parameter,mean,ess,psrf").map_err(io)?;
    for (p, label) in subset.labels.iter().enumerate() {
        let col = subset.column(p);
        let ess = effective_sample_size(&col).value;
        let r = psrf(&col).unwrap_or(f64::NAN);
        let n: usize = col.iter().map(Vec::len).sum();
        let mean = col.iter().flatten().sum::<f64>() / n as f64;
        writeln!(w, "{label},{mean},{ess},{r}").map_err(io)?;
        if lowest.is_none_or(|(e, _)| ess < e) {
            lowest = Some((ess, label));
        }
    }
    w.flush().map_err(io)?;
    let summary = json!({
        "mpsrf": m,
        "converged": m.converged(),
        "lowest_ess": lowest.map(|(e, l)| json!({"parameter": l, "ess": e})),
    });
    write_json_index(&out.join("diagnose.json"), "diagnose", &[path], &summary)?;
    println!(
        "MPSRF {:.4} over {} parameters ({}){}",
        m.value,
        m.dim,
        if m.converged() { "converged" } else { "NOT converged" },
        lowest.map(|(e, l)| format!("; lowest ESS {e:.0} ({l})")).unwrap_or_default()
    );
    if args.strict && !m.converged() {
        return Err(CliError::NotConverged(m.value));
    }
    Ok(())
}

pub fn select_delay(args: &SelectDelayArgs) -> CliResult<()> {
    let doc = Document::load(args.config.as_deref())?;
    let data = resolve_data(&doc, &args.data)?;
    let raw = read_raw(&data, 1)?;
    let sel = select_delay_horizon(&raw, args.threshold, args.quantile)?;
    let q = cumulative_proportion_quantiles(&raw, &PROPORTION_QUANTILES)?;
    let out = default_out(&args.out, "select-delay");
    create_dir(&out)?;
    let path = out.join("delay_proportions.csv");
    let mut w = writer(&path)?;
    let io = |e: std::io::Error| invalid(format!("{}: {e}", path.display()));
    let header: Vec<String> = PROPORTION_QUANTILES.iter().map(|p| format!("q{p}")).collect();
    writeln!(w, "delay,{}", header.join(",")).map_err(io)?;
    for (d, row) in q.iter().enumerate() {
        let vals: Vec<String> = row.iter().map(f64::to_string).collect();
        writeln!(w, "{},{}", d + 1, vals.join(",")).map_err(io)?;
    }
    w.flush().map_err(io)?;
    let summary = json!({
        "threshold": args.threshold,
        "quantile": args.quantile,
        "delay_horizon": sel.delay_horizon,
        "threshold_reached": sel.threshold_reached,
    });
    write_json_index(&out.join("select_delay.json"), "select-delay", &[path], &summary)?;
    if sel.threshold_reached {
        println!("D = {}", sel.delay_horizon);
    } else {
        println!("D = {} (threshold never reached; using the full width)", sel.delay_horizon);
    }
    Ok(())
}
