use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use arhmm::backtest::{
    read_quotes, run_backtest, write_cumulative_pnl, write_skipped, write_trades, BacktestConfig,
    Strategy,
};
use arhmm::estimate::lrt_degrees_of_freedom;
use arhmm::gof::{parametric_bootstrap, select_num_regimes};
use arhmm::hedge::{
    build_grids, build_tables, price, read_tables, run_strategy, simulate_market_paths,
    tables_cache_key, write_tables, GridSpec, HedgeConfig, HedgeTables, Hedger, OptionKind, Payoff,
    RegimeChoice, RegimePolicy, BURN_IN,
};
use arhmm::io::{
    read_observations, read_returns, write_columns, write_observations, write_regime_probabilities,
    write_regimes, write_stats_table, FitReport, GofReport, GofRow, RegimeProbabilities,
    StatsLayout,
};
use arhmm::model::{stationary_moments, TRADING_DAYS};
use arhmm::{
    em_fit, filter_path, likelihood_ratio_test, most_probable_regime, ArhmmError, ArhmmModel,
    EmConfig,
};

use crate::{
    BacktestArgs, Cli, Command, ContractArgs, EstimateArgs, FilterArgs, GofArgs, GridArgs,
    HedgeSimArgs, SimulateArgs,
};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Library(#[from] ArhmmError),
    #[error("{0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    /// 1 for bad inputs, 2 for numerical failures.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Library(e) if !e.is_validation() => 2,
            _ => 1,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|source| CliError::File {
            path: path.to_path_buf(),
            source,
        })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|source| CliError::File {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|source| CliError::File {
            path: path.to_path_buf(),
            source,
        })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(ArhmmError::from)?;
    writeln!(w)
        .and_then(|_| w.flush())
        .map_err(|source| CliError::File {
            path: path.to_path_buf(),
            source,
        })
}

fn load_model(path: &Path) -> Result<ArhmmModel> {
    let text = fs::read_to_string(path).map_err(|source| CliError::File {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(ArhmmModel::from_json(&text)?)
}

pub fn run(cli: &Cli) -> Result<String> {
    let out = cli.output_dir.as_path();
    match &cli.command {
        Command::Estimate(a) => estimate(a, cli.seed, out),
        Command::Filter(a) => filter(a, out),
        Command::Gof(a) => gof(a, cli.seed, out),
        Command::Simulate(a) => simulate(a, cli.seed, out),
        Command::HedgeTables(a) => hedge_tables(&a.contract, cli.seed, out),
        Command::HedgeSim(a) => hedge_sim(a, cli.seed, out),
        Command::Backtest(a) => backtest(a, cli.seed, out),
    }
}

fn estimate(a: &EstimateArgs, seed: u64, out: &Path) -> Result<String> {
    let (_, y) = read_observations(open(&a.returns)?)?;
    let cfg = EmConfig {
        max_iter: a.max_iter,
        tol: a.tol,
        warm_start: a.warm_start,
        seed,
        ..Default::default()
    };
    let fit = em_fit(&y, a.regimes, &cfg)?;
    let hmm = em_fit(&y, a.regimes, &cfg.hmm())?;
    let lrt = likelihood_ratio_test(
        hmm.log_lik,
        fit.log_lik,
        lrt_degrees_of_freedom(a.regimes, y.dim()),
    )?;
    let report = FitReport {
        regimes: a.regimes,
        dim: y.dim(),
        observations: y.len(),
        log_lik: fit.log_lik,
        iterations: fit.iterations,
        converged: fit.converged,
        restarts: fit.restarts,
        hmm_log_lik: hmm.log_lik,
        lrt_statistic: lrt.statistic,
        lrt_df: lrt.df,
        lrt_p_value: lrt.p_value,
    };
    let model_path = out.join("model.json");
    let mut w = create(&model_path)?;
    writeln!(w, "{}", fit.model.to_json())
        .and_then(|_| w.flush())
        .map_err(|source| CliError::File {
            path: model_path.clone(),
            source,
        })?;
    write_json(&out.join("fit_report.json"), &report)?;
    Ok(format!(
        "estimate: {} regimes, log-likelihood {:.6}, {} iterations, LRT vs HMM p-value {:.4}; wrote model.json, fit_report.json",
        a.regimes, fit.log_lik, fit.iterations, lrt.p_value
    ))
}

fn filter(a: &FilterArgs, out: &Path) -> Result<String> {
    let model = load_model(&a.model)?;
    let (dates, y) = read_observations(open(&a.returns)?)?;
    let (states, log_lik) = filter_path(&model, &y)?;
    let probs: Vec<Vec<f64>> = states.iter().map(|s| s.eta.clone()).collect();
    let most_probable = probs.iter().map(|p| most_probable_regime(p)).collect();
    let rp = RegimeProbabilities {
        dates,
        probs,
        most_probable,
    };
    write_regime_probabilities(create(&out.join("filter.csv"))?, &rp)?;
    Ok(format!(
        "filter: {} dates, log-likelihood {log_lik:.6}; wrote filter.csv",
        rp.dates.len()
    ))
}

fn gof(a: &GofArgs, seed: u64, out: &Path) -> Result<String> {
    let (_, y) = read_observations(open(&a.returns)?)?;
    let cfg = EmConfig {
        max_iter: a.max_iter,
        seed,
        ..Default::default()
    };
    let row = |r: &arhmm::GofResult| GofRow {
        regimes: r.regimes,
        s_n: r.s_n,
        p_value: r.p_value,
        n_boot: r.n_boot,
        dropped: r.dropped,
    };
    let report = match a.lmax {
        Some(lmax) => {
            let sel = select_num_regimes(&y, lmax, a.nboot, &cfg, seed)?;
            let last = sel
                .results
                .last()
                .expect("at least one regime count is tested");
            GofReport {
                s_n: last.s_n,
                p_value: last.p_value,
                table: sel.results.iter().map(row).collect(),
                selected: sel.selected,
            }
        }
        None => {
            let r = parametric_bootstrap(&y, a.regimes, a.nboot, &cfg, seed)?;
            GofReport {
                s_n: r.s_n,
                p_value: r.p_value,
                table: vec![row(&r)],
                selected: None,
            }
        }
    };
    write_json(&out.join("gof.json"), &report)?;
    let sel = match (a.lmax, report.selected) {
        (None, _) => String::new(),
        (Some(_), Some(l)) => format!(", selected {l} regimes"),
        (Some(m), None) => format!(", no regime count up to {m} accepted"),
    };
    Ok(format!(
        "gof: S_n {:.6}, p-value {:.4}{sel}; wrote gof.json",
        report.s_n, report.p_value
    ))
}

fn simulate(a: &SimulateArgs, seed: u64, out: &Path) -> Result<String> {
    let model = load_model(&a.model)?;
    if a.steps == 0 {
        return Err(CliError::Invalid("--steps must be positive".into()));
    }
    let (y, regimes) =
        model.simulate_stationary(a.steps, a.burn_in, &mut arhmm::rng::seeded(seed))?;
    let dates: Vec<String> = (0..a.steps).map(|t| t.to_string()).collect();
    write_observations(create(&out.join("simulated_returns.csv"))?, &dates, &y)?;
    write_regimes(
        create(&out.join("simulated_regimes.csv"))?,
        &dates,
        &regimes,
    )?;
    Ok(format!(
        "simulate: {} steps; wrote simulated_returns.csv, simulated_regimes.csv",
        a.steps
    ))
}

fn grid_spec(g: &GridArgs, seed: u64) -> GridSpec {
    GridSpec {
        n_y: g.ny,
        n_s: g.ns,
        coverage: g.coverage,
        n_sim: g.grid_sims,
        seed,
    }
}

/// Tables for the contract under `model`, read from `<out>/tables/<key>.bin` when present.
fn cached_tables(
    model: &ArhmmModel,
    c: &ContractArgs,
    seed: u64,
    out: &Path,
) -> Result<(HedgeTables, String, PathBuf)> {
    if !(c.spot > 0.0 && c.strike > 0.0) || c.steps == 0 {
        return Err(CliError::Invalid(
            "spot, strike and steps must be positive".into(),
        ));
    }
    let rate = c.rate / TRADING_DAYS;
    let rates = vec![rate; c.steps];
    let beta_n = (-rate * c.steps as f64).exp();
    let (y, s) = build_grids(
        model,
        c.steps,
        c.spot,
        &rates,
        Some(c.strike * beta_n),
        &grid_spec(&c.grid, seed),
    )?;
    let payoff = match OptionKind::from(c.kind) {
        OptionKind::Call => Payoff::call(c.strike),
        OptionKind::Put => Payoff::put(c.strike),
    };
    let cfg = HedgeConfig::new(c.steps, rate, payoff, y, s)?;
    let key = tables_cache_key(model, &cfg)?;
    let path = out.join("tables").join(format!("{key}.bin"));
    if path.exists() {
        let (tables, stored) = read_tables(&mut open(&path)?)?;
        if stored == key {
            log::info!("reusing tables {}", path.display());
            return Ok((tables, key, path));
        }
        log::warn!(
            "{} holds tables for another key; rebuilding",
            path.display()
        );
    }
    let tables = build_tables(model, &cfg)?;
    let mut w = create(&path)?;
    write_tables(&mut w, &tables, &key)?;
    w.flush().map_err(|source| CliError::File {
        path: path.clone(),
        source,
    })?;
    Ok((tables, key, path))
}

#[derive(Serialize)]
struct TablesSummary {
    key: String,
    file: String,
    steps: usize,
    y_nodes: usize,
    s_nodes: usize,
    /// Price at the spot and the stationary mean return, per starting regime.
    prices: Vec<f64>,
}

fn hedge_tables(c: &ContractArgs, seed: u64, out: &Path) -> Result<String> {
    let model = load_model(&c.model)?;
    let (tables, key, path) = cached_tables(&model, c, seed, out)?;
    let y0 = stationary_moments(&model)?.mu[0];
    let prices = (0..model.num_regimes())
        .map(|i| price(&tables, c.spot, y0, RegimeChoice::Index(i)))
        .collect::<arhmm::Result<Vec<f64>>>()?;
    let summary = TablesSummary {
        key: key.clone(),
        file: path.display().to_string(),
        steps: c.steps,
        y_nodes: tables.y_grid().len(),
        s_nodes: tables.config.s_grid.len(),
        prices: prices.clone(),
    };
    write_json(&out.join("tables_summary.json"), &summary)?;
    let shown: Vec<String> = prices.iter().map(|p| format!("{p:.4}")).collect();
    Ok(format!(
        "hedge-tables: key {}, prices by regime [{}]; wrote {}",
        &key[..12],
        shown.join(", "),
        path.display()
    ))
}

fn hedge_sim(a: &HedgeSimArgs, seed: u64, out: &Path) -> Result<String> {
    let c = &a.contract;
    let model = load_model(&c.model)?;
    let policy = RegimePolicy::from(a.policy);
    let (tables, _, _) = cached_tables(&model, c, seed, out)?;
    let paths = simulate_market_paths(&model, c.steps, a.paths, BURN_IN, seed)?;
    let mut columns: Vec<(String, arhmm::HedgeSimResult)> = Vec::new();
    let optimal = Hedger::Optimal {
        tables: &tables,
        filter_model: &model,
        policy,
    };
    columns.push(("OH-ARHMM".into(), run_strategy(&optimal, &paths, c.spot)?));
    if let Some(p) = &a.hmm_model {
        let hmm = load_model(p)?;
        let (ht, _, _) = cached_tables(
            &hmm,
            &ContractArgs {
                model: p.clone(),
                ..c.clone()
            },
            seed,
            out,
        )?;
        // the simulated regimes belong to the generating model, so no oracle here
        let hp = if policy == RegimePolicy::Known {
            RegimePolicy::MostProbable
        } else {
            policy
        };
        let hedger = Hedger::Optimal {
            tables: &ht,
            filter_model: &hmm,
            policy: hp,
        };
        columns.push(("OH-HMM".into(), run_strategy(&hedger, &paths, c.spot)?));
    }
    let vol = match a.bs_vol {
        Some(v) => v,
        None => stationary_moments(&model)?.std(),
    };
    columns.push((
        "B&S".into(),
        run_strategy(
            &Hedger::Delta {
                config: &tables.config,
                vol,
            },
            &paths,
            c.spot,
        )?,
    ));

    let stats: Vec<(String, arhmm::HedgingErrorStats)> =
        columns.iter().map(|(n, r)| (n.clone(), r.stats)).collect();
    write_stats_table(
        create(&out.join("hedge_sim_stats.csv"))?,
        StatsLayout::Simulation,
        &stats,
    )?;
    let errors: Vec<(String, Vec<f64>)> = columns
        .iter()
        .map(|(n, r)| (n.clone(), r.errors()))
        .collect();
    write_columns(create(&out.join("hedge_errors.csv"))?, "path", &errors)?;
    let rmse: Vec<String> = stats
        .iter()
        .map(|(n, s)| format!("{n} {:.4}", s.rmse))
        .collect();
    Ok(format!(
        "hedge-sim: {} paths, RMSE {}; wrote hedge_sim_stats.csv, hedge_errors.csv",
        a.paths,
        rmse.join(", ")
    ))
}

fn parse_band(s: &str) -> Result<(f64, f64)> {
    let bad = || CliError::Invalid(format!("moneyness band '{s}' must look like 0.9:1.1"));
    let (lo, hi) = s.split_once(':').ok_or_else(bad)?;
    let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
    let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
    if !(lo > 0.0 && lo <= hi) {
        return Err(bad());
    }
    Ok((lo, hi))
}

fn backtest(a: &BacktestArgs, seed: u64, out: &Path) -> Result<String> {
    let quotes = read_quotes(open(&a.quotes)?)?;
    let returns = read_returns(open(&a.returns)?)?;
    let strategies = a
        .strategies
        .split(',')
        .map(str::parse::<Strategy>)
        .collect::<arhmm::Result<Vec<_>>>()?;
    let cfg = BacktestConfig {
        window_days: a.window,
        regimes: a.regimes,
        strategies,
        moneyness_band: parse_band(&a.moneyness_band)?,
        parity_rate: a.parity_rate,
        em: EmConfig {
            max_iter: a.max_iter,
            seed,
            ..Default::default()
        },
        grid: grid_spec(&a.grid, seed),
        policy: a.policy.into(),
        normalize: !a.quote_units,
        fixed_model: None,
        regime_path: None,
    };
    let report = run_backtest(&quotes, &returns, &cfg)?;

    let stats: Vec<(String, arhmm::HedgingErrorStats)> = report
        .strategies
        .iter()
        .map(|r| (r.strategy.label().to_string(), r.stats))
        .collect();
    write_stats_table(
        create(&out.join("backtest_stats.csv"))?,
        StatsLayout::Backtest,
        &stats,
    )?;
    let trades: Vec<_> = report
        .strategies
        .iter()
        .flat_map(|r| r.trades.iter().cloned())
        .collect();
    write_trades(create(&out.join("trades.csv"))?, &trades)?;
    let (dates, cum) = report.cumulative_pnl();
    write_cumulative_pnl(create(&out.join("cumulative_pnl.csv"))?, &dates, &cum)?;
    write_skipped(create(&out.join("skipped.csv"))?, &report.skipped)?;

    let totals: Vec<String> = report
        .strategies
        .iter()
        .map(|r| format!("{} {:.4}", r.strategy.label(), r.total_pnl))
        .collect();
    Ok(format!(
        "backtest: {} options hedged, {} quotes skipped, total P&L {}; wrote backtest_stats.csv, trades.csv, cumulative_pnl.csv, skipped.csv",
        report.inceptions.len(),
        report.skipped.len(),
        totals.join(", ")
    ))
}
