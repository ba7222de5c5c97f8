//! Option-market backtest: benchmark and optimal hedging strategies run quote by quote on
//! realized returns, with hedging-error statistics and trading P&L.
//!
//! Every hedge runs on data normalized so the underlying starts at 100, and results are
//! scaled back to quote units unless normalized output is requested.

mod forward;
mod io;
mod synthetic;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ArhmmError, Result};
use crate::estimate::{em_fit, EmConfig};
use crate::hedge::{
    build_grids, build_tables, hedge_path, tables_cache_key, GridSpec, HedgeConfig, HedgeTables,
    Hedger, MarketPath, OptionKind, PathOutcome, Payoff, RegimePolicy,
};
use crate::io::ReturnSeries;
use crate::model::{stationary_moments, ArhmmModel};
use crate::series::Series;
use crate::stats::{hedging_error_stats, HedgingErrorStats};

pub use forward::{implied_forward, implied_vol, normalize_to_100, parity_strike, ImpliedForward};
pub use io::{
    read_cumulative_pnl, read_quotes, read_skipped, read_trades, write_cumulative_pnl,
    write_quotes, write_skipped, write_trades,
};
pub use synthetic::{synthetic_market, SyntheticMarket, SyntheticPricing, SyntheticSpec};

/// End-of-day option quote.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptionQuote {
    pub date: String,
    pub kind: OptionKind,
    pub strike: f64,
    pub maturity_days: usize,
    /// Bid-ask midpoint.
    pub mid: f64,
    pub underlying_close: f64,
}

impl OptionQuote {
    pub fn validate(&self) -> Result<()> {
        if !(self.mid > 0.0 && self.strike > 0.0 && self.underlying_close > 0.0)
            || self.maturity_days == 0
        {
            return Err(ArhmmError::InvalidInput(format!(
                "quote on {} needs positive mid, strike, close and maturity",
                self.date
            )));
        }
        Ok(())
    }

    pub fn moneyness(&self) -> f64 {
        self.strike / self.underlying_close
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Strategy {
    /// Black-Scholes delta recalibrated to the implied volatility at each rebalance.
    #[serde(rename = "bs-m")]
    BsImplied,
    /// Black-Scholes delta at the fitted model's stationary volatility.
    #[serde(rename = "bs")]
    Bs,
    /// Optimal hedge in a one-regime Gaussian model with the stationary mean and volatility.
    #[serde(rename = "oh-bs")]
    OhBs,
    /// Optimal hedge in a hidden Markov model without autoregression.
    #[serde(rename = "oh-hmm")]
    OhHmm,
    #[serde(rename = "oh-arhmm")]
    OhArhmm,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::BsImplied,
        Strategy::Bs,
        Strategy::OhBs,
        Strategy::OhHmm,
        Strategy::OhArhmm,
    ];

    /// Column label in the statistics tables.
    pub fn label(self) -> &'static str {
        match self {
            Strategy::BsImplied => "B&S-M",
            Strategy::Bs => "B&S",
            Strategy::OhBs => "OH-B&S",
            Strategy::OhHmm => "OH-HMM",
            Strategy::OhArhmm => "OH-ARHMM",
        }
    }

    pub fn key(self) -> &'static str {
        match self {
            Strategy::BsImplied => "bs-m",
            Strategy::Bs => "bs",
            Strategy::OhBs => "oh-bs",
            Strategy::OhHmm => "oh-hmm",
            Strategy::OhArhmm => "oh-arhmm",
        }
    }

    fn needs_arhmm(self) -> bool {
        !matches!(self, Strategy::BsImplied | Strategy::OhHmm)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for Strategy {
    type Err = ArhmmError;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        Strategy::ALL
            .into_iter()
            .find(|x| x.key().eq_ignore_ascii_case(t) || x.label().eq_ignore_ascii_case(t))
            .ok_or_else(|| ArhmmError::InvalidInput(format!("unknown strategy '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Market above the model price.
    Sell,
    Buy,
    None,
}

/// Outcome of one strategy on one option.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeRecord {
    pub strategy: Strategy,
    pub date: String,
    pub kind: OptionKind,
    pub strike: f64,
    pub maturity_days: usize,
    /// Market mid `C_0`.
    pub market: f64,
    /// Strategy price `V_0`.
    pub theoretical: f64,
    pub direction: Direction,
    /// Discounted `C_n - V_n`.
    pub error: f64,
    /// `(C_0 - V_0) - error` for a sale, its negative for a purchase, 0 without a trade.
    pub pnl: f64,
    /// P&L of selling at the market and hedging, whatever the direction.
    pub sale_pnl: f64,
}

/// Market and model prices within this relative distance count as equal.
pub const PRICE_TIE_TOL: f64 = 1e-12;

impl TradeRecord {
    fn settle(mut self) -> Self {
        let gap = self.market - self.theoretical;
        self.sale_pnl = gap - self.error;
        let scale = self.market.abs().max(self.theoretical.abs());
        (self.direction, self.pnl) = if gap.abs() <= PRICE_TIE_TOL * scale {
            (Direction::None, 0.0)
        } else if gap > 0.0 {
            (Direction::Sell, self.sale_pnl)
        } else {
            (Direction::Buy, -self.sale_pnl)
        };
        self
    }
}

#[derive(Debug, Clone)]
pub struct BacktestConfig {
    /// Trailing returns used for each fit, ending on the quote date.
    pub window_days: usize,
    pub regimes: usize,
    pub strategies: Vec<Strategy>,
    /// Inclusive bounds on strike over underlying at inception.
    pub moneyness_band: (f64, f64),
    /// Annual continuously compounded rate discounting the put-call spread. Also the carry
    /// rate when no call and put share a strike.
    pub parity_rate: f64,
    pub em: EmConfig,
    pub grid: GridSpec,
    pub policy: RegimePolicy,
    /// Report prices, errors and P&L with the underlying normalized to 100 at inception.
    pub normalize: bool,
    /// Use this model instead of fitting one per date. Its autoregression-free version
    /// stands in for the HMM fit.
    pub fixed_model: Option<ArhmmModel>,
    /// Regime behind each return, required by [`RegimePolicy::Known`].
    pub regime_path: Option<Vec<usize>>,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        Self {
            window_days: 500,
            regimes: 3,
            strategies: Strategy::ALL.to_vec(),
            moneyness_band: (0.9, 1.1),
            parity_rate: 0.0,
            em: EmConfig::default(),
            grid: GridSpec::default(),
            policy: RegimePolicy::MostProbable,
            normalize: true,
            fixed_model: None,
            regime_path: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedQuote {
    pub date: String,
    pub kind: OptionKind,
    pub strike: f64,
    pub maturity_days: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrategyReport {
    pub strategy: Strategy,
    /// Hedging-error statistics; `bias` is the mean of market minus strategy price.
    pub stats: HedgingErrorStats,
    /// One record per hedged option, in inception order.
    pub trades: Vec<TradeRecord>,
    /// Hedge ratios per option, parallel to `trades`.
    pub weights: Vec<Vec<f64>>,
    pub total_pnl: f64,
}

/// Fitted models used for one hedged option, in normalized units.
#[derive(Debug, Clone, PartialEq)]
pub struct InceptionInfo {
    pub date: String,
    pub forward: Option<ImpliedForward>,
    pub daily_rate: f64,
    pub arhmm: Option<ArhmmModel>,
    pub hmm: Option<ArhmmModel>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestReport {
    pub strategies: Vec<StrategyReport>,
    /// Parallel to each strategy's `trades`.
    pub inceptions: Vec<InceptionInfo>,
    pub skipped: Vec<SkippedQuote>,
}

impl BacktestReport {
    pub fn strategy(&self, s: Strategy) -> Option<&StrategyReport> {
        self.strategies.iter().find(|r| r.strategy == s)
    }

    /// Cumulative P&L per strategy after each inception date.
    pub fn cumulative_pnl(&self) -> (Vec<String>, Vec<(Strategy, Vec<f64>)>) {
        let mut dates: Vec<String> = Vec::new();
        let mut ends: Vec<usize> = Vec::new();
        for (k, inc) in self.inceptions.iter().enumerate() {
            if dates.last() != Some(&inc.date) {
                dates.push(inc.date.clone());
                ends.push(k + 1);
            } else {
                *ends.last_mut().unwrap() = k + 1;
            }
        }
        let cols = self
            .strategies
            .iter()
            .map(|r| {
                let mut acc = 0.0;
                let mut start = 0;
                let series = ends
                    .iter()
                    .map(|&e| {
                        acc += r.trades[start..e].iter().map(|t| t.pnl).sum::<f64>();
                        start = e;
                        acc
                    })
                    .collect();
                (r.strategy, series)
            })
            .collect();
        (dates, cols)
    }
}

/// Contract identity: kind, strike bits and the index of the expiry date.
type ContractKey = (OptionKind, u64, usize);

struct Job {
    quote: usize,
    t0: usize,
    n: usize,
    /// `100 / S_0`.
    scale: f64,
    forward: Option<ImpliedForward>,
    rate: f64,
}

#[derive(Clone)]
struct Fits {
    arhmm: Option<ArhmmModel>,
    hmm: Option<ArhmmModel>,
}

fn uniform_prior(model: &ArhmmModel) -> Result<ArhmmModel> {
    let l = model.num_regimes();
    model
        .clone()
        .with_eta0(nalgebra::DVector::from_element(l, 1.0 / l as f64))
}

/// Model used by the one-regime optimal hedge: stationary mean and volatility.
fn gaussian_proxy(model: &ArhmmModel) -> Result<ArhmmModel> {
    let m = stationary_moments(model)?;
    ArhmmModel::univariate(
        &[(m.mu[0], 0.0, m.std())],
        nalgebra::DMatrix::from_element(1, 1, 1.0),
    )
}

/// Tables for an optimal hedge on normalized data (spot 100).
pub(crate) fn normalized_tables(
    model: &ArhmmModel,
    n: usize,
    rate: f64,
    kind: OptionKind,
    strike: f64,
    grid: &GridSpec,
) -> Result<(HedgeConfig, String)> {
    let rates = vec![rate; n];
    let beta_n = (-rate * n as f64).exp();
    let (y, s) = build_grids(model, n, 100.0, &rates, Some(strike * beta_n), grid)?;
    let payoff = match kind {
        OptionKind::Call => Payoff::call(strike),
        OptionKind::Put => Payoff::put(strike),
    };
    let cfg = HedgeConfig::new(n, rate, payoff, y, s)?;
    let key = tables_cache_key(model, &cfg)?;
    Ok((cfg, key))
}

fn skip(skipped: &mut Vec<SkippedQuote>, q: &OptionQuote, reason: String) {
    warn!(
        "skipping {} {} {} on {}: {reason}",
        q.kind, q.strike, q.maturity_days, q.date
    );
    skipped.push(SkippedQuote {
        date: q.date.clone(),
        kind: q.kind,
        strike: q.strike,
        maturity_days: q.maturity_days,
        reason,
    });
}

/// Runs every configured strategy on every option whose first quote falls inside the
/// moneyness band. Later quotes of the same contract feed the implied-volatility strategy.
pub fn run_backtest(
    quotes: &[OptionQuote],
    returns: &ReturnSeries,
    cfg: &BacktestConfig,
) -> Result<BacktestReport> {
    if cfg.strategies.is_empty() {
        return Err(ArhmmError::InvalidInput("no strategies selected".into()));
    }
    if cfg.window_days < 2 && cfg.fixed_model.is_none() {
        return Err(ArhmmError::InvalidInput(
            "the fitting window needs at least two returns".into(),
        ));
    }
    if cfg.window_days == 0 {
        return Err(ArhmmError::InvalidInput(
            "the window needs at least one return".into(),
        ));
    }
    if cfg.policy == RegimePolicy::Known {
        match &cfg.regime_path {
            Some(p) if p.len() == returns.len() => {}
            _ => {
                return Err(ArhmmError::InvalidInput(
                    "known regimes need one regime per return".into(),
                ))
            }
        }
    }
    let (lo_m, hi_m) = cfg.moneyness_band;
    let date_index: HashMap<&str, usize> = returns
        .dates
        .iter()
        .enumerate()
        .map(|(i, d)| (d.as_str(), i))
        .collect();
    let mut skipped = Vec::new();

    // locate quotes, group by contract and by (date, maturity)
    let mut located: Vec<(usize, usize)> = Vec::new();
    for (k, q) in quotes.iter().enumerate() {
        if let Err(e) = q.validate() {
            skip(&mut skipped, q, e.to_string());
            continue;
        }
        match date_index.get(q.date.as_str()) {
            Some(&t) => located.push((t, k)),
            None => skip(&mut skipped, q, "date not in the returns series".into()),
        }
    }
    located.sort();
    let mut contract_mids: HashMap<ContractKey, BTreeMap<usize, usize>> = HashMap::new();
    let mut same_day: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    let mut inceptions: Vec<(usize, usize)> = Vec::new();
    for &(t, k) in &located {
        let q = &quotes[k];
        let key = (q.kind, q.strike.to_bits(), t + q.maturity_days);
        let entry = contract_mids.entry(key).or_default();
        if entry.is_empty() {
            let m = q.moneyness();
            if m >= lo_m && m <= hi_m {
                inceptions.push((t, k));
            }
        }
        entry.entry(t).or_insert(k);
        same_day.entry((t, q.maturity_days)).or_default().push(k);
    }

    // data sufficiency and carry rate
    let daily_parity = cfg.parity_rate / crate::model::TRADING_DAYS;
    let mut jobs = Vec::new();
    for &(t0, k) in &inceptions {
        let q = &quotes[k];
        let n = q.maturity_days;
        if t0 + 1 < cfg.window_days {
            skip(
                &mut skipped,
                q,
                format!(
                    "only {} returns before inception, window needs {}",
                    t0 + 1,
                    cfg.window_days
                ),
            );
            continue;
        }
        if t0 + n >= returns.len() {
            skip(&mut skipped, q, "returns end before expiry".into());
            continue;
        }
        let pair = parity_strike(same_day[&(t0, n)].iter().map(|&i| &quotes[i]));
        let forward = match pair {
            Some((kk, c, p)) => {
                match implied_forward(c, p, kk, daily_parity, n, q.underlying_close) {
                    Ok(f) => Some(f),
                    Err(e) => {
                        info!("no implied forward on {}: {e}", q.date);
                        None
                    }
                }
            }
            None => None,
        };
        let rate = forward.map_or(daily_parity, |f| f.daily_rate);
        jobs.push(Job {
            quote: k,
            t0,
            n,
            scale: 100.0 / q.underlying_close,
            forward,
            rate,
        });
    }

    // one fit per inception date
    let need_ar = cfg.strategies.iter().any(|s| s.needs_arhmm());
    let need_hmm = cfg.strategies.contains(&Strategy::OhHmm);
    let dates: BTreeSet<usize> = jobs.iter().map(|j| j.t0).collect();
    let fits: HashMap<usize, Result<Fits>> = dates
        .into_par_iter()
        .map(|t0| (t0, fit_window(returns, t0, cfg, need_ar, need_hmm)))
        .collect();
    let mut kept = Vec::new();
    for job in jobs {
        match &fits[&job.t0] {
            Ok(_) => kept.push(job),
            Err(e) => skip(&mut skipped, &quotes[job.quote], format!("fit failed: {e}")),
        }
    }
    let jobs = kept;
    let fit_of = |j: &Job| fits[&j.t0].as_ref().expect("failed fits were skipped");

    // distinct table sets
    let mut table_specs: HashMap<String, (ArhmmModel, HedgeConfig)> = HashMap::new();
    let mut job_keys: Vec<Vec<Option<String>>> = Vec::with_capacity(jobs.len());
    let mut job_errors: Vec<Option<String>> = vec![None; jobs.len()];
    for (ji, job) in jobs.iter().enumerate() {
        let q = &quotes[job.quote];
        let fit = fit_of(job);
        let mut keys = Vec::new();
        for &s in &cfg.strategies {
            let model = match s {
                Strategy::OhArhmm => fit.arhmm.clone(),
                Strategy::OhHmm => fit.hmm.clone(),
                Strategy::OhBs => match gaussian_proxy(fit.arhmm.as_ref().unwrap()) {
                    Ok(m) => Some(m),
                    Err(e) => {
                        job_errors[ji] = Some(e.to_string());
                        None
                    }
                },
                _ => None,
            };
            let key = match model {
                Some(m) => match normalized_tables(
                    &m,
                    job.n,
                    job.rate,
                    q.kind,
                    q.strike * job.scale,
                    &cfg.grid,
                ) {
                    Ok((hc, key)) => {
                        table_specs.entry(key.clone()).or_insert((m, hc));
                        Some(key)
                    }
                    Err(e) => {
                        job_errors[ji] = Some(e.to_string());
                        None
                    }
                },
                None => None,
            };
            keys.push(key);
        }
        job_keys.push(keys);
    }
    let specs: Vec<(String, (ArhmmModel, HedgeConfig))> = table_specs.into_iter().collect();
    let tables: HashMap<String, Result<HedgeTables>> = specs
        .into_par_iter()
        .map(|(key, (m, hc))| (key, build_tables(&m, &hc)))
        .collect();

    // hedge every option with every strategy
    let stationary_vol =
        |fit: &Fits| -> Result<f64> { Ok(stationary_moments(fit.arhmm.as_ref().unwrap())?.std()) };
    let results: Vec<Result<Vec<(TradeRecord, Vec<f64>)>>> = jobs
        .par_iter()
        .enumerate()
        .map(|(ji, job)| {
            if let Some(e) = &job_errors[ji] {
                return Err(ArhmmError::InvalidInput(e.clone()));
            }
            let q = &quotes[job.quote];
            let fit = fit_of(job);
            let path = MarketPath {
                history: returns.values[job.t0 + 1 - cfg.window_days..=job.t0].to_vec(),
                returns: returns.values[job.t0 + 1..=job.t0 + job.n].to_vec(),
                regimes: match &cfg.regime_path {
                    Some(p) => p[job.t0..=job.t0 + job.n].to_vec(),
                    None => vec![0; job.n + 1],
                },
            };
            let strike = q.strike * job.scale;
            let mid = q.mid * job.scale;
            let payoff = match q.kind {
                OptionKind::Call => Payoff::call(strike),
                OptionKind::Put => Payoff::put(strike),
            };
            let plain = HedgeConfig::new(job.n, job.rate, payoff, vec![0.0], vec![0.0, 1.0])?;
            let mut out = Vec::with_capacity(cfg.strategies.len());
            for (si, &s) in cfg.strategies.iter().enumerate() {
                let outcome: PathOutcome = match s {
                    Strategy::BsImplied => {
                        let vols = implied_schedule(quotes, &contract_mids, job)?;
                        let hedger = Hedger::ScheduledDelta {
                            config: &plain,
                            vols: &vols,
                            v0: mid,
                        };
                        hedge_path(&hedger, &path, 100.0)?
                    }
                    Strategy::Bs => {
                        let hedger = Hedger::Delta {
                            config: &plain,
                            vol: stationary_vol(fit)?,
                        };
                        hedge_path(&hedger, &path, 100.0)?
                    }
                    _ => {
                        let key = job_keys[ji][si]
                            .as_ref()
                            .expect("optimal strategies have tables");
                        let tables = tables[key]
                            .as_ref()
                            .map_err(|e| ArhmmError::InvalidInput(format!("tables: {e}")))?;
                        let model = match s {
                            Strategy::OhHmm => fit.hmm.as_ref().unwrap().clone(),
                            Strategy::OhBs => gaussian_proxy(fit.arhmm.as_ref().unwrap())?,
                            _ => fit.arhmm.as_ref().unwrap().clone(),
                        };
                        let filter_model = uniform_prior(&model)?;
                        let policy = if s == Strategy::OhArhmm {
                            cfg.policy
                        } else {
                            non_oracle(cfg.policy)
                        };
                        hedge_path(
                            &Hedger::Optimal {
                                tables,
                                filter_model: &filter_model,
                                policy,
                            },
                            &path,
                            100.0,
                        )?
                    }
                };
                let back = if cfg.normalize { 1.0 } else { 1.0 / job.scale };
                let market = if cfg.normalize { mid } else { q.mid };
                // the implied volatility reproduces the market price by construction
                let theoretical = if s == Strategy::BsImplied {
                    market
                } else {
                    outcome.v0 * back
                };
                let rec = TradeRecord {
                    strategy: s,
                    date: q.date.clone(),
                    kind: q.kind,
                    strike: if cfg.normalize { strike } else { q.strike },
                    maturity_days: q.maturity_days,
                    market,
                    theoretical,
                    direction: Direction::None,
                    error: outcome.error * back,
                    pnl: 0.0,
                    sale_pnl: 0.0,
                }
                .settle();
                out.push((rec, outcome.weights));
            }
            Ok(out)
        })
        .collect();

    let mut per_strategy: Vec<(Vec<TradeRecord>, Vec<Vec<f64>>)> =
        vec![(Vec::new(), Vec::new()); cfg.strategies.len()];
    let mut infos = Vec::new();
    for (job, res) in jobs.iter().zip(results) {
        match res {
            Ok(recs) => {
                let fit = fit_of(job);
                infos.push(InceptionInfo {
                    date: quotes[job.quote].date.clone(),
                    forward: job.forward,
                    daily_rate: job.rate,
                    arhmm: fit.arhmm.clone(),
                    hmm: fit.hmm.clone(),
                });
                for (k, (rec, w)) in recs.into_iter().enumerate() {
                    per_strategy[k].0.push(rec);
                    per_strategy[k].1.push(w);
                }
            }
            Err(e) => skip(&mut skipped, &quotes[job.quote], e.to_string()),
        }
    }
    if infos.is_empty() {
        return Err(ArhmmError::InvalidInput(format!(
            "no quote could be hedged ({} skipped)",
            skipped.len()
        )));
    }
    let strategies = cfg
        .strategies
        .iter()
        .zip(per_strategy)
        .map(|(&s, (trades, weights))| {
            let errors: Vec<f64> = trades.iter().map(|t| t.error).collect();
            let mut stats = hedging_error_stats(&errors)?;
            stats.bias =
                trades.iter().map(|t| t.market - t.theoretical).sum::<f64>() / trades.len() as f64;
            let total_pnl = trades.iter().map(|t| t.pnl).sum();
            Ok(StrategyReport {
                strategy: s,
                stats,
                trades,
                weights,
                total_pnl,
            })
        })
        .collect::<Result<_>>()?;
    Ok(BacktestReport {
        strategies,
        inceptions: infos,
        skipped,
    })
}

/// Regime oracles only apply to the model that generated the regimes.
fn non_oracle(p: RegimePolicy) -> RegimePolicy {
    if p == RegimePolicy::Known {
        RegimePolicy::MostProbable
    } else {
        p
    }
}

fn fit_window(
    returns: &ReturnSeries,
    t0: usize,
    cfg: &BacktestConfig,
    need_ar: bool,
    need_hmm: bool,
) -> Result<Fits> {
    if let Some(m) = &cfg.fixed_model {
        return Ok(Fits {
            arhmm: need_ar.then(|| m.clone()),
            hmm: if need_hmm {
                Some(m.without_autoregression()?)
            } else {
                None
            },
        });
    }
    let window = Series::univariate(returns.values[t0 + 1 - cfg.window_days..=t0].to_vec());
    let arhmm = if need_ar {
        Some(em_fit(&window, cfg.regimes, &cfg.em)?.model)
    } else {
        None
    };
    let hmm = if need_hmm {
        Some(em_fit(&window, cfg.regimes, &cfg.em.hmm())?.model)
    } else {
        None
    };
    Ok(Fits { arhmm, hmm })
}

/// Implied volatility at each rebalance, from the contract's quote that day. Days without a
/// usable quote keep the previous volatility.
fn implied_schedule(
    quotes: &[OptionQuote],
    contract_mids: &HashMap<ContractKey, BTreeMap<usize, usize>>,
    job: &Job,
) -> Result<Vec<f64>> {
    let q = &quotes[job.quote];
    let key = (q.kind, q.strike.to_bits(), job.t0 + job.n);
    let by_day = &contract_mids[&key];
    let strike = q.strike * job.scale;
    let mut vols = Vec::with_capacity(job.n);
    let mut last: Option<f64> = None;
    for t in 1..=job.n {
        let day = job.t0 + t - 1;
        if let Some(&k) = by_day.get(&day) {
            let obs = &quotes[k];
            let scaled = OptionQuote {
                strike,
                mid: obs.mid * job.scale,
                maturity_days: job.n - t + 1,
                ..obs.clone()
            };
            match implied_vol(&scaled, job.rate, obs.underlying_close * job.scale) {
                Ok(v) => last = Some(v),
                Err(e) if t == 1 => {
                    return Err(ArhmmError::NoSolution(format!(
                        "inception implied volatility: {e}"
                    )));
                }
                Err(e) => info!("keeping previous volatility on day {day}: {e}"),
            }
        }
        vols.push(last.ok_or_else(|| ArhmmError::NoSolution("no inception quote".into()))?);
    }
    Ok(vols)
}

#[cfg(test)]
mod tests;
