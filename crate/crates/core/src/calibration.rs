//! Fitting copula parameters to a cross smile, daily ATM recalibration, and
//! the month-long backtest of frozen versus recalibrated parameters.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::copulas::{ClassicalCopula, Family};
use crate::crossfx::{CopulaModel, CrossPricer, CrossSetup, PricingOptions};
use crate::error::{invalid, Error, Result};
use crate::expansion::{unscale, ExpansionModel, ScaledCoefficients};
use crate::optimize::{bfgs, brent_root, BfgsOptions};
use crate::smile::{build_curve, Pillar, SmilePillars, DEFAULT_GRID_SIZE};

pub use crate::optimize::{brent_minimize, quasi_newton_minimize, Minimum};

/// Truncation order of the pricing Hermite copula.
pub const HERMITE_ORDER: usize = 6;
/// `|rho|` stays below this during fits.
pub const RHO_BOUND: f64 = 0.999;

// objective is optimized in squared basis points of vol
const OBJECTIVE_SCALE: f64 = 1e8;
// returned when a trial parameter cannot be priced
const PENALTY: f64 = 1.0;

/// Copula family to fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum FitFamily {
    Classical(Family),
    Hermite,
}

impl FitFamily {
    pub const ALL: [FitFamily; 6] = [
        FitFamily::Classical(Family::Clayton),
        FitFamily::Classical(Family::Frank),
        FitFamily::Classical(Family::Gumbel),
        FitFamily::Classical(Family::Plackett),
        FitFamily::Classical(Family::Gauss),
        FitFamily::Hermite,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FitFamily::Classical(f) => f.name(),
            FitFamily::Hermite => "hermite",
        }
    }
}

impl fmt::Display for FitFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FitFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("hermite") {
            Ok(FitFamily::Hermite)
        } else {
            Ok(FitFamily::Classical(s.parse()?))
        }
    }
}

impl From<FitFamily> for String {
    fn from(f: FitFamily) -> String {
        f.name().to_string()
    }
}

impl TryFrom<String> for FitFamily {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Weight correlation and scaled diagonal coefficients `m^_3..m^_6`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HermiteParams {
    pub rho: f64,
    pub m_check: [f64; 4],
}

impl HermiteParams {
    pub fn gaussian(rho: f64) -> Self {
        Self { rho, m_check: [0.0; 4] }
    }

    pub fn model(&self) -> Result<ExpansionModel> {
        unscale(&ScaledCoefficients { values: self.m_check.to_vec() }, HERMITE_ORDER, self.rho)
    }
}

/// Fitted parameters of one family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CopulaParams {
    Classical(ClassicalCopula),
    Hermite(HermiteParams),
}

impl CopulaParams {
    pub fn family(&self) -> FitFamily {
        match self {
            CopulaParams::Classical(c) => FitFamily::Classical(c.family()),
            CopulaParams::Hermite(_) => FitFamily::Hermite,
        }
    }

    pub fn model(&self) -> Result<CopulaModel> {
        Ok(match self {
            CopulaParams::Classical(c) => CopulaModel::Classical(*c),
            CopulaParams::Hermite(h) => CopulaModel::Hermite(h.model()?),
        })
    }

    /// `rho` for Hermite, `theta` otherwise.
    pub fn dependence(&self) -> f64 {
        match self {
            CopulaParams::Classical(c) => c.theta(),
            CopulaParams::Hermite(h) => h.rho,
        }
    }

    pub fn with_dependence(&self, value: f64) -> Result<Self> {
        Ok(match self {
            CopulaParams::Classical(c) => CopulaParams::Classical(ClassicalCopula::new(c.family(), value)?),
            CopulaParams::Hermite(h) => CopulaParams::Hermite(HermiteParams { rho: value, ..*h }),
        })
    }
}

/// Unbounded coordinate `s` for the dependence parameter of each family.
fn to_free(family: FitFamily, theta: f64) -> f64 {
    match family {
        FitFamily::Classical(Family::Clayton | Family::Plackett) => theta.ln(),
        FitFamily::Classical(Family::Gumbel) => (theta - 1.0).max(1e-300).ln(),
        FitFamily::Classical(Family::Frank) => theta,
        FitFamily::Classical(Family::Gauss) | FitFamily::Hermite => 2.0 * (theta / RHO_BOUND).atanh(),
    }
}

fn from_free(family: FitFamily, s: f64) -> f64 {
    match family {
        FitFamily::Classical(Family::Clayton) => s.exp().clamp(1e-4, 30.0),
        FitFamily::Classical(Family::Plackett) => s.exp().clamp(1e-4, 100.0),
        FitFamily::Classical(Family::Gumbel) => (1.0 + s.exp()).min(30.0),
        FitFamily::Classical(Family::Frank) => {
            let t = s.clamp(-50.0, 50.0);
            if t.abs() < 1e-6 { 1e-6f64.copysign(t) } else { t }
        }
        FitFamily::Classical(Family::Gauss) | FitFamily::Hermite => RHO_BOUND * (0.5 * s).tanh(),
    }
}

fn free_range(family: FitFamily) -> (f64, f64) {
    match family {
        FitFamily::Classical(Family::Clayton) => (1e-4f64.ln(), 30f64.ln()),
        FitFamily::Classical(Family::Plackett) => (1e-4f64.ln(), 100f64.ln()),
        FitFamily::Classical(Family::Gumbel) => (-30.0, 29f64.ln()),
        FitFamily::Classical(Family::Frank) => (-50.0, 50.0),
        FitFamily::Classical(Family::Gauss) | FitFamily::Hermite => (-14.0, 14.0),
    }
}

/// Outcome of a fit; `residuals` are model minus target vols.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationResult {
    pub params: CopulaParams,
    pub objective: f64,
    pub residuals: Vec<f64>,
    pub model: SmilePillars,
    pub iterations: usize,
    pub converged: bool,
}

impl CalibrationResult {
    fn new(params: CopulaParams, model: SmilePillars, residuals: Vec<f64>, iterations: usize, converged: bool) -> Self {
        let objective = mean_square(&residuals);
        Self { params, objective, residuals, model, iterations, converged }
    }

    pub fn rmse(&self) -> f64 {
        self.objective.sqrt()
    }
}

pub fn mean_square(r: &[f64]) -> f64 {
    if r.is_empty() {
        return 0.0;
    }
    r.iter().map(|e| e * e).sum::<f64>() / r.len() as f64
}

/// `sqrt(mean((model - target)^2))` over the five pillars.
pub fn smile_rmse(model: &SmilePillars, target: &SmilePillars) -> f64 {
    mean_square(&pillar_errors(model, target)).sqrt()
}

pub fn pillar_errors(model: &SmilePillars, target: &SmilePillars) -> Vec<f64> {
    Pillar::ALL.iter().map(|&p| model.vol(p) - target.vol(p)).collect()
}

/// Setup pricing with the curves of two straight-pair quotes; the copula is a placeholder.
pub fn setup_from_pillars(xz: &SmilePillars, yz: &SmilePillars, options: PricingOptions) -> Result<CrossSetup> {
    let placeholder = CopulaModel::Classical(ClassicalCopula::new(Family::Gauss, 0.0)?);
    let setup = CrossSetup::new(build_curve(xz, DEFAULT_GRID_SIZE)?, build_curve(yz, DEFAULT_GRID_SIZE)?, placeholder)?;
    Ok(setup.with_options(options))
}

/// Cross pillars under `params`.
pub fn model_smile(setup: &CrossSetup, params: &CopulaParams) -> Result<SmilePillars> {
    CrossPricer::new(&setup.with_copula(params.model()?))?.smile_pillars()
}

/// Cross ATM vol under `params`.
pub fn model_atm(setup: &CrossSetup, params: &CopulaParams) -> Result<f64> {
    let pricer = CrossPricer::new(&setup.with_copula(params.model()?))?;
    let start = pricer.implied_vol(pricer.numeric_cross_forward())?;
    Ok(pricer.pillar(Pillar::Atm, start)?.0)
}

fn objective_of(setup: &CrossSetup, target: &SmilePillars, params: &CopulaParams) -> f64 {
    match model_smile(setup, params) {
        Ok(m) => {
            let v = mean_square(&pillar_errors(&m, target));
            if v.is_finite() { v } else { PENALTY }
        }
        Err(e) => {
            log::debug!("objective penalized at {params:?}: {e}");
            PENALTY
        }
    }
}

fn finish(setup: &CrossSetup, target: &SmilePillars, params: CopulaParams, iterations: usize, converged: bool) -> Result<CalibrationResult> {
    let model = model_smile(setup, &params)?;
    let residuals = pillar_errors(&model, target);
    Ok(CalibrationResult::new(params, model, residuals, iterations, converged))
}

fn classical_brackets(family: Family) -> Vec<(f64, f64)> {
    match family {
        Family::Clayton => vec![(1e-4, 30.0)],
        Family::Frank => vec![(-50.0, -1e-6), (1e-6, 50.0)],
        Family::Gumbel => vec![(1.0, 30.0)],
        Family::Plackett => vec![(1e-4, 100.0)],
        Family::Gauss => vec![(-RHO_BOUND, RHO_BOUND)],
    }
}

/// Mean squared vol error of `params` against `target`.
pub fn calibration_objective(setup: &CrossSetup, target: &SmilePillars, params: &CopulaParams) -> f64 {
    objective_of(setup, target, params)
}

/// Least-squares fit of `family` to the five target pillars, using the curves and options of `setup`.
pub fn calibrate_smile(target: &SmilePillars, setup: &CrossSetup, family: FitFamily) -> Result<CalibrationResult> {
    target.validate()?;
    match family {
        FitFamily::Classical(f) => calibrate_classical(target, setup, f),
        FitFamily::Hermite => {
            let gauss = calibrate_classical(target, setup, Family::Gauss)?;
            calibrate_hermite_from(target, setup, HermiteParams::gaussian(gauss.params.dependence()))
        }
    }
}

fn calibrate_classical(target: &SmilePillars, setup: &CrossSetup, family: Family) -> Result<CalibrationResult> {
    let mut best: Option<(f64, f64)> = None;
    let mut evaluations = 0;
    for (lo, hi) in classical_brackets(family) {
        let f = |theta: f64| {
            evaluations += 1;
            match ClassicalCopula::new(family, theta) {
                Ok(c) => OBJECTIVE_SCALE * objective_of(setup, target, &CopulaParams::Classical(c)),
                Err(_) => OBJECTIVE_SCALE * PENALTY,
            }
        };
        let (x, fx) = brent_minimize(f, lo, hi, 1e-9)?;
        if best.is_none_or(|(_, fb)| fx < fb) {
            best = Some((x, fx));
        }
    }
    let (theta, _) = best.expect("at least one bracket");
    let params = CopulaParams::Classical(ClassicalCopula::new(family, theta)?);
    finish(setup, target, params, evaluations, true)
}

/// BFGS over `(rho, m^_3..m^_6)` from `start`, with `rho` mapped through a logistic.
pub fn calibrate_hermite_from(target: &SmilePillars, setup: &CrossSetup, start: HermiteParams) -> Result<CalibrationResult> {
    if !(start.rho.abs() < RHO_BOUND) {
        return Err(invalid("rho", start.rho, "start must lie inside the fit bound"));
    }
    let decode = |u: &[f64]| HermiteParams {
        rho: from_free(FitFamily::Hermite, u[0]),
        m_check: [u[1], u[2], u[3], u[4]],
    };
    let f = |u: &[f64]| OBJECTIVE_SCALE * objective_of(setup, target, &CopulaParams::Hermite(decode(u)));
    let mut u0 = vec![to_free(FitFamily::Hermite, start.rho)];
    u0.extend(start.m_check);
    let opts = BfgsOptions { gtol: 1e-6, ftol: 1e-12, max_iter: 200, fd_step: 1e-5 };
    let min = bfgs(f, &u0, opts)?;
    finish(setup, target, CopulaParams::Hermite(decode(&min.x)), min.iterations, min.converged)
}

/// Re-solves the dependence parameter (`rho` or `theta`) so the cross ATM equals
/// `atm_target` under the curves of `setup`, holding everything else fixed.
pub fn recalibrate_rho_to_atm(prev: &CalibrationResult, setup: &CrossSetup, atm_target: f64) -> Result<CalibrationResult> {
    if !(atm_target > 0.0 && atm_target.is_finite()) {
        return Err(invalid("atm_target", atm_target, "must be positive"));
    }
    let family = prev.params.family();
    let base = prev.params;
    let mut evaluations = 0;
    let mut resid = |s: f64| -> Option<f64> {
        evaluations += 1;
        let p = base.with_dependence(from_free(family, s)).ok()?;
        model_atm(setup, &p).ok().map(|a| a - atm_target)
    };
    let s0 = to_free(family, base.dependence());
    let r0 = resid(s0).ok_or_else(|| Error::NonConvergence("ATM at the previous parameters".into()))?;
    let (lo, hi) = if r0 == 0.0 {
        (s0, s0)
    } else {
        expand_bracket(&mut resid, s0, r0, family)?
    };
    let s = if lo == hi {
        lo
    } else {
        brent_root(|s| resid(s).unwrap_or(f64::NAN), lo, hi, 1e-12, 200)?
    };
    let params = base.with_dependence(from_free(family, s))?;
    let model = model_smile(setup, &params)?;
    let residuals = vec![model.atm - atm_target];
    Ok(CalibrationResult::new(params, model, residuals, evaluations, true))
}

// Walks outward from s0 in doubling steps until the ATM residual changes sign.
fn expand_bracket<F: FnMut(f64) -> Option<f64>>(resid: &mut F, s0: f64, r0: f64, family: FitFamily) -> Result<(f64, f64)> {
    let (s_min, s_max) = free_range(family);
    let out_of_range = || Error::InvalidInput("target ATM is outside the range attainable by the copula parameter".into());
    for dir in [1.0, -1.0] {
        let (mut a, mut ra) = (s0, r0);
        let mut step = 0.1;
        loop {
            let b = (a + dir * step).clamp(s_min, s_max);
            if b == a {
                break;
            }
            let Some(rb) = resid(b) else { break };
            if rb == 0.0 || rb.signum() != ra.signum() {
                return Ok(if a < b { (a, b) } else { (b, a) });
            }
            // moving away from the root: try the other direction
            if rb.abs() > ra.abs() && a == s0 {
                break;
            }
            a = b;
            ra = rb;
            step *= 2.0;
        }
    }
    Err(out_of_range())
}

/// Protocol of a monthly backtest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Setting {
    /// Month-end fit, dependence parameter recalibrated daily to the cross ATM.
    C,
    /// Month-end fit frozen through the month.
    D,
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Setting::C => "c",
            Setting::D => "d",
        })
    }
}

impl FromStr for Setting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "c" => Ok(Setting::C),
            "d" => Ok(Setting::D),
            other => Err(Error::InvalidInput(format!("unknown backtest setting '{other}'"))),
        }
    }
}

/// Straight-pair quotes and the realised cross smile on one date; `yz` is quoted as `Y` in `Z`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketDay {
    pub date: String,
    pub xz: Option<SmilePillars>,
    pub yz: Option<SmilePillars>,
    pub cross: Option<SmilePillars>,
}

impl MarketDay {
    fn complete(&self) -> Option<(&SmilePillars, &SmilePillars, &SmilePillars)> {
        Some((self.xz.as_ref()?, self.yz.as_ref()?, self.cross.as_ref()?))
    }
}

/// Month-end data for the fit and the business days of the following month.
#[derive(Debug, Clone, PartialEq)]
pub struct BacktestMonth {
    pub tenor: String,
    pub month_end: MarketDay,
    pub days: Vec<MarketDay>,
}

/// One day of a backtest; errors are model minus realised vols.
#[derive(Debug, Clone, PartialEq)]
pub struct BacktestRow {
    pub date: String,
    pub setting: Setting,
    pub family: FitFamily,
    pub tenor: String,
    pub rmse: f64,
    pub errors: [f64; 5],
}

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestReport {
    pub setting: Setting,
    pub family: FitFamily,
    pub tenor: String,
    pub rows: Vec<BacktestRow>,
}

pub const BACKTEST_HEADER: [&str; 10] =
    ["date", "setting", "family", "tenor", "rmse", "atm_err", "c25_err", "p25_err", "c10_err", "p10_err"];

/// Month-end fit of `family` to the month-end cross smile.
pub fn month_end_fit(month: &BacktestMonth, family: FitFamily, options: PricingOptions) -> Result<CalibrationResult> {
    let (xz, yz, cross) = month
        .month_end
        .complete()
        .ok_or_else(|| Error::MissingData(format!("month-end quotes for {}", month.month_end.date)))?;
    let setup = setup_from_pillars(xz, yz, options)?;
    calibrate_smile(cross, &setup, family)
}

/// Calibrates at month end, then runs the month under `setting`.
pub fn backtest(month: &BacktestMonth, setting: Setting, family: FitFamily, options: PricingOptions) -> Result<BacktestReport> {
    let fit = month_end_fit(month, family, options)?;
    backtest_from_fit(month, setting, &fit, options)
}

/// Runs the month under `setting` from an existing month-end fit. Days with
/// missing quotes or failed pricing are skipped and logged.
pub fn backtest_from_fit(
    month: &BacktestMonth,
    setting: Setting,
    fit: &CalibrationResult,
    options: PricingOptions,
) -> Result<BacktestReport> {
    let family = fit.params.family();
    let run_day = |day: &MarketDay| -> Option<BacktestRow> {
        let Some((xz, yz, cross)) = day.complete() else {
            log::warn!("{}: missing quotes, day skipped", day.date);
            return None;
        };
        let priced = setup_from_pillars(xz, yz, options).and_then(|setup| match setting {
            Setting::C => recalibrate_rho_to_atm(fit, &setup, cross.atm).map(|r| r.model),
            Setting::D => model_smile(&setup, &fit.params),
        });
        match priced {
            Ok(model) => {
                let e = pillar_errors(&model, cross);
                Some(BacktestRow {
                    date: day.date.clone(),
                    setting,
                    family,
                    tenor: month.tenor.clone(),
                    rmse: mean_square(&e).sqrt(),
                    errors: [e[0], e[1], e[2], e[3], e[4]],
                })
            }
            Err(e) => {
                log::warn!("{}: {e}, day skipped", day.date);
                None
            }
        }
    };
    let rows: Vec<BacktestRow> = month.days.par_iter().map(run_day).collect::<Vec<_>>().into_iter().flatten().collect();
    Ok(BacktestReport { setting, family, tenor: month.tenor.clone(), rows })
}

pub fn write_backtest_csv(path: &Path, rows: &[BacktestRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(BACKTEST_HEADER)?;
    for r in rows {
        let mut rec = vec![r.date.clone(), r.setting.to_string(), r.family.to_string(), r.tenor.clone(), format!("{}", r.rmse)];
        rec.extend(r.errors.iter().map(|e| format!("{e}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_backtest_csv(path: &Path) -> Result<Vec<BacktestRow>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    if rdr.headers()?.iter().ne(BACKTEST_HEADER) {
        return Err(Error::Parse { row: 1, message: format!("expected header {}", BACKTEST_HEADER.join(",")) });
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| Error::Parse { row, message: e.to_string() })?;
        let parse_err = |e: Error| Error::Parse { row, message: e.to_string() };
        let num = |k: usize| -> Result<f64> {
            rec[k].parse::<f64>().map_err(|_| Error::Parse {
                row,
                message: format!("column '{}' is not a number: '{}'", BACKTEST_HEADER[k], &rec[k]),
            })
        };
        out.push(BacktestRow {
            date: rec[0].to_string(),
            setting: rec[1].parse().map_err(parse_err)?,
            family: rec[2].parse().map_err(parse_err)?,
            tenor: rec[3].to_string(),
            rmse: num(4)?,
            errors: [num(5)?, num(6)?, num(7)?, num(8)?, num(9)?],
        });
    }
    Ok(out)
}

/// Fitted parameters in the layout of a parameter table row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub date: String,
    pub tenor: String,
    pub family: FitFamily,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m3: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m4: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m5: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m6: Option<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl FitRecord {
    pub fn new(date: &str, tenor: &str, fit: &CalibrationResult) -> Self {
        let mut r = FitRecord {
            date: date.to_string(),
            tenor: tenor.to_string(),
            family: fit.params.family(),
            theta: None,
            rho: None,
            m3: None,
            m4: None,
            m5: None,
            m6: None,
            objective: fit.objective,
            iterations: fit.iterations,
            converged: fit.converged,
        };
        match fit.params {
            CopulaParams::Classical(c) => r.theta = Some(c.theta()),
            CopulaParams::Hermite(h) => {
                r.rho = Some(h.rho);
                [r.m3, r.m4, r.m5, r.m6] = h.m_check.map(Some);
            }
        }
        r
    }

    pub fn params(&self) -> Result<CopulaParams> {
        let need = |v: Option<f64>, name: &str| {
            v.ok_or_else(|| Error::InvalidInput(format!("{} record without '{name}'", self.family)))
        };
        Ok(match self.family {
            FitFamily::Classical(f) => CopulaParams::Classical(ClassicalCopula::new(f, need(self.theta, "theta")?)?),
            FitFamily::Hermite => CopulaParams::Hermite(HermiteParams {
                rho: need(self.rho, "rho")?,
                m_check: [
                    self.m3.unwrap_or(0.0),
                    self.m4.unwrap_or(0.0),
                    self.m5.unwrap_or(0.0),
                    self.m6.unwrap_or(0.0),
                ],
            }),
        })
    }
}

pub fn write_fit_json(path: &Path, records: &[FitRecord]) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(records)? + "\n")?;
    Ok(())
}

pub fn read_fit_json(path: &Path) -> Result<Vec<FitRecord>> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

/// A parameter that a sweep shifts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SweepParam {
    /// `rho` of a Hermite copula or `theta` of a classical one.
    Dependence,
    /// `m^_i` for `i` in `3..=6`.
    MCheck(usize),
}

impl SweepParam {
    pub const HERMITE: [SweepParam; 5] =
        [SweepParam::Dependence, SweepParam::MCheck(3), SweepParam::MCheck(4), SweepParam::MCheck(5), SweepParam::MCheck(6)];

    pub fn name(self, family: FitFamily) -> String {
        match (self, family) {
            (SweepParam::Dependence, FitFamily::Hermite) => "rho".into(),
            (SweepParam::Dependence, _) => "theta".into(),
            (SweepParam::MCheck(i), _) => format!("m{i}"),
        }
    }

    pub fn get(self, params: &CopulaParams) -> Result<f64> {
        match (self, params) {
            (SweepParam::Dependence, p) => Ok(p.dependence()),
            (SweepParam::MCheck(i), CopulaParams::Hermite(h)) if (3..=6).contains(&i) => Ok(h.m_check[i - 3]),
            _ => Err(Error::InvalidInput(format!("parameter {self:?} does not exist for {}", params.family()))),
        }
    }

    pub fn set(self, params: &CopulaParams, value: f64) -> Result<CopulaParams> {
        self.get(params)?;
        match (self, params) {
            (SweepParam::MCheck(i), CopulaParams::Hermite(h)) => {
                let mut h = *h;
                h.m_check[i - 3] = value;
                Ok(CopulaParams::Hermite(h))
            }
            _ => params.with_dependence(value),
        }
    }
}

/// Cross ATM vol with one parameter set to each of `values`.
pub fn atm_sweep(setup: &CrossSetup, params: &CopulaParams, which: SweepParam, values: &[f64]) -> Result<Vec<(f64, f64)>> {
    values.iter().map(|&v| Ok((v, model_atm(setup, &which.set(params, v)?)?))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat_setup() -> CrossSetup {
        let xz = SmilePillars::flat(1.0, 1.15, 0.99, 0.995, 0.10);
        let yz = SmilePillars::flat(1.0, 0.0088, 0.99, 1.0, 0.12);
        setup_from_pillars(&xz, &yz, PricingOptions::default()).unwrap()
    }

    fn skewed_setup() -> CrossSetup {
        let xz = SmilePillars { tenor: 1.0, forward: 1.16, df_dom: 0.99, df_for: 1.005, atm: 0.062, c25: 0.064, p25: 0.067, c10: 0.069, p10: 0.076 };
        let usdjpy = SmilePillars { tenor: 1.0, forward: 112.0, df_dom: 1.0, df_for: 0.99, atm: 0.075, c25: 0.076, p25: 0.083, c10: 0.081, p10: 0.097 };
        setup_from_pillars(&xz, &crate::smile::invert_pair(&usdjpy), PricingOptions::default()).unwrap()
    }

    #[test]
    fn rmse_by_hand() {
        let target = SmilePillars::flat(1.0, 1.0, 1.0, 1.0, 0.1);
        let mut model = target;
        for (p, d) in Pillar::ALL.iter().zip([0.01, -0.02, 0.0, 0.03, 0.04]) {
            model.set_vol(*p, 0.1 + d);
        }
        let expected = ((1e-4 + 4e-4 + 0.0 + 9e-4 + 16e-4) / 5.0f64).sqrt();
        assert!((smile_rmse(&model, &target) - expected).abs() < 1e-15);
        assert_eq!(smile_rmse(&target, &target), 0.0);
    }

    #[test]
    fn gauss_round_trip() {
        let setup = flat_setup();
        let truth = CopulaParams::Classical(ClassicalCopula::new(Family::Gauss, 0.42).unwrap());
        let target = model_smile(&setup, &truth).unwrap();
        let fit = calibrate_smile(&target, &setup, FitFamily::Classical(Family::Gauss)).unwrap();
        assert!((fit.params.dependence() - 0.42).abs() < 1e-3, "{:?}", fit.params);
        assert!(fit.objective < 1e-10, "{}", fit.objective);
        assert_eq!(fit.objective, mean_square(&fit.residuals));
    }

    #[test]
    fn atm_decreases_in_rho_for_flat_marginals() {
        let setup = flat_setup();
        let base = CopulaParams::Hermite(HermiteParams::gaussian(0.0));
        let rhos: Vec<f64> = (-9..=9).map(|k| k as f64 * 0.1).collect();
        let sweep = atm_sweep(&setup, &base, SweepParam::Dependence, &rhos).unwrap();
        for w in sweep.windows(2) {
            assert!(w[1].1 < w[0].1, "{w:?}");
        }
        for (rho, atm) in sweep {
            let closed = (0.01f64 + 0.0144 - 2.0 * rho * 0.012).sqrt();
            assert!((atm - closed).abs() < 1e-3, "rho {rho}: {atm} vs {closed}");
        }
    }

    #[test]
    fn recalibration_fixed_point_and_direction() {
        let setup = skewed_setup();
        let params = CopulaParams::Hermite(HermiteParams { rho: 0.3661, m_check: [-0.3535, 0.9641, 0.0827, -2.0537] });
        let model = model_smile(&setup, &params).unwrap();
        let prev = CalibrationResult::new(params, model, vec![0.0; 5], 0, true);
        let same = recalibrate_rho_to_atm(&prev, &setup, model.atm).unwrap();
        assert!((same.params.dependence() - 0.3661).abs() < 1e-6, "{:?}", same.params);
        let higher = recalibrate_rho_to_atm(&prev, &setup, model.atm + 0.005).unwrap();
        assert!(higher.params.dependence() < 0.3661);
        assert!(higher.residuals[0].abs() < 1e-8, "{:?}", higher.residuals);
        let lower = recalibrate_rho_to_atm(&prev, &setup, model.atm - 0.005).unwrap();
        assert!(lower.params.dependence() > 0.3661);
    }

    #[test]
    fn recalibration_rejects_unattainable_atm() {
        let setup = flat_setup();
        let params = CopulaParams::Classical(ClassicalCopula::new(Family::Gauss, 0.3).unwrap());
        let model = model_smile(&setup, &params).unwrap();
        let prev = CalibrationResult::new(params, model, vec![0.0; 5], 0, true);
        assert!(recalibrate_rho_to_atm(&prev, &setup, 0.5).is_err());
    }

    #[test]
    fn classical_recalibration_moves_theta() {
        let setup = flat_setup();
        for family in [Family::Clayton, Family::Frank, Family::Gumbel, Family::Plackett] {
            let theta = match family {
                Family::Clayton => 1.0,
                Family::Frank => 3.0,
                Family::Gumbel => 1.5,
                _ => 4.0,
            };
            let params = CopulaParams::Classical(ClassicalCopula::new(family, theta).unwrap());
            let model = model_smile(&setup, &params).unwrap();
            let prev = CalibrationResult::new(params, model, vec![0.0; 5], 0, true);
            let r = recalibrate_rho_to_atm(&prev, &setup, model.atm - 0.002).unwrap();
            assert!(r.params.dependence() > theta, "{family}: {:?}", r.params);
            assert!(r.residuals[0].abs() < 1e-8);
        }
    }

    #[test]
    fn fit_records_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fit.json");
        let h = CopulaParams::Hermite(HermiteParams { rho: 0.3661, m_check: [-0.3535, 0.9641, 0.0827, -2.0537] });
        let c = CopulaParams::Classical(ClassicalCopula::new(Family::Frank, 2.6733).unwrap());
        let model = SmilePillars::flat(1.0, 130.0, 1.0, 1.0, 0.08);
        let recs: Vec<FitRecord> = [h, c]
            .iter()
            .map(|p| FitRecord::new("2021-10-29", "1Y", &CalibrationResult::new(*p, model, vec![1e-4; 5], 7, true)))
            .collect();
        write_fit_json(&path, &recs).unwrap();
        let back = read_fit_json(&path).unwrap();
        assert_eq!(back, recs);
        assert_eq!(back[0].params().unwrap(), h);
        assert_eq!(back[1].params().unwrap(), c);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("\"family\": \"hermite\"") && text.contains("\"m6\": -2.0537"), "{text}");
    }

    #[test]
    fn backtest_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bt.csv");
        let rows = vec![BacktestRow {
            date: "2021-11-01".into(),
            setting: Setting::C,
            family: FitFamily::Hermite,
            tenor: "1Y".into(),
            rmse: 0.0012,
            errors: [1e-4, -2e-4, 3e-4, 0.0, 0.1 + 0.2],
        }];
        write_backtest_csv(&path, &rows).unwrap();
        assert_eq!(read_backtest_csv(&path).unwrap(), rows);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("date,setting,family,tenor,rmse,atm_err,c25_err,p25_err,c10_err,p10_err\n"));
    }

    #[test]
    fn sweep_parameters_resolve_by_family() {
        let h = CopulaParams::Hermite(HermiteParams::gaussian(0.2));
        let c = CopulaParams::Classical(ClassicalCopula::new(Family::Gumbel, 1.2).unwrap());
        assert_eq!(SweepParam::MCheck(4).set(&h, 0.5).unwrap(), CopulaParams::Hermite(HermiteParams { rho: 0.2, m_check: [0.0, 0.5, 0.0, 0.0] }));
        assert!(SweepParam::MCheck(4).get(&c).is_err());
        assert!(SweepParam::MCheck(7).get(&h).is_err());
        assert_eq!(SweepParam::Dependence.name(FitFamily::Hermite), "rho");
        assert_eq!(SweepParam::Dependence.name(FitFamily::Classical(Family::Gumbel)), "theta");
        for f in FitFamily::ALL {
            assert_eq!(f.to_string().parse::<FitFamily>().unwrap(), f);
        }
        assert_eq!("Placett".parse::<FitFamily>().unwrap(), FitFamily::Classical(Family::Plackett));
    }
}
