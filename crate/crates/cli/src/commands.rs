//! Command drivers. Each reads its inputs, runs the library and writes tidy CSV/JSON.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use hermicop::calibration::{
    backtest_from_fit, calibrate_smile, model_atm, month_end_fit, read_fit_json, setup_from_pillars, write_backtest_csv,
    write_fit_json, BacktestMonth, BacktestRow, FitRecord, MarketDay, Setting, SweepParam, RHO_BOUND,
};
use hermicop::copulas::spearman_to_theta;
use hermicop::correction::{correct_expansion, correct_density, moment_constraints};
use hermicop::expansion::{estimate_coefficients, estimate_coefficients_with, evaluate_expansion};
use hermicop::smile::{write_pillar_csv, PillarRecord};
use hermicop::{
    CartesianGrid, ClassicalCopula, CopulaParams, CrossPricer, DykstraReport, Family, FitFamily, GridDensity,
    HermiteParams, Mixing, Pillar, PricingOptions, ValueKind,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{
    dykstra_options, families, input_error, market_spec, output_dir, BacktestArgs, CalibrateArgs, CopulaArgs,
    CorrectArgs, FitDensityArgs, PriceArgs, RunConfig, SweepArgs,
};
use crate::market::Quotes;

const MOMENT_ORDER: u32 = 8;

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))
}

#[derive(Serialize)]
struct CaseSummary {
    rho: f64,
    min_uncorrected: f64,
    min_corrected: f64,
    mass_uncorrected: f64,
    mass_corrected: f64,
    correction: DykstraReport,
}

#[derive(Serialize)]
struct DensitySummary {
    family: Family,
    spearman: f64,
    theta: f64,
    case_a: CaseSummary,
    case_b: CaseSummary,
}

pub fn fit_density(a: FitDensityArgs) -> Result<()> {
    let cfg = RunConfig::load(a.common.config.as_deref())?;
    let out = output_dir(&a.common, &cfg)?;
    let bound = a.grid.bound.or(cfg.grid.bound).unwrap_or(6.0);
    let sections = a.grid.sections.or(cfg.grid.sections).unwrap_or(200);
    let n_max = a.n_max.or(cfg.n_max).unwrap_or(4);
    let spearman = a.spearman.or(cfg.spearman).unwrap_or(0.6);
    let opts = dykstra_options(a.grid.dykstra_tol, a.grid.max_sweeps, &cfg)?;
    let fams = families(&a.families, &cfg, &[FitFamily::Classical(Family::Clayton)])?;
    let grid = CartesianGrid::uniform(2, -bound, bound, sections)?;

    for fam in fams {
        let FitFamily::Classical(family) = fam else {
            return Err(input_error("fit-density approximates classical families only"));
        };
        let theta = spearman_to_theta(family, spearman)?;
        let copula = ClassicalCopula::new(family, theta)?;
        let values = grid.map_nodes(|x| copula.joint_density_normal(x[0], x[1]));
        let target = GridDensity::new(grid.clone(), values, 0.0, ValueKind::Absolute)?;
        let rho_b = target.moment(&[1, 1]) / target.total_mass();
        let name = family.name();
        target.save(&out.join(format!("{name}_target.csv")))?;

        let mut stages: Vec<(String, GridDensity)> = vec![("target".into(), target.clone())];
        let mut cases = Vec::new();
        for (case, model) in [
            ("a", estimate_coefficients_with(&target, Mixing::cholesky(0.0)?, n_max)?),
            ("b", estimate_coefficients(&target, rho_b, n_max)?),
        ] {
            let raw = evaluate_expansion(&model, &grid)?;
            let (corrected, report) = correct_expansion(&model, &grid, &opts)?;
            if !report.converged {
                log::warn!("{name} case ({case}): correction stopped after {} sweeps", report.iterations);
            }
            let raw_abs = raw.to_kind(ValueKind::Absolute);
            let corr_abs = corrected.to_kind(ValueKind::Absolute);
            raw_abs.save(&out.join(format!("{name}_{case}_uncorrected.csv")))?;
            corr_abs.save(&out.join(format!("{name}_{case}_corrected.csv")))?;
            cases.push(CaseSummary {
                rho: model.rho(),
                min_uncorrected: raw_abs.min_value(),
                min_corrected: corr_abs.min_value(),
                mass_uncorrected: raw_abs.total_mass(),
                mass_corrected: corr_abs.total_mass(),
                correction: report,
            });
            stages.push((format!("{case}_uncorrected"), raw_abs));
            stages.push((format!("{case}_corrected"), corr_abs));
        }

        let mut w = csv::Writer::from_path(out.join(format!("{name}_moments.csv")))?;
        w.write_record(["stage", "p1", "p2", "moment"])?;
        for (stage, d) in &stages {
            for total in 0..=MOMENT_ORDER {
                for p1 in (0..=total).rev() {
                    let p2 = total - p1;
                    let m = d.moment(&[p1, p2]);
                    w.write_record([stage.clone(), p1.to_string(), p2.to_string(), format!("{m}")])?;
                }
            }
        }
        w.flush()?;
        let case_b = cases.pop().expect("two cases");
        let case_a = cases.pop().expect("two cases");
        println!(
            "{name}: theta {theta:.5}, E[x1 x2] {:.4}; case (a) min {:.3e} -> {:.3e}; case (b) min {:.3e} -> {:.3e}",
            rho_b, case_a.min_uncorrected, case_a.min_corrected, case_b.min_uncorrected, case_b.min_corrected
        );
        write_json(&out.join(format!("{name}_summary.json")), &DensitySummary { family, spearman, theta, case_a, case_b })?;
    }
    Ok(())
}

pub fn correct(a: CorrectArgs) -> Result<()> {
    let cfg = RunConfig::load(a.common.config.as_deref())?;
    let out = output_dir(&a.common, &cfg)?;
    let input = a.input.clone().or(cfg.input.clone()).ok_or_else(|| input_error("no input density (--input)"))?;
    let opts = dykstra_options(a.dykstra_tol, a.max_sweeps, &cfg)?;
    let density = GridDensity::load(&input)?;
    let extra = match a.n_max.or(cfg.n_max) {
        Some(n) => {
            let model = estimate_coefficients(&density, density.rho, n)?;
            moment_constraints(&model, &density.grid)
        }
        None => Vec::new(),
    };
    let (corrected, report) = correct_density(&density, &extra, &opts)?;
    let stem = input.file_stem().and_then(|s| s.to_str()).unwrap_or("density");
    corrected.save(&out.join(format!("{stem}_corrected.csv")))?;
    write_json(&out.join(format!("{stem}_correction.json")), &report)?;
    println!(
        "corrected {}: min {:.3e} -> {:.3e}, mass {:.10}, {} sweeps, converged {}",
        input.display(),
        density.min_value(),
        corrected.min_value(),
        corrected.total_mass(),
        report.iterations,
        report.converged
    );
    Ok(())
}

pub fn calibrate(a: CalibrateArgs) -> Result<()> {
    let cfg = RunConfig::load(a.common.config.as_deref())?;
    let out = output_dir(&a.common, &cfg)?;
    let quotes = Quotes::load(&market_spec(&a.market, &cfg)?)?;
    let date = quotes.single_date(a.date.clone().or(cfg.date.clone()))?;
    let fams = families(&a.families, &cfg, &FitFamily::ALL)?;
    let (xz, yz) = quotes.require_straights(&date)?;
    let target = quotes.require_cross(&date)?;
    let setup = setup_from_pillars(&xz, &yz, PricingOptions::default())?;

    let fits: Vec<_> = fams.par_iter().map(|&f| calibrate_smile(&target, &setup, f)).collect::<hermicop::Result<_>>()?;
    let records: Vec<FitRecord> = fits.iter().map(|f| FitRecord::new(&date, quotes.tenor(), f)).collect();
    write_fit_json(&out.join("fit.json"), &records)?;

    let model_rows: Vec<PillarRecord> = fits
        .iter()
        .map(|f| PillarRecord {
            date: date.clone(),
            pair: format!("{}/{}", quotes.cross(), f.params.family()),
            tenor: quotes.tenor().to_string(),
            pillars: f.model,
        })
        .collect();
    write_pillar_csv(&out.join("model_pillars.csv"), &model_rows)?;

    let mut w = csv::Writer::from_path(out.join("calibrated_smiles.csv"))?;
    w.write_record(["family", "pillar", "market", "model", "error"])?;
    for f in &fits {
        for (k, p) in Pillar::ALL.iter().enumerate() {
            let fam = f.params.family().to_string();
            let row = [fam, p.name().to_string(), format!("{}", target.vol(*p)), format!("{}", f.model.vol(*p)), format!("{}", f.residuals[k])];
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    for f in &fits {
        if !f.converged {
            log::warn!("{}: optimizer stopped before convergence", f.params.family());
        }
        println!("{:<9} rmse {:.6} vol pts  {:?}", f.params.family().name(), 100.0 * f.rmse(), f.params);
    }
    Ok(())
}

pub fn backtest(a: BacktestArgs) -> Result<()> {
    let cfg = RunConfig::load(a.common.config.as_deref())?;
    let out = output_dir(&a.common, &cfg)?;
    let quotes = Quotes::load(&market_spec(&a.market, &cfg)?)?;
    let fams = families(&a.families, &cfg, &[FitFamily::Hermite])?;
    let settings: Vec<Setting> = match a.settings.as_ref().or(cfg.settings.as_ref()) {
        None => vec![Setting::C, Setting::D],
        Some(s) => s.iter().map(|x| x.parse::<Setting>().map_err(|e| input_error(e.to_string()))).collect::<Result<_>>()?,
    };
    let dates = quotes.dates();
    let month_end = match a.month_end.clone().or(cfg.month_end.clone()) {
        Some(d) => d,
        None => dates.first().cloned().ok_or_else(|| hermicop::Error::MissingData("no dates".into()))?,
    };
    let day = |date: &str| {
        let s = quotes.straights(date);
        MarketDay { date: date.to_string(), xz: s.map(|p| p.0), yz: s.map(|p| p.1), cross: quotes.cross_smile(date) }
    };
    let month = BacktestMonth {
        tenor: quotes.tenor().to_string(),
        month_end: day(&month_end),
        days: dates.iter().filter(|d| d.as_str() > month_end.as_str()).map(|d| day(d)).collect(),
    };
    if month.month_end.cross.is_none() {
        return Err(hermicop::Error::MissingData(format!("month-end {} smile on {month_end}", quotes.cross())).into());
    }
    if month.days.is_empty() {
        return Err(hermicop::Error::MissingData(format!("no business days after {month_end}")).into());
    }

    let opts = PricingOptions::default();
    let fits: Vec<_> = fams.par_iter().map(|&f| month_end_fit(&month, f, opts)).collect::<hermicop::Result<_>>()?;
    let mut rows: Vec<BacktestRow> = Vec::new();
    for fit in &fits {
        for &s in &settings {
            let report = backtest_from_fit(&month, s, fit, opts)?;
            let skipped = month.days.len() - report.rows.len();
            if skipped > 0 {
                log::warn!("{} setting ({s}): {skipped} day(s) skipped", report.family);
            }
            if !report.rows.is_empty() {
                let mean = report.rows.iter().map(|r| r.rmse).sum::<f64>() / report.rows.len() as f64;
                println!("{:<9} ({s}) mean daily rmse {:.4} vol pts over {} days", report.family.name(), 100.0 * mean, report.rows.len());
            }
            rows.extend(report.rows);
        }
    }
    write_backtest_csv(&out.join("backtest.csv"), &rows)?;
    let records: Vec<FitRecord> = fits.iter().map(|f| FitRecord::new(&month_end, quotes.tenor(), f)).collect();
    write_fit_json(&out.join("month_end_fit.json"), &records)?;
    Ok(())
}

fn copula_params(a: &CopulaArgs, cfg: &RunConfig) -> Result<Vec<CopulaParams>> {
    let family = a.family.clone().or(cfg.family.clone());
    if let Some(path) = a.params.clone().or(cfg.params.clone()) {
        let wanted: Option<FitFamily> = family.map(|f| f.parse()).transpose().map_err(|e: hermicop::Error| input_error(e.to_string()))?;
        let all: Vec<CopulaParams> = read_fit_json(&path)?.iter().map(|r| r.params()).collect::<hermicop::Result<_>>()?;
        let chosen: Vec<CopulaParams> = all.into_iter().filter(|p| wanted.is_none_or(|w| p.family() == w)).collect();
        if chosen.is_empty() {
            return Err(input_error(format!("no matching parameter records in {}", path.display())));
        }
        return Ok(chosen);
    }
    let family: FitFamily = family
        .ok_or_else(|| input_error("give --params or --family with its parameters"))?
        .parse()
        .map_err(|e: hermicop::Error| input_error(e.to_string()))?;
    Ok(vec![match family {
        FitFamily::Hermite => {
            let rho = a.rho.or(cfg.rho).ok_or_else(|| input_error("hermite needs --rho"))?;
            let m_check = match &a.m_check {
                Some(v) if v.len() == 4 => [v[0], v[1], v[2], v[3]],
                Some(v) => return Err(input_error(format!("--m-check takes 4 values, got {}", v.len()))),
                None => cfg.m_check.unwrap_or([0.0; 4]),
            };
            CopulaParams::Hermite(HermiteParams { rho, m_check })
        }
        FitFamily::Classical(f) => {
            let theta = a.theta.or(cfg.theta).ok_or_else(|| input_error(format!("{f} needs --theta")))?;
            CopulaParams::Classical(ClassicalCopula::new(f, theta)?)
        }
    }])
}

fn unique_names(params: &[CopulaParams]) -> Vec<String> {
    let mut seen: HashMap<&str, usize> = HashMap::new();
    params
        .iter()
        .map(|p| {
            let name = p.family().name();
            let k = seen.entry(name).or_insert(0);
            *k += 1;
            if *k == 1 { name.to_string() } else { format!("{name}_{k}") }
        })
        .collect()
}

pub fn price(a: PriceArgs) -> Result<()> {
    let cfg = RunConfig::load(a.common.config.as_deref())?;
    let out = output_dir(&a.common, &cfg)?;
    let quotes = Quotes::load(&market_spec(&a.market, &cfg)?)?;
    let date = quotes.single_date(a.date.clone().or(cfg.date.clone()))?;
    let params = copula_params(&a.copula, &cfg)?;
    let n = a.strikes.or(cfg.strikes).unwrap_or(41);
    let width = a.strike_width.or(cfg.strike_width).unwrap_or(3.0);
    if n < 2 || !(width > 0.0) {
        return Err(input_error("need at least 2 strikes and a positive strike width"));
    }
    let (xz, yz) = quotes.require_straights(&date)?;
    let setup = setup_from_pillars(&xz, &yz, PricingOptions::default())?;
    for (p, name) in params.iter().zip(unique_names(&params)) {
        let pricer = CrossPricer::new(&setup.with_copula(p.model()?))?;
        let smile = pricer.smile_pillars()?;
        let record = PillarRecord { date: date.clone(), pair: quotes.cross().to_string(), tenor: quotes.tenor().to_string(), pillars: smile };
        write_pillar_csv(&out.join(format!("cross_pillars_{name}.csv")), &[record])?;

        let fwd = pricer.numeric_cross_forward();
        let sd = smile.atm * setup.tenor().sqrt();
        let mut w = csv::Writer::from_path(out.join(format!("cross_smile_{name}.csv")))?;
        w.write_record(["strike", "log_moneyness", "call", "put", "vol"])?;
        for j in 0..n {
            let k = sd * width * (2.0 * j as f64 / (n - 1) as f64 - 1.0);
            let strike = fwd * k.exp();
            let vol = pricer.implied_vol(strike).unwrap_or_else(|e| {
                log::warn!("{name}: no implied vol at strike {strike}: {e}");
                f64::NAN
            });
            w.write_record([strike, k, pricer.call(strike)?, pricer.put(strike)?, vol].map(|v| format!("{v}")))?;
        }
        w.flush()?;
        println!(
            "{name:<9} F {fwd:.6}  atm {:.4}%  25c {:.4}%  25p {:.4}%  10c {:.4}%  10p {:.4}%  forward error {:.2e}",
            100.0 * smile.atm,
            100.0 * smile.c25,
            100.0 * smile.p25,
            100.0 * smile.c10,
            100.0 * smile.p10,
            pricer.forward_consistency()
        );
    }
    Ok(())
}

pub fn param_sweep(a: SweepArgs) -> Result<()> {
    let cfg = RunConfig::load(a.common.config.as_deref())?;
    let out = output_dir(&a.common, &cfg)?;
    let quotes = Quotes::load(&market_spec(&a.market, &cfg)?)?;
    let date = quotes.single_date(a.date.clone().or(cfg.date.clone()))?;
    let params = copula_params(&a.copula, &cfg)?;
    let points = a.sweep_points.or(cfg.sweep_points).unwrap_or(21);
    let rho_width = a.rho_width.or(cfg.rho_width).unwrap_or(0.2);
    let theta_width = a.theta_width.or(cfg.theta_width).unwrap_or(0.5);
    let m_width = a.m_width.or(cfg.m_width).unwrap_or(1.0);
    if points == 0 || [rho_width, theta_width, m_width].iter().any(|w| !(*w >= 0.0)) {
        return Err(input_error("sweep needs at least one point and non-negative widths"));
    }
    let (xz, yz) = quotes.require_straights(&date)?;
    let setup = setup_from_pillars(&xz, &yz, PricingOptions::default())?;

    let mut w = csv::Writer::from_path(out.join("param_sweep.csv"))?;
    w.write_record(["family", "param", "value", "atm"])?;
    for p in &params {
        let family = p.family();
        let which: Vec<SweepParam> = match family {
            FitFamily::Hermite => SweepParam::HERMITE.to_vec(),
            FitFamily::Classical(_) => vec![SweepParam::Dependence],
        };
        for s in which {
            let base = s.get(p)?;
            let width = match (s, family) {
                (SweepParam::Dependence, FitFamily::Hermite) => rho_width,
                (SweepParam::Dependence, _) => theta_width,
                _ => m_width,
            };
            let values = sweep_values(base, width, points, s, family);
            let rows: Vec<Option<(f64, f64)>> = values
                .par_iter()
                .map(|&v| {
                    let r = s.set(p, v).and_then(|q| model_atm(&setup, &q));
                    match r {
                        Ok(atm) => Some((v, atm)),
                        Err(e) => {
                            log::warn!("{family} {} = {v}: {e}", s.name(family));
                            None
                        }
                    }
                })
                .collect();
            for (v, atm) in rows.into_iter().flatten() {
                w.write_record([family.to_string(), s.name(family), format!("{v}"), format!("{atm}")])?;
            }
        }
    }
    w.flush()?;
    let mut stdout = std::io::stdout();
    writeln!(stdout, "wrote {}", out.join("param_sweep.csv").display())?;
    Ok(())
}

fn sweep_values(base: f64, width: f64, points: usize, s: SweepParam, family: FitFamily) -> Vec<f64> {
    if width == 0.0 || points == 1 {
        return vec![base];
    }
    let raw = (0..points).map(|j| base - width + 2.0 * width * j as f64 / (points - 1) as f64);
    match (s, family) {
        (SweepParam::Dependence, FitFamily::Hermite | FitFamily::Classical(Family::Gauss)) => {
            raw.filter(|v| v.abs() < RHO_BOUND).collect()
        }
        _ => raw.collect(),
    }
}
