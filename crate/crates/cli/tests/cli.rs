use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hermicop::calibration::{model_smile, read_backtest_csv, read_fit_json, setup_from_pillars};
use hermicop::smile::{invert_pair, read_pillar_csv, write_pillar_csv, PillarRecord};
use hermicop::{ClassicalCopula, CopulaParams, Family, GridDensity, PricingOptions, SmilePillars};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hermicop"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn ok(out: &Output) {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

fn record(date: &str, pair: &str, p: SmilePillars) -> PillarRecord {
    PillarRecord { date: date.into(), pair: pair.into(), tenor: "1Y".into(), pillars: p }
}

fn eurusd(atm: f64) -> SmilePillars {
    SmilePillars { tenor: 1.0, forward: 1.16, df_dom: 0.99, df_for: 1.005, atm, c25: atm + 0.002, p25: atm + 0.005, c10: atm + 0.007, p10: atm + 0.014 }
}

fn usdjpy(atm: f64) -> SmilePillars {
    SmilePillars { tenor: 1.0, forward: 112.0, df_dom: 1.0, df_for: 0.99, atm, c25: atm + 0.001, p25: atm + 0.008, c10: atm + 0.006, p10: atm + 0.022 }
}

fn flat_file(dir: &Path) -> PathBuf {
    let path = dir.join("flat.csv");
    let recs = vec![
        record("2021-10-29", "EURUSD", SmilePillars::flat(1.0, 1.16, 0.99, 1.005, 0.10)),
        record("2021-10-29", "USDJPY", SmilePillars::flat(1.0, 112.0, 1.0, 0.99, 0.12)),
    ];
    write_pillar_csv(&path, &recs).unwrap();
    path
}

fn gauss_cross(xz: &SmilePillars, usdjpy: &SmilePillars, rho: f64) -> SmilePillars {
    let setup = setup_from_pillars(xz, &invert_pair(usdjpy), PricingOptions::default()).unwrap();
    model_smile(&setup, &CopulaParams::Classical(ClassicalCopula::new(Family::Gauss, rho).unwrap())).unwrap()
}

#[test]
fn price_flat_gauss_matches_triangular_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let pillars = flat_file(dir.path());
    let out = dir.path().join("out");
    ok(&run(&["price", "--pillars", path_str(&pillars), "--cross", "EURJPY", "--via", "USD", "--family", "gauss", "--theta", "0.4", "-o", path_str(&out)]));
    let recs = read_pillar_csv(&out.join("cross_pillars_gauss.csv")).unwrap();
    let expected = (0.01f64 + 0.0144 - 2.0 * 0.4 * 0.012).sqrt();
    for v in recs[0].pillars.vols() {
        assert!((v - expected).abs() < 1e-3, "{v} vs {expected}");
    }
    let mut rdr = csv::Reader::from_path(out.join("cross_smile_gauss.csv")).unwrap();
    assert_eq!(rdr.headers().unwrap(), vec!["strike", "log_moneyness", "call", "put", "vol"]);
    let rows: Vec<Vec<f64>> = rdr.records().map(|r| r.unwrap().iter().map(|s| s.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 41);
    for r in &rows {
        assert!((r[4] - expected).abs() < 1e-3);
    }
}

#[test]
fn outputs_are_deterministic_and_flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    let pillars = flat_file(dir.path());
    let cfg = dir.path().join("run.json");
    let out1 = dir.path().join("o1");
    let out2 = dir.path().join("o2");
    std::fs::write(
        &cfg,
        format!(r#"{{"pillars": "{}", "cross": "EURJPY", "family": "gauss", "theta": 0.1, "output_dir": "{}"}}"#, path_str(&pillars), path_str(&out1)),
    )
    .unwrap();
    ok(&run(&["price", "--config", path_str(&cfg), "--theta", "0.4"]));
    ok(&run(&["price", "--config", path_str(&cfg), "--theta", "0.4", "-o", path_str(&out2)]));
    for f in ["cross_pillars_gauss.csv", "cross_smile_gauss.csv"] {
        assert_eq!(std::fs::read(out1.join(f)).unwrap(), std::fs::read(out2.join(f)).unwrap(), "{f}");
    }
    let atm = read_pillar_csv(&out1.join("cross_pillars_gauss.csv")).unwrap()[0].pillars.atm;
    assert!((atm - (0.0148f64).sqrt()).abs() < 1e-3, "flag theta not applied: {atm}");
}

#[test]
fn unknown_config_field_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, r#"{"sectoins": 10}"#).unwrap();
    let out = run(&["fit-density", "--config", path_str(&cfg)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn corrupt_pillar_csv_exits_2_naming_the_row() {
    let dir = tempfile::tempdir().unwrap();
    let pillars = flat_file(dir.path());
    let mut text = std::fs::read_to_string(&pillars).unwrap();
    text.push_str("2021-10-29,EURJPY,1Y,129.9,1,1.005,abc,0.1,0.1,0.1,0.1\n");
    std::fs::write(&pillars, text).unwrap();
    let out = run(&["price", "--pillars", path_str(&pillars), "--cross", "EURJPY", "--family", "gauss", "--theta", "0.4", "-o", path_str(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("row 4") && err.contains("atm"), "{err}");
}

#[test]
fn corrupt_density_csv_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fd");
    ok(&run(&["fit-density", "--families", "gauss", "--sections", "60", "-o", path_str(&out)]));
    let target = out.join("gauss_target.csv");
    let mut lines: Vec<String> = std::fs::read_to_string(&target).unwrap().lines().map(String::from).collect();
    lines[5] = "0.1,zz,3".into();
    std::fs::write(&target, lines.join("\n")).unwrap();
    let res = run(&["correct", "--input", path_str(&target), "-o", path_str(dir.path())]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("row 6"));
}

#[test]
fn missing_month_end_smile_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let pillars = dir.path().join("p.csv");
    let recs = vec![
        record("2021-10-29", "EURUSD", eurusd(0.062)),
        record("2021-10-29", "USDJPY", usdjpy(0.075)),
        record("2021-11-01", "EURUSD", eurusd(0.062)),
        record("2021-11-01", "USDJPY", usdjpy(0.075)),
        record("2021-11-01", "EURJPY", gauss_cross(&eurusd(0.062), &usdjpy(0.075), 0.4)),
    ];
    write_pillar_csv(&pillars, &recs).unwrap();
    let out = run(&["backtest", "--pillars", path_str(&pillars), "--cross", "EURJPY", "--families", "gauss", "--month-end", "2021-10-29", "-o", path_str(dir.path())]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn gauss_world_backtest_has_small_rmse_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let pillars = dir.path().join("month.csv");
    let mut recs = Vec::new();
    let dates = ["2021-10-29", "2021-11-01", "2021-11-02", "2021-11-03", "2021-11-04"];
    for (k, d) in dates.iter().enumerate() {
        let (x, y) = (eurusd(0.060 + 0.001 * k as f64), usdjpy(0.078 - 0.0015 * k as f64));
        recs.push(record(d, "EURUSD", x));
        recs.push(record(d, "USDJPY", y));
        if k != 3 {
            recs.push(record(d, "EURJPY", gauss_cross(&x, &y, 0.4)));
        }
    }
    write_pillar_csv(&pillars, &recs).unwrap();
    let out = dir.path().join("bt");
    ok(&run(&["backtest", "--pillars", path_str(&pillars), "--cross", "EURJPY", "--families", "gauss", "-o", path_str(&out)]));
    let rows = read_backtest_csv(&out.join("backtest.csv")).unwrap();
    // one day lacks its cross smile and is skipped under both settings
    assert_eq!(rows.len(), 6);
    for r in &rows {
        assert!(r.rmse < 2e-4, "{r:?}");
    }
    let fit = read_fit_json(&out.join("month_end_fit.json")).unwrap();
    assert!((fit[0].theta.unwrap() - 0.4).abs() < 1e-3);
}

#[test]
fn calibrate_writes_parseable_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let pillars = dir.path().join("p.csv");
    let (x, y) = (eurusd(0.062), usdjpy(0.075));
    write_pillar_csv(&pillars, &[record("2021-10-29", "EURUSD", x), record("2021-10-29", "USDJPY", y), record("2021-10-29", "EURJPY", gauss_cross(&x, &y, 0.42))]).unwrap();
    let out = dir.path().join("cal");
    ok(&run(&["calibrate", "--pillars", path_str(&pillars), "--cross", "EURJPY", "--families", "gauss,frank", "-o", path_str(&out)]));
    let fits = read_fit_json(&out.join("fit.json")).unwrap();
    assert_eq!(fits.len(), 2);
    assert!((fits[0].theta.unwrap() - 0.42).abs() < 1e-3);
    assert!(fits[0].objective < 1e-10);
    assert!(fits[1].objective >= fits[0].objective);
    let model = read_pillar_csv(&out.join("model_pillars.csv")).unwrap();
    assert_eq!(model.len(), 2);
    let mut rdr = csv::Reader::from_path(out.join("calibrated_smiles.csv")).unwrap();
    assert_eq!(rdr.records().count(), 10);
}

#[test]
fn param_sweeps() {
    let dir = tempfile::tempdir().unwrap();
    let flat = flat_file(dir.path());
    let out = dir.path().join("sweep");
    ok(&run(&["param-sweep", "--pillars", path_str(&flat), "--cross", "EURJPY", "--family", "hermite", "--rho", "0.3", "--sweep-points", "9", "--rho-width", "0.6", "--m-width", "0", "-o", path_str(&out)]));
    let mut rdr = csv::Reader::from_path(out.join("param_sweep.csv")).unwrap();
    let rows: Vec<(String, f64, f64)> = rdr
        .records()
        .map(|r| {
            let r = r.unwrap();
            (r[1].to_string(), r[2].parse().unwrap(), r[3].parse().unwrap())
        })
        .collect();
    let rho: Vec<&(String, f64, f64)> = rows.iter().filter(|r| r.0 == "rho").collect();
    assert_eq!(rho.len(), 9);
    for w in rho.windows(2) {
        assert!(w[1].2 < w[0].2, "ATM not decreasing in rho: {w:?}");
    }
    let base = rho[4].2;
    for m in ["m3", "m4", "m5", "m6"] {
        let r: Vec<_> = rows.iter().filter(|r| r.0 == m).collect();
        assert_eq!(r.len(), 1, "{m}");
        assert!((r[0].2 - base).abs() < 1e-12);
    }

    // m3 is not monotone at a fitted skewed point
    let pillars = dir.path().join("skew.csv");
    write_pillar_csv(&pillars, &[record("2021-10-29", "EURUSD", eurusd(0.062)), record("2021-10-29", "USDJPY", usdjpy(0.075))]).unwrap();
    let out = dir.path().join("sweep2");
    ok(&run(&[
        "param-sweep", "--pillars", path_str(&pillars), "--cross", "EURJPY", "--family", "hermite", "--rho", "0.3661",
        "--m-check=-0.3535,0.9641,0.0827,-2.0537", "--sweep-points", "7", "-o", path_str(&out),
    ]));
    let mut rdr = csv::Reader::from_path(out.join("param_sweep.csv")).unwrap();
    let m3: Vec<f64> = rdr.records().map(|r| r.unwrap()).filter(|r| &r[1] == "m3").map(|r| r[3].parse().unwrap()).collect();
    assert_eq!(m3.len(), 7);
    let d: Vec<f64> = m3.windows(2).map(|w| w[1] - w[0]).collect();
    assert!(d.windows(2).any(|w| w[0] * w[1] < 0.0), "m3 sweep monotone: {m3:?}");
}

#[test]
fn fit_density_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fd");
    ok(&run(&["fit-density", "--families", "clayton,gauss", "-o", path_str(&out)]));
    let mut rdr = csv::Reader::from_path(out.join("clayton_moments.csv")).unwrap();
    let cell = rdr
        .records()
        .map(|r| r.unwrap())
        .find(|r| &r[0] == "target" && &r[1] == "1" && &r[2] == "1")
        .map(|r| r[3].parse::<f64>().unwrap())
        .unwrap();
    assert!((cell - 0.611).abs() < 5e-3, "{cell}");

    let raw = GridDensity::load(&out.join("gauss_b_uncorrected.csv")).unwrap();
    let corrected = GridDensity::load(&out.join("gauss_b_corrected.csv")).unwrap();
    let diff = raw.values.iter().zip(&corrected.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(diff < 1e-6, "{diff}");

    let clayton = GridDensity::load(&out.join("clayton_a_corrected.csv")).unwrap();
    assert!(clayton.min_value() >= -1e-12);
    assert!((clayton.total_mass() - 1.0).abs() < 1e-8);
}

#[test]
fn correct_command_clears_negative_mass() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fd");
    ok(&run(&["fit-density", "--families", "clayton", "--sections", "80", "-o", path_str(&out)]));
    let input = out.join("clayton_a_uncorrected.csv");
    assert!(GridDensity::load(&input).unwrap().min_value() < 0.0);
    ok(&run(&["correct", "--input", path_str(&input), "-o", path_str(dir.path())]));
    let fixed = GridDensity::load(&dir.path().join("clayton_a_uncorrected_corrected.csv")).unwrap();
    assert!(fixed.min_value() >= 0.0);
    assert!((fixed.total_mass() - 1.0).abs() < 1e-8);
}

#[test]
fn bad_thread_count_is_an_input_error() {
    let out = bin().env("HERMICOP_THREADS", "0").args(["fit-density", "--help"]).output().unwrap();
    assert!(out.status.success());
    let dir = tempfile::tempdir().unwrap();
    let out = bin().env("HERMICOP_THREADS", "zero").args(["fit-density", "-o", path_str(dir.path())]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}
