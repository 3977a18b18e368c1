//! End-to-end runs of the `sewma` binary.

use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;
use sewma::numerics::chi2_cdf;

fn sewma(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sewma"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Run, require exit 0 and return stdout.
fn ok(args: &[&str]) -> String {
    let o = sewma(args);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{args:?}\nstderr: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    stdout(&o)
}

fn json(args: &[&str]) -> Value {
    serde_json::from_str(&ok(args)).expect("valid json")
}

fn results(v: &Value) -> &Vec<Value> {
    v["results"].as_array().expect("results array")
}

fn f(v: &Value) -> f64 {
    v.as_f64().unwrap_or_else(|| panic!("not a number: {v}"))
}

/// Data rows of csv output as (header, rows).
fn csv(text: &str, sep: char) -> (Vec<String>, Vec<Vec<String>>) {
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header = lines.next().unwrap().split(sep).map(str::to_string).collect();
    let rows = lines.map(|l| l.split(sep).map(str::to_string).collect()).collect();
    (header, rows)
}

#[test]
fn sf_reaches_design_probability() {
    let v = json(&[
        "sf", "--lambda", "0.1", "--cu", "1.719846", "--m", "50", "--sigma", "1", "--lmax", "1000",
        "--every", "250",
    ]);
    let rows = results(&v);
    assert_eq!(rows.len(), 4);
    let last = &rows[3];
    assert_eq!(last["l"], 1000);
    assert!((f(&last["cdf"]) - 0.25).abs() < 1e-3, "{last}");
    assert!((f(&last["sf"]) + f(&last["cdf"]) - 1.0).abs() < 1e-5);
}

#[test]
fn sf_shewhart_closed_form_in_csv() {
    let out = ok(&[
        "--format", "csv", "--digits", "12", "sf", "--lambda", "1", "--cu", "5.3026", "--sigma",
        "1", "--lmax", "20",
    ]);
    assert!(out.starts_with("# params: {"));
    let (header, rows) = csv(&out, ',');
    assert_eq!(header, ["sigma", "l", "sf", "cdf"]);
    let p = chi2_cdf(4.0 * 5.3026, 4.0).unwrap();
    for row in rows {
        let l: i32 = row[1].parse().unwrap();
        let sf: f64 = row[2].parse().unwrap();
        assert!((sf / p.powi(l) - 1.0).abs() < 1e-10, "l {l}: {sf}");
    }
}

#[test]
fn arl_with_estimated_variance() {
    let v = json(&["arl", "--lambda", "0.2", "--cu", "2.1538", "--m", "50", "--sigma", "1,1.5"]);
    let rows = results(&v);
    assert!((f(&rows[0]["arl"]) / 47128.0 - 1.0).abs() < 0.01);
    assert_eq!(rows[0]["exact"], true);
    let text = ok(&[
        "--format", "text", "arl", "--lambda", "0.2", "--cu", "2.1538", "--m", "50", "--sigma", "1.5",
    ]);
    assert_eq!(text.trim(), "arl 9.79");
}

#[test]
fn arl_shewhart_and_large_phase1() {
    let text = ok(&["--format", "text", "arl", "--lambda", "1", "--cu", "5.3026", "--sigma", "1"]);
    assert_eq!(text.trim(), "arl 3476");

    let known = json(&["arl", "--lambda", "0.1", "--cu", "1.4781", "--sigma", "1"]);
    let mixed = json(&["arl", "--lambda", "0.1", "--cu", "1.4781", "--m", "250000", "--sigma", "1"]);
    let (a, b) = (f(&results(&known)[0]["arl"]), f(&results(&mixed)[0]["arl"]));
    assert!((b / a - 1.0).abs() < 1e-3, "{a} vs {b}");
}

#[test]
fn crit_upper_text() {
    let text = ok(&[
        "--format", "text", "crit", "--lambda", "0.2", "--m", "50", "--lbar", "1000", "--alpha", "0.25",
    ]);
    assert_eq!(text.trim(), "0.0000 2.1538");
}

#[test]
fn crit_two_sided_variants() {
    let v = json(&[
        "crit", "--lambda", "0.1", "--m", "50", "--sided", "two", "--lbar", "1000", "--alpha", "0.25",
    ]);
    let row = &results(&v)[0];
    assert!((f(&row["cl"]) - 0.2802).abs() < 1e-4 && (f(&row["cu"]) - 1.7198).abs() < 1e-4, "{row}");

    let v = json(&[
        "q-crit", "--lambda", "0.1", "--m", "50", "--sided", "two", "--variant", "quasi", "--lbar",
        "1000", "--alpha", "0.25",
    ]);
    let row = &results(&v)[0];
    assert!((f(&row["xi"]) - 1.0658).abs() < 2e-4, "{row}");
    assert_eq!(v["params"]["variant"], "quasi");
}

#[test]
fn sweep_lambda_reproduces_limit_table() {
    let out = ok(&[
        "--format", "csv", "sweep", "--over", "lambda", "--values", "0.05,0.1,0.2,0.3,1", "--m", "50",
        "--quantity", "crit", "--lbar", "1000", "--alpha", "0.25",
    ]);
    let (header, rows) = csv(&out, ',');
    assert_eq!(header, ["lambda", "cl", "cu", "xi", "error"]);
    let expect = [1.4680, 1.7198, 2.1538, 2.5596, 5.4654];
    for (row, c) in rows.iter().zip(expect) {
        let cu: f64 = row[2].parse().unwrap();
        assert!((cu - c).abs() < 1e-3, "{row:?}");
        assert!(row[4].is_empty());
    }
}

#[test]
fn sweep_m_limits_decrease() {
    let v = json(&[
        "sweep", "--over", "m", "--values", "20,50,100,400", "--lambda", "0.1", "--quantity", "crit",
        "--lbar", "1000", "--alpha", "0.25",
    ]);
    let cu: Vec<f64> = results(&v).iter().map(|r| f(&r["cu"])).collect();
    assert!(cu.windows(2).all(|w| w[0] > w[1]), "{cu:?}");
    assert_eq!(results(&v)[0]["m"], 20);
}

#[test]
fn sweep_sigma_unbiased_minimum() {
    let out = ok(&[
        "--format", "tsv", "sweep", "--over", "sigma", "--values", "0.9:1.1:0.05", "--lambda", "0.1",
        "--m", "50", "--sided", "two", "--cl", "0.5287", "--cu", "1.8249", "--quantity", "cdf",
        "--lbar", "1000",
    ]);
    let (header, rows) = csv(&out, '\t');
    assert_eq!(header, ["sigma", "cdf", "error"]);
    assert_eq!(rows[1][0], "0.95");
    let p: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    let min = p.iter().cloned().fold(f64::INFINITY, f64::min);
    assert_eq!(p[2], min, "{p:?}");
    assert!((p[2] - 0.25).abs() < 1e-3);
}

#[test]
fn validate_against_simulation() {
    let v = json(&[
        "validate", "--lambda", "0.1", "--cu", "1.719846", "--m", "50", "--quantity", "cdf",
        "--lbar", "1000", "--reps", "20000",
    ]);
    let row = &results(&v)[0];
    assert_eq!(row["pass"], true, "{row}");
    assert_eq!(v["params"]["lcap"], 1001);

    let text = ok(&[
        "--format", "text", "validate", "--lambda", "1", "--cu", "3", "--quantity", "arl", "--reps",
        "20000", "--seed", "4",
    ]);
    assert!(text.trim_end().ends_with("ok"), "{text}");

    let v = json(&[
        "validate", "--lambda", "0.1", "--sided", "two", "--cl", "0.5287", "--cu", "1.8249", "--m",
        "50", "--sigma", "0.5", "--quantity", "arl", "--reps", "20000", "--phase1", "raw",
    ]);
    let row = &results(&v)[0];
    assert_eq!(row["pass"], true, "{row}");
    assert!((f(&row["mc"]) - 10.0).abs() < 0.3, "{row}");
}

#[test]
fn exit_codes() {
    // invalid argument values and unknown flags
    assert_eq!(sewma(&["arl", "--lambda", "1.5", "--cu", "2"]).status.code(), Some(2));
    assert_eq!(sewma(&["arl", "--lambda", "0.1", "--bogus"]).status.code(), Some(2));
    assert_eq!(
        sewma(&["sweep", "--over", "m", "--values", "20", "--lambda", "0.1", "--cu", "1.7", "--quantity", "cdf"])
            .status
            .code(),
        Some(2)
    );
    // every simulated run censored: no estimate of the mean exists
    let o = sewma(&[
        "validate", "--lambda", "0.1", "--cu", "1.4781", "--quantity", "arl", "--lcap", "10", "--reps", "100",
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("censored"));
    // no lower limit gives an unbiased quantile at this alpha
    let o = sewma(&[
        "crit", "--lambda", "0.1", "--m", "5", "--sided", "two", "--variant", "unbiased", "--lbar",
        "10", "--alpha", "0.9",
    ]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn config_file_defaults_and_precedence() {
    let path = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("sewma-config-test.txt");
    std::fs::write(&path, "# design inputs\nlambda = 0.3\nm = 50\nlbar = 1000\nalpha = 0.25\n").unwrap();
    let cfg = path.to_str().unwrap();

    let v = json(&["--config", cfg, "crit"]);
    assert!((f(&results(&v)[0]["cu"]) - 2.5596).abs() < 1e-3);
    assert_eq!(v["params"]["lambda"], 0.3);

    let v = json(&["--config", cfg, "crit", "--lambda", "0.2"]);
    assert!((f(&results(&v)[0]["cu"]) - 2.1538).abs() < 1e-3);
    assert_eq!(v["params"]["lambda"], 0.2);

    assert_eq!(sewma(&["--config", "/nonexistent/sewma.conf", "crit"]).status.code(), Some(2));
}

#[test]
fn json_carries_parameters() {
    let v = json(&["arl", "--lambda", "0.1", "--cu", "1.4781", "--sigma", "1,2", "--method", "markov"]);
    let p = &v["params"];
    assert_eq!(p["command"], "arl");
    assert_eq!(p["method"], "markov");
    assert_eq!(p["N"], 500);
    assert!(p["version"].is_string());
    assert_eq!(results(&v).len(), 2);
}
