use std::collections::BTreeSet;
use std::path::Path;
use std::process::{Command, Output};

const DESK: &[&str] = &["--spot", "4.0", "--strike", "4.3", "--rate", "0.05", "--vol", "0.1", "--expiry", "1"];
const GRID: &[&str] = &["spacing", "steps", "threshold", "ordering"];
const MARKET: &[&str] = &["spot", "strike", "rate", "vol", "expiry", "dividend-yield", "payoff", "exponent"];

fn distevo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_distevo")).args(args).env_remove("DISTEVO_CONFIG").output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Value of a `name  value` row in the table output.
fn row(out: &str, name: &str) -> f64 {
    let line = out.lines().find(|l| l.starts_with(name)).unwrap_or_else(|| panic!("no `{name}` row in\n{out}"));
    line[name.len()..].split_whitespace().next().unwrap().parse().unwrap()
}

/// Rows of a price table without the timing line, which varies run to run.
fn stable(out: &str) -> String {
    out.lines().filter(|l| !l.starts_with("wall time")).collect::<Vec<_>>().join("\n")
}

fn documented(sub: &str) -> BTreeSet<String> {
    let mut flags: Vec<&str> = vec!["config", "help"];
    flags.extend_from_slice(GRID);
    match sub {
        "simulate" => flags.extend_from_slice(&["process", "mu", "sigma", "spot", "horizon", "coords", "export"]),
        "price" => {
            flags.extend_from_slice(MARKET);
            flags.extend_from_slice(&["model", "barrier", "barrier-direction", "barrier-every", "record", "export"]);
        }
        "greeks" => {
            flags.extend_from_slice(MARKET);
            flags.extend_from_slice(&["fd-step", "scheme", "bump", "greeks"]);
        }
        "compare-mc" => {
            flags.extend_from_slice(MARKET);
            flags.extend_from_slice(&["paths", "seed"]);
        }
        "stochvol-price" => flags.extend_from_slice(&[
            "model", "spot", "strike", "rate", "expiry", "dividend-yield", "payoff", "exponent", "kappa", "theta", "xi",
            "v0", "rho", "alpha", "beta", "f0", "sigma0", "vol-states",
        ]),
        "export" => {
            flags.extend_from_slice(MARKET);
            flags.extend_from_slice(&["dims", "coords", "spot2", "vol2", "rho", "export"]);
        }
        _ => unreachable!(),
    }
    flags.into_iter().map(String::from).collect()
}

#[test]
fn help_lists_the_documented_flags_with_units() {
    for sub in ["simulate", "price", "greeks", "compare-mc", "stochvol-price", "export"] {
        let o = distevo(&[sub, "-h"]);
        assert!(o.status.success());
        let text = stdout(&o);
        let mut seen = BTreeSet::new();
        for line in text.lines().map(str::trim_start).filter(|l| l.starts_with("--") || l.starts_with("-h,")) {
            let flag = line.trim_start_matches("-h, ").trim_start_matches("--");
            let name: String = flag.chars().take_while(|c| c.is_ascii_alphanumeric() || *c == '-').collect();
            if name != "help" {
                assert!(line.contains('['), "`--{name}` of {sub} has no units or default: {line}");
            }
            seen.insert(name);
        }
        assert_eq!(seen, documented(sub), "flags of {sub}");
    }
}

#[test]
fn price_reproduces_the_desk_example() {
    let mut args = vec!["price", "--model", "bs"];
    args.extend_from_slice(DESK);
    args.extend_from_slice(&["--steps", "365", "--spacing", "5e-4", "--payoff", "call"]);
    let o = distevo(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!((row(&out, "price") - 0.1201659).abs() < 5e-7, "{out}");
    assert!(row(&out, "abs diff vs analytic") <= 5e-7);
    assert!(out.contains("not comparable across machines"));
}

#[test]
fn simulate_export_round_trips_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    for p in [&a, &b] {
        let o = distevo(&[
            "simulate", "--process", "squared-drift", "--mu", "0.05", "--sigma", "0.1", "--spot", "1", "--steps", "50",
            "--export", p.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text.as_bytes(), std::fs::read(&b).unwrap().as_slice());
    assert!(text.starts_with("x,cdf,pdf\n"));
    let back = distevo::grid::read_csv(&a).unwrap();
    assert_eq!(distevo::grid::to_csv_string(&back).unwrap(), text);
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn empty_config_gives_the_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let empty = write(dir.path(), "empty.toml", "");
    let mut with_file = vec!["price", "--config", &empty];
    with_file.extend_from_slice(DESK);
    let mut explicit = vec!["price", "--spacing", "1e-3", "--steps", "365", "--threshold", "1e-12", "--ordering", "drift-first"];
    explicit.extend_from_slice(DESK);
    assert_eq!(stable(&stdout(&distevo(&with_file))), stable(&stdout(&distevo(&explicit))));
}

#[test]
fn flags_override_config_values() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "run.toml",
        "spot = 4.0\nstrike = 4.3\nrate = 0.05\nvol = 0.1\nexpiry = 1\nspacing = 5e-3\nsteps = 100\n",
    );
    let from_file = stdout(&distevo(&["price", "--config", &cfg]));
    let mut args = vec!["price", "--spacing", "5e-3", "--steps", "100"];
    args.extend_from_slice(DESK);
    assert_eq!(stable(&from_file), stable(&stdout(&distevo(&args))));
    let overridden = stdout(&distevo(&["price", "--config", &cfg, "--spacing", "1e-3"]));
    let mut args = vec!["price", "--spacing", "1e-3", "--steps", "100"];
    args.extend_from_slice(DESK);
    assert_eq!(stable(&overridden), stable(&stdout(&distevo(&args))));
    assert_ne!(stable(&overridden), stable(&from_file));

    let env = Command::new(env!("CARGO_BIN_EXE_distevo")).args(["price"]).env("DISTEVO_CONFIG", &cfg).output().unwrap();
    assert_eq!(stable(&stdout(&env)), stable(&from_file));
}

#[test]
fn malformed_config_exits_one_with_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let syntax = write(dir.path(), "bad.toml", "spot = 4.0\nstrike = = 4.3\n");
    let o = distevo(&["price", "--config", &syntax]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));

    let unknown = write(dir.path(), "unknown.toml", "spot = 4.0\n\nspeling = 1\n");
    let o = distevo(&["price", "--config", &unknown]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));

    let typed = write(dir.path(), "typed.toml", "spot = 4.0\nspacing = \"fine\"\n");
    let mut args = vec!["price", "--config", &typed];
    args.extend_from_slice(DESK);
    let o = distevo(&args);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
}

#[test]
fn exit_codes() {
    assert_eq!(distevo(&["price", "--bogus"]).status.code(), Some(1));
    assert_eq!(distevo(&["price", "--spot", "4"]).status.code(), Some(1));
    assert_eq!(distevo(&["price", "--spot", "abc"]).status.code(), Some(1));
    let mut args = vec!["price", "--payoff", "straddle"];
    args.extend_from_slice(DESK);
    assert_eq!(distevo(&args).status.code(), Some(1));
    let mut coarse = vec!["price", "--spacing", "0.5"];
    coarse.extend_from_slice(DESK);
    let o = distevo(&coarse);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert_eq!(distevo(&["--help"]).status.code(), Some(0));
}

#[test]
fn greeks_table_columns() {
    let mut args = vec!["greeks", "--spacing", "1e-3", "--greeks", "delta,vega"];
    args.extend_from_slice(DESK);
    let o = distevo(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    let header: Vec<&str> = out.lines().next().unwrap().split_whitespace().collect();
    assert_eq!(header, ["greek", "value", "analytic", "abs", "diff"]);
    let delta: Vec<f64> = out.lines().nth(1).unwrap().split_whitespace().skip(1).map(|v| v.parse().unwrap()).collect();
    // the spot bump is below one grid cell here, so only the table layout is exact
    assert!((delta[0] - 0.431244511793).abs() < 2e-3);
    assert_eq!(delta[1], 0.4312445118);
    assert!(((delta[0] - delta[1]).abs() / delta[2] - 1.0).abs() < 0.1);
    assert_eq!(out.lines().filter(|l| l.starts_with("vega")).count(), 1);
}

#[test]
fn compare_mc_is_deterministic_and_tabulated() {
    let mut args = vec!["compare-mc", "--paths", "20000", "--seed", "42", "--steps", "30", "--spacing", "5e-3"];
    args.extend_from_slice(DESK);
    let (a, b) = (distevo(&args), distevo(&args));
    assert!(a.status.success(), "{}", stderr(&a));
    let out = stdout(&a);
    let cells = |o: &str, name: &str| -> Vec<String> {
        let line = o.lines().find(|l| l.starts_with(name)).unwrap().to_string();
        line.split_whitespace().take(4).map(String::from).collect()
    };
    assert_eq!(cells(&out, "mc"), cells(&stdout(&b), "mc"));
    for name in ["grid", "mc", "analytic"] {
        assert!(out.lines().any(|l| l.starts_with(name)), "{out}");
    }
    let mc = cells(&out, "mc");
    let (price, se): (f64, f64) = (mc[1].parse().unwrap(), mc[2].parse().unwrap());
    assert!((price - 0.120165592579702).abs() < 4.0 * se);
}

#[test]
fn record_appends_json_lines() {
    let dir = tempfile::tempdir().unwrap();
    let rec = dir.path().join("runs.jsonl");
    let mut args = vec!["price", "--spacing", "5e-3", "--record", rec.to_str().unwrap()];
    args.extend_from_slice(DESK);
    distevo(&args);
    distevo(&args);
    let text = std::fs::read_to_string(&rec).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with('{') && lines[0].contains("\"price\":") && lines[0].contains("\"wall_time_s\":"));
}

#[test]
fn barrier_reports_survival() {
    let mut args = vec!["price", "--spacing", "5e-3", "--barrier", "4.6", "--barrier-every", "5"];
    args.extend_from_slice(DESK);
    let o = distevo(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    let s = row(&out, "survival probability");
    assert!(s > 0.0 && s < 1.0);
    assert!(row(&out, "price") < 0.12);
}

#[test]
fn stochvol_prices_collapse_to_black_scholes() {
    let common = ["--spot", "4", "--strike", "4.3", "--rate", "0.05", "--expiry", "1", "--steps", "50", "--spacing", "2e-3"];
    let mut heston = vec!["stochvol-price", "--model", "heston", "--kappa", "5", "--theta", "0.01", "--xi", "1e-4", "--v0", "0.01"];
    heston.extend_from_slice(&common);
    let o = distevo(&heston);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!((row(&out, "price") - row(&out, "black-scholes at initial vol")).abs() < 5e-5, "{out}");
    let mut sabr = vec!["stochvol-price", "--model", "sabr", "--alpha", "0.2", "--sigma0", "0.1", "--rho", "0.5"];
    sabr.extend_from_slice(&common);
    assert_eq!(distevo(&sabr).status.code(), Some(1));
}

#[test]
fn two_dimensional_export() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    for p in [&a, &b] {
        let o = distevo(&[
            "export", "--dims", "2", "--spot", "4", "--spot2", "3", "--vol", "0.1", "--vol2", "0.2", "--rho", "0.5",
            "--rate", "0.05", "--expiry", "1", "--steps", "12", "--spacing", "1e-2", "--export", p.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text.as_bytes(), std::fs::read(&b).unwrap().as_slice());
    assert!(text.starts_with("x1,x2,pdf\n"));
    let mass: f64 = text.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse::<f64>().unwrap()).sum::<f64>() * 1e-4;
    assert!((mass - 1.0).abs() < 1e-2);
}
