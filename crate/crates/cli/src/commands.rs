use crate::config::FileConfig;
use crate::{Cli, CliError, Command, CompareMcArgs, ExportArgs, GreeksArgs, GridArgs, MarketArgs, PriceArgs, SimulateArgs, StochVolArgs};
use distevo::greeks::{compute_greeks, BumpStyle, FdScheme, GreekRequest};
use distevo::grid::write_csv;
use distevo::multidim::{step_2d, Drift2D, Grid2D, Kernel2D};
use distevo::oracles::{bs_greeks, bs_price, mc_price, Greek, McConfig};
use distevo::pricing::{
    price_with_events, timed, BarrierDirection, BarrierSpec, MarketParams, PathOptions, PayoffKind, PayoffProfile,
    PriceRecord,
};
use distevo::process::{builtin_transforms, simulate, Builtin, InitialCondition, Keep, SimulationConfig, StepOrdering};
use distevo::stochvol::{heston_price, sabr_price, HestonParams, SabrParams, StochVolConfig};
use distevo::GridDistribution;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

const TIMING_NOTE: &str = "wall clock on this machine; not comparable across machines";

type Res<T> = Result<T, CliError>;

pub fn run(cli: &Cli) -> Res<String> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    match &cli.command {
        Command::Simulate(a) => run_simulate(a, &file),
        Command::Price(a) => run_price(a, &file),
        Command::Greeks(a) => run_greeks(a, &file),
        Command::CompareMc(a) => run_compare_mc(a, &file),
        Command::StochvolPrice(a) => run_stochvol(a, &file),
        Command::Export(a) => run_export(a, &file),
    }
}

fn required<T>(v: Option<T>, key: &str) -> Res<T> {
    v.ok_or_else(|| CliError::Input(format!("missing --{key} (or `{key}` in the config file)")))
}

fn parsed<T: FromStr<Err = distevo::Error>>(v: Option<String>, default: &str) -> Res<T> {
    Ok(v.as_deref().unwrap_or(default).parse::<T>()?)
}

fn path(f: &FileConfig, key: &str, flag: &Option<PathBuf>) -> Res<Option<PathBuf>> {
    Ok(f.string(key, flag.as_ref().and_then(|p| p.to_str()))?.map(PathBuf::from))
}

/// Grid policy over `horizon` with the documented defaults.
fn grid_config(g: &GridArgs, f: &FileConfig, horizon: f64) -> Res<SimulationConfig> {
    let spacing = f.f64("spacing", g.spacing)?.unwrap_or(1e-3);
    let steps = f.u64("steps", g.steps)?.unwrap_or(365) as usize;
    let threshold = f.f64("threshold", g.threshold)?.unwrap_or(1e-12);
    let ordering: StepOrdering = parsed(f.string("ordering", g.ordering.as_deref())?, "drift-first")?;
    let cfg = SimulationConfig { threshold, ordering, ..SimulationConfig::for_horizon(horizon, steps, spacing)? };
    cfg.validate()?;
    Ok(cfg)
}

fn payoff(kind: Option<String>, strike: Option<f64>, exponent: Option<f64>) -> Res<PayoffProfile> {
    let kind: PayoffKind = parsed(kind, "call")?;
    Ok(PayoffProfile::new(kind, required(strike, "strike")?, exponent.unwrap_or(1.0))?)
}

fn market_and_payoff(a: &MarketArgs, f: &FileConfig) -> Res<(MarketParams, PayoffProfile)> {
    let m = MarketParams::new(
        required(f.f64("spot", a.spot)?, "spot")?,
        required(f.f64("rate", a.rate)?, "rate")?,
        required(f.f64("vol", a.vol)?, "vol")?,
        required(f.f64("expiry", a.expiry)?, "expiry")?,
        f.f64("dividend-yield", a.dividend_yield)?.unwrap_or(0.0),
    )?;
    let p = payoff(f.string("payoff", a.payoff.as_deref())?, f.f64("strike", a.strike)?, f.f64("exponent", a.exponent)?)?;
    Ok((m, p))
}

fn analytic(p: &PayoffProfile, m: &MarketParams) -> Option<f64> {
    bs_price(p, m).ok()
}

fn table(rows: &[(&str, String)]) -> String {
    let w = rows.iter().map(|r| r.0.len()).max().unwrap_or(0);
    rows.iter().fold(String::new(), |mut out, (k, v)| {
        let _ = writeln!(out, "{k:<w$}  {v}");
        out
    })
}

fn run_simulate(a: &SimulateArgs, f: &FileConfig) -> Res<String> {
    let case: Builtin = parsed(f.string("process", a.process.as_deref())?, "samuelson")?;
    let mu = required(f.f64("mu", a.mu)?, "mu")?;
    let sigma = required(f.f64("sigma", a.sigma)?, "sigma")?;
    let spot = required(f.f64("spot", a.spot)?, "spot")?;
    let horizon = f.f64("horizon", a.horizon)?.unwrap_or(1.0);
    let coords = f.string("coords", a.coords.as_deref())?.unwrap_or_else(|| "transformed".into());
    if coords != "transformed" && coords != "price" {
        return Err(CliError::Input(format!("--coords must be transformed or price, got `{coords}`")));
    }
    if !(spot > 0.0) {
        return Err(CliError::Input(format!("--spot must be positive, got {spot}")));
    }
    let cfg = grid_config(&a.grid, f, horizon)?;
    let proc_ = builtin_transforms(case, mu, sigma)?;
    let x0 = (proc_.forward)(spot);
    let (out, secs) = timed(|| simulate(&InitialCondition::PointMass(x0), &proc_.spec, &cfg, Keep::Terminal));
    let mut terminal = out?.remove(0);
    if coords == "price" {
        let inv = proc_.inverse.clone();
        terminal = terminal.change_of_variable(move |y| inv(y))?;
    }
    let (mean, var) = terminal.moments();
    let mut rows = vec![
        ("process", proc_.name.to_string()),
        ("coordinates", coords),
        ("grid points", terminal.len().to_string()),
        ("support", format!("[{:.6}, {:.6}]", terminal.lo(), terminal.hi())),
        ("mean", format!("{mean:.10}")),
        ("std dev", format!("{:.10}", var.sqrt())),
        ("wall time [s]", format!("{secs:.3} ({TIMING_NOTE})")),
    ];
    if let Some(p) = path(f, "export", &a.export)? {
        write_csv(&terminal, &p)?;
        rows.push(("exported", p.display().to_string()));
    }
    Ok(table(&rows))
}

fn run_price(a: &PriceArgs, f: &FileConfig) -> Res<String> {
    let model = f.string("model", a.model.as_deref())?.unwrap_or_else(|| "bs".into());
    if model != "bs" {
        return Err(CliError::Input(format!("price supports --model bs only, got `{model}`; use stochvol-price for heston or sabr")));
    }
    let (m, p) = market_and_payoff(&a.market, f)?;
    let cfg = grid_config(&a.grid, f, m.expiry)?;
    let mut opts = PathOptions::default();
    let barrier = f.f64("barrier", a.barrier)?;
    if let Some(level) = barrier {
        let direction = match f.string("barrier-direction", a.barrier_direction.as_deref())?.as_deref().unwrap_or("up") {
            "up" => BarrierDirection::UpAndOut,
            "down" => BarrierDirection::DownAndOut,
            other => return Err(CliError::Input(format!("--barrier-direction must be up or down, got `{other}`"))),
        };
        let every = f.u64("barrier-every", a.barrier_every)?.unwrap_or(1) as usize;
        if every == 0 {
            return Err(CliError::Input("--barrier-every must be at least 1".into()));
        }
        let dates = (every..=cfg.steps).step_by(every).collect();
        opts.barriers.push(BarrierSpec { level, direction, dates });
    }
    let (res, secs) = timed(|| price_with_events(&p, &m, &cfg, &opts));
    let res = res?;
    let mut rows = vec![("instrument", p.describe()), ("price", format!("{:.10}", res.price))];
    if barrier.is_none() {
        if let Some(exact) = analytic(&p, &m) {
            rows.push(("analytic", format!("{exact:.10}")));
            rows.push(("abs diff vs analytic", format!("{:.1e}", (res.price - exact).abs())));
        }
    } else {
        rows.push(("survival probability", format!("{:.10}", res.survival)));
    }
    if let Some(t) = &res.terminal {
        rows.push(("terminal grid points", t.len().to_string()));
    }
    rows.push(("wall time [s]", format!("{secs:.3} ({TIMING_NOTE})")));
    if let Some(rec) = path(f, "record", &a.record)? {
        let line = PriceRecord {
            instrument: p.describe(),
            price: res.price,
            survival_probability: barrier.map(|_| res.survival),
            spacing: cfg.spacing,
            steps: cfg.steps,
            wall_time_s: secs,
        }
        .to_json_line();
        append_line(&rec, &line)?;
        rows.push(("record appended to", rec.display().to_string()));
    }
    if let Some(out) = path(f, "export", &a.export)? {
        let t = res.terminal.as_ref().ok_or_else(|| CliError::Input("nothing survives the barrier to export".into()))?;
        write_csv(t, &out)?;
        rows.push(("exported", out.display().to_string()));
    }
    Ok(table(&rows))
}

fn append_line(path: &Path, line: &str) -> Res<()> {
    let mut file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| CliError::Input(format!("cannot open {}: {e}", path.display())))?;
    writeln!(file, "{line}").map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))
}

fn run_greeks(a: &GreeksArgs, f: &FileConfig) -> Res<String> {
    let (m, p) = market_and_payoff(&a.market, f)?;
    let cfg = grid_config(&a.grid, f, m.expiry)?;
    let which: Vec<Greek> = match f.string("greeks", a.greeks.as_deref())? {
        None => Greek::ALL.to_vec(),
        Some(list) => list.split(',').map(|s| s.trim().parse::<Greek>()).collect::<Result<_, _>>()?,
    };
    let mut req = GreekRequest::only(&which, f.f64("fd-step", a.fd_step)?.unwrap_or(1e-3));
    req.scheme = parsed::<FdScheme>(f.string("scheme", a.scheme.as_deref())?, "central")?;
    req.bump = parsed::<BumpStyle>(f.string("bump", a.bump.as_deref())?, "absolute")?;
    let (g, secs) = timed(|| compute_greeks(&p, &m, &cfg, &req));
    let g = g?;
    let exact = bs_greeks(&p, &m).ok();
    let mut out = format!("{:<6}  {:>16}  {:>16}  {:>9}\n", "greek", "value", "analytic", "abs diff");
    for (greek, v) in &g {
        let name = format!("{greek:?}").to_lowercase();
        match exact.as_ref().and_then(|e| e.get(greek)) {
            Some(e) => {
                let _ = writeln!(out, "{name:<6}  {v:>16.10}  {e:>16.10}  {:>9.1e}", (v - e).abs());
            }
            None => {
                let _ = writeln!(out, "{name:<6}  {v:>16.10}  {:>16}  {:>9}", "-", "-");
            }
        }
    }
    let _ = writeln!(out, "\n{}; wall time {secs:.3} s ({TIMING_NOTE})", p.describe());
    Ok(out)
}

fn run_compare_mc(a: &CompareMcArgs, f: &FileConfig) -> Res<String> {
    let (m, p) = market_and_payoff(&a.market, f)?;
    let cfg = grid_config(&a.grid, f, m.expiry)?;
    let paths = f.u64("paths", a.paths)?.unwrap_or(1_000_000) as usize;
    let seed = f.u64("seed", a.seed)?.unwrap_or(42);
    let (grid, grid_secs) = timed(|| price_with_events(&p, &m, &cfg, &PathOptions::default()));
    let grid = grid?.price;
    let (mc, mc_secs) = timed(|| mc_price(&p, &m, &McConfig::new(paths, cfg.steps, seed)));
    let mc = mc?;
    let exact = analytic(&p, &m);
    let diff = |v: f64| exact.map_or("-".to_string(), |e| format!("{:.1e}", (v - e).abs()));
    let mut out = format!("{:<9}  {:>14}  {:>10}  {:>9}  {:>13}\n", "method", "price", "std error", "abs diff", "wall time [s]");
    let _ = writeln!(out, "{:<9}  {grid:>14.10}  {:>10}  {:>9}  {grid_secs:>13.3}", "grid", "-", diff(grid));
    let _ = writeln!(out, "{:<9}  {:>14.10}  {:>10.1e}  {:>9}  {mc_secs:>13.3}", "mc", mc.price, mc.std_error, diff(mc.price));
    if let Some(e) = exact {
        let _ = writeln!(out, "{:<9}  {e:>14.10}  {:>10}  {:>9}  {:>13}", "analytic", "-", "-", "-");
    }
    let _ = writeln!(
        out,
        "\n{}; {paths} antithetic paths, seed {seed}, {} steps; times are {TIMING_NOTE}",
        p.describe(),
        cfg.steps
    );
    Ok(out)
}

fn run_stochvol(a: &StochVolArgs, f: &FileConfig) -> Res<String> {
    let model = required(f.string("model", a.model.as_deref())?, "model")?;
    let spot = required(f.f64("spot", a.spot)?, "spot")?;
    let rate = required(f.f64("rate", a.rate)?, "rate")?;
    let expiry = required(f.f64("expiry", a.expiry)?, "expiry")?;
    let q = f.f64("dividend-yield", a.dividend_yield)?.unwrap_or(0.0);
    let p = payoff(f.string("payoff", a.payoff.as_deref())?, f.f64("strike", a.strike)?, f.f64("exponent", a.exponent)?)?;
    let rho = f.f64("rho", a.rho)?.unwrap_or(0.0);
    let mut cfg = StochVolConfig::new(grid_config(&a.grid, f, expiry)?);
    cfg.vol_states = f.u64("vol-states", a.vol_states)?.unwrap_or(64) as usize;
    let (price, reference_vol, secs) = match model.as_str() {
        "heston" => {
            let v0 = required(f.f64("v0", a.v0)?, "v0")?;
            let h = HestonParams {
                mu: rate - q,
                kappa: required(f.f64("kappa", a.kappa)?, "kappa")?,
                theta: required(f.f64("theta", a.theta)?, "theta")?,
                xi: required(f.f64("xi", a.xi)?, "xi")?,
                rho,
                v0,
            };
            let m = MarketParams::new(spot, rate, v0.sqrt(), expiry, q)?;
            let (v, secs) = timed(|| heston_price(&p, &h, &m, &cfg));
            (v?, v0.sqrt(), secs)
        }
        "sabr" => {
            let sigma0 = required(f.f64("sigma0", a.sigma0)?, "sigma0")?;
            let s = SabrParams {
                alpha: required(f.f64("alpha", a.alpha)?, "alpha")?,
                beta: f.f64("beta", a.beta)?.unwrap_or(0.0),
                rho,
                f0: f.f64("f0", a.f0)?.unwrap_or(spot * ((rate - q) * expiry).exp()),
                sigma0,
            };
            let m = MarketParams::new(spot, rate, sigma0, expiry, q)?;
            let (v, secs) = timed(|| sabr_price(&p, &s, &m, &cfg));
            (v?, sigma0, secs)
        }
        other => return Err(CliError::Input(format!("--model must be heston or sabr, got `{other}`"))),
    };
    let mut rows = vec![("model", model.clone()), ("instrument", p.describe()), ("price", format!("{price:.10}"))];
    let flat = MarketParams::new(spot, rate, reference_vol, expiry, q)?;
    if let Some(bs) = analytic(&p, &flat) {
        rows.push(("black-scholes at initial vol", format!("{bs:.10}")));
    }
    rows.push(("volatility states", cfg.vol_states.to_string()));
    rows.push(("wall time [s]", format!("{secs:.3} ({TIMING_NOTE})")));
    Ok(table(&rows))
}

fn run_export(a: &ExportArgs, f: &FileConfig) -> Res<String> {
    let out = required(path(f, "export", &a.export)?, "export")?;
    match f.u64("dims", a.dims)?.unwrap_or(1) {
        1 => export_1d(a, f, &out),
        2 => export_2d(a, f, &out),
        d => Err(CliError::Input(format!("--dims must be 1 or 2, got {d}"))),
    }
}

fn export_1d(a: &ExportArgs, f: &FileConfig, out: &Path) -> Res<String> {
    let spot = required(f.f64("spot", a.market.spot)?, "spot")?;
    let rate = required(f.f64("rate", a.market.rate)?, "rate")?;
    let vol = required(f.f64("vol", a.market.vol)?, "vol")?;
    let expiry = required(f.f64("expiry", a.market.expiry)?, "expiry")?;
    let q = f.f64("dividend-yield", a.market.dividend_yield)?.unwrap_or(0.0);
    let m = MarketParams::new(spot, rate, vol, expiry, q)?;
    let cfg = grid_config(&a.grid, f, expiry)?;
    let coords = f.string("coords", a.coords.as_deref())?.unwrap_or_else(|| "log".into());
    let spec = builtin_transforms(Builtin::Samuelson, m.rate, m.vol)?.with_yield(q).spec;
    let mut d: GridDistribution = simulate(&InitialCondition::PointMass(spot.ln()), &spec, &cfg, Keep::Terminal)?.remove(0);
    match coords.as_str() {
        "log" => {}
        "price" => d = d.change_of_variable(f64::exp)?,
        other => return Err(CliError::Input(format!("--coords must be log or price, got `{other}`"))),
    }
    write_csv(&d, out)?;
    Ok(table(&[("exported", out.display().to_string()), ("coordinates", coords), ("grid points", d.len().to_string())]))
}

fn export_2d(a: &ExportArgs, f: &FileConfig, out: &Path) -> Res<String> {
    let s1 = required(f.f64("spot", a.market.spot)?, "spot")?;
    let s2 = required(f.f64("spot2", a.spot2)?, "spot2")?;
    let v1 = required(f.f64("vol", a.market.vol)?, "vol")?;
    let v2 = required(f.f64("vol2", a.vol2)?, "vol2")?;
    let rate = required(f.f64("rate", a.market.rate)?, "rate")?;
    let expiry = required(f.f64("expiry", a.market.expiry)?, "expiry")?;
    let rho = f.f64("rho", a.rho)?.unwrap_or(0.0);
    if !(s1 > 0.0 && s2 > 0.0) {
        return Err(CliError::Input("spots must be positive".into()));
    }
    let cfg = grid_config(&a.grid, f, expiry)?;
    let h = (cfg.spacing, cfg.spacing);
    let k = Kernel2D::correlated((v1, v2), rho, cfg.dt, h, cfg.threshold)?;
    let drift = Drift2D::Constant(rate - 0.5 * v1 * v1, rate - 0.5 * v2 * v2);
    let mut g = Grid2D::point_mass((s1.ln(), s2.ln()), h)?;
    for step in 1..=cfg.steps {
        g = step_2d(&g, &drift, &k, (step - 1) as f64 * cfg.dt, cfg.dt, cfg.threshold)?;
    }
    g.write_csv(out)?;
    let (nx, ny) = g.shape();
    Ok(table(&[("exported", out.display().to_string()), ("coordinates", "log prices".into()), ("grid", format!("{nx} x {ny}"))]))
}
