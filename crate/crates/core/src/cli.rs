//! Command-line front end.
//!
//! Exit codes: 0 on success, 2 when an input fails validation, 1 when a
//! numerical step fails (or `validate` finds disagreement).

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::claims::{ClaimSpec, RiskAversion, VolClaim};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::model::{Model, ModelParams};
use crate::oracle::{mc_price, pde_price, PdeGrid, SimSpec};
use crate::pathsim::{generate_ledger, LedgerSpec};
use crate::pricer::{
    market_price_of_risk, surface, write_quotes_csv, GridConfig, Pricer, Quote, SurfaceRow, SurfaceSpec, CSV_SCHEMA,
};

#[derive(Debug, Parser)]
#[command(name = "volquote", version, about = "Indifference prices and hedges for pure volatility claims")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Quote one claim at one state.
    Price(Common),
    /// Quote a grid over initial squared volatility, maturity and risk aversion.
    Surface(Common),
    /// Quote along one simulated volatility path.
    Path(Common),
    /// Market price of risk over a (y0, T) grid.
    Mpr(Common),
    /// Compare transform, Monte Carlo and PDE prices.
    Validate(ValidateArgs),
    /// Measure quote throughput.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Default, Args)]
struct Common {
    /// Stock drift.
    #[arg(long, allow_hyphen_values = true)]
    mu: Option<f64>,
    /// Risk-free rate.
    #[arg(long, allow_hyphen_values = true)]
    r: Option<f64>,
    /// Stock/volatility correlation.
    #[arg(long, allow_hyphen_values = true)]
    rho: Option<f64>,
    /// Mean-reversion speed of the shadow rate.
    #[arg(long)]
    alpha: Option<f64>,
    /// Long-run shadow rate.
    #[arg(long)]
    kappa: Option<f64>,
    /// Shadow-rate volatility.
    #[arg(long)]
    beta: Option<f64>,
    /// Risk aversion.
    #[arg(long)]
    gamma: Option<f64>,
    /// Initial squared volatility.
    #[arg(long)]
    y0: Option<f64>,
    /// Maturity in years.
    #[arg(long = "T")]
    maturity: Option<f64>,
    /// Stock price.
    #[arg(long)]
    s0: Option<f64>,
    /// put:K=.., spread:K1=..,K2=.., const:k=.. or table:<file.csv>.
    #[arg(long)]
    claim: Option<String>,
    /// Surface axes, e.g. y0=0.01:0.5:50,T=0.1:1:10,log2gamma=-5:5:11.
    #[arg(long)]
    grid: Option<String>,
    /// Fourier lattice size (power of two).
    #[arg(long = "n-fft")]
    n_fft: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// key=value file; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Monte Carlo paths.
    #[arg(long)]
    paths: Option<usize>,
    /// Monte Carlo time steps.
    #[arg(long)]
    steps: Option<usize>,
    /// Path step size.
    #[arg(long)]
    dt: Option<f64>,
}

#[derive(Debug, Clone, Args)]
struct ValidateArgs {
    /// `reference` for the reference point, `custom` to use the other flags.
    #[arg(long)]
    point: Option<String>,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Clone, Args)]
struct BenchArgs {
    /// Number of quotes (at least 100).
    #[arg(long)]
    n: Option<usize>,
    #[command(flatten)]
    common: Common,
}

/// Inputs after merging defaults, config file and flags; all validated.
struct Resolved {
    model: Model,
    pricer: Pricer,
    ra: RiskAversion,
    y0: f64,
    maturity: f64,
    s0: f64,
    claim: VolClaim,
    claim_text: String,
    grid: Option<String>,
    seed: u64,
    out: Option<PathBuf>,
    format: Format,
    paths: usize,
    steps: usize,
    dt: Option<f64>,
    point: String,
    n: usize,
}

fn pick<T: std::str::FromStr + Clone>(flag: &Option<T>, cfg: &RunConfig, key: &str, default: T) -> Result<T> {
    match flag {
        Some(v) => Ok(v.clone()),
        None => Ok(cfg.parsed(key)?.unwrap_or(default)),
    }
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        <Format as ValueEnum>::from_str(s, true)
    }
}

fn resolve(c: &Common, point: Option<&str>, n: Option<usize>) -> Result<Resolved> {
    let cfg = match &c.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    let d = ModelParams::reference();
    let params = ModelParams {
        mu: pick(&c.mu, &cfg, "mu", d.mu)?,
        r: pick(&c.r, &cfg, "r", d.r)?,
        rho: pick(&c.rho, &cfg, "rho", d.rho)?,
        alpha: pick(&c.alpha, &cfg, "alpha", d.alpha)?,
        kappa: pick(&c.kappa, &cfg, "kappa", d.kappa)?,
        beta: pick(&c.beta, &cfg, "beta", d.beta)?,
    };
    let model = Model::new(params)?;
    let gamma = pick(&c.gamma, &cfg, "gamma", 1.0)?;
    let ra = RiskAversion::new(gamma, params.rho)?;
    let y0 = pick(&c.y0, &cfg, "y0", 0.15)?;
    let maturity = pick(&c.maturity, &cfg, "T", 1.0)?;
    let s0 = pick(&c.s0, &cfg, "s0", 1.0)?;
    model.state(0.0, maturity, y0, s0)?;
    let claim_text = pick(&c.claim, &cfg, "claim", "put:K=0.15".to_string())?;
    let claim = ClaimSpec::parse(&claim_text)?.resolve()?;
    let grid = c.grid.clone().or_else(|| cfg.get("grid").map(str::to_string));
    if let Some(g) = &grid {
        g.parse::<SurfaceSpec>()?;
    }
    let n_fft = pick(&c.n_fft, &cfg, "n_fft", 4096)?;
    let pricer = Pricer::new(model).with_grid(GridConfig::with_points(n_fft)?);
    let paths = pick(&c.paths, &cfg, "paths", 1_000_000)?;
    let steps = pick(&c.steps, &cfg, "steps", 256)?;
    SimSpec::new(paths, steps, 0).validate()?;
    let dt = match c.dt {
        Some(v) => Some(v),
        None => cfg.parsed("dt")?,
    };
    let point = match point {
        Some(p) => p.to_string(),
        None => cfg.get("point").unwrap_or("reference").to_string(),
    };
    if point != "reference" && point != "custom" {
        return Err(Error::Config(format!("point `{point}`: expected reference or custom")));
    }
    let n = match n {
        Some(v) => v,
        None => cfg.parsed("n")?.unwrap_or(1000),
    };
    Ok(Resolved {
        model,
        pricer,
        ra,
        y0,
        maturity,
        s0,
        claim,
        claim_text,
        grid,
        seed: pick(&c.seed, &cfg, "seed", 42)?,
        out: c.out.clone().or_else(|| cfg.get("out").map(PathBuf::from)),
        format: pick(&c.format, &cfg, "format", Format::Csv)?,
        paths,
        steps,
        dt,
        point,
        n,
    })
}

#[derive(Serialize)]
struct QuoteRow<'a> {
    y0: f64,
    #[serde(rename = "T")]
    maturity: f64,
    gamma: f64,
    #[serde(flatten)]
    quote: &'a Quote,
}

fn write_rows(out: &mut dyn Write, rows: &[SurfaceRow], format: Format) -> Result<()> {
    match format {
        Format::Csv => write_quotes_csv(out, rows),
        Format::Json => {
            let rows: Vec<QuoteRow> = rows
                .iter()
                .map(|r| QuoteRow {
                    y0: r.y0,
                    maturity: r.maturity,
                    gamma: r.gamma,
                    quote: &r.quote,
                })
                .collect();
            write_json(out, &rows)
        }
    }
}

fn write_json<T: Serialize>(out: &mut dyn Write, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut *out, value)?;
    writeln!(out)?;
    Ok(())
}

fn write_table<const K: usize>(out: &mut dyn Write, header: [&str; K], rows: &[[f64; K]]) -> Result<()> {
    writeln!(out, "{CSV_SCHEMA}")?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.iter().map(|v| format!("{v:e}")))?;
    }
    w.flush()?;
    Ok(())
}

fn price(r: &Resolved, out: &mut dyn Write) -> Result<()> {
    let state = r.model.state(0.0, r.maturity, r.y0, r.s0)?;
    let quote = r.pricer.quote(&r.claim, &r.ra, &state)?;
    let row = SurfaceRow {
        y0: r.y0,
        maturity: r.maturity,
        gamma: r.ra.gamma,
        quote,
    };
    write_rows(out, &[row], r.format)
}

fn surface_spec(r: &Resolved) -> Result<SurfaceSpec> {
    match &r.grid {
        Some(text) => {
            let mut spec: SurfaceSpec = text.parse()?;
            if !text.contains("gamma") {
                spec.gammas = vec![r.ra.gamma];
            }
            Ok(spec)
        }
        None => Ok(SurfaceSpec {
            gammas: vec![r.ra.gamma],
            ..SurfaceSpec::default()
        }),
    }
}

fn run_surface(r: &Resolved, out: &mut dyn Write) -> Result<()> {
    let spec = surface_spec(r)?;
    let rows = surface(&r.pricer, &r.claim, &spec, r.s0)?;
    write_rows(out, &rows, r.format)
}

fn run_path(r: &Resolved, out: &mut dyn Write) -> Result<()> {
    let spec = LedgerSpec {
        y0: r.y0,
        s0: r.s0,
        maturity: r.maturity,
        dt: r.dt.unwrap_or(r.maturity / 250.0),
        seed: r.seed,
    };
    let ledger = generate_ledger(&r.pricer, &r.claim, &r.ra, &spec)?;
    match r.format {
        Format::Csv => ledger.write_csv(out),
        Format::Json => write_json(out, &ledger),
    }
}

fn run_mpr(r: &Resolved, out: &mut dyn Write) -> Result<()> {
    let spec = surface_spec(r)?;
    let cells: Vec<(f64, f64)> = spec
        .y0
        .iter()
        .flat_map(|&y| spec.maturities.iter().map(move |&t| (y, t)))
        .collect();
    let rows: Vec<[f64; 7]> = cells
        .par_iter()
        .map(|&(y0, maturity)| {
            let state = r.model.state(0.0, maturity, y0, r.s0)?;
            let free = market_price_of_risk(&r.pricer, None, &state)?;
            let dp = r.pricer.densities(&state)?;
            let with = market_price_of_risk(&r.pricer, Some((&r.claim, &r.ra, &dp)), &state)?;
            Ok([y0, maturity, free.lambda1, free.lambda2, free.lambda2_closed, free.rel_gap, with.lambda2])
        })
        .collect::<Result<_>>()?;
    match r.format {
        Format::Csv => write_table(
            out,
            ["y0", "T", "lambda1", "lambda2", "lambda2_closed", "rel_gap", "lambda2_claim"],
            &rows,
        ),
        Format::Json => write_json(out, &rows),
    }
}

#[derive(Debug, Serialize)]
struct PointInfo {
    name: String,
    params: ModelParams,
    gamma: f64,
    y0: f64,
    #[serde(rename = "T")]
    maturity: f64,
    claim: String,
    paths: usize,
    steps: usize,
    seed: u64,
}

#[derive(Debug, Serialize)]
struct ZScores {
    fft_mc: f64,
    pde_mc: f64,
    fft_pde: f64,
}

#[derive(Debug, Serialize)]
struct ValidationReport {
    point: PointInfo,
    pi_fft: f64,
    pi_mc: f64,
    se_mc: f64,
    pi_pde: f64,
    z_scores: ZScores,
    pass: bool,
}

fn agree(a: f64, b: f64, se: f64) -> bool {
    (a - b).abs() <= (0.01 * a.abs().max(b.abs())).max(3.0 * se)
}

fn run_validate(r: &Resolved, out: &mut dyn Write) -> Result<bool> {
    let (model, claim, claim_text, ra, y0, maturity) = if r.point == "reference" {
        let m = Model::reference();
        let ra = RiskAversion::new(1.0, m.params.rho)?;
        (m, VolClaim::put(0.15)?, "put:K=0.15".to_string(), ra, 0.15, 1.0)
    } else {
        (r.model, r.claim.clone(), r.claim_text.clone(), r.ra, r.y0, r.maturity)
    };
    let pricer = Pricer::new(model).with_grid(r.pricer.grid);
    let state = model.state(0.0, maturity, y0, r.s0)?;
    let pi_fft = pricer.quote(&claim, &ra, &state)?.pi;
    let mc = mc_price(&model, &claim, &ra, &state, &SimSpec::new(r.paths, r.steps, r.seed))?;
    let pde = pde_price(&model, &claim, &ra, &state, &PdeGrid::for_state(&model, &state))?;
    let (pi_mc, se_mc) = (mc.pi.mean, mc.pi.std_error);
    let z = |a: f64, b: f64| if se_mc > 0.0 { (a - b) / se_mc } else { 0.0 };
    let pass = agree(pi_fft, pi_mc, se_mc) && agree(pde.pi, pi_mc, se_mc) && agree(pi_fft, pde.pi, se_mc);
    let report = ValidationReport {
        point: PointInfo {
            name: r.point.clone(),
            params: model.params,
            gamma: ra.gamma,
            y0,
            maturity,
            claim: claim_text,
            paths: r.paths,
            steps: r.steps,
            seed: r.seed,
        },
        pi_fft,
        pi_mc,
        se_mc,
        pi_pde: pde.pi,
        z_scores: ZScores {
            fft_mc: z(pi_fft, pi_mc),
            pde_mc: z(pde.pi, pi_mc),
            fft_pde: z(pi_fft, pde.pi),
        },
        pass,
    };
    write_json(out, &report)?;
    Ok(pass)
}

#[derive(Debug, Serialize)]
struct BenchReport {
    n: usize,
    n_fft: usize,
    seconds: f64,
    quotes_per_sec: f64,
}

/// Quotes `n` random `(y0, T)` points in `[0.05, 0.5] x [0.1, 1]`.
pub fn bench_quotes(pricer: &Pricer, claim: &VolClaim, ra: &RiskAversion, n: usize, seed: u64) -> Result<(f64, f64)> {
    if n < 100 {
        return Err(Error::Config(format!("bench needs at least 100 quotes, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points: Vec<(f64, f64)> = (0..n)
        .map(|_| (rng.random_range(0.05..0.5), rng.random_range(0.1..1.0)))
        .collect();
    let start = Instant::now();
    points
        .par_iter()
        .map(|&(y0, t)| {
            let state = pricer.model.state(0.0, t, y0, 1.0)?;
            pricer.quote(claim, ra, &state).map(|_| ())
        })
        .collect::<Result<()>>()?;
    let seconds = start.elapsed().as_secs_f64();
    Ok((seconds, n as f64 / seconds))
}

fn run_bench(r: &Resolved, out: &mut dyn Write) -> Result<()> {
    let (seconds, qps) = bench_quotes(&r.pricer, &r.claim, &r.ra, r.n, r.seed)?;
    let report = BenchReport {
        n: r.n,
        n_fft: r.pricer.grid.n_points,
        seconds,
        quotes_per_sec: qps,
    };
    match r.format {
        Format::Csv => write_table(
            out,
            ["n", "n_fft", "seconds", "quotes_per_sec"],
            &[[r.n as f64, report.n_fft as f64, seconds, qps]],
        ),
        Format::Json => write_json(out, &report),
    }
}

fn execute(command: &Command, stdout: &mut dyn Write) -> Result<bool> {
    let (common, point, n) = match command {
        Command::Price(c) | Command::Surface(c) | Command::Path(c) | Command::Mpr(c) => (c, None, None),
        Command::Validate(v) => (&v.common, Some(v.point.as_deref().unwrap_or("reference")), None),
        Command::Bench(b) => (&b.common, None, b.n),
    };
    let r = resolve(common, point, n)?;
    let mut file;
    let out: &mut dyn Write = match &r.out {
        Some(path) => {
            file = BufWriter::new(File::create(path)?);
            &mut file
        }
        None => stdout,
    };
    let ok = match command {
        Command::Price(_) => price(&r, out).map(|_| true),
        Command::Surface(_) => run_surface(&r, out).map(|_| true),
        Command::Path(_) => run_path(&r, out).map(|_| true),
        Command::Mpr(_) => run_mpr(&r, out).map(|_| true),
        Command::Validate(_) => run_validate(&r, out),
        Command::Bench(_) => run_bench(&r, out).map(|_| true),
    }?;
    out.flush()?;
    Ok(ok)
}

/// Runs the command line `args` (program name first) and returns the
/// process exit code.
pub fn run_with<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            let sink: &mut dyn Write = if e.use_stderr() { stderr } else { stdout };
            let _ = sink.write_all(text.as_bytes());
            return e.exit_code();
        }
    };
    match execute(&cli.command, stdout) {
        Ok(true) => 0,
        Ok(false) => {
            let _ = writeln!(stderr, "volquote: validation methods disagree");
            1
        }
        Err(e) => {
            let _ = writeln!(stderr, "volquote: {e}");
            if e.is_validation() {
                2
            } else {
                1
            }
        }
    }
}

pub fn run() -> i32 {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock())
}
