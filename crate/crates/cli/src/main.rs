use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use markpower::dynamics::hhi_of_sales;
use markpower::numeric::{nearest_rank, pairwise_sum};
use markpower::oracle::{
    gen_cobb_douglas_panel, gen_fixed_cost_firm, gen_network_economy, gen_vertical_economy, log_log_slope,
    IndustryTruth, NetworkEconomy, NetworkSpec, SyntheticSpec, Topology,
};
use markpower::panel::{load_firm_panel, load_macro, write_firm_panel, write_macro, SchemaMap};
use markpower::pipeline::{parse_year_range, run_pipeline, verify_outputs, ConfigBuilder, Manifest};
use markpower::ErrorClass;

#[derive(Parser)]
#[command(name = "markpower", version, about = "Firm-level markups and Domar-weighted profit shares")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run ingest, estimation, measurement, aggregation and reporting.
    Pipeline(PipelineArgs),
    /// Write a synthetic economy or panel with its ground truth.
    Synth {
        #[command(subcommand)]
        kind: SynthKind,
    },
    /// Re-check the accounting identities on a run's outputs.
    Verify {
        /// Output directory of a previous run.
        dir: PathBuf,
    },
    /// Summarise a firm panel or a finished run.
    Stats(StatsArgs),
}

#[derive(Args)]
struct PipelineArgs {
    /// Key = value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// baseline, deu_replication, no_intangibles or cogs_only.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Inclusive year range, e.g. 1980:2019.
    #[arg(long, value_name = "A:B")]
    year_range: Option<String>,
    /// Firm-level CSV.
    #[arg(long)]
    firm: Option<PathBuf>,
    /// Macro series CSV.
    #[arg(long = "macro")]
    macro_path: Option<PathBuf>,
    /// Fail on any non-converged estimation window.
    #[arg(long)]
    strict: bool,
    /// Extra `key=value` settings, applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

#[derive(Subcommand)]
enum SynthKind {
    /// The two-producer vertical economy.
    Vertical {
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// A Cobb-Douglas firm panel in the firm and macro CSV schemas.
    Panel(PanelArgs),
    /// A random acyclic production network.
    Network {
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        nodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Link probability for each ordered pair of producers.
        #[arg(long, default_value_t = 0.3)]
        density: f64,
        /// random, vertical or isolated.
        #[arg(long, default_value = "random")]
        topology: String,
        /// Price-taking input markets.
        #[arg(long)]
        no_markdowns: bool,
    },
    /// Cross-section from a technology with a fixed input requirement.
    Fixedcost {
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long, default_value_t = 0.9)]
        alpha: f64,
        #[arg(long, default_value_t = 3.0)]
        l_bar: f64,
        /// Grid centre.
        #[arg(long, default_value_t = 10.0)]
        center: f64,
        /// Relative spacing of grid points.
        #[arg(long, default_value_t = 0.001)]
        step: f64,
        /// Points on each side of the centre.
        #[arg(long, default_value_t = 10)]
        half_width: usize,
    },
}

#[derive(Args)]
struct PanelArgs {
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 200)]
    firms: usize,
    #[arg(long, default_value_t = 20)]
    years: usize,
    #[arg(long, default_value_t = 2000)]
    first_year: i32,
    /// Comma-separated `code:theta_v:theta_k` triples.
    #[arg(long, default_value = "31:0.7:0.3")]
    industries: String,
    /// Productivity persistence.
    #[arg(long, default_value_t = 0.8)]
    rho: f64,
    #[arg(long, default_value_t = 0.005)]
    innovation_sd: f64,
    /// Output measurement noise (standard deviation of log output).
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    /// Share of firms with partial spells.
    #[arg(long, default_value_t = 0.0)]
    churn: f64,
    /// Geometric mean markup.
    #[arg(long, default_value_t = 1.2)]
    markup_mean: f64,
    /// Dispersion of log markups across firm-years.
    #[arg(long, default_value_t = 0.5)]
    markup_sd: f64,
}

#[derive(Args)]
struct StatsArgs {
    /// Firm-level CSV to describe.
    #[arg(long, conflicts_with = "run")]
    firm: Option<PathBuf>,
    /// Macro CSV, for the input-output multiplier.
    #[arg(long = "macro", requires = "firm")]
    macro_path: Option<PathBuf>,
    /// Output directory of a finished run.
    #[arg(long)]
    run: Option<PathBuf>,
}

/// A failure carrying its exit status.
struct Failure {
    code: u8,
    err: anyhow::Error,
}

fn classify(err: anyhow::Error) -> Failure {
    let code = match err.downcast_ref::<markpower::Error>().map(markpower::Error::class) {
        Some(ErrorClass::Config) => 2,
        Some(ErrorClass::Data) | None => 3,
        Some(ErrorClass::NonConvergence) => 4,
        Some(ErrorClass::Verification) => 5,
    };
    Failure { code, err }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Pipeline(args) => pipeline(args),
        Command::Synth { kind } => synth(kind).map_err(|e| Failure { code: 2, err: e }),
        Command::Verify { dir } => verify(&dir),
        Command::Stats(args) => stats(args).map_err(classify),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.err);
            ExitCode::from(f.code)
        }
    }
}

fn pipeline(args: PipelineArgs) -> Result<(), Failure> {
    let config = (|| -> Result<_> {
        let mut b = ConfigBuilder::new();
        if let Some(path) = &args.config {
            b = b.file(path)?;
        }
        let cli = "command line";
        if let Some(p) = &args.preset {
            b = b.set("preset", p.clone(), cli);
        }
        if let Some(p) = &args.out {
            b = b.set("paths.out", p.display().to_string(), cli);
        }
        if let Some(s) = args.seed {
            b = b.set("seed", s.to_string(), cli);
        }
        if let Some(r) = &args.year_range {
            parse_year_range(r)?;
            b = b.set("years.range", r.clone(), cli);
        }
        if let Some(p) = &args.firm {
            b = b.set("paths.firms", p.display().to_string(), cli);
        }
        if let Some(p) = &args.macro_path {
            b = b.set("paths.macro", p.display().to_string(), cli);
        }
        if args.strict {
            b = b.set("estimate.strict", "true", cli);
        }
        for kv in &args.sets {
            let Some((k, v)) = kv.split_once('=') else {
                return Err(markpower::Error::Config(format!("--set expects KEY=VALUE, got `{kv}`")).into());
            };
            b = b.set(k.trim(), v.trim(), cli);
        }
        Ok(b.build()?)
    })()
    .map_err(classify)?;

    for o in &config.overrides {
        log::info!("override {} = {} (preset: {}, from {})", o.key, o.value, o.preset_value, o.source);
    }
    let summary = run_pipeline(&config)
        .context("pipeline failed")
        .map_err(classify)?;
    let m = &summary.manifest;
    println!(
        "preset {} | config {} | {} rows in, {} after cleaning, {} firm-years measured",
        m.preset,
        &m.config_hash[..12],
        m.rows_in,
        m.rows_clean,
        summary.measures.len()
    );
    for (name, rec) in &m.outputs {
        println!("  {:<32} {:>7} rows", name, rec.rows);
    }
    for w in &m.warnings {
        println!("  warning: {w}");
    }
    println!("outputs in {}", summary.out.display());
    Ok(())
}

fn write_truth(out: &Path, stem: &str, economy: &NetworkEconomy) -> Result<()> {
    economy.truth.check_closure(1e-12)?;
    economy.truth.write_csv(
        &out.join(format!("{stem}_truth.csv")),
        &out.join(format!("{stem}_totals_truth.csv")),
    )?;
    let mut w = csv::Writer::from_path(out.join(format!("{stem}_edges.csv")))?;
    w.write_record(["buyer", "supplier", "theta", "nu", "spending"])?;
    for (b, node) in economy.nodes.iter().enumerate() {
        for s in &node.suppliers {
            let spend = economy.sales[b] * s.input.theta * s.input.nu / node.markup;
            w.write_record([
                node.id.clone(),
                economy.nodes[s.node].id.clone(),
                s.input.theta.to_string(),
                s.input.nu.to_string(),
                spend.to_string(),
            ])?;
        }
    }
    w.flush()?;
    println!(
        "{} producers | GDP {} | multiplier {} | profit share {}",
        economy.nodes.len(),
        economy.gdp(),
        economy.chi(),
        economy.profit_share()
    );
    Ok(())
}

fn parse_industries(s: &str) -> Result<Vec<IndustryTruth>> {
    s.split(',')
        .map(|t| {
            let parts: Vec<&str> = t.trim().split(':').collect();
            let [code, tv, tk] = parts[..] else {
                bail!("industry `{t}` is not code:theta_v:theta_k");
            };
            Ok(IndustryTruth {
                code: code.parse().with_context(|| format!("industry code `{code}`"))?,
                theta_v: tv.parse().with_context(|| format!("theta_v `{tv}`"))?,
                theta_k: tk.parse().with_context(|| format!("theta_k `{tk}`"))?,
            })
        })
        .collect()
}

fn synth(kind: SynthKind) -> Result<()> {
    match kind {
        SynthKind::Vertical { out } => {
            fs::create_dir_all(&out)?;
            write_truth(&out, "vertical", &gen_vertical_economy())?;
        }
        SynthKind::Network {
            out,
            nodes,
            seed,
            density,
            topology,
            no_markdowns,
        } => {
            let topology = match topology.as_str() {
                "random" => Topology::RandomAcyclic { density },
                "vertical" => Topology::Vertical,
                "isolated" => Topology::Isolated,
                t => bail!("unknown topology `{t}` (random, vertical or isolated)"),
            };
            let spec = NetworkSpec {
                seed,
                n_nodes: nodes,
                topology,
                markdown_range: if no_markdowns { None } else { NetworkSpec::default().markdown_range },
                ..NetworkSpec::default()
            };
            let economy = gen_network_economy(&spec)?;
            fs::create_dir_all(&out)?;
            write_truth(&out, "network", &economy)?;
        }
        SynthKind::Panel(a) => {
            let spec = SyntheticSpec {
                seed: a.seed,
                n_firms: a.firms,
                n_years: a.years,
                first_year: a.first_year,
                industries: parse_industries(&a.industries)?,
                rho: a.rho,
                innovation_sd: a.innovation_sd,
                noise_sd: a.noise,
                churn: a.churn,
                markup_mean: a.markup_mean,
                markup_sd: a.markup_sd,
                ..SyntheticSpec::default()
            };
            let (data, truth) = gen_cobb_douglas_panel(&spec)?;
            fs::create_dir_all(&a.out)?;
            write_firm_panel(a.out.join("firms.csv"), data.observations())?;
            write_macro(a.out.join("macro.csv"), &data.macro_years().values().cloned().collect::<Vec<_>>())?;
            truth.write_csv(&a.out.join("firms_truth.csv"), &a.out.join("totals_truth.csv"))?;
            println!(
                "{} firm-years over {} years written to {}",
                data.len(),
                data.years().len(),
                a.out.display()
            );
        }
        SynthKind::Fixedcost {
            out,
            alpha,
            l_bar,
            center,
            step,
            half_width,
        } => {
            let h = half_width as i64;
            let grid: Vec<f64> = (-h..=h).map(|i| center * (1.0 + step * i as f64)).collect();
            let slice = gen_fixed_cost_firm(alpha, l_bar, &grid)?;
            fs::create_dir_all(&out)?;
            let mut w = csv::Writer::from_path(out.join("fixedcost.csv"))?;
            w.write_record(["l", "y", "local_elasticity"])?;
            for ((l, y), p) in slice.l.iter().zip(&slice.y).zip(&slice.predicted) {
                w.write_record([l.to_string(), y.to_string(), p.to_string()])?;
            }
            w.flush()?;
            let slope = log_log_slope(&slice.l, &slice.y)?;
            let target = markpower::oracle::local_elasticity(alpha, center, l_bar);
            println!("log-log slope {slope} | local elasticity at centre {target}");
        }
    }
    Ok(())
}

fn verify(dir: &Path) -> Result<(), Failure> {
    let report = verify_outputs(dir)
        .with_context(|| format!("cannot verify {}", dir.display()))
        .map_err(classify)?;
    print!("{report}");
    if report.passed() {
        Ok(())
    } else {
        let names: Vec<String> = report
            .failures()
            .map(|c| format!("{} (residual {:.3e})", c.identity, c.residual))
            .collect();
        Err(Failure {
            code: 5,
            err: anyhow::anyhow!("identities violated: {}", names.join(", ")),
        })
    }
}

fn stats(args: StatsArgs) -> Result<()> {
    if let Some(dir) = args.run {
        let m = Manifest::read(&dir)?;
        let path = dir.join(format!("aggregates_{}.csv", m.preset));
        let mut rdr = csv::Reader::from_path(&path).with_context(|| format!("reading {}", path.display()))?;
        let headers = rdr.headers()?.clone();
        let col = |name: &str| headers.iter().position(|h| h == name);
        let cols: Vec<(&str, usize)> = ["year", "n_firms", "chi", "mu_agg", "rs_adj_bar", "profit_share_domar"]
            .iter()
            .filter_map(|n| Some((*n, col(n)?)))
            .collect();
        println!("preset {} | {} warnings", m.preset, m.warnings.len());
        println!("{}", cols.iter().map(|(n, _)| format!("{n:>20}")).collect::<String>());
        for r in rdr.records() {
            let r = r?;
            let line: String = cols
                .iter()
                .map(|(_, i)| {
                    let v = r.get(*i).unwrap_or("");
                    match v.parse::<f64>() {
                        Ok(x) if v.contains('.') => format!("{x:>20.6}"),
                        _ => format!("{v:>20}"),
                    }
                })
                .collect();
            println!("{line}");
        }
        return Ok(());
    }
    let Some(firm) = args.firm else {
        bail!(markpower::Error::Config("stats needs --firm or --run".into()));
    };
    let data = load_firm_panel(&firm, &SchemaMap::default())?;
    let macros = match &args.macro_path {
        Some(p) => load_macro(p)?,
        None => Vec::new(),
    };
    println!(
        "{} rows | {} firms | {} years",
        data.len(),
        data.observations()
            .iter()
            .map(|o| o.firm_id.as_str())
            .collect::<std::collections::BTreeSet<_>>()
            .len(),
        data.years().len()
    );
    println!(
        "{:>6} {:>7} {:>16} {:>12} {:>16} {:>10}",
        "year", "firms", "sales", "hhi", "median sale/cogs", "chi"
    );
    for year in data.years() {
        let rows = data.year_slice(year);
        let sales: Vec<f64> = rows.iter().filter_map(|o| o.sale).collect();
        let ratios: Vec<f64> = rows
            .iter()
            .filter_map(|o| Some(o.sale? / o.cogs?))
            .filter(|r| r.is_finite())
            .collect();
        let hhi = hhi_of_sales(&sales).map(|h| format!("{h:.6}")).unwrap_or_else(|_| "-".into());
        let median = nearest_rank(&ratios, 0.5).map(|m| format!("{m:.4}")).unwrap_or_else(|| "-".into());
        let chi = macros
            .iter()
            .find(|m| m.year == year)
            .map(|m| format!("{:.4}", m.chi()))
            .unwrap_or_else(|| "-".into());
        println!(
            "{year:>6} {:>7} {:>16.2} {hhi:>12} {median:>16} {chi:>10}",
            rows.len(),
            pairwise_sum(&sales)
        );
    }
    Ok(())
}
