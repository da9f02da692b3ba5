use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use cityflux::geo::{CostMetric, EARTH_DIAMETER_KM};
use cityflux::gravity::ModelFamily;
use cityflux::ingest::TimeWindow;
use cityflux::pipeline::{
    self, ClusterParams, CorrelateParams, ExtractParams, FitParams, IndicesParams, SynthParams,
};
use cityflux::synth::GravityScenario;

/// Inter-city workforce migration flux: extraction, gravity-model fitting,
/// trajectory clustering and development indices.
#[derive(Parser)]
#[command(name = "cityflux", version)]
struct Cli {
    /// Optional key=value config file; command-line flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Master seed for all randomized stages.
    #[arg(long)]
    seed: Option<u64>,

    /// Worker count hint; outputs never depend on it.
    #[arg(long)]
    workers: Option<usize>,

    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Reduce a message log to directed and undirected flux CSVs.
    Extract {
        #[command(flatten)]
        common: Common,
        /// Message log CSV: message_id,user_id,timestamp,city_id.
        #[arg(long)]
        messages: Option<PathBuf>,
        /// Registry CSV mapping raw location strings to city ids.
        #[arg(long)]
        registry: Option<PathBuf>,
        /// Window start, epoch seconds or RFC 3339.
        #[arg(long)]
        window_start: Option<String>,
        /// Window end, epoch seconds or RFC 3339.
        #[arg(long)]
        window_end: Option<String>,
    },
    /// Fit the 4-family x 3-metric model grid and score each cell with SSI.
    Fit {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        directed_flux: Option<PathBuf>,
        #[arg(long)]
        undirected_flux: Option<PathBuf>,
        #[arg(long)]
        attrs: Option<PathBuf>,
        /// Geographic distance table; computed from coordinates when absent.
        #[arg(long)]
        cost_geo: Option<PathBuf>,
        #[arg(long)]
        cost_travel_km: Option<PathBuf>,
        #[arg(long)]
        cost_travel_min: Option<PathBuf>,
        /// Earth diameter used for computed geographic distance, km.
        #[arg(long)]
        diameter_km: Option<f64>,
    },
    /// Cluster trajectory features, label patterns and emit all indices.
    Cluster {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        undirected_flux: Option<PathBuf>,
        #[arg(long)]
        attrs: Option<PathBuf>,
        #[arg(long)]
        cost_travel_min: Option<PathBuf>,
        /// Alternative cost table for sorting the index curves.
        #[arg(long)]
        locality_cost: Option<PathBuf>,
        /// Emit the heuristic representative-cities file.
        #[arg(long)]
        representative: bool,
        /// Cluster count of the kept model.
        #[arg(long)]
        k: Option<usize>,
        /// Lower bound of the diagnostic k scan.
        #[arg(long)]
        k_min: Option<usize>,
        /// Upper bound of the diagnostic k scan.
        #[arg(long)]
        k_max: Option<usize>,
    },
    /// Recompute index CSVs from an existing assignments file.
    Indices {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        undirected_flux: Option<PathBuf>,
        #[arg(long)]
        attrs: Option<PathBuf>,
        #[arg(long)]
        cost_travel_min: Option<PathBuf>,
        /// assignments.csv from the cluster command.
        #[arg(long)]
        assignments: Option<PathBuf>,
        /// Alternative cost table for sorting the index curves.
        #[arg(long)]
        locality_cost: Option<PathBuf>,
        /// Emit the heuristic representative-cities file.
        #[arg(long)]
        representative: bool,
    },
    /// Pearson correlation between flux and a pair-keyed covariate.
    Correlate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        flux: Option<PathBuf>,
        /// Covariate CSV: city_a,city_b,value.
        #[arg(long)]
        covariate: Option<PathBuf>,
    },
    /// Generate a synthetic gravity-law dataset for oracle tests.
    Synth {
        #[command(flatten)]
        common: Common,
        /// GM, G-GM, aveG-GM or dirG-GM.
        #[arg(long)]
        family: Option<String>,
        /// geo_km, travel_km or travel_min.
        #[arg(long)]
        metric: Option<String>,
        #[arg(long)]
        n_cities: Option<usize>,
        #[arg(long)]
        n_pairs: Option<usize>,
        #[arg(long)]
        log_a: Option<f64>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        noise_sigma: Option<f64>,
    },
}

/// File-backed option resolution: flag wins, then config key, then default.
struct Resolver {
    file: BTreeMap<String, String>,
}

impl Resolver {
    fn get<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>> {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.file.get(key) {
            Some(raw) => raw
                .parse::<T>()
                .map(Some)
                .map_err(|_| anyhow!("config key `{key}`: cannot parse `{raw}`")),
            None => Ok(None),
        }
    }

    fn require<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<T> {
        self.get(flag, key)?
            .ok_or_else(|| anyhow!("missing required option `--{}`", key.replace('_', "-")))
    }

    fn or_default<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Result<T> {
        Ok(self.get(flag, key)?.unwrap_or(default))
    }
}

fn parse_time(s: &str) -> Result<i64> {
    if let Ok(epoch) = s.parse::<i64>() {
        return Ok(epoch);
    }
    chrono::DateTime::parse_from_rfc3339(s)
        .map(|dt| dt.timestamp())
        .with_context(|| format!("`{s}` is neither epoch seconds nor RFC 3339"))
}

fn run() -> Result<u8> {
    let cli = Cli::parse();
    let file = match &cli.config {
        Some(path) => pipeline::read_config_file(path)?,
        None => BTreeMap::new(),
    };
    let r = Resolver { file };

    let outcome = match cli.command {
        Command::Extract {
            common,
            messages,
            registry,
            window_start,
            window_end,
        } => {
            let params = ExtractParams {
                messages: r.require(messages, "messages")?,
                registry: r.require(registry, "registry")?,
                window: TimeWindow {
                    start: parse_time(&r.require(window_start, "window_start")?)?,
                    end: parse_time(&r.require(window_end, "window_end")?)?,
                },
                seed: r.or_default(common.seed, "seed", 0)?,
                workers: r.or_default(common.workers, "workers", 1)?,
                out_dir: r.or_default(common.out, "out", PathBuf::from("out"))?,
            };
            pipeline::cmd_extract(&params)?
        }
        Command::Fit {
            common,
            directed_flux,
            undirected_flux,
            attrs,
            cost_geo,
            cost_travel_km,
            cost_travel_min,
            diameter_km,
        } => {
            let params = FitParams {
                directed_flux: r.require(directed_flux, "directed_flux")?,
                undirected_flux: r.require(undirected_flux, "undirected_flux")?,
                attrs: r.require(attrs, "attrs")?,
                cost_geo: r.get(cost_geo, "cost_geo")?,
                cost_travel_km: r.get(cost_travel_km, "cost_travel_km")?,
                cost_travel_min: r.get(cost_travel_min, "cost_travel_min")?,
                diameter_km: r.or_default(diameter_km, "diameter_km", EARTH_DIAMETER_KM)?,
                seed: r.or_default(common.seed, "seed", 0)?,
                workers: r.or_default(common.workers, "workers", 1)?,
                out_dir: r.or_default(common.out, "out", PathBuf::from("out"))?,
            };
            pipeline::cmd_fit(&params)?
        }
        Command::Cluster {
            common,
            undirected_flux,
            attrs,
            cost_travel_min,
            locality_cost,
            representative,
            k,
            k_min,
            k_max,
        } => {
            let params = ClusterParams {
                undirected_flux: r.require(undirected_flux, "undirected_flux")?,
                attrs: r.require(attrs, "attrs")?,
                cost_travel_min: r.require(cost_travel_min, "cost_travel_min")?,
                locality_cost: r.get(locality_cost, "locality_cost")?,
                representative: representative
                    || r.or_default(None, "representative", false)?,
                k: r.or_default(k, "k", 4)?,
                k_min: r.or_default(k_min, "k_min", 2)?,
                k_max: r.or_default(k_max, "k_max", 8)?,
                seed: r.or_default(common.seed, "seed", 0)?,
                workers: r.or_default(common.workers, "workers", 1)?,
                out_dir: r.or_default(common.out, "out", PathBuf::from("out"))?,
            };
            pipeline::cmd_cluster(&params)?
        }
        Command::Indices {
            common,
            undirected_flux,
            attrs,
            cost_travel_min,
            assignments,
            locality_cost,
            representative,
        } => {
            let params = IndicesParams {
                undirected_flux: r.require(undirected_flux, "undirected_flux")?,
                attrs: r.require(attrs, "attrs")?,
                cost_travel_min: r.require(cost_travel_min, "cost_travel_min")?,
                assignments: r.require(assignments, "assignments")?,
                locality_cost: r.get(locality_cost, "locality_cost")?,
                representative: representative
                    || r.or_default(None, "representative", false)?,
                seed: r.or_default(common.seed, "seed", 0)?,
                out_dir: r.or_default(common.out, "out", PathBuf::from("out"))?,
            };
            pipeline::cmd_indices(&params)?
        }
        Command::Correlate {
            common,
            flux,
            covariate,
        } => {
            let params = CorrelateParams {
                flux: r.require(flux, "flux")?,
                covariate: r.require(covariate, "covariate")?,
                seed: r.or_default(common.seed, "seed", 0)?,
                out_dir: r.or_default(common.out, "out", PathBuf::from("out"))?,
            };
            pipeline::cmd_correlate(&params)?
        }
        Command::Synth {
            common,
            family,
            metric,
            n_cities,
            n_pairs,
            log_a,
            alpha,
            beta,
            gamma,
            noise_sigma,
        } => {
            let family_str = r.or_default(family, "family", "G-GM".to_string())?;
            let family = ModelFamily::parse(&family_str)
                .ok_or_else(|| anyhow!("unknown family `{family_str}`"))?;
            let metric_str = r.or_default(metric, "metric", "travel_min".to_string())?;
            let metric = CostMetric::parse(&metric_str)
                .ok_or_else(|| anyhow!("unknown metric `{metric_str}`"))?;
            let seed = r.or_default(common.seed, "seed", 0)?;
            let mut scenario = GravityScenario::new(family, seed);
            scenario.metric = metric;
            scenario.n_cities = r.or_default(n_cities, "n_cities", scenario.n_cities)?;
            scenario.n_pairs = r.or_default(n_pairs, "n_pairs", scenario.n_pairs)?;
            scenario.log_a = r.or_default(log_a, "log_a", scenario.log_a)?;
            scenario.alpha = r.or_default(alpha, "alpha", scenario.alpha)?;
            scenario.beta = r.or_default(beta, "beta", scenario.beta)?;
            scenario.gamma = r.or_default(gamma, "gamma", scenario.gamma)?;
            scenario.noise_sigma = r.or_default(noise_sigma, "noise_sigma", scenario.noise_sigma)?;
            if scenario.n_cities < 2 {
                bail!("n_cities must be at least 2");
            }
            let params = SynthParams {
                scenario,
                out_dir: r.or_default(common.out, "out", PathBuf::from("out"))?,
            };
            pipeline::cmd_synth(&params)?
        }
    };

    println!("{}", outcome.summary);
    Ok(outcome.exit_code)
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}
