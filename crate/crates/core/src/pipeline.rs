//! Reproducible pipeline runs over CSV inputs.
//!
//! Every output file starts with a metadata header block of `#`-prefixed
//! lines (tool version, seed, config hash, per-file counts). Readers in this
//! module skip those lines, so pipeline outputs can be fed back in as inputs.
//! Nothing here is timestamped: two runs with the same config and seed write
//! byte-identical files. Stages run sequentially; the worker-count flag is
//! recorded but never changes results.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::clustering::{self, KmeansConfig, Pattern, TrajectoryFeature};
use crate::error::{Error, Result};
use crate::geo::{self, CityTable, CostMatrix, CostMetric};
use crate::gravity::{self, ModelFamily};
use crate::indices::{self, PatternedFlux};
use crate::ingest::{self, CityId, CityRegistry, FluxMatrix, TimeWindow};
use crate::synth::{self, GravityScenario};
use crate::TOOL_VERSION;

/// Command outcome: process exit code plus a one-line summary.
#[derive(Debug)]
pub struct Outcome {
    /// 0 success, 1 fatal input error (via Err), 2 partial.
    pub exit_code: u8,
    pub summary: String,
}

impl Outcome {
    fn ok(summary: impl Into<String>) -> Self {
        Outcome {
            exit_code: 0,
            summary: summary.into(),
        }
    }

    fn partial(summary: impl Into<String>) -> Self {
        Outcome {
            exit_code: 2,
            summary: summary.into(),
        }
    }
}

/// SHA-256 over the canonical `key=value` rendering of a config.
pub fn config_hash(pairs: &[(String, String)]) -> String {
    let mut hasher = Sha256::new();
    for (k, v) in pairs {
        hasher.update(k.as_bytes());
        hasher.update(b"=");
        hasher.update(v.as_bytes());
        hasher.update(b"\n");
    }
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Plain-text `key=value` config file; `#` starts a comment line.
pub fn read_config_file(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(path)?;
    let mut map = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Format(format!(
                "{}:{}: expected key=value",
                path.display(),
                lineno + 1
            )));
        };
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

/// Shared identity of one run, stamped into every output header.
#[derive(Debug, Clone)]
pub struct RunMeta {
    pub seed: u64,
    pub config_hash: String,
}

impl RunMeta {
    pub fn new(seed: u64, config_pairs: &[(String, String)]) -> Self {
        Self {
            seed,
            config_hash: config_hash(config_pairs),
        }
    }

    fn header_lines(&self, extra: &[(String, String)]) -> String {
        let mut out = String::new();
        out.push_str(&format!("# tool_version: {TOOL_VERSION}\n"));
        out.push_str(&format!("# seed: {}\n", self.seed));
        out.push_str(&format!("# config_hash: {}\n", self.config_hash));
        for (k, v) in extra {
            out.push_str(&format!("# {k}: {v}\n"));
        }
        out
    }
}

fn write_output(
    path: &Path,
    meta: &RunMeta,
    extra: &[(String, String)],
    csv_header: &str,
    rows: impl IntoIterator<Item = String>,
) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut file = fs::File::create(path)?;
    file.write_all(meta.header_lines(extra).as_bytes())?;
    writeln!(file, "{csv_header}")?;
    for row in rows {
        writeln!(file, "{row}")?;
    }
    Ok(())
}

/// Reads a CSV, dropping `#` metadata lines, and checks the header.
fn read_table(path: &Path, expected_header: &[&str]) -> Result<Vec<csv::StringRecord>> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let body: String = text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .collect::<Vec<_>>()
        .join("\n");
    let mut rdr = csv::Reader::from_reader(body.as_bytes());
    let headers = rdr.headers()?.clone();
    if headers.len() != expected_header.len()
        || headers.iter().zip(expected_header).any(|(h, e)| h != *e)
    {
        return Err(Error::Format(format!(
            "{}: header must be `{}`, got `{}`",
            path.display(),
            expected_header.join(","),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut records = Vec::new();
    for record in rdr.records() {
        records.push(record?);
    }
    Ok(records)
}

pub fn read_flux_csv(path: &Path, directed: bool) -> Result<FluxMatrix> {
    let header: [&str; 3] = if directed {
        ["origin", "destination", "count"]
    } else {
        ["city_a", "city_b", "count"]
    };
    let records = read_table(path, &header)?;
    FluxMatrix::from_entries(
        directed,
        records
            .iter()
            .map(|r| {
                let count = r[2]
                    .trim()
                    .parse::<u64>()
                    .map_err(|_| Error::Format(format!("bad count `{}`", &r[2])))?;
                Ok((r[0].to_string(), r[1].to_string(), count))
            })
            .collect::<Result<Vec<_>>>()?,
    )
}

pub fn read_city_table(path: &Path) -> Result<CityTable> {
    let text = fs::read_to_string(path)?;
    let body: String = text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .collect::<Vec<_>>()
        .join("\n");
    CityTable::from_reader(body.as_bytes())
}

pub fn read_cost_table(path: &Path, metric: CostMetric) -> Result<CostMatrix> {
    let text = fs::read_to_string(path)?;
    let body: String = text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .collect::<Vec<_>>()
        .join("\n");
    CostMatrix::from_reader(body.as_bytes(), metric)
}

fn fmt_f64(v: f64) -> String {
    // Shortest round-trip formatting keeps outputs byte-stable.
    format!("{v}")
}

// ---------------------------------------------------------------- extract

#[derive(Debug, Clone)]
pub struct ExtractParams {
    pub messages: PathBuf,
    pub registry: PathBuf,
    pub window: TimeWindow,
    pub seed: u64,
    pub workers: usize,
    pub out_dir: PathBuf,
}

impl ExtractParams {
    fn config_pairs(&self) -> Vec<(String, String)> {
        vec![
            ("command".into(), "extract".into()),
            ("messages".into(), self.messages.display().to_string()),
            ("registry".into(), self.registry.display().to_string()),
            ("window_start".into(), self.window.start.to_string()),
            ("window_end".into(), self.window.end.to_string()),
            ("seed".into(), self.seed.to_string()),
        ]
    }
}

pub fn cmd_extract(params: &ExtractParams) -> Result<Outcome> {
    let registry = CityRegistry::from_reader(fs::File::open(&params.registry)?)?;
    let reader = std::io::BufReader::new(fs::File::open(&params.messages)?);
    let extraction = ingest::extract(reader, &registry, params.window)?;
    let meta = RunMeta::new(params.seed, &params.config_pairs());

    write_output(
        &params.out_dir.join("directed_flux.csv"),
        &meta,
        &[],
        "origin,destination,count",
        extraction
            .directed
            .entries()
            .map(|((a, b), c)| format!("{a},{b},{c}")),
    )?;
    write_output(
        &params.out_dir.join("undirected_flux.csv"),
        &meta,
        &[],
        "city_a,city_b,count",
        extraction
            .undirected
            .entries()
            .map(|((a, b), c)| format!("{a},{b},{c}")),
    )?;

    let stats = [
        ("cities", extraction.undirected.city_count() as u64),
        ("directed_pairs", extraction.directed.pair_count() as u64),
        (
            "undirected_pairs",
            extraction.undirected.pair_count() as u64,
        ),
        ("traces", extraction.transitions),
        ("in_window_messages", extraction.in_window_messages),
        ("compressed_events", extraction.compressed_events),
        ("users", extraction.users),
        ("stationary_users", extraction.stationary_users),
        ("rejected_malformed", extraction.rejections.malformed),
        ("rejected_unknown_city", extraction.rejections.unknown_city),
        (
            "rejected_out_of_window",
            extraction.rejections.out_of_window,
        ),
    ];
    write_output(
        &params.out_dir.join("extract_metadata.csv"),
        &meta,
        &[
            ("window_start".into(), params.window.start.to_string()),
            ("window_end".into(), params.window.end.to_string()),
        ],
        "key,value",
        stats.iter().map(|(k, v)| format!("{k},{v}")),
    )?;

    if extraction.transitions == 0 {
        return Ok(Outcome::partial("no transitions extracted"));
    }
    Ok(Outcome::ok(format!(
        "{} cities, {} directed pairs, {} undirected pairs, {} traces",
        extraction.undirected.city_count(),
        extraction.directed.pair_count(),
        extraction.undirected.pair_count(),
        extraction.transitions
    )))
}

// -------------------------------------------------------------------- fit

#[derive(Debug, Clone)]
pub struct FitParams {
    pub directed_flux: PathBuf,
    pub undirected_flux: PathBuf,
    pub attrs: PathBuf,
    /// Precomputed geo-distance table; computed from coordinates when absent.
    pub cost_geo: Option<PathBuf>,
    pub cost_travel_km: Option<PathBuf>,
    pub cost_travel_min: Option<PathBuf>,
    pub diameter_km: f64,
    pub seed: u64,
    pub workers: usize,
    pub out_dir: PathBuf,
}

impl FitParams {
    fn config_pairs(&self) -> Vec<(String, String)> {
        let opt = |p: &Option<PathBuf>| {
            p.as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default()
        };
        vec![
            ("command".into(), "fit".into()),
            (
                "directed_flux".into(),
                self.directed_flux.display().to_string(),
            ),
            (
                "undirected_flux".into(),
                self.undirected_flux.display().to_string(),
            ),
            ("attrs".into(), self.attrs.display().to_string()),
            ("cost_geo".into(), opt(&self.cost_geo)),
            ("cost_travel_km".into(), opt(&self.cost_travel_km)),
            ("cost_travel_min".into(), opt(&self.cost_travel_min)),
            ("diameter_km".into(), self.diameter_km.to_string()),
            ("seed".into(), self.seed.to_string()),
        ]
    }
}

/// Loads every available cost matrix; geo distance falls back to computing
/// from coordinates over the union of flux pairs.
fn load_costs(
    params: &FitParams,
    directed: &FluxMatrix,
    undirected: &FluxMatrix,
    attrs: &CityTable,
) -> Result<BTreeMap<CostMetric, CostMatrix>> {
    let mut costs = BTreeMap::new();
    match &params.cost_geo {
        Some(path) => {
            costs.insert(CostMetric::GeoKm, read_cost_table(path, CostMetric::GeoKm)?);
        }
        None => {
            let mut matrix = CostMatrix::from_coordinates(undirected, attrs, params.diameter_km)?;
            // Directed-only pairs still need a distance.
            for ((a, b), _) in directed.entries() {
                if matrix.get(a, b).is_none() {
                    if let (Some(ca), Some(cb)) = (attrs.get(a), attrs.get(b)) {
                        let d = geo::great_circle_km(
                            (ca.longitude, ca.latitude),
                            (cb.longitude, cb.latitude),
                            params.diameter_km,
                        );
                        if d > 0.0 {
                            matrix.insert(a, b, d)?;
                        }
                    }
                }
            }
            costs.insert(CostMetric::GeoKm, matrix);
        }
    }
    if let Some(path) = &params.cost_travel_km {
        costs.insert(
            CostMetric::TravelKm,
            read_cost_table(path, CostMetric::TravelKm)?,
        );
    }
    if let Some(path) = &params.cost_travel_min {
        costs.insert(
            CostMetric::TravelMin,
            read_cost_table(path, CostMetric::TravelMin)?,
        );
    }
    Ok(costs)
}

pub fn cmd_fit(params: &FitParams) -> Result<Outcome> {
    let directed = read_flux_csv(&params.directed_flux, true)?;
    let undirected = read_flux_csv(&params.undirected_flux, false)?;
    let attrs = read_city_table(&params.attrs)?;
    let costs = load_costs(params, &directed, &undirected, &attrs)?;
    let meta = RunMeta::new(params.seed, &params.config_pairs());

    let cells = gravity::compare_models(&directed, &undirected, &attrs, &costs);

    let mut fit_rows = Vec::new();
    let mut error_rows = Vec::new();
    // The full 4x3 grid is always emitted; metrics with no cost source show
    // up as errored rows.
    for family in ModelFamily::ALL {
        for metric in CostMetric::ALL {
            let cell = cells
                .iter()
                .find(|c| c.spec.family == family && c.spec.cost_metric == metric);
            match cell.map(|c| &c.outcome) {
                Some(Ok((fit, prediction, ssi))) => {
                    fit_rows.push(format!(
                        "{},{},{},{},{},{},{},{},{},{}",
                        family,
                        metric,
                        fmt_f64(fit.alpha),
                        fmt_f64(fit.beta),
                        fmt_f64(fit.gamma),
                        fmt_f64(fit.intercept_log),
                        fmt_f64(fit.r_squared),
                        fmt_f64(fit.f_statistic),
                        fit.n_obs,
                        fmt_f64(*ssi)
                    ));
                    let flux = if family.requires_directed() {
                        &directed
                    } else {
                        &undirected
                    };
                    let file = params.out_dir.join(format!(
                        "predictions_{}_{}.csv",
                        family.as_str().replace('-', "_"),
                        metric
                    ));
                    write_output(
                        &file,
                        &meta,
                        &[
                            ("family".into(), family.to_string()),
                            ("metric".into(), metric.to_string()),
                        ],
                        "origin,destination,actual,predicted",
                        prediction.entries.iter().map(|((a, b), &p)| {
                            format!("{a},{b},{},{}", flux.get(a, b), fmt_f64(p))
                        }),
                    )?;
                }
                Some(Err(e)) => {
                    fit_rows.push(format!("{family},{metric},,,,,,,,"));
                    error_rows.push(format!("{family},{metric},\"{e}\""));
                }
                None => {
                    fit_rows.push(format!("{family},{metric},,,,,,,,"));
                    error_rows.push(format!("{family},{metric},no cost table for metric"));
                }
            }
        }
    }

    write_output(
        &params.out_dir.join("fits.csv"),
        &meta,
        &[],
        "family,metric,alpha,beta,gamma,log_a,r2,f_stat,n_obs,ssi",
        fit_rows,
    )?;
    if !error_rows.is_empty() {
        write_output(
            &params.out_dir.join("fit_errors.csv"),
            &meta,
            &[],
            "family,metric,error",
            error_rows.iter().cloned(),
        )?;
        return Ok(Outcome::partial(format!(
            "{} of 12 cells errored",
            error_rows.len()
        )));
    }
    Ok(Outcome::ok("12 cells fitted"))
}

// ---------------------------------------------------------------- cluster

#[derive(Debug, Clone)]
pub struct ClusterParams {
    pub undirected_flux: PathBuf,
    pub attrs: PathBuf,
    pub cost_travel_min: PathBuf,
    /// Alternative cost table for sorting the index curves; travel time when
    /// absent.
    pub locality_cost: Option<PathBuf>,
    /// Emit the heuristic representative-cities file.
    pub representative: bool,
    pub k: usize,
    pub k_min: usize,
    pub k_max: usize,
    pub seed: u64,
    pub workers: usize,
    pub out_dir: PathBuf,
}

impl ClusterParams {
    fn config_pairs(&self) -> Vec<(String, String)> {
        vec![
            ("command".into(), "cluster".into()),
            (
                "undirected_flux".into(),
                self.undirected_flux.display().to_string(),
            ),
            ("attrs".into(), self.attrs.display().to_string()),
            (
                "cost_travel_min".into(),
                self.cost_travel_min.display().to_string(),
            ),
            (
                "locality_cost".into(),
                self.locality_cost
                    .as_ref()
                    .map(|p| p.display().to_string())
                    .unwrap_or_default(),
            ),
            ("representative".into(), self.representative.to_string()),
            ("k".into(), self.k.to_string()),
            ("k_min".into(), self.k_min.to_string()),
            ("k_max".into(), self.k_max.to_string()),
            ("seed".into(), self.seed.to_string()),
        ]
    }
}

pub fn cmd_cluster(params: &ClusterParams) -> Result<Outcome> {
    let undirected = read_flux_csv(&params.undirected_flux, false)?;
    let attrs = read_city_table(&params.attrs)?;
    let travel_time = read_cost_table(&params.cost_travel_min, CostMetric::TravelMin)?;
    let meta = RunMeta::new(params.seed, &params.config_pairs());

    let set = clustering::build_features(&undirected, &attrs, &travel_time)?;
    let features = &set.features;

    // Diagnostic scans over the configured k range.
    let ks: Vec<usize> = (params.k_min..=params.k_max).collect();
    let elbow = clustering::elbow_scan(features, ks.iter().copied(), params.seed);
    write_output(
        &params.out_dir.join("elbow.csv"),
        &meta,
        &[],
        "k,score",
        elbow.iter().map(|(k, r)| match r {
            Ok(v) => format!("{k},{}", fmt_f64(*v)),
            Err(_) => format!("{k},"),
        }),
    )?;
    let silhouettes: Vec<(usize, Option<f64>)> = ks
        .iter()
        .map(|&k| {
            let score = clustering::kmeans_cosine(features, KmeansConfig::new(k, params.seed))
                .ok()
                .map(|m| clustering::silhouette(&m));
            (k, score)
        })
        .collect();
    write_output(
        &params.out_dir.join("silhouette.csv"),
        &meta,
        &[],
        "k,score",
        silhouettes.iter().map(|(k, s)| match s {
            Some(v) => format!("{k},{}", fmt_f64(*v)),
            None => format!("{k},"),
        }),
    )?;

    let model = clustering::kmeans_cosine(features, KmeansConfig::new(params.k, params.seed))?;
    if params.k != 4 {
        // Pattern labels and indices are defined for the four-pattern model.
        write_output(
            &params.out_dir.join("assignments.csv"),
            &meta,
            &[("k".into(), params.k.to_string())],
            "city_a,city_b,cluster,pattern_label",
            model
                .assignments(features)
                .iter()
                .map(|((a, b), c)| format!("{a},{b},{c},")),
        )?;
        return Ok(Outcome::ok(format!(
            "k={} model written without pattern labels",
            params.k
        )));
    }

    let labeling = clustering::label_patterns(&model, features)?;
    write_output(
        &params.out_dir.join("assignments.csv"),
        &meta,
        &[
            ("k".into(), "4".into()),
            ("restart".into(), model.restart.to_string()),
            (
                "criterion_value".into(),
                fmt_f64(model.criterion_value),
            ),
            (
                "excluded_zero_vectors".into(),
                model.excluded_zero.to_string(),
            ),
        ],
        "city_a,city_b,cluster,pattern_label",
        model.assignments(features).iter().map(|((a, b), &c)| {
            format!("{a},{b},{c},{}", labeling.pattern_of_cluster[c])
        }),
    )?;

    write_output(
        &params.out_dir.join("pattern_summary.csv"),
        &meta,
        &[
            (
                "pattern_i_min_travel_time".into(),
                labeling.checks.pattern_i_min_travel_time.to_string(),
            ),
            (
                "pattern_ii_max_gdp_among_ii_to_iv".into(),
                labeling.checks.pattern_ii_max_gdp_among_ii_to_iv.to_string(),
            ),
            (
                "pattern_iv_max_travel_time".into(),
                labeling.checks.pattern_iv_max_travel_time.to_string(),
            ),
        ],
        "pattern,mean_flux,flux_share,mean_travel_time,mean_gdp_product",
        Pattern::ALL.iter().map(|p| {
            let i = p.index();
            format!(
                "{p},{},{},{},{}",
                fmt_f64(labeling.mean_flux[i]),
                fmt_f64(labeling.flux_share[i]),
                fmt_f64(labeling.mean_travel_time[i]),
                fmt_f64(labeling.mean_gdp_product[i])
            )
        }),
    )?;

    let pattern_fits =
        clustering::fit_per_pattern(&model, &labeling, features, &attrs, &travel_time);
    let mut failed = 0usize;
    write_output(
        &params.out_dir.join("pattern_fits.csv"),
        &meta,
        &[],
        "pattern,gamma,log_a,r2,f_stat,n_obs",
        pattern_fits.iter().map(|(p, r)| match r {
            Ok(f) => format!(
                "{p},{},{},{},{},{}",
                fmt_f64(f.gamma),
                fmt_f64(f.intercept_log),
                fmt_f64(f.r_squared),
                fmt_f64(f.f_statistic),
                f.n_obs
            ),
            Err(_) => {
                format!("{p},,,,,")
            }
        }),
    )?;
    for (_, r) in &pattern_fits {
        if r.is_err() {
            failed += 1;
        }
    }

    let patterned = patterned_flux(&model, &labeling, features, &attrs);
    let sort_costs = match &params.locality_cost {
        Some(path) => read_cost_table(path, CostMetric::TravelMin)?,
        None => travel_time.clone(),
    };
    write_indices(&params.out_dir, &meta, &patterned, &undirected, &attrs, &sort_costs)?;
    if params.representative {
        write_representative(&params.out_dir, &meta, &patterned)?;
    }

    if failed > 0 {
        return Ok(Outcome::partial(format!(
            "{failed} per-pattern fits failed"
        )));
    }
    Ok(Outcome::ok(format!(
        "k=4 patterns labeled; criterion {}",
        fmt_f64(model.criterion_value)
    )))
}

fn patterned_flux(
    model: &clustering::ClusterModel,
    labeling: &clustering::PatternLabeling,
    features: &[TrajectoryFeature],
    attrs: &CityTable,
) -> PatternedFlux {
    let entries: BTreeMap<(CityId, CityId), (u64, Pattern)> = model
        .feature_indices
        .iter()
        .zip(&model.labels)
        .map(|(&i, &cluster)| {
            let f = &features[i];
            (
                f.pair.clone(),
                (f.flux, labeling.pattern_of_cluster[cluster]),
            )
        })
        .collect();
    let province_of = attrs
        .iter()
        .map(|c| (c.city_id.clone(), c.province_id.clone()))
        .collect();
    PatternedFlux::new(entries, province_of)
}

fn write_indices(
    out_dir: &Path,
    meta: &RunMeta,
    patterned: &PatternedFlux,
    flux: &FluxMatrix,
    attrs: &CityTable,
    travel_time: &CostMatrix,
) -> Result<()> {
    let cities: Vec<CityId> = patterned.cities().into_iter().cloned().collect();

    write_output(
        &out_dir.join("di.csv"),
        meta,
        &[],
        "city_id,di",
        cities.iter().filter_map(|city| {
            indices::development_index(patterned, city)
                .ok()
                .map(|di| format!("{city},{}", fmt_f64(di)))
        }),
    )?;

    let provinces: Vec<String> = patterned.provinces().into_iter().cloned().collect();
    write_output(
        &out_dir.join("province_patterns.csv"),
        meta,
        &[],
        "province_id,p1,p2,p3,p4",
        provinces.iter().filter_map(|province| {
            indices::province_pattern_ratio(patterned, province)
                .ok()
                .map(|p| {
                    format!(
                        "{province},{},{},{},{}",
                        fmt_f64(p[0]),
                        fmt_f64(p[1]),
                        fmt_f64(p[2]),
                        fmt_f64(p[3])
                    )
                })
        }),
    )?;

    for city in &cities {
        if let Ok(curve) = indices::locality_curve(flux, travel_time, city) {
            write_output(
                &out_dir.join("locality").join(format!("{city}.csv")),
                meta,
                &[("city_id".into(), city.clone())],
                "r,c",
                curve
                    .iter()
                    .map(|(r, c)| format!("{r},{}", fmt_f64(*c))),
            )?;
        }
        if let Ok(curve) = indices::gdp_match_curve(attrs, travel_time, city) {
            write_output(
                &out_dir.join("gdp_match").join(format!("{city}.csv")),
                meta,
                &[("city_id".into(), city.clone())],
                "r,l",
                curve
                    .iter()
                    .map(|(r, l)| format!("{r},{}", fmt_f64(*l))),
            )?;
        }
    }
    Ok(())
}

/// Heuristic reproduction of the "representative cities" filter: a city
/// represents a pattern when that pattern holds more than half of its flux
/// (40% for Pattern III). The thresholds are a judgment call, so the file is
/// opt-in and excluded from acceptance checks.
fn write_representative(out_dir: &Path, meta: &RunMeta, patterned: &PatternedFlux) -> Result<()> {
    let thresholds = [0.5, 0.5, 0.4, 0.5];
    let mut rows = Vec::new();
    for city in patterned.cities() {
        let Ok(shares) = indices::pattern_flux_shares(patterned, city) else {
            continue;
        };
        for pattern in Pattern::ALL {
            let share = shares[pattern.index()];
            if share > thresholds[pattern.index()] {
                rows.push(format!("{city},{pattern},{}", fmt_f64(share)));
            }
        }
    }
    write_output(
        &out_dir.join("representative_cities.csv"),
        meta,
        &[("heuristic".into(), "flux-share thresholds 50/50/40/50".into())],
        "city_id,pattern,share",
        rows,
    )
}

// ---------------------------------------------------------------- indices

#[derive(Debug, Clone)]
pub struct IndicesParams {
    pub undirected_flux: PathBuf,
    pub attrs: PathBuf,
    pub cost_travel_min: PathBuf,
    /// `assignments.csv` produced by the cluster command.
    pub assignments: PathBuf,
    /// Alternative cost table for sorting the index curves; travel time when
    /// absent.
    pub locality_cost: Option<PathBuf>,
    /// Emit the heuristic representative-cities file.
    pub representative: bool,
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl IndicesParams {
    fn config_pairs(&self) -> Vec<(String, String)> {
        vec![
            ("command".into(), "indices".into()),
            (
                "undirected_flux".into(),
                self.undirected_flux.display().to_string(),
            ),
            ("attrs".into(), self.attrs.display().to_string()),
            (
                "cost_travel_min".into(),
                self.cost_travel_min.display().to_string(),
            ),
            ("assignments".into(), self.assignments.display().to_string()),
            (
                "locality_cost".into(),
                self.locality_cost
                    .as_ref()
                    .map(|p| p.display().to_string())
                    .unwrap_or_default(),
            ),
            ("representative".into(), self.representative.to_string()),
            ("seed".into(), self.seed.to_string()),
        ]
    }
}

pub fn cmd_indices(params: &IndicesParams) -> Result<Outcome> {
    let undirected = read_flux_csv(&params.undirected_flux, false)?;
    let attrs = read_city_table(&params.attrs)?;
    let travel_time = read_cost_table(&params.cost_travel_min, CostMetric::TravelMin)?;
    let meta = RunMeta::new(params.seed, &params.config_pairs());

    let records = read_table(
        &params.assignments,
        &["city_a", "city_b", "cluster", "pattern_label"],
    )?;
    let mut entries = BTreeMap::new();
    for r in &records {
        let pattern = Pattern::parse(&r[3]).ok_or_else(|| {
            Error::Format(format!("bad pattern label `{}` for pair ({},{})", &r[3], &r[0], &r[1]))
        })?;
        let flux = undirected.get(&r[0], &r[1]);
        if flux == 0 {
            return Err(Error::Data(format!(
                "assignment pair ({},{}) missing from flux",
                &r[0], &r[1]
            )));
        }
        entries.insert((r[0].to_string(), r[1].to_string()), (flux, pattern));
    }
    let province_of = attrs
        .iter()
        .map(|c| (c.city_id.clone(), c.province_id.clone()))
        .collect();
    let patterned = PatternedFlux::new(entries, province_of);
    let sort_costs = match &params.locality_cost {
        Some(path) => read_cost_table(path, CostMetric::TravelMin)?,
        None => travel_time,
    };
    write_indices(
        &params.out_dir,
        &meta,
        &patterned,
        &undirected,
        &attrs,
        &sort_costs,
    )?;
    if params.representative {
        write_representative(&params.out_dir, &meta, &patterned)?;
    }
    Ok(Outcome::ok(format!(
        "indices written for {} labeled pairs",
        records.len()
    )))
}

// -------------------------------------------------------------- correlate

#[derive(Debug, Clone)]
pub struct CorrelateParams {
    /// Undirected flux CSV.
    pub flux: PathBuf,
    /// Pair-keyed covariate CSV `city_a,city_b,value`.
    pub covariate: PathBuf,
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl CorrelateParams {
    fn config_pairs(&self) -> Vec<(String, String)> {
        vec![
            ("command".into(), "correlate".into()),
            ("flux".into(), self.flux.display().to_string()),
            ("covariate".into(), self.covariate.display().to_string()),
            ("seed".into(), self.seed.to_string()),
        ]
    }
}

/// Pearson correlation between flux and any pair-keyed covariate over the
/// shared pair set.
pub fn cmd_correlate(params: &CorrelateParams) -> Result<Outcome> {
    let flux = read_flux_csv(&params.flux, false)?;
    let records = read_table(&params.covariate, &["city_a", "city_b", "value"])?;
    let meta = RunMeta::new(params.seed, &params.config_pairs());

    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for r in &records {
        let value: f64 = r[2]
            .trim()
            .parse()
            .map_err(|_| Error::Format(format!("bad value `{}`", &r[2])))?;
        let count = flux.get(&r[0], &r[1]);
        if count > 0 {
            xs.push(count as f64);
            ys.push(value);
        }
    }
    let r = indices::pearson(&xs, &ys)?;
    write_output(
        &params.out_dir.join("correlate.csv"),
        &meta,
        &[],
        "n_pairs,pearson",
        [format!("{},{}", xs.len(), fmt_f64(r))],
    )?;
    Ok(Outcome::ok(format!(
        "pearson {} over {} shared pairs",
        fmt_f64(r),
        xs.len()
    )))
}

// ------------------------------------------------------------------ synth

#[derive(Debug, Clone)]
pub struct SynthParams {
    pub scenario: GravityScenario,
    pub out_dir: PathBuf,
}

impl SynthParams {
    fn config_pairs(&self) -> Vec<(String, String)> {
        let s = &self.scenario;
        vec![
            ("command".into(), "synth".into()),
            ("family".into(), s.family.to_string()),
            ("metric".into(), s.metric.to_string()),
            ("n_cities".into(), s.n_cities.to_string()),
            ("n_pairs".into(), s.n_pairs.to_string()),
            ("log_a".into(), s.log_a.to_string()),
            ("alpha".into(), s.alpha.to_string()),
            ("beta".into(), s.beta.to_string()),
            ("gamma".into(), s.gamma.to_string()),
            ("noise_sigma".into(), s.noise_sigma.to_string()),
            ("seed".into(), s.seed.to_string()),
        ]
    }
}

/// Writes a synthetic dataset (attrs, cost table, flux) for oracle tests.
pub fn cmd_synth(params: &SynthParams) -> Result<Outcome> {
    let data = synth::generate(params.scenario)?;
    let meta = RunMeta::new(params.scenario.seed, &params.config_pairs());

    write_output(
        &params.out_dir.join("city_attributes.csv"),
        &meta,
        &[],
        "city_id,name,longitude,latitude,gdp,gdp_per_capita,population,province_id",
        data.attrs.iter().map(|c| {
            format!(
                "{},{},{},{},{},{},{},{}",
                c.city_id,
                c.name,
                fmt_f64(c.longitude),
                fmt_f64(c.latitude),
                fmt_f64(c.gdp),
                fmt_f64(c.gdp_per_capita),
                fmt_f64(c.population),
                c.province_id
            )
        }),
    )?;
    write_output(
        &params
            .out_dir
            .join(format!("cost_{}.csv", params.scenario.metric)),
        &meta,
        &[],
        "city_a,city_b,cost",
        data.costs
            .entries()
            .map(|((a, b), c)| format!("{a},{b},{}", fmt_f64(*c))),
    )?;
    let flux = data.flux_matrix()?;
    if flux.directed {
        write_output(
            &params.out_dir.join("directed_flux.csv"),
            &meta,
            &[],
            "origin,destination,count",
            flux.entries().map(|((a, b), c)| format!("{a},{b},{c}")),
        )?;
    }
    // Directed scenarios fold into an undirected matrix so the output is
    // always usable by the undirected model families.
    let undirected = if flux.directed {
        let mut folded = FluxMatrix::new(false);
        for ((a, b), &c) in flux.entries() {
            folded.add(a, b, c);
        }
        folded
    } else {
        flux
    };
    write_output(
        &params.out_dir.join("undirected_flux.csv"),
        &meta,
        &[],
        "city_a,city_b,count",
        undirected
            .entries()
            .map(|((a, b), c)| format!("{a},{b},{c}")),
    )?;
    write_output(
        &params.out_dir.join("true_params.csv"),
        &meta,
        &[],
        "log_a,alpha,beta,gamma,noise_sigma",
        [format!(
            "{},{},{},{},{}",
            fmt_f64(params.scenario.log_a),
            fmt_f64(params.scenario.alpha),
            fmt_f64(params.scenario.beta),
            fmt_f64(params.scenario.gamma),
            fmt_f64(params.scenario.noise_sigma)
        )],
    )?;
    Ok(Outcome::ok(format!(
        "{} pairs over {} cities written",
        data.pairs.len(),
        params.scenario.n_cities
    )))
}
