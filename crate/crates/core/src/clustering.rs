//! Trajectory clustering.
//!
//! Each undirected city pair becomes a min-max normalized 3-feature vector
//! (GDP product, travel time, flux). Vectors are partitioned by a cosine
//! K-means that maximizes
//!
//!   E = sum_k sqrt( sum_{v,u in C_k} sim(v, u) )
//!
//! which, on unit-normalized vectors, equals sum_k ||sum of members|| — the
//! spherical k-means objective. Cluster count diagnostics come from the
//! silhouette coefficient (distance = 1 - cosine similarity) and the elbow
//! curve of E over k. At k = 4 the clusters are labeled Patterns I-IV by
//! descending mean raw flux.

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geo::{CityTable, CostMatrix};
use crate::gravity::{self, GravityFit, ModelFamily, ModelSpec};
use crate::ingest::{CityId, FluxMatrix};

/// Normalized feature vector of one undirected trajectory, with the raw
/// quantities kept for labeling and per-pattern fits.
#[derive(Debug, Clone)]
pub struct TrajectoryFeature {
    pub pair: (CityId, CityId),
    pub g_norm: f64,
    pub t_norm: f64,
    pub f_norm: f64,
    pub gdp_product: f64,
    pub travel_time: f64,
    pub flux: u64,
}

impl TrajectoryFeature {
    pub fn vector(&self) -> [f64; 3] {
        [self.g_norm, self.t_norm, self.f_norm]
    }

    pub fn is_zero(&self) -> bool {
        self.g_norm == 0.0 && self.t_norm == 0.0 && self.f_norm == 0.0
    }
}

/// Feature construction output: included features plus exclusion counts.
#[derive(Debug, Clone)]
pub struct FeatureSet {
    pub features: Vec<TrajectoryFeature>,
    /// Pairs dropped for missing GDP or travel time.
    pub excluded_missing: usize,
}

/// Builds min-max normalized features over the pair set of an undirected
/// flux matrix. Min and max are taken over the included pairs.
pub fn build_features(
    flux: &FluxMatrix,
    attrs: &CityTable,
    travel_time: &CostMatrix,
) -> Result<FeatureSet> {
    if flux.directed {
        return Err(Error::Contract("undirected flux required".into()));
    }
    let mut raw: Vec<((CityId, CityId), f64, f64, u64)> = Vec::new();
    let mut excluded_missing = 0usize;
    for ((a, b), &count) in flux.entries() {
        let (Some(ca), Some(cb)) = (attrs.get(a), attrs.get(b)) else {
            excluded_missing += 1;
            continue;
        };
        let Some(time) = travel_time.get(a, b) else {
            excluded_missing += 1;
            continue;
        };
        raw.push(((a.clone(), b.clone()), ca.gdp * cb.gdp, time, count));
    }
    if raw.is_empty() {
        return Ok(FeatureSet {
            features: Vec::new(),
            excluded_missing,
        });
    }

    let minmax = |values: Vec<f64>, name: &str| -> Result<(f64, f64)> {
        let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if max == min {
            return Err(Error::Data(format!("degenerate feature: {name}")));
        }
        Ok((min, max))
    };
    let (g_min, g_max) = minmax(raw.iter().map(|r| r.1).collect(), "gdp_product")?;
    let (t_min, t_max) = minmax(raw.iter().map(|r| r.2).collect(), "travel_time")?;
    let (f_min, f_max) = minmax(raw.iter().map(|r| r.3 as f64).collect(), "flux")?;

    let features = raw
        .into_iter()
        .map(|(pair, gdp_product, travel_time, flux)| TrajectoryFeature {
            pair,
            g_norm: (gdp_product - g_min) / (g_max - g_min),
            t_norm: (travel_time - t_min) / (t_max - t_min),
            f_norm: (flux as f64 - f_min) / (f_max - f_min),
            gdp_product,
            travel_time,
            flux,
        })
        .collect();
    Ok(FeatureSet {
        features,
        excluded_missing,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct KmeansConfig {
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
    pub restarts: usize,
}

impl KmeansConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            seed,
            max_iter: 300,
            restarts: 10,
        }
    }
}

/// A fitted partition over the nonzero feature vectors.
#[derive(Debug, Clone)]
pub struct ClusterModel {
    pub k: usize,
    pub seed: u64,
    /// Which restart produced the kept model.
    pub restart: usize,
    /// Indices into the input feature slice, one per clustered point.
    pub feature_indices: Vec<usize>,
    /// Cluster label per clustered point, aligned with `feature_indices`.
    pub labels: Vec<usize>,
    /// Unit feature vectors, aligned with `feature_indices`.
    pub points: Vec<[f64; 3]>,
    /// Unit-normalized centroids.
    pub centroids: Vec<[f64; 3]>,
    pub criterion_value: f64,
    /// Criterion after each centroid update of the winning restart.
    pub criterion_history: Vec<f64>,
    /// Zero vectors excluded from cosine clustering.
    pub excluded_zero: usize,
}

impl ClusterModel {
    /// Pair-to-cluster map over the clustered features.
    pub fn assignments(&self, features: &[TrajectoryFeature]) -> BTreeMap<(CityId, CityId), usize> {
        self.feature_indices
            .iter()
            .zip(&self.labels)
            .map(|(&i, &label)| (features[i].pair.clone(), label))
            .collect()
    }
}

fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm(v: &[f64; 3]) -> f64 {
    dot(v, v).sqrt()
}

fn normalize(v: [f64; 3]) -> [f64; 3] {
    let n = norm(&v);
    [v[0] / n, v[1] / n, v[2] / n]
}

/// k-means++-style seeding under cosine distance.
fn seed_centroids(points: &[[f64; 3]], k: usize, rng: &mut ChaCha8Rng) -> Vec<[f64; 3]> {
    let mut centroids: Vec<[f64; 3]> = Vec::with_capacity(k);
    centroids.push(points[rng.gen_range(0..points.len())]);
    while centroids.len() < k {
        let weights: Vec<f64> = points
            .iter()
            .map(|p| {
                centroids
                    .iter()
                    .map(|c| (1.0 - dot(p, c)).max(0.0))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let total: f64 = weights.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut chosen = points.len() - 1;
            for (i, w) in weights.iter().enumerate() {
                target -= w;
                if target <= 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.gen_range(0..points.len())
        };
        centroids.push(points[next]);
    }
    centroids
}

struct RunResult {
    labels: Vec<usize>,
    centroids: Vec<[f64; 3]>,
    criterion: f64,
    history: Vec<f64>,
}

fn run_once(points: &[[f64; 3]], k: usize, max_iter: usize, rng: &mut ChaCha8Rng) -> RunResult {
    let n = points.len();
    let mut centroids = seed_centroids(points, k, rng);
    let mut labels = vec![0usize; n];
    let mut history = Vec::new();

    for _ in 0..max_iter {
        let previous = labels.clone();
        for (i, p) in points.iter().enumerate() {
            let mut best = 0usize;
            let mut best_sim = f64::NEG_INFINITY;
            for (c, centroid) in centroids.iter().enumerate() {
                let sim = dot(p, centroid);
                if sim > best_sim {
                    best_sim = sim;
                    best = c;
                }
            }
            labels[i] = best;
        }

        // Empty-cluster repair: reseed with the point least similar to its
        // centroid, taken from a cluster that can spare one.
        let mut repaired = false;
        loop {
            let mut sizes = vec![0usize; k];
            for &l in &labels {
                sizes[l] += 1;
            }
            let Some(empty) = sizes.iter().position(|&s| s == 0) else {
                break;
            };
            let mut worst: Option<(usize, f64)> = None;
            for (i, p) in points.iter().enumerate() {
                if sizes[labels[i]] <= 1 {
                    continue;
                }
                let sim = dot(p, &centroids[labels[i]]);
                if worst.map_or(true, |(_, s)| sim < s) {
                    worst = Some((i, sim));
                }
            }
            match worst {
                Some((i, _)) => {
                    labels[i] = empty;
                    repaired = true;
                }
                None => break,
            }
        }

        let mut sums = vec![[0.0f64; 3]; k];
        for (i, p) in points.iter().enumerate() {
            let s = &mut sums[labels[i]];
            s[0] += p[0];
            s[1] += p[1];
            s[2] += p[2];
        }
        let mut criterion = 0.0;
        for (c, sum) in sums.iter().enumerate() {
            let len = norm(sum);
            criterion += len;
            if len > 0.0 {
                centroids[c] = [sum[0] / len, sum[1] / len, sum[2] / len];
            }
        }
        history.push(criterion);

        if labels == previous && !repaired {
            break;
        }
    }

    let criterion = *history.last().unwrap_or(&0.0);
    RunResult {
        labels,
        centroids,
        criterion,
        history,
    }
}

/// Best-of-restarts cosine K-means. Deterministic given the config seed;
/// restart ties break toward the earlier restart.
pub fn kmeans_cosine(features: &[TrajectoryFeature], config: KmeansConfig) -> Result<ClusterModel> {
    if config.k < 2 {
        return Err(Error::Data(format!("k must be at least 2, got {}", config.k)));
    }
    let mut feature_indices = Vec::new();
    let mut points = Vec::new();
    let mut excluded_zero = 0usize;
    for (i, feature) in features.iter().enumerate() {
        if feature.is_zero() {
            excluded_zero += 1;
            continue;
        }
        feature_indices.push(i);
        points.push(normalize(feature.vector()));
    }
    if points.len() < config.k {
        return Err(Error::Data(format!(
            "{} usable features for k = {}",
            points.len(),
            config.k
        )));
    }

    let mut best: Option<(usize, RunResult)> = None;
    for restart in 0..config.restarts.max(1) {
        let sub_seed = config
            .seed
            .wrapping_add((restart as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let mut rng = ChaCha8Rng::seed_from_u64(sub_seed);
        let run = run_once(&points, config.k, config.max_iter, &mut rng);
        if best.as_ref().map_or(true, |(_, b)| run.criterion > b.criterion) {
            best = Some((restart, run));
        }
    }
    let (restart, run) = best.expect("at least one restart");
    Ok(ClusterModel {
        k: config.k,
        seed: config.seed,
        restart,
        feature_indices,
        labels: run.labels,
        points,
        centroids: run.centroids,
        criterion_value: run.criterion,
        criterion_history: run.history,
        excluded_zero,
    })
}

/// Mean silhouette over all clustered points, distance = 1 - cosine
/// similarity. Singleton clusters contribute 0.
pub fn silhouette(model: &ClusterModel) -> f64 {
    let n = model.points.len();
    if n == 0 {
        return 0.0;
    }
    let mut sizes = vec![0usize; model.k];
    for &l in &model.labels {
        sizes[l] += 1;
    }
    let mut total = 0.0;
    for i in 0..n {
        let own = model.labels[i];
        if sizes[own] <= 1 {
            continue; // s(i) = 0
        }
        let mut dist_sum = vec![0.0f64; model.k];
        for j in 0..n {
            if i == j {
                continue;
            }
            let d = 1.0 - dot(&model.points[i], &model.points[j]);
            dist_sum[model.labels[j]] += d;
        }
        let a = dist_sum[own] / (sizes[own] - 1) as f64;
        let b = (0..model.k)
            .filter(|&c| c != own && sizes[c] > 0)
            .map(|c| dist_sum[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        if b.is_finite() {
            total += (b - a) / a.max(b);
        }
    }
    total / n as f64
}

/// Criterion value per k; kmeans errors propagate per entry.
pub fn elbow_scan(
    features: &[TrajectoryFeature],
    k_range: impl IntoIterator<Item = usize>,
    seed: u64,
) -> Vec<(usize, Result<f64>)> {
    k_range
        .into_iter()
        .map(|k| {
            let result =
                kmeans_cosine(features, KmeansConfig::new(k, seed)).map(|m| m.criterion_value);
            (k, result)
        })
        .collect()
}

/// Migration pattern labels, ordered by descending cluster mean flux.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Pattern {
    I,
    II,
    III,
    IV,
}

impl Pattern {
    pub const ALL: [Pattern; 4] = [Pattern::I, Pattern::II, Pattern::III, Pattern::IV];

    pub fn as_str(self) -> &'static str {
        match self {
            Pattern::I => "I",
            Pattern::II => "II",
            Pattern::III => "III",
            Pattern::IV => "IV",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "I" => Some(Pattern::I),
            "II" => Some(Pattern::II),
            "III" => Some(Pattern::III),
            "IV" => Some(Pattern::IV),
            _ => None,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Pattern::I => 0,
            Pattern::II => 1,
            Pattern::III => 2,
            Pattern::IV => 3,
        }
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Cross-checks of the expected pattern structure, reported not enforced.
#[derive(Debug, Clone, Copy)]
pub struct PatternChecks {
    pub pattern_i_min_travel_time: bool,
    pub pattern_ii_max_gdp_among_ii_to_iv: bool,
    pub pattern_iv_max_travel_time: bool,
}

#[derive(Debug, Clone)]
pub struct PatternLabeling {
    /// Cluster index owning each of Patterns I..IV.
    pub cluster_of_pattern: [usize; 4],
    /// Pattern per cluster index.
    pub pattern_of_cluster: Vec<Pattern>,
    /// Mean raw flux per pattern, in pattern order.
    pub mean_flux: [f64; 4],
    /// Share of total flux per pattern.
    pub flux_share: [f64; 4],
    pub mean_travel_time: [f64; 4],
    pub mean_gdp_product: [f64; 4],
    pub checks: PatternChecks,
}

/// Labels a k = 4 model's clusters as Patterns I-IV by descending mean raw
/// flux; ties break by ascending mean travel time.
pub fn label_patterns(
    model: &ClusterModel,
    features: &[TrajectoryFeature],
) -> Result<PatternLabeling> {
    if model.k != 4 {
        return Err(Error::Contract(format!(
            "pattern labeling requires k = 4, got {}",
            model.k
        )));
    }
    let mut flux_sum = [0.0f64; 4];
    let mut time_sum = [0.0f64; 4];
    let mut gdp_sum = [0.0f64; 4];
    let mut counts = [0usize; 4];
    for (&i, &label) in model.feature_indices.iter().zip(&model.labels) {
        let f = &features[i];
        flux_sum[label] += f.flux as f64;
        time_sum[label] += f.travel_time;
        gdp_sum[label] += f.gdp_product;
        counts[label] += 1;
    }
    if counts.iter().any(|&c| c == 0) {
        return Err(Error::Data("empty cluster in k = 4 model".into()));
    }
    let mean = |sums: &[f64; 4], c: usize| sums[c] / counts[c] as f64;

    let mut order: Vec<usize> = (0..4).collect();
    order.sort_by(|&a, &b| {
        mean(&flux_sum, b)
            .partial_cmp(&mean(&flux_sum, a))
            .unwrap()
            .then(
                mean(&time_sum, a)
                    .partial_cmp(&mean(&time_sum, b))
                    .unwrap(),
            )
    });

    let mut pattern_of_cluster = vec![Pattern::I; 4];
    let mut cluster_of_pattern = [0usize; 4];
    let mut mean_flux = [0.0f64; 4];
    let mut flux_share = [0.0f64; 4];
    let mut mean_travel_time = [0.0f64; 4];
    let mut mean_gdp_product = [0.0f64; 4];
    let total_flux: f64 = flux_sum.iter().sum();
    for (rank, &cluster) in order.iter().enumerate() {
        let pattern = Pattern::ALL[rank];
        pattern_of_cluster[cluster] = pattern;
        cluster_of_pattern[rank] = cluster;
        mean_flux[rank] = mean(&flux_sum, cluster);
        flux_share[rank] = flux_sum[cluster] / total_flux;
        mean_travel_time[rank] = mean(&time_sum, cluster);
        mean_gdp_product[rank] = mean(&gdp_sum, cluster);
    }

    let checks = PatternChecks {
        pattern_i_min_travel_time: (1..4).all(|p| mean_travel_time[0] <= mean_travel_time[p]),
        pattern_ii_max_gdp_among_ii_to_iv: (2..4)
            .all(|p| mean_gdp_product[1] >= mean_gdp_product[p]),
        pattern_iv_max_travel_time: (0..3).all(|p| mean_travel_time[3] >= mean_travel_time[p]),
    };
    Ok(PatternLabeling {
        cluster_of_pattern,
        pattern_of_cluster,
        mean_flux,
        flux_share,
        mean_travel_time,
        mean_gdp_product,
        checks,
    })
}

/// G-GM fit (stated metric, travel time by default) restricted to each
/// pattern's pair set. Per-pattern failures do not abort the others.
pub fn fit_per_pattern(
    model: &ClusterModel,
    labeling: &PatternLabeling,
    features: &[TrajectoryFeature],
    attrs: &CityTable,
    costs: &CostMatrix,
) -> Vec<(Pattern, Result<GravityFit>)> {
    let spec = ModelSpec {
        family: ModelFamily::GGm,
        cost_metric: costs.metric,
    };
    Pattern::ALL
        .iter()
        .map(|&pattern| {
            let cluster = labeling.cluster_of_pattern[pattern.index()];
            let entries: Vec<(CityId, CityId, u64)> = model
                .feature_indices
                .iter()
                .zip(&model.labels)
                .filter(|&(_, &label)| label == cluster)
                .map(|(&i, _)| {
                    let f = &features[i];
                    (f.pair.0.clone(), f.pair.1.clone(), f.flux)
                })
                .collect();
            let outcome = FluxMatrix::from_entries(false, entries)
                .and_then(|flux| gravity::design_rows(spec, &flux, attrs, costs))
                .and_then(|table| gravity::fit(&table));
            (pattern, outcome)
        })
        .collect()
}
