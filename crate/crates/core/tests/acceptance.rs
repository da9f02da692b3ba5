//! Acceptance gate. One test per criterion; each prints a single
//! `criterion N ...: pass` line (run with `-- --nocapture` to see them).
//!
//! Criteria 1-7 are property-based and always run. Criteria 8-13 need the
//! reference dataset; point `CITYFLUX_DATA` at it (or place it in `data/` at
//! the workspace root) and they activate, otherwise they skip cleanly.

mod common;

use std::collections::BTreeMap;
use std::fs;
use std::io::BufReader;
use std::path::Path;
use std::sync::OnceLock;
use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use cityflux::clustering::{
    self, build_features, kmeans_cosine, label_patterns, silhouette, KmeansConfig,
    TrajectoryFeature,
};
use cityflux::geo::{great_circle_km, CityTable, CostMatrix, CostMetric, EARTH_DIAMETER_KM};
use cityflux::gravity::{self, ModelFamily, ModelSpec, Prediction};
use cityflux::indices::{self, PatternedFlux};
use cityflux::ingest::{self, CityRegistry, FluxMatrix, TimeWindow};
use cityflux::pipeline;
use cityflux::synth::{generate, GravityScenario};

fn pass(n: u32, name: &str) {
    println!("criterion {n} ({name}): pass");
}

fn skip(n: u32, name: &str) {
    println!("criterion {n} ({name}): skipped, dataset not present");
}

// ---------------------------------------------------------------- criterion 1

#[test]
fn criterion_01_parameter_recovery() {
    let start = Instant::now();
    let cases = [
        (ModelFamily::Gm, 0.3, 1.0, 1.0, 0.7),
        (ModelFamily::GGm, -0.2, 1.0, 1.0, 0.5),
        (ModelFamily::AveGGm, 1.1, 1.0, 1.0, 1.3),
        (ModelFamily::DirGGm, 0.4, 0.9, 1.1, 0.6),
    ];
    for (family, log_a, alpha, beta, gamma) in cases {
        let scenario = GravityScenario {
            log_a,
            alpha,
            beta,
            gamma,
            ..GravityScenario::new(family, 1)
        };
        let fit = gravity::fit(&generate(scenario).unwrap().table().unwrap()).unwrap();
        let close = |got: f64, want: f64| (got - want).abs() <= 1e-9 * want.abs().max(1.0);
        assert!(close(fit.intercept_log, log_a), "{family:?} log_a {}", fit.intercept_log);
        assert!(close(fit.alpha, alpha), "{family:?} alpha {}", fit.alpha);
        assert!(close(fit.beta, beta), "{family:?} beta {}", fit.beta);
        assert!(close(fit.gamma, gamma), "{family:?} gamma {}", fit.gamma);

        for seed in 0..30u64 {
            let noisy = GravityScenario {
                noise_sigma: 0.1,
                seed: 100 + seed,
                ..scenario
            };
            let fit = gravity::fit(&generate(noisy).unwrap().table().unwrap()).unwrap();
            assert!(
                (fit.gamma - gamma).abs() <= 0.02,
                "{family:?} seed {seed}: noisy gamma {} vs {gamma}",
                fit.gamma
            );
        }
    }
    assert!(start.elapsed().as_secs_f64() < 5.0, "recovery suite too slow");
    pass(1, "parameter recovery");
}

// ---------------------------------------------------------------- criterion 2

/// Normal-equations oracle: X'X b = X'y by Gaussian elimination with
/// partial pivoting. Independent of the SVD path under test.
fn normal_equations(x: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let p = x[0].len();
    let mut a = vec![vec![0.0f64; p + 1]; p];
    for (row, &yi) in x.iter().zip(y) {
        for i in 0..p {
            for j in 0..p {
                a[i][j] += row[i] * row[j];
            }
            a[i][p] += row[i] * yi;
        }
    }
    for col in 0..p {
        let pivot = (col..p)
            .max_by(|&r, &s| a[r][col].abs().partial_cmp(&a[s][col].abs()).unwrap())
            .unwrap();
        a.swap(col, pivot);
        for r in col + 1..p {
            let factor = a[r][col] / a[col][col];
            for c in col..=p {
                a[r][c] -= factor * a[col][c];
            }
        }
    }
    let mut b = vec![0.0f64; p];
    for i in (0..p).rev() {
        let mut acc = a[i][p];
        for j in i + 1..p {
            acc -= a[i][j] * b[j];
        }
        b[i] = acc / a[i][i];
    }
    b
}

#[test]
fn criterion_02_ols_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for trial in 0..50 {
        let directed = trial % 2 == 0;
        let family = if directed { ModelFamily::DirGGm } else { ModelFamily::GGm };
        let p_free = if directed { 3 } else { 1 };
        let n = rng.gen_range(p_free + 2..=10);
        let rows: Vec<gravity::RegressionRow> = (0..n)
            .map(|i| gravity::RegressionRow {
                pair: (format!("a{i}"), format!("b{i}")),
                response: rng.gen_range(-3.0..3.0),
                regressors: (0..p_free).map(|_| rng.gen_range(-2.0..2.0)).collect(),
            })
            .collect();
        let table = gravity::RegressionTable {
            spec: ModelSpec {
                family,
                cost_metric: CostMetric::TravelMin,
            },
            param_names: if directed {
                vec!["log_a", "alpha", "beta", "gamma"]
            } else {
                vec!["log_a", "gamma"]
            },
            excluded_missing_cost: 0,
            rows: rows.clone(),
        };
        let fit = gravity::fit(&table).unwrap();

        let x: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| {
                let mut v = vec![1.0];
                v.extend(&r.regressors);
                v
            })
            .collect();
        let y: Vec<f64> = rows.iter().map(|r| r.response).collect();
        let oracle = normal_equations(&x, &y);

        let got: Vec<f64> = if directed {
            vec![fit.intercept_log, fit.alpha, fit.beta, fit.gamma]
        } else {
            vec![fit.intercept_log, fit.gamma]
        };
        for (g, o) in got.iter().zip(&oracle) {
            assert!((g - o).abs() <= 1e-10, "trial {trial}: {g} vs oracle {o}");
        }
    }
    pass(2, "OLS normal-equations oracle");
}

// ---------------------------------------------------------------- criterion 3

fn prediction_from(flux: &FluxMatrix, scale: f64, shift_support: bool) -> Prediction {
    let entries: BTreeMap<_, _> = flux
        .entries()
        .map(|((a, b), &c)| {
            let key = if shift_support {
                (format!("{a}x"), format!("{b}x"))
            } else {
                (a.clone(), b.clone())
            };
            (key, c as f64 * scale)
        })
        .collect();
    Prediction {
        spec: ModelSpec {
            family: ModelFamily::GGm,
            cost_metric: CostMetric::TravelMin,
        },
        entries,
        errors: Vec::new(),
    }
}

#[test]
fn criterion_03_ssi_identities() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let n_pairs = rng.gen_range(1..8);
        let entries: Vec<(String, String, u64)> = (0..n_pairs)
            .map(|i| (format!("a{i}"), format!("b{i}"), rng.gen_range(1..1000)))
            .collect();
        let flux = FluxMatrix::from_entries(false, entries).unwrap();

        // SSI(F, F) = 1.
        let same = gravity::ssi(&flux, &prediction_from(&flux, 1.0, false)).unwrap();
        assert!((same - 1.0).abs() <= 1e-12, "SSI(F,F) = {same}");

        // Vanishing overlap: predicted mass -> 0 drives SSI -> 0.
        let tiny = gravity::ssi(&flux, &prediction_from(&flux, 1e-15, false)).unwrap();
        assert!(tiny >= 0.0 && tiny <= 1e-12, "disjoint limit {tiny}");

        // Symmetry: swap actual and predicted roles.
        let scale = rng.gen_range(0.1..10.0);
        let forward = gravity::ssi(&flux, &prediction_from(&flux, scale, false)).unwrap();
        let scaled_counts: Vec<(String, String, u64)> = flux
            .entries()
            .map(|((a, b), &c)| (a.clone(), b.clone(), ((c as f64 * scale).round() as u64).max(1)))
            .collect();
        let scaled = FluxMatrix::from_entries(false, scaled_counts).unwrap();
        let original: Prediction = prediction_from(&flux, 1.0, false);
        let backward = gravity::ssi(&scaled, &original).unwrap();
        // Equal only when the rounded swap preserves values; check on integer scales.
        if (scale.round() - scale).abs() < f64::EPSILON {
            assert!((forward - backward).abs() <= 1e-12, "{forward} vs {backward}");
        }
        assert!((0.0..=1.0).contains(&forward), "bounds violated: {forward}");
    }

    // Exact symmetry on integer-valued matrices.
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    for _ in 0..200 {
        let n_pairs = rng.gen_range(1..8);
        let keys: Vec<(String, String)> =
            (0..n_pairs).map(|i| (format!("a{i}"), format!("b{i}"))).collect();
        let f: Vec<u64> = (0..n_pairs).map(|_| rng.gen_range(1..100)).collect();
        let g: Vec<u64> = (0..n_pairs).map(|_| rng.gen_range(1..100)).collect();
        let make = |v: &[u64]| {
            FluxMatrix::from_entries(
                false,
                keys.iter().zip(v).map(|((a, b), &c)| (a.clone(), b.clone(), c)),
            )
            .unwrap()
        };
        let fm = make(&f);
        let gm = make(&g);
        let as_pred = |m: &FluxMatrix| prediction_from(m, 1.0, false);
        let fg = gravity::ssi(&fm, &as_pred(&gm)).unwrap();
        let gf = gravity::ssi(&gm, &as_pred(&fm)).unwrap();
        assert!((fg - gf).abs() <= 1e-12, "asymmetry {fg} vs {gf}");
    }
    pass(3, "SSI bounds and identities");
}

// ---------------------------------------------------------------- criterion 4

/// Independent haversine oracle in the atan2 formulation.
fn oracle_haversine(a: (f64, f64), b: (f64, f64), diameter_km: f64) -> f64 {
    let (lon1, lat1) = (a.0.to_radians(), a.1.to_radians());
    let (lon2, lat2) = (b.0.to_radians(), b.1.to_radians());
    let h = ((lat2 - lat1) / 2.0).sin().powi(2)
        + lat1.cos() * lat2.cos() * ((lon2 - lon1) / 2.0).sin().powi(2);
    diameter_km * h.sqrt().atan2((1.0 - h).sqrt())
}

#[test]
fn criterion_04_haversine_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let point = |rng: &mut ChaCha8Rng| {
        (rng.gen_range(-180.0..180.0), rng.gen_range(-90.0..90.0))
    };
    for _ in 0..1000 {
        let a = point(&mut rng);
        let b = point(&mut rng);
        let got = great_circle_km(a, b, EARTH_DIAMETER_KM);
        let want = oracle_haversine(a, b, EARTH_DIAMETER_KM);
        assert!(
            (got - want).abs() <= 1e-6 * want.abs().max(1.0),
            "({a:?},{b:?}): {got} vs {want}"
        );
    }
    for _ in 0..1000 {
        let a = point(&mut rng);
        let b = point(&mut rng);
        let c = point(&mut rng);
        let ab = great_circle_km(a, b, EARTH_DIAMETER_KM);
        let bc = great_circle_km(b, c, EARTH_DIAMETER_KM);
        let ac = great_circle_km(a, c, EARTH_DIAMETER_KM);
        assert!(
            ac <= ab + bc + 1e-9 * (ab + bc + ac).max(1.0),
            "triangle inequality: {ac} > {ab} + {bc}"
        );
    }
    pass(4, "haversine oracle and triangle inequality");
}

// ---------------------------------------------------------------- criterion 5

fn unit(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

/// Exhaustive best criterion over all surjective assignments of `points`
/// into k clusters; the label of point 0 is pinned to cluster 0 since the
/// criterion is label-permutation invariant.
fn exhaustive_best(points: &[[f64; 3]], k: usize) -> f64 {
    let n = points.len();
    let units: Vec<[f64; 3]> = points.iter().map(|&p| unit(p)).collect();
    let mut best = f64::NEG_INFINITY;
    let total = k.pow((n - 1) as u32);
    let mut labels = vec![0usize; n];
    for code in 0..total {
        let mut c = code;
        for label in labels.iter_mut().skip(1) {
            *label = c % k;
            c /= k;
        }
        let mut used = vec![false; k];
        for &l in &labels {
            used[l] = true;
        }
        if used.iter().any(|&u| !u) {
            continue;
        }
        // E = sum_k ||sum of unit members||; see the clustering module docs.
        let mut sums = vec![[0.0f64; 3]; k];
        for (l, u) in labels.iter().zip(&units) {
            for d in 0..3 {
                sums[*l][d] += u[d];
            }
        }
        let e: f64 = sums
            .iter()
            .map(|s| (s[0] * s[0] + s[1] * s[1] + s[2] * s[2]).sqrt())
            .sum();
        best = best.max(e);
    }
    best
}

fn planted_features(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<TrajectoryFeature> {
    (0..n)
        .map(|i| {
            let axis = i % k;
            let mut v = [0.0f64; 3];
            for (d, coord) in v.iter_mut().enumerate() {
                *coord = if d == axis { 1.0 } else { rng.gen_range(0.0..0.15) };
            }
            TrajectoryFeature {
                pair: (format!("a{i:02}"), format!("b{i:02}")),
                g_norm: v[0],
                t_norm: v[1],
                f_norm: v[2],
                gdp_product: 1.0,
                travel_time: 1.0,
                flux: 1,
            }
        })
        .collect()
}

#[test]
fn criterion_05_clustering_recovery() {
    let mut matched = 0usize;
    for trial in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(5000 + trial);
        let k = if trial % 2 == 0 { 2 } else { 3 };
        let n = if k == 2 { rng.gen_range(6..=12) } else { rng.gen_range(6..=10) };
        let features = planted_features(&mut rng, n, k);
        let model = kmeans_cosine(&features, KmeansConfig::new(k, trial)).unwrap();

        // Monotonicity must hold in 100% of runs.
        for w in model.criterion_history.windows(2) {
            assert!(w[1] >= w[0] - 1e-9, "criterion decreased: {w:?}");
        }

        let points: Vec<[f64; 3]> = features.iter().map(|f| f.vector()).collect();
        let best = exhaustive_best(&points, k);
        assert!(
            model.criterion_value <= best + 1e-9,
            "criterion {} exceeds exhaustive optimum {best}",
            model.criterion_value
        );
        if (best - model.criterion_value).abs() <= 1e-9 * best.max(1.0) {
            matched += 1;
        }
    }
    assert!(matched >= 95, "only {matched}/100 trials reached the optimum");
    pass(5, "clustering recovery vs exhaustive optimum");
}

// ---------------------------------------------------------------- criterion 6

struct IndexFixture {
    pf: PatternedFlux,
    flux: FluxMatrix,
    times: CostMatrix,
}

fn random_index_fixture(rng: &mut ChaCha8Rng, flux_scale: u64) -> IndexFixture {
    let cities: Vec<String> = (0..8).map(|i| format!("c{i}")).collect();
    let province_of: BTreeMap<String, String> = cities
        .iter()
        .enumerate()
        .map(|(i, c)| (c.clone(), format!("p{}", i % 3)))
        .collect();
    let mut entries = BTreeMap::new();
    let mut times = CostMatrix::new(CostMetric::TravelMin);
    for (i, a) in cities.iter().enumerate() {
        for b in cities.iter().skip(i + 1) {
            if rng.gen_bool(0.7) {
                let flux = rng.gen_range(1..100u64) * flux_scale;
                let pattern = clustering::Pattern::ALL[rng.gen_range(0..4)];
                entries.insert((a.clone(), b.clone()), (flux, pattern));
                times.insert(a, b, rng.gen_range(1.0..500.0)).unwrap();
            }
        }
    }
    let flux = FluxMatrix::from_entries(
        false,
        entries.iter().map(|((a, b), (f, _))| (a.clone(), b.clone(), *f)),
    )
    .unwrap();
    IndexFixture {
        pf: PatternedFlux::new(entries, province_of),
        flux,
        times,
    }
}

#[test]
fn criterion_06_index_identities() {
    for trial in 0..50u64 {
        let base = random_index_fixture(&mut ChaCha8Rng::seed_from_u64(6000 + trial), 1);
        let scaled = random_index_fixture(&mut ChaCha8Rng::seed_from_u64(6000 + trial), 7);

        for city in base.pf.cities() {
            let di = indices::development_index(&base.pf, city).unwrap();
            assert!((0.0..=1.0).contains(&di), "DI out of range: {di}");
            // Global flux rescaling leaves the share untouched.
            let di7 = indices::development_index(&scaled.pf, city).unwrap();
            assert_eq!(di, di7, "DI not rescaling-invariant for {city}");

            let curve = indices::locality_curve(&base.flux, &base.times, city).unwrap();
            for w in curve.windows(2) {
                assert!(w[1].1 >= w[0].1 - 1e-12, "c(i,r) decreased: {w:?}");
            }
            let last = curve.last().unwrap().1;
            assert!((last - 1.0).abs() <= 1e-12, "c(i,r) ends at {last}");
            let curve7 = indices::locality_curve(&scaled.flux, &scaled.times, city).unwrap();
            for (a, b) in curve.iter().zip(&curve7) {
                assert!((a.1 - b.1).abs() <= 1e-12, "c(i,r) not rescaling-invariant");
            }
        }

        for province in base.pf.provinces() {
            let p = indices::province_pattern_ratio(&base.pf, province);
            let Ok(p) = p else { continue }; // province with no flux
            let sum: f64 = p.iter().sum();
            assert!((sum - 1.0).abs() <= 1e-12, "sum p(k,P) = {sum}");
            assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)));
            let p7 = indices::province_pattern_ratio(&scaled.pf, province).unwrap();
            for (a, b) in p.iter().zip(&p7) {
                assert_eq!(a, b, "p(k,P) not rescaling-invariant");
            }
        }
    }
    pass(6, "index identities and rescaling invariance");
}

// ---------------------------------------------------------------- criterion 7

fn file_map(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.insert(rel, fs::read(&path).unwrap());
            }
        }
    }
    out
}

#[test]
fn criterion_07_worker_count_determinism() {
    let root = tempfile::tempdir().unwrap();
    let messages = root.path().join("messages.csv");
    let registry = root.path().join("registry.csv");
    let attrs = root.path().join("attrs.csv");
    let cost_km = root.path().join("cost_km.csv");
    let cost_min = root.path().join("cost_min.csv");
    common::write_message_log(&messages);
    common::write_registry(&registry);
    common::write_city_attrs(&attrs);
    common::write_cost_table(&cost_km, 60.0);
    common::write_cost_table(&cost_min, 1.0);

    let run = |args: &[&str]| {
        let status = common::run_cli(args).status;
        assert!(
            matches!(status.code(), Some(0) | Some(2)),
            "command failed: {args:?} -> {status:?}"
        );
    };

    // Shared inputs so the fit/cluster configs are identical across runs.
    let inputs = root.path().join("inputs");
    run(&[
        "extract", "--messages", messages.to_str().unwrap(),
        "--registry", registry.to_str().unwrap(),
        "--window-start", "0", "--window-end", "2000",
        "--seed", "11", "--out", inputs.to_str().unwrap(),
    ]);
    let dir_flux = inputs.join("directed_flux.csv");
    let und_flux = inputs.join("undirected_flux.csv");

    let mut snapshots: Vec<BTreeMap<String, Vec<u8>>> = Vec::new();
    for workers in ["1", "4", "8"] {
        let out = root.path().join(format!("out-w{workers}"));
        let out_s = out.to_string_lossy().into_owned();
        run(&[
            "extract", "--messages", messages.to_str().unwrap(),
            "--registry", registry.to_str().unwrap(),
            "--window-start", "0", "--window-end", "2000",
            "--seed", "11", "--workers", workers, "--out", &out_s,
        ]);
        run(&[
            "fit", "--directed-flux", dir_flux.to_str().unwrap(),
            "--undirected-flux", und_flux.to_str().unwrap(),
            "--attrs", attrs.to_str().unwrap(),
            "--cost-travel-km", cost_km.to_str().unwrap(),
            "--cost-travel-min", cost_min.to_str().unwrap(),
            "--seed", "11", "--workers", workers, "--out", &out_s,
        ]);
        run(&[
            "cluster", "--undirected-flux", und_flux.to_str().unwrap(),
            "--attrs", attrs.to_str().unwrap(),
            "--cost-travel-min", cost_min.to_str().unwrap(),
            "--k", "4", "--k-min", "2", "--k-max", "6",
            "--seed", "11", "--workers", workers, "--out", &out_s,
        ]);
        snapshots.push(file_map(&out));
    }
    let baseline = &snapshots[0];
    assert!(!baseline.is_empty(), "no outputs produced");
    for other in &snapshots[1..] {
        assert_eq!(
            baseline.keys().collect::<Vec<_>>(),
            other.keys().collect::<Vec<_>>(),
            "file sets differ across worker counts"
        );
        for (name, bytes) in baseline {
            assert_eq!(bytes, &other[name], "{name} differs across worker counts");
        }
    }
    pass(7, "byte-identical outputs across worker counts");
}

// ------------------------------------------------------- data-dependent suite
//
// Expected dataset layout (CITYFLUX_DATA or <workspace>/data):
//   messages.csv         message_id,user_id,timestamp,city_id
//   registry.csv         raw,city_id
//   window.cfg           key=value: window_start, window_end (epoch seconds)
//   city_attributes.csv  standard 8-column attribute table
//   cost_travel_km.csv   city_a,city_b,cost
//   cost_travel_min.csv  city_a,city_b,cost
//   trains.csv           city_a,city_b,value          (criterion 13 only)
//   province_rnd.csv     province_id,value            (criterion 13 only)

struct Dataset {
    extraction: ingest::Extraction,
    attrs: CityTable,
    costs: BTreeMap<CostMetric, CostMatrix>,
    dir: std::path::PathBuf,
}

fn dataset() -> Option<&'static Dataset> {
    static CACHE: OnceLock<Option<Dataset>> = OnceLock::new();
    CACHE
        .get_or_init(|| {
            let dir = common::data_dir()?;
            let required = [
                "messages.csv",
                "registry.csv",
                "window.cfg",
                "city_attributes.csv",
                "cost_travel_km.csv",
                "cost_travel_min.csv",
            ];
            if required.iter().any(|f| !dir.join(f).is_file()) {
                return None;
            }
            Some(load_dataset(&dir))
        })
        .as_ref()
}

fn load_dataset(dir: &Path) -> Dataset {
    let registry = CityRegistry::from_reader(fs::File::open(dir.join("registry.csv")).unwrap())
        .expect("registry.csv");
    let window_cfg = pipeline::read_config_file(&dir.join("window.cfg")).expect("window.cfg");
    let window = TimeWindow {
        start: window_cfg["window_start"].parse().expect("window_start"),
        end: window_cfg["window_end"].parse().expect("window_end"),
    };
    let extraction = ingest::extract(
        BufReader::new(fs::File::open(dir.join("messages.csv")).unwrap()),
        &registry,
        window,
    )
    .expect("extraction");
    let attrs = CityTable::from_reader(fs::File::open(dir.join("city_attributes.csv")).unwrap())
        .expect("city_attributes.csv");

    let mut costs = BTreeMap::new();
    costs.insert(
        CostMetric::GeoKm,
        CostMatrix::from_coordinates(&extraction.undirected, &attrs, EARTH_DIAMETER_KM)
            .expect("geographic distances"),
    );
    for (metric, file) in [
        (CostMetric::TravelKm, "cost_travel_km.csv"),
        (CostMetric::TravelMin, "cost_travel_min.csv"),
    ] {
        costs.insert(
            metric,
            CostMatrix::from_reader(fs::File::open(dir.join(file)).unwrap(), metric)
                .unwrap_or_else(|e| panic!("{file}: {e}")),
        );
    }
    Dataset {
        extraction,
        attrs,
        costs,
        dir: dir.to_path_buf(),
    }
}

fn dataset_features(ds: &Dataset) -> Vec<TrajectoryFeature> {
    build_features(
        &ds.extraction.undirected,
        &ds.attrs,
        &ds.costs[&CostMetric::TravelMin],
    )
    .expect("dataset features")
    .features
}

#[test]
fn criterion_08_extraction_totals() {
    let Some(ds) = dataset() else {
        skip(8, "extraction totals");
        return;
    };
    assert_eq!(ds.extraction.undirected.city_count(), 371, "city count");
    assert_eq!(ds.extraction.undirected.pair_count(), 61_759, "undirected pairs");
    assert_eq!(ds.extraction.directed.pair_count(), 120_361, "directed pairs");
    pass(8, "extraction totals");
}

#[test]
fn criterion_09_reference_fit_parameters() {
    let Some(ds) = dataset() else {
        skip(9, "reference fit parameters");
        return;
    };
    let reference_gamma: BTreeMap<(ModelFamily, CostMetric), f64> = [
        ((ModelFamily::Gm, CostMetric::GeoKm), 0.3137),
        ((ModelFamily::AveGGm, CostMetric::GeoKm), 0.7574),
        ((ModelFamily::GGm, CostMetric::GeoKm), 0.2872),
        ((ModelFamily::DirGGm, CostMetric::GeoKm), 0.3066),
        ((ModelFamily::Gm, CostMetric::TravelKm), 0.3910),
        ((ModelFamily::AveGGm, CostMetric::TravelKm), 0.8608),
        ((ModelFamily::GGm, CostMetric::TravelKm), 0.3409),
        ((ModelFamily::DirGGm, CostMetric::TravelKm), 0.3373),
        ((ModelFamily::Gm, CostMetric::TravelMin), 0.3901),
        ((ModelFamily::AveGGm, CostMetric::TravelMin), 0.7307),
        ((ModelFamily::GGm, CostMetric::TravelMin), 0.3165),
        ((ModelFamily::DirGGm, CostMetric::TravelMin), 0.3628),
    ]
    .into_iter()
    .collect();

    let cells = gravity::compare_models(
        &ds.extraction.directed,
        &ds.extraction.undirected,
        &ds.attrs,
        &ds.costs,
    );
    for cell in &cells {
        let key = (cell.spec.family, cell.spec.cost_metric);
        let (fit, _, _) = cell
            .outcome
            .as_ref()
            .unwrap_or_else(|e| panic!("cell {key:?} errored: {e}"));
        let want = reference_gamma[&key];
        assert!(
            (fit.gamma - want).abs() <= 0.02,
            "{key:?}: gamma {} vs reference {want}",
            fit.gamma
        );
        if key == (ModelFamily::DirGGm, CostMetric::TravelMin) {
            assert!((fit.alpha - 0.9167).abs() <= 0.02, "alpha {}", fit.alpha);
            assert!((fit.beta - 0.9239).abs() <= 0.02, "beta {}", fit.beta);
        }
    }
    pass(9, "reference fit parameters");
}

#[test]
fn criterion_10_model_ranking() {
    let Some(ds) = dataset() else {
        skip(10, "model ranking");
        return;
    };
    let cells = gravity::compare_models(
        &ds.extraction.directed,
        &ds.extraction.undirected,
        &ds.attrs,
        &ds.costs,
    );
    let best = cells
        .iter()
        .filter_map(|c| c.outcome.as_ref().ok().map(|(_, _, ssi)| (c.spec, *ssi)))
        .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
        .expect("at least one fitted cell");
    assert_eq!(
        (best.0.family, best.0.cost_metric),
        (ModelFamily::GGm, CostMetric::TravelMin),
        "max-SSI cell is {:?} at {}",
        best.0,
        best.1
    );
    pass(10, "G-GM/travel-time attains max SSI");
}

#[test]
fn criterion_11_pattern_fluxes_and_silhouette() {
    let Some(ds) = dataset() else {
        skip(11, "pattern fluxes and silhouette");
        return;
    };
    let features = dataset_features(ds);
    let want_mean = [18_522.0, 3_182.0, 1_045.0, 195.0];
    let want_share = [0.29, 0.28, 0.20, 0.23];

    let mut flux_seed = None;
    let mut sil_seed = None;
    for seed in 0..10u64 {
        let model = kmeans_cosine(&features, KmeansConfig::new(4, seed)).unwrap();
        if let Ok(labeling) = label_patterns(&model, &features) {
            let flux_ok = labeling
                .mean_flux
                .iter()
                .zip(&want_mean)
                .all(|(got, want)| (got - want).abs() <= 0.10 * want)
                && labeling
                    .flux_share
                    .iter()
                    .zip(&want_share)
                    .all(|(got, want)| (got - want).abs() <= 0.03);
            if flux_ok && flux_seed.is_none() {
                flux_seed = Some(seed);
            }
        }
        let k3 = kmeans_cosine(&features, KmeansConfig::new(3, seed)).unwrap();
        if (silhouette(&k3) - 0.93).abs() <= 0.05 && sil_seed.is_none() {
            sil_seed = Some(seed);
        }
        if flux_seed.is_some() && sil_seed.is_some() {
            break;
        }
    }
    let flux_seed = flux_seed.expect("no seed in 0..10 matched the reference pattern fluxes");
    let sil_seed = sil_seed.expect("no seed in 0..10 matched the reference silhouette");
    println!("criterion 11: flux match at seed {flux_seed}, silhouette match at seed {sil_seed}");
    pass(11, "pattern fluxes and silhouette");
}

#[test]
fn criterion_12_per_pattern_gamma() {
    let Some(ds) = dataset() else {
        skip(12, "per-pattern gamma");
        return;
    };
    let features = dataset_features(ds);
    let want = [0.1910, 0.3868, 0.4186, 0.1961];
    let mut matched = None;
    for seed in 0..10u64 {
        let model = kmeans_cosine(&features, KmeansConfig::new(4, seed)).unwrap();
        let Ok(labeling) = label_patterns(&model, &features) else { continue };
        let fits = clustering::fit_per_pattern(
            &model,
            &labeling,
            &features,
            &ds.attrs,
            &ds.costs[&CostMetric::TravelMin],
        );
        let ok = fits.iter().zip(&want).all(|((_, outcome), want)| {
            outcome
                .as_ref()
                .map(|fit| (fit.gamma - want).abs() <= 0.03)
                .unwrap_or(false)
        });
        if ok {
            matched = Some(seed);
            break;
        }
    }
    let seed = matched.expect("no seed in 0..10 reproduced the per-pattern gammas");
    println!("criterion 12: match at seed {seed}");
    pass(12, "per-pattern gamma");
}

fn read_pair_covariate(path: &Path) -> BTreeMap<(String, String), f64> {
    let mut rdr = csv::Reader::from_reader(fs::File::open(path).unwrap());
    rdr.records()
        .map(|r| {
            let r = r.unwrap();
            let (a, b) = if r[0].to_string() <= r[1].to_string() {
                (r[0].to_string(), r[1].to_string())
            } else {
                (r[1].to_string(), r[0].to_string())
            };
            ((a, b), r[2].parse().unwrap())
        })
        .collect()
}

#[test]
fn criterion_13_correlations() {
    let Some(ds) = dataset() else {
        skip(13, "correlations");
        return;
    };
    let trains = ds.dir.join("trains.csv");
    let rnd = ds.dir.join("province_rnd.csv");
    if !trains.is_file() || !rnd.is_file() {
        skip(13, "correlations");
        return;
    }

    // Flux vs train count over the covered pairs.
    let covariate = read_pair_covariate(&trains);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for ((a, b), &flux) in ds.extraction.undirected.entries() {
        if let Some(&v) = covariate.get(&(a.clone(), b.clone())) {
            xs.push(flux as f64);
            ys.push(v);
        }
    }
    let train_r = indices::pearson(&xs, &ys).expect("train correlation");
    assert!((train_r - 0.37).abs() <= 0.05, "flux vs trains r = {train_r}");

    // Province R&D ratio vs Pattern III+IV share.
    let features = dataset_features(ds);
    let model = kmeans_cosine(&features, KmeansConfig::new(4, 0)).unwrap();
    let labeling = label_patterns(&model, &features).unwrap();
    let entries: BTreeMap<_, _> = model
        .feature_indices
        .iter()
        .zip(&model.labels)
        .map(|(&i, &label)| {
            let f = &features[i];
            (f.pair.clone(), (f.flux, labeling.pattern_of_cluster[label]))
        })
        .collect();
    let province_of: BTreeMap<String, String> = ds
        .attrs
        .iter()
        .map(|c| (c.city_id.clone(), c.province_id.clone()))
        .collect();
    let pf = PatternedFlux::new(entries, province_of);

    let mut rdr = csv::Reader::from_reader(fs::File::open(&rnd).unwrap());
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for record in rdr.records() {
        let record = record.unwrap();
        if let Ok(p) = indices::province_pattern_ratio(&pf, &record[0]) {
            xs.push(record[1].parse::<f64>().unwrap());
            ys.push(p[2] + p[3]);
        }
    }
    let rnd_r = indices::pearson(&xs, &ys).expect("R&D correlation");
    assert!((rnd_r - (-0.83)).abs() <= 0.05, "R&D vs III+IV share r = {rnd_r}");
    pass(13, "correlations");
}
