//! Cross-module invariants that don't fit a single unit-test module.

use proptest::prelude::*;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use cityflux::clustering::build_features;
use cityflux::geo::{CityAttributes, CityTable, CostMatrix, CostMetric};
use cityflux::gravity::{self, design_rows_real, ModelFamily, ModelSpec};
use cityflux::indices;
use cityflux::ingest::FluxMatrix;
use cityflux::synth::{generate, GravityScenario};

/// Rescaling every cost by a constant factor leaves the exponent untouched
/// and shifts the intercept by exactly gamma * ln(factor).
#[test]
fn gamma_is_invariant_under_cost_rescaling() {
    for (family, factor) in [
        (ModelFamily::GGm, 60.0),
        (ModelFamily::DirGGm, 0.5),
        (ModelFamily::Gm, 1000.0),
    ] {
        let data = generate(GravityScenario::new(family, 17)).unwrap();
        let base = gravity::fit(&data.table().unwrap()).unwrap();

        let mut scaled_costs = CostMatrix::new(data.costs.metric);
        for ((a, b), &c) in data.costs.entries() {
            scaled_costs.insert(a, b, c * factor).unwrap();
        }
        let spec = ModelSpec {
            family,
            cost_metric: data.scenario.metric,
        };
        let table = design_rows_real(
            spec,
            data.pairs.iter().map(|(p, f)| (p, *f)),
            data.directed,
            &data.attrs,
            &scaled_costs,
        )
        .unwrap();
        let scaled = gravity::fit(&table).unwrap();

        let tol = |v: f64| 1e-9 * v.abs().max(1.0);
        assert!((scaled.gamma - base.gamma).abs() <= tol(base.gamma));
        assert!((scaled.alpha - base.alpha).abs() <= tol(base.alpha));
        assert!((scaled.beta - base.beta).abs() <= tol(base.beta));
        let shift = base.gamma * factor.ln();
        assert!(
            (scaled.intercept_log - (base.intercept_log + shift)).abs()
                <= tol(base.intercept_log + shift),
            "{family:?}: intercept {} vs {}",
            scaled.intercept_log,
            base.intercept_log + shift
        );
    }
}

fn random_feature_inputs(seed: u64) -> (FluxMatrix, CityTable, CostMatrix) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(5..12);
    let cities: Vec<CityAttributes> = (0..n)
        .map(|i| {
            let population = rng.gen_range(10.0..5000.0);
            let gdp = rng.gen_range(10.0..50_000.0);
            CityAttributes {
                city_id: format!("c{i:02}"),
                name: format!("c{i:02}"),
                longitude: rng.gen_range(-180.0..180.0),
                latitude: rng.gen_range(-90.0..90.0),
                gdp,
                gdp_per_capita: gdp / population,
                population,
                province_id: format!("p{}", i % 3),
            }
        })
        .collect();
    let mut flux = FluxMatrix::new(false);
    let mut costs = CostMatrix::new(CostMetric::TravelMin);
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen_bool(0.8) {
                let (a, b) = (format!("c{i:02}"), format!("c{j:02}"));
                flux.add(&a, &b, rng.gen_range(1..5000));
                costs.insert(&a, &b, rng.gen_range(1.0..3000.0)).unwrap();
            }
        }
    }
    (flux, CityTable::from_cities(cities).unwrap(), costs)
}

proptest! {
    /// Min-max normalization confines every feature coordinate to [0, 1],
    /// and both extremes are attained on each axis.
    #[test]
    fn feature_coordinates_stay_in_unit_cube(seed in 0u64..500) {
        let (flux, attrs, costs) = random_feature_inputs(seed);
        let Ok(set) = build_features(&flux, &attrs, &costs) else {
            // Degenerate axis (all values equal) is a legitimate rejection.
            return Ok(());
        };
        for axis in 0..3 {
            let values: Vec<f64> = set.features.iter().map(|f| f.vector()[axis]).collect();
            prop_assert!(values.iter().all(|v| (0.0..=1.0).contains(v)));
            prop_assert!(values.iter().any(|&v| v == 0.0));
            prop_assert!(values.iter().any(|&v| v == 1.0));
        }
    }

    /// Pearson is invariant under positive affine maps of either argument
    /// and flips sign when one argument is negated.
    #[test]
    fn pearson_affine_invariance(seed in 0u64..200) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(3..30);
        let xs: Vec<f64> = (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let ys: Vec<f64> = (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let Ok(r) = indices::pearson(&xs, &ys) else {
            return Ok(()); // zero variance draw
        };
        prop_assert!((-1.0..=1.0).contains(&r));

        let a = rng.gen_range(0.1..5.0);
        let b = rng.gen_range(-3.0..3.0);
        let mapped: Vec<f64> = xs.iter().map(|x| a * x + b).collect();
        let r2 = indices::pearson(&mapped, &ys).unwrap();
        prop_assert!((r - r2).abs() <= 1e-9);

        let negated: Vec<f64> = xs.iter().map(|x| -x).collect();
        let r3 = indices::pearson(&negated, &ys).unwrap();
        prop_assert!((r + r3).abs() <= 1e-9);
    }
}
