//! Forward generators for parameter-recovery and ranking tests.
//!
//! A scenario draws random city masses and pair costs, then produces the
//! exact power-law flux (optionally with multiplicative lognormal noise).
//! The real-valued pair list avoids integer quantization so noiseless fits
//! can be checked to machine precision; `flux_matrix` rounds to counts for
//! paths that require a real flux matrix.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::Result;
use crate::geo::{CityAttributes, CityTable, CostMatrix, CostMetric};
use crate::gravity::{design_rows_real, ModelFamily, ModelSpec, RegressionTable};
use crate::ingest::{CityId, FluxMatrix};

#[derive(Debug, Clone, Copy)]
pub struct GravityScenario {
    pub family: ModelFamily,
    pub metric: CostMetric,
    pub n_cities: usize,
    pub n_pairs: usize,
    pub log_a: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    /// Sigma of the multiplicative lognormal noise; 0 for noiseless.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl GravityScenario {
    pub fn new(family: ModelFamily, seed: u64) -> Self {
        Self {
            family,
            metric: CostMetric::TravelMin,
            n_cities: 40,
            n_pairs: 200,
            log_a: 0.0,
            alpha: 1.0,
            beta: 1.0,
            gamma: 0.5,
            noise_sigma: 0.0,
            seed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GravityData {
    pub scenario: GravityScenario,
    pub attrs: CityTable,
    pub costs: CostMatrix,
    pub directed: bool,
    /// Exact real-valued flux per pair.
    pub pairs: Vec<((CityId, CityId), f64)>,
}

impl GravityData {
    /// Regression table over the exact real-valued flux.
    pub fn table(&self) -> Result<RegressionTable> {
        design_rows_real(
            ModelSpec {
                family: self.scenario.family,
                cost_metric: self.scenario.metric,
            },
            self.pairs.iter().map(|(p, f)| (p, *f)),
            self.directed,
            &self.attrs,
            &self.costs,
        )
    }

    /// Count-valued matrix: flux rounded to the nearest integer, minimum 1.
    pub fn flux_matrix(&self) -> Result<FluxMatrix> {
        FluxMatrix::from_entries(
            self.directed,
            self.pairs
                .iter()
                .map(|((a, b), f)| (a.clone(), b.clone(), (f.round() as u64).max(1))),
        )
    }
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (rng.gen::<f64>() * (hi.ln() - lo.ln()) + lo.ln()).exp()
}

/// Draws cities, costs and exact power-law flux for the scenario.
pub fn generate(scenario: GravityScenario) -> Result<GravityData> {
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let directed = scenario.family.requires_directed();

    let cities: Vec<CityAttributes> = (0..scenario.n_cities)
        .map(|i| {
            let population = log_uniform(&mut rng, 10.0, 10_000.0);
            let gdp = log_uniform(&mut rng, 10.0, 10_000.0);
            CityAttributes {
                city_id: format!("c{i:03}"),
                name: format!("city-{i:03}"),
                longitude: rng.gen::<f64>() * 360.0 - 180.0,
                latitude: rng.gen::<f64>() * 180.0 - 90.0,
                gdp,
                gdp_per_capita: gdp / population,
                population,
                province_id: format!("p{:02}", i % 8),
            }
        })
        .collect();
    let attrs = CityTable::from_cities(cities.clone())?;

    let mut costs = CostMatrix::new(scenario.metric);
    let mut pairs = Vec::with_capacity(scenario.n_pairs);
    let mut seen = std::collections::BTreeSet::new();
    while pairs.len() < scenario.n_pairs {
        let i = rng.gen_range(0..scenario.n_cities);
        let j = rng.gen_range(0..scenario.n_cities);
        if i == j {
            continue;
        }
        let (a, b) = if directed || cities[i].city_id <= cities[j].city_id {
            (cities[i].city_id.clone(), cities[j].city_id.clone())
        } else {
            (cities[j].city_id.clone(), cities[i].city_id.clone())
        };
        if !seen.insert((a.clone(), b.clone())) {
            continue;
        }
        let cost = match costs.get(&a, &b) {
            Some(c) => c,
            None => {
                let c = log_uniform(&mut rng, 10.0, 3_000.0);
                costs.insert(&a, &b, c)?;
                c
            }
        };
        let mass = |city: &str| -> f64 {
            let attrs = attrs.get(city).expect("generated city");
            match scenario.family {
                ModelFamily::Gm => attrs.population,
                ModelFamily::GGm | ModelFamily::DirGGm => attrs.gdp,
                ModelFamily::AveGGm => attrs.gdp_per_capita,
            }
        };
        let noise: f64 = if scenario.noise_sigma > 0.0 {
            let z: f64 = StandardNormal.sample(&mut rng);
            (scenario.noise_sigma * z).exp()
        } else {
            1.0
        };
        let flux = scenario.log_a.exp()
            * mass(&a).powf(scenario.alpha)
            * mass(&b).powf(scenario.beta)
            / cost.powf(scenario.gamma)
            * noise;
        pairs.push(((a, b), flux));
    }

    Ok(GravityData {
        scenario,
        attrs,
        costs,
        directed,
        pairs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gravity;
    use approx::assert_relative_eq;

    #[test]
    fn noiseless_ggm_recovers_parameters() {
        let scenario = GravityScenario {
            gamma: 0.5,
            ..GravityScenario::new(ModelFamily::GGm, 42)
        };
        let data = generate(scenario).unwrap();
        let fit = gravity::fit(&data.table().unwrap()).unwrap();
        assert_relative_eq!(fit.gamma, 0.5, max_relative = 1e-9);
        assert!(fit.intercept_log.abs() < 1e-9);
        assert_relative_eq!(fit.r_squared, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn round_trip_prediction_matches_generated_flux() {
        let data = generate(GravityScenario::new(ModelFamily::DirGGm, 7)).unwrap();
        let fit = gravity::fit(&data.table().unwrap()).unwrap();
        let pair_keys: Vec<_> = data.pairs.iter().map(|(p, _)| p.clone()).collect();
        let prediction = gravity::predict(&fit, pair_keys.iter(), &data.attrs, &data.costs);
        for (pair, flux) in &data.pairs {
            assert_relative_eq!(prediction.entries[pair], *flux, max_relative = 1e-9);
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate(GravityScenario::new(ModelFamily::GGm, 3)).unwrap();
        let b = generate(GravityScenario::new(ModelFamily::GGm, 3)).unwrap();
        assert_eq!(a.pairs, b.pairs);
    }
}
