//! Development and locality indices over pattern-labeled flux.
//!
//! * DI(i): share of city i's flux carried by Pattern I & II pairs.
//! * p(k,P): per-province flux ratio in each pattern, from the double sum
//!   over member cities (intra-province pairs count once per endpoint).
//! * c(i,r): cumulative flux share of the r travel-time-nearest neighbours.
//! * l(r,i): mean GDP of the r nearest neighbours relative to city i's GDP.

use std::collections::BTreeMap;

use crate::clustering::Pattern;
use crate::error::{Error, Result};
use crate::geo::{CityTable, CostMatrix};
use crate::ingest::{CityId, FluxMatrix};

/// Undirected flux with exactly one pattern label per pair, plus the
/// city-to-province map.
#[derive(Debug, Clone, Default)]
pub struct PatternedFlux {
    entries: BTreeMap<(CityId, CityId), (u64, Pattern)>,
    province_of: BTreeMap<CityId, String>,
}

impl PatternedFlux {
    pub fn new(
        entries: BTreeMap<(CityId, CityId), (u64, Pattern)>,
        province_of: BTreeMap<CityId, String>,
    ) -> Self {
        Self {
            entries,
            province_of,
        }
    }

    pub fn entries(&self) -> impl Iterator<Item = (&(CityId, CityId), &(u64, Pattern))> {
        self.entries.iter()
    }

    pub fn cities(&self) -> std::collections::BTreeSet<&CityId> {
        self.entries.keys().flat_map(|(a, b)| [a, b]).collect()
    }

    pub fn provinces(&self) -> std::collections::BTreeSet<&String> {
        self.province_of.values().collect()
    }

    fn pairs_of<'a>(
        &'a self,
        city: &'a str,
    ) -> impl Iterator<Item = (&'a (CityId, CityId), &'a (u64, Pattern))> + 'a {
        self.entries
            .iter()
            .filter(move |((a, b), _)| a == city || b == city)
    }
}

/// DI(i): flux share of Patterns I & II among all of city i's pairs.
pub fn development_index(pf: &PatternedFlux, city: &str) -> Result<f64> {
    let mut total = 0.0;
    let mut sustainable = 0.0;
    for (_, &(flux, pattern)) in pf.pairs_of(city) {
        total += flux as f64;
        if matches!(pattern, Pattern::I | Pattern::II) {
            sustainable += flux as f64;
        }
    }
    if total == 0.0 {
        return Err(Error::Data(format!("city {city}: no flux")));
    }
    Ok(sustainable / total)
}

/// Per-pattern flux shares of one city, summing to 1 over its pairs.
pub fn pattern_flux_shares(pf: &PatternedFlux, city: &str) -> Result<[f64; 4]> {
    let mut per_pattern = [0.0f64; 4];
    let mut total = 0.0;
    for (_, &(flux, pattern)) in pf.pairs_of(city) {
        per_pattern[pattern.index()] += flux as f64;
        total += flux as f64;
    }
    if total == 0.0 {
        return Err(Error::Data(format!("city {city}: no flux")));
    }
    for value in &mut per_pattern {
        *value /= total;
    }
    Ok(per_pattern)
}

/// p(k,P) for k = I..IV: the double sum over member cities, so pairs internal
/// to the province contribute once per endpoint.
pub fn province_pattern_ratio(pf: &PatternedFlux, province: &str) -> Result<[f64; 4]> {
    let members: Vec<&CityId> = pf
        .province_of
        .iter()
        .filter(|(_, p)| p.as_str() == province)
        .map(|(c, _)| c)
        .collect();
    if members.is_empty() {
        return Err(Error::Data(format!("province {province}: no cities")));
    }
    let mut per_pattern = [0.0f64; 4];
    let mut total = 0.0;
    for city in members {
        for (_, &(flux, pattern)) in pf.pairs_of(city) {
            per_pattern[pattern.index()] += flux as f64;
            total += flux as f64;
        }
    }
    if total == 0.0 {
        return Err(Error::Data(format!("province {province}: no flux")));
    }
    for value in &mut per_pattern {
        *value /= total;
    }
    Ok(per_pattern)
}

fn sorted_neighbours(
    city: &str,
    candidates: impl IntoIterator<Item = CityId>,
    travel_time: &CostMatrix,
) -> Vec<(CityId, f64)> {
    let mut neighbours: Vec<(CityId, f64)> = candidates
        .into_iter()
        .filter(|n| n != city)
        .filter_map(|n| travel_time.get(city, &n).map(|t| (n, t)))
        .collect();
    // Ascending travel time, ties by city id.
    neighbours.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    neighbours
}

/// c(i,r): cumulative flux share of the r nearest neighbours of `city`,
/// sorted ascending by travel time.
pub fn locality_curve(
    flux: &FluxMatrix,
    travel_time: &CostMatrix,
    city: &str,
) -> Result<Vec<(usize, f64)>> {
    let candidates: Vec<CityId> = flux
        .entries()
        .filter_map(|((a, b), _)| {
            if a == city {
                Some(b.clone())
            } else if b == city {
                Some(a.clone())
            } else {
                None
            }
        })
        .collect();
    let neighbours = sorted_neighbours(city, candidates, travel_time);
    if neighbours.is_empty() {
        return Err(Error::Data(format!(
            "city {city}: no neighbour with both flux and travel time"
        )));
    }
    let total: f64 = neighbours
        .iter()
        .map(|(n, _)| flux.get(city, n) as f64)
        .sum();
    let mut curve = Vec::with_capacity(neighbours.len());
    let mut cumulative = 0.0;
    for (r, (n, _)) in neighbours.iter().enumerate() {
        cumulative += flux.get(city, n) as f64;
        curve.push((r + 1, cumulative / total));
    }
    Ok(curve)
}

/// l(r,i): mean GDP of the r nearest neighbours over city i's GDP.
pub fn gdp_match_curve(
    attrs: &CityTable,
    travel_time: &CostMatrix,
    city: &str,
) -> Result<Vec<(usize, f64)>> {
    let target = attrs
        .get(city)
        .ok_or_else(|| Error::Data(format!("city {city} missing from attributes")))?;
    let candidates: Vec<CityId> = attrs.iter().map(|c| c.city_id.clone()).collect();
    let neighbours = sorted_neighbours(city, candidates, travel_time);
    if neighbours.is_empty() {
        return Err(Error::Data(format!(
            "city {city}: no neighbour with travel time"
        )));
    }
    let mut curve = Vec::with_capacity(neighbours.len());
    let mut gdp_sum = 0.0;
    for (r, (n, _)) in neighbours.iter().enumerate() {
        let gdp = attrs
            .get(n)
            .ok_or_else(|| Error::Data(format!("city {n} missing from attributes")))?
            .gdp;
        gdp_sum += gdp;
        curve.push((r + 1, gdp_sum / ((r + 1) as f64 * target.gdp)));
    }
    Ok(curve)
}

/// Sample Pearson correlation coefficient.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 3 {
        return Err(Error::Data(format!(
            "pearson needs equal-length inputs of at least 3, got {} and {}",
            xs.len(),
            ys.len()
        )));
    }
    let n = xs.len() as f64;
    let mean_x = xs.iter().sum::<f64>() / n;
    let mean_y = ys.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_x = 0.0;
    let mut var_y = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        let dx = x - mean_x;
        let dy = y - mean_y;
        cov += dx * dy;
        var_x += dx * dx;
        var_y += dy * dy;
    }
    if var_x == 0.0 || var_y == 0.0 {
        return Err(Error::Data("pearson undefined: zero variance".into()));
    }
    Ok(cov / (var_x * var_y).sqrt())
}
