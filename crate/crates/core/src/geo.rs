//! Inter-city cost matrices: great-circle distance computed from coordinates,
//! plus ingested travel-distance and travel-time tables.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::ingest::{CityId, FluxMatrix};

/// Mean Earth diameter in kilometers.
pub const EARTH_DIAMETER_KM: f64 = 12742.0;

/// Per-city economic and geographic attributes.
#[derive(Debug, Clone, PartialEq)]
pub struct CityAttributes {
    pub city_id: CityId,
    pub name: String,
    pub longitude: f64,
    pub latitude: f64,
    pub gdp: f64,
    pub gdp_per_capita: f64,
    pub population: f64,
    pub province_id: String,
}

impl CityAttributes {
    fn validate(&self) -> Result<()> {
        if !(-180.0..=180.0).contains(&self.longitude) {
            return Err(Error::Data(format!(
                "city {}: longitude {} out of range",
                self.city_id, self.longitude
            )));
        }
        if !(-90.0..=90.0).contains(&self.latitude) {
            return Err(Error::Data(format!(
                "city {}: latitude {} out of range",
                self.city_id, self.latitude
            )));
        }
        if self.gdp <= 0.0 || self.gdp_per_capita <= 0.0 || self.population <= 0.0 {
            return Err(Error::Data(format!(
                "city {}: gdp, gdp_per_capita and population must be positive",
                self.city_id
            )));
        }
        Ok(())
    }
}

/// City attribute table keyed by city id.
#[derive(Debug, Clone, Default)]
pub struct CityTable {
    cities: BTreeMap<CityId, CityAttributes>,
}

impl CityTable {
    /// Loads `city_id,name,longitude,latitude,gdp,gdp_per_capita,population,province_id`.
    pub fn from_reader<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let expected = [
            "city_id",
            "name",
            "longitude",
            "latitude",
            "gdp",
            "gdp_per_capita",
            "population",
            "province_id",
        ];
        let headers = rdr.headers()?.clone();
        if headers.len() != expected.len() || headers.iter().zip(expected).any(|(h, e)| h != e) {
            return Err(Error::Format(format!(
                "city attributes header must be `{}`",
                expected.join(",")
            )));
        }
        let mut cities = BTreeMap::new();
        for record in rdr.records() {
            let record = record?;
            let field = |i: usize| -> Result<f64> {
                record[i]
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Format(format!("bad numeric field `{}`", &record[i])))
            };
            let attrs = CityAttributes {
                city_id: record[0].to_string(),
                name: record[1].to_string(),
                longitude: field(2)?,
                latitude: field(3)?,
                gdp: field(4)?,
                gdp_per_capita: field(5)?,
                population: field(6)?,
                province_id: record[7].to_string(),
            };
            attrs.validate()?;
            cities.insert(attrs.city_id.clone(), attrs);
        }
        Ok(Self { cities })
    }

    pub fn from_cities<I: IntoIterator<Item = CityAttributes>>(cities: I) -> Result<Self> {
        let mut map = BTreeMap::new();
        for attrs in cities {
            attrs.validate()?;
            map.insert(attrs.city_id.clone(), attrs);
        }
        Ok(Self { cities: map })
    }

    pub fn get(&self, city_id: &str) -> Option<&CityAttributes> {
        self.cities.get(city_id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &CityAttributes> {
        self.cities.values()
    }

    pub fn len(&self) -> usize {
        self.cities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cities.is_empty()
    }
}

/// Which cost a matrix holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum CostMetric {
    GeoKm,
    TravelKm,
    TravelMin,
}

impl CostMetric {
    pub fn as_str(self) -> &'static str {
        match self {
            CostMetric::GeoKm => "geo_km",
            CostMetric::TravelKm => "travel_km",
            CostMetric::TravelMin => "travel_min",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "geo_km" => Some(CostMetric::GeoKm),
            "travel_km" => Some(CostMetric::TravelKm),
            "travel_min" => Some(CostMetric::TravelMin),
            _ => None,
        }
    }

    pub const ALL: [CostMetric; 3] = [CostMetric::GeoKm, CostMetric::TravelKm, CostMetric::TravelMin];
}

impl fmt::Display for CostMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Great-circle distance between two (longitude, latitude) points in degrees.
///
/// d = D * arcsin(sqrt(sin^2(dphi/2) + cos(phi_a) cos(phi_b) sin^2(dlambda/2)))
pub fn great_circle_km(a: (f64, f64), b: (f64, f64), diameter_km: f64) -> f64 {
    let (lon_a, lat_a) = (a.0.to_radians(), a.1.to_radians());
    let (lon_b, lat_b) = (b.0.to_radians(), b.1.to_radians());
    let half_dlat = (lat_a - lat_b) / 2.0;
    let half_dlon = (lon_a - lon_b) / 2.0;
    let under_root =
        half_dlat.sin().powi(2) + lat_a.cos() * lat_b.cos() * half_dlon.sin().powi(2);
    diameter_km * under_root.sqrt().min(1.0).asin()
}

/// Symmetric positive cost per unordered city pair.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    pub metric: CostMetric,
    entries: BTreeMap<(CityId, CityId), f64>,
}

fn canonical(a: &str, b: &str) -> (CityId, CityId) {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

impl CostMatrix {
    pub fn new(metric: CostMetric) -> Self {
        Self {
            metric,
            entries: BTreeMap::new(),
        }
    }

    /// Loads a `city_a,city_b,cost` table. Conflicting duplicates are fatal,
    /// consistent duplicates are deduplicated.
    pub fn from_reader<R: std::io::Read>(reader: R, metric: CostMetric) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr.headers()?.clone();
        let expected = ["city_a", "city_b", "cost"];
        if headers.len() != 3 || headers.iter().zip(expected).any(|(h, e)| h != e) {
            return Err(Error::Format(format!(
                "cost table header must be `{}`",
                expected.join(",")
            )));
        }
        let mut matrix = CostMatrix::new(metric);
        for record in rdr.records() {
            let record = record?;
            let cost: f64 = record[2]
                .trim()
                .parse()
                .map_err(|_| Error::Format(format!("bad cost `{}`", &record[2])))?;
            matrix.insert(&record[0], &record[1], cost)?;
        }
        Ok(matrix)
    }

    pub fn insert(&mut self, a: &str, b: &str, cost: f64) -> Result<()> {
        if !(cost > 0.0) || !cost.is_finite() {
            return Err(Error::Data(format!(
                "cost for pair ({a},{b}) must be positive and finite, got {cost}"
            )));
        }
        let key = canonical(a, b);
        match self.entries.get(&key) {
            Some(&existing) if existing != cost => Err(Error::Data(format!(
                "conflicting duplicate for pair ({},{}): {} vs {}",
                key.0, key.1, existing, cost
            ))),
            _ => {
                self.entries.insert(key, cost);
                Ok(())
            }
        }
    }

    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        self.entries.get(&canonical(a, b)).copied()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&(CityId, CityId), &f64)> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Builds a great-circle matrix covering the pair set of `flux` from city
    /// coordinates. Pairs with a city missing from `attrs` are skipped; the
    /// caller sees them through `coverage_report`.
    pub fn from_coordinates(
        flux: &FluxMatrix,
        attrs: &CityTable,
        diameter_km: f64,
    ) -> Result<Self> {
        let mut matrix = CostMatrix::new(CostMetric::GeoKm);
        for ((a, b), _) in flux.entries() {
            let (Some(ca), Some(cb)) = (attrs.get(a), attrs.get(b)) else {
                continue;
            };
            let d = great_circle_km(
                (ca.longitude, ca.latitude),
                (cb.longitude, cb.latitude),
                diameter_km,
            );
            if d > 0.0 && matrix.get(a, b).is_none() {
                matrix.insert(a, b, d)?;
            }
        }
        Ok(matrix)
    }
}

/// Flux pairs with no cost entry; the fit stage excludes these explicitly.
#[derive(Debug, Clone, Default)]
pub struct CoverageReport {
    pub missing: Vec<(CityId, CityId)>,
    pub covered: usize,
}

impl CoverageReport {
    pub fn missing_count(&self) -> usize {
        self.missing.len()
    }
}

pub fn coverage_report(flux: &FluxMatrix, costs: &CostMatrix) -> CoverageReport {
    let mut report = CoverageReport::default();
    for ((a, b), _) in flux.entries() {
        if costs.get(a, b).is_some() {
            report.covered += 1;
        } else {
            report.missing.push((a.clone(), b.clone()));
        }
    }
    report
}
