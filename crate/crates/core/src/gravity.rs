//! Gravity-law flux models.
//!
//! Four families of F_ij = a * mass_i^alpha * mass_j^beta / C_ij^gamma:
//!
//! * `GM`       — population product, alpha = beta = 1, undirected flux
//! * `G-GM`     — GDP product, alpha = beta = 1, undirected flux
//! * `aveG-GM`  — per-capita-GDP product, alpha = beta = 1, undirected flux
//! * `dirG-GM`  — directed flux, separate origin/destination GDP exponents
//!
//! Fitting is ordinary least squares after a natural-log transform. For the
//! three constrained families the unit-exponent mass term is moved into the
//! response as an offset so only (log a, gamma) are free.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::geo::{CityTable, CostMatrix, CostMetric};
use crate::ingest::{CityId, FluxMatrix};

/// Model family of the extended gravity framework.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ModelFamily {
    Gm,
    GGm,
    AveGGm,
    DirGGm,
}

impl ModelFamily {
    pub const ALL: [ModelFamily; 4] = [
        ModelFamily::Gm,
        ModelFamily::GGm,
        ModelFamily::AveGGm,
        ModelFamily::DirGGm,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelFamily::Gm => "GM",
            ModelFamily::GGm => "G-GM",
            ModelFamily::AveGGm => "aveG-GM",
            ModelFamily::DirGGm => "dirG-GM",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "GM" => Some(ModelFamily::Gm),
            "G-GM" => Some(ModelFamily::GGm),
            "aveG-GM" => Some(ModelFamily::AveGGm),
            "dirG-GM" => Some(ModelFamily::DirGGm),
            _ => None,
        }
    }

    /// Which per-city quantity acts as the mass.
    pub fn mass_source(self) -> &'static str {
        match self {
            ModelFamily::Gm => "population",
            ModelFamily::GGm | ModelFamily::DirGGm => "gdp",
            ModelFamily::AveGGm => "gdp_per_capita",
        }
    }

    /// dirG-GM fits directed flux; the constrained families fit undirected.
    pub fn requires_directed(self) -> bool {
        matches!(self, ModelFamily::DirGGm)
    }

    fn mass(self, attrs: &CityTable, city: &str) -> Result<f64> {
        let c = attrs
            .get(city)
            .ok_or_else(|| Error::Data(format!("city {city} missing from attributes")))?;
        let m = match self {
            ModelFamily::Gm => c.population,
            ModelFamily::GGm | ModelFamily::DirGGm => c.gdp,
            ModelFamily::AveGGm => c.gdp_per_capita,
        };
        if m <= 0.0 {
            return Err(Error::Data(format!(
                "city {city}: nonpositive {}",
                self.mass_source()
            )));
        }
        Ok(m)
    }
}

impl fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A (family, cost metric) cell of the comparison grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelSpec {
    pub family: ModelFamily,
    pub cost_metric: CostMetric,
}

/// One observation of the log-space regression.
#[derive(Debug, Clone)]
pub struct RegressionRow {
    pub pair: (CityId, CityId),
    /// log F, minus the unit-exponent mass offset for constrained families.
    pub response: f64,
    /// Family-dependent regressors, excluding the intercept. The cost
    /// regressor is negated so the fitted gamma comes out positive for
    /// flux that decays with cost.
    pub regressors: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct RegressionTable {
    pub spec: ModelSpec,
    pub rows: Vec<RegressionRow>,
    /// Flux pairs dropped for lack of a cost entry.
    pub excluded_missing_cost: usize,
    pub param_names: Vec<&'static str>,
}

impl RegressionTable {
    pub fn n_params(&self) -> usize {
        self.param_names.len()
    }
}

fn param_names(family: ModelFamily) -> Vec<&'static str> {
    if family.requires_directed() {
        vec!["log_a", "alpha", "beta", "gamma"]
    } else {
        vec!["log_a", "gamma"]
    }
}

/// Builds the log-space regression table for observed pairs with f64 flux.
///
/// The real-valued entry point exists so noiseless synthetic flux can be fit
/// without integer quantization; `design_rows` wraps it for count matrices.
pub fn design_rows_real<'a, I>(
    spec: ModelSpec,
    pairs: I,
    directed: bool,
    attrs: &CityTable,
    costs: &CostMatrix,
) -> Result<RegressionTable>
where
    I: IntoIterator<Item = (&'a (CityId, CityId), f64)>,
{
    if spec.family.requires_directed() != directed {
        return Err(Error::Contract(if spec.family.requires_directed() {
            "directed flux required for dirG-GM".into()
        } else {
            format!("undirected flux required for {}", spec.family)
        }));
    }
    let mut rows = Vec::new();
    let mut excluded = 0usize;
    for ((a, b), flux) in pairs {
        if !(flux > 0.0) {
            return Err(Error::Data(format!(
                "nonpositive flux {flux} for pair ({a},{b})"
            )));
        }
        let Some(cost) = costs.get(a, b) else {
            excluded += 1;
            continue;
        };
        if cost <= 0.0 {
            return Err(Error::Data(format!("nonpositive cost for pair ({a},{b})")));
        }
        let mass_a = spec.family.mass(attrs, a)?;
        let mass_b = spec.family.mass(attrs, b)?;
        let log_flux = flux.ln();
        let row = if spec.family.requires_directed() {
            RegressionRow {
                pair: (a.clone(), b.clone()),
                response: log_flux,
                regressors: vec![mass_a.ln(), mass_b.ln(), -cost.ln()],
            }
        } else {
            RegressionRow {
                pair: (a.clone(), b.clone()),
                response: log_flux - (mass_a * mass_b).ln(),
                regressors: vec![-cost.ln()],
            }
        };
        rows.push(row);
    }
    Ok(RegressionTable {
        spec,
        rows,
        excluded_missing_cost: excluded,
        param_names: param_names(spec.family),
    })
}

/// `design_rows_real` over a count-valued flux matrix.
pub fn design_rows(
    spec: ModelSpec,
    flux: &FluxMatrix,
    attrs: &CityTable,
    costs: &CostMatrix,
) -> Result<RegressionTable> {
    design_rows_real(
        spec,
        flux.entries().map(|(pair, &count)| (pair, count as f64)),
        flux.directed,
        attrs,
        costs,
    )
}

/// A fitted gravity model with classical OLS diagnostics.
#[derive(Debug, Clone)]
pub struct GravityFit {
    pub spec: ModelSpec,
    /// log a, natural log.
    pub intercept_log: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub n_obs: usize,
    pub r_squared: f64,
    pub f_statistic: f64,
    /// Standard errors per free coefficient, ordered as `param_names`.
    pub coef_stderr: Vec<f64>,
    /// Two-sided p-values (normal approximation), same order.
    pub coef_p: Vec<f64>,
    pub param_names: Vec<&'static str>,
}

/// Ordinary least squares on the log-transformed model.
pub fn fit(table: &RegressionTable) -> Result<GravityFit> {
    let n = table.rows.len();
    let p = table.n_params();
    if n <= p {
        return Err(Error::Data(format!(
            "{n} observations for {p} parameters"
        )));
    }

    let mut x = DMatrix::zeros(n, p);
    let mut y = DVector::zeros(n);
    for (i, row) in table.rows.iter().enumerate() {
        x[(i, 0)] = 1.0;
        for (j, &value) in row.regressors.iter().enumerate() {
            x[(i, j + 1)] = value;
        }
        y[i] = row.response;
    }

    let svd = x.clone().svd(true, true);
    let max_sv = svd.singular_values.max();
    let sv_tol = max_sv * (n.max(p) as f64) * f64::EPSILON;
    let rank = svd.singular_values.iter().filter(|&&s| s > sv_tol).count();
    if rank < p {
        return Err(Error::Data("collinear regressors".into()));
    }
    let coefs = svd
        .solve(&y, sv_tol)
        .map_err(|e| Error::Data(format!("least-squares solve failed: {e}")))?;

    let residuals = &y - &x * &coefs;
    let rss: f64 = residuals.iter().map(|r| r * r).sum();
    let mean_y = y.iter().sum::<f64>() / n as f64;
    let tss: f64 = y.iter().map(|v| (v - mean_y).powi(2)).sum();
    let r_squared = if tss > 0.0 {
        (1.0 - rss / tss).clamp(0.0, 1.0)
    } else {
        1.0
    };
    let dof = (n - p) as f64;
    let s2 = rss / dof;
    let f_statistic = if p > 1 && rss > 0.0 {
        ((tss - rss) / (p - 1) as f64) / s2
    } else {
        f64::INFINITY
    };

    // cov(beta) = s^2 (X'X)^-1 = s^2 V S^-2 V'
    let v_t = svd.v_t.as_ref().expect("svd computed with v_t");
    let mut stderr = Vec::with_capacity(p);
    for j in 0..p {
        let var: f64 = (0..p)
            .map(|r| {
                let s = svd.singular_values[r];
                (v_t[(r, j)] / s).powi(2)
            })
            .sum();
        stderr.push((s2 * var).sqrt());
    }
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let coef_p: Vec<f64> = coefs
        .iter()
        .zip(&stderr)
        .map(|(&c, &se)| {
            if se == 0.0 {
                0.0
            } else {
                2.0 * (1.0 - normal.cdf((c / se).abs()))
            }
        })
        .collect();

    let (alpha, beta, gamma) = if table.spec.family.requires_directed() {
        (coefs[1], coefs[2], coefs[3])
    } else {
        (1.0, 1.0, coefs[1])
    };
    Ok(GravityFit {
        spec: table.spec,
        intercept_log: coefs[0],
        alpha,
        beta,
        gamma,
        n_obs: n,
        r_squared,
        f_statistic,
        coef_stderr: stderr,
        coef_p,
        param_names: table.param_names.clone(),
    })
}

/// Predicted flux per pair, plus per-pair errors for missing inputs.
#[derive(Debug, Clone)]
pub struct Prediction {
    pub spec: ModelSpec,
    pub entries: BTreeMap<(CityId, CityId), f64>,
    pub errors: Vec<((CityId, CityId), String)>,
}

/// F_hat = a * mass_i^alpha * mass_j^beta / C^gamma per requested pair.
pub fn predict<'a, I>(
    fit: &GravityFit,
    pairs: I,
    attrs: &CityTable,
    costs: &CostMatrix,
) -> Prediction
where
    I: IntoIterator<Item = &'a (CityId, CityId)>,
{
    let mut entries = BTreeMap::new();
    let mut errors = Vec::new();
    for pair in pairs {
        let (a, b) = pair;
        let cost = match costs.get(a, b) {
            Some(c) => c,
            None => {
                errors.push((pair.clone(), "missing cost".to_string()));
                continue;
            }
        };
        let masses = fit
            .spec
            .family
            .mass(attrs, a)
            .and_then(|ma| fit.spec.family.mass(attrs, b).map(|mb| (ma, mb)));
        let (mass_a, mass_b) = match masses {
            Ok(m) => m,
            Err(e) => {
                errors.push((pair.clone(), e.to_string()));
                continue;
            }
        };
        let value = fit.intercept_log.exp() * mass_a.powf(fit.alpha) * mass_b.powf(fit.beta)
            / cost.powf(fit.gamma);
        entries.insert(pair.clone(), value);
    }
    Prediction {
        spec: fit.spec,
        entries,
        errors,
    }
}

/// Sorensen-based similarity between actual and predicted flux:
/// 2 * sum(min(F, F_hat)) / (sum F + sum F_hat), over the shared pair set.
pub fn ssi(actual: &FluxMatrix, predicted: &Prediction) -> Result<f64> {
    let mut min_sum = 0.0;
    let mut actual_sum = 0.0;
    let mut predicted_sum = 0.0;
    for ((a, b), &count) in actual.entries() {
        let f = count as f64;
        let f_hat = predicted
            .entries
            .get(&actual.key(a, b))
            .copied()
            .ok_or_else(|| {
                Error::Contract(format!("prediction missing pair ({a},{b})"))
            })?;
        min_sum += f.min(f_hat);
        actual_sum += f;
        predicted_sum += f_hat;
    }
    let denom = actual_sum + predicted_sum;
    if denom == 0.0 {
        return Err(Error::Data("SSI undefined: both flux sums are zero".into()));
    }
    Ok(2.0 * min_sum / denom)
}

/// One cell of the family-by-metric comparison.
#[derive(Debug)]
pub struct ModelCell {
    pub spec: ModelSpec,
    pub outcome: Result<(GravityFit, Prediction, f64)>,
}

/// Fits every family under every supplied metric, evaluating each cell with
/// SSI over its fitted pair universe. Per-cell failures do not abort the grid.
pub fn compare_models(
    directed: &FluxMatrix,
    undirected: &FluxMatrix,
    attrs: &CityTable,
    costs: &BTreeMap<CostMetric, CostMatrix>,
) -> Vec<ModelCell> {
    let mut cells = Vec::new();
    for family in ModelFamily::ALL {
        for (&metric, cost) in costs {
            let spec = ModelSpec {
                family,
                cost_metric: metric,
            };
            let flux = if family.requires_directed() {
                directed
            } else {
                undirected
            };
            let outcome = evaluate_cell(spec, flux, attrs, cost);
            cells.push(ModelCell { spec, outcome });
        }
    }
    cells
}

fn evaluate_cell(
    spec: ModelSpec,
    flux: &FluxMatrix,
    attrs: &CityTable,
    costs: &CostMatrix,
) -> Result<(GravityFit, Prediction, f64)> {
    let table = design_rows(spec, flux, attrs, costs)?;
    let fitted = fit(&table)?;
    let pairs: Vec<(CityId, CityId)> = table.rows.iter().map(|r| r.pair.clone()).collect();
    let prediction = predict(&fitted, pairs.iter(), attrs, costs);
    // SSI over the fitted universe only: restrict actual to covered pairs.
    let covered = FluxMatrix::from_entries(
        flux.directed,
        pairs
            .iter()
            .map(|(a, b)| (a.clone(), b.clone(), flux.get(a, b))),
    )?;
    let score = ssi(&covered, &prediction)?;
    Ok((fitted, prediction, score))
}
