//! Log transforms, Pearson correlation, OLS with classical standard errors,
//! power-law decay fits and per-place correlation over joined pair values.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::io::Read;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::connectivity::PciRecord;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::movement::OdMovement;
use crate::presence::PlaceCode;
use crate::registry::{PlaceLevel, PlaceRegistry};

/// Elementwise `log10(v * scale)`.
pub fn log10_scaled(values: &[f64], scale: f64) -> Result<Vec<f64>> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::NonPositive { value: scale });
    }
    values
        .iter()
        .map(|&v| {
            let s = v * scale;
            if !s.is_finite() {
                Err(Error::NonFinite)
            } else if s <= 0.0 {
                Err(Error::NonPositive { value: v })
            } else {
                Ok(s.log10())
            }
        })
        .collect()
}

fn check_series(x: &[f64], y: &[f64], need: usize) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < need {
        return Err(Error::InsufficientData { need, got: x.len() });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    Ok(())
}

/// Pearson product-moment correlation, single pass (Welford co-moments).
pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<f64> {
    check_series(x, y, 3)?;
    let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (k, (&a, &b)) in x.iter().zip(y).enumerate() {
        let n = (k + 1) as f64;
        let dx = a - mx;
        let dy = b - my;
        mx += dx / n;
        my += dy / n;
        sxx += dx * (a - mx);
        syy += dy * (b - my);
        sxy += dx * (b - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
    pub se: f64,
    pub t: f64,
    pub p: f64,
}

impl Coefficient {
    pub fn stars(&self) -> &'static str {
        significance_stars(self.p)
    }
}

pub fn significance_stars(p: f64) -> &'static str {
    if p < 0.01 {
        "***"
    } else if p < 0.05 {
        "**"
    } else if p < 0.1 {
        "*"
    } else {
        ""
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionResult {
    /// Intercept first, then predictors in input order.
    pub coefficients: Vec<Coefficient>,
    pub r2: f64,
    pub adj_r2: f64,
    pub n: usize,
    pub df_resid: usize,
    pub rss: f64,
    pub residuals: Vec<f64>,
}

impl RegressionResult {
    pub fn coefficient(&self, name: &str) -> Option<&Coefficient> {
        self.coefficients.iter().find(|c| c.name == name)
    }
}

pub const INTERCEPT: &str = "(Intercept)";

/// Ordinary least squares of `y` on an intercept plus `predictors`, solved by
/// Householder QR. Standard errors are classical (homoskedastic); p-values
/// are two-sided from Student's t with `n - p - 1` degrees of freedom.
pub fn ols(y: &[f64], predictors: &[(&str, &[f64])]) -> Result<RegressionResult> {
    let n = y.len();
    let p = predictors.len();
    for (_, col) in predictors {
        check_series(y, col, 0)?;
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    if n < p + 2 {
        return Err(Error::InsufficientData { need: p + 2, got: n });
    }
    let cols = p + 1;
    let x = DMatrix::from_fn(n, cols, |i, j| if j == 0 { 1.0 } else { predictors[j - 1].1[i] });
    let yv = DVector::from_column_slice(y);

    let qr = x.clone().qr();
    let r = qr.r();
    let scale = (0..cols).map(|j| x.column(j).norm()).fold(0.0, f64::max);
    for j in 0..cols {
        // Relative to the column's own norm so that differently scaled
        // predictors are not misjudged.
        let col_norm = x.column(j).norm().max(f64::MIN_POSITIVE);
        if r[(j, j)].abs() <= 1e-10 * col_norm || r[(j, j)].abs() <= 1e-14 * scale {
            return Err(Error::RankDeficient);
        }
    }
    let qty = qr.q().transpose() * &yv;
    let beta = r.solve_upper_triangular(&qty).ok_or(Error::RankDeficient)?;
    let fitted = &x * &beta;
    let residuals: Vec<f64> = (0..n).map(|i| y[i] - fitted[i]).collect();
    let rss: f64 = residuals.iter().map(|e| e * e).sum();
    let mean = y.iter().sum::<f64>() / n as f64;
    let tss: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let r2 = if tss > 0.0 {
        (1.0 - rss / tss).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let df = n - p - 1;
    let adj_r2 = 1.0 - (1.0 - r2) * (n - 1) as f64 / df as f64;
    let sigma2 = rss / df as f64;

    // (XᵀX)⁻¹ = R⁻¹ R⁻ᵀ; diagonal entries are squared row norms of R⁻¹.
    let rinv = r
        .solve_upper_triangular(&DMatrix::identity(cols, cols))
        .ok_or(Error::RankDeficient)?;
    let tdist = StudentsT::new(0.0, 1.0, df as f64).map_err(|e| Error::Invalid(e.to_string()))?;
    let coefficients = (0..cols)
        .map(|j| {
            let se = (sigma2 * rinv.row(j).norm_squared()).sqrt();
            let est = beta[j];
            let (t, pval) = if se > 0.0 {
                let t = est / se;
                (t, (2.0 * tdist.sf(t.abs())).min(1.0))
            } else if est == 0.0 {
                (0.0, 1.0)
            } else {
                (est.signum() * f64::INFINITY, 0.0)
            };
            Coefficient {
                name: if j == 0 {
                    INTERCEPT.to_string()
                } else {
                    predictors[j - 1].0.to_string()
                },
                estimate: est,
                se,
                t,
                p: pval,
            }
        })
        .collect();
    Ok(RegressionResult {
        coefficients,
        r2,
        adj_r2,
        n,
        df_resid: df,
        rss,
        residuals,
    })
}

/// Renders one or more models side by side: coefficient with stars, the
/// standard error in parentheses beneath, then adjusted R² and observations.
pub fn render_table(models: &[(&str, &RegressionResult)]) -> String {
    let mut names: Vec<&str> = Vec::new();
    for (_, m) in models {
        for c in &m.coefficients {
            if !names.contains(&c.name.as_str()) {
                names.push(&c.name);
            }
        }
    }
    let label_w = names
        .iter()
        .map(|s| s.len())
        .chain(["Observations".len()])
        .max()
        .unwrap_or(0)
        + 2;
    let col_w = 18;
    let mut out = String::new();
    let _ = write!(out, "{:label_w$}", "");
    for (title, _) in models {
        let _ = write!(out, "{title:>col_w$}");
    }
    out.push('\n');
    for name in &names {
        let _ = write!(out, "{name:label_w$}");
        for (_, m) in models {
            let cell = m
                .coefficient(name)
                .map(|c| format!("{:.4}{}", c.estimate, c.stars()))
                .unwrap_or_default();
            let _ = write!(out, "{cell:>col_w$}");
        }
        out.push('\n');
        let _ = write!(out, "{:label_w$}", "");
        for (_, m) in models {
            let cell = m
                .coefficient(name)
                .map(|c| format!("({:.4})", c.se))
                .unwrap_or_default();
            let _ = write!(out, "{cell:>col_w$}");
        }
        out.push('\n');
    }
    let _ = write!(out, "{:label_w$}", "Adjusted R²");
    for (_, m) in models {
        let _ = write!(out, "{:>col_w$}", format!("{:.4}", m.adj_r2));
    }
    out.push('\n');
    let _ = write!(out, "{:label_w$}", "Observations");
    for (_, m) in models {
        let _ = write!(out, "{:>col_w$}", m.n);
    }
    out.push('\n');
    out.push_str("Note: * p<0.1; ** p<0.05; *** p<0.01\n");
    out
}

/// 1 where both places share an ancestor at `region_level`, else 0.
pub fn same_region_dummy<S: AsRef<str>>(
    pairs: &[(S, S)],
    registry: &PlaceRegistry,
    level: PlaceLevel,
    region_level: PlaceLevel,
) -> Result<Vec<u8>> {
    let mut cache: HashMap<String, String> = HashMap::new();
    let mut region = |code: &str| -> Result<String> {
        if let Some(r) = cache.get(code) {
            return Ok(r.clone());
        }
        let r = registry.ancestor_code(level, code, region_level)?;
        cache.insert(code.to_string(), r.clone());
        Ok(r)
    };
    let mut out = Vec::with_capacity(pairs.len());
    for (a, b) in pairs {
        let ra = region(a.as_ref())?;
        let rb = region(b.as_ref())?;
        out.push(u8::from(ra == rb));
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub a: f64,
    pub b: f64,
    pub r2: f64,
    pub n: usize,
    /// Standard error of `b`.
    pub b_se: f64,
}

/// Fits `pci = a · dist^b` by OLS of log10(pci) on log10(dist).
pub fn decay_fit(pci: &[f64], dist: &[f64]) -> Result<DecayFit> {
    check_series(pci, dist, 3)?;
    let ly = log10_scaled(pci, 1.0)?;
    let lx = log10_scaled(dist, 1.0)?;
    let fit = ols(&ly, &[("log10_distance", &lx)])?;
    Ok(DecayFit {
        a: 10f64.powf(fit.coefficients[0].estimate),
        b: fit.coefficients[1].estimate,
        r2: fit.r2,
        n: fit.n,
        b_se: fit.coefficients[1].se,
    })
}

/// A value keyed by an unordered place pair, stored with `place_i < place_j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairValue {
    pub place_i: PlaceCode,
    pub place_j: PlaceCode,
    pub value: f64,
}

impl PairValue {
    pub fn new(a: PlaceCode, b: PlaceCode, value: f64) -> Self {
        if a <= b {
            PairValue {
                place_i: a,
                place_j: b,
                value,
            }
        } else {
            PairValue {
                place_i: b,
                place_j: a,
                value,
            }
        }
    }

    pub fn from_pci(records: &[PciRecord]) -> Vec<PairValue> {
        records
            .iter()
            .filter(|r| r.place_i != r.place_j)
            .map(|r| PairValue::new(r.place_i.clone(), r.place_j.clone(), r.pci))
            .collect()
    }

    pub fn from_movements(rows: &[OdMovement]) -> Vec<PairValue> {
        rows.iter()
            .filter(|r| r.place_i != r.place_j)
            .map(|r| PairValue::new(r.place_i.clone(), r.place_j.clone(), r.person_days as f64))
            .collect()
    }
}

/// Reads `place_i,place_j,value` with optional `#` comment lines.
pub fn read_pair_values_csv<R: Read>(input: R) -> Result<Vec<PairValue>> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        if row.len() < 3 {
            return Err(Error::Invalid(format!(
                "expected place_i,place_j,value; got {} fields",
                row.len()
            )));
        }
        let value: f64 = row[2]
            .trim()
            .parse()
            .map_err(|_| Error::Invalid(format!("bad value {:?}", &row[2])))?;
        out.push(PairValue::new(
            Arc::from(row[0].trim()),
            Arc::from(row[1].trim()),
            value,
        ));
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Transform {
    Identity,
    Log10 { scale: f64 },
}

impl Transform {
    fn apply(self, v: f64) -> f64 {
        match self {
            Transform::Identity => v,
            Transform::Log10 { scale } => (v * scale).log10(),
        }
    }
}

/// Pairs present in both inputs with both values positive.
#[derive(Clone, Debug, PartialEq)]
pub struct JoinedPairs {
    pub keys: Vec<(PlaceCode, PlaceCode)>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    /// Matched pairs dropped because a value was zero or negative.
    pub excluded_nonpositive: usize,
    pub unmatched: usize,
}

/// Inner join on canonical pair keys; output sorted by key. Duplicate keys
/// keep the last value.
pub fn join_pairs(a: &[PairValue], b: &[PairValue]) -> JoinedPairs {
    let bmap: HashMap<(&str, &str), f64> = b.iter().map(|p| ((&*p.place_i, &*p.place_j), p.value)).collect();
    let amap: BTreeMap<(&PlaceCode, &PlaceCode), f64> = a.iter().map(|p| ((&p.place_i, &p.place_j), p.value)).collect();
    let mut out = JoinedPairs {
        keys: Vec::new(),
        a: Vec::new(),
        b: Vec::new(),
        excluded_nonpositive: 0,
        unmatched: 0,
    };
    let mut matched = 0;
    for ((i, j), va) in amap {
        let Some(&vb) = bmap.get(&(&**i, &**j)) else {
            out.unmatched += 1;
            continue;
        };
        matched += 1;
        if va > 0.0 && vb > 0.0 && va.is_finite() && vb.is_finite() {
            out.keys.push((i.clone(), j.clone()));
            out.a.push(va);
            out.b.push(vb);
        } else {
            out.excluded_nonpositive += 1;
        }
    }
    out.unmatched += bmap.len() - matched;
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum Omission {
    TooFewPartners { n: usize },
    ZeroVariance { n: usize },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PlaceCorrelations {
    /// Focal place → (r, n partners).
    pub r: BTreeMap<PlaceCode, (f64, usize)>,
    pub omitted: BTreeMap<PlaceCode, Omission>,
    pub excluded_nonpositive: usize,
}

/// Pearson r over all pairs of a joined dataset, after `transform`.
pub fn joined_correlation(joined: &JoinedPairs, transform: Transform) -> Result<f64> {
    let x: Vec<f64> = joined.a.iter().map(|&v| transform.apply(v)).collect();
    let y: Vec<f64> = joined.b.iter().map(|&v| transform.apply(v)).collect();
    pearson_r(&x, &y)
}

/// For each focal place, Pearson r between the two datasets over its
/// partners where both values are positive. Places with fewer than three
/// partners (or a constant series) are listed in `omitted`.
pub fn per_place_correlation(a: &[PairValue], b: &[PairValue], transform: Transform, exec: Exec) -> PlaceCorrelations {
    let joined = join_pairs(a, b);
    let mut by_place: BTreeMap<&PlaceCode, Vec<(f64, f64)>> = BTreeMap::new();
    for (k, (i, j)) in joined.keys.iter().enumerate() {
        let v = (transform.apply(joined.a[k]), transform.apply(joined.b[k]));
        by_place.entry(i).or_default().push(v);
        by_place.entry(j).or_default().push(v);
    }
    let groups: Vec<(&PlaceCode, Vec<(f64, f64)>)> = by_place.into_iter().collect();
    let results = exec.map(&groups, |(place, pts)| {
        let n = pts.len();
        if n < 3 {
            return ((*place).clone(), Err(Omission::TooFewPartners { n }));
        }
        let (x, y): (Vec<f64>, Vec<f64>) = pts.iter().copied().unzip();
        match pearson_r(&x, &y) {
            Ok(r) => ((*place).clone(), Ok((r, n))),
            Err(_) => ((*place).clone(), Err(Omission::ZeroVariance { n })),
        }
    });
    let mut out = PlaceCorrelations {
        excluded_nonpositive: joined.excluded_nonpositive,
        ..Default::default()
    };
    for (place, res) in results {
        match res {
            Ok(v) => {
                out.r.insert(place, v);
            }
            Err(o) => {
                out.omitted.insert(place, o);
            }
        }
    }
    out
}

/// Per-place outcome and covariates from `place,outcome[,covariate…]`.
#[derive(Clone, Debug, PartialEq)]
pub struct CovariateTable {
    pub outcome: String,
    pub covariates: Vec<String>,
    pub rows: BTreeMap<PlaceCode, Vec<f64>>,
}

pub fn read_covariate_csv<R: Read>(input: R) -> Result<CovariateTable> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
    let headers = rdr.headers()?.clone();
    if headers.len() < 2 {
        return Err(Error::Invalid(
            "covariate file needs at least place,outcome columns".into(),
        ));
    }
    let mut rows = BTreeMap::new();
    for row in rdr.records() {
        let row = row?;
        let vals = row
            .iter()
            .skip(1)
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Invalid(format!("bad number {v:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        if vals.len() != headers.len() - 1 {
            return Err(Error::LengthMismatch(vals.len(), headers.len() - 1));
        }
        rows.insert(Arc::from(row[0].trim()), vals);
    }
    Ok(CovariateTable {
        outcome: headers[1].trim().to_string(),
        covariates: headers.iter().skip(2).map(|s| s.trim().to_string()).collect(),
        rows,
    })
}

/// Regresses each place's outcome on its pair value with `focal` (after
/// `transform`) plus the table's covariates. Places without a positive pair
/// value with the focal place are dropped.
pub fn focal_regression(
    table: &CovariateTable,
    values: &[PairValue],
    focal: &str,
    value_name: &str,
    transform: Transform,
) -> Result<RegressionResult> {
    let mut partner: HashMap<&str, f64> = HashMap::new();
    for p in values {
        if p.value > 0.0 {
            if &*p.place_i == focal {
                partner.insert(&p.place_j, p.value);
            } else if &*p.place_j == focal {
                partner.insert(&p.place_i, p.value);
            }
        }
    }
    let mut y = Vec::new();
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); table.covariates.len() + 1];
    for (place, vals) in &table.rows {
        let Some(&v) = partner.get(&**place) else { continue };
        y.push(vals[0]);
        cols[0].push(transform.apply(v));
        for (c, &x) in vals[1..].iter().enumerate() {
            cols[c + 1].push(x);
        }
    }
    let names: Vec<&str> = std::iter::once(value_name)
        .chain(table.covariates.iter().map(String::as_str))
        .collect();
    let preds: Vec<(&str, &[f64])> = names.iter().copied().zip(cols.iter().map(Vec::as_slice)).collect();
    ols(&y, &preds)
}
