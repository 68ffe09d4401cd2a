//! Seeded synthetic data: random presence worlds, grid registries, a
//! gravity-model world with planted regions, block-structured PCI, and a
//! streaming event generator for load tests.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;

use chrono::{Duration, NaiveDate};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Poisson};

use crate::connectivity::PciRecord;
use crate::error::Result;
use crate::geom::{MultiPolygon, Polygon};
use crate::presence::{PlaceCode, PresenceTuple};
use crate::registry::{centroid_distance, LatLon, Place, PlaceLevel, PlaceRegistry};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn base_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2020, 1, 1).expect("valid date")
}

/// Presence tuples for a random world with up to `max_places` places,
/// `max_users` users and `max_days` days. Place popularity is skewed and
/// duplicate tuples are included on purpose.
pub fn random_world<R: Rng>(rng: &mut R, max_places: usize, max_users: usize, max_days: u32) -> Vec<PresenceTuple> {
    let n_places = rng.random_range(2..=max_places.max(2));
    let n_users = rng.random_range(1..=max_users.max(1));
    let n_days = rng.random_range(1..=max_days.max(1));
    let weights: Vec<f64> = (0..n_places).map(|_| rng.random_range(0.05..1.0f64).powi(2)).collect();
    let total: f64 = weights.iter().sum();
    let pick = |rng: &mut R| {
        let mut x = rng.random_range(0.0..total);
        for (i, w) in weights.iter().enumerate() {
            if x < *w {
                return i;
            }
            x -= w;
        }
        n_places - 1
    };
    let mut out = Vec::new();
    for u in 0..n_users {
        let records = rng.random_range(1..=12);
        for _ in 0..records {
            let place = pick(rng);
            let day = rng.random_range(0..n_days);
            out.push(PresenceTuple::new(
                format!("P{place:02}"),
                format!("user{u:04}"),
                base_date() + Duration::days(day as i64),
            ));
        }
    }
    out
}

fn square(lon0: f64, lat0: f64, w: f64, h: f64) -> MultiPolygon {
    MultiPolygon(vec![Polygon {
        exterior: vec![
            [lon0, lat0],
            [lon0 + w, lat0],
            [lon0 + w, lat0 + h],
            [lon0, lat0 + h],
            [lon0, lat0],
        ],
        holes: vec![],
    }])
}

/// Axis-aligned lat/lon grid of square cells.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    pub rows: usize,
    pub cols: usize,
    pub lon0: f64,
    pub lat0: f64,
    pub cell_deg: f64,
}

impl Grid {
    pub fn cell_code(&self, r: usize, c: usize) -> String {
        format!("c{r:03}{c:03}")
    }

    /// Uniform point inside cell (r, c), kept off the edges.
    pub fn point_in_cell<R: Rng>(&self, rng: &mut R, r: usize, c: usize) -> LatLon {
        let m = 0.01 * self.cell_deg;
        let lon = self.lon0 + c as f64 * self.cell_deg + rng.random_range(m..self.cell_deg - m);
        let lat = self.lat0 + r as f64 * self.cell_deg + rng.random_range(m..self.cell_deg - m);
        LatLon::new(lat, lon)
    }

    /// One place per cell at `level`, coded `c{row:03}{col:03}`, with parents
    /// from `parent`.
    pub fn places(&self, level: PlaceLevel, parent: impl Fn(usize, usize) -> Option<String>) -> Vec<Place> {
        let mut out = Vec::with_capacity(self.rows * self.cols);
        for r in 0..self.rows {
            for c in 0..self.cols {
                let lon = self.lon0 + c as f64 * self.cell_deg;
                let lat = self.lat0 + r as f64 * self.cell_deg;
                let code = self.cell_code(r, c);
                out.push(Place {
                    name: format!("Cell {code}"),
                    code,
                    level,
                    parent_code: parent(r, c),
                    centroid: LatLon::new(lat + self.cell_deg / 2.0, lon + self.cell_deg / 2.0),
                    geometry: Some(square(lon, lat, self.cell_deg, self.cell_deg)),
                });
            }
        }
        out
    }
}

fn event_line(out: &mut String, user: &str, date: NaiveDate, secs: u32, at: LatLon, res: &str, source: &str) {
    out.clear();
    let _ = write!(
        out,
        r#"{{"user":"{user}","ts":"{date}T{:02}:{:02}:{:02}Z","lat":{:.6},"lon":{:.6},"res":"{res}","source":"{source}"}}"#,
        secs / 3600,
        secs / 60 % 60,
        secs % 60,
        at.lat,
        at.lon,
    );
}

#[derive(Clone, Debug, PartialEq)]
pub struct GravityParams {
    /// Places form a `side × side` grid.
    pub side: usize,
    /// Regions are `region_side × region_side` blocks of places.
    pub region_side: usize,
    pub cell_deg: f64,
    /// Planted decay exponent (positive; connection ∝ d^-exponent).
    pub exponent: f64,
    /// Multiplier on expected shared users within a region.
    pub boost: f64,
    pub mean_residents: f64,
    /// Target share of users who are cross-place travellers.
    pub travel_share: f64,
    pub days: u32,
    pub seed: u64,
}

impl Default for GravityParams {
    fn default() -> Self {
        GravityParams {
            side: 12,
            region_side: 4,
            cell_deg: 0.5,
            exponent: 1.2,
            boost: 4.0,
            mean_residents: 10000.0,
            travel_share: 0.15,
            days: 30,
            seed: 7,
        }
    }
}

/// Places on a grid grouped into square regions. Each place has a resident
/// population seen only there; each pair (i, j) has a Poisson number of
/// travellers seen in both, with mean `G · pop_i · pop_j · boost / d^exponent`
/// (boost applies within a region, d is centroid distance in miles).
#[derive(Debug)]
pub struct GravityWorld {
    pub params: GravityParams,
    pub grid: Grid,
    pub registry: PlaceRegistry,
    pub level: PlaceLevel,
    pub region_level: PlaceLevel,
    /// Place codes in sorted order.
    pub places: Vec<String>,
    /// Planted region of each place.
    pub region: Vec<usize>,
    pub residents: Vec<u64>,
    /// Planted traveller counts by place-index pair.
    pub travellers: BTreeMap<(usize, usize), u64>,
}

impl GravityWorld {
    pub fn generate(params: GravityParams) -> Result<Self> {
        let mut rng = rng(params.seed);
        let side = params.side;
        let rs = params.region_side.max(1);
        let per_row = side.div_ceil(rs);
        let grid = Grid {
            rows: side,
            cols: side,
            lon0: -100.0,
            lat0: 30.0,
            cell_deg: params.cell_deg,
        };
        let region_code = |r: usize, c: usize| format!("r{:02}", (r / rs) * per_row + c / rs);
        let mut places = grid.places(PlaceLevel::County, |r, c| Some(region_code(r, c)));
        for rr in 0..per_row {
            for rc in 0..per_row {
                let lon = grid.lon0 + (rc * rs) as f64 * grid.cell_deg;
                let lat = grid.lat0 + (rr * rs) as f64 * grid.cell_deg;
                let w = (rs.min(side - rc * rs)) as f64 * grid.cell_deg;
                let h = (rs.min(side - rr * rs)) as f64 * grid.cell_deg;
                let code = region_code(rr * rs, rc * rs);
                places.push(Place {
                    name: format!("Region {code}"),
                    code,
                    level: PlaceLevel::Admin1,
                    parent_code: None,
                    centroid: LatLon::new(lat + h / 2.0, lon + w / 2.0),
                    geometry: Some(square(lon, lat, w, h)),
                });
            }
        }
        let registry = PlaceRegistry::from_places(places)?;
        let cells = registry.places(PlaceLevel::County);
        let n = cells.len();
        let region: Vec<usize> = (0..side)
            .flat_map(|r| (0..side).map(move |c| (r / rs) * per_row + c / rs))
            .collect();

        let spread = LogNormal::new(0.0, 0.3).expect("valid lognormal");
        let residents: Vec<u64> = (0..n)
            .map(|_| (params.mean_residents * spread.sample(&mut rng)).round().max(1.0) as u64)
            .collect();
        let mut raw = Vec::with_capacity(n * (n - 1) / 2);
        let mut raw_total = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                let d = centroid_distance(&cells[i], &cells[j]);
                let boost = if region[i] == region[j] { params.boost } else { 1.0 };
                let t = residents[i] as f64 * residents[j] as f64 * boost / d.powf(params.exponent);
                raw_total += t;
                raw.push((i, j, t));
            }
        }
        let resident_total: f64 = residents.iter().map(|&r| r as f64).sum();
        let g = params.travel_share * resident_total / (1.0 - params.travel_share) / raw_total;
        let mut travellers = BTreeMap::new();
        for (i, j, t) in raw {
            let k = Poisson::new(g * t).map(|p| p.sample(&mut rng) as u64).unwrap_or(0);
            if k > 0 {
                travellers.insert((i, j), k);
            }
        }
        Ok(GravityWorld {
            places: cells.iter().map(|p| p.code.clone()).collect(),
            params,
            grid,
            registry,
            level: PlaceLevel::County,
            region_level: PlaceLevel::Admin1,
            region,
            residents,
            travellers,
        })
    }

    fn cell(&self, i: usize) -> (usize, usize) {
        (i / self.grid.cols, i % self.grid.cols)
    }

    /// NDJSON events realizing the world: every resident posts one to three
    /// times at home, every traveller once or twice in each of its places.
    pub fn events(&self) -> Vec<String> {
        let mut rng = rng(self.params.seed ^ 0x5eed);
        let mut out = Vec::new();
        let mut line = String::new();
        let days = self.params.days.max(1);
        let mut emit = |rng: &mut ChaCha8Rng, out: &mut Vec<String>, user: &str, i: usize, times: u32| {
            let (r, c) = self.cell(i);
            for _ in 0..times {
                let date = base_date() + Duration::days(rng.random_range(0..days) as i64);
                let at = self.grid.point_in_cell(rng, r, c);
                event_line(
                    &mut line,
                    user,
                    date,
                    rng.random_range(0..86_400),
                    at,
                    "coord",
                    "Twitter for iPhone",
                );
                out.push(line.clone());
            }
        };
        for (i, &n) in self.residents.iter().enumerate() {
            for k in 0..n {
                let user = format!("res{i}_{k}");
                let times = rng.random_range(1..=3);
                emit(&mut rng, &mut out, &user, i, times);
            }
        }
        for (&(i, j), &n) in &self.travellers {
            for k in 0..n {
                let user = format!("trv{i}_{j}_{k}");
                let (a, b) = (rng.random_range(1..=2), rng.random_range(1..=2));
                emit(&mut rng, &mut out, &user, i, a);
                emit(&mut rng, &mut out, &user, j, b);
            }
        }
        out
    }
}

/// Planted block structure: places `B{block}_{k}` with PCI drawn from
/// `within` inside a block and from `across` between blocks. Returns the
/// sorted place codes, every pair's record, and the block of each place.
pub fn planted_blocks<R: Rng>(
    rng: &mut R,
    sizes: &[usize],
    within: (f64, f64),
    across: (f64, f64),
) -> (Vec<PlaceCode>, Vec<PciRecord>, Vec<usize>) {
    let mut labelled: Vec<(PlaceCode, usize)> = Vec::new();
    for (b, &s) in sizes.iter().enumerate() {
        for k in 0..s {
            labelled.push((Arc::from(format!("B{b}_{k:03}")), b));
        }
    }
    labelled.sort();
    let mut records = Vec::new();
    for i in 0..labelled.len() {
        for j in i + 1..labelled.len() {
            let (lo, hi) = if labelled[i].1 == labelled[j].1 { within } else { across };
            let pci = rng.random_range(lo..hi);
            records.push(PciRecord {
                place_i: labelled[i].0.clone(),
                place_j: labelled[j].0.clone(),
                users_i: 0,
                users_j: 0,
                shared: 0,
                pci,
                pci_i_to_j: pci,
                pci_j_to_i: pci,
            });
        }
    }
    let (places, blocks) = labelled.into_iter().unzip();
    (places, records, blocks)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LoadParams {
    pub events: u64,
    pub rows: usize,
    pub cols: usize,
    pub users: u32,
    pub days: u32,
    pub seed: u64,
}

impl Default for LoadParams {
    fn default() -> Self {
        LoadParams {
            events: 10_000_000,
            rows: 50,
            cols: 60,
            users: 400_000,
            days: 90,
            seed: 11,
        }
    }
}

impl LoadParams {
    pub fn grid(&self) -> Grid {
        Grid {
            rows: self.rows,
            cols: self.cols,
            lon0: -120.0,
            lat0: 25.0,
            cell_deg: 0.25,
        }
    }

    pub fn registry(&self) -> Result<PlaceRegistry> {
        PlaceRegistry::from_places(self.grid().places(PlaceLevel::County, |_, _| None))
    }
}

/// Deterministic event stream for load tests, produced in chunks. Users
/// post mostly near a home cell; a small share of events carry a non-human
/// source or a country-level geotag so the filters have work to do.
pub struct LoadStream {
    params: LoadParams,
    grid: Grid,
    rng: ChaCha8Rng,
    homes: Vec<(u32, u32)>,
    emitted: u64,
    line: String,
}

impl LoadStream {
    pub fn new(params: LoadParams) -> Self {
        let mut rng = rng(params.seed);
        let mut homes: Vec<(u32, u32)> = (0..params.users)
            .map(|_| {
                (
                    rng.random_range(0..params.rows as u32),
                    rng.random_range(0..params.cols as u32),
                )
            })
            .collect();
        homes.shuffle(&mut rng);
        LoadStream {
            grid: params.grid(),
            params,
            rng,
            homes,
            emitted: 0,
            line: String::new(),
        }
    }

    pub fn remaining(&self) -> u64 {
        self.params.events - self.emitted
    }

    /// Up to `n` further lines; empty once the stream is exhausted.
    pub fn next_chunk(&mut self, n: usize) -> Vec<String> {
        let take = (n as u64).min(self.remaining()) as usize;
        let mut out = Vec::with_capacity(take);
        let (rows, cols) = (self.params.rows as i64, self.params.cols as i64);
        for _ in 0..take {
            let u = self.rng.random_range(0..self.params.users);
            let (hr, hc) = self.homes[u as usize];
            let roll: f64 = self.rng.random();
            let (r, c) = if roll < 0.8 {
                (hr as i64, hc as i64)
            } else if roll < 0.95 {
                (
                    (hr as i64 + self.rng.random_range(-2..=2)).clamp(0, rows - 1),
                    (hc as i64 + self.rng.random_range(-2..=2)).clamp(0, cols - 1),
                )
            } else {
                (self.rng.random_range(0..rows), self.rng.random_range(0..cols))
            };
            let at = self.grid.point_in_cell(&mut self.rng, r as usize, c as usize);
            let date = base_date() + Duration::days(self.rng.random_range(0..self.params.days) as i64);
            let secs = self.rng.random_range(0..86_400);
            let tag: f64 = self.rng.random();
            let (res, source) = if tag < 0.01 {
                ("coord", "TweetMyJOBS")
            } else if tag < 0.02 {
                ("country", "Twitter for Android")
            } else {
                ("coord", "Twitter for iPhone")
            };
            event_line(&mut self.line, &format!("u{u}"), date, secs, at, res, source);
            out.push(self.line.clone());
        }
        self.emitted += take as u64;
        out
    }
}
