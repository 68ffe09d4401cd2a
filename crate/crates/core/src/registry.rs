//! Multi-level place hierarchy with point and code lookups.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use geojson::{GeoJson, Value};
use rstar::primitives::{GeomWithData, Rectangle};
use rstar::{RTree, RTreeObject};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{interiors_overlap, MultiPolygon, Polygon, Position};

/// Mean Earth radius in statute miles.
pub const EARTH_RADIUS_MILES: f64 = 3958.8;

/// Geographic level of a place. `rank` orders levels coarse to fine; county
/// and metro share a rank as alternative partitions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlaceLevel {
    Country,
    Admin1,
    County,
    Metro,
    Tract,
}

impl PlaceLevel {
    pub const ALL: [PlaceLevel; 5] = [
        PlaceLevel::Country,
        PlaceLevel::Admin1,
        PlaceLevel::County,
        PlaceLevel::Metro,
        PlaceLevel::Tract,
    ];

    pub fn rank(self) -> u8 {
        match self {
            PlaceLevel::Country => 0,
            PlaceLevel::Admin1 => 1,
            PlaceLevel::County | PlaceLevel::Metro => 2,
            PlaceLevel::Tract => 3,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PlaceLevel::Country => "country",
            PlaceLevel::Admin1 => "admin1",
            PlaceLevel::County => "county",
            PlaceLevel::Metro => "metro",
            PlaceLevel::Tract => "tract",
        }
    }

    /// Level assumed for a parent code that is not loaded in the registry.
    fn implied_parent(self) -> Option<PlaceLevel> {
        match self {
            PlaceLevel::Country => None,
            PlaceLevel::Admin1 => Some(PlaceLevel::Country),
            PlaceLevel::County | PlaceLevel::Metro => Some(PlaceLevel::Admin1),
            PlaceLevel::Tract => Some(PlaceLevel::County),
        }
    }

    /// Strictly coarser levels, nearest first.
    fn coarser(self) -> impl Iterator<Item = PlaceLevel> {
        let rank = self.rank();
        let mut v: Vec<_> = PlaceLevel::ALL.into_iter().filter(|l| l.rank() < rank).collect();
        v.sort_by_key(|l| std::cmp::Reverse(l.rank()));
        v.into_iter()
    }

    /// Strictly finer levels, nearest first.
    fn finer(self) -> impl Iterator<Item = PlaceLevel> {
        let rank = self.rank();
        let mut v: Vec<_> = PlaceLevel::ALL.into_iter().filter(|l| l.rank() > rank).collect();
        v.sort_by_key(|l| l.rank());
        v.into_iter()
    }
}

impl fmt::Display for PlaceLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PlaceLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PlaceLevel::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| Error::UnknownLevel(s.to_owned()))
    }
}

/// Granularity of an event's geotag.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpatialResolution {
    Coord,
    NeighborhoodPoi,
    City,
    Admin1,
    Country,
}

impl SpatialResolution {
    pub const ALL: [SpatialResolution; 5] = [
        SpatialResolution::Coord,
        SpatialResolution::NeighborhoodPoi,
        SpatialResolution::City,
        SpatialResolution::Admin1,
        SpatialResolution::Country,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SpatialResolution::Coord => "coord",
            SpatialResolution::NeighborhoodPoi => "neighborhood_poi",
            SpatialResolution::City => "city",
            SpatialResolution::Admin1 => "admin1",
            SpatialResolution::Country => "country",
        }
    }
}

impl FromStr for SpatialResolution {
    type Err = ();

    fn from_str(s: &str) -> std::result::Result<Self, ()> {
        SpatialResolution::ALL.into_iter().find(|r| r.as_str() == s).ok_or(())
    }
}

/// Whether events geotagged at `res` may be used for places at `level`.
///
/// Country takes everything; first-level subdivisions drop country-level
/// tags; county and metro need at least city precision; tracts need
/// coordinates or neighborhood/POI tags.
pub fn resolution_admits(res: SpatialResolution, level: PlaceLevel) -> bool {
    use SpatialResolution as R;
    match level {
        PlaceLevel::Country => true,
        PlaceLevel::Admin1 => !matches!(res, R::Country),
        PlaceLevel::County | PlaceLevel::Metro => matches!(res, R::Coord | R::NeighborhoodPoi | R::City),
        PlaceLevel::Tract => matches!(res, R::Coord | R::NeighborhoodPoi),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatLon {
    pub lat: f64,
    pub lon: f64,
}

impl LatLon {
    pub fn new(lat: f64, lon: f64) -> Self {
        LatLon { lat, lon }
    }

    pub fn in_range(self) -> bool {
        (-90.0..=90.0).contains(&self.lat) && (-180.0..=180.0).contains(&self.lon)
    }

    fn position(self) -> Position {
        [self.lon, self.lat]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Place {
    pub code: String,
    pub level: PlaceLevel,
    pub name: String,
    pub parent_code: Option<String>,
    pub centroid: LatLon,
    pub geometry: Option<MultiPolygon>,
}

/// Great-circle distance in miles.
pub fn haversine_miles(a: LatLon, b: LatLon) -> f64 {
    let (p1, p2) = (a.lat.to_radians(), b.lat.to_radians());
    let dp = p2 - p1;
    let dl = (b.lon - a.lon).to_radians();
    let h = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_MILES * h.sqrt().min(1.0).asin()
}

pub fn centroid_distance(a: &Place, b: &Place) -> f64 {
    haversine_miles(a.centroid, b.centroid)
}

type IndexEntry = GeomWithData<Rectangle<[f64; 2]>, usize>;

#[derive(Debug, Default)]
struct LevelIndex {
    /// Sorted by code.
    places: Vec<Place>,
    by_code: HashMap<String, usize>,
    tree: RTree<IndexEntry>,
}

impl LevelIndex {
    fn build(level: PlaceLevel, mut places: Vec<Place>) -> Result<Self> {
        places.sort_by(|a, b| a.code.cmp(&b.code));
        let mut by_code = HashMap::with_capacity(places.len());
        for (i, p) in places.iter().enumerate() {
            if by_code.insert(p.code.clone(), i).is_some() {
                return Err(Error::DuplicateCode {
                    code: p.code.clone(),
                    level,
                });
            }
        }
        let entries: Vec<IndexEntry> = places
            .iter()
            .enumerate()
            .filter_map(|(i, p)| {
                let bb = p.geometry.as_ref()?.bbox();
                Some(GeomWithData::new(Rectangle::from_corners(bb.min, bb.max), i))
            })
            .collect();
        let tree = RTree::bulk_load(entries);

        for entry in tree.iter() {
            let a = &places[entry.data];
            let geom_a = a.geometry.as_ref().expect("indexed places have geometry");
            for other in tree.locate_in_envelope_intersecting(&entry.envelope()) {
                if other.data <= entry.data {
                    continue;
                }
                let b = &places[other.data];
                let geom_b = b.geometry.as_ref().expect("indexed places have geometry");
                if interiors_overlap(geom_a, a.centroid.position(), geom_b, b.centroid.position()) {
                    return Err(Error::OverlappingPlaces {
                        a: a.code.clone(),
                        b: b.code.clone(),
                        level,
                    });
                }
            }
        }
        Ok(LevelIndex { places, by_code, tree })
    }
}

/// Immutable after construction; lookups are safe from many threads.
#[derive(Debug, Default)]
pub struct PlaceRegistry {
    levels: BTreeMap<PlaceLevel, LevelIndex>,
}

/// Loads a GeoJSON FeatureCollection. Features without a `level` property
/// are placed at `level`.
pub fn load_registry(path: impl AsRef<Path>, level: PlaceLevel) -> Result<PlaceRegistry> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    PlaceRegistry::from_geojson_str(&text, level)
}

impl PlaceRegistry {
    pub fn from_places(places: impl IntoIterator<Item = Place>) -> Result<Self> {
        let mut grouped: BTreeMap<PlaceLevel, Vec<Place>> = BTreeMap::new();
        for p in places {
            if let Some(g) = &p.geometry {
                if !g.contains_closed(p.centroid.position()) {
                    return Err(Error::CentroidOutside { code: p.code });
                }
            }
            grouped.entry(p.level).or_default().push(p);
        }
        let mut levels = BTreeMap::new();
        for (level, places) in grouped {
            levels.insert(level, LevelIndex::build(level, places)?);
        }
        Ok(PlaceRegistry { levels })
    }

    pub fn from_geojson_str(text: &str, default_level: PlaceLevel) -> Result<Self> {
        Self::from_places(parse_features(text, default_level)?)
    }

    /// Combines registries; a level present in both is rebuilt from the union
    /// of its places, so duplicate codes are still rejected.
    pub fn merge(self, other: PlaceRegistry) -> Result<Self> {
        let places = self
            .levels
            .into_values()
            .chain(other.levels.into_values())
            .flat_map(|l| l.places);
        Self::from_places(places)
    }

    pub fn len(&self, level: PlaceLevel) -> usize {
        self.levels.get(&level).map_or(0, |l| l.places.len())
    }

    pub fn is_empty(&self) -> bool {
        self.levels.values().all(|l| l.places.is_empty())
    }

    pub fn levels(&self) -> impl Iterator<Item = PlaceLevel> + '_ {
        self.levels.keys().copied()
    }

    /// Places at `level`, sorted by code.
    pub fn places(&self, level: PlaceLevel) -> &[Place] {
        self.levels.get(&level).map_or(&[], |l| &l.places)
    }

    pub fn place(&self, level: PlaceLevel, code: &str) -> Option<&Place> {
        self.index_of(level, code).map(|i| &self.places(level)[i])
    }

    /// Position of `code` in `places(level)`.
    pub fn index_of(&self, level: PlaceLevel, code: &str) -> Option<usize> {
        self.levels.get(&level)?.by_code.get(code).copied()
    }

    /// Index (into `places(level)`) of the place whose closed geometry
    /// contains the point. Shared-boundary hits resolve to the smallest code.
    pub fn assign_index(&self, lat: f64, lon: f64, level: PlaceLevel) -> Result<Option<usize>> {
        let pt = LatLon::new(lat, lon);
        if !pt.in_range() || !lat.is_finite() || !lon.is_finite() {
            return Err(Error::CoordinateRange { lat, lon });
        }
        let Some(idx) = self.levels.get(&level) else {
            return Ok(None);
        };
        let pos = pt.position();
        // Places are sorted by code, so the smallest index is the smallest code.
        let hit = idx
            .tree
            .locate_all_at_point(&pos)
            .map(|e| e.data)
            .filter(|&i| idx.places[i].geometry.as_ref().is_some_and(|g| g.contains_closed(pos)))
            .min();
        Ok(hit)
    }

    pub fn assign_point(&self, lat: f64, lon: f64, level: PlaceLevel) -> Result<Option<&Place>> {
        Ok(self.assign_index(lat, lon, level)?.map(|i| &self.places(level)[i]))
    }

    fn parent_of(&self, place: &Place) -> Option<&Place> {
        let code = place.parent_code.as_deref()?;
        place.level.coarser().find_map(|l| self.place(l, code))
    }

    /// Code of the ancestor of (`level`, `code`) at `target`. Parent codes
    /// missing from the registry are taken to sit one rank up.
    pub fn ancestor_code(&self, level: PlaceLevel, code: &str, target: PlaceLevel) -> Result<String> {
        let missing = || Error::MissingParent {
            code: code.to_owned(),
            level: target,
        };
        if level == target {
            return Ok(code.to_owned());
        }
        let mut current = self
            .place(level, code)
            .ok_or_else(|| Error::UnknownPlace(code.to_owned()))?;
        loop {
            if current.level == target {
                return Ok(current.code.clone());
            }
            if current.level.rank() <= target.rank() {
                return Err(missing());
            }
            match self.parent_of(current) {
                Some(parent) => current = parent,
                None => {
                    let parent_code = current.parent_code.as_ref().ok_or_else(missing)?;
                    return if current.level.implied_parent() == Some(target) {
                        Ok(parent_code.clone())
                    } else {
                        Err(missing())
                    };
                }
            }
        }
    }

    /// Finds `code` at `level`, or at a finer level and rolls it up through
    /// loaded parents. Returns the index into `places(level)`.
    pub fn resolve_code(&self, code: &str, level: PlaceLevel) -> Option<usize> {
        if let Some(i) = self.index_of(level, code) {
            return Some(i);
        }
        level.finer().find_map(|finer| {
            self.place(finer, code)?;
            let up = self.ancestor_code(finer, code, level).ok()?;
            self.index_of(level, &up)
        })
    }
}

fn parse_features(text: &str, default_level: PlaceLevel) -> Result<Vec<Place>> {
    let gj: GeoJson = text
        .parse()
        .map_err(|e: geojson::Error| Error::GeoJson(e.to_string()))?;
    let GeoJson::FeatureCollection(fc) = gj else {
        return Err(Error::GeoJson("expected a FeatureCollection".into()));
    };
    fc.features
        .into_iter()
        .enumerate()
        .map(|(index, f)| {
            let str_prop = |name: &'static str| -> Result<Option<String>> {
                match f.property(name) {
                    None | Some(serde_json::Value::Null) => Ok(None),
                    Some(serde_json::Value::String(s)) => Ok(Some(s.clone())),
                    Some(_) => Err(Error::MissingProperty { index, property: name }),
                }
            };
            let num_prop = |name: &'static str| -> Result<f64> {
                f.property(name)
                    .and_then(serde_json::Value::as_f64)
                    .filter(|v| v.is_finite())
                    .ok_or(Error::MissingProperty { index, property: name })
            };
            let code = str_prop("code")?.ok_or(Error::MissingProperty {
                index,
                property: "code",
            })?;
            let name = str_prop("name")?.ok_or(Error::MissingProperty {
                index,
                property: "name",
            })?;
            let level = match str_prop("level")? {
                Some(l) => l.parse().map_err(|_| Error::MissingProperty {
                    index,
                    property: "level",
                })?,
                None => default_level,
            };
            let centroid = LatLon::new(num_prop("centroid_lat")?, num_prop("centroid_lon")?);
            if !centroid.in_range() {
                return Err(Error::CoordinateRange {
                    lat: centroid.lat,
                    lon: centroid.lon,
                });
            }
            let geometry = f
                .geometry
                .as_ref()
                .map(|g| convert_geometry(&g.value).map_err(|reason| Error::MalformedGeometry { index, reason }))
                .transpose()?;
            Ok(Place {
                code,
                level,
                name,
                parent_code: str_prop("parent_code")?,
                centroid,
                geometry,
            })
        })
        .collect()
}

fn convert_ring(ring: &[Vec<f64>]) -> std::result::Result<Vec<Position>, String> {
    if ring.len() < 4 {
        return Err(format!("ring has {} positions, need at least 4", ring.len()));
    }
    let pts = ring
        .iter()
        .map(|p| match p.as_slice() {
            [lon, lat, ..] if lon.is_finite() && lat.is_finite() => Ok([*lon, *lat]),
            _ => Err("position must have finite lon and lat".to_owned()),
        })
        .collect::<std::result::Result<Vec<_>, _>>()?;
    if pts.first() != pts.last() {
        return Err("ring is not closed".into());
    }
    Ok(pts)
}

fn convert_polygon(rings: &[Vec<Vec<f64>>]) -> std::result::Result<Polygon, String> {
    let (exterior, holes) = rings.split_first().ok_or("polygon has no rings")?;
    Ok(Polygon {
        exterior: convert_ring(exterior)?,
        holes: holes
            .iter()
            .map(|h| convert_ring(h))
            .collect::<std::result::Result<_, _>>()?,
    })
}

fn convert_geometry(value: &Value) -> std::result::Result<MultiPolygon, String> {
    match value {
        Value::Polygon(rings) => Ok(MultiPolygon(vec![convert_polygon(rings)?])),
        Value::MultiPolygon(polys) => Ok(MultiPolygon(
            polys
                .iter()
                .map(|p| convert_polygon(p))
                .collect::<std::result::Result<_, _>>()?,
        )),
        other => Err(format!("unsupported geometry type {}", other.type_name())),
    }
}

pub(crate) fn geometry_to_geojson(g: &MultiPolygon) -> geojson::Geometry {
    let ring = |r: &Vec<Position>| r.iter().map(|p| vec![p[0], p[1]]).collect::<Vec<_>>();
    let poly = |p: &Polygon| {
        std::iter::once(&p.exterior)
            .chain(&p.holes)
            .map(ring)
            .collect::<Vec<_>>()
    };
    let value = match g.0.as_slice() {
        [single] => Value::Polygon(poly(single)),
        many => Value::MultiPolygon(many.iter().map(poly).collect()),
    };
    geojson::Geometry::new(value)
}
