//! Output helpers: the versioned header line, intermediate count tables and
//! GeoJSON feature collections carrying per-place results.

use std::collections::BTreeMap;
use std::io::Write;

use geojson::{Feature, FeatureCollection, GeoJson, JsonObject, JsonValue};

use crate::aggregate::{PlaceUserCount, PresenceDays, SharedUserCount};
use crate::analytics::PlaceCorrelations;
use crate::clustering::CommunityAssignment;
use crate::connectivity::format_sig;
use crate::error::{Error, Result};
use crate::registry::{geometry_to_geojson, PlaceLevel, PlaceRegistry};

/// Text of the `#` line that opens every CSV output.
pub fn header_comment(version: &str, config_hash: &str) -> String {
    format!("placeconn {version} config={config_hash}")
}

fn comment_line<W: Write>(out: &mut W, comment: Option<&str>) -> Result<()> {
    if let Some(c) = comment {
        writeln!(out, "# {c}")?;
    }
    Ok(())
}

pub fn write_days_csv<W: Write>(rows: &[PresenceDays], mut out: W, comment: Option<&str>) -> Result<()> {
    comment_line(&mut out, comment)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["place", "user", "days"])?;
    for r in rows {
        w.write_record([&*r.place_code, r.user.as_str(), &r.days.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_users_csv<W: Write>(rows: &[PlaceUserCount], mut out: W, comment: Option<&str>) -> Result<()> {
    comment_line(&mut out, comment)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["place", "users"])?;
    for r in rows {
        w.write_record([&*r.place_code, &r.users.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_shared_csv<W: Write>(rows: &[SharedUserCount], mut out: W, comment: Option<&str>) -> Result<()> {
    comment_line(&mut out, comment)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["place_i", "place_j", "shared_users"])?;
    for r in rows {
        w.write_record([&*r.place_i, &*r.place_j, &r.shared.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// `place,r,n` for places with a correlation. Omitted places are not listed.
pub fn write_place_correlations_csv<W: Write>(c: &PlaceCorrelations, mut out: W, comment: Option<&str>) -> Result<()> {
    comment_line(&mut out, comment)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["place", "r", "n"])?;
    for (place, (r, n)) in &c.r {
        w.write_record([&**place, &format_sig(*r, 6), &n.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads `place,value` rows (extra columns ignored, `#` lines skipped).
pub fn read_place_values_csv<R: std::io::Read>(input: R) -> Result<BTreeMap<String, f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .flexible(true)
        .from_reader(input);
    let mut out = BTreeMap::new();
    for row in rdr.records() {
        let row = row?;
        if row.len() < 2 {
            return Err(Error::Invalid("expected place,value rows".into()));
        }
        let v: f64 = row[1]
            .trim()
            .parse()
            .map_err(|_| Error::Invalid(format!("bad value {:?}", &row[1])))?;
        out.insert(row[0].trim().to_string(), v);
    }
    Ok(out)
}

fn collection(
    registry: &PlaceRegistry,
    level: PlaceLevel,
    property: &str,
    values: BTreeMap<&str, JsonValue>,
) -> Result<String> {
    let mut features = Vec::with_capacity(values.len());
    for (code, value) in values {
        let place = registry
            .place(level, code)
            .ok_or_else(|| Error::UnknownPlace(code.to_string()))?;
        let geometry = place
            .geometry
            .as_ref()
            .ok_or_else(|| Error::MissingGeometry(code.to_string()))?;
        let mut props = JsonObject::new();
        props.insert("code".into(), code.into());
        props.insert("name".into(), place.name.as_str().into());
        props.insert("level".into(), level.as_str().into());
        props.insert("centroid_lat".into(), place.centroid.lat.into());
        props.insert("centroid_lon".into(), place.centroid.lon.into());
        props.insert(property.into(), value);
        features.push(Feature {
            bbox: None,
            geometry: Some(geometry_to_geojson(geometry)),
            id: None,
            properties: Some(props),
            foreign_members: None,
        });
    }
    let fc = FeatureCollection {
        bbox: None,
        features,
        foreign_members: None,
    };
    Ok(GeoJson::from(fc).to_string())
}

/// One feature per assigned place with a `community` property, sorted by code.
pub fn communities_geojson(
    assignment: &CommunityAssignment,
    registry: &PlaceRegistry,
    level: PlaceLevel,
) -> Result<String> {
    let values = assignment
        .places
        .iter()
        .zip(&assignment.community)
        .map(|(p, &c)| (&**p, JsonValue::from(c)))
        .collect();
    collection(registry, level, "community", values)
}

/// One feature per keyed place with a `value` property, sorted by code.
pub fn values_geojson(values: &BTreeMap<String, f64>, registry: &PlaceRegistry, level: PlaceLevel) -> Result<String> {
    let values = values.iter().map(|(p, &v)| (p.as_str(), JsonValue::from(v))).collect();
    collection(registry, level, "value", values)
}

/// Reads `property` from every feature of an exported collection, keyed by
/// the feature's `code`.
pub fn read_feature_property(text: &str, property: &str) -> Result<BTreeMap<String, JsonValue>> {
    let gj: GeoJson = text
        .parse()
        .map_err(|e: geojson::Error| Error::GeoJson(e.to_string()))?;
    let GeoJson::FeatureCollection(fc) = gj else {
        return Err(Error::GeoJson("expected a FeatureCollection".into()));
    };
    let mut out = BTreeMap::new();
    for (i, f) in fc.features.iter().enumerate() {
        let code = f
            .property("code")
            .and_then(JsonValue::as_str)
            .ok_or(Error::MissingProperty {
                index: i,
                property: "code",
            })?;
        let value = f
            .property(property)
            .cloned()
            .ok_or_else(|| Error::GeoJson(format!("feature {i} lacks {property:?}")))?;
        out.insert(code.to_string(), value);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{MultiPolygon, Polygon};
    use crate::registry::{LatLon, Place};
    use std::sync::Arc;

    fn square(code: &str, x0: f64, with_geom: bool) -> Place {
        let ring = vec![[x0, 0.0], [x0 + 1.0, 0.0], [x0 + 1.0, 1.0], [x0, 1.0], [x0, 0.0]];
        Place {
            code: code.into(),
            level: PlaceLevel::County,
            name: format!("{code} county"),
            parent_code: None,
            centroid: LatLon::new(0.5, x0 + 0.5),
            geometry: with_geom.then(|| {
                MultiPolygon(vec![Polygon {
                    exterior: ring,
                    holes: vec![],
                }])
            }),
        }
    }

    #[test]
    fn community_round_trip() {
        let reg = PlaceRegistry::from_places([square("B", 2.0, true), square("A", 0.0, true)]).unwrap();
        let assign = CommunityAssignment {
            places: vec![Arc::from("A"), Arc::from("B")],
            community: vec![0, 1],
            k: 2,
        };
        let text = communities_geojson(&assign, &reg, PlaceLevel::County).unwrap();
        let back = read_feature_property(&text, "community").unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back["A"], JsonValue::from(0));
        assert_eq!(back["B"], JsonValue::from(1));
        assert!(text.find("\"A\"").unwrap() < text.find("\"B\"").unwrap());
        let again = PlaceRegistry::from_geojson_str(&text, PlaceLevel::County);
        assert!(again.is_ok());
    }

    #[test]
    fn missing_geometry_named() {
        let reg = PlaceRegistry::from_places([square("A", 0.0, true), square("Z", 5.0, false)]).unwrap();
        let values: BTreeMap<String, f64> = [("A".to_string(), 1.5), ("Z".to_string(), 2.0)].into();
        match values_geojson(&values, &reg, PlaceLevel::County) {
            Err(Error::MissingGeometry(code)) => assert_eq!(code, "Z"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
