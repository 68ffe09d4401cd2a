//! Person-day origin-destination movements from presence tuples, and
//! symmetrization of third-party directed flows.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};
use std::sync::Arc;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::DateWindow;
use crate::pairs::{count_pairs, PairCountOptions};
use crate::presence::{PlaceCode, PresenceTable, VisitLog};
use crate::registry::{PlaceLevel, PlaceRegistry};

/// Symmetric movement count between two places; `place_i < place_j`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct OdMovement {
    pub place_i: PlaceCode,
    pub place_j: PlaceCode,
    pub person_days: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DirectedFlow {
    pub origin: String,
    pub destination: String,
    pub count: u64,
    pub date: NaiveDate,
}

fn to_movements(places: &[PlaceCode], pairs: Vec<(u32, u32, u64)>) -> Vec<OdMovement> {
    pairs
        .into_iter()
        .map(|(i, j, c)| OdMovement {
            place_i: places[i as usize].clone(),
            place_j: places[j as usize].clone(),
            person_days: c,
        })
        .collect()
}

/// Every unordered pair of distinct places a user visited on one day counts
/// one person-day movement.
pub fn person_day_movements(table: &PresenceTable) -> Vec<OdMovement> {
    person_day_movements_with(table, &PairCountOptions::default()).expect("in-memory counting does not fail")
}

pub fn person_day_movements_with(table: &PresenceTable, opts: &PairCountOptions) -> Result<Vec<OdMovement>> {
    // (user, day, place) order groups each user-day's places together.
    let mut keys: Vec<(u32, i32, u32)> = table.rows().iter().map(|r| (r.user, r.day, r.place)).collect();
    opts.exec.sort_unstable(&mut keys);
    let mut groups: Vec<(usize, usize)> = Vec::new();
    let mut start = 0;
    for i in 1..=keys.len() {
        if i == keys.len() || (keys[i].0, keys[i].1) != (keys[start].0, keys[start].1) {
            if i - start > 1 {
                groups.push((start, i));
            }
            start = i;
        }
    }
    let places: Vec<u32> = keys.iter().map(|k| k.2).collect();
    drop(keys);
    let pairs = count_pairs(table.places().len(), &groups, opts, |&(a, b), acc| {
        acc.add_all_pairs(&places[a..b])
    })?;
    Ok(to_movements(table.places(), pairs))
}

/// Alternative reading: within each user-day, consecutive visits to
/// distinct places (timestamp order, ties by place code) count one movement
/// each. Repeated visits to the same place in a row collapse.
pub fn person_day_transitions(visits: &VisitLog, opts: &PairCountOptions) -> Result<Vec<OdMovement>> {
    let rows = visits.rows();
    let day = |ts: i64| ts.div_euclid(86_400);
    let mut groups: Vec<(usize, usize)> = Vec::new();
    let mut start = 0;
    for i in 1..=rows.len() {
        if i == rows.len() || rows[i].user != rows[start].user || day(rows[i].ts) != day(rows[start].ts) {
            if i - start > 1 {
                groups.push((start, i));
            }
            start = i;
        }
    }
    let pairs = count_pairs(visits.places().len(), &groups, opts, |&(a, b), acc| {
        let mut prev = rows[a].place;
        for r in &rows[a + 1..b] {
            if r.place != prev {
                acc.add(prev, r.place, 1);
                prev = r.place;
            }
        }
    })?;
    Ok(to_movements(visits.places(), pairs))
}

/// Rolls `code` up to `level`: the code itself when it is a place at
/// `level`, otherwise its ancestor via the first finer level that holds it.
fn rollup(registry: &PlaceRegistry, code: &str, level: PlaceLevel) -> Result<String> {
    if registry.place(level, code).is_some() {
        return Ok(code.to_owned());
    }
    PlaceLevel::ALL
        .into_iter()
        .filter(|l| l.rank() > level.rank())
        .find(|&l| registry.place(l, code).is_some())
        .map(|l| registry.ancestor_code(l, code, level))
        .unwrap_or_else(|| {
            Err(Error::MissingParent {
                code: code.to_owned(),
                level,
            })
        })
}

fn cached_rollup<'a>(
    cache: &mut HashMap<&'a str, PlaceCode>,
    registry: &PlaceRegistry,
    code: &'a str,
    level: PlaceLevel,
) -> Result<PlaceCode> {
    if let Some(c) = cache.get(code) {
        return Ok(c.clone());
    }
    let up: PlaceCode = Arc::from(rollup(registry, code, level)?);
    cache.insert(code, up.clone());
    Ok(up)
}

/// Aggregates directed flows to `level`, summed over dates in `window`; the
/// movement between A and B is (A→B) + (B→A). Self pairs are dropped.
pub fn symmetrize_flows(
    flows: &[DirectedFlow],
    registry: &PlaceRegistry,
    level: PlaceLevel,
    window: Option<DateWindow>,
) -> Result<Vec<OdMovement>> {
    let mut cache: HashMap<&str, PlaceCode> = HashMap::new();
    let mut totals: BTreeMap<(PlaceCode, PlaceCode), u64> = BTreeMap::new();
    for f in flows {
        if window.is_some_and(|w| !w.contains(f.date)) {
            continue;
        }
        let o = cached_rollup(&mut cache, registry, &f.origin, level)?;
        let d = cached_rollup(&mut cache, registry, &f.destination, level)?;
        if o == d || f.count == 0 {
            continue;
        }
        let key = if o < d { (o, d) } else { (d, o) };
        *totals.entry(key).or_insert(0) += f.count;
    }
    Ok(totals
        .into_iter()
        .map(|((place_i, place_j), person_days)| OdMovement {
            place_i,
            place_j,
            person_days,
        })
        .collect())
}

/// Reads `origin,destination,count,date` CSV.
pub fn read_flows_csv<R: Read>(input: R) -> Result<Vec<DirectedFlow>> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
    let mut out = Vec::new();
    for rec in rdr.deserialize() {
        let f: DirectedFlow = rec?;
        out.push(f);
    }
    Ok(out)
}

pub fn write_od_csv<W: Write>(rows: &[OdMovement], mut out: W, comment: Option<&str>) -> Result<()> {
    if let Some(c) = comment {
        writeln!(out, "# {c}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["place_i", "place_j", "person_days"])?;
    for r in rows {
        w.write_record([&*r.place_i, &*r.place_j, r.person_days.to_string().as_str()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_od_csv<R: Read>(input: R) -> Result<Vec<OdMovement>> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
    let mut out = Vec::new();
    for rec in rdr.deserialize() {
        out.push(rec?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presence::PresenceTuple;
    use crate::registry::{LatLon, Place};
    use chrono::{TimeZone, Utc};

    fn d(day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(2019, 5, day).unwrap()
    }

    fn pairs(m: &[OdMovement]) -> Vec<(&str, &str, u64)> {
        m.iter().map(|r| (&*r.place_i, &*r.place_j, r.person_days)).collect()
    }

    #[test]
    fn pair_rule() {
        let t = PresenceTable::from_tuples([PresenceTuple::new("A", "u", d(1)), PresenceTuple::new("B", "u", d(1))]);
        assert_eq!(pairs(&person_day_movements(&t)), vec![("A", "B", 1)]);

        let t = PresenceTable::from_tuples(["A", "B", "C"].map(|p| PresenceTuple::new(p, "u", d(1))));
        assert_eq!(
            pairs(&person_day_movements(&t)),
            vec![("A", "B", 1), ("A", "C", 1), ("B", "C", 1)]
        );

        let t = PresenceTable::from_tuples((1..=10).flat_map(|day| {
            [
                PresenceTuple::new("A", "u", d(day)),
                PresenceTuple::new("B", "u", d(day)),
            ]
        }));
        assert_eq!(pairs(&person_day_movements(&t)), vec![("A", "B", 10)]);
    }

    #[test]
    fn transitions_rule() {
        let at = |h: u32| Utc.with_ymd_and_hms(2019, 5, 1, h, 0, 0).unwrap();
        let log = VisitLog::from_visits([
            ("u", at(1), "A"),
            ("u", at(2), "A"),
            ("u", at(3), "B"),
            ("u", at(4), "A"),
            ("u", at(5), "C"),
            ("v", at(1), "A"),
        ]);
        let m = person_day_transitions(&log, &PairCountOptions::default()).unwrap();
        assert_eq!(pairs(&m), vec![("A", "B", 2), ("A", "C", 1)]);
    }

    fn registry() -> PlaceRegistry {
        let place = |code: &str, level, parent: &str| Place {
            code: code.into(),
            level,
            name: code.into(),
            parent_code: Some(parent.into()),
            centroid: LatLon::new(0.0, 0.0),
            geometry: None,
        };
        PlaceRegistry::from_places([
            place("01001", PlaceLevel::County, "01"),
            place("01003", PlaceLevel::County, "01"),
            place("010010001001", PlaceLevel::Tract, "01001"),
            place("010010001002", PlaceLevel::Tract, "01001"),
            place("010010002001", PlaceLevel::Tract, "01001"),
            place("010030001001", PlaceLevel::Tract, "01003"),
            place("010030001002", PlaceLevel::Tract, "01003"),
        ])
        .unwrap()
    }

    fn flow(o: &str, dst: &str, count: u64) -> DirectedFlow {
        DirectedFlow {
            origin: o.into(),
            destination: dst.into(),
            count,
            date: d(1),
        }
    }

    #[test]
    fn symmetrization() {
        let reg = registry();
        let m = symmetrize_flows(
            &[flow("01001", "01003", 3), flow("01003", "01001", 4)],
            &reg,
            PlaceLevel::County,
            None,
        )
        .unwrap();
        assert_eq!(pairs(&m), vec![("01001", "01003", 7)]);

        let m = symmetrize_flows(&[flow("01001", "01001", 5)], &reg, PlaceLevel::County, None).unwrap();
        assert!(m.is_empty());

        // five block groups, three under 01001 and two under 01003
        let flows = [
            flow("010010001001", "010030001001", 2),
            flow("010010001002", "010030001002", 5),
            flow("010030001001", "010010002001", 1),
            flow("010010001001", "010010001002", 9),
            flow("010030001002", "010030001001", 4),
        ];
        let m = symmetrize_flows(&flows, &reg, PlaceLevel::County, None).unwrap();
        assert_eq!(pairs(&m), vec![("01001", "01003", 8)]);

        let err = symmetrize_flows(&[flow("99999", "01001", 1)], &reg, PlaceLevel::County, None).unwrap_err();
        assert!(matches!(err, Error::MissingParent { .. }));
    }

    #[test]
    fn csv_io() {
        let text = "origin,destination,count,date\nA,B,3,2019-05-01\n";
        let flows = read_flows_csv(text.as_bytes()).unwrap();
        assert_eq!(flows[0].count, 3);
        let m = vec![OdMovement {
            place_i: Arc::from("A"),
            place_j: Arc::from("B"),
            person_days: 7,
        }];
        let mut buf = Vec::new();
        write_od_csv(&m, &mut buf, Some("c")).unwrap();
        assert_eq!(read_od_csv(buf.as_slice()).unwrap(), m);
    }
}
