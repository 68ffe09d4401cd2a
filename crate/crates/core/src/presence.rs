//! Deduplicated (place, user, date) presence table and the timestamped visit
//! log used for within-day transitions.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::sync::Arc;

use chrono::{DateTime, Datelike, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;

pub type PlaceCode = Arc<str>;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PresenceTuple {
    pub place_code: String,
    pub user: String,
    pub date: NaiveDate,
}

impl PresenceTuple {
    pub fn new(place_code: impl Into<String>, user: impl Into<String>, date: NaiveDate) -> Self {
        PresenceTuple {
            place_code: place_code.into(),
            user: user.into(),
            date,
        }
    }
}

/// Interned row; `place` and `user` index the table's sorted dictionaries,
/// `day` counts days from the common era.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PresenceRow {
    pub place: u32,
    pub user: u32,
    pub day: i32,
}

pub(crate) fn day_number(date: NaiveDate) -> i32 {
    date.num_days_from_ce()
}

pub(crate) fn day_date(day: i32) -> NaiveDate {
    NaiveDate::from_num_days_from_ce_opt(day).expect("day numbers come from valid dates")
}

/// Set of presence tuples. Rows are unique and sorted by (place, user, day);
/// the place and user dictionaries are sorted, so index order is code order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PresenceTable {
    places: Vec<PlaceCode>,
    users: Vec<Box<str>>,
    rows: Vec<PresenceRow>,
}

impl PresenceTable {
    pub fn from_tuples(tuples: impl IntoIterator<Item = PresenceTuple>) -> Self {
        let mut builder = TableBuilder::default();
        for t in tuples {
            let place = builder.place(&t.place_code);
            let user = builder.user(&t.user);
            builder.rows.push(PresenceRow {
                place,
                user,
                day: day_number(t.date),
            });
        }
        builder.finish(Exec::Sequential)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn places(&self) -> &[PlaceCode] {
        &self.places
    }

    pub fn users(&self) -> &[Box<str>] {
        &self.users
    }

    pub fn rows(&self) -> &[PresenceRow] {
        &self.rows
    }

    pub fn tuples(&self) -> impl Iterator<Item = PresenceTuple> + '_ {
        self.rows.iter().map(|r| PresenceTuple {
            place_code: self.places[r.place as usize].to_string(),
            user: self.users[r.user as usize].to_string(),
            date: day_date(r.day),
        })
    }

    /// Set union of two tables.
    pub fn union(&self, other: &PresenceTable) -> PresenceTable {
        let mut builder = TableBuilder::default();
        for t in [self, other] {
            let places: Vec<u32> = t.places.iter().map(|p| builder.place(p)).collect();
            let users: Vec<u32> = t.users.iter().map(|u| builder.user(u)).collect();
            builder.rows.extend(t.rows.iter().map(|r| PresenceRow {
                place: places[r.place as usize],
                user: users[r.user as usize],
                day: r.day,
            }));
        }
        builder.finish(Exec::Sequential)
    }

    /// Writes `place,user,date` rows, preceded by `comment` when given.
    pub fn write_csv<W: Write>(&self, mut out: W, comment: Option<&str>) -> Result<()> {
        if let Some(c) = comment {
            writeln!(out, "# {c}")?;
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["place", "user", "date"])?;
        for r in &self.rows {
            let date = day_date(r.day).format("%Y-%m-%d").to_string();
            w.write_record([
                &*self.places[r.place as usize],
                &*self.users[r.user as usize],
                date.as_str(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
        let mut builder = TableBuilder::default();
        for rec in rdr.records() {
            let rec = rec?;
            let (Some(place), Some(user), Some(date)) = (rec.get(0), rec.get(1), rec.get(2)) else {
                return Err(Error::Invalid(format!(
                    "presence row {:?} needs 3 fields",
                    rec.position()
                )));
            };
            let date = NaiveDate::parse_from_str(date, "%Y-%m-%d")
                .map_err(|e| Error::Invalid(format!("bad date {date:?}: {e}")))?;
            let place = builder.place(place);
            let user = builder.user(user);
            builder.rows.push(PresenceRow {
                place,
                user,
                day: day_number(date),
            });
        }
        Ok(builder.finish(Exec::default()))
    }
}

/// Accumulates rows against provisional dictionaries, then sorts the
/// dictionaries and remaps. Dictionary order never depends on insertion order.
#[derive(Default)]
pub(crate) struct TableBuilder {
    place_ix: HashMap<PlaceCode, u32>,
    places: Vec<PlaceCode>,
    user_ix: HashMap<Box<str>, u32>,
    users: Vec<Box<str>>,
    pub(crate) rows: Vec<PresenceRow>,
}

impl TableBuilder {
    pub(crate) fn place(&mut self, code: &str) -> u32 {
        if let Some(&i) = self.place_ix.get(code) {
            return i;
        }
        let i = self.places.len() as u32;
        let code: PlaceCode = Arc::from(code);
        self.places.push(code.clone());
        self.place_ix.insert(code, i);
        i
    }

    pub(crate) fn user(&mut self, user: &str) -> u32 {
        if let Some(&i) = self.user_ix.get(user) {
            return i;
        }
        let i = self.users.len() as u32;
        self.users.push(user.into());
        self.user_ix.insert(user.into(), i);
        i
    }

    /// Provisional (insertion-order) user and place dictionaries.
    pub(crate) fn dictionaries(&self) -> (&[Box<str>], &[PlaceCode]) {
        (&self.users, &self.places)
    }

    pub(crate) fn finish(self, exec: Exec) -> PresenceTable {
        let (places, place_map) = sorted_dictionary(self.places);
        let (users, user_map) = sorted_dictionary(self.users);
        let mut rows: Vec<PresenceRow> = self
            .rows
            .into_iter()
            .map(|r| PresenceRow {
                place: place_map[r.place as usize],
                user: user_map[r.user as usize],
                day: r.day,
            })
            .collect();
        exec.sort_unstable(&mut rows);
        rows.dedup();
        PresenceTable { places, users, rows }
    }
}

/// Sorts a dictionary of unique values; returns it with the old→new index map.
pub(crate) fn sorted_dictionary<T: Ord>(values: Vec<T>) -> (Vec<T>, Vec<u32>) {
    let mut order: Vec<u32> = (0..values.len() as u32).collect();
    order.sort_by(|&a, &b| values[a as usize].cmp(&values[b as usize]));
    let mut remap = vec![0u32; values.len()];
    for (new, &old) in order.iter().enumerate() {
        remap[old as usize] = new as u32;
    }
    let mut slots: Vec<Option<T>> = values.into_iter().map(Some).collect();
    let sorted = order
        .iter()
        .map(|&old| slots[old as usize].take().expect("each index taken once"))
        .collect();
    (sorted, remap)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VisitRow {
    pub user: u32,
    /// Unix seconds.
    pub ts: i64,
    pub place: u32,
}

/// Kept events as (user, timestamp, place), sorted and unique. Only needed
/// for within-day transition counting.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct VisitLog {
    places: Vec<PlaceCode>,
    users: Vec<Box<str>>,
    rows: Vec<VisitRow>,
}

impl VisitLog {
    pub fn from_visits<'a>(visits: impl IntoIterator<Item = (&'a str, DateTime<Utc>, &'a str)>) -> Self {
        let mut builder = TableBuilder::default();
        let mut rows = Vec::new();
        for (user, ts, place) in visits {
            rows.push(VisitRow {
                user: builder.user(user),
                ts: ts.timestamp(),
                place: builder.place(place),
            });
        }
        Self::assemble(builder, rows, Exec::Sequential)
    }

    pub(crate) fn assemble(builder: TableBuilder, rows: Vec<VisitRow>, exec: Exec) -> Self {
        let (places, place_map) = sorted_dictionary(builder.places);
        let (users, user_map) = sorted_dictionary(builder.users);
        let mut rows: Vec<VisitRow> = rows
            .into_iter()
            .map(|r| VisitRow {
                user: user_map[r.user as usize],
                ts: r.ts,
                place: place_map[r.place as usize],
            })
            .collect();
        exec.sort_unstable(&mut rows);
        rows.dedup();
        VisitLog { places, users, rows }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn places(&self) -> &[PlaceCode] {
        &self.places
    }

    pub fn users(&self) -> &[Box<str>] {
        &self.users
    }

    pub fn rows(&self) -> &[VisitRow] {
        &self.rows
    }

    pub fn write_csv<W: Write>(&self, mut out: W, comment: Option<&str>) -> Result<()> {
        if let Some(c) = comment {
            writeln!(out, "# {c}")?;
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["user", "ts", "place"])?;
        for r in &self.rows {
            let ts = DateTime::from_timestamp(r.ts, 0)
                .expect("timestamps come from parsed dates")
                .format("%Y-%m-%dT%H:%M:%SZ")
                .to_string();
            w.write_record([
                &*self.users[r.user as usize],
                ts.as_str(),
                &*self.places[r.place as usize],
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
        let mut builder = TableBuilder::default();
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let (Some(user), Some(ts), Some(place)) = (rec.get(0), rec.get(1), rec.get(2)) else {
                return Err(Error::Invalid("visit row needs 3 fields".into()));
            };
            let ts =
                DateTime::parse_from_rfc3339(ts).map_err(|e| Error::Invalid(format!("bad timestamp {ts:?}: {e}")))?;
            rows.push(VisitRow {
                user: builder.user(user),
                ts: ts.timestamp(),
                place: builder.place(place),
            });
        }
        Ok(Self::assemble(builder, rows, Exec::default()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(2019, 1, day).unwrap()
    }

    #[test]
    fn dedup_and_order() {
        let t = PresenceTable::from_tuples([
            PresenceTuple::new("B", "u2", d(1)),
            PresenceTuple::new("A", "u1", d(2)),
            PresenceTuple::new("A", "u1", d(2)),
            PresenceTuple::new("A", "u1", d(1)),
        ]);
        assert_eq!(t.len(), 3);
        let tuples: Vec<_> = t.tuples().collect();
        assert_eq!(tuples[0], PresenceTuple::new("A", "u1", d(1)));
        assert_eq!(tuples[2], PresenceTuple::new("B", "u2", d(1)));
    }

    #[test]
    fn csv_round_trip_with_comment() {
        let t = PresenceTable::from_tuples([
            PresenceTuple::new("06037", "user,with comma", d(3)),
            PresenceTuple::new("06001", "u1", d(1)),
        ]);
        let mut buf = Vec::new();
        t.write_csv(&mut buf, Some("placeconn test")).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# placeconn test\nplace,user,date\n06001,u1,2019-01-01\n"));
        assert_eq!(PresenceTable::read_csv(buf.as_slice()).unwrap(), t);
    }

    #[test]
    fn union_is_set_union() {
        let a = PresenceTable::from_tuples([PresenceTuple::new("A", "u1", d(1)), PresenceTuple::new("B", "u1", d(1))]);
        let b = PresenceTable::from_tuples([PresenceTuple::new("B", "u1", d(1)), PresenceTuple::new("C", "u3", d(2))]);
        let u = a.union(&b);
        assert_eq!(u.len(), 3);
        assert_eq!(u, b.union(&a));
        assert_eq!(u.union(&u), u);
    }
}
