//! Event parsing, source and resolution filtering, and presence emission.

use std::borrow::Cow;
use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::presence::{day_number, PresenceRow, PresenceTable, TableBuilder, VisitLog, VisitRow};
use crate::registry::{resolution_admits, LatLon, PlaceLevel, PlaceRegistry, SpatialResolution};

const DEFAULT_SOURCES: &str = include_str!("../data/human_sources.txt");

#[derive(Clone, Debug, PartialEq)]
pub struct GeoEvent {
    pub user: String,
    pub ts: DateTime<Utc>,
    pub coords: Option<LatLon>,
    pub res: SpatialResolution,
    pub place_code: Option<String>,
    pub source: String,
}

impl GeoEvent {
    pub fn date(&self) -> NaiveDate {
        self.ts.date_naive()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ParseErrorKind {
    Malformed(String),
    MissingField(&'static str),
    InvalidTimestamp(String),
    InvalidResolution(String),
    InvalidCoordinates,
}

impl fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseErrorKind::Malformed(m) => write!(f, "malformed record: {m}"),
            ParseErrorKind::MissingField(name) => write!(f, "missing required field {name:?}"),
            ParseErrorKind::InvalidTimestamp(ts) => write!(f, "invalid timestamp {ts:?}"),
            ParseErrorKind::InvalidResolution(r) => write!(f, "invalid resolution {r:?}"),
            ParseErrorKind::InvalidCoordinates => write!(f, "coordinates out of range"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParseFailure {
    /// 1-based line number within the stream.
    pub line: u64,
    pub kind: ParseErrorKind,
}

#[derive(Deserialize)]
struct RawEvent<'a> {
    #[serde(borrow)]
    user: Option<Cow<'a, str>>,
    #[serde(borrow)]
    ts: Option<Cow<'a, str>>,
    lat: Option<f64>,
    lon: Option<f64>,
    #[serde(borrow)]
    res: Option<Cow<'a, str>>,
    #[serde(borrow)]
    place_code: Option<Cow<'a, str>>,
    #[serde(borrow)]
    source: Option<Cow<'a, str>>,
}

fn parse_timestamp(s: &str) -> Option<DateTime<Utc>> {
    if let Ok(ts) = DateTime::parse_from_rfc3339(s) {
        return Some(ts.with_timezone(&Utc));
    }
    // Offset-less timestamps are read as UTC.
    NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S%.f")
        .ok()
        .map(|n| n.and_utc())
}

/// Event fields borrowed from the input line where possible.
struct EventRef<'a> {
    user: Cow<'a, str>,
    ts: DateTime<Utc>,
    coords: Option<LatLon>,
    res: SpatialResolution,
    place_code: Option<Cow<'a, str>>,
    source: Cow<'a, str>,
}

impl<'a> From<&'a GeoEvent> for EventRef<'a> {
    fn from(ev: &'a GeoEvent) -> Self {
        EventRef {
            user: Cow::Borrowed(&ev.user),
            ts: ev.ts,
            coords: ev.coords,
            res: ev.res,
            place_code: ev.place_code.as_deref().map(Cow::Borrowed),
            source: Cow::Borrowed(&ev.source),
        }
    }
}

/// Parses one NDJSON record.
pub fn parse_event(line: &str) -> std::result::Result<GeoEvent, ParseErrorKind> {
    parse_borrowed(line).map(|e| GeoEvent {
        user: e.user.into_owned(),
        ts: e.ts,
        coords: e.coords,
        res: e.res,
        place_code: e.place_code.map(Cow::into_owned),
        source: e.source.into_owned(),
    })
}

fn parse_borrowed(line: &str) -> std::result::Result<EventRef<'_>, ParseErrorKind> {
    let raw: RawEvent = serde_json::from_str(line).map_err(|e| ParseErrorKind::Malformed(e.to_string()))?;
    let user = raw.user.ok_or(ParseErrorKind::MissingField("user"))?;
    let ts_text = raw.ts.ok_or(ParseErrorKind::MissingField("ts"))?;
    let ts = parse_timestamp(&ts_text).ok_or_else(|| ParseErrorKind::InvalidTimestamp(ts_text.to_string()))?;
    let res_text = raw.res.ok_or(ParseErrorKind::MissingField("res"))?;
    let res: SpatialResolution = res_text
        .parse()
        .map_err(|_| ParseErrorKind::InvalidResolution(res_text.to_string()))?;
    let coords = match (raw.lat, raw.lon) {
        (Some(lat), Some(lon)) => {
            let c = LatLon::new(lat, lon);
            if !c.in_range() {
                return Err(ParseErrorKind::InvalidCoordinates);
            }
            Some(c)
        }
        (None, None) => None,
        (None, Some(_)) => return Err(ParseErrorKind::MissingField("lat")),
        (Some(_), None) => return Err(ParseErrorKind::MissingField("lon")),
    };
    if res == SpatialResolution::Coord && coords.is_none() {
        return Err(ParseErrorKind::MissingField("lat"));
    }
    if coords.is_none() && raw.place_code.is_none() {
        return Err(ParseErrorKind::MissingField("place_code"));
    }
    Ok(EventRef {
        user,
        ts,
        coords,
        res,
        place_code: raw.place_code,
        source: raw.source.unwrap_or_default(),
    })
}

/// Exact-match set of posting applications considered human-operated.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SourceWhitelist {
    sources: HashSet<String>,
}

impl SourceWhitelist {
    /// One source per line; lines starting with `#` and blank lines are
    /// skipped. Entries are kept verbatim, including inner and trailing spaces.
    pub fn parse(text: &str) -> Self {
        let sources = text
            .lines()
            .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
            .map(str::to_owned)
            .collect();
        SourceWhitelist { sources }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::parse(&text))
    }

    /// The built-in list of human posting applications.
    pub fn human_sources() -> Self {
        Self::parse(DEFAULT_SOURCES)
    }

    pub fn contains(&self, source: &str) -> bool {
        self.sources.contains(source)
    }

    pub fn len(&self) -> usize {
        self.sources.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sources.is_empty()
    }
}

/// With no whitelist, filtering is off and every source passes.
pub fn is_human_source(source: &str, wl: Option<&SourceWhitelist>) -> bool {
    wl.is_none_or(|wl| wl.contains(source))
}

/// Inclusive UTC date window.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DateWindow {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateWindow {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Result<Self> {
        if start > end {
            return Err(Error::Invalid(format!("window start {start} is after end {end}")));
        }
        Ok(DateWindow { start, end })
    }

    pub fn contains(&self, d: NaiveDate) -> bool {
        d >= self.start && d <= self.end
    }

    pub fn days(&self) -> i64 {
        (self.end - self.start).num_days() + 1
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub read: u64,
    pub kept: u64,
    pub rejected_parse: u64,
    pub rejected_source: u64,
    pub rejected_resolution: u64,
    pub rejected_window: u64,
    pub rejected_unresolved: u64,
    pub tuples: u64,
    pub users: u64,
    pub places: u64,
}

impl IngestReport {
    pub fn rejected(&self) -> u64 {
        self.rejected_parse
            + self.rejected_source
            + self.rejected_resolution
            + self.rejected_window
            + self.rejected_unresolved
    }

    fn add(&mut self, o: &IngestReport) {
        self.read += o.read;
        self.kept += o.kept;
        self.rejected_parse += o.rejected_parse;
        self.rejected_source += o.rejected_source;
        self.rejected_resolution += o.rejected_resolution;
        self.rejected_window += o.rejected_window;
        self.rejected_unresolved += o.rejected_unresolved;
    }
}

#[derive(Clone, Debug)]
pub struct IngestOptions {
    pub level: PlaceLevel,
    pub window: Option<DateWindow>,
    pub whitelist: Option<SourceWhitelist>,
    /// Also keep the timestamped visit log (for within-day transitions).
    pub keep_visits: bool,
    pub exec: Exec,
    /// Lines per parallel work unit.
    pub chunk_lines: usize,
    /// Parse failures retained for reporting; the rest are only counted.
    pub max_failures: usize,
}

impl IngestOptions {
    pub fn new(level: PlaceLevel) -> Self {
        IngestOptions {
            level,
            window: None,
            whitelist: None,
            keep_visits: false,
            exec: Exec::default(),
            chunk_lines: 8192,
            max_failures: 100,
        }
    }
}

#[derive(Default)]
struct Partial<'a> {
    user_ix: HashMap<Cow<'a, str>, u32>,
    users: Vec<Cow<'a, str>>,
    /// (registry place index, local user, day)
    rows: Vec<(u32, u32, i32)>,
    /// (local user, unix seconds, registry place index)
    visits: Vec<(u32, i64, u32)>,
    report: IngestReport,
    failures: Vec<ParseFailure>,
}

pub struct IngestOutput {
    pub presence: PresenceTable,
    pub visits: Option<VisitLog>,
    pub report: IngestReport,
    /// First `max_failures` parse failures.
    pub failures: Vec<ParseFailure>,
}

/// Streaming ingester. Feed lines or events in batches, then `finish`.
pub struct Ingestor<'r> {
    registry: &'r PlaceRegistry,
    opts: IngestOptions,
    builder: TableBuilder,
    visit_rows: Vec<VisitRow>,
    report: IngestReport,
    failures: Vec<ParseFailure>,
    lines_seen: u64,
    compact_at: usize,
    /// Registry place index → builder place id (`u32::MAX` until seen).
    place_ids: Vec<u32>,
}

impl<'r> Ingestor<'r> {
    pub fn new(registry: &'r PlaceRegistry, opts: IngestOptions) -> Self {
        let places = registry.len(opts.level);
        Ingestor {
            registry,
            opts,
            builder: TableBuilder::default(),
            visit_rows: Vec::new(),
            report: IngestReport::default(),
            failures: Vec::new(),
            lines_seen: 0,
            compact_at: 1 << 22,
            place_ids: vec![u32::MAX; places],
        }
    }

    fn process<'a>(&self, ev: EventRef<'a>, part: &mut Partial<'a>) {
        let r = &mut part.report;
        if !is_human_source(&ev.source, self.opts.whitelist.as_ref()) {
            r.rejected_source += 1;
            return;
        }
        if !resolution_admits(ev.res, self.opts.level) {
            r.rejected_resolution += 1;
            return;
        }
        let date = ev.ts.date_naive();
        if self.opts.window.is_some_and(|w| !w.contains(date)) {
            r.rejected_window += 1;
            return;
        }
        let level = self.opts.level;
        let by_code = ev
            .place_code
            .as_deref()
            .and_then(|code| self.registry.resolve_code(code, level));
        let place = by_code.or_else(|| {
            let c = ev.coords?;
            self.registry.assign_index(c.lat, c.lon, level).ok().flatten()
        });
        let Some(place) = place else {
            r.rejected_unresolved += 1;
            return;
        };
        r.kept += 1;
        let user = match part.user_ix.get(&*ev.user) {
            Some(&u) => u,
            None => {
                let u = part.users.len() as u32;
                part.users.push(ev.user.clone());
                part.user_ix.insert(ev.user, u);
                u
            }
        };
        part.rows.push((place as u32, user, day_number(date)));
        if self.opts.keep_visits {
            part.visits.push((user, ev.ts.timestamp(), place as u32));
        }
    }

    fn absorb(&mut self, parts: Vec<Partial<'_>>) {
        let places = self.registry.places(self.opts.level);
        for part in parts {
            self.report.add(&part.report);
            let room = self.opts.max_failures.saturating_sub(self.failures.len());
            self.failures.extend(part.failures.into_iter().take(room));
            let users: Vec<u32> = part.users.iter().map(|u| self.builder.user(u)).collect();
            let mut place_id = |p: u32, builder: &mut TableBuilder| {
                let slot = &mut self.place_ids[p as usize];
                if *slot == u32::MAX {
                    *slot = builder.place(&places[p as usize].code);
                }
                *slot
            };
            for &(p, u, day) in &part.rows {
                let place = place_id(p, &mut self.builder);
                self.builder.rows.push(PresenceRow {
                    place,
                    user: users[u as usize],
                    day,
                });
            }
            for &(u, ts, p) in &part.visits {
                let place = place_id(p, &mut self.builder);
                self.visit_rows.push(VisitRow {
                    user: users[u as usize],
                    ts,
                    place,
                });
            }
        }
        if self.builder.rows.len() > self.compact_at {
            self.opts.exec.sort_unstable(&mut self.builder.rows);
            self.builder.rows.dedup();
            self.compact_at = (self.builder.rows.len() * 2).max(1 << 22);
        }
    }

    /// Parses and ingests a batch of NDJSON lines. Blank lines are counted as
    /// parse failures.
    pub fn push_lines<S: AsRef<str> + Sync>(&mut self, lines: &[S]) {
        let base = self.lines_seen;
        self.lines_seen += lines.len() as u64;
        let chunk = self.opts.chunk_lines.max(1);
        let chunks: Vec<(usize, &[S])> = lines.chunks(chunk).enumerate().collect();
        let max_failures = self.opts.max_failures;
        let parts = self.opts.exec.map(&chunks, |&(ci, chunk_lines)| {
            let mut part = Partial::default();
            for (i, line) in chunk_lines.iter().enumerate() {
                part.report.read += 1;
                match parse_borrowed(line.as_ref()) {
                    Ok(ev) => self.process(ev, &mut part),
                    Err(kind) => {
                        part.report.rejected_parse += 1;
                        if part.failures.len() < max_failures {
                            part.failures.push(ParseFailure {
                                line: base + (ci * chunk + i) as u64 + 1,
                                kind,
                            });
                        }
                    }
                }
            }
            part
        });
        self.absorb(parts);
    }

    pub fn push_events(&mut self, events: &[GeoEvent]) {
        self.lines_seen += events.len() as u64;
        let chunk = self.opts.chunk_lines.max(1);
        let chunks: Vec<&[GeoEvent]> = events.chunks(chunk).collect();
        let parts = self.opts.exec.map(&chunks, |evs| {
            let mut part = Partial::default();
            for ev in evs.iter() {
                part.report.read += 1;
                self.process(ev.into(), &mut part);
            }
            part
        });
        self.absorb(parts);
    }

    pub fn finish(self) -> IngestOutput {
        let exec = self.opts.exec;
        let keep_visits = self.opts.keep_visits;
        let mut report = self.report;
        let mut builder = self.builder;
        let visits = if keep_visits {
            let mut vb = TableBuilder::default();
            // The visit log shares dictionaries with the presence table
            // builder; rebuild them against a fresh builder.
            let (users, places) = builder.dictionaries();
            let users: Vec<u32> = users.iter().map(|u| vb.user(u)).collect();
            let places: Vec<u32> = places.iter().map(|p| vb.place(p)).collect();
            let rows = self
                .visit_rows
                .into_iter()
                .map(|v| VisitRow {
                    user: users[v.user as usize],
                    ts: v.ts,
                    place: places[v.place as usize],
                })
                .collect();
            Some(VisitLog::assemble(vb, rows, exec))
        } else {
            None
        };
        builder.rows.shrink_to_fit();
        let presence = builder.finish(exec);
        report.tuples = presence.len() as u64;
        report.users = presence.users().len() as u64;
        report.places = presence.places().len() as u64;
        IngestOutput {
            presence,
            visits,
            report,
            failures: self.failures,
        }
    }
}

/// Ingests an in-memory event sequence.
pub fn ingest_stream(
    events: impl IntoIterator<Item = GeoEvent>,
    registry: &PlaceRegistry,
    opts: IngestOptions,
) -> IngestOutput {
    let events: Vec<GeoEvent> = events.into_iter().collect();
    let mut ing = Ingestor::new(registry, opts);
    ing.push_events(&events);
    ing.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{MultiPolygon, Polygon};
    use crate::registry::Place;

    fn square(code: &str, x0: f64, parent: &str) -> Place {
        Place {
            code: code.into(),
            level: PlaceLevel::County,
            name: code.into(),
            parent_code: Some(parent.into()),
            centroid: LatLon::new(0.5, x0 + 0.5),
            geometry: Some(MultiPolygon(vec![Polygon {
                exterior: vec![[x0, 0.0], [x0 + 1.0, 0.0], [x0 + 1.0, 1.0], [x0, 1.0], [x0, 0.0]],
                holes: vec![],
            }])),
        }
    }

    fn registry() -> PlaceRegistry {
        PlaceRegistry::from_places([square("A", 0.0, "S1"), square("B", 1.0, "S1"), square("C", 2.0, "S2")]).unwrap()
    }

    fn line(user: &str, ts: &str, lon: f64, res: &str, source: &str) -> String {
        format!(r#"{{"user":"{user}","ts":"{ts}","lat":0.5,"lon":{lon},"res":"{res}","source":"{source}"}}"#)
    }

    #[test]
    fn parse_examples() {
        let ev = parse_event(
            r#"{"user":"u1","ts":"2019-06-01T12:00:00Z","lat":34.05,"lon":-118.24,"res":"coord","source":"Twitter for iPhone"}"#,
        )
        .unwrap();
        assert_eq!(ev.user, "u1");
        assert_eq!(ev.date(), NaiveDate::from_ymd_opt(2019, 6, 1).unwrap());
        assert_eq!(ev.res, SpatialResolution::Coord);

        let ev = parse_event(
            r#"{"user":"u2","ts":"2019-06-01T23:30:00-05:00","res":"city","place_code":"06037","source":"x"}"#,
        )
        .unwrap();
        assert!(ev.coords.is_none());
        assert_eq!(ev.place_code.as_deref(), Some("06037"));
        // normalized to UTC: next calendar day
        assert_eq!(ev.date(), NaiveDate::from_ymd_opt(2019, 6, 2).unwrap());

        assert_eq!(
            parse_event(r#"{"ts":"2019-06-01T12:00:00Z","lat":1,"lon":1,"res":"coord"}"#),
            Err(ParseErrorKind::MissingField("user"))
        );
        assert!(matches!(parse_event("{not json"), Err(ParseErrorKind::Malformed(_))));
        assert!(matches!(
            parse_event(r#"{"user":"u","ts":"yesterday","lat":1,"lon":1,"res":"coord"}"#),
            Err(ParseErrorKind::InvalidTimestamp(_))
        ));
        assert!(matches!(
            parse_event(r#"{"user":"u","ts":"2019-06-01T12:00:00Z","lat":1,"lon":1,"res":"street"}"#),
            Err(ParseErrorKind::InvalidResolution(_))
        ));
        assert_eq!(
            parse_event(r#"{"user":"u","ts":"2019-06-01T12:00:00Z","res":"coord","place_code":"A"}"#),
            Err(ParseErrorKind::MissingField("lat"))
        );
        assert_eq!(
            parse_event(r#"{"user":"u","ts":"2019-06-01T12:00:00Z","lat":95,"lon":1,"res":"coord"}"#),
            Err(ParseErrorKind::InvalidCoordinates)
        );
    }

    #[test]
    fn whitelist() {
        let wl = SourceWhitelist::human_sources();
        assert!(is_human_source("Twitter for iPhone", Some(&wl)));
        assert!(is_human_source("Twidere for Android #4", Some(&wl)));
        assert!(!is_human_source("TweetMyJOBS", Some(&wl)));
        assert!(!is_human_source("CareerArc", Some(&wl)));
        assert!(!is_human_source("twitter for iphone", Some(&wl)));
        assert!(is_human_source("TweetMyJOBS", None));
        let custom = SourceWhitelist::parse("# comment\nApp One\n\nApp Two \n");
        assert_eq!(custom.len(), 2);
        assert!(custom.contains("App Two "));
        assert!(!custom.contains("App Two"));
    }

    #[test]
    fn dedup_and_multi_place_days() {
        let reg = registry();
        let lines = vec![
            line("u1", "2019-01-01T01:00:00Z", 0.5, "coord", "a"),
            line("u1", "2019-01-01T02:00:00Z", 0.6, "coord", "a"),
            line("u1", "2019-01-01T03:00:00Z", 0.7, "coord", "a"),
            line("u2", "2019-01-01T01:00:00Z", 0.5, "coord", "a"),
            line("u2", "2019-01-01T02:00:00Z", 1.5, "coord", "a"),
            line("u2", "2019-01-01T03:00:00Z", 2.5, "coord", "a"),
        ];
        let mut ing = Ingestor::new(&reg, IngestOptions::new(PlaceLevel::County));
        ing.push_lines(&lines);
        let out = ing.finish();
        assert_eq!(out.report.read, 6);
        assert_eq!(out.report.kept, 6);
        let tuples: Vec<_> = out.presence.tuples().collect();
        assert_eq!(tuples.iter().filter(|t| t.user == "u1").count(), 1);
        assert_eq!(tuples.iter().filter(|t| t.user == "u2").count(), 3);
    }

    #[test]
    fn rejects_are_attributed() {
        let reg = registry();
        let mut opts = IngestOptions::new(PlaceLevel::County);
        opts.whitelist = Some(SourceWhitelist::parse("good\n"));
        opts.window = Some(
            DateWindow::new(
                NaiveDate::from_ymd_opt(2019, 1, 1).unwrap(),
                NaiveDate::from_ymd_opt(2019, 12, 31).unwrap(),
            )
            .unwrap(),
        );
        let lines = vec![
            line("u1", "2019-01-01T01:00:00Z", 0.5, "coord", "good"),
            line("u1", "2019-01-01T01:00:00Z", 0.5, "coord", "TweetMyJOBS"),
            line("u1", "2019-01-01T01:00:00Z", 0.5, "admin1", "good"),
            line("u1", "2018-12-31T23:59:59Z", 0.5, "coord", "good"),
            line("u1", "2019-01-01T01:00:00Z", 9.5, "coord", "good"),
            r#"{"user":"u1","ts":"2019-02-01T00:00:00Z","res":"city","place_code":"B","source":"good"}"#.to_string(),
            "garbage".to_string(),
        ];
        let mut ing = Ingestor::new(&reg, opts);
        ing.push_lines(&lines);
        let out = ing.finish();
        let r = out.report;
        assert_eq!(r.read, 7);
        assert_eq!(r.kept, 2);
        assert_eq!(
            (
                r.rejected_source,
                r.rejected_resolution,
                r.rejected_window,
                r.rejected_unresolved,
                r.rejected_parse
            ),
            (1, 1, 1, 1, 1)
        );
        assert_eq!(r.kept + r.rejected(), r.read);
        assert_eq!(out.failures.len(), 1);
        assert_eq!(out.failures[0].line, 7);
    }

    #[test]
    fn visits_are_kept_on_request() {
        let reg = registry();
        let mut opts = IngestOptions::new(PlaceLevel::County);
        opts.keep_visits = true;
        let lines = vec![
            line("u1", "2019-01-01T03:00:00Z", 0.5, "coord", "a"),
            line("u1", "2019-01-01T01:00:00Z", 1.5, "coord", "a"),
        ];
        let mut ing = Ingestor::new(&reg, opts);
        ing.push_lines(&lines);
        let out = ing.finish();
        let visits = out.visits.unwrap();
        assert_eq!(visits.len(), 2);
        assert_eq!(&*visits.places()[visits.rows()[0].place as usize], "B");
    }
}
