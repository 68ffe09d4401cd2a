use chrono::NaiveDate;
use placeconn::aggregate::PairCountOptions;
use placeconn::connectivity::{pci_matrix, round_half_even, write_pci_csv};
use placeconn::ingest::{is_human_source, parse_event, DateWindow, IngestOptions, Ingestor, SourceWhitelist};
use placeconn::registry::{resolution_admits, PlaceLevel, PlaceRegistry, SpatialResolution};
use placeconn::synth::Grid;

#[test]
fn admission_matrix_all_25_cells() {
    use PlaceLevel::*;
    use SpatialResolution::*;
    let expected = [
        (Coord, [true, true, true, true, true]),
        (NeighborhoodPoi, [true, true, true, true, true]),
        (City, [true, true, true, true, false]),
        (SpatialResolution::Admin1, [true, true, false, false, false]),
        (SpatialResolution::Country, [true, false, false, false, false]),
    ];
    let levels = [PlaceLevel::Country, PlaceLevel::Admin1, County, Metro, Tract];
    for (res, row) in expected {
        for (level, want) in levels.iter().zip(row) {
            assert_eq!(resolution_admits(res, *level), want, "{res:?} at {level:?}");
        }
    }
}

#[test]
fn whitelist_examples() {
    let wl = SourceWhitelist::human_sources();
    assert!(is_human_source("Twitter for iPhone", Some(&wl)));
    assert!(!is_human_source("TweetMyJOBS", Some(&wl)));
    assert!(!is_human_source("twitter for iphone", Some(&wl)));
}

fn two_places() -> (Grid, PlaceRegistry) {
    let g = Grid {
        rows: 1,
        cols: 2,
        lon0: 10.0,
        lat0: 10.0,
        cell_deg: 1.0,
    };
    let reg = PlaceRegistry::from_places(g.places(PlaceLevel::County, |_, _| None)).unwrap();
    (g, reg)
}

fn line(user: &str, day: u32, lon: f64, source: &str) -> String {
    format!(
        r#"{{"user":"{user}","ts":"2019-06-{day:02}T12:00:00Z","lat":10.5,"lon":{lon},"res":"coord","source":"{source}"}}"#
    )
}

/// 1,100 users post: 50 in both places, 50 only in the first, 950 only in
/// the second, and 50 bots that the whitelist removes.
#[test]
fn worked_example_through_ingest() {
    let (_, reg) = two_places();
    let mut lines = Vec::new();
    for u in 0..1100 {
        let user = format!("u{u:04}");
        match u {
            0..50 => {
                lines.push(line(&user, 3, 10.5, "Twitter for iPhone"));
                lines.push(line(&user, 4, 11.5, "Twitter for Android"));
            }
            50..100 => lines.push(line(&user, 5, 10.5, "Instagram")),
            100..1050 => lines.push(line(&user, 6, 11.5, "Twitter for iPhone")),
            _ => lines.push(line(&user, 7, 10.5, "TweetMyJOBS")),
        }
    }
    let mut opts = IngestOptions::new(PlaceLevel::County);
    opts.whitelist = Some(SourceWhitelist::human_sources());
    let mut ing = Ingestor::new(&reg, opts);
    ing.push_lines(&lines);
    let out = ing.finish();
    assert_eq!(out.report.read, 1150);
    assert_eq!(out.report.rejected_source, 50);
    assert_eq!(out.report.kept + out.report.rejected(), out.report.read);
    assert_eq!(out.report.users, 1050);

    let records = pci_matrix(&out.presence, &PairCountOptions::default(), false).unwrap();
    assert_eq!(records.len(), 1);
    let r = &records[0];
    assert_eq!((r.users_i, r.users_j, r.shared), (100, 1000, 50));
    assert_eq!(round_half_even(r.pci, 3), 0.158);
    assert_eq!(round_half_even(r.pci_i_to_j, 3), 0.5);
    assert_eq!(round_half_even(r.pci_j_to_i, 3), 0.05);
    let mut csv = Vec::new();
    write_pci_csv(&records, &mut csv, None).unwrap();
    assert!(String::from_utf8(csv)
        .unwrap()
        .contains("c000000,c000001,100,1000,50,0.158114,0.5,0.05"));
}

#[test]
fn window_and_resolution_filters_are_counted() {
    let (_, reg) = two_places();
    let lines = vec![
        line("a", 1, 10.5, "Twitter for iPhone"),
        line("a", 20, 10.5, "Twitter for iPhone"),
        r#"{"user":"b","ts":"2019-06-02T00:00:00Z","lat":10.5,"lon":10.5,"res":"admin1","source":"Twitter for iPhone"}"#.to_string(),
        r#"{"user":"c","ts":"2019-06-02T00:00:00Z","lat":40.0,"lon":40.0,"res":"coord","source":"Twitter for iPhone"}"#.to_string(),
        "not json".to_string(),
    ];
    let mut opts = IngestOptions::new(PlaceLevel::County);
    let d = |day| NaiveDate::from_ymd_opt(2019, 6, day).unwrap();
    opts.window = Some(DateWindow::new(d(1), d(10)).unwrap());
    let mut ing = Ingestor::new(&reg, opts);
    ing.push_lines(&lines);
    let out = ing.finish();
    let r = out.report;
    assert_eq!((r.read, r.kept), (5, 1));
    assert_eq!(
        (
            r.rejected_window,
            r.rejected_resolution,
            r.rejected_unresolved,
            r.rejected_parse
        ),
        (1, 1, 1, 1)
    );
    assert_eq!(out.failures[0].line, 5);
    assert!(parse_event(&lines[0]).is_ok());
    assert!(DateWindow::new(d(5), d(1)).is_err());
}
