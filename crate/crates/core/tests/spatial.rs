use placeconn::registry::PlaceRegistry;
use placeconn::registry::{haversine_miles, LatLon, PlaceLevel};
use placeconn::synth::Grid;
use proptest::prelude::*;

fn grid() -> Grid {
    Grid {
        rows: 6,
        cols: 8,
        lon0: -80.0,
        lat0: 35.0,
        cell_deg: 0.5,
    }
}

fn registry() -> PlaceRegistry {
    PlaceRegistry::from_places(grid().places(PlaceLevel::County, |_, _| None)).unwrap()
}

/// Cell arithmetic for a point on the grid; boundary points go to the
/// smallest code, i.e. the lowest row then lowest column touching it.
fn cell_oracle(g: &Grid, lat: f64, lon: f64) -> Option<String> {
    let fx = (lon - g.lon0) / g.cell_deg;
    let fy = (lat - g.lat0) / g.cell_deg;
    if fx < 0.0 || fy < 0.0 || fx > g.cols as f64 || fy > g.rows as f64 {
        return None;
    }
    let pick = |f: f64, n: usize| {
        let c = f.floor() as usize;
        if f == f.floor() && c > 0 {
            c - 1
        } else {
            c.min(n - 1)
        }
    };
    Some(g.cell_code(pick(fy, g.rows), pick(fx, g.cols)))
}

proptest! {
    #[test]
    fn point_assignment_matches_cell_arithmetic(x in -1.0f64..9.0, y in -1.0f64..7.0) {
        let g = grid();
        let reg = registry();
        let (lat, lon) = (g.lat0 + y * g.cell_deg, g.lon0 + x * g.cell_deg);
        let got = reg.assign_point(lat, lon, PlaceLevel::County).unwrap().map(|p| p.code.clone());
        prop_assert_eq!(got, cell_oracle(&g, lat, lon));
    }

    #[test]
    fn grid_vertices_go_to_smallest_code(r in 0usize..=6, c in 0usize..=8) {
        let g = grid();
        let reg = registry();
        let (lat, lon) = (g.lat0 + r as f64 * g.cell_deg, g.lon0 + c as f64 * g.cell_deg);
        let got = reg.assign_point(lat, lon, PlaceLevel::County).unwrap().map(|p| p.code.clone());
        prop_assert_eq!(got, cell_oracle(&g, lat, lon));
    }

    #[test]
    fn haversine_metric_properties(
        a in (-80.0f64..80.0, -179.0f64..179.0),
        b in (-80.0f64..80.0, -179.0f64..179.0),
        c in (-80.0f64..80.0, -179.0f64..179.0),
    ) {
        let (a, b, c) = (LatLon::new(a.0, a.1), LatLon::new(b.0, b.1), LatLon::new(c.0, c.1));
        prop_assert_eq!(haversine_miles(a, a), 0.0);
        prop_assert!((haversine_miles(a, b) - haversine_miles(b, a)).abs() < 1e-9);
        prop_assert!(haversine_miles(a, c) <= haversine_miles(a, b) + haversine_miles(b, c) + 1e-6);
        prop_assert!(haversine_miles(a, b) <= std::f64::consts::PI * 3958.8 + 1e-9);
    }
}

#[test]
fn out_of_range_coordinates_error() {
    let reg = registry();
    assert!(reg.assign_point(91.0, 0.0, PlaceLevel::County).is_err());
    assert!(reg.assign_point(0.0, f64::NAN, PlaceLevel::County).is_err());
    assert!(reg.assign_point(0.0, 0.0, PlaceLevel::Tract).unwrap().is_none());
}
