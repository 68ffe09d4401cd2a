//! Symmetric and directional place connectivity index.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::aggregate::{shared_users_indexed, user_counts_indexed, PairCountOptions, PlaceUserCount, SharedUserCount};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::presence::{PlaceCode, PresenceTable};

pub const PCI_CSV_HEADER: [&str; 8] = [
    "place_i",
    "place_j",
    "users_i",
    "users_j",
    "shared_users",
    "pci",
    "pci_i_to_j",
    "pci_j_to_i",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PciRecord {
    pub place_i: PlaceCode,
    pub place_j: PlaceCode,
    pub users_i: u64,
    pub users_j: u64,
    pub shared: u64,
    pub pci: f64,
    /// Directional index i → j: shared / users_i, the share of place i's
    /// users also observed in j.
    pub pci_i_to_j: f64,
    /// Directional index j → i: shared / users_j.
    pub pci_j_to_i: f64,
}

fn check(shared: u64, users_i: u64, users_j: u64) -> Result<()> {
    if users_i == 0 || users_j == 0 || shared > users_i.min(users_j) {
        return Err(Error::InvalidCounts {
            shared,
            users_i,
            users_j,
        });
    }
    Ok(())
}

/// Shared users normalized by the geometric mean of the two populations.
pub fn pci(shared: u64, users_i: u64, users_j: u64) -> Result<f64> {
    check(shared, users_i, users_j)?;
    Ok(shared as f64 / (users_i as f64 * users_j as f64).sqrt())
}

/// `(i → j, j → i)` = `(shared / users_i, shared / users_j)`. With 50 shared
/// users between a 100-user place i and a 1000-user place j this gives
/// (0.5, 0.05).
pub fn directional_pci(shared: u64, users_i: u64, users_j: u64) -> Result<(f64, f64)> {
    check(shared, users_i, users_j)?;
    Ok((shared as f64 / users_i as f64, shared as f64 / users_j as f64))
}

fn record(place_i: PlaceCode, place_j: PlaceCode, users_i: u64, users_j: u64, shared: u64) -> Result<PciRecord> {
    let (pci_i_to_j, pci_j_to_i) = directional_pci(shared, users_i, users_j)?;
    Ok(PciRecord {
        pci: pci(shared, users_i, users_j)?,
        place_i,
        place_j,
        users_i,
        users_j,
        shared,
        pci_i_to_j,
        pci_j_to_i,
    })
}

fn with_self_pairs(
    mut records: Vec<PciRecord>,
    counts: impl Iterator<Item = (PlaceCode, u64)>,
) -> Result<Vec<PciRecord>> {
    for (code, n) in counts {
        records.push(record(code.clone(), code, n, n, n)?);
    }
    records.sort_by(|a, b| (&a.place_i, &a.place_j).cmp(&(&b.place_i, &b.place_j)));
    Ok(records)
}

/// One record per shared pair, sorted by (place_i, place_j). Self pairs
/// (PCI 1) are added only when `include_self` is set.
pub fn build_matrix(
    shared: &[SharedUserCount],
    counts: &[PlaceUserCount],
    include_self: bool,
) -> Result<Vec<PciRecord>> {
    build_matrix_with(shared, counts, include_self, Exec::default())
}

pub fn build_matrix_with(
    shared: &[SharedUserCount],
    counts: &[PlaceUserCount],
    include_self: bool,
    exec: Exec,
) -> Result<Vec<PciRecord>> {
    let by_place: HashMap<&str, u64> = counts.iter().map(|c| (&*c.place_code, c.users)).collect();
    let lookup = |code: &PlaceCode| {
        by_place
            .get(&**code)
            .copied()
            .ok_or_else(|| Error::UnknownPlace(code.to_string()))
    };
    let mut records = exec
        .map(shared, |s| {
            let (a, b) = if s.place_i <= s.place_j {
                (&s.place_i, &s.place_j)
            } else {
                (&s.place_j, &s.place_i)
            };
            if a == b {
                return Ok(None);
            }
            record(a.clone(), b.clone(), lookup(a)?, lookup(b)?, s.shared).map(Some)
        })
        .into_iter()
        .filter_map(Result::transpose)
        .collect::<Result<Vec<_>>>()?;
    records.sort_by(|a, b| (&a.place_i, &a.place_j).cmp(&(&b.place_i, &b.place_j)));
    if include_self {
        let counts = counts
            .iter()
            .filter(|c| c.users > 0)
            .map(|c| (c.place_code.clone(), c.users));
        return with_self_pairs(records, counts);
    }
    Ok(records)
}

/// Presence table straight to the sorted PCI matrix.
pub fn pci_matrix(table: &PresenceTable, opts: &PairCountOptions, include_self: bool) -> Result<Vec<PciRecord>> {
    let places = table.places();
    let users = user_counts_indexed(table);
    let pairs = shared_users_indexed(table, opts)?;
    let records = opts
        .exec
        .map(&pairs, |&(i, j, s)| {
            record(
                places[i as usize].clone(),
                places[j as usize].clone(),
                users[i as usize],
                users[j as usize],
                s,
            )
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    if include_self {
        let counts = places
            .iter()
            .cloned()
            .zip(users.iter().copied())
            .filter(|&(_, n)| n > 0);
        return with_self_pairs(records, counts);
    }
    Ok(records)
}

/// Rounds half to even at `decimals` places (on the shortest decimal
/// representation of `v`).
pub fn round_half_even(v: f64, decimals: u32) -> f64 {
    let scale = 10f64.powi(decimals as i32);
    let x = v * scale;
    let r = x.round();
    let r = if (x - x.trunc()).abs() == 0.5 && r % 2.0 != 0.0 {
        r - x.signum()
    } else {
        r
    };
    r / scale
}

/// Formats with `digits` significant digits, trailing zeros trimmed.
pub fn format_sig(v: f64, digits: usize) -> String {
    if v == 0.0 || !v.is_finite() {
        return if v == 0.0 { "0".into() } else { v.to_string() };
    }
    let exp = v.abs().log10().floor() as i32;
    let decimals = (digits as i32 - 1 - exp).max(0) as usize;
    let s = format!("{v:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

pub fn write_pci_csv<W: Write>(records: &[PciRecord], mut out: W, comment: Option<&str>) -> Result<()> {
    if let Some(c) = comment {
        writeln!(out, "# {c}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(PCI_CSV_HEADER)?;
    for r in records {
        w.write_record([
            r.place_i.to_string(),
            r.place_j.to_string(),
            r.users_i.to_string(),
            r.users_j.to_string(),
            r.shared.to_string(),
            format_sig(r.pci, 6),
            format_sig(r.pci_i_to_j, 6),
            format_sig(r.pci_j_to_i, 6),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a PCI matrix written by [`write_pci_csv`]. Values are recomputed
/// from the integer counts, so no precision is lost to serialization.
pub fn read_pci_csv<R: Read>(input: R) -> Result<Vec<PciRecord>> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Invalid(format!("PCI matrix lacks column {name:?}")))
    };
    let (ci, cj, cui, cuj, cs) = (
        col("place_i")?,
        col("place_j")?,
        col("users_i")?,
        col("users_j")?,
        col("shared_users")?,
    );
    let mut interned: HashMap<String, PlaceCode> = HashMap::new();
    let mut intern = |s: &str| interned.entry(s.to_owned()).or_insert_with(|| Arc::from(s)).clone();
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let num = |c: usize| -> Result<u64> {
            rec.get(c)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::Invalid(format!("bad count in PCI row {:?}", rec.position().map(|p| p.line()))))
        };
        let (ui, uj, s) = (num(cui)?, num(cuj)?, num(cs)?);
        let pi = intern(rec.get(ci).unwrap_or_default());
        let pj = intern(rec.get(cj).unwrap_or_default());
        out.push(record(pi, pj, ui, uj, s)?);
    }
    Ok(out)
}
