//! Per-place user-day aggregates, unique-user counts, and exact pairwise
//! shared-user counts.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::exec::Exec;
use crate::pairs::count_pairs;
pub use crate::pairs::PairCountOptions;
use crate::presence::{PlaceCode, PresenceTable};

/// Number of distinct dates a user was observed in a place.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PresenceDays {
    pub place_code: PlaceCode,
    pub user: String,
    pub days: u32,
}

/// Distinct users observed in a place.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PlaceUserCount {
    pub place_code: PlaceCode,
    pub users: u64,
}

/// Distinct users observed in both places; `place_i < place_j`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SharedUserCount {
    pub place_i: PlaceCode,
    pub place_j: PlaceCode,
    pub shared: u64,
}

pub fn presence_to_days(table: &PresenceTable) -> Vec<PresenceDays> {
    let rows = table.rows();
    let mut out = Vec::new();
    let mut start = 0;
    while start < rows.len() {
        let (p, u) = (rows[start].place, rows[start].user);
        let end = start + rows[start..].iter().take_while(|r| r.place == p && r.user == u).count();
        out.push(PresenceDays {
            place_code: table.places()[p as usize].clone(),
            user: table.users()[u as usize].to_string(),
            days: (end - start) as u32,
        });
        start = end;
    }
    out
}

/// Per-place distinct user counts, indexed like `table.places()`.
pub(crate) fn user_counts_indexed(table: &PresenceTable) -> Vec<u64> {
    let mut counts = vec![0u64; table.places().len()];
    let mut prev = None;
    for r in table.rows() {
        if prev != Some((r.place, r.user)) {
            counts[r.place as usize] += 1;
            prev = Some((r.place, r.user));
        }
    }
    counts
}

pub fn unique_users(table: &PresenceTable) -> Vec<PlaceUserCount> {
    user_counts_indexed(table)
        .into_iter()
        .enumerate()
        .filter(|&(_, n)| n > 0)
        .map(|(i, users)| PlaceUserCount {
            place_code: table.places()[i].clone(),
            users,
        })
        .collect()
}

/// Each user's distinct place list, users in index order.
pub(crate) struct UserPlaces {
    places: Vec<u32>,
    bounds: Vec<(usize, usize)>,
}

impl UserPlaces {
    pub(crate) fn build(table: &PresenceTable, exec: Exec) -> Self {
        let mut keys: Vec<u64> = Vec::with_capacity(table.len());
        let mut prev = None;
        for r in table.rows() {
            if prev != Some((r.place, r.user)) {
                keys.push(((r.user as u64) << 32) | r.place as u64);
                prev = Some((r.place, r.user));
            }
        }
        exec.sort_unstable(&mut keys);
        let mut places = Vec::with_capacity(keys.len());
        let mut bounds = Vec::new();
        let mut start = 0;
        for (i, k) in keys.iter().enumerate() {
            places.push(*k as u32);
            let last = i + 1 == keys.len() || keys[i + 1] >> 32 != k >> 32;
            if last {
                bounds.push((start, i + 1));
                start = i + 1;
            }
        }
        UserPlaces { places, bounds }
    }

    pub(crate) fn groups(&self) -> impl Iterator<Item = &[u32]> {
        self.bounds.iter().map(|&(a, b)| &self.places[a..b])
    }
}

/// Shared-user counts as canonical index pairs.
pub(crate) fn shared_users_indexed(table: &PresenceTable, opts: &PairCountOptions) -> Result<Vec<(u32, u32, u64)>> {
    let up = UserPlaces::build(table, opts.exec);
    let groups: Vec<&[u32]> = up.groups().filter(|g| g.len() > 1).collect();
    count_pairs(table.places().len(), &groups, opts, |g, acc| acc.add_all_pairs(g))
}

pub fn shared_users(table: &PresenceTable) -> Vec<SharedUserCount> {
    shared_users_with(table, &PairCountOptions::default()).expect("in-memory counting does not fail")
}

/// Shared-user counts with explicit execution and memory settings; only the
/// spill path can fail.
pub fn shared_users_with(table: &PresenceTable, opts: &PairCountOptions) -> Result<Vec<SharedUserCount>> {
    let places = table.places();
    Ok(shared_users_indexed(table, opts)?
        .into_iter()
        .map(|(i, j, shared)| SharedUserCount {
            place_i: places[i as usize].clone(),
            place_j: places[j as usize].clone(),
            shared,
        })
        .collect())
}
