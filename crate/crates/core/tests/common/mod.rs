//! Brute-force reference implementations shared by the integration tests.
#![allow(dead_code, clippy::needless_range_loop)]

use std::collections::{BTreeMap, BTreeSet};

use chrono::NaiveDate;
use placeconn::presence::PresenceTuple;

pub type Tuples = BTreeSet<(String, String, NaiveDate)>;

pub fn dedup(tuples: &[PresenceTuple]) -> Tuples {
    tuples
        .iter()
        .map(|t| (t.place_code.to_string(), t.user.to_string(), t.date))
        .collect()
}

pub fn places(t: &Tuples) -> Vec<String> {
    t.iter()
        .map(|x| x.0.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

fn users_of(t: &Tuples, place: &str) -> BTreeSet<String> {
    t.iter().filter(|x| x.0 == place).map(|x| x.1.clone()).collect()
}

/// (place, user) → number of distinct dates.
pub fn days(t: &Tuples) -> BTreeMap<(String, String), u32> {
    let mut out = BTreeMap::new();
    for (p, u, _) in t {
        *out.entry((p.clone(), u.clone())).or_insert(0) += 1;
    }
    out
}

pub fn unique_users(t: &Tuples) -> BTreeMap<String, u64> {
    places(t)
        .into_iter()
        .map(|p| {
            let n = users_of(t, &p).len() as u64;
            (p, n)
        })
        .collect()
}

/// Nested loop over place pairs, intersecting user sets.
pub fn shared_users(t: &Tuples) -> BTreeMap<(String, String), u64> {
    let ps = places(t);
    let mut out = BTreeMap::new();
    for i in 0..ps.len() {
        let ui = users_of(t, &ps[i]);
        for j in i + 1..ps.len() {
            let uj = users_of(t, &ps[j]);
            let s = ui.intersection(&uj).count() as u64;
            if s > 0 {
                out.insert((ps[i].clone(), ps[j].clone()), s);
            }
        }
    }
    out
}

/// For every (user, date), every unordered pair of distinct places counts once.
pub fn movements(t: &Tuples) -> BTreeMap<(String, String), u64> {
    let mut by_user_day: BTreeMap<(String, NaiveDate), Vec<String>> = BTreeMap::new();
    for (p, u, d) in t {
        by_user_day.entry((u.clone(), *d)).or_default().push(p.clone());
    }
    let mut out = BTreeMap::new();
    for ps in by_user_day.values() {
        for a in ps {
            for b in ps {
                if a < b {
                    *out.entry((a.clone(), b.clone())).or_insert(0) += 1;
                }
            }
        }
    }
    out
}

/// (users_i, users_j, shared, pci, i→j, j→i).
pub type PciRow = (u64, u64, u64, f64, f64, f64);

pub fn pci(t: &Tuples) -> BTreeMap<(String, String), PciRow> {
    let users = unique_users(t);
    shared_users(t)
        .into_iter()
        .map(|((a, b), s)| {
            let (ua, ub) = (users[&a], users[&b]);
            let v = s as f64 / ((ua * ub) as f64).sqrt();
            ((a, b), (ua, ub, s, v, s as f64 / ua as f64, s as f64 / ub as f64))
        })
        .collect()
}

/// Textbook two-pass Pearson correlation.
pub fn pearson_two_pass(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// Solves `A x = b` by Gauss-Jordan elimination with partial pivoting.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in 0..n {
            if row != col {
                let f = a[row][col] / a[col][col];
                for k in col..n {
                    a[row][k] -= f * a[col][k];
                }
                b[row] -= f * b[col];
            }
        }
    }
    (0..n).map(|i| b[i] / a[i][i]).collect()
}

fn invert(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let cols: Vec<Vec<f64>> = (0..n)
        .map(|k| solve(a.to_vec(), (0..n).map(|i| f64::from(u8::from(i == k))).collect()))
        .collect();
    (0..n).map(|i| (0..n).map(|j| cols[j][i]).collect()).collect()
}

pub struct NormalFit {
    pub beta: Vec<f64>,
    pub se: Vec<f64>,
    pub r2: f64,
    pub adj_r2: f64,
}

/// OLS with intercept via the normal equations (XᵀX)β = Xᵀy.
pub fn ols_normal(y: &[f64], xs: &[Vec<f64>]) -> NormalFit {
    let n = y.len();
    let p = xs.len();
    let row = |i: usize| -> Vec<f64> { std::iter::once(1.0).chain(xs.iter().map(|c| c[i])).collect() };
    let mut xtx = vec![vec![0.0; p + 1]; p + 1];
    let mut xty = vec![0.0; p + 1];
    for i in 0..n {
        let r = row(i);
        for a in 0..=p {
            xty[a] += r[a] * y[i];
            for b in 0..=p {
                xtx[a][b] += r[a] * r[b];
            }
        }
    }
    let beta = solve(xtx.clone(), xty);
    let rss: f64 = (0..n)
        .map(|i| {
            let fit: f64 = row(i).iter().zip(&beta).map(|(a, b)| a * b).sum();
            (y[i] - fit).powi(2)
        })
        .sum();
    let mean = y.iter().sum::<f64>() / n as f64;
    let tss: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let df = (n - p - 1) as f64;
    let inv = invert(&xtx);
    let sigma2 = rss / df;
    let r2 = 1.0 - rss / tss;
    NormalFit {
        se: (0..=p).map(|k| (sigma2 * inv[k][k]).sqrt()).collect(),
        beta,
        r2,
        adj_r2: 1.0 - (1.0 - r2) * (n as f64 - 1.0) / df,
    }
}

/// One merge of the reference clustering: (id_a, id_b, height, size).
pub type OracleMerge = (usize, usize, f64, usize);

/// Naive UPGMA: every step recomputes the mean leaf distance between every
/// pair of live clusters and merges the smallest (ties by id pair).
pub fn upgma_naive(n: usize, d: impl Fn(usize, usize) -> f64) -> Vec<OracleMerge> {
    let mut live: Vec<(usize, Vec<usize>)> = (0..n).map(|i| (i, vec![i])).collect();
    let mut merges = Vec::new();
    let mut next = n;
    while live.len() > 1 {
        let mut best: Option<(f64, usize, usize, usize, usize)> = None;
        for a in 0..live.len() {
            for b in a + 1..live.len() {
                let mut sum = 0.0;
                for &x in &live[a].1 {
                    for &y in &live[b].1 {
                        sum += d(x, y);
                    }
                }
                let mean = sum / (live[a].1.len() * live[b].1.len()) as f64;
                let (ia, ib) = (live[a].0.min(live[b].0), live[a].0.max(live[b].0));
                let better = match best {
                    None => true,
                    Some((bd, ba, bb, _, _)) => (mean, ia, ib) < (bd, ba, bb),
                };
                if better {
                    best = Some((mean, ia, ib, a, b));
                }
            }
        }
        let (h, ia, ib, a, b) = best.unwrap();
        let mut members = live[a].1.clone();
        members.extend(&live[b].1);
        merges.push((ia, ib, h, members.len()));
        live.remove(b);
        live.remove(a);
        live.push((next, members));
        next += 1;
    }
    merges
}
