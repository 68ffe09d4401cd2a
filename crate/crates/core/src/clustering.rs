//! Average-linkage (UPGMA) agglomerative clustering over inverse-PCI
//! distances, and k-cuts of the resulting dendrogram.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashMap};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::connectivity::PciRecord;
use crate::error::{Error, Result};
use crate::presence::PlaceCode;

/// Symmetric distances over a sorted place list, stored as the condensed
/// upper triangle.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMatrix {
    places: Vec<PlaceCode>,
    condensed: Vec<f64>,
    sentinel: f64,
}

fn tri(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < n);
    i * n - i * (i + 1) / 2 + (j - i - 1)
}

impl DistanceMatrix {
    /// Builds from a dense function; `places` must be sorted and unique.
    pub fn from_fn(places: Vec<PlaceCode>, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        if places.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Invalid(
                "distance matrix places must be sorted and unique".into(),
            ));
        }
        let n = places.len();
        let mut condensed = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for i in 0..n {
            for j in i + 1..n {
                let d = f(i, j);
                if !(d.is_finite() && d > 0.0) {
                    return Err(Error::Invalid(format!(
                        "distance ({i},{j}) = {d} must be positive and finite"
                    )));
                }
                condensed.push(d);
            }
        }
        let sentinel = condensed.iter().copied().fold(0.0, f64::max);
        Ok(DistanceMatrix {
            places,
            condensed,
            sentinel,
        })
    }

    pub fn len(&self) -> usize {
        self.places.len()
    }

    pub fn is_empty(&self) -> bool {
        self.places.is_empty()
    }

    pub fn places(&self) -> &[PlaceCode] {
        &self.places
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match i.cmp(&j) {
            Ordering::Less => self.condensed[tri(self.len(), i, j)],
            Ordering::Greater => self.condensed[tri(self.len(), j, i)],
            Ordering::Equal => 0.0,
        }
    }

    /// Distance assigned to pairs without connectivity.
    pub fn sentinel(&self) -> f64 {
        self.sentinel
    }
}

/// Distance = 1 / PCI for connected pairs. Pairs with no (or zero) PCI get
/// ten times the largest finite distance, or 10 when nothing is connected.
/// Records naming places outside `places` and self pairs are ignored.
pub fn pci_to_distance(records: &[PciRecord], places: &[PlaceCode]) -> DistanceMatrix {
    let mut places = places.to_vec();
    places.sort();
    places.dedup();
    let n = places.len();
    let index: HashMap<&str, usize> = places.iter().enumerate().map(|(i, p)| (&**p, i)).collect();
    let mut condensed = vec![f64::NAN; n * n.saturating_sub(1) / 2];
    let mut max_finite: f64 = 0.0;
    for r in records {
        let (Some(&a), Some(&b)) = (index.get(&*r.place_i), index.get(&*r.place_j)) else {
            continue;
        };
        if a == b || r.pci.is_nan() || r.pci <= 0.0 {
            continue;
        }
        let d = 1.0 / r.pci;
        max_finite = max_finite.max(d);
        condensed[tri(n, a.min(b), a.max(b))] = d;
    }
    let sentinel = if max_finite > 0.0 { 10.0 * max_finite } else { 10.0 };
    for d in condensed.iter_mut().filter(|d| d.is_nan()) {
        *d = sentinel;
    }
    DistanceMatrix {
        places,
        condensed,
        sentinel,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    /// Smaller of the two merged cluster ids. Ids below `n` are leaves (the
    /// place at that index); merge `m` creates id `n + m`.
    pub cluster_a: usize,
    pub cluster_b: usize,
    pub height: f64,
    pub size: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dendrogram {
    leaves: Vec<PlaceCode>,
    merges: Vec<Merge>,
}

impl Dendrogram {
    pub fn leaves(&self) -> &[PlaceCode] {
        &self.leaves
    }

    pub fn merges(&self) -> &[Merge] {
        &self.merges
    }

    pub fn write_csv<W: Write>(&self, mut out: W, comment: Option<&str>) -> Result<()> {
        if let Some(c) = comment {
            writeln!(out, "# {c}")?;
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["merge_index", "cluster_a", "cluster_b", "height", "size"])?;
        for (i, m) in self.merges.iter().enumerate() {
            w.write_record([
                i.to_string(),
                m.cluster_a.to_string(),
                m.cluster_b.to_string(),
                m.height.to_string(),
                m.size.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Total order on candidate merges: distance, then the smaller cluster id,
/// then the larger.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Key(f64, usize, usize);

impl Eq for Key {}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Key {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0
            .total_cmp(&other.0)
            .then(self.1.cmp(&other.1))
            .then(self.2.cmp(&other.2))
    }
}

struct Working {
    n: usize,
    /// Sum of leaf distances across each live cluster pair. Dividing once
    /// by the size product (rather than averaging incrementally) keeps exact
    /// ties exact when the inputs are exactly representable.
    sum: Vec<f64>,
    dist: Vec<f64>,
    active: Vec<bool>,
    label: Vec<usize>,
    size: Vec<usize>,
    /// For slot i: best partner slot j > i and its key.
    nearest: Vec<Option<(Key, usize)>>,
}

impl Working {
    fn d(&self, i: usize, j: usize) -> f64 {
        self.dist[tri(self.n, i.min(j), i.max(j))]
    }

    fn key(&self, i: usize, j: usize) -> Key {
        let (a, b) = (self.label[i], self.label[j]);
        Key(self.d(i, j), a.min(b), a.max(b))
    }

    fn rescan(&mut self, i: usize) {
        self.nearest[i] = (i + 1..self.n)
            .filter(|&j| self.active[j])
            .map(|j| (self.key(i, j), j))
            .min_by(|a, b| a.0.cmp(&b.0));
    }
}

/// UPGMA: the distance between clusters is the mean of all cross-cluster
/// leaf distances; the globally closest pair merges first, ties going to the
/// smallest (id_a, id_b). Uses per-row nearest-neighbour caching with a lazy
/// priority queue, which reproduces the naive greedy merge sequence exactly.
pub fn agglomerate(d: &DistanceMatrix) -> Result<Dendrogram> {
    let n = d.len();
    if n < 2 {
        return Err(Error::InsufficientData { need: 2, got: n });
    }
    let mut w = Working {
        n,
        sum: d.condensed.clone(),
        dist: d.condensed.clone(),
        active: vec![true; n],
        label: (0..n).collect(),
        size: vec![1; n],
        nearest: vec![None; n],
    };
    let mut heap: BinaryHeap<Reverse<(Key, usize, usize)>> = BinaryHeap::new();
    for i in 0..n {
        w.rescan(i);
        if let Some((k, j)) = w.nearest[i] {
            heap.push(Reverse((k, i, j)));
        }
    }
    let mut merges = Vec::with_capacity(n - 1);
    while merges.len() < n - 1 {
        let Reverse((key, i, j)) = heap.pop().expect("an active pair remains until n-1 merges");
        if !w.active[i] || w.nearest[i] != Some((key, j)) {
            continue;
        }
        let (si, sj) = (w.size[i], w.size[j]);
        merges.push(Merge {
            cluster_a: key.1,
            cluster_b: key.2,
            height: key.0,
            size: si + sj,
        });
        // Merged cluster lives in slot j.
        for k in 0..n {
            if !w.active[k] || k == i || k == j {
                continue;
            }
            let (x, y) = (w.d(k, i), w.d(k, j));
            let (ki, kj) = (tri(n, k.min(i), k.max(i)), tri(n, k.min(j), k.max(j)));
            let total = w.sum[ki] + w.sum[kj];
            w.sum[kj] = total;
            let avg = total / (w.size[k] * (si + sj)) as f64;
            // Rounding must not take the mean outside its inputs, which keeps
            // merge heights monotone.
            w.dist[kj] = avg.clamp(x.min(y), x.max(y));
        }
        w.active[i] = false;
        w.nearest[i] = None;
        w.size[j] = si + sj;
        w.label[j] = n + merges.len() - 1;

        for k in 0..j {
            if !w.active[k] {
                continue;
            }
            let stale = matches!(w.nearest[k], Some((_, m)) if m == i || m == j);
            let before = w.nearest[k];
            if stale {
                w.rescan(k);
            } else {
                let cand = (w.key(k, j), j);
                if w.nearest[k].is_none_or(|(best, _)| cand.0 < best) {
                    w.nearest[k] = Some(cand);
                }
            }
            if w.nearest[k] != before {
                if let Some((kk, m)) = w.nearest[k] {
                    heap.push(Reverse((kk, k, m)));
                }
            }
        }
        w.rescan(j);
        if let Some((kk, m)) = w.nearest[j] {
            heap.push(Reverse((kk, j, m)));
        }
    }
    Ok(Dendrogram {
        leaves: d.places.clone(),
        merges,
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CommunityAssignment {
    pub places: Vec<PlaceCode>,
    /// Community of `places[i]`, in `[0, k)`. Ids are ordered by each
    /// community's smallest member code.
    pub community: Vec<usize>,
    pub k: usize,
}

impl CommunityAssignment {
    pub fn get(&self, place: &str) -> Option<usize> {
        self.places
            .binary_search_by(|p| (**p).cmp(place))
            .ok()
            .map(|i| self.community[i])
    }

    pub fn write_csv<W: Write>(&self, mut out: W, comment: Option<&str>) -> Result<()> {
        if let Some(c) = comment {
            writeln!(out, "# {c}")?;
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["place", "community"])?;
        for (p, c) in self.places.iter().zip(&self.community) {
            w.write_record([&**p, c.to_string().as_str()])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Stops merging at `k` clusters.
pub fn cut(dendro: &Dendrogram, k: usize) -> Result<CommunityAssignment> {
    let n = dendro.leaves.len();
    if k < 1 || k > n {
        return Err(Error::InvalidK { k, n });
    }
    let mut parent: Vec<usize> = (0..n).collect();
    let mut rep: Vec<usize> = (0..n).collect();
    for m in &dendro.merges[..n - k] {
        let (a, b) = (find(&mut parent, rep[m.cluster_a]), find(&mut parent, rep[m.cluster_b]));
        let root = a.min(b);
        parent[a.max(b)] = root;
        rep.push(root);
    }
    let mut ids: HashMap<usize, usize> = HashMap::new();
    let mut community = Vec::with_capacity(n);
    for leaf in 0..n {
        let root = find(&mut parent, leaf);
        let next = ids.len();
        community.push(*ids.entry(root).or_insert(next));
    }
    Ok(CommunityAssignment {
        places: dendro.leaves.clone(),
        community,
        k,
    })
}

/// Adjusted Rand index between two labelings of the same items.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len(), "labelings must cover the same items");
    let n = a.len() as f64;
    let c2 = |x: f64| x * (x - 1.0) / 2.0;
    let mut table: HashMap<(usize, usize), f64> = HashMap::new();
    let mut ra: HashMap<usize, f64> = HashMap::new();
    let mut rb: HashMap<usize, f64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1.0;
        *ra.entry(x).or_default() += 1.0;
        *rb.entry(y).or_default() += 1.0;
    }
    let index: f64 = table.values().map(|&v| c2(v)).sum();
    let sa: f64 = ra.values().map(|&v| c2(v)).sum();
    let sb: f64 = rb.values().map(|&v| c2(v)).sum();
    let expected = sa * sb / c2(n);
    let max = (sa + sb) / 2.0;
    if max == expected {
        return 1.0;
    }
    (index - expected) / (max - expected)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    fn codes(n: usize) -> Vec<PlaceCode> {
        (0..n).map(|i| Arc::from(format!("p{i:03}"))).collect()
    }

    fn rec(a: &str, b: &str, pci: f64) -> PciRecord {
        PciRecord {
            place_i: Arc::from(a),
            place_j: Arc::from(b),
            users_i: 1,
            users_j: 1,
            shared: 1,
            pci,
            pci_i_to_j: pci,
            pci_j_to_i: pci,
        }
    }

    #[test]
    fn distance_rules() {
        let places = codes(3);
        let m = pci_to_distance(&[rec("p000", "p001", 0.5), rec("p001", "p002", 0.01)], &places);
        assert_eq!(m.get(0, 1), 2.0);
        assert_eq!(m.get(1, 2), 100.0);
        assert_eq!(m.get(0, 2), 1000.0);
        assert_eq!(m.sentinel(), 1000.0);
        let m = pci_to_distance(&[rec("p000", "p001", 1.0)], &places[..2]);
        assert_eq!(m.get(1, 0), 1.0);
    }

    #[test]
    fn two_places() {
        let m = DistanceMatrix::from_fn(codes(2), |_, _| 3.5).unwrap();
        let d = agglomerate(&m).unwrap();
        assert_eq!(
            d.merges(),
            &[Merge {
                cluster_a: 0,
                cluster_b: 1,
                height: 3.5,
                size: 2
            }]
        );
        assert!(agglomerate(&DistanceMatrix::from_fn(codes(1), |_, _| 1.0).unwrap()).is_err());
    }

    #[test]
    fn hand_set_four() {
        // a-b close, c-d close, groups far apart
        let dist = [
            [0.0, 1.0, 5.0, 6.0],
            [1.0, 0.0, 7.0, 8.0],
            [5.0, 7.0, 0.0, 2.0],
            [6.0, 8.0, 2.0, 0.0],
        ];
        let m = DistanceMatrix::from_fn(codes(4), |i, j| dist[i][j]).unwrap();
        let d = agglomerate(&m).unwrap();
        let got: Vec<_> = d
            .merges()
            .iter()
            .map(|m| (m.cluster_a, m.cluster_b, m.height, m.size))
            .collect();
        assert_eq!(got, vec![(0, 1, 1.0, 2), (2, 3, 2.0, 2), (4, 5, 6.5, 4)]);
    }

    #[test]
    fn ties_break_lexicographically() {
        let m = DistanceMatrix::from_fn(codes(3), |_, _| 1.0).unwrap();
        let d = agglomerate(&m).unwrap();
        assert_eq!((d.merges()[0].cluster_a, d.merges()[0].cluster_b), (0, 1));
        assert_eq!((d.merges()[1].cluster_a, d.merges()[1].cluster_b), (2, 3));
    }

    #[test]
    fn cuts() {
        let dist = [
            [0.0, 1.0, 5.0, 6.0],
            [1.0, 0.0, 7.0, 8.0],
            [5.0, 7.0, 0.0, 2.0],
            [6.0, 8.0, 2.0, 0.0],
        ];
        let m = DistanceMatrix::from_fn(codes(4), |i, j| dist[i][j]).unwrap();
        let d = agglomerate(&m).unwrap();
        assert_eq!(cut(&d, 4).unwrap().community, vec![0, 1, 2, 3]);
        assert_eq!(cut(&d, 2).unwrap().community, vec![0, 0, 1, 1]);
        assert_eq!(cut(&d, 1).unwrap().community, vec![0, 0, 0, 0]);
        assert!(cut(&d, 0).is_err());
        assert!(cut(&d, 5).is_err());
        assert_eq!(cut(&d, 2).unwrap().get("p002"), Some(1));
    }

    #[test]
    fn ari() {
        assert_eq!(adjusted_rand_index(&[0, 0, 1, 1], &[1, 1, 0, 0]), 1.0);
        assert!(adjusted_rand_index(&[0, 0, 1, 1], &[0, 1, 0, 1]) < 0.0);
        let v = adjusted_rand_index(&[0, 0, 0, 1, 1, 1], &[0, 0, 1, 1, 2, 2]);
        assert!((v - 0.24242424242424246).abs() < 1e-12);
    }
}
