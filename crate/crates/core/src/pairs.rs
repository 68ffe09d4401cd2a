//! Exact pair-count accumulation shared by shared-user and movement counts.
//!
//! Items are split into contiguous partitions (callers guarantee that one
//! partition boundary never splits a user's contributions), each partition
//! fills its own accumulator, and accumulators merge by addition. Small place
//! universes use a dense upper-triangle array; larger ones a hash map that
//! spills sorted runs to disk above a threshold and is k-way merged at the end.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use crate::error::{Error, Result};
use crate::exec::Exec;

/// Tuning for pair counting. Every setting yields identical counts.
#[derive(Clone, Debug)]
pub struct PairCountOptions {
    pub exec: Exec,
    /// Use a dense triangle when the number of possible pairs is at most this.
    pub dense_limit: usize,
    /// Spill the sparse map to a sorted run once it holds this many pairs.
    pub spill_threshold: Option<usize>,
    /// Directory for spill runs; the system temp dir when unset.
    pub spill_dir: Option<PathBuf>,
}

impl Default for PairCountOptions {
    fn default() -> Self {
        PairCountOptions {
            exec: Exec::default(),
            dense_limit: 1 << 23,
            spill_threshold: None,
            spill_dir: None,
        }
    }
}

/// Canonical pair `(i, j)` with `i < j` and its count.
pub(crate) type PairCount = (u32, u32, u64);

fn key(i: u32, j: u32) -> u64 {
    debug_assert!(i < j);
    ((i as u64) << 32) | j as u64
}

fn unkey(k: u64) -> (u32, u32) {
    ((k >> 32) as u32, k as u32)
}

struct SpillArea {
    dir: tempfile::TempDir,
    threshold: usize,
    next: AtomicUsize,
}

impl SpillArea {
    fn write_run(&self, mut entries: Vec<(u64, u64)>) -> Result<Run> {
        entries.sort_unstable();
        let id = self.next.fetch_add(1, Ordering::Relaxed);
        let path = self.dir.path().join(format!("run-{id:06}.bin"));
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = BufWriter::new(file);
        for (k, c) in &entries {
            w.write_all(&k.to_le_bytes())?;
            w.write_all(&c.to_le_bytes())?;
        }
        w.flush()?;
        Ok(Run::File(path))
    }
}

enum Run {
    Mem(Vec<(u64, u64)>),
    File(PathBuf),
}

enum RunIter {
    Mem(std::vec::IntoIter<(u64, u64)>),
    File(BufReader<File>),
}

impl RunIter {
    fn open(run: Run) -> Result<Self> {
        Ok(match run {
            Run::Mem(v) => RunIter::Mem(v.into_iter()),
            Run::File(p) => RunIter::File(BufReader::new(File::open(&p).map_err(|e| Error::io(&p, e))?)),
        })
    }

    fn next(&mut self) -> Result<Option<(u64, u64)>> {
        match self {
            RunIter::Mem(it) => Ok(it.next()),
            RunIter::File(r) => {
                let mut buf = [0u8; 16];
                match r.read_exact(&mut buf) {
                    Ok(()) => Ok(Some((
                        u64::from_le_bytes(buf[..8].try_into().expect("8 bytes")),
                        u64::from_le_bytes(buf[8..].try_into().expect("8 bytes")),
                    ))),
                    Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => Ok(None),
                    Err(e) => Err(e.into()),
                }
            }
        }
    }
}

pub(crate) struct PairAcc<'a> {
    n: usize,
    dense: Option<Vec<u64>>,
    map: HashMap<u64, u64>,
    runs: Vec<Run>,
    spill: Option<&'a SpillArea>,
    err: Option<Error>,
}

impl<'a> PairAcc<'a> {
    fn new(n: usize, dense: bool, spill: Option<&'a SpillArea>) -> Self {
        PairAcc {
            n,
            dense: dense.then(|| vec![0u64; n * n.saturating_sub(1) / 2]),
            map: HashMap::new(),
            runs: Vec::new(),
            spill,
            err: None,
        }
    }

    fn tri(&self, i: u32, j: u32) -> usize {
        let (i, j) = (i as usize, j as usize);
        i * self.n - i * (i + 1) / 2 + (j - i - 1)
    }

    /// Adds `count` to the unordered pair {a, b}; `a != b`.
    pub(crate) fn add(&mut self, a: u32, b: u32, count: u64) {
        let (i, j) = if a < b { (a, b) } else { (b, a) };
        let t = self.tri(i, j);
        if let Some(dense) = &mut self.dense {
            dense[t] += count;
            return;
        }
        *self.map.entry(key(i, j)).or_insert(0) += count;
        self.maybe_spill();
    }

    /// Adds 1 for every unordered pair of a sorted, distinct place list.
    pub(crate) fn add_all_pairs(&mut self, places: &[u32]) {
        for (x, &i) in places.iter().enumerate() {
            for &j in &places[x + 1..] {
                self.add(i, j, 1);
            }
        }
    }

    fn maybe_spill(&mut self) {
        let Some(area) = self.spill else { return };
        if self.map.len() < area.threshold || self.err.is_some() {
            return;
        }
        let entries: Vec<(u64, u64)> = self.map.drain().collect();
        match area.write_run(entries) {
            Ok(run) => self.runs.push(run),
            Err(e) => self.err = Some(e),
        }
    }

    fn merge(mut self, mut other: PairAcc<'a>) -> Self {
        if self.err.is_none() {
            self.err = other.err.take();
        }
        if let (Some(a), Some(b)) = (self.dense.as_mut(), other.dense.as_ref()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += *y;
            }
            return self;
        }
        if other.map.len() > self.map.len() {
            std::mem::swap(&mut self.map, &mut other.map);
        }
        for (k, c) in other.map {
            *self.map.entry(k).or_insert(0) += c;
        }
        self.runs.append(&mut other.runs);
        self.maybe_spill();
        self
    }

    fn finish(self) -> Result<Vec<PairCount>> {
        if let Some(e) = self.err {
            return Err(e);
        }
        if let Some(dense) = self.dense {
            let n = self.n;
            let mut out = Vec::new();
            let mut t = 0;
            for i in 0..n {
                for j in i + 1..n {
                    if dense[t] > 0 {
                        out.push((i as u32, j as u32, dense[t]));
                    }
                    t += 1;
                }
            }
            return Ok(out);
        }
        let mut last: Vec<(u64, u64)> = self.map.into_iter().collect();
        last.sort_unstable();
        if self.runs.is_empty() {
            return Ok(last
                .into_iter()
                .map(|(k, c)| {
                    let (i, j) = unkey(k);
                    (i, j, c)
                })
                .collect());
        }
        let mut runs = self.runs;
        runs.push(Run::Mem(last));
        merge_runs(runs)
    }
}

fn merge_runs(runs: Vec<Run>) -> Result<Vec<PairCount>> {
    let mut iters = runs.into_iter().map(RunIter::open).collect::<Result<Vec<_>>>()?;
    let mut heap = BinaryHeap::new();
    for (r, it) in iters.iter_mut().enumerate() {
        if let Some((k, c)) = it.next()? {
            heap.push(Reverse((k, r, c)));
        }
    }
    let mut out: Vec<PairCount> = Vec::new();
    let mut current: Option<(u64, u64)> = None;
    while let Some(Reverse((k, r, c))) = heap.pop() {
        match current.as_mut() {
            Some((ck, cc)) if *ck == k => *cc += c,
            _ => {
                if let Some((ck, cc)) = current.take() {
                    let (i, j) = unkey(ck);
                    out.push((i, j, cc));
                }
                current = Some((k, c));
            }
        }
        if let Some((k2, c2)) = iters[r].next()? {
            heap.push(Reverse((k2, r, c2)));
        }
    }
    if let Some((ck, cc)) = current {
        let (i, j) = unkey(ck);
        out.push((i, j, cc));
    }
    Ok(out)
}

/// Counts pairs over `n` places. `feed` is called once per item; items are
/// partitioned contiguously, so callers group each user's work into one item.
pub(crate) fn count_pairs<T, F>(n: usize, items: &[T], opts: &PairCountOptions, feed: F) -> Result<Vec<PairCount>>
where
    T: Sync,
    F: Fn(&T, &mut PairAcc<'_>) + Sync + Send,
{
    let possible = n * n.saturating_sub(1) / 2;
    let dense = possible <= opts.dense_limit;
    let spill = match (dense, opts.spill_threshold) {
        (false, Some(threshold)) => {
            let dir = match &opts.spill_dir {
                Some(d) => tempfile::Builder::new().prefix("pairs-").tempdir_in(d),
                None => tempfile::Builder::new().prefix("pairs-").tempdir(),
            }
            .map_err(|e| Error::io(opts.spill_dir.as_deref().unwrap_or(Path::new("<tmp>")), e))?;
            Some(SpillArea {
                dir,
                threshold: threshold.max(1),
                next: AtomicUsize::new(0),
            })
        }
        _ => None,
    };
    let spill = spill.as_ref();
    let parts = if dense {
        opts.exec.threads().min(items.len()).max(1)
    } else {
        opts.exec.partitions(items.len())
    };
    let chunk = items.len().div_ceil(parts).max(1);
    let slices: Vec<&[T]> = items.chunks(chunk).collect();
    let accs = opts.exec.map(&slices, |slice| {
        let mut acc = PairAcc::new(n, dense, spill);
        for item in slice.iter() {
            feed(item, &mut acc);
        }
        acc
    });
    let acc = accs
        .into_iter()
        .reduce(PairAcc::merge)
        .unwrap_or_else(|| PairAcc::new(n, dense, spill));
    acc.finish()
}
