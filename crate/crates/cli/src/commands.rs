//! Command implementations. Every output opens with the `#` header line
//! (CSV) or carries `generator` and `config_hash` fields (JSON).

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use placeconn::aggregate::{presence_to_days, shared_users_with, unique_users, PairCountOptions};
use placeconn::analytics::{
    decay_fit, focal_regression, join_pairs, joined_correlation, ols, per_place_correlation, read_covariate_csv,
    read_pair_values_csv, render_table, same_region_dummy, PairValue, RegressionResult, Transform,
};
use placeconn::clustering::{agglomerate, cut, pci_to_distance, CommunityAssignment};
use placeconn::connectivity::{format_sig, pci_matrix, read_pci_csv, write_pci_csv, PciRecord};
use placeconn::export::{
    communities_geojson, header_comment, read_place_values_csv, values_geojson, write_days_csv,
    write_place_correlations_csv, write_shared_csv, write_users_csv,
};
use placeconn::ingest::{IngestOptions, Ingestor, SourceWhitelist};
use placeconn::movement::{
    person_day_movements_with, person_day_transitions, read_flows_csv, read_od_csv, symmetrize_flows, write_od_csv,
};
use placeconn::presence::{PlaceCode, PresenceTable, VisitLog};
use placeconn::registry::{centroid_distance, load_registry, PlaceRegistry};
use placeconn::Exec;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{RunConfig, SharedFlags, Whitelist};
use crate::{CliError, Command};

type Outcome = Result<Vec<String>, CliError>;

const VERSION: &str = env!("CARGO_PKG_VERSION");
/// Lines handed to the ingester per batch.
const BATCH_LINES: usize = 1 << 18;

struct Ctx {
    cfg: RunConfig,
    hash: String,
}

impl Ctx {
    fn comment(&self) -> String {
        header_comment(VERSION, &self.hash)
    }

    fn out_path(&self, name: &str) -> PathBuf {
        self.cfg.out.join(name)
    }

    fn create(&self, name: &str) -> Result<BufWriter<File>, CliError> {
        let path = self.out_path(name);
        File::create(&path)
            .map(BufWriter::new)
            .map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))
    }

    fn write_with(
        &self,
        name: &str,
        f: impl FnOnce(&mut BufWriter<File>, &str) -> placeconn::Result<()>,
    ) -> Result<(), CliError> {
        let mut w = self.create(name)?;
        f(&mut w, &self.comment())?;
        w.flush().map_err(|e| CliError::Data(format!("{name}: {e}")))
    }

    fn write_json(&self, name: &str, body: Value) -> Result<(), CliError> {
        let mut doc = json!({ "generator": format!("placeconn {VERSION}"), "config_hash": self.hash });
        if let (Value::Object(d), Value::Object(b)) = (&mut doc, body) {
            d.extend(b);
        }
        let mut text = serde_json::to_string_pretty(&doc).map_err(|e| CliError::Data(e.to_string()))?;
        text.push('\n');
        let mut w = self.create(name)?;
        w.write_all(text.as_bytes())
            .and_then(|_| w.flush())
            .map_err(|e| CliError::Data(format!("{name}: {e}")))
    }

    fn write_text(&self, name: &str, text: &str) -> Result<(), CliError> {
        let mut w = self.create(name)?;
        w.write_all(text.as_bytes())
            .and_then(|_| w.flush())
            .map_err(|e| CliError::Data(format!("{name}: {e}")))
    }

    fn pair_opts(&self) -> PairCountOptions {
        PairCountOptions {
            spill_threshold: self.cfg.spill_threshold,
            spill_dir: Some(self.cfg.out.clone()),
            ..PairCountOptions::default()
        }
    }

    fn registry(&self) -> Result<PlaceRegistry, CliError> {
        if self.cfg.registry.is_empty() {
            return Err(CliError::Config("this command needs --registry".into()));
        }
        let mut merged: Option<PlaceRegistry> = None;
        for path in &self.cfg.registry {
            let r = load_registry(path, self.cfg.level)?;
            merged = Some(match merged {
                None => r,
                Some(m) => m.merge(r)?,
            });
        }
        Ok(merged.unwrap_or_default())
    }

    /// Input path given by flag, or the named file in the output directory.
    fn input(&self, given: &Option<PathBuf>, default: &str) -> PathBuf {
        given.clone().unwrap_or_else(|| self.out_path(default))
    }
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))
}

fn with_path<T>(path: &Path, r: placeconn::Result<T>) -> Result<T, CliError> {
    r.map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn read_presence(path: &Path) -> Result<PresenceTable, CliError> {
    with_path(path, PresenceTable::read_csv(open(path)?))
}

fn read_pci(path: &Path) -> Result<Vec<PciRecord>, CliError> {
    with_path(path, read_pci_csv(open(path)?))
}

/// Loads any supported pair dataset, recognised by its header row.
fn read_pairs(path: &Path) -> Result<Vec<PairValue>, CliError> {
    let mut text = String::new();
    open(path)?
        .read_to_string(&mut text)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let header = text
        .lines()
        .find(|l| !l.starts_with('#'))
        .unwrap_or_default()
        .split(',')
        .map(str::trim)
        .collect::<Vec<_>>();
    if header.contains(&"shared_users") {
        Ok(PairValue::from_pci(&with_path(path, read_pci_csv(text.as_bytes()))?))
    } else if header.contains(&"person_days") {
        Ok(PairValue::from_movements(&with_path(
            path,
            read_od_csv(text.as_bytes()),
        )?))
    } else {
        with_path(path, read_pair_values_csv(text.as_bytes()))
    }
}

fn arg(p: &Option<PathBuf>) -> Value {
    p.as_ref()
        .map_or(Value::Null, |p| Value::String(p.display().to_string()))
}

fn init_threads(threads: Option<usize>) -> Result<(), CliError> {
    #[cfg(feature = "parallel")]
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    #[cfg(not(feature = "parallel"))]
    let _ = threads;
    Ok(())
}

pub fn run(flags: &SharedFlags, command: Command) -> Outcome {
    let events = match &command {
        Command::Ingest { events } => events.clone(),
        _ => Vec::new(),
    };
    let cfg = RunConfig::resolve(flags, &events)?;
    init_threads(cfg.threads)?;
    std::fs::create_dir_all(&cfg.out)
        .map_err(|e| CliError::Config(format!("cannot create output directory {}: {e}", cfg.out.display())))?;
    let (name, extra) = match &command {
        Command::Ingest { .. } => ("ingest", json!({})),
        Command::Pci { presence, tables } => ("pci", json!({ "presence": arg(presence), "tables": tables })),
        Command::Movement {
            presence,
            visits,
            flows,
        } => (
            "movement",
            json!({ "presence": arg(presence), "visits": arg(visits), "flows": arg(flows) }),
        ),
        Command::Cluster { pci } => ("cluster", json!({ "pci": arg(pci) })),
        Command::Correlate { a, b, raw } => (
            "correlate",
            json!({ "a": a.display().to_string(), "b": b.display().to_string(), "raw": raw }),
        ),
        Command::Regress {
            pci,
            covariates,
            focal,
            pairs,
        } => (
            "regress",
            json!({ "pci": arg(pci), "covariates": arg(covariates), "focal": focal, "pairs": arg(pairs) }),
        ),
        Command::Decay {
            pci,
            cross_region,
            per_place,
        } => (
            "decay",
            json!({ "pci": arg(pci), "cross_region": cross_region, "per_place": per_place }),
        ),
        Command::ExportGeojson { communities, values } => (
            "export-geojson",
            json!({ "communities": arg(communities), "values": arg(values) }),
        ),
        Command::Report => ("report", json!({})),
    };
    let hash = cfg.hash(name, &extra);
    let ctx = Ctx { cfg, hash };
    match command {
        Command::Ingest { .. } => ingest(&ctx),
        Command::Pci { presence, tables } => pci(&ctx, &presence, tables),
        Command::Movement {
            presence,
            visits,
            flows,
        } => movement(&ctx, &presence, &visits, &flows),
        Command::Cluster { pci } => cluster(&ctx, &pci),
        Command::Correlate { a, b, raw } => correlate(&ctx, &a, &b, raw),
        Command::Regress {
            pci,
            covariates,
            focal,
            pairs,
        } => regress(&ctx, &pci, &covariates, focal.as_deref(), &pairs),
        Command::Decay {
            pci,
            cross_region,
            per_place,
        } => decay(&ctx, &pci, cross_region, per_place),
        Command::ExportGeojson { communities, values } => export_geojson(&ctx, &communities, &values),
        Command::Report => report_html(&ctx),
    }
}

fn ingest(ctx: &Ctx) -> Outcome {
    let cfg = &ctx.cfg;
    if cfg.events.is_empty() {
        return Err(CliError::Config("ingest needs at least one event file".into()));
    }
    let registry = ctx.registry()?;
    let mut opts = IngestOptions::new(cfg.level);
    opts.window = cfg.date_window();
    opts.keep_visits = cfg.transitions;
    opts.exec = Exec::Parallel;
    opts.whitelist = match &cfg.whitelist {
        Whitelist::Builtin => Some(SourceWhitelist::human_sources()),
        Whitelist::Disabled => None,
        Whitelist::File(p) => Some(SourceWhitelist::load(p).map_err(|e| CliError::Config(e.to_string()))?),
    };
    let mut ing = Ingestor::new(&registry, opts);
    for path in &cfg.events {
        let reader: Box<dyn BufRead> = if path.as_os_str() == "-" {
            Box::new(BufReader::new(std::io::stdin()))
        } else {
            Box::new(open(path)?)
        };
        let mut batch = Vec::with_capacity(BATCH_LINES);
        for line in reader.lines() {
            batch.push(line.map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?);
            if batch.len() == BATCH_LINES {
                ing.push_lines(&batch);
                batch.clear();
            }
        }
        ing.push_lines(&batch);
    }
    let out = ing.finish();
    ctx.write_with("presence.csv", |w, c| out.presence.write_csv(w, Some(c)))?;
    if let Some(v) = &out.visits {
        ctx.write_with("visits.csv", |w, c| v.write_csv(w, Some(c)))?;
    }
    let failures: Vec<Value> = out
        .failures
        .iter()
        .map(|f| json!({ "line": f.line, "error": f.kind.to_string() }))
        .collect();
    ctx.write_json(
        "ingest_report.json",
        json!({ "report": out.report, "rejected": out.report.rejected(), "parse_failures": failures }),
    )?;
    let mut warnings = Vec::new();
    if out.report.rejected_parse > 0 {
        warnings.push(format!(
            "{} malformed event line(s) skipped; see ingest_report.json",
            out.report.rejected_parse
        ));
    }
    Ok(warnings)
}

fn pci(ctx: &Ctx, presence: &Option<PathBuf>, tables: bool) -> Outcome {
    let table = read_presence(&ctx.input(presence, "presence.csv"))?;
    let opts = ctx.pair_opts();
    let records = pci_matrix(&table, &opts, ctx.cfg.include_self)?;
    ctx.write_with("pci.csv", |w, c| write_pci_csv(&records, w, Some(c)))?;
    if tables {
        let shared = shared_users_with(&table, &opts)?;
        ctx.write_with("days.csv", |w, c| write_days_csv(&presence_to_days(&table), w, Some(c)))?;
        ctx.write_with("users.csv", |w, c| write_users_csv(&unique_users(&table), w, Some(c)))?;
        ctx.write_with("shared.csv", |w, c| write_shared_csv(&shared, w, Some(c)))?;
    }
    Ok(Vec::new())
}

fn movement(ctx: &Ctx, presence: &Option<PathBuf>, visits: &Option<PathBuf>, flows: &Option<PathBuf>) -> Outcome {
    let opts = ctx.pair_opts();
    let rows = if let Some(path) = flows {
        let flows = with_path(path, read_flows_csv(open(path)?))?;
        symmetrize_flows(&flows, &ctx.registry()?, ctx.cfg.level, ctx.cfg.date_window())?
    } else if ctx.cfg.transitions {
        let path = ctx.input(visits, "visits.csv");
        let log = with_path(&path, VisitLog::read_csv(open(&path)?))?;
        person_day_transitions(&log, &opts)?
    } else {
        person_day_movements_with(&read_presence(&ctx.input(presence, "presence.csv"))?, &opts)?
    };
    ctx.write_with("od.csv", |w, c| write_od_csv(&rows, w, Some(c)))?;
    Ok(Vec::new())
}

/// Places named in a PCI matrix, sorted and unique.
fn matrix_places(records: &[PciRecord]) -> Vec<PlaceCode> {
    let mut places: Vec<PlaceCode> = records
        .iter()
        .flat_map(|r| [r.place_i.clone(), r.place_j.clone()])
        .collect();
    places.sort();
    places.dedup();
    places
}

fn cluster(ctx: &Ctx, pci: &Option<PathBuf>) -> Outcome {
    let records = read_pci(&ctx.input(pci, "pci.csv"))?;
    let places = matrix_places(&records);
    let dendro = agglomerate(&pci_to_distance(&records, &places))?;
    ctx.write_with("dendrogram.csv", |w, c| dendro.write_csv(w, Some(c)))?;
    let n = places.len();
    let mut ks = ctx.cfg.k.clone();
    ks.sort_unstable();
    ks.dedup();
    if let Some(&bad) = ks.iter().find(|&&k| k == 0 || k > n) {
        return Err(CliError::Config(format!("--k {bad} out of range for {n} places")));
    }
    for k in ks {
        let a = cut(&dendro, k)?;
        ctx.write_with(&format!("communities_k{k}.csv"), |w, c| a.write_csv(w, Some(c)))?;
    }
    Ok(Vec::new())
}

fn correlate(ctx: &Ctx, a: &Path, b: &Path, raw: bool) -> Outcome {
    let (va, vb) = (read_pairs(a)?, read_pairs(b)?);
    let transform = if raw {
        Transform::Identity
    } else {
        Transform::Log10 { scale: ctx.cfg.scale }
    };
    let joined = join_pairs(&va, &vb);
    let mut warnings = Vec::new();
    let r = match joined_correlation(&joined, transform) {
        Ok(r) => Some(r),
        Err(e) => {
            warnings.push(format!("no overall correlation: {e}"));
            None
        }
    };
    let per_place = per_place_correlation(&va, &vb, transform, Exec::Parallel);
    ctx.write_with("place_correlation.csv", |w, c| {
        write_place_correlations_csv(&per_place, w, Some(c))
    })?;
    ctx.write_json(
        "correlation.json",
        json!({
            "transform": transform,
            "r": r,
            "pairs": joined.keys.len(),
            "excluded_nonpositive": joined.excluded_nonpositive,
            "unmatched": joined.unmatched,
            "places": per_place.r.len(),
            "omitted": per_place.omitted,
        }),
    )?;
    Ok(warnings)
}

/// Regression output without the residual vector.
#[derive(Serialize)]
struct Report<'a> {
    model: &'a str,
    coefficients: &'a [placeconn::analytics::Coefficient],
    r2: f64,
    adj_r2: f64,
    n: usize,
    df_resid: usize,
    rss: f64,
}

fn report<'a>(model: &'a str, fit: &'a RegressionResult) -> Report<'a> {
    Report {
        model,
        coefficients: &fit.coefficients,
        r2: fit.r2,
        adj_r2: fit.adj_r2,
        n: fit.n,
        df_resid: fit.df_resid,
        rss: fit.rss,
    }
}

fn regress(
    ctx: &Ctx,
    pci: &Option<PathBuf>,
    covariates: &Option<PathBuf>,
    focal: Option<&str>,
    pairs: &Option<PathBuf>,
) -> Outcome {
    let cfg = &ctx.cfg;
    let (title, fit) = match (covariates, focal) {
        (Some(path), Some(focal)) => {
            let table = with_path(path, read_covariate_csv(open(path)?))?;
            let values = read_pairs(&ctx.input(&pairs.clone().or_else(|| pci.clone()), "pci.csv"))?;
            let name = format!("log10_value_x{}", cfg.scale);
            let fit = focal_regression(&table, &values, focal, &name, Transform::Log10 { scale: cfg.scale })?;
            (table.outcome.clone(), fit)
        }
        (Some(path), None) => {
            let table = with_path(path, read_covariate_csv(open(path)?))?;
            let y: Vec<f64> = table.rows.values().map(|v| v[0]).collect();
            let cols: Vec<Vec<f64>> = (1..=table.covariates.len())
                .map(|c| table.rows.values().map(|v| v[c]).collect())
                .collect();
            let preds: Vec<(&str, &[f64])> = table
                .covariates
                .iter()
                .map(String::as_str)
                .zip(cols.iter().map(Vec::as_slice))
                .collect();
            (table.outcome.clone(), ols(&y, &preds)?)
        }
        (None, _) => {
            let records = read_pci(&ctx.input(pci, "pci.csv"))?;
            let registry = ctx.registry()?;
            let records: Vec<&PciRecord> = records.iter().filter(|r| r.place_i != r.place_j).collect();
            let keys: Vec<(&str, &str)> = records.iter().map(|r| (&*r.place_i, &*r.place_j)).collect();
            let same = same_region_dummy(&keys, &registry, cfg.level, cfg.region_level)?;
            let dist = distances(&registry, ctx, &keys)?;
            let y: Vec<f64> = records.iter().map(|r| r.pci * cfg.scale).collect();
            let same: Vec<f64> = same.into_iter().map(f64::from).collect();
            let fit = ols(&y, &[("same_region", &same), ("distance", &dist)])?;
            (format!("PCI x {}", cfg.scale), fit)
        }
    };
    ctx.write_json(
        "regression.json",
        serde_json::to_value(report(&title, &fit)).expect("plain data"),
    )?;
    ctx.write_text(
        "regression.txt",
        &format!("# {}\n{}", ctx.comment(), render_table(&[(&title, &fit)])),
    )?;
    Ok(Vec::new())
}

/// Centroid distance in miles for each pair.
fn distances(registry: &PlaceRegistry, ctx: &Ctx, keys: &[(&str, &str)]) -> Result<Vec<f64>, CliError> {
    let level = ctx.cfg.level;
    let place = |c: &str| {
        registry
            .place(level, c)
            .ok_or_else(|| CliError::Data(format!("place {c:?} not in the {} registry", level.as_str())))
    };
    keys.iter()
        .map(|(a, b)| Ok(centroid_distance(place(a)?, place(b)?)))
        .collect()
}

fn decay(ctx: &Ctx, pci: &Option<PathBuf>, cross_region: bool, per_place: bool) -> Outcome {
    let cfg = &ctx.cfg;
    let records = read_pci(&ctx.input(pci, "pci.csv"))?;
    let registry = ctx.registry()?;
    let mut keys: Vec<(&str, &str)> = Vec::new();
    let mut values = Vec::new();
    for r in records.iter().filter(|r| r.place_i != r.place_j && r.pci > 0.0) {
        keys.push((&*r.place_i, &*r.place_j));
        values.push(r.pci);
    }
    if cross_region {
        let same = same_region_dummy(&keys, &registry, cfg.level, cfg.region_level)?;
        let mut s = same.iter();
        keys.retain(|_| *s.next().expect("same length") == 0);
        let mut s = same.iter();
        values.retain(|_| *s.next().expect("same length") == 0);
    }
    let dist = distances(&registry, ctx, &keys)?;
    let fit = decay_fit(&values, &dist)?;
    let mut warnings = Vec::new();
    if per_place {
        let mut by_place: BTreeMap<&str, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
        for ((a, b), (v, d)) in keys.iter().zip(values.iter().zip(&dist)) {
            for p in [a, b] {
                let e = by_place.entry(p).or_default();
                e.0.push(*v);
                e.1.push(*d);
            }
        }
        let mut w = ctx.create("decay_by_place.csv")?;
        let mut body = format!("# {}\nplace,a,b,r2,n\n", ctx.comment());
        let mut skipped = 0;
        for (place, (v, d)) in by_place {
            match decay_fit(&v, &d) {
                Ok(f) => body.push_str(&format!(
                    "{place},{},{},{},{}\n",
                    format_sig(f.a, 6),
                    format_sig(f.b, 6),
                    format_sig(f.r2, 6),
                    f.n
                )),
                Err(_) => skipped += 1,
            }
        }
        w.write_all(body.as_bytes())
            .and_then(|_| w.flush())
            .map_err(|e| CliError::Data(e.to_string()))?;
        if skipped > 0 {
            warnings.push(format!(
                "{skipped} place(s) had too few usable partners for a decay fit"
            ));
        }
    }
    ctx.write_json("decay.json", json!({ "cross_region_only": cross_region, "fit": fit }))?;
    Ok(warnings)
}

fn export_geojson(ctx: &Ctx, communities: &Option<PathBuf>, values: &Option<PathBuf>) -> Outcome {
    let registry = ctx.registry()?;
    let level = ctx.cfg.level;
    let (source, text) = match (communities, values) {
        (Some(path), _) => {
            let map = with_path(path, read_place_values_csv(open(path)?))?;
            let places: Vec<PlaceCode> = map.keys().map(|k| Arc::from(k.as_str())).collect();
            let mut community = Vec::with_capacity(map.len());
            for (place, v) in &map {
                if v.fract() != 0.0 || *v < 0.0 {
                    return Err(CliError::Data(format!(
                        "{}: community of {place:?} is not an id",
                        path.display()
                    )));
                }
                community.push(*v as usize);
            }
            let k = community.iter().max().map_or(0, |m| m + 1);
            let a = CommunityAssignment { places, community, k };
            (path, communities_geojson(&a, &registry, level)?)
        }
        (None, Some(path)) => {
            let map = with_path(path, read_place_values_csv(open(path)?))?;
            (path, values_geojson(&map, &registry, level)?)
        }
        (None, None) => return Err(CliError::Config("give --communities or --values".into())),
    };
    // GeoJSON has no comment syntax; the header rides as foreign members.
    let mut doc: Value = serde_json::from_str(&text).map_err(|e| CliError::Data(e.to_string()))?;
    if let Value::Object(m) = &mut doc {
        m.insert("generator".into(), format!("placeconn {VERSION}").into());
        m.insert("config_hash".into(), ctx.hash.clone().into());
    }
    let stem = source
        .file_stem()
        .map_or("export".into(), |s| s.to_string_lossy().into_owned());
    ctx.write_text(&format!("{stem}.geojson"), &format!("{doc}\n"))?;
    Ok(Vec::new())
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// One section per known output present in the output directory.
fn report_html(ctx: &Ctx) -> Outcome {
    let dir = &ctx.cfg.out;
    let read = |name: &str| std::fs::read_to_string(dir.join(name)).ok();
    let rows = |text: &str| text.lines().filter(|l| !l.starts_with('#')).count().saturating_sub(1);
    let mut sections = Vec::new();
    if let Some(t) = read("ingest_report.json") {
        sections.push(("Ingest", format!("<pre>{}</pre>", escape(&t))));
    }
    for (name, what) in [
        ("pci.csv", "place pairs"),
        ("od.csv", "movement pairs"),
        ("dendrogram.csv", "merges"),
    ] {
        if let Some(t) = read(name) {
            sections.push((name, format!("<p>{} {what}</p>", rows(&t))));
        }
    }
    let mut cuts: Vec<(usize, String)> = std::fs::read_dir(dir)
        .map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?
        .filter_map(|e| {
            let name = e.ok()?.file_name().into_string().ok()?;
            let k = name.strip_prefix("communities_k")?.strip_suffix(".csv")?.parse().ok()?;
            Some((k, name))
        })
        .collect();
    cuts.sort();
    for (k, name) in cuts {
        if let Some(t) = read(&name) {
            sections.push(("Communities", format!("<p>k = {k}: {} places ({name})</p>", rows(&t))));
        }
    }
    for (name, title) in [("correlation.json", "Correlation"), ("decay.json", "Distance decay")] {
        if let Some(t) = read(name) {
            sections.push((title, format!("<pre>{}</pre>", escape(&t))));
        }
    }
    if let Some(t) = read("regression.txt") {
        sections.push(("Regression", format!("<pre>{}</pre>", escape(&t))));
    }
    let mut html = format!(
        "<!DOCTYPE html>\n<!-- {} -->\n<html><head><meta charset=\"utf-8\"><title>placeconn report</title></head><body>\n<h1>placeconn report</h1>\n",
        ctx.comment()
    );
    for (title, body) in &sections {
        html.push_str(&format!("<h2>{}</h2>\n{body}\n", escape(title)));
    }
    html.push_str("</body></html>\n");
    ctx.write_text("report.html", &html)?;
    if sections.is_empty() {
        return Ok(vec![format!("no pipeline outputs found in {}", dir.display())]);
    }
    Ok(Vec::new())
}
