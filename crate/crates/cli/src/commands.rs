use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use yada_core::ingest::{self, IngestError, LoadReport, LoadedSource, ReplaySchedule};
use yada_core::pathsel::{parse_selection, SelectionSet};
use yada_core::twinsync::{
    check_comparable, run, write_metrics_csv, ComparisonReport, ComparisonRow, EventLog,
    MetricsRecord, Mode, SimConfig, COMPARISON_HEADER,
};
use yada_core::{bind, evaluate, parse_path, parse_schema, DataTree, SchemaModule};

use crate::config::{LoadedConfig, SimSection};
use crate::CliError;

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => CliError::Parse(format!("{}: file not found", path.display())),
        _ => CliError::Parse(format!("{}: {e}", path.display())),
    })
}

fn load_schema(path: &Path) -> Result<Arc<SchemaModule>, CliError> {
    let text = read_text(path)?;
    parse_schema(&text)
        .map(Arc::new)
        .map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))
}

fn load_data(schema: &Arc<SchemaModule>, path: &Path) -> Result<DataTree, CliError> {
    let text = read_text(path)?;
    DataTree::from_json(Arc::clone(schema), &text)
        .map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Config(format!("{}: {e}", path.display()))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> CliError + '_ {
    move |e| CliError::Config(format!("{}: {e}", path.display()))
}

/// Canonical text of a schema file.
pub fn cmd_compile(schema_file: &Path) -> Result<String, CliError> {
    Ok(load_schema(schema_file)?.print())
}

/// Checks a schema and, when given, instance documents against it.
pub fn cmd_validate(schema_file: &Path, data_files: &[PathBuf]) -> Result<String, CliError> {
    let schema = load_schema(schema_file)?;
    let mut out = format!(
        "schema {}: ok ({} value leaves)\n",
        schema.name,
        schema.leaf_paths().len()
    );
    let mut failures = Vec::new();
    for f in data_files {
        let tree = load_data(&schema, f)?;
        let report = tree.validate();
        if report.is_valid() {
            writeln!(out, "{}: ok ({} leaves)", f.display(), tree.leaf_count()).unwrap();
        } else {
            for v in &report.violations {
                failures.push(format!("{}: {v}", f.display()));
            }
        }
    }
    if failures.is_empty() {
        Ok(out)
    } else {
        Err(CliError::Parse(failures.join("\n")))
    }
}

/// `path = value` for each leaf matched by `path_text`.
pub fn cmd_query(schema_file: &Path, data_file: &Path, path_text: &str) -> Result<String, CliError> {
    let schema = load_schema(schema_file)?;
    let tree = load_data(&schema, data_file)?;
    let expr = parse_path(path_text).map_err(|e| CliError::Parse(format!("path `{path_text}`: {e}")))?;
    let bound = bind(&expr, &schema).map_err(|e| CliError::Parse(format!("path `{path_text}`: {e}")))?;
    let mut out = String::new();
    for p in evaluate(&tree, &bound) {
        let v = tree.get(&p).expect("evaluate returns present leaves");
        writeln!(out, "{p} = {v}").unwrap();
    }
    Ok(out)
}

fn ingest_err(e: IngestError) -> CliError {
    match e {
        IngestError::InsufficientRows { .. } | IngestError::EmptyFile { .. } => CliError::UnderRun(e.to_string()),
        other => CliError::Config(other.to_string()),
    }
}

/// Replay corpus built from the configured sources.
pub struct Prepared {
    pub schema: Arc<SchemaModule>,
    pub schedule: ReplaySchedule,
    pub reports: Vec<(String, LoadReport)>,
}

pub fn prepare(loaded: &LoadedConfig) -> Result<Prepared, CliError> {
    let cfg = &loaded.config;
    let schema = load_schema(&cfg.schema_file)?;
    let mut sources: Vec<LoadedSource> = Vec::with_capacity(cfg.ingest.sources.len());
    for s in &cfg.ingest.sources {
        let file = File::open(&s.file).map_err(io_err(&s.file))?;
        let src = ingest::load_csv(BufReader::new(file), &s.mapping()?, &s.spec()?, &schema).map_err(ingest_err)?;
        sources.push(src);
    }
    let readings = ingest::constitute(&sources, cfg.seed).map_err(ingest_err)?;
    let schedule = ingest::schedule(readings, cfg.ingest.inter_reading_gap_ms, cfg.seed).map_err(ingest_err)?;
    let reports = sources.iter().map(|s| (s.spec.source_name.clone(), s.report)).collect();
    Ok(Prepared {
        schema,
        schedule,
        reports,
    })
}

pub struct IngestOutcome {
    pub replay_file: PathBuf,
    pub rows: usize,
    pub reports: Vec<(String, LoadReport)>,
}

impl IngestOutcome {
    pub fn describe(&self) -> String {
        let mut out = String::new();
        for (name, r) in &self.reports {
            writeln!(out, "{name}: read {} rows, kept {}, skipped {}", r.rows_read, r.retained, r.skipped).unwrap();
        }
        writeln!(out, "wrote {} replay rows to {}", self.rows, self.replay_file.display()).unwrap();
        out
    }
}

/// Writes `replay.csv` into the output directory.
pub fn cmd_ingest(loaded: &LoadedConfig) -> Result<IngestOutcome, CliError> {
    let prepared = prepare(loaded)?;
    let dir = &loaded.config.output.dir;
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let replay_file = dir.join("replay.csv");
    let file = File::create(&replay_file).map_err(io_err(&replay_file))?;
    ingest::write_replay_csv(BufWriter::new(file), &prepared.schedule).map_err(|e| CliError::Config(e.to_string()))?;
    Ok(IngestOutcome {
        replay_file,
        rows: prepared.schedule.len(),
        reports: prepared.reports,
    })
}

fn selection(loaded: &LoadedConfig, schema: &SchemaModule) -> Result<SelectionSet, CliError> {
    match &loaded.config.selection_file {
        None => Ok(SelectionSet::everything(schema)),
        Some(path) => {
            let text = read_text(path)?;
            let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("selection");
            parse_selection(name, &text).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))
        }
    }
}

/// Base simulation config from the harness file; mode and node count are
/// set per sweep cell.
pub fn sim_config(loaded: &LoadedConfig, prepared: &Prepared) -> Result<SimConfig, CliError> {
    let cfg = &loaded.config;
    let s = &cfg.sim;
    let mut sim = SimConfig::new(
        Arc::clone(&prepared.schema),
        selection(loaded, &prepared.schema)?,
        Arc::new(prepared.schedule.clone()),
    );
    sim.gateway_batch_size = s.gateway_batch_size;
    sim.gateway_flush_ms = s.gateway_flush_ms;
    sim.monitor_poll_ms = s.monitor_poll_ms;
    sim.staleness_window_ms = s.staleness_window_ms;
    sim.processing_cost_per_leaf_ms = SimSection::decimal("processing_cost_per_leaf_ms", s.processing_cost_per_leaf_ms)?;
    sim.network = s.network()?;
    sim.seed = cfg.seed;
    Ok(sim)
}

pub struct SimulateOutcome {
    pub dir: PathBuf,
    pub report: ComparisonReport,
    pub records: Vec<MetricsRecord>,
}

/// Runs every sweep cell in both modes and writes the result files.
pub fn cmd_simulate(loaded: &LoadedConfig) -> Result<SimulateOutcome, CliError> {
    let prepared = prepare(loaded)?;
    let base = sim_config(loaded, &prepared)?;
    let cells: Vec<SimConfig> = loaded
        .config
        .sweep
        .num_nodes
        .iter()
        .flat_map(|&n| [Mode::WithYada, Mode::WithoutYada].map(|m| base.with_nodes(n).with_mode(m)))
        .collect();
    for pair in cells.chunks(2) {
        check_comparable(&pair[0], &pair[1]).map_err(|e| CliError::Config(e.to_string()))?;
    }
    let results: Vec<_> = std::thread::scope(|scope| {
        let handles: Vec<_> = cells.iter().map(|c| scope.spawn(move || run(c))).collect();
        handles.into_iter().map(|h| h.join().expect("simulation thread")).collect()
    });
    let mut records = Vec::with_capacity(results.len());
    let mut logs: Vec<EventLog> = Vec::with_capacity(results.len());
    for r in results {
        let (m, l) = r.map_err(|e| CliError::Config(e.to_string()))?;
        records.push(m);
        logs.push(l);
    }
    let report = ComparisonReport {
        rows: records
            .chunks(2)
            .map(|p| ComparisonRow::from_records(&p[0], &p[1]))
            .collect(),
    };

    let dir = loaded.config.output.dir.clone();
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let create = |name: &str| -> Result<(PathBuf, BufWriter<File>), CliError> {
        let p = dir.join(name);
        let f = File::create(&p).map_err(io_err(&p))?;
        Ok((p, BufWriter::new(f)))
    };

    let (p, w) = create("comparison.csv")?;
    report.write_csv(w).map_err(csv_err(&p))?;
    let (p, w) = create("metrics.csv")?;
    write_metrics_csv(w, &records).map_err(csv_err(&p))?;

    let (p, w) = create("rtt.csv")?;
    write_rows(w, &["series", "poll_index", "rtt_ms", "payload_bytes"], records.iter().flat_map(|r| r.rtt_rows()))
        .map_err(csv_err(&p))?;
    let (p, w) = create("e2e.csv")?;
    write_rows(w, &["series", "apply_index", "delay_ms"], records.iter().flat_map(|r| r.e2e_rows()))
        .map_err(csv_err(&p))?;
    let (p, w) = create("sync.csv")?;
    write_rows(w, &["series", "t_ms", "score"], records.iter().flat_map(|r| r.sync_rows()))
        .map_err(csv_err(&p))?;

    if loaded.config.output.event_log {
        for (m, log) in records.iter().zip(&logs) {
            let (p, w) = create(&format!("events-{}.csv", m.series_name()))?;
            log.write_csv(w).map_err(csv_err(&p))?;
        }
    }

    let (p, mut w) = create("summary.txt")?;
    w.write_all(summary_text(&prepared, &records).as_bytes())
        .and_then(|_| w.flush())
        .map_err(io_err(&p))?;

    Ok(SimulateOutcome { dir, report, records })
}

fn write_rows<W: Write, const N: usize>(
    w: W,
    header: &[&str],
    rows: impl Iterator<Item = [String; N]>,
) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}

fn summary_text(prepared: &Prepared, records: &[MetricsRecord]) -> String {
    let mut out = String::new();
    writeln!(out, "replay readings: {}", prepared.schedule.len()).unwrap();
    writeln!(out, "replay horizon ms: {}", prepared.schedule.horizon_ms).unwrap();
    for r in records {
        let s = &r.summary;
        writeln!(
            out,
            "num_nodes={} mode={}: mean_rtt_ms={:.6} mean_e2e_ms={:.6} mean_payload_bytes={:.6} sync_score={:.6} applied={} dropped={} polls={}",
            r.num_nodes, r.mode, s.mean_rtt_ms, s.mean_e2e_ms, s.mean_payload_bytes, s.sync_score, s.applied, s.dropped, s.polls
        )
        .unwrap();
    }
    out
}

/// Renders `comparison.csv` from an output directory as a text table.
pub fn cmd_report(dir: &Path) -> Result<String, CliError> {
    let path = dir.join("comparison.csv");
    let mut rdr = csv::Reader::from_path(&path).map_err(csv_err(&path))?;
    let header: Vec<String> = rdr.headers().map_err(csv_err(&path))?.iter().map(str::to_string).collect();
    if header != COMPARISON_HEADER {
        return Err(CliError::Config(format!("{}: unexpected columns", path.display())));
    }
    let mut rows = vec![vec![
        "nodes".to_string(),
        "sync with".into(),
        "sync without".into(),
        "rtt ms with".into(),
        "rtt ms without".into(),
        "e2e ms with".into(),
        "e2e ms without".into(),
        "payload B with".into(),
        "payload B without".into(),
        "payload saved".into(),
    ]];
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err(&path))?;
        let num = |i: usize| -> Result<f64, CliError> {
            rec[i]
                .parse()
                .map_err(|_| CliError::Config(format!("{}: bad number `{}`", path.display(), &rec[i])))
        };
        let mut row = vec![rec[0].to_string()];
        for i in [1, 2] {
            row.push(format!("{:.3}", num(i)?));
        }
        for i in 3..9 {
            row.push(format!("{:.2}", num(i)?));
        }
        row.push(format!("{:.1}%", num(9)? * 100.0));
        rows.push(row);
    }
    let widths: Vec<usize> = (0..rows[0].len())
        .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (i, r) in rows.iter().enumerate() {
        let cells: Vec<String> = r.iter().zip(&widths).map(|(v, w)| format!("{v:>w$}")).collect();
        writeln!(out, "{}", cells.join("  ")).unwrap();
        if i == 0 {
            writeln!(out, "{}", widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("  ")).unwrap();
        }
    }
    Ok(out)
}
