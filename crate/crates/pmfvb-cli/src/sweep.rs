//! Grid sweeps: run a template config across a cartesian grid of
//! overrides and a list of seeds, then aggregate metrics per cell.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::Deserialize;
use serde_json::Value;

use crate::config::ExperimentConfig;
use crate::runner::{run_experiment, CliError, CliResult};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub template: ExperimentConfig,
    /// Field path (dots descend into sub-configs, e.g. "nn.drift_a")
    /// mapped to the values it sweeps over.
    pub grid: BTreeMap<String, Vec<Value>>,
    pub seeds: Vec<u64>,
}

pub fn load_sweep(path: &Path) -> CliResult<SweepSpec> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("bad sweep spec: {e}")))
}

fn set_path(root: &mut Value, path: &str, value: Value) -> Result<(), String> {
    let mut cur = root;
    let mut parts = path.split('.').peekable();
    while let Some(key) = parts.next() {
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| format!("grid field '{path}' does not address an object"))?;
        if parts.peek().is_none() {
            obj.insert(key.to_string(), value);
            return Ok(());
        }
        // Sub-configs default to null in the template; materialize them.
        let entry = obj.entry(key.to_string()).or_insert(Value::Null);
        if entry.is_null() {
            *entry = Value::Object(Default::default());
        }
        cur = entry;
    }
    Err(format!("empty grid field name"))
}

/// All grid cells in deterministic (BTreeMap) order, each as a list of
/// (field, value) assignments.
fn grid_cells(grid: &BTreeMap<String, Vec<Value>>) -> Vec<Vec<(String, Value)>> {
    let mut cells: Vec<Vec<(String, Value)>> = vec![vec![]];
    for (field, values) in grid {
        let mut next = Vec::with_capacity(cells.len() * values.len());
        for cell in &cells {
            for v in values {
                let mut c = cell.clone();
                c.push((field.clone(), v.clone()));
                next.push(c);
            }
        }
        cells = next;
    }
    cells
}

fn flatten_numeric(prefix: &str, v: &Value, out: &mut BTreeMap<String, f64>) {
    match v {
        Value::Number(n) => {
            if let Some(f) = n.as_f64() {
                out.insert(prefix.to_string(), f);
            }
        }
        Value::Bool(b) => {
            out.insert(prefix.to_string(), *b as u8 as f64);
        }
        Value::Object(map) => {
            for (k, inner) in map {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten_numeric(&key, inner, out);
            }
        }
        Value::Array(arr) => {
            for (i, inner) in arr.iter().enumerate() {
                flatten_numeric(&format!("{prefix}.{i}"), inner, out);
            }
        }
        _ => {}
    }
}

struct CellResult {
    cell: usize,
    assignments: Vec<(String, Value)>,
    ok: usize,
    failed: usize,
    /// metric name -> values across successful seeds.
    metrics: BTreeMap<String, Vec<f64>>,
}

fn worker_count() -> usize {
    std::env::var("PMFVB_WORKERS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Run the sweep under `out_dir` (one subdirectory per cell x seed) and
/// write `summary.csv` with per-cell means and standard deviations of
/// every numeric metric. Individual run failures are recorded in the
/// summary rather than aborting the sweep.
pub fn run_sweep(spec: &SweepSpec, out_dir: &Path) -> CliResult<PathBuf> {
    if spec.grid.is_empty() {
        return Err(CliError::Config("sweep grid must name at least one field".into()));
    }
    if spec.seeds.is_empty() {
        return Err(CliError::Config("sweep needs at least one seed".into()));
    }
    spec.template.validate().map_err(CliError::Config)?;
    std::fs::create_dir_all(out_dir).map_err(|e| CliError::Runtime(e.to_string()))?;

    let cells = grid_cells(&spec.grid);
    let template = serde_json::to_value(&spec.template).unwrap();

    // Resolve every cell's config up front so bad grid fields fail fast.
    let mut jobs: Vec<(usize, u64, ExperimentConfig)> = Vec::new();
    for (ci, cell) in cells.iter().enumerate() {
        for &seed in &spec.seeds {
            let mut v = template.clone();
            for (field, value) in cell {
                set_path(&mut v, field, value.clone()).map_err(CliError::Config)?;
            }
            let mut cfg: ExperimentConfig = serde_json::from_value(v)
                .map_err(|e| CliError::Config(format!("grid produced invalid config: {e}")))?;
            cfg.seed = seed;
            cfg.out = out_dir.join(format!("cell{ci:03}_seed{seed}"));
            cfg.validate().map_err(CliError::Config)?;
            jobs.push((ci, seed, cfg));
        }
    }

    let queue = Mutex::new(jobs.into_iter().collect::<Vec<_>>());
    let results: Mutex<Vec<(usize, Option<Value>)>> = Mutex::new(Vec::new());
    let n_workers = worker_count().min(cells.len() * spec.seeds.len());
    std::thread::scope(|scope| {
        for _ in 0..n_workers {
            scope.spawn(|| loop {
                let job = queue.lock().unwrap().pop();
                let Some((ci, _seed, cfg)) = job else { break };
                let metrics = run_experiment(&cfg).ok().map(|r| r.metrics);
                results.lock().unwrap().push((ci, metrics));
            });
        }
    });

    let mut per_cell: Vec<CellResult> = cells
        .into_iter()
        .enumerate()
        .map(|(ci, assignments)| CellResult {
            cell: ci,
            assignments,
            ok: 0,
            failed: 0,
            metrics: BTreeMap::new(),
        })
        .collect();
    for (ci, metrics) in results.into_inner().unwrap() {
        let cell = &mut per_cell[ci];
        match metrics {
            Some(m) => {
                cell.ok += 1;
                let mut flat = BTreeMap::new();
                flatten_numeric("", &m, &mut flat);
                for (k, v) in flat {
                    cell.metrics.entry(k).or_default().push(v);
                }
            }
            None => cell.failed += 1,
        }
    }

    // Union of metric names across cells, in stable order.
    let mut metric_names: Vec<String> = Vec::new();
    for c in &per_cell {
        for k in c.metrics.keys() {
            if !metric_names.contains(k) {
                metric_names.push(k.clone());
            }
        }
    }
    metric_names.sort();
    let grid_fields: Vec<&String> = spec.grid.keys().collect();

    let mut csv = String::from("cell");
    for f in &grid_fields {
        let _ = write!(csv, ",{f}");
    }
    csv.push_str(",seeds_ok,seeds_failed");
    for m in &metric_names {
        let _ = write!(csv, ",{m}_mean,{m}_sd");
    }
    csv.push('\n');
    for c in &per_cell {
        let _ = write!(csv, "{}", c.cell);
        for (_, v) in &c.assignments {
            let _ = write!(csv, ",{v}");
        }
        let _ = write!(csv, ",{},{}", c.ok, c.failed);
        for m in &metric_names {
            match c.metrics.get(m).filter(|v| !v.is_empty()) {
                Some(vals) => {
                    let n = vals.len() as f64;
                    let mean = vals.iter().sum::<f64>() / n;
                    let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
                    let _ = write!(csv, ",{mean},{sd}");
                }
                None => csv.push_str(",,"),
            }
        }
        csv.push('\n');
    }
    let path = out_dir.join("summary.csv");
    std::fs::write(&path, csv).map_err(|e| CliError::Runtime(e.to_string()))?;
    Ok(path)
}
