//! Tabular ingestion, splitting, standardization, and the synthetic
//! data generators used by the experiments.

use std::path::Path;

use pmfvb::nn::NnDataset;
use pmfvb::rng::substream;
use pmfvb::{PmfvbError, Result};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

const PHASE_TABULAR: u64 = 0x40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ColumnType {
    Numeric,
    Categorical,
    Response,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnType,
}

#[derive(Debug, Clone)]
pub struct TabularDataset {
    /// Row-major feature matrix after one-hot encoding.
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub n: usize,
    pub p: usize,
    pub feature_names: Vec<String>,
    pub dropped_rows: usize,
    /// Category levels seen per categorical column, in first-seen order.
    pub levels: Vec<(String, Vec<String>)>,
}

impl TabularDataset {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.p..(i + 1) * self.p]
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut s = self.feature_names.join(",");
        s.push_str(",y\n");
        for i in 0..self.n {
            for v in self.row(i) {
                s.push_str(&format!("{v:?},"));
            }
            s.push_str(&format!("{:?}\n", self.y[i]));
        }
        std::fs::write(path, s)?;
        Ok(())
    }
}

/// Parse a CSV with header per `schema`; numeric columns pass through,
/// categoricals expand to one-hot indicators (levels in first-seen
/// order), rows with missing or malformed values are dropped and
/// counted. Unknown categories (e.g. at test time against a training
/// schema) map to all-zero indicators.
pub fn load_tabular(path: &Path, schema: &[ColumnSpec]) -> Result<TabularDataset> {
    let text = std::fs::read_to_string(path)?;
    load_tabular_str(&text, schema, None)
}

/// As `load_tabular`, optionally reusing category levels from an already
/// ingested (training) dataset.
pub fn load_tabular_str(
    text: &str,
    schema: &[ColumnSpec],
    train_levels: Option<&[(String, Vec<String>)]>,
) -> Result<TabularDataset> {
    let mut lines = text.lines();
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| PmfvbError::invalid("empty data file"))?
        .split(',')
        .map(str::trim)
        .collect();
    if header.len() != schema.len() {
        return Err(PmfvbError::invalid(format!(
            "schema declares {} columns, file has {}",
            schema.len(),
            header.len()
        )));
    }
    let response_cols: Vec<usize> = schema
        .iter()
        .enumerate()
        .filter_map(|(i, c)| (c.kind == ColumnType::Response).then_some(i))
        .collect();
    if response_cols.len() != 1 {
        return Err(PmfvbError::invalid("schema needs exactly one response column"));
    }
    let resp = response_cols[0];

    // Category levels: frozen when provided, discovered otherwise.
    let frozen = train_levels.is_some();
    let mut levels: Vec<(String, Vec<String>)> = match train_levels {
        Some(l) => l.to_vec(),
        None => schema
            .iter()
            .filter(|c| c.kind == ColumnType::Categorical)
            .map(|c| (c.name.clone(), Vec::new()))
            .collect(),
    };

    let mut raw_rows: Vec<Vec<String>> = Vec::new();
    let mut dropped = 0usize;
    'rows: for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != schema.len() {
            dropped += 1;
            continue;
        }
        for (f, spec) in fields.iter().zip(schema) {
            if f.is_empty() || *f == "?" || f.eq_ignore_ascii_case("na") {
                dropped += 1;
                continue 'rows;
            }
            if matches!(spec.kind, ColumnType::Numeric | ColumnType::Response)
                && f.parse::<f64>().is_err()
            {
                dropped += 1;
                continue 'rows;
            }
        }
        if !frozen {
            let mut li = 0;
            for (f, spec) in fields.iter().zip(schema) {
                if spec.kind == ColumnType::Categorical {
                    if !levels[li].1.iter().any(|l| l == f) {
                        levels[li].1.push((*f).to_string());
                    }
                    li += 1;
                }
            }
        }
        raw_rows.push(fields.iter().map(|f| (*f).to_string()).collect());
    }
    if raw_rows.is_empty() {
        return Err(PmfvbError::invalid("no usable rows after ingestion"));
    }

    let mut feature_names = Vec::new();
    for spec in schema {
        match spec.kind {
            ColumnType::Numeric => feature_names.push(spec.name.clone()),
            ColumnType::Categorical => {
                let lv = &levels.iter().find(|(n, _)| n == &spec.name).unwrap().1;
                for l in lv {
                    feature_names.push(format!("{}={}", spec.name, l));
                }
            }
            ColumnType::Response => {}
        }
    }
    let p = feature_names.len();

    let mut x = Vec::with_capacity(raw_rows.len() * p);
    let mut y = Vec::with_capacity(raw_rows.len());
    for row in &raw_rows {
        for (c, spec) in schema.iter().enumerate() {
            match spec.kind {
                ColumnType::Numeric => x.push(row[c].parse::<f64>().unwrap()),
                ColumnType::Categorical => {
                    let lv = &levels.iter().find(|(n, _)| n == &spec.name).unwrap().1;
                    let hit = lv.iter().position(|l| l == &row[c]);
                    for k in 0..lv.len() {
                        x.push(if hit == Some(k) { 1.0 } else { 0.0 });
                    }
                }
                ColumnType::Response => {}
            }
        }
        y.push(row[resp].parse::<f64>().unwrap());
    }
    let n = y.len();
    Ok(TabularDataset { x, y, n, p, feature_names, dropped_rows: dropped, levels })
}

/// Disjoint seeded partition with sizes within one of fraction * n.
pub fn split_dataset(
    data: &NnDataset,
    fractions: [f64; 3],
    seed: u64,
) -> Result<(NnDataset, NnDataset, NnDataset)> {
    if fractions.iter().any(|&f| !(f > 0.0)) {
        return Err(PmfvbError::invalid("split fractions must all be positive"));
    }
    if (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(PmfvbError::invalid("split fractions must sum to 1"));
    }
    if data.n < 3 {
        return Err(PmfvbError::invalid("need at least 3 rows to split"));
    }
    let mut order: Vec<usize> = (0..data.n).collect();
    let mut rng = substream(seed, PHASE_TABULAR, 1, 0, 0);
    order.shuffle(&mut rng);

    let n_train = (fractions[0] * data.n as f64).round() as usize;
    let n_val = (fractions[1] * data.n as f64).round() as usize;
    let n_train = n_train.clamp(1, data.n - 2);
    let n_val = n_val.clamp(1, data.n - n_train - 1);

    let take = |idx: &[usize]| {
        let mut x = Vec::with_capacity(idx.len() * data.p);
        let mut y = Vec::with_capacity(idx.len());
        for &i in idx {
            x.extend_from_slice(data.row(i));
            y.push(data.y[i]);
        }
        NnDataset::new(x, y, data.p)
    };
    Ok((
        take(&order[..n_train])?,
        take(&order[n_train..n_train + n_val])?,
        take(&order[n_train + n_val..])?,
    ))
}

/// Per-feature standardization statistics fit on the training split.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl Standardizer {
    pub fn fit(train: &NnDataset) -> Self {
        let p = train.p;
        let n = train.n as f64;
        let mut mean = vec![0.0; p];
        for i in 0..train.n {
            for (m, v) in mean.iter_mut().zip(train.row(i)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut sd = vec![0.0; p];
        for i in 0..train.n {
            for j in 0..p {
                let d = train.row(i)[j] - mean[j];
                sd[j] += d * d;
            }
        }
        for s in sd.iter_mut() {
            *s = (*s / n).sqrt();
            if *s < 1e-12 {
                *s = 1.0;
            }
        }
        Standardizer { mean, sd }
    }

    pub fn apply(&self, data: &NnDataset) -> Result<NnDataset> {
        let mut x = Vec::with_capacity(data.x.len());
        for i in 0..data.n {
            for j in 0..data.p {
                x.push((data.row(i)[j] - self.mean[j]) / self.sd[j]);
            }
        }
        NnDataset::new(x, data.y.clone(), data.p)
    }
}

const PHASE_NN_GEN: u64 = 0x41;

/// Draw one 20-dimensional covariate vector with AR(1) correlation 0.5
/// and evaluate the nonlinear regression surface; the last ten
/// covariates are inactive.
fn nonlinear_row(rng: &mut impl Rng) -> (Vec<f64>, f64) {
    let mut x = vec![0.0; 20];
    let scale = (1.0f64 - 0.25).sqrt();
    for j in 0..20 {
        let z: f64 = rng.sample(StandardNormal);
        x[j] = if j == 0 { z } else { 0.5 * x[j - 1] + scale * z };
    }
    let f = 5.0
        + 10.0 * x[0]
        + 10.0 / (x[1] * x[1] + 1.0)
        + 5.0 * x[2] * x[3]
        + 2.0 * x[3]
        + 5.0 * x[3] * x[3]
        + 5.0 * x[4]
        + 2.0 * x[5]
        + 10.0 / (x[6] * x[6] + 1.0)
        + 5.0 * x[7] * x[8]
        + 5.0 * x[8] * x[8]
        + 5.0 * x[9];
    (x, f)
}

fn gen_nonlinear(n: usize, seed: u64, stream: u64, noisy: bool) -> Result<NnDataset> {
    let mut rng = substream(seed, PHASE_NN_GEN, stream, 0, 0);
    let mut xs = Vec::with_capacity(n * 20);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let (x, f) = nonlinear_row(&mut rng);
        xs.extend_from_slice(&x);
        let eps: f64 = if noisy { rng.sample(StandardNormal) } else { 0.0 };
        ys.push(f + eps);
    }
    NnDataset::new(xs, ys, 20)
}

/// Plain CSV rendition of a numeric dataset (x0..x{p-1},y header).
pub fn dataset_to_csv(d: &NnDataset) -> String {
    use std::fmt::Write as _;
    let mut s = String::new();
    for j in 0..d.p {
        let _ = write!(s, "x{j},");
    }
    s.push_str("y\n");
    for i in 0..d.n {
        for v in d.row(i) {
            let _ = write!(s, "{v:?},");
        }
        let _ = writeln!(s, "{:?}", d.y[i]);
    }
    s
}

/// Simulated nonlinear regression splits (20 covariates, unit noise).
pub fn generate_nonlinear_regression(
    n_train: usize,
    n_val: usize,
    n_test: usize,
    seed: u64,
) -> Result<(NnDataset, NnDataset, NnDataset)> {
    if n_train == 0 || n_val == 0 || n_test == 0 {
        return Err(PmfvbError::invalid("split sizes must be at least 1"));
    }
    Ok((
        gen_nonlinear(n_train, seed, 0, true)?,
        gen_nonlinear(n_val, seed, 1, true)?,
        gen_nonlinear(n_test, seed, 2, true)?,
    ))
}

/// Classification variant: the same surface thresholded through a
/// logistic link at its centre.
pub fn generate_nonlinear_classification(
    n_train: usize,
    n_val: usize,
    n_test: usize,
    seed: u64,
) -> Result<(NnDataset, NnDataset, NnDataset)> {
    if n_train == 0 || n_val == 0 || n_test == 0 {
        return Err(PmfvbError::invalid("split sizes must be at least 1"));
    }
    let gen = |n: usize, stream: u64| -> Result<NnDataset> {
        let mut rng = substream(seed, PHASE_NN_GEN, 0x100 + stream, 0, 0);
        let mut xs = Vec::with_capacity(n * 20);
        let mut ys = Vec::with_capacity(n);
        for _ in 0..n {
            let (x, f) = nonlinear_row(&mut rng);
            xs.extend_from_slice(&x);
            // Centre near E[f] so classes stay balanced.
            let p = 1.0 / (1.0 + (-(f - 25.0) / 5.0).exp());
            let u: f64 = rng.random();
            ys.push(f64::from(u < p));
        }
        NnDataset::new(xs, ys, 20)
    };
    Ok((gen(n_train, 0)?, gen(n_val, 1)?, gen(n_test, 2)?))
}

/// Same-shape synthetic stand-in for a proprietary household survey:
/// mixed numeric and categorical covariates with a binary response.
/// This is NOT real survey data.
pub fn generate_survey_standin_csv(n: usize, seed: u64) -> String {
    let mut rng = substream(seed, PHASE_TABULAR, 2, 0, 0);
    let states = ["nsw", "vic", "qld", "wa", "sa"];
    let employment = ["full-time", "part-time", "unemployed", "retired"];
    let mut s = String::from("age,income,state,employment,hours,label\n");
    for _ in 0..n {
        let age = 18.0 + 60.0 * rng.random::<f64>();
        let income: f64 = 30.0 + (20.0 * rng.sample::<f64, _>(StandardNormal)).abs();
        let st = states[rng.random_range(0..states.len())];
        let emp = employment[rng.random_range(0..employment.len())];
        let hours = if emp == "full-time" { 35.0 + 10.0 * rng.random::<f64>() } else { 20.0 * rng.random::<f64>() };
        let eta = 0.03 * (age - 45.0) + 0.02 * (income - 50.0) + if emp == "full-time" { 0.5 } else { -0.2 };
        let p = 1.0 / (1.0 + (-eta as f64).exp());
        let label = u8::from(rng.random::<f64>() < p);
        s.push_str(&format!("{age:.1},{income:.2},{st},{emp},{hours:.1},{label}\n"));
    }
    s
}
