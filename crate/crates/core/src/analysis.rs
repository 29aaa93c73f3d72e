//! Post-hoc analysis of run directories: reward curves across seeds and the
//! PCA embedding of Alice's (start, end) states.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, SymmetricEigen};
use walkdir::WalkDir;

use crate::error::{Error, Result};
use crate::training::metrics::{SegmentRow, METRICS_FILE, SEGMENTS_FILE};

pub const AGGREGATE_HEADER: &str = "episode,strategy,mean,std,n_seeds";
pub const PCA_SEGMENTS_HEADER: &str = "x0,y0,x1,y1,strategy,seed";

/// Mean, principal axes (orthonormal rows) and their variances, largest first.
#[derive(Clone, Debug, PartialEq)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    pub axes: Vec<Vec<f64>>,
    pub variances: Vec<f64>,
}

impl PcaModel {
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        self.axes
            .iter()
            .map(|a| a.iter().zip(x).zip(&self.mean).map(|((a, x), m)| a * (x - m)).sum())
            .collect()
    }
}

/// Top-`dims` principal components of `points` (population covariance).
/// Each axis is signed so its first nonzero component is positive.
pub fn fit_pca(points: &[Vec<f64>], dims: usize) -> Result<PcaModel> {
    if points.len() < 2 {
        return Err(Error::contract(format!("PCA needs at least 2 points, got {}", points.len())));
    }
    let d = points[0].len();
    if d < dims || dims == 0 {
        return Err(Error::contract(format!("cannot extract {dims} components from dimension {d}")));
    }
    if let Some(p) = points.iter().find(|p| p.len() != d) {
        return Err(Error::contract(format!("PCA point of length {} among length {d}", p.len())));
    }
    let n = points.len() as f64;
    let mut mean = vec![0.0; d];
    for p in points {
        mean.iter_mut().zip(p).for_each(|(m, x)| *m += x / n);
    }
    let centered = DMatrix::from_fn(points.len(), d, |r, c| points[r][c] - mean[c]);
    let cov = (centered.transpose() * &centered) / n;
    let eig = SymmetricEigen::new(cov);

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let mut axes = Vec::with_capacity(dims);
    let mut variances = Vec::with_capacity(dims);
    for &i in order.iter().take(dims) {
        let mut axis: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
        let first = axis.iter().copied().find(|v| v.abs() > 1e-12).unwrap_or(0.0);
        if first < 0.0 {
            axis.iter_mut().for_each(|v| *v = -*v);
        }
        axes.push(axis);
        variances.push(eig.eigenvalues[i].max(0.0));
    }
    Ok(PcaModel { mean, axes, variances })
}

/// Mean Euclidean distance between projected start and end states.
pub fn mean_segment_distance(segments: &[(Vec<f64>, Vec<f64>)], model: &PcaModel) -> f64 {
    if segments.is_empty() {
        return 0.0;
    }
    let total: f64 = segments
        .iter()
        .map(|(s0, sa)| {
            let (a, b) = (model.project(s0), model.project(sa));
            a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
        })
        .sum();
    total / segments.len() as f64
}

/// Element `i` is the mean of `values[i+1-k ..= i]`, clamped at the start.
pub fn running_average(values: &[f64], k: usize) -> Vec<f64> {
    let k = k.max(1);
    let mut out = Vec::with_capacity(values.len());
    let mut sum = 0.0;
    for (i, v) in values.iter().enumerate() {
        sum += v;
        if i >= k {
            sum -= values[i - k];
        }
        out.push(sum / (i + 1).min(k) as f64);
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsSeries {
    pub path: PathBuf,
    pub strategy: String,
    pub seed: u64,
    pub episodes: Vec<u64>,
    pub rewards: Vec<f64>,
    pub running_avg: Vec<f64>,
}

impl MetricsSeries {
    pub fn final_running_avg(&self) -> Option<f64> {
        self.running_avg.last().copied()
    }
}

fn csv_error(path: &Path, message: impl Into<String>) -> Error {
    Error::Csv {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn column(headers: &csv::StringRecord, name: &str, path: &Path) -> Result<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| csv_error(path, format!("missing column `{name}`")))
}

fn parse<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, path: &Path) -> Result<T> {
    let line = rec.position().map_or(0, |p| p.line());
    rec.get(i)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| csv_error(path, format!("line {line}: bad value in column {i}")))
}

pub fn read_metrics(path: &Path) -> Result<MetricsSeries> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e.to_string()))?;
    let headers = reader.headers().map_err(|e| csv_error(path, e.to_string()))?.clone();
    let (ep, strat, seed, reward, avg) = (
        column(&headers, "episode", path)?,
        column(&headers, "strategy", path)?,
        column(&headers, "seed", path)?,
        column(&headers, "reward", path)?,
        column(&headers, "running_avg", path)?,
    );
    let mut s = MetricsSeries {
        path: path.to_path_buf(),
        strategy: String::new(),
        seed: 0,
        episodes: Vec::new(),
        rewards: Vec::new(),
        running_avg: Vec::new(),
    };
    for rec in reader.records() {
        let rec = rec.map_err(|e| csv_error(path, e.to_string()))?;
        if s.episodes.is_empty() {
            s.strategy = rec.get(strat).unwrap_or_default().to_string();
            s.seed = parse(&rec, seed, path)?;
        }
        s.episodes.push(parse(&rec, ep, path)?);
        s.rewards.push(parse(&rec, reward, path)?);
        s.running_avg.push(parse(&rec, avg, path)?);
    }
    Ok(s)
}

pub fn read_segments(path: &Path) -> Result<Vec<SegmentRow>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e.to_string()))?;
    let headers = reader.headers().map_err(|e| csv_error(path, e.to_string()))?.clone();
    let (ep, seed, strat) = (
        column(&headers, "episode", path)?,
        column(&headers, "seed", path)?,
        column(&headers, "strategy", path)?,
    );
    let s0: Vec<usize> = (0..headers.len()).filter(|&i| headers[i].starts_with("s0_")).collect();
    let sa: Vec<usize> = (0..headers.len()).filter(|&i| headers[i].starts_with("sa_")).collect();
    if s0.len() != sa.len() || s0.is_empty() {
        return Err(csv_error(path, "segment columns s0_* and sa_* must pair up"));
    }
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| csv_error(path, e.to_string()))?;
        rows.push(SegmentRow {
            episode: parse(&rec, ep, path)?,
            seed: parse(&rec, seed, path)?,
            strategy: rec.get(strat).unwrap_or_default().to_string(),
            s0: s0.iter().map(|&i| parse(&rec, i, path)).collect::<Result<_>>()?,
            s_a: sa.iter().map(|&i| parse(&rec, i, path)).collect::<Result<_>>()?,
        });
    }
    Ok(rows)
}

/// Every file called `name` below `roots`, sorted.
pub fn find_files(roots: &[PathBuf], name: &str) -> Vec<PathBuf> {
    let mut out: Vec<PathBuf> = roots
        .iter()
        .flat_map(|r| WalkDir::new(r).into_iter().filter_map(|e| e.ok()))
        .filter(|e| e.file_type().is_file() && e.file_name() == name)
        .map(|e| e.into_path())
        .collect();
    out.sort();
    out.dedup();
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct AggregateRow {
    pub episode: u64,
    pub strategy: String,
    pub mean: f64,
    pub std: f64,
    pub n_seeds: usize,
}

/// Per-episode mean and population standard deviation of `running_avg` across
/// seeds, per strategy. All series of one strategy must share their episode column.
pub fn aggregate_seeds(series: &[MetricsSeries]) -> Result<Vec<AggregateRow>> {
    let mut by_strategy: BTreeMap<&str, Vec<&MetricsSeries>> = BTreeMap::new();
    for s in series {
        by_strategy.entry(&s.strategy).or_default().push(s);
    }
    let mut rows = Vec::new();
    for (strategy, group) in by_strategy {
        let reference = group[0];
        for s in &group[1..] {
            if s.episodes != reference.episodes {
                return Err(csv_error(
                    &s.path,
                    format!("episode indices do not align with {}", reference.path.display()),
                ));
            }
        }
        let n = group.len() as f64;
        for (i, &episode) in reference.episodes.iter().enumerate() {
            let mean = group.iter().map(|s| s.running_avg[i]).sum::<f64>() / n;
            let var = group.iter().map(|s| (s.running_avg[i] - mean).powi(2)).sum::<f64>() / n;
            rows.push(AggregateRow {
                episode,
                strategy: strategy.to_string(),
                mean,
                std: var.sqrt(),
                n_seeds: group.len(),
            });
        }
    }
    Ok(rows)
}

pub fn write_aggregate(path: &Path, rows: &[AggregateRow]) -> Result<()> {
    let mut text = String::from(AGGREGATE_HEADER);
    text.push('\n');
    for r in rows {
        let _ = writeln!(text, "{},{},{},{},{}", r.episode, r.strategy, r.mean, r.std, r.n_seeds);
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Mean ± std at every `every`-th episode (and the last), one column per strategy.
pub fn summary_table(rows: &[AggregateRow], every: u64) -> String {
    let mut strategies: Vec<&str> = rows.iter().map(|r| r.strategy.as_str()).collect();
    strategies.sort();
    strategies.dedup();
    let mut by_episode: BTreeMap<u64, BTreeMap<&str, &AggregateRow>> = BTreeMap::new();
    for r in rows {
        by_episode.entry(r.episode).or_default().insert(&r.strategy, r);
    }
    let last = by_episode.keys().next_back().copied().unwrap_or(0);
    let mut out = format!("{:>10}", "episode");
    for s in &strategies {
        let _ = write!(out, " {s:>22}");
    }
    out.push('\n');
    for (ep, cols) in &by_episode {
        if !(every > 0 && ep % every == 0) && *ep != last {
            continue;
        }
        let _ = write!(out, "{ep:>10}");
        for s in &strategies {
            match cols.get(s) {
                Some(r) => {
                    let _ = write!(out, " {:>22}", format!("{:.4} ± {:.4}", r.mean, r.std));
                }
                None => {
                    let _ = write!(out, " {:>22}", "-");
                }
            }
        }
        out.push('\n');
    }
    out
}

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let m = values.len() / 2;
    if values.len() % 2 == 1 {
        values[m]
    } else {
        0.5 * (values[m - 1] + values[m])
    }
}

/// Evenly strided subsample of at most `max` rows.
fn subsample(rows: Vec<SegmentRow>, max: Option<usize>) -> Vec<SegmentRow> {
    match max {
        Some(m) if m > 0 && rows.len() > m => {
            let stride = rows.len() as f64 / m as f64;
            (0..m).map(|i| rows[(i as f64 * stride) as usize].clone()).collect()
        }
        _ => rows,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PcaReport {
    /// `(strategy, seed, mean segment distance)`.
    pub per_seed: Vec<(String, u64, f64)>,
    /// Median over seeds, per strategy.
    pub per_strategy: BTreeMap<String, f64>,
    /// `memory_selfplay / selfplay`, when both are present.
    pub distance_ratio: Option<f64>,
}

/// Fits one PCA on every start and end state (or one per strategy with
/// `per_strategy_fit`) and measures segment lengths per seed.
pub fn pca_analysis(
    segments: &[SegmentRow],
    per_strategy_fit: bool,
) -> Result<(PcaReport, Vec<(SegmentRow, [f64; 4])>)> {
    let mut groups: BTreeMap<(String, u64), Vec<&SegmentRow>> = BTreeMap::new();
    for s in segments {
        groups.entry((s.strategy.clone(), s.seed)).or_default().push(s);
    }
    let fit = |rows: &mut dyn Iterator<Item = &SegmentRow>| {
        let points: Vec<Vec<f64>> = rows.flat_map(|r| [r.s0.clone(), r.s_a.clone()]).collect();
        fit_pca(&points, 2)
    };
    let mut models: BTreeMap<String, PcaModel> = BTreeMap::new();
    if per_strategy_fit {
        for strategy in groups.keys().map(|(s, _)| s.clone()) {
            if !models.contains_key(&strategy) {
                let model = fit(&mut segments.iter().filter(|r| r.strategy == strategy))?;
                models.insert(strategy, model);
            }
        }
    } else {
        let model = fit(&mut segments.iter())?;
        for (s, _) in groups.keys() {
            models.insert(s.clone(), model.clone());
        }
    }

    let mut per_seed = Vec::new();
    let mut projected = Vec::with_capacity(segments.len());
    for ((strategy, seed), rows) in &groups {
        let model = &models[strategy];
        let pairs: Vec<(Vec<f64>, Vec<f64>)> = rows.iter().map(|r| (r.s0.clone(), r.s_a.clone())).collect();
        per_seed.push((strategy.clone(), *seed, mean_segment_distance(&pairs, model)));
        for r in rows {
            let (a, b) = (model.project(&r.s0), model.project(&r.s_a));
            projected.push(((*r).clone(), [a[0], a[1], b[0], b[1]]));
        }
    }
    let mut per_strategy = BTreeMap::new();
    for strategy in models.keys() {
        let mut d: Vec<f64> = per_seed.iter().filter(|(s, _, _)| s == strategy).map(|t| t.2).collect();
        per_strategy.insert(strategy.clone(), median(&mut d));
    }
    let distance_ratio = match (per_strategy.get("memory_selfplay"), per_strategy.get("selfplay")) {
        (Some(m), Some(s)) if *s > 0.0 => Some(m / s),
        _ => None,
    };
    Ok((
        PcaReport {
            per_seed,
            per_strategy,
            distance_ratio,
        },
        projected,
    ))
}

pub fn write_pca_segments(path: &Path, projected: &[(SegmentRow, [f64; 4])]) -> Result<()> {
    let mut text = String::from(PCA_SEGMENTS_HEADER);
    text.push('\n');
    for (r, [x0, y0, x1, y1]) in projected {
        let _ = writeln!(text, "{x0},{y0},{x1},{y1},{},{}", r.strategy, r.seed);
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// `analyze --kind curves`: aggregate CSV plus a printed summary table.
pub fn analyze_curves(dirs: &[PathBuf], out: &Path, sample_every: u64) -> Result<String> {
    let files = find_files(dirs, METRICS_FILE);
    if files.is_empty() {
        return Err(Error::Config(format!("no {METRICS_FILE} found under the given directories")));
    }
    let series = files.iter().map(|f| read_metrics(f)).collect::<Result<Vec<_>>>()?;
    let rows = aggregate_seeds(&series)?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_aggregate(&out.join("aggregate.csv"), &rows)?;
    let table = summary_table(&rows, sample_every);
    fs::write(out.join("summary.txt"), &table).map_err(|e| Error::io(out, e))?;
    Ok(table)
}

/// `analyze --kind pca`: projected segments CSV plus per-strategy distances and
/// the `distance_ratio=` line.
pub fn analyze_pca(dirs: &[PathBuf], out: &Path, max_episodes: Option<usize>, per_strategy_fit: bool) -> Result<String> {
    let files = find_files(dirs, SEGMENTS_FILE);
    let mut segments = Vec::new();
    for f in &files {
        segments.extend(subsample(read_segments(f)?, max_episodes));
    }
    if segments.len() < 2 {
        return Err(Error::Config(format!("no {SEGMENTS_FILE} rows found under the given directories")));
    }
    let (report, projected) = pca_analysis(&segments, per_strategy_fit)?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_pca_segments(&out.join("pca_segments.csv"), &projected)?;
    let mut text = String::new();
    for (strategy, seed, d) in &report.per_seed {
        let _ = writeln!(text, "{strategy} seed {seed}: mean segment distance {d:.6}");
    }
    for (strategy, d) in &report.per_strategy {
        let _ = writeln!(text, "{strategy}: median segment distance {d:.6}");
    }
    if let Some(r) = report.distance_ratio {
        let _ = writeln!(text, "distance_ratio={r:.6}");
    }
    fs::write(out.join("pca_summary.txt"), &text).map_err(|e| Error::io(out, e))?;
    Ok(text)
}
