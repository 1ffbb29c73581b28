//! Multi-task datasets: CSV ingestion, one-vs-one task construction,
//! stratified splitting and synthetic generators.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use log::warn;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// One binary classification task. Labels are `+1` or `-1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Task<S: Real> {
    pub name: String,
    pub features: Vec<Vec<S>>,
    pub labels: Vec<i8>,
}

impl<S: Real> Task<S> {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// True when both classes are present.
    pub fn has_both_classes(&self) -> bool {
        self.labels.iter().any(|&y| y > 0) && self.labels.iter().any(|&y| y < 0)
    }

    fn select(&self, idx: &[usize]) -> Task<S> {
        Task {
            name: self.name.clone(),
            features: idx.iter().map(|&i| self.features[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct MultiTaskDataset<S: Real> {
    pub tasks: Vec<Task<S>>,
    pub feature_dim: usize,
}

impl<S: Real> MultiTaskDataset<S> {
    /// Validates label values, feature dimensions and finiteness.
    pub fn new(tasks: Vec<Task<S>>) -> Result<Self> {
        let feature_dim = tasks
            .iter()
            .flat_map(|t| t.features.first())
            .map(|f| f.len())
            .next()
            .unwrap_or(0);
        let ds = Self { tasks, feature_dim };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.tasks.is_empty() {
            return Err(Error::InvalidDataset("no tasks".into()));
        }
        for task in &self.tasks {
            if task.is_empty() {
                return Err(Error::InvalidDataset(format!("task {:?} is empty", task.name)));
            }
            if task.features.len() != task.labels.len() {
                return Err(Error::InvalidDataset(format!(
                    "task {:?}: {} feature rows but {} labels",
                    task.name,
                    task.features.len(),
                    task.labels.len()
                )));
            }
            if let Some(y) = task.labels.iter().find(|&&y| y != 1 && y != -1) {
                return Err(Error::InvalidDataset(format!("task {:?}: label {y} not in {{-1, +1}}", task.name)));
            }
            for row in &task.features {
                if row.len() != self.feature_dim {
                    return Err(Error::InvalidDataset(format!(
                        "task {:?}: feature dimension {} differs from {}",
                        task.name,
                        row.len(),
                        self.feature_dim
                    )));
                }
                if row.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Numeric(format!("task {:?}: non-finite feature", task.name)));
                }
            }
        }
        Ok(())
    }

    pub fn num_tasks(&self) -> usize {
        self.tasks.len()
    }

    pub fn task_sizes(&self) -> Vec<usize> {
        self.tasks.iter().map(Task::len).collect()
    }

    pub fn total_samples(&self) -> usize {
        self.tasks.iter().map(Task::len).sum()
    }

    /// Common task size, if all tasks have the same number of samples.
    pub fn equal_task_size(&self) -> Option<usize> {
        let n = self.tasks.first()?.len();
        self.tasks.iter().all(|t| t.len() == n).then_some(n)
    }

    /// Subsamples every task down to the smallest task size (seeded, order
    /// preserving).
    pub fn subsample_to_min(&self, seed: u64) -> Self {
        let n = self.tasks.iter().map(Task::len).min().unwrap_or(0);
        self.subsample_each(n, seed)
    }

    /// Keeps at most `max_per_task` samples per task, chosen uniformly.
    pub fn subsample_each(&self, max_per_task: usize, seed: u64) -> Self {
        let tasks = self
            .tasks
            .iter()
            .enumerate()
            .map(|(t, task)| {
                if task.len() <= max_per_task {
                    return task.clone();
                }
                let mut rng = stream_rng(seed, 0x5ab5_a3b1, t as u64);
                let mut idx: Vec<usize> = (0..task.len()).collect();
                idx.shuffle(&mut rng);
                idx.truncate(max_per_task);
                idx.sort_unstable();
                task.select(&idx)
            })
            .collect();
        Self { tasks, feature_dim: self.feature_dim }
    }
}

/// Layout of a task CSV file: `task_id,label,f1,...,fd`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[derive(Default)]
pub struct CsvSchema {
    /// First row is a header. `None` detects a header when the label field
    /// of the first row is not numeric.
    #[serde(default)]
    pub has_header: Option<bool>,
}


pub fn load_csv<S: Real>(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<MultiTaskDataset<S>> {
    let file = std::fs::File::open(path.as_ref())?;
    read_csv(file, schema)
}

pub fn read_csv<S: Real, R: Read>(reader: R, schema: &CsvSchema) -> Result<MultiTaskDataset<S>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut order: Vec<String> = Vec::new();
    let mut by_task: BTreeMap<String, usize> = BTreeMap::new();
    let mut tasks: Vec<Task<S>> = Vec::new();
    let mut dim: Option<usize> = None;

    for (i, record) in rdr.records().enumerate() {
        let line = i + 1;
        let record = record.map_err(|e| Error::Parse { line, message: e.to_string() })?;
        if i == 0 {
            let header = match schema.has_header {
                Some(h) => h,
                None => record.get(1).is_some_and(|f| f.parse::<f64>().is_err()),
            };
            if header {
                continue;
            }
        }
        if record.len() < 2 {
            return Err(Error::Parse { line, message: "expected task_id,label,features...".into() });
        }
        let task_id = record[0].to_string();
        let label = match record[1].parse::<f64>() {
            Ok(v) if v == 1.0 => 1i8,
            Ok(v) if v == -1.0 => -1i8,
            _ => {
                return Err(Error::Parse { line, message: format!("label {:?} is not -1 or 1", &record[1]) });
            }
        };
        let mut feats = Vec::with_capacity(record.len() - 2);
        for field in record.iter().skip(2) {
            let v: f64 = field
                .parse()
                .map_err(|_| Error::Parse { line, message: format!("bad feature value {field:?}") })?;
            if !v.is_finite() {
                return Err(Error::Parse { line, message: format!("non-finite feature {field:?}") });
            }
            feats.push(S::lit(v));
        }
        match dim {
            None => dim = Some(feats.len()),
            Some(d) if d != feats.len() => {
                return Err(Error::Parse { line, message: format!("expected {d} features, found {}", feats.len()) });
            }
            _ => {}
        }
        let slot = *by_task.entry(task_id.clone()).or_insert_with(|| {
            order.push(task_id.clone());
            tasks.push(Task { name: task_id.clone(), features: Vec::new(), labels: Vec::new() });
            tasks.len() - 1
        });
        tasks[slot].features.push(feats);
        tasks[slot].labels.push(label);
    }
    MultiTaskDataset::new(tasks)
}

pub fn save_csv<S: Real>(data: &MultiTaskDataset<S>, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path.as_ref())?;
    write_csv(data, file)
}

pub fn write_csv<S: Real, W: Write>(data: &MultiTaskDataset<S>, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["task_id".to_string(), "label".to_string()];
    header.extend((1..=data.feature_dim).map(|j| format!("f{j}")));
    w.write_record(&header).map_err(csv_io)?;
    for task in &data.tasks {
        for (x, y) in task.features.iter().zip(&task.labels) {
            let mut row = vec![task.name.clone(), y.to_string()];
            row.extend(x.iter().map(|v| v.to_string()));
            w.write_record(&row).map_err(csv_io)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// One binary task per unordered pair of observed classes, in lexicographic
/// pair order. The lower class maps to `+1`.
pub fn one_vs_one_tasks<S: Real>(features: &[Vec<S>], classes: &[i64]) -> Result<MultiTaskDataset<S>> {
    let mut observed: Vec<i64> = classes.to_vec();
    observed.sort_unstable();
    observed.dedup();
    one_vs_one_with_classes(features, classes, &observed)
}

/// Like [`one_vs_one_tasks`] but over an explicit class list; classes with no
/// samples are skipped with a warning.
pub fn one_vs_one_with_classes<S: Real>(
    features: &[Vec<S>],
    classes: &[i64],
    class_set: &[i64],
) -> Result<MultiTaskDataset<S>> {
    if features.len() != classes.len() {
        return Err(Error::InvalidDataset("features and class labels differ in length".into()));
    }
    let mut set = class_set.to_vec();
    set.sort_unstable();
    set.dedup();
    let present: Vec<i64> = set
        .into_iter()
        .filter(|c| {
            let any = classes.contains(c);
            if !any {
                warn!("class {c} has no samples; excluded from one-vs-one tasks");
            }
            any
        })
        .collect();
    if present.len() < 2 {
        return Err(Error::InvalidDataset("one-vs-one needs at least two populated classes".into()));
    }
    let mut tasks = Vec::new();
    for (a_pos, &a) in present.iter().enumerate() {
        for &b in &present[a_pos + 1..] {
            let mut task = Task { name: format!("{a}_vs_{b}"), features: Vec::new(), labels: Vec::new() };
            for (x, &c) in features.iter().zip(classes) {
                if c == a || c == b {
                    task.features.push(x.clone());
                    task.labels.push(if c == a { 1 } else { -1 });
                }
            }
            tasks.push(task);
        }
    }
    MultiTaskDataset::new(tasks)
}

/// Stratified per-task, per-class split. Each class with `n ≥ 2` samples
/// contributes `clamp(round(f·n), 1, n)` samples to the training side; a
/// singleton class goes to training with a warning.
pub fn split<S: Real>(
    data: &MultiTaskDataset<S>,
    train_fraction: f64,
    seed: u64,
) -> Result<(MultiTaskDataset<S>, MultiTaskDataset<S>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidParameter(format!("train fraction {train_fraction} not in (0, 1)")));
    }
    let mut train = Vec::with_capacity(data.tasks.len());
    let mut test = Vec::with_capacity(data.tasks.len());
    for (t, task) in data.tasks.iter().enumerate() {
        let mut train_idx = Vec::new();
        let mut test_idx = Vec::new();
        for (class_slot, class) in [1i8, -1].into_iter().enumerate() {
            let mut idx: Vec<usize> = (0..task.len()).filter(|&i| task.labels[i] == class).collect();
            if idx.is_empty() {
                continue;
            }
            if idx.len() == 1 {
                warn!("task {:?}: class {class} has a single sample; kept in training split", task.name);
                train_idx.extend(idx);
                continue;
            }
            let mut rng = stream_rng(seed, t as u64, class_slot as u64);
            idx.shuffle(&mut rng);
            let n = idx.len();
            let k = ((train_fraction * n as f64).round() as usize).clamp(1, n);
            train_idx.extend_from_slice(&idx[..k]);
            test_idx.extend_from_slice(&idx[k..]);
        }
        train_idx.sort_unstable();
        test_idx.sort_unstable();
        train.push(task.select(&train_idx));
        test.push(task.select(&test_idx));
    }
    let fd = data.feature_dim;
    Ok((MultiTaskDataset { tasks: train, feature_dim: fd }, MultiTaskDataset { tasks: test, feature_dim: fd }))
}

/// Synthetic related tasks: `w_t = ρ·w_shared + (1-ρ)·w_private_t` (unit
/// normalised), Gaussian inputs, labels `sign(w_t'x)` flipped with
/// probability `noise`.
pub fn synth_multitask<S: Real>(
    tasks: usize,
    per_task: usize,
    dim: usize,
    relatedness: f64,
    noise: f64,
    seed: u64,
) -> Result<MultiTaskDataset<S>> {
    if tasks == 0 || per_task == 0 || dim == 0 {
        return Err(Error::InvalidParameter("synthetic sizes must be positive".into()));
    }
    if !(0.0..=1.0).contains(&relatedness) || !(0.0..=1.0).contains(&noise) {
        return Err(Error::InvalidParameter("relatedness and noise must lie in [0, 1]".into()));
    }
    let mut rng = stream_rng(seed, 0x5eed, 0);
    let shared = unit_gaussian(&mut rng, dim);
    let mut out = Vec::with_capacity(tasks);
    for t in 0..tasks {
        let private = unit_gaussian(&mut rng, dim);
        let mut w: Vec<f64> = shared
            .iter()
            .zip(&private)
            .map(|(s, p)| relatedness * s + (1.0 - relatedness) * p)
            .collect();
        let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            w.iter_mut().for_each(|v| *v /= norm);
        }
        let mut task = Task { name: format!("task{t}"), features: Vec::new(), labels: Vec::new() };
        for _ in 0..per_task {
            let x: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            let score: f64 = x.iter().zip(&w).map(|(a, b)| a * b).sum();
            let mut y: i8 = if score >= 0.0 { 1 } else { -1 };
            if noise > 0.0 && rng.random::<f64>() < noise {
                y = -y;
            }
            task.features.push(x.into_iter().map(S::lit).collect());
            task.labels.push(y);
        }
        out.push(task);
    }
    MultiTaskDataset::new(out)
}

fn unit_gaussian(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Independent ChaCha stream keyed by `(seed, a, b)`.
pub(crate) fn stream_rng(seed: u64, a: u64, b: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&a.to_le_bytes());
    key[16..24].copy_from_slice(&b.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

#[cfg(test)]
mod tests {
    use super::*;

    const FOUR_ROWS: &str = "task_id,label,f1,f2\na,1,0.5,1.0\na,-1,0.0,2.0\nb,1,1.5,-1.0\nb,-1,3.0,0.25\n";

    #[test]
    fn csv_groups_by_first_appearance() {
        let ds: MultiTaskDataset<f64> = read_csv(FOUR_ROWS.as_bytes(), &CsvSchema::default()).unwrap();
        assert_eq!(ds.num_tasks(), 2);
        assert_eq!(ds.task_sizes(), vec![2, 2]);
        assert_eq!(ds.tasks[0].name, "a");
        assert_eq!(ds.feature_dim, 2);
    }

    #[test]
    fn csv_rejects_zero_label_with_line() {
        let text = "a,1,0.5\na,0,0.1\n";
        let err = read_csv::<f64, _>(text.as_bytes(), &CsvSchema::default()).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn csv_rejects_nan() {
        let text = "a,1,NaN\n";
        assert!(matches!(read_csv::<f64, _>(text.as_bytes(), &CsvSchema::default()), Err(Error::Parse { .. })));
    }

    #[test]
    fn csv_round_trip() {
        let ds: MultiTaskDataset<f64> = synth_multitask(3, 7, 4, 0.5, 0.1, 9).unwrap();
        let mut buf = Vec::new();
        write_csv(&ds, &mut buf).unwrap();
        let back: MultiTaskDataset<f64> = read_csv(buf.as_slice(), &CsvSchema::default()).unwrap();
        assert_eq!(ds, back);
    }

    #[test]
    fn one_vs_one_counts() {
        let feats: Vec<Vec<f64>> = (0..18).map(|i| vec![i as f64]).collect();
        let classes: Vec<i64> = (0..18).map(|i| if i < 5 { 0 } else if i < 11 { 1 } else { 2 }).collect();
        let ds = one_vs_one_tasks(&feats, &classes).unwrap();
        assert_eq!(ds.task_sizes(), vec![11, 12, 13]);
        assert_eq!(ds.tasks[0].name, "0_vs_1");
        assert_eq!(ds.tasks[0].labels[0], 1);

        let ten: Vec<i64> = (0..100).map(|i| i % 10).collect();
        let f10: Vec<Vec<f64>> = (0..100).map(|i| vec![i as f64]).collect();
        assert_eq!(one_vs_one_tasks(&f10, &ten).unwrap().num_tasks(), 45);
        let two: Vec<i64> = (0..10).map(|i| i % 2).collect();
        assert_eq!(one_vs_one_tasks(&f10[..10], &two).unwrap().num_tasks(), 1);
    }

    #[test]
    fn one_vs_one_skips_empty_class() {
        let feats: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64]).collect();
        let classes = [0, 0, 1, 1, 3, 3];
        let ds = one_vs_one_with_classes(&feats, &classes, &[0, 1, 2, 3]).unwrap();
        assert_eq!(ds.num_tasks(), 3);
        assert!(one_vs_one_tasks(&feats[..2], &classes[..2]).is_err());
    }

    #[test]
    fn split_is_stratified_and_deterministic() {
        let feats: Vec<Vec<f64>> = (0..200).map(|i| vec![i as f64]).collect();
        let labels: Vec<i8> = (0..200).map(|i| if i < 100 { 1 } else { -1 }).collect();
        let ds = MultiTaskDataset::new(vec![Task { name: "t".into(), features: feats, labels }]).unwrap();
        let (tr, te) = split(&ds, 0.1, 3).unwrap();
        assert_eq!(tr.tasks[0].labels.iter().filter(|&&y| y == 1).count(), 10);
        assert_eq!(tr.tasks[0].labels.iter().filter(|&&y| y == -1).count(), 10);
        assert_eq!(te.tasks[0].len(), 180);
        let (tr2, _) = split(&ds, 0.1, 3).unwrap();
        assert_eq!(tr, tr2);
        let mut all: Vec<i64> = tr.tasks[0].features.iter().chain(&te.tasks[0].features).map(|x| x[0] as i64).collect();
        all.sort_unstable();
        assert_eq!(all, (0..200).collect::<Vec<_>>());
    }

    #[test]
    fn split_keeps_singleton_class_in_train() {
        let ds = MultiTaskDataset::new(vec![Task {
            name: "t".into(),
            features: (0..5).map(|i| vec![i as f64]).collect(),
            labels: vec![1, -1, -1, -1, -1],
        }])
        .unwrap();
        let (tr, te) = split(&ds, 0.5, 1).unwrap();
        assert!(tr.tasks[0].labels.contains(&1));
        assert!(!te.tasks[0].labels.contains(&1));
    }

    #[test]
    fn synth_is_seeded_and_noise_free_separable() {
        let a: MultiTaskDataset<f64> = synth_multitask(2, 20, 3, 1.0, 0.0, 5).unwrap();
        let b: MultiTaskDataset<f64> = synth_multitask(2, 20, 3, 1.0, 0.0, 5).unwrap();
        assert_eq!(a, b);
        // relatedness 1: both tasks share the labelling rule, so identical x would get identical y
        assert_ne!(a, synth_multitask::<f64>(2, 20, 3, 1.0, 0.0, 6).unwrap());
    }
}
