//! Embedding datasets: file formats, synthetic Gaussian mixtures, embedding
//! space augmentation and mini-batch sampling.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array2, Axis};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::binio::{write_f64s, write_u64, SectionReader};
use crate::error::{Error, Result};

/// Magic prefix of the binary dataset container (padded to 16 bytes).
pub const DATASET_MAGIC: [u8; 16] = *b"IOCCDS01\0\0\0\0\0\0\0\0";

const FLAG_VIEWS: u64 = 1;
const FLAG_LABELS: u64 = 1 << 1;

/// Fixed sample embeddings plus optional precomputed views and labels.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingDataset {
    pub x: Array2<f64>,
    /// Two augmented copies of `x`, row-aligned.
    pub views: Option<(Array2<f64>, Array2<f64>)>,
    pub y_true: Option<Vec<usize>>,
    /// Indices of the samples whose labels may be used for training.
    pub labeled_idx: Vec<usize>,
    pub k: usize,
}

impl EmbeddingDataset {
    /// Builds a dataset and checks every structural invariant.
    pub fn new(
        x: Array2<f64>,
        views: Option<(Array2<f64>, Array2<f64>)>,
        y_true: Option<Vec<usize>>,
        labeled_idx: Vec<usize>,
        k: usize,
    ) -> Result<Self> {
        let ds = Self {
            x,
            views,
            y_true,
            labeled_idx,
            k,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if self.k == 0 {
            return Err(Error::Config("cluster count K must be at least 1".into()));
        }
        if let Some((v1, v2)) = &self.views {
            if v1.dim() != self.x.dim() || v2.dim() != self.x.dim() {
                return Err(Error::Shape(format!(
                    "views {:?}/{:?} do not match embeddings {:?}",
                    v1.dim(),
                    v2.dim(),
                    self.x.dim()
                )));
            }
        }
        if let Some(y) = &self.y_true {
            if y.len() != n {
                return Err(Error::Shape(format!("{} labels for {} samples", y.len(), n)));
            }
            if let Some(&bad) = y.iter().find(|&&l| l >= self.k) {
                return Err(Error::Label { label: bad, k: self.k });
            }
        }
        let mut seen = HashSet::with_capacity(self.labeled_idx.len());
        for &i in &self.labeled_idx {
            if i >= n {
                return Err(Error::Shape(format!("labeled index {i} out of range for n = {n}")));
            }
            if !seen.insert(i) {
                return Err(Error::Shape(format!("labeled index {i} repeated")));
            }
        }
        if !self.labeled_idx.is_empty() && self.y_true.is_none() {
            return Err(Error::Shape("labeled indices given without labels".into()));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    /// Indices that are not in the labeled subset, ascending.
    pub fn unlabeled_idx(&self) -> Vec<usize> {
        let labeled: HashSet<usize> = self.labeled_idx.iter().copied().collect();
        (0..self.n()).filter(|i| !labeled.contains(i)).collect()
    }

    /// Mean Euclidean norm of the embedding rows.
    pub fn mean_row_norm(&self) -> f64 {
        if self.n() == 0 {
            return 0.0;
        }
        let total: f64 = self
            .x
            .axis_iter(Axis(0))
            .map(|r| r.dot(&r).sqrt())
            .sum();
        total / self.n() as f64
    }

    /// Per-cluster sample counts (requires labels).
    pub fn cluster_sizes(&self) -> Option<Vec<usize>> {
        self.y_true.as_ref().map(|y| {
            let mut sizes = vec![0; self.k];
            for &l in y {
                sizes[l] += 1;
            }
            sizes
        })
    }
}

fn is_jsonl(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()),
        Some("jsonl") | Some("ndjson")
    )
}

/// Loads a dataset, choosing the JSON-lines reader for `.jsonl`/`.ndjson`
/// paths and the binary container otherwise.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<EmbeddingDataset> {
    let path = path.as_ref();
    let file = File::open(path)?;
    if is_jsonl(path) {
        read_jsonl(BufReader::new(file))
    } else {
        let len = file.metadata()?.len();
        read_binary(BufReader::new(file), len)
    }
}

pub fn save_dataset(ds: &EmbeddingDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = BufWriter::new(File::create(path)?);
    if is_jsonl(path) {
        write_jsonl(ds, &mut w)?;
    } else {
        write_binary(ds, &mut w)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_binary<W: Write>(ds: &EmbeddingDataset, w: &mut W) -> Result<()> {
    let mut flags = 0;
    if ds.views.is_some() {
        flags |= FLAG_VIEWS;
    }
    if ds.y_true.is_some() {
        flags |= FLAG_LABELS;
    }
    w.write_all(&DATASET_MAGIC)?;
    write_u64(w, ds.n() as u64)?;
    write_u64(w, ds.dim() as u64)?;
    write_u64(w, ds.k as u64)?;
    write_u64(w, flags)?;
    write_f64s(w, ds.x.iter())?;
    if let Some((v1, v2)) = &ds.views {
        write_f64s(w, v1.iter())?;
        write_f64s(w, v2.iter())?;
    }
    if let Some(y) = &ds.y_true {
        for &l in y {
            w.write_all(&(l as u32).to_le_bytes())?;
        }
    }
    write_u64(w, ds.labeled_idx.len() as u64)?;
    for &i in &ds.labeled_idx {
        write_u64(w, i as u64)?;
    }
    Ok(())
}

/// Parses the binary container. `total_len` is the byte length of the
/// stream and is used to detect sections that disagree with the header.
pub fn read_binary<R: Read>(r: R, total_len: u64) -> Result<EmbeddingDataset> {
    let mut r = SectionReader::new(r);
    let magic = r.bytes::<16>("magic")?;
    if magic != DATASET_MAGIC {
        return Err(Error::parse("magic", 0, "not an IOCCDS01 dataset file"));
    }
    let n = r.usize("header")?;
    let d = r.usize("header")?;
    let k = r.usize("header")?;
    let flags = r.u64("header")?;
    if k == 0 {
        return Err(Error::parse("header", 32, "K must be at least 1"));
    }
    if flags & !(FLAG_VIEWS | FLAG_LABELS) != 0 {
        return Err(Error::parse("header", 40, format!("unknown flag bits {flags:#x}")));
    }
    let has_views = flags & FLAG_VIEWS != 0;
    let has_labels = flags & FLAG_LABELS != 0;

    let cells = n
        .checked_mul(d)
        .ok_or_else(|| Error::parse("header", 16, "n * d overflows"))? as u64;
    let matrices = if has_views { 3 } else { 1 };
    let label_bytes = if has_labels { 4 * n as u64 } else { 0 };
    let min_len = r.offset() + matrices * cells * 8 + label_bytes + 8;
    if total_len < min_len || !(total_len - min_len).is_multiple_of(8) {
        return Err(Error::parse(
            "body",
            r.offset(),
            format!(
                "shape mismatch: header says n={n}, d={d} (views: {has_views}, labels: {has_labels}) \
                 which needs {min_len} bytes plus 8 per labeled index, file has {total_len}"
            ),
        ));
    }

    let read_matrix = |r: &mut SectionReader<R>, section| -> Result<Array2<f64>> {
        let vals = r.f64_vec(n * d, section)?;
        Ok(Array2::from_shape_vec((n, d), vals).expect("length checked"))
    };
    let x = read_matrix(&mut r, "X")?;
    let views = if has_views {
        let v1 = read_matrix(&mut r, "view1")?;
        let v2 = read_matrix(&mut r, "view2")?;
        Some((v1, v2))
    } else {
        None
    };
    let y_true = if has_labels {
        let mut y = Vec::with_capacity(n);
        for _ in 0..n {
            let at = r.offset();
            let l = r.u32("labels")? as usize;
            if l >= k {
                return Err(Error::parse("labels", at, format!("label {l} >= K = {k}")));
            }
            y.push(l);
        }
        Some(y)
    } else {
        None
    };
    let count_at = r.offset();
    let m = r.usize("labeled_idx")?;
    let remaining = total_len - r.offset();
    if remaining != 8 * m as u64 {
        return Err(Error::parse(
            "labeled_idx",
            count_at,
            format!("shape mismatch: count says {m} entries but {remaining} bytes remain"),
        ));
    }
    let mut labeled_idx = Vec::with_capacity(m);
    for _ in 0..m {
        labeled_idx.push(r.usize("labeled_idx")?);
    }
    r.expect_eof("labeled_idx")?;
    EmbeddingDataset::new(x, views, y_true, labeled_idx, k)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonSample {
    id: u64,
    vector: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labeled: Option<bool>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonMeta {
    num_clusters: usize,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum JsonLine {
    Meta(JsonMeta),
    Sample(JsonSample),
}

/// Reads the JSON-lines format: one `{"id", "vector", "label"?, "labeled"?}`
/// object per sample and an optional `{"num_clusters": K}` line. When no
/// sample carries `labeled`, the labeled subset follows [`labeled_counts`]
/// with a fixed seed.
pub fn read_jsonl<R: BufRead>(r: R) -> Result<EmbeddingDataset> {
    let mut k_meta = None;
    let mut samples = Vec::new();
    let mut offset = 0u64;
    for line in r.lines() {
        let line = line?;
        let at = offset;
        offset += line.len() as u64 + 1;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<JsonLine>(&line) {
            Ok(JsonLine::Meta(m)) => k_meta = Some(m.num_clusters),
            Ok(JsonLine::Sample(s)) => samples.push((at, s)),
            Err(e) => return Err(Error::parse("record", at, e.to_string())),
        }
    }
    if samples.is_empty() {
        return Err(Error::parse("record", 0, "no samples"));
    }
    let d = samples[0].1.vector.len();
    let n = samples.len();
    let mut ids = HashSet::with_capacity(n);
    let mut flat = Vec::with_capacity(n * d);
    let with_label = samples.iter().filter(|(_, s)| s.label.is_some()).count();
    if with_label != 0 && with_label != n {
        return Err(Error::parse(
            "label",
            0,
            format!("{with_label} of {n} records carry a label; labels must be all or none"),
        ));
    }
    let mut y = Vec::new();
    let mut labeled_idx = Vec::new();
    let mut any_flag = false;
    for (row, (at, s)) in samples.iter().enumerate() {
        if s.vector.len() != d {
            return Err(Error::parse(
                "vector",
                *at,
                format!("shape mismatch: vector of length {} (expected {d})", s.vector.len()),
            ));
        }
        if !ids.insert(s.id) {
            return Err(Error::parse("id", *at, format!("duplicate id {}", s.id)));
        }
        flat.extend_from_slice(&s.vector);
        if let Some(l) = s.label {
            y.push(l);
        }
        if let Some(flag) = s.labeled {
            any_flag = true;
            if flag {
                labeled_idx.push(row);
            }
        }
    }
    let k = match k_meta {
        Some(k) => k,
        None => y.iter().max().map(|m| m + 1).unwrap_or(0),
    };
    if k == 0 {
        return Err(Error::parse(
            "meta",
            0,
            "cluster count unknown: add a {\"num_clusters\": K} line or labels",
        ));
    }
    if let Some((at, bad)) = samples
        .iter()
        .filter_map(|(at, s)| s.label.filter(|&l| l >= k).map(|l| (*at, l)))
        .next()
    {
        return Err(Error::parse("label", at, format!("label {bad} >= K = {k}")));
    }
    let y_true = if y.is_empty() { None } else { Some(y) };
    if !any_flag {
        if let Some(y) = &y_true {
            labeled_idx = stratified_labeled(y, k, &mut ChaCha8Rng::seed_from_u64(0));
        }
    }
    let x = Array2::from_shape_vec((n, d), flat).expect("length checked");
    EmbeddingDataset::new(x, None, y_true, labeled_idx, k)
}

pub fn write_jsonl<W: Write>(ds: &EmbeddingDataset, w: &mut W) -> Result<()> {
    serde_json::to_writer(&mut *w, &JsonMeta { num_clusters: ds.k })?;
    writeln!(w)?;
    let labeled: HashSet<usize> = ds.labeled_idx.iter().copied().collect();
    for (i, row) in ds.x.axis_iter(Axis(0)).enumerate() {
        let rec = JsonSample {
            id: i as u64,
            vector: row.to_vec(),
            label: ds.y_true.as_ref().map(|y| y[i]),
            labeled: ds.y_true.as_ref().map(|_| labeled.contains(&i)),
        };
        serde_json::to_writer(&mut *w, &rec)?;
        writeln!(w)?;
    }
    Ok(())
}

/// Parameters of a synthetic Gaussian-mixture embedding dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub k: usize,
    pub n: usize,
    pub d: usize,
    /// Norm of every cluster mean.
    pub center_separation: f64,
    /// Within-cluster standard deviation per coordinate.
    pub noise_sigma: f64,
    /// Largest-to-smallest cluster size ratio.
    pub imbalance_ratio: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("K must be at least 1".into()));
        }
        if self.n < self.k {
            return Err(Error::Config(format!("n = {} is smaller than K = {}", self.n, self.k)));
        }
        if self.d == 0 {
            return Err(Error::Config("d must be at least 1".into()));
        }
        if !(self.imbalance_ratio >= 1.0) || !self.imbalance_ratio.is_finite() {
            return Err(Error::Config("imbalance ratio must be a finite value >= 1".into()));
        }
        if !(self.noise_sigma >= 0.0) || !(self.center_separation >= 0.0) {
            return Err(Error::Config("separation and sigma must be non-negative".into()));
        }
        Ok(())
    }
}

/// Cluster sizes following a geometric profile from largest to smallest,
/// `n * r^(-k/(K-1))` normalized, rounded by largest remainder with every
/// cluster receiving at least one sample.
pub fn cluster_sizes(n: usize, k: usize, ratio: f64) -> Vec<usize> {
    assert!(k >= 1 && n >= k);
    if k == 1 {
        return vec![n];
    }
    let weights: Vec<f64> = (0..k)
        .map(|j| ratio.powf(-(j as f64) / (k - 1) as f64))
        .collect();
    let total: f64 = weights.iter().sum();
    // One sample per cluster is reserved up front, the rest is apportioned.
    let spare = (n - k) as f64;
    let exact: Vec<f64> = weights
        .iter()
        .map(|w| n as f64 * w / total - 1.0)
        .map(|e| e.max(0.0))
        .collect();
    let scale = spare / exact.iter().sum::<f64>().max(f64::MIN_POSITIVE);
    let exact: Vec<f64> = exact.iter().map(|e| e * scale).collect();
    let mut sizes: Vec<usize> = exact.iter().map(|e| e.floor() as usize + 1).collect();
    let mut left = n - sizes.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for &j in order.iter().cycle() {
        if left == 0 {
            break;
        }
        sizes[j] += 1;
        left -= 1;
    }
    sizes
}

/// Number of labeled samples per cluster: 1% of each cluster (at least one)
/// when the average cluster holds more than 100 samples, otherwise exactly one.
pub fn labeled_counts(sizes: &[usize]) -> Vec<usize> {
    let n: usize = sizes.iter().sum();
    let k = sizes.len().max(1);
    if n as f64 / k as f64 > 100.0 {
        sizes
            .iter()
            .map(|&s| ((s as f64 * 0.01).round() as usize).clamp(1, s.max(1)))
            .collect()
    } else {
        sizes.iter().map(|&s| s.min(1)).collect()
    }
}

/// Draws the labeled subset per cluster according to [`labeled_counts`].
pub fn stratified_labeled<R: Rng + ?Sized>(y: &[usize], k: usize, rng: &mut R) -> Vec<usize> {
    let mut members = vec![Vec::new(); k];
    for (i, &l) in y.iter().enumerate() {
        members[l].push(i);
    }
    let sizes: Vec<usize> = members.iter().map(Vec::len).collect();
    let counts = labeled_counts(&sizes);
    let mut out = Vec::new();
    for (idx, count) in members.iter().zip(counts) {
        for pick in index::sample(rng, idx.len(), count) {
            out.push(idx[pick]);
        }
    }
    out.sort_unstable();
    out
}

const MAX_DIRECTION_TRIES: usize = 1000;

fn random_unit<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Samples a labeled Gaussian mixture. Means are `center_separation` times
/// random unit directions whose pairwise dot products stay below 0.5.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<EmbeddingDataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut dirs: Vec<Vec<f64>> = Vec::with_capacity(spec.k);
    for c in 0..spec.k {
        let mut accepted = None;
        for _ in 0..MAX_DIRECTION_TRIES {
            let u = random_unit(spec.d, &mut rng);
            let ok = dirs
                .iter()
                .all(|v| v.iter().zip(&u).map(|(a, b)| a * b).sum::<f64>() < 0.5);
            if ok {
                accepted = Some(u);
                break;
            }
        }
        match accepted {
            Some(u) => dirs.push(u),
            None => {
                return Err(Error::Config(format!(
                    "could not place cluster mean {c} after {MAX_DIRECTION_TRIES} tries \
                     (d = {} is too small for K = {})",
                    spec.d, spec.k
                )))
            }
        }
    }

    let sizes = cluster_sizes(spec.n, spec.k, spec.imbalance_ratio);
    let mut y: Vec<usize> = sizes
        .iter()
        .enumerate()
        .flat_map(|(c, &s)| std::iter::repeat_n(c, s))
        .collect();
    // Fisher-Yates so that cluster membership is not contiguous.
    for i in (1..y.len()).rev() {
        let j = rng.random_range(0..=i);
        y.swap(i, j);
    }

    let mut x = Array2::zeros((spec.n, spec.d));
    for (mut row, &c) in x.axis_iter_mut(Axis(0)).zip(&y) {
        for (v, m) in row.iter_mut().zip(&dirs[c]) {
            let eps: f64 = StandardNormal.sample(&mut rng);
            *v = spec.center_separation * m + spec.noise_sigma * eps;
        }
    }
    let labeled_idx = stratified_labeled(&y, spec.k, &mut rng);
    EmbeddingDataset::new(x, None, Some(y), labeled_idx, spec.k)
}

/// Two Gaussian perturbations `X + e1`, `X + e2` with i.i.d. N(0, sigma^2)
/// entries. `sigma_aug == 0` yields exact copies.
pub fn make_views(x: &Array2<f64>, sigma_aug: f64, seed: u64) -> (Array2<f64>, Array2<f64>) {
    assert!(sigma_aug >= 0.0, "augmentation sigma must be non-negative");
    if sigma_aug == 0.0 {
        return (x.clone(), x.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perturb = |src: &Array2<f64>| {
        src.mapv(|v| {
            let e: f64 = StandardNormal.sample(&mut rng);
            v + sigma_aug * e
        })
    };
    let v1 = perturb(x);
    let v2 = perturb(x);
    (v1, v2)
}

/// Labeled half of a mini-batch.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledPart {
    pub x0: Array2<f64>,
    pub view1: Array2<f64>,
    pub view2: Array2<f64>,
    pub labels: Vec<usize>,
    pub indices: Vec<usize>,
}

/// Unlabeled half of a mini-batch.
#[derive(Clone, Debug, PartialEq)]
pub struct UnlabeledPart {
    pub x0: Array2<f64>,
    pub view1: Array2<f64>,
    pub view2: Array2<f64>,
    pub indices: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub labeled: LabeledPart,
    pub unlabeled: UnlabeledPart,
}

/// Draws mini-batches with replacement from the labeled and unlabeled pools
/// of one dataset.
#[derive(Clone, Debug)]
pub struct BatchSampler {
    labeled: Vec<usize>,
    unlabeled: Vec<usize>,
}

impl BatchSampler {
    pub fn new(ds: &EmbeddingDataset) -> Result<Self> {
        if ds.labeled_idx.is_empty() {
            return Err(Error::Config("labeled pool is empty".into()));
        }
        let unlabeled = ds.unlabeled_idx();
        if unlabeled.is_empty() {
            return Err(Error::Config("unlabeled pool is empty".into()));
        }
        Ok(Self {
            labeled: ds.labeled_idx.clone(),
            unlabeled,
        })
    }

    pub fn labeled_pool(&self) -> &[usize] {
        &self.labeled
    }

    pub fn unlabeled_pool(&self) -> &[usize] {
        &self.unlabeled
    }

    /// Samples `b` labeled and `mu_b` unlabeled rows. Stored views are used
    /// when the dataset has them; otherwise views come from [`make_views`]
    /// with seeds drawn from `rng`.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        ds: &EmbeddingDataset,
        b: usize,
        mu_b: usize,
        sigma_aug: f64,
        rng: &mut R,
    ) -> Batch {
        let l_idx: Vec<usize> = (0..b)
            .map(|_| self.labeled[rng.random_range(0..self.labeled.len())])
            .collect();
        let u_idx: Vec<usize> = (0..mu_b)
            .map(|_| self.unlabeled[rng.random_range(0..self.unlabeled.len())])
            .collect();
        let seed_l: u64 = rng.random();
        let seed_u: u64 = rng.random();
        let y = ds.y_true.as_ref().expect("labeled pool implies labels");

        let gather = |idx: &[usize], seed: u64| {
            let x0 = ds.x.select(Axis(0), idx);
            let (v1, v2) = match &ds.views {
                Some((a, b)) => (a.select(Axis(0), idx), b.select(Axis(0), idx)),
                None => make_views(&x0, sigma_aug, seed),
            };
            (x0, v1, v2)
        };
        let (lx, lv1, lv2) = gather(&l_idx, seed_l);
        let (ux, uv1, uv2) = gather(&u_idx, seed_u);
        Batch {
            labeled: LabeledPart {
                x0: lx,
                view1: lv1,
                view2: lv2,
                labels: l_idx.iter().map(|&i| y[i]).collect(),
                indices: l_idx,
            },
            unlabeled: UnlabeledPart {
                x0: ux,
                view1: uv1,
                view2: uv2,
                indices: u_idx,
            },
        }
    }
}

/// One-shot convenience wrapper around [`BatchSampler`].
pub fn sample_batch<R: Rng + ?Sized>(
    ds: &EmbeddingDataset,
    b: usize,
    mu_b: usize,
    sigma_aug: f64,
    rng: &mut R,
) -> Result<Batch> {
    Ok(BatchSampler::new(ds)?.sample(ds, b, mu_b, sigma_aug, rng))
}
