//! Topic coherence and 2D topic embeddings.

use std::collections::HashMap;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::corpus::{Document, SlicedCorpus};
use crate::dtm::DtmModel;
use crate::error::{Error, Result};

/// Jensen-Shannon divergence with natural logarithms; lies in `[0, ln 2]`.
pub fn jensen_shannon(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Dimension(format!("distributions of length {} and {}", p.len(), q.len())));
    }
    if p.iter().chain(q).any(|&x| !(x >= 0.0) || !x.is_finite()) {
        return Err(Error::Invalid("distributions must have finite non-negative entries".into()));
    }
    let mut kp = 0.0;
    let mut kq = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        let m = 0.5 * (a + b);
        if a > 0.0 {
            kp += a * (a / m).ln();
        }
        if b > 0.0 {
            kq += b * (b / m).ln();
        }
    }
    Ok((0.5 * kp + 0.5 * kq).clamp(0.0, std::f64::consts::LN_2))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    /// One `(x, y)` row per input point.
    pub coords: Vec<[f64; 2]>,
    /// Eigenvalues of the double-centred matrix, largest first.
    pub eigenvalues: Vec<f64>,
}

/// Classical scaling of a distance matrix into two dimensions. Each axis is signed so
/// that its first clearly nonzero coordinate is positive.
pub fn pcoa_embed(distances: &[Vec<f64>]) -> Result<Embedding> {
    let n = distances.len();
    for (i, row) in distances.iter().enumerate() {
        if row.len() != n {
            return Err(Error::Dimension("distance matrix must be square".into()));
        }
        if row[i] != 0.0 {
            return Err(Error::Invalid("distance matrix must have a zero diagonal".into()));
        }
        for (j, &d) in row.iter().enumerate() {
            if !(d >= 0.0) || !d.is_finite() {
                return Err(Error::Invalid("distances must be finite and non-negative".into()));
            }
            if (d - distances[j][i]).abs() > 1e-12 * d.max(1.0) {
                return Err(Error::Invalid("distance matrix must be symmetric".into()));
            }
        }
    }
    if n == 0 {
        return Ok(Embedding {
            coords: Vec::new(),
            eigenvalues: Vec::new(),
        });
    }
    let sq = DMatrix::from_fn(n, n, |i, j| {
        let d = 0.5 * (distances[i][j] + distances[j][i]);
        d * d
    });
    let row_mean: Vec<f64> = (0..n).map(|i| sq.row(i).sum() / n as f64).collect();
    let grand = row_mean.iter().sum::<f64>() / n as f64;
    let b = DMatrix::from_fn(n, n, |i, j| -0.5 * (sq[(i, j)] - row_mean[i] - row_mean[j] + grand));
    let eig = SymmetricEigen::new(b);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &c| eig.eigenvalues[c].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&c)));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let top = eigenvalues.first().copied().unwrap_or(0.0).max(0.0);
    let cutoff = 1e-12 * top.max(1e-300);

    let mut coords = vec![[0.0; 2]; n];
    for axis in 0..2.min(n) {
        let lambda = eigenvalues[axis];
        if lambda <= cutoff {
            continue;
        }
        let col = eig.eigenvectors.column(order[axis]);
        let scale = lambda.sqrt();
        let mut vals: Vec<f64> = col.iter().map(|v| v * scale).collect();
        let tiny = 1e-9 * vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if let Some(first) = vals.iter().find(|v| v.abs() > tiny) {
            if *first < 0.0 {
                for v in &mut vals {
                    *v = -*v;
                }
            }
        }
        for (c, v) in coords.iter_mut().zip(vals) {
            c[axis] = v;
        }
    }
    Ok(Embedding { coords, eigenvalues })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddedTopic {
    pub topic_id: usize,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceEmbedding {
    pub slice: usize,
    pub topics: Vec<EmbeddedTopic>,
    pub eigenvalues: Vec<f64>,
}

/// Per-slice embedding of the topics, using `sqrt(JS)` as the distance.
pub fn embed_model(model: &DtmModel) -> Result<Vec<SliceEmbedding>> {
    (0..model.num_slices())
        .map(|t| {
            let dists: Vec<Vec<f64>> = (0..model.num_topics())
                .map(|k| model.topic_word_dist(t, k))
                .collect::<Result<_>>()?;
            let k = dists.len();
            let mut d = vec![vec![0.0; k]; k];
            for i in 0..k {
                for j in i + 1..k {
                    let v = jensen_shannon(&dists[i], &dists[j])?.sqrt();
                    d[i][j] = v;
                    d[j][i] = v;
                }
            }
            let e = pcoa_embed(&d)?;
            Ok(SliceEmbedding {
                slice: t,
                topics: e
                    .coords
                    .iter()
                    .enumerate()
                    .map(|(topic_id, c)| EmbeddedTopic {
                        topic_id,
                        x: c[0],
                        y: c[1],
                    })
                    .collect(),
                eigenvalues: e.eigenvalues,
            })
        })
        .collect()
}

/// Inverted index of document occurrence used for co-occurrence counts.
pub struct Cooccurrence {
    postings: HashMap<usize, Vec<u32>>,
}

impl Cooccurrence {
    pub fn new<'a>(docs: impl IntoIterator<Item = &'a Document>) -> Self {
        let mut postings: HashMap<usize, Vec<u32>> = HashMap::new();
        for (d, doc) in docs.into_iter().enumerate() {
            for &(w, c) in &doc.counts {
                if c > 0 {
                    let list = postings.entry(w).or_default();
                    if list.last() != Some(&(d as u32)) {
                        list.push(d as u32);
                    }
                }
            }
        }
        Cooccurrence { postings }
    }

    pub fn from_corpus(corpus: &SlicedCorpus) -> Self {
        Self::new(&corpus.documents)
    }

    /// Number of documents containing `w`.
    pub fn doc_freq(&self, w: usize) -> usize {
        self.postings.get(&w).map_or(0, Vec::len)
    }

    /// Number of documents containing both words.
    pub fn co_doc_freq(&self, a: usize, b: usize) -> usize {
        let (Some(x), Some(y)) = (self.postings.get(&a), self.postings.get(&b)) else {
            return 0;
        };
        let (mut i, mut j, mut n) = (0, 0, 0);
        while i < x.len() && j < y.len() {
            match x[i].cmp(&y[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    n += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        n
    }
}

/// UMass coherence of a ranked word list: `sum_{i<j} log((D(w_i, w_j) + 1) / D(w_j))`.
/// Pairs with `D(w_j) = 0` are skipped; returns the value and the number skipped.
pub fn umass(words: &[usize], index: &Cooccurrence) -> Result<(f64, usize)> {
    if words.len() < 2 {
        return Err(Error::Invalid("coherence needs at least two words".into()));
    }
    let mut c = 0.0;
    let mut skipped = 0;
    for j in 1..words.len() {
        let dj = index.doc_freq(words[j]);
        for i in 0..j {
            if dj == 0 {
                skipped += 1;
                continue;
            }
            c += ((index.co_doc_freq(words[i], words[j]) + 1) as f64 / dj as f64).ln();
        }
    }
    Ok((c, skipped))
}

/// Coherence of topic `k` at slice `t` over its `top_n` most probable words.
pub fn umass_coherence(model: &DtmModel, t: usize, k: usize, top_n: usize, index: &Cooccurrence) -> Result<(f64, usize)> {
    let words: Vec<usize> = model.top_words(t, k, top_n)?.into_iter().map(|(w, _)| w).collect();
    umass(&words, index)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoherenceReport {
    /// `values[t][k]`.
    pub values: Vec<Vec<f64>>,
    pub mean: f64,
    pub variance: f64,
    pub skipped_pairs: usize,
}

/// Arithmetic mean and population variance.
pub fn mean_variance(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var)
}

pub fn model_coherence(model: &DtmModel, corpus: &SlicedCorpus, top_n: usize) -> Result<CoherenceReport> {
    let index = Cooccurrence::from_corpus(corpus);
    let mut values = Vec::new();
    let mut skipped_pairs = 0;
    for t in 0..model.num_slices() {
        let mut row = Vec::new();
        for k in 0..model.num_topics() {
            let (c, s) = umass_coherence(model, t, k, top_n, &index)?;
            row.push(c);
            skipped_pairs += s;
        }
        values.push(row);
    }
    let flat: Vec<f64> = values.iter().flatten().copied().collect();
    let (mean, variance) = mean_variance(&flat);
    Ok(CoherenceReport {
        values,
        mean,
        variance,
        skipped_pairs,
    })
}
