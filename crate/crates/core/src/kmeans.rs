//! K-means over word vectors, used to give each preterminal an initial
//! preference for one cluster of words.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grammar::LexGrammar;

const MAX_ITERATIONS: usize = 50;
const TOLERANCE: f64 = 1e-6;

/// Word → dense vector, all of one dimension.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct WordVectors {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl WordVectors {
    pub fn new(vectors: HashMap<String, Vec<f64>>) -> Result<Self> {
        let dim = vectors.values().next().map_or(0, Vec::len);
        if let Some((w, v)) = vectors.iter().find(|(_, v)| v.len() != dim) {
            return Err(Error::Input(format!("vector for {w:?} has {} dims, expected {dim}", v.len())));
        }
        Ok(WordVectors { dim, vectors })
    }

    /// `word v1 v2 ...` per line. A leading `count dim` header line, as in
    /// `.vec` files, is skipped.
    pub fn parse(text: &str, path: &str) -> Result<Self> {
        let mut vectors = HashMap::new();
        let mut dim = None;
        for (i, line) in text.lines().enumerate() {
            let mut parts = line.split_whitespace();
            let Some(word) = parts.next() else { continue };
            let vals: std::result::Result<Vec<f64>, _> = parts.map(str::parse::<f64>).collect();
            let vals = vals.map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
            if i == 0 && vals.len() == 1 && word.parse::<usize>().is_ok() {
                continue;
            }
            if vals.is_empty() {
                return Err(Error::parse(path, i + 1, "word without vector"));
            }
            match dim {
                None => dim = Some(vals.len()),
                Some(d) if d != vals.len() => {
                    return Err(Error::parse(path, i + 1, format!("expected {d} values, found {}", vals.len())))
                }
                _ => {}
            }
            vectors.insert(word.to_lowercase(), vals);
        }
        Ok(WordVectors {
            dim: dim.unwrap_or(0),
            vectors,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::parse(&fs::read_to_string(path)?, &path.display().to_string())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.vectors.get(word).map(Vec::as_slice)
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        let mut words: Vec<&String> = self.vectors.keys().collect();
        words.sort();
        for w in words {
            for (a, b) in m.iter_mut().zip(&self.vectors[w]) {
                *a += b;
            }
        }
        let n = self.vectors.len().max(1) as f64;
        m.iter_mut().for_each(|x| *x /= n);
        m
    }
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, cent) in centroids.iter().enumerate() {
        let d = dist2(p, cent);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn seed_centroids(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centroids = vec![points[rng.random_range(0..points.len())].clone()];
    while centroids.len() < k {
        let d: Vec<f64> = points.iter().map(|p| nearest(p, &centroids).1).collect();
        let total: f64 = d.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            let mut idx = points.len() - 1;
            for (i, di) in d.iter().enumerate() {
                if r < *di {
                    idx = i;
                    break;
                }
                r -= di;
            }
            idx
        } else {
            rng.random_range(0..points.len())
        };
        centroids.push(points[pick].clone());
    }
    centroids
}

/// k-means++ seeding followed by Lloyd iterations. Returns the cluster of
/// each point. A cluster that loses all its points keeps its centroid.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64) -> Result<Vec<usize>> {
    if points.is_empty() {
        return Err(Error::Input("k-means needs at least one point".into()));
    }
    if k == 0 {
        return Err(Error::Config("k-means needs k > 0".into()));
    }
    let dim = points[0].len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = seed_centroids(points, k, &mut rng);
    let mut assign = vec![0; points.len()];
    for _ in 0..MAX_ITERATIONS {
        for (a, p) in assign.iter_mut().zip(points) {
            *a = nearest(p, &centroids).0;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (a, p) in assign.iter().zip(points) {
            counts[*a] += 1;
            for (s, x) in sums[*a].iter_mut().zip(p) {
                *s += x;
            }
        }
        let mut moved: f64 = 0.0;
        for c in 0..k {
            if counts[c] == 0 {
                continue;
            }
            let next: Vec<f64> = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            moved = moved.max(dist2(&next, &centroids[c]).sqrt());
            centroids[c] = next;
        }
        if moved < TOLERANCE {
            break;
        }
    }
    for (a, p) in assign.iter_mut().zip(points) {
        *a = nearest(p, &centroids).0;
    }
    Ok(assign)
}

/// Clusters the vocabulary into `k` groups and adds `bonus` to
/// `emit[T_c][w]` for every word `w` in cluster `c`. Words without a vector
/// use the mean vector.
pub fn init_emissions_from_clusters(
    grammar: &LexGrammar,
    vectors: &WordVectors,
    k: usize,
    bonus: f64,
    seed: u64,
) -> Result<(LexGrammar, Vec<usize>)> {
    if k != grammar.num_preterminals() {
        return Err(Error::Config(format!(
            "k = {k} but the grammar has {} preterminals",
            grammar.num_preterminals()
        )));
    }
    if vectors.is_empty() {
        return Err(Error::Input("empty word-vector table".into()));
    }
    let mean = vectors.mean();
    let mut missing = 0;
    let points: Vec<Vec<f64>> = grammar
        .vocab()
        .words()
        .iter()
        .map(|w| match vectors.get(w) {
            Some(v) => v.to_vec(),
            None => {
                missing += 1;
                mean.clone()
            }
        })
        .collect();
    if missing > 0 {
        log::info!("{missing} vocabulary words have no vector; using the mean vector");
    }
    let assign = kmeans(&points, k, seed)?;
    let mut out = grammar.clone();
    out.update(|t| {
        for (w, &c) in assign.iter().enumerate() {
            let idx = t.emit_index(c, w);
            t.emit[idx] += bonus;
        }
    })?;
    Ok((out, assign))
}
