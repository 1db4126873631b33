use std::collections::HashMap;
use std::io::BufRead;
use std::path::Path;

use super::TextError;

/// Word vectors in the plain-text `token v1 ... vd` distribution format.
#[derive(Debug, Clone, Default)]
pub struct EmbeddingTable {
    vocabulary: Vec<String>,
    index: HashMap<String, usize>,
    dim: usize,
    data: Vec<f32>,
    norms: Vec<f32>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        Self { dim, ..Self::default() }
    }

    pub fn from_rows<I, S>(rows: I) -> Result<Self, TextError>
    where
        I: IntoIterator<Item = (S, Vec<f32>)>,
        S: Into<String>,
    {
        let mut table: Option<Self> = None;
        for (i, (tok, v)) in rows.into_iter().enumerate() {
            let t = table.get_or_insert_with(|| Self::new(v.len()));
            t.push(tok.into(), &v).map_err(|m| TextError::Embedding { line: i + 1, message: m })?;
        }
        Ok(table.unwrap_or_default())
    }

    pub fn read<R: BufRead>(reader: R) -> Result<Self, TextError> {
        let mut table: Option<Self> = None;
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| TextError::Embedding { line: i + 1, message: e.to_string() })?;
            let mut parts = line.split(' ').filter(|p| !p.is_empty());
            let Some(tok) = parts.next() else { continue };
            let v: Result<Vec<f32>, _> = parts.map(str::parse::<f32>).collect();
            let v = v.map_err(|e| TextError::Embedding { line: i + 1, message: e.to_string() })?;
            let t = table.get_or_insert_with(|| Self::new(v.len()));
            t.push(tok.to_string(), &v).map_err(|m| TextError::Embedding { line: i + 1, message: m })?;
        }
        Ok(table.unwrap_or_default())
    }

    pub fn load(path: &Path) -> Result<Self, TextError> {
        let file = std::fs::File::open(path)
            .map_err(|e| TextError::Embedding { line: 0, message: format!("{}: {e}", path.display()) })?;
        Self::read(std::io::BufReader::new(file))
    }

    fn push(&mut self, token: String, v: &[f32]) -> Result<(), String> {
        if v.len() != self.dim || self.dim == 0 {
            return Err(format!("token {token:?} has dimension {}, expected {}", v.len(), self.dim));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(format!("token {token:?} has non-finite components"));
        }
        if self.index.contains_key(&token) {
            return Err(format!("duplicate token {token:?}"));
        }
        self.index.insert(token.clone(), self.vocabulary.len());
        self.vocabulary.push(token);
        self.data.extend_from_slice(v);
        self.norms.push(v.iter().map(|x| x * x).sum::<f32>().sqrt());
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocabulary.is_empty()
    }

    pub fn vocabulary(&self) -> &[String] {
        &self.vocabulary
    }

    /// Exact match first, then lowercase. A miss is `None`, never a zero vector.
    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).or_else(|| self.index.get(&token.to_lowercase())).copied()
    }

    pub fn get(&self, token: &str) -> Option<&[f32]> {
        self.index_of(token).map(|i| self.row(i))
    }

    fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Cosine similarity between two vocabulary rows; `None` if either is zero.
    pub fn cosine(&self, a: usize, b: usize) -> Option<f64> {
        let (na, nb) = (self.norms[a] as f64, self.norms[b] as f64);
        if na == 0.0 || nb == 0.0 {
            return None;
        }
        let dot: f64 = self.row(a).iter().zip(self.row(b)).map(|(x, y)| *x as f64 * *y as f64).sum();
        Some(dot / (na * nb))
    }

    /// The `k` tokens most cosine-similar to `anchor`, excluding the anchor,
    /// in descending similarity; ties broken by token order.
    pub fn nearest_neighbors(&self, anchor: &str, k: usize) -> Result<Vec<(String, f64)>, TextError> {
        let a = self.index_of(anchor).ok_or_else(|| TextError::OutOfVocabulary(anchor.to_string()))?;
        if k == 0 {
            return Ok(Vec::new());
        }
        let mut scored: Vec<(usize, f64)> =
            (0..self.len()).filter(|&i| i != a).filter_map(|i| self.cosine(a, i).map(|s| (i, s))).collect();
        scored.sort_by(|x, y| y.1.total_cmp(&x.1).then_with(|| self.vocabulary[x.0].cmp(&self.vocabulary[y.0])));
        scored.truncate(k);
        Ok(scored.into_iter().map(|(i, s)| (self.vocabulary[i].clone(), s)).collect())
    }
}
