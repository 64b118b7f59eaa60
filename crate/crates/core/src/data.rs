//! The data matrix: one response row and `m` feature rows over `n` samples.

use std::collections::BTreeSet;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the response row is interpreted.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResponseKind {
    /// Non-numeric tokens make the response categorical; otherwise numeric.
    #[default]
    Auto,
    Categorical,
    Numeric,
}

/// The response row `y`.
#[derive(Clone, Debug, PartialEq)]
pub enum Response {
    /// Class labels coded `0..levels.len()`, levels in sorted order.
    Categorical { codes: Vec<u32>, levels: Vec<String> },
    Numeric(Vec<f64>),
}

/// Response expressed as category codes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Labels {
    pub codes: Vec<u32>,
    pub n_levels: usize,
}

impl Labels {
    pub fn counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_levels];
        for &c in &self.codes {
            counts[c as usize] += 1;
        }
        counts
    }
}

impl Response {
    pub fn categorical<S: AsRef<str>>(labels: &[S]) -> Self {
        let levels: Vec<String> = labels
            .iter()
            .map(|s| s.as_ref().to_string())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let codes = labels
            .iter()
            .map(|s| levels.binary_search_by(|l| l.as_str().cmp(s.as_ref())).unwrap() as u32)
            .collect();
        Response::Categorical { codes, levels }
    }

    /// Two-group response with `n1` samples of label `1` followed by `n2` of label `2`.
    pub fn two_groups(n1: usize, n2: usize) -> Self {
        let mut codes = vec![0; n1];
        codes.resize(n1 + n2, 1);
        Response::Categorical {
            codes,
            levels: vec!["1".into(), "2".into()],
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Response::Categorical { codes, .. } => codes.len(),
            Response::Numeric(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Category codes; a numeric response is coded by its sorted distinct values.
    pub fn labels(&self) -> Labels {
        match self {
            Response::Categorical { codes, levels } => Labels {
                codes: codes.clone(),
                n_levels: levels.len(),
            },
            Response::Numeric(values) => {
                let (codes, n_levels) = dense_codes(values);
                Labels { codes, n_levels }
            }
        }
    }

    /// Codes of a two-label response (`0` is group 1), with the group sizes.
    pub fn two_groups_labels(&self) -> Result<(Labels, usize, usize)> {
        let labels = self.labels();
        if labels.n_levels != 2 {
            return Err(Error::precondition(format!(
                "two-sample test needs exactly two response labels, found {}",
                labels.n_levels
            )));
        }
        let counts = labels.counts();
        Ok((labels, counts[0], counts[1]))
    }

    pub fn numeric_values(&self) -> Result<&[f64]> {
        match self {
            Response::Numeric(v) => Ok(v),
            Response::Categorical { .. } => Err(Error::precondition(
                "test requires a numeric response but the response is categorical",
            )),
        }
    }

    /// Returns the response reordered so that position `i` holds entry `g[i]`.
    pub fn permuted(&self, g: &[usize]) -> Response {
        match self {
            Response::Categorical { codes, levels } => Response::Categorical {
                codes: g.iter().map(|&i| codes[i]).collect(),
                levels: levels.clone(),
            },
            Response::Numeric(v) => Response::Numeric(g.iter().map(|&i| v[i]).collect()),
        }
    }
}

/// Codes values by the rank of their distinct value; returns (codes, distinct count).
pub(crate) fn dense_codes(values: &[f64]) -> (Vec<u32>, usize) {
    let mut distinct: Vec<f64> = values.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let codes = values
        .iter()
        .map(|v| distinct.binary_search_by(|d| d.total_cmp(v)).unwrap() as u32)
        .collect();
    (codes, distinct.len())
}

/// The prototype data matrix `W`: response plus `m` feature rows of length `n`.
#[derive(Clone, Debug, PartialEq)]
pub struct DataMatrix {
    response: Response,
    features: Vec<f64>,
    n: usize,
    m: usize,
}

impl DataMatrix {
    /// Builds a matrix from a response and row-major features (`m * n` values).
    pub fn new(response: Response, features: Vec<f64>) -> Result<Self> {
        let n = response.len();
        if n < 2 {
            return Err(Error::invalid(format!("need at least 2 samples, got {n}")));
        }
        if features.is_empty() || !features.len().is_multiple_of(n) {
            return Err(Error::invalid(format!(
                "feature buffer of length {} is not a nonempty multiple of n = {n}",
                features.len()
            )));
        }
        if let Some(pos) = features.iter().position(|v| v.is_nan()) {
            return Err(Error::MissingValue {
                row: pos / n + 2,
                column: pos % n + 1,
            });
        }
        let m = features.len() / n;
        Ok(DataMatrix {
            response,
            features,
            n,
            m,
        })
    }

    pub fn from_rows(response: Response, rows: &[Vec<f64>]) -> Result<Self> {
        let n = response.len();
        if let Some((j, row)) = rows.iter().enumerate().find(|(_, r)| r.len() != n) {
            return Err(Error::invalid(format!(
                "feature row {} has {} entries, expected {n}",
                j + 1,
                row.len()
            )));
        }
        Self::new(response, rows.concat())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn response(&self) -> &Response {
        &self.response
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.features[j * self.n..(j + 1) * self.n]
    }

    pub fn rows(&self) -> std::slice::Chunks<'_, f64> {
        self.features.chunks(self.n)
    }

    /// Applies permutation `g` to the response row; features are untouched.
    pub fn permute_response(&self, g: &[usize]) -> Result<DataMatrix> {
        validate_permutation(g, self.n)?;
        Ok(DataMatrix {
            response: self.response.permuted(g),
            features: self.features.clone(),
            n: self.n,
            m: self.m,
        })
    }

    /// Replaces feature rows, keeping the response.
    pub fn with_features(&self, features: Vec<f64>) -> Result<DataMatrix> {
        DataMatrix::new(self.response.clone(), features)
    }

    pub fn read_path(path: &Path, header: bool, kind: ResponseKind) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_delimited(&text, header, kind)
    }

    pub fn read<R: Read>(mut reader: R, header: bool, kind: ResponseKind) -> Result<Self> {
        let mut text = String::new();
        reader
            .read_to_string(&mut text)
            .map_err(|e| Error::io("<reader>", e))?;
        Self::parse_delimited(&text, header, kind)
    }

    /// Parses delimited text: first data row is the response, each further
    /// row one feature. Comma or tab is detected from the first line.
    pub fn parse_delimited(text: &str, header: bool, kind: ResponseKind) -> Result<Self> {
        let first_line = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
        let delimiter = if first_line.contains('\t') { b'\t' } else { b',' };
        let mut reader = csv::ReaderBuilder::new()
            .delimiter(delimiter)
            .has_headers(header)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());

        let mut rows: Vec<Vec<String>> = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| Error::Parse(e.to_string()))?;
            if record.iter().all(|f| f.is_empty()) {
                continue;
            }
            rows.push(record.iter().map(str::to_string).collect());
        }
        let line_offset = usize::from(header) + 1;
        let Some((response_tokens, feature_rows)) = rows.split_first() else {
            return Err(Error::invalid("no data rows"));
        };
        let n = response_tokens.len();
        for (r, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::invalid(format!(
                    "row {} has {} columns, expected {n}",
                    r + line_offset,
                    row.len()
                )));
            }
            if let Some(c) = row.iter().position(|t| is_missing(t)) {
                return Err(Error::MissingValue {
                    row: r + line_offset,
                    column: c + 1,
                });
            }
        }
        if feature_rows.is_empty() {
            return Err(Error::invalid("no feature rows after the response row"));
        }

        let numeric: Option<Vec<f64>> = response_tokens.iter().map(|t| t.parse().ok()).collect();
        let response = match (kind, numeric) {
            (ResponseKind::Categorical, _) | (ResponseKind::Auto, None) => {
                Response::categorical(response_tokens)
            }
            (_, Some(values)) => Response::Numeric(values),
            (ResponseKind::Numeric, None) => {
                return Err(Error::invalid("response row is not numeric"));
            }
        };

        let mut features = Vec::with_capacity(n * feature_rows.len());
        for row in feature_rows {
            let parsed: Option<Vec<f64>> = row.iter().map(|t| t.parse().ok()).collect();
            match parsed {
                Some(values) => features.extend(values),
                None => {
                    // Categorical feature row: code tokens by sorted level.
                    let levels: BTreeSet<&str> = row.iter().map(String::as_str).collect();
                    let levels: Vec<&str> = levels.into_iter().collect();
                    features.extend(
                        row.iter()
                            .map(|t| levels.binary_search(&t.as_str()).unwrap() as f64),
                    );
                }
            }
        }
        DataMatrix::new(response, features)
    }
}

fn is_missing(token: &str) -> bool {
    matches!(token, "" | "NA" | "NaN" | "nan" | "N/A" | "null" | "?")
}

pub(crate) fn validate_permutation(g: &[usize], n: usize) -> Result<()> {
    if g.len() != n {
        return Err(Error::invalid(format!(
            "permutation has length {}, data has {n} samples",
            g.len()
        )));
    }
    let mut seen = vec![false; n];
    for &i in g {
        if i >= n || std::mem::replace(&mut seen[i], true) {
            return Err(Error::invalid("permutation is not a bijection on the samples"));
        }
    }
    Ok(())
}

/// True nulls, alternatives, and an optional block partition of the hypotheses.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HypothesisPartition {
    pub m: usize,
    pub true_nulls: Vec<usize>,
    pub alternatives: Vec<usize>,
    pub blocks: Option<Vec<Vec<usize>>>,
}

/// Sparsity and block-size diagnostics for a partition.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionDiagnostics {
    pub n_blocks: usize,
    pub max_block_size: usize,
    /// `|alternatives| / B`, small under sparsity.
    pub sparsity_ratio: f64,
    /// `max block size / sqrt(B)`, small when blocks are short relative to their count.
    pub block_size_ratio: f64,
}

impl HypothesisPartition {
    pub fn new(m: usize, alternatives: &[usize], blocks: Option<Vec<Vec<usize>>>) -> Result<Self> {
        let mut is_alt = vec![false; m];
        for &j in alternatives {
            if j >= m {
                return Err(Error::invalid(format!("alternative index {j} out of range for m = {m}")));
            }
            if std::mem::replace(&mut is_alt[j], true) {
                return Err(Error::invalid(format!("alternative index {j} listed twice")));
            }
        }
        if let Some(blocks) = &blocks {
            let mut seen = vec![false; m];
            for block in blocks {
                if block.is_empty() {
                    return Err(Error::invalid("empty block"));
                }
                for &j in block {
                    if j >= m || std::mem::replace(&mut seen[j], true) {
                        return Err(Error::invalid("blocks do not partition the hypotheses"));
                    }
                }
                if block.iter().all(|&j| is_alt[j]) {
                    return Err(Error::invalid("every block must contain at least one true null"));
                }
            }
            if seen.iter().any(|s| !s) {
                return Err(Error::invalid("blocks do not cover every hypothesis"));
            }
        }
        let true_nulls = (0..m).filter(|&j| !is_alt[j]).collect();
        let mut alternatives = alternatives.to_vec();
        alternatives.sort_unstable();
        Ok(HypothesisPartition {
            m,
            true_nulls,
            alternatives,
            blocks,
        })
    }

    pub fn is_null(&self, j: usize) -> bool {
        self.alternatives.binary_search(&j).is_err()
    }

    pub fn diagnostics(&self) -> PartitionDiagnostics {
        let (n_blocks, max_block_size) = match &self.blocks {
            Some(b) => (b.len(), b.iter().map(Vec::len).max().unwrap_or(0)),
            None => (self.m, 1),
        };
        let b = n_blocks.max(1) as f64;
        PartitionDiagnostics {
            n_blocks,
            max_block_size,
            sparsity_ratio: self.alternatives.len() as f64 / b,
            block_size_ratio: max_block_size as f64 / b.sqrt(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> DataMatrix {
        DataMatrix::from_rows(
            Response::Numeric(vec![1.0, 2.0, 1.0, 2.0]),
            &[vec![0.1, 0.2, 0.3, 0.4], vec![5.0, 6.0, 7.0, 8.0]],
        )
        .unwrap()
    }

    #[test]
    fn identity_permutation_is_noop() {
        let w = small();
        assert_eq!(w.permute_response(&[0, 1, 2, 3]).unwrap(), w);
    }

    #[test]
    fn reverse_permutation() {
        let w = small();
        let g = w.permute_response(&[3, 2, 1, 0]).unwrap();
        assert_eq!(g.response(), &Response::Numeric(vec![2.0, 1.0, 2.0, 1.0]));
        assert_eq!(g.features(), w.features());
    }

    #[test]
    fn inverse_restores() {
        let w = small();
        let g = [2, 0, 3, 1];
        let mut inv = [0; 4];
        for (i, &gi) in g.iter().enumerate() {
            inv[gi] = i;
        }
        let back = w.permute_response(&g).unwrap().permute_response(&inv).unwrap();
        assert_eq!(back, w);
    }

    #[test]
    fn rejects_bad_permutations() {
        let w = small();
        assert!(w.permute_response(&[0, 1, 2]).is_err());
        assert!(w.permute_response(&[0, 1, 1, 2]).is_err());
    }

    #[test]
    fn parses_tab_and_comma() {
        let comma = "a,b,a,b\n1,2,3,4\n5,6,7,8\n";
        let tab = "a\tb\ta\tb\n1\t2\t3\t4\n5\t6\t7\t8\n";
        let a = DataMatrix::parse_delimited(comma, false, ResponseKind::Auto).unwrap();
        let b = DataMatrix::parse_delimited(tab, false, ResponseKind::Auto).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.m(), 2);
        assert_eq!(a.n(), 4);
        assert!(matches!(a.response(), Response::Categorical { .. }));
    }

    #[test]
    fn header_row_is_skipped() {
        let text = "s1,s2,s3\n1,2,1\n0.5,0.1,0.2\n";
        let w = DataMatrix::parse_delimited(text, true, ResponseKind::Categorical).unwrap();
        assert_eq!(w.m(), 1);
        assert_eq!(w.response().labels().n_levels, 2);
    }

    #[test]
    fn missing_value_is_located() {
        let text = "1,2,1\n0.5,,0.2\n";
        match DataMatrix::parse_delimited(text, false, ResponseKind::Auto) {
            Err(Error::MissingValue { row, column }) => assert_eq!((row, column), (2, 2)),
            other => panic!("unexpected {other:?}"),
        }
        let text = "1,2,1\n0.5,NA,0.2\n";
        assert!(matches!(
            DataMatrix::parse_delimited(text, true, ResponseKind::Auto),
            Err(Error::InvalidInput(_)) | Err(Error::MissingValue { .. })
        ));
    }

    #[test]
    fn categorical_feature_rows_are_coded() {
        let text = "x,y,x,y\nAA,AB,BB,AA\n";
        let w = DataMatrix::parse_delimited(text, false, ResponseKind::Auto).unwrap();
        assert_eq!(w.row(0), &[0.0, 1.0, 2.0, 0.0]);
    }

    #[test]
    fn partition_validation() {
        let p = HypothesisPartition::new(4, &[1], Some(vec![vec![0, 1], vec![2, 3]])).unwrap();
        assert_eq!(p.true_nulls, vec![0, 2, 3]);
        assert!(p.is_null(0) && !p.is_null(1));
        assert!(HypothesisPartition::new(4, &[0, 1], Some(vec![vec![0, 1], vec![2, 3]])).is_err());
        assert!(HypothesisPartition::new(4, &[], Some(vec![vec![0, 1], vec![2]])).is_err());
        assert!(HypothesisPartition::new(4, &[7], None).is_err());
        let d = p.diagnostics();
        assert_eq!(d.n_blocks, 2);
        assert!((d.sparsity_ratio - 0.5).abs() < 1e-15);
    }
}
