//! Problem representation: margins, weights, the exponential matrix and
//! the `N × N` block matrix whose expected permanent recovers the total.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Axis, Error, Result};
use crate::Matrix;

/// Validated margins and weights.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProblemInstance {
    row_margins: Vec<u64>,
    col_margins: Vec<u64>,
    weights: Matrix,
    total: u64,
    has_zero_weight: bool,
}

/// On-disk problem format. Omitted weights mean all ones.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProblemFile {
    pub rows: Vec<i64>,
    pub cols: Vec<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<Vec<f64>>>,
}

fn checked_margins(raw: &[i64], axis: Axis) -> Result<Vec<u64>> {
    if raw.is_empty() {
        return Err(Error::EmptyMargins);
    }
    raw.iter()
        .enumerate()
        .map(|(index, &v)| {
            if v >= 1 {
                Ok(v as u64)
            } else {
                Err(Error::NonPositiveMargin { axis, index })
            }
        })
        .collect()
}

/// Validates raw margins and weights into a [`ProblemInstance`].
pub fn validate_problem(row_margins: &[u64], col_margins: &[u64], weights: &Matrix) -> Result<ProblemInstance> {
    let rows: Vec<i64> = row_margins.iter().map(|&v| v.min(i64::MAX as u64) as i64).collect();
    let cols: Vec<i64> = col_margins.iter().map(|&v| v.min(i64::MAX as u64) as i64).collect();
    validate_raw(&rows, &cols, weights)
}

fn validate_raw(rows: &[i64], cols: &[i64], weights: &Matrix) -> Result<ProblemInstance> {
    let row_margins = checked_margins(rows, Axis::Row)?;
    let col_margins = checked_margins(cols, Axis::Col)?;
    let row_total: u64 = row_margins.iter().sum();
    let col_total: u64 = col_margins.iter().sum();
    if row_total != col_total {
        return Err(Error::MarginSumMismatch {
            rows: row_total,
            cols: col_total,
        });
    }
    let (m, n) = (row_margins.len(), col_margins.len());
    if weights.rows() != m || weights.cols() != n {
        return Err(Error::DimensionMismatch {
            expected_rows: m,
            expected_cols: n,
            found_rows: weights.rows(),
            found_cols: weights.cols(),
        });
    }
    let mut has_zero_weight = false;
    for i in 0..m {
        for j in 0..n {
            let w = weights[(i, j)];
            if !w.is_finite() || w < 0.0 {
                return Err(Error::InvalidWeight { row: i, col: j, value: w });
            }
            has_zero_weight |= w == 0.0;
        }
    }
    Ok(ProblemInstance {
        row_margins,
        col_margins,
        weights: weights.clone(),
        total: row_total,
        has_zero_weight,
    })
}

impl ProblemInstance {
    /// All-ones weights.
    pub fn unweighted(row_margins: &[u64], col_margins: &[u64]) -> Result<Self> {
        let w = Matrix::filled(row_margins.len(), col_margins.len(), 1.0);
        validate_problem(row_margins, col_margins, &w)
    }

    pub fn from_file(file: &ProblemFile) -> Result<Self> {
        let (m, n) = (file.rows.len(), file.cols.len());
        let weights = match &file.weights {
            None => Matrix::filled(m, n, 1.0),
            Some(rows) => {
                let found_cols = rows.first().map_or(0, Vec::len);
                if rows.len() != m || rows.iter().any(|r| r.len() != n) {
                    return Err(Error::DimensionMismatch {
                        expected_rows: m,
                        expected_cols: n,
                        found_rows: rows.len(),
                        found_cols,
                    });
                }
                Matrix::from_rows(rows).unwrap_or_else(|| Matrix::zeros(m, n))
            }
        };
        validate_raw(&file.rows, &file.cols, &weights)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ProblemFile = serde_json::from_str(text)?;
        Self::from_file(&file)
    }

    pub fn to_file(&self) -> ProblemFile {
        ProblemFile {
            rows: self.row_margins.iter().map(|&v| v as i64).collect(),
            cols: self.col_margins.iter().map(|&v| v as i64).collect(),
            weights: Some(self.weights.to_rows()),
        }
    }

    pub fn row_margins(&self) -> &[u64] {
        &self.row_margins
    }

    pub fn col_margins(&self) -> &[u64] {
        &self.col_margins
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    /// `N`, the common margin total.
    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn m(&self) -> usize {
        self.row_margins.len()
    }

    pub fn n(&self) -> usize {
        self.col_margins.len()
    }

    pub fn has_zero_weight(&self) -> bool {
        self.has_zero_weight
    }

    /// Default substitute for zero weights:
    /// `max(f64::MIN_POSITIVE, 1e-8 · smallest positive weight)`.
    pub fn default_zero_substitute(&self) -> f64 {
        let min_pos = self
            .weights
            .as_slice()
            .iter()
            .copied()
            .filter(|&w| w > 0.0)
            .fold(f64::INFINITY, f64::min);
        if min_pos.is_finite() {
            (1e-8 * min_pos).max(f64::MIN_POSITIVE)
        } else {
            f64::MIN_POSITIVE
        }
    }

    /// Weights with zeros replaced by `epsilon` (or the default substitute).
    pub fn effective_weights(&self, epsilon: Option<f64>) -> Matrix {
        if !self.has_zero_weight {
            return self.weights.clone();
        }
        let eps = epsilon.unwrap_or_else(|| self.default_zero_substitute());
        let mut w = self.weights.clone();
        for v in w.as_mut_slice() {
            if *v == 0.0 {
                *v = eps;
            }
        }
        w
    }

    /// Same margins, zero weights replaced as in [`effective_weights`](Self::effective_weights).
    pub fn with_positive_weights(&self, epsilon: Option<f64>) -> ProblemInstance {
        let weights = self.effective_weights(epsilon);
        ProblemInstance {
            row_margins: self.row_margins.clone(),
            col_margins: self.col_margins.clone(),
            has_zero_weight: weights.as_slice().contains(&0.0),
            weights,
            total: self.total,
        }
    }

    /// Same margins, new weights of the same shape.
    pub fn with_weights(&self, weights: Matrix) -> Result<ProblemInstance> {
        validate_problem(&self.row_margins, &self.col_margins, &weights)
    }

    /// `Σ ln r_i! + Σ ln c_j!`.
    pub fn ln_margin_factorials(&self) -> f64 {
        self.row_margins
            .iter()
            .chain(&self.col_margins)
            .map(|&r| crate::numerics::ln_factorial(r))
            .sum()
    }

    /// Row and column index ranges `R_i`, `C_j` of the block matrix.
    pub fn row_blocks(&self) -> Vec<Range<usize>> {
        blocks(&self.row_margins)
    }

    pub fn col_blocks(&self) -> Vec<Range<usize>> {
        blocks(&self.col_margins)
    }
}

fn blocks(margins: &[u64]) -> Vec<Range<usize>> {
    let mut start = 0usize;
    margins
        .iter()
        .map(|&r| {
            let range = start..start + r as usize;
            start = range.end;
            range
        })
        .collect()
}

/// Strictly positive `m × n` matrix, usually filled with standard exponentials.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GammaMatrix {
    values: Matrix,
}

impl GammaMatrix {
    pub fn new(values: Matrix) -> Result<Self> {
        for i in 0..values.rows() {
            for j in 0..values.cols() {
                let v = values[(i, j)];
                if !(v > 0.0 && v.is_finite()) {
                    return Err(Error::NonPositiveEntry { row: i, col: j, value: v });
                }
            }
        }
        Ok(GammaMatrix { values })
    }

    /// All entries equal to `value`.
    pub fn constant(m: usize, n: usize, value: f64) -> Result<Self> {
        Self::new(Matrix::filled(m, n, value))
    }

    pub fn from_flat(m: usize, n: usize, values: &[f64]) -> Result<Self> {
        if values.len() != m * n {
            return Err(Error::DimensionMismatch {
                expected_rows: m,
                expected_cols: n,
                found_rows: values.len(),
                found_cols: 1,
            });
        }
        Self::new(Matrix::from_vec(m, n, values.to_vec()))
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.values.scaled(factor))
    }
}

/// `N × N` matrix constant on the blocks `R_i × C_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSquareMatrix {
    pub entries: Matrix,
    pub row_blocks: Vec<Range<usize>>,
    pub col_blocks: Vec<Range<usize>>,
}

impl BlockSquareMatrix {
    /// Fills block `R_i × C_j` with `block_values[i][j]`.
    pub fn from_block_values(row_margins: &[u64], col_margins: &[u64], block_values: &Matrix) -> Result<Self> {
        let (m, n) = (row_margins.len(), col_margins.len());
        if block_values.rows() != m || block_values.cols() != n {
            return Err(Error::DimensionMismatch {
                expected_rows: m,
                expected_cols: n,
                found_rows: block_values.rows(),
                found_cols: block_values.cols(),
            });
        }
        let row_blocks = blocks(row_margins);
        let col_blocks = blocks(col_margins);
        let order: usize = row_margins.iter().sum::<u64>() as usize;
        let order_cols: usize = col_margins.iter().sum::<u64>() as usize;
        if order != order_cols {
            return Err(Error::MarginSumMismatch {
                rows: order as u64,
                cols: order_cols as u64,
            });
        }
        let row_of = block_owner(&row_blocks, order);
        let col_of = block_owner(&col_blocks, order);
        let entries = Matrix::from_fn(order, order, |p, q| block_values[(row_of[p], col_of[q])]);
        Ok(BlockSquareMatrix {
            entries,
            row_blocks,
            col_blocks,
        })
    }

    pub fn order(&self) -> usize {
        self.entries.rows()
    }
}

fn block_owner(ranges: &[Range<usize>], order: usize) -> Vec<usize> {
    let mut owner = vec![0; order];
    for (b, r) in ranges.iter().enumerate() {
        for o in &mut owner[r.clone()] {
            *o = b;
        }
    }
    owner
}

/// The block matrix `A(γ)` whose `R_i × C_j` block holds `w_ij · γ_ij`.
pub fn assemble_block_matrix(problem: &ProblemInstance, gamma: &GammaMatrix) -> Result<BlockSquareMatrix> {
    let g = gamma.values();
    if g.rows() != problem.m() || g.cols() != problem.n() {
        return Err(Error::DimensionMismatch {
            expected_rows: problem.m(),
            expected_cols: problem.n(),
            found_rows: g.rows(),
            found_cols: g.cols(),
        });
    }
    let w = problem.weights();
    let values = Matrix::from_fn(problem.m(), problem.n(), |i, j| w[(i, j)] * g[(i, j)]);
    BlockSquareMatrix::from_block_values(problem.row_margins(), problem.col_margins(), &values)
}

/// Non-negative integer `m × n` table.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct ContingencyTable {
    rows: usize,
    cols: usize,
    entries: Vec<u64>,
}

impl ContingencyTable {
    pub fn new(rows: usize, cols: usize, entries: Vec<u64>) -> Self {
        assert_eq!(entries.len(), rows * cols);
        ContingencyTable { rows, cols, entries }
    }

    pub fn get(&self, i: usize, j: usize) -> u64 {
        self.entries[i * self.cols + j]
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn entries(&self) -> &[u64] {
        &self.entries
    }

    pub fn row_sums(&self) -> Vec<u64> {
        self.entries.chunks(self.cols).map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<u64> {
        (0..self.cols)
            .map(|j| (0..self.rows).map(|i| self.get(i, j)).sum())
            .collect()
    }

    pub fn has_margins(&self, row_margins: &[u64], col_margins: &[u64]) -> bool {
        self.row_sums() == row_margins && self.col_sums() == col_margins
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ones(m: usize, n: usize) -> Matrix {
        Matrix::filled(m, n, 1.0)
    }

    #[test]
    fn validates_smallest_permanent_case() {
        let p = validate_problem(&[1, 1], &[1, 1], &ones(2, 2)).unwrap();
        assert_eq!(p.total(), 2);
        assert!(!p.has_zero_weight());
    }

    #[test]
    fn rejects_sum_mismatch() {
        let err = validate_problem(&[1, 1], &[3], &ones(2, 1)).unwrap_err();
        assert!(matches!(err, Error::MarginSumMismatch { rows: 2, cols: 3 }));
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn rectangular_instance() {
        let p = validate_problem(&[2, 1], &[1, 1, 1], &ones(2, 3)).unwrap();
        assert_eq!((p.total(), p.m(), p.n()), (3, 2, 3));
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(
            validate_problem(&[0, 2], &[2], &ones(2, 1)),
            Err(Error::NonPositiveMargin { axis: Axis::Row, index: 0 })
        ));
        let mut w = ones(1, 1);
        w[(0, 0)] = -1.0;
        assert!(matches!(validate_problem(&[1], &[1], &w), Err(Error::InvalidWeight { .. })));
        assert!(matches!(
            validate_problem(&[1, 1], &[2], &ones(1, 1)),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(validate_problem(&[], &[], &ones(0, 0)), Err(Error::EmptyMargins)));
    }

    #[test]
    fn zero_weights_are_flagged_and_substituted() {
        let w = Matrix::from_rows(&[vec![0.0, 2.0], vec![1.0, 1.0]]).unwrap();
        let p = validate_problem(&[2, 2], &[2, 2], &w).unwrap();
        assert!(p.has_zero_weight());
        assert_eq!(p.default_zero_substitute(), 1e-8);
        assert_eq!(p.effective_weights(None)[(0, 0)], 1e-8);
        assert_eq!(p.effective_weights(Some(0.5))[(0, 0)], 0.5);
        assert!(!p.with_positive_weights(None).has_zero_weight());
    }

    #[test]
    fn json_format_defaults_to_unit_weights() {
        let p = ProblemInstance::from_json(r#"{"rows":[2,1],"cols":[1,1,1]}"#).unwrap();
        assert_eq!(p.weights(), &ones(2, 3));
        let err = ProblemInstance::from_json(r#"{"rows":[1,1],"cols":[3]}"#).unwrap_err();
        assert!(matches!(err, Error::MarginSumMismatch { .. }));
        let err = ProblemInstance::from_json(r#"{"rows":[-1,2],"cols":[1]}"#).unwrap_err();
        assert!(matches!(err, Error::NonPositiveMargin { .. }));
        let err = ProblemInstance::from_json(r#"{"rows":[1],"cols":[1],"weights":[[1,2]]}"#).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
        assert!(matches!(ProblemInstance::from_json("{"), Err(Error::Parse(_))));
    }

    #[test]
    fn block_matrix_examples() {
        let w = Matrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let p = validate_problem(&[1, 1], &[1, 1], &w).unwrap();
        let a = assemble_block_matrix(&p, &GammaMatrix::constant(2, 2, 1.0).unwrap()).unwrap();
        assert_eq!(a.entries, w);

        let p = ProblemInstance::unweighted(&[2, 1], &[1, 1, 1]).unwrap();
        let a = assemble_block_matrix(&p, &GammaMatrix::constant(2, 3, 1.0).unwrap()).unwrap();
        assert_eq!(a.entries, ones(3, 3));
        assert_eq!(a.row_blocks, vec![0..2, 2..3]);

        let p = validate_problem(&[2], &[2], &Matrix::filled(1, 1, 3.0)).unwrap();
        let a = assemble_block_matrix(&p, &GammaMatrix::constant(1, 1, 0.5).unwrap()).unwrap();
        assert_eq!(a.entries, Matrix::filled(2, 2, 1.5));

        let bad = GammaMatrix::constant(2, 2, 1.0).unwrap();
        assert!(matches!(assemble_block_matrix(&p, &bad), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn gamma_matrix_rejects_non_positive() {
        assert!(GammaMatrix::new(Matrix::from_rows(&[vec![1.0, 0.0]]).unwrap()).is_err());
        assert!(GammaMatrix::from_flat(1, 2, &[1.0]).is_err());
    }

    #[test]
    fn table_margins() {
        let t = ContingencyTable::new(2, 2, vec![1, 2, 3, 0]);
        assert_eq!(t.row_sums(), vec![3, 3]);
        assert_eq!(t.col_sums(), vec![4, 2]);
        assert!(t.has_margins(&[3, 3], &[4, 2]));
    }
}
