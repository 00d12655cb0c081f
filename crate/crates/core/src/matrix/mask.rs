use crate::error::{Error, Result};

/// Binary observed-entry indicator, stored column by column.
///
/// An entry is observed (1) iff its row index appears in its column's list.
/// Row-wise access goes through [`MaskMatrix::transpose`], which yields a mask
/// of the transposed shape whose "columns" are the original rows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskMatrix {
    rows: usize,
    cols: usize,
    offsets: Vec<usize>,
    row_indices: Vec<usize>,
}

impl MaskMatrix {
    pub fn new(rows: usize, cols: usize, columns: Vec<Vec<usize>>) -> Result<Self> {
        if columns.len() != cols {
            return Err(Error::InvalidMatrix(format!(
                "mask has {} column lists, expected {cols}",
                columns.len()
            )));
        }
        let mut offsets = Vec::with_capacity(cols + 1);
        let mut row_indices = Vec::new();
        offsets.push(0);
        for (c, list) in columns.into_iter().enumerate() {
            if list.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidMatrix(format!(
                    "mask column {c} is not sorted and duplicate-free"
                )));
            }
            if list.last().is_some_and(|&r| r >= rows) {
                return Err(Error::InvalidMatrix(format!(
                    "mask column {c} has row index >= {rows}"
                )));
            }
            row_indices.extend(list);
            offsets.push(row_indices.len());
        }
        Ok(MaskMatrix {
            rows,
            cols,
            offsets,
            row_indices,
        })
    }

    /// Builds from an arbitrary list of observed (row, col) pairs; duplicates collapse.
    pub fn from_entries(rows: usize, cols: usize, entries: &[(usize, usize)]) -> Result<Self> {
        let mut columns = vec![Vec::new(); cols];
        for &(r, c) in entries {
            if r >= rows || c >= cols {
                return Err(Error::InvalidMatrix(format!(
                    "mask entry ({r}, {c}) outside {rows}x{cols}"
                )));
            }
            columns[c].push(r);
        }
        for col in &mut columns {
            col.sort_unstable();
            col.dedup();
        }
        Self::new(rows, cols, columns)
    }

    pub fn full(rows: usize, cols: usize) -> Self {
        let all: Vec<usize> = (0..rows).collect();
        let mut offsets = Vec::with_capacity(cols + 1);
        let mut row_indices = Vec::with_capacity(rows * cols);
        offsets.push(0);
        for _ in 0..cols {
            row_indices.extend_from_slice(&all);
            offsets.push(row_indices.len());
        }
        MaskMatrix {
            rows,
            cols,
            offsets,
            row_indices,
        }
    }

    pub fn empty(rows: usize, cols: usize) -> Self {
        MaskMatrix {
            rows,
            cols,
            offsets: vec![0; cols + 1],
            row_indices: Vec::new(),
        }
    }

    /// Whole columns observed for the listed column indices, nothing elsewhere.
    pub fn from_observed_columns(rows: usize, cols: usize, observed: &[bool]) -> Self {
        debug_assert_eq!(observed.len(), cols);
        let mut offsets = Vec::with_capacity(cols + 1);
        let mut row_indices = Vec::new();
        offsets.push(0);
        for &obs in observed {
            if obs {
                row_indices.extend(0..rows);
            }
            offsets.push(row_indices.len());
        }
        MaskMatrix {
            rows,
            cols,
            offsets,
            row_indices,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn count(&self) -> usize {
        self.row_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.row_indices.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.count() == self.rows * self.cols
    }

    pub fn column(&self, c: usize) -> &[usize] {
        &self.row_indices[self.offsets[c]..self.offsets[c + 1]]
    }

    pub fn is_observed(&self, r: usize, c: usize) -> bool {
        self.column(c).binary_search(&r).is_ok()
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.cols).flat_map(move |c| self.column(c).iter().map(move |&r| (r, c)))
    }

    pub fn transpose(&self) -> MaskMatrix {
        let mut counts = vec![0usize; self.rows + 1];
        for &r in &self.row_indices {
            counts[r + 1] += 1;
        }
        for r in 0..self.rows {
            counts[r + 1] += counts[r];
        }
        let offsets = counts.clone();
        let mut next = counts;
        let mut row_indices = vec![0usize; self.count()];
        for c in 0..self.cols {
            for &r in self.column(c) {
                row_indices[next[r]] = c;
                next[r] += 1;
            }
        }
        MaskMatrix {
            rows: self.cols,
            cols: self.rows,
            offsets,
            row_indices,
        }
    }
}
