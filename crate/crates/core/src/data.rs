//! Complete binary responder-by-item response matrices.
//!
//! Every item belongs to exactly one dataset, and every responder answers
//! every item; ingestion rejects anything else. Responders, items, and
//! datasets keep the order in which they first appear in the input, so a
//! given input always produces the same matrix.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One observed response, as it appears in an input file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseRecord {
    pub responder: String,
    pub item: String,
    pub dataset: String,
    pub correct: bool,
}

/// Why a set of records does not form a valid response matrix.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum DataError {
    #[error("record {record}: duplicate response for responder \"{responder}\", item \"{item}\"")]
    DuplicateResponse {
        responder: String,
        item: String,
        /// 0-based index of the offending record in the input order.
        record: usize,
    },
    #[error(
        "record {record}: item \"{item}\" assigned to dataset \"{second}\" \
         but first seen in dataset \"{first}\""
    )]
    DatasetConflict {
        item: String,
        first: String,
        second: String,
        record: usize,
    },
    #[error(
        "incomplete matrix: {total} missing cell(s), first is responder \"{responder}\", item \"{item}\""
    )]
    MissingResponse {
        responder: String,
        item: String,
        total: usize,
    },
    #[error("a response matrix needs at least 2 responders, found {found}")]
    TooFewResponders { found: usize },
    #[error("a response matrix needs at least 1 item")]
    NoItems,
    #[error(
        "expected {expected} responses for {responders} responders x {items} items, got {got}"
    )]
    WrongLength {
        responders: usize,
        items: usize,
        expected: usize,
        got: usize,
    },
}

/// A complete binary response matrix with dataset labels per item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseMatrix {
    responders: Vec<String>,
    items: Vec<String>,
    datasets: Vec<String>,
    /// Dataset index of each item.
    dataset_of: Vec<usize>,
    /// Item-major storage: entry for responder `i`, item `j` is `data[j * m + i]`.
    data: Vec<u8>,
}

impl ResponseMatrix {
    /// Assembles a matrix from records, validating completeness, duplicates,
    /// and dataset consistency. Label order follows first appearance.
    pub fn from_records<I>(records: I) -> Result<Self, DataError>
    where
        I: IntoIterator<Item = ResponseRecord>,
    {
        let mut responders: Vec<String> = Vec::new();
        let mut items: Vec<String> = Vec::new();
        let mut datasets: Vec<String> = Vec::new();
        let mut dataset_of: Vec<usize> = Vec::new();
        let mut responder_index = std::collections::HashMap::new();
        let mut item_index = std::collections::HashMap::new();
        let mut dataset_index = std::collections::HashMap::new();
        let mut seen: HashSet<u64> = HashSet::new();
        let mut triples: Vec<(usize, usize, bool)> = Vec::new();

        for (record, rec) in records.into_iter().enumerate() {
            let i = *responder_index
                .entry(rec.responder.clone())
                .or_insert_with(|| {
                    responders.push(rec.responder.clone());
                    responders.len() - 1
                });
            let j = *item_index.entry(rec.item.clone()).or_insert_with(|| {
                items.push(rec.item.clone());
                items.len() - 1
            });
            if j == dataset_of.len() {
                // First time we see this item: bind it to its dataset.
                let d = *dataset_index.entry(rec.dataset.clone()).or_insert_with(|| {
                    datasets.push(rec.dataset.clone());
                    datasets.len() - 1
                });
                dataset_of.push(d);
            } else {
                let first = &datasets[dataset_of[j]];
                if *first != rec.dataset {
                    return Err(DataError::DatasetConflict {
                        item: rec.item,
                        first: first.clone(),
                        second: rec.dataset,
                        record,
                    });
                }
            }
            if !seen.insert(((i as u64) << 32) | j as u64) {
                return Err(DataError::DuplicateResponse {
                    responder: rec.responder,
                    item: rec.item,
                    record,
                });
            }
            triples.push((i, j, rec.correct));
        }

        let m = responders.len();
        let n = items.len();
        if n == 0 {
            return Err(DataError::NoItems);
        }
        if m < 2 {
            return Err(DataError::TooFewResponders { found: m });
        }
        // Completeness: report the first missing pair in responder-major order.
        if seen.len() != m * n {
            let mut first = None;
            let mut total = 0usize;
            for i in 0..m {
                for j in 0..n {
                    if !seen.contains(&(((i as u64) << 32) | j as u64)) {
                        total += 1;
                        if first.is_none() {
                            first = Some((i, j));
                        }
                    }
                }
            }
            let (i, j) = first.expect("count mismatch implies at least one missing cell");
            return Err(DataError::MissingResponse {
                responder: responders[i].clone(),
                item: items[j].clone(),
                total,
            });
        }
        let mut data = vec![0u8; m * n];
        for (i, j, correct) in triples {
            data[j * m + i] = correct as u8;
        }
        Ok(Self {
            responders,
            items,
            datasets,
            dataset_of,
            data,
        })
    }

    /// Builds a matrix from already-indexed parts. `items` pairs each item id
    /// with its dataset id; `data` is item-major (all responses to item 0
    /// first).
    pub fn from_dense(
        responders: Vec<String>,
        items: Vec<(String, String)>,
        data: Vec<u8>,
    ) -> Result<Self, DataError> {
        let m = responders.len();
        let n = items.len();
        if n == 0 {
            return Err(DataError::NoItems);
        }
        if m < 2 {
            return Err(DataError::TooFewResponders { found: m });
        }
        if data.len() != m * n {
            return Err(DataError::WrongLength {
                responders: m,
                items: n,
                expected: m * n,
                got: data.len(),
            });
        }
        let mut datasets: Vec<String> = Vec::new();
        let mut dataset_index = std::collections::HashMap::new();
        let mut item_ids = Vec::with_capacity(n);
        let mut dataset_of = Vec::with_capacity(n);
        for (item, dataset) in items {
            let d = *dataset_index.entry(dataset.clone()).or_insert_with(|| {
                datasets.push(dataset.clone());
                datasets.len() - 1
            });
            item_ids.push(item);
            dataset_of.push(d);
        }
        let data = data.into_iter().map(|v| (v != 0) as u8).collect();
        Ok(Self {
            responders,
            items: item_ids,
            datasets,
            dataset_of,
            data,
        })
    }

    pub fn n_responders(&self) -> usize {
        self.responders.len()
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn n_datasets(&self) -> usize {
        self.datasets.len()
    }

    pub fn responder_ids(&self) -> &[String] {
        &self.responders
    }

    pub fn item_ids(&self) -> &[String] {
        &self.items
    }

    pub fn dataset_names(&self) -> &[String] {
        &self.datasets
    }

    /// Dataset index of item `j`.
    pub fn dataset_of(&self, j: usize) -> usize {
        self.dataset_of[j]
    }

    /// Number of items in dataset `d`.
    pub fn dataset_size(&self, d: usize) -> usize {
        self.dataset_of.iter().filter(|&&x| x == d).count()
    }

    /// Item counts per dataset, indexed by dataset.
    pub fn dataset_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.datasets.len()];
        for &d in &self.dataset_of {
            sizes[d] += 1;
        }
        sizes
    }

    /// Whether responder `i` answered item `j` correctly.
    pub fn correct(&self, i: usize, j: usize) -> bool {
        self.data[j * self.responders.len() + i] != 0
    }

    /// All responses to item `j`, one entry (0 or 1) per responder.
    pub fn item_column(&self, j: usize) -> &[u8] {
        let m = self.responders.len();
        &self.data[j * m..(j + 1) * m]
    }

    /// Fraction of items responder `i` answered correctly.
    pub fn responder_accuracy(&self, i: usize) -> f64 {
        let m = self.responders.len();
        let hits: u32 = (0..self.items.len())
            .map(|j| self.data[j * m + i] as u32)
            .sum();
        hits as f64 / self.items.len() as f64
    }

    /// Copy of the matrix without the given responders (by index).
    pub fn without_responders(&self, drop: &[usize]) -> Result<Self, DataError> {
        let drop: HashSet<usize> = drop.iter().copied().collect();
        let keep: Vec<usize> = (0..self.responders.len())
            .filter(|i| !drop.contains(i))
            .collect();
        if keep.len() < 2 {
            return Err(DataError::TooFewResponders { found: keep.len() });
        }
        let responders = keep.iter().map(|&i| self.responders[i].clone()).collect();
        let m_old = self.responders.len();
        let mut data = Vec::with_capacity(keep.len() * self.items.len());
        for j in 0..self.items.len() {
            for &i in &keep {
                data.push(self.data[j * m_old + i]);
            }
        }
        Ok(Self {
            responders,
            items: self.items.clone(),
            datasets: self.datasets.clone(),
            dataset_of: self.dataset_of.clone(),
            data,
        })
    }

    /// Copy of the matrix without the given items (by index). Datasets left
    /// with no items are dropped from the dataset list.
    pub fn without_items(&self, drop: &[usize]) -> Result<Self, DataError> {
        let drop: HashSet<usize> = drop.iter().copied().collect();
        let keep: Vec<usize> = (0..self.items.len())
            .filter(|j| !drop.contains(j))
            .collect();
        if keep.is_empty() {
            return Err(DataError::NoItems);
        }
        let m = self.responders.len();
        let mut datasets: Vec<String> = Vec::new();
        let mut dataset_index = std::collections::HashMap::new();
        let mut items = Vec::with_capacity(keep.len());
        let mut dataset_of = Vec::with_capacity(keep.len());
        let mut data = Vec::with_capacity(keep.len() * m);
        for &j in &keep {
            let name = &self.datasets[self.dataset_of[j]];
            let d = *dataset_index.entry(name.clone()).or_insert_with(|| {
                datasets.push(name.clone());
                datasets.len() - 1
            });
            items.push(self.items[j].clone());
            dataset_of.push(d);
            data.extend_from_slice(&self.data[j * m..(j + 1) * m]);
        }
        Ok(Self {
            responders: self.responders.clone(),
            items,
            datasets,
            dataset_of,
            data,
        })
    }
}

// ============================================================================
// Tests
// ============================================================================
