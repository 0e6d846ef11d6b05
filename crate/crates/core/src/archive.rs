//! The grid archive of elites.
//!
//! Feature space is split into equally spaced cells; each cell keeps the
//! highest-fitness solution ever offered to it.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A point of the search space.
pub type Genome = Vec<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ArchiveError {
    #[error("expected dimensionality {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("feature contains a non-finite value")]
    NonFinite,
    #[error("archive is empty; seed it with initial random genomes first")]
    Empty,
    #[error("invalid bounds: {0}")]
    Bounds(String),
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("record for cell {cell:?} has a feature mapping to {mapped:?}")]
    Misplaced { cell: Vec<usize>, mapped: Vec<usize> },
    #[error("duplicate record for cell {0:?}")]
    Duplicate(Vec<usize>),
}

/// Axis-aligned box, used for feature bounds and genome domains.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundedBox {
    pub low: Vec<f64>,
    pub high: Vec<f64>,
}

impl BoundedBox {
    pub fn new(low: Vec<f64>, high: Vec<f64>) -> Result<Self, ArchiveError> {
        let b = Self { low, high };
        b.validate()?;
        Ok(b)
    }

    /// The same interval `[low, high]` on every one of `dim` axes.
    pub fn uniform(dim: usize, low: f64, high: f64) -> Result<Self, ArchiveError> {
        Self::new(vec![low; dim], vec![high; dim])
    }

    pub fn validate(&self) -> Result<(), ArchiveError> {
        if self.low.len() != self.high.len() {
            return Err(ArchiveError::Bounds(format!(
                "low has {} entries, high has {}",
                self.low.len(),
                self.high.len()
            )));
        }
        if self.low.is_empty() {
            return Err(ArchiveError::Bounds("zero-dimensional box".into()));
        }
        for (i, (l, h)) in self.low.iter().zip(&self.high).enumerate() {
            if !(l.is_finite() && h.is_finite() && l < h) {
                return Err(ArchiveError::Bounds(format!("axis {i}: need finite low < high, got [{l}, {h}]")));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.low.len()
    }

    pub fn clip(&self, x: &mut [f64]) {
        for ((v, l), h) in x.iter_mut().zip(&self.low).zip(&self.high) {
            *v = v.clamp(*l, *h);
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.low.iter().zip(&self.high).map(|(l, h)| l + (h - l) * rng.random::<f64>()).collect()
    }
}

/// Discretization of a feature box into a regular grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub bounds: BoundedBox,
    pub cells_per_dim: Vec<usize>,
}

impl GridSpec {
    pub fn new(bounds: BoundedBox, cells_per_dim: Vec<usize>) -> Result<Self, ArchiveError> {
        let g = Self { bounds, cells_per_dim };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<(), ArchiveError> {
        self.bounds.validate()?;
        if self.cells_per_dim.len() != self.bounds.dim() {
            return Err(ArchiveError::Grid(format!(
                "{} cell counts for a {}-dimensional feature box",
                self.cells_per_dim.len(),
                self.bounds.dim()
            )));
        }
        if self.cells_per_dim.contains(&0) {
            return Err(ArchiveError::Grid("cell counts must be positive".into()));
        }
        self.cells_per_dim
            .iter()
            .try_fold(1usize, |acc, &c| acc.checked_mul(c))
            .ok_or_else(|| ArchiveError::Grid("total cell count overflows".into()))?;
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.cells_per_dim.len()
    }

    pub fn total_cells(&self) -> usize {
        self.cells_per_dim.iter().product()
    }

    pub fn cell_width(&self, axis: usize) -> f64 {
        (self.bounds.high[axis] - self.bounds.low[axis]) / self.cells_per_dim[axis] as f64
    }

    /// Mean over axes of the cell width.
    pub fn mean_cell_width(&self) -> f64 {
        (0..self.dim()).map(|i| self.cell_width(i)).sum::<f64>() / self.dim() as f64
    }

    /// Grid coordinates of the cell holding `feature`. Values at or beyond a
    /// bound land in the nearest edge cell.
    pub fn cell_index(&self, feature: &[f64]) -> Result<Vec<usize>, ArchiveError> {
        if feature.len() != self.dim() {
            return Err(ArchiveError::Dimension { expected: self.dim(), got: feature.len() });
        }
        feature
            .iter()
            .enumerate()
            .map(|(i, &f)| {
                if !f.is_finite() {
                    return Err(ArchiveError::NonFinite);
                }
                let pos = ((f - self.bounds.low[i]) / self.cell_width(i)).floor();
                let last = (self.cells_per_dim[i] - 1) as f64;
                Ok(pos.clamp(0.0, last) as usize)
            })
            .collect()
    }

    /// Row-major flat index (last axis fastest).
    pub fn flatten(&self, index: &[usize]) -> usize {
        index.iter().zip(&self.cells_per_dim).fold(0, |acc, (&i, &n)| acc * n + i)
    }

    pub fn unflatten(&self, mut flat: usize) -> Vec<usize> {
        let mut out = vec![0; self.dim()];
        for (slot, &n) in out.iter_mut().zip(&self.cells_per_dim).rev() {
            *slot = flat % n;
            flat /= n;
        }
        out
    }
}

/// Fitness and feature of one evaluated genome.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub fitness: f64,
    pub feature: Vec<f64>,
}

impl Evaluation {
    pub fn new(fitness: f64, feature: Vec<f64>) -> Self {
        Self { fitness, feature }
    }

    pub fn is_valid(&self) -> bool {
        self.fitness.is_finite() && self.feature.iter().all(|f| f.is_finite())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Elite {
    pub genome: Genome,
    pub eval: Evaluation,
}

/// Result of offering a candidate to the archive.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Insertion {
    /// Stored; `new_cell` tells whether the cell was empty before.
    Added { new_cell: bool },
    /// Cell occupied by an elite at least as fit.
    Rejected,
    /// Non-finite fitness or feature.
    Invalid,
}

impl Insertion {
    pub fn is_added(self) -> bool {
        matches!(self, Insertion::Added { .. })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EliteArchive {
    spec: GridSpec,
    cells: Vec<Option<Elite>>,
    /// Flat indices of occupied cells, ascending.
    occupied: Vec<usize>,
}

impl EliteArchive {
    pub fn new(spec: GridSpec) -> Result<Self, ArchiveError> {
        spec.validate()?;
        Ok(Self { cells: vec![None; spec.total_cells()], spec, occupied: Vec::new() })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn len(&self) -> usize {
        self.occupied.len()
    }

    pub fn is_empty(&self) -> bool {
        self.occupied.is_empty()
    }

    pub fn get(&self, index: &[usize]) -> Option<&Elite> {
        self.cells.get(self.spec.flatten(index))?.as_ref()
    }

    /// Occupants in ascending flat-index order.
    pub fn elites(&self) -> impl Iterator<Item = (usize, &Elite)> + '_ {
        self.occupied.iter().map(move |&i| (i, self.cells[i].as_ref().expect("occupied cell")))
    }

    /// Elitist insertion: accepted iff the cell is empty or the candidate is
    /// strictly fitter than the incumbent. Ties keep the incumbent.
    pub fn try_add(&mut self, genome: &[f64], eval: &Evaluation) -> Insertion {
        if !eval.is_valid() {
            return Insertion::Invalid;
        }
        let flat = match self.spec.cell_index(&eval.feature) {
            Ok(idx) => self.spec.flatten(&idx),
            Err(_) => return Insertion::Invalid,
        };
        let new_cell = match &self.cells[flat] {
            Some(inc) if eval.fitness <= inc.eval.fitness => return Insertion::Rejected,
            Some(_) => false,
            None => true,
        };
        self.cells[flat] = Some(Elite { genome: genome.to_vec(), eval: eval.clone() });
        if new_cell {
            let pos = self.occupied.partition_point(|&i| i < flat);
            self.occupied.insert(pos, flat);
        }
        Insertion::Added { new_cell }
    }

    /// `count` i.i.d. uniform draws over occupied cells, with replacement.
    pub fn uniform_select<R: Rng + ?Sized>(&self, rng: &mut R, count: usize) -> Result<Vec<&Elite>, ArchiveError> {
        if self.is_empty() {
            return Err(ArchiveError::Empty);
        }
        Ok((0..count)
            .map(|_| {
                let flat = self.occupied[rng.random_range(0..self.occupied.len())];
                self.cells[flat].as_ref().expect("occupied cell")
            })
            .collect())
    }

    pub fn to_snapshot(&self) -> ArchiveSnapshot {
        ArchiveSnapshot {
            grid: self.spec.clone(),
            records: self
                .elites()
                .map(|(flat, e)| ArchiveRecord {
                    cell: self.spec.unflatten(flat),
                    genome: e.genome.clone(),
                    fitness: e.eval.fitness,
                    feature: e.eval.feature.clone(),
                })
                .collect(),
        }
    }

    /// Rebuilds an archive, checking that every record sits in the cell its
    /// feature maps to.
    pub fn from_snapshot(snap: ArchiveSnapshot) -> Result<Self, ArchiveError> {
        let mut archive = Self::new(snap.grid)?;
        for rec in snap.records {
            let eval = Evaluation::new(rec.fitness, rec.feature);
            if !eval.is_valid() {
                return Err(ArchiveError::NonFinite);
            }
            let mapped = archive.spec.cell_index(&eval.feature)?;
            if mapped != rec.cell {
                return Err(ArchiveError::Misplaced { cell: rec.cell, mapped });
            }
            if archive.get(&mapped).is_some() {
                return Err(ArchiveError::Duplicate(mapped));
            }
            archive.try_add(&rec.genome, &eval);
        }
        Ok(archive)
    }
}

/// One occupied cell in serialized form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchiveRecord {
    pub cell: Vec<usize>,
    pub genome: Genome,
    pub fitness: f64,
    pub feature: Vec<f64>,
}

/// Serializable archive: the grid plus one record per occupied cell in
/// ascending cell order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchiveSnapshot {
    pub grid: GridSpec,
    pub records: Vec<ArchiveRecord>,
}
