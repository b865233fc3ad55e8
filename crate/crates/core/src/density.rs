//! Occupancy heatmap of a trajectory set and its watershed segmentation.
//!
//! Local maxima of the visit counts seed a priority-flood watershed over the
//! inverse density `1 / (count + 1)`. Heavily visited areas flood first and
//! merge into large segments; rarely visited areas end up in small ones. Each
//! segment becomes a node of the trajectory graph.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::RawTrajectory;
use crate::svg::{category_color, SvgDocument};

/// Row-major 2D array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Raster<T> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
}

impl<T: Clone> Raster<T> {
    pub fn filled(rows: usize, cols: usize, value: T) -> Self {
        Raster {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                actual: data.len(),
            });
        }
        Ok(Raster { rows, cols, data })
    }

    pub fn get(&self, row: usize, col: usize) -> &T {
        &self.data[row * self.cols + col]
    }

    pub fn get_mut(&mut self, row: usize, col: usize) -> &mut T {
        &mut self.data[row * self.cols + col]
    }

    pub fn map<U, F: Fn(&T) -> U>(&self, f: F) -> Raster<U> {
        Raster {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(f).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Bounds {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x_min && x <= self.x_max && y >= self.y_min && y <= self.y_max
    }
}

/// Visit counts over a regular grid; rows follow y, columns follow x.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityGrid {
    pub bounds: Bounds,
    pub cell_size: f64,
    pub counts: Raster<u32>,
}

impl DensityGrid {
    pub fn rows(&self) -> usize {
        self.counts.rows
    }

    pub fn cols(&self) -> usize {
        self.counts.cols
    }

    /// Cell containing `(x, y)`, or `None` outside the bounds.
    pub fn cell_of(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        if !self.bounds.contains(x, y) {
            return None;
        }
        Some(self.clamped_cell_of(x, y))
    }

    /// Cell containing `(x, y)` after clamping the point into the bounds.
    pub fn clamped_cell_of(&self, x: f64, y: f64) -> (usize, usize) {
        let col = ((x - self.bounds.x_min) / self.cell_size).floor();
        let row = ((y - self.bounds.y_min) / self.cell_size).floor();
        let clamp = |v: f64, n: usize| {
            if v.is_nan() || v < 0.0 {
                0
            } else {
                (v as usize).min(n - 1)
            }
        };
        (clamp(row, self.rows()), clamp(col, self.cols()))
    }

    pub fn cell_center(&self, row: usize, col: usize) -> (f64, f64) {
        (
            self.bounds.x_min + (col as f64 + 0.5) * self.cell_size,
            self.bounds.y_min + (row as f64 + 0.5) * self.cell_size,
        )
    }

    pub fn mask(&self) -> Raster<bool> {
        self.counts.map(|&c| c > 0)
    }

    pub fn total(&self) -> u64 {
        self.counts.data.iter().map(|&c| c as u64).sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("grid serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let grid: DensityGrid = serde_json::from_str(text)?;
        grid.check()?;
        Ok(grid)
    }

    fn check(&self) -> Result<()> {
        if !(self.cell_size > 0.0) || !self.cell_size.is_finite() {
            return Err(Error::InvalidCellSize(self.cell_size));
        }
        let b = &self.bounds;
        if ![b.x_min, b.x_max, b.y_min, b.y_max].iter().all(|v| v.is_finite()) || b.x_max <= b.x_min || b.y_max <= b.y_min {
            return Err(Error::Parse("invalid grid bounds".into()));
        }
        if self.rows() < 2 || self.cols() < 2 {
            return Err(Error::Parse("grid must be at least 2x2".into()));
        }
        if self.counts.data.len() != self.rows() * self.cols() {
            return Err(Error::DimensionMismatch {
                expected: self.rows() * self.cols(),
                actual: self.counts.data.len(),
            });
        }
        Ok(())
    }
}

/// Cell size giving roughly `target` cells along the longer side of the
/// trajectories' bounding box.
pub fn default_cell_size(trajs: &[RawTrajectory], target: usize) -> f64 {
    let (mut lo_x, mut hi_x, mut lo_y, mut hi_y) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for s in trajs.iter().flat_map(|t| &t.samples) {
        lo_x = lo_x.min(s.x);
        hi_x = hi_x.max(s.x);
        lo_y = lo_y.min(s.y);
        hi_y = hi_y.max(s.y);
    }
    let extent = (hi_x - lo_x).max(hi_y - lo_y);
    if extent.is_finite() && extent > 0.0 {
        extent / target.max(1) as f64
    } else {
        1.0
    }
}

/// Counts samples per cell over the bounding box padded by one cell.
pub fn build_density_grid(trajs: &[RawTrajectory], cell_size: f64) -> Result<DensityGrid> {
    if !(cell_size > 0.0) || !cell_size.is_finite() {
        return Err(Error::InvalidCellSize(cell_size));
    }
    let samples = || trajs.iter().flat_map(|t| &t.samples).filter(|s| s.x.is_finite() && s.y.is_finite());
    if samples().next().is_none() {
        return Err(Error::EmptyInput("no trajectory samples"));
    }
    let (mut lo_x, mut hi_x, mut lo_y, mut hi_y) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for s in samples() {
        lo_x = lo_x.min(s.x);
        hi_x = hi_x.max(s.x);
        lo_y = lo_y.min(s.y);
        hi_y = hi_y.max(s.y);
    }
    let x_min = lo_x - cell_size;
    let y_min = lo_y - cell_size;
    let cols = (((hi_x + cell_size - x_min) / cell_size).ceil() as usize).max(2);
    let rows = (((hi_y + cell_size - y_min) / cell_size).ceil() as usize).max(2);
    let mut grid = DensityGrid {
        bounds: Bounds {
            x_min,
            x_max: x_min + cols as f64 * cell_size,
            y_min,
            y_max: y_min + rows as f64 * cell_size,
        },
        cell_size,
        counts: Raster::filled(rows, cols, 0),
    };
    for s in samples() {
        let (r, c) = grid.clamped_cell_of(s.x, s.y);
        *grid.counts.get_mut(r, c) += 1;
    }
    Ok(grid)
}

/// Elementwise `1 / (count + 1)`.
pub fn invert_density(grid: &DensityGrid) -> Raster<f64> {
    grid.counts.map(|&c| 1.0 / (c as f64 + 1.0))
}

const NEIGHBORS_8: [(isize, isize); 8] = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)];

const NEIGHBORS_4: [(isize, isize); 4] = [(-1, 0), (0, -1), (0, 1), (1, 0)];

fn offset(r: usize, c: usize, d: (isize, isize), rows: usize, cols: usize) -> Option<(usize, usize)> {
    let nr = r as isize + d.0;
    let nc = c as isize + d.1;
    (nr >= 0 && nc >= 0 && (nr as usize) < rows && (nc as usize) < cols).then_some((nr as usize, nc as usize))
}

/// Non-zero cells at least as high as their 8 neighbours, thinned greedily so
/// no two kept maxima lie within `min_separation` cells (Chebyshev).
///
/// Higher counts are kept first; equal counts in (row, col) order.
pub fn find_local_maxima(grid: &DensityGrid, min_separation: usize) -> Result<Vec<(usize, usize)>> {
    let counts = &grid.counts;
    let (rows, cols) = (counts.rows, counts.cols);
    let mut candidates = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            let v = *counts.get(r, c);
            if v == 0 {
                continue;
            }
            let is_max = NEIGHBORS_8
                .iter()
                .filter_map(|&d| offset(r, c, d, rows, cols))
                .all(|(nr, nc)| v >= *counts.get(nr, nc));
            if is_max {
                candidates.push((v, r, c));
            }
        }
    }
    if candidates.is_empty() {
        return Err(Error::AllZero);
    }
    candidates.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut kept: Vec<(usize, usize)> = Vec::new();
    for (_, r, c) in candidates {
        let clear = kept.iter().all(|&(kr, kc)| kr.abs_diff(r).max(kc.abs_diff(c)) > min_separation);
        if clear {
            kept.push((r, c));
        }
    }
    Ok(kept)
}

/// Node id per cell, `None` outside the mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentLabels {
    pub labels: Raster<Option<usize>>,
    pub seeds: Vec<(usize, usize)>,
}

impl SegmentLabels {
    pub fn segment_count(&self) -> usize {
        self.seeds.len()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("labels serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let labels: SegmentLabels = serde_json::from_str(text)?;
        let l = &labels.labels;
        if l.data.len() != l.rows * l.cols {
            return Err(Error::DimensionMismatch {
                expected: l.rows * l.cols,
                actual: l.data.len(),
            });
        }
        let k = labels.seeds.len();
        if let Some(&id) = l.data.iter().flatten().find(|&&id| id >= k) {
            return Err(Error::IdOutOfRange { id, node_count: k });
        }
        for (id, &(r, c)) in labels.seeds.iter().enumerate() {
            if r >= l.rows || c >= l.cols || *l.get(r, c) != Some(id) {
                return Err(Error::Parse(format!("seed {id} is not labeled with its own id")));
            }
        }
        Ok(labels)
    }

    /// Cell-by-cell rendering of the segmentation, one colour per node.
    pub fn to_svg(&self, pixels_per_cell: f64) -> String {
        let l = &self.labels;
        let mut doc = SvgDocument::new(l.cols as f64 * pixels_per_cell, l.rows as f64 * pixels_per_cell);
        doc.rect(
            0.0,
            0.0,
            l.cols as f64 * pixels_per_cell,
            l.rows as f64 * pixels_per_cell,
            "#202020",
        );
        for r in 0..l.rows {
            for c in 0..l.cols {
                if let Some(id) = l.get(r, c) {
                    // flip rows so y grows upwards like the map
                    let y = (l.rows - 1 - r) as f64 * pixels_per_cell;
                    doc.rect(
                        c as f64 * pixels_per_cell,
                        y,
                        pixels_per_cell,
                        pixels_per_cell,
                        &category_color(*id),
                    );
                }
            }
        }
        for &(r, c) in &self.seeds {
            let y = (l.rows - 1 - r) as f64 * pixels_per_cell + pixels_per_cell / 2.0;
            doc.circle(
                c as f64 * pixels_per_cell + pixels_per_cell / 2.0,
                y,
                pixels_per_cell / 3.0,
                "#000000",
                1.0,
            );
        }
        doc.finish()
    }
}

#[derive(PartialEq)]
struct FloodEntry {
    level: f64,
    order: u64,
    cell: usize,
    label: usize,
}

impl Eq for FloodEntry {}

impl Ord for FloodEntry {
    // BinaryHeap is a max-heap: lowest level, then earliest insertion, pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        other.level.total_cmp(&self.level).then_with(|| other.order.cmp(&self.order))
    }
}

impl PartialOrd for FloodEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Priority-flood watershed restricted to `mask`, 4-connected.
///
/// Seed `i` gets label `i`. Cells are claimed by the first front that reaches
/// them when fronts advance in ascending `surface` order (FIFO among equal
/// levels). Masked cells no front can reach (islands without a seed) take the
/// label of the nearest labeled cell by Euclidean distance, ties to the
/// lowest (row, col).
pub fn watershed(surface: &Raster<f64>, seeds: &[(usize, usize)], mask: &Raster<bool>) -> Result<SegmentLabels> {
    if seeds.is_empty() {
        return Err(Error::NoSeeds);
    }
    if surface.rows != mask.rows || surface.cols != mask.cols {
        return Err(Error::DimensionMismatch {
            expected: surface.rows * surface.cols,
            actual: mask.rows * mask.cols,
        });
    }
    let (rows, cols) = (mask.rows, mask.cols);
    let mut labels: Raster<Option<usize>> = Raster::filled(rows, cols, None);
    let mut heap = BinaryHeap::new();
    let mut order = 0u64;

    for (id, &(r, c)) in seeds.iter().enumerate() {
        if r >= rows || c >= cols || !*mask.get(r, c) {
            return Err(Error::SeedOutsideMask { row: r, col: c });
        }
        if labels.get(r, c).is_some() {
            return Err(Error::InvalidArgument(format!("duplicate seed ({r}, {c})")));
        }
        *labels.get_mut(r, c) = Some(id);
        heap.push(FloodEntry {
            level: *surface.get(r, c),
            order,
            cell: r * cols + c,
            label: id,
        });
        order += 1;
    }

    while let Some(FloodEntry { cell, label, .. }) = heap.pop() {
        let (r, c) = (cell / cols, cell % cols);
        for &d in &NEIGHBORS_4 {
            let Some((nr, nc)) = offset(r, c, d, rows, cols) else {
                continue;
            };
            if !*mask.get(nr, nc) || labels.get(nr, nc).is_some() {
                continue;
            }
            *labels.get_mut(nr, nc) = Some(label);
            heap.push(FloodEntry {
                level: *surface.get(nr, nc),
                order,
                cell: nr * cols + nc,
                label,
            });
            order += 1;
        }
    }

    let orphans: Vec<usize> = (0..rows * cols).filter(|&i| mask.data[i] && labels.data[i].is_none()).collect();
    if !orphans.is_empty() {
        let flooded: Vec<(usize, usize)> = labels.data.iter().enumerate().filter_map(|(i, l)| l.map(|id| (i, id))).collect();
        for i in orphans {
            let (r, c) = ((i / cols) as isize, (i % cols) as isize);
            // flooded is in row-major order, so the first minimum wins ties
            let mut best = (isize::MAX, 0);
            for &(j, id) in &flooded {
                let dr = (j / cols) as isize - r;
                let dc = (j % cols) as isize - c;
                let d2 = dr * dr + dc * dc;
                if d2 < best.0 {
                    best = (d2, id);
                }
            }
            labels.data[i] = Some(best.1);
        }
    }

    Ok(SegmentLabels {
        labels,
        seeds: seeds.to_vec(),
    })
}

/// Local maxima of the density, flooded over the inverse density.
pub fn segment(grid: &DensityGrid, min_separation: usize) -> Result<SegmentLabels> {
    let seeds = find_local_maxima(grid, min_separation)?;
    watershed(&invert_density(grid), &seeds, &grid.mask())
}
