//! Probe layouts: how fine cells are grouped into probes and where each
//! probe's reading lands on the square coarse grid fed to the models.

use serde::{Deserialize, Serialize};

use super::series::GridFrame;
use crate::error::{MtsrError, Result};

/// Square probe coverage: `size x size` fine cells with top-left at `(row, col)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Probe {
    pub row: usize,
    pub col: usize,
    pub size: usize,
}

impl Probe {
    pub fn cells(&self) -> usize {
        self.size * self.size
    }

    pub fn contains(&self, r: usize, c: usize) -> bool {
        r >= self.row && r < self.row + self.size && c >= self.col && c < self.col + self.size
    }

    /// Twice the centroid, kept integral.
    fn centroid2(&self) -> (usize, usize) {
        (2 * self.row + self.size, 2 * self.col + self.size)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "factor")]
pub enum LayoutKind {
    Uniform(usize),
    Mixture,
}

/// Probe coverage sizes of the mixture layout, from the centre outwards.
pub const MIXTURE_SIZES: [usize; 3] = [2, 4, 10];
/// Target share of probes per size in [`MIXTURE_SIZES`] order.
pub const MIXTURE_SHARES: [f64; 3] = [0.49, 0.44, 0.07];

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeLayout {
    kind: LayoutKind,
    rows: usize,
    cols: usize,
    probes: Vec<Probe>,
    cell_probe: Vec<usize>,
    coarse_rows: usize,
    coarse_cols: usize,
    /// Coarse cell index of each probe's reading.
    projection: Vec<usize>,
}

impl ProbeLayout {
    /// Every probe covers `n_f x n_f` cells; the coarse grid is the probe lattice.
    pub fn uniform(rows: usize, cols: usize, n_f: usize) -> Result<Self> {
        if n_f == 0 || !rows.is_multiple_of(n_f) || !cols.is_multiple_of(n_f) {
            return Err(MtsrError::Config(format!(
                "uniform layout with factor {n_f} needs grid sides divisible by it, got {rows}x{cols}"
            )));
        }
        let (cr, cc) = (rows / n_f, cols / n_f);
        let probes: Vec<Probe> = (0..cr)
            .flat_map(|i| {
                (0..cc).map(move |j| Probe {
                    row: i * n_f,
                    col: j * n_f,
                    size: n_f,
                })
            })
            .collect();
        let projection = (0..probes.len()).collect();
        Self::assemble(LayoutKind::Uniform(n_f), rows, cols, probes, cr, cc, projection)
    }

    /// Concentric mixture on a square grid: a central square of 2x2 probes,
    /// a ring of 4x4 probes and an outer ring of 10x10 probes, with ring
    /// widths chosen so the probe shares come closest to 49% / 44% / 7%.
    ///
    /// Readings are projected onto a square coarse grid of side
    /// `ceil(sqrt(probes))`: probes are ordered by centroid (row-major) and
    /// laid out row by row. On an 80x80 window this yields exactly
    /// 196 / 176 / 28 probes on a 20x20 coarse grid.
    pub fn mixture(side: usize) -> Result<Self> {
        let (outer, middle) = best_mixture_rings(side)
            .ok_or_else(|| MtsrError::Config(format!("no concentric 2/4/10 mixture tiles a {side}x{side} grid")))?;
        Self::mixture_with_rings(side, outer, middle)
    }

    /// Mixture layout with explicit outer (10x10) and middle (4x4) ring widths.
    pub fn mixture_with_rings(side: usize, outer: usize, middle: usize) -> Result<Self> {
        if !ring_config_valid(side, outer, middle) {
            return Err(MtsrError::Config(format!(
                "rings outer={outer} middle={middle} do not tile a {side}x{side} grid"
            )));
        }
        let mut probes = Vec::new();
        let inner_lo = outer;
        let inner_hi = side - outer;
        let centre_lo = outer + middle;
        let centre_hi = side - outer - middle;
        for r in (0..side).step_by(10) {
            for c in (0..side).step_by(10) {
                if !(r >= inner_lo && r < inner_hi && c >= inner_lo && c < inner_hi) {
                    probes.push(Probe {
                        row: r,
                        col: c,
                        size: 10,
                    });
                }
            }
        }
        for r in (inner_lo..inner_hi).step_by(4) {
            for c in (inner_lo..inner_hi).step_by(4) {
                if !(r >= centre_lo && r < centre_hi && c >= centre_lo && c < centre_hi) {
                    probes.push(Probe {
                        row: r,
                        col: c,
                        size: 4,
                    });
                }
            }
        }
        for r in (centre_lo..centre_hi).step_by(2) {
            for c in (centre_lo..centre_hi).step_by(2) {
                probes.push(Probe {
                    row: r,
                    col: c,
                    size: 2,
                });
            }
        }
        let n = probes.len();
        let coarse_side = (1..).find(|s| s * s >= n).unwrap();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&p| probes[p].centroid2());
        let mut projection = vec![0; n];
        for (slot, &p) in order.iter().enumerate() {
            projection[p] = slot;
        }
        Self::assemble(
            LayoutKind::Mixture,
            side,
            side,
            probes,
            coarse_side,
            coarse_side,
            projection,
        )
    }

    /// Layout for an instance: `Uniform(n)` or the default mixture.
    pub fn for_kind(kind: LayoutKind, rows: usize, cols: usize) -> Result<Self> {
        match kind {
            LayoutKind::Uniform(n) => Self::uniform(rows, cols, n),
            LayoutKind::Mixture => {
                if rows != cols {
                    return Err(MtsrError::Config(format!(
                        "mixture layout needs a square grid, got {rows}x{cols}"
                    )));
                }
                Self::mixture(rows)
            }
        }
    }

    fn assemble(
        kind: LayoutKind,
        rows: usize,
        cols: usize,
        probes: Vec<Probe>,
        coarse_rows: usize,
        coarse_cols: usize,
        projection: Vec<usize>,
    ) -> Result<Self> {
        let mut cell_probe = vec![usize::MAX; rows * cols];
        for (p, probe) in probes.iter().enumerate() {
            for r in probe.row..probe.row + probe.size {
                for c in probe.col..probe.col + probe.size {
                    let slot = &mut cell_probe[r * cols + c];
                    if *slot != usize::MAX {
                        return Err(MtsrError::Config(format!("cell ({r}, {c}) covered twice")));
                    }
                    *slot = p;
                }
            }
        }
        if let Some(i) = cell_probe.iter().position(|&p| p == usize::MAX) {
            return Err(MtsrError::Config(format!(
                "cell ({}, {}) not covered",
                i / cols,
                i % cols
            )));
        }
        Ok(ProbeLayout {
            kind,
            rows,
            cols,
            probes,
            cell_probe,
            coarse_rows,
            coarse_cols,
            projection,
        })
    }

    pub fn kind(&self) -> LayoutKind {
        self.kind
    }

    pub fn fine_dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn coarse_dims(&self) -> (usize, usize) {
        (self.coarse_rows, self.coarse_cols)
    }

    pub fn probes(&self) -> &[Probe] {
        &self.probes
    }

    pub fn probe_of(&self, r: usize, c: usize) -> usize {
        self.cell_probe[r * self.cols + c]
    }

    /// Coarse cell `(row, col)` holding probe `p`'s reading.
    pub fn coarse_cell(&self, p: usize) -> (usize, usize) {
        let i = self.projection[p];
        (i / self.coarse_cols, i % self.coarse_cols)
    }

    /// Linear upscaling factor between the fine and the coarse grid, when integral.
    pub fn mean_factor(&self) -> Option<usize> {
        (self.rows.is_multiple_of(self.coarse_rows)
            && self.cols.is_multiple_of(self.coarse_cols)
            && self.rows / self.coarse_rows == self.cols / self.coarse_cols)
            .then(|| self.rows / self.coarse_rows)
    }

    fn check_fine(&self, frame: &GridFrame) -> Result<()> {
        if frame.dims() != (self.rows, self.cols) {
            return Err(MtsrError::Dimension(format!(
                "layout expects {}x{} fine frames, got {}x{}",
                self.rows,
                self.cols,
                frame.rows(),
                frame.cols()
            )));
        }
        Ok(())
    }

    /// Mean of each probe's cells, placed on the coarse grid. Coarse cells
    /// no probe projects to stay zero.
    pub fn aggregate(&self, frame: &GridFrame) -> Result<GridFrame> {
        self.check_fine(frame)?;
        // Deviations from each probe's first cell are summed, so a constant
        // block averages to its value exactly.
        let mut anchors: Vec<Option<f64>> = vec![None; self.probes.len()];
        let mut sums = vec![0.0; self.probes.len()];
        for (i, &v) in frame.values().iter().enumerate() {
            let p = self.cell_probe[i];
            let a = *anchors[p].get_or_insert(v);
            sums[p] += v - a;
        }
        let mut coarse = GridFrame::zeros(self.coarse_rows, self.coarse_cols).with_time(frame.time_index);
        for (p, probe) in self.probes.iter().enumerate() {
            let a = anchors[p].unwrap_or(0.0);
            coarse.values_mut()[self.projection[p]] = a + sums[p] / probe.cells() as f64;
        }
        Ok(coarse)
    }

    /// Replicates each probe's coarse reading over its fine cells.
    pub fn expand(&self, coarse: &GridFrame) -> Result<GridFrame> {
        if coarse.dims() != (self.coarse_rows, self.coarse_cols) {
            return Err(MtsrError::Dimension(format!(
                "layout expects {}x{} coarse frames, got {}x{}",
                self.coarse_rows,
                self.coarse_cols,
                coarse.rows(),
                coarse.cols()
            )));
        }
        let values = self
            .cell_probe
            .iter()
            .map(|&p| coarse.values()[self.projection[p]])
            .collect();
        Ok(GridFrame::new(self.rows, self.cols, values)?.with_time(coarse.time_index))
    }

    /// Probe counts per coverage size, ascending by size.
    pub fn size_histogram(&self) -> Vec<(usize, usize)> {
        let mut sizes: Vec<usize> = self.probes.iter().map(|p| p.size).collect();
        sizes.sort_unstable();
        let mut out: Vec<(usize, usize)> = Vec::new();
        for s in sizes {
            match out.last_mut() {
                Some((size, n)) if *size == s => *n += 1,
                _ => out.push((s, 1)),
            }
        }
        out
    }
}

fn ring_config_valid(side: usize, outer: usize, middle: usize) -> bool {
    side.is_multiple_of(10)
        && outer > 0
        && outer.is_multiple_of(10)
        && middle > 0
        && middle.is_multiple_of(4)
        && side > 2 * (outer + middle)
        && (side - 2 * outer).is_multiple_of(4)
        && (side - 2 * outer - 2 * middle).is_multiple_of(2)
}

fn mixture_counts(side: usize, outer: usize, middle: usize) -> [usize; 3] {
    let inner = side - 2 * outer;
    let centre = inner - 2 * middle;
    [
        centre * centre / 4,
        (inner * inner - centre * centre) / 16,
        (side * side - inner * inner) / 100,
    ]
}

fn best_mixture_rings(side: usize) -> Option<(usize, usize)> {
    let mut best: Option<(f64, usize, usize)> = None;
    for outer in (10..side).step_by(10) {
        for middle in (4..side).step_by(4) {
            if !ring_config_valid(side, outer, middle) {
                continue;
            }
            let counts = mixture_counts(side, outer, middle);
            let total: usize = counts.iter().sum();
            let err: f64 = counts
                .iter()
                .zip(MIXTURE_SHARES)
                .map(|(&n, share)| (n as f64 / total as f64 - share).powi(2))
                .sum();
            if best.is_none_or(|(e, _, _)| err < e) {
                best = Some((err, outer, middle));
            }
        }
    }
    best.map(|(_, o, m)| (o, m))
}
