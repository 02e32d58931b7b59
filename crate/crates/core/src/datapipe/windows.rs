use super::series::GridFrame;
use crate::error::{MtsrError, Result};

/// Top-left corners of every full `side x side` window at stride `offset`.
pub fn window_origins(rows: usize, cols: usize, side: usize, offset: usize) -> Result<Vec<(usize, usize)>> {
    if offset == 0 {
        return Err(MtsrError::Config("window offset must be >= 1".into()));
    }
    if side == 0 || side > rows || side > cols {
        return Err(MtsrError::Config(format!(
            "window side {side} does not fit a {rows}x{cols} grid"
        )));
    }
    let rs: Vec<usize> = (0..=rows - side).step_by(offset).collect();
    let cs: Vec<usize> = (0..=cols - side).step_by(offset).collect();
    Ok(rs.iter().flat_map(|&r| cs.iter().map(move |&c| (r, c))).collect())
}

/// Crops a frame into overlapping windows (the augmentation step).
pub fn make_windows(frame: &GridFrame, side: usize, offset: usize) -> Result<Vec<((usize, usize), GridFrame)>> {
    window_origins(frame.rows(), frame.cols(), side, offset)?
        .into_iter()
        .map(|o| Ok((o, frame.window(o, side)?)))
        .collect()
}

/// Moving-average recombination: each cell is the mean of every window
/// prediction covering it.
pub fn stitch(windows: &[((usize, usize), GridFrame)], rows: usize, cols: usize) -> Result<GridFrame> {
    let mut sum = vec![0.0; rows * cols];
    let mut count = vec![0u32; rows * cols];
    for ((r0, c0), w) in windows {
        if r0 + w.rows() > rows || c0 + w.cols() > cols {
            return Err(MtsrError::Dimension(format!(
                "window {}x{} at ({r0}, {c0}) exceeds {rows}x{cols} grid",
                w.rows(),
                w.cols()
            )));
        }
        for r in 0..w.rows() {
            for c in 0..w.cols() {
                let i = (r0 + r) * cols + c0 + c;
                sum[i] += w.get(r, c);
                count[i] += 1;
            }
        }
    }
    if let Some(i) = count.iter().position(|&n| n == 0) {
        return Err(MtsrError::Dimension(format!(
            "cell ({}, {}) is not covered by any window",
            i / cols,
            i % cols
        )));
    }
    let values = sum
        .iter()
        .zip(&count)
        .map(|(&s, &n)| if n == 1 { s } else { s / n as f64 })
        .collect();
    let t = windows.first().map_or(0, |(_, w)| w.time_index);
    Ok(GridFrame::new(rows, cols, values)?.with_time(t))
}
