//! Completion of gain-table cells that received no training samples.

use crate::error::{Error, Result};
use crate::gain::gain_log_mmse;
use crate::snr::SnrAxes;

fn nearest(known: &[bool], at: usize) -> Option<usize> {
    (1..known.len()).find_map(|dist| {
        let below = at.checked_sub(dist).filter(|&k| known[k]);
        let above = Some(at + dist).filter(|&k| k < known.len() && known[k]);
        below.or(above)
    })
}

/// Copies the nearest trained value along the prior axis, then along the
/// posterior axis; anything still empty gets the log-MMSE gain at the cell
/// centre. Returns the number of cells filled.
pub fn fill_empty(values: &mut [f64], observed: &[bool], axes: &SnrAxes) -> Result<usize> {
    if values.len() != axes.cells() || observed.len() != axes.cells() {
        return Err(Error::dim("fill mask does not match the table"));
    }
    let (ni, nj) = (axes.i, axes.j);
    let mut known = observed.to_vec();
    let mut filled = 0;

    for j in 0..nj {
        let column: Vec<bool> = (0..ni).map(|i| observed[i * nj + j]).collect();
        for i in 0..ni {
            if column[i] {
                continue;
            }
            if let Some(src) = nearest(&column, i) {
                values[i * nj + j] = values[src * nj + j];
                known[i * nj + j] = true;
                filled += 1;
            }
        }
    }

    for i in 0..ni {
        let row: Vec<bool> = known[i * nj..(i + 1) * nj].to_vec();
        for j in 0..nj {
            if row[j] {
                continue;
            }
            if let Some(src) = nearest(&row, j) {
                values[i * nj + j] = values[i * nj + src];
                known[i * nj + j] = true;
                filled += 1;
            }
        }
    }

    for i in 0..ni {
        for j in 0..nj {
            if !known[i * nj + j] {
                values[i * nj + j] = gain_log_mmse(axes.prior_center(i), axes.posterior_center(j))?;
                filled += 1;
            }
        }
    }
    Ok(filled)
}
