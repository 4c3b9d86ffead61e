use rand::Rng;

use super::{Combination, Diagnostics};
use crate::error::Result;
use crate::types::TaskGradients;

/// Resolve one coordinate: the positive sign purity `P` decides, against the
/// uniform draw `u`, whether the positive or the negative entries pass.
/// Returns the summed kept value and which entries were kept.
pub fn graddrop_row(row: &[f64], u: f64) -> (f64, Vec<bool>) {
    let total: f64 = row.iter().sum();
    let magnitude: f64 = row.iter().map(|v| v.abs()).sum();
    let purity = if magnitude < 1e-12 {
        0.5
    } else {
        0.5 * (1.0 + total / magnitude)
    };
    let keep_positive = purity > u;
    let mask: Vec<bool> = row
        .iter()
        .map(|&v| if keep_positive { v > 0.0 } else { v < 0.0 })
        .collect();
    let value = row
        .iter()
        .zip(&mask)
        .filter(|(_, keep)| **keep)
        .map(|(v, _)| v)
        .sum();
    (value, mask)
}

/// Sign-consistent gradient dropout, one uniform draw per coordinate.
pub fn graddrop<R: Rng + ?Sized>(g: &TaskGradients, rng: &mut R) -> Result<Combination> {
    let d = g.dim();
    let t = g.tasks();
    let mut direction = Vec::with_capacity(d);
    let mut keep = vec![false; d * t];
    for j in 0..d {
        let u: f64 = rng.random();
        let (value, mask) = graddrop_row(&g.row(j), u);
        direction.push(value);
        for (i, kept) in mask.into_iter().enumerate() {
            keep[i * d + j] = kept;
        }
    }
    let diagnostics = Diagnostics {
        keep_mask: Some(keep),
        converged: true,
        ..Default::default()
    };
    Combination::direction(direction, diagnostics)
}
