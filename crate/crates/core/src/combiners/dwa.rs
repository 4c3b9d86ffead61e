use super::softmax;
use crate::error::{Error, Result};
use crate::types::{GradWeights, LossVector, WeightConstraint};

const DENOMINATOR_FLOOR: f64 = 1e-12;

/// Dynamic weight average over the last two recorded loss vectors
/// (oldest first). Fewer than two entries gives all-ones weights.
pub fn dwa(history: &[LossVector], tasks: usize, temperature: f64) -> Result<GradWeights> {
    if temperature.is_nan() || temperature <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "temperature must be positive, got {temperature}"
        )));
    }
    if history.len() < 2 {
        return Ok(GradWeights::ones(tasks));
    }
    let older = &history[history.len() - 2];
    let newer = &history[history.len() - 1];
    if older.len() != tasks || newer.len() != tasks {
        return Err(Error::Shape(format!(
            "loss history is not over {tasks} tasks"
        )));
    }
    let scaled: Vec<f64> = newer
        .values()
        .iter()
        .zip(older.values())
        .map(|(n, o)| if *o <= DENOMINATOR_FLOOR { 1.0 } else { n / o } / temperature)
        .collect();
    let w = softmax(&scaled)
        .into_iter()
        .map(|p| p * tasks as f64)
        .collect();
    GradWeights::new(w, WeightConstraint::SumT)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lv(v: &[f64]) -> LossVector {
        LossVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn cold_start() {
        assert_eq!(dwa(&[], 2, 2.0).unwrap().values(), &[1.0, 1.0]);
        assert_eq!(
            dwa(&[lv(&[3.0, 1.0])], 2, 2.0).unwrap().values(),
            &[1.0, 1.0]
        );
    }

    #[test]
    fn equal_rates() {
        let w = dwa(&[lv(&[2.0, 4.0]), lv(&[1.0, 2.0])], 2, 2.0).unwrap();
        assert!((w.values()[0] - 1.0).abs() < 1e-12 && (w.values()[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rate_two_against_one() {
        let w = dwa(&[lv(&[1.0, 1.0]), lv(&[2.0, 1.0])], 2, 2.0).unwrap();
        let e = 1f64.exp() / (1f64.exp() + 0.5f64.exp());
        assert!((w.values()[0] - 2.0 * e).abs() < 1e-12);
        assert!((w.values()[0] - 1.2449).abs() < 1e-4 && (w.values()[1] - 0.7551).abs() < 1e-4);
    }

    #[test]
    fn tiny_denominator_counts_as_unit_rate() {
        let w = dwa(&[lv(&[0.0, 1.0]), lv(&[5.0, 1.0])], 2, 2.0).unwrap();
        assert!((w.values()[0] - 1.0).abs() < 1e-12);
    }
}
