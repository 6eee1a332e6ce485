use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::EvalDataset;

/// Default share of records used for fitting a calibrator.
pub const DEFAULT_SPLIT_FRACTION: f64 = 0.8;

/// Fitting / held-out split of record indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub fit: Vec<usize>,
    pub held_out: Vec<usize>,
}

/// Seeded split of `data` into a fitting part holding `fraction` of the
/// records (at least one) and a held-out remainder.
///
/// Records are ordered by id before shuffling, so membership depends only on
/// ids and the seed, never on record order.
pub fn calibration_split(data: &EvalDataset, fraction: f64, seed: u64) -> Result<Split> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidArgument(format!("split fraction {fraction} not in (0, 1)")));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.sort_by(|&a, &b| data.records()[a].id.cmp(&data.records()[b].id));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let n_fit = ((fraction * data.len() as f64).round() as usize).clamp(1, data.len());
    let mut fit = order[..n_fit].to_vec();
    let mut held_out = order[n_fit..].to_vec();
    fit.sort_unstable();
    held_out.sort_unstable();
    Ok(Split { fit, held_out })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{InstanceRecord, LabelHistogram, ProbVector};

    fn data(ids: &[&str]) -> EvalDataset {
        EvalDataset::new(
            ids.iter()
                .map(|id| InstanceRecord::new(*id, ProbVector::uniform(2), LabelHistogram::new(vec![1, 0]).unwrap()))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn split_sizes_follow_fraction() {
        let ids: Vec<String> = (0..100).map(|i| format!("x{i}")).collect();
        let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
        let s = calibration_split(&data(&refs), 0.8, 1).unwrap();
        assert_eq!(s.fit.len(), 80);
        assert_eq!(s.held_out.len(), 20);
    }

    #[test]
    fn membership_ignores_record_order() {
        let ids = ["a", "b", "c", "d", "e", "f", "g", "h", "i", "j"];
        let mut reversed = ids;
        reversed.reverse();
        let d1 = data(&ids);
        let d2 = data(&reversed);
        let s1 = calibration_split(&d1, 0.7, 9).unwrap();
        let s2 = calibration_split(&d2, 0.7, 9).unwrap();
        let mut a: Vec<&str> = s1.fit.iter().map(|&i| d1.records()[i].id.as_str()).collect();
        let mut b: Vec<&str> = s2.fit.iter().map(|&i| d2.records()[i].id.as_str()).collect();
        a.sort_unstable();
        b.sort_unstable();
        assert_eq!(a, b);
    }

    #[test]
    fn single_record_goes_to_fitting() {
        let s = calibration_split(&data(&["only"]), 0.8, 0).unwrap();
        assert_eq!(s.fit, vec![0]);
        assert!(s.held_out.is_empty());
    }

    #[test]
    fn bad_fraction_is_rejected() {
        assert!(calibration_split(&data(&["a"]), 1.0, 0).is_err());
        assert!(calibration_split(&data(&["a"]), 0.0, 0).is_err());
    }
}
