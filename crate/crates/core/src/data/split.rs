//! Seeded train/validation/test split and epoch batching.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::Sample;
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub val_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: 0.8,
            val_fraction: 0.1,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let (t, v) = (self.train_fraction, self.val_fraction);
        if !(t > 0.0 && t < 1.0 && (0.0..1.0).contains(&v) && t + v <= 1.0) {
            return Err(Error::Config(format!("invalid split fractions {t} / {v}")));
        }
        Ok(())
    }
}

/// Partition by a seeded shuffle of the ids: `floor(train n)` training
/// samples, `floor(val n)` validation samples, the rest test.
pub fn split(samples: Vec<Sample>, spec: &SplitSpec) -> Result<(Vec<Sample>, Vec<Sample>, Vec<Sample>)> {
    spec.validate()?;
    let n = samples.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| samples[a].id.cmp(&samples[b].id));
    order.shuffle(&mut Rng::new(spec.seed));
    let n_train = (spec.train_fraction * n as f64).floor() as usize;
    let n_val = (spec.val_fraction * n as f64).floor() as usize;
    let mut slots: Vec<Option<Sample>> = samples.into_iter().map(Some).collect();
    let mut take = |idx: &[usize]| idx.iter().map(|&i| slots[i].take().expect("each index once")).collect();
    let train = take(&order[..n_train]);
    let val = take(&order[n_train..n_train + n_val]);
    let test = take(&order[n_train + n_val..]);
    Ok((train, val, test))
}

/// Shuffled index batches for one epoch; the last batch may be short.
pub fn batches(n: usize, batch_size: usize, rng: &mut Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate_synthetic;

    #[test]
    fn sizes_and_partition() {
        let s = generate_synthetic(0, 10, 16).unwrap();
        let (a, b, c) = split(s.clone(), &SplitSpec::default()).unwrap();
        assert_eq!((a.len(), b.len(), c.len()), (8, 1, 1));
        let mut ids: Vec<_> = a.iter().chain(&b).chain(&c).map(|x| x.id.clone()).collect();
        ids.sort();
        let mut orig: Vec<_> = s.iter().map(|x| x.id.clone()).collect();
        orig.sort();
        assert_eq!(ids, orig);
        let (a2, _, _) = split(s, &SplitSpec::default()).unwrap();
        assert_eq!(a, a2);
    }

    #[test]
    fn short_last_batch() {
        let b = batches(5, 2, &mut Rng::new(0));
        assert_eq!(b.iter().map(Vec::len).collect::<Vec<_>>(), vec![2, 2, 1]);
        assert_eq!(batches(3, 10, &mut Rng::new(0)).len(), 1);
    }
}
