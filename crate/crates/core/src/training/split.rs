use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Train/test partition settings. Defaults: 80/20 split, 5 folds inside
/// the training segment.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub folds: usize,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: 0.8,
            folds: 5,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::config("train_fraction", "must lie strictly between 0 and 1"));
        }
        if self.folds < 2 {
            return Err(Error::config("folds", "must be at least 2"));
        }
        Ok(())
    }
}

/// Sorted index sets of a train/test partition.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    /// Classes with a single sample, which were split without stratification.
    pub unstratified_classes: Vec<usize>,
}

/// Seeded stratified split of `labels.len()` samples into `⌊f·n⌋` training
/// and the rest test.
///
/// Each class contributes `⌊f·n_c⌋` training samples; the slots left over
/// go to the classes with the largest fractional remainders (lowest class
/// first on ties). Singleton classes are pooled and split as one group.
pub fn split(labels: &[usize], spec: &SplitSpec) -> Result<Split> {
    spec.validate()?;
    let n = labels.len();
    if n < 10 {
        return Err(Error::contract(format!("splitting needs at least 10 samples, got {n}")));
    }
    let classes = labels.iter().max().map_or(0, |&m| m + 1);
    let mut by_class = vec![Vec::new(); classes];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut pooled = Vec::new();
    let mut unstratified_classes = Vec::new();
    for (c, members) in by_class.into_iter().enumerate() {
        match members.len() {
            0 => {}
            1 => {
                unstratified_classes.push(c);
                pooled.extend(members);
            }
            _ => groups.push(members),
        }
    }
    if !pooled.is_empty() {
        groups.push(pooled);
    }
    for g in &mut groups {
        g.shuffle(&mut rng);
    }

    let target = (spec.train_fraction * n as f64 + 1e-9).floor() as usize;
    let exact: Vec<f64> = groups.iter().map(|g| spec.train_fraction * g.len() as f64).collect();
    let mut quota: Vec<usize> = exact.iter().map(|&e| (e + 1e-9).floor() as usize).collect();
    let assigned: usize = quota.iter().sum();
    let mut order: Vec<usize> = (0..groups.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - quota[a] as f64;
        let rb = exact[b] - quota[b] as f64;
        rb.partial_cmp(&ra).expect("finite").then(a.cmp(&b))
    });
    let mut remaining = target.saturating_sub(assigned);
    for &g in order.iter().cycle().take(order.len() * 2) {
        if remaining == 0 {
            break;
        }
        if quota[g] < groups[g].len() {
            quota[g] += 1;
            remaining -= 1;
        }
    }

    let mut train = Vec::with_capacity(target);
    let mut test = Vec::with_capacity(n - target);
    for (g, q) in groups.iter().zip(&quota) {
        train.extend_from_slice(&g[..*q]);
        test.extend_from_slice(&g[*q..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(Split {
        train,
        test,
        unstratified_classes,
    })
}

/// One cross-validation round.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Fold {
    pub fit: Vec<usize>,
    pub validation: Vec<usize>,
}

/// Seeded partition of `train` into `folds` validation folds whose sizes
/// differ by at most one.
pub fn k_fold(train: &[usize], folds: usize, seed: u64) -> Result<Vec<Fold>> {
    if folds < 2 {
        return Err(Error::contract("k-fold needs at least 2 folds"));
    }
    if folds > train.len() {
        return Err(Error::contract(format!("{folds} folds exceed {} samples", train.len())));
    }
    let mut shuffled = train.to_vec();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let base = train.len() / folds;
    let extra = train.len() % folds;
    let mut out = Vec::with_capacity(folds);
    let mut start = 0;
    for f in 0..folds {
        let len = base + usize::from(f < extra);
        let mut validation = shuffled[start..start + len].to_vec();
        let mut fit: Vec<usize> = shuffled[..start].iter().chain(&shuffled[start + len..]).copied().collect();
        validation.sort_unstable();
        fit.sort_unstable();
        out.push(Fold { fit, validation });
        start += len;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hundred_samples_split_80_20() {
        let labels: Vec<usize> = (0..100).map(|i| i % 3).collect();
        let s = split(&labels, &SplitSpec::default()).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (80, 20));
    }

    #[test]
    fn balanced_classes_stratify_exactly() {
        let labels: Vec<usize> = (0..100).map(|i| usize::from(i >= 50)).collect();
        let s = split(&labels, &SplitSpec::default()).unwrap();
        let ones = s.train.iter().filter(|&&i| labels[i] == 1).count();
        assert_eq!(ones, 40);
        assert_eq!(s.train.len() - ones, 40);
    }

    #[test]
    fn singleton_class_falls_back() {
        let mut labels = vec![0; 12];
        labels[5] = 1;
        let s = split(&labels, &SplitSpec::default()).unwrap();
        assert_eq!(s.unstratified_classes, vec![1]);
        assert_eq!(s.train.len(), 9);
    }

    #[test]
    fn too_small_or_bad_spec() {
        assert!(split(&[0; 9], &SplitSpec::default()).is_err());
        let bad = SplitSpec {
            train_fraction: 1.0,
            ..SplitSpec::default()
        };
        assert!(split(&[0; 20], &bad).is_err());
    }

    #[test]
    fn eighty_into_five_folds() {
        let train: Vec<usize> = (100..180).collect();
        let folds = k_fold(&train, 5, 1).unwrap();
        assert!(folds.iter().all(|f| f.validation.len() == 16 && f.fit.len() == 64));
        let mut all: Vec<usize> = folds.iter().flat_map(|f| f.validation.clone()).collect();
        all.sort();
        assert_eq!(all, train);
        assert!(k_fold(&train, 81, 1).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn split_and_folds_are_partitions(n in 10usize..1000, classes in 1usize..6, seed in any::<u64>()) {
            let labels: Vec<usize> = (0..n).map(|i| (i * 7 + i / 3) % classes).collect();
            let spec = SplitSpec { seed, ..SplitSpec::default() };
            let s = split(&labels, &spec).unwrap();
            prop_assert_eq!(s.train.len(), (0.8 * n as f64 + 1e-9).floor() as usize);
            let mut all: Vec<usize> = s.train.iter().chain(&s.test).copied().collect();
            all.sort();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());

            let folds = k_fold(&s.train, 5, seed).unwrap();
            let mut covered: Vec<usize> = folds.iter().flat_map(|f| f.validation.clone()).collect();
            covered.sort();
            prop_assert_eq!(&covered, &s.train);
            let sizes: Vec<usize> = folds.iter().map(|f| f.validation.len()).collect();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            for f in &folds {
                prop_assert!(f.validation.iter().all(|i| !s.test.contains(i)));
                prop_assert_eq!(f.fit.len() + f.validation.len(), s.train.len());
            }
        }
    }
}
