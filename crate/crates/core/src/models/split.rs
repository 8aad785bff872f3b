use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::simgen::{ConditionClass, NUM_CLASSES};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitOptions {
    pub test_fraction: f64,
    pub seed: u64,
    /// Assign whole trials to one side instead of individual windows.
    pub by_trial: bool,
}

impl Default for SplitOptions {
    fn default() -> Self {
        SplitOptions {
            test_fraction: 0.3,
            seed: 0,
            by_trial: false,
        }
    }
}

/// Row indices of each side, ascending.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Per-class test allocation: `round(n_c · f)` clamped to `[1, n_c − 1]`,
/// then nudged one unit at a time until the total equals `round(N · f)`.
/// Nudges go to the class whose rounding is furthest off in the needed
/// direction, lowest class id first on ties.
fn allocate(counts: &[usize; NUM_CLASSES], fraction: f64) -> [usize; NUM_CLASSES] {
    let total: usize = counts.iter().sum();
    let target = (total as f64 * fraction).round() as usize;
    let exact: Vec<f64> = counts.iter().map(|&n| n as f64 * fraction).collect();
    let mut alloc = [0usize; NUM_CLASSES];
    for c in 0..NUM_CLASSES {
        if counts[c] > 0 {
            alloc[c] = (exact[c].round() as usize).clamp(1, counts[c] - 1);
        }
    }
    loop {
        let sum: usize = alloc.iter().sum();
        if sum == target {
            break;
        }
        let shrink = sum > target;
        let pick = (0..NUM_CLASSES)
            .filter(|&c| counts[c] > 0 && if shrink { alloc[c] > 1 } else { alloc[c] + 1 < counts[c] })
            .map(|c| {
                let off = alloc[c] as f64 - exact[c];
                (c, if shrink { off } else { -off })
            })
            .fold(None::<(usize, f64)>, |best, cur| match best {
                Some(b) if b.1 >= cur.1 - 1e-9 => Some(b),
                _ => Some(cur),
            });
        match pick {
            Some((c, _)) if shrink => alloc[c] -= 1,
            Some((c, _)) => alloc[c] += 1,
            None => break,
        }
    }
    alloc
}

/// Stratified partition of rows labeled `labels`. With `by_trial`, the
/// stratification units are the distinct values of `groups` (each group
/// must carry a single label).
pub fn stratified_split_indices(labels: &[ConditionClass], groups: &[usize], opts: &SplitOptions) -> Result<Split> {
    if !(opts.test_fraction > 0.0 && opts.test_fraction < 1.0) {
        return Err(Error::Split(format!("test fraction {} outside (0, 1)", opts.test_fraction)));
    }
    if labels.len() != groups.len() {
        return Err(Error::Split("labels and groups differ in length".into()));
    }

    // Units: single rows, or whole trials.
    let units: Vec<(ConditionClass, Vec<usize>)> = if opts.by_trial {
        let mut by_group: BTreeMap<usize, (ConditionClass, Vec<usize>)> = BTreeMap::new();
        for (i, (&label, &g)) in labels.iter().zip(groups).enumerate() {
            let entry = by_group.entry(g).or_insert((label, Vec::new()));
            if entry.0 != label {
                return Err(Error::Split(format!("trial {g} mixes labels {} and {label}", entry.0)));
            }
            entry.1.push(i);
        }
        by_group.into_values().collect()
    } else {
        labels.iter().enumerate().map(|(i, &l)| (l, vec![i])).collect()
    };

    let mut per_class: [Vec<usize>; NUM_CLASSES] = Default::default();
    for (u, (label, _)) in units.iter().enumerate() {
        per_class[label.id()].push(u);
    }
    let unit_word = if opts.by_trial { "trials" } else { "rows" };
    for (c, members) in per_class.iter().enumerate() {
        if members.len() == 1 {
            return Err(Error::Split(format!(
                "class {} has only 1 of the {unit_word} needed for a stratified split (need ≥ 2)",
                ConditionClass::ALL[c]
            )));
        }
    }
    let present = per_class.iter().filter(|m| !m.is_empty()).count();
    if present < 2 {
        return Err(Error::Split(format!("need at least 2 classes, found {present}")));
    }

    let counts: [usize; NUM_CLASSES] = std::array::from_fn(|c| per_class[c].len());
    let alloc = allocate(&counts, opts.test_fraction);

    let mut train = Vec::with_capacity(labels.len());
    let mut test = Vec::new();
    for (c, members) in per_class.iter_mut().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        rng.set_stream(c as u64);
        members.shuffle(&mut rng);
        for (j, &u) in members.iter().enumerate() {
            let side = if j < alloc[c] { &mut test } else { &mut train };
            side.extend_from_slice(&units[u].1);
        }
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(Split { train, test })
}

pub fn stratified_split(ds: &Dataset, opts: &SplitOptions) -> Result<(Dataset, Dataset)> {
    let groups: Vec<usize> = ds.meta.iter().map(|m| m.trial_id).collect();
    let s = stratified_split_indices(&ds.y, &groups, opts)?;
    Ok((ds.select(&s.train), ds.select(&s.test)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simgen::campaign_classes;
    use proptest::prelude::*;

    fn windows(per_trial: usize) -> (Vec<ConditionClass>, Vec<usize>) {
        campaign_classes()
            .into_iter()
            .enumerate()
            .flat_map(|(t, c)| std::iter::repeat_n((c, t), per_trial))
            .unzip()
    }

    #[test]
    fn campaign_at_4000_samples() {
        // 324 windows: Normal 96 → 28.8, D1 48 → 14.4, D2..D6 36 → 10.8.
        // Rounded: 29 + 14 + 5·11 = 98 against round(97.2) = 97, so one
        // class with +0.2 excess gives a row back (Normal, lowest id).
        let (labels, groups) = windows(12);
        let s = stratified_split_indices(&labels, &groups, &SplitOptions { seed: 42, ..Default::default() }).unwrap();
        let mut test_counts = [0; NUM_CLASSES];
        for &i in &s.test {
            test_counts[labels[i].id()] += 1;
        }
        assert_eq!(test_counts, [28, 14, 11, 11, 11, 11, 11]);
        assert_eq!(s.test.len(), 97);
        assert_eq!(s.train.len() + s.test.len(), 324);
    }

    #[test]
    fn single_class_is_rejected() {
        let labels = vec![ConditionClass::Normal; 10];
        let groups: Vec<usize> = (0..10).collect();
        assert!(matches!(
            stratified_split_indices(&labels, &groups, &SplitOptions::default()),
            Err(Error::Split(_))
        ));
    }

    #[test]
    fn singleton_class_is_named() {
        let mut labels = vec![ConditionClass::Normal; 10];
        labels[3] = ConditionClass::D4ClipLow;
        let groups: Vec<usize> = (0..10).collect();
        let err = stratified_split_indices(&labels, &groups, &SplitOptions::default()).unwrap_err();
        assert!(err.to_string().contains("D4_ClipLow"), "{err}");
    }

    #[test]
    fn by_trial_keeps_trials_whole() {
        let (labels, groups) = windows(6);
        let opts = SplitOptions { by_trial: true, seed: 3, ..Default::default() };
        let s = stratified_split_indices(&labels, &groups, &opts).unwrap();
        let test_trials: std::collections::BTreeSet<usize> = s.test.iter().map(|&i| groups[i]).collect();
        for &i in &s.train {
            assert!(!test_trials.contains(&groups[i]));
        }
        // 27 trials → round(8.1) = 8 test trials.
        assert_eq!(test_trials.len(), 8);
    }

    proptest! {
        #[test]
        fn proportions_within_one_row(counts in proptest::collection::vec(2usize..60, 2..=7), seed in any::<u64>()) {
            let labels: Vec<ConditionClass> = counts
                .iter()
                .enumerate()
                .flat_map(|(c, &n)| std::iter::repeat_n(ConditionClass::ALL[c], n))
                .collect();
            let groups: Vec<usize> = (0..labels.len()).collect();
            let opts = SplitOptions { seed, ..Default::default() };
            let s = stratified_split_indices(&labels, &groups, &opts).unwrap();
            let again = stratified_split_indices(&labels, &groups, &opts).unwrap();
            prop_assert_eq!(&s, &again);
            let mut all: Vec<usize> = s.train.iter().chain(&s.test).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, groups.clone());
            for (c, &n) in counts.iter().enumerate() {
                let t = s.test.iter().filter(|&&i| labels[i].id() == c).count();
                prop_assert!((t as f64 - n as f64 * 0.3).abs() <= 1.0, "class {} test {} of {}", c, t, n);
                prop_assert!(t >= 1 && t < n);
            }
        }
    }
}
