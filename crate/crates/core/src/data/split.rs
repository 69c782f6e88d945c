use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::derive_rng;

/// User-disjoint train/test partition.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub train_users: BTreeSet<String>,
    pub test_users: BTreeSet<String>,
    pub seed: u64,
}

/// Training users drawn from a class of `n`: `round(4n/7)` with halves going to training,
/// clamped so both sides keep at least one user.
pub fn train_count(n: usize) -> usize {
    ((8 * n + 7) / 14).clamp(1, n.saturating_sub(1).max(1))
}

/// Shuffles each class with a seeded generator and takes the first [`train_count`] users of
/// each class for training.
pub fn make_split(users: &[(String, bool)], seed: u64) -> Result<SplitPlan> {
    let mut plan = SplitPlan { train_users: BTreeSet::new(), test_users: BTreeSet::new(), seed };
    for (familiar, name) in [(false, "unfamiliar"), (true, "familiar")] {
        let mut class: Vec<&str> = users.iter().filter(|(_, f)| *f == familiar).map(|(u, _)| u.as_str()).collect();
        class.sort_unstable();
        class.dedup();
        if class.len() < 2 {
            return Err(Error::Config(format!(
                "the {name} class has {} user(s); a split needs at least 2",
                class.len()
            )));
        }
        class.shuffle(&mut derive_rng(seed, &["split", name]));
        let k = train_count(class.len());
        plan.train_users.extend(class[..k].iter().map(|u| u.to_string()));
        plan.test_users.extend(class[k..].iter().map(|u| u.to_string()));
    }
    if let Some(u) = plan.train_users.intersection(&plan.test_users).next() {
        return Err(Error::Config(format!("user `{u}` is listed under both labels")));
    }
    Ok(plan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn roster(per_class: usize) -> Vec<(String, bool)> {
        (0..2 * per_class).map(|i| (format!("u{i:02}"), i < per_class)).collect()
    }

    #[test]
    fn full_scale_counts() {
        let plan = make_split(&roster(7), 1).unwrap();
        assert_eq!(plan.train_users.len(), 8);
        assert_eq!(plan.test_users.len(), 6);
        let fam = |set: &BTreeSet<String>| set.iter().filter(|u| u[1..].parse::<usize>().unwrap() < 7).count();
        assert_eq!(fam(&plan.train_users), 4);
        assert_eq!(fam(&plan.test_users), 3);
    }

    #[test]
    fn rounding_rule_by_enumeration() {
        // round(4n/7), ties to train, never emptying a side
        let expected = [(2, 1), (3, 2), (4, 2), (5, 3), (6, 3), (7, 4), (8, 5), (14, 8)];
        for (n, k) in expected {
            assert_eq!(train_count(n), k, "n={n}");
        }
        let plan = make_split(&roster(2), 5).unwrap();
        assert_eq!((plan.train_users.len(), plan.test_users.len()), (2, 2));
        let all: BTreeSet<String> = roster(2).into_iter().map(|(u, _)| u).collect();
        let union: BTreeSet<String> = plan.train_users.union(&plan.test_users).cloned().collect();
        assert_eq!(union, all);
    }

    #[test]
    fn too_few_users() {
        let users = vec![("a".to_string(), true), ("b".to_string(), false), ("c".to_string(), false)];
        assert!(matches!(make_split(&users, 0), Err(Error::Config(_))));
    }

    #[test]
    fn input_order_does_not_matter() {
        let mut users = roster(7);
        let a = make_split(&users, 3).unwrap();
        users.reverse();
        assert_eq!(make_split(&users, 3).unwrap(), a);
    }

    proptest! {
        #[test]
        fn deterministic_and_disjoint(seed in any::<u64>(), per_class in 2usize..12) {
            let users = roster(per_class);
            let a = make_split(&users, seed).unwrap();
            prop_assert_eq!(&a, &make_split(&users, seed).unwrap());
            prop_assert!(a.train_users.is_disjoint(&a.test_users));
            prop_assert_eq!(a.train_users.len() + a.test_users.len(), users.len());
        }
    }
}
