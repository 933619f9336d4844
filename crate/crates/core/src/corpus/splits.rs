// SPDX-License-Identifier: MIT OR Apache-2.0

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::instance::{gen_instance, with_ideal_scores, InstanceSpec, QAInstance};
use super::world::World;
use crate::error::{LabError, Result};
use crate::seed::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub ie: usize,
    pub validation: usize,
    pub test: usize,
}

impl Default for SplitSizes {
    fn default() -> Self {
        Self {
            ie: 100,
            validation: 100,
            test: 1000,
        }
    }
}

/// Head-identification, validation and test instances over disjoint facts.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkSplits {
    pub ie_set: Vec<QAInstance>,
    pub validation_set: Vec<QAInstance>,
    pub test_set: Vec<QAInstance>,
}

/// Partitions the world's facts and materializes one ideally-scored
/// instance per fact under `spec`.
pub fn split_dataset(
    world: &World,
    sizes: SplitSizes,
    spec: &InstanceSpec,
    seed: u64,
) -> Result<BenchmarkSplits> {
    let need = sizes.ie + sizes.validation + sizes.test;
    if need > world.facts.len() {
        return Err(LabError::Config(format!(
            "splits need {need} facts, world has {}",
            world.facts.len()
        )));
    }
    let mut order: Vec<usize> = (0..world.facts.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let build = |name: &str, facts: &[usize]| -> Result<Vec<QAInstance>> {
        facts
            .iter()
            .enumerate()
            .map(|(i, &f)| {
                let id = format!("{name}-{i:04}");
                let inst_seed = derive_seed(seed, &id);
                gen_instance(world, f, spec, inst_seed, &id).map(with_ideal_scores)
            })
            .collect()
    };
    let (ie, rest) = order.split_at(sizes.ie);
    let (val, rest) = rest.split_at(sizes.validation);
    let test = &rest[..sizes.test];
    Ok(BenchmarkSplits {
        ie_set: build("ie", ie)?,
        validation_set: build("val", val)?,
        test_set: build("test", test)?,
    })
}

/// Regenerates `instances` under a different layout, keeping facts, ids and
/// seeds. Scores are reset to the ideal assignment.
pub fn relayout(world: &World, instances: &[QAInstance], spec: &InstanceSpec) -> Result<Vec<QAInstance>> {
    instances
        .iter()
        .map(|q| gen_instance(world, q.fact, spec, q.seed, &q.id).map(with_ideal_scores))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::world::gen_world;
    use std::collections::HashSet;

    #[test]
    fn default_sized_splits_are_disjoint() {
        let w = gen_world(1, 400, 5, 1300).unwrap();
        let s = split_dataset(&w, SplitSizes::default(), &InstanceSpec::default(), 4).unwrap();
        assert_eq!((s.ie_set.len(), s.validation_set.len(), s.test_set.len()), (100, 100, 1000));
        let key = |q: &QAInstance| (w.facts[q.fact].subject, w.facts[q.fact].relation);
        let a: HashSet<_> = s.ie_set.iter().map(key).collect();
        let b: HashSet<_> = s.validation_set.iter().map(key).collect();
        let c: HashSet<_> = s.test_set.iter().map(key).collect();
        assert!(a.is_disjoint(&b) && a.is_disjoint(&c) && b.is_disjoint(&c));
        assert_eq!(a.len() + b.len() + c.len(), 1200);
    }

    #[test]
    fn too_many_requested() {
        let w = gen_world(1, 50, 2, 60).unwrap();
        let sizes = SplitSizes { ie: 30, validation: 20, test: 20 };
        assert!(matches!(
            split_dataset(&w, sizes, &InstanceSpec::default(), 0),
            Err(LabError::Config(_))
        ));
    }

    #[test]
    fn deterministic() {
        let w = gen_world(1, 50, 2, 60).unwrap();
        let sizes = SplitSizes { ie: 10, validation: 10, test: 20 };
        let a = split_dataset(&w, sizes, &InstanceSpec::default(), 3).unwrap();
        let b = split_dataset(&w, sizes, &InstanceSpec::default(), 3).unwrap();
        assert_eq!(a, b);
    }
}
