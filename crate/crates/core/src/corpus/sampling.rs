use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{Manifest, Split};
use crate::error::{Error, Result};
use crate::seed;
use crate::taxonomy::{task_classes, CodecRegistry, Origin, TaskKind};

/// Taxonomy axis that a balanced training set equalizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Grouping {
    #[serde(rename = "VQ")]
    Vq,
    #[serde(rename = "AUX")]
    Aux,
    #[serde(rename = "DEC")]
    Dec,
}

impl Grouping {
    pub const ALL: [Grouping; 3] = [Grouping::Vq, Grouping::Aux, Grouping::Dec];

    pub fn task(self) -> TaskKind {
        match self {
            Grouping::Vq => TaskKind::Vq,
            Grouping::Aux => TaskKind::Aux,
            Grouping::Dec => TaskKind::Dec,
        }
    }

    /// Spoof category names along this axis, lexicographically sorted.
    pub fn categories(self) -> Vec<&'static str> {
        let mut names: Vec<_> = task_classes(self.task()).into_iter().skip(1).collect();
        names.sort_unstable();
        names
    }
}

impl fmt::Display for Grouping {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.task().name())
    }
}

impl FromStr for Grouping {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.parse::<TaskKind>()? {
            TaskKind::Vq => Ok(Grouping::Vq),
            TaskKind::Aux => Ok(Grouping::Aux),
            TaskKind::Dec => Ok(Grouping::Dec),
            TaskKind::Bin => Err(Error::config("BIN is not a taxonomy grouping")),
        }
    }
}

/// Selects `total_spoof` spoof entries split evenly over the grouping's
/// categories.
///
/// Only spoof entries inside `scope` (all splits when `None`) are candidates;
/// everything else, bona fide included, is kept. Category quotas differ by at
/// most one, extra entries going to the lexicographically first categories.
/// Inside a category, codecs are visited round-robin in id order and each
/// codec's entries are taken in a seeded random order. Output keeps the input
/// order.
pub fn balanced_sample(
    manifest: &Manifest,
    registry: &CodecRegistry,
    grouping: Grouping,
    total_spoof: usize,
    scope: Option<Split>,
    seed: u64,
) -> Result<Manifest> {
    let task = grouping.task();
    let categories = grouping.categories();

    // category -> codec id -> entry indices
    let mut pools: BTreeMap<&str, BTreeMap<&str, Vec<usize>>> =
        categories.iter().map(|&c| (c, BTreeMap::new())).collect();
    for (i, entry) in manifest.entries.iter().enumerate() {
        if scope.is_some_and(|s| s != entry.split) {
            continue;
        }
        if let Origin::Codec(id) = &entry.origin {
            let spec = registry.lookup(id)?;
            let cat = spec.label.category(task);
            pools.get_mut(cat).unwrap().entry(id.as_str()).or_default().push(i);
        }
    }

    let available: usize = pools.values().flat_map(|m| m.values()).map(Vec::len).sum();
    if total_spoof > available {
        return Err(Error::config(format!(
            "requested {total_spoof} spoof entries but only {available} are available"
        )));
    }
    for (cat, codecs) in &pools {
        if codecs.is_empty() {
            return Err(Error::EmptyCategory(cat.to_string()));
        }
    }

    let k = categories.len();
    let mut selected = HashSet::new();
    for (rank, cat) in categories.iter().enumerate() {
        let quota = total_spoof / k + usize::from(rank < total_spoof % k);
        let codecs = &pools[cat];
        let have: usize = codecs.values().map(Vec::len).sum();
        if quota > have {
            return Err(Error::CategoryExhausted {
                category: cat.to_string(),
                requested: quota,
                available: have,
            });
        }
        let mut queues: Vec<Vec<usize>> = codecs
            .iter()
            .map(|(id, idx)| {
                let mut idx = idx.clone();
                idx.shuffle(&mut seed::rng(seed::derive(seed, "balanced_sample", id, 0)));
                idx.reverse();
                idx
            })
            .collect();
        let mut taken = 0;
        while taken < quota {
            for q in queues.iter_mut() {
                if taken == quota {
                    break;
                }
                if let Some(i) = q.pop() {
                    selected.insert(i);
                    taken += 1;
                }
            }
        }
    }

    let entries = manifest
        .entries
        .iter()
        .enumerate()
        .filter(|(i, e)| {
            let candidate = !e.origin.is_bonafide() && scope.is_none_or(|s| s == e.split);
            !candidate || selected.contains(i)
        })
        .map(|(_, e)| e.clone())
        .collect();
    Ok(Manifest::new(manifest.root.clone(), entries))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{ManifestEntry, SAMPLE_RATE};
    use crate::taxonomy::{AuxClass, CodecSpec, DecClass, TaxonomyLabel, VqClass};
    use proptest::prelude::*;
    use std::collections::HashMap;

    fn registry() -> CodecRegistry {
        let mut r = CodecRegistry::new();
        let mut n = 0;
        for vq in VqClass::ALL {
            for aux in AuxClass::ALL {
                for dec in DecClass::ALL {
                    r.register(CodecSpec::new(format!("c{n:02}"), "", TaxonomyLabel::new(vq, aux, dec)))
                        .unwrap();
                    n += 1;
                }
            }
        }
        r
    }

    fn manifest(per_codec: &[usize], n_bona: usize, registry: &CodecRegistry) -> Manifest {
        let mut entries = Vec::new();
        let mut push = |origin: Origin, k: usize| {
            let id = format!("{}_{k}", origin.as_str());
            entries.push(ManifestEntry {
                audio_path: format!("{id}.wav").into(),
                utterance_id: id,
                origin,
                split: Split::Train,
                sample_rate: SAMPLE_RATE,
            });
        };
        for k in 0..n_bona {
            push(Origin::Bonafide, k);
        }
        for (spec, &n) in registry.iter().zip(per_codec.iter().cycle()) {
            for k in 0..n {
                push(Origin::Codec(spec.codec_id.clone()), k);
            }
        }
        Manifest::new(".", entries)
    }

    fn counts(m: &Manifest, reg: &CodecRegistry, g: Grouping) -> BTreeMap<String, usize> {
        let mut out = BTreeMap::new();
        for e in &m.entries {
            if let Origin::Codec(id) = &e.origin {
                *out.entry(reg.lookup(id).unwrap().label.category(g.task()).to_string())
                    .or_default() += 1;
            }
        }
        out
    }

    #[test]
    fn aux_equal_split() {
        let reg = registry();
        let m = manifest(&[30], 10, &reg);
        let s = balanced_sample(&m, &reg, Grouping::Aux, 300, None, 1).unwrap();
        let c = counts(&s, &reg, Grouping::Aux);
        assert_eq!(c.values().copied().collect::<Vec<_>>(), [100, 100, 100]);
        assert_eq!(s.entries.iter().filter(|e| e.origin.is_bonafide()).count(), 10);
    }

    #[test]
    fn dec_remainder_goes_to_first_category() {
        let reg = registry();
        let m = manifest(&[30], 0, &reg);
        let s = balanced_sample(&m, &reg, Grouping::Dec, 301, None, 1).unwrap();
        let c = counts(&s, &reg, Grouping::Dec);
        assert_eq!(c["Freq"], 151);
        assert_eq!(c["Time"], 150);
    }

    #[test]
    fn round_robin_across_codecs() {
        let reg = registry();
        let m = manifest(&[30], 0, &reg);
        // 6 Mvq codecs, quota 12 → 2 per codec.
        let s = balanced_sample(&m, &reg, Grouping::Vq, 36, None, 9).unwrap();
        let mut per_codec: HashMap<&str, usize> = HashMap::new();
        for e in &s.entries {
            *per_codec.entry(e.origin.as_str()).or_default() += 1;
        }
        assert!(per_codec.values().all(|&n| n == 2), "{per_codec:?}");
    }

    #[test]
    fn errors() {
        let reg = registry();
        let m = manifest(&[2], 0, &reg);
        assert!(matches!(
            balanced_sample(&m, &reg, Grouping::Aux, 1000, None, 0),
            Err(Error::InvalidConfig(_))
        ));
        // Only codecs whose AUX is Sem or Disent.
        let m2 = m.filter(|e| reg.lookup(e.origin.as_str()).unwrap().label.aux != AuxClass::NoAux);
        assert!(matches!(
            balanced_sample(&m2, &reg, Grouping::Aux, 3, None, 0),
            Err(Error::EmptyCategory(c)) if c == "None"
        ));
        // Uneven availability: one category runs dry before its quota.
        let m3 = m.filter(|e| {
            let l = reg.lookup(e.origin.as_str()).unwrap().label;
            l.dec == DecClass::Time || (l.vq == VqClass::Mvq && l.aux == AuxClass::Sem)
        });
        assert!(matches!(
            balanced_sample(&m3, &reg, Grouping::Dec, 10, None, 0),
            Err(Error::CategoryExhausted { .. })
        ));
    }

    #[test]
    fn scope_limits_candidates() {
        let reg = registry();
        let mut m = manifest(&[4], 2, &reg);
        for e in m.entries.iter_mut().step_by(2) {
            e.split = Split::Dev;
        }
        let n_dev = m.entries.iter().filter(|e| e.split == Split::Dev).count();
        let s = balanced_sample(&m, &reg, Grouping::Dec, 10, Some(Split::Train), 0).unwrap();
        assert_eq!(s.entries.iter().filter(|e| e.split == Split::Dev).count(), n_dev);
        let spoof_train = s
            .entries
            .iter()
            .filter(|e| e.split == Split::Train && !e.origin.is_bonafide())
            .count();
        assert_eq!(spoof_train, 10);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn balanced_and_sub_multiset(
            per_codec in proptest::collection::vec(3usize..12, 1..6),
            frac in 0.0f64..1.0,
            g in 0usize..3,
            seed in any::<u64>(),
        ) {
            let reg = registry();
            let m = manifest(&per_codec, 3, &reg);
            let grouping = Grouping::ALL[g];
            let k = grouping.categories().len();
            let min_cat = counts(&m, &reg, grouping).values().copied().min().unwrap();
            let total = ((min_cat * k) as f64 * frac) as usize;
            let a = balanced_sample(&m, &reg, grouping, total, None, seed).unwrap();
            let b = balanced_sample(&m, &reg, grouping, total, None, seed).unwrap();
            prop_assert_eq!(&a, &b);
            let c = counts(&a, &reg, grouping);
            let vals: Vec<usize> = grouping.categories().iter().map(|n| c.get(*n).copied().unwrap_or(0)).collect();
            prop_assert_eq!(vals.iter().sum::<usize>(), total);
            prop_assert!(vals.iter().max().unwrap() - vals.iter().min().unwrap() <= 1);
            // Sub-multiset that preserves order.
            let mut it = m.entries.iter();
            for e in &a.entries {
                prop_assert!(it.any(|x| x == e));
            }
        }
    }
}
