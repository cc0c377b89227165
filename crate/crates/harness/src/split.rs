//! Stratified train/test split that never separates questions sharing a
//! TVL id.

use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tvl_core::datagen::Scenario;
use tvl_core::tvl::VisType;

use crate::{DatasetRecord, HarnessError};

pub type Stratum = (VisType, Scenario);

pub fn stratum(r: &DatasetRecord) -> Stratum {
    (r.vis_type, r.scenario)
}

/// Per-stratum quotas proportional to `counts` and summing to `n`, by
/// largest remainder (ties broken by stratum order).
pub fn stratum_quotas(counts: &BTreeMap<Stratum, usize>, n: usize) -> BTreeMap<Stratum, usize> {
    let total: usize = counts.values().sum();
    if total == 0 {
        return BTreeMap::new();
    }
    let exact: Vec<(Stratum, f64)> =
        counts.iter().map(|(s, c)| (*s, n as f64 * *c as f64 / total as f64)).collect();
    let mut quotas: BTreeMap<Stratum, usize> = exact.iter().map(|(s, x)| (*s, x.floor() as usize)).collect();
    let short = n - quotas.values().sum::<usize>().min(n);
    let mut order: Vec<&(Stratum, f64)> = exact.iter().collect();
    order.sort_by(|a, b| (b.1 - b.1.floor()).total_cmp(&(a.1 - a.1.floor())).then(a.0.cmp(&b.0)));
    for (s, _) in order.into_iter().take(short) {
        *quotas.get_mut(s).expect("stratum present") += 1;
    }
    quotas
}

/// Splits `records` into `train_n` and `test_n` records.
///
/// Each split takes per-stratum quotas proportional to the whole set. TVL
/// groups (records sharing an id prefix) are visited in seeded random
/// order; a group joins the split it contributes to, and any of its
/// records beyond the stratum quotas are left out of both splits. The test
/// split is filled first.
pub fn split_dataset(
    records: &[DatasetRecord],
    train_n: usize,
    test_n: usize,
    seed: u64,
) -> Result<(Vec<DatasetRecord>, Vec<DatasetRecord>), HarnessError> {
    if train_n + test_n > records.len() {
        return Err(HarnessError::InsufficientData(format!(
            "requested {} records but only {} available",
            train_n + test_n,
            records.len()
        )));
    }
    let mut counts: BTreeMap<Stratum, usize> = BTreeMap::new();
    for r in records {
        *counts.entry(stratum(r)).or_default() += 1;
    }

    let mut group_index: HashMap<&str, usize> = HashMap::new();
    let mut groups: Vec<Vec<&DatasetRecord>> = Vec::new();
    for r in records {
        let g = *group_index.entry(r.tvl_id()).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[g].push(r);
    }
    for g in &mut groups {
        g.sort_by(|a, b| a.id.cmp(&b.id));
    }
    let mut order: Vec<usize> = (0..groups.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let mut used = vec![false; groups.len()];
    let mut fill = |n: usize, name: &str| -> Result<Vec<DatasetRecord>, HarnessError> {
        let mut quotas = stratum_quotas(&counts, n);
        let mut out = Vec::with_capacity(n);
        for &g in &order {
            if out.len() == n {
                break;
            }
            if used[g] {
                continue;
            }
            let mut took = false;
            for r in &groups[g] {
                let q = quotas.get_mut(&stratum(r)).expect("stratum counted");
                if *q > 0 {
                    *q -= 1;
                    out.push((*r).clone());
                    took = true;
                }
            }
            used[g] = took;
        }
        if out.len() < n {
            return Err(HarnessError::InsufficientData(format!(
                "{name} split reached {} of {n} records before running out of groups",
                out.len()
            )));
        }
        out.sort_by(|a, b| a.id.cmp(&b.id));
        Ok(out)
    };
    let test = fill(test_n, "test")?;
    let train = fill(train_n, "train")?;
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn rec(id: &str, vis: VisType, scenario: Scenario) -> DatasetRecord {
        DatasetRecord { id: id.into(), question: "q".into(), tvl: String::new(), vis_type: vis, scenario }
    }

    #[test]
    fn hundred_records_two_strata() {
        let records: Vec<DatasetRecord> = (0..100)
            .map(|i| rec(&format!("t{i:03}"), if i % 2 == 0 { VisType::Map } else { VisType::Bar }, Scenario::Normal))
            .collect();
        let (train, test) = split_dataset(&records, 70, 30, 1).unwrap();
        assert_eq!((train.len(), test.len()), (70, 30));
        let maps = |v: &[DatasetRecord]| v.iter().filter(|r| r.vis_type == VisType::Map).count();
        assert!((maps(&train) as i64 - 35).abs() <= 1);
        assert!((maps(&test) as i64 - 15).abs() <= 1);
        let ids: HashSet<&str> = train.iter().map(|r| r.id.as_str()).collect();
        assert!(test.iter().all(|r| !ids.contains(r.id.as_str())));
        assert_eq!(split_dataset(&records, 70, 30, 1).unwrap(), (train, test));
    }

    #[test]
    fn groups_stay_together() {
        let mut records = Vec::new();
        for g in 0..40 {
            for (j, s) in Scenario::ALL.iter().enumerate() {
                records.push(rec(&format!("tvl-{g:03}#{}", j + 1), VisType::Map, *s));
            }
        }
        let (train, test) = split_dataset(&records, 80, 30, 9).unwrap();
        assert_eq!((train.len(), test.len()), (80, 30));
        let train_groups: HashSet<&str> = train.iter().map(|r| r.tvl_id()).collect();
        assert!(test.iter().all(|r| !train_groups.contains(r.tvl_id())));
    }

    #[test]
    fn too_many_requested() {
        let records = vec![rec("a", VisType::Map, Scenario::Normal)];
        assert!(matches!(split_dataset(&records, 1, 1, 0), Err(HarnessError::InsufficientData(_))));
    }
}
