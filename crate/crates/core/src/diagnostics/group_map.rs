use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codec::write_file;
use crate::conformal::{Partitioner, SampleView};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::group::CyclicGroup;
use crate::model::{Canonicalizer, GroupDistribution};

/// How each sample's group element is chosen when building a map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Assignment {
    Argmax,
    /// One seeded stream consumed in sample order.
    Sample {
        seed: u64,
    },
}

impl Default for Assignment {
    fn default() -> Self {
        Assignment::Sample { seed: 0 }
    }
}

/// Per-partition empirical frequencies of assigned group elements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMap {
    group: CyclicGroup,
    counts: Vec<Vec<usize>>,
    conf_threshold: f64,
}

impl GroupMap {
    pub fn group(&self) -> CyclicGroup {
        self.group
    }

    pub fn num_partitions(&self) -> usize {
        self.counts.len()
    }

    pub fn conf_threshold(&self) -> f64 {
        self.conf_threshold
    }

    pub fn counts(&self, partition: usize) -> &[usize] {
        &self.counts[partition]
    }

    pub fn retained(&self, partition: usize) -> usize {
        self.counts[partition].iter().sum()
    }

    /// Row frequencies, `None` when no sample of the partition was retained.
    pub fn frequencies(&self, partition: usize) -> Option<Vec<f64>> {
        let n = self.retained(partition);
        (n > 0).then(|| {
            self.counts[partition]
                .iter()
                .map(|&c| c as f64 / n as f64)
                .collect()
        })
    }

    /// Most frequent element of a defined row, lowest index on ties.
    pub fn row_argmax(&self, partition: usize) -> Option<usize> {
        self.frequencies(partition)
            .map(|f| crate::model::argmax(&f))
    }
}

/// Count assigned elements per partition, dropping samples whose assigned
/// element has posterior mass below `conf_threshold`.
pub fn group_map_from_posteriors(
    posteriors: &[GroupDistribution],
    partitions: &[usize],
    num_partitions: usize,
    assignment: Assignment,
    conf_threshold: f64,
) -> Result<GroupMap> {
    if posteriors.len() != partitions.len() {
        return Err(Error::invalid(format!(
            "{} posteriors but {} partition ids",
            posteriors.len(),
            partitions.len()
        )));
    }
    if !(0.0..=1.0).contains(&conf_threshold) {
        return Err(Error::invalid(format!(
            "confidence threshold must lie in [0, 1], got {conf_threshold}"
        )));
    }
    let group = match posteriors.first() {
        Some(p) => p.group(),
        None => return Err(Error::invalid("no posteriors to map")),
    };
    let mut counts = vec![vec![0usize; group.len()]; num_partitions];
    let mut rng = match assignment {
        Assignment::Sample { seed } => Some(ChaCha8Rng::seed_from_u64(seed)),
        Assignment::Argmax => None,
    };
    for (post, &k) in posteriors.iter().zip(partitions) {
        if post.group() != group {
            return Err(Error::invalid("posteriors over different groups"));
        }
        let g = match &mut rng {
            Some(rng) => post.sample(rng),
            None => post.argmax(),
        };
        if post.prob(g) < conf_threshold {
            continue;
        }
        let row = counts.get_mut(k).ok_or_else(|| {
            Error::invalid(format!("partition {k} out of range 0..{num_partitions}"))
        })?;
        row[g.index() as usize] += 1;
    }
    Ok(GroupMap {
        group,
        counts,
        conf_threshold,
    })
}

fn partition_ids(
    d: &Dataset,
    part: &Partitioner,
    posteriors: Option<&[GroupDistribution]>,
) -> Result<Vec<usize>> {
    d.iter()
        .enumerate()
        .map(|(i, s)| {
            part.assign(SampleView {
                label: Some(s.label),
                partition: s.partition,
                posterior: posteriors.map(|p| &p[i]),
            })
        })
        .collect()
}

fn partition_count(ids: &[usize], part: &Partitioner, d: &Dataset, group: CyclicGroup) -> usize {
    let seen = ids.iter().max().map_or(0, |m| m + 1);
    let natural = match part {
        Partitioner::ByLabel => d.num_classes(),
        Partitioner::ByPartitionField => d.num_partitions(),
        Partitioner::ByGroupArgmax => group.len(),
        Partitioner::ByEntropyBins { edges } => edges.len() + 1,
    };
    seen.max(natural)
}

/// Posteriors of every sample, computed in parallel, in dataset order.
pub fn posteriors(cn: &Canonicalizer, d: &Dataset) -> Result<Vec<GroupDistribution>> {
    d.samples()
        .par_iter()
        .map(|s| cn.group_posterior(&s.image))
        .collect()
}

/// Group map recovered by the canonicalizer.
pub fn build_group_map(
    d: &Dataset,
    cn: &Canonicalizer,
    part: &Partitioner,
    assignment: Assignment,
    conf_threshold: f64,
) -> Result<GroupMap> {
    let post = posteriors(cn, d)?;
    let ids = partition_ids(d, part, Some(&post))?;
    let k = partition_count(&ids, part, d, cn.group());
    group_map_from_posteriors(&post, &ids, k, assignment, conf_threshold)
}

/// Group map of the stored ground-truth poses.
pub fn true_group_map(d: &Dataset, group: CyclicGroup, part: &Partitioner) -> Result<GroupMap> {
    let post = d
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let g = s
                .true_pose
                .ok_or_else(|| Error::invalid(format!("sample {i} has no stored pose")))?;
            if g.group() != group {
                return Err(Error::invalid(format!(
                    "sample {i} pose belongs to {}, not {group}",
                    g.group()
                )));
            }
            Ok(GroupDistribution::point_mass(g))
        })
        .collect::<Result<Vec<_>>>()?;
    let ids = partition_ids(d, part, Some(&post))?;
    let k = partition_count(&ids, part, d, group);
    group_map_from_posteriors(&post, &ids, k, Assignment::Argmax, 0.0)
}

const CELL: usize = 16;

/// Binary PGM heatmap, one `CELL`-pixel square per (partition, element);
/// brighter means more frequent. Undefined rows are hatched.
pub fn render_pgm(map: &GroupMap) -> Vec<u8> {
    let (w, h) = (map.group.len() * CELL, map.num_partitions() * CELL);
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    for row in 0..h {
        let k = row / CELL;
        let freq = map.frequencies(k);
        for col in 0..w {
            let px = match &freq {
                Some(f) => (f[col / CELL] * 255.0).round() as u8,
                None if (row + col) % 6 < 2 => 255,
                None => 64,
            };
            out.push(px);
        }
    }
    out
}

pub fn render_csv(map: &GroupMap) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::invalid(format!("csv encoding failed: {e}"));
    w.write_record(["partition", "group_index", "frequency", "count"])
        .map_err(csv_err)?;
    for k in 0..map.num_partitions() {
        let freq = map.frequencies(k);
        for g in 0..map.group.len() {
            let f = freq.as_ref().map_or("NA".to_string(), |f| f[g].to_string());
            w.write_record([
                k.to_string(),
                g.to_string(),
                f,
                map.counts[k][g].to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    w.into_inner()
        .map_err(|e| Error::invalid(format!("csv encoding failed: {e}")))
}

/// Write the heatmap to `path` and its CSV twin next to it.
pub fn emit_group_map_plot(map: &GroupMap, path: &Path) -> Result<()> {
    write_file(path, &render_pgm(map))?;
    write_file(&path.with_extension("csv"), &render_csv(map)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{apply_shift, generate_glyphs, ShiftSpec};
    use crate::model::{Architecture, Network};
    use proptest::prelude::*;

    fn dist(p: Vec<f64>) -> GroupDistribution {
        GroupDistribution::new(CyclicGroup::C4, p).unwrap()
    }

    fn hand_posteriors() -> (Vec<GroupDistribution>, Vec<usize>) {
        let post = vec![
            dist(vec![0.7, 0.1, 0.1, 0.1]),
            dist(vec![0.1, 0.7, 0.1, 0.1]),
            dist(vec![0.4, 0.3, 0.3, 0.0]),
            dist(vec![0.0, 0.0, 0.2, 0.8]),
            dist(vec![0.0, 0.0, 0.9, 0.1]),
            dist(vec![0.25, 0.25, 0.25, 0.25]),
        ];
        (post, vec![0, 0, 0, 1, 1, 1])
    }

    #[test]
    fn hand_counts() {
        let (post, parts) = hand_posteriors();
        let m = group_map_from_posteriors(&post, &parts, 3, Assignment::Argmax, 0.0).unwrap();
        assert_eq!(m.counts(0), &[2, 1, 0, 0]);
        assert_eq!(m.counts(1), &[1, 0, 1, 1]);
        let f0 = m.frequencies(0).unwrap();
        assert!((f0[0] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(m.frequencies(2), None);
        assert_eq!(m.row_argmax(1), Some(0));

        let filtered =
            group_map_from_posteriors(&post, &parts, 3, Assignment::Argmax, 0.5).unwrap();
        assert_eq!(filtered.counts(0), &[1, 1, 0, 0]);
        assert_eq!(filtered.counts(1), &[0, 0, 1, 1]);
    }

    #[test]
    fn dirac_shift_true_map_is_one_hot() {
        let d = generate_glyphs(1, 40, 4, 16).unwrap();
        let shifted = apply_shift(
            &d,
            &ShiftSpec::Dirac {
                elements: vec![0, 1, 2, 3],
            },
            CyclicGroup::C4,
            0,
        )
        .unwrap();
        let truth = true_group_map(&shifted, CyclicGroup::C4, &Partitioner::ByLabel).unwrap();
        for k in 0..4 {
            let mut expect = vec![0.0; 4];
            expect[k] = 1.0;
            assert_eq!(truth.frequencies(k).unwrap(), expect);
        }
        assert!(true_group_map(&d, CyclicGroup::C4, &Partitioner::ByLabel).is_err());
    }

    #[test]
    fn maps_from_a_canonicalizer_are_deterministic() {
        let d = generate_glyphs(2, 30, 3, 16).unwrap();
        let net = Network::init(Architecture::SoftmaxLinear, 256, 1, 3).unwrap();
        let cn = Canonicalizer::new(net, CyclicGroup::C4, 1.0, 16).unwrap();
        let a = build_group_map(&d, &cn, &Partitioner::ByLabel, Assignment::Argmax, 0.0).unwrap();
        let b = build_group_map(&d, &cn, &Partitioner::ByLabel, Assignment::Argmax, 0.0).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.num_partitions(), 3);
        let s = Assignment::Sample { seed: 5 };
        assert_eq!(
            build_group_map(&d, &cn, &Partitioner::ByLabel, s, 0.0).unwrap(),
            build_group_map(&d, &cn, &Partitioner::ByLabel, s, 0.0).unwrap()
        );
    }

    #[test]
    fn sample_mode_rows_concentrate() {
        let post: Vec<_> = (0..4000)
            .map(|i| {
                dist(if i % 2 == 0 {
                    vec![0.5, 0.3, 0.2, 0.0]
                } else {
                    vec![0.1, 0.2, 0.3, 0.4]
                })
            })
            .collect();
        let parts: Vec<usize> = (0..4000).map(|i| i % 2).collect();
        let a = group_map_from_posteriors(&post, &parts, 2, Assignment::Sample { seed: 1 }, 0.0)
            .unwrap();
        let b = group_map_from_posteriors(&post, &parts, 2, Assignment::Sample { seed: 2 }, 0.0)
            .unwrap();
        for k in 0..2 {
            let (fa, fb) = (a.frequencies(k).unwrap(), b.frequencies(k).unwrap());
            let tv: f64 = 0.5 * fa.iter().zip(&fb).map(|(x, y)| (x - y).abs()).sum::<f64>();
            let n = a.retained(k).min(b.retained(k)) as f64;
            assert!(
                tv <= 3.0 * ((2.0 * 4.0f64).ln() / n).sqrt(),
                "row {k}: tv {tv}"
            );
        }
    }

    #[test]
    fn plot_and_csv_contract() {
        let m = GroupMap {
            group: CyclicGroup::C4,
            counts: vec![vec![1, 3, 0, 0], vec![0; 4]],
            conf_threshold: 0.0,
        };
        let pgm = render_pgm(&m);
        let header = b"P5\n64 32\n255\n";
        assert_eq!(&pgm[..header.len()], header);
        assert_eq!(pgm.len(), header.len() + 64 * 32);
        assert_eq!(pgm[header.len() + CELL], 191);
        let csv = String::from_utf8(render_csv(&m).unwrap()).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 9);
        assert_eq!(lines[0], "partition,group_index,frequency,count");
        assert_eq!(lines[2], "0,1,0.75,3");
        assert_eq!(lines[5], "1,0,NA,0");

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("maps/m.pgm");
        emit_group_map_plot(&m, &path).unwrap();
        emit_group_map_plot(&m, &dir.path().join("again.pgm")).unwrap();
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(dir.path().join("again.pgm")).unwrap()
        );
        assert!(dir.path().join("maps/m.csv").exists());
    }

    proptest! {
        #[test]
        fn raising_the_threshold_never_adds_samples(t1 in 0.0f64..1.0, t2 in 0.0f64..1.0, seed in any::<u64>()) {
            let (post, parts) = hand_posteriors();
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            let a = Assignment::Sample { seed };
            let ml = group_map_from_posteriors(&post, &parts, 2, a, lo).unwrap();
            let mh = group_map_from_posteriors(&post, &parts, 2, a, hi).unwrap();
            for k in 0..2 {
                prop_assert!(mh.retained(k) <= ml.retained(k));
            }
        }
    }
}
