//! Shared sampling weights for groups of measures.
//!
//! One weighted sample per measure is wasteful when many measures live in a
//! relation. A group of measures can share one sample whose weights are the
//! element-wise geometric or arithmetic mean of the group; the estimation
//! error then degrades with how dissimilar the measures' trends are. This
//! module computes the means, the deviation statistics behind the error
//! bounds, the normalized-L1 correlation distance, and a greedy k-center
//! partition of measures into groups.

use std::fmt::Write as _;

use rayon::prelude::*;
use thiserror::Error;

use crate::kahan;
use crate::rng::unit_uniform;
use crate::table::MeasureVector;

#[derive(Debug, Error)]
pub enum GroupError {
    #[error("measure group is empty")]
    EmptyGroup,
    #[error("measure vectors have mismatched lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("pairwise deviation needs at least 2 measures")]
    NeedTwoMeasures,
    #[error("group count must satisfy 1 <= g <= k, got g={g}, k={k}")]
    InvalidGroupCount { g: usize, k: usize },
    #[error("values must be strictly positive")]
    NonPositiveValue,
    #[error("malformed grouping manifest: {0}")]
    MalformedManifest(String),
}

/// Which mean builds a group's shared weight vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeanKind {
    Geometric,
    Arithmetic,
}

impl std::fmt::Display for MeanKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            MeanKind::Geometric => "geo",
            MeanKind::Arithmetic => "arith",
        })
    }
}

impl std::str::FromStr for MeanKind {
    type Err = GroupError;

    fn from_str(s: &str) -> Result<Self, GroupError> {
        match s {
            "geo" | "geometric" => Ok(MeanKind::Geometric),
            "arith" | "arithmetic" => Ok(MeanKind::Arithmetic),
            _ => Err(GroupError::MalformedManifest(format!(
                "unknown mean kind `{s}`"
            ))),
        }
    }
}

fn check_aligned(measures: &[&MeasureVector]) -> Result<usize, GroupError> {
    let first = measures.first().ok_or(GroupError::EmptyGroup)?;
    let n = first.values.len();
    for m in measures {
        if m.values.len() != n {
            return Err(GroupError::LengthMismatch(n, m.values.len()));
        }
        if m.values.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(GroupError::NonPositiveValue);
        }
    }
    Ok(n)
}

/// Element-wise geometric or arithmetic mean of aligned measures.
pub fn mean_weights(
    measures: &[&MeasureVector],
    kind: MeanKind,
) -> Result<Vec<f64>, GroupError> {
    let n = check_aligned(measures)?;
    let k = measures.len();
    let mut out = Vec::with_capacity(n);
    match kind {
        MeanKind::Geometric => {
            for i in 0..n {
                let v = match k {
                    1 => measures[0].values[i],
                    2 => (measures[0].values[i] * measures[1].values[i]).sqrt(),
                    _ => {
                        let log_sum: f64 =
                            measures.iter().map(|m| m.values[i].ln()).sum();
                        (log_sum / k as f64).exp()
                    }
                };
                out.push(v);
            }
        }
        MeanKind::Arithmetic => {
            for i in 0..n {
                let sum: f64 = measures.iter().map(|m| m.values[i]).sum();
                out.push(sum / k as f64);
            }
        }
    }
    Ok(out)
}

/// Pairwise trend deviations and the group's range deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviationStats {
    /// `rho[p][q]` = (max_i m_i^p/m_i^q) / (min_i m_i^p/m_i^q); symmetric
    /// with unit diagonal.
    pub rho: Vec<Vec<f64>>,
    /// Maximum pairwise trend deviation.
    pub rho_max: f64,
    /// Max over rows of (largest measure / smallest measure) in that row.
    pub delta_range: f64,
}

/// Exact per-definition deviation statistics of a measure group.
pub fn deviation_stats(measures: &[&MeasureVector]) -> Result<DeviationStats, GroupError> {
    let n = check_aligned(measures)?;
    let k = measures.len();

    let mut rho = vec![vec![1.0; k]; k];
    let mut rho_max = 1.0f64;
    for p in 0..k {
        for q in (p + 1)..k {
            let mut hi = f64::NEG_INFINITY;
            let mut lo = f64::INFINITY;
            for i in 0..n {
                let r = measures[p].values[i] / measures[q].values[i];
                hi = hi.max(r);
                lo = lo.min(r);
            }
            let r = hi / lo;
            rho[p][q] = r;
            rho[q][p] = r;
            rho_max = rho_max.max(r);
        }
    }

    let mut delta_range = 1.0f64;
    for i in 0..n {
        let mut hi = f64::NEG_INFINITY;
        let mut lo = f64::INFINITY;
        for m in measures {
            hi = hi.max(m.values[i]);
            lo = lo.min(m.values[i]);
        }
        delta_range = delta_range.max(hi / lo);
    }

    Ok(DeviationStats {
        rho,
        rho_max,
        delta_range,
    })
}

/// L1 distance between `a` and `b` after normalizing each to sum 1.
///
/// For positive vectors this is bounded by `theta - 1`, where `theta` is
/// their consistency scale.
pub fn l1_distance(a: &[f64], b: &[f64]) -> Result<f64, GroupError> {
    if a.len() != b.len() {
        return Err(GroupError::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(GroupError::EmptyGroup);
    }
    if a.iter().chain(b).any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(GroupError::NonPositiveValue);
    }
    let sa = kahan::sum(a.iter().copied());
    let sb = kahan::sum(b.iter().copied());
    Ok(kahan::sum(
        a.iter().zip(b).map(|(&x, &y)| (x / sa - y / sb).abs()),
    ))
}

/// One group in a measure grouping.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasureGroup {
    pub name: String,
    pub members: Vec<String>,
    pub center: String,
    pub kind: MeanKind,
    pub weights: Vec<f64>,
}

/// A partition of measures into groups, each with a shared weight vector.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasureGrouping {
    pub groups: Vec<MeasureGroup>,
    /// Max distance from any measure to its group's center.
    pub radius: f64,
}

impl MeasureGrouping {
    /// Serializes to a text manifest, one line per group.
    pub fn to_manifest(&self) -> String {
        let mut out = String::new();
        for g in &self.groups {
            writeln!(
                out,
                "name={} center={} kind={} members={}",
                g.name,
                g.center,
                g.kind,
                g.members.join(",")
            )
            .unwrap();
        }
        out
    }

    /// Parses a manifest; weight vectors are rebuilt from the given measures.
    pub fn from_manifest(
        text: &str,
        measures: &[MeasureVector],
    ) -> Result<MeasureGrouping, GroupError> {
        let mut groups = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut name = None;
            let mut center = None;
            let mut kind = None;
            let mut members: Option<Vec<String>> = None;
            for part in line.split_whitespace() {
                let (key, value) = part.split_once('=').ok_or_else(|| {
                    GroupError::MalformedManifest(format!("bad field `{part}`"))
                })?;
                match key {
                    "name" => name = Some(value.to_string()),
                    "center" => center = Some(value.to_string()),
                    "kind" => kind = Some(value.parse::<MeanKind>()?),
                    "members" => {
                        members = Some(value.split(',').map(str::to_string).collect())
                    }
                    _ => {
                        return Err(GroupError::MalformedManifest(format!(
                            "unknown field `{key}`"
                        )))
                    }
                }
            }
            let (name, center, kind, members) = match (name, center, kind, members) {
                (Some(n), Some(c), Some(k), Some(m)) => (n, c, k, m),
                _ => {
                    return Err(GroupError::MalformedManifest(
                        "missing field in group line".to_string(),
                    ))
                }
            };
            let member_refs: Vec<&MeasureVector> = members
                .iter()
                .map(|m| {
                    measures.iter().find(|mv| &mv.name == m).ok_or_else(|| {
                        GroupError::MalformedManifest(format!("unknown measure `{m}`"))
                    })
                })
                .collect::<Result<_, _>>()?;
            let weights = mean_weights(&member_refs, kind)?;
            groups.push(MeasureGroup {
                name,
                members,
                center,
                kind,
                weights,
            });
        }
        if groups.is_empty() {
            return Err(GroupError::MalformedManifest("no groups".to_string()));
        }
        Ok(MeasureGrouping {
            groups,
            radius: f64::NAN,
        })
    }
}

/// Row subset used when estimating pairwise distances.
#[derive(Debug, Clone, Copy)]
pub enum ProbeRows {
    /// Use every row.
    All,
    /// Uniform subsample of at most `max` rows, keyed on `seed`.
    Subsample { max: usize, seed: u64 },
}

impl Default for ProbeRows {
    fn default() -> Self {
        // Distances can be estimated from a sample of rows; 10^4 keeps the
        // pairwise matrix cheap on large tables.
        ProbeRows::Subsample {
            max: 10_000,
            seed: 0x9E37,
        }
    }
}

fn probe_indices(n: usize, probe: ProbeRows) -> Vec<usize> {
    match probe {
        ProbeRows::All => (0..n).collect(),
        ProbeRows::Subsample { max, seed } => {
            if n <= max {
                (0..n).collect()
            } else {
                // Keep each row with probability max/n, keyed per row.
                let p = max as f64 / n as f64;
                let picked: Vec<usize> = (0..n)
                    .filter(|&i| unit_uniform(seed, i as u64) <= p)
                    .collect();
                if picked.is_empty() {
                    vec![0]
                } else {
                    picked
                }
            }
        }
    }
}

/// Greedy farthest-point k-center over normalized-L1 distance.
///
/// The first center is the lexicographically smallest measure name, so the
/// grouping is reproducible; each next center is the measure farthest from
/// its nearest existing center; finally every measure joins its nearest
/// center and each group gets a `kind`-mean weight vector.
pub fn kcenter_group(
    measures: &[MeasureVector],
    g: usize,
    kind: MeanKind,
    probe: ProbeRows,
) -> Result<MeasureGrouping, GroupError> {
    let k = measures.len();
    if k == 0 {
        return Err(GroupError::EmptyGroup);
    }
    if g < 1 || g > k {
        return Err(GroupError::InvalidGroupCount { g, k });
    }
    let refs: Vec<&MeasureVector> = measures.iter().collect();
    let n = check_aligned(&refs)?;
    let rows = probe_indices(n, probe);

    let probed: Vec<Vec<f64>> = measures
        .iter()
        .map(|m| rows.iter().map(|&i| m.values[i]).collect())
        .collect();

    // Pairwise distances, computed in parallel over pairs.
    let pairs: Vec<(usize, usize)> = (0..k)
        .flat_map(|p| ((p + 1)..k).map(move |q| (p, q)))
        .collect();
    let dists: Vec<((usize, usize), f64)> = pairs
        .par_iter()
        .map(|&(p, q)| ((p, q), l1_distance(&probed[p], &probed[q]).unwrap()))
        .collect();
    let mut dist = vec![vec![0.0; k]; k];
    for ((p, q), d) in dists {
        dist[p][q] = d;
        dist[q][p] = d;
    }

    let first = (0..k)
        .min_by(|&a, &b| measures[a].name.cmp(&measures[b].name))
        .unwrap();
    let mut centers = vec![first];
    let mut nearest: Vec<f64> = (0..k).map(|i| dist[first][i]).collect();
    while centers.len() < g {
        // Farthest measure from the current centers; deterministic
        // tie-break on name.
        let next = (0..k)
            .filter(|i| !centers.contains(i))
            .max_by(|&a, &b| {
                nearest[a]
                    .partial_cmp(&nearest[b])
                    .unwrap()
                    .then(measures[b].name.cmp(&measures[a].name))
            })
            .unwrap();
        centers.push(next);
        for i in 0..k {
            nearest[i] = nearest[i].min(dist[next][i]);
        }
    }

    let mut assignment = vec![0usize; k];
    for i in 0..k {
        assignment[i] = *centers
            .iter()
            .min_by(|&&c1, &&c2| dist[c1][i].partial_cmp(&dist[c2][i]).unwrap())
            .unwrap();
    }
    let radius = (0..k)
        .map(|i| dist[assignment[i]][i])
        .fold(0.0f64, f64::max);

    let mut groups = Vec::with_capacity(centers.len());
    for (gi, &c) in centers.iter().enumerate() {
        let member_idx: Vec<usize> = (0..k).filter(|&i| assignment[i] == c).collect();
        let member_refs: Vec<&MeasureVector> =
            member_idx.iter().map(|&i| &measures[i]).collect();
        let weights = mean_weights(&member_refs, kind)?;
        groups.push(MeasureGroup {
            name: format!("g{gi}"),
            members: member_idx.iter().map(|&i| measures[i].name.clone()).collect(),
            center: measures[c].name.clone(),
            kind,
            weights,
        });
    }

    Ok(MeasureGrouping { groups, radius })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mv(name: &str, values: &[f64]) -> MeasureVector {
        MeasureVector::new(name, values.to_vec()).unwrap()
    }

    #[test]
    fn worked_example_means_are_exact() {
        let m1 = mv("m1", &[100.0, 100.0, 200.0, 400.0]);
        let m2 = mv("m2", &[1.0, 1.0, 2.0, 1.0]);
        assert_eq!(
            mean_weights(&[&m1, &m2], MeanKind::Geometric).unwrap(),
            vec![10.0, 10.0, 20.0, 20.0]
        );
        assert_eq!(
            mean_weights(&[&m1, &m2], MeanKind::Arithmetic).unwrap(),
            vec![50.5, 50.5, 101.0, 200.5]
        );
    }

    #[test]
    fn mean_of_one_is_the_measure() {
        let m = mv("m", &[3.0, 7.0]);
        assert_eq!(mean_weights(&[&m], MeanKind::Geometric).unwrap(), m.values);
        assert_eq!(mean_weights(&[&m], MeanKind::Arithmetic).unwrap(), m.values);
    }

    /// AM-GM: the geometric mean never exceeds the arithmetic mean.
    #[test]
    fn geometric_below_arithmetic_everywhere() {
        let m1 = mv("a", &[0.5, 10.0, 3.25, 900.0]);
        let m2 = mv("b", &[2.0, 1.0, 3.25, 1.0]);
        let m3 = mv("c", &[7.0, 4.0, 3.25, 30.0]);
        let geo = mean_weights(&[&m1, &m2, &m3], MeanKind::Geometric).unwrap();
        let ari = mean_weights(&[&m1, &m2, &m3], MeanKind::Arithmetic).unwrap();
        for (g, a) in geo.iter().zip(&ari) {
            assert!(g <= a);
        }
    }

    #[test]
    fn deviation_stats_worked_example() {
        let m1 = mv("m1", &[100.0, 100.0, 200.0, 400.0]);
        let m2 = mv("m2", &[1.0, 1.0, 2.0, 1.0]);
        let stats = deviation_stats(&[&m1, &m2]).unwrap();
        // Row ratios are [100, 100, 100, 400]: rho = 400/100 = 4.
        assert_eq!(stats.rho[0][1], 4.0);
        assert_eq!(stats.rho_max, 4.0);
        assert_eq!(stats.delta_range, 400.0);
    }

    #[test]
    fn proportional_measures_have_unit_rho() {
        let m1 = mv("m1", &[2.0, 4.0, 8.0]);
        let m2 = mv("m2", &[1.0, 2.0, 4.0]);
        let stats = deviation_stats(&[&m1, &m2]).unwrap();
        assert_eq!(stats.rho[0][1], 1.0);
    }

    #[test]
    fn identical_measures_have_unit_delta() {
        let m1 = mv("m1", &[5.0, 6.0]);
        let m2 = mv("m2", &[5.0, 6.0]);
        assert_eq!(deviation_stats(&[&m1, &m2]).unwrap().delta_range, 1.0);
    }

    #[test]
    fn l1_zero_for_scaled_copies() {
        let m = [3.0, 1.0, 4.0];
        let w: Vec<f64> = m.iter().map(|v| v * 42.0).collect();
        assert!(l1_distance(&m, &w).unwrap().abs() < 1e-15);
    }

    #[test]
    fn l1_worked_example_is_one_ninth() {
        let m = [100.0, 100.0, 200.0, 400.0];
        let w = [10.0, 10.0, 20.0, 50.0];
        let d = l1_distance(&m, &w).unwrap();
        assert!((d - 1.0 / 9.0).abs() < 1e-12);
        // theta = 10/8 = 1.25; the bound theta - 1 = 0.25 holds.
        assert!(d <= 0.25);
    }

    #[test]
    fn l1_bound_and_metric_properties_hold_on_random_vectors() {
        use crate::rng::unit_uniform;
        for case in 0..1000u64 {
            let n = 3 + (case % 10) as usize;
            let gen = |stream: u64| -> Vec<f64> {
                (0..n)
                    .map(|i| 0.1 + 10.0 * unit_uniform(case * 7 + stream, i as u64))
                    .collect()
            };
            let m = gen(1);
            let w = gen(2);
            let v = gen(3);
            let dmw = l1_distance(&m, &w).unwrap();
            let dwv = l1_distance(&w, &v).unwrap();
            let dmv = l1_distance(&m, &v).unwrap();
            // Bound via consistency scale.
            let ratios: Vec<f64> = m.iter().zip(&w).map(|(a, b)| a / b).collect();
            let theta = ratios.iter().cloned().fold(f64::MIN, f64::max)
                / ratios.iter().cloned().fold(f64::MAX, f64::min);
            assert!(dmw <= theta - 1.0 + 1e-12, "case {case}");
            // Metric on normalized vectors.
            assert!((dmw - l1_distance(&w, &m).unwrap()).abs() < 1e-12);
            assert!(dmv <= dmw + dwv + 1e-12);
        }
    }

    #[test]
    fn singleton_groups_when_g_equals_k() {
        let ms = vec![
            mv("a", &[1.0, 2.0]),
            mv("b", &[9.0, 1.0]),
            mv("c", &[2.0, 2.0]),
        ];
        let grouping = kcenter_group(&ms, 3, MeanKind::Geometric, ProbeRows::All).unwrap();
        assert_eq!(grouping.groups.len(), 3);
        assert_eq!(grouping.radius, 0.0);
        for g in &grouping.groups {
            assert_eq!(g.members.len(), 1);
            assert_eq!(g.members[0], g.center);
        }
    }

    #[test]
    fn duplicated_pairs_cluster_together() {
        // Two duplicated pairs: {A, A2} and {B, B2}; g=2 splits them with
        // radius 0.
        let ms = vec![
            mv("A", &[1.0, 1.0, 10.0]),
            mv("A2", &[2.0, 2.0, 20.0]),
            mv("B", &[10.0, 1.0, 1.0]),
            mv("B2", &[30.0, 3.0, 3.0]),
        ];
        let grouping = kcenter_group(&ms, 2, MeanKind::Arithmetic, ProbeRows::All).unwrap();
        assert_eq!(grouping.radius, 0.0);
        let mut groups: Vec<Vec<String>> = grouping
            .groups
            .iter()
            .map(|g| {
                let mut m = g.members.clone();
                m.sort();
                m
            })
            .collect();
        groups.sort();
        assert_eq!(groups, vec![vec!["A", "A2"], vec!["B", "B2"]]);
    }

    /// Exhaustive oracle: optimal 2-center radius found by trying every
    /// center pair with nearest-center assignment; greedy must be within 2x.
    #[test]
    fn greedy_is_2_approximation_on_random_instances() {
        use crate::rng::unit_uniform;
        for case in 0..20u64 {
            let k = 5;
            let n = 12;
            let ms: Vec<MeasureVector> = (0..k)
                .map(|j| {
                    mv(
                        &format!("m{j}"),
                        &(0..n)
                            .map(|i| 0.2 + 5.0 * unit_uniform(case * 31 + j as u64, i as u64))
                            .collect::<Vec<f64>>(),
                    )
                })
                .collect();
            let grouping = kcenter_group(&ms, 2, MeanKind::Geometric, ProbeRows::All).unwrap();

            let mut dist = vec![vec![0.0f64; k]; k];
            for p in 0..k {
                for q in 0..k {
                    dist[p][q] = l1_distance(&ms[p].values, &ms[q].values).unwrap();
                }
            }
            let mut best = f64::INFINITY;
            for c1 in 0..k {
                for c2 in (c1 + 1)..k {
                    let radius = (0..k)
                        .map(|i| dist[c1][i].min(dist[c2][i]))
                        .fold(0.0f64, f64::max);
                    best = best.min(radius);
                }
            }
            assert!(
                grouping.radius <= 2.0 * best + 1e-12,
                "case {case}: greedy {} vs optimal {}",
                grouping.radius,
                best
            );
        }
    }

    #[test]
    fn invalid_group_count_is_rejected() {
        let ms = vec![mv("a", &[1.0])];
        assert!(matches!(
            kcenter_group(&ms, 0, MeanKind::Geometric, ProbeRows::All),
            Err(GroupError::InvalidGroupCount { .. })
        ));
        assert!(matches!(
            kcenter_group(&ms, 2, MeanKind::Geometric, ProbeRows::All),
            Err(GroupError::InvalidGroupCount { .. })
        ));
    }

    #[test]
    fn manifest_roundtrips() {
        let ms = vec![
            mv("a", &[1.0, 2.0]),
            mv("b", &[2.0, 4.0]),
            mv("c", &[9.0, 1.0]),
        ];
        let grouping = kcenter_group(&ms, 2, MeanKind::Geometric, ProbeRows::All).unwrap();
        let text = grouping.to_manifest();
        let parsed = MeasureGrouping::from_manifest(&text, &ms).unwrap();
        assert_eq!(parsed.groups.len(), grouping.groups.len());
        for (a, b) in parsed.groups.iter().zip(&grouping.groups) {
            assert_eq!(a.name, b.name);
            assert_eq!(a.members, b.members);
            assert_eq!(a.center, b.center);
            assert_eq!(a.kind, b.kind);
            assert_eq!(a.weights, b.weights);
        }
    }
}
