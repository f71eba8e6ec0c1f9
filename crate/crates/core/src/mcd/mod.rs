//! Model-consistency defense: per-period 2-D traces of every client's uploads,
//! centroid/footprint metrics, a baseline anchored on a server-trained shadow
//! model, and median-relative abnormality flagging. Also hosts the simpler
//! robust-statistics baselines it is compared against.

mod baselines;
mod synth;
mod trace;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stealth::{centroid, distance, Point};

pub use baselines::{angle_deviation_defense, cosine_pairs_defense, kmeans2_defense, pca_outlier_defense, BaselineFlags};
pub use synth::{synthetic_population, SyntheticPopulation, SyntheticSpec};
pub use trace::{reduce_period, ModelTraceStore, PeriodReduction, TraceKey};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricPair {
    pub centroid: Point,
    pub footprint: f64,
    pub sample_count: usize,
}

/// Centroid and mean distance to it over the non-NULL entries; `None` for an
/// all-NULL trace.
pub fn metric_pair(trace: &[Option<Point>]) -> Option<MetricPair> {
    let pts: Vec<Point> = trace.iter().flatten().copied().collect();
    let c = centroid(&pts)?;
    let footprint = pts.iter().map(|&p| distance(p, c)).sum::<f64>() / pts.len() as f64;
    Some(MetricPair {
        centroid: c,
        footprint,
        sample_count: pts.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McdConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub omega1: f64,
    pub omega2: f64,
    pub delta: f64,
    /// Rounds per defense period.
    pub period: usize,
}

impl Default for McdConfig {
    fn default() -> Self {
        Self {
            lambda1: 1.0,
            lambda2: 2.0,
            omega1: 4.0,
            omega2: 2.0,
            delta: 2.0,
            period: 80,
        }
    }
}

impl McdConfig {
    pub fn validate(&self) -> Result<()> {
        for (key, v) in [
            ("mcd.lambda1", self.lambda1),
            ("mcd.lambda2", self.lambda2),
            ("mcd.omega1", self.omega1),
            ("mcd.omega2", self.omega2),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::config(key, format!("{v} must be positive")));
            }
        }
        if !(self.delta > 1.0 && self.delta < 3.0) {
            return Err(Error::config("mcd.delta", format!("{} outside (1, 3)", self.delta)));
        }
        if self.period == 0 {
            return Err(Error::config("mcd.period", "must be at least 1"));
        }
        Ok(())
    }
}

/// Ids whose pair lies in the `(omega1, omega2)` neighborhood of the first
/// baseline (strict inequalities). The first baseline itself is implicit.
pub fn select_baseline_set(
    pairs: &[(usize, MetricPair)],
    first: &MetricPair,
    omega1: f64,
    omega2: f64,
) -> Result<Vec<usize>> {
    let d_hat = first.footprint;
    if !(d_hat > 0.0) {
        return Err(Error::config("first_baseline", "footprint is zero, the neighborhood is degenerate"));
    }
    Ok(pairs
        .iter()
        .filter(|(_, p)| {
            distance(p.centroid, first.centroid) / d_hat < omega1 && (p.footprint - d_hat).abs() / d_hat < omega2
        })
        .map(|(id, _)| *id)
        .collect())
}

/// Componentwise mean centroid and mean footprint.
pub fn baseline_values(set: &[MetricPair]) -> Result<(Point, f64)> {
    if set.is_empty() {
        return Err(Error::precondition("baseline set is empty"));
    }
    let n = set.len() as f64;
    let mut theta = [0.0, 0.0];
    let mut d = 0.0;
    for p in set {
        theta[0] += p.centroid[0];
        theta[1] += p.centroid[1];
        d += p.footprint;
    }
    Ok(([theta[0] / n, theta[1] / n], d / n))
}

/// `h = l1 * |theta - theta_base| / d_base + l2 * |d_base - d|`.
pub fn abnormality(pair: &MetricPair, theta_base: Point, d_base: f64, lambda1: f64, lambda2: f64) -> f64 {
    lambda1 * distance(pair.centroid, theta_base) / d_base + lambda2 * (d_base - pair.footprint).abs()
}

pub(crate) fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientScore {
    pub client: usize,
    pub h: f64,
    pub centroid: Point,
    pub footprint: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub period: usize,
    pub scores: Vec<ClientScore>,
    /// Trusted clients with no upload this period; never flagged.
    pub skipped: Vec<usize>,
    pub baseline_members: Vec<usize>,
    pub theta_base: Point,
    pub d_base: f64,
    /// True when no client joined the first baseline in the baseline set.
    pub baseline_fallback: bool,
    pub median: f64,
    pub threshold: f64,
    pub flagged: Vec<usize>,
    pub surviving: Vec<usize>,
}

/// Score every trusted client against the baseline and flag `h > delta * median(h)`.
/// `pairs` holds the trusted clients' metric pairs (`None` for all-NULL traces).
pub fn detect(
    period: usize,
    pairs: &[(usize, Option<MetricPair>)],
    cfg: &McdConfig,
    first: &MetricPair,
) -> Result<DetectionReport> {
    cfg.validate()?;
    let usable: Vec<(usize, MetricPair)> = pairs.iter().filter_map(|(id, p)| p.map(|p| (*id, p))).collect();
    let skipped: Vec<usize> = pairs.iter().filter(|(_, p)| p.is_none()).map(|(id, _)| *id).collect();
    if usable.len() < 3 {
        return Err(Error::precondition(format!(
            "period {period}: {} clients with traces, detection needs 3",
            usable.len()
        )));
    }
    let members = select_baseline_set(&usable, first, cfg.omega1, cfg.omega2)?;
    let mut set = vec![*first];
    set.extend(usable.iter().filter(|(id, _)| members.contains(id)).map(|(_, p)| *p));
    let (theta_base, d_base) = baseline_values(&set)?;
    let scores: Vec<ClientScore> = usable
        .iter()
        .map(|(id, p)| ClientScore {
            client: *id,
            h: abnormality(p, theta_base, d_base, cfg.lambda1, cfg.lambda2),
            centroid: p.centroid,
            footprint: p.footprint,
            samples: p.sample_count,
        })
        .collect();
    let med = median(&scores.iter().map(|s| s.h).collect::<Vec<_>>());
    let threshold = cfg.delta * med;
    let flagged: Vec<usize> = scores.iter().filter(|s| s.h > threshold).map(|s| s.client).collect();
    let surviving = pairs.iter().map(|(id, _)| *id).filter(|id| !flagged.contains(id)).collect();
    Ok(DetectionReport {
        period,
        scores,
        skipped,
        baseline_fallback: members.is_empty(),
        baseline_members: members,
        theta_base,
        d_base,
        median: med,
        threshold,
        flagged,
        surviving,
    })
}

/// Run `detect` on one period of a trace store, using its server trace as the
/// first baseline and every client present in the period as trusted.
pub fn detect_period(store: &ModelTraceStore, period: usize, cfg: &McdConfig, trusted: Option<&[usize]>) -> Result<DetectionReport> {
    let first = store
        .trace(period, TraceKey::Server)
        .and_then(|t| metric_pair(&t))
        .ok_or_else(|| Error::precondition(format!("period {period} has no server baseline trace")))?;
    let ids: Vec<usize> = match trusted {
        Some(t) => t.to_vec(),
        None => store.clients(period),
    };
    let pairs: Vec<(usize, Option<MetricPair>)> = ids
        .iter()
        .map(|&id| (id, store.trace(period, TraceKey::Client(id)).and_then(|t| metric_pair(&t))))
        .collect();
    detect(period, &pairs, cfg, &first)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(c: Point, d: f64) -> MetricPair {
        MetricPair {
            centroid: c,
            footprint: d,
            sample_count: 5,
        }
    }

    #[test]
    fn metric_pair_fixtures() {
        let p = metric_pair(&[Some([0.0, 0.0]), None, Some([2.0, 0.0])]).unwrap();
        assert_eq!(p.centroid, [1.0, 0.0]);
        assert_eq!(p.footprint, 1.0);
        assert_eq!(p.sample_count, 2);
        assert_eq!(metric_pair(&[Some([3.0, 1.0])]).unwrap().footprint, 0.0);
        let p = metric_pair(&[Some([0.0, 0.0]), Some([2.0, 0.0]), Some([1.0, 3.0])]).unwrap();
        assert!((p.centroid[0] - 1.0).abs() < 1e-15 && (p.centroid[1] - 1.0).abs() < 1e-15);
        assert!((p.footprint - (2.0 * 2f64.sqrt() + 2.0) / 3.0).abs() < 1e-12);
        assert!(metric_pair(&[None, None]).is_none());
    }

    #[test]
    fn baseline_neighborhood() {
        // boundaries on exactly representable values
        let first = pair([0.5, -0.25], 2.0);
        let pairs = vec![
            (0, first),
            (1, pair([8.5, -0.25], 2.0)),
            (2, pair([0.5, -0.25], 6.0)),
            (3, pair([7.5, -0.25], 5.5)),
        ];
        assert_eq!(select_baseline_set(&pairs, &first, 4.0, 2.0).unwrap(), vec![0, 3]);
        let anchor = pair([-5.31, -0.62], 3.32);
        let d = 3.32;
        let near = [(7, pair([-5.31 + 3.9 * d, -0.62], 3.32 + 1.9 * d))];
        assert_eq!(select_baseline_set(&near, &anchor, 4.0, 2.0).unwrap(), vec![7]);
        let bad = pair([0.0, 0.0], 0.0);
        assert!(select_baseline_set(&pairs, &bad, 4.0, 2.0).unwrap_err().is_config());
    }

    #[test]
    fn baseline_value_fixtures() {
        let one = pair([1.5, -2.0], 0.7);
        assert_eq!(baseline_values(&[one]).unwrap(), ([1.5, -2.0], 0.7));
        let set = [pair([0.0, 0.0], 1.0), pair([2.0, 2.0], 3.0)];
        assert_eq!(baseline_values(&set).unwrap(), ([1.0, 1.0], 2.0));
        let rev = [set[1], set[0]];
        assert_eq!(baseline_values(&rev).unwrap(), baseline_values(&set).unwrap());
        assert!(baseline_values(&[]).is_err());
    }

    #[test]
    fn abnormality_fixtures() {
        let base = pair([0.3, 0.4], 2.0);
        assert_eq!(abnormality(&base, [0.3, 0.4], 2.0, 1.0, 2.0), 0.0);
        let flip = pair([21.87, -0.58], 3.07);
        let h = abnormality(&flip, [-5.31, -0.62], 3.32, 1.0, 2.0);
        assert!((h - 8.69).abs() < 0.05, "{h}");
        let vague = pair([-2.52, 0.93], 0.92);
        let h = abnormality(&vague, [-0.05, 0.02], 5.55, 1.0, 2.0);
        let second = 2.0 * (5.55f64 - 0.92).abs();
        assert!((second - 9.26).abs() < 1e-12);
        assert!(second > h - second);
    }

    #[test]
    fn homogeneous_population_is_clean() {
        let p = pair([1.0, 1.0], 2.0);
        let pairs: Vec<_> = (0..6).map(|i| (i, Some(p))).collect();
        let r = detect(0, &pairs, &McdConfig::default(), &pair([1.0, 1.2], 2.0)).unwrap();
        assert!(r.flagged.is_empty());
        assert_eq!(r.surviving.len(), 6);
    }

    #[test]
    fn collapsed_footprint_is_flagged() {
        let mut pairs: Vec<_> = (0..9).map(|i| (i, Some(pair([0.1 * i as f64, 0.0], 5.0 + 0.05 * i as f64)))).collect();
        pairs.push((9, Some(pair([0.2, 0.1], 1.0))));
        pairs.push((10, None));
        let r = detect(3, &pairs, &McdConfig::default(), &pair([0.0, 0.0], 5.0)).unwrap();
        assert_eq!(r.flagged, vec![9]);
        assert_eq!(r.skipped, vec![10]);
        assert!(r.surviving.contains(&10));
        assert!(!r.baseline_fallback);
    }

    #[test]
    fn displaced_centroids_are_flagged() {
        let d0 = 3.0;
        let mut pairs = Vec::new();
        for i in 0..20usize {
            let shift = if i < 4 { 8.0 * d0 } else { 0.1 * (i % 5) as f64 };
            pairs.push((i, Some(pair([shift, 0.05 * i as f64], d0 + 0.02 * (i % 3) as f64))));
        }
        let r = detect(0, &pairs, &McdConfig::default(), &pair([0.0, 0.0], d0)).unwrap();
        assert_eq!(r.flagged, vec![0, 1, 2, 3]);
    }

    #[test]
    fn too_few_clients() {
        let p = Some(pair([0.0, 0.0], 1.0));
        assert!(detect(0, &[(0, p), (1, p), (2, None)], &McdConfig::default(), &pair([0.0, 0.0], 1.0)).is_err());
    }

    #[test]
    fn config_ranges() {
        assert!(McdConfig::default().validate().is_ok());
        let bad = McdConfig { delta: 3.0, ..McdConfig::default() };
        assert!(bad.validate().unwrap_err().is_config());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn trace() -> impl Strategy<Value = Vec<Option<Point>>> {
            prop::collection::vec(prop::option::weighted(0.7, (-50.0..50.0f64, -50.0..50.0f64).prop_map(|(x, y)| [x, y])), 1..12)
        }

        proptest! {
            #[test]
            fn footprint_translation_and_scale(t in trace(), dx in -100.0..100.0f64, dy in -100.0..100.0f64, k in 0.01..20.0f64) {
                let Some(p) = metric_pair(&t) else { return Ok(()); };
                let moved: Vec<_> = t.iter().map(|q| q.map(|q| [q[0] + dx, q[1] + dy])).collect();
                let scaled: Vec<_> = t.iter().map(|q| q.map(|q| [q[0] * k, q[1] * k])).collect();
                let pm = metric_pair(&moved).unwrap();
                let ps = metric_pair(&scaled).unwrap();
                let tol = 1e-9 * (1.0 + p.footprint + dx.abs() + dy.abs());
                prop_assert!((pm.footprint - p.footprint).abs() <= tol);
                prop_assert!((ps.footprint - k * p.footprint).abs() <= 1e-9 * (1.0 + k * p.footprint));
                prop_assert_eq!(ps.sample_count, p.sample_count);
            }

            #[test]
            fn abnormality_zero_and_monotone(
                c in (-10.0..10.0f64, -10.0..10.0f64), d in 0.0..10.0f64,
                base in (-10.0..10.0f64, -10.0..10.0f64), d_base in 0.1..10.0f64,
                grow in 0.01..5.0f64, l1 in 0.1..3.0f64, l2 in 0.1..3.0f64,
            ) {
                let base = [base.0, base.1];
                let at_base = pair(base, d_base);
                prop_assert_eq!(abnormality(&at_base, base, d_base, l1, l2), 0.0);
                let p = pair([c.0, c.1], d);
                let h = abnormality(&p, base, d_base, l1, l2);
                prop_assert!(h >= 0.0);
                prop_assert_eq!(h == 0.0, c.0 == base[0] && c.1 == base[1] && d == d_base);
                // push the centroid further out along its offset direction
                let off = [c.0 - base[0], c.1 - base[1]];
                let n = off[0].hypot(off[1]);
                let dir = if n > 0.0 { [off[0] / n, off[1] / n] } else { [1.0, 0.0] };
                let further = pair([c.0 + grow * dir[0], c.1 + grow * dir[1]], d);
                prop_assert!(abnormality(&further, base, d_base, l1, l2) > h);
                let sign = if d >= d_base { 1.0 } else { -1.0 };
                let wider = pair([c.0, c.1], (d + sign * grow).max(0.0));
                if (wider.footprint - d_base).abs() > (d - d_base).abs() {
                    prop_assert!(abnormality(&wider, base, d_base, l1, l2) > h);
                }
            }

            #[test]
            fn first_baseline_is_never_a_candidate(seed in 0u64..500) {
                let pop = synthetic_population(&SyntheticSpec::default(), seed).unwrap();
                let r = detect_period(&pop.store, 0, &McdConfig::default(), None).unwrap();
                prop_assert!(r.scores.iter().all(|s| s.client < 20));
                prop_assert!(r.flagged.iter().all(|id| r.surviving.binary_search(id).is_err()));
            }

            #[test]
            fn removing_flagged_keeps_flags(seed in 0u64..200) {
                let pop = synthetic_population(&SyntheticSpec::default(), seed).unwrap();
                let cfg = McdConfig::default();
                let r = detect_period(&pop.store, 0, &cfg, None).unwrap();
                let Some(&drop) = r.flagged.first() else { return Ok(()); };
                let trusted: Vec<usize> = pop.store.clients(0).into_iter().filter(|&c| c != drop).collect();
                let again = detect_period(&pop.store, 0, &cfg, Some(&trusted)).unwrap();
                for id in r.flagged.iter().filter(|&&id| id != drop) {
                    prop_assert!(again.flagged.contains(id), "client {} unflagged", id);
                }
            }
        }
    }
}
