//! Two-dimensional PCA of model populations and the attacker-side
//! effectiveness/stealthiness metrics computed on it.

mod pca;

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use pca::{pca_2d, Reduced2D};

pub type Point = [f64; 2];

/// Drop in global accuracy caused by an attack; negative when the attack helped.
pub fn effectiveness(a_clean: f64, a_poisoned: f64) -> f64 {
    a_clean - a_poisoned
}

pub fn centroid(points: &[Point]) -> Option<Point> {
    if points.is_empty() {
        return None;
    }
    let n = points.len() as f64;
    let (sx, sy) = points.iter().fold((0.0, 0.0), |(x, y), p| (x + p[0], y + p[1]));
    Some([sx / n, sy / n])
}

pub fn distance(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Reciprocal distance between the two clusters' centroids; `f64::INFINITY`
/// when they coincide.
pub fn stealthiness(benign: &[Point], poisoned: &[Point]) -> Result<f64> {
    let (Some(b), Some(p)) = (centroid(benign), centroid(poisoned)) else {
        return Err(Error::precondition("stealthiness needs both point sets nonempty"));
    };
    let d = distance(b, p);
    Ok(if d == 0.0 { f64::INFINITY } else { 1.0 / d })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabeledPoint {
    pub client: usize,
    pub round: usize,
    pub x: f64,
    pub y: f64,
    pub is_malicious: bool,
}

/// CSV with columns `client,round,x,y,is_malicious` (the flag as 0/1).
pub fn write_points_csv(points: &[LabeledPoint], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["client", "round", "x", "y", "is_malicious"])?;
    for p in points {
        w.write_record([
            p.client.to_string(),
            p.round.to_string(),
            format!("{:.17e}", p.x),
            format!("{:.17e}", p.y),
            u8::from(p.is_malicious).to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("points csv", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn effectiveness_fixtures() {
        assert!((effectiveness(0.8797, 0.8587) - 0.0210).abs() < 1e-12);
        assert_eq!(effectiveness(0.3, 0.3), 0.0);
        assert!((effectiveness(0.5, 0.6) + 0.1).abs() < 1e-12);
    }

    #[test]
    fn stealthiness_fixtures() {
        assert!((stealthiness(&[[0.0, 0.0]], &[[3.0, 4.0]]).unwrap() - 0.2).abs() < 1e-15);
        let pts = [[1.0, 2.0], [3.0, -1.0]];
        assert_eq!(stealthiness(&pts, &pts).unwrap(), f64::INFINITY);
        let s = stealthiness(&[[0.0, 0.0], [2.0, 0.0]], &[[1.0, 2.0]]).unwrap();
        assert!((s - 0.5).abs() < 1e-15);
        assert!(stealthiness(&[], &pts).is_err());
    }

    #[test]
    fn points_csv_header() {
        let mut buf = Vec::new();
        let p = LabeledPoint { client: 2, round: 7, x: 0.5, y: -1.0, is_malicious: true };
        write_points_csv(&[p], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("client,round,x,y,is_malicious"));
        assert!(lines.next().unwrap().starts_with("2,7,5.0"));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn cloud() -> impl Strategy<Value = Vec<Point>> {
            prop::collection::vec((-100.0..100.0f64, -100.0..100.0f64).prop_map(|(x, y)| [x, y]), 1..15)
        }

        proptest! {
            #[test]
            fn stealthiness_symmetric_and_translation_invariant(a in cloud(), b in cloud(), t in (-1e3..1e3f64, -1e3..1e3f64)) {
                let s = stealthiness(&a, &b).unwrap();
                prop_assert_eq!(s, stealthiness(&b, &a).unwrap());
                let shift = |v: &[Point]| v.iter().map(|p| [p[0] + t.0, p[1] + t.1]).collect::<Vec<_>>();
                let moved = stealthiness(&shift(&a), &shift(&b)).unwrap();
                let (d, dm) = (1.0 / s, 1.0 / moved);
                prop_assert!((d - dm).abs() <= 1e-9 * (1.0 + t.0.abs() + t.1.abs()), "{} vs {}", d, dm);
            }

            #[test]
            fn effectiveness_of_identical_accuracy_is_zero(a in 0.0..=1.0f64) {
                prop_assert_eq!(effectiveness(a, a), 0.0);
            }
        }
    }
}
