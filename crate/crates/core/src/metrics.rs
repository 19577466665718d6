//! Accuracy and entropy evaluation: ROC sweeps, EER, AUC, the per-interval
//! and per-evidence entropy of normally distributed timing, and bit rate.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{self, EncodingParams};
use crate::evidence::Evidence;
use crate::sensing::UiType;
use crate::synthgen::UserModel;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("need both positive and negative labels (positives {positives}, negatives {negatives})")]
    DegenerateLabels { positives: usize, negatives: usize },
    #[error("{scores} scores but {labels} labels")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("non-finite score at index {0}")]
    NonFinite(usize),
    #[error("bad entropy parameters: {0}")]
    BadParams(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub far: f64,
    pub frr: f64,
}

/// Points run from the loosest threshold (everything accepted) to the
/// tightest (nothing accepted).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Roc {
    pub points: Vec<RocPoint>,
    pub eer: f64,
    pub auc: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    /// Accept iff score ≥ threshold.
    Score,
    /// Accept iff distance ≤ threshold.
    Distance,
}

fn check_inputs(values: &[f64], labels: &[bool]) -> Result<(usize, usize), MetricsError> {
    if values.len() != labels.len() {
        return Err(MetricsError::LengthMismatch { scores: values.len(), labels: labels.len() });
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(MetricsError::NonFinite(i));
    }
    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(MetricsError::DegenerateLabels { positives, negatives });
    }
    Ok((positives, negatives))
}

/// ROC over classifier scores (higher means more likely legitimate).
pub fn roc(scores: &[f64], labels: &[bool]) -> Result<Roc, MetricsError> {
    roc_with(scores, labels, Polarity::Score)
}

/// ROC over distances (lower means more likely legitimate).
pub fn roc_distances(distances: &[f64], labels: &[bool]) -> Result<Roc, MetricsError> {
    roc_with(distances, labels, Polarity::Distance)
}

pub fn roc_with(values: &[f64], labels: &[bool], polarity: Polarity) -> Result<Roc, MetricsError> {
    let (pos, neg) = check_inputs(values, labels)?;
    // Work in score space: larger is more legitimate.
    let sign = match polarity {
        Polarity::Score => 1.0,
        Polarity::Distance => -1.0,
    };
    let mut order: Vec<(f64, bool)> = values.iter().zip(labels).map(|(&v, &l)| (sign * v, l)).collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut points = Vec::with_capacity(order.len() + 1);
    // Threshold at each distinct score: samples at or above it are accepted.
    let (mut rejected_pos, mut rejected_neg) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let t = order[i].0;
        points.push(RocPoint {
            threshold: sign * t,
            far: (neg - rejected_neg) as f64 / neg as f64,
            frr: rejected_pos as f64 / pos as f64,
        });
        while i < order.len() && order[i].0 == t {
            if order[i].1 {
                rejected_pos += 1;
            } else {
                rejected_neg += 1;
            }
            i += 1;
        }
    }
    points.push(RocPoint { threshold: sign * f64::INFINITY, far: 0.0, frr: 1.0 });

    let auc = points.windows(2).map(|w| (w[0].far - w[1].far) * ((1.0 - w[0].frr) + (1.0 - w[1].frr)) / 2.0).sum();
    Ok(Roc { eer: eer_of(&points), points, auc })
}

/// FAR = FRR crossing, linearly interpolated between adjacent points.
fn eer_of(points: &[RocPoint]) -> f64 {
    for w in points.windows(2) {
        let d0 = w[0].far - w[0].frr;
        let d1 = w[1].far - w[1].frr;
        if d0 >= 0.0 && d1 <= 0.0 {
            if d0 == d1 {
                return w[0].far;
            }
            let a = d0 / (d0 - d1);
            return w[0].far + a * (w[1].far - w[0].far);
        }
    }
    // Unreachable: the sweep starts at FAR 1, FRR 0 and ends at FAR 0, FRR 1.
    0.5
}

/// FAR and FRR when accepting iff the value passes `threshold`.
pub fn rates_at(values: &[f64], labels: &[bool], threshold: f64, polarity: Polarity) -> Result<RocPoint, MetricsError> {
    let (pos, neg) = check_inputs(values, labels)?;
    let accept = |v: f64| match polarity {
        Polarity::Score => v >= threshold,
        Polarity::Distance => v <= threshold,
    };
    let fa = values.iter().zip(labels).filter(|(&v, &l)| !l && accept(v)).count();
    let fr = values.iter().zip(labels).filter(|(&v, &l)| l && !accept(v)).count();
    Ok(RocPoint { threshold, far: fa as f64 / neg as f64, frr: fr as f64 / pos as f64 })
}

/// Tightest ROC point whose FRR does not exceed `target`.
pub fn point_for_frr(roc: &Roc, target: f64) -> RocPoint {
    *roc.points.iter().rev().find(|p| p.frr <= target).unwrap_or(&roc.points[0])
}

/// Bit-Hamming distance between the encodings of two evidence sequences.
/// Pairs that cannot be encoded (length mismatch or an interval beyond
/// the encodable range) get one more than the largest possible distance.
pub fn encoding_distance(a: &Evidence, b: &Evidence, params: &EncodingParams) -> f64 {
    let worst = (a.len().max(b.len()) * params.segment_len() + 1) as f64;
    match (codec::encode(a, params), codec::encode(b, params)) {
        (Ok(x), Ok(y)) => codec::hamming(&x, &y).map_or(worst, |d| d as f64),
        _ => worst,
    }
}

/// Differential entropy in bits of N(·, σ²) quantized at step `base`:
/// ½·log₂(2πe·(σ/B)²).
pub fn interval_entropy(sigma: f64, base: f64) -> f64 {
    let s = sigma / base;
    0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E * s * s).log2()
}

/// log₂ of the binomial coefficient C(n, k).
pub fn log2_binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k.min(n));
    (0..k).map(|i| ((n - i) as f64 / (i + 1) as f64).log2()).sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntropyParams {
    pub sigma1: f64,
    pub sigma2: f64,
    pub base: f64,
    pub n1: usize,
    pub n2: usize,
    pub mu1: f64,
    pub mu2: f64,
}

impl EntropyParams {
    /// Default timing statistics of `ui` with `n1` short intervals and `n2` pauses.
    pub fn for_ui(ui: UiType, base: f64, n1: usize, n2: usize) -> Self {
        let m = UserModel::for_ui(ui);
        EntropyParams { sigma1: m.sigma1, sigma2: m.sigma2, base, n1, n2, mu1: m.mu1, mu2: m.mu2 }
    }

    pub fn validate(&self) -> Result<(), MetricsError> {
        let vals = [self.sigma1, self.sigma2, self.base, self.mu1, self.mu2];
        if vals.iter().any(|v| !(v.is_finite() && *v > 0.0)) || self.n1 + self.n2 == 0 {
            return Err(MetricsError::BadParams(format!("{self:?}")));
        }
        Ok(())
    }

    /// Expected operation time T = n1·μ1 + n2·μ2 in ms.
    pub fn total_time_ms(&self) -> f64 {
        self.n1 as f64 * self.mu1 + self.n2 as f64 * self.mu2
    }
}

/// n1·E1 + n2·E2, without the positional term.
pub fn evidence_entropy_no_binomial(p: &EntropyParams) -> f64 {
    p.n1 as f64 * interval_entropy(p.sigma1, p.base) + p.n2 as f64 * interval_entropy(p.sigma2, p.base)
}

/// n1·E1 + n2·E2 + log₂ C(n1+n2, n2).
pub fn evidence_entropy(p: &EntropyParams) -> f64 {
    evidence_entropy_no_binomial(p) + log2_binomial(p.n1 + p.n2, p.n2)
}

/// Bits per second over the expected operation time.
pub fn bit_rate(l_e: f64, p: &EntropyParams) -> f64 {
    if l_e == 0.0 {
        return 0.0;
    }
    l_e / (p.total_time_ms() / 1000.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntropyRow {
    pub ui_type: UiType,
    pub base: f64,
    pub n1: usize,
    pub n2: usize,
    pub e1: f64,
    pub e2: f64,
    pub total: f64,
    pub total_no_binomial: f64,
    pub time_ms: f64,
    pub bit_rate: f64,
    pub bit_rate_no_binomial: f64,
}

pub fn entropy_row(ui: UiType, p: &EntropyParams) -> Result<EntropyRow, MetricsError> {
    p.validate()?;
    let total = evidence_entropy(p);
    let total_no_binomial = evidence_entropy_no_binomial(p);
    Ok(EntropyRow {
        ui_type: ui,
        base: p.base,
        n1: p.n1,
        n2: p.n2,
        e1: interval_entropy(p.sigma1, p.base),
        e2: interval_entropy(p.sigma2, p.base),
        total,
        total_no_binomial,
        time_ms: p.total_time_ms(),
        bit_rate: bit_rate(total, p),
        bit_rate_no_binomial: bit_rate(total_no_binomial, p),
    })
}

/// Rows for a six-interval operation with two pauses and with one.
pub fn entropy_table(ui: UiType, base: f64) -> Result<Vec<EntropyRow>, MetricsError> {
    [(4, 2), (5, 1)].iter().map(|&(n1, n2)| entropy_row(ui, &EntropyParams::for_ui(ui, base, n1, n2))).collect()
}

pub fn write_roc_csv<W: std::io::Write>(roc: &Roc, w: W) -> std::io::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for p in &roc.points {
        out.serialize(p)?;
    }
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Probability a random positive outscores a random negative, ties half.
    fn mann_whitney(scores: &[f64], labels: &[bool]) -> f64 {
        let (mut wins, mut n) = (0.0, 0.0);
        for (s, l) in scores.iter().zip(labels) {
            if !l {
                continue;
            }
            for (t, m) in scores.iter().zip(labels) {
                if *m {
                    continue;
                }
                n += 1.0;
                wins += if s > t {
                    1.0
                } else if s == t {
                    0.5
                } else {
                    0.0
                };
            }
        }
        wins / n
    }

    /// EER by scanning every midpoint threshold and taking the smallest
    /// max(FAR, FRR); exact when some threshold equalizes the two rates.
    fn brute_force_eer(scores: &[f64], labels: &[bool]) -> f64 {
        let mut ts: Vec<f64> = scores.to_vec();
        ts.push(f64::INFINITY);
        ts.push(f64::NEG_INFINITY);
        let mut best = f64::INFINITY;
        for &t in &ts {
            let p = rates_at(scores, labels, t, Polarity::Score).unwrap();
            best = best.min(p.far.max(p.frr));
        }
        best
    }

    #[test]
    fn separated_scores() {
        let r = roc(&[0.9, 0.8, 0.7, 0.1, 0.2], &[true, true, true, false, false]).unwrap();
        assert_eq!(r.auc, 1.0);
        assert_eq!(r.eer, 0.0);
    }

    #[test]
    fn identical_distributions_are_chance() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let scores: Vec<f64> = (0..4000).map(|_| rng.gen::<f64>()).collect();
        let labels: Vec<bool> = (0..4000).map(|i| i % 2 == 0).collect();
        let r = roc(&scores, &labels).unwrap();
        assert!((r.auc - 0.5).abs() < 0.03, "{}", r.auc);
        assert!((r.eer - 0.5).abs() < 0.03, "{}", r.eer);
    }

    #[test]
    fn four_point_eer_matches_enumeration() {
        let scores = [0.9, 0.4, 0.6, 0.1];
        let labels = [true, true, false, false];
        let r = roc(&scores, &labels).unwrap();
        assert_eq!(r.eer, 0.5);
        assert_eq!(r.eer, brute_force_eer(&scores, &labels));
        assert_eq!(r.auc, mann_whitney(&scores, &labels));
        assert_eq!(r.auc, 0.75);
    }

    #[test]
    fn distances_mirror_scores() {
        let d = [3.0, 0.0, 12.0, 40.0, 7.0];
        let labels = [true, true, false, false, true];
        let neg: Vec<f64> = d.iter().map(|x| -x).collect();
        let a = roc_distances(&d, &labels).unwrap();
        let b = roc(&neg, &labels).unwrap();
        assert_eq!((a.auc, a.eer), (b.auc, b.eer));
        assert_eq!(a.points[1].threshold, 12.0);
        let p = rates_at(&d, &labels, 12.0, Polarity::Distance).unwrap();
        assert_eq!((p.far, p.frr), (a.points[1].far, a.points[1].frr));
    }

    #[test]
    fn degenerate_labels_rejected() {
        assert!(matches!(roc(&[1.0, 2.0], &[true, true]), Err(MetricsError::DegenerateLabels { .. })));
        assert!(matches!(roc(&[1.0], &[true, false]), Err(MetricsError::LengthMismatch { .. })));
    }

    #[test]
    fn frr_operating_point() {
        let scores = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];
        let labels = [false, false, false, false, false, true, true, true, true, true];
        let r = roc(&scores, &labels).unwrap();
        let p = point_for_frr(&r, 0.2);
        assert_eq!(p.frr, 0.2);
        assert_eq!(p.threshold, 0.7);
        assert_eq!(p.far, 0.0);
    }

    #[test]
    fn interval_entropy_values() {
        assert!((interval_entropy(67.0, 10.0) - 4.79).abs() < 0.01);
        assert!((interval_entropy(501.0, 10.0) - 7.69).abs() < 0.01);
        assert!((interval_entropy(67.0, 1.0) - 8.11).abs() < 0.01);
        assert!((interval_entropy(501.0, 1.0) - 11.01).abs() < 0.01);
    }

    #[test]
    fn evidence_entropy_values() {
        let two = EntropyParams::for_ui(UiType::Button, 10.0, 4, 2);
        let one = EntropyParams::for_ui(UiType::Button, 10.0, 5, 1);
        assert!((evidence_entropy(&two) - 38.5).abs() < 0.1);
        assert!((evidence_entropy(&one) - 34.3).abs() < 0.1);
        assert_eq!(two.total_time_ms(), 3756.0);
        assert_eq!(one.total_time_ms(), 2592.0);
        assert!((bit_rate(evidence_entropy(&two), &two) - 10.3).abs() < 0.1);
        assert!((bit_rate(evidence_entropy(&one), &one) - 13.2).abs() < 0.1);
        let fine_two = EntropyParams { base: 1.0, ..two };
        let fine_one = EntropyParams { base: 1.0, ..one };
        assert!((evidence_entropy_no_binomial(&fine_two) - 54.4).abs() < 0.1);
        assert!((evidence_entropy_no_binomial(&fine_one) - 51.5).abs() < 0.1);
        let none = EntropyParams { n2: 0, ..two };
        assert_eq!(evidence_entropy(&none), 4.0 * interval_entropy(67.0, 10.0));
        assert_eq!(bit_rate(0.0, &two), 0.0);
    }

    #[test]
    fn binomial_oracle() {
        assert_eq!(log2_binomial(6, 2), 15f64.log2());
        assert_eq!(log2_binomial(6, 0), 0.0);
        assert!((log2_binomial(10, 7) - 120f64.log2()).abs() < 1e-12);
    }

    #[test]
    fn encoding_distances() {
        let ev = |iv: &[u32]| Evidence::new(iv.to_vec(), UiType::Button, crate::sensing::Origin::Device).unwrap();
        let f = EncodingParams::faithful(4, 40);
        assert_eq!(encoding_distance(&ev(&[121]), &ev(&[57]), &f), 16.0);
        assert_eq!(
            encoding_distance(&ev(&[121]), &ev(&[57]), &EncodingParams { base_ms: 4, ..EncodingParams::vanilla(12) }),
            1.0
        );
        assert_eq!(encoding_distance(&ev(&[121]), &ev(&[900]), &f), 41.0);
        assert_eq!(encoding_distance(&ev(&[121]), &ev(&[1, 2]), &f), 81.0);
    }

    #[test]
    fn roc_csv_has_header() {
        let r = roc(&[1.0, 0.0], &[true, false]).unwrap();
        let mut buf = Vec::new();
        write_roc_csv(&r, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("threshold,far,frr\n"));
        assert_eq!(text.lines().count(), 1 + r.points.len());
    }

    proptest! {
        #[test]
        fn entropy_scaling(sigma in 1.0f64..2000.0, base in 1.0f64..50.0) {
            prop_assert!((interval_entropy(sigma, base) - interval_entropy(sigma / base, 1.0)).abs() < 1e-9);
        }

        #[test]
        fn auc_equals_rank_statistic(
            scores in prop::collection::vec(0u8..20, 2..60),
            flips in prop::collection::vec(any::<bool>(), 60),
        ) {
            let s: Vec<f64> = scores.iter().map(|&x| x as f64).collect();
            let mut labels: Vec<bool> = flips[..s.len()].to_vec();
            labels[0] = true;
            labels[1] = false;
            let r = roc(&s, &labels).unwrap();
            prop_assert!((r.auc - mann_whitney(&s, &labels)).abs() < 1e-9);
            for w in r.points.windows(2) {
                prop_assert!(w[1].far <= w[0].far && w[1].frr >= w[0].frr);
            }
            prop_assert!(r.eer >= 0.0 && r.eer <= 1.0);
        }
    }
}
