//! Positive-class precision/recall/F1, Welch's t-test and Cohen's kappa.
//!
//! F1 here is always the positive-class F1. Scores from several test sets
//! are combined by pooling confusion counts ([`ConfusionCounts::merge`]),
//! which is what reports call micro-F1.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn from_predictions(predicted: &[bool], gold: &[bool]) -> Result<Self> {
        if predicted.len() != gold.len() {
            return Err(Error::Invalid(format!(
                "prediction/gold length mismatch: {} vs {}",
                predicted.len(),
                gold.len()
            )));
        }
        let mut c = ConfusionCounts::default();
        for (&p, &g) in predicted.iter().zip(gold) {
            match (p, g) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        Ok(c)
    }

    pub fn merge(self, other: ConfusionCounts) -> ConfusionCounts {
        ConfusionCounts {
            tp: self.tp + other.tp,
            fp: self.fp + other.fp,
            fn_: self.fn_ + other.fn_,
            tn: self.tn + other.tn,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn scores(&self) -> PrfScores {
        let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let precision = ratio(self.tp, self.tp + self.fp);
        let recall = ratio(self.tp, self.tp + self.fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        PrfScores {
            precision,
            recall,
            f1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrfScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Positive-class precision, recall and F1. Any 0/0 is taken as 0.
pub fn f1_positive(predicted: &[bool], gold: &[bool]) -> Result<PrfScores> {
    Ok(ConfusionCounts::from_predictions(predicted, gold)?.scores())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    pub t_statistic: f64,
    pub degrees_of_freedom: f64,
    /// Two-sided.
    pub p_value: f64,
}

fn mean_and_variance(sample: &[f64]) -> (f64, f64) {
    let n = sample.len() as f64;
    let mean = sample.iter().sum::<f64>() / n;
    let ss = sample.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
    (mean, ss / (n - 1.0))
}

/// Welch's unequal-variance t-test. The statistic is positive when
/// `sample_b` has the larger mean.
pub fn welch_t(sample_a: &[f64], sample_b: &[f64]) -> Result<TTestResult> {
    if sample_a.len() < 2 || sample_b.len() < 2 {
        return Err(Error::Statistics(format!(
            "welch t-test needs at least 2 values per sample, got {} and {}",
            sample_a.len(),
            sample_b.len()
        )));
    }
    let (ma, va) = mean_and_variance(sample_a);
    let (mb, vb) = mean_and_variance(sample_b);
    let (na, nb) = (sample_a.len() as f64, sample_b.len() as f64);
    let sa = va / na;
    let sb = vb / nb;
    let se2 = sa + sb;
    if se2.is_nan() || se2 <= 0.0 || !se2.is_finite() {
        return Err(Error::Statistics(
            "welch t-test: both samples have zero variance".into(),
        ));
    }
    let t = (mb - ma) / se2.sqrt();
    let df = se2 * se2 / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    Ok(TTestResult {
        t_statistic: t,
        degrees_of_freedom: df,
        p_value: student_t_two_sided_p(t, df),
    })
}

/// Cohen's kappa for two binary label lists.
pub fn cohen_kappa(labels_a: &[bool], labels_b: &[bool]) -> Result<f64> {
    if labels_a.len() != labels_b.len() {
        return Err(Error::Invalid(format!(
            "kappa: length mismatch {} vs {}",
            labels_a.len(),
            labels_b.len()
        )));
    }
    if labels_a.is_empty() {
        return Err(Error::Invalid("kappa: no items".into()));
    }
    let n = labels_a.len() as f64;
    let agree = labels_a.iter().zip(labels_b).filter(|(a, b)| a == b).count() as f64;
    let a_pos = labels_a.iter().filter(|&&v| v).count() as f64 / n;
    let b_pos = labels_b.iter().filter(|&&v| v).count() as f64 / n;
    let p_o = agree / n;
    let p_e = a_pos * b_pos + (1.0 - a_pos) * (1.0 - b_pos);
    if p_e >= 1.0 {
        return if p_o >= 1.0 {
            Ok(1.0)
        } else {
            Err(Error::Statistics("kappa undefined: chance agreement is 1".into()))
        };
    }
    Ok((p_o - p_e) / (1.0 - p_e))
}

/// Cohen's kappa from a 2×2 agreement table `[[yes/yes, yes/no], [no/yes, no/no]]`.
pub fn cohen_kappa_table(table: [[u64; 2]; 2]) -> Result<f64> {
    let mut a = Vec::new();
    let mut b = Vec::new();
    for (i, row) in table.iter().enumerate() {
        for (j, &count) in row.iter().enumerate() {
            for _ in 0..count {
                a.push(i == 0);
                b.push(j == 0);
            }
        }
    }
    cohen_kappa(&a, &b)
}

// Lanczos approximation, g = 7, n = 9.
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS[0];
    let t = x + 7.5;
    for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Continued fraction for the incomplete beta (modified Lentz).
fn beta_continued_fraction(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=10_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta function I_x(a, b).
pub fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_continued_fraction(a, b, x) / a
    } else {
        1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b
    }
}

/// Student-t cumulative distribution function.
pub fn student_t_cdf(t: f64, df: f64) -> f64 {
    if t.is_nan() || df.is_nan() {
        return f64::NAN;
    }
    let x = df / (df + t * t);
    let tail = 0.5 * regularized_incomplete_beta(0.5 * df, 0.5, x);
    if t > 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

pub fn student_t_two_sided_p(t: f64, df: f64) -> f64 {
    let x = df / (df + t * t);
    regularized_incomplete_beta(0.5 * df, 0.5, x).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn perfect_predictor() {
        let gold = [true, false, true, true, false];
        let s = f1_positive(&gold, &gold).unwrap();
        assert_eq!(s.f1, 1.0);
    }

    #[test]
    fn hand_confusion_matrix() {
        // tp=2 fp=1 fn=1 tn=1
        let pred = [true, true, true, false, false];
        let gold = [true, true, false, true, false];
        let s = f1_positive(&pred, &gold).unwrap();
        assert_eq!(s.precision, 2.0 / 3.0);
        assert_eq!(s.recall, 2.0 / 3.0);
        assert_eq!(s.f1, 2.0 / 3.0);
    }

    #[test]
    fn no_positive_predictions() {
        let s = f1_positive(&[false, false], &[true, false]).unwrap();
        assert_eq!((s.precision, s.recall, s.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn length_mismatch() {
        assert!(f1_positive(&[true], &[true, false]).is_err());
        assert!(cohen_kappa(&[true], &[true, false]).is_err());
    }

    #[test]
    fn pooled_f1_equals_concatenated() {
        let (p1, g1) = ([true, false, true, true], [true, true, false, true]);
        let (p2, g2) = ([false, true, true], [false, true, false]);
        let pooled = ConfusionCounts::from_predictions(&p1, &g1)
            .unwrap()
            .merge(ConfusionCounts::from_predictions(&p2, &g2).unwrap());
        let cat_p: Vec<bool> = p1.iter().chain(&p2).copied().collect();
        let cat_g: Vec<bool> = g1.iter().chain(&g2).copied().collect();
        assert_eq!(pooled.scores(), f1_positive(&cat_p, &cat_g).unwrap());
    }

    #[test]
    fn kappa_identical_and_table() {
        let a = [true, false, true, false, false];
        assert_eq!(cohen_kappa(&a, &a).unwrap(), 1.0);
        // p_o = 0.85, p_e = 0.25*0.30 + 0.75*0.70 = 0.60
        let k = cohen_kappa_table([[20, 5], [10, 65]]).unwrap();
        assert!((k - 0.625).abs() < 1e-12, "{k}");
    }

    #[test]
    fn kappa_constant_labels() {
        assert_eq!(cohen_kappa(&[true, true], &[true, true]).unwrap(), 1.0);
    }

    #[test]
    fn kappa_of_independent_labelings_is_near_zero() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let a: Vec<bool> = (0..10_000).map(|_| rng.gen_bool(0.4)).collect();
        let b: Vec<bool> = (0..10_000).map(|_| rng.gen_bool(0.7)).collect();
        let k = cohen_kappa(&a, &b).unwrap();
        assert!(k.abs() <= 0.05, "{k}");
    }

    #[test]
    fn kappa_never_exceeds_observed_agreement() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let n = rng.gen_range(2..40);
            let a: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.5)).collect();
            let b: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.5)).collect();
            if let Ok(k) = cohen_kappa(&a, &b) {
                let p_o = a.iter().zip(&b).filter(|(x, y)| x == y).count() as f64 / n as f64;
                assert!(k <= p_o + 1e-12);
            }
        }
    }

    /// Closed forms: df = 1 is Cauchy, df = 2 has an algebraic CDF.
    #[test]
    fn student_t_cdf_closed_forms() {
        for &t in &[-30.0, -3.1, -1.0, -0.2, 0.0, 0.5, 1.7, 4.0, 25.0] {
            let cauchy = 0.5 + f64::atan(t) / std::f64::consts::PI;
            assert!((student_t_cdf(t, 1.0) - cauchy).abs() < 1e-10, "df1 t={t}");
            let df2 = 0.5 + t / (2.0 * (2.0 + t * t).sqrt());
            assert!((student_t_cdf(t, 2.0) - df2).abs() < 1e-10, "df2 t={t}");
        }
    }

    #[test]
    fn student_t_reference_values() {
        // scipy.stats.t.cdf reference values.
        let cases = [
            (2.0, 5.0, 0.949_030_260_585_070_9),
            (-1.5, 10.0, 0.082_253_663_222_720_08),
            (2.394, 6.35, 0.974_268_129_184_630_5),
            (0.7, 30.0, 0.755_339_778_250_164_2),
        ];
        for (t, df, expected) in cases {
            let got = student_t_cdf(t, df);
            assert!((got - expected).abs() < 1e-10, "t={t} df={df}: {got} vs {expected}");
        }
    }

    #[test]
    fn ln_gamma_matches_factorials() {
        let mut fact = 1.0f64;
        for n in 1..20 {
            fact *= n as f64;
            assert!((ln_gamma(n as f64 + 1.0) - fact.ln()).abs() < 1e-12);
        }
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-13);
    }

    /// Independently coded Welch formula for the oracle comparison.
    fn welch_oracle(a: &[f64], b: &[f64]) -> (f64, f64) {
        let n1 = a.len() as f64;
        let n2 = b.len() as f64;
        let m1 = a.iter().sum::<f64>() / n1;
        let m2 = b.iter().sum::<f64>() / n2;
        let v1 = a.iter().map(|x| (x - m1) * (x - m1)).sum::<f64>() / (n1 - 1.0);
        let v2 = b.iter().map(|x| (x - m2) * (x - m2)).sum::<f64>() / (n2 - 1.0);
        let t = (m2 - m1) / (v1 / n1 + v2 / n2).sqrt();
        let num = (v1 / n1 + v2 / n2).powi(2);
        let den = (v1 / n1).powi(2) / (n1 - 1.0) + (v2 / n2).powi(2) / (n2 - 1.0);
        (t, num / den)
    }

    #[test]
    fn welch_table_two_ohio_family() {
        let original = [0.656, 0.636, 0.633, 0.667, 0.634];
        let removed = [0.659, 0.661, 0.669, 0.677, 0.655];
        let r = welch_t(&original, &removed).unwrap();
        let (t, df) = welch_oracle(&original, &removed);
        assert!((r.t_statistic - t).abs() < 1e-12);
        assert!((r.degrees_of_freedom - df).abs() < 1e-9);
        assert!((r.t_statistic - 2.39).abs() < 0.02, "{}", r.t_statistic);
        assert!((r.degrees_of_freedom - 6.4).abs() < 0.1, "{}", r.degrees_of_freedom);
        assert!(r.p_value > 0.0 && r.p_value < 0.06);
    }

    #[test]
    fn welch_identical_and_scale_invariant() {
        let a = [0.1, 0.3, 0.2, 0.5];
        let r = welch_t(&a, &a).unwrap();
        assert_eq!(r.t_statistic, 0.0);
        assert!((r.p_value - 1.0).abs() < 1e-12);

        let b = [0.4, 0.35, 0.6, 0.55, 0.5];
        let base = welch_t(&a, &b).unwrap();
        let scale = |s: &[f64]| s.iter().map(|v| v * 3.7).collect::<Vec<_>>();
        let scaled = welch_t(&scale(&a), &scale(&b)).unwrap();
        assert!((base.t_statistic - scaled.t_statistic).abs() < 1e-10);
    }

    #[test]
    fn welch_degenerate_variance() {
        assert!(welch_t(&[0.5, 0.5], &[0.7, 0.7]).is_err());
        assert!(welch_t(&[0.5], &[0.7, 0.8]).is_err());
    }

    #[test]
    fn p_value_decreases_with_abs_t() {
        let mut prev = 1.0;
        for i in 0..50 {
            let p = student_t_two_sided_p(i as f64 * 0.2, 7.3);
            assert!(p <= prev);
            prev = p;
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn f1_is_permutation_invariant(pairs in proptest::collection::vec((any::<bool>(), any::<bool>()), 1..60), seed in any::<u64>()) {
                use rand::seq::SliceRandom;
                let (p, g): (Vec<bool>, Vec<bool>) = pairs.iter().copied().unzip();
                let mut shuffled = pairs.clone();
                shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
                let (sp, sg): (Vec<bool>, Vec<bool>) = shuffled.into_iter().unzip();
                prop_assert_eq!(f1_positive(&p, &g).unwrap(), f1_positive(&sp, &sg).unwrap());
            }
        }
    }
}
