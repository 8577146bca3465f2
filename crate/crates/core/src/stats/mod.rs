//! Statistical primitives and the three kill criteria.
//!
//! * AVG: per-pair ratio of mean returns against a threshold.
//! * R: Welch test on per-agent mean returns, gated by Cohen's d and
//!   post-hoc power.
//! * DtR: the R gate applied to resampled Hellinger distances between
//!   reward histograms.

mod distance;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::RewardSample;
use crate::special::{normal_cdf, normal_quantile, student_t_two_sided};
use crate::Scalar;

pub use distance::{distance_samples, dtr_killing, hellinger, histogram, DistanceSamples, DtrParams};

pub const P_VALUE_THRESHOLD: f64 = 0.05;
pub const EFFECT_THRESHOLD: f64 = 0.5;
pub const POWER_THRESHOLD: f64 = 0.8;
pub const ALPHA: f64 = 0.05;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("need at least {need} values, got {got}")]
    TooFew { need: usize, got: usize },
    #[error("populations differ in size: {healthy} healthy vs {mutated} mutated")]
    SizeMismatch { healthy: usize, mutated: usize },
    #[error("probability vectors differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("not a probability vector: {0}")]
    NotNormalized(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Criterion {
    AVG,
    R,
    DtR,
}

impl Criterion {
    pub const ALL: [Criterion; 3] = [Criterion::AVG, Criterion::R, Criterion::DtR];

    pub fn as_str(self) -> &'static str {
        match self {
            Criterion::AVG => "AVG",
            Criterion::R => "R",
            Criterion::DtR => "DtR",
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Criterion {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "avg" => Ok(Criterion::AVG),
            "r" => Ok(Criterion::R),
            "dtr" => Ok(Criterion::DtR),
            _ => Err(format!("unknown criterion {s:?} (expected avg, r or dtr)")),
        }
    }
}

/// Outcome of one criterion on one (mutation, environment) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KillVerdict {
    pub criterion: Criterion,
    pub killed: bool,
    pub conclusive: bool,
    pub p_value: Option<f64>,
    #[serde(with = "signed_inf")]
    pub effect_size: Option<f64>,
    pub power: Option<f64>,
    pub ratio_fraction: Option<f64>,
}

/// JSON has no infinities; the degenerate-separation sentinel is written as "inf"/"-inf".
mod signed_inf {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(x) if *x == f64::INFINITY => "inf".serialize(s),
            Some(x) if *x == f64::NEG_INFINITY => "-inf".serialize(s),
            other => other.serialize(s),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        match Option::<Repr>::deserialize(d)? {
            None => Ok(None),
            Some(Repr::Num(x)) => Ok(Some(x)),
            Some(Repr::Text(t)) => match t.as_str() {
                "inf" => Ok(Some(f64::INFINITY)),
                "-inf" => Ok(Some(f64::NEG_INFINITY)),
                _ => Err(serde::de::Error::custom(format!("bad effect size {t:?}"))),
            },
        }
    }
}

pub fn mean<T: Scalar>(xs: &[T]) -> T {
    xs.iter().copied().sum::<T>() / T::from_usize_lossy(xs.len())
}

/// Unbiased sample variance.
pub fn variance<T: Scalar>(xs: &[T]) -> T {
    let m = mean(xs);
    xs.iter().map(|&x| (x - m) * (x - m)).sum::<T>() / T::from_usize_lossy(xs.len() - 1)
}

fn need_two<T>(a: &[T], b: &[T]) -> Result<(), StatsError> {
    for xs in [a, b] {
        if xs.len() < 2 {
            return Err(StatsError::TooFew { need: 2, got: xs.len() });
        }
    }
    Ok(())
}

/// Two-sided p-value of the two-group Gaussian linear model with unequal
/// variances (Welch's t-test, Satterthwaite degrees of freedom).
///
/// Both samples constant: p = 1 when the means agree, 0 otherwise.
pub fn welch_linear_test<T: Scalar>(a: &[T], b: &[T]) -> Result<T, StatsError> {
    need_two(a, b)?;
    let (na, nb) = (T::from_usize_lossy(a.len()), T::from_usize_lossy(b.len()));
    let (ma, mb) = (mean(a), mean(b));
    let (sa, sb) = (variance(a) / na, variance(b) / nb);
    let se2 = sa + sb;
    if se2 <= T::zero() {
        return Ok(if ma == mb { T::one() } else { T::zero() });
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / (sa * sa / (na - T::one()) + sb * sb / (nb - T::one()));
    Ok(student_t_two_sided(t, df).max(T::zero()).min(T::one()))
}

/// Cohen's d with the pooled standard deviation. Zero pooled deviation gives
/// 0 for equal means and a signed infinity otherwise.
pub fn cohens_d<T: Scalar>(a: &[T], b: &[T]) -> Result<T, StatsError> {
    need_two(a, b)?;
    let (na, nb) = (T::from_usize_lossy(a.len()), T::from_usize_lossy(b.len()));
    let pooled = ((na - T::one()) * variance(a) + (nb - T::one()) * variance(b)) / (na + nb - T::lit(2.0));
    let diff = mean(a) - mean(b);
    if pooled <= T::zero() {
        return Ok(if diff == T::zero() {
            T::zero()
        } else if diff > T::zero() {
            T::infinity()
        } else {
            T::neg_infinity()
        });
    }
    Ok(diff / pooled.sqrt())
}

/// Post-hoc power of a two-sided two-sample test, normal approximation.
pub fn posthoc_power<T: Scalar>(d: T, n_a: usize, n_b: usize, alpha: T) -> Result<T, StatsError> {
    if !(alpha > T::zero() && alpha < T::one()) {
        return Err(StatsError::InvalidParameter(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if d.is_nan() {
        return Err(StatsError::InvalidParameter("effect size is NaN".into()));
    }
    let (na, nb) = (T::from_usize_lossy(n_a), T::from_usize_lossy(n_b));
    let z = normal_quantile(T::one() - alpha / T::lit(2.0));
    if d.is_infinite() {
        return Ok(T::one());
    }
    let shift = d.abs() * (na * nb / (na + nb)).sqrt();
    Ok(normal_cdf(shift - z).max(T::zero()).min(T::one()))
}

/// The R gate on two raw samples: killed iff power ≥ 0.8, p < 0.05 and |d| ≥ 0.5.
pub fn gate<T: Scalar>(criterion: Criterion, a: &[T], b: &[T]) -> Result<KillVerdict, StatsError> {
    let p = welch_linear_test(a, b)?.to_f64_lossy();
    let d = cohens_d(a, b)?.to_f64_lossy();
    let power = posthoc_power(d, a.len(), b.len(), ALPHA)?;
    let conclusive = power >= POWER_THRESHOLD;
    Ok(KillVerdict {
        criterion,
        killed: conclusive && p < P_VALUE_THRESHOLD && d.abs() >= EFFECT_THRESHOLD,
        conclusive,
        p_value: Some(p),
        effect_size: Some(d),
        power: Some(power),
        ratio_fraction: None,
    })
}

fn same_size(healthy: &RewardSample, mutated: &RewardSample) -> Result<(), StatsError> {
    if healthy.n_agents() != mutated.n_agents() {
        return Err(StatsError::SizeMismatch { healthy: healthy.n_agents(), mutated: mutated.n_agents() });
    }
    Ok(())
}

/// R criterion on the per-agent mean returns.
pub fn r_killing(healthy: &RewardSample, mutated: &RewardSample) -> Result<KillVerdict, StatsError> {
    same_size(healthy, mutated)?;
    gate(Criterion::R, &healthy.agent_means(), &mutated.agent_means())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AvgParams {
    pub theta: f64,
    pub fraction: f64,
}

impl Default for AvgParams {
    fn default() -> Self {
        AvgParams { theta: 0.9, fraction: 0.8 }
    }
}

/// AVG criterion: agents paired by index, killed iff the share of pairs with
/// `mean(mutated_i) / mean(healthy_i) < theta` reaches `fraction`. Pairs
/// with a non-positive healthy mean are excluded; if none remain the verdict
/// is inconclusive.
pub fn avg_killing(healthy: &RewardSample, mutated: &RewardSample, params: AvgParams) -> Result<KillVerdict, StatsError> {
    same_size(healthy, mutated)?;
    if !(params.theta > 0.0 && params.theta < 1.0) {
        return Err(StatsError::InvalidParameter(format!("theta must lie in (0, 1), got {}", params.theta)));
    }
    if !(params.fraction > 0.0 && params.fraction <= 1.0) {
        return Err(StatsError::InvalidParameter(format!("fraction must lie in (0, 1], got {}", params.fraction)));
    }
    let (hm, mm) = (healthy.agent_means(), mutated.agent_means());
    let ratios: Vec<f64> = hm.iter().zip(&mm).filter(|(h, _)| **h > 0.0).map(|(h, m)| m / h).collect();
    if ratios.is_empty() {
        return Ok(KillVerdict {
            criterion: Criterion::AVG,
            killed: false,
            conclusive: false,
            p_value: None,
            effect_size: None,
            power: None,
            ratio_fraction: None,
        });
    }
    let below = ratios.iter().filter(|&&r| r < params.theta).count();
    let share = below as f64 / ratios.len() as f64;
    Ok(KillVerdict {
        criterion: Criterion::AVG,
        killed: share >= params.fraction,
        conclusive: true,
        p_value: None,
        effect_size: None,
        power: None,
        ratio_fraction: Some(share),
    })
}

/// Settings shared by all three criteria.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct CriteriaParams {
    pub avg: AvgParams,
    pub dtr: DtrParams,
    /// Seed of the DtR resampling stream.
    pub dtr_seed: u64,
}

/// Applies `criterion` to a (healthy, mutated) pair of populations.
pub fn decide(
    criterion: Criterion,
    healthy: &RewardSample,
    mutated: &RewardSample,
    params: &CriteriaParams,
) -> Result<KillVerdict, StatsError> {
    match criterion {
        Criterion::AVG => avg_killing(healthy, mutated, params.avg),
        Criterion::R => r_killing(healthy, mutated),
        Criterion::DtR => dtr_killing(healthy, mutated, &params.dtr, params.dtr_seed),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample(means: &[f64]) -> RewardSample {
        RewardSample::from_means(means).unwrap()
    }

    #[test]
    fn welch_identical_and_degenerate() {
        assert!((welch_linear_test(&[1.0f64, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(welch_linear_test(&[5.0, 5.0], &[5.0, 5.0, 5.0]).unwrap(), 1.0);
        assert_eq!(welch_linear_test(&[500.0; 4], &[10.0; 4]).unwrap(), 0.0);
        assert!(welch_linear_test(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn welch_matches_reference_value() {
        // scipy.stats.ttest_ind([1,2,3,4,5],[2,4,6,8,10], equal_var=False).pvalue
        let p = welch_linear_test(&[1.0f64, 2.0, 3.0, 4.0, 5.0], &[2.0, 4.0, 6.0, 8.0, 10.0]).unwrap();
        assert!((p - 0.10753119493062718).abs() < 1e-10, "{p}");
    }

    #[test]
    fn cohens_d_examples() {
        let d = cohens_d(&[0.0, 0.0, 1.0, 1.0], &[1.0, 1.0, 2.0, 2.0]).unwrap();
        // pooled variance is 1/3 and the mean difference -1
        assert!((d + 3f64.sqrt()).abs() < 1e-12);
        assert_eq!(cohens_d(&[3.0, 3.0], &[3.0, 3.0]).unwrap(), 0.0);
        assert_eq!(cohens_d(&[500.0, 500.0], &[10.0, 10.0]).unwrap(), f64::INFINITY);
        assert_eq!(cohens_d(&[10.0, 10.0], &[500.0, 500.0]).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn power_limits() {
        let p0 = posthoc_power(0.0f64, 20, 20, 0.05).unwrap();
        assert!((p0 - 0.025).abs() < 1e-9, "{p0}");
        assert_eq!(posthoc_power(f64::INFINITY, 3, 3, 0.05).unwrap(), 1.0);
        assert!(posthoc_power(50.0, 20, 20, 0.05).unwrap() > 1.0 - 1e-12);
        // Phi(sqrt(10) - 1.959964) by hand
        let p1 = posthoc_power(1.0f64, 20, 20, 0.05).unwrap();
        assert!((p1 - 0.885379).abs() < 1e-5, "{p1}");
        assert!(posthoc_power(1.0, 20, 20, 1.0).is_err());
    }

    #[test]
    fn r_examples() {
        let h = sample(&[480.0, 500.0, 470.0, 490.0, 500.0]);
        assert!(!r_killing(&h, &h).unwrap().killed);
        let v = r_killing(&sample(&[500.0; 10]), &sample(&[10.0; 10])).unwrap();
        assert!(v.killed && v.conclusive && v.p_value == Some(0.0));
        assert!(r_killing(&sample(&[1.0, 2.0]), &sample(&[1.0, 2.0, 3.0])).is_err());
    }

    #[test]
    fn gate_requires_effect_size() {
        // large n: tiny effect is significant yet below the |d| threshold
        let a: Vec<f64> = (0..4000).map(|i| (i % 100) as f64).collect();
        let b: Vec<f64> = a.iter().map(|x| x + 12.0).collect();
        let v = gate(Criterion::R, &a, &b).unwrap();
        assert!(v.p_value.unwrap() < 0.05 && v.effect_size.unwrap().abs() < 0.5 && v.conclusive);
        assert!(!v.killed);
    }

    #[test]
    fn avg_examples() {
        let h = sample(&[100.0; 20]);
        let v = avg_killing(&h, &h, AvgParams::default()).unwrap();
        assert_eq!((v.killed, v.ratio_fraction), (false, Some(0.0)));
        let mut m = vec![50.0; 19];
        m.push(100.0);
        let v = avg_killing(&h, &sample(&m), AvgParams::default()).unwrap();
        assert_eq!((v.killed, v.ratio_fraction), (true, Some(0.95)));
    }

    #[test]
    fn avg_excludes_nonpositive_healthy_means() {
        let v = avg_killing(&sample(&[0.0, -5.0, 10.0]), &sample(&[1.0, 1.0, 1.0]), AvgParams::default()).unwrap();
        assert_eq!(v.ratio_fraction, Some(1.0));
        let v = avg_killing(&sample(&[0.0, -5.0]), &sample(&[1.0, 1.0]), AvgParams::default()).unwrap();
        assert!(!v.conclusive && !v.killed && v.ratio_fraction.is_none());
    }

    #[test]
    fn verdict_json_fields() {
        let v = r_killing(&sample(&[500.0; 3]), &sample(&[10.0; 3])).unwrap();
        let json = serde_json::to_value(&v).unwrap();
        let keys: Vec<&str> = json.as_object().unwrap().keys().map(String::as_str).collect();
        let mut expected = ["criterion", "killed", "conclusive", "p_value", "effect_size", "power", "ratio_fraction"];
        expected.sort();
        let mut keys = keys;
        keys.sort();
        assert_eq!(keys, expected);
        assert_eq!(json["effect_size"], "inf");
        let back: KillVerdict = serde_json::from_value(json).unwrap();
        assert_eq!(back, v);
    }

    #[test]
    fn generic_over_f32() {
        let d = cohens_d(&[0.0f32, 0.0, 1.0, 1.0], &[1.0, 1.0, 2.0, 2.0]).unwrap();
        assert!((d + 3f32.sqrt()).abs() < 1e-5);
        let p = welch_linear_test(&[1.0f32, 2.0, 3.0, 4.0, 5.0], &[2.0, 4.0, 6.0, 8.0, 10.0]).unwrap();
        assert!((p - 0.107_531_19).abs() < 1e-4);
    }

    fn positive_means() -> impl Strategy<Value = Vec<(f64, f64, f64)>> {
        prop::collection::vec((0.1f64..1000.0, 0.0f64..1000.0, 0.01f64..100.0), 2..30)
    }

    proptest! {
        #[test]
        fn avg_invariant_under_pairwise_rescaling(rows in positive_means()) {
            let h: Vec<f64> = rows.iter().map(|r| r.0).collect();
            let m: Vec<f64> = rows.iter().map(|r| r.1).collect();
            let hs: Vec<f64> = rows.iter().map(|r| r.0 * r.2).collect();
            let ms: Vec<f64> = rows.iter().map(|r| r.1 * r.2).collect();
            let a = avg_killing(&sample(&h), &sample(&m), AvgParams::default()).unwrap();
            let b = avg_killing(&sample(&hs), &sample(&ms), AvgParams::default()).unwrap();
            prop_assert_eq!(a.killed, b.killed);
        }

        #[test]
        fn r_symmetric_under_swap(rows in prop::collection::vec((0.0f64..500.0, 0.0f64..500.0), 2..25)) {
            let h: Vec<f64> = rows.iter().map(|r| r.0).collect();
            let m: Vec<f64> = rows.iter().map(|r| r.1).collect();
            let a = r_killing(&sample(&h), &sample(&m)).unwrap();
            let b = r_killing(&sample(&m), &sample(&h)).unwrap();
            prop_assert!((a.p_value.unwrap() - b.p_value.unwrap()).abs() < 1e-12);
            prop_assert_eq!(a.effect_size.unwrap().abs(), b.effect_size.unwrap().abs());
            prop_assert_eq!(a.killed, b.killed);
        }

        #[test]
        fn killed_implies_conclusive(rows in prop::collection::vec((0.0f64..500.0, 0.0f64..500.0), 2..25)) {
            let h: Vec<f64> = rows.iter().map(|r| r.0).collect();
            let m: Vec<f64> = rows.iter().map(|r| r.1).collect();
            let v = r_killing(&sample(&h), &sample(&m)).unwrap();
            prop_assert!(!v.killed || v.conclusive);
            let p = v.p_value.unwrap();
            prop_assert!((0.0..=1.0).contains(&p));
        }
    }
}
