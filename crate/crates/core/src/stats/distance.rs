//! Hellinger distance between reward histograms and the DtR criterion.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{gate, Criterion, KillVerdict, StatsError};
use crate::agents::RewardSample;
use crate::seeding::rng_for;
use crate::Scalar;

const NORMALIZATION_TOLERANCE: f64 = 1e-9;
const BIN_FLOOR: f64 = 1e-12;

fn check_simplex<T: Scalar>(p: &[T]) -> Result<(), StatsError> {
    if p.iter().any(|&x| !(x >= T::zero()) || !x.is_finite()) {
        return Err(StatsError::NotNormalized("entries must be finite and nonnegative".into()));
    }
    let total = p.iter().copied().sum::<T>().to_f64_lossy();
    if (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
        return Err(StatsError::NotNormalized(format!("entries sum to {total}")));
    }
    Ok(())
}

/// Discrete Hellinger distance `(1/√2)·‖√p − √q‖₂`, in [0, 1].
pub fn hellinger<T: Scalar>(p: &[T], q: &[T]) -> Result<T, StatsError> {
    if p.len() != q.len() {
        return Err(StatsError::LengthMismatch(p.len(), q.len()));
    }
    check_simplex(p)?;
    check_simplex(q)?;
    let sq: T = p.iter().zip(q).map(|(&a, &b)| (a.sqrt() - b.sqrt()).powi(2)).sum();
    Ok((sq / T::lit(2.0)).sqrt().min(T::one()))
}

/// Normalized histogram of `values` over `bins` equal-width bins on `[lo, hi]`.
/// Every bin is floored at 1e-12 before normalization. A degenerate range
/// puts all mass in the first bin.
pub fn histogram(values: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    let mut counts = vec![0.0; bins];
    let width = (hi - lo) / bins as f64;
    for &v in values {
        let idx = if width > 0.0 { (((v - lo) / width) as usize).min(bins - 1) } else { 0 };
        counts[idx] += 1.0;
    }
    for c in &mut counts {
        *c = f64::max(*c, BIN_FLOOR);
    }
    let total: f64 = counts.iter().sum();
    counts.iter().map(|c| c / total).collect()
}

/// Hellinger distance between the histograms of two pooled samples, binned
/// over their shared range.
pub fn sample_distance(a: &[f64], b: &[f64], bins: usize) -> f64 {
    let (lo, hi) = a.iter().chain(b).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    hellinger(&histogram(a, lo, hi, bins), &histogram(b, lo, hi, bins)).expect("histograms are normalized")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceSamples {
    pub intra: Vec<f64>,
    pub inter: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DtrParams {
    /// Agents per subset; `None` means `min(10, N/2)`.
    pub subset_size: Option<usize>,
    pub resamples: usize,
    pub bins: usize,
}

impl Default for DtrParams {
    fn default() -> Self {
        DtrParams { subset_size: None, resamples: 30, bins: 10 }
    }
}

impl DtrParams {
    pub fn subset_for(&self, n_agents: usize) -> usize {
        self.subset_size.unwrap_or((n_agents / 2).min(10))
    }
}

fn pooled(sample: &RewardSample, idx: &[usize]) -> Vec<f64> {
    idx.iter().flat_map(|&i| sample.agent(i).iter().copied()).collect()
}

/// Resampled intra (healthy vs healthy) and inter (healthy vs mutated)
/// distances. Each resample shuffles the agent indices and takes two
/// disjoint subsets `A`, `B`; intra compares `healthy[A]` with `healthy[B]`
/// and inter compares `healthy[A]` with `mutated[B]`.
pub fn distance_samples(
    healthy: &RewardSample,
    mutated: &RewardSample,
    params: &DtrParams,
    rng_seed: u64,
) -> Result<DistanceSamples, StatsError> {
    let n = healthy.n_agents();
    if mutated.n_agents() != n {
        return Err(StatsError::SizeMismatch { healthy: n, mutated: mutated.n_agents() });
    }
    let k = params.subset_for(n);
    if k == 0 || 2 * k > n {
        return Err(StatsError::InvalidParameter(format!("subset size {k} needs 1 <= 2*k <= N = {n}")));
    }
    if params.resamples < 2 {
        return Err(StatsError::InvalidParameter("at least two resamples are required".into()));
    }
    if params.bins == 0 {
        return Err(StatsError::InvalidParameter("bins must be positive".into()));
    }
    let mut rng = rng_for(rng_seed, "dtr-resample");
    let mut idx: Vec<usize> = (0..n).collect();
    let mut out = DistanceSamples { intra: Vec::with_capacity(params.resamples), inter: Vec::with_capacity(params.resamples) };
    for _ in 0..params.resamples {
        idx.shuffle(&mut rng);
        let (a, b) = (&idx[..k], &idx[k..2 * k]);
        let base = pooled(healthy, a);
        out.intra.push(sample_distance(&base, &pooled(healthy, b), params.bins));
        out.inter.push(sample_distance(&base, &pooled(mutated, b), params.bins));
    }
    Ok(out)
}

/// DtR criterion: the R gate applied to the inter vs intra distance lists.
pub fn dtr_killing(
    healthy: &RewardSample,
    mutated: &RewardSample,
    params: &DtrParams,
    rng_seed: u64,
) -> Result<KillVerdict, StatsError> {
    let d = distance_samples(healthy, mutated, params, rng_seed)?;
    gate(Criterion::DtR, &d.inter, &d.intra)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hellinger_examples() {
        assert_eq!(hellinger(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), 0.0);
        assert!((hellinger(&[1.0f64, 0.0], &[0.0, 1.0]).unwrap() - 1.0).abs() < 1e-15);
        // sqrt(1 - (sqrt(0.45) + sqrt(0.05)))
        let h = hellinger(&[0.5f64, 0.5], &[0.9, 0.1]).unwrap();
        assert!((h - 0.324_919_696_232_906_3).abs() < 1e-12, "{h}");
        assert!(matches!(hellinger(&[0.5, 0.6], &[0.5, 0.5]), Err(StatsError::NotNormalized(_))));
        assert!(matches!(hellinger(&[1.0], &[0.5, 0.5]), Err(StatsError::LengthMismatch(1, 2))));
    }

    #[test]
    fn histogram_floors_and_normalizes() {
        let h = histogram(&[0.0, 0.0, 10.0], 0.0, 10.0, 10);
        assert!((h.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((h[0] - 2.0 / 3.0).abs() < 1e-9 && (h[9] - 1.0 / 3.0).abs() < 1e-9);
        assert!(h[5] > 0.0 && h[5] < 1e-11);
        // the floor leaves a residue of order sqrt(1e-12) when sample sizes differ
        assert!(sample_distance(&[3.0, 3.0], &[3.0], 10) < 1e-5);
        assert_eq!(sample_distance(&[3.0, 4.0], &[3.0, 4.0], 10), 0.0);
    }

    fn population(agents: usize, episodes: usize, f: impl Fn(usize, usize) -> f64) -> RewardSample {
        RewardSample::new((0..agents).map(|a| (0..episodes).map(|e| f(a, e)).collect()).collect()).unwrap()
    }

    #[test]
    fn dtr_identical_populations_are_never_killed() {
        let h = population(10, 10, |a, e| 100.0 + ((a * 7 + e * 13) % 23) as f64);
        let d = distance_samples(&h, &h, &DtrParams::default(), 3).unwrap();
        assert_eq!(d.intra, d.inter);
        let v = dtr_killing(&h, &h.clone(), &DtrParams::default(), 3).unwrap();
        assert!(!v.killed);
        assert_eq!(v.p_value, Some(1.0));
    }

    #[test]
    fn dtr_kills_shifted_population() {
        let h = population(20, 10, |a, e| 100.0 + ((a * 7 + e * 13) % 23) as f64);
        let m = population(20, 10, |a, e| 5000.0 + ((a * 3 + e * 5) % 17) as f64);
        let d = distance_samples(&h, &m, &DtrParams::default(), 9).unwrap();
        // disjoint supports: the shared range puts each sample at one end
        assert!(d.inter.iter().all(|&x| x > 0.9999));
        assert!(d.intra.iter().all(|&x| x < 0.5));
        assert!(dtr_killing(&h, &m, &DtrParams::default(), 9).unwrap().killed);
    }

    #[test]
    fn dtr_rejects_bad_subset() {
        let h = population(6, 2, |a, _| a as f64);
        let p = DtrParams { subset_size: Some(4), ..DtrParams::default() };
        assert!(dtr_killing(&h, &h, &p, 0).is_err());
        let p = DtrParams { subset_size: Some(7), ..DtrParams::default() };
        assert!(dtr_killing(&h, &h, &p, 0).is_err());
        assert_eq!(DtrParams::default().subset_for(20), 10);
        assert_eq!(DtrParams::default().subset_for(10), 5);
    }

    fn simplex(n: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0f64..1.0, n).prop_filter("nonzero", |v| v.iter().sum::<f64>() > 1e-6).prop_map(|v| {
            let s: f64 = v.iter().sum();
            v.into_iter().map(|x| x / s).collect()
        })
    }

    proptest! {
        #[test]
        fn hellinger_is_a_bounded_metric(p in simplex(6), q in simplex(6), r in simplex(6)) {
            let pq = hellinger(&p, &q).unwrap();
            prop_assert!((0.0..=1.0).contains(&pq));
            prop_assert_eq!(pq, hellinger(&q, &p).unwrap());
            prop_assert_eq!(hellinger(&p, &p).unwrap(), 0.0);
            let pr = hellinger(&p, &r).unwrap();
            let rq = hellinger(&r, &q).unwrap();
            prop_assert!(pq <= pr + rq + 1e-12);
        }

        #[test]
        fn dtr_is_deterministic_and_bounded(seed in any::<u64>(), shift in 0.0f64..300.0) {
            let h = population(10, 5, |a, e| ((a * 31 + e * 17) % 50) as f64);
            let m = population(10, 5, |a, e| shift + ((a * 11 + e * 19) % 50) as f64);
            let a = distance_samples(&h, &m, &DtrParams::default(), seed).unwrap();
            let b = distance_samples(&h, &m, &DtrParams::default(), seed).unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert_eq!(a.intra.len(), a.inter.len());
            prop_assert!(a.intra.iter().chain(&a.inter).all(|x| (0.0..=1.0).contains(x)));
        }
    }
}
