//! Non-cooperative sensing and access: channel weights, sequential sensing
//! order, average sensing time, access probabilities, and the utility of a
//! user acting alone under measured average interference.
//!
//! The probability kernels only need ring arithmetic and work over any
//! `Num + Copy` type, including exact rationals.

use std::cmp::Ordering;

use num_traits::Num;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::scenario::Scenario;

/// `theta * gain`: favours channels that are often idle and strong.
pub fn channel_weight<T: Num + Copy>(theta: T, gain: T) -> T {
    theta * gain
}

/// A user's channels in sensing order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderedChannelList {
    pub su: usize,
    pub channels: Vec<usize>,
}

/// Per-channel average interference from outside the user (or coalition), mW,
/// indexed by channel id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterferenceEstimate {
    pub per_channel: Vec<f64>,
}

impl InterferenceEstimate {
    pub fn zeros(n_channels: usize) -> Self {
        Self {
            per_channel: vec![0.0; n_channels],
        }
    }
}

/// Descending weight, ties by ascending channel id.
pub(crate) fn weight_order(a: (usize, f64), b: (usize, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

/// Sorts `channels` by the user's weights, strongest first.
pub fn order_by_weight(scenario: &Scenario, su: usize, channels: &[usize]) -> Vec<usize> {
    let mut weighted: Vec<(usize, f64)> = channels
        .iter()
        .map(|&k| (k, channel_weight(scenario.theta(k), scenario.channel_gain(su, k))))
        .collect();
    weighted.sort_by(|&a, &b| weight_order(a, b));
    weighted.into_iter().map(|(k, _)| k).collect()
}

pub fn noncoop_order(scenario: &Scenario, su: usize) -> Result<OrderedChannelList> {
    let known = &scenario.sus[su].known_channels;
    if known.is_empty() {
        return Err(Error::InvalidInput(format!("user {su} knows no channels")));
    }
    Ok(OrderedChannelList {
        su,
        channels: order_by_weight(scenario, su, known),
    })
}

pub fn ordered_thetas(scenario: &Scenario, channels: &[usize]) -> Vec<f64> {
    channels.iter().map(|&k| scenario.theta(k)).collect()
}

/// Expected slot fraction spent sensing when channels are probed in the given
/// order: `j * alpha` if the `j`-th channel is the first idle one, the whole
/// slot if all are busy.
pub fn sensing_time<T: Num + Copy>(thetas_in_order: &[T], alpha: T) -> T {
    let mut tau = T::zero();
    let mut all_busy = T::one();
    let mut elapsed = T::zero();
    for &theta in thetas_in_order {
        elapsed = elapsed + alpha;
        tau = tau + elapsed * theta * all_busy;
        all_busy = all_busy * (T::one() - theta);
    }
    tau + all_busy
}

/// Probability of transmitting at each position of a sensing order, plus the
/// probability that every channel is busy.
#[derive(Debug, Clone, PartialEq)]
pub struct AccessProfile<T> {
    pub per_position: Vec<T>,
    pub all_busy: T,
}

pub fn access_probabilities<T: Num + Copy>(thetas_in_order: &[T]) -> AccessProfile<T> {
    let mut all_busy = T::one();
    let per_position = thetas_in_order
        .iter()
        .map(|&theta| {
            let p = theta * all_busy;
            all_busy = all_busy * (T::one() - theta);
            p
        })
        .collect();
    AccessProfile {
        per_position,
        all_busy,
    }
}

/// Shannon rate in bits/s/Hz at SINR `gain * power / (noise + interference)`.
pub fn rate<F: Scalar>(gain: F, power: F, noise: F, interference: F) -> F {
    (F::one() + gain * power / (noise + interference)).log2()
}

/// `sum_j access[j] * rate[j]`.
pub fn average_capacity<F: Scalar>(access: &[F], rates: &[F]) -> F {
    access
        .iter()
        .zip(rates)
        .fold(F::zero(), |acc, (&p, &c)| acc + p * c)
}

/// Average capacity of a lone user transmitting at full power on the first idle
/// channel of `ordered`.
pub fn noncoop_capacity(
    scenario: &Scenario,
    su: usize,
    ordered: &OrderedChannelList,
    ext: &InterferenceEstimate,
) -> f64 {
    let phys = &scenario.phys;
    let access = access_probabilities(&ordered_thetas(scenario, &ordered.channels));
    let rates: Vec<f64> = ordered
        .channels
        .iter()
        .map(|&k| {
            rate(
                scenario.channel_gain(su, k),
                phys.p_max,
                phys.noise,
                ext.per_channel[k],
            )
        })
        .collect();
    average_capacity(&access.per_position, &rates)
}

/// `C * (1 - tau)` for a user acting alone.
pub fn noncoop_utility(scenario: &Scenario, su: usize, ext: &InterferenceEstimate) -> Result<f64> {
    let ordered = noncoop_order(scenario, su)?;
    let capacity = noncoop_capacity(scenario, su, &ordered, ext);
    let tau = sensing_time(
        &ordered_thetas(scenario, &ordered.channels),
        scenario.phys.alpha,
    );
    Ok(capacity * (1.0 - tau))
}

/// Expected interference each user sees when everyone acts alone: the sum over
/// other users of `g * p_max * Pr(that user transmits on the channel)`.
pub fn noncoop_external_interference(scenario: &Scenario) -> Result<Vec<InterferenceEstimate>> {
    let n = scenario.n_sus();
    let k = scenario.n_channels();
    let p_max = scenario.phys.p_max;
    let mut transmit = vec![vec![0.0; k]; n];
    for (su, row) in transmit.iter_mut().enumerate() {
        let ordered = noncoop_order(scenario, su)?;
        let access = access_probabilities(&ordered_thetas(scenario, &ordered.channels));
        for (&ch, &p) in ordered.channels.iter().zip(&access.per_position) {
            row[ch] = p;
        }
    }
    Ok((0..n)
        .map(|i| {
            let mut est = InterferenceEstimate::zeros(k);
            for j in (0..n).filter(|&j| j != i) {
                for ch in 0..k {
                    est.per_channel[ch] += scenario.channel_gain(j, ch) * p_max * transmit[j][ch];
                }
            }
            est
        })
        .collect())
}

/// Utilities of every user in the fully non-cooperative network.
pub fn noncoop_profile(scenario: &Scenario) -> Result<Vec<f64>> {
    let ext = noncoop_external_interference(scenario)?;
    (0..scenario.n_sus())
        .map(|i| noncoop_utility(scenario, i, &ext[i]))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::PhysParams;
    use crate::ExactProb;
    use proptest::prelude::*;

    fn phys() -> PhysParams {
        PhysParams {
            area_side: 10_000.0,
            ..PhysParams::default()
        }
    }

    /// One user at distance 1 m so that `g == a`.
    fn lone(thetas: Vec<f64>, amps: Vec<f64>) -> Scenario {
        let k = thetas.len();
        Scenario::from_parts(
            thetas,
            vec![[1.0, 0.0]],
            vec![(0..k).collect()],
            vec![amps],
            PhysParams {
                p_max: 1.0,
                noise: 1.0,
                ..phys()
            },
            0,
        )
        .unwrap()
    }

    #[test]
    fn weights() {
        assert_eq!(channel_weight(0.0, 5.0), 0.0);
        assert_eq!(channel_weight(1.0, 3.5), 3.5);
        assert_eq!(channel_weight(0.5, 2.0), 1.0);
    }

    #[test]
    fn order_two_channels() {
        // weights ch0: 0.9, ch1: 0.3
        let s = lone(vec![0.9, 0.3], vec![1.0, 1.0]);
        assert_eq!(noncoop_order(&s, 0).unwrap().channels, vec![0, 1]);
        let s = lone(vec![0.3, 0.9], vec![1.0, 1.0]);
        assert_eq!(noncoop_order(&s, 0).unwrap().channels, vec![1, 0]);
    }

    #[test]
    fn order_tie_break_by_id() {
        let mut s = lone(vec![0.5, 0.5, 0.5, 0.5], vec![1.0; 4]);
        s.sus[0].known_channels = vec![3, 1];
        assert_eq!(noncoop_order(&s, 0).unwrap().channels, vec![1, 3]);
    }

    #[test]
    fn empty_knowledge_is_rejected() {
        let mut s = lone(vec![0.5], vec![1.0]);
        s.sus[0].known_channels.clear();
        assert!(matches!(noncoop_order(&s, 0), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn sensing_time_examples() {
        assert!((sensing_time(&[1.0f64], 0.05) - 0.05).abs() < 1e-15);
        assert_eq!(sensing_time(&[0.0], 0.05), 1.0);
        assert!((sensing_time(&[0.5f64, 0.5], 0.05) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn sensing_time_exact_rational() {
        let half = ExactProb::new(1, 2);
        let alpha = ExactProb::new(1, 20);
        assert_eq!(sensing_time(&[half, half], alpha), ExactProb::new(3, 10));
    }

    #[test]
    fn access_examples() {
        let p = access_probabilities(&[1.0, 0.3, 0.7]);
        assert_eq!(p.per_position, vec![1.0, 0.0, 0.0]);
        let p = access_probabilities(&[0.8f64, 0.5]);
        assert!((p.per_position[0] - 0.8).abs() < 1e-15);
        assert!((p.per_position[1] - 0.1).abs() < 1e-15);
        assert!((p.all_busy - 0.1).abs() < 1e-15);
    }

    #[test]
    fn capacity_examples() {
        // SNR 1 on the only channel
        let s = lone(vec![1.0], vec![1.0]);
        let ord = noncoop_order(&s, 0).unwrap();
        let c = noncoop_capacity(&s, 0, &ord, &InterferenceEstimate::zeros(1));
        assert!((c - 1.0).abs() < 1e-15);
        assert!((noncoop_utility(&s, 0, &InterferenceEstimate::zeros(1)).unwrap() - 0.95).abs() < 1e-15);

        let s = lone(vec![0.0, 0.0], vec![3.0, 1.0]);
        let ord = noncoop_order(&s, 0).unwrap();
        assert_eq!(noncoop_capacity(&s, 0, &ord, &InterferenceEstimate::zeros(2)), 0.0);
        assert_eq!(noncoop_utility(&s, 0, &InterferenceEstimate::zeros(2)).unwrap(), 0.0);

        // thetas (0.8, 0.5), SNRs (3, 1): 0.8 * 2 + 0.1 * 1
        let s = lone(vec![0.8, 0.5], vec![3.0, 1.0]);
        let ord = noncoop_order(&s, 0).unwrap();
        assert_eq!(ord.channels, vec![0, 1]);
        let c = noncoop_capacity(&s, 0, &ord, &InterferenceEstimate::zeros(2));
        assert!((c - 1.7).abs() < 1e-14);
    }

    #[test]
    fn utility_composition() {
        // C = 1.7 and tau = 0.3 give 1.19
        assert!((1.7f64 * (1.0 - sensing_time(&[0.5, 0.5], 0.05)) - 1.19).abs() < 1e-14);
    }

    fn pair(known: [Vec<usize>; 2]) -> Scenario {
        let [a, b] = known;
        Scenario::from_parts(
            vec![0.6, 0.8, 0.3],
            vec![[100.0, 0.0], [0.0, 200.0]],
            vec![a, b],
            vec![vec![1.0, 0.5, 2.0], vec![0.7, 1.3, 0.9]],
            phys(),
            0,
        )
        .unwrap()
    }

    #[test]
    fn lone_user_sees_no_interference() {
        let s = lone(vec![0.3, 0.6], vec![1.0, 1.0]);
        let ext = noncoop_external_interference(&s).unwrap();
        assert_eq!(ext[0].per_channel, vec![0.0, 0.0]);
    }

    #[test]
    fn disjoint_users_do_not_interfere() {
        let s = pair([vec![0], vec![1, 2]]);
        let ext = noncoop_external_interference(&s).unwrap();
        assert_eq!(ext[0].per_channel[0], 0.0);
        assert_eq!(ext[1].per_channel[1], 0.0);
        assert_eq!(ext[1].per_channel[2], 0.0);
    }

    #[test]
    fn shared_channel_single_term() {
        // user 1 orders its channels {1, 0}: w(1) = 0.8 g, w(0) = 0.6 * 0.538 g
        let s = pair([vec![0], vec![0, 1]]);
        let ord1 = noncoop_order(&s, 1).unwrap();
        assert_eq!(ord1.channels, vec![1, 0]);
        let pr_other_on_0 = 0.6 * (1.0 - 0.8);
        let expect = s.channel_gain(1, 0) * s.phys.p_max * pr_other_on_0;
        let ext = noncoop_external_interference(&s).unwrap();
        assert!((ext[0].per_channel[0] - expect).abs() <= 1e-15 * expect);
    }

    /// Brute force: sum over idle/busy realizations of the slot time.
    fn enumerated_sensing_time(thetas: &[f64], alpha: f64) -> f64 {
        let k = thetas.len();
        (0u32..1 << k)
            .map(|mask| {
                let p: f64 = (0..k)
                    .map(|j| if mask >> j & 1 == 1 { thetas[j] } else { 1.0 - thetas[j] })
                    .product();
                let t = (0..k)
                    .find(|&j| mask >> j & 1 == 1)
                    .map_or(1.0, |j| (j + 1) as f64 * alpha);
                p * t
            })
            .sum()
    }

    proptest! {
        #[test]
        fn sensing_time_matches_enumeration(
            thetas in prop::collection::vec(0.0f64..=1.0, 1..=10),
            alpha in 0.001f64..0.999,
        ) {
            let closed = sensing_time(&thetas, alpha);
            prop_assert!((closed - enumerated_sensing_time(&thetas, alpha)).abs() < 1e-12);
            // each realisation costs either j*alpha or the full slot
            let worst = (thetas.len() as f64 * alpha).max(1.0);
            prop_assert!(closed >= alpha - 1e-12 && closed <= worst + 1e-12);
        }

        #[test]
        fn access_mass_is_one(thetas in prop::collection::vec(0.0f64..=1.0, 0..=12)) {
            let p = access_probabilities(&thetas);
            let total: f64 = p.per_position.iter().sum::<f64>() + p.all_busy;
            prop_assert!((total - 1.0).abs() < 1e-12);
        }

        #[test]
        fn access_mass_is_exactly_one_over_rationals(
            nums in prop::collection::vec(0i128..=100, 0..=8),
        ) {
            let thetas: Vec<ExactProb> = nums.iter().map(|&n| ExactProb::new(n, 100)).collect();
            let p = access_probabilities(&thetas);
            let total = p.per_position.iter().fold(p.all_busy, |a, &b| a + b);
            prop_assert_eq!(total, ExactProb::from_integer(1));
        }

        #[test]
        fn utility_non_increasing_in_alpha(
            thetas in prop::collection::vec(0.0f64..=1.0, 1..=6),
            a1 in 0.001f64..0.999,
            a2 in 0.001f64..0.999,
        ) {
            let (lo, hi) = if a1 <= a2 { (a1, a2) } else { (a2, a1) };
            let k = thetas.len();
            let mut s = lone(thetas, vec![1.0; k]);
            s.phys.alpha = lo;
            let u_lo = noncoop_utility(&s, 0, &InterferenceEstimate::zeros(k)).unwrap();
            s.phys.alpha = hi;
            let u_hi = noncoop_utility(&s, 0, &InterferenceEstimate::zeros(k)).unwrap();
            prop_assert!(u_hi <= u_lo + 1e-15);
        }

        #[test]
        fn interference_never_helps(
            thetas in prop::collection::vec(0.0f64..=1.0, 1..=6),
            ch in 0usize..6,
            extra in 0.0f64..10.0,
        ) {
            let k = thetas.len();
            let s = lone(thetas, vec![1.0; k]);
            let ord = noncoop_order(&s, 0).unwrap();
            let base = InterferenceEstimate::zeros(k);
            let mut more = base.clone();
            more.per_channel[ch % k] += extra;
            prop_assert!(
                noncoop_capacity(&s, 0, &ord, &more) <= noncoop_capacity(&s, 0, &ord, &base)
            );
        }

        #[test]
        fn order_matches_reference_sort(
            thetas in prop::collection::vec(0.0f64..=1.0, 5),
            amps in prop::collection::vec(0.01f64..3.0, 5),
        ) {
            let s = lone(thetas.clone(), amps.clone());
            let got = noncoop_order(&s, 0).unwrap().channels;
            // selection sort by (weight desc, id asc)
            let mut left: Vec<usize> = (0..5).collect();
            let mut want = Vec::new();
            while !left.is_empty() {
                let mut best = 0;
                for idx in 1..left.len() {
                    let (a, b) = (left[idx], left[best]);
                    let (wa, wb) = (thetas[a] * amps[a], thetas[b] * amps[b]);
                    if wa > wb || (wa == wb && a < b) {
                        best = idx;
                    }
                }
                want.push(left.remove(best));
            }
            prop_assert_eq!(got, want);
        }
    }
}
