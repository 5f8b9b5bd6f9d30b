//! Running maxima and record events of a finite sequence.
//!
//! Indices are 1-based throughout, matching the usual statement of the
//! events: `M_k = max(s_1..s_k)`, `next(k) = min{ i > k : s_i >= M_k }`,
//! `A_k = {M_k < k^2}` and `B_k = {s_next(k) = M_k}`.

use super::{HeavyTailError, LemmaParams};

/// Statistics of one sequence over the finite horizon `m = s.len()`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrajectoryStats {
    running_max: Vec<u64>,
    next: Vec<Option<usize>>,
    a_events: Vec<bool>,
    b_events: Vec<Option<bool>>,
    ind_prime: usize,
    ind: Option<usize>,
}

fn square(k: usize) -> u64 {
    (k as u64).saturating_mul(k as u64)
}

impl TrajectoryStats {
    /// Single pass forward for the maxima, one backward for `next`.
    pub fn new(s: &[u64]) -> Result<Self, HeavyTailError> {
        if let Some(&bad) = s.iter().find(|&&x| x == 0) {
            return Err(HeavyTailError::OutOfSupport(bad));
        }
        let m = s.len();
        let mut running_max = Vec::with_capacity(m);
        let mut weak_record = vec![false; m];
        let mut best = 0;
        for (i, &x) in s.iter().enumerate() {
            if x >= best {
                weak_record[i] = i > 0;
                best = x;
            }
            running_max.push(best);
        }
        // next(k) is the first weak record strictly after k
        let mut next = vec![None; m];
        let mut upcoming = None;
        for k in (1..=m).rev() {
            next[k - 1] = upcoming;
            if weak_record[k - 1] {
                upcoming = Some(k);
            }
        }
        let a_events: Vec<bool> = (1..=m).map(|k| running_max[k - 1] < square(k)).collect();
        let b_events: Vec<Option<bool>> =
            (1..=m).map(|k| next[k - 1].map(|i| s[i - 1] == running_max[k - 1])).collect();
        let last_event = (1..=m).rev().find(|&k| a_events[k - 1] || b_events[k - 1] == Some(true));
        let ind_prime = last_event.map_or(1, |k| k + 1);
        let ind = if ind_prime <= m { next[ind_prime - 1] } else { None };
        Ok(TrajectoryStats { running_max, next, a_events, b_events, ind_prime, ind })
    }

    pub fn horizon(&self) -> usize {
        self.running_max.len()
    }

    pub fn max(&self, k: usize) -> u64 {
        self.running_max[k - 1]
    }

    /// `None` when no qualifying index exists within the horizon.
    pub fn next(&self, k: usize) -> Option<usize> {
        self.next[k - 1]
    }

    pub fn a(&self, k: usize) -> bool {
        self.a_events[k - 1]
    }

    /// `None` when `next(k)` lies beyond the horizon.
    pub fn b(&self, k: usize) -> Option<bool> {
        self.b_events[k - 1]
    }

    /// One past the last `k` at which `A_k` or a decided `B_k` occurs. Events
    /// undecided at the horizon are treated as not occurring.
    pub fn ind_prime(&self) -> usize {
        self.ind_prime
    }

    pub fn ind(&self) -> Option<usize> {
        self.ind
    }
}

/// Membership in the typical-sequence event: `max(s_1..s_K) <= N` and, for
/// every `K <= k <= m`, `M_k >= k^2` with the maximum attained exactly once
/// among `s_1..s_k`.
pub fn is_in_e(s: &[u64], params: &LemmaParams) -> Result<bool, HeavyTailError> {
    let m = s.len();
    if m as u64 != params.m {
        return Err(HeavyTailError::InvalidParams(format!(
            "sequence has length {m} but the parameters expect {}",
            params.m
        )));
    }
    if params.k == 0 || params.k > params.m {
        return Err(HeavyTailError::InvalidParams(format!("K = {} outside 1..={m}", params.k)));
    }
    let k0 = params.k as usize;
    let mut best = 0u64;
    let mut count = 0usize;
    for (i, &x) in s.iter().enumerate() {
        let k = i + 1;
        if x > best {
            best = x;
            count = 1;
        } else if x == best {
            count += 1;
        }
        if k == k0 && best > params.n {
            return Ok(false);
        }
        if k >= k0 && (best < square(k) || count != 1) {
            return Ok(false);
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params(k: u64, n: u64, m: u64) -> LemmaParams {
        LemmaParams { eps: 0.1, k, n, m }
    }

    #[test]
    fn running_max_and_horizon() {
        let t = TrajectoryStats::new(&[3, 1, 2]).unwrap();
        assert_eq!((1..=3).map(|k| t.max(k)).collect::<Vec<_>>(), vec![3, 3, 3]);
        assert_eq!(t.next(1), None);
        assert_eq!(t.b(1), None);
    }

    #[test]
    fn tie_counts_as_next() {
        let t = TrajectoryStats::new(&[1, 5, 5]).unwrap();
        assert_eq!(t.next(2), Some(3));
        assert_eq!(t.b(2), Some(true));
        assert_eq!(t.next(1), Some(2));
        assert_eq!(t.b(1), Some(false));
    }

    #[test]
    fn ind_follows_ind_prime() {
        let t = TrajectoryStats::new(&[1, 1, 20, 3, 30, 40, 60]).unwrap();
        // B_1 (tie at index 2) and A_2 (1 < 4) are the last events
        assert_eq!(t.b(1), Some(true));
        assert!(t.a(2) && !t.a(6));
        assert_eq!(t.ind_prime(), 3);
        assert_eq!(t.ind(), Some(5));
        assert_eq!(t.ind(), t.next(t.ind_prime()));
    }

    #[test]
    fn zero_is_rejected() {
        assert!(TrajectoryStats::new(&[1, 0]).is_err());
    }

    #[test]
    fn e_membership_cases() {
        assert!(is_in_e(&[1, 5, 9], &params(2, 5, 3)).unwrap());
        assert!(!is_in_e(&[1, 1, 1], &params(2, 5, 3)).unwrap());
        assert!(!is_in_e(&[1, 5, 9, 9], &params(2, 5, 4)).unwrap());
        assert!(!is_in_e(&[1, 6, 9], &params(2, 5, 3)).unwrap());
        assert!(is_in_e(&[1, 5], &params(3, 5, 2)).is_err());
        assert!(is_in_e(&[1, 5], &params(2, 5, 3)).is_err());
    }

    proptest! {
        #[test]
        fn maxima_recompute(s in proptest::collection::vec(1u64..50, 1..40)) {
            let t = TrajectoryStats::new(&s).unwrap();
            for k in 1..=s.len() {
                prop_assert_eq!(t.max(k), *s[..k].iter().max().unwrap());
                if k > 1 {
                    prop_assert!(t.max(k) >= t.max(k - 1));
                }
                let brute = (k + 1..=s.len()).find(|&i| s[i - 1] >= t.max(k));
                prop_assert_eq!(t.next(k), brute);
            }
            if t.ind_prime() <= s.len() {
                prop_assert_eq!(t.ind(), t.next(t.ind_prime()));
            }
        }

        #[test]
        fn membership_is_prefix_stable(s in proptest::collection::vec(1u64..2000, 3..30), k in 1u64..3) {
            let m = s.len() as u64;
            let p = params(k, 1000, m);
            if is_in_e(&s, &p).unwrap() {
                for m2 in k..=m {
                    prop_assert!(is_in_e(&s[..m2 as usize], &params(k, 1000, m2)).unwrap());
                }
            }
        }

        #[test]
        fn larger_n_never_hurts(s in proptest::collection::vec(1u64..2000, 4..30), n in 1u64..3000) {
            let m = s.len() as u64;
            if is_in_e(&s, &params(2, n, m)).unwrap() {
                prop_assert!(is_in_e(&s, &params(2, n + 1, m)).unwrap());
            }
        }
    }
}
