/// Generalized advantage estimation over one flat sequence.
///
/// `dones[t]` marks a terminal transition after step `t` (no bootstrap past
/// it). The value following the last step is `last_value`, which callers set
/// to `V(s_T)` for a truncated episode and `0` for a terminated one.
///
/// Returns `(advantages, returns)` with `returns[t] = advantages[t] + values[t]`.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    last_value: f64,
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    assert_eq!(values.len(), n, "values must align with rewards");
    assert_eq!(dones.len(), n, "dones must align with rewards");
    let mut adv = vec![0.0; n];
    let mut acc = 0.0;
    for t in (0..n).rev() {
        let not_done = if dones[t] { 0.0 } else { 1.0 };
        let next_v = if t + 1 < n { values[t + 1] } else { last_value };
        let delta = rewards[t] + gamma * next_v * not_done - values[t];
        acc = delta + gamma * lambda * not_done * acc;
        adv[t] = acc;
    }
    let ret = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, ret)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Direct double sum `A_t = sum_l (gamma lambda)^l delta_{t+l}`, stopping at
    /// the first terminal transition.
    fn brute_force(r: &[f64], v: &[f64], d: &[bool], last: f64, g: f64, l: f64) -> Vec<f64> {
        let n = r.len();
        let delta: Vec<f64> = (0..n)
            .map(|t| {
                let next = if t + 1 < n { v[t + 1] } else { last };
                r[t] + if d[t] { 0.0 } else { g * next } - v[t]
            })
            .collect();
        (0..n)
            .map(|t| {
                let mut sum = 0.0;
                for k in t..n {
                    sum += (g * l).powi((k - t) as i32) * delta[k];
                    if d[k] {
                        break;
                    }
                }
                sum
            })
            .collect()
    }

    #[test]
    fn single_terminal_step() {
        let (a, r) = compute_gae(&[2.0], &[0.5], &[true], 9.0, 0.99, 0.95);
        assert_eq!(a, vec![1.5]);
        assert_eq!(r, vec![2.0]);
    }

    #[test]
    fn lambda_zero_is_td_error() {
        let rw = [1.0, -1.0, 0.5];
        let v = [0.2, 0.3, -0.1];
        let (a, _) = compute_gae(&rw, &v, &[false, false, false], 0.7, 0.9, 0.0);
        assert_eq!(a[0], 1.0 + 0.9 * 0.3 - 0.2);
        assert_eq!(a[1], -1.0 + 0.9 * -0.1 - 0.3);
        assert_eq!(a[2], 0.5 + 0.9 * 0.7 + 0.1);
    }

    #[test]
    fn matches_brute_force_double_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let n = rng.random_range(1..=50);
            let r: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
            let v: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
            let d: Vec<bool> = (0..n).map(|_| rng.random_bool(0.1)).collect();
            let last = rng.random_range(-5.0..5.0);
            let (g, l) = (rng.random_range(0.5..1.0), rng.random_range(0.0..1.0));
            let (a, ret) = compute_gae(&r, &v, &d, last, g, l);
            let want = brute_force(&r, &v, &d, last, g, l);
            for t in 0..n {
                assert!((a[t] - want[t]).abs() < 1e-8);
                assert!((ret[t] - (a[t] + v[t])).abs() < 1e-12);
            }
        }
    }
}
