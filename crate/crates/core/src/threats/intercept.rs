use crate::numerics::WeightVector;
use crate::{Error, Result, Scalar};

/// Weights seen on a tapped line in one round.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot<T> {
    pub round: usize,
    pub weights: WeightVector<T>,
}

/// Everything an eavesdropper recorded from one victim's line.
#[derive(Debug, Clone, PartialEq)]
pub struct InterceptedTrace<T> {
    pub victim: usize,
    snapshots: Vec<Snapshot<T>>,
}

impl<T: Scalar> InterceptedTrace<T> {
    pub fn new(victim: usize) -> Self {
        Self {
            victim,
            snapshots: Vec::new(),
        }
    }

    /// Appends a snapshot; rounds must strictly increase.
    pub fn observe(&mut self, round: usize, weights: WeightVector<T>) -> Result<()> {
        if let Some(last) = self.snapshots.last() {
            if round <= last.round {
                return Err(Error::invalid(format!(
                    "snapshot for round {round} after round {}",
                    last.round
                )));
            }
            weights.check_dim(&last.weights)?;
        }
        self.snapshots.push(Snapshot { round, weights });
        Ok(())
    }

    pub fn snapshots(&self) -> &[Snapshot<T>] {
        &self.snapshots
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    /// Indices `i` such that snapshots `i` and `i + 1` are from adjacent rounds.
    pub fn consecutive_pairs(&self) -> impl Iterator<Item = usize> + '_ {
        self.snapshots
            .windows(2)
            .enumerate()
            .filter(|(_, w)| w[1].round == w[0].round + 1)
            .map(|(i, _)| i)
    }
}

/// `(before − after) / γ` from snapshots `pair` and `pair + 1`.
///
/// The result equals the victim's gradient only when nothing but one local
/// step happened between the two snapshots.
pub fn infer_gradient<T: Scalar>(
    trace: &InterceptedTrace<T>,
    pair: usize,
    gamma: T,
) -> Result<WeightVector<T>> {
    if gamma == T::zero() {
        return Err(Error::invalid(
            "cannot infer a gradient with a zero learning rate",
        ));
    }
    let s = trace.snapshots();
    if pair + 1 >= s.len() {
        return Err(Error::invalid(format!(
            "no snapshot pair at {pair} in a trace of {}",
            s.len()
        )));
    }
    let (before, after) = (&s[pair], &s[pair + 1]);
    if after.round != before.round + 1 {
        return Err(Error::invalid(format!(
            "snapshots from rounds {} and {} are not consecutive",
            before.round, after.round
        )));
    }
    Ok(before.weights.sub(&after.weights)?.scaled(T::one() / gamma))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{local_step, NoiseModel, QuadraticTask};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn wv(v: &[f64]) -> WeightVector<f64> {
        WeightVector::from(v.to_vec())
    }

    #[test]
    fn unchanged_weights_give_zero() {
        let mut t = InterceptedTrace::new(0);
        t.observe(1, wv(&[1.0, 2.0])).unwrap();
        t.observe(2, wv(&[1.0, 2.0])).unwrap();
        assert_eq!(infer_gradient(&t, 0, 0.1).unwrap().as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn arithmetic_example() {
        let mut t = InterceptedTrace::new(0);
        t.observe(4, wv(&[1.0])).unwrap();
        t.observe(5, wv(&[0.9])).unwrap();
        let g = infer_gradient(&t, 0, 0.1).unwrap();
        assert!((g[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        let mut t = InterceptedTrace::new(0);
        t.observe(1, wv(&[1.0])).unwrap();
        t.observe(3, wv(&[0.5])).unwrap();
        assert!(infer_gradient(&t, 0, 0.1).is_err());
        assert!(infer_gradient(&t, 0, 0.0).is_err());
        assert!(infer_gradient(&t, 1, 0.1).is_err());
        assert!(t.observe(3, wv(&[0.1])).is_err());
        assert!(t.observe(4, wv(&[0.1, 0.2])).is_err());
        assert_eq!(t.consecutive_pairs().count(), 0);
    }

    #[test]
    fn recovers_local_step_gradient() {
        let task = QuadraticTask::diagonal(vec![1.5, 3.0], vec![0.2, -0.7]).unwrap();
        let theta = wv(&[0.3, 0.9]);
        let g = task.gradient(&theta).unwrap();
        let gamma = 0.125;
        let after = local_step(
            &theta,
            &g,
            gamma,
            &NoiseModel::disabled(),
            &mut ChaCha8Rng::seed_from_u64(0),
        )
        .unwrap();
        let mut t = InterceptedTrace::new(2);
        t.observe(0, theta).unwrap();
        t.observe(1, after).unwrap();
        let inferred = infer_gradient(&t, 0, gamma).unwrap();
        for (a, b) in inferred.iter().zip(g.iter()) {
            assert!((a - b).abs() < 1e-14);
        }
    }
}
