use serde::{Deserialize, Serialize};

/// Dirichlet posterior over the probabilities of picking each slot of a
/// question: prior `alpha` updated with answer counts from similar questions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirichletStats {
    pub alpha: [f64; 3],
    pub counts: [u64; 3],
}

impl DirichletStats {
    pub fn new(alpha: [f64; 3], counts: [u64; 3]) -> Self {
        assert!(
            alpha.iter().all(|a| *a > 0.0 && a.is_finite()),
            "Dirichlet prior must be strictly positive"
        );
        Self { alpha, counts }
    }

    pub fn uniform(counts: [u64; 3]) -> Self {
        Self::new([1.0; 3], counts)
    }

    /// Posterior concentration `alpha + counts`.
    pub fn posterior(&self) -> [f64; 3] {
        [0, 1, 2].map(|j| self.alpha[j] + self.counts[j] as f64)
    }

    pub fn total_counts(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn posterior_mean(&self) -> [f64; 3] {
        let a = self.posterior();
        let total: f64 = a.iter().sum();
        a.map(|x| x / total)
    }
}

/// Largest posterior mean probability, `max_j α̃_j / α̃_0`.
pub fn expected_max(stats: &DirichletStats) -> f64 {
    stats.posterior_mean().into_iter().fold(f64::MIN, f64::max)
}

/// Sum of the posterior marginal variances,
/// `Σ_j α̃_j (α̃_0 − α̃_j) / (α̃_0² (α̃_0 + 1))`.
pub fn variance_sum(stats: &DirichletStats) -> f64 {
    let a = stats.posterior();
    let a0: f64 = a.iter().sum();
    a.iter().map(|aj| aj * (a0 - aj)).sum::<f64>() / (a0 * a0 * (a0 + 1.0))
}
