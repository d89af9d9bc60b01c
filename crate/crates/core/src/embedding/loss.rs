use crate::{Error, Result};

fn check_dims(dims: &[usize]) -> Result<()> {
    for &d in &dims[1..] {
        if d != dims[0] {
            return Err(Error::DimensionMismatch {
                expected: dims[0],
                found: d,
            });
        }
    }
    Ok(())
}

/// `max(0, v)` that keeps NaN visible instead of clamping it away.
fn hinge(v: f64) -> f64 {
    if v.is_nan() {
        v
    } else {
        v.max(0.0)
    }
}

/// Squared Euclidean distance.
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `[‖a−p‖² − ‖a−n‖² + m]₊`
pub fn triplet_loss(anchor: &[f64], positive: &[f64], negative: &[f64], margin: f64) -> Result<f64> {
    check_dims(&[anchor.len(), positive.len(), negative.len()])?;
    let value = squared_distance(anchor, positive) - squared_distance(anchor, negative) + margin;
    Ok(hinge(value))
}

/// Symmetric loss over two positives and the odd one out:
/// `[d(p1,p2) − d(n,p1) + m]₊ + [d(p1,p2) − d(n,p2) + m]₊`.
pub fn dual_triplet_loss(p1: &[f64], p2: &[f64], negative: &[f64], margin: f64) -> Result<f64> {
    Ok(dual_triplet_grad(p1, p2, negative, margin)?.loss)
}

/// Loss value and its gradient with respect to the three embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct DualTripletGrad {
    pub loss: f64,
    pub p1: Vec<f64>,
    pub p2: Vec<f64>,
    pub negative: Vec<f64>,
}

impl DualTripletGrad {
    pub fn is_zero(&self) -> bool {
        self.loss == 0.0
    }
}

/// Gradient of [`dual_triplet_loss`]. A hinge contributes only when its
/// argument is strictly positive, so the subgradient at the kink is zero.
pub fn dual_triplet_grad(
    p1: &[f64],
    p2: &[f64],
    negative: &[f64],
    margin: f64,
) -> Result<DualTripletGrad> {
    check_dims(&[p1.len(), p2.len(), negative.len()])?;
    let k = p1.len();
    let pos = squared_distance(p1, p2);
    let h1 = pos - squared_distance(negative, p1) + margin;
    let h2 = pos - squared_distance(negative, p2) + margin;
    let mut g = DualTripletGrad {
        loss: hinge(h1) + hinge(h2),
        p1: vec![0.0; k],
        p2: vec![0.0; k],
        negative: vec![0.0; k],
    };
    if h1 > 0.0 {
        for j in 0..k {
            g.p1[j] += 2.0 * (negative[j] - p2[j]);
            g.p2[j] += 2.0 * (p2[j] - p1[j]);
            g.negative[j] += 2.0 * (p1[j] - negative[j]);
        }
    }
    if h2 > 0.0 {
        for j in 0..k {
            g.p1[j] += 2.0 * (p1[j] - p2[j]);
            g.p2[j] += 2.0 * (negative[j] - p1[j]);
            g.negative[j] += 2.0 * (p2[j] - negative[j]);
        }
    }
    Ok(g)
}

/// `m_h + γ·d_H`: shrinks toward `m_h` for questions drawn from nodes whose
/// children are close together.
pub fn adaptive_margin(base: f64, gain: f64, diversity: f64) -> f64 {
    base + gain * diversity
}
