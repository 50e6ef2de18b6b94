//! Jensen-Shannon reconstruction loss and the squared-distance geometric loss.

use ndarray::{ArrayView1, ArrayView2};

use crate::scalar::Scalar;

/// Jensen-Shannon divergence in nats, with `0 * ln(0 / x) = 0`.
/// Mass where only one side is positive contributes `ln 2` per unit; it is
/// taken relative to the total mass so disjoint supports give `ln 2` exactly.
/// The result is clamped to `[0, ln 2]` against rounding.
pub fn jsd<T: Scalar>(p: ArrayView1<T>, q: ArrayView1<T>) -> T {
    assert_eq!(p.len(), q.len(), "distributions must have equal length");
    let half = T::of(0.5);
    let ln2 = T::of(std::f64::consts::LN_2);
    let mut shared = T::zero();
    let mut only = T::zero();
    let mut total = T::zero();
    for (&a, &b) in p.iter().zip(q.iter()) {
        total += a + b;
        if a > T::zero() && b > T::zero() {
            let m = (a + b) * half;
            shared += a * (a / m).ln() + b * (b / m).ln();
        } else {
            only += a + b;
        }
    }
    if total <= T::zero() {
        return T::zero();
    }
    let v = half * shared + ln2 * only / total;
    v.max(T::zero()).min(ln2)
}

/// `d JSD(p, q) / d q_k = ln(q_k / m_k) / 2`, written into `out`. Entries
/// with `q_k = 0` get zero (they are multiplied by `q_k` downstream).
pub fn jsd_grad_q<T: Scalar>(p: ArrayView1<T>, q: ArrayView1<T>, out: &mut [T]) {
    let half = T::of(0.5);
    for ((o, &a), &b) in out.iter_mut().zip(p.iter()).zip(q.iter()) {
        *o = if b > T::zero() {
            half * (b / ((a + b) * half)).ln()
        } else {
            T::zero()
        };
    }
}

/// Squared Euclidean distance `|z - z_target|^2`.
pub fn geometric_loss<T: Scalar>(z: ArrayView1<T>, target: ArrayView1<T>) -> T {
    z.iter()
        .zip(target.iter())
        .map(|(&a, &b)| (a - b) * (a - b))
        .fold(T::zero(), |acc, v| acc + v)
}

/// Per-batch loss components, each averaged over rows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParts<T> {
    pub recon: T,
    pub geo: T,
    pub total: T,
}

/// Mean over rows of `lambda * JSD(p_i, p̂_i) + (1 - lambda) * |z_i - z^G_i|^2`.
pub fn total_loss<T: Scalar>(
    batch_p: ArrayView2<T>,
    batch_target: ArrayView2<T>,
    latent: ArrayView2<T>,
    recon: ArrayView2<T>,
    lambda: T,
) -> LossParts<T> {
    let b = batch_p.nrows();
    assert_eq!(recon.dim(), batch_p.dim(), "reconstruction shape");
    assert_eq!(latent.dim(), batch_target.dim(), "latent shape");
    if b == 0 {
        return LossParts {
            recon: T::zero(),
            geo: T::zero(),
            total: T::zero(),
        };
    }
    let mut r = T::zero();
    let mut g = T::zero();
    for i in 0..b {
        r += jsd(batch_p.row(i), recon.row(i));
        g += geometric_loss(latent.row(i), batch_target.row(i));
    }
    let n = T::of_usize(b);
    let recon = r / n;
    let geo = g / n;
    LossParts {
        recon,
        geo,
        total: lambda * recon + (T::one() - lambda) * geo,
    }
}
