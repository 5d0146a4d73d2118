//! Seed derivation and the few sampling helpers the simulator needs.
//!
//! Every random stream in a run is derived from one root seed. A stream is
//! identified by a subsystem label (and optionally an index such as a user id);
//! its seed is the first eight bytes (little endian) of
//! `SHA-256("<root>/<label>/<index>")`. Streams for different subsystems are
//! therefore independent of one another and of the order in which the
//! simulation consumes them, which is what paired-seed comparisons rely on.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use sha2::{Digest, Sha256};

pub type SimRng = ChaCha8Rng;

/// Derives a 64-bit seed for `label`/`index` from the root seed.
pub fn derive_seed(root: u64, label: &str, index: u64) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(format!("{root}/{label}/{index}").as_bytes());
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

pub fn stream(root: u64, label: &str, index: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(derive_seed(root, label, index))
}

/// Counter-based uniform draw in `[0, 1)` keyed by `(label, a, b)`.
pub fn keyed_uniform(root: u64, label: &str, a: u64, b: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(root, label, a));
    rng.set_stream(b);
    rng.random::<f64>()
}

/// Poisson quantile function: the smallest `n` with `P(N <= n) >= u`.
///
/// Monotone in both `u` and `mean`, so a fixed `u` couples draws across
/// different means. Falls back to the normal approximation for very large
/// means where the pmf underflows.
pub fn poisson_quantile(mean: f64, u: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    if mean > 600.0 {
        let z = inverse_normal_cdf(u.clamp(1e-12, 1.0 - 1e-12));
        return (mean + z * mean.sqrt()).round().max(0.0) as u64;
    }
    let mut n = 0u64;
    let mut pmf = (-mean).exp();
    let mut cdf = pmf;
    while cdf < u {
        n += 1;
        pmf *= mean / n as f64;
        cdf += pmf;
        if pmf < 1e-300 && n as f64 > mean {
            break;
        }
    }
    n
}

/// Poisson draw with the given mean.
pub fn sample_poisson<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    match Poisson::new(mean) {
        Ok(dist) => dist.sample(rng) as u64,
        Err(_) => 0,
    }
}

/// Acklam's rational approximation of the standard normal quantile.
fn inverse_normal_cdf(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e1,
        2.209460984245205e2,
        -2.759285104469687e2,
        1.383577518672690e2,
        -3.066479806614716e1,
        2.506628277459239,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e1,
        1.615858368580409e2,
        -1.556989798598866e2,
        6.680131188771972e1,
        -1.328068155288572e1,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-3,
        -3.223964580411365e-1,
        -2.400758277161838,
        -2.549732539343734,
        4.374664141464968,
        2.938163982698783,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-3,
        3.224671290700398e-1,
        2.445134137142996,
        3.754408661907416,
    ];
    let p_low = 0.02425;
    if p < p_low {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - p_low {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -inverse_normal_cdf(1.0 - p)
    }
}
