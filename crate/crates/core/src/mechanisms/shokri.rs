//! Shokri's optimal mechanism: the channel that maximizes the adversary's
//! expected inference loss under a bound on the expected quality loss.

use crate::alphabet::Alphabet;
use crate::distributions::Distribution;
use crate::error::{Error, Result};
use crate::lp::{solve, LinearProgram, LpStatus, Relation, Sense};

use super::{Channel, DenseChannel, Mechanism};

/// Largest alphabet accepted by the dense LP (k² + k variables).
pub const MAX_SHOKRI_SIZE: usize = 32;

/// Solver output entries below this magnitude are treated as zero.
const ROUNDOFF: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct ShokriSolution {
    pub channel: DenseChannel,
    /// LP optimum, the adversary's expected loss.
    pub objective: f64,
    /// Expected quality loss of the returned channel.
    pub quality: f64,
}

/// `Σ_y min_z Σ_x π_x A_xy ℓ(x,z)`: loss of an adversary that guesses the
/// Bayes-optimal `z` for every observation `y`.
pub fn adversary_loss(channel: &DenseChannel, profile: &[f64], loss: &[f64]) -> f64 {
    let k = channel.rows();
    (0..channel.cols())
        .map(|y| {
            (0..k)
                .map(|z| (0..k).map(|x| profile[x] * channel.get(x, y) * loss[x * k + z]).sum::<f64>())
                .fold(f64::INFINITY, f64::min)
        })
        .sum()
}

/// `Σ_x π_x Σ_z A_xz ℓ(x,z)`
pub fn quality_loss(channel: &DenseChannel, profile: &[f64], loss: &[f64]) -> f64 {
    let k = channel.rows();
    (0..k)
        .map(|x| profile[x] * (0..channel.cols()).map(|z| channel.get(x, z) * loss[x * k + z]).sum::<f64>())
        .sum()
}

/// Shokri's mechanism on a metric alphabet with `ℓ = dist`.
pub fn shokri(alphabet: &Alphabet, profile: &Distribution, q_max: f64) -> Result<Channel> {
    if profile.len() != alphabet.size() {
        return Err(Error::DimensionMismatch(format!(
            "profile has {} entries for an alphabet of {}",
            profile.len(),
            alphabet.size()
        )));
    }
    if alphabet.size() > MAX_SHOKRI_SIZE {
        return Err(Error::TooLarge(format!(
            "Shokri LP on {} symbols exceeds the cap of {MAX_SHOKRI_SIZE}",
            alphabet.size()
        )));
    }
    Ok(shokri_solve(&alphabet.distance_matrix(), profile, q_max)?.channel.into())
}

/// Solve the linearized program for an arbitrary `k × k` loss matrix.
///
/// Variables are `A` (row-major) followed by one `t_y` per observation.
pub fn shokri_solve(loss: &[f64], profile: &Distribution, q_max: f64) -> Result<ShokriSolution> {
    let k = profile.len();
    if loss.len() != k * k {
        return Err(Error::DimensionMismatch(format!("loss has {} entries for k = {k}", loss.len())));
    }
    if k > MAX_SHOKRI_SIZE {
        return Err(Error::TooLarge(format!("Shokri LP on {k} symbols exceeds the cap of {MAX_SHOKRI_SIZE}")));
    }
    if !(q_max >= 0.0 && q_max.is_finite()) {
        return Err(Error::InvalidParameter(format!("quality bound must be non-negative, got {q_max}")));
    }
    if loss.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
        return Err(Error::InvalidParameter("losses must be finite and non-negative".into()));
    }
    let pi = profile.probs();
    let nv = k * k + k;
    let a = |x: usize, z: usize| x * k + z;
    let t = |y: usize| k * k + y;

    let mut objective = vec![0.0; nv];
    (0..k).for_each(|y| objective[t(y)] = 1.0);
    let mut lp = LinearProgram::new(objective, Sense::Maximize);

    // t_y − Σ_x π_x ℓ(x,z) A_xy ≤ 0
    for y in 0..k {
        for z in 0..k {
            let mut c = vec![0.0; nv];
            c[t(y)] = 1.0;
            for x in 0..k {
                c[a(x, y)] = -pi[x] * loss[x * k + z];
            }
            lp.constrain(c, Relation::Le, 0.0);
        }
    }
    let mut quality = vec![0.0; nv];
    for x in 0..k {
        for z in 0..k {
            quality[a(x, z)] = pi[x] * loss[x * k + z];
        }
    }
    lp.constrain(quality, Relation::Le, q_max);
    for x in 0..k {
        let mut c = vec![0.0; nv];
        (0..k).for_each(|z| c[a(x, z)] = 1.0);
        lp.constrain(c, Relation::Eq, 1.0);
    }

    let sol = solve(&lp)?;
    match sol.status {
        LpStatus::Optimal => {}
        LpStatus::IterationLimit => return Err(Error::Lp("Shokri LP hit the pivot limit".into())),
        other => return Err(Error::Lp(format!("Shokri LP ended with {other:?}"))),
    }

    let mut data = sol.values[..k * k].to_vec();
    for row in data.chunks_exact_mut(k) {
        row.iter_mut().for_each(|v| {
            if *v < ROUNDOFF {
                *v = 0.0;
            }
        });
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= s);
    }
    let channel = DenseChannel::new(k, k, data, Mechanism::Shokri { q_max })?;
    let quality = quality_loss(&channel, pi, loss);
    Ok(ShokriSolution { channel, objective: sol.objective_value, quality })
}
