use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Flat, Layer};
use crate::error::Result;
use crate::scalar::Scalar;

const PROJECTION_SEED: u64 = 0x5EED;
const DENOMINATOR_FLOOR: f64 = 1e-8;

/// Outcome of a finite-difference comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `"input[i]"` or `"<param name>[i]"` of the worst coordinate, with
    /// both derivative values.
    pub worst: String,
    pub coordinates: usize,
    /// Coordinates left out because a perturbation crossed a kink.
    pub skipped: usize,
}

/// Maximum relative error between the analytic backward pass and central
/// differences, over every input and parameter coordinate.
///
/// The scalar probed is `⟨forward(x), r⟩` for a fixed pseudo-random `r`, so
/// the analytic side is `backward(x, r)`. Per-coordinate error is
/// `|a − n| / max(|a|, |n|, 1e-8)`.
pub fn grad_check<T, L>(layer: &L, input: &L::Input, epsilon: T) -> Result<f64>
where
    T: Scalar,
    L: Layer<T> + Clone,
{
    Ok(grad_check_detailed(layer, input, epsilon)?.max_rel_error)
}

pub fn grad_check_detailed<T, L>(layer: &L, input: &L::Input, epsilon: T) -> Result<GradCheckReport>
where
    T: Scalar,
    L: Layer<T> + Clone,
{
    let out = layer.forward(input)?;
    let mut projection = out.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(PROJECTION_SEED);
    for i in 0..projection.flat_len() {
        projection.flat_set(i, T::lit(rng.random_range(-1.0..1.0)));
    }
    let objective = |l: &L, x: &L::Input| -> Result<f64> {
        let o = l.forward(x)?;
        Ok((0..o.flat_len())
            .map(|i| (o.flat_get(i) * projection.flat_get(i)).to_f64_lossy())
            .sum())
    };
    let analytic = layer.backward(input, &projection)?;
    let two_eps = 2.0 * epsilon.to_f64_lossy();

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: String::new(),
        coordinates: 0,
        skipped: 0,
    };
    let mut record = |a: f64, n: f64, label: &dyn Fn() -> String| {
        let err = (a - n).abs() / a.abs().max(n.abs()).max(DENOMINATOR_FLOOR);
        report.coordinates += 1;
        if err > report.max_rel_error || !err.is_finite() {
            report.max_rel_error = if err.is_finite() { err } else { f64::INFINITY };
            report.worst = format!("{} (analytic {a:e}, numeric {n:e})", label());
        }
    };

    let mut x = input.clone();
    for i in 0..x.flat_len() {
        let orig = x.flat_get(i);
        x.flat_set(i, orig + epsilon);
        let plus = objective(layer, &x)?;
        x.flat_set(i, orig - epsilon);
        let minus = objective(layer, &x)?;
        x.flat_set(i, orig);
        let numeric = (plus - minus) / two_eps;
        record(analytic.input_grad.flat_get(i).to_f64_lossy(), numeric, &|| format!("input[{i}]"));
    }

    let names = layer.param_names();
    let mut probe = layer.clone();
    for (p, grad) in analytic.param_grads.iter().enumerate() {
        for i in 0..grad.as_slice().len() {
            let orig = probe.params()[p].as_slice()[i];
            probe.params_mut()[p].as_mut_slice()[i] = orig + epsilon;
            let plus = objective(&probe, input)?;
            probe.params_mut()[p].as_mut_slice()[i] = orig - epsilon;
            let minus = objective(&probe, input)?;
            probe.params_mut()[p].as_mut_slice()[i] = orig;
            let numeric = (plus - minus) / two_eps;
            let name = names.get(p).copied().unwrap_or("param");
            record(grad.as_slice()[i].to_f64_lossy(), numeric, &|| format!("{name}[{i}]"));
        }
    }
    Ok(report)
}
