//! Central finite-difference verification of analytic gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Parameterized;

/// Outcome of [`finite_difference_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub coordinates_checked: usize,
    /// `(parameter, index, analytic, numeric)` of the worst coordinate.
    pub worst: Option<(String, usize, f64, f64)>,
}

/// Relative error `|a - n| / max(1e-8, |a| + |n|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Compares analytic gradients to central differences `(f(θ+ε) - f(θ-ε)) / 2ε`.
///
/// `loss_and_grad` must evaluate the loss deterministically and accumulate
/// the analytic gradient into the model's (already zeroed) parameter grads.
/// When `max_coordinates` is given and the model is larger, a seeded random
/// subsample of at least 200 coordinates is checked instead of all of them.
pub fn finite_difference_check<M, F>(
    model: &mut M,
    mut loss_and_grad: F,
    epsilon: f64,
    max_coordinates: Option<usize>,
    seed: u64,
) -> GradCheckReport
where
    M: Parameterized + ?Sized,
    F: FnMut(&mut M) -> f64,
{
    model.zero_grad();
    loss_and_grad(model);
    let analytic: Vec<Vec<f64>> = model
        .parameters()
        .iter()
        .map(|p| p.grad.data().to_vec())
        .collect();
    let names: Vec<String> = model.parameters().iter().map(|p| p.name().to_string()).collect();

    let coords: Vec<(usize, usize)> = analytic
        .iter()
        .enumerate()
        .flat_map(|(pi, g)| (0..g.len()).map(move |i| (pi, i)))
        .collect();
    let chosen: Vec<(usize, usize)> = match max_coordinates {
        Some(limit) if coords.len() > limit.max(200) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut idx = sample(&mut rng, coords.len(), limit.max(200)).into_vec();
            idx.sort_unstable();
            idx.into_iter().map(|i| coords[i]).collect()
        }
        _ => coords,
    };

    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        coordinates_checked: chosen.len(),
        worst: None,
    };
    let mut eval = |model: &mut M, pi: usize, i: usize, value: f64| {
        model.parameters_mut()[pi].value.data_mut()[i] = value;
        model.zero_grad();
        loss_and_grad(model)
    };
    for (pi, i) in chosen {
        let original = model.parameters()[pi].value.data()[i];
        let plus = eval(model, pi, i, original + epsilon);
        let minus = eval(model, pi, i, original - epsilon);
        model.parameters_mut()[pi].value.data_mut()[i] = original;
        let numeric = (plus - minus) / (2.0 * epsilon);
        let a = analytic[pi][i];
        let err = relative_error(a, numeric);
        if err > report.max_relative_error || report.worst.is_none() {
            report.max_relative_error = report.max_relative_error.max(err);
            report.worst = Some((names[pi].clone(), i, a, numeric));
        }
    }
    model.zero_grad();
    report
}
