use super::Outcome;
use crate::golden::GoldenSpec;
use crate::pareto::ObjectiveVector;

/// Answer of a decision maker whose taste is fully described by `g`.
///
/// Axis targets prefer the vector closer to the target plane; linear
/// utilities prefer the larger weighted sum. Differences within the
/// indifference tolerance are reported as indifferent.
pub fn simulated_dm_compare(g: &GoldenSpec, fa: &ObjectiveVector, fb: &ObjectiveVector) -> Outcome {
    if fa == fb {
        return Outcome::Indifferent;
    }
    let diff = g.utility(fa) - g.utility(fb);
    if diff.abs() <= g.indifference_tolerance || diff.is_nan() {
        Outcome::Indifferent
    } else if diff > 0.0 {
        Outcome::ABetter
    } else {
        Outcome::BBetter
    }
}
