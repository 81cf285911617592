use std::fmt::Write;

use super::MetricsRecord;
use crate::task::Archive;

/// One row per active task: id, objective estimates, weights, query count.
pub fn archive_csv(archive: &Archive) -> String {
    let m = archive.tasks.first().map_or(0, |t| t.weight.len());
    let mut out = String::from("id");
    for i in 1..=m {
        let _ = write!(out, ",f{i}");
    }
    for i in 1..=m {
        let _ = write!(out, ",w{i}");
    }
    out.push_str(",times_queried\n");
    for t in &archive.tasks {
        let _ = write!(out, "{}", t.id);
        for v in t.objective_estimate.values() {
            let _ = write!(out, ",{v}");
        }
        for v in t.weight.as_slice() {
            let _ = write!(out, ",{v}");
        }
        let _ = writeln!(out, ",{}", t.times_queried);
    }
    out
}

/// Plain-text table of the distance metrics per generation.
pub fn metrics_table(metrics: &[MetricsRecord]) -> String {
    let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"));
    let mut out = format!(
        "{:>5} {:>5} {:>10} {:>5} {:>10} {:>10}\n",
        "gen", "round", "steps", "size", "eps_star", "eps_bar"
    );
    for r in metrics {
        let _ = writeln!(
            out,
            "{:>5} {:>5} {:>10} {:>5} {:>10} {:>10}",
            r.generation,
            r.round,
            r.env_steps,
            r.archive_size,
            fmt(r.epsilon_star),
            fmt(r.epsilon_bar)
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pareto::ObjectiveVector;
    use crate::task::PolicyTask;
    use crate::weights::WeightVector;

    #[test]
    fn csv_layout() {
        let mut a = Archive::default();
        let mut t = PolicyTask::new(3, WeightVector::new(vec![0.25, 0.75]).unwrap(), 2, 1, &[2], 0);
        t.objective_estimate = ObjectiveVector::new(vec![1.5, -2.0]).unwrap();
        t.times_queried = 2;
        a.tasks.push(t);
        assert_eq!(archive_csv(&a), "id,f1,f2,w1,w2,times_queried\n3,1.5,-2,0.25,0.75,2\n");
    }
}
