use super::{ConditionalTable, PairMetrics, SolverError};
use crate::codetree::{for_each_path, CodetreeShape};
use crate::info::JointTable;
use crate::problem::Problem;

/// Joint law of the source block and the reconstruction block induced by a
/// codetree law, with axes `(X_1, ..., X_L, Xhat_1, ..., Xhat_L)`.
pub fn estimate_joint(
    problem: &Problem,
    metrics: &PairMetrics,
    cond: &ConditionalTable,
) -> Result<JointTable, SolverError> {
    let al = problem.alphabets();
    if metrics.rows() != problem.support() || cond.n_cols() != metrics.n_trees() {
        return Err(SolverError::Shape("metrics do not belong to this problem".into()));
    }
    let shape = CodetreeShape::new(al);
    let xhat_count = al.xhat_count();
    let mut p = vec![0.0; al.x_count() * xhat_count];
    for (r, &x) in metrics.rows().iter().enumerate() {
        let w = metrics.px()[r];
        for (j, &pj) in cond.row(r).iter().enumerate() {
            if pj == 0.0 {
                continue;
            }
            let tree = shape.decode(metrics.ordinals()[j])?;
            for_each_path(problem, x, &tree, |path| {
                p[x * xhat_count + path.estimate_index] += w * pj * path.probability;
            })?;
        }
    }
    let dims: Vec<usize> = al.x_sizes().iter().chain(al.xhat_sizes()).copied().collect();
    // Renormalize away rounding so the table passes the strict mass check.
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= total);
    JointTable::new(&dims, p).map_err(|e| SolverError::Shape(e.to_string()))
}
