//! Shared fixtures for the benchmarks in `benches/`.

use grushin::functional::Problem;
use grushin::ProblemSpec;

/// Subcritical benchmark problem on an `nodes × nodes` grid.
pub fn benchmark_problem(nodes: usize) -> Problem {
    Problem::new(ProblemSpec::benchmark(0.03), &[nodes, nodes]).expect("benchmark spec is valid")
}

/// Smooth positive test field vanishing on the boundary.
pub fn bump(p: &Problem) -> Vec<f64> {
    p.grid().sample(|z| z.iter().map(|x| 1.0 - x * x).product())
}
