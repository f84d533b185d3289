//! Builtin adjacency families for threshold sweeps.

use ecodyn::Matrix;
use serde::Deserialize;

use crate::error::CliError;

/// Undirected, unweighted graph families plus an explicit matrix.
///
/// `star` is sized by its leaf count (`leaves + 1` nodes, `λ_max = √leaves`).
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase", deny_unknown_fields)]
pub enum GraphSpec {
    Star { leaves: usize },
    Path { nodes: usize },
    Cycle { nodes: usize },
    Complete { nodes: usize },
    Explicit { adjacency: Vec<Vec<f64>> },
}

impl GraphSpec {
    pub fn name(&self) -> String {
        match self {
            GraphSpec::Star { leaves } => format!("star({leaves})"),
            GraphSpec::Path { nodes } => format!("path({nodes})"),
            GraphSpec::Cycle { nodes } => format!("cycle({nodes})"),
            GraphSpec::Complete { nodes } => format!("complete({nodes})"),
            GraphSpec::Explicit { adjacency } => format!("explicit({})", adjacency.len()),
        }
    }

    pub fn adjacency(&self) -> Result<Matrix, CliError> {
        let bad = |msg: &str| Err(CliError::Config(format!("sweep.graph: {msg}")));
        match self {
            GraphSpec::Star { leaves } if *leaves == 0 => bad("star needs at least one leaf"),
            GraphSpec::Star { leaves } => Ok(star(*leaves)),
            GraphSpec::Path { nodes } if *nodes < 2 => bad("path needs at least two nodes"),
            GraphSpec::Path { nodes } => Ok(path(*nodes)),
            GraphSpec::Cycle { nodes } if *nodes < 3 => bad("cycle needs at least three nodes"),
            GraphSpec::Cycle { nodes } => Ok(cycle(*nodes)),
            GraphSpec::Complete { nodes } if *nodes < 2 => bad("complete graph needs at least two nodes"),
            GraphSpec::Complete { nodes } => Ok(complete(*nodes)),
            GraphSpec::Explicit { adjacency } => {
                let a = crate::config::matrix("sweep.graph.adjacency", adjacency, adjacency.len())?;
                if a.nrows() == 0 {
                    return bad("adjacency is empty");
                }
                if a.iter().any(|v| *v < 0.0) {
                    return bad("adjacency entries must be >= 0");
                }
                Ok(a)
            }
        }
    }
}

fn undirected(n: usize, edges: impl Iterator<Item = (usize, usize)>) -> Matrix {
    let mut a = Matrix::zeros(n, n);
    for (i, j) in edges {
        a[(i, j)] = 1.0;
        a[(j, i)] = 1.0;
    }
    a
}

/// Hub `0` joined to `leaves` leaf nodes.
pub fn star(leaves: usize) -> Matrix {
    undirected(leaves + 1, (1..=leaves).map(|j| (0, j)))
}

pub fn path(nodes: usize) -> Matrix {
    undirected(nodes, (1..nodes).map(|j| (j - 1, j)))
}

pub fn cycle(nodes: usize) -> Matrix {
    undirected(nodes, (0..nodes).map(|j| (j, (j + 1) % nodes)))
}

pub fn complete(nodes: usize) -> Matrix {
    Matrix::from_fn(nodes, nodes, |i, j| if i == j { 0.0 } else { 1.0 })
}
