//! Modified nodal analysis of a single crossbar tile.
//!
//! Row-entry nodes are tied to the driver voltages and column-exit nodes to
//! the 0 V virtual ground, so both are eliminated and only the interior wire
//! junctions remain as unknowns. With ideal wires the corresponding junctions
//! collapse onto the driver or sense node.

use std::sync::Arc;

use super::linalg::{pcg, relative_residual, BandCholesky, CsrMatrix};
use super::SolverError;
use crate::circuit::Tile;
use crate::scalar::Scalar;

/// Tiles with both dimensions at or below this use the direct solver.
pub const DIRECT_SOLVE_MAX_DIM: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveMethod {
    /// Direct for tiles up to 64×64, iterative above.
    Auto,
    Direct,
    Iterative,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Node {
    /// Unknown with the given matrix index.
    Free(usize),
    /// Tied to the driver of local row `r`.
    Input(usize),
    Ground,
}

/// Resistive branch carrying `g·(V(a) − V(b))` from `a` to `b`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Branch<T> {
    pub a: Node,
    pub b: Node,
    pub g: T,
}

/// Input-independent part of a tile's nodal system.
#[derive(Clone, Debug)]
pub struct TileNetwork<T> {
    pub rows: usize,
    pub cols: usize,
    /// Row-wire junction under each cell, row-major.
    pub row_nodes: Vec<Node>,
    /// Column-wire junction under each cell, row-major.
    pub col_nodes: Vec<Node>,
    pub branches: Vec<Branch<T>>,
    pub matrix: CsrMatrix<T>,
    /// `(unknown, driver row, g)`: eliminated source terms of the RHS.
    pub couplings: Vec<(usize, usize, T)>,
    /// Branches ending in each column's sense node.
    sense: Vec<Vec<usize>>,
    /// Branches leaving each row's driver.
    drive: Vec<Vec<usize>>,
}

impl<T: Scalar> TileNetwork<T> {
    pub fn new(tile: &Tile<T>) -> Self {
        let (rows, cols) = (tile.rows, tile.cols);
        let zero = T::zero();
        let row_wire = tile.r_seg_row > zero;
        let col_wire = tile.r_seg_col > zero;

        // inner loop over the shorter dimension keeps the bandwidth small
        let mut row_nodes = vec![Node::Ground; rows * cols];
        let mut col_nodes = vec![Node::Ground; rows * cols];
        let mut next = 0;
        let mut number = |r: usize, c: usize, row_nodes: &mut Vec<Node>, col_nodes: &mut Vec<Node>| {
            let k = r * cols + c;
            row_nodes[k] = if row_wire {
                next += 1;
                Node::Free(next - 1)
            } else {
                Node::Input(r)
            };
            col_nodes[k] = if col_wire {
                next += 1;
                Node::Free(next - 1)
            } else {
                Node::Ground
            };
        };
        if cols <= rows {
            for r in 0..rows {
                for c in 0..cols {
                    number(r, c, &mut row_nodes, &mut col_nodes);
                }
            }
        } else {
            for c in 0..cols {
                for r in 0..rows {
                    number(r, c, &mut row_nodes, &mut col_nodes);
                }
            }
        }
        let n = next;

        let mut branches = Vec::with_capacity(3 * rows * cols);
        let mut branch_col = Vec::with_capacity(3 * rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                let k = r * cols + c;
                branches.push(Branch { a: row_nodes[k], b: col_nodes[k], g: tile.g[k] });
                branch_col.push(c);
                if row_wire {
                    let prev = if c == 0 { Node::Input(r) } else { row_nodes[k - 1] };
                    branches.push(Branch { a: prev, b: row_nodes[k], g: tile.r_seg_row.recip() });
                    branch_col.push(c);
                }
                if col_wire {
                    let below = if r + 1 == rows { Node::Ground } else { col_nodes[k + cols] };
                    branches.push(Branch { a: col_nodes[k], b: below, g: tile.r_seg_col.recip() });
                    branch_col.push(c);
                }
            }
        }

        let mut triplets = Vec::with_capacity(4 * branches.len());
        let mut couplings = Vec::new();
        let mut sense = vec![Vec::new(); cols];
        let mut drive = vec![Vec::new(); rows];
        for (idx, br) in branches.iter().enumerate() {
            match (br.a, br.b) {
                (Node::Free(i), Node::Free(j)) => {
                    triplets.push((i, i, br.g));
                    triplets.push((j, j, br.g));
                    triplets.push((i, j, -br.g));
                    triplets.push((j, i, -br.g));
                }
                (Node::Free(i), Node::Input(r)) | (Node::Input(r), Node::Free(i)) => {
                    triplets.push((i, i, br.g));
                    couplings.push((i, r, br.g));
                }
                (Node::Free(i), Node::Ground) | (Node::Ground, Node::Free(i)) => {
                    triplets.push((i, i, br.g));
                }
                _ => {}
            }
            if let Node::Input(r) = br.a {
                drive[r].push(idx);
            }
            if br.b == Node::Ground {
                sense[branch_col[idx]].push(idx);
            }
        }

        TileNetwork {
            rows,
            cols,
            row_nodes,
            col_nodes,
            branches,
            matrix: CsrMatrix::from_triplets(n, triplets),
            couplings,
            sense,
            drive,
        }
    }

    /// Number of unknowns.
    pub fn unknowns(&self) -> usize {
        self.matrix.n
    }

    pub fn rhs(&self, v_in: &[T]) -> Vec<T> {
        let mut b = vec![T::zero(); self.unknowns()];
        for &(i, r, g) in &self.couplings {
            b[i] += g * v_in[r];
        }
        b
    }

    fn voltage(node: Node, x: &[T], v_in: &[T]) -> T {
        match node {
            Node::Free(i) => x[i],
            Node::Input(r) => v_in[r],
            Node::Ground => T::zero(),
        }
    }

    /// Derives currents and dissipation from the interior solution `x`.
    pub fn evaluate(&self, x: &[T], v_in: &[T], iterations: usize, residual: f64) -> SolveResult<T> {
        let current = |br: &Branch<T>| br.g * (Self::voltage(br.a, x, v_in) - Self::voltage(br.b, x, v_in));
        let column_currents = self
            .sense
            .iter()
            .map(|ids| ids.iter().map(|&k| current(&self.branches[k])).sum())
            .collect();
        let source_currents = self
            .drive
            .iter()
            .map(|ids| ids.iter().map(|&k| current(&self.branches[k])).sum())
            .collect();
        let power = self
            .branches
            .iter()
            .map(|br| {
                let dv = Self::voltage(br.a, x, v_in) - Self::voltage(br.b, x, v_in);
                br.g * dv * dv
            })
            .sum();
        SolveResult {
            row_voltages: self.row_nodes.iter().map(|&n| Self::voltage(n, x, v_in)).collect(),
            col_voltages: self.col_nodes.iter().map(|&n| Self::voltage(n, x, v_in)).collect(),
            voltages: x.to_vec(),
            column_currents,
            source_currents,
            power,
            iterations,
            relative_residual: residual,
        }
    }
}

/// A tile's nodal system for one input vector.
#[derive(Clone, Debug)]
pub struct MnaSystem<T> {
    pub network: Arc<TileNetwork<T>>,
    pub rhs: Vec<T>,
    pub v_in: Vec<T>,
    method: SolveMethod,
}

impl<T: Scalar> MnaSystem<T> {
    pub fn matrix(&self) -> &CsrMatrix<T> {
        &self.network.matrix
    }

    pub fn unknowns(&self) -> usize {
        self.network.unknowns()
    }

    pub fn with_method(mut self, method: SolveMethod) -> Self {
        self.method = method;
        self
    }
}

/// Stamps `tile` driven by `v_in` (one voltage per local row).
pub fn assemble_mna<T: Scalar>(tile: &Tile<T>, v_in: &[T]) -> Result<MnaSystem<T>, SolverError> {
    if v_in.len() != tile.rows {
        return Err(SolverError::InputLength { expected: tile.rows, found: v_in.len() });
    }
    let network = Arc::new(TileNetwork::new(tile));
    let rhs = network.rhs(v_in);
    Ok(MnaSystem { network, rhs, v_in: v_in.to_vec(), method: SolveMethod::Auto })
}

/// DC operating point of one tile.
#[derive(Clone, Debug, PartialEq)]
pub struct SolveResult<T> {
    /// Interior unknowns in matrix order.
    pub voltages: Vec<T>,
    pub row_voltages: Vec<T>,
    pub col_voltages: Vec<T>,
    /// Current into each column's sense node.
    pub column_currents: Vec<T>,
    /// Current delivered by each row driver.
    pub source_currents: Vec<T>,
    /// Total resistive dissipation, watts.
    pub power: T,
    pub iterations: usize,
    pub relative_residual: f64,
}

impl<T: Scalar> SolveResult<T> {
    /// `Σ V_src·I_src` over the row drivers (sense nodes sit at 0 V).
    pub fn source_power(&self, v_in: &[T]) -> T {
        v_in.iter().zip(&self.source_currents).map(|(&v, &i)| v * i).sum()
    }
}

enum Factor<T> {
    Cholesky(BandCholesky<T>),
    Iterative,
}

/// A tile prepared once for repeated solves with different inputs.
pub struct TileSolver<T> {
    network: Arc<TileNetwork<T>>,
    factor: Factor<T>,
}

fn use_direct(rows: usize, cols: usize, method: SolveMethod) -> bool {
    match method {
        SolveMethod::Direct => true,
        SolveMethod::Iterative => false,
        SolveMethod::Auto => rows <= DIRECT_SOLVE_MAX_DIM && cols <= DIRECT_SOLVE_MAX_DIM,
    }
}

impl<T: Scalar> TileSolver<T> {
    pub fn new(tile: &Tile<T>, method: SolveMethod) -> Result<Self, SolverError> {
        Self::from_network(Arc::new(TileNetwork::new(tile)), method)
    }

    fn from_network(network: Arc<TileNetwork<T>>, method: SolveMethod) -> Result<Self, SolverError> {
        let factor = if use_direct(network.rows, network.cols, method) {
            let chol = BandCholesky::factor(&network.matrix)
                .map_err(|pivot| SolverError::NotPositiveDefinite { pivot })?;
            Factor::Cholesky(chol)
        } else {
            Factor::Iterative
        };
        Ok(TileSolver { network, factor })
    }

    pub fn network(&self) -> &TileNetwork<T> {
        &self.network
    }

    pub fn solve(&self, v_in: &[T]) -> Result<SolveResult<T>, SolverError> {
        let net = &self.network;
        if v_in.len() != net.rows {
            return Err(SolverError::InputLength { expected: net.rows, found: v_in.len() });
        }
        let b = net.rhs(v_in);
        let n = net.unknowns();
        let tol = T::RESIDUAL_TOL;
        let (x, iterations, residual) = match &self.factor {
            Factor::Cholesky(chol) => {
                let mut x = chol.solve(&b);
                let mut residual = relative_residual(&net.matrix, &x, &b);
                // a couple of refinement sweeps recover digits lost to conditioning
                for _ in 0..2 {
                    if residual <= tol {
                        break;
                    }
                    let mut ax = vec![T::zero(); n];
                    net.matrix.matvec(&x, &mut ax);
                    let r: Vec<T> = b.iter().zip(&ax).map(|(&p, &q)| p - q).collect();
                    for (xi, d) in x.iter_mut().zip(chol.solve(&r)) {
                        *xi += d;
                    }
                    residual = relative_residual(&net.matrix, &x, &b);
                }
                if !(residual <= tol) {
                    return Err(SolverError::ConvergenceFailure { iterations: 0, residual });
                }
                (x, 0, residual)
            }
            Factor::Iterative => {
                // aim below the acceptance bound; column currents are
                // differences of node voltages and lose digits
                let target = (tol * 1e-3).max(100.0 * T::epsilon().as_f64());
                let out = pcg(&net.matrix, &b, target, 10 * n.max(1));
                if !(out.relative_residual <= tol) {
                    return Err(SolverError::ConvergenceFailure {
                        iterations: out.iterations,
                        residual: out.relative_residual,
                    });
                }
                (out.x, out.iterations, out.relative_residual)
            }
        };
        Ok(net.evaluate(&x, v_in, iterations, residual))
    }
}

/// Solves an assembled system: direct factorization for tiles up to 64×64,
/// Jacobi-preconditioned CG above.
pub fn solve_tile<T: Scalar>(sys: &MnaSystem<T>) -> Result<SolveResult<T>, SolverError> {
    TileSolver::from_network(Arc::clone(&sys.network), sys.method)?.solve(&sys.v_in)
}
