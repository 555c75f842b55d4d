//! Global trial unknowns.
//!
//! Layout of the global coefficient vector:
//! `[ node values | facet fluxes | (u, σ) per cell ]`. The first two blocks
//! form the trace unknowns (`n_trace`), which is the count reported as `ndof`.

use std::collections::HashMap;

use thiserror::Error;

use crate::dyadic::DyadicCoord;
use crate::mesh::{Mesh, Orientation, Side};

#[derive(Debug, Error, PartialEq)]
pub enum DofError {
    #[error("hanging-node constraints form a cycle at node ({t}, {x})")]
    ConstraintCycle { t: String, x: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeKind {
    /// Unconstrained node off the lateral boundary, owning dof `.0`.
    Free(usize),
    /// On `x = 0` or `x = 1`; the skeleton field vanishes there.
    Lateral,
    /// Inside a coarse facet; see [`DofMap::constraint`].
    Hanging,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Node {
    pub t: DyadicCoord,
    pub x: DyadicCoord,
    pub kind: NodeKind,
}

/// A hanging node as the affine combination of the endpoints of the coarse
/// facet it lies in.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Constraint {
    pub node: usize,
    pub parents: [(usize, f64); 2],
}

/// Weighted list of global dofs.
pub type Column = Vec<(usize, f64)>;

#[derive(Clone, Debug)]
pub struct DofMap {
    nodes: Vec<Node>,
    node_index: HashMap<(DyadicCoord, DyadicCoord), usize>,
    constraints: Vec<Constraint>,
    resolved: Vec<Column>,
    cell_nodes: Vec<[usize; 4]>,
    cell_flux: Vec<[usize; 2]>,
    facet_flux: HashMap<usize, usize>,
    n_node_dofs: usize,
    n_flux_dofs: usize,
    n_cells: usize,
}

/// Local trial column order: `u, σ`, the four corner values of the skeleton
/// field (corner order of [`crate::mesh::Cell::corners`]), then the left and
/// right fluxes.
pub const N_LOCAL_TRIAL: usize = 8;
pub const LOCAL_U: usize = 0;
pub const LOCAL_SIGMA: usize = 1;
pub const LOCAL_CORNERS: usize = 2;
pub const LOCAL_FLUX_LEFT: usize = 6;
pub const LOCAL_FLUX_RIGHT: usize = 7;

impl DofMap {
    pub fn build(mesh: &Mesh) -> Result<DofMap, DofError> {
        let mut nodes = Vec::new();
        let mut node_index = HashMap::new();
        let mut cell_nodes = Vec::with_capacity(mesh.n_cells());
        for cell in mesh.cells() {
            let mut ids = [0; 4];
            for (k, p) in cell.corners().into_iter().enumerate() {
                ids[k] = *node_index.entry(p).or_insert_with(|| {
                    let lateral = p.1 == DyadicCoord::ZERO || p.1 == DyadicCoord::ONE;
                    let kind = if lateral { NodeKind::Lateral } else { NodeKind::Free(usize::MAX) };
                    nodes.push(Node { t: p.0, x: p.1, kind });
                    nodes.len() - 1
                });
            }
            cell_nodes.push(ids);
        }

        // nodes grouped along lines, sorted by the free coordinate
        let mut on_x: HashMap<DyadicCoord, Vec<(DyadicCoord, usize)>> = HashMap::new();
        let mut on_t: HashMap<DyadicCoord, Vec<(DyadicCoord, usize)>> = HashMap::new();
        for (id, n) in nodes.iter().enumerate() {
            on_x.entry(n.x).or_default().push((n.t, id));
            on_t.entry(n.t).or_default().push((n.x, id));
        }
        for v in on_x.values_mut().chain(on_t.values_mut()) {
            v.sort();
        }

        let mut constraints = Vec::new();
        for f in mesh.facets().iter().filter(|f| f.coarse) {
            let line = match f.orientation {
                Orientation::SpaceNormal => &on_x,
                Orientation::TimeNormal => &on_t,
            };
            let Some(list) = line.get(&f.position) else { continue };
            let (a, b) = (f.extent.lo(), f.extent.hi());
            let start = list.partition_point(|&(s, _)| s <= a);
            let end = list.partition_point(|&(s, _)| s < b);
            if start >= end {
                continue;
            }
            let endpoint = |s: DyadicCoord| match f.orientation {
                Orientation::SpaceNormal => node_index[&(s, f.position)],
                Orientation::TimeNormal => node_index[&(f.position, s)],
            };
            let (na, nb) = (endpoint(a), endpoint(b));
            let (af, bf) = (a.to_f64(), b.to_f64());
            for &(s, id) in &list[start..end] {
                if nodes[id].kind == NodeKind::Lateral {
                    continue;
                }
                let lam = (s.to_f64() - af) / (bf - af);
                nodes[id].kind = NodeKind::Hanging;
                constraints.push(Constraint { node: id, parents: [(na, 1.0 - lam), (nb, lam)] });
            }
        }

        let mut n_node_dofs = 0;
        for n in &mut nodes {
            if let NodeKind::Free(_) = n.kind {
                n.kind = NodeKind::Free(n_node_dofs);
                n_node_dofs += 1;
            }
        }

        let mut facet_flux = HashMap::new();
        for f in mesh.coarse_space_normal_facets() {
            let dof = n_node_dofs + facet_flux.len();
            facet_flux.insert(f.id, dof);
        }
        let n_flux_dofs = facet_flux.len();
        let cell_flux = mesh
            .cells()
            .iter()
            .map(|c| {
                [
                    facet_flux[&mesh.coarse_facet(c.id, Side::Left)],
                    facet_flux[&mesh.coarse_facet(c.id, Side::Right)],
                ]
            })
            .collect();

        let resolved = resolve(&nodes, &constraints)?;
        Ok(DofMap {
            nodes,
            node_index,
            constraints,
            resolved,
            cell_nodes,
            cell_flux,
            facet_flux,
            n_node_dofs,
            n_flux_dofs,
            n_cells: mesh.n_cells(),
        })
    }

    pub fn n_node_dofs(&self) -> usize {
        self.n_node_dofs
    }

    pub fn n_flux_dofs(&self) -> usize {
        self.n_flux_dofs
    }

    /// Dimension of the discrete trace space.
    pub fn n_trace(&self) -> usize {
        self.n_node_dofs + self.n_flux_dofs
    }

    pub fn n_total(&self) -> usize {
        self.n_trace() + 2 * self.n_cells
    }

    pub fn u_dof(&self, cell: usize) -> usize {
        self.n_trace() + 2 * cell
    }

    pub fn sigma_dof(&self, cell: usize) -> usize {
        self.n_trace() + 2 * cell + 1
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node_at(&self, t: DyadicCoord, x: DyadicCoord) -> Option<usize> {
        self.node_index.get(&(t, x)).copied()
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn constraint(&self, node: usize) -> Option<&Constraint> {
        self.constraints.iter().find(|c| c.node == node)
    }

    /// Node value as a combination of free node dofs (empty on the lateral boundary).
    pub fn node_column(&self, node: usize) -> &Column {
        &self.resolved[node]
    }

    pub fn cell_nodes(&self, cell: usize) -> [usize; 4] {
        self.cell_nodes[cell]
    }

    /// Flux dofs of the coarse facets containing the left and right sides.
    pub fn cell_flux(&self, cell: usize) -> [usize; 2] {
        self.cell_flux[cell]
    }

    pub fn flux_dof(&self, facet: usize) -> Option<usize> {
        self.facet_flux.get(&facet).copied()
    }

    /// Local-to-global map of the eight local trial columns of a cell.
    pub fn cell_columns(&self, cell: usize) -> [Column; N_LOCAL_TRIAL] {
        let nodes = self.cell_nodes[cell];
        let flux = self.cell_flux[cell];
        [
            vec![(self.u_dof(cell), 1.0)],
            vec![(self.sigma_dof(cell), 1.0)],
            self.resolved[nodes[0]].clone(),
            self.resolved[nodes[1]].clone(),
            self.resolved[nodes[2]].clone(),
            self.resolved[nodes[3]].clone(),
            vec![(flux[0], 1.0)],
            vec![(flux[1], 1.0)],
        ]
    }

    /// Local trial coefficients of a cell gathered from a global vector.
    pub fn gather(&self, cell: usize, global: &[f64]) -> [f64; N_LOCAL_TRIAL] {
        let mut out = [0.0; N_LOCAL_TRIAL];
        for (k, col) in self.cell_columns(cell).iter().enumerate() {
            out[k] = col.iter().map(|&(g, w)| w * global[g]).sum();
        }
        out
    }

    /// Skeleton field values at the four corners of a cell.
    pub fn corner_values(&self, cell: usize, trace: &[f64]) -> [f64; 4] {
        let mut out = [0.0; 4];
        for (k, &n) in self.cell_nodes[cell].iter().enumerate() {
            out[k] = self.resolved[n].iter().map(|&(g, w)| w * trace[g]).sum();
        }
        out
    }
}

fn resolve(nodes: &[Node], constraints: &[Constraint]) -> Result<Vec<Column>, DofError> {
    #[derive(Clone, Copy, PartialEq)]
    enum State {
        Todo,
        Active,
        Done,
    }
    let by_node: HashMap<usize, &Constraint> = constraints.iter().map(|c| (c.node, c)).collect();
    let mut state = vec![State::Todo; nodes.len()];
    let mut out: Vec<Column> = vec![Vec::new(); nodes.len()];

    fn visit(
        id: usize,
        nodes: &[Node],
        by_node: &HashMap<usize, &Constraint>,
        state: &mut [State],
        out: &mut [Column],
    ) -> Result<(), DofError> {
        match state[id] {
            State::Done => return Ok(()),
            State::Active => {
                return Err(DofError::ConstraintCycle {
                    t: nodes[id].t.to_string(),
                    x: nodes[id].x.to_string(),
                })
            }
            State::Todo => {}
        }
        state[id] = State::Active;
        let col = match nodes[id].kind {
            NodeKind::Free(dof) => vec![(dof, 1.0)],
            NodeKind::Lateral => Vec::new(),
            NodeKind::Hanging => {
                let c = by_node[&id];
                let mut acc: HashMap<usize, f64> = HashMap::new();
                for &(p, w) in &c.parents {
                    visit(p, nodes, by_node, state, out)?;
                    for &(g, wg) in &out[p] {
                        *acc.entry(g).or_insert(0.0) += w * wg;
                    }
                }
                let mut col: Column = acc.into_iter().collect();
                col.sort_by_key(|&(g, _)| g);
                col
            }
        };
        out[id] = col;
        state[id] = State::Done;
        Ok(())
    }

    for id in 0..nodes.len() {
        visit(id, nodes, &by_node, &mut state, &mut out)?;
    }
    Ok(out)
}
