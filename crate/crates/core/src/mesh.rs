//! Axis-aligned space-time partitions of `Q = (0,1) x (0,1)` with hanging nodes.
//!
//! Every cell is a tensor product `K_t x K_x` of two dyadic intervals. Any two
//! dyadic intervals are either nested or meet in at most one point, so the facet
//! matching condition `f ⊆ g or g ⊆ f` holds by construction; refinement closure
//! additionally enforces a one-generation balance between neighbours.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use thiserror::Error;

use crate::dyadic::{DyadicCoord, DyadicInterval};

#[derive(Debug, Error, PartialEq)]
pub enum MeshError {
    #[error("cell counts must be powers of two, got nt={nt}, nx={nx}")]
    NotPowerOfTwo { nt: usize, nx: usize },
    #[error("marked cell {0} is not an active cell")]
    UnknownCell(usize),
    #[error("malformed mesh dump line {line}: {reason}")]
    BadDump { line: usize, reason: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Orientation {
    /// Contained in a line `x = const`; carries a flux unknown.
    SpaceNormal,
    /// Contained in a line `t = const`.
    TimeNormal,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Side {
    /// `x = x_lo`
    Left,
    /// `x = x_hi`
    Right,
    /// `t = t_lo`
    Bottom,
    /// `t = t_hi`
    Top,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::Left, Side::Right, Side::Bottom, Side::Top];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn orientation(self) -> Orientation {
        match self {
            Side::Left | Side::Right => Orientation::SpaceNormal,
            Side::Bottom | Side::Top => Orientation::TimeNormal,
        }
    }

    /// A cell touching a facet through its `Right`/`Top` side lies on the
    /// negative side of that facet's (positive) normal.
    fn is_negative(self) -> bool {
        matches!(self, Side::Right | Side::Top)
    }
}

/// Refinement rule for marked cells.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scaling {
    /// 2 x 2 children, keeps `h_t ~ h_x`.
    Equal,
    /// 4 (time) x 2 (space) children, keeps `h_t ~ h_x^2`.
    Parabolic,
}

impl Scaling {
    fn time_depth(self) -> u32 {
        match self {
            Scaling::Equal => 1,
            Scaling::Parabolic => 2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Cell {
    pub id: usize,
    pub t: DyadicInterval,
    pub x: DyadicInterval,
    /// Id of the cell in the mesh this one was refined from (itself for fresh meshes).
    pub origin: usize,
}

impl Cell {
    pub fn t_lo(&self) -> DyadicCoord {
        self.t.lo()
    }
    pub fn t_hi(&self) -> DyadicCoord {
        self.t.hi()
    }
    pub fn x_lo(&self) -> DyadicCoord {
        self.x.lo()
    }
    pub fn x_hi(&self) -> DyadicCoord {
        self.x.hi()
    }
    pub fn level_t(&self) -> u32 {
        self.t.level
    }
    pub fn level_x(&self) -> u32 {
        self.x.level
    }
    pub fn ht(&self) -> f64 {
        self.t.length()
    }
    pub fn hx(&self) -> f64 {
        self.x.length()
    }
    pub fn area(&self) -> f64 {
        self.ht() * self.hx()
    }

    /// Touches the initial time `t = 0`.
    pub fn is_bottom(&self) -> bool {
        self.t.index == 0
    }

    /// Line position and extent of one side.
    pub fn side(&self, side: Side) -> (DyadicCoord, DyadicInterval) {
        match side {
            Side::Left => (self.x_lo(), self.t),
            Side::Right => (self.x_hi(), self.t),
            Side::Bottom => (self.t_lo(), self.x),
            Side::Top => (self.t_hi(), self.x),
        }
    }

    /// Corners ordered `(t_lo,x_lo), (t_lo,x_hi), (t_hi,x_lo), (t_hi,x_hi)`.
    pub fn corners(&self) -> [(DyadicCoord, DyadicCoord); 4] {
        [
            (self.t_lo(), self.x_lo()),
            (self.t_lo(), self.x_hi()),
            (self.t_hi(), self.x_lo()),
            (self.t_hi(), self.x_hi()),
        ]
    }

    pub fn contains_point(&self, t: f64, x: f64) -> bool {
        self.t_lo().to_f64() <= t
            && t <= self.t_hi().to_f64()
            && self.x_lo().to_f64() <= x
            && x <= self.x_hi().to_f64()
    }

    /// Children of one refinement step, time-major order.
    pub fn children(&self, scaling: Scaling) -> Vec<(DyadicInterval, DyadicInterval)> {
        let mut out = Vec::with_capacity(8);
        for t in self.t.split(scaling.time_depth()) {
            for x in self.x.split(1) {
                out.push((t, x));
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Facet {
    pub id: usize,
    pub orientation: Orientation,
    pub position: DyadicCoord,
    pub extent: DyadicInterval,
    /// Cells on the side the normal (+x or +t) points away from.
    pub side_neg: Vec<usize>,
    pub side_pos: Vec<usize>,
    /// Maximal: not strictly contained in another facet.
    pub coarse: bool,
}

impl Facet {
    pub fn is_boundary(&self) -> bool {
        self.side_neg.is_empty() || self.side_pos.is_empty()
    }
}

#[derive(Clone, Debug)]
pub struct Mesh {
    cells: Vec<Cell>,
    facets: Vec<Facet>,
    bottom_facets: Vec<usize>,
    /// Facet equal to each cell side, indexed by `Side::index`.
    cell_facets: Vec<[usize; 4]>,
    /// Coarse facet containing each cell side.
    cell_coarse: Vec<[usize; 4]>,
    lookup: HashMap<(DyadicInterval, DyadicInterval), usize>,
    level_pairs: Vec<(u32, u32)>,
}

impl Mesh {
    /// Uniform `nt x nx` grid.
    pub fn new_uniform(nt: usize, nx: usize) -> Result<Mesh, MeshError> {
        if !nt.is_power_of_two() || !nx.is_power_of_two() {
            return Err(MeshError::NotPowerOfTwo { nt, nx });
        }
        let lt = nt.trailing_zeros();
        let lx = nx.trailing_zeros();
        let mut rects = Vec::with_capacity(nt * nx);
        for it in 0..nt as u64 {
            for ix in 0..nx as u64 {
                rects.push((DyadicInterval::new(lt, it), DyadicInterval::new(lx, ix)));
            }
        }
        Ok(Mesh::from_rects(rects))
    }

    /// Builds a mesh from arbitrary rectangles without checking the tiling;
    /// use [`Mesh::validate`] to inspect the result.
    pub fn from_rects(rects: Vec<(DyadicInterval, DyadicInterval)>) -> Mesh {
        let cells = rects
            .into_iter()
            .enumerate()
            .map(|(id, (t, x))| Cell { id, t, x, origin: id })
            .collect();
        Mesh::from_cells(cells)
    }

    fn from_cells(cells: Vec<Cell>) -> Mesh {
        let mut mesh = Mesh {
            cells,
            facets: Vec::new(),
            bottom_facets: Vec::new(),
            cell_facets: Vec::new(),
            cell_coarse: Vec::new(),
            lookup: HashMap::new(),
            level_pairs: Vec::new(),
        };
        mesh.build_facets();
        mesh.build_lookup();
        mesh
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn cell(&self, id: usize) -> &Cell {
        &self.cells[id]
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn facets(&self) -> &[Facet] {
        &self.facets
    }

    pub fn facet(&self, id: usize) -> &Facet {
        &self.facets[id]
    }

    /// TimeNormal facets at `t = 0`, sorted by `x`.
    pub fn bottom_facets(&self) -> &[usize] {
        &self.bottom_facets
    }

    pub fn cell_facet(&self, cell: usize, side: Side) -> usize {
        self.cell_facets[cell][side.index()]
    }

    pub fn coarse_facet(&self, cell: usize, side: Side) -> usize {
        self.cell_coarse[cell][side.index()]
    }

    pub fn coarse_space_normal_facets(&self) -> impl Iterator<Item = &Facet> {
        self.facets
            .iter()
            .filter(|f| f.coarse && f.orientation == Orientation::SpaceNormal)
    }

    fn build_facets(&mut self) {
        struct Entry {
            extent: DyadicInterval,
            cell: usize,
            side: Side,
        }
        let mut lines: HashMap<(Orientation, DyadicCoord), Vec<Entry>> = HashMap::new();
        for cell in &self.cells {
            for side in Side::ALL {
                let (position, extent) = cell.side(side);
                lines
                    .entry((side.orientation(), position))
                    .or_default()
                    .push(Entry { extent, cell: cell.id, side });
            }
        }
        let mut keys: Vec<_> = lines.keys().copied().collect();
        keys.sort();

        let mut facets = Vec::new();
        let mut cell_facets = vec![[usize::MAX; 4]; self.cells.len()];
        let mut cell_coarse = vec![[usize::MAX; 4]; self.cells.len()];
        for key in keys {
            let mut entries = lines.remove(&key).unwrap();
            entries.sort_by(|a, b| {
                (a.extent.lo(), a.extent.level, a.cell).cmp(&(b.extent.lo(), b.extent.level, b.cell))
            });
            // distinct extents in (lo asc, length desc) order; containers precede contents
            let mut groups: Vec<(DyadicInterval, Vec<usize>)> = Vec::new();
            for (k, e) in entries.iter().enumerate() {
                match groups.last_mut() {
                    Some((ext, members)) if *ext == e.extent => members.push(k),
                    _ => groups.push((e.extent, vec![k])),
                }
            }
            let base = facets.len();
            for (g, (extent, _)) in groups.iter().enumerate() {
                facets.push(Facet {
                    id: base + g,
                    orientation: key.0,
                    position: key.1,
                    extent: *extent,
                    side_neg: Vec::new(),
                    side_pos: Vec::new(),
                    coarse: true,
                });
            }
            let mut stack: Vec<usize> = Vec::new();
            for (g, (extent, members)) in groups.iter().enumerate() {
                while let Some(&top) = stack.last() {
                    if groups[top].0.hi() <= extent.lo() {
                        stack.pop();
                    } else {
                        break;
                    }
                }
                let id = base + g;
                facets[id].coarse = stack.is_empty();
                let root = stack.first().map_or(id, |&r| base + r);
                for &k in members {
                    let e = &entries[k];
                    cell_facets[e.cell][e.side.index()] = id;
                    cell_coarse[e.cell][e.side.index()] = root;
                    for target in stack.iter().map(|&a| base + a).chain(std::iter::once(id)) {
                        let list = if e.side.is_negative() {
                            &mut facets[target].side_neg
                        } else {
                            &mut facets[target].side_pos
                        };
                        list.push(e.cell);
                    }
                }
                // cells of enclosing facets also touch this one
                for &a in &stack {
                    for &k in &groups[a].1 {
                        let e = &entries[k];
                        if e.side.is_negative() {
                            facets[id].side_neg.push(e.cell);
                        } else {
                            facets[id].side_pos.push(e.cell);
                        }
                    }
                }
                stack.push(g);
            }
        }
        let mut bottom: Vec<usize> = facets
            .iter()
            .filter(|f| f.orientation == Orientation::TimeNormal && f.position == DyadicCoord::ZERO)
            .map(|f| f.id)
            .collect();
        bottom.sort_by_key(|&f| facets[f].extent.lo());
        for f in &mut facets {
            f.side_neg.sort_unstable();
            f.side_neg.dedup();
            f.side_pos.sort_unstable();
            f.side_pos.dedup();
        }
        self.facets = facets;
        self.bottom_facets = bottom;
        self.cell_facets = cell_facets;
        self.cell_coarse = cell_coarse;
    }

    fn build_lookup(&mut self) {
        self.lookup = self.cells.iter().map(|c| ((c.t, c.x), c.id)).collect();
        let pairs: HashSet<(u32, u32)> = self.cells.iter().map(|c| (c.t.level, c.x.level)).collect();
        self.level_pairs = pairs.into_iter().collect();
        self.level_pairs.sort();
    }

    /// Active cell containing `(t, x)`; points on interior facets resolve to one
    /// of the adjacent cells.
    pub fn locate(&self, t: f64, x: f64) -> Option<usize> {
        if !(0.0..=1.0).contains(&t) || !(0.0..=1.0).contains(&x) {
            return None;
        }
        self.level_pairs.iter().find_map(|&(lt, lx)| {
            let key = (DyadicInterval::containing(lt, t), DyadicInterval::containing(lx, x));
            self.lookup.get(&key).copied()
        })
    }

    pub fn find_cell(&self, t: DyadicInterval, x: DyadicInterval) -> Option<usize> {
        self.lookup.get(&(t, x)).copied()
    }

    /// Refines the marked cells and restores the neighbour balance by closure.
    pub fn refine(&self, marked: &[usize], scaling: Scaling) -> Result<Mesh, MeshError> {
        let mut flags = vec![false; self.cells.len()];
        for &m in marked {
            if m >= self.cells.len() {
                return Err(MeshError::UnknownCell(m));
            }
            flags[m] = true;
        }
        let mut mesh = Mesh::from_cells(split_marked(&self.cells, &flags, scaling, |c| c.id));
        loop {
            let violating = mesh.balance_violations(scaling);
            if violating.is_empty() {
                return Ok(mesh);
            }
            let mut flags = vec![false; mesh.cells.len()];
            for v in violating {
                flags[v] = true;
            }
            mesh = Mesh::from_cells(split_marked(&mesh.cells, &flags, scaling, |c| c.origin));
        }
    }

    /// Cells with a neighbour more than one refinement generation finer.
    ///
    /// Across SpaceNormal facets the time levels are compared (one generation
    /// is one time split of the rule), across TimeNormal facets the space levels.
    pub fn balance_violations(&self, scaling: Scaling) -> Vec<usize> {
        let mut out = HashSet::new();
        for f in &self.facets {
            for &a in &f.side_neg {
                for &b in &f.side_pos {
                    let (ca, cb) = (&self.cells[a], &self.cells[b]);
                    let (la, lb, step) = match f.orientation {
                        Orientation::SpaceNormal => (ca.t.level, cb.t.level, scaling.time_depth()),
                        Orientation::TimeNormal => (ca.x.level, cb.x.level, 1),
                    };
                    if lb > la + step {
                        out.insert(a);
                    }
                    if la > lb + step {
                        out.insert(b);
                    }
                }
            }
        }
        let mut v: Vec<_> = out.into_iter().collect();
        v.sort_unstable();
        v
    }

    /// Checks the tiling, the matching condition and the coarse flags.
    pub fn validate(&self) -> Vec<Violation> {
        let mut report = Vec::new();
        self.check_area(&mut report);
        self.check_overlaps(&mut report);
        self.check_facets(&mut report);
        report
    }

    fn check_area(&self, report: &mut Vec<Violation>) {
        let level = self.cells.iter().map(|c| c.t.level + c.x.level).max().unwrap_or(0);
        let mut sum: u128 = 0;
        for c in &self.cells {
            match sum.checked_add(1u128 << (level - c.t.level - c.x.level)) {
                Some(s) => sum = s,
                None => {
                    report.push(Violation::AreaMismatch { covered: f64::INFINITY });
                    return;
                }
            }
        }
        if sum != 1u128 << level {
            report.push(Violation::AreaMismatch { covered: sum as f64 / (1u128 << level) as f64 });
        }
    }

    /// Sweep in time keeping the x-intervals of the cells alive at the sweep line.
    fn check_overlaps(&self, report: &mut Vec<Violation>) {
        let mut events: Vec<(DyadicCoord, bool, usize)> = Vec::with_capacity(2 * self.cells.len());
        for c in &self.cells {
            events.push((c.t_lo(), true, c.id));
            events.push((c.t_hi(), false, c.id));
        }
        // removals (false) sort before insertions at equal times
        events.sort();
        let mut alive: BTreeMap<(DyadicCoord, usize), DyadicCoord> = BTreeMap::new();
        for (_, insert, id) in events {
            let c = &self.cells[id];
            if !insert {
                alive.remove(&(c.x_lo(), id));
                continue;
            }
            let (lo, hi) = (c.x_lo(), c.x_hi());
            // alive intervals are disjoint unless already reported, so walk left until one ends before lo
            for (&(_, other), &other_hi) in alive.range(..(hi, 0)).rev() {
                if other_hi <= lo {
                    break;
                }
                report.push(Violation::Overlap(other.min(id), other.max(id)));
            }
            alive.insert((lo, id), hi);
        }
    }

    fn check_facets(&self, report: &mut Vec<Violation>) {
        let mut lines: HashMap<(Orientation, DyadicCoord), Vec<&Facet>> = HashMap::new();
        for f in &self.facets {
            lines.entry((f.orientation, f.position)).or_default().push(f);
        }
        for group in lines.values() {
            for f in group {
                let mut strictly_inside = false;
                for g in group {
                    if f.id == g.id {
                        continue;
                    }
                    let (f_lo, f_hi, g_lo, g_hi) = (f.extent.lo(), f.extent.hi(), g.extent.lo(), g.extent.hi());
                    let overlap = f_lo < g_hi && g_lo < f_hi;
                    let f_in_g = g_lo <= f_lo && f_hi <= g_hi;
                    let g_in_f = f_lo <= g_lo && g_hi <= f_hi;
                    if overlap && !f_in_g && !g_in_f {
                        report.push(Violation::FacetMismatch(f.id.min(g.id), f.id.max(g.id)));
                    }
                    if f_in_g && (g_lo, g_hi) != (f_lo, f_hi) {
                        strictly_inside = true;
                    }
                }
                if f.coarse == strictly_inside {
                    report.push(Violation::CoarseFlag(f.id));
                }
            }
        }
        for c in &self.cells {
            for side in Side::ALL {
                let (pos, ext) = c.side(side);
                let containing: Vec<_> = lines[&(side.orientation(), pos)]
                    .iter()
                    .filter(|f| f.coarse && f.extent.contains(ext))
                    .collect();
                if containing.len() != 1 {
                    report.push(Violation::SideCoverage { cell: c.id, count: containing.len() });
                }
            }
        }
    }

    /// One line per active cell: `cell <id> t=[a,b] x=[c,d]`, exact decimals.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        for c in &self.cells {
            s.push_str(&format!("cell {} t={} x={}\n", c.id, c.t, c.x));
        }
        s
    }

    /// Parses the output of [`Mesh::dump`].
    pub fn from_dump(text: &str) -> Result<Mesh, MeshError> {
        let mut rects = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let bad = |reason: &str| MeshError::BadDump { line: n + 1, reason: reason.to_string() };
            let mut parts = line.split_whitespace();
            if parts.next() != Some("cell") {
                return Err(bad("expected 'cell'"));
            }
            parts.next().ok_or_else(|| bad("missing id"))?;
            let t = parts
                .next()
                .and_then(|p| p.strip_prefix("t="))
                .and_then(parse_interval)
                .ok_or_else(|| bad("bad t interval"))?;
            let x = parts
                .next()
                .and_then(|p| p.strip_prefix("x="))
                .and_then(parse_interval)
                .ok_or_else(|| bad("bad x interval"))?;
            rects.push((t, x));
        }
        Ok(Mesh::from_rects(rects))
    }
}

fn parse_interval(s: &str) -> Option<DyadicInterval> {
    let inner = s.strip_prefix('[')?.strip_suffix(']')?;
    let (a, b) = inner.split_once(',')?;
    let lo = DyadicCoord::parse(a)?;
    let hi = DyadicCoord::parse(b)?;
    let len = hi.checked_sub(lo)?;
    if len.numerator() != 1 {
        return None;
    }
    let level = len.level();
    if lo.level() > level {
        return None;
    }
    Some(DyadicInterval::new(level, lo.numerator_at(level) as u64))
}

fn split_marked(
    cells: &[Cell],
    flags: &[bool],
    scaling: Scaling,
    origin: impl Fn(&Cell) -> usize,
) -> Vec<Cell> {
    let mut out = Vec::with_capacity(cells.len() + 7 * flags.iter().filter(|&&f| f).count());
    for c in cells {
        let o = origin(c);
        if flags[c.id] {
            for (t, x) in c.children(scaling) {
                out.push(Cell { id: out.len(), t, x, origin: o });
            }
        } else {
            out.push(Cell { id: out.len(), t: c.t, x: c.x, origin: o });
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    AreaMismatch { covered: f64 },
    Overlap(usize, usize),
    FacetMismatch(usize, usize),
    CoarseFlag(usize),
    SideCoverage { cell: usize, count: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::AreaMismatch { covered } => write!(f, "cells cover area {covered} instead of 1"),
            Violation::Overlap(a, b) => write!(f, "cells {a} and {b} overlap"),
            Violation::FacetMismatch(a, b) => write!(f, "facets {a} and {b} overlap without nesting"),
            Violation::CoarseFlag(id) => write!(f, "facet {id} has a wrong coarse flag"),
            Violation::SideCoverage { cell, count } => {
                write!(f, "a side of cell {cell} lies in {count} coarse facets")
            }
        }
    }
}
