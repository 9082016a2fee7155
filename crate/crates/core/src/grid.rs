//! Rectangular lattices with an interior/boundary mask, and real values on them.
//!
//! Nodes are numbered row-major, `idx = j * nx + i`, with `x = x0 + i * hx`
//! and `y = y0 + j * hy`. A node is *interior* when the discrete operators
//! are evaluated there; *boundary* nodes carry data only (Dirichlet values,
//! stencil support); *outside* nodes are ignored.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Classification of a lattice node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NodeKind {
    Outside,
    Interior,
    Boundary,
}

impl NodeKind {
    /// Integer code used by the mask file format.
    pub fn code(self) -> u8 {
        match self {
            NodeKind::Outside => 0,
            NodeKind::Interior => 1,
            NodeKind::Boundary => 2,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(NodeKind::Outside),
            1 => Ok(NodeKind::Interior),
            2 => Ok(NodeKind::Boundary),
            other => Err(Error::Parse(format!("mask code {other} not in {{0,1,2}}"))),
        }
    }

    pub fn is_active(self) -> bool {
        self != NodeKind::Outside
    }
}

/// A rectangular lattice with an inside/boundary classification.
#[derive(Clone, Debug, PartialEq)]
pub struct GridDomain {
    nx: usize,
    ny: usize,
    x0: f64,
    y0: f64,
    hx: f64,
    hy: f64,
    mask: Vec<NodeKind>,
    interior: Vec<usize>,
    boundary: Vec<usize>,
    /// Quadrature weight per node; zero off the interior.
    weights: Vec<f64>,
}

impl GridDomain {
    /// Builds a domain from an explicit mask, checking the lattice invariants.
    pub fn new(
        nx: usize,
        ny: usize,
        x0: f64,
        y0: f64,
        hx: f64,
        hy: f64,
        mask: Vec<NodeKind>,
    ) -> Result<Self> {
        if nx < 3 || ny < 3 {
            return Err(Error::GridTooSmall { nx, ny });
        }
        if !(hx > 0.0 && hy > 0.0 && hx.is_finite() && hy.is_finite()) {
            return Err(Error::InvalidGrid(format!(
                "spacings must be positive, got hx = {hx}, hy = {hy}"
            )));
        }
        if !(x0.is_finite() && y0.is_finite()) {
            return Err(Error::InvalidGrid("origin must be finite".into()));
        }
        if mask.len() != nx * ny {
            return Err(Error::InvalidGrid(format!(
                "mask has {} entries, expected {}",
                mask.len(),
                nx * ny
            )));
        }
        let mut interior = Vec::new();
        let mut boundary = Vec::new();
        for j in 0..ny {
            for i in 0..nx {
                let idx = j * nx + i;
                match mask[idx] {
                    NodeKind::Interior => {
                        if i == 0 || j == 0 || i == nx - 1 || j == ny - 1 {
                            return Err(Error::InvalidGrid(format!(
                                "interior node ({i}, {j}) lies on the lattice edge"
                            )));
                        }
                        for n in [idx - 1, idx + 1, idx - nx, idx + nx] {
                            if mask[n] == NodeKind::Outside {
                                return Err(Error::InvalidGrid(format!(
                                    "interior node ({i}, {j}) has an outside 4-neighbour"
                                )));
                            }
                        }
                        interior.push(idx);
                    }
                    NodeKind::Boundary => boundary.push(idx),
                    NodeKind::Outside => {}
                }
            }
        }
        if interior.is_empty() {
            return Err(Error::InvalidGrid("domain has no interior nodes".into()));
        }
        let mut weights = vec![0.0; nx * ny];
        for &k in &interior {
            weights[k] = hx * hy;
        }
        Ok(Self {
            nx,
            ny,
            x0,
            y0,
            hx,
            hy,
            mask,
            interior,
            boundary,
            weights,
        })
    }

    /// Interior nodes are the non-edge lattice nodes where `inside` holds;
    /// boundary nodes are the remaining nodes with an interior 4-neighbour.
    pub fn from_predicate(
        nx: usize,
        ny: usize,
        x0: f64,
        y0: f64,
        hx: f64,
        hy: f64,
        inside: impl Fn(f64, f64) -> bool,
    ) -> Result<Self> {
        if nx < 3 || ny < 3 {
            return Err(Error::GridTooSmall { nx, ny });
        }
        let mut flags = vec![false; nx * ny];
        for j in 1..ny - 1 {
            for i in 1..nx - 1 {
                flags[j * nx + i] = inside(x0 + i as f64 * hx, y0 + j as f64 * hy);
            }
        }
        Self::new(nx, ny, x0, y0, hx, hy, mask_from_flags(nx, ny, &flags))
    }

    /// Cell-centred lattice over `[x_min, x_max] x [y_min, y_max]`.
    ///
    /// Interior nodes are the centres of the cells tiling the rectangle, so
    /// the midpoint rule over interior nodes integrates over exactly the
    /// rectangle. The boundary nodes form a ghost ring half a cell outside.
    pub fn rectangle(x_min: f64, x_max: f64, y_min: f64, y_max: f64, h: f64) -> Result<Self> {
        if !(x_max > x_min && y_max > y_min) {
            return Err(Error::InvalidGrid(format!(
                "empty rectangle [{x_min}, {x_max}] x [{y_min}, {y_max}]"
            )));
        }
        if !(h > 0.0) {
            return Err(Error::InvalidGrid(format!("spacing must be positive, got {h}")));
        }
        let cx = ((x_max - x_min) / h).round().max(1.0) as usize;
        let cy = ((y_max - y_min) / h).round().max(1.0) as usize;
        let hx = (x_max - x_min) / cx as f64;
        let hy = (y_max - y_min) / cy as f64;
        let (nx, ny) = (cx + 2, cy + 2);
        // ghost ring, corners included so that mixed differences stay centred
        let mut mask = vec![NodeKind::Boundary; nx * ny];
        for j in 1..ny - 1 {
            for i in 1..nx - 1 {
                mask[j * nx + i] = NodeKind::Interior;
            }
        }
        Self::new(nx, ny, x_min - 0.5 * hx, y_min - 0.5 * hy, hx, hy, mask)
    }

    /// Node-centred lattice on the disk of radius `radius` about `(cx, cy)`;
    /// the centre is a lattice node.
    ///
    /// A node is interior iff `r^2 < R^2 - h^2`, so every boundary node lies
    /// within `2h` (in `|r^2 - R^2|`) of the circle.
    pub fn disk(cx: f64, cy: f64, radius: f64, h: f64) -> Result<Self> {
        if !(radius > 0.0 && h > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "disk needs radius > 0 and h > 0, got R = {radius}, h = {h}"
            )));
        }
        let m = (radius / h).ceil() as usize + 2;
        let n = 2 * m + 1;
        let x0 = cx - m as f64 * h;
        let y0 = cy - m as f64 * h;
        let r2 = radius * radius - h * h;
        let d = Self::from_predicate(n, n, x0, y0, h, h, |x, y| {
            (x - cx).powi(2) + (y - cy).powi(2) < r2
        })?;
        Ok(d.with_cut_cell_weights(|x, y| (x - cx).powi(2) + (y - cy).powi(2) < radius * radius))
    }

    /// Node-centred lattice on the annulus `r_inner < r < r_outer`.
    pub fn annulus(cx: f64, cy: f64, r_inner: f64, r_outer: f64, h: f64) -> Result<Self> {
        if !(r_outer > r_inner && r_inner >= 0.0 && h > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "annulus needs 0 <= r_inner < r_outer, h > 0; got {r_inner}, {r_outer}, {h}"
            )));
        }
        let m = (r_outer / h).ceil() as usize + 2;
        let n = 2 * m + 1;
        let x0 = cx - m as f64 * h;
        let y0 = cy - m as f64 * h;
        let lo = r_inner * r_inner + h * h;
        let hi = r_outer * r_outer - h * h;
        let d = Self::from_predicate(n, n, x0, y0, h, h, |x, y| {
            let r2 = (x - cx).powi(2) + (y - cy).powi(2);
            r2 > lo && r2 < hi
        })?;
        Ok(d.with_cut_cell_weights(|x, y| {
            let r2 = (x - cx).powi(2) + (y - cy).powi(2);
            r2 > r_inner * r_inner && r2 < r_outer * r_outer
        }))
    }

    /// Replaces the uniform weights by the area of each cell inside the
    /// region `inside`, estimated on a 16 x 16 sub-grid for cut cells.
    ///
    /// A cut cell whose node is not interior hands its area to the nearest
    /// interior node within two lattice steps, so smooth integrands are
    /// integrated to second order over curved regions.
    pub fn with_cut_cell_weights(mut self, inside: impl Fn(f64, f64) -> bool) -> Self {
        const SUB: usize = 16;
        let cell = self.hx * self.hy;
        let fraction = |x: f64, y: f64| -> f64 {
            let corners = [(-0.5, -0.5), (0.5, -0.5), (-0.5, 0.5), (0.5, 0.5)]
                .map(|(a, b)| inside(x + a * self.hx, y + b * self.hy));
            let centre = inside(x, y);
            if corners.iter().all(|&c| c == centre) {
                // corners agree with the centre: the cell is taken as whole
                return if centre { 1.0 } else { 0.0 };
            }
            let mut hits = 0usize;
            for b in 0..SUB {
                for a in 0..SUB {
                    let sx = x + ((a as f64 + 0.5) / SUB as f64 - 0.5) * self.hx;
                    let sy = y + ((b as f64 + 0.5) / SUB as f64 - 0.5) * self.hy;
                    hits += usize::from(inside(sx, sy));
                }
            }
            hits as f64 / (SUB * SUB) as f64
        };
        let mut weights = vec![0.0; self.len()];
        for k in 0..self.len() {
            let (x, y) = self.coords(k);
            let w = fraction(x, y) * cell;
            if w == 0.0 {
                continue;
            }
            if self.is_interior(k) {
                weights[k] += w;
                continue;
            }
            let mut best: Option<(f64, usize)> = None;
            for dj in -2..=2isize {
                for di in -2..=2isize {
                    if let Some(nb) = self.offset(k, di, dj).filter(|&nb| self.is_interior(nb)) {
                        let d2 = (di * di + dj * dj) as f64;
                        if best.is_none_or(|(bd, _)| d2 < bd) {
                            best = Some((d2, nb));
                        }
                    }
                }
            }
            if let Some((_, nb)) = best {
                weights[nb] += w;
            }
        }
        self.weights = weights;
        self
    }

    /// Same lattice, with the interior shrunk to nodes where `keep` holds.
    pub fn restricted(&self, keep: &[bool]) -> Result<Self> {
        if keep.len() != self.len() {
            return Err(Error::InvalidGrid("restriction mask has the wrong length".into()));
        }
        let mut flags = vec![false; self.len()];
        for j in 1..self.ny - 1 {
            for i in 1..self.nx - 1 {
                let idx = self.index(i, j);
                flags[idx] = keep[idx]
                    && self.mask[idx].is_active()
                    && [idx - 1, idx + 1, idx - self.nx, idx + self.nx]
                        .iter()
                        .all(|&n| keep[n] && self.mask[n].is_active());
            }
        }
        let mut mask = mask_from_flags(self.nx, self.ny, &flags);
        // keep covered nodes that are not interior as data-carrying boundary
        for (idx, kind) in mask.iter_mut().enumerate() {
            if *kind == NodeKind::Outside && keep[idx] && self.mask[idx].is_active() {
                *kind = NodeKind::Boundary;
            }
        }
        Self::new(self.nx, self.ny, self.x0, self.y0, self.hx, self.hy, mask)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }
    pub fn ny(&self) -> usize {
        self.ny
    }
    pub fn x0(&self) -> f64 {
        self.x0
    }
    pub fn y0(&self) -> f64 {
        self.y0
    }
    pub fn hx(&self) -> f64 {
        self.hx
    }
    pub fn hy(&self) -> f64 {
        self.hy
    }
    /// The coarser of the two spacings.
    pub fn h(&self) -> f64 {
        self.hx.max(self.hy)
    }
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }
    pub fn is_empty(&self) -> bool {
        self.mask.is_empty()
    }
    pub fn mask(&self) -> &[NodeKind] {
        &self.mask
    }
    pub fn kind(&self, idx: usize) -> NodeKind {
        self.mask[idx]
    }
    pub fn is_interior(&self, idx: usize) -> bool {
        self.mask[idx] == NodeKind::Interior
    }
    pub fn is_active(&self, idx: usize) -> bool {
        self.mask[idx].is_active()
    }
    pub fn interior_nodes(&self) -> &[usize] {
        &self.interior
    }
    pub fn boundary_nodes(&self) -> &[usize] {
        &self.boundary
    }
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }
    pub fn ij(&self, idx: usize) -> (usize, usize) {
        (idx % self.nx, idx / self.nx)
    }
    pub fn coords(&self, idx: usize) -> (f64, f64) {
        let (i, j) = self.ij(idx);
        (self.x0 + i as f64 * self.hx, self.y0 + j as f64 * self.hy)
    }

    /// Index of the node offset by `(di, dj)`, if it lies on the lattice.
    pub fn offset(&self, idx: usize, di: isize, dj: isize) -> Option<usize> {
        let (i, j) = self.ij(idx);
        let ni = i as isize + di;
        let nj = j as isize + dj;
        if ni < 0 || nj < 0 || ni >= self.nx as isize || nj >= self.ny as isize {
            None
        } else {
            Some(nj as usize * self.nx + ni as usize)
        }
    }

    /// Area of the domain as seen by the quadrature.
    pub fn area(&self) -> f64 {
        let w: Vec<f64> = self.interior.iter().map(|&k| self.weights[k]).collect();
        pairwise_sum(&w)
    }

    /// Quadrature weight of node `idx` (zero off the interior).
    pub fn weight(&self, idx: usize) -> f64 {
        self.weights[idx]
    }

    /// Lattice node closest to `(x, y)`.
    pub fn nearest_node(&self, x: f64, y: f64) -> usize {
        let i = ((x - self.x0) / self.hx).round().clamp(0.0, (self.nx - 1) as f64) as usize;
        let j = ((y - self.y0) / self.hy).round().clamp(0.0, (self.ny - 1) as f64) as usize;
        self.index(i, j)
    }

    pub fn same_lattice(&self, other: &GridDomain) -> bool {
        self.nx == other.nx
            && self.ny == other.ny
            && self.x0 == other.x0
            && self.y0 == other.y0
            && self.hx == other.hx
            && self.hy == other.hy
    }

    /// Writes the mask file: header line then `ny` rows of codes.
    pub fn write_mask_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{}", self.header())?;
        for j in 0..self.ny {
            let row: Vec<String> = (0..self.nx)
                .map(|i| self.mask[self.index(i, j)].code().to_string())
                .collect();
            writeln!(w, "{}", row.join(","))?;
        }
        if !self.has_uniform_weights() {
            writeln!(w, "weights")?;
            for j in 0..self.ny {
                let row: Vec<String> = (0..self.nx)
                    .map(|i| self.weights[self.index(i, j)].to_string())
                    .collect();
                writeln!(w, "{}", row.join(","))?;
            }
        }
        Ok(())
    }

    fn has_uniform_weights(&self) -> bool {
        self.interior.iter().all(|&k| self.weights[k] == self.hx * self.hy)
    }

    /// Reads a mask file, with the optional `weights` block that follows
    /// the codes on curved regions.
    pub fn read_mask_csv<R: Read>(mut r: R) -> Result<Self> {
        let mut text = String::new();
        r.read_to_string(&mut text)?;
        let (codes, weights) = match text.find("\nweights") {
            Some(at) => {
                let rest = &text[at + "\nweights".len()..];
                (&text[..at + 1], Some(rest))
            }
            None => (text.as_str(), None),
        };
        let mut d = Self::read_codes(codes.as_bytes())?;
        if let Some(block) = weights {
            let vals: Vec<f64> = block
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|t| !t.is_empty())
                .map(|t| t.parse().map_err(|_| Error::Parse(format!("bad weight {t:?}"))))
                .collect::<Result<_>>()?;
            if vals.len() != d.len() {
                return Err(Error::Parse(format!(
                    "weights block has {} entries, expected {}",
                    vals.len(),
                    d.len()
                )));
            }
            if (0..d.len()).any(|k| !(vals[k] >= 0.0) || (vals[k] > 0.0 && !d.is_interior(k))) {
                return Err(Error::Parse("weights must be >= 0 and vanish off the interior".into()));
            }
            d.weights = vals;
        }
        Ok(d)
    }

    fn read_codes<R: Read>(r: R) -> Result<Self> {
        let (header, rows) = read_table(r)?;
        let mut mask = Vec::with_capacity(header.nx * header.ny);
        for row in rows {
            for v in row {
                let code: u8 = v
                    .trim()
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad mask entry {v:?}")))?;
                mask.push(NodeKind::from_code(code)?);
            }
        }
        Self::new(
            header.nx, header.ny, header.x0, header.y0, header.hx, header.hy, mask,
        )
    }

    fn header(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.nx, self.ny, self.x0, self.y0, self.hx, self.hy
        )
    }
}

fn mask_from_flags(nx: usize, ny: usize, interior: &[bool]) -> Vec<NodeKind> {
    let mut mask = vec![NodeKind::Outside; nx * ny];
    for j in 0..ny {
        for i in 0..nx {
            let idx = j * nx + i;
            if interior[idx] {
                mask[idx] = NodeKind::Interior;
                continue;
            }
            let touches = (i > 0 && interior[idx - 1])
                || (i + 1 < nx && interior[idx + 1])
                || (j > 0 && interior[idx - nx])
                || (j + 1 < ny && interior[idx + nx]);
            if touches {
                mask[idx] = NodeKind::Boundary;
            }
        }
    }
    mask
}

/// Continuous region description, discretised on demand at a given spacing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Region {
    Rectangle {
        x_min: f64,
        x_max: f64,
        y_min: f64,
        y_max: f64,
    },
    Disk {
        #[serde(default)]
        cx: f64,
        #[serde(default)]
        cy: f64,
        radius: f64,
    },
    Annulus {
        #[serde(default)]
        cx: f64,
        #[serde(default)]
        cy: f64,
        r_inner: f64,
        r_outer: f64,
    },
}

impl Region {
    pub fn grid(&self, h: f64) -> Result<GridDomain> {
        match *self {
            Region::Rectangle {
                x_min,
                x_max,
                y_min,
                y_max,
            } => GridDomain::rectangle(x_min, x_max, y_min, y_max, h),
            Region::Disk { cx, cy, radius } => GridDomain::disk(cx, cy, radius, h),
            Region::Annulus {
                cx,
                cy,
                r_inner,
                r_outer,
            } => GridDomain::annulus(cx, cy, r_inner, r_outer, h),
        }
    }

    /// The region grown outward by `pad` (the annulus hole shrinks, never
    /// below radius 0).
    pub fn padded(&self, pad: f64) -> Region {
        match *self {
            Region::Rectangle {
                x_min,
                x_max,
                y_min,
                y_max,
            } => Region::Rectangle {
                x_min: x_min - pad,
                x_max: x_max + pad,
                y_min: y_min - pad,
                y_max: y_max + pad,
            },
            Region::Disk { cx, cy, radius } => Region::Disk {
                cx,
                cy,
                radius: radius + pad,
            },
            Region::Annulus {
                cx,
                cy,
                r_inner,
                r_outer,
            } => Region::Annulus {
                cx,
                cy,
                r_inner: (r_inner - pad).max(0.0),
                r_outer: r_outer + pad,
            },
        }
    }

    /// Membership in the closed region, up to `tol`.
    pub fn contains(&self, x: f64, y: f64, tol: f64) -> bool {
        match *self {
            Region::Rectangle {
                x_min,
                x_max,
                y_min,
                y_max,
            } => x >= x_min - tol && x <= x_max + tol && y >= y_min - tol && y <= y_max + tol,
            Region::Disk { cx, cy, radius } => (x - cx).hypot(y - cy) <= radius + tol,
            Region::Annulus {
                cx,
                cy,
                r_inner,
                r_outer,
            } => {
                let r = (x - cx).hypot(y - cy);
                r >= r_inner - tol && r <= r_outer + tol
            }
        }
    }

    pub fn unit_disk() -> Self {
        Region::Disk {
            cx: 0.0,
            cy: 0.0,
            radius: 1.0,
        }
    }
}

/// Values `u(x, y)` on the interior and boundary nodes of a domain.
///
/// Outside nodes hold `NaN`.
#[derive(Clone, Debug)]
pub struct GridFunction {
    domain: Arc<GridDomain>,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(domain: Arc<GridDomain>, mut values: Vec<f64>) -> Result<Self> {
        if values.len() != domain.len() {
            return Err(Error::InvalidGrid(format!(
                "{} values for a lattice of {} nodes",
                values.len(),
                domain.len()
            )));
        }
        for (idx, v) in values.iter_mut().enumerate() {
            if domain.is_active(idx) {
                if !v.is_finite() {
                    let (i, j) = domain.ij(idx);
                    return Err(Error::InvalidGrid(format!(
                        "non-finite value at active node ({i}, {j})"
                    )));
                }
            } else {
                *v = f64::NAN;
            }
        }
        Ok(Self { domain, values })
    }

    /// Samples `f` at every active node.
    pub fn from_fn(domain: Arc<GridDomain>, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let values = (0..domain.len())
            .map(|idx| {
                if domain.is_active(idx) {
                    let (x, y) = domain.coords(idx);
                    f(x, y)
                } else {
                    f64::NAN
                }
            })
            .collect();
        Self::new(domain, values)
    }

    pub fn domain(&self) -> &GridDomain {
        &self.domain
    }
    pub fn domain_arc(&self) -> &Arc<GridDomain> {
        &self.domain
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn value(&self, idx: usize) -> f64 {
        self.values[idx]
    }

    /// Max of `|u - v|` over the active nodes of `self`.
    pub fn max_abs_diff(&self, other: &GridFunction) -> Result<f64> {
        if !self.domain.same_lattice(&other.domain) {
            return Err(Error::InvalidGrid("functions live on different lattices".into()));
        }
        Ok(self
            .active()
            .map(|idx| (self.values[idx] - other.values[idx]).abs())
            .fold(0.0, f64::max))
    }

    /// Max of `|u - v|` over the boundary nodes.
    pub fn boundary_gap(&self, other: &GridFunction) -> Result<f64> {
        if !self.domain.same_lattice(&other.domain) {
            return Err(Error::InvalidGrid("functions live on different lattices".into()));
        }
        Ok(self
            .domain
            .boundary_nodes()
            .iter()
            .map(|&idx| (self.values[idx] - other.values[idx]).abs())
            .fold(0.0, f64::max))
    }

    fn active(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.domain.len()).filter(|&idx| self.domain.is_active(idx))
    }

    /// Writes the grid file: `nx,ny,x0,y0,hx,hy` then `ny` rows of `nx`
    /// values, y increasing. Outside nodes are written as `NaN`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let d = &self.domain;
        writeln!(w, "{}", d.header())?;
        let mut line = String::new();
        for j in 0..d.ny {
            line.clear();
            for i in 0..d.nx {
                if i > 0 {
                    line.push(',');
                }
                let _ = write!(line, "{}", self.values[d.index(i, j)]);
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    /// Reads a grid file. Without a mask every non-edge node is interior and
    /// the lattice edge is boundary.
    pub fn read_csv<R: Read>(r: R, mask: Option<GridDomain>) -> Result<Self> {
        let (header, rows) = read_table(r)?;
        let mut values = Vec::with_capacity(header.nx * header.ny);
        for row in rows {
            for v in row {
                let v: f64 = v
                    .trim()
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad value {v:?}")))?;
                values.push(v);
            }
        }
        let domain = match mask {
            Some(d) => {
                if d.nx != header.nx || d.ny != header.ny {
                    return Err(Error::Parse("mask shape does not match grid shape".into()));
                }
                d
            }
            None => {
                let (nx, ny) = (header.nx, header.ny);
                GridDomain::from_predicate(nx, ny, header.x0, header.y0, header.hx, header.hy, |_, _| {
                    true
                })?
            }
        };
        Self::new(Arc::new(domain), values)
    }
}

struct Header {
    nx: usize,
    ny: usize,
    x0: f64,
    y0: f64,
    hx: f64,
    hy: f64,
}

fn read_table<R: Read>(r: R) -> Result<(Header, Vec<Vec<String>>)> {
    let reader = BufReader::new(r);
    let mut lines = reader.lines().filter(|l| match l {
        Ok(s) => !s.trim().is_empty(),
        Err(_) => true,
    });
    let first = lines
        .next()
        .ok_or_else(|| Error::Parse("empty grid file".into()))??;
    let fields: Vec<&str> = first.split(',').map(str::trim).collect();
    if fields.len() != 6 {
        return Err(Error::Parse(format!(
            "header must be nx,ny,x0,y0,hx,hy; got {first:?}"
        )));
    }
    let int = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| Error::Parse(format!("bad integer {s:?} in header")))
    };
    let real = |s: &str| {
        s.parse::<f64>()
            .map_err(|_| Error::Parse(format!("bad real {s:?} in header")))
    };
    let header = Header {
        nx: int(fields[0])?,
        ny: int(fields[1])?,
        x0: real(fields[2])?,
        y0: real(fields[3])?,
        hx: real(fields[4])?,
        hy: real(fields[5])?,
    };
    let mut rows = Vec::with_capacity(header.ny);
    for line in lines {
        let line = line?;
        let row: Vec<String> = line.split(',').map(|s| s.to_string()).collect();
        if row.len() != header.nx {
            return Err(Error::Parse(format!(
                "row {} has {} entries, expected {}",
                rows.len(),
                row.len(),
                header.nx
            )));
        }
        rows.push(row);
    }
    if rows.len() != header.ny {
        return Err(Error::Parse(format!(
            "{} rows, expected {}",
            rows.len(),
            header.ny
        )));
    }
    Ok((header, rows))
}

/// Pairwise summation with a tree shape fixed by the length alone.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const LEAF: usize = 16;
    if xs.len() <= LEAF {
        xs.iter().sum()
    } else {
        let mid = xs.len() / 2;
        pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rectangle_interior_tiles_the_rectangle() {
        let d = GridDomain::rectangle(0.0, 1.0, 0.0, 2.0, 0.125).unwrap();
        assert_eq!(d.interior_nodes().len(), 8 * 16);
        assert!((d.area() - 2.0).abs() < 1e-14);
        let (x, y) = d.coords(d.interior_nodes()[0]);
        assert!((x - 0.0625).abs() < 1e-15 && (y - 0.0625).abs() < 1e-15);
    }

    #[test]
    fn interior_neighbours_are_active() {
        for d in [
            GridDomain::disk(0.0, 0.0, 1.0, 0.05).unwrap(),
            GridDomain::annulus(0.0, 0.0, 0.3, 1.0, 0.05).unwrap(),
            GridDomain::rectangle(-1.0, 1.0, -0.5, 0.5, 0.1).unwrap(),
        ] {
            for &idx in d.interior_nodes() {
                for (di, dj) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
                    let n = d.offset(idx, di, dj).unwrap();
                    assert!(d.is_active(n));
                }
            }
            assert!(!d.boundary_nodes().is_empty());
        }
    }

    #[test]
    fn disk_boundary_hugs_the_circle() {
        let h = 1.0 / 64.0;
        let d = GridDomain::disk(0.0, 0.0, 1.0, h).unwrap();
        for &idx in d.boundary_nodes() {
            let (x, y) = d.coords(idx);
            assert!((x * x + y * y - 1.0).abs() <= 2.0 * h);
        }
        assert_eq!(d.coords(d.nearest_node(0.0, 0.0)), (0.0, 0.0));
    }

    #[test]
    fn too_small_is_rejected() {
        let err = GridDomain::new(2, 5, 0.0, 0.0, 1.0, 1.0, vec![NodeKind::Outside; 10]);
        assert!(matches!(err, Err(Error::GridTooSmall { .. })));
    }

    #[test]
    fn csv_round_trip_with_mask() {
        let d = Arc::new(GridDomain::disk(0.0, 0.0, 1.0, 0.25).unwrap());
        let u = GridFunction::from_fn(d.clone(), |x, y| x * x - 0.5 * y).unwrap();
        let mut buf = Vec::new();
        u.write_csv(&mut buf).unwrap();
        let mut mbuf = Vec::new();
        d.write_mask_csv(&mut mbuf).unwrap();
        let mask = GridDomain::read_mask_csv(&mbuf[..]).unwrap();
        assert_eq!(&mask, d.as_ref());
        let back = GridFunction::read_csv(&buf[..], Some(mask)).unwrap();
        assert_eq!(back.max_abs_diff(&u).unwrap(), 0.0);
    }

    #[test]
    fn pairwise_sum_is_order_fixed() {
        let xs: Vec<f64> = (0..1000).map(|k| 1.0 / (k as f64 + 1.0)).collect();
        assert_eq!(pairwise_sum(&xs), pairwise_sum(&xs.clone()));
        let naive: f64 = xs.iter().sum();
        assert!((pairwise_sum(&xs) - naive).abs() < 1e-12);
    }
}
