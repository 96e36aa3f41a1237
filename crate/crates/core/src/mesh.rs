//! Boundary meshes of the lateral boundary `{a, b} x (0, T)`.
//!
//! Each side is an independent partition of `(0, T)` stored as its sorted
//! node list. Global element numbering is all left-side elements in
//! increasing time followed by all right-side elements.

use crate::error::{Error, Result};
use std::fmt::Write as _;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    /// `x = a`, outward normal `-1`.
    Left,
    /// `x = b`, outward normal `+1`.
    Right,
}

impl Side {
    pub fn normal(self) -> f64 {
        match self {
            Side::Left => -1.0,
            Side::Right => 1.0,
        }
    }

    pub fn tag(self) -> char {
        match self {
            Side::Left => 'L',
            Side::Right => 'R',
        }
    }

    pub const BOTH: [Side; 2] = [Side::Left, Side::Right];
}

/// Spatial domain `(a, b)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub a: f64,
    pub b: f64,
}

impl Interval {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if a.is_finite() && b.is_finite() && a < b {
            Ok(Self { a, b })
        } else {
            Err(Error::InvalidParameter(format!("interval requires a < b, got ({a}, {b})")))
        }
    }

    pub fn unit() -> Self {
        Self { a: 0.0, b: 1.0 }
    }

    pub fn position(&self, side: Side) -> f64 {
        match side {
            Side::Left => self.a,
            Side::Right => self.b,
        }
    }

    pub fn length(&self) -> f64 {
        self.b - self.a
    }

    pub fn contains(&self, x: f64) -> bool {
        x > self.a && x < self.b
    }
}

impl Default for Interval {
    fn default() -> Self {
        Self::unit()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryElement {
    pub side: Side,
    pub t_begin: f64,
    pub t_end: f64,
    pub index: usize,
    /// Spatial coordinate of the side the element lives on.
    pub x: f64,
}

impl BoundaryElement {
    #[inline]
    pub fn size(&self) -> f64 {
        self.t_end - self.t_begin
    }

    #[inline]
    pub fn normal(&self) -> f64 {
        self.side.normal()
    }

    #[inline]
    pub fn times(&self) -> (f64, f64) {
        (self.t_begin, self.t_end)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryMesh {
    interval: Interval,
    horizon: f64,
    level: usize,
    left: Vec<f64>,
    right: Vec<f64>,
}

impl BoundaryMesh {
    /// Builds a mesh from explicit node lists, one per side.
    pub fn from_nodes(interval: Interval, horizon: f64, left: Vec<f64>, right: Vec<f64>) -> Result<Self> {
        let mesh = Self {
            interval,
            horizon,
            level: 0,
            left,
            right,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    /// `2^level` equal elements on each side of `interval x (0, horizon)`.
    pub fn uniform(interval: Interval, horizon: f64, level: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidParameter(format!("horizon must be positive, got {horizon}")));
        }
        if level > 24 {
            return Err(Error::InvalidParameter(format!("level {level} is too large")));
        }
        let n = 1usize << level;
        let nodes: Vec<f64> = (0..=n).map(|i| horizon * i as f64 / n as f64).collect();
        Ok(Self {
            interval,
            horizon,
            level,
            left: nodes.clone(),
            right: nodes,
        })
    }

    pub fn interval(&self) -> Interval {
        self.interval
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Refinement generation: number of refinement steps since construction.
    pub fn level(&self) -> usize {
        self.level
    }

    pub fn nodes(&self, side: Side) -> &[f64] {
        match side {
            Side::Left => &self.left,
            Side::Right => &self.right,
        }
    }

    pub fn count(&self, side: Side) -> usize {
        self.nodes(side).len() - 1
    }

    /// Total number of elements `N`.
    pub fn len(&self) -> usize {
        self.count(Side::Left) + self.count(Side::Right)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn elements(&self) -> impl Iterator<Item = BoundaryElement> + '_ {
        let nl = self.count(Side::Left);
        Side::BOTH.into_iter().flat_map(move |side| {
            let offset = if side == Side::Left { 0 } else { nl };
            let x = self.interval.position(side);
            self.nodes(side).windows(2).enumerate().map(move |(i, w)| BoundaryElement {
                side,
                t_begin: w[0],
                t_end: w[1],
                index: offset + i,
                x,
            })
        })
    }

    pub fn element(&self, index: usize) -> BoundaryElement {
        let nl = self.count(Side::Left);
        let (side, local) = if index < nl {
            (Side::Left, index)
        } else {
            (Side::Right, index - nl)
        };
        assert!(local < self.count(side), "element index {index} out of range");
        let nodes = self.nodes(side);
        BoundaryElement {
            side,
            t_begin: nodes[local],
            t_end: nodes[local + 1],
            index,
            x: self.interval.position(side),
        }
    }

    pub fn sizes(&self) -> Vec<f64> {
        self.elements().map(|e| e.size()).collect()
    }

    /// Global mesh size `h = max h_l`.
    pub fn h_max(&self) -> f64 {
        self.elements().map(|e| e.size()).fold(0.0, f64::max)
    }

    pub fn h_min(&self) -> f64 {
        self.elements().map(|e| e.size()).fold(f64::INFINITY, f64::min)
    }

    /// Checks the partition invariant on both sides.
    pub fn validate(&self) -> Result<()> {
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::InvalidMesh(format!("horizon must be positive, got {}", self.horizon)));
        }
        for side in Side::BOTH {
            let nodes = self.nodes(side);
            if nodes.len() < 2 {
                return Err(Error::InvalidMesh(format!("side {} has no elements", side.tag())));
            }
            let tol = 1e-12 * self.horizon;
            if nodes[0].abs() > tol || (nodes[nodes.len() - 1] - self.horizon).abs() > tol {
                return Err(Error::InvalidMesh(format!(
                    "side {} does not span (0, {})",
                    side.tag(),
                    self.horizon
                )));
            }
            if let Some(w) = nodes.windows(2).find(|w| !(w[1] > w[0])) {
                return Err(Error::InvalidMesh(format!(
                    "side {} has a degenerate or unsorted element [{}, {}]",
                    side.tag(),
                    w[0],
                    w[1]
                )));
            }
        }
        Ok(())
    }

    /// Bisects every element.
    pub fn refine_uniform(&self) -> Self {
        let bisect = |nodes: &[f64]| {
            let mut out = Vec::with_capacity(2 * nodes.len() - 1);
            for w in nodes.windows(2) {
                out.push(w[0]);
                out.push(0.5 * (w[0] + w[1]));
            }
            out.push(*nodes.last().unwrap());
            out
        };
        Self {
            interval: self.interval,
            horizon: self.horizon,
            level: self.level + 1,
            left: bisect(&self.left),
            right: bisect(&self.right),
        }
    }

    /// Bisects the elements selected by `marked` (global indices).
    pub fn refine_marked(&self, marked: &[bool]) -> Result<Self> {
        if marked.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                actual: marked.len(),
            });
        }
        let nl = self.count(Side::Left);
        let split = |nodes: &[f64], flags: &[bool]| {
            let mut out = Vec::with_capacity(nodes.len() + flags.len());
            for (w, &m) in nodes.windows(2).zip(flags) {
                out.push(w[0]);
                if m {
                    out.push(0.5 * (w[0] + w[1]));
                }
            }
            out.push(*nodes.last().unwrap());
            out
        };
        Ok(Self {
            interval: self.interval,
            horizon: self.horizon,
            level: self.level + 1,
            left: split(&self.left, &marked[..nl]),
            right: split(&self.right, &marked[nl..]),
        })
    }

    /// Maximum marking: bisects every element with `eta >= theta * max eta`.
    ///
    /// If all indicators vanish the largest element is refined so that the
    /// mesh always grows.
    pub fn refine_adaptive(&self, indicators: &[f64], theta: f64) -> Result<Self> {
        self.refine_marked(&self.mark_maximum(indicators, theta)?)
    }

    /// The marking used by [`refine_adaptive`](Self::refine_adaptive).
    pub fn mark_maximum(&self, indicators: &[f64], theta: f64) -> Result<Vec<bool>> {
        if indicators.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                actual: indicators.len(),
            });
        }
        if !(theta > 0.0 && theta <= 1.0) {
            return Err(Error::InvalidParameter(format!("marking parameter must lie in (0, 1], got {theta}")));
        }
        if let Some(bad) = indicators.iter().find(|e| !(e.is_finite() && **e >= 0.0)) {
            return Err(Error::InvalidParameter(format!("indicators must be finite and nonnegative, got {bad}")));
        }
        let max = indicators.iter().copied().fold(0.0, f64::max);
        if max == 0.0 {
            let sizes = self.sizes();
            let mut largest = 0;
            for (i, h) in sizes.iter().enumerate() {
                if *h > sizes[largest] {
                    largest = i;
                }
            }
            let mut marked = vec![false; self.len()];
            marked[largest] = true;
            return Ok(marked);
        }
        Ok(indicators.iter().map(|&e| e >= theta * max).collect())
    }

    /// Local quasi-uniformity constant `c_L`: the largest size ratio between
    /// adjacent elements on the same side (1 when no element has a neighbour).
    pub fn quasi_uniformity_constant(&self) -> f64 {
        Side::BOTH
            .into_iter()
            .flat_map(|side| {
                let nodes = self.nodes(side);
                nodes.windows(3).map(|w| {
                    let h0 = w[1] - w[0];
                    let h1 = w[2] - w[1];
                    (h0 / h1).max(h1 / h0)
                })
            })
            .fold(1.0, f64::max)
    }

    /// One line per element, `side t_begin t_end`, 17 significant digits.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for e in self.elements() {
            let _ = writeln!(out, "{} {:.16e} {:.16e}", e.side.tag(), e.t_begin, e.t_end);
        }
        out
    }

    /// Parses the format written by [`to_text`](Self::to_text).
    pub fn from_text(interval: Interval, text: &str) -> Result<Self> {
        let mut left: Vec<(f64, f64)> = Vec::new();
        let mut right: Vec<(f64, f64)> = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parse_err = |message: String| Error::Parse { line: i + 1, message };
            let mut parts = line.split_whitespace();
            let side = parts.next().ok_or_else(|| parse_err("missing side".into()))?;
            let mut num = |name: &str| -> Result<f64> {
                parts
                    .next()
                    .ok_or_else(|| parse_err(format!("missing {name}")))?
                    .parse::<f64>()
                    .map_err(|e| parse_err(format!("bad {name}: {e}")))
            };
            let t0 = num("t_begin")?;
            let t1 = num("t_end")?;
            match side {
                "L" => left.push((t0, t1)),
                "R" => right.push((t0, t1)),
                other => return Err(parse_err(format!("unknown side tag {other:?}"))),
            }
        }
        let to_nodes = |els: &[(f64, f64)], tag: char| -> Result<Vec<f64>> {
            let mut nodes = Vec::with_capacity(els.len() + 1);
            for (i, &(t0, t1)) in els.iter().enumerate() {
                if i == 0 {
                    nodes.push(t0);
                } else if nodes[nodes.len() - 1] != t0 {
                    return Err(Error::InvalidMesh(format!("gap or overlap on side {tag} at t = {t0}")));
                }
                nodes.push(t1);
            }
            Ok(nodes)
        };
        let left = to_nodes(&left, 'L')?;
        let right = to_nodes(&right, 'R')?;
        let horizon = left.last().copied().unwrap_or(0.0);
        Self::from_nodes(interval, horizon, left, right)
    }
}

/// Uniform mesh of the unit interval, `2^level` elements per side.
pub fn uniform_mesh(horizon: f64, level: usize) -> Result<BoundaryMesh> {
    BoundaryMesh::uniform(Interval::unit(), horizon, level)
}
