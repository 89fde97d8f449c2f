use crate::controller::State;
use crate::error::ParamError;

/// One uniformly spaced grid axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis {
    pub lower: f64,
    pub upper: f64,
    pub nodes: usize,
}

impl Axis {
    pub fn spacing(&self) -> f64 {
        (self.upper - self.lower) / (self.nodes - 1) as f64
    }

    pub fn coord(&self, i: usize) -> f64 {
        if i + 1 == self.nodes {
            self.upper
        } else {
            self.lower + i as f64 * self.spacing()
        }
    }

    /// Cell index and fractional offset of `x`, or `None` outside the axis.
    pub(crate) fn locate(&self, x: f64) -> Option<(usize, f64)> {
        let h = self.spacing();
        let slack = 1e-9 * h;
        if !(x >= self.lower - slack && x <= self.upper + slack) {
            return None;
        }
        let pos = ((x - self.lower) / h).clamp(0.0, (self.nodes - 1) as f64);
        let cell = (pos.floor() as usize).min(self.nodes - 2);
        Some((cell, pos - cell as f64))
    }
}

/// Rectilinear grid over `(x_rel, v_rel, v_AV)`.
///
/// Node values are stored row-major with `v_AV` varying fastest.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    axes: [Axis; 3],
}

pub const DEFAULT_LOWER: [f64; 3] = [0.0, -15.0, 0.0];
pub const DEFAULT_UPPER: [f64; 3] = [50.0, 15.0, 30.0];
pub const DEFAULT_NODES: usize = 51;
pub const AXIS_NAMES: [&str; 3] = ["x_rel", "v_rel", "v_av"];

impl GridSpec {
    pub fn new(lower: [f64; 3], upper: [f64; 3], nodes: [usize; 3]) -> Result<Self, ParamError> {
        for d in 0..3 {
            if !(lower[d].is_finite() && upper[d].is_finite() && lower[d] < upper[d]) {
                return Err(ParamError::new(format!(
                    "{} axis needs lower < upper, got [{}, {}]",
                    AXIS_NAMES[d], lower[d], upper[d]
                )));
            }
            if nodes[d] < 3 {
                return Err(ParamError::new(format!(
                    "{} axis needs at least 3 nodes, got {}",
                    AXIS_NAMES[d], nodes[d]
                )));
            }
        }
        let axes = [0, 1, 2].map(|d| Axis { lower: lower[d], upper: upper[d], nodes: nodes[d] });
        Ok(Self { axes })
    }

    /// Default domain with `n` nodes per axis.
    pub fn with_nodes(n: usize) -> Result<Self, ParamError> {
        Self::new(DEFAULT_LOWER, DEFAULT_UPPER, [n; 3])
    }

    pub fn axes(&self) -> &[Axis; 3] {
        &self.axes
    }

    pub fn axis(&self, d: usize) -> &Axis {
        &self.axes[d]
    }

    pub fn nodes(&self) -> [usize; 3] {
        self.axes.map(|a| a.nodes)
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.axes.map(|a| a.spacing())
    }

    pub fn lower(&self) -> [f64; 3] {
        self.axes.map(|a| a.lower)
    }

    pub fn upper(&self) -> [f64; 3] {
        self.axes.map(|a| a.upper)
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.nodes).product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Row-major strides for the three axes.
    pub fn strides(&self) -> [usize; 3] {
        let [_, nv, na] = self.nodes();
        [nv * na, na, 1]
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        let [_, nv, na] = self.nodes();
        (i * nv + j) * na + k
    }

    pub fn unravel(&self, idx: usize) -> [usize; 3] {
        let [_, nv, na] = self.nodes();
        [idx / (nv * na), (idx / na) % nv, idx % na]
    }

    pub fn node(&self, i: usize, j: usize, k: usize) -> State {
        State::new(self.axes[0].coord(i), self.axes[1].coord(j), self.axes[2].coord(k))
    }

    pub fn node_at(&self, idx: usize) -> State {
        let [i, j, k] = self.unravel(idx);
        self.node(i, j, k)
    }

    pub fn contains(&self, s: &State) -> bool {
        s.as_array().iter().zip(&self.axes).all(|(&x, a)| a.locate(x).is_some())
    }
}

impl Default for GridSpec {
    fn default() -> Self {
        Self::with_nodes(DEFAULT_NODES).expect("default grid is valid")
    }
}
