//! Orientation search tree: Euler-angle ranges halved per level, with the range
//! midpoints defining a rotation anchor.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Rotation3, Vector3};

use super::TreeError;

/// Per-axis angle ranges `(lo, hi)` in radians for x, y and z.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientationState {
    pub ranges: [(f64, f64); 3],
}

impl OrientationState {
    pub const INITIAL: OrientationState = OrientationState {
        ranges: [(-PI, PI), (-PI, PI), (-PI, PI)],
    };

    pub fn midpoints(&self) -> [f64; 3] {
        self.ranges.map(|(lo, hi)| (lo + hi) / 2.0)
    }
}

impl Default for OrientationState {
    fn default() -> Self {
        Self::INITIAL
    }
}

/// The seven search actions, in tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    Stay,
    XMinus,
    XPlus,
    YMinus,
    YPlus,
    ZMinus,
    ZPlus,
}

impl Action {
    pub const ALL: [Action; 7] = [
        Action::Stay,
        Action::XMinus,
        Action::XPlus,
        Action::YMinus,
        Action::YPlus,
        Action::ZMinus,
        Action::ZPlus,
    ];

    /// `(axis, upper half)` for the splitting actions.
    fn split(self) -> Option<(usize, bool)> {
        match self {
            Action::Stay => None,
            Action::XMinus => Some((0, false)),
            Action::XPlus => Some((0, true)),
            Action::YMinus => Some((1, false)),
            Action::YPlus => Some((1, true)),
            Action::ZMinus => Some((2, false)),
            Action::ZPlus => Some((2, true)),
        }
    }
}

pub fn transition(state: &OrientationState, action: Action) -> OrientationState {
    let mut next = *state;
    if let Some((axis, upper)) = action.split() {
        let (lo, hi) = state.ranges[axis];
        let mid = (lo + hi) / 2.0;
        next.ranges[axis] = if upper { (mid, hi) } else { (lo, mid) };
    }
    next
}

/// A cell orientation: the local z axis is mapped onto `normal`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationAnchor {
    pub euler: [f64; 3],
    pub rotation: Matrix3<f64>,
    pub normal: Vector3<f64>,
}

impl RotationAnchor {
    pub fn identity() -> Self {
        Self::from_euler([0.0; 3])
    }

    /// Rotation `Rz(rz) * Ry(ry) * Rx(rx)`.
    pub fn from_euler(euler: [f64; 3]) -> Self {
        let [rx, ry, rz] = euler;
        let rotation = Rotation3::from_axis_angle(&Vector3::z_axis(), rz)
            * Rotation3::from_axis_angle(&Vector3::y_axis(), ry)
            * Rotation3::from_axis_angle(&Vector3::x_axis(), rx);
        let rotation = *rotation.matrix();
        let normal = rotation.column(2).into_owned();
        Self {
            euler,
            rotation,
            normal,
        }
    }
}

pub fn anchor_of(state: &OrientationState) -> RotationAnchor {
    RotationAnchor::from_euler(state.midpoints())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchStep {
    pub action: Action,
    pub state: OrientationState,
    pub anchor: RotationAnchor,
    pub cosine: f64,
}

/// Cosines closer than this count as ties and keep the earlier action.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Greedy descent: at each level take the child whose anchor normal has the
/// largest cosine with `target`.
pub fn search_orientation(target: &Vector3<f64>, depth: usize) -> Result<Vec<SearchStep>, TreeError> {
    if (target.norm() - 1.0).abs() > 1e-6 || !target.iter().all(|c| c.is_finite()) {
        return Err(TreeError::NonUnitNormal(target.norm()));
    }
    let mut path = Vec::with_capacity(depth);
    let mut state = OrientationState::INITIAL;
    for _ in 0..depth {
        let mut best: Option<SearchStep> = None;
        for action in Action::ALL {
            let next = transition(&state, action);
            let anchor = anchor_of(&next);
            let cosine = anchor.normal.dot(target);
            if best.is_none_or(|b| cosine > b.cosine + TIE_TOLERANCE) {
                best = Some(SearchStep {
                    action,
                    state: next,
                    anchor,
                    cosine,
                });
            }
        }
        let step = best.expect("seven candidates");
        state = step.state;
        path.push(step);
    }
    Ok(path)
}
