//! Force-directed layout: Barnes–Hut charge, springs along edges, and a
//! pull toward the origin.

mod quadtree;

use std::collections::HashMap;
use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::ItemId;

use quadtree::QuadTree;

/// Minimum distance used in force denominators.
pub const DISTANCE_EPSILON: f64 = 1e-3;

/// Below this many nodes forces are accumulated on one thread.
const PARALLEL_THRESHOLD: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LayoutParams {
    /// Negative repels.
    pub charge: f64,
    pub link_strength: f64,
    pub rest_length: f64,
    pub centering: f64,
    pub theta: f64,
    pub time_step: f64,
    pub velocity_decay: f64,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for LayoutParams {
    fn default() -> Self {
        LayoutParams {
            charge: -30.0,
            link_strength: 0.1,
            rest_length: 30.0,
            centering: 0.05,
            theta: 0.9,
            time_step: 1.0,
            velocity_decay: 0.4,
            iterations: 300,
            seed: 7,
        }
    }
}

impl LayoutParams {
    pub fn validate(&self) -> Result<(), LayoutError> {
        let bad = |m: &str| Err(LayoutError::Params(m.to_string()));
        if !(self.theta >= 0.0 && self.theta.is_finite()) {
            return bad("theta must be finite and >= 0");
        }
        if !(self.velocity_decay > 0.0 && self.velocity_decay < 1.0) {
            return bad("velocity_decay must lie in (0, 1)");
        }
        if !(self.time_step > 0.0 && self.time_step.is_finite()) {
            return bad("time_step must be > 0");
        }
        if ![self.charge, self.link_strength, self.rest_length, self.centering]
            .iter()
            .all(|v| v.is_finite())
        {
            return bad("force constants must be finite");
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LayoutError {
    #[error("cannot lay out an empty node set")]
    Empty,
    #[error("invalid layout parameters: {0}")]
    Params(String),
    #[error("edge references unknown node {0}")]
    UnknownNode(ItemId),
    #[error("duplicate node {0}")]
    DuplicateNode(ItemId),
    #[error("layout diverged: node {id} has non-finite position after step {step}")]
    NonFinite { id: ItemId, step: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub id: ItemId,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

/// What one step did. `momentum_drift` is the magnitude of the summed
/// charge forces, zero for exact pairwise summation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub step: usize,
    pub momentum_drift: f64,
    pub max_speed: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayoutState {
    ids: Vec<ItemId>,
    index: HashMap<ItemId, usize>,
    pos: Vec<[f64; 2]>,
    vel: Vec<[f64; 2]>,
    steps: usize,
}

fn index_ids(ids: &[ItemId]) -> Result<HashMap<ItemId, usize>, LayoutError> {
    let mut index = HashMap::with_capacity(ids.len());
    for (i, id) in ids.iter().enumerate() {
        if index.insert(*id, i).is_some() {
            return Err(LayoutError::DuplicateNode(*id));
        }
    }
    Ok(index)
}

/// Seeded positions, uniform on a disc whose area grows with the node
/// count. A single node sits at the origin.
pub fn initialize(ids: &[ItemId], seed: u64) -> Result<LayoutState, LayoutError> {
    if ids.is_empty() {
        return Err(LayoutError::Empty);
    }
    let index = index_ids(ids)?;
    let pos = if ids.len() == 1 {
        vec![[0.0, 0.0]]
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let radius = 10.0 * (ids.len() as f64).sqrt();
        (0..ids.len())
            .map(|_| {
                let r = radius * rng.random::<f64>().sqrt();
                let a = TAU * rng.random::<f64>();
                [r * a.cos(), r * a.sin()]
            })
            .collect()
    };
    Ok(LayoutState {
        ids: ids.to_vec(),
        index,
        vel: vec![[0.0, 0.0]; ids.len()],
        pos,
        steps: 0,
    })
}

impl LayoutState {
    pub fn from_positions(positions: &[Position]) -> Result<Self, LayoutError> {
        if positions.is_empty() {
            return Err(LayoutError::Empty);
        }
        let ids: Vec<ItemId> = positions.iter().map(|p| p.id).collect();
        Ok(LayoutState {
            index: index_ids(&ids)?,
            ids,
            pos: positions.iter().map(|p| [p.x, p.y]).collect(),
            vel: vec![[0.0, 0.0]; positions.len()],
            steps: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[ItemId] {
        &self.ids
    }

    pub fn raw_positions(&self) -> &[[f64; 2]] {
        &self.pos
    }

    pub fn velocities(&self) -> &[[f64; 2]] {
        &self.vel
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn position(&self, id: ItemId) -> Option<[f64; 2]> {
        self.index.get(&id).map(|&i| self.pos[i])
    }

    pub fn positions(&self) -> Vec<Position> {
        self.ids
            .iter()
            .zip(&self.pos)
            .map(|(&id, p)| Position { id, x: p[0], y: p[1] })
            .collect()
    }

    pub fn bounding_box(&self) -> BoundingBox {
        let mut b = BoundingBox {
            min_x: f64::INFINITY,
            min_y: f64::INFINITY,
            max_x: f64::NEG_INFINITY,
            max_y: f64::NEG_INFINITY,
        };
        for p in &self.pos {
            b.min_x = b.min_x.min(p[0]);
            b.min_y = b.min_y.min(p[1]);
            b.max_x = b.max_x.max(p[0]);
            b.max_y = b.max_y.max(p[1]);
        }
        b
    }

    /// Maps id pairs to index pairs for [`step`].
    pub fn resolve_edges(&self, edges: &[(ItemId, ItemId)]) -> Result<Vec<(usize, usize)>, LayoutError> {
        edges
            .iter()
            .map(|(a, b)| {
                let ia = *self.index.get(a).ok_or(LayoutError::UnknownNode(*a))?;
                let ib = *self.index.get(b).ok_or(LayoutError::UnknownNode(*b))?;
                Ok((ia, ib))
            })
            .collect()
    }
}

#[inline]
fn pair_force(charge: f64, mass: f64, from: [f64; 2], to: [f64; 2]) -> [f64; 2] {
    let dx = to[0] - from[0];
    let dy = to[1] - from[1];
    let d2 = (dx * dx + dy * dy).max(DISTANCE_EPSILON * DISTANCE_EPSILON);
    let k = charge * mass / d2;
    [k * dx, k * dy]
}

/// Exact pairwise charge forces, O(n²).
pub fn charge_forces_direct(pos: &[[f64; 2]], charge: f64) -> Vec<[f64; 2]> {
    let mut f = vec![[0.0, 0.0]; pos.len()];
    for i in 0..pos.len() {
        for j in i + 1..pos.len() {
            let fij = pair_force(charge, 1.0, pos[i], pos[j]);
            f[i][0] += fij[0];
            f[i][1] += fij[1];
            f[j][0] -= fij[0];
            f[j][1] -= fij[1];
        }
    }
    f
}

fn bh_force(tree: &QuadTree, pos: &[[f64; 2]], i: usize, charge: f64, theta: f64, stack: &mut Vec<u32>) -> [f64; 2] {
    let p = pos[i];
    let slot = tree.slot[i];
    let mut f = [0.0, 0.0];
    stack.clear();
    stack.push(0);
    while let Some(c) = stack.pop() {
        let cell = &tree.cells[c as usize];
        let contains_self = cell.lo <= slot && slot < cell.hi;
        if cell.is_leaf() {
            for &b in &tree.order[cell.lo as usize..cell.hi as usize] {
                if b as usize != i {
                    let fb = pair_force(charge, 1.0, p, pos[b as usize]);
                    f[0] += fb[0];
                    f[1] += fb[1];
                }
            }
            continue;
        }
        let dx = cell.cx - p[0];
        let dy = cell.cy - p[1];
        let d = (dx * dx + dy * dy).sqrt();
        if contains_self || cell.size > theta * d {
            stack.extend(cell.children.iter().copied().filter(|&c| c != u32::MAX));
        } else {
            let fc = pair_force(charge, cell.mass, p, [cell.cx, cell.cy]);
            f[0] += fc[0];
            f[1] += fc[1];
        }
    }
    f
}

/// Charge forces with Barnes–Hut approximation. A cell is opened when it
/// contains the node or when `size / distance > theta`; `theta = 0` opens
/// every cell.
pub fn charge_forces_barnes_hut(pos: &[[f64; 2]], charge: f64, theta: f64) -> Vec<[f64; 2]> {
    let tree = QuadTree::build(pos);
    tree.assert_conserved();
    forces_from_tree(&tree, pos, charge, theta)
}

fn forces_from_tree(tree: &QuadTree, pos: &[[f64; 2]], charge: f64, theta: f64) -> Vec<[f64; 2]> {
    if pos.len() >= PARALLEL_THRESHOLD {
        (0..pos.len())
            .into_par_iter()
            .map_init(Vec::new, |stack, i| bh_force(tree, pos, i, charge, theta, stack))
            .collect()
    } else {
        let mut stack = Vec::new();
        (0..pos.len())
            .map(|i| bh_force(tree, pos, i, charge, theta, &mut stack))
            .collect()
    }
}

/// One iteration. Each node's force is summed independently, so the result
/// does not depend on the thread count.
pub fn step(state: &mut LayoutState, edges: &[(usize, usize)], params: &LayoutParams) -> Result<StepReport, LayoutError> {
    params.validate()?;
    let charge = charge_forces_barnes_hut(&state.pos, params.charge, params.theta);
    let drift = {
        let (sx, sy) = charge.iter().fold((0.0, 0.0), |(x, y), f| (x + f[0], y + f[1]));
        (sx * sx + sy * sy).sqrt()
    };
    let mut force = charge;
    for &(a, b) in edges {
        if a == b {
            continue;
        }
        let dx = state.pos[b][0] - state.pos[a][0];
        let dy = state.pos[b][1] - state.pos[a][1];
        let d = (dx * dx + dy * dy).sqrt().max(DISTANCE_EPSILON);
        let k = params.link_strength * (d - params.rest_length) / d;
        force[a][0] += k * dx;
        force[a][1] += k * dy;
        force[b][0] -= k * dx;
        force[b][1] -= k * dy;
    }
    let keep = 1.0 - params.velocity_decay;
    let dt = params.time_step;
    let mut max_speed = 0.0f64;
    state.steps += 1;
    for (i, f) in force.iter().enumerate() {
        let p = &mut state.pos[i];
        let v = &mut state.vel[i];
        for axis in 0..2 {
            let total = f[axis] - params.centering * p[axis];
            v[axis] = (v[axis] + total * dt) * keep;
            p[axis] += v[axis] * dt;
        }
        if !(p[0].is_finite() && p[1].is_finite()) {
            return Err(LayoutError::NonFinite {
                id: state.ids[i],
                step: state.steps,
            });
        }
        max_speed = max_speed.max(v[0].hypot(v[1]));
    }
    Ok(StepReport {
        step: state.steps,
        momentum_drift: drift,
        max_speed,
    })
}

/// Initializes and runs `params.iterations` steps.
pub fn run(ids: &[ItemId], edges: &[(ItemId, ItemId)], params: &LayoutParams) -> Result<LayoutState, LayoutError> {
    params.validate()?;
    let mut state = initialize(ids, params.seed)?;
    let edges = state.resolve_edges(edges)?;
    for _ in 0..params.iterations {
        step(&mut state, &edges, params)?;
    }
    Ok(state)
}

/// Mean over nodes of `|f_approx - f_exact| / |f_exact|`, skipping nodes
/// with zero exact force.
pub fn mean_relative_error(approx: &[[f64; 2]], exact: &[[f64; 2]]) -> f64 {
    let (sum, count) = approx
        .iter()
        .zip(exact)
        .filter_map(|(a, e)| {
            let norm = e[0].hypot(e[1]);
            (norm > 0.0).then(|| (a[0] - e[0]).hypot(a[1] - e[1]) / norm)
        })
        .fold((0.0, 0usize), |(s, c), r| (s + r, c + 1));
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

/// Largest per-node relative error.
pub fn max_relative_error(approx: &[[f64; 2]], exact: &[[f64; 2]]) -> f64 {
    approx
        .iter()
        .zip(exact)
        .map(|(a, e)| {
            let norm = e[0].hypot(e[1]);
            let diff = (a[0] - e[0]).hypot(a[1] - e[1]);
            if norm > 0.0 {
                diff / norm
            } else {
                diff
            }
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: u64) -> Vec<ItemId> {
        (1..=n).map(ItemId).collect()
    }

    fn random_positions(n: usize, seed: u64) -> Vec<[f64; 2]> {
        initialize(&ids(n as u64), seed).unwrap().pos
    }

    #[test]
    fn initialization_rules() {
        assert_eq!(initialize(&[], 1), Err(LayoutError::Empty));
        let one = initialize(&ids(1), 9).unwrap();
        assert_eq!(one.raw_positions(), &[[0.0, 0.0]]);
        let a = initialize(&ids(50), 1).unwrap();
        assert_eq!(a, initialize(&ids(50), 1).unwrap());
        assert_ne!(a.raw_positions(), initialize(&ids(50), 2).unwrap().raw_positions());
        assert!(a.velocities().iter().all(|v| *v == [0.0, 0.0]));
        assert!(matches!(
            initialize(&[ItemId(1), ItemId(1)], 0),
            Err(LayoutError::DuplicateNode(_))
        ));
    }

    #[test]
    fn oracle_obeys_third_law() {
        let pos = random_positions(40, 4);
        for i in 0..pos.len() {
            for j in 0..pos.len() {
                let fij = pair_force(-30.0, 1.0, pos[i], pos[j]);
                let fji = pair_force(-30.0, 1.0, pos[j], pos[i]);
                assert_eq!(fij, [-fji[0], -fji[1]]);
            }
        }
    }

    #[test]
    fn theta_zero_is_exact() {
        let pos = random_positions(300, 5);
        let exact = charge_forces_direct(&pos, -30.0);
        let bh = charge_forces_barnes_hut(&pos, -30.0, 0.0);
        assert!(max_relative_error(&bh, &exact) < 1e-9);
    }

    #[test]
    fn error_shrinks_with_theta() {
        let pos = random_positions(800, 6);
        let exact = charge_forces_direct(&pos, -30.0);
        let errors: Vec<f64> = [1.5, 1.0, 0.5, 0.0]
            .iter()
            .map(|&t| mean_relative_error(&charge_forces_barnes_hut(&pos, -30.0, t), &exact))
            .collect();
        for w in errors.windows(2) {
            assert!(w[1] <= w[0], "{errors:?}");
        }
        assert!(errors[2] <= 0.05, "{errors:?}");
    }

    #[test]
    fn two_nodes_repel() {
        let mut s = LayoutState::from_positions(&[
            Position { id: ItemId(1), x: -1.0, y: 0.0 },
            Position { id: ItemId(2), x: 1.0, y: 0.0 },
        ])
        .unwrap();
        let params = LayoutParams {
            centering: 0.0,
            ..Default::default()
        };
        step(&mut s, &[], &params).unwrap();
        let p = s.raw_positions();
        assert!(p[0][0] < -1.0 && p[1][0] > 1.0);
    }

    #[test]
    fn zero_iterations_keep_initialization() {
        let params = LayoutParams {
            iterations: 0,
            ..Default::default()
        };
        let out = run(&ids(10), &[], &params).unwrap();
        assert_eq!(out.raw_positions(), initialize(&ids(10), params.seed).unwrap().raw_positions());
    }

    #[test]
    fn square_stays_square() {
        let corners = [(1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0)];
        let positions: Vec<Position> = corners
            .iter()
            .enumerate()
            .map(|(i, &(x, y))| Position {
                id: ItemId(i as u64 + 1),
                x: 10.0 * x,
                y: 10.0 * y,
            })
            .collect();
        let mut s = LayoutState::from_positions(&positions).unwrap();
        let cycle: Vec<(ItemId, ItemId)> = (1..=4).map(|i| (ItemId(i), ItemId(i % 4 + 1))).collect();
        let edges = s.resolve_edges(&cycle).unwrap();
        let params = LayoutParams {
            theta: 0.0,
            ..Default::default()
        };
        for _ in 0..200 {
            step(&mut s, &edges, &params).unwrap();
        }
        let p = s.raw_positions();
        let dist = |a: usize, b: usize| (p[a][0] - p[b][0]).hypot(p[a][1] - p[b][1]);
        let side = dist(0, 1);
        for (a, b) in [(1, 2), (2, 3), (3, 0)] {
            assert!((dist(a, b) - side).abs() < 1e-6 * side);
        }
        assert!((dist(0, 2) - dist(1, 3)).abs() < 1e-6 * side);
        assert!((dist(0, 2) - side * 2f64.sqrt()).abs() < 1e-6 * side);
    }

    #[test]
    fn divergence_names_the_node() {
        let mut s = LayoutState::from_positions(&[
            Position { id: ItemId(7), x: 0.0, y: 0.0 },
            Position { id: ItemId(8), x: 0.001, y: 0.0 },
        ])
        .unwrap();
        let params = LayoutParams {
            charge: -1e308,
            ..Default::default()
        };
        let err = step(&mut s, &[], &params).unwrap_err();
        assert!(matches!(err, LayoutError::NonFinite { id: ItemId(7) | ItemId(8), .. }));
    }

    #[test]
    fn unknown_edge_endpoint() {
        let err = run(&ids(3), &[(ItemId(1), ItemId(9))], &LayoutParams::default()).unwrap_err();
        assert_eq!(err, LayoutError::UnknownNode(ItemId(9)));
    }

    #[test]
    fn params_validation() {
        let p = LayoutParams {
            velocity_decay: 1.0,
            ..Default::default()
        };
        assert!(p.validate().is_err());
        let p = LayoutParams {
            theta: -0.1,
            ..Default::default()
        };
        assert!(p.validate().is_err());
    }
}
