use super::{DpAction, DpConfig, DpError, DpModel, DpPlan, DpState, DpStats, ACTIONS};
use crate::cost::{DrivingGoals, ObstacleEllipse, RoadGeometry};
use crate::kinematics::VehicleState;

const UNREACHABLE: u64 = u64::MAX;

/// Bounding box of grid states reachable at one step.
#[derive(Debug, Clone, Copy)]
struct Layer {
    v_lo: i64,
    v_hi: i64,
    x_lo: i64,
    x_hi: i64,
}

impl Layer {
    fn nv(&self) -> usize {
        (self.v_hi - self.v_lo + 1) as usize
    }

    fn nx(&self) -> usize {
        (self.x_hi - self.x_lo + 1) as usize
    }
}

fn layers(initial: &DpState, horizon: usize) -> Vec<Layer> {
    // Extremes: brake every step (clamped at standstill) and accelerate every step.
    let mut out = Vec::with_capacity(horizon + 1);
    let (mut v_slow, mut x_slow) = (initial.v_idx, initial.x_idx);
    let (mut v_fast, mut x_fast) = (initial.v_idx, initial.x_idx);
    for k in 0..=horizon {
        out.push(Layer {
            v_lo: (initial.v_idx - k as i64).max(0),
            v_hi: initial.v_idx + k as i64,
            x_lo: x_slow,
            x_hi: x_fast,
        });
        if v_slow > 0 {
            x_slow += 2 * v_slow - 1;
            v_slow -= 1;
        }
        x_fast += 2 * v_fast + 1;
        v_fast += 1;
    }
    out
}

struct Table {
    layer: Layer,
    lanes: usize,
    lc_levels: usize,
    value: Vec<u64>,
    choice: Vec<u8>,
}

impl Table {
    fn new(layer: Layer, lanes: usize, lc_levels: usize) -> Self {
        let n = layer.nv() * layer.nx() * lanes * lc_levels;
        Self {
            layer,
            lanes,
            lc_levels,
            value: vec![UNREACHABLE; n],
            choice: vec![u8::MAX; n],
        }
    }

    fn index(&self, s: &DpState) -> Option<usize> {
        let l = &self.layer;
        if s.v_idx < l.v_lo || s.v_idx > l.v_hi || s.x_idx < l.x_lo || s.x_idx > l.x_hi {
            return None;
        }
        let iv = (s.v_idx - l.v_lo) as usize;
        let ix = (s.x_idx - l.x_lo) as usize;
        Some(((iv * l.nx() + ix) * self.lanes + s.lane) * self.lc_levels + s.lane_changes as usize)
    }
}

/// Backward dynamic programming over the full reachable grid.
pub fn solve_backward(
    s0: &VehicleState,
    obstacles: &[ObstacleEllipse],
    fine_dt: f64,
    goals: &DrivingGoals,
    geometry: &RoadGeometry,
    cfg: &DpConfig,
) -> Result<DpPlan, DpError> {
    DpModel::new(s0, obstacles, fine_dt, goals, geometry, cfg).solve_backward()
}

impl DpModel {
    pub fn solve_backward(&self) -> Result<DpPlan, DpError> {
        let horizon = self.horizon();
        let initial = self.initial_state();
        let boxes = layers(&initial, horizon);
        let lc_levels = self.config().max_lane_changes as usize + 1;
        let mut tables: Vec<Table> = boxes.iter().map(|l| Table::new(*l, self.lanes, lc_levels)).collect();
        let mut stats = DpStats::default();

        let terminal = &mut tables[horizon];
        terminal.value.iter_mut().for_each(|v| *v = 0);

        for k in (0..horizon).rev() {
            let (head, tail) = tables.split_at_mut(k + 1);
            let (current, next) = (&mut head[k], &tail[0]);
            let l = current.layer;
            for v_idx in l.v_lo..=l.v_hi {
                for x_idx in l.x_lo..=l.x_hi {
                    for lane in 0..self.lanes {
                        for lc in 0..lc_levels {
                            let s = DpState {
                                k,
                                x_idx,
                                v_idx,
                                lane,
                                lane_changes: lc as u8,
                            };
                            stats.expanded += 1;
                            let mut best = UNREACHABLE;
                            let mut best_action = u8::MAX;
                            for (i, action) in ACTIONS.iter().enumerate() {
                                stats.transitions += 1;
                                let Some((succ, cost)) = self.transition(&s, *action) else {
                                    continue;
                                };
                                let Some(j) = next.index(&succ) else { continue };
                                if next.value[j] == UNREACHABLE {
                                    continue;
                                }
                                let total = cost + next.value[j];
                                if total < best {
                                    best = total;
                                    best_action = i as u8;
                                }
                            }
                            let idx = current.index(&s).expect("state inside its own layer");
                            current.value[idx] = best;
                            current.choice[idx] = best_action;
                        }
                    }
                }
            }
        }

        let root = tables[0].index(&initial).expect("initial state in first layer");
        let cost_units = tables[0].value[root];
        if cost_units == UNREACHABLE {
            return Err(DpError::NoFeasiblePlan);
        }
        let mut actions: Vec<DpAction> = Vec::with_capacity(horizon);
        let mut s = initial;
        for table in &tables[..horizon] {
            let idx = table.index(&s).expect("optimal path stays in the reachable box");
            let action = ACTIONS[table.choice[idx] as usize];
            actions.push(action);
            s = self.transition(&s, action).expect("stored action is feasible").0;
        }
        Ok(self.plan_from_actions(&actions, cost_units, stats))
    }
}
