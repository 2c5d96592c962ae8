use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};

use super::{DpAction, DpConfig, DpError, DpModel, DpPlan, DpState, DpStats, ACTIONS};
use crate::cost::{DrivingGoals, ObstacleEllipse, RoadGeometry};
use crate::kinematics::VehicleState;

struct Label {
    cost: u64,
    parent: Option<(DpState, DpAction)>,
    closed: bool,
}

/// Best-first forward search: the open state with the lowest cost-to-come
/// is branched next, and the search stops when a full-horizon state is the
/// cheapest open one. Stage costs are non-negative, so that state is optimal.
pub fn solve_forward_bnb(
    s0: &VehicleState,
    obstacles: &[ObstacleEllipse],
    fine_dt: f64,
    goals: &DrivingGoals,
    geometry: &RoadGeometry,
    cfg: &DpConfig,
) -> Result<DpPlan, DpError> {
    DpModel::new(s0, obstacles, fine_dt, goals, geometry, cfg).solve_forward_bnb()
}

impl DpModel {
    pub fn solve_forward_bnb(&self) -> Result<DpPlan, DpError> {
        let horizon = self.horizon();
        let initial = self.initial_state();
        let mut labels: HashMap<DpState, Label> = HashMap::new();
        let mut open = BinaryHeap::new();
        let mut seq: u64 = 0;
        let mut stats = DpStats::default();

        labels.insert(
            initial,
            Label {
                cost: 0,
                parent: None,
                closed: false,
            },
        );
        open.push(Reverse((0u64, seq, initial)));

        while let Some(Reverse((g, _, s))) = open.pop() {
            let label = labels.get_mut(&s).expect("queued states are labelled");
            if label.closed || g > label.cost {
                continue;
            }
            label.closed = true;
            if s.k == horizon {
                return Ok(self.plan_from_actions(&trace_back(&labels, s), g, stats));
            }
            stats.expanded += 1;
            for action in ACTIONS {
                stats.transitions += 1;
                let Some((succ, cost)) = self.transition(&s, action) else {
                    continue;
                };
                let candidate = g + cost;
                let improves = labels.get(&succ).is_none_or(|l| !l.closed && candidate < l.cost);
                if improves {
                    labels.insert(
                        succ,
                        Label {
                            cost: candidate,
                            parent: Some((s, action)),
                            closed: false,
                        },
                    );
                    seq += 1;
                    open.push(Reverse((candidate, seq, succ)));
                }
            }
        }
        Err(DpError::NoFeasiblePlan)
    }
}

fn trace_back(labels: &HashMap<DpState, Label>, goal: DpState) -> Vec<DpAction> {
    let mut actions = Vec::with_capacity(goal.k);
    let mut s = goal;
    while let Some((parent, action)) = labels[&s].parent {
        actions.push(action);
        s = parent;
    }
    actions.reverse();
    actions
}
