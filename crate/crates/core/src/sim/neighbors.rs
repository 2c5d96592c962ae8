use crate::kinematics::VehicleState;

/// Longitudinal ordering of vehicles with a mutable lane assignment, for
/// leader and follower queries.
pub(crate) struct Neighborhood<'a> {
    states: &'a [VehicleState],
    lengths: &'a [f64],
    pub lanes: Vec<usize>,
    /// Second lane a vehicle partly occupies while crossing a boundary.
    pub straddles: Vec<Option<usize>>,
    /// Vehicle indices sorted by `(x, id)`; ids follow index order.
    order: Vec<usize>,
    rank: Vec<usize>,
}

impl<'a> Neighborhood<'a> {
    pub fn new(states: &'a [VehicleState], lengths: &'a [f64], lanes: Vec<usize>) -> Self {
        let mut order: Vec<usize> = (0..states.len()).collect();
        order.sort_by(|&a, &b| states[a].x.total_cmp(&states[b].x).then(a.cmp(&b)));
        let mut rank = vec![0; states.len()];
        for (r, &i) in order.iter().enumerate() {
            rank[i] = r;
        }
        Self {
            states,
            lengths,
            straddles: vec![None; lanes.len()],
            lanes,
            order,
            rank,
        }
    }

    pub fn state(&self, i: usize) -> &VehicleState {
        &self.states[i]
    }

    /// Nearest vehicle ahead of `i` assigned to `lane`.
    pub fn leader(&self, i: usize, lane: usize) -> Option<usize> {
        self.order[self.rank[i] + 1..].iter().copied().find(|&j| self.lanes[j] == lane)
    }

    fn occupies(&self, j: usize, lane: usize) -> bool {
        self.lanes[j] == lane || self.straddles[j] == Some(lane)
    }

    /// Like [`Self::leader`], also counting vehicles straddling into `lane`.
    pub fn leader_occupying(&self, i: usize, lane: usize) -> Option<usize> {
        self.order[self.rank[i] + 1..].iter().copied().find(|&j| self.occupies(j, lane))
    }

    /// Nearest vehicle behind `i` assigned to or straddling into `lane`.
    pub fn follower_occupying(&self, i: usize, lane: usize) -> Option<usize> {
        self.order[..self.rank[i]].iter().rev().copied().find(|&j| self.occupies(j, lane))
    }

    /// Bumper-to-bumper gap from `rear` to `front`.
    pub fn gap(&self, rear: usize, front: usize) -> f64 {
        self.states[front].x - self.states[rear].x - 0.5 * (self.lengths[front] + self.lengths[rear])
    }

    /// Indices of vehicles with `x` in `[lo, hi]`, in longitudinal order.
    pub fn within(&self, lo: f64, hi: f64) -> &[usize] {
        let start = self.order.partition_point(|&j| self.states[j].x < lo);
        let end = self.order.partition_point(|&j| self.states[j].x <= hi);
        &self.order[start..end.max(start)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn queries() {
        let states: Vec<VehicleState> = [30.0, 10.0, 20.0, 20.0]
            .iter()
            .map(|&x| VehicleState::new(x, 0.0, 0.0, 0.0, 0.0))
            .collect();
        let lengths = [4.0; 4];
        let n = Neighborhood::new(&states, &lengths, vec![0, 0, 1, 0]);
        assert_eq!(n.leader(1, 0), Some(3));
        assert_eq!(n.leader(3, 0), Some(0));
        assert_eq!(n.follower_occupying(0, 0), Some(3));
        assert_eq!(n.follower_occupying(3, 1), Some(2));
        assert_eq!(n.leader(0, 0), None);
        assert_eq!(n.gap(1, 3), 6.0);
        assert_eq!(n.within(15.0, 30.0), &[2, 3, 0]);
        assert!(n.within(31.0, 40.0).is_empty());
    }

    #[test]
    fn straddling_vehicle_counts_in_both_lanes() {
        let states: Vec<VehicleState> = [10.0, 20.0, 30.0]
            .iter()
            .map(|&x| VehicleState::new(x, 0.0, 0.0, 0.0, 0.0))
            .collect();
        let mut n = Neighborhood::new(&states, &[4.0; 3], vec![0, 0, 1]);
        n.straddles[1] = Some(1);
        assert_eq!(n.leader(0, 1), Some(2));
        assert_eq!(n.leader_occupying(0, 1), Some(1));
        assert_eq!(n.follower_occupying(2, 1), Some(1));
        assert_eq!(n.leader_occupying(0, 0), Some(1));
    }
}
