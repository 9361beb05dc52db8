//! 26-connected A* over the occupancy grid with Euclidean edge costs and an
//! admissible Euclidean heuristic, followed by greedy line-of-sight
//! shortcutting of the cell path.

use super::grid::OccupancyGrid;
use crate::affine::Vec3;
use std::cmp::Ordering;
use std::collections::BinaryHeap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AstarError {
    #[error("start point is occupied or too close to an obstacle")]
    StartBlocked,
    #[error("goal point is occupied or too close to an obstacle")]
    GoalBlocked,
    #[error("no path exists between start and goal")]
    NoPath,
    #[error("{0}")]
    Grid(#[from] super::grid::GridError),
}

/// Free-space view of a grid after inflating obstacles so the containment
/// ball of radius `r_max` clears every occupied cell, with one extra cell of
/// margin.
pub struct InflatedGrid<'a> {
    pub grid: &'a OccupancyGrid,
    distance: Vec<f64>,
    clearance: f64,
}

impl<'a> InflatedGrid<'a> {
    pub fn new(grid: &'a OccupancyGrid, r_max: f64) -> Self {
        Self {
            distance: grid.distance_field(),
            clearance: r_max + grid.cell_size,
            grid,
        }
    }

    #[inline]
    pub fn is_free(&self, c: [usize; 3]) -> bool {
        self.distance[self.grid.index(c)] >= self.clearance
    }

    /// Center-to-nearest-occupied-cell distance at the cell containing `p`.
    pub fn clearance_at(&self, p: &Vec3) -> Option<f64> {
        let c = self.grid.cell_of(p).ok()?;
        Some(self.distance[self.grid.index(c)])
    }

    /// True when the straight segment stays in inflated free space, sampled
    /// at a tenth of a cell.
    pub fn line_of_sight(&self, a: &Vec3, b: &Vec3) -> bool {
        let length = (b - a).norm();
        let steps = ((length / (self.grid.cell_size / 10.0)).ceil() as usize).max(1);
        for s in 0..=steps {
            let p = a + (b - a) * (s as f64 / steps as f64);
            match self.grid.cell_of(&p) {
                Ok(c) if self.is_free(c) => {}
                _ => return false,
            }
        }
        true
    }
}

#[derive(PartialEq)]
struct OpenNode {
    f: f64,
    idx: usize,
}

impl Eq for OpenNode {}
impl Ord for OpenNode {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on f
        other.f.partial_cmp(&self.f).unwrap()
    }
}
impl PartialOrd for OpenNode {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn neighbors26(dims: [usize; 3], c: [usize; 3]) -> impl Iterator<Item = ([usize; 3], f64)> {
    let mut out = Vec::with_capacity(26);
    for dz in -1i64..=1 {
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                if dx == 0 && dy == 0 && dz == 0 {
                    continue;
                }
                let nx = c[0] as i64 + dx;
                let ny = c[1] as i64 + dy;
                let nz = c[2] as i64 + dz;
                if nx < 0
                    || ny < 0
                    || nz < 0
                    || nx >= dims[0] as i64
                    || ny >= dims[1] as i64
                    || nz >= dims[2] as i64
                {
                    continue;
                }
                let cost = ((dx * dx + dy * dy + dz * dz) as f64).sqrt();
                out.push(([nx as usize, ny as usize, nz as usize], cost));
            }
        }
    }
    out.into_iter()
}

/// Optimal 26-connected cell path and its cost in meters.
pub fn astar_cells(
    inflated: &InflatedGrid,
    start: [usize; 3],
    goal: [usize; 3],
) -> Result<(Vec<[usize; 3]>, f64), AstarError> {
    let grid = inflated.grid;
    let dims = grid.dims;
    if !inflated.is_free(start) {
        return Err(AstarError::StartBlocked);
    }
    if !inflated.is_free(goal) {
        return Err(AstarError::GoalBlocked);
    }
    let cell_f = |c: [usize; 3]| {
        Vec3::new(c[0] as f64, c[1] as f64, c[2] as f64)
    };
    let h = |c: [usize; 3]| (cell_f(c) - cell_f(goal)).norm();

    let num = grid.num_cells();
    let mut g_score = vec![f64::INFINITY; num];
    let mut came_from = vec![usize::MAX; num];
    let mut closed = vec![false; num];
    let mut open = BinaryHeap::new();

    let start_idx = grid.index(start);
    let goal_idx = grid.index(goal);
    g_score[start_idx] = 0.0;
    open.push(OpenNode {
        f: h(start),
        idx: start_idx,
    });

    let cell_of_idx = |idx: usize| {
        let ix = idx % dims[0];
        let iy = (idx / dims[0]) % dims[1];
        let iz = idx / (dims[0] * dims[1]);
        [ix, iy, iz]
    };

    while let Some(OpenNode { idx, .. }) = open.pop() {
        if closed[idx] {
            continue;
        }
        closed[idx] = true;
        if idx == goal_idx {
            let mut cells = vec![cell_of_idx(idx)];
            let mut cur = idx;
            while came_from[cur] != usize::MAX {
                cur = came_from[cur];
                cells.push(cell_of_idx(cur));
            }
            cells.reverse();
            return Ok((cells, g_score[goal_idx] * grid.cell_size));
        }
        let c = cell_of_idx(idx);
        for (nc, step) in neighbors26(dims, c) {
            if !inflated.is_free(nc) {
                continue;
            }
            let nidx = grid.index(nc);
            if closed[nidx] {
                continue;
            }
            let tentative = g_score[idx] + step;
            if tentative < g_score[nidx] {
                g_score[nidx] = tentative;
                came_from[nidx] = idx;
                open.push(OpenNode {
                    f: tentative + h(nc),
                    idx: nidx,
                });
            }
        }
    }
    Err(AstarError::NoPath)
}

/// Plans waypoints for the containment-ball center from `d0` to `df`:
/// grid A* on the inflated grid, then greedy line-of-sight shortcutting.
/// The returned polyline starts at `d0`, ends at `df`, and keeps clearance
/// greater than `r_max` from every occupied cell.
pub fn astar_waypoints(
    grid: &OccupancyGrid,
    d0: &Vec3,
    df: &Vec3,
    r_max: f64,
) -> Result<Vec<Vec3>, AstarError> {
    let inflated = InflatedGrid::new(grid, r_max);
    let start = grid.cell_of(d0)?;
    let goal = grid.cell_of(df)?;
    if !inflated.is_free(start) {
        return Err(AstarError::StartBlocked);
    }
    if !inflated.is_free(goal) {
        return Err(AstarError::GoalBlocked);
    }

    let (cells, _cost) = astar_cells(&inflated, start, goal)?;
    let mut poly: Vec<Vec3> = Vec::with_capacity(cells.len() + 2);
    poly.push(*d0);
    poly.extend(cells.iter().map(|&c| grid.cell_center(c)));
    poly.push(*df);

    // Greedy shortcut: from each anchor, jump to the farthest visible vertex.
    let mut out = vec![poly[0]];
    let mut i = 0;
    while i + 1 < poly.len() {
        let mut j = poly.len() - 1;
        while j > i + 1 && !inflated.line_of_sight(&poly[i], &poly[j]) {
            j -= 1;
        }
        out.push(poly[j]);
        i = j;
    }
    // Drop interior vertices that no longer turn the path.
    out.dedup_by(|a, b| (*a - *b).norm() < 1e-12);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_grid_is_a_straight_segment() {
        let grid = OccupancyGrid::empty(Vec3::zeros(), 1.0, [16, 16, 4]);
        let d0 = Vec3::new(1.5, 1.5, 1.5);
        let df = Vec3::new(14.5, 14.5, 1.5);
        let wps = astar_waypoints(&grid, &d0, &df, 0.0).unwrap();
        assert_eq!(wps.len(), 2);
        assert_eq!(wps[0], d0);
        assert_eq!(wps[1], df);
    }

    #[test]
    fn unreachable_goal_is_no_path() {
        let mut grid = OccupancyGrid::empty(Vec3::zeros(), 1.0, [12, 12, 1]);
        // Box the goal in completely.
        for ix in 7..=11 {
            for iy in 7..=11 {
                if ix == 9 && iy == 9 {
                    continue;
                }
                grid.set_occupied([ix, iy, 0], true);
            }
        }
        let res = astar_waypoints(&grid, &Vec3::new(1.5, 1.5, 0.5), &Vec3::new(9.5, 9.5, 0.5), 0.0);
        assert!(matches!(res, Err(AstarError::NoPath) | Err(AstarError::GoalBlocked)));
    }

    #[test]
    fn wall_with_gap_matches_dijkstra() {
        let mut grid = OccupancyGrid::empty(Vec3::zeros(), 1.0, [20, 20, 1]);
        for iy in 0..20 {
            if iy == 10 {
                continue;
            }
            grid.set_occupied([10, iy, 0], true);
        }
        let inflated = InflatedGrid::new(&grid, 0.0);
        let start = [2, 2, 0];
        let goal = [17, 17, 0];
        let (_, cost) = astar_cells(&inflated, start, goal).unwrap();
        let dcost = dijkstra_cost(&inflated, start, goal).unwrap();
        assert!((cost - dcost).abs() < 1e-9, "{cost} vs {dcost}");
    }

    /// Uniform-cost search oracle, no heuristic.
    pub(crate) fn dijkstra_cost(
        inflated: &InflatedGrid,
        start: [usize; 3],
        goal: [usize; 3],
    ) -> Option<f64> {
        let grid = inflated.grid;
        let dims = grid.dims;
        let mut dist = vec![f64::INFINITY; grid.num_cells()];
        let mut closed = vec![false; grid.num_cells()];
        let mut open = BinaryHeap::new();
        dist[grid.index(start)] = 0.0;
        open.push(OpenNode {
            f: 0.0,
            idx: grid.index(start),
        });
        let cell_of_idx = |idx: usize| {
            [
                idx % dims[0],
                (idx / dims[0]) % dims[1],
                idx / (dims[0] * dims[1]),
            ]
        };
        while let Some(OpenNode { idx, .. }) = open.pop() {
            if closed[idx] {
                continue;
            }
            closed[idx] = true;
            if idx == grid.index(goal) {
                return Some(dist[idx] * grid.cell_size);
            }
            for (nc, step) in neighbors26(dims, cell_of_idx(idx)) {
                if !inflated.is_free(nc) {
                    continue;
                }
                let nidx = grid.index(nc);
                let tentative = dist[idx] + step;
                if tentative < dist[nidx] {
                    dist[nidx] = tentative;
                    open.push(OpenNode {
                        f: tentative,
                        idx: nidx,
                    });
                }
            }
        }
        None
    }

    #[test]
    fn shortcut_path_keeps_clearance() {
        let mut grid = OccupancyGrid::empty(Vec3::zeros(), 0.5, [40, 40, 8]);
        grid.fill_box(Vec3::new(9.0, 0.0, 0.0), Vec3::new(11.0, 8.0, 4.0));
        grid.fill_box(Vec3::new(9.0, 12.0, 0.0), Vec3::new(11.0, 20.0, 4.0));
        let r_max = 1.0;
        let d0 = Vec3::new(2.0, 10.0, 2.0);
        let df = Vec3::new(18.0, 10.0, 2.0);
        let wps = astar_waypoints(&grid, &d0, &df, r_max).unwrap();
        let inflated = InflatedGrid::new(&grid, r_max);
        for seg in wps.windows(2) {
            let len = (seg[1] - seg[0]).norm();
            let steps = (len / 0.05).ceil() as usize;
            for s in 0..=steps {
                let p = seg[0] + (seg[1] - seg[0]) * (s as f64 / steps as f64);
                let cl = inflated.clearance_at(&p).unwrap();
                assert!(cl > r_max, "clearance {cl} at {p:?}");
            }
        }
    }
}
