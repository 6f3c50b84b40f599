//! Generation-k ball covers with disjoint fifth-balls, their partition cells
//! and neighbor graphs.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::space::{strictly_below, within, MetricMeasureSpace};

/// One generation of the cover. Ball indices are 0-based; point references
/// are point indices of the underlying space.
#[derive(Debug, Clone, PartialEq)]
pub struct BallCover {
    pub k: i32,
    pub radius: f64,
    pub centers: Vec<usize>,
    pub members: Vec<Vec<usize>>,
    pub cells: Vec<Vec<usize>>,
    pub neighbors: Vec<Vec<usize>>,
    /// Padded arity: the largest neighbor count in this generation.
    pub n_k: usize,
    pub cell_of: Vec<usize>,
}

/// Builds the generation-`k` cover starting the traversal at point index 0.
pub fn build_cover(space: &MetricMeasureSpace, k: i32) -> BallCover {
    build_cover_from(space, k, 0)
}

/// Greedy farthest-point cover started at `start`.
///
/// Centers are added while the farthest point is more than `2h/5` from every
/// chosen center, so the closed fifth-balls are disjoint and the selection is
/// maximal. The chosen centers are then ordered by point index, which fixes
/// the ball numbering and hence the cells.
pub fn build_cover_from(space: &MetricMeasureSpace, k: i32, start: usize) -> BallCover {
    let h = 2f64.powi(-k);
    let sep = 2.0 * h / 5.0;
    let n = space.len();
    let start = start.min(n - 1);
    let mut centers = vec![start];
    let mut nearest: Vec<f64> = space.dist_row(start).to_vec();
    loop {
        let (far, &d) = nearest
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
            .expect("space is nonempty");
        if within(d, sep) {
            break;
        }
        centers.push(far);
        for (m, &dd) in nearest.iter_mut().zip(space.dist_row(far)) {
            *m = m.min(dd);
        }
    }
    centers.sort_unstable();
    BallCover::from_centers(space, k, centers)
}

impl BallCover {
    /// Derives members, cells and neighbors from an explicit center list
    /// without checking the separation condition.
    pub fn from_centers(space: &MetricMeasureSpace, k: i32, centers: Vec<usize>) -> Self {
        let h = 2f64.powi(-k);
        let members: Vec<Vec<usize>> = centers.iter().map(|&c| space.ball(c, h)).collect();
        let (cells, cell_of) = partition(space.len(), &members);
        let neighbors = neighbor_lists(space, &centers, &members, h);
        let n_k = neighbors.iter().map(Vec::len).max().unwrap_or(0);
        Self { k, radius: h, centers, members, cells, neighbors, n_k, cell_of }
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn neighbors_of(&self, ball: usize) -> Result<&[usize]> {
        self.neighbors.get(ball).map(Vec::as_slice).ok_or(LabError::IndexOutOfRange { index: ball, len: self.len() })
    }

    /// `(B[x], B[x, 1..=N_k])`: the cell ball of `x` and its neighbor list
    /// padded with copies of the cell ball.
    pub fn lookup(&self, x: usize) -> (usize, Vec<usize>) {
        let i = self.cell_of[x];
        let mut list = self.neighbors[i].clone();
        list.resize(self.n_k, i);
        (i, list)
    }

    pub fn to_dump(&self, space: &MetricMeasureSpace) -> CoverDump {
        let ids = |v: &[usize]| v.iter().map(|&i| space.id(i)).collect::<Vec<_>>();
        CoverDump {
            k: self.k,
            radius: self.radius,
            centers: ids(&self.centers),
            members: self.members.iter().map(|m| ids(m)).collect(),
            cells: self.cells.iter().map(|m| ids(m)).collect(),
            neighbors: self.neighbors.clone(),
            n_k: self.n_k,
        }
    }
}

fn partition(n: usize, members: &[Vec<usize>]) -> (Vec<Vec<usize>>, Vec<usize>) {
    let mut cell_of = vec![usize::MAX; n];
    for (i, m) in members.iter().enumerate() {
        for &x in m {
            if cell_of[x] == usize::MAX {
                cell_of[x] = i;
            }
        }
    }
    let mut cells = vec![Vec::new(); members.len()];
    for (x, &i) in cell_of.iter().enumerate() {
        if i != usize::MAX {
            cells[i].push(x);
        }
    }
    (cells, cell_of)
}

/// `j` neighbors `i` when the set distance of the balls is below `h`. Balls
/// whose centers are `3h` or more apart are at set distance at least `h`.
fn neighbor_lists(space: &MetricMeasureSpace, centers: &[usize], members: &[Vec<usize>], h: f64) -> Vec<Vec<usize>> {
    let n = space.len();
    // distance from every point to each ball
    let to_ball: Vec<Vec<f64>> = members
        .par_iter()
        .map(|m| {
            let mut best = vec![f64::INFINITY; n];
            for &x in m {
                for (b, &d) in best.iter_mut().zip(space.dist_row(x)) {
                    *b = b.min(d);
                }
            }
            best
        })
        .collect();
    (0..centers.len())
        .into_par_iter()
        .map(|i| {
            (0..centers.len())
                .filter(|&j| {
                    j != i
                        && strictly_below(space.dist(centers[i], centers[j]), 3.0 * h)
                        && members[j].iter().any(|&y| strictly_below(to_ball[i][y], h))
                })
                .collect()
        })
        .collect()
}

/// Serializable cover snapshot with point ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverDump {
    pub k: i32,
    pub radius: f64,
    pub centers: Vec<u64>,
    pub members: Vec<Vec<u64>>,
    pub cells: Vec<Vec<u64>>,
    pub neighbors: Vec<Vec<usize>>,
    #[serde(rename = "N_k")]
    pub n_k: usize,
}

/// Outcome of every structural check on a cover, with witnesses.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CoverReport {
    pub coverage: bool,
    /// Point ids contained in no ball.
    pub orphans: Vec<u64>,
    pub fifth_balls_disjoint: bool,
    /// Ball index pairs whose fifth-balls meet.
    pub overlapping_fifth_pairs: Vec<(usize, usize)>,
    pub members_are_balls: bool,
    pub partition: bool,
    pub partition_witnesses: Vec<u64>,
    pub neighbors_exact: bool,
    pub neighbor_symmetry: bool,
    pub no_self_neighbors: bool,
    pub arity_bound: bool,
    pub neighbor_witnesses: Vec<(usize, usize)>,
}

impl CoverReport {
    pub fn all_pass(&self) -> bool {
        self.coverage
            && self.fifth_balls_disjoint
            && self.members_are_balls
            && self.partition
            && self.neighbors_exact
            && self.neighbor_symmetry
            && self.no_self_neighbors
            && self.arity_bound
    }
}

/// Re-derives every cover invariant from the definitions by exhaustive scans.
pub fn validate_cover(space: &MetricMeasureSpace, cover: &BallCover) -> CoverReport {
    let n = space.len();
    let m = cover.len();
    let h = cover.radius;
    let mut r = CoverReport::default();

    let mut covered = vec![false; n];
    for ball in &cover.members {
        for &x in ball {
            covered[x] = true;
        }
    }
    r.orphans = (0..n).filter(|&x| !covered[x]).map(|x| space.id(x)).collect();
    r.coverage = r.orphans.is_empty();

    let fifth: Vec<Vec<usize>> = cover.centers.iter().map(|&c| space.ball(c, h / 5.0)).collect();
    for i in 0..m {
        for j in (i + 1)..m {
            if fifth[i].iter().any(|x| fifth[j].binary_search(x).is_ok()) {
                r.overlapping_fifth_pairs.push((i, j));
            }
        }
    }
    r.fifth_balls_disjoint = r.overlapping_fifth_pairs.is_empty();

    r.members_are_balls =
        cover.members.len() == m && cover.members.iter().zip(&cover.centers).all(|(b, &c)| *b == space.ball(c, h));

    // A_i = B_i minus earlier balls; cell_of(x) = first ball containing x.
    for x in 0..n {
        let first = cover.members.iter().position(|b| b.contains(&x));
        let ok = match first {
            Some(i) => {
                cover.cell_of.get(x) == Some(&i)
                    && cover.cells.get(i).is_some_and(|c| c.contains(&x))
                    && cover.cells.iter().filter(|c| c.contains(&x)).count() == 1
            }
            None => false,
        };
        if !ok {
            r.partition_witnesses.push(space.id(x));
        }
    }
    let cells_inside = cover.cells.iter().zip(&cover.members).all(|(c, b)| c.iter().all(|x| b.contains(x)));
    r.partition = r.partition_witnesses.is_empty() && cells_inside && cover.cells.len() == m;

    r.neighbors_exact = true;
    r.neighbor_symmetry = true;
    r.no_self_neighbors = true;
    for i in 0..m {
        let list = cover.neighbors.get(i).cloned().unwrap_or_default();
        let expected: Vec<usize> = (0..m)
            .filter(|&j| j != i && strictly_below(space.set_distance(&cover.members[i], &cover.members[j]), h))
            .collect();
        if list != expected {
            r.neighbors_exact = false;
            r.neighbor_witnesses.push((i, usize::MAX));
        }
        if list.contains(&i) {
            r.no_self_neighbors = false;
        }
        for &j in &list {
            if !cover.neighbors.get(j).is_some_and(|l| l.contains(&i)) {
                r.neighbor_symmetry = false;
                r.neighbor_witnesses.push((i, j));
            }
        }
    }
    r.arity_bound = cover.neighbors.iter().all(|l| l.len() <= cover.n_k);
    r
}

/// Per-generation counts used to bound the cover geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverStats {
    pub k: i32,
    pub balls: usize,
    #[serde(rename = "N_k")]
    pub n_k: usize,
    /// `(theta, max_x #{i : x in theta B_i})`.
    pub overlap: Vec<(f64, usize)>,
}

pub fn cover_stats(space: &MetricMeasureSpace, cover: &BallCover, thetas: &[f64]) -> CoverStats {
    let overlap = thetas
        .iter()
        .map(|&theta| {
            let r = theta * cover.radius;
            let worst = (0..space.len())
                .map(|x| cover.centers.iter().filter(|&&c| within(space.dist(x, c), r)).count())
                .max()
                .unwrap_or(0);
            (theta, worst)
        })
        .collect();
    CoverStats { k: cover.k, balls: cover.len(), n_k: cover.n_k, overlap }
}

/// Neighbor-count cap implied by a doubling constant.
///
/// Neighbor centers lie within `3h` of `c_i`, their disjoint fifth-balls sit
/// inside `B(c_i, 16h/5)`, and that ball is inside `2^5 B(c_j, h/5)`.
pub fn neighbor_cap(c_d: f64) -> usize {
    (c_d.powi(5).floor() as usize).saturating_sub(1)
}

/// Covers for every generation in `lo..=hi`, built concurrently.
pub fn build_covers(space: &MetricMeasureSpace, lo: i32, hi: i32, start: usize) -> Vec<BallCover> {
    (lo..=hi).into_par_iter().map(|k| build_cover_from(space, k, start)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{generate_space, MetricMode, SpaceKind};

    fn line3() -> MetricMeasureSpace {
        MetricMeasureSpace::from_parts(
            vec![0, 1, 2],
            Some(vec![vec![0.0], vec![0.6], vec![1.2]]),
            MetricMode::Euclidean,
            vec![1.0; 3],
            vec![],
            None,
        )
        .unwrap()
    }

    fn single() -> MetricMeasureSpace {
        MetricMeasureSpace::from_parts(vec![7], Some(vec![vec![0.0]]), MetricMode::Euclidean, vec![1.0], vec![], None)
            .unwrap()
    }

    /// Reference construction straight from the definitions: given centers,
    /// cells are first-hit memberships and neighbors come from all point pairs.
    fn reference(space: &MetricMeasureSpace, centers: &[usize], h: f64) -> (Vec<Vec<usize>>, Vec<Vec<usize>>) {
        let n = space.len();
        let balls: Vec<Vec<usize>> =
            centers.iter().map(|&c| (0..n).filter(|&y| space.dist(c, y) <= h + 1e-12).collect()).collect();
        let mut cells = vec![Vec::new(); centers.len()];
        for x in 0..n {
            let i = (0..centers.len()).find(|&i| balls[i].contains(&x)).unwrap();
            cells[i].push(x);
        }
        let nbrs = (0..centers.len())
            .map(|i| {
                (0..centers.len())
                    .filter(|&j| j != i && balls[i].iter().any(|&a| balls[j].iter().any(|&b| space.dist(a, b) < h)))
                    .collect()
            })
            .collect();
        (cells, nbrs)
    }

    #[test]
    fn single_point_cover() {
        let s = single();
        let c = build_cover(&s, 0);
        assert_eq!(c.members, vec![vec![0]]);
        assert_eq!(c.cells, vec![vec![0]]);
        assert_eq!(c.n_k, 0);
        assert_eq!(c.lookup(0), (0, vec![]));
    }

    #[test]
    fn three_point_line_cover() {
        let s = line3();
        let c = build_cover(&s, 0);
        assert_eq!(c.centers, vec![0, 1, 2]);
        assert_eq!(c.members, vec![vec![0, 1], vec![0, 1, 2], vec![1, 2]]);
        assert_eq!(c.cells, vec![vec![0, 1], vec![2], vec![]]);
        let (cells, nbrs) = reference(&s, &c.centers, 1.0);
        assert_eq!(c.cells, cells);
        assert_eq!(c.neighbors, nbrs);
        assert_eq!(c.n_k, 2);
        assert_eq!(c.neighbors_of(0).unwrap(), &[1, 2]);
        assert!(c.neighbors_of(3).is_err());
        assert_eq!(c.lookup(2), (1, vec![0, 2]));
        assert_eq!(c.lookup(0), (0, vec![1, 2]));
        assert!(validate_cover(&s, &c).all_pass());
    }

    #[test]
    fn far_apart_points_have_no_neighbors() {
        let s = MetricMeasureSpace::from_parts(
            vec![0, 1],
            Some(vec![vec![0.0], vec![3.0]]),
            MetricMode::Euclidean,
            vec![1.0; 2],
            vec![],
            None,
        )
        .unwrap();
        let c = build_cover(&s, 0);
        assert_eq!(c.members, vec![vec![0], vec![1]]);
        assert!(c.neighbors.iter().all(Vec::is_empty));
        assert_eq!(c.lookup(1), (1, vec![]));
    }

    #[test]
    fn grid2d_neighbors_are_symmetric() {
        let s = generate_space(&SpaceKind::Grid2d { nx: 8, ny: 8 }).unwrap();
        let c = build_cover(&s, 2);
        let (cells, nbrs) = reference(&s, &c.centers, c.radius);
        assert_eq!(c.cells, cells);
        assert_eq!(c.neighbors, nbrs);
        for i in 0..c.len() {
            for &j in &c.neighbors[i] {
                assert!(c.neighbors[j].contains(&i));
            }
        }
        assert!(validate_cover(&s, &c).all_pass());
    }

    #[test]
    fn overlapping_fifth_balls_are_reported() {
        let s = generate_space(&SpaceKind::Grid1d { n: 11 }).unwrap();
        // centers 0.0 and 0.1 at k = 0: fifth-balls of radius 0.2 overlap
        let c = BallCover::from_centers(&s, 0, vec![0, 1]);
        let r = validate_cover(&s, &c);
        assert!(!r.fifth_balls_disjoint);
        assert_eq!(r.overlapping_fifth_pairs, vec![(0, 1)]);
        assert!(r.coverage);
    }

    #[test]
    fn orphan_point_is_reported() {
        let s = line3();
        let mut c = build_cover(&s, 0);
        for m in &mut c.members {
            m.retain(|&x| x != 2);
        }
        let r = validate_cover(&s, &c);
        assert!(!r.coverage);
        assert_eq!(r.orphans, vec![2]);
    }

    #[test]
    fn dump_uses_point_ids() {
        let s = single();
        let d = build_cover(&s, 0).to_dump(&s);
        assert_eq!(d.centers, vec![7]);
        let v = serde_json::to_value(&d).unwrap();
        assert_eq!(v["N_k"], 0);
    }

    #[test]
    fn cap_formula() {
        assert_eq!(neighbor_cap(1.0), 0);
        assert_eq!(neighbor_cap(2.0), 31);
    }
}
