//! Arena quadtree with unit-mass aggregation.

const NONE: u32 = u32::MAX;
const MAX_DEPTH: usize = 40;

#[derive(Debug, Clone)]
pub(crate) struct Cell {
    pub x0: f64,
    pub y0: f64,
    pub size: f64,
    pub mass: f64,
    pub cx: f64,
    pub cy: f64,
    /// Bodies covered, as a range of `QuadTree::order`.
    pub lo: u32,
    pub hi: u32,
    pub children: [u32; 4],
}

impl Cell {
    pub fn is_leaf(&self) -> bool {
        self.children.iter().all(|&c| c == NONE)
    }
}

#[derive(Debug, Clone)]
pub(crate) struct QuadTree {
    pub cells: Vec<Cell>,
    pub order: Vec<u32>,
    /// Position of each body in `order`.
    pub slot: Vec<u32>,
}

impl QuadTree {
    pub fn build(pos: &[[f64; 2]]) -> QuadTree {
        let (mut min_x, mut min_y, mut max_x, mut max_y) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
        for p in pos {
            min_x = min_x.min(p[0]);
            min_y = min_y.min(p[1]);
            max_x = max_x.max(p[0]);
            max_y = max_y.max(p[1]);
        }
        let size = (max_x - min_x).max(max_y - min_y).max(1e-9) * (1.0 + 1e-9);
        let mut tree = QuadTree {
            cells: Vec::with_capacity(pos.len() * 2),
            order: (0..pos.len() as u32).collect(),
            slot: vec![0; pos.len()],
        };
        if !pos.is_empty() {
            tree.split(pos, min_x, min_y, size, 0, pos.len(), 0);
        }
        for (s, &body) in tree.order.iter().enumerate() {
            tree.slot[body as usize] = s as u32;
        }
        tree
    }

    #[allow(clippy::too_many_arguments)]
    fn split(&mut self, pos: &[[f64; 2]], x0: f64, y0: f64, size: f64, lo: usize, hi: usize, depth: usize) -> u32 {
        let index = self.cells.len() as u32;
        self.cells.push(Cell {
            x0,
            y0,
            size,
            mass: 0.0,
            cx: 0.0,
            cy: 0.0,
            lo: lo as u32,
            hi: hi as u32,
            children: [NONE; 4],
        });
        if hi - lo > 1 && depth < MAX_DEPTH {
            let half = size / 2.0;
            let (mx, my) = (x0 + half, y0 + half);
            let quadrant = |b: u32| {
                let p = pos[b as usize];
                usize::from(p[0] >= mx) + 2 * usize::from(p[1] >= my)
            };
            self.order[lo..hi].sort_unstable_by_key(|&b| (quadrant(b), b));
            let mut start = lo;
            let mut children = [NONE; 4];
            for (q, child) in children.iter_mut().enumerate() {
                let end = start + self.order[start..hi].iter().take_while(|&&b| quadrant(b) == q).count();
                if end > start {
                    let cx0 = if q & 1 == 1 { mx } else { x0 };
                    let cy0 = if q & 2 == 2 { my } else { y0 };
                    *child = self.split(pos, cx0, cy0, half, start, end, depth + 1);
                }
                start = end;
            }
            self.cells[index as usize].children = children;
            let (mut m, mut sx, mut sy) = (0.0, 0.0, 0.0);
            for &c in children.iter().filter(|&&c| c != NONE) {
                let c = &self.cells[c as usize];
                m += c.mass;
                sx += c.mass * c.cx;
                sy += c.mass * c.cy;
            }
            let cell = &mut self.cells[index as usize];
            cell.mass = m;
            cell.cx = sx / m;
            cell.cy = sy / m;
        } else {
            let (mut sx, mut sy) = (0.0, 0.0);
            for &b in &self.order[lo..hi] {
                sx += pos[b as usize][0];
                sy += pos[b as usize][1];
            }
            let m = (hi - lo) as f64;
            let cell = &mut self.cells[index as usize];
            cell.mass = m;
            cell.cx = sx / m;
            cell.cy = sy / m;
        }
        index
    }

    pub fn children<'a>(&'a self, cell: &'a Cell) -> impl Iterator<Item = &'a Cell> + 'a {
        cell.children.iter().filter(|&&c| c != NONE).map(|&c| &self.cells[c as usize])
    }

    /// Largest deviation between a cell's aggregates and the sum over its
    /// children: `(mass error, centroid error)`.
    pub fn conservation_error(&self) -> (f64, f64) {
        let (mut mass_err, mut centroid_err) = (0.0f64, 0.0f64);
        for cell in self.cells.iter().filter(|c| !c.is_leaf()) {
            let (mut m, mut sx, mut sy) = (0.0, 0.0, 0.0);
            for child in self.children(cell) {
                m += child.mass;
                sx += child.mass * child.cx;
                sy += child.mass * child.cy;
            }
            mass_err = mass_err.max((cell.mass - m).abs());
            let scale = cell.size.max(1.0);
            centroid_err = centroid_err
                .max((cell.cx - sx / m).abs() / scale)
                .max((cell.cy - sy / m).abs() / scale);
        }
        (mass_err, centroid_err)
    }

    pub fn assert_conserved(&self) {
        let (mass, centroid) = self.conservation_error();
        assert!(
            mass == 0.0 && centroid < 1e-9,
            "quadtree aggregates drifted: mass {mass}, centroid {centroid}"
        );
        for cell in &self.cells {
            let slack = 1e-9 * cell.size.max(1.0);
            let inside = |c: f64, lo: f64| c >= lo - slack && c <= lo + cell.size + slack;
            assert!(
                inside(cell.cx, cell.x0) && inside(cell.cy, cell.y0),
                "centroid outside its cell"
            );
        }
    }
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn aggregates_are_conserved() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut pos: Vec<[f64; 2]> = (0..500)
            .map(|_| [rng.random_range(-100.0..100.0), rng.random_range(-100.0..100.0)])
            .collect();
        pos.extend([[5.0, 5.0]; 4]);
        let tree = QuadTree::build(&pos);
        tree.assert_conserved();
        let root = &tree.cells[0];
        assert_eq!(root.mass, pos.len() as f64);
        let mean_x = pos.iter().map(|p| p[0]).sum::<f64>() / pos.len() as f64;
        assert!((root.cx - mean_x).abs() < 1e-9);
        let mut seen = tree.order.clone();
        seen.sort();
        assert_eq!(seen, (0..pos.len() as u32).collect::<Vec<_>>());
        for (b, &s) in tree.slot.iter().enumerate() {
            assert_eq!(tree.order[s as usize], b as u32);
        }
    }

    #[test]
    fn single_body() {
        let tree = QuadTree::build(&[[1.0, 2.0]]);
        assert_eq!(tree.cells.len(), 1);
        assert!(tree.cells[0].is_leaf());
        assert_eq!((tree.cells[0].cx, tree.cells[0].cy), (1.0, 2.0));
    }
}
