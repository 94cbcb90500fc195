//! Brute-force compaction rule: every displaced cell scans the whole grid.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use tape_lab::compaction::{CellGrid, Eligibility};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NaiveOutcome {
    Contact(usize),
    Terminal(usize),
}

#[derive(Clone)]
pub struct NaiveGrid {
    cells: Vec<Vec<bool>>, // [row][col]
    n_w: usize,
    n_h: usize,
    plate: usize,
    eps_x: f64,
    eps_z: f64,
    mode: Eligibility,
}

impl NaiveGrid {
    pub fn new(
        n_w: usize,
        n_h: usize,
        occ: &[bool],
        plate: usize,
        eps_x: f64,
        eps_z: f64,
        mode: Eligibility,
    ) -> Self {
        let cells = (0..n_h)
            .map(|r| occ[r * n_w..(r + 1) * n_w].to_vec())
            .collect();
        NaiveGrid {
            cells,
            n_w,
            n_h,
            plate,
            eps_x,
            eps_z,
            mode,
        }
    }

    #[allow(dead_code)]
    pub fn from_grid(g: &CellGrid) -> Self {
        Self::new(
            g.n_w(),
            g.n_h(),
            g.occupancy(),
            g.plate_row(),
            g.eps_x(),
            g.eps_z(),
            Eligibility::Supported,
        )
    }

    pub fn occupancy(&self) -> Vec<bool> {
        self.cells.iter().flatten().copied().collect()
    }

    fn count_rows_from(&self, from: usize) -> usize {
        self.cells[from.min(self.n_h)..]
            .iter()
            .flatten()
            .filter(|&&m| m)
            .count()
    }

    pub fn contact_count(&self) -> usize {
        if self.plate == 0 {
            return 0;
        }
        self.cells[self.plate - 1].iter().filter(|&&m| m).count()
    }

    fn eligible(&self, c: usize, r: usize, limit: usize) -> bool {
        if r > limit || self.cells[r][c] {
            return false;
        }
        match self.mode {
            Eligibility::AnyAir => true,
            Eligibility::Supported => r == 0 || self.cells[r - 1][c],
        }
    }

    pub fn step(&mut self) -> NaiveOutcome {
        if self.plate == 0 {
            return NaiveOutcome::Terminal(self.contact_count());
        }
        let plate = self.plate - 1;
        if plate < 2 {
            return NaiveOutcome::Terminal(self.count_rows_from(plate.saturating_sub(1)));
        }
        let n_c = self.count_rows_from(plate - 1);
        let limit = plate - 2;
        let saved = self.cells.clone();
        let mut displaced = Vec::new();
        for c in 0..self.n_w {
            for r in (plate..self.n_h).rev() {
                if self.cells[r][c] {
                    displaced.push((c, r));
                }
            }
        }
        for (c, r) in displaced {
            self.cells[r][c] = false;
            let mut best: Option<(f64, usize, usize)> = None;
            for tc in 0..self.n_w {
                for tr in 0..self.n_h {
                    if !self.eligible(tc, tr, limit) {
                        continue;
                    }
                    let dx = tc.abs_diff(c) as f64 * self.eps_x;
                    let dz = (r - tr) as f64 * self.eps_z;
                    let d = dx * dx + dz * dz;
                    if best.is_none_or(|(bd, _, _)| d < bd) {
                        best = Some((d, tc, tr));
                    }
                }
            }
            match best {
                Some((_, tc, tr)) => self.cells[tr][tc] = true,
                None => {
                    self.cells = saved;
                    return NaiveOutcome::Terminal(n_c);
                }
            }
        }
        self.plate = plate;
        NaiveOutcome::Contact(self.contact_count())
    }
}

/// A random grid of at most 20 x 20 cells and its naive twin.
pub fn random_grid(rng: &mut ChaCha8Rng, mode: Eligibility) -> (CellGrid, NaiveGrid) {
    let n_w = rng.gen_range(1..=20);
    let n_h = rng.gen_range(1..=20);
    let fill: f64 = rng.gen_range(0.2..0.9);
    let eps = [0.1, 0.5, 1.0, 3.0];
    let eps_x = eps[rng.gen_range(0..eps.len())];
    let eps_z = eps[rng.gen_range(0..eps.len())];
    let plate = rng.gen_range(0..=n_h);
    let occ: Vec<bool> = (0..n_w * n_h)
        .map(|i| i / n_w < plate && rng.gen_bool(fill))
        .collect();
    let grid = CellGrid::from_occupancy(n_w, n_h, occ.clone(), plate, eps_x, eps_z, mode).unwrap();
    let naive = NaiveGrid::new(n_w, n_h, &occ, plate, eps_x, eps_z, mode);
    (grid, naive)
}

/// Steps both grids in lockstep; the first disagreement, if any.
pub fn compare(grid: &mut CellGrid, naive: &mut NaiveGrid, max_steps: usize) -> Result<usize, String> {
    for step in 0..max_steps {
        match (grid.step(), naive.step()) {
            (Ok(a), NaiveOutcome::Contact(b)) if a == b => {}
            (Err(t), NaiveOutcome::Terminal(n_c)) if t.n_c == n_c => return Ok(step),
            (a, b) => return Err(format!("step {step}: {a:?} vs {b:?}")),
        }
        if grid.occupancy() != naive.occupancy().as_slice() {
            return Err(format!("step {step}: occupancy differs"));
        }
    }
    Ok(max_steps)
}

/// A rough surface of at most 20 x 20 cells: random column heights with a
/// few pores, the plate resting on the tallest column.
pub fn random_surface(rng: &mut ChaCha8Rng, mode: Eligibility) -> (CellGrid, NaiveGrid) {
    let n_w = rng.gen_range(2..=20);
    let n_h = rng.gen_range(3..=20);
    let eps = [0.1, 0.5, 1.0, 3.0];
    let eps_x = eps[rng.gen_range(0..eps.len())];
    let eps_z = eps[rng.gen_range(0..eps.len())];
    // mostly low with a few peaks, so the valleys take many steps to fill
    let heights: Vec<usize> = (0..n_w)
        .map(|_| 1 + ((n_h - 2) as f64 * rng.gen::<f64>().powi(3)).round() as usize)
        .collect();
    let plate = *heights.iter().max().unwrap();
    let occ: Vec<bool> = (0..n_w * n_h)
        .map(|i| {
            let (row, col) = (i / n_w, i % n_w);
            row < heights[col] && (row == 0 || !rng.gen_bool(0.1))
        })
        .collect();
    let grid = CellGrid::from_occupancy(n_w, n_h, occ.clone(), plate, eps_x, eps_z, mode).unwrap();
    let naive = NaiveGrid::new(n_w, n_h, &occ, plate, eps_x, eps_z, mode);
    (grid, naive)
}
