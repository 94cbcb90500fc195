use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::profile::RoughnessProfile;

/// Which air cells may receive a displaced material cell.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Eligibility {
    /// Air cells resting on material or on the grid floor. Air never stays
    /// trapped under relocated material (ideal venting).
    #[default]
    Supported,
    /// Any air cell below the contact row.
    AnyAir,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompactionConfig {
    /// Solid rows under the lowest profile point.
    pub base_rows: usize,
    /// Upper bound on `n_w * n_h`.
    pub max_cells: usize,
    pub eligibility: Eligibility,
}

impl Default for CompactionConfig {
    fn default() -> Self {
        CompactionConfig {
            base_rows: 2,
            max_cells: 100_000_000,
            eligibility: Eligibility::Supported,
        }
    }
}

/// Signal that no eligible air cell is left for a displaced cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Terminal {
    /// Material cells in contact with the plate: the contact row plus the
    /// cells the plate could not displace.
    pub n_c: usize,
    pub n_w: usize,
}

impl Terminal {
    /// Non-physical asymptotic DIC, `N_c / N_w - floor(N_c / N_w)`.
    pub fn plateau(&self) -> f64 {
        let ratio = self.n_c as f64 / self.n_w as f64;
        ratio - ratio.floor()
    }
}

/// Two-state (material / air) grid under a descending rigid plate.
///
/// Row 0 is the floor. `plate_row` is the first row occupied by the plate, so
/// the contact row is `plate_row - 1`.
#[derive(Clone, Debug)]
pub struct CellGrid {
    n_w: usize,
    n_h: usize,
    occupancy: Vec<bool>,
    plate_row: usize,
    eps_x: f64,
    eps_z: f64,
    material_count: usize,
    eligibility: Eligibility,
    // per column, rows of air cells that could receive material (ignoring the plate)
    candidates: Vec<BTreeSet<usize>>,
}

/// Discretizes a profile into columns of material standing on a solid base.
pub fn rasterize(
    profile: &RoughnessProfile,
    eps_z: f64,
    config: &CompactionConfig,
) -> Result<CellGrid> {
    if !(eps_z.is_finite() && eps_z > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "eps_z must be positive, got {eps_z}"
        )));
    }
    if profile.heights.is_empty() {
        return Err(Error::InvalidData("empty profile".into()));
    }
    let min = profile.min_height();
    let span = (profile.max_height() - min) / eps_z;
    let n_w = profile.heights.len();
    let n_h = span.round() + config.base_rows as f64;
    if !n_h.is_finite() || n_h * n_w as f64 > config.max_cells as f64 {
        return Err(Error::Resource(format!(
            "{n_w} x {n_h} cells exceed the cap of {} (eps_z = {eps_z} μm)",
            config.max_cells
        )));
    }
    let heights: Vec<usize> = profile
        .heights
        .iter()
        .map(|h| ((h - min) / eps_z).round() as usize + config.base_rows)
        .collect();
    let n_h = heights.iter().copied().max().unwrap_or(0);
    if n_h == 0 {
        return Err(Error::InvalidArgument(
            "grid without rows: use base_rows >= 1 for flat profiles".into(),
        ));
    }
    let mut occupancy = vec![false; n_w * n_h];
    for (c, &h) in heights.iter().enumerate() {
        for r in 0..h {
            occupancy[r * n_w + c] = true;
        }
    }
    CellGrid::from_occupancy(
        n_w,
        n_h,
        occupancy,
        n_h,
        profile.spacing,
        eps_z,
        config.eligibility,
    )
}

impl CellGrid {
    /// Builds a grid from an explicit row-major field (`occupancy[r * n_w + c]`).
    pub fn from_occupancy(
        n_w: usize,
        n_h: usize,
        occupancy: Vec<bool>,
        plate_row: usize,
        eps_x: f64,
        eps_z: f64,
        eligibility: Eligibility,
    ) -> Result<Self> {
        if n_w == 0 || occupancy.len() != n_w * n_h {
            return Err(Error::InvalidArgument(format!(
                "occupancy of length {} does not match {n_w} x {n_h}",
                occupancy.len()
            )));
        }
        if plate_row > n_h {
            return Err(Error::InvalidArgument("plate above the grid".into()));
        }
        if occupancy[plate_row * n_w..].iter().any(|&m| m) {
            return Err(Error::InvalidData(
                "material at or above the plate row".into(),
            ));
        }
        if !(eps_x > 0.0 && eps_z > 0.0) {
            return Err(Error::InvalidArgument("cell sizes must be positive".into()));
        }
        let material_count = occupancy.iter().filter(|&&m| m).count();
        let mut grid = CellGrid {
            n_w,
            n_h,
            occupancy,
            plate_row,
            eps_x,
            eps_z,
            material_count,
            eligibility,
            candidates: vec![BTreeSet::new(); n_w],
        };
        for r in 0..n_h {
            for c in 0..n_w {
                grid.refresh(c, r);
            }
        }
        Ok(grid)
    }

    pub fn n_w(&self) -> usize {
        self.n_w
    }

    pub fn n_h(&self) -> usize {
        self.n_h
    }

    pub fn plate_row(&self) -> usize {
        self.plate_row
    }

    pub fn eps_x(&self) -> f64 {
        self.eps_x
    }

    pub fn eps_z(&self) -> f64 {
        self.eps_z
    }

    pub fn material_count(&self) -> usize {
        self.material_count
    }

    pub fn is_material(&self, col: usize, row: usize) -> bool {
        self.occupancy[row * self.n_w + col]
    }

    pub fn occupancy(&self) -> &[bool] {
        &self.occupancy
    }

    /// Number of material cells in the row just under the plate.
    pub fn contact_count(&self) -> usize {
        match self.plate_row.checked_sub(1) {
            Some(r) => self.row(r).iter().filter(|&&m| m).count(),
            None => 0,
        }
    }

    /// Index one past the topmost material cell of every column.
    pub fn column_heights(&self) -> Vec<usize> {
        (0..self.n_w)
            .map(|c| {
                (0..self.n_h)
                    .rev()
                    .find(|&r| self.is_material(c, r))
                    .map_or(0, |r| r + 1)
            })
            .collect()
    }

    fn row(&self, r: usize) -> &[bool] {
        &self.occupancy[r * self.n_w..(r + 1) * self.n_w]
    }

    fn is_candidate(&self, c: usize, r: usize) -> bool {
        if self.is_material(c, r) {
            return false;
        }
        match self.eligibility {
            Eligibility::AnyAir => true,
            Eligibility::Supported => r == 0 || self.is_material(c, r - 1),
        }
    }

    fn refresh(&mut self, c: usize, r: usize) {
        if r >= self.n_h {
            return;
        }
        if self.is_candidate(c, r) {
            self.candidates[c].insert(r);
        } else {
            self.candidates[c].remove(&r);
        }
    }

    fn set(&mut self, c: usize, r: usize, material: bool) {
        let idx = r * self.n_w + c;
        if self.occupancy[idx] == material {
            return;
        }
        self.occupancy[idx] = material;
        if material {
            self.material_count += 1;
        } else {
            self.material_count -= 1;
        }
        self.refresh(c, r);
        self.refresh(c, r + 1);
    }

    /// Highest candidate row of column `c` not above `limit`.
    fn best_in_column(&self, c: usize, limit: usize) -> Option<usize> {
        self.candidates[c].range(..=limit).next_back().copied()
    }

    fn distance2(&self, dc: usize, dr: usize) -> f64 {
        let dx = dc as f64 * self.eps_x;
        let dz = dr as f64 * self.eps_z;
        dx * dx + dz * dz
    }

    /// Closest eligible air cell to `(col, row)`; ties go to the smaller
    /// column, then the lower row.
    fn nearest(
        &self,
        col: usize,
        row: usize,
        limit: usize,
        open: &BTreeSet<usize>,
    ) -> Option<(usize, usize)> {
        let mut best: Option<(f64, usize, usize)> = None;
        let consider = |c: usize, best: &mut Option<(f64, usize, usize)>| -> bool {
            let dc = c.abs_diff(col);
            let floor = {
                let dx = dc as f64 * self.eps_x;
                dx * dx
            };
            if let Some((d, _, _)) = best {
                if floor > *d {
                    return false;
                }
            }
            if let Some(r) = self.best_in_column(c, limit) {
                let d = self.distance2(dc, row - r);
                let better = match *best {
                    None => true,
                    Some((bd, bc, br)) => d < bd || (d == bd && (c, r) < (bc, br)),
                };
                if better {
                    *best = Some((d, c, r));
                }
            }
            true
        };
        for &c in open.range(col..) {
            if !consider(c, &mut best) {
                break;
            }
        }
        for &c in open.range(..col).rev() {
            if !consider(c, &mut best) {
                break;
            }
        }
        best.map(|(_, c, r)| (c, r))
    }

    /// Lowers the plate by one row and relocates every material cell it
    /// enters to the closest eligible air cell, one at a time, columns
    /// ascending and rows descending.
    ///
    /// Returns the new contact count. When a displaced cell has nowhere to
    /// go the step is rolled back and the terminal state is reported.
    pub fn step(&mut self) -> std::result::Result<usize, Terminal> {
        let old_plate = self.plate_row;
        let Some(plate) = old_plate.checked_sub(1) else {
            return Err(Terminal {
                n_c: self.contact_count(),
                n_w: self.n_w,
            });
        };
        let in_contact_or_above = |g: &CellGrid| {
            let from = plate.saturating_sub(1);
            g.occupancy[from * g.n_w..].iter().filter(|&&m| m).count()
        };
        if plate < 2 {
            return Err(Terminal {
                n_c: in_contact_or_above(self),
                n_w: self.n_w,
            });
        }
        let limit = plate - 2;
        let mut displaced = Vec::new();
        for c in 0..self.n_w {
            for r in (plate..self.n_h).rev() {
                if self.is_material(c, r) {
                    displaced.push((c, r));
                }
            }
        }
        let n_c = in_contact_or_above(self);
        self.plate_row = plate;
        let mut open: BTreeSet<usize> = (0..self.n_w)
            .filter(|&c| self.best_in_column(c, limit).is_some())
            .collect();
        let mut moves = Vec::with_capacity(displaced.len());
        for &(c, r) in &displaced {
            match self.nearest(c, r, limit, &open) {
                Some((tc, tr)) => {
                    self.set(c, r, false);
                    self.set(tc, tr, true);
                    moves.push(((c, r), (tc, tr)));
                    for col in [c, tc] {
                        if self.best_in_column(col, limit).is_some() {
                            open.insert(col);
                        } else {
                            open.remove(&col);
                        }
                    }
                }
                None => {
                    for &((c, r), (tc, tr)) in moves.iter().rev() {
                        self.set(tc, tr, false);
                        self.set(c, r, true);
                    }
                    self.plate_row = old_plate;
                    return Err(Terminal { n_c, n_w: self.n_w });
                }
            }
        }
        Ok(self.contact_count())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_from_heights(heights: &[usize], eps: (f64, f64), mode: Eligibility) -> CellGrid {
        let n_w = heights.len();
        let n_h = *heights.iter().max().unwrap();
        let mut occ = vec![false; n_w * n_h];
        for (c, &h) in heights.iter().enumerate() {
            for r in 0..h {
                occ[r * n_w + c] = true;
            }
        }
        CellGrid::from_occupancy(n_w, n_h, occ, n_h, eps.0, eps.1, mode).unwrap()
    }

    #[test]
    fn rasterize_rounds_heights() {
        let p = RoughnessProfile::new("s", vec![0.0, 1.0], 3.0, None).unwrap();
        let g = rasterize(&p, 0.5, &CompactionConfig::default()).unwrap();
        let h = g.column_heights();
        assert_eq!(h[1] - h[0], 2);
        assert_eq!(h[0], 2);
        assert_eq!(g.plate_row(), g.n_h());
        assert_eq!(g.contact_count(), 1);
    }

    #[test]
    fn rasterize_reproduces_profile_within_eps_z() {
        let heights: Vec<f64> = (0..50).map(|i| (i as f64 * 0.7).sin() * 2.0).collect();
        let p = RoughnessProfile::new("s", heights.clone(), 3.0, None).unwrap();
        let cfg = CompactionConfig::default();
        let eps_z = 0.1;
        let g = rasterize(&p, eps_z, &cfg).unwrap();
        let min = p.min_height();
        for (col, h) in g.column_heights().iter().zip(&heights) {
            let rebuilt = (*col - cfg.base_rows) as f64 * eps_z + min;
            assert!((rebuilt - h).abs() <= eps_z);
        }
    }

    #[test]
    fn flat_profile_touches_everywhere() {
        let p = RoughnessProfile::new("f", vec![1.0; 10], 3.0, None).unwrap();
        let g = rasterize(&p, 0.1, &CompactionConfig::default()).unwrap();
        assert_eq!(g.contact_count(), 10);
        assert!(g.column_heights().iter().all(|&h| h == 2));
    }

    #[test]
    fn memory_cap_is_enforced() {
        let p = RoughnessProfile::new("s", vec![0.0, 100.0], 3.0, None).unwrap();
        let cfg = CompactionConfig {
            max_cells: 1000,
            ..Default::default()
        };
        assert!(matches!(rasterize(&p, 0.01, &cfg), Err(Error::Resource(_))));
        assert!(rasterize(&p, 0.0, &cfg).is_err());
    }

    #[test]
    fn rejects_material_above_plate() {
        let r = CellGrid::from_occupancy(2, 2, vec![true, true, true, false], 1, 1.0, 1.0, Eligibility::Supported);
        assert!(r.is_err());
    }

    #[test]
    fn displaced_cell_goes_to_nearest_valley() {
        // columns of height 3,3,1,1 (in cells), square cells
        let mut g = grid_from_heights(&[3, 3, 1, 1], (1.0, 1.0), Eligibility::Supported);
        assert_eq!(g.contact_count(), 2);
        let before = g.material_count();
        // plate to row 2: cells (0,2),(1,2) displaced; only row 0 is eligible (limit = 0),
        // and every valley column already has material there.
        let t = g.step().unwrap_err();
        assert_eq!(g.material_count(), before);
        assert_eq!(g.plate_row(), 3);
        // contact row 1 holds 2 cells, plus the 2 displaced ones
        assert_eq!(t.n_c, 4);
        assert_eq!(t.plateau(), 0.0);
    }

    #[test]
    fn step_fills_the_adjacent_valley_first() {
        let mut g = grid_from_heights(&[6, 1, 1, 1, 1, 6, 1], (1.0, 0.25), Eligibility::Supported);
        let n = g.step().unwrap();
        // plate at row 5, limit 3; cell from column 0 lands in column 1 row 1, column 5 in 4
        assert_eq!(n, 2);
        assert!(g.is_material(1, 1));
        assert!(g.is_material(4, 1));
        assert!(!g.is_material(6, 1));
    }

    #[test]
    fn any_air_mode_prefers_high_cells() {
        let mut g = grid_from_heights(&[6, 1, 1], (1.0, 0.25), Eligibility::AnyAir);
        g.step().unwrap();
        // the nearest air cell under the contact row is right beside the source
        assert!(g.is_material(1, 3));
        assert!(!g.is_material(1, 1));
    }

    #[test]
    fn plateau_formula() {
        let t = Terminal { n_c: 7, n_w: 3 };
        assert_eq!(t.plateau(), 7.0 / 3.0 - 2.0);
        assert!((t.plateau() - 1.0 / 3.0).abs() < 1e-15);
    }
}
