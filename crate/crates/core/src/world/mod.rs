//! Grid geometry, base-station topology, Markov mobility, task arrivals
//! and channel power gains.

mod config;

pub use config::{ConfigError, LearnConfig, SimConfig, SweepConfig, WorldConfig};

use rand::Rng;
use rand_chacha::ChaCha12Rng;

/// A cell index on the grid.
#[derive(Copy, Clone, PartialEq, Eq, Hash, Debug, PartialOrd, Ord)]
pub struct Location(pub u32);

/// Square grid of `side x side` cells, each `cell_m` meters on a side.
#[derive(Clone, Debug)]
pub struct Grid {
    side: u32,
    cell_m: f64,
}

impl Grid {
    pub fn new(side: u32, cell_m: f64) -> Self {
        assert!(side >= 1 && cell_m > 0.0);
        Grid { side, cell_m }
    }

    pub fn side(&self) -> u32 {
        self.side
    }

    pub fn n_cells(&self) -> u32 {
        self.side * self.side
    }

    pub fn contains(&self, loc: Location) -> bool {
        loc.0 < self.n_cells()
    }

    pub fn col_row(&self, loc: Location) -> (u32, u32) {
        (loc.0 % self.side, loc.0 / self.side)
    }

    pub fn at(&self, col: u32, row: u32) -> Location {
        debug_assert!(col < self.side && row < self.side);
        Location(row * self.side + col)
    }

    /// Center coordinates of a cell in meters.
    pub fn center(&self, loc: Location) -> (f64, f64) {
        let (c, r) = self.col_row(loc);
        (
            (f64::from(c) + 0.5) * self.cell_m,
            (f64::from(r) + 0.5) * self.cell_m,
        )
    }

    /// Cell whose area contains the point `(x, y)`; exact round-trip with `center`.
    pub fn cell_at(&self, x: f64, y: f64) -> Option<Location> {
        if x < 0.0 || y < 0.0 {
            return None;
        }
        let c = (x / self.cell_m) as u32;
        let r = (y / self.cell_m) as u32;
        if c >= self.side || r >= self.side {
            return None;
        }
        Some(self.at(c, r))
    }

    pub fn distance(&self, a: Location, b: Location) -> f64 {
        let (ax, ay) = self.center(a);
        let (bx, by) = self.center(b);
        ((ax - bx).powi(2) + (ay - by).powi(2)).sqrt()
    }

    /// Moore neighborhood (up to 8 cells), ascending by index.
    pub fn neighbors(&self, loc: Location) -> Vec<Location> {
        let (c, r) = self.col_row(loc);
        let mut out = Vec::with_capacity(8);
        for dr in -1i64..=1 {
            for dc in -1i64..=1 {
                if dr == 0 && dc == 0 {
                    continue;
                }
                let nc = i64::from(c) + dc;
                let nr = i64::from(r) + dr;
                if nc >= 0 && nr >= 0 && (nc as u32) < self.side && (nr as u32) < self.side {
                    out.push(self.at(nc as u32, nr as u32));
                }
            }
        }
        out.sort();
        out
    }
}

/// Base stations at quadrant centers with rook adjacency; coverage sets
/// partition the grid.
#[derive(Clone, Debug)]
pub struct Topology {
    bs_cells: Vec<Location>,
    coverage: Vec<u8>,
    adjacent: Vec<bool>,
    bs_count: usize,
}

impl Topology {
    /// `bs_grid x bs_grid` stations, each covering its own region of cells.
    pub fn quadrants(grid: &Grid, bs_grid: u32) -> Self {
        assert!(bs_grid >= 1 && bs_grid <= grid.side());
        let g = bs_grid;
        let b = (g * g) as usize;
        let side = grid.side();
        let region_of = |v: u32| -> u32 { ((v * g) / side).min(g - 1) };
        let mut coverage = vec![0u8; grid.n_cells() as usize];
        for idx in 0..grid.n_cells() {
            let (c, r) = grid.col_row(Location(idx));
            coverage[idx as usize] = (region_of(r) * g + region_of(c)) as u8;
        }
        // Station cell: center cell of each region.
        let mut bs_cells = Vec::with_capacity(b);
        for qr in 0..g {
            for qc in 0..g {
                let c0 = qc * side / g;
                let c1 = (qc + 1) * side / g;
                let r0 = qr * side / g;
                let r1 = (qr + 1) * side / g;
                bs_cells.push(grid.at((c0 + c1) / 2, (r0 + r1) / 2));
            }
        }
        let mut adjacent = vec![false; b * b];
        for qr in 0..g {
            for qc in 0..g {
                let i = (qr * g + qc) as usize;
                if qc + 1 < g {
                    let j = (qr * g + qc + 1) as usize;
                    adjacent[i * b + j] = true;
                    adjacent[j * b + i] = true;
                }
                if qr + 1 < g {
                    let j = ((qr + 1) * g + qc) as usize;
                    adjacent[i * b + j] = true;
                    adjacent[j * b + i] = true;
                }
            }
        }
        Topology {
            bs_cells,
            coverage,
            adjacent,
            bs_count: b,
        }
    }

    pub fn bs_count(&self) -> usize {
        self.bs_count
    }

    pub fn serving_bs(&self, loc: Location) -> u8 {
        self.coverage[loc.0 as usize]
    }

    pub fn bs_cell(&self, bs: u8) -> Location {
        self.bs_cells[bs as usize]
    }

    pub fn is_adjacent(&self, a: u8, b: u8) -> bool {
        self.adjacent[a as usize * self.bs_count + b as usize]
    }

    /// Adjacency flattened for the auction solver.
    pub fn auction_topology(&self) -> crate::auction::Topology {
        let mut t = crate::auction::Topology::new(self.bs_count);
        for a in 0..self.bs_count {
            for b in 0..self.bs_count {
                if self.adjacent[a * self.bs_count + b] {
                    t.set_adjacent(a, b);
                }
            }
        }
        t
    }
}

/// Per-cell transition rows: `(target, probability)` with the stay entry
/// first, then reachable neighbors ascending by index.
#[derive(Clone, Debug)]
pub struct MobilityModel {
    rows: Vec<Vec<(Location, f64)>>,
}

impl MobilityModel {
    /// Random sparse walk: stay plus up to 8 neighbors. Each row draws a
    /// stay probability from [0.5, 0.9] and splits the rest over the
    /// neighbors with random weights, giving dwell times of a few epochs.
    pub fn random_walk(grid: &Grid, rng: &mut ChaCha12Rng) -> Self {
        let mut rows = Vec::with_capacity(grid.n_cells() as usize);
        for idx in 0..grid.n_cells() {
            let here = Location(idx);
            let neighbors = grid.neighbors(here);
            if neighbors.is_empty() {
                rows.push(vec![(here, 1.0)]);
                continue;
            }
            let stay = 0.5 + 0.4 * rng.random::<f64>();
            let weights: Vec<f64> = neighbors.iter().map(|_| rng.random::<f64>()).collect();
            let total: f64 = weights.iter().sum();
            let mut row = vec![(here, stay)];
            row.extend(
                neighbors
                    .into_iter()
                    .zip(weights)
                    .map(|(t, w)| (t, (1.0 - stay) * w / total)),
            );
            rows.push(row);
        }
        MobilityModel { rows }
    }

    /// Every cell stays put with probability one.
    pub fn stationary(grid: &Grid) -> Self {
        let rows = (0..grid.n_cells())
            .map(|idx| vec![(Location(idx), 1.0)])
            .collect();
        MobilityModel { rows }
    }

    /// Build from explicit rows (tests).
    pub fn from_rows(rows: Vec<Vec<(Location, f64)>>) -> Self {
        MobilityModel { rows }
    }

    pub fn row(&self, cell: Location) -> &[(Location, f64)] {
        &self.rows[cell.0 as usize]
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    /// Inverse-CDF sample of the next cell.
    pub fn step(&self, current: Location, rng: &mut ChaCha12Rng) -> Location {
        let row = &self.rows[current.0 as usize];
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for &(target, p) in row {
            acc += p;
            if u < acc {
                return target;
            }
        }
        row.last().expect("mobility row must be non-empty").0
    }
}

/// Pre-processing buffer holding at most one task, identified by its
/// arrival epoch (0 = empty). A newer arrival replaces an older task.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq)]
pub struct TaskBuffer {
    arrival_epoch: u64,
}

impl TaskBuffer {
    pub fn empty() -> Self {
        TaskBuffer { arrival_epoch: 0 }
    }

    pub fn is_empty(&self) -> bool {
        self.arrival_epoch == 0
    }

    pub fn arrival_epoch(&self) -> u64 {
        self.arrival_epoch
    }

    /// Bernoulli arrival at epoch `j`; an arriving task replaces any older one.
    pub fn sample_arrival_and_admit(&mut self, epoch: u64, lambda: f64, rng: &mut ChaCha12Rng) {
        debug_assert!(epoch >= 1);
        if lambda > 0.0 && rng.random::<f64>() < lambda {
            self.arrival_epoch = epoch;
        }
    }

    /// Consume the buffered task, returning its arrival epoch.
    pub fn take(&mut self) -> u64 {
        debug_assert!(self.arrival_epoch > 0, "take on empty buffer");
        std::mem::take(&mut self.arrival_epoch)
    }
}

/// Uplink destination for gain lookups.
#[derive(Copy, Clone, PartialEq, Eq, Debug)]
pub enum GainDest {
    Bs(u8),
    Uav,
}

/// World geometry bundle: configuration plus derived grid and topology.
#[derive(Clone, Debug)]
pub struct World {
    pub cfg: WorldConfig,
    pub grid: Grid,
    pub topology: Topology,
}

impl World {
    pub fn new(cfg: WorldConfig) -> Self {
        let grid = Grid::new(cfg.grid_side_cells, cfg.cell_size_m);
        let topology = Topology::quadrants(&grid, cfg.bs_grid);
        World {
            cfg,
            grid,
            topology,
        }
    }

    /// Average channel power gain between an MU cell and a destination.
    ///
    /// Ground: `g0 * max(d, 1 m)^(-alpha)`. UAV line of sight:
    /// `g0v * (H^2 + d^2)^(-alpha_v / 2)` with `d` the horizontal distance.
    pub fn channel_gain(&self, mu: Location, dest: GainDest, uav: Location) -> f64 {
        match dest {
            GainDest::Bs(b) => {
                let d = self.grid.distance(mu, self.topology.bs_cell(b)).max(1.0);
                self.cfg.ground_gain_ref * d.powf(-self.cfg.ground_gain_exp)
            }
            GainDest::Uav => {
                let d = self.grid.distance(mu, uav);
                let sq = self.cfg.uav_altitude_m.powi(2) + d * d;
                self.cfg.uav_gain_ref * sq.powf(-self.cfg.uav_gain_exp / 2.0)
            }
        }
    }
}
