use nalgebra::DVector;
use rand::seq::{index, SliceRandom};
use rand::{Rng, RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use super::Model;
use crate::rng::StreamRng;
use crate::{AbcError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CellParams {
    pub rows: usize,
    pub cols: usize,
    pub steps: usize,
    pub n_cells: usize,
    /// Initial cells are placed in the first `init_rows` rows.
    pub init_rows: usize,
    pub placement_seed: u64,
    pub p_motility: f64,
    pub p_proliferation: f64,
    pub data_seed: u64,
}

impl Default for CellParams {
    fn default() -> Self {
        Self {
            rows: 27,
            cols: 36,
            steps: 144,
            n_cells: 110,
            init_rows: 13,
            placement_seed: 7,
            p_motility: 0.36,
            p_proliferation: 0.001,
            data_seed: 2024,
        }
    }
}

/// Lattice cell motility and proliferation. Summaries are the Hamming
/// distances between consecutive lattices followed by the final cell count.
#[derive(Debug, Clone)]
pub struct CellModel {
    p: CellParams,
    initial: Vec<usize>,
    observed: DVector<f64>,
}

const DIRS: [(isize, isize); 4] = [(-1, 0), (0, 1), (1, 0), (0, -1)];

impl CellModel {
    pub fn new(p: CellParams) -> Result<Self> {
        let region = p.init_rows.min(p.rows) * p.cols;
        if p.rows == 0 || p.cols == 0 || p.steps == 0 {
            return Err(AbcError::InvalidParameter("cell lattice and step count must be positive".into()));
        }
        if p.n_cells > region {
            return Err(AbcError::InvalidParameter(format!(
                "{} cells do not fit in the {region}-site initial region",
                p.n_cells
            )));
        }
        let mut placement = StreamRng::seed_from_u64(p.placement_seed);
        let mut initial = index::sample(&mut placement, region, p.n_cells).into_vec();
        initial.sort_unstable();
        let mut model = Self {
            p,
            initial,
            observed: DVector::zeros(0),
        };
        let truth = DVector::from_row_slice(&[model.p.p_motility, model.p.p_proliferation]);
        let mut rng = StreamRng::seed_from_u64(model.p.data_seed);
        model.observed = DVector::from_vec(model.simulate(&truth, &mut rng));
        Ok(model)
    }

    /// Runs the lattice from an explicit initial configuration.
    pub fn simulate_from(&self, initial: &[usize], pm: f64, pp: f64, rng: &mut dyn RngCore) -> Vec<f64> {
        let (rows, cols) = (self.p.rows as isize, self.p.cols as isize);
        let mut grid = vec![false; self.p.rows * self.p.cols];
        let mut cells = initial.to_vec();
        for &c in &cells {
            grid[c] = true;
        }
        let neighbour = |site: usize, dir: usize| -> Option<usize> {
            let (x, y) = ((site / cols as usize) as isize, (site % cols as usize) as isize);
            let (nx, ny) = (x + DIRS[dir].0, y + DIRS[dir].1);
            (nx >= 0 && nx < rows && ny >= 0 && ny < cols).then(|| (nx * cols + ny) as usize)
        };
        let mut summaries = Vec::with_capacity(self.p.steps + 1);
        let mut order: Vec<usize> = Vec::new();
        for _ in 0..self.p.steps {
            let before = grid.clone();
            order.clear();
            order.extend(0..cells.len());
            order.shuffle(rng);
            for &i in &order {
                if rng.random::<f64>() < pm {
                    if let Some(t) = neighbour(cells[i], rng.random_range(0..4)) {
                        if !grid[t] {
                            grid[cells[i]] = false;
                            grid[t] = true;
                            cells[i] = t;
                        }
                    }
                }
            }
            order.shuffle(rng);
            for &i in &order {
                if rng.random::<f64>() < pp {
                    if let Some(t) = neighbour(cells[i], rng.random_range(0..4)) {
                        if !grid[t] {
                            grid[t] = true;
                            cells.push(t);
                        }
                    }
                }
            }
            let hamming = grid.iter().zip(&before).filter(|(a, b)| a != b).count();
            summaries.push(hamming as f64);
        }
        summaries.push(cells.len() as f64);
        summaries
    }

    pub fn initial_sites(&self) -> &[usize] {
        &self.initial
    }
}

impl Model for CellModel {
    fn name(&self) -> &'static str {
        "cell"
    }

    fn d_theta(&self) -> usize {
        2
    }

    fn d_s(&self) -> usize {
        self.p.steps + 1
    }

    fn prior_sample(&self, rng: &mut dyn RngCore) -> DVector<f64> {
        DVector::from_fn(2, |_, _| rng.random::<f64>())
    }

    fn prior_logpdf(&self, theta: &DVector<f64>) -> f64 {
        if theta.iter().all(|v| (0.0..=1.0).contains(v)) {
            0.0
        } else {
            f64::NEG_INFINITY
        }
    }

    /// The simulator reports its summaries directly.
    fn simulate(&self, theta: &DVector<f64>, rng: &mut dyn RngCore) -> Vec<f64> {
        self.simulate_from(&self.initial, theta[0], theta[1], rng)
    }

    fn summarize(&self, data: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(data)
    }

    fn observed_summaries(&self) -> DVector<f64> {
        self.observed.clone()
    }

    fn true_theta(&self) -> Option<DVector<f64>> {
        Some(DVector::from_row_slice(&[self.p.p_motility, self.p.p_proliferation]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn model() -> CellModel {
        CellModel::new(CellParams::default()).unwrap()
    }

    #[test]
    fn frozen_lattice() {
        let m = model();
        let mut r = stream(1, 0, 0);
        let s = m.simulate(&DVector::from_row_slice(&[0.0, 0.0]), &mut r);
        assert_eq!(s.len(), 145);
        assert!(s[..144].iter().all(|v| *v == 0.0));
        assert_eq!(s[144], 110.0);
    }

    #[test]
    fn motility_conserves_cells() {
        let m = model();
        let mut r = stream(2, 0, 0);
        for pm in [0.2, 0.9] {
            let s = m.simulate(&DVector::from_row_slice(&[pm, 0.0]), &mut r);
            assert_eq!(s[144], 110.0);
            assert!(s[..144].iter().all(|v| (*v as usize).is_multiple_of(2)));
            assert!(s[..144].iter().any(|v| *v > 0.0));
        }
    }

    #[test]
    fn full_lattice_is_blocked() {
        let m = CellModel::new(CellParams {
            rows: 4,
            cols: 5,
            steps: 10,
            n_cells: 20,
            init_rows: 4,
            ..CellParams::default()
        })
        .unwrap();
        let mut r = stream(3, 0, 0);
        let s = m.simulate(&DVector::from_row_slice(&[1.0, 1.0]), &mut r);
        assert!(s[..10].iter().all(|v| *v == 0.0));
        assert_eq!(s[10], 20.0);
    }

    #[test]
    fn cell_count_non_decreasing() {
        let m = model();
        let mut r = stream(4, 0, 0);
        let mut prev = 110.0;
        for steps in [1, 10, 50] {
            let short = CellModel {
                p: CellParams { steps, ..m.p.clone() },
                ..m.clone()
            };
            let s = short.simulate(&DVector::from_row_slice(&[0.5, 0.05]), &mut r);
            assert!(*s.last().unwrap() >= 110.0);
            prev = f64::max(prev, *s.last().unwrap());
        }
        assert!(prev > 110.0);
    }

    #[test]
    fn placement_in_initial_rows() {
        let m = model();
        assert_eq!(m.initial_sites().len(), 110);
        assert!(m.initial_sites().iter().all(|&c| c / 36 < 13));
    }
}
