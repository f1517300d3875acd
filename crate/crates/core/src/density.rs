//! Mollified empirical density `h = theta_N * S` on a grid.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::grid::{centered_to_origin, GridField, GridSpec, Point, Spectrum};
use crate::kernels::MollifierSpec;
use crate::particles::Population;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DepositScheme {
    NearestGridPoint,
    /// Cloud-in-cell.
    #[default]
    Linear,
}

/// Spreads weighted atoms onto the grid as a density: each atom contributes
/// `weight / dx^d`, split over nodes by `scheme`.
pub fn deposit(
    grid: &GridSpec,
    scheme: DepositScheme,
    atoms: impl Iterator<Item = (Point, f64)>,
) -> GridField {
    let g = grid.points();
    let dx = grid.spacing();
    let l = grid.half_length();
    let inv_cell = 1.0 / grid.cell_volume();
    let mut values = vec![0.0; grid.len()];
    let locate = |x: f64| {
        let u = (x + l) / dx;
        let i0 = u.floor();
        (grid.wrap_index(i0 as isize), u - i0)
    };
    for (x, w) in atoms {
        let w = w * inv_cell;
        match (scheme, grid.dim()) {
            (DepositScheme::NearestGridPoint, 1) => {
                let (i, f) = locate(x[0]);
                let i = if f >= 0.5 { (i + 1) % g } else { i };
                values[i] += w;
            }
            (DepositScheme::NearestGridPoint, _) => {
                let (i, fx) = locate(x[0]);
                let (j, fy) = locate(x[1]);
                let i = if fx >= 0.5 { (i + 1) % g } else { i };
                let j = if fy >= 0.5 { (j + 1) % g } else { j };
                values[i + g * j] += w;
            }
            (DepositScheme::Linear, 1) => {
                let (i, f) = locate(x[0]);
                values[i] += (1.0 - f) * w;
                values[(i + 1) % g] += f * w;
            }
            (DepositScheme::Linear, _) => {
                let (i0, fx) = locate(x[0]);
                let (j0, fy) = locate(x[1]);
                let (i1, j1) = ((i0 + 1) % g, (j0 + 1) % g);
                values[i0 + g * j0] += (1.0 - fx) * (1.0 - fy) * w;
                values[i1 + g * j0] += fx * (1.0 - fy) * w;
                values[i0 + g * j1] += (1.0 - fx) * fy * w;
                values[i1 + g * j1] += fx * fy * w;
            }
        }
    }
    GridField::from_values_unchecked(*grid, values)
}

/// `theta_N` on a fixed grid with its transform cached.
#[derive(Debug, Clone)]
pub struct DensityEstimator {
    mollifier: MollifierSpec,
    n: usize,
    scheme: DepositScheme,
    theta: GridField,
    kernel: Spectrum,
}

impl DensityEstimator {
    pub fn new(
        mollifier: MollifierSpec,
        n: usize,
        grid: &GridSpec,
        scheme: DepositScheme,
    ) -> Result<Self> {
        let theta = mollifier.sample_on_grid(n, grid)?;
        let mut kernel = Spectrum::forward(&centered_to_origin(&theta));
        kernel.scale(grid.cell_volume());
        Ok(Self {
            mollifier,
            n,
            scheme,
            theta,
            kernel,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        self.theta.spec()
    }

    pub fn mollifier(&self) -> &MollifierSpec {
        &self.mollifier
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn scheme(&self) -> DepositScheme {
        self.scheme
    }

    /// Grid samples of `theta_N` with the origin at node `G/2`.
    pub fn theta(&self) -> &GridField {
        &self.theta
    }

    /// `theta_N * f`.
    pub fn smooth(&self, f: &GridField) -> Result<GridField> {
        if f.spec() != self.grid() {
            return Err(invalid("field and kernel live on different grids"));
        }
        let mut s = Spectrum::forward(f);
        s.multiply(&self.kernel);
        Ok(s.inverse())
    }

    /// `h = theta_N * S` with atoms of weight `1 / N0`.
    pub fn density(&self, pop: &Population) -> Result<GridField> {
        self.check_population(pop)?;
        let w = 1.0 / pop.n0() as f64;
        self.density_of_atoms(pop.positions().map(|x| (x, w)))
    }

    /// `theta_N * (sum_a w_a delta_{x_a})`.
    pub fn density_of_atoms(&self, atoms: impl Iterator<Item = (Point, f64)>) -> Result<GridField> {
        let rho = deposit(self.grid(), self.scheme, atoms);
        self.smooth(&rho)
    }

    fn check_population(&self, pop: &Population) -> Result<()> {
        if pop.grid() != self.grid() {
            return Err(invalid("population box differs from the estimator grid"));
        }
        Ok(())
    }

    /// Worst `|theta_N * (f S)| - ||f||_inf h` over the nodes, with `f`
    /// interpolated at the particles.
    pub fn weighted_smoothing_bound_check(&self, pop: &Population, f: &GridField) -> Result<f64> {
        self.check_population(pop)?;
        if f.spec() != self.grid() {
            return Err(invalid("weight field lives on a different grid"));
        }
        f.check_finite()?;
        let w = 1.0 / pop.n0() as f64;
        let lhs = self.density_of_atoms(pop.positions().map(|x| (x, w * f.interpolate(x))))?;
        let h = self.density(pop)?;
        let sup = f.sup_norm();
        Ok(lhs
            .values()
            .iter()
            .zip(h.values())
            .map(|(a, b)| a.abs() - sup * b)
            .fold(f64::NEG_INFINITY, f64::max))
    }

    /// A priori bound on the gap between the gridded estimate and the exact
    /// kernel sum for linear deposition: `dx * d * max |d_k theta_N| * mass`.
    pub fn deposition_bound(&self, mass: f64) -> Result<f64> {
        let grid = self.grid();
        let d = grid.dim() as i32;
        let eps = self.mollifier.epsilon(self.n)?;
        let grad = self.mollifier.kernel().derivative_sup(grid.dim()) / eps.powi(d + 1);
        Ok(grid.spacing() * d as f64 * grad * mass)
    }
}

/// One-shot `theta_N * S_t^N` with `N` taken as the population's `N0`.
pub fn mollified_density(
    pop: &Population,
    mollifier: &MollifierSpec,
    scheme: DepositScheme,
) -> Result<GridField> {
    DensityEstimator::new(*mollifier, pop.n0(), pop.grid(), scheme)?.density(pop)
}

/// Exact kernel sum `sum_a theta_N(x - X_a) / N0` at every node, using the
/// nearest periodic image. Quadratic cost; for testing.
pub fn direct_sum(
    positions: &[Point],
    n0: usize,
    mollifier: &MollifierSpec,
    n: usize,
    grid: &GridSpec,
) -> Result<GridField> {
    let eps = mollifier.epsilon(n)?;
    let w = 1.0 / n0 as f64;
    Ok(GridField::from_fn(*grid, |x| {
        positions
            .iter()
            .map(|p| {
                let r = [
                    grid.minimal_image(x[0] - p[0]),
                    grid.minimal_image(x[1] - p[1]),
                ];
                mollifier.eval_scaled(eps, r)
            })
            .sum::<f64>()
            * w
    }))
}

/// `(1 - h)^+`.
pub fn rate_field(h: &GridField) -> GridField {
    h.map(|v| (1.0 - v).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::BaseKernel;
    use crate::particles::InitialProfile;

    fn gauss() -> MollifierSpec {
        MollifierSpec::new(BaseKernel::Gaussian, 0.25, 1, 1.0, false).unwrap()
    }

    #[test]
    fn single_atom_at_node_reproduces_kernel() {
        let g = GridSpec::new(1, 10.0, 512).unwrap();
        let node = g.coordinate(300);
        let pop = Population::init(
            1,
            &InitialProfile::PointMass {
                mass: 1.0,
                center: [node, 0.0],
            },
            g,
            0,
        )
        .unwrap();
        let h = mollified_density(&pop, &gauss(), DepositScheme::Linear).unwrap();
        let peak = BaseKernel::Gaussian.eval([0.0; 2], 1);
        assert!((h.values()[300] - peak).abs() < 1e-12);
        assert!(
            (h.values()[310] - BaseKernel::Gaussian.eval([10.0 * g.spacing(), 0.0], 1)).abs()
                < 1e-12
        );
    }

    #[test]
    fn empty_population_gives_zero() {
        let g = GridSpec::new(1, 10.0, 256).unwrap();
        let pop = Population::init(10, &InitialProfile::Zero, g, 0).unwrap();
        let h = mollified_density(&pop, &gauss(), DepositScheme::Linear).unwrap();
        assert_eq!(h.sup_norm(), 0.0);
    }

    #[test]
    fn fft_matches_direct_sum_within_deposition_bound() {
        for dim in [1, 2] {
            let g = GridSpec::new(dim, 8.0, if dim == 1 { 1024 } else { 256 }).unwrap();
            let m = MollifierSpec::new(BaseKernel::Gaussian, 0.25, dim, 1.0, false).unwrap();
            let profile = InitialProfile::Gaussian {
                mass: 1.0,
                sigma: 1.0,
                center: [0.0; 2],
            };
            let pop = Population::init(200, &profile, g, 3).unwrap();
            let est = DensityEstimator::new(m, 200, &g, DepositScheme::Linear).unwrap();
            let h = est.density(&pop).unwrap();
            let positions: Vec<Point> = pop.positions().collect();
            let exact = direct_sum(&positions, 200, &m, 200, &g).unwrap();
            let diff = h.zip_map(&exact, |a, b| a - b).unwrap().sup_norm();
            let bound = 1e-8 + est.deposition_bound(pop.mass()).unwrap();
            assert!(diff < bound, "d={dim}: {diff} vs {bound}");
        }
    }

    #[test]
    fn mass_identity_and_nonnegativity() {
        let g = GridSpec::new(1, 10.0, 1024).unwrap();
        for scheme in [DepositScheme::Linear, DepositScheme::NearestGridPoint] {
            let profile = InitialProfile::Gaussian {
                mass: 0.7,
                sigma: 1.0,
                center: [0.0; 2],
            };
            let pop = Population::init(1000, &profile, g, 3).unwrap();
            let h = mollified_density(&pop, &gauss(), scheme).unwrap();
            assert!((h.integral() - pop.mass()).abs() < 1e-12);
            assert!(h.min() >= -1e-12);
        }
    }

    #[test]
    fn rate_field_examples() {
        let g = GridSpec::new(1, 1.0, 8).unwrap();
        assert!(rate_field(&GridField::zeros(g))
            .values()
            .iter()
            .all(|&v| v == 1.0));
        assert!(rate_field(&GridField::constant(g, 1.0))
            .values()
            .iter()
            .all(|&v| v == 0.0));
        assert_eq!(rate_field(&GridField::constant(g, 1.7)).values()[3], 0.0);
    }

    #[test]
    fn weighted_smoothing_bound() {
        let g = GridSpec::new(1, 10.0, 1024).unwrap();
        let profile = InitialProfile::Gaussian {
            mass: 1.0,
            sigma: 1.0,
            center: [0.0; 2],
        };
        let pop = Population::init(500, &profile, g, 4).unwrap();
        let est = DensityEstimator::new(gauss(), 500, &g, DepositScheme::Linear).unwrap();
        let h = est.density(&pop).unwrap();
        assert!(
            est.weighted_smoothing_bound_check(&pop, &GridField::constant(g, 1.0))
                .unwrap()
                <= 1e-12
        );
        let zero = est
            .density_of_atoms(pop.positions().map(|x| (x, 0.0)))
            .unwrap();
        assert_eq!(zero.sup_norm(), 0.0);
        assert!(
            est.weighted_smoothing_bound_check(&pop, &rate_field(&h))
                .unwrap()
                <= 1e-10
        );
        let wiggle = GridField::from_fn(g, |x| (3.0 * x[0]).sin());
        assert!(est.weighted_smoothing_bound_check(&pop, &wiggle).unwrap() <= 1e-10);
    }

    #[test]
    fn deposition_schemes_differ_by_order_dx() {
        let profile = InitialProfile::Gaussian {
            mass: 1.0,
            sigma: 1.0,
            center: [0.0; 2],
        };
        let mut constants = Vec::new();
        for points in [1024, 2048, 4096] {
            let g = GridSpec::new(1, 10.0, points).unwrap();
            let pop = Population::init(2000, &profile, g, 4).unwrap();
            let a = mollified_density(&pop, &gauss(), DepositScheme::Linear).unwrap();
            let b = mollified_density(&pop, &gauss(), DepositScheme::NearestGridPoint).unwrap();
            let diff = a.zip_map(&b, |x, y| x - y).unwrap().sup_norm();
            constants.push(diff / g.spacing());
        }
        let max = constants.iter().cloned().fold(0.0, f64::max);
        let min = constants.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(max < 3.0 * min, "{constants:?}");
        assert!(max < 1.0);
    }
}
