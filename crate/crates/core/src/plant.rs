//! Linear time-invariant plants observed by local Kalman filters.
//!
//! Only the steady-state error covariance of each local filter is needed: the
//! remote estimator's error after `tau` slots without a delivery is obtained
//! by propagating that covariance through the open-loop dynamics.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Open01, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default fixed-point tolerance for the Riccati iteration (Frobenius norm).
pub const RICCATI_TOL: f64 = 1e-9;
/// Default iteration budget for the Riccati iteration.
pub const RICCATI_MAX_ITER: usize = 1_000_000;
/// Resampling budget when a generated plant is unusable.
pub const MAX_PLANT_RETRIES: usize = 100;

/// `x(t+1) = A x(t) + w(t)`, `y(t) = C x(t) + v(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantModel {
    pub a: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub w: DMatrix<f64>,
    pub v: DMatrix<f64>,
}

/// Steady-state posterior covariance of the local filter.
#[derive(Debug, Clone, PartialEq)]
pub struct SteadyStateCov {
    pub p_bar: DMatrix<f64>,
    /// Frobenius change of the last prediction-Riccati iterate.
    pub residual: f64,
}

/// Closed interval of target spectral radii.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadiusRange {
    pub min: f64,
    pub max: f64,
}

impl Default for RadiusRange {
    fn default() -> Self {
        RadiusRange { min: 1.0, max: 1.3 }
    }
}

impl PlantModel {
    pub fn new(
        a: DMatrix<f64>,
        c: DMatrix<f64>,
        w: DMatrix<f64>,
        v: DMatrix<f64>,
    ) -> Result<Self> {
        let l = a.nrows();
        if a.ncols() != l {
            return Err(Error::InvalidArgument("A must be square".into()));
        }
        if c.ncols() != l {
            return Err(Error::DimensionMismatch {
                expected: l,
                got: c.ncols(),
            });
        }
        let r = c.nrows();
        if w.shape() != (l, l) {
            return Err(Error::InvalidArgument(format!("W must be {l}x{l}")));
        }
        if v.shape() != (r, r) {
            return Err(Error::InvalidArgument(format!("V must be {r}x{r}")));
        }
        if !is_symmetric(&w, 1e-12) || !is_symmetric(&v, 1e-12) {
            return Err(Error::InvalidArgument("W and V must be symmetric".into()));
        }
        if v.clone().cholesky().is_none() {
            return Err(Error::InvalidArgument("V must be positive definite".into()));
        }
        Ok(PlantModel { a, c, w, v })
    }

    /// Scalar plant `a`, `c` with noise variances `w`, `v`.
    pub fn scalar(a: f64, c: f64, w: f64, v: f64) -> Result<Self> {
        let m = |x| DMatrix::from_element(1, 1, x);
        Self::new(m(a), m(c), m(w), m(v))
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn meas_dim(&self) -> usize {
        self.c.nrows()
    }

    pub fn spectral_radius(&self) -> f64 {
        spectral_radius(&self.a)
    }

    /// One open-loop covariance step `A X Aᵀ + W`.
    pub fn propagate(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut next = &self.a * x * self.a.transpose() + &self.w;
        symmetrize(&mut next);
        next
    }
}

pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Samples a plant whose `A` has spectral radius uniform in `range`, with
/// i.i.d. standard-normal `C`, and `W = I`, `V = I`.
///
/// Draws that give a zero-radius `A` or a non-convergent Riccati iteration
/// are resampled.
pub fn generate_random_plant<R: Rng + ?Sized>(
    l: usize,
    r: usize,
    range: RadiusRange,
    rng: &mut R,
) -> Result<PlantModel> {
    if l == 0 || r == 0 {
        return Err(Error::InvalidArgument("plant dimensions must be >= 1".into()));
    }
    if !(range.min >= 1.0 && range.max >= range.min && range.max > 1.0) {
        return Err(Error::InvalidArgument(format!(
            "spectral radius range ({}, {}) must lie above 1",
            range.min, range.max
        )));
    }
    for _ in 0..MAX_PLANT_RETRIES {
        let target = if range.max > range.min {
            let u: f64 = rng.sample(Open01);
            range.min + (range.max - range.min) * u
        } else {
            range.min
        };
        let sample = DMatrix::from_fn(l, l, |_, _| rng.sample::<f64, _>(StandardNormal));
        let c = DMatrix::from_fn(r, l, |_, _| rng.sample::<f64, _>(StandardNormal));
        let rho = spectral_radius(&sample);
        if !(rho > 1e-12) {
            continue;
        }
        let a = sample * (target / rho);
        let plant = PlantModel::new(a, c, DMatrix::identity(l, l), DMatrix::identity(r, r))?;
        match solve_steady_state_covariance(&plant, RICCATI_TOL, 100_000) {
            Ok(_) => return Ok(plant),
            Err(Error::RiccatiDiverged { .. } | Error::SingularInnovation) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::PlantGeneration(MAX_PLANT_RETRIES))
}

/// Iterates the prediction Riccati recursion from `P⁻ = W` until the
/// Frobenius change drops to `tol`, then returns the posterior covariance
/// `P⁻ − P⁻Cᵀ(CP⁻Cᵀ + V)⁻¹CP⁻`.
pub fn solve_steady_state_covariance(
    plant: &PlantModel,
    tol: f64,
    max_iter: usize,
) -> Result<SteadyStateCov> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument("tolerance must be positive".into()));
    }
    let mut prior = plant.w.clone();
    let mut residual = f64::INFINITY;
    for _ in 0..max_iter {
        let next = plant.propagate(&measurement_update(plant, &prior)?);
        residual = (&next - &prior).norm();
        prior = next;
        if !residual.is_finite() {
            break;
        }
        if residual <= tol {
            let p_bar = measurement_update(plant, &prior)?;
            return Ok(SteadyStateCov { p_bar, residual });
        }
    }
    Err(Error::RiccatiDiverged {
        iterations: max_iter,
        residual,
    })
}

/// Posterior covariance after one measurement given prior `P⁻`.
pub fn measurement_update(plant: &PlantModel, prior: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let c = &plant.c;
    let innovation = c * prior * c.transpose() + &plant.v;
    let chol = innovation.cholesky().ok_or(Error::SingularInnovation)?;
    let pct = prior * c.transpose();
    let gain_t = chol.solve(&pct.transpose());
    let mut post = prior - &pct * gain_t;
    symmetrize(&mut post);
    Ok(post)
}

/// Remote error covariance `f^{τ−1}(P̄)` at AoI `tau` (so `tau = 1` gives `P̄`).
pub fn error_covariance_at_aoi(
    plant: &PlantModel,
    p_bar: &SteadyStateCov,
    tau: u32,
) -> Result<DMatrix<f64>> {
    if tau == 0 {
        return Err(Error::InvalidArgument("AoI must be >= 1".into()));
    }
    let mut p = p_bar.p_bar.clone();
    for step in 1..tau {
        p = plant.propagate(&p);
        if p.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "covariance overflow at AoI {}",
                step + 1
            )));
        }
    }
    Ok(p)
}

/// `Tr(f^{τ−1}(P̄))`.
pub fn estimation_cost(plant: &PlantModel, p_bar: &SteadyStateCov, tau: u32) -> Result<f64> {
    Ok(error_covariance_at_aoi(plant, p_bar, tau)?.trace())
}

/// Costs for `tau = 1..=cap`, indexed by `tau - 1`.
pub fn cost_table(plant: &PlantModel, p_bar: &SteadyStateCov, cap: u32) -> Result<Vec<f64>> {
    if cap == 0 {
        return Err(Error::InvalidArgument("AoI cap must be >= 1".into()));
    }
    let mut table = Vec::with_capacity(cap as usize);
    let mut p = p_bar.p_bar.clone();
    table.push(p.trace());
    for tau in 2..=cap {
        p = plant.propagate(&p);
        let cost = p.trace();
        if !cost.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "estimation cost overflows at AoI {tau}"
            )));
        }
        table.push(cost);
    }
    Ok(table)
}

/// `f^times(x)` with `f(X) = AXAᵀ + W`.
pub fn apply_open_loop(plant: &PlantModel, x: &DMatrix<f64>, times: u32) -> DMatrix<f64> {
    (0..times).fold(x.clone(), |acc, _| plant.propagate(&acc))
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}

fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    (m - m.transpose()).amax() <= tol * m.amax().max(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    fn riccati_map(plant: &PlantModel, prior: &DMatrix<f64>) -> DMatrix<f64> {
        plant.propagate(&measurement_update(plant, prior).unwrap())
    }

    #[test]
    fn scalar_rescale_hits_radius_exactly() {
        let mut rng = rng_from_seed(3);
        let range = RadiusRange { min: 1.2, max: 1.2 };
        let p = generate_random_plant(1, 1, range, &mut rng).unwrap();
        assert!((p.a[(0, 0)].abs() - 1.2).abs() < 1e-14);
    }

    #[test]
    fn generated_radius_in_range() {
        let mut rng = rng_from_seed(11);
        for _ in 0..50 {
            let p = generate_random_plant(2, 2, RadiusRange::default(), &mut rng).unwrap();
            let rho = p.spectral_radius();
            assert!(rho > 1.0 && rho < 1.3, "rho = {rho}");
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_random_plant(2, 2, RadiusRange::default(), &mut rng_from_seed(5)).unwrap();
        let b = generate_random_plant(2, 2, RadiusRange::default(), &mut rng_from_seed(5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bad_ranges_rejected() {
        let mut rng = rng_from_seed(0);
        let r = RadiusRange { min: 0.5, max: 0.9 };
        assert!(generate_random_plant(2, 2, r, &mut rng).is_err());
        assert!(generate_random_plant(0, 2, RadiusRange::default(), &mut rng).is_err());
    }

    #[test]
    fn scalar_riccati_matches_fixed_point_oracle() {
        // 10^4 plain fixed-point iterations of P <- 1.44 P + 1 - 1.44 P^2/(P+1) from P = 1.
        const P_PRIOR: f64 = 1.9522337440599489;
        const P_BAR: f64 = 0.6612734333749646;
        let plant = PlantModel::scalar(1.2, 1.0, 1.0, 1.0).unwrap();
        let ss = solve_steady_state_covariance(&plant, 1e-13, RICCATI_MAX_ITER).unwrap();
        assert!((ss.p_bar[(0, 0)] - P_BAR).abs() < 1e-12);
        let prior = plant.propagate(&ss.p_bar);
        assert!((prior[(0, 0)] - P_PRIOR).abs() < 1e-12);
    }

    #[test]
    fn zero_dynamics_closed_form() {
        let q0 = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let plant = PlantModel::new(
            DMatrix::zeros(2, 2),
            DMatrix::identity(2, 2),
            q0.clone(),
            DMatrix::identity(2, 2),
        )
        .unwrap();
        let ss = solve_steady_state_covariance(&plant, RICCATI_TOL, 100).unwrap();
        let i = DMatrix::<f64>::identity(2, 2);
        let expected = &q0 - &q0 * (&q0 + &i).try_inverse().unwrap() * &q0;
        assert!((&ss.p_bar - expected).norm() < 1e-12);
    }

    #[test]
    fn converged_residual_is_small() {
        let mut rng = rng_from_seed(21);
        let p = generate_random_plant(2, 2, RadiusRange::default(), &mut rng).unwrap();
        let ss = solve_steady_state_covariance(&p, RICCATI_TOL, RICCATI_MAX_ITER).unwrap();
        let prior = p.propagate(&ss.p_bar);
        let res = (riccati_map(&p, &prior) - &prior).norm();
        assert!(res <= 1e-9, "residual {res}");
        assert!(ss.residual <= 1e-9);
    }

    #[test]
    fn undetectable_pair_diverges() {
        // Unstable mode invisible to the sensor.
        let plant = PlantModel::new(
            DMatrix::from_row_slice(2, 2, &[1.2, 0.0, 0.0, 0.5]),
            DMatrix::from_row_slice(1, 2, &[0.0, 1.0]),
            DMatrix::identity(2, 2),
            DMatrix::identity(1, 1),
        )
        .unwrap();
        let err = solve_steady_state_covariance(&plant, RICCATI_TOL, 10_000).unwrap_err();
        assert!(matches!(err, Error::RiccatiDiverged { .. }));
    }

    #[test]
    fn aoi_offsets() {
        let mut rng = rng_from_seed(2);
        let p = generate_random_plant(2, 2, RadiusRange::default(), &mut rng).unwrap();
        let ss = solve_steady_state_covariance(&p, RICCATI_TOL, RICCATI_MAX_ITER).unwrap();
        assert_eq!(error_covariance_at_aoi(&p, &ss, 1).unwrap(), ss.p_bar);
        let two = &p.a * &ss.p_bar * p.a.transpose() + &p.w;
        assert!((error_covariance_at_aoi(&p, &ss, 2).unwrap() - two).norm() < 1e-12);
        assert!(error_covariance_at_aoi(&p, &ss, 0).is_err());
        assert!((estimation_cost(&p, &ss, 1).unwrap() - ss.p_bar.trace()).abs() < 1e-15);
    }

    #[test]
    fn composition_identity() {
        let mut rng = rng_from_seed(8);
        let p = generate_random_plant(2, 2, RadiusRange::default(), &mut rng).unwrap();
        let ss = solve_steady_state_covariance(&p, RICCATI_TOL, RICCATI_MAX_ITER).unwrap();
        let seven = error_covariance_at_aoi(&p, &ss, 8).unwrap();
        let composed = apply_open_loop(&p, &apply_open_loop(&p, &ss.p_bar, 4), 3);
        assert!((&seven - &composed).norm() <= 1e-10 * seven.norm());
    }

    #[test]
    fn scalar_cost_recursion() {
        let plant = PlantModel::scalar(1.2, 1.0, 1.0, 1.0).unwrap();
        let ss = solve_steady_state_covariance(&plant, RICCATI_TOL, RICCATI_MAX_ITER).unwrap();
        let table = cost_table(&plant, &ss, 60).unwrap();
        for w in table.windows(2) {
            let want = 1.44 * w[0] + 1.0;
            assert!((w[1] - want).abs() <= 1e-12 * want.max(1.0));
        }
    }

    #[test]
    fn cost_grows_for_unstable_plant() {
        let mut rng = rng_from_seed(4);
        let p = generate_random_plant(2, 2, RadiusRange::default(), &mut rng).unwrap();
        let ss = solve_steady_state_covariance(&p, RICCATI_TOL, RICCATI_MAX_ITER).unwrap();
        assert!(estimation_cost(&p, &ss, 50).unwrap() > estimation_cost(&p, &ss, 1).unwrap());
    }

    #[test]
    fn cost_table_matches_pointwise() {
        let mut rng = rng_from_seed(9);
        let p = generate_random_plant(2, 2, RadiusRange::default(), &mut rng).unwrap();
        let ss = solve_steady_state_covariance(&p, RICCATI_TOL, RICCATI_MAX_ITER).unwrap();
        let table = cost_table(&p, &ss, 200).unwrap();
        assert_eq!(table.len(), 200);
        for tau in [1u32, 2, 17, 200] {
            let c = estimation_cost(&p, &ss, tau).unwrap();
            assert!((table[tau as usize - 1] - c).abs() <= 1e-12 * c);
        }
    }
}
