//! Constant-velocity Kalman filter over `[cx, cy, area, aspect, vx, vy, v_area]`.
//! The aspect ratio is modelled as constant.

use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::detection::Detection;
use crate::error::{Error, Result};
use crate::geometry::BBox;

pub type StateVector = SVector<f64, 7>;
pub type StateCovariance = SMatrix<f64, 7, 7>;
type Measurement = SVector<f64, 4>;
type Observation = SMatrix<f64, 4, 7>;

const MIN_AREA: f64 = 1.0;
const MIN_ASPECT: f64 = 1e-6;

/// Noise settings. Defaults follow the SORT tracker's published values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KalmanParams {
    /// Diagonal measurement noise on `[cx, cy, area, aspect]`.
    pub measurement_noise: [f64; 4],
    /// Diagonal process noise on the full state.
    pub process_noise: [f64; 7],
    pub initial_position_variance: f64,
    pub initial_velocity_variance: f64,
}

impl Default for KalmanParams {
    fn default() -> Self {
        Self {
            measurement_noise: [1.0, 1.0, 10.0, 0.01],
            process_noise: [1.0, 1.0, 1.0, 0.01, 0.01, 0.01, 1e-4],
            initial_position_variance: 10.0,
            initial_velocity_variance: 1000.0,
        }
    }
}

impl KalmanParams {
    pub fn validate(&self) -> Result<()> {
        let all_positive = self
            .measurement_noise
            .iter()
            .chain(&self.process_noise)
            .chain([&self.initial_position_variance, &self.initial_velocity_variance])
            .all(|v| *v > 0.0 && v.is_finite());
        if !all_positive {
            return Err(Error::Config("Kalman noise variances must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KalmanState {
    pub mean: StateVector,
    pub covariance: StateCovariance,
}

impl KalmanState {
    pub fn bbox(&self) -> BBox {
        let s = self.mean[2].max(MIN_AREA);
        let r = self.mean[3].max(MIN_ASPECT);
        let w = (s * r).sqrt();
        BBox::new(self.mean[0], self.mean[1], w, s / w)
    }

    pub fn center(&self) -> (f64, f64) {
        (self.mean[0], self.mean[1])
    }

    pub fn velocity(&self) -> (f64, f64) {
        (self.mean[4], self.mean[5])
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (self.covariance - self.covariance.transpose()).abs().max() <= tol
    }

    pub fn is_positive_definite(&self) -> bool {
        self.covariance.cholesky().is_some()
    }
}

fn measurement(bbox: &BBox) -> Measurement {
    Measurement::new(bbox.cx, bbox.cy, bbox.area(), bbox.w / bbox.h)
}

#[derive(Debug, Clone)]
pub struct KalmanFilter {
    transition: StateCovariance,
    observation: Observation,
    process: StateCovariance,
    noise: SMatrix<f64, 4, 4>,
    initial: StateCovariance,
}

impl Default for KalmanFilter {
    fn default() -> Self {
        Self::new(&KalmanParams::default())
    }
}

impl KalmanFilter {
    pub fn new(params: &KalmanParams) -> Self {
        let mut transition = StateCovariance::identity();
        transition[(0, 4)] = 1.0;
        transition[(1, 5)] = 1.0;
        transition[(2, 6)] = 1.0;
        let mut observation = Observation::zeros();
        for i in 0..4 {
            observation[(i, i)] = 1.0;
        }
        let process = StateCovariance::from_diagonal(&SVector::from(params.process_noise));
        let noise = SMatrix::<f64, 4, 4>::from_diagonal(&SVector::from(params.measurement_noise));
        let p = params.initial_position_variance;
        let v = params.initial_velocity_variance;
        let initial = StateCovariance::from_diagonal(&StateVector::from([p, p, p, p, v, v, v]));
        Self {
            transition,
            observation,
            process,
            noise,
            initial,
        }
    }

    /// Position components from the box, zero velocities.
    pub fn init(&self, det: &Detection) -> KalmanState {
        let z = measurement(&det.bbox);
        let mean = StateVector::from([z[0], z[1], z[2], z[3], 0.0, 0.0, 0.0]);
        KalmanState {
            mean,
            covariance: self.initial,
        }
    }

    pub fn predict(&self, state: &KalmanState) -> KalmanState {
        let mut mean = self.transition * state.mean;
        mean[2] = mean[2].max(MIN_AREA);
        let p = self.transition * state.covariance * self.transition.transpose() + self.process;
        KalmanState {
            mean,
            covariance: symmetrized(&p),
        }
    }

    pub fn update(&self, state: &KalmanState, det: &Detection) -> Result<KalmanState> {
        let h = &self.observation;
        let innovation = measurement(&det.bbox) - h * state.mean;
        let s = h * state.covariance * h.transpose() + self.noise;
        let chol = s.cholesky().ok_or_else(|| {
            Error::Numerical("innovation covariance is not positive definite".into())
        })?;
        // K = P Hᵀ S⁻¹, computed as (S⁻¹ H P)ᵀ since P and S are symmetric
        let gain = chol.solve(&(h * state.covariance)).transpose();
        let mut mean = state.mean + gain * innovation;
        mean[2] = mean[2].max(MIN_AREA);
        mean[3] = mean[3].max(MIN_ASPECT);
        // Joseph form keeps the covariance symmetric positive definite
        let i_kh = StateCovariance::identity() - gain * h;
        let p = i_kh * state.covariance * i_kh.transpose() + gain * self.noise * gain.transpose();
        if !p.iter().all(|v| v.is_finite()) {
            return Err(Error::Numerical("posterior covariance is not finite".into()));
        }
        Ok(KalmanState {
            mean,
            covariance: symmetrized(&p),
        })
    }
}

fn symmetrized(p: &StateCovariance) -> StateCovariance {
    (p + p.transpose()) * 0.5
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::Level;

    fn det(cx: f64, cy: f64) -> Detection {
        Detection::new(0, BBox::new(cx, cy, 30.0, 30.0), 1.0, Level::Builtin)
    }

    #[test]
    fn init_from_box() {
        let kf = KalmanFilter::default();
        let s = kf.init(&det(100.0, 80.0));
        assert_eq!(s.mean.as_slice(), &[100.0, 80.0, 900.0, 1.0, 0.0, 0.0, 0.0]);
        assert!(s.is_positive_definite());
        assert!(s.is_symmetric(0.0));
        assert_eq!(kf.init(&det(100.0, 80.0)), s);
        assert_eq!(s.bbox(), BBox::new(100.0, 80.0, 30.0, 30.0));
    }

    #[test]
    fn predict_moves_by_velocity() {
        let kf = KalmanFilter::default();
        let mut s = kf.init(&det(10.0, 20.0));
        s.mean[4] = 1.0;
        let p = kf.predict(&s);
        assert_eq!(p.center(), (11.0, 20.0));
    }

    #[test]
    fn predict_grows_uncertainty() {
        let kf = KalmanFilter::default();
        let s = kf.init(&det(10.0, 20.0));
        let p = kf.predict(&s);
        assert_eq!(p.center(), s.center());
        assert!(p.covariance.trace() > s.covariance.trace());
    }

    #[test]
    fn repeated_predicts_are_linear() {
        let kf = KalmanFilter::default();
        let mut s = kf.init(&det(0.0, 0.0));
        s.mean[4] = 0.75;
        s.mean[5] = -1.25;
        for _ in 0..12 {
            s = kf.predict(&s);
        }
        assert!((s.mean[0] - 9.0).abs() < 1e-12);
        assert!((s.mean[1] + 15.0).abs() < 1e-12);
    }

    #[test]
    fn area_is_clamped() {
        let kf = KalmanFilter::default();
        let mut s = kf.init(&det(0.0, 0.0));
        s.mean[6] = -5000.0;
        assert_eq!(kf.predict(&s).mean[2], 1.0);
    }

    #[test]
    fn zero_innovation_keeps_mean() {
        let kf = KalmanFilter::default();
        let s = kf.predict(&kf.init(&det(50.0, 60.0)));
        let u = kf.update(&s, &det(50.0, 60.0)).unwrap();
        for i in 0..7 {
            assert!((u.mean[i] - s.mean[i]).abs() < 1e-9);
        }
        assert!(u.covariance.trace() <= s.covariance.trace());
    }

    #[test]
    fn converges_to_fixed_measurement() {
        let kf = KalmanFilter::default();
        let target = det(40.0, -12.0);
        let mut s = kf.init(&det(0.0, 0.0));
        let mut last = f64::INFINITY;
        for _ in 0..50 {
            let prior = s.covariance.trace();
            s = kf.update(&s, &target).unwrap();
            assert!(s.covariance.trace() <= prior + 1e-9);
            let d = (s.mean[0] - 40.0).hypot(s.mean[1] + 12.0);
            assert!(d <= last + 1e-12);
            last = d;
        }
        // without predicts the posterior variance shrinks like 1/n
        assert!(last < 0.1, "{last}");
    }

    #[test]
    fn tracks_constant_velocity() {
        let kf = KalmanFilter::default();
        let pos = |k: usize| (20.0 + 1.5 * k as f64, 30.0 - 0.5 * k as f64);
        let (x, y) = pos(0);
        let mut s = kf.init(&det(x, y));
        for k in 1..=10 {
            s = kf.predict(&s);
            let (x, y) = pos(k);
            s = kf.update(&s, &det(x, y)).unwrap();
        }
        let (x, y) = pos(10);
        assert!((s.mean[0] - x).hypot(s.mean[1] - y) < 0.5);
    }
}
