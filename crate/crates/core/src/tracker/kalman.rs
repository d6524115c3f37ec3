//! Constant-velocity Kalman filter over (cx, cy, aspect, height).
//!
//! Process and measurement noise are proportional to the box height with the
//! usual SORT/ByteTrack weights (position 1/20, velocity 1/160); aspect ratio
//! gets fixed small noise. A new track starts with an effectively
//! uninformative velocity prior, so after two measurements the velocity
//! estimate equals the observed displacement instead of being shrunk
//! towards zero.

use nalgebra::{SMatrix, SVector};

use crate::error::{Error, Result};
use crate::geometry::{BoundingBox, CenterForm};

pub type StateVector = SVector<f64, 8>;
pub type StateCovariance = SMatrix<f64, 8, 8>;
type MeasVector = SVector<f64, 4>;
type MeasMatrix = SMatrix<f64, 4, 8>;

const STD_WEIGHT_POSITION: f64 = 1.0 / 20.0;
const STD_WEIGHT_VELOCITY: f64 = 1.0 / 160.0;
const INIT_STD_WEIGHT_VELOCITY: f64 = 1000.0;

#[derive(Debug, Clone, PartialEq)]
pub struct KalmanState {
    pub mean: StateVector,
    pub covariance: StateCovariance,
}

impl KalmanState {
    pub fn measurement(&self) -> CenterForm {
        CenterForm {
            cx: self.mean[0],
            cy: self.mean[1],
            aspect: self.mean[2],
            height: self.mean[3],
        }
    }

    pub fn velocity(&self) -> [f64; 4] {
        [self.mean[4], self.mean[5], self.mean[6], self.mean[7]]
    }

    /// Box of the current estimate, if it is still a valid box inside the
    /// non-negative quadrant.
    pub fn to_box(&self) -> Option<BoundingBox> {
        self.measurement().to_box().ok()
    }

    /// Box of the current estimate with coordinates clamped to be
    /// non-negative; used for association when a prediction drifts off-frame.
    pub fn to_clamped_box(&self) -> Option<BoundingBox> {
        let m = self.measurement();
        if !(m.height > 0.0 && m.aspect > 0.0) || !m.cx.is_finite() || !m.cy.is_finite() {
            return None;
        }
        let w = m.aspect * m.height;
        BoundingBox::new(
            (m.cx - w / 2.0).max(0.0),
            (m.cy - m.height / 2.0).max(0.0),
            (m.cx + w / 2.0).max(0.0),
            (m.cy + m.height / 2.0).max(0.0),
        )
        .ok()
    }
}

fn transition() -> StateCovariance {
    let mut f = StateCovariance::identity();
    for i in 0..4 {
        f[(i, i + 4)] = 1.0;
    }
    f
}

fn observation() -> MeasMatrix {
    let mut h = MeasMatrix::zeros();
    for i in 0..4 {
        h[(i, i)] = 1.0;
    }
    h
}

fn symmetrize(p: &mut StateCovariance) {
    let t = p.transpose();
    *p = (*p + t) * 0.5;
}

/// New track state at `m` with zero velocity.
pub fn kf_initiate(m: &CenterForm) -> KalmanState {
    let mut mean = StateVector::zeros();
    mean[0] = m.cx;
    mean[1] = m.cy;
    mean[2] = m.aspect;
    mean[3] = m.height;
    let h = m.height;
    let std = [
        2.0 * STD_WEIGHT_POSITION * h,
        2.0 * STD_WEIGHT_POSITION * h,
        1e-2,
        2.0 * STD_WEIGHT_POSITION * h,
        INIT_STD_WEIGHT_VELOCITY * h,
        INIT_STD_WEIGHT_VELOCITY * h,
        1e-5,
        INIT_STD_WEIGHT_VELOCITY * h,
    ];
    let covariance = StateCovariance::from_diagonal(&StateVector::from_iterator(std.iter().map(|s| s * s)));
    KalmanState { mean, covariance }
}

/// One-frame constant-velocity prediction.
pub fn kf_predict(s: &KalmanState) -> KalmanState {
    let h = s.mean[3];
    let std = [
        STD_WEIGHT_POSITION * h,
        STD_WEIGHT_POSITION * h,
        1e-2,
        STD_WEIGHT_POSITION * h,
        STD_WEIGHT_VELOCITY * h,
        STD_WEIGHT_VELOCITY * h,
        1e-5,
        STD_WEIGHT_VELOCITY * h,
    ];
    let q = StateCovariance::from_diagonal(&StateVector::from_iterator(std.iter().map(|s| s * s)));
    let f = transition();
    let mean = f * s.mean;
    let mut covariance = f * s.covariance * f.transpose() + q;
    symmetrize(&mut covariance);
    KalmanState { mean, covariance }
}

fn measurement_noise(h: f64) -> SMatrix<f64, 4, 4> {
    let std = [STD_WEIGHT_POSITION * h, STD_WEIGHT_POSITION * h, 1e-1, STD_WEIGHT_POSITION * h];
    SMatrix::<f64, 4, 4>::from_diagonal(&MeasVector::from_iterator(std.iter().map(|s| s * s)))
}

/// Projects the state into measurement space: (mean, innovation covariance).
pub fn kf_project(s: &KalmanState) -> (MeasVector, SMatrix<f64, 4, 4>) {
    let h = observation();
    let mean = h * s.mean;
    let cov = h * s.covariance * h.transpose() + measurement_noise(s.mean[3]);
    (mean, cov)
}

/// Kalman correction with measurement `z`.
pub fn kf_update(s: &KalmanState, z: &CenterForm) -> Result<KalmanState> {
    let (projected_mean, projected_cov) = kf_project(s);
    let h = observation();
    let chol = projected_cov
        .cholesky()
        .ok_or_else(|| Error::NumericInstability("innovation covariance not positive definite".into()))?;
    // K = P Hᵀ S⁻¹, solved as S Kᵀ = H P
    let pht = s.covariance * h.transpose();
    let gain = chol.solve(&pht.transpose()).transpose();
    let innovation = MeasVector::new(z.cx, z.cy, z.aspect, z.height) - projected_mean;
    let mean = s.mean + gain * innovation;
    let mut covariance = s.covariance - gain * projected_cov * gain.transpose();
    symmetrize(&mut covariance);
    if mean.iter().chain(covariance.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NumericInstability("non-finite state after update".into()));
    }
    Ok(KalmanState { mean, covariance })
}
