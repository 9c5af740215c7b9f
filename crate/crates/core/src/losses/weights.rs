use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Neighbor weights in the displacement regularizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DispWeighting {
    /// Inverse edge length, normalized per vertex.
    #[default]
    InverseEdge,
    /// 1/|N(v)|: plain Laplacian smoothing of the displacements.
    Uniform,
}

/// Whether the Chamfer terms are weighted by target curvature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ChamferMode {
    #[default]
    Weighted,
    /// All curvature weights equal to 1.
    Classical,
}

/// Arctan schedule parameters.
///
/// `delay(t) = 0.5 + atan((t - delay_center) / delay_divisor) / pi` and
/// `seg_edge(t) = 0.5 - atan((t - seg_edge_center) / seg_edge_divisor) / pi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleParams {
    pub delay_center: f64,
    pub delay_divisor: f64,
    pub seg_edge_center: f64,
    pub seg_edge_divisor: f64,
    /// Hold the segmentation weight at its base value.
    pub constant_seg: bool,
    /// Hold the edge weight at its base value.
    pub constant_edge: bool,
}

impl Default for ScheduleParams {
    fn default() -> Self {
        Self {
            delay_center: 3000.0,
            delay_divisor: 1.0,
            seg_edge_center: 10000.0,
            seg_edge_divisor: 1000.0,
            constant_seg: false,
            constant_edge: false,
        }
    }
}

/// Delay weight with the default parameters.
pub fn schedule_delay(t: u64) -> f64 {
    ScheduleParams::default().delay(t)
}

/// Segmentation / edge weight with the default parameters.
pub fn schedule_seg_edge(t: u64) -> f64 {
    ScheduleParams::default().seg_edge(t)
}

impl ScheduleParams {
    pub fn delay(&self, t: u64) -> f64 {
        0.5 + ((t as f64 - self.delay_center) / self.delay_divisor).atan() / std::f64::consts::PI
    }

    pub fn seg_edge(&self, t: u64) -> f64 {
        0.5 - ((t as f64 - self.seg_edge_center) / self.seg_edge_divisor).atan() / std::f64::consts::PI
    }

    pub fn validate(&self) -> Result<()> {
        let ok = [self.delay_center, self.seg_edge_center].iter().all(|v| v.is_finite())
            && [self.delay_divisor, self.seg_edge_divisor].iter().all(|v| v.is_finite() && *v > 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("bad schedule parameters {self:?}")))
        }
    }
}

/// Coefficients of the composed loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights<T> {
    pub chamfer: T,
    pub norm_inter: T,
    pub norm_intra: T,
    pub edge_base: T,
    pub disp: T,
    pub seg_base: T,
    pub kappa_max: T,
    pub disp_weighting: DispWeighting,
    pub chamfer_curvature: ChamferMode,
    pub schedule: ScheduleParams,
}

impl<T: Real> Default for LossWeights<T> {
    fn default() -> Self {
        Self {
            chamfer: T::one(),
            norm_inter: T::of(0.1),
            norm_intra: T::of(0.1),
            edge_base: T::one(),
            disp: T::of(0.5),
            seg_base: T::one(),
            kappa_max: T::of(5.0),
            disp_weighting: DispWeighting::InverseEdge,
            chamfer_curvature: ChamferMode::Weighted,
            schedule: ScheduleParams::default(),
        }
    }
}

/// Multipliers in effect at one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepWeights<T> {
    /// Full multiplier of the segmentation term.
    pub seg: T,
    /// Delay factor applied to every mesh term.
    pub delay: T,
    pub chamfer: T,
    pub norm_inter: T,
    pub norm_intra: T,
    /// Edge coefficient inside the delayed group (base times schedule).
    pub edge: T,
    pub disp: T,
}

impl<T: Real> LossWeights<T> {
    /// All coefficients zero.
    pub fn zeros() -> Self {
        Self {
            chamfer: T::zero(),
            norm_inter: T::zero(),
            norm_intra: T::zero(),
            edge_base: T::zero(),
            disp: T::zero(),
            seg_base: T::zero(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let named = [
            ("chamfer", self.chamfer),
            ("norm_inter", self.norm_inter),
            ("norm_intra", self.norm_intra),
            ("edge_base", self.edge_base),
            ("disp", self.disp),
            ("seg_base", self.seg_base),
        ];
        for (name, v) in named {
            if !v.is_finite() || v < T::zero() {
                return Err(Error::InvalidParameter(format!("weight {name} = {v} must be finite and >= 0")));
            }
        }
        if !self.kappa_max.is_finite() || self.kappa_max < T::one() {
            return Err(Error::InvalidParameter(format!("kappa_max = {} must be >= 1", self.kappa_max)));
        }
        self.schedule.validate()
    }

    /// Multipliers at step `t`; `None` disables the schedules (every
    /// scheduled factor is 1).
    pub fn at(&self, t: Option<u64>) -> StepWeights<T> {
        let (delay, seg_s, edge_s) = match t {
            None => (1.0, 1.0, 1.0),
            Some(t) => {
                let s = self.schedule.seg_edge(t);
                (
                    self.schedule.delay(t),
                    if self.schedule.constant_seg { 1.0 } else { s },
                    if self.schedule.constant_edge { 1.0 } else { s },
                )
            }
        };
        StepWeights {
            seg: self.seg_base * T::of(seg_s),
            delay: T::of(delay),
            chamfer: self.chamfer,
            norm_inter: self.norm_inter,
            norm_intra: self.norm_intra,
            edge: self.edge_base * T::of(edge_s),
            disp: self.disp,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn schedule_anchors() {
        assert_eq!(schedule_delay(3000), 0.5);
        assert_eq!(schedule_seg_edge(10000), 0.5);
        assert!((schedule_delay(3001) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn weights_at_step() {
        let w = LossWeights::<f64>::default();
        let s = w.at(Some(10000));
        assert_eq!(s.seg, 0.5);
        assert_eq!(s.edge, 0.5);
        assert!(s.delay > 0.99);
        let u = w.at(None);
        assert_eq!((u.seg, u.delay, u.edge), (1.0, 1.0, 1.0));
        let c = LossWeights::<f64> {
            schedule: ScheduleParams { constant_edge: true, ..Default::default() },
            ..Default::default()
        };
        assert_eq!(c.at(Some(50_000)).edge, 1.0);
        assert!(c.at(Some(50_000)).seg < 0.01);
    }

    #[test]
    fn validation() {
        assert!(LossWeights::<f64>::default().validate().is_ok());
        assert!(LossWeights::<f64> { disp: -1.0, ..Default::default() }.validate().is_err());
        assert!(LossWeights::<f64> { kappa_max: 0.5, ..Default::default() }.validate().is_err());
        assert!(LossWeights::<f64> { chamfer: f64::NAN, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn json_rejects_unknown() {
        let w: LossWeights<f64> = serde_json::from_str(r#"{"chamfer": 2.0}"#).unwrap();
        assert_eq!(w.chamfer, 2.0);
        assert_eq!(w.norm_inter, 0.1);
        assert!(serde_json::from_str::<LossWeights<f64>>(r#"{"chamfr": 2.0}"#).is_err());
    }

    proptest! {
        #[test]
        fn schedules_bounded_and_monotone(t in 0u64..5_000_000, dt in 0u64..100_000) {
            let (d0, d1) = (schedule_delay(t), schedule_delay(t + dt));
            let (s0, s1) = (schedule_seg_edge(t), schedule_seg_edge(t + dt));
            prop_assert!(d0 > 0.0 && d0 < 1.0 && s0 > 0.0 && s0 < 1.0);
            prop_assert!(d1 >= d0);
            prop_assert!(s1 <= s0);
        }
    }
}
