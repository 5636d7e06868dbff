//! Conversions between data, pixel, physical, and visual-angle space.
//!
//! A value on an axis is converted by taking its displacement from the axis
//! origin (`data_min`), scaling it to pixels and then centimetres, and
//! finally to the angle that extent subtends at the viewer's eye:
//!
//! ```text
//! va = 2 · atan(size_cm / (2 · distance_cm)) · 180/π
//! ```
//!
//! Signs are carried through: the angle of a negative displacement is the
//! negated angle of its magnitude.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

/// Default viewing distance used for replication runs.
pub const DEFAULT_DISTANCE_CM: f64 = 50.0;
/// Pixel density of a 96 dpi display.
pub const DEFAULT_PX_PER_CM: f64 = 37.8;

const DEG_PER_RAD: f64 = 180.0 / std::f64::consts::PI;

/// Angle (degrees) subtended by a physical extent centred on the line of sight.
pub fn to_visual_angle(physical_cm: f64, distance_cm: f64) -> Result<f64> {
    ensure_finite("to_visual_angle", &[physical_cm, distance_cm])?;
    if physical_cm < 0.0 {
        return Err(Error::domain(format!(
            "physical size must be non-negative, got {physical_cm}"
        )));
    }
    if distance_cm <= 0.0 {
        return Err(Error::domain("viewing distance must be positive"));
    }
    Ok(2.0 * (physical_cm / (2.0 * distance_cm)).atan() * DEG_PER_RAD)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
}

/// Linear map from an axis' data range onto its pixel length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawAxis")]
pub struct AxisMapping {
    pub data_min: f64,
    pub data_max: f64,
    pub length_px: f64,
}

#[derive(Deserialize)]
struct RawAxis {
    data_min: f64,
    data_max: f64,
    length_px: f64,
}

impl TryFrom<RawAxis> for AxisMapping {
    type Error = Error;
    fn try_from(r: RawAxis) -> Result<Self> {
        AxisMapping::new(r.data_min, r.data_max, r.length_px)
    }
}

impl AxisMapping {
    pub fn new(data_min: f64, data_max: f64, length_px: f64) -> Result<Self> {
        ensure_finite("axis mapping", &[data_min, data_max, length_px])?;
        if data_max <= data_min {
            return Err(Error::schema(
                "data_max",
                format!("must exceed data_min ({data_max} <= {data_min})"),
            ));
        }
        if length_px <= 0.0 {
            return Err(Error::schema("length_px", "must be positive"));
        }
        Ok(Self {
            data_min,
            data_max,
            length_px,
        })
    }

    pub fn span(&self) -> f64 {
        self.data_max - self.data_min
    }

    pub fn px_per_unit(&self) -> f64 {
        self.length_px / self.span()
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.data_min + self.data_max)
    }
}

/// Raised when a conversion extrapolates beyond the axis' data range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangeWarning {
    pub axis: Axis,
    pub displacement: f64,
    pub span: f64,
}

/// Screen geometry and axis mappings for one participant and chart.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawContext")]
pub struct ViewingContext {
    pub distance_cm: f64,
    pub px_per_cm: f64,
    pub x_axis: AxisMapping,
    pub y_axis: AxisMapping,
}

#[derive(Deserialize)]
struct RawContext {
    distance_cm: f64,
    px_per_cm: f64,
    x_axis: AxisMapping,
    y_axis: AxisMapping,
}

impl TryFrom<RawContext> for ViewingContext {
    type Error = Error;
    fn try_from(r: RawContext) -> Result<Self> {
        ViewingContext::new(r.distance_cm, r.px_per_cm, r.x_axis, r.y_axis)
    }
}

impl ViewingContext {
    pub fn new(
        distance_cm: f64,
        px_per_cm: f64,
        x_axis: AxisMapping,
        y_axis: AxisMapping,
    ) -> Result<Self> {
        ensure_finite("viewing context", &[distance_cm, px_per_cm])?;
        if distance_cm <= 0.0 {
            return Err(Error::schema("distance_cm", "must be positive"));
        }
        if px_per_cm <= 0.0 {
            return Err(Error::schema("px_per_cm", "must be positive"));
        }
        Ok(Self {
            distance_cm,
            px_per_cm,
            x_axis,
            y_axis,
        })
    }

    /// The 600×450 px curve chart, x ∈ [−5, 5], y ∈ [0, 1].
    pub fn curve_chart(distance_cm: f64, px_per_cm: f64) -> Result<Self> {
        Self::new(
            distance_cm,
            px_per_cm,
            AxisMapping::new(-5.0, 5.0, 600.0)?,
            AxisMapping::new(0.0, 1.0, 450.0)?,
        )
    }

    /// The 500×200 px scatterplot used for mean estimation.
    pub fn scatter_chart(
        distance_cm: f64,
        px_per_cm: f64,
        x_range: (f64, f64),
        y_range: (f64, f64),
    ) -> Result<Self> {
        Self::new(
            distance_cm,
            px_per_cm,
            AxisMapping::new(x_range.0, x_range.1, 500.0)?,
            AxisMapping::new(y_range.0, y_range.1, 200.0)?,
        )
    }

    pub fn axis(&self, axis: Axis) -> &AxisMapping {
        match axis {
            Axis::X => &self.x_axis,
            Axis::Y => &self.y_axis,
        }
    }

    /// Centimetres on screen per data unit along `axis`.
    pub fn cm_per_unit(&self, axis: Axis) -> f64 {
        self.axis(axis).px_per_unit() / self.px_per_cm
    }

    /// Signed visual angle of a data-space displacement.
    pub fn data_to_va(&self, displacement: f64, axis: Axis) -> Result<f64> {
        ensure_finite("data_to_va", &[displacement])?;
        let cm = displacement.abs() * self.cm_per_unit(axis);
        Ok(to_visual_angle(cm, self.distance_cm)?.copysign(displacement))
    }

    /// Like [`data_to_va`](Self::data_to_va) but reports extrapolation past
    /// the axis span.
    pub fn data_to_va_flagged(
        &self,
        displacement: f64,
        axis: Axis,
    ) -> Result<(f64, Option<RangeWarning>)> {
        let angle = self.data_to_va(displacement, axis)?;
        let span = self.axis(axis).span();
        let warning = (displacement.abs() > span).then_some(RangeWarning {
            axis,
            displacement,
            span,
        });
        Ok((angle, warning))
    }

    /// Inverse of [`data_to_va`](Self::data_to_va).
    pub fn va_to_data(&self, angle_deg: f64, axis: Axis) -> Result<f64> {
        ensure_finite("va_to_data", &[angle_deg])?;
        if angle_deg.abs() >= 180.0 {
            return Err(Error::domain(format!(
                "visual angle must lie in (-180, 180), got {angle_deg}"
            )));
        }
        let cm = 2.0 * self.distance_cm * (angle_deg.abs() / (2.0 * DEG_PER_RAD)).tan();
        Ok((cm / self.cm_per_unit(axis)).copysign(angle_deg))
    }

    /// Visual angle of an axis value, measured from the axis origin.
    pub fn value_to_va(&self, value: f64, axis: Axis) -> Result<f64> {
        self.data_to_va(value - self.axis(axis).data_min, axis)
    }

    /// Axis value whose displacement from the origin subtends `angle_deg`.
    pub fn va_to_value(&self, angle_deg: f64, axis: Axis) -> Result<f64> {
        Ok(self.va_to_data(angle_deg, axis)? + self.axis(axis).data_min)
    }

    /// Derivative of the visual angle with respect to data displacement,
    /// in degrees per data unit.
    pub fn va_rate(&self, displacement: f64, axis: Axis) -> f64 {
        let c = self.cm_per_unit(axis) / (2.0 * self.distance_cm);
        let u = c * displacement;
        2.0 * DEG_PER_RAD * c / (1.0 + u * u)
    }

    /// Slope of a curve expressed in visual-angle space at `(x, y)`.
    ///
    /// Returns `d va_y / d va_x` for a curve whose data-space slope at the
    /// point is `slope`.
    pub fn slope_to_va(&self, slope: f64, x: f64, y: f64) -> Result<f64> {
        ensure_finite("slope_to_va", &[slope, x, y])?;
        let rate_y = self.va_rate(y - self.y_axis.data_min, Axis::Y);
        let rate_x = self.va_rate(x - self.x_axis.data_min, Axis::X);
        Ok(slope * rate_y / rate_x)
    }
}
