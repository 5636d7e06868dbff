//! Stimulus curves: the PDF or CDF of an SGT as drawn on the chart, the
//! ground-truth answers for each task, and the geometric inversions that
//! turn a perceptual error in `y` (or slope) into a position in `x`.

use serde::{Deserialize, Serialize};

use crate::distributions::{Sgt, SgtParams, DISPLAY_X};
use crate::error::{ensure_finite, Error, Result};
use crate::numeric::{brent_root, expand_bracket, golden_max};
use crate::perceptual_space::ViewingContext;

pub const DEFAULT_GRID_POINTS: usize = 512;

const ROOT_XTOL: f64 = 1e-13;
const ROOT_MAX_ITER: usize = 300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurveKind {
    Pdf,
    Cdf,
}

/// Which flank of a unimodal curve an inversion should land on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub x: f64,
    pub y: f64,
}

/// An SGT curve sampled over the display range.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "RawCurve")]
pub struct StimulusCurve {
    sgt: SgtParams,
    kind: CurveKind,
    grid: Vec<GridPoint>,
    #[serde(skip)]
    dist: Option<Sgt>,
}

#[derive(Deserialize)]
struct RawCurve {
    sgt: SgtParams,
    kind: CurveKind,
    grid: Vec<GridPoint>,
}

impl TryFrom<RawCurve> for StimulusCurve {
    type Error = Error;
    fn try_from(r: RawCurve) -> Result<Self> {
        validate_grid(&r.grid, r.kind)?;
        Ok(Self {
            dist: Some(Sgt::new(r.sgt)?),
            sgt: r.sgt,
            kind: r.kind,
            grid: r.grid,
        })
    }
}

fn validate_grid(grid: &[GridPoint], kind: CurveKind) -> Result<()> {
    if grid.len() < 2 {
        return Err(Error::schema("grid", "needs at least two points"));
    }
    for (i, w) in grid.windows(2).enumerate() {
        if !(w[1].x > w[0].x) {
            return Err(Error::schema(
                format!("grid[{}].x", i + 1),
                "x values must be strictly increasing",
            ));
        }
    }
    for (i, pt) in grid.iter().enumerate() {
        if !(pt.x.is_finite() && pt.y.is_finite()) {
            return Err(Error::schema(format!("grid[{i}]"), "non-finite coordinate"));
        }
        match kind {
            CurveKind::Pdf if pt.y < 0.0 => {
                return Err(Error::schema(format!("grid[{i}].y"), "density below zero"));
            }
            CurveKind::Cdf if !(0.0..=1.0).contains(&pt.y) => {
                return Err(Error::schema(format!("grid[{i}].y"), "CDF outside [0, 1]"));
            }
            _ => {}
        }
    }
    if kind == CurveKind::Cdf {
        if let Some(i) = grid.windows(2).position(|w| w[1].y < w[0].y) {
            return Err(Error::schema(format!("grid[{}].y", i + 1), "CDF decreases"));
        }
    }
    Ok(())
}

/// Ground-truth answers for a stimulus under a viewing context.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthValues {
    pub mode_x: f64,
    pub peak_y: f64,
    pub median_x: f64,
    /// Steepest slope of the CDF, measured in visual-angle space.
    pub max_slope_value: f64,
    pub max_slope_x: f64,
}

impl StimulusCurve {
    pub fn new(sgt: SgtParams, kind: CurveKind) -> Result<Self> {
        Self::with_grid(sgt, kind, DEFAULT_GRID_POINTS, DISPLAY_X)
    }

    pub fn with_grid(sgt: SgtParams, kind: CurveKind, points: usize, x_range: (f64, f64)) -> Result<Self> {
        if points < 2 || !(x_range.1 > x_range.0) {
            return Err(Error::invalid("grid needs two points and a non-empty range"));
        }
        let dist = Sgt::new(sgt)?;
        let step = (x_range.1 - x_range.0) / (points - 1) as f64;
        let grid = (0..points)
            .map(|i| {
                let x = x_range.0 + step * i as f64;
                let y = match kind {
                    CurveKind::Pdf => dist.pdf(x),
                    CurveKind::Cdf => dist.cdf(x),
                };
                GridPoint { x, y }
            })
            .collect();
        Ok(Self {
            sgt,
            kind,
            grid,
            dist: Some(dist),
        })
    }

    /// The same SGT drawn as the other curve kind, on the same grid.
    pub fn as_kind(&self, kind: CurveKind) -> Result<Self> {
        let (lo, hi) = self.x_range();
        Self::with_grid(self.sgt, kind, self.grid.len(), (lo, hi))
    }

    pub fn sgt_params(&self) -> &SgtParams {
        &self.sgt
    }

    pub fn sgt(&self) -> &Sgt {
        self.dist.as_ref().expect("constructed curves carry their distribution")
    }

    pub fn kind(&self) -> CurveKind {
        self.kind
    }

    pub fn grid(&self) -> &[GridPoint] {
        &self.grid
    }

    pub fn x_range(&self) -> (f64, f64) {
        (self.grid[0].x, self.grid[self.grid.len() - 1].x)
    }

    /// Analytic height of the curve at `x`.
    pub fn y_at(&self, x: f64) -> f64 {
        match self.kind {
            CurveKind::Pdf => self.sgt().pdf(x),
            CurveKind::Cdf => self.sgt().cdf(x),
        }
    }

    /// Slope of the CDF at `x` expressed in visual-angle space.
    pub fn va_slope(&self, x: f64, ctx: &ViewingContext) -> Result<f64> {
        let sgt = self.sgt();
        ctx.slope_to_va(sgt.pdf(x), x, sgt.cdf(x))
    }

    /// Location and value of the steepest visual-angle slope of the CDF.
    ///
    /// A grid scan picks the best cell; golden-section search refines it.
    pub fn max_slope(&self, ctx: &ViewingContext) -> Result<(f64, f64)> {
        let slope = |x: f64| self.va_slope(x, ctx).unwrap_or(f64::NEG_INFINITY);
        let best = self
            .grid
            .iter()
            .enumerate()
            .map(|(i, pt)| (i, slope(pt.x)))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(i, _)| i)
            .expect("grid has points");
        let lo = self.grid[best.saturating_sub(1)].x;
        let hi = self.grid[(best + 1).min(self.grid.len() - 1)].x;
        let x = golden_max(slope, lo, hi, 1e-12);
        let value = self.va_slope(x, ctx)?;
        Ok((x, value))
    }

    pub fn ground_truth(&self, ctx: &ViewingContext) -> Result<TruthValues> {
        let sgt = self.sgt();
        let (max_slope_x, max_slope_value) = self.max_slope(ctx)?;
        Ok(TruthValues {
            mode_x: self.sgt.mu,
            peak_y: sgt.peak(),
            median_x: sgt.try_quantile(0.5)?,
            max_slope_value,
            max_slope_x,
        })
    }

    /// Position on the requested flank of the density where it equals `y_target`.
    pub fn preimage_from_y(&self, y_target: f64, side: Side) -> Result<f64> {
        ensure_finite("preimage_from_y", &[y_target])?;
        let sgt = self.sgt();
        let mode = self.sgt.mu;
        let peak = sgt.peak();
        if y_target > peak {
            return Err(Error::domain(format!(
                "target height {y_target} exceeds the peak {peak}"
            )));
        }
        if y_target <= 0.0 {
            return Err(Error::domain("the density never reaches zero at a finite x"));
        }
        if y_target == peak {
            return Ok(mode);
        }
        let g = |x: f64| sgt.pdf(x) - y_target;
        let dir = match side {
            Side::Left => -1.0,
            Side::Right => 1.0,
        };
        let edge = expand_bracket(g, mode, mode + dir * self.sgt.sigma, 2000)?;
        let (lo, hi) = if edge < mode { (edge, mode) } else { (mode, edge) };
        brent_root(g, lo, hi, ROOT_XTOL, ROOT_MAX_ITER)
    }

    /// Position on the requested flank of the CDF whose visual-angle slope
    /// equals `slope_target`.
    pub fn preimage_from_slope(&self, slope_target: f64, side: Side, ctx: &ViewingContext) -> Result<f64> {
        self.slope_profile(ctx)?.preimage(slope_target, side)
    }

    /// Caches the slope maximum so repeated inversions skip the search.
    pub fn slope_profile<'a>(&'a self, ctx: &'a ViewingContext) -> Result<SlopeProfile<'a>> {
        let (max_x, max_value) = self.max_slope(ctx)?;
        Ok(SlopeProfile {
            curve: self,
            ctx,
            max_x,
            max_value,
        })
    }
}

/// A CDF curve's visual-angle slope, with its maximum located.
#[derive(Debug, Clone, Copy)]
pub struct SlopeProfile<'a> {
    curve: &'a StimulusCurve,
    ctx: &'a ViewingContext,
    pub max_x: f64,
    pub max_value: f64,
}

impl SlopeProfile<'_> {
    pub fn slope_at(&self, x: f64) -> Result<f64> {
        self.curve.va_slope(x, self.ctx)
    }

    pub fn preimage(&self, slope_target: f64, side: Side) -> Result<f64> {
        ensure_finite("preimage_from_slope", &[slope_target])?;
        if slope_target <= 0.0 {
            return Err(Error::domain("slope target must be positive"));
        }
        if slope_target > self.max_value * (1.0 + 1e-12) {
            return Err(Error::domain(format!(
                "slope target {slope_target} exceeds the maximum {}",
                self.max_value
            )));
        }
        if slope_target >= self.max_value {
            return Ok(self.max_x);
        }
        let g = |x: f64| self.curve.va_slope(x, self.ctx).unwrap_or(0.0) - slope_target;
        let dir = match side {
            Side::Left => -1.0,
            Side::Right => 1.0,
        };
        let sigma = self.curve.sgt_params().sigma;
        let edge = expand_bracket(g, self.max_x, self.max_x + dir * sigma, 2000)?;
        let (lo, hi) = if edge < self.max_x {
            (edge, self.max_x)
        } else {
            (self.max_x, edge)
        };
        brent_root(g, lo, hi, ROOT_XTOL, ROOT_MAX_ITER)
    }
}
