//! Operators whose x-axis response is derived from an error in another
//! quantity through the geometry of the stimulus curve.

use std::sync::OnceLock;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::{ResponseDistribution, Support};
use crate::curves::{CurveKind, Side, SlopeProfile, StimulusCurve};
use crate::distributions::{open_unit, UnivariateDistribution, Weibull, WeibullErrorParams};
use crate::error::{Error, Result};
use crate::perceptual_space::{Axis, ViewingContext};

/// How a response picks between the two flanks that share a height (or slope).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SideRule {
    /// Each flank is chosen with probability proportional to the inverse of
    /// its local steepness.
    #[default]
    InverseSlope,
    /// Both flanks equally likely.
    Even,
}

impl SideRule {
    /// Probability of the left flank given each flank's absolute steepness.
    pub fn left_probability(self, left_steepness: f64, right_steepness: f64) -> f64 {
        match self {
            SideRule::Even => 0.5,
            SideRule::InverseSlope => {
                let total = left_steepness + right_steepness;
                if total > 0.0 && total.is_finite() {
                    right_steepness / total
                } else {
                    0.5
                }
            }
        }
    }

    fn pick(self, left_steepness: f64, right_steepness: f64, rng: &mut dyn RngCore) -> Side {
        if open_unit(rng) < self.left_probability(left_steepness, right_steepness) {
            Side::Left
        } else {
            Side::Right
        }
    }
}

const CDF_TABLE_CELLS: usize = 2048;

/// Perceived x position of a density's peak.
///
/// A Weibull error lowers the perceived peak height in visual angle; the
/// response is the point on one flank at that height. Heights below the
/// curve's value at a display edge resolve to that edge, so a (typically
/// negligible) probability mass sits on each edge.
#[derive(Debug)]
pub struct HighestPointX {
    curve: StimulusCurve,
    ctx: ViewingContext,
    error: Weibull,
    side_rule: SideRule,
    /// Visual angle of the peak height.
    theta: f64,
    mode: f64,
    edges: (f64, f64),
    edge_heights: (f64, f64),
    /// `G[j] = P(left flank, uniform error rank > j / CELLS)`.
    cdf_table: OnceLock<Vec<f64>>,
}

pub fn highest_point_x(
    curve: &StimulusCurve,
    ctx: &ViewingContext,
    params: &WeibullErrorParams,
    side_rule: SideRule,
) -> Result<HighestPointX> {
    if curve.kind() != CurveKind::Pdf {
        return Err(Error::invalid("highest_point_x needs a PDF curve"));
    }
    let sgt = curve.sgt();
    let edges = curve.x_range();
    Ok(HighestPointX {
        theta: ctx.value_to_va(sgt.peak(), Axis::Y)?,
        mode: curve.sgt_params().mu,
        edge_heights: (sgt.pdf(edges.0), sgt.pdf(edges.1)),
        edges,
        curve: curve.clone(),
        ctx: *ctx,
        error: Weibull::new(*params),
        side_rule,
        cdf_table: OnceLock::new(),
    })
}

impl HighestPointX {
    pub fn side_rule(&self) -> SideRule {
        self.side_rule
    }

    /// Perceived height for a given error draw (in visual angle).
    fn height(&self, eps: f64) -> f64 {
        if eps <= 0.0 {
            return self.curve.sgt().peak();
        }
        let angle = (self.theta - eps).max(0.0);
        self.ctx
            .va_to_value(angle, Axis::Y)
            .unwrap_or(self.ctx.y_axis.data_min)
    }

    fn flank(&self, y: f64, side: Side) -> f64 {
        let (edge, edge_height) = match side {
            Side::Left => (self.edges.0, self.edge_heights.0),
            Side::Right => (self.edges.1, self.edge_heights.1),
        };
        if y <= edge_height {
            return edge;
        }
        self.curve.preimage_from_y(y, side).unwrap_or(self.mode)
    }

    fn flanks(&self, y: f64) -> (f64, f64) {
        (self.flank(y, Side::Left), self.flank(y, Side::Right))
    }

    fn steepness(&self, x: f64) -> f64 {
        self.curve.sgt().pdf_derivative(x).abs()
    }

    fn left_probability(&self, y: f64) -> f64 {
        if self.side_rule == SideRule::Even {
            return 0.5;
        }
        let (l, r) = self.flanks(y);
        self.side_rule
            .left_probability(self.steepness(l), self.steepness(r))
    }

    /// A draw together with the Weibull error that produced it.
    pub fn sample_with_error(&self, rng: &mut dyn RngCore) -> (f64, f64) {
        let eps = self.error.sample(rng);
        let y = self.height(eps);
        let (l, r) = self.flanks(y);
        let side = self
            .side_rule
            .pick(self.steepness(l), self.steepness(r), rng);
        let x = match side {
            Side::Left => l,
            Side::Right => r,
        };
        (x, eps)
    }

    /// Probability mass placed on the left and right display edges.
    pub fn edge_masses(&self) -> (f64, f64) {
        let mass = |edge_height: f64, p_side: f64| {
            let angle = self.ctx.value_to_va(edge_height, Axis::Y).unwrap_or(0.0);
            self.error.survival(self.theta - angle) * p_side
        };
        let (l, r) = self.edge_heights;
        (
            mass(l, self.left_probability(l)),
            mass(r, 1.0 - self.left_probability(r)),
        )
    }

    fn table(&self) -> &[f64] {
        self.cdf_table.get_or_init(|| {
            let h = 1.0 / CDF_TABLE_CELLS as f64;
            let mut g = vec![0.0; CDF_TABLE_CELLS + 1];
            for j in (0..CDF_TABLE_CELLS).rev() {
                let eps = self.error.quantile((j as f64 + 0.5) * h);
                g[j] = g[j + 1] + h * self.left_probability(self.height(eps));
            }
            g
        })
    }

    /// Error rank `F_W(eps)` at which the response height equals the curve at `x`.
    fn rank_at(&self, x: f64) -> f64 {
        let y = self.curve.sgt().pdf(x);
        let angle = self.ctx.value_to_va(y, Axis::Y).unwrap_or(0.0);
        self.error.cdf(self.theta - angle)
    }

    fn left_tail(&self, u: f64) -> f64 {
        let g = self.table();
        let pos = (u * CDF_TABLE_CELLS as f64).clamp(0.0, CDF_TABLE_CELLS as f64);
        let j = (pos.floor() as usize).min(CDF_TABLE_CELLS - 1);
        let t = pos - j as f64;
        g[j] + t * (g[j + 1] - g[j])
    }
}

impl ResponseDistribution for HighestPointX {
    fn sample(&self, rng: &mut dyn RngCore) -> f64 {
        self.sample_with_error(rng).0
    }

    /// Density of the continuous part on the open display interval.
    fn log_density(&self, x: f64) -> f64 {
        if !(x > self.edges.0 && x < self.edges.1) {
            return f64::NEG_INFINITY;
        }
        let sgt = self.curve.sgt();
        let y = sgt.pdf(x);
        let Ok(angle) = self.ctx.value_to_va(y, Axis::Y) else {
            return f64::NEG_INFINITY;
        };
        let eps = (self.theta - angle).max(0.0);
        let own = self.steepness(x);
        let p_side = if self.side_rule == SideRule::Even {
            0.5
        } else if x < self.mode {
            let other = self.steepness(self.flank(y, Side::Right));
            self.side_rule.left_probability(own, other)
        } else {
            let other = self.steepness(self.flank(y, Side::Left));
            1.0 - self.side_rule.left_probability(other, own)
        };
        let rate = self.ctx.va_rate(y - self.ctx.y_axis.data_min, Axis::Y);
        let ln = p_side.ln() + self.error.ln_pdf(eps) + rate.ln() + own.ln();
        if ln.is_nan() {
            f64::NEG_INFINITY
        } else {
            ln
        }
    }

    fn support(&self) -> Support {
        Support::Interval {
            lower: self.edges.0,
            upper: self.edges.1,
        }
    }

    /// Tabulated on first use.
    fn cdf(&self, x: f64) -> Option<f64> {
        Some(if x < self.edges.0 {
            0.0
        } else if x >= self.edges.1 {
            1.0
        } else if x <= self.mode {
            self.left_tail(self.rank_at(x))
        } else {
            let u = self.rank_at(x);
            1.0 - ((1.0 - u) - self.left_tail(u))
        })
    }
}

/// Position on the CDF curve reconstructed from a perceived slope.
///
/// Slopes shallower than the curve's slope at a display edge resolve to that
/// edge; the flank is chosen by `side_rule` from the steepness of the slope
/// profile at the two candidate points.
pub fn max_slope_position(
    slope: f64,
    profile: &SlopeProfile<'_>,
    x_range: (f64, f64),
    side_rule: SideRule,
    rng: &mut dyn RngCore,
) -> Result<f64> {
    if slope >= profile.max_value {
        return Ok(profile.max_x);
    }
    let flank = |edge: f64, side: Side| -> Result<f64> {
        if slope <= profile.slope_at(edge)? {
            Ok(edge)
        } else {
            profile.preimage(slope, side)
        }
    };
    let l = flank(x_range.0, Side::Left)?;
    let r = flank(x_range.1, Side::Right)?;
    let steepness = |x: f64| -> f64 {
        let h = 1e-5;
        let up = profile.slope_at(x + h).unwrap_or(0.0);
        let down = profile.slope_at(x - h).unwrap_or(0.0);
        ((up - down) / (2.0 * h)).abs()
    };
    Ok(match side_rule.pick(steepness(l), steepness(r), rng) {
        Side::Left => l,
        Side::Right => r,
    })
}
