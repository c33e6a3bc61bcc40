//! Procedural high-contrast permeability rasters: a background value with
//! disc inclusions and straight or meandering channels.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::PermeabilityField;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
}

/// A disc of value `background · contrast`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Inclusion {
    pub center: [f64; 2],
    pub radius: f64,
    pub contrast: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Meander {
    pub amplitude: f64,
    pub wavelength: f64,
}

/// A band of value `background · contrast` running along `axis`, centred on
/// `position` in the other coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Channel {
    pub axis: Axis,
    pub position: f64,
    pub width: f64,
    pub contrast: f64,
    #[serde(default)]
    pub meander: Option<Meander>,
}

/// Features are painted in order, inclusions first, so later entries win
/// where they overlap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticLayout {
    pub background: f64,
    #[serde(default)]
    pub inclusions: Vec<Inclusion>,
    #[serde(default)]
    pub channels: Vec<Channel>,
}

impl Default for SyntheticLayout {
    /// Two channels and three inclusions at contrast 10³.
    fn default() -> Self {
        Self {
            background: 1.0,
            inclusions: vec![
                Inclusion { center: [0.3, 0.3], radius: 0.08, contrast: 1e3 },
                Inclusion { center: [0.72, 0.28], radius: 0.06, contrast: 1e3 },
                Inclusion { center: [0.6, 0.75], radius: 0.07, contrast: 1e3 },
            ],
            channels: vec![
                Channel {
                    axis: Axis::X,
                    position: 0.52,
                    width: 0.06,
                    contrast: 1e3,
                    meander: Some(Meander { amplitude: 0.08, wavelength: 0.5 }),
                },
                Channel {
                    axis: Axis::Y,
                    position: 0.18,
                    width: 0.05,
                    contrast: 1e3,
                    meander: None,
                },
            ],
        }
    }
}

impl SyntheticLayout {
    fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !ok(self.background) {
            return Err(Error::Config(format!("background permeability {} must be positive", self.background)));
        }
        for inc in &self.inclusions {
            if !ok(inc.contrast) || !ok(inc.radius) {
                return Err(Error::Config(format!("invalid inclusion {inc:?}")));
            }
        }
        for ch in &self.channels {
            let bad_meander = ch.meander.is_some_and(|m| !m.amplitude.is_finite() || !ok(m.wavelength));
            if !ok(ch.contrast) || !ok(ch.width) || bad_meander {
                return Err(Error::Config(format!("invalid channel {ch:?}")));
            }
        }
        Ok(())
    }

    fn value_at(&self, x: f64, y: f64) -> f64 {
        let mut v = self.background;
        for inc in &self.inclusions {
            let (dx, dy) = (x - inc.center[0], y - inc.center[1]);
            if dx * dx + dy * dy <= inc.radius * inc.radius {
                v = self.background * inc.contrast;
            }
        }
        for ch in &self.channels {
            let (along, across) = match ch.axis {
                Axis::X => (x, y),
                Axis::Y => (y, x),
            };
            let centre = ch.position
                + ch.meander
                    .map_or(0.0, |m| m.amplitude * (2.0 * PI * along / m.wavelength).sin());
            if (across - centre).abs() <= 0.5 * ch.width {
                v = self.background * ch.contrast;
            }
        }
        v
    }
}

/// Samples `layout` at the centres of an `nx × ny` cell raster on the unit
/// square.
pub fn synthetic_permeability(layout: &SyntheticLayout, nx: usize, ny: usize) -> Result<PermeabilityField> {
    layout.validate()?;
    let mut values = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let x = (i as f64 + 0.5) / nx as f64;
            let y = (j as f64 + 0.5) / ny as f64;
            values.push(layout.value_at(x, y));
        }
    }
    PermeabilityField::new(nx, ny, values)
}
