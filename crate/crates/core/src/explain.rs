//! Spatial activation maps of the attention CNN.
//!
//! Each time step of a trajectory becomes a point at its position carrying
//! the attention weight, one feature-map value, or their product. Maps are
//! rendered as dot plots where dot size encodes the value and dot opacity
//! falls with the number of points sharing a density-grid cell.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::density::DensityGrid;
use crate::error::{Error, Result};
use crate::features::FeatureSeries;
use crate::model::{Cnn, ModelInput, ModelParams};
use crate::svg::{fmt_sig, SvgDocument};

/// Which CNN activation to export.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ActivationKind {
    Attention,
    Feature(usize),
    AttentionTimesFeature(usize),
}

impl fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ActivationKind::Attention => write!(f, "attention"),
            ActivationKind::Feature(c) => write!(f, "feature{c}"),
            ActivationKind::AttentionTimesFeature(c) => write!(f, "a_x_f{c}"),
        }
    }
}

impl FromStr for ActivationKind {
    type Err = Error;

    /// Accepts `attention`, `feature<c>` and `a_x_f<c>`.
    fn from_str(s: &str) -> Result<Self> {
        let channel = |rest: &str| {
            rest.parse::<usize>()
                .map_err(|_| Error::InvalidArgument(format!("bad activation kind `{s}`")))
        };
        if s == "attention" {
            Ok(ActivationKind::Attention)
        } else if let Some(rest) = s.strip_prefix("a_x_f") {
            Ok(ActivationKind::AttentionTimesFeature(channel(rest)?))
        } else if let Some(rest) = s.strip_prefix("feature") {
            Ok(ActivationKind::Feature(channel(rest)?))
        } else {
            Err(Error::InvalidArgument(format!("bad activation kind `{s}`")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActivationPoint {
    pub x: f64,
    pub y: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivationMap {
    pub kind: ActivationKind,
    pub points: Vec<ActivationPoint>,
}

impl ActivationMap {
    /// `x,y,value,channel` rows, values at full precision.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,y,value,channel\n");
        for p in &self.points {
            out.push_str(&format!("{},{},{},{}\n", p.x, p.y, p.value, self.kind));
        }
        out
    }
}

fn cnn_of(params: &ModelParams) -> Result<&Cnn> {
    params
        .cnn
        .as_ref()
        .ok_or_else(|| Error::UnknownKind(format!("{} has no CNN module", params.kind)))
}

/// Evaluates the CNN of `params` on `input` and places the selected
/// activation at the raw positions stored in `features`.
pub fn export_activation_map(
    params: &ModelParams,
    input: &ModelInput,
    features: &FeatureSeries,
    kind: ActivationKind,
) -> Result<ActivationMap> {
    let acts = cnn_of(params)?.activations(&input.series)?;
    if acts.len != features.len() {
        return Err(Error::LengthMismatch {
            expected: features.len(),
            actual: acts.len,
        });
    }
    let values: Vec<f64> = match kind {
        ActivationKind::Attention => acts.attention.clone(),
        ActivationKind::Feature(c) | ActivationKind::AttentionTimesFeature(c) if c >= acts.channels => {
            return Err(Error::ChannelOutOfRange {
                channel: c,
                available: acts.channels,
            })
        }
        ActivationKind::Feature(c) => acts.feature(c).to_vec(),
        ActivationKind::AttentionTimesFeature(c) => acts.feature(c).iter().zip(&acts.attention).map(|(f, a)| a * f).collect(),
    };
    let points = features
        .channel(0)
        .iter()
        .zip(features.channel(1))
        .zip(values)
        .map(|((&x, &y), value)| ActivationPoint { x, y, value })
        .collect();
    Ok(ActivationMap { kind, points })
}

/// Drawing parameters of [`render_svg`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MapStyle {
    /// Canvas width in pixels; the height follows the grid aspect ratio.
    pub width: f64,
    pub r_min: f64,
    pub r_max: f64,
    pub opacity_min: f64,
    pub opacity_max: f64,
    pub fill: String,
    pub background: String,
    pub visited_cell: String,
}

impl Default for MapStyle {
    fn default() -> Self {
        MapStyle {
            width: 600.0,
            r_min: 0.5,
            r_max: 4.0,
            opacity_min: 0.15,
            opacity_max: 1.0,
            fill: "#c0392b".into(),
            background: "#ffffff".into(),
            visited_cell: "#eeeeee".into(),
        }
    }
}

/// Opacity of every point: the reciprocal of its cell's point count,
/// rescaled so the sparsest cell gets `opacity_max` and the densest
/// `opacity_min`.
pub fn point_opacities(map: &ActivationMap, grid: &DensityGrid, style: &MapStyle) -> Vec<f64> {
    let cells: Vec<(usize, usize)> = map.points.iter().map(|p| grid.clamped_cell_of(p.x, p.y)).collect();
    let mut counts = vec![0usize; grid.rows() * grid.cols()];
    for &(r, c) in &cells {
        counts[r * grid.cols() + c] += 1;
    }
    let inverse: Vec<f64> = cells.iter().map(|&(r, c)| 1.0 / counts[r * grid.cols() + c] as f64).collect();
    let lo = inverse.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = inverse.iter().copied().fold(0.0f64, f64::max);
    inverse
        .iter()
        .map(|&v| {
            if hi - lo < 1e-15 {
                style.opacity_max
            } else {
                style.opacity_min + (style.opacity_max - style.opacity_min) * (v - lo) / (hi - lo)
            }
        })
        .collect()
}

/// Dot plot of `map` over the visited cells of `grid`, north up.
pub fn render_svg(map: &ActivationMap, grid: &DensityGrid, style: &MapStyle) -> Result<String> {
    if map.points.is_empty() {
        return Err(Error::EmptyMap);
    }
    let b = grid.bounds;
    let scale = style.width / (b.x_max - b.x_min).max(f64::MIN_POSITIVE);
    let height = (b.y_max - b.y_min) * scale;
    let px = |x: f64| (x - b.x_min) * scale;
    let py = |y: f64| height - (y - b.y_min) * scale;

    let mut doc = SvgDocument::new(style.width, height);
    doc.rect(0.0, 0.0, style.width, height, &style.background);
    let cell = grid.cell_size * scale;
    for r in 0..grid.rows() {
        for c in 0..grid.cols() {
            if *grid.counts.get(r, c) > 0 {
                let x0 = b.x_min + c as f64 * grid.cell_size;
                let y1 = b.y_min + (r + 1) as f64 * grid.cell_size;
                doc.rect(px(x0), py(y1), cell, cell, &style.visited_cell);
            }
        }
    }
    for (p, opacity) in map.points.iter().zip(point_opacities(map, grid, style)) {
        let v = p.value.clamp(0.0, 1.0);
        doc.circle(
            px(p.x),
            py(p.y),
            style.r_min + v * (style.r_max - style.r_min),
            &style.fill,
            opacity,
        );
    }
    doc.text(4.0, 14.0, 12.0, &format!("{} (max {})", map.kind, fmt_sig(max_value(map))));
    Ok(doc.finish())
}

fn max_value(map: &ActivationMap) -> f64 {
    map.points.iter().map(|p| p.value).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::{Bounds, Raster};
    use crate::features::FEATURE_CHANNELS;
    use crate::model::{CompSnnConfig, ModelKind};
    use crate::nn::Tensor;

    fn grid() -> DensityGrid {
        DensityGrid {
            bounds: Bounds {
                x_min: 0.0,
                x_max: 10.0,
                y_min: 0.0,
                y_max: 10.0,
            },
            cell_size: 1.0,
            counts: Raster::filled(10, 10, 1),
        }
    }

    fn setup(n: usize) -> (ModelParams, ModelInput, FeatureSeries) {
        let cfg = CompSnnConfig::new(4, vec![0.2; 8]);
        let params = ModelParams::new(ModelKind::Cnn, cfg, 5).unwrap();
        let channels: [Vec<f64>; FEATURE_CHANNELS] =
            std::array::from_fn(|c| (0..n).map(|t| (c as f64 + 1.0) * 0.1 + t as f64 * 0.5).collect());
        let features = FeatureSeries::from_channels(channels).unwrap();
        let input = ModelInput {
            node_signal: vec![0.0; 32],
            visits: vec![0.0; 4],
            series: Tensor::new(vec![FEATURE_CHANNELS, n], features.values().to_vec()).unwrap(),
        };
        (params, input, features)
    }

    #[test]
    fn one_step_gives_one_point() {
        let (params, input, features) = setup(1);
        let map = export_activation_map(&params, &input, &features, ActivationKind::Attention).unwrap();
        assert_eq!(map.points.len(), 1);
        assert_eq!((map.points[0].x, map.points[0].y), (0.1, 0.2));
    }

    #[test]
    fn values_match_cnn_activations() {
        let (params, input, features) = setup(12);
        let acts = params.cnn.as_ref().unwrap().activations(&input.series).unwrap();
        let att = export_activation_map(&params, &input, &features, ActivationKind::Attention).unwrap();
        let f3 = export_activation_map(&params, &input, &features, ActivationKind::Feature(3)).unwrap();
        let axf = export_activation_map(&params, &input, &features, ActivationKind::AttentionTimesFeature(3)).unwrap();
        for t in 0..12 {
            assert_eq!(att.points[t].value, acts.attention[t]);
            assert_eq!(f3.points[t].value, acts.feature(3)[t]);
            assert_eq!(axf.points[t].value, acts.attention[t] * acts.feature(3)[t]);
        }
    }

    #[test]
    fn closed_gate_zeroes_products() {
        let (mut params, input, features) = setup(7);
        let cnn = params.cnn.as_mut().unwrap();
        cnn.attention.kernel.value.data_mut().iter_mut().for_each(|w| *w = 0.0);
        cnn.attention.bias.value.data_mut()[0] = -1e4;
        let map = export_activation_map(&params, &input, &features, ActivationKind::AttentionTimesFeature(0)).unwrap();
        assert!(map.points.iter().all(|p| p.value == 0.0));
    }

    #[test]
    fn channel_out_of_range() {
        let (params, input, features) = setup(3);
        assert_eq!(
            export_activation_map(&params, &input, &features, ActivationKind::Feature(16)),
            Err(Error::ChannelOutOfRange {
                channel: 16,
                available: 16
            })
        );
        let mlp = ModelParams::new(ModelKind::Mlp, params.config.clone(), 1).unwrap();
        assert!(export_activation_map(&mlp, &input, &features, ActivationKind::Attention).is_err());
    }

    #[test]
    fn kind_round_trip() {
        for k in [
            ActivationKind::Attention,
            ActivationKind::Feature(4),
            ActivationKind::AttentionTimesFeature(11),
        ] {
            assert_eq!(k.to_string().parse::<ActivationKind>().unwrap(), k);
        }
        assert!("feature".parse::<ActivationKind>().is_err());
        assert!("axf3".parse::<ActivationKind>().is_err());
    }

    #[test]
    fn single_full_point_is_largest_dot() {
        let map = ActivationMap {
            kind: ActivationKind::Attention,
            points: vec![ActivationPoint {
                x: 5.0,
                y: 5.0,
                value: 1.0,
            }],
        };
        let svg = render_svg(&map, &grid(), &MapStyle::default()).unwrap();
        assert_eq!(svg.matches("<circle").count(), 1);
        assert!(svg.contains(r##"r="4" fill="#c0392b" fill-opacity="1""##));
    }

    #[test]
    fn opacity_falls_with_crowding() {
        let mut points = vec![
            ActivationPoint {
                x: 0.5,
                y: 0.5,
                value: 0.2
            };
            4
        ];
        points.push(ActivationPoint {
            x: 8.5,
            y: 8.5,
            value: 0.2,
        });
        let map = ActivationMap {
            kind: ActivationKind::Feature(0),
            points,
        };
        let o = point_opacities(&map, &grid(), &MapStyle::default());
        assert_eq!(o[..4], [0.15; 4]);
        assert_eq!(o[4], 1.0);
    }

    #[test]
    fn empty_map_is_rejected() {
        let map = ActivationMap {
            kind: ActivationKind::Attention,
            points: vec![],
        };
        assert_eq!(render_svg(&map, &grid(), &MapStyle::default()), Err(Error::EmptyMap));
    }

    #[test]
    fn csv_twin_has_one_row_per_point() {
        let (params, input, features) = setup(5);
        let map = export_activation_map(&params, &input, &features, ActivationKind::Feature(2)).unwrap();
        let csv = map.to_csv();
        assert_eq!(csv.lines().count(), 6);
        assert!(csv.lines().nth(1).unwrap().ends_with(",feature2"));
    }
}
