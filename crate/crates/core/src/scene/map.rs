use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::{Point2, Pose2};

/// The seven static map layers, in raster channel order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MapLayer {
    DrivingPaths,
    Crosswalks,
    LaneBoundaries,
    RoadBoundaries,
    Intersections,
    Driveways,
    ParkingLots,
}

impl MapLayer {
    pub const ALL: [MapLayer; 7] = [
        MapLayer::DrivingPaths,
        MapLayer::Crosswalks,
        MapLayer::LaneBoundaries,
        MapLayer::RoadBoundaries,
        MapLayer::Intersections,
        MapLayer::Driveways,
        MapLayer::ParkingLots,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            MapLayer::DrivingPaths => "driving_paths",
            MapLayer::Crosswalks => "crosswalks",
            MapLayer::LaneBoundaries => "lane_boundaries",
            MapLayer::RoadBoundaries => "road_boundaries",
            MapLayer::Intersections => "intersections",
            MapLayer::Driveways => "driveways",
            MapLayer::ParkingLots => "parking_lots",
        }
    }
}

impl fmt::Display for MapLayer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MapLayer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MapLayer::ALL
            .into_iter()
            .find(|l| l.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown map layer `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MapElement {
    /// Closed simple ring.
    Polygon(Vec<Point2>),
    /// Open line, rasterized with a buffer.
    Polyline(Vec<Point2>),
}

impl MapElement {
    pub fn points(&self) -> &[Point2] {
        match self {
            MapElement::Polygon(p) | MapElement::Polyline(p) => p,
        }
    }

    fn map_points(&self, f: impl Fn(Point2) -> Point2) -> MapElement {
        match self {
            MapElement::Polygon(p) => MapElement::Polygon(p.iter().copied().map(f).collect()),
            MapElement::Polyline(p) => MapElement::Polyline(p.iter().copied().map(f).collect()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MapGeometry {
    layers: [Vec<MapElement>; 7],
}

impl MapGeometry {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn layer(&self, layer: MapLayer) -> &[MapElement] {
        &self.layers[layer.index()]
    }

    pub fn push(&mut self, layer: MapLayer, element: MapElement) {
        self.layers[layer.index()].push(element);
    }

    pub fn layers(&self) -> impl Iterator<Item = (MapLayer, &[MapElement])> {
        MapLayer::ALL.into_iter().map(move |l| (l, self.layer(l)))
    }

    pub fn is_empty(&self) -> bool {
        self.layers.iter().all(Vec::is_empty)
    }

    pub fn transformed(&self, pose: &Pose2) -> MapGeometry {
        MapGeometry {
            layers: self
                .layers
                .clone()
                .map(|elems| elems.iter().map(|e| e.map_points(|p| pose.apply2(p))).collect()),
        }
    }
}

fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> MapElement {
    MapElement::Polygon(vec![
        Point2::new(x0, y0),
        Point2::new(x1, y0),
        Point2::new(x1, y1),
        Point2::new(x0, y1),
    ])
}

fn line(x0: f64, y0: f64, x1: f64, y1: f64) -> MapElement {
    MapElement::Polyline(vec![Point2::new(x0, y0), Point2::new(x1, y1)])
}

/// A straight two-way road along world x with one crossing street, crosswalks
/// around the intersection, a few driveways and a parking lot.
pub(crate) fn generate_map<R: Rng>(rng: &mut R, x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> MapGeometry {
    const HALF_ROAD: f64 = 7.0;
    const LANE: f64 = 3.5;
    let mut map = MapGeometry::empty();

    let span = x_max - x_min;
    let ix = x_min + span * rng.gen_range(0.3..0.7);
    let (ix0, ix1) = (ix - HALF_ROAD, ix + HALF_ROAD);

    for (a, b) in [(x_min, ix0), (ix1, x_max)] {
        for y in [-HALF_ROAD, HALF_ROAD] {
            map.push(MapLayer::RoadBoundaries, line(a, y, b, y));
        }
        for y in [-LANE, 0.0, LANE] {
            map.push(MapLayer::LaneBoundaries, line(a, y, b, y));
        }
    }
    // cross street boundaries
    for (a, b) in [(y_min, -HALF_ROAD), (HALF_ROAD, y_max)] {
        for x in [ix0, ix1] {
            map.push(MapLayer::RoadBoundaries, line(x, a, x, b));
        }
        map.push(MapLayer::LaneBoundaries, line(ix, a, ix, b));
    }
    for y in [-1.5 * LANE, -0.5 * LANE, 0.5 * LANE, 1.5 * LANE] {
        map.push(MapLayer::DrivingPaths, line(x_min, y, x_max, y));
    }
    for x in [ix - 0.5 * LANE, ix + 0.5 * LANE] {
        map.push(MapLayer::DrivingPaths, line(x, y_min, x, y_max));
    }
    map.push(MapLayer::Intersections, rect(ix0, -HALF_ROAD, ix1, HALF_ROAD));
    map.push(MapLayer::Crosswalks, rect(ix0 - 4.0, -HALF_ROAD, ix0, HALF_ROAD));
    map.push(MapLayer::Crosswalks, rect(ix1, -HALF_ROAD, ix1 + 4.0, HALF_ROAD));
    map.push(MapLayer::Crosswalks, rect(ix0, HALF_ROAD, ix1, HALF_ROAD + 4.0));
    map.push(MapLayer::Crosswalks, rect(ix0, -HALF_ROAD - 4.0, ix1, -HALF_ROAD));

    let n_drive = rng.gen_range(1..=3);
    for _ in 0..n_drive {
        let x = rng.gen_range(x_min..(x_max - 4.0));
        if (x - ix).abs() < HALF_ROAD + 8.0 {
            continue;
        }
        let side = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let (ya, yb) = (side * HALF_ROAD, side * (HALF_ROAD + 6.0));
        map.push(MapLayer::Driveways, rect(x, ya.min(yb), x + 4.0, ya.max(yb)));
    }
    let px = rng.gen_range(x_min..(x_max - 20.0).max(x_min + 1.0));
    let side = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    let (ya, yb) = (side * (HALF_ROAD + 6.0), side * (HALF_ROAD + 21.0));
    map.push(MapLayer::ParkingLots, rect(px, ya.min(yb), px + 20.0, ya.max(yb)));
    map
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::polygon_is_simple;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn generated_polygons_are_simple() {
        for seed in 0..50 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let map = generate_map(&mut rng, -60.0, 90.0, -50.0, 50.0);
            for (_, elems) in map.layers() {
                for e in elems {
                    if let MapElement::Polygon(p) = e {
                        assert!(polygon_is_simple(p));
                    }
                }
            }
            assert!(!map.layer(MapLayer::Intersections).is_empty());
        }
    }

    #[test]
    fn layer_names_roundtrip() {
        for l in MapLayer::ALL {
            assert_eq!(l.name().parse::<MapLayer>().unwrap(), l);
        }
        assert_eq!(MapLayer::ALL.len(), 7);
    }
}
