//! Planar hexagonal tessellation.
//!
//! Cells are flat-topped hexagons addressed by axial coordinates `(q, r)`
//! in a local equirectangular projection. The grid covers a projected
//! bounding box; ties on shared edges and vertices resolve to the smallest
//! [`CellId`].

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};

pub const EARTH_RADIUS_M: f64 = 6_371_008.8;

/// Default hexagon edge, matching the level-7 average edge of 1.41 km.
pub const DEFAULT_EDGE_M: f64 = 1410.0;

/// Number of vertices in the polygonal disk approximation.
pub const DISK_SEGMENTS: usize = 64;

/// Containment slack in meters for points on cell boundaries.
const BOUNDARY_EPS_M: f64 = 1e-6;

const SQRT3: f64 = 1.732_050_807_568_877_2;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectedPoint {
    pub x: f64,
    pub y: f64,
}

impl ProjectedPoint {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &ProjectedPoint) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Equirectangular projection about a fixed region centroid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub origin_lat: f64,
    pub origin_lon: f64,
}

impl Projection {
    pub fn new(origin_lat: f64, origin_lon: f64) -> Result<Self> {
        if !(origin_lat.is_finite() && origin_lon.is_finite()) || origin_lat.abs() >= 90.0 {
            return Err(Error::InvalidInput(format!(
                "projection origin ({origin_lat}, {origin_lon}) is not a valid latitude/longitude"
            )));
        }
        Ok(Self { origin_lat, origin_lon })
    }

    fn cos_lat(&self) -> f64 {
        self.origin_lat.to_radians().cos()
    }

    pub fn project(&self, lat: f64, lon: f64) -> ProjectedPoint {
        let x = EARTH_RADIUS_M * (lon - self.origin_lon).to_radians() * self.cos_lat();
        let y = EARTH_RADIUS_M * (lat - self.origin_lat).to_radians();
        ProjectedPoint { x, y }
    }

    /// Inverse of [`Projection::project`]; returns `(lat, lon)`.
    pub fn unproject(&self, p: ProjectedPoint) -> (f64, f64) {
        let lat = self.origin_lat + (p.y / EARTH_RADIUS_M).to_degrees();
        let lon = self.origin_lon + (p.x / (EARTH_RADIUS_M * self.cos_lat())).to_degrees();
        (lat, lon)
    }
}

/// Axis-aligned rectangle in projected meters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl BBox {
    pub fn new(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Result<Self> {
        let all_finite = [min_x, min_y, max_x, max_y].iter().all(|v| v.is_finite());
        if !all_finite || max_x <= min_x || max_y <= min_y {
            return Err(Error::InvalidInput(format!(
                "degenerate bounding box [{min_x}, {max_x}] x [{min_y}, {max_y}]"
            )));
        }
        Ok(Self { min_x, min_y, max_x, max_y })
    }

    /// Smallest box containing every point, grown by `pad` meters on each side.
    pub fn enclosing<'a, I>(points: I, pad: f64) -> Result<Self>
    where
        I: IntoIterator<Item = &'a ProjectedPoint>,
    {
        let mut min_x = f64::INFINITY;
        let mut min_y = f64::INFINITY;
        let mut max_x = f64::NEG_INFINITY;
        let mut max_y = f64::NEG_INFINITY;
        for p in points {
            min_x = min_x.min(p.x);
            min_y = min_y.min(p.y);
            max_x = max_x.max(p.x);
            max_y = max_y.max(p.y);
        }
        Self::new(min_x - pad, min_y - pad, max_x + pad, max_y + pad)
    }

    pub fn width(&self) -> f64 {
        self.max_x - self.min_x
    }

    pub fn height(&self) -> f64 {
        self.max_y - self.min_y
    }

    pub fn center(&self) -> ProjectedPoint {
        ProjectedPoint::new(0.5 * (self.min_x + self.max_x), 0.5 * (self.min_y + self.max_y))
    }

    pub fn contains(&self, p: &ProjectedPoint) -> bool {
        p.x >= self.min_x && p.x <= self.max_x && p.y >= self.min_y && p.y <= self.max_y
    }

    pub fn corners(&self) -> [ProjectedPoint; 4] {
        [
            ProjectedPoint::new(self.min_x, self.min_y),
            ProjectedPoint::new(self.max_x, self.min_y),
            ProjectedPoint::new(self.max_x, self.max_y),
            ProjectedPoint::new(self.min_x, self.max_y),
        ]
    }
}

/// Axial cell address. Ordered lexicographically by `(q, r)`, which is the
/// canonical order used for tie-breaking.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellId {
    pub q: i32,
    pub r: i32,
}

impl CellId {
    pub const fn new(q: i32, r: i32) -> Self {
        Self { q, r }
    }

    pub fn neighbors(&self) -> [CellId; 6] {
        const DIRS: [(i32, i32); 6] = [(1, 0), (1, -1), (0, -1), (-1, 0), (-1, 1), (0, 1)];
        DIRS.map(|(dq, dr)| CellId::new(self.q + dq, self.r + dr))
    }
}

impl fmt::Display for CellId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.q, self.r)
    }
}

impl FromStr for CellId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidInput(format!("malformed cell id {s:?}"));
        let (q, r) = s.trim().split_once(':').ok_or_else(bad)?;
        Ok(CellId::new(q.parse().map_err(|_| bad())?, r.parse().map_err(|_| bad())?))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HexCell {
    pub id: CellId,
    pub center: ProjectedPoint,
    /// Counter-clockwise, starting at the eastern vertex.
    pub polygon: [ProjectedPoint; 6],
    pub area: f64,
}

impl HexCell {
    fn new(id: CellId, origin: ProjectedPoint, edge_len: f64) -> Self {
        let center = axial_to_point(id, origin, edge_len);
        let polygon = hexagon_vertices(center, edge_len);
        Self {
            id,
            center,
            polygon,
            area: 1.5 * SQRT3 * edge_len * edge_len,
        }
    }

    /// Closed containment with a small boundary slack.
    pub fn contains(&self, p: &ProjectedPoint) -> bool {
        convex_contains(&self.polygon, p, BOUNDARY_EPS_M)
    }
}

/// Identifies a grid for consistency checks between derived structures.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridSignature {
    edge_bits: u64,
    origin_x_bits: u64,
    origin_y_bits: u64,
    cells: usize,
    cells_digest: u64,
}

#[derive(Clone, Debug)]
pub struct HexGrid {
    edge_len: f64,
    origin: ProjectedPoint,
    bbox: BBox,
    cells: Vec<HexCell>,
    index: HashMap<CellId, usize>,
}

/// Builds the set of cells whose hexagon overlaps `bbox` with positive area.
/// The grid origin (center of cell `0:0`) is the bbox center.
pub fn build_grid(bbox: BBox, edge_len: f64) -> Result<HexGrid> {
    if !(edge_len.is_finite() && edge_len > 0.0) {
        return Err(Error::InvalidInput(format!("edge length must be positive, got {edge_len}")));
    }
    // Re-validate in case the caller built the box by hand.
    let bbox = BBox::new(bbox.min_x, bbox.min_y, bbox.max_x, bbox.max_y)?;
    let origin = bbox.center();
    let rect = bbox.corners();
    let min_area = 1e-9 * edge_len * edge_len;

    let mut cells = Vec::new();
    for id in axial_range(origin, edge_len, bbox.min_x, bbox.min_y, bbox.max_x, bbox.max_y) {
        let cell = HexCell::new(id, origin, edge_len);
        let clipped = clip_convex(&cell.polygon, &rect);
        if polygon_area(&clipped) > min_area {
            cells.push(cell);
        }
    }
    cells.sort_by_key(|c| c.id);
    let index = cells.iter().enumerate().map(|(i, c)| (c.id, i)).collect();
    Ok(HexGrid { edge_len, origin, bbox, cells, index })
}

/// Even-odd point-in-polygon test.
pub fn point_in_polygon(poly: &[ProjectedPoint], p: &ProjectedPoint) -> bool {
    let mut inside = false;
    let mut j = poly.len().wrapping_sub(1);
    for i in 0..poly.len() {
        let (a, b) = (poly[i], poly[j]);
        if (a.y > p.y) != (b.y > p.y) && p.x < (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x {
            inside = !inside;
        }
        j = i;
    }
    inside
}

/// Grid over an irregular study region: the cells of the enclosing box
/// whose centers fall inside `region`.
pub fn build_grid_in_region(region: &[ProjectedPoint], edge_len: f64) -> Result<HexGrid> {
    if region.len() < 3 {
        return Err(Error::InvalidInput("region needs at least three vertices".into()));
    }
    let mut grid = build_grid(BBox::enclosing(region, 0.0)?, edge_len)?;
    grid.cells.retain(|c| point_in_polygon(region, &c.center));
    if grid.cells.is_empty() {
        return Err(Error::EmptyInput("region contains no cell centers".into()));
    }
    grid.index = grid.cells.iter().enumerate().map(|(i, c)| (c.id, i)).collect();
    Ok(grid)
}

impl HexGrid {
    pub fn edge_len(&self) -> f64 {
        self.edge_len
    }

    pub fn origin(&self) -> ProjectedPoint {
        self.origin
    }

    pub fn bbox(&self) -> BBox {
        self.bbox
    }

    /// Cells sorted by canonical id.
    pub fn cells(&self) -> &[HexCell] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cell(&self, index: usize) -> &HexCell {
        &self.cells[index]
    }

    pub fn index_of(&self, id: CellId) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn signature(&self) -> GridSignature {
        GridSignature {
            edge_bits: self.edge_len.to_bits(),
            origin_x_bits: self.origin.x.to_bits(),
            origin_y_bits: self.origin.y.to_bits(),
            cells: self.cells.len(),
            cells_digest: self.cells.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, c| {
                let v = ((c.id.q as u32 as u64) << 32) | c.id.r as u32 as u64;
                (h ^ v).wrapping_mul(0x0000_0100_0000_01b3)
            }),
        }
    }

    /// Returns the id of the cell containing `p`.
    pub fn locate(&self, p: &ProjectedPoint) -> Result<CellId> {
        self.locate_index(p).map(|i| self.cells[i].id)
    }

    /// Like [`HexGrid::locate`] but returns the position in [`HexGrid::cells`].
    pub fn locate_index(&self, p: &ProjectedPoint) -> Result<usize> {
        if !p.is_finite() || !self.bbox.contains(p) {
            return Err(Error::OutOfBounds { x: p.x, y: p.y });
        }
        let guess = point_to_axial(*p, self.origin, self.edge_len);
        std::iter::once(guess)
            .chain(guess.neighbors())
            .filter_map(|id| self.index_of(id))
            .filter(|&i| self.cells[i].contains(p))
            .min_by_key(|&i| self.cells[i].id)
            .ok_or(Error::OutOfBounds { x: p.x, y: p.y })
    }

    /// Indices of grid cells that may intersect the disk, in canonical order.
    pub fn cells_near(&self, center: &ProjectedPoint, radius: f64) -> Vec<usize> {
        let reach = radius + self.edge_len;
        axial_range(
            self.origin,
            self.edge_len,
            center.x - radius,
            center.y - radius,
            center.x + radius,
            center.y + radius,
        )
        .filter_map(|id| self.index_of(id))
        .filter(|&i| self.cells[i].center.distance(center) <= reach)
        .collect()
    }

    /// GeoJSON `FeatureCollection` of cell polygons in WGS84 coordinates.
    pub fn to_geojson(&self, projection: &Projection) -> serde_json::Value {
        let features: Vec<_> = self
            .cells
            .iter()
            .map(|cell| {
                let mut ring: Vec<[f64; 2]> = cell
                    .polygon
                    .iter()
                    .map(|v| {
                        let (lat, lon) = projection.unproject(*v);
                        [lon, lat]
                    })
                    .collect();
                ring.push(ring[0]);
                json!({
                    "type": "Feature",
                    "properties": {
                        "cell_id": cell.id.to_string(),
                        "q": cell.id.q,
                        "r": cell.id.r,
                    },
                    "geometry": { "type": "Polygon", "coordinates": [ring] },
                })
            })
            .collect();
        json!({ "type": "FeatureCollection", "features": features })
    }
}

fn axial_to_point(id: CellId, origin: ProjectedPoint, edge: f64) -> ProjectedPoint {
    let q = f64::from(id.q);
    let r = f64::from(id.r);
    ProjectedPoint::new(origin.x + 1.5 * edge * q, origin.y + SQRT3 * edge * (r + 0.5 * q))
}

fn point_to_axial(p: ProjectedPoint, origin: ProjectedPoint, edge: f64) -> CellId {
    let dx = p.x - origin.x;
    let dy = p.y - origin.y;
    let qf = (2.0 / 3.0) * dx / edge;
    let rf = (-dx / 3.0 + dy / SQRT3) / edge;
    cube_round(qf, rf)
}

fn cube_round(qf: f64, rf: f64) -> CellId {
    let sf = -qf - rf;
    let mut q = qf.round();
    let mut r = rf.round();
    let s = sf.round();
    let dq = (q - qf).abs();
    let dr = (r - rf).abs();
    let ds = (s - sf).abs();
    if dq > dr && dq > ds {
        q = -r - s;
    } else if dr > ds {
        r = -q - s;
    }
    CellId::new(q as i32, r as i32)
}

/// Axial ids whose hexagon could touch the given rectangle, in canonical order.
fn axial_range(
    origin: ProjectedPoint,
    edge: f64,
    min_x: f64,
    min_y: f64,
    max_x: f64,
    max_y: f64,
) -> impl Iterator<Item = CellId> {
    let col = 1.5 * edge;
    let row = SQRT3 * edge;
    let q_lo = ((min_x - origin.x - edge) / col).floor() as i32;
    let q_hi = ((max_x - origin.x + edge) / col).ceil() as i32;
    (q_lo..=q_hi).flat_map(move |q| {
        let half_q = 0.5 * f64::from(q);
        let r_lo = ((min_y - origin.y - edge) / row - half_q).floor() as i32;
        let r_hi = ((max_y - origin.y + edge) / row - half_q).ceil() as i32;
        (r_lo..=r_hi).map(move |r| CellId::new(q, r))
    })
}

fn hexagon_vertices(center: ProjectedPoint, edge: f64) -> [ProjectedPoint; 6] {
    let half = 0.5 * edge;
    let h = 0.5 * SQRT3 * edge;
    [
        ProjectedPoint::new(center.x + edge, center.y),
        ProjectedPoint::new(center.x + half, center.y + h),
        ProjectedPoint::new(center.x - half, center.y + h),
        ProjectedPoint::new(center.x - edge, center.y),
        ProjectedPoint::new(center.x - half, center.y - h),
        ProjectedPoint::new(center.x + half, center.y - h),
    ]
}

fn cross(a: &ProjectedPoint, b: &ProjectedPoint, p: &ProjectedPoint) -> f64 {
    (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x)
}

fn convex_contains(polygon: &[ProjectedPoint], p: &ProjectedPoint, eps: f64) -> bool {
    let n = polygon.len();
    (0..n).all(|i| {
        let a = &polygon[i];
        let b = &polygon[(i + 1) % n];
        cross(a, b, p) >= -eps * a.distance(b)
    })
}

/// Shoelace area; positive for counter-clockwise rings.
pub fn polygon_area(polygon: &[ProjectedPoint]) -> f64 {
    let n = polygon.len();
    if n < 3 {
        return 0.0;
    }
    let twice: f64 = (0..n)
        .map(|i| {
            let a = polygon[i];
            let b = polygon[(i + 1) % n];
            a.x * b.y - b.x * a.y
        })
        .sum();
    0.5 * twice
}

/// Sutherland-Hodgman clip of `subject` against a counter-clockwise convex `clip`.
pub fn clip_convex(subject: &[ProjectedPoint], clip: &[ProjectedPoint]) -> Vec<ProjectedPoint> {
    let mut output = subject.to_vec();
    let n = clip.len();
    for i in 0..n {
        if output.len() < 3 {
            return Vec::new();
        }
        let a = clip[i];
        let b = clip[(i + 1) % n];
        let input = std::mem::take(&mut output);
        let m = input.len();
        for j in 0..m {
            let s = input[j];
            let e = input[(j + 1) % m];
            let sc = cross(&a, &b, &s);
            let ec = cross(&a, &b, &e);
            let s_in = sc >= 0.0;
            let e_in = ec >= 0.0;
            if s_in != e_in {
                let t = sc / (sc - ec);
                output.push(ProjectedPoint::new(s.x + (e.x - s.x) * t, s.y + (e.y - s.y) * t));
            }
            if e_in {
                output.push(e);
            }
        }
    }
    if output.len() < 3 {
        Vec::new()
    } else {
        output
    }
}

/// Regular [`DISK_SEGMENTS`]-gon inscribed in the circle, counter-clockwise.
pub fn disk_polygon(center: &ProjectedPoint, radius: f64) -> Vec<ProjectedPoint> {
    (0..DISK_SEGMENTS)
        .map(|k| {
            let theta = std::f64::consts::TAU * k as f64 / DISK_SEGMENTS as f64;
            ProjectedPoint::new(center.x + radius * theta.cos(), center.y + radius * theta.sin())
        })
        .collect()
}

/// Area of the polygonal disk approximation.
pub fn disk_area(radius: f64) -> f64 {
    let n = DISK_SEGMENTS as f64;
    0.5 * n * radius * radius * (std::f64::consts::TAU / n).sin()
}

/// Area of `cell` intersected with the polygonal disk approximation.
pub fn overlap_area(cell: &HexCell, center: &ProjectedPoint, radius: f64) -> Result<f64> {
    if !(radius.is_finite() && radius > 0.0) {
        return Err(Error::InvalidInput(format!("disk radius must be positive, got {radius}")));
    }
    if !center.is_finite() {
        return Err(Error::InvalidInput("disk center is not finite".into()));
    }
    let circumradius = cell.center.distance(&cell.polygon[0]);
    if cell.center.distance(center) >= radius + circumradius {
        return Ok(0.0);
    }
    let clipped = clip_convex(&disk_polygon(center, radius), &cell.polygon);
    Ok(polygon_area(&clipped).clamp(0.0, cell.area))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ten_km_grid() -> HexGrid {
        build_grid(BBox::new(0.0, 0.0, 10_000.0, 10_000.0).unwrap(), 1410.0).unwrap()
    }

    /// Independent even-odd ray-casting test.
    fn ray_cast_inside(poly: &[ProjectedPoint], p: &ProjectedPoint) -> bool {
        let mut inside = false;
        let n = poly.len();
        let mut j = n - 1;
        for i in 0..n {
            let (a, b) = (poly[i], poly[j]);
            if (a.y > p.y) != (b.y > p.y) && p.x < (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x {
                inside = !inside;
            }
            j = i;
        }
        inside
    }

    #[test]
    fn cells_have_regular_geometry() {
        let grid = ten_km_grid();
        for cell in grid.cells() {
            for i in 0..6 {
                let len = cell.polygon[i].distance(&cell.polygon[(i + 1) % 6]);
                assert!((len - 1410.0).abs() <= 1e-6, "edge {len}");
            }
            let expected = 1.5 * 3f64.sqrt() * 1410.0 * 1410.0;
            assert!((cell.area - expected).abs() <= 1e-6 * expected);
            assert!((polygon_area(&cell.polygon) - expected).abs() <= 1e-6 * expected);
        }
    }

    #[test]
    fn single_hexagon_bbox_yields_few_cells() {
        let e = 1410.0;
        let h = 0.5 * 3f64.sqrt() * e;
        let grid = build_grid(BBox::new(-e, -h, e, h).unwrap(), e).unwrap();
        assert!((1..=9).contains(&grid.len()), "{} cells", grid.len());
        assert!(grid.index_of(CellId::new(0, 0)).is_some());
    }

    #[test]
    fn degenerate_bbox_is_rejected() {
        assert!(matches!(BBox::new(0.0, 0.0, 0.0, 10.0), Err(Error::InvalidInput(_))));
        assert!(matches!(BBox::new(0.0, 5.0, 10.0, 5.0), Err(Error::InvalidInput(_))));
        let b = BBox { min_x: 0.0, min_y: 0.0, max_x: 0.0, max_y: 0.0 };
        assert!(matches!(build_grid(b, 1410.0), Err(Error::InvalidInput(_))));
        let ok = BBox::new(0.0, 0.0, 1.0, 1.0).unwrap();
        assert!(matches!(build_grid(ok, 0.0), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn bbox_corners_lie_in_exactly_one_cell() {
        let grid = ten_km_grid();
        for corner in grid.bbox().corners() {
            let hits: Vec<_> =
                grid.cells().iter().filter(|c| ray_cast_inside(&c.polygon, &corner)).collect();
            assert_eq!(hits.len(), 1, "corner {corner:?}");
            assert_eq!(grid.locate(&corner).unwrap(), hits[0].id);
        }
    }

    #[test]
    fn locate_center_returns_cell() {
        let grid = ten_km_grid();
        for cell in grid.cells() {
            if grid.bbox().contains(&cell.center) {
                assert_eq!(grid.locate(&cell.center).unwrap(), cell.id);
            }
        }
    }

    #[test]
    fn shared_edge_midpoint_resolves_to_smaller_id() {
        let grid = ten_km_grid();
        let a = grid.cell(grid.index_of(CellId::new(0, 0)).unwrap());
        for nb in a.id.neighbors() {
            let Some(bi) = grid.index_of(nb) else { continue };
            let b = grid.cell(bi);
            // The shared edge midpoint is halfway between the two centers.
            let mid = ProjectedPoint::new(
                0.5 * (a.center.x + b.center.x),
                0.5 * (a.center.y + b.center.y),
            );
            assert_eq!(grid.locate(&mid).unwrap(), a.id.min(b.id));
        }
    }

    #[test]
    fn locate_matches_exhaustive_scan() {
        let grid = ten_km_grid();
        let b = grid.bbox();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10_000 {
            let p = ProjectedPoint::new(
                rng.random_range(b.min_x..=b.max_x),
                rng.random_range(b.min_y..=b.max_y),
            );
            let scan: Vec<CellId> = grid
                .cells()
                .iter()
                .filter(|c| ray_cast_inside(&c.polygon, &p))
                .map(|c| c.id)
                .collect();
            assert_eq!(scan.len(), 1);
            assert_eq!(grid.locate(&p).unwrap(), scan[0]);
        }
    }

    #[test]
    fn locate_rejects_points_outside() {
        let grid = ten_km_grid();
        let p = ProjectedPoint::new(-10.0, 500.0);
        assert!(matches!(grid.locate(&p), Err(Error::OutOfBounds { .. })));
        assert!(grid.locate(&ProjectedPoint::new(f64::NAN, 0.0)).is_err());
    }

    #[test]
    fn disk_inside_hexagon_matches_monte_carlo() {
        let grid = ten_km_grid();
        let cell = grid.cell(grid.index_of(CellId::new(0, 0)).unwrap());
        let center = ProjectedPoint::new(cell.center.x + 100.0, cell.center.y - 50.0);
        let radius = 600.0;
        let area = overlap_area(cell, &center, radius).unwrap();

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let samples = 1_000_000;
        let mut hits = 0u64;
        for _ in 0..samples {
            let p = ProjectedPoint::new(
                center.x + rng.random_range(-radius..radius),
                center.y + rng.random_range(-radius..radius),
            );
            if p.distance(&center) <= radius && ray_cast_inside(&cell.polygon, &p) {
                hits += 1;
            }
        }
        let mc = hits as f64 / samples as f64 * (2.0 * radius).powi(2);
        let exact = std::f64::consts::PI * radius * radius;
        assert!((mc - exact).abs() / exact < 0.005);
        assert!((area - exact).abs() / exact < 0.005);
        assert!((area - disk_area(radius)).abs() <= 1e-9 * area);
    }

    #[test]
    fn disjoint_disk_has_zero_overlap() {
        let grid = ten_km_grid();
        let cell = grid.cell(0);
        let far = ProjectedPoint::new(cell.center.x + 2.0 * 1410.0 + 301.0, cell.center.y);
        assert_eq!(overlap_area(cell, &far, 300.0).unwrap(), 0.0);
        assert!(matches!(overlap_area(cell, &far, 0.0), Err(Error::InvalidInput(_))));
        assert!(matches!(overlap_area(cell, &far, -1.0), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn overlaps_partition_the_disk() {
        let grid = ten_km_grid();
        let center = ProjectedPoint::new(4321.0, 6123.0);
        let radius = 2500.0;
        let total: f64 = grid
            .cells_near(&center, radius)
            .into_iter()
            .map(|i| overlap_area(grid.cell(i), &center, radius).unwrap())
            .sum();
        let disk = disk_area(radius);
        assert!((total - disk).abs() <= 1e-6 * disk, "{total} vs {disk}");
    }

    #[test]
    fn grid_construction_is_deterministic() {
        let a = ten_km_grid();
        let b = ten_km_grid();
        assert_eq!(a.cells(), b.cells());
        assert_eq!(a.signature(), b.signature());
    }

    #[test]
    fn projection_round_trips() {
        let proj = Projection::new(36.8, -76.0).unwrap();
        let p = proj.project(36.85, -76.1);
        let (lat, lon) = proj.unproject(p);
        assert!((lat - 36.85).abs() < 1e-12 && (lon + 76.1).abs() < 1e-12);
        assert!(Projection::new(95.0, 0.0).is_err());
    }

    #[test]
    fn cell_id_text_round_trips() {
        let id = CellId::new(-3, 12);
        assert_eq!(id.to_string().parse::<CellId>().unwrap(), id);
        assert!("3;4".parse::<CellId>().is_err());
    }

    #[test]
    fn region_grid_keeps_only_interior_centers() {
        let region = [(0.0, 0.0), (20_000.0, 0.0), (20_000.0, 8_000.0), (12_000.0, 15_000.0), (0.0, 15_000.0)]
            .map(|(x, y)| ProjectedPoint::new(x, y));
        let full = build_grid(BBox::enclosing(&region, 0.0).unwrap(), 1410.0).unwrap();
        let grid = build_grid_in_region(&region, 1410.0).unwrap();
        assert!(grid.len() < full.len());
        for c in full.cells() {
            assert_eq!(grid.index_of(c.id).is_some(), ray_cast_inside(&region, &c.center));
        }
        assert_ne!(grid.signature(), full.signature());
        let dropped = full.cells().iter().find(|c| grid.index_of(c.id).is_none()).unwrap();
        if grid.bbox().contains(&dropped.center) {
            assert!(matches!(grid.locate(&dropped.center), Err(Error::OutOfBounds { .. })));
        }
        let kept = &grid.cells()[grid.len() / 2];
        assert_eq!(grid.locate(&kept.center).unwrap(), kept.id);
        assert!(build_grid_in_region(&region[..2], 1410.0).is_err());
    }

    #[test]
    fn geojson_export_lists_every_cell() {
        let grid = ten_km_grid();
        let proj = Projection::new(36.8, -76.0).unwrap();
        let gj = grid.to_geojson(&proj);
        let feats = gj["features"].as_array().unwrap();
        assert_eq!(feats.len(), grid.len());
        assert_eq!(feats[0]["geometry"]["coordinates"][0].as_array().unwrap().len(), 7);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn interior_points_belong_to_one_cell(fx in 0.0f64..1.0, fy in 0.0f64..1.0) {
                let grid = ten_km_grid();
                let p = ProjectedPoint::new(fx * 10_000.0, fy * 10_000.0);
                let id = grid.locate(&p).unwrap();
                let cell = grid.cell(grid.index_of(id).unwrap());
                prop_assert!(cell.contains(&p));
                let containing = grid.cells().iter().filter(|c| c.contains(&p)).count();
                prop_assert!(containing >= 1);
            }

            #[test]
            fn overlap_is_bounded(dx in -3000.0f64..3000.0, dy in -3000.0f64..3000.0, r in 1.0f64..3000.0) {
                let grid = ten_km_grid();
                let cell = grid.cell(grid.index_of(CellId::new(0, 0)).unwrap());
                let c = ProjectedPoint::new(cell.center.x + dx, cell.center.y + dy);
                let a = overlap_area(cell, &c, r).unwrap();
                prop_assert!(a >= 0.0);
                prop_assert!(a <= cell.area.min(disk_area(r) * (1.0 + 1e-9)));
            }
        }
    }
}
