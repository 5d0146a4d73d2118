//! Seven-cell cluster geometry, user and access point placement, and
//! base station cooperation patterns for powering down.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{AccessPointId, BitRate, BsId, FlowId, MacAddr, UserId};
use crate::rng;

/// Number of cells in the only supported cluster layout.
pub const CLUSTER_CELLS: usize = 7;
/// Largest number of base stations that can be off without an outage.
pub const MAX_OFF: usize = 4;

const GEOM_EPS: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum TopologyError {
    #[error("unsupported cluster size {0} (only 7-cell clusters are supported)")]
    UnsupportedClusterSize(usize),
    #[error("coverage radius must be positive, got {0}")]
    InvalidRadius(f64),
    #[error("no cooperation pattern powers off {0} base stations (at most 4)")]
    UnsupportedPattern(usize),
    #[error("unknown base station {0}")]
    UnknownBaseStation(BsId),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const ORIGIN: Point = Point { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BsMode {
    Omni,
    TriSectorized,
    Off,
}

impl BsMode {
    pub fn as_str(self) -> &'static str {
        match self {
            BsMode::Omni => "omni",
            BsMode::TriSectorized => "tri",
            BsMode::Off => "off",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaseStation {
    pub id: BsId,
    pub position: Point,
    pub coverage_radius_m: f64,
    pub mode: BsMode,
    pub attached_users: BTreeSet<UserId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccessPoint {
    pub id: AccessPointId,
    pub mac: MacAddr,
    pub ssid: String,
    pub position: Point,
    pub coverage_radius_m: f64,
    pub capacity: BitRate,
    pub attached_flows: BTreeSet<FlowId>,
}

impl AccessPoint {
    pub fn capacity_mbps(&self) -> f64 {
        self.capacity.mbps()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserPosition {
    pub user_id: UserId,
    pub position: Point,
    pub serving_bs: BsId,
    pub in_wifi_coverage_of: BTreeSet<AccessPointId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub base_stations: Vec<BaseStation>,
    pub access_points: Vec<AccessPoint>,
    /// Radius of the circle around the origin that bounds every cell.
    pub cluster_radius_m: f64,
    pub inter_site_distance_m: f64,
}

/// Builds the 7-cell hexagonal cluster: one cell at the origin, six on a ring
/// at `sqrt(3) * R` spaced by 60 degrees.
pub fn build_cluster(n_cells: usize, coverage_radius_m: f64) -> Result<Topology, TopologyError> {
    if n_cells != CLUSTER_CELLS {
        return Err(TopologyError::UnsupportedClusterSize(n_cells));
    }
    if !(coverage_radius_m > 0.0) || !coverage_radius_m.is_finite() {
        return Err(TopologyError::InvalidRadius(coverage_radius_m));
    }
    let isd = 3f64.sqrt() * coverage_radius_m;
    let mut base_stations = Vec::with_capacity(n_cells);
    base_stations.push(new_bs(0, Point::ORIGIN, coverage_radius_m));
    for k in 0..6u32 {
        let angle = (k as f64) * PI / 3.0;
        let pos = Point::new(isd * angle.cos(), isd * angle.sin());
        base_stations.push(new_bs(k + 1, pos, coverage_radius_m));
    }
    Ok(Topology {
        base_stations,
        access_points: Vec::new(),
        cluster_radius_m: isd + coverage_radius_m,
        inter_site_distance_m: isd,
    })
}

fn new_bs(id: u32, position: Point, radius: f64) -> BaseStation {
    BaseStation {
        id: BsId(id),
        position,
        coverage_radius_m: radius,
        mode: BsMode::TriSectorized,
        attached_users: BTreeSet::new(),
    }
}

impl Topology {
    pub fn bs(&self, id: BsId) -> Option<&BaseStation> {
        self.base_stations.get(id.0 as usize).filter(|b| b.id == id)
    }

    pub fn bs_mut(&mut self, id: BsId) -> Option<&mut BaseStation> {
        self.base_stations
            .get_mut(id.0 as usize)
            .filter(|b| b.id == id)
    }

    pub fn ap(&self, id: AccessPointId) -> Option<&AccessPoint> {
        self.access_points.get(id.0 as usize).filter(|a| a.id == id)
    }

    pub fn bs_ids(&self) -> impl Iterator<Item = BsId> + '_ {
        self.base_stations.iter().map(|b| b.id)
    }

    pub fn cell_radius(&self) -> f64 {
        self.base_stations[0].coverage_radius_m
    }

    /// True when `p` lies in at least one (closed) cell disk.
    pub fn in_cluster(&self, p: Point) -> bool {
        self.base_stations
            .iter()
            .any(|b| p.distance(b.position) <= b.coverage_radius_m + GEOM_EPS)
    }

    /// Area of the union of the cell disks in km².
    ///
    /// In the hexagonal layout only adjacent disks overlap and no three disks
    /// share a region of positive area, so inclusion-exclusion stops at pairs.
    pub fn cluster_area_km2(&self) -> f64 {
        let r = self.cell_radius();
        let n = self.base_stations.len();
        let mut area = n as f64 * PI * r * r;
        for i in 0..n {
            for j in (i + 1)..n {
                let d = self.base_stations[i]
                    .position
                    .distance(self.base_stations[j].position);
                area -= lens_area(r, d);
            }
        }
        area / 1e6
    }

    /// Base stations at inter-site distance from `id`.
    pub fn neighbors(&self, id: BsId) -> Vec<BsId> {
        let Some(center) = self.bs(id) else {
            return Vec::new();
        };
        self.base_stations
            .iter()
            .filter(|b| b.id != id)
            .filter(|b| {
                (b.position.distance(center.position) - self.inter_site_distance_m).abs() < 1e-6
            })
            .map(|b| b.id)
            .collect()
    }

    /// Uniform point in the annulus `[min_distance, R]` around `bs`.
    pub fn sample_point_in_cell<R: Rng + ?Sized>(
        &self,
        bs: BsId,
        min_distance_m: f64,
        rng: &mut R,
    ) -> Point {
        let cell = self.bs(bs).expect("cell id from this topology");
        let r = cell.coverage_radius_m;
        loop {
            let x = rng.random_range(-r..=r);
            let y = rng.random_range(-r..=r);
            let d = x.hypot(y);
            if d >= min_distance_m && d <= r {
                return Point::new(cell.position.x + x, cell.position.y + y);
            }
        }
    }

    /// Places `count` users, each in a uniformly chosen cell and uniformly in
    /// that cell's disk outside `min_distance_m`.
    pub fn place_users<R: Rng + ?Sized>(
        &self,
        count: usize,
        min_distance_m: f64,
        rng: &mut R,
    ) -> Vec<UserPosition> {
        (0..count)
            .map(|i| {
                let cell = BsId(rng.random_range(0..self.base_stations.len() as u32));
                let position = self.sample_point_in_cell(cell, min_distance_m, rng);
                UserPosition {
                    user_id: UserId(i as u32),
                    position,
                    serving_bs: cell,
                    in_wifi_coverage_of: self.wifi_coverage(position),
                }
            })
            .collect()
    }

    /// Poisson access point deployment over the cluster.
    ///
    /// The count is the Poisson quantile of one uniform draw and positions are
    /// the first `count` accepted points of a fixed rejection-sampling stream.
    /// For a fixed seed a denser deployment is therefore a superset of a
    /// sparser one.
    pub fn place_access_points(
        &self,
        density_per_km2: f64,
        capacity_mbps: f64,
        coverage_radius_m: f64,
        seed: u64,
    ) -> Vec<AccessPoint> {
        let mean = density_per_km2.max(0.0) * self.cluster_area_km2();
        let mut count_rng = rng::stream(seed, "placement.ap-count", 0);
        let count = rng::poisson_quantile(mean, count_rng.random::<f64>()) as usize;
        let mut pos_rng = rng::stream(seed, "placement.ap-position", 0);
        let extent = self.cluster_radius_m;
        let mut aps = Vec::with_capacity(count);
        while aps.len() < count {
            let p = Point::new(
                pos_rng.random_range(-extent..=extent),
                pos_rng.random_range(-extent..=extent),
            );
            if !self.in_cluster(p) {
                continue;
            }
            let id = AccessPointId(aps.len() as u32);
            aps.push(AccessPoint {
                id,
                mac: MacAddr::for_access_point(id),
                ssid: format!("offload-{:04}", id.0),
                position: p,
                coverage_radius_m,
                capacity: BitRate::from_mbps(capacity_mbps),
                attached_flows: BTreeSet::new(),
            });
        }
        aps
    }

    /// Access points whose closed coverage disk contains `p`.
    pub fn wifi_coverage(&self, p: Point) -> BTreeSet<AccessPointId> {
        self.access_points
            .iter()
            .filter(|ap| p.distance(ap.position) <= ap.coverage_radius_m + GEOM_EPS)
            .map(|ap| ap.id)
            .collect()
    }

    /// Access points whose coverage disk intersects the cell of `bs`.
    pub fn overlapping_aps(&self, bs: BsId) -> Vec<AccessPointId> {
        let Some(cell) = self.bs(bs) else {
            return Vec::new();
        };
        self.access_points
            .iter()
            .filter(|ap| {
                ap.position.distance(cell.position)
                    <= cell.coverage_radius_m + ap.coverage_radius_m + GEOM_EPS
            })
            .map(|ap| ap.id)
            .collect()
    }

    /// Canonical cooperation pattern powering off `n_off` base stations.
    pub fn cooperation_pattern(&self, n_off: usize) -> Result<CooperationPattern, TopologyError> {
        let ring = |k: u32| BsId(k + 1);
        let off: Vec<BsId> = match n_off {
            0 => vec![],
            1 => vec![BsId(0)],
            2 => vec![BsId(0), ring(0)],
            3 => vec![BsId(0), ring(0), ring(3)],
            4 => vec![BsId(0), ring(0), ring(2), ring(4)],
            n => return Err(TopologyError::UnsupportedPattern(n)),
        };
        let off_set: BTreeSet<BsId> = off.into_iter().collect();
        let coverage_map = off_set
            .iter()
            .map(|&o| {
                let covers: Vec<BsId> = self
                    .neighbors(o)
                    .into_iter()
                    .filter(|n| !off_set.contains(n))
                    .collect();
                (o, covers)
            })
            .collect();
        Ok(CooperationPattern {
            n_off,
            off_set,
            coverage_map,
        })
    }

    /// All canonical patterns, indexed by the number of base stations off.
    pub fn all_patterns(&self) -> Vec<CooperationPattern> {
        (0..=MAX_OFF)
            .map(|n| self.cooperation_pattern(n).expect("n <= MAX_OFF"))
            .collect()
    }
}

/// Overlap area of two circles of radius `r` whose centres are `d` apart.
fn lens_area(r: f64, d: f64) -> f64 {
    if d >= 2.0 * r {
        return 0.0;
    }
    2.0 * r * r * (d / (2.0 * r)).acos() - 0.5 * d * (4.0 * r * r - d * d).sqrt()
}

/// Which base stations are off and which live neighbors take over their area.
#[derive(Debug, Clone, PartialEq)]
pub struct CooperationPattern {
    pub n_off: usize,
    pub off_set: BTreeSet<BsId>,
    /// Off cell -> live neighbors (at inter-site distance) that cover it.
    /// Every point of the off cell is served by the nearest of these.
    pub coverage_map: BTreeMap<BsId, Vec<BsId>>,
}

impl CooperationPattern {
    pub fn is_off(&self, bs: BsId) -> bool {
        self.off_set.contains(&bs)
    }

    /// Coverage radius of `bs` under this pattern: live cells that cover an
    /// off neighbor extend to inter-site distance plus cell radius.
    pub fn effective_radius(&self, topology: &Topology, bs: BsId) -> f64 {
        if self.is_off(bs) {
            return 0.0;
        }
        let extends = self
            .coverage_map
            .values()
            .any(|covers| covers.contains(&bs));
        if extends {
            topology.inter_site_distance_m + topology.cell_radius()
        } else {
            topology.cell_radius()
        }
    }

    /// Live base station serving a point whose home cell is `home`.
    pub fn cover_for(&self, topology: &Topology, home: BsId, p: Point) -> Option<BsId> {
        if !self.is_off(home) {
            return Some(home);
        }
        self.coverage_map
            .get(&home)?
            .iter()
            .copied()
            .min_by(|a, b| {
                let da = p.distance(topology.bs(*a).map(|x| x.position).unwrap_or_default());
                let db = p.distance(topology.bs(*b).map(|x| x.position).unwrap_or_default());
                da.total_cmp(&db).then(a.cmp(b))
            })
    }

    /// True when some live base station's effective coverage contains `p`.
    pub fn covers(&self, topology: &Topology, p: Point) -> bool {
        topology.base_stations.iter().any(|b| {
            !self.is_off(b.id)
                && p.distance(b.position) <= self.effective_radius(topology, b.id) + GEOM_EPS
        })
    }

    /// Fraction of each off cell's area assigned to each covering base
    /// station, estimated on a square grid of the given spacing.
    pub fn area_shares(
        &self,
        topology: &Topology,
        spacing_m: f64,
    ) -> BTreeMap<BsId, BTreeMap<BsId, f64>> {
        let mut shares = BTreeMap::new();
        for &off in &self.off_set {
            let cell = topology.bs(off).expect("pattern ids belong to topology");
            let r = cell.coverage_radius_m;
            let steps = (r / spacing_m).ceil() as i64;
            let mut counts: BTreeMap<BsId, u64> = BTreeMap::new();
            let mut total = 0u64;
            for i in -steps..=steps {
                for j in -steps..=steps {
                    let dx = (i as f64 + 0.5) * spacing_m;
                    let dy = (j as f64 + 0.5) * spacing_m;
                    if dx.hypot(dy) > r {
                        continue;
                    }
                    let p = Point::new(cell.position.x + dx, cell.position.y + dy);
                    if let Some(c) = self.cover_for(topology, off, p) {
                        *counts.entry(c).or_default() += 1;
                        total += 1;
                    }
                }
            }
            let frac = counts
                .into_iter()
                .map(|(k, v)| (k, v as f64 / total.max(1) as f64))
                .collect();
            shares.insert(off, frac);
        }
        shares
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cluster() -> Topology {
        build_cluster(7, 300.0).unwrap()
    }

    #[test]
    fn center_at_origin_and_ring_at_isd() {
        let t = cluster();
        assert_eq!(t.base_stations.len(), 7);
        assert_eq!(t.base_stations[0].position, Point::ORIGIN);
        let d = t.base_stations[1].position.distance(Point::ORIGIN);
        // sqrt(3) * 300 = 519.6152422706632
        assert!((d - 519.615).abs() < 1e-3);
        for b in &t.base_stations[1..] {
            assert!((b.position.distance(Point::ORIGIN) - 519.6152422706632).abs() < 1e-9);
        }
        assert!(t.base_stations.iter().all(|b| b.coverage_radius_m == 300.0));
    }

    #[test]
    fn rejects_other_cluster_sizes() {
        assert_eq!(
            build_cluster(5, 300.0),
            Err(TopologyError::UnsupportedClusterSize(5))
        );
        assert_eq!(
            build_cluster(7, 0.0),
            Err(TopologyError::InvalidRadius(0.0))
        );
    }

    #[test]
    fn cluster_area_matches_closed_form() {
        // R^2 (3 pi + 6 sqrt 3) for the hexagonal 7-cell layout.
        let t = cluster();
        let expected = 300.0f64.powi(2) * (3.0 * PI + 6.0 * 3f64.sqrt()) / 1e6;
        assert!((t.cluster_area_km2() - expected).abs() < 1e-9);
    }

    #[test]
    fn cluster_area_agrees_with_monte_carlo() {
        let t = cluster();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let e = t.cluster_radius_m;
        let n = 200_000;
        let hits = (0..n)
            .filter(|_| {
                let p = Point::new(rng.random_range(-e..=e), rng.random_range(-e..=e));
                t.in_cluster(p)
            })
            .count();
        let mc = hits as f64 / n as f64 * (2.0 * e) * (2.0 * e) / 1e6;
        assert!((mc - t.cluster_area_km2()).abs() / t.cluster_area_km2() < 0.01);
    }

    #[test]
    fn zero_users_is_empty() {
        let t = cluster();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(t.place_users(0, 20.0, &mut rng).is_empty());
    }

    #[test]
    fn users_respect_distance_bounds_and_are_deterministic() {
        let t = cluster();
        let a = t.place_users(10_000, 20.0, &mut ChaCha8Rng::seed_from_u64(9));
        let b = t.place_users(10_000, 20.0, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
        for u in &a {
            let d = u.position.distance(t.bs(u.serving_bs).unwrap().position);
            assert!((20.0..=300.0).contains(&d), "distance {d}");
        }
    }

    #[test]
    fn zero_density_places_no_access_points() {
        assert!(cluster().place_access_points(0.0, 10.0, 50.0, 1).is_empty());
    }

    #[test]
    fn access_points_carry_configured_capacity_and_lie_in_cluster() {
        let t = cluster();
        let aps = t.place_access_points(20.0, 12.5, 50.0, 4);
        assert!(!aps.is_empty());
        for ap in &aps {
            assert_eq!(ap.capacity_mbps(), 12.5);
            assert!(t.in_cluster(ap.position));
        }
    }

    #[test]
    fn denser_deployment_extends_sparser_one() {
        let t = cluster();
        let sparse = t.place_access_points(2.0, 10.0, 50.0, 11);
        let dense = t.place_access_points(10.0, 10.0, 50.0, 11);
        assert!(dense.len() >= sparse.len());
        assert_eq!(&dense[..sparse.len()], &sparse[..]);
    }

    #[test]
    fn wifi_coverage_is_a_closed_disk() {
        let mut t = cluster();
        t.access_points = t.place_access_points(0.0, 10.0, 50.0, 0);
        let id = AccessPointId(0);
        t.access_points.push(AccessPoint {
            id,
            mac: MacAddr::for_access_point(id),
            ssid: "x".into(),
            position: Point::new(100.0, 0.0),
            coverage_radius_m: 50.0,
            capacity: BitRate::from_mbps(10.0),
            attached_flows: BTreeSet::new(),
        });
        assert!(t.wifi_coverage(Point::new(100.0, 0.0)).contains(&id));
        assert!(t.wifi_coverage(Point::new(150.0, 0.0)).contains(&id));
        assert!(t.wifi_coverage(Point::new(151.0, 0.0)).is_empty());
    }

    #[test]
    fn canonical_patterns() {
        let t = cluster();
        assert!(t.cooperation_pattern(0).unwrap().off_set.is_empty());
        let four = t.cooperation_pattern(4).unwrap();
        let expected: BTreeSet<BsId> = [0, 1, 3, 5].into_iter().map(BsId).collect();
        assert_eq!(four.off_set, expected);
        for covers in four.coverage_map.values() {
            assert!(!covers.is_empty());
            assert!(covers.iter().all(|c| [2, 4, 6].contains(&c.0)));
        }
        assert_eq!(
            t.cooperation_pattern(5),
            Err(TopologyError::UnsupportedPattern(5))
        );
    }

    #[test]
    fn four_off_pattern_covers_cluster_on_5m_grid() {
        // Brute-force grid check over the cluster's bounding square.
        let t = cluster();
        let p4 = t.cooperation_pattern(4).unwrap();
        let e = t.cluster_radius_m;
        let mut x = -e;
        while x <= e {
            let mut y = -e;
            while y <= e {
                let p = Point::new(x, y);
                if t.in_cluster(p) {
                    assert!(p4.covers(&t, p), "outage at {p:?}");
                }
                y += 5.0;
            }
            x += 5.0;
        }
    }

    #[test]
    fn coverage_map_is_geometrically_consistent() {
        let t = cluster();
        for pattern in t.all_patterns() {
            for (off, covers) in &pattern.coverage_map {
                let op = t.bs(*off).unwrap().position;
                for c in covers {
                    assert!(!pattern.is_off(*c));
                    let reach = pattern.effective_radius(&t, *c);
                    let cp = t.bs(*c).unwrap().position;
                    assert!(op.distance(cp) + t.cell_radius() <= reach + 1e-6);
                }
            }
        }
    }

    #[test]
    fn area_shares_sum_to_one() {
        let t = cluster();
        let p = t.cooperation_pattern(4).unwrap();
        let shares = p.area_shares(&t, 10.0);
        assert_eq!(shares.len(), 4);
        for s in shares.values() {
            let total: f64 = s.values().sum();
            assert!((total - 1.0).abs() < 1e-9);
        }
        // The center is split evenly between the three live ring cells.
        let center = &shares[&BsId(0)];
        assert_eq!(center.len(), 3);
        for v in center.values() {
            assert!((v - 1.0 / 3.0).abs() < 0.02);
        }
    }
}
