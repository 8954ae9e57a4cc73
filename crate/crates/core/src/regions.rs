//! Unclear regions: two-stage DBSCAN over the unclear points.
//!
//! Stage one clusters all unclear points spatially. Stage two splits every
//! coarse cluster by most likely class (unmeasured points form their own
//! group) and clusters each group again. Noise at either stage becomes a
//! singleton region so that every unclear point belongs to exactly one
//! region.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::cloud::{SafetyLabel, SafetyPartition, SemanticPointCloud};
use crate::error::{Error, Result};
use crate::kdtree::KdTree;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DbscanParams {
    pub eps: f64,
    pub min_pts: usize,
}

impl DbscanParams {
    pub fn new(eps: f64, min_pts: usize) -> Result<Self> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::InvalidParameter("dbscan eps must be > 0".into()));
        }
        if min_pts == 0 {
            return Err(Error::InvalidParameter("dbscan min_pts must be >= 1".into()));
        }
        Ok(Self { eps, min_pts })
    }
}

/// Clustering parameters relative to the cloud resolution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionParams {
    pub eps_factor: f64,
    pub min_pts: usize,
    pub stage2_eps_factor: f64,
    pub stage2_min_pts: usize,
}

impl Default for RegionParams {
    fn default() -> Self {
        Self {
            eps_factor: 4.0,
            min_pts: 5,
            stage2_eps_factor: 4.0,
            stage2_min_pts: 5,
        }
    }
}

impl RegionParams {
    pub fn validate(&self) -> Result<()> {
        DbscanParams::new(self.eps_factor, self.min_pts)?;
        DbscanParams::new(self.stage2_eps_factor, self.stage2_min_pts)?;
        Ok(())
    }

    pub fn stage1(&self, resolution: f64) -> DbscanParams {
        DbscanParams {
            eps: self.eps_factor * resolution,
            min_pts: self.min_pts,
        }
    }

    pub fn stage2(&self, resolution: f64) -> DbscanParams {
        DbscanParams {
            eps: self.stage2_eps_factor * resolution,
            min_pts: self.stage2_min_pts,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DbscanResult {
    /// Member indices of every cluster, ascending; clusters ordered by their
    /// lowest core point.
    pub clusters: Vec<Vec<usize>>,
    pub noise: Vec<usize>,
}

/// Density-based clustering. A point is core when at least `min_pts`
/// points (itself included) lie within `eps`. Border points join the first
/// cluster that reaches them.
pub fn dbscan(positions: &[Vector3<f64>], params: &DbscanParams) -> DbscanResult {
    const UNSEEN: usize = usize::MAX;
    const NOISE: usize = usize::MAX - 1;
    let n = positions.len();
    let tree = KdTree::new(positions);
    let mut label = vec![UNSEEN; n];
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    let mut queue = Vec::new();
    for i in 0..n {
        if label[i] != UNSEEN {
            continue;
        }
        let neighbours = tree.within_radius(&positions[i], params.eps);
        if neighbours.len() < params.min_pts {
            label[i] = NOISE;
            continue;
        }
        let id = clusters.len();
        let mut members = vec![i];
        label[i] = id;
        queue.clear();
        queue.extend(neighbours);
        while let Some(j) = queue.pop() {
            if label[j] == NOISE {
                label[j] = id;
                members.push(j);
                continue;
            }
            if label[j] != UNSEEN {
                continue;
            }
            label[j] = id;
            members.push(j);
            let nj = tree.within_radius(&positions[j], params.eps);
            if nj.len() >= params.min_pts {
                queue.extend(nj.into_iter().filter(|&k| label[k] == UNSEEN || label[k] == NOISE));
            }
        }
        members.sort_unstable();
        clusters.push(members);
    }
    let noise = (0..n).filter(|&i| label[i] == NOISE).collect();
    DbscanResult { clusters, noise }
}

/// Most likely class of a region's members, or the special class of points
/// that never received a measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DominantClass {
    Class(usize),
    NoPrediction,
}

impl DominantClass {
    pub fn of_point(cloud: &SemanticPointCloud, i: usize) -> Self {
        if cloud.measurement_count(i) == 0 {
            DominantClass::NoPrediction
        } else {
            DominantClass::Class(cloud.argmax_class(i))
        }
    }

    /// Class index, or -1 for the special class.
    pub fn code(&self) -> i64 {
        match self {
            DominantClass::Class(c) => *c as i64,
            DominantClass::NoPrediction => -1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnclearRegion {
    pub id: usize,
    pub point_indices: Vec<usize>,
    pub dominant_class: DominantClass,
}

impl UnclearRegion {
    pub fn len(&self) -> usize {
        self.point_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.point_indices.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RegionSet {
    pub regions: Vec<UnclearRegion>,
    /// Region id of every cloud point; `None` for points that are not
    /// unclear.
    pub point_to_region: Vec<Option<usize>>,
}

impl RegionSet {
    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    pub fn region_of(&self, point: usize) -> Option<usize> {
        self.point_to_region.get(point).copied().flatten()
    }

    /// Ids of the regions that contain any of the given points.
    pub fn regions_of<'a>(&self, points: impl IntoIterator<Item = &'a usize>) -> BTreeSet<usize> {
        points
            .into_iter()
            .filter_map(|&i| self.region_of(i))
            .collect()
    }

    /// CSV with header `point_index,region_id,dominant_class`, one row per
    /// unclear point in index order; the special class is written as -1.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "point_index,region_id,dominant_class")?;
        for (i, r) in self.point_to_region.iter().enumerate() {
            if let Some(r) = r {
                writeln!(w, "{i},{r},{}", self.regions[*r].dominant_class.code())?;
            }
        }
        Ok(())
    }
}

/// Regions of the unclear points of `partition`.
pub fn two_stage_cluster(
    cloud: &SemanticPointCloud,
    partition: &SafetyPartition,
    params: &RegionParams,
) -> RegionSet {
    let unclear = partition.indices(SafetyLabel::Unclear);
    let mut set = RegionSet {
        regions: Vec::new(),
        point_to_region: vec![None; cloud.len()],
    };
    if unclear.is_empty() {
        return set;
    }
    let res = cloud.resolution();
    let positions: Vec<Vector3<f64>> = unclear.iter().map(|&i| cloud.position(i)).collect();
    let coarse = dbscan(&positions, &params.stage1(res));

    let push = |set: &mut RegionSet, members: Vec<usize>, class: DominantClass| {
        let id = set.regions.len();
        for &i in &members {
            set.point_to_region[i] = Some(id);
        }
        set.regions.push(UnclearRegion {
            id,
            point_indices: members,
            dominant_class: class,
        });
    };

    let stage2 = params.stage2(res);
    for cluster in &coarse.clusters {
        let mut groups: BTreeMap<DominantClass, Vec<usize>> = BTreeMap::new();
        for &local in cluster {
            let i = unclear[local];
            groups.entry(DominantClass::of_point(cloud, i)).or_default().push(i);
        }
        for (class, members) in groups {
            let pos: Vec<Vector3<f64>> = members.iter().map(|&i| cloud.position(i)).collect();
            let fine = dbscan(&pos, &stage2);
            for c in fine.clusters {
                push(&mut set, c.into_iter().map(|l| members[l]).collect(), class);
            }
            for l in fine.noise {
                push(&mut set, vec![members[l]], class);
            }
        }
    }
    for local in coarse.noise {
        let i = unclear[local];
        push(&mut set, vec![i], DominantClass::of_point(cloud, i));
    }
    set
}

/// Ids of the regions touched by any support set along a path.
pub fn regions_traversed<'a>(
    supports: impl IntoIterator<Item = &'a [usize]>,
    regions: &RegionSet,
) -> BTreeSet<usize> {
    let mut out = BTreeSet::new();
    for phi in supports {
        out.extend(regions.regions_of(phi));
    }
    out
}

#[cfg(test)]
pub(crate) mod reference {
    use super::*;

    /// O(n²) DBSCAN: union-find over core points, clusters ordered by their
    /// lowest core index, border points given to the earliest cluster with a
    /// core neighbour.
    pub fn naive_dbscan(positions: &[Vector3<f64>], params: &DbscanParams) -> DbscanResult {
        let n = positions.len();
        let near = |a: usize, b: usize| (positions[a] - positions[b]).norm_squared() <= params.eps * params.eps;
        let core: Vec<bool> = (0..n)
            .map(|i| (0..n).filter(|&j| near(i, j)).count() >= params.min_pts)
            .collect();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut Vec<usize>, mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for i in 0..n {
            for j in 0..i {
                if core[i] && core[j] && near(i, j) {
                    let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
        let mut cluster_of_root: BTreeMap<usize, usize> = BTreeMap::new();
        let mut label = vec![None; n];
        for i in 0..n {
            if core[i] {
                let r = find(&mut parent, i);
                let next = cluster_of_root.len();
                label[i] = Some(*cluster_of_root.entry(r).or_insert(next));
            }
        }
        for i in 0..n {
            if !core[i] {
                label[i] = (0..n)
                    .filter(|&j| core[j] && near(i, j))
                    .filter_map(|j| label[j])
                    .min();
            }
        }
        let mut clusters = vec![Vec::new(); cluster_of_root.len()];
        let mut noise = Vec::new();
        for i in 0..n {
            match label[i] {
                Some(c) => clusters[c].push(i),
                None => noise.push(i),
            }
        }
        DbscanResult { clusters, noise }
    }
}

#[cfg(test)]
mod tests {
    use super::reference::naive_dbscan;
    use super::*;
    use crate::cloud::{ClassCatalog, FusionMode, SafetyParams};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn blob(cx: f64, n: usize) -> Vec<Vector3<f64>> {
        (0..n).map(|i| Vector3::new(cx + 0.1 * i as f64, 0.0, 0.0)).collect()
    }

    #[test]
    fn two_blobs() {
        let mut pts = blob(0.0, 10);
        pts.extend(blob(10.0, 10));
        let r = dbscan(&pts, &DbscanParams::new(0.5, 3).unwrap());
        assert_eq!(r.clusters.len(), 2);
        assert!(r.noise.is_empty());
        assert_eq!(r, naive_dbscan(&pts, &DbscanParams::new(0.5, 3).unwrap()));
    }

    #[test]
    fn sparse_points_are_noise() {
        let pts = blob(0.0, 5)
            .into_iter()
            .map(|p| p * 100.0)
            .collect::<Vec<_>>();
        let r = dbscan(&pts, &DbscanParams::new(0.5, 2).unwrap());
        assert!(r.clusters.is_empty());
        assert_eq!(r.noise.len(), 5);
        let single = dbscan(&pts[..1], &DbscanParams::new(0.5, 1).unwrap());
        assert_eq!(single.clusters, vec![vec![0]]);
    }

    #[test]
    fn matches_reference_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let pts: Vec<Vector3<f64>> = (0..300)
                .map(|_| {
                    Vector3::new(
                        rng.random_range(0.0..5.0),
                        rng.random_range(0.0..5.0),
                        rng.random_range(0.0..0.2),
                    )
                })
                .collect();
            let params = DbscanParams::new(rng.random_range(0.1..0.4), rng.random_range(1..8)).unwrap();
            assert_eq!(dbscan(&pts, &params), naive_dbscan(&pts, &params));
        }
    }

    fn grid(nx: usize, ny: usize, x0: f64) -> Vec<Vector3<f64>> {
        let mut v = Vec::new();
        for i in 0..nx {
            for j in 0..ny {
                v.push(Vector3::new(x0 + 0.1 * i as f64, 0.1 * j as f64, 0.0));
            }
        }
        v
    }

    fn catalog() -> ClassCatalog {
        ClassCatalog::new(vec!["s".into(), "u".into(), "v".into()], &[0]).unwrap()
    }

    #[test]
    fn fresh_blob_is_one_special_region() {
        let cloud = SemanticPointCloud::new(grid(6, 6, 0.0), 3, FusionMode::MeasurementNormalized).unwrap();
        let part = cloud.partition(&catalog(), &SafetyParams::default());
        let set = two_stage_cluster(&cloud, &part, &RegionParams::default());
        assert_eq!(set.len(), 1);
        assert_eq!(set.regions[0].dominant_class, DominantClass::NoPrediction);
        assert_eq!(set.regions[0].len(), 36);
    }

    #[test]
    fn mixed_blob_splits_by_class() {
        // left half leans to class 1, right half to class 2, both unclear
        let pts = grid(10, 5, 0.0);
        let mut cloud = SemanticPointCloud::new(pts.clone(), 3, FusionMode::MeasurementNormalized).unwrap();
        for (i, p) in pts.iter().enumerate() {
            let m = if p.x < 0.45 { [0.2, 0.5, 0.3] } else { [0.2, 0.3, 0.5] };
            cloud.add_measurement(i, &m, &[0.3, 0.3, 0.3]);
        }
        let part = cloud.partition(&catalog(), &SafetyParams::default());
        assert_eq!(part.count(SafetyLabel::Unclear), 50);
        let set = two_stage_cluster(&cloud, &part, &RegionParams::default());
        assert_eq!(set.len(), 2);
        assert_eq!(set.regions[0].dominant_class, DominantClass::Class(1));
        assert_eq!(set.regions[1].dominant_class, DominantClass::Class(2));
        // partition of the unclear set
        let total: usize = set.regions.iter().map(|r| r.len()).sum();
        assert_eq!(total, 50);
        assert!(set.point_to_region.iter().all(|r| r.is_some()));
    }

    #[test]
    fn no_unclear_points_no_regions() {
        let pts = grid(3, 3, 0.0);
        let mut cloud = SemanticPointCloud::new(pts, 3, FusionMode::MeasurementNormalized).unwrap();
        for i in 0..9 {
            cloud.add_measurement(i, &[1.0, 0.0, 0.0], &[0.0; 3]);
        }
        let part = cloud.partition(&catalog(), &SafetyParams::default());
        assert!(two_stage_cluster(&cloud, &part, &RegionParams::default()).is_empty());
    }

    #[test]
    fn traversed_regions() {
        let mut pts = grid(4, 4, 0.0);
        pts.extend(grid(4, 4, 5.0));
        let cloud = SemanticPointCloud::new(pts, 3, FusionMode::MeasurementNormalized).unwrap();
        let part = cloud.partition(&catalog(), &SafetyParams::default());
        let set = two_stage_cluster(&cloud, &part, &RegionParams::default());
        assert_eq!(set.len(), 2);
        let a: Vec<usize> = vec![0, 1];
        let b: Vec<usize> = vec![20, 1];
        let hit = regions_traversed([a.as_slice(), b.as_slice()], &set);
        assert_eq!(hit.into_iter().collect::<Vec<_>>(), vec![0, 1]);
        let none: Vec<usize> = vec![];
        assert!(regions_traversed([none.as_slice()], &set).is_empty());
        let mut csv = Vec::new();
        set.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert_eq!(text.lines().count(), 33);
        assert_eq!(text.lines().nth(1).unwrap(), "0,0,-1");
    }
}
