use std::f64::consts::TAU;

use mvfusion::geometry::Pose2;
use mvfusion::io::{generate_bundle, Preset};
use mvfusion::oracle::eq1_brute_force;
use mvfusion::projection::{project_features, Projector};
use mvfusion::raster::{stack_history_bev, voxelize_sweep_bev, FeatureMap, GridSpec, RvSpec, ViewGeometry, ViewTag};
use mvfusion::scene::{LidarPoint, Sweep};
use proptest::prelude::*;

fn point(x: f64, y: f64, z: f64, laser_id: u32) -> LidarPoint {
    LidarPoint {
        x,
        y,
        z,
        range: (x * x + y * y + z * z).sqrt(),
        intensity: 0.5,
        azimuth: y.atan2(x).rem_euclid(TAU),
        laser_id,
    }
}

fn grid() -> GridSpec {
    GridSpec::centered(30.0, 20.0, 3.2, 0.5, 0.5, 0.4, -0.2).unwrap()
}

fn points() -> impl Strategy<Value = Vec<LidarPoint>> {
    prop::collection::vec((-18.0f64..28.0, -12.0f64..12.0, -0.5f64..3.5, 0u32..5), 0..300)
        .prop_map(|v| v.into_iter().map(|(x, y, z, l)| point(x, y, z, l)).collect())
}

proptest! {
    #[test]
    fn projection_matches_double_loop(pts in points(), seed in 0u32..1000) {
        let rv = ViewGeometry::Rv(RvSpec { rows: 4, cols: 64, elevations: vec![0.0, -0.1, -0.2, -0.3] });
        let (h, w) = rv.dims();
        let data = (0..h * w * 3).map(|i| (((i as u32).wrapping_mul(2654435761) ^ seed) % 1000) as f32 / 7.0).collect();
        let src = FeatureMap::from_vec(ViewTag::Rv, h, w, 3, data).unwrap().with_geometry(rv.clone());
        let bev = ViewGeometry::Bev(grid());
        let (fast, fast_valid) = project_features(&src, &pts, &bev).unwrap();
        let (slow, slow_valid) = eq1_brute_force(&src, &rv, &pts, &bev);
        prop_assert_eq!(fast.data, slow.data);
        prop_assert_eq!(fast_valid.data, slow_valid.data);
    }

    #[test]
    fn projection_averages_stay_in_source_range(pts in points()) {
        let g = grid();
        let rv_spec = RvSpec { rows: 4, cols: 64, elevations: vec![0.0; 4] };
        let rv = ViewGeometry::Rv(rv_spec);
        let src = FeatureMap::filled(ViewTag::Rv, 4, 64, 2, 2.5).with_geometry(rv);
        let (out, valid) = project_features(&src, &pts, &ViewGeometry::Bev(g)).unwrap();
        for (cell, v) in out.data.chunks_exact(2).zip(&valid.data) {
            if *v > 0.0 {
                prop_assert!(cell.iter().all(|&x| x == 2.5));
            } else {
                prop_assert_eq!(*v, -1.0);
                prop_assert!(cell.iter().all(|&x| x == 0.0));
            }
        }
    }

    #[test]
    fn occupancy_is_binary_and_counts_points(pts in points()) {
        let g = grid();
        let sweep = Sweep { timestamp: 0.0, ego_pose: Pose2::identity(), points: pts.clone() };
        let fm = voxelize_sweep_bev(&sweep, &g);
        prop_assert!(fm.data.iter().all(|&v| v == 0.0 || v == 1.0));
        let occupied = fm.data.iter().filter(|&&v| v == 1.0).count();
        let mut voxels: Vec<_> = pts.iter().filter_map(|p| g.voxel(&p.position())).collect();
        voxels.sort();
        voxels.dedup();
        prop_assert_eq!(occupied, voxels.len());
    }

    #[test]
    fn bev_cell_projection_inverts_cell_center(r in 0usize..60, c in 0usize..40) {
        let g = grid();
        let q = g.cell_center(r, c);
        let p = point(q.x, q.y, 0.3, 0);
        let cell = g.project(&p).unwrap();
        prop_assert_eq!((cell.row, cell.col), (r, c));
    }
}

#[test]
fn history_stack_puts_current_sweep_last() {
    let preset = Preset::desk();
    let bundle = generate_bundle(&preset, 2, 0).unwrap();
    let stack = stack_history_bev(&bundle.sweeps, &preset.grid, preset.history).unwrap();
    let current = voxelize_sweep_bev(bundle.current_sweep(), &preset.grid);
    let nz = preset.grid.layers();
    let (h, w, c) = stack.shape();
    assert_eq!(c, preset.history * nz);
    for r in 0..h {
        for col in 0..w {
            assert_eq!(&stack.cell(r, col)[c - nz..], current.cell(r, col));
        }
    }
}
