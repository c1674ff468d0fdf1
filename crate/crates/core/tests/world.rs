use vot::geometry::{Pose2, Vec2};
use vot::world::{
    apply_observation_noise, generate_floorplan, geodesic_distance, render, sample_episode,
    shortest_path_actions, step, EpisodeParams, FloorParams, FloorPlan, NoiseModel, RenderConfig,
    SUCCESS_RADIUS,
};

/// Distance from `p` along `dir` to the inside of the box `[lo, hi]^2`.
fn ray_box(p: Vec2, dir: Vec2, lo: f64, hi: f64) -> f64 {
    let axis = |o: f64, d: f64| {
        if d > 0.0 {
            (hi - o) / d
        } else if d < 0.0 {
            (lo - o) / d
        } else {
            f64::INFINITY
        }
    };
    axis(p.x, dir.x).min(axis(p.y, dir.y))
}

#[test]
fn generation_is_a_function_of_the_seed() {
    let p = FloorParams::default();
    let a = generate_floorplan(17, p).unwrap();
    assert_eq!(a, generate_floorplan(17, p).unwrap());
    assert_ne!(a.cells(), generate_floorplan(18, p).unwrap().cells());
    let mut buf = Vec::new();
    a.write_to(&mut buf).unwrap();
    assert_eq!(FloorPlan::read_from(buf.as_slice()).unwrap(), a);
}

#[test]
fn central_row_depth_matches_ray_box_intersection() {
    let plan = FloorPlan::empty_room(10, 10, 0.4).unwrap();
    let cfg = RenderConfig::default();
    for (x, y, h) in [(2.4, 2.2, 0.0), (1.1, 3.7, 2.3), (3.9, 0.9, -1.2)] {
        let pose = Pose2::new(x, y, h);
        let depth = render(&plan, pose, &cfg).depth.unwrap();
        for c in 0..cfg.width {
            let a = h + cfg.column_angle(c);
            let want = ray_box(pose.position, Vec2::new(a.cos(), a.sin()), 0.4, 4.4).min(10.0);
            for r in [cfg.height / 2 - 1, cfg.height / 2] {
                let got = depth.get(c, r, 0);
                assert!((got - want).abs() < 1e-9, "pose {pose:?} col {c}: {got} vs {want}");
            }
        }
    }
}

#[test]
fn symmetric_view_gives_mirrored_depth() {
    let plan = FloorPlan::empty_room(10, 10, 0.4).unwrap();
    let cfg = RenderConfig::default();
    let depth = render(&plan, Pose2::new(2.4, 2.4, 0.0), &cfg).depth.unwrap();
    let flipped = depth.flip_horizontal();
    for (a, b) in depth.data.iter().zip(&flipped.data) {
        assert!((a - b).abs() < 1e-9);
    }
}

#[test]
fn rendering_is_deterministic_and_in_range() {
    let plan = generate_floorplan(3, FloorParams::default()).unwrap();
    let cfg = RenderConfig::default();
    for (i, j) in plan.free_cells().into_iter().step_by(7) {
        let c = plan.cell_center(i, j);
        let pose = Pose2::new(c.x, c.y, 0.3 * i as f64);
        let a = render(&plan, pose, &cfg);
        assert_eq!(a, render(&plan, pose, &cfg));
        assert!(a.in_range());
        assert_eq!(a.rgb.as_ref().unwrap().dims(), (32, 16, 3));
        assert_eq!(a.depth.as_ref().unwrap().dims(), (32, 16, 1));
    }
}

#[test]
fn observation_noise_is_seeded_and_clamped() {
    let plan = FloorPlan::empty_room(10, 10, 0.4).unwrap();
    let clean = render(&plan, Pose2::new(2.0, 2.0, 0.5), &RenderConfig::default());
    let noise = NoiseModel::default();
    let a = apply_observation_noise(&clean, &noise, &mut vot::rng::stream(1, 0));
    let b = apply_observation_noise(&clean, &noise, &mut vot::rng::stream(1, 0));
    assert_eq!(a, b);
    assert_ne!(a, clean);
    assert!(a.in_range());
}

#[test]
fn sampled_episodes_are_solvable_by_the_noiseless_shortest_path() {
    let params = EpisodeParams::default();
    for scene in [1u64, 2, 3] {
        let plan = generate_floorplan(scene, FloorParams::default()).unwrap();
        for k in 0..6 {
            let ep = sample_episode(&plan, scene * 100 + k, params).unwrap();
            assert_eq!(ep, sample_episode(&plan, scene * 100 + k, params).unwrap());
            assert!(ep.geodesic >= params.d_min && ep.geodesic <= params.d_max);
            let g = geodesic_distance(&plan, ep.start.position, ep.goal).unwrap();
            assert!((g - ep.geodesic).abs() < 1e-12);
            let acts = shortest_path_actions(&plan, ep.start, ep.goal, SUCCESS_RADIUS).unwrap();
            let mut pose = ep.start;
            let mut rng = vot::rng::stream(0, 0);
            for a in &acts {
                let (next, collided) = step(&plan, pose, *a, &NoiseModel::noiseless(), &mut rng);
                assert!(!collided, "scene {scene} episode {k}");
                pose = next;
            }
            assert!((pose.position - ep.goal).norm() < SUCCESS_RADIUS);
            // Each FWD covers at most 0.25 m, so the path needs this many.
            let fwd = acts.iter().filter(|a| !a.is_turn()).count();
            assert!(fwd as f64 * 0.25 + SUCCESS_RADIUS >= ep.geodesic - 1e-9);
        }
    }
}

#[test]
fn geodesic_is_symmetric_and_bounded_below_by_euclid() {
    let plan = generate_floorplan(9, FloorParams::default()).unwrap();
    let free = plan.free_cells();
    for k in 0..20 {
        let a = plan.cell_center(free[(k * 17) % free.len()].0, free[(k * 17) % free.len()].1);
        let b = plan.cell_center(free[(k * 31 + 5) % free.len()].0, free[(k * 31 + 5) % free.len()].1);
        let ab = geodesic_distance(&plan, a, b).unwrap();
        let ba = geodesic_distance(&plan, b, a).unwrap();
        assert_eq!(ab, ba);
        assert!(ab >= (a - b).norm() - 1e-12);
    }
}
