use proptest::prelude::*;
use slitflight::analysis::{build_histogram, flux_trajectory_distance, uniform_edges, FluxProfile, Histogram2D};
use slitflight::{
    first_passage, initial_wavefunction, potential, preset, run, BarrierParams, DetectionEvent, RunOptions,
    ScenarioConfig, SlitSchedule, SlitTag, Trajectory, TrajectorySample, TrajectoryStatus, PRESETS,
};

fn small(seed: u64, n: usize) -> ScenarioConfig {
    let mut c = ScenarioConfig::from_kv_str(
        "base=fig2\nname=small\ngrid.nx=128\ngrid.nz=256\ngrid.x_min=-8\ngrid.x_max=8\n\
         grid.z_min=-6\ngrid.z_max=6\nabsorber.width_x=1.5\nabsorber.width_z=1.5\n\
         solver.dt=0.001\nsolver.t_max=0.5\nsolver.snapshot_stride=5\ndetection.d=2",
    )
    .unwrap();
    c.ensemble.seed = seed;
    c.ensemble.n_particles = n;
    c
}

fn event(x: f64, t: f64) -> DetectionEvent {
    DetectionEvent {
        trajectory_id: 0,
        x_hit: x,
        t_f: t,
        slit_tag: SlitTag::Undetermined,
    }
}

#[test]
fn every_preset_starts_normalized() {
    for name in PRESETS {
        let c = preset(name).unwrap();
        let psi = initial_wavefunction(&c.packet, &c.grid).unwrap();
        assert!((psi.norm_sqr() - 1.0).abs() < 1e-8, "{name}: {}", psi.norm_sqr());
    }
}

#[test]
fn events_do_not_depend_on_worker_count() {
    let c = small(21, 400);
    let opts = RunOptions {
        trajectories: true,
        flux: true,
        ..Default::default()
    };
    let with = |threads| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| run(&c, &opts).unwrap())
    };
    let (a, b) = (with(1), with(3));
    assert_eq!(a.outcome.unwrap().records, b.outcome.unwrap().records);
    assert_eq!(a.flux, b.flux);
    assert_eq!(a.final_field, b.final_field);
}

#[test]
fn distinct_trajectories_never_coincide() {
    let c = small(5, 100);
    let opts = RunOptions {
        trajectories: true,
        probes: vec![0.1, 0.2, 0.3, 0.4],
        ..Default::default()
    };
    let out = run(&c, &opts).unwrap();
    let start = &out.outcome.as_ref().unwrap().records;
    for probe in &out.probes {
        let p = &probe.positions;
        for (i, a) in p.iter().enumerate() {
            for b in &p[i + 1..] {
                let (ra, rb) = (&start[a.0], &start[b.0]);
                if (ra.x0 - rb.x0).hypot(ra.z0 - rb.z0) <= 1e-3 {
                    continue;
                }
                let gap = (a.1 - b.1).hypot(a.2 - b.2);
                assert!(gap > 1e-6, "ids {} and {} meet at t = {}", a.0, b.0, probe.t);
            }
        }
    }
}

#[test]
fn detected_hits_agree_with_flux_on_small_grid() {
    // Crossings are recorded at the screen and the flux is nonnegative there.
    let c = small(8, 2000);
    let out = run(
        &c,
        &RunOptions {
            trajectories: true,
            flux: true,
            ..Default::default()
        },
    )
    .unwrap();
    let outcome = out.outcome.unwrap();
    for r in &outcome.records {
        if let Some(e) = r.event {
            assert_eq!(r.status, TrajectoryStatus::Detected);
            assert!(e.t_f > 0.0 && e.t_f <= c.solver.t_max);
        }
    }
    let region = c.region();
    let profile = out
        .flux
        .unwrap()
        .profile(&uniform_edges(region.x_lo, region.x_hi, 32), &uniform_edges(0.0, c.solver.t_max, 20))
        .unwrap();
    let total = profile.total();
    assert!((0.0..=1.0).contains(&total));
    // Transmitted fraction of trajectories tracks the transmitted flux.
    let t = outcome.summary.transmission();
    let sigma = (total * (1.0 - total) / 2000.0).sqrt();
    assert!((t - total).abs() < 4.0 * sigma + 0.01, "{t} vs {total}");
}

fn edges_strategy() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..1.0, 1..12).prop_map(|w| {
        let mut e = vec![-1.0];
        for d in w {
            let last = *e.last().unwrap();
            e.push(last + d);
        }
        e
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn histogram_conserves_events(
        xe in edges_strategy(),
        te in edges_strategy(),
        pts in prop::collection::vec((-3.0f64..8.0, -3.0f64..8.0), 0..200),
    ) {
        let events: Vec<_> = pts.iter().map(|&(x, t)| event(x, t)).collect();
        let h = build_histogram(&events, &xe, &te).unwrap();
        prop_assert_eq!(h.total() + h.overflow, events.len() as u64);
    }

    #[test]
    fn single_time_bin_is_the_position_marginal(
        xe in edges_strategy(),
        te in edges_strategy(),
        pts in prop::collection::vec((-1.0f64..3.0, -1.0f64..3.0), 1..200),
    ) {
        let events: Vec<_> = pts
            .iter()
            .map(|&(x, t)| event(x, t))
            .filter(|e| e.t_f >= te[0] && e.t_f <= *te.last().unwrap())
            .collect();
        let joint = build_histogram(&events, &xe, &te).unwrap();
        let whole = [te[0], *te.last().unwrap()];
        let flat = build_histogram(&events, &xe, &whole).unwrap();
        prop_assert_eq!(joint.marginal_x(), flat.marginal_x());
    }

    #[test]
    fn distance_ignores_count_scale(
        counts in prop::collection::vec(0u64..50, 12),
        flux in prop::collection::vec(0.0f64..1.0, 12),
        scale in 1u64..20,
    ) {
        prop_assume!(counts.iter().sum::<u64>() > 0 && flux.iter().sum::<f64>() > 0.0);
        let x_edges = uniform_edges(0.0, 1.0, 4);
        let t_edges = uniform_edges(0.0, 1.0, 3);
        let h = Histogram2D { x_edges: x_edges.clone(), t_edges: t_edges.clone(), counts: counts.clone(), overflow: 0 };
        let scaled = Histogram2D { counts: counts.iter().map(|c| c * scale).collect(), ..h.clone() };
        let f = FluxProfile { x_edges, t_edges, flux_density: flux };
        let a = flux_trajectory_distance(&h, &f).unwrap();
        let b = flux_trajectory_distance(&scaled, &f).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&a));
    }

    #[test]
    fn first_passage_is_the_earliest_crossing(
        steps in prop::collection::vec((-0.3f64..0.5, -0.2f64..0.2), 1..80),
        d in 0.5f64..3.0,
    ) {
        let mut samples = vec![TrajectorySample { t: 0.0, x: 0.0, z: 0.0 }];
        for (i, &(dz, dx)) in steps.iter().enumerate() {
            let last = *samples.last().unwrap();
            samples.push(TrajectorySample { t: 0.01 * (i + 1) as f64, x: last.x + dx, z: last.z + dz });
        }
        let traj = Trajectory { id: 3, samples: samples.clone(), status: TrajectoryStatus::Detected };
        match first_passage(&traj, d) {
            Some(e) => {
                let k = samples.iter().position(|s| s.z >= d).unwrap();
                prop_assert!(samples[..k].iter().all(|s| s.z < d));
                prop_assert!(e.t_f > samples[k - 1].t && e.t_f <= samples[k].t);
                prop_assert_eq!(e.trajectory_id, 3);
            }
            None => prop_assert!(samples.iter().all(|s| s.z < d)),
        }
    }

    #[test]
    fn static_potential_ignores_time(
        x in -4.0f64..4.0,
        z in -1.0f64..1.0,
        t1 in 0.0f64..5.0,
        t2 in 0.0f64..5.0,
        f in 0.0f64..=1.0,
    ) {
        let b = BarrierParams { schedule: SlitSchedule::Static { f }, ..preset("fig2").unwrap().barrier };
        prop_assert_eq!(potential(x, z, t1, &b), potential(x, z, t2, &b));
    }
}
