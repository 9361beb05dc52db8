//! Acceptance suite: one test per release criterion, each ending in a single
//! PASS line (run with `--nocapture` to see them). Every derived quantity is
//! checked against an independent oracle computed inside this file.

use affine_swarm::affine::{
    barycentric_weights, containment_fn, deformation_matrix, leader_coefficients,
    DeformationFeatures,
};
use affine_swarm::pipeline::{run_pipeline, PipelineFlags};
use affine_swarm::planner::astar::astar_cells;
use affine_swarm::planner::safety::safety_bounds;
use affine_swarm::planner::travel_time::{horizon_deviation, SolveSettings};
use affine_swarm::planner::{InflatedGrid, OccupancyGrid};
use affine_swarm::scenario::load_scenario;
use affine_swarm::sim::{check_gain_stability, closed_loop_roots, routh_stable};
use affine_swarm::topology::{assemble_matrices, certify_stability, compute_h, Formation};
use affine_swarm::vehicle::{
    feedback_linearize, linearization_terms, step_rk4, Gains, OuterCommand, QuadParams, QuadState,
};
use affine_swarm::{Mat3, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::PathBuf;

fn workspace_path(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .parent()
        .unwrap()
        .parent()
        .unwrap()
        .join(rel)
}

/// Criterion 1: the eigenvalue safety window reproduces the reference
/// separation bound, and inverting the containment bound recovers the
/// reference ball radius.
#[test]
fn eigenvalue_window_reference_values() {
    let delta = 0.115;
    let epsilon = 0.1;

    // Two agents separated by exactly d_min along the primary axis.
    let d0 = Vec3::new(0.0, 0.0, 5.0);
    let d_min = 0.4387;
    let p = Vec3::new(d_min / 2.0, 0.0, 0.0);
    let bounds = safety_bounds(&[d0 + p, d0 - p], &d0, delta, epsilon, 100.0, 0.0, 0.0).unwrap();
    assert!(
        (bounds.lambda_min - 0.98017).abs() <= 1e-4,
        "lambda_min = {} (want 0.98017 +- 1e-4)",
        bounds.lambda_min
    );

    // Invert the containment bound: find r_max giving lambda_max = 1.1243
    // when the farthest agent sits 38.0555 m from the center.
    let d_max = 38.0555;
    let q = Vec3::new(d_max, 0.0, 0.0);
    let lambda_max_of = |r_max: f64| {
        safety_bounds(&[d0 + q, d0 - q], &d0, delta, epsilon, r_max, 0.0, 0.0)
            .unwrap()
            .lambda_max
    };
    let (mut lo, mut hi) = (1.0, 200.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if lambda_max_of(mid) < 1.1243 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let r_max = 0.5 * (lo + hi);
    assert!(
        (r_max - 43.0).abs() <= 0.1,
        "inverted r_max = {r_max} (want 43.0 +- 0.1)"
    );
    println!("PASS eigenvalue_window_reference_values: lambda_min = {:.5}, inverted r_max = {:.3}", bounds.lambda_min, r_max);
}

/// Criterion 2: equal stretch eigenvalues make the stretch matrix isotropic,
/// independent of the stretch-axis angles.
#[test]
fn equal_eigenvalues_give_isotropic_stretch() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let lambda = rng.gen_range(0.2..3.0);
        let b4 = rng.gen_range(-3.1..3.1);
        let b5 = rng.gen_range(-3.1..3.1);
        let b6 = rng.gen_range(-3.1..3.1);
        let theta = DeformationFeatures::new([lambda; 3], [0.0, 0.0, 0.0, b4, b5, b6]);
        let q = deformation_matrix(&theta);
        let diff = q - Mat3::identity() * lambda;
        worst = worst.max(diff.abs().max());
    }
    assert!(worst < 1e-12, "max |U_D - lambda I| = {worst}");
    println!("PASS equal_eigenvalues_give_isotropic_stretch: max deviation {worst:.3e} over 1000 samples");
}

/// Random planar formation: three leaders spanning a triangle, followers
/// strictly inside it, N <= 30 total, pairwise separation kept above 0.15.
fn random_planar_formation(rng: &mut ChaCha8Rng) -> Formation {
    loop {
        let z = rng.gen_range(1.0..10.0);
        let leaders = [
            Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), z),
            Vec3::new(rng.gen_range(6.0..10.0), rng.gen_range(-1.0..1.0), z),
            Vec3::new(rng.gen_range(-1.0..4.0), rng.gen_range(6.0..10.0), z),
        ];
        let e1 = leaders[1] - leaders[0];
        let e2 = leaders[2] - leaders[0];
        if e1.cross(&e2).norm() < 5.0 {
            continue;
        }
        let mut pts = leaders.to_vec();
        let n_followers = rng.gen_range(3..=27);
        let mut give_up = false;
        for _ in 0..n_followers {
            let mut placed = false;
            for _ in 0..100 {
                let mut w = [
                    rng.gen_range(0.08..1.0),
                    rng.gen_range(0.08..1.0),
                    rng.gen_range(0.08..1.0),
                ];
                let s: f64 = w.iter().sum();
                w.iter_mut().for_each(|x| *x /= s);
                let p = leaders[0] * w[0] + leaders[1] * w[1] + leaders[2] * w[2];
                if pts.iter().all(|q| (q - p).norm() > 0.15) {
                    pts.push(p);
                    placed = true;
                    break;
                }
            }
            if !placed {
                give_up = true;
                break;
            }
        }
        if give_up {
            continue;
        }
        match Formation::new(pts, vec![0, 1, 2], 2) {
            Ok(f) => return f,
            Err(_) => continue,
        }
    }
}

/// Criterion 3: the topology solve -L^{-1} L0 agrees with the independent
/// leader-coefficient (barycentric over the leader simplex) solve.
#[test]
fn leader_coefficients_match_topology_solve() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let f = random_planar_formation(&mut rng);
        let topo = assemble_matrices(&f).unwrap();
        let h = compute_h(&topo).unwrap();
        let h_alpha = leader_coefficients(&f.positions, &f.leader_positions(), 2).unwrap();
        for (row, &agent) in topo.order.iter().enumerate() {
            for c in 0..3 {
                worst = worst.max((h[(row, c)] - h_alpha[(agent, c)]).abs());
            }
        }
    }
    assert!(worst < 1e-8, "max |H - H_alpha| = {worst}");
    println!("PASS leader_coefficients_match_topology_solve: max entry error {worst:.3e} over 100 formations");
}

/// Criterion 4: every formation whose followers are strictly inside their
/// in-neighbor simplices certifies as stable: rho(G) < 1 and L Hurwitz.
#[test]
fn topology_spectral_certificates() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..100 {
        let f = random_planar_formation(&mut rng);
        let topo = assemble_matrices(&f).unwrap();
        let report = certify_stability(&topo);
        assert!(
            !report.negative_weights,
            "generator should only build strictly-interior followers"
        );
        assert!(report.rho_g < 1.0, "rho(G) = {}", report.rho_g);
        assert!(report.hurwitz, "L not Hurwitz: eigs {:?}", report.l_eigs);
        let max_re = report
            .l_eigs
            .iter()
            .map(|e| e.0)
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(max_re < 0.0, "max Re eig(L) = {max_re}");
    }
    println!("PASS topology_spectral_certificates: rho(G) < 1 and L Hurwitz on 100 formations");
}

/// Criterion 5: the signed-determinant containment function agrees with a
/// barycentric-coordinate oracle on 10^4 random (simplex, point) pairs.
#[test]
fn containment_matches_barycentric_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let v3 = |rng: &mut ChaCha8Rng, s: f64| {
        Vec3::new(
            rng.gen_range(-s..s),
            rng.gen_range(-s..s),
            rng.gen_range(-s..s),
        )
    };
    let mut checked = 0usize;
    while checked < 10_000 {
        let n = if checked % 5 < 3 { 3 } else { 2 };
        let verts: Vec<Vec3> = (0..=n).map(|_| v3(&mut rng, 1.5)).collect();
        // Reject flat simplices so facet distances stay well above 1e-6.
        let vol = match n {
            3 => (verts[1] - verts[0])
                .cross(&(verts[2] - verts[0]))
                .dot(&(verts[3] - verts[0]))
                .abs(),
            _ => (verts[1] - verts[0]).cross(&(verts[2] - verts[0])).norm(),
        };
        if vol < 0.3 {
            continue;
        }
        // Build the query point from signed barycentric weights with a
        // guaranteed margin from every facet.
        let inside = rng.gen_bool(0.5);
        let mut w: Vec<f64> = (0..=n).map(|_| rng.gen_range(0.05..1.0)).collect();
        if !inside {
            let k = rng.gen_range(0..=n);
            w[k] = -rng.gen_range(0.05..0.6);
        }
        let s: f64 = w.iter().sum();
        if s.abs() < 0.3 {
            continue;
        }
        w.iter_mut().for_each(|x| *x /= s);
        if w.iter().any(|x| x.abs() < 0.01) {
            continue;
        }
        let point = verts
            .iter()
            .zip(&w)
            .map(|(v, &wi)| v * wi)
            .sum::<Vec3>();

        let oracle_w = barycentric_weights(&verts, &point, n).unwrap();
        let oracle_inside = oracle_w.iter().all(|&x| x > 0.0);
        let kappa = containment_fn(&verts, &point, n).unwrap();
        let fn_inside = kappa.unsigned_abs() as usize == n + 1;
        assert_eq!(
            fn_inside, oracle_inside,
            "disagreement: kappa = {kappa}, weights = {oracle_w:?}"
        );
        checked += 1;
    }
    println!("PASS containment_matches_barycentric_oracle: 10000 pairs, zero disagreements");
}

/// Dijkstra oracle over the same inflated grid and 26-connected moves used
/// by the planner.
fn dijkstra_cost(
    inflated: &InflatedGrid,
    dims: [usize; 3],
    cell_size: f64,
    start: [usize; 3],
    goal: [usize; 3],
) -> Option<f64> {
    use std::cmp::Reverse;
    use std::collections::BinaryHeap;
    let idx = |c: [usize; 3]| c[0] + dims[0] * (c[1] + dims[1] * c[2]);
    let num = dims[0] * dims[1] * dims[2];
    let mut dist = vec![f64::INFINITY; num];
    let mut heap: BinaryHeap<Reverse<(u64, usize)>> = BinaryHeap::new();
    // Order keys: IEEE bits of non-negative f64 are monotone in value.
    let key = |d: f64| d.to_bits();
    dist[idx(start)] = 0.0;
    heap.push(Reverse((key(0.0), idx(start))));
    let cell_of = |i: usize| [i % dims[0], (i / dims[0]) % dims[1], i / (dims[0] * dims[1])];
    while let Some(Reverse((k, i))) = heap.pop() {
        if k > key(dist[i]) {
            continue;
        }
        if i == idx(goal) {
            return Some(dist[i] * cell_size);
        }
        let c = cell_of(i);
        for dx in -1i64..=1 {
            for dy in -1i64..=1 {
                for dz in -1i64..=1 {
                    if dx == 0 && dy == 0 && dz == 0 {
                        continue;
                    }
                    let n = [c[0] as i64 + dx, c[1] as i64 + dy, c[2] as i64 + dz];
                    if n.iter().any(|&x| x < 0)
                        || n[0] >= dims[0] as i64
                        || n[1] >= dims[1] as i64
                        || n[2] >= dims[2] as i64
                    {
                        continue;
                    }
                    let nc = [n[0] as usize, n[1] as usize, n[2] as usize];
                    if !inflated.is_free(nc) {
                        continue;
                    }
                    let step = ((dx * dx + dy * dy + dz * dz) as f64).sqrt();
                    let nd = dist[i] + step;
                    let ni = idx(nc);
                    if nd < dist[ni] {
                        dist[ni] = nd;
                        heap.push(Reverse((key(nd), ni)));
                    }
                }
            }
        }
    }
    None
}

/// Criterion 6: the A* planner is cost-optimal — it matches a Dijkstra
/// oracle on 50 random 64^3 grids at 20% occupancy.
#[test]
fn astar_matches_dijkstra() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let dims = [64usize, 64, 64];
    let mut solved = 0usize;
    for trial in 0..50 {
        let mut grid = OccupancyGrid::empty(Vec3::zeros(), 1.0, dims);
        for x in 0..dims[0] {
            for y in 0..dims[1] {
                for z in 0..dims[2] {
                    if rng.gen_bool(0.2) {
                        grid.set_occupied([x, y, z], true);
                    }
                }
            }
        }
        let inflated = InflatedGrid::new(&grid, 0.0);
        let mut free_cell = || loop {
            let c = [
                rng.gen_range(0..dims[0]),
                rng.gen_range(0..dims[1]),
                rng.gen_range(0..dims[2]),
            ];
            if inflated.is_free(c) {
                break c;
            }
        };
        let start = free_cell();
        let goal = free_cell();
        let oracle = dijkstra_cost(&inflated, dims, 1.0, start, goal);
        match astar_cells(&inflated, start, goal) {
            Ok((_, cost)) => {
                let want = oracle.unwrap_or_else(|| panic!("trial {trial}: A* found a path the oracle did not"));
                assert!(
                    (cost - want).abs() < 1e-9,
                    "trial {trial}: A* cost {cost} vs Dijkstra {want}"
                );
                solved += 1;
            }
            Err(_) => assert!(oracle.is_none(), "trial {trial}: A* missed an existing path"),
        }
    }
    assert!(solved >= 40, "only {solved}/50 trials were connected");
    println!("PASS astar_matches_dijkstra: {solved}/50 connected trials, costs equal to 1e-9");
}

/// Criterion 7: the input map inversion is exact — the commanded snap equals
/// the finite-differenced fourth position derivative of the nonlinear rigid
/// body flown under the inverted input.
#[test]
fn feedback_linearization_snap_exact() {
    let params = QuadParams::new(1.2, Vec3::new(0.015, 0.017, 0.021));
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    let mut checked = 0usize;
    while checked < 100 {
        let state = QuadState {
            r: Vec3::new(
                rng.gen_range(-5.0..5.0),
                rng.gen_range(-5.0..5.0),
                rng.gen_range(-5.0..5.0),
            ),
            v: Vec3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            ),
            euler: Vec3::new(
                rng.gen_range(-0.25..0.25),
                rng.gen_range(-0.25..0.25),
                rng.gen_range(-0.25..0.25),
            ),
            omega: Vec3::new(
                rng.gen_range(-0.3..0.3),
                rng.gen_range(-0.3..0.3),
                rng.gen_range(-0.3..0.3),
            ),
            p: params.hover_thrust() * rng.gen_range(0.8..1.2),
            p_dot: rng.gen_range(-0.5..0.5),
        };
        if linearization_terms(&state, &params).is_err() {
            continue;
        }
        let cmd = OuterCommand {
            s: Vec3::new(
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
            ),
            u_psi: rng.gen_range(-1.0..1.0),
        };
        let input = match feedback_linearize(&state, &cmd, &params) {
            Ok(u) => u,
            Err(_) => continue,
        };
        // Five-point stencil over a 0.1 s window centered on the state where
        // the input was inverted; constant input, RK4 substeps of 1e-4 s.
        let h = 0.025;
        let substeps = 250;
        let dt = h / substeps as f64;
        let propagate = |n: i64| -> Option<Vec3> {
            let mut s = state;
            let step = if n < 0 { -dt } else { dt };
            for _ in 0..(n.abs() * substeps) {
                s = step_rk4(&s, &input, &params, step).ok()?;
            }
            Some(s.r)
        };
        let (Some(m2), Some(m1), Some(p1), Some(p2)) =
            (propagate(-2), propagate(-1), propagate(1), propagate(2))
        else {
            continue;
        };
        let s_obs = (m2 - m1 * 4.0 + state.r * 6.0 - p1 * 4.0 + p2) / h.powi(4);
        let rel = (s_obs - cmd.s).norm() / (1.0 + cmd.s.norm());
        worst = worst.max(rel);
        assert!(rel < 1e-3, "relative snap error {rel} (cmd {:?})", cmd.s);
        checked += 1;
    }
    println!("PASS feedback_linearization_snap_exact: worst relative error {worst:.3e} over 100 states");
}

/// Criterion 8: end-to-end desk-scale maneuver — finite minimal travel time,
/// and the nonlinear closed loop honors every safety bound at that time while
/// one second less breaks the deviation budget.
#[test]
fn end_to_end_min_time_maneuver() {
    let scenario = load_scenario(&workspace_path("scenarios/desk_9_agent.json")).unwrap();
    let start = std::time::Instant::now();
    let (report, art) = run_pipeline(&scenario, &PipelineFlags::default());
    let elapsed = start.elapsed();
    assert!(report.success(), "pipeline failed: {:?}", report.failed_stage);
    let tf = report.tf.expect("solved horizon");
    assert!(tf.is_finite() && tf > 0.0);
    let audit = art.audit.as_ref().expect("audit report");
    for check in &audit.checks {
        assert!(check.pass, "audit check {} failed: worst {} vs threshold {}", check.name, check.worst_value, check.threshold);
    }
    assert!(elapsed.as_secs_f64() < 300.0, "run took {elapsed:?}");

    // Minimality at 1 s resolution: at tf - 1 both the linear error model
    // and the nonlinear closed loop exceed the deviation budget the solver
    // enforced.
    let solution = art.travel_time.as_ref().expect("travel-time solution");
    let plan = art.plan.as_ref().expect("final plan");
    let topo = art.topology.as_ref().expect("topology");
    let leaders = scenario.formation.leader_positions();
    let linear_below = horizon_deviation(
        plan,
        topo,
        &leaders,
        &scenario.gains,
        tf - 1.0,
        SolveSettings::default().base_dt,
    )
    .unwrap();
    assert!(
        linear_below > solution.budget,
        "linear deviation at tf - 1 = {linear_below} does not exceed budget {}",
        solution.budget
    );
    let (report2, art2) = run_pipeline(
        &scenario,
        &PipelineFlags {
            tf: Some(tf - 1.0),
            ..Default::default()
        },
    );
    assert!(report2.failed_stage.is_none());
    let dev2 = art2
        .audit
        .as_ref()
        .unwrap()
        .checks
        .iter()
        .find(|c| c.name == "tracking_deviation")
        .unwrap()
        .worst_value;
    assert!(
        dev2 > solution.budget,
        "nonlinear deviation at tf - 1 = {dev2} does not exceed budget {}",
        solution.budget
    );
    println!("PASS end_to_end_min_time_maneuver: tf = {tf} s, audit clean, tf - 1 infeasible ({elapsed:?})");
}

/// Criterion 9: gain certificates — the reference stable and unstable tuples
/// classify correctly, and the algebraic stability test agrees with explicit
/// root-finding on 1000 random positive tuples.
#[test]
fn gain_stability_routh_vs_roots() {
    let reference = Gains {
        k1: 4.0,
        k2: 6.0,
        k3: 4.0,
        k4: 1.0,
        k_psi1: 2.0,
        k_psi2: 1.0,
    };
    let rep = check_gain_stability(&reference);
    assert!(rep.stable, "reference gains must be stable");
    for root in closed_loop_roots(&reference) {
        // A quadruple root conditions the root-finder to ~eps^(1/4).
        assert!(
            (root - nalgebra::Complex::new(-1.0, 0.0)).norm() < 5e-3,
            "root {root} not at -1"
        );
    }
    let all_ones = Gains {
        k1: 1.0,
        k2: 1.0,
        k3: 1.0,
        k4: 1.0,
        k_psi1: 1.0,
        k_psi2: 1.0,
    };
    assert!(!check_gain_stability(&all_ones).stable, "(1,1,1,1) must be unstable");

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut checked = 0usize;
    while checked < 1000 {
        let g = Gains {
            k1: rng.gen_range(0.05..5.0),
            k2: rng.gen_range(0.05..5.0),
            k3: rng.gen_range(0.05..5.0),
            k4: rng.gen_range(0.05..5.0),
            k_psi1: 1.0,
            k_psi2: 1.0,
        };
        let roots = closed_loop_roots(&g);
        let max_re = roots.iter().map(|r| r.re).fold(f64::NEG_INFINITY, f64::max);
        if max_re.abs() < 1e-6 {
            continue; // numerically on the stability boundary
        }
        assert_eq!(
            routh_stable(&g),
            max_re < 0.0,
            "verdict mismatch for {g:?}: max Re root = {max_re}"
        );
        checked += 1;
    }
    println!("PASS gain_stability_routh_vs_roots: reference tuples classified, 1000 random tuples agree");
}

/// Criterion 10: end-to-end runs are deterministic — trajectory CSVs are
/// byte-identical across repeated runs and thread counts.
#[test]
fn deterministic_output_across_threads() {
    let exe = env!("CARGO_BIN_EXE_affine-swarm");
    let scenario = workspace_path("scenarios/desk_9_agent.json");
    let run = |threads: &str| {
        let dir = tempfile::tempdir().unwrap();
        let status = std::process::Command::new(exe)
            .args([
                "run",
                "--scenario",
                scenario.to_str().unwrap(),
                "--out",
                dir.path().to_str().unwrap(),
                "--threads",
                threads,
            ])
            .status()
            .unwrap();
        assert!(status.success(), "run with --threads {threads} failed");
        std::fs::read(dir.path().join("trajectory.csv")).unwrap()
    };
    let one = run("1");
    let four = run("4");
    assert!(!one.is_empty());
    assert_eq!(one, four, "trajectory CSVs differ between thread counts");
    println!("PASS deterministic_output_across_threads: {} bytes identical across --threads 1 and 4", one.len());
}
