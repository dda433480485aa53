//! Physics checks on the conduction solver against independent references.

use charuq::forward_model::{
    build_grid, extract_at_depth, solve, BackBc, Grid, MaterialParams, Scenario, SurfaceBc,
    SurfaceBcKind,
};

fn inert(mut p: MaterialParams) -> MaterialParams {
    p.log_a = [-100.0; 3];
    p
}

fn linear(mut p: MaterialParams) -> MaterialParams {
    p.k3_v = 0.0;
    p.k3_c = 0.0;
    inert(p)
}

fn scenario(thickness: f64, duration: f64, dt: f64, surface: SurfaceBc, back: BackBc) -> Scenario {
    Scenario {
        name: "physics".into(),
        thickness,
        duration,
        dt,
        surface_bc: surface,
        back_bc: back,
        initial_temperature: 290.0,
        tc_depths_mm: vec![],
        tc_labels: vec![],
    }
}

#[test]
fn adiabatic_uniform_state_is_preserved() {
    let grid = build_grid(100, 0.0254, 0.1).unwrap();
    let s = scenario(
        0.0254,
        20.0,
        0.1,
        SurfaceBc::constant(SurfaceBcKind::HeatFlux, 0.0, 20.0),
        BackBc::Adiabatic,
    );
    let field = solve(&s, &inert(MaterialParams::nominal()), &grid).unwrap();
    let worst = field
        .temperatures
        .iter()
        .map(|t| (t - 290.0).abs())
        .fold(0.0, f64::max);
    assert!(worst <= 1e-10, "max drift {worst} K");
}

#[test]
fn steady_state_profile_is_linear() {
    let thickness = 0.01;
    let grid = build_grid(40, thickness, 0.3).unwrap();
    let s = scenario(
        thickness,
        1000.0,
        1.0,
        SurfaceBc::constant(SurfaceBcKind::Temperature, 900.0, 1000.0),
        BackBc::FixedTemperature { value: 400.0 },
    );
    let field = solve(&s, &linear(MaterialParams::nominal()), &grid).unwrap();
    let last = field.n_times() - 1;
    for (x, t) in field.node_positions.iter().zip(field.temperature_row(last)) {
        let expected = 900.0 + (400.0 - 900.0) * x / thickness;
        assert!(((t - expected) / expected).abs() <= 1e-6, "x={x}: {t} vs {expected}");
    }
}

#[test]
fn discrete_energy_balance_with_flux_pulse() {
    let grid = build_grid(100, 0.0254, 0.1).unwrap();
    let bc = SurfaceBc::trapezoid_flux(1.2e5, 2.0, 27.0, 2.0, 60.0);
    let s = scenario(0.0254, 60.0, 0.1, bc.clone(), BackBc::Adiabatic);
    let params = MaterialParams::nominal();
    let field = solve(&s, &params, &grid).unwrap();

    // Independent accounting: the implicit step applies the flux at the end of
    // each step, and each node stores energy in half of each adjacent cell.
    let injected: f64 = (1..=s.n_steps()).map(|k| bc.value_at(k as f64 * s.dt) * s.dt).sum();
    let mut volume = vec![0.0; grid.n_nodes()];
    for (c, w) in grid.cell_widths.iter().enumerate() {
        volume[c] += w / 2.0;
        volume[c + 1] += w / 2.0;
    }
    let last = field.n_times() - 1;
    let stored: f64 = field
        .temperature_row(last)
        .iter()
        .zip(field.temperature_row(0))
        .zip(&volume)
        .map(|((t1, t0), v)| params.rho_cp * (t1 - t0) * v)
        .sum();
    let rel = ((stored - injected) / injected).abs();
    assert!(rel <= 1e-6, "stored {stored} vs injected {injected} (rel {rel:e})");
}

#[test]
fn char_fraction_never_decreases() {
    let grid = build_grid(60, 0.0254, 0.1).unwrap();
    let bc = SurfaceBc::trapezoid_flux(1.5e5, 2.0, 27.0, 2.0, 60.0);
    let s = scenario(0.0254, 60.0, 0.2, bc, BackBc::Adiabatic);
    let field = solve(&s, &MaterialParams::nominal(), &grid).unwrap();
    for i in 1..field.n_times() {
        for (now, before) in field.char_row(i).iter().zip(field.char_row(i - 1)) {
            assert!(now >= before);
            assert!((0.0..=1.0).contains(now));
        }
    }
    assert!(field.char_row(field.n_times() - 1)[0] > 0.5, "surface should char");
}

#[test]
fn solve_is_pure() {
    let grid = build_grid(50, 0.0254, 0.1).unwrap();
    let s = Scenario::default_ground();
    let grid_full = build_grid(50, s.thickness, 0.1).unwrap();
    let _ = grid;
    let a = solve(&s, &MaterialParams::nominal(), &grid_full).unwrap();
    let b = solve(&s, &MaterialParams::nominal(), &grid_full).unwrap();
    assert_eq!(a, b);
}

/// Forward-Euler reference for linear conduction, written independently of the
/// implicit solver (explicit flux form, cell-face conductances).
fn explicit_reference(s: &Scenario, p: &MaterialParams, grid: &Grid, probe: f64) -> f64 {
    let n = grid.n_nodes();
    let k = p.k0_v;
    let mut cap = vec![0.0; n];
    for (c, w) in grid.cell_widths.iter().enumerate() {
        cap[c] += p.rho_cp * w / 2.0;
        cap[c + 1] += p.rho_cp * w / 2.0;
    }
    let mut limit = f64::INFINITY;
    for j in 0..n {
        let mut g = 0.0;
        if j > 0 {
            g += k / grid.cell_widths[j - 1];
        }
        if j + 1 < n {
            g += k / grid.cell_widths[j];
        }
        limit = limit.min(cap[j] / g);
    }
    let steps = (s.duration / (0.25 * limit)).ceil() as usize;
    let h = s.duration / steps as f64;
    let mut t = vec![s.initial_temperature; n];
    let mut flux = vec![0.0; n - 1];
    for step in 0..steps {
        let time = step as f64 * h;
        for c in 0..n - 1 {
            flux[c] = -k * (t[c + 1] - t[c]) / grid.cell_widths[c];
        }
        let q = s.surface_bc.value_at(time);
        for j in 0..n {
            let inflow = if j == 0 { q } else { flux[j - 1] };
            let outflow = if j + 1 < n { flux[j] } else { 0.0 };
            t[j] += h * (inflow - outflow) / cap[j];
        }
    }
    let x = &grid.node_positions;
    let hi = x.partition_point(|&v| v <= probe).min(n - 1);
    let lo = hi - 1;
    let f = (probe - x[lo]) / (x[hi] - x[lo]);
    t[lo] + f * (t[hi] - t[lo])
}

fn implicit_probe(s: &Scenario, p: &MaterialParams, grid: &Grid, probe: f64) -> f64 {
    let field = solve(s, p, grid).unwrap();
    *extract_at_depth(&field, "probe", probe).unwrap().values.last().unwrap()
}

#[test]
fn agrees_with_explicit_reference_on_linear_conduction() {
    let thickness = 0.0254;
    let grid = build_grid(100, thickness, 0.1).unwrap();
    let params = linear(MaterialParams::nominal());
    let bc = SurfaceBc::trapezoid_flux(5e4, 2.0, 27.0, 2.0, 40.0);
    let fine = scenario(thickness, 40.0, 0.1 / 16.0, bc.clone(), BackBc::Adiabatic);
    let field = solve(&fine, &params, &grid).unwrap();
    let mut worst = 0.0f64;
    for probe in [0.0, 0.002, 0.005, 0.01] {
        let implicit = *extract_at_depth(&field, "p", probe).unwrap().values.last().unwrap();
        let reference = explicit_reference(&fine, &params, &grid, probe);
        worst = worst.max(((implicit - reference) / reference).abs());
    }
    assert!(worst <= 1e-4, "relative error {worst:e}");
}

#[test]
fn backward_euler_converges_at_first_order() {
    let thickness = 0.0254;
    let grid = build_grid(100, thickness, 0.1).unwrap();
    let params = MaterialParams::nominal();
    let bc = SurfaceBc::trapezoid_flux(1.2e5, 2.0, 27.0, 2.0, 40.0);
    let probe = 0.003;
    let values: Vec<f64> = [0.4, 0.2, 0.1]
        .iter()
        .map(|&dt| implicit_probe(&scenario(thickness, 40.0, dt, bc.clone(), BackBc::Adiabatic), &params, &grid, probe))
        .collect();
    let order = ((values[0] - values[1]) / (values[1] - values[2])).abs().log2();
    assert!(order >= 0.9, "observed order {order}");
}
