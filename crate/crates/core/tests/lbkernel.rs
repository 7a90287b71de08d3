use lattice_decomp::exec::Exec;
use lattice_decomp::geometry::generate_box;
use lattice_decomp::lbkernel::{BoundaryParams, Kernel, LbState, DEFAULT_TAU};

mod common;
use common::{poiseuille_error, Gradient};

#[test]
fn poiseuille_midpoint_walls() {
    let e = poiseuille_error(32, 256, 0.5, Gradient::Nominal);
    assert!(e < 0.02, "{e}");
}

#[test]
fn interpolated_walls_place_no_slip_plane() {
    for q in [0.25, 0.8] {
        let e = poiseuille_error(32, 128, q, Gradient::Measured);
        assert!(e < 0.01, "q={q}: {e}");
    }
}

#[test]
fn closed_box_mass_drift() {
    let g = generate_box([12, 10, 8], [false; 3]).unwrap();
    let k = Kernel::new(&g, &BoundaryParams::new()).unwrap();
    let mut st = LbState::from_fn(g.len(), DEFAULT_TAU, |i| {
        let c = g.sites()[i].coord;
        let r = 1.0 + 0.01 * ((c[0] as f64 * 0.7).sin() + (c[1] as f64 * 0.3).cos());
        (r, [0.03, -0.02, 0.01])
    })
    .unwrap();
    let m0 = st.mass();
    k.run(&mut st, 1000, Exec::Parallel).unwrap();
    assert!(((st.mass() - m0) / m0).abs() < 1e-10);
}

#[test]
fn density_pulse_advects_with_flow() {
    // long enough that the sound fronts do not wrap around in 80 steps
    let g = generate_box([200, 2, 2], [true; 3]).unwrap();
    let k = Kernel::new(&g, &BoundaryParams::new()).unwrap();
    let u0 = 0.05;
    let centre = 100.0;
    let mut st = LbState::from_fn(g.len(), DEFAULT_TAU, |i| {
        let x = g.sites()[i].coord[0] as f64;
        (
            1.0 + 0.001 * (-(x - centre).powi(2) / 18.0).exp(),
            [u0, 0.0, 0.0],
        )
    })
    .unwrap();
    let centroid = |st: &LbState| {
        let (mut m, mut mx) = (0.0, 0.0);
        for (i, f) in st.f.iter().enumerate() {
            let d = f.iter().sum::<f64>() - 1.0;
            m += d;
            mx += d * g.sites()[i].coord[0] as f64;
        }
        mx / m
    };
    let mut prev = centroid(&st);
    for _ in 0..4 {
        k.run(&mut st, 20, Exec::Sequential).unwrap();
        let c = centroid(&st);
        assert!(c > prev, "pulse did not move downstream");
        assert!(
            ((c - prev) - 20.0 * u0).abs() < 0.1 * 20.0 * u0,
            "moved {}",
            c - prev
        );
        prev = c;
    }
}
