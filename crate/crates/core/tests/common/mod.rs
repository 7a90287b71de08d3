use lattice_decomp::exec::Exec;
use lattice_decomp::geometry::{generate_channel, ChannelSpec};
use lattice_decomp::lattice::CS2;
use lattice_decomp::lbkernel::{BoundaryParams, Kernel, LbState, Scratch, DEFAULT_TAU};

#[derive(Clone, Copy)]
#[allow(dead_code)]
pub enum Gradient {
    /// `cs^2 * (rho_in - rho_out) / length`
    Nominal,
    /// From the mean density at quarter and three-quarter length.
    Measured,
}

/// Pressure-driven channel flow; relative L2 error of the streamwise velocity
/// at mid-length against the analytic parabola with walls `wall_q` beyond
/// the first and last rows.
pub fn poiseuille_error(width: u32, length: u32, wall_q: f64, gradient: Gradient) -> f64 {
    let g = generate_channel(&ChannelSpec {
        width,
        length,
        depth: 1,
        wall_q,
    })
    .unwrap();
    let (rho_in, rho_out) = (1.001, 0.999);
    let bp = BoundaryParams::new().with(0, rho_in).with(1, rho_out);
    let k = Kernel::new(&g, &bp).unwrap();
    let mut st = k.rest_state(DEFAULT_TAU).unwrap();
    let mut scratch = Scratch::default();
    let nu = (DEFAULT_TAU - 0.5) / 3.0;
    let (y0, y1) = (-wall_q, width as f64 - 1.0 + wall_q);
    let column = |x: u32| -> Vec<usize> {
        (0..g.len())
            .filter(|&i| g.sites()[i].coord[0] == x)
            .collect()
    };
    let mid = column(length / 2);
    let error = |st: &LbState| {
        let mut st = st.clone();
        st.refresh_moments();
        let grad = match gradient {
            Gradient::Nominal => CS2 * (rho_in - rho_out) / length as f64,
            Gradient::Measured => {
                let mean = |x: u32| {
                    let c = column(x);
                    c.iter().map(|&i| st.rho[i]).sum::<f64>() / c.len() as f64
                };
                CS2 * (mean(length / 4) - mean(3 * length / 4)) / (length / 2) as f64
            }
        };
        let (mut num, mut den) = (0.0, 0.0);
        for &i in &mid {
            let y = g.sites()[i].coord[1] as f64;
            let a = grad * (y - y0) * (y1 - y) / (2.0 * nu);
            num += (st.u[i][0] - a).powi(2);
            den += a * a;
        }
        (num / den).sqrt()
    };
    let mut last = f64::INFINITY;
    for chunk in 0..20 {
        for _ in 0..1000 {
            k.step(&mut st, &mut scratch, Exec::Parallel).unwrap();
        }
        let e = error(&st);
        if chunk > 4 && (e - last).abs() < 1e-6 {
            return e;
        }
        last = e;
    }
    last
}
