use epinn::fields::*;
use epinn::fields::magnetic::q_on_grid;

fn run(tag: &str, cfg: &MagneticConfig, xi: [f64;4]) {
    let geom = InductorGeometry::new(xi).unwrap();
    let (a, m) = solve_magnetic(&geom, cfg).unwrap();
    let plate_grid = Grid2::uniform(0.0, 0.12, 241, 0.0, 0.014, 29).unwrap();
    let q = q_on_grid(&a, &m, cfg.omega(), &plate_grid).unwrap();
    let power = total_induced_power(&q);
    let t = solve_thermal_fd(&q, 60.0, 50.0, 50.0).unwrap();
    let top: Vec<f64> = (0..200).map(|j| t.interpolate(0.12 * j as f64 / 199.0, 0.014).unwrap()).collect();
    let tmin = top.iter().cloned().fold(f64::INFINITY, f64::min);
    let tmax = top.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    println!("{tag} xi={:?}: P={:.0} W/m, top edge [{:.0},{:.0}] C", xi, power, tmin, tmax);
}

fn main() {
    for (w, h, fx, fy) in [(0.006, 0.006, 2.0e-3, 1.5e-3), (0.004, 0.004, 1.0e-3, 1.0e-3), (0.008, 0.008, 2.0e-3, 2.0e-3)] {
        let cfg = MagneticConfig { turn_width: w, turn_height: h, fine_hx: fx, fine_hy: fy, ..Default::default() };
        println!("--- turn {}x{} mm", w*1e3, h*1e3);
        run("  ", &cfg, [5.0;4]);
        run("  ", &cfg, [15.0;4]);
        run("  ", &cfg, [5.0, 5.0, 11.4, 15.0]);
    }
}
