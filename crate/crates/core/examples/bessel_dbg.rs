fn main() {
    for z in [700.0f64, 800.0, 100.0, 30.0] {
        let ln = exitsim::numerics::bessel_i(0.0, z, true).unwrap();
        let approx = z - 0.5 * (2.0 * std::f64::consts::PI * z).ln();
        println!("z={z}: ln I_0 = {ln}, leading asymptotic = {approx}, diff = {}", ln - approx);
    }
}
