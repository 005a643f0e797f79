use probscale::scaling::{discard_index, learning_sample_size, scaling_sample_size, ConstantMode, LEARNING_EPS_MAX};

use crate::CliError;

pub fn run(epsilon: f64, delta: f64, nxi: Option<usize>, rows: usize) -> Result<(), CliError> {
    for (name, v) in [("eps", epsilon), ("delta", delta)] {
        if !(v > 0.0 && v < 1.0) {
            return Err(CliError::Config(format!("--{name} must lie in (0, 1), got {v}")));
        }
    }
    if rows == 0 {
        return Err(CliError::Config("--rows must be at least 1".into()));
    }
    println!("{:<28}{}", "epsilon", epsilon);
    println!("{:<28}{}", "delta", delta);
    for (label, mode) in [
        ("exact", ConstantMode::Exact),
        ("conservative", ConstantMode::Conservative),
    ] {
        let n = scaling_sample_size(epsilon, delta, mode);
        println!("{:<28}{}", format!("N_gamma ({label})"), n);
        println!("{:<28}{}", format!("r ({label})"), discard_index(epsilon, n));
    }
    let Some(nxi) = nxi else { return Ok(()) };
    match learning_sample_size(nxi, epsilon, delta, rows) {
        Ok(n) => {
            println!("{:<28}{}", format!("N_LT (n_xi = {nxi}, p = {rows})"), n);
            Ok(())
        }
        Err(_) => {
            println!("{:<28}unavailable", format!("N_LT (n_xi = {nxi}, p = {rows})"));
            Err(CliError::Config(format!(
                "the learning bound needs eps < {LEARNING_EPS_MAX}; the scaling sizes above are still valid"
            )))
        }
    }
}
