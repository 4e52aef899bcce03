// Order-independent floating-point sums.

use tracegrind::sum::ExactSum;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let values = [1e16, 1.0, -1e16, 3.5, 1e-3, 2.0e-17];
    let naive: f64 = values.iter().sum();
    let exact: f64 = values.iter().copied().collect::<ExactSum>().value();
    println!("naive {naive} exact {exact}");

    let mut reversed: Vec<f64> = values.to_vec();
    reversed.reverse();
    assert_eq!(reversed.into_iter().collect::<ExactSum>().value(), exact);

    // Split, sum the halves separately, merge.
    let mut left: ExactSum = values[..2].iter().copied().collect();
    let right: ExactSum = values[2..].iter().copied().collect();
    left.merge(&right);
    assert_eq!(left.value(), exact);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
