//! The building blocks on their own: a calibrator, a lattice with one
//! monotone axis, and the projection that restores monotonicity after an
//! unconstrained update.

use lattice_sqr::monotonic::{calibrate, lattice_forward, project_monotone, Calibrator, ConstrainedLinear, Lattice};
use lattice_sqr::numerics::SeededRng;

fn main() -> lattice_sqr::Result<()> {
    // Piecewise-linear map of [-1, 1] onto [0, 1] with 5 keypoints.
    let mut c = Calibrator::linear("c", 5, (-1.0, 1.0), (0.0, 1.0), true)?;
    c.output_mut().values_mut().copy_from_slice(&[0.0, 0.6, 0.4, 0.8, 1.0]);
    println!("calibrator outputs before projection {:?}", c.output().values());
    project_monotone(c.output_mut());
    println!("calibrator outputs after projection  {:?}", c.output().values());
    println!("calibrated grid {:?}", calibrate(&c, &[-1.0, -0.25, 0.0, 0.5, 1.0]));

    // 2-D lattice with 3 keypoints per axis, monotone along axis 1.
    let mut rng = SeededRng::new(3);
    let theta: Vec<f64> = (0..9).map(|_| rng.normal()).collect();
    let mut l = Lattice::new("l", 2, 3, vec![1], theta)?;
    let sweep = |l: &Lattice| -> lattice_sqr::Result<Vec<f64>> {
        (0..=4).map(|i| lattice_forward(l, &[0.3, i as f64 / 4.0])).collect()
    };
    println!("lattice along axis 1, random theta:    {:.3?}", sweep(&l)?);
    project_monotone(l.theta_mut());
    println!("lattice along axis 1, projected theta: {:.3?}", sweep(&l)?);
    // Vertex (2, 1) sits at flat index 2 + 1 * 3.
    println!(
        "at vertex (2, 1): {:.3}, theta[5] = {:.3}",
        lattice_forward(&l, &[1.0, 0.5])?,
        l.theta().values()[5]
    );

    // Nonnegative weights on the first input keep the output monotone in it.
    let mut cl = ConstrainedLinear::new("cl", vec![-0.5, 2.0], vec![1.0, -1.0], vec![0.0, 0.0])?;
    project_monotone(cl.blocks_mut()[0]);
    println!("constrained weights after projection {:?}", cl.monotone_weights().values());
    Ok(())
}
