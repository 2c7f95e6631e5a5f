use crate::model::{close, Pose, Shape};

const YAW_TOL_DEG: f64 = 10.0;

/// Whether the executed pose counts as a correct placement of the nominal one.
///
/// Horizontal error within a quarter of the narrower footprint side, vertical
/// error within a quarter of the height, yaw within 10° up to the footprint's
/// rotational symmetry.
pub fn placement_correct(nominal: &Pose, actual: &Pose, dims: [f64; 3], shape: Shape) -> bool {
    let [dx, dy, dz] = dims;
    let ex = actual.position[0] - nominal.position[0];
    let ey = actual.position[1] - nominal.position[1];
    let horizontal = (ex * ex + ey * ey).sqrt();
    let vertical = (actual.position[2] - nominal.position[2]).abs();
    if horizontal > 0.25 * dx.min(dy) || vertical > 0.25 * dz {
        return false;
    }
    let period = match shape {
        Shape::Cylinder if close(dx, dy) => return true,
        _ if close(dx, dy) => 90.0,
        _ => 180.0,
    };
    let diff = (actual.yaw_deg - nominal.yaw_deg).rem_euclid(period);
    diff.min(period - diff) <= YAW_TOL_DEG
}

#[cfg(test)]
mod tests {
    use super::*;

    const CUBE: [f64; 3] = [0.04, 0.04, 0.04];

    #[test]
    fn identical_poses() {
        let p = Pose::new([0.0, 0.0, 0.02], 10.0);
        assert!(placement_correct(&p, &p, CUBE, Shape::Cuboid));
    }

    #[test]
    fn square_footprint_is_quarter_turn_symmetric() {
        let a = Pose::new([0.0, 0.0, 0.02], 0.0);
        let b = Pose::new([0.0, 0.0, 0.02], 90.0);
        assert!(placement_correct(&a, &b, CUBE, Shape::Cuboid));
        let c = Pose::new([0.0, 0.0, 0.02], 45.0);
        assert!(!placement_correct(&a, &c, CUBE, Shape::Cuboid));
        // A long block only has half-turn symmetry.
        assert!(!placement_correct(&a, &b, [0.08, 0.02, 0.02], Shape::Cuboid));
        let d = Pose::new([0.0, 0.0, 0.02], 185.0);
        assert!(placement_correct(&a, &d, [0.08, 0.02, 0.02], Shape::Cuboid));
        // Upright cylinders ignore yaw.
        assert!(placement_correct(&a, &c, [0.04, 0.04, 0.04], Shape::Cylinder));
    }

    #[test]
    fn lateral_error_threshold() {
        let a = Pose::new([0.0, 0.0, 0.02], 0.0);
        assert!(!placement_correct(&a, &Pose::new([0.02, 0.0, 0.02], 0.0), CUBE, Shape::Cuboid));
        assert!(placement_correct(&a, &Pose::new([0.0099, 0.0, 0.02], 0.0), CUBE, Shape::Cuboid));
        assert!(!placement_correct(&a, &Pose::new([0.0, 0.0, 0.0311], 0.0), CUBE, Shape::Cuboid));
    }
}
