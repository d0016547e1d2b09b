//! Instances shared by several test targets.

use msst_core::geometry::{Point3, Vec3};

/// Eight points in the unit cube whose best MSST dipole and best 2-center
/// dipole differ.
pub fn divergent_instance() -> Vec<Point3> {
    [
        [0.7090754154265618, 0.46592172228961015, 0.6991432426747317],
        [0.0601711656341718, 0.8791107179586186, 0.5495312687894465],
        [0.8289844760239993, 0.9354265029131291, 0.8037816422279636],
        [0.1542912742358563, 0.8807117723618908, 0.7705537646353312],
        [0.5240550121500691, 0.350785883750684, 0.7645431566171185],
        [0.6426508889016375, 0.1896322453511623, 0.430820510254744],
        [0.6022785733582569, 0.8881954479890382, 0.835074518011928],
        [0.7631634492103198, 0.5180076563512743, 0.7513301700320302],
    ]
    .into_iter()
    .map(Vec3::from)
    .collect()
}
