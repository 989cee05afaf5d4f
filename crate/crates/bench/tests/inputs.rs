use gareg_bench::{brute_nearest, random_cloud};

#[test]
fn clouds_are_seeded() {
    assert_eq!(random_cloud(100, 4).points, random_cloud(100, 4).points);
    assert_ne!(random_cloud(100, 4).points, random_cloud(100, 5).points);
}

#[test]
fn brute_force_prefers_first_duplicate() {
    let mut cloud = random_cloud(10, 1);
    cloud.points.push(cloud.points[3]);
    assert_eq!(brute_nearest(&cloud, &cloud.points[3]), (3, 0.0));
}
