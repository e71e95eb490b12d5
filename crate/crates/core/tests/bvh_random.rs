use proptest::prelude::*;
use sbr_core::bvh::{BuildParams, Bvh};
use sbr_core::geometry::ray_triangle_intersect;
use sbr_core::{Mesh, Triangle, Vec3};

fn brute_force(mesh: &Mesh, o: Vec3, d: Vec3) -> Option<(f64, usize)> {
    let mut best: Option<(f64, usize)> = None;
    for (i, t) in mesh.triangles().iter().enumerate() {
        if let Some((tt, _)) = ray_triangle_intersect(o, d, t, 0.0, f64::INFINITY) {
            if best.map_or(true, |(bt, _)| tt < bt) {
                best = Some((tt, i));
            }
        }
    }
    best
}

fn point() -> impl Strategy<Value = Vec3> {
    (-5.0f64..5.0, -5.0f64..5.0, -5.0f64..5.0).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

fn soup() -> impl Strategy<Value = Mesh> {
    proptest::collection::vec((point(), point(), point()), 1..300).prop_filter_map(
        "needs a non-degenerate triangle",
        |tris| {
            let tris: Vec<_> = tris
                .into_iter()
                .filter_map(|(a, b, c)| Triangle::new(a, b, c))
                .collect();
            Mesh::from_triangles(tris, "soup").ok()
        },
    )
}

fn direction() -> impl Strategy<Value = Vec3> {
    point().prop_filter_map("non-zero", |p| p.try_normalize())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn closest_hit_matches_linear_scan(
        mesh in soup(),
        rays in proptest::collection::vec((point(), direction()), 50),
        leaf_size in 1usize..8,
    ) {
        for split in [BuildParams::median(), BuildParams::sah()] {
            let params = BuildParams { leaf_size, ..split };
            let bvh = Bvh::build(&mesh, &params).unwrap();
            for &(o, d) in &rays {
                let o = o * 2.0;
                let got = bvh.closest_hit(&mesh, o, d, 0.0, f64::INFINITY).map(|h| (h.t, h.triangle as usize));
                prop_assert_eq!(got, brute_force(&mesh, o, d));
            }
        }
    }

    #[test]
    fn tri_order_is_a_permutation(mesh in soup()) {
        for params in [BuildParams::median(), BuildParams::sah()] {
            let bvh = Bvh::build(&mesh, &params).unwrap();
            let mut seen = vec![false; mesh.len()];
            for &i in bvh.tri_order() {
                prop_assert!(!seen[i as usize]);
                seen[i as usize] = true;
            }
            prop_assert!(seen.into_iter().all(|s| s));
        }
    }
}
