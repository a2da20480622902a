use proptest::prelude::*;

use offnav::instruction::{compile_mission, parse_directive, render_plan, AdverbLexicon};
use offnav::perception::{dice, LabelMask};
use offnav::projection::{ground_to_pixel, horizon_row, pixel_to_ground, CameraIntrinsics, CameraMount};
use offnav::vehicle::wrap_angle;

proptest! {
    // Below-horizon pixels survive a ground-plane round trip to well under a
    // thousandth of a pixel, for any sane camera.
    #[test]
    fn projection_round_trip(
        fx in 20.0f64..250.0,
        fy in 20.0f64..250.0,
        cx_frac in 0.3f64..0.7,
        cy_frac in 0.3f64..0.7,
        width in 64usize..320,
        height in 48usize..240,
        h in 0.3f64..2.0,
        pitch in 0.02f64..0.5,
        ox in -1.0f64..1.0,
        oy in -1.0f64..1.0,
        row_frac in 0.0f64..1.0,
        col_frac in 0.0f64..1.0,
    ) {
        let intr = CameraIntrinsics {
            fx, fy,
            cx: cx_frac * width as f64,
            cy: cy_frac * height as f64,
            width, height,
        };
        let mount = CameraMount {
            height_above_ground: h,
            pitch,
            longitudinal_offset: ox,
            lateral_offset: oy,
        };
        let lo = horizon_row(&intr, &mount) + 5.0;
        prop_assume!(lo < height as f64 - 1.0);
        let row = lo + row_frac * (height as f64 - lo);
        let col = col_frac * width as f64;
        let g = pixel_to_ground(row, col, &intr, &mount).unwrap();
        let (r2, c2) = ground_to_pixel(g, &intr, &mount).unwrap();
        prop_assert!((r2 - row).abs() < 1e-9, "row {row} -> {r2}");
        prop_assert!((c2 - col).abs() < 1e-9, "col {col} -> {c2}");
    }

    #[test]
    fn dice_is_symmetric_and_bounded(ids_a in proptest::collection::vec(0u8..2, 64), ids_b in proptest::collection::vec(0u8..2, 64)) {
        let labels = vec!["other".to_string(), "road".to_string()];
        let a = LabelMask { width: 8, height: 8, labels: labels.clone(), class_ids: ids_a };
        let b = LabelMask { width: 8, height: 8, labels, class_ids: ids_b };
        let ab = dice(&a, &b, "road").unwrap();
        let ba = dice(&b, &a, "road").unwrap();
        prop_assert_eq!(ab, ba);
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert_eq!(dice(&a, &a, "road").unwrap(), 1.0);
    }

    // Rendering a compiled plan back to directive text and re-compiling it
    // reproduces the plan (speeds are rendered numerically, which the
    // lexicon resolves as identities).
    #[test]
    fn plan_render_parse_round_trip(
        n_legs in 1usize..5,
        terrain_picks in proptest::collection::vec(0usize..3, 4),
        speed_picks in proptest::collection::vec(0usize..3, 4),
    ) {
        let terrains = ["asphalt", "sandy road", "gravel"];
        let adverbs = ["quickly", "slowly", "very slowly"];
        let mut text = String::new();
        for i in 0..n_legs {
            text.push_str(&format!("★ {}: {}\n", terrains[terrain_picks[i]], adverbs[speed_picks[i]]));
        }
        for i in 1..n_legs {
            text.push_str(&format!("# landmark {i}\n"));
        }
        let lex = AdverbLexicon::default();
        let plan = compile_mission(&parse_directive(&text).unwrap(), &lex).unwrap();
        let rendered = render_plan(&plan);
        let again = compile_mission(&parse_directive(&rendered).unwrap(), &lex).unwrap();
        prop_assert_eq!(again, plan);
    }

    #[test]
    fn wrap_angle_is_idempotent_and_in_range(a in -100.0f64..100.0) {
        let w = wrap_angle(a);
        prop_assert!(w > -std::f64::consts::PI - 1e-12 && w <= std::f64::consts::PI + 1e-12);
        prop_assert!((wrap_angle(w) - w).abs() < 1e-12);
        // Same direction on the unit circle.
        prop_assert!(((a.sin() - w.sin()).abs() < 1e-9) && ((a.cos() - w.cos()).abs() < 1e-9));
    }
}
