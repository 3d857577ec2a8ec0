use pixmatch::render::{MASK, PATH};
use pixmatch_web::Demo;
use serde_json::Value;

fn parse(s: &str) -> Value {
    serde_json::from_str(s).expect("summary is JSON")
}

fn has(rgba: &[u8], color: [u8; 3]) -> bool {
    rgba.chunks(4).any(|p| p[..3] == color)
}

#[test]
fn three_operations_update_the_overlay() {
    let mut demo = Demo::new(42, 12, 0.0).unwrap();
    let w = demo.width() as usize;
    assert_eq!(demo.count(), 20);

    let s = parse(&demo.select(3));
    assert_eq!(s["traj_id"], "t00003");
    assert!(s.get("status").is_none());
    let img = demo.rgba();
    assert_eq!(img.len(), w * w * 4);
    assert!(!has(&img, MASK));

    let s = parse(&demo.calibrate(6));
    assert_eq!(s["radius_px"], 6);
    assert!(s["mask_cells"].as_u64().unwrap() > 0);
    assert!(has(&demo.rgba(), MASK));
    let wider = parse(&demo.calibrate(12));
    assert!(wider["mask_cells"].as_u64() >= s["mask_cells"].as_u64());

    let m = parse(&demo.match_path(0.5, 4));
    if m["status"] == "ok" {
        assert!(m["precision"].as_f64().unwrap() > 0.0);
        assert!(m["cost_m"].as_f64().unwrap() <= m["budget_used_m"].as_f64().unwrap());
        assert!(has(&demo.rgba(), PATH));
    } else {
        assert!(m.get("edges").is_none());
    }
}

#[test]
fn same_seed_same_pictures() {
    let mut a = Demo::new(7, 10, 50.0).unwrap();
    let mut b = Demo::new(7, 10, 50.0).unwrap();
    assert_eq!(a.select(5), b.select(5));
    assert_eq!(a.match_path(0.03, 2), b.match_path(0.03, 2));
    assert_eq!(a.rgba(), b.rgba());
}
