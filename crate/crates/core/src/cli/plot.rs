//! Static SVG figures: an overhead view of the run with fading vehicle frames,
//! and speed and acceleration profiles underneath.

use std::fmt::Write as _;

use crate::dynamics::{VehicleGeometry, VehicleState};
use crate::simulator::{ScenarioConfig, SimLog};

const WIDTH: f64 = 1000.0;
const MARGIN: f64 = 50.0;
const ROAD_H: f64 = 220.0;
const PROFILE_H: f64 = 220.0;
const EGO_COLOR: &str = "#1f5fbf";
const TARGET_COLORS: [&str; 3] = ["#c62828", "#7b1fa2", "#ef6c00"];

struct Axis {
    lo: f64,
    hi: f64,
    px_lo: f64,
    px_hi: f64,
}

impl Axis {
    fn map(&self, v: f64) -> f64 {
        let span = (self.hi - self.lo).max(1e-9);
        self.px_lo + (v - self.lo) / span * (self.px_hi - self.px_lo)
    }
}

fn polyline(out: &mut String, pts: impl Iterator<Item = (f64, f64)>, color: &str, width: f64, dash: &str) {
    let coords: Vec<String> = pts.map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
    if coords.len() < 2 {
        return;
    }
    let _ = writeln!(
        out,
        r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="{width}" stroke-dasharray="{dash}"/>"#,
        coords.join(" ")
    );
}

fn body(out: &mut String, s: &VehicleState, centre_offset: f64, g: &VehicleGeometry, xa: &Axis, ya: &Axis, color: &str, opacity: f64) {
    let (sn, cs) = s.theta.sin_cos();
    let (cx, cy) = (s.px + centre_offset * cs, s.py + centre_offset * sn);
    let (hl, hw) = (0.5 * g.body_length, 0.5 * g.body_width);
    let corners = [(hl, hw), (hl, -hw), (-hl, -hw), (-hl, hw)].map(|(lx, ly)| {
        let x = cx + lx * cs - ly * sn;
        let y = cy + lx * sn + ly * cs;
        format!("{:.2},{:.2}", xa.map(x), ya.map(y))
    });
    let _ = writeln!(
        out,
        r#"<polygon points="{}" fill="{color}" fill-opacity="{opacity:.2}" stroke="{color}" stroke-opacity="{:.2}"/>"#,
        corners.join(" "),
        (opacity * 2.0).min(1.0)
    );
}

fn text(out: &mut String, x: f64, y: f64, s: &str, anchor: &str) {
    let _ = writeln!(
        out,
        r#"<text x="{x:.1}" y="{y:.1}" font-family="sans-serif" font-size="12" text-anchor="{anchor}">{s}</text>"#
    );
}

pub fn render_svg(log: &SimLog, cfg: &ScenarioConfig) -> String {
    let height = MARGIN * 3.0 + ROAD_H + PROFILE_H;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}">"#
    );
    out.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    let _ = writeln!(out, "<title>{}</title>", log.scenario);

    let xs = log
        .ticks
        .iter()
        .flat_map(|t| std::iter::once(t.ego.px).chain(t.targets.iter().map(|s| s.px)));
    let (mut x_lo, mut x_hi) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    if !x_lo.is_finite() {
        (x_lo, x_hi) = (0.0, 1.0);
    }
    let xa = Axis {
        lo: x_lo - 5.0,
        hi: x_hi + 5.0,
        px_lo: MARGIN,
        px_hi: WIDTH - MARGIN,
    };
    let ya = Axis {
        lo: cfg.road.y_min - 1.0,
        hi: cfg.road.y_max + 1.0,
        px_lo: MARGIN + ROAD_H,
        px_hi: MARGIN,
    };

    // Road edges, lane separators and centre lines.
    for y in [cfg.road.y_min, cfg.road.y_max] {
        polyline(&mut out, [(xa.px_lo, ya.map(y)), (xa.px_hi, ya.map(y))].into_iter(), "black", 2.0, "none");
    }
    let mut centers = cfg.road.lane_centers.clone();
    centers.sort_by(f64::total_cmp);
    for w in centers.windows(2) {
        let y = ya.map(0.5 * (w[0] + w[1]));
        polyline(&mut out, [(xa.px_lo, y), (xa.px_hi, y)].into_iter(), "black", 1.0, "none");
    }
    for &c in &centers {
        let y = ya.map(c);
        polyline(&mut out, [(xa.px_lo, y), (xa.px_hi, y)].into_iter(), "#e57373", 1.0, "6,4");
    }

    // Fading frames once per second, drawn under the paths.
    let per_frame = (1.0 / log.dt).round().max(1.0) as usize;
    let n = log.ticks.len().max(1);
    let ego_offset = 0.5 * cfg.ego.geometry.wheelbase;
    for t in log.ticks.iter().step_by(per_frame) {
        let opacity = 0.08 + 0.4 * t.tick as f64 / n as f64;
        body(&mut out, &t.ego, ego_offset, &cfg.ego.geometry, &xa, &ya, EGO_COLOR, opacity);
        for (i, s) in t.targets.iter().enumerate() {
            let c = TARGET_COLORS[i % TARGET_COLORS.len()];
            body(&mut out, s, 0.0, &cfg.target_geometry, &xa, &ya, c, opacity);
        }
    }
    polyline(
        &mut out,
        log.ticks.iter().map(|t| (xa.map(t.ego.px), ya.map(t.ego.py))),
        EGO_COLOR,
        2.0,
        "none",
    );
    let n_targets = log.ticks.first().map_or(0, |t| t.targets.len());
    for i in 0..n_targets {
        polyline(
            &mut out,
            log.ticks.iter().map(|t| (xa.map(t.targets[i].px), ya.map(t.targets[i].py))),
            TARGET_COLORS[i % TARGET_COLORS.len()],
            2.0,
            "none",
        );
    }
    text(&mut out, MARGIN, MARGIN - 15.0, &format!("{}: overhead view (x, y in m)", log.scenario), "start");
    text(&mut out, xa.px_lo, ya.px_lo + 15.0, &format!("{:.0}", xa.lo), "start");
    text(&mut out, xa.px_hi, ya.px_lo + 15.0, &format!("{:.0}", xa.hi), "end");

    // Speed and acceleration profiles.
    let top = MARGIN * 2.0 + ROAD_H;
    let t_end = log.ticks.last().map_or(1.0, |t| t.t).max(log.dt);
    let ta = Axis {
        lo: 0.0,
        hi: t_end,
        px_lo: MARGIN,
        px_hi: WIDTH - MARGIN,
    };
    let values = log.ticks.iter().flat_map(|t| {
        [t.ego.v, t.control.a]
            .into_iter()
            .chain(t.targets.first().map(|s| s.v))
    });
    let (v_lo, v_hi) = values.fold((0.0f64, 1.0f64), |(a, b), v| (a.min(v), b.max(v)));
    let va = Axis {
        lo: v_lo - 1.0,
        hi: v_hi + 1.0,
        px_lo: top + PROFILE_H,
        px_hi: top,
    };
    let _ = writeln!(
        out,
        r##"<rect x="{MARGIN}" y="{top}" width="{}" height="{PROFILE_H}" fill="none" stroke="#999"/>"##,
        WIDTH - 2.0 * MARGIN
    );
    polyline(&mut out, [(ta.px_lo, va.map(0.0)), (ta.px_hi, va.map(0.0))].into_iter(), "#999", 1.0, "2,2");
    polyline(&mut out, log.ticks.iter().map(|t| (ta.map(t.t), va.map(t.ego.v))), EGO_COLOR, 2.0, "none");
    if n_targets > 0 {
        polyline(
            &mut out,
            log.ticks.iter().map(|t| (ta.map(t.t), va.map(t.targets[0].v))),
            TARGET_COLORS[1],
            2.0,
            "none",
        );
    }
    polyline(&mut out, log.ticks.iter().map(|t| (ta.map(t.t), va.map(t.control.a))), TARGET_COLORS[0], 1.5, "none");
    text(
        &mut out,
        MARGIN,
        top - 10.0,
        "ego speed (blue), lead target speed (purple) in m/s; ego acceleration (red) in m/s^2",
        "start",
    );
    text(&mut out, ta.px_hi, top + PROFILE_H + 15.0, &format!("t = {t_end:.1} s"), "end");
    text(&mut out, MARGIN - 5.0, va.map(v_hi) + 4.0, &format!("{v_hi:.0}"), "end");
    text(&mut out, MARGIN - 5.0, va.map(v_lo) + 4.0, &format!("{v_lo:.0}"), "end");
    out.push_str("</svg>\n");
    out
}
