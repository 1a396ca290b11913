use super::FigureData;
use crate::geom::{ConvexPolygon, Point2};
use std::fmt::Write;

const PALETTE: [&str; 6] = ["#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

struct View {
    min: Point2,
    max: Point2,
    scale: f64,
    margin: f64,
}

impl View {
    fn map(&self, p: Point2) -> (f64, f64) {
        (
            self.margin + (p.x - self.min.x) * self.scale,
            self.margin + (self.max.y - p.y) * self.scale,
        )
    }

    fn points(&self, poly: &ConvexPolygon) -> String {
        poly.vertices()
            .iter()
            .map(|v| {
                let (x, y) = self.map(*v);
                format!("{x:.2},{y:.2}")
            })
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Plan view of the target road with buildings, the trajectory and the
/// unanimous+threshold AOIs of the kept epochs. Each AOI part is one
/// `<polygon class="aoi">`.
pub fn scene_map(fig: &FigureData) -> String {
    let scene = &fig.scene;
    let targets: Vec<_> = scene
        .trajectory
        .iter()
        .filter(|t| t.section == crate::scene::Section::Target)
        .collect();
    let (a0, a1) = targets
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), t| (lo.min(t.along), hi.max(t.along)));
    let pad = scene.config.aoi_half_length + scene.config.aoi_offset_max;
    let (blo, bhi) = scene.bounds.bounding_box();
    let outer = (bhi - blo).norm();
    let window = scene
        .frame
        .rectangle(a0 - pad, a1 + pad, -outer, outer)
        .ok()
        .and_then(|w| w.intersect(&scene.bounds).bounding_box())
        .unwrap_or((blo, bhi));
    let size = window.1 - window.0;
    let scale = 900.0 / size.x.max(size.y).max(1.0);
    let view = View {
        min: window.0,
        max: window.1,
        scale,
        margin: 20.0,
    };
    let (w, h) = (size.x * scale + 40.0, size.y * scale + 40.0);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.2} {h:.2}">"#
    );
    let _ = writeln!(s, r#"<title>Target road, seed {}</title>"#, fig.seed);
    let _ = writeln!(s, r##"<rect x="0" y="0" width="{w:.2}" height="{h:.2}" fill="#ffffff"/>"##);
    let in_window = |p: &ConvexPolygon| {
        let (lo, hi) = p.bounding_box();
        lo.x <= window.1.x && hi.x >= window.0.x && lo.y <= window.1.y && hi.y >= window.0.y
    };
    for b in scene.buildings.iter().filter(|b| in_window(&b.footprint)) {
        let _ = writeln!(
            s,
            r##"<polygon class="building" points="{}" fill="#bbbbbb" stroke="#555555" stroke-width="0.5"><title>{:.1} m</title></polygon>"##,
            view.points(&b.footprint),
            b.height
        );
    }
    let path: Vec<String> = targets
        .iter()
        .map(|t| {
            let (x, y) = view.map(Point2::new(t.position[0], t.position[1]));
            format!("{x:.2},{y:.2}")
        })
        .collect();
    let _ = writeln!(
        s,
        r##"<polyline class="trajectory" points="{}" fill="none" stroke="#000000" stroke-width="1" stroke-dasharray="4 2"/>"##,
        path.join(" ")
    );
    for (i, (epoch, truth, region)) in fig.aois.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        for part in region.parts() {
            let _ = writeln!(
                s,
                r#"<polygon class="aoi" data-epoch="{epoch}" points="{}" fill="{color}" fill-opacity="0.35" stroke="{color}" stroke-width="0.8"/>"#,
                view.points(part)
            );
        }
        let (x, y) = view.map(Point2::new(truth[0], truth[1]));
        let _ = writeln!(
            s,
            r##"<circle class="truth" data-epoch="{epoch}" cx="{x:.2}" cy="{y:.2}" r="3" fill="{color}" stroke="#000000" stroke-width="0.5"/>"##
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Stacked bars of LOS and NLOS tracked signals per target-road epoch.
pub fn visible_counts(fig: &FigureData) -> String {
    let n = fig.visible.len().max(1);
    let max = fig.visible.iter().map(|v| v.1 + v.2).max().unwrap_or(0).max(1);
    let (left, top, bar, unit) = (40.0, 20.0, 5.0, 20.0);
    let w = left + n as f64 * bar + 20.0;
    let h = top + max as f64 * unit + 40.0;
    let base = top + max as f64 * unit;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.2} {h:.2}">"#
    );
    let _ = writeln!(s, r#"<title>Tracked satellites per epoch, seed {}</title>"#, fig.seed);
    let _ = writeln!(s, r##"<rect x="0" y="0" width="{w:.2}" height="{h:.2}" fill="#ffffff"/>"##);
    for k in 0..=max {
        let y = base - k as f64 * unit;
        let _ = writeln!(
            s,
            r##"<line x1="{left}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#dddddd" stroke-width="0.5"/><text x="{:.2}" y="{:.2}" font-size="9" text-anchor="end">{k}</text>"##,
            w - 20.0,
            left - 4.0,
            y + 3.0
        );
    }
    for (i, (epoch, los, nlos)) in fig.visible.iter().enumerate() {
        let x = left + i as f64 * bar;
        let hl = *los as f64 * unit;
        let hn = *nlos as f64 * unit;
        let _ = writeln!(
            s,
            r##"<rect class="los" data-epoch="{epoch}" x="{x:.2}" y="{:.2}" width="{:.2}" height="{hl:.2}" fill="#1f77b4"/>"##,
            base - hl,
            bar - 1.0
        );
        if *nlos > 0 {
            let _ = writeln!(
                s,
                r##"<rect class="nlos" data-epoch="{epoch}" x="{x:.2}" y="{:.2}" width="{:.2}" height="{hn:.2}" fill="#d62728"/>"##,
                base - hl - hn,
                bar - 1.0
            );
        }
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="middle">epoch on target road (blue LOS, red NLOS)</text>"#,
        left + 0.5 * n as f64 * bar,
        h - 8.0
    );
    s.push_str("</svg>\n");
    s
}
