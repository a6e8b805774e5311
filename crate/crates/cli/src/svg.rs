//! Hand-written SVG for plans, margin traces and snapshots.

use std::fmt::Write;

use cotransport::model::{bounding_circles, ee_position};
use cotransport::{FormationConfig, PlanFile, Point2, Scenario, SimLog};

const PX_PER_M: f64 = 80.0;
const PAD: f64 = 20.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// Canvas in world coordinates, y up.
struct Canvas {
    x0: f64,
    y1: f64,
    w: f64,
    h: f64,
    body: String,
}

impl Canvas {
    fn new(lo: Point2, hi: Point2) -> Self {
        Canvas {
            x0: lo.x,
            y1: hi.y,
            w: (hi.x - lo.x) * PX_PER_M + 2.0 * PAD,
            h: (hi.y - lo.y) * PX_PER_M + 2.0 * PAD,
            body: String::new(),
        }
    }

    fn px(&self, p: Point2) -> (f64, f64) {
        (PAD + (p.x - self.x0) * PX_PER_M, PAD + (self.y1 - p.y) * PX_PER_M)
    }

    fn points(&self, pts: &[Point2]) -> String {
        let v: Vec<String> = pts
            .iter()
            .map(|&p| {
                let (x, y) = self.px(p);
                format!("{x:.2},{y:.2}")
            })
            .collect();
        v.join(" ")
    }

    fn polygon(&mut self, pts: &[Point2], style: &str) {
        let p = self.points(pts);
        let _ = writeln!(self.body, r#"<polygon points="{p}" {style}/>"#);
    }

    fn polyline(&mut self, pts: &[Point2], style: &str) {
        let p = self.points(pts);
        let _ = writeln!(self.body, r#"<polyline points="{p}" fill="none" {style}/>"#);
    }

    fn circle(&mut self, c: Point2, r: f64, style: &str) {
        let (x, y) = self.px(c);
        let r = r * PX_PER_M;
        let _ = writeln!(self.body, r#"<circle cx="{x:.2}" cy="{y:.2}" r="{r:.2}" {style}/>"#);
    }

    fn text(&mut self, p: Point2, s: &str) {
        let (x, y) = self.px(p);
        let _ = writeln!(self.body, r#"<text x="{x:.2}" y="{y:.2}" font-size="12">{s}</text>"#);
    }

    fn finish(self, sc: &Scenario, seed: u64) -> String {
        document(self.w, self.h, sc, seed, &self.body)
    }
}

fn document(w: f64, h: f64, sc: &Scenario, seed: u64, body: &str) -> String {
    let params = serde_json::to_string(&sc.params).expect("params serialize");
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w:.0}\" height=\"{h:.0}\" viewBox=\"0 0 {w:.2} {h:.2}\">\n\
         <metadata>{{\"scenario\":\"{}\",\"scenario_hash\":\"{}\",\"seed\":{seed},\"params\":{params}}}</metadata>\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{body}</svg>\n",
        sc.name, sc.hash
    )
}

fn world_canvas(sc: &Scenario) -> Canvas {
    let v = sc.world.bounds.vertices();
    let lo = v.iter().fold(Point2::new(f64::INFINITY, f64::INFINITY), |a, p| Point2::new(a.x.min(p.x), a.y.min(p.y)));
    let hi = v.iter().fold(Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY), |a, p| {
        Point2::new(a.x.max(p.x), a.y.max(p.y))
    });
    let mut c = Canvas::new(lo, hi);
    c.polygon(&v, r#"fill="none" stroke="black" stroke-width="2""#);
    for o in &sc.world.statics {
        c.polygon(&o.shape, r##"fill="#555" stroke="#222""##);
    }
    c
}

fn formation(c: &mut Canvas, sc: &Scenario, f: &FormationConfig, shade: &str) {
    let spec = &sc.formation;
    let obj: Vec<Point2> = spec.object.iter().map(|v| f.p + v.rotate(f.psi)).collect();
    c.polygon(&obj, &format!(r##"fill="{shade}" fill-opacity="0.5" stroke="#333""##));
    for (i, (s, r)) in f.robots.iter().zip(&spec.robots).enumerate() {
        let base: Vec<Point2> = r.base.footprint.iter().map(|v| s.p + v.rotate(s.phi)).collect();
        let col = PALETTE[i % PALETTE.len()];
        c.polygon(&base, &format!(r##"fill="{col}" fill-opacity="0.6" stroke="#222""##));
        c.polyline(&[s.p, ee_position(s)], &format!(r#"stroke="{col}" stroke-width="3""#));
    }
}

/// Obstacles, regions, seed points, formation graph, global path and reference.
pub fn plan_svg(sc: &Scenario, plan: &PlanFile) -> String {
    let mut c = world_canvas(sc);
    for (k, r) in plan.regions.regions.iter().enumerate() {
        let on_path = plan.path.corridor.contains(&k);
        let style = if on_path {
            r##"fill="#4a90d9" fill-opacity="0.18" stroke="#2a6099" stroke-width="1.5""##
        } else {
            r##"fill="#4a90d9" fill-opacity="0.06" stroke="#7aa7d9" stroke-width="0.8""##
        };
        c.polygon(&r.vertices(), style);
    }
    for e in &plan.graph.edges {
        let (a, b) = (plan.graph.nodes[e.a].config.p, plan.graph.nodes[e.b].config.p);
        c.polyline(&[a, b], r##"stroke="#999" stroke-width="1" stroke-dasharray="4 3""##);
    }
    for n in &plan.graph.nodes {
        c.circle(n.config.p, 0.04, r##"fill="#777""##);
    }
    for s in &plan.seeds.seeds {
        c.circle(s.point, 0.06, r##"fill="#e67e22""##);
    }
    c.polyline(&plan.path.waypoints, r##"stroke="#c0392b" stroke-width="3""##);
    let t_end = plan.reference.duration();
    let samples: Vec<Point2> = (0..=200).map(|k| plan.reference.position(t_end * k as f64 / 200.0)).collect();
    c.polyline(&samples, r##"stroke="#27ae60" stroke-width="2""##);
    formation(&mut c, sc, plan.start_config(), "#bbb");
    formation(&mut c, sc, plan.goal_config(), "#bbb");
    c.text(sc.world.start + Point2::new(0.1, -0.1), "S");
    c.text(sc.world.goal + Point2::new(0.1, -0.1), "G");
    c.finish(sc, plan.seed)
}

/// Smallest of 1, 2, 5 × 10ᵏ giving at most eight intervals over `span`.
fn tick_step(span: f64) -> f64 {
    let mut base = 10f64.powf((span / 8.0).log10().floor());
    loop {
        for m in [1.0, 2.0, 5.0] {
            if span / (m * base) <= 8.0 {
                return m * base;
            }
        }
        base *= 10.0;
    }
}

/// Static and per-obstacle margins over time with the two safety levels.
pub fn margin_svg(sc: &Scenario, log: &SimLog) -> String {
    let (w, h) = (720.0, 360.0);
    let (l, r, t, b) = (60.0, 20.0, 20.0, 40.0);
    let t_end = log.completion_time().max(sc.params.t_c);
    let series: Vec<(String, Vec<(f64, f64)>)> = std::iter::once((
        "static".to_string(),
        log.steps.iter().map(|s| (s.t, s.static_margin)).collect(),
    ))
    .chain((0..log.steps.first().map_or(0, |s| s.dynamic_margins.len())).map(|d| {
        (
            format!("dynamic {d}"),
            log.steps.iter().map(|s| (s.t, s.dynamic_margins[d])).collect(),
        )
    }))
    .collect();
    let y_max = 1.0;
    let y_min = series
        .iter()
        .flat_map(|(_, v)| v.iter().map(|p| p.1))
        .fold(0.0, f64::min);
    let sx = |x: f64| l + (w - l - r) * x / t_end;
    let sy = |y: f64| t + (h - t - b) * (y_max - y.min(y_max)) / (y_max - y_min);
    let mut body = String::new();
    let _ = writeln!(
        body,
        r#"<rect x="{l}" y="{t}" width="{:.2}" height="{:.2}" fill="none" stroke="black"/>"#,
        w - l - r,
        h - t - b
    );
    for k in 0..=5 {
        let y = y_min + (y_max - y_min) * k as f64 / 5.0;
        let _ = writeln!(
            body,
            r#"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="end">{y:.2}</text>"#,
            l - 5.0,
            sy(y) + 4.0
        );
    }
    let step = tick_step(t_end);
    let digits = (-step.log10().floor()).max(0.0) as usize;
    for k in 0..=(t_end / step + 1e-9) as usize {
        let x = k as f64 * step;
        let _ = writeln!(
            body,
            r#"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="middle">{x:.digits$}</text>"#,
            sx(x),
            h - b + 15.0
        );
    }
    let _ = writeln!(
        body,
        r#"<text x="{:.2}" y="{:.2}" font-size="12" text-anchor="middle">t [s]</text>"#,
        l + (w - l - r) / 2.0,
        h - 5.0
    );
    let _ = writeln!(body, r#"<text x="12" y="{:.2}" font-size="12">m</text>"#, t + 10.0);
    for (level, dash) in [(sc.params.d_safe, "6 4"), (sc.params.d_safe_dyn, "2 3")] {
        let _ = writeln!(
            body,
            r#"<line x1="{l}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="black" stroke-dasharray="{dash}"/>"#,
            w - r,
            y = sy(level)
        );
    }
    for (i, (name, pts)) in series.iter().enumerate() {
        let col = PALETTE[i % PALETTE.len()];
        let p: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        let _ = writeln!(
            body,
            r#"<polyline points="{}" fill="none" stroke="{col}" stroke-width="1.5"/>"#,
            p.join(" ")
        );
        let _ = writeln!(
            body,
            r#"<text x="{:.2}" y="{:.2}" font-size="11" fill="{col}">{name}</text>"#,
            w - r - 90.0,
            t + 15.0 + 14.0 * i as f64
        );
    }
    document(w, h, sc, log.seed, &body)
}

/// World, corridor, executed path and the formation at the logged step
/// nearest to `t`.
pub fn snapshot_svg(sc: &Scenario, plan: &PlanFile, log: &SimLog, t: f64) -> String {
    let mut c = world_canvas(sc);
    for r in plan.corridor() {
        c.polygon(&r.vertices(), r##"fill="#4a90d9" fill-opacity="0.08" stroke="#7aa7d9""##);
    }
    let t_end = plan.reference.duration();
    let samples: Vec<Point2> = (0..=200).map(|k| plan.reference.position(t_end * k as f64 / 200.0)).collect();
    c.polyline(&samples, r##"stroke="#27ae60" stroke-width="1.5" stroke-dasharray="5 4""##);
    let Some(k) = (0..log.steps.len()).min_by(|&a, &b| {
        (log.steps[a].t - t).abs().total_cmp(&(log.steps[b].t - t).abs())
    }) else {
        return c.finish(sc, log.seed);
    };
    let step = &log.steps[k];
    let path: Vec<Point2> = log.steps[..=k].iter().map(|s| s.config.p).collect();
    c.polyline(&path, r##"stroke="#c0392b" stroke-width="2""##);
    for (_, o) in sc.world.dynamic_circles(step.t) {
        c.circle(o.center, o.radius, r##"fill="#e74c3c" fill-opacity="0.5" stroke="#922""##);
        c.circle(o.center, o.radius + sc.params.d_safe_dyn, r##"fill="none" stroke="#922" stroke-dasharray="3 3""##);
    }
    if let Ok(b) = bounding_circles(&step.config, &sc.formation) {
        for cc in b.all() {
            c.circle(cc.center, cc.radius, r##"fill="none" stroke="#888" stroke-width="0.8""##);
        }
    }
    formation(&mut c, sc, &step.config, "#f1c40f");
    c.text(Point2::new(sc.world.start.x, sc.world.start.y), "S");
    c.text(sc.world.goal, "G");
    let label = format!("t = {:.2} s", step.t);
    let v = sc.world.bounds.vertices();
    let top_left = v.iter().fold(Point2::new(f64::INFINITY, f64::NEG_INFINITY), |a, p| {
        Point2::new(a.x.min(p.x), a.y.max(p.y))
    });
    c.text(top_left + Point2::new(0.1, -0.25), &label);
    c.finish(sc, log.seed)
}
