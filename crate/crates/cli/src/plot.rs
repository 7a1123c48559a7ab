//! Minimal static SVG renderings of runs: trajectory snapshots colored by
//! speed, action-vs-time series, and equilibrium deviation curves.

use std::fmt::Write as _;

use traffic_game::dynamics::{ActionPair, VehicleState};
use traffic_game::nash::DeviationSample;
use traffic_game::scalar::rad_to_deg;
use traffic_game::Barrier;

pub struct AgentPath {
    pub name: String,
    pub states: Vec<VehicleState<f64>>,
}

pub struct AgentActions {
    pub name: String,
    pub entry_tick: usize,
    pub actions: Vec<ActionPair<f64>>,
}

const WIDTH: f64 = 900.0;

struct Mapper {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
    px: f64,
    py: f64,
    ox: f64,
    oy: f64,
}

impl Mapper {
    fn new(x0: f64, x1: f64, y0: f64, y1: f64, px: f64, py: f64, ox: f64, oy: f64) -> Self {
        Self { x0, x1, y0, y1, px, py, ox, oy }
    }

    fn x(&self, v: f64) -> f64 {
        self.ox + (v - self.x0) / (self.x1 - self.x0).max(1e-12) * self.px
    }

    // svg y grows downward
    fn y(&self, v: f64) -> f64 {
        self.oy + (self.y1 - v) / (self.y1 - self.y0).max(1e-12) * self.py
    }
}

/// Blue (slow) to red (fast).
fn speed_color(v: f64, vmin: f64, vmax: f64) -> String {
    let t = ((v - vmin) / (vmax - vmin).max(1e-9)).clamp(0.0, 1.0);
    let r = (255.0 * t) as u8;
    let b = (255.0 * (1.0 - t)) as u8;
    let g = (96.0 * (1.0 - (2.0 * t - 1.0).abs())) as u8 + 32;
    format!("rgb({r},{g},{b})")
}

fn agent_color(i: usize) -> &'static str {
    const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];
    PALETTE[i % PALETTE.len()]
}

/// Fig.2/5-style snapshot plot: lane lines, barrier, vehicle markers every
/// second colored by speed and labeled with the time.
pub fn trajectories_svg(
    agents: &[AgentPath],
    lane_centers: &[f64],
    barrier: Option<&Barrier<f64>>,
    dt: f64,
) -> String {
    let height = 280.0;
    let mut xs: Vec<f64> = Vec::new();
    let mut vs: Vec<f64> = Vec::new();
    for a in agents {
        xs.extend(a.states.iter().map(|s| s.x()));
        vs.extend(a.states.iter().map(|s| s.speed()));
    }
    let (xmin, xmax) = bounds(&xs, 10.0);
    let (vmin, vmax) = bounds(&vs, 0.0);
    let half_width = lane_centers.iter().fold(2.0f64, |m, c| m.max(c.abs() + 3.0));
    let m = Mapper::new(xmin, xmax, -half_width, half_width, WIDTH - 120.0, height - 70.0, 60.0, 20.0);

    let mut svg = svg_open(WIDTH, height);
    // road edges and lane centers
    let lane_half = 1.85;
    for c in lane_centers {
        line(&mut svg, m.x(xmin), m.y(*c), m.x(xmax), m.y(*c), "#cccccc", 1.0, Some("4,6"));
    }
    let top = lane_centers.iter().cloned().fold(f64::MIN, f64::max) + lane_half;
    let bottom = lane_centers.iter().cloned().fold(f64::MAX, f64::min) - lane_half;
    for edge in [top, bottom] {
        line(&mut svg, m.x(xmin), m.y(edge), m.x(xmax), m.y(edge), "#555555", 1.5, None);
    }
    if let Some(b) = barrier {
        let _ = write!(
            svg,
            "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"6\" height=\"{:.1}\" fill=\"#aa2222\"/>",
            m.x(b.x),
            m.y(b.blocked_lane_y + lane_half),
            (m.y(b.blocked_lane_y - lane_half) - m.y(b.blocked_lane_y + lane_half)).abs()
        );
        text(&mut svg, m.x(b.x) + 8.0, m.y(b.blocked_lane_y) - 6.0, 11.0, "#aa2222", "barrier");
    }
    for (i, a) in agents.iter().enumerate() {
        let pts: String = a
            .states
            .iter()
            .map(|s| format!("{:.1},{:.1}", m.x(s.x()), m.y(s.y())))
            .collect::<Vec<_>>()
            .join(" ");
        let _ = write!(
            svg,
            "<polyline points=\"{pts}\" fill=\"none\" stroke=\"{}\" stroke-width=\"0.8\" opacity=\"0.5\"/>",
            agent_color(i)
        );
        let marks_per_second = (1.0 / dt).round().max(1.0) as usize;
        for (k, s) in a.states.iter().enumerate().step_by(marks_per_second) {
            let color = speed_color(s.speed(), vmin, vmax);
            let stroke = if i == 0 { "none" } else { "#000000" };
            let _ = write!(
                svg,
                "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"10\" height=\"6\" fill=\"{color}\" stroke=\"{stroke}\" stroke-width=\"0.8\"/>",
                m.x(s.x()) - 5.0,
                m.y(s.y()) - 3.0
            );
            let _ = write!(
                svg,
                "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"8\" fill=\"#333\">{}</text>",
                m.x(s.x()) - 5.0,
                m.y(s.y()) - 5.0,
                (k as f64 * dt * 10.0).round() / 10.0
            );
        }
        text(&mut svg, 62.0, 34.0 + 14.0 * i as f64, 11.0, agent_color(i), &a.name);
    }
    text(&mut svg, WIDTH / 2.0 - 20.0, height - 8.0, 11.0, "#333", "x (m)");
    text(&mut svg, 8.0, height / 2.0, 11.0, "#333", "y (m)");
    let _ = write!(
        svg,
        "<text x=\"{:.1}\" y=\"16\" font-size=\"10\" fill=\"#333\">speed color: {vmin:.1}&#8211;{vmax:.1} m/s, boxes labeled by time (s)</text>",
        WIDTH - 380.0
    );
    svg.push_str("</svg>\n");
    svg
}

/// Fig.3/6-style action series: acceleration and steering vs time.
pub fn actions_svg(agents: &[AgentActions], dt: f64) -> String {
    let height = 420.0;
    let mut svg = svg_open(WIDTH, height);
    let panels: [(&str, f64, fn(&ActionPair<f64>) -> f64); 2] = [
        ("acceleration (m/s^2)", 20.0, |a| a.accel()),
        ("steering (deg)", 230.0, |a| rad_to_deg(a.steer())),
    ];
    for (label, oy, get) in panels {
        let mut ts: Vec<f64> = Vec::new();
        let mut vs: Vec<f64> = vec![0.0];
        for a in agents {
            for (k, act) in a.actions.iter().enumerate() {
                ts.push((a.entry_tick + k) as f64 * dt);
                vs.push(get(act));
            }
        }
        let (tmin, tmax) = bounds(&ts, 0.2);
        let (vmin, vmax) = bounds(&vs, 0.3);
        let m = Mapper::new(tmin, tmax, vmin, vmax, WIDTH - 140.0, 160.0, 60.0, oy);
        line(&mut svg, m.x(tmin), m.y(0.0), m.x(tmax), m.y(0.0), "#bbbbbb", 1.0, Some("3,5"));
        rect_outline(&mut svg, 60.0, oy, WIDTH - 140.0, 160.0);
        for (i, a) in agents.iter().enumerate() {
            let pts: String = a
                .actions
                .iter()
                .enumerate()
                .map(|(k, act)| {
                    format!(
                        "{:.1},{:.1}",
                        m.x((a.entry_tick + k) as f64 * dt),
                        m.y(get(act))
                    )
                })
                .collect::<Vec<_>>()
                .join(" ");
            let _ = write!(
                svg,
                "<polyline points=\"{pts}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.4\"/>",
                agent_color(i)
            );
            text(&mut svg, WIDTH - 72.0, oy + 16.0 + 14.0 * i as f64, 11.0, agent_color(i), &a.name);
        }
        text(&mut svg, 62.0, oy + 14.0, 11.0, "#333", label);
        text(&mut svg, m.x(tmin), oy + 176.0, 10.0, "#333", &format!("{tmin:.1}s"));
        text(&mut svg, m.x(tmax) - 20.0, oy + 176.0, 10.0, "#333", &format!("{tmax:.1}s"));
        text(&mut svg, 14.0, m.y(vmax) + 10.0, 10.0, "#333", &format!("{vmax:.1}"));
        text(&mut svg, 14.0, m.y(vmin), 10.0, "#333", &format!("{vmin:.1}"));
    }
    svg.push_str("</svg>\n");
    svg
}

/// Fig.4-style deviation curves: utility against single-coordinate deviation,
/// one curve per (agent, time, coordinate), colored cold-to-warm by time.
pub fn deviation_svg(samples: &[DeviationSample<f64>], steps: usize) -> String {
    let height = 420.0;
    let mut svg = svg_open(WIDTH, height);
    let panels = [("acceleration deviation (m/s^2)", 20.0, 0usize), ("steering deviation (deg)", 230.0, 1usize)];
    for (label, oy, coord) in panels {
        let of_panel: Vec<&DeviationSample<f64>> =
            samples.iter().filter(|s| s.coordinate == coord).collect();
        if of_panel.is_empty() {
            continue;
        }
        let devs: Vec<f64> = of_panel
            .iter()
            .map(|s| if coord == 0 { s.deviation } else { rad_to_deg(s.deviation) })
            .collect();
        let us: Vec<f64> = of_panel.iter().map(|s| s.utility).collect();
        let (dmin, dmax) = bounds(&devs, 0.05);
        let (umin, umax) = bounds(&us, 0.1);
        let m = Mapper::new(dmin, dmax, umin, umax, WIDTH - 140.0, 160.0, 60.0, oy);
        rect_outline(&mut svg, 60.0, oy, WIDTH - 140.0, 160.0);
        line(&mut svg, m.x(0.0), m.y(umin), m.x(0.0), m.y(umax), "#bbbbbb", 1.0, Some("3,5"));

        // group consecutive samples into one curve per (agent, time index)
        let mut k = 0usize;
        while k < of_panel.len() {
            let a = of_panel[k].agent;
            let t = of_panel[k].time_index;
            let mut pts = String::new();
            while k < of_panel.len() && of_panel[k].agent == a && of_panel[k].time_index == t {
                let s = of_panel[k];
                let d = if coord == 0 { s.deviation } else { rad_to_deg(s.deviation) };
                let _ = write!(pts, "{:.1},{:.1} ", m.x(d), m.y(s.utility));
                k += 1;
            }
            let heat = (t as f64 / steps.max(1) as f64).clamp(0.0, 1.0);
            let color = format!("rgb({},{},{})", (heat * 220.0) as u8, 60, (220.0 * (1.0 - heat)) as u8);
            let _ = write!(
                svg,
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"0.7\" opacity=\"0.6\"/>",
                pts.trim_end()
            );
        }
        text(&mut svg, 62.0, oy + 14.0, 11.0, "#333", label);
        text(&mut svg, 14.0, m.y(umax) + 10.0, 10.0, "#333", &format!("{umax:.2}"));
        text(&mut svg, 14.0, m.y(umin), 10.0, "#333", &format!("{umin:.2}"));
    }
    text(&mut svg, 60.0, height - 8.0, 10.0, "#333", "curve color: blue (t=0) to red (t=T); peaks at zero deviation certify the equilibrium");
    svg.push_str("</svg>\n");
    svg
}

fn svg_open(width: f64, height: f64) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    )
}

fn bounds(values: &[f64], pad: f64) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    if (hi - lo).abs() < 1e-9 {
        return (lo - 1.0 - pad, hi + 1.0 + pad);
    }
    (lo - pad, hi + pad)
}

fn line(svg: &mut String, x1: f64, y1: f64, x2: f64, y2: f64, color: &str, w: f64, dash: Option<&str>) {
    let dash = dash.map(|d| format!(" stroke-dasharray=\"{d}\"")).unwrap_or_default();
    let _ = write!(
        svg,
        "<line x1=\"{x1:.1}\" y1=\"{y1:.1}\" x2=\"{x2:.1}\" y2=\"{y2:.1}\" stroke=\"{color}\" stroke-width=\"{w}\"{dash}/>"
    );
}

fn text(svg: &mut String, x: f64, y: f64, size: f64, color: &str, content: &str) {
    let _ = write!(
        svg,
        "<text x=\"{x:.1}\" y=\"{y:.1}\" font-size=\"{size}\" fill=\"{color}\">{content}</text>"
    );
}

fn rect_outline(svg: &mut String, x: f64, y: f64, w: f64, h: f64) {
    let _ = write!(
        svg,
        "<rect x=\"{x:.1}\" y=\"{y:.1}\" width=\"{w:.1}\" height=\"{h:.1}\" fill=\"none\" stroke=\"#888\" stroke-width=\"1\"/>"
    );
}
