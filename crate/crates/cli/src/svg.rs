//! Native SVG rendering for the two artifact plots: step curves and Wigner
//! heat maps. Regression testing happens on the CSVs; these files are for
//! eyeballs, so the drawing code favors plain geometry over configurability.

use eads_core::phasespace::WignerGrid;

use crate::csvout::CurveRow;

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Round-number axis ticks covering [lo, hi].
fn nice_ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    let span = (hi - lo).max(1e-12);
    let raw = span / target.max(2) as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 2.5, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| span / s <= target as f64 + 0.5)
        .unwrap_or(10.0 * mag);
    let mut ticks = Vec::new();
    let mut t = (lo / step).ceil() * step;
    while t <= hi + 1e-9 * span {
        ticks.push(if t.abs() < 1e-12 { 0.0 } else { t });
        t += step;
    }
    ticks
}

fn tick_label(v: f64) -> String {
    let mut s = format!("{v:.6}");
    while s.contains('.') && (s.ends_with('0') || s.ends_with('.')) {
        s.pop();
    }
    if s == "-0" {
        s = "0".into();
    }
    s
}

/// Linear data-to-pixel map over one axis.
#[derive(Clone, Copy)]
struct Axis {
    lo: f64,
    hi: f64,
    px0: f64,
    px1: f64,
}

impl Axis {
    fn map(&self, v: f64) -> f64 {
        let t = (v - self.lo) / (self.hi - self.lo);
        self.px0 + t * (self.px1 - self.px0)
    }
}

/// Series color by protocol arm; dash patterns separate inputs that share
/// an arm in multi-input runs.
fn series_style(label: &str, dash_index: usize) -> (&'static str, &'static str) {
    const DASHES: [&str; 4] = ["", "7 3", "2 3", "8 3 2 3"];
    let color = if label.starts_with("suppressed_ideal_ancilla") {
        "#74b57e"
    } else if label.starts_with("unsuppressed") {
        "#c0392b"
    } else if label.starts_with("suppressed") {
        "#1e8449"
    } else {
        "#555555"
    };
    (color, DASHES[dash_index % DASHES.len()])
}

struct Panel {
    x: Axis,
    y: Axis,
}

impl Panel {
    fn frame(&self, out: &mut String, y_ticks: &[f64], n_max: usize) {
        let (l, r) = (self.x.px0, self.x.px1);
        let (t, b) = (self.y.px1, self.y.px0);
        for &ty in y_ticks {
            let py = self.y.map(ty);
            out.push_str(&format!(
                "<line x1='{l:.2}' y1='{py:.2}' x2='{r:.2}' y2='{py:.2}' stroke='#e4e4e4' stroke-width='1'/>\n"
            ));
            out.push_str(&format!(
                "<text x='{:.2}' y='{:.2}' font-size='11' text-anchor='end' fill='#333'>{}</text>\n",
                l - 6.0,
                py + 3.5,
                tick_label(ty)
            ));
        }
        let x_stride = 1 + n_max / 10;
        for n in (0..=n_max).step_by(x_stride) {
            let px = self.x.map(n as f64);
            out.push_str(&format!(
                "<line x1='{px:.2}' y1='{b:.2}' x2='{px:.2}' y2='{:.2}' stroke='#333' stroke-width='1'/>\n",
                b + 4.0
            ));
            out.push_str(&format!(
                "<text x='{px:.2}' y='{:.2}' font-size='11' text-anchor='middle' fill='#333'>{n}</text>\n",
                b + 16.0
            ));
        }
        out.push_str(&format!(
            "<rect x='{l:.2}' y='{t:.2}' width='{:.2}' height='{:.2}' fill='none' stroke='#333' stroke-width='1'/>\n",
            r - l,
            b - t
        ));
    }

    fn reference_line(&self, out: &mut String, y: f64, dashed: bool, label: &str) {
        if y < self.y.lo || y > self.y.hi {
            return;
        }
        let py = self.y.map(y);
        let dash = if dashed { " stroke-dasharray='5 4'" } else { "" };
        out.push_str(&format!(
            "<line x1='{:.2}' y1='{py:.2}' x2='{:.2}' y2='{py:.2}' stroke='#888' stroke-width='1.2'{dash}/>\n",
            self.x.px0, self.x.px1
        ));
        out.push_str(&format!(
            "<text x='{:.2}' y='{:.2}' font-size='10' fill='#666'>{}</text>\n",
            self.x.px1 + 4.0,
            py + 3.0,
            xml_escape(label)
        ));
    }

    fn series(&self, out: &mut String, pts: &[(f64, f64)], color: &str, dash: &str) {
        let path: Vec<String> = pts
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", self.x.map(x), self.y.map(y)))
            .collect();
        let dash_attr = if dash.is_empty() {
            String::new()
        } else {
            format!(" stroke-dasharray='{dash}'")
        };
        out.push_str(&format!(
            "<polyline points='{}' fill='none' stroke='{color}' stroke-width='1.8'{dash_attr}/>\n",
            path.join(" ")
        ));
        for &(x, y) in pts {
            out.push_str(&format!(
                "<circle cx='{:.2}' cy='{:.2}' r='2.4' fill='{color}'/>\n",
                self.x.map(x),
                self.y.map(y)
            ));
        }
    }
}

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    let pad = 0.06 * (hi - lo).max(1e-6);
    (lo - pad, hi + pad)
}

/// Two-panel plot: fidelity and negativity versus step count, with the 2/3
/// fidelity bound and the W0 = 0 line drawn for reference.
pub fn curves_svg(rows: &[CurveRow], n_max: usize) -> String {
    // group rows by label, preserving first-appearance order
    let mut series: Vec<(String, Vec<&CurveRow>)> = Vec::new();
    for r in rows {
        match series.iter_mut().find(|(l, _)| *l == r.label) {
            Some((_, v)) => v.push(r),
            None => series.push((r.label.clone(), vec![r])),
        }
    }
    // dash index per input suffix (the part after the arm name)
    let suffix_of = |label: &str| -> String {
        for arm in ["suppressed_ideal_ancilla", "unsuppressed", "suppressed"] {
            if let Some(rest) = label.strip_prefix(arm) {
                return rest.to_string();
            }
        }
        String::new()
    };
    let mut suffixes: Vec<String> = Vec::new();
    for (label, _) in &series {
        let s = suffix_of(label);
        if !suffixes.contains(&s) {
            suffixes.push(s);
        }
    }

    let f_values: Vec<f64> = rows.iter().map(|r| r.fidelity).collect();
    let w_values: Vec<f64> = rows.iter().map(|r| r.w0).collect();
    let fold = |v: &[f64], f: fn(f64, f64) -> f64, init: f64| v.iter().fold(init, |a, &b| f(a, b));
    let (f_lo, f_hi) = padded(
        fold(&f_values, f64::min, 2.0 / 3.0),
        fold(&f_values, f64::max, 1.0),
    );
    let (w_lo, w_hi) = padded(
        fold(&w_values, f64::min, 0.0),
        fold(&w_values, f64::max, 0.0),
    );
    let x_hi = if n_max == 0 { 0.5 } else { n_max as f64 };

    let legend_rows = (series.len() + 2) / 3;
    let height = 360.0 + 22.0 * legend_rows as f64;
    let mut out = format!(
        "<svg xmlns='http://www.w3.org/2000/svg' width='920' height='{height:.0}' viewBox='0 0 920 {height:.0}' font-family='sans-serif'>\n<rect width='100%' height='100%' fill='white'/>\n"
    );

    let panels = [
        (
            "fidelity",
            Panel {
                x: Axis { lo: -0.2, hi: x_hi + 0.2, px0: 60.0, px1: 440.0 },
                y: Axis { lo: f_lo, hi: f_hi, px0: 320.0, px1: 40.0 },
            },
            true,
        ),
        (
            "W0",
            Panel {
                x: Axis { lo: -0.2, hi: x_hi + 0.2, px0: 530.0, px1: 880.0 },
                y: Axis { lo: w_lo, hi: w_hi, px0: 320.0, px1: 40.0 },
            },
            false,
        ),
    ];

    for (name, panel, is_fidelity) in &panels {
        let ticks = nice_ticks(panel.y.lo, panel.y.hi, 6);
        panel.frame(&mut out, &ticks, n_max);
        if *is_fidelity {
            panel.reference_line(&mut out, 2.0 / 3.0, true, "2/3");
        } else {
            panel.reference_line(&mut out, 0.0, false, "0");
        }
        for (label, pts) in &series {
            let suffix = suffix_of(label);
            let dash_index = suffixes.iter().position(|s| *s == suffix).unwrap_or(0);
            let (color, dash) = series_style(label, dash_index);
            let xy: Vec<(f64, f64)> = pts
                .iter()
                .map(|r| (r.n as f64, if *is_fidelity { r.fidelity } else { r.w0 }))
                .collect();
            panel.series(&mut out, &xy, color, dash);
        }
        out.push_str(&format!(
            "<text x='{:.2}' y='{:.2}' font-size='13' text-anchor='middle' fill='#111'>{} vs steps</text>\n",
            (panel.x.px0 + panel.x.px1) / 2.0,
            26.0,
            name
        ));
        out.push_str(&format!(
            "<text x='{:.2}' y='352' font-size='12' text-anchor='middle' fill='#111'>N</text>\n",
            (panel.x.px0 + panel.x.px1) / 2.0
        ));
    }

    for (i, (label, _)) in series.iter().enumerate() {
        let col = i % 3;
        let row = i / 3;
        let x = 70.0 + 290.0 * col as f64;
        let y = 368.0 + 22.0 * row as f64;
        let suffix = suffix_of(label);
        let dash_index = suffixes.iter().position(|s| *s == suffix).unwrap_or(0);
        let (color, dash) = series_style(label, dash_index);
        let dash_attr = if dash.is_empty() {
            String::new()
        } else {
            format!(" stroke-dasharray='{dash}'")
        };
        out.push_str(&format!(
            "<line x1='{x:.2}' y1='{y:.2}' x2='{:.2}' y2='{y:.2}' stroke='{color}' stroke-width='2'{dash_attr}/>\n",
            x + 26.0
        ));
        out.push_str(&format!(
            "<text x='{:.2}' y='{:.2}' font-size='11' fill='#333'>{}</text>\n",
            x + 32.0,
            y + 3.5,
            xml_escape(label)
        ));
    }

    out.push_str("</svg>\n");
    out
}

fn blend(t: f64, to: (u8, u8, u8)) -> String {
    let t = t.clamp(0.0, 1.0);
    let c = |a: u8| -> u8 { (255.0 + t * (a as f64 - 255.0)).round() as u8 };
    format!("#{:02x}{:02x}{:02x}", c(to.0), c(to.1), c(to.2))
}

/// Diverging color map: blue for negative, white at zero, red for positive.
fn wigner_color(w: f64, vmax: f64) -> String {
    if w >= 0.0 {
        blend(w / vmax, (178, 24, 43))
    } else {
        blend(-w / vmax, (33, 102, 172))
    }
}

/// Heat map of a Wigner function, annotated with the W0 metric and a marker
/// at the point it was read from.
pub fn wigner_svg(w: &WignerGrid, w0: f64, w0_at: (f64, f64), title: &str) -> String {
    let (nx, np) = (w.xs.len(), w.ps.len());
    // cap the rendered resolution; the CSV keeps the full grid
    let stride = 1 + (nx.max(np) - 1) / 160;
    let xi: Vec<usize> = (0..nx).step_by(stride).collect();
    let pj: Vec<usize> = (0..np).step_by(stride).collect();

    let vmax = w
        .w
        .iter()
        .fold(0.0f64, |a, &v| a.max(v.abs()))
        .max(1e-12);

    let (pl, pt, pw, ph) = (56.0, 46.0, 420.0, 420.0);
    let width = pl + pw + 20.0;
    let height = pt + ph + 44.0;
    let mut out = format!(
        "<svg xmlns='http://www.w3.org/2000/svg' width='{width:.0}' height='{height:.0}' viewBox='0 0 {width:.0} {height:.0}' font-family='sans-serif'>\n<rect width='100%' height='100%' fill='white'/>\n"
    );
    out.push_str(&format!(
        "<text x='{:.2}' y='20' font-size='13' text-anchor='middle' fill='#111'>{}</text>\n",
        pl + pw / 2.0,
        xml_escape(title)
    ));
    out.push_str(&format!(
        "<text x='{:.2}' y='36' font-size='12' text-anchor='middle' fill='#333'>W0 = {w0:.4} at ({:.2}, {:.2})</text>\n",
        pl + pw / 2.0,
        w0_at.0,
        w0_at.1
    ));

    let x_axis = Axis {
        lo: w.xs[0],
        hi: w.xs[nx - 1],
        px0: pl,
        px1: pl + pw,
    };
    let p_axis = Axis {
        lo: w.ps[0],
        hi: w.ps[np - 1],
        px0: pt + ph,
        px1: pt,
    };

    let cell_w = pw / xi.len() as f64;
    let cell_h = ph / pj.len() as f64;
    // draw row by row, merging horizontal runs of equal color
    for (row, &j) in pj.iter().enumerate() {
        let y = pt + ph - (row + 1) as f64 * cell_h;
        let mut run_start = 0usize;
        let mut run_color = wigner_color(w.w[[xi[0], j]], vmax);
        for col in 1..=xi.len() {
            let color = if col < xi.len() {
                wigner_color(w.w[[xi[col], j]], vmax)
            } else {
                String::new()
            };
            if col == xi.len() || color != run_color {
                let x = pl + run_start as f64 * cell_w;
                let wpx = (col - run_start) as f64 * cell_w;
                out.push_str(&format!(
                    "<rect x='{x:.2}' y='{y:.2}' width='{wpx:.2}' height='{:.2}' fill='{run_color}'/>\n",
                    cell_h + 0.3
                ));
                run_start = col;
                run_color = color;
            }
        }
    }

    for &t in &nice_ticks(x_axis.lo, x_axis.hi, 7) {
        let px = x_axis.map(t);
        out.push_str(&format!(
            "<line x1='{px:.2}' y1='{:.2}' x2='{px:.2}' y2='{:.2}' stroke='#333'/>\n",
            pt + ph,
            pt + ph + 4.0
        ));
        out.push_str(&format!(
            "<text x='{px:.2}' y='{:.2}' font-size='11' text-anchor='middle' fill='#333'>{}</text>\n",
            pt + ph + 16.0,
            tick_label(t)
        ));
    }
    for &t in &nice_ticks(p_axis.lo, p_axis.hi, 7) {
        let py = p_axis.map(t);
        out.push_str(&format!(
            "<line x1='{:.2}' y1='{py:.2}' x2='{:.2}' y2='{py:.2}' stroke='#333'/>\n",
            pl - 4.0,
            pl
        ));
        out.push_str(&format!(
            "<text x='{:.2}' y='{:.2}' font-size='11' text-anchor='end' fill='#333'>{}</text>\n",
            pl - 7.0,
            py + 3.5,
            tick_label(t)
        ));
    }
    out.push_str(&format!(
        "<rect x='{pl:.2}' y='{pt:.2}' width='{pw:.2}' height='{ph:.2}' fill='none' stroke='#333'/>\n"
    ));
    out.push_str(&format!(
        "<text x='{:.2}' y='{:.2}' font-size='12' text-anchor='middle' fill='#111'>x</text>\n",
        pl + pw / 2.0,
        pt + ph + 34.0
    ));
    out.push_str(&format!(
        "<text x='16' y='{:.2}' font-size='12' fill='#111'>p</text>\n",
        pt + ph / 2.0
    ));

    // W0 marker
    let mx = x_axis.map(w0_at.0);
    let my = p_axis.map(w0_at.1);
    out.push_str(&format!(
        "<circle cx='{mx:.2}' cy='{my:.2}' r='6' fill='none' stroke='#111' stroke-width='1.5'/>\n"
    ));
    out.push_str(&format!(
        "<line x1='{:.2}' y1='{my:.2}' x2='{:.2}' y2='{my:.2}' stroke='#111' stroke-width='1.5'/>\n",
        mx - 10.0,
        mx + 10.0
    ));
    out.push_str(&format!(
        "<line x1='{mx:.2}' y1='{:.2}' x2='{mx:.2}' y2='{:.2}' stroke='#111' stroke-width='1.5'/>\n",
        my - 10.0,
        my + 10.0
    ));

    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use eads_core::fockspace::PureFockVector;
    use eads_core::phasespace::{wigner_from_fock, GridSpec};

    #[test]
    fn curve_plot_draws_reference_lines_and_legend() {
        let rows: Vec<CurveRow> = (0..=3)
            .flat_map(|n| {
                [
                    CurveRow {
                        label: "suppressed".into(),
                        n,
                        fidelity: 0.9 - 0.05 * n as f64,
                        w0: -0.05 + 0.02 * n as f64,
                    },
                    CurveRow {
                        label: "unsuppressed".into(),
                        n,
                        fidelity: 0.9 - 0.09 * n as f64,
                        w0: -0.05 + 0.03 * n as f64,
                    },
                ]
            })
            .collect();
        let svg = curves_svg(&rows, 3);
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains(">2/3<"), "no-cloning reference line label");
        assert!(svg.contains("stroke='#1e8449'"));
        assert!(svg.contains("stroke='#c0392b'"));
        assert!(svg.contains(">suppressed<"));
        assert!(svg.contains(">unsuppressed<"));
        assert!(svg.ends_with("</svg>\n"));
    }

    #[test]
    fn wigner_plot_is_annotated_and_signed() {
        let one = PureFockVector::fock(1, 8).to_density();
        let grid = GridSpec::new(-4.0, 4.0, 81).unwrap();
        let (w, _) = wigner_from_fock(&one, &grid);
        let (w0, at) = w.w0_metric();
        assert!(w0 < 0.0);
        let svg = wigner_svg(&w, w0, at, "single photon");
        assert!(svg.contains("W0 = -0.3"), "origin dip annotation");
        // the negative core paints blue, the positive ring red
        assert!(svg.contains("fill='#2166ac'") || svg.contains("fill='#3d74b8'"));
        assert!(svg.contains("<circle"), "marker present");
        assert!(svg.ends_with("</svg>\n"));
    }

    #[test]
    fn ticks_are_round_numbers() {
        let t = nice_ticks(0.0, 1.0, 6);
        assert!(t.contains(&0.0) && t.contains(&1.0));
        assert!(t.len() >= 4 && t.len() <= 8);
        assert_eq!(tick_label(0.6000000000000001), "0.6");
        assert_eq!(tick_label(-0.0), "0");
    }
}
