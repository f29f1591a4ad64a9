//! Static SVG figures: growth curves, lineage trees, IGR traces and rate
//! distributions.
//!
//! Output is SVG 1.1 with a fixed canvas and every coordinate printed with
//! two decimals, so identical inputs give identical bytes.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::analysis::{GrowthFit, IgrSeries};
use crate::error::{Error, Result};
use crate::tracking::TrackletGraph;
use crate::units::{Dimension, Quantity, QuantitySeries, Unit};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 72.0;
const RIGHT: f64 = 24.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 52.0;
const PHASE_FILLS: [&str; 3] = ["#e8f1fa", "#fdebe3", "#eaf6e6"];
const TRACE_COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// A labelled time interval shaded behind IGR traces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    pub name: String,
    pub start_h: f64,
    pub end_h: f64,
}

/// Format a coordinate with two decimals, never as negative zero.
fn c(v: f64) -> String {
    let s = format!("{v:.2}");
    if s == "-0.00" {
        "0.00".into()
    } else {
        s
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn unit_token(dimension: Dimension) -> String {
    Unit::for_dimension(dimension)
        .map(|u| u.token().to_string())
        .unwrap_or_else(|| dimension.to_string())
}

struct Canvas {
    out: String,
}

impl Canvas {
    fn new(title: &str) -> Self {
        let mut out = String::new();
        out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
        let _ = writeln!(
            out,
            "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\">",
            w = WIDTH,
            h = HEIGHT
        );
        let _ = writeln!(out, "<title>{}</title>", escape(title));
        let _ = writeln!(out, "<rect x=\"0\" y=\"0\" width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"#ffffff\"/>");
        let mut canvas = Canvas { out };
        canvas.text(WIDTH / 2.0, 22.0, "middle", 14.0, title, "title");
        canvas
    }

    fn raw(&mut self, s: &str) {
        self.out.push_str(s);
        self.out.push('\n');
    }

    fn text(&mut self, x: f64, y: f64, anchor: &str, size: f64, text: &str, class: &str) {
        let _ = writeln!(
            self.out,
            "<text class=\"{class}\" x=\"{}\" y=\"{}\" text-anchor=\"{anchor}\" font-size=\"{size}\">{}</text>",
            c(x),
            c(y),
            escape(text)
        );
    }

    fn line(&mut self, class: &str, a: (f64, f64), b: (f64, f64), style: &str) {
        let _ = writeln!(
            self.out,
            "<line class=\"{class}\" x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" {style}/>",
            c(a.0),
            c(a.1),
            c(b.0),
            c(b.1)
        );
    }

    fn finish(mut self) -> String {
        self.out.push_str("</svg>\n");
        self.out
    }
}

/// Linear or base-10 logarithmic mapping from data to canvas coordinates.
#[derive(Debug, Clone, Copy)]
struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
    from: f64,
    to: f64,
}

impl Axis {
    fn map(&self, v: f64) -> f64 {
        let v = if self.log { v.log10() } else { v };
        self.from + (v - self.lo) / (self.hi - self.lo) * (self.to - self.from)
    }
}

fn nice_step(range: f64, target: f64) -> f64 {
    let raw = range / target;
    let mag = 10f64.powf(raw.log10().floor());
    let r = raw / mag;
    let n = if r < 1.5 {
        1.0
    } else if r < 3.0 {
        2.0
    } else if r < 7.0 {
        5.0
    } else {
        10.0
    };
    n * mag
}

fn tick_label(v: f64, step: f64) -> String {
    let decimals = (-step.log10().floor()).max(0.0) as usize;
    let s = format!("{v:.decimals$}");
    if s.starts_with('-') && s.trim_start_matches(['-', '0', '.']).is_empty() {
        s[1..].to_string()
    } else {
        s
    }
}

/// Linear axis over `[lo, hi]` widened to nice tick boundaries when `snap`.
fn linear_axis(lo: f64, hi: f64, from: f64, to: f64, snap: bool) -> (Axis, Vec<(f64, String)>) {
    let (mut lo, mut hi) = (lo, hi);
    if hi <= lo {
        let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.1 };
        lo -= pad;
        hi += pad;
    }
    let step = nice_step(hi - lo, 5.0);
    if snap {
        lo = (lo / step).floor() * step;
        hi = (hi / step).ceil() * step;
    }
    let first = (lo / step - 1e-9).ceil() as i64;
    let last = (hi / step + 1e-9).floor() as i64;
    let ticks = (first..=last)
        .map(|k| {
            let v = k as f64 * step;
            (v, tick_label(v, step))
        })
        .collect();
    (Axis { lo, hi, log: false, from, to }, ticks)
}

/// Log axis spanning whole decades around positive data.
fn log_axis(lo: f64, hi: f64, from: f64, to: f64) -> (Axis, Vec<(f64, String)>) {
    let dlo = lo.log10().floor();
    let mut dhi = hi.log10().ceil();
    if dhi <= dlo {
        dhi = dlo + 1.0;
    }
    let ticks = (dlo as i64..=dhi as i64)
        .map(|k| {
            let v = 10f64.powi(k as i32);
            let label = if (-3..=4).contains(&k) {
                tick_label(v, v)
            } else {
                format!("1e{k}")
            };
            (v, label)
        })
        .collect();
    (Axis { lo: dlo, hi: dhi, log: true, from, to }, ticks)
}

fn plot_frame(canvas: &mut Canvas, x: &(Axis, Vec<(f64, String)>), y: &(Axis, Vec<(f64, String)>), xlabel: &str, ylabel: &str) {
    let (x0, x1) = (LEFT, WIDTH - RIGHT);
    let (y0, y1) = (HEIGHT - BOTTOM, TOP);
    canvas.raw(&format!(
        "<rect class=\"plot-area\" x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#333333\" stroke-width=\"1\"/>",
        c(x0),
        c(y1),
        c(x1 - x0),
        c(y0 - y1)
    ));
    for (v, label) in &x.1 {
        let px = x.0.map(*v);
        canvas.line("tick", (px, y0), (px, y0 + 5.0), "stroke=\"#333333\"");
        canvas.text(px, y0 + 18.0, "middle", 11.0, label, "tick-label");
    }
    for (v, label) in &y.1 {
        let py = y.0.map(*v);
        canvas.line("tick", (x0 - 5.0, py), (x0, py), "stroke=\"#333333\"");
        canvas.text(x0 - 8.0, py + 4.0, "end", 11.0, label, "tick-label");
    }
    canvas.text((x0 + x1) / 2.0, HEIGHT - 12.0, "middle", 12.0, xlabel, "axis-label");
    canvas.raw(&format!(
        "<text class=\"axis-label\" x=\"18.00\" y=\"{}\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 18.00 {})\">{}</text>",
        c((y0 + y1) / 2.0),
        c((y0 + y1) / 2.0),
        escape(ylabel)
    ));
}

fn time_label() -> String {
    format!("time [{}]", Unit::Hour.token())
}

/// Growth curve on a log axis with its log-linear fit as a dashed line.
pub fn render_growth(series: &QuantitySeries, fit: &GrowthFit) -> Result<String> {
    let points: Vec<(f64, f64)> = series
        .times_h()
        .iter()
        .zip(series.values())
        .filter(|(_, &v)| v > 0.0)
        .map(|(&t, &v)| (t, v))
        .collect();
    if points.is_empty() {
        return Err(Error::EmptyPlot(format!("{} has no positive values", series.name())));
    }
    if fit.n_points + fit.n_dropped != series.len() {
        return Err(Error::InconsistentInput(format!(
            "fit covers {} points but {} has {}",
            fit.n_points + fit.n_dropped,
            series.name(),
            series.len()
        )));
    }
    let (t0, t1) = (series.times_h()[0], series.times_h()[series.len() - 1]);
    let fitted = |t: f64| fit.predict(t);
    let vmin = points.iter().map(|p| p.1).fold(f64::INFINITY, f64::min).min(fitted(t0)).min(fitted(t1));
    let vmax = points.iter().map(|p| p.1).fold(0.0, f64::max).max(fitted(t0)).max(fitted(t1));
    let x = linear_axis(t0, t1, LEFT, WIDTH - RIGHT, false);
    let y = log_axis(vmin, vmax, HEIGHT - BOTTOM, TOP);
    let unit = unit_token(series.dimension());
    let mut canvas = Canvas::new(&format!("{} growth", series.name()));
    plot_frame(&mut canvas, &x, &y, &time_label(), &format!("{} [{unit}]", series.name()));
    for &(t, v) in &points {
        let (px, py) = (x.0.map(t), y.0.map(v));
        canvas.raw(&format!(
            "<path class=\"marker\" d=\"M {} {} L {} {} M {} {} L {} {}\" stroke=\"#1f77b4\" stroke-width=\"1.5\"/>",
            c(px - 3.0),
            c(py - 3.0),
            c(px + 3.0),
            c(py + 3.0),
            c(px - 3.0),
            c(py + 3.0),
            c(px + 3.0),
            c(py - 3.0)
        ));
    }
    canvas.line(
        "fit",
        (x.0.map(t0), y.0.map(fitted(t0))),
        (x.0.map(t1), y.0.map(fitted(t1))),
        "stroke=\"#d62728\" stroke-width=\"1.5\" stroke-dasharray=\"6 4\"",
    );
    let note = format!(
        "µ = {:.4} {}, R² = {:.4}",
        fit.mu_per_h(),
        Unit::PerHour.token(),
        fit.r_squared
    );
    canvas.text(LEFT + 10.0, TOP + 18.0, "start", 12.0, &note, "annotation");
    if fit.n_dropped > 0 {
        canvas.text(LEFT + 10.0, TOP + 34.0, "start", 12.0, &format!("n dropped: {}", fit.n_dropped), "annotation");
    }
    Ok(canvas.finish())
}

fn lerp_color(t: f64) -> String {
    let (a, b) = ([59.0, 76.0, 192.0], [180.0, 4.0, 38.0]);
    let t = t.clamp(0.0, 1.0);
    let ch = |k: usize| (a[k] + (b[k] - a[k]) * t).round() as u8;
    format!("#{:02x}{:02x}{:02x}", ch(0), ch(1), ch(2))
}

/// Leaf-ordered y positions for every tracklet, roots and children in
/// label order.
fn lineage_layout(tg: &TrackletGraph) -> Result<BTreeMap<u32, f64>> {
    fn place(
        tg: &TrackletGraph,
        label: u32,
        next_leaf: &mut f64,
        visiting: &mut BTreeSet<u32>,
        out: &mut BTreeMap<u32, f64>,
    ) -> Result<f64> {
        if !visiting.insert(label) || out.contains_key(&label) {
            return Err(Error::InvalidGraph(format!("tracklet {label} is reachable twice")));
        }
        let mut kids = tg.children(label).to_vec();
        kids.sort_unstable();
        let y = if kids.is_empty() {
            let y = *next_leaf;
            *next_leaf += 1.0;
            y
        } else {
            let ys = kids
                .iter()
                .map(|&k| place(tg, k, next_leaf, visiting, out))
                .collect::<Result<Vec<_>>>()?;
            (ys[0] + ys[ys.len() - 1]) / 2.0
        };
        visiting.remove(&label);
        out.insert(label, y);
        Ok(y)
    }
    let mut out = BTreeMap::new();
    let mut next_leaf = 0.0;
    let mut visiting = BTreeSet::new();
    let mut roots: Vec<u32> = tg.roots().map(|t| t.label).collect();
    roots.sort_unstable();
    for r in roots {
        place(tg, r, &mut next_leaf, &mut visiting, &mut out)?;
    }
    if out.len() != tg.len() {
        return Err(Error::InvalidGraph("lineage contains tracklets unreachable from any root".into()));
    }
    Ok(out)
}

/// Lineage forest with time on x and leaves spread on y.
pub fn render_lineage(
    tg: &TrackletGraph,
    frame_interval: Quantity,
    color_by: Option<&BTreeMap<u32, f64>>,
) -> Result<String> {
    frame_interval.expect_dimension(Dimension::TIME)?;
    if tg.is_empty() {
        return Err(Error::EmptyPlot("lineage has no tracklets".into()));
    }
    let layout = lineage_layout(tg)?;
    let dt = frame_interval.canonical();
    let n_leaves = layout.values().fold(0.0f64, |m, &y| m.max(y)) + 1.0;
    let t_end = tg.tracklets().map(|t| t.end_frame).max().unwrap_or(0) as f64 * dt;
    let x = linear_axis(0.0, t_end, LEFT, WIDTH - RIGHT, false);
    let legend_w = if color_by.is_some() { 90.0 } else { 0.0 };
    let x_axis = Axis { to: WIDTH - RIGHT - legend_w, ..x.0 };
    let ticks: Vec<(f64, String)> = x.1.clone();
    let row = (HEIGHT - BOTTOM - TOP) / n_leaves;
    let y_of = |y: f64| TOP + (y + 0.5) * row;
    let (cmin, cmax) = color_by
        .map(|m| {
            m.values()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)))
        })
        .unwrap_or((0.0, 0.0));
    let color = |label: u32| -> String {
        match color_by.and_then(|m| m.get(&label)) {
            Some(&v) if cmax > cmin => lerp_color((v - cmin) / (cmax - cmin)),
            Some(_) => lerp_color(0.0),
            None => "#333333".into(),
        }
    };

    let mut canvas = Canvas::new("Lineage");
    for (v, label) in &ticks {
        let px = x_axis.map(*v);
        canvas.line("tick", (px, HEIGHT - BOTTOM), (px, HEIGHT - BOTTOM + 5.0), "stroke=\"#333333\"");
        canvas.text(px, HEIGHT - BOTTOM + 18.0, "middle", 11.0, label, "tick-label");
    }
    canvas.line(
        "axis",
        (LEFT, HEIGHT - BOTTOM),
        (x_axis.to, HEIGHT - BOTTOM),
        "stroke=\"#333333\"",
    );
    canvas.text((LEFT + x_axis.to) / 2.0, HEIGHT - 12.0, "middle", 12.0, &time_label(), "axis-label");
    for t in tg.tracklets() {
        let y = y_of(layout[&t.label]);
        let (xa, xb) = (x_axis.map(t.birth_frame as f64 * dt), x_axis.map(t.end_frame as f64 * dt));
        let stroke = color(t.label);
        canvas.raw(&format!(
            "<path class=\"tracklet\" data-label=\"{}\" d=\"M {} {} H {}\" stroke=\"{stroke}\" stroke-width=\"2\" fill=\"none\"/>",
            t.label,
            c(xa),
            c(y),
            c(xb.max(xa + 1.0))
        ));
        for &child in tg.children(t.label) {
            let ch = &tg.get(child).expect("validated child");
            let yc = y_of(layout[&child]);
            canvas.raw(&format!(
                "<path class=\"branch\" d=\"M {} {} V {} H {}\" stroke=\"{stroke}\" stroke-width=\"1\" fill=\"none\"/>",
                c(xb),
                c(y),
                c(yc),
                c(x_axis.map(ch.birth_frame as f64 * dt))
            ));
        }
    }
    if color_by.is_some() {
        let lx = WIDTH - RIGHT - legend_w + 20.0;
        for k in 0..5 {
            let f = k as f64 / 4.0;
            canvas.raw(&format!(
                "<rect class=\"legend\" x=\"{}\" y=\"{}\" width=\"14.00\" height=\"14.00\" fill=\"{}\"/>",
                c(lx),
                c(TOP + 10.0 + k as f64 * 18.0),
                lerp_color(f)
            ));
            canvas.text(
                lx + 20.0,
                TOP + 21.0 + k as f64 * 18.0,
                "start",
                10.0,
                &format!("{:.3}", cmin + f * (cmax - cmin)),
                "legend-label",
            );
        }
    }
    Ok(canvas.finish())
}

/// IGR traces over shaded phases.
pub fn render_igr(series: &[IgrSeries], phases: &[Phase]) -> Result<String> {
    let pts: Vec<(f64, f64)> = series
        .iter()
        .flat_map(|s| s.times_h.iter().copied().zip(s.igr.iter().copied()))
        .collect();
    if pts.is_empty() {
        return Err(Error::EmptyPlot("no IGR values".into()));
    }
    let mut tlo = pts.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let mut thi = pts.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    for p in phases {
        tlo = tlo.min(p.start_h);
        thi = thi.max(p.end_h);
    }
    let vlo = pts.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let vhi = pts.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let x = linear_axis(tlo, thi, LEFT, WIDTH - RIGHT, false);
    let y = linear_axis(vlo, vhi, HEIGHT - BOTTOM, TOP, true);
    let mut canvas = Canvas::new("Instantaneous growth rate");
    for (k, p) in phases.iter().enumerate() {
        let (xa, xb) = (x.0.map(p.start_h), x.0.map(p.end_h));
        canvas.raw(&format!(
            "<rect class=\"phase\" data-name=\"{}\" x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{}\"/>",
            escape(&p.name),
            c(xa),
            c(TOP),
            c(xb - xa),
            c(HEIGHT - BOTTOM - TOP),
            PHASE_FILLS[k % PHASE_FILLS.len()]
        ));
        canvas.text((xa + xb) / 2.0, TOP + 14.0, "middle", 11.0, &p.name, "phase-label");
    }
    let ylabel = format!("IGR [{}]", Unit::SquareMicrometerPerHour.token());
    plot_frame(&mut canvas, &x, &y, &time_label(), &ylabel);
    for (k, s) in series.iter().enumerate() {
        let coords: Vec<String> = s
            .times_h
            .iter()
            .zip(&s.igr)
            .map(|(&t, &v)| format!("{},{}", c(x.0.map(t)), c(y.0.map(v))))
            .collect();
        canvas.raw(&format!(
            "<polyline class=\"igr\" data-label=\"{}\" points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.2\" stroke-opacity=\"0.8\"/>",
            s.label,
            coords.join(" "),
            TRACE_COLORS[k % TRACE_COLORS.len()]
        ));
    }
    Ok(canvas.finish())
}

/// Per-replicate growth rates with a mean ± sample std whisker.
pub fn render_rate_distribution(measure: &str, rates: &[(String, f64)]) -> Result<String> {
    if rates.is_empty() {
        return Err(Error::EmptyPlot(format!("no {measure} rates")));
    }
    let n = rates.len() as f64;
    let mean = rates.iter().map(|r| r.1).sum::<f64>() / n;
    let std = if rates.len() > 1 {
        (rates.iter().map(|r| (r.1 - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let vlo = rates.iter().map(|r| r.1).fold(mean - std, f64::min);
    let vhi = rates.iter().map(|r| r.1).fold(mean + std, f64::max);
    let y = linear_axis(vlo, vhi, HEIGHT - BOTTOM, TOP, true);
    let slots = n + 1.0;
    let x_of = |k: f64| LEFT + (k + 0.5) / slots * (WIDTH - RIGHT - LEFT);
    let mut canvas = Canvas::new(&format!("{measure} growth rate per replicate"));
    let x = (
        Axis { lo: 0.0, hi: 1.0, log: false, from: LEFT, to: WIDTH - RIGHT },
        Vec::new(),
    );
    plot_frame(&mut canvas, &x, &y, "replicate", &format!("mu [{}]", Unit::PerHour.token()));
    for (k, (origin, mu)) in rates.iter().enumerate() {
        let px = x_of(k as f64);
        canvas.raw(&format!(
            "<circle class=\"replicate\" data-origin=\"{}\" cx=\"{}\" cy=\"{}\" r=\"4.00\" fill=\"#1f77b4\"/>",
            escape(origin),
            c(px),
            c(y.0.map(*mu))
        ));
        canvas.text(px, HEIGHT - BOTTOM + 18.0, "middle", 10.0, origin, "tick-label");
    }
    let wx = x_of(n);
    let (ylo, yhi, ym) = (y.0.map(mean - std), y.0.map(mean + std), y.0.map(mean));
    canvas.raw(&format!(
        "<g class=\"whisker\" stroke=\"#d62728\" stroke-width=\"1.5\"><line x1=\"{x}\" y1=\"{a}\" x2=\"{x}\" y2=\"{b}\"/><line x1=\"{l}\" y1=\"{a}\" x2=\"{r}\" y2=\"{a}\"/><line x1=\"{l}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\"/><line x1=\"{l2}\" y1=\"{m}\" x2=\"{r2}\" y2=\"{m}\"/></g>",
        x = c(wx),
        a = c(ylo),
        b = c(yhi),
        l = c(wx - 6.0),
        r = c(wx + 6.0),
        l2 = c(wx - 10.0),
        r2 = c(wx + 10.0),
        m = c(ym)
    ));
    canvas.text(wx, HEIGHT - BOTTOM + 18.0, "middle", 10.0, "mean ± std", "tick-label");
    canvas.text(
        LEFT + 10.0,
        TOP + 18.0,
        "start",
        12.0,
        &format!("mean = {mean:.4}, std = {std:.4}, n = {}", rates.len()),
        "annotation",
    );
    Ok(canvas.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{fit_loglinear, Measure};
    use crate::tracking::{Fate, Tracklet};

    fn parse(svg: &str) -> roxmltree::Document<'_> {
        roxmltree::Document::parse(svg).expect("well-formed SVG")
    }

    fn class_nodes<'a>(doc: &'a roxmltree::Document<'a>, class: &str) -> Vec<roxmltree::Node<'a, 'a>> {
        doc.descendants().filter(|n| n.attribute("class") == Some(class)).collect()
    }

    fn num(n: &roxmltree::Node, attr: &str) -> f64 {
        n.attribute(attr).unwrap().parse().unwrap()
    }

    #[test]
    fn growth_fit_passes_through_exact_markers() {
        let t = vec![0.0, 1.0, 2.0, 3.0];
        let y: Vec<f64> = t.iter().map(|t: &f64| 2.0 * (0.5 * t).exp()).collect();
        let s = QuantitySeries::from_canonical("TSCA", t, y, Dimension::AREA).unwrap();
        let fit = fit_loglinear(&s, Measure::TSCA).unwrap();
        let svg = render_growth(&s, &fit).unwrap();
        let doc = parse(&svg);
        let root = doc.root_element();
        assert!(root.attribute("viewBox").is_some());
        let line = &class_nodes(&doc, "fit")[0];
        let (x1, y1, x2, y2) = (num(line, "x1"), num(line, "y1"), num(line, "x2"), num(line, "y2"));
        let markers = class_nodes(&doc, "marker");
        assert_eq!(markers.len(), 4);
        let plot_h = HEIGHT - BOTTOM - TOP;
        for m in markers {
            let d: Vec<f64> = m
                .attribute("d")
                .unwrap()
                .split_whitespace()
                .filter_map(|s| s.parse().ok())
                .collect();
            let (cx, cy) = (d[0] + 3.0, d[1] + 3.0);
            let on_line = y1 + (y2 - y1) * (cx - x1) / (x2 - x1);
            // The log axis spans whole decades; 0.1% of a decade in canvas units.
            let decades = 1.0;
            assert!((on_line - cy).abs() <= 0.001 * plot_h / decades + 0.01, "{on_line} vs {cy}");
        }
        assert!(svg.contains("[um2]"));
    }

    #[test]
    fn growth_notes_dropped_points() {
        let s = QuantitySeries::from_canonical("CC", vec![0.0, 1.0, 2.0], vec![0.0, 1.0, 2.0], Dimension::DIMENSIONLESS)
            .unwrap();
        let fit = fit_loglinear(&s, Measure::CC).unwrap();
        assert!(render_growth(&s, &fit).unwrap().contains("n dropped: 1"));
        let empty = QuantitySeries::from_canonical("CC", vec![0.0, 1.0], vec![0.0, 0.0], Dimension::DIMENSIONLESS)
            .unwrap();
        assert!(matches!(render_growth(&empty, &fit), Err(Error::EmptyPlot(_))));
    }

    fn tl(label: u32, parent: Option<u32>, birth: usize, end: usize, fate: Fate) -> Tracklet {
        Tracklet {
            label,
            parent,
            detections: (0..=(end - birth) as u64).map(|k| label as u64 * 1000 + k).collect(),
            birth_frame: birth,
            end_frame: end,
            fate,
        }
    }

    #[test]
    fn lineage_shapes() {
        let single = TrackletGraph::new(vec![tl(1, None, 0, 4, Fate::MovieEnd)]).unwrap();
        let svg = render_lineage(&single, Quantity::hours(0.25), None).unwrap();
        let doc = parse(&svg);
        assert_eq!(class_nodes(&doc, "tracklet").len(), 1);
        assert!(class_nodes(&doc, "branch").is_empty());

        let y = TrackletGraph::new(vec![
            tl(1, None, 0, 2, Fate::Divided),
            tl(2, Some(1), 3, 5, Fate::MovieEnd),
            tl(3, Some(1), 3, 5, Fate::MovieEnd),
        ])
        .unwrap();
        let svg = render_lineage(&y, Quantity::hours(0.25), None).unwrap();
        let doc = parse(&svg);
        let branches = class_nodes(&doc, "branch");
        assert_eq!(branches.len(), 2);
        let parent_end = class_nodes(&doc, "tracklet")[0]
            .attribute("d")
            .unwrap()
            .split_whitespace()
            .last()
            .unwrap()
            .to_string();
        for b in branches {
            assert!(b.attribute("d").unwrap().starts_with(&format!("M {parent_end} ")));
        }
    }

    #[test]
    fn three_generations_have_four_distinct_leaf_rows() {
        let g = TrackletGraph::new(vec![
            tl(1, None, 0, 1, Fate::Divided),
            tl(2, Some(1), 2, 3, Fate::Divided),
            tl(3, Some(1), 2, 3, Fate::Divided),
            tl(4, Some(2), 4, 5, Fate::MovieEnd),
            tl(5, Some(2), 4, 5, Fate::MovieEnd),
            tl(6, Some(3), 4, 5, Fate::MovieEnd),
            tl(7, Some(3), 4, 5, Fate::MovieEnd),
        ])
        .unwrap();
        let leaves: BTreeSet<u32> = g.leaves().map(|t| t.label).collect();
        let svg = render_lineage(&g, Quantity::hours(1.0), None).unwrap();
        let doc = parse(&svg);
        let ys: BTreeSet<String> = class_nodes(&doc, "tracklet")
            .iter()
            .filter(|n| leaves.contains(&n.attribute("data-label").unwrap().parse().unwrap()))
            .map(|n| n.attribute("d").unwrap().split_whitespace().nth(2).unwrap().to_string())
            .collect();
        assert_eq!(ys.len(), leaves.len());
        assert_eq!(leaves.len(), 4);
    }

    #[test]
    fn lineage_legend_when_colored() {
        let g = TrackletGraph::new(vec![tl(1, None, 0, 4, Fate::MovieEnd), tl(2, None, 0, 4, Fate::Lost)]).unwrap();
        let colors = BTreeMap::from([(1, 0.0), (2, 1.0)]);
        let svg = render_lineage(&g, Quantity::hours(1.0), Some(&colors)).unwrap();
        let doc = parse(&svg);
        assert_eq!(class_nodes(&doc, "legend").len(), 5);
        assert!(render_lineage(&g, Quantity::um(1.0), None).is_err());
    }

    #[test]
    fn igr_constant_is_flat_and_phases_abut() {
        let s = IgrSeries {
            label: 1,
            times_h: (0..13).map(|k| k as f64 * 0.25).collect(),
            igr: vec![0.2; 13],
            sigma_frames: 4.0,
        };
        let phases = [
            Phase { name: "aerobic".into(), start_h: 0.0, end_h: 1.5 },
            Phase { name: "anaerobic".into(), start_h: 1.5, end_h: 3.0 },
        ];
        let svg = render_igr(&[s], &phases).unwrap();
        let doc = parse(&svg);
        let line = &class_nodes(&doc, "igr")[0];
        let ys: BTreeSet<&str> = line
            .attribute("points")
            .unwrap()
            .split_whitespace()
            .map(|p| p.split(',').nth(1).unwrap())
            .collect();
        assert_eq!(ys.len(), 1);
        let rects = class_nodes(&doc, "phase");
        assert_eq!(rects.len(), 2);
        let end0 = num(&rects[0], "x") + num(&rects[0], "width");
        assert!((end0 - num(&rects[1], "x")).abs() < 0.011);
        assert!(matches!(render_igr(&[], &phases), Err(Error::EmptyPlot(_))));
    }

    #[test]
    fn rate_distribution_glyphs() {
        let rates: Vec<(String, f64)> = (0..5).map(|k| (format!("r{k}"), 0.52 + 0.01 * k as f64)).collect();
        let svg = render_rate_distribution("TSCA", &rates).unwrap();
        let doc = parse(&svg);
        assert_eq!(class_nodes(&doc, "replicate").len(), 5);
        assert_eq!(class_nodes(&doc, "whisker").len(), 1);
        assert!(matches!(render_rate_distribution("TSCA", &[]), Err(Error::EmptyPlot(_))));
    }

    #[test]
    fn ticks_avoid_negative_zero() {
        assert_eq!(c(-0.001), "0.00");
        assert_eq!(tick_label(-0.0, 0.5), "0.0");
        let (_, ticks) = linear_axis(-1.0, 1.0, 0.0, 1.0, true);
        assert!(ticks.iter().any(|t| t.1 == "0.0"));
    }
}
