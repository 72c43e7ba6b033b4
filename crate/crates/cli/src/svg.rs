//! Hand-rolled SVG writers for the two plot artifacts: the sweep bar chart
//! and the mask visualization page. Output is deterministic text with fixed
//! float formatting and no wall-clock fields, so identical runs produce
//! byte-identical files.

use std::fmt::Write as _;

use adacred_core::{Error, Real, Result};

// ── Bar chart ──────────────────────────────────────────────────────────────

/// One bar; `mean == None` renders an absent cell.
#[derive(Debug, Clone)]
pub struct Bar {
    pub label: String,
    pub mean: Option<f64>,
    pub std: f64,
}

const BAR_W: f64 = 56.0;
const SLOT_W: f64 = 88.0;
const PLOT_H: f64 = 240.0;
const LEFT: f64 = 64.0;
const TOP: f64 = 48.0;

/// Vertical bars with one-sigma whiskers on a zero-based y axis.
pub fn bar_chart(title: &str, y_label: &str, bars: &[Bar]) -> String {
    let width = LEFT + SLOT_W * bars.len() as f64 + 24.0;
    let height = TOP + PLOT_H + 56.0;
    let mut ymax: f64 = 1.0;
    for b in bars {
        if let Some(m) = b.mean {
            ymax = ymax.max(m + b.std);
        }
    }
    ymax = (ymax * 4.0).ceil() / 4.0;
    let y = |v: f64| TOP + PLOT_H - v / ymax * PLOT_H;

    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{height:.0}\" \
         viewBox=\"0 0 {width:.0} {height:.0}\" font-family=\"monospace\" font-size=\"12\">"
    );
    let _ = writeln!(s, "<rect width=\"{width:.0}\" height=\"{height:.0}\" fill=\"#ffffff\"/>");
    let _ = writeln!(s, "<text x=\"{LEFT:.0}\" y=\"22\" font-size=\"14\">{}</text>", escape(title));
    let _ = writeln!(
        s,
        "<text x=\"14\" y=\"{:.1}\" transform=\"rotate(-90 14 {:.1})\" text-anchor=\"middle\">{}</text>",
        TOP + PLOT_H / 2.0,
        TOP + PLOT_H / 2.0,
        escape(y_label)
    );

    // Axis and horizontal gridlines at five even ticks.
    for i in 0..=4 {
        let v = ymax * i as f64 / 4.0;
        let yy = y(v);
        let _ = writeln!(
            s,
            "<line x1=\"{LEFT:.0}\" y1=\"{yy:.1}\" x2=\"{:.1}\" y2=\"{yy:.1}\" \
             stroke=\"#dddddd\"/>",
            width - 24.0
        );
        let _ = writeln!(
            s,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{v:.2}</text>",
            LEFT - 6.0,
            yy + 4.0
        );
    }
    let _ = writeln!(
        s,
        "<line x1=\"{LEFT:.0}\" y1=\"{TOP:.0}\" x2=\"{LEFT:.0}\" y2=\"{:.1}\" stroke=\"#000000\"/>",
        TOP + PLOT_H
    );
    let _ = writeln!(
        s,
        "<line x1=\"{LEFT:.0}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"#000000\"/>",
        TOP + PLOT_H,
        width - 24.0,
        TOP + PLOT_H
    );

    for (i, b) in bars.iter().enumerate() {
        let x0 = LEFT + SLOT_W * i as f64 + (SLOT_W - BAR_W) / 2.0;
        let xc = x0 + BAR_W / 2.0;
        match b.mean {
            Some(m) => {
                let yt = y(m);
                let _ = writeln!(
                    s,
                    "<rect x=\"{x0:.1}\" y=\"{yt:.1}\" width=\"{BAR_W:.0}\" height=\"{:.1}\" \
                     fill=\"#5b8def\"/>",
                    TOP + PLOT_H - yt
                );
                if b.std > 0.0 {
                    let (ylo, yhi) = (y((m - b.std).max(0.0)), y((m + b.std).min(ymax)));
                    let _ = writeln!(
                        s,
                        "<line x1=\"{xc:.1}\" y1=\"{ylo:.1}\" x2=\"{xc:.1}\" y2=\"{yhi:.1}\" \
                         stroke=\"#222222\"/>"
                    );
                    for yy in [ylo, yhi] {
                        let _ = writeln!(
                            s,
                            "<line x1=\"{:.1}\" y1=\"{yy:.1}\" x2=\"{:.1}\" y2=\"{yy:.1}\" \
                             stroke=\"#222222\"/>",
                            xc - 7.0,
                            xc + 7.0
                        );
                    }
                }
                let _ = writeln!(
                    s,
                    "<text x=\"{xc:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{m:.2}</text>",
                    yt - 6.0
                );
            }
            None => {
                let _ = writeln!(
                    s,
                    "<rect x=\"{x0:.1}\" y=\"{:.1}\" width=\"{BAR_W:.0}\" height=\"36\" \
                     fill=\"none\" stroke=\"#999999\" stroke-dasharray=\"4 3\"/>",
                    TOP + PLOT_H - 36.0
                );
                let _ = writeln!(
                    s,
                    "<text x=\"{xc:.1}\" y=\"{:.1}\" text-anchor=\"middle\" fill=\"#999999\">absent</text>",
                    TOP + PLOT_H - 14.0
                );
            }
        }
        let _ = writeln!(
            s,
            "<text x=\"{xc:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>",
            TOP + PLOT_H + 18.0,
            escape(&b.label)
        );
    }
    s.push_str("</svg>\n");
    s
}

// ── Mask page ──────────────────────────────────────────────────────────────

/// Inputs for one rendered window. Spatial rows follow the model's token
/// order: `token_prefix` always-on tokens, then one token per patch in
/// row-major patch order. Temporal rows interleave credit (even slots) and
/// state (odd slots) tokens.
#[derive(Debug)]
pub struct MaskPageInput<'a> {
    /// Raw frames for the window, each `frame_h * frame_w` in [0, 1].
    pub frames: &'a [Vec<Real>],
    pub frame_h: usize,
    pub frame_w: usize,
    pub patch: usize,
    pub token_prefix: usize,
    /// Per layer: `frames.len() * (token_prefix + patches)` binary values.
    pub spatial: &'a [Vec<Real>],
    /// Per layer: `2 * frames.len()` binary values.
    pub temporal: &'a [Vec<Real>],
}

const SCALE: f64 = 4.0;
const FRAME_GAP: f64 = 10.0;
const STRIP_H: f64 = 14.0;
const LABEL_W: f64 = 76.0;

pub fn mask_page(input: &MaskPageInput) -> Result<String> {
    let t = input.frames.len();
    let (fh, fw, p) = (input.frame_h, input.frame_w, input.patch);
    if t == 0 || fh == 0 || fw == 0 || p == 0 || fh % p != 0 || fw % p != 0 {
        return Err(Error::Parameter("mask page needs frames divisible into patches".into()));
    }
    let (gh, gw) = (fh / p, fw / p);
    let s_tok = input.token_prefix + gh * gw;
    if input.spatial.len() != input.temporal.len() {
        return Err(Error::Parameter("spatial and temporal layer counts differ".into()));
    }
    for (l, row) in input.spatial.iter().enumerate() {
        if row.len() != t * s_tok {
            return Err(Error::Parameter(format!(
                "spatial layer {l} has {} values, expected {}",
                row.len(),
                t * s_tok
            )));
        }
    }
    for (l, row) in input.temporal.iter().enumerate() {
        if row.len() != 2 * t {
            return Err(Error::Parameter(format!(
                "temporal layer {l} has {} values, expected {}",
                row.len(),
                2 * t
            )));
        }
    }
    for frame in input.frames {
        if frame.len() != fh * fw {
            return Err(Error::Parameter("frame size does not match extents".into()));
        }
    }

    let frame_w_px = fw as f64 * SCALE;
    let frame_h_px = fh as f64 * SCALE;
    let block_h = frame_h_px + 2.0 * (STRIP_H + 2.0) + 30.0;
    let width = LABEL_W + t as f64 * (frame_w_px + FRAME_GAP) + 14.0;
    let height = 46.0 + input.spatial.len() as f64 * block_h;
    let fx = |k: usize| LABEL_W + k as f64 * (frame_w_px + FRAME_GAP);

    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{height:.0}\" \
         viewBox=\"0 0 {width:.0} {height:.0}\" font-family=\"monospace\" font-size=\"11\">"
    );
    let _ = writeln!(s, "<rect width=\"{width:.0}\" height=\"{height:.0}\" fill=\"#ffffff\"/>");
    let _ = writeln!(
        s,
        "<text x=\"{LABEL_W:.0}\" y=\"18\" font-size=\"13\">dropped patches darkened; strips: \
         credit (g) and state (h) tokens per step</text>"
    );
    for k in 0..t {
        let _ = writeln!(
            s,
            "<text x=\"{:.1}\" y=\"36\" text-anchor=\"middle\">t{k}</text>",
            fx(k) + frame_w_px / 2.0
        );
    }

    for (l, (sp, tp)) in input.spatial.iter().zip(input.temporal).enumerate() {
        let y0 = 46.0 + l as f64 * block_h;
        let _ = writeln!(
            s,
            "<text x=\"8\" y=\"{:.1}\">layer {l}</text>",
            y0 + frame_h_px / 2.0 + 4.0
        );
        for k in 0..t {
            let x0 = fx(k);
            // Frame pixels: black background, nonzero pixels drawn on top.
            let _ = writeln!(
                s,
                "<rect x=\"{x0:.1}\" y=\"{y0:.1}\" width=\"{frame_w_px:.0}\" \
                 height=\"{frame_h_px:.0}\" fill=\"#000000\"/>"
            );
            for (i, &v) in input.frames[k].iter().enumerate() {
                if v <= 0.004 {
                    continue;
                }
                let g = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
                let (r, c) = (i / fw, i % fw);
                let _ = writeln!(
                    s,
                    "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"{SCALE:.0}\" height=\"{SCALE:.0}\" \
                     fill=\"rgb({g},{g},{g})\"/>",
                    x0 + c as f64 * SCALE,
                    y0 + r as f64 * SCALE
                );
            }
            // Darken dropped patches for this step.
            for pi in 0..gh * gw {
                if sp[k * s_tok + input.token_prefix + pi] != 0.0 {
                    continue;
                }
                let (pr, pc) = (pi / gw, pi % gw);
                let _ = writeln!(
                    s,
                    "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"{:.0}\" height=\"{:.0}\" \
                     fill=\"#000000\" opacity=\"0.72\"/>",
                    x0 + (pc * p) as f64 * SCALE,
                    y0 + (pr * p) as f64 * SCALE,
                    p as f64 * SCALE,
                    p as f64 * SCALE
                );
            }
            // Temporal strip: credit token (even slot), then state token.
            for (row, slot) in [(0usize, 2 * k), (1, 2 * k + 1)] {
                let yy = y0 + frame_h_px + 4.0 + row as f64 * (STRIP_H + 2.0);
                let fill = if tp[slot] != 0.0 { "#7bc96f" } else { "#333333" };
                let _ = writeln!(
                    s,
                    "<rect x=\"{x0:.1}\" y=\"{yy:.1}\" width=\"{frame_w_px:.0}\" \
                     height=\"{STRIP_H:.0}\" fill=\"{fill}\"/>"
                );
            }
        }
        for (row, name) in [(0.0, "g"), (1.0, "h")] {
            let yy = y0 + frame_h_px + 4.0 + row * (STRIP_H + 2.0);
            let _ = writeln!(
                s,
                "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{name}</text>",
                LABEL_W - 6.0,
                yy + STRIP_H - 3.0
            );
        }
    }
    s.push_str("</svg>\n");
    Ok(s)
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
