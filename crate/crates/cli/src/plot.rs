//! Static SVG plots, rendered from the already-written CSV files so plot
//! emission can never perturb the numerical outputs.

use std::fs;
use std::path::Path;

use crate::output::read_csv_columns;
use crate::CliError;

const W: f64 = 860.0;
const H: f64 = 520.0;
const MARGIN: f64 = 60.0;

struct Series<'a> {
    label: &'a str,
    color: &'a str,
    points: Vec<(f64, f64)>,
}

fn svg_plot(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let mut xmin = f64::INFINITY;
    let mut xmax = f64::NEG_INFINITY;
    let mut ymin = f64::INFINITY;
    let mut ymax = f64::NEG_INFINITY;
    for s in series {
        for &(x, y) in &s.points {
            xmin = xmin.min(x);
            xmax = xmax.max(x);
            ymin = ymin.min(y);
            ymax = ymax.max(y);
        }
    }
    if !xmin.is_finite() || xmax <= xmin {
        xmax = xmin + 1.0;
    }
    if !ymin.is_finite() || ymax <= ymin {
        ymax = ymin + 1.0;
    }
    let pad = 0.05 * (ymax - ymin);
    let (ymin, ymax) = (ymin - pad, ymax + pad);
    let to_x = |x: f64| MARGIN + (x - xmin) / (xmax - xmin) * (W - 2.0 * MARGIN);
    let to_y = |y: f64| H - MARGIN - (y - ymin) / (ymax - ymin) * (H - 2.0 * MARGIN);

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\" font-size=\"13\">\n"
    ));
    svg.push_str(&format!("<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n"));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">{title}</text>\n",
        W / 2.0
    ));
    // Axes.
    svg.push_str(&format!(
        "<line x1=\"{m}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n<line x1=\"{m}\" y1=\"{t}\" x2=\"{m}\" y2=\"{b}\" stroke=\"black\"/>\n",
        m = MARGIN,
        r = W - MARGIN,
        t = MARGIN,
        b = H - MARGIN
    ));
    for frac in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let xv = xmin + frac * (xmax - xmin);
        let yv = ymin + frac * (ymax - ymin);
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{:.3}</text>\n",
            to_x(xv),
            H - MARGIN + 20.0,
            xv
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{:.3}</text>\n",
            MARGIN - 6.0,
            to_y(yv) + 4.0,
            yv
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{x_label}</text>\n",
        W / 2.0,
        H - 12.0
    ));
    svg.push_str(&format!(
        "<text x=\"16\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">{y_label}</text>\n",
        H / 2.0,
        H / 2.0
    ));
    for (i, s) in series.iter().enumerate() {
        let path: Vec<String> = s
            .points
            .iter()
            .enumerate()
            .map(|(k, &(x, y))| {
                format!("{}{:.2},{:.2}", if k == 0 { "M" } else { "L" }, to_x(x), to_y(y))
            })
            .collect();
        svg.push_str(&format!(
            "<path d=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.4\"/>\n",
            path.join(" "),
            s.color
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" fill=\"{}\">{}</text>\n",
            W - MARGIN - 120.0,
            MARGIN + 18.0 * (i + 1) as f64,
            s.color,
            s.label
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

/// Plots |P|(t) (and populations when present) from a signal CSV.
pub fn plot_signal_csv(csv: &Path, svg_path: &Path, title: &str) -> Result<(), CliError> {
    let (header, cols) = read_csv_columns(csv)?;
    let idx = |name: &str| header.iter().position(|h| h == name);
    let (t, re, im) = match (idx("t_us"), idx("re_P"), idx("im_P")) {
        (Some(a), Some(b), Some(c)) => (&cols[a], &cols[b], &cols[c]),
        _ => return Err(CliError::Io(format!("{}: not a signal csv", csv.display()))),
    };
    let abs_p: Vec<(f64, f64)> =
        t.iter().zip(re.iter().zip(im.iter())).map(|(&t, (&r, &i))| (t, r.hypot(i))).collect();
    let mut series = vec![Series { label: "|P|", color: "#CC3311", points: abs_p }];
    for (name, color) in [("pop1", "#0077BB"), ("pop2", "#009988"), ("pop3", "#EE7733")] {
        if let Some(i) = idx(name) {
            series.push(Series {
                label: name,
                color,
                points: t.iter().cloned().zip(cols[i].iter().cloned()).collect(),
            });
        }
    }
    fs::write(svg_path, svg_plot(title, "t (us)", "signal", &series))
        .map_err(|e| CliError::Io(format!("{}: {e}", svg_path.display())))
}

/// Plots efficiency and normalized intensity against the sweep value.
pub fn plot_sweep_csv(csv: &Path, svg_path: &Path, title: &str) -> Result<(), CliError> {
    let (header, cols) = read_csv_columns(csv)?;
    let idx = |name: &str| header.iter().position(|h| h == name);
    let (v, eff, inten) = match (idx("value"), idx("efficiency"), idx("intensity")) {
        (Some(a), Some(b), Some(c)) => (&cols[a], &cols[b], &cols[c]),
        _ => return Err(CliError::Io(format!("{}: not a sweep csv", csv.display()))),
    };
    let imax = inten.iter().cloned().fold(f64::MIN, f64::max).max(1e-300);
    let series = [
        Series {
            label: "efficiency",
            color: "#CC3311",
            points: v.iter().cloned().zip(eff.iter().cloned()).collect(),
        },
        Series {
            label: "intensity (norm.)",
            color: "#0077BB",
            points: v.iter().zip(inten.iter()).map(|(&x, &y)| (x, y / imax)).collect(),
        },
    ];
    fs::write(svg_path, svg_plot(title, "value", "response", &series))
        .map_err(|e| CliError::Io(format!("{}: {e}", svg_path.display())))
}
