//! Minimal SVG charts: line plots with axes, and a labelled image grid.

use std::fmt::Write as _;

use base64::Engine as _;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 56.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    pub dashed: bool,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Line chart over the given x and y ranges.
pub fn line_chart(
    title: &str,
    x_label: &str,
    y_label: &str,
    x_range: (f64, f64),
    y_range: (f64, f64),
    series: &[Series],
) -> String {
    let (x0, x1) = if x_range.1 > x_range.0 { x_range } else { (x_range.0, x_range.0 + 1.0) };
    let (y0, y1) = if y_range.1 > y_range.0 { y_range } else { (y_range.0, y_range.0 + 1.0) };
    let plot_w = WIDTH - 2.0 * MARGIN;
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * plot_w;
    let sy = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * plot_h;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let _ = writeln!(
        s,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
    );
    for i in 0..=5 {
        let t = i as f64 / 5.0;
        let (xv, yv) = (x0 + t * (x1 - x0), y0 + t * (y1 - y0));
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            sx(xv),
            HEIGHT - MARGIN + 16.0,
            tick(xv)
        );
        let _ = writeln!(
            s,
            r##"<line x1="{MARGIN}" x2="{:.1}" y1="{:.1}" y2="{:.1}" stroke="#ddd"/>"##,
            WIDTH - MARGIN,
            sy(yv),
            sy(yv)
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            MARGIN - 6.0,
            sy(yv) + 4.0,
            tick(yv)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        HEIGHT - 14.0,
        escape(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(y_label)
    );
    for (i, ser) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = ser
            .points
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let dash = if ser.dashed { r#" stroke-dasharray="6 4""# } else { "" };
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5"{dash} points="{}"/>"#,
            pts.join(" ")
        );
        let ly = MARGIN + 14.0 + 16.0 * i as f64;
        let lx = WIDTH - MARGIN - 150.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" x2="{}" y1="{}" y2="{}" stroke="{color}" stroke-width="2"{dash}/>"#,
            lx + 20.0,
            ly - 4.0,
            ly - 4.0
        );
        let _ = writeln!(s, r#"<text x="{}" y="{ly}">{}</text>"#, lx + 26.0, escape(&ser.name));
    }
    s.push_str("</svg>\n");
    s
}

fn tick(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e6 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

pub struct Tile {
    pub png: Vec<u8>,
    pub actual: String,
    pub predicted: String,
}

/// Grid of thumbnails captioned `Act:` / `Pre:`; misclassified captions are
/// red.
pub fn sample_grid(title: &str, tiles: &[Tile], columns: usize) -> String {
    const CELL: f64 = 128.0;
    const CAPTION: f64 = 34.0;
    let columns = columns.max(1);
    let rows = tiles.len().div_ceil(columns);
    let w = columns as f64 * CELL;
    let h = 30.0 + rows as f64 * (CELL + CAPTION);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        w / 2.0,
        escape(title)
    );
    let b64 = base64::engine::general_purpose::STANDARD;
    for (i, t) in tiles.iter().enumerate() {
        let x = (i % columns) as f64 * CELL;
        let y = 30.0 + (i / columns) as f64 * (CELL + CAPTION);
        let color = if t.actual == t.predicted { "black" } else { "red" };
        let _ = writeln!(
            s,
            r#"<image x="{}" y="{y}" width="{}" height="{}" style="image-rendering:pixelated" href="data:image/png;base64,{}"/>"#,
            x + 8.0,
            CELL - 16.0,
            CELL - 16.0,
            b64.encode(&t.png)
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" fill="{color}">Act: {}</text>"#,
            x + 8.0,
            y + CELL - 2.0,
            escape(&t.actual)
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" fill="{color}">Pre: {}</text>"#,
            x + 8.0,
            y + CELL + 14.0,
            escape(&t.predicted)
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chart_has_one_polyline_per_series() {
        let series: Vec<Series> = (0..3)
            .map(|i| Series {
                name: format!("s{i}"),
                points: vec![(0.0, 0.0), (1.0, i as f64)],
                dashed: i == 1,
            })
            .collect();
        let svg = line_chart("t", "x", "y", (0.0, 1.0), (0.0, 2.0), &series);
        assert_eq!(svg.matches("<polyline").count(), 3);
        assert!(svg.ends_with("</svg>\n"));
    }

    #[test]
    fn misclassified_tiles_are_red() {
        let tile = |a: &str, p: &str| Tile {
            png: vec![1, 2, 3],
            actual: a.into(),
            predicted: p.into(),
        };
        let svg = sample_grid("g", &[tile("A", "A"), tile("A", "B")], 2);
        assert_eq!(svg.matches(r#"fill="red""#).count(), 2);
        assert!(svg.contains("Act: A") && svg.contains("Pre: B"));
    }
}
