//! SVG Gantt charts of a schedule: one row per machine, one column per day.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use mixplan::domain::{unit_time, Day, MachineId, ProductId, Scenario};
use mixplan::scheduler::Schedule;

const PALETTE: [&str; 12] = [
    "#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948", "#b07aa1", "#ff9da7",
    "#9c755f", "#bab0ac", "#86bcb6", "#d37295",
];

const PX_PER_HOUR: f64 = 2.0;
const ROW_HEIGHT: f64 = 22.0;
const ROW_GAP: f64 = 6.0;
const LEFT: f64 = 90.0;
const TOP: f64 = 30.0;

/// Fill color of a product, fixed by a hash of its id.
pub fn product_color(product: &ProductId) -> &'static str {
    // FNV-1a, stable across runs and platforms.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in product.as_str().bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    PALETTE[(h % PALETTE.len() as u64) as usize]
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Renders the machines of `group` (all machines when `None`). Each day
/// shows changeover downtime first, hatched, then production blocks in
/// mold order with widths proportional to busy hours.
pub fn render(schedule: &Schedule, scenario: &Scenario, group: Option<&str>) -> String {
    let machines: Vec<_> = scenario
        .machines()
        .iter()
        .filter(|m| group.is_none_or(|g| m.group.name() == g))
        .collect();
    let days = scenario.horizon_days();
    let day_width = machines
        .iter()
        .map(|m| m.day_hours)
        .fold(24.0_f64, f64::max)
        * PX_PER_HOUR;
    let chart_width = f64::from(days) * day_width;
    let chart_height = machines.len() as f64 * (ROW_HEIGHT + ROW_GAP);

    // Busy hours per (machine, day, product).
    let mut busy: BTreeMap<(&MachineId, Day), BTreeMap<&ProductId, f64>> = BTreeMap::new();
    for ((o, m, d), &units) in &schedule.z {
        let (Ok(order), Ok(machine)) = (scenario.order(o), scenario.machine(m)) else {
            continue;
        };
        let Ok(product) = scenario.product(&order.product) else {
            continue;
        };
        *busy
            .entry((m, *d))
            .or_default()
            .entry(&product.id)
            .or_default() += units * unit_time(machine, product);
    }
    let mut shown: Vec<&ProductId> = busy.values().flat_map(|p| p.keys().copied()).collect();
    shown.sort();
    shown.dedup();

    let legend_top = TOP + chart_height + 30.0;
    let legend_rows = shown.len().div_ceil(6) as f64;
    let width = LEFT + chart_width + 20.0;
    let height = legend_top + legend_rows * 18.0 + 10.0;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif" font-size="10">"#
    );
    s.push_str(concat!(
        r##"<defs><pattern id="changeover" width="6" height="6" patternUnits="userSpaceOnUse" patternTransform="rotate(45)">"##,
        r##"<rect width="6" height="6" fill="#ffffff"/><line x1="0" y1="0" x2="0" y2="6" stroke="#555555" stroke-width="2"/></pattern></defs>"##,
        "\n"
    ));

    // Day axis.
    let _ = writeln!(
        s,
        r##"<g class="axis"><line x1="{LEFT}" y1="{TOP}" x2="{:.1}" y2="{TOP}" stroke="#000000"/>"##,
        LEFT + chart_width
    );
    for d in 1..=days {
        let x = LEFT + f64::from(d - 1) * day_width;
        let _ = writeln!(
            s,
            r##"<line x1="{x:.1}" y1="{TOP}" x2="{x:.1}" y2="{:.1}" stroke="#dddddd"/><text x="{:.1}" y="{:.1}" text-anchor="middle">{d}</text>"##,
            TOP + chart_height,
            x + day_width / 2.0,
            TOP - 6.0
        );
    }
    s.push_str("</g>\n");

    for (row, m) in machines.iter().enumerate() {
        let y = TOP + row as f64 * (ROW_HEIGHT + ROW_GAP) + ROW_GAP / 2.0;
        let _ = writeln!(
            s,
            r#"<text class="machine" x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            LEFT - 6.0,
            y + ROW_HEIGHT * 0.7,
            escape(m.id.as_str())
        );
        for d in 1..=days {
            let mut x = LEFT + f64::from(d - 1) * day_width;
            let lost = schedule.lost_hours(&m.id, d);
            if lost > 0.0 {
                let w = lost * PX_PER_HOUR;
                let _ = writeln!(
                    s,
                    r##"<rect class="changeover" data-machine="{}" data-day="{d}" x="{x:.2}" y="{y:.1}" width="{w:.2}" height="{ROW_HEIGHT}" fill="url(#changeover)" stroke="#555555" stroke-width="0.5"/>"##,
                    escape(m.id.as_str())
                );
                x += w;
            }
            let Some(products) = busy.get(&(&m.id, d)) else {
                continue;
            };
            // Mold order first, then anything else by id.
            let order: Vec<&ProductId> = {
                let molds = schedule.mold_state.get(&(m.id.clone(), d));
                let mut ps: Vec<&ProductId> = products.keys().copied().collect();
                ps.sort_by_key(|p| {
                    let mold = scenario.product(p).map(|p| p.mold.clone()).ok();
                    let pos =
                        molds.and_then(|ks| mold.and_then(|k| ks.iter().position(|x| *x == k)));
                    (pos.unwrap_or(usize::MAX), (*p).clone())
                });
                ps
            };
            for p in order {
                let w = products[p] * PX_PER_HOUR;
                let _ = writeln!(
                    s,
                    r##"<rect class="block" data-machine="{}" data-day="{d}" data-product="{}" x="{x:.2}" y="{y:.1}" width="{w:.2}" height="{ROW_HEIGHT}" fill="{}"><title>{} day {d}: {} {:.2}h</title></rect>"##,
                    escape(m.id.as_str()),
                    escape(p.as_str()),
                    product_color(p),
                    escape(m.id.as_str()),
                    escape(p.as_str()),
                    products[p]
                );
                x += w;
            }
        }
    }

    s.push_str("<g class=\"legend\">\n");
    for (i, p) in shown.iter().enumerate() {
        let x = LEFT + (i % 6) as f64 * 90.0;
        let y = legend_top + (i / 6) as f64 * 18.0;
        let _ = writeln!(
            s,
            r#"<rect x="{x:.1}" y="{y:.1}" width="12" height="12" fill="{}"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            product_color(p),
            x + 16.0,
            y + 10.0,
            escape(p.as_str())
        );
    }
    s.push_str("</g>\n</svg>\n");
    s
}
