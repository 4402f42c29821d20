import init, { fading_distribution, theory_vs_distance, learning_curve } from "./pkg/uvlc_wasm_demo.js";

const $ = (id) => document.getElementById(id);

function plot(canvas, series, opts = {}) {
  const ctx = canvas.getContext("2d");
  const w = canvas.width, h = canvas.height, pad = 50;
  ctx.clearRect(0, 0, w, h);
  const pts = series.flatMap((s) => s.points);
  if (!pts.length) return;
  let [x0, x1] = [Math.min(...pts.map((p) => p[0])), Math.max(...pts.map((p) => p[0]))];
  let [y0, y1] = [Math.min(...pts.map((p) => p[1])), Math.max(...pts.map((p) => p[1]))];
  if (opts.yMin !== undefined) y0 = Math.max(y0, opts.yMin);
  if (y1 === y0) y1 = y0 + 1;
  if (x1 === x0) x1 = x0 + 1;
  const sx = (x) => pad + ((x - x0) / (x1 - x0)) * (w - 2 * pad);
  const sy = (y) => h - pad + ((Math.max(y, y0) - y0) / (y1 - y0)) * (2 * pad - h);
  ctx.strokeStyle = "#888";
  ctx.strokeRect(pad, pad, w - 2 * pad, h - 2 * pad);
  ctx.fillStyle = "#444";
  ctx.font = "12px sans-serif";
  for (let i = 0; i <= 4; i++) {
    const y = y0 + ((y1 - y0) * i) / 4, x = x0 + ((x1 - x0) * i) / 4;
    ctx.fillText(y.toPrecision(3), 4, sy(y) + 4);
    ctx.fillText(x.toPrecision(3), sx(x) - 12, h - pad + 16);
  }
  if (opts.xLabel) ctx.fillText(opts.xLabel, w / 2, h - 8);
  if (opts.yLabel) ctx.fillText(opts.yLabel, 4, pad - 10);
  series.forEach((s, i) => {
    ctx.strokeStyle = ctx.fillStyle = s.color;
    if (s.bars) {
      const bw = s.points.length > 1 ? sx(s.points[1][0]) - sx(s.points[0][0]) : 4;
      for (const [x, y] of s.points) ctx.fillRect(sx(x) - bw / 2, sy(y), bw - 1, sy(y0) - sy(y));
    } else {
      ctx.beginPath();
      ctx.setLineDash(s.dash ? [6, 4] : []);
      s.points.forEach(([x, y], j) => (j ? ctx.lineTo(sx(x), sy(y)) : ctx.moveTo(sx(x), sy(y))));
      ctx.stroke();
      ctx.setLineDash([]);
    }
    ctx.fillText(s.label, w - pad - 160, pad + 16 + 16 * i);
  });
}

function guard(fn) {
  return () => {
    $("err").textContent = "";
    try {
      fn();
    } catch (e) {
      $("err").textContent = String(e.message || e);
    }
  };
}

function drawDistribution() {
  const d = JSON.parse(fading_distribution(+$("fd-sigma").value, $("fd-literal").checked, +$("fd-samples").value, 60, 1n));
  $("fd-info").textContent = `mean ${d.mean.toFixed(5)}, variance ${d.variance.toExponential(3)}, mode ${d.mode.toFixed(5)}`;
  plot($("fd-canvas"), [
    { points: d.histogram, color: "#9bc", bars: true, label: "histogram" },
    { points: d.pdf, color: "#c30", label: "density" },
  ], { xLabel: "intensity" });
}

function drawTheory() {
  const pts = JSON.parse(theory_vs_distance(+$("th-mu").value, $("th-literal").checked));
  plot($("th-canvas"), [{ points: pts.map((p) => [p.distance_m, p.msd_db]), color: "#036", label: "theory (dB)" }],
    { xLabel: "distance (m)", yLabel: "MSD (dB)" });
}

function drawCurve() {
  const c = JSON.parse(learning_curve($("lc-strategy").value, +$("lc-dist").value, +$("lc-iters").value, +$("lc-runs").value, 7n));
  const series = [{ points: c.msd_db.map((v, i) => [i + 1, v]), color: "#036", label: `${c.strategy} simulation` }];
  if (c.theory_db !== null) {
    series.push({ points: [[1, c.theory_db], [c.msd_db.length, c.theory_db]], color: "#c30", dash: true, label: "theory" });
  }
  plot($("lc-canvas"), series, { xLabel: "iteration", yLabel: "MSD (dB)", yMin: -80 });
}

await init();
$("fd-run").onclick = guard(drawDistribution);
$("th-run").onclick = guard(drawTheory);
$("lc-run").onclick = guard(drawCurve);
guard(drawDistribution)();
