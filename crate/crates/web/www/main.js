import init, { posterior_curve, exp3_trajectory, budget_split_sweep } from "./pkg/ahc_web.js";

const num = (id) => Number(document.getElementById(id).value);

function plot(canvas, series, { xmin, xmax, ymin, ymax, hlines = [] }) {
  const ctx = canvas.getContext("2d");
  const w = canvas.width, h = canvas.height, pad = 36;
  const sx = (x) => pad + ((x - xmin) / (xmax - xmin || 1)) * (w - 2 * pad);
  const sy = (y) => h - pad - ((y - ymin) / (ymax - ymin || 1)) * (h - 2 * pad);
  ctx.clearRect(0, 0, w, h);
  ctx.strokeStyle = "#999";
  ctx.strokeRect(pad, pad, w - 2 * pad, h - 2 * pad);
  ctx.fillStyle = "#555";
  ctx.font = "11px sans-serif";
  ctx.fillText(xmin.toFixed(2), pad, h - pad + 14);
  ctx.fillText(xmax.toFixed(2), w - pad - 24, h - pad + 14);
  ctx.fillText(ymin.toFixed(2), 2, h - pad);
  ctx.fillText(ymax.toFixed(2), 2, pad + 4);
  ctx.setLineDash([4, 4]);
  for (const y of hlines) {
    ctx.beginPath();
    ctx.moveTo(pad, sy(y));
    ctx.lineTo(w - pad, sy(y));
    ctx.stroke();
  }
  ctx.setLineDash([]);
  for (const s of series) {
    ctx.strokeStyle = s.color;
    ctx.fillStyle = s.color;
    ctx.beginPath();
    s.points.forEach(([x, y], i) => (i ? ctx.lineTo(sx(x), sy(y)) : ctx.moveTo(sx(x), sy(y))));
    if (s.line !== false) ctx.stroke();
    for (const [x, y] of s.points) ctx.fillRect(sx(x) - 2, sy(y) - 2, 4, 4);
    if (s.label) ctx.fillText(s.label, sx(s.points[0][0]) + 6, sy(s.points[0][1]) - 6);
  }
}

function drawPosterior() {
  const curve = JSON.parse(posterior_curve(num("pp-prior"), num("pp-acc"), num("pp-votes")));
  const pts = curve.points;
  plot(document.getElementById("pp-canvas"), [
    { color: "#1a7f37", label: "yes votes", points: pts.map((p) => [p.votes, p.after_yes]) },
    { color: "#cf222e", label: "no votes", points: pts.map((p) => [p.votes, p.after_no]) },
  ], { xmin: 0, xmax: pts.length - 1, ymin: 0, ymax: 1, hlines: [curve.tau_in, curve.tau_out] });
}

function drawExp3() {
  const steps = JSON.parse(exp3_trajectory(num("ex-gamma"), num("ex-rl"), num("ex-re"), num("ex-steps")));
  plot(document.getElementById("ex-canvas"), [
    { color: "#0969da", label: "P(learn)", points: steps.map((s) => [s.step, s.p_learn]) },
  ], { xmin: 0, xmax: steps.length - 1, ymin: 0, ymax: 1, hlines: [0.5] });
}

function drawSweep() {
  const out = JSON.parse(budget_split_sweep(num("sw-pool"), num("sw-budget"), num("sw-acc"), BigInt(num("sw-seed"))));
  const table = document.getElementById("sw-table");
  if (out.error) {
    table.textContent = out.error;
    return;
  }
  const crowd = out.filter((p) => p.learn_fraction === null);
  const hybrid = out.filter((p) => p.learn_fraction !== null);
  const costs = out.map((p) => p.cost), f3s = out.map((p) => p.f3);
  plot(document.getElementById("sw-canvas"), [
    { color: "#8250df", label: "fixed split", points: hybrid.map((p) => [p.cost, p.f3]) },
    { color: "#cf222e", label: "crowd only", line: false, points: crowd.map((p) => [p.cost, p.f3]) },
  ], { xmin: Math.min(...costs) * 0.95, xmax: Math.max(...costs) * 1.05, ymin: Math.min(...f3s) - 0.02, ymax: 1 });
  table.textContent = ["policy        share  cost   F3"]
    .concat(out.map((p) => `${p.policy.padEnd(13)} ${p.learn_fraction === null ? "  -  " : p.learn_fraction.toFixed(1).padStart(5)}  ${p.cost.toFixed(3)}  ${p.f3.toFixed(3)}`))
    .join("\n");
}

await init();
document.getElementById("pp-go").onclick = drawPosterior;
document.getElementById("ex-go").onclick = drawExp3;
document.getElementById("sw-go").onclick = drawSweep;
drawPosterior();
drawExp3();
