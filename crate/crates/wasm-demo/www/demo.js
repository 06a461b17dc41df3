import init, { simulate_trajectory, smooth_trajectory, asymptotic_curve } from "../pkg/mdlm_wasm_demo.js";

const ids = ["rho", "phi", "base", "q", "vr", "snu", "s0", "seps", "t", "seed"];
const el = Object.fromEntries(ids.map(id => [id, document.getElementById(id)]));
const outs = {
  rho: "rho-out", phi: "phi-out", base: "base-out", q: "q-out", vr: "vr-out",
  snu: "snu-out", s0: "s0-out", seps: "seps-out", t: "t-out", seed: "seed-out",
};
const errorBox = document.getElementById("error");

function params() {
  return {
    seed: parseInt(el.seed.value, 10),
    horizon: parseInt(el.t.value, 10),
    q: parseFloat(el.q.value),
    vr: parseFloat(el.vr.value),
    base: parseFloat(el.base.value),
    rho: parseFloat(el.rho.value),
    phi: parseFloat(el.phi.value),
    snu: parseFloat(el.snu.value),
    s0: parseFloat(el.s0.value),
    seps: parseFloat(el.seps.value),
  };
}

function scaler(xs, lo, hi, outLo, outHi) {
  const span = hi - lo || 1;
  return x => outLo + (x - lo) / span * (outHi - outLo);
}

function clearCanvas(canvas) {
  const ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  return ctx;
}

function axes(ctx, sx, sy, xmin, xmax, ymin, ymax) {
  ctx.strokeStyle = "#e3e9ee";
  ctx.fillStyle = "#73828f";
  ctx.font = "11px sans-serif";
  ctx.lineWidth = 1;
  const yTicks = 5;
  for (let i = 0; i <= yTicks; i++) {
    const v = ymin + (ymax - ymin) * i / yTicks;
    const y = sy(v);
    ctx.beginPath(); ctx.moveTo(sx(xmin), y); ctx.lineTo(sx(xmax), y); ctx.stroke();
    ctx.fillText(v.toFixed(0), 4, y - 2);
  }
  for (let d = 0; d <= xmax; d += Math.max(10, Math.round(xmax / 8 / 10) * 10)) {
    if (d < xmin) continue;
    ctx.fillText(String(d), sx(d) - 6, ctx.canvas.height - 4);
  }
}

function polyline(ctx, days, values, sx, sy, color, width = 1.7, dash = []) {
  ctx.strokeStyle = color;
  ctx.lineWidth = width;
  ctx.setLineDash(dash);
  ctx.beginPath();
  days.forEach((d, i) => {
    const x = sx(d), y = sy(values[i]);
    if (i === 0) ctx.moveTo(x, y); else ctx.lineTo(x, y);
  });
  ctx.stroke();
  ctx.setLineDash([]);
}

function dots(ctx, days, values, sx, sy, color) {
  ctx.fillStyle = color;
  days.forEach((d, i) => {
    ctx.beginPath();
    ctx.arc(sx(d), sy(values[i]), 3.4, 0, Math.PI * 2);
    ctx.fill();
  });
}

function adherenceStrip(ctx, days, adherence, sx, height) {
  days.forEach((d, i) => {
    ctx.fillStyle = adherence[i] > 0 ? "#9ae6b4" : "#feb2b2";
    ctx.fillRect(sx(d) - 1.4, height - 12, 2.8, 8);
  });
}

function bounds(arrays, pad = 0.08) {
  let lo = Infinity, hi = -Infinity;
  for (const a of arrays) for (const v of a) { if (v < lo) lo = v; if (v > hi) hi = v; }
  const span = (hi - lo) || 1;
  return [lo - pad * span, hi + pad * span];
}

function drawSim(p) {
  const data = JSON.parse(simulate_trajectory(
    p.seed, p.horizon, p.q, p.vr, p.base, p.rho, p.phi, p.snu, p.s0, p.seps));
  const canvas = document.getElementById("sim");
  const ctx = clearCanvas(canvas);
  const [ymin, ymax] = bounds([data.mean, data.observed_values]);
  const sx = scaler(1, p.horizon, 34, canvas.width - 8);
  const sy = scaler(ymin, ymax, canvas.height - 20, 10);
  axes(ctx, sx, sy, 1, p.horizon, ymin, ymax);
  polyline(ctx, data.days, data.mean, sx, sy, "#2b6cb0");
  dots(ctx, data.observed_days, data.observed_values, sx, sy, "#c05621");
  adherenceStrip(ctx, data.days, data.adherence, sx, canvas.height);
}

function drawSmooth(p) {
  const data = JSON.parse(smooth_trajectory(
    p.seed, p.horizon, p.q, p.vr, p.base, p.rho, p.phi, p.snu, p.s0, p.seps));
  const canvas = document.getElementById("smooth");
  const ctx = clearCanvas(canvas);
  const [ymin, ymax] = bounds([data.lower, data.upper, data.true_mean, data.observed_values]);
  const sx = scaler(1, p.horizon, 34, canvas.width - 8);
  const sy = scaler(ymin, ymax, canvas.height - 20, 10);
  axes(ctx, sx, sy, 1, p.horizon, ymin, ymax);
  // band
  ctx.fillStyle = "rgba(154, 230, 180, 0.55)";
  ctx.beginPath();
  data.days.forEach((d, i) => {
    const x = sx(d), y = sy(data.upper[i]);
    if (i === 0) ctx.moveTo(x, y); else ctx.lineTo(x, y);
  });
  for (let i = data.days.length - 1; i >= 0; i--) {
    ctx.lineTo(sx(data.days[i]), sy(data.lower[i]));
  }
  ctx.closePath();
  ctx.fill();
  polyline(ctx, data.days, data.true_mean, sx, sy, "#a0aec0", 1.2);
  polyline(ctx, data.days, data.post_mean, sx, sy, "#2f855a", 2);
  dots(ctx, data.observed_days, data.observed_values, sx, sy, "#c05621");
  adherenceStrip(ctx, data.days, data.adherence, sx, canvas.height);
}

function drawAsym(p) {
  const data = JSON.parse(asymptotic_curve(p.horizon, p.base, p.rho, p.phi));
  const canvas = document.getElementById("asym");
  const ctx = clearCanvas(canvas);
  const [ymin, ymax] = bounds([
    data.adherent_mean, data.nonadherent_mean,
    [data.adherent_limit, data.nonadherent_limit],
  ]);
  const sx = scaler(1, p.horizon, 34, canvas.width - 8);
  const sy = scaler(ymin, ymax, canvas.height - 20, 10);
  axes(ctx, sx, sy, 1, p.horizon, ymin, ymax);
  polyline(ctx, data.days, data.adherent_mean, sx, sy, "#2f855a", 2);
  polyline(ctx, data.days, data.nonadherent_mean, sx, sy, "#c53030", 2);
  polyline(ctx, [1, p.horizon], [data.adherent_limit, data.adherent_limit], sx, sy, "#2f855a", 1, [6, 4]);
  polyline(ctx, [1, p.horizon], [data.nonadherent_limit, data.nonadherent_limit], sx, sy, "#c53030", 1, [6, 4]);
}

function redraw() {
  const p = params();
  for (const [id, outId] of Object.entries(outs)) {
    document.getElementById(outId).textContent = el[id].value;
  }
  errorBox.textContent = "";
  try {
    drawSim(p);
    drawSmooth(p);
    drawAsym(p);
  } catch (e) {
    errorBox.textContent = String(e);
  }
}

async function main() {
  await init();
  for (const id of ids) el[id].addEventListener("input", redraw);
  document.getElementById("reseed").addEventListener("click", () => {
    el.seed.value = String(Math.floor(Math.random() * 100));
    redraw();
  });
  redraw();
}

main();
