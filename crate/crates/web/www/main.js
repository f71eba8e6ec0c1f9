import init, { discriminator_curve, losses, mcd_demo } from "./pkg/fedpoison_web.js";

const $ = (id) => document.getElementById(id);

function fail(el, e) {
  el.textContent = String(e);
  el.className = "err";
}

function axes(ctx, w, h) {
  ctx.clearRect(0, 0, w, h);
  ctx.strokeStyle = "#999";
  ctx.strokeRect(40, 10, w - 50, h - 40);
}

function line(ctx, xs, ys, sx, sy, color) {
  ctx.strokeStyle = color;
  ctx.beginPath();
  let started = false;
  xs.forEach((x, i) => {
    if (ys[i] === null) { started = false; return; }
    const px = sx(x), py = sy(ys[i]);
    if (started) ctx.lineTo(px, py); else ctx.moveTo(px, py);
    started = true;
  });
  ctx.stroke();
}

function drawCurve() {
  const kappa = Number($("kappa").value), shift = Number($("shift").value);
  $("kappa-v").textContent = kappa.toFixed(2);
  $("shift-v").textContent = shift.toFixed(2);
  const c = JSON.parse(discriminator_curve(kappa, shift, 300));
  const cv = $("curve"), ctx = cv.getContext("2d"), w = cv.width, h = cv.height;
  axes(ctx, w, h);
  const x0 = c.x[0], x1 = c.x[c.x.length - 1];
  const sx = (x) => 40 + (w - 50) * (x - x0) / (x1 - x0);
  const sy = (y) => h - 30 - (h - 40) * y;
  const peak = Math.max(...c.p_data);
  line(ctx, c.x, c.p_data.map((p) => p / peak), sx, sy, "#2a6");
  line(ctx, c.x, c.p_gen.map((p) => p / peak), sx, sy, "#c62");
  line(ctx, c.x, c.d_star, sx, sy, "#236");
  ctx.setLineDash([4, 4]);
  line(ctx, [x0, x1], [c.d_cap, c.d_cap], sx, sy, "#236");
  ctx.setLineDash([]);
  $("curve-info").textContent =
    `green: data density, orange: generator density (scaled), blue: D*(x); ` +
    `D* never exceeds ${c.d_cap.toFixed(3)}; equilibrium p_g/p_d = ${c.equilibrium_ratio.toFixed(3)}`;
}

function computeLosses() {
  const out = $("l-out");
  out.className = "";
  try {
    const r = JSON.parse(losses(Number($("l-kappa").value), $("l-real").value, $("l-fake").value));
    out.textContent = `discriminator loss ${r.disc.toFixed(6)}\ngenerator loss     ${r.gen.toFixed(6)}`;
  } catch (e) { fail(out, e); }
}

function runMcd() {
  const out = $("m-out");
  out.className = "";
  const spec = {
    clients: Number($("m-clients").value),
    malicious: Number($("m-bad").value),
    rounds: Number($("m-rounds").value),
  };
  let r;
  try {
    r = JSON.parse(mcd_demo(JSON.stringify(spec), BigInt($("m-seed").value), Number($("m-delta").value)));
  } catch (e) { fail(out, e); return; }
  const cv = $("scatter"), ctx = cv.getContext("2d"), w = cv.width, h = cv.height;
  axes(ctx, w, h);
  const s = r.report.scores;
  const fx = s.map((c) => c.footprint), hx = s.map((c) => c.h);
  const fmax = Math.max(...fx) * 1.05, hmax = Math.max(...hx, r.report.threshold) * 1.05;
  const sx = (v) => 40 + (w - 50) * v / fmax, sy = (v) => h - 30 - (h - 40) * v / hmax;
  ctx.setLineDash([4, 4]);
  line(ctx, [0, fmax], [r.report.threshold, r.report.threshold], sx, sy, "#b00");
  ctx.setLineDash([]);
  for (const c of s) {
    ctx.fillStyle = r.malicious.includes(c.client) ? "#c62" : "#2a6";
    ctx.beginPath();
    ctx.arc(sx(c.footprint), sy(c.h), r.report.flagged.includes(c.client) ? 7 : 4, 0, 2 * Math.PI);
    ctx.fill();
  }
  out.textContent =
    `x: footprint, y: abnormality h, dashed: threshold ${r.report.threshold.toFixed(3)}\n` +
    `orange: malicious, large: flagged\n` +
    `malicious ${JSON.stringify(r.malicious)}  flagged ${JSON.stringify(r.report.flagged)}\n` +
    `recall ${r.recall.toFixed(2)}  false positives ${r.false_positives}`;
}

await init();
$("kappa").addEventListener("input", drawCurve);
$("shift").addEventListener("input", drawCurve);
$("l-go").addEventListener("click", computeLosses);
$("m-go").addEventListener("click", runMcd);
drawCurve();
computeLosses();
runMcd();
